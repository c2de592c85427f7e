//! Central-difference gradient verification.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compare the tape's analytic gradient of a scalar function against
/// central finite differences, coordinate by coordinate. Returns the
/// maximum over coordinates of |analytic − numeric| / max(1, |numeric|).
///
/// `f` must be deterministic (run dropout with `training = false`);
/// a stochastic `f` is rejected.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_difference_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h)
}

/// Multi-input variant of [`finite_difference_check`]; the maximum is
/// taken over every coordinate of every input.
pub fn finite_difference_check_many<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect();
        let out = f(&mut tape, &vars)?;
        if !tape.value(out).is_scalar() {
            return Err(Error::Contract(format!(
                "finite_difference_check needs a scalar-valued function, got shape {:?}",
                tape.value(out).shape()
            )));
        }
        Ok(tape.value(out).scalar_value())
    };

    // Reject stochastic functions: two evaluations must agree bit for bit.
    let base = eval(inputs)?;
    if eval(inputs)?.to_bits() != base.to_bits() {
        return Err(Error::contract(
            "finite_difference_check requires a deterministic function (disable dropout)",
        ));
    }

    // Analytic gradients.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let orig = input.data()[i];
            work[which].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[which].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[which].data()[i];
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
