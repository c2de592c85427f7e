//! The gradient tape in isolation: record a few ops, run backward, and
//! verify the analytic gradients against central finite differences.

use mmtprobe::tensor::{finite_difference_check, Tape, Tensor};

fn main() -> mmtprobe::Result<()> {
    // forward: softmax(tanh(x·W)) reduced to a scalar
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(vec![0.5, -1.0, 2.0]), true);
    let w = tape.leaf(
        Tensor::matrix(3, 4, vec![0.1, 0.2, -0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, 0.1, -0.2, 0.3])?,
        true,
    );
    let h = tape.matmul(x, w)?;
    let t = tape.tanh(h)?;
    let s = tape.softmax(t, 1)?;
    let picker = tape.constant(Tensor::column(vec![1.0, 0.0, 0.0, 0.0]));
    let loss = tape.matmul(s, picker)?;
    tape.backward(loss)?;

    println!("loss = {:.6}", tape.value(loss).scalar_value());
    println!("∂loss/∂x = {:?}", tape.grad(x).unwrap().data());

    // the same function checked coordinate by coordinate
    let err = finite_difference_check(
        |tape, v| {
            let w = tape.constant(Tensor::matrix(
                3,
                4,
                vec![0.1, 0.2, -0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, 0.1, -0.2, 0.3],
            )?);
            let h = tape.matmul(v, w)?;
            let t = tape.tanh(h)?;
            let s = tape.softmax(t, 1)?;
            let picker = tape.constant(Tensor::column(vec![1.0, 0.0, 0.0, 0.0]));
            tape.matmul(s, picker)
        },
        &Tensor::row(vec![0.5, -1.0, 2.0]),
        1e-5,
    )?;
    println!("max relative error vs finite differences: {err:.2e}");
    assert!(err < 1e-4);
    println!("gradients verified.");
    Ok(())
}
