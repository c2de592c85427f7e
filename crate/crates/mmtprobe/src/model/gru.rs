//! GRU cell on the gradient tape.

use super::BoundParams;
use crate::error::Result;
use crate::tensor::{Tape, Var};

/// Fused gate weights of one GRU: `w` [in×3h], `u` [h×3h], `b` [1×3h],
/// gate blocks ordered update | reset | candidate.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

impl GruVars {
    pub fn named(bound: &BoundParams, prefix: &str) -> GruVars {
        GruVars {
            w: bound.var(&format!("{prefix}.w")),
            u: bound.var(&format!("{prefix}.u")),
            b: bound.var(&format!("{prefix}.b")),
        }
    }
}

/// One step: x [B×in], h [B×hidden] → new hidden [B×hidden].
///
/// z = σ(…), r = σ(…), n = tanh(x·Wₙ + r∘(h·Uₙ)), h' = h + z∘(n − h).
pub fn gru_step(tape: &mut Tape, gru: &GruVars, x: Var, h: Var, hidden: usize) -> Result<Var> {
    let pre_x = tape.matmul(x, gru.w)?;
    let pre_x = tape.add(pre_x, gru.b)?;
    let pre_h = tape.matmul(h, gru.u)?;

    let xz = tape.narrow(pre_x, 1, 0, hidden)?;
    let xr = tape.narrow(pre_x, 1, hidden, hidden)?;
    let xn = tape.narrow(pre_x, 1, 2 * hidden, hidden)?;
    let hz = tape.narrow(pre_h, 1, 0, hidden)?;
    let hr = tape.narrow(pre_h, 1, hidden, hidden)?;
    let hn = tape.narrow(pre_h, 1, 2 * hidden, hidden)?;

    let z_in = tape.add(xz, hz)?;
    let z = tape.sigmoid(z_in)?;
    let r_in = tape.add(xr, hr)?;
    let r = tape.sigmoid(r_in)?;
    let gated = tape.mul(r, hn)?;
    let n_in = tape.add(xn, gated)?;
    let n = tape.tanh(n_in)?;

    let delta = tape.sub(n, h)?;
    let step = tape.mul(z, delta)?;
    tape.add(h, step)
}
