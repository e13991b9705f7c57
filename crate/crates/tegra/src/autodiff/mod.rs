//! Differentiation engine.
//!
//! Forward mode is built on nestable dual numbers ([`Dual`]) and a batched
//! jet variant ([`Jet`]) that carries several tangent directions at once;
//! nesting a `Dual` inside either gives exact second-order mixed
//! derivatives. Reverse mode is a classic append-only tape ([`Tape`]) used
//! for gradients over many parameters. Everything downstream of this module
//! (rendering, tracking) is generic over the [`Real`] trait so the same
//! code path runs on plain `f64` and on any of the derivative carriers.

mod dual;
mod real;
mod tape;

pub use dual::{Dual, Jet};
pub use real::Real;
pub use tape::{Grads, Tape, Var};

use crate::{Error, Result};

/// Exact df/dx of a scalar function at `x` via a forward-mode dual with unit
/// tangent. Non-differentiable points (e.g. `abs` at 0) propagate NaN.
pub fn derivative<F>(f: F, x: f64) -> f64
where
    F: Fn(Dual<f64>) -> Dual<f64>,
{
    f(Dual::seeded(x, 1.0)).tangent
}

/// Exact gradient of a scalar function of an n-vector via a single reverse
/// sweep over a fresh tape.
pub fn gradient<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    gradient_with_limit(f, x, Tape::DEFAULT_NODE_LIMIT)
}

/// As [`gradient`], with an explicit cap on tape size. Exceeding the cap is
/// reported as a resource error rather than an abort.
pub fn gradient_with_limit<F>(f: F, x: &[f64], max_nodes: usize) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::with_node_limit(max_nodes);
    let vars: Vec<Var> = x.iter().map(|&v| tape.var(v)).collect();
    let out = f(&vars);
    if tape.overflowed() {
        return Err(Error::Resource(format!(
            "tape exceeded {max_nodes} nodes"
        )));
    }
    let grads = out.backward();
    Ok(vars.iter().map(|v| grads.wrt(*v)).collect())
}

/// d/dtheta_j of (df/du) at `(u, theta)` for every j, by forward-over-forward
/// nesting: the inner dual carries d/du, the outer dual one theta direction
/// per evaluation.
pub fn second_mixed<F>(f: F, u: f64, theta: &[f64]) -> Vec<f64>
where
    F: Fn(Dual<Dual<f64>>, &[Dual<Dual<f64>>]) -> Dual<Dual<f64>>,
{
    let u_seed = Dual::new(Dual::seeded(u, 1.0), Dual::constant(0.0));
    (0..theta.len())
        .map(|j| {
            let theta_seed: Vec<Dual<Dual<f64>>> = theta
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    Dual::new(
                        Dual::constant(t),
                        Dual::constant(if k == j { 1.0 } else { 0.0 }),
                    )
                })
                .collect();
            // outer tangent of the inner tangent = d/dtheta_j (df/du)
            f(u_seed, &theta_seed).tangent.tangent
        })
        .collect()
}
