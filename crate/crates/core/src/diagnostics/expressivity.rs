//! Layerwise latent expressivity.
//!
//! `rho(X) = ‖res(X)‖_{1,∞} / ‖X‖_{1,∞}` with `res(X) = X - 1 xᵀ`, `x` the
//! column mean of `X` (the Frobenius minimizer), and
//! `‖M‖_{1,∞} = sqrt(‖M‖_1 ‖M‖_∞)` built from the induced max-column-sum and
//! max-row-sum norms. `rho = 0` exactly when every token row is identical.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LayerTrace;

/// Max absolute column sum.
pub fn norm_1(m: &Array2<f64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Max absolute row sum.
pub fn norm_inf(m: &Array2<f64>) -> f64 {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_1_inf(m: &Array2<f64>) -> f64 {
    (norm_1(m) * norm_inf(m)).sqrt()
}

/// `X - 1 xᵀ` with `x` the column mean. The mean is accumulated as offsets
/// from the first row, so identical rows give an exactly zero residual.
pub fn residual(x: &Array2<f64>) -> Array2<f64> {
    let first: Array1<f64> = x.row(0).to_owned();
    let shifted = x - &first.view().insert_axis(Axis(0));
    let mean_shift = shifted.mean_axis(Axis(0)).expect("at least one row");
    &shifted - &mean_shift.view().insert_axis(Axis(0))
}

pub fn rho(x: &Array2<f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Degenerate("no token rows".into()));
    }
    let denom = norm_1_inf(x);
    if denom == 0.0 {
        return Err(Error::Degenerate("representation is exactly zero".into()));
    }
    let res = residual(x);
    if res.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    Ok(norm_1_inf(&res) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityTrace {
    /// `rho[l - 1]` is the value at layer `l`.
    pub rho: Vec<f64>,
}

/// `rho` for layers `1..=L`, over atom tokens unless `include_class_token`.
pub fn expressivity(trace: &LayerTrace, include_class_token: bool) -> Result<ExpressivityTrace> {
    let rho = (1..=trace.layers())
        .map(|l| {
            let x = if include_class_token {
                trace.states[l].clone()
            } else {
                trace.atom_states(l)
            };
            rho(&x)
        })
        .collect::<Result<_>>()?;
    Ok(ExpressivityTrace { rho })
}
