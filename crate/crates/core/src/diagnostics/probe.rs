//! Elastic-net linear probe on frozen representations.
//!
//! Samples are split into equal train/test halves with a seeded shuffle (an
//! odd leftover sample is dropped). Features are standardized with train-half
//! statistics; the objective
//!
//! ```text
//! (1/2m) ‖y - Xw - b‖² + alpha (l1_ratio ‖w‖₁ + (1 - l1_ratio)/2 ‖w‖²)
//! ```
//!
//! is minimized by cyclic coordinate descent, and R² is reported on the test
//! half.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 10_000;
pub const COEF_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub r2: f64,
    /// Weights in the original (unstandardized) feature space.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub sweeps: usize,
}

/// On-disk probe summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub r2: f64,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl ProbeResult {
    pub fn record(&self) -> ProbeRecord {
        ProbeRecord {
            r2: self.r2,
            alpha: self.alpha,
            l1_ratio: self.l1_ratio,
            n_train: self.n_train,
            n_test: self.n_test,
            seed: self.seed,
        }
    }

    pub fn predict(&self, features: &Array2<f64>) -> Array1<f64> {
        features.dot(&Array1::from(self.coefficients.clone())) + self.intercept
    }
}

/// Seeded equal-size split of `0..samples` into (train, test).
pub fn split_indices(samples: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..samples).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = samples / 2;
    let mut train = idx[..half].to_vec();
    let mut test = idx[half..2 * half].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Coordinate descent on centered targets and standardized columns (a zero
/// column stays at weight 0). Returns the weights and the number of sweeps.
pub fn elastic_net(x: &Array2<f64>, y: &Array1<f64>, alpha: f64, l1_ratio: f64) -> Result<(Array1<f64>, usize)> {
    let (m, p) = x.dim();
    let mf = m as f64;
    let col_sq: Vec<f64> = x.columns().into_iter().map(|c| c.dot(&c) / mf).collect();
    let mut w = Array1::<f64>::zeros(p);
    let mut resid = y.clone();
    let l1 = alpha * l1_ratio;
    let l2 = alpha * (1.0 - l1_ratio);
    for sweep in 1..=MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let rho = col.dot(&resid) / mf + col_sq[j] * w[j];
            let updated = soft_threshold(rho, l1) / (col_sq[j] + l2);
            let delta = updated - w[j];
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                w[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < COEF_TOL {
            return Ok((w, sweep));
        }
    }
    Err(Error::NoConverge(format!("coordinate descent exceeded {MAX_SWEEPS} sweeps")))
}

pub fn linear_probe(features: &Array2<f64>, labels: &Array1<f64>, alpha: f64, l1_ratio: f64, seed: u64) -> Result<ProbeResult> {
    let m = features.nrows();
    if labels.len() != m {
        return Err(Error::Dim(format!("{m} feature rows but {} labels", labels.len())));
    }
    if m < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 samples, got {m}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) || !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} / l1_ratio {l1_ratio} out of range"
        )));
    }
    if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe inputs".into()));
    }
    let first = labels[0];
    if labels.iter().all(|&v| v == first) {
        return Err(Error::Degenerate("labels have fewer than 2 distinct values".into()));
    }

    let (train, test) = split_indices(m, seed);
    let x_train = features.select(Axis(0), &train);
    let y_train = labels.select(Axis(0), &train);
    let x_test = features.select(Axis(0), &test);
    let y_test = labels.select(Axis(0), &test);

    let mean = x_train.mean_axis(Axis(0)).unwrap();
    let std: Array1<f64> = x_train.std_axis(Axis(0), 0.0);
    let scale = std.mapv(|s| if s > 0.0 { 1.0 / s } else { 0.0 });
    let standardized = (&x_train - &mean.view().insert_axis(Axis(0))) * scale.view().insert_axis(Axis(0));
    let y_mean = y_train.mean().unwrap();
    let centered = &y_train - y_mean;

    let (w_std, sweeps) = elastic_net(&standardized, &centered, alpha, l1_ratio)?;
    let coefficients: Array1<f64> = &w_std * &scale;
    let intercept = y_mean - coefficients.dot(&mean);

    let pred = x_test.dot(&coefficients) + intercept;
    let test_mean = y_test.mean().unwrap();
    let ss_tot: f64 = y_test.iter().map(|v| (v - test_mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("test-half labels are constant".into()));
    }
    let ss_res: f64 = y_test.iter().zip(pred.iter()).map(|(y, f)| (y - f).powi(2)).sum();

    Ok(ProbeResult {
        r2: 1.0 - ss_res / ss_tot,
        coefficients: coefficients.to_vec(),
        intercept,
        alpha,
        l1_ratio,
        n_train: train.len(),
        n_test: test.len(),
        seed,
        sweeps,
    })
}
