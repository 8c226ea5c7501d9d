//! kth-neighbour sensitivity of last-layer atom representations.
//!
//! For every pair of atoms `(i, j)` the Jacobian block `∂X_L[i,:] / ∂X_0[j,:]`
//! is estimated by central finite differences on the input embeddings, and its
//! Frobenius norm recorded. `S_k` averages these norms over the atoms `j` at
//! topological distance `k` from `i`, then over atoms `i`. Atoms with no
//! neighbour at distance `k` are left out of the outer mean; if no atom has
//! one, `S_k = 0`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bfs_distances, MolecularGraph};
use crate::model::{attention_codes, encode, forward_output, SanConfig, SanWeights};

pub const DEFAULT_MAX_HOP: usize = 5;
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    /// `raw[k]` for `k = 0..=K`.
    pub raw: Vec<f64>,
    /// `(raw - min) / max(raw - min)`; all zeros when `raw` is constant.
    pub standardized: Vec<f64>,
}

/// Frobenius norms of the atom-to-atom Jacobian blocks, `N x N`, indexed
/// `[output atom, input atom]`. Uses `2 d N` forward evaluations.
pub fn jacobian_block_norms(g: &MolecularGraph, w: &SanWeights, cfg: &SanConfig, step: f64) -> Result<Array2<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let x0 = encode(g, w, cfg)?;
    let codes = attention_codes(g, cfg);
    let offset = usize::from(cfg.include_class_token);
    let atoms = g.node_count();
    let d = cfg.dim;

    // One column of the Jacobian per (source atom, input feature).
    let columns: Vec<Vec<f64>> = (0..atoms * d)
        .into_par_iter()
        .map(|idx| {
            let (j, mu) = (idx / d, idx % d);
            let mut plus = x0.clone();
            plus[[j + offset, mu]] += step;
            let mut minus = x0.clone();
            minus[[j + offset, mu]] -= step;
            let up = forward_output(plus, &codes, w, cfg)?;
            let down = forward_output(minus, &codes, w, cfg)?;
            let sq: Vec<f64> = (0..atoms)
                .map(|i| {
                    (0..d)
                        .map(|nu| {
                            let deriv = (up[[i + offset, nu]] - down[[i + offset, nu]]) / (2.0 * step);
                            deriv * deriv
                        })
                        .sum()
                })
                .collect();
            if sq.iter().any(|v: &f64| !v.is_finite()) {
                return Err(Error::NonFinite("finite-difference derivative".into()));
            }
            Ok(sq)
        })
        .collect::<Result<_>>()?;

    let mut norms = Array2::<f64>::zeros((atoms, atoms));
    for (idx, sq) in columns.iter().enumerate() {
        let j = idx / d;
        for (i, v) in sq.iter().enumerate() {
            norms[[i, j]] += v;
        }
    }
    norms.mapv_inplace(f64::sqrt);
    Ok(norms)
}

/// Aggregate block norms into `S_0..=S_K` using BFS distances.
pub fn profile_from_blocks(g: &MolecularGraph, blocks: &Array2<f64>, max_hop: usize) -> SensitivityProfile {
    let dist = bfs_distances(g);
    let atoms = g.node_count();
    let raw: Vec<f64> = (0..=max_hop)
        .map(|k| {
            let per_atom: Vec<f64> = (0..atoms)
                .filter_map(|i| {
                    let hits: Vec<f64> = (0..atoms)
                        .filter(|&j| dist[[i, j]] == k as i32)
                        .map(|j| blocks[[i, j]])
                        .collect();
                    (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64)
                })
                .collect();
            if per_atom.is_empty() {
                0.0
            } else {
                per_atom.iter().sum::<f64>() / per_atom.len() as f64
            }
        })
        .collect();
    let standardized = standardize(&raw);
    SensitivityProfile { raw, standardized }
}

pub fn standardize(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = raw.iter().map(|v| v - min).collect();
    let max = shifted.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        shifted.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

pub fn sensitivity(g: &MolecularGraph, w: &SanWeights, cfg: &SanConfig, max_hop: usize, step: f64) -> Result<SensitivityProfile> {
    let blocks = jacobian_block_norms(g, w, cfg, step)?;
    Ok(profile_from_blocks(g, &blocks, max_hop))
}
