//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use gtspectra::model::{init_weights, SanConfig, SanWeights};
use gtspectra::{Atom, Mode, MolecularGraph};
use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const ELEMENTS: [&str; 6] = ["C", "C", "C", "N", "O", "S"];

/// Random tree on `n` nodes plus a few extra edges.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize) -> MolecularGraph {
    let atoms = (0..n)
        .map(|_| Atom::new(*ELEMENTS.choose(rng).unwrap(), rng.random_range(0..3)))
        .collect();
    let mut edges: Vec<(usize, usize, u8)> = (1..n).map(|i| (rng.random_range(0..i), i, 1)).collect();
    for _ in 0..rng.random_range(0..=n / 3) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y, _)| (x.min(y), x.max(y)) == (a, b)) {
            edges.push((a, b, rng.random_range(1..=2)));
        }
    }
    MolecularGraph::new(atoms, edges).unwrap()
}

/// Random graph that may have several components (and isolated atoms).
pub fn random_graph(rng: &mut impl Rng, n: usize) -> MolecularGraph {
    let atoms = (0..n).map(|_| Atom::new("C", 0)).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.2) {
                edges.push((a, b, 1));
            }
        }
    }
    MolecularGraph::new(atoms, edges).unwrap()
}

pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn random_config(rng: &mut impl Rng, class_token: bool) -> SanConfig {
    let heads = [1usize, 2, 4][rng.random_range(0..3)];
    SanConfig {
        layers: rng.random_range(1..=4),
        dim: 4 * heads * rng.random_range(1..=2),
        heads,
        max_dist: rng.random_range(1..=8),
        include_class_token: class_token,
        mode: if rng.random_bool(0.5) { Mode::Full } else { Mode::Proxy },
        seed: rng.random(),
    }
}

pub fn model(cfg: &SanConfig) -> SanWeights {
    init_weights(cfg).unwrap()
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    let m = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
    (&m + &m.t()) * 0.5
}

pub fn random_row_stochastic(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0f64));
    for mut row in m.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    m
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `P M Pᵀ` where node `i` moves to `perm[i]`.
pub fn conjugate(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let n = perm.len();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[perm[i], perm[j]]] = m[[i, j]];
        }
    }
    out
}

/// Rows moved so that row `i` lands at `perm[i]`.
pub fn permute_rows(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(m.dim());
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).assign(&m.row(i));
    }
    out
}
