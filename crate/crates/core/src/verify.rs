//! Embedded invariant suite: seeded self-checks of the rollout identity,
//! rollout stochasticity, the trivial eigenmode, Laplacian closed forms and
//! the co-diagonalizable case. Every check reports its worst measured
//! residual against a tolerance.

use ndarray::{array, Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{laplacian, Atom, MolecularGraph};
use crate::linalg::eig_symmetric;
use crate::model::{forward, init_weights, LayerTrace, Mode, SanConfig};
use crate::spectral::{analyze, filtered_convolution, rollout, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub cases: usize,
}

impl CheckResult {
    fn new(name: &str, residual: f64, tolerance: f64, cases: usize) -> Self {
        CheckResult {
            name: name.to_string(),
            residual,
            tolerance,
            passed: residual <= tolerance,
            cases,
        }
    }
}

const SUITE_SEED: u64 = 0x5eed_0001;
const IDENTITY_CASES: usize = 100;
const TRACE_CASES: usize = 1000;

/// Random spanning tree plus a few extra bonds, atoms drawn from C/N/O.
pub fn random_connected_graph(rng: &mut impl Rng, atoms: usize) -> MolecularGraph {
    const ELEMENTS: [&str; 3] = ["C", "N", "O"];
    let nodes = (0..atoms)
        .map(|_| Atom::new(ELEMENTS[rng.random_range(0..3)], rng.random_range(0..3)))
        .collect();
    let mut order: Vec<usize> = (0..atoms).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (1..atoms).map(|k| (order[rng.random_range(0..k)], order[k])).collect();
    for _ in 0..rng.random_range(0..=atoms / 3) {
        let (a, b) = (rng.random_range(0..atoms), rng.random_range(0..atoms));
        if a != b && !edges.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a)) {
            edges.push((a, b));
        }
    }
    MolecularGraph::new(nodes, edges.into_iter().map(|(a, b)| (a, b, 1))).expect("generated graph is valid")
}

fn random_trace(rng: &mut ChaCha8Rng) -> Result<(MolecularGraph, LayerTrace)> {
    let atoms = rng.random_range(1..=12);
    let g = random_connected_graph(rng, atoms);
    let heads = [1usize, 2, 4][rng.random_range(0..3)];
    let cfg = SanConfig {
        layers: rng.random_range(1..=6),
        dim: 4 * heads,
        heads,
        max_dist: rng.random_range(1..=8),
        include_class_token: rng.random_bool(0.25),
        mode: if rng.random_bool(0.5) { Mode::Full } else { Mode::Proxy },
        seed: rng.random(),
    };
    let trace = forward(&g, &init_weights(&cfg)?, &cfg)?;
    Ok((g, trace))
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `max ‖X_L - 2^L Ã X_0‖_F / ‖X_L‖_F` over seeded single-head proxy models.
pub fn check_rollout_identity() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut worst = 0.0f64;
    for _ in 0..IDENTITY_CASES {
        let atoms = rng.random_range(1..=12);
        let g = random_connected_graph(&mut rng, atoms);
        let cfg = SanConfig {
            layers: rng.random_range(1..=6),
            dim: 8,
            heads: 1,
            max_dist: 8,
            include_class_token: false,
            mode: Mode::Proxy,
            seed: rng.random(),
        };
        let trace = forward(&g, &init_weights(&cfg)?, &cfg)?;
        let scale = 2f64.powi(cfg.layers as i32);
        let predicted = rollout(&trace).dot(trace.input()) * scale;
        let out = trace.output();
        worst = worst.max(frobenius(&(out - &predicted)) / frobenius(out));
    }
    Ok(worst)
}

/// Worst row-sum error, most negative entry, `|a_0 - 1|`, excess of
/// `max_{i>0} |a_i|` over 1, and `1 - C[0][0]` across seeded traces.
pub struct TraceChecks {
    pub row_sum: f64,
    pub negativity: f64,
    pub top_eigenvalue: f64,
    pub radius_excess: f64,
    pub trivial_overlap: f64,
}

pub fn check_traces() -> Result<TraceChecks> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 0xa5a5);
    let mut out = TraceChecks {
        row_sum: 0.0,
        negativity: 0.0,
        top_eigenvalue: 0.0,
        radius_excess: 0.0,
        trivial_overlap: 0.0,
    };
    for _ in 0..TRACE_CASES {
        let (g, trace) = random_trace(&mut rng)?;
        let r = rollout(&trace);
        for row in r.rows() {
            out.row_sum = out.row_sum.max((row.sum() - 1.0).abs());
        }
        out.negativity = out.negativity.max(-r.iter().copied().fold(0.0, f64::min));
        let a = analyze(&g, &trace, DEFAULT_THRESHOLD)?;
        let ev = &a.rollout.eigenvalues;
        out.top_eigenvalue = out.top_eigenvalue.max((ev[0] - 1.0).norm());
        for z in &ev[1..] {
            out.radius_excess = out.radius_excess.max(z.norm() - 1.0);
        }
        out.trivial_overlap = out.trivial_overlap.max(1.0 - a.report.overlap[[0, 0]]);
    }
    Ok(out)
}

/// Largest deviation of the P3 and triangle Laplacian spectra from their
/// closed forms `(0, 1, 3)` and `(0, 3, 3)`.
pub fn check_closed_forms() -> Result<f64> {
    let carbon = || vec![Atom::new("C", 0); 3];
    let path = MolecularGraph::new(carbon(), [(0, 1, 1), (1, 2, 1)])?;
    let triangle = MolecularGraph::new(carbon(), [(0, 1, 1), (1, 2, 1), (0, 2, 1)])?;
    let mut worst = 0.0f64;
    for (g, want) in [(path, [0.0, 1.0, 3.0]), (triangle, [0.0, 3.0, 3.0])] {
        let spectrum = eig_symmetric(&laplacian(&g))?;
        for (got, w) in spectrum.eigenvalues.iter().zip(want) {
            worst = worst.max((got - w).abs());
        }
    }
    Ok(worst)
}

/// One proxy layer with `A = I - L(P3)/2`. Returns `|eta - 1|`,
/// `|zeta - 2|` and the worst filtered-convolution residual over seeded
/// signals.
pub fn check_codiagonal() -> Result<(f64, f64, f64)> {
    let path = MolecularGraph::new(vec![Atom::new("C", 0); 3], [(0, 1, 1), (1, 2, 1)])?;
    let attention = Array2::eye(3) - laplacian(&path) * 0.5;
    let x0 = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let trace = LayerTrace::proxy_from_attention(x0, vec![attention], false)?;
    let a = analyze(&path, &trace, DEFAULT_THRESHOLD)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 0x3);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x = Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0));
        let (_, res) = filtered_convolution(&a.rollout, &a.laplacian, &a.report, &x)?;
        worst = worst.max(res);
    }
    Ok(((a.report.eta - 1.0).abs(), (a.report.zeta - 2.0).abs(), worst))
}

/// Run every check. `tolerance` replaces all default tolerances when given.
pub fn run_suite(tolerance: Option<f64>) -> Result<Vec<CheckResult>> {
    let tol = |default: f64| tolerance.unwrap_or(default);
    let traces = check_traces()?;
    let (eta, zeta, conv) = check_codiagonal()?;
    Ok(vec![
        CheckResult::new("rollout_identity", check_rollout_identity()?, tol(1e-10), IDENTITY_CASES),
        CheckResult::new("rollout_row_sums", traces.row_sum, tol(1e-9), TRACE_CASES),
        CheckResult::new("rollout_nonnegative", traces.negativity, tol(1e-12), TRACE_CASES),
        CheckResult::new("trivial_eigenvalue", traces.top_eigenvalue, tol(1e-8), TRACE_CASES),
        CheckResult::new("spectral_radius", traces.radius_excess.max(0.0), tol(1e-8), TRACE_CASES),
        CheckResult::new("trivial_overlap", traces.trivial_overlap.max(0.0), tol(1e-6), TRACE_CASES),
        CheckResult::new("laplacian_closed_forms", check_closed_forms()?, tol(1e-10), 2),
        CheckResult::new("codiagonal_eta", eta, tol(1e-8), 1),
        CheckResult::new("codiagonal_zeta", zeta, tol(1e-8), 1),
        CheckResult::new("codiagonal_convolution", conv, tol(1e-8), 10),
    ])
}
