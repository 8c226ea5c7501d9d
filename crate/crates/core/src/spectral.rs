//! Attention rollout and its eigen-overlap with graph Laplacian modes.
//!
//! The rollout is `Ã = ∏_{l=L..1} (I + <A_l>_heads) / 2`, deeper layers on the
//! left. Each factor is row-stochastic, so `Ã` is too, and `2^L Ã` equals the
//! un-normalized product that maps `X_0` to `X_L` in proxy mode.
//!
//! Overlaps: `C[i][j] = |<l_i|a_j>|` with rows indexing Laplacian modes and
//! columns indexing rollout modes. Rollout eigenvectors are restricted to the
//! atom tokens (class token dropped) and renormalized first. From `C`:
//!
//! * `matched_rollout`  = { j >= 1 : max_i C[i][j] >= threshold }
//! * `matched_laplacian` = { i >= 1 : max_j C[i][j] >= threshold }
//! * `eta  = Σ_{j in matched_rollout} |a_j| / Σ_{j=1..n-1} |a_j|`
//! * `zeta = eta * |matched_laplacian|`

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian, MolecularGraph};
use crate::linalg::{eig_general, eig_symmetric, LaplacianSpectrum};
use crate::model::LayerTrace;

pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// Sliced eigenvectors with a smaller norm than this have all overlaps set to 0.
pub const SLICE_NORM_FLOOR: f64 = 1e-8;

/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Row-stochastic attention rollout from a trace. A trace with no layers
/// gives the identity.
pub fn rollout(trace: &LayerTrace) -> Array2<f64> {
    let n = trace.tokens();
    let eye = Array2::<f64>::eye(n);
    let mut acc = eye.clone();
    for l in 1..=trace.layers() {
        let factor = (&eye + &trace.head_mean(l)) * 0.5;
        acc = factor.dot(&acc);
    }
    acc
}

#[derive(Debug, Clone)]
pub struct RolloutSpectrum {
    pub rollout: Array2<f64>,
    /// Sorted by descending magnitude.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm columns matching `eigenvalues`.
    pub eigenvectors: Array2<Complex64>,
}

impl RolloutSpectrum {
    pub fn new(rollout: Array2<f64>) -> Result<Self> {
        let eig = eig_general(&rollout)?;
        Ok(RolloutSpectrum {
            rollout,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn from_trace(trace: &LayerTrace) -> Result<Self> {
        RolloutSpectrum::new(rollout(trace))
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    /// Largest `‖Ã v - a v‖₂` over all eigenpairs.
    pub fn max_residual(&self) -> f64 {
        let m = self.rollout.mapv(|v| Complex64::new(v, 0.0));
        (0..self.dim())
            .map(|j| {
                let v = self.eigenvectors.column(j);
                let r = m.dot(&v) - v.mapv(|z| z * self.eigenvalues[j]);
                r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Principal-angle cosines between a Laplacian eigenspace and a rollout
/// eigenspace where at least one side is degenerate. Basis independent,
/// unlike the per-vector entries of `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceOverlap {
    pub laplacian_modes: Vec<usize>,
    pub rollout_modes: Vec<usize>,
    /// Descending.
    pub cosines: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// `N x n`: rows are Laplacian modes, columns are rollout modes.
    pub overlap: Array2<f64>,
    pub matched_laplacian: Vec<usize>,
    pub matched_rollout: Vec<usize>,
    pub eta: f64,
    pub zeta: f64,
    /// Relative Frobenius residual of the filtered-convolution approximation
    /// of `Ã`; `None` with a class token or a disconnected graph.
    pub conv_residual: Option<f64>,
    pub threshold: f64,
    pub has_class_token: bool,
    pub min_real_eigenvalue: f64,
    pub subspace_overlaps: Vec<SubspaceOverlap>,
}

fn atom_slice(rs: &RolloutSpectrum, j: usize, offset: usize) -> Option<Array1<Complex64>> {
    let v = rs.eigenvectors.column(j);
    let sliced = v.slice(ndarray::s![offset..]).to_owned();
    let norm = sliced.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (norm >= SLICE_NORM_FLOOR).then(|| sliced.mapv(|z| z / norm))
}

pub fn overlap_report(
    rs: &RolloutSpectrum,
    ls: &LaplacianSpectrum,
    has_class_token: bool,
    threshold: f64,
) -> Result<SpectralReport> {
    let n = rs.dim();
    let big_n = ls.dim();
    let offset = usize::from(has_class_token);
    if n != big_n + offset {
        return Err(Error::Dim(format!(
            "rollout has {n} tokens but graph has {big_n} atoms (class token: {has_class_token})"
        )));
    }

    let mut overlap = Array2::<f64>::zeros((big_n, n));
    for j in 0..n {
        if let Some(a) = atom_slice(rs, j, offset) {
            for i in 0..big_n {
                let l = ls.eigenvector(i);
                let dot: Complex64 = l.iter().zip(a.iter()).map(|(&li, &aj)| aj * li).sum();
                overlap[[i, j]] = dot.norm();
            }
        }
    }

    let col_max = |j: usize| overlap.column(j).iter().copied().fold(0.0, f64::max);
    let row_max = |i: usize| overlap.row(i).iter().copied().fold(0.0, f64::max);
    let matched_rollout: Vec<usize> = (1..n).filter(|&j| col_max(j) >= threshold).collect();
    let matched_laplacian: Vec<usize> = (1..big_n).filter(|&i| row_max(i) >= threshold).collect();

    // Empty float sums are -0.0; fold from +0.0 so eta and zeta never print as -0.
    let total = rs.eigenvalues.iter().skip(1).fold(0.0, |acc, z| acc + z.norm());
    let matched = matched_rollout.iter().fold(0.0, |acc, &j| acc + rs.eigenvalues[j].norm());
    let eta = if total > 0.0 { matched / total } else { 0.0 };
    let zeta = eta * matched_laplacian.len() as f64;

    let mut report = SpectralReport {
        overlap,
        matched_laplacian,
        matched_rollout,
        eta,
        zeta,
        conv_residual: None,
        threshold,
        has_class_token,
        min_real_eigenvalue: rs.min_real_part(),
        subspace_overlaps: Vec::new(),
    };
    report.subspace_overlaps = subspace_overlaps(rs, ls, offset, threshold)?;
    if !has_class_token && is_connected_spectrum(ls) {
        report.conv_residual = Some(operator_residual(rs, ls, &report)?);
    }
    Ok(report)
}

/// Both spectra and the overlap report for one molecule.
#[derive(Debug, Clone)]
pub struct SpectralAnalysis {
    pub rollout: RolloutSpectrum,
    pub laplacian: LaplacianSpectrum,
    pub report: SpectralReport,
}

impl SpectralAnalysis {
    pub fn record(&self, molecule_id: &str) -> ReportRecord {
        ReportRecord::new(molecule_id, &self.rollout, &self.laplacian, &self.report)
    }
}

pub fn analyze(g: &MolecularGraph, trace: &LayerTrace, threshold: f64) -> Result<SpectralAnalysis> {
    let rollout = RolloutSpectrum::from_trace(trace)?;
    let laplacian = eig_symmetric(&laplacian(g))?;
    let report = overlap_report(&rollout, &laplacian, trace.has_class_token, threshold)?;
    Ok(SpectralAnalysis {
        rollout,
        laplacian,
        report,
    })
}

fn is_connected_spectrum(ls: &LaplacianSpectrum) -> bool {
    ls.dim() <= 1 || ls.eigenvalues[1] > DEGENERACY_GAP
}

fn rollout_clusters(rs: &RolloutSpectrum) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (j, z) in rs.eigenvalues.iter().enumerate() {
        match out.last_mut() {
            Some(last) if (z - rs.eigenvalues[*last.last().unwrap()]).norm() < DEGENERACY_GAP => last.push(j),
            _ => out.push(vec![j]),
        }
    }
    out
}

fn subspace_overlaps(
    rs: &RolloutSpectrum,
    ls: &LaplacianSpectrum,
    offset: usize,
    threshold: f64,
) -> Result<Vec<SubspaceOverlap>> {
    let lap_clusters = ls.clusters(DEGENERACY_GAP);
    let roll_clusters = rollout_clusters(rs);
    let mut out = Vec::new();
    for t in &roll_clusters {
        // Orthonormal basis of the sliced rollout eigenspace.
        let mut basis: Vec<Array1<Complex64>> = Vec::new();
        for &j in t {
            let Some(mut v) = atom_slice(rs, j, offset) else { continue };
            for b in &basis {
                let c: Complex64 = b.iter().zip(v.iter()).map(|(bi, vi)| bi.conj() * vi).sum();
                v.zip_mut_with(b, |vi, bi| *vi -= c * bi);
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-6 {
                basis.push(v.mapv(|z| z / norm));
            }
        }
        if basis.is_empty() {
            continue;
        }
        for s in &lap_clusters {
            if s.len() < 2 && t.len() < 2 {
                continue;
            }
            // M = L_S^T Q (|S| x r); cosines are singular values of M.
            let r = basis.len();
            let mut m = Array2::<Complex64>::zeros((s.len(), r));
            for (a, &i) in s.iter().enumerate() {
                let l = ls.eigenvector(i);
                for (b, q) in basis.iter().enumerate() {
                    m[[a, b]] = l.iter().zip(q.iter()).map(|(&li, &qi)| qi * li).sum();
                }
            }
            let gram = m.t().mapv(|z| z.conj()).dot(&m);
            // Real symmetric embedding [[Re, -Im], [Im, Re]] doubles each eigenvalue.
            let mut embed = Array2::<f64>::zeros((2 * r, 2 * r));
            for a in 0..r {
                for b in 0..r {
                    let z = gram[[a, b]];
                    embed[[a, b]] = z.re;
                    embed[[a + r, b + r]] = z.re;
                    embed[[a, b + r]] = -z.im;
                    embed[[a + r, b]] = z.im;
                }
            }
            for a in 0..2 * r {
                for b in a + 1..2 * r {
                    let v = 0.5 * (embed[[a, b]] + embed[[b, a]]);
                    embed[[a, b]] = v;
                    embed[[b, a]] = v;
                }
            }
            let spectrum = eig_symmetric(&embed)?;
            let mut cosines: Vec<f64> = spectrum
                .eigenvalues
                .iter()
                .rev()
                .step_by(2)
                .take(s.len().min(r))
                .map(|v| v.max(0.0).sqrt().min(1.0))
                .collect();
            cosines.sort_by(|a, b| b.total_cmp(a));
            if cosines.first().is_some_and(|&c| c >= threshold) {
                out.push(SubspaceOverlap {
                    laplacian_modes: s.clone(),
                    rollout_modes: t.clone(),
                    cosines,
                });
            }
        }
    }
    Ok(out)
}

/// Real symmetric operator `a_0 |l_0><l_0| + Σ_{i matched} a_{j*(i)} |l_i><l_i|`
/// (real parts), where `j*(i)` is the non-trivial rollout mode of largest
/// overlap with Laplacian mode `i`.
fn filter_operator(rs: &RolloutSpectrum, ls: &LaplacianSpectrum, report: &SpectralReport) -> Array2<f64> {
    let big_n = ls.dim();
    let mut op = Array2::<f64>::zeros((big_n, big_n));
    let mut add = |i: usize, weight: f64| {
        let l = ls.eigenvector(i);
        for r in 0..big_n {
            for c in 0..big_n {
                op[[r, c]] += weight * l[r] * l[c];
            }
        }
    };
    add(0, rs.eigenvalues[0].re);
    for &i in &report.matched_laplacian {
        let row = report.overlap.row(i);
        let best = (1..row.len()).fold(1, |b, j| if row[j] > row[b] { j } else { b });
        add(i, rs.eigenvalues[best].re);
    }
    op
}

fn check_atom_space(rs: &RolloutSpectrum, ls: &LaplacianSpectrum, report: &SpectralReport) -> Result<()> {
    if report.has_class_token || rs.dim() != ls.dim() {
        return Err(Error::Dim(format!(
            "filtered convolution needs pure atom space (rollout {} vs {} atoms)",
            rs.dim(),
            ls.dim()
        )));
    }
    if !is_connected_spectrum(ls) {
        return Err(Error::InvalidArgument("filtered convolution needs a connected graph".into()));
    }
    Ok(())
}

fn relative_residual(exact: &Array1<f64>, approx: &Array1<f64>) -> f64 {
    let diff = exact - approx;
    let num = diff.dot(&diff).sqrt();
    let den = exact.dot(exact).sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Approximate `Ã x` by the filtered graph convolution over matched modes.
/// Returns the approximation and `‖Ãx - approx‖₂ / ‖Ãx‖₂`.
pub fn filtered_convolution(
    rs: &RolloutSpectrum,
    ls: &LaplacianSpectrum,
    report: &SpectralReport,
    x: &Array1<f64>,
) -> Result<(Array1<f64>, f64)> {
    check_atom_space(rs, ls, report)?;
    if x.len() != ls.dim() {
        return Err(Error::Dim(format!("signal has {} entries, graph has {}", x.len(), ls.dim())));
    }
    let approx = filter_operator(rs, ls, report).dot(x);
    let exact = rs.rollout.dot(x);
    let res = relative_residual(&exact, &approx);
    Ok((approx, res))
}

/// Operator-level residual `‖Ã - Â‖_F / ‖Ã‖_F`, i.e. the filtered-convolution
/// residual aggregated over the standard basis.
pub fn operator_residual(rs: &RolloutSpectrum, ls: &LaplacianSpectrum, report: &SpectralReport) -> Result<f64> {
    check_atom_space(rs, ls, report)?;
    let diff = &rs.rollout - &filter_operator(rs, ls, report);
    let num = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = rs.rollout.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(if den > 0.0 { num / den } else { num })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

/// Per-molecule report as written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRecord {
    pub molecule_id: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub atoms: usize,
    pub eigenvalues: Vec<ComplexValue>,
    pub laplacian_eigenvalues: Vec<f64>,
    #[serde(rename = "C")]
    pub overlap: Vec<Vec<f64>>,
    pub matched_laplacian: Vec<usize>,
    pub matched_rollout: Vec<usize>,
    pub eta: f64,
    pub zeta: f64,
    pub conv_residual: Option<f64>,
    pub threshold: f64,
    pub min_re: f64,
    pub diagnostics: ReportDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub subspace_overlaps: Vec<SubspaceOverlap>,
    pub max_eigen_residual: f64,
}

impl ReportRecord {
    pub fn new(molecule_id: &str, rs: &RolloutSpectrum, ls: &LaplacianSpectrum, report: &SpectralReport) -> Self {
        ReportRecord {
            molecule_id: molecule_id.to_string(),
            n: rs.dim(),
            atoms: ls.dim(),
            eigenvalues: rs.eigenvalues.iter().map(|z| ComplexValue { re: z.re, im: z.im }).collect(),
            laplacian_eigenvalues: ls.eigenvalues.clone(),
            overlap: report.overlap.rows().into_iter().map(|r| r.to_vec()).collect(),
            matched_laplacian: report.matched_laplacian.clone(),
            matched_rollout: report.matched_rollout.clone(),
            eta: report.eta,
            zeta: report.zeta,
            conv_residual: report.conv_residual,
            threshold: report.threshold,
            min_re: report.min_real_eigenvalue,
            diagnostics: ReportDiagnostics {
                subspace_overlaps: report.subspace_overlaps.clone(),
                max_eigen_residual: rs.max_residual(),
            },
        }
    }
}
