use std::path::Path;

use gtspectra::diagnostics::{expressivity, linear_probe, sensitivity, ProbeResult};
use gtspectra::model::{forward, init_weights, SanConfig, SanWeights};
use gtspectra::spectral::{analyze, ReportRecord};
use gtspectra::verify::{run_suite, CheckResult};
use gtspectra::weights_io::{load_weights, weights_to_json};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{parse_corpus, Corpus, Molecule};
use crate::failure::{is_numerical, Failure};
use crate::output::{num, opt_num, write_json_line, RunManifest, Staging};

pub const DEMO_CORPUS: &str = include_str!("../../core/data/demo_corpus.smi");

/// Run `f` over the corpus on the work pool; results keep corpus order.
fn per_molecule<T: Send>(
    molecules: &[Molecule],
    f: impl Fn(&Molecule) -> gtspectra::Result<T> + Sync,
) -> Result<Vec<T>, Failure> {
    let results: Vec<gtspectra::Result<T>> = molecules.par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(results.len());
    let mut numerical = Vec::new();
    for (m, r) in molecules.iter().zip(results) {
        match r {
            Ok(v) => out.push(v),
            Err(e) if is_numerical(&e) => numerical.push((m.id.clone(), e)),
            Err(e) => return Err(Failure::Input(format!("{}: {}: {e}", m.id, e.code()))),
        }
    }
    if numerical.is_empty() {
        Ok(out)
    } else {
        Err(Failure::Numerical(numerical))
    }
}

pub struct Model {
    pub weights: SanWeights,
}

impl Model {
    pub fn config(&self) -> &SanConfig {
        &self.weights.config
    }

    pub fn stamp(&self, manifest: &mut RunManifest) {
        manifest.config_hash = Some(self.config().hash());
        manifest.weights_hash = Some(self.weights.checksum());
        manifest.seed = Some(self.config().seed);
    }
}

/// Weights from `path` when given (their embedded config wins), else a
/// seeded initialization of `cfg`.
pub fn load_model(path: Option<&Path>, cfg: SanConfig) -> Result<Model, Failure> {
    let weights = match path {
        Some(p) => load_weights(p).map_err(|e| Failure::Input(format!("{}: {}: {e}", p.display(), e.code())))?,
        None => {
            cfg.validate().map_err(|e| Failure::Input(format!("{}: {e}", e.code())))?;
            init_weights(&cfg).map_err(|e| Failure::Input(format!("{}: {e}", e.code())))?
        }
    };
    Ok(Model { weights })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub molecules: usize,
    pub zeta_mean: f64,
    pub zeta_median: f64,
    pub eta_mean: f64,
    pub eta_median: f64,
}

impl SpectralSummary {
    pub fn line(&self) -> String {
        format!(
            "molecules={} zeta_mean={} zeta_median={} eta_mean={} eta_median={}",
            self.molecules,
            num(self.zeta_mean),
            num(self.zeta_median),
            num(self.eta_mean),
            num(self.eta_median)
        )
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn stage_spectral(staging: &mut Staging, corpus: &Corpus, model: &Model, threshold: f64) -> Result<SpectralSummary, Failure> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Failure::Input(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let cfg = model.config();
    let records: Vec<ReportRecord> = per_molecule(&corpus.molecules, |m| {
        let trace = forward(&m.graph, &model.weights, cfg)?;
        Ok(analyze(&m.graph, &trace, threshold)?.record(&m.id))
    })?;

    let mut reports = staging.lines("reports.jsonl")?;
    for r in &records {
        write_json_line(&mut reports, r)?;
    }
    drop(reports);

    let mut csv = staging.csv("spectral.csv")?;
    csv.write_record(["molecule_id", "N", "eta", "zeta", "conv_residual"])?;
    for r in &records {
        csv.write_record([
            r.molecule_id.clone(),
            r.atoms.to_string(),
            num(r.eta),
            num(r.zeta),
            opt_num(r.conv_residual),
        ])?;
    }
    csv.flush()?;

    let zeta: Vec<f64> = records.iter().map(|r| r.zeta).collect();
    let eta: Vec<f64> = records.iter().map(|r| r.eta).collect();
    let summary = SpectralSummary {
        molecules: records.len(),
        zeta_mean: mean(&zeta),
        zeta_median: median(&zeta),
        eta_mean: mean(&eta),
        eta_median: median(&eta),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    staging.write("spectral_summary.json", text.as_bytes())?;
    Ok(summary)
}

pub fn stage_expressivity(
    staging: &mut Staging,
    corpus: &Corpus,
    model: &Model,
    include_class_row: bool,
) -> Result<usize, Failure> {
    let cfg = model.config();
    let traces = per_molecule(&corpus.molecules, |m| {
        let trace = forward(&m.graph, &model.weights, cfg)?;
        expressivity(&trace, include_class_row)
    })?;
    let mut csv = staging.csv("expressivity.csv")?;
    csv.write_record(["molecule_id", "layer", "rho"])?;
    for (m, t) in corpus.molecules.iter().zip(&traces) {
        for (l, rho) in t.rho.iter().enumerate() {
            csv.write_record([m.id.clone(), (l + 1).to_string(), num(*rho)])?;
        }
    }
    csv.flush()?;
    Ok(traces.len())
}

pub fn stage_sensitivity(
    staging: &mut Staging,
    corpus: &Corpus,
    model: &Model,
    max_hop: usize,
    step: f64,
) -> Result<usize, Failure> {
    let cfg = model.config();
    let profiles = per_molecule(&corpus.molecules, |m| {
        sensitivity(&m.graph, &model.weights, cfg, max_hop, step)
    })?;
    let mut csv = staging.csv("sensitivity.csv")?;
    csv.write_record(["molecule_id", "k", "raw", "standardized"])?;
    for (m, p) in corpus.molecules.iter().zip(&profiles) {
        for (k, (raw, std)) in p.raw.iter().zip(&p.standardized).enumerate() {
            csv.write_record([m.id.clone(), k.to_string(), num(*raw), num(*std)])?;
        }
    }
    csv.flush()?;
    Ok(profiles.len())
}

pub struct ProbeInput {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
}

/// Numeric CSV with a header. `molecule_id` is ignored, `target` holds the
/// labels and every other column is a feature.
pub fn read_probe_csv(path: &Path, target: &str) -> Result<(ProbeInput, String), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::input(path.display(), e))?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| Failure::input(path.display(), e))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Failure::Input(format!("{}: E_SCHEMA: no column named {target:?}", path.display())))?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_col && &headers[c] != "molecule_id")
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Failure::input(path.display(), e))?;
        let line = record.position().map_or(0, |p| p.line());
        let value = |c: usize| -> Result<f64, Failure> {
            record[c].trim().parse::<f64>().map_err(|_| {
                Failure::Input(format!(
                    "{}:{line}: E_PARSE: column {:?} is not a number: {:?}",
                    path.display(),
                    &headers[c],
                    &record[c]
                ))
            })
        };
        labels.push(value(label_col)?);
        for &c in &feature_cols {
            rows.push(value(c)?);
        }
    }
    let samples = labels.len();
    let features = Array2::from_shape_vec((samples, feature_cols.len()), rows).expect("row-major feature table");
    Ok((
        ProbeInput {
            features,
            labels: Array1::from(labels),
        },
        hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&bytes)),
    ))
}

pub fn stage_probe(
    staging: &mut Staging,
    input: &ProbeInput,
    alpha: f64,
    l1_ratio: f64,
    seed: u64,
) -> Result<ProbeResult, Failure> {
    let result = linear_probe(&input.features, &input.labels, alpha, l1_ratio, seed).map_err(|e| {
        if is_numerical(&e) {
            Failure::Numerical(vec![("probe".into(), e)])
        } else {
            Failure::Input(format!("{}: {e}", e.code()))
        }
    })?;
    let mut text = serde_json::to_string_pretty(&result.record()).expect("probe record serializes");
    text.push('\n');
    staging.write("probe.json", text.as_bytes())?;
    Ok(result)
}

const ELEMENT_MASS: [(&str, f64); 10] = [
    ("B", 10.81),
    ("C", 12.011),
    ("N", 14.007),
    ("O", 15.999),
    ("P", 30.974),
    ("S", 32.06),
    ("F", 18.998),
    ("Cl", 35.45),
    ("Br", 79.904),
    ("I", 126.904),
];
const HYDROGEN_MASS: f64 = 1.008;

pub fn molecular_weight(g: &gtspectra::MolecularGraph) -> f64 {
    g.atoms()
        .iter()
        .map(|a| {
            let heavy = ELEMENT_MASS.iter().find(|(el, _)| *el == a.element).map_or(0.0, |(_, m)| *m);
            heavy + HYDROGEN_MASS * a.implicit_h as f64
        })
        .sum()
}

/// Mean-pooled last-layer atom representations plus molecular weight.
pub fn stage_features(staging: &mut Staging, corpus: &Corpus, model: &Model) -> Result<ProbeInput, Failure> {
    let cfg = model.config();
    let pooled = per_molecule(&corpus.molecules, |m| {
        let trace = forward(&m.graph, &model.weights, cfg)?;
        Ok(trace
            .atom_states(trace.layers())
            .mean_axis(Axis(0))
            .expect("at least one atom"))
    })?;
    let d = cfg.dim;
    let mut csv = staging.csv("features.csv")?;
    let mut header = vec!["molecule_id".to_string()];
    header.extend((0..d).map(|k| format!("f{k}")));
    header.push("molecular_weight".into());
    csv.write_record(&header)?;
    let mut features = Array2::zeros((pooled.len(), d));
    let mut labels = Array1::zeros(pooled.len());
    for (row, (m, p)) in corpus.molecules.iter().zip(&pooled).enumerate() {
        let mw = molecular_weight(&m.graph);
        let mut rec = vec![m.id.clone()];
        rec.extend(p.iter().map(|v| num(*v)));
        rec.push(num(mw));
        csv.write_record(&rec)?;
        features.row_mut(row).assign(p);
        labels[row] = mw;
    }
    csv.flush()?;
    Ok(ProbeInput { features, labels })
}

pub struct DemoOptions {
    pub cfg: SanConfig,
    pub threshold: f64,
    pub max_hop: usize,
    pub step: f64,
    pub alpha: f64,
    pub l1_ratio: f64,
}

pub struct DemoOutcome {
    pub spectral: SpectralSummary,
    pub probe: ProbeResult,
}

/// Bundled corpus plus seeded weights, then every diagnostic.
pub fn stage_demo(staging: &mut Staging, opts: &DemoOptions) -> Result<DemoOutcome, Failure> {
    let corpus_path = Path::new("corpus.smi");
    let corpus = Corpus {
        molecules: parse_corpus(DEMO_CORPUS, corpus_path)?,
        sha256: hex::encode(<sha2::Sha256 as sha2::Digest>::digest(DEMO_CORPUS.as_bytes())),
    };
    let model = load_model(None, opts.cfg.clone())?;
    staging.write("corpus.smi", DEMO_CORPUS.as_bytes())?;
    staging.write("weights.json", weights_to_json(&model.weights).as_bytes())?;

    let spectral = stage_spectral(staging, &corpus, &model, opts.threshold)?;
    stage_expressivity(staging, &corpus, &model, false)?;
    stage_sensitivity(staging, &corpus, &model, opts.max_hop, opts.step)?;
    let input = stage_features(staging, &corpus, &model)?;
    let probe = stage_probe(staging, &input, opts.alpha, opts.l1_ratio, opts.cfg.seed)?;

    let mut manifest = RunManifest::new();
    model.stamp(&mut manifest);
    manifest.corpus_hash = Some(corpus.sha256.clone());
    manifest.stage(staging, "demo")?;
    Ok(DemoOutcome { spectral, probe })
}

pub fn corpus_manifest(corpus: &Corpus, model: &Model) -> RunManifest {
    let mut manifest = RunManifest::new();
    model.stamp(&mut manifest);
    manifest.corpus_hash = Some(corpus.sha256.clone());
    manifest
}

pub fn verify(tolerance: Option<f64>) -> Result<Vec<CheckResult>, Failure> {
    if tolerance.is_some_and(|t| t.is_nan() || t < 0.0) {
        return Err(Failure::Input("tolerance must be non-negative".into()));
    }
    run_suite(tolerance).map_err(|e| Failure::Input(format!("{}: {e}", e.code())))
}
