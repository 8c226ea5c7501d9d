//! `gtspectra`: spectral and representational diagnostics for a toy graph
//! transformer over molecular graphs.
//!
//! Exit codes: 0 success, 1 input/parse/schema error, 2 numerical failure
//! (molecule ids listed on stderr), 3 `verify` failure.

mod commands;
mod corpus;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gtspectra::diagnostics::sensitivity::{DEFAULT_MAX_HOP, DEFAULT_STEP};
use gtspectra::spectral::DEFAULT_THRESHOLD;
use gtspectra::{Mode, SanConfig};

use commands::{
    corpus_manifest, load_model, read_probe_csv, stage_demo, stage_expressivity, stage_probe, stage_sensitivity, stage_spectral,
    verify, DemoOptions,
};
use corpus::load_corpus;
use failure::Failure;
use output::{num, RunManifest, Staging};

#[derive(Parser)]
#[command(
    name = "gtspectra",
    version,
    about = "Spectral diagnostics for graph transformers on molecules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rollout/Laplacian eigen-overlap report per molecule.
    Spectral {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Layerwise expressivity (rho) per molecule.
    Expressivity {
        #[command(flatten)]
        run: RunArgs,
        /// Count the class-token row when computing rho.
        #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
        include_class_row: bool,
    },
    /// kth-neighbour sensitivity profile per molecule.
    Sensitivity {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = DEFAULT_MAX_HOP)]
        max_hop: usize,
        /// Central finite-difference step.
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
    },
    /// Elastic-net linear probe on a feature table.
    Probe {
        /// CSV with a header; `molecule_id` is ignored, the target column
        /// holds labels, all other columns are features.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "label")]
        target: String,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        l1_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the bundled corpus and seeded weights, then run every
    /// diagnostic on them.
    Demo {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        json: bool,
    },
    /// Run the embedded invariant suite.
    Verify {
        /// Replace every check's tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Distance clip for the attention bias table.
    #[arg(long, default_value_t = 8)]
    max_dist: usize,
    #[arg(long, default_value = "full", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    class_token: bool,
}

impl ModelArgs {
    fn config(&self) -> SanConfig {
        SanConfig {
            layers: self.layers,
            dim: self.dim,
            heads: self.heads,
            max_dist: self.max_dist,
            include_class_token: self.class_token,
            mode: self.mode,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Weights file; its embedded configuration overrides the model flags.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print machine-readable results on stdout.
    #[arg(long)]
    json: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: gtspectra::Error| e.to_string())
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

struct Prepared {
    corpus: corpus::Corpus,
    model: commands::Model,
    staging: Staging,
    manifest: RunManifest,
}

fn prepare(run: &RunArgs) -> Result<Prepared, Failure> {
    let corpus = load_corpus(&run.corpus)?;
    let model = load_model(run.weights.as_deref(), run.model.config())?;
    let staging = Staging::new(&run.out)?;
    let manifest = corpus_manifest(&corpus, &model);
    Ok(Prepared {
        corpus,
        model,
        staging,
        manifest,
    })
}

fn report_written(paths: &[PathBuf], json: bool) {
    if !json {
        for p in paths {
            eprintln!("wrote {}", p.display());
        }
    }
}

fn finish(p: Prepared, command: &str, json: bool) -> Result<(), Failure> {
    let Prepared {
        mut staging, manifest, ..
    } = p;
    manifest.stage(&mut staging, command)?;
    let written = staging.commit()?;
    report_written(&written, json);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Spectral { run, threshold } => {
            let mut p = prepare(&run)?;
            let summary = stage_spectral(&mut p.staging, &p.corpus, &p.model, threshold)?;
            finish(p, "spectral", run.json)?;
            if run.json {
                print_json(&summary);
            } else {
                println!("{}", summary.line());
            }
        }
        Command::Expressivity { run, include_class_row } => {
            let mut p = prepare(&run)?;
            let count = stage_expressivity(&mut p.staging, &p.corpus, &p.model, include_class_row)?;
            finish(p, "expressivity", run.json)?;
            if run.json {
                print_json(&serde_json::json!({ "molecules": count }));
            } else {
                println!("molecules={count}");
            }
        }
        Command::Sensitivity { run, max_hop, step } => {
            let mut p = prepare(&run)?;
            let count = stage_sensitivity(&mut p.staging, &p.corpus, &p.model, max_hop, step)?;
            finish(p, "sensitivity", run.json)?;
            if run.json {
                print_json(&serde_json::json!({ "molecules": count }));
            } else {
                println!("molecules={count}");
            }
        }
        Command::Probe {
            features,
            target,
            alpha,
            l1_ratio,
            seed,
            out,
            json,
        } => {
            let (input, hash) = read_probe_csv(&features, &target)?;
            let mut staging = Staging::new(&out)?;
            let result = stage_probe(&mut staging, &input, alpha, l1_ratio, seed)?;
            let mut manifest = RunManifest::new();
            manifest.corpus_hash = Some(hash);
            manifest.seed = Some(seed);
            manifest.stage(&mut staging, "probe")?;
            report_written(&staging.commit()?, json);
            if json {
                print_json(&result.record());
            } else {
                println!("r2={} n_train={} n_test={}", num(result.r2), result.n_train, result.n_test);
            }
        }
        Command::Demo {
            model,
            out,
            threshold,
            json,
        } => {
            let opts = DemoOptions {
                cfg: model.config(),
                threshold,
                max_hop: DEFAULT_MAX_HOP,
                step: DEFAULT_STEP,
                alpha: 0.1,
                l1_ratio: 0.5,
            };
            let mut staging = Staging::new(&out)?;
            let outcome = stage_demo(&mut staging, &opts)?;
            report_written(&staging.commit()?, json);
            if json {
                print_json(&serde_json::json!({
                    "spectral": outcome.spectral,
                    "probe": outcome.probe.record(),
                }));
            } else {
                println!("{}", outcome.spectral.line());
                println!("probe r2={}", num(outcome.probe.r2));
            }
        }
        Command::Verify { tolerance, json } => {
            let results = verify(tolerance)?;
            let failed = results.iter().filter(|r| !r.passed).count();
            if json {
                print_json(&results);
            } else {
                for r in &results {
                    println!(
                        "{} {:<24} residual={} tolerance={} cases={}",
                        if r.passed { "PASS" } else { "FAIL" },
                        r.name,
                        num(r.residual),
                        num(r.tolerance),
                        r.cases
                    );
                }
            }
            if failed > 0 {
                return Err(Failure::Verify(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share exit 1 with other input errors; 2 is reserved.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
