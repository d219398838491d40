//! `qlatent` command-line runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qlatent::datagen::{self, BlobSpec};
use qlatent::metrics::ClassificationReport;
use qlatent::parallel::{self, THREADS_ENV};
use qlatent::pipeline::{self, ExperimentConfig, LatentTier, RunReport, RunStatus, StageThrough, REPORT_FILE};

#[derive(Parser)]
#[command(name = "qlatent", version, about = "Latent restructuring and trainable quantum kernels for small-data classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment pipeline described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Global seed for splits, SPSA and θ initialisation.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_stage)]
        stage_through: Option<StageThrough>,
        /// Override any config key, e.g. `--set qka.spsa.maxiter=5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write a synthetic blob dataset described by a TOML spec to CSV.
    GenBlobs {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise the report of a finished run.
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
        /// Print the raw report JSON instead of the summary.
        #[arg(long)]
        json: bool,
    },
}

fn parse_stage(s: &str) -> Result<StageThrough, String> {
    s.parse()
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                parallel::configure_threads(n);
            }
            _ => return fail(2, format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
        }
    }
    match cli.command {
        Command::Run { config, seed, out, stage_through, overrides } => {
            run(&config, seed, out, stage_through, &overrides)
        }
        Command::GenBlobs { spec, out } => gen_blobs(&spec, &out),
        Command::Report { dir, json } => report(&dir, json),
    }
}

fn run(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    stage: Option<StageThrough>,
    overrides: &[String],
) -> ExitCode {
    let mut cfg = match ExperimentConfig::load_with_overrides(path, overrides) {
        Ok(c) => c,
        Err(e) => return fail(e.exit_code() as u8, e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Some(s) = stage {
        cfg.stage_through = s;
    }
    match pipeline::run(&cfg) {
        Ok(r) => {
            println!("{}", summary(&r));
            println!("artifacts in {}", cfg.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.exit_code() as u8, e),
    }
}

fn gen_blobs(spec_path: &Path, out: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(spec_path) {
        Ok(t) => t,
        Err(e) => return fail(2, format!("{}: {e}", spec_path.display())),
    };
    let spec: BlobSpec = match toml::from_str(&text) {
        Ok(s) => s,
        Err(e) => return fail(2, e),
    };
    if let Err(e) = spec.validate() {
        return fail(2, e);
    }
    let data = datagen::make_blobs(&spec);
    if let Err(e) = data.save_csv(out) {
        return fail(1, format!("{}: {e}", out.display()));
    }
    println!("wrote {} samples × {} features ({} classes) to {}", data.len(), data.dim(), data.n_classes(), out.display());
    ExitCode::SUCCESS
}

fn report(dir: &Path, raw: bool) -> ExitCode {
    let path = dir.join(REPORT_FILE);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return fail(3, format!("{}: {e}", path.display())),
    };
    if raw {
        match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(v) => println!("{}", serde_json::to_string_pretty(&v).expect("valid JSON")),
            Err(e) => return fail(3, e),
        }
        return ExitCode::SUCCESS;
    }
    match serde_json::from_str::<RunReport>(&text) {
        Ok(r) => {
            println!("{}", summary(&r));
            ExitCode::SUCCESS
        }
        Err(e) => fail(3, format!("{}: {e}", path.display())),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn scores(r: &Option<ClassificationReport>) -> String {
    match r {
        Some(r) => format!("acc {:.4}  macro-F1 {:.4}  weighted-F1 {:.4}", r.accuracy, r.macro_f1, r.weighted_f1),
        None => "-".into(),
    }
}

fn summary(r: &RunReport) -> String {
    let mut lines = Vec::new();
    let status = match r.status {
        RunStatus::Ok => "ok".to_string(),
        RunStatus::Failed => match &r.failure {
            Some(f) => format!("FAILED at {}: {}", f.stage, f.message),
            None => "FAILED".into(),
        },
    };
    lines.push(format!("status: {status}"));
    if let Some(d) = &r.data {
        lines.push(format!(
            "data: {} samples, {} features, {} classes; splits {}/{}/{}",
            d.n_samples, d.n_features, d.n_classes, d.train, d.val, d.test
        ));
    }
    let s = &r.silhouette;
    lines.push(format!(
        "silhouette train raw {} pca {} lda {} | test raw {} pca {} lda {}",
        opt(s.train.raw),
        opt(s.train.pca),
        opt(s.train.lda),
        opt(s.test.raw),
        opt(s.test.pca),
        opt(s.test.lda)
    ));
    if let Some(clean) = r.leakage.clean {
        lines.push(format!("leakage audit: {}", if clean { "clean" } else { "MODEL CHANGED DURING TRANSFORM" }));
    }
    for b in r.baselines.iter().flatten() {
        let tier = match b.tier {
            LatentTier::Pca => "pca",
            LatentTier::Lda => "lda",
        };
        lines.push(format!("baseline {tier}/{} C={}: test {}", b.kernel, b.c, scores(&b.test)));
    }
    if let Some(q) = &r.qka {
        lines.push(format!(
            "qka: {} qubits, {} params, {} iterations ({} accepted), loss {:.6} → {:.6}",
            q.n_qubits, q.n_params, q.iterations, q.accepted, q.initial_loss, q.final_loss
        ));
    }
    if let Some(q) = &r.qsvc {
        let grid: Vec<String> = q.grid.entries.iter().map(|e| format!("{}:{:.4}", e.c, e.val_macro_f1)).collect();
        lines.push(format!("qsvc: grid [{}] → C={}", grid.join(", "), q.chosen_c));
        lines.push(format!("qsvc val:  {}", scores(&q.val)));
        lines.push(format!("qsvc test: {}", scores(&q.test)));
    }
    if let Some(t) = r.timings.total {
        lines.push(format!("total time {t:.2}s"));
    }
    lines.join("\n")
}
