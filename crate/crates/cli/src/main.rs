use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use competence_lab::harness::{self, RunConfig};
use competence_lab::LabError;
use serde_json::json;

#[derive(Parser)]
#[command(name = "competence-lab", version, about = "Run and compare competence-based intrinsic reward experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration (optionally over several seeds in parallel).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Comma-separated seeds or a range such as `0..10`; runs fan out across threads.
        #[arg(long)]
        seeds: Option<String>,
        /// Output root; defaults to the config's output_dir, then $COMPETENCE_LAB_OUT, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two or more finished runs on the same environment.
    Compare {
        #[arg(required = true, num_args = 2..)]
        run_dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot every metric series of a finished run.
    Report {
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a configuration without running it; prints the resolved form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Lab(LabError),
    Usage(String),
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Lab(e)
    }
}

impl CliError {
    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Lab(e) => (e.kind(), e.to_string()),
            CliError::Usage(m) => ("usage", m.clone()),
        };
        json!({ "error": { "kind": kind, "message": message } })
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse seeds {text:?}; use `0..10` or `1,2,3`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn output_root(out: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    out.or_else(|| config.output_dir.clone())
        .unwrap_or_else(harness::default_output_root)
}

fn execute(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            seeds,
            out,
        } => {
            let base = RunConfig::load(&config)?;
            let root = output_root(out, &base);
            let mut configs = Vec::new();
            match (seed, seeds) {
                (_, Some(text)) => {
                    for s in parse_seeds(&text)? {
                        configs.push(RunConfig { seed: s, ..base.clone() });
                    }
                }
                (Some(s), None) => configs.push(RunConfig { seed: s, ..base }),
                (None, None) => configs.push(base),
            }
            for c in &mut configs {
                c.output_dir = Some(root.clone());
            }
            let mut runs = Vec::new();
            for r in harness::run_many(&configs, false) {
                let r = r?;
                runs.push(json!({
                    "run_id": r.run_id(),
                    "run_dir": r.run_dir.as_deref().map(Path::display).map(|d| d.to_string()),
                    "steps": r.summary.steps,
                    "episodes": r.summary.episodes,
                    "coverage": r.summary.coverage,
                    "wall_clock_ms": r.wall_clock_ms as u64,
                }));
            }
            Ok(json!({ "runs": runs }))
        }
        Command::Compare { run_dirs, out } => {
            let cmp = harness::compare_dirs(&run_dirs, &out)?;
            Ok(json!({
                "out": out.display().to_string(),
                "pairs": cmp.pairs.len(),
                "mean_between_facets": cmp.mean_between_facets(),
                "mean_within_facet": cmp.mean_within_facet(),
            }))
        }
        Command::Report { run_dir, out } => {
            let files = harness::report_dir(&run_dir, &out)?;
            let files: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
            Ok(json!({ "files": files }))
        }
        Command::Validate { config } => {
            let resolved = RunConfig::load(&config)?.resolve()?;
            Ok(json!({ "valid": true, "run_id": resolved.run_id(), "config": resolved }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json value serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Lab(_) => ExitCode::FAILURE,
            }
        }
    }
}
