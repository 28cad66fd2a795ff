//! `bench`: command-line front end for the causal-discovery robustness
//! benchmark. Runs the scenario x graph x learner matrix from a config file,
//! evaluates learners on the Sachs dataset, and drives semi-synthetic runs on
//! a fixed graph.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dagbench_core::bench::{
    aggregate_csv, aggregate_json, aggregate_markdown, load_sachs, run_benchmark, run_semisynthetic,
    run_single_dataset, BenchConfig, BenchReport,
};
use dagbench_core::graph::Dag;
use dagbench_core::scm::Dataset;

const PAPER_ER2_D10: &str = include_str!("../presets/paper-er2-d10.toml");

#[derive(Parser)]
#[command(name = "bench", version, about = "Causal-discovery robustness benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic benchmark matrix from a config file or preset.
    Run {
        /// TOML config mirroring the BenchConfig fields.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in preset name (currently: paper-er2-d10).
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate the configured learners on the real Sachs dataset.
    Sachs {
        /// CSV with the 11 flow-cytometry columns.
        #[arg(long)]
        data: PathBuf,
        /// Apply log1p to every measurement before learning.
        #[arg(long)]
        log1p: bool,
        /// Optional config supplying the learner list (defaults to the
        /// paper-er2-d10 learner suite).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the scenario matrix on a fixed ground-truth graph.
    Semisynth {
        /// Edge-list file (`# dag d=<d>` header, one `i j` pair per line).
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory for report files.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Stdout summary format.
    #[arg(long, value_enum, default_value_t = Format::Md)]
    format: Format,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's repetition count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the config's samples per dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Emit per-iteration solver trace lines to stderr (interleaves across
    /// workers; combine with --jobs 1 for readable output).
    #[arg(long)]
    trace: bool,
    /// Skip wall-clock measurement so outputs are byte-reproducible.
    #[arg(long)]
    no_runtime: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
    Json,
}

fn main() {
    let code = match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            preset,
            common,
        } => {
            let mut cfg = load_config(config.as_deref(), preset.as_deref())?;
            apply_overrides(&mut cfg, &common);
            let report = run_benchmark(&cfg, &common.out)
                .with_context(|| "benchmark run failed")?;
            finish_report(&cfg, &report, &common)
        }
        Command::Sachs {
            data,
            log1p,
            config,
            common,
        } => {
            let mut cfg = match config {
                Some(path) => parse_config_file(&path)?,
                None => preset_config()?,
            };
            apply_overrides(&mut cfg, &common);
            let (dataset, _truth) =
                load_sachs(&data).with_context(|| format!("loading {}", data.display()))?;
            let dataset = if log1p { log1p_dataset(&dataset)? } else { dataset };
            let report = run_single_dataset(&dataset, "sachs", &cfg, &common.out)
                .with_context(|| "sachs evaluation failed")?;
            finish_report(&cfg, &report, &common)
        }
        Command::Semisynth {
            graph,
            config,
            common,
        } => {
            let mut cfg = match config {
                Some(path) => parse_config_file(&path)?,
                None => preset_config()?,
            };
            apply_overrides(&mut cfg, &common);
            let text = std::fs::read_to_string(&graph)
                .with_context(|| format!("reading {}", graph.display()))?;
            let truth = Dag::from_edge_list(&text)
                .with_context(|| format!("parsing {}", graph.display()))?;
            let label = graph
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("fixed-graph")
                .to_string();
            let report = run_semisynthetic(&truth, &label, &cfg, &common.out)
                .with_context(|| "semi-synthetic run failed")?;
            finish_report(&cfg, &report, &common)
        }
    }
}

fn preset_config() -> Result<BenchConfig> {
    toml::from_str(PAPER_ER2_D10).context("built-in preset is malformed")
}

fn load_config(config: Option<&Path>, preset: Option<&str>) -> Result<BenchConfig> {
    match (config, preset) {
        (Some(path), None) => parse_config_file(path),
        (None, Some("paper-er2-d10")) | (None, None) => preset_config(),
        (None, Some(other)) => bail!("unknown preset {other:?}; available: paper-er2-d10"),
        (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
    }
}

fn parse_config_file(path: &Path) -> Result<BenchConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn apply_overrides(cfg: &mut BenchConfig, common: &CommonArgs) {
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.reps = reps;
    }
    if let Some(n) = common.n {
        cfg.n = n;
    }
    if common.trace {
        cfg.trace = true;
    }
    if common.no_runtime {
        cfg.measure_runtime = false;
    }
}

fn finish_report(cfg: &BenchConfig, report: &BenchReport, common: &CommonArgs) -> Result<i32> {
    let rendered = match common.format {
        Format::Csv => aggregate_csv(&report.summary, cfg.measure_runtime),
        Format::Md => aggregate_markdown(&report.summary, cfg.measure_runtime),
        Format::Json => aggregate_json(&report.summary, cfg.measure_runtime),
    };
    println!("{rendered}");
    eprintln!("reports written to {}", common.out.display());
    if report.failed_cells.is_empty() {
        Ok(0)
    } else {
        eprintln!(
            "{} cell(s) had no successful trial: {}",
            report.failed_cells.len(),
            report.failed_cells.join(", ")
        );
        Ok(2)
    }
}

fn log1p_dataset(data: &Dataset) -> Result<Dataset> {
    let x = data.x().map(|v| v.signum() * v.abs().ln_1p());
    Ok(data.with_data(x, format!("{}+log1p", data.meta().scenario))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_preset_parses_and_validates() {
        let cfg = preset_config().unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.n, 2000);
        assert_eq!(cfg.reps, 10);
        assert_eq!(cfg.scenarios.len(), 9);
        assert_eq!(cfg.learners.len(), 7);
        assert_eq!(cfg.graphs.len(), 1);
        assert_eq!(cfg.graphs[0].d, 10);
    }

    #[test]
    fn cli_parses_run_invocation() {
        use clap::Parser;
        let cli = Cli::try_parse_from([
            "bench",
            "run",
            "--preset",
            "paper-er2-d10",
            "--out",
            "/tmp/x",
            "--jobs",
            "2",
            "--format",
            "json",
            "--no-runtime",
        ])
        .unwrap();
        match cli.command {
            Command::Run { preset, common, .. } => {
                assert_eq!(preset.as_deref(), Some("paper-er2-d10"));
                assert_eq!(common.jobs, Some(2));
                assert!(common.no_runtime);
            }
            _ => panic!("parsed the wrong subcommand"),
        }
    }
}
