//! Experiment orchestration: the scenario x graph x learner matrix, oracle
//! hyperparameter selection over the lambda1 grid, aggregation into
//! mean +- std tables, Sachs ingestion, and semi-synthetic runs.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dag, GraphFamily, GraphKind};
use crate::learners::{learn, LearnerConfig, Method, LAMBDA1_GRID};
use crate::metrics::{shd, sid};
use crate::misspec::{compose, ScenarioSpec};
use crate::scm::{
    make_linear_scm, sample_gp, Dataset, DatasetMeta, GpScm, NoiseDist, NoiseSpec,
};
use crate::seeding;

/// One random-graph family entry of the benchmark matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub family: GraphFamily,
    pub degree: usize,
    pub d: usize,
}

impl GraphSpec {
    pub fn kind(&self) -> GraphKind {
        GraphKind::new(self.family, self.degree)
    }

    pub fn label(&self) -> String {
        self.kind().label()
    }
}

/// Per-learner entry: unset fields fall back to the method defaults, and an
/// unset lambda1 puts the learner in grid mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub method: Method,
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub lambda2: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub constraint: Option<crate::acyclicity::AcyclicityKind>,
}

impl LearnerSpec {
    pub fn new(method: Method) -> LearnerSpec {
        // Only the score-based continuous learners sweep lambda1;
        // SortnRegress runs at one fixed value.
        let lambda1 = match method {
            Method::VarSortnRegress | Method::R2SortnRegress => Some(0.01),
            _ => None,
        };
        LearnerSpec {
            method,
            lambda1,
            lambda2: None,
            tau: None,
            constraint: None,
        }
    }

    pub fn to_config(&self) -> LearnerConfig {
        let mut cfg = LearnerConfig::new(self.method);
        if let Some(v) = self.lambda1 {
            cfg.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.lambda2 = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.constraint {
            cfg.constraint = v;
        }
        cfg
    }

    /// The lambda1 values this learner sweeps: the canonical grid in grid
    /// mode, a single point when pinned or when the method ignores lambda1.
    pub fn lambda_grid(&self) -> Vec<Option<f64>> {
        if !self.method.uses_lambda1() {
            return vec![None];
        }
        match self.lambda1 {
            Some(v) => vec![Some(v)],
            None => LAMBDA1_GRID.iter().map(|&v| Some(v)).collect(),
        }
    }
}

/// Full benchmark configuration. (config, seed) determines every output byte
/// when `measure_runtime` is off; wall-clock runtimes are the one
/// non-reproducible field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub graphs: Vec<GraphSpec>,
    /// Each entry is one scenario cell; multi-element entries compose.
    pub scenarios: Vec<Vec<ScenarioSpec>>,
    pub learners: Vec<LearnerSpec>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 = library default.
    #[serde(default)]
    pub jobs: usize,
    /// Vanilla noise family (per-node sigma stays 1).
    #[serde(default = "default_noise")]
    pub noise: NoiseDist,
    /// Record wall-clock runtimes. Disable for byte-reproducible outputs.
    #[serde(default = "default_true")]
    pub measure_runtime: bool,
    /// Emit solver trace lines to stderr (ALM / central-path learners).
    #[serde(default)]
    pub trace: bool,
}

fn default_n() -> usize {
    2000
}
fn default_reps() -> usize {
    10
}
fn default_noise() -> NoiseDist {
    NoiseDist::Gaussian
}
fn default_true() -> bool {
    true
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Parameter("reps must be at least 1".into()));
        }
        if self.graphs.is_empty() || self.learners.is_empty() || self.scenarios.is_empty() {
            return Err(Error::Parameter(
                "config needs at least one graph, one scenario, and one learner".into(),
            ));
        }
        for g in &self.graphs {
            if self.n < g.d + 1 {
                return Err(Error::Parameter(format!(
                    "n = {} is below d + 1 = {} for graph {}",
                    self.n,
                    g.d + 1,
                    g.label()
                )));
            }
        }
        for entry in &self.scenarios {
            for spec in entry {
                spec.validate()?;
            }
        }
        Ok(())
    }

    /// The canonical desk-scale preset: ER-2 with 10 nodes, all scenarios,
    /// all learners, 10 repetitions of 2000 samples.
    pub fn paper_er2_d10() -> BenchConfig {
        BenchConfig {
            graphs: vec![GraphSpec {
                family: GraphFamily::Er,
                degree: 2,
                d: 10,
            }],
            scenarios: vec![
                vec![ScenarioSpec::Vanilla],
                vec![ScenarioSpec::confounded_default()],
                vec![ScenarioSpec::MeasurementError { delta: 0.8 }],
                vec![ScenarioSpec::autoregressive_default()],
                vec![ScenarioSpec::heterogeneous_default()],
                vec![ScenarioSpec::Unfaithful],
                vec![ScenarioSpec::ScaleVariant],
                vec![ScenarioSpec::Missing { beta: 0.01 }],
                vec![ScenarioSpec::MechanismViolation],
            ],
            learners: vec![
                LearnerSpec::new(Method::Random),
                LearnerSpec::new(Method::VarSortnRegress),
                LearnerSpec::new(Method::R2SortnRegress),
                LearnerSpec::new(Method::Notears),
                LearnerSpec::new(Method::GolemEv),
                LearnerSpec::new(Method::NoCurl),
                LearnerSpec::new(Method::Dagma),
            ],
            n: 2000,
            reps: 10,
            seed: 0,
            jobs: 0,
            noise: NoiseDist::Gaussian,
            measure_runtime: true,
            trace: false,
        }
    }
}

/// How the truth graph of a cell comes to be.
#[derive(Debug, Clone)]
enum GraphSource {
    Random(GraphSpec),
    Fixed { label: String, dag: Dag },
}

impl GraphSource {
    fn label(&self) -> String {
        match self {
            GraphSource::Random(spec) => spec.label(),
            GraphSource::Fixed { label, .. } => label.clone(),
        }
    }

    fn degree(&self) -> usize {
        match self {
            GraphSource::Random(spec) => spec.degree,
            GraphSource::Fixed { .. } => 0,
        }
    }

    fn d(&self) -> usize {
        match self {
            GraphSource::Random(spec) => spec.d,
            GraphSource::Fixed { dag, .. } => dag.d(),
        }
    }

    fn realize(&self, seed: u64) -> Result<Dag> {
        match self {
            GraphSource::Random(spec) => spec.kind().generate(spec.d, seed),
            GraphSource::Fixed { dag, .. } => Ok(dag.clone()),
        }
    }
}

/// One (cell, repetition) result row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub graph: String,
    pub d: usize,
    pub k: usize,
    pub scenario: String,
    pub learner: String,
    /// Repetition index; the actual stream seeds derive from it.
    pub seed: u64,
    pub lambda1: Option<f64>,
    pub shd: Option<usize>,
    pub sid: Option<usize>,
    pub runtime_s: Option<f64>,
    pub converged: bool,
}

impl EvalRecord {
    pub const CSV_HEADER: &'static str =
        "graph,d,k,scenario,learner,seed,lambda1,shd,sid,runtime_s,converged";

    pub fn to_csv_row(&self, measure_runtime: bool) -> String {
        let lambda1 = self.lambda1.map(|v| format!("{v}")).unwrap_or_default();
        let shd = self.shd.map(|v| v.to_string()).unwrap_or_default();
        let sid = self.sid.map(|v| v.to_string()).unwrap_or_default();
        let rt = match self.runtime_s {
            Some(v) if measure_runtime => format!("{v:.6}"),
            Some(_) => "0.000000".to_string(),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.graph,
            self.d,
            self.k,
            self.scenario,
            self.learner,
            self.seed,
            lambda1,
            shd,
            sid,
            rt,
            self.converged
        )
    }
}

fn scenario_label(specs: &[ScenarioSpec]) -> String {
    let mut names: Vec<&'static str> = specs
        .iter()
        .filter(|s| !matches!(s, ScenarioSpec::Vanilla))
        .map(|s| s.name())
        .collect();
    if names.is_empty() {
        return "vanilla".to_string();
    }
    names.sort_unstable();
    names.dedup();
    names.join("+")
}

/// Builds the dataset for one (graph source, scenario, rep) cell. All
/// learners of the cell see this same dataset.
fn trial_dataset(
    source: &GraphSource,
    specs: &[ScenarioSpec],
    cfg: &BenchConfig,
    rep: u64,
) -> Result<Dataset> {
    let glabel = source.label();
    let slabel = scenario_label(specs);
    let graph_seed = seeding::derive(cfg.seed, &format!("graph|{glabel}|d{}", source.d()), rep);
    let weight_seed = seeding::derive(cfg.seed, &format!("weights|{glabel}|d{}", source.d()), rep);
    let scen_seed = seeding::derive(
        cfg.seed,
        &format!("scenario|{glabel}|d{}|{slabel}", source.d()),
        rep,
    );
    let truth = source.realize(graph_seed)?;

    if specs
        .iter()
        .any(|s| matches!(s, ScenarioSpec::MechanismViolation))
    {
        if specs.len() > 1 {
            return Err(Error::Parameter(
                "mechanism violation cannot be composed with other scenarios".into(),
            ));
        }
        let gp = GpScm::vanilla(truth);
        let ds = sample_gp(&gp, cfg.n, scen_seed)?;
        let x = ds.x().clone();
        return Dataset::new(
            x,
            DatasetMeta {
                scenario: "mechanism_violation".into(),
                seed: scen_seed,
                scm_desc: ds.meta().scm_desc.clone(),
                truth: ds.truth().clone(),
            },
        );
    }

    let noise = match cfg.noise {
        NoiseDist::Gaussian => NoiseSpec::standard_gaussian(truth.d()),
        NoiseDist::Exponential => NoiseSpec::standard_exponential(truth.d()),
    };
    let scm = make_linear_scm(&truth, noise, weight_seed)?;
    compose(specs, &scm, cfg.n, scen_seed)
}

/// Runs one learner over its lambda1 grid on one dataset and keeps the grid
/// point minimizing SHD (ties to the smaller lambda1).
fn run_learner_trial(
    data: &Dataset,
    learner: &LearnerSpec,
    source: &GraphSource,
    scenario: &str,
    cfg: &BenchConfig,
    rep: u64,
) -> EvalRecord {
    let learner_seed = seeding::derive(
        cfg.seed,
        &format!(
            "learner|{}|d{}|{scenario}|{}",
            source.label(),
            source.d(),
            learner.method.name()
        ),
        rep,
    );
    let truth = data.truth();

    let mut best: Option<(usize, crate::learners::LearnedGraph)> = None;
    if matches!(learner.method, Method::Random) {
        // The random baseline guesses at the configured density; for fixed
        // graphs, at the truth's own mean degree.
        let k = match source.degree() {
            0 => {
                let d = truth.d().max(1);
                ((2.0 * truth.edge_count() as f64 / d as f64).round() as usize).max(1)
            }
            k => k,
        };
        if let Ok(lg) = crate::learners::random_baseline(source.d(), k, learner_seed) {
            if let Ok(score) = shd(&lg.dag, truth) {
                best = Some((score, lg));
            }
        }
        return finish_record(best, data, learner, source, scenario, cfg, rep);
    }

    for lambda1 in learner.lambda_grid() {
        let mut lcfg = learner.to_config();
        if let Some(v) = lambda1 {
            lcfg.lambda1 = v;
        }
        // Rows only carry metrics for candidates whose solver met its own
        // stopping criterion; a trial with no such candidate is a failure.
        let outcome = if cfg.trace {
            let cell = format!(
                "{}|d{}|{scenario}|{}|rep{rep}",
                source.label(),
                source.d(),
                learner.method.name()
            );
            let lambda_str = lambda1.map(|v| v.to_string()).unwrap_or_default();
            let mut sink = |rec: crate::solvers::TraceRecord| {
                eprintln!("trace {cell} lambda1={lambda_str} {}", rec.to_line());
            };
            crate::learners::learn_traced(data, &lcfg, learner_seed, Some(&mut sink))
        } else {
            learn(data, &lcfg, learner_seed)
        };
        let Ok(lg) = outcome else { continue };
        if !lg.converged {
            continue;
        }
        let Ok(score) = shd(&lg.dag, truth) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((best_shd, _)) => score < *best_shd,
        };
        if better {
            best = Some((score, lg));
        }
    }

    finish_record(best, data, learner, source, scenario, cfg, rep)
}

fn finish_record(
    best: Option<(usize, crate::learners::LearnedGraph)>,
    data: &Dataset,
    learner: &LearnerSpec,
    source: &GraphSource,
    scenario: &str,
    cfg: &BenchConfig,
    rep: u64,
) -> EvalRecord {
    let truth = data.truth();
    match best {
        Some((shd_val, lg)) => {
            let sid_val = sid(&lg.dag, truth).ok();
            let runtime = if cfg.measure_runtime { lg.runtime_s } else { 0.0 };
            EvalRecord {
                graph: source.label(),
                d: source.d(),
                k: source.degree(),
                scenario: scenario.to_string(),
                learner: learner.method.name().to_string(),
                seed: rep,
                lambda1: learner.method.uses_lambda1().then_some(lg.lambda1),
                shd: Some(shd_val),
                sid: sid_val,
                runtime_s: Some(runtime),
                converged: lg.converged,
            }
        }
        None => EvalRecord {
            graph: source.label(),
            d: source.d(),
            k: source.degree(),
            scenario: scenario.to_string(),
            learner: learner.method.name().to_string(),
            seed: rep,
            lambda1: None,
            shd: None,
            sid: None,
            runtime_s: None,
            converged: false,
        },
    }
}

/// Everything a benchmark run produces.
#[derive(Debug)]
pub struct BenchReport {
    pub records: Vec<EvalRecord>,
    pub summary: Summary,
    /// Cells in which every repetition failed; callers should exit nonzero.
    pub failed_cells: Vec<String>,
}

/// Executes the scenario x graph x learner matrix and writes report files to
/// `out_dir` (created if missing): trials.csv, aggregate.{csv,md,json}, and
/// manifest.json.
pub fn run_benchmark(cfg: &BenchConfig, out_dir: &Path) -> Result<BenchReport> {
    cfg.validate()?;
    let sources: Vec<GraphSource> = cfg.graphs.iter().map(|g| GraphSource::Random(*g)).collect();
    run_matrix(cfg, &sources, out_dir)
}

/// Instantiates the vanilla SCM on a fixed graph and runs the scenario
/// matrix exactly as [`run_benchmark`].
pub fn run_semisynthetic(
    truth: &Dag,
    label: &str,
    cfg: &BenchConfig,
    out_dir: &Path,
) -> Result<BenchReport> {
    if cfg.reps == 0 {
        return Err(Error::Parameter("reps must be at least 1".into()));
    }
    if cfg.n < truth.d() + 1 {
        return Err(Error::Parameter(format!(
            "n = {} is below d + 1 = {}",
            cfg.n,
            truth.d() + 1
        )));
    }
    if cfg.learners.is_empty() || cfg.scenarios.is_empty() {
        return Err(Error::Parameter(
            "config needs at least one scenario and one learner".into(),
        ));
    }
    for entry in &cfg.scenarios {
        for spec in entry {
            spec.validate()?;
        }
    }
    let sources = vec![GraphSource::Fixed {
        label: label.to_string(),
        dag: truth.clone(),
    }];
    run_matrix(cfg, &sources, out_dir)
}

fn run_matrix(cfg: &BenchConfig, sources: &[GraphSource], out_dir: &Path) -> Result<BenchReport> {
    struct Trial<'a> {
        source: &'a GraphSource,
        specs: &'a [ScenarioSpec],
        scenario: String,
        learner: &'a LearnerSpec,
        rep: u64,
    }

    let mut trials: Vec<Trial<'_>> = Vec::new();
    for source in sources {
        for specs in &cfg.scenarios {
            let scenario = scenario_label(specs);
            for learner in &cfg.learners {
                for rep in 0..cfg.reps as u64 {
                    trials.push(Trial {
                        source,
                        specs,
                        scenario: scenario.clone(),
                        learner,
                        rep,
                    });
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<EvalRecord>> = pool.install(|| {
        trials
            .par_iter()
            .map(|t| {
                let data = trial_dataset(t.source, t.specs, cfg, t.rep)?;
                Ok(run_learner_trial(
                    &data, t.learner, t.source, &t.scenario, cfg, t.rep,
                ))
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }
    records.sort_by(|a, b| {
        (&a.graph, a.d, &a.scenario, &a.learner, a.seed).cmp(&(
            &b.graph,
            b.d,
            &b.scenario,
            &b.learner,
            b.seed,
        ))
    });

    let summary = summarize(&records)?;
    let failed_cells: Vec<String> = summary
        .rows
        .iter()
        .filter(|row| row.trials == row.failures)
        .map(|row| format!("{}|d{}|{}|{}", row.graph, row.d, row.scenario, row.learner))
        .collect();

    write_outputs(cfg, &records, &summary, out_dir)?;
    Ok(BenchReport {
        records,
        summary,
        failed_cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub graph: String,
    pub d: usize,
    pub k: usize,
    pub scenario: String,
    pub learner: String,
    pub trials: usize,
    pub failures: usize,
    pub shd_mean: f64,
    pub shd_std: f64,
    pub sid_mean: f64,
    pub sid_std: f64,
    pub runtime_mean: f64,
    pub runtime_std: f64,
}

impl SummaryRow {
    pub fn shd_fmt(&self) -> String {
        format!("{:.1}\u{b1}{:.1}", self.shd_mean, self.shd_std)
    }
    pub fn sid_fmt(&self) -> String {
        format!("{:.1}\u{b1}{:.1}", self.sid_mean, self.sid_std)
    }
    pub fn runtime_fmt(&self) -> String {
        format!("{:.2}\u{b1}{:.2}", self.runtime_mean, self.runtime_std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

/// Per-cell mean and sample (n-1) standard deviation of SHD, SID, and
/// runtime, in deterministic row order. Failed repetitions are counted
/// separately and excluded from the moments.
pub fn summarize(records: &[EvalRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Parameter("summarize needs at least one record".into()));
    }
    use std::collections::BTreeMap;
    type Key = (String, usize, String, String);
    let mut cells: BTreeMap<Key, Vec<&EvalRecord>> = BTreeMap::new();
    for rec in records {
        cells
            .entry((
                rec.graph.clone(),
                rec.d,
                rec.scenario.clone(),
                rec.learner.clone(),
            ))
            .or_default()
            .push(rec);
    }

    fn mean_std(values: &[f64]) -> (f64, f64) {
        if values.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    let mut rows = Vec::new();
    for ((graph, d, scenario, learner), recs) in cells {
        let ok: Vec<&&EvalRecord> = recs.iter().filter(|r| r.shd.is_some()).collect();
        let failures = recs.len() - ok.len();
        let shd_vals: Vec<f64> = ok.iter().filter_map(|r| r.shd).map(|v| v as f64).collect();
        let sid_vals: Vec<f64> = ok.iter().filter_map(|r| r.sid).map(|v| v as f64).collect();
        let rt_vals: Vec<f64> = ok.iter().filter_map(|r| r.runtime_s).collect();
        let (shd_mean, shd_std) = mean_std(&shd_vals);
        let (sid_mean, sid_std) = mean_std(&sid_vals);
        let (runtime_mean, runtime_std) = mean_std(&rt_vals);
        rows.push(SummaryRow {
            k: recs[0].k,
            graph,
            d,
            scenario,
            learner,
            trials: recs.len(),
            failures,
            shd_mean,
            shd_std,
            sid_mean,
            sid_std,
            runtime_mean,
            runtime_std,
        });
    }
    Ok(Summary { rows })
}

pub fn trials_csv(records: &[EvalRecord], measure_runtime: bool) -> String {
    let mut out = String::from(EvalRecord::CSV_HEADER);
    out.push('\n');
    for rec in records {
        out.push_str(&rec.to_csv_row(measure_runtime));
        out.push('\n');
    }
    out
}

pub fn aggregate_csv(summary: &Summary, measure_runtime: bool) -> String {
    let mut out = String::from(
        "graph,d,k,scenario,learner,trials,failures,shd_mean,shd_std,sid_mean,sid_std,runtime_mean,runtime_std\n",
    );
    for r in &summary.rows {
        let (rm, rs) = if measure_runtime {
            (r.runtime_mean, r.runtime_std)
        } else {
            (0.0, 0.0)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.6},{:.6}",
            r.graph,
            r.d,
            r.k,
            r.scenario,
            r.learner,
            r.trials,
            r.failures,
            r.shd_mean,
            r.shd_std,
            r.sid_mean,
            r.sid_std,
            rm,
            rs
        );
    }
    out
}

pub fn aggregate_markdown(summary: &Summary, measure_runtime: bool) -> String {
    let mut out = String::new();
    out.push_str("| graph | d | scenario | learner | SHD | SID | runtime (s) | failures |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in &summary.rows {
        let rt = if measure_runtime {
            r.runtime_fmt()
        } else {
            "-".to_string()
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            r.graph,
            r.d,
            r.scenario,
            r.learner,
            r.shd_fmt(),
            r.sid_fmt(),
            rt,
            r.failures
        );
    }
    out
}

pub fn aggregate_json(summary: &Summary, measure_runtime: bool) -> String {
    let rows: Vec<serde_json::Value> = summary
        .rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "graph": r.graph,
                "d": r.d,
                "k": r.k,
                "scenario": r.scenario,
                "learner": r.learner,
                "trials": r.trials,
                "failures": r.failures,
                "shd": {"mean": r.shd_mean, "std": r.shd_std},
                "sid": {"mean": r.sid_mean, "std": r.sid_std},
                "runtime_s": if measure_runtime {
                    serde_json::json!({"mean": r.runtime_mean, "std": r.runtime_std})
                } else {
                    serde_json::Value::Null
                },
            })
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("serializable")
}

fn write_outputs(
    cfg: &BenchConfig,
    records: &[EvalRecord],
    summary: &Summary,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("trials.csv"), trials_csv(records, cfg.measure_runtime))?;
    std::fs::write(
        out_dir.join("aggregate.csv"),
        aggregate_csv(summary, cfg.measure_runtime),
    )?;
    std::fs::write(
        out_dir.join("aggregate.md"),
        aggregate_markdown(summary, cfg.measure_runtime),
    )?;
    std::fs::write(
        out_dir.join("aggregate.json"),
        aggregate_json(summary, cfg.measure_runtime),
    )?;
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(())
}

/// The bundled consensus ground truth for the Sachs dataset: 11 nodes, 17
/// edges.
pub fn sachs_truth() -> Dag {
    Dag::from_edge_list(include_str!("../assets/sachs_truth.txt"))
        .expect("bundled asset is well-formed")
}

/// Canonical Sachs column order used by the bundled ground truth.
pub const SACHS_COLUMNS: [&str; 11] = [
    "raf", "mek", "plc", "pip2", "pip3", "erk", "akt", "pka", "pkc", "p38", "jnk",
];

fn sachs_column_index(name: &str) -> Option<usize> {
    let lower = name.trim().to_ascii_lowercase();
    let canonical = match lower.as_str() {
        "raf" | "praf" => "raf",
        "mek" | "pmek" | "mek12" => "mek",
        "plc" | "plcg" | "plcy" => "plc",
        "pip2" => "pip2",
        "pip3" => "pip3",
        "erk" | "p44/42" | "p44.42" | "p4442" => "erk",
        "akt" | "pakts473" | "akts473" | "akt473" => "akt",
        "pka" => "pka",
        "pkc" => "pkc",
        "p38" => "p38",
        "jnk" | "pjnk" => "jnk",
        _ => return None,
    };
    SACHS_COLUMNS.iter().position(|&c| c == canonical)
}

/// Reads the Sachs flow-cytometry CSV (11 named columns) and pairs it with
/// the bundled consensus graph. Known column aliases are reordered to the
/// canonical layout; unknown headers are accepted positionally.
pub fn load_sachs(path: &Path) -> Result<(Dataset, Dag)> {
    let text = std::fs::read_to_string(path)?;
    load_sachs_str(&text)
}

pub fn load_sachs_str(text: &str) -> Result<(Dataset, Dag)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty Sachs file".into()))?;
    let sep = if header.contains('\t') { '\t' } else { ',' };
    let names: Vec<&str> = header.split(sep).map(|s| s.trim()).collect();
    if names.len() != 11 {
        return Err(Error::Format(format!(
            "Sachs data must have 11 columns, header has {}",
            names.len()
        )));
    }
    // Column mapping: position in file -> canonical index.
    let mapping: Vec<usize> = {
        let resolved: Vec<Option<usize>> =
            names.iter().map(|n| sachs_column_index(n)).collect();
        if resolved.iter().all(|r| r.is_some()) {
            let mut m: Vec<usize> = resolved.into_iter().map(|r| r.unwrap()).collect();
            let mut sorted = m.clone();
            sorted.sort_unstable();
            if sorted != (0..11).collect::<Vec<_>>() {
                return Err(Error::Format("duplicate Sachs column names".into()));
            }
            std::mem::take(&mut m)
        } else {
            (0..11).collect()
        }
    };

    let mut rows: Vec<[f64; 11]> = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(sep).map(|s| s.trim()).collect();
        if cells.len() != 11 {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected 11",
                lineno + 1,
                cells.len()
            )));
        }
        let mut row = [0.0f64; 11];
        for (pos, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::Format(format!("row {}: unparseable value {cell:?}", lineno + 1))
            })?;
            if !value.is_finite() {
                return Err(Error::Format(format!(
                    "row {}: non-finite value {cell:?}",
                    lineno + 1
                )));
            }
            row[mapping[pos]] = value;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("Sachs file has a header but no data rows".into()));
    }
    let mut x = ndarray::Array2::zeros((rows.len(), 11));
    for (r, row) in rows.iter().enumerate() {
        for c in 0..11 {
            x[[r, c]] = row[c];
        }
    }
    let truth = sachs_truth();
    let ds = Dataset::new(
        x,
        DatasetMeta {
            scenario: "sachs".into(),
            seed: 0,
            scm_desc: "real-world flow cytometry (Sachs et al. 2005)".into(),
            truth: truth.clone(),
        },
    )?;
    Ok((ds, truth))
}

/// Evaluates every configured learner on a single fixed dataset (oracle grid
/// selection against the given truth) and writes the same report files.
pub fn run_single_dataset(
    data: &Dataset,
    label: &str,
    cfg: &BenchConfig,
    out_dir: &Path,
) -> Result<BenchReport> {
    if cfg.learners.is_empty() {
        return Err(Error::Parameter("config needs at least one learner".into()));
    }
    let source = GraphSource::Fixed {
        label: label.to_string(),
        dag: data.truth().clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
    let mut records: Vec<EvalRecord> = pool.install(|| {
        cfg.learners
            .par_iter()
            .map(|learner| {
                run_learner_trial(data, learner, &source, &data.meta().scenario, cfg, 0)
            })
            .collect()
    });
    records.sort_by(|a, b| a.learner.cmp(&b.learner));
    let summary = summarize(&records)?;
    let failed_cells: Vec<String> = summary
        .rows
        .iter()
        .filter(|row| row.trials == row.failures)
        .map(|row| format!("{}|{}", row.graph, row.learner))
        .collect();
    write_outputs(cfg, &records, &summary, out_dir)?;
    Ok(BenchReport {
        records,
        summary,
        failed_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Method;

    fn tiny_config() -> BenchConfig {
        BenchConfig {
            graphs: vec![GraphSpec {
                family: GraphFamily::Er,
                degree: 2,
                d: 5,
            }],
            scenarios: vec![vec![ScenarioSpec::Vanilla], vec![ScenarioSpec::ScaleVariant]],
            learners: vec![
                LearnerSpec::new(Method::Random),
                LearnerSpec {
                    lambda1: Some(0.05),
                    ..LearnerSpec::new(Method::VarSortnRegress)
                },
            ],
            n: 200,
            reps: 2,
            seed: 7,
            jobs: 1,
            noise: NoiseDist::Gaussian,
            measure_runtime: false,
            trace: false,
        }
    }

    #[test]
    fn summarize_single_and_triple() {
        let mk = |seed: u64, shd: usize| EvalRecord {
            graph: "ER-2".into(),
            d: 10,
            k: 2,
            scenario: "vanilla".into(),
            learner: "random".into(),
            seed,
            lambda1: None,
            shd: Some(shd),
            sid: Some(0),
            runtime_s: Some(0.0),
            converged: true,
        };
        let s = summarize(&[mk(0, 4)]).unwrap();
        assert_eq!(s.rows[0].shd_std, 0.0);

        let s = summarize(&[mk(0, 1), mk(1, 2), mk(2, 3)]).unwrap();
        assert_eq!(s.rows[0].shd_fmt(), "2.0\u{b1}1.0");
    }

    #[test]
    fn summarize_reports_failures_separately() {
        let ok = EvalRecord {
            graph: "ER-2".into(),
            d: 10,
            k: 2,
            scenario: "vanilla".into(),
            learner: "notears".into(),
            seed: 0,
            lambda1: Some(0.05),
            shd: Some(2),
            sid: Some(3),
            runtime_s: Some(0.5),
            converged: true,
        };
        let failed = EvalRecord {
            seed: 1,
            lambda1: None,
            shd: None,
            sid: None,
            runtime_s: None,
            converged: false,
            ..ok.clone()
        };
        let s = summarize(&[ok, failed]).unwrap();
        assert_eq!(s.rows[0].trials, 2);
        assert_eq!(s.rows[0].failures, 1);
        assert_eq!(s.rows[0].shd_mean, 2.0);
    }

    #[test]
    fn tiny_benchmark_runs_and_is_deterministic() {
        let dir1 = std::env::temp_dir().join("dagbench-test-run1");
        let dir2 = std::env::temp_dir().join("dagbench-test-run2");
        let cfg = tiny_config();
        let report1 = run_benchmark(&cfg, &dir1).unwrap();
        let _report2 = run_benchmark(&cfg, &dir2).unwrap();
        assert!(report1.failed_cells.is_empty());
        // 1 graph x 2 scenarios x 2 learners x 2 reps
        assert_eq!(report1.records.len(), 8);
        let csv1 = std::fs::read_to_string(dir1.join("trials.csv")).unwrap();
        let csv2 = std::fs::read_to_string(dir2.join("trials.csv")).unwrap();
        assert_eq!(csv1, csv2, "rerun must be byte-identical");
        assert!(csv1.starts_with(EvalRecord::CSV_HEADER));
        for dir in [dir1, dir2] {
            let _ = std::fs::remove_dir_all(dir);
        }
    }

    #[test]
    fn results_do_not_depend_on_parallelism_degree() {
        let dir1 = std::env::temp_dir().join("dagbench-test-jobs1");
        let dir2 = std::env::temp_dir().join("dagbench-test-jobs2");
        let mut cfg = tiny_config();
        cfg.jobs = 1;
        let r1 = run_benchmark(&cfg, &dir1).unwrap();
        cfg.jobs = 2;
        let r2 = run_benchmark(&cfg, &dir2).unwrap();
        assert_eq!(r1.records, r2.records);
        for dir in [dir1, dir2] {
            let _ = std::fs::remove_dir_all(dir);
        }
    }

    #[test]
    fn adding_cells_never_perturbs_existing_trials() {
        let dir1 = std::env::temp_dir().join("dagbench-test-grow1");
        let dir2 = std::env::temp_dir().join("dagbench-test-grow2");
        let cfg = tiny_config();
        let base = run_benchmark(&cfg, &dir1).unwrap();
        let mut grown = cfg.clone();
        grown.scenarios.push(vec![ScenarioSpec::Unfaithful]);
        grown.learners.push(LearnerSpec {
            lambda1: Some(0.05),
            ..LearnerSpec::new(Method::R2SortnRegress)
        });
        let bigger = run_benchmark(&grown, &dir2).unwrap();
        for rec in &base.records {
            assert!(
                bigger.records.contains(rec),
                "record from the smaller run disappeared or changed: {rec:?}"
            );
        }
        for dir in [dir1, dir2] {
            let _ = std::fs::remove_dir_all(dir);
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = tiny_config();
        cfg.reps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.n = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.learners.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sachs_truth_matches_published_shape() {
        let truth = sachs_truth();
        assert_eq!(truth.d(), 11);
        assert_eq!(truth.edge_count(), 17);
    }

    #[test]
    fn load_sachs_parses_and_validates() {
        // A correctly shaped fixture with alias headers.
        let mut text = String::from(
            "praf,pmek,plcg,PIP2,PIP3,p44/42,pakts473,PKA,PKC,P38,pjnk\n",
        );
        for r in 0..5 {
            let row: Vec<String> = (0..11).map(|c| format!("{}.5", r + c)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let (ds, truth) = load_sachs_str(&text).unwrap();
        assert_eq!(ds.n(), 5);
        assert_eq!(ds.d(), 11);
        assert_eq!(truth.edge_count(), 17);

        assert!(load_sachs_str("").is_err());
        assert!(load_sachs_str("a,b,c\n1,2,3\n").is_err());
        let bad_row = "praf,pmek,plcg,PIP2,PIP3,p44/42,pakts473,PKA,PKC,P38,pjnk\n1,2\n";
        match load_sachs_str(bad_row) {
            Err(Error::Format(msg)) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("expected a format error naming the row, got {other:?}"),
        }
    }

    #[test]
    fn grid_mode_never_loses_to_a_fixed_lambda() {
        let cfg = tiny_config();
        let source = GraphSource::Random(cfg.graphs[0]);
        let specs = vec![ScenarioSpec::Vanilla];
        let data = trial_dataset(&source, &specs, &cfg, 0).unwrap();

        let grid_spec = LearnerSpec {
            lambda1: None, // grid mode
            ..LearnerSpec::new(Method::VarSortnRegress)
        };
        let grid_rec = run_learner_trial(&data, &grid_spec, &source, "vanilla", &cfg, 0);
        for lambda1 in LAMBDA1_GRID {
            let fixed = LearnerSpec {
                lambda1: Some(lambda1),
                ..LearnerSpec::new(Method::VarSortnRegress)
            };
            let fixed_rec = run_learner_trial(&data, &fixed, &source, "vanilla", &cfg, 0);
            assert!(
                grid_rec.shd.unwrap() <= fixed_rec.shd.unwrap(),
                "grid pick lost to lambda1 = {lambda1}"
            );
        }
    }
}
