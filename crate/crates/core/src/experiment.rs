//! Config-driven runs: matrix creation, training, evaluation and report
//! files.
//!
//! A matrices directory holds `train.gowm`/`test.gowm` (centralized) or
//! `train_<id>.gowm`/`test_<id>.gowm` per agent (federated), each with its
//! `.gowl` label sidecar, plus `matrices.json`. A run directory holds
//! `config.json`, `manifest.json`, `summary.json`, `model.gown` and the CSV
//! histories and metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::centralized::{self, GcConfig, TrainHistory};
use crate::data::{self, FeatureSchema, InstanceTable};
use crate::error::{Error, Result};
use crate::federated::{self, AgentMatrices, GfConfig, GfOutcome};
use crate::gower::{required_bytes, GowerEngine, GowerMatrix};
use crate::matrix_io;
use crate::metrics::{lower_median, median_pr_point, MetricsReport, PrPoint};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RunConfig {
    Gc(GcConfig),
    Gf(GfConfig),
}

impl RunConfig {
    pub fn run_name(&self) -> &str {
        match self {
            RunConfig::Gc(c) => &c.run_name,
            RunConfig::Gf(c) => &c.run_name,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Gc(c) => c.seed,
            RunConfig::Gf(c) => c.seed,
        }
    }

    pub fn balanced(&self) -> bool {
        match self {
            RunConfig::Gc(c) => c.balance_dataset,
            RunConfig::Gf(c) => c.balance_dataset,
        }
    }
}

/// Parses a flat JSON config. The presence of `node_number` selects the
/// federated schema; unknown keys are rejected.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    let config = if obj.contains_key("node_number") {
        let c: GfConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        RunConfig::Gf(c)
    } else {
        let c: GcConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        RunConfig::Gc(c)
    };
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixMode {
    Cnl,
    Fl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Gc,
    Gf,
    GfAm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixShape {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub mode: MatrixMode,
    pub run_name: String,
    pub seed: u64,
    /// Shared column count; `M` in federated mode.
    pub width: usize,
    pub agents: usize,
    pub matrices: Vec<MatrixShape>,
    pub source_digest: String,
    pub tool_version: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Where the flow records come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Csv { data: PathBuf, schema: PathBuf },
    Synthetic { rows: usize, seed: u64 },
}

impl DataSource {
    fn load(&self) -> Result<(InstanceTable, String)> {
        match self {
            DataSource::Csv { data, schema } => {
                let schema_def = FeatureSchema::from_json_path(schema)?;
                let table = data::load_csv(data, &schema_def)?;
                let digest = sha256_hex(
                    format!("{}:{}", file_digest(data)?, file_digest(schema)?).as_bytes(),
                );
                Ok((table, digest))
            }
            DataSource::Synthetic { rows, seed } => {
                let text = crate::synth::synth_csv(*rows, *seed);
                let table = data::parse_csv(&text, &crate::synth::schema())?;
                Ok((table, sha256_hex(text.as_bytes())))
            }
        }
    }
}

fn maybe_balance(table: InstanceTable, balanced: bool, seed: u64) -> Result<InstanceTable> {
    if balanced {
        data::balance(&table, seed)
    } else {
        Ok(table)
    }
}

/// Centralized matrices: `k x k` training block and `l x k` test block.
pub fn build_cnl_matrices(
    table: &InstanceTable,
    config: &GcConfig,
    engine: &GowerEngine,
) -> Result<(GowerMatrix, GowerMatrix)> {
    let table = maybe_balance(table.clone(), config.balance_dataset, config.seed)?;
    let (train, test) = data::shuffle_split(
        &table,
        config.training_dataset_size,
        config.test_dataset_size,
        config.seed,
    )?;
    let k = train.len();
    let required = required_bytes(k, k) + required_bytes(test.len(), k);
    if required > engine.memory_cap {
        return Err(Error::MemoryBudget {
            required,
            cap: engine.memory_cap,
        });
    }
    let train_m = engine.matrix(&train)?;
    let test_m = engine.sliced_matrix_limit_cols(&train.concat(&test)?, k, k)?;
    Ok((train_m, test_m))
}

/// Deals the configured train+test rows across agents.
pub fn partition_for(table: &InstanceTable, config: &GfConfig) -> Result<data::Partition> {
    let table = maybe_balance(table.clone(), config.balance_dataset, config.seed)?;
    let total = config.training_dataset_size + config.test_dataset_size;
    let (subset, _) = data::shuffle_split(&table, total, 0, config.seed)?;
    let fraction = config.training_dataset_size as f64 / total as f64;
    data::partition_agents(&subset, config.node_number, fraction, config.seed)
}

/// Per-agent matrices, all `min_train` columns wide, with each agent's
/// ranges taken from its own training rows.
pub fn build_agent_matrices(partition: &data::Partition, engine: &GowerEngine) -> Result<Vec<AgentMatrices>> {
    let width = partition.min_train;
    let required: u64 = partition
        .agents
        .iter()
        .map(|a| required_bytes(a.train.len(), width) + required_bytes(a.test.len(), width))
        .sum();
    if required > engine.memory_cap {
        return Err(Error::MemoryBudget {
            required,
            cap: engine.memory_cap,
        });
    }
    partition
        .agents
        .iter()
        .map(|a| {
            if a.test.is_empty() {
                return Err(Error::Data(format!("agent {} has no test rows", a.agent_id)));
            }
            Ok(AgentMatrices {
                agent_id: a.agent_id,
                train: engine.matrix_limit_cols(&a.train, width)?,
                test: engine.sliced_matrix_limit_cols(&a.train.concat(&a.test)?, a.train.len(), width)?,
            })
        })
        .collect()
}

pub fn agent_train_file(id: usize) -> String {
    format!("train_{id}.gowm")
}

pub fn agent_test_file(id: usize) -> String {
    format!("test_{id}.gowm")
}

pub fn create_matrices(
    mode: MatrixMode,
    source: &DataSource,
    config: &RunConfig,
    out_dir: &Path,
    engine: &GowerEngine,
) -> Result<MatrixManifest> {
    let (table, source_digest) = source.load()?;
    ensure_dir(out_dir)?;
    let mut shapes = Vec::new();
    let mut save = |name: String, m: &GowerMatrix| -> Result<()> {
        matrix_io::save_matrix(&out_dir.join(&name), m)?;
        shapes.push(MatrixShape {
            file: name,
            rows: m.rows(),
            cols: m.cols(),
        });
        Ok(())
    };
    let (width, agents) = match (mode, config) {
        (MatrixMode::Cnl, RunConfig::Gc(c)) => {
            let (train, test) = build_cnl_matrices(&table, c, engine)?;
            save("train.gowm".into(), &train)?;
            save("test.gowm".into(), &test)?;
            (train.cols(), 1)
        }
        (MatrixMode::Fl, RunConfig::Gf(c)) => {
            let partition = partition_for(&table, c)?;
            let agents = build_agent_matrices(&partition, engine)?;
            for a in &agents {
                save(agent_train_file(a.agent_id), &a.train)?;
                save(agent_test_file(a.agent_id), &a.test)?;
            }
            (partition.min_train, agents.len())
        }
        (MatrixMode::Cnl, _) => {
            return Err(Error::Config("cnl matrices need a centralized config".into()))
        }
        (MatrixMode::Fl, _) => {
            return Err(Error::Config("fl matrices need a federated config".into()))
        }
    };
    let manifest = MatrixManifest {
        mode,
        run_name: config.run_name().to_string(),
        seed: config.seed(),
        width,
        agents,
        matrices: shapes,
        source_digest,
        tool_version: TOOL_VERSION.to_string(),
    };
    write_json(&out_dir.join("matrices.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub auc: f64,
}

impl Headline {
    fn from_report(r: &MetricsReport) -> Self {
        Self {
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            fpr: r.fpr,
            auc: r.auc,
        }
    }

    /// Per-metric lower median.
    fn median(reports: &[MetricsReport]) -> Option<Self> {
        let m = |f: fn(&MetricsReport) -> f64| lower_median(&reports.iter().map(f).collect::<Vec<_>>());
        Some(Self {
            accuracy: m(|r| r.accuracy)?,
            precision: m(|r| r.precision)?,
            recall: m(|r| r.recall)?,
            f1: m(|r| r.f1)?,
            fpr: m(|r| r.fpr)?,
            auc: m(|r| r.auc)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_name: String,
    pub mode: TrainMode,
    pub input_width: usize,
    /// GC: held-out test metrics. GF: lower median across agents.
    pub headline: Headline,
    pub pr_point: PrPoint,
    /// Epochs (GC) or rounds (GF) actually run.
    pub steps_run: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_counts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_counts: Option<Vec<usize>>,
    pub agents: Vec<AgentRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub agent_id: usize,
    pub n_train: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_name: String,
    pub mode: TrainMode,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ids(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn loss_history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in &history.epochs {
        let _ = writeln!(out, "{},{},{}", e.epoch, e.train_loss, opt(e.val_loss));
    }
    out
}

pub fn round_history_csv(outcome: &GfOutcome) -> String {
    let mut out = String::from("round,agg_train_loss,val_loss,sampled_ids,selected_ids\n");
    for r in &outcome.rounds {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.round,
            opt(r.agg_train_loss),
            opt(r.val_loss),
            ids(&r.sampled),
            ids(&r.selected)
        );
    }
    out
}

fn agent_metrics_csv(rows: &[AgentRow]) -> String {
    let mut out = String::from("agent_id,n_train,accuracy,precision,recall,f1,auc\n");
    for a in rows {
        let m = &a.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            a.agent_id, a.n_train, m.accuracy, m.precision, m.recall, m.f1, m.auc
        );
    }
    out
}

fn pr_space_csv(rows: &[AgentRow]) -> String {
    let mut out = String::from("agent_id,precision,recall\n");
    for a in rows {
        let _ = writeln!(out, "{},{},{}", a.agent_id, a.metrics.precision, a.metrics.recall);
    }
    out
}

fn load_checked(dir: &Path, name: &str, inputs: &mut BTreeMap<String, String>) -> Result<GowerMatrix> {
    let path = dir.join(name);
    let m = matrix_io::load_matrix(&path)?;
    inputs.insert(name.to_string(), file_digest(&path)?);
    let labels = path.with_extension("gowl");
    let label_name = labels
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    inputs.insert(label_name, file_digest(&labels)?);
    Ok(m)
}

fn read_matrix_manifest(dir: &Path) -> Result<Option<MatrixManifest>> {
    let path = dir.join("matrices.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Format(format!("matrices.json: {e}")))
}

/// Everything a run produces before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub model: crate::nn::ModelParameters,
    pub history_csv: (String, String),
}

pub fn run_gc_on(config: &GcConfig, train: &GowerMatrix, test_full: &GowerMatrix) -> Result<RunOutput> {
    if train.cols() != test_full.cols() {
        return Err(Error::Shape(format!(
            "train width {} differs from test width {}",
            train.cols(),
            test_full.cols()
        )));
    }
    // first half validation, second half held-out test
    let (val, test) = test_full.split_rows(test_full.rows() / 2);
    let (model, history) = centralized::train_gc(config, train, &val)?;
    let report = centralized::evaluate(&model, &test)?;
    let agents = vec![AgentRow {
        agent_id: 0,
        n_train: train.rows(),
        metrics: report.clone(),
    }];
    let summary = Summary {
        run_name: config.run_name.clone(),
        mode: TrainMode::Gc,
        input_width: train.cols(),
        headline: Headline::from_report(&report),
        pr_point: report.pr_point,
        steps_run: history.stopped_epoch,
        best_epoch: Some(history.best_epoch),
        test_rows: Some(test.rows()),
        validation_rows: Some(val.rows()),
        sampled_counts: None,
        selected_counts: None,
        agents,
        warnings: history.warnings.clone(),
    };
    Ok(RunOutput {
        summary,
        model,
        history_csv: ("loss_history.csv".into(), loss_history_csv(&history)),
    })
}

pub fn run_gf_on(mode: TrainMode, config: &GfConfig, agents: &[AgentMatrices]) -> Result<RunOutput> {
    match (mode, config.attention_proportion) {
        (TrainMode::Gf, Some(p)) if p != 1.0 => {
            return Err(Error::Config(format!(
                "attention_proportion {p} requires mode gf-am"
            )))
        }
        (TrainMode::GfAm, None) => {
            return Err(Error::Config("mode gf-am requires attention_proportion".into()))
        }
        (TrainMode::Gc, _) => return Err(Error::Config("federated config given for gc mode".into())),
        _ => {}
    }
    let outcome = federated::run_gf(config, agents)?;
    let mut sampled = vec![0usize; config.node_number];
    let mut selected = vec![0usize; config.node_number];
    for r in &outcome.rounds {
        r.sampled.iter().for_each(|&i| sampled[i] += 1);
        r.selected.iter().for_each(|&i| selected[i] += 1);
    }
    let reports: Vec<MetricsReport> = outcome.agent_metrics.iter().map(|a| a.report.clone()).collect();
    let headline = Headline::median(&reports).ok_or_else(|| Error::Data("no agents".into()))?;
    let pr_point = median_pr_point(&reports).ok_or_else(|| Error::Data("no agents".into()))?;
    let agent_rows = outcome
        .agent_metrics
        .iter()
        .map(|a| AgentRow {
            agent_id: a.agent_id,
            n_train: a.n_train,
            metrics: a.report.clone(),
        })
        .collect();
    let summary = Summary {
        run_name: config.run_name.clone(),
        mode,
        input_width: agents[0].train.cols(),
        headline,
        pr_point,
        steps_run: outcome.rounds.len(),
        best_epoch: None,
        test_rows: None,
        validation_rows: None,
        sampled_counts: Some(sampled),
        selected_counts: Some(selected),
        agents: agent_rows,
        warnings: Vec::new(),
    };
    Ok(RunOutput {
        summary,
        model: outcome.global.clone(),
        history_csv: ("round_history.csv".into(), round_history_csv(&outcome)),
    })
}

fn write_run(out_dir: &Path, output: &RunOutput, config: &RunConfig, inputs: BTreeMap<String, String>, started: Instant) -> Result<RunManifest> {
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("config.json"), config)?;
    write_text(&out_dir.join(&output.history_csv.0), &output.history_csv.1)?;
    write_text(&out_dir.join("agent_metrics.csv"), &agent_metrics_csv(&output.summary.agents))?;
    write_text(&out_dir.join("pr_space.csv"), &pr_space_csv(&output.summary.agents))?;
    write_json(&out_dir.join("summary.json"), &output.summary)?;
    matrix_io::save_model(&out_dir.join("model.gown"), &output.model)?;
    let manifest = RunManifest {
        run_name: output.summary.run_name.clone(),
        mode: output.summary.mode,
        config: serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
        inputs,
        tool_version: TOOL_VERSION.to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads the matrices for `mode`, trains, evaluates and writes the run
/// directory.
pub fn run_experiment(mode: TrainMode, config: &RunConfig, matrices_dir: &Path, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let expected = match mode {
        TrainMode::Gc => MatrixMode::Cnl,
        TrainMode::Gf | TrainMode::GfAm => MatrixMode::Fl,
    };
    if let Some(m) = read_matrix_manifest(matrices_dir)? {
        if m.mode != expected {
            return Err(Error::Config(format!(
                "matrices were built in {:?} mode but training mode is {mode:?}",
                m.mode
            )));
        }
    }
    let mut inputs = BTreeMap::new();
    let output = match (mode, config) {
        (TrainMode::Gc, RunConfig::Gc(c)) => {
            let train = load_checked(matrices_dir, "train.gowm", &mut inputs)?;
            let test = load_checked(matrices_dir, "test.gowm", &mut inputs)?;
            run_gc_on(c, &train, &test)?
        }
        (TrainMode::Gf | TrainMode::GfAm, RunConfig::Gf(c)) => {
            let agents = (0..c.node_number)
                .map(|id| {
                    Ok(AgentMatrices {
                        agent_id: id,
                        train: load_checked(matrices_dir, &agent_train_file(id), &mut inputs)?,
                        test: load_checked(matrices_dir, &agent_test_file(id), &mut inputs)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            run_gf_on(mode, c, &agents)?
        }
        (TrainMode::Gc, _) => return Err(Error::Config("gc mode needs a centralized config".into())),
        _ => return Err(Error::Config("gf modes need a federated config".into())),
    };
    write_run(out_dir, &output, config, inputs, started)
}

/// Reads one of our own CSV files, skipping `#` comment lines.
fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

fn project(header: &[String], rows: &[Vec<String>], cols: &[&str]) -> Result<Vec<Vec<String>>> {
    let idx = cols
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::Format(format!("missing column {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows
        .iter()
        .map(|r| idx.iter().map(|&i| r.get(i).cloned().unwrap_or_default()).collect())
        .collect())
}

fn write_plot_csv(path: &Path, comments: &[&str], header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    write_text(path, &out)
}

/// Writes plot-ready CSVs into a completed run directory.
pub fn emit_plot_data(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let summary_path = run_dir.join("summary.json");
    let history = ["loss_history.csv", "round_history.csv"]
        .into_iter()
        .map(|n| run_dir.join(n))
        .find(|p| p.exists());
    let metrics_path = run_dir.join("agent_metrics.csv");
    let missing: Vec<String> = [
        (summary_path.exists(), "summary.json"),
        (metrics_path.exists(), "agent_metrics.csv"),
        (history.is_some(), "loss_history.csv or round_history.csv"),
    ]
    .into_iter()
    .filter(|(ok, _)| !ok)
    .map(|(_, n)| n.to_string())
    .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "incomplete run directory {}: missing {}",
            run_dir.display(),
            missing.join(", ")
        )));
    }
    let history = history.expect("checked above");

    let (mh, mrows) = read_csv_rows(&metrics_path)?;
    let pr = project(&mh, &mrows, &["agent_id", "precision", "recall"])?;
    let bars_cols = ["agent_id", "accuracy", "precision", "recall", "f1", "auc"];
    let bars = project(&mh, &mrows, &bars_cols)?;
    let (hh, hrows) = read_csv_rows(&history)?;
    let step_col = if hh.iter().any(|h| h == "epoch") { "epoch" } else { "round" };
    let train_col = if step_col == "epoch" { "train_loss" } else { "agg_train_loss" };
    let curves = project(&hh, &hrows, &[step_col, train_col, "val_loss"])?;

    let out = vec![
        run_dir.join("pr_scatter.csv"),
        run_dir.join("loss_curves.csv"),
        run_dir.join("per_agent_bars.csv"),
    ];
    write_plot_csv(
        &out[0],
        &[
            "position of each evaluated model in PR space",
            "agent_id: agent index (0 for a centralized run)",
            "precision, recall: at score threshold 0.5",
        ],
        &["agent_id", "precision", "recall"],
        &pr,
    )?;
    write_plot_csv(
        &out[1],
        &[
            "loss per epoch (centralized) or per averaging round (federated)",
            "step: 1-based epoch or round",
            "train_loss: mean training loss; val_loss: dropout-off validation loss (blank when absent)",
        ],
        &["step", "train_loss", "val_loss"],
        &curves,
    )?;
    write_plot_csv(
        &out[2],
        &[
            "per-agent metrics of the final model on each agent's test matrix",
            "agent_id: agent index; remaining columns are ratios in [0,1]",
        ],
        &bars_cols,
        &bars,
    )?;
    Ok(out)
}
