//! Command-line surface: `analyze`, `simulate`, `sweep` and `bench`.
//!
//! Structured settings come from a JSON config file; flags carry only
//! paths and the seed. Every float written to JSON or CSV is rounded to six
//! significant digits so repeated runs are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bootstrap::{bootstrap_many, fill, BootstrapConfig};
use crate::dataset::{load_csv, FusedDataset, SchemaConfig};
use crate::epsen::SensitivityInputs;
use crate::error::{Error, Result};
use crate::generalize::{fit_sampling_odds, GenMethod, GeneralizationConfig};
use crate::ovb::{table3_procedure, Table3Report};
use crate::regress::PROB_CLAMP;
use crate::sim::{default_q_grid, run_fixed_q, run_q_sweep, MethodMatrix, ScenarioConfig, SensSpec};
use crate::svg::line_chart;
use crate::synthesis::{os_only_bounds, synthesis_bounds, width_ratio, BoundResult, Framework, SynthesisResult};

/// Rounds to 6 significant digits.
pub fn sig6(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

/// CSV cell for a float: shortest representation of the 6-digit rounding.
pub fn fmt6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    format!("{}", sig6(v))
}

/// Rounds every float in a JSON tree to 6 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = serde_json::Number::from_f64(sig6(x)).map_or(Value::Null, Value::Number);
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

fn to_json<T: Serialize>(t: &T) -> Result<String> {
    let mut v = serde_json::to_value(t)?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Hex SHA-256 of the raw config bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Parser)]
#[command(name = "synthbound", version, about = "ATE bounds from a fused randomized trial and observational study")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sensitivity analysis and synthesis bounds on a user CSV.
    Analyze(Paths),
    /// Fixed-q Monte Carlo table for a simulation scenario.
    Simulate(Paths),
    /// Width ratio over a grid of overlap thresholds q.
    Sweep(Paths),
    /// Benchmark procedure choosing between OS-only and synthesis bounds.
    Bench(Paths),
}

#[derive(Debug, Clone, Args)]
pub struct Paths {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Input CSV (analyze and bench).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub schema: SchemaConfig,
    pub framework: Framework,
    #[serde(default = "default_gen")]
    pub generalization: GeneralizationConfig,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
}

fn default_gen() -> GeneralizationConfig {
    GeneralizationConfig::new(GenMethod::Om)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub methods: Option<MethodMatrix>,
    /// Also write replication 0 as data.csv plus hidden.csv.
    #[serde(default)]
    pub export: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub q_grid: Option<Vec<f64>>,
    pub sensitivity: SensSpec,
    #[serde(default = "default_method")]
    pub generalization: GenMethod,
}

fn default_method() -> GenMethod {
    GenMethod::Om
}

#[derive(Debug, Clone, Deserialize)]
pub struct BenchSpec {
    pub covariate: String,
    pub k_a: f64,
    pub k_y: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub schema: SchemaConfig,
    pub benchmarks: Vec<BenchSpec>,
}

#[derive(Debug, Serialize)]
struct Meta {
    seed: u64,
    config_hash: String,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    replicate_failures: usize,
    clamps_applied: usize,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    meta: Meta,
    pub os_only: BoundResult,
    pub synthesis: SynthesisResult,
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table3: Option<Table3Report>,
    diagnostics: Diagnostics,
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, String)> {
    let bytes = fs::read(path)?;
    let cfg = serde_json::from_slice(&bytes)?;
    Ok((cfg, config_hash(&bytes)))
}

fn require_data(p: &Paths) -> Result<&Path> {
    p.data.as_deref().ok_or_else(|| Error::InvalidInput("--data is required for this command".into()))
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn count_clamped(p: &[f64]) -> usize {
    p.iter().filter(|&&v| v <= PROB_CLAMP || v >= 1.0 - PROB_CLAMP).count()
}

fn clamps(data: &FusedDataset, framework: &Framework) -> usize {
    let mut n = 0;
    if matches!(framework, Framework::Epsen { .. }) {
        let mut samples = vec![data.os_sample()];
        if data.n1() > 0 {
            samples.push(data.ineligible_sample());
        }
        for s in &samples {
            n += SensitivityInputs::fit(s).map_or(0, |i| count_clamped(&i.e));
        }
    }
    if data.n0() > 0 {
        if let Ok(o) = fit_sampling_odds(&data.rct_sample(), &data.eligible_sample()) {
            n += count_clamped(&o.model.fitted_values);
        }
    }
    n
}

pub fn analyze(data: &FusedDataset, cfg: &AnalyzeConfig, seed: u64, config_hash: String) -> Result<AnalyzeReport> {
    cfg.generalization.validate()?;
    let mut os_only = os_only_bounds(data, &cfg.framework)?;
    let mut synthesis = synthesis_bounds(data, &cfg.framework, &cfg.generalization)?;
    let table3 = match &cfg.framework {
        Framework::Benchmark { covariate, k_a, k_y } => Some(table3_procedure(data, covariate, *k_a, *k_y)?),
        _ => None,
    };
    let mut failures = 0;
    if let Some(b) = cfg.bootstrap {
        let b = BootstrapConfig { seed, ..b };
        let s = bootstrap_many(
            data,
            |d| {
                let o = os_only_bounds(d, &cfg.framework)?;
                let c = synthesis_bounds(d, &cfg.framework, &cfg.generalization)?.combined;
                Ok(vec![o.lower, o.upper, c.lower, c.upper])
            },
            &b,
        )?;
        fill(&mut os_only, &s, 0, 1);
        fill(&mut synthesis.combined, &s, 2, 3);
        failures = s.failures;
    }
    Ok(AnalyzeReport {
        meta: Meta { seed, config_hash },
        ratio: width_ratio(&synthesis.combined, &os_only).ok(),
        os_only,
        synthesis,
        table3,
        diagnostics: Diagnostics { replicate_failures: failures, clamps_applied: clamps(data, &cfg.framework) },
    })
}

pub fn cmd_analyze(p: &Paths) -> Result<()> {
    let (cfg, hash): (AnalyzeConfig, _) = read_config(&p.config)?;
    let data = load_csv(require_data(p)?, &cfg.schema)?;
    let seed = p.seed.or(cfg.bootstrap.map(|b| b.seed)).unwrap_or(0);
    let report = analyze(&data, &cfg, seed, hash)?;
    write(p.out.join("results.json"), &to_json(&report)?)
}

pub fn cmd_simulate(p: &Paths) -> Result<()> {
    let (cfg, hash): (SimulateConfig, _) = read_config(&p.config)?;
    let scenario = ScenarioConfig { seed: p.seed.unwrap_or(cfg.scenario.seed), ..cfg.scenario };
    let matrix = cfg.methods.clone().unwrap_or_else(|| MethodMatrix::default_for(scenario.scenario));
    let table = run_fixed_q(&scenario, &matrix)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write(p.out.join("table.csv"), &String::from_utf8_lossy(&csv))?;
    let doc = json!({
        "meta": Meta { seed: scenario.seed, config_hash: hash },
        "config": scenario,
        "cells": table.cells,
        "generation_failures": table.generation_failures,
    });
    write(p.out.join("table.json"), &to_json(&doc)?)?;
    if cfg.export {
        let g = crate::sim::generate(&scenario, 0)?;
        g.export(&p.out.join("data.csv"), &p.out.join("hidden.csv"))?;
    }
    Ok(())
}

pub fn cmd_sweep(p: &Paths) -> Result<()> {
    let (cfg, hash): (SweepConfig, _) = read_config(&p.config)?;
    let scenario = ScenarioConfig { seed: p.seed.unwrap_or(cfg.scenario.seed), ..cfg.scenario };
    let grid = cfg.q_grid.clone().unwrap_or_else(default_q_grid);
    let points = run_q_sweep(&scenario, &grid, &cfg.sensitivity, cfg.generalization)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["q", "ratio", "sd", "valid", "missing"])?;
    for pt in &points {
        w.write_record([fmt6(pt.q), fmt6(pt.ratio), fmt6(pt.sd), pt.valid.to_string(), pt.missing.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write(p.out.join("ratio.csv"), &String::from_utf8_lossy(&bytes))?;
    let series: Vec<(f64, f64)> = points.iter().filter(|p| p.ratio.is_finite()).map(|p| (p.q, p.ratio)).collect();
    write(p.out.join("ratio.svg"), &line_chart(&series, "q", "ratio", "Bound width ratio, synthesis / OS only"))?;
    let doc = json!({
        "meta": Meta { seed: scenario.seed, config_hash: hash },
        "sensitivity": cfg.sensitivity.label(),
        "generalization": cfg.generalization.name(),
        "points": points,
    });
    write(p.out.join("sweep.json"), &to_json(&doc)?)
}

pub fn cmd_bench(p: &Paths) -> Result<()> {
    let (cfg, hash): (BenchConfig, _) = read_config(&p.config)?;
    if cfg.benchmarks.is_empty() {
        return Err(Error::InvalidInput("at least one benchmark covariate is required".into()));
    }
    let data = load_csv(require_data(p)?, &cfg.schema)?;
    let reports = cfg
        .benchmarks
        .iter()
        .map(|b| table3_procedure(&data, &b.covariate, b.k_a, b.k_y))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["covariate", "k_a", "k_y", "r2_a_os", "r2_y_os", "r2_a_sub", "r2_y_sub"])?;
    for (b, r) in cfg.benchmarks.iter().zip(&reports) {
        let sub = r.sub.map(|s| (fmt6(s.r2_a), fmt6(s.r2_y))).unwrap_or_default();
        w.write_record([
            b.covariate.clone(),
            fmt6(b.k_a),
            fmt6(b.k_y),
            fmt6(r.os.r2_a),
            fmt6(r.os.r2_y),
            sub.0,
            sub.1,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write(p.out.join("strengths.csv"), &String::from_utf8_lossy(&bytes))?;
    let doc = json!({
        "meta": Meta { seed: p.seed.unwrap_or(0), config_hash: hash },
        "reports": reports,
    });
    write(p.out.join("bench.json"), &to_json(&doc)?)
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

pub fn error_json(e: &Error) -> String {
    let mut s = serde_json::to_string_pretty(&json!({"error": {"kind": e.kind(), "message": e.to_string()}}))
        .expect("serializable");
    s.push('\n');
    s
}

fn dispatch(cmd: &Command) -> Result<()> {
    let p = match cmd {
        Command::Analyze(p) | Command::Simulate(p) | Command::Sweep(p) | Command::Bench(p) => p,
    };
    if !p.config.exists() {
        return Err(Error::InvalidInput(format!("config file {} does not exist", p.config.display())));
    }
    if let Some(d) = &p.data {
        if !d.exists() {
            return Err(Error::InvalidInput(format!("data file {} does not exist", d.display())));
        }
    }
    fs::create_dir_all(&p.out)?;
    match cmd {
        Command::Analyze(p) => cmd_analyze(p),
        Command::Simulate(p) => cmd_simulate(p),
        Command::Sweep(p) => cmd_sweep(p),
        Command::Bench(p) => cmd_bench(p),
    }
}

/// Runs a parsed command; on failure prints error JSON to stderr, also
/// writes it to `error.json` in the output directory, and returns the exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    match dispatch(&cfg.command) {
        Ok(()) => 0,
        Err(e) => {
            let body = error_json(&e);
            eprint!("{body}");
            let out = match &cfg.command {
                Command::Analyze(p) | Command::Simulate(p) | Command::Sweep(p) | Command::Bench(p) => &p.out,
            };
            if fs::create_dir_all(out).is_ok() {
                let _ = fs::write(out.join("error.json"), &body);
            }
            exit_code(&e)
        }
    }
}
