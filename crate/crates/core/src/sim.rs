//! Data-generating processes for the two simulation scenarios and the
//! Monte Carlo runners (fixed-q tables and q sweeps).
//!
//! The observational study is the whole generated super-population; the
//! trial is the subset selected by the sampling model, re-randomized 1:1.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{CompareOp, EligibilityCriteria, FusedDataset, Rule, Sample, UnitRecord};
use crate::epsen::{EpsilonBox, Estimator};
use crate::error::{Error, Result};
use crate::generalize::{generalize_all, GenEstimates, GenMethod, GeneralizationConfig};
use crate::ovb::{estimate_transform_components, fit_conditional_means, short_regression, transform_r2, R2Box, ShortEstimate, TransformComponents};
use crate::par;
use crate::regress::expit;
use crate::rng::{bernoulli, normal, stream, SimRng};
use crate::synthesis::{population_bounds, synthesize, BoundResult, Framework};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
}

impl Scenario {
    pub fn psi_true(self) -> f64 {
        match self {
            Scenario::I => 40.0,
            Scenario::II => 10.0,
        }
    }

    pub fn covariates(self) -> Vec<String> {
        let p = match self {
            Scenario::I => 5,
            Scenario::II => 3,
        };
        (1..=p).map(|j| format!("x{j}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub q: f64,
    #[serde(default = "default_size")]
    pub super_population_size: usize,
    /// Optional OS subsample size (without replacement).
    #[serde(default)]
    pub os_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub replications: usize,
}

fn default_size() -> usize {
    50_000
}

fn default_reps() -> usize {
    20
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, q: f64) -> Self {
        Self { scenario, q, super_population_size: default_size(), os_size: None, seed: 0, replications: default_reps() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidInput(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if self.super_population_size < 100 {
            return Err(Error::InvalidInput("super-population size must be at least 100".into()));
        }
        if let Some(m) = self.os_size {
            if m < 2 || m > self.super_population_size {
                return Err(Error::InvalidInput("os_size must lie in [2, super_population_size]".into()));
            }
        }
        Ok(())
    }
}

/// Raw-value threshold equivalent to Φ(x) ≤ q for x ~ N(mean, sd²).
pub fn phi_threshold(mean: f64, sd: f64, q: f64) -> f64 {
    if q >= 1.0 {
        return f64::INFINITY;
    }
    Normal::new(mean, sd).expect("valid normal").inverse_cdf(q)
}

pub fn criteria_for(scenario: Scenario, q: f64) -> EligibilityCriteria {
    if q >= 1.0 {
        return EligibilityCriteria::default();
    }
    let rule = |var: &str, t: f64| Rule { var: var.into(), op: CompareOp::Le, threshold: t };
    match scenario {
        Scenario::I => EligibilityCriteria::new(vec![rule("x5", phi_threshold(10.0, 4.0, q))]),
        Scenario::II => {
            let t = phi_threshold(10.0, 2.0, q);
            EligibilityCriteria::new(vec![rule("x2", t), rule("x3", t)])
        }
    }
}

/// Columns never shown to estimators: the unmeasured confounder and the
/// potential outcomes, aligned with the RCT and OS rows of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub u_rct: Vec<f64>,
    pub u_os: Vec<f64>,
    pub y1_rct: Vec<f64>,
    pub y0_rct: Vec<f64>,
    pub y1_os: Vec<f64>,
    pub y0_os: Vec<f64>,
    pub psi_true: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub data: FusedDataset,
    pub hidden: Hidden,
}

struct Unit {
    x: Vec<f64>,
    u: f64,
    eligible: bool,
    selected: bool,
    rct_a: u8,
    rct_y1: f64,
    rct_y0: f64,
    os_a: u8,
    os_y1: f64,
    os_y0: f64,
}

fn draw_unit(scenario: Scenario, thresholds: f64, rng: &mut SimRng) -> Unit {
    match scenario {
        Scenario::I => {
            let x: Vec<f64> = (0..5).map(|_| 10.0 + 4.0 * normal(rng)).collect();
            let u = 10.0 + 3.0 * normal(rng);
            let eligible = x[4] <= thresholds;
            let ps = expit(-3.0 + 0.5 * x[0] - 0.3 * x[1] - 0.5 * x[2] - 0.4 * x[3] + 0.1 * x[4]);
            let selected = bernoulli(rng, ps) && eligible;
            let tau = 4.0 * x[4];
            let base = 1.0 + 1.5 * x[1] + 2.0 * x[2] + 2.0 * x[3] + 0.5 * x[4];
            let rct_a = u8::from(bernoulli(rng, 0.5));
            let e_r = 3.0 * normal(rng);
            let lin = 0.5 * x[0] - 0.5 * x[1] - 0.3 * x[2] + 0.5 * x[3] - 0.3 * x[4] + 0.2 * u;
            let os_a = u8::from(bernoulli(rng, expit(lin)));
            let e_o = 3.0 * normal(rng);
            Unit {
                eligible,
                selected,
                rct_a,
                rct_y1: base + tau + e_r,
                rct_y0: base + e_r,
                os_a,
                os_y1: base + tau + 3.0 * u + e_o,
                os_y0: base + 3.0 * u + e_o,
                x,
                u,
            }
        }
        Scenario::II => {
            let x: Vec<f64> = (0..3).map(|_| 10.0 + 2.0 * normal(rng)).collect();
            let u = 4.0 * normal(rng);
            let eligible = x[1] <= thresholds && x[2] <= thresholds;
            let ps = expit(-2.0 + 0.4 * x[0] - 0.3 * x[1] - 0.5 * x[2]);
            let selected = bernoulli(rng, ps) && eligible;
            let base = 1.0 + x[0] + 1.5 * x[1] + 2.0 * x[2];
            let rct_a = u8::from(bernoulli(rng, 0.5));
            let e_r = normal(rng);
            let lin = 0.5 * x[0] - 0.6 * x[1] + 0.3 * x[2] + 0.5 * u;
            let os_a = u8::from(bernoulli(rng, expit(lin)));
            let e_o = normal(rng);
            Unit {
                eligible,
                selected,
                rct_a,
                rct_y1: base + 10.0 + e_r,
                rct_y0: base + e_r,
                os_a,
                os_y1: base + 10.0 + 0.5 * u + e_o,
                os_y0: base + 0.5 * u + e_o,
                x,
                u,
            }
        }
    }
}

const MAX_RETRIES: u64 = 3;

fn attempt_rng(seed: u64, rep: usize, attempt: u64) -> SimRng {
    stream(seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15), rep as u64)
}

fn generate_once(cfg: &ScenarioConfig, rng: &mut SimRng) -> Result<GeneratedData> {
    let threshold = match cfg.scenario {
        Scenario::I => phi_threshold(10.0, 4.0, cfg.q),
        Scenario::II => phi_threshold(10.0, 2.0, cfg.q),
    };
    let units: Vec<Unit> = (0..cfg.super_population_size).map(|_| draw_unit(cfg.scenario, threshold, rng)).collect();
    let os_idx: Vec<usize> = match cfg.os_size {
        Some(m) if m < units.len() => {
            let mut v = rand::seq::index::sample(rng, units.len(), m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..units.len()).collect(),
    };
    let mut h = Hidden {
        u_rct: Vec::new(),
        u_os: Vec::new(),
        y1_rct: Vec::new(),
        y0_rct: Vec::new(),
        y1_os: Vec::new(),
        y0_os: Vec::new(),
        psi_true: cfg.scenario.psi_true(),
    };
    let mut rct = Vec::new();
    for u in units.iter().filter(|u| u.selected) {
        let y = if u.rct_a == 1 { u.rct_y1 } else { u.rct_y0 };
        rct.push(UnitRecord { y, a: u.rct_a, s: 1, covariates: u.x.clone(), v_star: 0 });
        h.u_rct.push(u.u);
        h.y1_rct.push(u.rct_y1);
        h.y0_rct.push(u.rct_y0);
    }
    let mut os = Vec::with_capacity(os_idx.len());
    for &i in &os_idx {
        let u = &units[i];
        let y = if u.os_a == 1 { u.os_y1 } else { u.os_y0 };
        os.push(UnitRecord { y, a: u.os_a, s: 0, covariates: u.x.clone(), v_star: u8::from(!u.eligible) });
        h.u_os.push(u.u);
        h.y1_os.push(u.os_y1);
        h.y0_os.push(u.os_y0);
    }
    let data = FusedDataset::new(cfg.scenario.covariates(), rct, os, criteria_for(cfg.scenario, cfg.q))?;
    Ok(GeneratedData { data, hidden: h })
}

/// Replication `rep` of the configured scenario. An empty trial or trial arm
/// triggers up to three regenerations with fresh streams.
pub fn generate(cfg: &ScenarioConfig, rep: usize) -> Result<GeneratedData> {
    cfg.validate()?;
    let mut last = None;
    for attempt in 0..=MAX_RETRIES {
        match generate_once(cfg, &mut attempt_rng(cfg.seed, rep, attempt)) {
            Ok(g) => return Ok(g),
            Err(e @ (Error::EmptyArm(_) | Error::EmptySubset(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

pub fn gen_scenario1(cfg: &ScenarioConfig) -> Result<GeneratedData> {
    generate(&ScenarioConfig { scenario: Scenario::I, ..*cfg }, 0)
}

pub fn gen_scenario2(cfg: &ScenarioConfig) -> Result<GeneratedData> {
    generate(&ScenarioConfig { scenario: Scenario::II, ..*cfg }, 0)
}

impl GeneratedData {
    /// Dataset CSV plus a sidecar with the hidden columns (same row order).
    pub fn export(&self, data_path: &Path, sidecar_path: &Path) -> Result<()> {
        self.data.export_csv(data_path)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(sidecar_path)?);
        writeln!(w, "row,s,u,y1,y0")?;
        let h = &self.hidden;
        let rows = h.u_rct.iter().zip(&h.y1_rct).zip(&h.y0_rct).map(|((u, a), b)| (1, u, a, b));
        let os_rows = h.u_os.iter().zip(&h.y1_os).zip(&h.y0_os).map(|((u, a), b)| (0, u, a, b));
        for (k, (s, u, y1, y0)) in rows.chain(os_rows).enumerate() {
            writeln!(w, "{},{s},{u},{y1},{y0}", k + 1)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Conditional means fit with U observed, per sub-population of the OS.
    pub fn transform_components(&self) -> Result<TransformComponents> {
        let os = self.data.os_sample();
        let v: Vec<u8> = self.data.os().iter().map(|r| r.v_star).collect();
        estimate_transform_components(&fit_conditional_means(&os, &self.hidden.u_os, &v)?)
    }
}

/// Sensitivity analysis used in the simulation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SensSpec {
    Epsen { estimator: Estimator, range: EpsilonBox },
    Benchmark { covariate: String, k_a: f64, k_y: f64 },
    /// The same R² box on each sub-population; the OS-level box is its
    /// image under the pooled-R² map with U-observed components.
    Fixed { range: R2Box },
}

impl SensSpec {
    pub fn label(&self) -> String {
        match self {
            SensSpec::Epsen { estimator, .. } => estimator.name().to_string(),
            SensSpec::Benchmark { covariate, .. } => format!("{covariate} bounding"),
            SensSpec::Fixed { .. } => "fixed value bounding".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMatrix {
    pub sensitivity: Vec<SensSpec>,
    pub generalization: Vec<GenMethod>,
}

impl MethodMatrix {
    /// The four ratio-type estimators on [0.9, 1.1]² with OM/IPSW/AIPSW.
    pub fn scenario_one() -> Self {
        let range = EpsilonBox::square(0.9, 1.1).expect("valid box");
        Self {
            sensitivity: Estimator::ALL.iter().map(|&estimator| SensSpec::Epsen { estimator, range }).collect(),
            generalization: GenMethod::ALL.to_vec(),
        }
    }

    /// X1 benchmark (kA = 6, kY = 1) and fixed-value bounding (0.1, 0.8).
    pub fn scenario_two() -> Self {
        Self {
            sensitivity: vec![
                SensSpec::Benchmark { covariate: "x1".into(), k_a: 6.0, k_y: 1.0 },
                SensSpec::Fixed { range: R2Box { a_max: 0.1, y_max: 0.8 } },
            ],
            generalization: GenMethod::ALL.to_vec(),
        }
    }

    pub fn default_for(s: Scenario) -> Self {
        match s {
            Scenario::I => Self::scenario_one(),
            Scenario::II => Self::scenario_two(),
        }
    }
}

/// Endpoints of one replication; `None` marks a failed cell.
#[derive(Debug, Clone, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub n_rct: usize,
    pub p0n: f64,
    pub psi_gen: Option<GenEstimates>,
    /// Per sensitivity spec.
    pub os: Vec<Option<[f64; 2]>>,
    pub bound1: Vec<Option<[f64; 2]>>,
    /// Per sensitivity spec, then per generalization method.
    pub synthesis: Vec<Vec<Option<[f64; 2]>>>,
}

fn endpoints(b: &Result<BoundResult>) -> Option<[f64; 2]> {
    b.as_ref().ok().map(|b| [b.lower, b.upper])
}

struct RepContext<'a> {
    g: &'a GeneratedData,
    os: Sample,
    inel: Sample,
    components: Option<Result<TransformComponents>>,
}

impl RepContext<'_> {
    fn os_bounds(&mut self, spec: &SensSpec) -> Result<BoundResult> {
        match spec {
            SensSpec::Epsen { estimator, range } => {
                population_bounds(&self.os, &Framework::Epsen { estimator: *estimator, range: *range })
            }
            SensSpec::Benchmark { covariate, k_a, k_y } => population_bounds(
                &self.os,
                &Framework::Benchmark { covariate: covariate.clone(), k_a: *k_a, k_y: *k_y },
            ),
            SensSpec::Fixed { range } => {
                let g = self.g;
                let comps = self.components.get_or_insert_with(|| g.transform_components());
                let c = comps.as_ref().map_err(|e| Error::InvalidInput(e.to_string()))?;
                let p = transform_r2(&c.with_points(range.corner(), range.corner()))?;
                let pooled = R2Box::new(p.r2_a, p.r2_y)?;
                ShortEstimate::from_fit(&short_regression(&self.os)?, 1)?.bounds(&pooled)
            }
        }
    }

    fn sub_bounds(&self, spec: &SensSpec) -> Result<BoundResult> {
        let fw = match spec {
            SensSpec::Epsen { estimator, range } => Framework::Epsen { estimator: *estimator, range: *range },
            SensSpec::Benchmark { covariate, k_a, k_y } => {
                Framework::Benchmark { covariate: covariate.clone(), k_a: *k_a, k_y: *k_y }
            }
            SensSpec::Fixed { range } => Framework::Ovb { range: *range },
        };
        population_bounds(&self.inel, &fw)
    }
}

/// Runs every cell of the method matrix on one generated dataset.
pub fn analyze_replication(g: &GeneratedData, matrix: &MethodMatrix, rep: usize) -> RepRecord {
    let d = &g.data;
    let gen = generalize_all(&d.rct_sample(), &d.eligible_sample(), &GeneralizationConfig::new(GenMethod::Om)).ok();
    let mut ctx = RepContext { g, os: d.os_sample(), inel: d.ineligible_sample(), components: None };
    let (p0, p1) = (d.p0n(), d.p1n());
    let mut rec = RepRecord { rep, n_rct: d.n(), p0n: p0, psi_gen: gen, os: vec![], bound1: vec![], synthesis: vec![] };
    for spec in &matrix.sensitivity {
        rec.os.push(endpoints(&ctx.os_bounds(spec)));
        let b1 = if d.n1() == 0 { Ok(BoundResult::point(0.0)) } else { ctx.sub_bounds(spec) };
        rec.bound1.push(endpoints(&b1));
        let row = matrix
            .generalization
            .iter()
            .map(|&m| {
                let psi = gen.map(|e| e.get(m)).filter(|v| v.is_finite())?;
                let b = b1.as_ref().ok()?;
                endpoints(&synthesize(psi, b, p0, p1))
            })
            .collect();
        rec.synthesis.push(row);
    }
    rec
}

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub estimator: String,
    pub gen_method: String,
    pub lb: f64,
    pub ub: f64,
    pub mbw: f64,
    pub sd_lb: f64,
    pub sd_ub: f64,
    pub reps_ok: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedQTable {
    pub config: ScenarioConfig,
    pub cells: Vec<Cell>,
    pub replications: Vec<RepRecord>,
    pub generation_failures: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn cell(estimator: String, gen_method: &str, ends: &[[f64; 2]]) -> Cell {
    let lb: Vec<f64> = ends.iter().map(|e| e[0]).collect();
    let ub: Vec<f64> = ends.iter().map(|e| e[1]).collect();
    let w: Vec<f64> = ends.iter().map(|e| e[1] - e[0]).collect();
    let nan_if_empty = |f: fn(&[f64]) -> f64, v: &[f64]| if v.is_empty() { f64::NAN } else { f(v) };
    Cell {
        estimator,
        gen_method: gen_method.to_string(),
        lb: nan_if_empty(mean, &lb),
        ub: nan_if_empty(mean, &ub),
        mbw: nan_if_empty(mean, &w),
        sd_lb: sd(&lb),
        sd_ub: sd(&ub),
        reps_ok: ends.len(),
    }
}

impl FixedQTable {
    /// Share of replications where the synthesis width is below the OS width.
    pub fn ordering_rate(&self, spec: usize, gen: usize) -> f64 {
        let mut ok = 0;
        let mut total = 0;
        for r in &self.replications {
            if let (Some(o), Some(s)) = (r.os[spec], r.synthesis[spec][gen]) {
                total += 1;
                if s[1] - s[0] < o[1] - o[0] {
                    ok += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            ok as f64 / total as f64
        }
    }

    pub fn find(&self, estimator: &str, gen_method: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.estimator == estimator && c.gen_method == gen_method)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["estimator", "gen_method", "lb", "ub", "mbw", "sd_lb", "sd_ub"])?;
        for c in &self.cells {
            let f = |v: f64| crate::cli::fmt6(v);
            wr.write_record([c.estimator.clone(), c.gen_method.clone(), f(c.lb), f(c.ub), f(c.mbw), f(c.sd_lb), f(c.sd_ub)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub const OS_ONLY: &str = "OS";

fn tabulate(cfg: &ScenarioConfig, matrix: &MethodMatrix, reps: Vec<RepRecord>, failures: usize) -> FixedQTable {
    let mut cells = Vec::new();
    for (k, spec) in matrix.sensitivity.iter().enumerate() {
        let os: Vec<[f64; 2]> = reps.iter().filter_map(|r| r.os[k]).collect();
        cells.push(cell(spec.label(), OS_ONLY, &os));
        for (m, gm) in matrix.generalization.iter().enumerate() {
            let syn: Vec<[f64; 2]> = reps.iter().filter_map(|r| r.synthesis[k][m]).collect();
            cells.push(cell(spec.label(), gm.name(), &syn));
        }
    }
    FixedQTable { config: *cfg, cells, replications: reps, generation_failures: failures }
}

/// Monte Carlo table of mean bounds, mean width and endpoint SDs.
pub fn run_fixed_q(cfg: &ScenarioConfig, matrix: &MethodMatrix) -> Result<FixedQTable> {
    cfg.validate()?;
    let out = par::map_indexed(cfg.replications, |r| generate(cfg, r).map(|g| analyze_replication(&g, matrix, r)));
    finish_fixed_q(cfg, matrix, out)
}

pub fn run_fixed_q_seq(cfg: &ScenarioConfig, matrix: &MethodMatrix) -> Result<FixedQTable> {
    cfg.validate()?;
    let out = par::map_indexed_seq(cfg.replications, |r| generate(cfg, r).map(|g| analyze_replication(&g, matrix, r)));
    finish_fixed_q(cfg, matrix, out)
}

fn finish_fixed_q(cfg: &ScenarioConfig, matrix: &MethodMatrix, out: Vec<Result<RepRecord>>) -> Result<FixedQTable> {
    let total = out.len();
    let reps: Vec<RepRecord> = out.into_iter().filter_map(|r| r.ok()).collect();
    if reps.is_empty() && total > 0 {
        return Err(Error::TooManyFailures { failed: total, total });
    }
    let failures = total - reps.len();
    Ok(tabulate(cfg, matrix, reps, failures))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub q: f64,
    /// Mean width ratio over valid replications; NaN when none.
    pub ratio: f64,
    pub sd: f64,
    pub valid: usize,
    pub missing: usize,
    pub ratios: Vec<Option<f64>>,
}

/// Width ratio synthesis / OS-only for every q on the grid. Common random
/// numbers: replication r uses the same stream at every q.
pub fn run_q_sweep(cfg: &ScenarioConfig, q_grid: &[f64], spec: &SensSpec, gen: GenMethod) -> Result<Vec<SweepPoint>> {
    if q_grid.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::InvalidInput("q grid must lie inside (0, 1)".into()));
    }
    cfg.validate()?;
    let matrix = MethodMatrix { sensitivity: vec![spec.clone()], generalization: vec![gen] };
    let reps = cfg.replications;
    let cells = par::map_indexed(q_grid.len() * reps, |k| {
        let c = ScenarioConfig { q: q_grid[k / reps], ..*cfg };
        let g = generate(&c, k % reps).ok()?;
        let rec = analyze_replication(&g, &matrix, k % reps);
        let (o, s) = (rec.os[0]?, rec.synthesis[0][0]?);
        let wo = o[1] - o[0];
        (wo > 0.0).then(|| (s[1] - s[0]) / wo)
    });
    Ok(q_grid
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let ratios: Vec<Option<f64>> = cells[i * reps..(i + 1) * reps].to_vec();
            let ok: Vec<f64> = ratios.iter().flatten().copied().collect();
            SweepPoint {
                q,
                ratio: if ok.is_empty() { f64::NAN } else { mean(&ok) },
                sd: sd(&ok),
                valid: ok.len(),
                missing: reps - ok.len(),
                ratios,
            }
        })
        .collect())
}

/// The default q grid 0.05, 0.10, ..., 0.95.
pub fn default_q_grid() -> Vec<f64> {
    (1..=19).map(|k| (k as f64 * 0.05 * 100.0).round() / 100.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(s: Scenario, q: f64) -> ScenarioConfig {
        ScenarioConfig { super_population_size: 4000, replications: 2, seed: 3, ..ScenarioConfig::new(s, q) }
    }

    #[test]
    fn true_effects() {
        assert_eq!(Scenario::I.psi_true(), 40.0);
        assert_eq!(Scenario::II.psi_true(), 10.0);
        let g = gen_scenario1(&small(Scenario::I, 0.7)).unwrap();
        assert_eq!(g.hidden.psi_true, 40.0);
    }

    #[test]
    fn q_one_has_no_rules() {
        assert!(criteria_for(Scenario::I, 1.0).rules.is_empty());
        assert!(criteria_for(Scenario::II, 1.0).rules.is_empty());
        let g = gen_scenario1(&small(Scenario::I, 1.0)).unwrap();
        assert_eq!(g.data.n1(), 0);
    }

    #[test]
    fn truncation_probabilities() {
        let cfg = ScenarioConfig { super_population_size: 20_000, ..small(Scenario::I, 0.3) };
        let g = generate(&cfg, 0).unwrap();
        let n = g.data.big_n() as f64;
        let p = g.data.p0n();
        assert!((p - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / n).sqrt());

        let cfg2 = ScenarioConfig { super_population_size: 20_000, ..small(Scenario::II, 0.6) };
        let g2 = generate(&cfg2, 0).unwrap();
        let p2 = g2.data.p0n();
        assert!((p2 - 0.36).abs() < 3.0 * (0.36f64 * 0.64 / n).sqrt());
    }

    #[test]
    fn rct_rows_satisfy_criteria_and_schema_is_clean() {
        for s in [Scenario::I, Scenario::II] {
            let g = generate(&small(s, 0.5), 1).unwrap();
            let crit = g.data.criteria().clone();
            for r in g.data.rct() {
                assert_eq!(crate::dataset::apply_criteria(r, g.data.schema(), &crit).unwrap(), 0);
            }
            assert!(g.data.schema().iter().all(|c| c.starts_with('x')));
            assert_eq!(g.hidden.u_os.len(), g.data.big_n());
            assert_eq!(g.hidden.u_rct.len(), g.data.n());
        }
    }

    #[test]
    fn covariate_moments() {
        let g = generate(&ScenarioConfig { super_population_size: 20_000, ..small(Scenario::I, 0.7) }, 0).unwrap();
        let os = g.data.os_sample();
        let n = os.len() as f64;
        for j in 0..5 {
            let c = os.x.column(j);
            let m = mean(&c);
            let s = sd(&c);
            assert!((m - 10.0).abs() < 4.0 * 4.0 / n.sqrt());
            assert!((s - 4.0).abs() < 4.0 * 4.0 / (2.0 * n).sqrt());
        }
        let um = mean(&g.hidden.u_os);
        assert!((um - 10.0).abs() < 4.0 * 3.0 / n.sqrt());
    }

    #[test]
    fn one_cell_matrix() {
        let cfg = small(Scenario::I, 0.7);
        let m = MethodMatrix {
            sensitivity: vec![SensSpec::Epsen { estimator: Estimator::Or, range: EpsilonBox::square(0.9, 1.1).unwrap() }],
            generalization: vec![],
        };
        let t = run_fixed_q(&cfg, &m).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.cells[0].gen_method, OS_ONLY);
    }

    #[test]
    fn parallel_and_sequential_runs_agree() {
        let cfg = small(Scenario::II, 0.7);
        let m = MethodMatrix::scenario_two();
        let a = run_fixed_q(&cfg, &m).unwrap();
        let b = run_fixed_q_seq(&cfg, &m).unwrap();
        let key = |t: &FixedQTable| t.cells.iter().map(|c| (c.lb.to_bits(), c.ub.to_bits())).collect::<Vec<_>>();
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn q_grid_shape() {
        let g = default_q_grid();
        assert_eq!(g.len(), 19);
        assert_eq!((g[0], g[18]), (0.05, 0.95));
    }
}
