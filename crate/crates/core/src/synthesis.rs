//! The synthesis estimator p0·ψ̂_gen + p1·ψ̂₁(ε₁): bounds, width ratios,
//! asymptotic variance and the range-shrinking calibration.

use serde::{Deserialize, Serialize};

use crate::dataset::{FusedDataset, Sample};
use crate::epsen::{bounds_over_box, EpsilonBox, Estimator, SensitivityInputs};
use crate::error::{Error, Result};
use crate::generalize::{generalize, GeneralizationConfig};
use crate::ovb::{benchmark_strengths, short_regression, R2Box, ShortEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub sd_lower: Option<f64>,
    pub sd_upper: Option<f64>,
    pub ci_lower: Option<[f64; 2]>,
    pub ci_upper: Option<[f64; 2]>,
}

impl BoundResult {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper, "lower {lower} > upper {upper}");
        Self { lower, upper, width: upper - lower, sd_lower: None, sd_upper: None, ci_lower: None, ci_upper: None }
    }

    pub fn point(v: f64) -> Self {
        Self::new(v, v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceAt {
    pub endpoint: String,
    pub psi1: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisResult {
    /// None when no OS row is trial-eligible.
    pub psi_gen: Option<f64>,
    /// None when every OS row is trial-eligible.
    pub bound1: Option<BoundResult>,
    pub combined: BoundResult,
    pub p0n: f64,
    pub p1n: f64,
    pub variance_at: Option<Vec<VarianceAt>>,
    /// Set when p0 = 1: the trial covers the whole population.
    pub sensitivity_unnecessary: bool,
}

pub fn synthesize(psi_gen: f64, bound1: &BoundResult, p0n: f64, p1n: f64) -> Result<BoundResult> {
    if !(0.0..=1.0).contains(&p0n) || !(0.0..=1.0).contains(&p1n) || (p0n + p1n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("proportions must sum to 1, got {p0n} + {p1n}")));
    }
    let lower = p0n * psi_gen + p1n * bound1.lower;
    let upper = p0n * psi_gen + p1n * bound1.upper;
    Ok(BoundResult { width: p1n * bound1.width, ..BoundResult::new(lower, upper) })
}

/// Sensitivity framework and its parameter range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Framework {
    Epsen { estimator: Estimator, range: EpsilonBox },
    Ovb { range: R2Box },
    /// Box derived from a benchmark covariate on each analysed population.
    Benchmark { covariate: String, k_a: f64, k_y: f64 },
}

/// A parameter range of either framework.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensBox {
    Eps(EpsilonBox),
    R2(R2Box),
}

const SNAP: f64 = 1e-12;

impl SensBox {
    /// Contracts every axis toward the no-confounding point.
    pub fn shrink(&self, factor: f64) -> SensBox {
        match *self {
            SensBox::Eps(b) => {
                let pull = |r: [f64; 2]| {
                    let lo = 1.0 + factor * (r[0] - 1.0);
                    let hi = 1.0 + factor * (r[1] - 1.0);
                    if (lo - 1.0).abs().max((hi - 1.0).abs()) < SNAP {
                        [1.0, 1.0]
                    } else {
                        [lo, hi]
                    }
                };
                SensBox::Eps(EpsilonBox { eps1: pull(b.eps1), eps0: pull(b.eps0), ..b })
            }
            SensBox::R2(b) => {
                let pull = |v: f64| if v * factor < SNAP { 0.0 } else { v * factor };
                SensBox::R2(R2Box { a_max: pull(b.a_max), y_max: pull(b.y_max) })
            }
        }
    }

    pub fn is_center(&self) -> bool {
        match self {
            SensBox::Eps(b) => b.eps1 == [1.0, 1.0] && b.eps0 == [1.0, 1.0],
            SensBox::R2(b) => b.a_max == 0.0 && b.y_max == 0.0,
        }
    }
}

/// Frozen nuisances for one population, reusable across parameter ranges.
#[derive(Debug, Clone)]
pub enum Bounder {
    Epsen { inputs: SensitivityInputs, estimator: Estimator },
    Ovb { short: ShortEstimate },
}

impl Bounder {
    /// Fits the nuisances and resolves the framework's range on `sample`.
    pub fn prepare(sample: &Sample, framework: &Framework) -> Result<(Bounder, SensBox)> {
        Ok(match framework {
            Framework::Epsen { estimator, range } => {
                range.validate()?;
                let inputs = SensitivityInputs::fit(sample)?;
                (Bounder::Epsen { inputs, estimator: *estimator }, SensBox::Eps(*range))
            }
            Framework::Ovb { range } => {
                let short = ShortEstimate::from_fit(&short_regression(sample)?, 1)?;
                (Bounder::Ovb { short }, SensBox::R2(R2Box::new(range.a_max, range.y_max)?))
            }
            Framework::Benchmark { covariate, k_a, k_y } => {
                let b = benchmark_strengths(sample, covariate, *k_a, *k_y)?;
                let short = ShortEstimate::from_fit(&short_regression(sample)?, 1)?;
                (Bounder::Ovb { short }, SensBox::R2(b.r2box))
            }
        })
    }

    pub fn bounds(&self, range: &SensBox) -> Result<BoundResult> {
        match (self, range) {
            (Bounder::Epsen { inputs, estimator }, SensBox::Eps(b)) => bounds_over_box(inputs, b, *estimator),
            (Bounder::Ovb { short }, SensBox::R2(b)) => short.bounds(b),
            _ => Err(Error::InvalidInput("parameter range does not match the framework".into())),
        }
    }
}

pub fn population_bounds(sample: &Sample, framework: &Framework) -> Result<BoundResult> {
    let (b, range) = Bounder::prepare(sample, framework)?;
    b.bounds(&range)
}

/// Sensitivity analysis on the whole OS.
pub fn os_only_bounds(data: &FusedDataset, framework: &Framework) -> Result<BoundResult> {
    population_bounds(&data.os_sample(), framework)
}

pub fn synthesis_bounds(
    data: &FusedDataset,
    framework: &Framework,
    gen: &GeneralizationConfig,
) -> Result<SynthesisResult> {
    let psi_gen = if data.n0() > 0 {
        Some(generalize(&data.rct_sample(), &data.eligible_sample(), gen)?)
    } else {
        None
    };
    let bound1 = if data.n1() > 0 {
        Some(population_bounds(&data.ineligible_sample(), framework)?)
    } else {
        None
    };
    combine(psi_gen, bound1, data.p0n(), data.p1n())
}

pub fn combine(psi_gen: Option<f64>, bound1: Option<BoundResult>, p0n: f64, p1n: f64) -> Result<SynthesisResult> {
    let combined = synthesize(psi_gen.unwrap_or(0.0), &bound1.unwrap_or(BoundResult::point(0.0)), p0n, p1n)?;
    Ok(SynthesisResult {
        psi_gen,
        bound1,
        combined,
        p0n,
        p1n,
        variance_at: None,
        sensitivity_unnecessary: p1n == 0.0,
    })
}

pub fn width_ratio(synthesis: &BoundResult, os_only: &BoundResult) -> Result<f64> {
    if os_only.width <= 0.0 {
        return Err(Error::ZeroDenominator("OS-only bound width is zero".into()));
    }
    Ok(synthesis.width / os_only.width)
}

/// p0(1−p0)(ψ0 − ψ1)² + p0σ0² + (1−p0)σ1².
pub fn asymptotic_variance(psi0: f64, psi1: f64, p0: f64, sigma0_sq: f64, sigma1_sq: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidInput(format!("p0 must lie in [0, 1], got {p0}")));
    }
    if sigma0_sq < 0.0 || sigma1_sq < 0.0 {
        return Err(Error::InvalidInput("variances must be nonnegative".into()));
    }
    let d = psi0 - psi1;
    Ok(p0 * (1.0 - p0) * d * d + p0 * sigma0_sq + (1.0 - p0) * sigma1_sq)
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationStep {
    pub range: SensBox,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub range: SensBox,
    pub width: f64,
    pub iterations: usize,
    pub trace: Vec<CalibrationStep>,
}

pub const DEFAULT_SHRINK: f64 = 0.9;
const MAX_CALIBRATION_STEPS: usize = 100_000;

/// Shrinks the V*=1 range until the synthesis width is at most `w0`.
pub fn calibrate_eps_range(data: &FusedDataset, framework: &Framework, w0: f64, shrink: f64) -> Result<Calibration> {
    if data.n1() == 0 {
        return Ok(Calibration { range: initial_range(framework)?, width: 0.0, iterations: 0, trace: Vec::new() });
    }
    let (bounder, range) = Bounder::prepare(&data.ineligible_sample(), framework)?;
    calibrate_with(&bounder, range, data.p1n(), w0, shrink)
}

fn initial_range(framework: &Framework) -> Result<SensBox> {
    Ok(match framework {
        Framework::Epsen { range, .. } => SensBox::Eps(*range),
        Framework::Ovb { range } => SensBox::R2(*range),
        Framework::Benchmark { .. } => SensBox::R2(R2Box::new(0.0, 0.0)?),
    })
}

pub fn calibrate_with(bounder: &Bounder, start: SensBox, p1n: f64, w0: f64, shrink: f64) -> Result<Calibration> {
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::InvalidInput(format!("shrink factor must lie in (0, 1), got {shrink}")));
    }
    if !(w0 >= 0.0) {
        return Err(Error::InvalidInput(format!("target width must be nonnegative, got {w0}")));
    }
    let mut range = start;
    let mut width = p1n * bounder.bounds(&range)?.width;
    let mut trace = vec![CalibrationStep { range, width }];
    let mut iterations = 0;
    while width > w0 {
        if range.is_center() || iterations >= MAX_CALIBRATION_STEPS {
            return Err(Error::ZeroDenominator("calibration cannot reach the target width".into()));
        }
        range = range.shrink(shrink);
        width = p1n * bounder.bounds(&range)?.width;
        iterations += 1;
        trace.push(CalibrationStep { range, width });
    }
    Ok(Calibration { range, width, iterations, trace })
}
