//! Omitted-variable-bias sensitivity framework in partial-R² coordinates,
//! benchmark bounding, and the map from sub-population to pooled R²s.

use serde::{Deserialize, Serialize};

use crate::dataset::{FusedDataset, Sample};
use crate::error::{Error, Result};
use crate::regress::{fit_logistic, fit_ols, partial_r2_nested, FittedModel};
use crate::synthesis::BoundResult;

pub const TREATMENT: &str = "a";
const A_CAP: f64 = 1.0 - 1e-9;

/// (R²_{A∼U|X}, R²_{Y∼U|A,X}).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2Point {
    pub r2_a: f64,
    pub r2_y: f64,
}

impl R2Point {
    pub fn new(r2_a: f64, r2_y: f64) -> Result<Self> {
        let p = Self { r2_a, r2_y };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.r2_a) || !(0.0..=1.0).contains(&self.r2_y) {
            return Err(Error::InvalidInput(format!(
                "R² point must lie in [0,1) x [0,1], got ({}, {})",
                self.r2_a, self.r2_y
            )));
        }
        Ok(())
    }
}

/// [0, a_max] × [0, y_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2Box {
    pub a_max: f64,
    pub y_max: f64,
}

impl R2Box {
    pub fn new(a_max: f64, y_max: f64) -> Result<Self> {
        R2Point::new(a_max, y_max)?;
        Ok(Self { a_max, y_max })
    }

    pub fn corner(&self) -> R2Point {
        R2Point { r2_a: self.a_max, r2_y: self.y_max }
    }
}

pub fn f2(r2: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r2) {
        return Err(Error::InvalidInput(format!("f² needs R² in [0, 1), got {r2}")));
    }
    Ok(r2 / (1.0 - r2))
}

/// se · sqrt(r2_y · r2_a / (1 − r2_a) · df).
pub fn bias_abs(point: R2Point, se: f64, df: usize) -> Result<f64> {
    point.validate()?;
    if !(se >= 0.0) || df == 0 {
        return Err(Error::InvalidInput("bias needs se >= 0 and df >= 1".into()));
    }
    Ok(se * (point.r2_y * f2(point.r2_a)? * df as f64).sqrt())
}

/// Treatment coefficient of the short regression with its SE and df.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShortEstimate {
    pub psi: f64,
    pub se: f64,
    pub df: usize,
}

impl ShortEstimate {
    pub fn from_fit(fit: &FittedModel, treatment_index: usize) -> Result<Self> {
        if treatment_index >= fit.coefficients.len() {
            return Err(Error::DimensionMismatch { expected: fit.coefficients.len(), found: treatment_index });
        }
        Ok(Self { psi: fit.coefficients[treatment_index], se: fit.coef_se[treatment_index], df: fit.df })
    }

    pub fn bounds(&self, bx: &R2Box) -> Result<BoundResult> {
        let b = bias_abs(bx.corner(), self.se, self.df)?;
        Ok(BoundResult::new(self.psi - b, self.psi + b))
    }
}

/// OLS of Y on `[1, A, X]`; the treatment coefficient sits at index 1.
pub fn short_regression(sample: &Sample) -> Result<FittedModel> {
    fit_ols(&sample.design_with(&[(TREATMENT, &sample.a)]), &sample.y)
}

pub fn adjusted_bounds(short_fit: &FittedModel, treatment_index: usize, bx: &R2Box) -> Result<BoundResult> {
    ShortEstimate::from_fit(short_fit, treatment_index)?.bounds(bx)
}

/// Measured benchmark partial R²s and the box they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Benchmark {
    /// R²_{A∼X_j|X_{−j}}.
    pub r2_a: f64,
    /// R²_{Y∼X_j|A,X_{−j}}.
    pub r2_y: f64,
    pub r2box: R2Box,
}

pub fn benchmark_strengths(sample: &Sample, covariate: &str, k_a: f64, k_y: f64) -> Result<Benchmark> {
    if !(k_a > 0.0 && k_y > 0.0) {
        return Err(Error::InvalidInput("benchmark multipliers must be positive".into()));
    }
    if !sample.names.iter().any(|n| n == covariate) {
        return Err(Error::UnknownCovariate(covariate.to_string()));
    }
    let dx = sample.design();
    let dx_red = dx.without(covariate)?;
    let r2_a = partial_r2_nested(&fit_ols(&dx, &sample.a)?, &fit_ols(&dx_red, &sample.a)?)?;
    let day = sample.design_with(&[(TREATMENT, &sample.a)]);
    let day_red = day.without(covariate)?;
    let r2_y = partial_r2_nested(&fit_ols(&day, &sample.y)?, &fit_ols(&day_red, &sample.y)?)?;
    let a = (k_a * f2(r2_a.min(A_CAP))?).min(A_CAP);
    let b = (k_y * f2(r2_y.min(A_CAP))?).min(1.0);
    Ok(Benchmark { r2_a, r2_y, r2box: R2Box { a_max: a, y_max: b } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Recommendation {
    Synthesis,
    Fallback,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table3Report {
    pub benchmark: String,
    pub w1: f64,
    pub w2: f64,
    pub ratio: f64,
    pub recommendation: Recommendation,
    pub p1: f64,
    pub os: Benchmark,
    pub sub: Option<Benchmark>,
}

pub fn recommend(ratio: f64) -> Recommendation {
    if ratio <= 1.0 {
        Recommendation::Synthesis
    } else {
        Recommendation::Fallback
    }
}

/// W1 from the benchmark box on the whole OS, W2 from the benchmark box on
/// the ineligible subset scaled by p1.
pub fn table3_procedure(data: &FusedDataset, covariate: &str, k_a: f64, k_y: f64) -> Result<Table3Report> {
    let os = data.os_sample();
    let bench_os = benchmark_strengths(&os, covariate, k_a, k_y)?;
    let w1 = adjusted_bounds(&short_regression(&os)?, 1, &bench_os.r2box)?.width;
    let p1 = data.p1n();
    let (w2, sub) = if data.n1() == 0 {
        (0.0, None)
    } else {
        let s1 = data.ineligible_sample();
        let bench1 = benchmark_strengths(&s1, covariate, k_a, k_y)?;
        let w = adjusted_bounds(&short_regression(&s1)?, 1, &bench1.r2box)?.width;
        (p1 * w, Some(bench1))
    };
    table3_from_widths(covariate, w1, w2, p1, bench_os, sub)
}

pub fn table3_from_widths(
    covariate: &str,
    w1: f64,
    w2: f64,
    p1: f64,
    os: Benchmark,
    sub: Option<Benchmark>,
) -> Result<Table3Report> {
    let ratio = if w2 == 0.0 {
        0.0
    } else if w1 > 0.0 {
        w2 / w1
    } else {
        return Err(Error::ZeroDenominator("OS-only width W1 is zero".into()));
    };
    Ok(Table3Report {
        benchmark: covariate.to_string(),
        w1,
        w2,
        ratio,
        recommendation: recommend(ratio),
        p1,
        os,
        sub,
    })
}

/// Inputs of the pooled-R² map. Index j ∈ {0, 1} is the V* value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformComponents {
    pub p: [f64; 2],
    pub r2_y: [f64; 2],
    pub r2_a: [f64; 2],
    /// Δ_{yj}, computed on sub-population 1 − j.
    pub delta_y: [f64; 2],
    /// Δ_{aj}, computed on sub-population 1 − j.
    pub delta_a: [f64; 2],
    pub theta_y: f64,
    pub theta_a: f64,
    pub denom_y: f64,
    pub denom_a: f64,
}

impl TransformComponents {
    /// Same components with different sub-population sensitivity points.
    pub fn with_points(&self, sub0: R2Point, sub1: R2Point) -> Self {
        Self { r2_a: [sub0.r2_a, sub1.r2_a], r2_y: [sub0.r2_y, sub1.r2_y], ..*self }
    }
}

fn pooled_ratio(p: [f64; 2], r: [f64; 2], delta: [f64; 2], theta: f64, denom: f64) -> Result<f64> {
    for j in 0..2 {
        if p[j] >= 1.0 {
            return Ok(r[j]);
        }
    }
    let prod = delta[0] * delta[1];
    if delta.iter().any(|d| *d <= 0.0) || !prod.is_finite() {
        return Err(Error::ZeroDenominator("sub-population variance gap".into()));
    }
    let num = p[0] * r[0] / delta[0] + p[1] * r[1] / delta[1] + theta / prod;
    let den = p[0] / delta[0] + p[1] / delta[1] + denom / prod;
    if den <= 0.0 {
        return Err(Error::ZeroDenominator("pooled R² denominator".into()));
    }
    Ok(num / den)
}

pub fn transform_r2(c: &TransformComponents) -> Result<R2Point> {
    if (c.p[0] + c.p[1] - 1.0).abs() > 1e-9 || c.p.iter().any(|p| *p < 0.0) {
        return Err(Error::InvalidInput("sub-population proportions must be nonnegative and sum to 1".into()));
    }
    Ok(R2Point {
        r2_a: pooled_ratio(c.p, c.r2_a, c.delta_a, c.theta_a, c.denom_a)?,
        r2_y: pooled_ratio(c.p, c.r2_y, c.delta_y, c.theta_y, c.denom_y)?,
    })
}

/// Per-unit values of Y, A and the four conditional means, with V*.
#[derive(Debug, Clone)]
pub struct ConditionalMeans {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    /// E(Y|U,A,X).
    pub m_y_uax: Vec<f64>,
    /// E(Y|A,X).
    pub m_y_ax: Vec<f64>,
    /// E(A|U,X).
    pub m_a_ux: Vec<f64>,
    /// E(A|X).
    pub m_a_x: Vec<f64>,
    pub v_star: Vec<u8>,
}

fn mean(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count();
    v.sum::<f64>() / n as f64
}

/// Population-normalized (divide-by-n) variance.
fn pvar(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(v.clone());
    mean(v.map(move |x| (x - m) * (x - m)))
}

/// Σ p_j c_j² − (Σ p_j c_j)².
fn between(p: [f64; 2], c: [f64; 2]) -> f64 {
    let m = p[0] * c[0] + p[1] * c[1];
    p[0] * (c[0] - m) * (c[0] - m) + p[1] * (c[1] - m) * (c[1] - m)
}

/// Variance-ratio R² of a conditional-mean pair on the rows in `idx`:
/// [var(m_long) − var(m_short)] / [var(target) − var(m_short)].
fn r2_and_gap(idx: &[usize], target: &[f64], long: &[f64], short: &[f64]) -> Result<(f64, f64)> {
    let var_of = |v: &[f64]| pvar(idx.iter().map(|&i| v[i]));
    let vs = var_of(short);
    let gap = var_of(target) - vs;
    if gap <= 0.0 {
        return Err(Error::ZeroDenominator("residual variance is zero".into()));
    }
    Ok(((var_of(long) - vs) / gap, gap))
}

pub fn estimate_transform_components(cm: &ConditionalMeans) -> Result<TransformComponents> {
    let n = cm.y.len();
    for v in [&cm.a, &cm.m_y_uax, &cm.m_y_ax, &cm.m_a_ux, &cm.m_a_x] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
    }
    if cm.v_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: cm.v_star.len() });
    }
    let groups: [Vec<usize>; 2] =
        [0u8, 1].map(|j| (0..n).filter(|&i| cm.v_star[i] == j).collect::<Vec<_>>());
    let p = groups.clone().map(|g| g.len() as f64 / n as f64);
    let mut c = TransformComponents {
        p,
        r2_y: [0.0; 2],
        r2_a: [0.0; 2],
        delta_y: [f64::NAN; 2],
        delta_a: [f64::NAN; 2],
        theta_y: 0.0,
        theta_a: 0.0,
        denom_y: 0.0,
        denom_a: 0.0,
    };
    let mut gap_y = [f64::NAN; 2];
    let mut gap_a = [f64::NAN; 2];
    let mut means = [[0.0f64; 6]; 2];
    for j in 0..2 {
        let g = &groups[j];
        if g.is_empty() {
            continue;
        }
        if g.len() < 2 {
            return Err(Error::EmptySubset(format!("sub-population V* = {j} is too small")));
        }
        let (ry, gy) = r2_and_gap(g, &cm.y, &cm.m_y_uax, &cm.m_y_ax)?;
        let (ra, ga) = r2_and_gap(g, &cm.a, &cm.m_a_ux, &cm.m_a_x)?;
        c.r2_y[j] = ry;
        c.r2_a[j] = ra;
        gap_y[j] = gy;
        gap_a[j] = ga;
        for (k, v) in [&cm.y, &cm.m_y_uax, &cm.m_y_ax, &cm.a, &cm.m_a_ux, &cm.m_a_x].iter().enumerate() {
            means[j][k] = mean(g.iter().map(|&i| v[i]));
        }
    }
    c.delta_y = [gap_y[1], gap_y[0]];
    c.delta_a = [gap_a[1], gap_a[0]];
    let col = |k: usize| [means[0][k], means[1][k]];
    c.theta_y = between(p, col(1)) - between(p, col(2));
    c.denom_y = between(p, col(0)) - between(p, col(2));
    c.theta_a = between(p, col(4)) - between(p, col(5));
    c.denom_a = between(p, col(3)) - between(p, col(5));
    Ok(c)
}

/// The variance-ratio R²s computed directly on all rows.
pub fn pooled_r2(cm: &ConditionalMeans) -> Result<R2Point> {
    let all: Vec<usize> = (0..cm.y.len()).collect();
    let (r2_y, _) = r2_and_gap(&all, &cm.y, &cm.m_y_uax, &cm.m_y_ax)?;
    let (r2_a, _) = r2_and_gap(&all, &cm.a, &cm.m_a_ux, &cm.m_a_x)?;
    Ok(R2Point { r2_a, r2_y })
}

/// Fits the four conditional means within each sub-population when U is
/// observed: OLS for the outcome means, logistic for the treatment means.
pub fn fit_conditional_means(sample: &Sample, u: &[f64], v_star: &[u8]) -> Result<ConditionalMeans> {
    let n = sample.len();
    if u.len() != n || v_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u.len().min(v_star.len()) });
    }
    let mut out = ConditionalMeans {
        y: sample.y.clone(),
        a: sample.a.clone(),
        m_y_uax: vec![0.0; n],
        m_y_ax: vec![0.0; n],
        m_a_ux: vec![0.0; n],
        m_a_x: vec![0.0; n],
        v_star: v_star.to_vec(),
    };
    for j in [0u8, 1] {
        let idx: Vec<usize> = (0..n).filter(|&i| v_star[i] == j).collect();
        if idx.is_empty() {
            continue;
        }
        let sub = sample.select(&idx);
        let us: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
        let fits = [
            fit_ols(&sub.design_with(&[("u", &us), (TREATMENT, &sub.a)]), &sub.y)?,
            fit_ols(&sub.design_with(&[(TREATMENT, &sub.a)]), &sub.y)?,
            fit_logistic(&sub.design_with(&[("u", &us)]), &sub.a)?,
            fit_logistic(&sub.design(), &sub.a)?,
        ];
        for (k, &i) in idx.iter().enumerate() {
            out.m_y_uax[i] = fits[0].fitted_values[k];
            out.m_y_ax[i] = fits[1].fitted_values[k];
            out.m_a_ux[i] = fits[2].fitted_values[k];
            out.m_a_x[i] = fits[3].fitted_values[k];
        }
    }
    Ok(out)
}
