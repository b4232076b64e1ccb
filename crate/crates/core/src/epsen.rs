//! Ratio-type sensitivity parameters (ε¹, ε⁰) and the four modified ATE
//! estimators built on them, plus bounds over a rectangular parameter box.
//!
//! ε¹ = E{Y(1)|A=1,X} / E{Y(1)|A=0,X} and ε⁰ = E{Y(0)|A=1,X} / E{Y(0)|A=0,X},
//! both restricted to constants. (1, 1) is no unmeasured confounding.

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::par;
use crate::regress::{fit_logistic, fit_ols, predict};
use crate::synthesis::BoundResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPoint {
    pub eps1: f64,
    pub eps0: f64,
}

impl EpsilonPoint {
    pub const NULL: EpsilonPoint = EpsilonPoint { eps1: 1.0, eps0: 1.0 };

    pub fn new(eps1: f64, eps0: f64) -> Result<Self> {
        if !(eps1 > 0.0 && eps0 > 0.0) || !eps1.is_finite() || !eps0.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got ({eps1}, {eps0})")));
        }
        Ok(Self { eps1, eps0 })
    }
}

pub const DEFAULT_RESOLUTION: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBox {
    pub eps1: [f64; 2],
    pub eps0: [f64; 2],
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

impl EpsilonBox {
    pub fn new(eps1: [f64; 2], eps0: [f64; 2], resolution: usize) -> Result<Self> {
        let b = Self { eps1, eps0, resolution };
        b.validate()?;
        Ok(b)
    }

    /// Square box [lo, hi]² at the default resolution.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new([lo, hi], [lo, hi], DEFAULT_RESOLUTION)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("eps1", self.eps1), ("eps0", self.eps0)] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return Err(Error::InvalidInput(format!("{name} range must satisfy 0 < lo <= hi, got {r:?}")));
            }
        }
        if self.resolution < 2 {
            return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
        }
        Ok(())
    }

    fn axis(r: [f64; 2], k: usize) -> Vec<f64> {
        if r[0] == r[1] {
            return vec![r[0]];
        }
        (0..k)
            .map(|i| match i {
                0 => r[0],
                _ if i == k - 1 => r[1],
                _ => r[0] + (r[1] - r[0]) * i as f64 / (k - 1) as f64,
            })
            .collect()
    }

    /// Tensor grid with both endpoints on each axis (so all four corners).
    pub fn grid(&self) -> Vec<EpsilonPoint> {
        let e1 = Self::axis(self.eps1, self.resolution);
        let e0 = Self::axis(self.eps0, self.resolution);
        e1.iter()
            .flat_map(|&a| e0.iter().map(move |&b| EpsilonPoint { eps1: a, eps0: b }))
            .collect()
    }

    pub fn contains(&self, p: EpsilonPoint) -> bool {
        (self.eps1[0]..=self.eps1[1]).contains(&p.eps1) && (self.eps0[0]..=self.eps0[1]).contains(&p.eps0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Or,
    Ht,
    Hajek,
    Dr,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Or, Estimator::Ht, Estimator::Hajek, Estimator::Dr];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Or => "OR",
            Estimator::Ht => "HT",
            Estimator::Hajek => "Hajek",
            Estimator::Dr => "DR",
        }
    }
}

/// Frozen nuisances on one (sub-)population: outcomes, treatment,
/// arm-specific outcome predictions μ̂₁, μ̂₀ and propensity ê.
#[derive(Debug, Clone)]
pub struct SensitivityInputs {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu0: Vec<f64>,
    pub e: Vec<f64>,
}

impl SensitivityInputs {
    pub fn new(y: Vec<f64>, a: Vec<f64>, mu1: Vec<f64>, mu0: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        let n = y.len();
        for v in [&a, &mu1, &mu0, &e] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        if !a.iter().any(|&t| t == 1.0) || !a.iter().any(|&t| t == 0.0) {
            return Err(Error::EmptyArm("sensitivity analysis needs treated and control rows".into()));
        }
        if e.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidInput("propensity scores must lie in (0, 1)".into()));
        }
        Ok(Self { y, a, mu1, mu0, e })
    }

    /// OLS outcome model per arm on `[1, X]` and a logistic propensity model
    /// on `[1, X]`, all fit on this sample.
    pub fn fit(sample: &Sample) -> Result<Self> {
        let treated = sample.arm(1);
        let control = sample.arm(0);
        if treated.is_empty() || control.is_empty() {
            return Err(Error::EmptyArm("sensitivity analysis needs treated and control rows".into()));
        }
        let design = sample.design();
        let y_at = |idx: &[usize]| idx.iter().map(|&i| sample.y[i]).collect::<Vec<_>>();
        let m1 = fit_ols(&design.rows(&treated), &y_at(&treated))?;
        let m0 = fit_ols(&design.rows(&control), &y_at(&control))?;
        let ps = fit_logistic(&design, &sample.a)?;
        Self::new(
            sample.y.clone(),
            sample.a.clone(),
            predict(&m1, &design.x)?,
            predict(&m0, &design.x)?,
            ps.fitted_values,
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn mean_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    (0..n).map(f).sum::<f64>() / n as f64
}

#[inline]
fn weights(e: f64, eps: EpsilonPoint) -> (f64, f64) {
    (e + (1.0 - e) / eps.eps1, e * eps.eps0 + 1.0 - e)
}

pub fn modified_or(d: &SensitivityInputs, eps: EpsilonPoint) -> f64 {
    let n = d.len();
    let t1 = mean_by(n, |i| d.a[i] * d.y[i] + (1.0 - d.a[i]) * d.mu1[i] / eps.eps1);
    let t0 = mean_by(n, |i| d.a[i] * d.mu0[i] * eps.eps0 + (1.0 - d.a[i]) * d.y[i]);
    t1 - t0
}

pub fn modified_ht(d: &SensitivityInputs, eps: EpsilonPoint) -> f64 {
    let n = d.len();
    mean_by(n, |i| {
        let (w1, w0) = weights(d.e[i], eps);
        w1 * d.a[i] * d.y[i] / d.e[i] - w0 * (1.0 - d.a[i]) * d.y[i] / (1.0 - d.e[i])
    })
}

/// Weighted arm totals normalized by the unmodified inverse-propensity mass.
pub fn modified_hajek(d: &SensitivityInputs, eps: EpsilonPoint) -> f64 {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..d.len() {
        let (w1, w0) = weights(d.e[i], eps);
        let h1 = d.a[i] / d.e[i];
        let h0 = (1.0 - d.a[i]) / (1.0 - d.e[i]);
        s1 += w1 * h1 * d.y[i];
        n1 += h1;
        s0 += w0 * h0 * d.y[i];
        n0 += h0;
    }
    s1 / n1 - s0 / n0
}

pub fn modified_dr(d: &SensitivityInputs, eps: EpsilonPoint) -> f64 {
    let n = d.len();
    mean_by(n, |i| {
        let (a, y, e) = (d.a[i], d.y[i], d.e[i]);
        let (w1, w0) = weights(e, eps);
        let t1 = w1 * a * y / e - (a - e) * d.mu1[i] / (e * eps.eps1);
        let t0 = w0 * (1.0 - a) * y / (1.0 - e) - (e - a) * d.mu0[i] * eps.eps0 / (1.0 - e);
        t1 - t0
    })
}

pub fn original_or(d: &SensitivityInputs) -> f64 {
    let n = d.len();
    mean_by(n, |i| d.a[i] * d.y[i] + (1.0 - d.a[i]) * d.mu1[i])
        - mean_by(n, |i| d.a[i] * d.mu0[i] + (1.0 - d.a[i]) * d.y[i])
}

pub fn original_ht(d: &SensitivityInputs) -> f64 {
    mean_by(d.len(), |i| d.a[i] * d.y[i] / d.e[i] - (1.0 - d.a[i]) * d.y[i] / (1.0 - d.e[i]))
}

pub fn original_hajek(d: &SensitivityInputs) -> f64 {
    let n = d.len();
    let s1: f64 = (0..n).map(|i| d.a[i] * d.y[i] / d.e[i]).sum();
    let n1: f64 = (0..n).map(|i| d.a[i] / d.e[i]).sum();
    let s0: f64 = (0..n).map(|i| (1.0 - d.a[i]) * d.y[i] / (1.0 - d.e[i])).sum();
    let n0: f64 = (0..n).map(|i| (1.0 - d.a[i]) / (1.0 - d.e[i])).sum();
    s1 / n1 - s0 / n0
}

pub fn original_aipw(d: &SensitivityInputs) -> f64 {
    mean_by(d.len(), |i| {
        let (a, y, e) = (d.a[i], d.y[i], d.e[i]);
        (a * y / e - (a - e) * d.mu1[i] / e) - ((1.0 - a) * y / (1.0 - e) - (e - a) * d.mu0[i] / (1.0 - e))
    })
}

pub fn evaluate(est: Estimator, d: &SensitivityInputs, eps: EpsilonPoint) -> f64 {
    match est {
        Estimator::Or => modified_or(d, eps),
        Estimator::Ht => modified_ht(d, eps),
        Estimator::Hajek => modified_hajek(d, eps),
        Estimator::Dr => modified_dr(d, eps),
    }
}

pub fn original(est: Estimator, d: &SensitivityInputs) -> f64 {
    match est {
        Estimator::Or => original_or(d),
        Estimator::Ht => original_ht(d),
        Estimator::Hajek => original_hajek(d),
        Estimator::Dr => original_aipw(d),
    }
}

/// Min and max of the estimator over the box grid.
pub fn bounds_over_box(d: &SensitivityInputs, bx: &EpsilonBox, est: Estimator) -> Result<BoundResult> {
    bx.validate()?;
    let grid = bx.grid();
    let values = par::map_slice(&grid, |&p| evaluate(est, d, p));
    extrema(&values)
}

/// Same as [`bounds_over_box`] without the thread pool.
pub fn bounds_over_box_seq(d: &SensitivityInputs, bx: &EpsilonBox, est: Estimator) -> Result<BoundResult> {
    bx.validate()?;
    let values: Vec<f64> = bx.grid().into_iter().map(|p| evaluate(est, d, p)).collect();
    extrema(&values)
}

fn extrema(values: &[f64]) -> Result<BoundResult> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ZeroDenominator("estimator produced a non-finite value".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundResult::new(lo, hi))
}
