//! Transporting the trial effect to the trial-eligible observational
//! population: outcome-model (OM), inverse probability of sampling (IPSW)
//! and augmented (AIPSW) estimators.

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regress::{clamp_prob, fit_logistic, fit_ols, predict, FittedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenMethod {
    Om,
    Ipsw,
    Aipsw,
}

impl GenMethod {
    pub const ALL: [GenMethod; 3] = [GenMethod::Om, GenMethod::Ipsw, GenMethod::Aipsw];

    pub fn name(self) -> &'static str {
        match self {
            GenMethod::Om => "OM",
            GenMethod::Ipsw => "IPSW",
            GenMethod::Aipsw => "AIPSW",
        }
    }
}

/// Trial propensity: the randomization constant or a logistic fit on the RCT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Propensity {
    Known(f64),
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationConfig {
    pub method: GenMethod,
    #[serde(default = "default_propensity")]
    pub propensity: Propensity,
    /// Optional clamp applied to ê and to the sampling probabilities.
    #[serde(default)]
    pub trim: Option<[f64; 2]>,
}

fn default_propensity() -> Propensity {
    Propensity::Known(0.5)
}

impl GeneralizationConfig {
    pub fn new(method: GenMethod) -> Self {
        Self { method, propensity: default_propensity(), trim: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let Propensity::Known(e) = self.propensity {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidInput(format!("known propensity must lie in (0, 1), got {e}")));
            }
        }
        if let Some([lo, hi]) = self.trim {
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return Err(Error::InvalidInput(format!("trim must satisfy 0 < lo < hi < 1, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn trim(&self, p: f64) -> f64 {
        match self.trim {
            Some([lo, hi]) => p.clamp(lo, hi),
            None => p,
        }
    }
}

/// Stacked membership model and the odds α̂ = p̂/(1 − p̂) on the RCT rows.
#[derive(Debug, Clone)]
pub struct SamplingOdds {
    pub model: FittedModel,
    pub odds_rct: Vec<f64>,
}

impl SamplingOdds {
    pub fn odds_at(&self, x_with_intercept: &Matrix) -> Result<Vec<f64>> {
        Ok(predict(&self.model, x_with_intercept)?.into_iter().map(|p| p / (1.0 - p)).collect())
    }
}

fn require_nonempty(rct: &Sample, eligible: &Sample) -> Result<()> {
    if rct.is_empty() {
        return Err(Error::EmptySubset("RCT is empty".into()));
    }
    if eligible.is_empty() {
        return Err(Error::EmptySubset("no trial-eligible OS rows".into()));
    }
    Ok(())
}

fn stack(rct: &Sample, eligible: &Sample) -> Sample {
    let n = rct.len();
    let m = eligible.len();
    let p = rct.x.ncols();
    let mut data = Vec::with_capacity((n + m) * p);
    for i in 0..n {
        data.extend_from_slice(rct.x.row(i));
    }
    for i in 0..m {
        data.extend_from_slice(eligible.x.row(i));
    }
    let s: Vec<f64> = (0..n + m).map(|i| f64::from(i < n)).collect();
    Sample {
        y: s.clone(),
        a: s,
        x: Matrix::from_row_major(n + m, p, data),
        names: rct.names.clone(),
    }
}

pub fn fit_sampling_odds(rct: &Sample, eligible: &Sample) -> Result<SamplingOdds> {
    fit_sampling_odds_with(rct, eligible, None)
}

fn fit_sampling_odds_with(rct: &Sample, eligible: &Sample, trim: Option<[f64; 2]>) -> Result<SamplingOdds> {
    require_nonempty(rct, eligible)?;
    let st = stack(rct, eligible);
    let model = fit_logistic(&st.design(), &st.y)?;
    let odds_rct = model.fitted_values[..rct.len()]
        .iter()
        .map(|&p| {
            let p = match trim {
                Some([lo, hi]) => p.clamp(lo, hi),
                None => clamp_prob(p),
            };
            p / (1.0 - p)
        })
        .collect();
    Ok(SamplingOdds { model, odds_rct })
}

/// Arm-specific RCT outcome models evaluated on the RCT and eligible rows.
#[derive(Debug, Clone)]
pub struct OutcomeFits {
    pub mu1_rct: Vec<f64>,
    pub mu0_rct: Vec<f64>,
    pub mu1_elig: Vec<f64>,
    pub mu0_elig: Vec<f64>,
}

impl OutcomeFits {
    pub fn fit(rct: &Sample, eligible: &Sample) -> Result<Self> {
        require_nonempty(rct, eligible)?;
        let treated = rct.arm(1);
        let control = rct.arm(0);
        if treated.is_empty() || control.is_empty() {
            return Err(Error::EmptyArm("RCT needs both arms".into()));
        }
        let d = rct.design();
        let ys = |idx: &[usize]| idx.iter().map(|&i| rct.y[i]).collect::<Vec<_>>();
        let m1 = fit_ols(&d.rows(&treated), &ys(&treated))?;
        let m0 = fit_ols(&d.rows(&control), &ys(&control))?;
        let de = eligible.design();
        Ok(Self {
            mu1_rct: predict(&m1, &d.x)?,
            mu0_rct: predict(&m0, &d.x)?,
            mu1_elig: predict(&m1, &de.x)?,
            mu0_elig: predict(&m0, &de.x)?,
        })
    }

    /// Mean predicted individual effect over the eligible rows.
    pub fn om(&self) -> f64 {
        let n0 = self.mu1_elig.len() as f64;
        self.mu1_elig.iter().zip(&self.mu0_elig).map(|(a, b)| a - b).sum::<f64>() / n0
    }
}

pub fn om_estimator(rct: &Sample, eligible: &Sample) -> Result<f64> {
    Ok(OutcomeFits::fit(rct, eligible)?.om())
}

/// (1/N0) Σ_RCT (Y/α̂) {A/ê − (1−A)/(1−ê)}.
pub fn ipsw_estimator(rct: &Sample, n0: usize, odds: &[f64], e: &[f64]) -> Result<f64> {
    if n0 == 0 {
        return Err(Error::ZeroDenominator("N0 = 0".into()));
    }
    let s: f64 = (0..rct.len())
        .map(|i| {
            let a = rct.a[i];
            rct.y[i] / odds[i] * (a / e[i] - (1.0 - a) / (1.0 - e[i]))
        })
        .sum();
    Ok(s / n0 as f64)
}

/// (1/N0) Σ_RCT (1/α̂)[A(Y − μ̂₁)/ê − (1−A)(Y − μ̂₀)/(1−ê)] + OM.
pub fn aipsw_estimator(rct: &Sample, n0: usize, odds: &[f64], e: &[f64], fits: &OutcomeFits) -> Result<f64> {
    if n0 == 0 {
        return Err(Error::ZeroDenominator("N0 = 0".into()));
    }
    let s: f64 = (0..rct.len())
        .map(|i| {
            let (a, y) = (rct.a[i], rct.y[i]);
            (a * (y - fits.mu1_rct[i]) / e[i] - (1.0 - a) * (y - fits.mu0_rct[i]) / (1.0 - e[i])) / odds[i]
        })
        .sum();
    Ok(s / n0 as f64 + fits.om())
}

/// All three estimates from one set of nuisance fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenEstimates {
    pub om: f64,
    pub ipsw: f64,
    pub aipsw: f64,
    /// Whether the sampling model converged without separation.
    pub sampling_converged: bool,
}

impl GenEstimates {
    pub fn get(&self, m: GenMethod) -> f64 {
        match m {
            GenMethod::Om => self.om,
            GenMethod::Ipsw => self.ipsw,
            GenMethod::Aipsw => self.aipsw,
        }
    }
}

fn rct_propensity(rct: &Sample, cfg: &GeneralizationConfig) -> Result<Vec<f64>> {
    Ok(match cfg.propensity {
        Propensity::Known(e) => vec![e; rct.len()],
        Propensity::Fitted => {
            let m = fit_logistic(&rct.design(), &rct.a)?;
            m.fitted_values.into_iter().map(|p| cfg.trim(p)).collect()
        }
    })
}

pub fn generalize_all(rct: &Sample, eligible: &Sample, cfg: &GeneralizationConfig) -> Result<GenEstimates> {
    cfg.validate()?;
    let fits = OutcomeFits::fit(rct, eligible)?;
    let odds = fit_sampling_odds_with(rct, eligible, cfg.trim)?;
    let e = rct_propensity(rct, cfg)?;
    let n0 = eligible.len();
    Ok(GenEstimates {
        om: fits.om(),
        ipsw: ipsw_estimator(rct, n0, &odds.odds_rct, &e)?,
        aipsw: aipsw_estimator(rct, n0, &odds.odds_rct, &e, &fits)?,
        sampling_converged: odds.model.converged,
    })
}

/// ψ̂_gen for the configured method; only the nuisances it needs are fit.
pub fn generalize(rct: &Sample, eligible: &Sample, cfg: &GeneralizationConfig) -> Result<f64> {
    cfg.validate()?;
    match cfg.method {
        GenMethod::Om => om_estimator(rct, eligible),
        GenMethod::Ipsw => {
            let odds = fit_sampling_odds_with(rct, eligible, cfg.trim)?;
            ipsw_estimator(rct, eligible.len(), &odds.odds_rct, &rct_propensity(rct, cfg)?)
        }
        GenMethod::Aipsw => Ok(generalize_all(rct, eligible, cfg)?.aipsw),
    }
}
