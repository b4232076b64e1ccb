//! Regression engine for every nuisance quantity: OLS outcome models,
//! logistic propensity and sampling models, nested partial R², and
//! residualization.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};

/// Fitted probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-6;
const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-8;
const IRLS_RIDGE: f64 = 1e-8;
const SEPARATION_ETA: f64 = 30.0;

pub const INTERCEPT: &str = "(intercept)";

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// A design matrix with column names.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: Matrix,
    pub names: Vec<String>,
}

impl Design {
    pub fn new(x: Matrix, names: Vec<String>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch { expected: x.ncols(), found: names.len() });
        }
        Ok(Self { x, names })
    }

    /// Intercept followed by the given named columns.
    pub fn with_intercept(columns: &[(&str, &[f64])]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        let p = columns.len() + 1;
        let mut x = Matrix::zeros(n, p);
        for i in 0..n {
            x.set(i, 0, 1.0);
        }
        for (j, (name, col)) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: col.len() });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite value in column `{name}`")));
            }
            for (i, v) in col.iter().enumerate() {
                x.set(i, j + 1, *v);
            }
        }
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(columns.iter().map(|c| c.0.to_string()));
        Ok(Self { x, names })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn without(&self, name: &str) -> Result<Design> {
        let drop = self.index_of(name).ok_or_else(|| Error::UnknownCovariate(name.to_string()))?;
        let keep: Vec<usize> = (0..self.ncols()).filter(|&j| j != drop).collect();
        Ok(Design {
            x: self.x.select_columns(&keep),
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
        })
    }

    pub fn rows(&self, idx: &[usize]) -> Design {
        Design { x: self.x.select_rows(idx), names: self.names.clone() }
    }

    fn has_intercept(&self) -> bool {
        self.ncols() > 0 && (0..self.nrows()).all(|i| self.x.get(i, 0) == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Logistic,
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub fitted_values: Vec<f64>,
    /// OLS only.
    pub residual_variance: Option<f64>,
    /// OLS only.
    pub r_squared: Option<f64>,
    pub df: usize,
    pub coef_se: Vec<f64>,
    pub converged: bool,
    /// Logistic only.
    pub deviance: Option<f64>,
    pub rss: f64,
    pub tss: f64,
    pub n_obs: usize,
    pub iterations: usize,
    pub ridge_applied: bool,
}

impl FittedModel {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coefficients[j])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coef_se[j])
    }
}

fn rank_error(design: &Design, col: usize) -> Error {
    Error::RankDeficient { column: design.names[col].clone() }
}

fn total_ss(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

pub fn fit_ols(design: &Design, y: &[f64]) -> Result<FittedModel> {
    let n = design.nrows();
    let p = design.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n < p + 1 {
        return Err(Error::InvalidInput(format!("OLS needs more rows ({n}) than columns ({p})")));
    }
    if !design.has_intercept() {
        return Err(Error::InvalidInput("OLS design must start with an intercept column".into()));
    }
    let ls = least_squares(&design.x, y, None, 0.0).map_err(|d| rank_error(design, d.0))?;
    let fitted = design.x.matvec(&ls.coef);
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let tss = total_ss(y);
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let df = n - p;
    let sigma2 = rss / df as f64;
    let coef_se = ls.inv_gram_diag.iter().map(|d| (sigma2 * d).sqrt()).collect();
    Ok(FittedModel {
        kind: ModelKind::Ols,
        names: design.names.clone(),
        coefficients: ls.coef,
        fitted_values: fitted,
        residual_variance: Some(sigma2),
        r_squared: Some(r2),
        df,
        coef_se,
        converged: true,
        deviance: None,
        rss,
        tss,
        n_obs: n,
        iterations: 1,
        ridge_applied: false,
    })
}

fn bernoulli_deviance(y: &[f64], mu: &[f64]) -> f64 {
    -2.0 * y
        .iter()
        .zip(mu)
        .map(|(&t, &m)| if t > 0.5 { m.ln() } else { (1.0 - m).ln() })
        .sum::<f64>()
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares. Separation is reported through `converged = false`.
pub fn fit_logistic(design: &Design, y: &[f64]) -> Result<FittedModel> {
    let n = design.nrows();
    let p = design.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic response must be 0/1".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::OneClass);
    }
    // structural rank check on the unweighted design
    least_squares(&design.x, y, None, 0.0).map_err(|d| rank_error(design, d.0))?;

    // internal guard only; the reported probabilities use PROB_CLAMP
    let guard = |m: f64| m.clamp(1e-15, 1.0 - 1e-15);
    let mut mu: Vec<f64> = y.iter().map(|v| (v + 0.5) / 2.0).collect();
    let mut eta: Vec<f64> = mu.iter().map(|m| (m / (1.0 - m)).ln()).collect();
    let mut dev_old = bernoulli_deviance(y, &mu);
    let mut coef = vec![0.0; p];
    let mut converged = false;
    let mut ridge_applied = false;
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    for it in 1..=IRLS_MAX_ITER {
        iterations = it;
        for i in 0..n {
            w[i] = mu[i] * (1.0 - mu[i]);
            z[i] = eta[i] + (y[i] - mu[i]) / w[i];
        }
        let ls = match least_squares(&design.x, &z, Some(&w), 0.0) {
            Ok(ls) => ls,
            Err(_) => {
                ridge_applied = true;
                least_squares(&design.x, &z, Some(&w), IRLS_RIDGE)
                    .map_err(|d| rank_error(design, d.0))?
            }
        };
        coef = ls.coef;
        eta = design.x.matvec(&coef);
        for i in 0..n {
            mu[i] = guard(expit(eta[i]));
        }
        let dev = bernoulli_deviance(y, &mu);
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < IRLS_TOL {
            converged = true;
            dev_old = dev;
            break;
        }
        dev_old = dev;
    }

    let separated = dev_old < 1e-6 || eta.iter().any(|e| e.abs() > SEPARATION_ETA);
    if separated {
        converged = false;
    }

    for i in 0..n {
        w[i] = mu[i] * (1.0 - mu[i]);
    }
    let zeros = vec![0.0; n];
    let se_fit = least_squares(&design.x, &zeros, Some(&w), 0.0).or_else(|_| {
        ridge_applied = true;
        least_squares(&design.x, &zeros, Some(&w), IRLS_RIDGE)
    });
    let coef_se = match se_fit {
        Ok(ls) => ls.inv_gram_diag.iter().map(|d| d.sqrt()).collect(),
        Err(_) => vec![f64::NAN; p],
    };

    let fitted: Vec<f64> = eta.iter().map(|&e| clamp_prob(expit(e))).collect();
    let rss = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(FittedModel {
        kind: ModelKind::Logistic,
        names: design.names.clone(),
        coefficients: coef,
        fitted_values: fitted,
        residual_variance: None,
        r_squared: None,
        df: n - p,
        coef_se,
        converged,
        deviance: Some(dev_old),
        rss,
        tss: total_ss(y),
        n_obs: n,
        iterations,
        ridge_applied,
    })
}

/// Linear predictor for OLS; clamped inverse-logit for logistic models.
pub fn predict(model: &FittedModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.ncols() != model.coefficients.len() {
        return Err(Error::DimensionMismatch { expected: model.coefficients.len(), found: x.ncols() });
    }
    let lin = x.matvec(&model.coefficients);
    Ok(match model.kind {
        ModelKind::Ols => lin,
        ModelKind::Logistic => lin.into_iter().map(|e| clamp_prob(expit(e))).collect(),
    })
}

const PARTIAL_R2_CAP: f64 = 1.0 - 1e-12;

/// (R²_full − R²_reduced) / (1 − R²_reduced), kept in [0, 1 − 1e-12].
pub fn partial_r2_from_r2(full: f64, reduced: f64) -> f64 {
    if reduced >= 1.0 {
        return if full >= 1.0 { 0.0 } else { f64::NAN };
    }
    ((full - reduced) / (1.0 - reduced)).clamp(0.0, PARTIAL_R2_CAP)
}

/// Partial R² of the columns present in `full` but not in `reduced`.
pub fn partial_r2_nested(full: &FittedModel, reduced: &FittedModel) -> Result<f64> {
    if full.kind != ModelKind::Ols || reduced.kind != ModelKind::Ols {
        return Err(Error::NonNested("partial R² needs two OLS fits".into()));
    }
    if full.n_obs != reduced.n_obs {
        return Err(Error::NonNested("fits use different rows".into()));
    }
    let scale = full.tss.abs().max(reduced.tss.abs()).max(f64::MIN_POSITIVE);
    if (full.tss - reduced.tss).abs() > 1e-9 * scale {
        return Err(Error::NonNested("fits use different responses".into()));
    }
    if let Some(missing) = reduced.names.iter().find(|n| !full.names.contains(n)) {
        return Err(Error::NonNested(format!("`{missing}` is not in the full model")));
    }
    if reduced.rss <= 0.0 {
        return Ok(0.0);
    }
    // identical to the R² form, computed from residual sums for accuracy
    let v = (reduced.rss - full.rss) / reduced.rss;
    Ok(v.clamp(0.0, PARTIAL_R2_CAP))
}

/// OLS residuals of `target` on `design`.
pub fn residualize(target: &[f64], design: &Design) -> Result<Vec<f64>> {
    if target.len() != design.nrows() {
        return Err(Error::DimensionMismatch { expected: design.nrows(), found: target.len() });
    }
    let ls = least_squares(&design.x, target, None, 0.0).map_err(|d| rank_error(design, d.0))?;
    let fitted = design.x.matvec(&ls.coef);
    Ok(target.iter().zip(fitted).map(|(t, f)| t - f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, seeded};
    use rand::Rng;

    fn line_design(xs: &[f64]) -> Design {
        Design::with_intercept(&[("x", xs)]).unwrap()
    }

    #[test]
    fn exact_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let m = fit_ols(&line_design(&xs), &y).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((m.r_squared.unwrap() - 1.0).abs() < 1e-12);
        assert!(m.residual_variance.unwrap() < 1e-24);
    }

    #[test]
    fn constant_response() {
        let xs = [0.0, 1.0, 5.0, 3.0];
        let m = fit_ols(&line_design(&xs), &[3.0; 4]).unwrap();
        assert!(m.coefficients[1].abs() < 1e-12);
        assert_eq!(m.r_squared, Some(0.0));
    }

    #[test]
    fn ols_rejects_bad_shapes() {
        let xs = [1.0, 2.0];
        assert!(matches!(fit_ols(&line_design(&xs), &[1.0, 2.0]), Err(Error::InvalidInput(_))));
        let d = Design::with_intercept(&[("x", &[1.0, 2.0, 3.0, 4.0]), ("x2", &[2.0, 4.0, 6.0, 8.0])]).unwrap();
        match fit_ols(&d, &[1.0, 0.0, 1.0, 3.0]) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "x2"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn predict_ols_and_logistic() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let m = fit_ols(&line_design(&xs), &y).unwrap();
        let at3 = predict(&m, &Matrix::from_rows(&[vec![1.0, 3.0]])).unwrap();
        assert!((at3[0] - 7.0).abs() < 1e-12);
        assert!(matches!(predict(&m, &Matrix::from_rows(&[vec![1.0]])), Err(Error::DimensionMismatch { .. })));

        let mut logit = m.clone();
        logit.kind = ModelKind::Logistic;
        logit.coefficients = vec![0.0, 0.0];
        let p = predict(&logit, &Matrix::from_rows(&[vec![1.0, 123.0], vec![1.0, -7.0]])).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        logit.coefficients = vec![-40.0, 0.0];
        let p = predict(&logit, &Matrix::from_rows(&[vec![1.0, 0.0]])).unwrap();
        assert_eq!(p[0], PROB_CLAMP);
    }

    #[test]
    fn balanced_intercept_only_logistic() {
        let d = Design::new(Matrix::from_rows(&vec![vec![1.0]; 10]), vec![INTERCEPT.into()]).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let m = fit_logistic(&d, &y).unwrap();
        assert!(m.converged);
        assert!(m.coefficients[0].abs() < 1e-10);
        assert!(m.fitted_values.iter().all(|p| (p - 0.5).abs() < 1e-10));
    }

    #[test]
    fn separated_logistic_is_flagged() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = xs.iter().map(|&x| if x < 10.0 { 0.0 } else { 1.0 }).collect();
        let m = fit_logistic(&line_design(&xs), &y).unwrap();
        assert!(!m.converged);
        assert!(m.fitted_values.iter().all(|&p| (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)));
    }

    #[test]
    fn one_class_is_an_error() {
        let xs = [0.0, 1.0, 2.0];
        assert!(matches!(fit_logistic(&line_design(&xs), &[1.0; 3]), Err(Error::OneClass)));
    }

    #[test]
    fn logistic_recovers_known_generator() {
        // 2000 draws from logit P(y=1) = -0.5 + 1.2 x; truth must lie within 3 SE
        let mut rng = seeded(11);
        let xs: Vec<f64> = (0..2000).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| if rng.random::<f64>() < expit(-0.5 + 1.2 * x) { 1.0 } else { 0.0 })
            .collect();
        let m = fit_logistic(&line_design(&xs), &y).unwrap();
        assert!(m.converged);
        assert!((m.coefficients[0] + 0.5).abs() < 3.0 * m.coef_se[0]);
        assert!((m.coefficients[1] - 1.2).abs() < 3.0 * m.coef_se[1]);
        // score equations at convergence
        for j in 0..2 {
            let score: f64 = (0..2000)
                .map(|i| d_col(&m, &xs, i, j) * (y[i] - expit(m.coefficients[0] + m.coefficients[1] * xs[i])))
                .sum();
            assert!(score.abs() < 1e-6, "score {score}");
        }
    }

    fn d_col(_m: &FittedModel, xs: &[f64], i: usize, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            xs[i]
        }
    }

    #[test]
    fn partial_r2_edge_cases() {
        let mut rng = seeded(3);
        let x1: Vec<f64> = (0..50).map(|_| normal(&mut rng)).collect();
        let x2: Vec<f64> = (0..50).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..50).map(|i| x1[i] + 0.5 * x2[i] + normal(&mut rng)).collect();
        let full = fit_ols(&Design::with_intercept(&[("x1", &x1), ("x2", &x2)]).unwrap(), &y).unwrap();
        assert_eq!(partial_r2_nested(&full, &full).unwrap(), 0.0);
        let reduced = fit_ols(&Design::with_intercept(&[("x1", &x1)]).unwrap(), &y).unwrap();
        let pr = partial_r2_nested(&full, &reduced).unwrap();
        assert!(pr > 0.0 && pr < 1.0);
        // reversed order is not nested
        assert!(matches!(partial_r2_nested(&reduced, &full), Err(Error::NonNested(_))));
        assert_eq!(partial_r2_from_r2(1.0, 0.5), 1.0 - 1e-12);
        assert_eq!(partial_r2_from_r2(0.5, 0.5), 0.0);
    }

    #[test]
    fn residualize_projection_identities() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let d = line_design(&xs);
        let in_span: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert!(residualize(&in_span, &d).unwrap().iter().all(|r| r.abs() < 1e-10));
        // orthogonal to both the intercept and x
        let orth = [1.0, -2.0, 0.0, 2.0, -1.0];
        let r = residualize(&orth, &d).unwrap();
        assert!(r.iter().zip(orth).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
