//! Stratified nonparametric bootstrap over the three strata
//! {RCT, eligible OS, ineligible OS}.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FusedDataset, UnitRecord};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{seeded, stream};
use crate::synthesis::BoundResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
}

fn default_replicates() -> usize {
    200
}

fn default_ci_level() -> f64 {
    0.95
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: default_replicates(), seed: 0, ci_level: default_ci_level() }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidInput("bootstrap needs at least 2 replicates".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidInput(format!("ci_level must lie in (0, 1), got {}", self.ci_level)));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rows: &[&UnitRecord], rng: &mut R) -> Vec<UnitRecord> {
    (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())].clone()).collect()
}

/// Resamples each stratum with replacement; (n, N0, N1) are preserved.
pub fn resample_with<R: Rng + ?Sized>(data: &FusedDataset, rng: &mut R) -> FusedDataset {
    let rct: Vec<&UnitRecord> = data.rct().iter().collect();
    let elig: Vec<&UnitRecord> = data.os().iter().filter(|r| r.v_star == 0).collect();
    let inel: Vec<&UnitRecord> = data.os().iter().filter(|r| r.v_star == 1).collect();
    let rct = draw(&rct, rng);
    let mut os = draw(&elig, rng);
    os.extend(draw(&inel, rng));
    data.from_parts_unchecked(rct, os)
}

pub fn resample(data: &FusedDataset, seed: u64) -> FusedDataset {
    resample_with(data, &mut seeded(seed))
}

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn percentile_ci(v: &[f64], level: f64) -> [f64; 2] {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    [quantile(&s, alpha), quantile(&s, 1.0 - alpha)]
}

/// Point estimates with replicate spread for several statistics.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapSummary {
    pub point: Vec<f64>,
    pub sd: Vec<f64>,
    pub ci: Vec<[f64; 2]>,
    pub failures: usize,
    pub replicates: usize,
    /// Successful replicates, one row per replicate in index order.
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
}

impl BootstrapSummary {
    pub fn variance(&self, k: usize) -> f64 {
        self.sd[k] * self.sd[k]
    }
}

/// Bootstraps a vector-valued statistic. Replicates that fail are dropped
/// and counted; more than half failing is an error.
pub fn bootstrap_many<F>(data: &FusedDataset, statistic: F, cfg: &BootstrapConfig) -> Result<BootstrapSummary>
where
    F: Fn(&FusedDataset) -> Result<Vec<f64>> + Sync + Send,
{
    cfg.validate()?;
    let point = statistic(data)?;
    let results = par::map_indexed(cfg.replicates, |b| {
        let mut rng = stream(cfg.seed, b as u64);
        statistic(&resample_with(data, &mut rng))
    });
    summarize(point, results, cfg)
}

/// Sequential twin of [`bootstrap_many`], used as the bench baseline.
pub fn bootstrap_many_seq<F>(data: &FusedDataset, statistic: F, cfg: &BootstrapConfig) -> Result<BootstrapSummary>
where
    F: Fn(&FusedDataset) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let point = statistic(data)?;
    let results = par::map_indexed_seq(cfg.replicates, |b| {
        let mut rng = stream(cfg.seed, b as u64);
        statistic(&resample_with(data, &mut rng))
    });
    summarize(point, results, cfg)
}

fn summarize(point: Vec<f64>, results: Vec<Result<Vec<f64>>>, cfg: &BootstrapConfig) -> Result<BootstrapSummary> {
    let k = point.len();
    let total = results.len();
    let draws: Vec<Vec<f64>> = results
        .into_iter()
        .filter_map(|r| r.ok())
        .filter(|v| v.len() == k && v.iter().all(|x| x.is_finite()))
        .collect();
    let failures = total - draws.len();
    if 2 * failures > total || draws.len() < 2 {
        return Err(Error::TooManyFailures { failed: failures, total });
    }
    let column = |j: usize| draws.iter().map(|d| d[j]).collect::<Vec<_>>();
    let sd = (0..k).map(|j| sample_sd(&column(j))).collect();
    let ci = (0..k).map(|j| percentile_ci(&column(j), cfg.ci_level)).collect();
    Ok(BootstrapSummary { point, sd, ci, failures, replicates: total, draws })
}

/// Bound endpoints with bootstrap SDs and percentile CIs filled in.
pub fn bootstrap_bounds<F>(data: &FusedDataset, analysis: F, cfg: &BootstrapConfig) -> Result<(BoundResult, usize)>
where
    F: Fn(&FusedDataset) -> Result<BoundResult> + Sync + Send,
{
    let s = bootstrap_many(data, |d| analysis(d).map(|b| vec![b.lower, b.upper]), cfg)?;
    let mut out = BoundResult::new(s.point[0], s.point[1]);
    fill(&mut out, &s, 0, 1);
    Ok((out, s.failures))
}

/// Copies SDs and CIs of statistics `lo` and `hi` onto `b`.
pub fn fill(b: &mut BoundResult, s: &BootstrapSummary, lo: usize, hi: usize) {
    b.sd_lower = Some(s.sd[lo]);
    b.sd_upper = Some(s.sd[hi]);
    b.ci_lower = Some(s.ci[lo]);
    b.ci_upper = Some(s.ci[hi]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EligibilityCriteria;

    fn data(n_rct: usize, n_el: usize, n_in: usize) -> FusedDataset {
        let rec = |y: f64, a, s, v| UnitRecord { y, a, s, covariates: vec![y], v_star: v };
        let rct = (0..n_rct).map(|i| rec(i as f64, (i % 2) as u8, 1, 0)).collect();
        let os = (0..n_el)
            .map(|i| rec(100.0 + i as f64, 0, 0, 0))
            .chain((0..n_in).map(|i| rec(200.0 + i as f64, 1, 0, 1)))
            .collect();
        FusedDataset::new(vec!["x".into()], rct, os, EligibilityCriteria::default()).unwrap()
    }

    #[test]
    fn strata_sizes_preserved() {
        let d = data(6, 7, 3);
        for seed in 0..100 {
            let r = resample(&d, seed);
            assert_eq!((r.n(), r.n0(), r.n1()), (6, 7, 3));
            assert!(r.os().iter().all(|u| (u.v_star == 0) == (u.y < 200.0)));
        }
    }

    #[test]
    fn single_row_stratum_repeats() {
        let d = data(4, 5, 1);
        let r = resample(&d, 3);
        let inel: Vec<_> = r.os().iter().filter(|u| u.v_star == 1).collect();
        assert_eq!(inel.len(), 1);
        assert_eq!(inel[0].y, 200.0);
    }

    #[test]
    fn same_seed_same_resample() {
        let d = data(8, 8, 8);
        assert_eq!(resample(&d, 11), resample(&d, 11));
    }

    #[test]
    fn constant_statistic_has_zero_spread() {
        let d = data(6, 6, 6);
        let cfg = BootstrapConfig { replicates: 20, seed: 1, ci_level: 0.9 };
        let (b, fails) = bootstrap_bounds(&d, |_| Ok(BoundResult::new(1.0, 2.0)), &cfg).unwrap();
        assert_eq!(fails, 0);
        assert_eq!((b.sd_lower, b.sd_upper), (Some(0.0), Some(0.0)));
        assert_eq!(b.ci_lower, Some([1.0, 1.0]));
    }

    #[test]
    fn two_identical_replicates() {
        let d = data(6, 6, 6);
        let cfg = BootstrapConfig { replicates: 2, seed: 5, ci_level: 0.95 };
        let s = bootstrap_many(&d, |_| Ok(vec![3.0]), &cfg).unwrap();
        assert_eq!(s.sd[0], 0.0);
    }

    #[test]
    fn failures_are_counted_and_capped() {
        let d = data(6, 6, 6);
        let cfg = BootstrapConfig { replicates: 40, seed: 2, ci_level: 0.95 };
        let mean_y = |d: &FusedDataset| d.rct().iter().map(|r| r.y).sum::<f64>() / d.n() as f64;
        let s = bootstrap_many(&d, |x| Ok(vec![mean_y(x)]), &cfg).unwrap();
        assert_eq!(s.failures, 0);
        let err = bootstrap_many(&d, |_| Err(Error::OneClass), &cfg);
        assert!(matches!(err, Err(Error::OneClass)));
        let always_fail_replicates =
            bootstrap_many(&d, |x| if x == &d { Ok(vec![1.0]) } else { Err(Error::OneClass) }, &cfg);
        assert!(matches!(always_fail_replicates, Err(Error::TooManyFailures { total: 40, .. })));
    }

    #[test]
    fn ci_contains_median_and_is_ordered() {
        let d = data(10, 10, 10);
        let cfg = BootstrapConfig { replicates: 60, seed: 9, ci_level: 0.9 };
        let s = bootstrap_many(&d, |x| Ok(vec![x.rct().iter().map(|r| r.y).sum::<f64>()]), &cfg).unwrap();
        let mut col: Vec<f64> = s.draws.iter().map(|r| r[0]).collect();
        col.sort_by(f64::total_cmp);
        let med = quantile(&col, 0.5);
        assert!(s.ci[0][0] <= med && med <= s.ci[0][1]);
        let par = bootstrap_many(&d, |x| Ok(vec![x.rct().iter().map(|r| r.y).sum::<f64>()]), &cfg).unwrap();
        let seq = bootstrap_many_seq(&d, |x| Ok(vec![x.rct().iter().map(|r| r.y).sum::<f64>()]), &cfg).unwrap();
        assert_eq!(par.draws, seq.draws);
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-12);
        assert!((sample_sd(&v) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
