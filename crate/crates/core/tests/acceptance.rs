//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stdout (uncaptured) and then asserts.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use synthbound::bootstrap::{bootstrap_many, BootstrapConfig};
use synthbound::cli::{cmd_simulate, Paths};
use synthbound::dataset::{EligibilityCriteria, FusedDataset, Sample, UnitRecord};
use synthbound::epsen::{evaluate, original, EpsilonBox, EpsilonPoint, Estimator, SensitivityInputs};
use synthbound::generalize::{generalize, GenMethod, GeneralizationConfig};
use synthbound::ovb::{
    bias_abs, estimate_transform_components, pooled_r2, short_regression, transform_r2, ConditionalMeans, R2Box,
    R2Point, ShortEstimate, TREATMENT,
};
use synthbound::regress::{expit, fit_ols, partial_r2_nested};
use synthbound::rng::{normal, seeded};
use synthbound::sim::{
    default_q_grid, generate, run_fixed_q, run_q_sweep, MethodMatrix, Scenario, ScenarioConfig, SensSpec, OS_ONLY,
};
use synthbound::synthesis::{asymptotic_variance, calibrate_eps_range, Framework, DEFAULT_SHRINK};

fn report(n: u32, pass: bool, detail: &str, start: Instant) {
    let line = format!(
        "criterion {n}: {} ({detail}; {:.1}s)\n",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{line}");
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

#[test]
fn criterion_1_reduction_identities() {
    let t = Instant::now();
    let mut rng = seeded(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(4..40);
        let mut a: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        a[0] = 1.0;
        a[1] = 0.0;
        let y = (0..n).map(|_| 5.0 * normal(&mut rng)).collect();
        let mu1 = (0..n).map(|_| 5.0 * normal(&mut rng)).collect();
        let mu0 = (0..n).map(|_| 5.0 * normal(&mut rng)).collect();
        let e = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let d = SensitivityInputs::new(y, a, mu1, mu0, e).unwrap();
        for est in Estimator::ALL {
            let diff = (evaluate(est, &d, EpsilonPoint::NULL) - original(est, &d)).abs();
            worst = worst.max(diff);
        }
    }
    report(1, worst <= 1e-12, &format!("max |modified(1,1) - original| = {worst:.3e} over 1000 datasets"), t);
}

fn linear_dgp(seed: u64, n: usize) -> (Sample, Vec<f64>) {
    let mut rng = seeded(seed);
    let g: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
    let mut x = synthbound::linalg::Matrix::zeros(n, 2);
    let (mut y, mut a, mut u) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (x1, x2) = (normal(&mut rng), normal(&mut rng));
        x.set(i, 0, x1);
        x.set(i, 1, x2);
        u[i] = g[0] * x1 + normal(&mut rng);
        a[i] = f64::from(rng.random::<f64>() < expit(g[1] * x2 + g[2] * u[i]));
        y[i] = 2.0 * a[i] + x1 - 0.5 * x2 + g[3] * u[i] + g[4] * normal(&mut rng).abs() + normal(&mut rng);
    }
    (Sample::new(y, a, x, vec!["x1".into(), "x2".into()]).unwrap(), u)
}

#[test]
fn criterion_2_ovb_bias_identity() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for k in 0..200 {
        let (s, u) = linear_dgp(2000 + k, 300);
        let short = short_regression(&s).unwrap();
        let long = fit_ols(&s.design_with(&[(TREATMENT, &s.a), ("u", &u)]), &s.y).unwrap();
        let r2_y = partial_r2_nested(&long, &short).unwrap();
        let r2_a = partial_r2_nested(
            &fit_ols(&s.design_with(&[("u", &u)]), &s.a).unwrap(),
            &fit_ols(&s.design(), &s.a).unwrap(),
        )
        .unwrap();
        let est = ShortEstimate::from_fit(&short, 1).unwrap();
        let b = bias_abs(R2Point::new(r2_a, r2_y).unwrap(), est.se, est.df).unwrap();
        let gap = (short.coefficients[1] - long.coefficients[1]).abs();
        worst = worst.max((b - gap).abs());
    }
    report(2, worst <= 1e-6, &format!("max |bias_abs - |short - long|| = {worst:.3e} over 200 DGPs"), t);
}

/// Composite Simpson rule on [lo, hi] with an even number of panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..panels {
        s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Exact Scenario II conditional means, integrating U ~ N(0, 4²) out numerically.
fn exact_means(os: &Sample, u: &[f64], v_star: Vec<u8>) -> ConditionalMeans {
    let n = os.len();
    let phi = |z: f64| (-0.5 * (z / 4.0).powi(2)).exp() / (4.0 * (2.0 * std::f64::consts::PI).sqrt());
    let mut cm = ConditionalMeans {
        y: os.y.clone(),
        a: os.a.clone(),
        m_y_uax: vec![0.0; n],
        m_y_ax: vec![0.0; n],
        m_a_ux: vec![0.0; n],
        m_a_x: vec![0.0; n],
        v_star,
    };
    for i in 0..n {
        let (x1, x2, x3) = (os.x.get(i, 0), os.x.get(i, 1), os.x.get(i, 2));
        let lin = 0.5 * x1 - 0.6 * x2 + 0.3 * x3;
        let a = os.a[i];
        let base = 1.0 + 10.0 * a + x1 + 1.5 * x2 + 2.0 * x3;
        let pa = simpson(|z| expit(lin + 0.5 * z) * phi(z), -48.0, 48.0, 960);
        let w = |z: f64| if a == 1.0 { expit(lin + 0.5 * z) } else { 1.0 - expit(lin + 0.5 * z) };
        let mass = if a == 1.0 { pa } else { 1.0 - pa };
        let eu = simpson(|z| z * w(z) * phi(z), -48.0, 48.0, 960) / mass;
        cm.m_y_uax[i] = base + 0.5 * u[i];
        cm.m_y_ax[i] = base + 0.5 * eu;
        cm.m_a_ux[i] = expit(lin + 0.5 * u[i]);
        cm.m_a_x[i] = pa;
    }
    cm
}

#[test]
fn criterion_3_pooled_r2_identity() {
    let t = Instant::now();
    let cfg = ScenarioConfig { super_population_size: 2000, seed: 303, ..ScenarioConfig::new(Scenario::II, 0.7) };
    let mut worst = 0.0f64;
    for rep in 0..50 {
        let g = generate(&cfg, rep).unwrap();
        let v: Vec<u8> = g.data.os().iter().map(|r| r.v_star).collect();
        let cm = exact_means(&g.data.os_sample(), &g.hidden.u_os, v);
        let via = transform_r2(&estimate_transform_components(&cm).unwrap()).unwrap();
        let direct = pooled_r2(&cm).unwrap();
        worst = worst.max((via.r2_a - direct.r2_a).abs()).max((via.r2_y - direct.r2_y).abs());
    }
    report(3, worst <= 1e-6, &format!("max |transform - direct| = {worst:.3e} over 50 draws"), t);
}

fn desk(s: Scenario) -> ScenarioConfig {
    ScenarioConfig { replications: 20, seed: 2024, ..ScenarioConfig::new(s, 0.7) }
}

#[test]
fn criterion_4_table4_desk_scale() {
    let t = Instant::now();
    let m = MethodMatrix::scenario_one();
    let tab = run_fixed_q(&desk(Scenario::I), &m).unwrap();
    let os = tab.find("OR", OS_ONLY).unwrap().mbw;
    let syn = tab.find("OR", "OM").unwrap().mbw;
    let mut ok = within(os, 23.79, 0.15) && within(syn, 8.32, 0.15);
    let mut notes = vec![format!("OS OR mbw {os:.2} (23.79), OR/OM mbw {syn:.2} (8.32)")];
    for (k, spec) in m.sensitivity.iter().enumerate() {
        for (g, gm) in m.generalization.iter().enumerate() {
            let rate = tab.ordering_rate(k, g);
            if rate < 0.9 {
                ok = false;
                notes.push(format!("{}/{} ordering {rate:.2}", spec.label(), gm.name()));
            }
        }
    }
    let gen_sd = |m: GenMethod| {
        let v: Vec<f64> = tab.replications.iter().filter_map(|r| r.psi_gen.map(|g| g.get(m))).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let (sd_om, sd_ipsw) = (gen_sd(GenMethod::Om), gen_sd(GenMethod::Ipsw));
    ok &= sd_ipsw >= 3.0 * sd_om;
    notes.push(format!("generalization sd IPSW {sd_ipsw:.2} vs OM {sd_om:.2}"));
    report(4, ok, &notes.join("; "), t);
}

#[test]
fn criterion_5_table_b1_desk_scale() {
    let t = Instant::now();
    let m = MethodMatrix::scenario_two();
    let tab = run_fixed_q(&desk(Scenario::II), &m).unwrap();
    let bench = tab.find("x1 bounding", OS_ONLY).unwrap().mbw;
    let fixed = tab.find("fixed value bounding", OS_ONLY).unwrap().mbw;
    let mut ok = within(bench, 7.18, 0.20) && within(fixed, 12.20, 0.15);
    let mut notes = vec![format!("x1 OS mbw {bench:.2} (7.18), fixed-value OS mbw {fixed:.2} (12.20)")];
    for (k, spec) in m.sensitivity.iter().enumerate() {
        for (g, gm) in m.generalization.iter().enumerate() {
            let rate = tab.ordering_rate(k, g);
            if rate < 0.9 {
                ok = false;
            }
            notes.push(format!("{}/{} ordering {rate:.2}", spec.label(), gm.name()));
        }
    }
    report(5, ok, &notes.join("; "), t);
}

/// Largest rise of a 3-point moving average anywhere along the series.
fn max_rise(series: &[f64]) -> f64 {
    let n = series.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let w = &series[i.saturating_sub(1)..(i + 2).min(n)];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    let mut rise = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            rise = rise.max(smooth[j] - smooth[i]);
        }
    }
    rise
}

#[test]
fn criterion_6_ratio_sweep_shape() {
    let t = Instant::now();
    let grid = default_q_grid();
    let cases = [
        (Scenario::I, SensSpec::Epsen { estimator: Estimator::Or, range: EpsilonBox::square(0.9, 1.1).unwrap() }),
        (Scenario::II, SensSpec::Fixed { range: R2Box { a_max: 0.1, y_max: 0.8 } }),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (s, spec) in cases {
        let pts = run_q_sweep(&desk(s), &grid, &spec, GenMethod::Om).unwrap();
        let r: Vec<f64> = pts.iter().map(|p| p.ratio).collect();
        let (lo, hi, rise) = (r[0], r[r.len() - 1], max_rise(&r));
        let pass = (0.85..=1.05).contains(&lo) && hi < 0.2 && rise <= 0.05;
        ok &= pass;
        notes.push(format!("scenario {s:?}: ratio(0.05) {lo:.3}, ratio(0.95) {hi:.3}, max rise {rise:.3}"));
    }
    report(6, ok, &notes.join("; "), t);
}

#[test]
fn criterion_7_asymptotic_variance() {
    let t = Instant::now();
    let cfg = ScenarioConfig { seed: 77, ..ScenarioConfig::new(Scenario::I, 0.7) };
    let eps = EpsilonPoint::new(1.1, 0.9).unwrap();
    let gen = GeneralizationConfig::new(GenMethod::Om);
    let stat = |d: &FusedDataset| -> synthbound::Result<Vec<f64>> {
        let psi0 = generalize(&d.rct_sample(), &d.eligible_sample(), &gen)?;
        let psi1 = evaluate(Estimator::Or, &SensitivityInputs::fit(&d.ineligible_sample())?, eps);
        Ok(vec![psi0, psi1])
    };
    let reps = 40;
    let mut syn = Vec::new();
    let mut predicted = Vec::new();
    for rep in 0..reps {
        let g = generate(&cfg, rep).unwrap();
        let d = &g.data;
        let b = BootstrapConfig { replicates: 100, seed: 9000 + rep as u64, ci_level: 0.95 };
        let s = bootstrap_many(d, stat, &b).unwrap();
        let (p0, big_n) = (d.p0n(), d.big_n() as f64);
        let (psi0, psi1) = (s.point[0], s.point[1]);
        syn.push(p0 * psi0 + (1.0 - p0) * psi1);
        let sigma0 = d.n0() as f64 * s.variance(0);
        let sigma1 = d.n1() as f64 * s.variance(1);
        predicted.push(asymptotic_variance(psi0, psi1, p0, sigma0, sigma1).unwrap() / big_n);
    }
    let m = syn.iter().sum::<f64>() / reps as f64;
    let empirical = syn.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let av = predicted.iter().sum::<f64>() / reps as f64;
    let ratio = empirical / av;
    report(
        7,
        (0.5..=2.0).contains(&ratio),
        &format!("empirical var {empirical:.4}, mean AV/N {av:.4}, ratio {ratio:.3} over {reps} reps"),
        t,
    );
}

fn random_dataset(rng: &mut synthbound::rng::SimRng) -> FusedDataset {
    let beta: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
    let cut = rng.random_range(-0.8..0.8);
    let unit = |s: u8, rng: &mut synthbound::rng::SimRng| loop {
        let x = [normal(rng), normal(rng)];
        if s == 1 && x[0] > cut {
            continue;
        }
        let a = if s == 1 { u8::from(rng.random_bool(0.5)) } else { u8::from(rng.random::<f64>() < expit(beta[2] * x[1])) };
        let y = beta[0] * x[0] + beta[1] * x[1] + 3.0 * f64::from(a) + normal(rng);
        return UnitRecord { y, a, s, covariates: x.to_vec(), v_star: u8::from(x[0] > cut) };
    };
    let rct = (0..80).map(|_| unit(1, rng)).collect();
    let os = (0..400).map(|_| unit(0, rng)).collect();
    let crit = EligibilityCriteria::new(vec![synthbound::Rule {
        var: "x1".into(),
        op: synthbound::dataset::CompareOp::Le,
        threshold: cut,
    }]);
    FusedDataset::new(vec!["x1".into(), "x2".into()], rct, os, crit).unwrap()
}

#[test]
fn criterion_8_calibration_terminates() {
    let t = Instant::now();
    let mut rng = seeded(808);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for k in 0..100 {
        let d = random_dataset(&mut rng);
        let lo = rng.random_range(0.5..1.0);
        let hi = rng.random_range(1.0..2.0);
        let fw = if k % 4 == 3 {
            Framework::Ovb { range: R2Box::new(rng.random_range(0.0..0.5), rng.random_range(0.0..1.0)).unwrap() }
        } else {
            Framework::Epsen { estimator: Estimator::ALL[k % 4], range: EpsilonBox::square(lo, hi).unwrap() }
        };
        let w0 = rng.random_range(0.0..2.0);
        match calibrate_eps_range(&d, &fw, w0, DEFAULT_SHRINK) {
            Ok(c) => worst = worst.max(c.width - w0),
            Err(_) => failures += 1,
        }
    }
    report(
        8,
        failures == 0 && worst <= 0.0,
        &format!("{failures} errors, max (width - W0) = {worst:.3e} over 100 configs"),
        t,
    );
}

#[test]
fn criterion_9_simulate_is_deterministic() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{"scenario":{"scenario":"I","q":0.7,"super_population_size":20000,"os_size":500,"replications":3}}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        std::fs::create_dir_all(&out).unwrap();
        cmd_simulate(&Paths { config: config.clone(), data: None, out: out.clone(), seed: Some(5) }).unwrap();
        ["table.csv", "table.json"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    report(9, a == b, "two cmd_simulate runs with seed 5 compared byte for byte", t);
}
