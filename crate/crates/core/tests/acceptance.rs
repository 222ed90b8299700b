//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use mutclock::cli::{cmd_simulate, RunConfig};
use mutclock::laws::{self, y_k};
use mutclock::regime::{classify, Case, DEFAULT_THRESHOLD};
use mutclock::sim::{self, map_replicates, replicate_seed, ModelParams, ReplicateOptions, SimOptions};
use mutclock::stats::{ecdf, ks_statistic, two_sample_ks, EmpiricalSample};
use mutclock::torus::unit_ball_volume;
use statrs::distribution::{ContinuousCDF, Gamma};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn params(d: usize, n: f64, alpha: f64, mu: &[f64]) -> ModelParams {
    ModelParams::new(d, n, alpha, mu.to_vec()).expect("valid parameters")
}

/// Classifies, simulates `n` draws and returns the KS distance of the scaled
/// draws to the case's law along with the classification margin.
fn ks_for(p: &ModelParams, want: Case, n: usize, seed: u64, indexed: bool) -> Result<(f64, f64, usize), String> {
    let report = classify(p, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    if report.case != want {
        return Err(format!("classified as {}, expected {want}", report.case));
    }
    let law = report.law;
    let mean = law.mean() / law.time_scale;
    let opts = SimOptions {
        t_max: 20.0 * mean,
        spatial_index: indexed,
        index_horizon: Some(mean),
        ..SimOptions::default()
    };
    let sample = sim::replicate(p, n, seed, &opts).map_err(|e| e.to_string())?;
    Ok((ks_statistic(&sample.scaled(law.time_scale), &law), report.margin, sample.timeouts))
}

fn ks_line(cases: &[(&str, ModelParams, Case, bool)], n: usize, limit: f64, min_margin: f64) -> Verdict {
    let mut pass = true;
    let mut parts = vec![];
    for (i, (label, p, case, indexed)) in cases.iter().enumerate() {
        match ks_for(p, *case, n, 1000 + i as u64, *indexed) {
            Ok((ks, margin, timeouts)) => {
                let ok = ks < limit && margin >= min_margin;
                pass &= ok;
                parts.push(format!("{label}: ks={ks:.4} margin={margin:.3e} timeouts={timeouts}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    verdict(pass, format!("{} (limit {limit:.4}, n={n})", parts.join("; ")))
}

fn criterion_1() -> Verdict {
    let cases = [
        ("d=1", params(1, 500.0, 3.0, &[0.01]), Case::Single, false),
        ("d=2", params(2, 1e3, 1.0, &[1e-3]), Case::Single, false),
        ("d=3", params(3, 64.0, 0.5, &[2.0]), Case::Single, false),
    ];
    ks_line(&cases, 10_000, 0.0163, 0.0)
}

fn criterion_2() -> Verdict {
    let cases = [
        ("case3 mu1=mu2", params(1, 1e4, 1e6, &[1e-6, 1e-6]), Case::Two(3), false),
        ("case1", params(1, 1e4, 1e6, &[1e-7, 1e-4]), Case::Two(1), false),
        ("case2", params(1, 1e4, 1e6, &[1e-5, 1e-8]), Case::Two(2), false),
        ("k=3 case1", params(1, 1e4, 1e6, &[1e-6; 3]), Case::Many(1), false),
    ];
    ks_line(&cases, 5000, 0.0230 + 0.01, 0.0)
}

fn criterion_3() -> Verdict {
    let cases = [
        // r_fix = 1e10, r_beta = 1e-12, r_sat = 1e3
        ("case6", params(1, 1e6, 1.0, &[1e-2, 1e-4]), Case::Two(6), true),
        // powers of two keep r_sat = 1 exact, the only point with margin 10
        ("case7", params(1, 1048576.0, 1.0, &[0.015625, 2f64.powi(-23)]), Case::Two(7), true),
        // r_fix = 1e9
        ("k=3 case2", params(1, 1e6, 1.0, &[1e-3; 3]), Case::Many(2), true),
    ];
    ks_line(&cases, 3000, 0.0281 + 0.02, 10.0)
}

fn criterion_4() -> Verdict {
    let cases = [
        // r_fix = 1e4, r_sat = 1e-3
        ("case8", params(1, 100.0, 1.0, &[1.0, 1e-5]), Case::Two(8), true),
        // r_fix = 1, r_beta = 1e-3
        ("case10", params(1, 1.0, 1.0, &[1.0, 1e-3]), Case::Two(10), false),
    ];
    ks_line(&cases, 3000, 0.0281 + 0.02, 10.0)
}

fn criterion_5() -> Verdict {
    let unit = params(1, 1.0, 1.0, &[1.0, 1.0]);
    let scaled = unit.rescaled(2.0);
    let draw = |p: &ModelParams, seed| {
        let opts = SimOptions::with_t_max(1e3);
        sim::replicate(p, 3000, seed, &opts).unwrap().scaled(p.alpha / p.side())
    };
    let (a, b) = (draw(&unit, 51), draw(&scaled, 52));
    let ks = two_sample_ks(&a, &b);
    let c_match = (laws_c(&unit), laws_c(&scaled));
    verdict(
        ks < 0.05 && a.timeouts + b.timeouts == 0,
        format!(
            "c={:?} vs c={:?}, two-sample ks={ks:.4} (limit 0.05, n=3000 each)",
            c_match.0, c_match.1
        ),
    )
}

fn laws_c(p: &ModelParams) -> Vec<f64> {
    mutclock::regime::diagnostics(p).r_fix
}

/// Hit-test fraction of the torus with type `>= stage` at `t`, for each replicate.
fn fractions(p: &ModelParams, t: f64, stage: usize, replicates: usize, points: usize, seed: u64) -> Vec<f64> {
    let opts = SimOptions {
        spatial_index: true,
        index_horizon: Some(t),
        ..SimOptions::default()
    };
    map_replicates(replicates, seed, None, |s| {
        let mut rng = sim::rng_from_seed(s);
        let state = sim::evolve_until(p, t, &opts, &mut rng).unwrap();
        let mut probe = sim::rng_from_seed(replicate_seed(s, 0));
        state.hit_test_volume(stage, t, points, &mut probe).estimate / p.volume
    })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let s = EmpiricalSample::from_values(xs.to_vec());
    s.mean_and_se()
}

fn criterion_6() -> Verdict {
    let p = params(2, 1e4, 1.0, &[1e-3]);
    let t = 1.0;
    let vols: Vec<f64> = fractions(&p, t, 1, 200, 10_000, 6).iter().map(|f| f * p.volume).collect();
    let (mean, se) = mean_se(&vols);
    let exact = laws::mean_y1(t, &p).unwrap();
    let z = (mean - exact).abs() / se;
    verdict(z < 4.0, format!("E[Y_1(1)]: hit test {mean:.4} +- {se:.4}, closed form {exact:.4}, |z|={z:.2} (limit 4)"))
}

fn criterion_7() -> Verdict {
    let mut pass = true;
    let mut parts = vec![];
    let upper = [
        ("d=1", params(1, 1e4, 1.0, &[0.1, 0.1]), 2.0),
        ("d=2", params(2, 1e4, 1.0, &[0.01, 0.05]), 2.0),
        ("d=3", params(3, 1e3, 1.0, &[0.05, 0.05]), 2.0),
    ];
    for (i, (label, p, t)) in upper.iter().enumerate() {
        let (prob, se) = mean_se(&fractions(p, *t, 2, 100, 20_000, 70 + i as u64));
        let bound = y_k(2, *t, p);
        let ok = prob <= bound + 4.0 * se;
        pass &= ok;
        parts.push(format!("{label} t={t}: P={prob:.4e} +- {se:.1e} <= y_2={bound:.4e}"));
    }
    // mu_j alpha^d t^(d+1) = 1e-2
    let p = params(1, 1e6, 1.0, &[0.01, 0.01]);
    let (prob, se) = mean_se(&fractions(&p, 1.0, 2, 200, 100_000, 77));
    let bound = y_k(2, 1.0, &p);
    let ok = prob >= 0.8 * bound - 4.0 * se && prob <= bound + 4.0 * se;
    pass &= ok;
    parts.push(format!("no-overlap d=1 t=1: P={prob:.4e} +- {se:.1e} >= 0.8 y_2={:.4e}", 0.8 * bound));
    verdict(pass, parts.join("; "))
}

fn criterion_8() -> Verdict {
    let p = params(1, 100.0, 1.0, &[0.1]);
    let t = 1.0;
    let vols: Vec<f64> = fractions(&p, t, 1, 500, 100_000, 8).iter().map(|f| f * p.volume).collect();
    let r = vols.len() as f64;
    let mean = vols.iter().sum::<f64>() / r;
    let var = vols.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let m4 = vols.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / r;
    let var_se = ((m4 - var * var * (r - 3.0) / (r - 1.0)) / r).sqrt();
    let bound = unit_ball_volume(p.d) * (2.0 * p.alpha * t).powi(p.d as i32) * mean;
    let limit = bound * (1.0 + 4.0 * var_se / var);
    verdict(
        var <= limit,
        format!("Var(Y_1(1))={var:.4} <= gamma_d (2 alpha t)^d E[Y_1]={bound:.4}, inflated {limit:.4} (500 replicates)"),
    )
}

fn z_sample(d: usize, c: &[f64], n: usize, seed: u64, t_max: f64) -> EmpiricalSample {
    let p = ModelParams::unit_torus(d, c.to_vec()).unwrap();
    sim::replicate_with(&p, n, seed, &SimOptions::with_t_max(t_max), ReplicateOptions::default()).unwrap()
}

fn criterion_9() -> Verdict {
    let band = 0.033;
    let mut pass = true;
    let mut parts = vec![];
    for d in [1usize, 2] {
        for k in [2usize, 3] {
            let sample = z_sample(d, &vec![1.0; k], 3000, 90 + (10 * d + k) as u64, 200.0);
            let gamma = Gamma::new(k as f64, 1.0).unwrap();
            let shift = (k - 1) as f64 * (d as f64).sqrt() / 2.0;
            let mut worst: f64 = 0.0;
            for i in 0..=1500 {
                let t = i as f64 * 0.01;
                let f = ecdf(&sample, t);
                let above = f - gamma.cdf(t);
                let below = (if t > shift { gamma.cdf(t - shift) } else { 0.0 }) - f;
                worst = worst.max(above).max(below);
            }
            pass &= worst <= band && sample.timeouts == 0;
            parts.push(format!("d={d} k={k}: worst excursion {worst:.4}"));
        }
    }
    verdict(pass, format!("{} (band {band})", parts.join("; ")))
}

fn criterion_10() -> Verdict {
    let (c, t, n) = ([1.0, 1.0], 0.2, 100_000);
    let sample = z_sample(1, &c, n, 10, t);
    let prob = ecdf(&sample, t);
    let se = (prob * (1.0 - prob) / n as f64).sqrt();
    let upper = t.powi(3) / 3.0;
    let lower = laws::j_factor(1, &c, t) * upper;
    let (lo, hi) = laws::z_bounds(1, &c, t).unwrap();
    let consistent = (lo - lower).abs() < 1e-15 && (hi - upper).abs() < 1e-15;
    verdict(
        consistent && prob >= lower - 4.0 * se && prob <= upper + 4.0 * se,
        format!("P(Z<=0.2)={prob:.5e} +- {se:.1e} in [{lower:.5e}, {upper:.5e}]"),
    )
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (1..=m)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=m {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `v_k(t)` by nested quadrature of its defining recursion.
fn v_nested(k: usize, t: f64, p: &ModelParams, rule: &[(f64, f64)]) -> f64 {
    if k == 0 {
        return p.volume;
    }
    let g = unit_ball_volume(p.d);
    let half = t / 2.0;
    rule.iter()
        .map(|&(x, w)| {
            let r = half * (x + 1.0);
            w * half * p.mu[k - 1] * v_nested(k - 1, r, p, rule) * g * (p.alpha * (t - r)).powi(p.d as i32)
        })
        .sum()
}

fn criterion_11() -> Verdict {
    let rule = gauss_legendre(12);
    let mut worst: f64 = 0.0;
    for d in 1..=3 {
        for k in 1..=4 {
            let mu: Vec<f64> = (1..=k).map(|i| 0.3 * i as f64).collect();
            let p = params(d, 250.0, 1.7, &mu);
            for t in [0.5, 1.0, 2.0] {
                let closed = laws::v_k(k, t, &p);
                let oracle = v_nested(k, t, &p, &rule);
                worst = worst.max((closed / oracle - 1.0).abs());
            }
        }
    }
    verdict(worst < 1e-6, format!("max relative error {worst:.2e} over k<=4, d<=3, t in {{0.5, 1, 2}} (limit 1e-6)"))
}

fn criterion_12() -> Verdict {
    let config = RunConfig::from_json(
        r#"{"model": {"d": 2, "volume": 400.0, "alpha": 1.0, "mu": [0.01, 0.1], "k": 2},
            "replicates": 2000, "seed": 12}"#,
    )
    .unwrap();
    let runs: Vec<String> = [Some(1), Some(4), Some(8), Some(4)]
        .into_iter()
        .map(|w| cmd_simulate(&config, w).unwrap().artifact.unwrap())
        .collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    verdict(same, format!("{} artifacts of {} bytes, workers 1, 4, 8 and a rerun", runs.len(), runs[0].len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("stage-1 exactness", criterion_1),
        ("exponential waiting regimes", criterion_2),
        ("cases 6, 7 and k>=3 case 2", criterion_3),
        ("cases 8 and 10", criterion_4),
        ("space-time rescaling", criterion_5),
        ("mean stage-1 volume", criterion_6),
        ("occupancy bound and no-overlap", criterion_7),
        ("stage-1 volume variance", criterion_8),
        ("Z sandwich", criterion_9),
        ("Z small-t bounds", criterion_10),
        ("v_k oracle equivalence", criterion_11),
        ("determinism across workers", criterion_12),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {name}: {} [{secs:.1}s]", v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
