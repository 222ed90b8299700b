//! Empirical distribution tools for comparing simulated draws with limit laws.

use serde::{Deserialize, Serialize};

use crate::laws::LimitLaw;

/// Sorted finite draws plus the number of runs that timed out.
///
/// Timed-out runs are treated as draws larger than every finite value: they
/// count in the denominator of [`ecdf`] but never below any `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    pub values: Vec<f64>,
    pub n: usize,
    pub timeouts: usize,
    pub base_seed: u64,
    pub scale_applied: f64,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>, timeouts: usize, base_seed: u64) -> Self {
        values.sort_by(f64::total_cmp);
        EmpiricalSample {
            n: values.len(),
            values,
            timeouts,
            base_seed,
            scale_applied: 1.0,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self::new(values, 0, 0)
    }

    /// Finite draws plus timeouts.
    pub fn total(&self) -> usize {
        self.n + self.timeouts
    }

    pub fn timeout_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.timeouts as f64 / self.total() as f64
        }
    }

    /// Every value multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0, "scale factor must be positive");
        EmpiricalSample {
            values: self.values.iter().map(|v| v * factor).collect(),
            scale_applied: self.scale_applied * factor,
            ..self.clone()
        }
    }

    /// Mean and standard error of the finite draws.
    pub fn mean_and_se(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }

    /// Number of draws `<= t`.
    pub fn count_le(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v <= t)
    }
}

/// Fraction of draws `<= t`. Panics on an empty sample.
pub fn ecdf(sample: &EmpiricalSample, t: f64) -> f64 {
    assert!(sample.total() > 0, "empirical CDF of an empty sample");
    sample.count_le(t) as f64 / sample.total() as f64
}

/// Kolmogorov-Smirnov distance `sup_t |F_n(t) - F(t)|` between the sample
/// and `law`. The sample must already be on the law's scale.
pub fn ks_statistic(sample: &EmpiricalSample, law: &LimitLaw) -> f64 {
    ks_against(sample, |t| law.cdf(t))
}

/// Kolmogorov-Smirnov distance against an arbitrary continuous CDF.
pub fn ks_against<F: Fn(f64) -> f64>(sample: &EmpiricalSample, cdf: F) -> f64 {
    let m = sample.total() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sample.values.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((i + 1) as f64 / m - f).max(f - i as f64 / m);
    }
    if sample.timeouts > 0 {
        // the ecdf stays at n/m past the last finite value while F -> 1
        sup = sup.max(sample.timeouts as f64 / m);
    }
    sup
}

/// Dvoretzky-Kiefer-Wolfowitz half-width `sqrt(ln(2/delta) / (2n))`: with
/// probability at least `1 - delta` the empirical CDF of `n` draws is within
/// this distance of the true CDF everywhere.
pub fn dkw_band(n: usize, delta: f64) -> f64 {
    assert!(n >= 1, "DKW band needs at least one draw");
    assert!(delta > 0.0 && delta < 1.0, "confidence level must be in (0, 1)");
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Two-sample Kolmogorov-Smirnov distance `sup_t |F_a(t) - F_b(t)|`.
pub fn two_sample_ks(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    assert!(a.total() > 0 && b.total() > 0, "two-sample KS needs nonempty samples");
    let (ma, mb) = (a.total() as f64, b.total() as f64);
    let (xs, ys) = (&a.values, &b.values);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let t = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / ma - j as f64 / mb).abs());
    }
    sup
}
