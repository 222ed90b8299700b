//! Analytic quantities of the model and the limit laws of the scaled
//! waiting time `sigma_k`.

use serde::Serialize;
use statrs::function::gamma::{gamma, gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;
use crate::regime::{self, Case};
use crate::sim::{self, ModelParams, SimOptions};
use crate::stats::{dkw_band, ecdf, EmpiricalSample};
use crate::torus::unit_ball_volume;

/// Absolute tolerance for the Case 5 and Case 7 integrals.
const QUAD_TOL: f64 = 1e-9;

/// Relative rate gap below which the partial-fraction hypoexponential
/// formula is abandoned for the uniformization series.
const HYPOEXP_GAP: f64 = 1e-6;

fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Probability that a fixed site carries at least one mutation at time `t`:
/// `1 - exp(-gamma_d mu_1 alpha^d t^(d+1) / (d+1))`.
pub fn q_fraction(t: f64, mu1: f64, alpha: f64, d: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = unit_ball_volume(d) * mu1 * alpha.powi(d as i32) * t.powi(d as i32 + 1) / (d as f64 + 1.0);
    -(-x).exp_m1()
}

/// Exact `E[Y_1(t)] = N q(t)`, valid while `alpha t <= L / 2`.
pub fn mean_y1(t: f64, params: &ModelParams) -> Result<f64> {
    let window = params.side() / (2.0 * params.alpha);
    if !(0.0..=window).contains(&t) {
        return Err(Error::Domain(format!(
            "mean_y1 needs 0 <= t <= L/(2 alpha) = {window}, got {t}"
        )));
    }
    Ok(params.volume * q_fraction(t, params.mu[0], params.alpha, params.d))
}

/// Overlap-free approximation of the volume with at least `k` mutations,
/// `v_k(t) = gamma_d^k (d!)^k / (k(d+1))! * prod(mu_1..mu_k) N alpha^(kd) t^(k(d+1))`,
/// with `v_0 = N`.
pub fn v_k(k: usize, t: f64, params: &ModelParams) -> f64 {
    params.volume * y_k(k, t, params)
}

/// `y_k = v_k / N`, an upper bound on the probability that a fixed site has
/// at least `k` mutations at time `t`.
pub fn y_k(k: usize, t: f64, params: &ModelParams) -> f64 {
    assert!(k <= params.k, "y_k needs k <= {}", params.k);
    if k == 0 {
        return 1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let d = params.d;
    let kf = k as f64;
    let ln = kf * unit_ball_volume(d).ln() + kf * ln_factorial(d) - ln_factorial(k * (d + 1))
        + params.mu[..k].iter().map(|m| m.ln()).sum::<f64>()
        + kf * d as f64 * params.alpha.ln()
        + kf * (d as f64 + 1.0) * t.ln();
    ln.exp()
}

/// Characteristic time `beta_k = (N alpha^((k-1)d) prod(mu))^(-1/((k-1)d+k))`.
pub fn beta_k(params: &ModelParams) -> f64 {
    let (d, k) = (params.d as f64, params.k as f64);
    let ln = params.volume.ln()
        + (k - 1.0) * d * params.alpha.ln()
        + params.mu.iter().map(|m| m.ln()).sum::<f64>();
    (-ln / ((k - 1.0) * d + k)).exp()
}

/// Time bound `sqrt(d) N^(1/d) / (2 alpha)` for one mutation to cover the torus.
pub fn fixation_time_bound(d: usize, volume: f64, alpha: f64) -> f64 {
    (d as f64).sqrt() * volume.powf(1.0 / d as f64) / (2.0 * alpha)
}

/// CDF of a sum of independent exponentials with the given rates.
/// Infinite rates contribute a zero summand.
pub fn hypoexp_cdf(rates: &[f64], t: f64) -> f64 {
    let finite: Vec<f64> = rates.iter().copied().filter(|r| r.is_finite()).collect();
    assert!(finite.iter().all(|&r| r > 0.0), "hypoexponential rates must be positive");
    if t < 0.0 {
        return 0.0;
    }
    match finite.len() {
        0 => 1.0,
        1 => -(-finite[0] * t).exp_m1(),
        _ => {
            let max = finite.iter().cloned().fold(0.0, f64::max);
            let mut gap = f64::INFINITY;
            for (i, a) in finite.iter().enumerate() {
                for b in &finite[i + 1..] {
                    gap = gap.min((a - b).abs());
                }
            }
            if gap > HYPOEXP_GAP * max {
                hypoexp_partial_fractions(&finite, t)
            } else {
                hypoexp_uniformized(&finite, t)
            }
        }
    }
}

fn hypoexp_partial_fractions(rates: &[f64], t: f64) -> f64 {
    let mut survival = 0.0;
    for (i, &li) in rates.iter().enumerate() {
        let weight: f64 = rates
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &lj)| lj / (lj - li))
            .product();
        survival += weight * (-li * t).exp();
    }
    (1.0 - survival).clamp(0.0, 1.0)
}

/// Uniformization: with `lam = max(rates)`, the phase chain jumps at Poisson
/// rate `lam` and leaves phase `i` with probability `rates[i] / lam` per jump,
/// so `F(t) = sum_n Pois(n; lam t) P(absorbed within n jumps)`. Every term is
/// nonnegative, which keeps it stable when rates nearly coincide.
fn hypoexp_uniformized(rates: &[f64], t: f64) -> f64 {
    let lam = rates.iter().cloned().fold(0.0, f64::max);
    let x = lam * t;
    if x == 0.0 {
        return 0.0;
    }
    let leave: Vec<f64> = rates.iter().map(|r| r / lam).collect();
    let m = rates.len();
    let mut phase = vec![0.0; m];
    phase[0] = 1.0;
    let mut absorbed = 0.0;
    let ln_x = x.ln();
    let mut ln_w = -x;
    let last = (x + 40.0 * x.sqrt() + 50.0).ceil() as usize;
    let mut cdf = 0.0;
    for n in 0..=last {
        if n > 0 {
            ln_w += ln_x - (n as f64).ln();
            // one uniformized jump, processed from the last phase backwards
            absorbed += phase[m - 1] * leave[m - 1];
            for i in (0..m).rev() {
                let out = phase[i] * leave[i];
                phase[i] -= out;
                if i + 1 < m {
                    phase[i + 1] += out;
                }
            }
            // the last phase's outflow was counted above; undo its transfer
        }
        cdf += ln_w.exp() * absorbed;
    }
    cdf.clamp(0.0, 1.0)
}

/// Leading constant of `P(Z_{d,k}(c) <= t) ~ const * t^((k-1)d+k)` as `t -> 0`:
/// `(d!)^(k-1) gamma_d^(k-1) prod(c) / ((k-1)d+k)!`.
pub fn z_small_t_constant(d: usize, c: &[f64]) -> f64 {
    let k = c.len();
    let km1 = (k - 1) as f64;
    (km1 * ln_factorial(d) + km1 * unit_ball_volume(d).ln() + c.iter().map(|x| x.ln()).sum::<f64>()
        - ln_factorial((k - 1) * d + k))
        .exp()
}

/// `J_k(t) = exp(-c_1 t) prod_{j>=2} exp(-c_j gamma_d t^(d+1) / (d+1))`.
pub fn j_factor(d: usize, c: &[f64], t: f64) -> f64 {
    let g = unit_ball_volume(d);
    let tail: f64 = c[1..].iter().map(|cj| cj * g * t.powi(d as i32 + 1) / (d as f64 + 1.0)).sum();
    (-c[0] * t - tail).exp()
}

/// Lower and upper bounds on `P(Z_{d,k}(c) <= t)` for `0 <= t < 1/2`:
/// the upper bound is `const * t^((k-1)d+k)` (first moment), the lower bound
/// multiplies it by `J_k(t)`.
pub fn z_bounds(d: usize, c: &[f64], t: f64) -> Result<(f64, f64)> {
    if !(0.0..0.5).contains(&t) {
        return Err(Error::Domain(format!("small-t bounds need 0 <= t < 1/2, got {t}")));
    }
    let k = c.len();
    let upper = z_small_t_constant(d, c) * t.powi(((k - 1) * d + k) as i32);
    Ok((j_factor(d, c, t) * upper, upper))
}

/// Draws of `Z_{d,k}(c)` backing an empirical limit law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZSample {
    pub d: usize,
    pub c: Vec<f64>,
    pub n: usize,
    pub timeouts: usize,
    /// DKW half-width of the sample at 99% confidence.
    pub band: f64,
    #[serde(skip)]
    pub sample: EmpiricalSample,
}

impl ZSample {
    pub fn draw(d: usize, c: &[f64], n: usize, seed: u64) -> Result<Self> {
        let params = ModelParams::unit_torus(d, c.to_vec())?;
        let upper_mean = (c.len() as f64 - 1.0) * (d as f64).sqrt() / 2.0 + c.iter().map(|x| 1.0 / x).sum::<f64>();
        let opts = SimOptions::with_t_max(40.0 * upper_mean);
        let sample = sim::replicate(&params, n, seed, &opts)?;
        Ok(ZSample {
            d,
            c: c.to_vec(),
            n,
            timeouts: sample.timeouts,
            band: dkw_band(n, 0.01),
            sample,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawKind {
    Exponential { rate: f64 },
    Hypoexponential { rates: Vec<f64> },
    Gamma { shape: f64, rate: f64 },
    /// Survival `exp(-coefficient * t^exponent)`.
    StretchedExp { coefficient: f64, exponent: f64 },
    /// Survival `exp(-int_0^t 1 - exp(-c gamma_d y^(d+1) / (d+1)) dy)`.
    IntegralCase5 { c: f64, d: usize },
    /// Survival `exp(-c^a int_0^t 1 - exp(-gamma_d y^(d+1) / ((d+1) c^a)) dy)`
    /// with `a = (d+1)/(d+2)`.
    IntegralCase7 { c: f64, d: usize },
    /// Survival `exp(-gamma_d^(k-1) (d!)^(k-1) t^(d(k-1)+k) / (d(k-1)+k)!)`.
    Case2K { d: usize, k: usize },
    ZEmpirical(ZSample),
}

/// A limit distribution for `time_scale * sigma_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitLaw {
    pub kind: LawKind,
    pub time_scale: f64,
}

impl LimitLaw {
    pub fn new(kind: LawKind, time_scale: f64) -> Self {
        LimitLaw { kind, time_scale }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        cdf(self, t)
    }

    /// Mean of the unit-scale law (the sample mean for empirical laws).
    pub fn mean(&self) -> f64 {
        match &self.kind {
            LawKind::Exponential { rate } => 1.0 / rate,
            LawKind::Hypoexponential { rates } => rates.iter().filter(|r| r.is_finite()).map(|r| 1.0 / r).sum(),
            LawKind::Gamma { shape, rate } => shape / rate,
            LawKind::StretchedExp { coefficient, exponent } => stretched_mean(*coefficient, *exponent),
            LawKind::Case2K { d, k } => {
                let (coefficient, exponent) = case2k_form(*d, *k);
                stretched_mean(coefficient, exponent)
            }
            LawKind::IntegralCase5 { .. } | LawKind::IntegralCase7 { .. } => self.numeric_mean(),
            LawKind::ZEmpirical(z) => z.sample.mean_and_se().0,
        }
    }

    fn numeric_mean(&self) -> f64 {
        let mut end = 1.0;
        while 1.0 - self.cdf(end) > 1e-12 && end < 1e6 {
            end *= 2.0;
        }
        adaptive_simpson(|t| 1.0 - self.cdf(t), 0.0, end, 1e-7)
    }
}

fn stretched_mean(coefficient: f64, exponent: f64) -> f64 {
    gamma(1.0 + 1.0 / exponent) * coefficient.powf(-1.0 / exponent)
}

fn case2k_form(d: usize, k: usize) -> (f64, f64) {
    let km1 = (k - 1) as f64;
    let power = (k - 1) * d + k;
    let coefficient =
        (km1 * unit_ball_volume(d).ln() + km1 * ln_factorial(d) - ln_factorial(power)).exp();
    (coefficient, power as f64)
}

/// CDF of the unit-scale law at `t`.
pub fn cdf(law: &LimitLaw, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match &law.kind {
        LawKind::Exponential { rate } => -(-rate * t).exp_m1(),
        LawKind::Hypoexponential { rates } => hypoexp_cdf(rates, t),
        LawKind::Gamma { shape, rate } => gamma_lr(*shape, rate * t),
        LawKind::StretchedExp { coefficient, exponent } => -(-coefficient * t.powf(*exponent)).exp_m1(),
        LawKind::Case2K { d, k } => {
            let (coefficient, exponent) = case2k_form(*d, *k);
            -(-coefficient * t.powf(exponent)).exp_m1()
        }
        LawKind::IntegralCase5 { c, d } => {
            let a = c * unit_ball_volume(*d) / (*d as f64 + 1.0);
            let p = *d as i32 + 1;
            let integral = adaptive_simpson(|y| -(-a * y.powi(p)).exp_m1(), 0.0, t, QUAD_TOL);
            -(-integral).exp_m1()
        }
        LawKind::IntegralCase7 { c, d } => {
            let df = *d as f64;
            let ca = c.powf((df + 1.0) / (df + 2.0));
            let a = unit_ball_volume(*d) / ((df + 1.0) * ca);
            let p = *d as i32 + 1;
            let integral = adaptive_simpson(|y| -(-a * y.powi(p)).exp_m1(), 0.0, t, QUAD_TOL / ca.max(1.0));
            -(-ca * integral).exp_m1()
        }
        LawKind::ZEmpirical(z) => ecdf(&z.sample, t),
    }
}

/// How laws backed by `Z_{d,k}` samples are materialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LawOptions {
    pub z_samples: usize,
    pub z_seed: u64,
}

impl Default for LawOptions {
    fn default() -> Self {
        LawOptions {
            z_samples: 10_000,
            z_seed: 0x5EED_2A11,
        }
    }
}

/// Limit law of `sigma_k` for `case`, with its time scale.
pub fn law_for_case(case: Case, params: &ModelParams) -> Result<LimitLaw> {
    law_for_case_with(case, params, &LawOptions::default())
}

pub fn law_for_case_with(case: Case, params: &ModelParams, opts: &LawOptions) -> Result<LimitLaw> {
    params.validate()?;
    case.check_k(params.k)?;
    let n = params.volume;
    let d = params.d;
    let mu = &params.mu;
    let exp1 = LawKind::Exponential { rate: 1.0 };
    let ratios = regime::diagnostics(params);
    let z_law = |c: Vec<f64>| -> Result<LimitLaw> {
        let z = ZSample::draw(d, &c, opts.z_samples, opts.z_seed)?;
        Ok(LimitLaw::new(LawKind::ZEmpirical(z), params.alpha / params.side()))
    };
    let law = match case {
        Case::Single => LimitLaw::new(exp1, n * mu[0]),
        Case::Two(id) => match id {
            1 | 4 | 9 => LimitLaw::new(exp1, n * mu[0]),
            2 | 8 | 10 => LimitLaw::new(exp1, n * mu[1]),
            3 => LimitLaw::new(
                LawKind::Hypoexponential {
                    rates: vec![1.0, mu[1] / mu[0]],
                },
                n * mu[0],
            ),
            5 => LimitLaw::new(
                LawKind::IntegralCase5 {
                    c: ratios.r_beta.expect("k = 2"),
                    d,
                },
                n * mu[0],
            ),
            6 => {
                let df = d as f64;
                LimitLaw::new(
                    LawKind::StretchedExp {
                        coefficient: unit_ball_volume(d) / ((df + 1.0) * (df + 2.0)),
                        exponent: df + 2.0,
                    },
                    1.0 / beta_k(params),
                )
            }
            7 => LimitLaw::new(
                LawKind::IntegralCase7 {
                    c: ratios.r_sat.expect("k = 2"),
                    d,
                },
                1.0 / beta_k(params),
            ),
            11 => z_law(ratios.r_fix.clone())?,
            _ => unreachable!("checked by check_k"),
        },
        Case::Many(id) => match id {
            1 => {
                let slowest = mu.iter().cloned().fold(f64::INFINITY, f64::min);
                if mu.iter().all(|&m| m == slowest) {
                    LimitLaw::new(
                        LawKind::Gamma {
                            shape: params.k as f64,
                            rate: 1.0,
                        },
                        n * slowest,
                    )
                } else {
                    LimitLaw::new(
                        LawKind::Hypoexponential {
                            rates: mu.iter().map(|m| m / slowest).collect(),
                        },
                        n * slowest,
                    )
                }
            }
            2 => LimitLaw::new(LawKind::Case2K { d, k: params.k }, 1.0 / beta_k(params)),
            3 => z_law(ratios.r_fix.clone())?,
            _ => unreachable!("checked by check_k"),
        },
    };
    Ok(law)
}
