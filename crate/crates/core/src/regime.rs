//! Maps a finite parameter tuple onto one of the asymptotic cases.
//!
//! Asymptotic orderings have no meaning for a single tuple, so each
//! dimensionless ratio `r` is read as `<<` when `r < 1/theta`, `>>` when
//! `r > theta` and comparable otherwise.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::laws::{law_for_case_with, LawOptions, LimitLaw};
use crate::sim::ModelParams;

pub const DEFAULT_THRESHOLD: f64 = 10.0;

/// Relative tolerance for treating the `k >= 3` rates as equal.
const EQUAL_RATE_TOL: f64 = 1e-12;

/// Asymptotic case. `Two(i)` are the eleven cases for `k = 2`, `Many(i)` the
/// three equal-rate cases for `k >= 3`; `Single` is `k = 1`, where
/// `N mu_1 sigma_1` is exactly Exponential(1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    Single,
    Two(u8),
    Many(u8),
}

impl Case {
    /// Parses `"6"` or `"case6"` relative to the target stage `k`.
    pub fn parse(s: &str, k: usize) -> Result<Case> {
        let digits = s.trim().trim_start_matches("case");
        let id: u8 = digits
            .parse()
            .map_err(|_| Error::InvalidCase(format!("cannot parse case id {s:?}")))?;
        let case = match k {
            0 => return Err(Error::InvalidCase("k must be at least 1".into())),
            1 => Case::Single,
            2 => Case::Two(id),
            _ => Case::Many(id),
        };
        if k == 1 && id != 1 {
            return Err(Error::InvalidCase(format!("k = 1 only has case 1, got {id}")));
        }
        case.check_k(k)?;
        Ok(case)
    }

    pub fn id(self) -> u8 {
        match self {
            Case::Single => 1,
            Case::Two(i) | Case::Many(i) => i,
        }
    }

    /// Checks that this case exists for target stage `k`.
    pub fn check_k(self, k: usize) -> Result<()> {
        let ok = match self {
            Case::Single => k == 1,
            Case::Two(i) => k == 2 && (1..=11).contains(&i),
            Case::Many(i) => k >= 3 && (1..=3).contains(&i),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCase(format!("{self} does not exist for k = {k}")))
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Case::Single => write!(f, "k1-case1"),
            Case::Two(i) => write!(f, "k2-case{i}"),
            Case::Many(i) => write!(f, "k3plus-case{i}"),
        }
    }
}

impl Serialize for Case {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Dimensionless ratios that decide the case.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `mu_i N^((d+1)/d) / alpha`: fixation time over waiting time for stage `i`.
    pub r_fix: Vec<f64>,
    /// `mu_2 alpha^d / (N mu_1)^(d+1)`.
    pub r_beta: Option<f64>,
    /// `N mu_2 / (mu_1 alpha^d)^(1/(d+1))`.
    pub r_sat: Option<f64>,
    /// `mu_2 / mu_1`, only for `k = 2`.
    pub r_mu: Option<f64>,
}

impl Diagnostics {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        for (i, r) in self.r_fix.iter().enumerate() {
            map.insert(format!("r_fix_{}", i + 1), *r);
        }
        for (name, r) in [("r_beta", self.r_beta), ("r_sat", self.r_sat), ("r_mu", self.r_mu)] {
            if let Some(r) = r {
                map.insert(name.to_string(), r);
            }
        }
        map
    }
}

impl Serialize for Diagnostics {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

pub fn diagnostics(params: &ModelParams) -> Diagnostics {
    let d = params.d as f64;
    let n = params.volume;
    let alpha = params.alpha;
    let mu = &params.mu;
    let fix_unit = n.powf((d + 1.0) / d) / alpha;
    let r_fix = mu.iter().map(|m| m * fix_unit).collect();
    let (r_beta, r_sat) = if params.k >= 2 {
        let alpha_d = alpha.powf(d);
        (
            Some(mu[1] * alpha_d / (n * mu[0]).powf(d + 1.0)),
            Some(n * mu[1] / (mu[0] * alpha_d).powf(1.0 / (d + 1.0))),
        )
    } else {
        (None, None)
    };
    Diagnostics {
        r_fix,
        r_beta,
        r_sat,
        r_mu: (params.k == 2).then(|| mu[1] / mu[0]),
    }
}

/// Reading of a ratio against the `theta` band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    MuchLess,
    Comparable,
    MuchGreater,
}

pub fn order(r: f64, theta: f64) -> Order {
    if r < 1.0 / theta {
        Order::MuchLess
    } else if r > theta {
        Order::MuchGreater
    } else {
        Order::Comparable
    }
}

/// Factor by which `r` clears the boundary of its band (at least 1).
fn clearance(r: f64, theta: f64) -> f64 {
    match order(r, theta) {
        Order::MuchLess => 1.0 / (theta * r),
        Order::MuchGreater => r / theta,
        Order::Comparable => (r * theta).min(theta / r),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub case: Case,
    pub ratios: Diagnostics,
    pub law: LimitLaw,
    /// Multiplier `m` such that `m * sigma_k` follows `law`.
    pub timescale: f64,
    /// Smallest factor by which a deciding ratio clears its band boundary:
    /// `10^(smallest |log10 r - log10 boundary|)`. Infinite for `k = 1`.
    #[serde(serialize_with = "finite_or_null")]
    pub margin: f64,
    pub threshold: f64,
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

/// Picks the case and the deciding ratios without building the law.
pub fn select_case(params: &ModelParams, theta: f64) -> Result<(Case, f64)> {
    params.validate()?;
    if !(theta > 1.0) {
        return Err(Error::InvalidParams(format!("threshold must exceed 1, got {theta}")));
    }
    let diag = diagnostics(params);
    let unclassifiable = |why: &str| {
        Error::Unclassifiable(format!(
            "{why}; ratios {}",
            serde_json::to_string(&diag).unwrap_or_default()
        ))
    };
    let margin_of = |rs: &[f64]| rs.iter().map(|&r| clearance(r, theta)).fold(f64::INFINITY, f64::min);
    let fix = diag.r_fix[0];
    match params.k {
        1 => Ok((Case::Single, f64::INFINITY)),
        2 => {
            let (r_beta, r_sat, r_mu) = (
                diag.r_beta.expect("k = 2"),
                diag.r_sat.expect("k = 2"),
                diag.r_mu.expect("k = 2"),
            );
            match order(fix, theta) {
                Order::MuchLess => {
                    let id = match order(r_mu, theta) {
                        Order::MuchGreater => 1,
                        Order::MuchLess => 2,
                        Order::Comparable => 3,
                    };
                    Ok((Case::Two(id), margin_of(&[fix, r_mu])))
                }
                Order::MuchGreater => {
                    let (beta, sat) = (order(r_beta, theta), order(r_sat, theta));
                    let mut hits: Vec<(u8, Vec<f64>)> = Vec::new();
                    if beta == Order::MuchGreater {
                        hits.push((4, vec![fix, r_beta]));
                    }
                    if beta == Order::Comparable {
                        hits.push((5, vec![fix, r_beta]));
                    }
                    if beta == Order::MuchLess && sat == Order::MuchGreater {
                        hits.push((6, vec![fix, r_beta, r_sat]));
                    }
                    if sat == Order::Comparable {
                        hits.push((7, vec![fix, r_sat]));
                    }
                    if sat == Order::MuchLess {
                        hits.push((8, vec![fix, r_sat]));
                    }
                    match hits.as_slice() {
                        [(id, rs)] => Ok((Case::Two(*id), margin_of(rs))),
                        _ => Err(unclassifiable(&format!(
                            "conditions of cases {:?} hold at once",
                            hits.iter().map(|h| h.0).collect::<Vec<_>>()
                        ))),
                    }
                }
                Order::Comparable => {
                    let id = match order(r_beta, theta) {
                        Order::MuchGreater => 9,
                        Order::MuchLess => 10,
                        Order::Comparable => 11,
                    };
                    Ok((Case::Two(id), margin_of(&[fix, r_beta])))
                }
            }
        }
        _ => {
            let first = params.mu[0];
            if params.mu.iter().any(|m| (m - first).abs() > EQUAL_RATE_TOL * first) {
                return Err(unclassifiable("k >= 3 is only classified for equal mutation rates"));
            }
            let id = match order(fix, theta) {
                Order::MuchLess => 1,
                Order::MuchGreater => 2,
                Order::Comparable => 3,
            };
            Ok((Case::Many(id), margin_of(&[fix])))
        }
    }
}

/// Classifies `params` with band `theta` and builds the matching law.
pub fn classify(params: &ModelParams, theta: f64) -> Result<RegimeReport> {
    classify_with(params, theta, &LawOptions::default())
}

pub fn classify_with(params: &ModelParams, theta: f64, opts: &LawOptions) -> Result<RegimeReport> {
    let (case, margin) = select_case(params, theta)?;
    let law = law_for_case_with(case, params, opts)?;
    Ok(RegimeReport {
        case,
        ratios: diagnostics(params),
        timescale: law.time_scale,
        law,
        margin,
        threshold: theta,
    })
}

/// Multiplier `m` such that `m * sigma_k` is compared with the unit-scale law.
pub fn predicted_timescale(report: &RegimeReport) -> f64 {
    report.timescale
}

/// Default simulation horizon: `multiplier` times the law's mean on the
/// original time scale.
pub fn default_t_max(law: &LimitLaw, multiplier: f64) -> f64 {
    multiplier * law.mean().max(1.0) / law.time_scale
}
