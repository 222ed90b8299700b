//! Geometry of the periodic box `[0, L)^d`.
//!
//! Distances use the wraparound metric coordinatewise,
//! `d_L(a, b) = min(|a - b|, L - |a - b|)`, combined in the Euclidean norm.
//! Membership in a growing ball is always decided through this metric, so
//! balls whose radius exceeds `L / 2` are handled exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// A point of the torus with every coordinate in `[0, L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Builds a point, reducing every coordinate into `[0, side)`.
    pub fn new(coords: Vec<f64>, side: f64) -> Self {
        assert!(side > 0.0, "torus side must be positive");
        let coords = coords.into_iter().map(|c| reduce(c, side)).collect();
        TorusPoint { coords }
    }

    pub fn origin(d: usize) -> Self {
        TorusPoint { coords: vec![0.0; d] }
    }

    pub fn uniform<R: Rng + ?Sized>(d: usize, side: f64, rng: &mut R) -> Self {
        let mut coords = vec![0.0; d];
        fill_uniform(&mut coords, side, rng);
        TorusPoint { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

fn reduce(c: f64, side: f64) -> f64 {
    let r = c.rem_euclid(side);
    // rem_euclid can round up to `side` for tiny negative inputs
    if r >= side {
        0.0
    } else {
        r
    }
}

pub(crate) fn fill_uniform<R: Rng + ?Sized>(buf: &mut [f64], side: f64, rng: &mut R) {
    for c in buf.iter_mut() {
        *c = reduce(rng.random::<f64>() * side, side);
    }
}

/// Squared wraparound distance between two coordinate slices.
#[inline]
pub fn torus_distance_sq(a: &[f64], b: &[f64], side: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let direct = (x - y).abs();
            let gap = direct.min(side - direct);
            gap * gap
        })
        .sum()
}

/// Wraparound Euclidean distance between `x` and `y` on a torus of side `side`.
pub fn torus_distance(x: &TorusPoint, y: &TorusPoint, side: f64) -> f64 {
    assert_eq!(x.dim(), y.dim(), "points of different dimension");
    assert!(side > 0.0, "torus side must be positive");
    torus_distance_sq(&x.coords, &y.coords, side).sqrt()
}

/// Volume `gamma_d` of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    assert!(d >= 1, "dimension must be at least 1");
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => {
            let half = d as f64 / 2.0;
            std::f64::consts::PI.powf(half) / gamma(half + 1.0)
        }
    }
}

/// Space-time cone swept by a mutation appearing at `apex` at `apex_time`
/// and spreading at `speed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub apex: TorusPoint,
    pub apex_time: f64,
    pub speed: f64,
}

impl Cone {
    pub fn new(apex: TorusPoint, apex_time: f64, speed: f64) -> Self {
        assert!(speed > 0.0, "cone speed must be positive");
        Cone {
            apex,
            apex_time,
            speed,
        }
    }
}

/// Whether `site` has been reached by the cone at `query_time`.
pub fn in_cone(site: &TorusPoint, query_time: f64, cone: &Cone, side: f64) -> bool {
    covers(
        site.coords(),
        query_time,
        cone.apex.coords(),
        cone.apex_time,
        cone.speed,
        side,
    )
}

#[inline]
pub(crate) fn covers(
    site: &[f64],
    query_time: f64,
    apex: &[f64],
    apex_time: f64,
    speed: f64,
    side: f64,
) -> bool {
    if apex_time > query_time {
        return false;
    }
    let radius = speed * (query_time - apex_time);
    torus_distance_sq(site, apex, side) <= radius * radius
}

/// Monte Carlo volume estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl VolumeEstimate {
    pub const ZERO: VolumeEstimate = VolumeEstimate {
        estimate: 0.0,
        std_error: 0.0,
    };
}

/// Estimates the volume of `{x : covered(x)}` from `n_samples` uniform points.
pub fn hit_test<R, F>(d: usize, side: f64, n_samples: usize, rng: &mut R, mut covered: F) -> VolumeEstimate
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> bool,
{
    assert!(n_samples >= 1, "need at least one sample point");
    let volume = side.powi(d as i32);
    let mut buf = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..n_samples {
        fill_uniform(&mut buf, side, rng);
        if covered(&buf) {
            hits += 1;
        }
    }
    let n = n_samples as f64;
    let p = hits as f64 / n;
    VolumeEstimate {
        estimate: volume * p,
        std_error: volume * (p * (1.0 - p) / n).sqrt(),
    }
}

/// Volume at time `t` of the union of the balls grown from `events`,
/// estimated by uniform hit testing.
pub fn hit_test_volume<R: Rng + ?Sized>(
    events: &[crate::sim::MutationEvent],
    t: f64,
    alpha: f64,
    side: f64,
    n_samples: usize,
    rng: &mut R,
) -> VolumeEstimate {
    if events.is_empty() {
        return VolumeEstimate::ZERO;
    }
    let d = events[0].location.dim();
    hit_test(d, side, n_samples, rng, |x| {
        events
            .iter()
            .any(|e| covers(x, t, e.location.coords(), e.time, alpha, side))
    })
}
