//! Exact event-driven simulation of the first time some site carries `k`
//! mutations.
//!
//! Candidate mutations for all stages are drawn from one merged Poisson
//! stream of total rate `N * sum(mu)`; each candidate gets a stage with
//! probability `mu_j / sum(mu)` and a uniform location. A stage `j`
//! candidate at `(x, t)` becomes a mutation iff `x` already lies in the
//! stage `j - 1` region at time `t`, i.e. inside the cone of some accepted
//! stage `j - 1` mutation. Regions are never discretised, so the returned
//! `sigma_k` has exactly the model's law.

mod grid;
mod replicate;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{self, TorusPoint, VolumeEstimate};
use grid::CellGrid;

pub use replicate::{map_replicates, replicate, replicate_seed, replicate_with, ReplicateOptions};

/// RNG used for every simulation stream.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Model parameters. The torus has volume `volume = N` and side `N^(1/d)`;
/// `mu[j - 1]` is the rate per unit volume of stage `j` mutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub d: usize,
    pub volume: f64,
    pub alpha: f64,
    pub mu: Vec<f64>,
    pub k: usize,
}

impl ModelParams {
    pub fn new(d: usize, volume: f64, alpha: f64, mu: Vec<f64>) -> Result<Self> {
        let params = ModelParams {
            d,
            volume,
            alpha,
            k: mu.len(),
            mu,
        };
        params.validate()?;
        Ok(params)
    }

    /// Unit torus with unit speed: `sigma_k` of this model is `Z_{d,k}(c)`.
    pub fn unit_torus(d: usize, c: Vec<f64>) -> Result<Self> {
        Self::new(d, 1.0, 1.0, c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.d == 0 {
            return bad("dimension d must be at least 1".into());
        }
        if !(self.volume.is_finite() && self.volume > 0.0) {
            return bad(format!("volume must be positive and finite, got {}", self.volume));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if self.k == 0 {
            return bad("target stage k must be at least 1".into());
        }
        if self.mu.len() != self.k {
            return bad(format!("expected {} mutation rates, got {}", self.k, self.mu.len()));
        }
        if let Some(r) = self.mu.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return bad(format!("mutation rates must be positive and finite, got {r}"));
        }
        Ok(())
    }

    /// Side length `L = N^(1/d)`.
    pub fn side(&self) -> f64 {
        match self.d {
            1 => self.volume,
            2 => self.volume.sqrt(),
            3 => self.volume.cbrt(),
            d => self.volume.powf(1.0 / d as f64),
        }
    }

    /// Total candidate rate `N * sum(mu)`.
    pub fn total_rate(&self) -> f64 {
        self.volume * self.mu.iter().sum::<f64>()
    }

    /// Space-time rescaling by `lambda`: `L -> lambda L`, `alpha -> lambda alpha`,
    /// `mu -> mu / lambda^d`. The rescaled model has the same law of `sigma_k`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        let shrink = lambda.powi(self.d as i32);
        ModelParams {
            d: self.d,
            volume: self.volume * lambda.powi(self.d as i32),
            alpha: self.alpha * lambda,
            mu: self.mu.iter().map(|m| m / shrink).collect(),
            k: self.k,
        }
    }
}

/// An accepted mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationEvent {
    pub stage: usize,
    pub location: TorusPoint,
    pub time: f64,
}

/// Knobs that do not change the law of the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Give up once the clock passes this time.
    pub t_max: f64,
    /// Give up after this many candidates.
    pub candidate_cap: u64,
    /// Index accepted apexes in a uniform grid instead of scanning them all.
    pub spatial_index: bool,
    /// Typical time scale used to size grid cells; `t_max` when absent.
    #[serde(default)]
    pub index_horizon: Option<f64>,
}

pub const DEFAULT_CANDIDATE_CAP: u64 = 100_000_000;

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            t_max: f64::INFINITY,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            spatial_index: false,
            index_horizon: None,
        }
    }
}

impl SimOptions {
    pub fn with_t_max(t_max: f64) -> Self {
        SimOptions {
            t_max,
            ..Default::default()
        }
    }

    pub fn indexed(mut self) -> Self {
        self.spatial_index = true;
        self
    }
}

/// Accepted mutations of one stage.
#[derive(Debug, Clone)]
struct Stage {
    events: Vec<MutationEvent>,
    /// Indices into `events` scanned by membership queries. With `prune`
    /// set, cones contained in an earlier cone are left out.
    frontier: Vec<u32>,
    grid: Option<CellGrid>,
    /// Whether to test new cones for containment. That costs one query per
    /// accepted event and only pays off when queries are at least as common.
    prune: bool,
}

impl Stage {
    fn new(d: usize, side: f64, reach_hint: Option<f64>, prune: bool) -> Self {
        Stage {
            events: Vec::new(),
            frontier: Vec::new(),
            grid: reach_hint.map(|h| CellGrid::new(d, side, h)),
            prune,
        }
    }
}

/// Accepted mutations of every stage up to `clock`.
#[derive(Debug, Clone)]
pub struct ProcessState {
    d: usize,
    side: f64,
    alpha: f64,
    stages: Vec<Stage>,
    pub candidate_count: u64,
    pub clock: f64,
}

impl ProcessState {
    pub fn new(params: &ModelParams, opts: &SimOptions) -> Self {
        let side = params.side();
        let reach = if opts.spatial_index {
            Some(params.alpha * opts.index_horizon.unwrap_or(opts.t_max))
        } else {
            None
        };
        ProcessState {
            d: params.d,
            side,
            alpha: params.alpha,
            stages: (0..params.k)
                .map(|j| {
                    let prune = j + 1 == params.k || params.mu[j + 1] >= params.mu[j];
                    Stage::new(params.d, side, reach, prune)
                })
                .collect(),
            candidate_count: 0,
            clock: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.stages.len()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Accepted stage `stage` mutations in time order (`stage` in `1..=k`).
    pub fn accepted(&self, stage: usize) -> &[MutationEvent] {
        &self.stages[stage - 1].events
    }

    /// Whether site `x` has type at least `j` at time `t`.
    ///
    /// Panics if `j > k`.
    pub fn is_member(&self, x: &[f64], t: f64, j: usize) -> bool {
        assert!(j <= self.k(), "stage {j} exceeds k = {}", self.k());
        if j == 0 {
            return true;
        }
        let stage = &self.stages[j - 1];
        if stage.frontier.is_empty() {
            return false;
        }
        let (alpha, side) = (self.alpha, self.side);
        let hit = |id: u32| {
            let e = &stage.events[id as usize];
            torus::covers(x, t, e.location.coords(), e.time, alpha, side)
        };
        match &stage.grid {
            Some(grid) => {
                let first = stage.events[stage.frontier[0] as usize].time;
                grid.any_within(x, alpha * (t - first).max(0.0), hit)
            }
            None => stage.frontier.iter().rev().any(|&id| hit(id)),
        }
    }

    fn accept(&mut self, stage: usize, location: &[f64], time: f64) {
        let redundant = self.stages[stage - 1].prune && self.is_member(location, time, stage);
        let st = &mut self.stages[stage - 1];
        let id = st.events.len() as u32;
        st.events.push(MutationEvent {
            stage,
            location: TorusPoint::new(location.to_vec(), self.side),
            time,
        });
        if !redundant {
            st.frontier.push(id);
            if let Some(grid) = st.grid.as_mut() {
                grid.insert(location, id);
            }
        }
    }

    /// Hit-test estimate of the stage `j` volume `Y_j(t)`.
    pub fn hit_test_volume<R: Rng + ?Sized>(
        &self,
        j: usize,
        t: f64,
        n_samples: usize,
        rng: &mut R,
    ) -> VolumeEstimate {
        if j >= 1 && self.stages[j - 1].events.is_empty() {
            return VolumeEstimate::ZERO;
        }
        torus::hit_test(self.d, self.side, n_samples, rng, |x| self.is_member(x, t, j))
    }

    pub fn summary(&self) -> StateSummary {
        StateSummary {
            accepted: self.stages.iter().map(|s| s.events.len()).collect(),
            first_times: self
                .stages
                .iter()
                .map(|s| s.events.first().map(|e| e.time))
                .collect(),
            clock: self.clock,
        }
    }
}

/// Whether `x` has type at least `j` at time `t`.
pub fn is_member(x: &TorusPoint, t: f64, j: usize, state: &ProcessState) -> bool {
    state.is_member(x.coords(), t, j)
}

/// A candidate point of the merged Poisson stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub stage: usize,
    pub location: Vec<f64>,
    pub time: f64,
}

/// Merged candidate stream for stage rates `rates` on a torus of volume `N`.
#[derive(Debug, Clone)]
struct CandidateStream {
    d: usize,
    side: f64,
    total: f64,
    cumulative: Vec<f64>,
}

impl CandidateStream {
    fn new(d: usize, volume: f64, side: f64, rates: &[f64]) -> Self {
        let sum: f64 = rates.iter().sum();
        let mut acc = 0.0;
        let cumulative = rates
            .iter()
            .map(|r| {
                acc += r / sum;
                acc
            })
            .collect();
        CandidateStream {
            d,
            side,
            total: volume * sum,
            cumulative,
        }
    }

    /// Advances `clock` and writes the candidate location into `location`.
    fn next<R: Rng + ?Sized>(&self, clock: &mut f64, location: &mut [f64], rng: &mut R) -> usize {
        let wait: f64 = Exp1.sample(rng);
        *clock += wait / self.total;
        let stage = if self.cumulative.len() == 1 {
            1
        } else {
            let u: f64 = rng.random();
            self.cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.cumulative.len() - 1)
                + 1
        };
        debug_assert_eq!(location.len(), self.d);
        torus::fill_uniform(location, self.side, rng);
        stage
    }
}

/// Draws the next candidate of the merged stream and advances `state.clock`.
pub fn next_candidate<R: Rng + ?Sized>(
    params: &ModelParams,
    state: &mut ProcessState,
    rng: &mut R,
) -> Candidate {
    let stream = CandidateStream::new(params.d, params.volume, params.side(), &params.mu);
    let mut location = vec![0.0; params.d];
    let stage = stream.next(&mut state.clock, &mut location, rng);
    state.candidate_count += 1;
    Candidate {
        stage,
        location,
        time: state.clock,
    }
}

/// Why a run stopped before a stage `k` mutation appeared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timeout {
    TimeLimit,
    CandidateCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sigma {
    Finite(f64),
    Timeout(Timeout),
}

impl Sigma {
    pub fn value(self) -> Option<f64> {
        match self {
            Sigma::Finite(s) => Some(s),
            Sigma::Timeout(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    /// Accepted mutations per stage.
    pub accepted: Vec<usize>,
    /// Time of the first accepted mutation of each stage.
    pub first_times: Vec<Option<f64>>,
    pub clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub sigma: Sigma,
    pub events_at_stop: StateSummary,
    pub seed: u64,
    pub candidates_used: u64,
}

enum Stop {
    /// Stop at the first stage `k` mutation.
    FirstOfLastStage,
    /// Run every stage until the clock passes this time.
    At(f64),
}

/// Runs the thinning construction. When `dominating` is given, candidates
/// are drawn at those rates and a stage `j` candidate is a point of the
/// rate `mu_j` process iff its uniform mark is below `mu_j / dominating_j`.
fn run<R: Rng + ?Sized>(
    params: &ModelParams,
    dominating: Option<&[f64]>,
    opts: &SimOptions,
    stop: Stop,
    rng: &mut R,
) -> (ProcessState, Sigma) {
    let rates = dominating.unwrap_or(&params.mu);
    let keep: Vec<f64> = params.mu.iter().zip(rates).map(|(m, r)| m / r).collect();
    let stream = CandidateStream::new(params.d, params.volume, params.side(), rates);
    let mut state = ProcessState::new(params, opts);
    let mut location = vec![0.0; params.d];
    let horizon = match stop {
        Stop::FirstOfLastStage => opts.t_max,
        Stop::At(t) => t,
    };
    loop {
        if state.candidate_count >= opts.candidate_cap {
            return (state, Sigma::Timeout(Timeout::CandidateCap));
        }
        let mut clock = state.clock;
        let stage = stream.next(&mut clock, &mut location, rng);
        if clock > horizon {
            state.clock = horizon;
            return (state, Sigma::Timeout(Timeout::TimeLimit));
        }
        state.clock = clock;
        state.candidate_count += 1;
        if dominating.is_some() && rng.random::<f64>() >= keep[stage - 1] {
            continue;
        }
        if !state.is_member(&location, clock, stage - 1) {
            continue;
        }
        state.accept(stage, &location, clock);
        if stage == params.k && matches!(stop, Stop::FirstOfLastStage) {
            return (state, Sigma::Finite(clock));
        }
    }
}

fn outcome(state: &ProcessState, sigma: Sigma, seed: u64) -> SimOutcome {
    SimOutcome {
        sigma,
        events_at_stop: state.summary(),
        seed,
        candidates_used: state.candidate_count,
    }
}

/// Simulates `sigma_k` exactly. Returns a timeout when the clock passes
/// `opts.t_max` or more than `opts.candidate_cap` candidates are needed.
pub fn simulate_sigma(params: &ModelParams, seed: u64, opts: &SimOptions) -> SimOutcome {
    let mut rng = rng_from_seed(seed);
    let (state, sigma) = run(params, None, opts, Stop::FirstOfLastStage, &mut rng);
    outcome(&state, sigma, seed)
}

/// As [`simulate_sigma`], but also returns the final process state.
pub fn simulate_sigma_state(params: &ModelParams, seed: u64, opts: &SimOptions) -> (SimOutcome, ProcessState) {
    let mut rng = rng_from_seed(seed);
    let (state, sigma) = run(params, None, opts, Stop::FirstOfLastStage, &mut rng);
    (outcome(&state, sigma, seed), state)
}

/// Simulates `sigma_k` by thinning a stream drawn at `dominating` rates
/// (each at least the matching `mu`). Runs sharing a seed and `dominating`
/// are coupled: raising any `mu_j` can only make `sigma_k` earlier.
pub fn simulate_sigma_thinned(
    params: &ModelParams,
    dominating: &[f64],
    seed: u64,
    opts: &SimOptions,
) -> Result<SimOutcome> {
    if dominating.len() != params.k
        || dominating.iter().zip(&params.mu).any(|(d, m)| !(d.is_finite() && d >= m))
    {
        return Err(Error::InvalidParams(
            "dominating rates must be finite and at least the model rates".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let (state, sigma) = run(params, Some(dominating), opts, Stop::FirstOfLastStage, &mut rng);
    Ok(outcome(&state, sigma, seed))
}

/// Draws `Z_{d,k}(c)`: `sigma_k` on the unit torus with unit speed and rates `c`.
pub fn simulate_z(d: usize, c: &[f64], seed: u64, opts: &SimOptions) -> Result<SimOutcome> {
    let params = ModelParams::unit_torus(d, c.to_vec())?;
    Ok(simulate_sigma(&params, seed, opts))
}

/// Runs every stage up to time `t_end` without stopping at stage `k`.
/// `opts.t_max` is ignored; the candidate cap still applies and hitting it
/// is an error.
pub fn evolve_until<R: Rng + ?Sized>(
    params: &ModelParams,
    t_end: f64,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<ProcessState> {
    let mut opts = opts.clone();
    opts.t_max = t_end;
    let (state, sigma) = run(params, None, &opts, Stop::At(t_end), rng);
    match sigma {
        Sigma::Timeout(Timeout::CandidateCap) => Err(Error::InvalidParams(format!(
            "candidate cap {} reached before t = {t_end}",
            opts.candidate_cap
        ))),
        _ => Ok(state),
    }
}
