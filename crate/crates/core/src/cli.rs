//! Batch front end: run configuration, the six commands and their artifacts.
//!
//! Every command is a pure function of a [`RunConfig`] (plus the worker
//! count, which never changes results) returning a [`CommandOutput`]. CSV
//! artifacts start with a `#` provenance line carrying the tool version and
//! the SHA-256 of the effective configuration; JSON reports carry the same
//! fields.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::laws::{self, law_for_case_with, LawKind, LawOptions, LimitLaw};
use crate::regime::{self, Case, DEFAULT_THRESHOLD};
use crate::sim::{self, map_replicates, replicate_seed, ModelParams, ReplicateOptions, SimOptions};
use crate::stats::{dkw_band, ecdf, ks_statistic, EmpiricalSample};
use crate::torus::unit_ball_volume;

pub const TOOL: &str = "mutclock";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const WORKERS_ENV: &str = "MUTCLOCK_WORKERS";

/// `Z_{d,k}(c)` target for `zdist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZConfig {
    pub d: usize,
    pub c: Vec<f64>,
}

/// Hit-test volume estimate settings for `volume`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeConfig {
    pub time: f64,
    pub samples: usize,
    #[serde(default = "one")]
    pub stage: usize,
}

fn one() -> usize {
    1
}

/// One JSON document describing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelParams>,
    pub z: Option<ZConfig>,
    pub replicates: usize,
    pub seed: u64,
    /// Default horizon is this multiple of the predicted mean of `sigma_k`.
    pub t_max_multiplier: f64,
    /// Explicit horizon; overrides `t_max_multiplier`.
    pub t_max: Option<f64>,
    pub candidate_cap: u64,
    pub spatial_index: bool,
    /// Evaluation times for `law`, on the unit scale of the law.
    pub grid: Vec<f64>,
    /// DKW failure probability `delta`.
    pub confidence: f64,
    pub threshold: f64,
    /// Largest tolerated fraction of timed-out replicates.
    pub timeout_budget: f64,
    /// Draws backing empirical `Z` laws.
    pub z_samples: usize,
    pub volume: Option<VolumeConfig>,
    /// Time of the small-t check in `zdist`.
    pub small_t: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            z: None,
            replicates: 1000,
            seed: 0,
            t_max_multiplier: 20.0,
            t_max: None,
            candidate_cap: sim::DEFAULT_CANDIDATE_CAP,
            spatial_index: false,
            grid: Vec::new(),
            confidence: 0.01,
            threshold: DEFAULT_THRESHOLD,
            timeout_budget: 0.005,
            z_samples: LawOptions::default().z_samples,
            volume: None,
            small_t: 0.2,
        }
    }
}

/// Command-line values that override the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub threshold: Option<f64>,
    pub confidence: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.replicates {
            self.replicates = n;
        }
        if let Some(theta) = o.threshold {
            self.threshold = theta;
        }
        if let Some(delta) = o.confidence {
            self.confidence = delta;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let Some(model) = &self.model {
            model.validate()?;
        }
        if let Some(z) = &self.z {
            ModelParams::unit_torus(z.d, z.c.clone())?;
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.t_max_multiplier.is_finite() && self.t_max_multiplier > 0.0) {
            return bad(format!("t_max_multiplier must be positive, got {}", self.t_max_multiplier));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return bad(format!("t_max must be positive, got {t}"));
            }
        }
        if self.candidate_cap == 0 {
            return bad("candidate_cap must be at least 1".into());
        }
        if let Some(t) = self.grid.iter().find(|t| !t.is_finite()) {
            return bad(format!("grid times must be finite, got {t}"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence must be in (0, 1), got {}", self.confidence));
        }
        if !(self.threshold > 1.0) {
            return bad(format!("threshold must exceed 1, got {}", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.timeout_budget) {
            return bad(format!("timeout_budget must be in [0, 1], got {}", self.timeout_budget));
        }
        if self.z_samples == 0 {
            return bad("z_samples must be at least 1".into());
        }
        if let Some(v) = &self.volume {
            if !(v.time >= 0.0 && v.time.is_finite()) || v.samples == 0 || v.stage == 0 {
                return bad("volume needs time >= 0, samples >= 1 and stage >= 1".into());
            }
        }
        if !(self.small_t > 0.0 && self.small_t < 0.5) {
            return bad(format!("small_t must be in (0, 1/2), got {}", self.small_t));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configuration serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    fn model(&self) -> Result<&ModelParams> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a \"model\" section".into()))
    }

    fn z(&self) -> Result<&ZConfig> {
        self.z
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a \"z\" section".into()))
    }

    fn law_options(&self) -> LawOptions {
        LawOptions {
            z_samples: self.z_samples,
            ..LawOptions::default()
        }
    }

    /// Simulation options. `mean` is the predicted mean of `sigma_k` on the
    /// original time scale.
    fn sim_options(&self, mean: f64) -> SimOptions {
        SimOptions {
            t_max: self.t_max.unwrap_or(self.t_max_multiplier * mean),
            candidate_cap: self.candidate_cap,
            spatial_index: self.spatial_index,
            index_horizon: Some(mean),
        }
    }
}

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Success,
    Usage,
    VerifyFailed,
    TimeoutBudget,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Usage => 1,
            Status::VerifyFailed => 2,
            Status::TimeoutBudget => 3,
        }
    }
}

/// What a command produced: an optional data artifact (CSV) and a report
/// (JSON), plus the exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub artifact: Option<String>,
    pub report: String,
    pub status: Status,
}

/// Worker count from `MUTCLOCK_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w >= 1)
}

fn provenance(config: &RunConfig) -> String {
    format!("# {TOOL} {VERSION} config={}", config.hash())
}

fn header(config: &RunConfig, command: &str) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("tool".into(), json!(TOOL));
    m.insert("version".into(), json!(VERSION));
    m.insert("config_hash".into(), json!(config.hash()));
    m.insert("command".into(), json!(command));
    m
}

fn finish(mut m: serde_json::Map<String, Value>, extra: Value) -> String {
    if let Value::Object(e) = extra {
        m.extend(e);
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("report serializes");
    s.push('\n');
    s
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Upper bound on `E[sigma_k]`: wait for each stage anywhere, then let it
/// cover the torus.
fn crude_mean(params: &ModelParams) -> f64 {
    let waits: f64 = params.mu.iter().map(|m| 1.0 / (params.volume * m)).sum();
    waits + (params.k - 1) as f64 * laws::fixation_time_bound(params.d, params.volume, params.alpha)
}

/// Predicted mean of `sigma_k` from the classified law, or the crude bound
/// when the tuple is unclassifiable.
fn predicted_mean(config: &RunConfig, params: &ModelParams) -> f64 {
    match regime::select_case(params, config.threshold) {
        Ok((case, _)) if !matches!(case, Case::Two(11) | Case::Many(3)) => {
            match law_for_case_with(case, params, &config.law_options()) {
                Ok(law) => law.mean() / law.time_scale,
                Err(_) => crude_mean(params),
            }
        }
        _ => crude_mean(params),
    }
}

fn sample_csv(config: &RunConfig, sample: &EmpiricalSample, extra: &str) -> String {
    let mut out = provenance(config);
    let _ = writeln!(
        out,
        " seed={} n={} timeouts={}{extra}",
        sample.base_seed, sample.n, sample.timeouts
    );
    out.push_str("value\n");
    for v in &sample.values {
        let _ = writeln!(out, "{v:e}");
    }
    out
}

/// `simulate`: `replicates` draws of `sigma_k` as a sorted CSV.
pub fn cmd_simulate(config: &RunConfig, workers: Option<usize>) -> Result<CommandOutput> {
    config.validate()?;
    let params = config.model()?;
    let opts = config.sim_options(predicted_mean(config, params));
    let sample = sim::replicate_with(params, config.replicates, config.seed, &opts, ReplicateOptions { workers })?;
    let over = sample.timeout_fraction() > config.timeout_budget;
    let artifact = sample_csv(config, &sample, &format!(" t_max={:e} timeout_warning={over}", opts.t_max));
    let report = finish(
        header(config, "simulate"),
        json!({
            "n": sample.total(),
            "finite": sample.n,
            "timeouts": sample.timeouts,
            "timeout_fraction": sample.timeout_fraction(),
            "timeout_warning": over,
            "t_max": opts.t_max,
            "seed": config.seed,
        }),
    );
    Ok(CommandOutput {
        artifact: Some(artifact),
        report,
        status: if over { Status::TimeoutBudget } else { Status::Success },
    })
}

/// `classify`: the regime report for the configured model.
pub fn cmd_classify(config: &RunConfig) -> Result<CommandOutput> {
    config.validate()?;
    let params = config.model()?;
    let report = regime::classify_with(params, config.threshold, &config.law_options())?;
    let body = json!({
        "case": report.case,
        "ratios": report.ratios,
        "timescale": report.timescale,
        "margin": finite_or_null(report.margin),
        "threshold": report.threshold,
        "law": report.law,
    });
    Ok(CommandOutput {
        artifact: None,
        report: finish(header(config, "classify"), body),
        status: Status::Success,
    })
}

/// Resolves `case_id` against the model, or classifies when absent.
fn resolve_case(config: &RunConfig, params: &ModelParams, case_id: Option<&str>, force: bool) -> Result<Case> {
    let classified = regime::select_case(params, config.threshold).map(|c| c.0);
    match (case_id, classified) {
        (Some(id), Ok(_)) => Case::parse(id, params.k),
        (Some(id), Err(e)) => {
            if force {
                Case::parse(id, params.k)
            } else {
                Err(e)
            }
        }
        (None, Ok(case)) => Ok(case),
        (None, Err(e)) => Err(e),
    }
}

/// `law`: CSV of the unit-scale CDF of `case_id` on the configured grid.
pub fn cmd_law(config: &RunConfig, case_id: Option<&str>, force: bool) -> Result<CommandOutput> {
    config.validate()?;
    let params = config.model()?;
    let case = match case_id {
        Some(id) => Case::parse(id, params.k)?,
        None => resolve_case(config, params, None, force)?,
    };
    let law = law_for_case_with(case, params, &config.law_options())?;
    let mut out = provenance(config);
    let _ = writeln!(out, " case={case} timescale={:e}", law.time_scale);
    out.push_str("t,cdf\n");
    for &t in &config.grid {
        let _ = writeln!(out, "{t},{:.12}", law.cdf(t));
    }
    let report = finish(header(config, "law"), json!({"case": case, "points": config.grid.len()}));
    Ok(CommandOutput {
        artifact: Some(out),
        report,
        status: Status::Success,
    })
}

/// Finite-size allowance added to the DKW band when comparing with a limit law.
pub fn model_allowance(case: Case) -> f64 {
    match case {
        Case::Single => 0.0,
        Case::Two(1..=3) | Case::Many(1) => 0.01,
        _ => 0.02,
    }
}

/// `verify`: KS distance between the scaled simulated draws and the case's
/// law, against the DKW band plus the model allowance.
pub fn cmd_verify(config: &RunConfig, case_id: Option<&str>, force: bool, workers: Option<usize>) -> Result<CommandOutput> {
    config.validate()?;
    let params = config.model()?;
    let case = resolve_case(config, params, case_id, force)?;
    let law = law_for_case_with(case, params, &config.law_options())?;
    // a forced case may predict a far shorter horizon than the dynamics need
    let mean = (law.mean() / law.time_scale).max(predicted_mean(config, params));
    let opts = config.sim_options(mean);
    let sample = sim::replicate_with(params, config.replicates, config.seed, &opts, ReplicateOptions { workers })?;
    let scaled = sample.scaled(law.time_scale);
    let ks = ks_statistic(&scaled, &law);
    let band = dkw_band(sample.total(), config.confidence);
    let allowance = model_allowance(case);
    let pass = ks < band + allowance;
    let over = sample.timeout_fraction() > config.timeout_budget;
    let body = json!({
        "case": case,
        "n": sample.total(),
        "ks": ks,
        "band": band,
        "allowance": allowance,
        "pass": pass,
        "timescale": law.time_scale,
        "timeouts": sample.timeouts,
        "timeout_warning": over,
        "t_max": opts.t_max,
        "seed": config.seed,
    });
    let status = if over {
        Status::TimeoutBudget
    } else if pass {
        Status::Success
    } else {
        Status::VerifyFailed
    };
    Ok(CommandOutput {
        artifact: None,
        report: finish(header(config, "verify"), body),
        status,
    })
}

/// `zdist`: draws of `Z_{d,k}(c)` with the sandwich and small-t checks.
pub fn cmd_zdist(config: &RunConfig, workers: Option<usize>) -> Result<CommandOutput> {
    config.validate()?;
    let z = config.z()?;
    let params = ModelParams::unit_torus(z.d, z.c.clone())?;
    let k = z.c.len();
    let waits: f64 = z.c.iter().map(|c| 1.0 / c).sum();
    let shift = (k - 1) as f64 * (z.d as f64).sqrt() / 2.0;
    let opts = config.sim_options(waits + shift);
    let sample = sim::replicate_with(&params, config.replicates, config.seed, &opts, ReplicateOptions { workers })?;
    let n = sample.total() as f64;

    let (mean, se) = sample.mean_and_se();
    let sandwich_pass = sample.timeouts == 0 && mean >= waits - 4.0 * se && mean <= waits + shift + 4.0 * se;

    let t = config.small_t;
    let power = ((k - 1) * z.d + k) as i32;
    let (lo, hi) = laws::z_bounds(z.d, &z.c, t)?;
    let p = ecdf(&sample, t);
    let p_se = (p * (1.0 - p) / n).sqrt();
    let small_t_pass = p >= lo - 4.0 * p_se && p <= hi + 4.0 * p_se;

    let mut checks = json!({
        "sandwich": {
            "mean": mean,
            "se": se,
            "lower": waits,
            "upper": waits + shift,
            "pass": sandwich_pass,
        },
        "small_t": {
            "t": t,
            "probability": p,
            "se": p_se,
            "lower": lo,
            "upper": hi,
            "ratio": p / t.powi(power),
            "pass": small_t_pass,
        },
    });
    let mut pass = sandwich_pass && small_t_pass;
    if k == 1 {
        let law = LimitLaw::new(LawKind::Exponential { rate: z.c[0] }, 1.0);
        let ks = ks_statistic(&sample, &law);
        let band = dkw_band(sample.total(), config.confidence);
        checks["exponential"] = json!({"ks": ks, "band": band, "pass": ks < band});
        pass &= ks < band;
    }
    let over = sample.timeout_fraction() > config.timeout_budget;
    let artifact = sample_csv(config, &sample, &format!(" t_max={:e} timeout_warning={over}", opts.t_max));
    let body = json!({
        "d": z.d,
        "c": z.c,
        "n": sample.total(),
        "timeouts": sample.timeouts,
        "checks": checks,
        "pass": pass,
    });
    let status = if over {
        Status::TimeoutBudget
    } else if pass {
        Status::Success
    } else {
        Status::VerifyFailed
    };
    Ok(CommandOutput {
        artifact: Some(artifact),
        report: finish(header(config, "zdist"), body),
        status,
    })
}

/// `volume`: hit-test estimates of the stage volume `Y_j(t)` across
/// independent replicates, next to the first-moment predictions.
pub fn cmd_volume(config: &RunConfig, workers: Option<usize>) -> Result<CommandOutput> {
    config.validate()?;
    let params = config.model()?;
    let v = config
        .volume
        .as_ref()
        .ok_or_else(|| Error::Config("volume needs a \"volume\" section".into()))?;
    if v.stage > params.k {
        return Err(Error::Config(format!("stage {} exceeds k = {}", v.stage, params.k)));
    }
    let opts = SimOptions {
        candidate_cap: config.candidate_cap,
        spatial_index: config.spatial_index,
        ..SimOptions::default()
    };
    let estimates = map_replicates(config.replicates, config.seed, workers, |seed| {
        let mut rng = sim::rng_from_seed(seed);
        let state = sim::evolve_until(params, v.time, &opts, &mut rng)?;
        let mut probe = sim::rng_from_seed(replicate_seed(seed, 0));
        Ok(state.hit_test_volume(v.stage, v.time, v.samples, &mut probe).estimate)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
    let mut body = json!({
        "stage": v.stage,
        "time": v.time,
        "replicates": estimates.len(),
        "samples": v.samples,
        "mean": mean,
        "se": (var / r).sqrt(),
        "variance": var,
        "first_moment_bound": laws::v_k(v.stage, v.time, params),
    });
    if v.stage == 1 {
        let d = params.d as i32;
        body["variance_bound"] = json!(unit_ball_volume(params.d) * (2.0 * params.alpha * v.time).powi(d) * mean);
        if let Ok(exact) = laws::mean_y1(v.time, params) {
            body["exact_mean"] = json!(exact);
        }
    }
    Ok(CommandOutput {
        artifact: None,
        report: finish(header(config, "volume"), body),
        status: Status::Success,
    })
}
