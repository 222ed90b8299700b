//! Exact Monte Carlo simulation of the time until some site of a
//! d-dimensional torus has accumulated `k` mutations, when each mutation
//! spreads as a ball growing at speed `alpha` and stage `j` mutations arrive
//! at rate `mu_j` per unit volume inside the stage `j - 1` region.
//!
//! The crate is split into:
//!
//! * [`torus`]: the periodic metric, cone membership and Monte Carlo volume
//!   estimates.
//! * [`sim`]: the thinning simulator for `sigma_k` and the rescaled
//!   `Z_{d,k}` variable, plus deterministic parallel replication.
//! * [`laws`]: closed form and quadrature evaluation of the limit laws.
//! * [`regime`]: classification of a finite parameter tuple into an
//!   asymptotic case.
//! * [`stats`]: empirical CDFs, Kolmogorov-Smirnov distances and DKW bands.
//! * [`cli`]: the batch front end behind the `mutclock` binary.

pub mod cli;
pub mod error;
pub mod laws;
pub mod quad;
pub mod regime;
pub mod sim;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
pub use laws::{LawKind, LimitLaw};
pub use regime::{Case, RegimeReport};
pub use sim::{ModelParams, MutationEvent, ProcessState, SimOptions, SimOutcome};
pub use stats::EmpiricalSample;
pub use torus::{Cone, TorusPoint};
