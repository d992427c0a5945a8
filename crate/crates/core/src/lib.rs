//! Count-based exploration with the substochastic successor representation.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`] holds finite MDPs, the built-in benchmark environments and the
//!   plain-text environment format.
//! - [`counts`] is the agent's empirical world model (visit counters and
//!   running-mean rewards).
//! - [`sr`] is the dense successor-representation algebra: exact and
//!   truncated-series SR, the substochastic SR built from counts, the
//!   count-recovery quantity `chi` and its bounds.
//! - [`planning`] and [`essr`] implement policy iteration and the
//!   model-based agent that plans on `r + beta * r_int`.
//! - [`td`] learns successor features by TD and drives a tabular Q-learner
//!   with the inverse-l2-norm bonus and mixed Monte-Carlo targets.
//! - [`harness`] and [`verify`] run seeded experiments and property suites.

pub mod agent;
pub mod counts;
pub mod error;
pub mod essr;
pub mod harness;
pub mod mdp;
pub mod planning;
pub mod sr;
pub mod td;
pub mod verify;

pub use agent::{Agent, RandomAgent};
pub use counts::{CountModel, CountingScheme, EmpiricalTransitions};
pub use error::{Error, Result};
pub use essr::{EssrAgent, EssrConfig};
pub use harness::{AgentKind, AggregateReport, ExperimentSpec, RunResult};
pub use mdp::{TabularMdp, TransitionSample};
pub use sr::{ChiVector, SrVariant, SuccessorMatrix};
