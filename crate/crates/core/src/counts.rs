//! The agent's empirical world model: visit counters and reward means.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TransitionSample;

/// Which visit count `n(s)` sits in the denominator of the empirical and
/// substochastic models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CountingScheme {
    /// `n(s) = sum_{b, x'} t(s, b, x')` over the Laplace-initialised tensor,
    /// so every state carries `|S| * |A|` phantom visits. Transition
    /// estimates are `t(s, a, x') / n(s, a)`.
    #[default]
    #[serde(rename = "algorithm1")]
    Smoothed,
    /// `n(s) = sum_{s'} n(s, s')`, the raw number of departures from `s`.
    /// Unvisited rows are left at zero.
    #[serde(rename = "definition2")]
    Raw,
}

impl CountingScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            CountingScheme::Smoothed => "algorithm1",
            CountingScheme::Raw => "definition2",
        }
    }
}

impl fmt::Display for CountingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm1" | "smoothed" => Ok(CountingScheme::Smoothed),
            "definition2" | "raw" => Ok(CountingScheme::Raw),
            other => Err(Error::InvalidArgument(format!(
                "unknown counting scheme `{other}` (expected algorithm1 or definition2)"
            ))),
        }
    }
}

/// Output of [`CountModel::empirical_transitions`].
#[derive(Debug, Clone, PartialEq)]
pub enum EmpiricalTransitions {
    /// One row-stochastic `|S| x |S|` matrix per action.
    Smoothed(Vec<DMatrix<f64>>),
    /// Action-marginalised `n(s, s') / n(s)`; rows of unvisited states are
    /// all zero and flagged `false` in `visited`.
    Raw {
        matrix: DMatrix<f64>,
        visited: Vec<bool>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountModel {
    num_states: usize,
    num_actions: usize,
    /// `n(s, s')`.
    state_counts: DMatrix<u64>,
    /// `t(s, a, s')`, initialised to 1, flattened `(s * A + a) * S + s'`.
    smoothed_counts: Vec<u64>,
    /// Running mean reward per `(s, a, s')`, same layout.
    reward_means: Vec<f64>,
    total_steps: u64,
}

impl CountModel {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let len = num_states * num_actions * num_states;
        Self {
            num_states,
            num_actions,
            state_counts: DMatrix::zeros(num_states, num_states),
            smoothed_counts: vec![1; len],
            reward_means: vec![0.0; len],
            total_steps: 0,
        }
    }

    fn idx(&self, s: usize, a: usize, next: usize) -> usize {
        (s * self.num_actions + a) * self.num_states + next
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// The `n(s, s')` matrix.
    pub fn state_counts(&self) -> &DMatrix<u64> {
        &self.state_counts
    }

    /// Raw departures from `s`.
    pub fn visits(&self, s: usize) -> u64 {
        self.state_counts.row(s).iter().sum()
    }

    pub fn smoothed_count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.smoothed_counts[self.idx(s, a, next)]
    }

    pub fn reward_mean(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward_means[self.idx(s, a, next)]
    }

    /// Records one transition.
    ///
    /// The reward update is `r <- ((t - 2) r + R) / (t - 1)` with `t` read
    /// after its increment; since `t` starts at 1 this is the plain running
    /// mean of the rewards seen on `(s, a, s')`.
    pub fn record(&mut self, sample: &TransitionSample) -> Result<()> {
        let TransitionSample {
            state,
            action,
            reward,
            next_state,
        } = *sample;
        if state >= self.num_states || next_state >= self.num_states || action >= self.num_actions {
            return Err(Error::OutOfRange(format!(
                "sample ({state}, {action}, {next_state}) for a {}x{} model",
                self.num_states, self.num_actions
            )));
        }
        self.state_counts[(state, next_state)] += 1;
        let i = self.idx(state, action, next_state);
        self.smoothed_counts[i] += 1;
        let t = self.smoothed_counts[i] as f64;
        self.reward_means[i] = ((t - 2.0) * self.reward_means[i] + reward) / (t - 1.0);
        self.total_steps += 1;
        Ok(())
    }

    /// `n(s, a) = sum_{x'} t(s, a, x')`.
    pub fn smoothed_action_total(&self, s: usize, a: usize) -> u64 {
        let start = self.idx(s, a, 0);
        self.smoothed_counts[start..start + self.num_states].iter().sum()
    }

    /// `sum_{b, x'} t(s, b, x')`; equals `visits(s) + |S| * |A|`.
    pub fn smoothed_state_total(&self, s: usize) -> u64 {
        (0..self.num_actions)
            .map(|a| self.smoothed_action_total(s, a))
            .sum()
    }

    /// Laplace-smoothed `P(s, a, x') = t(s, a, x') / n(s, a)`, one matrix
    /// per action.
    pub fn smoothed_transitions(&self) -> Vec<DMatrix<f64>> {
        (0..self.num_actions)
            .map(|a| {
                DMatrix::from_fn(self.num_states, self.num_states, |s, next| {
                    self.smoothed_count(s, a, next) as f64 / self.smoothed_action_total(s, a) as f64
                })
            })
            .collect()
    }

    /// `n(s, s') / n(s)`, with unvisited rows left empty.
    pub fn raw_transitions(&self) -> (DMatrix<f64>, Vec<bool>) {
        let n = self.num_states;
        let visits: Vec<u64> = (0..n).map(|s| self.visits(s)).collect();
        let matrix = DMatrix::from_fn(n, n, |s, next| {
            if visits[s] == 0 {
                0.0
            } else {
                self.state_counts[(s, next)] as f64 / visits[s] as f64
            }
        });
        (matrix, visits.iter().map(|&v| v > 0).collect())
    }

    pub fn empirical_transitions(&self, scheme: CountingScheme) -> EmpiricalTransitions {
        match scheme {
            CountingScheme::Smoothed => EmpiricalTransitions::Smoothed(self.smoothed_transitions()),
            CountingScheme::Raw => {
                let (matrix, visited) = self.raw_transitions();
                EmpiricalTransitions::Raw { matrix, visited }
            }
        }
    }
}
