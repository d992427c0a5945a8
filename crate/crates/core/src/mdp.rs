//! Finite MDPs with transition-attached rewards.
//!
//! Environments are lists of `(state, action, next_state, probability,
//! reward)` tuples. The built-in RiverSwim and SixArms tables live in
//! `data/*.mdp` in the plain-text format below and are validated on load.
//!
//! # Environment file format
//!
//! Line oriented, whitespace separated. `#` starts a comment that runs to
//! the end of the line; blank lines are ignored. Header directives:
//!
//! ```text
//! name <identifier>
//! states <count>
//! actions <count>
//! start <state> <probability>      (one line per state with start mass)
//! ```
//!
//! `name`, `states` and `actions` must precede the first tuple. Every other
//! non-empty line is a tuple:
//!
//! ```text
//! <state> <action> <next_state> <probability> <reward>
//! ```
//!
//! Tuples for the same `(state, action)` are sampled in file order. Every
//! `(state, action)` pair needs at least one tuple and its probabilities must
//! sum to one within `1e-12`, as must the start distribution.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Absolute tolerance for probability rows and the start distribution.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const RIVERSWIM_SRC: &str = include_str!("../data/riverswim.mdp");
const SIXARMS_SRC: &str = include_str!("../data/sixarms.mdp");

/// One `(state, action, next_state, probability, reward)` tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub probability: f64,
    pub reward: f64,
}

/// A sampled `(S_t, A_t, R_{t+1}, S_{t+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    next_state: usize,
    probability: f64,
    reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    name: String,
    num_states: usize,
    num_actions: usize,
    /// Outcomes per `(state, action)`, indexed `state * num_actions + action`,
    /// kept in insertion order.
    outcomes: Vec<Vec<Outcome>>,
    start_distribution: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        name: impl Into<String>,
        num_states: usize,
        num_actions: usize,
        transitions: impl IntoIterator<Item = Transition>,
        start_distribution: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp(format!(
                "{name}: need at least one state and one action"
            )));
        }
        if start_distribution.len() != num_states {
            return Err(Error::InvalidMdp(format!(
                "{name}: start distribution has {} entries, expected {num_states}",
                start_distribution.len()
            )));
        }
        let mut outcomes = vec![Vec::new(); num_states * num_actions];
        for t in transitions {
            if t.state >= num_states || t.next_state >= num_states || t.action >= num_actions {
                return Err(Error::InvalidMdp(format!(
                    "{name}: tuple ({}, {}, {}) out of range",
                    t.state, t.action, t.next_state
                )));
            }
            if !(0.0..=1.0).contains(&t.probability) {
                return Err(Error::InvalidMdp(format!(
                    "{name}: probability {} of ({}, {}, {}) outside [0, 1]",
                    t.probability, t.state, t.action, t.next_state
                )));
            }
            if !t.reward.is_finite() {
                return Err(Error::InvalidMdp(format!("{name}: non-finite reward")));
            }
            outcomes[t.state * num_actions + t.action].push(Outcome {
                next_state: t.next_state,
                probability: t.probability,
                reward: t.reward,
            });
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let total: f64 = outcomes[s * num_actions + a].iter().map(|o| o.probability).sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "{name}: probabilities of (state {s}, action {a}) sum to {total}"
                    )));
                }
            }
        }
        if start_distribution.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidMdp(format!(
                "{name}: start probabilities must lie in [0, 1]"
            )));
        }
        let start_total: f64 = start_distribution.iter().sum();
        if (start_total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidMdp(format!(
                "{name}: start distribution sums to {start_total}"
            )));
        }
        Ok(Self {
            name,
            num_states,
            num_actions,
            outcomes,
            start_distribution,
        })
    }

    /// The six-state RiverSwim chain. Starts in state 1 or 2 with equal
    /// probability.
    pub fn riverswim() -> Self {
        Self::parse(RIVERSWIM_SRC).expect("bundled riverswim table is valid")
    }

    /// The seven-state SixArms hub. Starts in state 0.
    pub fn sixarms() -> Self {
        Self::parse(SIXARMS_SRC).expect("bundled sixarms table is valid")
    }

    /// Deterministic one-action `k`-cycle `0 -> 1 -> ... -> k-1 -> 0` starting
    /// in state 0. Only the transition leaving state `k - 1` is rewarded.
    pub fn diagnostic_chain(k: usize, terminal_reward: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("chain length must be at least 1".into()));
        }
        let transitions = (0..k).map(|s| Transition {
            state: s,
            action: 0,
            next_state: (s + 1) % k,
            probability: 1.0,
            reward: if s + 1 == k { terminal_reward } else { 0.0 },
        });
        let mut start = vec![0.0; k];
        start[0] = 1.0;
        Self::new(format!("chain-{k}"), k, 1, transitions, start)
    }

    /// Looks up a built-in environment by name: `riverswim`, `sixarms` or
    /// `chain-<k>`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "riverswim" => Ok(Self::riverswim()),
            "sixarms" => Ok(Self::sixarms()),
            _ => match name.strip_prefix("chain-").and_then(|k| k.parse().ok()) {
                Some(k) => Self::diagnostic_chain(k, 1.0),
                None => Err(Error::UnknownEnvironment(name.to_string())),
            },
        }
    }

    /// Names accepted by [`TabularMdp::builtin`].
    pub fn builtin_names() -> &'static [&'static str] {
        &["riverswim", "sixarms", "chain-<k>"]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut num_states: Option<usize> = None;
        let mut num_actions: Option<usize> = None;
        let mut start: Vec<(usize, f64, usize)> = Vec::new();
        let mut tuples = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("`{s}`: {e}")));
            let real = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            match fields[0] {
                "name" if fields.len() == 2 => name = Some(fields[1].to_string()),
                "states" if fields.len() == 2 => num_states = Some(int(fields[1])?),
                "actions" if fields.len() == 2 => num_actions = Some(int(fields[1])?),
                "start" if fields.len() == 3 => {
                    start.push((int(fields[1])?, real(fields[2])?, line_no))
                }
                "name" | "states" | "actions" | "start" => {
                    return Err(err(format!("malformed `{}` directive", fields[0])))
                }
                _ if fields.len() == 5 => {
                    if name.is_none() || num_states.is_none() || num_actions.is_none() {
                        return Err(err("tuple before `name`/`states`/`actions` header".into()));
                    }
                    tuples.push(Transition {
                        state: int(fields[0])?,
                        action: int(fields[1])?,
                        next_state: int(fields[2])?,
                        probability: real(fields[3])?,
                        reward: real(fields[4])?,
                    });
                }
                _ => return Err(err(format!("expected 5 fields, found {}", fields.len()))),
            }
        }

        let missing = |what: &str| Error::Parse {
            line: 0,
            msg: format!("missing `{what}` directive"),
        };
        let name = name.ok_or_else(|| missing("name"))?;
        let num_states = num_states.ok_or_else(|| missing("states"))?;
        let num_actions = num_actions.ok_or_else(|| missing("actions"))?;
        let mut start_distribution = vec![0.0; num_states];
        for (s, p, line) in start {
            if s >= num_states {
                return Err(Error::Parse {
                    line,
                    msg: format!("start state {s} out of range"),
                });
            }
            start_distribution[s] += p;
        }
        Self::new(name, num_states, num_actions, tuples, start_distribution)
    }

    /// Serialises to the environment file format. `parse(to_text())` rebuilds
    /// an identical MDP.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name {}", self.name);
        let _ = writeln!(out, "states {}", self.num_states);
        let _ = writeln!(out, "actions {}", self.num_actions);
        for (s, p) in self.start_distribution.iter().enumerate() {
            if *p > 0.0 {
                let _ = writeln!(out, "start {s} {p:?}");
            }
        }
        for t in self.transitions() {
            let _ = writeln!(
                out,
                "{} {} {} {:?} {:?}",
                t.state, t.action, t.next_state, t.probability, t.reward
            );
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn start_distribution(&self) -> &[f64] {
        &self.start_distribution
    }

    /// All tuples, grouped by `(state, action)` in insertion order.
    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.outcomes.iter().enumerate().flat_map(move |(idx, outs)| {
            let state = idx / self.num_actions;
            let action = idx % self.num_actions;
            outs.iter().map(move |o| Transition {
                state,
                action,
                next_state: o.next_state,
                probability: o.probability,
                reward: o.reward,
            })
        })
    }

    /// One `|S| x |S|` row-stochastic matrix per action.
    pub fn transition_matrices(&self) -> Vec<DMatrix<f64>> {
        let n = self.num_states;
        let mut mats = vec![DMatrix::zeros(n, n); self.num_actions];
        for t in self.transitions() {
            mats[t.action][(t.state, t.next_state)] += t.probability;
        }
        mats
    }

    /// Expected immediate reward `r(s, a)` as an `|S| x |A|` matrix.
    pub fn expected_rewards(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.num_states, self.num_actions);
        for t in self.transitions() {
            r[(t.state, t.action)] += t.probability * t.reward;
        }
        r
    }

    /// State-to-state matrix induced by a deterministic policy.
    pub fn policy_matrix(&self, policy: &[usize]) -> DMatrix<f64> {
        let n = self.num_states;
        let mut p = DMatrix::zeros(n, n);
        for t in self.transitions() {
            if policy[t.state] == t.action {
                p[(t.state, t.next_state)] += t.probability;
            }
        }
        p
    }

    pub fn policy_rewards(&self, policy: &[usize]) -> DVector<f64> {
        let r = self.expected_rewards();
        DVector::from_fn(self.num_states, |s, _| r[(s, policy[s])])
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        inverse_cdf(
            self.start_distribution.iter().copied().enumerate(),
            rng.gen::<f64>(),
        )
    }

    /// Draws `S_{t+1}` from `p(. | state, action)` by inverse CDF over the
    /// stored tuple order. A uniform draw that lands exactly on a cumulative
    /// boundary goes to the earlier tuple.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<TransitionSample> {
        if state >= self.num_states || action >= self.num_actions {
            return Err(Error::OutOfRange(format!(
                "(state {state}, action {action}) for {} with {} states and {} actions",
                self.name, self.num_states, self.num_actions
            )));
        }
        let outs = &self.outcomes[state * self.num_actions + action];
        let u = rng.gen::<f64>();
        let pick = inverse_cdf(outs.iter().map(|o| o.probability).enumerate(), u);
        let o = outs[pick];
        Ok(TransitionSample {
            state,
            action,
            reward: o.reward,
            next_state: o.next_state,
        })
    }
}

/// Index of the first positive-mass entry whose cumulative sum reaches `u`.
fn inverse_cdf(weights: impl Iterator<Item = (usize, f64)>, u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last = 0;
    for (i, p) in weights {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last = i;
        if u <= cumulative {
            return i;
        }
    }
    // Rounding left the total a hair under u.
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row_sums_ok(mdp: &TabularMdp) {
        for (a, p) in mdp.transition_matrices().iter().enumerate() {
            for s in 0..mdp.num_states() {
                let sum: f64 = p.row(s).sum();
                assert!((sum - 1.0).abs() <= STOCHASTIC_TOL, "({s},{a}) sums to {sum}");
            }
        }
    }

    #[test]
    fn riverswim_shape_and_start() {
        let mdp = TabularMdp::riverswim();
        assert_eq!(mdp.num_states(), 6);
        assert_eq!(mdp.num_actions(), 2);
        assert_eq!(mdp.start_distribution(), &[0.0, 0.5, 0.5, 0.0, 0.0, 0.0]);
        row_sums_ok(&mdp);
    }

    #[test]
    fn sixarms_shape_and_start() {
        let mdp = TabularMdp::sixarms();
        assert_eq!(mdp.num_states(), 7);
        assert_eq!(mdp.num_actions(), 6);
        assert_eq!(mdp.start_distribution()[0], 1.0);
        assert_eq!(mdp.start_distribution()[1..].iter().sum::<f64>(), 0.0);
        row_sums_ok(&mdp);
    }

    #[test]
    fn diagnostic_chains() {
        let two = TabularMdp::diagnostic_chain(2, 0.0).unwrap();
        let p = &two.transition_matrices()[0];
        assert_eq!(p, &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));

        let one = TabularMdp::diagnostic_chain(1, 0.0).unwrap();
        assert_eq!(one.transition_matrices()[0][(0, 0)], 1.0);

        let three = TabularMdp::diagnostic_chain(3, 2.0).unwrap();
        row_sums_ok(&three);
        assert_eq!(three.expected_rewards()[(2, 0)], 2.0);
        assert_eq!(three.expected_rewards()[(0, 0)], 0.0);

        assert!(TabularMdp::diagnostic_chain(0, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = [Transition {
            state: 0,
            action: 0,
            next_state: 0,
            probability: 0.9,
            reward: 0.0,
        }];
        assert!(matches!(
            TabularMdp::new("bad", 1, 1, bad, vec![1.0]),
            Err(Error::InvalidMdp(_))
        ));
        let out_of_range = [Transition {
            state: 0,
            action: 0,
            next_state: 3,
            probability: 1.0,
            reward: 0.0,
        }];
        assert!(TabularMdp::new("bad", 1, 1, out_of_range, vec![1.0]).is_err());
        let ok = [Transition {
            state: 0,
            action: 0,
            next_state: 0,
            probability: 1.0,
            reward: 0.0,
        }];
        assert!(TabularMdp::new("bad", 1, 1, ok, vec![0.5]).is_err());
    }

    #[test]
    fn text_format_roundtrip() {
        for mdp in [TabularMdp::riverswim(), TabularMdp::sixarms()] {
            assert_eq!(TabularMdp::parse(&mdp.to_text()).unwrap(), mdp);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "name x\nstates 1\nactions 1\nstart 0 1.0\n0 0 0 one 0\n";
        match TabularMdp::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(TabularMdp::parse("0 0 0 1.0 0\n").is_err());
        assert!(TabularMdp::parse("name x\nstates 1\nactions 1\n0 0 0 1.0 0\n").is_err());
    }

    #[test]
    fn deterministic_tuple_always_taken() {
        let mdp = TabularMdp::riverswim();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = mdp.sample_transition(3, 1, &mut rng).unwrap();
            assert_eq!(s.next_state, 2);
            assert_eq!(s.reward, 0.0);
        }
    }

    #[test]
    fn two_outcome_frequency() {
        let tuples = [
            Transition { state: 0, action: 0, next_state: 0, probability: 0.3, reward: 1.0 },
            Transition { state: 0, action: 0, next_state: 1, probability: 0.7, reward: 0.0 },
            Transition { state: 1, action: 0, next_state: 1, probability: 1.0, reward: 0.0 },
        ];
        let mdp = TabularMdp::new("coin", 2, 1, tuples, vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| mdp.sample_transition(0, 0, &mut rng).unwrap().next_state == 0)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn same_seed_same_samples() {
        let mdp = TabularMdp::riverswim();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|i| mdp.sample_transition(i % 6, 1, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn invalid_indices_rejected() {
        let mdp = TabularMdp::riverswim();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mdp.sample_transition(6, 0, &mut rng).is_err());
        assert!(mdp.sample_transition(0, 2, &mut rng).is_err());
    }

    #[test]
    fn boundary_draw_goes_to_earlier_tuple() {
        let w = [(0, 0.5), (1, 0.5)];
        assert_eq!(inverse_cdf(w.into_iter(), 0.5), 0);
        assert_eq!(inverse_cdf(w.into_iter(), 0.5000001), 1);
        assert_eq!(inverse_cdf([(0, 0.0), (1, 1.0)].into_iter(), 0.0), 1);
    }
}
