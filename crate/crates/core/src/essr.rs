//! The model-based explorer: count-based model, substochastic-SR bonus and
//! policy iteration on `r + beta * r_int`, replanned after every step.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::counts::{CountModel, CountingScheme};
use crate::error::{Error, Result};
use crate::mdp::TransitionSample;
use crate::planning::{policy_iteration_from, PlannerSettings, PolicyTable, ValueTable};
use crate::sr::{check_gamma, intrinsic_reward_l1, ssr_from_model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EssrConfig {
    pub gamma: f64,
    /// Bonus scale.
    pub beta: f64,
    pub eval_tolerance: f64,
    pub counting_scheme: CountingScheme,
    pub max_eval_sweeps: usize,
    pub max_policy_iterations: usize,
    /// Replan after every `replan_every` observed transitions.
    pub replan_every: usize,
    /// Seeds the random initial policy.
    pub seed: u64,
}

impl Default for EssrConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            beta: 100.0,
            eval_tolerance: 0.01,
            counting_scheme: CountingScheme::Smoothed,
            max_eval_sweeps: 10_000,
            max_policy_iterations: 1_000,
            replan_every: 1,
            seed: 0,
        }
    }
}

impl EssrConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.eval_tolerance.is_nan() || self.eval_tolerance <= 0.0 {
            return Err(Error::InvalidArgument("eval_tolerance must be positive".into()));
        }
        if self.max_eval_sweeps == 0 || self.max_policy_iterations == 0 || self.replan_every == 0 {
            return Err(Error::InvalidArgument(
                "sweep, iteration and replanning limits must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn planner(&self) -> PlannerSettings {
        PlannerSettings {
            gamma: self.gamma,
            eval_tolerance: self.eval_tolerance,
            max_eval_sweeps: self.max_eval_sweeps,
            max_policy_iterations: self.max_policy_iterations,
        }
    }
}

/// Expected reward `r(s, a) = sum_{s'} P(s, a, s') r(s, a, s')` under the
/// smoothed model. Unobserved successors contribute their initial mean of 0.
pub fn derived_reward_model(model: &CountModel) -> DMatrix<f64> {
    let (n, m) = (model.num_states(), model.num_actions());
    DMatrix::from_fn(n, m, |s, a| {
        let total = model.smoothed_action_total(s, a) as f64;
        (0..n)
            .map(|next| model.smoothed_count(s, a, next) as f64 / total * model.reward_mean(s, a, next))
            .sum()
    })
}

/// Bookkeeping across replans.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanningStats {
    pub replans: u64,
    pub policy_iterations: u64,
    pub eval_sweeps: u64,
    /// Replans that stopped at `max_policy_iterations`.
    pub capped: u64,
}

#[derive(Debug, Clone)]
pub struct EssrAgent {
    config: EssrConfig,
    model: CountModel,
    policy: PolicyTable,
    values: Option<ValueTable>,
    intrinsic: DVector<f64>,
    since_replan: usize,
    stats: PlanningStats,
}

impl EssrAgent {
    pub fn new(num_states: usize, num_actions: usize, config: EssrConfig) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(num_states, num_actions, config, rng)
    }

    /// Draws the initial deterministic policy uniformly from `rng`.
    pub fn with_rng<R: Rng>(num_states: usize, num_actions: usize, config: EssrConfig, mut rng: R) -> Result<Self> {
        config.validate()?;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument("empty state or action space".into()));
        }
        let policy = PolicyTable((0..num_states).map(|_| rng.gen_range(0..num_actions)).collect());
        Ok(Self {
            config,
            model: CountModel::new(num_states, num_actions),
            policy,
            values: None,
            // P~ starts at zero, so every SSR row is an identity row.
            intrinsic: DVector::from_element(num_states, -1.0),
            since_replan: 0,
            stats: PlanningStats::default(),
        })
    }

    pub fn config(&self) -> &EssrConfig {
        &self.config
    }

    pub fn model(&self) -> &CountModel {
        &self.model
    }

    pub fn policy(&self) -> &PolicyTable {
        &self.policy
    }

    pub fn values(&self) -> Option<&ValueTable> {
        self.values.as_ref()
    }

    /// `r_int(s) = -||Psi~(s)||_1` as of the last replan.
    pub fn intrinsic_reward(&self) -> &DVector<f64> {
        &self.intrinsic
    }

    pub fn stats(&self) -> PlanningStats {
        self.stats
    }

    /// `r(s, a) + beta * r_int(s)`, the state bonus broadcast over actions.
    pub fn augmented_reward(&self) -> DMatrix<f64> {
        let mut r = derived_reward_model(&self.model);
        for (s, mut row) in r.row_iter_mut().enumerate() {
            row.add_scalar_mut(self.config.beta * self.intrinsic[s]);
        }
        r
    }

    /// Records the transition and, on replanning steps, rebuilds the model,
    /// the substochastic SR and its bonus, then reruns policy iteration.
    pub fn step(&mut self, sample: &TransitionSample) -> Result<&PolicyTable> {
        self.model.record(sample)?;
        self.since_replan += 1;
        if self.since_replan >= self.config.replan_every {
            self.since_replan = 0;
            self.replan()?;
        }
        Ok(&self.policy)
    }

    pub fn replan(&mut self) -> Result<()> {
        let ssr = ssr_from_model(&self.model, self.config.counting_scheme, self.config.gamma)?;
        self.intrinsic = intrinsic_reward_l1(&ssr)?;
        let p_hat = self.model.smoothed_transitions();
        let rewards = self.augmented_reward();
        let plan = policy_iteration_from(
            &p_hat,
            &rewards,
            &self.config.planner(),
            self.policy.clone(),
            self.values.as_ref().map(|v| &v.v),
        )?;
        self.stats.replans += 1;
        self.stats.policy_iterations += plan.iterations as u64;
        self.stats.eval_sweeps += plan.eval_sweeps as u64;
        self.stats.capped += u64::from(plan.hit_iteration_cap);
        self.policy = plan.policy;
        self.values = Some(plan.values);
        Ok(())
    }
}

impl Agent for EssrAgent {
    fn act(&mut self, state: usize) -> usize {
        self.policy.action(state)
    }

    fn observe(&mut self, sample: &TransitionSample) -> Result<()> {
        self.step(sample).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularMdp;
    use approx::assert_abs_diff_eq;

    fn sample(state: usize, action: usize, next_state: usize, reward: f64) -> TransitionSample {
        TransitionSample {
            state,
            action,
            reward,
            next_state,
        }
    }

    #[test]
    fn reward_model_after_one_observation() {
        let mut m = CountModel::new(2, 1);
        m.record(&sample(0, 0, 1, 5.0)).unwrap();
        let r = derived_reward_model(&m);
        assert_abs_diff_eq!(r[(0, 0)], 10.0 / 3.0, epsilon = 1e-12);
        assert_eq!(r[(1, 0)], 0.0);
        assert_eq!(derived_reward_model(&CountModel::new(3, 2)), DMatrix::zeros(3, 2));
    }

    #[test]
    fn reward_model_is_consistent() {
        // Rewards 1 w.p. 0.25 (to state 0) and 3 w.p. 0.75 (to state 1).
        let tuples = [
            crate::mdp::Transition { state: 0, action: 0, next_state: 0, probability: 0.25, reward: 1.0 },
            crate::mdp::Transition { state: 0, action: 0, next_state: 1, probability: 0.75, reward: 3.0 },
            crate::mdp::Transition { state: 1, action: 0, next_state: 0, probability: 1.0, reward: 0.0 },
        ];
        let mdp = TabularMdp::new("t", 2, 1, tuples, vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = CountModel::new(2, 1);
        for _ in 0..100_000 {
            m.record(&mdp.sample_transition(0, 0, &mut rng).unwrap()).unwrap();
        }
        let r = derived_reward_model(&m);
        // Laplace smoothing shifts the estimate by O(1/n); sampling noise
        // dominates at about 0.003.
        assert_abs_diff_eq!(r[(0, 0)], 2.5, epsilon = 1e-2);
    }

    #[test]
    fn initial_bonus_is_uniform() {
        let config = EssrConfig {
            counting_scheme: CountingScheme::Raw,
            ..Default::default()
        };
        let mut agent = EssrAgent::new(4, 2, config).unwrap();
        assert!(agent.intrinsic_reward().iter().all(|&r| r == -1.0));
        agent.replan().unwrap();
        assert!(agent.intrinsic_reward().iter().all(|&r| r == -1.0));
        let r = agent.augmented_reward();
        assert!(r.iter().all(|&x| x == -config.beta));
    }

    #[test]
    fn heavily_visited_state_gets_smallest_bonus() {
        // Three-state chain 0 -> 1 -> 2 -> 0, state 1 revisited via a
        // self-loop so it leaves to the same place but far more often.
        for scheme in [CountingScheme::Raw, CountingScheme::Smoothed] {
            let config = EssrConfig {
                counting_scheme: scheme,
                ..Default::default()
            };
            let mut agent = EssrAgent::new(3, 1, config).unwrap();
            for _ in 0..3 {
                agent.step(&sample(0, 0, 1, 0.0)).unwrap();
                agent.step(&sample(2, 0, 0, 0.0)).unwrap();
            }
            for _ in 0..20 {
                agent.step(&sample(1, 0, 2, 0.0)).unwrap();
            }
            let r = agent.intrinsic_reward();
            assert!(r[1] < r[0] && r[1] < r[2], "{scheme}: {r:?}");
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let mdp = TabularMdp::riverswim();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut agent = EssrAgent::new(6, 2, EssrConfig { seed: 4, ..Default::default() }).unwrap();
            let mut s = mdp.sample_start(&mut rng);
            for _ in 0..10 {
                let a = agent.act(s);
                let t = mdp.sample_transition(s, a, &mut rng).unwrap();
                agent.step(&t).unwrap();
                s = t.next_state;
            }
            (agent.policy().clone(), agent.model().clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = EssrConfig { gamma: 1.0, ..Default::default() };
        assert!(EssrAgent::new(2, 2, bad).is_err());
        let bad = EssrConfig { eval_tolerance: 0.0, ..Default::default() };
        assert!(EssrAgent::new(2, 2, bad).is_err());
        let bad = EssrConfig { beta: -1.0, ..Default::default() };
        assert!(EssrAgent::new(2, 2, bad).is_err());
    }

    #[test]
    fn constant_bonus_shift_keeps_policy() {
        // Adding c to every r_int shifts every augmented reward by beta * c.
        let mut agent = EssrAgent::new(6, 2, EssrConfig { seed: 1, ..Default::default() }).unwrap();
        let mdp = TabularMdp::riverswim();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = 1;
        for _ in 0..200 {
            let a = agent.act(s);
            let t = mdp.sample_transition(s, a, &mut rng).unwrap();
            agent.step(&t).unwrap();
            s = t.next_state;
        }
        let p_hat = agent.model().smoothed_transitions();
        let settings = PlannerSettings {
            eval_tolerance: 1e-8,
            ..agent.config().planner()
        };
        let base = agent.augmented_reward();
        let shifted = base.map(|r| r + agent.config().beta * 2.5);
        let start = PolicyTable::uniform(6, 0);
        let a = policy_iteration_from(&p_hat, &base, &settings, start.clone(), None).unwrap();
        let b = policy_iteration_from(&p_hat, &shifted, &settings, start, None).unwrap();
        assert_eq!(a.policy, b.policy);
    }
}
