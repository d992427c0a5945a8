//! Successor features learned by temporal differences, and a tabular
//! Q-learner that explores with the inverse l2 norm of those features.
//!
//! The successor features start at zero. With nonnegative features every TD
//! target lies at or below the true successor features on deterministic
//! transitions, so estimates grow towards the fixed point from below and
//! rarely updated states keep small norms (and large bonuses).

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::error::{Error, Result};
use crate::mdp::TransitionSample;
use crate::sr::{check_gamma, solve_resolvent, SrVariant, SuccessorMatrix};

/// Row-norm tolerance for normalised features.
const UNIT_NORM_TOL: f64 = 1e-9;

/// Nonnegative state features `phi(s)`, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
    normalized: bool,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        if phi.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument("features must be finite and nonnegative".into()));
        }
        let normalized = phi
            .row_iter()
            .all(|r| (r.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        Ok(Self { phi, normalized })
    }

    /// One-hot features; the successor features are then the SR itself.
    pub fn tabular(num_states: usize) -> Self {
        Self {
            phi: DMatrix::identity(num_states, num_states),
            normalized: true,
        }
    }

    /// Scales every row to unit l2 norm. Zero rows are rejected.
    pub fn normalize(mut self) -> Result<Self> {
        for (s, mut row) in self.phi.row_iter_mut().enumerate() {
            let norm = row.norm();
            if norm == 0.0 {
                return Err(Error::InvalidArgument(format!("feature row {s} is zero")));
            }
            row /= norm;
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn num_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }
}

/// `(I - gamma P)^{-1} Phi`.
pub fn closed_form_sf(p: &DMatrix<f64>, phi: &FeatureMap, gamma: f64) -> Result<SuccessorMatrix> {
    let values = solve_resolvent(p, gamma, phi.matrix().clone())?;
    Ok(SuccessorMatrix::from_parts(values, gamma, SrVariant::Features))
}

/// `1 / ||psi||_2`. A zero vector means the features never got updated (or
/// collapsed), and is reported rather than mapped to infinity.
pub fn l2_bonus<'a>(psi_row: impl IntoIterator<Item = &'a f64>) -> Result<f64> {
    let norm = psi_row.into_iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        Ok(1.0 / norm)
    } else {
        Err(Error::ZeroFeatures)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessorFeatureTable {
    psi: DMatrix<f64>,
    gamma: f64,
    step_size: f64,
}

impl SuccessorFeatureTable {
    /// All-zero estimates.
    pub fn zeros(num_states: usize, dim: usize, gamma: f64, step_size: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(step_size > 0.0 && step_size <= 1.0) {
            return Err(Error::InvalidArgument(format!("step size must lie in (0, 1], got {step_size}")));
        }
        Ok(Self {
            psi: DMatrix::zeros(num_states, dim),
            gamma,
            step_size,
        })
    }

    pub fn from_matrix(psi: DMatrix<f64>, gamma: f64, step_size: f64) -> Result<Self> {
        let mut t = Self::zeros(psi.nrows(), psi.ncols(), gamma, step_size)?;
        t.psi = psi;
        Ok(t)
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    fn check(&self, phi: &FeatureMap) -> Result<()> {
        if phi.num_states() != self.psi.nrows() || phi.dim() != self.psi.ncols() {
            return Err(Error::InvalidArgument("feature map does not match the table".into()));
        }
        Ok(())
    }

    /// `psi(s) += alpha [phi(s) + gamma psi(s') - psi(s)]`; only row `s`
    /// changes.
    pub fn td_update(&mut self, state: usize, next_state: usize, phi: &FeatureMap) -> Result<()> {
        self.check(phi)?;
        let n = self.psi.nrows();
        if state >= n || next_state >= n {
            return Err(Error::OutOfRange(format!("transition {state} -> {next_state}")));
        }
        let target: RowDVector<f64> = phi.matrix().row(state) + self.psi.row(next_state) * self.gamma;
        let error = target - self.psi.row(state);
        let mut row = self.psi.row_mut(state);
        row += error * self.step_size;
        Ok(())
    }

    /// One in-place cyclic sweep of expected updates,
    /// `psi(s) += alpha [phi(s) + gamma sum_s' P(s, s') psi(s') - psi(s)]`
    /// for `s = 0, 1, ...`.
    pub fn expected_sweep(&mut self, p: &DMatrix<f64>, phi: &FeatureMap) -> Result<()> {
        self.check(phi)?;
        if p.nrows() != self.psi.nrows() || !p.is_square() {
            return Err(Error::InvalidArgument("transition matrix does not match the table".into()));
        }
        for s in 0..self.psi.nrows() {
            let expected_next: RowDVector<f64> = p.row(s) * &self.psi;
            let error = phi.matrix().row(s) + expected_next * self.gamma - self.psi.row(s);
            let mut row = self.psi.row_mut(s);
            row += error * self.step_size;
        }
        Ok(())
    }

    pub fn bonus(&self, state: usize) -> Result<f64> {
        l2_bonus(self.psi.row(state).iter())
    }
}

/// Action values with the mixing coefficient `tau` of the mixed
/// Monte-Carlo target.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub q: DMatrix<f64>,
    tau: f64,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
        }
        Ok(Self {
            q: DMatrix::zeros(num_states, num_actions),
            tau,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn max(&self, state: usize) -> f64 {
        self.q.row(state).max()
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, state: usize) -> usize {
        let row = self.q.row(state);
        (1..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best })
    }
}

/// One transition as stored for the end-of-episode update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStep {
    pub state: usize,
    pub action: usize,
    /// Extrinsic reward `R_{t+1}`.
    pub reward: f64,
    /// Unscaled bonus `r_int(S_t)`.
    pub bonus: f64,
    pub next_state: usize,
}

impl EpisodeStep {
    fn augmented(&self, beta: f64) -> f64 {
        self.reward + beta * self.bonus
    }
}

/// Mixed target for `suffix[0]`:
///
/// ```text
/// (1 - tau) [R_t + beta r_int(S_t) + gamma max_a' q(S_{t+1}, a')]
///   + tau   sum_k gamma^k [R_{t+k} + beta r_int(S_{t+k})]
/// ```
///
/// `suffix` runs from step `t` to the end of the episode; `complete` says
/// whether that end has been reached. The Monte-Carlo part needs it when
/// `tau > 0`.
pub fn mmc_target(q: &QTable, suffix: &[EpisodeStep], complete: bool, gamma: f64, beta: f64) -> Result<f64> {
    let first = suffix
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty episode suffix".into()))?;
    let one_step = first.augmented(beta) + gamma * q.max(first.next_state);
    if q.tau == 0.0 {
        return Ok(one_step);
    }
    if !complete {
        return Err(Error::IncompleteEpisode);
    }
    let mut discount = 1.0;
    let mut mc = 0.0;
    for step in suffix {
        mc += discount * step.augmented(beta);
        discount *= gamma;
    }
    Ok((1.0 - q.tau) * one_step + q.tau * mc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfQConfig {
    pub gamma: f64,
    /// Step size for both the Q-table and the successor features.
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the horizon over which epsilon anneals linearly.
    pub epsilon_anneal_fraction: f64,
    /// Length of the segments the continuing task is cut into for the
    /// Monte-Carlo part of the target.
    pub episode_length: usize,
    /// Bonus used while a state's successor features are still zero.
    /// Defaults to `1 / alpha`, the bonus after one update of a unit feature.
    pub max_bonus: Option<f64>,
    pub seed: u64,
}

impl Default for SfQConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            alpha: 0.1,
            beta: 1.0,
            tau: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_anneal_fraction: 0.2,
            episode_length: 500,
            max_bonus: None,
            seed: 0,
        }
    }
}

impl SfQConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {x}")))
            }
        };
        unit("tau", self.tau)?;
        unit("epsilon_start", self.epsilon_start)?;
        unit("epsilon_end", self.epsilon_end)?;
        unit("epsilon_anneal_fraction", self.epsilon_anneal_fraction)?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.episode_length == 0 {
            return Err(Error::InvalidArgument("episode_length must be positive".into()));
        }
        if let Some(b) = self.max_bonus {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::InvalidArgument("max_bonus must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn max_bonus(&self) -> f64 {
        self.max_bonus.unwrap_or(1.0 / self.alpha)
    }

    /// Linearly annealed exploration rate at `step` of a `horizon`-step run.
    pub fn epsilon(&self, step: u64, horizon: u64) -> f64 {
        let span = (self.epsilon_anneal_fraction * horizon as f64).floor();
        if span <= 0.0 || step as f64 >= span {
            return self.epsilon_end;
        }
        let frac = step as f64 / span;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// Epsilon-greedy tabular Q-learning on `R + beta / ||psi(S_t)||_2` with
/// mixed Monte-Carlo targets applied at the end of each segment.
#[derive(Debug, Clone)]
pub struct SfQAgent {
    config: SfQConfig,
    horizon: u64,
    features: FeatureMap,
    sf: SuccessorFeatureTable,
    q: QTable,
    episode: Vec<EpisodeStep>,
    steps: u64,
    last_bonus: f64,
    rng: ChaCha8Rng,
}

impl SfQAgent {
    pub fn new(num_states: usize, num_actions: usize, config: SfQConfig, horizon: u64) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_features(FeatureMap::tabular(num_states), num_actions, config, horizon, rng)
    }

    pub fn with_features(
        features: FeatureMap,
        num_actions: usize,
        config: SfQConfig,
        horizon: u64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if num_actions == 0 {
            return Err(Error::InvalidArgument("no actions".into()));
        }
        let features = if features.is_normalized() {
            features
        } else {
            features.normalize()?
        };
        let n = features.num_states();
        Ok(Self {
            sf: SuccessorFeatureTable::zeros(n, features.dim(), config.gamma, config.alpha)?,
            q: QTable::zeros(n, num_actions, config.tau)?,
            features,
            config,
            horizon,
            episode: Vec::with_capacity(config.episode_length),
            steps: 0,
            last_bonus: 0.0,
            rng,
        })
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn successor_features(&self) -> &SuccessorFeatureTable {
        &self.sf
    }

    fn bonus(&self, state: usize) -> f64 {
        self.sf.bonus(state).unwrap_or_else(|_| self.config.max_bonus())
    }

    fn finish_episode(&mut self) -> Result<()> {
        for k in (0..self.episode.len()).rev() {
            let step = self.episode[k];
            let target = mmc_target(&self.q, &self.episode[k..], true, self.config.gamma, self.config.beta)?;
            let q = &mut self.q.q[(step.state, step.action)];
            *q += self.config.alpha * (target - *q);
        }
        self.episode.clear();
        Ok(())
    }
}

impl Agent for SfQAgent {
    fn act(&mut self, state: usize) -> usize {
        let eps = self.config.epsilon(self.steps, self.horizon);
        if self.rng.gen::<f64>() < eps {
            self.rng.gen_range(0..self.q.q.ncols())
        } else {
            // Ties are broken at random so untrained rows carry no bias
            // towards any action index.
            let row = self.q.q.row(state);
            let best = row.max();
            let ties: Vec<usize> = (0..row.len()).filter(|&a| row[a] == best).collect();
            ties[self.rng.gen_range(0..ties.len())]
        }
    }

    fn observe(&mut self, sample: &TransitionSample) -> Result<()> {
        // The bonus is read before this transition's own SF update.
        let bonus = self.bonus(sample.state);
        self.sf.td_update(sample.state, sample.next_state, &self.features)?;
        self.episode.push(EpisodeStep {
            state: sample.state,
            action: sample.action,
            reward: sample.reward,
            bonus,
            next_state: sample.next_state,
        });
        self.last_bonus = self.config.beta * bonus;
        self.steps += 1;
        if self.episode.len() >= self.config.episode_length || self.steps >= self.horizon {
            self.finish_episode()?;
        }
        Ok(())
    }

    fn last_bonus(&self) -> f64 {
        self.last_bonus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::CountingScheme;
    use crate::mdp::TabularMdp;
    use crate::sr::{exact_sr, intrinsic_reward_l1, ssr_from_counts};
    use approx::assert_abs_diff_eq;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    fn cycle(k: usize) -> DMatrix<f64> {
        TabularMdp::diagnostic_chain(k, 0.0).unwrap().transition_matrices()[0].clone()
    }

    #[test]
    fn tabular_features_reduce_to_sr() {
        let p = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 0.1, 0.1, 0.8]);
        let sf = closed_form_sf(&p, &FeatureMap::tabular(3), 0.9).unwrap();
        let sr = exact_sr(&p, 0.9).unwrap();
        assert!(max_abs(&(sf.values() - sr.values())) < 1e-12);
        assert_eq!(sf.variant(), SrVariant::Features);
    }

    #[test]
    fn gamma_zero_returns_features() {
        let phi = FeatureMap::new(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.5, 0.5, 0.0])).unwrap();
        let sf = closed_form_sf(&cycle(2), &phi, 0.0).unwrap();
        assert_eq!(sf.values(), phi.matrix());
    }

    #[test]
    fn two_cycle_closed_form() {
        let sf = closed_form_sf(&cycle(2), &FeatureMap::tabular(2), 0.5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert!(max_abs(&(sf.values() - expected)) < 1e-12);
    }

    #[test]
    fn first_update_from_zero_is_the_feature() {
        let phi = FeatureMap::tabular(3);
        let mut t = SuccessorFeatureTable::zeros(3, 3, 0.9, 1.0).unwrap();
        t.td_update(1, 2, &phi).unwrap();
        assert_eq!(t.psi().row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert_eq!(t.psi().row(0).sum(), 0.0);
        assert_eq!(t.psi().row(2).sum(), 0.0);
    }

    #[test]
    fn closed_form_is_a_fixed_point_on_deterministic_chains() {
        let phi = FeatureMap::tabular(4);
        let p = cycle(4);
        let exact = closed_form_sf(&p, &phi, 0.9).unwrap().into_values();
        let mut t = SuccessorFeatureTable::from_matrix(exact.clone(), 0.9, 0.7).unwrap();
        for s in 0..4 {
            t.td_update(s, (s + 1) % 4, &phi).unwrap();
        }
        assert!(max_abs(&(t.psi() - exact)) <= 1e-12);
    }

    #[test]
    fn sampled_sweeps_converge_on_three_cycle() {
        let phi = FeatureMap::tabular(3);
        let exact = closed_form_sf(&cycle(3), &phi, 0.9).unwrap().into_values();
        let mut t = SuccessorFeatureTable::zeros(3, 3, 0.9, 0.1).unwrap();
        let mut sweeps = 0;
        while max_abs(&(t.psi() - &exact)) > 1e-6 {
            for s in 0..3 {
                t.td_update(s, (s + 1) % 3, &phi).unwrap();
            }
            sweeps += 1;
            assert!(sweeps < 5_000, "no convergence");
        }
    }

    #[test]
    fn l2_bonus_values() {
        assert_eq!(l2_bonus(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(l2_bonus(&[12.0, 16.0]).unwrap(), 0.05, epsilon = 1e-15);
        assert!(matches!(l2_bonus(&[0.0, 0.0]), Err(Error::ZeroFeatures)));
    }

    #[test]
    fn fewer_updates_larger_bonus() {
        let phi = FeatureMap::tabular(4);
        let mut t = SuccessorFeatureTable::zeros(4, 4, 0.9, 0.2).unwrap();
        // State 0 updated five times, state 1 twice, along 0 -> 1 -> 2.
        for _ in 0..5 {
            t.td_update(0, 1, &phi).unwrap();
        }
        for _ in 0..2 {
            t.td_update(1, 2, &phi).unwrap();
        }
        assert!(t.bonus(1).unwrap() > t.bonus(0).unwrap());
    }

    #[test]
    fn l2_ordering_matches_l1_ordering_on_cycle_walks() {
        // Walk a deterministic k-cycle from state 0 for m steps; states
        // before the stopping point have one extra visit. Both bonuses must
        // rank a more-visited state strictly below a less-visited one.
        for k in 2..=5 {
            for m in k + 1..4 * k {
                let phi = FeatureMap::tabular(k);
                let mut t = SuccessorFeatureTable::zeros(k, k, 0.9, 0.3).unwrap();
                let mut counts = DMatrix::<u64>::zeros(k, k);
                for step in 0..m {
                    let s = step % k;
                    t.td_update(s, (s + 1) % k, &phi).unwrap();
                    counts[(s, (s + 1) % k)] += 1;
                }
                let ssr = ssr_from_counts(&counts, CountingScheme::Raw, 1, 0.9).unwrap();
                let l1 = intrinsic_reward_l1(&ssr).unwrap();
                let visits: Vec<u64> = counts.row_iter().map(|r| r.iter().sum()).collect();
                for a in 0..k {
                    for b in 0..k {
                        if visits[a] < visits[b] {
                            assert!(t.bonus(a).unwrap() > t.bonus(b).unwrap(), "k={k} m={m} {a} {b}");
                            assert!(l1[a] > l1[b], "k={k} m={m} {a} {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn normalization() {
        let phi = FeatureMap::new(DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 2.0])).unwrap();
        assert!(!phi.is_normalized());
        let phi = phi.normalize().unwrap();
        for r in phi.matrix().row_iter() {
            assert_abs_diff_eq!(r.norm(), 1.0, epsilon = 1e-12);
        }
        let zero = FeatureMap::new(DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert!(zero.normalize().is_err());
        assert!(FeatureMap::new(DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    fn step(state: usize, reward: f64, bonus: f64, next_state: usize) -> EpisodeStep {
        EpisodeStep {
            state,
            action: 0,
            reward,
            bonus,
            next_state,
        }
    }

    #[test]
    fn mmc_reduces_to_q_learning_at_tau_zero() {
        let mut q = QTable::zeros(2, 2, 0.0).unwrap();
        q.q[(1, 0)] = 3.0;
        q.q[(1, 1)] = 5.0;
        let ep = [step(0, 1.0, 0.5, 1)];
        let t = mmc_target(&q, &ep, false, 0.9, 2.0).unwrap();
        assert_abs_diff_eq!(t, 1.0 + 2.0 * 0.5 + 0.9 * 5.0, epsilon = 1e-15);
    }

    #[test]
    fn mmc_single_step_pure_monte_carlo() {
        let mut q = QTable::zeros(2, 1, 1.0).unwrap();
        q.q[(1, 0)] = 100.0;
        let t = mmc_target(&q, &[step(0, 2.0, 0.25, 1)], true, 0.9, 4.0).unwrap();
        assert_eq!(t, 3.0);
    }

    #[test]
    fn mmc_two_step_mixture() {
        let mut q = QTable::zeros(3, 1, 0.5).unwrap();
        q.q[(1, 0)] = 2.0;
        let ep = [step(0, 1.0, 0.5, 1), step(1, 3.0, 0.25, 2)];
        // one-step: 1 + 2*0.5 + 0.9*2 = 3.8; MC: (1 + 1) + 0.9 * (3 + 0.5) = 5.15
        let t = mmc_target(&q, &ep, true, 0.9, 2.0).unwrap();
        assert_abs_diff_eq!(t, 0.5 * 3.8 + 0.5 * 5.15, epsilon = 1e-12);
        assert!(matches!(mmc_target(&q, &ep, false, 0.9, 2.0), Err(Error::IncompleteEpisode)));
        assert!(mmc_target(&q, &[], true, 0.9, 2.0).is_err());
    }

    #[test]
    fn epsilon_schedule() {
        let c = SfQConfig::default();
        assert_eq!(c.epsilon(0, 1000), 1.0);
        assert_abs_diff_eq!(c.epsilon(100, 1000), 0.55, epsilon = 1e-12);
        assert_eq!(c.epsilon(200, 1000), 0.1);
        assert_eq!(c.epsilon(900, 1000), 0.1);
    }

    #[test]
    fn agent_is_deterministic() {
        let mdp = TabularMdp::riverswim();
        let run = || {
            let config = SfQConfig { seed: 3, ..Default::default() };
            let mut agent = SfQAgent::new(6, 2, config, 300).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut s = mdp.sample_start(&mut rng);
            let mut log = Vec::new();
            for _ in 0..300 {
                let a = agent.act(s);
                let t = mdp.sample_transition(s, a, &mut rng).unwrap();
                agent.observe(&t).unwrap();
                log.push((t.reward, agent.last_bonus()));
                s = t.next_state;
            }
            (log, agent.q_table().q.clone())
        };
        assert_eq!(run(), run());
    }
}
