//! Policy evaluation, greedy improvement and policy iteration over
//! per-action transition matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sr::check_gamma;

/// Rows of a planning model must sum to one within this tolerance.
const MODEL_ROW_TOL: f64 = 1e-9;

/// A deterministic policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyTable(pub Vec<usize>);

impl PolicyTable {
    pub fn uniform(num_states: usize, action: usize) -> Self {
        PolicyTable(vec![action; num_states])
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    /// `v(s)`.
    pub v: DVector<f64>,
    /// `q(s, a)`, `|S| x |A|`.
    pub q: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerSettings {
    pub gamma: f64,
    /// Evaluation stops once a sweep changes no value by this much or more.
    pub eval_tolerance: f64,
    pub max_eval_sweeps: usize,
    pub max_policy_iterations: usize,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            eval_tolerance: 0.01,
            max_eval_sweeps: 10_000,
            max_policy_iterations: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: ValueTable,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub policy: PolicyTable,
    pub values: ValueTable,
    pub iterations: usize,
    pub eval_sweeps: usize,
    /// `max_policy_iterations` ran out before the policy settled.
    pub hit_iteration_cap: bool,
}

fn validate(model: &[DMatrix<f64>], rewards: &DMatrix<f64>, settings: &PlannerSettings) -> Result<()> {
    check_gamma(settings.gamma)?;
    if settings.eval_tolerance.is_nan() || settings.eval_tolerance <= 0.0 {
        return Err(Error::InvalidArgument("eval_tolerance must be positive".into()));
    }
    let n = rewards.nrows();
    if model.len() != rewards.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{} transition matrices for {} actions",
            model.len(),
            rewards.ncols()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("non-finite reward".into()));
    }
    for (a, p) in model.iter().enumerate() {
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::NotStochastic(format!(
                "action {a}: {}x{} matrix for {n} states",
                p.nrows(),
                p.ncols()
            )));
        }
        for (s, row) in p.row_iter().enumerate() {
            let sum = row.sum();
            if row.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > MODEL_ROW_TOL {
                return Err(Error::NotStochastic(format!("action {a}, state {s}: row sums to {sum}")));
            }
        }
    }
    Ok(())
}

fn action_values(model: &[DMatrix<f64>], rewards: &DMatrix<f64>, v: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
    let mut q = rewards.clone();
    for (a, p) in model.iter().enumerate() {
        let next = p * v;
        for s in 0..q.nrows() {
            q[(s, a)] += gamma * next[s];
        }
    }
    q
}

fn evaluate(
    model: &[DMatrix<f64>],
    rewards: &DMatrix<f64>,
    policy: &PolicyTable,
    settings: &PlannerSettings,
    initial: Option<&DVector<f64>>,
) -> Evaluation {
    let n = rewards.nrows();
    let p_pi = DMatrix::from_fn(n, n, |s, j| model[policy.action(s)][(s, j)]);
    let r_pi = DVector::from_fn(n, |s, _| rewards[(s, policy.action(s))]);
    let mut v = initial.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < settings.max_eval_sweeps {
        let mut next = r_pi.clone();
        next.gemv(settings.gamma, &p_pi, &v, 1.0);
        let change = (&next - &v).amax();
        v = next;
        sweeps += 1;
        if change < settings.eval_tolerance {
            converged = true;
            break;
        }
    }
    let q = action_values(model, rewards, &v, settings.gamma);
    Evaluation {
        values: ValueTable { v, q },
        sweeps,
        converged,
    }
}

/// Iterative evaluation `v <- r_pi + gamma P_pi v` from `v = 0` until the
/// max-norm change of a sweep drops below `eval_tolerance`.
pub fn policy_evaluation(
    model: &[DMatrix<f64>],
    rewards: &DMatrix<f64>,
    policy: &PolicyTable,
    settings: &PlannerSettings,
) -> Result<Evaluation> {
    validate(model, rewards, settings)?;
    check_policy(policy, rewards)?;
    Ok(evaluate(model, rewards, policy, settings, None))
}

fn check_policy(policy: &PolicyTable, rewards: &DMatrix<f64>) -> Result<()> {
    if policy.0.len() != rewards.nrows() || policy.0.iter().any(|&a| a >= rewards.ncols()) {
        return Err(Error::OutOfRange("policy does not fit the model".into()));
    }
    Ok(())
}

/// Greedy policy; ties go to the lowest action index.
pub fn policy_improvement(q: &DMatrix<f64>) -> PolicyTable {
    PolicyTable(
        q.row_iter()
            .map(|row| {
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect(),
    )
}

/// Howard policy iteration starting from `initial`. Each evaluation is
/// warm-started from the previous value estimate (or `warm_values`).
pub fn policy_iteration_from(
    model: &[DMatrix<f64>],
    rewards: &DMatrix<f64>,
    settings: &PlannerSettings,
    initial: PolicyTable,
    warm_values: Option<&DVector<f64>>,
) -> Result<PlanResult> {
    validate(model, rewards, settings)?;
    check_policy(&initial, rewards)?;
    if let Some(v) = warm_values {
        if v.len() != rewards.nrows() {
            return Err(Error::InvalidArgument("warm-start vector has the wrong length".into()));
        }
    }
    let mut policy = initial;
    let mut v = warm_values.cloned();
    let mut iterations = 0;
    let mut eval_sweeps = 0;
    loop {
        let eval = evaluate(model, rewards, &policy, settings, v.as_ref());
        iterations += 1;
        eval_sweeps += eval.sweeps;
        let improved = policy_improvement(&eval.values.q);
        if improved == policy {
            return Ok(PlanResult {
                policy,
                values: eval.values,
                iterations,
                eval_sweeps,
                hit_iteration_cap: false,
            });
        }
        if iterations >= settings.max_policy_iterations {
            return Ok(PlanResult {
                policy,
                values: eval.values,
                iterations,
                eval_sweeps,
                hit_iteration_cap: true,
            });
        }
        v = Some(eval.values.v);
        policy = improved;
    }
}

/// Policy iteration from the all-zeros policy and zero values.
pub fn policy_iteration(
    model: &[DMatrix<f64>],
    rewards: &DMatrix<f64>,
    settings: &PlannerSettings,
) -> Result<PlanResult> {
    let initial = PolicyTable::uniform(rewards.nrows(), 0);
    policy_iteration_from(model, rewards, settings, initial, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularMdp;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings(gamma: f64) -> PlannerSettings {
        PlannerSettings {
            gamma,
            ..Default::default()
        }
    }

    /// Exact value of a deterministic policy by Gaussian elimination.
    fn exact_policy_value(model: &[DMatrix<f64>], rewards: &DMatrix<f64>, policy: &[usize], gamma: f64) -> Vec<f64> {
        let n = rewards.nrows();
        let mut a = vec![vec![0.0; n + 1]; n];
        for s in 0..n {
            for j in 0..n {
                a[s][j] = if s == j { 1.0 } else { 0.0 } - gamma * model[policy[s]][(s, j)];
            }
            a[s][n] = rewards[(s, policy[s])];
        }
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, pivot);
            for row in 0..n {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..n).map(|s| a[s][n] / a[s][s]).collect()
    }

    fn all_policies(n: usize, actions: usize) -> Vec<Vec<usize>> {
        (0..actions.pow(n as u32))
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let a = code % actions;
                        code /= actions;
                        a
                    })
                    .collect()
            })
            .collect()
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, actions: usize) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let model = (0..actions)
            .map(|_| {
                let mut p = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>());
                for mut row in p.row_iter_mut() {
                    let total = row.sum();
                    row /= total;
                }
                p
            })
            .collect();
        let rewards = DMatrix::from_fn(n, actions, |_, _| rng.gen::<f64>());
        (model, rewards)
    }

    #[test]
    fn single_state_geometric_series() {
        let model = vec![DMatrix::from_element(1, 1, 1.0)];
        let rewards = DMatrix::from_element(1, 1, 1.0);
        let s = PlannerSettings {
            gamma: 0.5,
            eval_tolerance: 1e-6,
            ..Default::default()
        };
        let e = policy_evaluation(&model, &rewards, &PolicyTable(vec![0]), &s).unwrap();
        assert_abs_diff_eq!(e.values.v[0], 2.0, epsilon = 1e-5);
    }

    #[test]
    fn zero_reward_is_exact_after_one_sweep() {
        let mdp = TabularMdp::riverswim();
        let e = policy_evaluation(
            &mdp.transition_matrices(),
            &DMatrix::zeros(6, 2),
            &PolicyTable(vec![1; 6]),
            &settings(0.95),
        )
        .unwrap();
        assert_eq!(e.sweeps, 1);
        assert!(e.values.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_cycle_values() {
        let model = vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])];
        let rewards = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let s = settings(0.5);
        let e = policy_evaluation(&model, &rewards, &PolicyTable(vec![0, 0]), &s).unwrap();
        assert_abs_diff_eq!(e.values.v[0], 4.0 / 3.0, epsilon = s.eval_tolerance);
        assert_abs_diff_eq!(e.values.v[1], 2.0 / 3.0, epsilon = s.eval_tolerance);
    }

    #[test]
    fn rejects_non_stochastic_model() {
        let model = vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 1.0, 0.0])];
        let rewards = DMatrix::zeros(2, 1);
        assert!(matches!(
            policy_evaluation(&model, &rewards, &PolicyTable(vec![0, 0]), &settings(0.9)),
            Err(Error::NotStochastic(_))
        ));
    }

    #[test]
    fn greedy_tie_break() {
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(policy_improvement(&q), PolicyTable(vec![1, 0]));
    }

    #[test]
    fn dominant_action_found_quickly() {
        let mdp = TabularMdp::riverswim();
        let mut rewards = DMatrix::zeros(6, 2);
        rewards.column_mut(1).fill(1.0);
        let plan = policy_iteration(&mdp.transition_matrices(), &rewards, &settings(0.9)).unwrap();
        assert_eq!(plan.policy, PolicyTable(vec![1; 6]));
        assert!(plan.iterations <= 2);
    }

    #[test]
    fn two_cycle_greedy_matches_enumeration() {
        // Two actions: 0 moves across, 1 stays.
        let model = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DMatrix::identity(2, 2),
        ];
        let rewards = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.2]);
        let s = settings(0.5);
        let plan = policy_iteration(&model, &rewards, &s).unwrap();
        let best = all_policies(2, 2)
            .into_iter()
            .max_by(|a, b| {
                let va: f64 = exact_policy_value(&model, &rewards, a, 0.5).iter().sum();
                let vb: f64 = exact_policy_value(&model, &rewards, b, 0.5).iter().sum();
                va.total_cmp(&vb)
            })
            .unwrap();
        assert_eq!(plan.policy.0, best);
    }

    #[test]
    fn matches_enumeration_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let s = settings(0.95);
        let slack = 2.0 * s.eval_tolerance / (1.0 - s.gamma);
        for _ in 0..50 {
            let (model, rewards) = random_model(&mut rng, 4, 2);
            let plan = policy_iteration(&model, &rewards, &s).unwrap();
            assert!(!plan.hit_iteration_cap);
            let optimum = all_policies(4, 2)
                .iter()
                .map(|p| exact_policy_value(&model, &rewards, p, s.gamma))
                .fold(vec![f64::NEG_INFINITY; 4], |acc, v| {
                    acc.iter().zip(&v).map(|(a, b)| a.max(*b)).collect()
                });
            let achieved = exact_policy_value(&model, &rewards, &plan.policy.0, s.gamma);
            for st in 0..4 {
                assert!(optimum[st] - achieved[st] <= slack);
                assert!((plan.values.v[st] - optimum[st]).abs() <= slack);
            }
        }
    }

    #[test]
    fn riverswim_optimum_is_always_right() {
        let mdp = TabularMdp::riverswim();
        let model = mdp.transition_matrices();
        let rewards = mdp.expected_rewards();
        let plan = policy_iteration(&model, &rewards, &settings(0.95)).unwrap();

        // Value-iteration oracle.
        let mut v = DVector::zeros(6);
        for _ in 0..5000 {
            v = action_values(&model, &rewards, &v, 0.95)
                .row_iter()
                .map(|r| r.max())
                .collect::<Vec<_>>()
                .into();
        }
        let vi_policy = policy_improvement(&action_values(&model, &rewards, &v, 0.95));
        // Action 0 swims right.
        assert_eq!(vi_policy, PolicyTable(vec![0; 6]));
        assert_eq!(plan.policy, vi_policy);
    }

    #[test]
    fn shifting_rewards_per_state_leaves_greedy_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (model, rewards) = random_model(&mut rng, 4, 3);
            let s = PlannerSettings {
                gamma: 0.9,
                eval_tolerance: 1e-9,
                ..Default::default()
            };
            let base = policy_iteration(&model, &rewards, &s).unwrap();
            let shifted = rewards.map(|r| r - 7.5);
            let moved = policy_iteration(&model, &shifted, &s).unwrap();
            assert_eq!(base.policy, moved.policy);
        }
    }
}
