//! Randomised property suites used by `ssrx verify` and the acceptance tests.
//!
//! Every suite is a deterministic function of `(trials, seed)`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counts::CountingScheme;
use crate::error::{Error, Result};
use crate::planning::{policy_iteration, PlannerSettings};
use crate::sr::{
    count_bounds, decompose_ptilde, empirical_sr, exact_sr, neumann_sr, ssr_from_counts, substochastic_matrix,
};
use crate::td::{closed_form_sf, FeatureMap, SuccessorFeatureTable};

/// Counterexamples kept per report.
const MAX_COUNTEREXAMPLES: usize = 10;
const IDENTITY_TOL: f64 = 1e-9;
const NEUMANN_TOL: f64 = 1e-8;
const RECONSTRUCTION_TOL: f64 = 1e-12;
const TD_TOL: f64 = 1e-6;
const TD_MAX_SWEEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Theorem1,
    SrIdentities,
    TdConvergence,
    OracleEquivalence,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Theorem1,
        Suite::SrIdentities,
        Suite::TdConvergence,
        Suite::OracleEquivalence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::SrIdentities => "sr-identities",
            Suite::TdConvergence => "td-convergence",
            Suite::OracleEquivalence => "oracle-equivalence",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suite: Suite,
    pub trials: usize,
    /// Individual assertions evaluated.
    pub checks: usize,
    pub failures: usize,
    /// The first few failing cases, human readable.
    pub counterexamples: Vec<String>,
    pub elapsed_ms: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} trials, {} checks, {} failures ({:.0} ms)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.trials,
            self.checks,
            self.failures,
            self.elapsed_ms
        )?;
        for c in &self.counterexamples {
            write!(f, "\n  {c}")?;
        }
        Ok(())
    }
}

struct Tally {
    checks: usize,
    failures: usize,
    counterexamples: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            checks: 0,
            failures: 0,
            counterexamples: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.counterexamples.len() < MAX_COUNTEREXAMPLES {
                self.counterexamples.push(describe());
            }
        }
    }
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    for trial in 0..trials {
        match suite {
            Suite::Theorem1 => count_bound_trial(&mut rng, trial, &mut tally)?,
            Suite::SrIdentities => identity_trial(&mut rng, trial, &mut tally)?,
            Suite::TdConvergence => td_trial(&mut rng, trial, &mut tally)?,
            Suite::OracleEquivalence => oracle_trial(&mut rng, trial, &mut tally)?,
        }
    }
    Ok(VerifyReport {
        suite,
        trials,
        checks: tally.checks,
        failures: tally.failures,
        counterexamples: tally.counterexamples,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

const GAMMAS: [f64; 3] = [0.5, 0.9, 0.95];

fn random_counts(rng: &mut impl Rng, max_states: usize, max_count: u64) -> DMatrix<u64> {
    let n = rng.gen_range(1..=max_states);
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(0..=max_count))
}

/// Row-stochastic matrix; about a third of the entries are zero.
fn random_stochastic(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(0.35) { 0.0 } else { rng.gen::<f64>() });
    for mut row in p.row_iter_mut() {
        if row.sum() == 0.0 {
            let j = rng.gen_range(0..n);
            row[j] = 1.0;
        }
        let total = row.sum();
        row /= total;
    }
    p
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn count_bound_trial(rng: &mut impl Rng, trial: usize, tally: &mut Tally) -> Result<()> {
    let counts = random_counts(rng, 8, 50);
    let gamma = GAMMAS[trial % GAMMAS.len()];
    for (s, b) in count_bounds(&counts, gamma)?.iter().enumerate() {
        tally.check(b.holds, || {
            format!(
                "trial {trial} gamma {gamma} state {s}: {} <= {} <= {} fails (n = {}, counts {:?})",
                b.lower,
                b.chi,
                b.upper,
                b.visits,
                counts.row(s).iter().collect::<Vec<_>>()
            )
        });
    }
    Ok(())
}

fn identity_trial(rng: &mut impl Rng, trial: usize, tally: &mut Tally) -> Result<()> {
    let n = rng.gen_range(1..=8);
    let gamma = GAMMAS[trial % GAMMAS.len()];
    let p = random_stochastic(rng, n);
    let sr = exact_sr(&p, gamma)?;

    let row_target = 1.0 / (1.0 - gamma);
    let worst_row = sr
        .row_l1_norms()
        .iter()
        .map(|x| (x - row_target).abs())
        .fold(0.0, f64::max);
    tally.check(worst_row <= IDENTITY_TOL, || {
        format!("trial {trial}: SR row sum off by {worst_row} (n {n}, gamma {gamma})")
    });

    let resolvent = DMatrix::identity(n, n) - &p * gamma;
    let residual = max_abs_diff(&(sr.values() * &resolvent), &DMatrix::identity(n, n));
    tally.check(residual <= IDENTITY_TOL, || {
        format!("trial {trial}: Psi (I - gamma P) differs from I by {residual}")
    });

    let series = neumann_sr(&p, gamma, NEUMANN_TOL)?;
    let gap = max_abs_diff(series.values(), sr.values());
    tally.check(gap <= NEUMANN_TOL + IDENTITY_TOL, || {
        format!("trial {trial}: truncated series differs from direct solve by {gap}")
    });

    let counts = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0..=30u64));
    let ssr = ssr_from_counts(&counts, CountingScheme::Raw, 1, gamma)?;
    let decomposition = decompose_ptilde(&counts);
    let p_tilde = substochastic_matrix(&counts, CountingScheme::Raw, 1);
    let err = decomposition.max_reconstruction_error(&p_tilde);
    tally.check(err <= RECONSTRUCTION_TOL, || {
        format!("trial {trial}: P~ reconstruction error {err}")
    });

    let min_entry = ssr.values().min();
    tally.check(min_entry >= -IDENTITY_TOL, || {
        format!("trial {trial}: negative SSR entry {min_entry}")
    });

    // Unvisited rows of the empirical matrix are zero, which is still
    // substochastic and keeps the comparison entrywise.
    let empirical = empirical_sr(&decomposition.empirical, gamma)?;
    let excess = (ssr.values() - empirical.values()).max();
    tally.check(excess <= IDENTITY_TOL, || {
        format!("trial {trial}: SSR exceeds the empirical SR by {excess}")
    });
    Ok(())
}

fn random_features(rng: &mut impl Rng, n: usize, dim: usize) -> Result<FeatureMap> {
    let mut phi = DMatrix::from_fn(n, dim, |_, _| rng.gen::<f64>());
    for mut row in phi.row_iter_mut() {
        if row.sum() == 0.0 {
            row[0] = 1.0;
        }
    }
    FeatureMap::new(phi)?.normalize()
}

fn td_trial(rng: &mut impl Rng, trial: usize, tally: &mut Tally) -> Result<()> {
    const N: usize = 5;
    let gamma = [0.5, 0.9][trial % 2];
    let alpha = rng.gen_range(0.3..=1.0);

    // Ergodic chain: every entry positive.
    let mut p = DMatrix::from_fn(N, N, |_, _| rng.gen_range(0.05..1.0));
    for mut row in p.row_iter_mut() {
        let total = row.sum();
        row /= total;
    }
    let phi = if trial.is_multiple_of(2) {
        FeatureMap::tabular(N)
    } else {
        random_features(rng, N, 3)?
    };
    let target = closed_form_sf(&p, &phi, gamma)?;
    let mut table = SuccessorFeatureTable::zeros(N, phi.dim(), gamma, alpha)?;
    let mut sweeps = 0;
    let mut err = max_abs_diff(table.psi(), target.values());
    while err >= TD_TOL && sweeps < TD_MAX_SWEEPS {
        table.expected_sweep(&p, &phi)?;
        sweeps += 1;
        err = max_abs_diff(table.psi(), target.values());
    }
    tally.check(err < TD_TOL, || {
        format!("trial {trial}: expected TD stalled at error {err} after {sweeps} sweeps (alpha {alpha}, gamma {gamma})")
    });

    // Deterministic chain with sampled updates from zero: never above the
    // closed form.
    let next: Vec<usize> = (0..N).map(|_| rng.gen_range(0..N)).collect();
    let det = DMatrix::from_fn(N, N, |s, j| if next[s] == j { 1.0 } else { 0.0 });
    let phi = random_features(rng, N, 3)?;
    let bound = closed_form_sf(&det, &phi, gamma)?;
    let mut table = SuccessorFeatureTable::zeros(N, phi.dim(), gamma, alpha)?;
    let mut worst = f64::NEG_INFINITY;
    let mut state = rng.gen_range(0..N);
    for _ in 0..500 {
        table.td_update(state, next[state], &phi)?;
        worst = worst.max((table.psi() - bound.values()).max());
        state = if rng.gen_bool(0.2) { rng.gen_range(0..N) } else { next[state] };
    }
    tally.check(worst <= IDENTITY_TOL, || {
        format!("trial {trial}: sampled TD overshoots the closed form by {worst} (chain {next:?})")
    });
    Ok(())
}

/// Gaussian elimination with partial pivoting; independent of the LU used
/// by the library.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= factor * y;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

fn exact_policy_value(p: &[DMatrix<f64>], r: &DMatrix<f64>, policy: &[usize], gamma: f64) -> Vec<f64> {
    let n = policy.len();
    let a = (0..n)
        .map(|s| {
            (0..n)
                .map(|j| f64::from(u8::from(s == j)) - gamma * p[policy[s]][(s, j)])
                .collect()
        })
        .collect();
    let b = (0..n).map(|s| r[(s, policy[s])]).collect();
    solve_linear(a, b)
}

fn oracle_trial(rng: &mut impl Rng, trial: usize, tally: &mut Tally) -> Result<()> {
    const N: usize = 4;
    const A: usize = 2;
    let settings = PlannerSettings::default();
    let gamma = settings.gamma;
    let slack = 2.0 * settings.eval_tolerance / (1.0 - gamma);

    let p: Vec<DMatrix<f64>> = (0..A).map(|_| random_stochastic(rng, N)).collect();
    let r = DMatrix::from_fn(N, A, |_, _| rng.gen::<f64>());

    let mut best = vec![f64::NEG_INFINITY; N];
    for code in 0..A.pow(N as u32) {
        let policy: Vec<usize> = (0..N).map(|s| (code / A.pow(s as u32)) % A).collect();
        let v = exact_policy_value(&p, &r, &policy, gamma);
        for s in 0..N {
            best[s] = best[s].max(v[s]);
        }
    }
    let best = DVector::from_vec(best);
    let q_star = DMatrix::from_fn(N, A, |s, a| r[(s, a)] + gamma * (p[a].row(s) * &best)[0]);

    let plan = policy_iteration(&p, &r, &settings)?;
    let reported = (&plan.values.v - &best).amax();
    tally.check(reported <= slack, || {
        format!("trial {trial}: planner values off by {reported} (slack {slack})")
    });
    let achieved = DVector::from_vec(exact_policy_value(&p, &r, plan.policy.actions(), gamma));
    let regret = (&best - &achieved).max();
    tally.check(regret <= slack, || {
        format!("trial {trial}: planner policy loses {regret} against the optimum")
    });
    for s in 0..N {
        let row = q_star.row(s);
        let top = row.transpose().imax();
        let runner_up = (0..A).filter(|&a| a != top).map(|a| row[a]).fold(f64::NEG_INFINITY, f64::max);
        if row[top] - runner_up > slack {
            let chosen = plan.policy.action(s);
            tally.check(chosen == top, || {
                format!("trial {trial} state {s}: planner picked {chosen}, optimum {top} by margin {}", row[top] - runner_up)
            });
        }
    }
    Ok(())
}
