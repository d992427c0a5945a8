//! Successor-representation algebra on dense matrices.
//!
//! `Psi = sum_t (gamma P)^t = (I - gamma P)^{-1}`. When `P` is built from
//! counts as `n(s, s') / (n(s) + 1)` the rows are substochastic and the row
//! norms of the result recover the visit counts: with
//! `chi(s) = (1 + gamma) - ||Psi(s)||_1`,
//!
//! ```text
//! gamma / (n(s) + 1) - gamma^2 / (1 - gamma)  <=  chi(s)  <=  gamma / (n(s) + 1)
//! ```
//!
//! Direct inverses go through an LU factorisation with partial pivoting; the
//! truncated Neumann series is kept as an independent route for
//! cross-checks.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::counts::{CountModel, CountingScheme};
use crate::error::{Error, Result};

/// Absolute slack used when checking the count-recovery bounds.
pub const BOUND_SLACK: f64 = 1e-9;

/// Row sums above `1 + ROW_SUM_TOL` are not substochastic.
const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SrVariant {
    /// SR of a known transition matrix.
    Exact,
    /// SR of an estimated transition matrix.
    Empirical,
    /// SR of the count-based substochastic matrix.
    Substochastic,
    /// `(I - gamma P)^{-1} Phi` for a feature matrix `Phi`.
    Features,
}

impl SrVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            SrVariant::Exact => "exact-SR",
            SrVariant::Empirical => "empirical-SR",
            SrVariant::Substochastic => "substochastic-SR",
            SrVariant::Features => "successor-features",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessorMatrix {
    values: DMatrix<f64>,
    gamma: f64,
    variant: SrVariant,
}

impl SuccessorMatrix {
    pub(crate) fn from_parts(values: DMatrix<f64>, gamma: f64, variant: SrVariant) -> Self {
        Self {
            values,
            gamma,
            variant,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn variant(&self) -> SrVariant {
        self.variant
    }

    /// `||Psi(s)||_1` for every row. Entries are nonnegative so this is the
    /// plain row sum.
    pub fn row_l1_norms(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.values.nrows(),
            self.values.row_iter().map(|r| r.iter().map(|x| x.abs()).sum()),
        )
    }

    fn expect(&self, variant: SrVariant) -> Result<()> {
        if self.variant == variant {
            Ok(())
        } else {
            Err(Error::WrongVariant {
                expected: variant.as_str(),
                actual: self.variant.as_str(),
            })
        }
    }
}

/// Row-major debug format: a `# <variant> gamma=<g> <rows>x<cols>` header,
/// then one line per row with space-separated entries.
impl fmt::Display for SuccessorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# {} gamma={} {}x{}",
            self.variant.as_str(),
            self.gamma,
            self.values.nrows(),
            self.values.ncols()
        )?;
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// `chi(s) = (1 + gamma) - ||Psi~(s)||_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiVector {
    pub values: DVector<f64>,
    pub gamma: f64,
}

/// Bounds on `chi(s)` for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountBound {
    pub visits: u64,
    pub lower: f64,
    pub chi: f64,
    pub upper: f64,
    pub holds: bool,
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

fn check_substochastic(p: &DMatrix<f64>) -> Result<()> {
    if !p.is_square() {
        return Err(Error::NotStochastic(format!(
            "{}x{} is not square",
            p.nrows(),
            p.ncols()
        )));
    }
    for (s, row) in p.row_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::NotStochastic(format!("row {s} has a negative or non-finite entry")));
        }
        let sum = row.sum();
        if sum > 1.0 + ROW_SUM_TOL {
            return Err(Error::NotStochastic(format!("row {s} sums to {sum}")));
        }
    }
    Ok(())
}

/// Solves `(I - gamma P) X = rhs`.
pub(crate) fn solve_resolvent(p: &DMatrix<f64>, gamma: f64, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    check_substochastic(p)?;
    let n = p.nrows();
    if rhs.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has {} rows, expected {n}",
            rhs.nrows()
        )));
    }
    let system = DMatrix::identity(n, n) - p * gamma;
    let mut x = rhs;
    if !system.lu().solve_mut(&mut x) {
        return Err(Error::Singular);
    }
    Ok(x)
}

/// `(I - gamma P)^{-1}` by direct solve.
pub fn exact_sr(p: &DMatrix<f64>, gamma: f64) -> Result<SuccessorMatrix> {
    let n = p.nrows();
    let values = solve_resolvent(p, gamma, DMatrix::identity(n, n))?;
    Ok(SuccessorMatrix {
        values,
        gamma,
        variant: SrVariant::Exact,
    })
}

/// The SR of an estimated model; same solve as [`exact_sr`].
pub fn empirical_sr(p_hat: &DMatrix<f64>, gamma: f64) -> Result<SuccessorMatrix> {
    Ok(SuccessorMatrix {
        variant: SrVariant::Empirical,
        ..exact_sr(p_hat, gamma)?
    })
}

/// Number of powers `T` kept by [`neumann_sr`]: the smallest `T` with
/// `gamma^(T+1) / (1 - gamma) < tolerance`.
pub fn neumann_terms(gamma: f64, tolerance: f64) -> Result<usize> {
    check_gamma(gamma)?;
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    if gamma == 0.0 {
        return Ok(0);
    }
    let mut t = 0usize;
    let mut tail = gamma / (1.0 - gamma);
    while tail >= tolerance {
        t += 1;
        tail *= gamma;
    }
    Ok(t)
}

/// `sum_{t=0}^{T} (gamma P)^t` with `T` from [`neumann_terms`]. The dropped
/// tail is below `tolerance` in every entry.
pub fn neumann_sr(p: &DMatrix<f64>, gamma: f64, tolerance: f64) -> Result<SuccessorMatrix> {
    check_substochastic(p)?;
    let terms = neumann_terms(gamma, tolerance)?;
    let n = p.nrows();
    let step = p * gamma;
    let mut power = DMatrix::identity(n, n);
    let mut sum = power.clone();
    for _ in 0..terms {
        power = &power * &step;
        sum += &power;
    }
    Ok(SuccessorMatrix {
        values: sum,
        gamma,
        variant: SrVariant::Exact,
    })
}

/// `P~(s, s') = n(s, s') / (n(s) + 1)` where `n(s)` follows `scheme`.
///
/// Under [`CountingScheme::Smoothed`] the denominator also counts the
/// `|S| * num_actions` phantom visits of the Laplace-initialised tensor.
pub fn substochastic_matrix(
    counts: &DMatrix<u64>,
    scheme: CountingScheme,
    num_actions: usize,
) -> DMatrix<f64> {
    let n = counts.nrows();
    let phantom = match scheme {
        CountingScheme::Raw => 0,
        CountingScheme::Smoothed => (n * num_actions) as u64,
    };
    let denominators: Vec<f64> = counts
        .row_iter()
        .map(|row| (row.iter().sum::<u64>() + phantom + 1) as f64)
        .collect();
    DMatrix::from_fn(n, counts.ncols(), |s, next| counts[(s, next)] as f64 / denominators[s])
}

/// The substochastic SR `(I - gamma P~)^{-1}` of a count matrix.
///
/// Rows of never-left states are zero in `P~`, so their SR row is the
/// identity row and `||Psi~(s)||_1 = 1`.
pub fn ssr_from_counts(
    counts: &DMatrix<u64>,
    scheme: CountingScheme,
    num_actions: usize,
    gamma: f64,
) -> Result<SuccessorMatrix> {
    if !counts.is_square() {
        return Err(Error::InvalidArgument("count matrix must be square".into()));
    }
    let p_tilde = substochastic_matrix(counts, scheme, num_actions);
    Ok(SuccessorMatrix {
        variant: SrVariant::Substochastic,
        ..exact_sr(&p_tilde, gamma)?
    })
}

pub fn ssr_from_model(model: &CountModel, scheme: CountingScheme, gamma: f64) -> Result<SuccessorMatrix> {
    ssr_from_counts(model.state_counts(), scheme, model.num_actions(), gamma)
}

pub fn chi(ssr: &SuccessorMatrix) -> Result<ChiVector> {
    ssr.expect(SrVariant::Substochastic)?;
    let shift = 1.0 + ssr.gamma;
    Ok(ChiVector {
        values: ssr.row_l1_norms().map(|norm| shift - norm),
        gamma: ssr.gamma,
    })
}

/// Evaluates the count-recovery bounds on every state, with raw counts.
///
/// `holds` allows [`BOUND_SLACK`] on both sides for solver round-off.
pub fn count_bounds(counts: &DMatrix<u64>, gamma: f64) -> Result<Vec<CountBound>> {
    let ssr = ssr_from_counts(counts, CountingScheme::Raw, 1, gamma)?;
    let chi = chi(&ssr)?;
    let quad = gamma * gamma / (1.0 - gamma);
    Ok(counts
        .row_iter()
        .zip(chi.values.iter())
        .map(|(row, &chi)| {
            let visits: u64 = row.iter().sum();
            let upper = gamma / (visits as f64 + 1.0);
            let lower = upper - quad;
            CountBound {
                visits,
                lower,
                chi,
                upper,
                holds: lower - BOUND_SLACK <= chi && chi <= upper + BOUND_SLACK,
            }
        })
        .collect())
}

/// `P~ = (I - N) P^` with `N = diag(1 / (n(s) + 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PtildeDecomposition {
    /// Diagonal of `N`.
    pub inverse_counts: DVector<f64>,
    /// Raw empirical matrix; rows of unvisited states are zero.
    pub empirical: DMatrix<f64>,
    pub visited: Vec<bool>,
}

impl PtildeDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.empirical.nrows();
        let keep = DMatrix::from_diagonal(&self.inverse_counts.map(|x| 1.0 - x));
        debug_assert_eq!(keep.nrows(), n);
        keep * &self.empirical
    }

    /// Max-norm gap between `p_tilde` and the reconstruction on visited rows.
    pub fn max_reconstruction_error(&self, p_tilde: &DMatrix<f64>) -> f64 {
        let rebuilt = self.reconstruct();
        self.visited
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .flat_map(|(s, _)| {
                let rebuilt = &rebuilt;
                (0..p_tilde.ncols()).map(move |j| (p_tilde[(s, j)] - rebuilt[(s, j)]).abs())
            })
            .fold(0.0, f64::max)
    }
}

pub fn decompose_ptilde(counts: &DMatrix<u64>) -> PtildeDecomposition {
    let n = counts.nrows();
    let visits: Vec<u64> = counts.row_iter().map(|r| r.iter().sum()).collect();
    PtildeDecomposition {
        inverse_counts: DVector::from_fn(n, |s, _| 1.0 / (visits[s] as f64 + 1.0)),
        empirical: DMatrix::from_fn(n, counts.ncols(), |s, j| {
            if visits[s] == 0 {
                0.0
            } else {
                counts[(s, j)] as f64 / visits[s] as f64
            }
        }),
        visited: visits.iter().map(|&v| v > 0).collect(),
    }
}

/// Exploration bonus `r_int(s) = -||Psi~(s)||_1`. Never above `-1`.
pub fn intrinsic_reward_l1(ssr: &SuccessorMatrix) -> Result<DVector<f64>> {
    ssr.expect(SrVariant::Substochastic)?;
    Ok(-ssr.row_l1_norms())
}
