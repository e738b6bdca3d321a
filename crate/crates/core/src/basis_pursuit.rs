//! Equality-constrained L1 minimization (basis pursuit):
//! minimize the L1 norm of `coefficients` subject to
//! `dictionary * coefficients = target`.
//!
//! [`solve_basis_pursuit`] reduces the problem to a standard-form linear
//! program by splitting each coefficient into nonnegative positive and
//! negative parts and runs the deterministic simplex in [`crate::simplex`].
//! [`oracle_basis_pursuit`] solves the same program by exhaustively
//! enumerating basic feasible solutions; it is slow, independent of the
//! simplex code path, and intended for validating the solver on small
//! instances.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::simplex::{self, SimplexFailure, StandardLp};

/// Default feasibility/optimality tolerance. Count data is integer-valued,
/// so this sits far below meaningful signal.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Candidate-subset budget for the enumeration oracle.
const ORACLE_BUDGET: u128 = 3_000_000;

#[derive(Debug, Clone)]
pub struct BasisPursuitProblem {
    dictionary: DMatrix<f64>,
    target: DVector<f64>,
    tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct BasisPursuitSolution {
    /// P-vector of reconstruction coefficients.
    pub coefficients: DVector<f64>,
    /// L1 norm of the coefficients, recomputed from them exactly.
    pub objective: f64,
    /// Max-norm equality residual `‖dictionary·coefficients − target‖∞`.
    pub residual_norm: f64,
}

impl BasisPursuitProblem {
    pub fn new(dictionary: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        Self::with_tolerance(dictionary, target, DEFAULT_TOLERANCE)
    }

    pub fn with_tolerance(
        dictionary: DMatrix<f64>,
        target: DVector<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        if dictionary.nrows() == 0 || dictionary.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "dictionary must be nonempty, got {}x{}",
                dictionary.nrows(),
                dictionary.ncols()
            )));
        }
        if target.len() != dictionary.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "target has {} entries but the dictionary has {} rows",
                target.len(),
                dictionary.nrows()
            )));
        }
        if dictionary.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dictionary and target must be finite".into(),
            ));
        }
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        Ok(BasisPursuitProblem {
            dictionary,
            target,
            tolerance,
        })
    }

    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.dictionary
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Residual bound `tolerance * (1 + ‖target‖₁)` used for acceptance of
    /// candidate solutions.
    fn residual_bound(&self) -> f64 {
        self.tolerance * (1.0 + self.target.iter().map(|v| v.abs()).sum::<f64>())
    }

    fn package(
        &self,
        coefficients: DVector<f64>,
        iterations: usize,
    ) -> Result<BasisPursuitSolution> {
        let objective = coefficients.iter().map(|v| v.abs()).sum();
        let residual_norm = (&self.dictionary * &coefficients - &self.target).amax();
        if residual_norm > self.residual_bound() {
            return Err(Error::NumericalFailure { iterations });
        }
        Ok(BasisPursuitSolution {
            coefficients,
            objective,
            residual_norm,
        })
    }
}

/// Solves the problem with the deterministic two-phase simplex.
///
/// Multiple optima may exist; the returned coefficient vector is one optimum,
/// fixed by the solver's deterministic pivoting rules. Only the objective
/// value and feasibility are contractual for callers.
pub fn solve_basis_pursuit(problem: &BasisPursuitProblem) -> Result<BasisPursuitSolution> {
    let p = problem.dictionary.ncols();
    let mut split = DMatrix::zeros(problem.dictionary.nrows(), 2 * p);
    split.view_mut((0, 0), problem.dictionary.shape()).copy_from(&problem.dictionary);
    for j in 0..p {
        let col = -problem.dictionary.column(j);
        split.set_column(p + j, &col);
    }
    let lp = StandardLp {
        matrix: split,
        costs: DVector::from_element(2 * p, 1.0),
        rhs: problem.target.clone(),
    };
    let sol = simplex::solve(&lp, problem.residual_bound()).map_err(|f| match f {
        SimplexFailure::Infeasible { gap } => {
            debug_assert!(gap > 0.0, "infeasibility gap must be positive");
            Error::Infeasible {
                tolerance: problem.tolerance,
            }
        }
        SimplexFailure::Stalled { iterations } | SimplexFailure::Breakdown { iterations } => {
            Error::NumericalFailure { iterations }
        }
    })?;
    // A nonsingular basis never holds both split halves of one coefficient,
    // so z[j] - z[p+j] has at most one nonzero term.
    let coefficients = DVector::from_fn(p, |j, _| sol.solution[j] - sol.solution[p + j]);
    let packaged = problem.package(coefficients, sol.iterations)?;
    debug_assert!(
        (sol.objective - packaged.objective).abs() <= 1e-9 * (1.0 + packaged.objective),
        "LP objective {} disagrees with coefficient L1 norm {}",
        sol.objective,
        packaged.objective
    );
    Ok(packaged)
}

/// Solves the problem by exhaustive enumeration of basic feasible solutions.
///
/// Every vertex of the standard-form polytope is supported on some linearly
/// independent set of `rank(dictionary)` columns, and any such set with a
/// consistent square or least-squares system yields the unique candidate for
/// that support. Enumerating all column subsets of that size therefore
/// visits an optimal vertex. Ties keep the lexicographically first subset,
/// making the oracle deterministic.
pub fn oracle_basis_pursuit(problem: &BasisPursuitProblem) -> Result<BasisPursuitSolution> {
    let d = &problem.dictionary;
    let b = &problem.target;
    let (rows, cols) = d.shape();
    let bound = problem.residual_bound();

    if b.amax() <= bound {
        return problem.package(DVector::zeros(cols), 0);
    }

    let rank = matrix_rank(d, 1e-10 * (1.0 + d.amax()));
    if rank == 0 {
        return Err(Error::Infeasible {
            tolerance: problem.tolerance,
        });
    }

    let candidates = binomial_capped(cols as u128, rank as u128, ORACLE_BUDGET);
    if candidates > ORACLE_BUDGET {
        return Err(Error::OracleTooLarge {
            candidates,
            budget: ORACLE_BUDGET,
        });
    }

    let mut best: Option<(f64, Vec<usize>, DVector<f64>)> = None;
    let mut subset_matrix = DMatrix::zeros(rows, rank);
    let mut indices: Vec<usize> = (0..rank).collect();
    loop {
        for (slot, &j) in indices.iter().enumerate() {
            subset_matrix.set_column(slot, &d.column(j));
        }
        if let Some(alpha) = solve_subset(&subset_matrix, b, rank == rows) {
            let residual = (&subset_matrix * &alpha - b).amax();
            if residual <= bound && alpha.iter().all(|v| v.is_finite()) {
                let l1: f64 = alpha.iter().map(|v| v.abs()).sum();
                if best.as_ref().map_or(true, |(best_l1, _, _)| l1 < *best_l1) {
                    best = Some((l1, indices.clone(), alpha));
                }
            }
        }
        if !advance(&mut indices, cols) {
            break;
        }
    }

    let Some((_, support, alpha)) = best else {
        return Err(Error::Infeasible {
            tolerance: problem.tolerance,
        });
    };
    let mut coefficients = DVector::zeros(cols);
    for (slot, &j) in support.iter().enumerate() {
        coefficients[j] = alpha[slot];
    }
    problem.package(coefficients, 0)
}

fn solve_subset(subset: &DMatrix<f64>, b: &DVector<f64>, square: bool) -> Option<DVector<f64>> {
    if square {
        subset.clone().lu().solve(b)
    } else {
        // Overdetermined: least squares via normal equations, then the
        // caller's residual check decides whether the system is consistent.
        let gram = subset.tr_mul(subset);
        let rhs = subset.tr_mul(b);
        gram.lu().solve(&rhs)
    }
}

/// Advances `indices` to the next size-k subset of 0..n in lexicographic
/// order; returns false when exhausted.
fn advance(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if indices[i] < n - k + i {
            indices[i] += 1;
            for t in i + 1..k {
                indices[t] = indices[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial_capped(n: u128, k: u128, cap: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
        if acc > cap {
            // Partial products already exceed the cap; the exact count only
            // grows from here (k ≤ n/2 keeps the sequence increasing).
            return acc;
        }
    }
    acc
}

/// Rank by Gaussian elimination with partial pivoting.
fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let mut piv = row;
        for i in row + 1..rows {
            if a[(i, col)].abs() > a[(piv, col)].abs() {
                piv = i;
            }
        }
        if a[(piv, col)].abs() <= tol {
            continue;
        }
        a.swap_rows(row, piv);
        let pivot = a[(row, col)];
        for i in row + 1..rows {
            let f = a[(i, col)] / pivot;
            if f != 0.0 {
                for k in col..cols {
                    a[(i, k)] -= f * a[(row, k)];
                }
            }
        }
        rank += 1;
        row += 1;
    }
    rank
}
