//! L1-graph construction over mid-level features.
//!
//! Each feature's count profile is reconstructed from the other features'
//! profiles by basis pursuit; the absolute reconstruction coefficients become
//! graph affinities. Two problem shapes exist:
//!
//! * plain: dictionary `[B_masked | I_N]`, target `x_i` — reconstruction
//!   coefficients plus a per-video noise block;
//! * structured: dictionary `[[B_masked, I_N, 0], [R_masked, 0, I_M]]`,
//!   target `(x_i, 0)` — adds rows that charge the code for non-smoothness
//!   over the feature hypergraph, with the regularizer `R` supplied by
//!   [`crate::hypergraph`] and its own slack block.
//!
//! "Masked" means column `i` is zeroed in both blocks, which forces the
//! self-coefficient to stay exactly zero: a feature never explains itself.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis_pursuit::{self, BasisPursuitProblem, DEFAULT_TOLERANCE};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Affinities below this are exact zeros: LP round-off must not densify the
/// graph.
const AFFINITY_TRUNCATION: f64 = 1e-10;

/// One feature's sparse reconstruction.
#[derive(Debug, Clone)]
pub struct SparseCode {
    pub feature_index: usize,
    /// M reconstruction coefficients; entry `feature_index` is exactly zero.
    pub coefficients: DVector<f64>,
    /// N per-video noise values.
    pub reconstruction_noise: DVector<f64>,
    /// M smoothness slack values; present only for structured problems.
    pub smoothness_noise: Option<DVector<f64>>,
    /// L1 norm of all blocks together.
    pub objective: f64,
}

/// Symmetric affinity graph with its normalized Laplacian.
#[derive(Debug, Clone)]
pub struct FeatureGraph {
    /// M x M symmetric nonnegative affinities, zero diagonal.
    pub affinity: DMatrix<f64>,
    /// Row sums of the affinity matrix.
    pub degree: DVector<f64>,
    /// I - D^{-1/2} A D^{-1/2}; rows of zero-degree vertices are identity
    /// rows, so isolated features embed as their own direction.
    pub laplacian: DMatrix<f64>,
}

/// Plain reconstruction problem for feature `i`: N equations, M + N unknowns.
pub fn build_plain_problem(corpus: &Corpus, feature: usize) -> Result<BasisPursuitProblem> {
    build_problem(corpus, feature, None, DEFAULT_TOLERANCE)
}

/// Structured reconstruction problem for feature `i`: N + M equations,
/// M + N + M unknowns. The regularizer must be M x M.
pub fn build_structured_problem(
    corpus: &Corpus,
    feature: usize,
    regularizer: &DMatrix<f64>,
) -> Result<BasisPursuitProblem> {
    build_problem(corpus, feature, Some(regularizer), DEFAULT_TOLERANCE)
}

fn build_problem(
    corpus: &Corpus,
    feature: usize,
    regularizer: Option<&DMatrix<f64>>,
    tolerance: f64,
) -> Result<BasisPursuitProblem> {
    let n = corpus.num_videos();
    let m = corpus.num_features();
    if feature >= m {
        return Err(Error::InvalidArgument(format!(
            "feature index {feature} out of range (corpus has {m} features)"
        )));
    }
    if let Some(reg) = regularizer {
        if reg.nrows() != m || reg.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "regularizer is {}x{} but the corpus has {m} features",
                reg.nrows(),
                reg.ncols()
            )));
        }
        if reg.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "regularizer has nonfinite entries".into(),
            ));
        }
    }

    let counts = corpus.count_matrix();
    let target_top = counts.column(feature).clone_owned();

    let (rows, cols) = match regularizer {
        None => (n, m + n),
        Some(_) => (n + m, m + n + m),
    };
    let mut dictionary = DMatrix::zeros(rows, cols);
    for j in 0..m {
        if j == feature {
            continue;
        }
        dictionary.view_mut((0, j), (n, 1)).copy_from(&counts.column(j));
    }
    for r in 0..n {
        dictionary[(r, m + r)] = 1.0;
    }
    let mut target = DVector::zeros(rows);
    target.rows_mut(0, n).copy_from(&target_top);

    if let Some(reg) = regularizer {
        for j in 0..m {
            if j == feature {
                continue;
            }
            dictionary.view_mut((n, j), (m, 1)).copy_from(&reg.column(j));
        }
        for r in 0..m {
            dictionary[(n + r, m + n + r)] = 1.0;
        }
    }

    BasisPursuitProblem::with_tolerance(dictionary, target, tolerance)
}

/// Solves feature `i`'s reconstruction problem and splits the solution into
/// coefficient and noise blocks. Passing a regularizer selects the
/// structured problem.
pub fn sparse_code(
    corpus: &Corpus,
    feature: usize,
    regularizer: Option<&DMatrix<f64>>,
) -> Result<SparseCode> {
    sparse_code_with_tolerance(corpus, feature, regularizer, DEFAULT_TOLERANCE)
}

pub fn sparse_code_with_tolerance(
    corpus: &Corpus,
    feature: usize,
    regularizer: Option<&DMatrix<f64>>,
    tolerance: f64,
) -> Result<SparseCode> {
    let n = corpus.num_videos();
    let m = corpus.num_features();
    let problem = build_problem(corpus, feature, regularizer, tolerance)?;
    let solution = basis_pursuit::solve_basis_pursuit(&problem)?;
    let sol = &solution.coefficients;

    let coefficients = sol.rows(0, m).clone_owned();
    let reconstruction_noise = sol.rows(m, n).clone_owned();
    let smoothness_noise = regularizer.map(|_| sol.rows(m + n, m).clone_owned());
    if coefficients[feature].abs() > 1e-9 {
        // The masked column is all-zero, so a nonzero self-coefficient can
        // only come from a solver defect.
        return Err(Error::NumericalFailure { iterations: 0 });
    }
    Ok(SparseCode {
        feature_index: feature,
        coefficients,
        reconstruction_noise,
        smoothness_noise,
        objective: solution.objective,
    })
}

/// Sparse-codes every feature. The per-feature problems share no state and
/// run in parallel; results are assembled in feature order, so output is
/// deterministic.
pub fn sparse_code_all(
    corpus: &Corpus,
    regularizer: Option<&DMatrix<f64>>,
    tolerance: f64,
) -> Result<Vec<SparseCode>> {
    (0..corpus.num_features())
        .into_par_iter()
        .map(|i| sparse_code_with_tolerance(corpus, i, regularizer, tolerance))
        .collect()
}

/// Assembles the affinity graph from per-feature codes: raw affinities are
/// absolute coefficients (noise blocks never enter), the matrix is
/// symmetrized as (A + Aᵀ)/2, and the normalized Laplacian is formed with
/// identity rows for zero-degree vertices.
pub fn build_feature_graph(codes: &[SparseCode]) -> Result<FeatureGraph> {
    let m = codes.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 codes, got {m}"
        )));
    }
    for (i, code) in codes.iter().enumerate() {
        if code.feature_index != i {
            return Err(Error::InvalidArgument(format!(
                "code at position {i} is for feature {}; codes must be in feature order",
                code.feature_index
            )));
        }
        if code.coefficients.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "code {i} has {} coefficients for {m} features",
                code.coefficients.len()
            )));
        }
    }

    let truncated = |i: usize, j: usize| -> f64 {
        let v = codes[i].coefficients[j].abs();
        if v < AFFINITY_TRUNCATION {
            0.0
        } else {
            v
        }
    };
    let mut affinity = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..i {
            let a = (truncated(i, j) + truncated(j, i)) / 2.0;
            affinity[(i, j)] = a;
            affinity[(j, i)] = a;
        }
    }

    let degree = DVector::from_fn(m, |i, _| affinity.row(i).sum());
    let inv_sqrt = DVector::from_fn(m, |i, _| {
        if degree[i] > 0.0 {
            1.0 / degree[i].sqrt()
        } else {
            0.0
        }
    });
    let mut laplacian = DMatrix::identity(m, m);
    for i in 0..m {
        for j in 0..i {
            let l = -(inv_sqrt[i] * inv_sqrt[j]) * affinity[(i, j)];
            laplacian[(i, j)] = l;
            laplacian[(j, i)] = l;
        }
    }

    Ok(FeatureGraph {
        affinity,
        degree,
        laplacian,
    })
}
