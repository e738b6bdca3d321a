//! Parameter-free hypergraph over mid-level features: vertices are features,
//! hyperedges are videos. The soft incidence normalizes each video's counts
//! to sum to one, hyperedge weights score the compactness of a video's
//! feature set, and the normalized hypergraph Laplacian yields, through its
//! eigendecomposition, the factor `B_h` with `B_hᵀ B_h = L_h`. The rows of
//! `B_h` enter the structured sparse-coding problem as smoothness
//! constraints.

use nalgebra::{DMatrix, DVector};

use crate::corpus::Corpus;
use crate::eigen::sorted_symmetric_eigen;
use crate::error::{Error, Result};

/// Eigenvalues in [-EIGENVALUE_CLAMP, 0) are treated as exact zeros before
/// the square root in `B_h`; anything lower is a hard failure.
const EIGENVALUE_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct HypergraphModel {
    /// M x N soft incidence; H[i][j] is feature i's share of video j's mass.
    pub incidence: DMatrix<f64>,
    /// N hyperedge weights w(e_j), all positive.
    pub weights: DVector<f64>,
    /// M vertex degrees d(m_i) = sum_j w(e_j) H[i][j].
    pub vertex_degrees: DVector<f64>,
    /// N edge degrees; each equals 1 because incidence columns sum to 1.
    pub edge_degrees: DVector<f64>,
    /// M x M normalized hypergraph Laplacian, symmetric PSD.
    pub laplacian: DMatrix<f64>,
    /// Ascending Laplacian eigenvalues, clamped to be nonnegative.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvector columns matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// M x M factor with `regularizerᵀ · regularizer = laplacian`.
    pub regularizer: DMatrix<f64>,
}

/// Soft incidence: each video's counts normalized to sum to one, so every
/// column is a probability vector over features.
pub fn build_incidence(corpus: &Corpus) -> DMatrix<f64> {
    let m = corpus.num_features();
    let n = corpus.num_videos();
    let mut h = DMatrix::zeros(m, n);
    for j in 0..n {
        let total = corpus.video_total(j) as f64;
        for i in 0..m {
            let c = corpus.count(j, i);
            if c > 0 {
                h[(i, j)] = c as f64 / total;
            }
        }
    }
    h
}

/// Hyperedge weights: the mean pairwise linear-kernel similarity (ordered
/// pairs, self-pairs included) of the centers of the features a video
/// contains, i.e. w(e_j) = (1/|e_j|) * sum over the support of R, where
/// R = centers * centersᵀ. Compact videos, whose features sit close in
/// descriptor space, receive larger weights.
///
/// Without stored centers, R falls back to the Gram matrix of L2-normalized
/// feature count columns; those entries are nonnegative, so weights stay
/// positive.
pub fn build_weights(corpus: &Corpus) -> Result<DVector<f64>> {
    let m = corpus.num_features();
    let n = corpus.num_videos();
    let r = match corpus.centers() {
        Some(centers) => centers * centers.transpose(),
        None => {
            let mut cols = corpus.count_matrix();
            for mut col in cols.column_iter_mut() {
                let norm = col.norm();
                col /= norm;
            }
            cols.tr_mul(&cols)
        }
    };

    let mut weights = DVector::zeros(n);
    for j in 0..n {
        let support: Vec<usize> = (0..m).filter(|&i| corpus.count(j, i) > 0).collect();
        let mut sum = 0.0;
        for &i in &support {
            for &i2 in &support {
                sum += r[(i, i2)];
            }
        }
        let w = sum / support.len() as f64;
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::NonpositiveWeight {
                edge: corpus.video_ids()[j].clone(),
                weight: w,
            });
        }
        weights[j] = w;
    }
    Ok(weights)
}

pub fn build_hypergraph(corpus: &Corpus) -> Result<HypergraphModel> {
    let m = corpus.num_features();
    let n = corpus.num_videos();
    let incidence = build_incidence(corpus);
    let weights = build_weights(corpus)?;

    let mut vertex_degrees = DVector::zeros(m);
    for i in 0..m {
        let mut d = 0.0;
        for j in 0..n {
            d += weights[j] * incidence[(i, j)];
        }
        if d <= 0.0 {
            return Err(Error::ZeroVertexDegree {
                vertex: corpus.feature_ids()[i].clone(),
            });
        }
        vertex_degrees[i] = d;
    }
    let edge_degrees = DVector::from_fn(n, |j, _| incidence.column(j).sum());

    // L = I - D_v^{-1/2} H W D_e^{-1} Hᵀ D_v^{-1/2}, assembled entrywise on
    // the lower triangle and mirrored so the result is exactly symmetric.
    let scaled = DMatrix::from_fn(m, n, |i, j| incidence[(i, j)] / vertex_degrees[i].sqrt());
    let edge_factor = DVector::from_fn(n, |j, _| weights[j] / edge_degrees[j]);
    let mut laplacian = DMatrix::zeros(m, m);
    for i in 0..m {
        for i2 in 0..=i {
            let mut q = 0.0;
            for j in 0..n {
                q += edge_factor[j] * scaled[(i, j)] * scaled[(i2, j)];
            }
            let l = if i == i2 { 1.0 - q } else { -q };
            laplacian[(i, i2)] = l;
            laplacian[(i2, i)] = l;
        }
    }

    let eig = sorted_symmetric_eigen(&laplacian)?;
    let mut eigenvalues = eig.values;
    for v in eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -EIGENVALUE_CLAMP {
                return Err(Error::EigenFailure(format!(
                    "hypergraph laplacian has eigenvalue {v}, expected nonnegative"
                )));
            }
            *v = 0.0;
        }
    }
    let eigenvectors = eig.vectors;
    let mut regularizer = eigenvectors.transpose();
    for (i, mut row) in regularizer.row_iter_mut().enumerate() {
        row *= eigenvalues[i].sqrt();
    }

    Ok(HypergraphModel {
        incidence,
        weights,
        vertex_degrees,
        edge_degrees,
        laplacian,
        eigenvalues,
        eigenvectors,
        regularizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn corpus(
        counts: Vec<Vec<u64>>,
        centers: Option<DMatrix<f64>>,
    ) -> Corpus {
        let n = counts.len();
        let m = counts[0].len();
        Corpus::new(
            (0..n).map(|j| format!("v{j}")).collect(),
            (0..m).map(|i| format!("m{i}")).collect(),
            counts,
            None,
            centers,
        )
        .unwrap()
    }

    #[test]
    fn incidence_normalizes_each_video() {
        let c = corpus(vec![vec![1, 1, 1], vec![2, 1, 1]], None);
        let h = build_incidence(&c);
        assert_eq!(h.column(0).as_slice(), &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(h.column(1).as_slice(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn incidence_is_zero_exactly_where_counts_are_zero() {
        let c = corpus(vec![vec![0, 2, 3], vec![1, 0, 4]], None);
        let h = build_incidence(&c);
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(h[(1, 1)], 0.0);
        assert_eq!(h[(1, 0)], 0.4);
        assert_eq!(h[(2, 1)], 0.8);
    }

    #[test]
    fn orthonormal_centers_give_unit_weight() {
        let c = corpus(
            vec![vec![1, 1, 1]],
            Some(DMatrix::identity(3, 3)),
        );
        let w = build_weights(&c).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_centers_weight_equals_edge_size() {
        let centers = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let c = corpus(vec![vec![1, 1, 1, 1], vec![1, 1, 1, 1]], Some(centers));
        let w = build_weights(&c).unwrap();
        assert!((w[0] - 4.0).abs() < 1e-12);
        assert!((w[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn compact_edges_outweigh_mixed_edges_of_equal_size() {
        // Features 0,1 share a center direction; 2,3 share another.
        let centers = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        // Video 0 = within-block pair, video 1 = mixed pair of equal size.
        let c = corpus(vec![vec![1, 1, 0, 0], vec![0, 1, 1, 0], vec![1, 0, 0, 1]], Some(centers));
        let w = build_weights(&c).unwrap();
        assert!(w[0] > w[1], "within-block {} vs mixed {}", w[0], w[1]);
        assert!(w[0] > w[2]);
    }

    #[test]
    fn negative_center_products_can_fail_positivity() {
        let centers = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let c = corpus(vec![vec![1, 1]], Some(centers));
        match build_weights(&c) {
            Err(Error::NonpositiveWeight { edge, weight }) => {
                assert_eq!(edge, "v0");
                assert!(weight <= 0.0);
            }
            other => panic!("expected nonpositive weight, got {other:?}"),
        }
    }

    #[test]
    fn single_uniform_video_gives_rank_one_complement_spectrum() {
        // One video, M features at unit counts, identical unit centers:
        // L = I - J/M with spectrum {0, 1, ..., 1}.
        let m = 6;
        let centers = DMatrix::from_fn(m, 1, |_, _| 1.0);
        let c = corpus(vec![vec![1; m]], Some(centers));
        let model = build_hypergraph(&c).unwrap();
        let expected = DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64);
        assert!((&model.laplacian - &expected).abs().max() < 1e-12);
        assert!(model.eigenvalues[0].abs() < 1e-8);
        for k in 1..m {
            assert!((model.eigenvalues[k] - 1.0).abs() < 1e-8);
        }
    }

    fn random_alpha(rng: &mut StdRng, m: usize) -> DVector<f64> {
        DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn regularizer_factorizes_the_laplacian() {
        let c = corpus(
            vec![
                vec![0, 1, 0, 0, 1, 0, 0, 0],
                vec![1, 1, 1, 0, 0, 0, 0, 0],
                vec![0, 0, 0, 1, 1, 1, 0, 0],
                vec![0, 0, 0, 0, 0, 1, 1, 1],
                vec![0, 1, 0, 0, 1, 1, 0, 1],
            ],
            Some(DMatrix::identity(8, 8)),
        );
        let model = build_hypergraph(&c).unwrap();
        // Quadratic-form identity: αᵀ L α = ‖B_h α‖² for random α.
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..20 {
            let alpha = random_alpha(&mut rng, 8);
            let lhs = (alpha.transpose() * &model.laplacian * &alpha)[(0, 0)];
            let rhs = (&model.regularizer * &alpha).norm_squared();
            assert!(
                (lhs - rhs).abs() <= 1e-8 * (1.0 + alpha.norm_squared()),
                "{lhs} vs {rhs}"
            );
        }
        // And entrywise.
        let rebuilt = model.regularizer.tr_mul(&model.regularizer);
        assert!((rebuilt - &model.laplacian).abs().max() < 1e-8);
    }

    #[test]
    fn permuting_videos_leaves_the_laplacian_unchanged() {
        let counts = vec![
            vec![2, 1, 0, 0],
            vec![0, 1, 3, 0],
            vec![1, 0, 1, 2],
            vec![0, 2, 0, 1],
        ];
        let mut permuted = counts.clone();
        permuted.rotate_left(2);
        permuted.swap(0, 1);
        let a = build_hypergraph(&corpus(counts, None)).unwrap();
        let b = build_hypergraph(&corpus(permuted, None)).unwrap();
        assert!((a.laplacian - b.laplacian).abs().max() <= 1e-12);
    }

    /// Valid random counts: take raw entries, then guarantee row and column
    /// positivity by planting one count on a diagonal pattern.
    fn fixed_up_counts(n: usize, m: usize, raw: &[u8]) -> Vec<Vec<u64>> {
        let mut counts = vec![vec![0u64; m]; n];
        for i in 0..n {
            for j in 0..m {
                counts[i][j] = raw[(i * m + j) % raw.len()] as u64 % 4;
            }
        }
        for i in 0..n {
            counts[i][i % m] += 1;
        }
        for j in 0..m {
            counts[j % n][j] += 1;
        }
        counts
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn structural_invariants_hold_on_random_corpora(
            n in 1usize..6,
            m in 2usize..8,
            raw in proptest::collection::vec(0u8..8, 48),
        ) {
            let c = corpus(fixed_up_counts(n, m, &raw), None);
            let model = build_hypergraph(&c).unwrap();

            // Columns of H sum to 1, hence unit edge degrees.
            for j in 0..n {
                prop_assert!((model.incidence.column(j).sum() - 1.0).abs() <= 1e-12);
                prop_assert!((model.edge_degrees[j] - 1.0).abs() <= 1e-12);
            }
            // Positive weights and vertex degrees.
            prop_assert!(model.weights.iter().all(|&w| w > 0.0));
            prop_assert!(model.vertex_degrees.iter().all(|&d| d > 0.0));
            // PSD spectrum after clamping, symmetric Laplacian.
            prop_assert!(model.eigenvalues.iter().all(|&v| v >= 0.0));
            prop_assert!(
                (&model.laplacian - model.laplacian.transpose()).abs().max() <= 1e-10
            );
            // Orthonormal eigenvectors.
            let gram = model.eigenvectors.tr_mul(&model.eigenvectors);
            prop_assert!((gram - DMatrix::identity(m, m)).abs().max() <= 1e-8);
            // Factorization identity.
            let rebuilt = model.regularizer.tr_mul(&model.regularizer);
            prop_assert!((rebuilt - &model.laplacian).abs().max() <= 1e-8);
        }
    }
}
