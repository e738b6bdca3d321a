//! Latent semantic learning over bag-of-features video corpora.
//!
//! The pipeline turns a corpus of per-video feature counts into a small
//! vocabulary of high-level semantics:
//!
//! 1. Each feature's count profile is reconstructed from the others by
//!    L1-minimizing basis pursuit ([`l1graph`]), optionally regularized by a
//!    video-hypergraph smoothness term ([`hypergraph`]).
//! 2. Reconstruction coefficients become a symmetric affinity graph whose
//!    normalized Laplacian is embedded spectrally ([`embedding`]).
//! 3. Seeded k-means clusters the embedded features; counts roll up into
//!    per-video semantic histograms compared with a histogram-intersection
//!    kernel ([`semantics`]).
//!
//! The LP solver ([`basis_pursuit`]) pairs every solve with an independent
//! enumeration oracle so numerical results can be cross-checked in tests.

pub mod basis_pursuit;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod hypergraph;
pub mod l1graph;
pub mod metrics;
pub mod semantics;
pub mod textio;

mod eigen;
mod simplex;

pub use basis_pursuit::{
    oracle_basis_pursuit, solve_basis_pursuit, BasisPursuitProblem, BasisPursuitSolution,
    DEFAULT_TOLERANCE,
};
pub use corpus::{generate_synthetic, Corpus, FeatureColumn};
pub use embedding::{
    kmeans, learn_latent_semantics, read_assignment, run_pipeline, spectral_embed,
    write_assignment, Mode, PipelineOutcome, SemanticAssignment, SpectralEmbedding,
    DEFAULT_KMEANS_MAX_ITERS,
};
pub use error::{Error, Result};
pub use hypergraph::{build_hypergraph, build_incidence, build_weights, HypergraphModel};
pub use l1graph::{
    build_feature_graph, build_plain_problem, build_structured_problem, sparse_code,
    sparse_code_all, sparse_code_with_tolerance, FeatureGraph, SparseCode,
};
pub use metrics::{accuracy, nmi};
pub use semantics::{
    hi_kernel, knn_classify, mid_level_histograms, rollup, rollup_partition, KernelMatrix,
    SemanticHistogram,
};

/// The small co-occurrence corpus used across unit tests: eight features in
/// five videos with overlapping supports and one duplicated count profile.
#[cfg(test)]
pub(crate) mod test_fixtures {
    use crate::corpus::Corpus;
    use nalgebra::DMatrix;

    const COUNTS: [[u64; 8]; 5] = [
        [0, 1, 0, 0, 1, 0, 0, 0],
        [1, 1, 1, 0, 0, 0, 0, 0],
        [0, 0, 0, 1, 1, 1, 0, 0],
        [0, 0, 0, 0, 0, 1, 1, 1],
        [0, 1, 0, 0, 1, 1, 0, 1],
    ];

    pub fn fig2() -> Corpus {
        build(None)
    }

    /// Same corpus with one-hot cluster centers, one cluster per feature,
    /// so hypergraph weights take the center-similarity route.
    pub fn fig2_with_centers() -> Corpus {
        build(Some(DMatrix::identity(8, 8)))
    }

    fn build(centers: Option<DMatrix<f64>>) -> Corpus {
        Corpus::new(
            (1..=5).map(|n| format!("v{n}")).collect(),
            (1..=8).map(|j| format!("m{j}")).collect(),
            COUNTS.iter().map(|row| row.to_vec()).collect(),
            None,
            centers,
        )
        .unwrap()
    }
}
