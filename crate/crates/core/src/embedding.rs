//! Spectral embedding of the feature graph and clustering of features into
//! high-level semantics: eigendecompose the normalized Laplacian, keep the K
//! smallest nontrivial eigenvectors, row-normalize, then run seeded k-means
//! on the embedded rows.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::basis_pursuit::DEFAULT_TOLERANCE;
use crate::corpus::Corpus;
use crate::eigen::sorted_symmetric_eigen;
use crate::error::{Error, Result};
use crate::hypergraph::{build_hypergraph, HypergraphModel};
use crate::l1graph::{build_feature_graph, sparse_code_all, FeatureGraph, SparseCode};
use crate::textio;

pub const DEFAULT_KMEANS_MAX_ITERS: usize = 100;

/// Pipeline flavor: plain L1-graph codes, or hypergraph-regularized ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Slsl,
    S2lsl,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slsl" => Ok(Mode::Slsl),
            "s2lsl" => Ok(Mode::S2lsl),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?}, expected slsl or s2lsl"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Slsl => "slsl",
            Mode::S2lsl => "s2lsl",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// M x K row-normalized embedding; zero rows stay zero.
    pub matrix: DMatrix<f64>,
    /// The K Laplacian eigenvalues whose eigenvectors were used, ascending.
    pub eigenvalues: DVector<f64>,
    /// Number of leading eigenvectors skipped as trivial (always 1).
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct SemanticAssignment {
    /// Cluster id in [0, K) per feature.
    pub assignment: Vec<usize>,
    /// K x D final cluster centers (D = embedding width).
    pub centroids: DMatrix<f64>,
    /// Sum of squared distances from points to their assigned centers.
    pub inertia: f64,
}

/// Eigenvalues this close to zero are treated as one degenerate null space
/// when fixing the trivial direction. Solver error on O(1) Laplacians sits
/// orders of magnitude below this.
const NULL_SPACE_TOL: f64 = 1e-10;

/// Projects features onto the K smallest nontrivial Laplacian eigenvectors.
///
/// The single smallest eigenvalue's eigenvector is skipped as trivial;
/// later zero eigenvalues of disconnected graphs are kept because they
/// encode component membership. Rows are normalized to unit length, except
/// exact-zero rows, which stay zero.
pub fn spectral_embed(graph: &FeatureGraph, k: usize) -> Result<SpectralEmbedding> {
    let m = graph.laplacian.nrows();
    if k < 1 || k > m.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!(
            "embedding width {k} out of range for {m} features (need 1 <= K <= M-1)"
        )));
    }
    let mut eig = sorted_symmetric_eigen(&graph.laplacian)?;
    fix_trivial_direction(&mut eig.vectors, &eig.values, &graph.degree);
    let eigenvalues = DVector::from_fn(k, |t, _| eig.values[1 + t]);
    for &v in eigenvalues.iter() {
        if v < -1e-8 {
            return Err(Error::EigenFailure(format!(
                "laplacian eigenvalue {v} below zero"
            )));
        }
    }
    let mut matrix = DMatrix::zeros(m, k);
    for t in 0..k {
        matrix.set_column(t, &eig.vectors.column(1 + t));
    }
    for mut row in matrix.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(SpectralEmbedding {
        matrix,
        eigenvalues,
        skipped: 1,
    })
}

/// Rotates a degenerate null-space basis so its first vector is the trivial
/// direction sqrt(degree).
///
/// A disconnected graph's Laplacian has one zero eigenvalue per component,
/// and the solver returns an arbitrary orthonormal basis of that eigenspace.
/// Skipping "the" trivial eigenvector is only meaningful once sqrt(degree)
/// is rotated to the front; the remaining null vectors are then orthogonal
/// to it and encode pure component contrasts.
fn fix_trivial_direction(vectors: &mut DMatrix<f64>, values: &DVector<f64>, degree: &DVector<f64>) {
    let nullity = values.iter().take_while(|&&v| v.abs() <= NULL_SPACE_TOL).count();
    if nullity < 2 {
        return;
    }
    let mut trivial = DVector::from_fn(degree.len(), |i, _| degree[i].sqrt());
    let norm = trivial.norm();
    if norm == 0.0 {
        return;
    }
    trivial /= norm;

    // Orthonormalize [trivial, q_0, .., q_{nullity-1}]; exactly one q drops
    // out because trivial already lies in their span.
    let mut basis: Vec<DVector<f64>> = vec![trivial];
    for t in 0..nullity {
        let mut candidate = vectors.column(t).clone_owned();
        for kept in &basis {
            let overlap = kept.dot(&candidate);
            candidate.axpy(-overlap, kept, 1.0);
        }
        let norm = candidate.norm();
        if norm > 1e-8 {
            candidate /= norm;
            basis.push(candidate);
        }
        if basis.len() == nullity {
            break;
        }
    }
    if basis.len() < nullity {
        return;
    }
    for (t, mut vector) in basis.into_iter().enumerate() {
        crate::eigen::canonical_sign(&mut vector);
        vectors.set_column(t, &vector);
    }
}

/// Seeded k-means with deterministic greedy farthest-point initialization.
///
/// The seed picks the first center; each later center is the point farthest
/// from the chosen set (ties to the lowest index). Lloyd iterations stop when
/// assignments are stable or `max_iters` is reached. Ties in assignment go to
/// the lowest center index, and clusters that come out of an assignment step
/// empty claim the point farthest from its own center.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<SemanticAssignment> {
    let m = points.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one cluster".into()));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let distinct = distinct_row_count(points);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {distinct} distinct points"
        )));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = vec![rng.random_range(0..m)];
    let mut nearest = vec![f64::INFINITY; m];
    while chosen.len() < k {
        let latest = *chosen.last().unwrap();
        let mut best = (0usize, -1.0f64);
        for p in 0..m {
            let d = row_dist2(points, p, points, latest);
            if d < nearest[p] {
                nearest[p] = d;
            }
            if nearest[p] > best.1 {
                best = (p, nearest[p]);
            }
        }
        chosen.push(best.0);
    }
    let mut centroids = DMatrix::zeros(k, points.ncols());
    for (c, &p) in chosen.iter().enumerate() {
        centroids.set_row(c, &points.row(p));
    }
    lloyd(points, centroids, max_iters)
}

/// Lloyd iterations from explicit starting centers.
pub(crate) fn lloyd(
    points: &DMatrix<f64>,
    mut centroids: DMatrix<f64>,
    max_iters: usize,
) -> Result<SemanticAssignment> {
    let m = points.nrows();
    let k = centroids.nrows();
    let mut assignment: Vec<usize> = vec![usize::MAX; m];
    let mut previous_inertia = f64::INFINITY;

    for _ in 0..max_iters {
        let mut next: Vec<usize> = (0..m)
            .map(|p| nearest_center(points, p, &centroids))
            .collect();

        let mut sizes = vec![0usize; k];
        for &c in &next {
            sizes[c] += 1;
        }
        let mut repaired = false;
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            repaired = true;
            // Claim the point farthest from its own center, drawing only
            // from clusters that can spare one.
            let mut donor: Option<(usize, f64)> = None;
            for p in 0..m {
                if sizes[next[p]] < 2 {
                    continue;
                }
                let d = row_dist2(points, p, &centroids, next[p]);
                if donor.map_or(true, |(_, best)| d > best) {
                    donor = Some((p, d));
                }
            }
            let (p, _) = donor.expect("a cluster with at least two points exists");
            sizes[next[p]] -= 1;
            next[p] = empty;
            sizes[empty] += 1;
        }

        if next == assignment {
            break;
        }
        assignment = next;

        for c in 0..k {
            let mut mean = nalgebra::RowDVector::zeros(points.ncols());
            let mut count = 0.0;
            for p in 0..m {
                if assignment[p] == c {
                    mean += points.row(p);
                    count += 1.0;
                }
            }
            centroids.set_row(c, &(mean / count));
        }

        let inertia = total_inertia(points, &assignment, &centroids);
        // Lloyd steps only lower inertia; repair can bounce it up once.
        debug_assert!(
            repaired || inertia <= previous_inertia * (1.0 + 1e-9) + 1e-9,
            "inertia increased: {previous_inertia} -> {inertia}"
        );
        previous_inertia = inertia;
    }

    let inertia = total_inertia(points, &assignment, &centroids);
    Ok(SemanticAssignment {
        assignment,
        centroids,
        inertia,
    })
}

fn nearest_center(points: &DMatrix<f64>, p: usize, centroids: &DMatrix<f64>) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = row_dist2(points, p, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn row_dist2(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for t in 0..a.ncols() {
        let d = a[(i, t)] - b[(j, t)];
        acc += d * d;
    }
    acc
}

fn total_inertia(points: &DMatrix<f64>, assignment: &[usize], centroids: &DMatrix<f64>) -> f64 {
    (0..points.nrows())
        .map(|p| row_dist2(points, p, centroids, assignment[p]))
        .sum()
}

fn distinct_row_count(points: &DMatrix<f64>) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for i in 0..points.nrows() {
        let key: Vec<u64> = points.row(i).iter().map(|v| v.to_bits()).collect();
        seen.insert(key);
    }
    seen.len()
}

/// Everything the learning pipeline produces, for callers that want to
/// inspect intermediate stages (reports, debug dumps).
#[derive(Debug)]
pub struct PipelineOutcome {
    /// Present only in s2lsl mode.
    pub hypergraph: Option<HypergraphModel>,
    pub codes: Vec<SparseCode>,
    pub graph: FeatureGraph,
    pub embedding: SpectralEmbedding,
    pub assignment: SemanticAssignment,
    /// Wall-clock per stage, in pipeline order. Informational only; all
    /// other fields are deterministic in (corpus, k, mode, seed).
    pub stage_timings: Vec<(&'static str, Duration)>,
}

/// Runs the full pipeline: (s2lsl) hypergraph regularizer -> structured
/// codes, or (slsl) plain codes; then affinity graph, spectral embedding,
/// and k-means into `k` semantic clusters.
pub fn run_pipeline(
    corpus: &Corpus,
    k: usize,
    mode: Mode,
    seed: u64,
    tolerance: f64,
) -> Result<PipelineOutcome> {
    let m = corpus.num_features();
    if k < 2 || k >= m {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} out of range for {m} features (need 2 <= K < M)"
        )));
    }
    let mut stage_timings = Vec::new();
    let mut mark = Instant::now();
    let mut lap = |timings: &mut Vec<(&'static str, Duration)>, name: &'static str| {
        let now = Instant::now();
        timings.push((name, now - mark));
        mark = now;
    };

    let hypergraph = match mode {
        Mode::Slsl => None,
        Mode::S2lsl => {
            let h = build_hypergraph(corpus)?;
            lap(&mut stage_timings, "hypergraph");
            Some(h)
        }
    };
    let codes = sparse_code_all(
        corpus,
        hypergraph.as_ref().map(|h| &h.regularizer),
        tolerance,
    )?;
    lap(&mut stage_timings, "sparse_coding");
    let graph = build_feature_graph(&codes)?;
    lap(&mut stage_timings, "feature_graph");
    let embedding = spectral_embed(&graph, k)?;
    lap(&mut stage_timings, "spectral_embedding");
    let assignment = kmeans(&embedding.matrix, k, seed, DEFAULT_KMEANS_MAX_ITERS)?;
    lap(&mut stage_timings, "kmeans");

    Ok(PipelineOutcome {
        hypergraph,
        codes,
        graph,
        embedding,
        assignment,
        stage_timings,
    })
}

/// Learns `k` high-level semantic clusters over the corpus's features.
pub fn learn_latent_semantics(
    corpus: &Corpus,
    k: usize,
    mode: Mode,
    seed: u64,
) -> Result<(SpectralEmbedding, SemanticAssignment)> {
    let outcome = run_pipeline(corpus, k, mode, seed, DEFAULT_TOLERANCE)?;
    Ok((outcome.embedding, outcome.assignment))
}

/// Writes `feature_id<TAB>cluster_id`, one line per feature.
pub fn write_assignment(
    path: &Path,
    feature_ids: &[String],
    assignment: &SemanticAssignment,
) -> Result<()> {
    if feature_ids.len() != assignment.assignment.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature ids for {} assignments",
            feature_ids.len(),
            assignment.assignment.len()
        )));
    }
    let mut out = String::new();
    for (id, &cluster) in feature_ids.iter().zip(&assignment.assignment) {
        out.push_str(id);
        out.push('\t');
        out.push_str(&cluster.to_string());
        out.push('\n');
    }
    textio::write_text(path, &out)
}

/// Reads an assignment file back as (feature_id, cluster_id) pairs in file
/// order.
pub fn read_assignment(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = textio::read_text(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, cluster) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            message: format!("line {}: expected feature_id<TAB>cluster_id", lineno + 1),
        })?;
        let cluster: usize = cluster.trim().parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            message: format!("line {}: bad cluster id {cluster:?}", lineno + 1),
        })?;
        pairs.push((id.to_string(), cluster));
    }
    Ok(pairs)
}
