//! Video/feature count corpus: the input to graph construction and the
//! semantic rollup.
//!
//! A corpus holds an N x M matrix of occurrence counts (N videos, M
//! mid-level features), optional per-video class labels, and optional
//! feature center vectors used for hyperedge weighting. Every feature
//! column and every video row must have at least one positive count;
//! downstream normalizations divide by those sums.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textio;

pub const FORMAT_VERSION: u32 = 1;

/// Occurrence counts of mid-level features across a video collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    video_ids: Vec<String>,
    feature_ids: Vec<String>,
    /// Row-major N x M counts.
    counts: Vec<u64>,
    labels: Option<Vec<String>>,
    /// M x d feature centers in descriptor space.
    centers: Option<DMatrix<f64>>,
}

/// One feature's occurrence profile across all videos.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    /// Length-N counts as reals; at least one entry is positive.
    pub values: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    format_version: u32,
    video_ids: Vec<String>,
    feature_ids: Vec<String>,
    counts: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    centers: Option<Vec<Vec<f64>>>,
}

impl Corpus {
    pub fn new(
        video_ids: Vec<String>,
        feature_ids: Vec<String>,
        counts: Vec<Vec<u64>>,
        labels: Option<Vec<String>>,
        centers: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = video_ids.len();
        let m = feature_ids.len();
        if n == 0 {
            return Err(Error::InvalidCorpus("no videos".into()));
        }
        if m < 2 {
            return Err(Error::InvalidCorpus(format!(
                "need at least 2 features, got {m}"
            )));
        }
        if counts.len() != n {
            return Err(Error::InvalidCorpus(format!(
                "counts has {} rows but there are {n} video ids",
                counts.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * m);
        for (row_idx, row) in counts.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidCorpus(format!(
                    "counts row {row_idx} ({:?}) has {} entries, expected {m}",
                    video_ids[row_idx],
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        for (row_idx, row) in counts.iter().enumerate() {
            if row.iter().all(|&c| c == 0) {
                return Err(Error::InvalidCorpus(format!(
                    "video row {row_idx} ({:?}) has no positive counts",
                    video_ids[row_idx]
                )));
            }
        }
        for col in 0..m {
            if (0..n).all(|row| flat[row * m + col] == 0) {
                return Err(Error::InvalidCorpus(format!(
                    "feature column {col} ({:?}) has no positive counts",
                    feature_ids[col]
                )));
            }
        }
        if let Some(ref labels) = labels {
            if labels.len() != n {
                return Err(Error::InvalidCorpus(format!(
                    "{} labels for {n} videos",
                    labels.len()
                )));
            }
        }
        if let Some(ref centers) = centers {
            if centers.nrows() != m {
                return Err(Error::InvalidCorpus(format!(
                    "centers has {} rows but the corpus has {m} features",
                    centers.nrows()
                )));
            }
            if centers.ncols() == 0 {
                return Err(Error::InvalidCorpus("centers has zero columns".into()));
            }
            for i in 0..centers.nrows() {
                for j in 0..centers.ncols() {
                    if !centers[(i, j)].is_finite() {
                        return Err(Error::InvalidCorpus(format!(
                            "centers[{i}][{j}] is not finite"
                        )));
                    }
                }
            }
        }
        Ok(Corpus {
            video_ids,
            feature_ids,
            counts: flat,
            labels,
            centers,
        })
    }

    pub fn num_videos(&self) -> usize {
        self.video_ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn video_ids(&self) -> &[String] {
        &self.video_ids
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn centers(&self) -> Option<&DMatrix<f64>> {
        self.centers.as_ref()
    }

    pub fn count(&self, video: usize, feature: usize) -> u64 {
        self.counts[video * self.num_features() + feature]
    }

    /// Total occurrences in one video (always positive).
    pub fn video_total(&self, video: usize) -> u64 {
        let m = self.num_features();
        self.counts[video * m..(video + 1) * m].iter().sum()
    }

    /// One feature's count profile across videos.
    pub fn feature_column(&self, feature: usize) -> Result<FeatureColumn> {
        let m = self.num_features();
        if feature >= m {
            return Err(Error::InvalidArgument(format!(
                "feature index {feature} out of range (corpus has {m} features)"
            )));
        }
        let values =
            DVector::from_fn(self.num_videos(), |row, _| self.counts[row * m + feature] as f64);
        Ok(FeatureColumn { values })
    }

    /// The N x M count matrix as reals; column i is feature i's profile.
    pub fn count_matrix(&self) -> DMatrix<f64> {
        let m = self.num_features();
        DMatrix::from_fn(self.num_videos(), m, |i, j| self.counts[i * m + j] as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CorpusFile {
            format_version: FORMAT_VERSION,
            video_ids: self.video_ids.clone(),
            feature_ids: self.feature_ids.clone(),
            counts: (0..self.num_videos())
                .map(|i| {
                    (0..self.num_features())
                        .map(|j| self.count(i, j) as i64)
                        .collect()
                })
                .collect(),
            labels: self.labels.clone(),
            centers: self.centers.as_ref().map(|c| {
                (0..c.nrows())
                    .map(|i| c.row(i).iter().copied().collect())
                    .collect()
            }),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("corpus serializes");
        text.push('\n');
        textio::write_text(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = textio::read_text(path)?;
        let file: CorpusFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!(
                    "unsupported format_version {} (expected {FORMAT_VERSION})",
                    file.format_version
                ),
            });
        }
        let mut counts = Vec::with_capacity(file.counts.len());
        for (row_idx, row) in file.counts.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (col_idx, &c) in row.iter().enumerate() {
                if c < 0 {
                    return Err(Error::InvalidCorpus(format!(
                        "counts[{row_idx}][{col_idx}] is negative ({c})"
                    )));
                }
                out.push(c as u64);
            }
            counts.push(out);
        }
        let centers = match file.centers {
            None => None,
            Some(rows) => {
                let nrows = rows.len();
                let ncols = rows.first().map_or(0, Vec::len);
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != ncols {
                        return Err(Error::InvalidCorpus(format!(
                            "centers row {i} has {} entries, expected {ncols}",
                            row.len()
                        )));
                    }
                }
                Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
            }
        };
        Corpus::new(file.video_ids, file.feature_ids, counts, file.labels, centers)
    }
}

/// Planted-cluster corpus generator for experiments and tests.
///
/// Features are split into `num_clusters` equal blocks; video `n` belongs to
/// cluster `n % num_clusters` and receives one guaranteed occurrence of every
/// feature in its block plus `4 * features_per_cluster` extra occurrences,
/// each drawn from the video's own block with probability `1 - noise_rate`
/// and uniformly over all features otherwise. Labels are `c0..`, and centers
/// are the one-hot block indicators, so same-block center inner products are
/// strictly larger than cross-block ones. Deterministic in all arguments.
pub fn generate_synthetic(
    num_clusters: usize,
    features_per_cluster: usize,
    num_videos: usize,
    noise_rate: f64,
    seed: u64,
) -> Result<Corpus> {
    if num_clusters == 0 {
        return Err(Error::InvalidArgument("num_clusters must be positive".into()));
    }
    if features_per_cluster == 0 {
        return Err(Error::InvalidArgument(
            "features_per_cluster must be positive".into(),
        ));
    }
    if num_videos < num_clusters {
        return Err(Error::InvalidArgument(format!(
            "num_videos ({num_videos}) must be at least num_clusters ({num_clusters}) so every feature block is used"
        )));
    }
    if !(0.0..1.0).contains(&noise_rate) {
        return Err(Error::InvalidArgument(format!(
            "noise_rate must be in [0, 1), got {noise_rate}"
        )));
    }
    let m = num_clusters * features_per_cluster;
    if m < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 features in total".into(),
        ));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let width = digits(m.max(num_videos));
    let feature_ids: Vec<String> = (0..m).map(|j| format!("m{j:0width$}")).collect();
    let video_ids: Vec<String> = (0..num_videos).map(|n| format!("v{n:0width$}")).collect();

    let mut counts = vec![vec![0u64; m]; num_videos];
    let mut labels = Vec::with_capacity(num_videos);
    for (n, row) in counts.iter_mut().enumerate() {
        let cluster = n % num_clusters;
        labels.push(format!("c{cluster}"));
        let block = cluster * features_per_cluster..(cluster + 1) * features_per_cluster;
        for j in block.clone() {
            row[j] += 1;
        }
        for _ in 0..4 * features_per_cluster {
            let j = if rng.random::<f64>() < noise_rate {
                rng.random_range(0..m)
            } else {
                rng.random_range(block.clone())
            };
            row[j] += 1;
        }
    }

    let centers = DMatrix::from_fn(m, num_clusters, |j, c| {
        if j / features_per_cluster == c {
            1.0
        } else {
            0.0
        }
    });

    Corpus::new(video_ids, feature_ids, counts, Some(labels), Some(centers))
}

fn digits(n: usize) -> usize {
    let mut width = 1;
    let mut rest = n / 10;
    while rest > 0 {
        width += 1;
        rest /= 10;
    }
    width
}
