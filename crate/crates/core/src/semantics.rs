//! High-level semantic histograms and the histogram-intersection kernel.
//!
//! A semantic assignment partitions the feature vocabulary; each video's
//! mid-level counts roll up into one count per cluster. Counts are integers
//! carried in f64, so sums stay exact and conservation holds with `==`.

use std::path::Path;

use nalgebra::DMatrix;

use crate::corpus::Corpus;
use crate::embedding::SemanticAssignment;
use crate::error::{Error, Result};
use crate::textio;

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticHistogram {
    pub video_id: String,
    /// One nonnegative count mass per cluster (or per feature, for
    /// mid-level histograms).
    pub values: Vec<f64>,
}

impl SemanticHistogram {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Each video's raw feature counts as a histogram, one bin per feature.
pub fn mid_level_histograms(corpus: &Corpus) -> Vec<SemanticHistogram> {
    (0..corpus.num_videos())
        .map(|n| SemanticHistogram {
            video_id: corpus.video_ids()[n].clone(),
            values: (0..corpus.num_features())
                .map(|j| corpus.count(n, j) as f64)
                .collect(),
        })
        .collect()
}

/// Rolls mid-level counts up to one bin per semantic cluster.
pub fn rollup(corpus: &Corpus, assignment: &SemanticAssignment) -> Result<Vec<SemanticHistogram>> {
    rollup_partition(corpus, &assignment.assignment, assignment.centroids.nrows())
}

/// Rollup against a bare partition, e.g. one read back from an assignment
/// file. Accumulates in integers, so per-video mass is conserved exactly.
pub fn rollup_partition(
    corpus: &Corpus,
    partition: &[usize],
    num_clusters: usize,
) -> Result<Vec<SemanticHistogram>> {
    if partition.len() != corpus.num_features() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} features, corpus has {}",
            partition.len(),
            corpus.num_features()
        )));
    }
    if num_clusters == 0 {
        return Err(Error::InvalidArgument("need at least one cluster".into()));
    }
    if let Some(&bad) = partition.iter().find(|&&c| c >= num_clusters) {
        return Err(Error::InvalidArgument(format!(
            "cluster id {bad} out of range for {num_clusters} clusters"
        )));
    }
    Ok((0..corpus.num_videos())
        .map(|n| {
            let mut bins = vec![0u64; num_clusters];
            for (j, &cluster) in partition.iter().enumerate() {
                bins[cluster] += corpus.count(n, j);
            }
            SemanticHistogram {
                video_id: corpus.video_ids()[n].clone(),
                values: bins.into_iter().map(|b| b as f64).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    /// P x Q kernel values, P = row_ids.len(), Q = col_ids.len().
    pub values: DMatrix<f64>,
}

/// Histogram-intersection kernel: entry (p, q) = sum_i min(a_p[i], b_q[i]).
pub fn hi_kernel(a: &[SemanticHistogram], b: &[SemanticHistogram]) -> Result<KernelMatrix> {
    let width = a
        .first()
        .or_else(|| b.first())
        .map(|h| h.values.len())
        .unwrap_or(0);
    for h in a.iter().chain(b) {
        if h.values.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "histogram {} has {} bins, expected {width}",
                h.video_id,
                h.values.len()
            )));
        }
        if let Some(&bad) = h.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "histogram {} holds invalid bin value {bad}",
                h.video_id
            )));
        }
    }
    let values = DMatrix::from_fn(a.len(), b.len(), |p, q| {
        a[p].values
            .iter()
            .zip(&b[q].values)
            .map(|(&x, &y)| x.min(y))
            .sum()
    });
    Ok(KernelMatrix {
        row_ids: a.iter().map(|h| h.video_id.clone()).collect(),
        col_ids: b.iter().map(|h| h.video_id.clone()).collect(),
        values,
    })
}

impl KernelMatrix {
    /// Comma-separated export: header row of column video ids, then one row
    /// per video, id first. Reals carry 17 significant digits, enough to
    /// reconstruct each f64 bit for bit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("video_id");
        for id in &self.col_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (p, id) in self.row_ids.iter().enumerate() {
            out.push_str(id);
            for q in 0..self.col_ids.len() {
                out.push(',');
                out.push_str(&textio::format_real(self.values[(p, q)]));
            }
            out.push('\n');
        }
        textio::write_text(path, &out)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = textio::read_text(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            message: "empty kernel file".into(),
        })?;
        let mut cells = header.split(',');
        if cells.next() != Some("video_id") {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: "header must start with video_id".into(),
            });
        }
        let col_ids: Vec<String> = cells.map(str::to_string).collect();
        let mut row_ids = Vec::new();
        let mut data = Vec::new();
        for (lineno, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            row_ids.push(cells.next().unwrap().to_string());
            let row: Vec<f64> = cells
                .map(|c| {
                    c.parse().map_err(|_| Error::Parse {
                        path: path.display().to_string(),
                        message: format!("line {}: bad real {c:?}", lineno + 1),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != col_ids.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!(
                        "line {}: {} values for {} columns",
                        lineno + 1,
                        row.len(),
                        col_ids.len()
                    ),
                });
            }
            data.extend(row);
        }
        let values = DMatrix::from_row_slice(row_ids.len(), col_ids.len(), &data);
        Ok(KernelMatrix {
            row_ids,
            col_ids,
            values,
        })
    }
}

/// Kernel k-nearest-neighbor vote.
///
/// For each query row, the `k` training videos with the largest kernel value
/// vote (selection ties go to the lower training index). The winning label
/// has the most votes, then the larger summed kernel over its voters, then
/// the lowest voter index. `k` is clamped to the training count.
pub fn knn_classify(
    train_kernel_rows: &KernelMatrix,
    train_labels: &[String],
    query_vs_train: &KernelMatrix,
    k: usize,
) -> Result<Vec<String>> {
    let trains = train_kernel_rows.row_ids.len();
    if train_labels.len() != trains {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {trains} training videos",
            train_labels.len()
        )));
    }
    if query_vs_train.col_ids != train_kernel_rows.row_ids {
        return Err(Error::DimensionMismatch(
            "query kernel columns do not match training videos".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(bad) = query_vs_train.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kernel holds non-finite value {bad}"
        )));
    }
    let k = k.min(trains);

    let mut predictions = Vec::with_capacity(query_vs_train.row_ids.len());
    for q in 0..query_vs_train.row_ids.len() {
        let mut order: Vec<usize> = (0..trains).collect();
        order.sort_by(|&a, &b| {
            query_vs_train.values[(q, b)]
                .partial_cmp(&query_vs_train.values[(q, a)])
                .unwrap()
                .then(a.cmp(&b))
        });
        // (votes, summed kernel, lowest voter index) per candidate label;
        // voter sets are disjoint, so the index makes the order total.
        let mut tally: Vec<(&str, usize, f64, usize)> = Vec::new();
        for &t in &order[..k] {
            let value = query_vs_train.values[(q, t)];
            match tally.iter_mut().find(|e| e.0 == train_labels[t]) {
                Some(e) => {
                    e.1 += 1;
                    e.2 += value;
                }
                None => tally.push((&train_labels[t], 1, value, t)),
            }
        }
        let winner = tally
            .iter()
            .max_by(|a, b| {
                a.1.cmp(&b.1)
                    .then(a.2.partial_cmp(&b.2).unwrap())
                    .then(b.3.cmp(&a.3))
            })
            .unwrap();
        predictions.push(winner.0.to_string());
    }
    Ok(predictions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::sorted_symmetric_eigen;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn corpus_from_counts(counts: Vec<Vec<u64>>) -> Corpus {
        let n = counts.len();
        let m = counts[0].len();
        Corpus::new(
            (0..n).map(|i| format!("v{i}")).collect(),
            (0..m).map(|j| format!("m{j}")).collect(),
            counts,
            None,
            None,
        )
        .unwrap()
    }

    fn hist(id: &str, values: &[f64]) -> SemanticHistogram {
        SemanticHistogram {
            video_id: id.into(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn rollup_merges_cluster_counts() {
        let corpus = corpus_from_counts(vec![vec![2, 3, 5]]);
        let out = rollup_partition(&corpus, &[0, 0, 1], 2).unwrap();
        assert_eq!(out[0].values, vec![5.0, 5.0]);

        let all_one = rollup_partition(&corpus, &[0, 0, 0], 1).unwrap();
        assert_eq!(all_one[0].values, vec![10.0]);
    }

    #[test]
    fn identity_rollup_reproduces_mid_level() {
        let corpus = corpus_from_counts(vec![vec![1, 0, 4], vec![2, 7, 1]]);
        let identity: Vec<usize> = (0..3).collect();
        let rolled = rollup_partition(&corpus, &identity, 3).unwrap();
        assert_eq!(rolled, mid_level_histograms(&corpus));
    }

    #[test]
    fn rollup_accepts_assignment_struct() {
        let corpus = corpus_from_counts(vec![vec![2, 3, 5]]);
        let assignment = SemanticAssignment {
            assignment: vec![1, 0, 1],
            centroids: DMatrix::zeros(2, 4),
            inertia: 0.0,
        };
        let out = rollup(&corpus, &assignment).unwrap();
        assert_eq!(out[0].values, vec![3.0, 7.0]);
    }

    #[test]
    fn rollup_validates_partition() {
        let corpus = corpus_from_counts(vec![vec![2, 3, 5]]);
        assert!(matches!(
            rollup_partition(&corpus, &[0, 0], 2),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            rollup_partition(&corpus, &[0, 0, 2], 2),
            Err(Error::InvalidArgument(_))
        ));
        assert!(rollup_partition(&corpus, &[0, 0, 0], 0).is_err());
    }

    #[test]
    fn kernel_matches_hand_examples() {
        let k = hi_kernel(
            &[hist("a", &[1.0, 2.0, 3.0])],
            &[
                hist("b", &[3.0, 2.0, 1.0]),
                hist("a", &[1.0, 2.0, 3.0]),
                hist("c", &[0.0, 0.0, 0.0]),
            ],
        )
        .unwrap();
        assert_eq!(k.values[(0, 0)], 4.0);
        assert_eq!(k.values[(0, 1)], 6.0);
        assert_eq!(k.values[(0, 2)], 0.0);
        assert_eq!(k.row_ids, vec!["a".to_string()]);
        assert_eq!(k.col_ids.len(), 3);
    }

    #[test]
    fn disjoint_supports_have_zero_kernel() {
        let k = hi_kernel(
            &[hist("a", &[5.0, 0.0])],
            &[hist("b", &[0.0, 7.0])],
        )
        .unwrap();
        assert_eq!(k.values[(0, 0)], 0.0);
    }

    #[test]
    fn kernel_rejects_bad_histograms() {
        assert!(matches!(
            hi_kernel(&[hist("a", &[1.0])], &[hist("b", &[1.0, 2.0])]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            hi_kernel(&[hist("a", &[-1.0])], &[hist("b", &[1.0])]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(hi_kernel(&[hist("a", &[f64::NAN])], &[hist("b", &[1.0])]).is_err());
    }

    #[test]
    fn square_kernel_is_symmetric_bounded_and_mass_diagonal() {
        let mut rng = StdRng::seed_from_u64(11);
        let hists: Vec<SemanticHistogram> = (0..12)
            .map(|i| {
                hist(
                    &format!("v{i}"),
                    &(0..6).map(|_| rng.random_range(0..30) as f64).collect::<Vec<_>>(),
                )
            })
            .collect();
        let k = hi_kernel(&hists, &hists).unwrap();
        for p in 0..12 {
            assert_eq!(k.values[(p, p)], hists[p].mass());
            for q in 0..12 {
                assert_eq!(k.values[(p, q)], k.values[(q, p)]);
                assert!(k.values[(p, q)] <= k.values[(p, p)].min(k.values[(q, q)]));
                assert!(k.values[(p, q)] >= 0.0);
            }
        }
    }

    #[test]
    fn square_kernel_is_positive_semidefinite() {
        let mut rng = StdRng::seed_from_u64(5150);
        let hists: Vec<SemanticHistogram> = (0..50)
            .map(|i| {
                hist(
                    &format!("v{i}"),
                    &(0..8).map(|_| rng.random_range(0..10) as f64).collect::<Vec<_>>(),
                )
            })
            .collect();
        let k = hi_kernel(&hists, &hists).unwrap();
        let eig = sorted_symmetric_eigen(&k.values).unwrap();
        assert!(
            eig.values[0] >= -1e-8,
            "min kernel eigenvalue {}",
            eig.values[0]
        );
    }

    #[test]
    fn full_width_rollup_reproduces_mid_level_kernel() {
        let corpus = corpus_from_counts(vec![
            vec![1, 0, 4, 2],
            vec![2, 7, 1, 0],
            vec![0, 3, 3, 3],
        ]);
        let mid = mid_level_histograms(&corpus);
        // Nontrivial relabeling: rolled bin order differs from feature order.
        let partition = vec![2, 0, 3, 1];
        let rolled = rollup_partition(&corpus, &partition, 4).unwrap();
        let a = hi_kernel(&mid, &mid).unwrap();
        let b = hi_kernel(&rolled, &rolled).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn nearest_training_video_wins_at_k1() {
        let train = vec![
            hist("t0", &[4.0, 0.0, 0.0]),
            hist("t1", &[0.0, 4.0, 0.0]),
            hist("t2", &[0.0, 0.0, 4.0]),
        ];
        let labels: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let kernel = hi_kernel(&train, &train).unwrap();
        let queries = hi_kernel(
            &[hist("q0", &[0.0, 4.0, 0.0]), hist("q1", &[0.0, 1.0, 3.0])],
            &train,
        )
        .unwrap();
        let out = knn_classify(&kernel, &labels, &queries, 1).unwrap();
        assert_eq!(out, vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn selection_ties_go_to_the_lower_index() {
        let train = vec![hist("t0", &[2.0, 2.0]), hist("t1", &[2.0, 2.0])];
        let labels: Vec<String> = vec!["late".into(), "early".into()];
        let kernel = hi_kernel(&train, &train).unwrap();
        let queries = hi_kernel(&[hist("q", &[2.0, 2.0])], &train).unwrap();
        let out = knn_classify(&kernel, &labels, &queries, 1).unwrap();
        assert_eq!(out, vec!["late".to_string()]);
    }

    #[test]
    fn vote_ties_break_by_summed_kernel() {
        // k = 4, two votes each; label "big" has the larger kernel mass.
        let train = vec![
            hist("t0", &[4.0, 0.0]),
            hist("t1", &[4.0, 0.0]),
            hist("t2", &[0.0, 9.0]),
            hist("t3", &[0.0, 9.0]),
        ];
        let labels: Vec<String> = vec!["small".into(), "small".into(), "big".into(), "big".into()];
        let kernel = hi_kernel(&train, &train).unwrap();
        let queries = hi_kernel(&[hist("q", &[4.0, 9.0])], &train).unwrap();
        let out = knn_classify(&kernel, &labels, &queries, 4).unwrap();
        assert_eq!(out, vec!["big".to_string()]);
    }

    #[test]
    fn oversized_k_is_clamped() {
        let train = vec![hist("t0", &[1.0]), hist("t1", &[3.0])];
        let labels: Vec<String> = vec!["a".into(), "b".into()];
        let kernel = hi_kernel(&train, &train).unwrap();
        let queries = hi_kernel(&[hist("q", &[3.0])], &train).unwrap();
        let out = knn_classify(&kernel, &labels, &queries, 99).unwrap();
        assert_eq!(out, vec!["b".to_string()]);
    }

    #[test]
    fn knn_validates_inputs() {
        let train = vec![hist("t0", &[1.0])];
        let labels: Vec<String> = vec!["a".into(), "b".into()];
        let kernel = hi_kernel(&train, &train).unwrap();
        let queries = hi_kernel(&[hist("q", &[1.0])], &train).unwrap();
        assert!(matches!(
            knn_classify(&kernel, &labels, &queries, 1),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(knn_classify(&kernel, &labels[..1].to_vec(), &queries, 0).is_err());

        let mut renamed = queries.clone();
        renamed.col_ids[0] = "other".into();
        assert!(matches!(
            knn_classify(&kernel, &labels[..1].to_vec(), &renamed, 1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn kernel_csv_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kernel.csv");
        let k = KernelMatrix {
            row_ids: vec!["v0".into(), "v1".into()],
            col_ids: vec!["v0".into(), "v1".into(), "v2".into()],
            values: DMatrix::from_row_slice(
                2,
                3,
                &[0.1, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE, 1e300, 0.0],
            ),
        };
        k.write_csv(&path).unwrap();
        let back = KernelMatrix::read_csv(&path).unwrap();
        assert_eq!(back.row_ids, k.row_ids);
        assert_eq!(back.col_ids, k.col_ids);
        for (a, b) in back.values.iter().zip(k.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let text = textio::read_text(&path).unwrap();
        assert!(text.starts_with("video_id,v0,v1,v2\n"));
        assert!(text.contains("1.0000000000000001e-1"));
    }

    #[test]
    fn kernel_csv_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kernel.csv");
        textio::write_text(&path, "ids,v0\nv0,1.0\n").unwrap();
        assert!(matches!(
            KernelMatrix::read_csv(&path),
            Err(Error::Parse { .. })
        ));
        textio::write_text(&path, "video_id,v0,v1\nv0,1.0\n").unwrap();
        assert!(matches!(
            KernelMatrix::read_csv(&path),
            Err(Error::Parse { .. })
        ));
        textio::write_text(&path, "video_id,v0\nv0,abc\n").unwrap();
        assert!(matches!(
            KernelMatrix::read_csv(&path),
            Err(Error::Parse { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rollup_conserves_mass_exactly(
            n in 1usize..5,
            m in 2usize..8,
            k in 1usize..5,
            seed in 0u64..1000,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let counts: Vec<Vec<u64>> = (0..n)
                .map(|r| {
                    (0..m)
                        // Positive everywhere, so corpus validation passes.
                        .map(|c| 1 + ((r + c) as u64 % 3) + rng.random_range(0..1000u64))
                        .collect()
                })
                .collect();
            let corpus = corpus_from_counts(counts);
            let partition: Vec<usize> =
                (0..m).map(|_| rng.random_range(0..k)).collect();
            let rolled = rollup_partition(&corpus, &partition, k).unwrap();
            for (video, hist) in rolled.iter().enumerate() {
                let total: f64 = hist.values.iter().sum();
                prop_assert_eq!(total, corpus.video_total(video) as f64);
                prop_assert!(hist.values.iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn kernel_bounded_by_self_mass(
            a in proptest::collection::vec(0u32..100, 4),
            b in proptest::collection::vec(0u32..100, 4),
        ) {
            let ha = hist("a", &a.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let hb = hist("b", &b.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let k = hi_kernel(&[ha.clone(), hb.clone()], &[ha.clone(), hb.clone()]).unwrap();
            prop_assert_eq!(k.values[(0, 1)], k.values[(1, 0)]);
            prop_assert!(k.values[(0, 1)] <= ha.mass().min(hb.mass()));
            prop_assert_eq!(k.values[(0, 0)], ha.mass());
        }
    }
}
