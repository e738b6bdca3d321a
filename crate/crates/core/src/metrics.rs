//! Partition-agreement and classification metrics.

use std::collections::HashMap;
use std::hash::Hash;

/// Normalized mutual information between two labelings of the same items,
/// using the arithmetic normalization `2 I(U;V) / (H(U) + H(V))`.
///
/// Returns a value in [0, 1]; two single-cluster labelings agree perfectly
/// and score 1. Panics if the slices have different lengths.
pub fn nmi<A, B>(xs: &[A], ys: &[B]) -> f64
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    assert_eq!(xs.len(), ys.len(), "labelings must cover the same items");
    let n = xs.len();
    if n == 0 {
        return 1.0;
    }

    // First-appearance indexing keeps every later float sum in a fixed order.
    let xi = index_labels(xs);
    let yi = index_labels(ys);
    let kx = xi.iter().copied().max().unwrap() + 1;
    let ky = yi.iter().copied().max().unwrap() + 1;

    let mut joint = vec![0u64; kx * ky];
    let mut cx = vec![0u64; kx];
    let mut cy = vec![0u64; ky];
    for (&a, &b) in xi.iter().zip(&yi) {
        joint[a * ky + b] += 1;
        cx[a] += 1;
        cy[b] += 1;
    }

    let nf = n as f64;
    let hx = entropy(&cx, nf);
    let hy = entropy(&cy, nf);
    if hx + hy == 0.0 {
        return 1.0;
    }

    let mut mi = 0.0;
    for a in 0..kx {
        for b in 0..ky {
            let c = joint[a * ky + b];
            if c > 0 {
                let p = c as f64 / nf;
                mi += p * (p / (cx[a] as f64 / nf * (cy[b] as f64 / nf))).ln();
            }
        }
    }
    (2.0 * mi / (hx + hy)).clamp(0.0, 1.0)
}

fn index_labels<T: Eq + Hash>(items: &[T]) -> Vec<usize> {
    let mut seen: HashMap<&T, usize> = HashMap::new();
    items
        .iter()
        .map(|item| {
            let next = seen.len();
            *seen.entry(item).or_insert(next)
        })
        .collect()
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Fraction of positions where the two sequences agree. Panics on length
/// mismatch; returns 0 for empty input.
pub fn accuracy<T: PartialEq>(predicted: &[T], actual: &[T]) -> f64 {
    assert_eq!(predicted.len(), actual.len(), "need one prediction per item");
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    hits as f64 / predicted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_partitions_score_one() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        // Relabeling does not matter.
        assert_eq!(nmi(&[0, 0, 1, 1], &["b", "b", "a", "a"]), 1.0);
    }

    #[test]
    fn independent_partitions_score_zero() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]), 0.0);
    }

    #[test]
    fn trivial_partitions() {
        // Both single-cluster: perfect agreement by convention.
        assert_eq!(nmi(&[7, 7, 7], &["x", "x", "x"]), 1.0);
        // One informative, one trivial: no shared information.
        assert_eq!(nmi(&[0, 1, 2], &["x", "x", "x"]), 0.0);
    }

    #[test]
    fn partial_agreement_is_strictly_between() {
        let v = nmi(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 2, 2, 2]);
        assert!(v > 0.0 && v < 1.0, "{v}");
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&["a", "b", "a"], &["a", "a", "a"]), 2.0 / 3.0);
        assert_eq!(accuracy::<u8>(&[], &[]), 0.0);
    }

    proptest! {
        #[test]
        fn nmi_is_bounded_and_symmetric(
            xs in proptest::collection::vec(0u8..4, 1..30),
        ) {
            let ys: Vec<u8> = xs.iter().map(|&v| v.wrapping_mul(17).wrapping_add(3) % 4).collect();
            let a = nmi(&xs, &ys);
            let b = nmi(&ys, &xs);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
            // ys is a function of xs through a relabeling, hence full agreement.
            prop_assert!((a - 1.0).abs() < 1e-12);
        }
    }
}
