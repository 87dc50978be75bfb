//! Diagnostics: relation quality (PN/TPN/purity), clustering agreement
//! (NMI/ARI/cluster accuracy), prototype health (effective rate, matching
//! distribution), and same-class similarity histograms.
//!
//! Everything here is read-only; nothing mutates training state. Contingency
//! tables use BTreeMap so floating-point accumulation order is deterministic.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::miner::RelationLabels;
use crate::numerics::{Matrix, RngStream};

/// Sentinel written in place of metrics that are undefined at a given point
/// (e.g. purity when no positives were mined).
pub const UNDEFINED: f64 = -1.0;

/// Aggregate quality of mined relations against ground-truth classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationQuality {
    /// Mean number of predicted positives per anchor.
    pub pn_mean: f64,
    /// Mean number of predicted positives that share the anchor's class.
    pub tpn_mean: f64,
    /// sum TPN / sum PN over anchors with PN > 0, or [`UNDEFINED`].
    pub purity: f64,
}

/// Counts PN/TPN per anchor and aggregates. Panics on length mismatches.
pub fn relation_quality(
    labels: &RelationLabels,
    anchor_truth: &[usize],
    queue_truth: &[usize],
) -> RelationQuality {
    let n = labels.labels.rows();
    let l = labels.labels.cols();
    assert_eq!(n, anchor_truth.len(), "anchor truth length mismatch");
    assert_eq!(l, queue_truth.len(), "queue truth length mismatch");
    let mut pn_total = 0usize;
    let mut tpn_total = 0usize;
    for i in 0..n {
        for j in 0..l {
            if labels.labels.get(i, j) {
                pn_total += 1;
                if anchor_truth[i] == queue_truth[j] {
                    tpn_total += 1;
                }
            }
        }
    }
    RelationQuality {
        pn_mean: pn_total as f64 / n as f64,
        tpn_mean: tpn_total as f64 / n as f64,
        purity: if pn_total > 0 {
            tpn_total as f64 / pn_total as f64
        } else {
            UNDEFINED
        },
    }
}

fn contingency(a: &[i64], b: &[i64]) -> (BTreeMap<i64, usize>, BTreeMap<i64, usize>, BTreeMap<(i64, i64), usize>) {
    let mut ca = BTreeMap::new();
    let mut cb = BTreeMap::new();
    let mut joint = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
        *joint.entry((x, y)).or_insert(0) += 1;
    }
    (ca, cb, joint)
}

fn entropy(counts: &BTreeMap<i64, usize>, n: usize) -> f64 {
    let n = n as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information I(a;b)/sqrt(H(a)H(b)). The outlier label
/// -1 counts as an ordinary cluster. Two zero-entropy partitions are
/// identical as partitions and score 1; if exactly one side has zero
/// entropy the score is 0. Panics on empty input.
pub fn nmi(a: &[i64], b: &[i64]) -> f64 {
    assert!(!a.is_empty(), "nmi of empty partition");
    assert_eq!(a.len(), b.len(), "partition length mismatch");
    let n = a.len();
    let (ca, cb, joint) = contingency(a, b);
    let ha = entropy(&ca, n);
    let hb = entropy(&cb, n);
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c as f64 / nf;
        let px = ca[&x] as f64 / nf;
        let py = cb[&y] as f64 / nf;
        mi += pxy * (pxy / (px * py)).ln();
    }
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

fn comb2(c: usize) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index by pair counting. Outlier -1 counts as a cluster.
/// Panics on empty input.
pub fn ari(a: &[i64], b: &[i64]) -> f64 {
    assert!(!a.is_empty(), "ari of empty partition");
    assert_eq!(a.len(), b.len(), "partition length mismatch");
    let n = a.len();
    let (ca, cb, joint) = contingency(a, b);
    let index: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = ca.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cb.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() == 0.0 {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

/// Dominant-label mapping accuracy: each predicted cluster maps to its most
/// frequent true label (ties toward the lowest label). Panics on empty input.
pub fn cluster_acc(pred: &[i64], truth: &[i64]) -> f64 {
    assert!(!pred.is_empty(), "cluster_acc of empty partition");
    assert_eq!(pred.len(), truth.len(), "partition length mismatch");
    let mut per_cluster: BTreeMap<i64, BTreeMap<i64, usize>> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *per_cluster.entry(p).or_default().entry(t).or_insert(0) += 1;
    }
    let mut mapping: BTreeMap<i64, i64> = BTreeMap::new();
    for (&cluster, freq) in &per_cluster {
        // BTreeMap iterates labels ascending, so strict > keeps the lowest
        // label on ties.
        let mut best_label = 0;
        let mut best_count = 0;
        for (&label, &count) in freq {
            if count > best_count {
                best_count = count;
                best_label = label;
            }
        }
        mapping.insert(cluster, best_label);
    }
    let correct = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| mapping[p] == **t)
        .count();
    correct as f64 / pred.len() as f64
}

/// Fraction of entries assigned to some prototype (index != -1).
pub fn effective_rate(queue_idx: &[i64]) -> f64 {
    if queue_idx.is_empty() {
        return 0.0;
    }
    let effective = queue_idx.iter().filter(|&&i| i >= 0).count();
    effective as f64 / queue_idx.len() as f64
}

/// Histogram of prototype usage (outliers excluded) plus the normalized
/// entropy of that histogram (entropy / ln M).
pub fn matching_distribution(queue_idx: &[i64], m: usize) -> (Vec<usize>, f64) {
    let mut counts = vec![0usize; m];
    for &i in queue_idx {
        if i >= 0 {
            counts[i as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 || m <= 1 {
        return (counts, 0.0);
    }
    let mut h = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.ln();
        }
    }
    (counts, h / (m as f64).ln())
}

/// Histogram over cosine similarities of same-class pairs.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
}

impl Histogram {
    /// CSV export: one `bin_lo,bin_hi,count` line per bin.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "bin_lo,bin_hi,count")?;
        for (i, &c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{}", self.bin_edges[i], self.bin_edges[i + 1], c)?;
        }
        w.flush()
    }
}

/// Default cap on the number of same-class pairs evaluated before
/// subsampling kicks in.
pub const PAIR_BUDGET: usize = 1_000_000;

/// Cosine-similarity distribution over same-class pairs, binned uniformly on
/// [-1, 1]. Pairs beyond `budget` are subsampled with the given stream.
/// Panics if no same-class pair exists.
pub fn similarity_histogram(
    embeddings: &Matrix,
    truth: &[usize],
    bins: usize,
    budget: usize,
    rng: &mut RngStream,
) -> Histogram {
    assert_eq!(embeddings.rows(), truth.len(), "label length mismatch");
    assert!(bins > 0, "need at least one bin");
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..truth.len() {
        for j in (i + 1)..truth.len() {
            if truth[i] == truth[j] {
                pairs.push((i, j));
            }
        }
    }
    assert!(!pairs.is_empty(), "no same-class pair exists");
    if pairs.len() > budget {
        rng.shuffle(&mut pairs);
        pairs.truncate(budget);
    }
    let edges: Vec<f64> = (0..=bins).map(|b| -1.0 + 2.0 * b as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    let mut mean = 0.0;
    for &(i, j) in &pairs {
        let s: f64 = embeddings
            .row(i)
            .iter()
            .zip(embeddings.row(j))
            .map(|(a, b)| a * b)
            .sum();
        mean += s;
        let clamped = s.clamp(-1.0, 1.0);
        let mut bin = ((clamped + 1.0) / 2.0 * bins as f64) as usize;
        if bin == bins {
            bin = bins - 1;
        }
        counts[bin] += 1;
    }
    mean /= pairs.len() as f64;
    Histogram {
        bin_edges: edges,
        counts,
        mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::mine_relations;
    use crate::numerics::{l2_normalize_rows, Mask, NORM_EPS};

    #[test]
    fn relation_quality_oracle_relations_have_unit_purity() {
        // Build labels from the truth itself.
        let anchor_truth = vec![0usize, 1, 0];
        let queue_truth = vec![0usize, 0, 1, 1];
        let mut mask = Mask::zeros(3, 4);
        for i in 0..3 {
            for j in 0..4 {
                mask.set(i, j, anchor_truth[i] == queue_truth[j]);
            }
        }
        let labels = RelationLabels {
            labels: mask,
            anchor_idx: vec![0, 1, 0],
        };
        let q = relation_quality(&labels, &anchor_truth, &queue_truth);
        assert_eq!(q.purity, 1.0);
        assert_eq!(q.pn_mean, 2.0);
        assert_eq!(q.tpn_mean, 2.0);
    }

    #[test]
    fn relation_quality_no_positives_reports_sentinel() {
        let labels = RelationLabels {
            labels: Mask::zeros(2, 3),
            anchor_idx: vec![-1, -1],
        };
        let q = relation_quality(&labels, &[0, 1], &[0, 1, 0]);
        assert_eq!(q.pn_mean, 0.0);
        assert_eq!(q.purity, UNDEFINED);
    }

    #[test]
    fn relation_quality_matches_hand_count() {
        let rel = mine_relations(&[2, -1, 0, 2], &[2, 0, 2, -1, 0, 2, 1, 2]);
        let anchor_truth = vec![0usize, 1, 2, 1];
        let queue_truth = vec![0usize, 2, 1, 0, 2, 0, 1, 1];
        let q = relation_quality(&rel, &anchor_truth, &queue_truth);
        // Hand enumeration: anchor 0 (proto 2) hits queue slots {0,2,5,7};
        // matches truth 0 at slots {0,5} -> PN 4, TPN 2. Anchor 1: nothing.
        // Anchor 2 (proto 0) hits {1,4}; truth 2 at both -> PN 2, TPN 2.
        // Anchor 3 (proto 2) hits {0,2,5,7}; truth 1 at {2,7} -> PN 4, TPN 2.
        assert_eq!(q.pn_mean, 10.0 / 4.0);
        assert_eq!(q.tpn_mean, 6.0 / 4.0);
        assert_eq!(q.purity, 0.6);
    }

    #[test]
    fn nmi_identical_partitions() {
        assert!((nmi(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]) - 1.0).abs() < 1e-12);
        // Relabeled but identical as a partition.
        assert!((nmi(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_constant_side_is_zero() {
        assert_eq!(nmi(&[0, 1, 2, 0], &[7, 7, 7, 7]), 0.0);
    }

    #[test]
    fn nmi_matches_contingency_hand_computation() {
        // 12 elements, a: three 4-blocks; b: mixes the last two blocks.
        let a = vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
        let b = vec![0, 0, 0, 0, 1, 1, 2, 2, 1, 1, 2, 2];
        let n = 12.0f64;
        // Joint: (0,0)=4, (1,1)=2, (1,2)=2, (2,1)=2, (2,2)=2.
        let mut mi = 0.0f64;
        for (pxy, px, py) in [
            (4.0 / n, 4.0 / n, 4.0 / n),
            (2.0 / n, 4.0 / n, 4.0 / n),
            (2.0 / n, 4.0 / n, 4.0 / n),
            (2.0 / n, 4.0 / n, 4.0 / n),
            (2.0 / n, 4.0 / n, 4.0 / n),
        ] {
            mi += pxy * (pxy / (px * py)).ln();
        }
        let h = -3.0 * (1.0 / 3.0f64) * (1.0f64 / 3.0).ln();
        let want = mi / h;
        assert!((nmi(&a, &b) - want).abs() < 1e-12);
    }

    #[test]
    fn ari_identical_and_canonical_zero() {
        assert_eq!(ari(&[0, 1, 1, 2], &[0, 1, 1, 2]), 1.0);
        let singletons = vec![0, 1, 2, 3, 4];
        let one_cluster = vec![0, 0, 0, 0, 0];
        assert_eq!(ari(&singletons, &one_cluster), 0.0);
    }

    /// O(N^2) all-pairs Rand statistic oracle.
    fn ari_pair_oracle(a: &[i64], b: &[i64]) -> f64 {
        let n = a.len();
        let mut n11 = 0.0f64;
        let mut n10 = 0.0f64;
        let mut n01 = 0.0f64;
        let mut n00 = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let same_a = a[i] == a[j];
                let same_b = b[i] == b[j];
                match (same_a, same_b) {
                    (true, true) => n11 += 1.0,
                    (true, false) => n10 += 1.0,
                    (false, true) => n01 += 1.0,
                    (false, false) => n00 += 1.0,
                }
            }
        }
        let total = n11 + n10 + n01 + n00;
        let expected = (n11 + n10) * (n11 + n01) / total;
        let max_index = 0.5 * ((n11 + n10) + (n11 + n01));
        if (max_index - expected).abs() == 0.0 {
            return 1.0;
        }
        (n11 - expected) / (max_index - expected)
    }

    #[test]
    fn ari_matches_pair_counting_oracle() {
        let mut rng = RngStream::from_seed(1);
        for _ in 0..30 {
            let n = 2 + rng.below(40);
            let a: Vec<i64> = (0..n).map(|_| rng.below(5) as i64 - 1).collect();
            let b: Vec<i64> = (0..n).map(|_| rng.below(4) as i64 - 1).collect();
            assert!((ari(&a, &b) - ari_pair_oracle(&a, &b)).abs() <= 1e-9);
        }
    }

    #[test]
    fn cluster_acc_identity_and_uniform_floor() {
        assert_eq!(cluster_acc(&[0, 1, 2, 0], &[0, 1, 2, 0]), 1.0);
        // Constant prediction, uniform truth over 4 classes.
        let pred = vec![0; 8];
        let truth = vec![0, 1, 2, 3, 0, 1, 2, 3];
        assert_eq!(cluster_acc(&pred, &truth), 0.25);
    }

    #[test]
    fn cluster_acc_hand_mapping_with_tie() {
        // Cluster 0 sees labels {1:2, 2:2} -> tie resolves to label 1.
        let pred = vec![0, 0, 0, 0, 1, 1];
        let truth = vec![1, 1, 2, 2, 3, 3];
        assert_eq!(cluster_acc(&pred, &truth), 4.0 / 6.0);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rng = RngStream::from_seed(2);
        for _ in 0..10 {
            let n = 5 + rng.below(30);
            let a: Vec<i64> = (0..n).map(|_| rng.below(4) as i64).collect();
            let b: Vec<i64> = (0..n).map(|_| rng.below(4) as i64).collect();
            // Relabel a's clusters with an arbitrary injective map.
            let relabeled: Vec<i64> = a.iter().map(|&x| 17 - 3 * x).collect();
            assert!((nmi(&a, &b) - nmi(&relabeled, &b)).abs() <= 1e-12);
            assert!((ari(&a, &b) - ari(&relabeled, &b)).abs() <= 1e-12);
            assert!((cluster_acc(&a, &b) - cluster_acc(&relabeled, &b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn self_agreement_is_perfect_for_non_constant_partitions() {
        let a = vec![0, 1, 1, 2, 0];
        assert_eq!(ari(&a, &a), 1.0);
        assert!((nmi(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(cluster_acc(&a, &a), 1.0);
    }

    #[test]
    fn effective_rate_cases() {
        assert_eq!(effective_rate(&[-1, -1, -1]), 0.0);
        assert_eq!(effective_rate(&[0, 3, 2]), 1.0);
        assert_eq!(effective_rate(&[3, -1, 2, -1]), 0.5);
        assert_eq!(effective_rate(&[]), 0.0);
    }

    #[test]
    fn matching_distribution_counts_and_entropy() {
        let (counts, h) = matching_distribution(&[0, 0, 1, 2], 3);
        assert_eq!(counts, vec![2, 1, 1]);
        assert!(h > 0.0 && h < 1.0);

        let (counts, h) = matching_distribution(&[0, 1, 2, -1], 3);
        assert_eq!(counts, vec![1, 1, 1]);
        assert!((h - 1.0).abs() < 1e-12, "uniform usage has entropy 1, got {h}");

        let (_, h) = matching_distribution(&[1, 1, 1, 1], 3);
        assert_eq!(h, 0.0);
    }

    #[test]
    fn matching_distribution_sums_to_non_outlier_count() {
        let mut rng = RngStream::from_seed(3);
        let idx: Vec<i64> = (0..100).map(|_| rng.below(6) as i64 - 1).collect();
        let (counts, _) = matching_distribution(&idx, 5);
        let non_outlier = idx.iter().filter(|&&i| i >= 0).count();
        assert_eq!(counts.iter().sum::<usize>(), non_outlier);
    }

    #[test]
    fn histogram_identical_embeddings_pile_into_top_bin() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let truth = vec![0, 0, 0];
        let mut rng = RngStream::from_seed(4);
        let h = similarity_histogram(&e, &truth, 10, PAIR_BUDGET, &mut rng);
        assert_eq!(h.counts[9], 3);
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert!((h.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_orthogonal_pair_means_zero() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let truth = vec![0, 0];
        let mut rng = RngStream::from_seed(5);
        let h = similarity_histogram(&e, &truth, 4, PAIR_BUDGET, &mut rng);
        assert_eq!(h.mean, 0.0);
    }

    #[test]
    fn histogram_matches_all_pairs_oracle() {
        let mut rng = RngStream::from_seed(6);
        let mut raw = Matrix::zeros(6, 4);
        rng.fill_normal(&mut raw, 1.0);
        let (e, _) = l2_normalize_rows(&raw, NORM_EPS);
        let truth = vec![0, 0, 1, 1, 0, 1];
        let h = similarity_histogram(&e, &truth, 8, PAIR_BUDGET, &mut rng);
        let mut want_mean = 0.0;
        let mut count = 0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                if truth[i] == truth[j] {
                    let s: f64 = e.row(i).iter().zip(e.row(j)).map(|(a, b)| a * b).sum();
                    want_mean += s;
                    count += 1;
                }
            }
        }
        want_mean /= count as f64;
        assert_eq!(h.counts.iter().sum::<usize>(), count);
        assert!((h.mean - want_mean).abs() <= 1e-12);
    }

    #[test]
    #[should_panic(expected = "no same-class pair")]
    fn histogram_requires_a_same_class_pair() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut rng = RngStream::from_seed(7);
        similarity_histogram(&e, &[0, 1], 4, PAIR_BUDGET, &mut rng);
    }

    #[test]
    fn histogram_subsampling_respects_budget() {
        let mut rng = RngStream::from_seed(8);
        let mut raw = Matrix::zeros(40, 3);
        rng.fill_normal(&mut raw, 1.0);
        let (e, _) = l2_normalize_rows(&raw, NORM_EPS);
        let truth = vec![0usize; 40]; // 780 pairs
        let h = similarity_histogram(&e, &truth, 6, 100, &mut rng);
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
    }

    #[test]
    fn histogram_csv_layout() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let mut rng = RngStream::from_seed(9);
        let h = similarity_histogram(&e, &[0, 0], 2, PAIR_BUDGET, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        h.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "bin_lo,bin_hi,count\n-1,0,0\n0,1,1\n");
    }
}
