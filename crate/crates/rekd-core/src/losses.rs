//! Contrastive objectives and the true/false positive-negative bound
//! machinery. All losses consume already-temperature-scaled logits and
//! return both the mean loss value and its analytic gradient.

use crate::numerics::{Mask, Matrix, RngStream};

/// Scaled similarity logits with their binary positive mask. `tau` has
/// already been applied to the logits; it is carried for bookkeeping only.
#[derive(Debug, Clone)]
pub struct ContrastBatch {
    pub logits: Matrix,
    pub labels: Mask,
    pub tau: f64,
}

impl ContrastBatch {
    pub fn new(logits: Matrix, labels: Mask, tau: f64) -> Self {
        assert!(tau > 0.0, "temperature must be positive");
        assert_eq!(
            (logits.rows(), logits.cols()),
            (labels.rows(), labels.cols()),
            "logits {}x{} vs labels {}x{}",
            logits.rows(),
            logits.cols(),
            labels.rows(),
            labels.cols()
        );
        assert!(logits.is_finite(), "logits must be finite");
        ContrastBatch { logits, labels, tau }
    }
}

/// Mean loss over anchors plus d(value)/d(logits).
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad_logits: Matrix,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-sum-exp over the values selected by `pick`, with `sign` applied to
/// each logit first. Returns None when nothing is selected.
fn masked_lse(row: &[f64], mask: &[u8], pick: u8, sign: f64) -> Option<f64> {
    let mut max = f64::NEG_INFINITY;
    for (v, &m) in row.iter().zip(mask) {
        if m == pick {
            let s = sign * v;
            if s > max {
                max = s;
            }
        }
    }
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut sum = 0.0;
    for (v, &m) in row.iter().zip(mask) {
        if m == pick {
            sum += (sign * v - max).exp();
        }
    }
    Some(max + sum.ln())
}

/// One-positive NCE in its historical-distillation form:
/// per row, L = log(1 + sum_n exp(s_n) * exp(-s_pos)). Panics unless every
/// row has exactly one positive.
pub fn nce_loss(batch: &ContrastBatch) -> LossOutput {
    let n = batch.logits.rows();
    let mut grad = Matrix::zeros(n, batch.logits.cols());
    let mut total = 0.0;
    for i in 0..n {
        let row = batch.logits.row(i);
        let mask = batch.labels.row(i);
        let positives = batch.labels.row_count(i);
        assert_eq!(
            positives, 1,
            "nce_loss requires exactly one positive per row; row {i} has {positives}"
        );
        let pos_j = mask.iter().position(|&m| m == 1).unwrap();
        let s_pos = row[pos_j];
        let Some(log_a) = masked_lse(row, mask, 0, 1.0) else {
            // No negatives: log(1 + 0) contributes nothing.
            continue;
        };
        let t = log_a - s_pos;
        total += softplus(t);
        let sig = sigmoid(t);
        let g = grad.row_mut(i);
        for (j, (&s, &m)) in row.iter().zip(mask).enumerate() {
            if m == 0 {
                g[j] = sig * (s - log_a).exp();
            }
        }
        g[pos_j] = -sig;
    }
    grad.scale(1.0 / n as f64);
    LossOutput {
        value: total / n as f64,
        grad_logits: grad,
    }
}

/// Relation contrastive loss: per row,
/// L = log(1 + sum_{n: neg} exp(s_n) * sum_{p: pos} exp(-s_p)),
/// evaluated in log space as softplus(logA + logB). Rows with no positives
/// (or no negatives) contribute zero loss and zero gradient.
pub fn relcon_loss(batch: &ContrastBatch) -> LossOutput {
    let n = batch.logits.rows();
    let mut grad = Matrix::zeros(n, batch.logits.cols());
    let mut total = 0.0;
    for i in 0..n {
        let row = batch.logits.row(i);
        let mask = batch.labels.row(i);
        let (Some(log_a), Some(log_b)) = (
            masked_lse(row, mask, 0, 1.0),
            masked_lse(row, mask, 1, -1.0),
        ) else {
            continue;
        };
        let t = log_a + log_b;
        total += softplus(t);
        let sig = sigmoid(t);
        let g = grad.row_mut(i);
        for (j, (&s, &m)) in row.iter().zip(mask).enumerate() {
            if m == 0 {
                // dL/ds_n = B exp(s_n) / (1 + AB)
                g[j] = sig * (s - log_a).exp();
            } else {
                // dL/ds_p = -A exp(-s_p) / (1 + AB)
                g[j] = -sig * (-s - log_b).exp();
            }
        }
    }
    grad.scale(1.0 / n as f64);
    LossOutput {
        value: total / n as f64,
        grad_logits: grad,
    }
}

/// Per-row split of the predicted relations against ground truth, with the
/// exponential partial sums each class of pair contributes.
#[derive(Debug, Clone, Default)]
pub struct RowDecomposition {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub tn: Vec<usize>,
    pub fn_: Vec<usize>,
    pub tp_expsum: f64,
    pub fp_expsum: f64,
    pub tn_expsum: f64,
    pub fn_expsum: f64,
}

/// Splits predicted positives/negatives by the ground-truth mask:
/// TP = pred-pos and truth, FP = pred-pos and not truth,
/// TN = pred-neg and not truth, FN = pred-neg and truth.
pub fn decompose_terms(batch: &ContrastBatch, truth: &Mask) -> Vec<RowDecomposition> {
    assert_eq!(
        (truth.rows(), truth.cols()),
        (batch.labels.rows(), batch.labels.cols()),
        "truth mask {}x{} vs labels {}x{}",
        truth.rows(),
        truth.cols(),
        batch.labels.rows(),
        batch.labels.cols()
    );
    let mut out = Vec::with_capacity(batch.logits.rows());
    for i in 0..batch.logits.rows() {
        let row = batch.logits.row(i);
        let mut d = RowDecomposition::default();
        for j in 0..row.len() {
            let e = row[j].exp();
            match (batch.labels.get(i, j), truth.get(i, j)) {
                (true, true) => {
                    d.tp.push(j);
                    d.tp_expsum += e;
                }
                (true, false) => {
                    d.fp.push(j);
                    d.fp_expsum += e;
                }
                (false, false) => {
                    d.tn.push(j);
                    d.tn_expsum += e;
                }
                (false, true) => {
                    d.fn_.push(j);
                    d.fn_expsum += e;
                }
            }
        }
        out.push(d);
    }
    out
}

/// Verdict for one anchor row of [`verify_bound`].
#[derive(Debug, Clone)]
pub struct RowBoundReport {
    /// All four pair sets non-empty, min TP score > max TN score, and
    /// min FN score > max FP score.
    pub premise_holds: bool,
    /// Cross-product check: sum_TP e^s * sum_FN e^s vs sum_TN e^s * sum_FP e^s.
    pub cross_lhs: f64,
    pub cross_rhs: f64,
    pub cross_holds: bool,
    /// Lower-bound check: the row's actual relation-contrastive loss vs
    /// log(1 + sum_TN e^s / sum_TP e^s).
    pub lhs: f64,
    pub rhs: f64,
    pub bound_holds: bool,
    /// Both checks together.
    pub inequality_holds: bool,
}

/// Evaluates the loss lower bound and the cross-product inequality row by
/// row. Rows that fail the premise carry `premise_holds = false` and no
/// asserted inequality.
pub fn verify_bound(batch: &ContrastBatch, truth: &Mask) -> Vec<RowBoundReport> {
    let decomp = decompose_terms(batch, truth);
    let per_row_loss = relcon_row_losses(batch);
    let mut out = Vec::with_capacity(decomp.len());
    for (i, (d, loss)) in decomp.iter().zip(per_row_loss).enumerate() {
        let row = batch.logits.row(i);
        let set_min = |set: &[usize]| set.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min);
        let set_max = |set: &[usize]| set.iter().map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        let nonempty =
            !d.tp.is_empty() && !d.fp.is_empty() && !d.tn.is_empty() && !d.fn_.is_empty();
        let premise_holds = nonempty
            && set_min(&d.tp) > set_max(&d.tn)
            && set_min(&d.fn_) > set_max(&d.fp);
        let cross_lhs = d.tp_expsum * d.fn_expsum;
        let cross_rhs = d.tn_expsum * d.fp_expsum;
        let cross_holds = cross_lhs > cross_rhs;
        let rhs = if d.tp_expsum > 0.0 {
            (d.tn_expsum / d.tp_expsum).ln_1p()
        } else {
            f64::INFINITY
        };
        let bound_holds = loss > rhs;
        out.push(RowBoundReport {
            premise_holds,
            cross_lhs,
            cross_rhs,
            cross_holds,
            lhs: loss,
            rhs,
            bound_holds,
            inequality_holds: cross_holds && bound_holds,
        });
    }
    out
}

/// Per-row relation-contrastive loss values (no batch mean, no gradient).
fn relcon_row_losses(batch: &ContrastBatch) -> Vec<f64> {
    (0..batch.logits.rows())
        .map(|i| {
            let row = batch.logits.row(i);
            let mask = batch.labels.row(i);
            match (
                masked_lse(row, mask, 0, 1.0),
                masked_lse(row, mask, 1, -1.0),
            ) {
                (Some(a), Some(b)) => softplus(a + b),
                _ => 0.0,
            }
        })
        .collect()
}

/// Sampling regime for random single-anchor bound instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundInstanceKind {
    /// Score-ordering premise holds and set sizes satisfy |TP| >= |TN| and
    /// |FN| >= |FP|. In this regime both the cross-product inequality and
    /// the loss lower bound are provable, so they must hold on every draw.
    PremiseBalanced,
    /// Score-ordering premise holds; set sizes unconstrained. The loss lower
    /// bound still always holds, but the cross-product inequality can fail
    /// when the disadvantaged sets are much larger.
    Premise,
    /// Premise deliberately broken: either one set is empty or the score
    /// ordering is violated.
    Violating,
}

/// Draws a single-row instance (scaled logits, predicted mask, truth mask)
/// for bound verification. Deterministic given the stream.
pub fn random_bound_instance(kind: BoundInstanceKind, rng: &mut RngStream) -> (ContrastBatch, Mask) {
    let size = |rng: &mut RngStream| 1 + rng.below(6);
    let (n_tp, n_tn, n_fn, n_fp) = match kind {
        BoundInstanceKind::PremiseBalanced => {
            let n_tn = size(rng);
            let n_tp = n_tn + rng.below(4);
            let n_fp = size(rng);
            let n_fn = n_fp + rng.below(4);
            (n_tp, n_tn, n_fn, n_fp)
        }
        _ => (size(rng), size(rng), size(rng), size(rng)),
    };

    let base_tn = rng.uniform(-2.0, 0.5);
    let gap_tp = rng.uniform(0.05, 1.5);
    let base_fp = rng.uniform(-2.0, 0.5);
    let gap_fn = rng.uniform(0.05, 1.5);
    let band = |rng: &mut RngStream, lo: f64| lo + rng.next_f64();

    let mut tp: Vec<f64> = (0..n_tp).map(|_| band(rng, base_tn + gap_tp)).collect();
    let tn: Vec<f64> = (0..n_tn).map(|_| band(rng, base_tn - 1.0)).collect();
    let fn_: Vec<f64> = (0..n_fn).map(|_| band(rng, base_fp + gap_fn)).collect();
    let mut fp: Vec<f64> = (0..n_fp).map(|_| band(rng, base_fp - 1.0)).collect();

    if kind == BoundInstanceKind::Violating {
        match rng.below(3) {
            0 => tp.clear(), // empty set
            1 => {
                // push one TP score strictly below an existing TN score
                let below = tn.iter().cloned().fold(f64::INFINITY, f64::min) - 0.1;
                tp[0] = below;
            }
            _ => {
                // push one FP score strictly above an existing FN score
                let above = fn_.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.1;
                fp[0] = above;
            }
        }
    }

    let k = tp.len() + tn.len() + fn_.len() + fp.len();
    let mut entries: Vec<(f64, bool, bool)> = Vec::with_capacity(k);
    entries.extend(tp.iter().map(|&s| (s, true, true)));
    entries.extend(fp.iter().map(|&s| (s, true, false)));
    entries.extend(tn.iter().map(|&s| (s, false, false)));
    entries.extend(fn_.iter().map(|&s| (s, false, true)));
    rng.shuffle(&mut entries);

    let mut logits = Matrix::zeros(1, k);
    let mut labels = Mask::zeros(1, k);
    let mut truth = Mask::zeros(1, k);
    for (j, &(s, predicted, is_true)) in entries.iter().enumerate() {
        logits.set(0, j, s);
        labels.set(0, j, predicted);
        truth.set(0, j, is_true);
    }
    (ContrastBatch::new(logits, labels, 1.0), truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_from(rows: &[Vec<f64>], positives: &[Vec<usize>], tau: f64) -> ContrastBatch {
        let logits = Matrix::from_rows(rows);
        let mut labels = Mask::zeros(logits.rows(), logits.cols());
        for (i, ps) in positives.iter().enumerate() {
            for &j in ps {
                labels.set(i, j, true);
            }
        }
        ContrastBatch::new(logits, labels, tau)
    }

    fn random_batch(rng: &mut RngStream, n: usize, k: usize, pos_per_row: Option<usize>) -> ContrastBatch {
        let mut logits = Matrix::zeros(n, k);
        rng.fill_normal(&mut logits, 2.0);
        let mut labels = Mask::zeros(n, k);
        for i in 0..n {
            match pos_per_row {
                Some(p) => {
                    let mut cols: Vec<usize> = (0..k).collect();
                    rng.shuffle(&mut cols);
                    for &j in cols.iter().take(p) {
                        labels.set(i, j, true);
                    }
                }
                None => {
                    for j in 0..k {
                        labels.set(i, j, rng.next_f64() < 0.3);
                    }
                }
            }
        }
        ContrastBatch::new(logits, labels, 0.2)
    }

    #[test]
    fn nce_with_no_negatives_is_zero() {
        let b = batch_from(&[vec![1.7]], &[vec![0]], 0.2);
        let out = nce_loss(&b);
        assert_eq!(out.value, 0.0);
        assert!(out.grad_logits.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn nce_symmetric_pair_is_log_two() {
        let b = batch_from(&[vec![0.0, 0.0]], &[vec![0]], 1.0);
        let out = nce_loss(&b);
        assert!((out.value - 2.0f64.ln()).abs() < 1e-15);
    }

    /// Softmax cross-entropy route: -log(exp(s_p) / sum_j exp(s_j)).
    fn softmax_ce_oracle(b: &ContrastBatch) -> f64 {
        let mut total = 0.0;
        for i in 0..b.logits.rows() {
            let row = b.logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|&s| (s - max).exp()).sum();
            let pos = (0..row.len()).find(|&j| b.labels.get(i, j)).unwrap();
            total += -((row[pos] - max).exp() / denom).ln();
        }
        total / b.logits.rows() as f64
    }

    #[test]
    fn nce_matches_softmax_cross_entropy_rearrangement() {
        let mut rng = RngStream::from_seed(1);
        for _ in 0..50 {
            let (n, k) = (1 + rng.below(6), 2 + rng.below(12));
            let b = random_batch(&mut rng, n, k, Some(1));
            let out = nce_loss(&b);
            assert!((out.value - softmax_ce_oracle(&b)).abs() <= 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "exactly one positive")]
    fn nce_rejects_multi_positive_rows() {
        let b = batch_from(&[vec![0.0, 1.0, 2.0]], &[vec![0, 1]], 1.0);
        nce_loss(&b);
    }

    #[test]
    fn relcon_all_positive_row_is_zero() {
        let b = batch_from(&[vec![0.3, -0.7]], &[vec![0, 1]], 1.0);
        let out = relcon_loss(&b);
        assert_eq!(out.value, 0.0);
        assert!(out.grad_logits.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn relcon_zero_positive_row_is_zero_with_zero_gradient() {
        let b = batch_from(&[vec![0.3, -0.7, 2.0]], &[vec![]], 1.0);
        let out = relcon_loss(&b);
        assert_eq!(out.value, 0.0);
        assert!(out.grad_logits.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn relcon_reduces_to_nce_with_one_positive() {
        let mut rng = RngStream::from_seed(2);
        for _ in 0..200 {
            let (n, k) = (1 + rng.below(8), 2 + rng.below(16));
            let b = random_batch(&mut rng, n, k, Some(1));
            let r = relcon_loss(&b);
            let n = nce_loss(&b);
            assert!((r.value - n.value).abs() <= 1e-12);
            assert!(r.grad_logits.max_abs_diff(&n.grad_logits) <= 1e-12);
        }
    }

    /// Direct non-log-space evaluation of log(1 + sum(exp) * sum(exp(-))).
    fn relcon_naive(b: &ContrastBatch) -> f64 {
        let mut total = 0.0;
        for i in 0..b.logits.rows() {
            let mut a = 0.0;
            let mut bb = 0.0;
            for j in 0..b.logits.cols() {
                if b.labels.get(i, j) {
                    bb += (-b.logits.get(i, j)).exp();
                } else {
                    a += b.logits.get(i, j).exp();
                }
            }
            total += (a * bb).ln_1p();
        }
        total / b.logits.rows() as f64
    }

    #[test]
    fn relcon_two_pos_two_neg_hand_case() {
        let b = batch_from(&[vec![1.0, 0.5, 0.2, -0.3]], &[vec![0, 1]], 1.0);
        let out = relcon_loss(&b);
        let want = (1.0 + (0.2f64.exp() + (-0.3f64).exp()) * ((-1.0f64).exp() + (-0.5f64).exp())).ln();
        assert!((out.value - want).abs() <= 1e-15);
        assert!((out.value - relcon_naive(&b)).abs() <= 1e-15);
    }

    #[test]
    fn relcon_matches_naive_form_on_random_batches() {
        let mut rng = RngStream::from_seed(3);
        for _ in 0..50 {
            let (n, k) = (1 + rng.below(6), 2 + rng.below(16));
            let b = random_batch(&mut rng, n, k, None);
            let out = relcon_loss(&b);
            assert!((out.value - relcon_naive(&b)).abs() <= 1e-12);
            assert!(out.value >= 0.0);
        }
    }

    #[test]
    fn relcon_survives_extreme_logits() {
        let b = batch_from(&[vec![500.0, -500.0, 400.0]], &[vec![1]], 1.0);
        let out = relcon_loss(&b);
        assert!(out.value.is_finite());
        assert!(out.grad_logits.is_finite());
        // The naive route overflows here.
        assert!(!relcon_naive(&b).is_finite());
    }

    #[test]
    fn relcon_gradient_matches_finite_differences() {
        let mut rng = RngStream::from_seed(4);
        let h = 1e-6;
        for trial in 0..50 {
            let pos = match trial % 3 {
                0 => Some(0),
                1 => Some(1),
                _ => None,
            };
            let (n, k) = (1 + rng.below(4), 2 + rng.below(8));
            let b = random_batch(&mut rng, n, k, pos);
            let out = relcon_loss(&b);
            for i in 0..b.logits.rows() {
                for j in 0..b.logits.cols() {
                    let mut plus = b.clone();
                    plus.logits.set(i, j, b.logits.get(i, j) + h);
                    let mut minus = b.clone();
                    minus.logits.set(i, j, b.logits.get(i, j) - h);
                    let fd = (relcon_loss(&plus).value - relcon_loss(&minus).value) / (2.0 * h);
                    let an = out.grad_logits.get(i, j);
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
                    assert!(rel < 1e-8, "grad mismatch at ({i},{j}): fd={fd}, an={an}");
                }
            }
        }
    }

    #[test]
    fn relcon_gradient_signs_follow_monotonicity() {
        let mut rng = RngStream::from_seed(5);
        for _ in 0..20 {
            let b = random_batch(&mut rng, 4, 10, Some(3));
            let out = relcon_loss(&b);
            for i in 0..b.logits.rows() {
                for j in 0..b.logits.cols() {
                    let g = out.grad_logits.get(i, j);
                    if b.labels.get(i, j) {
                        assert!(g < 0.0, "positive logit must pull loss down");
                    } else {
                        assert!(g > 0.0, "negative logit must push loss up");
                    }
                }
            }
        }
    }

    #[test]
    fn decompose_perfect_relations_have_no_false_sets() {
        let mut rng = RngStream::from_seed(6);
        let b = random_batch(&mut rng, 3, 8, None);
        let truth = b.labels.clone();
        for d in decompose_terms(&b, &truth) {
            assert!(d.fp.is_empty());
            assert!(d.fn_.is_empty());
        }
    }

    #[test]
    fn decompose_all_negative_prediction_under_all_positive_truth() {
        let b = batch_from(&[vec![0.1, 0.2, 0.3]], &[vec![]], 1.0);
        let mut truth = Mask::zeros(1, 3);
        for j in 0..3 {
            truth.set(0, j, true);
        }
        let d = &decompose_terms(&b, &truth)[0];
        assert_eq!(d.fn_.len(), 3);
        assert!(d.tp.is_empty() && d.fp.is_empty() && d.tn.is_empty());
    }

    #[test]
    fn decompose_matches_enumeration_oracle() {
        let mut rng = RngStream::from_seed(7);
        for _ in 0..20 {
            let b = random_batch(&mut rng, 1, 8, None);
            let mut truth = Mask::zeros(1, 8);
            for j in 0..8 {
                truth.set(0, j, rng.next_f64() < 0.5);
            }
            let d = &decompose_terms(&b, &truth)[0];
            let mut want_tp = Vec::new();
            let mut want_fp = Vec::new();
            let mut want_tn = Vec::new();
            let mut want_fn = Vec::new();
            let mut sums = [0.0f64; 4];
            for j in 0..8 {
                let e = b.logits.get(0, j).exp();
                match (b.labels.get(0, j), truth.get(0, j)) {
                    (true, true) => {
                        want_tp.push(j);
                        sums[0] += e;
                    }
                    (true, false) => {
                        want_fp.push(j);
                        sums[1] += e;
                    }
                    (false, false) => {
                        want_tn.push(j);
                        sums[2] += e;
                    }
                    (false, true) => {
                        want_fn.push(j);
                        sums[3] += e;
                    }
                }
            }
            assert_eq!(d.tp, want_tp);
            assert_eq!(d.fp, want_fp);
            assert_eq!(d.tn, want_tn);
            assert_eq!(d.fn_, want_fn);
            assert!((d.tp_expsum - sums[0]).abs() <= 1e-12);
            assert!((d.fp_expsum - sums[1]).abs() <= 1e-12);
            assert!((d.tn_expsum - sums[2]).abs() <= 1e-12);
            assert!((d.fn_expsum - sums[3]).abs() <= 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "truth mask")]
    fn decompose_rejects_shape_mismatch() {
        let b = batch_from(&[vec![0.0, 1.0]], &[vec![0]], 1.0);
        let truth = Mask::zeros(1, 3);
        decompose_terms(&b, &truth);
    }

    #[test]
    fn bound_singleton_hand_instance() {
        // Scores: TP=2.0, TN=1.0, FN=0.5, FP=0.0.
        let logits = Matrix::from_rows(&[vec![2.0, 1.0, 0.5, 0.0]]);
        let mut labels = Mask::zeros(1, 4);
        labels.set(0, 0, true); // predicted positive, true
        labels.set(0, 3, true); // predicted positive, false
        let mut truth = Mask::zeros(1, 4);
        truth.set(0, 0, true);
        truth.set(0, 2, true);
        let b = ContrastBatch::new(logits, labels, 1.0);
        let report = &verify_bound(&b, &truth)[0];
        assert!(report.premise_holds);
        assert!((report.cross_lhs - (2.0f64.exp() * 0.5f64.exp())).abs() < 1e-12);
        assert!((report.cross_rhs - (1.0f64.exp() * 1.0)).abs() < 1e-12);
        assert!(report.cross_holds);
        assert!(report.bound_holds);
        assert!(report.inequality_holds);
    }

    #[test]
    fn bound_premise_is_vacuous_with_empty_set() {
        // No false positives anywhere: premise cannot hold.
        let logits = Matrix::from_rows(&[vec![2.0, 1.0, 0.5]]);
        let mut labels = Mask::zeros(1, 3);
        labels.set(0, 0, true);
        let mut truth = Mask::zeros(1, 3);
        truth.set(0, 0, true);
        truth.set(0, 2, true);
        let b = ContrastBatch::new(logits, labels, 1.0);
        assert!(!verify_bound(&b, &truth)[0].premise_holds);
    }

    #[test]
    fn bound_holds_on_balanced_premise_instances() {
        let mut rng = RngStream::from_seed(8);
        for _ in 0..500 {
            let (b, truth) = random_bound_instance(BoundInstanceKind::PremiseBalanced, &mut rng);
            let r = &verify_bound(&b, &truth)[0];
            assert!(r.premise_holds, "generator must satisfy the premise");
            assert!(r.inequality_holds, "lhs={} rhs={} cross={}/{}", r.lhs, r.rhs, r.cross_lhs, r.cross_rhs);
        }
    }

    #[test]
    fn loss_lower_bound_holds_even_without_cardinality_balance() {
        let mut rng = RngStream::from_seed(9);
        for _ in 0..500 {
            let (b, truth) = random_bound_instance(BoundInstanceKind::Premise, &mut rng);
            let r = &verify_bound(&b, &truth)[0];
            assert!(r.premise_holds);
            assert!(r.bound_holds, "lhs={} rhs={}", r.lhs, r.rhs);
        }
    }

    #[test]
    fn violating_instances_fail_the_premise() {
        let mut rng = RngStream::from_seed(10);
        for _ in 0..500 {
            let (b, truth) = random_bound_instance(BoundInstanceKind::Violating, &mut rng);
            assert!(!verify_bound(&b, &truth)[0].premise_holds);
        }
    }

    #[test]
    fn cross_product_needs_cardinality_balance() {
        // min TP > max TN and min FN > max FP, yet the cross-product check
        // fails because the outnumbered sets cannot compensate: one TP at
        // 1.0001 against eight TNs at 1.0, one FN at 0.5001 against eight
        // FPs at 0.5.
        let mut row = vec![1.0001, 0.5001];
        row.extend(std::iter::repeat(1.0).take(8));
        row.extend(std::iter::repeat(0.5).take(8));
        let logits = Matrix::from_rows(&[row]);
        let mut labels = Mask::zeros(1, 18);
        let mut truth = Mask::zeros(1, 18);
        labels.set(0, 0, true); // TP
        truth.set(0, 0, true);
        truth.set(0, 1, true); // FN
        for j in 10..18 {
            labels.set(0, j, true); // FPs
        }
        let b = ContrastBatch::new(logits, labels, 1.0);
        let r = &verify_bound(&b, &truth)[0];
        assert!(r.premise_holds);
        assert!(!r.cross_holds);
        assert!(r.bound_holds, "the loss lower bound is unconditional");
    }
}
