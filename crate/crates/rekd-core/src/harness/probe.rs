//! Linear-probe evaluation: freeze the encoder, train one affine + softmax
//! layer on the penultimate features, report held-out accuracy.

use crate::encoder::MlpEncoder;
use crate::numerics::{matmul, matmul_transa, Matrix, RngStream};
use crate::synth::LabeledDataset;

/// Trains a softmax classifier on frozen penultimate features with
/// full-batch SGD (momentum 0.9) and returns accuracy on a held-out 20%
/// split. Features are standardized with train-split statistics so the
/// probe learning rate transfers across encoders. Deterministic given the
/// stream.
pub fn linear_probe(
    encoder: &MlpEncoder,
    data: &LabeledDataset,
    probe_epochs: usize,
    probe_lr: f64,
    rng: &mut RngStream,
) -> f64 {
    assert!(probe_epochs > 0 && probe_lr > 0.0, "invalid probe settings");
    let n = data.len();
    assert!(n >= 5, "need at least 5 samples to split 80/20");
    let classes = data.num_classes;

    let features = encoder.penultimate(&data.points);
    let dim = features.cols();

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_train = ((n * 4) / 5).max(1);
    let (train_idx, test_idx) = order.split_at(n_train);

    // Standardize with train statistics.
    let mut mean = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    for &i in train_idx {
        for (m, &v) in mean.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_train as f64;
    }
    for &i in train_idx {
        for ((s, &v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|&s| (s / n_train as f64).sqrt().max(1e-8))
        .collect();
    let standardized = |i: usize| -> Vec<f64> {
        features
            .row(i)
            .iter()
            .zip(&mean)
            .zip(&std)
            .map(|((&v, m), s)| (v - m) / s)
            .collect()
    };

    let mut x_train = Matrix::zeros(n_train, dim);
    for (r, &i) in train_idx.iter().enumerate() {
        x_train.set_row(r, &standardized(i));
    }

    let mut w = Matrix::zeros(dim, classes);
    let mut b = vec![0.0; classes];
    let mut vel_w = Matrix::zeros(dim, classes);
    let mut vel_b = vec![0.0; classes];
    let momentum = 0.9;

    for _ in 0..probe_epochs {
        let mut logits = matmul(&x_train, &w);
        for r in 0..n_train {
            for (v, &bias) in logits.row_mut(r).iter_mut().zip(&b) {
                *v += bias;
            }
        }
        // Softmax rows, then grad = (p - onehot)/n.
        let mut grad_logits = logits;
        for (r, &i) in train_idx.iter().enumerate() {
            let row = grad_logits.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                denom += *v;
            }
            for v in row.iter_mut() {
                *v /= denom;
            }
            row[data.labels[i]] -= 1.0;
            for v in row.iter_mut() {
                *v /= n_train as f64;
            }
        }
        let d_w = matmul_transa(&x_train, &grad_logits);
        let mut d_b = vec![0.0; classes];
        for r in 0..n_train {
            for (s, &v) in d_b.iter_mut().zip(grad_logits.row(r)) {
                *s += v;
            }
        }
        for (vv, &gv) in vel_w.data_mut().iter_mut().zip(d_w.data()) {
            *vv = momentum * *vv + gv;
        }
        for (wv, &vv) in w.data_mut().iter_mut().zip(vel_w.data()) {
            *wv -= probe_lr * vv;
        }
        for c in 0..classes {
            vel_b[c] = momentum * vel_b[c] + d_b[c];
            b[c] -= probe_lr * vel_b[c];
        }
    }

    let mut correct = 0usize;
    for &i in test_idx {
        let f = standardized(i);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..classes {
            let mut s = b[c];
            for (j, &fv) in f.iter().enumerate() {
                s += fv * w.get(j, c);
            }
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        if best == data.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / test_idx.len() as f64
}
