//! MLP encoders with projection heads: manual forward/backward passes,
//! SGD with momentum, and the mean-teacher (momentum encoder) update.
//!
//! The forward pass is `x -> [linear -> relu]* -> linear -> row-normalize`,
//! so embeddings live on the unit sphere. The backward pass carries the full
//! normalization Jacobian `(I - z z^T)/||v||`; treating the norm as a
//! constant fails finite-difference checks.

use crate::numerics::{
    l2_normalize_rows, matmul, matmul_transa, matmul_transb, norm, Matrix, RngStream, NORM_EPS,
};

/// Feed-forward encoder. `layer_dims` runs input -> hidden... -> embed_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Activation record produced by [`MlpEncoder::forward`] and consumed by
/// [`MlpEncoder::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_dims: Vec<usize>,
    /// Input to each layer: inputs[0] = x, inputs[l] = relu output of layer l-1.
    inputs: Vec<Matrix>,
    /// Pre-normalization embedding (last layer affine output).
    prenorm: Matrix,
    /// Row norms of `prenorm`.
    norms: Vec<f64>,
    /// Rows whose prenorm norm fell below the epsilon (left unnormalized).
    pub degenerate: Vec<bool>,
}

/// Per-parameter gradients, shaped like the encoder.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(enc: &MlpEncoder) -> Self {
        Gradients {
            d_weights: enc
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            d_biases: enc.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// SGD with momentum and weight decay: v <- mu*v + g + wd*w; w <- w - lr*v.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    vel_weights: Vec<Matrix>,
    vel_biases: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, enc: &MlpEncoder) -> Self {
        assert!(lr > 0.0, "lr must be positive");
        assert!((0.0..1.0).contains(&momentum), "momentum must be in [0,1)");
        assert!(weight_decay >= 0.0, "weight_decay must be >= 0");
        SgdState {
            lr,
            momentum,
            weight_decay,
            vel_weights: enc
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            vel_biases: enc.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

impl MlpEncoder {
    /// Xavier-uniform initialization, biases zero. Deterministic given the
    /// stream.
    pub fn init(layer_dims: &[usize], rng: &mut RngStream) -> Self {
        assert!(layer_dims.len() >= 2, "need at least input and output dims");
        assert!(layer_dims.iter().all(|&d| d > 0), "zero layer width");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_in, fan_out);
            for v in w.data_mut() {
                *v = rng.uniform(-bound, bound);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        MlpEncoder {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        }
    }

    pub fn from_parts(layer_dims: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Self {
        assert_eq!(weights.len(), layer_dims.len() - 1);
        assert_eq!(biases.len(), weights.len());
        for l in 0..weights.len() {
            assert_eq!(weights[l].rows(), layer_dims[l]);
            assert_eq!(weights[l].cols(), layer_dims[l + 1]);
            assert_eq!(biases[l].len(), layer_dims[l + 1]);
        }
        MlpEncoder {
            layer_dims,
            weights,
            biases,
        }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn embed_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Width of the features fed to the final projection layer; for a
    /// single-layer encoder this is the input itself.
    pub fn penultimate_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    fn affine(&self, l: usize, x: &Matrix) -> Matrix {
        let mut a = matmul(x, &self.weights[l]);
        let b = &self.biases[l];
        for i in 0..a.rows() {
            for (v, &bias) in a.row_mut(i).iter_mut().zip(b.iter()) {
                *v += bias;
            }
        }
        a
    }

    /// Full forward pass returning unit-norm embeddings and the activation
    /// record needed by [`MlpEncoder::backward`].
    pub fn forward(&self, x: &Matrix) -> (Matrix, ForwardCache) {
        assert_eq!(
            x.cols(),
            self.input_dim(),
            "input dim {} does not match encoder input {}",
            x.cols(),
            self.input_dim()
        );
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut h = x.clone();
        for l in 0..layers {
            inputs.push(h.clone());
            let mut a = self.affine(l, &h);
            if l + 1 < layers {
                for v in a.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h = a;
        }
        let prenorm = h;
        let norms: Vec<f64> = (0..prenorm.rows()).map(|i| norm(prenorm.row(i))).collect();
        let (z, degenerate) = l2_normalize_rows(&prenorm, NORM_EPS);
        let cache = ForwardCache {
            layer_dims: self.layer_dims.clone(),
            inputs,
            prenorm,
            norms,
            degenerate,
        };
        (z, cache)
    }

    /// Forward pass without building a cache (momentum encoders, probing).
    pub fn forward_nograd(&self, x: &Matrix) -> (Matrix, Vec<bool>) {
        assert_eq!(x.cols(), self.input_dim(), "input dim mismatch");
        let layers = self.num_layers();
        let mut h = x.clone();
        for l in 0..layers {
            let mut a = self.affine(l, &h);
            if l + 1 < layers {
                for v in a.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h = a;
        }
        l2_normalize_rows(&h, NORM_EPS)
    }

    /// Features entering the final projection layer (post-ReLU); these are
    /// what the linear probe trains on.
    pub fn penultimate(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.input_dim(), "input dim mismatch");
        let layers = self.num_layers();
        let mut h = x.clone();
        for l in 0..layers - 1 {
            let mut a = self.affine(l, &h);
            for v in a.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            h = a;
        }
        h
    }

    /// Backpropagates `dL/dz` through the normalization and every layer.
    pub fn backward(&self, cache: &ForwardCache, d_z: &Matrix) -> Gradients {
        assert_eq!(
            cache.layer_dims, self.layer_dims,
            "cache was built by a different architecture"
        );
        let n = cache.prenorm.rows();
        assert_eq!(
            (d_z.rows(), d_z.cols()),
            (n, self.embed_dim()),
            "dL/dz shape {}x{} does not match embeddings {}x{}",
            d_z.rows(),
            d_z.cols(),
            n,
            self.embed_dim()
        );

        // Through row normalization: dv = (g - z (z.g)) / ||v||.
        let mut d_a = Matrix::zeros(n, self.embed_dim());
        for i in 0..n {
            let g = d_z.row(i);
            if cache.degenerate[i] {
                d_a.row_mut(i).copy_from_slice(g);
                continue;
            }
            let nv = cache.norms[i];
            let v = cache.prenorm.row(i);
            let zg: f64 = v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / nv;
            let out = d_a.row_mut(i);
            for j in 0..out.len() {
                let zj = v[j] / nv;
                out[j] = (g[j] - zj * zg) / nv;
            }
        }

        let layers = self.num_layers();
        let mut d_weights = vec![Matrix::zeros(0, 0); layers];
        let mut d_biases = vec![Vec::new(); layers];
        for l in (0..layers).rev() {
            let h = &cache.inputs[l];
            d_weights[l] = matmul_transa(h, &d_a);
            let mut db = vec![0.0; d_a.cols()];
            for i in 0..d_a.rows() {
                for (s, &v) in db.iter_mut().zip(d_a.row(i)) {
                    *s += v;
                }
            }
            d_biases[l] = db;
            if l > 0 {
                let mut d_h = matmul_transb(&d_a, &self.weights[l]);
                // ReLU gate: the layer input h is the ReLU output, so h > 0
                // marks the active units.
                for (dv, &hv) in d_h.data_mut().iter_mut().zip(h.data().iter()) {
                    if hv <= 0.0 {
                        *dv = 0.0;
                    }
                }
                d_a = d_h;
            }
        }
        Gradients {
            d_weights,
            d_biases,
        }
    }

    /// One SGD step in place.
    pub fn sgd_step(&mut self, grads: &Gradients, state: &mut SgdState) {
        assert_eq!(grads.d_weights.len(), self.weights.len(), "gradient layer count mismatch");
        for l in 0..self.weights.len() {
            let w = &mut self.weights[l];
            let v = &mut state.vel_weights[l];
            let g = &grads.d_weights[l];
            assert_eq!((g.rows(), g.cols()), (w.rows(), w.cols()), "gradient shape mismatch");
            for ((vv, &gv), wv) in v
                .data_mut()
                .iter_mut()
                .zip(g.data().iter())
                .zip(w.data().iter())
            {
                *vv = state.momentum * *vv + gv + state.weight_decay * *wv;
            }
            for (wv, &vv) in w.data_mut().iter_mut().zip(v.data().iter()) {
                *wv -= state.lr * vv;
            }
            let b = &mut self.biases[l];
            let vb = &mut state.vel_biases[l];
            let gb = &grads.d_biases[l];
            for i in 0..b.len() {
                vb[i] = state.momentum * vb[i] + gb[i] + state.weight_decay * b[i];
                b[i] -= state.lr * vb[i];
            }
        }
    }

    /// Serializes parameters as named matrices (`{prefix}w{l}` / `{prefix}b{l}`).
    pub fn to_named_matrices(&self, prefix: &str) -> Vec<(String, Matrix)> {
        let mut out = Vec::new();
        for l in 0..self.num_layers() {
            out.push((format!("{prefix}w{l}"), self.weights[l].clone()));
            out.push((
                format!("{prefix}b{l}"),
                Matrix::from_vec(1, self.biases[l].len(), self.biases[l].clone()),
            ));
        }
        out
    }
}

/// EMA update: every parameter of `target` <- m*target + (1-m)*online.
/// Panics if the architectures differ.
pub fn mean_teacher_update(online: &MlpEncoder, target: &mut MlpEncoder, m: f64) {
    assert!((0.0..=1.0).contains(&m), "momentum must be in [0,1]");
    assert_eq!(
        online.layer_dims, target.layer_dims,
        "mean-teacher architecture mismatch: {:?} vs {:?}",
        online.layer_dims, target.layer_dims
    );
    for l in 0..online.weights.len() {
        for (t, &o) in target.weights[l]
            .data_mut()
            .iter_mut()
            .zip(online.weights[l].data().iter())
        {
            *t = m * *t + (1.0 - m) * o;
        }
        for (t, &o) in target.biases[l].iter_mut().zip(online.biases[l].iter()) {
            *t = m * *t + (1.0 - m) * o;
        }
    }
}

/// Cosine learning-rate schedule: base_lr * 0.5 * (1 + cos(pi*epoch/total)).
pub fn cosine_lr(epoch: usize, total: usize, base_lr: f64) -> f64 {
    assert!(epoch <= total, "epoch {epoch} past total {total}");
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos())
}
