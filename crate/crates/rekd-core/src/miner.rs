//! The relation miner: a momentum prototype bank over the embedding sphere
//! plus the connection step that turns shared prototype assignments into
//! per-pair positive/negative relation labels.

use crate::numerics::{cosine_sim, l2_normalize_rows, Mask, Matrix, RngStream, NORM_EPS};

/// Bank of M unit-norm prototype vectors with the confidence threshold
/// theta and the momentum floor beta.
#[derive(Debug, Clone)]
pub struct PrototypeBank {
    prototypes: Matrix,
    pub theta: f64,
    pub beta: f64,
}

/// Outcome of one momentum-update call, for invariant instrumentation.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    /// Number of anchors that actually updated a prototype.
    pub applied: usize,
    pub m_min: f64,
    pub m_max: f64,
}

impl PrototypeBank {
    pub fn new(prototypes: Matrix, theta: f64, beta: f64) -> Self {
        assert!(theta > 0.0 && theta <= 1.0, "theta must be in (0,1]");
        assert!(beta > 0.0 && beta < 1.0, "beta must be in (0,1)");
        let (prototypes, degenerate) = l2_normalize_rows(&prototypes, NORM_EPS);
        assert!(
            degenerate.iter().all(|&d| !d),
            "prototype rows must be non-degenerate"
        );
        PrototypeBank {
            prototypes,
            theta,
            beta,
        }
    }

    pub fn len(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.rows() == 0
    }

    pub fn embed_dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    /// Worst deviation of any prototype row norm from 1.
    pub fn max_norm_drift(&self) -> f64 {
        (0..self.prototypes.rows())
            .map(|k| (crate::numerics::norm(self.prototypes.row(k)) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Assigns each row of `e` to its most similar prototype. Returns -1
    /// when the best similarity falls below theta; the similarity itself is
    /// reported either way. Ties break toward the lowest index.
    pub fn assign(&self, e: &Matrix) -> (Vec<i64>, Vec<f64>) {
        let sims = cosine_sim(e, &self.prototypes);
        let mut idx = Vec::with_capacity(e.rows());
        let mut best_sim = Vec::with_capacity(e.rows());
        for i in 0..e.rows() {
            let row = sims.row(i);
            let mut best = 0usize;
            for (k, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = k;
                }
            }
            let s = row[best];
            idx.push(if s >= self.theta { best as i64 } else { -1 });
            best_sim.push(s);
        }
        (idx, best_sim)
    }

    /// Momentum update, Eq-style: for each anchor with assignment k != -1,
    /// m = 1 - (1-beta)*sim and p_k <- normalize((1-m)*z + m*p_k). Anchors
    /// sharing a prototype apply sequentially in batch order.
    pub fn update(&mut self, anchors: &Matrix, idx: &[i64], sim: &[f64]) -> UpdateStats {
        assert_eq!(anchors.rows(), idx.len(), "anchor/index length mismatch");
        assert_eq!(anchors.rows(), sim.len(), "anchor/sim length mismatch");
        let mut stats = UpdateStats {
            applied: 0,
            m_min: f64::INFINITY,
            m_max: f64::NEG_INFINITY,
        };
        for i in 0..anchors.rows() {
            let k = idx[i];
            if k < 0 {
                continue;
            }
            let k = k as usize;
            let m = 1.0 - (1.0 - self.beta) * sim[i];
            stats.applied += 1;
            stats.m_min = stats.m_min.min(m);
            stats.m_max = stats.m_max.max(m);
            let z = anchors.row(i);
            let p = self.prototypes.row_mut(k);
            let mut sq = 0.0;
            for (pv, &zv) in p.iter_mut().zip(z.iter()) {
                *pv = (1.0 - m) * zv + m * *pv;
                sq += *pv * *pv;
            }
            let n = sq.sqrt();
            if n >= NORM_EPS {
                for pv in p.iter_mut() {
                    *pv /= n;
                }
            }
        }
        if stats.applied == 0 {
            stats.m_min = f64::NAN;
            stats.m_max = f64::NAN;
        }
        stats
    }
}

/// Per-anchor semantic relation labels over a candidate snapshot.
#[derive(Debug, Clone)]
pub struct RelationLabels {
    /// N x L mask: 1 marks a semantic positive pair.
    pub labels: Mask,
    /// Each anchor's prototype assignment (-1 if unmatched).
    pub anchor_idx: Vec<i64>,
}

/// Connection step: candidate j is a positive for anchor i iff both carry
/// the same prototype assignment and neither is the outlier -1.
pub fn mine_relations(anchor_assign: &[i64], queue_idx: &[i64]) -> RelationLabels {
    let mut labels = Mask::zeros(anchor_assign.len(), queue_idx.len());
    for (i, &a) in anchor_assign.iter().enumerate() {
        if a < 0 {
            continue;
        }
        for (j, &q) in queue_idx.iter().enumerate() {
            if q == a {
                labels.set(i, j, true);
            }
        }
    }
    RelationLabels {
        labels,
        anchor_idx: anchor_assign.to_vec(),
    }
}

/// Spherical k-means: cosine-similarity assignment with unit-normalized
/// centroid recomputation and k-means++-style seeding on cosine distance.
/// Empty clusters are re-seeded from the point least covered by any
/// centroid. Deterministic given the stream.
pub fn spherical_kmeans(points: &Matrix, m: usize, iters: usize, rng: &mut RngStream) -> Matrix {
    assert!(m > 0, "need at least one centroid");
    assert!(
        points.rows() >= m,
        "spherical k-means needs at least {m} points, got {}",
        points.rows()
    );
    let n = points.rows();
    let dim = points.cols();

    // Seeding: first centroid uniform, then proportional to squared cosine
    // distance to the nearest chosen centroid.
    let mut centroid_rows: Vec<usize> = vec![rng.below(n)];
    let mut best_sim = vec![f64::NEG_INFINITY; n];
    while centroid_rows.len() < m {
        let last = points.row(*centroid_rows.last().unwrap());
        for i in 0..n {
            let s: f64 = points.row(i).iter().zip(last.iter()).map(|(a, b)| a * b).sum();
            if s > best_sim[i] {
                best_sim[i] = s;
            }
        }
        let weights: Vec<f64> = best_sim
            .iter()
            .map(|&s| {
                let d = (1.0 - s).max(0.0);
                d * d
            })
            .collect();
        centroid_rows.push(rng.weighted_index(&weights));
    }
    let mut centroids = points.select_rows(&centroid_rows);

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..iters {
        let sims = cosine_sim(points, &centroids);
        let mut changed = false;
        for i in 0..n {
            let row = sims.row(i);
            let mut best = 0usize;
            for (k, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = k;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let mut sums = Matrix::zeros(m, dim);
        let mut counts = vec![0usize; m];
        for i in 0..n {
            let k = assignment[i];
            counts[k] += 1;
            let srow = sums.row_mut(k);
            for (s, &v) in srow.iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let (normed, degenerate) = l2_normalize_rows(&sums, NORM_EPS);
        for k in 0..m {
            if counts[k] > 0 && !degenerate[k] {
                centroids.set_row(k, normed.row(k));
            }
            // degenerate mean (antipodal cancellation): keep the old centroid
        }

        // Re-seed empties from the worst-covered point.
        let empties: Vec<usize> = (0..m).filter(|&k| counts[k] == 0).collect();
        if !empties.is_empty() {
            let sims = cosine_sim(points, &centroids);
            for k in empties {
                let mut worst = 0usize;
                let mut worst_cover = f64::INFINITY;
                for i in 0..n {
                    let cover = sims.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    if cover < worst_cover {
                        worst_cover = cover;
                        worst = i;
                    }
                }
                centroids.set_row(k, points.row(worst));
            }
        }
    }
    centroids
}

/// Sum over points of the best cosine similarity to any centroid; the
/// quantity spherical k-means ascends.
pub fn kmeans_objective(points: &Matrix, centroids: &Matrix) -> f64 {
    let sims = cosine_sim(points, centroids);
    (0..points.rows())
        .map(|i| sims.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .sum()
}
