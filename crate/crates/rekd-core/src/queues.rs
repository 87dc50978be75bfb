//! Fixed-capacity FIFO candidate set: momentum-encoder embeddings plus the
//! prototype index each was assigned at enqueue time.

use crate::numerics::Matrix;

/// Ring buffer of L unit-norm embeddings with per-entry prototype indices
/// (-1 marks outliers and unfilled slots).
#[derive(Debug, Clone)]
pub struct CandidateQueue {
    capacity: usize,
    features: Matrix,
    proto_idx: Vec<i64>,
    cursor: usize,
    filled: usize,
}

impl CandidateQueue {
    pub fn new(capacity: usize, embed_dim: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        CandidateQueue {
            capacity,
            features: Matrix::zeros(capacity, embed_dim),
            proto_idx: vec![-1; capacity],
            cursor: 0,
            filled: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn embed_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.capacity
    }

    /// Overwrites the oldest entries with a new batch, ring-buffer style.
    /// Panics if the batch exceeds the capacity.
    pub fn enqueue_dequeue(&mut self, feats: &Matrix, idxs: &[i64]) {
        let batch = feats.rows();
        assert_eq!(batch, idxs.len(), "feature/index batch length mismatch");
        assert_eq!(feats.cols(), self.features.cols(), "embed dim mismatch");
        assert!(
            batch <= self.capacity,
            "batch of {batch} exceeds queue capacity {}",
            self.capacity
        );
        for b in 0..batch {
            self.features.set_row(self.cursor, feats.row(b));
            self.proto_idx[self.cursor] = idxs[b];
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        self.filled = (self.filled + batch).min(self.capacity);
    }

    /// Immutable copy of the filled region, oldest entry first.
    pub fn snapshot(&self) -> (Matrix, Vec<i64>) {
        let mut feats = Matrix::zeros(self.filled, self.features.cols());
        let mut idxs = Vec::with_capacity(self.filled);
        let start = if self.filled < self.capacity {
            0 // not yet wrapped: slot 0 is the oldest
        } else {
            self.cursor // full: the cursor points at the oldest entry
        };
        for k in 0..self.filled {
            let slot = (start + k) % self.capacity;
            feats.set_row(k, self.features.row(slot));
            idxs.push(self.proto_idx[slot]);
        }
        (feats, idxs)
    }

    /// Rewrites the prototype indices of the filled region, oldest-first
    /// order (used when the bank initializes after warm-up).
    pub fn assign_indices(&mut self, idxs: &[i64]) {
        assert_eq!(idxs.len(), self.filled, "index count must match filled region");
        let start = if self.filled < self.capacity { 0 } else { self.cursor };
        for (k, &idx) in idxs.iter().enumerate() {
            self.proto_idx[(start + k) % self.capacity] = idx;
        }
    }
}
