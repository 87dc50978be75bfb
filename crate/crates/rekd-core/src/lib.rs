//! Desk-scale laboratory for relation-wise contrastive representation
//! learning: an online heterogeneous teacher mines semantic anchor-candidate
//! relations through a momentum prototype bank and transfers them to a
//! lightweight student via a relation contrastive loss.
//!
//! Module map:
//! - [`numerics`]: dense f64 matrices, masks, and the deterministic RNG.
//! - [`synth`]: labeled Gaussian-mixture data and two-view augmentation.
//! - [`encoder`]: MLP encoders with manual backprop, SGD, mean teacher.
//! - [`queues`]: FIFO candidate sets.
//! - [`miner`]: prototype bank, spherical k-means, relation mining.
//! - [`losses`]: NCE, relation contrastive loss, bound verification.
//! - [`metrics`]: relation quality, clustering agreement, prototype health.
//! - [`checkpoint`]: named-matrix binary persistence.
//! - [`harness`]: training loops, linear probe, experiment driver.

pub mod checkpoint;
pub mod encoder;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod miner;
pub mod numerics;
pub mod queues;
pub mod synth;
