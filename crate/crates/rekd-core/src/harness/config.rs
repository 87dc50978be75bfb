use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::synth::{AugmentSpec, MixtureSpec};

use super::experiment::ExperimentError;

/// Full experiment configuration. JSON keys are exactly these field names;
/// unknown keys are rejected so typos fail loudly. Every field has a
/// desk-scale default, so a config file only needs the overrides.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub embed_dim: usize,
    /// Hidden widths of the teacher MLP (input and embed dims are implied).
    pub teacher_dims: Vec<usize>,
    /// Hidden widths of the student MLP.
    pub student_dims: Vec<usize>,
    pub lr_teacher: f64,
    pub lr_student: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    pub mean_teacher_m: f64,
    pub tau: f64,
    pub queue_capacity: usize,
    pub num_prototypes: usize,
    pub theta: f64,
    pub beta: f64,
    pub warmup_epochs: usize,
    pub include_self_positive: bool,
    pub mixture_spec: MixtureSpec,
    pub augment_spec: AugmentSpec,
    pub probe_epochs: usize,
    pub probe_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            epochs: 50,
            batch_size: 128,
            embed_dim: 32,
            teacher_dims: vec![256, 256, 256],
            student_dims: vec![64, 64],
            lr_teacher: 0.1,
            lr_student: 0.1,
            sgd_momentum: 0.9,
            weight_decay: 1e-4,
            mean_teacher_m: 0.999,
            tau: 0.2,
            queue_capacity: 4096,
            num_prototypes: 50,
            theta: 0.8,
            beta: 0.8,
            warmup_epochs: 3,
            include_self_positive: true,
            mixture_spec: MixtureSpec {
                num_classes: 10,
                dim: 32,
                samples_per_class: 1000,
                class_sep: 0.5,
                within_std: 0.1,
            },
            augment_spec: AugmentSpec {
                noise_std: 0.1,
                dropout_prob: 0.1,
            },
            probe_epochs: 100,
            probe_lr: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.embed_dim == 0 {
            return fail("epochs, batch_size and embed_dim must be positive".into());
        }
        if self.queue_capacity < self.batch_size {
            return fail(format!(
                "queue_capacity {} must be >= batch_size {}",
                self.queue_capacity, self.batch_size
            ));
        }
        if self.num_prototypes == 0 {
            return fail("num_prototypes must be positive".into());
        }
        if self.lr_teacher <= 0.0 || self.lr_student <= 0.0 || self.probe_lr <= 0.0 {
            return fail("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return fail("sgd_momentum must be in [0,1)".into());
        }
        if self.weight_decay < 0.0 {
            return fail("weight_decay must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.mean_teacher_m) {
            return fail("mean_teacher_m must be in [0,1]".into());
        }
        if self.tau <= 0.0 {
            return fail("tau must be positive".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return fail("theta must be in (0,1]".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail("beta must be in (0,1)".into());
        }
        // A run that is all warm-up is allowed: it degenerates to the plain
        // NCE baseline and the prototype path never activates.
        if self.warmup_epochs > self.epochs {
            return fail(format!(
                "warmup_epochs {} must be <= epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.probe_epochs == 0 {
            return fail("probe_epochs must be positive".into());
        }
        self.mixture_spec
            .validate()
            .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        self.augment_spec
            .validate()
            .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Teacher layer dims: data dim -> hidden widths -> embed dim.
    pub fn teacher_layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.mixture_spec.dim];
        dims.extend_from_slice(&self.teacher_dims);
        dims.push(self.embed_dim);
        dims
    }

    pub fn student_layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.mixture_spec.dim];
        dims.extend_from_slice(&self.student_dims);
        dims.push(self.embed_dim);
        dims
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::ConfigRead {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|e| ExperimentError::ConfigParse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// What `run_experiment` should execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Rekd,
    Nce,
    Supmoco,
    Bounds,
    KmeansDemo,
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rekd" => Ok(RunMode::Rekd),
            "nce" => Ok(RunMode::Nce),
            "supmoco" => Ok(RunMode::Supmoco),
            "bounds" => Ok(RunMode::Bounds),
            "kmeans-demo" => Ok(RunMode::KmeansDemo),
            other => Err(format!(
                "unknown mode {other:?}; expected rekd|nce|supmoco|bounds|kmeans-demo"
            )),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RunMode::Rekd => "rekd",
            RunMode::Nce => "nce",
            RunMode::Supmoco => "supmoco",
            RunMode::Bounds => "bounds",
            RunMode::KmeansDemo => "kmeans-demo",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_fatal() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"lr_techer": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("lr_techer"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"seed": 7, "epochs": 5}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.tau, 0.2);
        assert_eq!(cfg.mean_teacher_m, 0.999);
    }

    #[test]
    fn warmup_equal_to_epochs_is_allowed_but_not_beyond() {
        let mut cfg = TrainConfig {
            epochs: 5,
            warmup_epochs: 5,
            ..TrainConfig::default()
        };
        cfg.validate().unwrap();
        cfg.warmup_epochs = 6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn layer_dims_wrap_hidden_widths() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.teacher_layer_dims(), vec![32, 256, 256, 256, 32]);
        assert_eq!(cfg.student_layer_dims(), vec![32, 64, 64, 32]);
    }

    #[test]
    fn mode_parsing_round_trips() {
        for mode in ["rekd", "nce", "supmoco", "bounds", "kmeans-demo"] {
            assert_eq!(mode.parse::<RunMode>().unwrap().to_string(), mode);
        }
        assert!("resnet".parse::<RunMode>().is_err());
    }
}
