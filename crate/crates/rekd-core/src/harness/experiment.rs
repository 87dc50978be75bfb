//! File-level experiment driver: loads a config, runs a mode, writes
//! `records.csv`, `config.resolved.json`, checkpoints, and mode-specific
//! reports into the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::checkpoint::{write_checkpoint, CheckpointError};
use crate::losses::{random_bound_instance, verify_bound, BoundInstanceKind};
use crate::metrics::{similarity_histogram, PAIR_BUDGET};
use crate::miner::spherical_kmeans;
use crate::numerics::RngStream;
use crate::synth::{generate_mixture, LabeledDataset, SynthError};

use super::config::{RunMode, TrainConfig};
use super::train::{
    train_baseline_nce, train_rekd, train_supmoco, EncoderRole, EpochRecord, TrainResult,
    RECORDS_HEADER, SUB_BOUNDS, SUB_DATA,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("cannot read config file {path}: {source}")]
    ConfigRead {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}: {message}")]
    ConfigParse { path: String, message: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("data generation failed: {0}")]
    Data(#[from] SynthError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// CLI-level overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub purity: Option<f64>,
    pub tpn_cap: Option<usize>,
}

fn write_records(path: &Path, records: &[EpochRecord]) -> Result<(), ExperimentError> {
    let mut w = BufWriter::new(File::create(path)?);
    // Line-feed endings and `.` radix come from the plain formatter.
    writeln!(w, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_csv_row())?;
    }
    w.flush()?;
    Ok(())
}

fn write_similarity(
    path: &Path,
    encoder: &crate::encoder::MlpEncoder,
    data: &LabeledDataset,
    rng: &mut RngStream,
) -> Result<(), ExperimentError> {
    let (z, _) = encoder.forward_nograd(&data.points);
    let hist = similarity_histogram(&z, &data.labels, 50, PAIR_BUDGET, rng);
    hist.write_csv(path)?;
    Ok(())
}

fn write_run_outputs(
    out_dir: &Path,
    cfg: &TrainConfig,
    data: &LabeledDataset,
    result: &TrainResult,
) -> Result<(), ExperimentError> {
    write_records(&out_dir.join("records.csv"), &result.records)?;
    write_checkpoint(
        &out_dir.join("student.ckpt"),
        &result.student.to_named_matrices("student_"),
    )?;
    if let Some(teacher) = &result.teacher {
        write_checkpoint(&out_dir.join("teacher.ckpt"), &teacher.to_named_matrices("teacher_"))?;
    }
    if let Some(bank) = &result.bank {
        write_checkpoint(
            &out_dir.join("bank.ckpt"),
            &[("protobank".to_string(), bank.prototypes().clone())],
        )?;
    }
    let mut hist_rng = RngStream::from_seed(cfg.seed).substream(9);
    write_similarity(
        &out_dir.join("similarity_student.csv"),
        &result.student,
        data,
        &mut hist_rng,
    )?;
    if let Some(teacher) = &result.teacher {
        write_similarity(&out_dir.join("similarity_teacher.csv"), teacher, data, &mut hist_rng)?;
    }
    Ok(())
}

fn run_bounds(out_dir: &Path, cfg: &TrainConfig) -> Result<(), ExperimentError> {
    let mut rng = RngStream::from_seed(cfg.seed).substream(SUB_BOUNDS);
    let per_kind = 1000usize;
    let mut w = BufWriter::new(File::create(out_dir.join("bounds_report.csv"))?);
    writeln!(w, "kind,premise_holds,cross_holds,bound_holds,inequality_holds,lhs,rhs")?;

    let mut balanced_ok = 0usize;
    let mut violating_flagged = 0usize;
    let mut unconstrained_bound_ok = 0usize;
    for (kind, name) in [
        (BoundInstanceKind::PremiseBalanced, "premise_balanced"),
        (BoundInstanceKind::Premise, "premise_unconstrained"),
        (BoundInstanceKind::Violating, "violating"),
    ] {
        for _ in 0..per_kind {
            let (batch, truth) = random_bound_instance(kind, &mut rng);
            let r = &verify_bound(&batch, &truth)[0];
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                name, r.premise_holds, r.cross_holds, r.bound_holds, r.inequality_holds, r.lhs, r.rhs
            )?;
            match kind {
                BoundInstanceKind::PremiseBalanced => {
                    if r.premise_holds && r.inequality_holds {
                        balanced_ok += 1;
                    }
                }
                BoundInstanceKind::Premise => {
                    if r.premise_holds && r.bound_holds {
                        unconstrained_bound_ok += 1;
                    }
                }
                BoundInstanceKind::Violating => {
                    if !r.premise_holds {
                        violating_flagged += 1;
                    }
                }
            }
        }
    }
    w.flush()?;

    let summary = format!(
        "premise-satisfying (balanced sizes): inequality_holds on {balanced_ok}/{per_kind}\n\
         premise-satisfying (unconstrained sizes): loss lower bound holds on {unconstrained_bound_ok}/{per_kind}\n\
         premise-violating: premise flag false on {violating_flagged}/{per_kind}\n"
    );
    std::fs::write(out_dir.join("bounds_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn run_kmeans_demo(out_dir: &Path, cfg: &TrainConfig) -> Result<(), ExperimentError> {
    let root = RngStream::from_seed(cfg.seed);
    let data = generate_mixture(&cfg.mixture_spec, &mut root.substream(SUB_DATA))?;
    let mut km_rng = root.substream(5);
    let centroids = spherical_kmeans(
        &data.points,
        cfg.mixture_spec.num_classes,
        100,
        &mut km_rng,
    );
    let bank = crate::miner::PrototypeBank::new(centroids, cfg.theta, cfg.beta);
    let (pred, _) = bank.assign(&data.points);
    let truth: Vec<i64> = data.labels.iter().map(|&l| l as i64).collect();
    let ari = crate::metrics::ari(&pred, &truth);
    let nmi = crate::metrics::nmi(&pred, &truth);
    let acc = crate::metrics::cluster_acc(&pred, &truth);
    let summary = format!("kmeans demo: ari={ari} nmi={nmi} acc={acc}\n");
    std::fs::write(out_dir.join("kmeans_report.txt"), &summary)?;
    write_checkpoint(
        &out_dir.join("bank.ckpt"),
        &[("protobank".to_string(), bank.prototypes().clone())],
    )?;
    print!("{summary}");
    Ok(())
}

/// Loads the config, applies overrides, executes the mode, and writes all
/// artifacts into `out_dir` (created if missing).
pub fn run_experiment(
    cfg_path: &Path,
    out_dir: &Path,
    mode: RunMode,
    overrides: Overrides,
) -> Result<(), ExperimentError> {
    let mut cfg = TrainConfig::load(cfg_path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config.resolved.json"),
        serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n",
    )?;

    match mode {
        RunMode::Rekd => {
            let data = generate_mixture(&cfg.mixture_spec, &mut RngStream::from_seed(cfg.seed).substream(SUB_DATA))?;
            let result = train_rekd(&cfg, &data);
            write_run_outputs(out_dir, &cfg, &data, &result)?;
        }
        RunMode::Nce => {
            let data = generate_mixture(&cfg.mixture_spec, &mut RngStream::from_seed(cfg.seed).substream(SUB_DATA))?;
            let result = train_baseline_nce(&cfg, &data, EncoderRole::Student);
            write_run_outputs(out_dir, &cfg, &data, &result)?;
        }
        RunMode::Supmoco => {
            let purity = overrides.purity.unwrap_or(1.0);
            let tpn_cap = overrides.tpn_cap.unwrap_or(usize::MAX);
            if !(purity > 0.0 && purity <= 1.0) {
                return Err(ExperimentError::InvalidConfig(format!(
                    "purity must be in (0,1], got {purity}"
                )));
            }
            if tpn_cap == 0 {
                return Err(ExperimentError::InvalidConfig("tpn-cap must be >= 1".into()));
            }
            let data = generate_mixture(&cfg.mixture_spec, &mut RngStream::from_seed(cfg.seed).substream(SUB_DATA))?;
            let result = train_supmoco(&cfg, &data, purity, tpn_cap);
            std::fs::write(
                out_dir.join("supmoco.json"),
                format!("{{\"purity_target\": {purity}, \"tpn_cap\": {tpn_cap}}}\n"),
            )?;
            write_run_outputs(out_dir, &cfg, &data, &result)?;
        }
        RunMode::Bounds => run_bounds(out_dir, &cfg)?,
        RunMode::KmeansDemo => run_kmeans_demo(out_dir, &cfg)?,
    }
    Ok(())
}

