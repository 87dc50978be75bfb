//! Training loops: the relation-distillation run (online heterogeneous
//! teacher + student), the one-positive NCE baseline, and the supervised
//! purity/positive-count control. The loops are deliberately label-blind:
//! ground-truth classes flow only into per-epoch diagnostics and the
//! supervised control, never into a gradient path of the self-supervised
//! runs.

use crate::encoder::{cosine_lr, mean_teacher_update, ForwardCache, MlpEncoder, SgdState};
use crate::losses::{nce_loss, relcon_loss, ContrastBatch};
use crate::metrics::{
    self, effective_rate, matching_distribution, relation_quality, UNDEFINED,
};
use crate::miner::{mine_relations, spherical_kmeans, PrototypeBank, RelationLabels};
use crate::numerics::{matmul, matmul_transb, Mask, Matrix, RngStream};
use crate::queues::CandidateQueue;
use crate::synth::{augment, LabeledDataset};

use super::config::TrainConfig;
use super::probe::linear_probe;

// Fixed substream roles so that runs sharing a seed consume identical draws
// for identical purposes, regardless of which mode is running.
pub(crate) const SUB_DATA: u64 = 0;
const SUB_SHUFFLE: u64 = 1;
const SUB_AUGMENT: u64 = 2;
const SUB_TEACHER_INIT: u64 = 3;
const SUB_STUDENT_INIT: u64 = 4;
const SUB_KMEANS: u64 = 5;
const SUB_PROBE: u64 = 6;
const SUB_CORRUPT: u64 = 7;
pub(crate) const SUB_BOUNDS: u64 = 8;

/// Which architecture/learning-rate pair a single-encoder run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderRole {
    Teacher,
    Student,
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_teacher: f64,
    pub loss_student: f64,
    pub effective_rate: f64,
    pub pn_mean: f64,
    pub tpn_mean: f64,
    pub purity: f64,
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
    pub match_entropy: f64,
    pub probe_acc: f64,
}

pub const RECORDS_HEADER: &str = "epoch,loss_teacher,loss_student,effective_rate,pn_mean,tpn_mean,purity,nmi,ari,acc,match_entropy,probe_acc";

impl EpochRecord {
    fn undefined(epoch: usize) -> Self {
        EpochRecord {
            epoch,
            loss_teacher: UNDEFINED,
            loss_student: UNDEFINED,
            effective_rate: UNDEFINED,
            pn_mean: UNDEFINED,
            tpn_mean: UNDEFINED,
            purity: UNDEFINED,
            nmi: UNDEFINED,
            ari: UNDEFINED,
            acc: UNDEFINED,
            match_entropy: UNDEFINED,
            probe_acc: UNDEFINED,
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.loss_teacher,
            self.loss_student,
            self.effective_rate,
            self.pn_mean,
            self.tpn_mean,
            self.purity,
            self.nmi,
            self.ari,
            self.acc,
            self.match_entropy,
            self.probe_acc
        )
    }
}

/// Run-level invariant instrumentation collected by every training loop.
#[derive(Debug, Clone)]
pub struct RunDiagnostics {
    /// Smallest / largest prototype momentum coefficient applied.
    pub m_min: f64,
    pub m_max: f64,
    pub prototype_updates: usize,
    /// Worst prototype norm deviation from 1 observed after any update.
    pub max_proto_norm_drift: f64,
    pub batches_skipped: usize,
    /// Teacher-queue effective rate right after prototype initialization.
    pub effective_rate_at_init: f64,
}

impl Default for RunDiagnostics {
    fn default() -> Self {
        RunDiagnostics {
            m_min: f64::INFINITY,
            m_max: f64::NEG_INFINITY,
            prototype_updates: 0,
            max_proto_norm_drift: 0.0,
            batches_skipped: 0,
            effective_rate_at_init: UNDEFINED,
        }
    }
}

/// Output of a training run. `student` is always the encoder of interest
/// (the single encoder for baseline runs); `teacher` and `bank` exist only
/// for the relation-distillation run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub student: MlpEncoder,
    pub teacher: Option<MlpEncoder>,
    pub bank: Option<PrototypeBank>,
    pub records: Vec<EpochRecord>,
    pub diag: RunDiagnostics,
}

/// Metrics-only mirror of a candidate queue holding the ground-truth class
/// of each stored embedding. Never read by a gradient path of the
/// self-supervised runs.
struct LabelRing {
    capacity: usize,
    data: Vec<usize>,
    cursor: usize,
    filled: usize,
}

impl LabelRing {
    fn new(capacity: usize) -> Self {
        LabelRing {
            capacity,
            data: vec![0; capacity],
            cursor: 0,
            filled: 0,
        }
    }

    fn push(&mut self, labels: &[usize]) {
        for &l in labels {
            self.data[self.cursor] = l;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        self.filled = (self.filled + labels.len()).min(self.capacity);
    }

    fn snapshot(&self) -> Vec<usize> {
        let start = if self.filled < self.capacity { 0 } else { self.cursor };
        (0..self.filled)
            .map(|k| self.data[(start + k) % self.capacity])
            .collect()
    }
}

/// One encoder pair (online + momentum) with its candidate queue and
/// optimizer state.
struct Arm {
    online: MlpEncoder,
    momentum: MlpEncoder,
    queue: CandidateQueue,
    sgd: SgdState,
    base_lr: f64,
}

impl Arm {
    fn new(layer_dims: &[usize], base_lr: f64, cfg: &TrainConfig, init_rng: &mut RngStream) -> Self {
        let online = MlpEncoder::init(layer_dims, init_rng);
        let momentum = online.clone();
        let sgd = SgdState::new(base_lr, cfg.sgd_momentum, cfg.weight_decay, &online);
        Arm {
            online,
            momentum,
            queue: CandidateQueue::new(cfg.queue_capacity, cfg.embed_dim),
            sgd,
            base_lr,
        }
    }
}

enum LossKind {
    /// One-positive NCE against the queue; the self key is the positive.
    Nce,
    /// Relation contrastive loss with the given queue mask.
    Relcon { queue_mask: Mask, self_positive: bool },
}

struct StepOutcome {
    loss: f64,
    /// Candidate-view embeddings to enqueue.
    k: Matrix,
}

/// Anchor/candidate forward passes, kept separate from the update so the
/// caller can veto a batch on degeneracy before any state mutates.
struct ForwardPair {
    q: Matrix,
    cache: ForwardCache,
    k: Matrix,
    degenerate_fraction: f64,
}

fn forward_pair(arm: &Arm, view_anchor: &Matrix, view_candidate: &Matrix) -> ForwardPair {
    let (q, cache) = arm.online.forward(view_anchor);
    let (k, k_deg) = arm.momentum.forward_nograd(view_candidate);
    let n = q.rows().max(1);
    let deg = cache.degenerate.iter().filter(|&&d| d).count()
        + k_deg.iter().filter(|&&d| d).count();
    ForwardPair {
        q,
        cache,
        k,
        degenerate_fraction: deg as f64 / (2 * n) as f64,
    }
}

/// Builds the scaled logits against the queue snapshot (plus the self-key
/// column), applies the loss, backpropagates into the online encoder, steps
/// SGD, and advances the momentum encoder. Returns the loss value; the
/// caller is responsible for enqueueing afterwards.
fn apply_loss_and_update(
    arm: &mut Arm,
    pair: ForwardPair,
    kind: &LossKind,
    cfg: &TrainConfig,
) -> StepOutcome {
    let n = pair.q.rows();
    let (queue_feats, _) = arm.queue.snapshot();
    let l = queue_feats.rows();
    let use_self = match kind {
        LossKind::Nce => true,
        LossKind::Relcon { self_positive, .. } => *self_positive,
    };
    let cols = l + use_self as usize;

    let mut logits = Matrix::zeros(n, cols);
    if l > 0 {
        let queue_logits = matmul_transb(&pair.q, &queue_feats);
        for i in 0..n {
            logits.row_mut(i)[..l].copy_from_slice(queue_logits.row(i));
        }
    }
    if use_self {
        for i in 0..n {
            let s: f64 = pair
                .q
                .row(i)
                .iter()
                .zip(pair.k.row(i))
                .map(|(a, b)| a * b)
                .sum();
            logits.set(i, cols - 1, s);
        }
    }
    logits.scale(1.0 / cfg.tau);

    let mask = match kind {
        LossKind::Nce => Mask::zeros(n, l).with_ones_column(),
        LossKind::Relcon { queue_mask, self_positive } => {
            assert_eq!(queue_mask.cols(), l, "relation mask out of step with queue");
            if *self_positive {
                queue_mask.with_ones_column()
            } else {
                queue_mask.clone()
            }
        }
    };

    let batch = ContrastBatch::new(logits, mask, cfg.tau);
    let out = match kind {
        LossKind::Nce => nce_loss(&batch),
        LossKind::Relcon { .. } => relcon_loss(&batch),
    };

    // dL/dq = (grad_queue @ queue_feats + diag(grad_self) @ k) / tau
    let mut d_q = if l > 0 {
        let mut grad_queue = Matrix::zeros(n, l);
        for i in 0..n {
            grad_queue
                .row_mut(i)
                .copy_from_slice(&out.grad_logits.row(i)[..l]);
        }
        matmul(&grad_queue, &queue_feats)
    } else {
        Matrix::zeros(n, pair.q.cols())
    };
    if use_self {
        for i in 0..n {
            let g = out.grad_logits.get(i, cols - 1);
            if g != 0.0 {
                for (dv, &kv) in d_q.row_mut(i).iter_mut().zip(pair.k.row(i)) {
                    *dv += g * kv;
                }
            }
        }
    }
    d_q.scale(1.0 / cfg.tau);

    let grads = arm.online.backward(&pair.cache, &d_q);
    arm.online.sgd_step(&grads, &mut arm.sgd);
    mean_teacher_update(&arm.online, &mut arm.momentum, cfg.mean_teacher_m);

    StepOutcome {
        loss: out.value,
        k: pair.k,
    }
}

fn epoch_order(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order
}

/// Per-epoch accumulator for mined-relation quality.
#[derive(Default)]
struct RelationTally {
    pn_total: f64,
    tpn_total: f64,
    anchors: usize,
}

impl RelationTally {
    fn add(&mut self, rel: &RelationLabels, anchor_truth: &[usize], queue_truth: &[usize]) {
        if queue_truth.is_empty() {
            return;
        }
        let q = relation_quality(rel, anchor_truth, queue_truth);
        let n = anchor_truth.len() as f64;
        self.pn_total += q.pn_mean * n;
        self.tpn_total += q.tpn_mean * n;
        self.anchors += anchor_truth.len();
    }

    fn fill(&self, record: &mut EpochRecord) {
        if self.anchors == 0 {
            return;
        }
        record.pn_mean = self.pn_total / self.anchors as f64;
        record.tpn_mean = self.tpn_total / self.anchors as f64;
        record.purity = if self.pn_total > 0.0 {
            self.tpn_total / self.pn_total
        } else {
            UNDEFINED
        };
    }
}

fn fill_prototype_metrics(record: &mut EpochRecord, queue: &CandidateQueue, truth: &LabelRing, m: usize) {
    let (_, idx) = queue.snapshot();
    record.effective_rate = effective_rate(&idx);
    record.match_entropy = matching_distribution(&idx, m).1;
    let truth_snapshot = truth.snapshot();
    assert_eq!(idx.len(), truth_snapshot.len(), "label ring out of lockstep");
    if !idx.is_empty() {
        let truth_i64: Vec<i64> = truth_snapshot.iter().map(|&t| t as i64).collect();
        record.nmi = metrics::nmi(&idx, &truth_i64);
        record.ari = metrics::ari(&idx, &truth_i64);
        record.acc = metrics::cluster_acc(&idx, &truth_i64);
    }
}

fn init_bank_from_queue(
    queue: &CandidateQueue,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> (PrototypeBank, Vec<i64>) {
    let (feats, _) = queue.snapshot();
    assert!(
        feats.rows() >= cfg.num_prototypes,
        "cannot initialize {} prototypes from a queue of {} embeddings; \
         extend the warm-up phase",
        cfg.num_prototypes,
        feats.rows()
    );
    let centroids = spherical_kmeans(&feats, cfg.num_prototypes, 50, rng);
    let bank = PrototypeBank::new(centroids, cfg.theta, cfg.beta);
    let (idx, _) = bank.assign(&feats);
    (bank, idx)
}

/// Full relation-distillation run: the teacher mines relations through the
/// prototype bank and both networks optimize the relation contrastive loss
/// with the teacher's labels. Warm-up epochs run plain NCE on both arms;
/// the bank initializes from the teacher queue at warm-up end.
pub fn train_rekd(cfg: &TrainConfig, data: &LabeledDataset) -> TrainResult {
    cfg.validate().expect("invalid training configuration");
    assert_eq!(
        data.dim(),
        cfg.mixture_spec.dim,
        "dataset dimension does not match configured mixture dim"
    );
    let root = RngStream::from_seed(cfg.seed);
    let mut shuffle_rng = root.substream(SUB_SHUFFLE);
    let mut aug_rng = root.substream(SUB_AUGMENT);
    let mut kmeans_rng = root.substream(SUB_KMEANS);
    let mut probe_rng = root.substream(SUB_PROBE);
    let mut teacher = Arm::new(
        &cfg.teacher_layer_dims(),
        cfg.lr_teacher,
        cfg,
        &mut root.substream(SUB_TEACHER_INIT),
    );
    let mut student = Arm::new(
        &cfg.student_layer_dims(),
        cfg.lr_student,
        cfg,
        &mut root.substream(SUB_STUDENT_INIT),
    );

    let mut bank: Option<PrototypeBank> = None;
    let mut queue_truth = LabelRing::new(cfg.queue_capacity);
    let mut diag = RunDiagnostics::default();
    let mut records = Vec::with_capacity(cfg.epochs);
    let n = data.len();

    for epoch in 0..cfg.epochs {
        teacher.sgd.lr = cosine_lr(epoch, cfg.epochs, teacher.base_lr);
        student.sgd.lr = cosine_lr(epoch, cfg.epochs, student.base_lr);
        let order = epoch_order(n, &mut shuffle_rng);

        let mut loss_t_sum = 0.0;
        let mut loss_s_sum = 0.0;
        let mut batches = 0usize;
        let mut tally = RelationTally::default();

        for chunk in order.chunks(cfg.batch_size) {
            let x = data.points.select_rows(chunk);
            let mut rng_a = aug_rng.split();
            let mut rng_b = aug_rng.split();
            let (view_a, _) = augment(&x, &cfg.augment_spec, &mut rng_a);
            let (view_b, _) = augment(&x, &cfg.augment_spec, &mut rng_b);

            let pair_t = forward_pair(&teacher, &view_a, &view_b);
            let pair_s = forward_pair(&student, &view_a, &view_b);
            if pair_t.degenerate_fraction > 0.5 || pair_s.degenerate_fraction > 0.5 {
                diag.batches_skipped += 1;
                continue;
            }

            let (_, teacher_queue_idx) = teacher.queue.snapshot();
            let (_, student_queue_idx) = student.queue.snapshot();
            assert_eq!(
                teacher_queue_idx.len(),
                student_queue_idx.len(),
                "teacher and student queues out of lockstep"
            );

            // Connection step on the candidate view, per the pseudocode: the
            // candidate's assignment labels both the current batch and the
            // stored queue entry it becomes.
            let (k_idx, k_sim, rel) = match &bank {
                Some(b) => {
                    let (idx, sim) = b.assign(&pair_t.k);
                    let rel = mine_relations(&idx, &teacher_queue_idx);
                    (idx, sim, Some(rel))
                }
                None => (vec![-1i64; chunk.len()], vec![0.0; chunk.len()], None),
            };

            let teacher_kind = match &rel {
                Some(r) => LossKind::Relcon {
                    queue_mask: r.labels.clone(),
                    self_positive: cfg.include_self_positive,
                },
                None => LossKind::Nce,
            };
            let out_t = apply_loss_and_update(&mut teacher, pair_t, &teacher_kind, cfg);
            teacher.queue.enqueue_dequeue(&out_t.k, &k_idx);
            if let Some(b) = bank.as_mut() {
                let stats = b.update(&out_t.k, &k_idx, &k_sim);
                if stats.applied > 0 {
                    diag.m_min = diag.m_min.min(stats.m_min);
                    diag.m_max = diag.m_max.max(stats.m_max);
                    diag.prototype_updates += stats.applied;
                }
                diag.max_proto_norm_drift = diag.max_proto_norm_drift.max(b.max_norm_drift());
            }

            // Student trains against its own queue but with the teacher's
            // relation labels; positions align because both queues enqueue
            // the same images in the same order.
            let student_kind = match &rel {
                Some(r) => LossKind::Relcon {
                    queue_mask: r.labels.clone(),
                    self_positive: cfg.include_self_positive,
                },
                None => LossKind::Nce,
            };
            let out_s = apply_loss_and_update(&mut student, pair_s, &student_kind, cfg);
            student.queue.enqueue_dequeue(&out_s.k, &k_idx);

            // Diagnostics only: ground truth never feeds a loss above.
            let batch_truth: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            if let Some(r) = &rel {
                tally.add(r, &batch_truth, &queue_truth.snapshot());
            }
            queue_truth.push(&batch_truth);

            loss_t_sum += out_t.loss;
            loss_s_sum += out_s.loss;
            batches += 1;
        }

        // Prototype bank comes alive once the warm-up has populated the
        // teacher queue with meaningful features.
        if epoch + 1 == cfg.warmup_epochs && cfg.warmup_epochs < cfg.epochs {
            let (b, backfill) = init_bank_from_queue(&teacher.queue, cfg, &mut kmeans_rng);
            teacher.queue.assign_indices(&backfill);
            student.queue.assign_indices(&backfill);
            diag.effective_rate_at_init = effective_rate(&backfill);
            bank = Some(b);
        }

        let mut record = EpochRecord::undefined(epoch);
        if batches > 0 {
            record.loss_teacher = loss_t_sum / batches as f64;
            record.loss_student = loss_s_sum / batches as f64;
        }
        if bank.is_some() {
            fill_prototype_metrics(&mut record, &teacher.queue, &queue_truth, cfg.num_prototypes);
            tally.fill(&mut record);
        }
        if epoch + 1 == cfg.epochs {
            record.probe_acc = linear_probe(
                &student.online,
                data,
                cfg.probe_epochs,
                cfg.probe_lr,
                &mut probe_rng,
            );
        }
        records.push(record);
    }

    TrainResult {
        student: student.online,
        teacher: Some(teacher.online),
        bank,
        records,
        diag,
    }
}

/// MoCo-style baseline: one encoder pair, one-positive NCE against the
/// queue. The prototype machinery still runs after warm-up, but purely as a
/// diagnostic: its labels never reach the loss, so the relation-quality
/// columns of the records are directly comparable with the distillation run.
pub fn train_baseline_nce(cfg: &TrainConfig, data: &LabeledDataset, role: EncoderRole) -> TrainResult {
    cfg.validate().expect("invalid training configuration");
    assert_eq!(data.dim(), cfg.mixture_spec.dim, "dataset dimension mismatch");
    let root = RngStream::from_seed(cfg.seed);
    let mut shuffle_rng = root.substream(SUB_SHUFFLE);
    let mut aug_rng = root.substream(SUB_AUGMENT);
    let mut kmeans_rng = root.substream(SUB_KMEANS);
    let mut probe_rng = root.substream(SUB_PROBE);
    let (dims, lr, init_sub) = match role {
        EncoderRole::Teacher => (cfg.teacher_layer_dims(), cfg.lr_teacher, SUB_TEACHER_INIT),
        EncoderRole::Student => (cfg.student_layer_dims(), cfg.lr_student, SUB_STUDENT_INIT),
    };
    let mut arm = Arm::new(&dims, lr, cfg, &mut root.substream(init_sub));

    let mut bank: Option<PrototypeBank> = None;
    let mut queue_truth = LabelRing::new(cfg.queue_capacity);
    let mut diag = RunDiagnostics::default();
    let mut records = Vec::with_capacity(cfg.epochs);
    let n = data.len();

    for epoch in 0..cfg.epochs {
        arm.sgd.lr = cosine_lr(epoch, cfg.epochs, arm.base_lr);
        let order = epoch_order(n, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut tally = RelationTally::default();

        for chunk in order.chunks(cfg.batch_size) {
            let x = data.points.select_rows(chunk);
            let mut rng_a = aug_rng.split();
            let mut rng_b = aug_rng.split();
            let (view_a, _) = augment(&x, &cfg.augment_spec, &mut rng_a);
            let (view_b, _) = augment(&x, &cfg.augment_spec, &mut rng_b);

            let pair = forward_pair(&arm, &view_a, &view_b);
            if pair.degenerate_fraction > 0.5 {
                diag.batches_skipped += 1;
                continue;
            }

            let (_, queue_idx) = arm.queue.snapshot();
            let (k_idx, k_sim, rel) = match &bank {
                Some(b) => {
                    let (idx, sim) = b.assign(&pair.k);
                    let rel = mine_relations(&idx, &queue_idx);
                    (idx, sim, Some(rel))
                }
                None => (vec![-1i64; chunk.len()], vec![0.0; chunk.len()], None),
            };

            // The loss is always one-positive NCE, whatever the miner says.
            let out = apply_loss_and_update(&mut arm, pair, &LossKind::Nce, cfg);
            arm.queue.enqueue_dequeue(&out.k, &k_idx);
            if let Some(b) = bank.as_mut() {
                let stats = b.update(&out.k, &k_idx, &k_sim);
                if stats.applied > 0 {
                    diag.m_min = diag.m_min.min(stats.m_min);
                    diag.m_max = diag.m_max.max(stats.m_max);
                    diag.prototype_updates += stats.applied;
                }
                diag.max_proto_norm_drift = diag.max_proto_norm_drift.max(b.max_norm_drift());
            }

            let batch_truth: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            if let Some(r) = &rel {
                tally.add(r, &batch_truth, &queue_truth.snapshot());
            }
            queue_truth.push(&batch_truth);

            loss_sum += out.loss;
            batches += 1;
        }

        if epoch + 1 == cfg.warmup_epochs && cfg.warmup_epochs < cfg.epochs {
            let (b, backfill) = init_bank_from_queue(&arm.queue, cfg, &mut kmeans_rng);
            arm.queue.assign_indices(&backfill);
            diag.effective_rate_at_init = effective_rate(&backfill);
            bank = Some(b);
        }

        let mut record = EpochRecord::undefined(epoch);
        if batches > 0 {
            match role {
                EncoderRole::Teacher => record.loss_teacher = loss_sum / batches as f64,
                EncoderRole::Student => record.loss_student = loss_sum / batches as f64,
            }
        }
        if bank.is_some() {
            fill_prototype_metrics(&mut record, &arm.queue, &queue_truth, cfg.num_prototypes);
            tally.fill(&mut record);
        }
        if epoch + 1 == cfg.epochs {
            record.probe_acc = linear_probe(
                &arm.online,
                data,
                cfg.probe_epochs,
                cfg.probe_lr,
                &mut probe_rng,
            );
        }
        records.push(record);
    }

    TrainResult {
        student: arm.online,
        teacher: None,
        bank,
        records,
        diag,
    }
}

/// Builds the ground-truth queue mask for a batch and corrupts it to the
/// requested purity and positive count: the positive set is truncated to
/// `tpn_cap` true positives, and each retained slot flips to a random
/// different-class candidate with probability `1 - purity_target`.
fn corrupted_truth_mask(
    batch_truth: &[usize],
    queue_truth: &[usize],
    purity_target: f64,
    tpn_cap: usize,
    rng: &mut RngStream,
) -> Mask {
    let mut mask = Mask::zeros(batch_truth.len(), queue_truth.len());
    for (i, &class) in batch_truth.iter().enumerate() {
        let mut positives: Vec<usize> = Vec::new();
        let mut negatives: Vec<usize> = Vec::new();
        for (j, &qt) in queue_truth.iter().enumerate() {
            if qt == class {
                positives.push(j);
            } else {
                negatives.push(j);
            }
        }
        if positives.len() > tpn_cap {
            rng.shuffle(&mut positives);
            positives.truncate(tpn_cap);
        }
        rng.shuffle(&mut negatives);
        for &j in &positives {
            if purity_target < 1.0 && rng.next_f64() < 1.0 - purity_target {
                if let Some(swap) = negatives.pop() {
                    mask.set(i, swap, true);
                }
            } else {
                mask.set(i, j, true);
            }
        }
    }
    mask
}

/// Supervised control: relation labels come from ground truth, corrupted to
/// a target purity and capped positive count, then trained exactly like the
/// student path of the distillation run.
pub fn train_supmoco(
    cfg: &TrainConfig,
    data: &LabeledDataset,
    purity_target: f64,
    tpn_cap: usize,
) -> TrainResult {
    cfg.validate().expect("invalid training configuration");
    assert!(
        purity_target > 0.0 && purity_target <= 1.0,
        "purity_target must be in (0,1], got {purity_target}"
    );
    assert!(tpn_cap >= 1, "tpn_cap must be at least 1");
    assert_eq!(data.dim(), cfg.mixture_spec.dim, "dataset dimension mismatch");

    let root = RngStream::from_seed(cfg.seed);
    let mut shuffle_rng = root.substream(SUB_SHUFFLE);
    let mut aug_rng = root.substream(SUB_AUGMENT);
    let mut probe_rng = root.substream(SUB_PROBE);
    let mut corrupt_rng = root.substream(SUB_CORRUPT);
    let mut arm = Arm::new(
        &cfg.student_layer_dims(),
        cfg.lr_student,
        cfg,
        &mut root.substream(SUB_STUDENT_INIT),
    );

    let mut queue_truth = LabelRing::new(cfg.queue_capacity);
    let mut diag = RunDiagnostics::default();
    let mut records = Vec::with_capacity(cfg.epochs);
    let n = data.len();

    for epoch in 0..cfg.epochs {
        arm.sgd.lr = cosine_lr(epoch, cfg.epochs, arm.base_lr);
        let order = epoch_order(n, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut tally = RelationTally::default();

        for chunk in order.chunks(cfg.batch_size) {
            let x = data.points.select_rows(chunk);
            let mut rng_a = aug_rng.split();
            let mut rng_b = aug_rng.split();
            let (view_a, _) = augment(&x, &cfg.augment_spec, &mut rng_a);
            let (view_b, _) = augment(&x, &cfg.augment_spec, &mut rng_b);

            let pair = forward_pair(&arm, &view_a, &view_b);
            if pair.degenerate_fraction > 0.5 {
                diag.batches_skipped += 1;
                continue;
            }

            let batch_truth: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let truth_snapshot = queue_truth.snapshot();
            let mask = corrupted_truth_mask(
                &batch_truth,
                &truth_snapshot,
                purity_target,
                tpn_cap,
                &mut corrupt_rng,
            );
            let rel = RelationLabels {
                labels: mask.clone(),
                anchor_idx: batch_truth.iter().map(|&c| c as i64).collect(),
            };
            tally.add(&rel, &batch_truth, &truth_snapshot);

            let kind = LossKind::Relcon {
                queue_mask: mask,
                self_positive: cfg.include_self_positive,
            };
            let out = apply_loss_and_update(&mut arm, pair, &kind, cfg);
            arm.queue.enqueue_dequeue(&out.k, &vec![-1i64; chunk.len()]);
            queue_truth.push(&batch_truth);

            loss_sum += out.loss;
            batches += 1;
        }

        let mut record = EpochRecord::undefined(epoch);
        if batches > 0 {
            record.loss_student = loss_sum / batches as f64;
        }
        tally.fill(&mut record);
        if epoch + 1 == cfg.epochs {
            record.probe_acc = linear_probe(
                &arm.online,
                data,
                cfg.probe_epochs,
                cfg.probe_lr,
                &mut probe_rng,
            );
        }
        records.push(record);
    }

    TrainResult {
        student: arm.online,
        teacher: None,
        bank: None,
        records,
        diag,
    }
}
