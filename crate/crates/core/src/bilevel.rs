//! First-order bi-level search with progressive data pruning.
//!
//! Each epoch walks shuffled training and validation batches in pairs. For
//! every pair α takes a gradient step on the validation batch, then w takes
//! an SGD-with-momentum step on the training batch, and each visited sample
//! gets its prediction error of that epoch appended to its history. Every
//! `interval` epochs both sets are scored and pruned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{dominant_eigenvalue, TrajectoryRecord};
use crate::data::{count_labels, Dataset, Split};
use crate::error::{BdpError, Result};
use crate::numcore::{argmax, Mat64, RngStream};
use crate::pruning::{self, balance_degree, Criterion, PruneConfig};
use crate::supernet::{discretize, ArchParams, Genotype, SpaceConfig, Supernet};

/// Live pool of one set (training or validation).
#[derive(Debug, Clone, PartialEq)]
pub struct SetState {
    labels: BTreeMap<usize, usize>,
    active: Vec<usize>,
    history: BTreeMap<usize, Vec<(usize, f64)>>,
    class_counts: Vec<usize>,
}

impl SetState {
    /// `ids` index into `labels`; duplicates are dropped.
    pub fn new(mut ids: Vec<usize>, labels: &[usize], num_classes: usize) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let class_counts = count_labels(ids.iter().map(|&i| labels[i]), num_classes);
        Self {
            labels: ids.iter().map(|&i| (i, labels[i])).collect(),
            history: ids.iter().map(|&i| (i, Vec::new())).collect(),
            active: ids,
            class_counts,
        }
    }

    /// Active ids, ascending.
    pub fn active_ids(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.active.binary_search(&id).is_ok()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    /// Label of a sample that belongs (or belonged) to this set.
    pub fn label(&self, id: usize) -> usize {
        self.labels[&id]
    }

    /// `(epoch, error)` pairs in recording order; empty for unknown ids.
    pub fn history(&self, id: usize) -> &[(usize, f64)] {
        self.history.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn balance_degree(&self) -> f64 {
        balance_degree(&self.class_counts).unwrap_or(1.0)
    }

    /// Record `e` for `id` at `epoch`. The first record of an epoch wins;
    /// later ones return `Ok(false)`.
    pub fn record(&mut self, id: usize, epoch: usize, e: f64) -> Result<bool> {
        if !self.is_active(id) {
            return Err(BdpError::InvalidConfig(format!(
                "cannot record error for inactive sample {id}"
            )));
        }
        let h = self.history.get_mut(&id).expect("active ids have a history");
        if h.last().is_some_and(|&(t, _)| t == epoch) {
            return Ok(false);
        }
        h.push((epoch, e));
        Ok(true)
    }

    pub fn remove(&mut self, ids: &[usize]) -> Result<()> {
        for &id in ids {
            let pos = self.active.binary_search(&id).map_err(|_| {
                BdpError::InvalidConfig(format!("sample {id} is not active"))
            })?;
            self.active.remove(pos);
            self.class_counts[self.labels[&id]] -= 1;
        }
        Ok(())
    }

    /// Class counts recomputed from the active ids.
    pub fn recount(&self) -> Vec<usize> {
        count_labels(self.active.iter().map(|id| self.labels[id]), self.num_classes())
    }
}

/// Penalty on α added to the validation gradient.
pub trait ArchRegularizer {
    fn name(&self) -> &str;
    /// Gradient of the penalty w.r.t. α (same shape as α).
    fn gradient(&self, alpha: &ArchParams) -> Mat64;
}

/// Named α penalty selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    #[default]
    None,
}

impl RegularizerKind {
    pub fn build(self) -> Option<Box<dyn ArchRegularizer>> {
        match self {
            RegularizerKind::None => None,
        }
    }
}

/// When to compute the dominant Hessian eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSchedule {
    Off,
    #[default]
    PruningEpochs,
    EveryEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_w: f64,
    pub lr_alpha: f64,
    pub momentum_w: f64,
    pub seed: u64,
    pub prune: PruneConfig,
    pub space: SpaceConfig,
    #[serde(default)]
    pub regularizer: RegularizerKind,
    #[serde(default)]
    pub eigen: EigenSchedule,
    /// Optional single EL2N pruning after a warm-up, applied in addition to
    /// the progressive schedule (set both ratios to 0 for the pure mode).
    #[serde(default)]
    pub one_shot: Option<OneShotConfig>,
}

/// One-shot EL2N pruning: after `warmup_epochs` epochs, discard `fraction`
/// of each listed set from the given tail of the EL2N ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneShotConfig {
    pub warmup_epochs: usize,
    #[serde(default = "half")]
    pub fraction: f64,
    #[serde(default)]
    pub train: Option<Criterion>,
    #[serde(default)]
    pub val: Option<Criterion>,
}

fn half() -> f64 {
    0.5
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BdpError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr_w > 0.0 && self.lr_alpha > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum_w) {
            return bad("momentum_w must be in [0, 1)");
        }
        self.space.validate()?;
        if let Some(o) = &self.one_shot {
            if o.warmup_epochs == 0 || o.warmup_epochs > self.epochs {
                return bad("one_shot.warmup_epochs must be in [1, epochs]");
            }
            if !(0.0..=1.0).contains(&o.fraction) {
                return bad("one_shot.fraction must be in [0, 1]");
            }
        }
        self.prune.validate(self.epochs)
    }

    pub fn rounds(&self) -> usize {
        self.prune.rounds(self.epochs)
    }
}

/// Loss and per-sample errors of one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub errors: Vec<(usize, f64)>,
}

fn gather<'a>(data: &'a Dataset, ids: &[usize]) -> (Vec<&'a [f64]>, Vec<usize>) {
    (
        ids.iter().map(|&i| data.x(i)).collect(),
        ids.iter().map(|&i| data.labels[i]).collect(),
    )
}

/// α ← α − lr · (∇α L_val + regularizer gradient).
pub fn update_alpha(
    net: &Supernet,
    alpha: &mut ArchParams,
    data: &Dataset,
    val_batch: &[usize],
    lr_alpha: f64,
    regularizer: Option<&dyn ArchRegularizer>,
) -> Result<StepOutcome> {
    let (xs, ys) = gather(data, val_batch);
    let g = net.batch_gradients(alpha, &xs, &ys)?;
    let mut grad = g.grad_alpha;
    if let Some(reg) = regularizer {
        let extra = reg.gradient(alpha);
        grad.as_mut_slice()
            .iter_mut()
            .zip(extra.as_slice())
            .for_each(|(a, b)| *a += b);
    }
    if !grad.is_finite() {
        return Err(BdpError::NonFiniteGradient("architecture gradient".into()));
    }
    if lr_alpha != 0.0 {
        for (a, gi) in alpha.alpha.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *a -= lr_alpha * gi;
        }
    }
    Ok(StepOutcome {
        loss: g.loss,
        errors: val_batch.iter().copied().zip(g.per_sample.iter().map(|s| s.error)).collect(),
    })
}

/// One SGD-with-momentum step on w: `v ← μ v + g`, `w ← w − lr v`.
pub fn update_weights(
    net: &mut Supernet,
    alpha: &ArchParams,
    data: &Dataset,
    train_batch: &[usize],
    lr_w: f64,
    momentum: f64,
    velocity: &mut [f64],
) -> Result<StepOutcome> {
    let (xs, ys) = gather(data, train_batch);
    let g = net.batch_gradients(alpha, &xs, &ys)?;
    if g.grad_w.iter().any(|v| !v.is_finite()) {
        return Err(BdpError::NonFiniteGradient("weight gradient".into()));
    }
    sgd_momentum(net.params_mut(), &g.grad_w, velocity, lr_w, momentum);
    Ok(StepOutcome {
        loss: g.loss,
        errors: train_batch.iter().copied().zip(g.per_sample.iter().map(|s| s.error)).collect(),
    })
}

fn sgd_momentum(params: &mut [f64], grad: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((w, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
}

/// Mean cross-entropy and accuracy of `mixing` over `ids`.
pub fn evaluate(net: &Supernet, mixing: &Mat64, data: &Dataset, ids: &[usize]) -> Result<(f64, f64)> {
    if ids.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in ids {
        let tape = net.forward_mixed(mixing, data.x(i))?;
        let y = data.labels[i];
        loss += crate::supernet::cross_entropy(&tape.logits, y);
        if argmax(&tape.probs) == y {
            correct += 1;
        }
    }
    let n = ids.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// End-of-epoch summary, evaluated over the full active sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub remaining_train: usize,
    pub remaining_val: usize,
    pub balance_train: f64,
    pub balance_val: f64,
}

/// Mutable state of a running search.
#[derive(Debug, Clone)]
pub struct SearchState<'a> {
    pub data: &'a Dataset,
    pub net: Supernet,
    pub alpha: ArchParams,
    pub velocity: Vec<f64>,
    pub train: SetState,
    pub val: SetState,
    pub test: Vec<usize>,
    /// Number of completed epochs.
    pub epoch: usize,
    pub batch_size: usize,
    pub lr_w: f64,
    pub lr_alpha: f64,
    pub momentum_w: f64,
    pub regularizer: RegularizerKind,
    shuffle_rng: RngStream,
}

impl<'a> SearchState<'a> {
    /// Fresh supernet from `seed`'s `supernet` stream; batches shuffled by
    /// its `search` stream.
    pub fn new(config: &SearchConfig, data: &'a Dataset, split: Split) -> Result<Self> {
        config.validate()?;
        if data.dim() != config.space.feature_dim {
            return Err(BdpError::InvalidConfig(format!(
                "data dimension {} does not match feature_dim {}",
                data.dim(),
                config.space.feature_dim
            )));
        }
        if data.num_classes != config.space.num_classes {
            return Err(BdpError::InvalidConfig(format!(
                "data has {} classes, space expects {}",
                data.num_classes, config.space.num_classes
            )));
        }
        let root = RngStream::new(config.seed);
        let net = Supernet::new(&config.space, &mut root.derive("supernet"))?;
        let velocity = vec![0.0; net.param_count()];
        Ok(Self {
            data,
            alpha: ArchParams::zeros(&config.space),
            net,
            velocity,
            train: split.train,
            val: split.val,
            test: split.test,
            epoch: 0,
            batch_size: config.batch_size,
            lr_w: config.lr_w,
            lr_alpha: config.lr_alpha,
            momentum_w: config.momentum_w,
            regularizer: config.regularizer,
            shuffle_rng: root.derive("search"),
        })
    }

    /// Evaluation of the relaxed supernet on the active sets and test set.
    pub fn stats(&self) -> Result<EpochStats> {
        let betas = self.alpha.betas()?;
        let (train_loss, train_acc) = evaluate(&self.net, &betas, self.data, self.train.active_ids())?;
        let (val_loss, val_acc) = evaluate(&self.net, &betas, self.data, self.val.active_ids())?;
        let (_, test_acc) = evaluate(&self.net, &betas, self.data, &self.test)?;
        Ok(EpochStats {
            epoch: self.epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
            test_acc,
            remaining_train: self.train.len(),
            remaining_val: self.val.len(),
            balance_train: self.train.balance_degree(),
            balance_val: self.val.balance_degree(),
        })
    }
}

fn batches(ids: &[usize], size: usize) -> Vec<&[usize]> {
    ids.chunks(size).collect()
}

/// One epoch of paired α / w updates. The shorter set's batches cycle; a
/// sample's error for the epoch comes from its first visit.
pub fn search_epoch(state: &mut SearchState<'_>) -> Result<EpochStats> {
    if state.train.is_empty() {
        return Err(BdpError::SetExhausted("training"));
    }
    if state.val.is_empty() {
        return Err(BdpError::SetExhausted("validation"));
    }
    let epoch = state.epoch + 1;
    let mut train_order = state.train.active_ids().to_vec();
    let mut val_order = state.val.active_ids().to_vec();
    state.shuffle_rng.shuffle(&mut train_order);
    state.shuffle_rng.shuffle(&mut val_order);
    let train_batches = batches(&train_order, state.batch_size);
    let val_batches = batches(&val_order, state.batch_size);
    let pairs = train_batches.len().max(val_batches.len());
    let reg = state.regularizer.build();
    for k in 0..pairs {
        let vb = val_batches[k % val_batches.len()];
        let tb = train_batches[k % train_batches.len()];
        let out = update_alpha(&state.net, &mut state.alpha, state.data, vb, state.lr_alpha, reg.as_deref())
            .map_err(|e| annotate(e, epoch, k))?;
        for (id, e) in out.errors {
            state.val.record(id, epoch, e)?;
        }
        let out = update_weights(
            &mut state.net,
            &state.alpha,
            state.data,
            tb,
            state.lr_w,
            state.momentum_w,
            &mut state.velocity,
        )
        .map_err(|e| annotate(e, epoch, k))?;
        for (id, e) in out.errors {
            state.train.record(id, epoch, e)?;
        }
    }
    state.epoch = epoch;
    state.stats()
}

fn annotate(e: BdpError, epoch: usize, batch: usize) -> BdpError {
    match e {
        BdpError::NonFiniteGradient(m) => {
            BdpError::NonFiniteGradient(format!("{m} (epoch {epoch}, batch pair {batch})"))
        }
        other => other,
    }
}

/// Which set a pruning log line refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Train,
    Val,
}

impl SetKind {
    pub fn name(self) -> &'static str {
        match self {
            SetKind::Train => "train",
            SetKind::Val => "val",
        }
    }
}

/// What one pruning round did to one set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneLog {
    pub epoch: usize,
    pub set: SetKind,
    pub before: usize,
    pub target: usize,
    pub removed: usize,
    pub balance_before: f64,
    pub intensity: f64,
    pub caps: Vec<usize>,
    pub removed_per_class: Vec<usize>,
}

/// Per-class remaining count after a pruning round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCountRow {
    pub epoch: usize,
    pub set: SetKind,
    pub class: usize,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub genotype: Genotype,
    pub alpha: ArchParams,
    pub net: Supernet,
    pub trajectory: Vec<TrajectoryRecord>,
    pub prune_log: Vec<PruneLog>,
    pub class_counts: Vec<ClassCountRow>,
    pub train: SetState,
    pub val: SetState,
    pub initial_train: usize,
    pub initial_val: usize,
}

fn prune_set(
    set: &mut SetState,
    kind: SetKind,
    epoch: usize,
    cfg: &PruneConfig,
    rounds: usize,
) -> Result<PruneLog> {
    let p = match kind {
        SetKind::Train => cfg.p_train,
        SetKind::Val => cfg.p_val,
    };
    let criterion: Criterion = match kind {
        SetKind::Train => cfg.criterion_train,
        SetKind::Val => cfg.criterion_val,
    };
    let before = set.len();
    let (b, intensity, caps) = pruning::round_caps(set, rounds, cfg.constraint_family)?;
    let plan = if p == 0.0 {
        pruning::PrunePlan {
            target: 0,
            selected: Vec::new(),
        }
    } else {
        let scores = pruning::voe_scores(set, epoch, cfg.interval)?;
        pruning::prune_round(set, &scores, p, criterion, &caps)?
    };
    let mut removed_per_class = vec![0; set.num_classes()];
    for &id in &plan.selected {
        removed_per_class[set.label(id)] += 1;
    }
    Ok(PruneLog {
        epoch,
        set: kind,
        before,
        target: plan.target,
        removed: plan.selected.len(),
        balance_before: b,
        intensity,
        caps,
        removed_per_class,
    })
}

/// Full search: `epochs` epochs with pruning after every epoch divisible by
/// the interval (1-based), then per-edge argmax of α.
///
/// Each trajectory record carries the accuracies, losses and eigenvalue of
/// the epoch's trained state and the remaining counts and balance degrees
/// after that epoch's pruning.
pub fn run_search(config: &SearchConfig, data: &Dataset, split: Split) -> Result<SearchResult> {
    let mut state = SearchState::new(config, data, split)?;
    let root = RngStream::new(config.seed);
    let rounds = config.rounds();
    let initial_train = state.train.len();
    let initial_val = state.val.len();
    let mut trajectory = Vec::with_capacity(config.epochs);
    let mut prune_log = Vec::new();
    let mut class_counts = Vec::new();
    for _ in 0..config.epochs {
        let stats = search_epoch(&mut state)?;
        let epoch = stats.epoch;
        let prune_epoch = epoch % config.prune.interval == 0;
        let eig_max = match config.eigen {
            EigenSchedule::EveryEpoch => true,
            EigenSchedule::PruningEpochs => prune_epoch,
            EigenSchedule::Off => false,
        }
        .then(|| {
            let mut rng = root.derive_indexed("eigen", epoch as u64);
            dominant_eigenvalue(&state.net, &state.alpha, data, state.val.active_ids(), &mut rng)
        })
        .transpose()?;
        if let Some(o) = config.one_shot.filter(|o| o.warmup_epochs == epoch) {
            for (set, kind, discard) in [
                (&mut state.train, SetKind::Train, o.train),
                (&mut state.val, SetKind::Val, o.val),
            ] {
                let Some(discard) = discard else { continue };
                let before = set.len();
                let balance_before = set.balance_degree();
                let caps = set.class_counts().to_vec();
                let gone = pruning::one_shot_el2n_prune(set, epoch, discard, o.fraction)?;
                let mut removed_per_class = vec![0; set.num_classes()];
                for &id in &gone {
                    removed_per_class[set.label(id)] += 1;
                }
                prune_log.push(PruneLog {
                    epoch,
                    set: kind,
                    before,
                    target: pruning::prune_target(o.fraction * 100.0, before),
                    removed: gone.len(),
                    balance_before,
                    intensity: 1.0,
                    caps,
                    removed_per_class,
                });
            }
        }
        if prune_epoch {
            for (set, kind) in [(&mut state.train, SetKind::Train), (&mut state.val, SetKind::Val)] {
                prune_log.push(prune_set(set, kind, epoch, &config.prune, rounds)?);
            }
        }
        if prune_log.last().is_some_and(|l| l.epoch == epoch) {
            for (set, kind) in [(&state.train, SetKind::Train), (&state.val, SetKind::Val)] {
                for (class, &count) in set.class_counts().iter().enumerate() {
                    class_counts.push(ClassCountRow {
                        epoch,
                        set: kind,
                        class,
                        count,
                    });
                }
            }
        }
        trajectory.push(TrajectoryRecord {
            epoch,
            train_loss: stats.train_loss,
            val_loss: stats.val_loss,
            train_acc: stats.train_acc,
            val_acc: stats.val_acc,
            test_acc: stats.test_acc,
            remaining_train: state.train.len(),
            remaining_val: state.val.len(),
            balance_train: state.train.balance_degree(),
            balance_val: state.val.balance_degree(),
            eig_max,
        });
    }
    Ok(SearchResult {
        genotype: discretize(&state.alpha),
        alpha: state.alpha,
        net: state.net,
        trajectory,
        prune_log,
        class_counts,
        train: state.train,
        val: state.val,
        initial_train,
        initial_val,
    })
}

/// Settings for training a fixed genotype from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            lr: 0.05,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainResult {
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Trains only w of the discrete genotype on `train_ids`, then reports
/// accuracy on `test_ids`.
pub fn retrain_genotype(
    space: &SpaceConfig,
    genotype: &Genotype,
    data: &Dataset,
    train_ids: &[usize],
    test_ids: &[usize],
    cfg: &RetrainConfig,
    rng: &RngStream,
) -> Result<RetrainResult> {
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(BdpError::InvalidConfig(
            "retraining needs epochs >= 1, batch_size >= 1, lr > 0".into(),
        ));
    }
    if train_ids.is_empty() {
        return Err(BdpError::SetExhausted("training"));
    }
    let mixing = genotype.one_hot(space)?;
    let mut net = Supernet::new(space, &mut rng.derive("supernet"))?;
    let mut shuffle = rng.derive("shuffle");
    let mut velocity = vec![0.0; net.param_count()];
    let mut order = train_ids.to_vec();
    for _ in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let (xs, ys) = gather(data, batch);
            let tapes = xs
                .iter()
                .map(|x| net.forward_mixed(&mixing, x))
                .collect::<Result<Vec<_>>>()?;
            let (_, grad_w, _, _) = net.backward_mixed(&mixing, &tapes, &ys)?;
            if grad_w.iter().any(|v| !v.is_finite()) {
                return Err(BdpError::NonFiniteGradient("weight gradient".into()));
            }
            sgd_momentum(net.params_mut(), &grad_w, &mut velocity, cfg.lr, cfg.momentum);
        }
    }
    let (train_loss, train_acc) = evaluate(&net, &mixing, data, train_ids)?;
    let (_, test_acc) = evaluate(&net, &mixing, data, test_ids)?;
    Ok(RetrainResult {
        train_loss,
        train_acc,
        test_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, split, Layout, SplitSpec};
    use crate::numcore::seeded_rng;
    use crate::supernet::OpKind;

    fn setup(per_class: usize) -> (Dataset, SearchConfig) {
        let data = gen_blobs(3, per_class, 3, 0.5, Layout::Separable, &mut seeded_rng(1)).unwrap();
        let cfg = SearchConfig {
            epochs: 4,
            batch_size: 8,
            lr_w: 0.05,
            lr_alpha: 0.01,
            momentum_w: 0.9,
            seed: 3,
            prune: PruneConfig {
                interval: 2,
                ..PruneConfig::default()
            },
            space: SpaceConfig {
                nodes_per_cell: 3,
                candidate_ops: OpKind::ALL.to_vec(),
                feature_dim: 3,
                num_cells: 1,
                num_classes: 3,
            },
            regularizer: RegularizerKind::None,
            eigen: EigenSchedule::Off,
            one_shot: None,
        };
        (data, cfg)
    }

    fn make_split(data: &Dataset, train_fraction: f64) -> Split {
        let spec = SplitSpec {
            train_fraction,
            test_fraction: 0.2,
            stratified: true,
        };
        split(data, &spec, &mut seeded_rng(2)).unwrap()
    }

    #[test]
    fn set_state_bookkeeping() {
        let labels = [0, 1, 1, 0, 2];
        let mut s = SetState::new(vec![4, 0, 2, 2], &labels, 3);
        assert_eq!(s.active_ids(), &[0, 2, 4]);
        assert_eq!(s.class_counts(), &[1, 1, 1]);
        assert!(s.record(2, 1, 0.5).unwrap());
        assert!(!s.record(2, 1, 0.9).unwrap());
        assert_eq!(s.history(2), &[(1, 0.5)]);
        assert!(s.record(1, 1, 0.5).is_err());
        s.remove(&[2]).unwrap();
        assert_eq!(s.class_counts(), s.recount().as_slice());
        assert!(s.record(2, 2, 0.1).is_err());
        assert!(s.remove(&[2]).is_err());
    }

    #[test]
    fn zero_lr_alpha_leaves_alpha() {
        let (data, cfg) = setup(10);
        let (net, mut alpha) = crate::supernet::build_supernet(&cfg.space, &mut seeded_rng(0)).unwrap();
        let before = alpha.clone();
        let out = update_alpha(&net, &mut alpha, &data, &[0, 1, 2], 0.0, None).unwrap();
        assert_eq!(alpha, before);
        assert_eq!(out.errors.len(), 3);
    }

    #[test]
    fn alpha_step_descends_on_its_batch() {
        let (data, cfg) = setup(10);
        let mut rng = seeded_rng(4);
        let (net, mut alpha) = crate::supernet::build_supernet(&cfg.space, &mut rng).unwrap();
        for v in alpha.alpha.as_mut_slice() {
            *v = 0.5 * rng.normal();
        }
        let batch = [0, 5, 9, 14, 20];
        let (xs, ys) = gather(&data, &batch);
        let before = net.batch_loss(&alpha.betas().unwrap(), &xs, &ys).unwrap();
        update_alpha(&net, &mut alpha, &data, &batch, 1e-4, None).unwrap();
        let after = net.batch_loss(&alpha.betas().unwrap(), &xs, &ys).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn zero_lr_w_and_zero_momentum() {
        let (data, cfg) = setup(10);
        let (mut net, alpha) = crate::supernet::build_supernet(&cfg.space, &mut seeded_rng(0)).unwrap();
        let w0 = net.params().to_vec();
        let mut vel = vec![0.0; net.param_count()];
        update_weights(&mut net, &alpha, &data, &[0, 1], 0.0, 0.9, &mut vel).unwrap();
        assert_eq!(net.params(), w0.as_slice());

        let (mut a, _) = crate::supernet::build_supernet(&cfg.space, &mut seeded_rng(0)).unwrap();
        let g = a.batch_gradients(&alpha, &[data.x(0), data.x(1)], &[data.labels[0], data.labels[1]]).unwrap();
        let mut vel = vec![0.0; a.param_count()];
        let mut plain: Vec<f64> = a.params().to_vec();
        plain.iter_mut().zip(&g.grad_w).for_each(|(w, gi)| *w -= 0.1 * gi);
        update_weights(&mut a, &alpha, &data, &[0, 1], 0.1, 0.0, &mut vel).unwrap();
        assert_eq!(a.params(), plain.as_slice());
    }

    #[test]
    fn epoch_records_one_error_per_sample_and_cycles_short_set() {
        let (data, cfg) = setup(30);
        // pool 72 samples, train fraction 2/3: |T| = 48 = 2|V|.
        let sp = make_split(&data, 2.0 / 3.0);
        assert_eq!(sp.train.len(), 2 * sp.val.len());
        let mut state = SearchState::new(&cfg, &data, sp).unwrap();
        let stats = search_epoch(&mut state).unwrap();
        for set in [&state.train, &state.val] {
            for &id in set.active_ids() {
                assert_eq!(set.history(id).len(), 1);
                assert_eq!(set.history(id)[0].0, 1);
            }
        }
        // Stats agree with an independent evaluation sweep.
        let betas = state.alpha.betas().unwrap();
        let mut correct = 0;
        for &id in &state.test {
            let p = state.net.forward(&state.alpha, data.x(id)).unwrap().0;
            if argmax(&p) == data.labels[id] {
                correct += 1;
            }
        }
        assert_eq!(stats.test_acc, correct as f64 / state.test.len() as f64);
        let (_, va) = evaluate(&state.net, &betas, &data, state.val.active_ids()).unwrap();
        assert_eq!(stats.val_acc, va);
    }

    #[test]
    fn exhausted_set_errors() {
        let (data, cfg) = setup(10);
        let sp = make_split(&data, 0.5);
        let mut state = SearchState::new(&cfg, &data, sp).unwrap();
        let all = state.val.active_ids().to_vec();
        state.val.remove(&all).unwrap();
        assert_eq!(search_epoch(&mut state).unwrap_err(), BdpError::SetExhausted("validation"));
    }

    #[test]
    fn pruning_rounds_and_no_op_pruning() {
        let (data, mut cfg) = setup(20);
        cfg.epochs = 10;
        cfg.prune.interval = 5;
        let res = run_search(&cfg, &data, make_split(&data, 0.5)).unwrap();
        assert_eq!(res.prune_log.iter().filter(|l| l.set == SetKind::Train).count(), 2);

        cfg.prune.p_train = 0.0;
        cfg.prune.p_val = 0.0;
        let sp = make_split(&data, 0.5);
        let (t0, v0) = (sp.train.len(), sp.val.len());
        let res = run_search(&cfg, &data, sp).unwrap();
        assert_eq!((res.train.len(), res.val.len()), (t0, v0));
    }

    #[test]
    fn config_validation() {
        let (_, mut cfg) = setup(5);
        cfg.epochs = 5;
        assert!(cfg.validate().is_err()); // interval 2 does not divide 5
        cfg.epochs = 4;
        cfg.lr_w = 0.0;
        assert!(cfg.validate().is_err());
    }
}
