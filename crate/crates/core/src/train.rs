//! Two-stage training: a coarse ID/OOD stage on the binary head, then a
//! fine stage on the classifier and contrastive projection, with early
//! stopping on validation WF1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{make_batches, Batch, Corpus, Label, Sequences, Split, UtteranceRecord};
use crate::error::{Error, Result};
use crate::losses::{coarse_loss, contrastive_loss, multiclass_loss};
use crate::metrics::id_metrics;
use crate::model::{ClassifierKind, FusionMode, Graph, Model, ModelConfig, ParamId, ParamStore};
use crate::numerics::{argmax, RngState, Tensor2, Var};
use crate::oodgen::{build_mixed_batch, OodGenConfig};
use crate::scoring::FittedScorers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub no_contrast: bool,
    /// Affine classifier in place of the cosine classifier.
    pub no_cosine: bool,
    /// Skip the coarse stage entirely.
    pub no_binary: bool,
    pub fusion: FusionMode,
    /// Optimize coarse and fine losses together for every epoch.
    pub joint_objective: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            no_contrast: false,
            no_cosine: false,
            no_binary: false,
            fusion: FusionMode::Weighted,
            joint_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Total epochs over both stages.
    pub epochs: usize,
    /// Coarse-stage epochs; defaults to a fifth of `epochs`.
    pub stage1_epochs: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Validation evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub tau: f64,
    pub gamma: f64,
    pub dropout: f64,
    pub heads: usize,
    pub ffn_mult: usize,
    pub positional: bool,
    pub fusion_hidden: usize,
    /// Contrastive projection width; defaults to the text width.
    pub contrast_dim: Option<usize>,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 100,
            stage1_epochs: None,
            lr: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 8,
            seed: 0,
            tau: 2.0,
            gamma: 16.0,
            dropout: 0.1,
            heads: 4,
            ffn_mult: 2,
            positional: false,
            fusion_hidden: 256,
            contrast_dim: None,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let p = |name, reason: String| Err(Error::param("heads_losses", name, reason));
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return p("batch_size", format!("must be even and positive, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return p("epochs", "must be positive".into());
        }
        if let Some(s1) = self.stage1_epochs {
            if s1 > self.epochs {
                return p("stage1_epochs", format!("{s1} exceeds the {} total epochs", self.epochs));
            }
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return p("lr", format!("must be finite and non-negative, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return p("weight_decay", format!("must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return p("beta1/beta2", "must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return p("adam_eps", "must be positive".into());
        }
        if !(self.tau > 0.0) {
            return p("tau", format!("must be positive, got {}", self.tau));
        }
        if !(self.gamma > 0.0) {
            return p("gamma", format!("must be positive, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return p("dropout", format!("must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn stage1_epochs(&self) -> usize {
        if self.ablation.no_binary || self.ablation.joint_objective {
            return 0;
        }
        self.stage1_epochs.unwrap_or(self.epochs / 5)
    }

    pub fn model_config(&self, corpus: &Corpus) -> ModelConfig {
        let mut m = ModelConfig::for_corpus(corpus.k(), corpus.shapes());
        m.heads = self.heads;
        m.ffn_mult = self.ffn_mult;
        m.positional = self.positional;
        m.fusion_hidden = self.fusion_hidden;
        m.fusion = self.ablation.fusion;
        m.dropout = self.dropout;
        m.classifier = if self.ablation.no_cosine {
            ClassifierKind::Linear
        } else {
            ClassifierKind::Cosine
        };
        m.gamma = self.gamma;
        if let Some(d) = self.contrast_dim {
            m.contrast_dim = d;
        }
        m
    }
}

/// The ablation rows compared against the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Add,
    Concat,
    NoContrast,
    NoCosine,
    NoBinary,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Add,
        Variant::Concat,
        Variant::NoContrast,
        Variant::NoCosine,
        Variant::NoBinary,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Add => "add",
            Variant::Concat => "concat",
            Variant::NoContrast => "no_contrast",
            Variant::NoCosine => "no_cosine",
            Variant::NoBinary => "no_binary",
        }
    }

    /// Row label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::Add => "Fusion (Add)",
            Variant::Concat => "Fusion (Concat)",
            Variant::NoContrast => "w / o Contrast",
            Variant::NoCosine => "w / o Cosine",
            Variant::NoBinary => "w / o Binary",
        }
    }

    /// Applies this variant on top of a full configuration.
    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let mut c = cfg.clone();
        c.ablation = Ablation {
            joint_objective: cfg.ablation.joint_objective,
            ..Ablation::default()
        };
        match self {
            Variant::Full => {}
            Variant::Add => c.ablation.fusion = FusionMode::Add,
            Variant::Concat => c.ablation.fusion = FusionMode::Concat,
            Variant::NoContrast => c.ablation.no_contrast = true,
            Variant::NoCosine => c.ablation.no_cosine = true,
            Variant::NoBinary => c.ablation.no_binary = true,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::param("cli", "ablation", format!("unknown variant '{s}'")))
    }
}

/// Adaptive moments with decoupled weight decay. Only parameters that
/// receive a gradient in a step are touched by that step.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Option<Tensor2>>,
    v: Vec<Option<Tensor2>>,
    t: Vec<u32>,
}

impl AdamW {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            m: vec![None; n_params],
            v: vec![None; n_params],
            t: vec![0; n_params],
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor2)]) {
        for (id, g) in grads {
            let i = id.index();
            self.t[i] += 1;
            let t = self.t[i] as i32;
            let (b1, b2) = (self.beta1, self.beta2);
            let m = self.m[i].get_or_insert_with(|| Tensor2::zeros(g.rows(), g.cols()));
            let v = self.v[i].get_or_insert_with(|| Tensor2::zeros(g.rows(), g.cols()));
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let p = store.get_mut(*id);
            for (((pe, &ge), me), ve) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *me = b1 * *me + (1.0 - b1) * ge;
                *ve = b2 * *ve + (1.0 - b2) * ge * ge;
                let mh = *me / c1;
                let vh = *ve / c2;
                *pe -= self.lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * *pe);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Coarse,
    Fine,
    Joint,
}

/// Loss nodes of one batch; absent terms are `None`.
#[derive(Debug, Clone, Copy)]
pub struct BatchLosses {
    pub total: Var,
    pub coarse: Option<Var>,
    pub multiclass: Option<Var>,
    pub contrastive: Option<Var>,
}

/// Builds the objective of `stage` on a mixed batch.
///
/// The contrastive second view re-runs fusion and the projection with fresh
/// dropout masks on the same encoder outputs.
pub fn batch_objective(
    model: &Model,
    g: &mut Graph<'_>,
    batch: &Batch,
    stage: Stage,
    cfg: &TrainConfig,
    mut dropout_rng: Option<&mut RngState>,
) -> Result<BatchLosses> {
    let refs: Vec<&Sequences> = batch.seqs.iter().collect();
    let xs = model.encode(g, &refs)?;
    let fused = model.fuse(g, xs, dropout_rng.as_deref_mut());
    let mut terms = Vec::new();

    let coarse = if matches!(stage, Stage::Coarse | Stage::Joint) {
        let logits = model.binary_logits(g, fused.z);
        let l = coarse_loss(&mut g.tape, logits, &batch.flags())?;
        terms.push(l);
        Some(l)
    } else {
        None
    };

    let (mut multiclass, mut contrastive) = (None, None);
    if matches!(stage, Stage::Fine | Stage::Joint) {
        let id_rows: Vec<usize> = (0..batch.len()).filter(|&i| batch.labels[i].is_id()).collect();
        if !id_rows.is_empty() {
            let z_id = g.tape.gather_rows(fused.z, id_rows.clone());
            let logits = model.class_logits(g, z_id);
            let labels: Vec<Label> = id_rows.iter().map(|&i| batch.labels[i]).collect();
            let l = multiclass_loss(&mut g.tape, logits, &labels)?;
            terms.push(l);
            multiclass = Some(l);
        }
        if !cfg.ablation.no_contrast {
            let second = model.fuse(g, xs, dropout_rng.as_deref_mut());
            let a = model.contrast_view(g, fused.z, dropout_rng.as_deref_mut());
            let b = model.contrast_view(g, second.z, dropout_rng.as_deref_mut());
            let views = g.tape.concat_rows(vec![a, b]);
            let l = contrastive_loss(&mut g.tape, views, &batch.labels, cfg.tau)?;
            terms.push(l);
            contrastive = Some(l);
        }
    }
    if terms.is_empty() {
        return Err(Error::Contract("batch objective has no active terms".into()));
    }
    let total = g.tape.sum_scalars(&terms);
    Ok(BatchLosses {
        total,
        coarse,
        multiclass,
        contrastive,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub loss: f64,
    pub loss_coarse: Option<f64>,
    pub loss_multiclass: Option<f64>,
    pub loss_contrastive: Option<f64>,
    pub batches: usize,
    /// Half-batches with a single class cannot seed pseudo-OOD samples.
    pub skipped_batches: usize,
    pub valid_acc: Option<f64>,
    pub valid_wf1: Option<f64>,
}

/// Fused features, logits and labels of the training split under the
/// final parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCache {
    pub features: Tensor2,
    pub logits: Tensor2,
    pub labels: Vec<usize>,
}

impl FeatureCache {
    pub fn compute(model: &Model, records: &[&UtteranceRecord]) -> Result<Self> {
        let refs: Vec<&Sequences> = records.iter().map(|r| &r.seqs).collect();
        let inf = model.infer(&refs)?;
        let labels = records
            .iter()
            .map(|r| {
                r.label
                    .class()
                    .ok_or_else(|| Error::Contract(format!("training record {} is OOD", r.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            features: inf.features,
            logits: inf.logits,
            labels,
        })
    }

    pub fn fit_scorers(&self, k: usize) -> Result<FittedScorers> {
        FittedScorers::fit(&self.features, &self.labels, &self.logits, k)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub cache: FeatureCache,
    pub scorers: FittedScorers,
    pub best_epoch: Option<usize>,
    pub best_valid_wf1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trained: TrainedModel,
    pub log: Vec<EpochRecord>,
}

/// Validation accuracy and WF1 over ID records.
pub fn validate_model(model: &Model, records: &[&UtteranceRecord]) -> Result<(f64, f64)> {
    let refs: Vec<&Sequences> = records.iter().map(|r| &r.seqs).collect();
    let inf = model.infer(&refs)?;
    let preds: Vec<usize> = inf.logits.iter_rows().map(argmax).collect();
    let golds: Vec<usize> = records.iter().filter_map(|r| r.label.class()).collect();
    let m = id_metrics(&preds, &golds, model.config.k)?;
    Ok((m.acc, m.wf1))
}

fn to_batch(records: &[&UtteranceRecord], idx: &[usize]) -> Batch {
    Batch {
        seqs: idx.iter().map(|&i| records[i].seqs.clone()).collect(),
        labels: idx.iter().map(|&i| records[i].label).collect(),
    }
}

fn has_two_classes(batch: &Batch) -> bool {
    let first = batch.labels[0];
    batch.labels.iter().any(|&l| l != first)
}

pub fn train(corpus: &Corpus, cfg: &TrainConfig, ood: &OodGenConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ood.validate()?;
    let train_recs = corpus.split(Split::Train);
    let valid_recs = corpus.split(Split::Valid);
    if train_recs.is_empty() {
        return Err(Error::InsufficientData {
            module: "heads_losses",
            reason: "training split is empty".into(),
        });
    }

    let mut root = RngState::new(cfg.seed);
    let mut init_rng = root.fork();
    let mut data_rng = root.fork();
    let mut dropout_rng = root.fork();

    let mut model = Model::new(cfg.model_config(corpus), &mut init_rng)?;
    let mut opt = AdamW::new(model.store.len(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    let stage1 = cfg.stage1_epochs();

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let stage = if cfg.ablation.joint_objective {
            Stage::Joint
        } else if epoch < stage1 {
            Stage::Coarse
        } else {
            Stage::Fine
        };
        let halves = make_batches(&train_recs, cfg.batch_size, &mut data_rng)?;
        let mut sums = [0.0f64; 4];
        let mut seen = [false; 3];
        let (mut used, mut skipped) = (0usize, 0usize);
        for (bi, idx) in halves.iter().enumerate() {
            let id_half = to_batch(&train_recs, idx);
            if !has_two_classes(&id_half) {
                skipped += 1;
                continue;
            }
            let mixed = build_mixed_batch(&id_half, ood, &mut data_rng)?;
            let (grads, values) = {
                let mut g = Graph::new(&model.store);
                let losses = batch_objective(&model, &mut g, &mixed, stage, cfg, Some(&mut dropout_rng))?;
                let total = g.tape.scalar(losses.total);
                if !total.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch: bi,
                        reason: format!("loss is {total}"),
                    });
                }
                let part = |v: Option<Var>| v.map(|v| g.tape.scalar(v));
                let values = [
                    Some(total),
                    part(losses.coarse),
                    part(losses.multiclass),
                    part(losses.contrastive),
                ];
                (g.param_grads(losses.total), values)
            };
            if let Some((id, _)) = grads.iter().find(|(_, t)| !t.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi,
                    reason: format!("non-finite gradient for {}", model.store.name(*id)),
                });
            }
            opt.step(&mut model.store, &grads);
            for (j, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    sums[j] += v;
                    if j > 0 {
                        seen[j - 1] = true;
                    }
                }
            }
            used += 1;
        }
        let mean = |j: usize| if used == 0 { 0.0 } else { sums[j] / used as f64 };
        let mut record = EpochRecord {
            epoch,
            stage,
            loss: mean(0),
            loss_coarse: seen[0].then(|| mean(1)),
            loss_multiclass: seen[1].then(|| mean(2)),
            loss_contrastive: seen[2].then(|| mean(3)),
            batches: used,
            skipped_batches: skipped,
            valid_acc: None,
            valid_wf1: None,
        };

        let mut stop = false;
        if stage != Stage::Coarse && !valid_recs.is_empty() {
            let (acc, wf1) = validate_model(&model, &valid_recs)?;
            record.valid_acc = Some(acc);
            record.valid_wf1 = Some(wf1);
            if best.as_ref().map_or(true, |(b, _, _)| wf1 > *b) {
                best = Some((wf1, epoch, model.store.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                stop = since_best >= cfg.patience;
            }
        }
        log.push(record);
        if stop {
            break;
        }
    }

    let (best_epoch, best_valid_wf1) = match best {
        Some((wf1, epoch, store)) => {
            model = Model::from_store(model.config.clone(), store)?;
            (Some(epoch), Some(wf1))
        }
        None => (None, None),
    };
    let cache = FeatureCache::compute(&model, &train_recs)?;
    let scorers = cache.fit_scorers(corpus.k())?;
    Ok(TrainOutcome {
        trained: TrainedModel {
            model,
            cache,
            scorers,
            best_epoch,
            best_valid_wf1,
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::numerics::gradcheck::{assert_gradients_match, finite_difference, STEP};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            epochs: 4,
            heads: 2,
            fusion_hidden: 8,
            lr: 3e-3,
            ..TrainConfig::default()
        }
    }

    fn tiny_corpus(seed: u64) -> Corpus {
        synth_corpus(&SynthConfig::small(3), &mut RngState::new(seed)).unwrap()
    }

    #[test]
    fn adamw_first_step_closed_form() {
        let mut store = ParamStore::new();
        let id = store.insert("p", Tensor2::row_vector(&[1.0, -2.0])).unwrap();
        let mut opt = AdamW::new(1, 0.1, 0.9, 0.999, 1e-8, 0.01);
        opt.step(&mut store, &[(id, Tensor2::row_vector(&[0.5, -3.0]))]);
        // Bias-corrected first step moves each entry by lr·sign(g), plus decay.
        let want = [1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01), -2.0 - 0.1 * (-3.0 / (3.0 + 1e-8) + 0.01 * -2.0)];
        for (a, b) in store.get(id).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let corpus = tiny_corpus(1);
        let cfg = TrainConfig { lr: 0.0, ..tiny_cfg() };
        let out = train(&corpus, &cfg, &OodGenConfig::default()).unwrap();
        let fresh = Model::new(cfg.model_config(&corpus), &mut RngState::new(cfg.seed).fork()).unwrap();
        assert_eq!(out.trained.model.store, fresh.store);
        let wf1: Vec<f64> = out.log.iter().filter_map(|r| r.valid_wf1).collect();
        assert!(wf1.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let corpus = tiny_corpus(2);
        let a = train(&corpus, &tiny_cfg(), &OodGenConfig::default()).unwrap();
        let b = train(&corpus, &tiny_cfg(), &OodGenConfig::default()).unwrap();
        assert_eq!(a.trained.model.store, b.trained.model.store);
        assert_eq!(a.log, b.log);
        let c = train(&corpus, &TrainConfig { seed: 9, ..tiny_cfg() }, &OodGenConfig::default()).unwrap();
        assert_ne!(a.trained.model.store, c.trained.model.store);
    }

    #[test]
    fn stage_schedule_follows_flags() {
        let corpus = tiny_corpus(3);
        let cfg = TrainConfig { epochs: 5, stage1_epochs: Some(2), patience: 100, ..tiny_cfg() };
        let out = train(&corpus, &cfg, &OodGenConfig::default()).unwrap();
        let stages: Vec<Stage> = out.log.iter().map(|r| r.stage).collect();
        assert_eq!(stages, [Stage::Coarse, Stage::Coarse, Stage::Fine, Stage::Fine, Stage::Fine]);
        assert!(out.log[0].loss_coarse.is_some() && out.log[0].loss_multiclass.is_none());
        assert!(out.log[2].loss_coarse.is_none() && out.log[2].loss_contrastive.is_some());

        let mut nb = cfg.clone();
        nb.ablation.no_binary = true;
        let out = train(&corpus, &nb, &OodGenConfig::default()).unwrap();
        assert!(out.log.iter().all(|r| r.stage == Stage::Fine));

        let mut nc = cfg.clone();
        nc.ablation.no_contrast = true;
        let out = train(&corpus, &nc, &OodGenConfig::default()).unwrap();
        let fine = out.log.iter().find(|r| r.stage == Stage::Fine).unwrap();
        assert!(fine.loss_contrastive.is_none());
        assert_eq!(fine.loss, fine.loss_multiclass.unwrap());

        let mut joint = cfg;
        joint.ablation.joint_objective = true;
        let out = train(&corpus, &joint, &OodGenConfig::default()).unwrap();
        let r = &out.log[0];
        assert_eq!(r.stage, Stage::Joint);
        assert!(r.loss_coarse.is_some() && r.loss_multiclass.is_some() && r.loss_contrastive.is_some());
    }

    /// Names of parameters that moved during training.
    fn moved(cfg: &TrainConfig, corpus: &Corpus) -> (Vec<String>, ParamStore) {
        let out = train(corpus, cfg, &OodGenConfig::default()).unwrap();
        let fresh = Model::new(cfg.model_config(corpus), &mut RngState::new(cfg.seed).fork()).unwrap();
        let names = fresh
            .store
            .iter()
            .filter(|(n, t)| out.trained.model.store.by_name(n) != Some(*t))
            .map(|(n, _)| n.to_string())
            .collect();
        (names, out.trained.model.store)
    }

    #[test]
    fn ablation_parameter_audit() {
        let corpus = tiny_corpus(4);
        let base = TrainConfig { epochs: 3, stage1_epochs: Some(1), patience: 100, ..tiny_cfg() };
        let (full, _) = moved(&base, &corpus);
        for prefix in ["encoder.", "fusion.", "binary.", "classifier.cosine_weight", "contrast.project"] {
            assert!(full.iter().any(|n| n.starts_with(prefix)), "{prefix} never moved");
        }

        let (nb, _) = moved(&Variant::NoBinary.apply(&base), &corpus);
        assert!(!nb.iter().any(|n| n.starts_with("binary.")));
        assert!(nb.iter().any(|n| n.starts_with("contrast.")));

        let (nc, _) = moved(&Variant::NoContrast.apply(&base), &corpus);
        assert!(!nc.iter().any(|n| n.starts_with("contrast.")));
        assert!(nc.iter().any(|n| n.starts_with("binary.")));

        let (lin, store) = moved(&Variant::NoCosine.apply(&base), &corpus);
        assert!(store.by_name("classifier.cosine_weight").is_none());
        assert!(lin.iter().any(|n| n.starts_with("classifier.linear")));

        let (_, store) = moved(&Variant::Add.apply(&base), &corpus);
        assert!(!store.iter().any(|(n, _)| n.starts_with("fusion.")));
        let (cat, _) = moved(&Variant::Concat.apply(&base), &corpus);
        assert!(cat.iter().any(|n| n.starts_with("fusion.concat")));
    }

    #[test]
    fn variant_labels_and_names() {
        let labels: Vec<&str> = Variant::ALL.iter().map(|v| v.label()).collect();
        assert_eq!(
            labels,
            ["Fusion (Add)", "Fusion (Concat)", "w / o Contrast", "w / o Cosine", "w / o Binary", "Full"]
        );
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let corpus = tiny_corpus(5);
        let ood = OodGenConfig::default();
        for bad in [
            TrainConfig { batch_size: 7, ..tiny_cfg() },
            TrainConfig { tau: 0.0, ..tiny_cfg() },
            TrainConfig { stage1_epochs: Some(9), ..tiny_cfg() },
            TrainConfig { lr: f64::NAN, ..tiny_cfg() },
        ] {
            assert!(matches!(train(&corpus, &bad, &ood), Err(Error::Parameter { .. })));
        }
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let corpus = tiny_corpus(6);
        let cfg = TrainConfig { lr: 1e300, weight_decay: 1e300, ..tiny_cfg() };
        match train(&corpus, &cfg, &OodGenConfig::default()) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch < cfg.epochs),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    /// Finite differences of a stage objective with respect to a few entries
    /// of every parameter group, with dropout masks replayed each evaluation.
    fn check_stage(stage: Stage, cfg: &TrainConfig) {
        let corpus = tiny_corpus(7);
        let mut model = Model::new(cfg.model_config(&corpus), &mut RngState::new(0)).unwrap();
        let recs = corpus.split(Split::Train);
        let id_half = to_batch(&recs, &[0, 1, 2, 3]);
        let batch = build_mixed_batch(&id_half, &OodGenConfig::default(), &mut RngState::new(1)).unwrap();
        let masks = RngState::new(2);

        let eval = |m: &Model| {
            let mut g = Graph::new(&m.store);
            let mut r = masks.clone();
            let l = batch_objective(m, &mut g, &batch, stage, cfg, Some(&mut r)).unwrap();
            g.tape.scalar(l.total)
        };
        let grads = {
            let mut g = Graph::new(&model.store);
            let mut r = masks.clone();
            let l = batch_objective(&model, &mut g, &batch, stage, cfg, Some(&mut r)).unwrap();
            g.param_grads(l.total)
        };
        assert!(!grads.is_empty());
        for (id, analytic) in grads {
            let orig = model.store.get(id).clone();
            // A handful of entries per tensor keeps the check fast.
            let picks: Vec<usize> = (0..orig.data().len()).step_by((orig.data().len() / 3).max(1)).collect();
            let mut a = Tensor2::zeros(1, picks.len());
            let mut n = Tensor2::zeros(1, picks.len());
            for (slot, &e) in picks.iter().enumerate() {
                a.data_mut()[slot] = analytic.data()[e];
                let probe = Tensor2::scalar(orig.data()[e]);
                let fd = finite_difference(&probe, STEP, |x| {
                    model.store.get_mut(id).data_mut()[e] = x.data()[0];
                    let v = eval(&model);
                    model.store.get_mut(id).data_mut()[e] = orig.data()[e];
                    v
                });
                n.data_mut()[slot] = fd.data()[0];
            }
            let name = model.store.name(id).to_string();
            assert_gradients_match(&format!("{stage:?} {name}"), &a, &n);
        }
    }

    #[test]
    fn stage_objectives_pass_gradient_check() {
        let cfg = TrainConfig { dropout: 0.2, ..tiny_cfg() };
        check_stage(Stage::Coarse, &cfg);
        check_stage(Stage::Fine, &cfg);
        check_stage(Stage::Fine, &Variant::NoCosine.apply(&cfg));
        check_stage(Stage::Joint, &Variant::Concat.apply(&cfg));
    }

    #[test]
    fn separable_corpus_reaches_high_validation_wf1() {
        let corpus = synth_corpus(&SynthConfig::default(), &mut RngState::new(0)).unwrap();
        let cfg = TrainConfig {
            epochs: 36,
            stage1_epochs: Some(6),
            patience: 100,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &cfg, &OodGenConfig::default()).unwrap();
        let best = out.trained.best_valid_wf1.unwrap();
        assert!(best >= 0.95, "validation WF1 {best}");
    }
}
