//! Optimization: decoupled-weight-decay adaptive-moment steps, warmup plus
//! cosine schedule, gradient accumulation, early stopping, two-stage
//! training, and test-time-augmented inference.

use crate::augment::{augment_sequence, tta_variants, AugmentConfig, PortableRng};
use crate::descriptors::{featurize, DescriptorConfig, FeatureVector};
use crate::diffcore::{NodeId, Tape, Tensor};
use crate::embed::{EmbeddingMatrix, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::metrics::{binary_metrics, macro_metrics, argmax, ConfusionCounts};
use crate::model::checkpoint::CheckpointMeta;
use crate::model::interpret::SampleOutput;
use crate::model::{
    build_input, forward, forward_graph, is_classifier_param, stage_params, Mode, ModelConfig,
    ModelParams,
};
use crate::objective::{
    consistency_loss_node, contrastive_loss_node, cosine_similarity, focal_loss_node,
    total_loss_node, ContrastConfig, ContrastState, FocalParams, LossWeights,
};
use crate::seqio::{LabeledDataset, PeptideSequence};
use crate::fmt_sig9;
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

/// Optimization hyperparameters for one stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub stage: u32,
    pub lr_peak: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub accum_steps: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn stage1() -> Self {
        Self {
            stage: 1,
            lr_peak: 1.2e-4,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_epochs: 5,
            max_epochs: 100,
            batch_size: 32,
            accum_steps: 2,
            patience: 10,
            seed: 0,
        }
    }

    /// Fine-tuning defaults: lower peak rate, no weight decay.
    pub fn stage2() -> Self {
        Self { stage: 2, lr_peak: 8.0e-5, weight_decay: 0.0, ..Self::stage1() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_peak <= 0.0 {
            return Err(Error::Config("train.lr_peak must be > 0".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("train.patience must be >= 1".into()));
        }
        if self.accum_steps < 1 {
            return Err(Error::Config("train.accum_steps must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.stage == 1 || self.stage == 2) {
            return Err(Error::Config(format!("train.stage must be 1 or 2, got {}", self.stage)));
        }
        Ok(())
    }
}

/// Linear warmup to the peak rate, then cosine decay to zero at
/// `max_epochs`. Continuous at the junction.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_epochs;
    if epoch < w {
        return cfg.lr_peak * epoch as f64 / w as f64;
    }
    if cfg.max_epochs <= w + 1 {
        return cfg.lr_peak;
    }
    let progress = (epoch - w) as f64 / (cfg.max_epochs - w) as f64;
    cfg.lr_peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// First/second moment accumulators, one per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One decoupled-weight-decay adaptive-moment update:
/// bias-corrected moments, then
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * weight_decay * theta`.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, grad) in grads {
        let theta = params
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("optimizer: unknown parameter `{name}`")))?;
        if grad.shape() != theta.shape() {
            return Err(Error::Shape(format!(
                "optimizer: grad {:?} vs param {:?} for `{name}`",
                grad.shape(),
                theta.shape()
            )));
        }
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(grad.shape().to_vec()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(grad.shape().to_vec()));
        let td = theta.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..td.len() {
            let g = grad.data()[i];
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * g;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            td[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.epsilon)) + lr * weight_decay * td[i];
        }
    }
    Ok(())
}

/// Per-sequence model input: contextual embedding plus descriptor vector.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    pub emb: EmbeddingMatrix,
    pub feat: FeatureVector,
}

/// Computes and caches model inputs behind an embedding provider.
pub struct FeatureExtractor {
    provider: Box<dyn EmbeddingProvider>,
    desc_cfg: DescriptorConfig,
    cache: Option<Mutex<HashMap<String, Arc<FeatureBundle>>>>,
}

impl FeatureExtractor {
    pub fn new(provider: Box<dyn EmbeddingProvider>, desc_cfg: DescriptorConfig) -> Self {
        Self { provider, desc_cfg, cache: Some(Mutex::new(HashMap::new())) }
    }

    /// Extractor that never caches (keeps long-running services bounded).
    pub fn new_uncached(provider: Box<dyn EmbeddingProvider>, desc_cfg: DescriptorConfig) -> Self {
        Self { provider, desc_cfg, cache: None }
    }

    pub fn embed_dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn descriptor_dim(&self) -> usize {
        crate::descriptors::total_dim(&self.desc_cfg)
    }

    pub fn descriptor_config(&self) -> &DescriptorConfig {
        &self.desc_cfg
    }

    pub fn supports_novel(&self) -> bool {
        self.provider.supports_novel()
    }

    /// Features for a dataset sequence, cached by id when caching is on.
    pub fn features(&self, seq: &PeptideSequence) -> Result<Arc<FeatureBundle>> {
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().expect("cache lock").get(seq.id()) {
                return Ok(hit.clone());
            }
        }
        let bundle = Arc::new(self.features_uncached(seq)?);
        if let Some(cache) = &self.cache {
            cache.lock().expect("cache lock").insert(seq.id().to_string(), bundle.clone());
        }
        Ok(bundle)
    }

    /// Compute features without touching the cache.
    pub fn features_uncached(&self, seq: &PeptideSequence) -> Result<FeatureBundle> {
        Ok(FeatureBundle {
            emb: self.provider.embed(seq)?,
            feat: featurize(seq, &self.desc_cfg)?,
        })
    }

    /// Features for an augmented variant of `base` (never cached).
    pub fn features_variant(
        &self,
        base: &PeptideSequence,
        variant: &PeptideSequence,
    ) -> Result<FeatureBundle> {
        Ok(FeatureBundle {
            emb: self.provider.embed_variant(base, variant)?,
            feat: featurize(variant, &self.desc_cfg)?,
        })
    }

    pub fn input(&self, bundle: &FeatureBundle) -> Result<Tensor> {
        build_input(&bundle.emb, &bundle.feat)
    }
}

/// Everything a training run needs beyond the datasets.
pub struct TrainSetup {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub contrast: ContrastConfig,
    pub weights: LossWeights,
    pub focal_gamma: f64,
    /// Class whose samples anchor the contrastive pairs; `None` disables
    /// the contrastive and consistency terms (plain focal training).
    pub positive_class: Option<usize>,
}

impl TrainSetup {
    pub fn stage1(model: ModelConfig, train: TrainConfig) -> Self {
        Self {
            model,
            train,
            augment: AugmentConfig::default(),
            contrast: ContrastConfig::default(),
            weights: LossWeights::default(),
            focal_gamma: 2.0,
            positive_class: Some(1),
        }
    }
}

/// One row of the training-dynamics log.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub total_loss: f64,
    pub contrastive_loss: f64,
    pub mean_pos_sim: f64,
    pub mean_hardneg_sim: f64,
    pub val_metric: f64,
}

/// Dynamics CSV: epoch, total loss, contrastive loss, mean positive-pair
/// similarity, mean hard-negative similarity, validation metric.
pub fn dynamics_csv(stats: &[EpochStats]) -> String {
    let mut s =
        String::from("epoch,total_loss,contrastive_loss,mean_pos_sim,mean_hardneg_sim,val_metric\n");
    for row in stats {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.epoch,
            fmt_sig9(row.total_loss),
            fmt_sig9(row.contrastive_loss),
            fmt_sig9(row.mean_pos_sim),
            fmt_sig9(row.mean_hardneg_sim),
            fmt_sig9(row.val_metric)
        ));
    }
    s
}

/// A finished training run: best parameters plus the dynamics trace.
pub struct TrainResult {
    pub params: ModelParams,
    pub model: ModelConfig,
    pub meta: CheckpointMeta,
    pub dynamics: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub epochs_run: usize,
}

/// Monitor metric on a dataset: MCC for binary tasks, macro-F1 otherwise.
pub fn monitor_metric(
    params: &ModelParams,
    cfg: &ModelConfig,
    extractor: &FeatureExtractor,
    ds: &LabeledDataset,
) -> Result<f64> {
    let mut truth = Vec::with_capacity(ds.len());
    let mut predicted = Vec::with_capacity(ds.len());
    for item in &ds.items {
        let bundle = extractor.features(item)?;
        let input = extractor.input(&bundle)?;
        let out = forward(params, cfg, &input)?;
        truth.push(item.label().expect("labeled dataset"));
        predicted.push(argmax(&out.probs));
    }
    if ds.class_count == 2 {
        let t: Vec<bool> = truth.iter().map(|&l| l == 1).collect();
        let p: Vec<bool> = predicted.iter().map(|&l| l == 1).collect();
        let c = ConfusionCounts::from_predictions(&t, &p)?;
        Ok(binary_metrics(&c)?.mcc)
    } else {
        Ok(macro_metrics(&truth, &predicted, ds.class_count)?.f1)
    }
}

// Gradient accumulator covering every parameter, so decay applies
// uniformly even when a term (and its gradient) is absent in a batch.
fn zero_grads(params: &ModelParams) -> BTreeMap<String, Tensor> {
    params.iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec()))).collect()
}

fn accumulate(acc: &mut BTreeMap<String, Tensor>, name: &str, grad: &Tensor, scale: f64) {
    let slot = acc.get_mut(name).expect("accumulator covers all params");
    let sd = slot.data_mut();
    for (s, g) in sd.iter_mut().zip(grad.data()) {
        *s += g * scale;
    }
}

struct BatchOutcome {
    grads: BTreeMap<String, Tensor>,
    total_loss: f64,
    contrastive_loss: f64,
    pos_sims: Vec<f64>,
    hardneg_sims: Vec<f64>,
    features: Vec<(Vec<f64>, bool)>,
}

#[allow(clippy::too_many_arguments)]
fn run_micro_batch(
    params: &ModelParams,
    setup: &TrainSetup,
    extractor: &FeatureExtractor,
    items: &[&PeptideSequence],
    fp: &FocalParams,
    state: &ContrastState,
    aug_rng: &mut PortableRng,
    dropout_rng: &mut PortableRng,
    sampling_rng: &mut PortableRng,
) -> Result<BatchOutcome> {
    let mut tape = Tape::new();
    let nodes = stage_params(&mut tape, params);
    let log_tau = nodes["log_temperature"];

    let mut prob_nodes = Vec::with_capacity(items.len());
    let mut labels = Vec::with_capacity(items.len());
    let mut e_final_nodes = Vec::with_capacity(items.len());
    let mut anchors = Vec::new();
    let mut positives = Vec::new();
    let mut negatives: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut consistency_terms = Vec::new();
    let mut pos_sims = Vec::new();
    let mut hardneg_sims = Vec::new();

    for item in items {
        let bundle = extractor.features(item)?;
        let input = extractor.input(&bundle)?;
        let g = forward_graph(
            &mut tape,
            &nodes,
            &setup.model,
            &input,
            &mut Mode::Train { dropout_rng },
        )?;
        let label = item.label().expect("labeled dataset");
        prob_nodes.push(g.probs);
        labels.push(label);
        e_final_nodes.push(g.e_final);

        if setup.positive_class == Some(label) {
            // Build the augmented twin. File-backed embeddings cannot
            // embed novel-length sequences, so those runs use
            // mutation-only twins (lengths preserved). Insertions may
            // outgrow the one-hot capacity; such twins are tail-truncated
            // so the feature config always accepts them.
            let twin = if extractor.supports_novel() {
                let raw = augment_sequence(item, &setup.augment, aug_rng)?;
                let cap = extractor.descriptor_config().binary_max_len;
                if raw.len() > cap {
                    PeptideSequence::new(raw.id().to_string(), raw.residues()[..cap].to_string())?
                        .with_label(raw.label())
                } else {
                    raw
                }
            } else {
                let cfg = AugmentConfig {
                    tta_variants: 1,
                    tta_mutate_prob: setup.augment.mutate_prob,
                    ..setup.augment.clone()
                };
                tta_variants(item, &cfg, aug_rng).pop().expect("one variant")
            };
            let twin_bundle = extractor.features_variant(item, &twin)?;
            let twin_input = extractor.input(&twin_bundle)?;
            let tg = forward_graph(
                &mut tape,
                &nodes,
                &setup.model,
                &twin_input,
                &mut Mode::Train { dropout_rng },
            )?;

            let negs = if state.negative_len() > 0 {
                state.sample_hard_negatives(state.config().hard_negatives, sampling_rng)?
            } else {
                Vec::new()
            };

            let anchor_val = tape.value(g.e_final).data().to_vec();
            let twin_val = tape.value(tg.e_final).data().to_vec();
            if let Ok(s) = cosine_similarity(&anchor_val, &twin_val) {
                pos_sims.push(s);
            }
            for n in &negs {
                if let Ok(s) = cosine_similarity(&anchor_val, n) {
                    hardneg_sims.push(s);
                }
            }

            anchors.push(g.e_final);
            positives.push(tg.e_final);
            negatives.push(negs);
            consistency_terms.push((g.probs, tg.probs));
        }
    }

    let l_cls = focal_loss_node(&mut tape, &prob_nodes, &labels, fp)?;
    let l_con = contrastive_loss_node(&mut tape, &anchors, &positives, &negatives, log_tau)?;
    let l_cons = if consistency_terms.is_empty() {
        tape.leaf(Tensor::scalar(0.0))
    } else {
        let mut acc: Option<NodeId> = None;
        for &(p, q) in &consistency_terms {
            let term = consistency_loss_node(&mut tape, p, q)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        tape.scale(acc.expect("non-empty"), 1.0 / consistency_terms.len() as f64)
    };
    let total = total_loss_node(&mut tape, l_con, l_cls, l_cons, &setup.weights)?;

    let node_grads = tape.backward(total)?;
    let mut grads = zero_grads(params);
    for (name, &id) in &nodes {
        if let Some(g) = node_grads.get(id) {
            accumulate(&mut grads, name, g, 1.0);
        }
    }

    let features = e_final_nodes
        .iter()
        .zip(&labels)
        .map(|(&id, &label)| {
            (tape.value(id).data().to_vec(), setup.positive_class == Some(label))
        })
        .collect();

    Ok(BatchOutcome {
        grads,
        total_loss: tape.value(total).item(),
        contrastive_loss: tape.value(l_con).item(),
        pos_sims,
        hardneg_sims,
        features,
    })
}

fn mean_or(values: &[f64], fallback: f64) -> f64 {
    if values.is_empty() {
        fallback
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// The shared training loop. Per optimizer step, gradients of
/// `accum_steps` micro-batch losses are averaged; the monitor metric on
/// the validation set drives early stopping and best-checkpoint
/// selection.
pub fn fit(
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    extractor: &FeatureExtractor,
    setup: &TrainSetup,
    init: ModelParams,
) -> Result<TrainResult> {
    setup.train.validate()?;
    setup.model.validate()?;
    setup.augment.validate()?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::Stratify("training and validation sets must be non-empty".into()));
    }

    let fp = FocalParams::from_class_counts(&train_ds.class_counts(), setup.focal_gamma)?;
    let mut contrast = ContrastState::new(setup.contrast.clone())?;
    let mut params = init;
    let mut opt = OptimizerState::new();

    let mut master = PortableRng::new(setup.train.seed);
    let mut shuffle_rng = master.fork();
    let mut aug_rng = master.fork();
    let mut dropout_rng = master.fork();
    let mut sampling_rng = master.fork();

    let mut best_params = params.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0usize;
    let mut dynamics = Vec::new();
    let mut epochs_run = 0;

    let (tau_min, tau_max) = (setup.contrast.tau_min, setup.contrast.tau_max);

    for epoch in 0..setup.train.max_epochs {
        epochs_run = epoch + 1;
        let lr = lr_at(epoch, &setup.train);

        let mut order: Vec<usize> = (0..train_ds.len()).collect();
        shuffle_rng.shuffle(&mut order);
        let micro_batches: Vec<Vec<usize>> =
            order.chunks(setup.train.batch_size).map(|c| c.to_vec()).collect();

        let mut losses = Vec::new();
        let mut con_losses = Vec::new();
        let mut pos_sims = Vec::new();
        let mut hardneg_sims = Vec::new();

        for group in micro_batches.chunks(setup.train.accum_steps) {
            let mut grads = zero_grads(&params);
            let scale = 1.0 / group.len() as f64;
            for micro in group {
                let items: Vec<&PeptideSequence> =
                    micro.iter().map(|&i| &train_ds.items[i]).collect();
                let outcome = run_micro_batch(
                    &params,
                    setup,
                    extractor,
                    &items,
                    &fp,
                    &contrast,
                    &mut aug_rng,
                    &mut dropout_rng,
                    &mut sampling_rng,
                )?;
                for (name, g) in &outcome.grads {
                    accumulate(&mut grads, name, g, scale);
                }
                losses.push(outcome.total_loss);
                con_losses.push(outcome.contrastive_loss);
                pos_sims.extend(outcome.pos_sims);
                hardneg_sims.extend(outcome.hardneg_sims);
                contrast.update_queues(&outcome.features)?;
            }
            optimizer_step(&mut params, &grads, &mut opt, &setup.train, lr, setup.train.weight_decay)?;
            if let Some(t) = params.get_mut("log_temperature") {
                let v = t.data_mut();
                v[0] = v[0].clamp(tau_min.ln(), tau_max.ln());
            }
        }

        let val_metric = monitor_metric(&params, &setup.model, extractor, val_ds)?;
        dynamics.push(EpochStats {
            epoch,
            total_loss: mean_or(&losses, 0.0),
            contrastive_loss: mean_or(&con_losses, 0.0),
            mean_pos_sim: mean_or(&pos_sims, 0.0),
            mean_hardneg_sim: mean_or(&hardneg_sims, 0.0),
            val_metric,
        });

        if val_metric > best_metric {
            best_metric = val_metric;
            best_params = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= setup.train.patience {
                break;
            }
        }
    }

    let meta = CheckpointMeta {
        stage: setup.train.stage,
        epoch: best_epoch,
        metric_name: if setup.model.class_count == 2 { "mcc".into() } else { "macro_f1".into() },
        metric_value: if best_metric.is_finite() { best_metric } else { -1.0 },
    };
    Ok(TrainResult {
        params: best_params,
        model: setup.model.clone(),
        meta,
        dynamics,
        best_epoch,
        best_metric,
        epochs_run,
    })
}

/// Stage-1 pretraining from fresh parameters.
pub fn fit_stage1(
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    extractor: &FeatureExtractor,
    setup: &TrainSetup,
) -> Result<TrainResult> {
    let init = ModelParams::init(&setup.model, setup.train.seed)?;
    fit(train_ds, val_ds, extractor, setup, init)
}

/// Transfer fine-tuning: every non-classifier tensor is initialized from
/// the base checkpoint (shapes must match), the classifier head is
/// re-initialized from the stage-2 seed, then training proceeds as usual.
pub fn finetune_stage2(
    base_params: &ModelParams,
    base_cfg: &ModelConfig,
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    extractor: &FeatureExtractor,
    setup: &TrainSetup,
) -> Result<TrainResult> {
    let init = transfer_init(base_params, base_cfg, &setup.model, setup.train.seed)?;
    if setup.train.max_epochs == 0 {
        // Zero-budget contract: hand back the transferred initialization.
        let meta = CheckpointMeta {
            stage: setup.train.stage,
            epoch: 0,
            metric_name: "none".into(),
            metric_value: -1.0,
        };
        return Ok(TrainResult {
            params: init,
            model: setup.model.clone(),
            meta,
            dynamics: Vec::new(),
            best_epoch: 0,
            best_metric: f64::NEG_INFINITY,
            epochs_run: 0,
        });
    }
    fit(train_ds, val_ds, extractor, setup, init)
}

/// Build stage-2 initial parameters from a stage-1 checkpoint.
pub fn transfer_init(
    base_params: &ModelParams,
    base_cfg: &ModelConfig,
    new_cfg: &ModelConfig,
    seed: u64,
) -> Result<ModelParams> {
    let feature_dims_match = base_cfg.embed_dim == new_cfg.embed_dim
        && base_cfg.descriptor_dim == new_cfg.descriptor_dim
        && base_cfg.conv_kernel_sizes == new_cfg.conv_kernel_sizes
        && base_cfg.conv_channels == new_cfg.conv_channels
        && base_cfg.lstm_hidden == new_cfg.lstm_hidden
        && base_cfg.gate_hidden == new_cfg.gate_hidden
        && base_cfg.f_match_identity == new_cfg.f_match_identity
        && base_cfg.per_dim_gate == new_cfg.per_dim_gate;
    if !feature_dims_match {
        return Err(Error::Mismatch(format!(
            "feature-extractor dimensions differ between checkpoint and config: {base_cfg:?} vs {new_cfg:?}"
        )));
    }
    let mut fresh = ModelParams::init(new_cfg, seed)?;
    let names: Vec<String> =
        fresh.iter().map(|(n, _)| n.clone()).filter(|n| !is_classifier_param(n)).collect();
    for name in names {
        let from = base_params.get(&name).map_err(|_| {
            Error::Mismatch(format!("checkpoint is missing feature parameter `{name}`"))
        })?;
        let into = fresh.get_mut(&name).expect("fresh params cover the architecture");
        if from.shape() != into.shape() {
            return Err(Error::Mismatch(format!(
                "parameter `{name}`: checkpoint shape {:?} vs config shape {:?}",
                from.shape(),
                into.shape()
            )));
        }
        *into = from.clone();
    }
    Ok(fresh)
}

/// Inference probabilities averaged over the original sequence and its
/// mutation-only augmentation variants.
pub fn tta_predict(
    params: &ModelParams,
    cfg: &ModelConfig,
    extractor: &FeatureExtractor,
    seq: &PeptideSequence,
    aug_cfg: &AugmentConfig,
    rng: &mut PortableRng,
) -> Result<Vec<f64>> {
    let bundle = extractor.features(seq)?;
    let input = extractor.input(&bundle)?;
    let mut mean = forward(params, cfg, &input)?.probs;
    let variants = tta_variants(seq, aug_cfg, rng);
    for variant in &variants {
        let vb = extractor.features_variant(seq, variant)?;
        let vi = extractor.input(&vb)?;
        let probs = forward(params, cfg, &vi)?.probs;
        for (m, p) in mean.iter_mut().zip(&probs) {
            *m += p;
        }
    }
    let n = (variants.len() + 1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Eval-mode outputs for a batch of sequences, packaged for exports.
pub fn predict_outputs(
    params: &ModelParams,
    cfg: &ModelConfig,
    extractor: &FeatureExtractor,
    items: &[PeptideSequence],
) -> Result<Vec<SampleOutput>> {
    items
        .iter()
        .map(|item| {
            let bundle = extractor.features(item)?;
            let input = extractor.input(&bundle)?;
            let out = forward(params, cfg, &input)?;
            Ok(SampleOutput {
                id: item.id().to_string(),
                residues: item.residues().to_string(),
                label: item.label(),
                out,
            })
        })
        .collect()
}
