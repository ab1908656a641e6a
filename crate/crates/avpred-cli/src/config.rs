//! Flat `key = value` run configuration.
//!
//! Every knob of every pipeline stage lives here with a documented
//! default; unknown keys are rejected. `dump()` emits a file that parses
//! back to the same configuration (a fixed point).

use avpred::augment::AugmentConfig;
use avpred::descriptors::DescriptorConfig;
use avpred::error::{Error, Result};
use avpred::model::ModelConfig;
use avpred::objective::{ContrastConfig, LossWeights};
use avpred::seqio::LengthBounds;
use avpred::train::{TrainConfig, TrainSetup};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub bounds: LengthBounds,
    pub descriptor: DescriptorConfig,
    pub augment: AugmentConfig,
    pub contrast: ContrastConfig,

    pub conv_kernel_sizes: Vec<usize>,
    pub conv_channels: usize,
    pub lstm_hidden: usize,
    pub gate_hidden: usize,
    pub mlp_hidden: Vec<usize>,
    pub dropout: f64,
    pub f_match_identity: bool,
    pub per_dim_gate: bool,

    pub lr_peak_stage1: f64,
    pub lr_peak_stage2: f64,
    pub weight_decay_stage1: f64,
    pub weight_decay_stage2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub accum_steps: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,

    pub contrastive_weight: f64,
    pub consistency_weight: f64,
    pub focal_gamma: f64,
    /// Contrastive anchor class; `None` turns the contrastive and
    /// consistency terms off.
    pub positive_class: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::stage1();
        let stage2 = TrainConfig::stage2();
        let weights = LossWeights::default();
        Self {
            bounds: LengthBounds::default(),
            descriptor: DescriptorConfig::default(),
            augment: AugmentConfig::default(),
            contrast: ContrastConfig::default(),
            conv_kernel_sizes: vec![3, 5],
            conv_channels: 64,
            lstm_hidden: 64,
            gate_hidden: 32,
            mlp_hidden: vec![128, 64],
            dropout: 0.3,
            f_match_identity: false,
            per_dim_gate: false,
            lr_peak_stage1: train.lr_peak,
            lr_peak_stage2: stage2.lr_peak,
            weight_decay_stage1: train.weight_decay,
            weight_decay_stage2: stage2.weight_decay,
            beta1: train.beta1,
            beta2: train.beta2,
            epsilon: train.epsilon,
            warmup_epochs: train.warmup_epochs,
            max_epochs: train.max_epochs,
            batch_size: train.batch_size,
            accum_steps: train.accum_steps,
            patience: train.patience,
            val_fraction: 0.1,
            seed: 0,
            contrastive_weight: weights.contrastive(),
            consistency_weight: weights.consistency(),
            focal_gamma: 2.0,
            positive_class: Some(1),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for key `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("bad bool `{value}` for key `{key}` (true/false)"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn list_str(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seqio.min_len" => self.bounds.min = parse_num(key, value)?,
            "seqio.max_len" => self.bounds.max = parse_num(key, value)?,
            "descriptor.cksaagp_max_gap" => self.descriptor.cksaagp_max_gap = parse_num(key, value)?,
            "descriptor.distpair_max_dist" => self.descriptor.distpair_max_dist = parse_num(key, value)?,
            "descriptor.paac_lambda" => self.descriptor.paac_lambda = parse_num(key, value)?,
            "descriptor.paac_weight" => self.descriptor.paac_weight = parse_num(key, value)?,
            "descriptor.qso_nlag" => self.descriptor.qso_nlag = parse_num(key, value)?,
            "descriptor.qso_weight" => self.descriptor.qso_weight = parse_num(key, value)?,
            "descriptor.binary_max_len" => self.descriptor.binary_max_len = parse_num(key, value)?,
            "augment.n_fragments" => self.augment.n_fragments = parse_num(key, value)?,
            "augment.m_steps" => self.augment.m_steps = parse_num(key, value)?,
            "augment.insert_prob" => self.augment.insert_prob = parse_num(key, value)?,
            "augment.delete_prob" => self.augment.delete_prob = parse_num(key, value)?,
            "augment.mutate_prob" => self.augment.mutate_prob = parse_num(key, value)?,
            "augment.tta_variants" => self.augment.tta_variants = parse_num(key, value)?,
            "augment.tta_mutate_prob" => self.augment.tta_mutate_prob = parse_num(key, value)?,
            "contrast.queue_pos" => self.contrast.queue_pos = parse_num(key, value)?,
            "contrast.queue_neg" => self.contrast.queue_neg = parse_num(key, value)?,
            "contrast.hard_negatives" => self.contrast.hard_negatives = parse_num(key, value)?,
            "contrast.sampling_sharpness" => self.contrast.sampling_sharpness = parse_num(key, value)?,
            "contrast.tau_min" => self.contrast.tau_min = parse_num(key, value)?,
            "contrast.tau_max" => self.contrast.tau_max = parse_num(key, value)?,
            "model.conv_kernel_sizes" => self.conv_kernel_sizes = parse_list(key, value)?,
            "model.conv_channels" => self.conv_channels = parse_num(key, value)?,
            "model.lstm_hidden" => self.lstm_hidden = parse_num(key, value)?,
            "model.gate_hidden" => self.gate_hidden = parse_num(key, value)?,
            "model.mlp_hidden" => self.mlp_hidden = parse_list(key, value)?,
            "model.dropout" => self.dropout = parse_num(key, value)?,
            "model.f_match_identity" => self.f_match_identity = parse_bool(key, value)?,
            "model.per_dim_gate" => self.per_dim_gate = parse_bool(key, value)?,
            "train.lr_peak_stage1" => self.lr_peak_stage1 = parse_num(key, value)?,
            "train.lr_peak_stage2" => self.lr_peak_stage2 = parse_num(key, value)?,
            "train.weight_decay_stage1" => self.weight_decay_stage1 = parse_num(key, value)?,
            "train.weight_decay_stage2" => self.weight_decay_stage2 = parse_num(key, value)?,
            "train.beta1" => self.beta1 = parse_num(key, value)?,
            "train.beta2" => self.beta2 = parse_num(key, value)?,
            "train.epsilon" => self.epsilon = parse_num(key, value)?,
            "train.warmup_epochs" => self.warmup_epochs = parse_num(key, value)?,
            "train.max_epochs" => self.max_epochs = parse_num(key, value)?,
            "train.batch_size" => self.batch_size = parse_num(key, value)?,
            "train.accum_steps" => self.accum_steps = parse_num(key, value)?,
            "train.patience" => self.patience = parse_num(key, value)?,
            "train.val_fraction" => self.val_fraction = parse_num(key, value)?,
            "train.seed" => self.seed = parse_num(key, value)?,
            "loss.contrastive_weight" => self.contrastive_weight = parse_num(key, value)?,
            "loss.consistency_weight" => self.consistency_weight = parse_num(key, value)?,
            "loss.focal_gamma" => self.focal_gamma = parse_num(key, value)?,
            "loss.positive_class" => {
                self.positive_class = if value == "none" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.min < 1 || self.bounds.min > self.bounds.max {
            return Err(Error::Config(format!(
                "seqio bounds must satisfy 1 <= min <= max, got {}..{}",
                self.bounds.min, self.bounds.max
            )));
        }
        self.descriptor.validate(self.bounds.min)?;
        self.augment.validate()?;
        self.contrast.validate()?;
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train.val_fraction must be in (0,1), got {}",
                self.val_fraction
            )));
        }
        LossWeights::new(self.contrastive_weight, self.consistency_weight)?;
        if self.focal_gamma < 0.0 {
            return Err(Error::Config("loss.focal_gamma must be >= 0".into()));
        }
        Ok(())
    }

    /// All keys with their current values, sorted; parses back to `self`.
    pub fn dump(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("seqio.min_len".into(), self.bounds.min.to_string()),
            ("seqio.max_len".into(), self.bounds.max.to_string()),
            ("descriptor.cksaagp_max_gap".into(), self.descriptor.cksaagp_max_gap.to_string()),
            ("descriptor.distpair_max_dist".into(), self.descriptor.distpair_max_dist.to_string()),
            ("descriptor.paac_lambda".into(), self.descriptor.paac_lambda.to_string()),
            ("descriptor.paac_weight".into(), self.descriptor.paac_weight.to_string()),
            ("descriptor.qso_nlag".into(), self.descriptor.qso_nlag.to_string()),
            ("descriptor.qso_weight".into(), self.descriptor.qso_weight.to_string()),
            ("descriptor.binary_max_len".into(), self.descriptor.binary_max_len.to_string()),
            ("augment.n_fragments".into(), self.augment.n_fragments.to_string()),
            ("augment.m_steps".into(), self.augment.m_steps.to_string()),
            ("augment.insert_prob".into(), self.augment.insert_prob.to_string()),
            ("augment.delete_prob".into(), self.augment.delete_prob.to_string()),
            ("augment.mutate_prob".into(), self.augment.mutate_prob.to_string()),
            ("augment.tta_variants".into(), self.augment.tta_variants.to_string()),
            ("augment.tta_mutate_prob".into(), self.augment.tta_mutate_prob.to_string()),
            ("contrast.queue_pos".into(), self.contrast.queue_pos.to_string()),
            ("contrast.queue_neg".into(), self.contrast.queue_neg.to_string()),
            ("contrast.hard_negatives".into(), self.contrast.hard_negatives.to_string()),
            ("contrast.sampling_sharpness".into(), self.contrast.sampling_sharpness.to_string()),
            ("contrast.tau_min".into(), self.contrast.tau_min.to_string()),
            ("contrast.tau_max".into(), self.contrast.tau_max.to_string()),
            ("model.conv_kernel_sizes".into(), list_str(&self.conv_kernel_sizes)),
            ("model.conv_channels".into(), self.conv_channels.to_string()),
            ("model.lstm_hidden".into(), self.lstm_hidden.to_string()),
            ("model.gate_hidden".into(), self.gate_hidden.to_string()),
            ("model.mlp_hidden".into(), list_str(&self.mlp_hidden)),
            ("model.dropout".into(), self.dropout.to_string()),
            ("model.f_match_identity".into(), self.f_match_identity.to_string()),
            ("model.per_dim_gate".into(), self.per_dim_gate.to_string()),
            ("train.lr_peak_stage1".into(), self.lr_peak_stage1.to_string()),
            ("train.lr_peak_stage2".into(), self.lr_peak_stage2.to_string()),
            ("train.weight_decay_stage1".into(), self.weight_decay_stage1.to_string()),
            ("train.weight_decay_stage2".into(), self.weight_decay_stage2.to_string()),
            ("train.beta1".into(), self.beta1.to_string()),
            ("train.beta2".into(), self.beta2.to_string()),
            ("train.epsilon".into(), self.epsilon.to_string()),
            ("train.warmup_epochs".into(), self.warmup_epochs.to_string()),
            ("train.max_epochs".into(), self.max_epochs.to_string()),
            ("train.batch_size".into(), self.batch_size.to_string()),
            ("train.accum_steps".into(), self.accum_steps.to_string()),
            ("train.patience".into(), self.patience.to_string()),
            ("train.val_fraction".into(), self.val_fraction.to_string()),
            ("train.seed".into(), self.seed.to_string()),
            ("loss.contrastive_weight".into(), self.contrastive_weight.to_string()),
            ("loss.consistency_weight".into(), self.consistency_weight.to_string()),
            ("loss.focal_gamma".into(), self.focal_gamma.to_string()),
            (
                "loss.positive_class".into(),
                self.positive_class.map(|c| c.to_string()).unwrap_or_else(|| "none".into()),
            ),
        ];
        rows.sort();
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn model_config(&self, embed_dim: usize, class_count: usize) -> ModelConfig {
        ModelConfig {
            embed_dim,
            descriptor_dim: avpred::descriptors::total_dim(&self.descriptor),
            conv_kernel_sizes: self.conv_kernel_sizes.clone(),
            conv_channels: self.conv_channels,
            lstm_hidden: self.lstm_hidden,
            gate_hidden: self.gate_hidden,
            mlp_hidden: self.mlp_hidden.clone(),
            class_count,
            dropout: self.dropout,
            f_match_identity: self.f_match_identity,
            per_dim_gate: self.per_dim_gate,
        }
    }

    pub fn train_config(&self, stage: u32) -> TrainConfig {
        TrainConfig {
            stage,
            lr_peak: if stage == 1 { self.lr_peak_stage1 } else { self.lr_peak_stage2 },
            weight_decay: if stage == 1 {
                self.weight_decay_stage1
            } else {
                self.weight_decay_stage2
            },
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            warmup_epochs: self.warmup_epochs,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            accum_steps: self.accum_steps,
            patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn setup(&self, stage: u32, embed_dim: usize, class_count: usize) -> Result<TrainSetup> {
        Ok(TrainSetup {
            model: self.model_config(embed_dim, class_count),
            train: self.train_config(stage),
            augment: self.augment.clone(),
            contrast: self.contrast.clone(),
            weights: LossWeights::new(self.contrastive_weight, self.consistency_weight)?,
            focal_gamma: self.focal_gamma,
            positive_class: self.positive_class,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn dump_parse_dump_is_a_fixed_point() {
        let dumped = RunConfig::default().dump();
        let parsed = RunConfig::parse(&dumped).unwrap();
        assert_eq!(parsed, RunConfig::default());
        assert_eq!(parsed.dump(), dumped);
    }

    #[test]
    fn unknown_key_is_rejected() {
        match RunConfig::parse("model.bogus = 1\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("bogus")),
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse(
            "# comment\nmodel.conv_channels = 8\nmodel.mlp_hidden = 16,8\nloss.positive_class = none\n",
        )
        .unwrap();
        assert_eq!(cfg.conv_channels, 8);
        assert_eq!(cfg.mlp_hidden, vec![16, 8]);
        assert_eq!(cfg.positive_class, None);
    }

    #[test]
    fn invariants_are_enforced_at_parse_time() {
        assert!(RunConfig::parse("descriptor.paac_lambda = 7\n").is_err());
        assert!(RunConfig::parse("train.val_fraction = 1.5\n").is_err());
        assert!(RunConfig::parse("loss.contrastive_weight = -1\n").is_err());
    }
}
