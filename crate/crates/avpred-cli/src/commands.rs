//! Subcommand implementations shared by the binary and the test suites.

use crate::config::RunConfig;
use avpred::augment::{augment_sequence, Blosum62, PortableRng};
use avpred::descriptors::{csv_header, csv_row, featurize};
use avpred::embed::{EmbeddingProvider, FallbackProvider, FileProvider};
use avpred::error::{Error, Result};
use avpred::metrics::compose::{composition_analysis, composition_csv};
use avpred::metrics::{
    argmax, auprc, auroc, binary_metrics, macro_metrics, pr_points, roc_points, ConfusionCounts,
    ScoredPredictions,
};
use avpred::model::checkpoint::{load_checkpoint_file, save_checkpoint_file};
use avpred::model::interpret::export_interpretability;
use avpred::seqio::{parse_fasta, serialize_fasta, load_labels, LabeledDataset, PeptideSequence};
use avpred::train::{
    finetune_stage2, fit_stage1, dynamics_csv, predict_outputs, tta_predict, FeatureExtractor,
};
use avpred::fmt_sig9;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

/// Where embeddings come from: the deterministic fallback embedder or a
/// precomputed export file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Fallback { dim: usize, seed: u64 },
    File(PathBuf),
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Fallback { dim: 64, seed: 0 }
    }
}

impl std::str::FromStr for EmbedderSpec {
    type Err = Error;

    /// `fallback[:dim=D][:seed=N]` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(Error::Config("embedder: `file:` needs a path".into()));
            }
            return Ok(EmbedderSpec::File(PathBuf::from(path)));
        }
        let mut parts = s.split(':');
        if parts.next() != Some("fallback") {
            return Err(Error::Config(format!(
                "embedder `{s}` not understood; use `fallback:dim=D:seed=N` or `file:PATH`"
            )));
        }
        let mut dim = 64usize;
        let mut seed = 0u64;
        for part in parts {
            match part.split_once('=') {
                Some(("dim", v)) => {
                    dim = v
                        .parse()
                        .map_err(|_| Error::Config(format!("embedder: bad dim `{v}`")))?
                }
                Some(("seed", v)) => {
                    seed = v
                        .parse()
                        .map_err(|_| Error::Config(format!("embedder: bad seed `{v}`")))?
                }
                _ => return Err(Error::Config(format!("embedder: bad option `{part}`"))),
            }
        }
        if dim == 0 {
            return Err(Error::Config("embedder: dim must be >= 1".into()));
        }
        Ok(EmbedderSpec::Fallback { dim, seed })
    }
}

impl EmbedderSpec {
    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbedderSpec::Fallback { dim, seed } => {
                Box::new(FallbackProvider { dim: *dim, seed: *seed })
            }
            EmbedderSpec::File(path) => Box::new(FileProvider::from_path(path)?),
        })
    }

    pub fn extractor(&self, cfg: &RunConfig) -> Result<FeatureExtractor> {
        Ok(FeatureExtractor::new(self.provider()?, cfg.descriptor.clone()))
    }
}

fn read_fasta(path: &Path, cfg: &RunConfig) -> Result<Vec<PeptideSequence>> {
    parse_fasta(&std::fs::read_to_string(path)?, &cfg.bounds)
}

fn read_dataset(fasta: &Path, labels: &Path, cfg: &RunConfig) -> Result<LabeledDataset> {
    let items = read_fasta(fasta, cfg)?;
    load_labels(&std::fs::read_to_string(labels)?, items)
}

pub fn cmd_featurize(input: &Path, output: &Path, cfg: &RunConfig) -> Result<()> {
    let records = read_fasta(input, cfg)?;
    let mut out = String::new();
    out.push_str(&csv_header(&cfg.descriptor));
    out.push('\n');
    for seq in &records {
        let fv = featurize(seq, &cfg.descriptor)?;
        out.push_str(&csv_row(seq.id(), &fv));
        out.push('\n');
    }
    std::fs::write(output, out)?;
    Ok(())
}

pub fn cmd_augment(
    input: &Path,
    output: &Path,
    cfg: &RunConfig,
    count: usize,
    seed: u64,
) -> Result<()> {
    let records = read_fasta(input, cfg)?;
    let mut rng = PortableRng::new(seed);
    let mut augmented = Vec::with_capacity(records.len() * count);
    for seq in &records {
        for k in 1..=count {
            let twin = augment_sequence(seq, &cfg.augment, &mut rng)?;
            augmented.push(
                PeptideSequence::new(format!("{}_aug{k}", seq.id()), twin.residues().to_string())?
                    .with_label(seq.label()),
            );
        }
    }
    std::fs::write(output, serialize_fasta(&augmented))?;
    Ok(())
}

pub fn dump_substitution_matrix() -> String {
    Blosum62::standard().dump()
}

pub struct TrainArgs<'a> {
    pub input: &'a Path,
    pub labels: &'a Path,
    pub checkpoint_out: &'a Path,
    pub dynamics_out: Option<&'a Path>,
    pub embedder: &'a EmbedderSpec,
}

pub fn cmd_train(args: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let ds = read_dataset(args.input, args.labels, cfg)?;
    let (train_ds, val_ds) =
        avpred::seqio::stratified_split(&ds, 1.0 - cfg.val_fraction, cfg.seed)?;
    let extractor = args.embedder.extractor(cfg)?;
    let setup = cfg.setup(1, extractor.embed_dim(), ds.class_count)?;
    eprintln!(
        "training stage 1: {} train / {} val samples, {} classes",
        train_ds.len(),
        val_ds.len(),
        ds.class_count
    );
    let result = fit_stage1(&train_ds, &val_ds, &extractor, &setup)?;
    eprintln!(
        "best epoch {} with {} = {}",
        result.best_epoch,
        result.meta.metric_name,
        fmt_sig9(result.meta.metric_value)
    );
    save_checkpoint_file(args.checkpoint_out, &result.params, &result.model, &result.meta)?;
    if let Some(path) = args.dynamics_out {
        std::fs::write(path, dynamics_csv(&result.dynamics))?;
    }
    Ok(())
}

pub struct FinetuneArgs<'a> {
    pub base: &'a Path,
    pub input: &'a Path,
    pub labels: &'a Path,
    pub checkpoint_out: &'a Path,
    pub dynamics_out: Option<&'a Path>,
    pub embedder: &'a EmbedderSpec,
}

pub fn cmd_finetune(args: &FinetuneArgs, cfg: &RunConfig) -> Result<()> {
    let (base_params, base_cfg, base_meta) = load_checkpoint_file(args.base)?;
    let ds = read_dataset(args.input, args.labels, cfg)?;
    let (train_ds, val_ds) =
        avpred::seqio::stratified_split(&ds, 1.0 - cfg.val_fraction, cfg.seed)?;
    let extractor = args.embedder.extractor(cfg)?;
    let setup = cfg.setup(2, extractor.embed_dim(), ds.class_count)?;
    eprintln!(
        "fine-tuning from stage-{} checkpoint (epoch {}): {} train / {} val samples, {} classes",
        base_meta.stage,
        base_meta.epoch,
        train_ds.len(),
        val_ds.len(),
        ds.class_count
    );
    let result = finetune_stage2(&base_params, &base_cfg, &train_ds, &val_ds, &extractor, &setup)?;
    save_checkpoint_file(args.checkpoint_out, &result.params, &result.model, &result.meta)?;
    if let Some(path) = args.dynamics_out {
        std::fs::write(path, dynamics_csv(&result.dynamics))?;
    }
    Ok(())
}

/// Header and rows of a prediction CSV:
/// `id,prob_0..prob_{C-1},pred_label,gate_lambda`.
pub fn prediction_csv(rows: &[(String, Vec<f64>, usize, f64)], class_count: usize) -> String {
    let mut out = String::from("id");
    for c in 0..class_count {
        out.push_str(&format!(",prob_{c}"));
    }
    out.push_str(",pred_label,gate_lambda\n");
    for (id, probs, label, lambda) in rows {
        out.push_str(id);
        for p in probs {
            out.push(',');
            out.push_str(&fmt_sig9(*p));
        }
        out.push_str(&format!(",{label},{}\n", fmt_sig9(*lambda)));
    }
    out
}

/// Parse a prediction CSV back into (id, probs, predicted label) rows.
pub fn parse_prediction_csv(text: &str) -> Result<Vec<(String, Vec<f64>, usize)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("predictions: empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let class_count = cols.iter().filter(|c| c.starts_with("prob_")).count();
    if class_count < 2 || cols.first() != Some(&"id") {
        return Err(Error::Format("predictions: unrecognized header".into()));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Format(format!(
                "predictions line {}: {} fields, expected {}",
                lineno + 2,
                fields.len(),
                cols.len()
            )));
        }
        let probs: Vec<f64> = fields[1..1 + class_count]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("predictions: bad float `{f}`")))
            })
            .collect::<Result<_>>()?;
        let label: usize = fields[1 + class_count]
            .parse()
            .map_err(|_| Error::Format("predictions: bad label".into()))?;
        rows.push((fields[0].to_string(), probs, label));
    }
    Ok(rows)
}

pub struct PredictArgs<'a> {
    pub checkpoint: &'a Path,
    pub input: &'a Path,
    pub output: &'a Path,
    pub embedder: &'a EmbedderSpec,
    pub labels: Option<&'a Path>,
    pub tta: usize,
    pub seed: u64,
    pub interpret_dir: Option<&'a Path>,
    pub embeddings_out: Option<&'a Path>,
}

pub fn cmd_predict(args: &PredictArgs, cfg: &RunConfig) -> Result<()> {
    let (params, model_cfg, _) = load_checkpoint_file(args.checkpoint)?;
    let mut items = read_fasta(args.input, cfg)?;
    if let Some(labels) = args.labels {
        let ds = load_labels(&std::fs::read_to_string(labels)?, items)?;
        items = ds.items;
    }
    let extractor = args.embedder.extractor(cfg)?;
    if extractor.embed_dim() != model_cfg.embed_dim {
        return Err(Error::Mismatch(format!(
            "embedder dim {} but checkpoint expects {}",
            extractor.embed_dim(),
            model_cfg.embed_dim
        )));
    }

    let outputs = predict_outputs(&params, &model_cfg, &extractor, &items)?;
    let mut rows = Vec::with_capacity(outputs.len());
    for (item, sample) in items.iter().zip(&outputs) {
        let probs = if args.tta > 0 {
            let aug = avpred::augment::AugmentConfig {
                tta_variants: args.tta,
                ..cfg.augment.clone()
            };
            let mut rng = PortableRng::new(args.seed);
            tta_predict(&params, &model_cfg, &extractor, item, &aug, &mut rng)?
        } else {
            sample.out.probs.clone()
        };
        rows.push((item.id().to_string(), probs.clone(), argmax(&probs), sample.out.gate_lambda));
    }
    std::fs::write(args.output, prediction_csv(&rows, model_cfg.class_count))?;

    if let Some(dir) = args.interpret_dir {
        export_interpretability(&outputs, dir)?;
    }
    if let Some(path) = args.embeddings_out {
        let mut out = String::from("id");
        for k in 0..model_cfg.fused_dim() {
            out.push_str(&format!(",e_{k}"));
        }
        out.push('\n');
        for sample in &outputs {
            out.push_str(&sample.id);
            for v in &sample.out.e_final {
                out.push(',');
                out.push_str(&fmt_sig9(*v));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
    }
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub predictions: &'a Path,
    pub labels: &'a Path,
    pub output: &'a Path,
    pub curves_dir: Option<&'a Path>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let rows = parse_prediction_csv(&std::fs::read_to_string(args.predictions)?)?;
    let mut truth_by_id: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in std::fs::read_to_string(args.labels)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Label(format!("line {}: expected `id,label`", lineno + 1)))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::Label(format!("line {}: bad label", lineno + 1)))?;
        truth_by_id.insert(id.trim().to_string(), label);
    }

    let mut truth = Vec::with_capacity(rows.len());
    let mut predicted = Vec::with_capacity(rows.len());
    let mut scores = Vec::with_capacity(rows.len());
    let class_count = rows.first().map(|r| r.1.len()).unwrap_or(0);
    for (id, probs, label) in &rows {
        let t = *truth_by_id
            .get(id)
            .ok_or_else(|| Error::Label(format!("no label for prediction id `{id}`")))?;
        truth.push(t);
        predicted.push(*label);
        scores.push(probs.get(1).copied().unwrap_or(0.0));
    }
    if rows.is_empty() {
        return Err(Error::Empty("evaluate: no prediction rows".into()));
    }

    let mut doc = serde_json::Map::new();
    doc.insert("samples".into(), serde_json::json!(rows.len()));
    doc.insert("class_count".into(), serde_json::json!(class_count));
    if class_count == 2 {
        let t: Vec<bool> = truth.iter().map(|&l| l == 1).collect();
        let p: Vec<bool> = predicted.iter().map(|&l| l == 1).collect();
        let counts = ConfusionCounts::from_predictions(&t, &p)?;
        let m = binary_metrics(&counts)?;
        let sp = ScoredPredictions::new(scores, t.clone())?;
        doc.insert("acc".into(), serde_json::json!(m.acc));
        doc.insert("sn".into(), serde_json::json!(nan_to_null(m.sn)));
        doc.insert("sp".into(), serde_json::json!(nan_to_null(m.sp)));
        doc.insert("mcc".into(), serde_json::json!(m.mcc));
        doc.insert("gmean".into(), serde_json::json!(nan_to_null(m.gmean)));
        doc.insert("f1".into(), serde_json::json!(nan_to_null(m.f1)));
        doc.insert("auroc".into(), serde_json::json!(auroc(&sp)?));
        doc.insert("auprc".into(), serde_json::json!(auprc(&sp)?));
        if let Some(dir) = args.curves_dir {
            std::fs::create_dir_all(dir)?;
            let mut roc = String::from("fpr,tpr,threshold\n");
            for (fpr, tpr, thr) in roc_points(&sp)? {
                roc.push_str(&format!("{},{},{}\n", fmt_sig9(fpr), fmt_sig9(tpr), fmt_sig9(thr)));
            }
            std::fs::write(dir.join("roc.csv"), roc)?;
            let mut pr = String::from("recall,precision,threshold\n");
            for (r, p, thr) in pr_points(&sp)? {
                pr.push_str(&format!("{},{},{}\n", fmt_sig9(r), fmt_sig9(p), fmt_sig9(thr)));
            }
            std::fs::write(dir.join("pr.csv"), pr)?;
        }
    } else {
        let m = macro_metrics(&truth, &predicted, class_count)?;
        let acc = truth.iter().zip(&predicted).filter(|(t, p)| t == p).count() as f64
            / truth.len() as f64;
        doc.insert("acc".into(), serde_json::json!(acc));
        doc.insert("macro_p".into(), serde_json::json!(m.precision));
        doc.insert("macro_r".into(), serde_json::json!(m.recall));
        doc.insert("macro_f".into(), serde_json::json!(m.f1));
        doc.insert("absent_classes".into(), serde_json::json!(m.warnings));
    }
    let json = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
        .map_err(|e| Error::Format(format!("metrics json: {e}")))?;
    std::fs::write(args.output, json)?;
    Ok(())
}

fn nan_to_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

pub fn cmd_compose_stats(
    group_a: &Path,
    group_b: &Path,
    output: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    let a = read_fasta(group_a, cfg)?;
    let b = read_fasta(group_b, cfg)?;
    let rows = composition_analysis(&a, &b)?;
    std::fs::write(output, composition_csv(&rows))?;
    Ok(())
}
