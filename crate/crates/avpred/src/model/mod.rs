//! The dual-branch gated network.
//!
//! Input: per-residue embeddings with the global descriptor vector tiled
//! along the sequence. Two parallel branches (multi-width 1-D conv and a
//! bidirectional LSTM), each attention-pooled; a learned gate mixes the
//! branch vectors into the final embedding that feeds the MLP classifier.

pub mod checkpoint;
pub mod interpret;

use crate::augment::PortableRng;
use crate::descriptors::FeatureVector;
use crate::diffcore::{
    attention_pool, bilstm, conv1d, glorot, LstmParams, NodeId, Tape, Tensor,
};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub descriptor_dim: usize,
    pub conv_kernel_sizes: Vec<usize>,
    pub conv_channels: usize,
    pub lstm_hidden: usize,
    pub gate_hidden: usize,
    pub mlp_hidden: Vec<usize>,
    pub class_count: usize,
    pub dropout: f64,
    /// Use the identity for the gate's match projection; requires
    /// `conv_channels == 2 * lstm_hidden`.
    pub f_match_identity: bool,
    /// Gate with a per-dimension vector instead of one scalar.
    pub per_dim_gate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            descriptor_dim: 3270,
            conv_kernel_sizes: vec![3, 5],
            conv_channels: 64,
            lstm_hidden: 64,
            gate_hidden: 32,
            mlp_hidden: vec![128, 64],
            class_count: 2,
            dropout: 0.3,
            f_match_identity: false,
            per_dim_gate: false,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.embed_dim + self.descriptor_dim
    }

    pub fn fused_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("descriptor_dim", self.descriptor_dim),
            ("conv_channels", self.conv_channels),
            ("lstm_hidden", self.lstm_hidden),
            ("gate_hidden", self.gate_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be >= 1")));
            }
        }
        if self.class_count < 2 {
            return Err(Error::Config("model.class_count must be >= 2".into()));
        }
        if self.conv_kernel_sizes.is_empty() {
            return Err(Error::Config("model.conv_kernel_sizes must be non-empty".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("model.dropout must be in [0,1), got {}", self.dropout)));
        }
        if self.f_match_identity && self.conv_channels != self.fused_dim() {
            return Err(Error::Config(format!(
                "model.f_match_identity needs conv_channels == {}, got {}",
                self.fused_dim(),
                self.conv_channels
            )));
        }
        Ok(())
    }
}

/// Every trainable tensor, keyed by a stable name. Iteration order is the
/// name order, which keeps training and serialization deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

/// Names of the classifier head; these are the tensors transfer
/// fine-tuning re-initializes.
pub fn is_classifier_param(name: &str) -> bool {
    name.starts_with("clf.")
}

impl ModelParams {
    /// Fresh parameters: Glorot-uniform weights, zero biases, forget-gate
    /// bias +1, temperature initialized to 0.07.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
        cfg.validate()?;
        let mut rng = PortableRng::new(seed);
        let mut t = BTreeMap::new();
        let din = cfg.input_dim();
        let (k, dh) = (cfg.conv_channels, cfg.lstm_hidden);

        for &h in &cfg.conv_kernel_sizes {
            t.insert(
                format!("conv{h}.w"),
                glorot(vec![k, h, din], h * din, k, &mut rng),
            );
            t.insert(format!("conv{h}.b"), Tensor::zeros(vec![k]));
        }

        for dir in ["lstm_f", "lstm_b"] {
            for gate in ["w_f", "w_i", "w_c", "w_o"] {
                t.insert(
                    format!("{dir}.{gate}"),
                    glorot(vec![dh, dh + din], dh + din, dh, &mut rng),
                );
            }
            // Forget-gate bias starts open so early training can carry
            // state across steps.
            let mut b_f = Tensor::zeros(vec![dh]);
            b_f.data_mut().iter_mut().for_each(|v| *v = 1.0);
            t.insert(format!("{dir}.b_f"), b_f);
            for gate in ["b_i", "b_c", "b_o"] {
                t.insert(format!("{dir}.{gate}"), Tensor::zeros(vec![dh]));
            }
        }

        t.insert("attn_cnn.proj".into(), glorot(vec![k, k], k, k, &mut rng));
        t.insert("attn_cnn.score".into(), glorot(vec![k], k, 1, &mut rng));
        let fused = cfg.fused_dim();
        t.insert("attn_lstm.proj".into(), glorot(vec![fused, fused], fused, fused, &mut rng));
        t.insert("attn_lstm.score".into(), glorot(vec![fused], fused, 1, &mut rng));

        if !cfg.f_match_identity {
            t.insert("f_match.w".into(), glorot(vec![fused, k], k, fused, &mut rng));
            t.insert("f_match.b".into(), Tensor::zeros(vec![fused]));
        }

        let gate_in = k + fused;
        let gate_out = if cfg.per_dim_gate { fused } else { 1 };
        t.insert("gate.w1".into(), glorot(vec![cfg.gate_hidden, gate_in], gate_in, cfg.gate_hidden, &mut rng));
        t.insert("gate.b1".into(), Tensor::zeros(vec![cfg.gate_hidden]));
        t.insert("gate.w2".into(), glorot(vec![gate_out, cfg.gate_hidden], cfg.gate_hidden, gate_out, &mut rng));
        t.insert("gate.b2".into(), Tensor::zeros(vec![gate_out]));

        let mut prev = fused;
        for (i, &w) in cfg.mlp_hidden.iter().enumerate() {
            t.insert(format!("clf.{i}.w"), glorot(vec![w, prev], prev, w, &mut rng));
            t.insert(format!("clf.{i}.b"), Tensor::zeros(vec![w]));
            prev = w;
        }
        t.insert("clf.out.w".into(), glorot(vec![cfg.class_count, prev], prev, cfg.class_count, &mut rng));
        t.insert("clf.out.b".into(), Tensor::zeros(vec![cfg.class_count]));

        t.insert("log_temperature".into(), Tensor::vector(vec![0.07f64.ln()]));

        Ok(ModelParams { tensors: t })
    }

    pub fn from_tensors(tensors: BTreeMap<String, Tensor>) -> ModelParams {
        ModelParams { tensors }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("model: missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: String, t: Tensor) {
        self.tensors.insert(name, t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    /// Current (clamped) contrastive temperature.
    pub fn temperature(&self) -> f64 {
        self.tensors
            .get("log_temperature")
            .map(|t| t.data()[0].exp())
            .unwrap_or(0.07)
    }
}

/// Tile the global descriptor vector onto every embedding row:
/// row `t` is `emb[t] ++ feat`.
pub fn build_input(emb: &EmbeddingMatrix, feat: &FeatureVector) -> Result<Tensor> {
    if emb.is_empty() {
        return Err(Error::Shape("build_input: empty embedding".into()));
    }
    if feat.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("build_input: non-finite descriptor values".into()));
    }
    let (len, de, ds) = (emb.len(), emb.dim, feat.len());
    let mut data = Vec::with_capacity(len * (de + ds));
    for t in 0..len {
        data.extend_from_slice(emb.row(t));
        data.extend_from_slice(&feat.values);
    }
    Tensor::matrix(len, de + ds, data)
}

/// Forward-pass mode; dropout draws only happen in training.
pub enum Mode<'a> {
    Eval,
    Train { dropout_rng: &'a mut PortableRng },
}

/// Node handles for everything a loss or an export needs.
pub struct GraphOutput {
    pub v_cnn: NodeId,
    pub v_bilstm: NodeId,
    pub lambda: NodeId,
    pub e_final: NodeId,
    pub logits: NodeId,
    pub probs: NodeId,
    pub attn_cnn: NodeId,
    pub attn_bilstm: NodeId,
}

/// Plain-value forward output for one sample.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub v_cnn: Vec<f64>,
    pub v_bilstm: Vec<f64>,
    pub gate_lambda: f64,
    pub e_final: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub attn_cnn: Vec<f64>,
    pub attn_bilstm: Vec<f64>,
}

/// Stage every parameter tensor onto a tape as a leaf.
pub fn stage_params(tape: &mut Tape, params: &ModelParams) -> BTreeMap<String, NodeId> {
    params.iter().map(|(name, t)| (name.clone(), tape.leaf(t.clone()))).collect()
}

fn lstm_nodes(nodes: &BTreeMap<String, NodeId>, dir: &str) -> Result<LstmParams> {
    let get = |suffix: &str| -> Result<NodeId> {
        nodes
            .get(&format!("{dir}.{suffix}"))
            .copied()
            .ok_or_else(|| Error::Config(format!("model: missing parameter `{dir}.{suffix}`")))
    };
    Ok(LstmParams {
        w_f: get("w_f")?,
        w_i: get("w_i")?,
        w_c: get("w_c")?,
        w_o: get("w_o")?,
        b_f: get("b_f")?,
        b_i: get("b_i")?,
        b_c: get("b_c")?,
        b_o: get("b_o")?,
    })
}

/// Zero-pad matrix rows so a width-`h` valid convolution yields one output
/// per input row, aligned with residue positions.
fn pad_rows(x: &Tensor, h: usize) -> Tensor {
    let left = (h - 1) / 2;
    let right = h - 1 - left;
    let cols = x.cols();
    let mut data = vec![0.0; (x.rows() + left + right) * cols];
    data[left * cols..left * cols + x.rows() * cols].copy_from_slice(x.data());
    Tensor::matrix(x.rows() + left + right, cols, data).expect("padded shape")
}

/// Gate two branch vectors: `lambda = sigmoid(gate(concat))`, output
/// `lambda * f_match(v_cnn) + (1 - lambda) * v_bilstm`. Returns
/// `(e_final, lambda)`.
pub fn gated_fuse(
    tape: &mut Tape,
    v_cnn: NodeId,
    v_bilstm: NodeId,
    nodes: &BTreeMap<String, NodeId>,
    cfg: &ModelConfig,
) -> Result<(NodeId, NodeId)> {
    let matched = if cfg.f_match_identity {
        v_cnn
    } else {
        let z = tape.matvec(nodes["f_match.w"], v_cnn)?;
        tape.add(z, nodes["f_match.b"])?
    };
    let both = tape.concat_vec(v_cnn, v_bilstm)?;
    let z1 = tape.matvec(nodes["gate.w1"], both)?;
    let z1 = tape.add(z1, nodes["gate.b1"])?;
    let a1 = tape.relu(z1);
    let z2 = tape.matvec(nodes["gate.w2"], a1)?;
    let z2 = tape.add(z2, nodes["gate.b2"])?;
    let lambda = tape.sigmoid(z2);

    let weighted_cnn = tape.mul(matched, lambda)?;
    let one_minus = {
        let neg = tape.scale(lambda, -1.0);
        tape.add_const(neg, 1.0)
    };
    let weighted_lstm = tape.mul(v_bilstm, one_minus)?;
    let e_final = tape.add(weighted_cnn, weighted_lstm)?;
    Ok((e_final, lambda))
}

/// Build the full network graph for one input.
pub fn forward_graph(
    tape: &mut Tape,
    nodes: &BTreeMap<String, NodeId>,
    cfg: &ModelConfig,
    input: &Tensor,
    mode: &mut Mode,
) -> Result<GraphOutput> {
    if input.shape().len() != 2 || input.cols() != cfg.input_dim() {
        return Err(Error::Shape(format!(
            "forward: input {:?}, expected [L, {}]",
            input.shape(),
            cfg.input_dim()
        )));
    }
    let max_h = *cfg.conv_kernel_sizes.iter().max().expect("non-empty");
    if input.rows() < max_h {
        return Err(Error::Length(format!(
            "forward: sequence length {} shorter than widest kernel {max_h}",
            input.rows()
        )));
    }

    // CNN branch: per kernel width, pad so outputs align with residues,
    // then merge widths with an elementwise max.
    let mut merged: Option<NodeId> = None;
    for &h in &cfg.conv_kernel_sizes {
        let padded = tape.leaf(pad_rows(input, h));
        let fmap = conv1d(tape, padded, nodes[&format!("conv{h}.w")], nodes[&format!("conv{h}.b")])?;
        merged = Some(match merged {
            None => fmap,
            Some(acc) => tape.max_elem(acc, fmap)?,
        });
    }
    let conv_map = merged.expect("at least one kernel");
    let (v_cnn, attn_cnn) =
        attention_pool(tape, conv_map, nodes["attn_cnn.proj"], nodes["attn_cnn.score"])?;

    // BiLSTM branch over the unpadded input.
    let x = tape.leaf(input.clone());
    let fwd = lstm_nodes(nodes, "lstm_f")?;
    let bwd = lstm_nodes(nodes, "lstm_b")?;
    let states = bilstm(tape, x, &fwd, &bwd, cfg.lstm_hidden)?;
    let (v_bilstm, attn_bilstm) =
        attention_pool(tape, states, nodes["attn_lstm.proj"], nodes["attn_lstm.score"])?;

    let (e_final, lambda) = gated_fuse(tape, v_cnn, v_bilstm, nodes, cfg)?;

    // MLP classifier with dropout after each hidden activation.
    let mut hcur = e_final;
    for i in 0..cfg.mlp_hidden.len() {
        let z = tape.matvec(nodes[&format!("clf.{i}.w")], hcur)?;
        let z = tape.add(z, nodes[&format!("clf.{i}.b")])?;
        let a = tape.relu(z);
        hcur = match mode {
            Mode::Eval => a,
            Mode::Train { dropout_rng } => {
                if cfg.dropout > 0.0 {
                    let keep = 1.0 - cfg.dropout;
                    let mask = Tensor::vector(
                        (0..cfg.mlp_hidden[i])
                            .map(|_| {
                                if dropout_rng.next_f64() < cfg.dropout {
                                    0.0
                                } else {
                                    1.0 / keep
                                }
                            })
                            .collect(),
                    );
                    tape.mul_mask(a, mask)?
                } else {
                    a
                }
            }
        };
    }
    let z = tape.matvec(nodes["clf.out.w"], hcur)?;
    let logits = tape.add(z, nodes["clf.out.b"])?;
    let probs = tape.softmax(logits)?;

    Ok(GraphOutput { v_cnn, v_bilstm, lambda, e_final, logits, probs, attn_cnn, attn_bilstm })
}

/// Deterministic inference forward pass.
pub fn forward(params: &ModelParams, cfg: &ModelConfig, input: &Tensor) -> Result<ForwardOutput> {
    let mut tape = Tape::new();
    let nodes = stage_params(&mut tape, params);
    let g = forward_graph(&mut tape, &nodes, cfg, input, &mut Mode::Eval)?;
    let lambda_t = tape.value(g.lambda);
    let gate_lambda = lambda_t.data().iter().sum::<f64>() / lambda_t.numel() as f64;
    Ok(ForwardOutput {
        v_cnn: tape.value(g.v_cnn).data().to_vec(),
        v_bilstm: tape.value(g.v_bilstm).data().to_vec(),
        gate_lambda,
        e_final: tape.value(g.e_final).data().to_vec(),
        logits: tape.value(g.logits).data().to_vec(),
        probs: tape.value(g.probs).data().to_vec(),
        attn_cnn: tape.value(g.attn_cnn).data().to_vec(),
        attn_bilstm: tape.value(g.attn_bilstm).data().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            embed_dim: 3,
            descriptor_dim: 4,
            conv_kernel_sizes: vec![2, 3],
            conv_channels: 3,
            lstm_hidden: 2,
            gate_hidden: 3,
            mlp_hidden: vec![5],
            class_count: 2,
            dropout: 0.0,
            f_match_identity: false,
            per_dim_gate: false,
        }
    }

    fn tiny_input(cfg: &ModelConfig, len: usize, seed: u64) -> Tensor {
        let mut rng = PortableRng::new(seed);
        let din = cfg.input_dim();
        Tensor::matrix(len, din, (0..len * din).map(|_| rng.next_f64() * 2.0 - 1.0).collect())
            .unwrap()
    }

    #[test]
    fn build_input_tiles_descriptor() {
        let emb = EmbeddingMatrix::new("p".into(), 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let feat = FeatureVector {
            values: vec![9.0, 8.0],
            layout: vec![],
        };
        let x = build_input(&emb, &feat).unwrap();
        assert_eq!(x.shape(), &[2, 4]);
        assert_eq!(x.row(0), &[1.0, 2.0, 9.0, 8.0]);
        assert_eq!(x.row(1), &[3.0, 4.0, 9.0, 8.0]);
        // trailing slice identical on every row
        assert_eq!(&x.row(0)[2..], &x.row(1)[2..]);
    }

    #[test]
    fn build_input_single_row() {
        let emb = EmbeddingMatrix::new("p".into(), 3, vec![1.0, 2.0, 3.0]).unwrap();
        let feat = FeatureVector { values: vec![0.0, 0.0], layout: vec![] };
        let x = build_input(&emb, &feat).unwrap();
        assert_eq!(x.shape(), &[1, 5]);
        assert_eq!(&x.row(0)[..3], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn forward_is_deterministic_in_eval() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let input = tiny_input(&cfg, 6, 1);
        let a = forward(&params, &cfg, &input).unwrap();
        let b = forward(&params, &cfg, &input).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.gate_lambda, b.gate_lambda);
    }

    #[test]
    fn probs_are_simplex_for_random_params() {
        let cfg = tiny_cfg();
        for seed in 0..50 {
            let params = ModelParams::init(&cfg, seed).unwrap();
            let input = tiny_input(&cfg, 5, seed + 1000);
            let out = forward(&params, &cfg, &input).unwrap();
            let sum: f64 = out.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(out.probs.iter().all(|&p| p >= 0.0));
            assert!(out.gate_lambda > 0.0 && out.gate_lambda < 1.0);
        }
    }

    #[test]
    fn gate_identity_holds() {
        // e_final - lambda*f_match(v_cnn) - (1-lambda)*v_bilstm == 0
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 11).unwrap();
        let input = tiny_input(&cfg, 7, 3);
        let out = forward(&params, &cfg, &input).unwrap();

        let w = params.get("f_match.w").unwrap();
        let b = params.get("f_match.b").unwrap();
        let fused = cfg.fused_dim();
        let mut matched = vec![0.0; fused];
        for i in 0..fused {
            matched[i] = b.data()[i]
                + out
                    .v_cnn
                    .iter()
                    .enumerate()
                    .map(|(j, v)| w.row(i)[j] * v)
                    .sum::<f64>();
        }
        for i in 0..fused {
            let expect = out.gate_lambda * matched[i] + (1.0 - out.gate_lambda) * out.v_bilstm[i];
            assert!((out.e_final[i] - expect).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn argmax_invariant_to_logit_shift() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 2).unwrap();
        let input = tiny_input(&cfg, 6, 9);
        let out = forward(&params, &cfg, &input).unwrap();
        let argmax =
            |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let shifted: Vec<f64> = out.logits.iter().map(|l| l + 123.456).collect();
        assert_eq!(argmax(&out.logits), argmax(&shifted));
    }

    #[test]
    fn forced_gate_selects_one_branch() {
        // Bias the gate output hard to one side with identity matching;
        // the classifier input must equal exactly one branch vector.
        let mut cfg = tiny_cfg();
        cfg.f_match_identity = true;
        cfg.conv_channels = 2 * cfg.lstm_hidden;
        let mut params = ModelParams::init(&cfg, 3).unwrap();
        let big = 1e4;
        for (sign, pick_cnn) in [(big, true), (-big, false)] {
            let b2 = params.get_mut("gate.b2").unwrap();
            b2.data_mut()[0] = sign;
            let input = tiny_input(&cfg, 6, 4);
            let out = forward(&params, &cfg, &input).unwrap();
            let target = if pick_cnn { &out.v_cnn } else { &out.v_bilstm };
            for (e, t) in out.e_final.iter().zip(target) {
                assert!((e - t).abs() < 1e-9, "gate {} branch", sign);
            }
        }
    }

    #[test]
    fn rejects_short_sequences() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let input = tiny_input(&cfg, 2, 1);
        assert!(matches!(forward(&params, &cfg, &input), Err(Error::Length(_))));
    }

    #[test]
    fn attention_aligns_with_sequence_length() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 5).unwrap();
        for len in [3usize, 5, 9] {
            let input = tiny_input(&cfg, len, 2);
            let out = forward(&params, &cfg, &input).unwrap();
            assert_eq!(out.attn_cnn.len(), len);
            assert_eq!(out.attn_bilstm.len(), len);
        }
    }

    #[test]
    fn dropout_changes_training_pass_only() {
        let mut cfg = tiny_cfg();
        cfg.dropout = 0.5;
        let params = ModelParams::init(&cfg, 8).unwrap();
        let input = tiny_input(&cfg, 6, 2);

        let run_train = |seed: u64| -> Vec<f64> {
            let mut tape = Tape::new();
            let nodes = stage_params(&mut tape, &params);
            let mut rng = PortableRng::new(seed);
            let g = forward_graph(
                &mut tape,
                &nodes,
                &cfg,
                &input,
                &mut Mode::Train { dropout_rng: &mut rng },
            )
            .unwrap();
            tape.value(g.probs).data().to_vec()
        };
        // Same dropout stream, same output.
        assert_eq!(run_train(1), run_train(1));
        // Across streams the masks differ, so at least two outputs must
        // disagree (a dead hidden layer would defeat the test, so guard
        // against it via the eval pass).
        let eval = forward(&params, &cfg, &input).unwrap();
        assert!(
            (eval.probs[0] - 0.5).abs() > 1e-6,
            "degenerate parameter draw: hidden layer passes no signal"
        );
        let outputs: Vec<Vec<f64>> = (1..=20).map(run_train).collect();
        assert!(outputs.iter().any(|o| o != &outputs[0]));
    }
}
