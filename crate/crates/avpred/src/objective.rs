//! The composite training objective: queue-based contrastive loss with
//! online hard-negative mining, focal classification loss, and a symmetric
//! KL consistency term, combined as a weighted sum.
//!
//! Every loss exists twice: a plain-value form (oracles, logging, tests)
//! and a tape form used during training. Queued history is stored as
//! detached values, so gradients never flow into past batches.

use crate::augment::PortableRng;
use crate::diffcore::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use std::collections::VecDeque;

const PROB_FLOOR: f64 = 1e-12;

/// Queue capacities and mining knobs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContrastConfig {
    pub queue_pos: usize,
    pub queue_neg: usize,
    /// Hard negatives per anchor.
    pub hard_negatives: usize,
    /// Softmax sharpness when converting difficulty to sampling weight.
    pub sampling_sharpness: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            queue_pos: 512,
            queue_neg: 1024,
            hard_negatives: 16,
            sampling_sharpness: 0.1,
            tau_min: 0.01,
            tau_max: 1.0,
        }
    }
}

impl ContrastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queue_pos == 0 || self.queue_neg == 0 {
            return Err(Error::Config("contrast queues need capacity >= 1".into()));
        }
        if self.sampling_sharpness <= 0.0 {
            return Err(Error::Config("contrast.sampling_sharpness must be > 0".into()));
        }
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_max) {
            return Err(Error::Config(
                "contrast temperature clamp must satisfy 0 < min <= max".into(),
            ));
        }
        Ok(())
    }
}

/// FIFO feature queues with a running positive prototype.
#[derive(Debug, Clone)]
pub struct ContrastState {
    cfg: ContrastConfig,
    q_pos: VecDeque<Vec<f64>>,
    q_neg: VecDeque<Vec<f64>>,
    prototype: Option<Vec<f64>>,
    dim: Option<usize>,
}

impl ContrastState {
    pub fn new(cfg: ContrastConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            q_pos: VecDeque::new(),
            q_neg: VecDeque::new(),
            prototype: None,
            dim: None,
        })
    }

    pub fn config(&self) -> &ContrastConfig {
        &self.cfg
    }

    pub fn positive_len(&self) -> usize {
        self.q_pos.len()
    }

    pub fn negative_len(&self) -> usize {
        self.q_neg.len()
    }

    /// Mean of the queued positive features; `None` until one is queued.
    pub fn prototype(&self) -> Option<&[f64]> {
        self.prototype.as_deref()
    }

    fn check_dim(&mut self, v: &[f64]) -> Result<()> {
        match self.dim {
            Some(d) if d != v.len() => Err(Error::Shape(format!(
                "queue feature of dim {}, expected {d}",
                v.len()
            ))),
            Some(_) => Ok(()),
            None => {
                self.dim = Some(v.len());
                Ok(())
            }
        }
    }

    fn recompute_prototype(&mut self) {
        let n = self.q_pos.len();
        if n == 0 {
            self.prototype = None;
            return;
        }
        let dim = self.q_pos[0].len();
        let mut mean = vec![0.0; dim];
        for v in &self.q_pos {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        self.prototype = Some(mean);
    }

    /// Enqueue one detached feature; evicts FIFO at capacity and refreshes
    /// the prototype after every positive enqueue.
    pub fn push(&mut self, feature: Vec<f64>, is_positive: bool) -> Result<()> {
        self.check_dim(&feature)?;
        if is_positive {
            if self.q_pos.len() == self.cfg.queue_pos {
                self.q_pos.pop_front();
            }
            self.q_pos.push_back(feature);
            self.recompute_prototype();
        } else {
            if self.q_neg.len() == self.cfg.queue_neg {
                self.q_neg.pop_front();
            }
            self.q_neg.push_back(feature);
        }
        Ok(())
    }

    /// Enqueue a labeled batch (already detached from any tape).
    pub fn update_queues(&mut self, batch: &[(Vec<f64>, bool)]) -> Result<()> {
        for (feature, is_positive) in batch {
            self.push(feature.clone(), *is_positive)?;
        }
        Ok(())
    }

    /// Difficulty of each queued negative: cosine similarity to the
    /// positive prototype. With no prototype every candidate scores 0
    /// (uniform sampling fallback).
    pub fn difficulties(&self) -> Vec<f64> {
        match &self.prototype {
            Some(p) => self
                .q_neg
                .iter()
                .map(|n| cosine_similarity(n, p).unwrap_or(0.0))
                .collect(),
            None => vec![0.0; self.q_neg.len()],
        }
    }

    /// Weighted sampling without replacement of `k` hard negatives:
    /// weights are softmax(difficulty / sharpness); `k` is capped at the
    /// queue length.
    pub fn sample_hard_negatives(
        &self,
        k: usize,
        rng: &mut PortableRng,
    ) -> Result<Vec<Vec<f64>>> {
        if self.q_neg.is_empty() {
            return Err(Error::EmptyQueue);
        }
        let difficulties = self.difficulties();
        let max_d = difficulties.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = difficulties
            .iter()
            .map(|d| ((d - max_d) / self.cfg.sampling_sharpness).exp())
            .collect();
        let mut alive: Vec<usize> = (0..self.q_neg.len()).collect();
        let mut picked = Vec::with_capacity(k.min(alive.len()));
        while picked.len() < k && !alive.is_empty() {
            let total: f64 = alive.iter().map(|&i| weights[i]).sum();
            let mut u = rng.next_f64() * total;
            let mut chosen = alive.len() - 1;
            for (slot, &i) in alive.iter().enumerate() {
                u -= weights[i];
                if u <= 0.0 {
                    chosen = slot;
                    break;
                }
            }
            let idx = alive.swap_remove(chosen);
            picked.push(self.q_neg[idx].clone());
        }
        Ok(picked)
    }
}

/// Plain cosine similarity; zero-norm vectors are rejected.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("cosine: {} vs {} dims", x.len(), y.len())));
    }
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot / (nx.sqrt() * ny.sqrt()))
}

/// Tape cosine similarity between two vector nodes.
pub fn cosine_node(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let (na, nb) = (tape.value(a).numel(), tape.value(b).numel());
    if na != nb {
        return Err(Error::Shape(format!("cosine: {na} vs {nb} dims")));
    }
    if tape.value(a).data().iter().all(|&v| v == 0.0)
        || tape.value(b).data().iter().all(|&v| v == 0.0)
    {
        return Err(Error::ZeroVector);
    }
    let dot = tape.dot(a, b)?;
    let aa = tape.dot(a, a)?;
    let bb = tape.dot(b, b)?;
    let inv_na = tape.pow_const(aa, -0.5);
    let inv_nb = tape.pow_const(bb, -0.5);
    let scaled = tape.mul(dot, inv_na)?;
    tape.mul(scaled, inv_nb)
}

/// Weights of the total objective: contrastive and consistency terms;
/// the classification term is unweighted.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    contrastive: f64,
    consistency: f64,
}

impl LossWeights {
    pub fn new(contrastive: f64, consistency: f64) -> Result<Self> {
        if contrastive < 0.0 || consistency < 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be >= 0, got ({contrastive}, {consistency})"
            )));
        }
        Ok(Self { contrastive, consistency })
    }

    pub fn contrastive(&self) -> f64 {
        self.contrastive
    }

    pub fn consistency(&self) -> f64 {
        self.consistency
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { contrastive: 0.5, consistency: 0.1 }
    }
}

/// Focal-loss parameters: focusing exponent and per-class weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: Vec<f64>,
}

impl FocalParams {
    pub fn uniform(class_count: usize, gamma: f64) -> Result<Self> {
        Self::new(gamma, vec![1.0; class_count])
    }

    /// Inverse-frequency class weights, normalized to mean 1.
    pub fn from_class_counts(counts: &[usize], gamma: f64) -> Result<Self> {
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Config(
                "focal alpha: every class needs at least one sample".into(),
            ));
        }
        let inv: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
        let mean = inv.iter().sum::<f64>() / inv.len() as f64;
        Self::new(gamma, inv.into_iter().map(|v| v / mean).collect())
    }

    pub fn new(gamma: f64, alpha: Vec<f64>) -> Result<Self> {
        if gamma < 0.0 {
            return Err(Error::Config(format!("focal gamma must be >= 0, got {gamma}")));
        }
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::Config("focal alpha components must be > 0".into()));
        }
        Ok(Self { gamma, alpha })
    }
}

// ── value-level losses ────────────────────────────────────────────

/// InfoNCE over cosine similarities: one positive and `K` hard negatives
/// per anchor, averaged over anchors. Anchors with no negatives contribute
/// exactly zero.
pub fn contrastive_loss(
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    negatives: &[Vec<Vec<f64>>],
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::Domain(format!("temperature must be > 0, got {tau}")));
    }
    if anchors.len() != positives.len() || anchors.len() != negatives.len() {
        return Err(Error::Shape(format!(
            "contrastive: {} anchors, {} positives, {} negative sets",
            anchors.len(),
            positives.len(),
            negatives.len()
        )));
    }
    if anchors.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ((a, p), negs) in anchors.iter().zip(positives).zip(negatives) {
        let s_ap = cosine_similarity(a, p)? / tau;
        if negs.is_empty() {
            continue; // numerator equals denominator
        }
        let mut zs = Vec::with_capacity(negs.len() + 1);
        zs.push(s_ap);
        for n in negs {
            zs.push(cosine_similarity(a, n)? / tau);
        }
        let max = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + zs.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - s_ap;
    }
    Ok(total / anchors.len() as f64)
}

/// Focal classification loss over probability rows.
pub fn focal_loss(probs: &[Vec<f64>], labels: &[usize], fp: &FocalParams) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "focal: {} prob rows vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Empty("focal loss over an empty batch".into()));
    }
    let mut total = 0.0;
    for (row, &label) in probs.iter().zip(labels) {
        if label >= fp.alpha.len() || label >= row.len() {
            return Err(Error::Label(format!("focal: label {label} out of range")));
        }
        let p = row[label].clamp(PROB_FLOOR, 1.0);
        total += -fp.alpha[label] * (1.0 - p).powf(fp.gamma) * p.ln();
    }
    Ok(total / probs.len() as f64)
}

/// Symmetric KL divergence between two distributions (components clamped
/// at 1e-12 inside the logs).
pub fn consistency_loss(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "consistency: {} vs {} classes",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let la = a.max(PROB_FLOOR).ln();
        let lb = b.max(PROB_FLOOR).ln();
        acc += (a - b) * (la - lb);
    }
    Ok(0.5 * acc)
}

/// Weighted total: `w.contrastive * l_con + l_cls + w.consistency * l_cons`.
pub fn total_loss(l_con: f64, l_cls: f64, l_cons: f64, w: &LossWeights) -> f64 {
    w.contrastive * l_con + l_cls + w.consistency * l_cons
}

// ── tape-level losses ─────────────────────────────────────────────

/// Tape InfoNCE: anchors/positives are live nodes, negatives are detached
/// values, and the temperature is `exp(log_tau)` (a live scalar node).
pub fn contrastive_loss_node(
    tape: &mut Tape,
    anchors: &[NodeId],
    positives: &[NodeId],
    negatives: &[Vec<Vec<f64>>],
    log_tau: NodeId,
) -> Result<NodeId> {
    if anchors.len() != positives.len() || anchors.len() != negatives.len() {
        return Err(Error::Shape(format!(
            "contrastive: {} anchors, {} positives, {} negative sets",
            anchors.len(),
            positives.len(),
            negatives.len()
        )));
    }
    let neg_log_tau = tape.scale(log_tau, -1.0);
    let inv_tau = tape.exp(neg_log_tau);
    let mut terms: Vec<NodeId> = Vec::new();
    for ((&a, &p), negs) in anchors.iter().zip(positives).zip(negatives) {
        if negs.is_empty() {
            continue;
        }
        let s_ap = cosine_node(tape, a, p)?;
        let z_ap = tape.mul(s_ap, inv_tau)?;
        let mut zs = z_ap;
        for n in negs {
            let n_leaf = tape.leaf(Tensor::vector(n.clone()));
            let s_an = cosine_node(tape, a, n_leaf)?;
            let z_an = tape.mul(s_an, inv_tau)?;
            zs = tape.concat_vec(zs, z_an)?;
        }
        let lse = tape.logsumexp(zs)?;
        let term = tape.sub(lse, z_ap)?;
        terms.push(term);
    }
    if anchors.is_empty() || terms.is_empty() {
        return Ok(tape.leaf(Tensor::scalar(0.0)));
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(tape.scale(acc, 1.0 / anchors.len() as f64))
}

/// Tape focal loss over per-sample probability nodes.
pub fn focal_loss_node(
    tape: &mut Tape,
    probs: &[NodeId],
    labels: &[usize],
    fp: &FocalParams,
) -> Result<NodeId> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "focal: {} prob rows vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Empty("focal loss over an empty batch".into()));
    }
    let mut acc: Option<NodeId> = None;
    for (&row, &label) in probs.iter().zip(labels) {
        let c = tape.value(row).numel();
        if label >= fp.alpha.len() || label >= c {
            return Err(Error::Label(format!("focal: label {label} out of range")));
        }
        let mut onehot = vec![0.0; c];
        onehot[label] = 1.0;
        let picked = tape.mul_mask(row, Tensor::vector(onehot))?;
        let p_raw = tape.sum(picked);
        let p = tape.clamp_min(p_raw, PROB_FLOOR);
        let ln_p = tape.ln(p);
        let neg_p = tape.scale(p, -1.0);
        let one_minus = tape.add_const(neg_p, 1.0);
        let focus = tape.pow_const(one_minus, fp.gamma);
        let weighted = tape.mul(focus, ln_p)?;
        let term = tape.scale(weighted, -fp.alpha[label]);
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(tape.scale(acc.expect("non-empty batch"), 1.0 / probs.len() as f64))
}

/// Tape symmetric KL between two probability nodes.
pub fn consistency_loss_node(tape: &mut Tape, p: NodeId, q: NodeId) -> Result<NodeId> {
    let cp = tape.clamp_min(p, PROB_FLOOR);
    let cq = tape.clamp_min(q, PROB_FLOOR);
    let lp = tape.ln(cp);
    let lq = tape.ln(cq);
    let dp = tape.sub(p, q)?;
    let dl = tape.sub(lp, lq)?;
    let prod = tape.dot(dp, dl)?;
    Ok(tape.scale(prod, 0.5))
}

/// Tape weighted total.
pub fn total_loss_node(
    tape: &mut Tape,
    l_con: NodeId,
    l_cls: NodeId,
    l_cons: NodeId,
    w: &LossWeights,
) -> Result<NodeId> {
    let con = tape.scale(l_con, w.contrastive);
    let cons = tape.scale(l_cons, w.consistency);
    let partial = tape.add(con, l_cls)?;
    tape.add(partial, cons)
}
