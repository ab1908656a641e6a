//! Interpretability exports: per-sample gate weights and per-residue
//! attention profiles.

use super::ForwardOutput;
use crate::error::{Error, Result};
use crate::fmt_sig9;
use std::path::Path;

/// One scored sample with enough context for the exports.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub id: String,
    pub residues: String,
    pub label: Option<usize>,
    pub out: ForwardOutput,
}

/// Min-max normalize a profile to [0,1]; a constant profile maps to all
/// zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Render `gate_lambda.csv` (id, lambda, label).
pub fn gate_lambda_csv(outputs: &[SampleOutput]) -> String {
    let mut s = String::from("id,gate_lambda,label\n");
    for sample in outputs {
        let label = sample.label.map(|l| l.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{label}\n", sample.id, fmt_sig9(sample.out.gate_lambda)));
    }
    s
}

/// Render `attention.csv` (id, position, residue, attn_cnn, attn_bilstm)
/// with each profile min-max normalized.
pub fn attention_csv(outputs: &[SampleOutput]) -> Result<String> {
    let mut s = String::from("id,position,residue,attn_cnn,attn_bilstm\n");
    for sample in outputs {
        let len = sample.residues.len();
        if sample.out.attn_cnn.len() != len || sample.out.attn_bilstm.len() != len {
            return Err(Error::Shape(format!(
                "attention export: `{}` has {len} residues but {}/{} attention weights",
                sample.id,
                sample.out.attn_cnn.len(),
                sample.out.attn_bilstm.len()
            )));
        }
        let cnn = min_max_normalize(&sample.out.attn_cnn);
        let lstm = min_max_normalize(&sample.out.attn_bilstm);
        for (pos, residue) in sample.residues.chars().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                sample.id,
                pos + 1,
                residue,
                fmt_sig9(cnn[pos]),
                fmt_sig9(lstm[pos])
            ));
        }
    }
    Ok(s)
}

/// Write `gate_lambda.csv` and `attention.csv` into a directory.
pub fn export_interpretability(outputs: &[SampleOutput], dir: &Path) -> Result<()> {
    if outputs.is_empty() {
        return Err(Error::Empty("interpretability export needs at least one sample".into()));
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("gate_lambda.csv"), gate_lambda_csv(outputs))?;
    std::fs::write(dir.join("attention.csv"), attention_csv(outputs)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, residues: &str, lambda: f64, attn: Vec<f64>) -> SampleOutput {
        SampleOutput {
            id: id.into(),
            residues: residues.into(),
            label: Some(1),
            out: ForwardOutput {
                v_cnn: vec![],
                v_bilstm: vec![],
                gate_lambda: lambda,
                e_final: vec![],
                logits: vec![],
                probs: vec![],
                attn_cnn: attn.clone(),
                attn_bilstm: attn,
            },
        }
    }

    #[test]
    fn min_max_cases() {
        let got = min_max_normalize(&[0.2, 0.4, 0.6]);
        for (g, want) in got.iter().zip([0.0, 0.5, 1.0]) {
            assert!((g - want).abs() < 1e-12);
        }
        assert_eq!(min_max_normalize(&[0.3, 0.3, 0.3]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn gate_csv_single_row() {
        let s = sample("p1", "ACD", 0.7, vec![0.1, 0.2, 0.7]);
        let csv = gate_lambda_csv(&[s]);
        assert_eq!(csv, "id,gate_lambda,label\np1,0.7,1\n");
    }

    #[test]
    fn attention_csv_normalizes_per_profile() {
        let s = sample("p1", "ACD", 0.5, vec![0.2, 0.4, 0.6]);
        let csv = attention_csv(&[s]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "p1,1,A,0,0");
        assert_eq!(lines[2], "p1,2,C,0.5,0.5");
        assert_eq!(lines[3], "p1,3,D,1,1");
    }

    #[test]
    fn attention_length_mismatch_rejected() {
        let s = sample("p1", "ACDE", 0.5, vec![0.2, 0.4, 0.6]);
        assert!(attention_csv(&[s]).is_err());
    }
}
