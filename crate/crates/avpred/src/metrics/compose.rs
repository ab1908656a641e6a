//! Amino-acid composition analysis between two sequence groups:
//! per-residue mean frequencies, Welch t statistics with p-values, and
//! log2 fold changes.

use super::stats::{significance_stars, welch_t_test};
use crate::descriptors::{compute_descriptor, Descriptor, DescriptorConfig};
use crate::error::{Error, Result};
use crate::seqio::PeptideSequence;
use crate::{fmt_sig9, ALPHABET};

const FOLD_EPS: f64 = 1e-6;

/// Composition comparison for one amino acid.
#[derive(Debug, Clone)]
pub struct CompositionRow {
    pub amino_acid: char,
    pub mean_a: f64,
    pub mean_b: f64,
    pub log2_fold_change: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

/// Per-amino-acid two-group comparison. The underlying observation is each
/// sequence's composition fraction; groups need at least two sequences.
pub fn composition_analysis(
    group_a: &[PeptideSequence],
    group_b: &[PeptideSequence],
) -> Result<Vec<CompositionRow>> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::Variance(format!(
            "composition analysis needs >= 2 sequences per group, got {} and {}",
            group_a.len(),
            group_b.len()
        )));
    }
    let cfg = DescriptorConfig::default();
    let comp = |seqs: &[PeptideSequence]| -> Result<Vec<Vec<f64>>> {
        seqs.iter().map(|s| compute_descriptor(Descriptor::Aac, s, &cfg)).collect()
    };
    let a = comp(group_a)?;
    let b = comp(group_b)?;

    let mut rows = Vec::with_capacity(20);
    for (i, &aa) in ALPHABET.iter().enumerate() {
        let obs_a: Vec<f64> = a.iter().map(|v| v[i]).collect();
        let obs_b: Vec<f64> = b.iter().map(|v| v[i]).collect();
        let mean_a = obs_a.iter().sum::<f64>() / obs_a.len() as f64;
        let mean_b = obs_b.iter().sum::<f64>() / obs_b.len() as f64;
        let (t, _, p) = welch_t_test(&obs_a, &obs_b)?;
        rows.push(CompositionRow {
            amino_acid: aa as char,
            mean_a,
            mean_b,
            log2_fold_change: ((mean_a + FOLD_EPS) / (mean_b + FOLD_EPS)).log2(),
            t_statistic: t,
            p_value: p,
            stars: significance_stars(p),
        });
    }
    Ok(rows)
}

/// CSV rendering of a composition comparison.
pub fn composition_csv(rows: &[CompositionRow]) -> String {
    let mut s =
        String::from("amino_acid,mean_a,mean_b,log2_fold_change,t_statistic,p_value,significance\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.amino_acid,
            fmt_sig9(r.mean_a),
            fmt_sig9(r.mean_b),
            fmt_sig9(r.log2_fold_change),
            fmt_sig9(r.t_statistic),
            fmt_sig9(r.p_value),
            r.stars
        ));
    }
    s
}
