//! Antiviral peptide prediction pipeline.
//!
//! End-to-end machinery for screening peptide sequences for antiviral
//! activity and for predicting functional subclasses of the hits:
//!
//! - [`seqio`] — FASTA parsing, label tables, stratified splits
//! - [`descriptors`] — ten classical biochemical sequence descriptors
//! - [`augment`] — substitution-matrix-guided sequence augmentation
//! - [`embed`] — per-residue embedding providers (file-backed or fallback)
//! - [`diffcore`] — dense tensors with reverse-mode differentiation
//! - [`model`] — the dual-branch gated network and its checkpoints
//! - [`objective`] — contrastive / focal / consistency training losses
//! - [`train`] — optimization loop, transfer fine-tuning, TTA inference
//! - [`metrics`] — evaluation metrics and composition statistics
//! - [`synth`] — deterministic synthetic corpora for tests and demos

pub mod augment;
pub mod descriptors;
pub mod diffcore;
pub mod embed;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod seqio;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// The 20 standard amino acids in alphabetical single-letter order.
pub const ALPHABET: [u8; 20] = *b"ACDEFGHIKLMNPQRSTVWY";

/// Index of a residue in [`ALPHABET`], or `None` for anything else.
pub fn aa_index(aa: u8) -> Option<usize> {
    match aa {
        b'A' => Some(0),
        b'C' => Some(1),
        b'D' => Some(2),
        b'E' => Some(3),
        b'F' => Some(4),
        b'G' => Some(5),
        b'H' => Some(6),
        b'I' => Some(7),
        b'K' => Some(8),
        b'L' => Some(9),
        b'M' => Some(10),
        b'N' => Some(11),
        b'P' => Some(12),
        b'Q' => Some(13),
        b'R' => Some(14),
        b'S' => Some(15),
        b'T' => Some(16),
        b'V' => Some(17),
        b'W' => Some(18),
        b'Y' => Some(19),
        _ => None,
    }
}

/// Format a float with 9 significant digits, the convention for every CSV
/// emitted by this crate. Uses plain notation for moderate exponents and
/// scientific notation otherwise, with trailing zeros trimmed.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let s = if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        return format!("{v:.8e}");
    };
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_is_sorted_and_indexed() {
        let mut sorted = ALPHABET;
        sorted.sort_unstable();
        assert_eq!(sorted, ALPHABET);
        for (i, &aa) in ALPHABET.iter().enumerate() {
            assert_eq!(aa_index(aa), Some(i));
        }
        assert_eq!(aa_index(b'X'), None);
        assert_eq!(aa_index(b'a'), None);
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(0.7), "0.7");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-0.25), "-0.25");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456789.0), "123456789");
        assert_eq!(fmt_sig9(1.23456789e-7), "1.23456789e-7");
    }
}
