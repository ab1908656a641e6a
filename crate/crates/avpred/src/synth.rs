//! Deterministic synthetic corpora for tests, demos, and smoke runs.
//!
//! Generators draw through [`PortableRng`], so a seed pins every sequence
//! byte-for-byte on every platform.

use crate::augment::PortableRng;
use crate::descriptors::tables;
use crate::seqio::{LabeledDataset, PeptideSequence};
use crate::ALPHABET;

/// i.i.d. sequence with residue probabilities proportional to sense-codon
/// multiplicity (the background the dipeptide-deviation statistic is
/// centered on).
pub fn codon_usage_sequence(seed: u64, n: usize) -> String {
    let mut rng = PortableRng::new(seed);
    let codons = tables::codon_counts();
    let mut cum = [0.0; 20];
    let mut acc = 0.0;
    for i in 0..20 {
        acc += codons[i] / 61.0;
        cum[i] = acc;
    }
    let mut s = String::with_capacity(n);
    for _ in 0..n {
        let u = rng.next_f64();
        let mut k = 0;
        while u > cum[k] && k < 19 {
            k += 1;
        }
        s.push(ALPHABET[k] as char);
    }
    s
}

fn draw_residue(rng: &mut PortableRng, enriched: &[u8], enrich_prob: f64) -> u8 {
    if rng.next_f64() < enrich_prob {
        enriched[rng.below(enriched.len())]
    } else {
        ALPHABET[rng.below(20)]
    }
}

fn draw_sequence(
    rng: &mut PortableRng,
    enriched: &[u8],
    enrich_prob: f64,
    min_len: usize,
    max_len: usize,
) -> String {
    let len = min_len + rng.below(max_len - min_len + 1);
    (0..len).map(|_| draw_residue(rng, enriched, enrich_prob) as char).collect()
}

/// Enrichment profile for one class of a separable corpus.
#[derive(Debug, Clone)]
pub struct ClassProfile {
    pub enriched: Vec<u8>,
    pub enrich_prob: f64,
}

/// A linearly separable screening corpus: positives enriched in
/// lysine/arginine/leucine/tryptophan, negatives in glycine/serine.
/// Labels: 1 = active, 0 = inactive.
pub fn separable_corpus(
    seed: u64,
    n_pos: usize,
    n_neg: usize,
    min_len: usize,
    max_len: usize,
) -> LabeledDataset {
    two_class_corpus(
        seed,
        n_pos,
        n_neg,
        min_len,
        max_len,
        &ClassProfile { enriched: vec![b'K', b'R', b'L', b'W'], enrich_prob: 0.6 },
        &ClassProfile { enriched: vec![b'G', b'S'], enrich_prob: 0.6 },
        "pos",
        "neg",
    )
}

/// A subclass task drawn from the same family as [`separable_corpus`] but
/// with the positive motif shifted toward tryptophan/arginine/proline;
/// negatives share the inactive background.
pub fn subclass_corpus(
    seed: u64,
    n_pos: usize,
    n_neg: usize,
    min_len: usize,
    max_len: usize,
) -> LabeledDataset {
    two_class_corpus(
        seed,
        n_pos,
        n_neg,
        min_len,
        max_len,
        &ClassProfile { enriched: vec![b'W', b'R', b'P'], enrich_prob: 0.6 },
        &ClassProfile { enriched: vec![b'G', b'S'], enrich_prob: 0.6 },
        "sub",
        "bg",
    )
}

#[allow(clippy::too_many_arguments)]
pub fn two_class_corpus(
    seed: u64,
    n_pos: usize,
    n_neg: usize,
    min_len: usize,
    max_len: usize,
    pos: &ClassProfile,
    neg: &ClassProfile,
    pos_prefix: &str,
    neg_prefix: &str,
) -> LabeledDataset {
    assert!(min_len >= 1 && max_len >= min_len);
    let mut rng = PortableRng::new(seed);
    let mut items = Vec::with_capacity(n_pos + n_neg);
    for i in 0..n_pos {
        let s = draw_sequence(&mut rng, &pos.enriched, pos.enrich_prob, min_len, max_len);
        items.push(
            PeptideSequence::new(format!("{pos_prefix}{i}"), s)
                .expect("generator stays on the alphabet")
                .with_label(Some(1)),
        );
    }
    for i in 0..n_neg {
        let s = draw_sequence(&mut rng, &neg.enriched, neg.enrich_prob, min_len, max_len);
        items.push(
            PeptideSequence::new(format!("{neg_prefix}{i}"), s)
                .expect("generator stays on the alphabet")
                .with_label(Some(0)),
        );
    }
    LabeledDataset::new(items, 2, vec!["inactive".into(), "active".into()])
        .expect("both classes populated")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic() {
        let a = separable_corpus(7, 10, 10, 8, 12);
        let b = separable_corpus(7, 10, 10, 8, 12);
        for (x, y) in a.items.iter().zip(b.items.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn corpus_shapes_and_labels() {
        let ds = separable_corpus(1, 5, 7, 8, 12);
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.class_counts(), vec![7, 5]);
        for item in &ds.items {
            assert!(item.len() >= 8 && item.len() <= 12);
        }
    }

    #[test]
    fn enrichment_shows_up_in_composition() {
        let ds = separable_corpus(3, 50, 50, 10, 14);
        let freq_of = |items: &[&PeptideSequence], target: u8| -> f64 {
            let total: usize = items.iter().map(|s| s.len()).sum();
            let hits: usize = items
                .iter()
                .map(|s| s.residues().bytes().filter(|&b| b == target).count())
                .sum();
            hits as f64 / total as f64
        };
        let pos: Vec<&PeptideSequence> =
            ds.items.iter().filter(|i| i.label() == Some(1)).collect();
        let neg: Vec<&PeptideSequence> =
            ds.items.iter().filter(|i| i.label() == Some(0)).collect();
        assert!(freq_of(&pos, b'K') > 0.10);
        assert!(freq_of(&neg, b'G') > 0.20);
        assert!(freq_of(&neg, b'K') < 0.05);
    }

    #[test]
    fn codon_sequence_matches_background() {
        let s = codon_usage_sequence(0, 50_000);
        let l_freq = s.bytes().filter(|&b| b == b'L').count() as f64 / 50_000.0;
        // L has 6 of 61 codons.
        assert!((l_freq - 6.0 / 61.0).abs() < 0.01, "L freq {l_freq}");
    }
}
