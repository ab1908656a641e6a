//! Biology-guided sequence augmentation.
//!
//! Sequences are split into fragments, each fragment is edited over a cycle
//! of steps (substitution-matrix mutation, random insertion, random
//! deletion), and the fragments are rejoined. A mutation-only variant
//! generator supports test-time augmentation. All randomness flows through
//! [`PortableRng`], a splitmix64 stream that reproduces bit-for-bit on any
//! platform.

use crate::error::{Error, Result};
use crate::seqio::PeptideSequence;
use crate::{aa_index, ALPHABET};
use std::sync::OnceLock;

/// Deterministic 64-bit RNG (splitmix64).
///
/// The stream depends only on the seed, never on platform or build flags,
/// so every stochastic pipeline stage replays exactly.
#[derive(Debug, Clone)]
pub struct PortableRng {
    state: u64,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero; the modulo bias is
    /// negligible for the small ranges used here and keeps the stream
    /// portable.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal deviate via Box-Muller (two stream draws).
    pub fn next_gaussian(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        if u1 <= 0.0 {
            u1 = f64::EPSILON;
        }
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Derive an independent stream; advances this one by a single draw.
    pub fn fork(&mut self) -> PortableRng {
        PortableRng::new(self.next_u64())
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// 20x20 amino-acid substitution score table, indexed alphabetically.
#[derive(Debug, Clone)]
pub struct Blosum62 {
    scores: [[i32; 20]; 20],
}

static BLOSUM62: OnceLock<Blosum62> = OnceLock::new();

impl Blosum62 {
    /// The embedded canonical table.
    pub fn standard() -> &'static Blosum62 {
        BLOSUM62.get_or_init(|| {
            Blosum62::parse(include_str!("../data/blosum62.tsv"))
                .expect("embedded substitution table is well-formed")
        })
    }

    fn parse(text: &str) -> Result<Blosum62> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("substitution table: empty".into()))?;
        let cols: Vec<u8> = header
            .split('\t')
            .filter(|s| !s.is_empty())
            .map(|s| s.as_bytes()[0])
            .collect();
        if cols.len() != 20 {
            return Err(Error::Format("substitution table: expected 20 columns".into()));
        }
        let mut scores = [[i32::MIN; 20]; 20];
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let row_aa = fields
                .next()
                .and_then(|s| s.bytes().next())
                .ok_or_else(|| Error::Format("substitution table: bad row".into()))?;
            let ri = aa_index(row_aa)
                .ok_or_else(|| Error::Format("substitution table: unknown residue".into()))?;
            for (col, field) in fields.enumerate() {
                let ci = aa_index(cols[col])
                    .ok_or_else(|| Error::Format("substitution table: unknown residue".into()))?;
                scores[ri][ci] = field
                    .trim()
                    .parse::<i32>()
                    .map_err(|_| Error::Format("substitution table: bad integer".into()))?;
            }
        }
        Ok(Blosum62 { scores })
    }

    /// Score for substituting `a` with `b` (symmetric). Indices are
    /// alphabetical per [`crate::ALPHABET`].
    pub fn score(&self, a: u8, b: u8) -> i32 {
        let (i, j) = (aa_index(a).expect("alphabet"), aa_index(b).expect("alphabet"));
        self.scores[i][j]
    }

    /// Render the table as tab-separated text for audit.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push('\t');
        out.push_str(
            &ALPHABET.iter().map(|&a| (a as char).to_string()).collect::<Vec<_>>().join("\t"),
        );
        out.push('\n');
        for (i, &a) in ALPHABET.iter().enumerate() {
            out.push(a as char);
            for j in 0..20 {
                out.push('\t');
                out.push_str(&self.scores[i][j].to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Knobs for the segment/edit/recombine pipeline and TTA variants.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    pub n_fragments: usize,
    pub m_steps: usize,
    pub insert_prob: f64,
    pub delete_prob: f64,
    pub mutate_prob: f64,
    pub tta_variants: usize,
    pub tta_mutate_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            n_fragments: 3,
            m_steps: 3,
            insert_prob: 0.1,
            delete_prob: 0.1,
            mutate_prob: 0.15,
            tta_variants: 8,
            tta_mutate_prob: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("insert_prob", self.insert_prob),
            ("delete_prob", self.delete_prob),
            ("mutate_prob", self.mutate_prob),
            ("tta_mutate_prob", self.tta_mutate_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("augment.{name} must be in [0,1], got {p}")));
            }
        }
        if self.n_fragments < 1 {
            return Err(Error::Config("augment.n_fragments must be >= 1".into()));
        }
        if self.m_steps < 1 {
            return Err(Error::Config("augment.m_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Highest-scoring substitution distinct from the original residue.
/// Ties break toward the alphabetically first candidate.
pub fn best_substitute(residue: u8, matrix: &Blosum62) -> u8 {
    debug_assert!(aa_index(residue).is_some());
    let mut best = None;
    let mut best_score = i32::MIN;
    for &b in ALPHABET.iter() {
        if b == residue {
            continue;
        }
        let s = matrix.score(residue, b);
        if s > best_score {
            best_score = s;
            best = Some(b);
        }
    }
    best.expect("alphabet has more than one residue")
}

// Edit strategies cycle with (fragment_index + step) mod 3; step counts
// from 1, so a single-step pass applies mutation to fragment 0.
fn strategy_for(fragment: usize, step: usize) -> Strategy {
    match (fragment + step) % 3 {
        1 => Strategy::Mutation,
        2 => Strategy::Insertion,
        _ => Strategy::Deletion,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strategy {
    Mutation,
    Insertion,
    Deletion,
}

fn mutate_pass(fragment: &mut Vec<u8>, prob: f64, matrix: &Blosum62, rng: &mut PortableRng) {
    for r in fragment.iter_mut() {
        if rng.next_f64() < prob {
            *r = best_substitute(*r, matrix);
        }
    }
}

fn insert_pass(fragment: &mut Vec<u8>, prob: f64, rng: &mut PortableRng) {
    let mut out = Vec::with_capacity(fragment.len() * 2);
    for &r in fragment.iter() {
        out.push(r);
        if rng.next_f64() < prob {
            out.push(ALPHABET[rng.below(20)]);
        }
    }
    *fragment = out;
}

fn delete_pass(fragment: &mut Vec<u8>, prob: f64, rng: &mut PortableRng) {
    let len = fragment.len();
    let mut out = Vec::with_capacity(len);
    for (i, &r) in fragment.iter().enumerate() {
        let is_last_chance = out.is_empty() && i == len - 1;
        if rng.next_f64() < prob && !is_last_chance {
            continue;
        }
        out.push(r);
    }
    *fragment = out;
}

/// Segment, edit over `m_steps` cycles, and recombine one sequence.
///
/// Cut points are drawn uniformly without replacement, fragments keep
/// their order, and no fragment is ever emptied, so the result has at
/// least `n_fragments` residues.
pub fn augment_sequence(
    seq: &PeptideSequence,
    cfg: &AugmentConfig,
    rng: &mut PortableRng,
) -> Result<PeptideSequence> {
    cfg.validate()?;
    let residues = seq.residues().as_bytes();
    let len = residues.len();
    if len < cfg.n_fragments {
        return Err(Error::Length(format!(
            "augment: sequence `{}` has {} residues, fewer than n_fragments={}",
            seq.id(),
            len,
            cfg.n_fragments
        )));
    }

    let mut fragments: Vec<Vec<u8>> = if cfg.n_fragments == 1 {
        vec![residues.to_vec()]
    } else {
        let mut positions: Vec<usize> = (1..len).collect();
        rng.shuffle(&mut positions);
        let mut cuts: Vec<usize> = positions[..cfg.n_fragments - 1].to_vec();
        cuts.sort_unstable();
        let mut frags = Vec::with_capacity(cfg.n_fragments);
        let mut start = 0;
        for &cut in &cuts {
            frags.push(residues[start..cut].to_vec());
            start = cut;
        }
        frags.push(residues[start..].to_vec());
        frags
    };

    let matrix = Blosum62::standard();
    for step in 1..=cfg.m_steps {
        for (f, fragment) in fragments.iter_mut().enumerate() {
            match strategy_for(f, step) {
                Strategy::Mutation => mutate_pass(fragment, cfg.mutate_prob, matrix, rng),
                Strategy::Insertion => insert_pass(fragment, cfg.insert_prob, rng),
                Strategy::Deletion => delete_pass(fragment, cfg.delete_prob, rng),
            }
        }
    }

    let joined: Vec<u8> = fragments.concat();
    let out = String::from_utf8(joined).expect("alphabet bytes are ASCII");
    PeptideSequence::new(seq.id().to_string(), out).map(|p| p.with_label(seq.label()))
}

/// Mutation-only variants for test-time augmentation. Lengths always match
/// the input; the original sequence is not included in the output.
pub fn tta_variants(
    seq: &PeptideSequence,
    cfg: &AugmentConfig,
    rng: &mut PortableRng,
) -> Vec<PeptideSequence> {
    let matrix = Blosum62::standard();
    (0..cfg.tta_variants)
        .map(|k| {
            let mut residues = seq.residues().as_bytes().to_vec();
            mutate_pass(&mut residues, cfg.tta_mutate_prob, matrix, rng);
            let s = String::from_utf8(residues).expect("alphabet bytes are ASCII");
            PeptideSequence::new(format!("{}_tta{}", seq.id(), k + 1), s)
                .expect("mutation preserves the alphabet")
                .with_label(seq.label())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: &str, residues: &str) -> PeptideSequence {
        PeptideSequence::new(id.to_string(), residues.to_string()).unwrap()
    }

    #[test]
    fn blosum_is_symmetric_with_dominant_diagonal() {
        let m = Blosum62::standard();
        for &a in ALPHABET.iter() {
            for &b in ALPHABET.iter() {
                assert_eq!(m.score(a, b), m.score(b, a), "{} {}", a as char, b as char);
                if a != b {
                    assert!(m.score(a, a) > m.score(a, b));
                }
            }
        }
    }

    #[test]
    fn blosum_spot_values() {
        let m = Blosum62::standard();
        assert_eq!(m.score(b'A', b'A'), 4);
        assert_eq!(m.score(b'W', b'W'), 11);
        assert_eq!(m.score(b'A', b'S'), 1);
        assert_eq!(m.score(b'W', b'Y'), 2);
        assert_eq!(m.score(b'L', b'I'), 2);
        assert_eq!(m.score(b'L', b'M'), 2);
        assert_eq!(m.score(b'C', b'C'), 9);
        assert_eq!(m.score(b'E', b'D'), 2);
    }

    #[test]
    fn best_substitute_canonical_lookups() {
        let m = Blosum62::standard();
        assert_eq!(best_substitute(b'A', m), b'S');
        assert_eq!(best_substitute(b'W', m), b'Y');
        // I and M tie at 2 for L; alphabetical tie-break picks I.
        assert_eq!(best_substitute(b'L', m), b'I');
    }

    #[test]
    fn best_substitute_never_identity() {
        let m = Blosum62::standard();
        for &a in ALPHABET.iter() {
            assert_ne!(best_substitute(a, m), a);
        }
    }

    #[test]
    fn zero_rates_are_identity() {
        let cfg = AugmentConfig {
            insert_prob: 0.0,
            delete_prob: 0.0,
            mutate_prob: 0.0,
            ..AugmentConfig::default()
        };
        let s = seq("p1", "ACDEFGHIKLMNP");
        let mut rng = PortableRng::new(7);
        let out = augment_sequence(&s, &cfg, &mut rng).unwrap();
        assert_eq!(out.residues(), s.residues());
    }

    #[test]
    fn full_mutation_single_fragment_single_step() {
        let cfg = AugmentConfig {
            n_fragments: 1,
            m_steps: 1,
            insert_prob: 0.0,
            delete_prob: 0.0,
            mutate_prob: 1.0,
            ..AugmentConfig::default()
        };
        let s = seq("p1", "AWL");
        let mut rng = PortableRng::new(1);
        let out = augment_sequence(&s, &cfg, &mut rng).unwrap();
        assert_eq!(out.residues(), "SYI");
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = AugmentConfig::default();
        let s = seq("p1", "ACDEFGHIKLMNPQRSTVWY");
        let a = augment_sequence(&s, &cfg, &mut PortableRng::new(42)).unwrap();
        let b = augment_sequence(&s, &cfg, &mut PortableRng::new(42)).unwrap();
        assert_eq!(a.residues(), b.residues());
    }

    #[test]
    fn too_short_for_fragments_errors() {
        let cfg = AugmentConfig { n_fragments: 4, ..AugmentConfig::default() };
        let s = seq("p1", "ACD");
        match augment_sequence(&s, &cfg, &mut PortableRng::new(0)) {
            Err(Error::Length(_)) => {}
            other => panic!("expected Length error, got {other:?}"),
        }
    }

    #[test]
    fn output_stays_on_alphabet_and_never_collapses() {
        let cfg = AugmentConfig {
            delete_prob: 0.9,
            insert_prob: 0.3,
            mutate_prob: 0.5,
            ..AugmentConfig::default()
        };
        let s = seq("p1", "ACDEFGHIK");
        let mut rng = PortableRng::new(99);
        for _ in 0..200 {
            let out = augment_sequence(&s, &cfg, &mut rng).unwrap();
            assert!(out.residues().len() >= cfg.n_fragments);
            assert!(out.residues().bytes().all(|b| aa_index(b).is_some()));
        }
    }

    #[test]
    fn tta_zero_variants_is_empty() {
        let cfg = AugmentConfig { tta_variants: 0, ..AugmentConfig::default() };
        let s = seq("p1", "ACDEF");
        assert!(tta_variants(&s, &cfg, &mut PortableRng::new(0)).is_empty());
    }

    #[test]
    fn tta_preserves_length() {
        let cfg = AugmentConfig { tta_variants: 6, tta_mutate_prob: 0.4, ..Default::default() };
        let s = seq("p1", "ACDEFGHIKL");
        for v in tta_variants(&s, &cfg, &mut PortableRng::new(3)) {
            assert_eq!(v.residues().len(), s.residues().len());
        }
    }

    #[test]
    fn tta_full_rate_is_full_substitution() {
        let cfg = AugmentConfig { tta_variants: 3, tta_mutate_prob: 1.0, ..Default::default() };
        let s = seq("p1", "AWL");
        for v in tta_variants(&s, &cfg, &mut PortableRng::new(3)) {
            assert_eq!(v.residues(), "SYI");
        }
    }

    #[test]
    fn mutation_rate_matches_binomial_expectation() {
        // One mutation pass over 1e5 positions; observed rate within 3 sigma.
        let matrix = Blosum62::standard();
        let p = 0.15;
        let n = 100_000usize;
        let mut fragment = vec![b'A'; n];
        let mut rng = PortableRng::new(2024);
        mutate_pass(&mut fragment, p, matrix, &mut rng);
        let mutated = fragment.iter().filter(|&&r| r != b'A').count() as f64;
        let mean = p * n as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (mutated - mean).abs() < 3.0 * sigma,
            "observed {mutated}, expected {mean} +/- {}",
            3.0 * sigma
        );
    }

    #[test]
    fn splitmix_reference_stream() {
        // splitmix64(seed=0): first outputs of the reference implementation.
        let mut rng = PortableRng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }
}
