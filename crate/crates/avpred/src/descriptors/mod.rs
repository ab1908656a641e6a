//! The ten classical sequence descriptors and their concatenation into the
//! global feature vector.
//!
//! Layout order is fixed: AAC, DPC, CKSAAGP, DistancePair, PAAC, QSOrder,
//! ZScale, GTPC, Binary, DDE. Counts are accumulated in sequence order and
//! normalized once, so results reproduce across platforms.

pub mod tables;

use crate::error::{Error, Result};
use crate::seqio::PeptideSequence;
use crate::{aa_index, fmt_sig9};
use tables::group_of;

/// Parameters for the descriptors the literature leaves open.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DescriptorConfig {
    pub cksaagp_max_gap: usize,
    pub distpair_max_dist: usize,
    pub paac_lambda: usize,
    pub paac_weight: f64,
    pub qso_nlag: usize,
    pub qso_weight: f64,
    pub binary_max_len: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            cksaagp_max_gap: 5,
            distpair_max_dist: 3,
            paac_lambda: 4,
            paac_weight: 0.05,
            qso_nlag: 3,
            qso_weight: 0.1,
            binary_max_len: 100,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self, min_len: usize) -> Result<()> {
        if self.paac_lambda >= min_len {
            return Err(Error::Config(format!(
                "descriptor.paac_lambda {} must be < minimum sequence length {min_len}",
                self.paac_lambda
            )));
        }
        if self.qso_nlag >= min_len {
            return Err(Error::Config(format!(
                "descriptor.qso_nlag {} must be < minimum sequence length {min_len}",
                self.qso_nlag
            )));
        }
        if self.paac_weight <= 0.0 || self.qso_weight <= 0.0 {
            return Err(Error::Config("descriptor weights must be positive".into()));
        }
        if self.binary_max_len == 0 {
            return Err(Error::Config("descriptor.binary_max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// The ten descriptor kinds in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Descriptor {
    Aac,
    Dpc,
    Cksaagp,
    DistancePair,
    Paac,
    QsOrder,
    ZScale,
    Gtpc,
    Binary,
    Dde,
}

impl Descriptor {
    pub const LAYOUT: [Descriptor; 10] = [
        Descriptor::Aac,
        Descriptor::Dpc,
        Descriptor::Cksaagp,
        Descriptor::DistancePair,
        Descriptor::Paac,
        Descriptor::QsOrder,
        Descriptor::ZScale,
        Descriptor::Gtpc,
        Descriptor::Binary,
        Descriptor::Dde,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Descriptor::Aac => "AAC",
            Descriptor::Dpc => "DPC",
            Descriptor::Cksaagp => "CKSAAGP",
            Descriptor::DistancePair => "DistancePair",
            Descriptor::Paac => "PAAC",
            Descriptor::QsOrder => "QSOrder",
            Descriptor::ZScale => "ZScale",
            Descriptor::Gtpc => "GTPC",
            Descriptor::Binary => "Binary",
            Descriptor::Dde => "DDE",
        }
    }

    pub fn from_name(name: &str) -> Result<Descriptor> {
        Descriptor::LAYOUT
            .iter()
            .copied()
            .find(|d| d.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown descriptor `{name}`")))
    }
}

/// One segment of a concatenated feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub descriptor: Descriptor,
    pub offset: usize,
    pub length: usize,
}

/// The concatenated global descriptor vector with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Vec<Segment>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The slice of values belonging to one descriptor.
    pub fn segment(&self, d: Descriptor) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.descriptor == d)
            .map(|s| &self.values[s.offset..s.offset + s.length])
    }
}

/// Output dimension of one descriptor under a config.
pub fn descriptor_dim(kind: Descriptor, cfg: &DescriptorConfig) -> usize {
    match kind {
        Descriptor::Aac => 20,
        Descriptor::Dpc => 400,
        Descriptor::Cksaagp => 25 * (cfg.cksaagp_max_gap + 1),
        Descriptor::DistancePair => 25 * (cfg.distpair_max_dist + 1),
        Descriptor::Paac => 20 + cfg.paac_lambda,
        Descriptor::QsOrder => 40 + 2 * cfg.qso_nlag,
        Descriptor::ZScale => 5,
        Descriptor::Gtpc => 125,
        Descriptor::Binary => 20 * cfg.binary_max_len,
        Descriptor::Dde => 400,
    }
}

/// Total dimension of the concatenated vector.
pub fn total_dim(cfg: &DescriptorConfig) -> usize {
    Descriptor::LAYOUT.iter().map(|&d| descriptor_dim(d, cfg)).sum()
}

fn indices(seq: &PeptideSequence) -> Vec<usize> {
    seq.residues().bytes().map(|b| aa_index(b).expect("validated residue")).collect()
}

fn aac(idx: &[usize]) -> Vec<f64> {
    let mut counts = vec![0.0; 20];
    for &i in idx {
        counts[i] += 1.0;
    }
    let n = idx.len() as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    counts
}

fn dpc(idx: &[usize]) -> Vec<f64> {
    let mut counts = vec![0.0; 400];
    for w in idx.windows(2) {
        counts[w[0] * 20 + w[1]] += 1.0;
    }
    let n = (idx.len() - 1) as f64;
    if n > 0.0 {
        counts.iter_mut().for_each(|c| *c /= n);
    }
    counts
}

fn cksaagp(groups: &[usize], max_gap: usize) -> Vec<f64> {
    let mut out = vec![0.0; 25 * (max_gap + 1)];
    for k in 0..=max_gap {
        let block = &mut out[k * 25..(k + 1) * 25];
        let span = k + 1;
        if groups.len() <= span {
            continue; // no counted tuple at this spacing; block stays zero
        }
        for i in 0..groups.len() - span {
            block[groups[i] * 5 + groups[i + span]] += 1.0;
        }
        let n = (groups.len() - span) as f64;
        block.iter_mut().for_each(|c| *c /= n);
    }
    out
}

fn distance_pair(groups: &[usize], max_dist: usize) -> Vec<f64> {
    let mut out = vec![0.0; 25 * (max_dist + 1)];
    for d in 0..=max_dist {
        let block = &mut out[d * 25..(d + 1) * 25];
        if groups.len() <= d {
            continue;
        }
        for i in 0..groups.len() - d {
            block[groups[i] * 5 + groups[i + d]] += 1.0;
        }
        let n = (groups.len() - d) as f64;
        block.iter_mut().for_each(|c| *c /= n);
    }
    out
}

/// Property rows standardized over the alphabet (population moments).
fn standardized_paac_properties() -> [[f64; 3]; 20] {
    let raw = tables::paac_properties();
    let mut out = [[0.0; 3]; 20];
    for k in 0..3 {
        let mean = (0..20).map(|i| raw[i][k]).sum::<f64>() / 20.0;
        let var = (0..20).map(|i| (raw[i][k] - mean).powi(2)).sum::<f64>() / 20.0;
        let sd = var.sqrt();
        for i in 0..20 {
            out[i][k] = (raw[i][k] - mean) / sd;
        }
    }
    out
}

fn paac(idx: &[usize], lambda: usize, weight: f64) -> Result<Vec<f64>> {
    let len = idx.len();
    if lambda >= len {
        return Err(Error::Length(format!(
            "PAAC lambda {lambda} must be < sequence length {len}"
        )));
    }
    let props = standardized_paac_properties();
    let theta_pair = |a: usize, b: usize| -> f64 {
        (0..3).map(|k| (props[b][k] - props[a][k]).powi(2)).sum::<f64>() / 3.0
    };
    let mut thetas = Vec::with_capacity(lambda);
    for lag in 1..=lambda {
        let mut acc = 0.0;
        for i in 0..len - lag {
            acc += theta_pair(idx[i], idx[i + lag]);
        }
        thetas.push(acc / (len - lag) as f64);
    }
    let freqs = aac(idx);
    let denom = 1.0 + weight * thetas.iter().sum::<f64>();
    let mut out = Vec::with_capacity(20 + lambda);
    out.extend(freqs.iter().map(|f| f / denom));
    out.extend(thetas.iter().map(|t| weight * t / denom));
    Ok(out)
}

fn qso_order(idx: &[usize], nlag: usize, weight: f64) -> Result<Vec<f64>> {
    let len = idx.len();
    if nlag >= len {
        return Err(Error::Length(format!(
            "QSOrder nlag {nlag} must be < sequence length {len}"
        )));
    }
    let d1 = tables::zscale_distance();
    let d2 = tables::grantham_distance();
    let tau = |dist: &[[f64; 20]; 20]| -> Vec<f64> {
        (1..=nlag)
            .map(|lag| (0..len - lag).map(|i| dist[idx[i]][idx[i + lag]].powi(2)).sum::<f64>())
            .collect()
    };
    let tau1 = tau(d1);
    let tau2 = tau(d2);
    let freqs = aac(idx);
    let denom1 = 1.0 + weight * tau1.iter().sum::<f64>();
    let denom2 = 1.0 + weight * tau2.iter().sum::<f64>();
    let mut out = Vec::with_capacity(40 + 2 * nlag);
    out.extend(freqs.iter().map(|f| f / denom1));
    out.extend(freqs.iter().map(|f| f / denom2));
    out.extend(tau1.iter().map(|t| weight * t / denom1));
    out.extend(tau2.iter().map(|t| weight * t / denom2));
    Ok(out)
}

fn zscale(idx: &[usize]) -> Vec<f64> {
    let z = tables::zscales();
    let mut mean = vec![0.0; 5];
    for &i in idx {
        for k in 0..5 {
            mean[k] += z[i][k];
        }
    }
    let n = idx.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn gtpc(groups: &[usize]) -> Vec<f64> {
    let mut counts = vec![0.0; 125];
    for w in groups.windows(3) {
        counts[w[0] * 25 + w[1] * 5 + w[2]] += 1.0;
    }
    let n = groups.len().saturating_sub(2) as f64;
    if n > 0.0 {
        counts.iter_mut().for_each(|c| *c /= n);
    }
    counts
}

fn binary(idx: &[usize], max_len: usize) -> Result<Vec<f64>> {
    if idx.len() > max_len {
        return Err(Error::Length(format!(
            "Binary encoding supports up to {max_len} residues, got {}",
            idx.len()
        )));
    }
    let mut out = vec![0.0; 20 * max_len];
    for (p, &i) in idx.iter().enumerate() {
        out[p * 20 + i] = 1.0;
    }
    Ok(out)
}

fn dde(idx: &[usize]) -> Vec<f64> {
    let codons = tables::codon_counts();
    let mut counts = vec![0.0; 400];
    for w in idx.windows(2) {
        counts[w[0] * 20 + w[1]] += 1.0;
    }
    let n = (idx.len() - 1) as f64;
    let mut out = vec![0.0; 400];
    for i in 0..20 {
        for j in 0..20 {
            let dc = counts[i * 20 + j] / n;
            let tm = (codons[i] / 61.0) * (codons[j] / 61.0);
            let tv = tm * (1.0 - tm) / n;
            out[i * 20 + j] = (dc - tm) / tv.sqrt();
        }
    }
    out
}

/// Compute one descriptor for a sequence.
pub fn compute_descriptor(
    kind: Descriptor,
    seq: &PeptideSequence,
    cfg: &DescriptorConfig,
) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::Length(format!("sequence `{}` is empty", seq.id())));
    }
    let idx = indices(seq);
    if matches!(kind, Descriptor::Dpc | Descriptor::Dde) && idx.len() < 2 {
        return Err(Error::Length(format!(
            "{} needs at least 2 residues, `{}` has {}",
            kind.name(),
            seq.id(),
            idx.len()
        )));
    }
    let groups: Vec<usize> =
        seq.residues().bytes().map(group_of).collect();
    Ok(match kind {
        Descriptor::Aac => aac(&idx),
        Descriptor::Dpc => dpc(&idx),
        Descriptor::Cksaagp => cksaagp(&groups, cfg.cksaagp_max_gap),
        Descriptor::DistancePair => distance_pair(&groups, cfg.distpair_max_dist),
        Descriptor::Paac => paac(&idx, cfg.paac_lambda, cfg.paac_weight)?,
        Descriptor::QsOrder => qso_order(&idx, cfg.qso_nlag, cfg.qso_weight)?,
        Descriptor::ZScale => zscale(&idx),
        Descriptor::Gtpc => gtpc(&groups),
        Descriptor::Binary => binary(&idx, cfg.binary_max_len)?,
        Descriptor::Dde => dde(&idx),
    })
}

/// Concatenate all ten descriptors in layout order.
pub fn featurize(seq: &PeptideSequence, cfg: &DescriptorConfig) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(total_dim(cfg));
    let mut layout = Vec::with_capacity(10);
    for &d in Descriptor::LAYOUT.iter() {
        let part = compute_descriptor(d, seq, cfg)?;
        debug_assert_eq!(part.len(), descriptor_dim(d, cfg));
        layout.push(Segment { descriptor: d, offset: values.len(), length: part.len() });
        values.extend(part);
    }
    Ok(FeatureVector { values, layout })
}

/// CSV header for feature exports: `id` plus each segment name expanded
/// per component.
pub fn csv_header(cfg: &DescriptorConfig) -> String {
    let mut cols = vec!["id".to_string()];
    for &d in Descriptor::LAYOUT.iter() {
        for k in 0..descriptor_dim(d, cfg) {
            cols.push(format!("{}_{}", d.name(), k + 1));
        }
    }
    cols.join(",")
}

/// One CSV row for a featurized sequence.
pub fn csv_row(id: &str, fv: &FeatureVector) -> String {
    let mut row = String::with_capacity(fv.len() * 12);
    row.push_str(id);
    for v in &fv.values {
        row.push(',');
        row.push_str(&fmt_sig9(*v));
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(residues: &str) -> PeptideSequence {
        PeptideSequence::new("t".into(), residues.into()).unwrap()
    }

    fn cfg() -> DescriptorConfig {
        DescriptorConfig::default()
    }

    #[test]
    fn aac_single_letter() {
        let v = compute_descriptor(Descriptor::Aac, &seq("AAAA"), &cfg()).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1..].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn aac_uniform_quarters() {
        let v = compute_descriptor(Descriptor::Aac, &seq("ACDG"), &cfg()).unwrap();
        for aa in ["A", "C", "D", "G"] {
            let i = aa_index(aa.as_bytes()[0]).unwrap();
            assert_eq!(v[i], 0.25);
        }
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aac_is_permutation_invariant_dpc_is_not() {
        let a = compute_descriptor(Descriptor::Aac, &seq("AC"), &cfg()).unwrap();
        let b = compute_descriptor(Descriptor::Aac, &seq("CA"), &cfg()).unwrap();
        assert_eq!(a, b);
        let a = compute_descriptor(Descriptor::Dpc, &seq("AC"), &cfg()).unwrap();
        let b = compute_descriptor(Descriptor::Dpc, &seq("CA"), &cfg()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn dpc_counts_all_adjacent_pairs() {
        let v = compute_descriptor(Descriptor::Dpc, &seq("AAA"), &cfg()).unwrap();
        assert_eq!(v[0], 1.0); // AA slot
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zscale_of_homopolymer_is_table_row() {
        let v = compute_descriptor(Descriptor::ZScale, &seq("AA"), &cfg()).unwrap();
        let row = tables::zscales()[aa_index(b'A').unwrap()];
        assert_eq!(v.as_slice(), &row);
    }

    #[test]
    fn binary_one_hot_with_padding() {
        let c = DescriptorConfig { binary_max_len: 4, ..cfg() };
        let v = compute_descriptor(Descriptor::Binary, &seq("AC"), &c).unwrap();
        assert_eq!(v.len(), 80);
        assert_eq!(v[aa_index(b'A').unwrap()], 1.0);
        assert_eq!(v[20 + aa_index(b'C').unwrap()], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 2.0);
        assert!(v[40..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn binary_rejects_overlong() {
        let c = DescriptorConfig { binary_max_len: 3, ..cfg() };
        assert!(matches!(
            compute_descriptor(Descriptor::Binary, &seq("ACDEF"), &c),
            Err(Error::Length(_))
        ));
    }

    // Brute-force re-derivation of the deviation formula, scanning the
    // sequence once per dipeptide; independent of the vectorized path.
    fn dde_oracle(s: &str) -> Vec<f64> {
        let codons = tables::codon_counts();
        let chars: Vec<usize> = s.bytes().map(|b| aa_index(b).unwrap()).collect();
        let n = (chars.len() - 1) as f64;
        let mut out = vec![0.0; 400];
        for i in 0..20 {
            for j in 0..20 {
                let mut count = 0.0;
                for p in 0..chars.len() - 1 {
                    if chars[p] == i && chars[p + 1] == j {
                        count += 1.0;
                    }
                }
                let dc = count / n;
                let tm = (codons[i] / 61.0) * (codons[j] / 61.0);
                let tv = tm * (1.0 - tm) / n;
                out[i * 20 + j] = (dc - tm) / tv.sqrt();
            }
        }
        out
    }

    #[test]
    fn dde_matches_bruteforce_oracle() {
        for s in ["ACACAC", "ACDEFGHIKLMNPQRSTVWY", "KKKKLLLLWWWW", "AC"] {
            let got = compute_descriptor(Descriptor::Dde, &seq(s), &cfg()).unwrap();
            let want = dde_oracle(s);
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12, "{s}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn cksaagp_blocks_sum_to_one() {
        let v = compute_descriptor(Descriptor::Cksaagp, &seq("ACDEFGHIKLMNPQRSTVWY"), &cfg())
            .unwrap();
        for k in 0..=5 {
            let s: f64 = v[k * 25..(k + 1) * 25].iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "gap {k} sums to {s}");
        }
    }

    #[test]
    fn cksaagp_short_sequence_has_zero_blocks() {
        // 5 residues support gaps 0..=3 only; blocks 4 and 5 stay zero.
        let v = compute_descriptor(Descriptor::Cksaagp, &seq("ACDEF"), &cfg()).unwrap();
        for k in 0..=3 {
            let s: f64 = v[k * 25..(k + 1) * 25].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for k in 4..=5 {
            assert!(v[k * 25..(k + 1) * 25].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn distance_pair_diagonal_at_zero_distance() {
        let v = compute_descriptor(Descriptor::DistancePair, &seq("ACDEF"), &cfg()).unwrap();
        // d = 0 pairs each residue with itself: only (g,g) cells populated.
        for g1 in 0..5 {
            for g2 in 0..5 {
                if g1 != g2 {
                    assert_eq!(v[g1 * 5 + g2], 0.0);
                }
            }
        }
        let s: f64 = v[..25].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gtpc_sums_to_one() {
        let v = compute_descriptor(Descriptor::Gtpc, &seq("ACDEFGHIKL"), &cfg()).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn paac_and_qso_reject_short_sequences() {
        let c = DescriptorConfig { paac_lambda: 6, ..cfg() };
        assert!(matches!(
            compute_descriptor(Descriptor::Paac, &seq("ACDEF"), &c),
            Err(Error::Length(_))
        ));
        let c = DescriptorConfig { qso_nlag: 5, ..cfg() };
        assert!(matches!(
            compute_descriptor(Descriptor::QsOrder, &seq("ACDEF"), &c),
            Err(Error::Length(_))
        ));
    }

    #[test]
    fn dimension_formulas() {
        let c = cfg();
        assert_eq!(descriptor_dim(Descriptor::Cksaagp, &c), 150);
        assert_eq!(descriptor_dim(Descriptor::Paac, &c), 24);
        assert_eq!(descriptor_dim(Descriptor::ZScale, &c), 5);
        assert_eq!(descriptor_dim(Descriptor::QsOrder, &c), 46);
        assert_eq!(descriptor_dim(Descriptor::DistancePair, &c), 100);
        assert_eq!(total_dim(&c), 3270);
    }

    #[test]
    fn featurize_layout_and_consistency() {
        let c = cfg();
        let s = seq("ACDEFGHIKLMNPQRSTVWY");
        let fv = featurize(&s, &c).unwrap();
        assert_eq!(fv.len(), 3270);
        assert_eq!(fv.layout.len(), 10);
        let aac_seg = fv.segment(Descriptor::Aac).unwrap();
        let direct = compute_descriptor(Descriptor::Aac, &s, &c).unwrap();
        assert_eq!(aac_seg, direct.as_slice());
        // purity
        let fv2 = featurize(&s, &c).unwrap();
        assert_eq!(fv, fv2);
    }

    #[test]
    fn featurize_dim_matches_descriptor_dims_for_random_configs() {
        let mut rng = crate::augment::PortableRng::new(11);
        for _ in 0..50 {
            let c = DescriptorConfig {
                cksaagp_max_gap: rng.below(6),
                distpair_max_dist: rng.below(4),
                paac_lambda: 1 + rng.below(4),
                paac_weight: 0.05,
                qso_nlag: 1 + rng.below(4),
                qso_weight: 0.1,
                binary_max_len: 20 + rng.below(80),
            };
            let s = seq("ACDEFGHIKLMNPQRSTVWY");
            let fv = featurize(&s, &c).unwrap();
            let expected: usize =
                Descriptor::LAYOUT.iter().map(|&d| descriptor_dim(d, &c)).sum();
            assert_eq!(fv.len(), expected);
        }
    }

    #[test]
    fn dde_mean_tends_to_zero_under_its_null() {
        // The deviation statistic is centered when residues are drawn
        // i.i.d. from the codon-usage background the expectation is built
        // on; a long such sequence must have a per-component mean near 0.
        let s = crate::synth::codon_usage_sequence(5, 10_000);
        let v = compute_descriptor(Descriptor::Dde, &seq(&s), &cfg()).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }
}
