//! Embedded physicochemical constant tables.
//!
//! Source data lives as TSV files under `data/`; checksums are listed in
//! `docs/DATA.md`. Tables are parsed once and cached.

use crate::aa_index;
use std::sync::OnceLock;

fn parse_columns<const N: usize>(text: &str) -> [[f64; N]; 20] {
    let mut out = [[0.0; N]; 20];
    let mut filled = [false; 20];
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let aa = fields.next().expect("row label").bytes().next().expect("residue");
        let i = aa_index(aa).expect("alphabet residue");
        for k in 0..N {
            out[i][k] = fields.next().expect("column").trim().parse().expect("number");
        }
        filled[i] = true;
    }
    assert!(filled.iter().all(|&f| f), "table covers all 20 residues");
    out
}

/// Sandberg five-component z-scales, indexed alphabetically.
pub fn zscales() -> &'static [[f64; 5]; 20] {
    static T: OnceLock<[[f64; 5]; 20]> = OnceLock::new();
    T.get_or_init(|| parse_columns::<5>(include_str!("../../data/zscale.tsv")))
}

/// Chou-style pseudo-composition property rows:
/// hydrophobicity, hydrophilicity, side-chain mass.
pub fn paac_properties() -> &'static [[f64; 3]; 20] {
    static T: OnceLock<[[f64; 3]; 20]> = OnceLock::new();
    T.get_or_init(|| parse_columns::<3>(include_str!("../../data/paac_properties.tsv")))
}

/// Sense-codon multiplicity per residue (sums to 61).
pub fn codon_counts() -> &'static [f64; 20] {
    static T: OnceLock<[f64; 20]> = OnceLock::new();
    T.get_or_init(|| {
        let cols = parse_columns::<1>(include_str!("../../data/codon_counts.tsv"));
        let mut out = [0.0; 20];
        for i in 0..20 {
            out[i] = cols[i][0];
        }
        out
    })
}

/// Amino-acid distance matrix after Grantham: composition, polarity and
/// volume differences combined with the published weights, scaled so the
/// mean off-diagonal distance is 100.
pub fn grantham_distance() -> &'static [[f64; 20]; 20] {
    static T: OnceLock<[[f64; 20]; 20]> = OnceLock::new();
    T.get_or_init(|| {
        let props = parse_columns::<3>(include_str!("../../data/grantham_properties.tsv"));
        const ALPHA: f64 = 1.833; // composition weight
        const BETA: f64 = 0.1018; // polarity weight
        const GAMMA: f64 = 0.000399; // volume weight
        let mut raw = [[0.0; 20]; 20];
        let mut sum = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                let dc = props[i][0] - props[j][0];
                let dp = props[i][1] - props[j][1];
                let dv = props[i][2] - props[j][2];
                raw[i][j] = (ALPHA * dc * dc + BETA * dp * dp + GAMMA * dv * dv).sqrt();
                if i < j {
                    sum += raw[i][j];
                }
            }
        }
        let scale = 100.0 / (sum / 190.0);
        let mut out = [[0.0; 20]; 20];
        for i in 0..20 {
            for j in 0..20 {
                out[i][j] = raw[i][j] * scale;
            }
        }
        out
    })
}

/// Physicochemical distance on the Sandberg z-scale space, normalized to a
/// unit maximum. Stands in for a sequence-order coupling table; fully
/// determined by the embedded z-scales.
pub fn zscale_distance() -> &'static [[f64; 20]; 20] {
    static T: OnceLock<[[f64; 20]; 20]> = OnceLock::new();
    T.get_or_init(|| {
        let z = zscales();
        let mut out = [[0.0; 20]; 20];
        let mut max = 0.0f64;
        for i in 0..20 {
            for j in 0..20 {
                let d: f64 = (0..5).map(|k| (z[i][k] - z[j][k]).powi(2)).sum::<f64>().sqrt();
                out[i][j] = d;
                max = max.max(d);
            }
        }
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v /= max;
            }
        }
        out
    })
}

/// Reduced five-group alphabet index: aliphatic, aromatic, positively
/// charged, negatively charged, uncharged polar.
pub fn group_of(aa: u8) -> usize {
    match aa {
        b'G' | b'A' | b'V' | b'L' | b'M' | b'I' => 0,
        b'F' | b'Y' | b'W' => 1,
        b'K' | b'R' | b'H' => 2,
        b'D' | b'E' => 3,
        b'S' | b'T' | b'C' | b'P' | b'N' | b'Q' => 4,
        _ => panic!("residue outside alphabet: {}", aa as char),
    }
}

pub const GROUP_NAMES: [&str; 5] = ["aliphatic", "aromatic", "positive", "negative", "uncharged"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ALPHABET;

    #[test]
    fn groups_partition_alphabet() {
        let mut counts = [0usize; 5];
        for &aa in ALPHABET.iter() {
            counts[group_of(aa)] += 1;
        }
        assert_eq!(counts, [6, 3, 3, 2, 6]);
    }

    #[test]
    fn codons_sum_to_61() {
        assert_eq!(codon_counts().iter().sum::<f64>(), 61.0);
    }

    #[test]
    fn grantham_matrix_shape() {
        let g = grantham_distance();
        let mut sum = 0.0;
        for i in 0..20 {
            assert_eq!(g[i][i], 0.0);
            for j in 0..20 {
                assert!((g[i][j] - g[j][i]).abs() < 1e-12);
                if i < j {
                    sum += g[i][j];
                }
            }
        }
        // Scaled to mean off-diagonal distance 100.
        assert!((sum / 190.0 - 100.0).abs() < 1e-9);
        // The classic extremes keep their ordering: L-I tiny, C-W large.
        let (l, i_) = (crate::aa_index(b'L').unwrap(), crate::aa_index(b'I').unwrap());
        let (c, w) = (crate::aa_index(b'C').unwrap(), crate::aa_index(b'W').unwrap());
        assert!(g[l][i_] < 10.0, "L-I = {}", g[l][i_]);
        assert!(g[c][w] > 180.0, "C-W = {}", g[c][w]);
    }

    #[test]
    fn zscale_distance_is_normalized() {
        let d = zscale_distance();
        let mut max = 0.0f64;
        for i in 0..20 {
            assert_eq!(d[i][i], 0.0);
            for j in 0..20 {
                assert!((d[i][j] - d[j][i]).abs() < 1e-15);
                max = max.max(d[i][j]);
            }
        }
        assert!((max - 1.0).abs() < 1e-15);
    }
}
