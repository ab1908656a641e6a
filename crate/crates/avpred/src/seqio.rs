//! Peptide dataset IO: FASTA parsing, label tables, stratified splits.

use crate::augment::PortableRng;
use crate::error::{Error, Result};
use crate::aa_index;
use std::collections::{BTreeMap, HashMap, HashSet};

/// Admissible sequence lengths for a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LengthBounds {
    pub min: usize,
    pub max: usize,
}

impl Default for LengthBounds {
    fn default() -> Self {
        // Short enough to admit small antiviral peptides, capped so the
        // one-hot encoding width stays bounded.
        Self { min: 5, max: 100 }
    }
}

impl LengthBounds {
    pub fn check(&self, id: &str, len: usize) -> Result<()> {
        if len < self.min || len > self.max {
            return Err(Error::Length(format!(
                "sequence `{id}` has {len} residues, outside [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// A validated peptide: identifier, residues over the 20-letter alphabet,
/// and an optional class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeptideSequence {
    id: String,
    residues: String,
    label: Option<usize>,
}

impl PeptideSequence {
    /// Validate the id (non-empty) and every residue. Length bounds are a
    /// dataset-admission concern and are checked by the parsers, not here.
    pub fn new(id: String, residues: String) -> Result<Self> {
        if id.is_empty() {
            return Err(Error::Format("sequence id must be non-empty".into()));
        }
        for b in residues.bytes() {
            if aa_index(b).is_none() {
                return Err(Error::Validation { id, ch: b as char });
            }
        }
        Ok(Self { id, residues, label: None })
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn residues(&self) -> &str {
        &self.residues
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }
}

/// An ordered, labeled collection of peptides.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub items: Vec<PeptideSequence>,
    pub class_count: usize,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    /// Build from labeled items; every label must be set and < class_count,
    /// and every class must be populated.
    pub fn new(items: Vec<PeptideSequence>, class_count: usize, class_names: Vec<String>) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Config(format!("class_count must be >= 2, got {class_count}")));
        }
        if class_names.len() != class_count {
            return Err(Error::Config(format!(
                "class_names has {} entries for {} classes",
                class_names.len(),
                class_count
            )));
        }
        let mut seen = vec![false; class_count];
        for item in &items {
            match item.label() {
                Some(l) if l < class_count => seen[l] = true,
                Some(l) => {
                    return Err(Error::Label(format!(
                        "item `{}` has label {l}, but class_count is {class_count}",
                        item.id()
                    )))
                }
                None => {
                    return Err(Error::Label(format!("item `{}` is unlabeled", item.id())))
                }
            }
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::Label(format!("class {empty} has no items")));
        }
        Ok(Self { items, class_count, class_names })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Item count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for item in &self.items {
            counts[item.label().expect("dataset items are labeled")] += 1;
        }
        counts
    }
}

/// Parse FASTA text: `>`-prefixed headers, wrapped sequence lines joined,
/// residues uppercased. The first whitespace-delimited token of a header is
/// the record id.
pub fn parse_fasta(text: &str, bounds: &LengthBounds) -> Result<Vec<PeptideSequence>> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut current: Option<(String, String)> = None;

    let flush = |current: &mut Option<(String, String)>, records: &mut Vec<PeptideSequence>| -> Result<()> {
        if let Some((id, seq)) = current.take() {
            bounds.check(&id, seq.len())?;
            records.push(PeptideSequence::new(id, seq)?);
        }
        Ok(())
    };

    for raw in text.lines() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            flush(&mut current, &mut records)?;
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(Error::Format("FASTA header with empty id".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            current = Some((id, String::new()));
        } else {
            match current.as_mut() {
                Some((_, seq)) => seq.push_str(&line.trim().to_ascii_uppercase()),
                None => return Err(Error::Format("sequence data before any FASTA header".into())),
            }
        }
    }
    flush(&mut current, &mut records)?;
    Ok(records)
}

/// Render records as FASTA, one line per sequence.
pub fn serialize_fasta(records: &[PeptideSequence]) -> String {
    let mut out = String::new();
    for r in records {
        out.push('>');
        out.push_str(r.id());
        out.push('\n');
        out.push_str(r.residues());
        out.push('\n');
    }
    out
}

/// Attach labels from a two-column `id,label` table. Every dataset item
/// must receive a label and every table id must match an item.
pub fn load_labels(table: &str, items: Vec<PeptideSequence>) -> Result<LabeledDataset> {
    let mut labels: HashMap<String, usize> = HashMap::new();
    for (lineno, raw) in table.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line.split_once(',').ok_or_else(|| {
            Error::Label(format!("line {}: expected `id,label`, got `{line}`", lineno + 1))
        })?;
        let label: usize = label.trim().parse().map_err(|_| {
            Error::Label(format!("line {}: bad label `{}` for id `{}`", lineno + 1, label.trim(), id))
        })?;
        if labels.insert(id.trim().to_string(), label).is_some() {
            return Err(Error::Label(format!("duplicate label row for id `{}`", id.trim())));
        }
    }

    let known: HashSet<&str> = items.iter().map(|i| i.id()).collect();
    for id in labels.keys() {
        if !known.contains(id.as_str()) {
            return Err(Error::Label(format!("unknown id `{id}`")));
        }
    }
    let missing: Vec<&str> =
        items.iter().map(|i| i.id()).filter(|id| !labels.contains_key(*id)).collect();
    if !missing.is_empty() {
        return Err(Error::Label(format!("items without labels: {}", missing.join(", "))));
    }

    let labeled: Vec<PeptideSequence> = items
        .into_iter()
        .map(|item| {
            let l = labels[item.id()];
            item.with_label(Some(l))
        })
        .collect();
    let class_count = labeled.iter().filter_map(|i| i.label()).max().unwrap_or(0) + 1;
    let class_count = class_count.max(2);
    let class_names = (0..class_count).map(|c| format!("class_{c}")).collect();
    LabeledDataset::new(labeled, class_count, class_names)
}

/// Deterministic per-class split. Class `c` keeps `round(ratio * n_c)`
/// items (clamped so both sides stay non-empty) in the train side after a
/// seeded shuffle; classes are processed in ascending label order on one
/// RNG stream.
pub fn stratified_split(
    ds: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0,1), got {ratio}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in ds.items.iter().enumerate() {
        by_class.entry(item.label().expect("labeled")).or_default().push(i);
    }
    for (c, idxs) in &by_class {
        if idxs.len() < 2 {
            return Err(Error::Stratify(format!("class {c} has {} item(s), need >= 2", idxs.len())));
        }
    }

    let mut rng = PortableRng::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (_, mut idxs) in by_class {
        rng.shuffle(&mut idxs);
        let n = idxs.len();
        let take = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        train_idx.extend_from_slice(&idxs[..take]);
        test_idx.extend_from_slice(&idxs[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |idxs: &[usize]| -> Vec<PeptideSequence> {
        idxs.iter().map(|&i| ds.items[i].clone()).collect()
    };
    let train = LabeledDataset::new(pick(&train_idx), ds.class_count, ds.class_names.clone())?;
    let test = LabeledDataset::new(pick(&test_idx), ds.class_count, ds.class_names.clone())?;
    Ok((train, test))
}
