use std::collections::BTreeMap;

use serde::Serialize;

use super::{Corpus, CorpusError, PreferenceDataset};

/// Quality and composition summary of a preference dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_pairs: usize,
    pub avg_chosen: f64,
    pub avg_rejected: f64,
    pub per_lang_pair: BTreeMap<String, usize>,
    pub per_chosen_system: BTreeMap<String, usize>,
    pub per_rejected_system: BTreeMap<String, usize>,
}

impl DatasetStats {
    /// Share of pairs per language pair, in percent.
    pub fn lang_pair_percentages(&self) -> BTreeMap<String, f64> {
        self.per_lang_pair
            .iter()
            .map(|(k, &v)| (k.clone(), 100.0 * v as f64 / self.n_pairs as f64))
            .collect()
    }
}

/// Language pairs are looked up in `corpus` since pairs only carry segment ids.
pub fn dataset_stats(
    dataset: &PreferenceDataset,
    corpus: &Corpus,
) -> Result<DatasetStats, CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let n = dataset.len() as f64;
    let mut per_lang_pair = BTreeMap::new();
    let mut per_chosen_system = BTreeMap::new();
    let mut per_rejected_system = BTreeMap::new();
    let (mut sum_c, mut sum_r) = (0.0, 0.0);
    for p in &dataset.pairs {
        let seg = corpus
            .get(&p.segment_id)
            .ok_or_else(|| CorpusError::UnknownSegment(p.segment_id.clone()))?;
        *per_lang_pair.entry(seg.lang_pair.to_string()).or_insert(0) += 1;
        *per_chosen_system
            .entry(p.chosen.system.to_string())
            .or_insert(0) += 1;
        *per_rejected_system
            .entry(p.rejected.system.to_string())
            .or_insert(0) += 1;
        sum_c += p.chosen_score;
        sum_r += p.rejected_score;
    }
    Ok(DatasetStats {
        n_pairs: dataset.len(),
        avg_chosen: sum_c / n,
        avg_rejected: sum_r / n,
        per_lang_pair,
        per_chosen_system,
        per_rejected_system,
    })
}
