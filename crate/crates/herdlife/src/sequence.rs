//! Fixed-length model inputs: latest-L truncation, zero pre-padding,
//! and validity masks. Valid rows always form a contiguous suffix so
//! the most recent record sits in the final position.

use serde::Serialize;

use crate::error::{HerdError, Result};
use crate::features::FEATURE_COUNT;
use crate::history::{CowHistory, HlClass};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub cow_id: String,
    pub farm_id: String,
    /// L: number of rows after truncation/padding.
    pub seq_len: usize,
    /// L x F feature matrix, row-major; padded rows are all-zero.
    pub features: Vec<f64>,
    /// Length-L validity row: 1 marks a real record.
    pub mask: Vec<f64>,
    pub hl_days: Option<f64>,
    pub hl_class: Option<HlClass>,
}

impl SequenceSample {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0.0).count()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]
    }
}

/// Keeps the L most recent records (dropping the oldest beyond L) and
/// pre-pads shorter histories with zero rows.
pub fn build_sequence(history: &CowHistory, l: usize) -> Result<SequenceSample> {
    if l == 0 {
        return Err(HerdError::ZeroSequenceLength);
    }
    if history.records.is_empty() {
        return Err(HerdError::EmptyHistory(history.cow_id.clone()));
    }
    let n = history.records.len();
    let keep = n.min(l);
    let pad = l - keep;

    let mut features = vec![0.0; l * FEATURE_COUNT];
    let mut mask = vec![0.0; l];
    for (slot, rec) in history.records[n - keep..].iter().enumerate() {
        let row = pad + slot;
        features[row * FEATURE_COUNT..(row + 1) * FEATURE_COUNT]
            .copy_from_slice(&rec.features.dense());
        mask[row] = 1.0;
    }
    Ok(SequenceSample {
        cow_id: history.cow_id.clone(),
        farm_id: history.farm_id.clone(),
        seq_len: l,
        features,
        mask,
        hl_days: history.hl_days.map(|d| d as f64),
        hl_class: history.hl_class,
    })
}

pub fn build_sequences(histories: &[&CowHistory], l: usize) -> Result<Vec<SequenceSample>> {
    histories.iter().map(|h| build_sequence(h, l)).collect()
}

/// Restricts a sample to its k most recent valid rows, re-padded to the
/// same length; used to evaluate a trained model on shorter histories.
pub fn latest_k_view(sample: &SequenceSample, k: usize) -> Result<SequenceSample> {
    let l = sample.seq_len;
    if k == 0 || k > l {
        return Err(HerdError::KOutOfRange { k, l });
    }
    let valid = sample.valid_count();
    let keep = valid.min(k);
    let pad = l - keep;

    let mut out = sample.clone();
    out.features = vec![0.0; l * FEATURE_COUNT];
    out.mask = vec![0.0; l];
    for slot in 0..keep {
        let src = l - keep + slot;
        let dst = pad + slot;
        out.features[dst * FEATURE_COUNT..(dst + 1) * FEATURE_COUNT]
            .copy_from_slice(sample.row(src));
        out.mask[dst] = 1.0;
    }
    Ok(out)
}

/// One training batch in tensor layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub seq_len: usize,
    /// B x L x F, flattened row-major.
    pub features: Vec<f64>,
    /// B x L.
    pub masks: Vec<f64>,
    pub hl_days: Vec<Option<f64>>,
    pub hl_classes: Vec<Option<HlClass>>,
    pub cow_ids: Vec<String>,
    pub farm_ids: Vec<String>,
}

/// Splits samples into batches, optionally shuffled (seed-determinist);
/// the final partial batch is emitted.
pub fn batches(
    samples: &[SequenceSample],
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<Vec<Batch>> {
    if samples.is_empty() {
        return Err(HerdError::EmptySamples);
    }
    if batch_size == 0 {
        return Err(HerdError::ZeroBatchSize);
    }
    let l = samples[0].seq_len;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if shuffle {
        rng::shuffle(&mut rng::rng_for(seed, "batch"), &mut order);
    }

    let mut out = Vec::new();
    for chunk in order.chunks(batch_size) {
        let mut batch = Batch {
            size: chunk.len(),
            seq_len: l,
            features: Vec::with_capacity(chunk.len() * l * FEATURE_COUNT),
            masks: Vec::with_capacity(chunk.len() * l),
            hl_days: Vec::with_capacity(chunk.len()),
            hl_classes: Vec::with_capacity(chunk.len()),
            cow_ids: Vec::with_capacity(chunk.len()),
            farm_ids: Vec::with_capacity(chunk.len()),
        };
        for &i in chunk {
            let s = &samples[i];
            batch.features.extend_from_slice(&s.features);
            batch.masks.extend_from_slice(&s.mask);
            batch.hl_days.push(s.hl_days);
            batch.hl_classes.push(s.hl_class);
            batch.cow_ids.push(s.cow_id.clone());
            batch.farm_ids.push(s.farm_id.clone());
        }
        out.push(batch);
    }
    Ok(out)
}

/// Record-count distribution summary over cow histories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordCountSummary {
    pub cows: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub fraction_over_5: f64,
}

pub fn record_count_summary(histories: &[CowHistory]) -> RecordCountSummary {
    let counts: Vec<usize> = histories.iter().map(|h| h.record_count()).collect();
    if counts.is_empty() {
        return RecordCountSummary {
            cows: 0,
            min: 0,
            max: 0,
            mean: 0.0,
            fraction_over_5: 0.0,
        };
    }
    let total: usize = counts.iter().sum();
    RecordCountSummary {
        cows: counts.len(),
        min: *counts.iter().min().unwrap(),
        max: *counts.iter().max().unwrap(),
        mean: total as f64 / counts.len() as f64,
        fraction_over_5: counts.iter().filter(|&&c| c > 5).count() as f64 / counts.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Feature, FeatureVector};
    use crate::history::{date, EventRecord, SourceSet};

    fn history(n: usize) -> CowHistory {
        let records = (0..n)
            .map(|k| {
                let mut fv = FeatureVector::default();
                fv.set(Feature::CurrentLifeDays, Some(100.0 + k as f64));
                fv.set(Feature::Scc, Some(50.0 + k as f64));
                EventRecord {
                    date: date(2011, 1, 1) + chrono::Duration::days(k as i64),
                    sources: SourceSet::default(),
                    features: fv,
                }
            })
            .collect();
        CowHistory {
            cow_id: "C1".into(),
            farm_id: "F1".into(),
            birth_date: date(2010, 1, 1),
            culling_date: None,
            hl_days: Some(2500),
            hl_class: Some(HlClass::Medium),
            age_at_first_calving_days: None,
            records,
        }
    }

    #[test]
    fn short_history_is_pre_padded() {
        let sample = build_sequence(&history(3), 10).unwrap();
        for row in 0..7 {
            assert_eq!(sample.mask[row], 0.0);
            assert!(sample.row(row).iter().all(|&v| v == 0.0));
        }
        for (k, row) in (7..10).enumerate() {
            assert_eq!(sample.mask[row], 1.0);
            assert_eq!(
                sample.row(row)[Feature::CurrentLifeDays.index()],
                100.0 + k as f64
            );
        }
    }

    #[test]
    fn long_history_keeps_the_latest_records() {
        let sample = build_sequence(&history(200), 10).unwrap();
        assert_eq!(sample.valid_count(), 10);
        // The 10 latest by date are records 190..200, in order.
        for row in 0..10 {
            assert_eq!(
                sample.row(row)[Feature::CurrentLifeDays.index()],
                100.0 + (190 + row) as f64
            );
        }
    }

    #[test]
    fn exact_length_history_needs_no_padding() {
        let sample = build_sequence(&history(10), 10).unwrap();
        assert_eq!(sample.valid_count(), 10);
        assert!(sample.mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(matches!(
            build_sequence(&history(0), 10),
            Err(HerdError::EmptyHistory(_))
        ));
    }

    #[test]
    fn latest_k_at_full_length_is_identity() {
        let sample = build_sequence(&history(7), 10).unwrap();
        assert_eq!(latest_k_view(&sample, 10).unwrap(), sample);
    }

    #[test]
    fn latest_5_of_a_full_sample_re_pads() {
        let sample = build_sequence(&history(30), 10).unwrap();
        let view = latest_k_view(&sample, 5).unwrap();
        assert_eq!(view.valid_count(), 5);
        for row in 0..5 {
            assert_eq!(view.mask[row], 0.0);
            assert!(view.row(row).iter().all(|&v| v == 0.0));
        }
        // last 5 rows of the view equal the last 5 rows of the sample
        for row in 5..10 {
            assert_eq!(view.row(row), sample.row(row));
        }
    }

    #[test]
    fn latest_1_keeps_only_the_most_recent_record() {
        let sample = build_sequence(&history(8), 10).unwrap();
        let view = latest_k_view(&sample, 1).unwrap();
        assert_eq!(view.valid_count(), 1);
        assert_eq!(view.row(9), sample.row(9));
    }

    #[test]
    fn k_out_of_range_is_an_error() {
        let sample = build_sequence(&history(3), 10).unwrap();
        assert!(matches!(
            latest_k_view(&sample, 0),
            Err(HerdError::KOutOfRange { .. })
        ));
        assert!(matches!(
            latest_k_view(&sample, 11),
            Err(HerdError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn batching_emits_final_partial_batch() {
        let samples: Vec<SequenceSample> =
            (0..10).map(|_| build_sequence(&history(3), 5).unwrap()).collect();
        let got = batches(&samples, 4, 1, true).unwrap();
        assert_eq!(got.iter().map(|b| b.size).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn unshuffled_batches_preserve_order() {
        let mut samples = Vec::new();
        for i in 0..6 {
            let mut s = build_sequence(&history(3), 5).unwrap();
            s.cow_id = format!("C{i}");
            samples.push(s);
        }
        let got = batches(&samples, 4, 9, false).unwrap();
        assert_eq!(got[0].cow_ids, vec!["C0", "C1", "C2", "C3"]);
        assert_eq!(got[1].cow_ids, vec!["C4", "C5"]);
    }

    #[test]
    fn shuffled_batches_are_seed_deterministic() {
        let samples: Vec<SequenceSample> =
            (0..16).map(|_| build_sequence(&history(4), 5).unwrap()).collect();
        let a = batches(&samples, 4, 7, true).unwrap();
        let b = batches(&samples, 4, 7, true).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.features, y.features);
        }
    }

    #[test]
    fn record_count_summary_matches_hand_counts() {
        let histories: Vec<CowHistory> = [1usize, 3, 6, 8, 40].iter().map(|&n| history(n)).collect();
        let s = record_count_summary(&histories);
        assert_eq!(s.cows, 5);
        assert_eq!(s.min, 1);
        assert_eq!(s.max, 40);
        assert!((s.mean - 11.6).abs() < 1e-12);
        assert!((s.fraction_over_5 - 0.6).abs() < 1e-12);
    }
}
