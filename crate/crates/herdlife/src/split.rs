//! Cow-level train/test splitting, stratified by farm. No cow's records
//! ever straddle the split.

use std::collections::BTreeMap;

use crate::error::{HerdError, Result};
use crate::history::CowHistory;
use crate::rng;

/// Partitions cow indices into (train, test) at `fraction` train share,
/// stratified by farm and deterministic in `seed`. Per-farm counts use
/// rounding, so each farm lands within one cow of the requested split.
pub fn split_by_cow(
    histories: &[CowHistory],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HerdError::InvalidFraction(fraction));
    }
    if histories.len() < 2 {
        return Err(HerdError::TooFewCows(histories.len()));
    }

    let mut by_farm: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, h) in histories.iter().enumerate() {
        by_farm.entry(h.farm_id.as_str()).or_default().push(i);
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (farm, mut idxs) in by_farm {
        idxs.sort_by(|&a, &b| histories[a].cow_id.cmp(&histories[b].cow_id));
        let mut farm_rng = rng::rng_for(seed, &format!("split/{farm}"));
        rng::shuffle(&mut farm_rng, &mut idxs);
        let n_train = ((idxs.len() as f64) * fraction).round() as usize;
        let n_train = n_train.min(idxs.len());
        train.extend_from_slice(&idxs[..n_train]);
        test.extend_from_slice(&idxs[n_train..]);
    }

    // Rounding can drain one side entirely on small inputs; rebalance
    // deterministically so both sides stay non-empty.
    if test.is_empty() {
        test.push(train.pop().expect("len >= 2"));
    } else if train.is_empty() {
        train.push(test.pop().expect("len >= 2"));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Convenience selector for the index lists produced by [`split_by_cow`].
pub fn select<'a>(histories: &'a [CowHistory], idxs: &[usize]) -> Vec<&'a CowHistory> {
    idxs.iter().map(|&i| &histories[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::date;
    use std::collections::BTreeSet;

    fn cows(farms: &[(&str, usize)]) -> Vec<CowHistory> {
        let mut out = Vec::new();
        for (farm, n) in farms {
            for k in 0..*n {
                out.push(CowHistory {
                    cow_id: format!("{farm}-C{k:03}"),
                    farm_id: farm.to_string(),
                    birth_date: date(2010, 1, 1),
                    culling_date: None,
                    hl_days: Some(2000),
                    hl_class: None,
                    age_at_first_calving_days: None,
                    records: Vec::new(),
                });
            }
        }
        out
    }

    #[test]
    fn ten_cows_split_eight_two_disjoint() {
        let herd = cows(&[("F1", 10)]);
        let (train, test) = split_by_cow(&herd, 0.8, 7).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        let train_ids: BTreeSet<&str> =
            train.iter().map(|&i| herd[i].cow_id.as_str()).collect();
        let test_ids: BTreeSet<&str> = test.iter().map(|&i| herd[i].cow_id.as_str()).collect();
        assert!(train_ids.is_disjoint(&test_ids));
        assert_eq!(train_ids.len() + test_ids.len(), 10);
    }

    #[test]
    fn same_seed_gives_identical_split() {
        let herd = cows(&[("F1", 13), ("F2", 9)]);
        let a = split_by_cow(&herd, 0.8, 42).unwrap();
        let b = split_by_cow(&herd, 0.8, 42).unwrap();
        assert_eq!(a, b);
        let c = split_by_cow(&herd, 0.8, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn per_farm_proportions_within_one_cow() {
        let herd = cows(&[("F1", 23), ("F2", 40), ("F3", 7), ("F4", 11)]);
        let (train, _) = split_by_cow(&herd, 0.8, 3).unwrap();
        let mut per_farm: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &train {
            *per_farm.entry(herd[i].farm_id.as_str()).or_insert(0) += 1;
        }
        for (farm, n) in [("F1", 23usize), ("F2", 40), ("F3", 7), ("F4", 11)] {
            let got = per_farm[farm] as f64;
            assert!(
                (got - 0.8 * n as f64).abs() <= 1.0,
                "farm {farm}: {got} of {n}"
            );
        }
    }

    #[test]
    fn union_covers_everything() {
        let herd = cows(&[("F1", 5), ("F2", 6)]);
        let (train, test) = split_by_cow(&herd, 0.5, 1).unwrap();
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let herd = cows(&[("F1", 1)]);
        assert!(matches!(
            split_by_cow(&herd, 0.8, 1),
            Err(HerdError::TooFewCows(1))
        ));
        let herd = cows(&[("F1", 5)]);
        assert!(matches!(
            split_by_cow(&herd, 1.0, 1),
            Err(HerdError::InvalidFraction(_))
        ));
    }

    #[test]
    fn tiny_farms_still_produce_both_sides() {
        let herd = cows(&[("F1", 1), ("F2", 1)]);
        let (train, test) = split_by_cow(&herd, 0.8, 1).unwrap();
        assert!(!train.is_empty() && !test.is_empty());
    }
}
