//! The data processing pipeline: merge the seven tables on national cow
//! ID, project onto the model feature set, binarize per-date events,
//! compute herd-life targets, and cleanse.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{HerdError, Result};
use crate::features::{Feature, FeatureVector};
use crate::history::{
    compute_hl_days, hl_to_class, ClassThresholds, CowHistory, EventRecord, HlClass, SourceSet,
};
use crate::tables::{LoadReport, RawTables, DATE_FORMAT};

/// Raw per-date field values collected from whichever tables have rows
/// on that date. Lactation comes from the lactation table first, the
/// calving-ease table second.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergedRecord {
    pub sources: SourceSet,
    pub lactation: Option<f64>,
    pub milk_305: Option<f64>,
    pub lactose_yield: Option<f64>,
    pub pi_fat: Option<f64>,
    pub num_pi_tests: Option<f64>,
    pub milk_fat: Option<f64>,
    pub lactose_percentage: Option<f64>,
    pub scc: Option<f64>,
    pub days_pregnant: Option<f64>,
}

/// One cow after the merge step, before feature selection.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedHistory {
    pub cow_id: String,
    pub farm_id: String,
    pub birth_date: NaiveDate,
    pub culling_date: Option<NaiveDate>,
    pub first_calving_date: Option<NaiveDate>,
    pub mammary_system: Option<f64>,
    pub hwi: Option<f64>,
    pub abv_mastitis_resistance: Option<f64>,
    pub records: Vec<(NaiveDate, MergedRecord)>,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct MergeReport {
    pub cows_in_pedigree: usize,
    pub cows_merged: usize,
    pub cows_missing_birth_date: usize,
    pub cows_culling_before_birth: usize,
    pub duplicate_pedigree_rows: usize,
    pub orphan_rows: usize,
    pub records_outside_life: usize,
    pub records_merged: usize,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct CleansingReport {
    pub cows_in: usize,
    pub cows_kept: usize,
    pub cows_removed_hl_low: usize,
    pub cows_removed_hl_high: usize,
    pub cows_missing_target: usize,
    pub records_total: usize,
    pub values_rejected: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct PipelineReport {
    pub load: LoadReport,
    pub merge: MergeReport,
    pub cleansing: CleansingReport,
}

/// Herd-life outlier bounds: cows outside [100, 5000] days are removed
/// whole.
pub const HL_KEEP_MIN: i64 = 100;
pub const HL_KEEP_MAX: i64 = 5000;

struct CowSkeleton {
    farm_id: String,
    birth: NaiveDate,
    culling: Option<NaiveDate>,
}

type RecordDrafts = BTreeMap<String, BTreeMap<NaiveDate, MergedRecord>>;

/// Looks up the draft record for a (cow, date) key, rejecting rows for
/// unknown cows or outside the cow's life window.
fn draft<'a>(
    cows: &BTreeMap<String, CowSkeleton>,
    records: &'a mut RecordDrafts,
    report: &mut MergeReport,
    cow_id: &str,
    date: NaiveDate,
) -> Option<&'a mut MergedRecord> {
    let skel = match cows.get(cow_id) {
        Some(s) => s,
        None => {
            report.orphan_rows += 1;
            return None;
        }
    };
    if date < skel.birth || skel.culling.is_some_and(|c| date > c) {
        report.records_outside_life += 1;
        return None;
    }
    Some(
        records
            .entry(cow_id.to_string())
            .or_default()
            .entry(date)
            .or_default(),
    )
}

/// Assembles one history per pedigree cow, aligning every event table's
/// rows by (cow, date). Cows with no birth date are excluded and counted;
/// rows for unknown cows or outside a cow's life window are counted as
/// well.
pub fn merge_on_nid(tables: &RawTables) -> (Vec<MergedHistory>, MergeReport) {
    let mut report = MergeReport::default();

    let mut cows: BTreeMap<String, CowSkeleton> = BTreeMap::new();
    for row in &tables.pedigree {
        report.cows_in_pedigree += 1;
        if cows.contains_key(&row.cow_id) {
            report.duplicate_pedigree_rows += 1;
            continue;
        }
        let Some(birth) = row.birth_date else {
            report.cows_missing_birth_date += 1;
            continue;
        };
        if let Some(term) = row.termination_date {
            if term < birth {
                report.cows_culling_before_birth += 1;
                continue;
            }
        }
        cows.insert(
            row.cow_id.clone(),
            CowSkeleton {
                farm_id: row.herd_id.clone(),
                birth,
                culling: row.termination_date,
            },
        );
    }

    let mut records: RecordDrafts = BTreeMap::new();
    let mut first_calving: BTreeMap<String, NaiveDate> = BTreeMap::new();
    let mut abv_values: BTreeMap<String, (Option<f64>, Option<f64>, Option<f64>)> =
        BTreeMap::new();

    for row in &tables.test_day {
        if let Some(rec) = draft(&cows, &mut records, &mut report, &row.cow_id, row.test_date) {
            rec.sources.test_day = true;
            if rec.milk_fat.is_none() {
                rec.milk_fat = row.fat_percentage;
            }
            if rec.lactose_percentage.is_none() {
                rec.lactose_percentage = row.lactose_percentage;
            }
            if rec.scc.is_none() {
                rec.scc = row.somatic_cell_count;
            }
        }
    }
    for row in &tables.lactation {
        if let Some(rec) = draft(&cows, &mut records, &mut report, &row.cow_id, row.calving_date) {
            rec.sources.lactation = true;
            if rec.lactation.is_none() {
                rec.lactation = row.parity.map(f64::from);
            }
            if rec.milk_305.is_none() {
                rec.milk_305 = row.milk_305;
            }
            if rec.lactose_yield.is_none() {
                rec.lactose_yield = row.lactose_yield;
            }
            if rec.pi_fat.is_none() {
                rec.pi_fat = row.pi_fat;
            }
            if rec.num_pi_tests.is_none() {
                rec.num_pi_tests = row.num_pi_tests;
            }
            first_calving
                .entry(row.cow_id.clone())
                .and_modify(|d| *d = (*d).min(row.calving_date))
                .or_insert(row.calving_date);
        }
    }
    for row in &tables.pregnancy {
        if let Some(rec) = draft(&cows, &mut records, &mut report, &row.cow_id, row.date) {
            rec.sources.pregnancy = true;
            if rec.days_pregnant.is_none() {
                rec.days_pregnant = row.result;
            }
        }
    }
    for row in &tables.calving {
        if let Some(rec) = draft(&cows, &mut records, &mut report, &row.cow_id, row.calving_date) {
            rec.sources.calving = true;
            // Lactation-table parity takes precedence on shared dates.
            if rec.lactation.is_none() && !rec.sources.lactation {
                rec.lactation = row.parity.map(f64::from);
            }
            first_calving
                .entry(row.cow_id.clone())
                .and_modify(|d| *d = (*d).min(row.calving_date))
                .or_insert(row.calving_date);
        }
    }
    for row in &tables.health {
        if let Some(rec) = draft(&cows, &mut records, &mut report, &row.cow_id, row.date) {
            rec.sources.health = true;
        }
    }
    for row in &tables.abv {
        if !cows.contains_key(&row.cow_id) {
            report.orphan_rows += 1;
            continue;
        }
        abv_values.entry(row.cow_id.clone()).or_insert((
            row.mammary_system,
            row.hwi,
            row.abv_mastitis_resistance,
        ));
    }

    let mut histories = Vec::with_capacity(cows.len());
    for (cow_id, skel) in cows {
        let cow_records: Vec<(NaiveDate, MergedRecord)> = records
            .remove(&cow_id)
            .map(|m| m.into_iter().collect())
            .unwrap_or_default();
        report.records_merged += cow_records.len();
        let (mammary, hwi, abv) = abv_values
            .get(&cow_id)
            .copied()
            .unwrap_or((None, None, None));
        histories.push(MergedHistory {
            first_calving_date: first_calving.get(&cow_id).copied(),
            cow_id,
            farm_id: skel.farm_id,
            birth_date: skel.birth,
            culling_date: skel.culling,
            mammary_system: mammary,
            hwi,
            abv_mastitis_resistance: abv,
            records: cow_records,
        });
    }
    report.cows_merged = histories.len();
    (histories, report)
}

/// Projects one merged record onto the fixed 16-feature vector. ID
/// fields never appear; absent values stay missing for downstream
/// imputation. Event flags are left unset here and filled by
/// [`binarize_events`].
pub fn select_features(
    record: &MergedRecord,
    date: NaiveDate,
    history: &MergedHistory,
) -> FeatureVector {
    let mut fv = FeatureVector::default();
    fv.set(
        Feature::CurrentLifeDays,
        Some((date - history.birth_date).num_days() as f64),
    );
    fv.set(Feature::Lactation, record.lactation);
    fv.set(Feature::Milk305, record.milk_305);
    fv.set(Feature::LactoseYield, record.lactose_yield);
    fv.set(Feature::PiFat, record.pi_fat);
    fv.set(Feature::NumPiTests, record.num_pi_tests);
    fv.set(Feature::MilkFat, record.milk_fat);
    fv.set(Feature::LactosePercentage, record.lactose_percentage);
    fv.set(Feature::Scc, record.scc);
    fv.set(Feature::DaysPregnant, record.days_pregnant);
    fv.set(Feature::MammarySystem, history.mammary_system);
    fv.set(Feature::Hwi, history.hwi);
    fv.set(Feature::AbvMastitisResistance, history.abv_mastitis_resistance);
    fv
}

/// Converts merged histories to feature-space cow histories (targets
/// not yet assigned).
pub fn to_cow_histories(merged: Vec<MergedHistory>) -> Vec<CowHistory> {
    merged
        .into_iter()
        .map(|mh| {
            let records = mh
                .records
                .iter()
                .map(|(date, rec)| EventRecord {
                    date: *date,
                    sources: rec.sources,
                    features: select_features(rec, *date, &mh),
                })
                .collect();
            CowHistory {
                age_at_first_calving_days: mh
                    .first_calving_date
                    .map(|d| (d - mh.birth_date).num_days()),
                cow_id: mh.cow_id,
                farm_id: mh.farm_id,
                birth_date: mh.birth_date,
                culling_date: mh.culling_date,
                hl_days: None,
                hl_class: None,
                records,
            }
        })
        .collect()
}

/// Sets the three per-date event flags: tested iff a test-day row exists
/// on the date, bred iff a pregnancy-test row exists, treated iff a
/// health row exists.
pub fn binarize_events(history: &mut CowHistory) {
    for rec in &mut history.records {
        let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
        rec.features.set(Feature::TestedFlag, flag(rec.sources.test_day));
        rec.features.set(Feature::BredFlag, flag(rec.sources.pregnancy));
        rec.features.set(Feature::TreatedFlag, flag(rec.sources.health));
    }
}

/// Computes herd-life targets for cows with a culling date.
pub fn assign_targets(history: &mut CowHistory, thresholds: ClassThresholds) -> Result<()> {
    if let Some(culling) = history.culling_date {
        let hl = compute_hl_days(history.birth_date, culling)?;
        history.hl_days = Some(hl);
        history.hl_class = Some(hl_to_class(hl as f64, thresholds)?);
    }
    Ok(())
}

/// Drops herd-life outliers whole and rejects out-of-bounds numeric
/// values as missing (never clamps). Cows without targets are kept for
/// prediction but counted.
pub fn clean(histories: Vec<CowHistory>) -> (Vec<CowHistory>, CleansingReport) {
    let mut report = CleansingReport {
        cows_in: histories.len(),
        ..CleansingReport::default()
    };
    let mut kept = Vec::with_capacity(histories.len());
    for mut h in histories {
        match h.hl_days {
            Some(hl) if hl < HL_KEEP_MIN => {
                report.cows_removed_hl_low += 1;
                continue;
            }
            Some(hl) if hl > HL_KEEP_MAX => {
                report.cows_removed_hl_high += 1;
                continue;
            }
            None => report.cows_missing_target += 1,
            _ => {}
        }
        for rec in &mut h.records {
            report.records_total += 1;
            for feature in Feature::ALL {
                let Some((min, max)) = feature.bounds() else {
                    continue;
                };
                if let Some(v) = rec.features.get(feature) {
                    if v < min || v > max {
                        rec.features.set(feature, None);
                        *report
                            .values_rejected
                            .entry(feature.name().to_string())
                            .or_insert(0) += 1;
                    }
                }
            }
        }
        kept.push(h);
    }
    report.cows_kept = kept.len();
    (kept, report)
}

/// Full pipeline over already-loaded tables: merge, select, binarize,
/// targets, cleanse. Pure in its inputs: identical tables produce
/// identical histories.
pub fn process_tables(
    tables: &RawTables,
    thresholds: ClassThresholds,
) -> Result<(Vec<CowHistory>, MergeReport, CleansingReport)> {
    let (merged, merge_report) = merge_on_nid(tables);
    let mut histories = to_cow_histories(merged);
    for h in &mut histories {
        binarize_events(h);
        assign_targets(h, thresholds)?;
    }
    let (histories, cleansing) = clean(histories);
    Ok((histories, merge_report, cleansing))
}

/// Loads the seven CSVs from `dir` and runs the full pipeline.
pub fn ingest_dir(
    dir: &Path,
    thresholds: ClassThresholds,
) -> Result<(Vec<CowHistory>, PipelineReport)> {
    let (tables, load) = RawTables::load_dir(dir)?;
    let (histories, merge, cleansing) = process_tables(&tables, thresholds)?;
    Ok((
        histories,
        PipelineReport {
            load,
            merge,
            cleansing,
        },
    ))
}

// ---- processed-history CSV dump ----

fn processed_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "cow_id",
        "farm_id",
        "birth_date",
        "culling_date",
        "hl_days",
        "hl_class",
        "age_at_first_calving_days",
        "record_date",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(Feature::ALL.iter().map(|f| f.name().to_string()));
    h
}

/// Writes cleaned histories as one CSV row per (cow, record); cows with
/// no records still get a cow-level row with an empty record date.
pub fn write_processed_csv(path: &Path, histories: &[CowHistory]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HerdError::csv(path, e))?;
    w.write_record(processed_header())
        .map_err(|e| HerdError::csv(path, e))?;
    for h in histories {
        let cow_fields = |record_date: Option<NaiveDate>| -> Vec<String> {
            vec![
                h.cow_id.clone(),
                h.farm_id.clone(),
                h.birth_date.format(DATE_FORMAT).to_string(),
                h.culling_date
                    .map(|d| d.format(DATE_FORMAT).to_string())
                    .unwrap_or_default(),
                h.hl_days.map(|d| d.to_string()).unwrap_or_default(),
                h.hl_class.map(|c| c.name().to_string()).unwrap_or_default(),
                h.age_at_first_calving_days
                    .map(|d| d.to_string())
                    .unwrap_or_default(),
                record_date
                    .map(|d| d.format(DATE_FORMAT).to_string())
                    .unwrap_or_default(),
            ]
        };
        if h.records.is_empty() {
            let mut row = cow_fields(None);
            row.extend(std::iter::repeat_n(String::new(), Feature::ALL.len()));
            w.write_record(&row).map_err(|e| HerdError::csv(path, e))?;
            continue;
        }
        for rec in &h.records {
            let mut row = cow_fields(Some(rec.date));
            for f in Feature::ALL {
                row.push(
                    rec.features
                        .get(f)
                        .map(|v| format!("{v}"))
                        .unwrap_or_default(),
                );
            }
            w.write_record(&row).map_err(|e| HerdError::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| HerdError::io(path, e))?;
    Ok(())
}

/// Reads a processed-history CSV back into cow histories.
pub fn read_processed_csv(path: &Path) -> Result<Vec<CowHistory>> {
    if !path.exists() {
        return Err(HerdError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| HerdError::csv(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| HerdError::csv(path, e))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if headers != processed_header() {
        return Err(HerdError::HeaderMismatch {
            path: path.to_path_buf(),
            table: "processed",
            expected: processed_header(),
            found: headers,
        });
    }

    let mut cows: BTreeMap<String, CowHistory> = BTreeMap::new();
    for record in reader.records() {
        let rec = record.map_err(|e| HerdError::csv(path, e))?;
        let get = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let cow_id = get(0);
        let parse_date = |s: &str| NaiveDate::parse_from_str(s, DATE_FORMAT).ok();
        let entry = cows.entry(cow_id.clone()).or_insert_with(|| CowHistory {
            cow_id,
            farm_id: get(1),
            birth_date: parse_date(&get(2)).unwrap_or_default(),
            culling_date: parse_date(&get(3)),
            hl_days: get(4).parse::<i64>().ok(),
            hl_class: match get(5).as_str() {
                "low" => Some(HlClass::Low),
                "medium" => Some(HlClass::Medium),
                "high" => Some(HlClass::High),
                _ => None,
            },
            age_at_first_calving_days: get(6).parse::<i64>().ok(),
            records: Vec::new(),
        });
        let Some(date) = parse_date(&get(7)) else {
            continue;
        };
        let mut features = FeatureVector::default();
        for (j, f) in Feature::ALL.iter().enumerate() {
            features.set(*f, get(8 + j).parse::<f64>().ok());
        }
        let sources = SourceSet {
            test_day: features.get(Feature::TestedFlag) == Some(1.0),
            pregnancy: features.get(Feature::BredFlag) == Some(1.0),
            health: features.get(Feature::TreatedFlag) == Some(1.0),
            ..SourceSet::default()
        };
        entry.records.push(EventRecord {
            date,
            sources,
            features,
        });
    }
    let mut histories: Vec<CowHistory> = cows.into_values().collect();
    for h in &mut histories {
        h.records.sort_by_key(|r| r.date);
    }
    Ok(histories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::date;
    use crate::tables::{HealthRow, PedigreeRow, TestDayRow};

    fn pedigree(cow: &str, farm: &str, birth: NaiveDate, term: Option<NaiveDate>) -> PedigreeRow {
        PedigreeRow {
            cow_id: cow.into(),
            herd_id: farm.into(),
            within_herd_id: "W1".into(),
            birth_date: Some(birth),
            sire_id: "S1".into(),
            dam_id: "D1".into(),
            termination_code: "T".into(),
            termination_date: term,
        }
    }

    fn test_day(cow: &str, d: NaiveDate, scc: f64) -> TestDayRow {
        TestDayRow {
            cow_id: cow.into(),
            herd_id: "F1".into(),
            within_herd_id: "W1".into(),
            test_date: d,
            fat_percentage: Some(4.1),
            protein_percentage: Some(3.3),
            lactose_percentage: Some(4.5),
            somatic_cell_count: Some(scc),
            milk_yield: Some(22.0),
            calving_date: None,
        }
    }

    fn health(cow: &str, d: NaiveDate) -> HealthRow {
        HealthRow {
            cow_id: cow.into(),
            herd_id: "F1".into(),
            date: d,
            health_event_code: "HE".into(),
            health_treatment_code: "TR".into(),
            anatomical_position: "X".into(),
        }
    }

    fn base_tables() -> RawTables {
        RawTables {
            pedigree: vec![pedigree(
                "C1",
                "F1",
                date(2010, 1, 1),
                Some(date(2017, 1, 1)),
            )],
            ..RawTables::default()
        }
    }

    #[test]
    fn pedigree_only_cow_has_empty_history() {
        let (merged, report) = merge_on_nid(&base_tables());
        assert_eq!(merged.len(), 1);
        assert!(merged[0].records.is_empty());
        assert_eq!(report.cows_merged, 1);
    }

    #[test]
    fn distinct_dates_produce_distinct_ordered_records() {
        let mut tables = base_tables();
        tables.test_day = vec![
            test_day("C1", date(2012, 5, 1), 100.0),
            test_day("C1", date(2011, 3, 1), 90.0),
            test_day("C1", date(2013, 7, 1), 110.0),
        ];
        tables.health = vec![health("C1", date(2012, 9, 9))];
        let (merged, _) = merge_on_nid(&tables);
        assert_eq!(merged[0].records.len(), 4);
        let dates: Vec<NaiveDate> = merged[0].records.iter().map(|(d, _)| *d).collect();
        let mut sorted = dates.clone();
        sorted.sort();
        assert_eq!(dates, sorted);
    }

    #[test]
    fn same_date_rows_merge_into_one_record() {
        let mut tables = base_tables();
        tables.test_day = vec![test_day("C1", date(2012, 5, 1), 100.0)];
        tables.health = vec![health("C1", date(2012, 5, 1))];
        let (merged, _) = merge_on_nid(&tables);
        assert_eq!(merged[0].records.len(), 1);
        let rec = &merged[0].records[0].1;
        assert!(rec.sources.test_day && rec.sources.health && !rec.sources.pregnancy);
    }

    #[test]
    fn cow_without_birth_date_is_excluded_and_counted() {
        let mut tables = base_tables();
        tables.pedigree.push(PedigreeRow {
            birth_date: None,
            ..pedigree("C2", "F1", date(2010, 1, 1), None)
        });
        let (merged, report) = merge_on_nid(&tables);
        assert_eq!(merged.len(), 1);
        assert_eq!(report.cows_missing_birth_date, 1);
    }

    #[test]
    fn rows_outside_life_window_are_counted() {
        let mut tables = base_tables();
        tables.test_day = vec![
            test_day("C1", date(2009, 1, 1), 100.0), // before birth
            test_day("C1", date(2018, 1, 1), 100.0), // after culling
            test_day("C1", date(2012, 1, 1), 100.0),
        ];
        let (merged, report) = merge_on_nid(&tables);
        assert_eq!(merged[0].records.len(), 1);
        assert_eq!(report.records_outside_life, 2);
    }

    #[test]
    fn binarize_sets_flags_from_sources() {
        let mut tables = base_tables();
        tables.test_day = vec![test_day("C1", date(2012, 5, 1), 100.0)];
        tables.health = vec![health("C1", date(2012, 5, 1))];
        let (merged, _) = merge_on_nid(&tables);
        let mut histories = to_cow_histories(merged);
        binarize_events(&mut histories[0]);
        let f = &histories[0].records[0].features;
        assert_eq!(f.get(Feature::TestedFlag), Some(1.0));
        assert_eq!(f.get(Feature::BredFlag), Some(0.0));
        assert_eq!(f.get(Feature::TreatedFlag), Some(1.0));
    }

    #[test]
    fn flags_default_to_zero_without_event_tables() {
        let mut tables = base_tables();
        tables.lactation = vec![crate::tables::LactationRow {
            milk_yield: None,
            fat_yield: None,
            total_solids_305: None,
            milk_305: Some(6000.0),
            fat_305: None,
            protein_305: None,
            protein_yield: None,
            lactose_yield: Some(300.0),
            solids_yield: None,
            pi_milk: None,
            pi_fat: Some(90.0),
            pi_protein: None,
            custom_pi: None,
            cow_id: "C1".into(),
            herd_id: "F1".into(),
            within_herd_id: "W1".into(),
            calving_date: date(2012, 2, 2),
            calving_code: "N".into(),
            parity: Some(2),
            termination_date: None,
            termination_code: String::new(),
            num_pi_tests: Some(6.0),
            lactose_305: None,
        }];
        let (merged, _) = merge_on_nid(&tables);
        let mut histories = to_cow_histories(merged);
        binarize_events(&mut histories[0]);
        let f = &histories[0].records[0].features;
        assert_eq!(f.get(Feature::TestedFlag), Some(0.0));
        assert_eq!(f.get(Feature::BredFlag), Some(0.0));
        assert_eq!(f.get(Feature::TreatedFlag), Some(0.0));
        assert_eq!(f.get(Feature::Lactation), Some(2.0));
        assert_eq!(f.get(Feature::Milk305), Some(6000.0));
    }

    #[test]
    fn current_life_days_is_computed_per_record() {
        let mut tables = base_tables();
        tables.test_day = vec![test_day("C1", date(2010, 1, 31), 100.0)];
        let (merged, _) = merge_on_nid(&tables);
        let histories = to_cow_histories(merged);
        assert_eq!(
            histories[0].records[0].features.get(Feature::CurrentLifeDays),
            Some(30.0)
        );
    }

    fn history_with_hl(hl: i64) -> CowHistory {
        CowHistory {
            cow_id: "C".into(),
            farm_id: "F".into(),
            birth_date: date(2010, 1, 1),
            culling_date: Some(date(2010, 1, 1) + chrono::Duration::days(hl)),
            hl_days: Some(hl),
            hl_class: Some(HlClass::Low),
            age_at_first_calving_days: None,
            records: Vec::new(),
        }
    }

    #[test]
    fn clean_drops_hl_outliers_whole() {
        let (kept, report) = clean(vec![
            history_with_hl(50),
            history_with_hl(101),
            history_with_hl(5001),
            history_with_hl(2000),
        ]);
        assert_eq!(kept.len(), 2);
        assert_eq!(report.cows_removed_hl_low, 1);
        assert_eq!(report.cows_removed_hl_high, 1);
        assert!(kept.iter().all(|h| {
            let hl = h.hl_days.unwrap();
            (HL_KEEP_MIN..=HL_KEEP_MAX).contains(&hl)
        }));
    }

    #[test]
    fn clean_rejects_out_of_bounds_values_as_missing() {
        let mut h = history_with_hl(2000);
        let mut fv = FeatureVector::default();
        fv.set(Feature::Scc, Some(-5.0)); // below the physical minimum
        fv.set(Feature::MilkFat, Some(4.0));
        h.records.push(EventRecord {
            date: date(2011, 1, 1),
            sources: SourceSet::default(),
            features: fv,
        });
        let (kept, report) = clean(vec![h]);
        let rec = &kept[0].records[0];
        assert_eq!(rec.features.get(Feature::Scc), None);
        assert_eq!(rec.features.get(Feature::MilkFat), Some(4.0));
        assert_eq!(report.values_rejected["scc"], 1);
    }

    #[test]
    fn five_cow_fixture_merges_expected_record_count() {
        // Per-cow contributions: C1 2 test days, C2 1 test + 1 health on
        // the same date, C3 1 health, C4 nothing, C5 1 test.
        let mut tables = RawTables::default();
        for (i, cow) in ["C1", "C2", "C3", "C4", "C5"].iter().enumerate() {
            tables.pedigree.push(pedigree(
                cow,
                if i < 3 { "F1" } else { "F2" },
                date(2010, 1, 1),
                Some(date(2017, 1, 1)),
            ));
        }
        tables.test_day = vec![
            test_day("C1", date(2011, 1, 1), 80.0),
            test_day("C1", date(2011, 6, 1), 82.0),
            test_day("C2", date(2012, 1, 1), 85.0),
            test_day("C5", date(2013, 1, 1), 88.0),
        ];
        tables.health = vec![health("C2", date(2012, 1, 1)), health("C3", date(2012, 2, 2))];
        let (merged, report) = merge_on_nid(&tables);
        let by_cow: Vec<usize> = merged.iter().map(|m| m.records.len()).collect();
        assert_eq!(by_cow, vec![2, 1, 1, 0, 1]);
        assert_eq!(report.records_merged, 5);
    }

    #[test]
    fn pipeline_is_pure_in_its_inputs() {
        let mut tables = base_tables();
        tables.test_day = vec![test_day("C1", date(2012, 5, 1), 100.0)];
        let a = process_tables(&tables, ClassThresholds::default()).unwrap();
        let b = process_tables(&tables, ClassThresholds::default()).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn processed_csv_roundtrip() {
        let mut tables = base_tables();
        tables.test_day = vec![test_day("C1", date(2012, 5, 1), 100.0)];
        let (histories, _, _) = process_tables(&tables, ClassThresholds::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("processed.csv");
        write_processed_csv(&path, &histories).unwrap();
        let back = read_processed_csv(&path).unwrap();
        assert_eq!(histories, back);
    }
}
