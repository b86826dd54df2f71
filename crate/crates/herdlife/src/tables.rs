//! The seven raw source tables, their exact CSV headers, and typed
//! loading with reject accounting. Unparseable rows are counted and
//! reported, never silently dropped; a file where more than half the
//! rows fail to parse is treated as a data error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{HerdError, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableKind {
    Pedigree,
    Lactation,
    TestDay,
    PregnancyTest,
    CalvingEase,
    HerdHealth,
    Abv,
}

impl TableKind {
    pub const ALL: [TableKind; 7] = [
        TableKind::Pedigree,
        TableKind::Lactation,
        TableKind::TestDay,
        TableKind::PregnancyTest,
        TableKind::CalvingEase,
        TableKind::HerdHealth,
        TableKind::Abv,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TableKind::Pedigree => "ds102",
            TableKind::Lactation => "ds103",
            TableKind::TestDay => "ds104",
            TableKind::PregnancyTest => "ds108",
            TableKind::CalvingEase => "ds112",
            TableKind::HerdHealth => "ds116",
            TableKind::Abv => "ds202",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.code())
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            TableKind::Pedigree => &[
                "National Cow ID",
                "National Herd ID",
                "Within-Herd Cow ID",
                "Birth Date",
                "Sire National ID",
                "Dam National ID",
                "Animal Termination Code",
                "Animal Termination Date",
            ],
            TableKind::Lactation => &[
                "Milk Yield",
                "Fat Yield",
                "Total Solids 305",
                "Milk 305",
                "Fat 305",
                "Protein 305",
                "Protein Yield",
                "Lactose Yield",
                "Solids Yield",
                "PI Milk",
                "PI Fat",
                "PI Protein",
                "Custom PI",
                "National Cow ID",
                "National Herd ID",
                "Within-Herd Cow ID",
                "Calving Date",
                "Calving Code",
                "Parity",
                "Termination Date",
                "Termination Code",
                "Num PI TEST",
                "Lactose 305",
            ],
            TableKind::TestDay => &[
                "National Cow ID",
                "National Herd ID",
                "Within-Herd Cow ID",
                "Test Date",
                "Fat Percentage",
                "Protein Percentage",
                "Lactose Percentage",
                "Somatic Cell Count",
                "Milk Yield",
                "Calving Date",
            ],
            TableKind::PregnancyTest => &[
                "National Cow Id",
                "National Herd Id",
                "Within-Herd Cow Id",
                "Date",
                "Code",
                "Result",
                "Bull National Id",
                "Technician Code",
            ],
            TableKind::CalvingEase => &[
                "National Cow ID",
                "National Herd ID",
                "Within-Herd Cow ID",
                "Calving Date",
                "Parity",
                "Last Mating Date",
                "Litter Size",
                "Calving Ease",
                "Sex Of Calf",
                "Fate Of Calf",
                "Size Of Calf",
            ],
            TableKind::HerdHealth => &[
                "National Cow ID",
                "National Herd ID",
                "Date",
                "Health Event Code",
                "Health Treatment Code",
                "Anatomical Position",
            ],
            TableKind::Abv => &[
                "National ID",
                "National Herd ID",
                "Within-Herd Cow ID",
                "Breed Of Cow",
                "Date Of Birth",
                "Mammary System",
                "Health Weighted Index",
                "ABV Mastitis Resistance",
                "Reliability Mastitis Resistance",
            ],
        }
    }
}

// ---- typed rows ----

#[derive(Debug, Clone, PartialEq)]
pub struct PedigreeRow {
    pub cow_id: String,
    pub herd_id: String,
    pub within_herd_id: String,
    pub birth_date: Option<NaiveDate>,
    pub sire_id: String,
    pub dam_id: String,
    pub termination_code: String,
    pub termination_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LactationRow {
    pub milk_yield: Option<f64>,
    pub fat_yield: Option<f64>,
    pub total_solids_305: Option<f64>,
    pub milk_305: Option<f64>,
    pub fat_305: Option<f64>,
    pub protein_305: Option<f64>,
    pub protein_yield: Option<f64>,
    pub lactose_yield: Option<f64>,
    pub solids_yield: Option<f64>,
    pub pi_milk: Option<f64>,
    pub pi_fat: Option<f64>,
    pub pi_protein: Option<f64>,
    pub custom_pi: Option<f64>,
    pub cow_id: String,
    pub herd_id: String,
    pub within_herd_id: String,
    pub calving_date: NaiveDate,
    pub calving_code: String,
    pub parity: Option<u32>,
    pub termination_date: Option<NaiveDate>,
    pub termination_code: String,
    pub num_pi_tests: Option<f64>,
    pub lactose_305: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestDayRow {
    pub cow_id: String,
    pub herd_id: String,
    pub within_herd_id: String,
    pub test_date: NaiveDate,
    pub fat_percentage: Option<f64>,
    pub protein_percentage: Option<f64>,
    pub lactose_percentage: Option<f64>,
    pub somatic_cell_count: Option<f64>,
    pub milk_yield: Option<f64>,
    pub calving_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PregnancyRow {
    pub cow_id: String,
    pub herd_id: String,
    pub within_herd_id: String,
    pub date: NaiveDate,
    pub code: String,
    pub result: Option<f64>,
    pub bull_id: String,
    pub technician_code: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalvingRow {
    pub cow_id: String,
    pub herd_id: String,
    pub within_herd_id: String,
    pub calving_date: NaiveDate,
    pub parity: Option<u32>,
    pub last_mating_date: Option<NaiveDate>,
    pub litter_size: Option<u32>,
    pub calving_ease: String,
    pub sex_of_calf: String,
    pub fate_of_calf: String,
    pub size_of_calf: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HealthRow {
    pub cow_id: String,
    pub herd_id: String,
    pub date: NaiveDate,
    pub health_event_code: String,
    pub health_treatment_code: String,
    pub anatomical_position: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbvRow {
    pub cow_id: String,
    pub herd_id: String,
    pub within_herd_id: String,
    pub breed: String,
    pub date_of_birth: Option<NaiveDate>,
    pub mammary_system: Option<f64>,
    pub hwi: Option<f64>,
    pub abv_mastitis_resistance: Option<f64>,
    pub reliability_mastitis_resistance: Option<f64>,
}

/// All seven source tables of one dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTables {
    pub pedigree: Vec<PedigreeRow>,
    pub lactation: Vec<LactationRow>,
    pub test_day: Vec<TestDayRow>,
    pub pregnancy: Vec<PregnancyRow>,
    pub calving: Vec<CalvingRow>,
    pub health: Vec<HealthRow>,
    pub abv: Vec<AbvRow>,
}

/// Per-table parse accounting.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct RejectLog {
    pub rows_total: usize,
    pub rows_ok: usize,
    pub rows_rejected: usize,
    pub examples: Vec<String>,
}

pub type LoadReport = BTreeMap<String, RejectLog>;

// ---- field parsing helpers ----

fn req_id(s: &str, field: &str) -> std::result::Result<String, String> {
    let t = s.trim();
    if t.is_empty() {
        Err(format!("empty {field}"))
    } else {
        Ok(t.to_string())
    }
}

fn parse_date(s: &str, field: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|_| format!("bad date in {field}: {s:?}"))
}

fn parse_opt_date(s: &str, field: &str) -> std::result::Result<Option<NaiveDate>, String> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_date(s, field).map(Some)
    }
}

fn parse_opt_f64(s: &str, field: &str) -> std::result::Result<Option<f64>, String> {
    let t = s.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>()
        .map_err(|_| format!("bad number in {field}: {s:?}"))
        .and_then(|v| {
            if v.is_finite() {
                Ok(Some(v))
            } else {
                Err(format!("non-finite number in {field}"))
            }
        })
}

fn parse_opt_u32(s: &str, field: &str) -> std::result::Result<Option<u32>, String> {
    let t = s.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<u32>()
        .map_err(|_| format!("bad integer in {field}: {s:?}"))
        .map(Some)
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_opt_u32(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_date(v: Option<NaiveDate>) -> String {
    v.map(|d| d.format(DATE_FORMAT).to_string())
        .unwrap_or_default()
}

fn fmt_date(v: NaiveDate) -> String {
    v.format(DATE_FORMAT).to_string()
}

// ---- generic loader ----

fn load_rows<R>(
    path: &Path,
    kind: TableKind,
    parse: impl Fn(&csv::StringRecord) -> std::result::Result<R, String>,
) -> Result<(Vec<R>, RejectLog)> {
    if !path.exists() {
        return Err(HerdError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| HerdError::csv(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| HerdError::csv(path, e))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let expected: Vec<String> = kind.header().iter().map(|h| h.to_string()).collect();
    if headers != expected {
        return Err(HerdError::HeaderMismatch {
            path: path.to_path_buf(),
            table: kind.code(),
            expected,
            found: headers,
        });
    }

    let mut rows = Vec::new();
    let mut log = RejectLog::default();
    for (i, record) in reader.records().enumerate() {
        log.rows_total += 1;
        let outcome = record
            .map_err(|e| e.to_string())
            .and_then(|rec| parse(&rec));
        match outcome {
            Ok(row) => {
                log.rows_ok += 1;
                rows.push(row);
            }
            Err(msg) => {
                log.rows_rejected += 1;
                if log.examples.len() < 5 {
                    log.examples.push(format!("row {}: {msg}", i + 2));
                }
            }
        }
    }
    if log.rows_total > 0 && log.rows_rejected * 2 > log.rows_total {
        return Err(HerdError::TooManyRejects {
            path: path.to_path_buf(),
            rejected: log.rows_rejected,
            total: log.rows_total,
        });
    }
    Ok((rows, log))
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> std::result::Result<&'a str, String> {
    rec.get(i).ok_or_else(|| format!("missing column {i}"))
}

pub fn parse_pedigree(rec: &csv::StringRecord) -> std::result::Result<PedigreeRow, String> {
    Ok(PedigreeRow {
        cow_id: req_id(field(rec, 0)?, "National Cow ID")?,
        herd_id: field(rec, 1)?.trim().to_string(),
        within_herd_id: field(rec, 2)?.trim().to_string(),
        birth_date: parse_opt_date(field(rec, 3)?, "Birth Date")?,
        sire_id: field(rec, 4)?.trim().to_string(),
        dam_id: field(rec, 5)?.trim().to_string(),
        termination_code: field(rec, 6)?.trim().to_string(),
        termination_date: parse_opt_date(field(rec, 7)?, "Animal Termination Date")?,
    })
}

pub fn parse_lactation(rec: &csv::StringRecord) -> std::result::Result<LactationRow, String> {
    Ok(LactationRow {
        milk_yield: parse_opt_f64(field(rec, 0)?, "Milk Yield")?,
        fat_yield: parse_opt_f64(field(rec, 1)?, "Fat Yield")?,
        total_solids_305: parse_opt_f64(field(rec, 2)?, "Total Solids 305")?,
        milk_305: parse_opt_f64(field(rec, 3)?, "Milk 305")?,
        fat_305: parse_opt_f64(field(rec, 4)?, "Fat 305")?,
        protein_305: parse_opt_f64(field(rec, 5)?, "Protein 305")?,
        protein_yield: parse_opt_f64(field(rec, 6)?, "Protein Yield")?,
        lactose_yield: parse_opt_f64(field(rec, 7)?, "Lactose Yield")?,
        solids_yield: parse_opt_f64(field(rec, 8)?, "Solids Yield")?,
        pi_milk: parse_opt_f64(field(rec, 9)?, "PI Milk")?,
        pi_fat: parse_opt_f64(field(rec, 10)?, "PI Fat")?,
        pi_protein: parse_opt_f64(field(rec, 11)?, "PI Protein")?,
        custom_pi: parse_opt_f64(field(rec, 12)?, "Custom PI")?,
        cow_id: req_id(field(rec, 13)?, "National Cow ID")?,
        herd_id: field(rec, 14)?.trim().to_string(),
        within_herd_id: field(rec, 15)?.trim().to_string(),
        calving_date: parse_date(field(rec, 16)?, "Calving Date")?,
        calving_code: field(rec, 17)?.trim().to_string(),
        parity: parse_opt_u32(field(rec, 18)?, "Parity")?,
        termination_date: parse_opt_date(field(rec, 19)?, "Termination Date")?,
        termination_code: field(rec, 20)?.trim().to_string(),
        num_pi_tests: parse_opt_f64(field(rec, 21)?, "Num PI TEST")?,
        lactose_305: parse_opt_f64(field(rec, 22)?, "Lactose 305")?,
    })
}

pub fn parse_test_day(rec: &csv::StringRecord) -> std::result::Result<TestDayRow, String> {
    Ok(TestDayRow {
        cow_id: req_id(field(rec, 0)?, "National Cow ID")?,
        herd_id: field(rec, 1)?.trim().to_string(),
        within_herd_id: field(rec, 2)?.trim().to_string(),
        test_date: parse_date(field(rec, 3)?, "Test Date")?,
        fat_percentage: parse_opt_f64(field(rec, 4)?, "Fat Percentage")?,
        protein_percentage: parse_opt_f64(field(rec, 5)?, "Protein Percentage")?,
        lactose_percentage: parse_opt_f64(field(rec, 6)?, "Lactose Percentage")?,
        somatic_cell_count: parse_opt_f64(field(rec, 7)?, "Somatic Cell Count")?,
        milk_yield: parse_opt_f64(field(rec, 8)?, "Milk Yield")?,
        calving_date: parse_opt_date(field(rec, 9)?, "Calving Date")?,
    })
}

pub fn parse_pregnancy(rec: &csv::StringRecord) -> std::result::Result<PregnancyRow, String> {
    Ok(PregnancyRow {
        cow_id: req_id(field(rec, 0)?, "National Cow Id")?,
        herd_id: field(rec, 1)?.trim().to_string(),
        within_herd_id: field(rec, 2)?.trim().to_string(),
        date: parse_date(field(rec, 3)?, "Date")?,
        code: field(rec, 4)?.trim().to_string(),
        result: parse_opt_f64(field(rec, 5)?, "Result")?,
        bull_id: field(rec, 6)?.trim().to_string(),
        technician_code: field(rec, 7)?.trim().to_string(),
    })
}

pub fn parse_calving(rec: &csv::StringRecord) -> std::result::Result<CalvingRow, String> {
    Ok(CalvingRow {
        cow_id: req_id(field(rec, 0)?, "National Cow ID")?,
        herd_id: field(rec, 1)?.trim().to_string(),
        within_herd_id: field(rec, 2)?.trim().to_string(),
        calving_date: parse_date(field(rec, 3)?, "Calving Date")?,
        parity: parse_opt_u32(field(rec, 4)?, "Parity")?,
        last_mating_date: parse_opt_date(field(rec, 5)?, "Last Mating Date")?,
        litter_size: parse_opt_u32(field(rec, 6)?, "Litter Size")?,
        calving_ease: field(rec, 7)?.trim().to_string(),
        sex_of_calf: field(rec, 8)?.trim().to_string(),
        fate_of_calf: field(rec, 9)?.trim().to_string(),
        size_of_calf: field(rec, 10)?.trim().to_string(),
    })
}

pub fn parse_health(rec: &csv::StringRecord) -> std::result::Result<HealthRow, String> {
    Ok(HealthRow {
        cow_id: req_id(field(rec, 0)?, "National Cow ID")?,
        herd_id: field(rec, 1)?.trim().to_string(),
        date: parse_date(field(rec, 2)?, "Date")?,
        health_event_code: field(rec, 3)?.trim().to_string(),
        health_treatment_code: field(rec, 4)?.trim().to_string(),
        anatomical_position: field(rec, 5)?.trim().to_string(),
    })
}

pub fn parse_abv(rec: &csv::StringRecord) -> std::result::Result<AbvRow, String> {
    Ok(AbvRow {
        cow_id: req_id(field(rec, 0)?, "National ID")?,
        herd_id: field(rec, 1)?.trim().to_string(),
        within_herd_id: field(rec, 2)?.trim().to_string(),
        breed: field(rec, 3)?.trim().to_string(),
        date_of_birth: parse_opt_date(field(rec, 4)?, "Date Of Birth")?,
        mammary_system: parse_opt_f64(field(rec, 5)?, "Mammary System")?,
        hwi: parse_opt_f64(field(rec, 6)?, "Health Weighted Index")?,
        abv_mastitis_resistance: parse_opt_f64(field(rec, 7)?, "ABV Mastitis Resistance")?,
        reliability_mastitis_resistance: parse_opt_f64(
            field(rec, 8)?,
            "Reliability Mastitis Resistance",
        )?,
    })
}

// ---- row serialization (used by the generator and the dump tools) ----

impl PedigreeRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.cow_id.clone(),
            self.herd_id.clone(),
            self.within_herd_id.clone(),
            fmt_opt_date(self.birth_date),
            self.sire_id.clone(),
            self.dam_id.clone(),
            self.termination_code.clone(),
            fmt_opt_date(self.termination_date),
        ]
    }
}

impl LactationRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            fmt_opt_f64(self.milk_yield),
            fmt_opt_f64(self.fat_yield),
            fmt_opt_f64(self.total_solids_305),
            fmt_opt_f64(self.milk_305),
            fmt_opt_f64(self.fat_305),
            fmt_opt_f64(self.protein_305),
            fmt_opt_f64(self.protein_yield),
            fmt_opt_f64(self.lactose_yield),
            fmt_opt_f64(self.solids_yield),
            fmt_opt_f64(self.pi_milk),
            fmt_opt_f64(self.pi_fat),
            fmt_opt_f64(self.pi_protein),
            fmt_opt_f64(self.custom_pi),
            self.cow_id.clone(),
            self.herd_id.clone(),
            self.within_herd_id.clone(),
            fmt_date(self.calving_date),
            self.calving_code.clone(),
            fmt_opt_u32(self.parity),
            fmt_opt_date(self.termination_date),
            self.termination_code.clone(),
            fmt_opt_f64(self.num_pi_tests),
            fmt_opt_f64(self.lactose_305),
        ]
    }
}

impl TestDayRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.cow_id.clone(),
            self.herd_id.clone(),
            self.within_herd_id.clone(),
            fmt_date(self.test_date),
            fmt_opt_f64(self.fat_percentage),
            fmt_opt_f64(self.protein_percentage),
            fmt_opt_f64(self.lactose_percentage),
            fmt_opt_f64(self.somatic_cell_count),
            fmt_opt_f64(self.milk_yield),
            fmt_opt_date(self.calving_date),
        ]
    }
}

impl PregnancyRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.cow_id.clone(),
            self.herd_id.clone(),
            self.within_herd_id.clone(),
            fmt_date(self.date),
            self.code.clone(),
            fmt_opt_f64(self.result),
            self.bull_id.clone(),
            self.technician_code.clone(),
        ]
    }
}

impl CalvingRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.cow_id.clone(),
            self.herd_id.clone(),
            self.within_herd_id.clone(),
            fmt_date(self.calving_date),
            fmt_opt_u32(self.parity),
            fmt_opt_date(self.last_mating_date),
            fmt_opt_u32(self.litter_size),
            self.calving_ease.clone(),
            self.sex_of_calf.clone(),
            self.fate_of_calf.clone(),
            self.size_of_calf.clone(),
        ]
    }
}

impl HealthRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.cow_id.clone(),
            self.herd_id.clone(),
            fmt_date(self.date),
            self.health_event_code.clone(),
            self.health_treatment_code.clone(),
            self.anatomical_position.clone(),
        ]
    }
}

impl AbvRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.cow_id.clone(),
            self.herd_id.clone(),
            self.within_herd_id.clone(),
            self.breed.clone(),
            fmt_opt_date(self.date_of_birth),
            fmt_opt_f64(self.mammary_system),
            fmt_opt_f64(self.hwi),
            fmt_opt_f64(self.abv_mastitis_resistance),
            fmt_opt_f64(self.reliability_mastitis_resistance),
        ]
    }
}

fn write_table(
    path: &Path,
    kind: TableKind,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| HerdError::csv(path, e))?;
    writer
        .write_record(kind.header())
        .map_err(|e| HerdError::csv(path, e))?;
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| HerdError::csv(path, e))?;
    }
    writer.flush().map_err(|e| HerdError::io(path, e))?;
    Ok(())
}

impl RawTables {
    /// Loads all seven tables from `dir`, named `ds102.csv` ... `ds202.csv`.
    pub fn load_dir(dir: &Path) -> Result<(RawTables, LoadReport)> {
        let p = |kind: TableKind| -> PathBuf { dir.join(kind.file_name()) };
        let mut report = LoadReport::new();
        let mut add = |kind: TableKind, log: RejectLog| {
            report.insert(kind.code().to_string(), log);
        };

        let (pedigree, log) = load_rows(&p(TableKind::Pedigree), TableKind::Pedigree, parse_pedigree)?;
        add(TableKind::Pedigree, log);
        let (lactation, log) =
            load_rows(&p(TableKind::Lactation), TableKind::Lactation, parse_lactation)?;
        add(TableKind::Lactation, log);
        let (test_day, log) = load_rows(&p(TableKind::TestDay), TableKind::TestDay, parse_test_day)?;
        add(TableKind::TestDay, log);
        let (pregnancy, log) = load_rows(
            &p(TableKind::PregnancyTest),
            TableKind::PregnancyTest,
            parse_pregnancy,
        )?;
        add(TableKind::PregnancyTest, log);
        let (calving, log) =
            load_rows(&p(TableKind::CalvingEase), TableKind::CalvingEase, parse_calving)?;
        add(TableKind::CalvingEase, log);
        let (health, log) =
            load_rows(&p(TableKind::HerdHealth), TableKind::HerdHealth, parse_health)?;
        add(TableKind::HerdHealth, log);
        let (abv, log) = load_rows(&p(TableKind::Abv), TableKind::Abv, parse_abv)?;
        add(TableKind::Abv, log);

        Ok((
            RawTables {
                pedigree,
                lactation,
                test_day,
                pregnancy,
                calving,
                health,
                abv,
            },
            report,
        ))
    }

    /// Writes all seven tables into `dir` with their canonical names.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HerdError::io(dir, e))?;
        write_table(
            &dir.join(TableKind::Pedigree.file_name()),
            TableKind::Pedigree,
            self.pedigree.iter().map(|r| r.to_record()),
        )?;
        write_table(
            &dir.join(TableKind::Lactation.file_name()),
            TableKind::Lactation,
            self.lactation.iter().map(|r| r.to_record()),
        )?;
        write_table(
            &dir.join(TableKind::TestDay.file_name()),
            TableKind::TestDay,
            self.test_day.iter().map(|r| r.to_record()),
        )?;
        write_table(
            &dir.join(TableKind::PregnancyTest.file_name()),
            TableKind::PregnancyTest,
            self.pregnancy.iter().map(|r| r.to_record()),
        )?;
        write_table(
            &dir.join(TableKind::CalvingEase.file_name()),
            TableKind::CalvingEase,
            self.calving.iter().map(|r| r.to_record()),
        )?;
        write_table(
            &dir.join(TableKind::HerdHealth.file_name()),
            TableKind::HerdHealth,
            self.health.iter().map(|r| r.to_record()),
        )?;
        write_table(
            &dir.join(TableKind::Abv.file_name()),
            TableKind::Abv,
            self.abv.iter().map(|r| r.to_record()),
        )?;
        Ok(())
    }

    pub fn total_rows(&self) -> usize {
        self.pedigree.len()
            + self.lactation.len()
            + self.test_day.len()
            + self.pregnancy.len()
            + self.calving.len()
            + self.health.len()
            + self.abv.len()
    }
}
