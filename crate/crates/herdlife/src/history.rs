//! Per-cow merged histories and the herd-life targets derived from them.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{HerdError, Result};
use crate::features::FeatureVector;

/// Herd-life class boundaries in days. Both boundary values fall in the
/// middle class: low is strictly below `low_upper`, high strictly above
/// `high_lower`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub low_upper: f64,
    pub high_lower: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        ClassThresholds {
            low_upper: 2158.0,
            high_lower: 2997.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HlClass {
    Low,
    Medium,
    High,
}

impl HlClass {
    pub const ALL: [HlClass; 3] = [HlClass::Low, HlClass::Medium, HlClass::High];

    pub fn index(self) -> usize {
        match self {
            HlClass::Low => 0,
            HlClass::Medium => 1,
            HlClass::High => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<HlClass> {
        HlClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            HlClass::Low => "low",
            HlClass::Medium => "medium",
            HlClass::High => "high",
        }
    }
}

/// Exact calendar-day difference between birth and culling.
pub fn compute_hl_days(birth: NaiveDate, culling: NaiveDate) -> Result<i64> {
    if culling < birth {
        return Err(HerdError::CullingBeforeBirth { birth, culling });
    }
    Ok((culling - birth).num_days())
}

/// Productive life: herd life adjusted by the age at first calving.
pub fn pl_from_hl(hl_days: i64, age_at_first_calving_days: i64) -> Result<i64> {
    if age_at_first_calving_days < 0 || age_at_first_calving_days > hl_days {
        return Err(HerdError::InvalidFirstCalvingAge {
            age: age_at_first_calving_days,
            hl: hl_days,
        });
    }
    Ok(hl_days - age_at_first_calving_days)
}

/// Maps herd-life days onto {low, medium, high}; partitions [0, inf).
pub fn hl_to_class(days: f64, thresholds: ClassThresholds) -> Result<HlClass> {
    if days < 0.0 || !days.is_finite() {
        return Err(HerdError::NegativeDays(days));
    }
    Ok(if days < thresholds.low_upper {
        HlClass::Low
    } else if days <= thresholds.high_lower {
        HlClass::Medium
    } else {
        HlClass::High
    })
}

/// Which source tables contributed rows on a record date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceSet {
    pub test_day: bool,
    pub lactation: bool,
    pub pregnancy: bool,
    pub calving: bool,
    pub health: bool,
}

/// One date-keyed merged record of a cow's history.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub sources: SourceSet,
    pub features: FeatureVector,
}

/// A cow's date-ordered merged event records plus targets.
///
/// `culling_date` (and hence the targets) can be absent for cows still in
/// the herd; such cows flow through the pipeline for prediction but are
/// excluded from training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CowHistory {
    pub cow_id: String,
    pub farm_id: String,
    pub birth_date: NaiveDate,
    pub culling_date: Option<NaiveDate>,
    pub hl_days: Option<i64>,
    pub hl_class: Option<HlClass>,
    pub age_at_first_calving_days: Option<i64>,
    pub records: Vec<EventRecord>,
}

impl CowHistory {
    pub fn has_target(&self) -> bool {
        self.hl_days.is_some() && self.hl_class.is_some()
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}
