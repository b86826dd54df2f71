//! The fixed 16-feature model input set and its published statistics.
//!
//! Thirteen continuous traits plus the three per-date event flags. The
//! marginal table drives both the synthetic generator's targets and the
//! cleansing bounds; out-of-range values are rejected as missing rather
//! than clamped.

use serde::{Deserialize, Serialize};

pub const FEATURE_COUNT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    CurrentLifeDays,
    Lactation,
    Milk305,
    LactoseYield,
    PiFat,
    NumPiTests,
    MilkFat,
    LactosePercentage,
    Scc,
    DaysPregnant,
    MammarySystem,
    Hwi,
    AbvMastitisResistance,
    TestedFlag,
    BredFlag,
    TreatedFlag,
}

/// Target marginal (and cleansing bounds) for one continuous feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::CurrentLifeDays,
        Feature::Lactation,
        Feature::Milk305,
        Feature::LactoseYield,
        Feature::PiFat,
        Feature::NumPiTests,
        Feature::MilkFat,
        Feature::LactosePercentage,
        Feature::Scc,
        Feature::DaysPregnant,
        Feature::MammarySystem,
        Feature::Hwi,
        Feature::AbvMastitisResistance,
        Feature::TestedFlag,
        Feature::BredFlag,
        Feature::TreatedFlag,
    ];

    pub fn index(self) -> usize {
        Feature::ALL.iter().position(|&f| f == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::CurrentLifeDays => "current_life_days",
            Feature::Lactation => "lactation",
            Feature::Milk305 => "milk_305",
            Feature::LactoseYield => "lactose_yield",
            Feature::PiFat => "pi_fat",
            Feature::NumPiTests => "num_pi_tests",
            Feature::MilkFat => "milk_fat",
            Feature::LactosePercentage => "lactose_percentage",
            Feature::Scc => "scc",
            Feature::DaysPregnant => "days_pregnant",
            Feature::MammarySystem => "mammary_system",
            Feature::Hwi => "hwi",
            Feature::AbvMastitisResistance => "abv_mastitis_resistance",
            Feature::TestedFlag => "tested_flag",
            Feature::BredFlag => "bred_flag",
            Feature::TreatedFlag => "treated_flag",
        }
    }

    pub fn is_flag(self) -> bool {
        matches!(
            self,
            Feature::TestedFlag | Feature::BredFlag | Feature::TreatedFlag
        )
    }

    /// Published marginal statistics, where the source table defines them.
    /// `days_pregnant` has no published row; its values are this
    /// project's documented defaults (bovine gestation runs to ~283 days).
    pub fn marginal(self) -> Option<Marginal> {
        let m = |mean, sd, min, max| {
            Some(Marginal {
                mean,
                sd,
                min,
                max,
            })
        };
        match self {
            Feature::CurrentLifeDays => None,
            Feature::Lactation => m(3.0, 1.8, 0.0, 12.0),
            Feature::Milk305 => m(6847.0, 2241.0, 0.0, 17910.0),
            Feature::LactoseYield => m(331.0, 237.0, 0.0, 2966.0),
            Feature::PiFat => m(95.0, 25.0, 0.0, 168.0),
            Feature::NumPiTests => m(7.5, 4.0, 0.0, 39.0),
            Feature::MilkFat => m(4.2, 0.8, 0.0, 11.5),
            Feature::LactosePercentage => m(4.6, 1.2, 0.0, 6.5),
            Feature::Scc => m(162.5, 437.6, 1.0, 13125.0),
            Feature::DaysPregnant => m(120.0, 70.0, 0.0, 283.0),
            Feature::MammarySystem => m(94.0, 6.0, 68.0, 114.0),
            Feature::Hwi => m(35.3, 93.0, -342.0, 454.0),
            Feature::AbvMastitisResistance => m(101.0, 2.7, 87.0, 110.0),
            Feature::TestedFlag | Feature::BredFlag | Feature::TreatedFlag => None,
        }
    }

    /// Cleansing bounds: values outside are rejected as missing.
    pub fn bounds(self) -> Option<(f64, f64)> {
        self.marginal().map(|m| (m.min, m.max))
    }
}

/// Herd-life target statistics from the same published table.
pub const HL_MARGINAL: Marginal = Marginal {
    mean: 2617.0,
    sd: 898.0,
    min: 101.0,
    max: 4993.0,
};

/// Test-day milk yield marginal (a source-table column, not a model
/// feature).
pub const TEST_DAY_MILK_MARGINAL: Marginal = Marginal {
    mean: 23.4,
    sd: 8.6,
    min: 0.1,
    max: 77.2,
};

/// One record's model inputs; `None` marks a missing value awaiting
/// imputation downstream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    values: [Option<f64>; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: Option<f64>) {
        self.values[f.index()] = v;
    }

    pub fn values(&self) -> &[Option<f64>; FEATURE_COUNT] {
        &self.values
    }

    /// Dense view with missing values as 0 (the post-standardization
    /// imputation value).
    pub fn dense(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for (o, v) in out.iter_mut().zip(self.values.iter()) {
            *o = v.unwrap_or(0.0);
        }
        out
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}
