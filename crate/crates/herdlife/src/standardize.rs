//! Z-score standardization of the continuous features, fitted on
//! training cows only. Missing values become 0 after the transform,
//! i.e. the training mean. Flags pass through untouched.

use serde::{Deserialize, Serialize};

use crate::features::{Feature, FEATURE_COUNT};
use crate::history::CowHistory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Features that were constant (or absent) in the training data;
    /// they standardize to 0.
    pub constant: Vec<bool>,
}

impl Standardizer {
    /// Fits per-feature mean and standard deviation over every present
    /// value of every training record. Constant features are dropped
    /// from standardization and reported back as warnings.
    pub fn fit(train: &[CowHistory]) -> (Standardizer, Vec<Feature>) {
        let mut sums = [0.0f64; FEATURE_COUNT];
        let mut sq_sums = [0.0f64; FEATURE_COUNT];
        let mut counts = [0usize; FEATURE_COUNT];
        for h in train {
            for rec in &h.records {
                for f in Feature::ALL {
                    if f.is_flag() {
                        continue;
                    }
                    if let Some(v) = rec.features.get(f) {
                        let i = f.index();
                        sums[i] += v;
                        sq_sums[i] += v * v;
                        counts[i] += 1;
                    }
                }
            }
        }

        let mut means = vec![0.0; FEATURE_COUNT];
        let mut sds = vec![1.0; FEATURE_COUNT];
        let mut constant = vec![false; FEATURE_COUNT];
        let mut warnings = Vec::new();
        for f in Feature::ALL {
            let i = f.index();
            if f.is_flag() {
                continue;
            }
            if counts[i] == 0 {
                constant[i] = true;
                warnings.push(f);
                continue;
            }
            let n = counts[i] as f64;
            let mean = sums[i] / n;
            let var = (sq_sums[i] / n - mean * mean).max(0.0);
            let sd = var.sqrt();
            means[i] = mean;
            if sd > 0.0 {
                sds[i] = sd;
            } else {
                constant[i] = true;
                warnings.push(f);
            }
        }
        (
            Standardizer {
                means,
                sds,
                constant,
            },
            warnings,
        )
    }

    /// Transforms one value of one feature.
    pub fn transform(&self, f: Feature, value: Option<f64>) -> f64 {
        let i = f.index();
        if f.is_flag() {
            return value.unwrap_or(0.0);
        }
        if self.constant[i] {
            return 0.0;
        }
        match value {
            Some(v) => (v - self.means[i]) / self.sds[i],
            None => 0.0,
        }
    }

    /// Standardizes every record in place; afterwards all features are
    /// present (missing values imputed as the training mean, i.e. 0).
    pub fn apply(&self, histories: &mut [CowHistory]) {
        for h in histories {
            for rec in &mut h.records {
                for f in Feature::ALL {
                    let v = rec.features.get(f);
                    rec.features.set(f, Some(self.transform(f, v)));
                }
            }
        }
    }
}
