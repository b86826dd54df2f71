//! Evaluation metrics: determination coefficients, MAE, Pearson
//! correlation, the 3-class confusion matrix with per-class scores,
//! critical misclassification counts, and per-farm breakdowns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HerdError, Result};
use crate::history::HlClass;

fn check_paired(actual: &[f64], predicted: &[f64], min_len: usize) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(HerdError::Metric(format!(
            "length mismatch: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.len() < min_len {
        return Err(HerdError::Metric(format!(
            "need at least {min_len} samples, got {}",
            actual.len()
        )));
    }
    Ok(())
}

/// Coefficient of determination, 1 - SS_res / SS_tot.
pub fn r2(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_paired(actual, predicted, 2)?;
    let n = actual.len() as f64;
    let mean: f64 = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(HerdError::Metric("actuals have zero variance".into()));
    }
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Adjusted determination coefficient for `p` predictors.
pub fn r2_adjusted(actual: &[f64], predicted: &[f64], p: usize) -> Result<f64> {
    let n = actual.len();
    if n <= p + 1 {
        return Err(HerdError::Metric(format!(
            "adjusted determination needs n > p + 1 (n = {n}, p = {p})"
        )));
    }
    let plain = r2(actual, predicted)?;
    let n = n as f64;
    let p = p as f64;
    Ok(1.0 - (1.0 - plain) * (n - 1.0) / (n - p - 1.0))
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_paired(actual, predicted, 1)?;
    Ok(actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum::<f64>()
        / actual.len() as f64)
}

/// Product-moment correlation in [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(HerdError::Metric("zero variance in correlation input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// 3x3 confusion counts; rows are actual classes, columns predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix3 {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn from_counts(counts: [[usize; 3]; 3]) -> Self {
        ConfusionMatrix3 { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn actual_support(&self, class: HlClass) -> usize {
        self.counts[class.index()].iter().sum()
    }

    pub fn predicted_total(&self, class: HlClass) -> usize {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }

    /// Plot-ready CSV: one row per (actual, predicted) cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual,predicted,count\n");
        for a in HlClass::ALL {
            for p in HlClass::ALL {
                out.push_str(&format!(
                    "{},{},{}\n",
                    a.name(),
                    p.name(),
                    self.counts[a.index()][p.index()]
                ));
            }
        }
        out
    }
}

pub fn confusion(actual: &[HlClass], predicted: &[HlClass]) -> Result<ConfusionMatrix3> {
    if actual.len() != predicted.len() {
        return Err(HerdError::Metric(format!(
            "label length mismatch: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix3::default();
    for (a, p) in actual.iter().zip(predicted) {
        cm.counts[a.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// Per-class precision/recall/F1. A zero denominator reports 0 with the
/// flag set rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub zero_denominator: bool,
}

pub fn prf1(cm: &ConfusionMatrix3) -> [ClassScores; 3] {
    let mut out = [ClassScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        support: 0,
        zero_denominator: false,
    }; 3];
    for class in HlClass::ALL {
        let i = class.index();
        let tp = cm.counts[i][i];
        let support = cm.actual_support(class);
        let predicted = cm.predicted_total(class);
        let mut zero = false;
        let precision = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            zero = true;
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            zero = true;
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            zero = true;
            0.0
        };
        out[i] = ClassScores {
            precision,
            recall,
            f1,
            support,
            zero_denominator: zero,
        };
    }
    out
}

/// Trace over total, exact.
pub fn accuracy(cm: &ConfusionMatrix3) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    let trace: usize = (0..3).map(|i| cm.counts[i][i]).sum();
    trace as f64 / total as f64
}

/// The two critical corner cells: actual-low predicted-high and
/// actual-high predicted-low, with rates over their actual supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritMis {
    pub low_as_high: usize,
    pub high_as_low: usize,
    pub low_as_high_rate: f64,
    pub high_as_low_rate: f64,
}

pub fn crit_mis(cm: &ConfusionMatrix3) -> CritMis {
    let low_support = cm.actual_support(HlClass::Low);
    let high_support = cm.actual_support(HlClass::High);
    let low_as_high = cm.counts[HlClass::Low.index()][HlClass::High.index()];
    let high_as_low = cm.counts[HlClass::High.index()][HlClass::Low.index()];
    let rate = |count: usize, support: usize| {
        if support == 0 {
            0.0
        } else {
            count as f64 / support as f64
        }
    };
    CritMis {
        low_as_high,
        high_as_low,
        low_as_high_rate: rate(low_as_high, low_support),
        high_as_low_rate: rate(high_as_low, high_support),
    }
}

// ---- aggregate reports ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r2: f64,
    pub r2_adjusted: Option<f64>,
    pub mae_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: ConfusionMatrix3,
    pub crit_mis: CritMis,
}

/// Metrics over one sample set (a farm or the pooled data).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
}

/// Full evaluation artifact: pooled metrics plus per-farm sub-reports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: MetricsBlock,
    pub per_farm: BTreeMap<String, MetricsBlock>,
}

/// Inputs for one evaluated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub farm_id: String,
    pub actual_days: Option<f64>,
    pub predicted_days: Option<f64>,
    pub actual_class: Option<HlClass>,
    pub predicted_class: Option<HlClass>,
}

/// Number of predictors used for adjusted determination on tabular
/// models (the model input feature count).
pub const ADJUSTED_R2_PREDICTORS: usize = crate::features::FEATURE_COUNT;

fn block(outcomes: &[&SampleOutcome], adjusted_p: Option<usize>) -> Result<MetricsBlock> {
    let mut blockk = MetricsBlock {
        samples: outcomes.len(),
        ..MetricsBlock::default()
    };

    let days: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|o| Some((o.actual_days?, o.predicted_days?)))
        .collect();
    if days.len() >= 2 {
        let actual: Vec<f64> = days.iter().map(|(a, _)| *a).collect();
        let predicted: Vec<f64> = days.iter().map(|(_, p)| *p).collect();
        let plain = r2(&actual, &predicted)?;
        let adjusted = match adjusted_p {
            Some(p) if actual.len() > p + 1 => Some(r2_adjusted(&actual, &predicted, p)?),
            _ => None,
        };
        blockk.regression = Some(RegressionMetrics {
            r2: plain,
            r2_adjusted: adjusted,
            mae_days: mae(&actual, &predicted)?,
        });
    }

    let classes: Vec<(HlClass, HlClass)> = outcomes
        .iter()
        .filter_map(|o| Some((o.actual_class?, o.predicted_class?)))
        .collect();
    if !classes.is_empty() {
        let actual: Vec<HlClass> = classes.iter().map(|(a, _)| *a).collect();
        let predicted: Vec<HlClass> = classes.iter().map(|(_, p)| *p).collect();
        let cm = confusion(&actual, &predicted)?;
        blockk.classification = Some(ClassificationMetrics {
            accuracy: accuracy(&cm),
            per_class: prf1(&cm).to_vec(),
            confusion: cm,
            crit_mis: crit_mis(&cm),
        });
    }
    Ok(blockk)
}

/// Builds the pooled report plus one sub-report per farm.
pub fn per_farm_report(
    outcomes: &[SampleOutcome],
    adjusted_p: Option<usize>,
) -> Result<EvalReport> {
    let all: Vec<&SampleOutcome> = outcomes.iter().collect();
    let overall = block(&all, adjusted_p)?;

    let mut farms: BTreeMap<String, Vec<&SampleOutcome>> = BTreeMap::new();
    for o in outcomes {
        farms.entry(o.farm_id.clone()).or_default().push(o);
    }
    let mut per_farm = BTreeMap::new();
    for (farm, items) in farms {
        per_farm.insert(farm, block(&items, adjusted_p)?);
    }
    Ok(EvalReport { overall, per_farm })
}

impl EvalReport {
    /// Plot-ready per-farm CSV: farm, samples, determination, MAE,
    /// accuracy; the pooled row is labeled `overall`.
    pub fn per_farm_csv(&self) -> String {
        let mut out = String::from("farm,samples,r2,mae_days,accuracy\n");
        let fmt_row = |name: &str, b: &MetricsBlock| {
            format!(
                "{},{},{},{},{}\n",
                name,
                b.samples,
                b.regression.as_ref().map(|r| r.r2.to_string()).unwrap_or_default(),
                b.regression
                    .as_ref()
                    .map(|r| r.mae_days.to_string())
                    .unwrap_or_default(),
                b.classification
                    .as_ref()
                    .map(|c| c.accuracy.to_string())
                    .unwrap_or_default(),
            )
        };
        for (farm, b) in &self.per_farm {
            out.push_str(&fmt_row(farm, b));
        }
        out.push_str(&fmt_row("overall", &self.overall));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent determination oracle: explicit two-pass sums.
    fn r2_oracle(actual: &[f64], predicted: &[f64]) -> f64 {
        let mean = actual.iter().sum::<f64>() / actual.len() as f64;
        let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
        let ss_res: f64 = actual
            .iter()
            .zip(predicted)
            .map(|(a, p)| (a - p) * (a - p))
            .sum();
        1.0 - ss_res / ss_tot
    }

    #[test]
    fn perfect_predictions_score_one() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn mean_predictor_scores_exactly_zero() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let mean = [2.5, 2.5, 2.5, 2.5];
        assert_eq!(r2(&y, &mean).unwrap(), 0.0);
    }

    #[test]
    fn r2_matches_independent_sum_of_squares() {
        let actual = [1.0, 2.0, 3.0, 4.0];
        let predicted = [1.1, 1.9, 3.2, 3.8];
        let got = r2(&actual, &predicted).unwrap();
        let want = r2_oracle(&actual, &predicted);
        assert!((got - want).abs() < 1e-10);
        assert!((got - 0.98).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_actuals_are_an_error() {
        assert!(r2(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn adjusted_r2_penalizes_predictor_count() {
        let actual = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let predicted = [1.1, 1.9, 3.2, 3.8, 5.1, 5.9];
        let plain = r2(&actual, &predicted).unwrap();
        let adj = r2_adjusted(&actual, &predicted, 2).unwrap();
        let want = 1.0 - (1.0 - plain) * 5.0 / 3.0;
        assert!((adj - want).abs() < 1e-12);
        assert!(adj < plain);
        assert!(r2_adjusted(&actual, &predicted, 5).is_err());
    }

    #[test]
    fn mae_hand_cases() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 10.0], &[5.0, 5.0]).unwrap(), 5.0);
        // symmetric in residual sign
        assert_eq!(
            mae(&[0.0, 0.0], &[3.0, -3.0]).unwrap(),
            mae(&[0.0, 0.0], &[-3.0, 3.0]).unwrap()
        );
    }

    #[test]
    fn pearson_limits_and_affine_invariance() {
        let x = [1.0, 2.0, 4.0, 8.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        let y = [3.0, 1.0, 4.0, 1.5];
        let scaled: Vec<f64> = y.iter().map(|v| 2.5 * v + 7.0).collect();
        assert!((pearson(&x, &y).unwrap() - pearson(&x, &scaled).unwrap()).abs() < 1e-12);
    }

    fn cm_from(published: [[usize; 3]; 3]) -> ConfusionMatrix3 {
        ConfusionMatrix3::from_counts(published)
    }

    #[test]
    fn f1_follows_from_precision_recall_pairs() {
        // Integer-percent P/R pairs and the F1 each pair implies.
        let cases: [(f64, f64, f64); 3] =
            [(0.86, 0.98, 92.0), (0.70, 0.61, 65.0), (0.92, 0.65, 77.0)];
        for (p, r, f1_pct) in cases {
            let f1 = 100.0 * 2.0 * p * r / (p + r);
            // The published pairs are themselves rounded to integer
            // percent, so the implied F1 can shift by up to a point.
            assert!(
                (f1 - f1_pct).abs() <= 1.0,
                "P={p} R={r}: F1 {f1} vs {f1_pct}"
            );
        }
    }

    #[test]
    fn prf1_recovers_known_scores_from_a_matrix() {
        // actual low: 8 right, 2 as medium; actual medium: 5 right,
        // 5 as low; actual high: 4 right.
        let cm = cm_from([[8, 2, 0], [5, 5, 0], [0, 0, 4]]);
        let scores = prf1(&cm);
        assert!((scores[0].precision - 8.0 / 13.0).abs() < 1e-12);
        assert!((scores[0].recall - 0.8).abs() < 1e-12);
        assert!((scores[2].precision - 1.0).abs() < 1e-12);
        assert_eq!(scores[0].support, 10);
        assert!(!scores[0].zero_denominator);
    }

    #[test]
    fn zero_support_class_reports_zero_with_flag() {
        let cm = cm_from([[5, 0, 0], [0, 5, 0], [0, 0, 0]]);
        let scores = prf1(&cm);
        assert_eq!(scores[2].precision, 0.0);
        assert_eq!(scores[2].recall, 0.0);
        assert!(scores[2].zero_denominator);
    }

    #[test]
    fn all_correct_labels_give_identity_diagonal() {
        let labels = [HlClass::Low, HlClass::Medium, HlClass::High, HlClass::Low];
        let cm = confusion(&labels, &labels).unwrap();
        assert_eq!(cm.counts, [[2, 0, 0], [0, 1, 0], [0, 0, 1]]);
        assert_eq!(accuracy(&cm), 1.0);
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        let cm = cm_from([[10, 3, 1], [2, 8, 2], [0, 4, 6]]);
        assert_eq!(accuracy(&cm), 24.0 / 36.0);
    }

    #[test]
    fn crit_mis_reads_the_corner_cells() {
        // Corner cells: zero low-as-high, 34 of 674 high-as-low.
        let cm = cm_from([[2156, 44, 0], [180, 562, 180], [34, 202, 438]]);
        let cm_stats = crit_mis(&cm);
        assert_eq!(cm_stats.low_as_high, 0);
        assert_eq!(cm_stats.high_as_low, 34);
        assert_eq!(cm.actual_support(HlClass::High), 674);
        assert!((cm_stats.high_as_low_rate - 34.0 / 674.0).abs() < 1e-12);
        assert_eq!((cm_stats.high_as_low_rate * 100.0).round(), 5.0);
    }

    #[test]
    fn crit_mis_of_diagonal_matrix_is_zero() {
        let cm = cm_from([[5, 0, 0], [0, 5, 0], [0, 0, 5]]);
        let s = crit_mis(&cm);
        assert_eq!((s.low_as_high, s.high_as_low), (0, 0));
    }

    #[test]
    fn crit_mis_cells_plus_rest_sum_to_total() {
        let cm = cm_from([[10, 3, 1], [2, 8, 2], [4, 4, 6]]);
        let s = crit_mis(&cm);
        let others: usize = cm.total() - s.low_as_high - s.high_as_low;
        assert_eq!(others + s.low_as_high + s.high_as_low, cm.total());
        assert_eq!(s.low_as_high, 1);
        assert_eq!(s.high_as_low, 4);
    }

    fn outcome(farm: &str, actual: f64, predicted: f64) -> SampleOutcome {
        SampleOutcome {
            farm_id: farm.into(),
            actual_days: Some(actual),
            predicted_days: Some(predicted),
            actual_class: None,
            predicted_class: None,
        }
    }

    #[test]
    fn single_farm_overall_equals_that_farm() {
        let outcomes = vec![
            outcome("F1", 1000.0, 1100.0),
            outcome("F1", 2000.0, 1900.0),
            outcome("F1", 3000.0, 3050.0),
        ];
        let report = per_farm_report(&outcomes, None).unwrap();
        assert_eq!(report.per_farm.len(), 1);
        assert_eq!(report.per_farm["F1"], report.overall);
    }

    #[test]
    fn overall_mae_is_sample_weighted_mean_of_farm_maes() {
        let outcomes = vec![
            outcome("F1", 1000.0, 1100.0),
            outcome("F1", 2000.0, 1900.0),
            outcome("F2", 3000.0, 3300.0),
            outcome("F2", 1500.0, 1400.0),
            outcome("F2", 2500.0, 2450.0),
        ];
        let report = per_farm_report(&outcomes, None).unwrap();
        let mut weighted = 0.0;
        let mut total = 0;
        for b in report.per_farm.values() {
            weighted += b.regression.as_ref().unwrap().mae_days * b.samples as f64;
            total += b.samples;
        }
        let overall = report.overall.regression.as_ref().unwrap().mae_days;
        assert!((overall - weighted / total as f64).abs() < 1e-9);
    }
}
