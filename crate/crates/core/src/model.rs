//! Shared domain types: study tables, datasets, contrast measures and pooled
//! estimates.
//!
//! All types here are plain immutable values once validated; they are `Send`
//! and `Sync` and safe to share across threads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// One study's 2x2 treatment-by-outcome table.
///
/// `n11` counts treated participants with the event, `n10` treated without,
/// `n01` controls with the event and `n00` controls without.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyTable {
    pub label: String,
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl StudyTable {
    pub fn new(label: impl Into<String>, n11: u64, n10: u64, n01: u64, n00: u64) -> Self {
        Self { label: label.into(), n11, n10, n01, n00 }
    }

    /// Size of the treated arm.
    pub fn n_treated(&self) -> u64 {
        self.n11 + self.n10
    }

    /// Size of the control arm.
    pub fn n_control(&self) -> u64 {
        self.n01 + self.n00
    }

    /// Total number of participants in the study.
    pub fn n_total(&self) -> u64 {
        self.n_treated() + self.n_control()
    }

    /// True if any of the four cells is zero.
    pub fn has_zero_cell(&self) -> bool {
        self.n11 == 0 || self.n10 == 0 || self.n01 == 0 || self.n00 == 0
    }
}

/// An ordered collection of study tables analysed together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaDataset {
    pub name: String,
    pub studies: Vec<StudyTable>,
}

impl MetaDataset {
    pub fn new(name: impl Into<String>, studies: Vec<StudyTable>) -> Self {
        Self { name: name.into(), studies }
    }

    /// Number of studies K.
    pub fn k(&self) -> usize {
        self.studies.len()
    }

    /// Total number of participants across all studies.
    pub fn n_total(&self) -> u64 {
        self.studies.iter().map(StudyTable::n_total).sum()
    }
}

/// Treatment arm indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Control,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Treated => write!(f, "treated"),
            Arm::Control => write!(f, "control"),
        }
    }
}

/// Event rate and size of one study arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    /// Observed event rate in the arm.
    pub psi_hat: f64,
    /// Number of participants in the arm.
    pub n_arm: u64,
}

/// Validation failures for raw datasets.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("dataset `{name}` contains no studies")]
    EmptyDataset { name: String },
    #[error("study `{label}`: {arm} arm has zero participants")]
    EmptyArm { label: String, arm: Arm },
    #[error("study `{label}`: negative count {value} in column `{field}`")]
    NegativeCount { label: String, field: &'static str, value: i64 },
    #[error("duplicate study label `{label}`")]
    DuplicateLabel { label: String },
}

/// Checks every dataset invariant and returns the dataset untouched.
///
/// Errors on an empty dataset, an empty arm in any study, or duplicated
/// study labels. Counts are unsigned by construction; negative values are
/// rejected at parse time (see [`crate::io`]).
pub fn validate_dataset(dataset: MetaDataset) -> Result<MetaDataset, DatasetError> {
    if dataset.studies.is_empty() {
        return Err(DatasetError::EmptyDataset { name: dataset.name.clone() });
    }
    let mut seen = std::collections::HashSet::new();
    for study in &dataset.studies {
        if !seen.insert(study.label.as_str()) {
            return Err(DatasetError::DuplicateLabel { label: study.label.clone() });
        }
        if study.n_treated() == 0 {
            return Err(DatasetError::EmptyArm { label: study.label.clone(), arm: Arm::Treated });
        }
        if study.n_control() == 0 {
            return Err(DatasetError::EmptyArm { label: study.label.clone(), arm: Arm::Control });
        }
    }
    Ok(dataset)
}

/// Contrast measure comparing the treated-arm rate `x` against the
/// control-arm rate `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Risk difference, `x - y`.
    Rd,
    /// Risk ratio, `x / y`.
    Rr,
    /// Log risk ratio, `log(x / y)`.
    LogRr,
    /// Odds ratio, `x(1-y) / ((1-x)y)`.
    Or,
    /// Log odds ratio.
    LogOr,
}

impl Measure {
    pub const ALL: [Measure; 5] = [Measure::Rd, Measure::Rr, Measure::LogRr, Measure::Or, Measure::LogOr];

    /// Contrast value at arm rates `(x, y)`.
    ///
    /// Log measures are evaluated as differences of logs so that swapping
    /// the two arms negates the value exactly.
    pub fn value(self, x: f64, y: f64) -> f64 {
        match self {
            Measure::Rd => x - y,
            Measure::Rr => x / y,
            Measure::LogRr => x.ln() - y.ln(),
            Measure::Or => (x * (1.0 - y)) / ((1.0 - x) * y),
            Measure::LogOr => {
                (x.ln() + (1.0 - y).ln()) - ((1.0 - x).ln() + y.ln())
            }
        }
    }

    /// Gradient `(d/dx, d/dy)` of [`Measure::value`] at `(x, y)`.
    pub fn gradient(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Measure::Rd => (1.0, -1.0),
            Measure::Rr => (1.0 / y, -x / (y * y)),
            Measure::LogRr => (1.0 / x, -1.0 / y),
            Measure::Or => {
                let omx = 1.0 - x;
                let omy = 1.0 - y;
                ((omy / y) / (omx * omx), -(x / omx) / (y * y))
            }
            Measure::LogOr => (1.0 / (x * (1.0 - x)), -1.0 / (y * (1.0 - y))),
        }
    }

    /// Value of the contrast under no treatment effect.
    pub fn null_value(self) -> f64 {
        match self {
            Measure::Rd | Measure::LogRr | Measure::LogOr => 0.0,
            Measure::Rr | Measure::Or => 1.0,
        }
    }

    /// The measure actually used on the pooling scale: ratio measures are
    /// pooled as their log versions, the risk difference natively.
    pub fn pooling(self) -> Measure {
        match self {
            Measure::Rd => Measure::Rd,
            Measure::Rr | Measure::LogRr => Measure::LogRr,
            Measure::Or | Measure::LogOr => Measure::LogOr,
        }
    }

    /// True for the risk-ratio and odds-ratio families (log or natural).
    pub fn is_ratio(self) -> bool {
        !matches!(self, Measure::Rd)
    }

    /// True when results pooled on the log scale are reported exponentiated.
    pub fn reports_exponentiated(self) -> bool {
        matches!(self, Measure::Rr | Measure::Or)
    }

    /// True if `(x, y)` lies in the measure's domain: the open unit square
    /// for the ratio families, the closed square for the risk difference.
    pub fn domain_contains(self, x: f64, y: f64) -> bool {
        match self {
            Measure::Rd => (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y),
            _ => x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Measure::Rd => "rd",
            Measure::Rr => "rr",
            Measure::LogRr => "log-rr",
            Measure::Or => "or",
            Measure::LogOr => "log-or",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rd" => Ok(Measure::Rd),
            "rr" => Ok(Measure::Rr),
            "log-rr" | "logrr" => Ok(Measure::LogRr),
            "or" => Ok(Measure::Or),
            "log-or" | "logor" => Ok(Measure::LogOr),
            other => Err(format!("unknown measure `{other}` (expected rd, rr, log-rr, or, log-or)")),
        }
    }
}

/// How a pooled estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMethod {
    FixedEffects,
    RandomEffects,
    Causal,
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolingMethod::FixedEffects => write!(f, "fixed-effects"),
            PoolingMethod::RandomEffects => write!(f, "random-effects"),
            PoolingMethod::Causal => write!(f, "causal"),
        }
    }
}

/// Scale on which a pooled estimate's variance lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Natural,
    Log,
}

/// Non-fatal conditions attached to a pooled estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateWarning {
    /// Random-effects requested with a single study; degraded to
    /// fixed-effects with tau2 = 0.
    SingleStudyRandomEffects,
    /// The closed-form variance came out negative from floating-point
    /// cancellation and was clamped to zero.
    VarianceClamped,
    /// Variance for deterministic (uniform/custom) weights uses the
    /// fixed-weight extension rather than the pooled-weight formula.
    FixedWeightVariance,
    /// Variance and interval estimated by nonparametric bootstrap.
    BootstrapVariance,
}

impl fmt::Display for EstimateWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateWarning::SingleStudyRandomEffects => {
                write!(f, "single study: random-effects degraded to fixed-effects (tau2 = 0)")
            }
            EstimateWarning::VarianceClamped => {
                write!(f, "negative variance from floating-point cancellation clamped to 0")
            }
            EstimateWarning::FixedWeightVariance => {
                write!(f, "variance uses the fixed-weight extension formula")
            }
            EstimateWarning::BootstrapVariance => {
                write!(f, "variance estimated by nonparametric bootstrap")
            }
        }
    }
}

/// A pooled treatment-effect estimate with its uncertainty.
///
/// For ratio measures the point and confidence interval are reported on the
/// scale implied by `measure` (natural for `Rr`/`Or`, log for the log
/// variants) while `variance` always refers to the scale recorded in
/// `scale`. `weights` are the normalized per-study weights actually used
/// and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub method: PoolingMethod,
    pub measure: Measure,
    pub point: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub weights: Vec<f64>,
    /// Between-study variance; present exactly for random-effects estimates.
    pub tau2: Option<f64>,
    pub scale: Scale,
    pub warnings: Vec<EstimateWarning>,
}

/// Two-sided standard-normal quantile for a central interval at `ci_level`.
pub(crate) fn z_quantile(ci_level: f64) -> f64 {
    assert!(
        ci_level > 0.0 && ci_level < 1.0,
        "ci level must be in (0, 1), got {ci_level}"
    );
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + ci_level / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n11: u64, n10: u64, n01: u64, n00: u64) -> StudyTable {
        StudyTable::new("s", n11, n10, n01, n00)
    }

    #[test]
    fn validate_accepts_well_formed_dataset() {
        let ds = MetaDataset::new("d", vec![StudyTable::new("a", 10, 10, 5, 15)]);
        let validated = validate_dataset(ds.clone()).unwrap();
        assert_eq!(validated, ds);
    }

    #[test]
    fn validate_rejects_empty_arm() {
        let ds = MetaDataset::new("d", vec![StudyTable::new("a", 10, 0, 0, 0)]);
        assert_eq!(
            validate_dataset(ds),
            Err(DatasetError::EmptyArm { label: "a".into(), arm: Arm::Control })
        );
    }

    #[test]
    fn validate_rejects_duplicate_labels() {
        let ds = MetaDataset::new(
            "d",
            vec![StudyTable::new("A", 1, 1, 1, 1), StudyTable::new("A", 2, 2, 2, 2)],
        );
        assert_eq!(validate_dataset(ds), Err(DatasetError::DuplicateLabel { label: "A".into() }));
    }

    #[test]
    fn validate_rejects_empty_dataset() {
        let ds = MetaDataset::new("d", vec![]);
        assert_eq!(validate_dataset(ds), Err(DatasetError::EmptyDataset { name: "d".into() }));
    }

    #[test]
    fn table_arm_sizes() {
        let t = table(10, 10, 5, 15);
        assert_eq!(t.n_treated(), 20);
        assert_eq!(t.n_control(), 20);
        assert_eq!(t.n_total(), 40);
        assert!(!t.has_zero_cell());
        assert!(table(0, 1, 1, 1).has_zero_cell());
    }

    #[test]
    fn null_effect_values() {
        for p in [0.01, 0.25, 0.5, 0.75, 0.99] {
            assert_eq!(Measure::Rd.value(p, p), 0.0);
            assert_eq!(Measure::Rr.value(p, p), 1.0);
            assert_eq!(Measure::Or.value(p, p), 1.0);
            assert_eq!(Measure::LogRr.value(p, p), 0.0);
            assert_eq!(Measure::LogOr.value(p, p), 0.0);
        }
    }

    #[test]
    fn known_contrast_values() {
        assert_eq!(Measure::Rd.value(0.5, 0.25), 0.25);
        assert_eq!(Measure::Rr.value(0.5, 0.25), 2.0);
        assert!((Measure::LogRr.value(0.5, 0.25) - std::f64::consts::LN_2).abs() < 1e-15);
        // odds 1.0 vs 1/3
        assert!((Measure::Or.value(0.5, 0.25) - 3.0).abs() < 1e-12);
        assert!((Measure::LogOr.value(0.5, 0.25) - 3.0_f64.ln()).abs() < 1e-12);
    }

    /// Central finite differences reproduce every gradient to 1e-6 relative
    /// error at interior points.
    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next_unit = move || {
            // xorshift64*, plenty for test point generation
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = 0.05 + 0.9 * next_unit();
            let y = 0.05 + 0.9 * next_unit();
            for m in Measure::ALL {
                let (gx, gy) = m.gradient(x, y);
                let fd_x = (m.value(x + h, y) - m.value(x - h, y)) / (2.0 * h);
                let fd_y = (m.value(x, y + h) - m.value(x, y - h)) / (2.0 * h);
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
                assert!(rel(fd_x, gx) < 1e-6, "{m}: d/dx at ({x},{y}): fd {fd_x} vs {gx}");
                assert!(rel(fd_y, gy) < 1e-6, "{m}: d/dy at ({x},{y}): fd {fd_y} vs {gy}");
            }
        }
    }

    #[test]
    fn measure_round_trips_through_str() {
        for m in Measure::ALL {
            assert_eq!(m.to_string().parse::<Measure>().unwrap(), m);
        }
        assert!("nnt".parse::<Measure>().is_err());
    }

    #[test]
    fn domain_checks() {
        assert!(Measure::Rd.domain_contains(0.0, 1.0));
        assert!(!Measure::Rr.domain_contains(0.0, 0.5));
        assert!(!Measure::Or.domain_contains(0.5, 1.0));
        assert!(Measure::LogOr.domain_contains(0.5, 0.5));
    }

    #[test]
    fn z_quantile_matches_reference() {
        assert!((z_quantile(0.95) - 1.959963984540054).abs() < 1e-12);
        assert!((z_quantile(0.99) - 2.5758293035489004).abs() < 1e-12);
    }
}
