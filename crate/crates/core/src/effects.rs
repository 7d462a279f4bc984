//! Per-study effect estimates with zero-cell handling.
//!
//! Each study contributes a point estimate `theta_hat` on the pooling scale
//! (natural for the risk difference, log for the ratio measures) and a
//! variance `sigma2_hat`. Zero cells that would make a ratio measure
//! undefined are handled per the [`CorrectionPolicy`]: either the study is
//! rejected or the Haldane-Anscombe correction (0.5 added to all four
//! cells of the affected study) is applied and flagged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArmSummary, Measure, MetaDataset, StudyTable};

/// What to do with a study whose zero cells break the requested measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionPolicy {
    /// Fail with [`EffectError::ZeroCellUnresolvable`].
    Reject,
    /// Add 0.5 to all four cells of the affected study.
    #[default]
    Haldane,
}

impl std::str::FromStr for CorrectionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reject" => Ok(CorrectionPolicy::Reject),
            "haldane" => Ok(CorrectionPolicy::Haldane),
            other => Err(format!("unknown correction policy `{other}` (expected reject or haldane)")),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EffectError {
    #[error("study `{label}`: zero cell leaves {measure} undefined under the reject policy")]
    ZeroCellUnresolvable { label: String, measure: Measure },
}

/// One study's contribution to a pooled analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEffect {
    pub label: String,
    /// The measure as requested; `theta_hat` lives on [`Measure::pooling`]'s
    /// scale (log for `Rr`/`Or`).
    pub measure: Measure,
    pub theta_hat: f64,
    pub sigma2_hat: f64,
    /// True when the Haldane-Anscombe correction was applied.
    pub corrected: bool,
}

impl StudyEffect {
    /// Point estimate on the reporting scale (exponentiated for `Rr`/`Or`).
    pub fn point_reported(&self) -> f64 {
        if self.measure.reports_exponentiated() {
            self.theta_hat.exp()
        } else {
            self.theta_hat
        }
    }
}

/// Observed event rates of both arms: `(treated, control)`.
pub fn arm_rates(study: &StudyTable) -> (ArmSummary, ArmSummary) {
    let n1 = study.n_treated();
    let n0 = study.n_control();
    (
        ArmSummary { psi_hat: study.n11 as f64 / n1 as f64, n_arm: n1 },
        ArmSummary { psi_hat: study.n01 as f64 / n0 as f64, n_arm: n0 },
    )
}

/// Whether `measure` on this study triggers the zero-cell policy.
///
/// The risk-ratio family needs events in both arms (`n11`, `n01` > 0); the
/// odds-ratio family needs all four cells positive. The risk difference is
/// defined on the closed unit square and never triggers.
pub fn needs_correction(study: &StudyTable, measure: Measure) -> bool {
    match measure.pooling() {
        Measure::Rd => false,
        Measure::LogRr => study.n11 == 0 || study.n01 == 0,
        Measure::LogOr => study.has_zero_cell(),
        _ => unreachable!("pooling() returns Rd, LogRr or LogOr"),
    }
}

/// Cell counts as floats, shifted by 0.5 when corrected.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cells {
    pub n11: f64,
    pub n10: f64,
    pub n01: f64,
    pub n00: f64,
}

impl Cells {
    pub fn n1(&self) -> f64 {
        self.n11 + self.n10
    }

    pub fn n0(&self) -> f64 {
        self.n01 + self.n00
    }

    pub fn psi1(&self) -> f64 {
        self.n11 / self.n1()
    }

    pub fn psi0(&self) -> f64 {
        self.n01 / self.n0()
    }
}

/// Resolves the zero-cell policy for one study. Returns the (possibly
/// shifted) cells and whether the correction fired.
pub(crate) fn resolve_cells(
    study: &StudyTable,
    measure: Measure,
    policy: CorrectionPolicy,
) -> Result<(Cells, bool), EffectError> {
    let corrected = needs_correction(study, measure);
    if corrected && policy == CorrectionPolicy::Reject {
        return Err(EffectError::ZeroCellUnresolvable { label: study.label.clone(), measure });
    }
    let shift = if corrected { 0.5 } else { 0.0 };
    Ok((
        Cells {
            n11: study.n11 as f64 + shift,
            n10: study.n10 as f64 + shift,
            n01: study.n01 as f64 + shift,
            n00: study.n00 as f64 + shift,
        },
        corrected,
    ))
}

/// Arm rates after the zero-cell policy: `((psi1, psi0), corrected)`.
pub fn effective_arm_rates(
    study: &StudyTable,
    measure: Measure,
    policy: CorrectionPolicy,
) -> Result<((f64, f64), bool), EffectError> {
    let (cells, corrected) = resolve_cells(study, measure, policy)?;
    Ok(((cells.psi1(), cells.psi0()), corrected))
}

/// Per-study point and variance on the pooling scale.
///
/// Log measures are computed as pure sums and differences of cell logs so
/// that swapping the treated and control rows negates `theta_hat`
/// bit-for-bit. Variances: risk difference uses the binomial plug-in per
/// arm, log risk ratio uses `1/n11 - 1/n1 + 1/n01 - 1/n0`, log odds ratio
/// uses the sum of reciprocal cells.
pub fn study_effect(
    study: &StudyTable,
    measure: Measure,
    policy: CorrectionPolicy,
) -> Result<StudyEffect, EffectError> {
    let (cells, corrected) = resolve_cells(study, measure, policy)?;
    let (theta_hat, sigma2_hat) = match measure.pooling() {
        Measure::Rd => {
            let (x, y) = (cells.psi1(), cells.psi0());
            (x - y, x * (1.0 - x) / cells.n1() + y * (1.0 - y) / cells.n0())
        }
        // Variance terms are grouped per arm so that swapping the rows
        // commutes one addition instead of reassociating four.
        Measure::LogRr => (
            (cells.n11.ln() - cells.n1().ln()) - (cells.n01.ln() - cells.n0().ln()),
            (1.0 / cells.n11 - 1.0 / cells.n1()) + (1.0 / cells.n01 - 1.0 / cells.n0()),
        ),
        Measure::LogOr => (
            (cells.n11.ln() + cells.n00.ln()) - (cells.n10.ln() + cells.n01.ln()),
            (1.0 / cells.n11 + 1.0 / cells.n10) + (1.0 / cells.n01 + 1.0 / cells.n00),
        ),
        _ => unreachable!("pooling() returns Rd, LogRr or LogOr"),
    };
    Ok(StudyEffect { label: study.label.clone(), measure, theta_hat, sigma2_hat, corrected })
}

/// [`study_effect`] across a whole dataset, preserving study order.
pub fn study_effects(
    dataset: &MetaDataset,
    measure: Measure,
    policy: CorrectionPolicy,
) -> Result<Vec<StudyEffect>, EffectError> {
    dataset.studies.iter().map(|s| study_effect(s, measure, policy)).collect()
}
