//! Classical inverse-variance pooling.
//!
//! Fixed-effects weights are proportional to `1/sigma2_k`; random-effects
//! weights to `1/(sigma2_k + tau2)` with the between-study variance `tau2`
//! estimated from Cochran's Q (DerSimonian-Laird by default, Paule-Mandel
//! behind an option). Ratio measures arrive on the log scale (see
//! [`crate::effects`]) and are reported exponentiated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effects::StudyEffect;
use crate::model::{
    z_quantile, EstimateWarning, Measure, PooledEstimate, PoolingMethod, Scale,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PoolError {
    #[error("no study effects to pool")]
    Empty,
    #[error("mixed measures: expected {expected}, study `{label}` has {found}")]
    MixedMeasures { expected: Measure, found: Measure, label: String },
    #[error("study `{label}`: variance {sigma2} is not positive, cannot take inverse-variance weights")]
    NonPositiveVariance { label: String, sigma2: f64 },
}

/// Between-study variance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityEstimate {
    pub tau2: f64,
    /// Cochran's Q statistic.
    pub q: f64,
    pub method: Tau2Method,
    /// True when K < 2 forced `tau2 = 0` (the estimator is undefined).
    pub single_study: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tau2Method {
    #[default]
    DerSimonianLaird,
    PauleMandel,
}

impl std::str::FromStr for Tau2Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dl" | "dersimonian-laird" | "der-simonian-laird" => Ok(Tau2Method::DerSimonianLaird),
            "pm" | "paule-mandel" => Ok(Tau2Method::PauleMandel),
            other => Err(format!("unknown tau2 method `{other}` (expected dl or pm)")),
        }
    }
}

impl std::fmt::Display for Tau2Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tau2Method::DerSimonianLaird => write!(f, "der-simonian-laird"),
            Tau2Method::PauleMandel => write!(f, "paule-mandel"),
        }
    }
}

fn check_poolable(effects: &[StudyEffect]) -> Result<Measure, PoolError> {
    let first = effects.first().ok_or(PoolError::Empty)?;
    for e in effects {
        if e.measure != first.measure {
            return Err(PoolError::MixedMeasures {
                expected: first.measure,
                found: e.measure,
                label: e.label.clone(),
            });
        }
        if !(e.sigma2_hat > 0.0) {
            return Err(PoolError::NonPositiveVariance {
                label: e.label.clone(),
                sigma2: e.sigma2_hat,
            });
        }
    }
    Ok(first.measure)
}

/// Weighted mean of `theta_hat` with weights `1/(sigma2_hat + tau2)`.
/// With `tau2 = 0` this is exactly the fixed-effects estimator.
fn inverse_variance_pool(
    effects: &[StudyEffect],
    measure: Measure,
    tau2: f64,
    ci_level: f64,
    method: PoolingMethod,
    mut warnings: Vec<EstimateWarning>,
) -> PooledEstimate {
    let raw: Vec<f64> = effects.iter().map(|e| 1.0 / (e.sigma2_hat + tau2)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let point_pooling: f64 =
        weights.iter().zip(effects).map(|(w, e)| w * e.theta_hat).sum();
    let mut variance = 1.0 / total;
    if variance < 0.0 {
        variance = 0.0;
        warnings.push(EstimateWarning::VarianceClamped);
    }
    let z = z_quantile(ci_level);
    let half = z * variance.sqrt();
    let (point, ci_low, ci_high, scale) = if measure.reports_exponentiated() {
        (
            point_pooling.exp(),
            (point_pooling - half).exp(),
            (point_pooling + half).exp(),
            Scale::Log,
        )
    } else {
        let scale = if measure == Measure::Rd { Scale::Natural } else { Scale::Log };
        (point_pooling, point_pooling - half, point_pooling + half, scale)
    };
    PooledEstimate {
        method,
        measure,
        point,
        variance,
        ci_low,
        ci_high,
        weights,
        tau2: if method == PoolingMethod::RandomEffects { Some(tau2) } else { None },
        scale,
        warnings,
    }
}

/// Fixed-effects pooled estimate: weights proportional to `1/sigma2_k`.
pub fn pool_fixed(effects: &[StudyEffect], ci_level: f64) -> Result<PooledEstimate, PoolError> {
    let measure = check_poolable(effects)?;
    Ok(inverse_variance_pool(
        effects,
        measure,
        0.0,
        ci_level,
        PoolingMethod::FixedEffects,
        Vec::new(),
    ))
}

/// DerSimonian-Laird moment estimator of the between-study variance.
///
/// `Q = sum w_k (theta_k - theta_FE)^2` with `w_k = 1/sigma2_k`,
/// `C = sum w - sum w^2 / sum w`, `tau2 = max(0, (Q - (K-1)) / C)`.
/// With a single study the estimator is undefined; `tau2 = 0` is returned
/// with `single_study` set.
pub fn tau2_dersimonian_laird(effects: &[StudyEffect]) -> Result<HeterogeneityEstimate, PoolError> {
    check_poolable(effects)?;
    let k = effects.len();
    if k < 2 {
        return Ok(HeterogeneityEstimate {
            tau2: 0.0,
            q: 0.0,
            method: Tau2Method::DerSimonianLaird,
            single_study: true,
        });
    }
    let w: Vec<f64> = effects.iter().map(|e| 1.0 / e.sigma2_hat).collect();
    let sum_w: f64 = w.iter().sum();
    let theta_fe: f64 =
        w.iter().zip(effects).map(|(w, e)| w * e.theta_hat).sum::<f64>() / sum_w;
    let q: f64 = w
        .iter()
        .zip(effects)
        .map(|(w, e)| w * (e.theta_hat - theta_fe).powi(2))
        .sum();
    let sum_w2: f64 = w.iter().map(|w| w * w).sum();
    let c = sum_w - sum_w2 / sum_w;
    let tau2 = ((q - (k as f64 - 1.0)) / c).max(0.0);
    Ok(HeterogeneityEstimate { tau2, q, method: Tau2Method::DerSimonianLaird, single_study: false })
}

/// Generalized Q at a trial value of tau2 (used by Paule-Mandel).
fn generalized_q(effects: &[StudyEffect], tau2: f64) -> f64 {
    let w: Vec<f64> = effects.iter().map(|e| 1.0 / (e.sigma2_hat + tau2)).collect();
    let sum_w: f64 = w.iter().sum();
    let theta: f64 = w.iter().zip(effects).map(|(w, e)| w * e.theta_hat).sum::<f64>() / sum_w;
    w.iter().zip(effects).map(|(w, e)| w * (e.theta_hat - theta).powi(2)).sum()
}

/// Paule-Mandel estimator: the tau2 at which the generalized Q statistic
/// equals its K-1 degrees of freedom, found by bisection to 1e-10.
///
/// The bracket starts at [0, Q] and doubles its upper end until the root is
/// enclosed; Q(tau2) is decreasing in tau2 so the root is unique.
pub fn tau2_paule_mandel(effects: &[StudyEffect]) -> Result<HeterogeneityEstimate, PoolError> {
    check_poolable(effects)?;
    let k = effects.len();
    if k < 2 {
        return Ok(HeterogeneityEstimate {
            tau2: 0.0,
            q: 0.0,
            method: Tau2Method::PauleMandel,
            single_study: true,
        });
    }
    let df = k as f64 - 1.0;
    let q0 = generalized_q(effects, 0.0);
    if q0 <= df {
        return Ok(HeterogeneityEstimate {
            tau2: 0.0,
            q: q0,
            method: Tau2Method::PauleMandel,
            single_study: false,
        });
    }
    let mut hi = q0.max(1e-12);
    let mut doublings = 0;
    while generalized_q(effects, hi) > df {
        hi *= 2.0;
        doublings += 1;
        assert!(doublings < 200, "Paule-Mandel bracket failed to enclose the root");
    }
    let mut lo = 0.0_f64;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if generalized_q(effects, mid) > df {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau2 = 0.5 * (lo + hi);
    Ok(HeterogeneityEstimate { tau2, q: q0, method: Tau2Method::PauleMandel, single_study: false })
}

/// Random-effects pooled estimate with the supplied heterogeneity estimate:
/// weights proportional to `1/(sigma2_k + tau2)`.
pub fn pool_random(
    effects: &[StudyEffect],
    het: &HeterogeneityEstimate,
    ci_level: f64,
) -> Result<PooledEstimate, PoolError> {
    let measure = check_poolable(effects)?;
    let warnings = if het.single_study {
        vec![EstimateWarning::SingleStudyRandomEffects]
    } else {
        Vec::new()
    };
    Ok(inverse_variance_pool(
        effects,
        measure,
        het.tau2,
        ci_level,
        PoolingMethod::RandomEffects,
        warnings,
    ))
}

/// Convenience: DerSimonian-Laird tau2 followed by [`pool_random`].
pub fn pool_random_dl(
    effects: &[StudyEffect],
    ci_level: f64,
) -> Result<PooledEstimate, PoolError> {
    let het = tau2_dersimonian_laird(effects)?;
    pool_random(effects, &het, ci_level)
}
