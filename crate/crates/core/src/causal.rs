//! Arm-based causal aggregation.
//!
//! Instead of pooling per-study contrasts, event rates are aggregated per
//! arm across studies, `psi(a) = sum_k alpha_k psi_k(a)`, and the contrast
//! is applied once to the aggregated rates. The result estimates the
//! treatment effect on the explicit mixture `sum_k alpha_k P_k` of study
//! populations. For size-proportional weights (`alpha_k = n_k/n`) the
//! estimator has a closed-form asymptotic variance combining per-arm
//! sampling noise, between-study rate dispersion and the cross-arm
//! covariance through the delta method.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effects::{effective_arm_rates, CorrectionPolicy, EffectError};
use crate::model::{
    z_quantile, Arm, EstimateWarning, Measure, MetaDataset, PooledEstimate, PoolingMethod, Scale,
    StudyTable,
};

/// How the per-study aggregation weights `alpha_k` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// `alpha_k = 1/K`.
    Uniform,
    /// `alpha_k = n_k / n`, proportional to study size.
    Pooled,
    /// Caller-supplied weights; must be non-negative, length K, sum 1.
    Custom(Vec<f64>),
}

impl WeightScheme {
    /// Resolves the scheme to concrete weights for `dataset`.
    pub fn resolve(&self, dataset: &MetaDataset) -> Result<Vec<f64>, CausalError> {
        let k = dataset.k();
        if k == 0 {
            return Err(CausalError::EmptyDataset);
        }
        match self {
            WeightScheme::Uniform => Ok(vec![1.0 / k as f64; k]),
            WeightScheme::Pooled => {
                let n = dataset.n_total() as f64;
                Ok(dataset.studies.iter().map(|s| s.n_total() as f64 / n).collect())
            }
            WeightScheme::Custom(weights) => {
                if weights.len() != k {
                    return Err(CausalError::WeightLengthMismatch {
                        expected: k,
                        got: weights.len(),
                    });
                }
                if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                    return Err(CausalError::BadCustomWeights {
                        reason: "weights must be finite and non-negative".into(),
                    });
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(CausalError::BadCustomWeights {
                        reason: format!("weights sum to {sum}, expected 1"),
                    });
                }
                Ok(weights.clone())
            }
        }
    }

    /// True when the weights are the size-proportional ones the closed-form
    /// variance is derived for.
    pub fn is_pooled(&self) -> bool {
        matches!(self, WeightScheme::Pooled)
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = String;

    /// Accepts `uniform`, `pooled` or `custom:w1,w2,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if lower == "uniform" {
            return Ok(WeightScheme::Uniform);
        }
        if lower == "pooled" {
            return Ok(WeightScheme::Pooled);
        }
        if let Some(rest) = lower.strip_prefix("custom:") {
            let weights = rest
                .split(',')
                .map(|w| w.trim().parse::<f64>().map_err(|e| format!("bad weight `{w}`: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            if weights.is_empty() {
                return Err("custom weights list is empty".into());
            }
            return Ok(WeightScheme::Custom(weights));
        }
        Err(format!("unknown weight scheme `{s}` (expected uniform, pooled or custom:w1,w2,...)"))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CausalError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Effect(#[from] EffectError),
    #[error("custom weights: expected {expected} entries, got {got}")]
    WeightLengthMismatch { expected: usize, got: usize },
    #[error("custom weights: {reason}")]
    BadCustomWeights { reason: String },
    #[error("aggregated {arm} rate {psi} lies outside the domain of {measure}")]
    DomainError { arm: Arm, psi: f64, measure: Measure },
    #[error("per-study control rate is zero in study `{label}`; risk-ratio collapsibility weights undefined")]
    ZeroBaselineRate { label: String },
    #[error("collapsibility form exists only for rd and rr, not {measure}")]
    UnsupportedMeasure { measure: Measure },
    #[error("no variance rule for deterministic weights: enable the fixed-weight extension or the bootstrap")]
    VarianceUnavailable,
}

/// Nonparametric bootstrap settings (resample individuals within each
/// study arm).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: u32,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: 2000, seed: 0 }
    }
}

/// Options for the causal pooling path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalConfig {
    pub ci_level: f64,
    pub correction: CorrectionPolicy,
    /// For uniform/custom weights, use the deterministic-weight variance
    /// `sum_k alpha_k^2 psi_k(a)(1-psi_k(a))/n_k(a)` per arm. The
    /// closed-form variance below covers size-proportional weights only.
    pub fixed_weight_variance: bool,
    /// When set, uniform/custom-weight variance comes from the bootstrap
    /// instead of the fixed-weight formula.
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for CausalConfig {
    fn default() -> Self {
        Self {
            ci_level: 0.95,
            correction: CorrectionPolicy::Haldane,
            fixed_weight_variance: true,
            bootstrap: None,
        }
    }
}

/// Pieces of the closed-form asymptotic variance (of `sqrt(n)` times the
/// estimator) under size-proportional weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalVarianceParts {
    /// `(sigma2(1), sigma2(0))`: per-arm variances of `sqrt(n) psi_hat(a)`.
    pub sigma2_arm: (f64, f64),
    /// Cross-arm covariance induced by the shared random study sizes.
    pub gamma: f64,
    /// Contrast gradient `(v(1), v(0))` at the aggregated rates.
    pub gradient: (f64, f64),
    /// Delta-method combination; variance of `sqrt(n)` times the estimate.
    pub sigma2_total: f64,
    /// True when `sigma2_total` was clamped to zero after a negative
    /// floating-point cancellation.
    pub clamped: bool,
}

/// Aggregated event rates `(psi(1), psi(0))` from raw study rates.
pub fn pooled_arm_rates(
    dataset: &MetaDataset,
    scheme: &WeightScheme,
) -> Result<(f64, f64), CausalError> {
    let alpha = scheme.resolve(dataset)?;
    let mut psi1 = 0.0;
    let mut psi0 = 0.0;
    for (a, study) in alpha.iter().zip(&dataset.studies) {
        psi1 += a * (study.n11 as f64 / study.n_treated() as f64);
        psi0 += a * (study.n01 as f64 / study.n_control() as f64);
    }
    Ok((psi1, psi0))
}

/// Per-study rates after the zero-cell policy, `(psi_k(1), psi_k(0))`.
fn study_rates(
    dataset: &MetaDataset,
    measure: Measure,
    policy: CorrectionPolicy,
) -> Result<Vec<(f64, f64)>, CausalError> {
    dataset
        .studies
        .iter()
        .map(|s| effective_arm_rates(s, measure, policy).map(|(rates, _)| rates))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CausalError::from)
}

fn aggregate(alpha: &[f64], rates: &[(f64, f64)]) -> (f64, f64) {
    let psi1 = alpha.iter().zip(rates).map(|(a, r)| a * r.0).sum();
    let psi0 = alpha.iter().zip(rates).map(|(a, r)| a * r.1).sum();
    (psi1, psi0)
}

fn check_domain(measure: Measure, psi1: f64, psi0: f64) -> Result<(), CausalError> {
    if measure.domain_contains(psi1, psi0) {
        return Ok(());
    }
    // report the offending arm
    let bad_treated = match measure.pooling() {
        Measure::Rd => false,
        _ => !(psi1 > 0.0 && psi1 < 1.0),
    };
    if bad_treated {
        Err(CausalError::DomainError { arm: Arm::Treated, psi: psi1, measure })
    } else {
        Err(CausalError::DomainError { arm: Arm::Control, psi: psi0, measure })
    }
}

/// Closed-form variance parts for size-proportional weights, evaluated for
/// the contrast `measure` at the aggregated rates.
///
/// Per arm: `sigma2(a) = sum_k n_k^2/(n n_k(a)) psi_k(a)(1-psi_k(a))
/// + sum_k (n_k/n) psi_k(a)^2 - psi(a)^2`, and across arms
/// `gamma = sum_k (n_k/n) psi_k(1) psi_k(0) - psi(1) psi(0)`. The total is
/// `sigma2(1) v1^2 + sigma2(0) v0^2 + 2 gamma v1 v0` with `(v1, v0)` the
/// contrast gradient.
pub fn theorem2_variance(
    dataset: &MetaDataset,
    measure: Measure,
    policy: CorrectionPolicy,
) -> Result<CausalVarianceParts, CausalError> {
    if dataset.k() == 0 {
        return Err(CausalError::EmptyDataset);
    }
    let rates = study_rates(dataset, measure, policy)?;
    let alpha = WeightScheme::Pooled.resolve(dataset)?;
    let (psi1, psi0) = aggregate(&alpha, &rates);
    check_domain(measure, psi1, psi0)?;

    let n = dataset.n_total() as f64;
    let arm_sigma2 = |arm: Arm| {
        let mut sampling = 0.0;
        let mut second_moment = 0.0;
        let mut psi = 0.0;
        for (study, &(r1, r0)) in dataset.studies.iter().zip(&rates) {
            let nk = study.n_total() as f64;
            let (nka, rk) = match arm {
                Arm::Treated => (study.n_treated() as f64, r1),
                Arm::Control => (study.n_control() as f64, r0),
            };
            sampling += nk * nk / (n * nka) * rk * (1.0 - rk);
            second_moment += nk / n * rk * rk;
            psi += nk / n * rk;
        }
        (sampling + second_moment - psi * psi).max(0.0)
    };
    let sigma2_1 = arm_sigma2(Arm::Treated);
    let sigma2_0 = arm_sigma2(Arm::Control);
    let gamma = dataset
        .studies
        .iter()
        .zip(&rates)
        .map(|(s, &(r1, r0))| s.n_total() as f64 / n * r1 * r0)
        .sum::<f64>()
        - psi1 * psi0;
    let (v1, v0) = measure.gradient(psi1, psi0);
    let raw_total = sigma2_1 * v1 * v1 + sigma2_0 * v0 * v0 + 2.0 * gamma * v1 * v0;
    let clamped = raw_total < 0.0;
    Ok(CausalVarianceParts {
        sigma2_arm: (sigma2_1, sigma2_0),
        gamma,
        gradient: (v1, v0),
        sigma2_total: raw_total.max(0.0),
        clamped,
    })
}

/// Deterministic-weight variance of the aggregated rate per arm:
/// `sum_k alpha_k^2 psi_k(a)(1-psi_k(a))/n_k(a)`. Arms are independent
/// given the studies and the weights carry no randomness, so there is no
/// covariance term.
fn fixed_weight_arm_variances(
    dataset: &MetaDataset,
    alpha: &[f64],
    rates: &[(f64, f64)],
) -> (f64, f64) {
    let mut v1 = 0.0;
    let mut v0 = 0.0;
    for ((study, a), &(r1, r0)) in dataset.studies.iter().zip(alpha).zip(rates) {
        v1 += a * a * r1 * (1.0 - r1) / study.n_treated() as f64;
        v0 += a * a * r0 * (1.0 - r0) / study.n_control() as f64;
    }
    (v1, v0)
}

/// Bootstrap the pooling-scale point by resampling event counts within
/// each study arm. Returns the sample variance across replicates.
fn bootstrap_variance(
    dataset: &MetaDataset,
    measure: Measure,
    alpha: &[f64],
    config: &CausalConfig,
    boot: BootstrapConfig,
) -> f64 {
    assert!(boot.replicates >= 2, "bootstrap needs at least 2 replicates");
    let pooling = measure.pooling();
    let mut rng = ChaCha8Rng::seed_from_u64(boot.seed);
    let mut points = Vec::with_capacity(boot.replicates as usize);
    let raw_rates: Vec<(f64, f64)> = dataset
        .studies
        .iter()
        .map(|s| {
            (
                s.n11 as f64 / s.n_treated() as f64,
                s.n01 as f64 / s.n_control() as f64,
            )
        })
        .collect();
    for _ in 0..boot.replicates {
        let studies: Vec<StudyTable> = dataset
            .studies
            .iter()
            .zip(&raw_rates)
            .map(|(s, &(r1, r0))| {
                let n1 = s.n_treated();
                let n0 = s.n_control();
                let e1 = Binomial::new(n1, r1).expect("valid rate").sample(&mut rng);
                let e0 = Binomial::new(n0, r0).expect("valid rate").sample(&mut rng);
                StudyTable::new(s.label.clone(), e1, n1 - e1, e0, n0 - e0)
            })
            .collect();
        let resampled = MetaDataset::new(dataset.name.clone(), studies);
        let Ok(rates) = study_rates(&resampled, measure, config.correction) else {
            continue; // rejected zero cell; drop the replicate
        };
        let (psi1, psi0) = aggregate(alpha, &rates);
        if !pooling.domain_contains(psi1, psi0) {
            continue;
        }
        points.push(pooling.value(psi1, psi0));
    }
    let b = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mean = points.iter().sum::<f64>() / b;
    points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (b - 1.0)
}

/// Causal pooled estimate: contrast of the weighted per-arm rates.
///
/// Ratio measures are evaluated and intervals built on the log scale, then
/// exponentiated when the requested measure reports on the natural scale.
/// Size-proportional weights get the closed-form variance; uniform/custom
/// weights fall back to the flagged fixed-weight formula or a bootstrap.
pub fn pool_causal(
    dataset: &MetaDataset,
    measure: Measure,
    scheme: &WeightScheme,
    config: &CausalConfig,
) -> Result<PooledEstimate, CausalError> {
    let alpha = scheme.resolve(dataset)?;
    let rates = study_rates(dataset, measure, config.correction)?;
    let (psi1, psi0) = aggregate(&alpha, &rates);
    check_domain(measure, psi1, psi0)?;
    let pooling = measure.pooling();
    let point_pooling = pooling.value(psi1, psi0);

    let mut warnings = Vec::new();
    let variance = if scheme.is_pooled() {
        let parts = theorem2_variance(dataset, pooling, config.correction)?;
        if parts.clamped {
            warnings.push(EstimateWarning::VarianceClamped);
        }
        parts.sigma2_total / dataset.n_total() as f64
    } else if let Some(boot) = config.bootstrap {
        warnings.push(EstimateWarning::BootstrapVariance);
        bootstrap_variance(dataset, measure, &alpha, config, boot)
    } else if config.fixed_weight_variance {
        warnings.push(EstimateWarning::FixedWeightVariance);
        let (var1, var0) = fixed_weight_arm_variances(dataset, &alpha, &rates);
        let (v1, v0) = pooling.gradient(psi1, psi0);
        v1 * v1 * var1 + v0 * v0 * var0
    } else {
        return Err(CausalError::VarianceUnavailable);
    };

    let half = z_quantile(config.ci_level) * variance.sqrt();
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
    Ok(PooledEstimate {
        method: PoolingMethod::Causal,
        measure,
        point,
        variance,
        ci_low,
        ci_high,
        weights: alpha,
        tau2: None,
        scale,
        warnings,
    })
}

/// The same estimator written as a weighted sum of per-study contrasts
/// (size-proportional weights implied).
///
/// Risk difference: `sum_k alpha_k theta_RD,k`. Risk ratio:
/// `sum_k alpha_k (psi_k(0)/psi(0)) theta_RR,k`, the baseline-rate-tilted
/// weights under which the ratio collapses. The point must agree with
/// [`pool_causal`] to floating precision; the returned `weights` are the
/// per-study collapsibility weights, which is what forest plots display.
pub fn pool_causal_collapsibility(
    dataset: &MetaDataset,
    measure: Measure,
    config: &CausalConfig,
) -> Result<PooledEstimate, CausalError> {
    if !matches!(measure, Measure::Rd | Measure::Rr) {
        return Err(CausalError::UnsupportedMeasure { measure });
    }
    let scheme = WeightScheme::Pooled;
    let alpha = scheme.resolve(dataset)?;
    let rates = study_rates(dataset, measure, config.correction)?;
    let (psi1, psi0) = aggregate(&alpha, &rates);
    check_domain(measure, psi1, psi0)?;

    let (point, coll_weights) = match measure {
        Measure::Rd => {
            let point = alpha.iter().zip(&rates).map(|(a, r)| a * (r.0 - r.1)).sum();
            (point, alpha.clone())
        }
        Measure::Rr => {
            for (study, r) in dataset.studies.iter().zip(&rates) {
                if r.1 <= 0.0 {
                    return Err(CausalError::ZeroBaselineRate { label: study.label.clone() });
                }
            }
            let weights: Vec<f64> =
                alpha.iter().zip(&rates).map(|(a, r)| a * r.1 / psi0).collect();
            let point = weights.iter().zip(&rates).map(|(w, r)| w * (r.0 / r.1)).sum();
            (point, weights)
        }
        _ => unreachable!(),
    };

    // uncertainty is that of the identical pool_causal estimate
    let reference = pool_causal(dataset, measure, &scheme, config)?;
    Ok(PooledEstimate { point, weights: coll_weights, ..reference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MetaDataset;
    use approx::assert_relative_eq;

    fn ds(studies: &[(u64, u64, u64, u64)]) -> MetaDataset {
        MetaDataset::new(
            "test",
            studies
                .iter()
                .enumerate()
                .map(|(i, &(n11, n10, n01, n00))| {
                    StudyTable::new(format!("s{i}"), n11, n10, n01, n00)
                })
                .collect(),
        )
    }

    /// Two equal-size studies with treated rates (0.2, 0.6) and control
    /// rates (0.1, 0.5).
    fn two_study_example() -> MetaDataset {
        ds(&[(20, 80, 10, 90), (60, 40, 50, 50)])
    }

    #[test]
    fn pooled_arm_rates_single_study_is_identity() {
        let d = ds(&[(10, 10, 5, 15)]);
        for scheme in [WeightScheme::Uniform, WeightScheme::Pooled, WeightScheme::Custom(vec![1.0])] {
            let (p1, p0) = pooled_arm_rates(&d, &scheme).unwrap();
            assert_eq!((p1, p0), (0.5, 0.25));
        }
    }

    #[test]
    fn pooled_arm_rates_equal_sizes() {
        let (p1, p0) = pooled_arm_rates(&two_study_example(), &WeightScheme::Pooled).unwrap();
        assert_relative_eq!(p1, 0.4);
        assert_relative_eq!(p0, 0.3);
    }

    #[test]
    fn pooled_arm_rates_point_mass() {
        let scheme = WeightScheme::Custom(vec![1.0, 0.0]);
        let (p1, _) = pooled_arm_rates(&two_study_example(), &scheme).unwrap();
        assert_relative_eq!(p1, 0.2);
    }

    #[test]
    fn weight_scheme_parsing() {
        assert_eq!("uniform".parse::<WeightScheme>().unwrap(), WeightScheme::Uniform);
        assert_eq!("pooled".parse::<WeightScheme>().unwrap(), WeightScheme::Pooled);
        assert_eq!(
            "custom:0.3,0.7".parse::<WeightScheme>().unwrap(),
            WeightScheme::Custom(vec![0.3, 0.7])
        );
        assert!("magic".parse::<WeightScheme>().is_err());
        assert!("custom:a,b".parse::<WeightScheme>().is_err());
    }

    #[test]
    fn custom_weight_validation() {
        let d = two_study_example();
        assert!(matches!(
            WeightScheme::Custom(vec![0.3, 0.3, 0.4]).resolve(&d),
            Err(CausalError::WeightLengthMismatch { expected: 2, got: 3 })
        ));
        assert!(matches!(
            WeightScheme::Custom(vec![0.7, 0.7]).resolve(&d),
            Err(CausalError::BadCustomWeights { .. })
        ));
        assert!(matches!(
            WeightScheme::Custom(vec![-0.5, 1.5]).resolve(&d),
            Err(CausalError::BadCustomWeights { .. })
        ));
    }

    #[test]
    fn null_effect_dataset() {
        let d = ds(&[(10, 30, 10, 30), (25, 75, 25, 75)]);
        let cfg = CausalConfig::default();
        let rd = pool_causal(&d, Measure::Rd, &WeightScheme::Pooled, &cfg).unwrap();
        assert_relative_eq!(rd.point, 0.0);
        let rr = pool_causal(&d, Measure::Rr, &WeightScheme::Pooled, &cfg).unwrap();
        assert_relative_eq!(rr.point, 1.0);
        let or = pool_causal(&d, Measure::Or, &WeightScheme::Pooled, &cfg).unwrap();
        assert_relative_eq!(or.point, 1.0);
    }

    /// Aggregated rates 0.4 vs 0.3 give RR 4/3, in contrast to the
    /// equal-weight log-scale pooled RR sqrt(0.2*0.6/(0.1*0.5)).
    #[test]
    fn two_study_rr_versus_classical_closed_form() {
        let cfg = CausalConfig::default();
        let rr = pool_causal(&two_study_example(), Measure::Rr, &WeightScheme::Pooled, &cfg)
            .unwrap();
        assert_relative_eq!(rr.point, 4.0 / 3.0, max_relative = 1e-12);

        let classical_limit = (0.2_f64 * 0.6 / (0.1 * 0.5)).sqrt();
        assert_relative_eq!(classical_limit, 2.4_f64.sqrt());
        assert!((classical_limit - 1.549).abs() < 1e-3);
        assert!(rr.point < classical_limit);
    }

    /// With one study the arm variance reduces to `n/n(a) psi(1-psi)` and
    /// the covariance vanishes; for RD the total matches the single-study
    /// binomial variance scaled by n.
    #[test]
    fn theorem2_single_study_reduces_to_binomial() {
        let d = ds(&[(10, 10, 5, 15)]);
        let parts = theorem2_variance(&d, Measure::Rd, CorrectionPolicy::Haldane).unwrap();
        let n = 40.0;
        let (psi1, psi0) = (0.5, 0.25);
        assert_relative_eq!(parts.sigma2_arm.0, n / 20.0 * psi1 * (1.0 - psi1), max_relative = 1e-12);
        assert_relative_eq!(parts.sigma2_arm.1, n / 20.0 * psi0 * (1.0 - psi0), max_relative = 1e-12);
        assert!(parts.gamma.abs() < 1e-15);
        let single_study_rd_var = psi1 * (1.0 - psi1) / 20.0 + psi0 * (1.0 - psi0) / 20.0;
        assert_relative_eq!(parts.sigma2_total, n * single_study_rd_var, max_relative = 1e-12);
    }

    #[test]
    fn theorem2_degenerate_equal_rates_give_zero_arm_variance() {
        // every treated arm has all events: rate exactly 1 in both studies
        let d = ds(&[(20, 0, 5, 15), (30, 0, 10, 20)]);
        let parts = theorem2_variance(&d, Measure::Rd, CorrectionPolicy::Haldane).unwrap();
        assert_eq!(parts.sigma2_arm.0, 0.0);
        assert!(parts.sigma2_arm.1 > 0.0);
    }

    #[test]
    fn collapsibility_matches_pool_causal() {
        let cfg = CausalConfig::default();
        for d in [
            two_study_example(),
            ds(&[(10, 10, 5, 15)]),
            ds(&[(3, 17, 9, 1), (40, 60, 30, 70), (7, 3, 2, 8)]),
        ] {
            for m in [Measure::Rd, Measure::Rr] {
                let direct = pool_causal(&d, m, &WeightScheme::Pooled, &cfg).unwrap();
                let coll = pool_causal_collapsibility(&d, m, &cfg).unwrap();
                let tol = 1e-12 * direct.point.abs().max(1.0);
                assert!(
                    (direct.point - coll.point).abs() <= tol,
                    "{m}: {} vs {}",
                    direct.point,
                    coll.point
                );
                let sum: f64 = coll.weights.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert_eq!(direct.ci_low, coll.ci_low);
                assert_eq!(direct.ci_high, coll.ci_high);
            }
        }
    }

    #[test]
    fn collapsibility_rd_hand_check() {
        // equal sizes, per-study RDs -0.1 and +0.3 -> pooled 0.1
        let d = ds(&[(10, 90, 20, 80), (50, 50, 20, 80)]);
        let coll = pool_causal_collapsibility(&d, Measure::Rd, &CausalConfig::default()).unwrap();
        assert_relative_eq!(coll.point, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn collapsibility_rejects_or() {
        let err = pool_causal_collapsibility(&two_study_example(), Measure::Or, &CausalConfig::default())
            .unwrap_err();
        assert_eq!(err, CausalError::UnsupportedMeasure { measure: Measure::Or });
    }

    /// Custom weights equal to the realized size shares give the same point
    /// as the pooled scheme.
    #[test]
    fn custom_weights_matching_sizes_reproduce_pooled() {
        let d = ds(&[(12, 28, 9, 31), (40, 160, 55, 145)]);
        let cfg = CausalConfig::default();
        let realized = WeightScheme::Pooled.resolve(&d).unwrap();
        let pooled = pool_causal(&d, Measure::Rd, &WeightScheme::Pooled, &cfg).unwrap();
        let custom = pool_causal(&d, Measure::Rd, &WeightScheme::Custom(realized), &cfg).unwrap();
        assert_eq!(pooled.point, custom.point);
        assert!(custom.warnings.contains(&EstimateWarning::FixedWeightVariance));
        assert!(!pooled.warnings.contains(&EstimateWarning::FixedWeightVariance));
    }

    /// For a single study the fixed-weight extension and the closed form
    /// agree exactly: both reduce to the binomial delta-method variance.
    #[test]
    fn single_study_fixed_weight_matches_closed_form() {
        let d = ds(&[(10, 10, 5, 15)]);
        let cfg = CausalConfig::default();
        for m in Measure::ALL {
            let pooled = pool_causal(&d, m, &WeightScheme::Pooled, &cfg).unwrap();
            let uniform = pool_causal(&d, m, &WeightScheme::Uniform, &cfg).unwrap();
            assert_relative_eq!(pooled.variance, uniform.variance, max_relative = 1e-12);
            assert_relative_eq!(pooled.point, uniform.point, max_relative = 1e-15);
        }
    }

    #[test]
    fn sign_consistency_across_measures() {
        let cfg = CausalConfig::default();
        for d in [two_study_example(), ds(&[(5, 95, 30, 70), (10, 90, 40, 60)])] {
            let rd = pool_causal(&d, Measure::Rd, &WeightScheme::Pooled, &cfg).unwrap();
            let rr = pool_causal(&d, Measure::Rr, &WeightScheme::Pooled, &cfg).unwrap();
            let or = pool_causal(&d, Measure::Or, &WeightScheme::Pooled, &cfg).unwrap();
            assert_eq!(rd.point.signum(), rr.point.ln().signum());
            assert_eq!(rd.point.signum(), or.point.ln().signum());
        }
    }

    #[test]
    fn domain_error_on_all_events_arm_for_ratio() {
        // treated arms all events in every study; no zero event cell, so no
        // correction fires and the aggregated treated rate is exactly 1
        let d = ds(&[(5, 0, 3, 2), (4, 0, 2, 3)]);
        let cfg = CausalConfig::default();
        let err = pool_causal(&d, Measure::Rr, &WeightScheme::Pooled, &cfg).unwrap_err();
        assert!(
            matches!(err, CausalError::DomainError { arm: Arm::Treated, .. }),
            "got {err:?}"
        );
        // the risk difference is still defined
        let rd = pool_causal(&d, Measure::Rd, &WeightScheme::Pooled, &cfg).unwrap();
        assert!(rd.point > 0.0);
    }

    #[test]
    fn reject_policy_propagates_zero_cell_error() {
        let d = ds(&[(0, 20, 5, 15)]);
        let cfg = CausalConfig { correction: CorrectionPolicy::Reject, ..CausalConfig::default() };
        let err = pool_causal(&d, Measure::Rr, &WeightScheme::Pooled, &cfg).unwrap_err();
        assert!(matches!(err, CausalError::Effect(_)));
    }

    #[test]
    fn haldane_keeps_ratio_measures_defined() {
        let d = ds(&[(0, 20, 5, 15), (10, 10, 0, 20)]);
        let cfg = CausalConfig::default();
        let rr = pool_causal(&d, Measure::Rr, &WeightScheme::Pooled, &cfg).unwrap();
        assert!(rr.point.is_finite() && rr.point > 0.0);
    }

    #[test]
    fn variance_unavailable_when_extension_disabled() {
        let cfg = CausalConfig { fixed_weight_variance: false, ..CausalConfig::default() };
        let err = pool_causal(&two_study_example(), Measure::Rd, &WeightScheme::Uniform, &cfg)
            .unwrap_err();
        assert_eq!(err, CausalError::VarianceUnavailable);
    }

    #[test]
    fn bootstrap_variance_is_deterministic_and_sane() {
        let cfg = CausalConfig {
            bootstrap: Some(BootstrapConfig { replicates: 500, seed: 42 }),
            ..CausalConfig::default()
        };
        let run = || {
            pool_causal(&two_study_example(), Measure::Rd, &WeightScheme::Uniform, &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.variance, b.variance);
        assert!(a.variance > 0.0);
        assert!(a.warnings.contains(&EstimateWarning::BootstrapVariance));
        assert!(a.ci_low <= a.point && a.point <= a.ci_high);

        // bootstrap variance should roughly match the fixed-weight formula
        let analytic =
            pool_causal(&two_study_example(), Measure::Rd, &WeightScheme::Uniform, &CausalConfig::default())
                .unwrap();
        let ratio = a.variance / analytic.variance;
        assert!((0.5..2.0).contains(&ratio), "bootstrap/analytic variance ratio {ratio}");
    }

    #[test]
    fn ratio_ci_is_positive_and_ordered() {
        let cfg = CausalConfig::default();
        for m in [Measure::Rr, Measure::Or] {
            let p = pool_causal(&two_study_example(), m, &WeightScheme::Pooled, &cfg).unwrap();
            assert!(p.ci_low > 0.0);
            assert!(p.ci_low <= p.point && p.point <= p.ci_high);
            assert_eq!(p.scale, Scale::Log);
        }
    }
}
