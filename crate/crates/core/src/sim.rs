//! Simulation lab: a two-study data-generating process where classical and
//! arm-based pooling answer different questions, a solver for the implied
//! target-population share of a pooled log risk ratio, and Monte Carlo
//! calibration of the closed-form variance.
//!
//! Everything here is a pure function of (parameters, seed). Replications
//! run in parallel with per-replication seeds derived by splitmix64, and
//! results are reduced in replication order, so reports are identical
//! regardless of scheduling.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussHermite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{pool_causal, CausalConfig, WeightScheme};
use crate::classical::{pool_fixed, pool_random_dl};
use crate::effects::{study_effects, CorrectionPolicy};
use crate::model::{Arm, Measure, MetaDataset, PoolingMethod, StudyTable};

/// Numerically stable logistic function.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// splitmix64 step, used to scatter per-replication seeds.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Well-separated seed for replication `stream` of a run seeded by `seed`.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(1)))
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    BadParameters(String),
    #[error("degenerate draw: study `{label}` {arm} arm empty after {attempts} attempt(s)")]
    DegenerateDraw { label: String, arm: Arm, attempts: u32 },
    #[error("replication failed after {attempts} attempt(s): {reason}")]
    ReplicationFailed { attempts: u32, reason: String },
}

/// Two-study logistic-Gaussian data-generating process.
///
/// Study membership `H` is 1 with probability `p_study`, else 2. Given
/// `H = k`, the covariates are `X ~ N(m_k, eta^2 I_2)`. Treatment `A` is
/// Bernoulli(`p_treat`) independent of `X`, and the outcome is
/// `Y ~ Bernoulli(sigma(X' beta_A))`. The outcome model is shared across
/// studies; only the covariate distributions differ, so per-study effects
/// and the mixture-population effect can point in opposite directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchDgp {
    pub m1: [f64; 2],
    pub m2: [f64; 2],
    pub eta: f64,
    pub beta1: [f64; 2],
    pub beta0: [f64; 2],
    pub n: u64,
    pub p_study: f64,
    pub p_treat: f64,
}

impl Default for MismatchDgp {
    fn default() -> Self {
        Self {
            m1: [1.0, 0.0],
            m2: [0.0, 1.0],
            eta: 0.1,
            beta1: [0.36, -1.38],
            beta0: [2.94, -4.60],
            n: 1000,
            p_study: 0.5,
            p_treat: 0.5,
        }
    }
}

impl MismatchDgp {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(SimError::BadParameters(format!("eta must be positive, got {}", self.eta)));
        }
        if self.n < 4 {
            return Err(SimError::BadParameters(format!("n must be at least 4, got {}", self.n)));
        }
        for (name, p) in [("p_study", self.p_study), ("p_treat", self.p_treat)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(SimError::BadParameters(format!("{name} must be in (0,1), got {p}")));
            }
        }
        Ok(())
    }

    fn mean(&self, study: usize) -> [f64; 2] {
        if study == 0 { self.m1 } else { self.m2 }
    }

    fn beta(&self, arm: Arm) -> [f64; 2] {
        match arm {
            Arm::Treated => self.beta1,
            Arm::Control => self.beta0,
        }
    }
}

/// What to do when a drawn meta-analysis has an empty study arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegeneratePolicy {
    /// Redraw the whole meta-analysis with an incremented seed, up to
    /// `max_attempts` times.
    Resample { max_attempts: u32 },
    /// Fail immediately.
    Error,
}

impl Default for DegeneratePolicy {
    fn default() -> Self {
        DegeneratePolicy::Resample { max_attempts: 100 }
    }
}

/// A drawn meta-analysis plus how many degenerate draws were discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMeta {
    pub dataset: MetaDataset,
    pub resamples: u32,
}

fn draw_dataset(dgp: &MismatchDgp, seed: u64) -> MetaDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // counts[k][a][y]
    let mut counts = [[[0u64; 2]; 2]; 2];
    for _ in 0..dgp.n {
        let k = if rng.random_bool(dgp.p_study) { 0 } else { 1 };
        let m = dgp.mean(k);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let x = [m[0] + dgp.eta * z1, m[1] + dgp.eta * z2];
        let treated = rng.random_bool(dgp.p_treat);
        let beta = dgp.beta(if treated { Arm::Treated } else { Arm::Control });
        let y = rng.random_bool(logistic(x[0] * beta[0] + x[1] * beta[1]));
        counts[k][treated as usize][y as usize] += 1;
    }
    let study = |k: usize| {
        StudyTable::new(
            format!("study-{}", k + 1),
            counts[k][1][1],
            counts[k][1][0],
            counts[k][0][1],
            counts[k][0][0],
        )
    };
    MetaDataset::new("mismatch", vec![study(0), study(1)])
}

fn first_empty_arm(dataset: &MetaDataset) -> Option<(String, Arm)> {
    for s in &dataset.studies {
        if s.n_treated() == 0 {
            return Some((s.label.clone(), Arm::Treated));
        }
        if s.n_control() == 0 {
            return Some((s.label.clone(), Arm::Control));
        }
    }
    None
}

/// Draws one meta-analysis from the process; deterministic given `seed`.
pub fn simulate_meta_with(
    dgp: &MismatchDgp,
    seed: u64,
    policy: DegeneratePolicy,
) -> Result<SimulatedMeta, SimError> {
    dgp.validate()?;
    let max_attempts = match policy {
        DegeneratePolicy::Resample { max_attempts } => max_attempts.max(1),
        DegeneratePolicy::Error => 1,
    };
    let mut last = None;
    for attempt in 0..max_attempts {
        let dataset = draw_dataset(dgp, seed.wrapping_add(attempt as u64));
        match first_empty_arm(&dataset) {
            None => return Ok(SimulatedMeta { dataset, resamples: attempt }),
            Some(bad) => last = Some(bad),
        }
    }
    let (label, arm) = last.expect("at least one attempt");
    Err(SimError::DegenerateDraw { label, arm, attempts: max_attempts })
}

/// [`simulate_meta_with`] under the default resample policy.
pub fn simulate_meta(dgp: &MismatchDgp, seed: u64) -> Result<MetaDataset, SimError> {
    simulate_meta_with(dgp, seed, DegeneratePolicy::default()).map(|s| s.dataset)
}

const GH_NODES: usize = 40;

fn gh_pairs() -> &'static [(f64, f64)] {
    static PAIRS: OnceLock<Box<[(f64, f64)]>> = OnceLock::new();
    PAIRS.get_or_init(|| {
        GaussHermite::new(NonZeroUsize::new(GH_NODES).expect("nonzero"))
            .into_node_weight_pairs()
    })
}

/// `E[sigma(X' beta)]` for `X ~ N(m, eta^2 I_2)` by tensor-product
/// Gauss-Hermite quadrature (physicists' weight; `E f(Z) = pi^-1
/// sum w_i w_j f(sqrt2 x_i, sqrt2 x_j)` in two dimensions).
fn logistic_normal_mean(m: [f64; 2], beta: [f64; 2], eta: f64) -> f64 {
    let pairs = gh_pairs();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for &(xi, wi) in pairs {
        let x1 = m[0] + eta * sqrt2 * xi;
        let mut inner = 0.0;
        for &(xj, wj) in pairs {
            let x2 = m[1] + eta * sqrt2 * xj;
            inner += wj * logistic(x1 * beta[0] + x2 * beta[1]);
        }
        total += wi * inner;
    }
    total / std::f64::consts::PI
}

/// Study shares implied by a weight scheme at the process level: uniform
/// halves, the membership probabilities for size-proportional weights, or
/// the custom weights themselves.
fn study_shares(dgp: &MismatchDgp, scheme: &WeightScheme) -> Result<[f64; 2], SimError> {
    match scheme {
        WeightScheme::Uniform => Ok([0.5, 0.5]),
        WeightScheme::Pooled => Ok([dgp.p_study, 1.0 - dgp.p_study]),
        WeightScheme::Custom(w) => {
            if w.len() != 2 {
                return Err(SimError::BadParameters(format!(
                    "custom shares need 2 entries for the two-study process, got {}",
                    w.len()
                )));
            }
            if (w[0] + w[1] - 1.0).abs() > 1e-12 || w[0] < 0.0 || w[1] < 0.0 {
                return Err(SimError::BadParameters(
                    "custom shares must be non-negative and sum to 1".into(),
                ));
            }
            Ok([w[0], w[1]])
        }
    }
}

/// Population arm rates `(psi(1), psi(0))` of the weighted study mixture.
pub fn true_arm_rates(
    dgp: &MismatchDgp,
    scheme: &WeightScheme,
) -> Result<(f64, f64), SimError> {
    dgp.validate()?;
    let shares = study_shares(dgp, scheme)?;
    let rate = |k: usize, arm: Arm| logistic_normal_mean(dgp.mean(k), dgp.beta(arm), dgp.eta);
    let psi1 = shares[0] * rate(0, Arm::Treated) + shares[1] * rate(1, Arm::Treated);
    let psi0 = shares[0] * rate(0, Arm::Control) + shares[1] * rate(1, Arm::Control);
    Ok((psi1, psi0))
}

/// The process-level treatment effect on the weighted study mixture.
pub fn true_effect(
    dgp: &MismatchDgp,
    measure: Measure,
    scheme: &WeightScheme,
) -> Result<f64, SimError> {
    let (psi1, psi0) = true_arm_rates(dgp, scheme)?;
    Ok(measure.value(psi1, psi0))
}

/// Outcome rates `mu(a, x)` for a single binary covariate `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuTable {
    /// mu(1, 1): treated rate when x = 1.
    pub mu11: f64,
    /// mu(1, 0): treated rate when x = 0.
    pub mu10: f64,
    /// mu(0, 1): control rate when x = 1.
    pub mu01: f64,
    /// mu(0, 0): control rate when x = 0.
    pub mu00: f64,
}

impl MuTable {
    pub fn new(mu11: f64, mu10: f64, mu01: f64, mu00: f64) -> Self {
        Self { mu11, mu10, mu01, mu00 }
    }

    /// Treated-arm event rate in a population with `P(X=1) = p`.
    pub fn treated_rate(&self, p: f64) -> f64 {
        p * self.mu11 + (1.0 - p) * self.mu10
    }

    /// Control-arm event rate in a population with `P(X=1) = p`.
    pub fn control_rate(&self, p: f64) -> f64 {
        p * self.mu01 + (1.0 - p) * self.mu00
    }

    fn all_interior(&self) -> bool {
        [self.mu11, self.mu10, self.mu01, self.mu00]
            .iter()
            .all(|m| *m > 0.0 && *m < 1.0)
    }
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum PstarError {
    #[error("no population share in [0, 1] reproduces the pooled log risk ratio")]
    NoSolution,
    #[error("degenerate equation: the linear coefficient in p is zero")]
    DegenerateEquation,
}

/// Finds the covariate share `p*` whose population risk ratio equals the
/// equal-weight log-scale pooled risk ratio of two populations with shares
/// `p1` and `p2`.
///
/// With `r(p)` the population risk ratio, the pooled value is
/// `T = sqrt(r(p1) r(p2))` and `p*` solves the linear equation
/// `treated_rate(p) = T * control_rate(p)`. When `p1 = p2 = p` the unique
/// solution is `p` itself; otherwise `p*` generally moves when the outcome
/// rates change, even with `T` held fixed.
pub fn solve_pstar(p1: f64, p2: f64, mu: &MuTable) -> Result<f64, PstarError> {
    assert!(p1 > 0.0 && p1 < 1.0, "p1 must be in (0,1), got {p1}");
    assert!(p2 > 0.0 && p2 < 1.0, "p2 must be in (0,1), got {p2}");
    assert!(mu.all_interior(), "mu rates must be in (0,1): {mu:?}");
    let r = |p: f64| mu.treated_rate(p) / mu.control_rate(p);
    let t = (r(p1) * r(p2)).sqrt();
    let coeff = (mu.mu11 - mu.mu10) - t * (mu.mu01 - mu.mu00);
    if coeff == 0.0 {
        return Err(PstarError::DegenerateEquation);
    }
    let p = (t * mu.mu00 - mu.mu10) / coeff;
    if !(0.0..=1.0).contains(&p) {
        return Err(PstarError::NoSolution);
    }
    Ok(p)
}

/// Fixed two-study sampling specification: study shares, treatment
/// fraction and per-study arm rates, sampled at the individual level so
/// study sizes are genuinely random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStudyRates {
    pub shares: [f64; 2],
    pub treat_frac: f64,
    pub treated_rates: [f64; 2],
    pub control_rates: [f64; 2],
    pub n: u64,
}

impl Default for TwoStudyRates {
    fn default() -> Self {
        Self {
            shares: [0.5, 0.5],
            treat_frac: 0.5,
            treated_rates: [0.2, 0.6],
            control_rates: [0.1, 0.5],
            n: 2000,
        }
    }
}

impl TwoStudyRates {
    pub fn validate(&self) -> Result<(), SimError> {
        if (self.shares[0] + self.shares[1] - 1.0).abs() > 1e-12
            || self.shares.iter().any(|s| !(*s > 0.0 && *s < 1.0))
        {
            return Err(SimError::BadParameters("shares must be in (0,1) and sum to 1".into()));
        }
        if !(self.treat_frac > 0.0 && self.treat_frac < 1.0) {
            return Err(SimError::BadParameters("treat_frac must be in (0,1)".into()));
        }
        for r in self.treated_rates.iter().chain(&self.control_rates) {
            if !(*r > 0.0 && *r < 1.0) {
                return Err(SimError::BadParameters(format!("arm rate {r} must be in (0,1)")));
            }
        }
        if self.n < 4 {
            return Err(SimError::BadParameters(format!("n must be at least 4, got {}", self.n)));
        }
        Ok(())
    }

    /// Population arm rates of the share-weighted mixture.
    pub fn mixture_rates(&self) -> (f64, f64) {
        (
            self.shares[0] * self.treated_rates[0] + self.shares[1] * self.treated_rates[1],
            self.shares[0] * self.control_rates[0] + self.shares[1] * self.control_rates[1],
        )
    }

    /// Draws one two-study dataset at the configured rates. Degenerate
    /// arms are possible and left to the caller.
    pub fn draw(&self, seed: u64) -> MetaDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = [[[0u64; 2]; 2]; 2];
        for _ in 0..self.n {
            let k = if rng.random_bool(self.shares[0]) { 0 } else { 1 };
            let treated = rng.random_bool(self.treat_frac);
            let p = if treated { self.treated_rates[k] } else { self.control_rates[k] };
            let y = rng.random_bool(p);
            counts[k][treated as usize][y as usize] += 1;
        }
        let study = |k: usize| {
            StudyTable::new(
                format!("study-{}", k + 1),
                counts[k][1][1],
                counts[k][1][0],
                counts[k][0][1],
                counts[k][0][0],
            )
        };
        MetaDataset::new("two-study", vec![study(0), study(1)])
    }
}

/// What [`calibrate_theorem2`] replicates from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CalibrationTarget {
    Dgp(MismatchDgp),
    Rates(TwoStudyRates),
}

impl CalibrationTarget {
    fn validate(&self) -> Result<(), SimError> {
        match self {
            CalibrationTarget::Dgp(d) => d.validate(),
            CalibrationTarget::Rates(r) => r.validate(),
        }
    }

    fn n(&self) -> u64 {
        match self {
            CalibrationTarget::Dgp(d) => d.n,
            CalibrationTarget::Rates(r) => r.n,
        }
    }

    fn true_pooled_rates(&self) -> Result<(f64, f64), SimError> {
        match self {
            CalibrationTarget::Dgp(d) => true_arm_rates(d, &WeightScheme::Pooled),
            CalibrationTarget::Rates(r) => Ok(r.mixture_rates()),
        }
    }

    fn draw(&self, seed: u64) -> Result<MetaDataset, SimError> {
        match self {
            CalibrationTarget::Dgp(d) => {
                simulate_meta_with(d, seed, DegeneratePolicy::Error).map(|s| s.dataset)
            }
            CalibrationTarget::Rates(r) => {
                let ds = r.draw(seed);
                match first_empty_arm(&ds) {
                    None => Ok(ds),
                    Some((label, arm)) => Err(SimError::DegenerateDraw { label, arm, attempts: 1 }),
                }
            }
        }
    }
}

/// Agreement between the closed-form variance and the Monte Carlo truth.
///
/// `empirical_variance` is the sample variance of `sqrt(n) (theta_hat -
/// theta)` across replications; `mean_sigma2` averages the closed-form
/// `sigma2` estimates; their ratio should approach 1. All points live on
/// the pooling scale of the requested measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub measure: Measure,
    pub replications: u32,
    pub n: u64,
    pub ci_level: f64,
    pub theta_true: f64,
    pub mean_point: f64,
    pub empirical_variance: f64,
    pub mean_sigma2: f64,
    pub ratio: f64,
    pub coverage: f64,
    /// Replication attempts discarded for degenerate draws or estimation
    /// failures across the whole run.
    pub discarded_attempts: u64,
}

/// Monte Carlo check of the closed-form variance and its interval
/// coverage under size-proportional weights.
pub fn calibrate_theorem2(
    target: &CalibrationTarget,
    measure: Measure,
    replications: u32,
    seed: u64,
) -> Result<CalibrationReport, SimError> {
    calibrate_theorem2_at(target, measure, replications, seed, 0.95)
}

/// [`calibrate_theorem2`] at a configurable interval level.
pub fn calibrate_theorem2_at(
    target: &CalibrationTarget,
    measure: Measure,
    replications: u32,
    seed: u64,
    ci_level: f64,
) -> Result<CalibrationReport, SimError> {
    target.validate()?;
    if replications < 2 {
        return Err(SimError::BadParameters(format!(
            "need at least 2 replications, got {replications}"
        )));
    }
    let pooling = measure.pooling();
    let (psi1, psi0) = target.true_pooled_rates()?;
    let theta_true = pooling.value(psi1, psi0);
    let n = target.n();
    let causal_cfg = CausalConfig { ci_level, ..CausalConfig::default() };

    struct Rep {
        point: f64,
        sigma2: f64,
        covered: bool,
        discarded: u64,
    }

    let reps: Vec<Rep> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, r as u64);
            let mut discarded = 0u64;
            for attempt in 0..100u64 {
                let draw_seed = rep_seed.wrapping_add(attempt);
                let Ok(ds) = target.draw(draw_seed) else {
                    discarded += 1;
                    continue;
                };
                let Ok(est) = pool_causal(&ds, pooling, &WeightScheme::Pooled, &causal_cfg)
                else {
                    discarded += 1;
                    continue;
                };
                return Ok(Rep {
                    point: est.point,
                    sigma2: est.variance * ds.n_total() as f64,
                    covered: est.ci_low <= theta_true && theta_true <= est.ci_high,
                    discarded,
                });
            }
            Err(SimError::ReplicationFailed {
                attempts: 100,
                reason: "every draw was degenerate or outside the measure's domain".into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let b = reps.len() as f64;
    let sqrt_n = (n as f64).sqrt();
    let devs: Vec<f64> = reps.iter().map(|r| sqrt_n * (r.point - theta_true)).collect();
    let mean_dev = devs.iter().sum::<f64>() / b;
    let empirical_variance =
        devs.iter().map(|d| (d - mean_dev).powi(2)).sum::<f64>() / (b - 1.0);
    let mean_sigma2 = reps.iter().map(|r| r.sigma2).sum::<f64>() / b;
    let coverage = reps.iter().filter(|r| r.covered).count() as f64 / b;
    let mean_point = reps.iter().map(|r| r.point).sum::<f64>() / b;
    let discarded_attempts = reps.iter().map(|r| r.discarded).sum();

    Ok(CalibrationReport {
        measure,
        replications,
        n,
        ci_level,
        theta_true,
        mean_point,
        empirical_variance,
        mean_sigma2,
        ratio: empirical_variance / mean_sigma2,
        coverage,
        discarded_attempts,
    })
}

/// One pooled point from one replication of the mismatch experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub replication: u32,
    pub method: PoolingMethod,
    pub measure: Measure,
    /// Natural-scale point (ratio measures exponentiated).
    pub point: f64,
}

/// Median of the replicated points for one (method, measure) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianSummary {
    pub method: PoolingMethod,
    pub measure: Measure,
    pub median: f64,
}

/// Settings for the replicated mismatch experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchConfig {
    pub dgp: MismatchDgp,
    pub replications: u32,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for MismatchConfig {
    fn default() -> Self {
        Self { dgp: MismatchDgp::default(), replications: 100, seed: 0, ci_level: 0.95 }
    }
}

/// Full output of the mismatch experiment: process-level truths, the
/// per-replication points for all (method, measure) cells, and their
/// medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub config: MismatchConfig,
    /// True mixture-population effects (uniform shares equal the membership
    /// probabilities at the default half/half split).
    pub true_rd: f64,
    pub true_rr: f64,
    pub true_or: f64,
    pub medians: Vec<MedianSummary>,
    pub points: Vec<EstimatePoint>,
    pub discarded_attempts: u64,
}

impl MismatchReport {
    /// Median for one cell; panics if the cell is absent.
    pub fn median(&self, method: PoolingMethod, measure: Measure) -> f64 {
        self.medians
            .iter()
            .find(|m| m.method == method && m.measure == measure)
            .map(|m| m.median)
            .unwrap_or_else(|| panic!("no median for {method} {measure}"))
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN points"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

const MISMATCH_MEASURES: [Measure; 3] = [Measure::Rd, Measure::Rr, Measure::Or];
const MISMATCH_METHODS: [PoolingMethod; 3] =
    [PoolingMethod::FixedEffects, PoolingMethod::RandomEffects, PoolingMethod::Causal];

/// Replicates the mismatch process and pools each draw with the classical
/// fixed/random-effects estimators and the arm-based causal estimator, for
/// RD, RR and OR on the natural scale.
pub fn run_mismatch(config: &MismatchConfig) -> Result<MismatchReport, SimError> {
    config.dgp.validate()?;
    if config.replications == 0 {
        return Err(SimError::BadParameters("need at least 1 replication".into()));
    }
    let causal_cfg = CausalConfig { ci_level: config.ci_level, ..CausalConfig::default() };

    let per_rep: Vec<(Vec<EstimatePoint>, u64)> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(config.seed, r as u64);
            let mut discarded = 0u64;
            'attempt: for attempt in 0..100u64 {
                let draw_seed = rep_seed.wrapping_add(attempt);
                let Ok(sim) =
                    simulate_meta_with(&config.dgp, draw_seed, DegeneratePolicy::Error)
                else {
                    discarded += 1;
                    continue;
                };
                let ds = sim.dataset;
                let mut points = Vec::with_capacity(9);
                for measure in MISMATCH_MEASURES {
                    let Ok(effects) = study_effects(&ds, measure, CorrectionPolicy::Haldane)
                    else {
                        discarded += 1;
                        continue 'attempt;
                    };
                    let (Ok(fe), Ok(re)) = (
                        pool_fixed(&effects, config.ci_level),
                        pool_random_dl(&effects, config.ci_level),
                    ) else {
                        discarded += 1;
                        continue 'attempt;
                    };
                    let Ok(causal) = pool_causal(&ds, measure, &WeightScheme::Pooled, &causal_cfg)
                    else {
                        discarded += 1;
                        continue 'attempt;
                    };
                    for (method, est) in [
                        (PoolingMethod::FixedEffects, &fe),
                        (PoolingMethod::RandomEffects, &re),
                        (PoolingMethod::Causal, &causal),
                    ] {
                        points.push(EstimatePoint {
                            replication: r,
                            method,
                            measure,
                            point: est.point,
                        });
                    }
                }
                return Ok((points, discarded));
            }
            Err(SimError::ReplicationFailed {
                attempts: 100,
                reason: "every draw was degenerate or failed to pool".into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut points = Vec::with_capacity(per_rep.len() * 9);
    let mut discarded_attempts = 0;
    for (p, d) in per_rep {
        points.extend(p);
        discarded_attempts += d;
    }

    let mut medians = Vec::with_capacity(9);
    for method in MISMATCH_METHODS {
        for measure in MISMATCH_MEASURES {
            let mut cell: Vec<f64> = points
                .iter()
                .filter(|p| p.method == method && p.measure == measure)
                .map(|p| p.point)
                .collect();
            medians.push(MedianSummary { method, measure, median: median_of(&mut cell) });
        }
    }

    Ok(MismatchReport {
        config: config.clone(),
        true_rd: true_effect(&config.dgp, Measure::Rd, &WeightScheme::Pooled)?,
        true_rr: true_effect(&config.dgp, Measure::Rr, &WeightScheme::Pooled)?,
        true_or: true_effect(&config.dgp, Measure::Or, &WeightScheme::Pooled)?,
        medians,
        points,
        discarded_attempts,
    })
}
