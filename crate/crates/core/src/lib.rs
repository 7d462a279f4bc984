//! Meta-analysis of binary outcomes from per-study 2x2 contingency tables.
//!
//! Two families of pooled estimators are provided:
//!
//! * **Classical inverse-variance pooling** ([`classical`]): fixed-effects and
//!   random-effects models with DerSimonian-Laird (or Paule-Mandel) between-study
//!   variance, pooling per-study contrasts on the usual scales.
//! * **Arm-based causal aggregation** ([`causal`]): event rates are pooled per
//!   arm across studies first, and the contrast is applied to the aggregated
//!   rates. This estimates the treatment effect on an explicit mixture of the
//!   study populations and comes with a closed-form asymptotic variance.
//!
//! Supporting machinery: per-study effect measures with zero-cell handling
//! ([`effects`]), a simulation lab for calibrating the estimators ([`sim`]),
//! a batch comparison harness ([`compare`]), and forest-plot rendering
//! ([`forest`]).

pub mod causal;
pub mod classical;
pub mod compare;
pub mod effects;
pub mod forest;
pub mod io;
pub mod model;
pub mod sim;

pub use causal::{pool_causal, pool_causal_collapsibility, theorem2_variance, CausalConfig, WeightScheme};
pub use classical::{pool_fixed, pool_random, tau2_dersimonian_laird, HeterogeneityEstimate};
pub use effects::{arm_rates, study_effect, CorrectionPolicy, StudyEffect};
pub use model::{
    validate_dataset, Measure, MetaDataset, PooledEstimate, PoolingMethod, Scale, StudyTable,
};
