//! End-to-end acceptance checks with pinned tolerances and runtime
//! budgets. Each criterion prints one `acceptance N PASS|FAIL` line
//! (use `cargo test --test acceptance -- --show-output` to see lines
//! for passing criteria too).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metabin::causal::{pool_causal, pool_causal_collapsibility, CausalConfig, WeightScheme};
use metabin::classical::{pool_fixed, pool_random_dl, tau2_dersimonian_laird};
use metabin::compare::{compare_batch, render_summary_table, CompareConfig};
use metabin::effects::{study_effect, study_effects, CorrectionPolicy};
use metabin::io::write_dataset_csv;
use metabin::model::{Measure, MetaDataset, PoolingMethod, StudyTable};
use metabin::sim::{
    calibrate_theorem2, run_mismatch, simulate_meta, solve_pstar, CalibrationTarget,
    MismatchConfig, MismatchDgp, MuTable, TwoStudyRates,
};

fn verdict(criterion: u32, ok: bool, detail: &str) {
    println!("acceptance {criterion} {}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "acceptance {criterion} failed: {detail}");
}

/// Mirrored control-rate tables pool to the same target yet name
/// different matching populations.
#[test]
fn criterion_1_mirror_populations() {
    let start = Instant::now();
    let p_a = solve_pstar(0.1, 0.9, &MuTable::new(0.5, 0.5, 0.9, 0.1)).unwrap();
    let p_b = solve_pstar(0.1, 0.9, &MuTable::new(0.5, 0.5, 0.1, 0.9)).unwrap();
    let elapsed = start.elapsed();
    let ok =
        (p_a - 0.36).abs() < 0.01 && (p_b - 0.64).abs() < 0.01 && elapsed.as_micros() < 1_000;
    verdict(1, ok, &format!("p*_A = {p_a:.5}, p*_B = {p_b:.5} in {elapsed:?}"));
}

/// The contrast-decomposition form of the causal estimator equals the
/// arm-aggregated form on randomized datasets.
#[test]
fn criterion_2_collapsibility_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let config = CausalConfig::default();
    let mut max_rel = 0.0f64;
    for i in 0..10_000 {
        let k = rng.random_range(1..=10usize);
        let studies: Vec<StudyTable> = (0..k)
            .map(|j| {
                StudyTable::new(
                    format!("s{j}"),
                    rng.random_range(1..=1000u64),
                    rng.random_range(1..=1000u64),
                    rng.random_range(1..=1000u64),
                    rng.random_range(1..=1000u64),
                )
            })
            .collect();
        let ds = MetaDataset::new(format!("d{i}"), studies);
        for measure in [Measure::Rd, Measure::Rr] {
            let direct = pool_causal(&ds, measure, &WeightScheme::Pooled, &config).unwrap();
            let collapsed = pool_causal_collapsibility(&ds, measure, &config).unwrap();
            let rel = (direct.point - collapsed.point).abs() / direct.point.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    let elapsed = start.elapsed();
    let ok = max_rel <= 1e-12 && elapsed.as_secs() < 10;
    verdict(
        2,
        ok,
        &format!("10,000 datasets, max |direct - collapsed| = {max_rel:.3e} rel in {elapsed:?}"),
    );
}

/// The closed-form variance matches the Monte Carlo variance and its
/// nominal interval coverage on a heterogeneous two-study spec.
#[test]
fn criterion_3_variance_calibration() {
    let start = Instant::now();
    let target = CalibrationTarget::Rates(TwoStudyRates::default());
    let mut ok = true;
    let mut lines = Vec::new();
    for measure in [Measure::Rd, Measure::LogRr, Measure::LogOr] {
        let rep = calibrate_theorem2(&target, measure, 10_000, 0).unwrap();
        let pass = (0.9..=1.1).contains(&rep.ratio) && (0.93..=0.97).contains(&rep.coverage);
        ok &= pass;
        lines.push(format!(
            "{measure}: var ratio {:.4}, coverage {:.4}",
            rep.ratio, rep.coverage
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed.as_secs() < 120;
    verdict(3, ok, &format!("{} in {elapsed:?}", lines.join("; ")));
}

/// Classical and causal pooling disagree in direction on the two-study
/// mixture with flipped covariate distributions.
#[test]
fn criterion_4_direction_reversal() {
    let start = Instant::now();
    let config = MismatchConfig { replications: 100, seed: 0, ..MismatchConfig::default() };
    let report = run_mismatch(&config).unwrap();
    let re_rr = report.median(PoolingMethod::RandomEffects, Measure::Rr);
    let ca_rr = report.median(PoolingMethod::Causal, Measure::Rr);
    let re_rd = report.median(PoolingMethod::RandomEffects, Measure::Rd);
    let ca_rd = report.median(PoolingMethod::Causal, Measure::Rd);

    let mut signs_consistent = true;
    for r in 0..config.replications {
        let of = |measure: Measure| {
            report
                .points
                .iter()
                .find(|p| {
                    p.replication == r && p.method == PoolingMethod::Causal && p.measure == measure
                })
                .expect("causal point for every replication")
                .point
        };
        let rd_sign = of(Measure::Rd).signum();
        signs_consistent &= rd_sign == (of(Measure::Rr) - 1.0).signum()
            && rd_sign == (of(Measure::Or) - 1.0).signum();
    }

    let elapsed = start.elapsed();
    let ok = re_rr > 1.0
        && ca_rr < 1.0
        && ca_rd < 0.0
        && re_rd < 0.0
        && signs_consistent
        && elapsed.as_secs() < 60;
    verdict(
        4,
        ok,
        &format!(
            "median RR re {re_rr:.3} vs causal {ca_rr:.3}, median RD re {re_rd:.4} vs causal \
             {ca_rd:.4}, per-replication causal signs consistent: {signs_consistent}, in {elapsed:?}"
        ),
    );
}

/// Where the estimators coincide: zero heterogeneity makes RE collapse to
/// FE exactly, and homogeneous populations shrink the FE-causal gap as n
/// grows without costing FE any efficiency.
#[test]
fn criterion_5_coincidence_regimes() {
    let start = Instant::now();

    // (a) tau2 = 0 makes random effects bit-identical to fixed effects
    let ds = MetaDataset::new(
        "flat",
        vec![StudyTable::new("a", 10, 90, 10, 90), StudyTable::new("b", 20, 180, 20, 180)],
    );
    let mut exact = true;
    for measure in [Measure::Rd, Measure::Rr] {
        let effects = study_effects(&ds, measure, CorrectionPolicy::Reject).unwrap();
        let het = tau2_dersimonian_laird(&effects).unwrap();
        exact &= het.tau2 == 0.0;
        let fe = pool_fixed(&effects, 0.95).unwrap();
        let re = pool_random_dl(&effects, 0.95).unwrap();
        exact &= fe.point.to_bits() == re.point.to_bits()
            && fe.variance.to_bits() == re.variance.to_bits()
            && fe.ci_low.to_bits() == re.ci_low.to_bits()
            && fe.ci_high.to_bits() == re.ci_high.to_bits()
            && fe.weights == re.weights;
    }

    // (b) identical study populations: FE and causal converge to the same
    // point, and adaptive FE weighting never costs precision
    let homogeneous = MismatchDgp { m2: [1.0, 0.0], ..MismatchDgp::default() };
    let config = CausalConfig::default();
    let pair = |n: u64, seed: u64| -> (f64, f64) {
        let dgp = MismatchDgp { n, ..homogeneous };
        let ds = simulate_meta(&dgp, seed).unwrap();
        let effects = study_effects(&ds, Measure::Rd, CorrectionPolicy::Haldane).unwrap();
        let fe = pool_fixed(&effects, 0.95).unwrap();
        let causal = pool_causal(&ds, Measure::Rd, &WeightScheme::Pooled, &config).unwrap();
        (fe.point, causal.point)
    };

    let mean_gap = |n: u64, reps: u64| -> f64 {
        (0..reps)
            .map(|r| {
                let (fe, ca) = pair(n, 1_000 + r);
                (fe - ca).abs()
            })
            .sum::<f64>()
            / reps as f64
    };
    let gaps: Vec<f64> = [1_000u64, 10_000, 100_000].iter().map(|n| mean_gap(*n, 300)).collect();
    let decreasing = gaps[0] > gaps[1] && gaps[1] > gaps[2];

    let points: Vec<(f64, f64)> = (0..500).map(|r| pair(10_000, 50_000 + r)).collect();
    let var = |values: &[f64]| -> f64 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
    };
    let fe_var = var(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    let causal_var = var(&points.iter().map(|p| p.1).collect::<Vec<_>>());

    let elapsed = start.elapsed();
    let ok = exact && decreasing && fe_var <= causal_var;
    verdict(
        5,
        ok,
        &format!(
            "tau2=0 identity exact: {exact}; gaps {:.2e} > {:.2e} > {:.2e}: {decreasing}; \
             var FE {fe_var:.3e} <= var causal {causal_var:.3e}: {} in {elapsed:?}",
            gaps[0],
            gaps[1],
            gaps[2],
            fe_var <= causal_var
        ),
    );
}

/// The batch harness emits the agreement-table column set, and
/// homogeneous data makes the two philosophies agree.
#[test]
fn criterion_6_batch_table_shape() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let homogeneous =
        MismatchDgp { m2: [1.0, 0.0], n: 2_000, ..MismatchDgp::default() };
    for i in 0..100u64 {
        let ds = simulate_meta(&homogeneous, 9_000 + i).unwrap();
        let file = std::fs::File::create(dir.path().join(format!("sim-{i:03}.csv"))).unwrap();
        write_dataset_csv(&ds, file).unwrap();
    }
    let measures = [Measure::Rd, Measure::Rr, Measure::Or];
    let report = compare_batch(dir.path(), &measures, &CompareConfig::default()).unwrap();

    let table = render_summary_table(&report);
    let has_columns = ["measure", "discrepancy", "ci length (re)", "ci length (causal)", "ci overlap %"]
        .iter()
        .all(|h| table.lines().next().unwrap().contains(h));
    let has_pm = table.matches("+/-").count() >= 4 * measures.len();

    let jaccards: Vec<(Measure, f64)> =
        report.summary.iter().map(|r| (r.measure, r.mean_jaccard)).collect();
    let all_high = jaccards.iter().all(|(_, j)| *j > 0.8);

    let elapsed = start.elapsed();
    let ok = report.summary.len() == measures.len()
        && report.records.len() == 100 * measures.len()
        && has_columns
        && has_pm
        && all_high;
    verdict(
        6,
        ok,
        &format!(
            "columns present: {has_columns}, mean jaccard {} in {elapsed:?}",
            jaccards
                .iter()
                .map(|(m, j)| format!("{m} {j:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

/// Analytic contrast gradients agree with central finite differences.
#[test]
fn criterion_7_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut max_rel = 0.0f64;
    for _ in 0..100 {
        let x = rng.random_range(0.05..0.95);
        let y = rng.random_range(0.05..0.95);
        for measure in Measure::ALL {
            let (gx, gy) = measure.gradient(x, y);
            let fx = (measure.value(x + h, y) - measure.value(x - h, y)) / (2.0 * h);
            let fy = (measure.value(x, y + h) - measure.value(x, y - h)) / (2.0 * h);
            for (analytic, numeric) in [(gx, fx), (gy, fy)] {
                let rel = (analytic - numeric).abs() / analytic.abs().max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
    }
    let ok = max_rel < 1e-6;
    verdict(7, ok, &format!("max relative gradient error {max_rel:.3e} over 100 points"));
}

/// Worked per-study example: log risk ratio log 2 with variance 0.2.
#[test]
fn criterion_8_hand_check() {
    let table = StudyTable::new("worked", 10, 10, 5, 15);
    let e = study_effect(&table, Measure::LogRr, CorrectionPolicy::Reject).unwrap();
    let d_theta = (e.theta_hat - std::f64::consts::LN_2).abs();
    let d_sigma2 = (e.sigma2_hat - 0.2).abs();
    let ok = d_theta < 1e-15 && d_sigma2 < 1e-15;
    verdict(8, ok, &format!("|theta - log 2| = {d_theta:.2e}, |sigma2 - 0.2| = {d_sigma2:.2e}"));
}
