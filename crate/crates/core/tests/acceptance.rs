//! Acceptance suite: the six headline properties of the pipeline, each
//! printing one pass/fail line. Tolerances are fixed here, not tuned.
//!
//! The sweep fixture (criteria 4 and 5) runs once and is shared; it uses
//! 24 seeds x 93 negative controls per design, so every Type 1 estimate
//! aggregates over 2232 null outcomes.

use std::sync::OnceLock;
use std::time::Instant;

use vigil_core::bayes::{posterior, DecisionThreshold, PriorSpec};
use vigil_core::design::{DesignSpec, HcAdjustment};
use vigil_core::eval::scenarios::{
    bias_evolution, e3_config, run_e1, run_e2, run_sweep, seasonal_log_rate_curve,
    uniform_uptake_curve, E1Config, E2Config, SweepConfig,
};
use vigil_core::eval::{
    calibrate_threshold, compute_metrics, MetricTable, ResultsStore, TimeToDetection,
};
use vigil_core::maxsprt::Method;
use vigil_core::sim::{accrue, monthly_cutoffs, simulate_population, ScenarioConfig, SnapshotMeta};

fn pass(criterion: &str, detail: &str) {
    println!("criterion {criterion}: PASS ({detail})");
}

// ---------------------------------------------------------------------------
// criterion 1: schedule inconsistency (500 seeds, 24 looks x 10 events)
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_schedule_inconsistency() {
    let start = Instant::now();
    let cfg = E1Config {
        n_seeds: 500,
        looks: 24,
        events_per_look: 10.0,
        alpha: 0.05,
        cv_replicates: 100_000,
        master_seed: 0xACC1,
    };
    let out = run_e1(&cfg).expect("e1 runs");
    let oracle = out.oracle.final_type1();
    let hacky = out.hacky_extension.final_type1();
    let early = out.early_stop.final_type1();
    let elapsed = start.elapsed();
    println!(
        "criterion 1 measurements: oracle {oracle:.4}, hacky {hacky:.4}, early {early:.4} \
         (cvs {:.4}/{:.4}/{:.4}, {elapsed:.1?})",
        out.oracle.cv, out.hacky_extension.cv, out.early_stop.cv
    );
    let mut failures = Vec::new();
    if !(0.035..=0.065).contains(&oracle) {
        failures.push(format!("oracle final Type 1 = {oracle:.4}, outside [0.035, 0.065]"));
    }
    if hacky < oracle + 0.02 {
        // Measured exhaustively (2e6 replicates): with monthly grouped
        // looks of 10 expected events, exact-alpha thresholds put the
        // hacky-extension final rate at 0.0648 against an oracle rate of
        // 0.0495, a structural gap of 0.0152. The 0.02 margin is not
        // reachable for this grouped monitoring process at any seed.
        failures.push(format!(
            "hacky extension final Type 1 = {hacky:.4} exceeds oracle {oracle:.4} by \
             {:.4} < 0.02 (structural gap of this grouped process is ~0.015)",
            hacky - oracle
        ));
    }
    if early >= oracle {
        failures.push(format!(
            "early stop final Type 1 = {early:.4} not below oracle {oracle:.4}"
        ));
    }
    if elapsed.as_secs() >= 600 {
        failures.push(format!("runtime target exceeded: {elapsed:.1?}"));
    }
    assert!(failures.is_empty(), "criterion 1: FAIL ({})", failures.join("; "));
    pass(
        "1",
        &format!("oracle {oracle:.3}, hacky {hacky:.3}, early {early:.3}, {elapsed:.1?}"),
    );
}

// ---------------------------------------------------------------------------
// criterion 2: both designs biased under the confounded simulator
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_design_bias_reproduction() {
    let cfg = E2Config { n_seeds: 100, n_subjects: 5000, master_seed: 0xACC2 };
    let results = run_e2(&cfg).expect("e2 runs");
    let ln2 = 2.0f64.ln();
    let n = results.len();
    let mut hc_over_25 = 0usize;
    let mut hc_over_truth = 0usize;
    let mut sccs_closer = 0usize;
    let mut sccs_abs_err = Vec::new();
    for r in &results {
        let hc = r.historical_comparator[11].expect("HC estimable at month 12");
        let sccs = r.sccs[11].expect("SCCS estimable at month 12");
        if hc.exp() > 2.5 {
            hc_over_25 += 1;
        }
        if hc > ln2 {
            hc_over_truth += 1;
        }
        if (sccs - ln2).abs() < (hc - ln2).abs() {
            sccs_closer += 1;
        }
        sccs_abs_err.push((sccs - ln2).abs());
    }
    sccs_abs_err.sort_by(f64::total_cmp);
    let sccs_median_err = sccs_abs_err[n / 2];
    assert!(
        hc_over_25 as f64 >= 0.90 * n as f64,
        "historical comparator RR > 2.5 in only {hc_over_25}/{n} seeds"
    );
    assert!(
        sccs_closer as f64 >= 0.90 * n as f64,
        "SCCS closer to truth in only {sccs_closer}/{n} seeds"
    );
    assert!(
        sccs_median_err > 0.05,
        "SCCS median |log error| = {sccs_median_err:.4}, not > 0.05"
    );
    // over-estimation holds in at least 95% of seeds
    assert!(
        hc_over_truth as f64 >= 0.95 * n as f64,
        "historical comparator exceeded the true effect in only {hc_over_truth}/{n} seeds"
    );
    pass(
        "2",
        &format!(
            "HC RR>2.5 in {hc_over_25}/{n}, SCCS closer in {sccs_closer}/{n}, SCCS median err {sccs_median_err:.3}"
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 3: posterior-evolution behavior on a clean scenario
// ---------------------------------------------------------------------------

fn clean_scenario(master_seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_subjects: 3000,
        n_weeks_total: 104,
        historical_weeks: (1, 52),
        surveillance_weeks: (53, 104),
        baseline_log_rate: seasonal_log_rate_curve(0.0004, 0.0, 26),
        historical_rate_multiplier: 1.0,
        covariate_effect: 0.0,
        covariate_prevalence: 0.5,
        true_log_rr: 2.0f64.ln(),
        risk_window_weeks: 6,
        uptake_curve: uniform_uptake_curve(0.8),
        master_seed,
        outcome_stream: 0,
    }
}

#[test]
fn criterion_3_bayes_signal_timing_and_concentration() {
    let design = DesignSpec::HistoricalComparator {
        adjustment: HcAdjustment::None,
        risk_window_weeks: 6,
    };
    let prior = PriorSpec::MODERATE;
    let threshold = DecisionThreshold::new(0.95).unwrap();
    let n_seeds = 50;
    let mut signal_months = Vec::new();
    let mut sd_strictly_decreasing = 0usize;
    for seed in 0..n_seeds {
        let scenario = clean_scenario(vigil_core::rng::derive_seed(0xACC3, "seed", seed));
        let population = simulate_population(&scenario).unwrap();
        let cutoffs = monthly_cutoffs(&scenario, 12);
        let snapshots = accrue(population, SnapshotMeta::of(&scenario), &cutoffs).unwrap();
        let posteriors: Vec<_> = snapshots
            .iter()
            .map(|s| posterior(&design.profile(s).unwrap(), &prior).unwrap())
            .collect();
        let decision = vigil_core::bayes::run_bayes(posteriors.iter(), threshold);
        signal_months.push(decision.stopping_time.unwrap_or(13) as f64);
        let sds: Vec<f64> = posteriors.iter().map(|p| p.sd()).collect();
        if sds.windows(2).all(|w| w[1] < w[0]) {
            sd_strictly_decreasing += 1;
        }
    }
    signal_months.sort_by(f64::total_cmp);
    let median = signal_months[signal_months.len() / 2];
    assert!(
        (6.0..=12.0).contains(&median),
        "median signal month {median} outside 9 +/- 3"
    );
    assert!(
        sd_strictly_decreasing as f64 >= 0.95 * n_seeds as f64,
        "posterior sd strictly decreasing in only {sd_strictly_decreasing}/{n_seeds} seeds"
    );
    pass(
        "3",
        &format!(
            "median signal month {median}, sd decreasing {sd_strictly_decreasing}/{n_seeds}"
        ),
    );
}

// ---------------------------------------------------------------------------
// shared sweep fixture for criteria 4 and 5
// ---------------------------------------------------------------------------

struct SweepFixture {
    cfg: SweepConfig,
    store: ResultsStore,
    table: MetricTable,
}

fn sweep_fixture() -> &'static SweepFixture {
    static FIXTURE: OnceLock<SweepFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let cfg = e3_config(24, 0xACC4);
        let store = run_sweep(&cfg).expect("sweep runs");
        let table = compute_metrics(&store, &[0.95]);
        SweepFixture { cfg, store, table }
    })
}

fn final_row<'a>(
    table: &'a MetricTable,
    method: Method,
    design: &str,
    rr: f64,
    delta: Option<f64>,
    look: u32,
) -> &'a vigil_core::eval::MetricRow {
    table
        .rows
        .iter()
        .find(|r| {
            r.method == method
                && r.design == design
                && r.true_rr == rr
                && r.look == look
                && (delta.is_none() || r.delta1 == delta)
        })
        .unwrap_or_else(|| panic!("missing metric row: {method:?} {design} rr={rr} look={look}"))
}

#[test]
fn criterion_4_bbc_calibration_and_estimation() {
    let fx = sweep_fixture();
    let last = fx.cfg.n_looks;
    let designs: Vec<String> = fx.store.design_labels.clone();
    let hc = &designs[0];

    // (a) Type 1: BBC within [0.01, 0.12] on every design; uncorrected
    //     methods blow past it under the unadjusted historical comparator
    let maxsprt_t1 = final_row(&fx.table, Method::Maxsprt, hc, 1.0, None, last).type1.unwrap();
    let bayes_t1 =
        final_row(&fx.table, Method::Bayes, hc, 1.0, Some(0.95), last).type1.unwrap();
    assert!(
        maxsprt_t1 > 0.20,
        "uncorrected MaxSPRT final Type 1 = {maxsprt_t1:.3}, expected > 0.20 under {hc}"
    );
    let mut bbc_t1_by_design = Vec::new();
    for design in &designs {
        let bbc_t1 =
            final_row(&fx.table, Method::Bbc, design, 1.0, Some(0.95), last).type1.unwrap();
        assert!(
            (0.01..=0.12).contains(&bbc_t1),
            "BBC final Type 1 = {bbc_t1:.3} outside [0.01, 0.12] under {design}"
        );
        bbc_t1_by_design.push(bbc_t1);
    }
    assert!(maxsprt_t1 > bbc_t1_by_design[0], "MaxSPRT must exceed BBC Type 1 under {hc}");
    assert!(bayes_t1 > bbc_t1_by_design[0], "plain Bayes must exceed BBC Type 1 under {hc}");

    // (b) estimation: BBC beats the MLE on MSE in at least 80% of cells.
    // Estimation comparisons use the looks past the low-evidence window
    // (months 1-4 are flagged), matching the end-of-analysis reading of
    // the estimation tables this reproduces in direction.
    let mut cells = 0usize;
    let mut bbc_wins = 0usize;
    for design in &designs {
        for look in 1..=last {
            for rr in [1.0, 1.5, 2.0, 4.0] {
                let mle_row = final_row(&fx.table, Method::Maxsprt, design, rr, None, look);
                if mle_row.low_evidence {
                    continue;
                }
                let bbc =
                    final_row(&fx.table, Method::Bbc, design, rr, Some(0.95), look).mse;
                if let (Some(mle), Some(bbc)) = (mle_row.mse, bbc) {
                    cells += 1;
                    if bbc < mle {
                        bbc_wins += 1;
                    }
                }
            }
        }
    }
    assert!(
        bbc_wins as f64 >= 0.80 * cells as f64,
        "MSE(BBC) < MSE(MLE) in only {bbc_wins}/{cells} cells"
    );

    // (c) coverage at the final look: BBC at or above 0.90 everywhere,
    //     the MLE strictly below BBC in every stratum
    for design in &designs {
        for rr in [1.0, 1.5, 2.0, 4.0] {
            let bbc = final_row(&fx.table, Method::Bbc, design, rr, Some(0.95), last)
                .coverage95
                .unwrap();
            let mle = final_row(&fx.table, Method::Maxsprt, design, rr, None, last)
                .coverage95
                .unwrap();
            assert!(
                bbc >= 0.90,
                "BBC coverage {bbc:.3} below 0.90 at RR {rr} under {design}"
            );
            assert!(
                mle < bbc,
                "MLE coverage {mle:.3} not below BBC {bbc:.3} at RR {rr} under {design}"
            );
        }
    }

    // early looks carry the low-evidence flag
    assert!(fx
        .table
        .rows
        .iter()
        .all(|r| r.low_evidence == (r.look <= 4)));

    // persistent positive bias: the learned bias distribution sits above
    // zero at the end of surveillance
    let evolution = bias_evolution(&fx.cfg, 0, 0).expect("bias evolution runs");
    let (_, final_fit) = evolution.last().expect("at least one analyzable look");
    let p_positive = final_fit.prob_positive();
    assert!(
        p_positive > 0.8,
        "posterior predictive P(bias > 0) = {p_positive:.3}, expected > 0.8"
    );

    pass(
        "4",
        &format!(
            "maxsprt T1 {maxsprt_t1:.3} vs bbc {:.3}/{:.3}; mse wins {bbc_wins}/{cells}; P(b>0) {p_positive:.2}",
            bbc_t1_by_design[0], bbc_t1_by_design[1]
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 5: matched-threshold power and time to detection
// ---------------------------------------------------------------------------

fn ttd_months(t: Option<TimeToDetection>, horizon: u32) -> u32 {
    match t {
        Some(TimeToDetection::AtLook(l)) => l,
        _ => horizon + 1,
    }
}

#[test]
fn criterion_5_matched_threshold_power() {
    let fx = sweep_fixture();
    let last = fx.cfg.n_looks;
    let mut detail = String::new();
    for (d, design) in fx.store.design_labels.clone().iter().enumerate() {
        // match BBC's end-of-analysis Type 1 to MaxSPRT's
        let target =
            final_row(&fx.table, Method::Maxsprt, design, 1.0, None, last).type1.unwrap();
        let maxima = fx.store.nc_trajectory_maxima(Method::Bbc, d as u8, 0);
        let calibrated = calibrate_threshold(&maxima, target);
        assert!(!calibrated.flagged, "threshold calibration flagged under {design}");
        let matched = compute_metrics(&fx.store, &[calibrated.delta1]);

        // achieved Type 1 within one control's worth of the target when
        // the target lies inside the reachable range; a target above the
        // range (the uncorrected rate can exceed what any threshold in
        // (0.5, 1) produces) pins the lattice minimum and leaves BBC with
        // strictly less Type 1 to spend than MaxSPRT
        let achieved = final_row(&matched, Method::Bbc, design, 1.0, Some(calibrated.delta1), last)
            .type1
            .unwrap();
        assert!(achieved <= target + 1e-9, "calibration overshot the target under {design}");
        let reachable_max =
            maxima.iter().filter(|&&m| m > 0.501).count() as f64 / maxima.len() as f64;
        if target <= reachable_max {
            // one control's worth of discreteness
            let bound = 1.0 / fx.cfg.controls.n_negative as f64;
            assert!(
                (target - achieved).abs() <= bound + 1e-9,
                "matched Type 1 {achieved:.4} vs target {target:.4} under {design}"
            );
        }

        // power from month 6 onward at RR 1.5 and 2
        for rr in [1.5, 2.0] {
            for look in 6..=last {
                let bbc = final_row(&matched, Method::Bbc, design, rr, Some(calibrated.delta1), look)
                    .sensitivity
                    .unwrap();
                let maxsprt = final_row(&matched, Method::Maxsprt, design, rr, None, look)
                    .sensitivity
                    .unwrap();
                assert!(
                    bbc >= maxsprt - 0.05,
                    "BBC power {bbc:.3} < MaxSPRT {maxsprt:.3} - 0.05 at RR {rr}, look {look}, {design}"
                );
            }
        }

        // time to 50% detection at RR 1.5: BBC within one month of MaxSPRT
        let bbc_ttd = ttd_months(
            final_row(&matched, Method::Bbc, design, 1.5, Some(calibrated.delta1), last).ttd50,
            last,
        );
        let maxsprt_ttd = ttd_months(
            final_row(&matched, Method::Maxsprt, design, 1.5, None, last).ttd50,
            last,
        );
        assert!(
            bbc_ttd <= maxsprt_ttd + 1,
            "BBC ttd50 {bbc_ttd} > MaxSPRT {maxsprt_ttd} + 1 under {design}"
        );
        detail.push_str(&format!(
            "{design}: delta* {:.3}, T1 {achieved:.3} vs {target:.3}, ttd50 {bbc_ttd} vs {maxsprt_ttd}; ",
            calibrated.delta1
        ));
    }
    pass("5", detail.trim_end_matches("; "));
}

// ---------------------------------------------------------------------------
// criterion 6: oracle suites
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_oracle_suites() {
    let start = Instant::now();

    // Poisson LLR: closed form vs grid maximization over 200 random (c, mu)
    {
        use rand::Rng;
        let mut rng = vigil_core::rng::stream(0xACC6, "llr-oracle", 0);
        for _ in 0..200 {
            let c: u64 = rng.random_range(1..=100);
            let log_ratio: f64 = rng.random_range(-3.0..3.0);
            let mu = c as f64 / log_ratio.exp();
            let closed = vigil_core::maxsprt::poisson_llr(c, mu);
            let profile =
                vigil_core::design::LikelihoodProfile::from_poisson_counts(c, mu, 0, 1.0)
                    .unwrap();
            let grid = vigil_core::maxsprt::llr_statistic(&profile);
            assert!(
                (closed - grid).abs() < 1e-3,
                "LLR mismatch at c={c}, mu={mu:.3}: closed {closed:.6} vs grid {grid:.6}"
            );
        }
    }

    // conjugate normal-normal posterior vs grid quadrature
    {
        let sd = 0.25f64;
        let peak = 0.5f64;
        let values: Vec<f64> = vigil_core::BetaGrid::betas()
            .map(|b| -0.5 * ((b - peak) / sd).powi(2))
            .collect();
        let profile =
            vigil_core::design::LikelihoodProfile::from_grid(values, (1, 1), (1.0, 1.0), true)
                .unwrap();
        let post = posterior(&profile, &PriorSpec::MODERATE).unwrap();
        let lik_prec = 1.0 / (sd * sd);
        let prior_prec = 0.25;
        let mean = lik_prec * peak / (lik_prec + prior_prec);
        let post_sd = 1.0 / (lik_prec + prior_prec).sqrt();
        assert!((post.mean - mean).abs() < 1e-3);
        assert!((post.median - mean).abs() < 1e-3);
        assert!((post.sd() - post_sd).abs() < 1e-3);
        let p_h1 = vigil_core::num::normal_cdf(mean / post_sd);
        assert!((post.p_h1 - p_h1).abs() < 1e-3);
    }

    // hierarchical mean vs conjugate oracle with known tau
    {
        let locs = [0.05f64, 0.3, -0.15, 0.4, 0.1, 0.25, 0.0, 0.2];
        let s = 0.2f64;
        let tau = 0.25f64;
        let controls: Vec<(u32, vigil_core::design::LikelihoodProfile)> = locs
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let values: Vec<f64> = vigil_core::BetaGrid::betas()
                    .map(|b| -0.5 * ((b - m) / s).powi(2))
                    .collect();
                (
                    i as u32,
                    vigil_core::design::LikelihoodProfile::from_grid(
                        values,
                        (5, 5),
                        (1.0, 1.0),
                        true,
                    )
                    .unwrap(),
                )
            })
            .collect();
        let model = vigil_core::bias::BiasModelSpec {
            fixed_tau: Some(tau),
            ..Default::default()
        };
        let mcmc = vigil_core::bias::McmcSpec::new(42_000, 2_000, 10, 2, 0xACC6).unwrap();
        let fit = vigil_core::bias::fit_bias_model(&controls, &model, &mcmc).unwrap();
        let marginal_var = tau * tau + s * s;
        let prec = locs.len() as f64 / marginal_var + 1.0 / 2.0;
        let expect_mean = locs.iter().sum::<f64>() / marginal_var / prec;
        let expect_sd = (1.0 / prec).sqrt();
        let mcse = expect_sd / fit.diagnostics.ess_mean.sqrt();
        let got = fit.mean_of_center();
        assert!(
            (got - expect_mean).abs() <= (2.0 * mcse).max(0.01),
            "hierarchical mean {got:.4} vs conjugate {expect_mean:.4} (mcse {mcse:.4})"
        );
        // split-Rhat on this well-posed fixture stays within 1.1
        assert!(
            fit.diagnostics.rhat_mean <= 1.1,
            "rhat = {:.3} on a well-posed fixture",
            fit.diagnostics.rhat_mean
        );
        assert!(!fit.flagged);
    }

    // positive-control shift exactness on the grid
    {
        let nc = vigil_core::design::LikelihoodProfile::from_poisson_counts(30, 28.0, 28, 1.0)
            .unwrap();
        for rr in [1.5f64, 2.0, 4.0] {
            let steps = vigil_core::BetaGrid::snap_steps(rr.ln());
            let (pc, truth) = vigil_core::eval::synthesize_positive_profile(&nc, rr).unwrap();
            assert_eq!(truth, steps as f64 * vigil_core::BetaGrid::STEP);
            for i in steps as usize..vigil_core::BetaGrid::LEN {
                assert_eq!(pc.loglik[i], nc.loglik[i - steps as usize]);
            }
            assert!((truth - rr.ln()).abs() <= vigil_core::BetaGrid::STEP / 2.0);
        }
    }

    // cv self-consistency: re-simulated null Type 1 in [alpha - 0.01, alpha]
    {
        use rand_distr::Distribution;
        let schedule = vigil_core::maxsprt::SurveillanceSchedule::uniform(24, 10.0, 0.05);
        let cv = vigil_core::maxsprt::compute_cv(
            &schedule,
            vigil_core::maxsprt::CvModel::Poisson,
            100_000,
            0xACC6,
        )
        .unwrap();
        let mut exceed = 0usize;
        let replicates = 100_000usize;
        for r in 0..replicates {
            let mut rng = vigil_core::rng::stream(0x5EED, "cv-check", r as u64);
            let mut c = 0u64;
            let mut crossed = false;
            for t in 1..=24 {
                let draw: f64 =
                    rand_distr::Poisson::new(10.0).unwrap().sample(&mut rng);
                c += draw as u64;
                if vigil_core::maxsprt::poisson_llr(c, 10.0 * t as f64) > cv.cv {
                    crossed = true;
                    break;
                }
            }
            if crossed {
                exceed += 1;
            }
        }
        let type1 = exceed as f64 / replicates as f64;
        assert!(
            (0.04..=0.05).contains(&type1),
            "re-simulated null Type 1 = {type1:.4}, outside [0.04, 0.05]"
        );
    }

    // MCMC determinism
    {
        let controls: Vec<(u32, vigil_core::design::LikelihoodProfile)> = (0..6)
            .map(|i| {
                let values: Vec<f64> = vigil_core::BetaGrid::betas()
                    .map(|b| -0.5 * ((b - 0.2) / 0.3).powi(2))
                    .collect();
                (
                    i,
                    vigil_core::design::LikelihoodProfile::from_grid(
                        values,
                        (4, 4),
                        (1.0, 1.0),
                        true,
                    )
                    .unwrap(),
                )
            })
            .collect();
        let model = vigil_core::bias::BiasModelSpec::default();
        let mcmc = vigil_core::bias::McmcSpec::new(8_000, 1_000, 10, 2, 0xD0D0).unwrap();
        let a = vigil_core::bias::fit_bias_model(&controls, &model, &mcmc).unwrap();
        let b = vigil_core::bias::fit_bias_model(&controls, &model, &mcmc).unwrap();
        assert_eq!(a.samples, b.samples, "identical seeds must give identical samples");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "oracle suite exceeded 2 minutes: {elapsed:.1?}");
    pass("6", &format!("all oracle checks in {elapsed:.1?}"));
}
