//! Shared fixtures for the pipeline benchmarks.

use vigil_core::bias::{BiasModelSpec, McmcSpec};
use vigil_core::design::{DesignSpec, HcAdjustment, LikelihoodProfile, SccsVariant};
use vigil_core::eval::scenarios::{seasonal_log_rate_curve, seasonal_uptake_curve};
use vigil_core::sim::{accrue, monthly_cutoffs, simulate_population, LookSnapshot, ScenarioConfig, SnapshotMeta};

pub fn bench_scenario(n_subjects: u32) -> ScenarioConfig {
    ScenarioConfig {
        n_subjects,
        n_weeks_total: 104,
        historical_weeks: (1, 52),
        surveillance_weeks: (53, 104),
        baseline_log_rate: seasonal_log_rate_curve(0.0015, 0.5, 26),
        historical_rate_multiplier: 0.5,
        covariate_effect: 0.3,
        covariate_prevalence: 0.3,
        true_log_rr: 0.25,
        risk_window_weeks: 4,
        uptake_curve: seasonal_uptake_curve(0.7, 0.5, 26),
        master_seed: 7,
        outcome_stream: 0,
    }
}

pub fn final_snapshot(n_subjects: u32) -> LookSnapshot {
    let scenario = bench_scenario(n_subjects);
    let population = simulate_population(&scenario).unwrap();
    let cutoffs = monthly_cutoffs(&scenario, 12);
    accrue(population, SnapshotMeta::of(&scenario), &cutoffs)
        .unwrap()
        .pop()
        .unwrap()
}

pub fn hc_design() -> DesignSpec {
    DesignSpec::HistoricalComparator { adjustment: HcAdjustment::None, risk_window_weeks: 4 }
}

pub fn sccs_design() -> DesignSpec {
    DesignSpec::Sccs { variant: SccsVariant::PrevaxExcluded, risk_window_weeks: 4 }
}

pub fn sccs_month_adjusted() -> DesignSpec {
    DesignSpec::Sccs { variant: SccsVariant::MonthAdjusted, risk_window_weeks: 4 }
}

pub fn control_profiles(n: u32) -> Vec<(u32, LikelihoodProfile)> {
    let snapshot = final_snapshot(1500);
    let base = hc_design().profile(&snapshot).unwrap();
    (0..n)
        .map(|i| {
            let steps = (i % 13) as i64;
            (i, base.shifted_right(steps).unwrap())
        })
        .collect()
}

pub fn quick_mcmc(seed: u64) -> McmcSpec {
    McmcSpec::new(6_000, 1_000, 10, 2, seed).unwrap()
}

pub fn bias_model() -> BiasModelSpec {
    BiasModelSpec::default()
}
