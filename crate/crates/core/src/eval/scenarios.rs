//! Benchmark scenarios.
//!
//! * E1 — schedule inconsistency: MaxSPRT on identical null count streams
//!   under three pre-specified schedules (oracle / hacky extension / early
//!   stop).
//! * E2 — design bias: a confounded simulator (seasonal rates, seasonal
//!   uptake, historical rates at half the present level) where both the
//!   historical comparator and SCCS mis-estimate a true RR of 2.
//! * E3 — the full method sweep over a control suite with injected
//!   exchangeable bias: MaxSPRT vs plain Bayes vs BBC on negative and
//!   synthesized positive controls.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bayes::{posterior, PriorSpec};
use crate::bias::{debias, fit_bias_model, BiasModelSpec, McmcSpec};
use crate::design::{DesignSpec, HcAdjustment, LikelihoodProfile, SccsVariant};
use crate::error::{Error, Result};
use crate::eval::{CellKey, CellValue, ControlSuiteSpec, OutcomeId, ResultsStore};
use crate::maxsprt::{compute_cv, llr_statistic, CvModel, Method, SurveillanceSchedule};
use crate::rng;
use crate::sim::{accrue, monthly_cutoffs, simulate_population, ScenarioConfig, SnapshotMeta};

/// 52-entry week-of-year log-rate curve: a sinusoid around `ln(mean_rate)`
/// peaking at `peak_week`.
pub fn seasonal_log_rate_curve(mean_rate: f64, amplitude: f64, peak_week: u32) -> Vec<f64> {
    (1..=52)
        .map(|k| {
            let phase = 2.0 * std::f64::consts::PI * (k as f64 - peak_week as f64) / 52.0;
            mean_rate.ln() + amplitude * phase.cos()
        })
        .collect()
}

/// Per-week vaccination probabilities over the surveillance year with the
/// same seasonal shape as the rate curve, normalized to `coverage`.
pub fn seasonal_uptake_curve(coverage: f64, amplitude: f64, peak_week: u32) -> Vec<f64> {
    let raw: Vec<f64> = (1..=52)
        .map(|k| {
            let phase = 2.0 * std::f64::consts::PI * (k as f64 - peak_week as f64) / 52.0;
            (amplitude * phase.cos()).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p * coverage / total).collect()
}

/// Uniform uptake over the surveillance year.
pub fn uniform_uptake_curve(coverage: f64) -> Vec<f64> {
    vec![coverage / 52.0; 52]
}

// ---------------------------------------------------------------------------
// E1: surveillance-schedule inconsistency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct E1Config {
    pub n_seeds: u32,
    pub looks: usize,
    pub events_per_look: f64,
    pub alpha: f64,
    pub cv_replicates: usize,
    pub master_seed: u64,
}

impl Default for E1Config {
    fn default() -> Self {
        E1Config {
            n_seeds: 500,
            looks: 24,
            events_per_look: 10.0,
            alpha: 0.05,
            cv_replicates: 100_000,
            master_seed: 0xE1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct E1Schedule {
    pub name: &'static str,
    pub planned_looks: usize,
    pub cv: f64,
    /// Cumulative empirical Type 1 error by look (length = actual looks).
    pub cumulative_type1: Vec<f64>,
}

impl E1Schedule {
    pub fn final_type1(&self) -> f64 {
        *self.cumulative_type1.last().unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct E1Outcome {
    pub oracle: E1Schedule,
    pub hacky_extension: E1Schedule,
    pub early_stop: E1Schedule,
}

/// Run the schedule-inconsistency experiment: the same simulated null
/// streams are monitored with critical values planned for 24 (oracle),
/// 12 (hacky extension) and 36 (early stop) looks.
pub fn run_e1(cfg: &E1Config) -> Result<E1Outcome> {
    let plans: [(&'static str, usize); 3] = [
        ("oracle", cfg.looks),
        ("hacky-extension", cfg.looks / 2),
        ("early-stop", cfg.looks * 3 / 2),
    ];
    let mut cvs = Vec::new();
    for (i, (_, planned)) in plans.iter().enumerate() {
        let schedule =
            SurveillanceSchedule::uniform(*planned, cfg.events_per_look, cfg.alpha);
        let cv = compute_cv(
            &schedule,
            CvModel::Poisson,
            cfg.cv_replicates,
            rng::derive_seed(cfg.master_seed, "e1/cv", i as u64),
        )?;
        cvs.push(cv.cv);
    }

    // W trajectories through the likelihood-profile path
    let trajectories: Vec<Vec<f64>> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::stream(cfg.master_seed, "e1/seed", s as u64);
            let mut cum_events = 0u64;
            let mut ws = Vec::with_capacity(cfg.looks);
            for t in 1..=cfg.looks {
                let draw: f64 = rand_distr::Poisson::new(cfg.events_per_look)
                    .expect("positive rate")
                    .sample(&mut rng);
                cum_events += draw as u64;
                let mu = cfg.events_per_look * t as f64;
                let profile = LikelihoodProfile::from_poisson_counts(cum_events, mu, 0, mu)
                    .expect("grid profile");
                ws.push(llr_statistic(&profile));
            }
            ws
        })
        .collect();

    let build = |name: &'static str, planned: usize, cv: f64| -> E1Schedule {
        let mut cumulative = Vec::with_capacity(cfg.looks);
        let mut hit = vec![false; trajectories.len()];
        for t in 0..cfg.looks {
            for (i, w) in trajectories.iter().enumerate() {
                if w[t] > cv {
                    hit[i] = true;
                }
            }
            cumulative
                .push(hit.iter().filter(|&&h| h).count() as f64 / trajectories.len() as f64);
        }
        E1Schedule { name, planned_looks: planned, cv, cumulative_type1: cumulative }
    };

    Ok(E1Outcome {
        oracle: build(plans[0].0, plans[0].1, cvs[0]),
        hacky_extension: build(plans[1].0, plans[1].1, cvs[1]),
        early_stop: build(plans[2].0, plans[2].1, cvs[2]),
    })
}

// ---------------------------------------------------------------------------
// E2: residual systematic error biases both designs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct E2Config {
    pub n_seeds: u32,
    pub n_subjects: u32,
    pub master_seed: u64,
}

impl Default for E2Config {
    fn default() -> Self {
        E2Config { n_seeds: 100, n_subjects: 5000, master_seed: 0xE2 }
    }
}

/// The confounded design-bias scenario: seasonal rates, same-shaped
/// vaccine uptake, and historical rates at 50% of the present level.
pub fn e2_scenario(n_subjects: u32, master_seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_subjects,
        n_weeks_total: 104,
        historical_weeks: (1, 52),
        surveillance_weeks: (53, 104),
        baseline_log_rate: seasonal_log_rate_curve(0.0012, 0.6, 26),
        historical_rate_multiplier: 0.5,
        covariate_effect: 0.25,
        covariate_prevalence: 0.5,
        true_log_rr: 2.0f64.ln(),
        risk_window_weeks: 6,
        uptake_curve: seasonal_uptake_curve(0.7, 0.6, 26),
        master_seed,
        outcome_stream: 0,
    }
}

/// Per-seed, per-look point estimates from the two designs.
#[derive(Debug, Clone)]
pub struct E2SeedEstimates {
    pub historical_comparator: Vec<Option<f64>>,
    pub sccs: Vec<Option<f64>>,
}

pub fn run_e2(cfg: &E2Config) -> Result<Vec<E2SeedEstimates>> {
    run_e2_with(&e2_scenario(cfg.n_subjects, 0), cfg.n_seeds, cfg.master_seed)
}

/// E2 over an arbitrary scenario template (the template's seed is
/// overridden per replicate).
pub fn run_e2_with(
    template: &ScenarioConfig,
    n_seeds: u32,
    master_seed: u64,
) -> Result<Vec<E2SeedEstimates>> {
    let risk = template.risk_window_weeks;
    let hc = DesignSpec::HistoricalComparator {
        adjustment: HcAdjustment::None,
        risk_window_weeks: risk,
    };
    let sccs = DesignSpec::Sccs { variant: SccsVariant::PrevaxExcluded, risk_window_weeks: risk };
    (0..n_seeds)
        .into_par_iter()
        .map(|s| {
            let scenario = ScenarioConfig {
                master_seed: rng::derive_seed(master_seed, "e2/seed", s as u64),
                ..template.clone()
            };
            let population = simulate_population(&scenario)?;
            let cutoffs = monthly_cutoffs(&scenario, 12);
            let snapshots = accrue(population, SnapshotMeta::of(&scenario), &cutoffs)?;
            let mut hc_est = Vec::with_capacity(12);
            let mut sccs_est = Vec::with_capacity(12);
            for snap in &snapshots {
                hc_est.push(hc.profile(snap)?.mle_value());
                sccs_est.push(sccs.profile(snap)?.mle_value());
            }
            Ok(E2SeedEstimates { historical_comparator: hc_est, sccs: sccs_est })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// E3: full sweep with injected exchangeable bias
// ---------------------------------------------------------------------------

/// Everything a sweep needs: a scenario template, the control suite,
/// designs, and the three methods' settings.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Template scenario; `true_log_rr`, `master_seed` and
    /// `outcome_stream` are overridden per control and per seed.
    pub scenario: ScenarioConfig,
    pub controls: ControlSuiteSpec,
    pub designs: Vec<DesignSpec>,
    pub prior_variances: Vec<f64>,
    pub alpha: f64,
    pub cv_replicates: usize,
    pub bias_model: BiasModelSpec,
    pub mcmc: McmcSpec,
    pub n_seeds: u32,
    pub n_looks: u32,
    pub master_seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.controls.validate()?;
        if self.designs.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one design".into()));
        }
        for d in &self.designs {
            d.validate()?;
        }
        if self.prior_variances.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one prior".into()));
        }
        self.bias_model.validate()?;
        self.mcmc.validate()?;
        if self.n_seeds == 0 || self.n_looks == 0 {
            return Err(Error::InvalidConfig("n_seeds and n_looks must be positive".into()));
        }
        Ok(())
    }
}

/// The frozen E3 sweep configuration.
pub fn e3_config(n_seeds: u32, master_seed: u64) -> SweepConfig {
    let scenario = ScenarioConfig {
        n_subjects: 2000,
        n_weeks_total: 104,
        historical_weeks: (1, 52),
        surveillance_weeks: (53, 104),
        baseline_log_rate: seasonal_log_rate_curve(0.0015, 0.5, 26),
        historical_rate_multiplier: 0.5,
        covariate_effect: 0.3,
        covariate_prevalence: 0.3,
        true_log_rr: 0.0,
        risk_window_weeks: 4,
        uptake_curve: seasonal_uptake_curve(0.7, 0.5, 26),
        master_seed: 0,
        outcome_stream: 0,
    };
    SweepConfig {
        scenario,
        controls: ControlSuiteSpec::default(),
        designs: vec![
            DesignSpec::HistoricalComparator {
                adjustment: HcAdjustment::None,
                risk_window_weeks: 4,
            },
            DesignSpec::Sccs { variant: SccsVariant::PrevaxExcluded, risk_window_weeks: 4 },
        ],
        prior_variances: vec![4.0],
        alpha: 0.05,
        cv_replicates: 10_000,
        bias_model: BiasModelSpec::default(),
        mcmc: McmcSpec::new(6_000, 1_000, 5, 2, 0).expect("valid schedule"),
        n_seeds,
        n_looks: 12,
        master_seed,
    }
}

/// Injected per-control bias draws for one sweep seed. A negative control
/// and its positive children share the draw by construction.
pub fn injected_biases(controls: &ControlSuiteSpec, seed_master: u64) -> Vec<f64> {
    let mut bias_rng = rng::stream(seed_master, "sweep/bias-injection", 0);
    (0..controls.n_negative)
        .map(|_| controls.bias_mean + controls.bias_sd * bias_rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Refit the bias model per look for one (seed, design) of a sweep and
/// return the per-look posteriors; feeds the bias-evolution figure.
pub fn bias_evolution(
    cfg: &SweepConfig,
    seed: u32,
    design_index: usize,
) -> Result<Vec<(u32, crate::bias::BiasPosterior)>> {
    cfg.validate()?;
    let design = *cfg
        .designs
        .get(design_index)
        .ok_or_else(|| Error::InvalidConfig("design index out of range".into()))?;
    let seed_master = rng::derive_seed(cfg.master_seed, "sweep/seed", seed as u64);
    let m = cfg.controls.n_negative as usize;
    let injected = injected_biases(&cfg.controls, seed_master);
    let cutoffs = monthly_cutoffs(&cfg.scenario, cfg.n_looks);
    let mut per_look: Vec<Vec<(u32, LikelihoodProfile)>> =
        (0..cfg.n_looks as usize).map(|_| Vec::with_capacity(m)).collect();
    for i in 0..m {
        let scenario = ScenarioConfig {
            master_seed: seed_master,
            outcome_stream: i as u64 + 1,
            true_log_rr: injected[i],
            ..cfg.scenario.clone()
        };
        let population = simulate_population(&scenario)?;
        let snapshots = accrue(population, SnapshotMeta::of(&scenario), &cutoffs)?;
        for (t, snap) in snapshots.iter().enumerate() {
            if let Ok(profile) = design.profile(snap) {
                per_look[t].push((i as u32, profile));
            }
        }
    }
    let mut out = Vec::new();
    for (t, ncs) in per_look.iter().enumerate() {
        let look_mcmc = cfg.mcmc.with_derived_seed(
            "sweep/bias-fit",
            ((seed as u64 * cfg.designs.len() as u64 + design_index as u64)
                * cfg.n_looks as u64
                + t as u64)
                * 16,
        );
        match fit_bias_model(ncs, &cfg.bias_model, &look_mcmc) {
            Ok(fit) => out.push((t as u32 + 1, fit)),
            Err(Error::InsufficientEvidence(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Run a sweep and aggregate it into the metric table in one step.
pub fn run_experiment(
    cfg: &SweepConfig,
    thresholds: &[f64],
) -> Result<(ResultsStore, crate::eval::MetricTable)> {
    let store = run_sweep(cfg)?;
    let table = crate::eval::compute_metrics(&store, thresholds);
    Ok((store, table))
}

/// Rows produced by one seed of the sweep.
type CellRows = Vec<(CellKey, CellValue)>;

/// Run the sweep: every (seed, design, method, prior, control, look) cell.
/// Per-cell failures are recorded as skipped cells, never abort the sweep.
/// Decisions are derived retrospectively at aggregation time, so all looks
/// are analyzed.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ResultsStore> {
    run_sweep_filtered(cfg, |_| true)
}

/// Sweep variant that skips seeds already present (resume support).
pub fn run_sweep_filtered(
    cfg: &SweepConfig,
    seed_wanted: impl Fn(u32) -> bool + Sync,
) -> Result<ResultsStore> {
    cfg.validate()?;
    let mut store = ResultsStore::new(
        cfg.designs.iter().map(|d| d.label()).collect(),
        cfg.prior_variances.clone(),
        cfg.controls.positive_rr.clone(),
        cfg.n_looks,
    );
    let seeds: Vec<u32> = (0..cfg.n_seeds).filter(|&s| seed_wanted(s)).collect();
    let per_seed: Vec<Result<CellRows>> =
        seeds.par_iter().map(|&s| sweep_one_seed(cfg, s)).collect();
    for rows in per_seed {
        for (key, value) in rows? {
            store.append(key, value);
        }
    }
    Ok(store)
}

fn sweep_one_seed(cfg: &SweepConfig, seed: u32) -> Result<CellRows> {
    let seed_master = rng::derive_seed(cfg.master_seed, "sweep/seed", seed as u64);
    let m = cfg.controls.n_negative as usize;
    let n_rr = cfg.controls.positive_rr.len();

    // injected per-control bias, shared between a negative control and its
    // positive children
    let injected = injected_biases(&cfg.controls, seed_master);

    // simulate each negative control and profile it under every design;
    // a failed profile marks its cells as skipped, never aborts the sweep
    let cutoffs = monthly_cutoffs(&cfg.scenario, cfg.n_looks);
    let n_designs = cfg.designs.len();
    let n_looks = cfg.n_looks as usize;
    // nc_profiles[d][t][i]
    let mut nc_profiles: Vec<Vec<Vec<Option<LikelihoodProfile>>>> =
        Vec::with_capacity(n_designs);
    for _ in 0..n_designs {
        nc_profiles.push((0..n_looks).map(|_| Vec::with_capacity(m)).collect());
    }
    for i in 0..m {
        let scenario = ScenarioConfig {
            master_seed: seed_master,
            outcome_stream: i as u64 + 1,
            true_log_rr: injected[i],
            ..cfg.scenario.clone()
        };
        let population = simulate_population(&scenario)?;
        let snapshots = accrue(population, SnapshotMeta::of(&scenario), &cutoffs)?;
        for (d, design) in cfg.designs.iter().enumerate() {
            for (t, snap) in snapshots.iter().enumerate() {
                nc_profiles[d][t].push(design.profile(snap).ok());
            }
        }
    }

    let skipped_cell = |true_beta: f64| CellValue {
        statistic: f64::NAN,
        threshold: f64::NAN,
        point: f64::NAN,
        lo95: f64::NAN,
        hi95: f64::NAN,
        estimable: false,
        flagged: false,
        skipped: true,
        true_beta,
    };

    let mut rows: CellRows = Vec::new();
    let snapped_rr_beta: Vec<f64> = cfg
        .controls
        .positive_rr
        .iter()
        .map(|rr| crate::grid::BetaGrid::snap_steps(rr.ln()) as f64 * crate::grid::BetaGrid::STEP)
        .collect();

    for d in 0..n_designs {
        // --- MaxSPRT: per-parent critical value from the realized
        //     expected-event schedule (oracle-matched accrual) ---
        for parent in 0..m {
            let by_look: Option<Vec<&LikelihoodProfile>> =
                (0..n_looks).map(|t| nc_profiles[d][t][parent].as_ref()).collect();
            let Some(by_look) = by_look else {
                // profile failure: every cell of this family is skipped
                for (r, outcome) in outcome_family(parent as u32, n_rr) {
                    let true_beta = r.map(|x| snapped_rr_beta[x]).unwrap_or(0.0);
                    for t in 0..n_looks {
                        rows.push((
                            CellKey {
                                seed,
                                design: d as u8,
                                method: Method::Maxsprt,
                                prior: 0,
                                outcome,
                                look: t as u8 + 1,
                            },
                            skipped_cell(true_beta),
                        ));
                    }
                }
                continue;
            };
            let schedule = realized_schedule(&by_look, cfg.designs[d], cfg.alpha);
            let cv = match schedule {
                Some(schedule) => compute_cv(
                    &schedule,
                    CvModel::Poisson,
                    cfg.cv_replicates,
                    rng::derive_seed(seed_master, "sweep/cv", (d * m + parent) as u64),
                )
                .ok(),
                None => None,
            };

            let emit_maxsprt = |outcome: OutcomeId,
                                    profiles: &[LikelihoodProfile],
                                    true_beta: f64,
                                    rows: &mut CellRows| {
                for (t, profile) in profiles.iter().enumerate() {
                    let (statistic, threshold, skipped) = match &cv {
                        Some(cv) => (llr_statistic(profile), cv.cv, false),
                        None => (f64::NAN, f64::NAN, true),
                    };
                    let point = profile.mle_value().unwrap_or(f64::NAN);
                    let (lo, hi) =
                        profile.profile_ci95().unwrap_or((f64::NAN, f64::NAN));
                    rows.push((
                        CellKey {
                            seed,
                            design: d as u8,
                            method: Method::Maxsprt,
                            prior: 0,
                            outcome,
                            look: t as u8 + 1,
                        },
                        CellValue {
                            statistic,
                            threshold,
                            point,
                            lo95: lo,
                            hi95: hi,
                            estimable: profile.estimable,
                            flagged: false,
                            skipped,
                            true_beta,
                        },
                    ));
                }
            };

            let parent_profiles: Vec<LikelihoodProfile> =
                by_look.iter().map(|p| (*p).clone()).collect();
            emit_maxsprt(OutcomeId::Negative(parent as u32), &parent_profiles, 0.0, &mut rows);
            for (r, rr) in cfg.controls.positive_rr.iter().enumerate() {
                let steps = crate::grid::BetaGrid::snap_steps(rr.ln());
                let shifted: Result<Vec<LikelihoodProfile>> =
                    parent_profiles.iter().map(|p| p.shifted_right(steps)).collect();
                let shifted = shifted?;
                emit_maxsprt(
                    OutcomeId::Positive { parent: parent as u32, rr_index: r as u8 },
                    &shifted,
                    snapped_rr_beta[r],
                    &mut rows,
                );
            }
        }

        // --- Bayes and BBC, per prior ---
        for (p, &prior_var) in cfg.prior_variances.iter().enumerate() {
            let prior = PriorSpec::new(prior_var)?;
            for t in 0..n_looks {
                // bias model fitted once per (design, look) on all NCs
                // with usable profiles
                let ncs: Vec<(u32, LikelihoodProfile)> = (0..m)
                    .filter_map(|i| {
                        nc_profiles[d][t][i].clone().map(|p| (i as u32, p))
                    })
                    .collect();
                let look_mcmc = cfg.mcmc.with_derived_seed(
                    "sweep/bias-fit",
                    ((seed as u64 * n_designs as u64 + d as u64) * n_looks as u64 + t as u64)
                        * 16
                        + p as u64,
                );
                let bias_fit = match fit_bias_model(&ncs, &cfg.bias_model, &look_mcmc) {
                    Ok(fit) => Some(fit),
                    Err(Error::InsufficientEvidence(_)) => None,
                    Err(e) => return Err(e),
                };

                for i in 0..m {
                    let Some(base) = &nc_profiles[d][t][i] else {
                        for (r, outcome) in outcome_family(i as u32, n_rr) {
                            let true_beta = r.map(|x| snapped_rr_beta[x]).unwrap_or(0.0);
                            for method in [Method::Bayes, Method::Bbc] {
                                rows.push((
                                    CellKey {
                                        seed,
                                        design: d as u8,
                                        method,
                                        prior: p as u8,
                                        outcome,
                                        look: t as u8 + 1,
                                    },
                                    skipped_cell(true_beta),
                                ));
                            }
                        }
                        continue;
                    };
                    for (r, outcome) in outcome_family(i as u32, n_rr) {
                        let (profile, true_beta) = match r {
                            None => (base.clone(), 0.0),
                            Some(rix) => {
                                let steps = crate::grid::BetaGrid::snap_steps(
                                    cfg.controls.positive_rr[rix].ln(),
                                );
                                (base.shifted_right(steps)?, snapped_rr_beta[rix])
                            }
                        };
                        let post = posterior(&profile, &prior)?;
                        rows.push((
                            CellKey {
                                seed,
                                design: d as u8,
                                method: Method::Bayes,
                                prior: p as u8,
                                outcome,
                                look: t as u8 + 1,
                            },
                            CellValue {
                                statistic: post.p_h1,
                                threshold: f64::NAN,
                                point: post.median,
                                lo95: post.ci95.0,
                                hi95: post.ci95.1,
                                estimable: true,
                                flagged: false,
                                skipped: false,
                                true_beta,
                            },
                        ));

                        let bbc_key = CellKey {
                            seed,
                            design: d as u8,
                            method: Method::Bbc,
                            prior: p as u8,
                            outcome,
                            look: t as u8 + 1,
                        };
                        match &bias_fit {
                            Some(fit) => {
                                let outcome_mcmc = look_mcmc.with_derived_seed(
                                    "sweep/debias",
                                    (i * (n_rr + 1)) as u64
                                        + r.map(|x| x as u64 + 1).unwrap_or(0),
                                );
                                let debiased = debias(&profile, &prior, fit, &outcome_mcmc)?;
                                rows.push((
                                    bbc_key,
                                    CellValue {
                                        statistic: debiased.p_h1_hat,
                                        threshold: f64::NAN,
                                        point: debiased.median,
                                        lo95: debiased.ci95.0,
                                        hi95: debiased.ci95.1,
                                        estimable: true,
                                        flagged: debiased.bias_flagged,
                                        skipped: false,
                                        true_beta,
                                    },
                                ));
                            }
                            None => {
                                rows.push((
                                    bbc_key,
                                    CellValue {
                                        statistic: f64::NAN,
                                        threshold: f64::NAN,
                                        point: f64::NAN,
                                        lo95: f64::NAN,
                                        hi95: f64::NAN,
                                        estimable: false,
                                        flagged: false,
                                        skipped: true,
                                        true_beta,
                                    },
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Iterator over a parent NC and its positive children.
fn outcome_family(
    parent: u32,
    n_rr: usize,
) -> impl Iterator<Item = (Option<usize>, OutcomeId)> {
    std::iter::once((None, OutcomeId::Negative(parent))).chain((0..n_rr).map(move |r| {
        (Some(r), OutcomeId::Positive { parent, rr_index: r as u8 })
    }))
}

/// Expected null event increments realized by a control's accrual, read
/// off the per-look profiles. Historical comparator: the expected count
/// directly. SCCS: pooled event rate times risk exposure. Returns None
/// when the final expectation is too small to calibrate against.
fn realized_schedule(
    by_look: &[&LikelihoodProfile],
    design: DesignSpec,
    alpha: f64,
) -> Option<SurveillanceSchedule> {
    let expected_cumulative: Vec<f64> = match design {
        DesignSpec::HistoricalComparator { .. } => {
            by_look.iter().map(|p| p.exposure.0).collect()
        }
        DesignSpec::Sccs { .. } => {
            let last = by_look.last()?;
            let (t_r, t_c) = last.exposure;
            let events = (last.event_counts.0 + last.event_counts.1) as f64;
            if t_r + t_c <= 0.0 {
                return None;
            }
            let rate = events / (t_r + t_c);
            by_look.iter().map(|p| rate * p.exposure.0).collect()
        }
    };
    let total = *expected_cumulative.last()?;
    if !(total > 0.05) {
        return None;
    }
    let mut prev = 0.0;
    let increments: Vec<f64> = expected_cumulative
        .iter()
        .map(|&mu| {
            let inc = (mu - prev).max(1e-6);
            prev = mu;
            inc
        })
        .collect();
    Some(SurveillanceSchedule { expected_increments: increments, alpha })
}
