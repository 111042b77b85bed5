//! Subcommand implementations.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use vigil_core::bayes::{bayes_factor, posterior, PriorSpec};
use vigil_core::bias::{debias, fit_bias_model, McmcSpec};
use vigil_core::config::{load_config, FileConfig, RunMode};
use vigil_core::design::{DesignSpec, LikelihoodProfile};
use vigil_core::eval::report::{
    line_chart_svg, metric_figures, read_results_csv, ridgeline_svg, write_metrics_csv,
    write_results_csv, Series,
};
use vigil_core::eval::scenarios::{
    bias_evolution, run_e1, run_e2_with, run_sweep_filtered, E1Config, SweepConfig,
};
use vigil_core::eval::{calibrate_threshold, compute_metrics, ResultsStore};
use vigil_core::maxsprt::{
    compute_cv, llr_statistic, CriticalValue, CvModel, Method, SurveillanceSchedule,
};
use vigil_core::rng;
use vigil_core::sim::{
    accrue, monthly_cutoffs, read_trajectories_csv, simulate_population, write_trajectories_csv,
    LookSnapshot, ScenarioConfig, SnapshotMeta, SubjectTrajectory,
};

use crate::manifest::{sha256_hex, write_atomic, RunManifest};
use crate::CliError;

type CResult = Result<(), CliError>;

fn load(config_path: &Path) -> Result<FileConfig, CliError> {
    if !config_path.exists() {
        return Err(CliError::Config(format!(
            "config file not found: {}",
            config_path.display()
        )));
    }
    Ok(load_config(config_path)?)
}

fn resolved_seed(cfg: &FileConfig, flag: Option<u64>) -> u64 {
    flag.unwrap_or(cfg.experiment.master_seed)
}

fn write_csv(
    manifest: &mut RunManifest,
    path: &Path,
    build: impl FnOnce(&mut Vec<u8>) -> Result<(), vigil_core::Error>,
) -> CResult {
    let mut buf = Vec::new();
    build(&mut buf).map_err(CliError::from)?;
    write_atomic(path, &buf)?;
    manifest.record_output(path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> CResult {
    let cfg = load(config_path)?;
    let master = resolved_seed(&cfg, seed);
    let mut manifest = RunManifest::begin("simulate", &cfg, master)?;
    let header = manifest.csv_header();

    let scenario = cfg.scenario_config(master)?;
    let population = simulate_population(&scenario)?;
    write_csv(&mut manifest, &out.join("trajectories.csv"), |buf| {
        write_trajectories_csv(buf, &population, &header)
    })?;

    // negative-control outcomes share the exposure assignment and carry
    // injected bias, matching sweep seed 0
    if let Some(controls) = &cfg.controls {
        let suite = cfg.controls_spec()?;
        let seed_master = rng::derive_seed(master, "sweep/seed", 0);
        let injected = vigil_core::eval::scenarios::injected_biases(&suite, seed_master);
        for i in 0..controls.n_negative {
            let nc_scenario = ScenarioConfig {
                master_seed: seed_master,
                outcome_stream: i as u64 + 1,
                true_log_rr: injected[i as usize],
                ..cfg.scenario_config(master)?
            };
            let nc_population = simulate_population(&nc_scenario)?;
            write_csv(&mut manifest, &out.join(format!("nc_{i:03}.csv")), |buf| {
                write_trajectories_csv(buf, &nc_population, &header)
            })?;
        }
    }
    manifest.finish(out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// cv
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct CachedCv {
    cv: f64,
    empirical_alpha_at_cv: f64,
    alpha: f64,
    mc_replicates: usize,
    seed: u64,
    expected_increments: Vec<f64>,
}

fn cv_cache_key(schedule: &SurveillanceSchedule, replicates: usize, seed: u64) -> String {
    let incs: Vec<String> =
        schedule.expected_increments.iter().map(|x| format!("{x:.9}")).collect();
    let key = format!(
        "model=poisson;alpha={:.9};replicates={replicates};seed={seed};increments={}",
        schedule.alpha,
        incs.join(",")
    );
    sha256_hex(key.as_bytes())[..16].to_string()
}

/// Compute a critical value, reusing the on-disk cache when the exact
/// (schedule, model, alpha, replicates, seed) was calibrated before.
fn cv_cached(
    cache_dir: &Path,
    schedule: &SurveillanceSchedule,
    replicates: usize,
    seed: u64,
) -> Result<CriticalValue, CliError> {
    let key = cv_cache_key(schedule, replicates, seed);
    let path = cache_dir.join(format!("{key}.json"));
    if path.exists() {
        let text = fs::read_to_string(&path)?;
        if let Ok(cached) = serde_json::from_str::<CachedCv>(&text) {
            return Ok(CriticalValue {
                cv: cached.cv,
                schedule: schedule.clone(),
                model: CvModel::Poisson,
                mc_replicates: cached.mc_replicates,
                seed: cached.seed,
                empirical_alpha_at_cv: cached.empirical_alpha_at_cv,
            });
        }
    }
    let cv = compute_cv(schedule, CvModel::Poisson, replicates, seed)?;
    let cached = CachedCv {
        cv: cv.cv,
        empirical_alpha_at_cv: cv.empirical_alpha_at_cv,
        alpha: schedule.alpha,
        mc_replicates: replicates,
        seed,
        expected_increments: schedule.expected_increments.clone(),
    };
    write_atomic(&path, serde_json::to_string_pretty(&cached).map_err(anyhow::Error::from)?.as_bytes())?;
    Ok(cv)
}

pub fn cv(config_path: &Path, out: &Path, seed: Option<u64>) -> CResult {
    let cfg = load(config_path)?;
    let master = resolved_seed(&cfg, seed);
    let schedule = SurveillanceSchedule::uniform(
        cfg.experiment.n_looks as usize,
        cfg.experiment.events_per_look,
        cfg.methods.alpha,
    );
    let cache = out.join("cv_cache");
    let cv = cv_cached(
        &cache,
        &schedule,
        cfg.methods.cv_replicates,
        rng::derive_seed(master, "cv", 0),
    )?;
    println!(
        "cv = {:.6} (empirical alpha {:.4}, {} looks x {} expected events, cache {})",
        cv.cv,
        cv.empirical_alpha_at_cv,
        schedule.planned_looks(),
        cfg.experiment.events_per_look,
        cache.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

pub fn analyze(
    config_path: &Path,
    data: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    resume: bool,
) -> CResult {
    let cfg = load(config_path)?;
    let master = resolved_seed(&cfg, seed);
    let mut manifest = RunManifest::begin("analyze", &cfg, master)?;
    match cfg.experiment.mode {
        RunMode::E1 => analyze_e1(&cfg, master, out, &mut manifest)?,
        RunMode::E2 => analyze_e2(&cfg, master, out, &mut manifest)?,
        RunMode::E3 => analyze_e3(&cfg, master, out, resume, &mut manifest)?,
        RunMode::Single => {
            let data = data.ok_or_else(|| {
                CliError::Config("single mode needs --data with simulate outputs".into())
            })?;
            analyze_single(&cfg, master, data, out, &mut manifest)?;
        }
    }
    manifest.finish(out)?;
    Ok(())
}

fn analyze_e1(cfg: &FileConfig, master: u64, out: &Path, manifest: &mut RunManifest) -> CResult {
    let e1 = E1Config {
        n_seeds: cfg.experiment.n_seeds,
        looks: cfg.experiment.n_looks as usize,
        events_per_look: cfg.experiment.events_per_look,
        alpha: cfg.methods.alpha,
        cv_replicates: cfg.methods.cv_replicates.max(10_000),
        master_seed: master,
    };
    let outcome = run_e1(&e1)?;
    let header = manifest.csv_header();
    write_csv(manifest, &out.join("e1_results.csv"), |buf| {
        use std::io::Write;
        for line in &header {
            writeln!(buf, "# {line}")?;
        }
        writeln!(buf, "schedule,planned_looks,cv,look,cumulative_type1")?;
        for s in [&outcome.oracle, &outcome.hacky_extension, &outcome.early_stop] {
            for (t, v) in s.cumulative_type1.iter().enumerate() {
                writeln!(
                    buf,
                    "{},{},{:.6},{},{:.6}",
                    s.name,
                    s.planned_looks,
                    s.cv,
                    t + 1,
                    v
                )?;
            }
        }
        Ok(())
    })
}

fn analyze_e2(cfg: &FileConfig, master: u64, out: &Path, manifest: &mut RunManifest) -> CResult {
    let scenario = cfg.scenario_config(0)?;
    let results = run_e2_with(&scenario, cfg.experiment.n_seeds, master)?;
    let header = manifest.csv_header();
    write_csv(manifest, &out.join("e2_results.csv"), |buf| {
        use std::io::Write;
        for line in &header {
            writeln!(buf, "# {line}")?;
        }
        writeln!(buf, "seed,look,hc_mle,sccs_mle")?;
        for (s, r) in results.iter().enumerate() {
            for t in 0..r.historical_comparator.len() {
                let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
                writeln!(
                    buf,
                    "{},{},{},{}",
                    s,
                    t + 1,
                    fmt(r.historical_comparator[t]),
                    fmt(r.sccs[t])
                )?;
            }
        }
        Ok(())
    })
}

fn analyze_e3(
    cfg: &FileConfig,
    master: u64,
    out: &Path,
    resume: bool,
    manifest: &mut RunManifest,
) -> CResult {
    let sweep: SweepConfig = cfg.sweep_config(master)?;
    let results_path = out.join("results.csv");
    let mut store = if resume && results_path.exists() {
        let existing = read_results_csv(BufReader::new(fs::File::open(&results_path)?))?;
        let done = existing.seeds_present();
        eprintln!(
            "vigil: resume: {} seeds already complete, running {}",
            done.len(),
            sweep.n_seeds as usize - done.len().min(sweep.n_seeds as usize)
        );
        let fresh = run_sweep_filtered(&sweep, |s| !done.contains(&s))?;
        let mut merged = fresh;
        merged.merge_from(existing);
        merged
    } else {
        run_sweep_filtered(&sweep, |_| true)?
    };
    // stable row order regardless of merge history
    store.n_looks = sweep.n_looks;
    let header = manifest.csv_header();
    write_csv(manifest, &results_path, |buf| write_results_csv(buf, &store, &header))?;

    // bias-evolution exports for the report figures (sweep seed 0)
    for (d, _) in sweep.designs.iter().enumerate() {
        let evolution = bias_evolution(&sweep, 0, d)?;
        if evolution.is_empty() {
            continue;
        }
        let label = sweep.designs[d].label();
        write_csv(manifest, &out.join(format!("bias_samples_{label}.csv")), |buf| {
            use std::io::Write;
            for line in &header {
                writeln!(buf, "# {line}")?;
            }
            let mut first = true;
            for (look, fit) in &evolution {
                vigil_core::bias::write_bias_samples_csv(buf, *look, fit, first)?;
                first = false;
            }
            Ok(())
        })?;
        write_csv(manifest, &out.join(format!("bias_density_{label}.csv")), |buf| {
            use std::io::Write;
            for line in &header {
                writeln!(buf, "# {line}")?;
            }
            writeln!(buf, "look,beta,density")?;
            for (look, fit) in &evolution {
                let density = fit.predictive_density();
                for (i, d) in density.iter().enumerate() {
                    writeln!(
                        buf,
                        "{},{:.3},{:.9}",
                        look,
                        vigil_core::BetaGrid::beta(i),
                        d
                    )?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Manifest hash recorded in an input CSV's comment header, if any;
/// downstream outputs are stamped with it to keep the provenance chain.
fn source_manifest_comment(path: &Path) -> Vec<String> {
    if let Ok(text) = fs::read_to_string(path) {
        for line in text.lines().take(5) {
            if let Some(rest) = line.strip_prefix("# manifest=") {
                return vec![format!("manifest={rest}")];
            }
        }
    }
    Vec::new()
}

fn read_population(path: &Path) -> Result<Vec<SubjectTrajectory>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(read_trajectories_csv(BufReader::new(file))?)
}

fn analyze_single(
    cfg: &FileConfig,
    master: u64,
    data: &Path,
    out: &Path,
    manifest: &mut RunManifest,
) -> CResult {
    let designs = cfg.design_specs()?;
    if designs.is_empty() {
        eprintln!("vigil: warning: no designs configured; nothing to analyze");
        return Ok(());
    }
    let scenario = cfg.scenario_config(master)?;
    let cutoffs = monthly_cutoffs(&scenario, cfg.experiment.n_looks);
    let meta = SnapshotMeta::of(&scenario);
    let population = read_population(&data.join("trajectories.csv"))?;
    let snapshots = accrue(population, meta, &cutoffs)?;

    // negative-control outcomes, if simulate materialized them
    let mut nc_snapshots: Vec<(u32, Vec<LookSnapshot>)> = Vec::new();
    if let Some(controls) = &cfg.controls {
        for i in 0..controls.n_negative {
            let path = data.join(format!("nc_{i:03}.csv"));
            if !path.exists() {
                continue;
            }
            let nc_population = read_population(&path)?;
            nc_snapshots.push((i, accrue(nc_population, meta, &cutoffs)?));
        }
    }

    let header = manifest.csv_header();
    let cache = out.join("cv_cache");
    for design in &designs {
        let label = design.label();
        let profiles: Vec<LikelihoodProfile> = snapshots
            .iter()
            .map(|s| design.profile(s))
            .collect::<Result<_, _>>()?;

        // profile interchange CSVs, one per look
        for (t, profile) in profiles.iter().enumerate() {
            let metadata: Vec<(String, String)> = header
                .iter()
                .map(|line| {
                    let mut parts = line.splitn(2, '=');
                    (
                        parts.next().unwrap_or_default().to_string(),
                        parts.next().unwrap_or_default().to_string(),
                    )
                })
                .chain([
                    ("design".to_string(), label.clone()),
                    ("look".to_string(), (t + 1).to_string()),
                ])
                .collect();
            let name = format!("profile_{label}_look{:02}.csv", t + 1);
            write_csv(manifest, &out.join(name), |buf| {
                vigil_core::design::write_profile_csv(buf, profile, &metadata)
            })?;
        }

        // MaxSPRT
        let schedule = SurveillanceSchedule {
            expected_increments: realized_increments(&profiles, design),
            alpha: cfg.methods.alpha,
        };
        if schedule.validate().is_ok() {
            let cv = cv_cached(
                &cache,
                &schedule,
                cfg.methods.cv_replicates,
                rng::derive_seed(master, "cv", 0),
            )?;
            write_csv(manifest, &out.join(format!("decision_maxsprt_{label}.csv")), |buf| {
                use std::io::Write;
                for line in &header {
                    writeln!(buf, "# {line}")?;
                }
                writeln!(buf, "look,statistic,threshold,signaled,point,lo95,hi95")?;
                for (t, p) in profiles.iter().enumerate() {
                    let w = llr_statistic(p);
                    let point = p.mle_value();
                    let ci = p.profile_ci95();
                    writeln!(
                        buf,
                        "{},{:.6},{:.6},{},{},{},{}",
                        t + 1,
                        w,
                        cv.cv,
                        (w > cv.cv) as u8,
                        point.map(|x| format!("{x:.6}")).unwrap_or_default(),
                        ci.map(|c| format!("{:.6}", c.0)).unwrap_or_default(),
                        ci.map(|c| format!("{:.6}", c.1)).unwrap_or_default(),
                    )?;
                }
                Ok(())
            })?;
        } else {
            eprintln!("vigil: warning: degenerate schedule for {label}; maxsprt skipped");
        }

        // Bayes and BBC per prior and threshold
        for &prior_var in &cfg.methods.prior_variances {
            let prior = PriorSpec::new(prior_var)?;
            let posteriors: Vec<_> = profiles
                .iter()
                .map(|p| posterior(p, &prior))
                .collect::<Result<_, _>>()?;
            write_csv(
                manifest,
                &out.join(format!("posteriors_{label}_p{prior_var}.csv")),
                |buf| {
                    use std::io::Write;
                    for line in &header {
                        writeln!(buf, "# {line}")?;
                    }
                    writeln!(buf, "look,p_h1,median,lo95,hi95,bf10")?;
                    for (t, (post, profile)) in
                        posteriors.iter().zip(&profiles).enumerate()
                    {
                        writeln!(
                            buf,
                            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                            t + 1,
                            post.p_h1,
                            post.median,
                            post.ci95.0,
                            post.ci95.1,
                            bayes_factor(profile, &prior)
                        )?;
                    }
                    Ok(())
                },
            )?;

            // BBC trajectory (bias fitted per look on the NC profiles)
            let bbc: Option<Vec<(f64, f64, f64, f64, bool)>> = if nc_snapshots.is_empty() {
                None
            } else {
                let mut rows = Vec::with_capacity(profiles.len());
                for (t, outcome_profile) in profiles.iter().enumerate() {
                    let ncs: Vec<(u32, LikelihoodProfile)> = nc_snapshots
                        .iter()
                        .map(|(i, snaps)| Ok((*i, design.profile(&snaps[t])?)))
                        .collect::<Result<_, vigil_core::Error>>()?;
                    let mcmc = McmcSpec::new(
                        cfg.methods.mcmc.total_iterations,
                        cfg.methods.mcmc.burn_in,
                        cfg.methods.mcmc.thin,
                        cfg.methods.mcmc.chains,
                        rng::derive_seed(master, "single/bias-fit", t as u64),
                    )?;
                    match fit_bias_model(&ncs, &cfg.bias_model()?, &mcmc) {
                        Ok(fit) => {
                            let db = debias(outcome_profile, &prior, &fit, &mcmc)?;
                            rows.push((
                                db.p_h1_hat,
                                db.median,
                                db.ci95.0,
                                db.ci95.1,
                                db.bias_flagged,
                            ));
                        }
                        Err(vigil_core::Error::InsufficientEvidence(_)) => {
                            rows.push((f64::NAN, f64::NAN, f64::NAN, f64::NAN, false));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                Some(rows)
            };

            for &delta in &cfg.methods.thresholds {
                let name = format!("decision_bayes_{label}_p{prior_var}_d{delta}.csv");
                write_csv(manifest, &out.join(name), |buf| {
                    use std::io::Write;
                    for line in &header {
                        writeln!(buf, "# {line}")?;
                    }
                    writeln!(buf, "look,statistic,threshold,signaled")?;
                    for (t, post) in posteriors.iter().enumerate() {
                        writeln!(
                            buf,
                            "{},{:.6},{delta},{}",
                            t + 1,
                            post.p_h1,
                            (post.p_h1 > delta) as u8
                        )?;
                    }
                    Ok(())
                })?;
                if let Some(bbc) = &bbc {
                    let name = format!("decision_bbc_{label}_p{prior_var}_d{delta}.csv");
                    write_csv(manifest, &out.join(name), |buf| {
                        use std::io::Write;
                        for line in &header {
                            writeln!(buf, "# {line}")?;
                        }
                        writeln!(
                            buf,
                            "look,statistic,threshold,signaled,median,lo95,hi95,flagged"
                        )?;
                        for (t, row) in bbc.iter().enumerate() {
                            writeln!(
                                buf,
                                "{},{:.6},{delta},{},{:.6},{:.6},{:.6},{}",
                                t + 1,
                                row.0,
                                (row.0 > delta) as u8,
                                row.1,
                                row.2,
                                row.3,
                                row.4 as u8
                            )?;
                        }
                        Ok(())
                    })?;
                }
            }
        }
    }
    Ok(())
}

/// Per-look expected-event increments realized by the data, for the
/// single-dataset MaxSPRT arm.
fn realized_increments(profiles: &[LikelihoodProfile], design: &DesignSpec) -> Vec<f64> {
    let cumulative: Vec<f64> = match design {
        DesignSpec::HistoricalComparator { .. } => {
            profiles.iter().map(|p| p.exposure.0).collect()
        }
        DesignSpec::Sccs { .. } => {
            let last = profiles.last().expect("at least one look");
            let (t_r, t_c) = last.exposure;
            let events = (last.event_counts.0 + last.event_counts.1) as f64;
            let rate = if t_r + t_c > 0.0 { events / (t_r + t_c) } else { 0.0 };
            profiles.iter().map(|p| rate * p.exposure.0).collect()
        }
    };
    let mut prev = 0.0;
    cumulative
        .iter()
        .map(|&mu| {
            let inc = (mu - prev).max(1e-6);
            prev = mu;
            inc
        })
        .collect()
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

pub fn calibrate(results_dir: &Path, target_type1: f64, out: &Path) -> CResult {
    let path = results_dir.join("results.csv");
    if !path.exists() {
        return Err(CliError::Config(format!(
            "no results.csv in {} (run `vigil analyze` first)",
            results_dir.display()
        )));
    }
    let store = read_results_csv(BufReader::new(fs::File::open(&path)?))?;
    let provenance = source_manifest_comment(&path);
    let mut buf = Vec::new();
    {
        use std::io::Write;
        for line in &provenance {
            writeln!(&mut buf, "# {line}").map_err(vigil_core::Error::from)?;
        }
        writeln!(&mut buf, "method,design,prior,delta1,achieved_type1,flagged")
            .map_err(vigil_core::Error::from)?;
        for method in [Method::Bayes, Method::Bbc] {
            for d in 0..store.design_labels.len() as u8 {
                for p in 0..store.prior_variances.len() as u8 {
                    let maxima = store.nc_trajectory_maxima(method, d, p);
                    if maxima.is_empty() {
                        continue;
                    }
                    let cal = calibrate_threshold(&maxima, target_type1);
                    writeln!(
                        &mut buf,
                        "{},{},{},{:.3},{:.6},{}",
                        method.label(),
                        store.design_labels[d as usize],
                        store.prior_variances[p as usize],
                        cal.delta1,
                        cal.achieved_type1,
                        cal.flagged as u8
                    )
                    .map_err(vigil_core::Error::from)?;
                }
            }
        }
    }
    write_atomic(&out.join("calibration.csv"), &buf)?;
    println!("calibration written to {}", out.join("calibration.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn report(results_dir: &Path, out: &Path, config: Option<&Path>) -> CResult {
    let deltas = match config {
        Some(path) => load(path)?.methods.thresholds,
        None => vec![0.8, 0.9, 0.95],
    };
    let figures_dir = out.join("figures");
    let mut wrote_anything = false;

    // sweep results -> metric table + method figures
    let results_path = results_dir.join("results.csv");
    let store = if results_path.exists() {
        read_results_csv(BufReader::new(fs::File::open(&results_path)?))?
    } else {
        eprintln!("vigil: note: no results.csv; metric table will be empty");
        ResultsStore::default()
    };
    let table = compute_metrics(&store, &deltas);
    let provenance = source_manifest_comment(&results_path);
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &table, &provenance)?;
    write_atomic(&out.join("metrics.csv"), &buf)?;
    for (name, svg) in metric_figures(&table) {
        write_atomic(&figures_dir.join(name), svg.as_bytes())?;
        wrote_anything = true;
    }

    // schedule experiment figure
    let e1_path = results_dir.join("e1_results.csv");
    if e1_path.exists() {
        let text = fs::read_to_string(&e1_path)?;
        let mut series: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
        for line in text.lines() {
            if line.starts_with('#') || line.starts_with("schedule,") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 5 {
                if let (Ok(look), Ok(t1)) = (f[3].parse::<f64>(), f[4].parse::<f64>()) {
                    series.entry(f[0].to_string()).or_default().push((look, t1));
                }
            }
        }
        let series: Vec<Series> = series
            .into_iter()
            .map(|(name, points)| Series { name, points })
            .collect();
        if !series.is_empty() {
            let svg = line_chart_svg(
                "MaxSPRT Type 1 error under three pre-specified schedules",
                "analysis month",
                "cumulative Type 1 error",
                &series,
                Some((0.0, 0.12)),
            );
            write_atomic(&figures_dir.join("e1_schedules.svg"), svg.as_bytes())?;
            wrote_anything = true;
        }
    } else {
        eprintln!("vigil: note: no e1_results.csv (gap, not a failure)");
    }

    // estimate-trajectory figure from the design-bias experiment
    let e2_path = results_dir.join("e2_results.csv");
    if e2_path.exists() {
        let text = fs::read_to_string(&e2_path)?;
        let mut hc: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
        let mut sccs: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
        for line in text.lines() {
            if line.starts_with('#') || line.starts_with("seed,") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 4 {
                if let Ok(look) = f[1].parse::<u32>() {
                    if let Ok(v) = f[2].parse::<f64>() {
                        hc.entry(look).or_default().push(v.exp());
                    }
                    if let Ok(v) = f[3].parse::<f64>() {
                        sccs.entry(look).or_default().push(v.exp());
                    }
                }
            }
        }
        let med = |m: &std::collections::BTreeMap<u32, Vec<f64>>| -> Vec<(f64, f64)> {
            m.iter()
                .map(|(look, vs)| {
                    let mut vs = vs.clone();
                    vs.sort_by(f64::total_cmp);
                    (*look as f64, vs[vs.len() / 2])
                })
                .collect()
        };
        let series = vec![
            Series { name: "historical comparator".into(), points: med(&hc) },
            Series { name: "SCCS".into(), points: med(&sccs) },
        ];
        let svg = line_chart_svg(
            "Median RR estimate by design (true RR = 2)",
            "analysis month",
            "rate ratio estimate",
            &series,
            None,
        );
        write_atomic(&figures_dir.join("e2_design_bias.svg"), svg.as_bytes())?;
        wrote_anything = true;
    } else {
        eprintln!("vigil: note: no e2_results.csv (gap, not a failure)");
    }

    // bias-density ridgelines
    for entry in fs::read_dir(results_dir).into_iter().flatten().flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_prefix("bias_density_") {
            let label = rest.trim_end_matches(".csv");
            let text = fs::read_to_string(entry.path())?;
            let mut per_look: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
            for line in text.lines() {
                if line.starts_with('#') || line.starts_with("look,") {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() == 3 {
                    if let (Ok(look), Ok(d)) = (f[0].parse::<u32>(), f[2].parse::<f64>()) {
                        per_look.entry(look).or_default().push(d);
                    }
                }
            }
            let densities: Vec<(String, Vec<f64>)> = per_look
                .into_iter()
                .map(|(look, d)| (format!("month {look}"), d))
                .collect();
            if !densities.is_empty() {
                let svg = ridgeline_svg(
                    &format!("Learned bias distribution over time ({label})"),
                    &densities,
                );
                write_atomic(
                    &figures_dir.join(format!("bias_evolution_{label}.svg")),
                    svg.as_bytes(),
                )?;
                wrote_anything = true;
            }
        }
    }

    if !wrote_anything {
        eprintln!("vigil: note: only the metric table was produced (no figure inputs found)");
    }
    Ok(())
}
