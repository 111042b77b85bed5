//! MaxSPRT: maximized log-likelihood-ratio sequential testing.
//!
//! The statistic at each look is `log(sup_{beta>0} L / sup_{beta<=0} L)`
//! evaluated on the profile grid (the point beta = 0 belongs to the null).
//! The critical value for a pre-specified surveillance schedule is
//! calibrated by Monte Carlo under the Poisson null: simulate the schedule,
//! take the running maximum of the statistic across looks, and pick the
//! smallest threshold whose exceedance fraction stays within alpha.

use rayon::prelude::*;

use crate::design::LikelihoodProfile;
use crate::error::{Error, Result};
use crate::grid::BetaGrid;
use crate::num::parabolic_peak;
use crate::rng;

/// Pre-specified surveillance plan: per-look expected event increments
/// under the null and the overall significance level.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveillanceSchedule {
    pub expected_increments: Vec<f64>,
    pub alpha: f64,
}

impl SurveillanceSchedule {
    pub fn uniform(planned_looks: usize, events_per_look: f64, alpha: f64) -> Self {
        SurveillanceSchedule {
            expected_increments: vec![events_per_look; planned_looks],
            alpha,
        }
    }

    pub fn planned_looks(&self) -> usize {
        self.expected_increments.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.expected_increments.is_empty() {
            return Err(Error::InvalidConfig("schedule needs at least one look".into()));
        }
        if self.expected_increments.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidConfig(
                "schedule increments must be positive expected event counts".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::InvalidConfig("alpha must be in (0, 0.5]".into()));
        }
        Ok(())
    }
}

/// Data model used for critical-value calibration. Only the Poisson count
/// model is implemented; the binomial variant is out of scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvModel {
    Poisson,
}

/// A calibrated critical value together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValue {
    pub cv: f64,
    pub schedule: SurveillanceSchedule,
    pub model: CvModel,
    pub mc_replicates: usize,
    pub seed: u64,
    /// Exceedance fraction actually achieved at `cv` (at most alpha).
    pub empirical_alpha_at_cv: f64,
}

/// Testing method that produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Maxsprt,
    Bayes,
    Bbc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Maxsprt => "maxsprt",
            Method::Bayes => "bayes",
            Method::Bbc => "bbc",
        }
    }
}

/// Per-look record of a sequential test.
#[derive(Debug, Clone, PartialEq)]
pub struct LookRecord {
    pub look: u32,
    pub statistic: f64,
    pub threshold: f64,
    pub signaled: bool,
}

/// Outcome of a sequential procedure: one record per analyzed look, ending
/// at the first signal if any.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialDecision {
    pub method: Method,
    pub looks: Vec<LookRecord>,
    pub stopping_time: Option<u32>,
}

impl SequentialDecision {
    /// First-crossing rule over a statistic trajectory: stops at the first
    /// look whose statistic strictly exceeds its threshold; no records are
    /// kept past the stop.
    pub fn first_crossing(
        method: Method,
        stats_and_thresholds: impl IntoIterator<Item = (f64, f64)>,
    ) -> Self {
        let mut looks = Vec::new();
        let mut stopping_time = None;
        for (i, (statistic, threshold)) in stats_and_thresholds.into_iter().enumerate() {
            let look = i as u32 + 1;
            let signaled = statistic > threshold;
            looks.push(LookRecord { look, statistic, threshold, signaled });
            if signaled {
                stopping_time = Some(look);
                break;
            }
        }
        SequentialDecision { method, looks, stopping_time }
    }
}

/// Maximized LLR statistic of a profile: each half-line supremum is the
/// grid maximum with parabolic refinement; beta = 0 is in the null, and the
/// open-side supremum at the origin is its boundary limit.
pub fn llr_statistic(profile: &LikelihoodProfile) -> f64 {
    let sup_h1 = half_line_sup(&profile.loglik, BetaGrid::ZERO, BetaGrid::LEN - 1);
    let sup_h0 = half_line_sup(&profile.loglik, 0, BetaGrid::ZERO);
    sup_h1 - sup_h0
}

fn half_line_sup(values: &[f64], lo: usize, hi: usize) -> f64 {
    let mut argmax = lo;
    for i in lo..=hi {
        if values[i] > values[argmax] {
            argmax = i;
        }
    }
    if argmax > lo && argmax < hi {
        // interior: refine the peak value with the fitted parabola
        let (ym, y0, yp) = (values[argmax - 1], values[argmax], values[argmax + 1]);
        let x = parabolic_peak(0.0, 1.0, ym, y0, yp);
        let denom = ym - 2.0 * y0 + yp;
        if denom < 0.0 {
            return y0 - 0.25 * (ym - yp) * x;
        }
    }
    values[argmax]
}

/// Closed-form Poisson LLR for cumulative count `c` against expected `mu`.
/// Used by the null calibration loop where profiles would be wasteful.
pub fn poisson_llr(c: u64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let magnitude = if c == 0 {
        mu
    } else {
        let c = c as f64;
        c * (c / mu).ln() - (c - mu)
    };
    if (c as f64) > mu {
        magnitude
    } else {
        -magnitude
    }
}

/// Calibrate the critical value for a schedule by Monte Carlo under the
/// null. Ties break toward the smaller threshold that still keeps the
/// exceedance fraction within alpha.
pub fn compute_cv(
    schedule: &SurveillanceSchedule,
    model: CvModel,
    mc_replicates: usize,
    seed: u64,
) -> Result<CriticalValue> {
    schedule.validate()?;
    if mc_replicates < 10_000 {
        return Err(Error::InvalidConfig("cv calibration needs >= 10^4 replicates".into()));
    }
    let CvModel::Poisson = model;

    let mut max_stats: Vec<f64> = (0..mc_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, "cv/replicate", r as u64);
            let mut cum_events = 0u64;
            let mut cum_mu = 0.0;
            let mut w_max = f64::NEG_INFINITY;
            for inc in &schedule.expected_increments {
                cum_mu += inc;
                cum_events += draw_poisson(&mut rng, *inc);
                let w = poisson_llr(cum_events, cum_mu);
                if w > w_max {
                    w_max = w;
                }
            }
            w_max
        })
        .collect();
    max_stats.sort_by(f64::total_cmp);

    let allowed = (schedule.alpha * mc_replicates as f64).floor() as usize;
    // index of the smallest sample value with at most `allowed` strictly
    // greater values
    let k = mc_replicates
        .checked_sub(allowed + 1)
        .ok_or_else(|| Error::Numeric("alpha admits every threshold".into()))?;
    let mut idx = k;
    // move left across ties so the reported cv is the smallest value with
    // the same exceedance
    while idx > 0 && max_stats[idx - 1] == max_stats[idx] {
        idx -= 1;
    }
    let cv = max_stats[idx];
    let exceed = max_stats.iter().filter(|&&w| w > cv).count();
    let empirical = exceed as f64 / mc_replicates as f64;
    if !(cv > 0.0) {
        return Err(Error::Numeric(format!(
            "calibrated cv = {cv:.4} is not positive; schedule is degenerate"
        )));
    }
    Ok(CriticalValue {
        cv,
        schedule: schedule.clone(),
        model,
        mc_replicates,
        seed,
        empirical_alpha_at_cv: empirical,
    })
}

fn draw_poisson(rng: &mut rand_chacha::ChaCha8Rng, lambda: f64) -> u64 {
    use rand_distr::Distribution;
    if lambda <= 0.0 {
        return 0;
    }
    let sample: f64 = rand_distr::Poisson::new(lambda).expect("positive lambda").sample(rng);
    sample as u64
}

/// Run MaxSPRT over ordered per-look profiles with a calibrated cv.
pub fn run_maxsprt(
    profiles_by_look: &[LikelihoodProfile],
    cv: &CriticalValue,
) -> SequentialDecision {
    SequentialDecision::first_crossing(
        Method::Maxsprt,
        profiles_by_look.iter().map(|p| (llr_statistic(p), cv.cv)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_profile(c: u64, mu: f64) -> LikelihoodProfile {
        LikelihoodProfile::from_poisson_counts(c, mu, 0, 1.0).unwrap()
    }

    #[test]
    fn llr_matches_closed_form_examples() {
        // c=20, mu=10: W = 20 ln 2 - 10
        let w = llr_statistic(&poisson_profile(20, 10.0));
        assert!((w - 3.862_943_611).abs() < 1e-3, "w = {w}");
        // c = mu: both half-line suprema sit at beta = 0
        let w0 = llr_statistic(&poisson_profile(10, 10.0));
        assert!(w0.abs() < 1e-9, "w0 = {w0}");
        // c=5, mu=10: negative statistic, never signals
        let wn = llr_statistic(&poisson_profile(5, 10.0));
        assert!((wn - (5.0 * 2.0f64.ln() - 5.0)).abs() < 1e-3, "wn = {wn}");
        assert!(wn < 0.0);
    }

    #[test]
    fn llr_invariant_to_profile_constant() {
        // from_grid normalizes the maximum away, so adding a constant to
        // the raw inputs cannot change the statistic
        let base = poisson_profile(17, 9.0);
        let shifted = LikelihoodProfile::from_grid(
            base.loglik.iter().map(|v| v - 123.456).collect(),
            base.event_counts,
            base.exposure,
            true,
        )
        .unwrap();
        let a = llr_statistic(&base);
        let b = llr_statistic(&shifted);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn closed_form_llr_signs_and_zero() {
        assert!(poisson_llr(20, 10.0) > 0.0);
        assert!(poisson_llr(5, 10.0) < 0.0);
        assert_eq!(poisson_llr(0, 7.5), -7.5);
    }

    #[test]
    fn cv_is_reproducible_and_positive() {
        let schedule = SurveillanceSchedule::uniform(6, 8.0, 0.05);
        let a = compute_cv(&schedule, CvModel::Poisson, 20_000, 7).unwrap();
        let b = compute_cv(&schedule, CvModel::Poisson, 20_000, 7).unwrap();
        assert_eq!(a.cv, b.cv);
        assert!(a.cv > 0.0);
        assert!(a.empirical_alpha_at_cv <= 0.05);
    }

    #[test]
    fn single_look_cv_is_the_marginal_quantile() {
        let schedule = SurveillanceSchedule::uniform(1, 10.0, 0.05);
        let cv = compute_cv(&schedule, CvModel::Poisson, 50_000, 11).unwrap();
        // recompute the (1 - alpha) quantile of the one-look W distribution
        // with the same streams
        let mut ws: Vec<f64> = (0..50_000u64)
            .map(|r| {
                let mut rng = rng::stream(11, "cv/replicate", r);
                poisson_llr(draw_poisson(&mut rng, 10.0), 10.0)
            })
            .collect();
        ws.sort_by(f64::total_cmp);
        let allowed = (0.05f64 * 50_000.0).floor() as usize;
        let q = ws[50_000 - allowed - 1];
        assert_eq!(cv.cv, q);
    }

    #[test]
    fn more_planned_looks_need_a_larger_cv() {
        let cv24 = compute_cv(
            &SurveillanceSchedule::uniform(24, 10.0, 0.05),
            CvModel::Poisson,
            40_000,
            3,
        )
        .unwrap();
        let cv36 = compute_cv(
            &SurveillanceSchedule::uniform(36, 10.0, 0.05),
            CvModel::Poisson,
            40_000,
            3,
        )
        .unwrap();
        assert!(
            cv36.cv >= cv24.cv,
            "cv36 = {} < cv24 = {}",
            cv36.cv,
            cv24.cv
        );
    }

    #[test]
    fn rejects_degenerate_schedules() {
        let zero = SurveillanceSchedule { expected_increments: vec![0.0, 5.0], alpha: 0.05 };
        assert!(compute_cv(&zero, CvModel::Poisson, 10_000, 1).is_err());
        let schedule = SurveillanceSchedule::uniform(4, 5.0, 0.05);
        assert!(compute_cv(&schedule, CvModel::Poisson, 100, 1).is_err());
    }

    #[test]
    fn first_crossing_stops_at_first_exceedance() {
        let schedule = SurveillanceSchedule::uniform(3, 5.0, 0.05);
        let cv = CriticalValue {
            cv: 2.0,
            schedule,
            model: CvModel::Poisson,
            mc_replicates: 10_000,
            seed: 0,
            empirical_alpha_at_cv: 0.05,
        };
        // trajectories: 0.1, cv + 0.01, cv + 5 -> stop at look 2
        let profiles = vec![
            poisson_profile(6, 5.0),   // small positive W
            poisson_profile(20, 10.0), // W = 3.86 > 2
            poisson_profile(40, 15.0),
        ];
        let decision = run_maxsprt(&profiles, &cv);
        assert_eq!(decision.stopping_time, Some(2));
        assert_eq!(decision.looks.len(), 2);
        assert!(decision.looks[1].signaled);

        // all below cv: no stop
        let quiet = vec![poisson_profile(5, 5.0); 3];
        let decision = run_maxsprt(&quiet, &cv);
        assert_eq!(decision.stopping_time, None);
        assert_eq!(decision.looks.len(), 3);
    }
}
