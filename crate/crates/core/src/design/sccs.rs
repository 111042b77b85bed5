//! Self-controlled case series designs.
//!
//! Only cases (subjects with at least one event in observed surveillance
//! time) contribute. Conditioning on each case's total event count over its
//! risk and control weeks removes the subject-specific rate, leaving a
//! product-multinomial likelihood over at-risk versus control exposure
//! time. Day-based windows from the source designs are mapped to whole
//! weeks: the 30-day pre-vaccination exclusion becomes the 4 weeks before
//! vaccination plus the vaccination week itself, the 43-15 day
//! pre-vaccination SCRI control becomes weeks v-6..v-3, and the 43-71 day
//! post-vaccination SCRI control becomes weeks v+7..v+10.

use std::collections::BTreeMap;

use crate::design::LikelihoodProfile;
use crate::error::{Error, Result};
use crate::grid::BetaGrid;
use crate::num::solve_dense;
use crate::sim::LookSnapshot;

/// Weeks before vaccination excluded from control time (plus the
/// vaccination week itself), approximating a 30-day window.
pub(crate) const PRE_VACCINATION_EXCLUSION_WEEKS: u32 = 4;
/// SCRI pre-vaccination control interval, weeks v-a..=v-b.
pub(crate) const SCRI_PRE_CONTROL: (u32, u32) = (6, 3);
/// SCRI post-vaccination control interval, weeks v+a..=v+b.
pub(crate) const SCRI_POST_CONTROL: (u32, u32) = (7, 10);

/// SCCS/SCRI design variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccsVariant {
    /// All non-risk time is control, excluding the pre-vaccination window.
    PrevaxExcluded,
    /// As `PrevaxExcluded`, with calendar-month effects profiled out.
    MonthAdjusted,
    /// Only post-vaccination time serves as control.
    PostVaxOnly,
    /// Self-controlled risk interval with a pre-vaccination control window.
    ScriPreControl,
    /// Self-controlled risk interval with a post-vaccination control window.
    ScriPostControl,
}

impl SccsVariant {
    pub fn label(&self) -> &'static str {
        match self {
            SccsVariant::PrevaxExcluded => "prevax-excl",
            SccsVariant::MonthAdjusted => "month-adj",
            SccsVariant::PostVaxOnly => "postvax-only",
            SccsVariant::ScriPreControl => "scri-pre",
            SccsVariant::ScriPostControl => "scri-post",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum WeekClass {
    Risk,
    Control,
    Excluded,
}

fn classify_week(
    week: u32,
    vaccination: Option<u32>,
    variant: SccsVariant,
    risk_weeks: u32,
) -> WeekClass {
    let w = week as i64;
    match vaccination {
        None => match variant {
            SccsVariant::PrevaxExcluded | SccsVariant::MonthAdjusted => WeekClass::Control,
            _ => WeekClass::Excluded,
        },
        Some(v) => {
            let v = v as i64;
            if w > v && w <= v + risk_weeks as i64 {
                return WeekClass::Risk;
            }
            match variant {
                SccsVariant::PrevaxExcluded | SccsVariant::MonthAdjusted => {
                    if w >= v - PRE_VACCINATION_EXCLUSION_WEEKS as i64 && w <= v {
                        WeekClass::Excluded
                    } else {
                        WeekClass::Control
                    }
                }
                SccsVariant::PostVaxOnly => {
                    if w <= v {
                        WeekClass::Excluded
                    } else {
                        WeekClass::Control
                    }
                }
                SccsVariant::ScriPreControl => {
                    if w >= v - SCRI_PRE_CONTROL.0 as i64 && w <= v - SCRI_PRE_CONTROL.1 as i64 {
                        WeekClass::Control
                    } else {
                        WeekClass::Excluded
                    }
                }
                SccsVariant::ScriPostControl => {
                    if w >= v + SCRI_POST_CONTROL.0 as i64 && w <= v + SCRI_POST_CONTROL.1 as i64 {
                        WeekClass::Control
                    } else {
                        WeekClass::Excluded
                    }
                }
            }
        }
    }
}

/// Per-case sufficient statistics for the two-interval likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CaseStats {
    pub risk_weeks: u32,
    pub control_weeks: u32,
    pub risk_events: u64,
    pub control_events: u64,
}

impl CaseStats {
    fn total_events(&self) -> u64 {
        self.risk_events + self.control_events
    }

    fn informative(&self) -> bool {
        self.risk_weeks > 0 && self.control_weeks > 0 && self.total_events() > 0
    }
}

/// Unadjusted two-interval log-likelihood on the grid:
/// `sum_i [c_ri * beta - n_i * ln(T_ri * e^beta + T_ci)]`, cases grouped by
/// identical exposure-time pairs.
pub(crate) fn unadjusted_loglik_from_cases(cases: &[CaseStats]) -> Vec<f64> {
    let mut risk_event_total = 0.0;
    let mut groups: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for c in cases {
        if !c.informative() {
            continue;
        }
        risk_event_total += c.risk_events as f64;
        *groups.entry((c.risk_weeks, c.control_weeks)).or_insert(0.0) +=
            c.total_events() as f64;
    }
    BetaGrid::betas()
        .map(|beta| {
            let eb = beta.exp();
            let mut ll = risk_event_total * beta;
            for (&(t_r, t_c), &n) in &groups {
                ll -= n * (t_r as f64 * eb + t_c as f64).ln();
            }
            ll
        })
        .collect()
}

fn collect_cases(
    snapshot: &LookSnapshot,
    variant: SccsVariant,
    risk_window_weeks: u32,
) -> Vec<CaseStats> {
    let mut cases = Vec::new();
    for subject in 0..snapshot.n_subjects() {
        let vaccination = snapshot.vaccination_week(subject);
        let mut stats = CaseStats {
            risk_weeks: 0,
            control_weeks: 0,
            risk_events: 0,
            control_events: 0,
        };
        for week in snapshot.observed_surveillance_weeks() {
            match classify_week(week, vaccination, variant, risk_window_weeks) {
                WeekClass::Risk => {
                    stats.risk_weeks += 1;
                    stats.risk_events += snapshot.count(subject, week) as u64;
                }
                WeekClass::Control => {
                    stats.control_weeks += 1;
                    stats.control_events += snapshot.count(subject, week) as u64;
                }
                WeekClass::Excluded => {}
            }
        }
        if stats.total_events() > 0 {
            cases.push(stats);
        }
    }
    cases
}

fn profile_from_cases(cases: &[CaseStats], loglik: Vec<f64>) -> Result<LikelihoodProfile> {
    let mut risk_events = 0u64;
    let mut control_events = 0u64;
    let mut risk_time = 0.0;
    let mut control_time = 0.0;
    let mut informative = false;
    for c in cases {
        if c.informative() {
            informative = true;
            risk_events += c.risk_events;
            control_events += c.control_events;
            risk_time += c.risk_weeks as f64;
            control_time += c.control_weeks as f64;
        }
    }
    LikelihoodProfile::from_grid(
        loglik,
        (risk_events, control_events),
        (risk_time, control_time),
        informative,
    )
}

pub(crate) fn profile(
    snapshot: &LookSnapshot,
    variant: SccsVariant,
    risk_window_weeks: u32,
) -> Result<LikelihoodProfile> {
    if variant == SccsVariant::MonthAdjusted {
        return month_adjusted::profile(snapshot, risk_window_weeks);
    }
    let cases = collect_cases(snapshot, variant, risk_window_weeks);
    let loglik = unadjusted_loglik_from_cases(&cases);
    profile_from_cases(&cases, loglik)
}

mod month_adjusted {
    //! Month effects are categorical offsets on the week rate, constant
    //! within each calendar month. At every grid beta the offsets are
    //! profiled out by an inner Newton iteration (tolerance 1e-8, at most
    //! 50 steps) on the concave conditional log-likelihood.

    use super::*;

    const NEWTON_TOL: f64 = 1e-8;
    const NEWTON_MAX_ITER: usize = 50;

    /// Calendar-month index of a relative surveillance week (1-based),
    /// using 12 months per 52-week year.
    struct MonthMap {
        cutoffs: Vec<u32>,
    }

    impl MonthMap {
        fn new(n_surveillance_weeks: u32) -> Self {
            let n_months = ((n_surveillance_weeks * 12) / 52).max(1);
            let cutoffs =
                (1..=n_months).map(|m| (m * n_surveillance_weeks).div_ceil(n_months)).collect();
            MonthMap { cutoffs }
        }

        fn len(&self) -> usize {
            self.cutoffs.len()
        }

        fn month_of(&self, rel_week: u32) -> usize {
            self.cutoffs.partition_point(|&c| c < rel_week)
        }
    }

    struct GroupAgg {
        control_weeks: Vec<f64>,
        risk_weeks: Vec<f64>,
        events: f64,
    }

    pub(crate) fn profile(
        snapshot: &LookSnapshot,
        risk_window_weeks: u32,
    ) -> Result<LikelihoodProfile> {
        let surv_start = snapshot.meta.surveillance_weeks.0;
        let n_surv =
            snapshot.meta.surveillance_weeks.1 - snapshot.meta.surveillance_weeks.0 + 1;
        let months = MonthMap::new(n_surv);
        let n_months = months.len();

        let mut groups: BTreeMap<Option<u32>, GroupAgg> = BTreeMap::new();
        let mut events_by_month = vec![0.0f64; n_months];
        let mut risk_event_total = 0.0;
        let mut cases = Vec::new();

        for subject in 0..snapshot.n_subjects() {
            let vaccination = snapshot.vaccination_week(subject);
            let mut stats = CaseStats {
                risk_weeks: 0,
                control_weeks: 0,
                risk_events: 0,
                control_events: 0,
            };
            let mut per_month = vec![0.0f64; n_months];
            for week in snapshot.observed_surveillance_weeks() {
                let class =
                    classify_week(week, vaccination, SccsVariant::MonthAdjusted, risk_window_weeks);
                if class == WeekClass::Excluded {
                    continue;
                }
                let count = snapshot.count(subject, week) as f64;
                let month = months.month_of(week - surv_start + 1);
                per_month[month] += count;
                match class {
                    WeekClass::Risk => {
                        stats.risk_weeks += 1;
                        stats.risk_events += count as u64;
                        risk_event_total += count;
                    }
                    WeekClass::Control => {
                        stats.control_weeks += 1;
                        stats.control_events += count as u64;
                    }
                    WeekClass::Excluded => unreachable!(),
                }
            }
            if stats.total_events() == 0 {
                continue;
            }
            cases.push(stats);
            for (m, c) in per_month.iter().enumerate() {
                events_by_month[m] += c;
            }
            let agg = groups.entry(vaccination).or_insert_with(|| {
                let mut g = GroupAgg {
                    control_weeks: vec![0.0; n_months],
                    risk_weeks: vec![0.0; n_months],
                    events: 0.0,
                };
                for week in snapshot.observed_surveillance_weeks() {
                    let class = classify_week(
                        week,
                        vaccination,
                        SccsVariant::MonthAdjusted,
                        risk_window_weeks,
                    );
                    let month = months.month_of(week - surv_start + 1);
                    match class {
                        WeekClass::Risk => g.risk_weeks[month] += 1.0,
                        WeekClass::Control => g.control_weeks[month] += 1.0,
                        WeekClass::Excluded => {}
                    }
                }
                g
            });
            agg.events += stats.total_events() as f64;
        }

        // Months without any observed event get an effect of -inf in the
        // profile limit, which is the same as dropping their weeks.
        let kept: Vec<usize> =
            (0..n_months).filter(|&m| events_by_month[m] > 0.0).collect();
        if kept.is_empty() {
            // no cases at all
            let loglik = vec![0.0; BetaGrid::LEN];
            return profile_from_cases(&cases, loglik);
        }
        let e_month: Vec<f64> = kept.iter().map(|&m| events_by_month[m]).collect();
        let group_data: Vec<(Vec<f64>, Vec<f64>, f64)> = groups
            .values()
            .filter(|g| g.events > 0.0)
            .map(|g| {
                (
                    kept.iter().map(|&m| g.control_weeks[m]).collect(),
                    kept.iter().map(|&m| g.risk_weeks[m]).collect(),
                    g.events,
                )
            })
            .collect();

        let j = kept.len();
        let total_events: f64 = e_month.iter().sum();
        let tol = NEWTON_TOL * (1.0 + total_events);
        let mut theta = vec![0.0f64; j]; // theta[0] fixed at 0, warm-started across beta
        let mut loglik = Vec::with_capacity(BetaGrid::LEN);

        let objective = |theta: &[f64], eb: f64| -> f64 {
            let mut ll = 0.0;
            for (m, &e) in e_month.iter().enumerate() {
                ll += theta[m] * e;
            }
            for (wc, wr, n) in &group_data {
                let mut d = 0.0;
                for m in 0..j {
                    d += theta[m].exp() * (wc[m] + wr[m] * eb);
                }
                ll -= n * d.ln();
            }
            ll
        };

        for beta in BetaGrid::betas() {
            let eb = beta.exp();
            if j > 1 {
                let mut converged = false;
                for _ in 0..NEWTON_MAX_ITER {
                    // gradient and Hessian over free components 1..j
                    let mut grad = vec![0.0f64; j];
                    let mut hess = vec![0.0f64; j * j];
                    for (m, &e) in e_month.iter().enumerate() {
                        grad[m] = e;
                    }
                    for (wc, wr, n) in &group_data {
                        let mut d = 0.0;
                        let mut p = vec![0.0f64; j];
                        for m in 0..j {
                            p[m] = theta[m].exp() * (wc[m] + wr[m] * eb);
                            d += p[m];
                        }
                        for q in p.iter_mut() {
                            *q /= d;
                        }
                        for a in 0..j {
                            grad[a] -= n * p[a];
                            for b in 0..j {
                                let delta = if a == b { p[a] } else { 0.0 };
                                hess[a * j + b] -= n * (delta - p[a] * p[b]);
                            }
                        }
                    }
                    let free = j - 1;
                    let gmax = grad[1..].iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
                    if gmax <= tol {
                        converged = true;
                        break;
                    }
                    // solve (-H) step = grad on the free block
                    let mut a = vec![0.0f64; free * free];
                    let mut rhs = vec![0.0f64; free];
                    for r in 0..free {
                        rhs[r] = grad[r + 1];
                        for c in 0..free {
                            a[r * free + c] = -hess[(r + 1) * j + (c + 1)];
                        }
                    }
                    if solve_dense(&mut a, &mut rhs).is_none() {
                        return Err(Error::Numeric(
                            "singular Hessian in month-effect profiling".into(),
                        ));
                    }
                    // backtracking on the concave objective
                    let base = objective(&theta, eb);
                    let mut scale = 1.0;
                    let mut accepted = false;
                    for _ in 0..30 {
                        let mut trial = theta.clone();
                        for m in 1..j {
                            trial[m] += scale * rhs[m - 1];
                        }
                        if objective(&trial, eb) >= base - 1e-12 {
                            theta = trial;
                            accepted = true;
                            break;
                        }
                        scale *= 0.5;
                    }
                    if !accepted {
                        converged = true; // step no longer improves: at optimum
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Numeric(format!(
                        "month-effect profiling did not converge at beta = {beta}"
                    )));
                }
            }
            loglik.push(risk_event_total * beta + objective(&theta, eb));
        }

        profile_from_cases(&cases, loglik)
    }
}
