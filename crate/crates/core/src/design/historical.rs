//! Historical comparator design.
//!
//! Events observed in post-vaccination risk windows through the look are
//! compared against the count expected from historical incidence rates,
//! giving a Poisson likelihood `loglik(beta) = c*beta - mu*exp(beta)` up
//! to a constant. The stratified variant computes stratum-specific
//! expected counts and sums them, which adjusts the expectation for the
//! composition of the vaccinated.

use crate::design::{HcAdjustment, LikelihoodProfile};
use crate::error::{Error, Result};
use crate::sim::LookSnapshot;

#[derive(Default, Clone, Copy)]
struct Stratum {
    historical_events: u64,
    historical_person_weeks: f64,
    risk_events: u64,
    risk_person_weeks: f64,
}

pub(crate) fn profile(
    snapshot: &LookSnapshot,
    adjustment: HcAdjustment,
    risk_window_weeks: u32,
) -> Result<LikelihoodProfile> {
    let n_strata = match adjustment {
        HcAdjustment::None => 1,
        HcAdjustment::Stratified => 2,
    };
    let mut strata = vec![Stratum::default(); n_strata];
    let historical_len =
        (snapshot.meta.historical_weeks.1 - snapshot.meta.historical_weeks.0 + 1) as f64;

    for subject in 0..snapshot.n_subjects() {
        let s = if n_strata == 2 { snapshot.covariate(subject) as usize } else { 0 };
        let st = &mut strata[s];
        st.historical_person_weeks += historical_len;
        for w in snapshot.historical_weeks() {
            st.historical_events += snapshot.count(subject, w) as u64;
        }
        if let Some(v) = snapshot.vaccination_week(subject) {
            let end = (v + risk_window_weeks).min(snapshot.cutoff_week);
            for w in v + 1..=end {
                st.risk_person_weeks += 1.0;
                st.risk_events += snapshot.count(subject, w) as u64;
            }
        }
    }

    let mut mu = 0.0;
    let mut risk_events = 0u64;
    let mut historical_events = 0u64;
    let mut risk_person_weeks = 0.0;
    for st in &strata {
        if st.historical_person_weeks == 0.0 {
            if st.risk_person_weeks > 0.0 {
                return Err(Error::Numeric(
                    "historical person-time is zero for a stratum with at-risk time".into(),
                ));
            }
            continue;
        }
        let rate = st.historical_events as f64 / st.historical_person_weeks;
        mu += rate * st.risk_person_weeks;
        risk_events += st.risk_events;
        historical_events += st.historical_events;
        risk_person_weeks += st.risk_person_weeks;
    }
    if strata.iter().all(|st| st.historical_person_weeks == 0.0) {
        return Err(Error::Numeric("historical person-time is zero".into()));
    }

    LikelihoodProfile::from_poisson_counts(risk_events, mu, historical_events, risk_person_weeks)
}
