//! Epidemiological designs and the likelihood profile they produce.
//!
//! A [`LikelihoodProfile`] is the universal interchange object between data
//! designs and inference: the log-likelihood of beta = log(RR) tabulated on
//! the shared grid, shifted so its maximum is exactly 0.

mod historical;
mod sccs;

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::BetaGrid;
use crate::num;
use crate::sim::LookSnapshot;

pub use sccs::SccsVariant;

/// Where the grid maximizer of a profile sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxLocation {
    /// Interior maximum at the given beta (parabolic refinement of the
    /// grid argmax).
    Interior(f64),
    /// Maximizer within one grid step of the lower endpoint.
    LowerBoundary,
    /// Maximizer within one grid step of the upper endpoint.
    UpperBoundary,
}

/// Log-likelihood of beta on the shared grid, max-shifted to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodProfile {
    /// One value per grid point; `max(loglik) == 0` exactly.
    pub loglik: Vec<f64>,
    pub mle: MaxLocation,
    /// False iff the maximizer is on the boundary or either the risk or
    /// the comparator side carries no information.
    pub estimable: bool,
    /// (events in the risk window, events on the comparator side).
    pub event_counts: (u64, u64),
    /// Historical comparator: (expected count at beta = 0, at-risk
    /// person-weeks). SCCS: (risk person-weeks, control person-weeks).
    pub exposure: (f64, f64),
    /// Set on synthesized positive controls: the exact grid-snapped shift.
    pub synthetic_shift: Option<f64>,
}

impl LikelihoodProfile {
    /// Build from raw grid values: shifts the maximum to 0, locates the
    /// maximizer and applies the boundary rule. `info_present` is false
    /// when either comparator or risk information is empty.
    pub fn from_grid(
        mut loglik: Vec<f64>,
        event_counts: (u64, u64),
        exposure: (f64, f64),
        info_present: bool,
    ) -> Result<Self> {
        if loglik.len() != BetaGrid::LEN {
            return Err(Error::Numeric(format!(
                "profile has {} grid values, expected {}",
                loglik.len(),
                BetaGrid::LEN
            )));
        }
        let mut argmax = 0usize;
        let mut max = f64::NEG_INFINITY;
        for (i, v) in loglik.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite log-likelihood at beta = {}",
                    BetaGrid::beta(i)
                )));
            }
            if *v > max {
                max = *v;
                argmax = i;
            }
        }
        for v in &mut loglik {
            *v -= max;
        }
        let mle = if argmax <= 1 {
            MaxLocation::LowerBoundary
        } else if argmax >= BetaGrid::LEN - 2 {
            MaxLocation::UpperBoundary
        } else {
            MaxLocation::Interior(num::parabolic_peak(
                BetaGrid::beta(argmax),
                BetaGrid::STEP,
                loglik[argmax - 1],
                loglik[argmax],
                loglik[argmax + 1],
            ))
        };
        let estimable = info_present && matches!(mle, MaxLocation::Interior(_));
        Ok(LikelihoodProfile {
            loglik,
            mle,
            estimable,
            event_counts,
            exposure,
            synthetic_shift: None,
        })
    }

    /// Poisson count profile: observed `events` against expected count
    /// `mu` at beta = 0, so `loglik(beta) = events*beta - mu*exp(beta)`
    /// up to a constant.
    pub fn from_poisson_counts(
        events: u64,
        mu: f64,
        comparator_events: u64,
        at_risk_time: f64,
    ) -> Result<Self> {
        let c = events as f64;
        let loglik: Vec<f64> = BetaGrid::betas().map(|b| c * b - mu * b.exp()).collect();
        Self::from_grid(
            loglik,
            (events, comparator_events),
            (mu, at_risk_time),
            events > 0 && mu > 0.0,
        )
    }

    /// Log-likelihood at an arbitrary beta, linearly interpolated and
    /// linearly extended beyond the grid.
    pub fn loglik_at(&self, beta: f64) -> f64 {
        num::interp_linear(&self.loglik, BetaGrid::MIN, BetaGrid::STEP, beta)
    }

    /// Index of the grid maximum.
    pub fn argmax_index(&self) -> usize {
        self.loglik
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap()
    }

    /// MLE as a number when interior.
    pub fn mle_value(&self) -> Option<f64> {
        match self.mle {
            MaxLocation::Interior(b) => Some(b),
            _ => None,
        }
    }

    /// Profile-likelihood confidence interval at the chi-square cutoff for
    /// 95% coverage (drop of 1.9207 from the maximum), endpoints linearly
    /// interpolated on the grid. None for non-estimable profiles.
    pub fn profile_ci95(&self) -> Option<(f64, f64)> {
        if !self.estimable {
            return None;
        }
        const DROP: f64 = 1.920_729_410_347_062; // qchisq(0.95, 1) / 2
        let cut = -DROP;
        let peak = self.argmax_index();
        let lower = {
            let mut i = peak;
            while i > 0 && self.loglik[i] > cut {
                i -= 1;
            }
            if self.loglik[i] > cut {
                BetaGrid::MIN
            } else {
                let (lo, hi) = (self.loglik[i], self.loglik[i + 1]);
                BetaGrid::beta(i) + BetaGrid::STEP * (cut - lo) / (hi - lo)
            }
        };
        let upper = {
            let mut i = peak;
            while i < BetaGrid::LEN - 1 && self.loglik[i] > cut {
                i += 1;
            }
            if self.loglik[i] > cut {
                BetaGrid::MAX
            } else {
                let (hi, lo) = (self.loglik[i - 1], self.loglik[i]);
                BetaGrid::beta(i) - BetaGrid::STEP * (cut - lo) / (hi - lo)
            }
        };
        Some((lower, upper))
    }

    /// Translate the profile `steps` grid cells to the right (positive
    /// effect direction). Values pushed in from the left continue the
    /// original left-edge gradient; the maximizer and estimability are
    /// re-derived.
    pub fn shifted_right(&self, steps: i64) -> Result<Self> {
        if steps < 0 {
            return Err(Error::InvalidConfig("shift must be non-negative".into()));
        }
        let steps = steps as usize;
        if steps == 0 {
            return Ok(self.clone());
        }
        let left_slope = self.loglik[1] - self.loglik[0];
        let mut values = Vec::with_capacity(BetaGrid::LEN);
        for i in 0..BetaGrid::LEN {
            if i >= steps {
                values.push(self.loglik[i - steps]);
            } else {
                let deficit = (steps - i) as f64;
                values.push(self.loglik[0] - deficit * left_slope);
            }
        }
        let info = self.event_counts.0 > 0 || self.event_counts.1 > 0;
        let mut shifted = Self::from_grid(values, self.event_counts, self.exposure, info)?;
        shifted.synthetic_shift =
            Some(self.synthetic_shift.unwrap_or(0.0) + steps as f64 * BetaGrid::STEP);
        Ok(shifted)
    }
}

/// Covariate handling for the historical comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcAdjustment {
    /// One pooled rate over the entire historical year.
    None,
    /// Stratum-specific rates (strata are the simulated covariate levels).
    Stratified,
}

/// An analysis design: which comparator the likelihood is built against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignSpec {
    HistoricalComparator {
        adjustment: HcAdjustment,
        risk_window_weeks: u32,
    },
    Sccs {
        variant: SccsVariant,
        risk_window_weeks: u32,
    },
}

impl DesignSpec {
    pub fn risk_window_weeks(&self) -> u32 {
        match *self {
            DesignSpec::HistoricalComparator { risk_window_weeks, .. } => risk_window_weeks,
            DesignSpec::Sccs { risk_window_weeks, .. } => risk_window_weeks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.risk_window_weeks();
        if r < 1 {
            return Err(Error::InvalidConfig("risk_window_weeks must be >= 1".into()));
        }
        if let DesignSpec::Sccs { variant, risk_window_weeks } = self {
            // control interval must not overlap the risk window
            if *variant == SccsVariant::ScriPostControl
                && *risk_window_weeks >= sccs::SCRI_POST_CONTROL.0
            {
                return Err(Error::InvalidConfig(
                    "risk window overlaps the post-vaccination SCRI control interval".into(),
                ));
            }
        }
        Ok(())
    }

    /// Stable label used in CSV keys and file names.
    pub fn label(&self) -> String {
        match *self {
            DesignSpec::HistoricalComparator { adjustment, risk_window_weeks } => {
                let adj = match adjustment {
                    HcAdjustment::None => "unadj",
                    HcAdjustment::Stratified => "strat",
                };
                format!("hc-{adj}-{risk_window_weeks}w")
            }
            DesignSpec::Sccs { variant, risk_window_weeks } => {
                format!("sccs-{}-{risk_window_weeks}w", variant.label())
            }
        }
    }

    /// Build the likelihood profile for this design from a look snapshot.
    pub fn profile(&self, snapshot: &LookSnapshot) -> Result<LikelihoodProfile> {
        self.validate()?;
        match *self {
            DesignSpec::HistoricalComparator { adjustment, risk_window_weeks } => {
                historical::profile(snapshot, adjustment, risk_window_weeks)
            }
            DesignSpec::Sccs { variant, risk_window_weeks } => {
                sccs::profile(snapshot, variant, risk_window_weeks)
            }
        }
    }
}

/// Convenience wrappers matching the two design families.
pub fn historical_comparator_profile(
    snapshot: &LookSnapshot,
    spec: &DesignSpec,
) -> Result<LikelihoodProfile> {
    match spec {
        DesignSpec::HistoricalComparator { .. } => spec.profile(snapshot),
        _ => Err(Error::InvalidConfig("spec is not a historical comparator".into())),
    }
}

pub fn sccs_profile(snapshot: &LookSnapshot, spec: &DesignSpec) -> Result<LikelihoodProfile> {
    match spec {
        DesignSpec::Sccs { .. } => spec.profile(snapshot),
        _ => Err(Error::InvalidConfig("spec is not an SCCS design".into())),
    }
}

/// Serialize a profile as `(beta, loglik)` CSV rows under a metadata
/// comment header.
pub fn write_profile_csv<W: Write>(
    out: &mut W,
    profile: &LikelihoodProfile,
    metadata: &[(String, String)],
) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "# risk_events={} comparator_events={}", profile.event_counts.0, profile.event_counts.1)?;
    writeln!(out, "# exposure={:.6},{:.6}", profile.exposure.0, profile.exposure.1)?;
    writeln!(out, "beta,loglik")?;
    for (i, v) in profile.loglik.iter().enumerate() {
        writeln!(out, "{:.3},{:.9}", BetaGrid::beta(i), v)?;
    }
    Ok(())
}

/// Read a profile written by [`write_profile_csv`].
pub fn read_profile_csv<R: std::io::BufRead>(input: R) -> Result<LikelihoodProfile> {
    let mut values = Vec::with_capacity(BetaGrid::LEN);
    let mut counts = (0u64, 0u64);
    let mut exposure = (0.0f64, 0.0f64);
    for line in input.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# risk_events=") {
            let mut parts = rest.split(" comparator_events=");
            counts.0 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("bad risk_events header".into()))?;
            counts.1 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("bad comparator_events header".into()))?;
        } else if let Some(rest) = line.strip_prefix("# exposure=") {
            let mut parts = rest.split(',');
            exposure.0 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("bad exposure header".into()))?;
            exposure.1 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("bad exposure header".into()))?;
        } else if line.starts_with('#') || line.starts_with("beta,") || line.trim().is_empty() {
            continue;
        } else {
            let value = line
                .split(',')
                .nth(1)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("bad profile row: {line}")))?;
            values.push(value);
        }
    }
    let info = counts.0 > 0 && (counts.1 > 0 || exposure.0 > 0.0);
    LikelihoodProfile::from_grid(values, counts, exposure, info)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_profile_mle_is_log_ratio() {
        // c = 20 events against mu = 10 expected: MLE at ln 2
        let p = LikelihoodProfile::from_poisson_counts(20, 10.0, 10, 100.0).unwrap();
        assert!(p.estimable);
        let mle = p.mle_value().unwrap();
        assert!((mle - 2.0f64.ln()).abs() < 1e-4, "mle = {mle}");
        // grid maximum is shifted to exactly zero
        assert_eq!(p.loglik.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 0.0);
    }

    #[test]
    fn zero_count_profile_is_monotone_and_non_estimable() {
        let p = LikelihoodProfile::from_poisson_counts(0, 10.0, 5, 100.0).unwrap();
        assert!(!p.estimable);
        assert_eq!(p.mle, MaxLocation::LowerBoundary);
        for w in p.loglik.windows(2) {
            assert!(w[1] <= w[0], "loglik must decrease in beta when c = 0");
        }
    }

    #[test]
    fn doubling_mu_shifts_mle_down_by_ln2() {
        let a = LikelihoodProfile::from_poisson_counts(40, 10.0, 10, 100.0).unwrap();
        let b = LikelihoodProfile::from_poisson_counts(40, 20.0, 20, 100.0).unwrap();
        let shift = a.mle_value().unwrap() - b.mle_value().unwrap();
        assert!((shift - 2.0f64.ln()).abs() < 1e-4, "shift = {shift}");
    }

    #[test]
    fn profile_ci_covers_mle_and_tightens_with_information() {
        let small = LikelihoodProfile::from_poisson_counts(20, 10.0, 10, 1.0).unwrap();
        let big = LikelihoodProfile::from_poisson_counts(200, 100.0, 100, 1.0).unwrap();
        let (lo_s, hi_s) = small.profile_ci95().unwrap();
        let (lo_b, hi_b) = big.profile_ci95().unwrap();
        let mle = 2.0f64.ln();
        assert!(lo_s < mle && mle < hi_s);
        assert!(lo_b < mle && mle < hi_b);
        assert!(hi_b - lo_b < hi_s - lo_s);
    }

    #[test]
    fn shift_moves_argmax_by_whole_steps() {
        let p = LikelihoodProfile::from_poisson_counts(50, 50.0, 50, 1.0).unwrap();
        let k = BetaGrid::snap_steps(4.0f64.ln());
        let shifted = p.shifted_right(k).unwrap();
        let before = p.argmax_index();
        let after = shifted.argmax_index();
        assert_eq!(after - before, k as usize);
        assert_eq!(shifted.synthetic_shift, Some(k as f64 * BetaGrid::STEP));
        // loglik values are translated exactly
        for i in k as usize..BetaGrid::LEN {
            assert_eq!(shifted.loglik[i], p.loglik[i - k as usize]);
        }
    }

    #[test]
    fn zero_shift_is_identity() {
        let p = LikelihoodProfile::from_poisson_counts(8, 4.0, 4, 1.0).unwrap();
        assert_eq!(p.shifted_right(0).unwrap(), p);
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = LikelihoodProfile::from_poisson_counts(20, 10.0, 10, 64.0).unwrap();
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &p, &[("design".into(), "hc-unadj-4w".into())]).unwrap();
        let back = read_profile_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.event_counts, p.event_counts);
        assert!((back.exposure.0 - p.exposure.0).abs() < 1e-6);
        for (a, b) in back.loglik.iter().zip(&p.loglik) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(back.estimable, p.estimable);
    }

    #[test]
    fn scri_post_rejects_overlapping_risk_window() {
        let bad = DesignSpec::Sccs {
            variant: SccsVariant::ScriPostControl,
            risk_window_weeks: 8,
        };
        assert!(bad.validate().is_err());
        let ok = DesignSpec::Sccs {
            variant: SccsVariant::ScriPostControl,
            risk_window_weeks: 6,
        };
        assert!(ok.validate().is_ok());
    }
}
