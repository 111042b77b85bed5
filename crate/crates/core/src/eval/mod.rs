//! Experiment orchestration: control suites, the per-cell results store,
//! the metric suite, and decision-threshold calibration.

pub mod report;
pub mod scenarios;

use std::collections::BTreeMap;
use std::fmt;

use crate::design::LikelihoodProfile;
use crate::error::{Error, Result};
use crate::grid::BetaGrid;
use crate::maxsprt::Method;

/// Experimental control outcomes: negative controls with true RR = 1 and
/// positive controls synthesized from them at the given effect sizes.
/// Each control receives an injected additive bias drawn once per seed;
/// a negative control and its positive children share the same draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSuiteSpec {
    pub n_negative: u32,
    pub positive_rr: Vec<f64>,
    pub bias_mean: f64,
    pub bias_sd: f64,
}

impl Default for ControlSuiteSpec {
    fn default() -> Self {
        ControlSuiteSpec {
            n_negative: 93,
            positive_rr: vec![1.5, 2.0, 4.0],
            bias_mean: 0.25,
            bias_sd: 0.1,
        }
    }
}

impl ControlSuiteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_negative < 2 {
            return Err(Error::InvalidConfig("need at least 2 negative controls".into()));
        }
        if self.positive_rr.iter().any(|&rr| !(rr > 1.0)) {
            return Err(Error::InvalidConfig("positive-control RR values must exceed 1".into()));
        }
        if !(self.bias_sd >= 0.0) {
            return Err(Error::InvalidConfig("bias_sd must be non-negative".into()));
        }
        Ok(())
    }
}

/// Identity of a control outcome in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutcomeId {
    Negative(u32),
    Positive { parent: u32, rr_index: u8 },
}

impl OutcomeId {
    pub fn parent(&self) -> u32 {
        match *self {
            OutcomeId::Negative(i) => i,
            OutcomeId::Positive { parent, .. } => parent,
        }
    }
}

impl fmt::Display for OutcomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            OutcomeId::Negative(i) => write!(f, "nc{i}"),
            OutcomeId::Positive { parent, rr_index } => write!(f, "pc{parent}r{rr_index}"),
        }
    }
}

/// Synthesize a positive-control profile by translating a negative
/// control's profile to the right by `ln(rr)`, snapped to a whole number
/// of grid steps. Returns the profile and the exact snapped true beta.
pub fn synthesize_positive_profile(
    nc_profile: &LikelihoodProfile,
    rr: f64,
) -> Result<(LikelihoodProfile, f64)> {
    if !(rr >= 1.0) {
        return Err(Error::InvalidConfig("positive-control RR must be >= 1".into()));
    }
    let steps = BetaGrid::snap_steps(rr.ln());
    let shifted = nc_profile.shifted_right(steps)?;
    Ok((shifted, steps as f64 * BetaGrid::STEP))
}

/// Key of one analysis cell in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub seed: u32,
    pub design: u8,
    pub method: Method,
    pub prior: u8,
    pub outcome: OutcomeId,
    pub look: u8,
}

/// Result of one analysis cell.
#[derive(Debug, Clone, Copy)]
pub struct CellValue {
    /// MaxSPRT: the LLR statistic. Bayes/BBC: posterior probability of H1.
    pub statistic: f64,
    /// MaxSPRT: the calibrated cv. Bayes/BBC: NaN (thresholds are applied
    /// at aggregation time).
    pub threshold: f64,
    /// Point estimate (MLE or posterior median); NaN when unavailable.
    pub point: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub estimable: bool,
    /// MCMC convergence flag surfaced from the bias fit.
    pub flagged: bool,
    /// Look skipped by the minimum-evidence rule.
    pub skipped: bool,
    /// Exact true beta for estimation metrics (grid-snapped for positive
    /// controls; excludes injected bias for negative controls).
    pub true_beta: f64,
}

/// Append-only store of sweep results keyed by cell. Duplicate appends are
/// rejected, first write wins.
#[derive(Debug, Default, Clone)]
pub struct ResultsStore {
    pub design_labels: Vec<String>,
    pub prior_variances: Vec<f64>,
    pub positive_rr: Vec<f64>,
    pub n_looks: u32,
    rows: BTreeMap<CellKey, CellValue>,
}

impl ResultsStore {
    pub fn new(
        design_labels: Vec<String>,
        prior_variances: Vec<f64>,
        positive_rr: Vec<f64>,
        n_looks: u32,
    ) -> Self {
        ResultsStore {
            design_labels,
            prior_variances,
            positive_rr,
            n_looks,
            rows: BTreeMap::new(),
        }
    }

    /// Append one cell; returns false (rejecting the write) if the cell is
    /// already present.
    pub fn append(&mut self, key: CellKey, value: CellValue) -> bool {
        match self.rows.entry(key) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(value);
                true
            }
        }
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.rows.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &CellValue)> {
        self.rows.iter()
    }

    /// Seeds with at least one stored cell.
    pub fn seeds_present(&self) -> std::collections::BTreeSet<u32> {
        self.rows.keys().map(|k| k.seed).collect()
    }

    /// Fold another store's rows in; duplicates are rejected row-wise.
    pub fn merge_from(&mut self, other: ResultsStore) {
        for (k, v) in other.rows {
            self.append(k, v);
        }
    }

    /// Nominal true RR of an outcome.
    pub fn true_rr(&self, outcome: OutcomeId) -> f64 {
        match outcome {
            OutcomeId::Negative(_) => 1.0,
            OutcomeId::Positive { rr_index, .. } => self.positive_rr[rr_index as usize],
        }
    }

    /// Trajectory maxima of the statistic over looks for every
    /// (seed, negative control) of the given method arm; the input to
    /// threshold calibration.
    pub fn nc_trajectory_maxima(&self, method: Method, design: u8, prior: u8) -> Vec<f64> {
        let mut grouped: BTreeMap<(u32, OutcomeId), f64> = BTreeMap::new();
        for (k, v) in &self.rows {
            if k.method != method || k.design != design || k.prior != prior {
                continue;
            }
            if !matches!(k.outcome, OutcomeId::Negative(_)) {
                continue;
            }
            let entry = grouped.entry((k.seed, k.outcome)).or_insert(f64::NEG_INFINITY);
            if v.statistic > *entry {
                *entry = v.statistic;
            }
        }
        grouped.into_values().collect()
    }
}

/// Time-to-detection: the first look at which a stated fraction of
/// positive controls has signaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeToDetection {
    AtLook(u32),
    NotReached,
}

impl fmt::Display for TimeToDetection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeToDetection::AtLook(t) => write!(f, "{t}"),
            TimeToDetection::NotReached => write!(f, "NR"),
        }
    }
}

/// One row of the metric table, keyed by
/// (method, design, prior, delta1, look, true_rr).
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub method: Method,
    pub design: String,
    pub prior_variance: Option<f64>,
    pub delta1: Option<f64>,
    pub look: u32,
    pub true_rr: f64,
    pub type1: Option<f64>,
    pub type2: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ttd25: Option<TimeToDetection>,
    pub ttd50: Option<TimeToDetection>,
    pub mse: Option<f64>,
    pub coverage95: Option<f64>,
    pub non_estimable_rate: f64,
    /// Early looks carry too little evidence for stable estimates.
    pub low_evidence: bool,
    /// Number of (seed, outcome) cells behind the row.
    pub n_cells: u32,
}

/// Looks 1..=4 are flagged as low-evidence in reports.
pub const LOW_EVIDENCE_LOOKS: u32 = 4;

#[derive(Debug, Clone, Default)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

/// A method arm whose signals are re-derived at aggregation time.
#[derive(Debug, Clone, Copy)]
struct Arm {
    method: Method,
    design: u8,
    prior: u8,
    delta1: Option<f64>,
}

/// Compute the full metric suite from a results store. Bayes and BBC arms
/// are evaluated at each threshold in `deltas`; MaxSPRT uses its stored
/// calibrated cv. Testing metrics are cumulative over looks.
pub fn compute_metrics(store: &ResultsStore, deltas: &[f64]) -> MetricTable {
    let mut arms: Vec<Arm> = Vec::new();
    for design in 0..store.design_labels.len() as u8 {
        arms.push(Arm { method: Method::Maxsprt, design, prior: 0, delta1: None });
        for prior in 0..store.prior_variances.len() as u8 {
            for &d in deltas {
                arms.push(Arm { method: Method::Bayes, design, prior, delta1: Some(d) });
                arms.push(Arm { method: Method::Bbc, design, prior, delta1: Some(d) });
            }
        }
    }

    let mut table = MetricTable::default();
    for arm in arms {
        compute_arm_metrics(store, arm, &mut table);
    }
    table
}

fn compute_arm_metrics(store: &ResultsStore, arm: Arm, table: &mut MetricTable) {
    let n_looks = store.n_looks;
    // per (seed, outcome): trajectory of cells
    let mut groups: BTreeMap<(u32, OutcomeId), Vec<(u8, CellValue)>> = BTreeMap::new();
    for (k, v) in store.iter() {
        if k.method != arm.method || k.design != arm.design || k.prior != arm.prior {
            continue;
        }
        groups.entry((k.seed, k.outcome)).or_default().push((k.look, *v));
    }
    if groups.is_empty() {
        return;
    }

    // rr strata: 1.0 plus each positive rr
    let mut strata: Vec<f64> = vec![1.0];
    strata.extend(store.positive_rr.iter().cloned());

    for &rr in &strata {
        let cells: Vec<&Vec<(u8, CellValue)>> = groups
            .iter()
            .filter(|((_, outcome), _)| store.true_rr(*outcome) == rr)
            .map(|(_, v)| v)
            .collect();
        if cells.is_empty() {
            continue;
        }
        // first signaling look per trajectory
        let signal_look = |traj: &Vec<(u8, CellValue)>| -> Option<u32> {
            traj.iter()
                .filter(|(_, v)| {
                    !v.skipped
                        && match arm.delta1 {
                            Some(d) => v.statistic > d,
                            None => v.statistic > v.threshold,
                        }
                })
                .map(|(look, _)| *look as u32)
                .min()
        };
        let signals: Vec<Option<u32>> = cells.iter().map(|t| signal_look(t)).collect();
        let n = cells.len() as f64;

        // time to detection over the positive strata
        let (ttd25, ttd50) = if rr > 1.0 {
            let ttd = |frac: f64| -> TimeToDetection {
                for t in 1..=n_looks {
                    let hit =
                        signals.iter().filter(|s| s.map(|x| x <= t).unwrap_or(false)).count();
                    if hit as f64 / n >= frac {
                        return TimeToDetection::AtLook(t);
                    }
                }
                TimeToDetection::NotReached
            };
            (Some(ttd(0.25)), Some(ttd(0.50)))
        } else {
            (None, None)
        };

        for t in 1..=n_looks {
            let signaled =
                signals.iter().filter(|s| s.map(|x| x <= t).unwrap_or(false)).count() as f64 / n;
            let (type1, type2, sensitivity, specificity) = if rr == 1.0 {
                (Some(signaled), None, None, Some(1.0 - signaled))
            } else {
                (None, Some(1.0 - signaled), Some(signaled), None)
            };

            // estimation metrics at this look
            let mut sq_err = 0.0;
            let mut covered = 0usize;
            let mut estimable = 0usize;
            let mut total = 0usize;
            for traj in &cells {
                if let Some((_, v)) = traj.iter().find(|(look, _)| *look as u32 == t) {
                    total += 1;
                    if v.estimable && !v.skipped && v.point.is_finite() {
                        estimable += 1;
                        let err = v.point - v.true_beta;
                        sq_err += err * err;
                        if v.lo95 <= v.true_beta && v.true_beta <= v.hi95 {
                            covered += 1;
                        }
                    }
                }
            }
            let mse = (estimable > 0).then(|| sq_err / estimable as f64);
            let coverage95 = (estimable > 0).then(|| covered as f64 / estimable as f64);
            let non_estimable_rate = if total > 0 {
                1.0 - estimable as f64 / total as f64
            } else {
                1.0
            };

            table.rows.push(MetricRow {
                method: arm.method,
                design: store.design_labels[arm.design as usize].clone(),
                prior_variance: (arm.method != Method::Maxsprt)
                    .then(|| store.prior_variances[arm.prior as usize]),
                delta1: arm.delta1,
                look: t,
                true_rr: rr,
                type1,
                type2,
                sensitivity,
                specificity,
                ttd25,
                ttd50,
                mse,
                coverage95,
                non_estimable_rate,
                low_evidence: t <= LOW_EVIDENCE_LOOKS,
                n_cells: cells.len() as u32,
            });
        }
    }
}

/// Result of calibrating the Bayesian decision threshold to a target
/// end-of-analysis Type 1 error rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedThreshold {
    pub delta1: f64,
    pub achieved_type1: f64,
    /// Set when no lattice threshold meets the target; the lattice
    /// maximum is returned.
    pub flagged: bool,
}

/// Find the smallest threshold on a 1e-3 lattice over (0.5, 1) whose
/// implied end-of-analysis Type 1 error is within the target. A smaller
/// threshold signals more, so this is the threshold that spends the whole
/// allowed error budget. `nc_maxima` holds each negative-control
/// trajectory's maximum statistic.
pub fn calibrate_threshold(nc_maxima: &[f64], target_type1: f64) -> CalibratedThreshold {
    let n = nc_maxima.len().max(1) as f64;
    let type1_at = |delta: f64| -> f64 {
        nc_maxima.iter().filter(|&&m| m > delta).count() as f64 / n
    };
    let lattice: Vec<f64> = (501..=999).map(|i| i as f64 / 1000.0).collect();
    for &delta in &lattice {
        let t1 = type1_at(delta);
        if t1 <= target_type1 {
            return CalibratedThreshold { delta1: delta, achieved_type1: t1, flagged: false };
        }
    }
    let delta = *lattice.last().unwrap();
    CalibratedThreshold { delta1: delta, achieved_type1: type1_at(delta), flagged: true }
}
