//! Bayesian sequential inference without bias correction.
//!
//! Posteriors are computed by quadrature on the shared grid: the profile
//! log-likelihood plus a zero-mean normal log-prior, normalized with
//! trapezoid weights in log space. The posterior probability of H1 is the
//! mass above beta = 0, with the grid point at 0 splitting its trapezoid
//! weight evenly between the hypotheses.

use rand::Rng;

use crate::design::LikelihoodProfile;
use crate::error::{Error, Result};
use crate::grid::BetaGrid;
use crate::maxsprt::{Method, SequentialDecision};
use crate::num::{log_sum_exp, normal_logpdf};

/// Zero-mean normal prior on beta. The zero mean is what makes the prior
/// hypothesis probabilities equal: P(H0) = P(H1) = 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    mean: f64,
    pub variance: f64,
}

impl PriorSpec {
    /// Conservative prior, variance 1.5.
    pub const CONSERVATIVE: PriorSpec = PriorSpec { mean: 0.0, variance: 1.5 };
    /// Moderately informed prior, variance 4.
    pub const MODERATE: PriorSpec = PriorSpec { mean: 0.0, variance: 4.0 };
    /// Diffuse prior, variance 10; posterior summaries approach the MLE.
    pub const DIFFUSE: PriorSpec = PriorSpec { mean: 0.0, variance: 10.0 };

    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidConfig("prior variance must be positive".into()));
        }
        Ok(PriorSpec { mean: 0.0, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn log_density(&self, beta: f64) -> f64 {
        normal_logpdf(beta, self.mean, self.variance.sqrt())
    }
}

/// Decision threshold on the posterior probability of H1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionThreshold(f64);

impl DecisionThreshold {
    pub fn new(delta1: f64) -> Result<Self> {
        if !(delta1 > 0.5 && delta1 < 1.0) {
            return Err(Error::InvalidConfig("delta1 must be in (0.5, 1)".into()));
        }
        Ok(DecisionThreshold(delta1))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Normalized posterior for beta on the shared grid.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    /// Normalized log posterior density at each grid point.
    pub log_density: Vec<f64>,
    /// Posterior probability of H1 (beta > 0).
    pub p_h1: f64,
    pub mean: f64,
    pub median: f64,
    /// Equal-tailed central 95% credible interval.
    pub ci95: (f64, f64),
    /// Cumulative distribution at grid points (trapezoid), used for
    /// inverse-CDF sampling. `cdf[0] = 0`, `cdf[LEN-1] = 1`.
    cdf: Vec<f64>,
}

impl GridPosterior {
    /// Posterior probability of H0; complements of p_h1 exactly.
    pub fn p_h0(&self) -> f64 {
        1.0 - self.p_h1
    }

    /// Posterior standard deviation by grid quadrature.
    pub fn sd(&self) -> f64 {
        let mut m2 = 0.0;
        for (i, ld) in self.log_density.iter().enumerate() {
            let beta = BetaGrid::beta(i);
            m2 += BetaGrid::weight(i) * ld.exp() * (beta - self.mean) * (beta - self.mean);
        }
        m2.sqrt()
    }

    /// Quantile by inverse-CDF interpolation on the grid.
    pub fn quantile(&self, q: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&q));
        let i = self.cdf.partition_point(|&c| c < q);
        if i == 0 {
            return BetaGrid::MIN;
        }
        if i >= BetaGrid::LEN {
            return BetaGrid::MAX;
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (q - c0) / (c1 - c0) } else { 0.0 };
        BetaGrid::beta(i - 1) + frac * BetaGrid::STEP
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Posterior by Bayes rule on the grid: `log_density = loglik + log prior
/// - log normalizer`.
pub fn posterior(profile: &LikelihoodProfile, prior: &PriorSpec) -> Result<GridPosterior> {
    let unnorm: Vec<f64> = profile
        .loglik
        .iter()
        .enumerate()
        .map(|(i, ll)| ll + prior.log_density(BetaGrid::beta(i)))
        .collect();
    let log_z = log_sum_exp(
        unnorm.iter().enumerate().map(|(i, v)| v + BetaGrid::weight(i).ln()),
    );
    if !log_z.is_finite() {
        return Err(Error::Numeric("posterior normalizer underflows".into()));
    }
    let log_density: Vec<f64> = unnorm.iter().map(|v| v - log_z).collect();

    // mass above zero, with the point at exactly 0 contributing half its
    // trapezoid weight to each side
    let log_mass_h1 = log_sum_exp((BetaGrid::ZERO..BetaGrid::LEN).map(|i| {
        let w = if i == BetaGrid::ZERO { BetaGrid::STEP / 2.0 } else { BetaGrid::weight(i) };
        log_density[i] + w.ln()
    }));
    let log_mass_h0 = log_sum_exp((0..=BetaGrid::ZERO).map(|i| {
        let w = if i == BetaGrid::ZERO { BetaGrid::STEP / 2.0 } else { BetaGrid::weight(i) };
        log_density[i] + w.ln()
    }));
    let p_h1 = 1.0 / (1.0 + (log_mass_h0 - log_mass_h1).exp());

    let mut mean = 0.0;
    for (i, ld) in log_density.iter().enumerate() {
        mean += BetaGrid::weight(i) * ld.exp() * BetaGrid::beta(i);
    }

    let mut cdf = Vec::with_capacity(BetaGrid::LEN);
    cdf.push(0.0);
    let mut acc = 0.0;
    for i in 1..BetaGrid::LEN {
        acc += 0.5 * BetaGrid::STEP * (log_density[i - 1].exp() + log_density[i].exp());
        cdf.push(acc);
    }
    let total = *cdf.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Numeric("posterior mass vanished in quadrature".into()));
    }
    for c in &mut cdf {
        *c /= total;
    }

    let mut post = GridPosterior { log_density, p_h1, mean, median: 0.0, ci95: (0.0, 0.0), cdf };
    post.median = post.quantile(0.5);
    post.ci95 = (post.quantile(0.025), post.quantile(0.975));
    Ok(post)
}

/// Posterior probability of H1 (the integral of the posterior over
/// beta > 0); this is the `p_h1` field of the posterior.
pub fn posterior_probability_h1(post: &GridPosterior) -> f64 {
    post.p_h1
}

/// Bayes factor BF10: ratio of prior-weighted data evidence over each
/// hypothesis. Returns +inf when the null marginal underflows.
pub fn bayes_factor(profile: &LikelihoodProfile, prior: &PriorSpec) -> f64 {
    let term = |i: usize| {
        let w = if i == BetaGrid::ZERO { BetaGrid::STEP / 2.0 } else { BetaGrid::weight(i) };
        profile.loglik[i] + prior.log_density(BetaGrid::beta(i)) + w.ln()
    };
    let log_m1 = log_sum_exp((BetaGrid::ZERO..BetaGrid::LEN).map(term));
    let log_m0 = log_sum_exp((0..=BetaGrid::ZERO).map(term));
    if !log_m0.is_finite() {
        return f64::INFINITY;
    }
    (log_m1 - log_m0).exp()
}

/// First-crossing rule on the posterior probability of H1. No surveillance
/// schedule is involved.
pub fn run_bayes<'a>(
    posteriors_by_look: impl IntoIterator<Item = &'a GridPosterior>,
    threshold: DecisionThreshold,
) -> SequentialDecision {
    SequentialDecision::first_crossing(
        Method::Bayes,
        posteriors_by_look.into_iter().map(|p| (p.p_h1, threshold.value())),
    )
}
