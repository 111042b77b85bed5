//! Adaptive bias correction from negative-control outcomes.
//!
//! Negative controls have no causal association with the exposure, so any
//! deviation of their estimated log-RR from zero measures residual
//! systematic error. A hierarchical model (normal or Student-t) is fitted
//! by MCMC to the negative-control likelihood profiles, its posterior
//! predictive supplies bias draws, and de-biased effect samples are formed
//! as `beta = beta_tilde - b` with `beta_tilde` drawn from the biased-effect
//! grid posterior.

pub mod mcmc;

use std::io::Write;

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::bayes::{posterior, DecisionThreshold, PriorSpec};
use crate::design::LikelihoodProfile;
use crate::error::{Error, Result};
use crate::grid::BetaGrid;
use crate::maxsprt::{Method, SequentialDecision};
use crate::num;
use crate::rng;

use mcmc::{effective_sample_size, split_rhat, ControlLik};

/// Distribution family for the exchangeable bias terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasFamily {
    Normal,
    /// Student-t with integer degrees of freedom (>= 3); dof 4 balances
    /// heavy tails against shrinkage.
    StudentT { dof: u32 },
}

/// How negative-control evidence enters the hierarchical fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NcLikelihood {
    /// Full likelihood profiles (default).
    #[default]
    FullProfile,
    /// Normal approximation at the MLE with curvature-based spread;
    /// non-estimable profiles fall back to their full profile.
    NormalApprox,
}

/// Hierarchical bias model: `b_i ~ family(b_bar, tau^2)`,
/// `b_bar ~ N(0, mean_hyper_variance)`, `tau ~ half-normal with variance
/// parameter scale_hyper_variance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasModelSpec {
    pub family: BiasFamily,
    /// Prior variance of the average bias (default 2).
    pub mean_hyper_variance: f64,
    /// Half-normal variance parameter for tau (default 0.5).
    pub scale_hyper_variance: f64,
    pub nc_likelihood: NcLikelihood,
    /// Pin tau to a known value instead of sampling it. Validation knob
    /// for conjugate oracles; leave `None` in production.
    pub fixed_tau: Option<f64>,
}

impl Default for BiasModelSpec {
    fn default() -> Self {
        BiasModelSpec {
            family: BiasFamily::Normal,
            mean_hyper_variance: 2.0,
            scale_hyper_variance: 0.5,
            nc_likelihood: NcLikelihood::FullProfile,
            fixed_tau: None,
        }
    }
}

impl BiasModelSpec {
    pub fn student_t() -> Self {
        BiasModelSpec { family: BiasFamily::StudentT { dof: 4 }, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let BiasFamily::StudentT { dof } = self.family {
            if dof < 3 {
                return Err(Error::InvalidConfig("t degrees of freedom must be >= 3".into()));
            }
        }
        if !(self.mean_hyper_variance > 0.0) || !(self.scale_hyper_variance > 0.0) {
            return Err(Error::InvalidConfig("bias hyper-variances must be positive".into()));
        }
        if let Some(t) = self.fixed_tau {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig("fixed_tau must be positive".into()));
            }
        }
        Ok(())
    }
}

/// MCMC schedule. The defaults mirror a long production schedule; any
/// custom schedule must retain at least 500 draws per chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcSpec {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl McmcSpec {
    /// Long default schedule: 110k iterations, 10k burn-in, thin 100,
    /// 4 chains.
    pub fn long(seed: u64) -> Self {
        McmcSpec { total_iterations: 110_000, burn_in: 10_000, thin: 100, chains: 4, seed }
    }

    pub fn new(
        total_iterations: usize,
        burn_in: usize,
        thin: usize,
        chains: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = McmcSpec { total_iterations, burn_in, thin, chains, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.burn_in >= self.total_iterations {
            return Err(Error::InvalidConfig("degenerate MCMC schedule".into()));
        }
        if self.chains < 2 {
            return Err(Error::InvalidConfig("need >= 2 chains for split-Rhat".into()));
        }
        if self.retained_per_chain() < 500 {
            return Err(Error::InvalidConfig(format!(
                "schedule retains {} samples per chain, need >= 500",
                self.retained_per_chain()
            )));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.total_iterations - self.burn_in) / self.thin
    }

    /// Same schedule with a derived seed; used to give every look and
    /// outcome its own stream.
    pub fn with_derived_seed(&self, path: &str, index: u64) -> Self {
        McmcSpec { seed: rng::derive_seed(self.seed, path, index), ..*self }
    }
}

/// Convergence diagnostics of a fitted bias model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcDiagnostics {
    pub rhat_mean: f64,
    pub rhat_scale: f64,
    pub ess_mean: f64,
    pub ess_scale: f64,
}

/// Posterior over (b_bar, tau) with a posterior-predictive sampler for the
/// bias of a new outcome.
#[derive(Debug, Clone)]
pub struct BiasPosterior {
    /// Retained draws, chain-major: chain 0 first.
    pub samples: Vec<(f64, f64)>,
    pub chains: usize,
    pub per_chain: usize,
    pub family: BiasFamily,
    pub diagnostics: McmcDiagnostics,
    /// True when any split-Rhat exceeds 1.1; downstream results must
    /// surface this, not hide it.
    pub flagged: bool,
}

impl BiasPosterior {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Posterior-predictive bias draw for retained sample `s`: pick
    /// (b_bar, tau) and draw from the family.
    pub fn predictive_draw<R: Rng>(&self, s: usize, rng: &mut R) -> f64 {
        let (b_bar, tau) = self.samples[s % self.samples.len()];
        match self.family {
            BiasFamily::Normal => {
                b_bar + tau * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }
            BiasFamily::StudentT { dof } => {
                let t = rand_distr::StudentT::new(dof as f64).expect("dof >= 3").sample(rng);
                b_bar + tau * t
            }
        }
    }

    /// Posterior-predictive density on the shared grid.
    pub fn predictive_density(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        BetaGrid::betas()
            .map(|b| {
                self.samples
                    .iter()
                    .map(|&(b_bar, tau)| match self.family {
                        BiasFamily::Normal => num::normal_logpdf(b, b_bar, tau).exp(),
                        BiasFamily::StudentT { dof } => {
                            num::student_t_logpdf(b, dof, b_bar, tau).exp()
                        }
                    })
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    /// Posterior-predictive probability of positive bias, Monte Carlo over
    /// the retained samples with a deterministic stream.
    pub fn prob_positive(&self) -> f64 {
        let mut rng = rng::stream(0xB1A5, "bias/prob-positive", 0);
        let hits = (0..self.samples.len())
            .filter(|&s| self.predictive_draw(s, &mut rng) > 0.0)
            .count();
        hits as f64 / self.samples.len() as f64
    }

    /// Posterior mean of the average bias.
    pub fn mean_of_center(&self) -> f64 {
        self.samples.iter().map(|s| s.0).sum::<f64>() / self.samples.len() as f64
    }

    /// Posterior median of the scale.
    pub fn median_of_scale(&self) -> f64 {
        let mut taus: Vec<f64> = self.samples.iter().map(|s| s.1).collect();
        taus.sort_by(f64::total_cmp);
        taus[taus.len() / 2]
    }

    /// Near-point-mass posterior at a known bias; for validation and the
    /// zero-bias identity.
    pub fn degenerate(bias: f64, n: usize) -> Self {
        BiasPosterior {
            samples: vec![(bias, 1e-9); n],
            chains: 2,
            per_chain: n / 2,
            family: BiasFamily::Normal,
            diagnostics: McmcDiagnostics {
                rhat_mean: 1.0,
                rhat_scale: 1.0,
                ess_mean: n as f64,
                ess_scale: n as f64,
            },
            flagged: false,
        }
    }
}

fn approximate_gaussian(profile: &LikelihoodProfile) -> Option<(f64, f64)> {
    let mle = profile.mle_value()?;
    let i = profile.argmax_index();
    if i == 0 || i == BetaGrid::LEN - 1 {
        return None;
    }
    let h = BetaGrid::STEP;
    let curv = (profile.loglik[i - 1] - 2.0 * profile.loglik[i] + profile.loglik[i + 1]) / (h * h);
    if curv >= 0.0 {
        return None;
    }
    Some((mle, (-1.0 / curv).sqrt()))
}

/// Fit the hierarchical bias model to negative-control profiles.
///
/// Controls are keyed by outcome id; the fit sorts by id internally so the
/// result is invariant to input order. Requires at least two estimable
/// profiles and a maximum risk-window count of at least 2 across controls;
/// non-estimable profiles still contribute their one-sided likelihood.
pub fn fit_bias_model(
    negative_controls: &[(u32, LikelihoodProfile)],
    model: &BiasModelSpec,
    mcmc: &McmcSpec,
) -> Result<BiasPosterior> {
    model.validate()?;
    mcmc.validate()?;
    let mut order: Vec<usize> = (0..negative_controls.len()).collect();
    order.sort_by_key(|&i| negative_controls[i].0);

    let estimable = negative_controls.iter().filter(|(_, p)| p.estimable).count();
    if estimable < 2 {
        return Err(Error::InsufficientEvidence(format!(
            "{estimable} estimable negative-control profiles, need >= 2"
        )));
    }
    let max_count = negative_controls.iter().map(|(_, p)| p.event_counts.0).max().unwrap_or(0);
    if max_count < 2 {
        return Err(Error::InsufficientEvidence(
            "maximum incidence count across negative controls is below 2".into(),
        ));
    }

    let mut controls: Vec<ControlLik> = Vec::with_capacity(order.len());
    let mut init_locations = Vec::with_capacity(order.len());
    for &i in &order {
        let profile = &negative_controls[i].1;
        let lik = match model.nc_likelihood {
            NcLikelihood::FullProfile => ControlLik::Full(&profile.loglik),
            NcLikelihood::NormalApprox => match approximate_gaussian(profile) {
                Some((mean, sd)) => ControlLik::Gaussian { mean, sd },
                None => ControlLik::Full(&profile.loglik),
            },
        };
        controls.push(lik);
        init_locations.push(BetaGrid::beta(profile.argmax_index()).clamp(-2.0, 2.0));
    }

    let per_chain: Vec<Vec<(f64, f64)>> = (0..mcmc.chains)
        .into_par_iter()
        .map(|c| mcmc::run_chain(&controls, &init_locations, model, mcmc, c))
        .collect();

    let centers: Vec<Vec<f64>> =
        per_chain.iter().map(|ch| ch.iter().map(|s| s.0).collect()).collect();
    let scales: Vec<Vec<f64>> =
        per_chain.iter().map(|ch| ch.iter().map(|s| s.1).collect()).collect();
    let rhat_mean = split_rhat(&centers);
    let rhat_scale = if model.fixed_tau.is_some() { 1.0 } else { split_rhat(&scales) };
    let diagnostics = McmcDiagnostics {
        rhat_mean,
        rhat_scale,
        ess_mean: effective_sample_size(&centers),
        ess_scale: effective_sample_size(&scales),
    };
    let flagged = !(rhat_mean <= 1.1 && rhat_scale <= 1.1);

    let retained = mcmc.retained_per_chain();
    let samples: Vec<(f64, f64)> = per_chain.into_iter().flatten().collect();
    debug_assert_eq!(samples.len(), retained * mcmc.chains);

    Ok(BiasPosterior {
        samples,
        chains: mcmc.chains,
        per_chain: retained,
        family: model.family,
        diagnostics,
        flagged,
    })
}

/// De-biased posterior samples for one outcome at one look.
#[derive(Debug, Clone)]
pub struct DebiasedPosterior {
    /// `beta^(s) = beta_tilde^(s) - b^(s)`, one per retained MCMC sample.
    pub samples: Vec<f64>,
    /// Fraction of samples above zero.
    pub p_h1_hat: f64,
    pub median: f64,
    pub ci95: (f64, f64),
    /// Convergence flag inherited from the bias posterior.
    pub bias_flagged: bool,
}

fn summarize_samples(mut samples: Vec<f64>, bias_flagged: bool) -> DebiasedPosterior {
    let n = samples.len() as f64;
    let p_h1_hat = samples.iter().filter(|&&b| b > 0.0).count() as f64 / n;
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        let idx = (p * (sorted.len() - 1) as f64).round() as usize;
        sorted[idx]
    };
    let median = q(0.5);
    let ci95 = (q(0.025), q(0.975));
    samples.shrink_to_fit();
    DebiasedPosterior { samples, p_h1_hat, median, ci95, bias_flagged }
}

/// De-bias an outcome profile: draw bias from the posterior predictive and
/// the biased effect from its grid posterior, and difference them.
pub fn debias(
    outcome_profile: &LikelihoodProfile,
    prior: &PriorSpec,
    bias: &BiasPosterior,
    mcmc: &McmcSpec,
) -> Result<DebiasedPosterior> {
    let tilde = posterior(outcome_profile, prior)?;
    let mut rng = rng::stream(mcmc.seed, "bias/debias", 0);
    let samples: Vec<f64> = (0..bias.len())
        .map(|s| {
            let b = bias.predictive_draw(s, &mut rng);
            let beta_tilde = tilde.sample(&mut rng);
            beta_tilde - b
        })
        .collect();
    Ok(summarize_samples(samples, bias.flagged))
}

/// Analysis status of one look in the sequential BBC procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookStatus {
    Analyzed,
    /// No negative controls supplied: plain Bayesian analysis (bias 0).
    NoBiasCorrection,
    /// Minimum-evidence precondition failed; the look cannot signal.
    Skipped,
}

/// Per-look inputs to the sequential procedure: the split of accrued data
/// into negative-control profiles and the outcome-of-interest profile.
#[derive(Debug, Clone)]
pub struct BbcLook {
    pub look: u32,
    pub negative_controls: Vec<(u32, LikelihoodProfile)>,
    pub outcome: LikelihoodProfile,
}

/// Per-look output of the sequential procedure.
#[derive(Debug)]
pub struct BbcLookResult {
    pub look: u32,
    pub status: LookStatus,
    pub bias: Option<BiasPosterior>,
    pub debiased: Option<DebiasedPosterior>,
}

/// Full result: the stopping decision plus per-look posteriors.
#[derive(Debug)]
pub struct BbcRun {
    pub decision: SequentialDecision,
    pub per_look: Vec<BbcLookResult>,
}

/// Sequentially analyze looks with adaptive bias correction: refit the
/// bias model on each look's negative controls, de-bias the outcome, and
/// stop at the first look whose `p_h1_hat` exceeds the threshold. Looks
/// failing the minimum-evidence precondition are recorded as skipped and
/// cannot signal. With no negative controls the procedure degenerates to
/// the plain Bayesian rule.
///
/// Accruing more events can move `p_h1_hat` in either direction: the
/// statistic is not monotone in the data.
pub fn sequential_bbc(
    looks: &[BbcLook],
    prior: &PriorSpec,
    model: &BiasModelSpec,
    mcmc: &McmcSpec,
    threshold: DecisionThreshold,
) -> Result<BbcRun> {
    let mut per_look = Vec::with_capacity(looks.len());
    let mut trajectory = Vec::with_capacity(looks.len());
    for input in looks {
        let look_mcmc = mcmc.with_derived_seed("bbc/look", input.look as u64);
        if input.negative_controls.is_empty() {
            let post = posterior(&input.outcome, prior)?;
            let mut rng = rng::stream(look_mcmc.seed, "bias/debias", 0);
            let n = look_mcmc.retained_per_chain() * look_mcmc.chains;
            let samples: Vec<f64> = (0..n).map(|_| post.sample(&mut rng)).collect();
            let mut debiased = summarize_samples(samples, false);
            // bias is exactly zero here: report the exact grid posterior
            debiased.p_h1_hat = post.p_h1;
            debiased.median = post.median;
            debiased.ci95 = post.ci95;
            trajectory.push(post.p_h1);
            per_look.push(BbcLookResult {
                look: input.look,
                status: LookStatus::NoBiasCorrection,
                bias: None,
                debiased: Some(debiased),
            });
            continue;
        }
        match fit_bias_model(&input.negative_controls, model, &look_mcmc) {
            Ok(bias) => {
                let debiased = debias(&input.outcome, prior, &bias, &look_mcmc)?;
                trajectory.push(debiased.p_h1_hat);
                per_look.push(BbcLookResult {
                    look: input.look,
                    status: LookStatus::Analyzed,
                    bias: Some(bias),
                    debiased: Some(debiased),
                });
            }
            Err(Error::InsufficientEvidence(_)) => {
                trajectory.push(f64::NAN); // cannot signal
                per_look.push(BbcLookResult {
                    look: input.look,
                    status: LookStatus::Skipped,
                    bias: None,
                    debiased: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let decision = SequentialDecision::first_crossing(
        Method::Bbc,
        trajectory.iter().map(|&p| (p, threshold.value())),
    );
    let analyzed = decision.looks.len();
    Ok(BbcRun { decision, per_look: per_look.into_iter().take(analyzed).collect() })
}

/// Export retained bias-model samples as CSV rows
/// `(look, chain, iter, b_bar, tau)`.
pub fn write_bias_samples_csv<W: Write>(
    out: &mut W,
    look: u32,
    posterior: &BiasPosterior,
    write_header: bool,
) -> Result<()> {
    if write_header {
        writeln!(out, "look,chain,iter,b_bar,tau")?;
    }
    for (s, (b_bar, tau)) in posterior.samples.iter().enumerate() {
        let chain = s / posterior.per_chain;
        let iter = s % posterior.per_chain;
        writeln!(out, "{look},{chain},{iter},{b_bar:.9},{tau:.9}")?;
    }
    Ok(())
}
