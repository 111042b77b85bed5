//! Random-walk Metropolis-within-Gibbs sampler for the hierarchical bias
//! model, plus convergence diagnostics.
//!
//! The state is (b_bar, tau, b_1..b_M). Each coordinate takes a Gaussian
//! random-walk proposal; step sizes adapt in batches only during burn-in
//! (targeting acceptance between 0.3 and 0.5) and are frozen afterwards to
//! preserve detailed balance.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bias::{BiasFamily, BiasModelSpec, McmcSpec};
use crate::grid::BetaGrid;
use crate::num::{interp_linear, normal_logpdf, student_t_logpdf};
use crate::rng;

/// Likelihood contribution of one negative control, evaluated at its bias.
pub(crate) enum ControlLik<'a> {
    /// Full profile on the shared grid (linearly interpolated).
    Full(&'a [f64]),
    /// Normal approximation at (mean, sd).
    Gaussian { mean: f64, sd: f64 },
}

impl ControlLik<'_> {
    #[inline]
    pub(crate) fn eval(&self, b: f64) -> f64 {
        match self {
            ControlLik::Full(values) => interp_linear(values, BetaGrid::MIN, BetaGrid::STEP, b),
            ControlLik::Gaussian { mean, sd } => {
                let z = (b - mean) / sd;
                -0.5 * z * z
            }
        }
    }
}

#[inline]
fn family_logpdf(family: BiasFamily, b: f64, center: f64, scale: f64) -> f64 {
    match family {
        BiasFamily::Normal => normal_logpdf(b, center, scale),
        BiasFamily::StudentT { dof } => student_t_logpdf(b, dof, center, scale),
    }
}

struct StepSize {
    step: f64,
    accepted: u32,
    proposed: u32,
}

impl StepSize {
    fn new(step: f64) -> Self {
        StepSize { step, accepted: 0, proposed: 0 }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    /// Batch adaptation toward the 0.3..0.5 acceptance window.
    fn adapt(&mut self) {
        if self.proposed == 0 {
            return;
        }
        let rate = self.accepted as f64 / self.proposed as f64;
        if rate > 0.5 {
            self.step *= 1.25;
        } else if rate < 0.3 {
            self.step *= 0.8;
        }
        self.accepted = 0;
        self.proposed = 0;
    }
}

const ADAPT_BATCH: usize = 50;

/// Run one chain and return the retained (b_bar, tau) draws.
pub(crate) fn run_chain(
    controls: &[ControlLik<'_>],
    init_locations: &[f64],
    model: &BiasModelSpec,
    mcmc: &McmcSpec,
    chain_index: usize,
) -> Vec<(f64, f64)> {
    let m = controls.len();
    let mut rng = rng::stream(mcmc.seed, "bias/chain", chain_index as u64);
    let sigma_b = model.mean_hyper_variance.sqrt();
    let sigma_tau = model.scale_hyper_variance.sqrt();

    // random initialization
    let mut b_bar: f64 = sigma_b * rng.sample::<f64, _>(StandardNormal) * 0.5;
    let mut tau: f64 = match model.fixed_tau {
        Some(t) => t,
        None => sigma_tau * rng.sample::<f64, _>(StandardNormal).abs() + 0.05,
    };
    let mut b: Vec<f64> = init_locations
        .iter()
        .map(|loc| loc + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();

    // cached log-likelihood and hierarchy terms per control
    let mut lik: Vec<f64> = (0..m).map(|i| controls[i].eval(b[i])).collect();
    let mut hier: Vec<f64> = (0..m).map(|i| family_logpdf(model.family, b[i], b_bar, tau)).collect();

    let mut step_b_bar = StepSize::new(0.5);
    let mut step_tau = StepSize::new(0.25);
    let mut step_b: Vec<StepSize> = (0..m).map(|_| StepSize::new(0.5)).collect();

    let retained = mcmc.retained_per_chain();
    let mut draws = Vec::with_capacity(retained);

    for iter in 0..mcmc.total_iterations {
        // b_bar
        {
            let proposal = b_bar + step_b_bar.step * rng.sample::<f64, _>(StandardNormal);
            let mut delta = normal_logpdf(proposal, 0.0, sigma_b) - normal_logpdf(b_bar, 0.0, sigma_b);
            let mut new_hier = Vec::with_capacity(m);
            for i in 0..m {
                let h = family_logpdf(model.family, b[i], proposal, tau);
                delta += h - hier[i];
                new_hier.push(h);
            }
            let accept = delta >= 0.0 || rng.random::<f64>().ln() < delta;
            if accept {
                b_bar = proposal;
                hier = new_hier;
            }
            step_b_bar.record(accept);
        }

        // tau (half-normal prior; non-positive proposals are rejected)
        if model.fixed_tau.is_none() {
            let proposal = tau + step_tau.step * rng.sample::<f64, _>(StandardNormal);
            let accept = if proposal > 0.0 {
                let mut delta =
                    normal_logpdf(proposal, 0.0, sigma_tau) - normal_logpdf(tau, 0.0, sigma_tau);
                let mut new_hier = Vec::with_capacity(m);
                for i in 0..m {
                    let h = family_logpdf(model.family, b[i], b_bar, proposal);
                    delta += h - hier[i];
                    new_hier.push(h);
                }
                let accept = delta >= 0.0 || rng.random::<f64>().ln() < delta;
                if accept {
                    tau = proposal;
                    hier = new_hier;
                }
                accept
            } else {
                false
            };
            step_tau.record(accept);
        }

        // each control's bias
        for i in 0..m {
            let proposal = b[i] + step_b[i].step * rng.sample::<f64, _>(StandardNormal);
            let new_lik = controls[i].eval(proposal);
            let new_hier = family_logpdf(model.family, proposal, b_bar, tau);
            let delta = new_lik + new_hier - lik[i] - hier[i];
            let accept = delta >= 0.0 || rng.random::<f64>().ln() < delta;
            if accept {
                b[i] = proposal;
                lik[i] = new_lik;
                hier[i] = new_hier;
            }
            step_b[i].record(accept);
        }

        let in_burn_in = iter < mcmc.burn_in;
        if in_burn_in {
            if (iter + 1) % ADAPT_BATCH == 0 {
                step_b_bar.adapt();
                step_tau.adapt();
                for s in &mut step_b {
                    s.adapt();
                }
            }
        } else if (iter - mcmc.burn_in) % mcmc.thin == 0 && draws.len() < retained {
            draws.push((b_bar, tau));
        }
    }
    draws
}

/// Split-Rhat over per-chain sample sequences: each chain is halved and
/// the potential scale reduction factor is computed across the halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        let half = chain.len() / 2;
        if half < 2 {
            return f64::NAN;
        }
        halves.push(&chain[..half]);
        halves.push(&chain[half..half * 2]);
    }
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mean)| h.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        // all chains constant: nothing to diagnose
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Effective sample size across chains: Geyer initial-positive-sequence
/// truncation of the combined autocorrelation.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let c = chains.len() as f64;
    let n = chains[0].len();
    if n < 4 {
        return f64::NAN;
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|ch| ch.iter().sum::<f64>() / nf).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(ch, m)| ch.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nf - 1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / c;
    let grand = means.iter().sum::<f64>() / c;
    let b = if chains.len() > 1 {
        nf / (c - 1.0) * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    if var_plus <= 0.0 {
        return c * nf;
    }

    let acov = |chain: &[f64], mean: f64, t: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - t {
            s += (chain[i] - mean) * (chain[i + t] - mean);
        }
        s / nf
    };

    let mut sum_rho = 0.0;
    let mut t = 1;
    while t + 1 < n {
        let rho_pair: f64 = [t, t + 1]
            .iter()
            .map(|&lag| {
                let mean_acov: f64 = chains
                    .iter()
                    .zip(&means)
                    .map(|(ch, m)| acov(ch, *m, lag))
                    .sum::<f64>()
                    / c;
                1.0 - (w - mean_acov) / var_plus
            })
            .sum();
        if rho_pair < 0.0 {
            break;
        }
        sum_rho += rho_pair;
        t += 2;
    }
    (c * nf / (1.0 + 2.0 * sum_rho)).max(1.0)
}
