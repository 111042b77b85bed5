//! Experiment configuration files.
//!
//! Flat TOML with one section per concern; arrays carry the weekly curves.
//! Unknown keys are hard errors so typos fail fast, and parse errors name
//! the offending key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bias::{BiasFamily, BiasModelSpec, McmcSpec, NcLikelihood};
use crate::design::{DesignSpec, HcAdjustment, SccsVariant};
use crate::error::{Error, Result};
use crate::eval::scenarios::SweepConfig;
use crate::eval::ControlSuiteSpec;
use crate::sim::ScenarioConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub controls: Option<ControlsSection>,
    #[serde(default)]
    pub designs: Vec<DesignSection>,
    #[serde(default)]
    pub methods: MethodsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_subjects: u32,
    pub n_weeks_total: u32,
    pub historical_weeks: (u32, u32),
    pub surveillance_weeks: (u32, u32),
    pub baseline_log_rate: Vec<f64>,
    pub historical_rate_multiplier: f64,
    pub covariate_effect: f64,
    pub covariate_prevalence: f64,
    pub true_log_rr: f64,
    pub risk_window_weeks: u32,
    pub uptake_curve: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// One simulated dataset analyzed end to end.
    #[default]
    Single,
    /// Schedule-inconsistency experiment on null count streams.
    E1,
    /// Design-bias experiment under the confounded simulator.
    E2,
    /// Full method sweep over a control suite with injected bias.
    E3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "default_seeds")]
    pub n_seeds: u32,
    #[serde(default = "default_looks")]
    pub n_looks: u32,
    #[serde(default)]
    pub master_seed: u64,
    /// Expected events per look for the schedule experiment.
    #[serde(default = "default_events_per_look")]
    pub events_per_look: f64,
}

fn default_seeds() -> u32 {
    100
}
fn default_looks() -> u32 {
    12
}
fn default_events_per_look() -> f64 {
    10.0
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            mode: RunMode::Single,
            n_seeds: default_seeds(),
            n_looks: default_looks(),
            master_seed: 0,
            events_per_look: default_events_per_look(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsSection {
    pub n_negative: u32,
    #[serde(default = "default_rr")]
    pub positive_rr: Vec<f64>,
    #[serde(default = "default_bias_mean")]
    pub bias_mean: f64,
    #[serde(default = "default_bias_sd")]
    pub bias_sd: f64,
}

fn default_rr() -> Vec<f64> {
    vec![1.5, 2.0, 4.0]
}
fn default_bias_mean() -> f64 {
    0.25
}
fn default_bias_sd() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub family: DesignFamilyName,
    #[serde(default)]
    pub adjustment: Option<AdjustmentName>,
    #[serde(default)]
    pub variant: Option<VariantName>,
    pub risk_window_weeks: u32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DesignFamilyName {
    HistoricalComparator,
    Sccs,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AdjustmentName {
    None,
    Stratified,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    PrevaxExcl,
    MonthAdj,
    PostvaxOnly,
    ScriPre,
    ScriPost,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsSection {
    #[serde(default = "default_priors")]
    pub prior_variances: Vec<f64>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_cv_replicates")]
    pub cv_replicates: usize,
    #[serde(default)]
    pub bias_family: BiasFamilyName,
    #[serde(default = "default_t_dof")]
    pub t_dof: u32,
    #[serde(default)]
    pub nc_likelihood: NcLikelihoodName,
    #[serde(default)]
    pub mcmc: McmcSection,
}

fn default_priors() -> Vec<f64> {
    vec![4.0]
}
fn default_thresholds() -> Vec<f64> {
    vec![0.95]
}
fn default_alpha() -> f64 {
    0.05
}
fn default_cv_replicates() -> usize {
    10_000
}
fn default_t_dof() -> u32 {
    4
}

impl Default for MethodsSection {
    fn default() -> Self {
        MethodsSection {
            prior_variances: default_priors(),
            thresholds: default_thresholds(),
            alpha: default_alpha(),
            cv_replicates: default_cv_replicates(),
            bias_family: BiasFamilyName::Normal,
            t_dof: default_t_dof(),
            nc_likelihood: NcLikelihoodName::Profile,
            mcmc: McmcSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BiasFamilyName {
    #[default]
    Normal,
    T,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NcLikelihoodName {
    #[default]
    Profile,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcSection { total_iterations: 110_000, burn_in: 10_000, thin: 100, chains: 4 }
    }
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

impl FileConfig {
    /// The scenario with seeds resolved.
    pub fn scenario_config(&self, master_seed: u64) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        let config = ScenarioConfig {
            n_subjects: s.n_subjects,
            n_weeks_total: s.n_weeks_total,
            historical_weeks: s.historical_weeks,
            surveillance_weeks: s.surveillance_weeks,
            baseline_log_rate: s.baseline_log_rate.clone(),
            historical_rate_multiplier: s.historical_rate_multiplier,
            covariate_effect: s.covariate_effect,
            covariate_prevalence: s.covariate_prevalence,
            true_log_rr: s.true_log_rr,
            risk_window_weeks: s.risk_window_weeks,
            uptake_curve: s.uptake_curve.clone(),
            master_seed,
            outcome_stream: 0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn design_specs(&self) -> Result<Vec<DesignSpec>> {
        self.designs
            .iter()
            .map(|d| {
                let spec = match d.family {
                    DesignFamilyName::HistoricalComparator => {
                        if d.variant.is_some() {
                            return Err(Error::InvalidConfig(
                                "`variant` applies only to sccs designs".into(),
                            ));
                        }
                        DesignSpec::HistoricalComparator {
                            adjustment: match d.adjustment.unwrap_or(AdjustmentName::None) {
                                AdjustmentName::None => HcAdjustment::None,
                                AdjustmentName::Stratified => HcAdjustment::Stratified,
                            },
                            risk_window_weeks: d.risk_window_weeks,
                        }
                    }
                    DesignFamilyName::Sccs => {
                        if d.adjustment.is_some() {
                            return Err(Error::InvalidConfig(
                                "`adjustment` applies only to historical-comparator designs"
                                    .into(),
                            ));
                        }
                        DesignSpec::Sccs {
                            variant: match d.variant.unwrap_or(VariantName::PrevaxExcl) {
                                VariantName::PrevaxExcl => SccsVariant::PrevaxExcluded,
                                VariantName::MonthAdj => SccsVariant::MonthAdjusted,
                                VariantName::PostvaxOnly => SccsVariant::PostVaxOnly,
                                VariantName::ScriPre => SccsVariant::ScriPreControl,
                                VariantName::ScriPost => SccsVariant::ScriPostControl,
                            },
                            risk_window_weeks: d.risk_window_weeks,
                        }
                    }
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    pub fn bias_model(&self) -> Result<BiasModelSpec> {
        let model = BiasModelSpec {
            family: match self.methods.bias_family {
                BiasFamilyName::Normal => BiasFamily::Normal,
                BiasFamilyName::T => BiasFamily::StudentT { dof: self.methods.t_dof },
            },
            nc_likelihood: match self.methods.nc_likelihood {
                NcLikelihoodName::Profile => NcLikelihood::FullProfile,
                NcLikelihoodName::NormalApprox => NcLikelihood::NormalApprox,
            },
            ..Default::default()
        };
        model.validate()?;
        Ok(model)
    }

    pub fn mcmc_spec(&self, seed: u64) -> Result<McmcSpec> {
        let m = self.methods.mcmc;
        McmcSpec::new(m.total_iterations, m.burn_in, m.thin, m.chains, seed)
    }

    pub fn controls_spec(&self) -> Result<ControlSuiteSpec> {
        let c = self.controls.as_ref().ok_or_else(|| {
            Error::InvalidConfig("a [controls] section is required for this mode".into())
        })?;
        let spec = ControlSuiteSpec {
            n_negative: c.n_negative,
            positive_rr: c.positive_rr.clone(),
            bias_mean: c.bias_mean,
            bias_sd: c.bias_sd,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Assemble the full sweep configuration (mode `e3` or `single` with
    /// controls present).
    pub fn sweep_config(&self, master_seed: u64) -> Result<SweepConfig> {
        let scenario = self.scenario_config(0)?;
        let cfg = SweepConfig {
            scenario,
            controls: self.controls_spec()?,
            designs: self.design_specs()?,
            prior_variances: self.methods.prior_variances.clone(),
            alpha: self.methods.alpha,
            cv_replicates: self.methods.cv_replicates,
            bias_model: self.bias_model()?,
            mcmc: self.mcmc_spec(crate::rng::derive_seed(master_seed, "mcmc", 0))?,
            n_seeds: self.experiment.n_seeds,
            n_looks: self.experiment.n_looks,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
