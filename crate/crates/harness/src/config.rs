//! Experiment configuration: the JSON schema, loading with field-path errors and
//! semantic validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use miis_core::cis::CisVariant;
use miis_core::estimators::ControlVariate;
use miis_core::samplers::SamplerKind;
use serde::{Deserialize, Serialize};

/// A configuration problem, located by a dotted field path such as `model.rho`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Bvn,
    MmppSim,
    MmppData,
    Oracle,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Bvn => "bvn",
            ExperimentKind::MmppSim => "mmpp-sim",
            ExperimentKind::MmppData => "mmpp-data",
            ExperimentKind::Oracle => "oracle",
        }
    }

    pub fn is_mmpp(self) -> bool {
        matches!(self, ExperimentKind::MmppSim | ExperimentKind::MmppData)
    }
}

/// Model parameters. Which fields are required depends on the experiment; fields
/// that the experiment does not use are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    /// Exponential prior means: `psi1, psi2, q12, q21`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_means: Option<Vec<f64>>,
    /// Number of simulated datasets (mmpp-sim).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datasets: Option<usize>,
    /// Seed for the data-generating process; defaults to the base seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_file: Option<PathBuf>,
    /// Oracle atoms, one list per block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<Vec<f64>>>,
    /// Oracle joint probabilities, row-major over the blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Origin,
    Truth,
    PriorDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitConfig {
    Named(InitKind),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProposalConfig {
    /// Student t matched in mean and variance to the conditional (bvn).
    StudentT { df: f64 },
    /// The exact conditional (bvn).
    Exact,
    /// Discrete probabilities over the oracle atoms: one list per block for the
    /// blockwise samplers, one joint list for full-target samplers.
    Discrete { probs: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Number of particles (MIIS kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// CIS variant used within Gibbs: simple or antithetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<CisVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<ProposalConfig>,
    /// Conditional updates per block and sweep (gibbs-exact, mwg).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_repeats: Option<usize>,
    /// Explicit random-walk covariance; otherwise derived from the pilot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rw_scale: Option<Vec<Vec<f64>>>,
    /// Evaluate particle densities in parallel.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_bound: Option<f64>,
    #[serde(default)]
    pub allow_small_n: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Mc,
    Miis,
    Rb,
    Cv,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mc => "mc",
            EstimatorKind::Miis => "miis",
            EstimatorKind::Rb => "rb",
            EstimatorKind::Cv => "cv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub label: String,
    pub sampler: SamplerConfig,
    /// The MSE reference; exactly one method carries this flag.
    #[serde(default)]
    pub reference: bool,
    /// Estimators reported for this method; defaults to every applicable one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Control variates per base functional; defaults per experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_sets: Option<BTreeMap<String, Vec<ControlVariate>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    /// JSON file holding the covariance estimate as an array of rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Length of the adaptive warm phase.
    #[serde(default = "default_pilot_iterations")]
    pub iterations: usize,
}

fn default_pilot_iterations() -> usize {
    4000
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            file: None,
            iterations: default_pilot_iterations(),
        }
    }
}

/// How the cost of a replication is measured for the time-adjusted MSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostModel {
    /// Target density evaluations.
    #[default]
    DensityEvals,
    /// Rounds of particle evaluations with `workers` evaluated concurrently;
    /// samplers without particles still pay one round per evaluation.
    ParallelRounds { workers: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(alias = "M")]
    pub m: usize,
    pub burn_in: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub methods: Vec<MethodConfig>,
    /// Estimands to tabulate; defaults to all of the experiment's estimands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obm_batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pilot: PilotConfig,
    #[serde(default)]
    pub cost: CostModel,
}

/// Parses a JSON config; errors carry the path of the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "<root>".to_string() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn require<T: Clone>(value: &Option<T>, path: &str, kind: ExperimentKind) -> Result<T, ConfigError> {
    value
        .clone()
        .ok_or_else(|| ConfigError::new(path, format!("required for {} experiments", kind.name())))
}

fn reject<T>(value: &Option<T>, path: &str, kind: ExperimentKind) -> Result<(), ConfigError> {
    if value.is_some() {
        return Err(ConfigError::new(
            path,
            format!("not used by {} experiments", kind.name()),
        ));
    }
    Ok(())
}

fn positive_finite(values: &[f64], path: &str) -> Result<(), ConfigError> {
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(ConfigError::new(
            path,
            format!("values must be positive and finite (got {v})"),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Checks everything that can be checked without building the models.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let kind = self.experiment;
        let model = &self.model;
        match kind {
            ExperimentKind::Bvn => {
                let rho = require(&model.rho, "model.rho", kind)?;
                if !(rho.abs() < 1.0) {
                    return Err(ConfigError::new(
                        "model.rho",
                        format!("must lie in (-1, 1) (got {rho})"),
                    ));
                }
                for (v, p) in [
                    (model.psi.is_some(), "model.psi"),
                    (model.q.is_some(), "model.q"),
                    (model.window.is_some(), "model.window"),
                    (model.prior_means.is_some(), "model.prior_means"),
                    (model.datasets.is_some(), "model.datasets"),
                    (model.data_seed.is_some(), "model.data_seed"),
                    (model.events_file.is_some(), "model.events_file"),
                    (model.atoms.is_some(), "model.atoms"),
                    (model.probs.is_some(), "model.probs"),
                ] {
                    reject(&v.then_some(()), p, kind)?;
                }
            }
            ExperimentKind::MmppSim => {
                let psi = require(&model.psi, "model.psi", kind)?;
                let q = require(&model.q, "model.q", kind)?;
                let window = require(&model.window, "model.window", kind)?;
                if psi.len() != 2 {
                    return Err(ConfigError::new(
                        "model.psi",
                        "the harness supports two-state models only",
                    ));
                }
                if q.len() != 2 {
                    return Err(ConfigError::new("model.q", "expected [q12, q21]"));
                }
                positive_finite(&psi, "model.psi")?;
                positive_finite(&q, "model.q")?;
                positive_finite(&[window], "model.window")?;
                if psi[1] <= psi[0] {
                    return Err(ConfigError::new("model.psi", "intensities must be strictly increasing"));
                }
                if model.datasets == Some(0) {
                    return Err(ConfigError::new("model.datasets", "at least one dataset is needed"));
                }
                self.check_prior_means(false)?;
                reject(&model.rho, "model.rho", kind)?;
                reject(&model.events_file, "model.events_file", kind)?;
                reject(&model.atoms, "model.atoms", kind)?;
                reject(&model.probs, "model.probs", kind)?;
            }
            ExperimentKind::MmppData => {
                require(&model.events_file, "model.events_file", kind)?;
                self.check_prior_means(true)?;
                if let Some(w) = model.window {
                    positive_finite(&[w], "model.window")?;
                }
                reject(&model.rho, "model.rho", kind)?;
                reject(&model.psi, "model.psi", kind)?;
                reject(&model.q, "model.q", kind)?;
                reject(&model.datasets, "model.datasets", kind)?;
                reject(&model.data_seed, "model.data_seed", kind)?;
                reject(&model.atoms, "model.atoms", kind)?;
                reject(&model.probs, "model.probs", kind)?;
            }
            ExperimentKind::Oracle => {
                if model.atoms.is_some() != model.probs.is_some() {
                    let missing = if model.atoms.is_some() {
                        "model.probs"
                    } else {
                        "model.atoms"
                    };
                    return Err(ConfigError::new(missing, "atoms and probs must be given together"));
                }
                if let Some(atoms) = &model.atoms {
                    if atoms.len() != 2 {
                        return Err(ConfigError::new("model.atoms", "the oracle experiment uses two blocks"));
                    }
                }
                reject(&model.rho, "model.rho", kind)?;
                reject(&model.psi, "model.psi", kind)?;
                reject(&model.q, "model.q", kind)?;
                reject(&model.window, "model.window", kind)?;
                reject(&model.prior_means, "model.prior_means", kind)?;
                reject(&model.datasets, "model.datasets", kind)?;
                reject(&model.data_seed, "model.data_seed", kind)?;
                reject(&model.events_file, "model.events_file", kind)?;
            }
        }

        if self.m == 0 {
            return Err(ConfigError::new("m", "chain length must be at least 1"));
        }
        if self.replications == 0 {
            return Err(ConfigError::new("replications", "at least one replication is needed"));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::new("threads", "must be at least 1"));
        }
        if self.obm_batch == Some(0) {
            return Err(ConfigError::new("obm_batch", "must be at least 1"));
        }
        if let CostModel::ParallelRounds { workers: 0 } = self.cost {
            return Err(ConfigError::new("cost.workers", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::new("methods", "at least one method is needed"));
        }
        let mut labels = BTreeSet::new();
        for (i, m) in self.methods.iter().enumerate() {
            if m.label.is_empty() || m.label.contains(['/', ',', '"', '\n']) {
                return Err(ConfigError::new(
                    format!("methods[{i}].label"),
                    "labels must be non-empty without '/', ',', quotes or newlines",
                ));
            }
            if !labels.insert(m.label.as_str()) {
                return Err(ConfigError::new(
                    format!("methods[{i}].label"),
                    format!("duplicate label `{}`", m.label),
                ));
            }
            self.check_sampler(i, &m.sampler)?;
            if let Some(est) = &m.estimators {
                if est.is_empty() {
                    return Err(ConfigError::new(format!("methods[{i}].estimators"), "list is empty"));
                }
                let mut seen = BTreeSet::new();
                for (j, e) in est.iter().enumerate() {
                    if !seen.insert(*e) {
                        return Err(ConfigError::new(
                            format!("methods[{i}].estimators[{j}]"),
                            "duplicate estimator",
                        ));
                    }
                    if !estimator_applies(m.sampler.kind, *e) {
                        return Err(ConfigError::new(
                            format!("methods[{i}].estimators[{j}]"),
                            format!("`{}` is not available for {:?} samplers", e.name(), m.sampler.kind),
                        ));
                    }
                }
            }
        }
        crate::setup::selected_estimands(self)?;
        let refs = self.methods.iter().filter(|m| m.reference).count();
        if refs != 1 {
            return Err(ConfigError::new(
                "methods",
                format!("exactly one method must set `reference: true` (found {refs})"),
            ));
        }
        if let Some(init) = &self.init {
            match (init, kind) {
                (InitConfig::Named(InitKind::Truth), ExperimentKind::MmppData | ExperimentKind::Oracle) => {
                    return Err(ConfigError::new(
                        "init",
                        format!("`truth` is not available for {} experiments", kind.name()),
                    ));
                }
                (InitConfig::Named(InitKind::Origin), ExperimentKind::Oracle) => {
                    return Err(ConfigError::new(
                        "init",
                        "`origin` is not in the oracle support; use prior-draw or a vector",
                    ));
                }
                (InitConfig::Vector(v), _) if v.iter().any(|x| !x.is_finite()) => {
                    return Err(ConfigError::new("init", "initial vector must be finite"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_prior_means(&self, required: bool) -> Result<(), ConfigError> {
        let path = "model.prior_means";
        match &self.model.prior_means {
            None if required => Err(ConfigError::new(
                path,
                format!("required for {} experiments", self.experiment.name()),
            )),
            None => Ok(()),
            Some(p) if p.len() != 4 => Err(ConfigError::new(path, "expected [psi1, psi2, q12, q21]")),
            Some(p) => positive_finite(p, path),
        }
    }

    fn check_sampler(&self, i: usize, s: &SamplerConfig) -> Result<(), ConfigError> {
        let at = |field: &str| format!("methods[{i}].sampler.{field}");
        let kind = s.kind;
        let experiment = self.experiment;
        let is_rw = matches!(kind, SamplerKind::Rwm | SamplerKind::MiisRandomWalk);
        if kind.is_miis() {
            match s.n {
                None => return Err(ConfigError::new(at("n"), "required for MIIS samplers")),
                Some(0) => return Err(ConfigError::new(at("n"), "must be at least 1")),
                _ => {}
            }
        } else if s.n.is_some() {
            return Err(ConfigError::new(at("n"), "only MIIS samplers have particles"));
        }
        match (kind, s.variant) {
            (SamplerKind::MiisGibbs, Some(CisVariant::RandomWalk)) => {
                return Err(ConfigError::new(
                    at("variant"),
                    "within-Gibbs MIIS supports simple or antithetic",
                ));
            }
            (SamplerKind::MiisGibbs, _) | (_, None) => {}
            (_, Some(_)) => return Err(ConfigError::new(at("variant"), "only used by miis-gibbs")),
        }
        let needs_repeats = matches!(kind, SamplerKind::GibbsExact | SamplerKind::Mwg);
        match (needs_repeats, s.inner_repeats) {
            (true, Some(0)) => return Err(ConfigError::new(at("inner_repeats"), "must be at least 1")),
            (false, Some(_)) => {
                return Err(ConfigError::new(
                    at("inner_repeats"),
                    "only used by gibbs-exact and mwg",
                ))
            }
            _ => {}
        }
        if s.rw_scale.is_some() && !is_rw {
            return Err(ConfigError::new(
                at("rw_scale"),
                "only used by rwm and miis-random-walk",
            ));
        }
        if s.proposal.is_some() && (is_rw || kind == SamplerKind::GibbsExact) {
            return Err(ConfigError::new(
                at("proposal"),
                "this sampler takes no proposal family",
            ));
        }
        if let Some(b) = s.weight_bound {
            if !kind.is_miis() {
                return Err(ConfigError::new(at("weight_bound"), "only used by MIIS samplers"));
            }
            if !(b > 0.0) {
                return Err(ConfigError::new(at("weight_bound"), "must be positive"));
            }
        }
        // sampler / experiment compatibility
        let ok = match experiment {
            ExperimentKind::Bvn => !matches!(kind, SamplerKind::MiisSimple | SamplerKind::MiisAntithetic),
            ExperimentKind::MmppSim | ExperimentKind::MmppData => is_rw,
            ExperimentKind::Oracle => {
                !is_rw && kind != SamplerKind::GibbsExact && s.variant != Some(CisVariant::Antithetic)
            }
        };
        if !ok {
            return Err(ConfigError::new(
                at("kind"),
                format!("{kind:?} is not supported by {} experiments", experiment.name()),
            ));
        }
        match (&s.proposal, experiment) {
            (Some(ProposalConfig::Discrete { .. }), ExperimentKind::Bvn)
            | (Some(ProposalConfig::StudentT { .. } | ProposalConfig::Exact), ExperimentKind::Oracle) => {
                Err(ConfigError::new(
                    at("proposal"),
                    format!("family not available for {} experiments", experiment.name()),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn reference_method(&self) -> &MethodConfig {
        self.methods
            .iter()
            .find(|m| m.reference)
            .expect("validated: one reference")
    }
}

/// Whether an estimator can be computed from the traces of a sampler kind.
pub fn estimator_applies(kind: SamplerKind, e: EstimatorKind) -> bool {
    match e {
        EstimatorKind::Mc => true,
        EstimatorKind::Miis => kind.is_miis(),
        EstimatorKind::Rb => matches!(kind, SamplerKind::MiisGibbs | SamplerKind::GibbsExact),
        EstimatorKind::Cv => kind.is_miis() || kind == SamplerKind::GibbsExact,
    }
}
