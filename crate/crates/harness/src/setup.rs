//! Turns a validated config into targets, functionals, estimands and samplers.

use std::collections::BTreeMap;
use std::sync::Arc;

use miis_core::cis::{CisConfig, CisVariant};
use miis_core::estimators::{ControlVariate, ControlVariateSet, CvSource};
use miis_core::models::bvn::{bvn_functionals, bvn_truth, BvnConditionalProposal, ConditionalFamily};
use miis_core::models::mmpp::{forward_transform, mmpp_functionals, read_events, simulate_mmpp};
use miis_core::models::{BivariateGaussian, DiscreteOracleTarget, MmppParams, MmppPosterior};
use miis_core::proposals::{DiscreteProposal, GaussianRandomWalk};
use miis_core::samplers::{SamplerKind, SamplerSpec};
use miis_core::{Functional, NoAuxiliary, ProposalFamily, Stream, TargetDensity};

use crate::config::{
    estimator_applies, ConfigError, EstimatorKind, ExperimentConfig, ExperimentKind, MethodConfig, ProposalConfig,
};
use crate::seeds::derive_seed;
use crate::HarnessError;

/// How an estimand is assembled from the estimates of base functionals.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Mean(&'static str),
    /// `E[sq] - E[base]^2`
    Variance {
        sq: &'static str,
        base: &'static str,
    },
    /// `E[prod] - E[a] E[b]`
    Covariance {
        prod: &'static str,
        a: &'static str,
        b: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimand {
    pub name: &'static str,
    pub formula: Formula,
}

impl Estimand {
    const fn new(name: &'static str, formula: Formula) -> Self {
        Estimand { name, formula }
    }

    pub fn bases(&self) -> Vec<&'static str> {
        match self.formula {
            Formula::Mean(f) => vec![f],
            Formula::Variance { sq, base } => vec![sq, base],
            Formula::Covariance { prod, a, b } => vec![prod, a, b],
        }
    }

    /// Combines base estimates; `None` if one of them is unavailable.
    pub fn combine(&self, get: impl Fn(&str) -> Option<f64>) -> Option<f64> {
        Some(match self.formula {
            Formula::Mean(f) => get(f)?,
            Formula::Variance { sq, base } => get(sq)? - get(base)?.powi(2),
            Formula::Covariance { prod, a, b } => get(prod)? - get(a)? * get(b)?,
        })
    }
}

/// Every estimand an experiment can tabulate, in default order.
pub fn estimand_catalogue(kind: ExperimentKind) -> Vec<Estimand> {
    use Formula::*;
    match kind {
        ExperimentKind::Bvn => vec![
            Estimand::new("mean", Mean("x1")),
            Estimand::new("variance", Variance { sq: "x1sq", base: "x1" }),
            Estimand::new(
                "covariance",
                Covariance {
                    prod: "x1x2",
                    a: "x1",
                    b: "x2",
                },
            ),
            Estimand::new("tail", Mean("tail")),
        ],
        ExperimentKind::Oracle => vec![
            Estimand::new("mean_x1", Mean("x1")),
            Estimand::new("mean_x2", Mean("x2")),
            Estimand::new("variance_x1", Variance { sq: "x1sq", base: "x1" }),
            Estimand::new(
                "covariance",
                Covariance {
                    prod: "x1x2",
                    a: "x1",
                    b: "x2",
                },
            ),
        ],
        ExperimentKind::MmppSim | ExperimentKind::MmppData => vec![
            Estimand::new("psi1", Mean("psi1")),
            Estimand::new("psi2", Mean("psi2")),
            Estimand::new("q12", Mean("q12")),
            Estimand::new("q21", Mean("q21")),
            Estimand::new(
                "psi1_var",
                Variance {
                    sq: "psi1sq",
                    base: "psi1",
                },
            ),
            Estimand::new(
                "psi2_var",
                Variance {
                    sq: "psi2sq",
                    base: "psi2",
                },
            ),
            Estimand::new(
                "q12_var",
                Variance {
                    sq: "q12sq",
                    base: "q12",
                },
            ),
            Estimand::new(
                "q21_var",
                Variance {
                    sq: "q21sq",
                    base: "q21",
                },
            ),
        ],
    }
}

/// The estimands selected by the config.
pub fn selected_estimands(cfg: &ExperimentConfig) -> Result<Vec<Estimand>, ConfigError> {
    let catalogue = estimand_catalogue(cfg.experiment);
    let Some(names) = &cfg.functionals else {
        return Ok(catalogue);
    };
    if names.is_empty() {
        return Err(ConfigError::new("functionals", "list is empty"));
    }
    let mut out: Vec<Estimand> = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let e = catalogue.iter().find(|e| e.name == name).ok_or_else(|| {
            let known: Vec<&str> = catalogue.iter().map(|e| e.name).collect();
            ConfigError::new(
                format!("functionals[{i}]"),
                format!(
                    "unknown estimand `{name}` for {} experiments; known: {}",
                    cfg.experiment.name(),
                    known.join(", ")
                ),
            )
        })?;
        if out.iter().any(|o| o.name == e.name) {
            return Err(ConfigError::new(
                format!("functionals[{i}]"),
                format!("`{name}` listed twice"),
            ));
        }
        out.push(e.clone());
    }
    Ok(out)
}

pub fn base_functionals(kind: ExperimentKind) -> Vec<Functional> {
    match kind {
        ExperimentKind::Bvn => bvn_functionals(),
        ExperimentKind::Oracle => vec![
            Functional::coordinate("x1", 0),
            Functional::coordinate("x2", 1),
            Functional::new("x1sq", |x| x[0] * x[0]),
            Functional::new("x2sq", |x| x[1] * x[1]),
            Functional::new("x1x2", |x| x[0] * x[1]),
        ],
        ExperimentKind::MmppSim | ExperimentKind::MmppData => mmpp_functionals(2),
    }
}

fn cv(g: &str, source: CvSource) -> ControlVariate {
    ControlVariate { g: g.into(), source }
}

/// Default control variates per base functional. Blockwise samplers pair each
/// functional of `x1` with block 0 and its `x2` counterpart with block 1 (`x1x2` uses
/// both blocks); full-target samplers use the full estimates of the same functionals.
pub fn default_cv_sets(kind: ExperimentKind, blockwise: bool) -> BTreeMap<String, Vec<ControlVariate>> {
    let (b0, b1) = if blockwise {
        (CvSource::Block(0), CvSource::Block(1))
    } else {
        (CvSource::Full, CvSource::Full)
    };
    let mut sets = BTreeMap::new();
    match kind {
        ExperimentKind::Bvn | ExperimentKind::Oracle => {
            let mean = vec![cv("x1", b0), cv("x2", b1)];
            let var = vec![cv("x1sq", b0), cv("x2sq", b1)];
            sets.insert("x1".to_string(), mean.clone());
            sets.insert("x2".to_string(), mean.clone());
            sets.insert("x1sq".to_string(), var.clone());
            sets.insert("x2sq".to_string(), var.clone());
            // the cross moment gets its own pair plus the mean and variance variates
            let mut cross = vec![cv("x1x2", b0), cv("x1x2", b1)];
            cross.extend(mean.iter().chain(&var).cloned());
            sets.insert("x1x2".to_string(), cross);
            if kind == ExperimentKind::Bvn {
                let mut tail = vec![cv("tail", b0)];
                tail.extend(mean);
                sets.insert("tail".to_string(), tail);
            }
        }
        ExperimentKind::MmppSim | ExperimentKind::MmppData => {
            let names = ["psi1", "psi2", "q12", "q21"];
            let means: Vec<ControlVariate> = names.iter().map(|n| cv(n, CvSource::Full)).collect();
            let squares: Vec<ControlVariate> = names.iter().map(|n| cv(&format!("{n}sq"), CvSource::Full)).collect();
            for n in names {
                sets.insert(n.to_string(), means.clone());
                sets.insert(format!("{n}sq"), squares.clone());
            }
        }
    }
    if !blockwise {
        for set in sets.values_mut() {
            let mut seen: Vec<ControlVariate> = Vec::new();
            set.retain(|c| {
                let dup = seen.contains(c);
                seen.push(c.clone());
                !dup
            });
        }
    }
    sets
}

/// A method after defaults are resolved.
#[derive(Debug, Clone)]
pub struct ResolvedMethod {
    pub label: String,
    pub kind: SamplerKind,
    pub estimators: Vec<EstimatorKind>,
    pub cv_sets: BTreeMap<String, ControlVariateSet>,
}

pub fn resolve_method(
    cfg: &ExperimentConfig,
    index: usize,
    method: &MethodConfig,
    estimands: &[Estimand],
) -> Result<ResolvedMethod, ConfigError> {
    let kind = method.sampler.kind;
    let estimators = match &method.estimators {
        Some(e) => e.clone(),
        None => [
            EstimatorKind::Mc,
            EstimatorKind::Miis,
            EstimatorKind::Rb,
            EstimatorKind::Cv,
        ]
        .into_iter()
        .filter(|e| estimator_applies(kind, *e))
        .collect(),
    };
    let mut cv_sets = BTreeMap::new();
    if estimators.contains(&EstimatorKind::Cv) {
        let blockwise = matches!(kind, SamplerKind::MiisGibbs | SamplerKind::GibbsExact);
        let all = match &method.cv_sets {
            Some(s) => s.clone(),
            None => default_cv_sets(cfg.experiment, blockwise),
        };
        let known: Vec<String> = base_functionals(cfg.experiment)
            .iter()
            .map(|f| f.name().to_string())
            .collect();
        for (name, set) in &all {
            let path = format!("methods[{index}].cv_sets.{name}");
            if !known.contains(name) {
                return Err(ConfigError::new(
                    path,
                    format!("unknown base functional; known: {}", known.join(", ")),
                ));
            }
            if set.is_empty() {
                return Err(ConfigError::new(path, "control-variate set is empty"));
            }
            for (j, c) in set.iter().enumerate() {
                if !known.contains(&c.g) {
                    return Err(ConfigError::new(
                        format!("{path}[{j}].g"),
                        format!("unknown base functional `{}`", c.g),
                    ));
                }
                match c.source {
                    CvSource::Block(s) if !blockwise || s > 1 => {
                        return Err(ConfigError::new(
                            format!("{path}[{j}].source"),
                            format!("block {s} is not available for {kind:?} samplers"),
                        ));
                    }
                    CvSource::Full if kind == SamplerKind::GibbsExact => {
                        return Err(ConfigError::new(
                            format!("{path}[{j}].source"),
                            "gibbs-exact has blockwise estimates only",
                        ));
                    }
                    _ => {}
                }
            }
        }
        for e in estimands {
            for b in e.bases() {
                let set = all.get(b).ok_or_else(|| {
                    ConfigError::new(
                        format!("methods[{index}].cv_sets"),
                        format!("no control variates for `{b}`, needed by `{}`", e.name),
                    )
                })?;
                cv_sets.insert(b.to_string(), ControlVariateSet::new(set.clone()));
            }
        }
    }
    Ok(ResolvedMethod {
        label: method.label.clone(),
        kind,
        estimators,
        cv_sets,
    })
}

/// One target the methods are run on.
pub struct Dataset {
    pub index: usize,
    pub target: Arc<dyn TargetDensity>,
    /// True parameter in the sampler's coordinates, when known.
    pub truth_point: Option<Vec<f64>>,
    /// Analytic estimand values; `None` means pooled truth.
    pub analytic: Option<BTreeMap<String, f64>>,
    pub events: Option<usize>,
    /// Prior draws for MMPP initialization.
    pub posterior: Option<MmppPosterior>,
    pub oracle: Option<DiscreteOracleTarget>,
}

pub fn default_oracle_target() -> DiscreteOracleTarget {
    DiscreteOracleTarget::new(
        vec![vec![0.0, 1.0, 2.0], vec![-1.0, 0.0, 3.0]],
        vec![0.05, 0.10, 0.15, 0.20, 0.05, 0.05, 0.10, 0.25, 0.05],
    )
    .expect("valid default oracle")
}

fn core_config(path: &str) -> impl Fn(miis_core::Error) -> HarnessError + '_ {
    move |e| HarnessError::Config(ConfigError::new(path, e.to_string()))
}

pub fn build_datasets(cfg: &ExperimentConfig, estimands: &[Estimand]) -> Result<Vec<Dataset>, HarnessError> {
    let model = &cfg.model;
    match cfg.experiment {
        ExperimentKind::Bvn => {
            let rho = model.rho.expect("validated");
            let target = BivariateGaussian::new(rho).map_err(core_config("model.rho"))?;
            let analytic = estimands
                .iter()
                .map(|e| Ok((e.name.to_string(), bvn_truth(e.name, rho)?)))
                .collect::<miis_core::Result<BTreeMap<_, _>>>()?;
            Ok(vec![Dataset {
                index: 0,
                target: Arc::new(target),
                truth_point: Some(vec![0.0, 0.0]),
                analytic: Some(analytic),
                events: None,
                posterior: None,
                oracle: None,
            }])
        }
        ExperimentKind::Oracle => {
            let target = match (&model.atoms, &model.probs) {
                (Some(a), Some(p)) => DiscreteOracleTarget::new(a.clone(), p.clone()).map_err(core_config("model"))?,
                _ => default_oracle_target(),
            };
            let fs = base_functionals(ExperimentKind::Oracle);
            let base: BTreeMap<&str, f64> = fs
                .iter()
                .map(|f| (f.name(), target.expectation(|x| f.eval(x))))
                .collect();
            let analytic = estimands
                .iter()
                .map(|e| {
                    (
                        e.name.to_string(),
                        e.combine(|b| base.get(b).copied()).expect("known bases"),
                    )
                })
                .collect();
            Ok(vec![Dataset {
                index: 0,
                target: Arc::new(target.clone()),
                truth_point: None,
                analytic: Some(analytic),
                events: None,
                posterior: None,
                oracle: Some(target),
            }])
        }
        ExperimentKind::MmppSim => {
            let psi = model.psi.clone().expect("validated");
            let q = model.q.clone().expect("validated");
            let window = model.window.expect("validated");
            let params = MmppParams::new(psi.clone(), q.clone()).map_err(core_config("model"))?;
            let prior = model
                .prior_means
                .clone()
                .unwrap_or_else(|| psi.iter().chain(&q).copied().collect());
            let data_seed = model.data_seed.unwrap_or(cfg.base_seed);
            (0..model.datasets.unwrap_or(1))
                .map(|k| {
                    let mut rng = Stream::new(derive_seed(data_seed, "dataset", k as u64)).rng();
                    let events = simulate_mmpp(&params, window, &mut rng)?;
                    let n = events.len();
                    let post = MmppPosterior::new(2, events, window, prior.clone())?;
                    Ok(Dataset {
                        index: k,
                        target: Arc::new(post.clone()),
                        truth_point: Some(forward_transform(&params)),
                        analytic: None,
                        events: Some(n),
                        posterior: Some(post),
                        oracle: None,
                    })
                })
                .collect()
        }
        ExperimentKind::MmppData => {
            let path = model.events_file.as_ref().expect("validated");
            let data = read_events(path).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
            let window = match (model.window, data.window) {
                (Some(w), _) => w,
                (None, Some(w)) => w,
                (None, None) => {
                    return Err(HarnessError::Config(ConfigError::new(
                        "model.window",
                        "required when the events file has no window header",
                    )))
                }
            };
            let n = data.times.len();
            let prior = model.prior_means.clone().expect("validated");
            let post = MmppPosterior::new(2, data.times, window, prior).map_err(core_config("model"))?;
            Ok(vec![Dataset {
                index: 0,
                target: Arc::new(post.clone()),
                truth_point: None,
                analytic: None,
                events: Some(n),
                posterior: Some(post),
                oracle: None,
            }])
        }
    }
}

fn bvn_family(p: &Option<ProposalConfig>) -> ConditionalFamily {
    match p {
        Some(ProposalConfig::Exact) => ConditionalFamily::Exact,
        Some(ProposalConfig::StudentT { df }) => ConditionalFamily::StudentT { df: *df },
        // the default matches the published design
        _ => ConditionalFamily::StudentT { df: 5.0 },
    }
}

fn discrete_block_proposals(
    p: &Option<ProposalConfig>,
    target: &DiscreteOracleTarget,
    path: &str,
) -> Result<Vec<DiscreteProposal>, HarnessError> {
    let atoms = target.atoms();
    let probs: Vec<Vec<f64>> = match p {
        Some(ProposalConfig::Discrete { probs }) => probs.clone(),
        _ => atoms.iter().map(|a| vec![1.0 / a.len() as f64; a.len()]).collect(),
    };
    if probs.len() != atoms.len() {
        return Err(HarnessError::Config(ConfigError::new(
            path,
            format!("expected one probability list per block ({})", atoms.len()),
        )));
    }
    atoms
        .iter()
        .zip(probs)
        .map(|(a, p)| DiscreteProposal::scalar(a, p).map_err(core_config(path)))
        .collect()
}

fn discrete_joint_proposal(
    p: &Option<ProposalConfig>,
    target: &DiscreteOracleTarget,
    path: &str,
) -> Result<DiscreteProposal, HarnessError> {
    let points: Vec<Vec<f64>> = {
        let a = target.atoms();
        let mut out = Vec::new();
        for i in 0..a[0].len() {
            for j in 0..a[1].len() {
                out.push(target.point(&[i, j]));
            }
        }
        out
    };
    let probs = match p {
        Some(ProposalConfig::Discrete { probs }) if probs.len() == 1 => probs[0].clone(),
        Some(ProposalConfig::Discrete { .. }) => {
            return Err(HarnessError::Config(ConfigError::new(
                path,
                "full-target samplers take one joint probability list",
            )))
        }
        _ => vec![1.0 / points.len() as f64; points.len()],
    };
    DiscreteProposal::new(points, probs).map_err(core_config(path))
}

/// Builds the sampler of a method for one dataset. `rw_covariance` is the proposal
/// covariance for random-walk kinds (row-major).
pub fn build_sampler(
    cfg: &ExperimentConfig,
    index: usize,
    dataset: &Dataset,
    rw_covariance: Option<&[f64]>,
) -> Result<SamplerSpec, HarnessError> {
    let method = &cfg.methods[index];
    let s = &method.sampler;
    let path = format!("methods[{index}].sampler");
    let proposal_path = format!("{path}.proposal");
    let finish = |b: miis_core::cis::CisBuilder| {
        let b = b.allow_small_n(s.allow_small_n).parallel(s.parallel);
        let b = match s.weight_bound {
            Some(c) => b.weight_bound(c),
            None => b,
        };
        b.build().map_err(core_config(&path))
    };
    let rw_kernel = || -> Result<Arc<GaussianRandomWalk>, HarnessError> {
        let cov = rw_covariance.expect("random-walk covariance resolved");
        let d = dataset.target.dim();
        Ok(Arc::new(
            GaussianRandomWalk::new(d, cov.to_vec()).map_err(core_config(&format!("{path}.rw_scale")))?,
        ))
    };
    match cfg.experiment {
        ExperimentKind::Bvn => {
            let rho = cfg.model.rho.expect("validated");
            let family = bvn_family(&s.proposal);
            let block = |b: usize| BvnConditionalProposal::new(rho, b, family).map_err(core_config(&proposal_path));
            match s.kind {
                SamplerKind::MiisGibbs => {
                    let variant = s.variant.unwrap_or(CisVariant::Simple);
                    let cfgs = (0..2)
                        .map(|b| {
                            let prop: Arc<dyn ProposalFamily> = Arc::new(block(b)?);
                            finish(CisConfig::builder(
                                variant,
                                s.n.expect("validated"),
                                prop,
                                Arc::new(NoAuxiliary),
                            ))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(SamplerSpec::MiisGibbs(cfgs))
                }
                SamplerKind::Mwg => {
                    let proposals = (0..2)
                        .map(|b| Ok(Arc::new(block(b)?) as Arc<dyn ProposalFamily>))
                        .collect::<Result<Vec<_>, HarnessError>>()?;
                    Ok(SamplerSpec::Mwg {
                        proposals,
                        inner_repeats: s.inner_repeats.unwrap_or(1),
                    })
                }
                SamplerKind::GibbsExact => Ok(SamplerSpec::GibbsExact {
                    inner_repeats: s.inner_repeats.unwrap_or(1),
                }),
                SamplerKind::Rwm => Ok(SamplerSpec::Rwm(rw_kernel()?)),
                SamplerKind::MiisRandomWalk => Ok(SamplerSpec::Miis(finish(CisConfig::random_walk_builder(
                    s.n.expect("validated"),
                    rw_kernel()?,
                ))?)),
                other => unreachable!("rejected by validation: {other:?}"),
            }
        }
        ExperimentKind::Oracle => {
            let target = dataset.oracle.as_ref().expect("oracle dataset");
            match s.kind {
                SamplerKind::MiisGibbs => {
                    let cfgs = discrete_block_proposals(&s.proposal, target, &proposal_path)?
                        .into_iter()
                        .map(|p| {
                            finish(CisConfig::builder(
                                CisVariant::Simple,
                                s.n.expect("validated"),
                                Arc::new(p),
                                Arc::new(NoAuxiliary),
                            ))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(SamplerSpec::MiisGibbs(cfgs))
                }
                SamplerKind::MiisSimple => {
                    let p = discrete_joint_proposal(&s.proposal, target, &proposal_path)?;
                    Ok(SamplerSpec::Miis(finish(CisConfig::builder(
                        CisVariant::Simple,
                        s.n.expect("validated"),
                        Arc::new(p),
                        Arc::new(NoAuxiliary),
                    ))?))
                }
                SamplerKind::MiisAntithetic => Err(HarnessError::Config(ConfigError::new(
                    format!("{path}.kind"),
                    "discrete proposals have no continuous inverse cdf for antithetic pairs",
                ))),
                SamplerKind::Mwg => {
                    let proposals = discrete_block_proposals(&s.proposal, target, &proposal_path)?
                        .into_iter()
                        .map(|p| Arc::new(p) as Arc<dyn ProposalFamily>)
                        .collect();
                    Ok(SamplerSpec::Mwg {
                        proposals,
                        inner_repeats: s.inner_repeats.unwrap_or(1),
                    })
                }
                other => unreachable!("rejected by validation: {other:?}"),
            }
        }
        ExperimentKind::MmppSim | ExperimentKind::MmppData => match s.kind {
            SamplerKind::Rwm => Ok(SamplerSpec::Rwm(rw_kernel()?)),
            SamplerKind::MiisRandomWalk => Ok(SamplerSpec::Miis(finish(CisConfig::random_walk_builder(
                s.n.expect("validated"),
                rw_kernel()?,
            ))?)),
            other => unreachable!("rejected by validation: {other:?}"),
        },
    }
}
