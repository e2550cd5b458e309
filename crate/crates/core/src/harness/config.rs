//! Declarative experiment configuration (TOML).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environments::{
    BernoulliMab, GaussianMab, GlucoseMdp, LinearContextualBandit, MabModel, AR1_DIM, AR2_DIM,
};
use crate::error::{Error, Result};
use crate::gittins::MAX_HORIZON;
use crate::models::{ForestConfig, NpConfig};
use crate::policies::{Formula, PolicyKind};
use crate::schedule::Theta;
use crate::tuner::{Estimator, Exploration, GlucoseOptions, PolicySpec, TuningConfig, TuningVariant};

/// Environment section. Unset parameters take the built-in defaults when
/// the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Bernoulli {
        #[serde(skip_serializing_if = "Option::is_none")]
        arms: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        probabilities: Option<Vec<f64>>,
    },
    Gaussian {
        #[serde(skip_serializing_if = "Option::is_none")]
        arms: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        means: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    Contextual {
        #[serde(skip_serializing_if = "Option::is_none")]
        beta: Option<Vec<Vec<f64>>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        context_mean: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        context_cov: Option<Vec<Vec<f64>>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        noise_sd: Option<f64>,
    },
    Glucose {
        #[serde(skip_serializing_if = "Option::is_none")]
        beta: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        glucose_noise_sd: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        covariate_sd: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        covariate_prob: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        n_patients: Option<usize>,
    },
}

/// Source of a variant's exploration parameter, e.g. `"tuned"`,
/// `{ fixed = 0.1 }`, `{ formula = "0.5/t" }` or
/// `{ schedule = { theta0 = 0.5, theta1 = 20.0, theta2 = 0.3 } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationSpec {
    None,
    Tuned,
    Fixed(f64),
    Formula(String),
    Schedule(Theta),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    pub policy: PolicyKind,
    #[serde(default = "default_exploration")]
    pub exploration: ExplorationSpec,
    /// Glucose only: transition model used by the tuner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    /// Overrides `tuning.variant` for this variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningVariant>,
}

fn default_exploration() -> ExplorationSpec {
    ExplorationSpec::Tuned
}

impl VariantSpec {
    pub fn new(name: &str, policy: PolicyKind, exploration: ExplorationSpec) -> Self {
        VariantSpec {
            name: name.to_string(),
            policy,
            exploration,
            estimator: None,
            tuning: None,
        }
    }

    pub fn policy_spec(&self) -> Result<PolicySpec> {
        let exploration = match &self.exploration {
            ExplorationSpec::None => Exploration::None,
            ExplorationSpec::Tuned => Exploration::Tuned,
            ExplorationSpec::Fixed(v) => Exploration::Fixed(*v),
            ExplorationSpec::Formula(f) => Exploration::Formula(f.parse::<Formula>()?),
            ExplorationSpec::Schedule(th) => Exploration::Schedule(*th),
        };
        Ok(PolicySpec::new(self.policy, exploration))
    }
}

/// Learning settings of the glucose domain shared by every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpSettings {
    pub q_forest: ForestConfig,
    pub np: NpConfig,
}

impl Default for MdpSettings {
    fn default() -> Self {
        let g = GlucoseOptions::default();
        MdpSettings {
            q_forest: g.q_forest,
            np: g.np,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub horizon: usize,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub mdp: MdpSettings,
    pub variants: Vec<VariantSpec>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

/// The environment built from a resolved spec.
#[derive(Debug, Clone)]
pub enum Environment {
    Mab(MabModel),
    Contextual(LinearContextualBandit),
    Glucose(GlucoseMdp),
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl EnvironmentSpec {
    /// Fills every unset parameter with its default.
    pub fn resolve(&self) -> Result<EnvironmentSpec> {
        Ok(match self.clone() {
            EnvironmentSpec::Bernoulli { arms, probabilities } => {
                let p = match (arms, probabilities) {
                    (_, Some(p)) => p,
                    (Some(k), None) => BernoulliMab::default_probabilities(k),
                    (None, None) => return Err(Error::Config("bernoulli needs arms or probabilities".into())),
                };
                if arms.is_some_and(|k| k != p.len()) {
                    return Err(Error::Config("arms does not match the number of probabilities".into()));
                }
                EnvironmentSpec::Bernoulli {
                    arms: Some(p.len()),
                    probabilities: Some(p),
                }
            }
            EnvironmentSpec::Gaussian { arms, means, sigma } => {
                let mu = match (arms, means) {
                    (_, Some(m)) => m,
                    (Some(k), None) => GaussianMab::default_means(k),
                    (None, None) => return Err(Error::Config("gaussian needs arms or means".into())),
                };
                if arms.is_some_and(|k| k != mu.len()) {
                    return Err(Error::Config("arms does not match the number of means".into()));
                }
                EnvironmentSpec::Gaussian {
                    arms: Some(mu.len()),
                    means: Some(mu),
                    sigma: Some(sigma.unwrap_or(1.0)),
                }
            }
            EnvironmentSpec::Contextual { beta, context_mean, context_cov, noise_sd } => {
                let d = LinearContextualBandit::default_model();
                EnvironmentSpec::Contextual {
                    beta: Some(beta.unwrap_or_else(|| d.beta().to_vec())),
                    context_mean: Some(context_mean.unwrap_or_else(|| d.context_mean().to_vec())),
                    context_cov: Some(context_cov.unwrap_or_else(|| d.context_cov().to_vec())),
                    noise_sd: Some(noise_sd.unwrap_or(d.noise_sd())),
                }
            }
            EnvironmentSpec::Glucose { beta, glucose_noise_sd, covariate_sd, covariate_prob, n_patients } => {
                let d = GlucoseMdp::default();
                EnvironmentSpec::Glucose {
                    beta: Some(beta.unwrap_or_else(|| d.beta.to_vec())),
                    glucose_noise_sd: Some(glucose_noise_sd.unwrap_or(d.glucose_noise_sd)),
                    covariate_sd: Some(covariate_sd.unwrap_or(d.covariate_sd)),
                    covariate_prob: Some(covariate_prob.unwrap_or(d.covariate_prob)),
                    n_patients: Some(n_patients.unwrap_or(d.n_patients)),
                }
            }
        })
    }

    /// Builds the environment; unset parameters take their defaults.
    pub fn build(&self) -> Result<Environment> {
        let env = match self.resolve()? {
            EnvironmentSpec::Bernoulli { probabilities: Some(p), .. } => {
                Environment::Mab(MabModel::Bernoulli(BernoulliMab::new(p)?))
            }
            EnvironmentSpec::Gaussian { means: Some(m), sigma: Some(s), .. } => {
                if !all_finite(&m) {
                    return Err(Error::Config("gaussian means must be finite".into()));
                }
                Environment::Mab(MabModel::Gaussian(GaussianMab::new(m, s)?))
            }
            EnvironmentSpec::Contextual {
                beta: Some(b),
                context_mean: Some(m),
                context_cov: Some(c),
                noise_sd: Some(s),
            } => Environment::Contextual(LinearContextualBandit::new(b, m, c, s)?),
            EnvironmentSpec::Glucose {
                beta: Some(b),
                glucose_noise_sd: Some(gs),
                covariate_sd: Some(cs),
                covariate_prob: Some(cp),
                n_patients: Some(n),
            } => {
                let beta: [f64; AR2_DIM] = b.try_into().map_err(|b: Vec<f64>| {
                    Error::Config(format!("glucose beta needs {AR2_DIM} coefficients, got {}", b.len()))
                })?;
                let mdp = GlucoseMdp {
                    beta,
                    glucose_noise_sd: gs,
                    covariate_sd: cs,
                    covariate_prob: cp,
                    n_patients: n,
                };
                mdp.validate()?;
                Environment::Glucose(mdp)
            }
            _ => unreachable!("resolve fills every field"),
        };
        Ok(env)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EnvironmentSpec::Bernoulli { .. } => "bernoulli",
            EnvironmentSpec::Gaussian { .. } => "gaussian",
            EnvironmentSpec::Contextual { .. } => "contextual",
            EnvironmentSpec::Glucose { .. } => "glucose",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copy with every environment default and variant estimator filled in.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        out.environment = self.environment.resolve()?;
        if matches!(out.environment, EnvironmentSpec::Glucose { .. }) {
            for v in &mut out.variants {
                if v.exploration == ExplorationSpec::Tuned && v.estimator.is_none() {
                    v.estimator = Some(Estimator::default());
                }
            }
        }
        Ok(out)
    }

    /// Checks everything that can fail before any episode runs.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        let env = self.environment.build()?;
        let mut names = HashSet::new();
        for v in &self.variants {
            if v.name.is_empty() {
                return Err(Error::Config("variant names must be non-empty".into()));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::Config(format!("duplicate variant name {:?}", v.name)));
            }
            let spec = v
                .policy_spec()
                .map_err(|e| Error::Config(format!("variant {:?}: {e}", v.name)))?;
            spec.validate(self.horizon)
                .map_err(|e| Error::Config(format!("variant {:?}: {e}", v.name)))?;
            self.check_variant(v, &env)
                .map_err(|e| Error::Config(format!("variant {:?}: {e}", v.name)))?;
        }
        if self.variants.iter().any(|v| v.exploration == ExplorationSpec::Tuned) {
            self.tuning.validate()?;
        }
        Ok(())
    }

    fn check_variant(&self, v: &VariantSpec, env: &Environment) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        match env {
            Environment::Mab(m) => {
                if v.estimator.is_some() {
                    return bad("estimator applies to the glucose environment only");
                }
                if v.policy == PolicyKind::Gittins {
                    if !matches!(m, MabModel::Bernoulli(_)) {
                        return bad("gittins requires a bernoulli environment");
                    }
                    if self.horizon > MAX_HORIZON {
                        return Err(Error::Config(format!("gittins supports horizons up to {MAX_HORIZON}")));
                    }
                }
            }
            Environment::Contextual(_) | Environment::Glucose(_) => {
                if v.policy != PolicyKind::EpsilonGreedy {
                    return bad("only epsilon-greedy is available here");
                }
                if matches!(env, Environment::Contextual(_)) && v.estimator.is_some() {
                    return bad("estimator applies to the glucose environment only");
                }
                if let Environment::Glucose(g) = env {
                    let cols = match v.estimator.unwrap_or_default() {
                        Estimator::Ar1Linear => AR1_DIM,
                        _ => AR2_DIM,
                    };
                    if v.exploration == ExplorationSpec::Tuned && g.n_patients <= cols {
                        return Err(Error::Config(format!(
                            "tuning needs more than {cols} patients to fit the first transition model"
                        )));
                    }
                }
            }
        }
        if v.tuning.is_some() && v.exploration != ExplorationSpec::Tuned {
            return bad("tuning override given for an untuned variant");
        }
        Ok(())
    }

    pub fn variant_tuning(&self, v: &VariantSpec) -> TuningConfig {
        let mut cfg = self.tuning.clone();
        if let Some(t) = v.tuning {
            cfg.variant = t;
        }
        cfg
    }

    pub fn glucose_options(&self, v: &VariantSpec) -> GlucoseOptions {
        GlucoseOptions {
            estimator: v.estimator.unwrap_or_default(),
            q_forest: self.mdp.q_forest,
            np: self.mdp.np,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "mini"
horizon = 10
replicates = 3

[environment]
kind = "bernoulli"
probabilities = [0.3, 0.7]

[[variants]]
name = "eps"
policy = "epsilon-greedy"
exploration = { fixed = 0.1 }

[[variants]]
name = "tuned-ts"
policy = "thompson"

[[variants]]
name = "decay"
policy = "ucb"
exploration = { formula = "0.5-0.45/t" }

[[variants]]
name = "gittins"
policy = "gittins"
exploration = "none"
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.tuning, TuningConfig::default());
        assert_eq!(cfg.variants[1].exploration, ExplorationSpec::Tuned);
        assert_eq!(
            cfg.variants[2].policy_spec().unwrap().exploration,
            Exploration::Formula(Formula::Ramp { start: 0.5, scale: 0.45 })
        );
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap().resolved().unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(text.contains("arms = 2"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("replicates = 3", "replicates = 3\nreplicate = 4");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = MINIMAL.replace("kind = \"bernoulli\"", "kind = \"bernoulli\"\nsigma = 1.0");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn invalid_configs_fail_validation() {
        let base = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let mut c = base.clone();
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.variants[1].name = "eps".into();
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("duplicate")));
        let mut c = base.clone();
        c.variants[0].estimator = Some(Estimator::Ar2Np);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.environment = EnvironmentSpec::Gaussian { arms: Some(2), means: None, sigma: None };
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("gittins")));
        let mut c = base.clone();
        c.variants[0].exploration = ExplorationSpec::Formula("t/2".into());
        assert!(c.validate().is_err());
        let mut c = base;
        c.variants[0].exploration = ExplorationSpec::Fixed(1.5);
        assert!(c.validate().is_err());
    }

    #[test]
    fn glucose_tuned_variants_get_the_default_estimator() {
        let cfg = ExperimentConfig {
            name: "g".into(),
            horizon: 5,
            replicates: 1,
            seed: 1,
            out_dir: default_out_dir(),
            environment: EnvironmentSpec::Glucose {
                beta: None,
                glucose_noise_sd: None,
                covariate_sd: None,
                covariate_prob: None,
                n_patients: Some(4),
            },
            tuning: TuningConfig::default(),
            mdp: MdpSettings::default(),
            variants: vec![
                VariantSpec::new("t", PolicyKind::EpsilonGreedy, ExplorationSpec::Tuned),
                VariantSpec::new("u", PolicyKind::Ucb, ExplorationSpec::Fixed(0.1)),
            ],
        };
        assert!(cfg.validate().is_err());
        let mut ok = cfg.clone();
        ok.variants.pop();
        assert!(matches!(ok.validate(), Err(Error::Config(m)) if m.contains("patients")));
        ok.environment = EnvironmentSpec::Glucose {
            beta: None,
            glucose_noise_sd: None,
            covariate_sd: None,
            covariate_prob: None,
            n_patients: Some(10),
        };
        ok.validate().unwrap();
        let r = ok.resolved().unwrap();
        assert_eq!(r.variants[0].estimator, Some(Estimator::Ar2Linear));
        match r.environment {
            EnvironmentSpec::Glucose { beta: Some(b), n_patients: Some(10), .. } => assert_eq!(b.len(), 9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
