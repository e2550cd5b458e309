//! Built-in experiment grids.

use std::path::PathBuf;

use crate::bayesopt::OptimizerConfig;
use crate::error::{Error, Result};
use crate::models::ForestConfig;
use crate::policies::PolicyKind;
use crate::tuner::{Estimator, TuningConfig};

use super::config::{EnvironmentSpec, ExperimentConfig, ExplorationSpec, MdpSettings, VariantSpec};

const PRESET_SEED: u64 = 20190;

fn fixed(name: &str, policy: PolicyKind, v: f64) -> VariantSpec {
    VariantSpec::new(name, policy, ExplorationSpec::Fixed(v))
}

fn formula(name: &str, policy: PolicyKind, f: &str) -> VariantSpec {
    VariantSpec::new(name, policy, ExplorationSpec::Formula(f.to_string()))
}

fn tuned(name: &str, policy: PolicyKind) -> VariantSpec {
    VariantSpec::new(name, policy, ExplorationSpec::Tuned)
}

fn mab_variants(gittins: bool) -> Vec<VariantSpec> {
    use PolicyKind::*;
    let mut v = vec![
        tuned("tuned-eps-greedy", EpsilonGreedy),
        fixed("eps-0.05", EpsilonGreedy, 0.05),
        fixed("eps-0.1", EpsilonGreedy, 0.1),
        formula("eps-0.5/t", EpsilonGreedy, "0.5/t"),
        tuned("tuned-ts", Thompson),
        fixed("ts", Thompson, 1.0),
        formula("ts-1/t", Thompson, "1/t"),
        tuned("tuned-ucb", Ucb),
        fixed("ucb-0.05", Ucb, 0.05),
        formula("ucb-0.5-0.45/t", Ucb, "0.5-0.45/t"),
    ];
    if gittins {
        v.push(VariantSpec::new("gittins", Gittins, ExplorationSpec::None));
    }
    v
}

fn base(name: &str, horizon: usize, replicates: usize, environment: EnvironmentSpec) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        horizon,
        replicates,
        seed: PRESET_SEED,
        out_dir: PathBuf::from("results").join(name),
        environment,
        tuning: TuningConfig::default(),
        mdp: MdpSettings::default(),
        variants: Vec::new(),
    }
}

/// Reduced tuning effort for the glucose grids, where each rollout refits
/// a reward forest at every step.
pub fn glucose_tuning() -> TuningConfig {
    TuningConfig {
        n_model_draws: 8,
        n_rollouts_per_draw: 1,
        retune_interval: 5,
        optimizer: OptimizerConfig {
            budget: 15,
            ..OptimizerConfig::default()
        },
        rollout_forest: ForestConfig {
            n_trees: 5,
            mtry: Some(3),
            max_depth: 8,
            ..ForestConfig::default()
        },
        ..TuningConfig::default()
    }
}

fn table1(arms: usize) -> ExperimentConfig {
    let mut c = base(
        &format!("table1-{arms}arm"),
        50,
        192,
        EnvironmentSpec::Bernoulli {
            arms: Some(arms),
            probabilities: None,
        },
    );
    c.variants = mab_variants(true);
    c
}

fn table2(arms: usize, sigma: f64) -> ExperimentConfig {
    let replicates = if sigma < 1.0 { 192 } else { 384 };
    let mut c = base(
        &format!("table2-{arms}arm-sigma{sigma}"),
        50,
        replicates,
        EnvironmentSpec::Gaussian {
            arms: Some(arms),
            means: None,
            sigma: Some(sigma),
        },
    );
    c.variants = mab_variants(false);
    c
}

fn table3() -> ExperimentConfig {
    let mut c = base(
        "table3",
        50,
        96,
        EnvironmentSpec::Contextual {
            beta: None,
            context_mean: None,
            context_cov: None,
            noise_sd: None,
        },
    );
    c.variants = eps_baselines();
    c.variants.insert(0, tuned("tuned-eps-greedy", PolicyKind::EpsilonGreedy));
    c
}

fn eps_baselines() -> Vec<VariantSpec> {
    use PolicyKind::EpsilonGreedy;
    vec![
        fixed("eps-0.05", EpsilonGreedy, 0.05),
        formula("eps-1/t", EpsilonGreedy, "1/t"),
        formula("eps-0.5/t", EpsilonGreedy, "0.5/t"),
        formula("eps-0.8^t", EpsilonGreedy, "0.8^t"),
    ]
}

fn table4(horizon: usize) -> ExperimentConfig {
    let replicates = if horizon <= 25 { 96 } else { 192 };
    let mut c = base(
        &format!("table4-t{horizon}"),
        horizon,
        replicates,
        EnvironmentSpec::Glucose {
            beta: None,
            glucose_noise_sd: None,
            covariate_sd: None,
            covariate_prob: None,
            n_patients: None,
        },
    );
    c.tuning = glucose_tuning();
    let mut variants = Vec::new();
    for est in [Estimator::Ar2Linear, Estimator::Ar1Linear, Estimator::Ar2Np] {
        let mut v = tuned(&format!("tuned-{}", est.as_str()), PolicyKind::EpsilonGreedy);
        v.estimator = Some(est);
        variants.push(v);
    }
    variants.extend(eps_baselines());
    c.variants = variants;
    c
}

/// Names of every built-in config, in listing order.
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = [2, 5, 10].iter().map(|k| format!("table1-{k}arm")).collect();
    for k in [2, 5, 10] {
        for s in ["1", "0.1"] {
            names.push(format!("table2-{k}arm-sigma{s}"));
        }
    }
    names.push("table3".into());
    names.push("table4-t25".into());
    names.push("table4-t50".into());
    names
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let unknown = || Error::Config(format!("unknown preset {name:?}; see list-presets"));
    if let Some(rest) = name.strip_prefix("table1-") {
        let arms = rest.strip_suffix("arm").and_then(|k| k.parse().ok()).ok_or_else(unknown)?;
        if [2, 5, 10].contains(&arms) {
            return Ok(table1(arms));
        }
    } else if let Some(rest) = name.strip_prefix("table2-") {
        let (arms, sigma) = rest.split_once("arm-sigma").ok_or_else(unknown)?;
        let arms: usize = arms.parse().map_err(|_| unknown())?;
        if [2, 5, 10].contains(&arms) && (sigma == "1" || sigma == "0.1") {
            return Ok(table2(arms, sigma.parse().map_err(|_| unknown())?));
        }
    } else if name == "table3" {
        return Ok(table3());
    } else if name == "table4-t25" {
        return Ok(table4(25));
    } else if name == "table4-t50" {
        return Ok(table4(50));
    }
    Err(unknown())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_builds_and_validates() {
        for name in preset_names() {
            let cfg = preset(&name).unwrap();
            assert_eq!(cfg.name, name);
            cfg.validate().unwrap();
            let text = cfg.resolved().unwrap().to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg.resolved().unwrap());
        }
    }

    #[test]
    fn replicate_counts_follow_the_table_captions() {
        assert_eq!(preset("table1-5arm").unwrap().replicates, 192);
        assert_eq!(preset("table2-2arm-sigma0.1").unwrap().replicates, 192);
        assert_eq!(preset("table2-2arm-sigma1").unwrap().replicates, 384);
        assert_eq!(preset("table3").unwrap().replicates, 96);
        assert_eq!(preset("table4-t25").unwrap().replicates, 96);
        assert_eq!(preset("table4-t50").unwrap().replicates, 192);
    }

    #[test]
    fn grids_have_the_expected_rows() {
        assert_eq!(preset("table1-2arm").unwrap().variants.len(), 11);
        assert_eq!(preset("table2-10arm-sigma1").unwrap().variants.len(), 10);
        assert_eq!(preset("table3").unwrap().variants.len(), 5);
        assert_eq!(preset("table4-t50").unwrap().variants.len(), 7);
    }

    #[test]
    fn unknown_names_are_rejected() {
        for bad in ["table1-3arm", "table2-2arm-sigma2", "table5", "table1-arm", ""] {
            assert!(preset(bad).is_err(), "{bad}");
        }
    }
}
