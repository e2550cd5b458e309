//! Replicated episode execution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::history::{EpisodeRecord, Objective};
use crate::rng::derive_seed;
use crate::tuner::{run_contextual_episode, run_glucose_episode, run_mab_episode};

use super::config::{Environment, ExperimentConfig, VariantSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeFailure {
    pub variant: String,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub name: String,
    /// Completed episodes in replicate order.
    pub episodes: Vec<EpisodeRecord>,
    pub failures: Vec<EpisodeFailure>,
}

impl VariantResult {
    /// Final cumulative regret or reward of each completed episode.
    pub fn finals(&self) -> Vec<f64> {
        self.episodes.iter().map(EpisodeRecord::final_value).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// The resolved config that produced these results.
    pub config: ExperimentConfig,
    pub objective: Objective,
    pub variants: Vec<VariantResult>,
}

impl ExperimentOutput {
    pub fn n_failures(&self) -> usize {
        self.variants.iter().map(|v| v.failures.len()).sum()
    }
}

/// Seed of replicate `r`. Variants share it, so they face the same noise.
pub fn episode_seed(base: u64, replicate: usize) -> u64 {
    derive_seed(base, &[replicate as u64])
}

pub fn run_episode(
    cfg: &ExperimentConfig,
    env: &Environment,
    variant: &VariantSpec,
    replicate: usize,
) -> Result<EpisodeRecord> {
    let spec = variant.policy_spec()?;
    let tuning = cfg.variant_tuning(variant);
    let seed = episode_seed(cfg.seed, replicate);
    let mut rec = match env {
        Environment::Mab(m) => run_mab_episode(m, &spec, &tuning, cfg.horizon, seed)?,
        Environment::Contextual(c) => run_contextual_episode(c, &spec, &tuning, cfg.horizon, seed)?,
        Environment::Glucose(g) => {
            let opts = cfg.glucose_options(variant);
            run_glucose_episode(g, &spec, &opts, &tuning, cfg.horizon, seed)?
        }
    };
    rec.variant = variant.name.clone();
    rec.replicate = replicate;
    Ok(rec)
}

fn build_pool(workers: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    match workers {
        None | Some(0) => Ok(None),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}"))),
    }
}

/// Runs every variant x replicate. Results are gathered in (variant,
/// replicate) order whatever the worker count; `None` or `Some(0)` uses
/// the global pool.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cfg = cfg.resolved()?;
    let env = cfg.environment.build()?;
    let objective = match env {
        Environment::Glucose(_) => Objective::Reward,
        _ => Objective::Regret,
    };
    let jobs: Vec<(usize, usize)> = (0..cfg.variants.len())
        .flat_map(|v| (0..cfg.replicates).map(move |r| (v, r)))
        .collect();
    let work = || -> Vec<Result<EpisodeRecord>> {
        jobs.par_iter()
            .map(|&(v, r)| run_episode(&cfg, &env, &cfg.variants[v], r))
            .collect()
    };
    let outcomes = match build_pool(workers)? {
        Some(pool) => pool.install(work),
        None => work(),
    };

    let mut variants: Vec<VariantResult> = cfg
        .variants
        .iter()
        .map(|v| VariantResult {
            name: v.name.clone(),
            episodes: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (&(v, r), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(rec) if rec.final_value().is_finite() => variants[v].episodes.push(rec),
            Ok(_) => variants[v].failures.push(EpisodeFailure {
                variant: cfg.variants[v].name.clone(),
                replicate: r,
                message: "non-finite cumulative value".into(),
            }),
            Err(e) => variants[v].failures.push(EpisodeFailure {
                variant: cfg.variants[v].name.clone(),
                replicate: r,
                message: e.to_string(),
            }),
        }
    }
    Ok(ExperimentOutput {
        config: cfg,
        objective,
        variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{EnvironmentSpec, ExplorationSpec, MdpSettings};
    use crate::policies::PolicyKind;
    use crate::tuner::TuningConfig;
    use std::path::PathBuf;

    fn config(p: Vec<f64>, horizon: usize, replicates: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            horizon,
            replicates,
            seed: 9,
            out_dir: PathBuf::from("unused"),
            environment: EnvironmentSpec::Bernoulli {
                arms: None,
                probabilities: Some(p),
            },
            tuning: TuningConfig::default(),
            mdp: MdpSettings::default(),
            variants: vec![
                VariantSpec::new("greedy", PolicyKind::EpsilonGreedy, ExplorationSpec::Fixed(0.0)),
                VariantSpec::new("greedy-copy", PolicyKind::EpsilonGreedy, ExplorationSpec::Fixed(0.0)),
                VariantSpec::new("ts", PolicyKind::Thompson, ExplorationSpec::Fixed(1.0)),
            ],
        }
    }

    #[test]
    fn identical_variants_get_identical_replicates() {
        let out = run_experiment(&config(vec![0.4, 0.6], 12, 6), Some(1)).unwrap();
        assert_eq!(out.variants[0].finals(), out.variants[1].finals());
        assert_eq!(out.variants[0].episodes.len(), 6);
        assert_eq!(out.n_failures(), 0);
        assert!(out.variants[2].episodes.iter().enumerate().all(|(i, e)| e.replicate == i && e.variant == "ts"));
    }

    #[test]
    fn degenerate_bandit_gives_zero_regret_for_greedy() {
        let mut cfg = config(vec![1.0, 0.0], 10, 20);
        cfg.variants.truncate(1);
        let out = run_experiment(&cfg, None).unwrap();
        assert_eq!(out.variants[0].finals(), vec![0.0; 20]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = config(vec![0.3, 0.5], 15, 5);
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(3)).unwrap();
        for (x, y) in a.variants.iter().zip(&b.variants) {
            assert_eq!(x.episodes, y.episodes);
        }
    }

    #[test]
    fn invalid_config_fails_before_running() {
        let mut cfg = config(vec![0.3, 0.5], 15, 5);
        cfg.horizon = 0;
        assert!(matches!(run_experiment(&cfg, None), Err(Error::Config(_))));
    }
}
