//! Experiment configs, replicated runs and CSV outputs.

mod config;
mod output;
mod presets;
mod run;

pub use config::{
    Environment, EnvironmentSpec, ExperimentConfig, ExplorationSpec, MdpSettings, VariantSpec,
};
pub use output::{
    fmt_f64, metadata_toml, pseudo_regret_rows, summarize, summarize_episode_log, summary_rows,
    write_episodes_csv, write_outputs, write_summary_csv, Summary, SummaryRow, EPISODES_FILE,
    EPISODE_HEADER, METADATA_FILE, PSEUDO_REGRET_FILE, SUMMARY_FILE, SUMMARY_HEADER,
};
pub use presets::{glucose_tuning, preset, preset_names};
pub use run::{episode_seed, run_episode, run_experiment, EpisodeFailure, ExperimentOutput, VariantResult};
