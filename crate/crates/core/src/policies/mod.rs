//! Decision rules driven by one scalar exploration parameter.

mod formula;
mod select;
mod stats;

pub use formula::Formula;
pub use select::{
    argmax_uniform_ties, contextual_greedy, epsilon_greedy_select, greedy_select, mdp_greedy,
    ts_select, ucb_select, ArmBelief, RewardModel,
};
pub use stats::ArmStats;

use serde::{Deserialize, Serialize};

/// Smallest UCB level used; keeps quantiles finite.
pub const ALPHA_FLOOR: f64 = 1e-4;
/// Largest UCB level (`z = 0`, pure greedy).
pub const ALPHA_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    EpsilonGreedy,
    Ucb,
    #[serde(alias = "ts")]
    Thompson,
    Gittins,
}

impl PolicyKind {
    /// Maps a schedule level onto the rule's own parameter range.
    pub fn parameter_from_level(self, eta: f64) -> f64 {
        match self {
            PolicyKind::Ucb => eta.max(ALPHA_FLOOR).min(ALPHA_MAX),
            _ => eta.clamp(0.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::EpsilonGreedy => "epsilon-greedy",
            PolicyKind::Ucb => "ucb",
            PolicyKind::Thompson => "thompson",
            PolicyKind::Gittins => "gittins",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ucb_level_is_floored_and_capped() {
        assert_eq!(PolicyKind::Ucb.parameter_from_level(0.0), ALPHA_FLOOR);
        assert_eq!(PolicyKind::Ucb.parameter_from_level(0.9), 0.5);
        assert_eq!(PolicyKind::Ucb.parameter_from_level(0.05), 0.05);
        assert_eq!(PolicyKind::EpsilonGreedy.parameter_from_level(1.2), 1.0);
    }
}
