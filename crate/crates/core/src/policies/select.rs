use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::stats::ArmStats;
use crate::error::{precondition, Error, Result};

/// Index of the largest value, ties broken uniformly at random. The
/// random stream is touched only when there is a tie.
pub fn argmax_uniform_ties<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut n_best = 0usize;
    let mut first = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            n_best = 1;
            first = i;
        } else if v == best {
            n_best += 1;
        }
    }
    if n_best <= 1 {
        return first;
    }
    let pick = rng.random_range(0..n_best);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(pick)
        .map(|(i, _)| i)
        .unwrap_or(first)
}

/// Argmax of sample means.
pub fn greedy_select<R: Rng + ?Sized>(stats: &ArmStats, rng: &mut R) -> Result<usize> {
    stats.all_pulled()?;
    Ok(argmax_uniform_ties(stats.means(), rng))
}

/// With probability `epsilon` an arm uniformly at random, otherwise the
/// greedy arm: greedy mass `1 - eps + eps/k`, every other arm `eps/k`.
pub fn epsilon_greedy_select<R: Rng + ?Sized>(
    stats: &ArmStats,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(precondition(format!("epsilon {epsilon} outside [0, 1]")));
    }
    stats.all_pulled()?;
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(rng.random_range(0..stats.n_arms()))
    } else {
        Ok(argmax_uniform_ties(stats.means(), rng))
    }
}

fn upper_quantile(alpha: f64) -> f64 {
    if alpha >= 0.5 {
        0.0
    } else {
        Normal::standard().inverse_cdf(1.0 - alpha)
    }
}

/// Largest one-sided `(1 - alpha)` normal-approximation upper bound
/// `mean + z * s / sqrt(n)`. Arms with fewer than two pulls get an infinite
/// bound.
pub fn ucb_select<R: Rng + ?Sized>(stats: &ArmStats, alpha: f64, rng: &mut R) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(precondition(format!("alpha {alpha} outside (0, 0.5]")));
    }
    let z = upper_quantile(alpha);
    let bounds: Vec<f64> = (0..stats.n_arms())
        .map(|i| match stats.variance(i) {
            None => f64::INFINITY,
            Some(var) => {
                let n = stats.count(i) as f64;
                stats.means()[i] + z * (var / n).sqrt()
            }
        })
        .collect();
    Ok(argmax_uniform_ties(&bounds, rng))
}

/// A per-arm confidence distribution over the mean reward.
pub trait ArmBelief {
    /// `None` when the distribution has no mean.
    fn mean(&self) -> Option<f64>;

    fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

/// Shrunk Thompson sampling: draw `m_i` from each arm's belief and take
/// the argmax of `w_i + tau (m_i - w_i)` where `w_i` is the belief mean.
pub fn ts_select<B: ArmBelief, R: Rng + ?Sized>(
    beliefs: &[B],
    tau: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(precondition(format!("tau {tau} outside [0, 1]")));
    }
    let mut scores = Vec::with_capacity(beliefs.len());
    for (i, b) in beliefs.iter().enumerate() {
        let w = b
            .mean()
            .ok_or_else(|| Error::Improper(format!("belief for arm {i} has no mean")))?;
        let draw = b.sample_mean(rng);
        scores.push(if tau == 1.0 { draw } else { w + tau * (draw - w) });
    }
    Ok(argmax_uniform_ties(&scores, rng))
}

/// Greedy arm under fitted per-arm linear reward models.
pub fn contextual_greedy<R: Rng + ?Sized>(
    coefficients: &[Vec<f64>],
    context: &[f64],
    rng: &mut R,
) -> Result<usize> {
    if coefficients.iter().any(|b| b.len() != context.len()) {
        return Err(Error::InvalidInput(
            "coefficient and context lengths differ".into(),
        ));
    }
    let scores: Vec<f64> = coefficients
        .iter()
        .map(|b| b.iter().zip(context).map(|(x, y)| x * y).sum())
        .collect();
    Ok(argmax_uniform_ties(&scores, rng))
}

/// Estimator of the one-step expected reward of a binary action.
pub trait RewardModel {
    fn predict(&self, state: &[f64], action: u8) -> f64;

    fn is_trained(&self, action: u8) -> bool;
}

/// Action with the larger predicted reward; ties go to action 0.
pub fn mdp_greedy<M: RewardModel + ?Sized>(model: &M, state: &[f64]) -> Result<u8> {
    if !(model.is_trained(0) && model.is_trained(1)) {
        return Err(precondition("reward model has not seen both actions"));
    }
    let q0 = model.predict(state, 0);
    let q1 = model.predict(state, 1);
    Ok(if q1 > q0 { 1 } else { 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{reward_unchecked, GlucoseMdp, GlucoseState};
    use crate::rng::rng_for;
    use rand_distr::{Distribution, Normal as NormalDist};

    fn stats_with_means(means: &[f64]) -> ArmStats {
        let s: Vec<(u64, f64, f64)> = means.iter().map(|&m| (10, m, 1.0)).collect();
        ArmStats::from_summaries(&s).unwrap()
    }

    fn frequencies(f: impl Fn(&mut crate::rng::SimRng) -> usize, k: usize, n: usize) -> Vec<f64> {
        let mut rng = rng_for(11, &[]);
        let mut c = vec![0usize; k];
        for _ in 0..n {
            c[f(&mut rng)] += 1;
        }
        c.into_iter().map(|v| v as f64 / n as f64).collect()
    }

    #[test]
    fn epsilon_extremes() {
        let s = stats_with_means(&[0.7, 0.3]);
        let f = frequencies(|r| epsilon_greedy_select(&s, 0.0, r).unwrap(), 2, 10_000);
        assert_eq!(f[0], 1.0);
        let n = 100_000;
        let f = frequencies(|r| epsilon_greedy_select(&s, 1.0, r).unwrap(), 2, n);
        assert!((f[0] - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn epsilon_greedy_needs_all_arms_pulled() {
        let mut s = ArmStats::new(3);
        s.update(0, 1.0);
        let mut rng = rng_for(0, &[]);
        assert!(matches!(
            epsilon_greedy_select(&s, 0.1, &mut rng),
            Err(Error::UnpulledArm(1))
        ));
        s.update(1, 1.0);
        s.update(2, 1.0);
        assert!(epsilon_greedy_select(&s, 1.5, &mut rng).is_err());
    }

    #[test]
    fn ucb_forced_exploration_and_median_level() {
        let mut s = ArmStats::new(3);
        for _ in 0..5 {
            s.update(0, 1.0);
            s.update(2, 0.0);
        }
        s.update(1, 0.0);
        let mut rng = rng_for(0, &[]);
        assert_eq!(ucb_select(&s, 0.05, &mut rng).unwrap(), 1);
        let s = ArmStats::from_summaries(&[(5, 0.2, 4.0), (5, 0.6, 0.0), (5, 0.1, 9.0)]).unwrap();
        assert_eq!(ucb_select(&s, 0.5, &mut rng).unwrap(), 1);
        assert!(ucb_select(&s, 0.0, &mut rng).is_err());
        assert!(ucb_select(&s, 0.6, &mut rng).is_err());
    }

    #[test]
    fn ucb_bound_comparison() {
        // independent oracle: rand_distr-free quantile via bisection on erf
        let z = {
            let (mut lo, mut hi) = (0.0f64, 5.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let cdf = 0.5 * (1.0 + statrs::function::erf::erf(mid / 2f64.sqrt()));
                if cdf < 0.95 {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            lo
        };
        let bound_a = 0.4 + z * 0.2 / 5.0;
        let bound_b = 0.5 + z * 0.05 / 5.0;
        assert!((bound_a - 0.4658).abs() < 1e-4 && (bound_b - 0.5164).abs() < 1e-4);
        // sums of squared deviations for s = 0.2 and s = 0.05 with n = 25
        let s = ArmStats::from_summaries(&[(25, 0.4, 0.04 * 24.0), (25, 0.5, 0.0025 * 24.0)])
            .unwrap();
        let mut rng = rng_for(0, &[]);
        assert_eq!(ucb_select(&s, 0.05, &mut rng).unwrap(), 1);
    }

    #[derive(Clone)]
    struct Fixed {
        mean: f64,
        draw: f64,
    }

    impl ArmBelief for Fixed {
        fn mean(&self) -> Option<f64> {
            Some(self.mean)
        }
        fn sample_mean<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
            self.draw
        }
    }

    struct Gauss(f64, f64);

    impl ArmBelief for Gauss {
        fn mean(&self) -> Option<f64> {
            Some(self.0)
        }
        fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            NormalDist::new(self.0, self.1).unwrap().sample(rng)
        }
    }

    #[test]
    fn shrunk_thompson_scores() {
        let b = [
            Fixed {
                mean: 0.5,
                draw: 0.9,
            },
            Fixed {
                mean: 0.55,
                draw: 0.6,
            },
        ];
        let mut rng = rng_for(0, &[]);
        // scores 0.7 and 0.575
        assert_eq!(ts_select(&b, 0.5, &mut rng).unwrap(), 0);
        assert_eq!(ts_select(&b, 0.0, &mut rng).unwrap(), 1);
        assert_eq!(ts_select(&b, 1.0, &mut rng).unwrap(), 0);
        assert!(ts_select(&b, 1.5, &mut rng).is_err());
    }

    #[test]
    fn thompson_with_equal_beliefs_is_uniform() {
        let b = [Gauss(0.3, 1.0), Gauss(0.3, 1.0), Gauss(0.3, 1.0)];
        let n = 60_000;
        let f = frequencies(|r| ts_select(&b, 1.0, r).unwrap(), 3, n);
        let se = (2.0 / 9.0 / n as f64).sqrt();
        for p in f {
            assert!((p - 1.0 / 3.0).abs() < 4.0 * se);
        }
    }

    #[test]
    fn improper_belief_rejected() {
        struct NoMean;
        impl ArmBelief for NoMean {
            fn mean(&self) -> Option<f64> {
                None
            }
            fn sample_mean<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
                0.0
            }
        }
        let mut rng = rng_for(0, &[]);
        assert!(matches!(ts_select(&[NoMean, NoMean], 0.5, &mut rng), Err(Error::Improper(_))));
    }

    #[test]
    fn contextual_greedy_examples() {
        let mut rng = rng_for(0, &[]);
        let fits = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(contextual_greedy(&fits, &[1.0, 2.0, -1.0], &mut rng).unwrap(), 0);
        let truth = vec![vec![0.4, 0.2, -0.2], vec![0.2, 0.5, 0.2]];
        assert_eq!(contextual_greedy(&truth, &[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        let same = vec![vec![0.1, 0.2, 0.3], vec![0.1, 0.2, 0.3]];
        let n = 20_000;
        let f = frequencies(|r| contextual_greedy(&same, &[1.0, 0.5, 0.5], r).unwrap(), 2, n);
        assert!((f[0] - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    struct Constant(f64, f64);

    impl RewardModel for Constant {
        fn predict(&self, _state: &[f64], action: u8) -> f64 {
            if action == 0 {
                self.0
            } else {
                self.1
            }
        }
        fn is_trained(&self, _action: u8) -> bool {
            true
        }
    }

    struct ExactOneStep(GlucoseMdp);

    impl RewardModel for ExactOneStep {
        fn predict(&self, state: &[f64], action: u8) -> f64 {
            let s = GlucoseState {
                glucose: [state[0], state[3]],
                diet: [state[1], state[4]],
                exercise: [state[2], state[5]],
                prev_action: state[6] as u8,
            };
            reward_unchecked(self.0.glucose_mean(&s, action))
        }
        fn is_trained(&self, _action: u8) -> bool {
            true
        }
    }

    #[test]
    fn mdp_greedy_examples() {
        assert_eq!(mdp_greedy(&Constant(1.0, 0.5), &[]).unwrap(), 0);
        assert_eq!(mdp_greedy(&Constant(0.5, 0.5), &[]).unwrap(), 0);
        assert_eq!(mdp_greedy(&Constant(0.5, 0.6), &[]).unwrap(), 1);

        // Gl lags at 180: untreated mean 10 + 162 = 172, treated 162.
        let state = [180.0, 0.0, 0.0, 180.0, 0.0, 0.0, 0.0];
        let r0 = reward_unchecked(172.0);
        let r1 = reward_unchecked(162.0);
        let expected = if r1 > r0 { 1 } else { 0 };
        assert_eq!(expected, 1);
        let model = ExactOneStep(GlucoseMdp::default());
        assert_eq!(mdp_greedy(&model, &state).unwrap(), expected);
    }

    #[test]
    fn untrained_reward_model_rejected() {
        struct Half;
        impl RewardModel for Half {
            fn predict(&self, _s: &[f64], _a: u8) -> f64 {
                0.0
            }
            fn is_trained(&self, action: u8) -> bool {
                action == 0
            }
        }
        assert!(mdp_greedy(&Half, &[]).is_err());
    }
}
