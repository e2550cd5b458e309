use crate::error::{Error, Result};

/// Running per-arm reward statistics (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    counts: Vec<u64>,
    means: Vec<f64>,
    m2: Vec<f64>,
}

impl ArmStats {
    pub fn new(n_arms: usize) -> Self {
        ArmStats {
            counts: vec![0; n_arms],
            means: vec![0.0; n_arms],
            m2: vec![0.0; n_arms],
        }
    }

    /// Builds stats directly from `(count, mean, sum of squared deviations)`.
    pub fn from_summaries(summaries: &[(u64, f64, f64)]) -> Result<Self> {
        let mut s = ArmStats::new(summaries.len());
        for (i, &(n, m, ss)) in summaries.iter().enumerate() {
            if ss < 0.0 || (n == 0 && (m != 0.0 || ss != 0.0)) {
                return Err(Error::InvalidInput(format!("inconsistent summary for arm {i}")));
            }
            s.counts[i] = n;
            s.means[i] = m;
            s.m2[i] = ss;
        }
        Ok(s)
    }

    pub fn n_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        let n = self.counts[arm] as f64;
        let delta = reward - self.means[arm];
        self.means[arm] += delta / n;
        self.m2[arm] += delta * (reward - self.means[arm]);
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sample mean; `None` before the first pull.
    pub fn mean(&self, arm: usize) -> Option<f64> {
        (self.counts[arm] >= 1).then(|| self.means[arm])
    }

    /// Raw mean slots (0 for unpulled arms).
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Sample variance with the `n - 1` denominator; `None` below two pulls.
    pub fn variance(&self, arm: usize) -> Option<f64> {
        let n = self.counts[arm];
        (n >= 2).then(|| self.m2[arm] / (n - 1) as f64)
    }

    pub fn all_pulled(&self) -> Result<()> {
        match self.counts.iter().position(|&n| n == 0) {
            Some(i) => Err(Error::UnpulledArm(i)),
            None => Ok(()),
        }
    }

    /// Adds `c` to every observed reward.
    pub fn shifted(&self, c: f64) -> ArmStats {
        let mut s = self.clone();
        for (m, &n) in s.means.iter_mut().zip(&self.counts) {
            if n > 0 {
                *m += c;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_direct_formulas() {
        let xs = [0.3, 1.2, -0.7, 2.5, 0.0];
        let mut s = ArmStats::new(2);
        for &x in &xs {
            s.update(1, x);
        }
        let m = xs.iter().sum::<f64>() / 5.0;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!((s.mean(1).unwrap() - m).abs() < 1e-14);
        assert!((s.variance(1).unwrap() - v).abs() < 1e-14);
        assert_eq!(s.mean(0), None);
        assert_eq!(s.variance(0), None);
        assert!(matches!(s.all_pulled(), Err(Error::UnpulledArm(0))));
    }
}
