//! Bagged variance-reduction regression trees.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::RewardModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Minimum number of (bootstrap) samples in a leaf.
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` tries all of them (plain bagging).
    pub mtry: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 50,
            min_leaf: 5,
            max_depth: 32,
            mtry: None,
            bootstrap: true,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }
}

struct Builder<'a, R: Rng + ?Sized> {
    x: &'a [f64],
    y: &'a [f64],
    p: usize,
    cfg: &'a ForestConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
    /// For each feature, the bag's sample indices sorted by that feature.
    /// A node owns the same range `lo..hi` in every feature's list.
    sorted: Vec<Vec<usize>>,
    scratch: Vec<usize>,
    goes_left: Vec<bool>,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn leaf(&mut self, value: f64) -> u32 {
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        });
        (self.nodes.len() - 1) as u32
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> u32 {
        let n = hi - lo;
        let sum: f64 = self.sorted[0][lo..hi].iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let min_leaf = self.cfg.min_leaf.max(1);
        if depth >= self.cfg.max_depth || n < 2 * min_leaf {
            return self.leaf(mean);
        }
        let parent_score = sum * sum / n as f64;
        let mut best: Option<(usize, f64, f64, usize)> = None;
        let n_try = self.cfg.mtry.unwrap_or(self.p).clamp(1, self.p);
        let features: Vec<usize> = if n_try == self.p {
            (0..self.p).collect()
        } else {
            sample_indices(self.rng, self.p, n_try).into_vec()
        };
        for f in features {
            let order = &self.sorted[f][lo..hi];
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += self.y[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let xa = self.x[order[k] * self.p + f];
                let xb = self.x[order[k + 1] * self.p + f];
                if xa >= xb {
                    continue;
                }
                let right = sum - left;
                let score = left * left / nl as f64 + right * right / nr as f64;
                if best.is_none_or(|(_, _, s, _)| score > s) {
                    best = Some((f, 0.5 * (xa + xb), score, nl));
                }
            }
        }
        let Some((feature, threshold, score, n_left)) = best else {
            return self.leaf(mean);
        };
        if score <= parent_score + 1e-12 * parent_score.abs().max(1e-300) {
            return self.leaf(mean);
        }
        for &i in &self.sorted[feature][lo..hi] {
            self.goes_left[i] = self.x[i * self.p + feature] <= threshold;
        }
        for f in 0..self.p {
            let list = &mut self.sorted[f][lo..hi];
            self.scratch.clear();
            let mut w = 0;
            for k in 0..list.len() {
                let i = list[k];
                if self.goes_left[i] {
                    list[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            list[w..].copy_from_slice(&self.scratch);
        }
        let me = self.nodes.len();
        self.nodes.push(Node {
            feature: feature as u32,
            threshold,
            left: 0,
            right: 0,
            value: mean,
        });
        let left = self.build(lo, lo + n_left, depth + 1);
        let right = self.build(lo + n_left, hi, depth + 1);
        self.nodes[me].left = left;
        self.nodes[me].right = right;
        me as u32
    }
}

/// Ensemble of regression trees; prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    trees: Vec<Tree>,
    n_features: usize,
    oob: Vec<f64>,
}

impl RegressionForest {
    /// Fits on a row-major `n x n_features` matrix.
    pub fn fit<R: Rng + ?Sized>(
        x: &[f64],
        n_features: usize,
        y: &[f64],
        cfg: &ForestConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 || n_features == 0 || x.len() != n * n_features {
            return Err(Error::InvalidInput(
                "forest needs a non-empty rectangular design".into(),
            ));
        }
        if cfg.n_trees == 0 {
            return Err(Error::InvalidInput("n_trees must be positive".into()));
        }
        let mut trees = Vec::with_capacity(cfg.n_trees);
        let mut oob_sum = vec![0.0; n];
        let mut oob_cnt = vec![0u32; n];
        let mut idx = Vec::with_capacity(n);
        let mut in_bag = vec![false; n];
        let mut sorted: Vec<Vec<usize>> = vec![Vec::with_capacity(n); n_features];
        let mut scratch = Vec::with_capacity(n);
        let mut goes_left = vec![false; n];
        for _ in 0..cfg.n_trees {
            idx.clear();
            in_bag.iter_mut().for_each(|b| *b = false);
            if cfg.bootstrap {
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    in_bag[i] = true;
                    idx.push(i);
                }
            } else {
                idx.extend(0..n);
                in_bag.iter_mut().for_each(|b| *b = true);
            }
            for (f, list) in sorted.iter_mut().enumerate() {
                list.clear();
                list.extend_from_slice(&idx);
                list.sort_by(|&a, &b| x[a * n_features + f].total_cmp(&x[b * n_features + f]));
            }
            let mut b = Builder {
                x,
                y,
                p: n_features,
                cfg,
                rng: &mut *rng,
                nodes: Vec::new(),
                sorted: std::mem::take(&mut sorted),
                scratch: std::mem::take(&mut scratch),
                goes_left: std::mem::take(&mut goes_left),
            };
            b.build(0, n, 0);
            sorted = std::mem::take(&mut b.sorted);
            scratch = std::mem::take(&mut b.scratch);
            goes_left = std::mem::take(&mut b.goes_left);
            let tree = Tree { nodes: b.nodes };
            for i in (0..n).filter(|&i| !in_bag[i]) {
                oob_sum[i] += tree.predict(&x[i * n_features..(i + 1) * n_features]);
                oob_cnt[i] += 1;
            }
            trees.push(tree);
        }
        let oob = oob_sum
            .iter()
            .zip(&oob_cnt)
            .map(|(s, &c)| if c > 0 { s / f64::from(c) } else { f64::NAN })
            .collect();
        Ok(RegressionForest {
            trees,
            n_features,
            oob,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Out-of-bag prediction per training row (NaN if the row was in every bag).
    pub fn oob_predictions(&self) -> &[f64] {
        &self.oob
    }
}

/// One-step reward model over `(state, action)` backed by a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct QForest {
    forest: RegressionForest,
    action_counts: [usize; 2],
}

impl QForest {
    /// Fits on rows `(state..., action)` already laid out row-major.
    pub fn fit_rows<R: Rng + ?Sized>(
        rows: &[f64],
        width: usize,
        rewards: &[f64],
        cfg: &ForestConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut action_counts = [0usize; 2];
        for r in rows.chunks_exact(width) {
            let a = r[width - 1];
            if a == 0.0 {
                action_counts[0] += 1;
            } else if a == 1.0 {
                action_counts[1] += 1;
            } else {
                return Err(Error::InvalidInput(format!("action {a} is not binary")));
            }
        }
        if let Some(a) = action_counts.iter().position(|&c| c == 0) {
            return Err(Error::Precondition(format!("no samples for action {a}")));
        }
        let forest = RegressionForest::fit(rows, width, rewards, cfg, rng)?;
        Ok(QForest {
            forest,
            action_counts,
        })
    }

    pub fn action_counts(&self) -> [usize; 2] {
        self.action_counts
    }
}

impl RewardModel for QForest {
    fn predict(&self, state: &[f64], action: u8) -> f64 {
        let mut row = [0.0f64; 16];
        let w = state.len() + 1;
        if w <= row.len() {
            row[..state.len()].copy_from_slice(state);
            row[state.len()] = f64::from(action);
            self.forest.predict(&row[..w])
        } else {
            let mut v = state.to_vec();
            v.push(f64::from(action));
            self.forest.predict(&v)
        }
    }

    fn is_trained(&self, action: u8) -> bool {
        self.action_counts
            .get(usize::from(action))
            .is_some_and(|&c| c > 0)
    }
}

/// Fits a reward forest on `(state, action, reward)` samples.
pub fn fit_regression_forest<S: AsRef<[f64]>, R: Rng + ?Sized>(
    samples: &[(S, u8, f64)],
    cfg: &ForestConfig,
    rng: &mut R,
) -> Result<QForest> {
    let width = samples
        .first()
        .map(|s| s.0.as_ref().len() + 1)
        .ok_or_else(|| Error::Precondition("no samples for action 0".into()))?;
    let mut rows = Vec::with_capacity(samples.len() * width);
    let mut rewards = Vec::with_capacity(samples.len());
    for (s, a, r) in samples {
        let s = s.as_ref();
        if s.len() + 1 != width {
            return Err(Error::InvalidInput("states have different lengths".into()));
        }
        rows.extend_from_slice(s);
        rows.push(f64::from(*a));
        rewards.push(*r);
    }
    QForest::fit_rows(&rows, width, &rewards, cfg, rng)
}
