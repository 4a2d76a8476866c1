//! Random forest of Gini CART trees with seeded bootstrap and per-node
//! feature subsampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForestParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
}

impl ForestModel {
    /// Fraction of trees voting for each class.
    pub fn decision_scores(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1.0;
        }
        let n = self.trees.len().max(1) as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    counts.iter().enumerate().fold((0, 0), |(bi, bc), (i, &c)| if c > bc { (i, c) } else { (bi, bc) }).0
}

struct Builder<'a> {
    x: &'a [&'a [f64]],
    y: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    max_features: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &s in samples {
            c[self.y[s]] += 1;
        }
        c
    }

    fn best_split(&self, samples: &mut [usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let n_features = self.x[0].len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let total = samples.len();
        let parent = self.counts(samples);
        let mut best: Option<BestSplit> = None;

        let mut features = sample(rng, n_features, self.max_features).into_vec();
        features.sort_unstable();
        for feature in features {
            samples.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.n_classes];
            let mut right = parent.clone();
            for pos in 1..total {
                let moved = samples[pos - 1];
                left[self.y[moved]] += 1;
                right[self.y[moved]] -= 1;
                let (lo, hi) = (self.x[moved][feature], self.x[samples[pos]][feature]);
                if lo == hi || pos < min_leaf || total - pos < min_leaf {
                    continue;
                }
                let impurity = (pos as f64 * gini(&left, pos) + (total - pos) as f64 * gini(&right, total - pos))
                    / total as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(BestSplit { feature, threshold: lo + (hi - lo) / 2.0, impurity });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(samples);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority(&counts) });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || samples.len() < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let Some(split) = self.best_split(samples, rng) else {
            return id;
        };
        if split.impurity >= gini(&counts, samples.len()) {
            return id;
        }
        let mut left_samples: Vec<usize> =
            samples.iter().copied().filter(|&s| self.x[s][split.feature] <= split.threshold).collect();
        let mut right_samples: Vec<usize> =
            samples.iter().copied().filter(|&s| self.x[s][split.feature] > split.threshold).collect();
        let left = self.grow(&mut left_samples, depth + 1, rng);
        let right = self.grow(&mut right_samples, depth + 1, rng);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

pub(crate) fn fit(params: &ForestParams, x: &[&[f64]], y: &[usize], n_classes: usize, seed: u64) -> ForestModel {
    let n = x.len();
    let n_features = x[0].len();
    let max_features = libm::ceil(params.max_features_fraction * n_features as f64).clamp(1.0, n_features as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..params.n_trees.max(1))
        .map(|_| {
            let mut boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut builder = Builder { x, y, n_classes, params, max_features, nodes: Vec::new() };
            builder.grow(&mut boot, 0, &mut rng);
            Tree { nodes: builder.nodes }
        })
        .collect();
    ForestModel { trees, n_classes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_trees: usize, max_depth: Option<usize>) -> ForestParams {
        ForestParams { n_trees, max_depth, min_samples_leaf: 1, max_features_fraction: 1.0 }
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5, 5], 10), 0.5);
        assert_eq!(gini(&[4, 0], 4), 0.0);
    }

    #[test]
    fn single_stump_splits_at_midpoint() {
        let rows: Vec<[f64; 1]> = vec![[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]];
        let x: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y = [0, 0, 0, 1, 1, 1];
        let mut b = Builder { x: &x, y: &y, n_classes: 2, params: &params(1, Some(1)), max_features: 1, nodes: Vec::new() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.grow(&mut [0, 1, 2, 3, 4, 5], 0, &mut rng);
        assert_eq!(b.nodes[0], Node::Split { feature: 0, threshold: 6.0, left: 1, right: 2 });
    }

    #[test]
    fn votes_are_fractions() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [i as f64, (i % 7) as f64]).collect();
        let x: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let m = fit(&params(9, None), &x, &y, 2, 3);
        for r in &rows {
            let s = m.decision_scores(r);
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(m.decision_scores(&[35.0, 1.0])[1] > 0.5);
    }
}
