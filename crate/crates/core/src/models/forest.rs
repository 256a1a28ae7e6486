//! Random forest of Gini-split decision trees for binary labels.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class counts `[n_false, n_true]` of the training samples that
    /// reached this leaf.
    Leaf { counts: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// The leaf's majority class; ties vote `false`.
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { counts } => return counts[1] > counts[0],
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    n_features: usize,
    features_per_split: usize,
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    /// Best Gini split of `idx` over a random feature subset, as
    /// `(feature, threshold, impurity_decrease)`.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let mut features: Vec<usize> = (0..self.n_features).collect();
        features.shuffle(rng);
        features.truncate(self.features_per_split);
        features.sort_unstable(); // deterministic evaluation order

        let total = [
            idx.iter().filter(|&&i| !self.y[i]).count(),
            idx.iter().filter(|&&i| self.y[i]).count(),
        ];
        let n = idx.len() as f64;
        let parent = gini(total);

        let mut best: Option<(usize, f64, f64)> = None;
        let mut vals: Vec<(f64, bool)> = Vec::with_capacity(idx.len());
        for &f in &features {
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = [0usize; 2];
            for w in 0..vals.len() - 1 {
                left[usize::from(vals[w].1)] += 1;
                if vals[w].0 == vals[w + 1].0 {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let n_l = (w + 1) as f64;
                let n_r = n - n_l;
                let decrease = parent - (n_l / n) * gini(left) - (n_r / n) * gini(right);
                // Impure nodes split at the best candidate even when the
                // immediate Gini gain is zero (e.g. XOR-like data).
                if best.map_or(true, |(_, _, d)| decrease > d) {
                    let threshold = 0.5 * (vals[w].0 + vals[w + 1].0);
                    best = Some((f, threshold, decrease));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = [
            idx.iter().filter(|&&i| !self.y[i]).count(),
            idx.iter().filter(|&&i| self.y[i]).count(),
        ];
        let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
        if counts[0] == 0 || counts[1] == 0 || idx.len() < 2 || depth_capped {
            self.nodes.push(TreeNode::Leaf { counts });
            return self.nodes.len() - 1;
        }
        let Some((feature, threshold)) = self.best_split(&idx, rng) else {
            self.nodes.push(TreeNode::Leaf { counts });
            return self.nodes.len() - 1;
        };
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts }); // placeholder
        let left = self.grow(l_idx, depth + 1, rng);
        let right = self.grow(r_idx, depth + 1, rng);
        self.nodes[slot] = TreeNode::Split { feature, threshold, left, right };
        slot
    }
}

/// Grow `params.n_trees` trees on bootstrap resamples. Deterministic for a
/// fixed seed: each tree derives its own RNG from `(seed, tree index)`.
pub fn rf_train(x: &[Vec<f64>], y: &[bool], params: ForestParams) -> Result<RandomForest, ModelError> {
    if x.len() < 2 {
        return Err(ModelError::EmptyInput);
    }
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(ModelError::SingleClass);
    }
    let n_features = x[0].len();
    let features_per_split = params
        .features_per_split
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features);

    let trees: Vec<DecisionTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(params.seed, &format!("rf-tree-{t}"));
            let idx: Vec<usize> = if params.bootstrap {
                (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            let mut builder = TreeBuilder {
                x,
                y,
                n_features,
                features_per_split,
                max_depth: params.max_depth,
                nodes: Vec::new(),
            };
            builder.grow(idx, 0, &mut rng);
            DecisionTree { nodes: builder.nodes }
        })
        .collect();

    Ok(RandomForest { trees, params })
}

/// Per-class vote counts `[n_false, n_true]`; they always sum to `n_trees`.
pub fn rf_votes(forest: &RandomForest, x: &[f64]) -> [usize; 2] {
    let mut votes = [0usize; 2];
    for tree in &forest.trees {
        votes[usize::from(tree.predict(x))] += 1;
    }
    votes
}

/// Majority vote over trees; ties predict `false`.
pub fn rf_predict(forest: &RandomForest, x: &[f64]) -> bool {
    let v = rf_votes(forest, x);
    v[1] > v[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_ish() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.1, 0.1],
            vec![0.1, 0.9],
            vec![0.9, 0.1],
            vec![0.9, 0.9],
        ];
        let y = vec![false, true, true, false, false, true, true, false];
        (x, y)
    }

    #[test]
    fn single_unconstrained_tree_memorizes_distinct_rows() {
        let (x, y) = xor_ish();
        let f = rf_train(
            &x,
            &y,
            ForestParams {
                n_trees: 1,
                bootstrap: false,
                features_per_split: Some(2),
                seed: 4,
                ..ForestParams::default()
            },
        )
        .unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(rf_predict(&f, xi), yi);
        }
    }

    #[test]
    fn identical_rows_predict_majority() {
        let x = vec![vec![1.0, 2.0]; 5];
        let y = vec![true, true, true, false, false];
        let f = rf_train(
            &x,
            &y,
            ForestParams {
                n_trees: 7,
                bootstrap: false,
                seed: 1,
                ..ForestParams::default()
            },
        )
        .unwrap();
        assert!(rf_predict(&f, &[1.0, 2.0]));
    }

    #[test]
    fn votes_sum_to_tree_count_and_order_invariance() {
        let (x, y) = xor_ish();
        let mut f = rf_train(
            &x,
            &y,
            ForestParams {
                n_trees: 15,
                seed: 9,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let probe = [0.2, 0.8];
        let v = rf_votes(&f, &probe);
        assert_eq!(v[0] + v[1], 15);
        let before = rf_predict(&f, &probe);
        f.trees.reverse();
        assert_eq!(rf_predict(&f, &probe), before);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = xor_ish();
        let p = ForestParams {
            n_trees: 9,
            seed: 33,
            ..ForestParams::default()
        };
        let a = rf_train(&x, &y, p).unwrap();
        let b = rf_train(&x, &y, p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            rf_train(&x, &[true, true], ForestParams::default()),
            Err(ModelError::SingleClass)
        ));
    }

    #[test]
    fn max_depth_limits_tree_height() {
        let (x, y) = xor_ish();
        let f = rf_train(
            &x,
            &y,
            ForestParams {
                n_trees: 1,
                bootstrap: false,
                max_depth: Some(1),
                features_per_split: Some(2),
                seed: 4,
                ..ForestParams::default()
            },
        )
        .unwrap();
        // Depth 1 means at most one split: 3 nodes.
        assert!(f.trees[0].nodes.len() <= 3);
    }
}
