//! Relevance feedback: a random forest trained on a handful of analyst labels.
//!
//! Trees use axis-aligned threshold splits chosen by class-weighted Gini
//! impurity and vote with their majority leaf. The model is plain data and
//! serializes with every split, so any score can be traced back to the
//! decisions that produced it.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "commlevels-forest";
pub const MODEL_VERSION: u32 = 1;

/// Opacity floor for faded targets.
pub const FADE_FLOOR: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("no training examples; label at least one relevant and one irrelevant target")]
    Empty,
    #[error("only {0} examples labeled; label at least one relevant and one irrelevant target")]
    SingleClass(Label),
    #[error("example `{target}` has {got} features, expected {expected}")]
    DimensionMismatch {
        target: String,
        expected: usize,
        got: usize,
    },
    #[error("example `{0}` has a non-finite feature value")]
    NonFinite(String),
    #[error("invalid forest config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Relevant,
    Irrelevant,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Relevant => "relevant",
            Label::Irrelevant => "irrelevant",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relevant" | "1" | "true" | "yes" => Ok(Label::Relevant),
            "irrelevant" | "0" | "false" | "no" => Ok(Label::Irrelevant),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabeledExample {
    pub target_id: String,
    pub label: Label,
    pub features: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            max_depth: 8,
            min_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        relevant: bool,
    },
}

/// Nodes in preorder; index 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

/// One step of a tree's decision path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathStep {
    pub feature: usize,
    pub threshold: f64,
    pub went_left: bool,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { relevant } => return *relevant,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn path(&self, x: &[f64]) -> (Vec<PathStep>, bool) {
        let mut steps = Vec::new();
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { relevant } => return (steps, *relevant),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let went_left = x[*feature] <= *threshold;
                    steps.push(PathStep {
                        feature: *feature,
                        threshold: *threshold,
                        went_left,
                    });
                    i = if went_left { *left } else { *right };
                }
            }
        }
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Split { feature, .. } => Some(*feature),
            TreeNode::Leaf { .. } => None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Score {
    /// Fraction of trees voting relevant.
    pub p: f64,
    /// `1 - |2p - 1|`: 1 at an even split, 0 when all trees agree.
    pub uncertainty: f64,
}

impl Score {
    pub fn from_p(p: f64) -> Self {
        Self {
            p,
            uncertainty: 1.0 - (2.0 * p - 1.0).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelevanceModel {
    pub format: String,
    pub version: u32,
    pub config: ForestConfig,
    pub feature_dim: usize,
    pub trees: Vec<DecisionTree>,
}

impl RelevanceModel {
    pub fn score(&self, x: &[f64]) -> Score {
        assert_eq!(x.len(), self.feature_dim, "feature dimension mismatch");
        if self.trees.is_empty() {
            return Score::from_p(0.5);
        }
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        Score::from_p(votes as f64 / self.trees.len() as f64)
    }

    /// Decision path of every tree for `x`.
    pub fn explain(&self, x: &[f64]) -> Vec<(Vec<PathStep>, bool)> {
        self.trees.iter().map(|t| t.path(x)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let model: RelevanceModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported model `{}` v{}",
                model.format, model.version
            )));
        }
        let bad_feature = model
            .trees
            .iter()
            .flat_map(DecisionTree::split_features)
            .any(|f| f >= model.feature_dim);
        if bad_feature {
            return Err(serde::de::Error::custom("split feature out of range"));
        }
        Ok(model)
    }
}

/// Trains a forest. Examples are ordered by target id first, so the model
/// depends only on the example set and the seed.
///
/// Each tree sees a per-class bootstrap sample (every class keeps its size),
/// and each split considers `ceil(sqrt(dim))` random features, widening to
/// the remaining ones only when none of those can split the node.
pub fn train(examples: &[LabeledExample], config: &ForestConfig) -> Result<RelevanceModel, TrainError> {
    if config.tree_count == 0 || config.min_leaf == 0 {
        return Err(TrainError::Config("treeCount and minLeaf must be positive".into()));
    }
    let first = examples.first().ok_or(TrainError::Empty)?;
    let dim = first.features.len();
    for e in examples {
        if e.features.len() != dim {
            return Err(TrainError::DimensionMismatch {
                target: e.target_id.clone(),
                expected: dim,
                got: e.features.len(),
            });
        }
        if e.features.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(e.target_id.clone()));
        }
    }
    let mut sorted: Vec<&LabeledExample> = examples.iter().collect();
    sorted.sort_by(|a, b| a.target_id.cmp(&b.target_id));

    let positives: Vec<usize> = (0..sorted.len())
        .filter(|&i| sorted[i].label == Label::Relevant)
        .collect();
    let negatives: Vec<usize> = (0..sorted.len())
        .filter(|&i| sorted[i].label == Label::Irrelevant)
        .collect();
    if positives.is_empty() {
        return Err(TrainError::SingleClass(Label::Irrelevant));
    }
    if negatives.is_empty() {
        return Err(TrainError::SingleClass(Label::Relevant));
    }

    let data = TrainingData {
        x: sorted.iter().map(|e| e.features.as_slice()).collect(),
        y: sorted.iter().map(|e| e.label == Label::Relevant).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mtry = (dim as f64).sqrt().ceil() as usize;
    let trees = (0..config.tree_count)
        .map(|_| {
            let mut sample = Vec::with_capacity(sorted.len());
            for class in [&positives, &negatives] {
                for _ in 0..class.len() {
                    sample.push(class[rng.random_range(0..class.len())]);
                }
            }
            let mut builder = TreeBuilder {
                data: &data,
                config,
                mtry,
                dim,
                rng: &mut rng,
                nodes: Vec::new(),
            };
            builder.grow(sample, 0);
            DecisionTree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(RelevanceModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: *config,
        feature_dim: dim,
        trees,
    })
}

struct TrainingData<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<bool>,
}

struct TreeBuilder<'a, 'r> {
    data: &'a TrainingData<'a>,
    config: &'a ForestConfig,
    mtry: usize,
    dim: usize,
    rng: &'r mut ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl TreeBuilder<'_, '_> {
    /// Inverse class frequency weights over a node's sample.
    fn class_weights(&self, sample: &[usize]) -> (f64, f64) {
        let pos = sample.iter().filter(|&&i| self.data.y[i]).count() as f64;
        let neg = sample.len() as f64 - pos;
        let n = sample.len() as f64;
        let w = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 0.0 };
        (w(pos), w(neg))
    }

    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { relevant: false });
        let pos = sample.iter().filter(|&&i| self.data.y[i]).count();
        let pure = pos == 0 || pos == sample.len();
        let weights = self.class_weights(&sample);

        let split = if pure
            || depth >= self.config.max_depth
            || sample.len() < 2 * self.config.min_leaf
        {
            None
        } else {
            self.best_split(&sample, weights)
        };

        match split {
            None => {
                // weighted majority; ties go to irrelevant
                let neg = sample.len() - pos;
                let relevant = pos as f64 * weights.0 > neg as f64 * weights.1;
                self.nodes[id] = TreeNode::Leaf { relevant };
            }
            Some(choice) => {
                let (left, right): (Vec<usize>, Vec<usize>) = sample
                    .into_iter()
                    .partition(|&i| self.data.x[i][choice.feature] <= choice.threshold);
                let l = self.grow(left, depth + 1);
                let r = self.grow(right, depth + 1);
                self.nodes[id] = TreeNode::Split {
                    feature: choice.feature,
                    threshold: choice.threshold,
                    left: l,
                    right: r,
                };
            }
        }
        id
    }

    fn best_split(&mut self, sample: &[usize], weights: (f64, f64)) -> Option<SplitChoice> {
        let mut features: Vec<usize> = (0..self.dim).collect();
        features.shuffle(self.rng);
        let (first, rest) = features.split_at(self.mtry.min(self.dim));
        self.best_among(first, sample, weights)
            .or_else(|| self.best_among(rest, sample, weights))
    }

    fn best_among(
        &self,
        features: &[usize],
        sample: &[usize],
        (wp, wn): (f64, f64),
    ) -> Option<SplitChoice> {
        let min_leaf = self.config.min_leaf;
        let total_p = sample.iter().filter(|&&i| self.data.y[i]).count() as f64 * wp;
        let total_n = sample.iter().filter(|&&i| !self.data.y[i]).count() as f64 * wn;
        let gini = |p: f64, n: f64| {
            let w = p + n;
            if w <= 0.0 {
                0.0
            } else {
                1.0 - (p / w).powi(2) - (n / w).powi(2)
            }
        };

        let mut best: Option<SplitChoice> = None;
        for &f in features {
            let mut order: Vec<usize> = sample.to_vec();
            order.sort_by(|&a, &b| {
                self.data.x[a][f]
                    .partial_cmp(&self.data.x[b][f])
                    .unwrap_or(Ordering::Equal)
            });
            let (mut lp, mut ln) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                if self.data.y[order[k]] {
                    lp += wp;
                } else {
                    ln += wn;
                }
                let here = self.data.x[order[k]][f];
                let next = self.data.x[order[k + 1]][f];
                if here == next {
                    continue;
                }
                let left_n = k + 1;
                if left_n < min_leaf || order.len() - left_n < min_leaf {
                    continue;
                }
                let (rp, rn) = (total_p - lp, total_n - ln);
                let impurity = ((lp + ln) * gini(lp, ln) + (rp + rn) * gini(rp, rn))
                    / (total_p + total_n);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: here + (next - here) / 2.0,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

/// The `k` unlabeled targets the model is least sure about, most uncertain
/// first, ties by target id.
pub fn rank_ambiguous(
    model: &RelevanceModel,
    targets: &[(String, Vec<f64>)],
    labeled: &HashSet<String>,
    k: usize,
) -> Vec<String> {
    let mut scored: Vec<(&str, f64)> = targets
        .iter()
        .filter(|(id, _)| !labeled.contains(id))
        .map(|(id, x)| (id.as_str(), model.score(x).uncertainty))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    scored.into_iter().take(k).map(|(id, _)| id.to_string()).collect()
}

/// Opacity for a target scored `p`: full at or above `threshold`, otherwise
/// linear from [`FADE_FLOOR`] at `p = 0` up to 1 at the threshold.
pub fn fade_factor(p: f64, threshold: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    if p >= threshold || threshold <= 0.0 {
        return 1.0;
    }
    FADE_FLOOR + (1.0 - FADE_FLOOR) * (p / threshold)
}

/// Combined decision of several classifiers: relevant only when every score
/// clears its threshold.
pub fn combine_decisions(scores: &[(Score, f64)]) -> bool {
    scores.iter().all(|(s, threshold)| s.p >= *threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, label: Label, features: &[f64]) -> LabeledExample {
        LabeledExample {
            target_id: id.into(),
            label,
            features: features.to_vec(),
        }
    }

    #[test]
    fn separable_pair_splits_on_the_separating_feature() {
        let examples = [
            ex("a", Label::Relevant, &[0.0, 5.0, 1.0]),
            ex("b", Label::Irrelevant, &[0.0, 5.0, 9.0]),
        ];
        let model = train(&examples, &ForestConfig::default()).unwrap();
        for tree in &model.trees {
            let feats: Vec<usize> = tree.split_features().collect();
            assert_eq!(feats, [2]);
        }
        assert_eq!(model.score(&examples[0].features).p, 1.0);
        assert_eq!(model.score(&examples[1].features).p, 0.0);
    }

    #[test]
    fn training_is_deterministic_and_order_free() {
        let examples = vec![
            ex("x1", Label::Relevant, &[1.0, 2.0]),
            ex("x2", Label::Irrelevant, &[3.0, 0.5]),
            ex("x3", Label::Relevant, &[1.5, 2.5]),
            ex("x4", Label::Irrelevant, &[2.5, 0.0]),
        ];
        let cfg = ForestConfig {
            seed: 42,
            ..ForestConfig::default()
        };
        let a = train(&examples, &cfg).unwrap().to_json();
        let mut reversed = examples.clone();
        reversed.reverse();
        let b = train(&reversed, &cfg).unwrap().to_json();
        assert_eq!(a, b);
        let reloaded = RelevanceModel::from_json(&a).unwrap();
        assert_eq!(reloaded.to_json(), a);
    }

    #[test]
    fn single_class_and_empty_are_rejected() {
        let cfg = ForestConfig::default();
        assert_eq!(train(&[], &cfg).unwrap_err(), TrainError::Empty);
        let one = [ex("a", Label::Relevant, &[1.0])];
        assert!(matches!(train(&one, &cfg), Err(TrainError::SingleClass(_))));
        let ragged = [
            ex("a", Label::Relevant, &[1.0]),
            ex("b", Label::Irrelevant, &[1.0, 2.0]),
        ];
        assert!(matches!(
            train(&ragged, &cfg),
            Err(TrainError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hand_built_three_tree_vote() {
        let stump = |threshold: f64, left_relevant: bool| DecisionTree {
            nodes: vec![
                TreeNode::Split {
                    feature: 0,
                    threshold,
                    left: 1,
                    right: 2,
                },
                TreeNode::Leaf {
                    relevant: left_relevant,
                },
                TreeNode::Leaf {
                    relevant: !left_relevant,
                },
            ],
        };
        let model = RelevanceModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: ForestConfig::default(),
            feature_dim: 1,
            trees: vec![stump(1.0, true), stump(2.0, true), stump(3.0, false)],
        };
        // x = 1.5: tree1 right (irrelevant), tree2 left (relevant), tree3 left (irrelevant)
        let s = model.score(&[1.5]);
        assert!((s.p - 1.0 / 3.0).abs() < 1e-15);
        // x = 0: relevant, relevant, irrelevant
        assert!((model.score(&[0.0]).p - 2.0 / 3.0).abs() < 1e-15);
        let paths = model.explain(&[1.5]);
        assert!(!paths[0].0[0].went_left && paths[1].0[0].went_left);
    }

    #[test]
    fn uncertainty_bounds() {
        assert_eq!(Score::from_p(1.0).uncertainty, 0.0);
        assert_eq!(Score::from_p(0.0).uncertainty, 0.0);
        assert_eq!(Score::from_p(0.5).uncertainty, 1.0);
    }

    #[test]
    fn fade_boundaries() {
        assert_eq!(fade_factor(0.6, 0.6), 1.0);
        assert_eq!(fade_factor(0.0, 0.6), FADE_FLOOR);
        assert_eq!(fade_factor(0.0, 0.0), 1.0);
        assert!((fade_factor(0.3, 0.6) - 0.575).abs() < 1e-12);
    }

    #[test]
    fn combined_decision_is_conjunction() {
        let s = |p| Score::from_p(p);
        assert!(combine_decisions(&[(s(0.9), 0.5), (s(0.6), 0.5)]));
        assert!(!combine_decisions(&[(s(0.9), 0.5), (s(0.4), 0.5)]));
    }

    #[test]
    fn ranking_ties_and_exclusions() {
        let examples = [
            ex("a", Label::Relevant, &[0.0]),
            ex("b", Label::Irrelevant, &[1.0]),
        ];
        let model = train(&examples, &ForestConfig::default()).unwrap();
        let targets: Vec<(String, Vec<f64>)> =
            ["t3", "t1", "t2"].iter().map(|id| (id.to_string(), vec![0.0])).collect();
        let none = HashSet::new();
        assert_eq!(rank_ambiguous(&model, &targets, &none, 2), ["t1", "t2"]);
        assert_eq!(rank_ambiguous(&model, &targets, &none, 10).len(), 3);
        let labeled: HashSet<String> = ["t1".to_string()].into();
        assert_eq!(rank_ambiguous(&model, &targets, &labeled, 10), ["t2", "t3"]);
    }
}
