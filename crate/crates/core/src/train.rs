//! From-scratch CART and random forest training, grid tuning, and hinted
//! CART training from a previously trained tree.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::tree::{DecisionTree, Forest, LabelDistribution, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

/// Gini impurity of a label count vector: `1 - sum p_i^2`.
pub fn gini(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

fn impurity(criterion: SplitCriterion, counts: &[u64]) -> f64 {
    match criterion {
        SplitCriterion::Gini => gini(counts),
        SplitCriterion::Entropy => entropy(counts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub criterion: SplitCriterion,
    /// Maximum root-leaf path length, in edges.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams { criterion: SplitCriterion::Gini, max_depth: 25, min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubsample {
    /// `ceil(sqrt(d))` random features per node.
    Sqrt,
    /// A fixed fraction of features per node.
    Fraction(f64),
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub cart: CartParams,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 25,
            cart: CartParams::default(),
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

fn label_counts(train: &LabeledDataset, indices: &[usize]) -> Vec<u64> {
    let mut counts = vec![0u64; train.schema.num_labels()];
    for &i in indices {
        counts[train.labels[i]] += 1;
    }
    counts
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

/// Exhaustive split search over the candidate features. Candidate
/// thresholds are midpoints between consecutive distinct sorted values.
/// Ties in impurity decrease break toward the lower feature index, then
/// the lower threshold.
fn best_split(
    train: &LabeledDataset,
    indices: &[usize],
    features: &[usize],
    criterion: SplitCriterion,
    min_samples_leaf: usize,
) -> Option<BestSplit> {
    let parent_counts = label_counts(train, indices);
    let parent_imp = impurity(criterion, &parent_counts);
    let n = indices.len() as f64;
    let num_labels = train.schema.num_labels();

    let mut best: Option<BestSplit> = None;
    for &feature in features {
        let mut vals: Vec<(f64, usize)> = indices
            .iter()
            .map(|&i| (train.samples[i].values[feature], train.labels[i]))
            .collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        // sweep thresholds: below = condition true (x <= k)
        let mut below = vec![0u64; num_labels];
        let mut above = parent_counts.clone();
        let mut i = 0;
        while i < vals.len() {
            // move the whole run of equal values below the candidate cut
            let v = vals[i].0;
            while i < vals.len() && vals[i].0 == v {
                below[vals[i].1] += 1;
                above[vals[i].1] -= 1;
                i += 1;
            }
            if i == vals.len() {
                break;
            }
            let threshold = 0.5 * (v + vals[i].0);
            let nb: u64 = below.iter().sum();
            let na: u64 = above.iter().sum();
            if (nb as usize) < min_samples_leaf || (na as usize) < min_samples_leaf {
                continue;
            }
            let child = (nb as f64 / n) * impurity(criterion, &below)
                + (na as f64 / n) * impurity(criterion, &above);
            let decrease = parent_imp - child;
            let better = match &best {
                None => true,
                Some(b) => {
                    decrease > b.decrease + 1e-15
                        || (decrease >= b.decrease - 1e-15
                            && (feature, threshold) < (b.feature, b.threshold))
                }
            };
            if better && decrease > 1e-15 {
                best = Some(BestSplit { feature, threshold, decrease });
            }
        }
    }
    best
}

fn build_node(
    train: &LabeledDataset,
    indices: &[usize],
    depth: usize,
    params: &CartParams,
    feature_picker: &mut dyn FnMut() -> Vec<usize>,
) -> Node {
    let counts = label_counts(train, indices);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if depth >= params.max_depth || pure || indices.len() < 2 * params.min_samples_leaf {
        return Node::leaf(LabelDistribution::from_counts(counts), indices.len() as u64);
    }
    let features = feature_picker();
    let Some(split) = best_split(train, indices, &features, params.criterion, params.min_samples_leaf)
    else {
        return Node::leaf(LabelDistribution::from_counts(counts), indices.len() as u64);
    };
    let (le, gt): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| train.samples[i].values[split.feature] <= split.threshold);
    let right = build_node(train, &le, depth + 1, params, feature_picker);
    let left = build_node(train, &gt, depth + 1, params, feature_picker);
    Node::split(split.feature, split.threshold, left, right)
}

/// Greedy CART training on the full feature set.
pub fn train_cart(train: &LabeledDataset, params: &CartParams) -> Result<DecisionTree> {
    if train.is_empty() {
        return Err(Error::EmptyDataset(""));
    }
    let d = train.schema.dimension();
    let all: Vec<usize> = (0..d).collect();
    let indices: Vec<usize> = (0..train.len()).collect();
    let mut picker = || all.clone();
    let root = build_node(train, &indices, 0, params, &mut picker);
    Ok(DecisionTree::new(d, train.schema.num_labels(), root))
}

fn subsample_size(d: usize, rule: FeatureSubsample) -> usize {
    match rule {
        FeatureSubsample::Sqrt => (d as f64).sqrt().ceil() as usize,
        FeatureSubsample::Fraction(f) => ((d as f64 * f).ceil() as usize).clamp(1, d),
        FeatureSubsample::All => d,
    }
    .clamp(1, d)
}

/// Trains one tree of a forest from its derived seed.
fn train_rf_tree(train: &LabeledDataset, params: &RfParams, tree_seed: u64) -> DecisionTree {
    let d = train.schema.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
    let indices: Vec<usize> = if params.bootstrap {
        (0..train.len()).map(|_| rng.gen_range(0..train.len())).collect()
    } else {
        (0..train.len()).collect()
    };
    let k = subsample_size(d, params.feature_subsample);
    let all: Vec<usize> = (0..d).collect();
    let mut picker = || {
        let mut fs = all.clone();
        fs.shuffle(&mut rng);
        fs.truncate(k);
        fs.sort_unstable();
        fs
    };
    let root = build_node(train, &indices, 0, &params.cart, &mut picker);
    DecisionTree::new(d, train.schema.num_labels(), root)
}

/// Random forest: independent CARTs on bootstrap resamples with per-node
/// random feature subsets. Per-tree seeds derive from the master seed, so
/// parallel and sequential training produce identical forests.
pub fn train_rf(train: &LabeledDataset, params: &RfParams) -> Result<Forest> {
    if train.is_empty() {
        return Err(Error::EmptyDataset(""));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.gen()).collect();
    let trees: Vec<DecisionTree> = seeds
        .par_iter()
        .map(|&s| train_rf_tree(train, params, s))
        .collect();
    Forest::new(trees)
}

// ---------------------------------------------------------------------------
// Hyper-parameter tuning
// ---------------------------------------------------------------------------

/// Grid of configurations explored by [`tune_cart`] / [`tune_rf`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneGrid {
    pub criteria: Vec<SplitCriterion>,
    pub max_depths: Vec<usize>,
    /// Forest sizes; ignored when tuning single trees.
    pub n_trees: Vec<usize>,
}

impl TuneGrid {
    /// Both criteria, depths 5..=95 step 10, forest sizes 5..=95 step 10.
    pub fn standard() -> Self {
        let steps: Vec<usize> = (0..10).map(|i| 5 + 10 * i).collect();
        TuneGrid {
            criteria: vec![SplitCriterion::Gini, SplitCriterion::Entropy],
            max_depths: steps.clone(),
            n_trees: steps,
        }
    }
}

fn validation_accuracy_tree(t: &DecisionTree, val: &LabeledDataset) -> f64 {
    crate::metrics::accuracy(&crate::tree::Model::Tree(t.clone()), val).unwrap_or(0.0)
}

/// Selects the CART configuration maximizing accuracy on a held-out 20%
/// validation split of `train`. Ties break toward the smaller model.
pub fn tune_cart(train: &LabeledDataset, grid: &TuneGrid, seed: u64) -> Result<CartParams> {
    if grid.criteria.is_empty() || grid.max_depths.is_empty() {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let (sub_train, val) = crate::data::split(train, 0.2, seed)?;
    let mut best: Option<(f64, usize, CartParams)> = None;
    for &criterion in &grid.criteria {
        for &max_depth in &grid.max_depths {
            let params = CartParams { criterion, max_depth, min_samples_leaf: 1 };
            let tree = train_cart(&sub_train, &params)?;
            let acc = validation_accuracy_tree(&tree, &val);
            let size = tree.leaf_count();
            let better = match &best {
                None => true,
                Some((bacc, bsize, _)) => acc > *bacc || (acc == *bacc && size < *bsize),
            };
            if better {
                best = Some((acc, size, params));
            }
        }
    }
    Ok(best.unwrap().2)
}

/// Same protocol for random forests, additionally scanning forest sizes.
pub fn tune_rf(train: &LabeledDataset, grid: &TuneGrid, seed: u64) -> Result<RfParams> {
    if grid.criteria.is_empty() || grid.max_depths.is_empty() || grid.n_trees.is_empty() {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let (sub_train, val) = crate::data::split(train, 0.2, seed)?;
    let mut best: Option<(f64, usize, RfParams)> = None;
    for &criterion in &grid.criteria {
        for &max_depth in &grid.max_depths {
            for &n_trees in &grid.n_trees {
                let params = RfParams {
                    n_trees,
                    cart: CartParams { criterion, max_depth, min_samples_leaf: 1 },
                    seed,
                    ..RfParams::default()
                };
                let forest = train_rf(&sub_train, &params)?;
                let acc = crate::metrics::accuracy(
                    &crate::tree::Model::Forest(forest.clone()),
                    &val,
                )?;
                let size = forest.leaf_count();
                let better = match &best {
                    None => true,
                    Some((bacc, bsize, _)) => acc > *bacc || (acc == *bacc && size < *bsize),
                };
                if better {
                    best = Some((acc, size, params));
                }
            }
        }
    }
    Ok(best.unwrap().2)
}

/// CART whose depth and minimum leaf size hyper-parameters are read off a
/// trained hint tree.
pub fn train_hinted_cart(
    train: &LabeledDataset,
    hint: &DecisionTree,
    criterion: SplitCriterion,
) -> Result<DecisionTree> {
    let min_leaf = hint
        .min_leaf_samples()
        .filter(|&m| m > 0)
        .ok_or_else(|| Error::InvalidParameter("hint tree carries no leaf sample counts".into()))?;
    let params = CartParams {
        criterion,
        max_depth: hint.depth(),
        min_samples_leaf: min_leaf as usize,
    };
    train_cart(train, &params)
}
