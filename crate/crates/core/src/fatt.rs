//! Genetic training of single decision trees that maximize a weighted sum
//! of training accuracy and verified individual fairness.
//!
//! Each generation evaluates the population, carries the best individuals
//! over unchanged, and fills the rest with roulette-selected parents
//! recombined by subtree crossover and structural mutation. Fairness of a
//! candidate tree is computed by the verifier, so the fairness component
//! of the fitness is a proof, not an estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::domain::{ColumnMap, SimilaritySpec};
use crate::error::{Error, Result};
use crate::train::{train_cart, CartParams, SplitCriterion};
use crate::tree::{DecisionTree, LabelDistribution, Model, Node};
use crate::verifier::{fairness_metric, AnalysisConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationMode {
    GrowOnly,
    GrowAndPrune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub iterations: usize,
    /// Weight of the accuracy component (alpha).
    pub accuracy_weight: f64,
    /// Weight of the verified-fairness component (beta).
    pub fairness_weight: f64,
    pub mutation_mode: MutationMode,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub elitism_count: usize,
    pub max_depth_cap: usize,
    /// Evaluate fairness on a fixed seeded subsample of the training set
    /// instead of all of it.
    pub fairness_sample_size: Option<usize>,
    pub seed: u64,
    /// Verification budget per fairness query during training.
    pub timeout_ms: Option<u64>,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 32,
            iterations: 100,
            accuracy_weight: 0.5,
            fairness_weight: 0.5,
            mutation_mode: MutationMode::GrowAndPrune,
            crossover_probability: 0.9,
            mutation_probability: 0.3,
            elitism_count: 2,
            max_depth_cap: 10,
            fairness_sample_size: None,
            seed: 0,
            timeout_ms: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidParameter("population_size must be >= 2".into()));
        }
        if self.accuracy_weight < 0.0 || self.fairness_weight < 0.0 {
            return Err(Error::InvalidParameter("objective weights must be >= 0".into()));
        }
        if self.accuracy_weight + self.fairness_weight <= 0.0 {
            return Err(Error::InvalidParameter("at least one objective weight must be > 0".into()));
        }
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0,1]")));
            }
        }
        Ok(())
    }

    fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            timeout: self.timeout_ms.map(std::time::Duration::from_millis),
        }
    }
}

/// A population member with its evaluated objective components.
#[derive(Debug, Clone)]
pub struct Individual {
    pub tree: DecisionTree,
    pub fitness: f64,
    pub accuracy_component: f64,
    pub fairness_component: f64,
}

/// The fixed dataset fairness is evaluated on: either the whole training
/// set or a seeded subsample of `fairness_sample_size` rows.
pub fn fairness_eval_set(train: &LabeledDataset, cfg: &GaConfig) -> LabeledDataset {
    match cfg.fairness_sample_size {
        Some(k) if k < train.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5a3b);
            let mut idx: Vec<usize> = (0..train.len()).collect();
            // partial Fisher-Yates: the first k entries are the sample
            for i in 0..k {
                let j = rng.gen_range(i..idx.len());
                idx.swap(i, j);
            }
            idx.truncate(k);
            LabeledDataset {
                schema: train.schema.clone(),
                samples: idx.iter().map(|&i| train.samples[i].clone()).collect(),
                labels: idx.iter().map(|&i| train.labels[i]).collect(),
            }
        }
        _ => train.clone(),
    }
}

/// Evaluates one tree: training accuracy, verified fairness on the
/// evaluation set, and their weighted sum.
pub fn fitness(
    tree: DecisionTree,
    train: &LabeledDataset,
    eval_set: &LabeledDataset,
    spec: &SimilaritySpec,
    cfg: &GaConfig,
    map: &ColumnMap,
) -> Result<Individual> {
    let model = Model::Tree(tree);
    let acc = crate::metrics::accuracy(&model, train)?;
    let fair = fairness_metric(&model, eval_set, spec, &cfg.analysis(), map)?.fairness;
    let Model::Tree(tree) = model else { unreachable!() };
    Ok(Individual {
        fitness: cfg.accuracy_weight * acc + cfg.fairness_weight * fair,
        accuracy_component: acc,
        fairness_component: fair,
        tree,
    })
}

/// Fitness-proportional selection; uniform when all fitness values are 0.
pub fn select_roulette<'a>(population: &'a [Individual], rng: &mut ChaCha8Rng) -> &'a Individual {
    assert!(!population.is_empty());
    let total: f64 = population.iter().map(|i| i.fitness).sum();
    if total <= 0.0 {
        return &population[rng.gen_range(0..population.len())];
    }
    let mut ticket = rng.gen::<f64>() * total;
    for ind in population {
        ticket -= ind.fitness;
        if ticket <= 0.0 {
            return ind;
        }
    }
    population.last().unwrap()
}

fn count_nodes(node: &Node) -> usize {
    match node {
        Node::Leaf { .. } => 1,
        Node::Split { left, right, .. } => 1 + count_nodes(left) + count_nodes(right),
    }
}

/// In-order visit: returns a mutable reference to the `idx`-th node.
fn nth_node_mut<'a>(node: &'a mut Node, idx: &mut usize) -> Option<&'a mut Node> {
    if *idx == 0 {
        return Some(node);
    }
    *idx -= 1;
    match node {
        Node::Leaf { .. } => None,
        Node::Split { left, right, .. } => {
            nth_node_mut(left, idx).or_else(|| nth_node_mut(right, idx))
        }
    }
}

fn nth_node<'a>(node: &'a Node, idx: &mut usize) -> Option<&'a Node> {
    if *idx == 0 {
        return Some(node);
    }
    *idx -= 1;
    match node {
        Node::Leaf { .. } => None,
        Node::Split { left, right, .. } => nth_node(left, idx).or_else(|| nth_node(right, idx)),
    }
}

fn truncate_to_depth(node: &mut Node, remaining: usize, num_labels: usize) {
    if let Node::Split { left, right, .. } = node {
        if remaining == 0 {
            *node = Node::leaf(
                LabelDistribution::from_frequencies(vec![1.0 / num_labels as f64; num_labels]),
                0,
            );
        } else {
            truncate_to_depth(left, remaining - 1, num_labels);
            truncate_to_depth(right, remaining - 1, num_labels);
        }
    }
}

/// Replaces a uniformly random subtree of `recipient` with a uniformly
/// random subtree of `donor`, then truncates the child to the depth cap.
/// Leaves must be refit before the child is evaluated.
pub fn crossover(
    recipient: &DecisionTree,
    donor: &DecisionTree,
    max_depth_cap: usize,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut child = recipient.clone();
    let slot = rng.gen_range(0..count_nodes(&child.root));
    let pick = rng.gen_range(0..count_nodes(&donor.root));
    let donated = {
        let mut i = pick;
        nth_node(&donor.root, &mut i).expect("index in range").clone()
    };
    {
        let mut i = slot;
        let target = nth_node_mut(&mut child.root, &mut i).expect("index in range");
        *target = donated;
    }
    truncate_to_depth(&mut child.root, max_depth_cap, child.num_labels);
    child
}

/// Routes every training sample to its leaf; returns per-node index lists
/// in the same in-order numbering used by `nth_node`.
fn route_samples(tree: &DecisionTree, train: &LabeledDataset) -> Vec<Vec<usize>> {
    fn walk(
        node: &Node,
        node_id: &mut usize,
        indices: Vec<usize>,
        train: &LabeledDataset,
        out: &mut Vec<Vec<usize>>,
    ) {
        out[*node_id] = indices.clone();
        *node_id += 1;
        if let Node::Split { feature, threshold, left, right } = node {
            let (le, gt): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| train.samples[i].values[*feature] <= *threshold);
            walk(left, node_id, gt, train, out);
            walk(right, node_id, le, train, out);
        }
    }
    let mut out = vec![Vec::new(); count_nodes(&tree.root)];
    let mut id = 0;
    walk(&tree.root, &mut id, (0..train.len()).collect(), train, &mut out);
    out
}

fn leaf_from_indices(train: &LabeledDataset, indices: &[usize]) -> Node {
    let mut counts = vec![0u64; train.schema.num_labels()];
    for &i in indices {
        counts[train.labels[i]] += 1;
    }
    Node::leaf(LabelDistribution::from_counts(counts), indices.len() as u64)
}

/// Structural mutation. Grow: split a random leaf holding at least two
/// training samples on a random feature, with the threshold drawn from the
/// routed sample values. Prune (grow-and-prune mode, half the time):
/// collapse a random internal node to a leaf with the merged counts.
/// Returns the tree unchanged when no edit is possible.
pub fn mutate(
    tree: &DecisionTree,
    mode: MutationMode,
    train: &LabeledDataset,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let grow = match mode {
        MutationMode::GrowOnly => true,
        MutationMode::GrowAndPrune => {
            tree.root.is_leaf() || rng.gen::<f64>() < 0.5
        }
    };
    if grow {
        grow_mutation(tree, train, rng)
    } else {
        prune_mutation(tree, rng)
    }
}

fn grow_mutation(tree: &DecisionTree, train: &LabeledDataset, rng: &mut ChaCha8Rng) -> DecisionTree {
    let routed = route_samples(tree, train);
    // leaf node ids (in-order) with enough routed samples to split
    let mut leaf_ids = Vec::new();
    fn collect_leaves(node: &Node, id: &mut usize, out: &mut Vec<usize>) {
        let this = *id;
        *id += 1;
        match node {
            Node::Leaf { .. } => out.push(this),
            Node::Split { left, right, .. } => {
                collect_leaves(left, id, out);
                collect_leaves(right, id, out);
            }
        }
    }
    let mut id = 0;
    collect_leaves(&tree.root, &mut id, &mut leaf_ids);
    leaf_ids.retain(|&l| routed[l].len() >= 2);
    if leaf_ids.is_empty() {
        return tree.clone();
    }
    let leaf_id = leaf_ids[rng.gen_range(0..leaf_ids.len())];
    let indices = &routed[leaf_id];
    // pick a feature with at least two distinct routed values
    for _ in 0..16 {
        let feature = rng.gen_range(0..tree.num_features);
        let mut vals: Vec<f64> = indices.iter().map(|&i| train.samples[i].values[feature]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        if vals.len() < 2 {
            continue;
        }
        let cut = rng.gen_range(0..vals.len() - 1);
        let threshold = 0.5 * (vals[cut] + vals[cut + 1]);
        let (le, gt): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| train.samples[i].values[feature] <= threshold);
        let split = Node::split(
            feature,
            threshold,
            leaf_from_indices(train, &gt),
            leaf_from_indices(train, &le),
        );
        let mut out = tree.clone();
        let mut i = leaf_id;
        *nth_node_mut(&mut out.root, &mut i).expect("leaf id in range") = split;
        return out;
    }
    tree.clone()
}

fn prune_mutation(tree: &DecisionTree, rng: &mut ChaCha8Rng) -> DecisionTree {
    let mut internal_ids = Vec::new();
    fn collect_internal(node: &Node, id: &mut usize, out: &mut Vec<usize>) {
        let this = *id;
        *id += 1;
        if let Node::Split { left, right, .. } = node {
            out.push(this);
            collect_internal(left, id, out);
            collect_internal(right, id, out);
        }
    }
    let mut id = 0;
    collect_internal(&tree.root, &mut id, &mut internal_ids);
    if internal_ids.is_empty() {
        return tree.clone();
    }
    let target = internal_ids[rng.gen_range(0..internal_ids.len())];
    let mut out = tree.clone();
    let mut i = target;
    let node = nth_node_mut(&mut out.root, &mut i).expect("id in range");
    let mut counts = vec![0u64; tree.num_labels];
    fn merge_counts(node: &Node, counts: &mut Vec<u64>) {
        match node {
            Node::Leaf { distribution, .. } => {
                for (c, &k) in counts.iter_mut().zip(&distribution.counts) {
                    *c += k;
                }
            }
            Node::Split { left, right, .. } => {
                merge_counts(left, counts);
                merge_counts(right, counts);
            }
        }
    }
    merge_counts(node, &mut counts);
    let total: u64 = counts.iter().sum();
    *node = Node::leaf(LabelDistribution::from_counts(counts), total);
    out
}

/// Recomputes every leaf distribution from the training samples routed to
/// it. An empty leaf inherits the distribution of the closest enclosing
/// node that still receives samples, with a zero count.
pub fn refit_leaves(tree: &DecisionTree, train: &LabeledDataset) -> DecisionTree {
    fn refit(node: &mut Node, indices: Vec<usize>, fallback: &LabelDistribution, train: &LabeledDataset) {
        let dist_here = if indices.is_empty() {
            fallback.clone()
        } else {
            let mut counts = vec![0u64; train.schema.num_labels()];
            for &i in &indices {
                counts[train.labels[i]] += 1;
            }
            LabelDistribution::from_counts(counts)
        };
        match node {
            Node::Leaf { distribution, sample_count } => {
                *distribution = dist_here;
                *sample_count = indices.len() as u64;
            }
            Node::Split { feature, threshold, left, right } => {
                let (le, gt): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|&&i| train.samples[i].values[*feature] <= *threshold);
                refit(left, gt, &dist_here, train);
                refit(right, le, &dist_here, train);
            }
        }
    }
    let mut out = tree.clone();
    let uniform = LabelDistribution::from_frequencies(vec![
        1.0 / tree.num_labels as f64;
        tree.num_labels
    ]);
    refit(&mut out.root, (0..train.len()).collect(), &uniform, train);
    out
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_accuracy: f64,
    pub best_fairness: f64,
    pub best_leaf_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub generations: Vec<GenerationLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("generation,best_fitness,mean_fitness,best_accuracy,best_fairness,best_leaf_count\n");
        for g in &self.generations {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                g.generation, g.best_fitness, g.mean_fitness, g.best_accuracy, g.best_fairness, g.best_leaf_count
            ));
        }
        out
    }
}

fn random_grown_tree(
    train: &LabeledDataset,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut counts = vec![0u64; train.schema.num_labels()];
    for &l in &train.labels {
        counts[l] += 1;
    }
    let mut t = DecisionTree::new(
        train.schema.dimension(),
        train.schema.num_labels(),
        Node::leaf(LabelDistribution::from_counts(counts), train.len() as u64),
    );
    for _ in 0..depth {
        t = grow_mutation(&t, train, rng);
    }
    t
}

/// Evolves a population of trees and returns the best individual ever seen
/// plus the per-generation log. Deterministic for a fixed configuration.
pub fn train_fatt(
    train: &LabeledDataset,
    spec: &SimilaritySpec,
    cfg: &GaConfig,
) -> Result<(Individual, TrainingLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset(""));
    }
    spec.validate(&train.schema)?;
    let map = ColumnMap::new(&train.schema);
    let eval_set = fairness_eval_set(train, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Initial population: half bootstrap CARTs with random depth caps,
    // half randomly grown trees.
    let mut trees = Vec::with_capacity(cfg.population_size);
    for i in 0..cfg.population_size {
        if i % 2 == 0 {
            let depth = rng.gen_range(1..=cfg.max_depth_cap);
            let boot: Vec<usize> = (0..train.len()).map(|_| rng.gen_range(0..train.len())).collect();
            let resample = LabeledDataset {
                schema: train.schema.clone(),
                samples: boot.iter().map(|&j| train.samples[j].clone()).collect(),
                labels: boot.iter().map(|&j| train.labels[j]).collect(),
            };
            let params = CartParams {
                criterion: SplitCriterion::Gini,
                max_depth: depth,
                min_samples_leaf: 1,
            };
            trees.push(refit_leaves(&train_cart(&resample, &params)?, train));
        } else {
            let depth = rng.gen_range(0..=cfg.max_depth_cap);
            trees.push(random_grown_tree(train, depth, &mut rng));
        }
    }

    let evaluate = |trees: Vec<DecisionTree>| -> Result<Vec<Individual>> {
        trees
            .into_par_iter()
            .map(|t| fitness(t, train, &eval_set, spec, cfg, &map))
            .collect()
    };

    let mut population = evaluate(trees)?;
    let mut best: Individual = population
        .iter()
        .max_by(|a, b| a.fitness.partial_cmp(&b.fitness).unwrap())
        .unwrap()
        .clone();
    let mut log = TrainingLog::default();

    for generation in 0..cfg.iterations {
        population.sort_by(|a, b| b.fitness.partial_cmp(&a.fitness).unwrap());
        if population[0].fitness > best.fitness {
            best = population[0].clone();
        }
        log.generations.push(GenerationLog {
            generation,
            best_fitness: best.fitness,
            mean_fitness: population.iter().map(|i| i.fitness).sum::<f64>()
                / population.len() as f64,
            best_accuracy: best.accuracy_component,
            best_fairness: best.fairness_component,
            best_leaf_count: best.tree.leaf_count(),
        });

        let mut next = Vec::with_capacity(cfg.population_size);
        for elite in population.iter().take(cfg.elitism_count.min(population.len())) {
            next.push(elite.tree.clone());
        }
        while next.len() < cfg.population_size {
            let p1 = select_roulette(&population, &mut rng);
            let p2 = select_roulette(&population, &mut rng);
            let mut child = if rng.gen::<f64>() < cfg.crossover_probability {
                crossover(&p1.tree, &p2.tree, cfg.max_depth_cap, &mut rng)
            } else {
                p1.tree.clone()
            };
            if rng.gen::<f64>() < cfg.mutation_probability {
                child = mutate(&child, cfg.mutation_mode, train, &mut rng);
            }
            next.push(refit_leaves(&child, train));
        }
        population = evaluate(next)?;
    }

    for ind in &population {
        if ind.fitness > best.fitness {
            best = ind.clone();
        }
    }
    Ok((best, log))
}
