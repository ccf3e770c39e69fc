//! Stability and fairness verification of trees and forests.
//!
//! Per tree, the reachable leaves under an abstract value are found by
//! refining the value through the split constraints on each root-leaf
//! path. A forest is checked by exploring joint per-tree leaf choices as a
//! virtual stacked tree, best-first, looking for a completed choice whose
//! vote outcome differs from the expected labels. The stacked tree is
//! never materialized.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSchema, LabeledDataset, Sample};
use crate::domain::{from_similarity, ColumnMap, Constraint, ReducedAbstractValue, SimilaritySpec};
use crate::error::Result;
use crate::tree::{argmax_votes, DecisionTree, Forest, LabelSet, Model, Node};

/// The minimal per-column constraint set making one leaf reachable,
/// together with that leaf's argmax labels.
#[derive(Debug, Clone)]
pub struct LeafConstraintSet {
    pub labels: LabelSet,
    pub constraints: Vec<Constraint>,
}

/// Collects the root-leaf split constraints for every leaf, keeping only
/// the tightest constraint per column and direction (e.g. `x <= 2` wins
/// over a later `x <= 5`).
pub fn leaf_constraints(tree: &DecisionTree) -> Vec<LeafConstraintSet> {
    // per column: tightest upper (<=, min threshold) and lower (>, max threshold)
    type Bounds = Vec<(Option<f64>, Option<f64>)>;
    fn walk(node: &Node, bounds: &mut Bounds, out: &mut Vec<LeafConstraintSet>) {
        match node {
            Node::Leaf { distribution, .. } => {
                let mut constraints = Vec::new();
                for (col, (le, gt)) in bounds.iter().enumerate() {
                    if let Some(t) = gt {
                        constraints.push(Constraint::gt(col, *t));
                    }
                    if let Some(t) = le {
                        constraints.push(Constraint::le(col, *t));
                    }
                }
                out.push(LeafConstraintSet { labels: distribution.argmax(), constraints });
            }
            Node::Split { feature, threshold, left, right } => {
                // right branch: condition true, x <= threshold
                let saved = bounds[*feature];
                bounds[*feature].0 = Some(saved.0.map_or(*threshold, |t| t.min(*threshold)));
                walk(right, bounds, out);
                bounds[*feature] = saved;
                // left branch: condition false, x > threshold
                bounds[*feature].1 = Some(saved.1.map_or(*threshold, |t| t.max(*threshold)));
                walk(left, bounds, out);
                bounds[*feature] = saved;
            }
        }
    }
    let mut bounds: Bounds = vec![(None, None); tree.num_features];
    let mut out = Vec::new();
    walk(&tree.root, &mut bounds, &mut out);
    out
}

/// Over-approximation of the labels a tree can assign within `v`, plus the
/// reachable leaves with their refined abstract values. Exact on this
/// domain: every returned leaf is concretely reachable from some sample in
/// the concretization of `v`.
pub fn analyze_tree(
    tree: &DecisionTree,
    v: &ReducedAbstractValue,
    map: &ColumnMap,
) -> (LabelSet, Vec<(LabelSet, ReducedAbstractValue)>) {
    let mut leaves = Vec::new();
    reachable_leaves(&tree.root, v.clone(), map, &mut leaves);
    let labels = leaves
        .iter()
        .map(|(ls, _)| ls.clone())
        .reduce(|a, b| a.union(&b))
        .expect("a non-bottom value reaches at least one leaf");
    (labels, leaves)
}

fn reachable_leaves(
    node: &Node,
    v: ReducedAbstractValue,
    map: &ColumnMap,
    out: &mut Vec<(LabelSet, ReducedAbstractValue)>,
) {
    match node {
        Node::Leaf { distribution, .. } => out.push((distribution.argmax(), v)),
        Node::Split { feature, threshold, left, right } => {
            if let Some(refined) = v.meet_constraint(&Constraint::le(*feature, *threshold), map) {
                reachable_leaves(right, refined, map, out);
            }
            if let Some(refined) = v.meet_constraint(&Constraint::gt(*feature, *threshold), map) {
                reachable_leaves(left, refined, map, out);
            }
        }
    }
}

/// Verification budget and search knobs.
#[derive(Debug, Clone, Default)]
pub struct AnalysisConfig {
    pub timeout: Option<Duration>,
}

impl AnalysisConfig {
    pub fn with_timeout(timeout: Duration) -> Self {
        AnalysisConfig { timeout: Some(timeout) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Stable,
    Unstable,
    Unknown,
}

impl std::fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerdictStatus::Stable => write!(f, "stable"),
            VerdictStatus::Unstable => write!(f, "unstable"),
            VerdictStatus::Unknown => write!(f, "unknown"),
        }
    }
}

/// Outcome of one stability/fairness query.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub status: VerdictStatus,
    /// Exact labels when stable; a sound over-approximation when unknown.
    pub labels: LabelSet,
    /// Two samples in the analyzed setting with provably different forest
    /// outputs; present iff unstable.
    pub counterexample: Option<(Sample, Sample)>,
    pub elapsed: Duration,
}

/// Max-heap entry for the joint leaf-choice search.
struct SearchState {
    priority: i64,
    next_tree: usize,
    tally: Vec<u64>,
    value: ReducedAbstractValue,
}

impl PartialEq for SearchState {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for SearchState {}
impl PartialOrd for SearchState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SearchState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .cmp(&other.priority)
            .then_with(|| other.next_tree.cmp(&self.next_tree))
    }
}

/// Optimistic disagreement slack of a partial assignment: how far the vote
/// tally is from producing an outcome different from `expected`, counting
/// the `remaining` trees as free votes. Negative means the assignment can
/// only ever vote `expected` and may be pruned.
fn disagreement_slack(tally: &[u64], remaining: u64, unit: u64, expected: &LabelSet) -> i64 {
    let budget = (remaining * unit) as i64;
    let mut slack = i64::MIN;
    // a non-expected label could join the argmax
    for y in 0..tally.len() {
        if expected.contains(y) {
            continue;
        }
        let rival = tally
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != y)
            .map(|(_, &v)| v)
            .max()
            .unwrap_or(0) as i64;
        slack = slack.max(tally[y] as i64 + budget - rival);
    }
    // an expected label could drop out of the argmax
    for &e in expected.labels() {
        let rival = tally
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != e)
            .map(|(_, &v)| v)
            .max()
            .unwrap_or(0) as i64;
        // strict: rival + budget must exceed tally[e]
        slack = slack.max(rival + budget - tally[e] as i64 - 1);
    }
    slack
}

/// Checks that a forest assigns exactly `expected` to every sample of
/// every region. Regions are analyzed independently; the overall verdict
/// is stable only if each region is.
pub fn analyze_forest(
    forest: &Forest,
    regions: &[ReducedAbstractValue],
    expected: &LabelSet,
    query: &Sample,
    cfg: &AnalysisConfig,
    map: &ColumnMap,
) -> Verdict {
    let start = Instant::now();
    let unit = forest.vote_unit();
    let n_trees = forest.trees.len();
    let num_labels = forest.num_labels();
    let mut overapprox = expected.clone();

    for region in regions {
        // sound superset of the labels any region sample can receive:
        // only voted-for labels can win
        for t in &forest.trees {
            let (labels, _) = analyze_tree(t, region, map);
            overapprox = overapprox.union(&labels);
        }

        let mut heap = BinaryHeap::new();
        let root_tally = vec![0u64; num_labels];
        heap.push(SearchState {
            priority: disagreement_slack(&root_tally, n_trees as u64, unit, expected),
            next_tree: 0,
            tally: root_tally,
            value: region.clone(),
        });

        while let Some(state) = heap.pop() {
            if let Some(t) = cfg.timeout {
                if start.elapsed() >= t {
                    return Verdict {
                        status: VerdictStatus::Unknown,
                        labels: overapprox,
                        counterexample: None,
                        elapsed: start.elapsed(),
                    };
                }
            }
            if state.next_tree == n_trees {
                let outcome = argmax_votes(&state.tally);
                if outcome != *expected {
                    let witness = state.value.sample_witness(map);
                    return Verdict {
                        status: VerdictStatus::Unstable,
                        labels: outcome.union(expected),
                        counterexample: Some((query.clone(), witness)),
                        elapsed: start.elapsed(),
                    };
                }
                continue;
            }
            let tree = &forest.trees[state.next_tree];
            let mut leaves = Vec::new();
            reachable_leaves(&tree.root, state.value.clone(), map, &mut leaves);
            let remaining = (n_trees - state.next_tree - 1) as u64;
            for (labels, refined) in leaves {
                let mut tally = state.tally.clone();
                let share = unit / labels.len() as u64;
                for &l in labels.labels() {
                    tally[l] += share;
                }
                let slack = disagreement_slack(&tally, remaining, unit, expected);
                if slack < 0 {
                    // this joint choice can only vote `expected`
                    continue;
                }
                if remaining == 0 {
                    // goal check at generation: leaves are produced in
                    // condition-true-first order, so among equally refined
                    // assignments the earliest disagreeing one wins
                    let outcome = argmax_votes(&tally);
                    if outcome != *expected {
                        let witness = refined.sample_witness(map);
                        return Verdict {
                            status: VerdictStatus::Unstable,
                            labels: outcome.union(expected),
                            counterexample: Some((query.clone(), witness)),
                            elapsed: start.elapsed(),
                        };
                    }
                    continue;
                }
                heap.push(SearchState {
                    priority: slack,
                    next_tree: state.next_tree + 1,
                    tally,
                    value: refined,
                });
            }
        }
    }

    Verdict {
        status: VerdictStatus::Stable,
        labels: expected.clone(),
        counterexample: None,
        elapsed: start.elapsed(),
    }
}

/// Stability of a model on the perturbation regions of `x`: the model must
/// output exactly its prediction on `x` for every sample of every region.
pub fn is_stable(
    model: &Model,
    x: &Sample,
    regions: &[ReducedAbstractValue],
    cfg: &AnalysisConfig,
    map: &ColumnMap,
) -> Result<Verdict> {
    let forest = model.as_forest();
    let expected = forest.predict(x)?;
    Ok(analyze_forest(&forest, regions, &expected, x, cfg, map))
}

/// Individual fairness of a model on `x`: stability on the region of
/// individuals similar to `x`.
pub fn is_fair(
    model: &Model,
    x: &Sample,
    spec: &SimilaritySpec,
    schema: &FeatureSchema,
    cfg: &AnalysisConfig,
    map: &ColumnMap,
) -> Result<Verdict> {
    let regions = from_similarity(x, spec, schema, map)?;
    is_stable(model, x, &regions, cfg, map)
}

/// Robustness: stable and correctly classified as `{y}`.
pub fn is_robust(
    model: &Model,
    x: &Sample,
    y: usize,
    regions: &[ReducedAbstractValue],
    cfg: &AnalysisConfig,
    map: &ColumnMap,
) -> Result<bool> {
    let verdict = is_stable(model, x, regions, cfg, map)?;
    Ok(verdict.status == VerdictStatus::Stable && verdict.labels == LabelSet::singleton(y))
}

/// Aggregate fairness over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    /// Fraction of samples with a stable (fair) verdict. Timeouts count as
    /// not fair and are reported in `unknown`.
    pub fairness: f64,
    pub stable: usize,
    pub unstable: usize,
    pub unknown: usize,
    pub mean_time_ms: f64,
}

/// Ratio of test samples on which the model is verified fair. Per-sample
/// queries run in parallel; the result is order-independent.
pub fn fairness_metric(
    model: &Model,
    test: &LabeledDataset,
    spec: &SimilaritySpec,
    cfg: &AnalysisConfig,
    map: &ColumnMap,
) -> Result<FairnessSummary> {
    let verdicts = per_sample_verdicts(model, test, spec, cfg, map)?;
    Ok(summarize(&verdicts))
}

/// One fairness verdict per test sample, in dataset order.
pub fn per_sample_verdicts(
    model: &Model,
    test: &LabeledDataset,
    spec: &SimilaritySpec,
    cfg: &AnalysisConfig,
    map: &ColumnMap,
) -> Result<Vec<Verdict>> {
    test.samples
        .par_iter()
        .map(|x| is_fair(model, x, spec, &test.schema, cfg, map))
        .collect()
}

pub fn summarize(verdicts: &[Verdict]) -> FairnessSummary {
    let stable = verdicts.iter().filter(|v| v.status == VerdictStatus::Stable).count();
    let unstable = verdicts.iter().filter(|v| v.status == VerdictStatus::Unstable).count();
    let unknown = verdicts.len() - stable - unstable;
    let total_ms: f64 = verdicts.iter().map(|v| v.elapsed.as_secs_f64() * 1e3).sum();
    FairnessSummary {
        fairness: stable as f64 / verdicts.len().max(1) as f64,
        stable,
        unstable,
        unknown,
        mean_time_ms: total_ms / verdicts.len().max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CategoricalGroup, FeatureSchema};
    use crate::domain::Cmp;
    use crate::tree::{LabelDistribution, Node};

    fn color_schema() -> FeatureSchema {
        FeatureSchema {
            numeric_features: vec![],
            categorical_groups: vec![CategoricalGroup {
                name: "color".into(),
                categories: vec!["white".into(), "black".into()],
                columns: vec![0, 1],
            }],
            label_name: "y".into(),
            label_values: vec!["l1".into(), "l2".into()],
            positive_label: None,
        }
    }

    fn color_forest() -> Forest {
        let l1 = || LabelDistribution::from_counts(vec![10, 0]);
        let l2 = || LabelDistribution::from_counts(vec![0, 10]);
        let t1 = DecisionTree::new(2, 2, Node::split(0, 0.5, Node::leaf(l1(), 10), Node::leaf(l2(), 10)));
        let t2 = DecisionTree::new(2, 2, Node::split(1, 0.5, Node::leaf(l2(), 10), Node::leaf(l1(), 10)));
        Forest::new(vec![t1, t2]).unwrap()
    }

    #[test]
    fn leaf_constraints_of_the_color_tree() {
        let f = color_forest();
        let cs = leaf_constraints(&f.trees[0]);
        assert_eq!(cs.len(), 2);
        // right leaf first (condition true, white <= 0.5) -> l2
        assert_eq!(cs[0].labels, LabelSet::singleton(1));
        assert_eq!(cs[0].constraints, vec![Constraint::le(0, 0.5)]);
        assert_eq!(cs[1].labels, LabelSet::singleton(0));
        assert_eq!(cs[1].constraints, vec![Constraint::gt(0, 0.5)]);
    }

    #[test]
    fn single_leaf_tree_has_one_empty_constraint_set() {
        let t = DecisionTree::new(3, 2, Node::leaf(LabelDistribution::from_counts(vec![1, 0]), 1));
        let cs = leaf_constraints(&t);
        assert_eq!(cs.len(), 1);
        assert!(cs[0].constraints.is_empty());
    }

    #[test]
    fn redundant_constraints_are_tightened() {
        // x <= 5 then x <= 2 keeps only x <= 2
        let inner = Node::split(
            0,
            2.0,
            Node::leaf(LabelDistribution::from_counts(vec![1, 0]), 1),
            Node::leaf(LabelDistribution::from_counts(vec![0, 1]), 1),
        );
        let t = DecisionTree::new(
            1,
            2,
            Node::split(0, 5.0, Node::leaf(LabelDistribution::from_counts(vec![1, 0]), 1), inner),
        );
        let cs = leaf_constraints(&t);
        let deepest = cs
            .iter()
            .find(|c| c.constraints.iter().any(|k| k.op == Cmp::Le && k.threshold == 2.0))
            .unwrap();
        let le: Vec<_> = deepest.constraints.iter().filter(|k| k.op == Cmp::Le).collect();
        assert_eq!(le.len(), 1);
        assert_eq!(le[0].threshold, 2.0);
    }

    #[test]
    fn unreduced_box_is_unstable_but_reduced_region_is_stable() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let forest = color_forest();
        let white = Sample::new(vec![1.0, 0.0]);
        let expected = forest.predict(&white).unwrap();
        assert_eq!(expected, LabelSet::singleton(0));

        // plain [0,1]^2 box, no one-hot reduction: mimic it with a
        // one-feature-per-column schema
        let plain_schema = FeatureSchema {
            numeric_features: vec![
                crate::data::NumericFeature { name: "white".into(), column: 0 },
                crate::data::NumericFeature { name: "black".into(), column: 1 },
            ],
            categorical_groups: vec![],
            label_name: "y".into(),
            label_values: vec!["l1".into(), "l2".into()],
            positive_label: None,
        };
        let plain_map = ColumnMap::new(&plain_schema);
        let unit_box = ReducedAbstractValue {
            intervals: vec![crate::domain::Interval::closed(0.0, 1.0); 2],
            admissible: vec![],
        };
        let verdict = analyze_forest(
            &forest,
            &[unit_box],
            &expected,
            &white,
            &AnalysisConfig::default(),
            &plain_map,
        );
        assert_eq!(verdict.status, VerdictStatus::Unstable);
        // the spurious counterexample: a point near the invalid corner
        // (0,0) where the vote ties, even though no individual lives there
        let (a, b) = verdict.counterexample.unwrap();
        assert_ne!(forest.predict(&a).unwrap(), forest.predict(&b).unwrap());
        assert_eq!(forest.predict(&b).unwrap(), LabelSet::new(vec![0, 1]));
        assert!(b.values[0] <= 0.5 && b.values[1] <= 0.5, "witness {:?}", b);

        // with one-hot reduction each admissible category yields a stable
        // singleton verdict; the tie region is gone
        let white_region = ReducedAbstractValue::from_sample(&white, &map);
        let v = analyze_forest(
            &forest,
            std::slice::from_ref(&white_region),
            &expected,
            &white,
            &AnalysisConfig::default(),
            &map,
        );
        assert_eq!(v.status, VerdictStatus::Stable);
        assert_eq!(v.labels, LabelSet::singleton(0));
        let black = Sample::new(vec![0.0, 1.0]);
        let black_region = ReducedAbstractValue::from_sample(&black, &map);
        let v = analyze_forest(
            &forest,
            std::slice::from_ref(&black_region),
            &forest.predict(&black).unwrap(),
            &black,
            &AnalysisConfig::default(),
            &map,
        );
        assert_eq!(v.status, VerdictStatus::Stable);
        assert_eq!(v.labels, LabelSet::singleton(1));
    }

    #[test]
    fn cat_similarity_finds_only_real_counterexamples() {
        // the color forest maps white to l1 and black to l2, so under the
        // cat similarity it is genuinely unstable; the reduction's job is
        // that the counterexample is a valid individual, never the corner
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let forest = color_forest();
        let spec = SimilaritySpec::Cat { sensitive_groups: vec!["color".into()] };
        for x in [Sample::new(vec![1.0, 0.0]), Sample::new(vec![0.0, 1.0])] {
            let v = is_fair(
                &Model::Forest(forest.clone()),
                &x,
                &spec,
                &schema,
                &AnalysisConfig::default(),
                &map,
            )
            .unwrap();
            assert_eq!(v.status, VerdictStatus::Unstable);
            let (a, b) = v.counterexample.unwrap();
            assert_ne!(forest.predict(&a).unwrap(), forest.predict(&b).unwrap());
            // both members are valid one-hot individuals
            for s in [&a, &b] {
                assert_eq!(s.values[0] + s.values[1], 1.0);
            }
        }
    }

    #[test]
    fn constant_classifier_is_always_stable() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let t = DecisionTree::new(2, 2, Node::leaf(LabelDistribution::from_counts(vec![5, 1]), 6));
        let model = Model::Tree(t);
        let x = Sample::new(vec![1.0, 0.0]);
        let spec = SimilaritySpec::Cat { sensitive_groups: vec!["color".into()] };
        let v = is_fair(&model, &x, &spec, &schema, &AnalysisConfig::default(), &map).unwrap();
        assert_eq!(v.status, VerdictStatus::Stable);
    }

    #[test]
    fn point_region_is_always_stable() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let forest = Model::Forest(color_forest());
        let x = Sample::new(vec![0.0, 1.0]);
        let region = ReducedAbstractValue::from_sample(&x, &map);
        let v = is_stable(&forest, &x, &[region], &AnalysisConfig::default(), &map).unwrap();
        assert_eq!(v.status, VerdictStatus::Stable);
    }

    #[test]
    fn robustness_requires_correct_classification() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let t = DecisionTree::new(2, 2, Node::leaf(LabelDistribution::from_counts(vec![5, 1]), 6));
        let model = Model::Tree(t);
        let x = Sample::new(vec![1.0, 0.0]);
        let region = ReducedAbstractValue::from_sample(&x, &map);
        let cfg = AnalysisConfig::default();
        // constant classifier predicts label 0: robust for y=0, not for y=1
        assert!(is_robust(&model, &x, 0, std::slice::from_ref(&region), &cfg, &map).unwrap());
        assert!(!is_robust(&model, &x, 1, std::slice::from_ref(&region), &cfg, &map).unwrap());
    }

    #[test]
    fn fairness_metric_on_the_color_forest() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let model = Model::Forest(color_forest());
        let test = LabeledDataset {
            schema: schema.clone(),
            samples: vec![
                Sample::new(vec![1.0, 0.0]),
                Sample::new(vec![0.0, 1.0]),
                Sample::new(vec![1.0, 0.0]),
                Sample::new(vec![0.0, 1.0]),
            ],
            labels: vec![0, 0, 0, 0],
        };
        // color decides the label, so freeing color makes no one fair
        let spec = SimilaritySpec::Cat { sensitive_groups: vec!["color".into()] };
        let summary =
            fairness_metric(&model, &test, &spec, &AnalysisConfig::default(), &map).unwrap();
        assert_eq!(summary.fairness, 0.0);
        assert_eq!(summary.stable, 0);
        assert_eq!(summary.unstable, 4);

        // a constant tree is fair on the same inputs
        let constant = Model::Tree(DecisionTree::new(
            2,
            2,
            Node::leaf(LabelDistribution::from_counts(vec![4, 0]), 4),
        ));
        let summary =
            fairness_metric(&constant, &test, &spec, &AnalysisConfig::default(), &map).unwrap();
        assert_eq!(summary.fairness, 1.0);
        assert_eq!(summary.stable, 4);
    }

    #[test]
    fn timeout_yields_unknown_with_superset_labels() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let forest = color_forest();
        let x = Sample::new(vec![1.0, 0.0]);
        let expected = forest.predict(&x).unwrap();
        let region = ReducedAbstractValue::top(&map);
        let cfg = AnalysisConfig::with_timeout(Duration::ZERO);
        let v = analyze_forest(&forest, &[region], &expected, &x, &cfg, &map);
        // the zero timeout fires on the first check
        assert_eq!(v.status, VerdictStatus::Unknown);
        for &l in expected.labels() {
            assert!(v.labels.contains(l));
        }
    }
}
