//! Shared generators and brute-force oracles for the randomized suites.
//!
//! The oracles never touch the abstract domain: they enumerate one concrete
//! representative per cell of the piecewise-constant decision structure
//! (threshold-induced cells for numeric columns, category assignments for
//! one-hot groups) and evaluate the forest concretely.

use fairtree::data::{CategoricalGroup, FeatureSchema, NumericFeature, Sample};
use fairtree::domain::{
    from_similarity, Cmp, ColumnMap, ColumnRole, Constraint, NoiseSpec, ReducedAbstractValue,
    SimilaritySpec,
};
use fairtree::tree::{DecisionTree, Forest, LabelDistribution, LabelSet, Node};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_schema(rng: &mut ChaCha8Rng) -> FeatureSchema {
    let n_num = rng.gen_range(1..=3);
    let n_groups = rng.gen_range(0..=2);
    let mut numeric_features = Vec::new();
    for i in 0..n_num {
        numeric_features.push(NumericFeature { name: format!("x{i}"), column: i });
    }
    let mut categorical_groups = Vec::new();
    let mut col = n_num;
    for g in 0..n_groups {
        let k = rng.gen_range(2..=3);
        let categories: Vec<String> = (0..k).map(|c| format!("g{g}c{c}")).collect();
        let columns: Vec<usize> = (col..col + k).collect();
        col += k;
        categorical_groups.push(CategoricalGroup { name: format!("g{g}"), categories, columns });
    }
    let num_labels = rng.gen_range(2..=3);
    FeatureSchema {
        numeric_features,
        categorical_groups,
        label_name: "y".into(),
        label_values: (0..num_labels).map(|l| format!("l{l}")).collect(),
        positive_label: if num_labels == 2 { Some(1) } else { None },
    }
}

pub fn random_sample(schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> Sample {
    let mut values = vec![0.0; schema.dimension()];
    for f in &schema.numeric_features {
        values[f.column] = rng.gen_range(-1.0..1.0);
    }
    for g in &schema.categorical_groups {
        let hot = rng.gen_range(0..g.columns.len());
        values[g.columns[hot]] = 1.0;
    }
    Sample::new(values)
}

fn random_node(
    schema: &FeatureSchema,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    let num_labels = schema.num_labels();
    if depth == 0 || rng.gen::<f64>() < 0.3 {
        let counts: Vec<u64> = (0..num_labels).map(|_| rng.gen_range(0..5)).collect();
        let total: u64 = counts.iter().sum();
        return Node::leaf(LabelDistribution::from_counts(counts), total);
    }
    let d = schema.dimension();
    let feature = rng.gen_range(0..d);
    let is_numeric = feature < schema.numeric_features.len();
    let threshold = if is_numeric {
        rng.gen_range(-1.0..1.0)
    } else {
        // occasionally exercise degenerate one-hot thresholds
        *[0.5, 0.5, 0.5, 0.0, 1.0].get(rng.gen_range(0..5)).unwrap()
    };
    Node::split(
        feature,
        threshold,
        random_node(schema, depth - 1, rng),
        random_node(schema, depth - 1, rng),
    )
}

pub fn random_tree(schema: &FeatureSchema, max_depth: usize, rng: &mut ChaCha8Rng) -> DecisionTree {
    DecisionTree::new(
        schema.dimension(),
        schema.num_labels(),
        random_node(schema, max_depth, rng),
    )
}

pub fn random_forest(schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> Forest {
    let n = rng.gen_range(1..=3);
    Forest::new((0..n).map(|_| random_tree(schema, 3, rng)).collect()).unwrap()
}

pub fn random_spec(schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> SimilaritySpec {
    let numeric_names = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let mut names: Vec<String> = schema
            .numeric_features
            .iter()
            .filter(|_| rng.gen::<f64>() < 0.7)
            .map(|f| f.name.clone())
            .collect();
        if names.is_empty() {
            names.push(schema.numeric_features[0].name.clone());
        }
        names
    };
    let group_names = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let mut names: Vec<String> = schema
            .categorical_groups
            .iter()
            .filter(|_| rng.gen::<f64>() < 0.7)
            .map(|g| g.name.clone())
            .collect();
        if names.is_empty() && !schema.categorical_groups.is_empty() {
            names.push(schema.categorical_groups[0].name.clone());
        }
        names
    };
    let kind = rng.gen_range(0..4);
    match kind {
        0 => SimilaritySpec::Noise { features: numeric_names(rng), tau: rng.gen_range(0.0..0.6) },
        1 if !schema.categorical_groups.is_empty() => {
            SimilaritySpec::Cat { sensitive_groups: group_names(rng) }
        }
        2 if !schema.categorical_groups.is_empty() => SimilaritySpec::NoiseCat {
            features: numeric_names(rng),
            tau: rng.gen_range(0.0..0.6),
            sensitive_groups: group_names(rng),
        },
        3 => SimilaritySpec::ConditionalAttribute {
            attribute: schema.numeric_features[0].name.clone(),
            tau: rng.gen_range(-0.5..0.5),
            below: NoiseSpec { features: numeric_names(rng), tau: rng.gen_range(0.0..0.4) },
            above: NoiseSpec { features: numeric_names(rng), tau: rng.gen_range(0.0..0.4) },
        },
        _ => SimilaritySpec::Noise { features: numeric_names(rng), tau: rng.gen_range(0.0..0.6) },
    }
}

/// All split thresholds of the forest grouped by encoded column.
fn thresholds_by_column(forest: &Forest, dim: usize) -> Vec<Vec<f64>> {
    fn walk(node: &Node, out: &mut Vec<Vec<f64>>) {
        if let Node::Split { feature, threshold, left, right } = node {
            out[*feature].push(*threshold);
            walk(left, out);
            walk(right, out);
        }
    }
    let mut out = vec![Vec::new(); dim];
    for t in &forest.trees {
        walk(&t.root, &mut out);
    }
    for ts in &mut out {
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
    }
    out
}

/// Candidate coordinates covering every threshold-induced cell that meets
/// the interval of numeric feature `fi` in `region`.
fn coordinate_candidates(region: &ReducedAbstractValue, fi: usize, thresholds: &[f64]) -> Vec<f64> {
    let iv = &region.intervals[fi];
    let clamp = 1e6;
    let lo_rep = if iv.lo.is_finite() {
        if iv.lo_open { f64::next_up(iv.lo) } else { iv.lo }
    } else {
        -clamp
    };
    let hi_rep = if iv.hi.is_finite() {
        if iv.hi_open { f64::next_down(iv.hi) } else { iv.hi }
    } else {
        clamp
    };
    let mut out = vec![lo_rep, hi_rep];
    for &t in thresholds {
        for c in [t, f64::next_up(t)] {
            if iv.contains(c) {
                out.push(c);
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out.retain(|&c| iv.contains(c));
    out
}

/// Every sample of γ(region) up to cell equivalence: the cartesian product
/// of per-feature cell representatives and admissible category choices.
pub fn enumerate_region(
    region: &ReducedAbstractValue,
    forest: &Forest,
    map: &ColumnMap,
) -> Vec<Sample> {
    let dim = map.dimension();
    let thresholds = thresholds_by_column(forest, dim);
    let n_num = region.intervals.len();

    let mut numeric_choices: Vec<Vec<f64>> = Vec::with_capacity(n_num);
    for fi in 0..n_num {
        let col = map.numeric_columns[fi];
        let cands = coordinate_candidates(region, fi, &thresholds[col]);
        if cands.is_empty() {
            return Vec::new();
        }
        numeric_choices.push(cands);
    }
    let mut group_choices: Vec<Vec<usize>> = Vec::with_capacity(region.admissible.len());
    for cats in &region.admissible {
        let choices: Vec<usize> = cats.iter().collect();
        if choices.is_empty() {
            return Vec::new();
        }
        group_choices.push(choices);
    }

    let mut out = Vec::new();
    let mut num_idx = vec![0usize; n_num];
    loop {
        let mut grp_idx = vec![0usize; group_choices.len()];
        loop {
            let mut values = vec![0.0; dim];
            for fi in 0..n_num {
                values[map.numeric_columns[fi]] = numeric_choices[fi][num_idx[fi]];
            }
            for (col, role) in map.roles.iter().enumerate() {
                if let ColumnRole::OneHot { group, category } = role {
                    if group_choices[*group][grp_idx[*group]] == *category {
                        values[col] = 1.0;
                    }
                }
            }
            out.push(Sample::new(values));
            // advance the category odometer
            let mut g = 0;
            loop {
                if g == grp_idx.len() {
                    break;
                }
                grp_idx[g] += 1;
                if grp_idx[g] < group_choices[g].len() {
                    break;
                }
                grp_idx[g] = 0;
                g += 1;
            }
            if g == grp_idx.len() {
                break;
            }
        }
        // advance the numeric odometer
        let mut f = 0;
        loop {
            if f == num_idx.len() {
                return out;
            }
            num_idx[f] += 1;
            if num_idx[f] < numeric_choices[f].len() {
                break;
            }
            num_idx[f] = 0;
            f += 1;
        }
    }
}

/// Brute-force stability: true iff every enumerated sample of every region
/// votes exactly `expected`. Also returns a disagreeing sample if any.
pub fn oracle_stable(
    forest: &Forest,
    regions: &[ReducedAbstractValue],
    expected: &LabelSet,
    map: &ColumnMap,
) -> (bool, Option<Sample>) {
    for region in regions {
        for s in enumerate_region(region, forest, map) {
            if forest.predict(&s).unwrap() != *expected {
                return (false, Some(s));
            }
        }
    }
    (true, None)
}

/// Brute-force per-sample fairness using the compiled similarity regions.
#[allow(dead_code)] // used by the oracle suite, not every consumer of this module
pub fn oracle_fair(
    forest: &Forest,
    x: &Sample,
    spec: &SimilaritySpec,
    schema: &FeatureSchema,
    map: &ColumnMap,
) -> bool {
    let regions = from_similarity(x, spec, schema, map).unwrap();
    let expected = forest.predict(x).unwrap();
    oracle_stable(forest, &regions, &expected, map).0
}

/// Independent satisfiability check of a constraint set against γ(v):
/// per-column candidate enumeration, no meet operations involved.
#[allow(dead_code)] // used by the oracle suite, not every consumer of this module
pub fn oracle_satisfies(
    v: &ReducedAbstractValue,
    constraints: &[Constraint],
    map: &ColumnMap,
) -> bool {
    // numeric features: some candidate coordinate in the interval satisfies
    // every constraint on that column
    for (fi, iv) in v.intervals.iter().enumerate() {
        let col = map.numeric_columns[fi];
        let on_col: Vec<&Constraint> =
            constraints.iter().filter(|c| c.column == col).collect();
        let mut cands = vec![
            if iv.lo.is_finite() {
                if iv.lo_open { f64::next_up(iv.lo) } else { iv.lo }
            } else {
                -1e6
            },
            if iv.hi.is_finite() {
                if iv.hi_open { f64::next_down(iv.hi) } else { iv.hi }
            } else {
                1e6
            },
        ];
        for c in &on_col {
            for cand in [c.threshold, f64::next_up(c.threshold), f64::next_down(c.threshold)] {
                cands.push(cand);
            }
        }
        let ok = cands.iter().any(|&cand| {
            iv.contains(cand)
                && on_col.iter().all(|c| match c.op {
                    Cmp::Le => cand <= c.threshold,
                    Cmp::Gt => cand > c.threshold,
                })
        });
        if !ok {
            return false;
        }
    }
    // groups: some admissible category satisfies every constraint on the
    // group's one-hot columns
    for (gi, cats) in v.admissible.iter().enumerate() {
        let cols: Vec<(usize, usize)> = map
            .roles
            .iter()
            .enumerate()
            .filter_map(|(col, role)| match role {
                ColumnRole::OneHot { group, category } if *group == gi => Some((col, *category)),
                _ => None,
            })
            .collect();
        let ok = cats.iter().any(|chosen| {
            constraints
                .iter()
                .filter(|c| cols.iter().any(|(col, _)| *col == c.column))
                .all(|c| {
                    let cat_of_col =
                        cols.iter().find(|(col, _)| *col == c.column).unwrap().1;
                    let bit = if cat_of_col == chosen { 1.0 } else { 0.0 };
                    match c.op {
                        Cmp::Le => bit <= c.threshold,
                        Cmp::Gt => bit > c.threshold,
                    }
                })
        });
        if !ok {
            return false;
        }
    }
    true
}

/// Random non-bottom reduced value over the schema's columns.
pub fn random_value(map: &ColumnMap, rng: &mut ChaCha8Rng) -> ReducedAbstractValue {
    use fairtree::domain::{CatSet, Interval};
    let intervals = (0..map.numeric_columns.len())
        .map(|_| {
            let a = rng.gen_range(-1.0..1.0);
            let b = rng.gen_range(-1.0..1.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            match rng.gen_range(0..4) {
                0 => Interval::point(lo),
                1 if lo < hi => Interval::greater_than(lo).intersect(&Interval::at_most(hi)).unwrap(),
                2 => Interval::at_most(hi),
                _ => Interval::closed(lo, hi),
            }
        })
        .collect();
    let admissible = map
        .group_sizes
        .iter()
        .map(|&k| {
            let mut set = CatSet::full(k);
            for c in 0..k {
                if set.len() > 1 && rng.gen::<f64>() < 0.3 {
                    set = set.remove(c);
                }
            }
            set
        })
        .collect();
    ReducedAbstractValue { intervals, admissible }
}

/// Random constraint set over all encoded columns; numeric thresholds near
/// the generated interval range, one-hot thresholds mostly 0.5.
pub fn random_constraints(map: &ColumnMap, rng: &mut ChaCha8Rng) -> Vec<Constraint> {
    let n = rng.gen_range(0..=6);
    (0..n)
        .map(|_| {
            let col = rng.gen_range(0..map.dimension());
            let threshold = match map.roles[col] {
                ColumnRole::Numeric { .. } => rng.gen_range(-1.2..1.2),
                ColumnRole::OneHot { .. } => *[0.5, 0.5, 0.0, 1.0].get(rng.gen_range(0..4)).unwrap(),
            };
            if rng.gen::<bool>() {
                Constraint::le(col, threshold)
            } else {
                Constraint::gt(col, threshold)
            }
        })
        .collect()
}
