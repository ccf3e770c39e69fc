//! Decision tree and forest model: univariate hard splits, leaf label
//! distributions, set-valued prediction and majority voting, plus the JSON
//! interchange format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSchema, Sample};
use crate::error::{Error, Result};

/// A nonempty, sorted set of label indexes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet(Vec<usize>);

impl LabelSet {
    pub fn new(mut labels: Vec<usize>) -> Self {
        assert!(!labels.is_empty(), "label set must be nonempty");
        labels.sort_unstable();
        labels.dedup();
        LabelSet(labels)
    }

    pub fn singleton(label: usize) -> Self {
        LabelSet(vec![label])
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_singleton(&self) -> bool {
        self.0.len() == 1
    }

    pub fn contains(&self, label: usize) -> bool {
        self.0.binary_search(&label).is_ok()
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        LabelSet::new(v)
    }
}

impl std::fmt::Display for LabelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

/// Frequency distribution of labels stored at a leaf, together with the
/// raw counts it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
}

impl LabelDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let frequencies = if total == 0 {
            // empty leaf: flagged by count 0, carries the uniform distribution
            vec![1.0 / counts.len() as f64; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        LabelDistribution { counts, frequencies }
    }

    pub fn from_frequencies(frequencies: Vec<f64>) -> Self {
        LabelDistribution { counts: vec![0; frequencies.len()], frequencies }
    }

    pub fn num_labels(&self) -> usize {
        self.frequencies.len()
    }

    /// Labels with maximal frequency; ties yield a multi-label set.
    pub fn argmax(&self) -> LabelSet {
        // prefer exact integer counts when available
        if self.counts.iter().any(|&c| c > 0) {
            let max = *self.counts.iter().max().unwrap();
            return LabelSet::new(
                self.counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c == max)
                    .map(|(i, _)| i)
                    .collect(),
            );
        }
        let max = self.frequencies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        LabelSet::new(
            self.frequencies
                .iter()
                .enumerate()
                .filter(|(_, &f)| f == max)
                .map(|(i, _)| i)
                .collect(),
        )
    }
}

/// A tree node. Split semantics: the condition is `x[feature] <= threshold`;
/// `left` is followed when the condition is false, `right` when it is true.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        distribution: LabelDistribution,
        sample_count: u64,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Followed when `x[feature] > threshold`.
        left: std::boxed::Box<Node>,
        /// Followed when `x[feature] <= threshold`.
        right: std::boxed::Box<Node>,
    },
}

impl Node {
    pub fn leaf(distribution: LabelDistribution, sample_count: u64) -> Node {
        Node::Leaf { distribution, sample_count }
    }

    pub fn split(feature: usize, threshold: f64, left: Node, right: Node) -> Node {
        Node::Split {
            feature,
            threshold,
            left: std::boxed::Box::new(left),
            right: std::boxed::Box::new(right),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A classification tree over `num_features` encoded columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub num_features: usize,
    pub num_labels: usize,
    pub root: Node,
}

impl DecisionTree {
    pub fn new(num_features: usize, num_labels: usize, root: Node) -> Self {
        DecisionTree { num_features, num_labels, root }
    }

    /// Routes `x` to a leaf and returns the argmax label set of its
    /// distribution.
    pub fn predict(&self, x: &Sample) -> Result<LabelSet> {
        if x.values.len() != self.num_features {
            return Err(Error::DimensionMismatch {
                expected: self.num_features,
                got: x.values.len(),
            });
        }
        Ok(self.leaf_for(x).argmax())
    }

    /// The leaf distribution `x` routes to.
    pub fn leaf_for(&self, x: &Sample) -> &LabelDistribution {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { distribution, .. } => return distribution,
                Node::Split { feature, threshold, left, right } => {
                    node = if x.values[*feature] <= *threshold { right } else { left };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Longest root-leaf path, in edges.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Smallest per-leaf sample count over non-empty leaves, if any. Empty
    /// leaves (count 0) carry no training mass and are skipped.
    pub fn min_leaf_samples(&self) -> Option<u64> {
        fn walk(node: &Node, acc: &mut Option<u64>) {
            match node {
                Node::Leaf { sample_count: 0, .. } => {}
                Node::Leaf { sample_count, .. } => {
                    *acc = Some(acc.map_or(*sample_count, |m| m.min(*sample_count)));
                }
                Node::Split { left, right, .. } => {
                    walk(left, acc);
                    walk(right, acc);
                }
            }
        }
        let mut acc = None;
        walk(&self.root, &mut acc);
        acc
    }
}

/// A majority-voting ensemble of decision trees.
///
/// A tree whose argmax set has `m` labels contributes `1/m` of a vote to
/// each of them, so voting stays permutation-invariant and reduces to plain
/// majority when every tree is decisive. Votes are tallied in exact integer
/// arithmetic (scaled by `lcm(1..=num_labels)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn new(trees: Vec<DecisionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParameter("forest needs at least one tree".into()));
        }
        let (d, l) = (trees[0].num_features, trees[0].num_labels);
        if trees.iter().any(|t| t.num_features != d || t.num_labels != l) {
            return Err(Error::InvalidParameter(
                "all trees of a forest must share dimensionality and label set".into(),
            ));
        }
        Ok(Forest { trees })
    }

    pub fn num_features(&self) -> usize {
        self.trees[0].num_features
    }

    pub fn num_labels(&self) -> usize {
        self.trees[0].num_labels
    }

    /// Scaled unit of one full tree vote.
    pub fn vote_unit(&self) -> u64 {
        lcm_up_to(self.num_labels() as u64)
    }

    pub fn predict(&self, x: &Sample) -> Result<LabelSet> {
        let mut tally = vec![0u64; self.num_labels()];
        let unit = self.vote_unit();
        for t in &self.trees {
            let ls = t.predict(x)?;
            let share = unit / ls.len() as u64;
            for &l in ls.labels() {
                tally[l] += share;
            }
        }
        Ok(argmax_votes(&tally))
    }

    pub fn leaf_count(&self) -> usize {
        self.trees.iter().map(|t| t.leaf_count()).sum()
    }
}

/// Labels with the maximal vote tally.
pub fn argmax_votes(tally: &[u64]) -> LabelSet {
    let max = *tally.iter().max().expect("nonempty tally");
    LabelSet::new(
        tally
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == max)
            .map(|(i, _)| i)
            .collect(),
    )
}

fn lcm_up_to(n: u64) -> u64 {
    (1..=n.max(1)).fold(1u64, |acc, k| {
        let g = gcd(acc, k);
        acc / g * k
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A tree or a forest, as stored in model files and handled by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Tree(DecisionTree),
    Forest(Forest),
}

impl Model {
    pub fn predict(&self, x: &Sample) -> Result<LabelSet> {
        match self {
            Model::Tree(t) => t.predict(x),
            Model::Forest(f) => f.predict(x),
        }
    }

    /// View as a forest (a single tree is a one-tree forest).
    pub fn as_forest(&self) -> Forest {
        match self {
            Model::Tree(t) => Forest { trees: vec![t.clone()] },
            Model::Forest(f) => f.clone(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Model::Tree(t) => t.leaf_count(),
            Model::Forest(f) => f.leaf_count(),
        }
    }

    pub fn num_features(&self) -> usize {
        match self {
            Model::Tree(t) => t.num_features,
            Model::Forest(f) => f.num_features(),
        }
    }
}

// ---------------------------------------------------------------------------
// Model interchange format
// ---------------------------------------------------------------------------

const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk model document. Thresholds round-trip bit-exactly
/// through JSON (shortest round-trippable float representation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub schema_fingerprint: String,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, schema: &FeatureSchema) -> Self {
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            schema_fingerprint: schema.fingerprint(),
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(json).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion { expected: MODEL_FORMAT_VERSION, got: file.version });
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Checks the stored fingerprint against `schema`.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if self.schema_fingerprint != schema.fingerprint() {
            return Err(Error::SchemaFingerprint);
        }
        Ok(())
    }
}
