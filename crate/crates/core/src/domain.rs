//! Reduced product of the interval (hyper-rectangle) domain over numeric
//! columns with a one-hot relational domain over categorical groups, plus
//! compilation of similarity relations into abstract values.
//!
//! An abstract value denotes the set of samples whose numeric part lies in
//! the box and whose categorical groups each select exactly one admissible
//! category. Constraint meets are exact for univariate `x <= k` / `x > k`
//! split constraints, which is what makes the verifier complete.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSchema, Sample};
use crate::error::{Error, Result};

/// A closed/open real interval, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub fn all() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY, lo_open: false, hi_open: false }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v, lo_open: false, hi_open: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_open: false, hi_open: false }
    }

    /// `(-inf, k]`
    pub fn at_most(k: f64) -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: k, lo_open: false, hi_open: false }
    }

    /// `(k, +inf)`
    pub fn greater_than(k: f64) -> Self {
        Interval { lo: k, hi: f64::INFINITY, lo_open: true, hi_open: false }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi && !self.lo_open && !self.hi_open
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        let below = if self.hi_open { v < self.hi } else { v <= self.hi };
        above && below
    }

    /// Intersection; `None` when empty.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let (lo, lo_open) = if self.lo > other.lo {
            (self.lo, self.lo_open)
        } else if other.lo > self.lo {
            (other.lo, other.lo_open)
        } else {
            (self.lo, self.lo_open || other.lo_open)
        };
        let (hi, hi_open) = if self.hi < other.hi {
            (self.hi, self.hi_open)
        } else if other.hi < self.hi {
            (other.hi, other.hi_open)
        } else {
            (self.hi, self.hi_open || other.hi_open)
        };
        let out = Interval { lo, hi, lo_open, hi_open };
        if out.is_empty() {
            None
        } else {
            Some(out)
        }
    }

    /// True iff `self` is contained in `other`.
    pub fn subset_of(&self, other: &Interval) -> bool {
        match self.intersect(other) {
            Some(i) => i == *self,
            None => self.is_empty(),
        }
    }

    /// A member of the interval: the midpoint clamped to finite bounds,
    /// with open bounds nudged inward by one representable step.
    pub fn witness(&self) -> f64 {
        debug_assert!(!self.is_empty());
        let mut w = match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo,
            (false, true) => self.hi,
            (false, false) => 0.0,
        };
        if self.lo_open && w <= self.lo {
            w = self.lo.next_up();
        }
        if self.hi_open && w >= self.hi {
            w = self.hi.next_down();
        }
        w
    }
}

/// Admissible category indexes of one categorical group, as a bitmask.
/// Groups are limited to 64 categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatSet(pub u64);

impl CatSet {
    pub fn full(k: usize) -> Self {
        assert!(k <= 64, "categorical groups are limited to 64 categories");
        CatSet(if k == 64 { u64::MAX } else { (1u64 << k) - 1 })
    }

    pub fn single(i: usize) -> Self {
        CatSet(1u64 << i)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 & (1u64 << i) != 0
    }

    pub fn remove(&self, i: usize) -> CatSet {
        CatSet(self.0 & !(1u64 << i))
    }

    pub fn intersect(&self, other: &CatSet) -> CatSet {
        CatSet(self.0 & other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(move |&i| self.contains(i))
    }

    pub fn lowest(&self) -> Option<usize> {
        if self.is_empty() {
            None
        } else {
            Some(self.0.trailing_zeros() as usize)
        }
    }

    pub fn subset_of(&self, other: &CatSet) -> bool {
        self.0 & !other.0 == 0
    }
}

/// What an encoded column means: a numeric feature, or one category's
/// one-hot bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Numeric { feature: usize },
    OneHot { group: usize, category: usize },
}

/// Per-column role table derived from a schema, used by every domain
/// operation to route column constraints.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub roles: Vec<ColumnRole>,
    /// Number of categories per group.
    pub group_sizes: Vec<usize>,
    /// Encoded column of each numeric feature.
    pub numeric_columns: Vec<usize>,
}

impl ColumnMap {
    pub fn new(schema: &FeatureSchema) -> Self {
        let d = schema.dimension();
        let mut roles = vec![ColumnRole::Numeric { feature: 0 }; d];
        let mut numeric_columns = Vec::with_capacity(schema.numeric_features.len());
        for (fi, f) in schema.numeric_features.iter().enumerate() {
            roles[f.column] = ColumnRole::Numeric { feature: fi };
            numeric_columns.push(f.column);
        }
        let mut group_sizes = Vec::with_capacity(schema.categorical_groups.len());
        for (gi, g) in schema.categorical_groups.iter().enumerate() {
            group_sizes.push(g.categories.len());
            for (ci, &col) in g.columns.iter().enumerate() {
                roles[col] = ColumnRole::OneHot { group: gi, category: ci };
            }
        }
        ColumnMap { roles, group_sizes, numeric_columns }
    }

    pub fn dimension(&self) -> usize {
        self.roles.len()
    }
}

/// Split-style constraint over one encoded column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub column: usize,
    pub op: Cmp,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    /// `x[column] <= threshold`
    Le,
    /// `x[column] > threshold`
    Gt,
}

impl Constraint {
    pub fn le(column: usize, threshold: f64) -> Self {
        Constraint { column, op: Cmp::Le, threshold }
    }

    pub fn gt(column: usize, threshold: f64) -> Self {
        Constraint { column, op: Cmp::Gt, threshold }
    }

    /// Concrete evaluation on a sample.
    pub fn holds(&self, x: &Sample) -> bool {
        match self.op {
            Cmp::Le => x.values[self.column] <= self.threshold,
            Cmp::Gt => x.values[self.column] > self.threshold,
        }
    }
}

/// Product abstract value: an interval per numeric feature and an
/// admissible-category set per categorical group. Never bottom; emptiness
/// is signalled by `Option` in the meet operations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedAbstractValue {
    /// Aligned with the schema's numeric features.
    pub intervals: Vec<Interval>,
    /// Aligned with the schema's categorical groups.
    pub admissible: Vec<CatSet>,
}

impl ReducedAbstractValue {
    /// Every sample: unbounded intervals, all categories admissible.
    pub fn top(map: &ColumnMap) -> Self {
        ReducedAbstractValue {
            intervals: vec![Interval::all(); map.numeric_columns.len()],
            admissible: map.group_sizes.iter().map(|&k| CatSet::full(k)).collect(),
        }
    }

    /// The singleton region `{x}`.
    pub fn from_sample(x: &Sample, map: &ColumnMap) -> Self {
        let intervals = map
            .numeric_columns
            .iter()
            .map(|&c| Interval::point(x.values[c]))
            .collect();
        let mut admissible = vec![CatSet(0); map.group_sizes.len()];
        for (col, role) in map.roles.iter().enumerate() {
            if let ColumnRole::OneHot { group, category } = role {
                if x.values[col] == 1.0 {
                    admissible[*group] = CatSet::single(*category);
                }
            }
        }
        debug_assert!(admissible.iter().all(|a| a.len() == 1));
        ReducedAbstractValue { intervals, admissible }
    }

    /// Meet with one split constraint; `None` when the result is empty.
    ///
    /// One-hot columns take values in {0,1}, so a threshold in `[0,1)`
    /// either removes the category (`<=`) or forces it (`>`); thresholds
    /// outside `[0,1)` are vacuous or contradictory.
    pub fn meet_constraint(&self, c: &Constraint, map: &ColumnMap) -> Option<Self> {
        match map.roles[c.column] {
            ColumnRole::Numeric { feature } => {
                let bound = match c.op {
                    Cmp::Le => Interval::at_most(c.threshold),
                    Cmp::Gt => Interval::greater_than(c.threshold),
                };
                let refined = self.intervals[feature].intersect(&bound)?;
                let mut out = self.clone();
                out.intervals[feature] = refined;
                Some(out)
            }
            ColumnRole::OneHot { group, category } => {
                let k = c.threshold;
                let refined = match c.op {
                    Cmp::Le => {
                        if k < 0.0 {
                            return None;
                        } else if k < 1.0 {
                            self.admissible[group].remove(category)
                        } else {
                            return Some(self.clone());
                        }
                    }
                    Cmp::Gt => {
                        if k < 0.0 {
                            return Some(self.clone());
                        } else if k < 1.0 {
                            self.admissible[group].intersect(&CatSet::single(category))
                        } else {
                            return None;
                        }
                    }
                };
                if refined.is_empty() {
                    return None;
                }
                let mut out = self.clone();
                out.admissible[group] = refined;
                Some(out)
            }
        }
    }

    /// Folds `meet_constraint` over a constraint set; `None` when empty.
    pub fn meet_all<'a>(
        &self,
        constraints: impl IntoIterator<Item = &'a Constraint>,
        map: &ColumnMap,
    ) -> Option<Self> {
        let mut v = self.clone();
        for c in constraints {
            v = v.meet_constraint(c, map)?;
        }
        Some(v)
    }

    /// True iff some sample in the concretization satisfies all of `C`.
    /// Sound and complete for this domain: the meet is exact per column
    /// and per group.
    pub fn satisfies(&self, constraints: &[Constraint], map: &ColumnMap) -> bool {
        self.meet_all(constraints, map).is_some()
    }

    /// Membership of a concrete sample in the concretization.
    pub fn contains(&self, x: &Sample, map: &ColumnMap) -> Result<bool> {
        if x.values.len() != map.dimension() {
            return Err(Error::DimensionMismatch { expected: map.dimension(), got: x.values.len() });
        }
        for (fi, &col) in map.numeric_columns.iter().enumerate() {
            if !self.intervals[fi].contains(x.values[col]) {
                return Ok(false);
            }
        }
        // categorical: exactly one hot bit per group, and it must be admissible
        let mut hot = vec![None; map.group_sizes.len()];
        for (col, role) in map.roles.iter().enumerate() {
            if let ColumnRole::OneHot { group, category } = role {
                match x.values[col] {
                    v if v == 1.0 => {
                        if hot[*group].is_some() {
                            return Ok(false);
                        }
                        hot[*group] = Some(*category);
                    }
                    v if v == 0.0 => {}
                    _ => return Ok(false),
                }
            }
        }
        for (g, h) in hot.iter().enumerate() {
            match h {
                Some(c) if self.admissible[g].contains(*c) => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }

    /// A concrete sample in the concretization: interval witnesses on
    /// numeric columns, the lowest-index admissible category per group.
    pub fn sample_witness(&self, map: &ColumnMap) -> Sample {
        let mut values = vec![0.0; map.dimension()];
        for (fi, &col) in map.numeric_columns.iter().enumerate() {
            values[col] = self.intervals[fi].witness();
        }
        for (col, role) in map.roles.iter().enumerate() {
            if let ColumnRole::OneHot { group, category } = role {
                let chosen = self.admissible[*group].lowest().expect("non-bottom value");
                values[col] = if *category == chosen { 1.0 } else { 0.0 };
            }
        }
        Sample::new(values)
    }

    /// Componentwise inclusion.
    pub fn subset_of(&self, other: &ReducedAbstractValue) -> bool {
        self.intervals
            .iter()
            .zip(&other.intervals)
            .all(|(a, b)| a.subset_of(b))
            && self
                .admissible
                .iter()
                .zip(&other.admissible)
                .all(|(a, b)| a.subset_of(b))
    }
}

// ---------------------------------------------------------------------------
// Similarity relations
// ---------------------------------------------------------------------------

/// Noise component of a similarity relation: the named numeric features may
/// differ by at most `tau`, everything else is unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub features: Vec<String>,
    pub tau: f64,
}

/// Declarative description of a similarity relation over the input space,
/// compiled per-sample into a disjunction of abstract values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimilaritySpec {
    /// Selected numeric features differ by at most `tau`; all other
    /// features equal.
    Noise { features: Vec<String>, tau: f64 },
    /// Identical except for one or more sensitive categorical groups.
    Cat { sensitive_groups: Vec<String> },
    /// Union of the noise and cat relations.
    NoiseCat {
        features: Vec<String>,
        tau: f64,
        sensitive_groups: Vec<String>,
    },
    /// Two mutually exclusive noise relations, gated on whether the chosen
    /// numeric attribute is below or above `tau` for both individuals.
    ConditionalAttribute {
        attribute: String,
        tau: f64,
        below: NoiseSpec,
        above: NoiseSpec,
    },
}

impl SimilaritySpec {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Checks that every referenced feature and group exists and that
    /// thresholds are nonnegative.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let check_features = |names: &[String], tau: f64| -> Result<()> {
            if tau < 0.0 {
                return Err(Error::InvalidParameter(format!("tau {tau} must be >= 0")));
            }
            for n in names {
                if !schema.numeric_features.iter().any(|f| f.name == *n) {
                    return Err(Error::UnknownColumn(n.clone()));
                }
            }
            Ok(())
        };
        let check_groups = |names: &[String]| -> Result<()> {
            for n in names {
                if !schema.categorical_groups.iter().any(|g| g.name == *n) {
                    return Err(Error::UnknownColumn(n.clone()));
                }
            }
            Ok(())
        };
        match self {
            SimilaritySpec::Noise { features, tau } => check_features(features, *tau),
            SimilaritySpec::Cat { sensitive_groups } => check_groups(sensitive_groups),
            SimilaritySpec::NoiseCat { features, tau, sensitive_groups } => {
                check_features(features, *tau)?;
                check_groups(sensitive_groups)
            }
            SimilaritySpec::ConditionalAttribute { attribute, tau, below, above } => {
                check_features(std::slice::from_ref(attribute), *tau)?;
                check_features(&below.features, below.tau)?;
                check_features(&above.features, above.tau)
            }
        }
    }
}

fn numeric_feature_index(schema: &FeatureSchema, name: &str) -> Result<usize> {
    schema
        .numeric_features
        .iter()
        .position(|f| f.name == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))
}

fn group_index(schema: &FeatureSchema, name: &str) -> Result<usize> {
    schema
        .categorical_groups
        .iter()
        .position(|g| g.name == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))
}

/// Compiles the set of individuals similar to `x` into a disjunction of
/// abstract values whose union of concretizations is exactly that set.
pub fn from_similarity(
    x: &Sample,
    spec: &SimilaritySpec,
    schema: &FeatureSchema,
    map: &ColumnMap,
) -> Result<Vec<ReducedAbstractValue>> {
    let noise_value = |features: &[String], tau: f64| -> Result<ReducedAbstractValue> {
        let mut v = ReducedAbstractValue::from_sample(x, map);
        for name in features {
            let fi = numeric_feature_index(schema, name)?;
            let xi = x.values[map.numeric_columns[fi]];
            v.intervals[fi] = Interval::closed(xi - tau, xi + tau);
        }
        Ok(v)
    };
    let cat_value = |groups: &[String]| -> Result<ReducedAbstractValue> {
        let mut v = ReducedAbstractValue::from_sample(x, map);
        for name in groups {
            let gi = group_index(schema, name)?;
            v.admissible[gi] = CatSet::full(map.group_sizes[gi]);
        }
        Ok(v)
    };
    match spec {
        SimilaritySpec::Noise { features, tau } => Ok(vec![noise_value(features, *tau)?]),
        SimilaritySpec::Cat { sensitive_groups } => Ok(vec![cat_value(sensitive_groups)?]),
        SimilaritySpec::NoiseCat { features, tau, sensitive_groups } => {
            Ok(vec![noise_value(features, *tau)?, cat_value(sensitive_groups)?])
        }
        SimilaritySpec::ConditionalAttribute { attribute, tau, below, above } => {
            let fi = numeric_feature_index(schema, attribute)?;
            let xi = x.values[map.numeric_columns[fi]];
            // Only the branch containing x is active: both members of a
            // similar pair must sit on the same side of the threshold.
            let (branch, guard) = if xi <= *tau {
                (below, Interval::at_most(*tau))
            } else {
                (above, Interval::greater_than(*tau))
            };
            let mut v = noise_value(&branch.features, branch.tau)?;
            match v.intervals[fi].intersect(&guard) {
                Some(i) => {
                    v.intervals[fi] = i;
                    Ok(vec![v])
                }
                // cannot happen: x itself satisfies the guard and lies in
                // its own noise interval, but keep the omission semantics
                None => Ok(vec![]),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CategoricalGroup, NumericFeature};

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

    fn mixed_schema() -> FeatureSchema {
        FeatureSchema {
            numeric_features: vec![
                NumericFeature { name: "age".into(), column: 0 },
                NumericFeature { name: "hours".into(), column: 1 },
            ],
            categorical_groups: vec![CategoricalGroup {
                name: "color".into(),
                categories: vec!["white".into(), "black".into()],
                columns: vec![2, 3],
            }],
            label_name: "y".into(),
            label_values: vec!["l1".into(), "l2".into()],
            positive_label: None,
        }
    }

    #[test]
    fn interval_meet_and_emptiness() {
        let v = Interval::closed(0.0, 4.0);
        let m = v.intersect(&Interval::at_most(2.0)).unwrap();
        assert_eq!(m, Interval::closed(0.0, 2.0));
        assert!(m.intersect(&Interval::greater_than(3.0)).is_none());
    }

    #[test]
    fn open_bound_witness_stays_inside() {
        let iv = Interval { lo: 2.0, hi: 4.0, lo_open: true, hi_open: false };
        let w = iv.witness();
        assert!(iv.contains(w));
        let iv2 = Interval::greater_than(1.0);
        assert!(iv2.contains(iv2.witness()));
    }

    #[test]
    fn cat_similarity_frees_the_sensitive_group() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let white = Sample::new(vec![1.0, 0.0]);
        let spec = SimilaritySpec::Cat { sensitive_groups: vec!["color".into()] };
        let vs = from_similarity(&white, &spec, &schema, &map).unwrap();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].admissible[0], CatSet::full(2));
        // both one-hot assignments, and only those, are contained
        assert!(vs[0].contains(&white, &map).unwrap());
        assert!(vs[0].contains(&Sample::new(vec![0.0, 1.0]), &map).unwrap());
        assert!(!vs[0].contains(&Sample::new(vec![0.0, 0.0]), &map).unwrap());
        assert!(!vs[0].contains(&Sample::new(vec![1.0, 1.0]), &map).unwrap());
    }

    #[test]
    fn zero_noise_is_the_point_region() {
        let schema = mixed_schema();
        let map = ColumnMap::new(&schema);
        let x = Sample::new(vec![1.5, -0.5, 0.0, 1.0]);
        let spec = SimilaritySpec::Noise { features: vec!["age".into()], tau: 0.0 };
        let vs = from_similarity(&x, &spec, &schema, &map).unwrap();
        assert_eq!(vs.len(), 1);
        assert!(vs[0].contains(&x, &map).unwrap());
        assert!(vs[0].intervals.iter().all(|i| i.is_point()));
    }

    #[test]
    fn conditional_attribute_clamps_at_the_threshold() {
        let schema = mixed_schema();
        let map = ColumnMap::new(&schema);
        // age 36.9 <= 37: active branch is `below` with tau 0.2
        let x = Sample::new(vec![36.9, 0.0, 1.0, 0.0]);
        let spec = SimilaritySpec::ConditionalAttribute {
            attribute: "age".into(),
            tau: 37.0,
            below: NoiseSpec { features: vec!["age".into()], tau: 0.2 },
            above: NoiseSpec { features: vec!["age".into()], tau: 0.4 },
        };
        let vs = from_similarity(&x, &spec, &schema, &map).unwrap();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].intervals[0], Interval::closed(36.9 - 0.2, 37.0));
        // a sample exactly at tau goes to the below branch
        let at = Sample::new(vec![37.0, 0.0, 1.0, 0.0]);
        let vs = from_similarity(&at, &spec, &schema, &map).unwrap();
        assert_eq!(vs[0].intervals[0], Interval::closed(36.8, 37.0));
        // above the threshold the guard is the open interval (37, +inf)
        let hi = Sample::new(vec![37.1, 0.0, 1.0, 0.0]);
        let vs = from_similarity(&hi, &spec, &schema, &map).unwrap();
        let iv = vs[0].intervals[0];
        assert!((iv.lo - 37.0).abs() < 1e-12 && iv.lo_open);
        assert!((iv.hi - 37.5).abs() < 1e-12);
    }

    #[test]
    fn one_hot_meet_semantics() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let top = ReducedAbstractValue::top(&map);
        // white <= 0.5 removes white
        let v = top.meet_constraint(&Constraint::le(0, 0.5), &map).unwrap();
        assert_eq!(v.admissible[0], CatSet::single(1));
        // then black <= 0.5 empties the group
        assert!(v.meet_constraint(&Constraint::le(1, 0.5), &map).is_none());
        // white > 0.5 forces white
        let v = top.meet_constraint(&Constraint::gt(0, 0.5), &map).unwrap();
        assert_eq!(v.admissible[0], CatSet::single(0));
        // literal 0/1 thresholds
        let v = top.meet_constraint(&Constraint::le(0, 0.0), &map).unwrap();
        assert_eq!(v.admissible[0], CatSet::single(1));
        let v = top.meet_constraint(&Constraint::gt(0, 0.0), &map).unwrap();
        assert_eq!(v.admissible[0], CatSet::single(0));
        assert!(top.meet_constraint(&Constraint::le(0, -0.1), &map).is_none());
        assert!(top.meet_constraint(&Constraint::gt(0, 1.0), &map).is_none());
        // vacuous cases
        assert_eq!(top.meet_constraint(&Constraint::le(0, 1.0), &map).unwrap(), top);
        assert_eq!(top.meet_constraint(&Constraint::gt(0, -0.5), &map).unwrap(), top);
    }

    #[test]
    fn reduction_blocks_the_invalid_corner() {
        // {white <= 0.5, black <= 0.5} is satisfiable for a plain box but
        // not once one-hot reduction is in force
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let top = ReducedAbstractValue::top(&map);
        let cs = [Constraint::le(0, 0.5), Constraint::le(1, 0.5)];
        assert!(!top.satisfies(&cs, &map));
        assert!(top.satisfies(&[], &map));
    }

    #[test]
    fn witness_uses_lowest_admissible_category() {
        let schema = color_schema();
        let map = ColumnMap::new(&schema);
        let top = ReducedAbstractValue::top(&map);
        let forced = top.meet_constraint(&Constraint::le(0, 0.5), &map).unwrap();
        let w = forced.sample_witness(&map);
        assert_eq!(w.values, vec![0.0, 1.0]);
        assert!(forced.contains(&w, &map).unwrap());
    }

    #[test]
    fn similarity_validation_rejects_unknown_names() {
        let schema = mixed_schema();
        let bad = SimilaritySpec::Noise { features: vec!["nope".into()], tau: 0.1 };
        assert!(bad.validate(&schema).is_err());
        let neg = SimilaritySpec::Noise { features: vec!["age".into()], tau: -1.0 };
        assert!(neg.validate(&schema).is_err());
        let ok = SimilaritySpec::Cat { sensitive_groups: vec!["color".into()] };
        assert!(ok.validate(&schema).is_ok());
    }

    #[test]
    fn similarity_spec_json_round_trip() {
        let spec = SimilaritySpec::NoiseCat {
            features: vec!["age".into()],
            tau: 0.3,
            sensitive_groups: vec!["color".into()],
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("noise-cat"));
        assert_eq!(SimilaritySpec::from_json(&json).unwrap(), spec);
    }
}
