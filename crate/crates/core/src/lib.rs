//! Individual fairness verification and fairness-aware training for
//! decision trees and tree ensembles.
//!
//! The library has three layers:
//!
//! * a data layer ([`data`]) that ingests CSV datasets, one-hot encodes
//!   categorical features and standardizes numeric ones;
//! * a verification layer ([`domain`], [`verifier`]) that decides whether a
//!   tree or forest assigns the same labels to all individuals similar to a
//!   given sample, using a box abstract domain refined with one-hot
//!   constraints over the encoded categorical groups;
//! * a training layer ([`train`], [`fatt`]) with from-scratch CART and
//!   random forest learners plus a genetic trainer that maximizes a weighted
//!   sum of accuracy and verified fairness.

pub mod data;
pub mod domain;
pub mod error;
pub mod fatt;
pub mod metrics;
pub mod train;
pub mod tree;
pub mod verifier;

pub use data::{FeatureSchema, LabeledDataset, Sample, SchemaSpec, StandardizationStats};
pub use domain::{
    CatSet, ColumnMap, Constraint, Interval, ReducedAbstractValue, SimilaritySpec,
};
pub use error::Error;
pub use tree::{DecisionTree, Forest, LabelDistribution, LabelSet, Model, Node};
pub use verifier::{AnalysisConfig, Verdict, VerdictStatus};
