//! Evaluation metrics and the aggregate model report.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::domain::{ColumnMap, SimilaritySpec};
use crate::error::{Error, Result};
use crate::tree::Model;
use crate::verifier::{fairness_metric, AnalysisConfig, FairnessSummary};

/// Fraction of test samples where the prediction is exactly the singleton
/// ground-truth label. Multi-label (tied) outputs count as incorrect.
pub fn accuracy(model: &Model, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset(""));
    }
    let mut correct = 0usize;
    for (x, y) in test.iter() {
        let pred = model.predict(x)?;
        if pred.is_singleton() && pred.labels()[0] == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Mean of true-positive and true-negative rates on a binary task. The
/// positive class comes from the schema; multi-label outputs count as
/// wrong for both classes.
pub fn balanced_accuracy(model: &Model, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset(""));
    }
    if test.schema.num_labels() != 2 {
        return Err(Error::NotBinary("balanced accuracy"));
    }
    let pos = test.schema.positive_label.ok_or(Error::NotBinary("balanced accuracy"))?;
    let (mut tp, mut fn_, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for (x, y) in test.iter() {
        let pred = model.predict(x)?;
        let predicted_pos = pred.is_singleton() && pred.labels()[0] == pos;
        let predicted_neg = pred.is_singleton() && pred.labels()[0] != pos;
        if y == pos {
            if predicted_pos {
                tp += 1;
            } else {
                fn_ += 1;
            }
        } else if predicted_neg {
            tn += 1;
        } else {
            fp += 1;
        }
    }
    let tpr = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let tnr = if tn + fp > 0 { tn as f64 / (tn + fp) as f64 } else { 0.0 };
    Ok(0.5 * (tpr + tnr))
}

/// One row of the comparison tables: accuracy, balanced accuracy, size and
/// per-similarity verified fairness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_id: String,
    pub accuracy: f64,
    /// Absent for non-binary tasks or schemas without a positive label.
    pub balanced_accuracy: Option<f64>,
    pub leaf_count: usize,
    /// One entry per requested similarity spec, in request order.
    pub fairness: Vec<NamedFairness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFairness {
    pub similarity: String,
    #[serde(flatten)]
    pub summary: FairnessSummary,
}

fn spec_name(spec: &SimilaritySpec) -> String {
    match spec {
        SimilaritySpec::Noise { .. } => "noise".into(),
        SimilaritySpec::Cat { .. } => "cat".into(),
        SimilaritySpec::NoiseCat { .. } => "noise-cat".into(),
        SimilaritySpec::ConditionalAttribute { .. } => "conditional-attribute".into(),
    }
}

/// Runs every metric and one fairness verification pass per similarity.
pub fn evaluate(
    model_id: &str,
    model: &Model,
    test: &LabeledDataset,
    specs: &[SimilaritySpec],
    cfg: &AnalysisConfig,
) -> Result<EvaluationReport> {
    let map = ColumnMap::new(&test.schema);
    let acc = accuracy(model, test)?;
    let bal = if test.schema.num_labels() == 2 && test.schema.positive_label.is_some() {
        Some(balanced_accuracy(model, test)?)
    } else {
        None
    };
    let mut fairness = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate(&test.schema)?;
        let summary = fairness_metric(model, test, spec, cfg, &map)?;
        fairness.push(NamedFairness { similarity: spec_name(spec), summary });
    }
    Ok(EvaluationReport {
        model_id: model_id.to_string(),
        accuracy: acc,
        balanced_accuracy: bal,
        leaf_count: model.leaf_count(),
        fairness,
    })
}

/// Renders reports as an aligned text table: one row per model, columns
/// for accuracy, balanced accuracy, size and per-similarity fairness.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let mut header = vec!["Model".to_string(), "Acc %".into(), "Bal.Acc %".into(), "Size".into()];
    if let Some(first) = reports.first() {
        for nf in &first.fairness {
            header.push(format!("Fair[{}] %", nf.similarity));
        }
    }
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![
            r.model_id.clone(),
            format!("{:.2}", 100.0 * r.accuracy),
            r.balanced_accuracy.map_or("-".into(), |b| format!("{:.2}", 100.0 * b)),
            r.leaf_count.to_string(),
        ];
        for nf in &r.fairness {
            row.push(format!("{:.2}", 100.0 * nf.summary.fairness));
        }
        rows.push(row);
    }
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{:>width$}", cell, width = widths[c]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{DecisionTree, LabelDistribution, LabelSet, Node};

    fn const_model(counts: Vec<u64>, d: usize) -> Model {
        let l = counts.len();
        Model::Tree(DecisionTree::new(
            d,
            l,
            Node::leaf(LabelDistribution::from_counts(counts), 1),
        ))
    }

    fn dataset(labels: &[usize]) -> LabeledDataset {
        let ds = crate::data::synth::biased_dataset(labels.len(), 1, 0);
        LabeledDataset { labels: labels.to_vec(), ..ds }
    }

    #[test]
    fn accuracy_counts_singleton_matches() {
        let test = dataset(&[1, 1, 1, 0]);
        let model = const_model(vec![0, 9], test.schema.dimension());
        assert!((accuracy(&model, &test).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn tied_output_counts_as_incorrect() {
        let test = dataset(&[0, 1]);
        let model = const_model(vec![5, 5], test.schema.dimension());
        assert_eq!(accuracy(&model, &test).unwrap(), 0.0);
        assert_eq!(
            model.predict(&test.samples[0]).unwrap(),
            LabelSet::new(vec![0, 1])
        );
        // and as wrong for both classes of balanced accuracy
        assert_eq!(balanced_accuracy(&model, &test).unwrap(), 0.0);
    }

    #[test]
    fn balanced_accuracy_of_a_constant_classifier_is_half() {
        // 75% positive data, constant positive prediction
        let test = dataset(&[1, 1, 1, 0]);
        let model = const_model(vec![0, 9], test.schema.dimension());
        assert!((accuracy(&model, &test).unwrap() - 0.75).abs() < 1e-12);
        assert!((balanced_accuracy(&model, &test).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn balanced_accuracy_formula() {
        // TP=8 FN=2 TN=3 FP=7 -> 0.5*(0.8 + 0.3) = 0.55. The model predicts
        // positive iff x0 > 0, so encode the wanted confusion matrix in x0.
        let mut test = dataset(&[1; 20]);
        let mut x0 = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..8 {
            x0.push(1.0);
            labels.push(1);
        } // TP
        for _ in 0..2 {
            x0.push(-1.0);
            labels.push(1);
        } // FN
        for _ in 0..3 {
            x0.push(-1.0);
            labels.push(0);
        } // TN
        for _ in 0..7 {
            x0.push(1.0);
            labels.push(0);
        } // FP
        for (s, v) in test.samples.iter_mut().zip(x0) {
            s.values[0] = v;
        }
        test.labels = labels;
        let model = Model::Tree(DecisionTree::new(
            test.schema.dimension(),
            2,
            Node::split(
                0,
                0.0,
                Node::leaf(LabelDistribution::from_counts(vec![0, 9]), 9),
                Node::leaf(LabelDistribution::from_counts(vec![9, 0]), 9),
            ),
        ));
        assert!((balanced_accuracy(&model, &test).unwrap() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn balanced_accuracy_requires_binary_task() {
        let mut test = dataset(&[0, 1]);
        test.schema.label_values.push("c".into());
        let model = const_model(vec![1, 0, 0], test.schema.dimension());
        assert!(matches!(balanced_accuracy(&model, &test), Err(Error::NotBinary(_))));
    }

    #[test]
    fn fairness_and_accuracy_are_independent() {
        // constant wrong-label classifier: fairness 1.0, accuracy 0.0
        let test = dataset(&[1, 1, 1, 1]);
        let model = const_model(vec![9, 0], test.schema.dimension());
        assert_eq!(accuracy(&model, &test).unwrap(), 0.0);
        let spec = SimilaritySpec::Cat { sensitive_groups: vec!["group".into()] };
        let report =
            evaluate("const", &model, &test, &[spec], &AnalysisConfig::default()).unwrap();
        assert_eq!(report.fairness[0].summary.fairness, 1.0);
    }

    #[test]
    fn report_round_trips_and_composes() {
        let test = dataset(&[0, 1, 0, 1]);
        let model = const_model(vec![9, 0], test.schema.dimension());
        let specs = [SimilaritySpec::Cat { sensitive_groups: vec!["group".into()] }];
        let report = evaluate("m", &model, &test, &specs, &AnalysisConfig::default()).unwrap();
        assert_eq!(report.accuracy, accuracy(&model, &test).unwrap());
        assert_eq!(report.leaf_count, 1);
        let json = serde_json::to_string(&report).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
        let table = render_table(std::slice::from_ref(&report));
        assert!(table.contains("Fair[cat]"));
    }
}
