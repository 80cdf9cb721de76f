//! Stratified cross-validation, confusion-matrix metrics, and the
//! evaluation report emitted by the pipeline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    predict_knn, predict_rf, train_knn, train_rf, ClassifierSpec, Dataset, FeatureVector,
    FingerprintError, Label,
};
use crate::seedmix::{stream, stream_rng};

/// Unweighted class means of precision/recall/F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Classifier evaluation over all folds. The confusion matrix is row-major:
/// `confusion[true][predicted]`, rows/columns ordered as `labels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: ClassifierSpec,
    pub folds: usize,
    pub seed: u64,
    pub labels: Vec<Label>,
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Macro metrics over the sensitive (site) classes only; present for
    /// open-world evaluations.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sensitive_macro: Option<MacroMetrics>,
    /// Fold index per dataset row, in dataset order.
    pub fold_assignments: Vec<usize>,
}

/// Per-class and macro precision/recall/F1 from a square confusion matrix.
/// `0/0` ratios are 0 by convention.
pub fn compute_metrics(
    confusion: &[Vec<u64>],
    labels: &[Label],
) -> Result<(Vec<ClassMetrics>, MacroMetrics, f64), FingerprintError> {
    let n = confusion.len();
    if confusion.iter().any(|row| row.len() != n) || labels.len() != n {
        return Err(FingerprintError::NonSquareConfusion);
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut per_class = Vec::with_capacity(n);
    let mut correct = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        let tp = confusion[i][i];
        let support: u64 = confusion[i].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        correct += tp;
        total += support;
        per_class.push(ClassMetrics { label: labels[i], precision, recall, f1, support });
    }
    let k = n as f64;
    let macros = MacroMetrics {
        precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|c| c.f1).sum::<f64>() / k,
    };
    Ok((per_class, macros, ratio(correct, total)))
}

/// Seeded stratified fold assignment: per class, indices are shuffled and
/// dealt round-robin, so per-class fold sizes differ by at most one.
pub fn stratified_folds(
    dataset: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, FingerprintError> {
    if folds == 0 {
        return Err(FingerprintError::ZeroParameter("folds"));
    }
    let labels = dataset.labels();
    let mut rng = stream_rng(seed, &[stream::FOLDS]);
    let mut assignment = vec![0usize; dataset.len()];
    for label in labels {
        let mut members: Vec<usize> = dataset
            .vectors
            .iter()
            .enumerate()
            .filter(|(_, v)| v.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < folds {
            return Err(FingerprintError::InsufficientSupport {
                label,
                support: members.len(),
                folds,
            });
        }
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        for (pos, idx) in members.into_iter().enumerate() {
            assignment[idx] = pos % folds;
        }
    }
    Ok(assignment)
}

enum Model {
    Knn(super::KnnModel),
    Rf(super::RfModel),
}

fn fit(spec: &ClassifierSpec, train: &Dataset, fold: u64) -> Result<Model, FingerprintError> {
    match *spec {
        ClassifierSpec::Knn { k } => Ok(Model::Knn(train_knn(train, k)?)),
        ClassifierSpec::Rf { trees, min_leaf, seed } => {
            // Per-fold sub-seed keeps folds independent but reproducible.
            let fold_seed = crate::seedmix::derive_seed(seed, &[stream::TREE, fold]);
            Ok(Model::Rf(train_rf(train, trees, min_leaf, fold_seed)?))
        }
    }
}

fn predict(model: &Model, v: &[f64]) -> Label {
    match model {
        Model::Knn(m) => predict_knn(m, v),
        Model::Rf(m) => predict_rf(m, v),
    }
}

/// Stratified k-fold cross-validation; the confusion matrix aggregates
/// test predictions from every fold.
pub fn cross_validate(
    dataset: &Dataset,
    spec: &ClassifierSpec,
    folds: usize,
    seed: u64,
) -> Result<EvalReport, FingerprintError> {
    dataset.validate()?;
    spec.validate()?;
    let assignment = stratified_folds(dataset, folds, seed)?;
    let labels = dataset.labels();
    let index_of = |l: Label| labels.binary_search(&l).expect("label known");

    let mut confusion = vec![vec![0u64; labels.len()]; labels.len()];
    for fold in 0..folds {
        let train = Dataset::new(
            dataset
                .vectors
                .iter()
                .zip(&assignment)
                .filter(|(_, &f)| f != fold)
                .map(|(v, _)| v.clone())
                .collect::<Vec<FeatureVector>>(),
        );
        let model = fit(spec, &train, fold as u64)?;
        for (v, _) in dataset.vectors.iter().zip(&assignment).filter(|(_, &f)| f == fold) {
            let predicted = predict(&model, &v.values);
            confusion[index_of(v.label)][index_of(predicted)] += 1;
        }
    }

    let (per_class, macros, accuracy) = compute_metrics(&confusion, &labels)?;
    Ok(EvalReport {
        classifier: *spec,
        folds,
        seed,
        labels,
        confusion,
        per_class,
        macro_precision: macros.precision,
        macro_recall: macros.recall,
        macro_f1: macros.f1,
        accuracy,
        sensitive_macro: None,
        fold_assignments: assignment,
    })
}

/// Open-world evaluation: the open set joins the closed corpus as one
/// `NON_SENSITIVE` class and the same cross-validation protocol runs over
/// the merged dataset. The report adds macro metrics over the sensitive
/// classes alone.
pub fn evaluate_open_world(
    closed: &Dataset,
    open: &Dataset,
    spec: &ClassifierSpec,
    folds: usize,
    seed: u64,
) -> Result<EvalReport, FingerprintError> {
    if let Some(v) = open.vectors.iter().find(|v| v.label != Label::NonSensitive) {
        return Err(FingerprintError::OpenWorldLabel(v.label));
    }
    let mut merged = closed.vectors.clone();
    merged.extend(open.vectors.iter().cloned());
    let mut report = cross_validate(&Dataset::new(merged), spec, folds, seed)?;

    let sensitive: Vec<&ClassMetrics> =
        report.per_class.iter().filter(|c| c.label != Label::NonSensitive).collect();
    let k = sensitive.len().max(1) as f64;
    report.sensitive_macro = Some(MacroMetrics {
        precision: sensitive.iter().map(|c| c.precision).sum::<f64>() / k,
        recall: sensitive.iter().map(|c| c.recall).sum::<f64>() / k,
        f1: sensitive.iter().map(|c| c.f1).sum::<f64>() / k,
    });
    Ok(report)
}
