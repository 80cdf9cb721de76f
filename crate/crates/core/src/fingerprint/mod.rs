//! Website-fingerprinting pipeline: feature extraction, from-scratch KNN
//! and random-forest classifiers, stratified cross-validation, and closed-
//! and open-world evaluation reports.

pub mod eval;
pub mod features;
pub mod forest;
pub mod knn;

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Memorygram;
pub use eval::{cross_validate, evaluate_open_world, compute_metrics, ClassMetrics, EvalReport, MacroMetrics};
pub use features::{extract_features, feature_len, window_stats, WindowStats};
pub use forest::{predict_rf, train_rf, RfModel};
pub use knn::{predict_knn, train_knn, KnnModel};

#[derive(Debug, Error, PartialEq)]
pub enum FingerprintError {
    #[error("window is empty")]
    EmptyWindow,
    #[error("trace has {samples} samples, feature extraction needs {needed}")]
    TraceTooShort { samples: usize, needed: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature vectors have mixed lengths ({0} vs {1})")]
    MixedDimensions(usize, usize),
    #[error("k = {k} exceeds training-set size {n}")]
    BadK { k: usize, n: usize },
    #[error("classifier parameter must be positive: {0}")]
    ZeroParameter(&'static str),
    #[error("class {label} has {support} members, stratified CV needs {folds}")]
    InsufficientSupport { label: Label, support: usize, folds: usize },
    #[error("confusion matrix is not square")]
    NonSquareConfusion,
    #[error("open-world set contains a sensitive label {0}")]
    OpenWorldLabel(Label),
    #[error("non-finite feature value in row {0}")]
    NonFiniteFeature(usize),
    #[error("bad csv: {0}")]
    BadCsv(String),
}

/// Class label: a monitored site, or the merged open-world background
/// class. Orders sites by id with `NON_SENSITIVE` last, which also serves
/// as the "lowest label id" tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Site(u32),
    NonSensitive,
}

impl Label {
    /// CSV encoding: site id, or -1 for the background class.
    pub fn to_csv_id(self) -> i64 {
        match self {
            Label::Site(s) => s as i64,
            Label::NonSensitive => -1,
        }
    }

    pub fn from_csv_id(id: i64) -> Label {
        if id < 0 {
            Label::NonSensitive
        } else {
            Label::Site(id as u32)
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Site(s) => write!(f, "{s}"),
            Label::NonSensitive => write!(f, "NON_SENSITIVE"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Label::Site(id) => s.serialize_u32(*id),
            Label::NonSensitive => s.serialize_str("NON_SENSITIVE"),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u32),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(Label::Site(id)),
            Raw::Name(n) if n == "NON_SENSITIVE" => Ok(Label::NonSensitive),
            Raw::Name(n) => Err(serde::de::Error::custom(format!("unknown label {n}"))),
        }
    }
}

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Label,
    pub source: String,
}

/// A labeled feature corpus with uniform dimensionality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub vectors: Vec<FeatureVector>,
}

impl Dataset {
    pub fn new(vectors: Vec<FeatureVector>) -> Self {
        Dataset { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.values.len())
    }

    /// Distinct labels in ascending order.
    pub fn labels(&self) -> Vec<Label> {
        let mut ls: Vec<Label> = self.vectors.iter().map(|v| v.label).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    }

    pub fn validate(&self) -> Result<(), FingerprintError> {
        if self.vectors.is_empty() {
            return Err(FingerprintError::EmptyDataset);
        }
        let d = self.dim();
        for (i, v) in self.vectors.iter().enumerate() {
            if v.values.len() != d {
                return Err(FingerprintError::MixedDimensions(d, v.values.len()));
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(FingerprintError::NonFiniteFeature(i));
            }
        }
        Ok(())
    }

    /// Header `label,f0..f{d-1}`; one row per vector.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let header: Vec<String> =
            std::iter::once("label".to_string()).chain((0..d).map(|i| format!("f{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for v in &self.vectors {
            let mut row = String::new();
            row.push_str(&v.label.to_csv_id().to_string());
            for x in &v.values {
                row.push(',');
                row.push_str(&format!("{x}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Dataset, FingerprintError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| FingerprintError::BadCsv("missing header".into()))?
            .map_err(|e| FingerprintError::BadCsv(e.to_string()))?;
        if !header.starts_with("label") {
            return Err(FingerprintError::BadCsv("header must start with 'label'".into()));
        }
        let mut vectors = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| FingerprintError::BadCsv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label = fields
                .next()
                .and_then(|f| f.trim().parse::<i64>().ok())
                .map(Label::from_csv_id)
                .ok_or_else(|| FingerprintError::BadCsv(format!("row {i}: bad label")))?;
            let values: Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
            let values =
                values.map_err(|e| FingerprintError::BadCsv(format!("row {i}: {e}")))?;
            vectors.push(FeatureVector { values, label, source: format!("row{i}") });
        }
        let ds = Dataset::new(vectors);
        ds.validate()?;
        Ok(ds)
    }
}

/// Classifier choice and hyperparameters. KNN uses Euclidean distance on
/// per-feature standardized values; RF splits on Gini impurity over
/// sqrt(d) feature draws per node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Knn { k: usize },
    Rf { trees: usize, min_leaf: usize, seed: u64 },
}

impl ClassifierSpec {
    pub fn default_knn() -> Self {
        ClassifierSpec::Knn { k: 5 }
    }

    pub fn default_rf() -> Self {
        ClassifierSpec::Rf { trees: 100, min_leaf: 1, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), FingerprintError> {
        match self {
            ClassifierSpec::Knn { k } if *k == 0 => Err(FingerprintError::ZeroParameter("k")),
            ClassifierSpec::Rf { trees: 0, .. } => Err(FingerprintError::ZeroParameter("trees")),
            ClassifierSpec::Rf { min_leaf: 0, .. } => Err(FingerprintError::ZeroParameter("min_leaf")),
            _ => Ok(()),
        }
    }
}

/// Feature vector of one memorygram.
pub fn features_from_memorygram(
    gram: &Memorygram,
    segments_per_half: usize,
) -> Result<FeatureVector, FingerprintError> {
    let samples: Vec<f64> = gram.samples.iter().map(|&s| s as f64).collect();
    Ok(FeatureVector {
        values: extract_features(&samples, segments_per_half)?,
        label: Label::Site(gram.site_id),
        source: format!("site{}/trial{}", gram.site_id, gram.trial),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(vec![
            FeatureVector { values: vec![0.0, 1.0], label: Label::Site(0), source: "a".into() },
            FeatureVector { values: vec![1.5, -2.0], label: Label::Site(1), source: "b".into() },
            FeatureVector { values: vec![3.0, 0.25], label: Label::NonSensitive, source: "c".into() },
        ])
    }

    #[test]
    fn label_order_and_csv_ids() {
        assert!(Label::Site(0) < Label::Site(7));
        assert!(Label::Site(u32::MAX) < Label::NonSensitive);
        assert_eq!(Label::NonSensitive.to_csv_id(), -1);
        assert_eq!(Label::from_csv_id(-1), Label::NonSensitive);
        assert_eq!(Label::from_csv_id(4), Label::Site(4));
    }

    #[test]
    fn label_json_forms() {
        assert_eq!(serde_json::to_string(&Label::Site(3)).unwrap(), "3");
        assert_eq!(serde_json::to_string(&Label::NonSensitive).unwrap(), "\"NON_SENSITIVE\"");
        let l: Label = serde_json::from_str("\"NON_SENSITIVE\"").unwrap();
        assert_eq!(l, Label::NonSensitive);
    }

    #[test]
    fn csv_round_trip() {
        let ds = toy();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,f0,f1\n"));
        assert!(text.contains("\n-1,3,0.25\n"));
        let back = Dataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.vectors.iter().zip(ds.vectors.iter()) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::default().validate().is_err());
        let mut ds = toy();
        ds.vectors[1].values.pop();
        assert!(matches!(ds.validate(), Err(FingerprintError::MixedDimensions(2, 1))));
        let mut ds = toy();
        ds.vectors[0].values[0] = f64::NAN;
        assert!(matches!(ds.validate(), Err(FingerprintError::NonFiniteFeature(0))));
    }

    #[test]
    fn classifier_spec_json() {
        let knn = ClassifierSpec::default_knn();
        assert_eq!(serde_json::to_string(&knn).unwrap(), "{\"kind\":\"knn\",\"k\":5}");
        let rf: ClassifierSpec =
            serde_json::from_str("{\"kind\":\"rf\",\"trees\":10,\"min_leaf\":2,\"seed\":3}").unwrap();
        assert_eq!(rf, ClassifierSpec::Rf { trees: 10, min_leaf: 2, seed: 3 });
        assert!(ClassifierSpec::Knn { k: 0 }.validate().is_err());
    }
}
