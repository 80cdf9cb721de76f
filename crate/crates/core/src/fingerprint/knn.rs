//! K-nearest-neighbor classifier on standardized features.

use super::{Dataset, FingerprintError, Label};

/// Per-feature train-set standardization. Features with zero variance
/// carry no distance information and are dropped consistently from train
/// and query vectors.
#[derive(Debug, Clone)]
pub struct Standardizer {
    /// Retained feature indices.
    keep: Vec<usize>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(vectors: &[Vec<f64>], dim: usize) -> Standardizer {
        let n = vectors.len() as f64;
        let mut means = vec![0.0; dim];
        for v in vectors {
            for (m, x) in means.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in vars.iter_mut().zip(v).zip(&means) {
                *s += (x - m) * (x - m);
            }
        }
        let mut keep = Vec::new();
        let mut stds = Vec::new();
        let mut kept_means = Vec::new();
        for (i, s) in vars.iter().enumerate() {
            let var = s / n;
            if var > 0.0 {
                keep.push(i);
                stds.push(var.sqrt());
                kept_means.push(means[i]);
            }
        }
        Standardizer { keep, means: kept_means, stds }
    }

    pub fn transform(&self, v: &[f64]) -> Vec<f64> {
        self.keep
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&i, (m, s))| (v[i] - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    standardizer: Standardizer,
    points: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

pub fn train_knn(train: &Dataset, k: usize) -> Result<KnnModel, FingerprintError> {
    train.validate()?;
    if k == 0 {
        return Err(FingerprintError::ZeroParameter("k"));
    }
    if k > train.len() {
        return Err(FingerprintError::BadK { k, n: train.len() });
    }
    let raw: Vec<Vec<f64>> = train.vectors.iter().map(|v| v.values.clone()).collect();
    let standardizer = Standardizer::fit(&raw, train.dim());
    let points = raw.iter().map(|v| standardizer.transform(v)).collect();
    let labels = train.vectors.iter().map(|v| v.label).collect();
    Ok(KnnModel { k, standardizer, points, labels })
}

/// Majority label among the k nearest train points by Euclidean distance.
/// Vote ties go to the single nearest neighbor's label if it is among the
/// tied labels, otherwise to the lowest label id. Distance ties are broken
/// by training-set order.
pub fn predict_knn(model: &KnnModel, vector: &[f64]) -> Label {
    let q = model.standardizer.transform(vector);
    let mut dist: Vec<(f64, usize)> = model
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d2: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let neighbors = &dist[..model.k];
    let mut votes: Vec<(Label, usize)> = Vec::new();
    for &(_, i) in neighbors {
        let l = model.labels[i];
        match votes.iter_mut().find(|(vl, _)| *vl == l) {
            Some((_, c)) => *c += 1,
            None => votes.push((l, 1)),
        }
    }
    let top = votes.iter().map(|&(_, c)| c).max().unwrap();
    let nearest_label = model.labels[neighbors[0].1];
    if votes.iter().any(|&(l, c)| c == top && l == nearest_label) {
        return nearest_label;
    }
    votes.iter().filter(|&&(_, c)| c == top).map(|&(l, _)| l).min().unwrap()
}
