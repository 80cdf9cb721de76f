//! Random forest of CART trees: seeded bootstrap per tree, Gini-impurity
//! splits over sqrt(d) feature draws per node, grown until leaves are pure
//! or reach `min_leaf`.

use rand::Rng;

use super::{Dataset, FingerprintError, Label};
use crate::seedmix::{stream, stream_rng};

#[derive(Debug, Clone)]
enum Node {
    Leaf(Label),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, v: &[f64]) -> Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(l) => return *l,
                Node::Split { feature, threshold, left, right } => {
                    at = if v[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RfModel {
    pub seed: u64,
    trees: Vec<Tree>,
}

impl RfModel {
    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Majority label of a slice of class ids; ties to the lowest label.
fn majority(class_of: &[u32], labels: &[Label], counts: &mut [u64]) -> Label {
    counts.fill(0);
    for &c in class_of {
        counts[c as usize] += 1;
    }
    let top = *counts.iter().max().unwrap();
    let idx = counts.iter().position(|&c| c == top).unwrap();
    labels[idx]
}

fn gini(counts: &[u64], total: f64) -> f64 {
    let mut g = 1.0;
    for &c in counts {
        let p = c as f64 / total;
        g -= p * p;
    }
    g
}

struct TreeBuilder<'a> {
    values: &'a [Vec<f64>],
    class: &'a [u32],
    labels: &'a [Label],
    dim: usize,
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Grow the subtree over `rows` (indices into the bootstrap sample);
    /// returns the node index.
    fn grow(&mut self, rows: &mut Vec<usize>, rng: &mut rand_chacha::ChaCha8Rng) -> usize {
        let n_classes = self.labels.len();
        let mut counts = vec![0u64; n_classes];
        for &r in rows.iter() {
            counts[self.class[r] as usize] += 1;
        }
        let n = rows.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < 2 * self.min_leaf || n < 2 {
            let classes: Vec<u32> = rows.iter().map(|&r| self.class[r]).collect();
            let label = majority(&classes, self.labels, &mut counts);
            self.nodes.push(Node::Leaf(label));
            return self.nodes.len() - 1;
        }

        // Feature subsample: partial Fisher-Yates over the feature indices.
        let mut feats: Vec<usize> = (0..self.dim).collect();
        for i in 0..self.mtry {
            let j = rng.gen_range(i..feats.len());
            feats.swap(i, j);
        }

        let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, feature, threshold)
        let mut sorted: Vec<(f64, u32)> = Vec::with_capacity(n);
        for &f in &feats[..self.mtry] {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.values[r][f], self.class[r])));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = vec![0u64; n_classes];
            let mut right = counts.clone();
            for i in 0..n - 1 {
                let c = sorted[i].1 as usize;
                left[c] += 1;
                right[c] -= 1;
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let (nl, nr) = (i + 1, n - i - 1);
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let w = (nl as f64 * gini(&left, nl as f64)
                    + nr as f64 * gini(&right, nr as f64))
                    / n as f64;
                if best.map_or(true, |(bw, _, _)| w < bw) {
                    best = Some((w, f, (sorted[i].0 + sorted[i + 1].0) / 2.0));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            // No valid split among the drawn features (e.g. all constant).
            let classes: Vec<u32> = rows.iter().map(|&r| self.class[r]).collect();
            let label = majority(&classes, self.labels, &mut counts);
            self.nodes.push(Node::Leaf(label));
            return self.nodes.len() - 1;
        };

        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &r in rows.iter() {
            if self.values[r][feature] <= threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        rows.clear();
        rows.shrink_to_fit();

        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(Label::NonSensitive)); // placeholder
        let left = self.grow(&mut left_rows, rng);
        let right = self.grow(&mut right_rows, rng);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

/// Fit `trees` CART trees on seeded bootstrap resamples. The same seed
/// always yields the identical model.
pub fn train_rf(
    train: &Dataset,
    trees: usize,
    min_leaf: usize,
    seed: u64,
) -> Result<RfModel, FingerprintError> {
    train.validate()?;
    if trees == 0 {
        return Err(FingerprintError::ZeroParameter("trees"));
    }
    if min_leaf == 0 {
        return Err(FingerprintError::ZeroParameter("min_leaf"));
    }
    let labels = train.labels();
    let class: Vec<u32> = train
        .vectors
        .iter()
        .map(|v| labels.binary_search(&v.label).unwrap() as u32)
        .collect();
    let values: Vec<Vec<f64>> = train.vectors.iter().map(|v| v.values.clone()).collect();
    let dim = train.dim();
    let mtry = ((dim as f64).sqrt().floor() as usize).max(1);
    let n = train.len();

    let built: Vec<Tree> = (0..trees as u64)
        .map(|t| {
            let mut rng = stream_rng(seed, &[stream::TREE, t]);
            let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut builder = TreeBuilder {
                values: &values,
                class: &class,
                labels: &labels,
                dim,
                mtry,
                min_leaf,
                nodes: Vec::new(),
            };
            builder.grow(&mut rows, &mut rng);
            Tree { nodes: builder.nodes }
        })
        .collect();

    Ok(RfModel { seed, trees: built })
}

/// Plurality vote over the trees; ties to the lowest label.
pub fn predict_rf(model: &RfModel, vector: &[f64]) -> Label {
    let mut votes: Vec<(Label, usize)> = Vec::new();
    for tree in &model.trees {
        let l = tree.predict(vector);
        match votes.iter_mut().find(|(vl, _)| *vl == l) {
            Some((_, c)) => *c += 1,
            None => votes.push((l, 1)),
        }
    }
    let top = votes.iter().map(|&(_, c)| c).max().unwrap();
    votes.iter().filter(|&&(_, c)| c == top).map(|&(l, _)| l).min().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::FeatureVector;

    fn point(values: &[f64], label: Label) -> FeatureVector {
        FeatureVector { values: values.to_vec(), label, source: String::new() }
    }

    fn separable() -> Dataset {
        // Two clusters split on the first feature; second is noise.
        let mut v = Vec::new();
        for i in 0..10 {
            v.push(point(&[i as f64 * 0.1, (i % 3) as f64], Label::Site(0)));
            v.push(point(&[10.0 + i as f64 * 0.1, (i % 4) as f64], Label::Site(1)));
        }
        Dataset::new(v)
    }

    #[test]
    fn separable_set_reaches_full_training_accuracy() {
        let ds = separable();
        let model = train_rf(&ds, 20, 1, 3).unwrap();
        for v in &ds.vectors {
            assert_eq!(predict_rf(&model, &v.values), v.label);
        }
    }

    #[test]
    fn same_seed_same_predictions() {
        let ds = separable();
        let a = train_rf(&ds, 15, 1, 7).unwrap();
        let b = train_rf(&ds, 15, 1, 7).unwrap();
        let probes: Vec<Vec<f64>> =
            (0..40).map(|i| vec![i as f64 * 0.33, (i % 5) as f64]).collect();
        let pa: Vec<Label> = probes.iter().map(|p| predict_rf(&a, p)).collect();
        let pb: Vec<Label> = probes.iter().map(|p| predict_rf(&b, p)).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn single_class_yields_constant_model() {
        let ds = Dataset::new(vec![
            point(&[0.0], Label::Site(3)),
            point(&[1.0], Label::Site(3)),
            point(&[2.0], Label::Site(3)),
        ]);
        let model = train_rf(&ds, 5, 1, 0).unwrap();
        assert_eq!(predict_rf(&model, &[-100.0]), Label::Site(3));
        assert_eq!(predict_rf(&model, &[100.0]), Label::Site(3));
    }

    #[test]
    fn min_leaf_limits_tree_depth() {
        let ds = separable();
        // Room for the class-boundary split even on skewed bootstraps.
        let shallow = train_rf(&ds, 10, 5, 1).unwrap();
        for v in &ds.vectors {
            assert_eq!(predict_rf(&shallow, &v.values), v.label);
        }
        // min_leaf = n forbids every split: single-leaf trees vote one label.
        let stump = train_rf(&ds, 10, ds.len(), 1).unwrap();
        let first = predict_rf(&stump, &ds.vectors[0].values);
        for v in &ds.vectors {
            assert_eq!(predict_rf(&stump, &v.values), first);
        }
    }

    #[test]
    fn zero_parameters_rejected() {
        let ds = separable();
        assert!(train_rf(&ds, 0, 1, 0).is_err());
        assert!(train_rf(&ds, 1, 0, 0).is_err());
    }
}
