//! Linear probe: a single affine layer with softmax cross-entropy, trained by
//! full-batch gradient descent on frozen features.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedder::Matrix;
use crate::error::{check_width, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Standardize each feature with train-split mean and deviation.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.5,
            seed: 0,
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub classes: usize,
    pub train_size: usize,
    pub test_size: usize,
}

/// Softmax classifier weights: `classes x width` plus a bias per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ProbeModel {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weight.matvec(x);
        z.iter_mut().zip(&self.bias).for_each(|(a, b)| *a += b);
        z
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        let mut best = 0;
        for (i, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = i;
            }
        }
        best
    }
}

/// Mean cross-entropy over `(features, class)` pairs and its gradient.
pub fn probe_loss_grad(model: &ProbeModel, features: &[Vec<f64>], labels: &[usize]) -> (f64, ProbeModel) {
    let mut grad = ProbeModel {
        weight: Matrix::zeros(model.weight.rows, model.weight.cols),
        bias: vec![0.0; model.bias.len()],
    };
    let n = features.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = model.logits(x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        loss += -(exp[y] / sum).ln();
        let mut d: Vec<f64> = exp.iter().map(|e| e / sum / n).collect();
        d[y] -= 1.0 / n;
        grad.weight.add_outer(&d, x);
        grad.bias.iter_mut().zip(&d).for_each(|(g, v)| *g += v);
    }
    (loss / n, grad)
}

fn accuracy(model: &ProbeModel, features: &[Vec<f64>], labels: &[usize]) -> f64 {
    if features.is_empty() {
        return 0.0;
    }
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(x, &y)| model.predict(x) == y)
        .count();
    correct as f64 / features.len() as f64
}

fn standardizer(train: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let width = train[0].len();
    let n = train.len() as f64;
    let mut mean = vec![0.0; width];
    for x in train {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = vec![0.0; width];
    for x in train {
        for ((s, v), m) in scale.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let scale = scale.iter().map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 0.0 }).collect();
    (mean, scale)
}

/// Trains a probe on `train` and reports train and test accuracy.
pub fn linear_probe(
    train: &[Vec<f64>],
    train_labels: &[usize],
    test: &[Vec<f64>],
    test_labels: &[usize],
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    if train.is_empty() || train.len() != train_labels.len() || test.len() != test_labels.len() {
        return Err(Error::Invalid("probe features and labels must be nonempty and aligned".into()));
    }
    let width = train[0].len();
    for x in train.iter().chain(test) {
        check_width(width, x.len())?;
    }
    let classes: BTreeSet<usize> = train_labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::Invalid("probe needs at least two classes".into()));
    }
    if let Some(missing) = test_labels.iter().find(|l| !classes.contains(l)) {
        return Err(Error::Invalid(format!("class {missing} appears in test but not in train")));
    }
    let class_list: Vec<usize> = classes.into_iter().collect();
    let index_of = |l: &usize| class_list.binary_search(l).expect("checked above");
    let ytr: Vec<usize> = train_labels.iter().map(index_of).collect();
    let yte: Vec<usize> = test_labels.iter().map(index_of).collect();

    let (mean, scale) = if config.standardize {
        standardizer(train)
    } else {
        (vec![0.0; width], vec![1.0; width])
    };
    let transform = |xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        xs.iter()
            .map(|x| x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) * s).collect())
            .collect()
    };
    let xtr = transform(train);
    let xte = transform(test);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ProbeModel {
        weight: Matrix::zeros(class_list.len(), width),
        bias: vec![0.0; class_list.len()],
    };
    for w in &mut model.weight.data {
        *w = rng.gen_range(-0.01..0.01);
    }
    for _ in 0..config.steps {
        let (_, grad) = probe_loss_grad(&model, &xtr, &ytr);
        for (w, g) in model.weight.data.iter_mut().zip(&grad.weight.data) {
            *w -= config.lr * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= config.lr * g;
        }
    }
    Ok(ProbeReport {
        train_accuracy: accuracy(&model, &xtr, &ytr),
        test_accuracy: accuracy(&model, &xte, &yte),
        classes: class_list.len(),
        train_size: xtr.len(),
        test_size: xte.len(),
    })
}

/// Per-class split: `test_fraction` of each class (rounded, at least one
/// example kept for training) goes to the test side. Returns index lists.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64 * test_fraction).round() as usize).min(members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
