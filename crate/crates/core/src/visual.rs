//! One-vs-all logistic classifiers over the selected features.

use rayon::prelude::*;

use crate::argmax;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OvaConfig {
    pub step: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub l2: f64,
}

impl Default for OvaConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            max_iters: 500,
            grad_tol: 1e-6,
            l2: 1e-4,
        }
    }
}

impl OvaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.l2 >= 0.0) || !(self.grad_tol >= 0.0) {
            return Err(Error::config("classifier step must be positive and l2, tolerance non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClassifier {
    pub class_index: usize,
    /// Feature weights followed by the bias.
    pub weights: Vec<f64>,
    pub l2: f64,
    /// Trained without positive examples; always predicts 0.
    pub degenerate: bool,
}

impl BinaryClassifier {
    pub fn dims(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let (w, b) = self.weights.split_at(self.weights.len() - 1);
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[0]
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        if self.degenerate {
            0.0
        } else {
            sigmoid(self.score(x))
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy plus `l2/2 * |w|^2` (bias excluded) and its gradient.
pub fn logistic_loss_grad(weights: &[f64], rows: &[Vec<f64>], targets: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = weights.len() - 1;
    let n = rows.len() as f64;
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for (x, &y) in rows.iter().zip(targets) {
        let z = weights[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + weights[d];
        // -[y log s + (1-y) log(1-s)] = softplus(z) - y z
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, v) in grad[..d].iter_mut().zip(x) {
            *g += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let reg: f64 = weights[..d].iter().map(|w| w * w).sum();
    loss += 0.5 * l2 * reg;
    for (g, w) in grad[..d].iter_mut().zip(&weights[..d]) {
        *g += l2 * w;
    }
    (loss, grad)
}

/// Full-batch gradient descent on one binary problem. Returns the weights and
/// the loss before each step plus the final loss.
pub fn train_binary(rows: &[Vec<f64>], targets: &[f64], cfg: &OvaConfig) -> (Vec<f64>, Vec<f64>) {
    let d = rows.first().map_or(0, Vec::len);
    let mut w = vec![0.0; d + 1];
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    for _ in 0..cfg.max_iters {
        let (loss, grad) = logistic_loss_grad(&w, rows, targets, cfg.l2);
        trace.push(loss);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < cfg.grad_tol {
            return (w, trace);
        }
        w.iter_mut().zip(&grad).for_each(|(w, g)| *w -= cfg.step * g);
    }
    trace.push(logistic_loss_grad(&w, rows, targets, cfg.l2).0);
    (w, trace)
}

/// Train one classifier per class. Classes without positive examples get a
/// degenerate classifier that always outputs 0.
pub fn train_ova(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, cfg: &OvaConfig) -> Result<Vec<BinaryClassifier>> {
    cfg.validate()?;
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::data("classifier training needs matching non-empty rows and labels"));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::data("feature rows do not match the active mask width"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::data(format!("label {bad} out of range for {n_classes} classes")));
    }
    Ok((0..n_classes)
        .into_par_iter()
        .map(|c| {
            let targets: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            if !targets.contains(&1.0) {
                return BinaryClassifier {
                    class_index: c,
                    weights: vec![0.0; d + 1],
                    l2: cfg.l2,
                    degenerate: true,
                };
            }
            let (weights, _) = train_binary(rows, &targets, cfg);
            BinaryClassifier {
                class_index: c,
                weights,
                l2: cfg.l2,
                degenerate: false,
            }
        })
        .collect())
}

/// Independent one-vs-all scores; not renormalized across classes.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualProbability {
    pub p: Vec<f64>,
    pub argmax: usize,
}

pub fn predict_visual(x: &[f64], classifiers: &[BinaryClassifier]) -> VisualProbability {
    let p: Vec<f64> = classifiers.iter().map(|h| h.probability(x)).collect();
    let argmax = argmax(&p);
    VisualProbability { p, argmax }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_1d() {
        let rows: Vec<Vec<f64>> = [-1.0, -1.2, -0.8, 1.0, 1.1, 0.9].iter().map(|&v| vec![v]).collect();
        let labels = [0, 0, 0, 1, 1, 1];
        let hs = train_ova(&rows, &labels, 2, &OvaConfig::default()).unwrap();
        for (x, &l) in rows.iter().zip(&labels) {
            assert_eq!(predict_visual(x, &hs).argmax, l);
        }
        assert!(predict_visual(&[3.0], &hs).p[1] > 0.9);
        assert!(predict_visual(&[-3.0], &hs).p[0] > 0.9);
    }

    #[test]
    fn constant_features_converge_to_prior() {
        let rows = vec![vec![0.0, 0.0]; 10];
        let labels = [0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let hs = train_ova(&rows, &labels, 2, &OvaConfig::default()).unwrap();
        let p = predict_visual(&[0.0, 0.0], &hs).p;
        assert!((p[0] - 0.3).abs() < 1e-3, "{p:?}");
        assert!((p[1] - 0.7).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn zero_weights_give_half() {
        let h = |c| BinaryClassifier { class_index: c, weights: vec![0.0; 3], l2: 0.0, degenerate: false };
        let v = predict_visual(&[1.0, -2.0], &[h(0), h(1), h(2)]);
        assert_eq!(v.p, vec![0.5; 3]);
        assert_eq!(v.argmax, 0);
    }

    #[test]
    fn single_class() {
        let rows = vec![vec![0.5], vec![-0.5]];
        let hs = train_ova(&rows, &[0, 0], 1, &OvaConfig::default()).unwrap();
        let v = predict_visual(&[0.1], &hs);
        assert_eq!(v.p.len(), 1);
        assert_eq!(v.argmax, 0);
        assert_eq!(v.p[0], sigmoid(hs[0].score(&[0.1])));
    }

    #[test]
    fn missing_class_is_degenerate() {
        let rows = vec![vec![0.5], vec![-0.5]];
        let hs = train_ova(&rows, &[0, 0], 3, &OvaConfig::default()).unwrap();
        assert!(hs[1].degenerate && hs[2].degenerate);
        assert_eq!(predict_visual(&[0.0], &hs).p[2], 0.0);
    }

    #[test]
    fn rejects_bad_labels_and_widths() {
        assert!(train_ova(&[vec![1.0]], &[2], 2, &OvaConfig::default()).is_err());
        assert!(train_ova(&[vec![1.0], vec![1.0, 2.0]], &[0, 1], 2, &OvaConfig::default()).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
