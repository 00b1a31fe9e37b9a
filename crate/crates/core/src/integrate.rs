//! Single-hidden-layer MLP that fuses the visual, adjacent and block
//! probability vectors into a class label.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::argmax;
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationMlp {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
    /// hidden × n_in, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// n_out × hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl IntegrationMlp {
    pub fn zeros(n_in: usize, hidden: usize, n_out: usize) -> Self {
        Self {
            n_in,
            hidden,
            n_out,
            w1: vec![0.0; hidden * n_in],
            b1: vec![0.0; hidden],
            w2: vec![0.0; n_out * hidden],
            b2: vec![0.0; n_out],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(n_in: usize, hidden: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(n_in, hidden, n_out);
        let l1 = (6.0 / (n_in + hidden) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.gen_range(-l1..=l1));
        let l2 = (6.0 / (hidden + n_out) as f64).sqrt();
        m.w2.iter_mut().for_each(|w| *w = rng.gen_range(-l2..=l2));
        m
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.w1.len() == self.hidden * self.n_in
            && self.b1.len() == self.hidden
            && self.w2.len() == self.n_out * self.hidden
            && self.b2.len() == self.n_out;
        if !ok {
            return Err(Error::model("mlp", "parameter shapes are inconsistent"));
        }
        if !self.params().iter().all(|v| v.is_finite()) {
            return Err(Error::model("mlp", "non-finite parameter"));
        }
        Ok(())
    }

    fn hidden_act(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.n_in..(h + 1) * self.n_in];
                (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h]).max(0.0)
            })
            .collect()
    }

    fn logits(&self, a: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>() + self.b2[o]
            })
            .collect()
    }

    /// Class probabilities for one input vector.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(&self.hidden_act(x)))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.forward(x))
    }

    /// All parameters in `w1, b1, w2, b2` order.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    /// Mean softmax cross-entropy over the batch and its gradient, flattened
    /// in [`params`](Self::params) order.
    pub fn loss_grad(&self, inputs: &[&[f64]], targets: &[usize]) -> (f64, Vec<f64>) {
        let (ni, nh, no) = (self.n_in, self.hidden, self.n_out);
        let mut gw1 = vec![0.0; nh * ni];
        let mut gb1 = vec![0.0; nh];
        let mut gw2 = vec![0.0; no * nh];
        let mut gb2 = vec![0.0; no];
        let mut loss = 0.0;
        for (x, &t) in inputs.iter().zip(targets) {
            let a = self.hidden_act(x);
            let p = softmax(&self.logits(&a));
            loss -= p[t].max(f64::MIN_POSITIVE).ln();
            let mut delta_out = p;
            delta_out[t] -= 1.0;
            let mut delta_hidden = vec![0.0; nh];
            for o in 0..no {
                let d = delta_out[o];
                gb2[o] += d;
                for h in 0..nh {
                    gw2[o * nh + h] += d * a[h];
                    delta_hidden[h] += d * self.w2[o * nh + h];
                }
            }
            for h in 0..nh {
                if a[h] <= 0.0 {
                    continue;
                }
                let d = delta_hidden[h];
                gb1[h] += d;
                for (g, v) in gw1[h * ni..(h + 1) * ni].iter_mut().zip(x.iter()) {
                    *g += d * v;
                }
            }
        }
        let n = inputs.len() as f64;
        let mut grad = [gw1, gb1, gw2, gb2].concat();
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub lr0: f64,
    /// Multiplicative decay applied at every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub batch: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            decay: 0.1,
            decay_every: 30,
            batch: 4,
            epochs: 60,
            hidden: 64,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch < 1 || self.hidden < 1 || self.decay_every < 1 {
            return Err(Error::config("batch, hidden width and decay interval must be positive"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config("decay must be in (0, 1]"));
        }
        Ok(())
    }

    /// Step-decayed learning rate. Division by the inverse factor keeps
    /// `1e-4` / `0.1` steps exact (`1e-5`, `1e-6`).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.decay_every) as i32;
        self.lr0 / (1.0 / self.decay).powi(steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMlp {
    pub mlp: IntegrationMlp,
    pub epoch_loss: Vec<f64>,
}

impl TrainedMlp {
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in self.epoch_loss.iter().enumerate() {
            s.push_str(&format!("{e},{l:e}\n"));
        }
        s
    }
}

/// Mini-batch SGD with seeded epoch shuffling.
pub fn train_integration(inputs: &[Vec<f64>], targets: &[usize], n_classes: usize, schedule: &TrainSchedule) -> Result<TrainedMlp> {
    schedule.validate()?;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::data("integration training needs matching non-empty inputs and targets"));
    }
    let n_in = inputs[0].len();
    if inputs.iter().any(|x| x.len() != n_in) {
        return Err(Error::data("integration inputs differ in width"));
    }
    if n_in != 3 * n_classes {
        return Err(Error::data(format!("integration input width {n_in} != 3 x {n_classes} classes")));
    }
    if targets.iter().any(|&t| t >= n_classes) {
        return Err(Error::data("integration target out of range"));
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite integration input"));
    }
    let mut rng = seeds::rng(schedule.seed);
    let mut mlp = IntegrationMlp::init(n_in, schedule.hidden, n_classes, &mut rng);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut epoch_loss = Vec::with_capacity(schedule.epochs);
    let mut params = mlp.params();
    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(schedule.batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
            let ts: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, grad) = mlp.loss_grad(&xs, &ts);
            total += loss * chunk.len() as f64;
            params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= lr * g);
            mlp.set_params(&params);
        }
        epoch_loss.push(total / inputs.len() as f64);
    }
    Ok(TrainedMlp { mlp, epoch_loss })
}

/// Argmax label of each input; ties go to the lowest class.
pub fn assign_labels(inputs: &[Vec<f64>], mlp: &IntegrationMlp) -> Vec<usize> {
    inputs.iter().map(|x| mlp.predict(x)).collect()
}
