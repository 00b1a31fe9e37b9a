//! Pixel-level evaluation: confusion matrix, global and class-average
//! accuracy, per-class, mean and frequency-weighted IoU. Pixels whose ground
//! truth is unknown (negative) are skipped everywhere.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Raw C×C counts, `[gt][pred]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub n_classes: usize,
    pub counts: Vec<u64>,
}

impl Confusion {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n_classes + pred]
    }

    /// Accumulate one prediction/ground-truth pair of label maps.
    pub fn add(&mut self, pred: &[i32], gt: &[i32]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::data(format!(
                "prediction has {} pixels, ground truth {}",
                pred.len(),
                gt.len()
            )));
        }
        let c = self.n_classes;
        for (&p, &g) in pred.iter().zip(gt) {
            if g < 0 {
                continue;
            }
            let (g, p) = (g as usize, p as usize);
            if g >= c || p >= c {
                return Err(Error::data(format!("label out of range for {c} classes")));
            }
            self.counts[g * c + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_normalized(&self) -> Vec<f64> {
        let c = self.n_classes;
        let mut out = vec![0.0; c * c];
        for a in 0..c {
            let row = &self.counts[a * c..(a + 1) * c];
            let n: u64 = row.iter().sum();
            if n > 0 {
                for b in 0..c {
                    out[a * c + b] = row[b] as f64 / n as f64;
                }
            }
        }
        out
    }

    pub fn report(&self) -> Result<EvalReport> {
        let c = self.n_classes;
        let total = self.total();
        if total == 0 {
            return Err(Error::data("no evaluable pixels"));
        }
        let gt_count: Vec<u64> = (0..c).map(|a| (0..c).map(|b| self.get(a, b)).sum()).collect();
        let pred_count: Vec<u64> = (0..c).map(|b| (0..c).map(|a| self.get(a, b)).sum()).collect();
        let tp: Vec<u64> = (0..c).map(|a| self.get(a, a)).collect();
        let present: Vec<usize> = (0..c).filter(|&a| gt_count[a] > 0).collect();

        let global_acc = tp.iter().sum::<u64>() as f64 / total as f64;
        let class_acc = present
            .iter()
            .map(|&a| tp[a] as f64 / gt_count[a] as f64)
            .sum::<f64>()
            / present.len() as f64;
        let iou: Vec<f64> = (0..c)
            .map(|a| {
                let union = gt_count[a] + pred_count[a] - tp[a];
                if union == 0 {
                    0.0
                } else {
                    tp[a] as f64 / union as f64
                }
            })
            .collect();
        let mean_iou = present.iter().map(|&a| iou[a]).sum::<f64>() / present.len() as f64;
        let weighted_iou = present
            .iter()
            .map(|&a| gt_count[a] as f64 / total as f64 * iou[a])
            .sum();
        Ok(EvalReport {
            confusion: self.clone(),
            normalized: self.row_normalized(),
            global_acc,
            class_acc,
            iou,
            present: present.len(),
            class_present: (0..c).map(|a| gt_count[a] > 0).collect(),
            mean_iou,
            weighted_iou,
            evaluated_pixels: total,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: Confusion,
    /// Row-normalized confusion (per-class recall rows).
    pub normalized: Vec<f64>,
    pub global_acc: f64,
    pub class_acc: f64,
    pub iou: Vec<f64>,
    /// Number of classes present in the ground truth.
    pub present: usize,
    pub class_present: Vec<bool>,
    pub mean_iou: f64,
    pub weighted_iou: f64,
    pub evaluated_pixels: u64,
}

/// Evaluate paired label maps.
pub fn evaluate<'a, I>(pairs: I, n_classes: usize) -> Result<EvalReport>
where
    I: IntoIterator<Item = (&'a [i32], &'a [i32])>,
{
    let mut conf = Confusion::new(n_classes);
    for (pred, gt) in pairs {
        conf.add(pred, gt)?;
    }
    conf.report()
}

impl EvalReport {
    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "evaluated pixels: {}", self.evaluated_pixels);
        let _ = writeln!(s, "global accuracy:  {:.4}", self.global_acc);
        let _ = writeln!(s, "class accuracy:   {:.4}", self.class_acc);
        let _ = writeln!(s, "mean IoU:         {:.4}", self.mean_iou);
        let _ = writeln!(s, "weighted IoU:     {:.4}", self.weighted_iou);
        let _ = writeln!(s, "\n{:<12} {:>8} {:>8}", "class", "recall", "IoU");
        let c = self.confusion.n_classes;
        for a in 0..c {
            let name = names.get(a).map_or("?", String::as_str);
            if self.class_present[a] {
                let _ = writeln!(s, "{:<12} {:>8.4} {:>8.4}", name, self.normalized[a * c + a], self.iou[a]);
            } else {
                let _ = writeln!(s, "{:<12} {:>8} {:>8.4}", name, "-", self.iou[a]);
            }
        }
        s
    }

    /// Row-normalized confusion grid as CSV, rows = ground truth.
    pub fn confusion_csv(&self, names: &[String]) -> String {
        let c = self.confusion.n_classes;
        let mut s = format!("gt\\pred,{}\n", names.join(","));
        for (a, name) in names.iter().enumerate().take(c) {
            let cells: Vec<String> = (0..c).map(|b| format!("{:.6}", self.normalized[a * c + b])).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        s
    }
}
