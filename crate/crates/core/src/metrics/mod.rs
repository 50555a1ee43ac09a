//! Confusion matrices, IoU scores, reports and heatmap export.

mod heatmap;
mod report;

pub use heatmap::{export_heatmap, read_csv_grid, HeatmapFormat};
pub use report::{binary_class_names, class_names, report, Report};

use crate::error::{arg_err, Result};

/// Pixel counts `counts[t][p]` of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, pred: &[u8], truth: &[u8]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(arg_err!("mask sizes differ: {} predicted vs {} true", pred.len(), truth.len()));
        }
        let k = self.classes;
        if let Some(&bad) = pred.iter().chain(truth).find(|&&v| usize::from(v) >= k) {
            return Err(arg_err!("class {bad} outside 0..{k}"));
        }
        for (&p, &t) in pred.iter().zip(truth) {
            self.counts[usize::from(t) * k + usize::from(p)] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.classes != self.classes {
            return Err(arg_err!("cannot merge {}-class and {}-class matrices", self.classes, other.classes));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// The two-class matrix obtained by mapping every non-zero class to 1.
    pub fn collapse(&self) -> Self {
        let mut out = Self::new(2);
        for t in 0..self.classes {
            for p in 0..self.classes {
                let (bt, bp) = (usize::from(t > 0), usize::from(p > 0));
                out.counts[bt * 2 + bp] += self.get(t, p);
            }
        }
        out
    }

    /// `TP / (TP + FP + FN)` per class as an exact fraction; `None` when the
    /// class appears in neither mask.
    pub fn iou_fractions(&self) -> Vec<Option<(u64, u64)>> {
        (0..self.classes)
            .map(|i| {
                let tp = self.get(i, i);
                let row: u64 = (0..self.classes).map(|j| self.get(i, j)).sum();
                let col: u64 = (0..self.classes).map(|j| self.get(j, i)).sum();
                let union = row + col - tp;
                (union > 0).then_some((tp, union))
            })
            .collect()
    }
}

pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    cm.iou_fractions().into_iter().map(|f| f.map(|(n, d)| n as f64 / d as f64)).collect()
}

/// Mean of the defined per-class IoUs; `None` if no class is defined.
pub fn miou(cm: &ConfusionMatrix) -> Option<f64> {
    let defined: Vec<f64> = iou_per_class(cm).into_iter().flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Maps background to 0 and every front class to 1.
pub fn binary_collapse(mask: &[u8]) -> Vec<u8> {
    mask.iter().map(|&v| u8::from(v > 0)).collect()
}
