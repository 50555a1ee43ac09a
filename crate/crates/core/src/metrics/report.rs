use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::error::{arg_err, Result};

use super::{iou_per_class, miou, ConfusionMatrix};

/// `background`, `front1`, …, `front{n-1}`.
pub fn class_names(n: usize) -> Vec<String> {
    std::iter::once("background".to_string()).chain((1..n).map(|i| format!("front{i}"))).collect()
}

pub fn binary_class_names() -> Vec<String> {
    vec!["background".into(), "front".into()]
}

/// Per-class IoU and mIoU, both ×100.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub names: Vec<String>,
    pub per_class: Vec<Option<f64>>,
    pub miou: Option<f64>,
    /// Classes absent from both prediction and ground truth, left out of the mean.
    pub excluded_classes: usize,
}

fn two_dp(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl Report {
    pub fn to_text(&self) -> String {
        let width = self.names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
        let cell = |v: Option<f64>| v.map_or_else(|| format!("{:>7}", "-"), |v| format!("{v:>7.2}"));
        let mut out = format!("# excluded classes: {}\n", self.excluded_classes);
        writeln!(out, "{:<width$}  {:>7}", "class", "IoU").unwrap();
        for (name, v) in self.names.iter().zip(&self.per_class) {
            writeln!(out, "{name:<width$}  {}", cell(*v)).unwrap();
        }
        writeln!(out, "{:<width$}  {}", "mIoU", cell(self.miou)).unwrap();
        out
    }

    pub fn to_json(&self) -> Value {
        let per_class: Map<String, Value> =
            self.names.iter().zip(&self.per_class).map(|(n, v)| (n.clone(), json!(v.map(two_dp)))).collect();
        json!({
            "per_class": per_class,
            "miou": self.miou.map(two_dp),
            "excluded_classes": self.excluded_classes,
        })
    }
}

pub fn report(cm: &ConfusionMatrix, names: &[String]) -> Result<Report> {
    if names.len() != cm.classes() {
        return Err(arg_err!("{} class names for a {}-class matrix", names.len(), cm.classes()));
    }
    let per_class: Vec<Option<f64>> = iou_per_class(cm).into_iter().map(|v| v.map(|v| v * 100.0)).collect();
    Ok(Report {
        names: names.to_vec(),
        excluded_classes: per_class.iter().filter(|v| v.is_none()).count(),
        per_class,
        miou: miou(cm).map(|v| v * 100.0),
    })
}
