use serde::{Deserialize, Serialize};

/// Reduce-on-plateau learning rate: after `patience` consecutive epochs that
/// fail to strictly beat the best validation loss, multiply by `factor`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(lr0: f64, factor: f64, patience: usize) -> Self {
        Self { lr: lr0, factor, patience, best: None, bad_epochs: 0 }
    }

    /// Records one epoch's validation loss and returns the rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if self.best.map_or(true, |b| loss < b) {
            self.best = Some(loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Learning rate in effect after each epoch of `history`.
pub fn plateau_trace(history: &[f64], lr0: f64, factor: f64, patience: usize) -> Vec<f64> {
    let mut s = PlateauSchedule::new(lr0, factor, patience);
    history.iter().map(|&l| s.observe(l)).collect()
}

/// Learning rate after replaying the whole `history`.
pub fn plateau_schedule(history: &[f64], lr0: f64, factor: f64, patience: usize) -> f64 {
    plateau_trace(history, lr0, factor, patience).last().copied().unwrap_or(lr0)
}
