use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParameterSet,
    pub v: ParameterSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }
}

/// One bias-corrected Adam update. Arithmetic is done in `f64` per element;
/// parameters and moments are stored back as `f32`.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::ContractViolation(format!("no gradient for parameter {name}")))?;
        let ok = |s: Option<&crate::tensor::TensorData>| s.is_some_and(|s| s.shape() == p.shape());
        if g.shape() != p.shape() || !ok(state.m.get(name)) || !ok(state.v.get(name)) {
            return Err(Error::ContractViolation(format!("gradient or optimizer state shape mismatch for {name}")));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("checked").data();
        let m = state.m.get_mut(name).expect("checked").data_mut();
        let v = state.v.get_mut(name).expect("checked").data_mut();
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = f64::from(g);
            let m1 = cfg.beta1 * f64::from(*m) + (1.0 - cfg.beta1) * g;
            let v1 = cfg.beta2 * f64::from(*v) + (1.0 - cfg.beta2) * g * g;
            let step = lr * (m1 / c1) / ((v1 / c2).sqrt() + cfg.eps);
            *p = (f64::from(*p) - step) as f32;
            *m = m1 as f32;
            *v = v1 as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorData;

    fn single(value: f32) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", TensorData::new([1], vec![value]).unwrap()).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = single(0.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &single(1.0), &mut state, 1e-3, &AdamConfig::default()).unwrap();
        let w = params.get("w").unwrap().data()[0];
        assert!((f64::from(w) + 1e-3).abs() < 1e-9, "{w}");
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_or_zero_lr_keeps_params() {
        let mut params = single(0.7);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &single(0.0), &mut state, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(params, single(0.7));

        adam_step(&mut params, &single(3.0), &mut state, 0.0, &AdamConfig::default()).unwrap();
        assert_eq!(params, single(0.7));
        assert_eq!(state.t, 2);
        assert!(state.m.get("w").unwrap().data()[0] != 0.0);
    }

    #[test]
    fn scalar_trace_oracle() {
        // two steps with g = 0.5 from θ = 1, written out by hand in f64
        let (b1, b2, eps, lr, g) = (0.9f64, 0.999f64, 1e-8f64, 1e-3f64, 0.5f64);
        let mut theta = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        let mut params = single(1.0);
        let mut state = AdamState::new(&params);
        for _ in 0..2 {
            adam_step(&mut params, &single(0.5), &mut state, lr, &AdamConfig::default()).unwrap();
        }
        let got = f64::from(params.get("w").unwrap().data()[0]);
        assert!((got - theta).abs() < 1e-7, "{got} vs {theta}");
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut params = single(0.0);
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &ParameterSet::new(), &mut state, 1e-3, &AdamConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::ContractViolation(m) if m.contains('w')));
        assert_eq!(state.t, 0);
    }
}
