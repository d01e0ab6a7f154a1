use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameter;

/// Step-halving learning rate: `initial · 0.5^⌊epoch / half_life_epochs⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub initial: f64,
    pub half_life_epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.01,
            half_life_epochs: 75,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.initial.is_finite()) || self.half_life_epochs == 0 {
            return Err(Error::Config(
                "learning rate must be positive and half_life_epochs at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn lr_at_epoch(epoch: usize, sched: &LrSchedule) -> f64 {
    let halvings = (epoch / sched.half_life_epochs).min(i32::MAX as usize) as i32;
    sched.initial * 0.5f64.powi(halvings)
}

/// First and second moments for every parameter, in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .into_iter()
            .map(|p| vec![0.0; p.tensor().len()])
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            v: zeros.clone(),
            m: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }
}

/// One Adam update from the gradients stored on `params`. Nothing is changed
/// if any gradient is missing or non-finite.
pub fn adam_step(params: Vec<&mut Parameter>, state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        let g = p
            .grad()
            .ok_or_else(|| Error::Contract(format!("{} has no gradient", p.name())))?;
        if g.len() != state.m[i].len() {
            return Err(Error::Contract(format!("{} changed shape", p.name())));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {bad} in {}",
                p.name()
            )));
        }
    }

    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in params.into_iter().enumerate() {
        let g = p.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, w) in p.tensor_mut().data_mut().iter_mut().enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn param(values: &[f64], grad: &[f64]) -> Parameter {
        let mut p = Parameter::new("w", Tensor::new(1, values.len(), values.to_vec()).unwrap());
        p.tensor_mut().set_grad(grad.to_vec()).unwrap();
        p
    }

    #[test]
    fn schedule_plateaus() {
        let s = LrSchedule::default();
        let got: Vec<f64> = [0, 74, 75, 149, 150, 224, 225, 299]
            .iter()
            .map(|&e| lr_at_epoch(e, &s))
            .collect();
        assert_eq!(
            got,
            vec![0.01, 0.01, 0.005, 0.005, 0.0025, 0.0025, 0.00125, 0.00125]
        );
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = param(&[1.0, -2.0], &[0.3, -4.0]);
        let mut st = AdamState::new([&p]);
        adam_step(vec![&mut p], &mut st, 0.01).unwrap();
        let d = p.tensor().data();
        assert!((d[0] - 0.99).abs() < 1e-9);
        assert!((d[1] + 1.99).abs() < 1e-9);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = param(&[1.5], &[0.0]);
        let mut st = AdamState::new([&p]);
        adam_step(vec![&mut p], &mut st, 0.1).unwrap();
        assert_eq!(p.tensor().data(), &[1.5]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = param(&[1.0], &[f64::NAN]);
        let mut st = AdamState::new([&p]);
        let err = adam_step(vec![&mut p], &mut st, 0.1).unwrap_err();
        assert!(err.to_string().contains('w'));
        assert_eq!(p.tensor().data(), &[1.0]);
        assert_eq!(st.step_count(), 0);
    }
}
