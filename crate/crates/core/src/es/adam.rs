use crate::error::{input, structure, Result};
use crate::policy::ParameterVector;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// Search distribution of one population: its mean plus optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct EsState {
    pub theta: ParameterVector,
    pub sigma: f64,
    pub lr: f64,
    pub adam: AdamMoments,
    pub weight_decay: f64,
    pub pop_pairs: usize,
}

impl EsState {
    pub fn new(theta: ParameterVector, sigma: f64, lr: f64, weight_decay: f64, pop_pairs: usize) -> Result<Self> {
        let state = Self { adam: AdamMoments::zeros(theta.len()), theta, sigma, lr, weight_decay, pop_pairs };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(input("sigma must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(input("learning rate must be positive"));
        }
        if !(self.weight_decay.is_finite() && (0.0..1.0).contains(&self.weight_decay)) {
            return Err(input("weight decay must lie in [0, 1)"));
        }
        if self.pop_pairs == 0 {
            return Err(input("pop_pairs must be >= 1"));
        }
        if self.adam.m.len() != self.theta.len() || self.adam.v.len() != self.theta.len() {
            return Err(structure("Adam moments differ from theta length"));
        }
        Ok(())
    }
}

/// One Adam ascent step. Weight decay shrinks theta by `(1 - wd)` first.
pub fn adam_step(state: &mut EsState, gradient: &ParameterVector) -> Result<()> {
    let n = state.theta.len();
    if gradient.len() != n {
        return Err(structure(format!("gradient has {} entries, theta has {n}", gradient.len())));
    }
    let a = &mut state.adam;
    a.t += 1;
    let t = a.t as i32;
    let bias1 = 1.0 - BETA1.powi(t);
    let bias2 = 1.0 - BETA2.powi(t);
    let keep = 1.0 - state.weight_decay;
    let theta = state.theta.as_mut_slice();
    for i in 0..n {
        let g = gradient.as_slice()[i];
        a.m[i] = BETA1 * a.m[i] + (1.0 - BETA1) * g;
        a.v[i] = BETA2 * a.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = a.m[i] / bias1;
        let v_hat = a.v[i] / bias2;
        theta[i] = theta[i] * keep + state.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}
