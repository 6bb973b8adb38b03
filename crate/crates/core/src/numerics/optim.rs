use std::collections::BTreeMap;

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One learnable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub first_moment: Matrix,
    pub second_moment: Matrix,
}

impl Param {
    fn new(name: String, value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            name,
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
        }
    }
}

/// Named parameters in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::validation(format!("duplicate parameter {name}")));
        }
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param::new(name, value));
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub(crate) fn push_restored(&mut self, param: Param) -> Result<()> {
        if self.by_name.contains_key(&param.name) {
            return Err(Error::Format(format!("duplicate tensor {}", param.name)));
        }
        self.by_name.insert(param.name.clone(), self.params.len());
        self.params.push(param);
        Ok(())
    }

    pub fn accumulate_grad(&mut self, id: ParamId, grad: &Matrix) {
        self.params[id.0].grad.add_assign(grad);
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied as `θ -= lr · weight_decay · θ`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// One bias-corrected Adam update of every parameter, then zeroes gradients.
pub fn adam_step(store: &mut ParamStore, hyper: &AdamConfig) {
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for p in &mut store.params {
        let theta = p.value.as_mut_slice();
        let g = p.grad.as_slice();
        let m = p.first_moment.as_mut_slice();
        let v = p.second_moment.as_mut_slice();
        for i in 0..theta.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let update = m_hat / (v_hat.sqrt() + hyper.eps) + hyper.weight_decay * theta[i];
            theta[i] -= hyper.lr * update;
        }
        p.grad.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Matrix::scalar(value)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = ParamStore::new();
        let id = s.add("w", Matrix::from_rows(&[vec![1.5, -2.0]]).unwrap()).unwrap();
        let before = s.value(id).clone();
        adam_step(&mut s, &AdamConfig::default());
        assert_eq!(s.value(id), &before);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02] {
            let (mut s, id) = single(1.0);
            s.accumulate_grad(id, &Matrix::scalar(g));
            let hyper = AdamConfig { lr: 0.1, ..Default::default() };
            adam_step(&mut s, &hyper);
            let delta = s.value(id).item() - 1.0;
            assert!((delta + 0.1 * g.signum()).abs() < 1e-6, "delta {delta}");
            assert_eq!(s.get(id).grad.item(), 0.0);
        }
    }

    #[test]
    fn descends_a_parabola() {
        let (mut s, id) = single(3.0);
        let hyper = AdamConfig { lr: 0.1, ..Default::default() };
        let mut prev = 3.0f64;
        for _ in 0..2 {
            let x = s.value(id).item();
            s.accumulate_grad(id, &Matrix::scalar(2.0 * x));
            adam_step(&mut s, &hyper);
            let now = s.value(id).item();
            assert!(now.abs() < prev.abs());
            prev = now;
        }
    }

    #[test]
    fn zero_lr_is_a_no_op_even_with_decay() {
        let (mut s, id) = single(2.0);
        s.accumulate_grad(id, &Matrix::scalar(5.0));
        adam_step(&mut s, &AdamConfig { lr: 0.0, weight_decay: 0.1, ..Default::default() });
        assert_eq!(s.value(id).item(), 2.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = single(0.0);
        assert!(s.add("x", Matrix::scalar(1.0)).is_err());
    }
}
