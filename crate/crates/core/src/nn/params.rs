use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, Gradients, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Ordered, uniquely named parameter tensors with gradient accumulators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param { name, value, grad });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, i: usize) -> &Tensor<T> {
        &self.params[i].value
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.params[i].value
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::ZERO);
        }
    }

    /// Registers every parameter as a differentiable leaf, in order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    /// Registers every parameter as a constant leaf (frozen weights).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Adds the gradients of `vars` (from [`ParamSet::bind`]) into the
    /// accumulators.
    pub fn accumulate_grads(&mut self, vars: &[Var], grads: &Gradients<T>) {
        for (p, v) in self.params.iter_mut().zip(vars) {
            if let Some(g) = grads.get(*v) {
                for (a, &b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
        }
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn polyak_from(&mut self, online: &ParamSet<T>, tau: T) -> Result<()> {
        if self.params.len() != online.params.len() {
            return Err(Error::invalid("polyak update between different parameter sets"));
        }
        let keep = T::ONE - tau;
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            if t.value.shape() != o.value.shape() {
                return Err(Error::ShapeMismatch {
                    name: t.name.clone(),
                    expected: t.value.shape().to_vec(),
                    found: o.value.shape().to_vec(),
                });
            }
            for (a, &b) in t.value.data_mut().iter_mut().zip(o.value.data()) {
                *a = tau * b + keep * *a;
            }
        }
        Ok(())
    }

    /// Overwrites values from checkpoint tensors named `prefix + name`.
    pub fn load_from(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        for p in &mut self.params {
            let full = format!("{prefix}{}", p.name);
            let t = ck.tensor(&full).ok_or_else(|| Error::MissingTensor(full.clone()))?;
            if t.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    name: full,
                    expected: p.value.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
            p.value = t.cast();
        }
        Ok(())
    }

    /// Appends all tensors to a checkpoint under `prefix`.
    pub fn store_into(&self, ck: &mut Checkpoint, prefix: &str) {
        for p in &self.params {
            ck.push(format!("{prefix}{}", p.name), p.value.cast());
        }
    }
}

/// Kaiming-uniform init: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn kaiming_uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape product matches")
}

/// Saves a single parameter set as a checkpoint with empty metadata.
pub fn save_params(params: &ParamSet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut ck = Checkpoint::new(serde_json::Value::Null);
    params.store_into(&mut ck, "");
    ck.save(path)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamSet<f32>> {
    let ck = Checkpoint::load(path)?;
    let mut ps = ParamSet::new();
    for (name, t) in ck.tensors() {
        ps.add(name.clone(), t.clone())?;
    }
    Ok(ps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with bias correction. Moment buffers mirror the parameter set.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![T::ZERO; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![T::ZERO; p.value.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut ParamSet<T>) {
        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::ONE;
        let bc1 = T::from_f64(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad.data()[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.value.data_mut()[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        params.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut ps = ParamSet::<f32>::new();
        ps.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(ps.add("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = ParamSet::<f64>::new();
        ps.add("w", Tensor::from_f64(&[2], &[1.0, -2.0]).unwrap()).unwrap();
        let before = ps.clone();
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        opt.step(&mut ps);
        assert_eq!(ps, before);
    }

    #[test]
    fn first_step_moves_against_gradient() {
        let mut ps = ParamSet::<f64>::new();
        ps.add("w", Tensor::from_f64(&[1], &[1.0]).unwrap()).unwrap();
        let mut opt = Adam::new(AdamConfig::with_lr(0.1), &ps);
        ps.iter_mut().next().unwrap().grad.data_mut()[0] = 2.0; // d(w^2)/dw at 1
        opt.step(&mut ps);
        assert!(ps.value(0).data()[0] < 1.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut ps = ParamSet::<f64>::new();
        ps.add("w", Tensor::from_f64(&[2], &[1.0, -0.7]).unwrap()).unwrap();
        let mut opt = Adam::new(AdamConfig::with_lr(0.05), &ps);
        for _ in 0..500 {
            let p = ps.iter_mut().next().unwrap();
            let w = p.value.data().to_vec();
            for (g, v) in p.grad.data_mut().iter_mut().zip(w) {
                *g = 2.0 * v;
            }
            opt.step(&mut ps);
        }
        assert!(ps.value(0).data().iter().all(|v| v.abs() < 1e-3), "{:?}", ps.value(0));
    }

    #[test]
    fn polyak_limits() {
        let mut a = ParamSet::<f64>::new();
        a.add("w", Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap()).unwrap();
        let mut b = ParamSet::<f64>::new();
        b.add("w", Tensor::from_f64(&[2], &[3.0, 5.0]).unwrap()).unwrap();
        let orig = b.clone();
        b.polyak_from(&a, 0.0).unwrap();
        assert_eq!(b, orig);
        b.polyak_from(&a, 1.0).unwrap();
        assert_eq!(b.value(0), a.value(0));
    }
}
