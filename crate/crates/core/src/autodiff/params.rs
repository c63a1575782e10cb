use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameter tensors with their gradients and Adam moments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    step: u64,
}

/// Parameters registered as variables on one graph, aligned with store ids.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: usize) -> Var {
        self.vars[id]
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its id.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name '{name}'")));
        }
        let (r, c) = value.shape();
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.grads.push(Matrix::zeros(r, c));
        self.first_moment.push(Matrix::zeros(r, c));
        self.second_moment.push(Matrix::zeros(r, c));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: usize) -> &Matrix {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Matrix {
        &mut self.values[id]
    }

    pub fn grad(&self, id: usize) -> &Matrix {
        &self.grads[id]
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.id(name).map(move |i| &mut self.values[i])
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn moments(&self, id: usize) -> (&Matrix, &Matrix) {
        (&self.first_moment[id], &self.second_moment[id])
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn set_optimizer_state(&mut self, id: usize, first: Matrix, second: Matrix) -> Result<()> {
        let shape = self.values[id].shape();
        if first.shape() != shape || second.shape() != shape {
            return Err(Error::config(format!(
                "optimizer state for '{}' has the wrong shape",
                self.names[id]
            )));
        }
        self.first_moment[id] = first;
        self.second_moment[id] = second;
        Ok(())
    }

    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    /// Copies every parameter onto `graph` as a differentiable leaf.
    pub fn bind(&self, graph: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self.values.iter().map(|v| graph.variable(v.clone())).collect(),
        }
    }

    /// Copies every parameter onto `graph` as a constant, for forward-only use.
    pub fn bind_constants(&self, graph: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self.values.iter().map(|v| graph.constant(v.clone())).collect(),
        }
    }

    /// Adds the gradients held by `graph` into the store.
    pub fn accumulate_grads(&mut self, graph: &Graph, bound: &BoundParams) {
        for (g, &v) in self.grads.iter_mut().zip(&bound.vars) {
            if let Some(src) = graph.grad(v) {
                g.add_assign(src);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// Snapshot of the parameter values only.
    pub fn values_snapshot(&self) -> Vec<Matrix> {
        self.values.clone()
    }

    pub fn restore_values(&mut self, values: Vec<Matrix>) {
        debug_assert_eq!(values.len(), self.values.len());
        self.values = values;
    }

    /// One bias-corrected Adam update, then clears the gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for id in 0..self.values.len() {
            let grad = self.grads[id].data();
            let m = self.first_moment[id].data_mut();
            for (mi, &g) in m.iter_mut().zip(grad) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            }
            let v = self.second_moment[id].data_mut();
            for (vi, &g) in v.iter_mut().zip(grad) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            }
            let (m, v) = (self.first_moment[id].data(), self.second_moment[id].data());
            for ((p, &mi), &vi) in self.values[id].data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grads();
    }
}
