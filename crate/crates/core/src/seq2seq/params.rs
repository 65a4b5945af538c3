//! Named parameter storage and the Adam optimizer.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    #[serde(flatten)]
    pub value: Matrix,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamStore {
    params: Vec<NamedParam>,
}

impl ParamStore {
    pub fn add(&mut self, name: &str, value: Matrix) -> usize {
        debug_assert!(self.index_of(name).is_none(), "duplicate parameter {name}");
        self.params.push(NamedParam {
            name: name.to_string(),
            value,
        });
        self.params.len() - 1
    }

    /// Xavier-uniform initialized matrix.
    pub fn add_xavier(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> usize {
        let bound = libm::sqrt(6.0 / (rows + cols) as f64);
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn get(&self, idx: usize) -> &NamedParam {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut NamedParam {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedParam> {
        self.params.iter()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(
            self.params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows, p.value.cols))
                .collect(),
        )
    }

    /// Same names and shapes as `other`.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name && a.value.rows == b.value.rows && a.value.cols == b.value.cols
            })
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(Vec<Matrix>);

impl Grads {
    pub fn get(&self, idx: usize) -> &Matrix {
        &self.0[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Matrix {
        &mut self.0[idx]
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.0 {
            m.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(
            self.0
                .iter()
                .flat_map(|m| m.data.iter())
                .map(|x| x * x)
                .sum(),
        )
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.0.iter_mut()
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: store.zero_grads(),
            v: store.zero_grads(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (i, p) in store.params.iter_mut().enumerate() {
            let g = &grads.0[i].data;
            let m = &mut self.m.0[i].data;
            let v = &mut self.v.0[i].data;
            for (j, w) in p.value.data.iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
        }
    }
}
