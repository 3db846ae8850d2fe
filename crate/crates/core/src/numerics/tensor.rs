use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Dense row-major array with a same-shape gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape {
                op: "tensor",
                detail: alloc::format!("shape {:?} needs {} values, got {}", shape, n, values.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            grad: vec![0.0; n],
            values,
        })
    }

    /// Uniform in `[-scale, scale]`.
    pub fn uniform(shape: &[usize], scale: f64, rng: &mut crate::Rng) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.values {
            *v = rng.gen_range(-scale..=scale);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows and columns when viewed as a matrix; vectors are a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => {
                let cols = *self.shape.last().unwrap();
                (self.values.len() / cols.max(1), cols)
            }
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        for (a, b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Rounds every value to the nearest 32-bit float.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
    }
}

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
///
/// Values are held at 32-bit precision (the checkpoint precision) between
/// updates; arithmetic on them is 64-bit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, mut tensor: Tensor) -> Result<ParamId> {
        if self.id(name).is_some() {
            return Err(invalid(alloc::format!("duplicate parameter {name}")));
        }
        tensor.quantize_f32();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn zero_grad_of(&mut self, ids: &[ParamId]) {
        for &id in ids {
            self.tensors[id.0].zero_grad();
        }
    }

    /// Euclidean norm of the concatenated gradients of `ids`.
    pub fn grad_norm(&self, ids: &[ParamId]) -> f64 {
        let sq: f64 = ids.iter().flat_map(|id| self.tensors[id.0].grad.iter()).map(|g| g * g).sum();
        math::sqrt(sq)
    }

    /// Scales the gradients of `ids` by `min(1, max_norm / ‖g‖)` and returns
    /// the norm before clipping.
    pub fn clip_grad_norm(&mut self, ids: &[ParamId], max_norm: f64) -> f64 {
        let norm = self.grad_norm(ids);
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for &id in ids {
                self.tensors[id.0].grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    /// 64-bit FNV-1a over the values of `ids`; used to detect writes.
    pub fn fingerprint(&self, ids: &[ParamId]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for id in ids {
            for v in &self.tensors[id.0].values {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Copies values of same-named, same-shaped parameters from `other`.
    /// Returns how many parameters were copied.
    pub fn copy_matching(&mut self, other: &ParamStore, rename: impl Fn(&str) -> Option<String>) -> usize {
        let mut copied = 0;
        for (src_name, src) in other.iter() {
            let Some(dst_name) = rename(src_name) else { continue };
            if let Some(id) = self.id(&dst_name) {
                let dst = &mut self.tensors[id.0];
                if dst.shape == src.shape {
                    dst.values.copy_from_slice(&src.values);
                    copied += 1;
                }
            }
        }
        copied
    }
}
