//! Named parameter tensors.
//!
//! Values are held as f64 for computation but always kept f32-representable
//! (rounded at initialisation and after each update), so the f32 checkpoint
//! payload round-trips bit-exactly.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row-major tensor; rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

pub(crate) fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Uniform initialisation range for weights.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    tensors: Vec<Tensor>,
    index: IndexMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn insert(&mut self, name: &str, shape: Vec<usize>, mut data: Vec<f64>) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter name {name}");
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch for {name}");
        for x in &mut data {
            *x = round_f32(*x);
        }
        let id = self.tensors.len();
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape,
            data,
        });
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    pub(crate) fn uniform(&mut self, name: &str, shape: Vec<usize>, rng: &mut ChaCha8Rng) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE)).collect();
        self.insert(name, shape, data)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.tensors.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }

    /// Overwrites a tensor's values; the shape must match.
    pub fn assign(&mut self, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
        let id = self.id(name).ok_or_else(|| Error::Integrity(format!("unknown parameter '{name}'")))?;
        let t = self.get_mut(id);
        if t.shape != shape || t.data.len() != data.len() {
            return Err(Error::Integrity(format!(
                "shape mismatch for '{name}': model {:?}, source {:?}",
                t.shape, shape
            )));
        }
        for (dst, &src) in t.data.iter_mut().zip(data) {
            *dst = round_f32(src);
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Grads {
        Grads {
            data: self.tensors.iter().map(|t| vec![0.0; t.numel()]).collect(),
        }
    }
}

/// Gradient buffers aligned with a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub(crate) data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.data.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.data.iter_mut().flatten() {
            *g *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.data.iter().map(Vec::as_slice)
    }

    /// Checks that every buffer matches the corresponding tensor size.
    pub fn check_aligned(&self, params: &ModelParams) -> Result<()> {
        if self.data.len() != params.len() {
            return Err(Error::Integrity(format!(
                "gradient set has {} tensors, parameters have {}",
                self.data.len(),
                params.len()
            )));
        }
        for (g, (_, t)) in self.data.iter().zip(params.iter()) {
            if g.len() != t.numel() {
                return Err(Error::Integrity(format!("gradient size mismatch for '{}'", t.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn values_are_f32_representable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ModelParams::new();
        let id = p.uniform("w", vec![3, 4], &mut rng);
        for &x in &p.get(id).data {
            assert_eq!(x, x as f32 as f64);
            assert!(x.abs() <= INIT_RANGE);
        }
    }

    #[test]
    fn assign_checks_shape() {
        let mut p = ModelParams::new();
        p.insert("b", vec![2], vec![0.0, 0.0]);
        assert!(p.assign("b", &[3], &[1.0, 2.0, 3.0]).is_err());
        assert!(p.assign("nope", &[2], &[1.0, 2.0]).is_err());
        p.assign("b", &[2], &[1.0, 2.0]).unwrap();
        assert_eq!(p.by_name("b").unwrap().data, [1.0, 2.0]);
    }
}
