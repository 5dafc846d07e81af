//! Flat parameter storage shared by all models.
//!
//! Layers hold [`PRef`] handles into a [`ParamSet`]; per-sample gradients go
//! into a [`GradSet`] with the same layout. Keeping values and gradients in
//! index-parallel vectors makes optimizers, checkpoints, hashing, and
//! finite-difference checks uniform across every model in the crate.

use ndarray::ArrayD;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PRef(pub(crate) usize);

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<ArrayD<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> PRef {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        PRef(self.values.len() - 1)
    }

    pub fn get(&self, r: PRef) -> &ArrayD<f64> {
        &self.values[r.0]
    }

    pub fn get_mut(&mut self, r: PRef) -> &mut ArrayD<f64> {
        &mut self.values[r.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[ArrayD<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [ArrayD<f64>] {
        &mut self.values
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zero_grads(&self) -> GradSet {
        GradSet {
            grads: self
                .values
                .iter()
                .map(|v| ArrayD::zeros(v.raw_dim()))
                .collect(),
        }
    }

    /// SHA-256 over names, shapes, and little-endian value bytes. Used for
    /// freeze-integrity checks.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, value) in self.names.iter().zip(self.values.iter()) {
            hasher.update(name.as_bytes());
            for d in value.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for x in value.iter() {
                hasher.update(x.to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }

    /// Copies values from `other` into parameters with matching names.
    /// Returns the names that were not found in `other`.
    pub fn load_matching(&mut self, other: &ParamSet) -> Vec<String> {
        let mut missing = Vec::new();
        for i in 0..self.names.len() {
            match other.index_of(&self.names[i]) {
                Some(j) => {
                    assert_eq!(
                        self.values[i].shape(),
                        other.values[j].shape(),
                        "shape mismatch for parameter {}",
                        self.names[i]
                    );
                    self.values[i] = other.values[j].clone();
                }
                None => missing.push(self.names[i].clone()),
            }
        }
        missing
    }
}

#[derive(Debug, Clone)]
pub struct GradSet {
    pub grads: Vec<ArrayD<f64>>,
}

impl GradSet {
    pub fn get(&self, r: PRef) -> &ArrayD<f64> {
        &self.grads[r.0]
    }

    pub fn get_mut(&mut self, r: PRef) -> &mut ArrayD<f64> {
        &mut self.grads[r.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &GradSet) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (a, b) in self.grads.iter_mut().zip(other.grads.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            *g *= s;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn hash_changes_with_values() {
        let mut ps = ParamSet::new();
        let r = ps.add("w", ArrayD::zeros(vec![2, 2]));
        let h0 = ps.content_hash();
        ps.get_mut(r)[[0, 0]] = 1.0;
        assert_ne!(h0, ps.content_hash());
    }

    #[test]
    fn load_matching_reports_missing() {
        let mut a = ParamSet::new();
        a.add("x", ArrayD::zeros(vec![2]));
        a.add("extra", ArrayD::zeros(vec![1]));
        let mut b = ParamSet::new();
        b.add("x", ArrayD::from_elem(vec![2], 5.0));
        let missing = a.load_matching(&b);
        assert_eq!(missing, vec!["extra".to_string()]);
        assert_eq!(a.get(PRef(0))[[0]], 5.0);
    }
}
