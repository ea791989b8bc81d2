//! Named parameter storage, tape binding and JSON checkpoints.

use std::collections::BTreeMap;

use fg_core::tensor::DenseTensor;
use fg_core::uai::format_g17;
use serde::Deserialize;

use crate::error::{NnError, Result};
use crate::tape::{Gradients, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

/// Parameters keyed by name, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

/// Tape leaves created for each parameter of a store.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NnError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.values.len()).sum()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> Result<()> {
        if values.len() != shape_len(&shape) {
            return Err(NnError::ShapeMismatch {
                name: name.to_string(),
                expected: shape,
                actual: vec![values.len()],
            });
        }
        if self.entries.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        let grads = vec![0.0; values.len()];
        self.entries.insert(name.to_string(), Param { shape, values, grads });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Sets every value to `v`.
    pub fn fill(&mut self, v: f64) {
        for p in self.entries.values_mut() {
            p.values.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grads.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Flat view of all values in name order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.entries.values().flat_map(|p| p.values.iter().copied()).collect()
    }

    /// Mutable reference to the `k`-th scalar in name order.
    pub fn flat_value_mut(&mut self, mut k: usize) -> &mut f64 {
        for p in self.entries.values_mut() {
            if k < p.values.len() {
                return &mut p.values[k];
            }
            k -= p.values.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.entries.values().flat_map(|p| p.grads.iter().copied()).collect()
    }

    /// Puts every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|(name, p)| {
                let t = DenseTensor::new(p.shape.clone(), p.values.clone()).expect("validated on insert");
                (name.clone(), tape.leaf(t))
            })
            .collect();
        Bound { vars }
    }

    /// Per-parameter gradients from a backward pass, in name order.
    /// Parameters the loss does not depend on get zeros.
    pub fn extract_grads(&self, bound: &Bound, grads: &Gradients) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|(name, p)| {
                bound
                    .vars
                    .get(name)
                    .and_then(|&v| grads.get(v))
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; p.values.len()])
            })
            .collect()
    }

    /// `grads += scale * delta` with `delta` in name order.
    pub fn add_grads(&mut self, delta: &[Vec<f64>], scale: f64) {
        assert_eq!(delta.len(), self.entries.len(), "gradient list length");
        for (p, d) in self.entries.values_mut().zip(delta) {
            for (g, x) in p.grads.iter_mut().zip(d) {
                *g += scale * x;
            }
        }
    }

    /// Checkpoint as `{name: {shape, values}}` with 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let mut out = String::from("{\n");
        for (i, (name, p)) in self.entries.iter().enumerate() {
            if let Some(bad) = p.values.iter().find(|v| !v.is_finite()) {
                return Err(NnError::Checkpoint(format!("{name} holds non-finite value {bad}")));
            }
            let shape: Vec<String> = p.shape.iter().map(|s| s.to_string()).collect();
            let values: Vec<String> = p.values.iter().map(|&v| format_g17(v)).collect();
            out.push_str(&format!(
                "  {}: {{\"shape\": [{}], \"values\": [{}]}}",
                serde_json::to_string(name).expect("string serialises"),
                shape.join(", "),
                values.join(", ")
            ));
            out.push_str(if i + 1 < self.entries.len() { ",\n" } else { "\n" });
        }
        out.push_str("}\n");
        Ok(out)
    }

    /// Loads values from a checkpoint whose entries must match `self` in
    /// names and shapes exactly.
    pub fn load_json(&mut self, text: &str) -> Result<()> {
        #[derive(Deserialize)]
        struct Entry {
            shape: Vec<usize>,
            values: Vec<f64>,
        }
        let parsed: BTreeMap<String, Entry> =
            serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        for name in parsed.keys() {
            if !self.entries.contains_key(name) {
                return Err(NnError::Checkpoint(format!("unexpected parameter {name}")));
            }
        }
        for (name, p) in &self.entries {
            let e = parsed.get(name).ok_or_else(|| NnError::MissingParam(name.clone()))?;
            if e.shape != p.shape || e.values.len() != p.values.len() {
                return Err(NnError::ShapeMismatch {
                    name: name.clone(),
                    expected: p.shape.clone(),
                    actual: e.shape.clone(),
                });
            }
        }
        for (name, p) in self.entries.iter_mut() {
            p.values.clone_from(&parsed[name].values);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a/w", vec![2, 2], vec![0.1, -1.0 / 3.0, 1e-300, 2.5e10]).unwrap();
        s.insert("a/b", vec![2], vec![0.0, -0.0]).unwrap();
        s
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let s = store();
        let mut t = store();
        t.fill(7.0);
        t.load_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s.flat_values(), t.flat_values());
    }

    #[test]
    fn loader_rejects_shape_change() {
        let s = store();
        let mut other = ParamStore::new();
        other.insert("a/w", vec![4], vec![0.0; 4]).unwrap();
        other.insert("a/b", vec![2], vec![0.0; 2]).unwrap();
        assert!(matches!(other.load_json(&s.to_json().unwrap()), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn loader_rejects_unknown_and_missing() {
        let s = store();
        let mut small = ParamStore::new();
        small.insert("a/b", vec![2], vec![0.0; 2]).unwrap();
        assert!(small.load_json(&s.to_json().unwrap()).is_err());
        let mut big = store();
        big.insert("c", vec![1], vec![0.0]).unwrap();
        assert!(matches!(big.load_json(&s.to_json().unwrap()), Err(NnError::MissingParam(_))));
    }

    #[test]
    fn insert_validates() {
        let mut s = store();
        assert!(s.insert("a/b", vec![2], vec![0.0; 2]).is_err());
        assert!(s.insert("x", vec![3], vec![0.0; 2]).is_err());
    }
}
