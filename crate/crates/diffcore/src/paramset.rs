use std::collections::HashMap;

use crate::error::{DiffError, Result};
use crate::tensor::Tensor;

/// An ordered collection of named tensors.
///
/// Iteration order is insertion order and is part of the contract: two sets
/// are *congruent* when they hold the same names in the same order with the
/// same shapes. Gradients are returned congruent to the parameters they were
/// taken with respect to, so the two can be walked in lockstep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Appends a named tensor. Duplicate names are an error.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(DiffError::DuplicateName(name));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Some(&mut self.tensors[i]),
            None => None,
        }
    }

    /// Like `get` but failure carries the missing name.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(|s| s.as_str())
            .zip(self.tensors.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names
            .iter()
            .map(|s| s.as_str())
            .zip(self.tensors.iter_mut())
    }

    /// Total number of scalar elements across all entries.
    pub fn element_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// True when both sets hold the same names, in the same order, with the
    /// same shapes.
    pub fn congruent(&self, other: &ParamSet) -> bool {
        self.ensure_congruent(other).is_ok()
    }

    /// `congruent` with a diagnostic error describing the first divergence.
    pub fn ensure_congruent(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(DiffError::NotCongruent(format!(
                "{} entries vs {}",
                self.len(),
                other.len()
            )));
        }
        for i in 0..self.len() {
            if self.names[i] != other.names[i] {
                return Err(DiffError::NotCongruent(format!(
                    "entry {} is '{}' vs '{}'",
                    i, self.names[i], other.names[i]
                )));
            }
            if self.tensors[i].shape() != other.tensors[i].shape() {
                return Err(DiffError::NotCongruent(format!(
                    "'{}' has shape {:?} vs {:?}",
                    self.names[i],
                    self.tensors[i].shape(),
                    other.tensors[i].shape()
                )));
            }
        }
        Ok(())
    }

    /// Builds a new set by applying `f` to every tensor, keeping names and
    /// order.
    pub fn map(&self, mut f: impl FnMut(&str, &Tensor) -> Tensor) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, t) in self.iter() {
            out.insert(name, f(name, t)).expect("names already unique");
        }
        out
    }

    /// In-place descent step: `self[k] <- self[k] - lr * grads[k]`.
    /// The gradient set must be congruent with `self`.
    pub fn descend(&mut self, grads: &ParamSet, lr: f64) -> Result<()> {
        self.ensure_congruent(grads)?;
        for i in 0..self.tensors.len() {
            let g = grads.tensors[i].data();
            let p = self.tensors[i].data_mut();
            for (pv, gv) in p.iter_mut().zip(g.iter()) {
                *pv -= lr * gv;
            }
        }
        Ok(())
    }

    /// Concatenates two sets; duplicate names are an error.
    pub fn merged(&self, other: &ParamSet) -> Result<ParamSet> {
        let mut out = self.clone();
        for (name, t) in other.iter() {
            out.insert(name, t.clone())?;
        }
        Ok(out)
    }

    /// The subset whose names satisfy the predicate, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&str) -> bool) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, t) in self.iter() {
            if keep(name) {
                out.insert(name, t.clone()).expect("subset of unique names");
            }
        }
        out
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        let mut out = ParamSet::new();
        for (name, t) in iter {
            out.insert(name, t).expect("duplicate name in FromIterator");
        }
        out
    }
}
