//! Named, shaped weight storage shared by every network in the crate.
//!
//! A [`ParameterSet`] is an ordered list of entries. Order matters: it is the
//! checkpoint order and the order in which optimizers keep their accumulators,
//! so two sets are congruent only if names and shapes match position by position.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Entry {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::config(format!("invalid entry name {name:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::config(format!(
                "entry `{name}` has shape {shape:?} ({expected} values) but {} values were given",
                values.len()
            )));
        }
        Ok(Entry { name, shape, values })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Entry::new(name, shape, vec![0.0; n])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The weights of one network (θ for a policy, w for a value function).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<Entry>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; names must stay unique.
    pub fn push(&mut self, entry: Entry) -> Result<usize> {
        if self.index_of(entry.name()).is_some() {
            return Err(Error::config(format!("duplicate entry name `{}`", entry.name())));
        }
        self.entries.push(entry);
        Ok(self.entries.len() - 1)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &Entry {
        &self.entries[index]
    }

    pub fn entry_mut(&mut self, index: usize) -> &mut Entry {
        &mut self.entries[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(Entry::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.values.iter().all(|v| v.is_finite()))
    }

    /// Same names and shapes, position by position.
    pub fn is_congruent(&self, other: &[Entry]) -> bool {
        self.entries.len() == other.len()
            && self
                .entries
                .iter()
                .zip(other)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// Flat view of the i-th scalar across all entries, in entry order.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for e in &self.entries {
            if index < e.len() {
                return e.values[index];
            }
            index -= e.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for e in &mut self.entries {
            if index < e.len() {
                e.values[index] = value;
                return;
            }
            index -= e.len();
        }
        panic!("flat index out of range");
    }
}

/// Gradient (or update direction) for a [`ParameterSet`], entry for entry.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    entries: Vec<Entry>,
}

impl GradientSet {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        GradientSet {
            entries: params
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    values: vec![0.0; e.len()],
                })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &Entry {
        &self.entries[index]
    }

    pub(crate) fn values_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.entries[index].values
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn is_congruent_with(&self, params: &ParameterSet) -> bool {
        params.is_congruent(&self.entries)
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn negated(mut self) -> Self {
        self.scale(-1.0);
        self
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.values.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.values.iter().all(|&v| v == 0.0))
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(Entry::len).sum()
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for e in &self.entries {
            if index < e.len() {
                return e.values[index];
            }
            index -= e.len();
        }
        panic!("flat index out of range");
    }

    /// Largest absolute elementwise difference to another congruent set.
    pub fn max_abs_diff(&self, other: &GradientSet) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_rejects_wrong_value_count() {
        assert!(Entry::new("W", vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Entry::new("W", vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParameterSet::new();
        p.push(Entry::zeros("a", vec![1]).unwrap()).unwrap();
        assert!(p.push(Entry::zeros("a", vec![2]).unwrap()).is_err());
    }

    #[test]
    fn flat_indexing_spans_entries() {
        let mut p = ParameterSet::new();
        p.push(Entry::new("a", vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        p.push(Entry::new("b", vec![1, 2], vec![3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(p.num_values(), 4);
        assert_eq!(p.get_flat(2), 3.0);
        p.set_flat(3, -1.0);
        assert_eq!(p.get("b").unwrap().values(), &[3.0, -1.0]);
    }

    #[test]
    fn gradient_arithmetic() {
        let mut p = ParameterSet::new();
        p.push(Entry::zeros("a", vec![2]).unwrap()).unwrap();
        let mut g = GradientSet::zeros_like(&p);
        assert!(g.is_zero());
        g.values_mut(0).copy_from_slice(&[3.0, 4.0]);
        assert_eq!(g.norm(), 5.0);
        let h = g.clone();
        g.add_scaled(&h, -2.0);
        assert_eq!(g.entry(0).values(), &[-3.0, -4.0]);
        assert!(g.is_congruent_with(&p));
    }
}
