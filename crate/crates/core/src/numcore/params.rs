use super::tensor::{Real, Tensor};
use super::NumError;

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<(), NumError> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(NumError::DuplicateParam(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, NumError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NumError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, NumError> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NumError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }

    /// Fails unless both stores hold the same names with the same shapes, in order.
    pub fn check_compatible<U: Real>(&self, other: &ParamStore<U>) -> Result<(), NumError> {
        if self.len() != other.len() {
            return Err(NumError::StoreMismatch(format!(
                "{} tensors vs {} tensors",
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.iter().zip(other.iter()) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(NumError::StoreMismatch(format!(
                    "{na}{:?} vs {nb}{:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, t)| t.sum_sq())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: T) {
        for (_, t) in self.entries.iter_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = *x * c);
        }
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &ParamStore<T>) -> Result<(), NumError> {
        self.check_compatible(other)?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(other.iter()) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Re-keys every entry as `prefix.name`.
    pub fn prefixed(&self, prefix: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (format!("{prefix}.{n}"), t.clone()))
                .collect(),
        }
    }

    /// Extracts the entries named `prefix.*`, stripping the prefix.
    pub fn strip_prefix(&self, prefix: &str) -> Self {
        let head = format!("{prefix}.");
        Self {
            entries: self
                .entries
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(&head).map(|s| (s.to_string(), t.clone())))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamStore<T>) -> Result<(), NumError> {
        for (n, t) in other.entries {
            self.insert(n, t)?;
        }
        Ok(())
    }
}

/// Scales all gradients by `max_norm / norm` when their global L2 norm exceeds `max_norm`.
pub fn clip_global_norm(grads: &mut ParamStore<f32>, max_norm: f32) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.global_norm();
    if norm > max_norm as f64 {
        grads.scale((max_norm as f64 / norm) as f32);
    }
    norm
}
