use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Debug, PartialEq)]
struct Entry<S> {
    value: Tensor<S>,
    trainable: bool,
}

/// Named, insertion-ordered parameter table.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<S> {
    entries: IndexMap<String, Entry<S>>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<S>) {
        self.entries.insert(
            name.into(),
            Entry {
                value,
                trainable: true,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>, NnError> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>, NnError> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<S>> {
        self.entries.shift_remove(name).map(|e| e.value)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.trainable)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<(), NnError> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))?;
        e.trainable = trainable;
        Ok(())
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for e in self.entries.values_mut() {
            e.trainable = trainable;
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, e)| e.trainable)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        Entry {
                            value: e.value.cast(),
                            trainable: e.trainable,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Zero-mean Gaussian initialization.
pub fn init_normal<S: Scalar, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
    let data = (0..n).map(|_| S::from_f64(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}
