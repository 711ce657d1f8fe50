use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::store::Bundle;
use crate::{Error, Result};

/// Named trainable parameters plus non-trainable buffers (running
/// statistics, fixed normalisers). Iteration order is by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub params: BTreeMap<String, Array2<f64>>,
    pub buffers: BTreeMap<String, Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.params
            .get(name)
            .or_else(|| self.buffers.get(name))
            .unwrap_or_else(|| panic!("no parameter or buffer named {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name) || self.buffers.contains_key(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, v: Array2<f64>) {
        self.params.insert(name.into(), v);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, v: Array2<f64>) {
        self.buffers.insert(name.into(), v);
    }

    /// Uniform in `±sqrt(6 / fan_in) * gain`.
    pub fn init_weight(&mut self, name: &str, fan_in: usize, fan_out: usize, gain: f64, rng: &mut ChaCha8Rng) {
        let lim = gain * (6.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-lim..lim));
        self.insert(name, w);
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.len()).sum()
    }

    /// Copies parameters and buffers whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        let pick = |m: &BTreeMap<String, Array2<f64>>| {
            m.iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        ParamStore {
            params: pick(&self.params),
            buffers: pick(&self.buffers),
        }
    }

    pub fn extend(&mut self, other: ParamStore) {
        self.params.extend(other.params);
        self.buffers.extend(other.buffers);
    }

    pub fn to_bundle(&self, kind: &str) -> Bundle {
        let mut b = Bundle::new(kind);
        for (k, v) in &self.params {
            b.insert(format!("param:{k}"), v.clone());
        }
        for (k, v) in &self.buffers {
            b.insert(format!("buffer:{k}"), v.clone());
        }
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let mut s = ParamStore::new();
        for (name, rows, cols) in b.manifest() {
            let v = b.get(&name)?.clone();
            debug_assert_eq!(v.dim(), (rows, cols));
            if let Some(k) = name.strip_prefix("param:") {
                s.insert(k, v);
            } else if let Some(k) = name.strip_prefix("buffer:") {
                s.insert_buffer(k, v);
            }
        }
        if s.params.is_empty() && s.buffers.is_empty() {
            return Err(Error::Invalid(format!("bundle '{}' holds no parameters", b.kind)));
        }
        Ok(s)
    }
}
