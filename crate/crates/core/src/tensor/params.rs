use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Grads, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let (r, c) = value.dims2();
        self.params.push(Parameter { name: name.into(), value, grad: Tensor::zeros(r, c) });
        ParamId(self.params.len() - 1)
    }

    /// Xavier-uniform `[fan_in, fan_out]` matrix.
    pub fn xavier(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, Tensor { shape: vec![fan_in, fan_out], data })
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Tensor::zeros(rows, cols))
    }

    pub fn ones(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Tensor::filled(rows, cols, 1.0))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn accumulate(&mut self, grads: &Grads) {
        for (id, g) in grads.params() {
            self.params[id.0].grad.add_assign(g);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction; moment buffers are created lazily to match
/// the store they first see.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TensorError> {
        if let Some(p) = store.params.iter().find(|p| !p.grad.is_finite()) {
            return Err(TensorError::NonFinite(format!("gradient of {}", p.name)));
        }
        if self.m.len() != store.len() {
            self.m = store.params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, p) in store.params.iter_mut().enumerate() {
            let grad = p.grad.data().to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        if !store.all_finite() {
            return Err(TensorError::NonFinite("parameters after optimizer step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values (not bytes) into the parameter blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub dtype: String,
    pub step: u64,
    pub config_hash: String,
    pub params: Vec<ManifestEntry>,
}

const PARAMS_FILE: &str = "params.bin";
const MANIFEST_FILE: &str = "manifest.json";

/// Writes `params.bin` (little-endian f64, parameters back to back) and
/// `manifest.json` into `dir`.
pub fn save_checkpoint(dir: &Path, store: &ParamStore, step: u64, config_hash: &str) -> Result<(), TensorError> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(store.scalar_count() * 8);
    let mut entries = Vec::with_capacity(store.len());
    let mut offset = 0;
    for p in store.iter() {
        entries.push(ManifestEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), offset });
        offset += p.value.len();
        for x in p.value.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        schema_version: 1,
        dtype: "f64-le".into(),
        step,
        config_hash: config_hash.to_string(),
        params: entries,
    };
    fs::write(dir.join(PARAMS_FILE), blob)?;
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, CheckpointManifest), TensorError> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
        .map_err(|e| TensorError::Checkpoint(format!("manifest: {e}")))?;
    if manifest.dtype != "f64-le" {
        return Err(TensorError::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
    }
    let blob = fs::read(dir.join(PARAMS_FILE))?;
    if blob.len() % 8 != 0 {
        return Err(TensorError::Checkpoint("parameter blob is not a whole number of values".into()));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let len: usize = entry.shape.iter().product();
        let slice = values
            .get(entry.offset..entry.offset + len)
            .ok_or_else(|| TensorError::Checkpoint(format!("{} runs past the blob", entry.name)))?;
        store.add(entry.name.clone(), Tensor::new(entry.shape.clone(), slice.to_vec())?);
    }
    Ok((store, manifest))
}
