//! Where training samples come from.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::synth::{read_manifest, read_sample, DatasetManifest};
use crate::Tensor;

/// Random access to `(clearances, flow field)` pairs by dataset index.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[igv, rotor, stator]` clearances of sample `index`.
    fn clearances(&self, index: usize) -> Result<[f64; 3]>;

    /// Physical `(4, T, R, 6)` field of sample `index`.
    fn field(&self, index: usize) -> Result<Tensor<f32>>;
}

/// A generated dataset directory.
#[derive(Clone, Debug)]
pub struct DatasetDir {
    dir: PathBuf,
    manifest: DatasetManifest,
}

impl DatasetDir {
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(DatasetDir {
            dir: dir.to_path_buf(),
            manifest: read_manifest(dir)?,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut DatasetManifest {
        &mut self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn entry(&self, index: usize) -> Result<&crate::synth::ManifestSample> {
        self.manifest
            .samples
            .get(index)
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))
    }
}

impl SampleSource for DatasetDir {
    fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    fn clearances(&self, index: usize) -> Result<[f64; 3]> {
        Ok(self.entry(index)?.clearances)
    }

    fn field(&self, index: usize) -> Result<Tensor<f32>> {
        read_sample(&self.dir, self.entry(index)?)
    }
}

/// Samples held in memory.
#[derive(Clone, Debug, Default)]
pub struct MemorySource {
    pub clearances: Vec<[f64; 3]>,
    pub fields: Vec<Tensor<f32>>,
}

impl SampleSource for MemorySource {
    fn len(&self) -> usize {
        self.fields.len()
    }

    fn clearances(&self, index: usize) -> Result<[f64; 3]> {
        self.clearances
            .get(index)
            .copied()
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))
    }

    fn field(&self, index: usize) -> Result<Tensor<f32>> {
        self.fields
            .get(index)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))
    }
}

/// Wraps a source and records every index that was touched.
#[derive(Debug)]
pub struct AccessLog<S> {
    inner: S,
    log: Mutex<Vec<usize>>,
}

impl<S> AccessLog<S> {
    pub fn new(inner: S) -> Self {
        AccessLog {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Indices read so far, in access order.
    pub fn accessed(&self) -> Vec<usize> {
        self.log.lock().expect("log poisoned").clone()
    }

    fn note(&self, i: usize) {
        self.log.lock().expect("log poisoned").push(i);
    }
}

impl<S: SampleSource + Send> SampleSource for AccessLog<S> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn clearances(&self, index: usize) -> Result<[f64; 3]> {
        self.note(index);
        self.inner.clearances(index)
    }

    fn field(&self, index: usize) -> Result<Tensor<f32>> {
        self.note(index);
        self.inner.field(index)
    }
}
