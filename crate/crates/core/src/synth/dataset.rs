//! Dataset generation: one tensor file per sample plus a JSON manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{generate_flowfield, lhs_sample, GeneratorConfig};
use crate::aero::AnnulusGrid;
use crate::error::{Error, Result};
use crate::field::{N_VARIABLES, VARIABLE_NAMES, VARIABLE_UNITS};
use crate::tensor::{read_tensor, write_tensor};
use crate::train::NormalizationStats;
use crate::{par, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: usize,
    /// `[igv, rotor, stator]`, % span.
    pub clearances: [f64; 3],
    pub seed: u64,
    /// Path relative to the dataset directory.
    pub file: String,
    /// Hex SHA-256 of the tensor file.
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableRange {
    pub name: String,
    pub unit: String,
    pub min: f64,
    pub max: f64,
}

impl VariableRange {
    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Frozen train/validation/holdout partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub holdout: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub n_samples: usize,
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub annulus: AnnulusGrid,
    pub samples: Vec<ManifestSample>,
    /// Min and max of each variable over every node of every sample.
    pub variable_ranges: Vec<VariableRange>,
    /// SHA-256 over the concatenated per-sample digests.
    pub checksum: String,
    #[serde(default)]
    pub split: Option<SplitRecord>,
    #[serde(default)]
    pub normalization: Option<NormalizationStats>,
}

impl DatasetManifest {
    pub fn range_of(&self, var: usize) -> &VariableRange {
        &self.variable_ranges[var]
    }
}

pub fn sample_file_name(id: usize) -> String {
    format!("sample_{id:05}.cnfd")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Generated {
    sha256: String,
    min: [f64; N_VARIABLES],
    max: [f64; N_VARIABLES],
}

/// Generate `n` Latin-hypercube samples into `out_dir`. Samples are produced in
/// parallel; each depends only on `(seed, id, config)` so the bytes do not
/// depend on scheduling.
pub fn generate_dataset(n: usize, seed: u64, cfg: &GeneratorConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let samples = lhs_sample(n, seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let results: Vec<Result<Generated>> = par::map_range(n, |i| {
        let s = &samples[i];
        let field = generate_flowfield(s, cfg)?;
        let t: Tensor<f32> = field.tensor().cast();
        let mut bytes = Vec::with_capacity(t.len() * 4 + 64);
        write_tensor(&t, &mut bytes);
        let path = out_dir.join(sample_file_name(s.id));
        std::fs::write(&path, &bytes).map_err(|e| Error::SampleIo {
            sample_id: s.id,
            source: e,
        })?;
        let mut min = [f64::INFINITY; N_VARIABLES];
        let mut max = [f64::NEG_INFINITY; N_VARIABLES];
        for node in t.data().chunks(N_VARIABLES) {
            for v in 0..N_VARIABLES {
                min[v] = min[v].min(node[v] as f64);
                max[v] = max[v].max(node[v] as f64);
            }
        }
        Ok(Generated {
            sha256: hex(&Sha256::digest(&bytes)),
            min,
            max,
        })
    });

    let mut entries = Vec::with_capacity(n);
    let mut min = [f64::INFINITY; N_VARIABLES];
    let mut max = [f64::NEG_INFINITY; N_VARIABLES];
    let mut total = Sha256::new();
    for (s, r) in samples.iter().zip(results) {
        let g = r?;
        for v in 0..N_VARIABLES {
            min[v] = min[v].min(g.min[v]);
            max[v] = max[v].max(g.max[v]);
        }
        total.update(g.sha256.as_bytes());
        entries.push(ManifestSample {
            id: s.id,
            clearances: s.clearances(),
            seed: s.seed,
            file: sample_file_name(s.id),
            sha256: g.sha256,
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        n_samples: n,
        seed,
        generator: cfg.clone(),
        annulus: cfg.annulus()?,
        samples: entries,
        variable_ranges: (0..N_VARIABLES)
            .map(|v| VariableRange {
                name: VARIABLE_NAMES[v].into(),
                unit: VARIABLE_UNITS[v].into(),
                min: min[v],
                max: max[v],
            })
            .collect(),
        checksum: hex(&total.finalize()),
        split: None,
        normalization: None,
    };
    write_manifest(&manifest, out_dir)?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Read `manifest.json` from a dataset directory.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text)?;
    if m.format_version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch {
            what: "manifest",
            found: m.format_version,
            expected: MANIFEST_VERSION,
        });
    }
    if m.samples.len() != m.n_samples {
        return Err(Error::Config(format!(
            "manifest lists {} samples but declares {}",
            m.samples.len(),
            m.n_samples
        )));
    }
    Ok(m)
}

/// Load one sample's field, verifying its checksum.
pub fn read_sample(dir: &Path, entry: &ManifestSample) -> Result<Tensor<f32>> {
    let path = dir.join(&entry.file);
    let bytes = std::fs::read(&path).map_err(|e| Error::SampleIo {
        sample_id: entry.id,
        source: e,
    })?;
    if hex(&Sha256::digest(&bytes)) != entry.sha256 {
        return Err(Error::CorruptTensor(format!(
            "sample {} ({}) does not match its manifest checksum",
            entry.id,
            path.display()
        )));
    }
    let mut s = bytes.as_slice();
    let t = read_tensor(&mut s)?;
    if !s.is_empty() {
        return Err(Error::CorruptTensor(format!("sample {}: trailing bytes", entry.id)));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig::with_mesh(8, 8)
    }

    #[test]
    fn manifest_echoes_every_sample() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(12, 3, &small(), dir.path()).unwrap();
        assert_eq!(m.samples.len(), 12);
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back, m);
        let lhs = lhs_sample(12, 3).unwrap();
        for (e, s) in m.samples.iter().zip(&lhs) {
            assert_eq!(e.clearances, s.clearances());
            let t = read_sample(dir.path(), e).unwrap();
            assert_eq!(t.shape(), &[4, 8, 8, 6]);
        }
        for r in &m.variable_ranges {
            assert!(r.max > r.min);
        }
    }

    #[test]
    fn regeneration_and_thread_count_do_not_change_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = par::with_threads(1, || generate_dataset(9, 17, &small(), a.path())).unwrap();
        let mb = par::with_threads(4, || generate_dataset(9, 17, &small(), b.path())).unwrap();
        assert_eq!(ma.checksum, mb.checksum);
        for e in &ma.samples {
            let x = std::fs::read(a.path().join(&e.file)).unwrap();
            let y = std::fs::read(b.path().join(&e.file)).unwrap();
            assert_eq!(x, y);
        }
        assert_eq!(
            std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
            std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn tampered_sample_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(2, 0, &small(), dir.path()).unwrap();
        let p = dir.path().join(&m.samples[1].file);
        let mut bytes = std::fs::read(&p).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_sample(dir.path(), &m.samples[1]), Err(Error::CorruptTensor(_))));
    }

    #[test]
    fn missing_sample_names_its_id() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(3, 0, &small(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join(&m.samples[2].file)).unwrap();
        assert!(matches!(
            read_sample(dir.path(), &m.samples[2]),
            Err(Error::SampleIo { sample_id: 2, .. })
        ));
    }
}
