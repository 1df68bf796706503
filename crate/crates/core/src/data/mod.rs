//! Paired two-modality datasets, label similarity and zero-shot splits.

mod matrix_io;
mod split;
mod synth;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub use matrix_io::{format_matrix, load_matrix, parse_matrix, save_matrix};
pub use split::{make_split, QueryPartition, ZeroShotSplit};
pub use synth::{synth_dataset, SynthParams};

use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::numerics::DenseMatrix;

/// Aligned image/text features with one class label per instance.
///
/// Feature matrices hold one instance per column. `semantic_vectors` holds
/// one column per class.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    x1: DenseMatrix,
    x2: DenseMatrix,
    labels: Vec<usize>,
    class_names: Option<Vec<String>>,
    semantic_vectors: DenseMatrix,
}

impl PairedDataset {
    pub fn new(
        x1: DenseMatrix,
        x2: DenseMatrix,
        labels: Vec<usize>,
        semantic_vectors: DenseMatrix,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = labels.len();
        if x1.cols() != n || x2.cols() != n {
            return Err(Error::Invalid(format!(
                "instance count mismatch: x1 has {}, x2 has {}, labels has {n}",
                x1.cols(),
                x2.cols()
            )));
        }
        let k = semantic_vectors.cols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Invalid(format!(
                "label {bad} out of range for {k} semantic vectors"
            )));
        }
        for (c, norm) in semantic_vectors.column_norms().into_iter().enumerate() {
            if norm == 0.0 {
                return Err(Error::ZeroNorm(format!("semantic vector of class {c}")));
            }
        }
        if let Some(names) = &class_names {
            if names.len() != k {
                return Err(Error::Invalid(format!(
                    "{} class names for {k} classes",
                    names.len()
                )));
            }
        }
        Ok(Self {
            x1,
            x2,
            labels,
            class_names,
            semantic_vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.semantic_vectors.cols()
    }

    pub fn x1(&self) -> &DenseMatrix {
        &self.x1
    }

    pub fn x2(&self) -> &DenseMatrix {
        &self.x2
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn semantic_vectors(&self) -> &DenseMatrix {
        &self.semantic_vectors
    }

    /// Per-instance semantic matrix (`v x |idx|`), one class vector per
    /// listed instance.
    pub fn instance_semantics(&self, idx: &[usize]) -> DenseMatrix {
        let classes: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
        self.semantic_vectors.select_columns(&classes)
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Writes `manifest.txt` plus one file per matrix into `dir`.
    /// Returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = KvFile::new();
        save_matrix(&self.x1, &dir.join("x1.txt"))?;
        save_matrix(&self.x2, &dir.join("x2.txt"))?;
        save_matrix(&self.semantic_vectors, &dir.join("semantics.txt"))?;
        let mut labels = String::new();
        for l in &self.labels {
            let _ = writeln!(labels, "{l}");
        }
        let lp = dir.join("labels.txt");
        std::fs::write(&lp, labels).map_err(|e| Error::io(&lp, e))?;
        manifest.set("x1", "x1.txt");
        manifest.set("x2", "x2.txt");
        manifest.set("labels", "labels.txt");
        manifest.set("semantics", "semantics.txt");
        if let Some(names) = &self.class_names {
            let np = dir.join("names.txt");
            let mut text = names.join("\n");
            text.push('\n');
            std::fs::write(&np, text).map_err(|e| Error::io(&np, e))?;
            manifest.set("names", "names.txt");
        }
        let path = dir.join("manifest.txt");
        manifest.write(&path)?;
        Ok(path)
    }

    /// Loads a dataset from a manifest. Relative paths resolve against the
    /// manifest's directory.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = KvFile::read(manifest_path)?;
        manifest.check_keys(&["x1", "x2", "labels", "semantics", "names"])?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let resolve = |key: &str| -> Result<PathBuf> { Ok(base.join(manifest.require(key)?)) };

        let x1 = load_matrix(&resolve("x1")?)?;
        let x2 = load_matrix(&resolve("x2")?)?;
        let semantics = load_matrix(&resolve("semantics")?)?;
        let labels = read_labels(&resolve("labels")?)?;
        let names = match manifest.get("names") {
            Some(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Some(text.lines().map(str::to_string).collect())
            }
            None => None,
        };
        Self::new(x1, x2, labels, semantics, names)
    }
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected a class id, found {l:?}"),
            })
        })
        .collect()
}

/// Binary label similarity: `s_ij = 1` iff instances `i` and `j` share a
/// class.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    s: DenseMatrix,
}

impl SimilarityMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.rows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s.get(i, j)
    }

    /// Restriction to the listed instances.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            s: self.s.select(idx, idx),
        }
    }
}

pub fn build_similarity(labels: &[usize]) -> SimilarityMatrix {
    let n = labels.len();
    SimilarityMatrix {
        s: DenseMatrix::from_fn(n, n, |i, j| f64::from(u8::from(labels[i] == labels[j]))),
    }
}
