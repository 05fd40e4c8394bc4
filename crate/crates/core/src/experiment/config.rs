use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_idx, synth_blobs, Dataset, Split};
use crate::iht::{SparsityPlan, TrainConfig};
use crate::nn::Architecture;
use crate::scalar::Scalar;
use crate::Error;

/// Architecture given inline or as a path to its JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchitectureRef {
    Inline(Architecture),
    Path(PathBuf),
}

/// Where the samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSpec {
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        /// Keep only the first `n` training samples.
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    Blobs {
        classes: usize,
        per_class: usize,
        dimension: usize,
        separation: f64,
        /// Held-out samples per class, drawn from the same clusters.
        #[serde(default)]
        test_per_class: usize,
        seed: u64,
    },
}

/// One training run: architecture, sparsity plan, training settings, data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub architecture: ArchitectureRef,
    pub plan: SparsityPlan,
    pub train: TrainConfig,
    pub data: DataSpec,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a config and makes its relative paths relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        if let ArchitectureRef::Path(p) = &mut self.architecture {
            *p = resolve(base, p);
        }
        if let DataSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self.data
        {
            for p in [train_images, train_labels] {
                *p = resolve(base, p);
            }
            for p in [test_images, test_labels].into_iter().flatten() {
                *p = resolve(base, p);
            }
        }
    }

    pub fn architecture(&self) -> Result<Architecture, Error> {
        let arch = match &self.architecture {
            ArchitectureRef::Inline(a) => a.clone(),
            ArchitectureRef::Path(p) => Architecture::load(p)?,
        };
        arch.activation_shapes()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.train.validate()?;
        let arch = self.architecture()?;
        let weight_layers = arch.layers.iter().filter(|l| l.has_parameters()).count();
        self.plan.validate(weight_layers)?;
        Ok(())
    }

    /// Loads (or generates) the training set and the optional test set.
    pub fn load_data<T: Scalar>(&self) -> Result<(Dataset<T>, Option<Dataset<T>>), Error> {
        match &self.data {
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => {
                let mut train = load_idx::<T>(train_images, train_labels)?;
                if let Some(n) = train_limit {
                    train = train.take(*n);
                }
                let test = match (test_images, test_labels) {
                    (Some(i), Some(l)) => {
                        let mut t = load_idx::<T>(i, l)?.with_split(Split::Test);
                        if let Some(n) = test_limit {
                            t = t.take(*n);
                        }
                        Some(t)
                    }
                    (None, None) => None,
                    _ => {
                        return Err(Error::Config(
                            "test_images and test_labels must be given together".into(),
                        ))
                    }
                };
                Ok((train, test))
            }
            DataSpec::Blobs {
                classes,
                per_class,
                dimension,
                separation,
                test_per_class,
                seed,
            } => {
                let all = synth_blobs::<T>(*classes, per_class + test_per_class, *dimension, *separation, *seed)?;
                let (train, test) = all.split_at(classes * per_class);
                let test = (*test_per_class > 0).then(|| test.with_split(Split::Test));
                Ok((train, test))
            }
        }
    }
}
