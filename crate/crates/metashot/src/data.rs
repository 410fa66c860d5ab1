//! Turning the dataset section of a config into loaded train/eval splits.

use std::path::PathBuf;

use episodes::{
    derive_seed, generate_synthetic, load_dataset, DatasetHandle, LoadOptions, SyntheticSpec,
    STREAM_SYNTHETIC,
};

use crate::config::{DatasetKind, ResolvedConfig};
use crate::error::{CliError, Result};

/// Meta-training classes and held-out evaluation classes.
pub struct DataBundle {
    pub train: DatasetHandle,
    pub eval: DatasetHandle,
}

/// Loads (or generates) both splits. Synthetic class pools for the two
/// splits come from different seed streams, so evaluation classes are
/// genuinely novel.
pub fn load_data(cfg: &ResolvedConfig) -> Result<DataBundle> {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => {
            let spec = SyntheticSpec {
                height: cfg.dataset.height,
                width: cfg.dataset.width,
                channels: cfg.dataset.channels,
                noise: cfg.dataset.noise,
                prototype_cells: cfg.dataset.prototype_cells,
            };
            let train = generate_synthetic(
                &spec,
                cfg.dataset.classes,
                cfg.dataset.images_per_class,
                derive_seed(cfg.seed, STREAM_SYNTHETIC, 0),
            )?;
            let eval = generate_synthetic(
                &spec,
                cfg.dataset.eval_classes,
                cfg.dataset.images_per_class,
                derive_seed(cfg.seed, STREAM_SYNTHETIC, 1),
            )?;
            Ok(DataBundle { train, eval })
        }
        DatasetKind::Directory => {
            let root = cfg.dataset.path.clone().expect("validated at resolve time");
            let load = |sub: &str, manifest: Option<PathBuf>| -> Result<DatasetHandle> {
                let dir = root.join(sub);
                if !dir.is_dir() {
                    return Err(CliError::Run(format!(
                        "dataset split directory {} does not exist",
                        dir.display()
                    )));
                }
                Ok(load_dataset(
                    &dir,
                    &LoadOptions {
                        manifest,
                        flatten_characters: cfg.dataset.flatten_characters,
                        resize: cfg.dataset.resize,
                    },
                )?)
            };
            let train = load("train", cfg.dataset.train_manifest.clone())?;
            let eval = load("test", cfg.dataset.test_manifest.clone())?;
            Ok(DataBundle { train, eval })
        }
    }
}
