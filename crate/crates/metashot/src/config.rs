//! Run configuration: a flat plain-text format of dotted keys (one
//! `key = value` per line, `#` lines are comments), parsed and resolved
//! into a fully concrete [`ResolvedConfig`]. Every unset key takes its
//! documented default, so the emitted snapshot of a resolved config is
//! complete: re-parsing it reproduces the identical structure without
//! consulting the environment again.

use std::collections::HashMap;
use std::env;
use std::path::{Path, PathBuf};

use episodes::EpisodeSpec;
use evaluation::Temperature;
use metalearn::{InnerLoopConfig, InnerScope, MetaConfig, PretrainConfig, PretrainObjective};
use netmodels::{
    AbpConfig, ConvStackConfig, EncoderConfig, GateVariant, HeadConfig, SplitBrainConfig,
    TaskNetConfig,
};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Environment variable naming the directory under which run directories
/// are created when the config does not set `run.dir` explicitly.
pub const OUTPUT_ROOT_VAR: &str = "METASHOT_RUNS";

/// Which training method a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Meta-learn the full task network, channel gate included.
    Aml,
    /// Ablation: identical parameter shapes, gate applied as a plain
    /// convolution with no mask.
    AmlMinusAttention,
    /// Supervised-pretrained frozen encoder; meta-learn only the
    /// attention-based predictor on embeddings.
    Raml,
    /// Like `raml` with an unsupervised (split-channel or autoencoder)
    /// pretrained encoder.
    Uraml,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Aml => "aml",
            Method::AmlMinusAttention => "aml_minus_attention",
            Method::Raml => "raml",
            Method::Uraml => "uraml",
        }
    }

    fn parse(token: &str) -> Option<Method> {
        match token {
            "aml" => Some(Method::Aml),
            "aml_minus_attention" => Some(Method::AmlMinusAttention),
            "raml" => Some(Method::Raml),
            "uraml" => Some(Method::Uraml),
            _ => None,
        }
    }

    /// Whether tasks are embedded through a frozen representation.
    pub fn uses_representation(self) -> bool {
        matches!(self, Method::Raml | Method::Uraml)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Directory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Root holding `train/` and `test/` class trees (directory kind).
    pub path: Option<PathBuf>,
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub flatten_characters: bool,
    /// Decode-time resampling (height, width); `None` keeps native size.
    pub resize: Option<(usize, usize)>,
    /// Synthetic generator settings; meaningful only for the synthetic kind.
    pub classes: usize,
    pub eval_classes: usize,
    pub images_per_class: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub noise: f64,
    pub prototype_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub blocks: usize,
    pub channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub bn_before_relu: bool,
    pub bn_epsilon: f64,
    pub attention_bias: bool,
    pub head_layers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaSection {
    pub engine: MetaConfig,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSection {
    pub engine: PretrainConfig,
    pub log_every: u64,
    pub decoder_channels: (usize, usize, usize),
    /// Side of the square reconstruction target; 0 means a quarter of the
    /// shorter image side (at least 1), decided when the data is known.
    pub recon_size: usize,
    /// Existing representation checkpoint to use instead of the run
    /// directory's own `representation.bin`.
    pub representation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub tasks: usize,
    pub shots: Vec<usize>,
}

/// A fully resolved run configuration: every knob concrete.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub method: Method,
    pub seed: u64,
    /// Where artifacts go. Not part of the emitted snapshot or the digest,
    /// so runs in different directories can produce byte-identical
    /// artifacts.
    pub run_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub episode: EpisodeSpec,
    pub network: NetworkConfig,
    pub inner: InnerLoopConfig,
    pub meta: MetaSection,
    pub pretrain: PretrainSection,
    pub eval: EvalSection,
    pub cet_temperature: Temperature,
    pub features_per_class: usize,
    pub heatmap_count: usize,
}

/// One raw `key = value` entry with its provenance for error messages.
struct RawValue {
    value: String,
    location: String,
}

struct RawConfig {
    entries: HashMap<String, RawValue>,
    /// Key order of first appearance, for stable unknown-key reporting.
    order: Vec<String>,
}

impl RawConfig {
    fn from_text(text: &str, source: &str) -> Result<RawConfig> {
        let mut entries = HashMap::new();
        let mut order = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let location = format!("{source}:{}", lineno + 1);
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{location}: expected `key = value`, got `{line}`"
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("{location}: empty key")));
            }
            if value.is_empty() {
                return Err(CliError::Config(format!("{location}: empty value for `{key}`")));
            }
            if entries.contains_key(&key) {
                return Err(CliError::Config(format!(
                    "{location}: duplicate config key `{key}`"
                )));
            }
            order.push(key.clone());
            entries.insert(key, RawValue { value, location });
        }
        Ok(RawConfig { entries, order })
    }

    /// Command-line overrides replace file values (no duplicate check).
    fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for (n, spec) in overrides.iter().enumerate() {
            let Some((key, value)) = spec.split_once('=') else {
                return Err(CliError::Config(format!(
                    "override `{spec}` must look like key=value"
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(CliError::Config(format!(
                    "override `{spec}` must name a key and a value"
                )));
            }
            if !self.entries.contains_key(&key) {
                self.order.push(key.clone());
            }
            self.entries.insert(key, RawValue { value, location: format!("override #{}", n + 1) });
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<RawValue> {
        self.entries.remove(key)
    }

    fn is_set(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Errors on the first (in appearance order) key nobody consumed.
    fn reject_leftovers(&self) -> Result<()> {
        for key in &self.order {
            if let Some(raw) = self.entries.get(key) {
                return Err(CliError::Config(format!(
                    "{}: unknown config key `{key}`",
                    raw.location
                )));
            }
        }
        Ok(())
    }
}

fn bad_value(key: &str, raw: &RawValue, want: &str) -> CliError {
    CliError::Config(format!(
        "{}: invalid value `{}` for `{key}` (expected {want})",
        raw.location, raw.value
    ))
}

struct Reader<'a> {
    raw: &'a mut RawConfig,
}

impl Reader<'_> {
    fn string(&mut self, key: &str) -> Option<String> {
        self.raw.take(key).map(|r| r.value)
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.raw.take(key) {
            None => Ok(default),
            Some(raw) => {
                raw.value.parse().map_err(|_| bad_value(key, &raw, "a non-negative integer"))
            }
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.raw.take(key) {
            None => Ok(default),
            Some(raw) => {
                raw.value.parse().map_err(|_| bad_value(key, &raw, "a non-negative integer"))
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.raw.take(key) {
            None => Ok(default),
            Some(raw) => raw.value.parse().map_err(|_| bad_value(key, &raw, "a number")),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw.take(key) {
            None => Ok(default),
            Some(raw) => match raw.value.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(bad_value(key, &raw, "true or false")),
            },
        }
    }

    fn usize_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw.take(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .value
                .split(',')
                .map(|tok| tok.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad_value(key, &raw, "a comma-separated list of integers")),
        }
    }
}

/// Parses and resolves a config file, applying `--override key=value`
/// pairs on top. The run directory defaults to
/// `$METASHOT_RUNS/<config file stem>` (or `runs/<stem>`).
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    let root = env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| "runs".into());
    let source = path.display().to_string();
    parse_config_text(&text, &source, overrides, root.join(stem))
}

/// Same as [`parse_config`] over in-memory text, with the default run
/// directory made explicit (no environment access).
pub fn parse_config_text(
    text: &str,
    source: &str,
    overrides: &[String],
    default_run_dir: PathBuf,
) -> Result<ResolvedConfig> {
    let mut raw = RawConfig::from_text(text, source)?;
    raw.apply_overrides(overrides)?;
    resolve(raw, default_run_dir)
}

fn require(raw: Option<RawValue>, key: &str) -> Result<RawValue> {
    raw.ok_or_else(|| CliError::Config(format!("missing required config key `{key}`")))
}

fn resolve(mut raw: RawConfig, default_run_dir: PathBuf) -> Result<ResolvedConfig> {
    // Dataset kind first: it decides which other dataset keys are legal.
    let kind = match raw.take("dataset.kind") {
        None => DatasetKind::Synthetic,
        Some(r) => match r.value.as_str() {
            "synthetic" => DatasetKind::Synthetic,
            "directory" => DatasetKind::Directory,
            _ => return Err(bad_value("dataset.kind", &r, "synthetic or directory")),
        },
    };
    const DIRECTORY_KEYS: [&str; 6] = [
        "dataset.path",
        "dataset.train_manifest",
        "dataset.test_manifest",
        "dataset.flatten_characters",
        "dataset.resize_height",
        "dataset.resize_width",
    ];
    const SYNTHETIC_KEYS: [&str; 8] = [
        "dataset.classes",
        "dataset.eval_classes",
        "dataset.images_per_class",
        "dataset.height",
        "dataset.width",
        "dataset.channels",
        "dataset.noise",
        "dataset.prototype_cells",
    ];
    let foreign = match kind {
        DatasetKind::Synthetic => DIRECTORY_KEYS.iter(),
        DatasetKind::Directory => SYNTHETIC_KEYS.iter(),
    };
    for key in foreign {
        if raw.is_set(key) {
            return Err(CliError::Config(format!(
                "`{key}` does not apply to dataset.kind = {}",
                match kind {
                    DatasetKind::Synthetic => "synthetic",
                    DatasetKind::Directory => "directory",
                }
            )));
        }
    }

    let method_raw = require(raw.take("method"), "method")?;
    let method = Method::parse(&method_raw.value)
        .ok_or_else(|| bad_value("method", &method_raw, "aml, aml_minus_attention, raml or uraml"))?;

    let mut r = Reader { raw: &mut raw };

    let seed = r.u64("seed", 0)?;
    let run_dir = r.path("run.dir").unwrap_or(default_run_dir);

    let dataset = {
        let path = r.path("dataset.path");
        let train_manifest = r.path("dataset.train_manifest");
        let test_manifest = r.path("dataset.test_manifest");
        let flatten_characters = r.bool("dataset.flatten_characters", false)?;
        let resize_height = r.usize("dataset.resize_height", 0)?;
        let resize_width = r.usize("dataset.resize_width", 0)?;
        let resize = match (resize_height, resize_width) {
            (0, 0) => None,
            (h, w) if h > 0 && w > 0 => Some((h, w)),
            _ => {
                return Err(CliError::Config(
                    "dataset.resize_height and dataset.resize_width must be set together".into(),
                ))
            }
        };
        if kind == DatasetKind::Directory && path.is_none() {
            return Err(CliError::Config(
                "missing required config key `dataset.path` (dataset.kind = directory)".into(),
            ));
        }
        DatasetConfig {
            kind,
            path,
            train_manifest,
            test_manifest,
            flatten_characters,
            resize,
            classes: r.usize("dataset.classes", 20)?,
            eval_classes: r.usize("dataset.eval_classes", 10)?,
            images_per_class: r.usize("dataset.images_per_class", 40)?,
            height: r.usize("dataset.height", 28)?,
            width: r.usize("dataset.width", 28)?,
            channels: r.usize("dataset.channels", 1)?,
            noise: r.f64("dataset.noise", 0.1)?,
            prototype_cells: r.usize("dataset.prototype_cells", 4)?,
        }
    };

    let ways_raw = require(r.raw.take("episode.ways"), "episode.ways")?;
    let ways: usize =
        ways_raw.value.parse().map_err(|_| bad_value("episode.ways", &ways_raw, "an integer"))?;
    let shots_raw = require(r.raw.take("episode.shots"), "episode.shots")?;
    let shots: usize = shots_raw
        .value
        .parse()
        .map_err(|_| bad_value("episode.shots", &shots_raw, "an integer"))?;
    let episode = EpisodeSpec { ways, shots, queries: r.usize("episode.queries", 15)? };

    let channels = r.usize("network.channels", 64)?;
    let network = NetworkConfig {
        blocks: r.usize("network.blocks", 4)?,
        channels,
        out_channels: r.usize("network.out_channels", channels)?,
        kernel: r.usize("network.kernel", 3)?,
        bn_before_relu: r.bool("network.bn_before_relu", true)?,
        bn_epsilon: r.f64("network.bn_epsilon", 1e-5)?,
        attention_bias: r.bool("network.attention_bias", true)?,
        head_layers: r.usize("network.head_layers", 2)?,
    };

    let inner = InnerLoopConfig {
        steps: r.usize("inner.steps", 1)?,
        alpha_init: r.f64("inner.alpha_init", 0.01)?,
        alpha_trainable: r.bool("inner.alpha_trainable", true)?,
        scope: if method.uses_representation() { InnerScope::AbpOnly } else { InnerScope::All },
        dropout_in_inner: r.bool("inner.dropout_in_inner", true)?,
    };

    let meta = MetaSection {
        engine: MetaConfig {
            beta: r.f64("meta.beta", 0.001)?,
            beta_decayed: r.f64("meta.beta_decayed", 0.0001)?,
            decay_at: r.u64("meta.decay_at", 30_000)?,
            meta_batch: r.usize("meta.batch", 4)?,
            iterations: r.u64("meta.iterations", 60_000)?,
            second_order: r.bool("meta.second_order", true)?,
            dropout: r.f64("meta.dropout", 0.2)?,
            l1: r.f64("meta.l1", 0.001)?,
            l2: r.f64("meta.l2", 0.00001)?,
        },
        log_every: r.u64("meta.log_every", 100)?,
        checkpoint_every: r.u64("meta.checkpoint_every", 10_000)?,
    };

    let objective = match r.raw.take("pretrain.objective") {
        None => match method {
            Method::Uraml => PretrainObjective::SplitBrain,
            _ => PretrainObjective::Supervised,
        },
        Some(raw) => match raw.value.as_str() {
            "supervised" => PretrainObjective::Supervised,
            "splitbrain" => PretrainObjective::SplitBrain,
            "autoencoder" => PretrainObjective::Autoencoder,
            _ => {
                return Err(bad_value(
                    "pretrain.objective",
                    &raw,
                    "supervised, splitbrain or autoencoder",
                ))
            }
        },
    };
    let decoder = r.usize_list("pretrain.decoder_channels", &[32, 16, 8])?;
    let &[d0, d1, d2] = &decoder[..] else {
        return Err(CliError::Config(format!(
            "pretrain.decoder_channels needs exactly three widths, got {}",
            decoder.len()
        )));
    };
    let pretrain = PretrainSection {
        engine: PretrainConfig {
            objective,
            batch_size: r.usize("pretrain.batch_size", 256)?,
            learning_rate: r.f64("pretrain.learning_rate", 0.001)?,
            lr_decayed: r.f64("pretrain.lr_decayed", 0.0001)?,
            decay_at: r.u64("pretrain.decay_at", 30_000)?,
            l2: r.f64("pretrain.l2", 0.00001)?,
            dropout: r.f64("pretrain.dropout", 0.2)?,
            iterations: r.u64("pretrain.iterations", 10_000)?,
        },
        log_every: r.u64("pretrain.log_every", 100)?,
        decoder_channels: (d0, d1, d2),
        recon_size: r.usize("pretrain.recon_size", 0)?,
        representation: r.path("pretrain.representation"),
    };

    let eval = EvalSection {
        tasks: r.usize("eval.tasks", 600)?,
        shots: r.usize_list("eval.shots", &[1, 3, 5, 7, 9])?,
    };

    let cet_temperature = match r.raw.take("cet.temperature") {
        None => Temperature::Fixed(1.0),
        Some(raw) => {
            if raw.value == "max" {
                Temperature::RowMax
            } else {
                match raw.value.parse::<f64>() {
                    Ok(tau) if tau > 0.0 => Temperature::Fixed(tau),
                    _ => return Err(bad_value("cet.temperature", &raw, "a positive number or max")),
                }
            }
        }
    };

    let features_per_class = r.usize("features.per_class", 20)?;
    let heatmap_count = r.usize("heatmap.count", 4)?;

    raw.reject_leftovers()?;

    let cfg = ResolvedConfig {
        method,
        seed,
        run_dir,
        dataset,
        episode,
        network,
        inner,
        meta,
        pretrain,
        eval,
        cet_temperature,
        features_per_class,
        heatmap_count,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ResolvedConfig {
    fn validate(&self) -> Result<()> {
        let nonzero: [(&str, usize); 10] = [
            ("episode.ways", self.episode.ways),
            ("episode.shots", self.episode.shots),
            ("episode.queries", self.episode.queries),
            ("network.blocks", self.network.blocks),
            ("network.channels", self.network.channels),
            ("network.out_channels", self.network.out_channels),
            ("network.kernel", self.network.kernel),
            ("eval.tasks", self.eval.tasks),
            ("features.per_class", self.features_per_class),
            ("heatmap.count", self.heatmap_count),
        ];
        for (key, value) in nonzero {
            if value == 0 {
                return Err(CliError::Config(format!("`{key}` must be positive")));
            }
        }
        if self.episode.ways < 2 {
            return Err(CliError::Config("`episode.ways` must be at least 2".into()));
        }
        if self.network.kernel % 2 == 0 {
            return Err(CliError::Config("`network.kernel` must be odd".into()));
        }
        if !(self.network.head_layers == 1 || self.network.head_layers == 2) {
            return Err(CliError::Config("`network.head_layers` must be 1 or 2".into()));
        }
        if self.meta.log_every == 0 || self.meta.checkpoint_every == 0 || self.pretrain.log_every == 0
        {
            return Err(CliError::Config("logging and checkpoint cadences must be positive".into()));
        }
        if self.meta.engine.iterations == 0 || self.pretrain.engine.iterations == 0 {
            return Err(CliError::Config("training budgets must be at least one iteration".into()));
        }
        if self.eval.shots.is_empty() || self.eval.shots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(
                "`eval.shots` must be a strictly increasing, nonempty list".into(),
            ));
        }
        if self.eval.shots[0] == 0 {
            return Err(CliError::Config("`eval.shots` entries must be positive".into()));
        }
        if self.dataset.kind == DatasetKind::Synthetic {
            let positive: [(&str, usize); 7] = [
                ("dataset.classes", self.dataset.classes),
                ("dataset.eval_classes", self.dataset.eval_classes),
                ("dataset.images_per_class", self.dataset.images_per_class),
                ("dataset.height", self.dataset.height),
                ("dataset.width", self.dataset.width),
                ("dataset.channels", self.dataset.channels),
                ("dataset.prototype_cells", self.dataset.prototype_cells),
            ];
            for (key, value) in positive {
                if value == 0 {
                    return Err(CliError::Config(format!("`{key}` must be positive")));
                }
            }
        }
        match (self.method, self.pretrain.engine.objective) {
            (Method::Raml, PretrainObjective::Supervised) => {}
            (Method::Raml, other) => {
                return Err(CliError::Config(format!(
                    "raml pretrains its representation with labels; pretrain.objective = {} \
                     belongs to uraml",
                    other.name()
                )));
            }
            (Method::Uraml, PretrainObjective::Supervised) => {
                return Err(CliError::Config(
                    "uraml needs an unsupervised pretraining objective (splitbrain or autoencoder)"
                        .into(),
                ));
            }
            _ => {}
        }
        if self.pretrain.engine.objective == PretrainObjective::SplitBrain
            && self.dataset.kind == DatasetKind::Synthetic
            && self.dataset.channels != 3
        {
            return Err(CliError::Config(
                "splitbrain pretraining needs 3-channel images (set dataset.channels = 3)".into(),
            ));
        }
        self.inner.validate()?;
        self.meta.engine.validate()?;
        self.pretrain.engine.validate()?;
        Ok(())
    }

    /// The complete key = value snapshot of this configuration, with every
    /// default made explicit. `run.dir` is deliberately absent so that the
    /// same experiment run anywhere yields the same snapshot and digest.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        line("method", self.method.name().to_string());
        line("seed", self.seed.to_string());

        let d = &self.dataset;
        match d.kind {
            DatasetKind::Synthetic => {
                line("dataset.kind", "synthetic".into());
                line("dataset.classes", d.classes.to_string());
                line("dataset.eval_classes", d.eval_classes.to_string());
                line("dataset.images_per_class", d.images_per_class.to_string());
                line("dataset.height", d.height.to_string());
                line("dataset.width", d.width.to_string());
                line("dataset.channels", d.channels.to_string());
                line("dataset.noise", d.noise.to_string());
                line("dataset.prototype_cells", d.prototype_cells.to_string());
            }
            DatasetKind::Directory => {
                line("dataset.kind", "directory".into());
                line("dataset.path", d.path.as_ref().expect("validated").display().to_string());
                if let Some(m) = &d.train_manifest {
                    line("dataset.train_manifest", m.display().to_string());
                }
                if let Some(m) = &d.test_manifest {
                    line("dataset.test_manifest", m.display().to_string());
                }
                line("dataset.flatten_characters", d.flatten_characters.to_string());
                if let Some((h, w)) = d.resize {
                    line("dataset.resize_height", h.to_string());
                    line("dataset.resize_width", w.to_string());
                }
            }
        }

        line("episode.ways", self.episode.ways.to_string());
        line("episode.shots", self.episode.shots.to_string());
        line("episode.queries", self.episode.queries.to_string());

        let n = &self.network;
        line("network.blocks", n.blocks.to_string());
        line("network.channels", n.channels.to_string());
        line("network.out_channels", n.out_channels.to_string());
        line("network.kernel", n.kernel.to_string());
        line("network.bn_before_relu", n.bn_before_relu.to_string());
        line("network.bn_epsilon", n.bn_epsilon.to_string());
        line("network.attention_bias", n.attention_bias.to_string());
        line("network.head_layers", n.head_layers.to_string());

        line("inner.steps", self.inner.steps.to_string());
        line("inner.alpha_init", self.inner.alpha_init.to_string());
        line("inner.alpha_trainable", self.inner.alpha_trainable.to_string());
        line("inner.dropout_in_inner", self.inner.dropout_in_inner.to_string());

        let m = &self.meta.engine;
        line("meta.beta", m.beta.to_string());
        line("meta.beta_decayed", m.beta_decayed.to_string());
        line("meta.decay_at", m.decay_at.to_string());
        line("meta.batch", m.meta_batch.to_string());
        line("meta.iterations", m.iterations.to_string());
        line("meta.second_order", m.second_order.to_string());
        line("meta.dropout", m.dropout.to_string());
        line("meta.l1", m.l1.to_string());
        line("meta.l2", m.l2.to_string());
        line("meta.log_every", self.meta.log_every.to_string());
        line("meta.checkpoint_every", self.meta.checkpoint_every.to_string());

        let p = &self.pretrain;
        line("pretrain.objective", p.engine.objective.name().to_string());
        line("pretrain.batch_size", p.engine.batch_size.to_string());
        line("pretrain.learning_rate", p.engine.learning_rate.to_string());
        line("pretrain.lr_decayed", p.engine.lr_decayed.to_string());
        line("pretrain.decay_at", p.engine.decay_at.to_string());
        line("pretrain.l2", p.engine.l2.to_string());
        line("pretrain.dropout", p.engine.dropout.to_string());
        line("pretrain.iterations", p.engine.iterations.to_string());
        line("pretrain.log_every", p.log_every.to_string());
        let (d0, d1, d2) = p.decoder_channels;
        line("pretrain.decoder_channels", format!("{d0},{d1},{d2}"));
        line("pretrain.recon_size", p.recon_size.to_string());
        if let Some(path) = &p.representation {
            line("pretrain.representation", path.display().to_string());
        }

        line("eval.tasks", self.eval.tasks.to_string());
        let shots: Vec<String> = self.eval.shots.iter().map(|s| s.to_string()).collect();
        line("eval.shots", shots.join(","));

        match self.cet_temperature {
            Temperature::Fixed(tau) => line("cet.temperature", tau.to_string()),
            Temperature::RowMax => line("cet.temperature", "max".into()),
        }
        line("features.per_class", self.features_per_class.to_string());
        line("heatmap.count", self.heatmap_count.to_string());
        out
    }

    /// SHA-256 of the emitted snapshot; stored in checkpoints so a resumed
    /// run can refuse a configuration that no longer matches.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.emit().as_bytes());
        hasher.finalize().into()
    }

    pub fn conv_stack_config(&self, input: (usize, usize, usize)) -> ConvStackConfig {
        ConvStackConfig {
            input,
            blocks: self.network.blocks,
            channels: self.network.channels,
            out_channels: self.network.out_channels,
            kernel: self.network.kernel,
            bn_before_relu: self.network.bn_before_relu,
            bn_epsilon: self.network.bn_epsilon,
        }
    }

    pub fn task_net_config(&self, input: (usize, usize, usize)) -> TaskNetConfig {
        TaskNetConfig {
            stack: self.conv_stack_config(input),
            attention_bias: self.network.attention_bias,
            head: HeadConfig { layers: self.network.head_layers, ways: self.episode.ways },
            variant: match self.method {
                Method::AmlMinusAttention => GateVariant::PlainConv,
                _ => GateVariant::Attention,
            },
        }
    }

    pub fn abp_config(&self, feature_dim: usize) -> AbpConfig {
        AbpConfig {
            feature_dim,
            attention_bias: self.network.attention_bias,
            head: HeadConfig { layers: self.network.head_layers, ways: self.episode.ways },
        }
    }

    /// Reconstruction target side: explicit, or a quarter of the shorter
    /// image side.
    pub fn recon_size(&self, input: (usize, usize, usize)) -> usize {
        if self.pretrain.recon_size > 0 {
            self.pretrain.recon_size
        } else {
            (input.0.min(input.1) / 4).max(1)
        }
    }

    pub fn encoder_config(&self, input: (usize, usize, usize)) -> EncoderConfig {
        EncoderConfig {
            stack: self.conv_stack_config(input),
            decoder_channels: self.pretrain.decoder_channels,
            recon_size: self.recon_size(input),
        }
    }

    pub fn splitbrain_config(&self, input: (usize, usize, usize)) -> SplitBrainConfig {
        SplitBrainConfig {
            stack: self.conv_stack_config(input),
            decoder_channels: self.pretrain.decoder_channels,
            recon_size: self.recon_size(input),
        }
    }
}
