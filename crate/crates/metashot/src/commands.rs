//! The subcommands: each takes a resolved configuration plus runtime
//! options, owns its run directory for the duration, and leaves behind
//! the artifacts described in the README.

use std::fs;
use std::path::{Path, PathBuf};

use diffcore::Graph;
use episodes::{
    derive_rng, derive_seed, sample_episode, stack_images, DatasetHandle, EpisodeSpec,
    STREAM_EVAL, STREAM_INIT,
};
use evaluation::{
    cet, cross_test, evaluate_tasks, feature_distances, heatmap, heatmap_filename,
    write_heatmap_png, AccuracyMatrix, EvalReport, SHOT_LEVELS,
};
use metalearn::{
    embedded_task_source, episode_to_pair, image_task_source, inner_update, meta_train, pretrain,
    AbpModel, AmlModel, MetaConfig, MetaError, MetricsRow, PretrainNetwork, PretrainObjective,
    PretrainOutcome, TaskModel, TaskPair, TrainState,
};
use netmodels::{conv_stack, init_abp, init_task_net, NodeMap, RepresentationHandle};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::ResolvedConfig;
use crate::data::{load_data, DataBundle};
use crate::error::{CliError, Result};
use crate::rundir::prepare_run_dir;

pub const FINAL_CHECKPOINT: &str = "checkpoint_final.bin";
pub const REPRESENTATION_CHECKPOINT: &str = "representation.bin";
pub const METRICS_LOG: &str = "metrics.csv";
pub const PRETRAIN_LOG: &str = "pretrain_metrics.csv";
pub const MATRIX_CSV: &str = "matrix.csv";

/// Flags that shape execution without being part of the configuration
/// (and therefore without touching the config digest).
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub threads: usize,
    /// Continue meta-training from the run's checkpoint.
    pub resume: bool,
    /// Stop meta-training early at this iteration (for later resumption).
    pub until: Option<u64>,
    /// Explicit trained-model checkpoint, overriding the run directory's.
    pub checkpoint: Option<PathBuf>,
    /// Explicit representation checkpoint, overriding config and run dir.
    pub representation: Option<PathBuf>,
    /// Explicit accuracy-matrix CSV for `cet`.
    pub matrix: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: 1,
            resume: false,
            until: None,
            checkpoint: None,
            representation: None,
            matrix: None,
        }
    }
}

/// The method-specific pieces every stage needs: the task model and,
/// for embedding methods, the frozen representation.
enum TaskSetup {
    Image { model: AmlModel },
    Embedded { model: AbpModel, repr: RepresentationHandle },
}

impl TaskSetup {
    fn model(&self) -> &dyn TaskModel {
        match self {
            TaskSetup::Image { model } => model,
            TaskSetup::Embedded { model, .. } => model,
        }
    }

    fn source<'a>(
        &'a self,
        dataset: &'a DatasetHandle,
        spec: EpisodeSpec,
        seed: u64,
    ) -> Box<dyn Fn(u64) -> metalearn::Result<TaskPair> + Sync + 'a> {
        match self {
            TaskSetup::Image { .. } => Box::new(image_task_source(dataset, spec, seed)),
            TaskSetup::Embedded { repr, .. } => {
                Box::new(embedded_task_source(dataset, spec, seed, repr))
            }
        }
    }

    fn init_params(&self, seed: u64) -> Result<diffcore::ParamSet> {
        Ok(match self {
            TaskSetup::Image { model } => init_task_net(&model.cfg, seed)?,
            TaskSetup::Embedded { model, .. } => init_abp(&model.cfg, seed)?,
        })
    }
}

fn image_shape(bundle: &DataBundle) -> Result<(usize, usize, usize)> {
    let train = bundle.train.image_shape();
    let eval = bundle.eval.image_shape();
    if train != eval {
        return Err(CliError::Run(format!(
            "train and evaluation splits disagree on image shape: {train:?} vs {eval:?}"
        )));
    }
    Ok(train)
}

fn build_setup(
    cfg: &ResolvedConfig,
    bundle: &DataBundle,
    run_dir: &Path,
    opts: &RunOptions,
) -> Result<TaskSetup> {
    let shape = image_shape(bundle)?;
    if cfg.method.uses_representation() {
        let path = representation_path(cfg, run_dir, opts)?;
        let ck = load_checkpoint(&path)?;
        let repr = representation_from_checkpoint(cfg, shape, &ck, &path)?;
        let model = AbpModel { cfg: cfg.abp_config(repr.feature_dim()) };
        Ok(TaskSetup::Embedded { model, repr })
    } else {
        Ok(TaskSetup::Image { model: AmlModel { cfg: cfg.task_net_config(shape) } })
    }
}

/// Where the frozen representation lives: flag, config key, then the run
/// directory's own pretraining output.
fn representation_path(cfg: &ResolvedConfig, run_dir: &Path, opts: &RunOptions) -> Result<PathBuf> {
    if let Some(path) = &opts.representation {
        return Ok(path.clone());
    }
    if let Some(path) = &cfg.pretrain.representation {
        return Ok(path.clone());
    }
    let local = run_dir.join(REPRESENTATION_CHECKPOINT);
    if local.exists() {
        return Ok(local);
    }
    Err(CliError::Run(format!(
        "method `{}` needs a pretrained representation and {} does not exist; run \
         `metashot pretrain` first or point pretrain.representation at a checkpoint",
        cfg.method.name(),
        local.display()
    )))
}

fn representation_from_checkpoint(
    cfg: &ResolvedConfig,
    input: (usize, usize, usize),
    ck: &Checkpoint,
    path: &Path,
) -> Result<RepresentationHandle> {
    let Some(objective) = ck.kind.strip_prefix("repr:") else {
        return Err(CliError::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("holds `{}`, not a pretrained representation", ck.kind),
        });
    };
    let expected = cfg.pretrain.engine.objective.name();
    if objective != expected {
        return Err(CliError::Run(format!(
            "configuration expects {expected} pretraining but {} holds a {objective} \
             representation",
            path.display()
        )));
    }
    let handle = match cfg.pretrain.engine.objective {
        PretrainObjective::Supervised => RepresentationHandle::supervised(
            cfg.conv_stack_config(input),
            ck.params.filtered(|n| n.starts_with("r.")),
        )?,
        PretrainObjective::Autoencoder => RepresentationHandle::autoencoder(
            cfg.conv_stack_config(input),
            ck.params.filtered(|n| n.starts_with("r.")),
        )?,
        PretrainObjective::SplitBrain => RepresentationHandle::split_brain(
            cfg.splitbrain_config(input),
            ck.params.filtered(|n| n.starts_with("l.") || n.starts_with("ab.")),
        )?,
    };
    if handle.weights().is_empty() {
        return Err(CliError::Checkpoint {
            path: path.to_path_buf(),
            reason: "holds no encoder tensors".into(),
        });
    }
    Ok(handle)
}

fn load_meta_checkpoint(
    cfg: &ResolvedConfig,
    run_dir: &Path,
    opts: &RunOptions,
) -> Result<Checkpoint> {
    let path = opts.checkpoint.clone().unwrap_or_else(|| run_dir.join(FINAL_CHECKPOINT));
    if !path.exists() {
        return Err(CliError::Run(format!(
            "no trained model at {}; run `metashot meta-train` first or pass --checkpoint",
            path.display()
        )));
    }
    let ck = load_checkpoint(&path)?;
    let expected = format!("meta:{}", cfg.method.name());
    if ck.kind != expected {
        return Err(CliError::Checkpoint {
            path,
            reason: format!("holds `{}`, but this configuration needs `{expected}`", ck.kind),
        });
    }
    Ok(ck)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Run(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

// ---------------------------------------------------------------- pretrain

pub fn cmd_pretrain(cfg: &ResolvedConfig, _opts: &RunOptions) -> Result<()> {
    if !cfg.method.uses_representation() {
        return Err(CliError::Run(format!(
            "method `{}` trains end to end; only raml and uraml pretrain a representation",
            cfg.method.name()
        )));
    }
    let (dir, _lock) = prepare_run_dir(cfg)?;
    let bundle = load_data(cfg)?;
    let shape = image_shape(&bundle)?;
    let network = match cfg.pretrain.engine.objective {
        PretrainObjective::SplitBrain => PretrainNetwork::Split(cfg.splitbrain_config(shape)),
        _ => PretrainNetwork::Single(cfg.encoder_config(shape)),
    };
    let outcome = pretrain(&bundle.train, &network, &cfg.pretrain.engine, cfg.seed)?;
    write_pretrain_log(&dir.join(PRETRAIN_LOG), &outcome, cfg.pretrain.log_every)?;
    let first = outcome.losses.first().copied().unwrap_or(f64::NAN);
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    let ck = Checkpoint {
        kind: format!("repr:{}", cfg.pretrain.engine.objective.name()),
        digest: cfg.digest(),
        iteration: cfg.pretrain.engine.iterations,
        seed: cfg.seed,
        params: outcome.params,
        alpha: diffcore::ParamSet::new(),
    };
    let path = dir.join(REPRESENTATION_CHECKPOINT);
    save_checkpoint(&path, &ck)?;
    println!(
        "pretrained {} for {} iterations (loss {first:.6} -> {last:.6}); wrote {}",
        cfg.pretrain.engine.objective.name(),
        cfg.pretrain.engine.iterations,
        path.display()
    );
    Ok(())
}

fn write_pretrain_log(path: &Path, outcome: &PretrainOutcome, log_every: u64) -> Result<()> {
    let file = fs::File::create(path).map_err(CliError::io(path))?;
    let mut w = csv::Writer::from_writer(file);
    let total = outcome.losses.len();
    w.write_record(["iteration", "loss", "accuracy"])
        .map_err(|e| CliError::Run(format!("writing {}: {e}", path.display())))?;
    for (i, loss) in outcome.losses.iter().enumerate() {
        let iteration = (i + 1) as u64;
        if iteration % log_every != 0 && i + 1 != total {
            continue;
        }
        let accuracy =
            outcome.accuracies.get(i).map(|a| a.to_string()).unwrap_or_default();
        w.write_record([iteration.to_string(), loss.to_string(), accuracy])
            .map_err(|e| CliError::Run(format!("writing {}: {e}", path.display())))?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

// -------------------------------------------------------------- meta-train

pub fn cmd_meta_train(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<()> {
    let (dir, _lock) = prepare_run_dir(cfg)?;
    let bundle = load_data(cfg)?;
    let setup = build_setup(cfg, &bundle, &dir, opts)?;
    let digest = cfg.digest();
    let kind = format!("meta:{}", cfg.method.name());
    let final_path = dir.join(FINAL_CHECKPOINT);
    let metrics_path = dir.join(METRICS_LOG);

    let mut state = if opts.resume {
        let path = opts.checkpoint.clone().unwrap_or_else(|| final_path.clone());
        let ck = load_checkpoint(&path)?;
        if ck.kind != kind {
            return Err(CliError::Checkpoint {
                path,
                reason: format!("holds `{}`, cannot resume a `{kind}` run from it", ck.kind),
            });
        }
        if ck.digest != digest {
            return Err(CliError::Run(format!(
                "refusing to resume from {}: it was written under a different configuration \
                 (config digest mismatch)",
                path.display()
            )));
        }
        ck.into_state()
    } else {
        if metrics_path.exists() {
            return Err(CliError::Run(format!(
                "{} already exists; pass --resume to continue that run or start in a fresh \
                 run directory",
                metrics_path.display()
            )));
        }
        TrainState::new(
            setup.init_params(derive_seed(cfg.seed, STREAM_INIT, 0))?,
            &cfg.inner,
            cfg.seed,
        )
    };

    let target = opts.until.unwrap_or(u64::MAX).min(cfg.meta.engine.iterations);
    if state.iteration >= target {
        println!(
            "nothing to do: training is at iteration {} and the target is {target}",
            state.iteration
        );
        return Ok(());
    }

    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(CliError::io(&metrics_path))?;
    let fresh_log = file.metadata().map_err(CliError::io(&metrics_path))?.len() == 0;
    let mut log = csv::Writer::from_writer(file);
    if fresh_log {
        log.write_record(["iteration", "beta", "meta_loss", "support_loss", "query_accuracy"])
            .map_err(|e| CliError::Run(format!("writing {}: {e}", metrics_path.display())))?;
    }

    let model = setup.model();
    let source = setup.source(&bundle.train, cfg.episode, cfg.seed);
    let mut source = |index: u64| source(index);
    let every = cfg.meta.checkpoint_every;
    let full_budget = cfg.meta.engine.iterations;
    let mut last_row: Option<MetricsRow> = None;
    while state.iteration < target {
        let boundary = (state.iteration / every + 1) * every;
        let stop = boundary.min(target);
        let engine = MetaConfig { iterations: stop, ..cfg.meta.engine };
        let mut on_row = |row: &MetricsRow| -> metalearn::Result<()> {
            // The engine also emits a row whenever a training segment ends, so
            // an interrupted-and-resumed run would log extra rows at the split
            // points. Keeping only the canonical log points (multiples of the
            // cadence, plus the true final iteration) makes the metrics file
            // independent of where checkpoints or --until happened to land.
            if row.iteration % cfg.meta.log_every != 0 && row.iteration != full_budget {
                return Ok(());
            }
            log.write_record([
                row.iteration.to_string(),
                row.beta.to_string(),
                row.meta_loss.to_string(),
                row.support_loss.to_string(),
                row.query_accuracy.to_string(),
            ])
            .map_err(|e| MetaError::Config(format!("metrics log: {e}")))
        };
        let rows = meta_train(
            &mut state,
            model,
            &mut source,
            &cfg.inner,
            &engine,
            cfg.meta.log_every,
            Some(&mut on_row),
        )?;
        if let Some(row) = rows.into_iter().last() {
            last_row = Some(row);
        }
        let ck = Checkpoint::from_state(kind.clone(), digest, &state);
        save_checkpoint(&final_path, &ck)?;
        if state.iteration % every == 0 {
            save_checkpoint(&dir.join(format!("checkpoint_{}.bin", state.iteration)), &ck)?;
        }
    }
    log.flush().map_err(CliError::io(&metrics_path))?;

    match last_row {
        Some(row) => println!(
            "meta-trained to iteration {} (meta loss {:.6}, query accuracy {:.4}); wrote {}",
            state.iteration, row.meta_loss, row.query_accuracy, final_path.display()
        ),
        None => println!(
            "meta-trained to iteration {}; wrote {}",
            state.iteration,
            final_path.display()
        ),
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Serialize)]
struct EvaluationReport<'a> {
    method: &'a str,
    ways: usize,
    shots: usize,
    queries: usize,
    tasks: usize,
    checkpoint_iteration: u64,
    mean: f64,
    ci95: f64,
    accuracies: &'a [f64],
}

#[allow(clippy::too_many_arguments)]
fn evaluate_with(
    setup: &TaskSetup,
    params: &diffcore::ParamSet,
    alpha: &diffcore::ParamSet,
    cfg: &ResolvedConfig,
    dataset: &DatasetHandle,
    spec: EpisodeSpec,
    seed: u64,
    tasks: usize,
    threads: usize,
) -> evaluation::Result<EvalReport> {
    match setup {
        TaskSetup::Image { model } => evaluate_tasks(
            model,
            params,
            alpha,
            &cfg.inner,
            image_task_source(dataset, spec, seed),
            tasks,
            threads,
        ),
        TaskSetup::Embedded { model, repr } => evaluate_tasks(
            model,
            params,
            alpha,
            &cfg.inner,
            embedded_task_source(dataset, spec, seed, repr),
            tasks,
            threads,
        ),
    }
}

pub fn cmd_evaluate(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<()> {
    let (dir, _lock) = prepare_run_dir(cfg)?;
    let bundle = load_data(cfg)?;
    let setup = build_setup(cfg, &bundle, &dir, opts)?;
    let ck = load_meta_checkpoint(cfg, &dir, opts)?;
    let report = evaluate_with(
        &setup,
        &ck.params,
        &ck.alpha,
        cfg,
        &bundle.eval,
        cfg.episode,
        derive_seed(cfg.seed, STREAM_EVAL, 0),
        cfg.eval.tasks,
        opts.threads,
    )?;
    let path = dir.join("evaluation.json");
    write_json(
        &path,
        &EvaluationReport {
            method: cfg.method.name(),
            ways: cfg.episode.ways,
            shots: cfg.episode.shots,
            queries: cfg.episode.queries,
            tasks: cfg.eval.tasks,
            checkpoint_iteration: ck.iteration,
            mean: report.mean,
            ci95: report.ci95,
            accuracies: &report.accuracies,
        },
    )?;
    println!(
        "{}-way {}-shot over {} tasks: accuracy {:.4} +/- {:.4}; wrote {}",
        cfg.episode.ways,
        cfg.episode.shots,
        cfg.eval.tasks,
        report.mean,
        report.ci95,
        path.display()
    );
    Ok(())
}

// -------------------------------------------------------------- cross-test

pub fn cmd_cross_test(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<()> {
    if cfg.eval.shots != SHOT_LEVELS {
        return Err(CliError::Run(format!(
            "cross-test sweeps the fixed shot grid {SHOT_LEVELS:?}; set eval.shots to exactly \
             that list (got {:?})",
            cfg.eval.shots
        )));
    }
    let (dir, _lock) = prepare_run_dir(cfg)?;
    let bundle = load_data(cfg)?;
    let setup = build_setup(cfg, &bundle, &dir, opts)?;

    let mut trained: Vec<(usize, TrainState)> = Vec::new();
    for &train_shots in SHOT_LEVELS.iter() {
        let sub_seed = derive_seed(cfg.seed, STREAM_INIT, train_shots as u64);
        let spec = EpisodeSpec { shots: train_shots, ..cfg.episode };
        let mut state = TrainState::new(
            setup.init_params(derive_seed(sub_seed, STREAM_INIT, 0))?,
            &cfg.inner,
            sub_seed,
        );
        let source = setup.source(&bundle.train, spec, sub_seed);
        let mut source = |index: u64| source(index);
        meta_train(
            &mut state,
            setup.model(),
            &mut source,
            &cfg.inner,
            &cfg.meta.engine,
            cfg.meta.log_every,
            None,
        )?;
        println!("trained the {train_shots}-shot model to iteration {}", state.iteration);
        trained.push((train_shots, state));
    }

    let matrix = cross_test(|train, test| {
        let (_, state) = trained
            .iter()
            .find(|(s, _)| *s == train)
            .expect("every grid row was trained above");
        let spec = EpisodeSpec { shots: test, ..cfg.episode };
        let eval_seed =
            derive_seed(derive_seed(cfg.seed, STREAM_INIT, train as u64), STREAM_EVAL, test as u64);
        evaluate_with(
            &setup,
            &state.params,
            &state.alpha,
            cfg,
            &bundle.eval,
            spec,
            eval_seed,
            cfg.eval.tasks,
            opts.threads,
        )
    })?;
    let path = dir.join(MATRIX_CSV);
    matrix.write_csv(&path)?;
    print!("{}", matrix.to_csv()?);
    println!("wrote {}", path.display());
    Ok(())
}

// --------------------------------------------------------------------- cet

pub fn cmd_cet(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<()> {
    let (dir, _lock) = prepare_run_dir(cfg)?;
    let path = opts.matrix.clone().unwrap_or_else(|| dir.join(MATRIX_CSV));
    if !path.exists() {
        return Err(CliError::Run(format!(
            "no accuracy matrix at {}; run `metashot cross-test` first or pass --matrix",
            path.display()
        )));
    }
    let matrix = AccuracyMatrix::read_csv(&path)?;
    let report = cet(&matrix, cfg.cet_temperature)?;
    let out = dir.join("cet.json");
    let mut text = report.to_json()?;
    text.push('\n');
    fs::write(&out, text).map_err(CliError::io(&out))?;
    println!("cross-entropy task-overfitting score L = {:.5}; wrote {}", report.total, out.display());
    Ok(())
}

// ---------------------------------------------------------------- features

#[derive(Serialize)]
struct FeaturesReport<'a> {
    method: &'a str,
    classes: usize,
    per_class: usize,
    feature_dim: usize,
    within_class_distance: f64,
    between_class_distance: f64,
}

pub fn cmd_features(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<()> {
    let (dir, _lock) = prepare_run_dir(cfg)?;
    let bundle = load_data(cfg)?;
    let setup = build_setup(cfg, &bundle, &dir, opts)?;

    let eval = &bundle.eval;
    let per_class = cfg.features_per_class.min(eval.min_class_len());
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for class in 0..eval.class_count() {
        for index in 0..per_class {
            images.push(eval.image(class, index)?);
            labels.push(class);
        }
    }
    let batch = stack_images(&images)?;

    let features = match &setup {
        TaskSetup::Embedded { repr, .. } => repr.features(&batch)?,
        TaskSetup::Image { model } => {
            // Pooled backbone features of the meta-trained network.
            let ck = load_meta_checkpoint(cfg, &dir, opts)?;
            let mut g = Graph::new();
            let weights = NodeMap::params(&mut g, &ck.params)?;
            let x = g.constant(batch);
            let map = conv_stack(&mut g, x, &weights, "f", &model.cfg.stack)?;
            let pooled = g.global_avg_pool(map)?;
            g.eval(pooled, &ck.params)?
        }
    };
    let stats = feature_distances(&features, &labels)?;
    let dim = features.shape().iter().skip(1).product();

    let path = dir.join("features.json");
    write_json(
        &path,
        &FeaturesReport {
            method: cfg.method.name(),
            classes: eval.class_count(),
            per_class,
            feature_dim: dim,
            within_class_distance: stats.d1,
            between_class_distance: stats.d2,
        },
    )?;
    println!(
        "within-class distance {:.6}, between-class distance {:.6}; wrote {}",
        stats.d1,
        stats.d2,
        path.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- heatmap

pub fn cmd_heatmap(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<()> {
    if cfg.method.uses_representation() {
        return Err(CliError::Run(
            "attention heatmaps need the convolutional task network (aml or \
             aml_minus_attention); embedding predictors have no spatial maps"
                .into(),
        ));
    }
    let (dir, _lock) = prepare_run_dir(cfg)?;
    let bundle = load_data(cfg)?;
    let setup = build_setup(cfg, &bundle, &dir, opts)?;
    let TaskSetup::Image { model } = &setup else { unreachable!("checked above") };
    let ck = load_meta_checkpoint(cfg, &dir, opts)?;

    let mut rng = derive_rng(cfg.seed, STREAM_EVAL, 0);
    let episode = sample_episode(&bundle.eval, &cfg.episode, &mut rng)?;
    let pair = episode_to_pair(&episode, cfg.episode.ways)?;
    let adapted = inner_update(model, &ck.params, &ck.alpha, &pair.support, &cfg.inner)?;

    let mut g = Graph::new();
    let weights = NodeMap::params(&mut g, &adapted)?;
    let x = g.constant(pair.query.inputs.clone());
    let nodes = netmodels::task_net_forward(&mut g, x, &weights, &model.cfg, None)?;
    let evaluated = g.eval_many(&[nodes.feature_map, nodes.gated_map], &adapted)?;
    let before = heatmap(&evaluated[0])?;
    let after = heatmap(&evaluated[1])?;

    let out_dir = dir.join("heatmaps");
    fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    let count = cfg.heatmap_count.min(before.len());
    for index in 0..count {
        write_heatmap_png(
            &before[index],
            out_dir.join(heatmap_filename(cfg.method.name(), index, false)),
        )?;
        write_heatmap_png(
            &after[index],
            out_dir.join(heatmap_filename(cfg.method.name(), index, true)),
        )?;
    }
    println!("wrote {count} map pairs under {}", out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------- dispatch

/// Which stage to run; mirrors the command line one-to-one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    MetaTrain,
    Evaluate,
    CrossTest,
    Cet,
    Features,
    Heatmap,
}

pub fn execute(stage: Stage, cfg: &ResolvedConfig, opts: &RunOptions) -> Result<()> {
    if opts.threads == 0 {
        return Err(CliError::Run("--threads must be at least 1".into()));
    }
    match stage {
        Stage::Pretrain => cmd_pretrain(cfg, opts),
        Stage::MetaTrain => cmd_meta_train(cfg, opts),
        Stage::Evaluate => cmd_evaluate(cfg, opts),
        Stage::CrossTest => cmd_cross_test(cfg, opts),
        Stage::Cet => cmd_cet(cfg, opts),
        Stage::Features => cmd_features(cfg, opts),
        Stage::Heatmap => cmd_heatmap(cfg, opts),
    }
}
