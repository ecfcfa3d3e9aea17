//! Task definitions in the [`Ini`] format.
//!
//! A task named `P` (usually `task`) uses section `[P]` for the kind and
//! task-level keys, `[P.data]` for the data, and `[P.baseline]`,
//! `[P.retrain]` or `[P.classifier]` for training settings. Every key is
//! optional; the README lists them with defaults.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    DataSource, FeatureSelectionTask, PruningTask, RankingTask, SyntheticFeatures, SyntheticImages,
    SyntheticSpec, Task, TaskError,
};
use crate::config::{ConfigError, Ini};
use crate::net::{TrainConfig, ARCHITECTURES};

/// Keys accepted in `[P]`.
pub const TASK_KEYS: [&str; 7] = [
    "kind",
    "id",
    "arch",
    "ratio",
    "layers",
    "sample_limit",
    "init_seed",
];
const TASK_KEYS_FEATURES: [&str; 4] = ["kind", "id", "k", "sample_limit"];
const TRAIN_KEYS: [&str; 8] = [
    "epochs",
    "batch_size",
    "learning_rate",
    "lr_drops",
    "momentum",
    "weight_decay",
    "nesterov",
    "seed",
];

fn err(e: impl Into<String>) -> TaskError {
    TaskError::Config(e.into())
}

/// `[section]` as a training configuration on top of `base`. `lr_drops` is
/// a comma list of `fraction:factor` pairs, or `none`.
pub fn parse_train_config(
    ini: &Ini,
    section: &str,
    base: TrainConfig,
) -> Result<TrainConfig, ConfigError> {
    ini.check_keys(section, &TRAIN_KEYS)?;
    let drops = match ini.raw(section, "lr_drops") {
        None => base.lr_drops.clone(),
        Some(e) if e.value == "none" || e.value.is_empty() => vec![],
        Some(e) => e
            .value
            .split(',')
            .map(|pair| {
                let (f, m) = pair.trim().split_once(':')?;
                Some((f.trim().parse().ok()?, m.trim().parse().ok()?))
            })
            .collect::<Option<Vec<(f64, f64)>>>()
            .ok_or_else(|| ConfigError {
                line: Some(e.line),
                message: format!("[{section}] lr_drops: expected fraction:factor pairs"),
            })?,
    };
    let cfg = TrainConfig {
        epochs: ini.get_or(section, "epochs", base.epochs)?,
        batch_size: ini.get_or(section, "batch_size", base.batch_size)?,
        learning_rate: ini.get_or(section, "learning_rate", base.learning_rate)?,
        lr_drops: drops,
        momentum: ini.get_or(section, "momentum", base.momentum)?,
        weight_decay: ini.get_or(section, "weight_decay", base.weight_decay)?,
        nesterov: ini.get_or(section, "nesterov", base.nesterov)?,
        seed: ini.get_or(section, "seed", base.seed)?,
    };
    cfg.validate()
        .map_err(|m| ConfigError::new(format!("[{section}] {m}")))?;
    Ok(cfg)
}

fn path(base_dir: &Path, ini: &Ini, section: &str, key: &str) -> Result<PathBuf, TaskError> {
    let p: String = ini
        .get(section, key)?
        .ok_or_else(|| err(format!("[{section}] {key} is required for source = idx")))?;
    Ok(base_dir.join(p))
}

fn idx_source(base_dir: &Path, ini: &Ini, data: &str) -> Result<DataSource, TaskError> {
    ini.check_keys(
        data,
        &[
            "source",
            "train_images",
            "train_labels",
            "val_images",
            "val_labels",
        ],
    )?;
    Ok(DataSource::Idx {
        train_images: path(base_dir, ini, data, "train_images")?,
        train_labels: path(base_dir, ini, data, "train_labels")?,
        val_images: path(base_dir, ini, data, "val_images")?,
        val_labels: path(base_dir, ini, data, "val_labels")?,
    })
}

/// Builds the task named `name` from `ini`. Relative IDX paths resolve
/// against `base_dir`.
pub fn parse_task(ini: &Ini, name: &str, base_dir: &Path) -> Result<Task, TaskError> {
    if !ini.has(name) {
        return Err(err(format!("missing section [{name}]")));
    }
    let kind: String = ini.get_or(name, "kind", "ranking".to_string())?;
    let id: String = ini.get_or(name, "id", name.to_string())?;
    let data = format!("{name}.data");
    match kind.as_str() {
        "ranking" => {
            ini.check_keys(name, &["kind", "id"])?;
            ini.check_keys(
                &data,
                &[
                    "classes",
                    "channels",
                    "informative",
                    "map_side",
                    "per_class",
                    "separation",
                    "noise",
                    "base",
                    "label_only",
                ],
            )?;
            let d = SyntheticSpec::default();
            let spec = SyntheticSpec {
                classes: ini.get_or(&data, "classes", d.classes)?,
                channels: ini.get_or(&data, "channels", d.channels)?,
                informative: ini.get_or(&data, "informative", d.informative)?,
                map_side: ini.get_or(&data, "map_side", d.map_side)?,
                per_class: ini.get_or(&data, "per_class", d.per_class)?,
                separation: ini.get_or(&data, "separation", d.separation)?,
                noise: ini.get_or(&data, "noise", d.noise)?,
                base: ini.get_or(&data, "base", d.base)?,
                label_only: ini.get_or(&data, "label_only", d.label_only)?,
            };
            spec.validate().map_err(err)?;
            Ok(Task::Ranking(RankingTask { id, spec }))
        }
        "pruning" => {
            ini.check_keys(name, &TASK_KEYS)?;
            let d = PruningTask::default();
            let source: String = ini.get_or(&data, "source", "synthetic".to_string())?;
            let data_source = match source.as_str() {
                "synthetic" => {
                    ini.check_keys(
                        &data,
                        &[
                            "source",
                            "classes",
                            "side",
                            "train_per_class",
                            "val_per_class",
                            "noise",
                            "jitter",
                            "seed",
                        ],
                    )?;
                    let s = SyntheticImages::default();
                    let spec = SyntheticImages {
                        classes: ini.get_or(&data, "classes", s.classes)?,
                        side: ini.get_or(&data, "side", s.side)?,
                        train_per_class: ini.get_or(&data, "train_per_class", s.train_per_class)?,
                        val_per_class: ini.get_or(&data, "val_per_class", s.val_per_class)?,
                        noise: ini.get_or(&data, "noise", s.noise)?,
                        jitter: ini.get_or(&data, "jitter", s.jitter)?,
                    };
                    spec.validate().map_err(err)?;
                    DataSource::Synthetic {
                        spec,
                        seed: ini.get_or(&data, "seed", 1)?,
                    }
                }
                "idx" => idx_source(base_dir, ini, &data)?,
                other => return Err(err(format!("[{data}] unknown source {other:?}"))),
            };
            let arch: String = ini.get_or(name, "arch", d.arch.clone())?;
            if !ARCHITECTURES.contains(&arch.as_str()) {
                return Err(TaskError::UnknownArch(arch));
            }
            let task = PruningTask {
                id,
                data: data_source,
                arch,
                init_seed: ini.get_or(name, "init_seed", d.init_seed)?,
                baseline: parse_train_config(ini, &format!("{name}.baseline"), d.baseline)?,
                retrain: parse_train_config(ini, &format!("{name}.retrain"), d.retrain)?,
                ratio: ini.get_or(name, "ratio", d.ratio)?,
                layers: ini.get_list(name, "layers")?,
                sample_limit: ini.get_or(name, "sample_limit", d.sample_limit)?,
            };
            task.validate()?;
            Ok(Task::Pruning(task))
        }
        "features" => {
            ini.check_keys(name, &TASK_KEYS_FEATURES)?;
            let source: String = ini.get_or(&data, "source", "synthetic".to_string())?;
            let (train, val) = match source.as_str() {
                "synthetic" => {
                    ini.check_keys(
                        &data,
                        &[
                            "source",
                            "classes",
                            "features",
                            "informative",
                            "train_per_class",
                            "val_per_class",
                            "separation",
                            "noise",
                            "seed",
                        ],
                    )?;
                    let s = SyntheticFeatures::default();
                    let spec = SyntheticFeatures {
                        classes: ini.get_or(&data, "classes", s.classes)?,
                        features: ini.get_or(&data, "features", s.features)?,
                        informative: ini.get_or(&data, "informative", s.informative)?,
                        train_per_class: ini.get_or(&data, "train_per_class", s.train_per_class)?,
                        val_per_class: ini.get_or(&data, "val_per_class", s.val_per_class)?,
                        separation: ini.get_or(&data, "separation", s.separation)?,
                        noise: ini.get_or(&data, "noise", s.noise)?,
                    };
                    spec.validate().map_err(err)?;
                    let seed = ini.get_or(&data, "seed", 1)?;
                    let (train, val, _) = spec.generate(&mut ChaCha8Rng::seed_from_u64(seed));
                    (train, val)
                }
                "idx" => {
                    let (mut train, mut val) = idx_source(base_dir, ini, &data)?.load()?;
                    let f = train.sample_len();
                    train.sample_shape = vec![f];
                    val.sample_shape = vec![val.sample_len()];
                    let classes = train.classes.max(val.classes);
                    train.classes = classes;
                    val.classes = classes;
                    (train, val)
                }
                other => return Err(err(format!("[{data}] unknown source {other:?}"))),
            };
            let classifier = parse_train_config(
                ini,
                &format!("{name}.classifier"),
                TrainConfig {
                    epochs: 30,
                    learning_rate: 0.05,
                    lr_drops: vec![],
                    ..TrainConfig::default()
                },
            )?;
            let task = FeatureSelectionTask {
                id,
                k: ini.get_or(name, "k", 5usize.min(train.sample_len()))?,
                sample_limit: ini.get_or(name, "sample_limit", 2000)?,
                train,
                val,
                classifier,
            };
            task.validate()?;
            Ok(Task::Features(task))
        }
        other => Err(err(format!(
            "[{name}] kind must be ranking, pruning or features, got {other:?}"
        ))),
    }
}

/// Reads a task file whose task lives in section `[task]`.
pub fn read_task_file(path: &Path) -> Result<Task, TaskError> {
    let text = fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    let ini = Ini::parse(&text)?;
    let known = [
        "task",
        "task.data",
        "task.baseline",
        "task.retrain",
        "task.classifier",
    ];
    if let Some(s) = ini
        .sections
        .iter()
        .find(|s| !known.contains(&s.name.as_str()))
    {
        return Err(err(format!(
            "line {}: unknown section [{}]",
            s.line, s.name
        )));
    }
    parse_task(&ini, "task", path.parent().unwrap_or(Path::new(".")))
}
