use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::idx::load_idx;
use super::synth::SyntheticImages;
use super::TaskError;
use crate::error::EvalFailure;
use crate::ir::ExprTree;
use crate::net::{
    accuracy, build_arch, encode_pnet, extract_channel_context, train, Dataset, NetError, Network,
    TrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        spec: SyntheticImages,
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        val_images: PathBuf,
        val_labels: PathBuf,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<(Dataset, Dataset), TaskError> {
        match self {
            DataSource::Synthetic { spec, seed } => {
                spec.validate().map_err(TaskError::Config)?;
                Ok(spec.generate(&mut ChaCha8Rng::seed_from_u64(*seed)))
            }
            DataSource::Idx {
                train_images,
                train_labels,
                val_images,
                val_labels,
            } => {
                let mut train = load_idx(train_images, train_labels)?;
                let mut val = load_idx(val_images, val_labels)?;
                let classes = train.classes.max(val.classes);
                train.classes = classes;
                val.classes = classes;
                Ok((train, val))
            }
        }
    }
}

/// One-shot prune-and-retrain task with a uniform ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningTask {
    pub id: String,
    pub data: DataSource,
    pub arch: String,
    pub init_seed: u64,
    pub baseline: TrainConfig,
    pub retrain: TrainConfig,
    /// Fraction of channels removed from every target layer, in `[0, 1)`.
    pub ratio: f64,
    /// Conv/dense layer indices to prune; `None` means every prunable layer.
    pub layers: Option<Vec<usize>>,
    pub sample_limit: usize,
}

impl Default for PruningTask {
    fn default() -> Self {
        Self {
            id: "prune".into(),
            data: DataSource::Synthetic {
                spec: SyntheticImages::default(),
                seed: 1,
            },
            arch: "tiny_cnn".into(),
            init_seed: 1,
            baseline: TrainConfig {
                epochs: 15,
                batch_size: 32,
                learning_rate: 0.05,
                ..TrainConfig::default()
            },
            retrain: TrainConfig {
                epochs: 2,
                batch_size: 32,
                learning_rate: 0.01,
                lr_drops: vec![],
                ..TrainConfig::default()
            },
            ratio: 0.5,
            layers: None,
            sample_limit: 2000,
        }
    }
}

/// The trained starting point shared by every evaluation of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub net: Network,
    pub train: Dataset,
    pub val: Dataset,
    pub accuracy: f64,
    /// Hash of the serialized weights.
    pub fingerprint: u64,
}

type Slot = Arc<OnceLock<Result<Arc<Baseline>, String>>>;

fn cache() -> &'static Mutex<HashMap<(String, String), Slot>> {
    static CACHE: OnceLock<Mutex<HashMap<(String, String), Slot>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// How channels are chosen for removal.
#[derive(Debug, Clone, Copy)]
pub enum ChannelScorer<'a> {
    Tree(&'a ExprTree),
    /// Uniform random scores.
    Random,
    /// One keep mask per target layer, in target order.
    Fixed(&'a [Vec<bool>]),
}

/// Indices of the `keep` highest scores; equal scores favour the lower index.
pub fn keep_top(scores: &[f64], keep: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut mask = vec![false; scores.len()];
    for &i in order.iter().take(keep) {
        mask[i] = true;
    }
    mask
}

pub fn keep_count(channels: usize, ratio: f64) -> usize {
    (((1.0 - ratio) * channels as f64).ceil() as usize).clamp(1, channels)
}

impl PruningTask {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(TaskError::Config(format!(
                "ratio {} outside [0, 1)",
                self.ratio
            )));
        }
        if self.sample_limit == 0 {
            return Err(TaskError::Config("sample_limit must be positive".into()));
        }
        self.baseline.validate().map_err(TaskError::Config)?;
        self.retrain.validate().map_err(TaskError::Config)?;
        Ok(())
    }

    fn fingerprint_key(&self) -> String {
        format!(
            "{:?}|{}|{}|{:?}",
            self.data, self.arch, self.init_seed, self.baseline
        )
    }

    /// Trains the baseline once per task id and configuration; later calls
    /// share the result.
    pub fn baseline(&self) -> Result<Arc<Baseline>, TaskError> {
        let slot = {
            let mut map = cache().lock().expect("baseline cache");
            map.entry((self.id.clone(), self.fingerprint_key()))
                .or_default()
                .clone()
        };
        slot.get_or_init(|| {
            self.train_baseline()
                .map(Arc::new)
                .map_err(|e| e.to_string())
        })
        .clone()
        .map_err(TaskError::Baseline)
    }

    fn train_baseline(&self) -> Result<Baseline, TaskError> {
        self.validate()?;
        let (train_set, val) = self.data.load()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
        let net = build_arch(
            &self.arch,
            &train_set.sample_shape,
            train_set.classes,
            &mut rng,
        )
        .ok_or_else(|| TaskError::UnknownArch(self.arch.clone()))?;
        let (net, _) = train(&net, &train_set, &val, &self.baseline)?;
        let acc = accuracy(&net, &val)?;
        let mut h = DefaultHasher::new();
        encode_pnet(&net).hash(&mut h);
        Ok(Baseline {
            net,
            train: train_set,
            val,
            accuracy: acc,
            fingerprint: h.finish(),
        })
    }

    /// Target layers: the configured ones, or every conv/dense layer whose
    /// channels feed another conv/dense layer.
    pub fn target_layers(&self, net: &Network) -> Result<Vec<usize>, TaskError> {
        let all: Vec<usize> = net
            .channel_layers()
            .into_iter()
            .filter(|&i| net.next_param_layer(i).is_ok())
            .collect();
        match &self.layers {
            None => Ok(all),
            Some(ls) => match ls.iter().find(|l| !all.contains(l)) {
                Some(bad) => Err(TaskError::Config(format!("layer {bad} cannot be pruned"))),
                None => Ok(ls.clone()),
            },
        }
    }
}

/// What happened to one target layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    /// Layer index in the baseline network.
    pub layer: usize,
    /// Channel scores; `None` for fixed masks.
    pub scores: Option<Vec<f64>>,
    pub keep: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    /// The pruned network after retraining.
    pub net: Network,
    pub accuracy: f64,
    pub plans: Vec<LayerPlan>,
}

#[derive(Debug, Error)]
pub enum PruneError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("scoring channel {channel} of layer {layer}: {source}")]
    Eval {
        layer: usize,
        channel: usize,
        source: EvalFailure,
    },
    #[error("retraining diverged")]
    Diverged,
}

impl From<NetError> for PruneError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::TrainingDiverged { .. } => PruneError::Diverged,
            e => PruneError::Task(e.into()),
        }
    }
}

/// Prunes the task's baseline with `scorer` and retrains.
pub fn prune_and_retrain(
    task: &PruningTask,
    scorer: ChannelScorer<'_>,
    rng: &mut impl Rng,
) -> Result<PruneOutcome, PruneError> {
    let base = task.baseline()?;
    let retrain_seed: u64 = rng.random();
    let mut score_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let layers = task.target_layers(&base.net)?;
    if let ChannelScorer::Fixed(masks) = scorer {
        if masks.len() != layers.len() {
            return Err(TaskError::Config(format!(
                "{} keep masks for {} target layers",
                masks.len(),
                layers.len()
            ))
            .into());
        }
    }
    let mut net = base.net.clone();
    let mut plans = Vec::with_capacity(layers.len());
    for (t, &layer) in layers.iter().enumerate() {
        let channels = net.channels(layer).expect("target layer has channels");
        let keep = keep_count(channels, task.ratio);
        let scores = match scorer {
            ChannelScorer::Tree(tree) => {
                let contexts = extract_channel_context(
                    &net,
                    layer,
                    &base.train,
                    task.sample_limit,
                    &mut score_rng,
                )?;
                let mut s = Vec::with_capacity(channels);
                for (channel, c) in contexts.iter().enumerate() {
                    s.push(tree.evaluate(c).map_err(|source| PruneError::Eval {
                        layer,
                        channel,
                        source,
                    })?);
                }
                Some(s)
            }
            ChannelScorer::Random => Some((0..channels).map(|_| score_rng.random()).collect()),
            ChannelScorer::Fixed(_) => None,
        };
        let mask = match (&scores, scorer) {
            (_, ChannelScorer::Fixed(masks)) => masks[t].clone(),
            (Some(s), _) => keep_top(s, keep),
            (None, _) => unreachable!("scores exist for every scorer but Fixed"),
        };
        net = net.prune_channels(layer, &mask)?;
        plans.push(LayerPlan {
            layer,
            scores,
            keep: mask,
        });
    }
    let cfg = TrainConfig {
        seed: retrain_seed,
        ..task.retrain.clone()
    };
    let (net, _) = train(&net, &base.train, &base.val, &cfg)?;
    let accuracy = accuracy(&net, &base.val)?;
    Ok(PruneOutcome {
        net,
        accuracy,
        plans,
    })
}

/// Validation accuracy after [`prune_and_retrain`]. A scoring function that
/// fails on any channel, or a retrain that diverges, yields `0`.
pub fn run_pruning(
    task: &PruningTask,
    scorer: ChannelScorer<'_>,
    rng: &mut impl Rng,
) -> Result<f64, TaskError> {
    match prune_and_retrain(task, scorer, rng) {
        Ok(o) => Ok(o.accuracy),
        Err(PruneError::Eval { .. } | PruneError::Diverged) => Ok(0.0),
        Err(PruneError::Task(e)) => Err(e),
    }
}

pub fn run_pruning_task(
    tree: &ExprTree,
    task: &PruningTask,
    rng: &mut impl Rng,
) -> Result<f64, TaskError> {
    run_pruning(task, ChannelScorer::Tree(tree), rng)
}
