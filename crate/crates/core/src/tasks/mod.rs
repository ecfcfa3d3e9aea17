//! Fitness tasks: synthetic channel ranking, one-shot prune-and-retrain on
//! small networks, and feature selection.

mod features;
mod idx;
mod pruning;
mod ranking;
mod synth;
mod taskfile;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use features::{
    classifier_accuracy, feature_contexts, run_feature_selection, write_score_map,
    FeatureSelection, FeatureSelectionTask,
};
pub use idx::{decode_idx, load_idx, IdxError, IDX_IMAGES, IDX_LABELS};
pub use pruning::{
    keep_count, keep_top, prune_and_retrain, run_pruning, run_pruning_task, Baseline,
    ChannelScorer, DataSource, LayerPlan, PruneError, PruneOutcome, PruningTask,
};
pub use ranking::{auc, run_ranking_task};
pub use synth::{synth_channels, SyntheticFeatures, SyntheticImages, SyntheticSpec};
pub use taskfile::{parse_task, parse_train_config, read_task_file, TASK_KEYS};

use crate::config::ConfigError;
use crate::evolve::{FitnessTask, TaskFailure};
use crate::ir::ExprTree;
use crate::net::NetError;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ConfigError),
    #[error("unknown architecture {0:?}")]
    UnknownArch(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("baseline training failed: {0}")]
    Baseline(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingTask {
    pub id: String,
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Ranking(RankingTask),
    Pruning(PruningTask),
    Features(FeatureSelectionTask),
}

impl Task {
    pub fn id(&self) -> &str {
        match self {
            Task::Ranking(t) => &t.id,
            Task::Pruning(t) => &t.id,
            Task::Features(t) => &t.id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Task::Ranking(_) => "ranking",
            Task::Pruning(_) => "pruning",
            Task::Features(_) => "features",
        }
    }

    /// Fitness of `tree` with all randomness drawn from `seed`.
    pub fn run(&self, tree: &ExprTree, seed: u64) -> Result<f64, TaskError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Task::Ranking(t) => Ok(run_ranking_task(tree, &t.spec, &mut rng)),
            Task::Pruning(t) => run_pruning_task(tree, t, &mut rng),
            Task::Features(t) => Ok(run_feature_selection(tree, t, &mut rng)?.accuracy),
        }
    }
}

impl FitnessTask for Task {
    fn id(&self) -> &str {
        Task::id(self)
    }

    fn evaluate(&self, tree: &ExprTree, seed: u64) -> Result<f64, TaskFailure> {
        self.run(tree, seed).map_err(|e| e.into())
    }
}
