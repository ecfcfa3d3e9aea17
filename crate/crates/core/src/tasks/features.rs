use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pruning::keep_top;
use super::TaskError;
use crate::ir::ChannelContext;
use crate::ir::ExprTree;
use crate::net::{accuracy, train, Dataset, Dense, Layer, NetError, Network, TrainConfig};
use crate::tensor::{MapCollection, Tensor};

/// Scores every input feature, keeps the best `k` and trains a linear
/// softmax classifier on them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelectionTask {
    pub id: String,
    pub train: Dataset,
    pub val: Dataset,
    pub k: usize,
    pub classifier: TrainConfig,
    /// Samples used to build each feature's context.
    pub sample_limit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    pub scores: Vec<f64>,
    /// Kept feature indices, ascending.
    pub selected: Vec<usize>,
    pub accuracy: f64,
}

impl FeatureSelectionTask {
    pub fn validate(&self) -> Result<(), TaskError> {
        let f = self.train.sample_len();
        if self.k == 0 || self.k > f {
            return Err(TaskError::Config(format!("k = {} outside 1..={f}", self.k)));
        }
        if self.val.sample_len() != f {
            return Err(TaskError::Config(
                "train and validation feature counts differ".into(),
            ));
        }
        self.classifier.validate().map_err(TaskError::Config)
    }
}

/// One context per feature: its values over the samples as 1x1 maps. The
/// kernel operands are all-ones placeholders and `B = (1, 0, 0, 1)`.
pub fn feature_contexts(data: &Dataset, limit: usize) -> Vec<ChannelContext> {
    let f = data.sample_len();
    let n = data.len().min(limit);
    let w = Tensor::new(vec![f, 1, 1, 1], vec![1.0; f]).expect("shape");
    let w_i = Tensor::new(vec![1, 1, 1], vec![1.0]).expect("shape");
    let b = Tensor::vector(vec![1.0, 0.0, 0.0, 1.0]);
    (0..f)
        .map(|j| {
            let values = (0..n).map(|s| data.sample(s)[j]).collect();
            let maps = MapCollection::from_flat(vec![1, 1], values).expect("1x1 maps");
            ChannelContext::new(
                w.clone(),
                w_i.clone(),
                b.clone(),
                maps,
                data.labels[..n].to_vec(),
                data.classes,
            )
            .expect("every class present")
        })
        .collect()
}

fn columns(data: &Dataset, keep: &[usize]) -> Dataset {
    let inputs = (0..data.len())
        .flat_map(|s| keep.iter().map(move |&j| data.sample(s)[j]))
        .collect();
    Dataset::new(inputs, vec![keep.len()], data.labels.clone(), data.classes).expect("columns")
}

/// Validation accuracy of the linear classifier trained on columns `keep`.
pub fn classifier_accuracy(
    task: &FeatureSelectionTask,
    keep: &[usize],
    seed: u64,
) -> Result<f64, TaskError> {
    let train_set = columns(&task.train, keep);
    let val = columns(&task.val, keep);
    let mut rng = ChaCha8Rng::seed_from_u64(task.classifier.seed);
    let net = Network::new(
        vec![keep.len()],
        vec![Layer::Dense(Dense::init(
            keep.len(),
            task.train.classes,
            &mut rng,
        ))],
    )?;
    let cfg = TrainConfig {
        seed,
        ..task.classifier.clone()
    };
    match train(&net, &train_set, &val, &cfg) {
        Ok((net, _)) => Ok(accuracy(&net, &val)?),
        Err(NetError::TrainingDiverged { .. }) => Ok(0.0),
        Err(e) => Err(e.into()),
    }
}

pub fn run_feature_selection(
    tree: &ExprTree,
    task: &FeatureSelectionTask,
    rng: &mut impl Rng,
) -> Result<FeatureSelection, TaskError> {
    task.validate()?;
    let seed: u64 = rng.random();
    let contexts = feature_contexts(&task.train, task.sample_limit);
    let scores: Result<Vec<f64>, _> = contexts.iter().map(|c| tree.evaluate(c)).collect();
    let Ok(scores) = scores else {
        return Ok(FeatureSelection {
            scores: vec![],
            selected: vec![],
            accuracy: 0.0,
        });
    };
    let mask = keep_top(&scores, task.k);
    let selected: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    let accuracy = classifier_accuracy(task, &selected, seed)?;
    Ok(FeatureSelection {
        scores,
        selected,
        accuracy,
    })
}

/// Writes `scores.csv` (`index,score`) into `dir`, and `scores.pgm` when the
/// feature count is a perfect square. Returns the written paths.
pub fn write_score_map(dir: &Path, scores: &[f64]) -> io::Result<Vec<PathBuf>> {
    let mut csv = String::from("index,score\n");
    for (i, s) in scores.iter().enumerate() {
        writeln!(csv, "{i},{s}").expect("string write");
    }
    let csv_path = dir.join("scores.csv");
    fs::write(&csv_path, csv)?;
    let mut out = vec![csv_path];
    let side = (scores.len() as f64).sqrt().round() as usize;
    if side > 0 && side * side == scores.len() {
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut pgm = format!("P2\n{side} {side}\n255\n");
        for row in scores.chunks(side) {
            let line: Vec<String> = row
                .iter()
                .map(|s| (((s - lo) / span) * 255.0).round().to_string())
                .collect();
            pgm.push_str(&line.join(" "));
            pgm.push('\n');
        }
        let pgm_path = dir.join("scores.pgm");
        fs::write(&pgm_path, pgm)?;
        out.push(pgm_path);
    }
    Ok(out)
}
