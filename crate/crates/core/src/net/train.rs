use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, NetError, Network};

/// Labelled samples of a common shape. Labels are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub sample_shape: Vec<usize>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        sample_shape: Vec<usize>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, NetError> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || inputs.len() != per * labels.len() {
            return Err(NetError::Dataset(format!(
                "{} values for {} samples of shape {:?}",
                inputs.len(),
                labels.len(),
                sample_shape
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y == 0 || y > classes) {
            return Err(NetError::Label { label: y, classes });
        }
        Ok(Self {
            inputs,
            sample_shape,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.sample_len();
        &self.inputs[i * d..(i + 1) * d]
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices
                .iter()
                .flat_map(|&i| self.sample(i).to_vec())
                .collect(),
            sample_shape: self.sample_shape.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `(fraction, factor)`: from epoch `fraction * epochs` on, the rate is
    /// multiplied by `factor`.
    pub lr_drops: Vec<(f64, f64)>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.05,
            lr_drops: vec![(0.5, 0.1), (0.75, 0.1)],
            momentum: 0.9,
            weight_decay: 1e-4,
            nesterov: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err("learning_rate must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err("momentum must lie in [0, 1)".into());
        }
        if self
            .lr_drops
            .iter()
            .any(|&(f, m)| !(f > 0.0 && f < 1.0) || !(m > 0.0))
        {
            return Err("lr drop fractions must lie in (0, 1) with positive factors".into());
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        self.lr_drops
            .iter()
            .filter(|&&(f, _)| epoch as f64 >= f * self.epochs as f64)
            .fold(self.learning_rate, |lr, &(_, m)| lr * m)
    }
}

/// Fraction of samples whose arg-max logit (lowest index on ties) equals the label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64, NetError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let classes = net.output_len();
    let mut correct = 0usize;
    let chunk = 256;
    for start in (0..data.len()).step_by(chunk) {
        let end = (start + chunk).min(data.len());
        let d = data.sample_len();
        let pass = net.forward(&data.inputs[start * d..end * d], end - start, Mode::Eval)?;
        for (s, row) in pass.logits().chunks(classes).enumerate() {
            let pred = (0..classes)
                .reduce(|b, k| if row[k] > row[b] { k } else { b })
                .unwrap_or(0);
            if pred + 1 == data.labels[start + s] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch SGD with (Nesterov) momentum and weight decay. Returns the
/// trained network and the validation accuracy after every epoch.
pub fn train(
    net: &Network,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>), NetError> {
    cfg.validate().map_err(NetError::Dataset)?;
    if train.is_empty() {
        return Err(NetError::Dataset("empty training set".into()));
    }
    let mut net = net.clone();
    let mut velocity: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let d = train.sample_len();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut xb = Vec::with_capacity(cfg.batch_size * d);
    let mut yb = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let lr = cfg.rate_at(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(train.sample(i));
                yb.push(train.labels[i]);
            }
            let pass = net.forward(&xb, batch.len(), Mode::Train)?;
            let (loss, grads) = net.backward(&pass, &yb)?;
            if !loss.is_finite() {
                return Err(NetError::TrainingDiverged { epoch });
            }
            net.update_running_stats(&pass);
            for ((p, g), v) in net.params_mut().into_iter().zip(&grads).zip(&mut velocity) {
                for i in 0..p.len() {
                    let gi = g[i] + cfg.weight_decay * p[i];
                    v[i] = cfg.momentum * v[i] + gi;
                    let step = if cfg.nesterov {
                        gi + cfg.momentum * v[i]
                    } else {
                        v[i]
                    };
                    p[i] -= lr * step;
                }
            }
        }
        if net
            .params()
            .iter()
            .any(|p| p.iter().any(|v| !v.is_finite()))
        {
            return Err(NetError::TrainingDiverged { epoch });
        }
        history.push(accuracy(&net, val)?);
    }
    Ok((net, history))
}
