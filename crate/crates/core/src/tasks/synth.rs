use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ir::ChannelContext;
use crate::net::Dataset;
use crate::tensor::{MapCollection, Tensor};

/// Synthetic channels with known informativeness.
///
/// Every informative channel has one mean map per class `k`, `base +
/// separation * (k - 1 + z)` with `z` standard normal per position and
/// class. Noise channels share one flat mean `base` across classes. Maps add `noise`
/// times standard normal noise and are clipped at zero.
///
/// With `label_only` every channel is generated the informative way and the
/// noise channels receive a shuffled copy of the labels instead, so the two
/// groups differ only in how labels attach to maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub channels: usize,
    pub informative: usize,
    pub map_side: usize,
    pub per_class: usize,
    pub separation: f64,
    pub noise: f64,
    pub base: f64,
    pub label_only: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            channels: 16,
            informative: 4,
            map_side: 3,
            per_class: 5,
            separation: 2.0,
            noise: 1.0,
            base: 4.0,
            label_only: false,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes < 2 {
            return Err("classes must be at least 2".into());
        }
        if self.informative > self.channels || self.informative == 0 {
            return Err("informative must lie in 1..=channels".into());
        }
        if self.informative == self.channels {
            return Err("at least one noise channel is needed".into());
        }
        if self.map_side == 0 || self.per_class == 0 {
            return Err("map_side and per_class must be positive".into());
        }
        if !(self.separation >= 0.0) || !(self.noise >= 0.0) || !self.base.is_finite() {
            return Err("separation and noise must be non-negative".into());
        }
        Ok(())
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Contexts for `spec.channels` channels of one layer and a flag per channel
/// telling whether it is informative. Informative channels sit at random
/// positions.
pub fn synth_channels(
    spec: &SyntheticSpec,
    rng: &mut impl Rng,
) -> (Vec<ChannelContext>, Vec<bool>) {
    let (c_in, k) = (2, 3);
    let block = c_in * k * k;
    let w = Tensor::new(
        vec![spec.channels, c_in, k, k],
        (0..spec.channels * block).map(|_| normal(rng)).collect(),
    )
    .expect("kernel shape");
    let mut flags: Vec<bool> = (0..spec.channels).map(|c| c < spec.informative).collect();
    flags.shuffle(rng);

    let n = spec.classes * spec.per_class;
    let d = spec.map_side * spec.map_side;
    let labels: Vec<usize> = (0..n).map(|i| i % spec.classes + 1).collect();
    let contexts = flags
        .iter()
        .enumerate()
        .map(|(c, &informative)| {
            let w_i = Tensor::new(
                vec![c_in, k, k],
                w.data()[c * block..(c + 1) * block].to_vec(),
            )
            .expect("block shape");
            let b = Tensor::vector(vec![
                normal(rng).abs() + 0.5,
                normal(rng),
                normal(rng),
                normal(rng).abs() + 0.5,
            ]);
            let patterned = informative || spec.label_only;
            let means: Vec<Vec<f64>> = (0..spec.classes)
                .map(|k| {
                    (0..d)
                        .map(|_| {
                            if patterned {
                                spec.base + spec.separation * (k as f64 + normal(rng))
                            } else {
                                spec.base
                            }
                        })
                        .collect()
                })
                .collect();
            let means = if patterned {
                means
            } else {
                vec![means[0].clone(); spec.classes]
            };
            let mut data = Vec::with_capacity(n * d);
            for &y in &labels {
                data.extend(
                    means[y - 1]
                        .iter()
                        .map(|&m| (m + spec.noise * normal(rng)).max(0.0)),
                );
            }
            let mut own = labels.clone();
            if spec.label_only && !informative {
                own.shuffle(rng);
            }
            let maps = MapCollection::from_flat(vec![spec.map_side, spec.map_side], data)
                .expect("map shape");
            ChannelContext::new(w.clone(), w_i, b, maps, own, spec.classes).expect("valid context")
        })
        .collect();
    (contexts, flags)
}

/// Images of thin lines whose orientation is the class: class `k` of `C`
/// draws a line at angle `pi * (k - 1) / C` through a random point near the
/// centre, on a `side x side` single-channel canvas, plus Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImages {
    pub classes: usize,
    pub side: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub noise: f64,
    /// Largest offset of the line from the centre, in pixels.
    pub jitter: f64,
}

impl Default for SyntheticImages {
    fn default() -> Self {
        Self {
            classes: 4,
            side: 8,
            train_per_class: 100,
            val_per_class: 50,
            noise: 0.3,
            jitter: 1.5,
        }
    }
}

impl SyntheticImages {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes < 2 || self.side < 4 {
            return Err("need at least 2 classes and side >= 4".into());
        }
        if self.train_per_class == 0 || self.val_per_class == 0 {
            return Err("per-class sample counts must be positive".into());
        }
        if !(self.noise >= 0.0) || !(self.jitter >= 0.0) {
            return Err("noise and jitter must be non-negative".into());
        }
        Ok(())
    }

    fn draw(&self, per_class: usize, rng: &mut impl Rng) -> Dataset {
        let s = self.side;
        let mid = (s as f64 - 1.0) / 2.0;
        let n = per_class * self.classes;
        let mut inputs = Vec::with_capacity(n * s * s);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % self.classes + 1;
            let theta = std::f64::consts::PI * (y - 1) as f64 / self.classes as f64;
            let (dx, dy) = (theta.cos(), theta.sin());
            let offset = self.jitter * (2.0 * rng.random::<f64>() - 1.0);
            for r in 0..s {
                for c in 0..s {
                    let (px, py) = (c as f64 - mid, r as f64 - mid);
                    // distance from the line through offset * normal with direction (dx, dy)
                    let dist = (px * dy - py * dx - offset).abs();
                    let ink = (1.0 - dist).max(0.0);
                    inputs.push(ink + self.noise * normal(rng));
                }
            }
            labels.push(y);
        }
        Dataset::new(inputs, vec![1, s, s], labels, self.classes).expect("consistent dataset")
    }

    /// `(train, validation)`.
    pub fn generate(&self, rng: &mut impl Rng) -> (Dataset, Dataset) {
        let train = self.draw(self.train_per_class, rng);
        let val = self.draw(self.val_per_class, rng);
        (train, val)
    }
}

/// Tabular data where `informative` of `features` columns have class means
/// `separation * (k - 1) * s` with a random sign `s` per feature, and the
/// rest are pure noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFeatures {
    pub classes: usize,
    pub features: usize,
    pub informative: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub separation: f64,
    pub noise: f64,
}

impl Default for SyntheticFeatures {
    fn default() -> Self {
        Self {
            classes: 2,
            features: 50,
            informative: 5,
            train_per_class: 60,
            val_per_class: 40,
            separation: 1.5,
            noise: 1.0,
        }
    }
}

impl SyntheticFeatures {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes < 2 || self.features == 0 || self.informative > self.features {
            return Err("need 2+ classes and informative <= features".into());
        }
        if self.train_per_class == 0 || self.val_per_class == 0 {
            return Err("per-class sample counts must be positive".into());
        }
        if !(self.separation >= 0.0) || !(self.noise >= 0.0) {
            return Err("separation and noise must be non-negative".into());
        }
        Ok(())
    }

    /// `(train, validation, informative flags)`.
    pub fn generate(&self, rng: &mut impl Rng) -> (Dataset, Dataset, Vec<bool>) {
        let mut flags: Vec<bool> = (0..self.features).map(|j| j < self.informative).collect();
        flags.shuffle(rng);
        let signs: Vec<f64> = flags
            .iter()
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let means: Vec<Vec<f64>> = (0..self.classes)
            .map(|k| {
                flags
                    .iter()
                    .zip(&signs)
                    .map(|(&f, &s)| {
                        if f {
                            self.separation * k as f64 * s
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut draw = |per_class: usize| {
            let n = per_class * self.classes;
            let mut inputs = Vec::with_capacity(n * self.features);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let y = i % self.classes + 1;
                inputs.extend(means[y - 1].iter().map(|&m| m + self.noise * normal(rng)));
                labels.push(y);
            }
            Dataset::new(inputs, vec![self.features], labels, self.classes).expect("dataset")
        };
        let train = draw(self.train_per_class);
        let val = draw(self.val_per_class);
        (train, val, flags)
    }
}
