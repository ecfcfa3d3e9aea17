use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::tensor::{MapCollection, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextError {
    #[error("layer kernel must be rank 4, got shape {0:?}")]
    LayerShape(Vec<usize>),
    #[error("channel kernel shape {got:?} does not match layer kernel block {want:?}")]
    BlockShape { got: Vec<usize>, want: Vec<usize> },
    #[error("batch-norm parameters must have 4 entries, got {0}")]
    ParamLength(usize),
    #[error("{maps} maps but {labels} labels")]
    LabelCount { maps: usize, labels: usize },
    #[error("label {label} outside 1..={classes}")]
    LabelRange { label: usize, classes: usize },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
}

/// Everything a scoring function may read about one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelContext {
    w: Tensor,
    w_i: Tensor,
    b: Tensor,
    maps: MapCollection,
    labels: Vec<usize>,
    classes: usize,
}

impl ChannelContext {
    /// Labels are 1-based. Every class in `1..=classes` must own at least one map.
    pub fn new(
        w: Tensor,
        w_i: Tensor,
        b: Tensor,
        maps: MapCollection,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, ContextError> {
        if w.rank() != 4 {
            return Err(ContextError::LayerShape(w.shape().to_vec()));
        }
        if w_i.shape() != &w.shape()[1..] {
            return Err(ContextError::BlockShape {
                got: w_i.shape().to_vec(),
                want: w.shape()[1..].to_vec(),
            });
        }
        if b.len() != 4 {
            return Err(ContextError::ParamLength(b.len()));
        }
        if labels.len() != maps.count() {
            return Err(ContextError::LabelCount {
                maps: maps.count(),
                labels: labels.len(),
            });
        }
        let mut seen = vec![false; classes];
        for &y in &labels {
            if y == 0 || y > classes {
                return Err(ContextError::LabelRange { label: y, classes });
            }
            seen[y - 1] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(ContextError::EmptyClass(k + 1));
        }
        Ok(Self {
            w,
            w_i,
            b,
            maps,
            labels,
            classes,
        })
    }

    pub fn w(&self) -> &Tensor {
        &self.w
    }

    pub fn w_i(&self) -> &Tensor {
        &self.w_i
    }

    pub fn b(&self) -> &Tensor {
        &self.b
    }

    pub fn maps(&self) -> &MapCollection {
        &self.maps
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// `(F+, F-)` for class `k` (1-based), both in sample order.
    pub fn partition(&self, k: usize) -> (MapCollection, MapCollection) {
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..self.labels.len()).partition(|&i| self.labels[i] == k);
        (self.maps.select(&pos), self.maps.select(&neg))
    }

    /// Same context with labels renamed through `perm` (`perm[y-1]` is the new label of `y`).
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        let mut c = self.clone();
        c.labels = self.labels.iter().map(|&y| perm[y - 1]).collect();
        c
    }

    pub fn with_labels(&self, labels: Vec<usize>, classes: usize) -> Result<Self, ContextError> {
        Self::new(
            self.w.clone(),
            self.w_i.clone(),
            self.b.clone(),
            self.maps.clone(),
            labels,
            classes,
        )
    }

    pub fn with_maps(&self, maps: MapCollection) -> Result<Self, ContextError> {
        Self::new(
            self.w.clone(),
            self.w_i.clone(),
            self.b.clone(),
            maps,
            self.labels.clone(),
            self.classes,
        )
    }
}

/// Parameters of a random context drawn like the validity probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub classes: usize,
    pub maps_per_class: usize,
    pub map_side: usize,
    pub c_out: usize,
    pub c_in: usize,
    pub kernel: usize,
    /// Gap between consecutive class means.
    pub separation: f64,
    /// Mean of class 1. Maps are clipped at zero like post-ReLU activations.
    pub base: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            maps_per_class: 4,
            map_side: 4,
            c_out: 4,
            c_in: 3,
            kernel: 3,
            separation: 1.0,
            base: 3.0,
        }
    }
}

pub const PROBE_SEED: u64 = 0xC0FFEE;

/// Draws a context with unit-noise maps around class-specific means.
pub fn random_context(spec: &ProbeSpec, rng: &mut impl Rng) -> ChannelContext {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let block = spec.c_in * spec.kernel * spec.kernel;
    let w_data: Vec<f64> = (0..spec.c_out * block).map(|_| normal()).collect();
    let w = Tensor::new(
        vec![spec.c_out, spec.c_in, spec.kernel, spec.kernel],
        w_data,
    )
    .unwrap();
    let w_i = Tensor::new(
        vec![spec.c_in, spec.kernel, spec.kernel],
        w.data()[..block].to_vec(),
    )
    .unwrap();
    let b = Tensor::vector(vec![
        normal().abs() + 0.5,
        normal(),
        normal(),
        normal().abs() + 0.5,
    ]);
    let d = spec.map_side * spec.map_side;
    let n = spec.classes * spec.maps_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % spec.classes + 1;
        let mu = spec.base + spec.separation * (y - 1) as f64;
        data.extend((0..d).map(|_| (mu + normal()).max(0.0)));
        labels.push(y);
    }
    let maps = MapCollection::from_flat(vec![spec.map_side, spec.map_side], data).unwrap();
    ChannelContext::new(w, w_i, b, maps, labels, spec.classes).unwrap()
}

/// The fixed context every candidate function must evaluate on.
pub fn probe() -> &'static ChannelContext {
    static PROBE: OnceLock<ChannelContext> = OnceLock::new();
    PROBE.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        random_context(&ProbeSpec::default(), &mut rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_shape() {
        let p = probe();
        assert_eq!(p.classes(), 3);
        assert_eq!(p.maps().count(), 12);
        assert_eq!(p.maps().map_shape(), &[4, 4]);
        assert!(p.maps().data().iter().all(|&x| x >= 0.0));
        let (pos, neg) = p.partition(2);
        assert_eq!((pos.count(), neg.count()), (4, 8));
    }

    #[test]
    fn construction_checks_labels() {
        let p = probe();
        assert!(matches!(
            p.with_labels(vec![1; 12], 2),
            Err(ContextError::EmptyClass(2))
        ));
        assert!(matches!(
            p.with_labels(vec![4; 12], 3),
            Err(ContextError::LabelRange { .. })
        ));
        assert!(p.with_labels(vec![1; 11], 1).is_err());
    }
}
