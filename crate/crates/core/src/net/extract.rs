use rand::seq::index::sample;
use rand::Rng;

use super::{Dataset, Layer, Mode, NetError, Network};
use crate::ir::ChannelContext;
use crate::tensor::{MapCollection, Tensor};

/// Builds one scoring context per output channel of a conv or dense layer.
///
/// Maps are read after the layer's batch-norm and ReLU (dense units give
/// 1x1 maps). At most `sample_limit` inputs are used; when the dataset is
/// larger a seeded subset is drawn and kept in dataset order. Channels
/// without batch-norm get `B = (1, 0, 0, 1)`.
pub fn extract_channel_context(
    net: &Network,
    layer_index: usize,
    data: &Dataset,
    sample_limit: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ChannelContext>, NetError> {
    let (w_shape, weight) = match net.layers.get(layer_index) {
        Some(Layer::Conv2d(c)) => (vec![c.c_out, c.c_in, c.k, c.k], c.weight.clone()),
        Some(Layer::Dense(d)) => (vec![d.units, d.inputs, 1, 1], d.weight.clone()),
        _ => {
            return Err(NetError::Layer {
                index: layer_index,
                reason: "not a conv2d or dense layer".into(),
            })
        }
    };
    let channels = w_shape[0];
    let indices: Vec<usize> = if data.len() <= sample_limit {
        (0..data.len()).collect()
    } else {
        let mut s = sample(rng, data.len(), sample_limit).into_vec();
        s.sort_unstable();
        s
    };
    let subset = data.subset(&indices);
    let pass = net.forward(&subset.inputs, subset.len(), Mode::Eval)?;

    let mut at = layer_index + 1;
    let mut bn = None;
    while at < net.layers.len() {
        match &net.layers[at] {
            Layer::BatchNorm(b) => {
                bn.get_or_insert(b);
                at += 1;
            }
            Layer::Relu => {
                at += 1;
                break;
            }
            _ => break,
        }
    }
    let shape = &pass.shapes[at];
    let map_shape = if shape.len() == 3 {
        shape[1..].to_vec()
    } else {
        vec![1, 1]
    };
    let per_sample: usize = shape.iter().product();
    let g = per_sample / channels;
    let acts = &pass.acts[at];
    let n = subset.len();

    let w = Tensor::new(w_shape.clone(), weight).map_err(|e| NetError::Dataset(e.to_string()))?;
    let block = weight_block(&w, &w_shape);
    (0..channels)
        .map(|c| {
            let mut maps = Vec::with_capacity(n * g);
            for s in 0..n {
                let start = s * per_sample + c * g;
                maps.extend_from_slice(&acts[start..start + g]);
            }
            let b = match bn {
                Some(b) => vec![b.gamma[c], b.beta[c], b.running_mean[c], b.running_var[c]],
                None => vec![1.0, 0.0, 0.0, 1.0],
            };
            let maps = MapCollection::from_flat(map_shape.clone(), maps)
                .map_err(|e| NetError::Dataset(e.to_string()))?;
            ChannelContext::new(
                w.clone(),
                block(c),
                Tensor::vector(b),
                maps,
                subset.labels.clone(),
                data.classes,
            )
            .map_err(|e| NetError::Dataset(e.to_string()))
        })
        .collect()
}

fn weight_block<'a>(w: &'a Tensor, shape: &'a [usize]) -> impl Fn(usize) -> Tensor + 'a {
    let len: usize = shape[1..].iter().product();
    move |c| {
        Tensor::new(
            shape[1..].to_vec(),
            w.data()[c * len..(c + 1) * len].to_vec(),
        )
        .expect("block shape")
    }
}
