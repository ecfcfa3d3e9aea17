//! Forward and backward kernels. Activations are batch-major: sample `n`
//! occupies `data[n * len .. (n + 1) * len]` with its own shape row-major.

pub(super) fn conv_out(h: usize, k: usize, stride: usize) -> usize {
    (h - k) / stride + 1
}

pub(super) struct ConvDims {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvDims {
    fn out(&self) -> (usize, usize) {
        (
            conv_out(self.h, self.k, self.stride),
            conv_out(self.w, self.k, self.stride),
        )
    }
}

pub(super) fn conv_forward(x: &[f64], weight: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
    let (oh, ow) = d.out();
    let mut y = vec![0.0; d.n * d.c_out * oh * ow];
    for n in 0..d.n {
        let xs = &x[n * d.c_in * d.h * d.w..];
        for o in 0..d.c_out {
            let ys = &mut y[(n * d.c_out + o) * oh * ow..(n * d.c_out + o + 1) * oh * ow];
            ys.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..d.c_in {
                let xc = &xs[c * d.h * d.w..(c + 1) * d.h * d.w];
                for p in 0..d.k {
                    for q in 0..d.k {
                        let wv = weight[((o * d.c_in + c) * d.k + p) * d.k + q];
                        for i in 0..oh {
                            let row = (i * d.stride + p) * d.w + q;
                            for j in 0..ow {
                                ys[i * ow + j] += wv * xc[row + j * d.stride];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(dx, dweight, dbias)`.
pub(super) fn conv_backward(
    x: &[f64],
    weight: &[f64],
    dy: &[f64],
    d: &ConvDims,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (oh, ow) = d.out();
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; d.c_out];
    for n in 0..d.n {
        let xs = &x[n * d.c_in * d.h * d.w..(n + 1) * d.c_in * d.h * d.w];
        let dxs = &mut dx[n * d.c_in * d.h * d.w..(n + 1) * d.c_in * d.h * d.w];
        for o in 0..d.c_out {
            let g = &dy[(n * d.c_out + o) * oh * ow..(n * d.c_out + o + 1) * oh * ow];
            db[o] += g.iter().sum::<f64>();
            for c in 0..d.c_in {
                for p in 0..d.k {
                    for q in 0..d.k {
                        let widx = ((o * d.c_in + c) * d.k + p) * d.k + q;
                        let wv = weight[widx];
                        let mut acc = 0.0;
                        for i in 0..oh {
                            let row = c * d.h * d.w + (i * d.stride + p) * d.w + q;
                            for j in 0..ow {
                                let xi = row + j * d.stride;
                                acc += g[i * ow + j] * xs[xi];
                                dxs[xi] += g[i * ow + j] * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// `y = x W^T + b` with `W` stored `units x inputs`.
pub(super) fn dense_forward(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    n: usize,
    inputs: usize,
    units: usize,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * units);
    for s in 0..n {
        let xs = &x[s * inputs..(s + 1) * inputs];
        for u in 0..units {
            let wr = &weight[u * inputs..(u + 1) * inputs];
            y.push(bias[u] + wr.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    y
}

pub(super) fn dense_backward(
    x: &[f64],
    weight: &[f64],
    dy: &[f64],
    n: usize,
    inputs: usize,
    units: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; n * inputs];
    let mut dw = vec![0.0; units * inputs];
    let mut db = vec![0.0; units];
    for s in 0..n {
        let xs = &x[s * inputs..(s + 1) * inputs];
        let dxs = &mut dx[s * inputs..(s + 1) * inputs];
        for u in 0..units {
            let g = dy[s * units + u];
            if g == 0.0 {
                continue;
            }
            db[u] += g;
            let wr = &weight[u * inputs..(u + 1) * inputs];
            let dwr = &mut dw[u * inputs..(u + 1) * inputs];
            for i in 0..inputs {
                dwr[i] += g * xs[i];
                dxs[i] += g * wr[i];
            }
        }
    }
    (dx, dw, db)
}

/// 2x2 max pooling with stride 2 (trailing odd rows/columns dropped).
/// Returns the output and the flat input index of each maximum.
pub(super) fn pool_forward(
    x: &[f64],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                y.push(x[best]);
                arg.push(best);
            }
        }
    }
    (y, arg)
}

pub(super) struct NormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-channel normalization. `group` is the number of entries per channel
/// within one sample (H*W for maps, 1 for features). With `stats = None` the
/// batch statistics are used, otherwise the given running statistics.
pub(super) fn norm_forward(
    x: &[f64],
    n: usize,
    channels: usize,
    group: usize,
    gamma: &[f64],
    beta: &[f64],
    stats: Option<(&[f64], &[f64])>,
    eps: f64,
) -> (Vec<f64>, NormCache) {
    let m = (n * group) as f64;
    let idx = |s: usize, c: usize, g: usize| (s * channels + c) * group + g;
    let (mean, var) = match stats {
        Some((mu, v)) => (mu.to_vec(), v.to_vec()),
        None => {
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for c in 0..channels {
                let mut s1 = 0.0;
                for s in 0..n {
                    for g in 0..group {
                        s1 += x[idx(s, c, g)];
                    }
                }
                let mu = s1 / m;
                let mut s2 = 0.0;
                for s in 0..n {
                    for g in 0..group {
                        s2 += (x[idx(s, c, g)] - mu).powi(2);
                    }
                }
                mean[c] = mu;
                var[c] = s2 / m;
            }
            (mean, var)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for s in 0..n {
        for c in 0..channels {
            for g in 0..group {
                let i = idx(s, c, g);
                xhat[i] = (x[i] - mean[c]) * inv_std[c];
                y[i] = gamma[c] * xhat[i] + beta[c];
            }
        }
    }
    (
        y,
        NormCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

/// Returns `(dx, dgamma, dbeta)`. `batch_stats` selects the training-mode
/// derivative, which also flows through the batch mean and variance.
pub(super) fn norm_backward(
    dy: &[f64],
    cache: &NormCache,
    n: usize,
    channels: usize,
    group: usize,
    gamma: &[f64],
    batch_stats: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = (n * group) as f64;
    let idx = |s: usize, c: usize, g: usize| (s * channels + c) * group + g;
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for s in 0..n {
        for c in 0..channels {
            for g in 0..group {
                let i = idx(s, c, g);
                dgamma[c] += dy[i] * cache.xhat[i];
                dbeta[c] += dy[i];
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for s in 0..n {
        for c in 0..channels {
            let k = gamma[c] * cache.inv_std[c];
            for g in 0..group {
                let i = idx(s, c, g);
                dx[i] = if batch_stats {
                    k * (dy[i] - dbeta[c] / m - cache.xhat[i] * dgamma[c] / m)
                } else {
                    k * dy[i]
                };
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Mean softmax cross-entropy over the batch and its gradient with respect to
/// the logits. Labels are 1-based.
pub fn softmax_xent(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for s in 0..n {
        let row = &logits[s * classes..(s + 1) * classes];
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        let y = labels[s] - 1;
        loss += z.ln() + mx - row[y];
        for k in 0..classes {
            let p = (row[k] - mx).exp() / z;
            grad[s * classes + k] = (p - if k == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}
