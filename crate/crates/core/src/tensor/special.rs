use super::{Bandwidth, KernelConfig, MapCollection, Tensor};
use crate::error::{EvalFailure, EvalResult};

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn pairwise_sq(a: &MapCollection, b: &MapCollection) -> Vec<f64> {
    let mut d2 = Vec::with_capacity(a.count() * b.count());
    for x in a.iter() {
        d2.extend(b.iter().map(|y| sq_dist(x, y)));
    }
    d2
}

/// Bandwidth for `rbf(a, b)`. The median heuristic takes the median of the
/// strictly positive distances between members of `a` and members of `b`.
pub fn rbf_bandwidth(a: &MapCollection, b: &MapCollection, mode: Bandwidth) -> f64 {
    match mode {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianHeuristic => median_bandwidth(&pairwise_sq(a, b)),
    }
}

fn median_bandwidth(d2: &[f64]) -> f64 {
    let mut d: Vec<f64> = d2.iter().filter(|&&x| x > 0.0).map(|x| x.sqrt()).collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    let sigma = med / std::f64::consts::SQRT_2;
    if sigma > 0.0 && sigma.is_finite() {
        sigma
    } else {
        1.0
    }
}

/// Gaussian kernel matrix `K[i][j] = exp(-|a_i - b_j|^2 / (2 sigma^2))`.
pub fn rbf(a: &MapCollection, b: &MapCollection, cfg: &KernelConfig) -> EvalResult<Tensor> {
    if a.map_len() != b.map_len() {
        return Err(EvalFailure::Shape {
            op: "rbf",
            lhs: a.map_shape().to_vec(),
            rhs: b.map_shape().to_vec(),
        });
    }
    let d2 = pairwise_sq(a, b);
    let sigma = match cfg.rbf_bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 => s,
        Bandwidth::Fixed(_) => 1.0,
        Bandwidth::MedianHeuristic => median_bandwidth(&d2),
    };
    let denom = 2.0 * sigma * sigma;
    let k = d2.into_iter().map(|x| (-x / denom).exp()).collect();
    Tensor::matrix(a.count(), b.count(), k)?.check_finite("rbf")
}

/// Geometric median of the `c_out` filters of a layer kernel, computed with
/// Weiszfeld iterations started from the arithmetic mean. When an iterate
/// lands on a filter, that filter's weight is excluded and the step follows
/// the Vardi-Zhang correction, which also detects a filter that is itself the
/// median. Returns a `c_in x h x w` tensor.
pub fn geometric_median(w: &Tensor, cfg: &KernelConfig) -> EvalResult<Tensor> {
    let (n, block_shape) = match w.shape() {
        [c_out, rest @ ..] if *c_out >= 1 && !rest.is_empty() => (*c_out, rest.to_vec()),
        _ => {
            return Err(EvalFailure::Operand {
                op: "geo",
                detail: "layer kernel with at least one filter required",
            })
        }
    };
    let d = w.len() / n;
    let pts: Vec<&[f64]> = w.data().chunks(d).collect();
    let y = weiszfeld(&pts, d, cfg.weiszfeld_tol, cfg.weiszfeld_max_iter);
    Tensor::new(block_shape, y)?.check_finite("geo")
}

pub(crate) fn weiszfeld(pts: &[&[f64]], d: usize, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = pts.len() as f64;
    let mut y = vec![0.0; d];
    for p in pts {
        for (yi, &pi) in y.iter_mut().zip(p.iter()) {
            *yi += pi / n;
        }
    }
    for _ in 0..max_iter {
        let scale = 1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        let mut coincident = 0usize;
        for p in pts {
            let dist = sq_dist(p, &y).sqrt();
            if dist <= 1e-12 * scale {
                coincident += 1;
                continue;
            }
            let wgt = 1.0 / dist;
            for (ni, &pi) in num.iter_mut().zip(p.iter()) {
                *ni += wgt * pi;
            }
            den += wgt;
        }
        if den == 0.0 {
            break;
        }
        let t: Vec<f64> = num.iter().map(|v| v / den).collect();
        let next: Vec<f64> = if coincident > 0 {
            // r = sum_i w_i (x_i - y) over the non-coincident points
            let r: f64 = num
                .iter()
                .zip(&y)
                .map(|(nv, yv)| (nv - den * yv).powi(2))
                .sum::<f64>()
                .sqrt();
            let eta = coincident as f64;
            if r <= eta {
                break;
            }
            let lam = eta / r;
            t.iter()
                .zip(&y)
                .map(|(tv, yv)| (1.0 - lam) * tv + lam * yv)
                .collect()
        } else {
            t
        };
        let step = sq_dist(&next, &y).sqrt();
        y = next;
        if step <= tol {
            break;
        }
    }
    y
}

/// Entry at flat position `index`, as a rank-0 tensor.
pub fn slice(b: &Tensor, index: usize) -> EvalResult<Tensor> {
    b.data()
        .get(index)
        .map(|&x| Tensor::scalar(x))
        .ok_or(EvalFailure::OutOfRange {
            index,
            len: b.len(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(shape: &[usize], data: &[f64]) -> MapCollection {
        MapCollection::from_flat(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn rbf_fixed_bandwidth_value() {
        let cfg = KernelConfig {
            rbf_bandwidth: Bandwidth::Fixed(1.0),
            ..Default::default()
        };
        let k = rbf(&maps(&[1], &[0.]), &maps(&[1], &[2.]), &cfg).unwrap();
        assert!((k.data()[0] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((k.data()[0] - 0.13534).abs() < 1e-5);
    }

    #[test]
    fn rbf_self_kernel_unit_diagonal_and_symmetric() {
        let x = maps(&[2], &[0., 1., 2., 0.5, -1., 3.]);
        let k = rbf(&x, &x, &KernelConfig::default()).unwrap();
        for i in 0..3 {
            assert_eq!(k.data()[i * 3 + i], 1.0);
            for j in 0..3 {
                assert_eq!(k.data()[i * 3 + j], k.data()[j * 3 + i]);
            }
        }
    }

    #[test]
    fn rbf_degenerate_bandwidth_falls_back_to_one() {
        let x = maps(&[1], &[3., 3.]);
        assert_eq!(rbf_bandwidth(&x, &x, Bandwidth::MedianHeuristic), 1.0);
    }

    #[test]
    fn median_bandwidth_value() {
        // distances 1, 2, 3 -> median 2 -> sigma = sqrt 2
        let a = maps(&[1], &[0.]);
        let b = maps(&[1], &[1., 2., 3.]);
        let s = rbf_bandwidth(&a, &b, Bandwidth::MedianHeuristic);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn geo_symmetric_triangle() {
        let h = 3f64.sqrt() / 2.0;
        let w = Tensor::new(vec![3, 2], vec![1., 0., -0.5, h, -0.5, -h]).unwrap();
        let g = geometric_median(&w, &KernelConfig::default()).unwrap();
        assert_eq!(g.shape(), &[2]);
        assert!(g.data()[0].abs() < 1e-6 && g.data()[1].abs() < 1e-6);
    }

    #[test]
    fn geo_collinear_is_median_point() {
        let w = Tensor::new(vec![3, 1], vec![0., 1., 10.]).unwrap();
        let g = geometric_median(&w, &KernelConfig::default()).unwrap();
        assert!((g.data()[0] - 1.0).abs() < 1e-6, "{:?}", g.data());
    }

    #[test]
    fn geo_single_filter() {
        let w = Tensor::new(vec![1, 2, 1, 1], vec![4., -1.]).unwrap();
        let g = geometric_median(&w, &KernelConfig::default()).unwrap();
        assert_eq!(g.shape(), &[2, 1, 1]);
        assert_eq!(g.data(), &[4., -1.]);
    }

    #[test]
    fn slice_indexing() {
        let b = Tensor::vector(vec![0.7, 0.1, 0.0, 1.0]);
        assert_eq!(slice(&b, 0).unwrap().as_scalar(), Some(0.7));
        assert_eq!(
            slice(&Tensor::vector(vec![1., 2., 3.]), 2)
                .unwrap()
                .as_scalar(),
            Some(3.0)
        );
        assert_eq!(
            slice(&Tensor::vector(vec![1.]), 5),
            Err(EvalFailure::OutOfRange { index: 5, len: 1 })
        );
    }
}
