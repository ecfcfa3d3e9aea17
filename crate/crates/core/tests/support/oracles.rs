// Direct-formula versions of the library metrics, written against plain
// vectors and nalgebra so they share no code with the tree evaluator.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use prunevolve_core::{ChannelContext, MapCollection, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

pub struct Raw {
    pub filters: Vec<Vec<f64>>,
    pub w_shape: [usize; 4],
    pub bn: [f64; 4],
    pub maps: Vec<Vec<f64>>,
    pub side: usize,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Raw {
    pub fn random(rng: &mut impl Rng, classes: usize, per_class: usize, side: usize) -> Raw {
        let (c_out, c_in, k) = (4, 2, 3);
        let mut n = || -> f64 { rng.sample(StandardNormal) };
        let filters = (0..c_out)
            .map(|_| (0..c_in * k * k).map(|_| n()).collect())
            .collect();
        let bn = [n(), n(), n(), n().abs() + 0.1];
        let mut maps = Vec::new();
        let mut labels = Vec::new();
        for i in 0..classes * per_class {
            let y = i % classes + 1;
            let offset = 0.5 * y as f64;
            maps.push((0..side * side).map(|_| offset + n().abs()).collect());
            labels.push(y);
        }
        Raw {
            filters,
            w_shape: [c_out, c_in, k, k],
            bn,
            maps,
            side,
            labels,
            classes,
        }
    }

    pub fn context(&self) -> ChannelContext {
        let w: Vec<f64> = self.filters.concat();
        let block = self.w_shape[1..].to_vec();
        ChannelContext::new(
            Tensor::new(self.w_shape.to_vec(), w).unwrap(),
            Tensor::new(block, self.filters[0].clone()).unwrap(),
            Tensor::vector(self.bn.to_vec()),
            MapCollection::from_flat(vec![self.side, self.side], self.maps.concat()).unwrap(),
            self.labels.clone(),
            self.classes,
        )
        .unwrap()
    }

    fn split(&self, k: usize) -> (Vec<&Vec<f64>>, Vec<&Vec<f64>>) {
        let pos = self
            .maps
            .iter()
            .zip(&self.labels)
            .filter(|(_, &y)| y == k)
            .map(|(m, _)| m)
            .collect();
        let neg = self
            .maps
            .iter()
            .zip(&self.labels)
            .filter(|(_, &y)| y != k)
            .map(|(m, _)| m)
            .collect();
        (pos, neg)
    }

    fn class_mean(&self, f: impl Fn(&[&Vec<f64>], &[&Vec<f64>], &[&Vec<f64>]) -> f64) -> f64 {
        let all: Vec<&Vec<f64>> = self.maps.iter().collect();
        let total: f64 = (1..=self.classes)
            .map(|k| {
                let (p, q) = self.split(k);
                f(&p, &q, &all)
            })
            .sum();
        total / self.classes as f64
    }
}

fn flat_mean(xs: &[&Vec<f64>]) -> f64 {
    let n: usize = xs.iter().map(|m| m.len()).sum();
    xs.iter().flat_map(|m| m.iter()).sum::<f64>() / n as f64
}

fn flat_var(xs: &[&Vec<f64>]) -> f64 {
    let mu = flat_mean(xs);
    let n: usize = xs.iter().map(|m| m.len()).sum();
    xs.iter()
        .flat_map(|m| m.iter())
        .map(|x| (x - mu).powi(2))
        .sum::<f64>()
        / n as f64
}

fn vec_var(v: &[f64]) -> f64 {
    let mu = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64
}

fn mean_map(xs: &[&Vec<f64>]) -> Vec<f64> {
    let d = xs[0].len();
    (0..d)
        .map(|j| xs.iter().map(|m| m[j]).sum::<f64>() / xs.len() as f64)
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn l1(r: &Raw) -> f64 {
    r.filters[0].iter().map(|x| x.abs()).sum()
}

pub fn l2(r: &Raw) -> f64 {
    r.filters[0].iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn bn_scale(r: &Raw) -> f64 {
    r.bn[0].abs()
}

/// Plain Weiszfeld iteration to a tight tolerance.
pub fn weiszfeld(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut y: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / points.len() as f64)
        .collect();
    for _ in 0..100_000 {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for p in points {
            let w = 1.0 / dist(p, &y).max(1e-300);
            for j in 0..d {
                num[j] += w * p[j];
            }
            den += w;
        }
        let next: Vec<f64> = num.iter().map(|v| v / den).collect();
        let step = dist(&next, &y);
        y = next;
        if step < 1e-15 {
            break;
        }
    }
    y
}

pub fn geo_distance(r: &Raw) -> f64 {
    dist(&r.filters[0], &weiszfeld(&r.filters))
}

pub fn discriminant_information(r: &Raw) -> f64 {
    r.class_mean(|pos, _, all| {
        let d = all[0].len();
        let mu = DVector::from_vec(mean_map(all));
        let mu_pos = DVector::from_vec(mean_map(pos));
        let centered = DMatrix::from_fn(all.len(), d, |i, j| all[i][j] - mu[j]);
        let scatter = centered.transpose() * &centered;
        // ridged once explicitly and once more on inversion
        let rho1 = 1e-3 * scatter.trace() / d as f64;
        let s1 = &scatter + DMatrix::identity(d, d) * rho1;
        let rho2 = 1e-3 * s1.trace() / d as f64;
        let s2 = &s1 + DMatrix::identity(d, d) * rho2;
        let delta = &mu_pos - &mu;
        let q = delta.transpose() * s2.try_inverse().unwrap() * &delta;
        pos.len() as f64 * q[(0, 0)]
    })
}

fn bandwidth(a: &[&Vec<f64>], b: &[&Vec<f64>]) -> f64 {
    let mut ds: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| dist(x, y)))
        .filter(|&v| v > 0.0)
        .collect();
    if ds.is_empty() {
        return 1.0;
    }
    ds.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let m = ds.len();
    let med = if m % 2 == 1 {
        ds[m / 2]
    } else {
        (ds[m / 2 - 1] + ds[m / 2]) / 2.0
    };
    med / 2f64.sqrt()
}

fn kernel_mean(a: &[&Vec<f64>], b: &[&Vec<f64>]) -> f64 {
    let s = bandwidth(a, b);
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += (-dist(x, y).powi(2) / (2.0 * s * s)).exp();
        }
    }
    total / (a.len() * b.len()) as f64
}

pub fn mmd(r: &Raw) -> f64 {
    r.class_mean(|p, q, _| kernel_mean(p, p) + kernel_mean(q, q) - 2.0 * kernel_mean(p, q))
}

pub fn abs_snr(r: &Raw) -> f64 {
    r.class_mean(|p, q, _| {
        (flat_mean(p) - flat_mean(q)).abs() / (flat_var(p).sqrt() + flat_var(q).sqrt())
    })
}

pub fn t_test(r: &Raw) -> f64 {
    r.class_mean(|p, q, _| {
        let se = (flat_var(p) / p.len() as f64 + flat_var(q) / q.len() as f64).sqrt();
        (flat_mean(p) - flat_mean(q)).abs() / se
    })
}

fn fisher_branch(p: &[&Vec<f64>], q: &[&Vec<f64>]) -> f64 {
    (flat_mean(p) - flat_mean(q)).powi(2) / (flat_var(p) + flat_var(q))
}

pub fn fisher(r: &Raw) -> f64 {
    r.class_mean(|p, q, _| fisher_branch(p, q))
}

pub fn symmetric_divergence(r: &Raw) -> f64 {
    r.class_mean(|p, q, _| {
        let (vp, vq) = (flat_var(p), flat_var(q));
        vp / vq + vq / vp + fisher_branch(p, q)
    })
}

pub fn xi_star_branch(p: &[&Vec<f64>], q: &[&Vec<f64>], all: &[&Vec<f64>]) -> f64 {
    let (vp, vq) = (flat_var(p), flat_var(q));
    let fbar = mean_map(all);
    let s = vec_var(&fbar).sqrt();
    let shift = vp - flat_mean(q);
    let norm2: f64 = fbar.iter().map(|f| (s * vq * f + shift).powi(2)).sum();
    vq / vp + vp / vq + norm2 / (vp + vq)
}

pub fn xi_star(r: &Raw) -> f64 {
    r.class_mean(xi_star_branch)
}

pub fn xi_imagenet(r: &Raw) -> f64 {
    let all: Vec<&Vec<f64>> = r.maps.iter().collect();
    let sqrt_var = {
        let v: Vec<f64> = all
            .iter()
            .flat_map(|m| m.iter().map(|x| x.sqrt()))
            .collect();
        vec_var(&v)
    };
    let side = r.side;
    r.class_mean(|p, q, _| {
        let traces: Vec<f64> = p
            .iter()
            .map(|m| (0..side).map(|i| m[i * side + i]).sum())
            .collect();
        let ratio = vec_var(&mean_map(p)) / (vec_var(&traces).sqrt() * flat_mean(q));
        ratio.powi(4) / sqrt_var
    })
}

pub fn xi_1(r: &Raw) -> f64 {
    r.class_mean(|p, q, all| {
        let (vp, vq) = (flat_var(p), flat_var(q));
        let norm2: f64 = mean_map(all).iter().map(|f| (f - vq).powi(2)).sum();
        norm2 / (vp + vq) + vp
    })
}

pub fn xi_2(r: &Raw) -> f64 {
    r.class_mean(|p, _, _| flat_var(p))
}

pub fn xi_3(r: &Raw) -> f64 {
    vec_var(&r.filters[0])
}

/// Library name paired with its oracle.
pub fn all() -> Vec<(&'static str, fn(&Raw) -> f64)> {
    vec![
        ("l1_norm", l1),
        ("l2_norm", l2),
        ("bn_scale", bn_scale),
        ("geometric_median", geo_distance),
        ("discriminant_information", discriminant_information),
        ("mmd", mmd),
        ("abs_snr", abs_snr),
        ("t_test", t_test),
        ("fisher_ratio", fisher),
        ("symmetric_divergence", symmetric_divergence),
        ("xi_star", xi_star),
        ("xi_imagenet", xi_imagenet),
        ("xi_1", xi_1),
        ("xi_2", xi_2),
        ("xi_3", xi_3),
    ]
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-12)
}
