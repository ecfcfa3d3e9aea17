use super::{KernelConfig, Tensor, Value};
use crate::error::{EvalFailure, EvalResult};

/// Matrix view of an operand: `(rows, cols, data)` plus which axes are implicit.
struct MatView<'a> {
    rows: usize,
    cols: usize,
    data: &'a [f64],
    vector: bool,
}

/// Rank-1 tensors are rows on the left and columns on the right; a map
/// collection is the `N x D` data matrix with one flattened map per row.
fn view<'a>(v: &'a Value, left: bool) -> EvalResult<MatView<'a>> {
    match v {
        Value::Maps(m) => Ok(MatView {
            rows: m.count(),
            cols: m.map_len(),
            data: m.data(),
            vector: false,
        }),
        Value::Tensor(t) => match t.shape() {
            [n] => Ok(MatView {
                rows: if left { 1 } else { *n },
                cols: if left { *n } else { 1 },
                data: t.data(),
                vector: true,
            }),
            [r, c] => Ok(MatView {
                rows: *r,
                cols: *c,
                data: t.data(),
                vector: false,
            }),
            _ => Err(EvalFailure::Operand {
                op: "matmul",
                detail: "operand must be a vector, matrix or map collection",
            }),
        },
    }
}

pub fn matmul(a: &Value, b: &Value) -> EvalResult<Tensor> {
    if matches!((a, b), (Value::Maps(_), Value::Maps(_))) {
        return Err(EvalFailure::Operand {
            op: "matmul",
            detail: "both operands are map collections",
        });
    }
    let l = view(a, true)?;
    let r = view(b, false)?;
    if l.cols != r.rows {
        return Err(EvalFailure::Shape {
            op: "matmul",
            lhs: a.shape_hint(),
            rhs: b.shape_hint(),
        });
    }
    let (n, k, m) = (l.rows, l.cols, r.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &l.data[i * k..(i + 1) * k];
        let dst = &mut out[i * m..(i + 1) * m];
        for (p, &x) in row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let src = &r.data[p * m..(p + 1) * m];
            for (d, &y) in dst.iter_mut().zip(src) {
                *d += x * y;
            }
        }
    }
    let shape = match (l.vector, r.vector) {
        (true, true) => vec![],
        (true, false) => vec![m],
        (false, true) => vec![n],
        (false, false) => vec![n, m],
    };
    Tensor::new(shape, out)?.check_finite("matmul")
}

fn square_dim(t: &Tensor, op: &'static str) -> EvalResult<usize> {
    match t.shape() {
        [] => Ok(1),
        [r, c] if r == c => Ok(*r),
        _ => Err(EvalFailure::Operand {
            op,
            detail: "square matrix required",
        }),
    }
}

/// `S + rho I` with `rho = ridge_rel * mean(diag S)`, or `ridge_abs` when that
/// mean is not positive. Rank-0 input is treated as a 1x1 matrix.
pub fn ridge(s: &Tensor, cfg: &KernelConfig) -> EvalResult<Tensor> {
    let n = square_dim(s, "ridge")?;
    let mean_diag = (0..n).map(|i| s.data()[i * n + i]).sum::<f64>() / n as f64;
    let rho = if mean_diag > 0.0 {
        cfg.ridge_rel * mean_diag
    } else {
        cfg.ridge_abs
    };
    let mut data = s.data().to_vec();
    for i in 0..n {
        data[i * n + i] += rho;
    }
    Tensor::new(s.shape().to_vec(), data)?.check_finite("ridge")
}

/// `(S + rho I)^-1`: every inversion is ridged first.
pub fn inverse(s: &Tensor, cfg: &KernelConfig) -> EvalResult<Tensor> {
    let ridged = ridge(s, cfg)?;
    let n = square_dim(&ridged, "inv")?;
    let inv = gauss_jordan(ridged.data(), n).ok_or(EvalFailure::Singular)?;
    Tensor::new(s.shape().to_vec(), inv)?
        .check_finite("inv")
        .map_err(|_| EvalFailure::Singular)
}

/// Gauss-Jordan elimination with partial pivoting on a row-major `n x n` matrix.
fn gauss_jordan(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let w = 2 * n;
    let mut m = vec![0.0; n * w];
    for i in 0..n {
        m[i * w..i * w + n].copy_from_slice(&a[i * n..(i + 1) * n]);
        m[i * w + n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * w + col].abs().total_cmp(&m[y * w + col].abs()))
            .unwrap();
        let pv = m[pivot * w + col];
        if pv == 0.0 || !pv.is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..w {
                m.swap(col * w + j, pivot * w + j);
            }
        }
        let inv_p = 1.0 / pv;
        for j in 0..w {
            m[col * w + j] *= inv_p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * w + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                m[r * w + j] -= f * m[col * w + j];
            }
        }
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.extend_from_slice(&m[i * w + n..(i + 1) * w]);
    }
    Some(out)
}

/// Trace of a square matrix, or the per-map traces of a collection of square maps.
pub fn trace(v: &Value) -> EvalResult<Tensor> {
    let tr = |d: &[f64], n: usize| (0..n).map(|i| d[i * n + i]).sum::<f64>();
    match v {
        Value::Tensor(t) => match t.shape() {
            [r, c] if r == c => Ok(Tensor::scalar(tr(t.data(), *r))),
            _ => Err(EvalFailure::Operand {
                op: "tr",
                detail: "square matrix required",
            }),
        },
        Value::Maps(m) => match m.map_shape() {
            [r, c] if r == c => Ok(Tensor::vector(m.iter().map(|x| tr(x, *r)).collect())),
            _ => Err(EvalFailure::Operand {
                op: "tr",
                detail: "maps are not square",
            }),
        },
    }
}

/// Inner product of two operands with equal entry counts.
pub fn dot(a: &Value, b: &Value) -> EvalResult<Tensor> {
    let (x, y) = (a.flat(), b.flat());
    if x.len() != y.len() {
        return Err(EvalFailure::Shape {
            op: "dot",
            lhs: a.shape_hint(),
            rhs: b.shape_hint(),
        });
    }
    let s: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
    Tensor::scalar(s).check_finite("dot")
}

/// Outer product of the flattened operands.
pub fn outer(a: &Tensor, b: &Tensor) -> EvalResult<Tensor> {
    let mut data = Vec::with_capacity(a.len() * b.len());
    for &x in a.data() {
        data.extend(b.data().iter().map(|&y| x * y));
    }
    Tensor::matrix(a.len(), b.len(), data)?.check_finite("outprod")
}

/// Vectors are returned unchanged, matrices transposed, and a collection
/// becomes the `D x N` matrix whose columns are its flattened maps.
pub fn transpose(v: &Value) -> EvalResult<Tensor> {
    let t = |rows: usize, cols: usize, d: &[f64]| {
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = d[i * cols + j];
            }
        }
        Tensor::matrix(cols, rows, out)
    };
    match v {
        Value::Maps(m) => t(m.count(), m.map_len(), m.data()),
        Value::Tensor(x) => match x.shape() {
            [] | [_] => Ok(x.clone()),
            [r, c] => t(*r, *c, x.data()),
            _ => Err(EvalFailure::Operand {
                op: "tran",
                detail: "rank above 2",
            }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::MapCollection;

    fn cfg() -> KernelConfig {
        KernelConfig::default()
    }

    fn v(t: Tensor) -> Value {
        Value::Tensor(t)
    }

    #[test]
    fn ridge_of_zero_uses_absolute_fallback() {
        let r = ridge(&Tensor::zeros(vec![2, 2]), &cfg()).unwrap();
        assert_eq!(r.data(), &[1e-8, 0.0, 0.0, 1e-8]);
    }

    #[test]
    fn ridge_of_identity() {
        let r = ridge(&Tensor::eye(3), &cfg()).unwrap();
        for i in 0..3 {
            assert!((r.data()[i * 3 + i] - 1.001).abs() < 1e-15);
        }
    }

    #[test]
    fn ridge_of_one_by_one() {
        let r = ridge(&Tensor::matrix(1, 1, vec![5.0]).unwrap(), &cfg()).unwrap();
        assert!((r.data()[0] - 5.005).abs() < 1e-12);
    }

    #[test]
    fn ridge_rejects_non_square() {
        assert!(ridge(&Tensor::zeros(vec![2, 3]), &cfg()).is_err());
        assert!(ridge(&Tensor::zeros(vec![3]), &cfg()).is_err());
    }

    #[test]
    fn trace_of_identity() {
        assert_eq!(trace(&v(Tensor::eye(3))).unwrap().as_scalar(), Some(3.0));
    }

    #[test]
    fn trace_of_vector_is_rejected() {
        assert!(trace(&v(Tensor::vector(vec![1., 2., 3., 4.]))).is_err());
    }

    #[test]
    fn trace_per_map() {
        let m = MapCollection::from_flat(vec![2, 2], vec![1., 9., 9., 2., 3., 0., 0., 4.]).unwrap();
        assert_eq!(trace(&Value::Maps(m)).unwrap().data(), &[3., 7.]);
    }

    #[test]
    fn dot_of_vectors() {
        let r = dot(
            &v(Tensor::vector(vec![1., 2.])),
            &v(Tensor::vector(vec![3., 4.])),
        )
        .unwrap();
        assert_eq!(r.as_scalar(), Some(11.0));
    }

    #[test]
    fn inverse_is_ridged() {
        let two = Tensor::matrix(2, 2, vec![2., 0., 0., 2.]).unwrap();
        let inv = inverse(&two, &cfg()).unwrap();
        let expect = 1.0 / 2.002;
        assert!((inv.data()[0] - expect).abs() < 1e-15);
        assert!((inv.data()[3] - expect).abs() < 1e-15);
        assert_eq!(inv.data()[1], 0.0);
        assert!((inv.data()[0] - 0.4995).abs() < 1e-4);
    }

    #[test]
    fn matmul_vector_conventions() {
        let m = Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let x = Tensor::vector(vec![1., 1.]);
        assert_eq!(
            matmul(&v(x.clone()), &v(m.clone())).unwrap().data(),
            &[4., 6.]
        );
        assert_eq!(matmul(&v(m), &v(x.clone())).unwrap().data(), &[3., 7.]);
        let s = matmul(&v(x.clone()), &v(x)).unwrap();
        assert_eq!(s.shape(), &[] as &[usize]);
        assert_eq!(s.as_scalar(), Some(2.0));
    }

    #[test]
    fn matmul_of_two_collections_is_rejected() {
        let m = MapCollection::from_flat(vec![2], vec![1., 2., 3., 4.]).unwrap();
        assert!(matmul(&Value::Maps(m.clone()), &Value::Maps(m)).is_err());
    }

    #[test]
    fn scatter_from_collection() {
        // rows (1,2) and (3,4): X^T X = [[10,14],[14,20]]
        let m = MapCollection::from_flat(vec![2], vec![1., 2., 3., 4.]).unwrap();
        let xt = transpose(&Value::Maps(m.clone())).unwrap();
        let s = matmul(&v(xt), &Value::Maps(m)).unwrap();
        assert_eq!(s.data(), &[10., 14., 14., 20.]);
    }

    #[test]
    fn outer_product_shape() {
        let r = outer(
            &Tensor::vector(vec![1., 2.]),
            &Tensor::vector(vec![3., 4., 5.]),
        )
        .unwrap();
        assert_eq!(r.shape(), &[2, 3]);
        assert_eq!(r.data(), &[3., 4., 5., 6., 8., 10.]);
    }
}
