use super::{MapCollection, Tensor, Value};
use crate::error::{EvalFailure, EvalResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Abs,
    Sq,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Abs => "abs",
            UnaryOp::Sq => "sq",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

impl BinaryOp {
    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    /// Padding value for the shorter operand.
    pub fn neutral(self) -> f64 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 0.0,
            BinaryOp::Mul | BinaryOp::Div => 1.0,
        }
    }

    #[inline]
    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
        }
    }
}

pub fn unary(op: UnaryOp, a: &Value) -> EvalResult<Value> {
    let f: fn(f64) -> f64 = match op {
        UnaryOp::Abs => f64::abs,
        UnaryOp::Sq => |x| x * x,
        UnaryOp::Sqrt => f64::sqrt,
    };
    if op == UnaryOp::Sqrt && a.flat().iter().any(|&x| x < 0.0) {
        return Err(EvalFailure::Domain { op: "sqrt" });
    }
    match a {
        Value::Tensor(t) => Ok(Value::Tensor(t.map(f).check_finite(op.name())?)),
        Value::Maps(m) => Ok(Value::Maps(m.map_values(f).check_finite(op.name())?)),
    }
}

/// Entrywise arithmetic with the validity-repair broadcasting rules:
///
/// * rank-0 operands are replicated across the other operand;
/// * a tensor with exactly one map's worth of entries is applied to every map
///   of a collection;
/// * otherwise the shorter flattened operand is padded at its tail with the
///   operator's neutral element and the result takes the longer operand's shape.
///
/// Equal entry counts with different geometry are rejected as ambiguous.
pub fn binary(op: BinaryOp, a: &Value, b: &Value) -> EvalResult<Value> {
    let name = op.name();
    let out = match (a, b) {
        (Value::Tensor(x), Value::Tensor(y)) => Value::Tensor(binary_tensors(op, x, y)?),
        (Value::Maps(m), Value::Tensor(t)) => Value::Maps(maps_tensor(op, m, t, false)?),
        (Value::Tensor(t), Value::Maps(m)) => Value::Maps(maps_tensor(op, m, t, true)?),
        (Value::Maps(x), Value::Maps(y)) => {
            if x.map_len() != y.map_len() {
                return Err(shape_err(name, a, b));
            }
            let data = padded(op, x.data(), y.data());
            let longer = if x.data().len() >= y.data().len() {
                x
            } else {
                y
            };
            Value::Maps(longer.with_data(data))
        }
    };
    match out {
        Value::Tensor(t) => Ok(Value::Tensor(t.check_finite(name)?)),
        Value::Maps(m) => Ok(Value::Maps(m.check_finite(name)?)),
    }
}

fn shape_err(op: &'static str, a: &Value, b: &Value) -> EvalFailure {
    EvalFailure::Shape {
        op,
        lhs: a.shape_hint(),
        rhs: b.shape_hint(),
    }
}

fn binary_tensors(op: BinaryOp, x: &Tensor, y: &Tensor) -> EvalResult<Tensor> {
    match (x.rank0(), y.rank0()) {
        (Some(s), Some(t)) => return Ok(Tensor::scalar(op.apply(s, t))),
        (Some(s), None) => return Ok(y.map(|v| op.apply(s, v))),
        (None, Some(t)) => return Ok(x.map(|v| op.apply(v, t))),
        (None, None) => {}
    }
    if x.shape() == y.shape() {
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| op.apply(p, q))
            .collect();
        return Tensor::new(x.shape().to_vec(), data);
    }
    if x.len() == y.len() {
        return Err(EvalFailure::Shape {
            op: op.name(),
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    let shape = if x.len() > y.len() {
        x.shape()
    } else {
        y.shape()
    };
    Tensor::new(shape.to_vec(), padded(op, x.data(), y.data()))
}

/// `tensor_first` records operand order for the non-commutative operators.
fn maps_tensor(
    op: BinaryOp,
    m: &MapCollection,
    t: &Tensor,
    tensor_first: bool,
) -> EvalResult<MapCollection> {
    let apply = |p: f64, q: f64| {
        if tensor_first {
            op.apply(q, p)
        } else {
            op.apply(p, q)
        }
    };
    if let Some(s) = t.rank0() {
        return Ok(m.map_values(|v| apply(v, s)));
    }
    if t.len() == m.map_len() {
        let mut data = Vec::with_capacity(m.data().len());
        for map in m.iter() {
            data.extend(map.iter().zip(t.data()).map(|(&p, &q)| apply(p, q)));
        }
        return Ok(m.with_data(data));
    }
    if t.len() > m.data().len() {
        // The tensor is longer than the whole collection: the result would be
        // tensor shaped, which a collection-typed node cannot hold.
        return Err(EvalFailure::Shape {
            op: op.name(),
            lhs: t.shape().to_vec(),
            rhs: vec![m.count(), m.map_len()],
        });
    }
    let data = if tensor_first {
        padded(op, t.data(), m.data())
    } else {
        padded(op, m.data(), t.data())
    };
    Ok(m.with_data(data))
}

fn padded(op: BinaryOp, x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len().max(y.len());
    let pad = op.neutral();
    (0..n)
        .map(|i| {
            let p = x.get(i).copied().unwrap_or(pad);
            let q = y.get(i).copied().unwrap_or(pad);
            op.apply(p, q)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Value {
        Value::Tensor(Tensor::new(shape.to_vec(), data.to_vec()).unwrap())
    }

    fn flat(v: &Value) -> Vec<f64> {
        v.flat().to_vec()
    }

    #[test]
    fn abs_is_entrywise() {
        let r = unary(UnaryOp::Abs, &t(&[2, 2], &[1., -2., 3., -4.])).unwrap();
        assert_eq!(flat(&r), vec![1., 2., 3., 4.]);
        assert_eq!(r.shape_hint(), vec![2, 2]);
    }

    #[test]
    fn square_of_zero() {
        assert_eq!(
            flat(&unary(UnaryOp::Sq, &t(&[1], &[0.])).unwrap()),
            vec![0.]
        );
    }

    #[test]
    fn sqrt_of_negative_fails() {
        assert_eq!(
            unary(UnaryOp::Sqrt, &t(&[1], &[-1.])),
            Err(EvalFailure::Domain { op: "sqrt" })
        );
    }

    #[test]
    fn scalar_is_replicated() {
        let r = binary(BinaryOp::Add, &t(&[], &[2.]), &t(&[3], &[1., 2., 3.])).unwrap();
        assert_eq!(flat(&r), vec![3., 4., 5.]);
    }

    #[test]
    fn addition_pads_with_zero() {
        let r = binary(BinaryOp::Add, &t(&[2], &[1., 2.]), &t(&[3], &[1., 2., 3.])).unwrap();
        assert_eq!(flat(&r), vec![2., 4., 3.]);
    }

    #[test]
    fn multiplication_pads_with_one() {
        let r = binary(BinaryOp::Mul, &t(&[2], &[2., 3.]), &t(&[1], &[4.])).unwrap();
        assert_eq!(flat(&r), vec![8., 3.]);
        let r = binary(BinaryOp::Mul, &t(&[2], &[2., 3.]), &t(&[], &[4.])).unwrap();
        assert_eq!(flat(&r), vec![8., 12.]);
        let r = binary(BinaryOp::Mul, &t(&[2], &[2., 3.]), &t(&[3], &[4., 5., 6.])).unwrap();
        assert_eq!(flat(&r), vec![8., 15., 6.]);
        let r = binary(BinaryOp::Div, &t(&[2], &[2., 3.]), &t(&[3], &[4., 5., 8.])).unwrap();
        assert_eq!(flat(&r), vec![0.5, 0.6, 0.125]);
    }

    #[test]
    fn subtraction_pads_left_operand() {
        let r = binary(
            BinaryOp::Sub,
            &t(&[1, 2], &[5., 5.]),
            &t(&[3], &[1., 2., 3.]),
        )
        .unwrap();
        assert_eq!(flat(&r), vec![4., 3., -3.]);
        assert_eq!(r.shape_hint(), vec![3]);
    }

    #[test]
    fn division_by_zero_fails() {
        assert!(matches!(
            binary(BinaryOp::Div, &t(&[1], &[1.]), &t(&[1], &[0.])),
            Err(EvalFailure::NonFinite { .. })
        ));
    }

    #[test]
    fn ambiguous_geometry_is_rejected() {
        assert!(binary(BinaryOp::Add, &t(&[2, 3], &[0.; 6]), &t(&[3, 2], &[0.; 6])).is_err());
    }

    #[test]
    fn map_sized_tensor_broadcasts_over_collection() {
        let m = Value::Maps(MapCollection::from_flat(vec![2], vec![1., 3., 3., 5.]).unwrap());
        let mean = t(&[2], &[2., 4.]);
        let r = binary(BinaryOp::Sub, &m, &mean).unwrap();
        assert_eq!(flat(&r), vec![-1., -1., 1., 1.]);
        let r = binary(BinaryOp::Sub, &mean, &m).unwrap();
        assert_eq!(flat(&r), vec![1., 1., -1., -1.]);
    }

    #[test]
    fn collections_of_different_size_pad() {
        let a = Value::Maps(MapCollection::from_flat(vec![1], vec![1., 2., 3.]).unwrap());
        let b = Value::Maps(MapCollection::from_flat(vec![1], vec![10.]).unwrap());
        let r = binary(BinaryOp::Mul, &a, &b).unwrap();
        assert_eq!(flat(&r), vec![10., 2., 3.]);
        assert!(matches!(r, Value::Maps(ref m) if m.count() == 3));
    }
}
