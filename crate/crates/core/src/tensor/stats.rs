use super::{Tensor, Value};
use crate::error::{EvalFailure, EvalResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stat {
    Sum,
    Prod,
    Mean,
    Std,
    Var,
    Count,
}

/// Global statistics flatten the operand; sample statistics reduce a map
/// collection across its maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    Global,
    Sample,
}

impl Stat {
    fn name(self) -> &'static str {
        match self {
            Stat::Sum => "sum",
            Stat::Prod => "prod",
            Stat::Mean => "mean",
            Stat::Std => "std",
            Stat::Var => "var",
            Stat::Count => "count",
        }
    }
}

/// Reduces `x`. Global reductions return a rank-0 tensor. Sample reductions
/// return the flattened per-position statistic (length `H * W`), except
/// `count` which returns the number of maps. Variance divides by `N`.
pub fn statistic(stat: Stat, dim: Dim, x: &Value) -> EvalResult<Tensor> {
    let out = match dim {
        Dim::Global => Tensor::scalar(reduce(stat, x.flat().iter().copied(), x.flat().len())),
        Dim::Sample => {
            let m = x.as_maps("sample statistic")?;
            let n = m.count();
            if stat == Stat::Count {
                Tensor::scalar(n as f64)
            } else {
                let d = m.map_len();
                let data = (0..d)
                    .map(|j| reduce(stat, (0..n).map(|i| m.data()[i * d + j]), n))
                    .collect();
                Tensor::vector(data)
            }
        }
    };
    out.check_finite(stat.name())
        .map_err(|_| EvalFailure::NonFinite { op: stat.name() })
}

fn reduce(stat: Stat, xs: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    match stat {
        Stat::Count => n as f64,
        Stat::Sum => xs.sum(),
        Stat::Mean => mean(xs, n),
        Stat::Var => variance(xs, n),
        Stat::Std => variance(xs, n).sqrt(),
        Stat::Prod => product(xs),
    }
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    xs.sum::<f64>() / n as f64
}

fn variance(xs: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let mu = mean(xs.clone(), n);
    xs.map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64
}

/// Product accumulated as a log-magnitude with separate sign so that
/// intermediate overflow cannot poison a representable result.
fn product(xs: impl Iterator<Item = f64>) -> f64 {
    let mut log_mag = 0.0;
    let mut negative = false;
    for x in xs {
        if x == 0.0 {
            return 0.0;
        }
        if !x.is_finite() {
            return f64::NAN;
        }
        log_mag += x.abs().ln();
        negative ^= x < 0.0;
    }
    let mag = log_mag.exp();
    if negative {
        -mag
    } else {
        mag
    }
}
