use std::borrow::Cow;

use super::context::ChannelContext;
use super::kind::{infer_kind, Kind};
use super::op::{Op, Operand};
use super::tree::{ExprTree, Node};
use crate::error::{EvalFailure, EvalResult};
use crate::tensor::{self, BinaryOp, KernelConfig, MapCollection, Tensor, UnaryOp, Value};

/// Default bound on tree height (levels, a lone leaf is 1).
pub const MAX_DEPTH: usize = 10;

struct Bindings<'a> {
    w: Value,
    w_i: Value,
    b: Value,
    f: Value,
    partition: Option<(Value, Value)>,
    ctx: &'a ChannelContext,
}

impl<'a> Bindings<'a> {
    fn new(ctx: &'a ChannelContext) -> Self {
        Self {
            w: Value::Tensor(ctx.w().clone()),
            w_i: Value::Tensor(ctx.w_i().clone()),
            b: Value::Tensor(ctx.b().clone()),
            f: Value::Maps(ctx.maps().clone()),
            partition: None,
            ctx,
        }
    }

    fn get(&self, o: Operand) -> EvalResult<&Value> {
        Ok(match o {
            Operand::W => &self.w,
            Operand::WI => &self.w_i,
            Operand::B => &self.b,
            Operand::F => &self.f,
            Operand::FPlus | Operand::FMinus => {
                let (pos, neg) = self.partition.as_ref().ok_or(EvalFailure::Operand {
                    op: "bind",
                    detail: "class partition used outside a class branch",
                })?;
                if o == Operand::FPlus {
                    pos
                } else {
                    neg
                }
            }
        })
    }
}

fn eval_node<'b>(
    n: &Node,
    env: &'b Bindings<'_>,
    cfg: &KernelConfig,
) -> EvalResult<Cow<'b, Value>> {
    let (op, children) = match n {
        Node::Leaf(o) => return env.get(*o).map(Cow::Borrowed),
        Node::Const(c) => return Ok(Cow::Owned(Value::Tensor(Tensor::scalar(*c)))),
        Node::Apply(op, children) => (*op, children),
    };
    let args = children
        .iter()
        .map(|c| eval_node(c, env, cfg))
        .collect::<EvalResult<Vec<_>>>()?;
    let a = &*args[0];
    let t = |v: Tensor| Ok(Cow::Owned(Value::Tensor(v)));
    match op {
        Op::Abs => Ok(Cow::Owned(tensor::unary(UnaryOp::Abs, a)?)),
        Op::Sq => Ok(Cow::Owned(tensor::unary(UnaryOp::Sq, a)?)),
        Op::Sqrt => Ok(Cow::Owned(tensor::unary(UnaryOp::Sqrt, a)?)),
        Op::Add | Op::Sub | Op::Mul | Op::Div => {
            let bop = match op {
                Op::Add => BinaryOp::Add,
                Op::Sub => BinaryOp::Sub,
                Op::Mul => BinaryOp::Mul,
                _ => BinaryOp::Div,
            };
            Ok(Cow::Owned(tensor::binary(bop, a, &args[1])?))
        }
        Op::Ridge => t(tensor::ridge(a.as_tensor("ridge")?, cfg)?),
        Op::Inv => t(tensor::inverse(a.as_tensor("inv")?, cfg)?),
        Op::Tr => t(tensor::trace(a)?),
        Op::Matmul => t(tensor::matmul(a, &args[1])?),
        Op::Dot => t(tensor::dot(a, &args[1])?),
        Op::Outprod => t(tensor::outer(
            a.as_tensor("outprod")?,
            args[1].as_tensor("outprod")?,
        )?),
        Op::Tran => t(tensor::transpose(a)?),
        Op::Stat(s, d) => t(tensor::statistic(s, d, a)?),
        Op::Rbf => t(tensor::rbf(
            a.as_maps("rbf")?,
            args[1].as_maps("rbf")?,
            cfg,
        )?),
        Op::Geo => t(tensor::geometric_median(a.as_tensor("geo")?, cfg)?),
        Op::Slice => t(tensor::slice(a.as_tensor("slice")?, 0)?),
    }
}

fn finish(v: &Value) -> EvalResult<f64> {
    match v {
        Value::Tensor(t) => match t.as_scalar() {
            Some(x) if x.is_finite() => Ok(x),
            Some(_) => Err(EvalFailure::NonFinite { op: "score" }),
            None => Err(EvalFailure::NotScalar(t.shape().to_vec())),
        },
        Value::Maps(_) => Err(EvalFailure::NotScalar(v.shape_hint())),
    }
}

impl ExprTree {
    /// Scores one channel with the default kernel configuration.
    pub fn evaluate(&self, ctx: &ChannelContext) -> EvalResult<f64> {
        self.evaluate_with(ctx, &KernelConfig::default())
    }

    /// Labelless trees are evaluated once. Label-aware trees are evaluated once
    /// per class `k` with `F+` bound to the maps of class `k` and `F-` to the
    /// rest, and the per-class scores are averaged. The average is taken over
    /// the sorted scores so it does not depend on how classes are numbered.
    pub fn evaluate_with(&self, ctx: &ChannelContext, cfg: &KernelConfig) -> EvalResult<f64> {
        let mut env = Bindings::new(ctx);
        if !self.is_label_aware() {
            return finish(&*eval_node(self.root(), &env, cfg)?);
        }
        let mut scores = Vec::with_capacity(ctx.classes());
        for k in 1..=env.ctx.classes() {
            let (pos, neg) = env.ctx.partition(k);
            if pos.is_empty() || neg.is_empty() {
                return Err(EvalFailure::EmptyPartition(k));
            }
            env.partition = Some((Value::Maps(pos), Value::Maps(neg)));
            scores.push(finish(&*eval_node(self.root(), &env, cfg)?)?);
        }
        scores.sort_by(f64::total_cmp);
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        if mean.is_finite() {
            Ok(mean)
        } else {
            Err(EvalFailure::NonFinite { op: "score" })
        }
    }

    /// Score for the maps of one class against the rest, without averaging.
    pub fn evaluate_branch(&self, ctx: &ChannelContext, k: usize) -> EvalResult<f64> {
        let mut env = Bindings::new(ctx);
        let (pos, neg): (MapCollection, MapCollection) = ctx.partition(k);
        env.partition = Some((Value::Maps(pos), Value::Maps(neg)));
        finish(&*eval_node(self.root(), &env, &KernelConfig::default())?)
    }
}

/// Static and dynamic validity: bounded height, scalar kind, and a finite
/// score on `probe`.
pub fn validity_test(tree: &ExprTree, probe: &ChannelContext, max_depth: usize) -> bool {
    tree.depth() <= max_depth && infer_kind(tree) == Kind::Scalar && tree.evaluate(probe).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::context::probe;
    use crate::ir::sexpr::parse;

    fn ctx_with(
        w_i: Vec<f64>,
        maps: Vec<f64>,
        map_shape: Vec<usize>,
        labels: Vec<usize>,
        c: usize,
    ) -> ChannelContext {
        let n = w_i.len();
        let w = Tensor::new(vec![1, n, 1, 1], w_i.clone()).unwrap();
        let w_i = Tensor::new(vec![n, 1, 1], w_i).unwrap();
        let b = Tensor::vector(vec![1., 0., 0., 1.]);
        let maps = MapCollection::from_flat(map_shape, maps).unwrap();
        ChannelContext::new(w, w_i, b, maps, labels, c).unwrap()
    }

    #[test]
    fn l1_tree_value() {
        let ctx = ctx_with(
            vec![1., -2., 3., -4.],
            vec![0., 1.],
            vec![1, 1],
            vec![1, 2],
            2,
        );
        let t = parse("(sum_g (abs W_I))").unwrap();
        assert_eq!(t.evaluate(&ctx).unwrap(), 10.0);
    }

    #[test]
    fn fisher_two_class_hand_value() {
        // class 1 maps {1, 3}, class 2 maps {0, 0}; each branch gives (2-0)^2 / (1+0)
        let ctx = ctx_with(
            vec![1.],
            vec![1., 3., 0., 0.],
            vec![1, 1],
            vec![1, 1, 2, 2],
            2,
        );
        let t =
            parse("(div (sq (sub (mean_g F+) (mean_g F-))) (add (var_g F+) (var_g F-)))").unwrap();
        assert_eq!(t.evaluate_branch(&ctx, 1).unwrap(), 4.0);
        assert_eq!(t.evaluate_branch(&ctx, 2).unwrap(), 4.0);
        assert_eq!(t.evaluate(&ctx).unwrap(), 4.0);
    }

    #[test]
    fn non_scalar_result_fails() {
        let t = parse("(mean_s F)").unwrap();
        assert!(matches!(
            t.evaluate(probe()),
            Err(EvalFailure::NotScalar(_))
        ));
    }

    #[test]
    fn validity_examples() {
        let p = probe();
        assert!(validity_test(
            &parse("(sum_g (abs W_I))").unwrap(),
            p,
            MAX_DEPTH
        ));
        // F - F is all zeros, minus a positive count makes every entry negative
        let neg = parse("(sum_g (sqrt (sub (sub F F) (count_s F))))").unwrap();
        assert!(!validity_test(&neg, p, MAX_DEPTH));
        let deep = parse("(sum_g (abs (abs (abs (abs W_I)))))").unwrap();
        assert!(validity_test(&deep, p, 6));
        assert!(!validity_test(&deep, p, 5));
        assert!(!validity_test(&parse("(tr B)").unwrap(), p, MAX_DEPTH));
    }
}
