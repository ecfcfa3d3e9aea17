//! Static kinds of tree nodes. Inference needs no context; it rules out
//! trees that could never produce a scalar before any numbers are touched.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::op::{Op, Operand};
use super::tree::{ExprTree, Node};
use crate::tensor::{Dim, Stat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Scalar,
    /// BN parameter vector (length 4).
    Param,
    /// Vectors, including flattened per-position sample statistics.
    Vector,
    Matrix,
    /// Channel kernel block `c_in x h x w`.
    FilterBlock,
    /// Whole-layer kernel `c_out x c_in x h x w`.
    LayerFilter,
    Maps,
    Invalid,
}

impl Kind {
    pub const VALID: [Kind; 7] = [
        Kind::Scalar,
        Kind::Param,
        Kind::Vector,
        Kind::Matrix,
        Kind::FilterBlock,
        Kind::LayerFilter,
        Kind::Maps,
    ];

    fn is_tensor(self) -> bool {
        !matches!(self, Kind::Maps | Kind::Invalid)
    }

    fn is_vector_like(self) -> bool {
        matches!(self, Kind::Vector | Kind::Param)
    }
}

pub fn operand_kind(o: Operand) -> Kind {
    match o {
        Operand::W => Kind::LayerFilter,
        Operand::WI => Kind::FilterBlock,
        Operand::B => Kind::Param,
        Operand::F | Operand::FPlus | Operand::FMinus => Kind::Maps,
    }
}

/// Result kind of `op` applied to children of the given kinds.
pub fn apply_kind(op: Op, args: &[Kind]) -> Kind {
    use Kind::*;
    if args.len() != op.arity() || args.contains(&Invalid) {
        return Invalid;
    }
    match op {
        Op::Abs | Op::Sq | Op::Sqrt => args[0],
        Op::Add | Op::Sub | Op::Mul | Op::Div => {
            let (a, b) = (args[0], args[1]);
            if a == Maps || b == Maps {
                Maps
            } else if a == Scalar {
                b
            } else if b == Scalar || a == b {
                a
            } else {
                // the longer operand decides the shape; order reflects typical size
                a.max(b)
            }
        }
        Op::Ridge | Op::Inv => match args[0] {
            Scalar => Scalar,
            Matrix => Matrix,
            _ => Invalid,
        },
        Op::Tr => match args[0] {
            Matrix => Scalar,
            Maps => Vector,
            _ => Invalid,
        },
        Op::Matmul => {
            let side = |k: Kind| match k {
                Vector | Param => Some(true),
                Matrix | Maps => Some(false),
                _ => None,
            };
            if args[0] == Maps && args[1] == Maps {
                return Invalid;
            }
            match (side(args[0]), side(args[1])) {
                (Some(true), Some(true)) => Scalar,
                (Some(true), Some(false)) | (Some(false), Some(true)) => Vector,
                (Some(false), Some(false)) => Matrix,
                _ => Invalid,
            }
        }
        Op::Dot => Scalar,
        Op::Outprod => {
            if args[0].is_vector_like() && args[1].is_vector_like() {
                Matrix
            } else {
                Invalid
            }
        }
        Op::Tran => match args[0] {
            Vector => Vector,
            Param => Param,
            Matrix | Maps => Matrix,
            _ => Invalid,
        },
        Op::Stat(_, Dim::Global) => Scalar,
        Op::Stat(s, Dim::Sample) => match (args[0], s) {
            (Maps, Stat::Count) => Scalar,
            (Maps, _) => Vector,
            _ => Invalid,
        },
        Op::Rbf => {
            if args[0] == Maps && args[1] == Maps {
                Matrix
            } else {
                Invalid
            }
        }
        Op::Geo => match args[0] {
            LayerFilter => FilterBlock,
            _ => Invalid,
        },
        Op::Slice => {
            if args[0].is_tensor() {
                Scalar
            } else {
                Invalid
            }
        }
    }
}

pub fn node_kind(n: &Node) -> Kind {
    match n {
        Node::Leaf(o) => operand_kind(*o),
        Node::Const(_) => Kind::Scalar,
        Node::Apply(op, children) => {
            let kinds: Vec<Kind> = children.iter().map(node_kind).collect();
            apply_kind(*op, &kinds)
        }
    }
}

pub fn infer_kind(tree: &ExprTree) -> Kind {
    node_kind(tree.root())
}

/// One way of producing a kind: an operator and the kinds of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub op: Op,
    pub args: Vec<Kind>,
}

/// Grammar derived from [`apply_kind`] by enumerating every child-kind
/// combination, plus the minimum height at which each kind is reachable.
pub struct Grammar {
    pub productions: HashMap<Kind, Vec<Production>>,
    pub min_height: HashMap<Kind, usize>,
}

impl Grammar {
    pub fn get() -> &'static Grammar {
        static G: OnceLock<Grammar> = OnceLock::new();
        G.get_or_init(Grammar::build)
    }

    fn build() -> Grammar {
        let mut productions: HashMap<Kind, Vec<Production>> = HashMap::new();
        for op in Op::all() {
            let combos: Vec<Vec<Kind>> = match op.arity() {
                1 => Kind::VALID.iter().map(|&k| vec![k]).collect(),
                _ => Kind::VALID
                    .iter()
                    .flat_map(|&a| Kind::VALID.iter().map(move |&b| vec![a, b]))
                    .collect(),
            };
            for args in combos {
                let k = apply_kind(op, &args);
                if k != Kind::Invalid {
                    productions
                        .entry(k)
                        .or_default()
                        .push(Production { op, args });
                }
            }
        }
        let mut min_height: HashMap<Kind, usize> = HashMap::new();
        for o in Operand::ALL {
            min_height.insert(operand_kind(o), 1);
        }
        loop {
            let mut changed = false;
            for (&k, prods) in &productions {
                for p in prods {
                    let h = p
                        .args
                        .iter()
                        .map(|a| min_height.get(a).copied())
                        .collect::<Option<Vec<_>>>()
                        .map(|hs| 1 + hs.into_iter().max().unwrap_or(0));
                    if let Some(h) = h {
                        if min_height.get(&k).is_none_or(|&cur| h < cur) {
                            min_height.insert(k, h);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Grammar {
            productions,
            min_height,
        }
    }

    pub fn min_height(&self, k: Kind) -> usize {
        self.min_height.get(&k).copied().unwrap_or(usize::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::sexpr::parse;

    fn kind(s: &str) -> Kind {
        infer_kind(&parse(s).unwrap())
    }

    #[test]
    fn examples() {
        assert_eq!(kind("(sum_g (abs W_I))"), Kind::Scalar);
        assert_eq!(kind("(matmul F F)"), Kind::Invalid);
        assert_eq!(kind("(tr B)"), Kind::Invalid);
        assert_eq!(kind("(mean_s F)"), Kind::Vector);
        assert_eq!(kind("(count_s F+)"), Kind::Scalar);
        assert_eq!(kind("(geo W_I)"), Kind::Invalid);
        assert_eq!(kind("(sub W_I (geo W))"), Kind::FilterBlock);
        assert_eq!(kind("(rbf F+ F-)"), Kind::Matrix);
        assert_eq!(kind("(matmul (tran F) F)"), Kind::Matrix);
        assert_eq!(kind("(mean_s W)"), Kind::Invalid);
    }

    #[test]
    fn grammar_reaches_every_kind() {
        let g = Grammar::get();
        assert_eq!(g.min_height(Kind::Scalar), 2);
        assert_eq!(g.min_height(Kind::Maps), 1);
        assert_eq!(g.min_height(Kind::Matrix), 2);
        for k in Kind::VALID {
            assert!(g.min_height(k) < 4, "{k:?}");
            assert!(
                g.productions.get(&k).is_some_and(|p| !p.is_empty()),
                "{k:?}"
            );
        }
    }
}
