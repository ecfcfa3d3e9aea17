use crate::tensor::{Dim, Stat};

/// Leaf symbols bound from a [`ChannelContext`](super::ChannelContext).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    /// Whole-layer kernel, `c_out x c_in x h x w`.
    W,
    /// The channel's incoming kernel block, `c_in x h x w`.
    WI,
    /// The channel's batch-norm parameters `(gamma, beta, mu, sigma^2)`.
    B,
    /// Every feature map of the channel.
    F,
    /// Maps of the class currently being scored.
    FPlus,
    /// Maps of every other class.
    FMinus,
}

impl Operand {
    pub const ALL: [Operand; 6] = [
        Operand::W,
        Operand::WI,
        Operand::B,
        Operand::F,
        Operand::FPlus,
        Operand::FMinus,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Operand::W => "W",
            Operand::WI => "W_I",
            Operand::B => "B",
            Operand::F => "F",
            Operand::FPlus => "F+",
            Operand::FMinus => "F-",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.symbol() == s)
    }

    pub fn is_partition(self) -> bool {
        matches!(self, Operand::FPlus | Operand::FMinus)
    }
}

/// Inner-node operators: elementwise, matrix, statistics and specialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Abs,
    Sq,
    Sqrt,
    Ridge,
    Tr,
    Matmul,
    Inv,
    Dot,
    Outprod,
    Tran,
    Stat(Stat, Dim),
    Rbf,
    Geo,
    Slice,
}

const STATS: [Stat; 6] = [
    Stat::Sum,
    Stat::Prod,
    Stat::Mean,
    Stat::Std,
    Stat::Var,
    Stat::Count,
];

impl Op {
    /// Every operator, with statistics expanded over both dimensions.
    pub fn all() -> Vec<Op> {
        let mut ops = vec![
            Op::Add,
            Op::Sub,
            Op::Mul,
            Op::Div,
            Op::Abs,
            Op::Sq,
            Op::Sqrt,
            Op::Ridge,
            Op::Tr,
            Op::Matmul,
            Op::Inv,
            Op::Dot,
            Op::Outprod,
            Op::Tran,
        ];
        for s in STATS {
            ops.push(Op::Stat(s, Dim::Global));
            ops.push(Op::Stat(s, Dim::Sample));
        }
        ops.extend([Op::Rbf, Op::Geo, Op::Slice]);
        ops
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Add
            | Op::Sub
            | Op::Mul
            | Op::Div
            | Op::Matmul
            | Op::Dot
            | Op::Outprod
            | Op::Rbf => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Abs => "abs",
            Op::Sq => "sq",
            Op::Sqrt => "sqrt",
            Op::Ridge => "ridge",
            Op::Tr => "tr",
            Op::Matmul => "matmul",
            Op::Inv => "inv",
            Op::Dot => "dot",
            Op::Outprod => "outprod",
            Op::Tran => "tran",
            Op::Rbf => "rbf",
            Op::Geo => "geo",
            Op::Slice => "slice",
            Op::Stat(s, d) => match (s, d) {
                (Stat::Sum, Dim::Global) => "sum_g",
                (Stat::Sum, Dim::Sample) => "sum_s",
                (Stat::Prod, Dim::Global) => "prod_g",
                (Stat::Prod, Dim::Sample) => "prod_s",
                (Stat::Mean, Dim::Global) => "mean_g",
                (Stat::Mean, Dim::Sample) => "mean_s",
                (Stat::Std, Dim::Global) => "std_g",
                (Stat::Std, Dim::Sample) => "std_s",
                (Stat::Var, Dim::Global) => "var_g",
                (Stat::Var, Dim::Sample) => "var_s",
                (Stat::Count, Dim::Global) => "count_g",
                (Stat::Count, Dim::Sample) => "count_s",
            },
        }
    }

    pub fn from_name(s: &str) -> Option<Op> {
        Op::all().into_iter().find(|o| o.name() == s)
    }
}
