//! Expression-tree genomes: operators and operands, static kinds, evaluation
//! against a channel context, text form and random generation.

mod context;
mod eval;
mod generate;
mod kind;
mod op;
pub mod sexpr;
mod tree;

pub use context::{probe, random_context, ChannelContext, ContextError, ProbeSpec, PROBE_SEED};
pub use eval::{validity_test, MAX_DEPTH};
pub use generate::{grow_node, random_tree, GenerationExhausted, GrowParams};
pub use kind::{apply_kind, infer_kind, node_kind, operand_kind, Grammar, Kind, Production};
pub use op::{Op, Operand};
pub use sexpr::{format, parse, parse_fn_file, ParseError};
pub use tree::{ExprTree, Node, TreeKind};
