use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use super::context::probe;
use super::eval::validity_test;
use super::kind::{operand_kind, Grammar, Kind, Production};
use super::op::{Op, Operand};
use super::tree::{ExprTree, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no valid tree of kind {kind:?} within {attempts} attempts")]
pub struct GenerationExhausted {
    pub kind: Kind,
    pub attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_depth: usize,
    /// Chance of stopping at a leaf when one of the right kind exists.
    pub p_leaf: f64,
    pub target: Kind,
    /// Whether `F+`/`F-` may be drawn.
    pub label_aware: bool,
    pub max_attempts: usize,
}

impl Default for GrowParams {
    fn default() -> Self {
        Self {
            max_depth: super::eval::MAX_DEPTH,
            p_leaf: 0.3,
            target: Kind::Scalar,
            label_aware: true,
            max_attempts: 100,
        }
    }
}

fn leaves(kind: Kind, label_aware: bool) -> Vec<Operand> {
    Operand::ALL
        .into_iter()
        .filter(|&o| operand_kind(o) == kind && (label_aware || !o.is_partition()))
        .collect()
}

/// Grows a kind-correct node of at most `budget` levels.
pub fn grow_node(rng: &mut impl Rng, kind: Kind, budget: usize, p: &GrowParams) -> Option<Node> {
    let g = Grammar::get();
    if budget < g.min_height(kind) {
        return None;
    }
    let leaf_choices = leaves(kind, p.label_aware);
    let feasible: Vec<&Production> = g
        .productions
        .get(&kind)
        .map(|ps| {
            ps.iter()
                .filter(|pr| pr.args.iter().all(|&a| g.min_height(a) < budget))
                .collect()
        })
        .unwrap_or_default();
    let take_leaf =
        !leaf_choices.is_empty() && (feasible.is_empty() || rng.random::<f64>() < p.p_leaf);
    if take_leaf {
        return leaf_choices.choose(rng).map(|&o| Node::Leaf(o));
    }
    // operator first, then one of its signatures, so that operators with many
    // signatures are not over-represented
    let mut ops: Vec<Op> = feasible.iter().map(|pr| pr.op).collect();
    ops.dedup();
    let op = *ops.choose(rng)?;
    let sigs: Vec<&&Production> = feasible.iter().filter(|pr| pr.op == op).collect();
    let sig = sigs.choose(rng)?;
    let children = sig
        .args
        .iter()
        .map(|&a| grow_node(rng, a, budget - 1, p))
        .collect::<Option<Vec<_>>>()?;
    Some(Node::Apply(op, children))
}

/// Grow-style random tree whose root has `params.target` kind and which
/// passes the validity test on the shared probe.
pub fn random_tree(
    rng: &mut impl Rng,
    params: &GrowParams,
) -> Result<ExprTree, GenerationExhausted> {
    for _ in 0..params.max_attempts {
        if let Some(root) = grow_node(rng, params.target, params.max_depth, params) {
            let tree = ExprTree::new(root);
            if params.target != Kind::Scalar || validity_test(&tree, probe(), params.max_depth) {
                return Ok(tree);
            }
        }
    }
    Err(GenerationExhausted {
        kind: params.target,
        attempts: params.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::kind::infer_kind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_trees_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = GrowParams {
            max_depth: 6,
            ..Default::default()
        };
        for _ in 0..1000 {
            let t = random_tree(&mut rng, &params).unwrap();
            assert!(t.depth() <= 6);
            assert!(validity_test(&t, probe(), 6));
        }
    }

    #[test]
    fn equal_seeds_give_equal_trees() {
        let p = GrowParams::default();
        let a: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..20).map(|_| random_tree(&mut r, &p).unwrap()).collect()
        };
        let b: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..20).map(|_| random_tree(&mut r, &p).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn labelless_generation_avoids_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = GrowParams {
            label_aware: false,
            ..Default::default()
        };
        for _ in 0..200 {
            assert!(!random_tree(&mut rng, &p).unwrap().is_label_aware());
        }
    }

    #[test]
    fn grown_nodes_have_requested_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = GrowParams::default();
        for k in Kind::VALID {
            for _ in 0..50 {
                let n = grow_node(&mut rng, k, 5, &p).unwrap();
                assert_eq!(infer_kind(&ExprTree::new(n.clone())), k);
                assert!(n.height() <= 5);
            }
        }
    }
}
