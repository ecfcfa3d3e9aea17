use rand::seq::IndexedRandom;
use rand::Rng;

use crate::ir::{grow_node, node_kind, ExprTree, GenerationExhausted, GrowParams, Kind, Node};

/// Replaces one uniformly chosen node with a freshly grown subtree of the
/// same kind that fits under `params.max_depth`.
pub fn mutate(
    tree: &ExprTree,
    rng: &mut impl Rng,
    params: &GrowParams,
) -> Result<ExprTree, GenerationExhausted> {
    let levels = tree.levels();
    for _ in 0..params.max_attempts {
        let idx = rng.random_range(0..levels.len());
        let node = tree.node(idx).expect("index within tree");
        let kind = node_kind(node);
        if kind == Kind::Invalid || levels[idx] >= params.max_depth {
            continue;
        }
        if let Some(sub) = grow_node(rng, kind, params.max_depth - levels[idx], params) {
            return Ok(tree.replace(idx, sub));
        }
    }
    Err(GenerationExhausted {
        kind: node_kind(tree.root()),
        attempts: params.max_attempts,
    })
}

struct Point {
    a: usize,
    b: usize,
    level: usize,
}

/// Positions reached by the same path in both trees, descending only through
/// nodes of equal arity.
fn common_region(a: &Node, ia: usize, b: &Node, ib: usize, level: usize, out: &mut Vec<Point>) {
    out.push(Point {
        a: ia,
        b: ib,
        level,
    });
    let (ca, cb) = (a.children(), b.children());
    if ca.is_empty() || ca.len() != cb.len() {
        return;
    }
    let (mut ja, mut jb) = (ia + 1, ib + 1);
    for (x, y) in ca.iter().zip(cb) {
        common_region(x, ja, y, jb, level + 1, out);
        ja += x.size();
        jb += y.size();
    }
}

/// One-point crossover: picks a non-root position in the region the two
/// parents share, where the subtrees have the same kind and the swap keeps
/// both offspring within `max_depth`, and exchanges the subtrees. Parents
/// are returned unchanged when no such position exists.
pub fn crossover(
    a: &ExprTree,
    b: &ExprTree,
    rng: &mut impl Rng,
    max_depth: usize,
) -> (ExprTree, ExprTree) {
    let mut region = Vec::new();
    common_region(a.root(), 0, b.root(), 0, 0, &mut region);
    let swappable: Vec<(usize, usize)> = region
        .into_iter()
        .filter(|p| p.a != 0)
        .filter_map(|p| {
            let (x, y) = (a.node(p.a)?, b.node(p.b)?);
            let kind = node_kind(x);
            let fits = p.level + x.height() <= max_depth && p.level + y.height() <= max_depth;
            (kind != Kind::Invalid && kind == node_kind(y) && fits).then_some((p.a, p.b))
        })
        .collect();
    match swappable.choose(rng) {
        Some(&(ia, ib)) => {
            let x = a.node(ia).expect("point in a").clone();
            let y = b.node(ib).expect("point in b").clone();
            (a.replace(ia, y), b.replace(ib, x))
        }
        None => (a.clone(), b.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{infer_kind, parse, probe, validity_test, MAX_DEPTH};
    use crate::library::library;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Pre-order indices whose subtrees differ between two trees.
    fn differing_roots(a: &Node, b: &Node) -> usize {
        if a == b {
            return 0;
        }
        match (a, b) {
            (Node::Apply(x, ca), Node::Apply(y, cb)) if x == y && ca.len() == cb.len() => {
                ca.iter().zip(cb).map(|(p, q)| differing_roots(p, q)).sum()
            }
            _ => 1,
        }
    }

    #[test]
    fn mutation_keeps_kind_and_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let l1 = parse("(sum_g (abs W_I))").unwrap();
        let p = GrowParams::default();
        for _ in 0..1000 {
            let m = mutate(&l1, &mut rng, &p).unwrap();
            assert_eq!(infer_kind(&m), Kind::Scalar);
            assert!(m.depth() <= MAX_DEPTH);
            assert!(differing_roots(l1.root(), m.root()) <= 1);
        }
    }

    #[test]
    fn self_crossover_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in library() {
            let (x, y) = crossover(&f.tree, &f.tree, &mut rng, MAX_DEPTH);
            assert_eq!(x, f.tree);
            assert_eq!(y, f.tree);
        }
    }

    #[test]
    fn crossover_conserves_nodes_and_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lib = library();
        for _ in 0..500 {
            let a = &lib[rng.random_range(0..lib.len())].tree;
            let b = &lib[rng.random_range(0..lib.len())].tree;
            let (x, y) = crossover(a, b, &mut rng, MAX_DEPTH);
            assert_eq!(x.size() + y.size(), a.size() + b.size());
            assert!(x.depth() <= MAX_DEPTH && y.depth() <= MAX_DEPTH);
            assert_eq!(infer_kind(&x), Kind::Scalar);
            assert_eq!(infer_kind(&y), Kind::Scalar);
        }
    }

    #[test]
    fn labelless_parents_give_labelless_children() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = parse("(sqrt (sum_g (sq (sub W_I (geo W)))))").unwrap();
        let b = parse("(sum_g (abs (mul W_I W_I)))").unwrap();
        for _ in 0..100 {
            let (x, y) = crossover(&a, &b, &mut rng, MAX_DEPTH);
            assert!(!x.is_label_aware() && !y.is_label_aware());
        }
    }

    #[test]
    fn most_mutants_stay_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = GrowParams::default();
        let lib = library();
        let valid = (0..300)
            .filter(|i| {
                let m = mutate(&lib[i % lib.len()].tree, &mut rng, &p).unwrap();
                validity_test(&m, probe(), MAX_DEPTH)
            })
            .count();
        assert!(valid > 100, "{valid}");
    }
}
