use rand::Rng;

use super::synth::{synth_channels, SyntheticSpec};
use crate::ir::ExprTree;

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `0.5` when either group is empty.
pub fn auc(scores: &[f64], positive: &[bool]) -> f64 {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * mid;
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    (rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64)
}

/// AUC of the tree's channel scores against the informative flags of a fresh
/// synthetic layer. A failed evaluation on any channel scores `0`.
pub fn run_ranking_task(tree: &ExprTree, spec: &SyntheticSpec, rng: &mut impl Rng) -> f64 {
    let (contexts, flags) = synth_channels(spec, rng);
    let scores: Result<Vec<f64>, _> = contexts.iter().map(|c| tree.evaluate(c)).collect();
    match scores {
        Ok(s) => auc(&s, &flags),
        Err(_) => 0.0,
    }
}
