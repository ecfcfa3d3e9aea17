use std::cell::RefCell;

use proptest::prelude::*;
use prunevolve_core::evolve::{
    combine_fitness, run_evolution, run_evolution_from, tournament_select, Checkpoint,
    EvolutionConfig, FitnessTask, Individual, Objective, Origin, Scheme, TaskFailure,
};
use prunevolve_core::library::build_soap;
use prunevolve_core::ExprTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic pseudo-accuracy mixing the tree text and the seed.
struct HashTask;

impl FitnessTask for HashTask {
    fn id(&self) -> &str {
        "hash"
    }
    fn evaluate(&self, tree: &ExprTree, seed: u64) -> Result<f64, TaskFailure> {
        let text = tree.to_string();
        let h = text.bytes().fold(seed ^ 0xcbf29ce484222325, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        });
        Ok((h % 10_000) as f64 / 10_000.0)
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = EvolutionConfig {
        generations: 6,
        seed: 21,
        ..EvolutionConfig::desk()
    };
    let soap = build_soap();
    let obj = Objective::pair(&HashTask, &HashTask, 0.5, Scheme::Geometric);
    let saved = RefCell::new(Vec::new());
    let full = run_evolution_from(&cfg, &obj, &soap, None, |_, cp| {
        saved.borrow_mut().push(cp.to_text());
    })
    .unwrap();
    let cp = Checkpoint::from_text(&saved.borrow()[2]).unwrap();
    let resumed = run_evolution_from(&cfg, &obj, &soap, Some(cp), |_, _| {}).unwrap();
    assert_eq!(resumed.logs, full.logs[3..]);
    assert_eq!(resumed.best, full.best);
}

#[test]
fn best_so_far_never_decreases() {
    let soap = build_soap();
    for seed in 0..4 {
        let cfg = EvolutionConfig {
            seed,
            generations: 6,
            ..EvolutionConfig::desk()
        };
        let r = run_evolution(&cfg, &Objective::single(&HashTask), &soap).unwrap();
        for w in r.logs.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
    }
}

fn population(fits: &[f64]) -> Vec<Individual> {
    fits.iter()
        .map(|&f| Individual {
            tree: build_soap()[0].tree.clone(),
            accuracies: vec![Some(f)],
            fitness: Some(f),
            origin: Origin::Random,
        })
        .collect()
}

proptest! {
    #[test]
    fn winners_dominate_their_brackets(
        fits in prop::collection::vec(0.0f64..1.0, 4..20),
        size in 1usize..4,
        seed in any::<u64>(),
    ) {
        let pop = population(&fits);
        let winners = tournament_select(&pop, size, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        // a winner beats at least size - 1 others, so at most len - size are strictly better
        for w in winners {
            let better = fits.iter().filter(|&&f| f > fits[w]).count();
            prop_assert!(better <= fits.len() - size);
        }
    }

    #[test]
    fn schemes_agree_on_dominated_pairs(
        a1 in 0.0f64..1.0, b1 in 0.0f64..1.0, da in 0.0f64..0.5, db in 0.0f64..0.5,
    ) {
        let (a2, b2) = ((a1 + da).min(1.0), (b1 + db).min(1.0));
        for s in [Scheme::Arithmetic, Scheme::Geometric] {
            prop_assert!(combine_fitness(a2, b2, 0.5, s) >= combine_fitness(a1, b1, 0.5, s));
        }
    }
}
