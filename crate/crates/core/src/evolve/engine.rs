use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::select::tournament_select;
use super::variation::{crossover, mutate};
use super::{
    combine_fitness, derive_seed, ConfigError, EvolutionConfig, EvolutionError, Individual, Origin,
    Scheme,
};
use crate::ir::{probe, random_tree, validity_test, ExprTree, GrowParams};
use crate::library::NamedFunction;

pub const LOG_HEADER: &str = "gen,best,q25,mean,repairs,best_fn";

const INIT_STREAM: u64 = 0x1417;
const REPRO_STREAM: u64 = 0x4E9D;
const EVAL_STREAM: u64 = 0xE7A1;

pub type TaskFailure = Box<dyn std::error::Error + Send + Sync>;

/// A fitness task. Implementations must be pure given `(tree, seed)` so that
/// results do not depend on evaluation order or thread count.
pub trait FitnessTask: Send + Sync {
    fn id(&self) -> &str;
    fn evaluate(&self, tree: &ExprTree, seed: u64) -> Result<f64, TaskFailure>;
}

/// One or two tasks and how their accuracies combine.
#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub task_a: &'a dyn FitnessTask,
    pub task_b: Option<&'a dyn FitnessTask>,
    pub alpha: f64,
    pub scheme: Scheme,
}

impl<'a> Objective<'a> {
    pub fn single(task: &'a dyn FitnessTask) -> Self {
        Self {
            task_a: task,
            task_b: None,
            alpha: 1.0,
            scheme: Scheme::Arithmetic,
        }
    }

    pub fn pair(
        a: &'a dyn FitnessTask,
        b: &'a dyn FitnessTask,
        alpha: f64,
        scheme: Scheme,
    ) -> Self {
        Self {
            task_a: a,
            task_b: Some(b),
            alpha,
            scheme,
        }
    }

    /// Accuracies for each task (`None` where the weight is zero) and the
    /// combined fitness. The second value counts task failures.
    pub fn score(&self, tree: &ExprTree, seeds: [u64; 2]) -> (Vec<Option<f64>>, f64, usize) {
        let mut failures = 0;
        let mut run = |t: &dyn FitnessTask, seed| match t.evaluate(tree, seed) {
            Ok(v) if v.is_finite() => v.clamp(0.0, 1.0),
            _ => {
                failures += 1;
                0.0
            }
        };
        match self.task_b {
            None => {
                let a = run(self.task_a, seeds[0]);
                (vec![Some(a)], a, failures)
            }
            Some(tb) => {
                let a = (self.alpha > 0.0).then(|| run(self.task_a, seeds[0]));
                let b = (self.alpha < 1.0).then(|| run(tb, seeds[1]));
                let fit =
                    combine_fitness(a.unwrap_or(0.0), b.unwrap_or(0.0), self.alpha, self.scheme);
                (vec![a, b], fit, failures)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationLog {
    pub generation: usize,
    pub best: f64,
    /// Fitness at the top quartile boundary (the 0.75 quantile).
    pub q25: f64,
    pub mean: f64,
    pub repairs: usize,
    pub best_fn: String,
    /// Individuals whose task evaluation failed and were scored 0.
    pub failures: usize,
}

impl GenerationLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.generation, self.best, self.q25, self.mean, self.repairs, self.best_fn
        )
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub population: Vec<Individual>,
    pub repairs: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best: Individual,
    pub logs: Vec<GenerationLog>,
    pub population: Vec<Individual>,
}

fn grow_params(cfg: &EvolutionConfig) -> GrowParams {
    GrowParams {
        max_depth: cfg.max_depth,
        ..GrowParams::default()
    }
}

fn is_valid(tree: &ExprTree, cfg: &EvolutionConfig) -> bool {
    validity_test(tree, probe(), cfg.max_depth)
}

/// `init_soap_count` random SOAP clones followed by `init_random_count`
/// random valid trees.
pub fn initial_population(
    cfg: &EvolutionConfig,
    rng: &mut impl Rng,
    soap: &[NamedFunction],
) -> Result<Vec<Individual>, EvolutionError> {
    let mut pop = Vec::with_capacity(cfg.population_size);
    for _ in 0..cfg.init_soap_count {
        let f = soap
            .choose(rng)
            .ok_or_else(|| ConfigError("empty seed library".into()))?;
        pop.push(Individual::new(f.tree.clone(), Origin::Soap));
    }
    let params = grow_params(cfg);
    for slot in 0..cfg.init_random_count {
        let tree = (0..=cfg.max_repair_retries)
            .find_map(|_| random_tree(rng, &params).ok())
            .ok_or(EvolutionError::RepairExhausted {
                slot: cfg.init_soap_count + slot,
                retries: cfg.max_repair_retries,
            })?;
        pop.push(Individual::new(tree, Origin::Random));
    }
    Ok(pop)
}

/// Builds the next generation: the selected parents carried over (with the
/// current best forced in), `num_reproduced` children by crossover and
/// mutation, and `num_fresh` SOAP clones or random trees. Invalid products
/// are discarded and regenerated.
pub fn reproduce_generation(
    pop: &[Individual],
    cfg: &EvolutionConfig,
    rng: &mut impl Rng,
    soap: &[NamedFunction],
) -> Result<Reproduction, EvolutionError> {
    let mut selected = tournament_select(pop, cfg.tournament_size, cfg.num_selected, rng)?;
    let fit = |i: usize| pop[i].fitness.unwrap_or(f64::NEG_INFINITY);
    let best = (0..pop.len())
        .reduce(|b, i| if fit(i) > fit(b) { i } else { b })
        .unwrap_or(0);
    if !selected.contains(&best) {
        let weakest = (0..selected.len())
            .reduce(|w, j| {
                if fit(selected[j]) <= fit(selected[w]) {
                    j
                } else {
                    w
                }
            })
            .expect("at least one selected");
        selected[weakest] = best;
    }

    let mut next: Vec<Individual> = selected
        .iter()
        .map(|&i| Individual {
            origin: Origin::Carryover,
            ..pop[i].clone()
        })
        .collect();
    let params = grow_params(cfg);
    let mut repairs = 0;

    for _ in 0..cfg.num_reproduced {
        let slot = next.len();
        let mut retries = 0;
        let child = loop {
            let p1 = &pop[*selected.choose(rng).expect("selected")].tree;
            let mut child = p1.clone();
            if rng.random::<f64>() < cfg.p_crossover {
                let p2 = &pop[*selected.choose(rng).expect("selected")].tree;
                child = crossover(&child, p2, rng, cfg.max_depth).0;
            }
            let candidate = if rng.random::<f64>() < cfg.p_mutation {
                mutate(&child, rng, &params).ok()
            } else {
                Some(child)
            };
            match candidate {
                Some(c) if is_valid(&c, cfg) => break c,
                _ if retries < cfg.max_repair_retries => retries += 1,
                _ => return Err(EvolutionError::RepairExhausted { slot, retries }),
            }
        };
        repairs += retries;
        next.push(Individual::new(child, Origin::Offspring));
    }

    for _ in 0..cfg.num_fresh {
        let slot = next.len();
        let mut retries = 0;
        let tree = loop {
            let candidate = if rng.random::<bool>() {
                soap.choose(rng).map(|f| f.tree.clone())
            } else {
                random_tree(rng, &params).ok()
            };
            match candidate {
                Some(t) if is_valid(&t, cfg) => break t,
                _ if retries < cfg.max_repair_retries => retries += 1,
                _ => return Err(EvolutionError::RepairExhausted { slot, retries }),
            }
        };
        repairs += retries;
        next.push(Individual::new(tree, Origin::Fresh));
    }
    Ok(Reproduction {
        population: next,
        repairs,
    })
}

/// Scores every individual without a fitness. Seeds derive from
/// `(seed, generation, slot)`, so the outcome does not depend on `workers`.
/// Returns the number of failed task evaluations.
pub fn evaluate_population(
    pop: &mut [Individual],
    generation: usize,
    cfg: &EvolutionConfig,
    objective: &Objective<'_>,
) -> usize {
    let work = |(slot, ind): (usize, &mut Individual)| -> usize {
        if ind.fitness.is_some() {
            return 0;
        }
        let seeds = [0u64, 1]
            .map(|t| derive_seed(cfg.seed, &[EVAL_STREAM, generation as u64, slot as u64, t]));
        let (acc, fit, failures) = objective.score(&ind.tree, seeds);
        ind.accuracies = acc;
        ind.fitness = Some(fit);
        failures
    };
    let threads = cfg.workers.max(1);
    if threads == 1 {
        return pop.iter_mut().enumerate().map(work).sum();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| pop.par_iter_mut().enumerate().map(work).sum()),
        Err(_) => pop.iter_mut().enumerate().map(work).sum(),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(
    pop: &[Individual],
    generation: usize,
    repairs: usize,
    failures: usize,
) -> GenerationLog {
    let fits: Vec<f64> = pop.iter().filter_map(|i| i.fitness).collect();
    let mut sorted = fits.clone();
    sorted.sort_by(f64::total_cmp);
    let best_idx = (0..pop.len())
        .filter(|&i| pop[i].fitness.is_some())
        .reduce(|b, i| {
            if pop[i].fitness > pop[b].fitness {
                i
            } else {
                b
            }
        })
        .unwrap_or(0);
    GenerationLog {
        generation,
        best: sorted.last().copied().unwrap_or(0.0),
        q25: if sorted.is_empty() {
            0.0
        } else {
            quantile(&sorted, 0.75)
        },
        mean: fits.iter().sum::<f64>() / fits.len().max(1) as f64,
        repairs,
        best_fn: pop[best_idx].tree.to_string(),
        failures,
    }
}

fn update_best(best: &mut Option<Individual>, pop: &[Individual]) {
    for ind in pop {
        let better = match best {
            None => true,
            Some(b) => ind.fitness > b.fitness,
        };
        if better {
            *best = Some(ind.clone());
        }
    }
}

/// Runs a complete evolution from generation 0.
pub fn run_evolution(
    cfg: &EvolutionConfig,
    objective: &Objective<'_>,
    soap: &[NamedFunction],
) -> Result<RunResult, EvolutionError> {
    run_evolution_from(cfg, objective, soap, None, |_, _| {})
}

/// Runs an evolution, optionally continuing after the generation stored in
/// `resume`. `on_generation` sees each finished generation's log and state,
/// which is what a checkpoint needs.
pub fn run_evolution_from(
    cfg: &EvolutionConfig,
    objective: &Objective<'_>,
    soap: &[NamedFunction],
    resume: Option<Checkpoint>,
    mut on_generation: impl FnMut(&GenerationLog, &Checkpoint),
) -> Result<RunResult, EvolutionError> {
    cfg.validate()?;
    let mut logs = Vec::new();
    let mut best: Option<Individual> = None;
    let (mut gen, mut pop) = match resume {
        Some(cp) => {
            if cp.seed != cfg.seed || cp.population.len() != cfg.population_size {
                return Err(EvolutionError::Resume(format!(
                    "checkpoint has seed {} and {} individuals",
                    cp.seed,
                    cp.population.len()
                )));
            }
            if cp.population.iter().any(|i| i.fitness.is_none()) {
                return Err(EvolutionError::Resume("unevaluated individual".into()));
            }
            best = Some(cp.best);
            (cp.generation, cp.population)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[INIT_STREAM]));
            let mut pop = initial_population(cfg, &mut rng, soap)?;
            let failures = evaluate_population(&mut pop, 0, cfg, objective);
            update_best(&mut best, &pop);
            let log = summarize(&pop, 0, 0, failures);
            on_generation(&log, &Checkpoint::capture(0, cfg.seed, &pop, best.as_ref()));
            logs.push(log);
            (0, pop)
        }
    };
    while gen + 1 < cfg.generations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[REPRO_STREAM, gen as u64]));
        let r = reproduce_generation(&pop, cfg, &mut rng, soap)?;
        gen += 1;
        pop = r.population;
        let failures = evaluate_population(&mut pop, gen, cfg, objective);
        update_best(&mut best, &pop);
        let log = summarize(&pop, gen, r.repairs, failures);
        on_generation(
            &log,
            &Checkpoint::capture(gen, cfg.seed, &pop, best.as_ref()),
        );
        logs.push(log);
    }
    Ok(RunResult {
        best: best.expect("at least one evaluated generation"),
        logs,
        population: pop,
    })
}
