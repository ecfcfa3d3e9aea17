//! Genetic programming over scoring functions.

mod checkpoint;
mod engine;
mod select;
mod variation;

use std::fmt;

use thiserror::Error;

use crate::ir::{ExprTree, MAX_DEPTH};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use engine::{
    evaluate_population, initial_population, reproduce_generation, run_evolution,
    run_evolution_from, FitnessTask, GenerationLog, Objective, Reproduction, RunResult,
    TaskFailure, LOG_HEADER,
};
pub use select::tournament_select;
pub use variation::{crossover, mutate};

/// How the two task accuracies are merged into one fitness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Arithmetic,
    Geometric,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Arithmetic => "arithmetic",
            Scheme::Geometric => "geometric",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "arithmetic" => Some(Scheme::Arithmetic),
            "geometric" => Some(Scheme::Geometric),
            _ => None,
        }
    }
}

/// `alpha * a + (1 - alpha) * b`, or `a^alpha * b^(1 - alpha)`.
///
/// `alpha = 1` returns `a` and `alpha = 0` returns `b` exactly under both
/// schemes. A zero accuracy under the geometric scheme yields 0.
pub fn combine_fitness(a: f64, b: f64, alpha: f64, scheme: Scheme) -> f64 {
    if alpha == 1.0 {
        return a;
    }
    if alpha == 0.0 {
        return b;
    }
    match scheme {
        Scheme::Arithmetic => alpha.mul_add(a, (1.0 - alpha) * b),
        Scheme::Geometric => {
            if a == 0.0 || b == 0.0 {
                0.0
            } else {
                a.powf(alpha) * b.powf(1.0 - alpha)
            }
        }
    }
}

/// Where an individual came from, for bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Soap,
    Random,
    Carryover,
    Offspring,
    Fresh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub tree: ExprTree,
    /// One slot per task; `None` for a task that was not run.
    pub accuracies: Vec<Option<f64>>,
    pub fitness: Option<f64>,
    pub origin: Origin,
}

impl Individual {
    pub fn new(tree: ExprTree, origin: Origin) -> Self {
        Self {
            tree,
            accuracies: Vec::new(),
            fitness: None,
            origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub num_selected: usize,
    pub num_reproduced: usize,
    pub num_fresh: usize,
    pub p_mutation: f64,
    pub p_crossover: f64,
    pub alpha: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub init_soap_count: usize,
    pub init_random_count: usize,
    pub max_repair_retries: usize,
    pub max_depth: usize,
    pub workers: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 40,
            generations: 25,
            tournament_size: 4,
            num_selected: 10,
            num_reproduced: 24,
            num_fresh: 6,
            p_mutation: 0.75,
            p_crossover: 0.75,
            alpha: 0.5,
            scheme: Scheme::Geometric,
            seed: 0,
            init_soap_count: 20,
            init_random_count: 20,
            max_repair_retries: 200,
            max_depth: MAX_DEPTH,
            workers: 1,
        }
    }
}

impl EvolutionConfig {
    /// The small configuration used for quick runs: 16 individuals
    /// (4 carried over, 10 reproduced, 2 fresh) for 10 generations.
    pub fn desk() -> Self {
        Self {
            population_size: 16,
            generations: 10,
            num_selected: 4,
            num_reproduced: 10,
            num_fresh: 2,
            init_soap_count: 8,
            init_random_count: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.population_size == 0 || self.generations == 0 {
            return bad("population_size and generations must be positive".into());
        }
        if self.num_selected + self.num_reproduced + self.num_fresh != self.population_size {
            return bad(format!(
                "num_selected + num_reproduced + num_fresh = {} but population_size = {}",
                self.num_selected + self.num_reproduced + self.num_fresh,
                self.population_size
            ));
        }
        if self.init_soap_count + self.init_random_count != self.population_size {
            return bad("init_soap_count + init_random_count must equal population_size".into());
        }
        if self.num_selected == 0 {
            return bad("num_selected must be positive".into());
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return bad("tournament_size must be in 1..=population_size".into());
        }
        for (name, p) in [
            ("p_mutation", self.p_mutation),
            ("p_crossover", self.p_crossover),
            ("alpha", self.alpha),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.max_depth < 2 {
            return bad("max_depth must be at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid evolution config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("could not fill slot {slot} with a valid function after {retries} retries")]
    RepairExhausted { slot: usize, retries: usize },
    #[error("tournament over an unevaluated individual (index {0})")]
    Unevaluated(usize),
    #[error("checkpoint does not match the configuration: {0}")]
    Resume(String),
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a run seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Origin::Soap => "soap",
            Origin::Random => "random",
            Origin::Carryover => "carryover",
            Origin::Offspring => "offspring",
            Origin::Fresh => "fresh",
        };
        f.write_str(s)
    }
}
