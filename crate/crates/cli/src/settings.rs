//! Run configuration for `evolve` and `alpha-grid`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use prunevolve_core::config::Ini;
use prunevolve_core::evolve::{EvolutionConfig, Scheme};
use prunevolve_core::tasks::{parse_task, Task};

use crate::CliError;

pub const EVOLUTION_KEYS: [&str; 14] = [
    "population_size",
    "generations",
    "tournament_size",
    "num_selected",
    "num_reproduced",
    "num_fresh",
    "p_mutation",
    "p_crossover",
    "seed",
    "init_soap_count",
    "init_random_count",
    "max_repair_retries",
    "max_depth",
    "workers",
];

const TASK_SECTIONS: [&str; 3] = ["task_a", "task_b", "task_c"];
const TASK_SUFFIXES: [&str; 5] = ["", ".data", ".baseline", ".retrain", ".classifier"];

#[derive(Debug, Clone)]
pub struct GridSettings {
    pub alphas: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub generations: usize,
}

pub struct RunConfig {
    pub evolution: EvolutionConfig,
    pub task_a: Task,
    pub task_b: Option<Task>,
    pub task_c: Option<Task>,
    pub grid: GridSettings,
    /// Task sections exactly as written.
    task_text: String,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn task_text(ini: &Ini) -> String {
    let mut out = String::new();
    for s in &ini.sections {
        if TASK_SECTIONS
            .iter()
            .any(|t| s.name == *t || s.name.starts_with(&format!("{t}.")))
        {
            writeln!(out, "\n[{}]", s.name).unwrap();
            for e in &s.entries {
                writeln!(out, "{} = {}", e.key, e.value).unwrap();
            }
        }
    }
    out
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base_dir, seed_override)
    }

    pub fn parse(
        text: &str,
        base_dir: &Path,
        seed_override: Option<u64>,
    ) -> Result<Self, CliError> {
        let ini = Ini::parse(text).map_err(config_err)?;
        let mut known: BTreeSet<String> = ["evolution", "fitness", "alpha_grid"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for t in TASK_SECTIONS {
            for suffix in TASK_SUFFIXES {
                known.insert(format!("{t}{suffix}"));
            }
        }
        ini.check_sections(&known).map_err(config_err)?;
        ini.check_keys("evolution", &EVOLUTION_KEYS)
            .map_err(config_err)?;
        ini.check_keys("fitness", &["alpha", "scheme"])
            .map_err(config_err)?;
        ini.check_keys("alpha_grid", &["alphas", "schemes", "generations"])
            .map_err(config_err)?;

        let d = EvolutionConfig::default();
        let ev = "evolution";
        let get = |key: &str, default: usize| ini.get_or(ev, key, default).map_err(config_err);
        let scheme_name: String = ini
            .get_or("fitness", "scheme", d.scheme.name().to_string())
            .map_err(config_err)?;
        let scheme = Scheme::from_name(&scheme_name)
            .ok_or_else(|| CliError::Config(format!("unknown scheme {scheme_name:?}")))?;
        let evolution = EvolutionConfig {
            population_size: get("population_size", d.population_size)?,
            generations: get("generations", d.generations)?,
            tournament_size: get("tournament_size", d.tournament_size)?,
            num_selected: get("num_selected", d.num_selected)?,
            num_reproduced: get("num_reproduced", d.num_reproduced)?,
            num_fresh: get("num_fresh", d.num_fresh)?,
            p_mutation: ini
                .get_or(ev, "p_mutation", d.p_mutation)
                .map_err(config_err)?,
            p_crossover: ini
                .get_or(ev, "p_crossover", d.p_crossover)
                .map_err(config_err)?,
            alpha: ini
                .get_or("fitness", "alpha", d.alpha)
                .map_err(config_err)?,
            scheme,
            seed: match seed_override {
                Some(s) => s,
                None => ini.get_or(ev, "seed", d.seed).map_err(config_err)?,
            },
            init_soap_count: get("init_soap_count", d.init_soap_count)?,
            init_random_count: get("init_random_count", d.init_random_count)?,
            max_repair_retries: get("max_repair_retries", d.max_repair_retries)?,
            max_depth: get("max_depth", d.max_depth)?,
            workers: get("workers", d.workers)?,
        };
        evolution.validate().map_err(config_err)?;

        let task = |name: &str| -> Result<Option<Task>, CliError> {
            if !ini.has(name) {
                return Ok(None);
            }
            parse_task(&ini, name, base_dir)
                .map(Some)
                .map_err(|e| CliError::Config(format!("[{name}] {e}")))
        };
        let task_a = task("task_a")?.ok_or_else(|| CliError::Config("missing [task_a]".into()))?;
        let task_b = task("task_b")?;
        let task_c = task("task_c")?;
        if task_b.is_none() && evolution.alpha < 1.0 {
            return Err(CliError::Config(
                "[task_b] is required unless [fitness] alpha = 1".into(),
            ));
        }

        let alphas = ini
            .get_list::<f64>("alpha_grid", "alphas")
            .map_err(config_err)?
            .unwrap_or_else(|| vec![0.0, 0.3, 0.5, 0.7, 1.0]);
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(CliError::Config(format!(
                "[alpha_grid] alpha {a} outside [0, 1]"
            )));
        }
        let schemes = ini
            .get_list::<String>("alpha_grid", "schemes")
            .map_err(config_err)?
            .unwrap_or_else(|| vec!["arithmetic".into(), "geometric".into()])
            .iter()
            .map(|s| {
                Scheme::from_name(s)
                    .ok_or_else(|| CliError::Config(format!("[alpha_grid] unknown scheme {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let grid = GridSettings {
            alphas,
            schemes,
            generations: ini
                .get_or("alpha_grid", "generations", evolution.generations)
                .map_err(config_err)?,
        };
        if grid.generations == 0 {
            return Err(CliError::Config(
                "[alpha_grid] generations must be positive".into(),
            ));
        }

        Ok(Self {
            evolution,
            task_a,
            task_b,
            task_c,
            grid,
            task_text: task_text(&ini),
        })
    }

    /// The configuration with every evolution setting spelled out. Running
    /// from this text reproduces the run.
    pub fn resolved(&self) -> String {
        let e = &self.evolution;
        let mut s = String::from("[evolution]\n");
        for (k, v) in [
            ("population_size", e.population_size.to_string()),
            ("generations", e.generations.to_string()),
            ("tournament_size", e.tournament_size.to_string()),
            ("num_selected", e.num_selected.to_string()),
            ("num_reproduced", e.num_reproduced.to_string()),
            ("num_fresh", e.num_fresh.to_string()),
            ("p_mutation", e.p_mutation.to_string()),
            ("p_crossover", e.p_crossover.to_string()),
            ("seed", e.seed.to_string()),
            ("init_soap_count", e.init_soap_count.to_string()),
            ("init_random_count", e.init_random_count.to_string()),
            ("max_repair_retries", e.max_repair_retries.to_string()),
            ("max_depth", e.max_depth.to_string()),
            ("workers", e.workers.to_string()),
        ] {
            writeln!(s, "{k} = {v}").unwrap();
        }
        writeln!(
            s,
            "\n[fitness]\nalpha = {}\nscheme = {}",
            e.alpha,
            e.scheme.name()
        )
        .unwrap();
        let join = |v: Vec<String>| v.join(", ");
        writeln!(
            s,
            "\n[alpha_grid]\nalphas = {}\nschemes = {}\ngenerations = {}",
            join(self.grid.alphas.iter().map(f64::to_string).collect()),
            join(
                self.grid
                    .schemes
                    .iter()
                    .map(|x| x.name().to_string())
                    .collect()
            ),
            self.grid.generations
        )
        .unwrap();
        s.push_str(&self.task_text);
        s
    }
}
