//! Population checkpoints.
//!
//! ```text
//! # prunevolve population
//! gen <g>
//! seed <seed>
//! best <fitness>\t<accuracies>\t<origin>\t<tree>
//! <fitness>\t<accuracies>\t<origin>\t<tree>
//! ...
//! ```
//!
//! Accuracies are comma separated with `-` for a task that was skipped.
//! Fitness values are written in shortest round-trip form, so a population
//! read back is bit-identical to the one written.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Individual, Origin};
use crate::ir::{parse, ParseError};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generation: usize,
    pub seed: u64,
    pub best: Individual,
    pub population: Vec<Individual>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Tree { line: usize, source: ParseError },
}

impl Checkpoint {
    pub fn capture(
        generation: usize,
        seed: u64,
        pop: &[Individual],
        best: Option<&Individual>,
    ) -> Self {
        Self {
            generation,
            seed,
            best: best.cloned().unwrap_or_else(|| pop[0].clone()),
            population: pop.to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# prunevolve population\ngen {}\nseed {}\nbest {}\n",
            self.generation,
            self.seed,
            individual_line(&self.best)
        );
        for ind in &self.population {
            s.push_str(&individual_line(ind));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let mut generation = None;
        let mut seed = None;
        let mut best = None;
        let mut population = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim_end();
            if l.trim().is_empty() || l.starts_with('#') {
                continue;
            }
            let fmt_err = |msg: &str| CheckpointError::Format {
                line,
                msg: msg.to_string(),
            };
            if let Some(v) = l.strip_prefix("gen ") {
                generation = Some(v.trim().parse().map_err(|_| fmt_err("bad generation"))?);
            } else if let Some(v) = l.strip_prefix("seed ") {
                seed = Some(v.trim().parse().map_err(|_| fmt_err("bad seed"))?);
            } else if let Some(v) = l.strip_prefix("best ") {
                best = Some(parse_individual(v, line)?);
            } else {
                population.push(parse_individual(l, line)?);
            }
        }
        let missing = |what: &str| CheckpointError::Format {
            line: 0,
            msg: format!("missing {what}"),
        };
        Ok(Self {
            generation: generation.ok_or_else(|| missing("gen"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            best: best.ok_or_else(|| missing("best"))?,
            population,
        })
    }
}

fn individual_line(ind: &Individual) -> String {
    let acc = if ind.accuracies.is_empty() {
        "-".to_string()
    } else {
        ind.accuracies
            .iter()
            .map(|a| a.map_or("-".to_string(), |v| v.to_string()))
            .collect::<Vec<_>>()
            .join(",")
    };
    let fit = ind.fitness.map_or("-".to_string(), |f| f.to_string());
    format!("{fit}\t{acc}\t{}\t{}", ind.origin, ind.tree)
}

fn parse_origin(s: &str) -> Option<Origin> {
    Some(match s {
        "soap" => Origin::Soap,
        "random" => Origin::Random,
        "carryover" => Origin::Carryover,
        "offspring" => Origin::Offspring,
        "fresh" => Origin::Fresh,
        _ => return None,
    })
}

fn parse_individual(l: &str, line: usize) -> Result<Individual, CheckpointError> {
    let err = |msg: &str| CheckpointError::Format {
        line,
        msg: msg.to_string(),
    };
    let mut parts = l.splitn(4, '\t');
    let (fit, acc, origin, tree) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => return Err(err("expected four tab-separated fields")),
    };
    let num = |s: &str| -> Result<Option<f64>, CheckpointError> {
        if s == "-" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| err("bad number"))
        }
    };
    let accuracies = if acc == "-" {
        Vec::new()
    } else {
        acc.split(',').map(num).collect::<Result<_, _>>()?
    };
    Ok(Individual {
        tree: parse(tree).map_err(|source| CheckpointError::Tree { line, source })?,
        accuracies,
        fitness: num(fit)?,
        origin: parse_origin(origin).ok_or_else(|| err("unknown origin"))?,
    })
}

pub fn write_checkpoint(path: &Path, cp: &Checkpoint) -> io::Result<()> {
    fs::write(path, cp.to_text())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_text(&fs::read_to_string(path)?)
}
