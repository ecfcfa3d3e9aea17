use rand::seq::index::sample;
use rand::Rng;

use super::{EvolutionError, Individual};

/// Runs `num_selected` tournaments and returns the population index of each
/// winner. Each bracket draws `tournament_size` distinct individuals; the
/// fittest wins and ties go to the lower index.
pub fn tournament_select(
    pop: &[Individual],
    tournament_size: usize,
    num_selected: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, EvolutionError> {
    if let Some(i) = pop.iter().position(|ind| ind.fitness.is_none()) {
        return Err(EvolutionError::Unevaluated(i));
    }
    let size = tournament_size.clamp(1, pop.len());
    let fit = |i: usize| pop[i].fitness.unwrap_or(f64::NEG_INFINITY);
    let winners = (0..num_selected)
        .map(|_| {
            let mut bracket = sample(rng, pop.len(), size).into_vec();
            bracket.sort_unstable();
            bracket
                .into_iter()
                .reduce(|best, i| if fit(i) > fit(best) { i } else { best })
                .expect("bracket is non-empty")
        })
        .collect();
    Ok(winners)
}
