use crate::error::{Error, Result};
use crate::sim::{evaluate_placement, EnvState, PlacementDecision};

/// Myopic lowest-latency placement over the feasible catalogue. Energy is
/// ignored; ties go to the lowest catalogue index.
pub fn greedy_select(env: &EnvState) -> Result<PlacementDecision> {
    let task = env.current_task().ok_or(Error::EpisodeFinished)?;
    let mut best: Option<(f64, PlacementDecision)> = None;
    for (_, decision) in env.feasible_catalogue() {
        let (lat, _) = evaluate_placement(env.world(), env.backlogs(), task, &decision);
        let total = lat.total();
        match best {
            Some((b, _)) if b <= total => {}
            _ => best = Some((total, decision)),
        }
    }
    best.map(|(_, d)| d).ok_or(Error::NoFeasibleNode)
}
