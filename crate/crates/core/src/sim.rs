//! The episodic decision environment: action decoding, queue and battery
//! dynamics, and the shaped step reward.
//!
//! One MDP step places one task. Tasks of an episode are all present at
//! reset and are served in arrival order; each processing node runs a FIFO
//! queue that does not drain within the episode.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{
    enumerate_discrete_actions, generate_tasks, CatalogueEntry, LinkClass, NodeId, NodeKind,
    RelayClass, Task, World,
};
use crate::error::{Error, Result};
use crate::orchestrator::RewardConfig;
use crate::perceiver::SemanticState;

/// UAVs below this battery fraction can neither process nor relay.
pub const MIN_OPERATING_ENERGY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub processing_node: NodeId,
    /// User-facing first hop; equals the processing node unless a satellite
    /// processes the task, in which case it is the relay.
    pub access_node: NodeId,
    pub power: f64,
}

impl PlacementDecision {
    pub fn is_relayed(&self) -> bool {
        self.processing_node != self.access_node
    }

    fn check(&self, world: &World) -> Result<()> {
        let n = world.node_count();
        if self.processing_node >= n || self.access_node >= n {
            return Err(Error::InvalidDecision(format!("node id out of range in {self:?}")));
        }
        let e = &world.config.energy;
        if !(e.power_min_w..=e.power_max_w).contains(&self.power) {
            return Err(Error::InvalidDecision(format!(
                "power {} W outside [{}, {}]",
                self.power, e.power_min_w, e.power_max_w
            )));
        }
        let ok = match world.kind(self.processing_node) {
            NodeKind::Uav | NodeKind::GroundBaseStation => self.access_node == self.processing_node,
            NodeKind::LeoSatellite => world.kind(self.access_node) != NodeKind::LeoSatellite,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDecision(format!(
                "access node {} is not valid for processing node {}",
                self.access_node, self.processing_node
            )))
        }
    }
}

/// Per-hop latency terms of one placement, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub uplink: f64,
    pub relay_up: f64,
    pub wait: f64,
    pub compute: f64,
    pub relay_down: f64,
    pub downlink: f64,
}

impl LatencyBreakdown {
    pub fn total(&self) -> f64 {
        self.uplink + self.relay_up + self.wait + self.compute + self.relay_down + self.downlink
    }
}

/// Latency and UAV energy of placing `task` under `decision`, given the
/// current node backlogs. Pure; shared by `EnvState::step` and the greedy
/// planner.
pub fn evaluate_placement(
    world: &World,
    backlogs: &[f64],
    task: &Task,
    decision: &PlacementDecision,
) -> (LatencyBreakdown, Option<(NodeId, f64)>) {
    let access = world.access_link(decision.access_node);
    let proc = decision.processing_node;
    let capacity = world.capacity(proc);
    let mut lat = LatencyBreakdown {
        uplink: access.transfer_ms(task.data_in),
        wait: backlogs[proc] / capacity * 1000.0,
        compute: task.compute_demand / capacity * 1000.0,
        downlink: access.transfer_ms(task.result_out),
        ..LatencyBreakdown::default()
    };
    let mut transmit_s = access.transmit_seconds(task.data_in) + access.transmit_seconds(task.result_out);
    if decision.is_relayed() {
        let backhaul = world.link(LinkClass::AccessSatellite);
        lat.relay_up = backhaul.transfer_ms(task.data_in);
        lat.relay_down = backhaul.transfer_ms(task.result_out);
        transmit_s += backhaul.transmit_seconds(task.data_in) + backhaul.transmit_seconds(task.result_out);
    }

    let uav_energy = if world.kind(decision.access_node) == NodeKind::Uav {
        let cfg = &world.config;
        let mut joules = decision.power * transmit_s;
        if world.kind(proc) == NodeKind::Uav {
            joules += cfg.energy.compute_j_per_gcycle * task.compute_demand;
        }
        Some((decision.access_node, joules / cfg.uav_battery_joules))
    } else {
        None
    };
    (lat, uav_energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub latency_norm: f64,
    pub energy_norm: f64,
    pub lambda: f64,
}

impl RewardTerms {
    pub fn reward(&self) -> f64 {
        -(self.latency_norm + self.lambda * self.energy_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub task_id: usize,
    pub decision: PlacementDecision,
    pub latency_ms: f64,
    pub breakdown: LatencyBreakdown,
    /// Decision-attributable battery fraction, summed over involved UAVs.
    /// Hover drain is not included.
    pub uav_energy_spent: f64,
    pub reward: f64,
    pub reward_terms: RewardTerms,
    pub deadline_met: bool,
}

/// One line of the optional per-step JSON Lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub episode: usize,
    pub step: usize,
    pub decision: PlacementDecision,
    pub latency_ms: f64,
    pub energy_fraction: f64,
    pub reward: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    world: Arc<World>,
    tasks: Vec<Task>,
    energies: Vec<f64>,
    backlogs: Vec<f64>,
    step: usize,
    reward_config: RewardConfig,
    seed: u64,
    latencies: Vec<f64>,
}

impl EnvState {
    pub fn reset(world: &Arc<World>, seed: u64, reward_config: RewardConfig) -> Self {
        let tasks = generate_tasks(seed, &world.config).expect("world config was validated at build");
        Self {
            world: Arc::clone(world),
            latencies: Vec::with_capacity(tasks.len()),
            tasks,
            energies: world.initial_energies(),
            backlogs: vec![0.0; world.node_count()],
            step: 0,
            reward_config,
            seed,
        }
    }

    /// Replaces the task list; used by tests that need hand-built tasks.
    pub fn with_tasks(mut self, tasks: Vec<Task>) -> Self {
        self.tasks = tasks;
        self
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_arc(&self) -> &Arc<World> {
        &self.world
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn current_task(&self) -> Option<&Task> {
        self.tasks.get(self.step)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energies_mut(&mut self) -> &mut [f64] {
        &mut self.energies
    }

    pub fn backlogs(&self) -> &[f64] {
        &self.backlogs
    }

    pub fn backlogs_mut(&mut self) -> &mut [f64] {
        &mut self.backlogs
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.tasks.len()
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward_config
    }

    pub fn set_reward_config(&mut self, config: RewardConfig) {
        self.reward_config = config;
    }

    pub fn latency_history(&self) -> &[f64] {
        &self.latencies
    }

    pub fn uav_operational(&self, id: NodeId) -> bool {
        self.energies[id] >= MIN_OPERATING_ENERGY
    }

    fn best_ground_relay(&self) -> Option<NodeId> {
        // smallest backlog, ties to the lowest id
        self.world.ground_ids().fold(None, |best, id| match best {
            Some(b) if self.backlogs[b] <= self.backlogs[id] => Some(b),
            _ => Some(id),
        })
    }

    fn best_uav_relay(&self) -> Option<NodeId> {
        // highest energy among operational UAVs, ties to the lowest id
        self.world
            .uav_ids()
            .filter(|&id| self.uav_operational(id))
            .fold(None, |best, id| match best {
                Some(b) if self.energies[b] >= self.energies[id] => Some(b),
                _ => Some(id),
            })
    }

    fn relay_for(&self, class: RelayClass) -> Option<NodeId> {
        match class {
            RelayClass::Ground => self.best_ground_relay(),
            RelayClass::Uav => self.best_uav_relay(),
        }
    }

    fn processing_feasible(&self, id: NodeId) -> bool {
        match self.world.kind(id) {
            NodeKind::Uav => self.uav_operational(id),
            NodeKind::GroundBaseStation => true,
            NodeKind::LeoSatellite => {
                !self.world.ground_ids().is_empty() || self.best_uav_relay().is_some()
            }
        }
    }

    /// Maps a clamped continuous action onto a placement.
    ///
    /// Layout: one score per node in canonical order, then the relay
    /// preference, then the power entry. Depleted UAVs are masked; satellite
    /// processing requires a relay, taking the preferred class when one
    /// exists and the other class otherwise.
    pub fn decode_continuous(&self, action: &[f64]) -> Result<PlacementDecision> {
        let n = self.world.node_count();
        if action.len() != n + 2 {
            return Err(Error::Shape {
                context: "continuous action",
                expected: n + 2,
                got: action.len(),
            });
        }
        let mut best: Option<(NodeId, f64)> = None;
        for (id, &score) in action[..n].iter().enumerate() {
            if !self.processing_feasible(id) {
                continue;
            }
            let score = if score.is_nan() { f64::NEG_INFINITY } else { score };
            match best {
                Some((_, s)) if s >= score => {}
                _ => best = Some((id, score)),
            }
        }
        let (processing_node, _) = best.ok_or(Error::NoFeasibleNode)?;
        let access_node = match self.world.kind(processing_node) {
            NodeKind::LeoSatellite => {
                let (first, second) = if action[n] >= 0.0 {
                    (RelayClass::Ground, RelayClass::Uav)
                } else {
                    (RelayClass::Uav, RelayClass::Ground)
                };
                self.relay_for(first)
                    .or_else(|| self.relay_for(second))
                    .ok_or(Error::NoFeasibleNode)?
            }
            _ => processing_node,
        };
        let e = &self.world.config.energy;
        let u = action[n + 1].clamp(-1.0, 1.0);
        let power = e.power_min_w + (u + 1.0) / 2.0 * (e.power_max_w - e.power_min_w);
        Ok(PlacementDecision {
            processing_node,
            access_node,
            power,
        })
    }

    fn resolve_entry(&self, entry: &CatalogueEntry) -> Option<PlacementDecision> {
        let access_node = match (self.world.kind(entry.processing), entry.relay) {
            (NodeKind::Uav, _) if !self.uav_operational(entry.processing) => return None,
            (NodeKind::LeoSatellite, Some(class)) => self.relay_for(class)?,
            (NodeKind::LeoSatellite, None) => return None,
            _ => entry.processing,
        };
        Some(PlacementDecision {
            processing_node: entry.processing,
            access_node,
            power: entry.power.watts(&self.world.config.energy),
        })
    }

    /// Resolves catalogue entry `index`; infeasible entries are remapped to
    /// the next feasible entry scanning upward cyclically.
    pub fn decode_discrete(&self, index: usize) -> Result<PlacementDecision> {
        let catalogue = enumerate_discrete_actions(&self.world);
        let size = catalogue.len();
        if index >= size {
            return Err(Error::ActionOutOfRange { index, size });
        }
        (0..size)
            .map(|offset| (index + offset) % size)
            .find_map(|i| self.resolve_entry(&catalogue[i]))
            .ok_or(Error::NoFeasibleNode)
    }

    /// Feasible catalogue entries with their resolved placements, in
    /// catalogue order.
    pub fn feasible_catalogue(&self) -> Vec<(usize, PlacementDecision)> {
        enumerate_discrete_actions(&self.world)
            .iter()
            .enumerate()
            .filter_map(|(i, e)| self.resolve_entry(e).map(|d| (i, d)))
            .collect()
    }

    pub fn step(&mut self, decision: PlacementDecision) -> Result<StepOutcome> {
        let task = self.tasks.get(self.step).cloned().ok_or(Error::EpisodeFinished)?;
        decision.check(&self.world)?;

        let (breakdown, uav_energy) =
            evaluate_placement(&self.world, &self.backlogs, &task, &decision);
        let latency_ms = breakdown.total();

        self.backlogs[decision.processing_node] += task.compute_demand;

        let mut uav_energy_spent = 0.0;
        if let Some((uav, spent)) = uav_energy {
            uav_energy_spent = spent;
            self.energies[uav] = (self.energies[uav] - spent).max(0.0);
        }
        let hover = self.world.config.energy.hover_drain_per_step;
        for e in &mut self.energies {
            *e = (*e - hover).max(0.0);
        }

        let rc = &self.reward_config;
        let terms = RewardTerms {
            latency_norm: latency_ms / rc.latency_ref_ms,
            energy_norm: uav_energy_spent / rc.energy_ref,
            lambda: rc.lambda,
        };
        self.latencies.push(latency_ms);
        self.step += 1;

        Ok(StepOutcome {
            task_id: task.id,
            decision,
            latency_ms,
            breakdown,
            uav_energy_spent,
            reward: terms.reward(),
            reward_terms: terms,
            deadline_met: latency_ms <= task.deadline,
        })
    }

    pub fn observe(&self, semantic: &SemanticState) -> Vec<f64> {
        let world = &*self.world;
        let mut obs = Vec::with_capacity(world.observation_dim());
        let ranges = &world.config.tasks;
        match self.current_task() {
            Some(t) => {
                obs.push(ranges.data_in_mb.normalize(t.data_in));
                obs.push(ranges.compute_gcycles.normalize(t.compute_demand));
                obs.push(ranges.result_out_mb.normalize(t.result_out));
            }
            None => obs.extend_from_slice(&[0.0; 3]),
        }
        obs.extend(self.energies.iter().map(|e| e.clamp(0.0, 1.0)));
        obs.extend(
            self.backlogs
                .iter()
                .enumerate()
                .map(|(id, b)| (b / world.capacity(id)).clamp(0.0, 1.0)),
        );
        obs.extend_from_slice(&semantic.uav_energy_level.one_hot());
        let rc = &self.reward_config;
        obs.push((rc.lambda / rc.lambda_max).clamp(0.0, 1.0));
        obs
    }
}
