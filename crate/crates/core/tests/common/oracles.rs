//! Exact oracles shared by the property tests and the acceptance run. Each
//! returns a report listing every counterexample it found.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use sagin_core::agents::greedy_select;
use sagin_core::alloc::{allocate, DemandSet, Direction, LinkRef};
use sagin_core::env::{build_scenario, LinkClass, NodeKind, ScenarioConfig, Task, World};
use sagin_core::harness::episode_seed;
use sagin_core::orchestrator::{shape_reward, Intent, RewardConfig, ShapingRuleTable};
use sagin_core::perceiver::{EnergyLevel, GroundCongestion, SatelliteBackup, SemanticState};
use sagin_core::sim::{EnvState, PlacementDecision, MIN_OPERATING_ENERGY};

#[derive(Debug, Default)]
pub struct OracleReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }

    fn fail(&mut self, msg: String) {
        if self.failures.len() < 20 {
            self.failures.push(msg);
        }
    }
}

pub fn default_world() -> Arc<World> {
    Arc::new(build_scenario(&ScenarioConfig::default()).unwrap())
}

fn reward_config(lambda: f64) -> RewardConfig {
    RewardConfig::fixed(lambda, 1000.0, 0.01, 8.0)
}

/// Every placement the topology admits, written from the placement rules
/// rather than the catalogue.
fn all_placements(env: &EnvState) -> Vec<PlacementDecision> {
    let world = env.world();
    let power = world.config.energy.power_max_w;
    let operational = |id: usize| env.energies()[id] >= MIN_OPERATING_ENERGY;
    let mut out = Vec::new();
    for proc in 0..world.node_count() {
        for access in 0..world.node_count() {
            let ok = match world.kind(proc) {
                NodeKind::Uav => access == proc && operational(proc),
                NodeKind::GroundBaseStation => access == proc,
                NodeKind::LeoSatellite => match world.kind(access) {
                    NodeKind::Uav => operational(access),
                    NodeKind::GroundBaseStation => true,
                    NodeKind::LeoSatellite => false,
                },
            };
            if ok {
                out.push(PlacementDecision {
                    processing_node: proc,
                    access_node: access,
                    power,
                });
            }
        }
    }
    out
}

/// greedy_select must reach the brute-force minimum latency on every step.
pub fn greedy_matches_brute_force(episodes: usize) -> OracleReport {
    let world = default_world();
    let mut report = OracleReport::default();
    for ep in 0..episodes {
        let mut env = EnvState::reset(&world, episode_seed(0, ep), reward_config(1.0));
        while !env.is_done() {
            let best = all_placements(&env)
                .into_iter()
                .map(|d| env.clone().step(d).unwrap().latency_ms)
                .fold(f64::INFINITY, f64::min);
            let choice = greedy_select(&env).unwrap();
            let got = env.step(choice).unwrap().latency_ms;
            report.checked += 1;
            if got != best {
                report.fail(format!(
                    "episode {ep} step {}: greedy {got} ms, brute force {best} ms",
                    env.step_index() - 1
                ));
            }
        }
    }
    report
}

fn random_link(rng: &mut Pcg64, world: &World) -> LinkRef {
    let classes = [
        LinkClass::UserUav,
        LinkClass::UserGround,
        LinkClass::AccessSatellite,
        LinkClass::AccessGroundEdge,
    ];
    LinkRef {
        class: classes[rng.gen_range(0..classes.len())],
        endpoint: rng.gen_range(0..world.node_count()),
        direction: if rng.gen_bool(0.5) { Direction::Up } else { Direction::Down },
    }
}

pub fn random_demand_set(rng: &mut Pcg64, world: &World) -> DemandSet {
    let mut d = DemandSet::default();
    let mut task = 0;
    for _ in 0..rng.gen_range(1..6) {
        let link = random_link(rng, world);
        for _ in 0..rng.gen_range(1..8) {
            // duplicate links are fine; fresh task ids keep entries unique
            d.add_link(link, task, rng.gen_range(0.01..60.0)).unwrap();
            task += 1;
        }
    }
    for _ in 0..rng.gen_range(1..6) {
        let node = rng.gen_range(0..world.node_count());
        for _ in 0..rng.gen_range(1..8) {
            d.add_compute(node, task, rng.gen_range(0.01..10.0)).unwrap();
            task += 1;
        }
    }
    d
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

/// On every contended link and node the shares add up to the capacity.
pub fn allocator_conservation(sets: usize) -> OracleReport {
    let world = default_world();
    let mut rng = Pcg64::seed_from_u64(0xA110C);
    let mut report = OracleReport::default();
    for i in 0..sets {
        let demands = random_demand_set(&mut rng, &world);
        let alloc = allocate(&demands, &world);
        for (link, total) in alloc.link_totals() {
            if !close(total, world.link(link.class).rate_mbps) {
                report.fail(format!("set {i}: {link:?} totals {total}"));
            }
        }
        for (node, total) in alloc.node_totals() {
            if !close(total, world.capacity(node)) {
                report.fail(format!("set {i}: node {node} totals {total}"));
            }
        }
        let expected = demands.links.values().map(Vec::len).sum::<usize>()
            + demands.nodes.values().map(Vec::len).sum::<usize>();
        let got: usize = alloc.tasks.values().map(|t| t.transfers.len() + t.compute.len()).sum();
        if got != expected {
            report.fail(format!("set {i}: {got} shares for {expected} demands"));
        }
        report.checked += 1;
    }
    report
}

/// Reward identity on random steps, and a strictly larger coefficient never
/// raising the reward of the same step.
pub fn reward_identity_and_monotonicity(steps: usize) -> OracleReport {
    let world = default_world();
    let mut rng = Pcg64::seed_from_u64(0x2E3A2D);
    let mut report = OracleReport::default();
    let mut env = EnvState::reset(&world, rng.gen(), reward_config(1.0));
    while report.checked < steps {
        if env.is_done() {
            env = EnvState::reset(&world, rng.gen(), reward_config(1.0));
        }
        let catalogue = env.feasible_catalogue();
        let (_, decision) = catalogue[rng.gen_range(0..catalogue.len())];
        let low = rng.gen_range(0.25..8.0);
        let high = low + rng.gen_range(1e-3..4.0);

        let mut other = env.clone();
        other.set_reward_config(reward_config(high));
        env.set_reward_config(reward_config(low));
        let a = env.step(decision).unwrap();
        let b = other.step(decision).unwrap();
        report.checked += 1;

        for o in [&a, &b] {
            let t = o.reward_terms;
            let residual = o.reward + t.latency_norm + t.lambda * t.energy_norm;
            if residual.abs() > 1e-12 {
                report.fail(format!("step {}: identity residual {residual}", report.checked));
            }
        }
        let ok = if a.uav_energy_spent > 0.0 {
            b.reward < a.reward
        } else {
            b.reward == a.reward
        };
        if !ok {
            report.fail(format!(
                "step {}: lambda {low} -> {high} moved reward {} -> {}",
                report.checked, a.reward, b.reward
            ));
        }
    }
    report
}

/// One UAV, one satellite reachable only through that UAV, one task.
pub struct CrossoverWorld {
    pub env: EnvState,
    pub on_uav: PlacementDecision,
    pub on_satellite: PlacementDecision,
    pub lambda_star: f64,
}

pub fn crossover_world() -> CrossoverWorld {
    let cfg = ScenarioConfig {
        uav_count: 1,
        satellite_count: 1,
        ground_station_count: 0,
        uav_initial_energy: vec![0.9],
        ..ScenarioConfig::default()
    };
    let world = Arc::new(build_scenario(&cfg).unwrap());
    let task = Task {
        id: 0,
        data_in: 10.0,
        compute_demand: 1.0,
        result_out: 10.0,
        deadline: 2000.0,
    };
    let env = EnvState::reset(&world, 0, reward_config(1.0)).with_tasks(vec![task]);
    let power = cfg.energy.power_min_w;
    let on_uav = PlacementDecision {
        processing_node: 0,
        access_node: 0,
        power,
    };
    let on_satellite = PlacementDecision {
        processing_node: 1,
        access_node: 0,
        power,
    };
    // latency and energy straight from the simulator
    let u = env.clone().step(on_uav).unwrap();
    let s = env.clone().step(on_satellite).unwrap();
    let norm = &cfg.normalization;
    let lambda_star = ((s.latency_ms - u.latency_ms) / norm.latency_ref_ms)
        / ((u.uav_energy_spent - s.uav_energy_spent) / norm.energy_ref);
    CrossoverWorld {
        env,
        on_uav,
        on_satellite,
        lambda_star,
    }
}

impl CrossoverWorld {
    /// Brute-force best of the two actions under `lambda`.
    pub fn best(&self, lambda: f64) -> PlacementDecision {
        let mut best: Option<(f64, PlacementDecision)> = None;
        for d in [self.on_uav, self.on_satellite] {
            let mut env = self.env.clone();
            env.set_reward_config(reward_config(lambda));
            let r = env.step(d).unwrap().reward;
            if best.map_or(true, |(b, _)| r > b) {
                best = Some((r, d));
            }
        }
        best.unwrap().1
    }
}

fn semantic(level: EnergyLevel) -> SemanticState {
    SemanticState {
        uav_energy_level: level,
        satellite_backup: SatelliteBackup::AvailableHighLatency,
        ground_congestion: GroundCongestion::Low,
    }
}

/// The optimal action flips at the derived threshold, and the default table
/// puts Adequate and Critical on opposite sides of it.
pub fn lambda_crossover() -> OracleReport {
    let w = crossover_world();
    let mut report = OracleReport::default();
    let star = w.lambda_star;
    if !(star.is_finite() && star > 0.0) {
        report.fail(format!("degenerate crossover {star}"));
        return report;
    }
    for eps in [1e-6, 1e-3, 0.1, 0.5] {
        report.checked += 2;
        if w.best(star * (1.0 - eps)) != w.on_uav {
            report.fail(format!("below lambda* by {eps}: not on the UAV"));
        }
        if w.best(star * (1.0 + eps)) != w.on_satellite {
            report.fail(format!("above lambda* by {eps}: not on the satellite"));
        }
    }
    let table = ShapingRuleTable::default();
    let norm = &w.env.world().config.normalization;
    let adequate = shape_reward(&semantic(EnergyLevel::Adequate), &Intent::default(), &table, norm, 0).lambda;
    let critical = shape_reward(&semantic(EnergyLevel::Critical), &Intent::default(), &table, norm, 0).lambda;
    report.checked += 2;
    if !(adequate < star && star < critical) {
        report.fail(format!("lambda* {star} not inside ({adequate}, {critical})"));
    }
    if w.best(adequate) != w.on_uav || w.best(critical) != w.on_satellite {
        report.fail("shaped coefficients do not flip the optimal action".into());
    }
    report
}
