//! Topology, node/link/task data model and the default case-study scenario.
//!
//! Node ids are contiguous and canonically ordered: UAVs first, then LEO
//! satellites, then ground base stations. Observation and action layouts
//! elsewhere in the crate index nodes by this order.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    LeoSatellite,
    Uav,
    GroundBaseStation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Gigacycles per second.
    pub compute_capacity: f64,
    /// Battery state in [0, 1]; `None` for nodes whose energy is not tracked.
    pub energy_fraction: Option<f64>,
    /// Queued gigacycles.
    pub backlog: f64,
}

/// Link classes of the derived link table, named by their endpoint pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkClass {
    /// user -> UAV access
    UserUav,
    /// user -> ground base station access
    UserGround,
    /// access node -> satellite backhaul
    AccessSatellite,
    /// access node -> ground edge server backhaul
    AccessGroundEdge,
}

impl LinkClass {
    pub const ALL: [LinkClass; 4] = [
        LinkClass::UserUav,
        LinkClass::UserGround,
        LinkClass::AccessSatellite,
        LinkClass::AccessGroundEdge,
    ];

    pub fn endpoints(self) -> (&'static str, &'static str) {
        match self {
            LinkClass::UserUav => ("user", "uav"),
            LinkClass::UserGround => ("user", "ground_station"),
            LinkClass::AccessSatellite => ("access", "satellite"),
            LinkClass::AccessGroundEdge => ("access", "ground_edge"),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub rate_mbps: f64,
    pub propagation_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub class: LinkClass,
    pub rate_mbps: f64,
    pub propagation_ms: f64,
}

impl Link {
    /// Serialization plus propagation time of `megabits` over this link, in ms.
    pub fn transfer_ms(&self, megabits: f64) -> f64 {
        megabits / self.rate_mbps * 1000.0 + self.propagation_ms
    }

    /// Pure serialization time in seconds.
    pub fn transmit_seconds(&self, megabits: f64) -> f64 {
        megabits / self.rate_mbps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    /// Megabits uploaded by the user.
    pub data_in: f64,
    /// Gigacycles.
    pub compute_demand: f64,
    /// Megabits of generated content returned to the user.
    pub result_out: f64,
    /// Milliseconds.
    pub deadline: f64,
}

/// Closed sampling interval `[lo, hi]`, written as a two-element array in
/// config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct SampleRange {
    pub lo: f64,
    pub hi: f64,
}

impl SampleRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    /// Min-max position of `x` inside the range; 0 for a degenerate range.
    pub fn normalize(&self, x: f64) -> f64 {
        let span = self.hi - self.lo;
        if span > 0.0 {
            ((x - self.lo) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

impl From<[f64; 2]> for SampleRange {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<SampleRange> for [f64; 2] {
    fn from(r: SampleRange) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeCapacities {
    pub uav: f64,
    pub satellite: f64,
    pub ground: f64,
}

impl Default for ComputeCapacities {
    fn default() -> Self {
        Self {
            uav: 5.0,
            satellite: 10.0,
            ground: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkTable {
    pub user_uav: LinkSpec,
    pub user_ground: LinkSpec,
    pub access_satellite: LinkSpec,
    pub access_ground_edge: LinkSpec,
}

impl Default for LinkTable {
    fn default() -> Self {
        Self {
            user_uav: LinkSpec {
                rate_mbps: 50.0,
                propagation_ms: 1.0,
            },
            user_ground: LinkSpec {
                rate_mbps: 100.0,
                propagation_ms: 2.0,
            },
            access_satellite: LinkSpec {
                rate_mbps: 100.0,
                propagation_ms: 15.0,
            },
            access_ground_edge: LinkSpec {
                rate_mbps: 100.0,
                propagation_ms: 2.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskRanges {
    pub data_in_mb: SampleRange,
    pub compute_gcycles: SampleRange,
    pub result_out_mb: SampleRange,
    pub deadline_ms: SampleRange,
}

impl Default for TaskRanges {
    fn default() -> Self {
        Self {
            data_in_mb: SampleRange::new(2.0, 8.0),
            compute_gcycles: SampleRange::new(1.0, 5.0),
            result_out_mb: SampleRange::new(10.0, 50.0),
            deadline_ms: SampleRange::new(2000.0, 2000.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub power_min_w: f64,
    pub power_max_w: f64,
    /// Joules per gigacycle processed on a UAV.
    pub compute_j_per_gcycle: f64,
    /// Battery fraction drained from every UAV per decision step.
    pub hover_drain_per_step: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            power_min_w: 0.5,
            power_max_w: 2.0,
            compute_j_per_gcycle: 0.3,
            hover_drain_per_step: 0.0005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Normalization {
    pub latency_ref_ms: f64,
    pub energy_ref: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            latency_ref_ms: 1000.0,
            energy_ref: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub uav_count: usize,
    pub satellite_count: usize,
    pub ground_station_count: usize,
    pub task_count: usize,
    pub uav_initial_energy: Vec<f64>,
    pub uav_battery_joules: f64,
    pub compute: ComputeCapacities,
    pub links: LinkTable,
    pub tasks: TaskRanges,
    pub energy: EnergyModel,
    pub normalization: Normalization,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            uav_count: 5,
            satellite_count: 3,
            ground_station_count: 2,
            task_count: 50,
            uav_initial_energy: vec![0.25, 0.80, 0.60, 0.45, 0.90],
            uav_battery_joules: 200.0,
            compute: ComputeCapacities::default(),
            links: LinkTable::default(),
            tasks: TaskRanges::default(),
            energy: EnergyModel::default(),
            normalization: Normalization::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be strictly positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be non-negative, got {v}")))
    }
}

fn positive_range(field: &str, r: &SampleRange) -> Result<()> {
    positive(field, r.lo)?;
    positive(field, r.hi)?;
    if r.lo > r.hi {
        return Err(Error::config(
            field,
            format!("lower bound {} exceeds upper bound {}", r.lo, r.hi),
        ));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.uav_initial_energy.len() != self.uav_count {
            return Err(Error::config(
                "scenario.uav_initial_energy",
                format!(
                    "length {} does not match uav_count {}",
                    self.uav_initial_energy.len(),
                    self.uav_count
                ),
            ));
        }
        for (i, e) in self.uav_initial_energy.iter().enumerate() {
            if !(0.0..=1.0).contains(e) {
                return Err(Error::config(
                    format!("scenario.uav_initial_energy[{i}]"),
                    format!("must lie in [0, 1], got {e}"),
                ));
            }
        }
        positive("scenario.uav_battery_joules", self.uav_battery_joules)?;
        positive("scenario.compute.uav", self.compute.uav)?;
        positive("scenario.compute.satellite", self.compute.satellite)?;
        positive("scenario.compute.ground", self.compute.ground)?;
        for (name, spec) in [
            ("user_uav", &self.links.user_uav),
            ("user_ground", &self.links.user_ground),
            ("access_satellite", &self.links.access_satellite),
            ("access_ground_edge", &self.links.access_ground_edge),
        ] {
            positive(&format!("scenario.links.{name}.rate_mbps"), spec.rate_mbps)?;
            non_negative(
                &format!("scenario.links.{name}.propagation_ms"),
                spec.propagation_ms,
            )?;
        }
        positive_range("scenario.tasks.data_in_mb", &self.tasks.data_in_mb)?;
        positive_range("scenario.tasks.compute_gcycles", &self.tasks.compute_gcycles)?;
        positive_range("scenario.tasks.result_out_mb", &self.tasks.result_out_mb)?;
        positive_range("scenario.tasks.deadline_ms", &self.tasks.deadline_ms)?;
        positive("scenario.energy.power_min_w", self.energy.power_min_w)?;
        positive("scenario.energy.power_max_w", self.energy.power_max_w)?;
        if self.energy.power_min_w > self.energy.power_max_w {
            return Err(Error::config(
                "scenario.energy.power_min_w",
                "must not exceed power_max_w",
            ));
        }
        positive(
            "scenario.energy.compute_j_per_gcycle",
            self.energy.compute_j_per_gcycle,
        )?;
        positive(
            "scenario.energy.hover_drain_per_step",
            self.energy.hover_drain_per_step,
        )?;
        positive(
            "scenario.normalization.latency_ref_ms",
            self.normalization.latency_ref_ms,
        )?;
        positive(
            "scenario.normalization.energy_ref",
            self.normalization.energy_ref,
        )?;
        Ok(())
    }

    /// Loads a scenario-only TOML file. Unknown keys are rejected.
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub config: ScenarioConfig,
}

impl World {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn uav_count(&self) -> usize {
        self.config.uav_count
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id].kind
    }

    pub fn uav_ids(&self) -> std::ops::Range<NodeId> {
        0..self.config.uav_count
    }

    pub fn satellite_ids(&self) -> std::ops::Range<NodeId> {
        let start = self.config.uav_count;
        start..start + self.config.satellite_count
    }

    pub fn ground_ids(&self) -> std::ops::Range<NodeId> {
        let start = self.config.uav_count + self.config.satellite_count;
        start..start + self.config.ground_station_count
    }

    pub fn link(&self, class: LinkClass) -> &Link {
        &self.links[class.index()]
    }

    /// First-hop link between the user and an access node.
    ///
    /// Panics if `access` is a satellite; satellites are never access nodes.
    pub fn access_link(&self, access: NodeId) -> &Link {
        match self.kind(access) {
            NodeKind::Uav => self.link(LinkClass::UserUav),
            NodeKind::GroundBaseStation => self.link(LinkClass::UserGround),
            NodeKind::LeoSatellite => panic!("satellite {access} cannot be an access node"),
        }
    }

    pub fn capacity(&self, id: NodeId) -> f64 {
        self.nodes[id].compute_capacity
    }

    pub fn initial_energies(&self) -> Vec<f64> {
        self.config.uav_initial_energy.clone()
    }

    /// Length of the observation vector under the canonical layout.
    pub fn observation_dim(&self) -> usize {
        3 + self.uav_count() + self.node_count() + 3 + 1
    }

    /// Length of the continuous action vector (node scores, relay, power).
    pub fn action_dim(&self) -> usize {
        self.node_count() + 2
    }
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<World> {
    config.validate()?;
    let mut nodes = Vec::with_capacity(
        config.uav_count + config.satellite_count + config.ground_station_count,
    );
    for &energy in &config.uav_initial_energy {
        nodes.push(Node {
            id: nodes.len(),
            kind: NodeKind::Uav,
            compute_capacity: config.compute.uav,
            energy_fraction: Some(energy),
            backlog: 0.0,
        });
    }
    for _ in 0..config.satellite_count {
        nodes.push(Node {
            id: nodes.len(),
            kind: NodeKind::LeoSatellite,
            compute_capacity: config.compute.satellite,
            energy_fraction: None,
            backlog: 0.0,
        });
    }
    for _ in 0..config.ground_station_count {
        nodes.push(Node {
            id: nodes.len(),
            kind: NodeKind::GroundBaseStation,
            compute_capacity: config.compute.ground,
            energy_fraction: None,
            backlog: 0.0,
        });
    }
    let spec = |class: LinkClass| -> LinkSpec {
        match class {
            LinkClass::UserUav => config.links.user_uav,
            LinkClass::UserGround => config.links.user_ground,
            LinkClass::AccessSatellite => config.links.access_satellite,
            LinkClass::AccessGroundEdge => config.links.access_ground_edge,
        }
    };
    let links = LinkClass::ALL
        .iter()
        .map(|&class| {
            let s = spec(class);
            Link {
                class,
                rate_mbps: s.rate_mbps,
                propagation_ms: s.propagation_ms,
            }
        })
        .collect();
    Ok(World {
        nodes,
        links,
        config: config.clone(),
    })
}

pub fn generate_tasks(seed: u64, config: &ScenarioConfig) -> Result<Vec<Task>> {
    config.validate()?;
    let mut rng = Pcg64::seed_from_u64(seed);
    let r = &config.tasks;
    Ok((0..config.task_count)
        .map(|id| Task {
            id,
            data_in: r.data_in_mb.sample(&mut rng),
            compute_demand: r.compute_gcycles.sample(&mut rng),
            result_out: r.result_out_mb.sample(&mut rng),
            deadline: r.deadline_ms.sample(&mut rng),
        })
        .collect())
}

/// Relay class used when a satellite processes a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelayClass {
    Ground,
    Uav,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PowerLevel {
    /// Half of the maximum transmit power.
    Low,
    High,
}

impl PowerLevel {
    pub fn watts(self, energy: &EnergyModel) -> f64 {
        match self {
            PowerLevel::Low => 0.5 * energy.power_max_w,
            PowerLevel::High => energy.power_max_w,
        }
    }
}

/// One entry of the discrete action catalogue. The concrete relay node is
/// resolved against the live state at decode time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CatalogueEntry {
    pub processing: NodeId,
    pub relay: Option<RelayClass>,
    pub power: PowerLevel,
}

/// Full discrete catalogue ordered by (processing id, relay class, power).
pub fn enumerate_discrete_actions(world: &World) -> Vec<CatalogueEntry> {
    let powers = [PowerLevel::Low, PowerLevel::High];
    let mut out = Vec::new();
    for node in &world.nodes {
        let relays: &[Option<RelayClass>] = match node.kind {
            NodeKind::LeoSatellite => &[Some(RelayClass::Ground), Some(RelayClass::Uav)],
            NodeKind::Uav | NodeKind::GroundBaseStation => &[None],
        };
        for &relay in relays {
            for &power in &powers {
                out.push(CatalogueEntry {
                    processing: node.id,
                    relay,
                    power,
                });
            }
        }
    }
    out
}
