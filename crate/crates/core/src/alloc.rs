//! Closed-form bandwidth and compute sharing among concurrently active tasks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{LinkClass, NodeId, NodeKind, Task, World};
use crate::error::{Error, Result};
use crate::sim::PlacementDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

/// One directed link instance; `endpoint` is the access node the link hangs off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkRef {
    pub class: LinkClass,
    pub endpoint: NodeId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandSet {
    /// Megabits per task on each directed link.
    pub links: BTreeMap<LinkRef, Vec<(usize, f64)>>,
    /// Gigacycles per task on each node.
    pub nodes: BTreeMap<NodeId, Vec<(usize, f64)>>,
}

fn push_unique(list: &mut Vec<(usize, f64)>, task: usize, amount: f64, what: &str) -> Result<()> {
    if !(amount > 0.0 && amount.is_finite()) {
        return Err(Error::InvalidDecision(format!(
            "{what} demand for task {task} must be positive, got {amount}"
        )));
    }
    if list.iter().any(|&(t, _)| t == task) {
        return Err(Error::InvalidDecision(format!("task {task} listed twice on one {what}")));
    }
    list.push((task, amount));
    Ok(())
}

impl DemandSet {
    pub fn is_empty(&self) -> bool {
        self.links.is_empty() && self.nodes.is_empty()
    }

    pub fn add_link(&mut self, link: LinkRef, task: usize, megabits: f64) -> Result<()> {
        push_unique(self.links.entry(link).or_default(), task, megabits, "link")
    }

    pub fn add_compute(&mut self, node: NodeId, task: usize, gigacycles: f64) -> Result<()> {
        push_unique(self.nodes.entry(node).or_default(), task, gigacycles, "node")
    }

    /// Adds the resources a placed task touches, on the same path the
    /// simulator charges: access link both ways, the satellite backhaul when
    /// relayed, and the processing node.
    pub fn add_placement(&mut self, world: &World, task: &Task, decision: &PlacementDecision) -> Result<()> {
        let access = decision.access_node;
        let access_class = match world.kind(access) {
            NodeKind::Uav => LinkClass::UserUav,
            NodeKind::GroundBaseStation => LinkClass::UserGround,
            NodeKind::LeoSatellite => {
                return Err(Error::InvalidDecision(format!("satellite {access} cannot be an access node")))
            }
        };
        let mut hops = vec![access_class];
        if decision.is_relayed() {
            hops.push(LinkClass::AccessSatellite);
        }
        for class in hops {
            for (direction, mb) in [(Direction::Up, task.data_in), (Direction::Down, task.result_out)] {
                let link = LinkRef {
                    class,
                    endpoint: access,
                    direction,
                };
                self.add_link(link, task.id, mb)?;
            }
        }
        self.add_compute(decision.processing_node, task.id, task.compute_demand)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub link: LinkRef,
    pub megabits: f64,
    pub rate_mbps: f64,
    pub propagation_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeShare {
    pub node: NodeId,
    pub gigacycles: f64,
    pub rate_gcps: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskAllocation {
    pub transfers: Vec<Transfer>,
    pub compute: Vec<ComputeShare>,
    /// Set by [`certify_qos`].
    pub feasible: Option<bool>,
}

impl TaskAllocation {
    pub fn latency_ms(&self) -> f64 {
        let comm: f64 = self
            .transfers
            .iter()
            .map(|t| t.megabits / t.rate_mbps * 1000.0 + t.propagation_ms)
            .sum();
        let comp: f64 = self.compute.iter().map(|c| c.gigacycles / c.rate_gcps * 1000.0).sum();
        comm + comp
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub tasks: BTreeMap<usize, TaskAllocation>,
}

impl Allocation {
    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn link_totals(&self) -> BTreeMap<LinkRef, f64> {
        let mut out = BTreeMap::new();
        for t in self.tasks.values() {
            for x in &t.transfers {
                *out.entry(x.link).or_insert(0.0) += x.rate_mbps;
            }
        }
        out
    }

    pub fn node_totals(&self) -> BTreeMap<NodeId, f64> {
        let mut out = BTreeMap::new();
        for t in self.tasks.values() {
            for c in &t.compute {
                *out.entry(c.node).or_insert(0.0) += c.rate_gcps;
            }
        }
        out
    }
}

/// Equal share of each link among its contenders; node compute split in
/// proportion to demand.
pub fn allocate(demands: &DemandSet, world: &World) -> Allocation {
    let mut out = Allocation::default();
    for (link, list) in &demands.links {
        let spec = world.link(link.class);
        let share = spec.rate_mbps / list.len() as f64;
        for &(task, megabits) in list {
            out.tasks.entry(task).or_default().transfers.push(Transfer {
                link: *link,
                megabits,
                rate_mbps: share,
                propagation_ms: spec.propagation_ms,
            });
        }
    }
    for (&node, list) in &demands.nodes {
        let capacity = world.capacity(node);
        let total: f64 = list.iter().map(|&(_, d)| d).sum();
        for &(task, gigacycles) in list {
            out.tasks.entry(task).or_default().compute.push(ComputeShare {
                node,
                gigacycles,
                rate_gcps: capacity * gigacycles / total,
            });
        }
    }
    out
}

/// Marks each allocated task feasible when its end-to-end latency under the
/// allocation is within its deadline.
pub fn certify_qos(allocation: &mut Allocation, tasks: &[Task]) -> Result<Vec<(usize, bool)>> {
    let deadlines: BTreeMap<usize, f64> = tasks.iter().map(|t| (t.id, t.deadline)).collect();
    let mut out = Vec::with_capacity(allocation.tasks.len());
    for (&id, alloc) in allocation.tasks.iter_mut() {
        let deadline = *deadlines.get(&id).ok_or(Error::UnknownTask(id))?;
        let ok = alloc.latency_ms() <= deadline;
        alloc.feasible = Some(ok);
        out.push((id, ok));
    }
    Ok(out)
}
