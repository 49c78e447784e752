//! Slow-timescale feedback: judges KPI windows against the intent and nudges
//! the base penalty coefficient.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{Intent, ShapingRuleTable};

pub const DEFAULT_WINDOW: usize = 20;
const LATENCY_MARGIN: f64 = 1.1;
const LATENCY_STEP: f64 = 0.8;
const ENERGY_STEP: f64 = 1.25;
const LATENCY_WINDOWS_TO_ACT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeKpi {
    pub episode: usize,
    pub mean_latency_ms: f64,
    pub min_uav_end_energy: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiWindow {
    capacity: usize,
    entries: VecDeque<EpisodeKpi>,
}

impl KpiWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window length must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn push(&mut self, kpi: EpisodeKpi) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(kpi);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn entries(&self) -> impl Iterator<Item = &EpisodeKpi> {
        self.entries.iter()
    }

    pub fn mean_latency(&self) -> f64 {
        self.entries.iter().map(|k| k.mean_latency_ms).sum::<f64>() / self.entries.len() as f64
    }

    pub fn min_energy(&self) -> f64 {
        self.entries
            .iter()
            .map(|k| k.min_uav_end_energy)
            .fold(f64::INFINITY, f64::min)
    }

    fn episode_range(&self) -> (usize, usize) {
        match (self.entries.front(), self.entries.back()) {
            (Some(a), Some(b)) => (a.episode, b.episode),
            _ => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviationKind {
    LatencyAboveTarget,
    EnergyFloorViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub kind: DeviationKind,
    /// Relative excess for latency, absolute shortfall below the floor for energy.
    pub magnitude: f64,
    pub first_episode: usize,
    pub last_episode: usize,
    pub action: String,
}

/// Judges a full window. A partial window is not judged.
pub fn record_feedback(window: &KpiWindow, intent: &Intent) -> Vec<Deviation> {
    if !window.is_full() {
        return Vec::new();
    }
    let (first_episode, last_episode) = window.episode_range();
    let mut out = Vec::new();
    let mean = window.mean_latency();
    if mean > LATENCY_MARGIN * intent.target_latency_ms {
        out.push(Deviation {
            kind: DeviationKind::LatencyAboveTarget,
            magnitude: mean / intent.target_latency_ms - 1.0,
            first_episode,
            last_episode,
            action: "recorded".into(),
        });
    }
    let min = window.min_energy();
    if min < intent.uav_energy_floor {
        out.push(Deviation {
            kind: DeviationKind::EnergyFloorViolated,
            magnitude: intent.uav_energy_floor - min,
            first_episode,
            last_episode,
            action: "recorded".into(),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableChange {
    pub lambda_base_before: f64,
    pub lambda_base_after: f64,
    pub reason: String,
    pub deviations: Vec<Deviation>,
}

/// Applies the adjustment rules to the deviations of the current streak of
/// windows. Energy violations take precedence over latency.
pub fn refine_config(deviations: &[Deviation], table: &ShapingRuleTable) -> (ShapingRuleTable, Option<TableChange>) {
    let energy = deviations
        .iter()
        .any(|d| d.kind == DeviationKind::EnergyFloorViolated);
    let latency = deviations
        .iter()
        .filter(|d| d.kind == DeviationKind::LatencyAboveTarget)
        .count();
    let (factor, reason) = if energy {
        (ENERGY_STEP, "UAV energy floor violated")
    } else if latency >= LATENCY_WINDOWS_TO_ACT {
        (LATENCY_STEP, "latency above target in consecutive windows")
    } else {
        return (table.clone(), None);
    };
    let before = table.lambda_base;
    let after = (before * factor).clamp(table.lambda_min, table.lambda_max);
    let mut next = table.clone();
    next.lambda_base = after;
    let change = TableChange {
        lambda_base_before: before,
        lambda_base_after: after,
        reason: reason.into(),
        deviations: deviations.to_vec(),
    };
    (next, Some(change))
}

/// Replays an audit trail of changes from an initial table.
pub fn replay_changes(initial: &ShapingRuleTable, changes: &[TableChange]) -> ShapingRuleTable {
    changes
        .iter()
        .fold(initial.clone(), |table, c| refine_config(&c.deviations, &table).0)
}

/// Stateful driver: fills non-overlapping windows, tracks the latency streak
/// and refines at most once per window.
#[derive(Debug, Clone)]
pub struct AdaptiveLearner {
    pub intent: Intent,
    window: KpiWindow,
    streak: Vec<Deviation>,
}

impl AdaptiveLearner {
    pub fn new(intent: Intent, window: usize) -> Self {
        Self {
            intent,
            window: KpiWindow::new(window),
            streak: Vec::new(),
        }
    }

    pub fn window(&self) -> &KpiWindow {
        &self.window
    }

    /// Records one episode; when the window closes, judges it and returns the
    /// refined table if anything changed.
    pub fn observe(
        &mut self,
        kpi: EpisodeKpi,
        table: &ShapingRuleTable,
    ) -> (Vec<Deviation>, Option<(ShapingRuleTable, TableChange)>) {
        self.window.push(kpi);
        if !self.window.is_full() {
            return (Vec::new(), None);
        }
        let deviations = record_feedback(&self.window, &self.intent);
        self.window.clear();
        let latency_now = deviations
            .iter()
            .any(|d| d.kind == DeviationKind::LatencyAboveTarget);
        if !latency_now {
            self.streak.retain(|d| d.kind != DeviationKind::LatencyAboveTarget);
        }
        self.streak.extend(deviations.iter().cloned());
        let (next, change) = refine_config(&self.streak, table);
        match change {
            Some(mut change) => {
                self.streak.clear();
                for d in &mut change.deviations {
                    d.action = format!(
                        "lambda_base {} -> {}",
                        change.lambda_base_before, change.lambda_base_after
                    );
                }
                (deviations, Some((next, change)))
            }
            None => {
                self.streak.retain(|d| d.kind == DeviationKind::LatencyAboveTarget);
                (deviations, None)
            }
        }
    }
}
