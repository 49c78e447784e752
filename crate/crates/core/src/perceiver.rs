//! Monitor and Analyze: telemetry capture and the enumerated semantic state.

use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::env::World;
use crate::error::{Error, Result};
use crate::sim::EnvState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EnergyLevel {
    Critical,
    Constrained,
    Adequate,
}

impl EnergyLevel {
    pub const ALL: [EnergyLevel; 3] = [
        EnergyLevel::Critical,
        EnergyLevel::Constrained,
        EnergyLevel::Adequate,
    ];

    pub fn one_hot(self) -> [f64; 3] {
        match self {
            EnergyLevel::Critical => [1.0, 0.0, 0.0],
            EnergyLevel::Constrained => [0.0, 1.0, 0.0],
            EnergyLevel::Adequate => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SatelliteBackup {
    AvailableHighLatency,
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundCongestion {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticState {
    pub uav_energy_level: EnergyLevel,
    pub satellite_backup: SatelliteBackup,
    pub ground_congestion: GroundCongestion,
}

impl SemanticState {
    /// Compact label, e.g. `Critical/AvailableHighLatency/Low`.
    pub fn label(&self) -> String {
        format!(
            "{:?}/{:?}/{:?}",
            self.uav_energy_level, self.satellite_backup, self.ground_congestion
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub critical_below: f64,
    pub constrained_below: f64,
    pub congestion_backlog_seconds: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            critical_below: 0.30,
            constrained_below: 0.50,
            congestion_backlog_seconds: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.critical_below
            && self.critical_below < self.constrained_below
            && self.constrained_below < 1.0)
        {
            return Err(Error::config(
                "thresholds",
                "require 0 < critical_below < constrained_below < 1",
            ));
        }
        if !(self.congestion_backlog_seconds > 0.0) {
            return Err(Error::config(
                "thresholds.congestion_backlog_seconds",
                "must be strictly positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub uav_energies: Vec<f64>,
    pub backlogs: Vec<f64>,
    pub step: usize,
    /// Mean latency over the most recent steps of the episode; 0 before the first step.
    pub recent_mean_latency_ms: f64,
}

/// Number of trailing steps averaged into `Telemetry::recent_mean_latency_ms`.
pub const LATENCY_WINDOW: usize = 10;

pub fn monitor(env: &EnvState) -> Telemetry {
    let recent = env.latency_history();
    let tail = &recent[recent.len().saturating_sub(LATENCY_WINDOW)..];
    let recent_mean_latency_ms = if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    Telemetry {
        uav_energies: env.energies().to_vec(),
        backlogs: env.backlogs().to_vec(),
        step: env.step_index(),
        recent_mean_latency_ms,
    }
}

pub fn analyze(t: &Telemetry, th: &Thresholds, world: &World) -> SemanticState {
    let min_energy = t.uav_energies.iter().copied().fold(f64::INFINITY, f64::min);
    let uav_energy_level = if t.uav_energies.is_empty() {
        debug!("no UAVs in telemetry; energy level defaults to Adequate");
        EnergyLevel::Adequate
    } else if min_energy < th.critical_below {
        EnergyLevel::Critical
    } else if min_energy < th.constrained_below {
        EnergyLevel::Constrained
    } else {
        EnergyLevel::Adequate
    };

    let satellite_backup = if world.satellite_ids().is_empty() {
        SatelliteBackup::Unavailable
    } else {
        SatelliteBackup::AvailableHighLatency
    };

    let ground = world.ground_ids();
    let ground_congestion = if ground.is_empty() {
        GroundCongestion::Low
    } else {
        let mean_seconds = ground
            .clone()
            .map(|id| t.backlogs[id] / world.capacity(id))
            .sum::<f64>()
            / ground.len() as f64;
        if mean_seconds > th.congestion_backlog_seconds {
            GroundCongestion::High
        } else {
            GroundCongestion::Low
        }
    };

    SemanticState {
        uav_energy_level,
        satellite_backup,
        ground_congestion,
    }
}

pub fn render_summary(s: &SemanticState) -> String {
    use EnergyLevel::*;
    use SatelliteBackup::*;
    let constrained = matches!(s.uav_energy_level, Critical | Constrained);
    let mut text = match (constrained, s.satellite_backup) {
        (true, AvailableHighLatency) => {
            return "UAV cluster energy-constrained with satellite backup available but high latency"
                .to_string()
        }
        (true, Unavailable) => "UAV cluster energy-constrained with no satellite backup".to_string(),
        (false, AvailableHighLatency) => {
            "UAV cluster energy adequate; satellite backup available".to_string()
        }
        (false, Unavailable) => "UAV cluster energy adequate; no satellite backup".to_string(),
    };
    if s.ground_congestion == GroundCongestion::High {
        text.push_str("; ground segment congested");
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_scenario, ScenarioConfig};

    fn world() -> World {
        build_scenario(&ScenarioConfig::default()).unwrap()
    }

    fn telemetry(energies: &[f64]) -> Telemetry {
        Telemetry {
            uav_energies: energies.to_vec(),
            backlogs: vec![0.0; 10],
            step: 0,
            recent_mean_latency_ms: 0.0,
        }
    }

    #[test]
    fn energy_labels() {
        let w = world();
        let th = Thresholds::default();
        let s = analyze(&telemetry(&[0.25, 0.8, 0.6, 0.45, 0.9]), &th, &w);
        assert_eq!(s.uav_energy_level, EnergyLevel::Critical);
        let s = analyze(&telemetry(&[0.8; 5]), &th, &w);
        assert_eq!(
            s,
            SemanticState {
                uav_energy_level: EnergyLevel::Adequate,
                satellite_backup: SatelliteBackup::AvailableHighLatency,
                ground_congestion: GroundCongestion::Low,
            }
        );
        let s = analyze(&telemetry(&[0.5; 5]), &th, &w);
        assert_eq!(s.uav_energy_level, EnergyLevel::Adequate);
        let s = analyze(&telemetry(&[0.3, 0.9, 0.9, 0.9, 0.9]), &th, &w);
        assert_eq!(s.uav_energy_level, EnergyLevel::Constrained);
    }

    #[test]
    fn congestion_and_backup() {
        let w = world();
        let mut t = telemetry(&[0.9; 5]);
        // ground capacity 20 Gcyc/s: 11 Gcyc on each is 0.55 s of work
        t.backlogs[8] = 11.0;
        t.backlogs[9] = 11.0;
        let s = analyze(&t, &Thresholds::default(), &w);
        assert_eq!(s.ground_congestion, GroundCongestion::High);
        t.backlogs[9] = 9.0;
        let s = analyze(&t, &Thresholds::default(), &w);
        assert_eq!(s.ground_congestion, GroundCongestion::Low);

        let cfg = ScenarioConfig {
            satellite_count: 0,
            uav_count: 0,
            uav_initial_energy: vec![],
            ..ScenarioConfig::default()
        };
        let w = build_scenario(&cfg).unwrap();
        let t = Telemetry {
            uav_energies: vec![],
            backlogs: vec![0.0; 2],
            step: 0,
            recent_mean_latency_ms: 0.0,
        };
        let s = analyze(&t, &Thresholds::default(), &w);
        assert_eq!(s.uav_energy_level, EnergyLevel::Adequate);
        assert_eq!(s.satellite_backup, SatelliteBackup::Unavailable);
    }

    #[test]
    fn summaries() {
        let s = SemanticState {
            uav_energy_level: EnergyLevel::Constrained,
            satellite_backup: SatelliteBackup::AvailableHighLatency,
            ground_congestion: GroundCongestion::Low,
        };
        assert_eq!(
            render_summary(&s),
            "UAV cluster energy-constrained with satellite backup available but high latency"
        );
        let critical_congested = SemanticState {
            uav_energy_level: EnergyLevel::Critical,
            ground_congestion: GroundCongestion::High,
            ..s
        };
        assert_eq!(render_summary(&critical_congested), render_summary(&s));
        let adequate = SemanticState {
            uav_energy_level: EnergyLevel::Adequate,
            ..s
        };
        assert_eq!(
            render_summary(&adequate),
            "UAV cluster energy adequate; satellite backup available"
        );
        assert_eq!(render_summary(&adequate), render_summary(&adequate));
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::default().validate().is_ok());
        let bad = Thresholds {
            critical_below: 0.6,
            ..Thresholds::default()
        };
        assert!(bad.validate().is_err());
    }
}
