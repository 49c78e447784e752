//! Plan phase: operator intent, rule-table reward shaping, planner
//! selection, and the advisor seam where a generative component may attach.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::agents::{Agent, AgentConfig, D3pgAgent, DdpgAgent, DqnAgent};
use crate::env::{enumerate_discrete_actions, Normalization, World};
use crate::error::{Error, Result};
use crate::learner::KpiWindow;
use crate::perceiver::{EnergyLevel, SemanticState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Intent {
    pub target_latency_ms: f64,
    pub uav_energy_floor: f64,
    /// Free text, logged verbatim and never parsed.
    pub objective: String,
}

impl Default for Intent {
    fn default() -> Self {
        Self {
            target_latency_ms: 1000.0,
            uav_energy_floor: 0.15,
            objective: "minimize service latency while ensuring UAV energy sustainability".into(),
        }
    }
}

impl Intent {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_latency_ms > 0.0) {
            return Err(Error::config("intent.target_latency_ms", "must be strictly positive"));
        }
        if !(0.0..1.0).contains(&self.uav_energy_floor) {
            return Err(Error::config("intent.uav_energy_floor", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Multipliers {
    pub adequate: f64,
    pub constrained: f64,
    pub critical: f64,
}

impl Default for Multipliers {
    fn default() -> Self {
        Self {
            adequate: 1.0,
            constrained: 2.0,
            critical: 4.0,
        }
    }
}

impl Multipliers {
    pub fn get(&self, level: EnergyLevel) -> f64 {
        match level {
            EnergyLevel::Adequate => self.adequate,
            EnergyLevel::Constrained => self.constrained,
            EnergyLevel::Critical => self.critical,
        }
    }

    fn set(&mut self, level: EnergyLevel, value: f64) {
        match level {
            EnergyLevel::Adequate => self.adequate = value,
            EnergyLevel::Constrained => self.constrained = value,
            EnergyLevel::Critical => self.critical = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingRuleTable {
    pub multipliers: Multipliers,
    pub lambda_base: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for ShapingRuleTable {
    fn default() -> Self {
        Self {
            multipliers: Multipliers::default(),
            lambda_base: 1.0,
            lambda_min: 0.25,
            lambda_max: 8.0,
        }
    }
}

impl ShapingRuleTable {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let m = &self.multipliers;
        if !(m.adequate > 0.0 && m.adequate < m.constrained && m.constrained < m.critical) {
            return Err(format!(
                "multipliers must be positive and strictly increasing toward Critical \
                 (adequate {}, constrained {}, critical {})",
                m.adequate, m.constrained, m.critical
            ));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max) {
            return Err("need 0 < lambda_min <= lambda_max".into());
        }
        if !(self.lambda_min..=self.lambda_max).contains(&self.lambda_base) {
            return Err(format!(
                "lambda_base {} outside [{}, {}]",
                self.lambda_base, self.lambda_min, self.lambda_max
            ));
        }
        Ok(())
    }

    pub fn lambda_for(&self, level: EnergyLevel) -> f64 {
        (self.lambda_base * self.multipliers.get(level)).clamp(self.lambda_min, self.lambda_max)
    }
}

/// Where a coefficient came from; enough to recompute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub episode: usize,
    pub semantic_label: String,
    pub rule_row: EnergyLevel,
    pub lambda_base: f64,
    pub multiplier: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `shaped` when the rule table applied, `fixed` when shaping was bypassed.
    pub source: String,
}

impl Provenance {
    pub fn recompute(&self) -> f64 {
        if self.source == "fixed" {
            self.lambda_base
        } else {
            (self.lambda_base * self.multiplier).clamp(self.lambda_min, self.lambda_max)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda: f64,
    pub latency_ref_ms: f64,
    pub energy_ref: f64,
    /// Ceiling used to normalize the coefficient in observations.
    pub lambda_max: f64,
    pub provenance: Option<Provenance>,
}

impl RewardConfig {
    pub fn fixed(lambda: f64, latency_ref_ms: f64, energy_ref: f64, lambda_max: f64) -> Self {
        Self {
            lambda,
            latency_ref_ms,
            energy_ref,
            lambda_max,
            provenance: None,
        }
    }
}

/// Rule-table shaping of the energy penalty coefficient.
pub fn shape_reward(
    semantic: &SemanticState,
    _intent: &Intent,
    table: &ShapingRuleTable,
    norm: &Normalization,
    episode: usize,
) -> RewardConfig {
    let level = semantic.uav_energy_level;
    RewardConfig {
        lambda: table.lambda_for(level),
        latency_ref_ms: norm.latency_ref_ms,
        energy_ref: norm.energy_ref,
        lambda_max: table.lambda_max,
        provenance: Some(Provenance {
            episode,
            semantic_label: semantic.label(),
            rule_row: level,
            lambda_base: table.lambda_base,
            multiplier: table.multipliers.get(level),
            lambda_min: table.lambda_min,
            lambda_max: table.lambda_max,
            source: "shaped".into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlannerChoice {
    LlmShapedD3pg,
    FixedD3pg,
    LlmShapedDdpg,
    LlmShapedDqn,
    Greedy,
}

impl PlannerChoice {
    pub const ALL: [PlannerChoice; 5] = [
        PlannerChoice::LlmShapedD3pg,
        PlannerChoice::FixedD3pg,
        PlannerChoice::LlmShapedDdpg,
        PlannerChoice::LlmShapedDqn,
        PlannerChoice::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerChoice::LlmShapedD3pg => "LlmShapedD3pg",
            PlannerChoice::FixedD3pg => "FixedD3pg",
            PlannerChoice::LlmShapedDdpg => "LlmShapedDdpg",
            PlannerChoice::LlmShapedDqn => "LlmShapedDqn",
            PlannerChoice::Greedy => "Greedy",
        }
    }

    /// Stable tag mixed into per-run seeds.
    pub(crate) fn tag(self) -> u64 {
        self as u64 + 1
    }

    pub fn uses_diffusion(self) -> bool {
        matches!(self, PlannerChoice::LlmShapedD3pg | PlannerChoice::FixedD3pg)
    }
}

impl fmt::Display for PlannerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        PlannerChoice::ALL
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Plan(format!("unknown method `{s}`")))
    }
}

/// How a planner's episodes obtain their penalty coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapingMode {
    Shaped,
    /// Pinned to the base coefficient captured when the planner was selected.
    Fixed(f64),
    /// Decisions ignore the coefficient; episodes are still scored with the
    /// shaped reward.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlannerMode {
    Train,
    /// Load frozen parameters from `<dir>/<artifact name>`.
    Evaluate { artifacts: PathBuf },
}

pub struct PlannerHandle {
    pub choice: PlannerChoice,
    pub shaping: ShapingMode,
    pub agent: Agent,
    pub training: bool,
}

impl PlannerHandle {
    /// Applies this planner's shaping behavior to the orchestrator's proposal.
    pub fn reward_config(&self, shaped: RewardConfig) -> RewardConfig {
        match self.shaping {
            ShapingMode::Shaped | ShapingMode::Ignored => shaped,
            ShapingMode::Fixed(lambda) => {
                let provenance = shaped.provenance.map(|p| Provenance {
                    lambda_base: lambda,
                    multiplier: 1.0,
                    source: "fixed".into(),
                    ..p
                });
                RewardConfig {
                    lambda,
                    provenance,
                    ..shaped
                }
            }
        }
    }
}

pub fn artifact_file_name(choice: PlannerChoice, seed: u64) -> String {
    format!("{}-seed{}.bin", choice.name(), seed)
}

/// Validated advisor suggestion: replacement multipliers per energy level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableUpdate {
    pub multipliers: BTreeMap<EnergyLevel, f64>,
    pub rationale: String,
}

/// Pluggable source of rule-table suggestions.
pub trait Advisor: Send {
    fn propose(&self, semantic: &SemanticState, intent: &Intent, history: &KpiWindow) -> Option<TableUpdate>;
}

/// Deterministic default: the rule table is authoritative, never suggests.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTableAdvisor;

impl Advisor for RuleTableAdvisor {
    fn propose(&self, _: &SemanticState, _: &Intent, _: &KpiWindow) -> Option<TableUpdate> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdvisorOutcome {
    NoChange,
    Adopted { before: ShapingRuleTable, update: TableUpdate },
    Rejected { update: TableUpdate, reason: String },
}

pub struct Orchestrator {
    pub intent: Intent,
    pub table: ShapingRuleTable,
    pub normalization: Normalization,
    advisor: Box<dyn Advisor>,
}

impl Orchestrator {
    pub fn new(intent: Intent, table: ShapingRuleTable, normalization: Normalization) -> Self {
        Self::with_advisor(intent, table, normalization, Box::new(RuleTableAdvisor))
    }

    pub fn with_advisor(
        intent: Intent,
        table: ShapingRuleTable,
        normalization: Normalization,
        advisor: Box<dyn Advisor>,
    ) -> Self {
        Self {
            intent,
            table,
            normalization,
            advisor,
        }
    }

    pub fn shape_reward(&self, semantic: &SemanticState, episode: usize) -> RewardConfig {
        shape_reward(semantic, &self.intent, &self.table, &self.normalization, episode)
    }

    /// Checks a suggestion against the table invariants and adopts it when valid.
    pub fn consider(&mut self, update: TableUpdate) -> AdvisorOutcome {
        let mut candidate = self.table.clone();
        for (&level, &value) in &update.multipliers {
            candidate.multipliers.set(level, value);
        }
        match candidate.validate() {
            Ok(()) => {
                info!(rationale = %update.rationale, "advisor suggestion adopted");
                let before = std::mem::replace(&mut self.table, candidate);
                AdvisorOutcome::Adopted { before, update }
            }
            Err(reason) => {
                warn!(%reason, "advisor suggestion rejected");
                AdvisorOutcome::Rejected { update, reason }
            }
        }
    }

    pub fn advisor_propose(&mut self, semantic: &SemanticState, history: &KpiWindow) -> AdvisorOutcome {
        match self.advisor.propose(semantic, &self.intent, history) {
            None => AdvisorOutcome::NoChange,
            Some(update) => self.consider(update),
        }
    }

    pub fn select_planner(
        &self,
        choice: PlannerChoice,
        mode: &PlannerMode,
        world: &World,
        config: &AgentConfig,
        seed: u64,
    ) -> Result<PlannerHandle> {
        let obs = world.observation_dim();
        let act = world.action_dim();
        let agent_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ choice.tag();
        let agent = match choice {
            PlannerChoice::LlmShapedD3pg | PlannerChoice::FixedD3pg => {
                Agent::D3pg(Box::new(D3pgAgent::new(obs, act, config, agent_seed)?))
            }
            PlannerChoice::LlmShapedDdpg => Agent::Ddpg(Box::new(DdpgAgent::new(obs, act, config, agent_seed))),
            PlannerChoice::LlmShapedDqn => {
                let n = enumerate_discrete_actions(world).len();
                Agent::Dqn(Box::new(DqnAgent::new(obs, n, config, agent_seed)))
            }
            PlannerChoice::Greedy => Agent::Greedy,
        };
        let shaping = match choice {
            PlannerChoice::FixedD3pg => ShapingMode::Fixed(self.table.lambda_base),
            PlannerChoice::Greedy => ShapingMode::Ignored,
            _ => ShapingMode::Shaped,
        };
        let mut handle = PlannerHandle {
            choice,
            shaping,
            agent,
            training: matches!(mode, PlannerMode::Train),
        };
        if let PlannerMode::Evaluate { artifacts } = mode {
            if handle.agent.is_learning() {
                let path = artifacts.join(artifact_file_name(choice, seed));
                if !path.exists() {
                    return Err(Error::MissingArtifact(path));
                }
                handle.agent.load(&path)?;
            }
        }
        Ok(handle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_scenario, ScenarioConfig};
    use crate::perceiver::{GroundCongestion, SatelliteBackup};

    fn semantic(level: EnergyLevel) -> SemanticState {
        SemanticState {
            uav_energy_level: level,
            satellite_backup: SatelliteBackup::AvailableHighLatency,
            ground_congestion: GroundCongestion::Low,
        }
    }

    fn orchestrator() -> Orchestrator {
        Orchestrator::new(Intent::default(), ShapingRuleTable::default(), Normalization::default())
    }

    #[test]
    fn shaping_table_rows() {
        let o = orchestrator();
        assert_eq!(o.shape_reward(&semantic(EnergyLevel::Adequate), 0).lambda, 1.0);
        assert_eq!(o.shape_reward(&semantic(EnergyLevel::Constrained), 0).lambda, 2.0);
        let rc = o.shape_reward(&semantic(EnergyLevel::Critical), 3);
        assert_eq!(rc.lambda, 4.0);
        let p = rc.provenance.unwrap();
        assert_eq!(p.episode, 3);
        assert_eq!(p.recompute(), 4.0);

        let mut table = ShapingRuleTable::default();
        table.multipliers.critical = 20.0;
        let rc = shape_reward(
            &semantic(EnergyLevel::Critical),
            &Intent::default(),
            &table,
            &Normalization::default(),
            0,
        );
        assert_eq!(rc.lambda, 8.0);
    }

    #[test]
    fn planner_shaping_modes() {
        let o = orchestrator();
        let world = build_scenario(&ScenarioConfig::default()).unwrap();
        let cfg = AgentConfig::default();
        let critical = o.shape_reward(&semantic(EnergyLevel::Critical), 0);
        let fixed = o
            .select_planner(PlannerChoice::FixedD3pg, &PlannerMode::Train, &world, &cfg, 0)
            .unwrap();
        let rc = fixed.reward_config(critical.clone());
        assert_eq!(rc.lambda, 1.0);
        assert_eq!(rc.provenance.as_ref().unwrap().recompute(), 1.0);
        let shaped = o
            .select_planner(PlannerChoice::LlmShapedD3pg, &PlannerMode::Train, &world, &cfg, 0)
            .unwrap();
        assert_eq!(shaped.reward_config(critical.clone()).lambda, 4.0);
        let greedy = o
            .select_planner(PlannerChoice::Greedy, &PlannerMode::Train, &world, &cfg, 0)
            .unwrap();
        assert_eq!(greedy.shaping, ShapingMode::Ignored);
        assert!(!greedy.agent.is_learning());
    }

    #[test]
    fn evaluation_requires_artifact() {
        let o = orchestrator();
        let world = build_scenario(&ScenarioConfig::default()).unwrap();
        let mode = PlannerMode::Evaluate {
            artifacts: PathBuf::from("/definitely/missing"),
        };
        let err = o
            .select_planner(PlannerChoice::LlmShapedDqn, &mode, &world, &AgentConfig::default(), 2)
            .err()
            .unwrap();
        assert!(err.to_string().contains("/definitely/missing/LlmShapedDqn-seed2.bin"), "{err}");
        assert!(o
            .select_planner(PlannerChoice::Greedy, &mode, &world, &AgentConfig::default(), 2)
            .is_ok());
    }

    #[test]
    fn advisor_validation() {
        let mut o = orchestrator();
        let history = KpiWindow::new(20);
        assert_eq!(
            o.advisor_propose(&semantic(EnergyLevel::Critical), &history),
            AdvisorOutcome::NoChange
        );
        let bad = TableUpdate {
            multipliers: BTreeMap::from([(EnergyLevel::Critical, 0.5)]),
            rationale: "test".into(),
        };
        assert!(matches!(o.consider(bad), AdvisorOutcome::Rejected { .. }));
        assert_eq!(o.table, ShapingRuleTable::default());
        let good = TableUpdate {
            multipliers: BTreeMap::from([(EnergyLevel::Critical, 5.0)]),
            rationale: "test".into(),
        };
        assert!(matches!(o.consider(good), AdvisorOutcome::Adopted { .. }));
        assert_eq!(o.table.multipliers.critical, 5.0);
    }

    #[test]
    fn method_names_parse() {
        for c in PlannerChoice::ALL {
            assert_eq!(c.name().parse::<PlannerChoice>().unwrap(), c);
        }
        assert_eq!("llm-shaped-d3pg".parse::<PlannerChoice>().unwrap(), PlannerChoice::LlmShapedD3pg);
        assert!("ppo".parse::<PlannerChoice>().is_err());
    }
}
