//! Experiment driver: runs the per-episode MAPE-K loop for every
//! (method, seed) pair and writes the convergence and summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::agents::{encode_continuous, AgentAction, AgentConfig};
use crate::env::{build_scenario, NodeKind, ScenarioConfig, World};
use crate::error::{Error, Result};
use crate::knowledge::{EpisodeRecord, KnowledgeStore, ProvenanceRecord, TrajectoryRecord};
use crate::learner::{AdaptiveLearner, EpisodeKpi, DEFAULT_WINDOW};
use crate::orchestrator::{
    artifact_file_name, AdvisorOutcome, Intent, Orchestrator, PlannerChoice, PlannerHandle, PlannerMode,
    RewardConfig, ShapingRuleTable,
};
use crate::perceiver::{analyze, monitor, render_summary, SemanticState, Thresholds};
use crate::sim::{EnvState, StepTrace};

/// Episodes averaged into the summary table.
pub const SUMMARY_WINDOW: usize = 100;
/// Seeds of greedy demonstration episodes live far from training seeds.
const DEMO_SEED_BASE: u64 = 1 << 40;
const EPISODE_SEED_STRIDE: u64 = 1_000_000;

pub const PHASES: [&str; 5] = ["monitor", "analyze", "plan", "execute", "knowledge"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub intent: Intent,
    pub shaping: ShapingRuleTable,
    pub thresholds: Thresholds,
    pub agent: AgentConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.intent.validate()?;
        self.shaping
            .validate()
            .map_err(|reason| Error::config("shaping", reason))?;
        self.thresholds.validate()?;
        self.agent.validate()
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub methods: Vec<PlannerChoice>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub mode: PlannerMode,
    /// Write per-step and per-phase JSON Lines traces.
    pub trace: bool,
}

impl ExperimentPlan {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            methods: PlannerChoice::ALL.to_vec(),
            episodes: 1000,
            seeds: (0..5).collect(),
            config: ExperimentConfig::default(),
            out_dir: out_dir.into(),
            mode: PlannerMode::Train,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Plan("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Plan("seed list is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Plan("method list is empty".into()));
        }
        self.config.validate()
    }

    /// Methods in canonical order, deduplicated.
    fn canonical_methods(&self) -> Vec<PlannerChoice> {
        PlannerChoice::ALL
            .into_iter()
            .filter(|c| self.methods.contains(c))
            .collect()
    }

    fn canonical_seeds(&self) -> Vec<u64> {
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        s
    }
}

pub fn episode_seed(run_seed: u64, episode: usize) -> u64 {
    run_seed.wrapping_mul(EPISODE_SEED_STRIDE).wrapping_add(episode as u64)
}

fn demo_seed(run_seed: u64, i: usize) -> u64 {
    DEMO_SEED_BASE + episode_seed(run_seed, i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub lambda: f64,
    pub reward: f64,
    pub mean_latency_ms: f64,
    /// Mean per-step normalized decision energy.
    pub mean_energy_norm: f64,
    pub total_uav_energy: f64,
    pub min_uav_end_energy: f64,
    pub deadline_met: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub method: PlannerChoice,
    pub seed: u64,
    pub episodes: Vec<EpisodeStats>,
    pub final_lambda_base: f64,
    pub table_changes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub mean_latency_ms: f64,
    pub mean_uav_energy_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub pairs: Vec<PairResult>,
    pub summary: Vec<SummaryRow>,
    pub convergence_csv: PathBuf,
    pub summary_csv: PathBuf,
}

/// Facts about the instantiated scenario, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub uav_count: usize,
    pub satellite_count: usize,
    pub ground_station_count: usize,
    pub uav_initial_energy: Vec<f64>,
    pub tasks_per_episode: usize,
    pub episodes: usize,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub intent_objective: String,
}

impl RunManifest {
    fn new(world: &World, plan: &ExperimentPlan) -> Self {
        let count = |k: NodeKind| world.nodes.iter().filter(|n| n.kind == k).count();
        Self {
            uav_count: count(NodeKind::Uav),
            satellite_count: count(NodeKind::LeoSatellite),
            ground_station_count: count(NodeKind::GroundBaseStation),
            uav_initial_energy: world.initial_energies(),
            tasks_per_episode: world.config.task_count,
            episodes: plan.episodes,
            methods: plan.canonical_methods().iter().map(|m| m.name().to_string()).collect(),
            seeds: plan.canonical_seeds(),
            intent_objective: plan.config.intent.objective.clone(),
        }
    }
}

struct Tracer {
    out: Option<BufWriter<File>>,
    path: PathBuf,
}

impl Tracer {
    fn new(path: PathBuf, enabled: bool) -> Result<Self> {
        let out = if enabled {
            Some(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
        } else {
            None
        };
        Ok(Self { out, path })
    }

    fn phase(&mut self, episode: usize, phase: &str) -> Result<()> {
        debug!(episode, phase, "phase");
        if let Some(w) = &mut self.out {
            writeln!(w, "{{\"episode\":{episode},\"phase\":\"{phase}\"}}").map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }

    fn step(&mut self, trace: &StepTrace) -> Result<()> {
        if let Some(w) = &mut self.out {
            let line = serde_json::to_string(trace)?;
            writeln!(w, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(mut w) = self.out {
            w.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }
}

fn perceive(env: &EnvState, thresholds: &Thresholds) -> SemanticState {
    analyze(&monitor(env), thresholds, env.world())
}

/// Greedy demonstrations logged to the knowledge store, then used to
/// warm-start the diffusion denoiser from the best of them.
fn demonstrate_and_warm_start(
    handle: &mut PlannerHandle,
    orch: &Orchestrator,
    world: &Arc<World>,
    plan: &ExperimentPlan,
    kb: &KnowledgeStore,
    seed: u64,
) -> Result<()> {
    let cfg = &plan.config.agent;
    for i in 0..cfg.demo_episodes {
        let mut env = EnvState::reset(world, demo_seed(seed, i), RewardConfig::fixed(1.0, 1.0, 1.0, 1.0));
        let semantic = perceive(&env, &plan.config.thresholds);
        env.set_reward_config(handle.reward_config(orch.shape_reward(&semantic, 0)));
        let mut pairs = Vec::with_capacity(env.tasks().len());
        let mut reward = 0.0;
        while !env.is_done() {
            let obs = env.observe(&semantic);
            let decision = crate::agents::greedy_select(&env)?;
            let action = encode_continuous(world, &decision);
            let r = env.step(decision)?.reward;
            handle.agent.remember(
                obs.clone(),
                AgentAction::Continuous(action.clone()),
                r,
                env.observe(&semantic),
                env.is_done(),
            );
            pairs.push((obs, action));
            reward += r;
        }
        kb.append_trajectory(&TrajectoryRecord {
            method: "demo".into(),
            seed,
            episode: i,
            pairs,
            episode_reward: reward,
        })?;
    }
    let top = kb.top_trajectories(cfg.pretrain_top_k)?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = top.into_iter().flat_map(|t| t.pairs).collect();
    if let crate::agents::Agent::D3pg(agent) = &mut handle.agent {
        let loss = agent.warm_start(&pairs)?;
        info!(method = %handle.choice, seed, pairs = pairs.len(), ?loss, "denoiser warm start");
    }
    Ok(())
}

fn run_pair(plan: &ExperimentPlan, world: &Arc<World>, method: PlannerChoice, seed: u64) -> Result<PairResult> {
    let cfg = &plan.config;
    let pair_name = format!("{}-seed{}", method.name(), seed);
    let kb = KnowledgeStore::open(plan.out_dir.join("knowledge").join(&pair_name))?;
    let mut tracer = if plan.trace {
        let dir = plan.out_dir.join("trace");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Tracer::new(dir.join(format!("{pair_name}.jsonl")), true)?
    } else {
        Tracer::new(PathBuf::new(), false)?
    };

    let mut orch = Orchestrator::new(cfg.intent.clone(), cfg.shaping.clone(), cfg.scenario.normalization.clone());
    let mut handle = orch.select_planner(method, &plan.mode, world, &cfg.agent, seed)?;
    if handle.training && method.uses_diffusion() {
        demonstrate_and_warm_start(&mut handle, &orch, world, plan, &kb, seed)?;
    }
    let mut learner = AdaptiveLearner::new(cfg.intent.clone(), DEFAULT_WINDOW);
    let name = method.name().to_string();
    let mut episodes = Vec::with_capacity(plan.episodes);
    let mut steps_total = 0usize;
    let mut table_changes = 0usize;
    let sigma = cfg.agent.exploration_sigma;

    for ep in 0..plan.episodes {
        let mut env = EnvState::reset(world, episode_seed(seed, ep), RewardConfig::fixed(1.0, 1.0, 1.0, 1.0));

        tracer.phase(ep, "monitor")?;
        let telemetry = monitor(&env);

        tracer.phase(ep, "analyze")?;
        let semantic = analyze(&telemetry, &cfg.thresholds, world);
        let summary_text = render_summary(&semantic);

        tracer.phase(ep, "plan")?;
        let rc = handle.reward_config(orch.shape_reward(&semantic, ep));
        let lambda = rc.lambda;
        if let Some(p) = &rc.provenance {
            kb.append_provenance(&ProvenanceRecord::Lambda {
                method: name.clone(),
                seed,
                lambda,
                provenance: p.clone(),
            })?;
        }
        env.set_reward_config(rc);
        match orch.advisor_propose(&semantic, learner.window()) {
            AdvisorOutcome::NoChange => {}
            outcome => kb.append_provenance(&ProvenanceRecord::Advisor {
                method: name.clone(),
                seed,
                episode: ep,
                outcome: format!("{outcome:?}"),
            })?,
        }

        tracer.phase(ep, "execute")?;
        let mut reward = 0.0;
        let mut latency_sum = 0.0;
        let mut energy_norm_sum = 0.0;
        let mut energy_total = 0.0;
        let mut deadline_met = 0;
        let mut obs = env.observe(&semantic);
        while !env.is_done() {
            let (action, decision) = handle.agent.act(&obs, &env, ep, handle.training, sigma, |e| {
                cfg.agent.epsilon(e)
            })?;
            let step = env.step_index();
            let outcome = env.step(decision)?;
            let next_obs = env.observe(&semantic);
            reward += outcome.reward;
            latency_sum += outcome.latency_ms;
            energy_norm_sum += outcome.reward_terms.energy_norm;
            energy_total += outcome.uav_energy_spent;
            deadline_met += usize::from(outcome.deadline_met);
            tracer.step(&StepTrace {
                episode: ep,
                step,
                decision,
                latency_ms: outcome.latency_ms,
                energy_fraction: outcome.uav_energy_spent,
                reward: outcome.reward,
                lambda,
            })?;
            if handle.training && handle.agent.is_learning() {
                handle
                    .agent
                    .remember(obs, action, outcome.reward, next_obs.clone(), env.is_done());
                steps_total += 1;
                if steps_total % cfg.agent.train_every == 0 && handle.agent.buffer_len() >= cfg.agent.warmup_transitions {
                    handle.agent.train_step()?;
                }
            }
            obs = next_obs;
        }
        let n = env.tasks().len().max(1) as f64;
        let min_end = world
            .uav_ids()
            .map(|u| env.energies()[u])
            .fold(f64::INFINITY, f64::min);
        let stats = EpisodeStats {
            episode: ep,
            lambda,
            reward,
            mean_latency_ms: latency_sum / n,
            mean_energy_norm: energy_norm_sum / n,
            total_uav_energy: energy_total,
            min_uav_end_energy: if min_end.is_finite() { min_end } else { 1.0 },
            deadline_met,
        };

        tracer.phase(ep, "knowledge")?;
        kb.append_episode(&EpisodeRecord {
            episode: ep,
            method: name.clone(),
            seed,
            semantic_summary: summary_text,
            lambda,
            episode_reward: reward,
            mean_latency_ms: stats.mean_latency_ms,
            total_uav_energy: energy_total,
            deadline_met,
        })?;
        let kpi = EpisodeKpi {
            episode: ep,
            mean_latency_ms: stats.mean_latency_ms,
            min_uav_end_energy: stats.min_uav_end_energy,
            mean_reward: reward / n,
        };
        let (deviations, change) = learner.observe(kpi, &orch.table);
        for deviation in deviations {
            kb.append_provenance(&ProvenanceRecord::Deviation {
                method: name.clone(),
                seed,
                deviation,
            })?;
        }
        if let Some((table, change)) = change {
            info!(method = %method, seed, episode = ep, reason = %change.reason,
                  before = change.lambda_base_before, after = change.lambda_base_after, "rule table refined");
            orch.table = table;
            table_changes += 1;
            kb.append_provenance(&ProvenanceRecord::TableChange {
                method: name.clone(),
                seed,
                episode: ep,
                change,
            })?;
        }
        episodes.push(stats);
    }
    tracer.finish()?;

    if handle.training && handle.agent.is_learning() {
        let dir = plan.out_dir.join("agents");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        handle.agent.save(&dir.join(artifact_file_name(method, seed)))?;
    }
    info!(method = %method, seed, "run finished");
    Ok(PairResult {
        method,
        seed,
        episodes,
        final_lambda_base: orch.table.lambda_base,
        table_changes,
    })
}

fn fmt_f64(x: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{x:?}")
}

pub fn summarize(pairs: &[PairResult], methods: &[PlannerChoice]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|&m| {
            let mut lat = 0.0;
            let mut energy = 0.0;
            let mut count = 0usize;
            for p in pairs.iter().filter(|p| p.method == m) {
                let start = p.episodes.len().saturating_sub(SUMMARY_WINDOW);
                for e in &p.episodes[start..] {
                    lat += e.mean_latency_ms;
                    energy += e.mean_energy_norm;
                    count += 1;
                }
            }
            let c = count.max(1) as f64;
            SummaryRow {
                method: m.name().to_string(),
                mean_latency_ms: lat / c,
                mean_uav_energy_norm: energy / c,
            }
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every job on a small worker pool. Each pair owns its RNGs and its
/// knowledge directory, so results only depend on the job; they are returned
/// in job order.
fn run_pairs(plan: &ExperimentPlan, world: &Arc<World>, jobs: &[(PlannerChoice, u64)]) -> Result<Vec<PairResult>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<PairResult>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(m, s)) = jobs.get(i) else { break };
                let result = run_pair(plan, world, m, s);
                *slots[i].lock().expect("pair slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("pair slot poisoned")
                .expect("every job runs")
        })
        .collect()
}

pub fn run(plan: &ExperimentPlan) -> Result<RunReport> {
    plan.validate()?;
    fs::create_dir_all(&plan.out_dir).map_err(|e| Error::io(&plan.out_dir, e))?;
    let world = Arc::new(build_scenario(&plan.config.scenario)?);
    let manifest = RunManifest::new(&world, plan);
    write_file(&plan.out_dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    info!(objective = %plan.config.intent.objective, episodes = plan.episodes, "experiment start");

    let methods = plan.canonical_methods();
    let seeds = plan.canonical_seeds();
    let jobs: Vec<(PlannerChoice, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pairs = run_pairs(plan, &world, &jobs)?;

    let mut conv = String::from("episode,method,seed,episode_reward\n");
    for p in &pairs {
        for e in &p.episodes {
            let _ = writeln!(conv, "{},{},{},{}", e.episode, p.method.name(), p.seed, fmt_f64(e.reward));
        }
    }
    let convergence_csv = plan.out_dir.join("convergence.csv");
    write_file(&convergence_csv, &conv)?;

    let summary = summarize(&pairs, &methods);
    let mut text = String::from("method,mean_latency_ms,mean_uav_energy_norm\n");
    for r in &summary {
        let _ = writeln!(
            text,
            "{},{},{}",
            r.method,
            fmt_f64(r.mean_latency_ms),
            fmt_f64(r.mean_uav_energy_norm)
        );
    }
    let summary_csv = plan.out_dir.join("summary.csv");
    write_file(&summary_csv, &text)?;

    Ok(RunReport {
        pairs,
        summary,
        convergence_csv,
        summary_csv,
    })
}

#[derive(Debug, Deserialize)]
struct SummaryCsvRow {
    method: String,
    mean_latency_ms: f64,
    mean_uav_energy_norm: f64,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let r: SummaryCsvRow = row?;
        out.push(SummaryRow {
            method: r.method,
            mean_latency_ms: r.mean_latency_ms,
            mean_uav_energy_norm: r.mean_uav_energy_norm,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Methods by ascending mean latency; ties keep canonical order.
    pub ranking: Vec<SummaryRow>,
    /// Energy of the shaped diffusion planner relative to the fixed one, as a
    /// percentage reduction.
    pub energy_reduction_pct: f64,
}

pub fn compare(rows: &[SummaryRow]) -> Result<Comparison> {
    let by_name: BTreeMap<&str, &SummaryRow> = rows.iter().map(|r| (r.method.as_str(), r)).collect();
    let missing: Vec<String> = PlannerChoice::ALL
        .iter()
        .map(|c| c.name())
        .filter(|n| !by_name.contains_key(n))
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingMethods(missing));
    }
    let mut ranking: Vec<SummaryRow> = PlannerChoice::ALL
        .iter()
        .map(|c| by_name[c.name()].clone())
        .collect();
    ranking.sort_by(|a, b| a.mean_latency_ms.total_cmp(&b.mean_latency_ms));
    let shaped = by_name[PlannerChoice::LlmShapedD3pg.name()].mean_uav_energy_norm;
    let fixed = by_name[PlannerChoice::FixedD3pg.name()].mean_uav_energy_norm;
    let energy_reduction_pct = if fixed == 0.0 {
        0.0
    } else {
        (1.0 - shaped / fixed) * 100.0
    };
    Ok(Comparison {
        ranking,
        energy_reduction_pct,
    })
}

pub fn render_comparison(c: &Comparison) -> String {
    let mut s = String::from("rank  method          mean_latency_ms  mean_uav_energy_norm\n");
    for (i, r) in c.ranking.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<5} {:<15} {:>15.3}  {:>20.6}",
            i + 1,
            r.method,
            r.mean_latency_ms,
            r.mean_uav_energy_norm
        );
    }
    let _ = writeln!(
        s,
        "LlmShapedD3pg energy relative to FixedD3pg: {:.1}% reduction",
        c.energy_reduction_pct
    );
    s
}
