//! Two-agent episode driver: sense, verify or enforce, act, record.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::Agent;
use crate::enforce::{comm_decision, run_session, Channel, SessionOutcome, TriggerReason, Verdict};
use crate::error::{Error, Result};
use crate::planning::{ActionIndex, ActionSpace, Planner, Slot, DEFAULT_SLOT_CAP};
use crate::relaxed::r_verify;
use crate::scenario::{build_scenario, move_pose, sense, Scenario, ScenarioConfig};
use crate::simp::{r_verify_simp, SimpParams, DEFAULT_INITIAL_FRACTION, DEFAULT_M_BATCH};
use crate::verify::{step1, verify, HistoryLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "baseline_i")]
    BaselineI,
    #[serde(rename = "baseline_ii")]
    BaselineII,
    #[serde(rename = "enforce_ac")]
    EnforceAc,
    #[serde(rename = "r_enforce_ac")]
    REnforceAc,
    #[serde(rename = "r_enforce_ac_simp")]
    REnforceAcSimp,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [Self::BaselineI, Self::BaselineII, Self::EnforceAc, Self::REnforceAc, Self::REnforceAcSimp];

    pub fn name(self) -> &'static str {
        match self {
            Self::BaselineI => "baseline_i",
            Self::BaselineII => "baseline_ii",
            Self::EnforceAc => "enforce_ac",
            Self::REnforceAc => "r_enforce_ac",
            Self::REnforceAcSimp => "r_enforce_ac_simp",
        }
    }

    pub fn uses_epsilon(self) -> bool {
        matches!(self, Self::REnforceAc | Self::REnforceAcSimp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmParams {
    pub name: AlgorithmKind,
    pub epsilon: f64,
    pub m_batch: usize,
    pub initial_fraction: f64,
    pub slot_cap: usize,
    pub planning_horizon: usize,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            name: AlgorithmKind::EnforceAc,
            epsilon: 0.3,
            m_batch: DEFAULT_M_BATCH,
            initial_fraction: DEFAULT_INITIAL_FRACTION,
            slot_cap: DEFAULT_SLOT_CAP,
            planning_horizon: 1,
        }
    }
}

impl AlgorithmParams {
    pub fn with_kind(name: AlgorithmKind) -> Self {
        Self { name, ..Self::default() }
    }

    pub fn simp(&self) -> SimpParams {
        SimpParams { epsilon: self.epsilon, m_batch: self.m_batch, initial_fraction: self.initial_fraction }
    }

    pub fn validate(&self) -> Result<()> {
        self.simp().validate()?;
        if self.slot_cap == 0 || self.slot_cap > 20 {
            return Err(Error::input(format!("slot_cap must be in 1..=20, got {}", self.slot_cap)));
        }
        ActionSpace::new(self.planning_horizon)?;
        Ok(())
    }
}

/// One timestep of an episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: u32,
    pub actions: [ActionIndex; 2],
    pub action_labels: [String; 2],
    pub not_ac: bool,
    pub comms: u32,
    pub rounds: u32,
    pub j: [f64; 2],
    pub p: [u32; 2],
    pub declared: bool,
    pub forced: bool,
    pub p_ac: Option<f64>,
    pub p_not_ac: Option<f64>,
    pub p_comm: Option<f64>,
    pub p_ac_lb: Option<f64>,
    pub p_ac_ub: Option<f64>,
    /// Realizations whose favored action was computed during the step.
    pub evaluated: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub algorithm: AlgorithmKind,
    pub epsilon: f64,
    pub horizon: u32,
    pub records: Vec<StepRecord>,
    pub not_ac_count: u32,
    pub comm_count: u32,
}

impl EpisodeMetrics {
    pub fn mean_j(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.j[0]).sum::<f64>() / self.records.len() as f64
    }

    pub fn evaluated(&self) -> u64 {
        self.records.iter().map(|r| r.evaluated).sum()
    }

    pub fn wall_ns(&self) -> u64 {
        self.records.iter().map(|r| r.wall_ns).sum()
    }
}

#[derive(Debug, Clone, Default)]
struct StepInfo {
    declared: bool,
    p_ac: Option<f64>,
    p_not_ac: Option<f64>,
    p_comm: Option<f64>,
    p_ac_lb: Option<f64>,
    p_ac_ub: Option<f64>,
    evaluated: u64,
}

fn from_session<T>(s: SessionOutcome<T>) -> ([ActionIndex; 2], u32, u32, bool, [Verdict<T>; 2]) {
    (s.actions, s.comms, s.rounds, s.forced, s.verdicts)
}

/// Runs one episode of `scenario` under `params`.
pub fn run_episode(scenario: &Scenario, params: &AlgorithmParams) -> Result<EpisodeMetrics> {
    params.validate()?;
    let actions = ActionSpace::new(params.planning_horizon)?;
    let grid = scenario.grid;
    let prior = &scenario.prior;
    let mut poses = scenario.start_poses;
    let mut ledgers = [HistoryLedger::new(Agent::R), HistoryLedger::new(Agent::Rp)];
    let mut channel = Channel::new(scenario.restrictions.clone());
    let mut rng = scenario.sensing_rng();
    let mut records = Vec::with_capacity(scenario.horizon as usize);

    for t in 1..=scenario.horizon {
        let start = Instant::now();
        for agent in Agent::BOTH {
            let o = sense(scenario, poses[agent.index()], agent, t, &mut rng);
            ledgers[agent.index()].record_own(o)?;
            ledgers[agent.peer().index()].record_peer_slot(Slot::of(&o))?;
        }
        let p = [ledgers[0].p(t), ledgers[1].p(t)];
        let planner = Planner::new(grid, scenario.sensor, poses, &actions).with_slot_cap(params.slot_cap);
        let mut info = StepInfo::default();

        let (chosen, comms, rounds, forced) = match params.name {
            AlgorithmKind::BaselineI => {
                let mut comms = 0;
                for agent in Agent::BOTH {
                    if !ledgers[agent.index()].own_unshared().is_empty()
                        && channel.transmit(t, &mut ledgers, agent, TriggerReason::BacklogFlush)?
                    {
                        comms += 1;
                    }
                }
                let chosen = [step1(&ledgers[0], prior, &planner)?, step1(&ledgers[1], prior, &planner)?];
                (chosen, comms, u32::from(comms > 0), !channel.is_open(t))
            }
            AlgorithmKind::BaselineII => {
                let chosen = [step1(&ledgers[0], prior, &planner)?, step1(&ledgers[1], prior, &planner)?];
                (chosen, 0, 0, false)
            }
            AlgorithmKind::EnforceAc => {
                let mut evaluated = 0u64;
                let session = run_session(&mut ledgers, &mut channel, t, |ledger| {
                    let outcome = verify(ledger, prior, &planner)?;
                    evaluated += outcome.evaluated() as u64;
                    Ok(Verdict { action: outcome.step1_action, settled: outcome.mrac, decision: comm_decision(&outcome), detail: () })
                })?;
                let (chosen, comms, rounds, forced, _) = from_session(session);
                info.evaluated = evaluated;
                if !forced {
                    info.declared = true;
                    info.p_ac = Some(1.0);
                    info.p_not_ac = Some(0.0);
                    info.p_comm = Some(0.0);
                    info.p_ac_lb = Some(1.0);
                    info.p_ac_ub = Some(1.0);
                }
                (chosen, comms, rounds, forced)
            }
            AlgorithmKind::REnforceAc => {
                let mut evaluated = 0u64;
                let session = run_session(&mut ledgers, &mut channel, t, |ledger| {
                    let outcome = r_verify(ledger, prior, &planner, params.epsilon)?;
                    evaluated += outcome.evaluated as u64;
                    Ok(Verdict {
                        action: outcome.step1_action,
                        settled: outcome.declared(),
                        decision: outcome.decision.clone(),
                        detail: outcome,
                    })
                })?;
                let (chosen, comms, rounds, forced, verdicts) = from_session(session);
                let r = &verdicts[0].detail;
                info.evaluated = evaluated;
                info.declared = !forced;
                info.p_ac = r.p_ac();
                if let Some(g) = r.guarantees() {
                    info.p_not_ac = Some(g.p_not_ac);
                    info.p_comm = Some(g.p_comm);
                }
                info.p_ac_lb = info.p_ac;
                info.p_ac_ub = info.p_ac;
                (chosen, comms, rounds, forced)
            }
            AlgorithmKind::REnforceAcSimp => {
                let simp = params.simp();
                let mut evaluated = 0u64;
                let session = run_session(&mut ledgers, &mut channel, t, |ledger| {
                    let outcome = r_verify_simp(ledger, prior, &planner, &simp)?;
                    evaluated += outcome.evaluated;
                    Ok(Verdict {
                        action: outcome.step1_action,
                        settled: outcome.declared,
                        decision: outcome.decision.clone(),
                        detail: outcome,
                    })
                })?;
                let (chosen, comms, rounds, forced, verdicts) = from_session(session);
                let r = &verdicts[0].detail;
                info.evaluated = evaluated;
                info.declared = !forced;
                if let Some((lb, ub)) = r.bracket {
                    info.p_ac_lb = Some(lb);
                    info.p_ac_ub = Some(ub);
                }
                (chosen, comms, rounds, forced)
            }
        };

        let j = [
            planner.evaluate_objective(&ledgers[0].own_belief(prior, &planner)?, chosen[0]),
            planner.evaluate_objective(&ledgers[1].own_belief(prior, &planner)?, chosen[1]),
        ];
        for agent in Agent::BOTH {
            let i = agent.index();
            poses[i] = move_pose(&grid, poses[i], actions.get(chosen[i]).first(agent));
            ledgers[i].refresh_consistency(t);
        }
        records.push(StepRecord {
            t,
            actions: chosen,
            action_labels: [actions.get(chosen[0]).to_string(), actions.get(chosen[1]).to_string()],
            not_ac: chosen[0] != chosen[1],
            comms,
            rounds,
            j,
            p,
            declared: info.declared,
            forced,
            p_ac: info.p_ac,
            p_not_ac: info.p_not_ac,
            p_comm: info.p_comm,
            p_ac_lb: info.p_ac_lb,
            p_ac_ub: info.p_ac_ub,
            evaluated: info.evaluated,
            wall_ns: start.elapsed().as_nanos() as u64,
        });
    }

    Ok(EpisodeMetrics {
        seed: scenario.seed,
        algorithm: params.name,
        epsilon: params.epsilon,
        horizon: scenario.horizon,
        not_ac_count: records.iter().filter(|r| r.not_ac).count() as u32,
        comm_count: records.iter().map(|r| r.comms).sum(),
        records,
    })
}

/// Episodes for every seed, in seed order. `parallelism = 0` uses the global
/// thread pool.
pub fn run_batch(config: &ScenarioConfig, params: &AlgorithmParams, seeds: &[u64], parallelism: usize) -> Result<Vec<EpisodeMetrics>> {
    if seeds.is_empty() {
        return Err(Error::input("seed list is empty"));
    }
    config.validate()?;
    params.validate()?;
    let work = || seeds.par_iter().map(|&seed| run_episode(&build_scenario(config, seed)?, params)).collect::<Result<Vec<_>>>();
    if parallelism == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::input(format!("thread pool: {e}")))?
            .install(work)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchAggregate {
    pub runs: usize,
    pub horizon: u32,
    pub not_ac: MeanStd,
    pub comms: MeanStd,
    pub mean_j: MeanStd,
}

impl BatchAggregate {
    pub fn of(episodes: &[EpisodeMetrics]) -> Result<Self> {
        let horizon = episodes.first().ok_or_else(|| Error::input("no episodes to aggregate"))?.horizon;
        if episodes.iter().any(|e| e.horizon != horizon) {
            return Err(Error::input("episodes have different horizons"));
        }
        let col = |f: &dyn Fn(&EpisodeMetrics) -> f64| MeanStd::of(&episodes.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            runs: episodes.len(),
            horizon,
            not_ac: col(&|e| e.not_ac_count as f64),
            comms: col(&|e| e.comm_count as f64),
            mean_j: col(&|e| e.mean_j()),
        })
    }

    /// Mean comms as a percentage of always-communicate (`2E`).
    pub fn comm_pct(&self) -> f64 {
        100.0 * self.comms.mean / (2.0 * self.horizon as f64)
    }

    /// Mean Not-AC steps as a percentage of `E`.
    pub fn not_ac_pct(&self) -> f64 {
        100.0 * self.not_ac.mean / self.horizon as f64
    }
}
