//! Independent learners with subjective satisficing.
//!
//! Time is cut into exploration phases. Within a phase every agent keeps a
//! baseline policy (mixed with uniform experimentation at rate `ρ`) and
//! learns, from zero, a Q table `Q̂` and an on-policy value `Ĵ` over its own
//! perceived state. At the end of a phase an agent whose `Ĵ` is within
//! `ε + d` of `min Q̂` everywhere keeps its policy; any other agent keeps it
//! with probability `1 − e` and otherwise draws a fresh one uniformly from
//! its grid.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::{FiniteMdp, TeamEnv, TeamSpec};
use crate::error::{Error, Result};
use crate::induced::{bellman_fixed_point, policy_evaluation};
use crate::markov::long_run_occupancy;
use crate::metrics::{ControlledKernel, FiniteKernel};
use crate::qcore::PolicyTable;
use crate::rng::{self, sample_index};

/// Map from the shared state to what one agent perceives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerceivedMap {
    /// The full state.
    Global,
    /// The agent's own component, given as a table over states.
    Local { map: Vec<usize> },
    /// A summary feature such as a population histogram, given as a table
    /// over states.
    Compressed { map: Vec<usize> },
}

impl PerceivedMap {
    fn table(&self, n_x: usize) -> Result<Vec<usize>> {
        match self {
            Self::Global => Ok((0..n_x).collect()),
            Self::Local { map } | Self::Compressed { map } => {
                if map.len() != n_x {
                    return Err(Error::validation("perception.map", format!("needs one entry per state ({n_x})")));
                }
                Ok(map.clone())
            }
        }
    }
}

fn n_perceived(table: &[usize]) -> usize {
    table.iter().copied().max().map_or(0, |m| m + 1)
}

/// Finite set of stationary policies an agent chooses from.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    n_states: usize,
    n_actions: usize,
    policies: Vec<PolicyTable>,
}

const MAX_GRID: usize = 100_000;

impl PolicyGrid {
    /// Every deterministic policy.
    pub fn deterministic(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::quantized(n_states, n_actions, 1)
    }

    /// Every policy whose probabilities are multiples of `1/k`.
    pub fn quantized(n_states: usize, n_actions: usize, k: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || k == 0 {
            return Err(Error::validation("grid", "states, actions and resolution must be positive"));
        }
        let mut rows = Vec::new();
        let mut parts = vec![0usize; n_actions];
        fn compositions(pos: usize, left: usize, parts: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<f64>>) {
            if pos + 1 == parts.len() {
                parts[pos] = left;
                out.push(parts.iter().map(|&p| p as f64 / k as f64).collect());
                return;
            }
            for c in (0..=left).rev() {
                parts[pos] = c;
                compositions(pos + 1, left - c, parts, k, out);
            }
        }
        compositions(0, k, &mut parts, k, &mut rows);
        let size = rows
            .len()
            .checked_pow(n_states as u32)
            .filter(|&s| s <= MAX_GRID)
            .ok_or_else(|| Error::Size(format!("policy grid over {n_states} states exceeds {MAX_GRID}")))?;
        let policies = (0..size)
            .map(|mut idx| {
                let table = (0..n_states)
                    .map(|_| {
                        let r = rows[idx % rows.len()].clone();
                        idx /= rows.len();
                        r
                    })
                    .collect();
                PolicyTable::new(table)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_states,
            n_actions,
            policies,
        })
    }

    /// An explicit list, deduplicated in order of first appearance.
    pub fn from_policies(list: Vec<PolicyTable>) -> Result<Self> {
        let first = list.first().ok_or_else(|| Error::validation("grid", "needs at least one policy"))?;
        let (n_states, n_actions) = (first.n_states(), first.n_actions());
        let mut policies: Vec<PolicyTable> = Vec::new();
        for p in list {
            if p.n_states() != n_states || p.n_actions() != n_actions {
                return Err(Error::validation("grid", "policies differ in shape"));
            }
            if !policies.contains(&p) {
                policies.push(p);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            policies,
        })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, i: usize) -> &PolicyTable {
        &self.policies[i]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn position(&self, p: &PolicyTable) -> Option<usize> {
        self.policies.iter().position(|q| q == p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Deterministic,
    Quantized { k: usize },
}

/// Phase lengths `T_k = min(initial·2^k, cap)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSchedule {
    pub initial: u64,
    pub cap: u64,
}

impl PhaseSchedule {
    pub fn length(&self, k: usize) -> u64 {
        let grown = if k >= 64 { u64::MAX } else { self.initial.saturating_mul(1u64 << k) };
        grown.min(self.cap)
    }

    fn validate(&self) -> Result<()> {
        if self.initial == 0 || self.cap < self.initial {
            return Err(Error::validation("schedule", "need 1 <= initial <= cap"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default = "global")]
    pub perception: PerceivedMap,
    #[serde(default = "deterministic")]
    pub grid: GridSpec,
    /// `e`, the probability that an unsatisfied agent redraws its policy.
    pub inertia: f64,
    /// `d`, the agent's own satisfaction slack on top of `ε`.
    pub tolerance: f64,
    /// Index into the grid; drawn uniformly when absent.
    #[serde(default)]
    pub initial_policy: Option<usize>,
}

fn global() -> PerceivedMap {
    PerceivedMap::Global
}

fn deterministic() -> GridSpec {
    GridSpec::Deterministic
}

fn default_rho() -> f64 {
    0.1
}

fn default_absorption() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagentConfig {
    pub beta: f64,
    pub epsilon: f64,
    /// Within-phase experimentation rate.
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub phases: usize,
    pub schedule: PhaseSchedule,
    pub agents: Vec<AgentConfig>,
    /// A run counts as absorbed when every agent is satisfied in each of
    /// this many final phases.
    #[serde(default = "default_absorption")]
    pub absorption_phases: usize,
}

impl MagentConfig {
    pub fn validate(&self, spec: &TeamSpec) -> Result<()> {
        spec.validate()?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::validation("magent.beta", "must lie in (0,1)"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::validation("magent.epsilon", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::validation("magent.rho", "must lie in [0,1]"));
        }
        if self.agents.len() != spec.n_agents {
            return Err(Error::validation("magent.agents", format!("expected {} agents", spec.n_agents)));
        }
        if self.absorption_phases == 0 || self.absorption_phases > self.phases {
            return Err(Error::validation("magent.absorption_phases", "must lie in 1..=phases"));
        }
        self.schedule.validate()?;
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.inertia > 0.0 && a.inertia < 1.0) {
                return Err(Error::validation(format!("magent.agents[{i}].inertia"), "must lie in (0,1)"));
            }
            if !(a.tolerance > 0.0) {
                return Err(Error::validation(format!("magent.agents[{i}].tolerance"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// One agent's perception table and policy grid, resolved against a game.
#[derive(Debug, Clone)]
pub struct AgentSetup {
    pub map: Vec<usize>,
    pub n_perceived: usize,
    pub grid: PolicyGrid,
}

pub fn resolve_agents(spec: &TeamSpec, cfg: &MagentConfig) -> Result<Vec<AgentSetup>> {
    cfg.validate(spec)?;
    cfg.agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let map = a.perception.table(spec.n_states).map_err(|e| match e {
                Error::Validation { message, .. } => {
                    Error::validation(format!("magent.agents[{i}].perception.map"), message)
                }
                other => other,
            })?;
            let n = n_perceived(&map);
            let grid = match a.grid {
                GridSpec::Deterministic => PolicyGrid::deterministic(n, spec.n_actions)?,
                GridSpec::Quantized { k } => PolicyGrid::quantized(n, spec.n_actions, k)?,
            };
            if let Some(p) = a.initial_policy.filter(|&p| p >= grid.len()) {
                return Err(Error::validation(
                    format!("magent.agents[{i}].initial_policy"),
                    format!("{p} outside a grid of {}", grid.len()),
                ));
            }
            Ok(AgentSetup {
                map,
                n_perceived: n,
                grid,
            })
        })
        .collect()
}

/// Phase-local learning state of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRuntime {
    pub policy: usize,
    n_states: usize,
    n_actions: usize,
    q: Vec<f64>,
    j: Vec<f64>,
    n: Vec<u64>,
    m: Vec<u64>,
}

impl AgentRuntime {
    pub fn new(policy: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            policy,
            n_states,
            n_actions,
            q: vec![0.0; n_states * n_actions],
            j: vec![0.0; n_states],
            n: vec![0; n_states * n_actions],
            m: vec![0; n_states],
        }
    }

    /// Zeroes `Q̂`, `Ĵ` and both counters.
    pub fn reset_phase(&mut self) {
        self.q.iter_mut().for_each(|v| *v = 0.0);
        self.j.iter_mut().for_each(|v| *v = 0.0);
        self.n.iter_mut().for_each(|v| *v = 0);
        self.m.iter_mut().for_each(|v| *v = 0);
    }

    pub fn q(&self, s: usize, u: usize) -> f64 {
        self.q[s * self.n_actions + u]
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q
    }

    pub fn j(&self, s: usize) -> f64 {
        self.j[s]
    }

    pub fn j_values(&self) -> &[f64] {
        &self.j
    }

    fn min_q(&self, s: usize) -> f64 {
        self.q[s * self.n_actions..(s + 1) * self.n_actions]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// One within-phase step: `Q̂` with step `1/n` at `(s,u)` and `Ĵ` with step
/// `1/m` at `s`, both counting the current visit.
pub fn phase_updates(rt: &mut AgentRuntime, s: usize, u: usize, c: f64, s_next: usize, beta: f64) {
    let k = s * rt.n_actions + u;
    rt.n[k] += 1;
    let a = 1.0 / rt.n[k] as f64;
    let target = c + beta * rt.min_q(s_next);
    rt.q[k] = (1.0 - a) * rt.q[k] + a * target;
    rt.m[s] += 1;
    let b = 1.0 / rt.m[s] as f64;
    let target = c + beta * rt.j[s_next];
    rt.j[s] = (1.0 - b) * rt.j[s] + b * target;
}

/// `Ĵ(y) ≤ min_a Q̂(y,a) + ε + d` for every perceived state.
pub fn is_subjectively_satisfied(rt: &AgentRuntime, eps: f64, d: f64) -> bool {
    (0..rt.n_states).all(|y| rt.j(y) <= rt.min_q(y) + eps + d)
}

/// Next policy index. A satisfied agent keeps its policy and draws nothing.
pub fn policy_transition<R: rand::Rng + ?Sized>(
    current: usize,
    satisfied: bool,
    grid_len: usize,
    inertia: f64,
    rng: &mut R,
) -> usize {
    if satisfied {
        return current;
    }
    if rng.random::<f64>() < 1.0 - inertia {
        current
    } else {
        rng.random_range(0..grid_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub k: usize,
    pub agent: usize,
    pub policy_id: usize,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagentRun {
    pub records: Vec<PhaseRecord>,
    /// Joint policy after the last phase.
    pub final_policies: Vec<usize>,
    pub absorbed: bool,
    /// Agents' runtimes at the end of the last phase.
    pub runtimes: Vec<AgentRuntime>,
    pub steps: u64,
}

fn behavior_row(policy: &PolicyTable, s: usize, rho: f64) -> Vec<f64> {
    let n = policy.n_actions() as f64;
    policy.row(s).iter().map(|p| (1.0 - rho) * p + rho / n).collect()
}

/// Runs the phase dynamics for `cfg.phases` phases on one trajectory.
pub fn run_subjective_q(spec: &TeamSpec, cfg: &MagentConfig, seed: u64) -> Result<MagentRun> {
    let setups = resolve_agents(spec, cfg)?;
    let mut env = TeamEnv::new(spec.clone())?;
    let mut act_rng = rng::stream(seed, rng::EXPLORE_STREAM);
    let mut policy_rng = rng::stream(seed, rng::POLICY_STREAM);
    let mut runtimes: Vec<AgentRuntime> = setups
        .iter()
        .zip(&cfg.agents)
        .map(|(s, a)| {
            let p = a
                .initial_policy
                .unwrap_or_else(|| policy_rng.random_range(0..s.grid.len()));
            AgentRuntime::new(p, s.n_perceived, spec.n_actions)
        })
        .collect();
    // Behavior rows per agent and perceived state, rebuilt when policies change.
    let rows_for = |setup: &AgentSetup, policy: usize| -> Vec<Vec<f64>> {
        (0..setup.n_perceived)
            .map(|y| behavior_row(setup.grid.get(policy), y, cfg.rho))
            .collect()
    };
    let mut x = env.reset(seed);
    let mut records = Vec::with_capacity(cfg.phases * setups.len());
    let mut actions = vec![0usize; setups.len()];
    let mut steps = 0u64;
    for k in 0..cfg.phases {
        let behavior: Vec<Vec<Vec<f64>>> = setups.iter().zip(&runtimes).map(|(s, r)| rows_for(s, r.policy)).collect();
        runtimes.iter_mut().for_each(AgentRuntime::reset_phase);
        for _ in 0..cfg.schedule.length(k) {
            for (i, setup) in setups.iter().enumerate() {
                actions[i] = sample_index(&behavior[i][setup.map[x]], &mut act_rng);
            }
            let (costs, next) = env.step_joint(&actions)?;
            for (i, setup) in setups.iter().enumerate() {
                phase_updates(&mut runtimes[i], setup.map[x], actions[i], costs[i], setup.map[next], cfg.beta);
            }
            x = next;
            steps += 1;
        }
        for (i, (setup, agent)) in setups.iter().zip(&cfg.agents).enumerate() {
            let rt = &mut runtimes[i];
            let satisfied = is_subjectively_satisfied(rt, cfg.epsilon, agent.tolerance);
            records.push(PhaseRecord {
                k,
                agent: i,
                policy_id: rt.policy,
                satisfied,
            });
            rt.policy = policy_transition(rt.policy, satisfied, setup.grid.len(), agent.inertia, &mut policy_rng);
        }
    }
    let n = setups.len();
    let absorbed = records
        .iter()
        .rev()
        .take(n * cfg.absorption_phases)
        .all(|r| r.satisfied);
    Ok(MagentRun {
        final_policies: runtimes.iter().map(|r| r.policy).collect(),
        records,
        absorbed,
        runtimes,
        steps,
    })
}

/// Phase-limit quantities of one agent under a fixed joint policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentLimit {
    /// Limit of `Ĵ` per perceived state; `None` where the state has zero
    /// long-run occupancy.
    pub v: Vec<Option<f64>>,
    /// Limit of `Q̂` per perceived state.
    pub w: Vec<Option<Vec<f64>>>,
    /// `max_y (V*(y) − min_a W*(y,a))` over occupied states.
    pub slack: f64,
}

/// Exact phase limits for every agent under `joint` (grid indices).
///
/// The long-run occupancy of the shared state under the joint behavior
/// (policies mixed with `ρ`) defines, for each agent, an induced MDP on its
/// perceived states; `W*` is that MDP's optimal Q table and `V*` the value
/// of the agent's own behavior in it.
pub fn subjective_limits(spec: &TeamSpec, cfg: &MagentConfig, setups: &[AgentSetup], joint: &[usize]) -> Result<Vec<AgentLimit>> {
    let n_x = spec.n_states;
    let n_joint = spec.n_joint();
    let behaviors: Vec<Vec<Vec<f64>>> = setups
        .iter()
        .zip(joint)
        .map(|(s, &p)| (0..s.n_perceived).map(|y| behavior_row(s.grid.get(p), y, cfg.rho)).collect())
        .collect();
    // prob[x][j]: probability of joint action j in state x.
    let prob: Vec<Vec<f64>> = (0..n_x)
        .map(|x| {
            (0..n_joint)
                .map(|j| {
                    spec.decode_joint(j)
                        .iter()
                        .enumerate()
                        .map(|(i, &a)| behaviors[i][setups[i].map[x]][a])
                        .product()
                })
                .collect()
        })
        .collect();
    let chain: Vec<Vec<f64>> = (0..n_x)
        .map(|x| {
            let mut row = vec![0.0; n_x];
            for j in 0..n_joint {
                for (x2, p) in spec.transition[j][x].iter().enumerate() {
                    row[x2] += prob[x][j] * p;
                }
            }
            row
        })
        .collect();
    let mut init = vec![0.0; n_x];
    init[spec.initial_state] = 1.0;
    let mu = long_run_occupancy(&FiniteKernel::new(chain)?, &init)?;

    setups
        .iter()
        .enumerate()
        .map(|(i, setup)| {
            let (ny, na) = (setup.n_perceived, spec.n_actions);
            let mut weight = vec![0.0; ny * na];
            let mut cost = vec![0.0; ny * na];
            let mut next = vec![vec![0.0; ny]; ny * na];
            for x in 0..n_x {
                if mu[x] <= 0.0 {
                    continue;
                }
                let y = setup.map[x];
                for j in 0..n_joint {
                    let w = mu[x] * prob[x][j];
                    if w <= 0.0 {
                        continue;
                    }
                    let a = spec.decode_joint(j)[i];
                    let k = y * na + a;
                    weight[k] += w;
                    cost[k] += w * spec.cost(i, x, j);
                    for (x2, p) in spec.transition[j][x].iter().enumerate() {
                        next[k][setup.map[x2]] += w * p;
                    }
                }
            }
            let occupied: Vec<usize> = (0..ny).filter(|&y| (0..na).any(|a| weight[y * na + a] > 0.0)).collect();
            let index_of = |y: usize| occupied.iter().position(|&o| o == y);
            let mut costs = Vec::with_capacity(occupied.len());
            let mut per_action: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(occupied.len()); na];
            let mut rows = Vec::with_capacity(occupied.len());
            for &y in &occupied {
                let mut crow = Vec::with_capacity(na);
                for (a, slot) in per_action.iter_mut().enumerate() {
                    let k = y * na + a;
                    if weight[k] <= 0.0 {
                        return Err(Error::Ergodicity(format!(
                            "agent {i} never plays action {a} in perceived state {y}; use rho > 0"
                        )));
                    }
                    crow.push(cost[k] / weight[k]);
                    let mut row = vec![0.0; occupied.len()];
                    for (y2, p) in next[k].iter().enumerate() {
                        if *p > 0.0 {
                            let t = index_of(y2).ok_or_else(|| Error::Ergodicity("mass leaves the occupied set".into()))?;
                            row[t] += p / weight[k];
                        }
                    }
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|r| *r /= total);
                    slot.push(row);
                }
                costs.push(crow);
                rows.push(behaviors[i][y].clone());
            }
            let kernel = ControlledKernel::new(
                per_action.into_iter().map(FiniteKernel::new).collect::<Result<Vec<_>>>()?,
            )?;
            let (w_star, _) = bellman_fixed_point(&costs, &kernel, cfg.beta, 1e-12)?;
            let v_star = policy_evaluation(&costs, &kernel, &PolicyTable::new(rows)?, cfg.beta, 1e-12)?;
            let mut v = vec![None; ny];
            let mut w = vec![None; ny];
            let mut slack = f64::NEG_INFINITY;
            for (t, &y) in occupied.iter().enumerate() {
                let row = w_star.row(t).to_vec();
                let best = row.iter().copied().fold(f64::INFINITY, f64::min);
                slack = slack.max(v_star[t] - best);
                v[y] = Some(v_star[t]);
                w[y] = Some(row);
            }
            Ok(AgentLimit { v, w, slack })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointAssessment {
    pub policies: Vec<usize>,
    pub slacks: Vec<f64>,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub epsilon: f64,
    pub assessments: Vec<JointAssessment>,
}

impl EquilibriumReport {
    pub fn equilibria(&self) -> Vec<Vec<usize>> {
        self.assessments
            .iter()
            .filter(|a| a.certified)
            .map(|a| a.policies.clone())
            .collect()
    }

    pub fn is_certified(&self, joint: &[usize]) -> bool {
        self.assessments.iter().any(|a| a.certified && a.policies == joint)
    }
}

/// Checks every joint policy of the grids: a joint policy is a subjective
/// ε-equilibrium when every agent's limit slack is at most `ε`.
pub fn enumerate_subjective_equilibria(spec: &TeamSpec, cfg: &MagentConfig) -> Result<EquilibriumReport> {
    let setups = resolve_agents(spec, cfg)?;
    let sizes: Vec<usize> = setups.iter().map(|s| s.grid.len()).collect();
    let total = sizes
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .filter(|&t| t <= MAX_GRID)
        .ok_or_else(|| Error::Size(format!("joint grid of sizes {sizes:?} exceeds {MAX_GRID}")))?;
    let mut assessments = Vec::with_capacity(total);
    for mut idx in 0..total {
        let joint: Vec<usize> = sizes
            .iter()
            .map(|&s| {
                let p = idx % s;
                idx /= s;
                p
            })
            .collect();
        let limits = subjective_limits(spec, cfg, &setups, &joint)?;
        let slacks: Vec<f64> = limits.iter().map(|l| l.slack).collect();
        let certified = slacks.iter().all(|&s| s <= cfg.epsilon + 1e-9);
        assessments.push(JointAssessment {
            policies: joint,
            slacks,
            certified,
        });
    }
    Ok(EquilibriumReport {
        epsilon: cfg.epsilon,
        assessments,
    })
}

impl TeamSpec {
    /// The single-agent game of a finite MDP.
    pub fn from_mdp(mdp: &FiniteMdp, initial_state: usize) -> Self {
        let n_x = mdp.n_states();
        let n_u = mdp.n_actions();
        Self {
            n_agents: 1,
            n_states: n_x,
            n_actions: n_u,
            transition: (0..n_u).map(|u| mdp.kernel().action(u).rows().to_vec()).collect(),
            common_cost: Some(mdp.costs().to_vec()),
            agent_cost: None,
            initial_state,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_visit_replaces_value() {
        let mut rt = AgentRuntime::new(0, 2, 2);
        rt.q[2] = 5.0;
        rt.q[3] = 4.0;
        phase_updates(&mut rt, 0, 1, 1.0, 1, 0.7);
        assert!((rt.q(0, 1) - (1.0 + 0.7 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn two_visits_average() {
        let mut rt = AgentRuntime::new(0, 2, 1);
        phase_updates(&mut rt, 0, 0, 1.0, 1, 0.7);
        phase_updates(&mut rt, 0, 0, 1.0, 1, 0.7);
        assert!((rt.q(0, 0) - 1.0).abs() < 1e-15);
        assert!((rt.j(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_costs_stay_zero() {
        let mut rt = AgentRuntime::new(0, 2, 2);
        for t in 0..50 {
            phase_updates(&mut rt, t % 2, t % 2, 0.0, (t + 1) % 2, 0.9);
        }
        assert!(rt.q_values().iter().chain(rt.j_values()).all(|v| *v == 0.0));
        assert!(is_subjectively_satisfied(&rt, 0.0, 1e-9));
    }

    #[test]
    fn satisfaction_boundary() {
        let mut rt = AgentRuntime::new(0, 2, 2);
        rt.q = vec![1.0, 2.0, 0.5, 0.7];
        rt.j = vec![1.0, 0.5];
        assert!(is_subjectively_satisfied(&rt, 0.0, 0.0));
        rt.j[1] = 0.5 + 0.25 + 0.5;
        assert!(is_subjectively_satisfied(&rt, 0.25, 0.5));
        rt.j[1] += 0.01;
        assert!(!is_subjectively_satisfied(&rt, 0.25, 0.5));
    }

    #[test]
    fn satisfied_agents_draw_nothing() {
        let mut a = rng::stream(1, 0);
        let b = a.clone();
        assert_eq!(policy_transition(3, true, 8, 0.5, &mut a), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn grids() {
        assert_eq!(PolicyGrid::deterministic(2, 2).unwrap().len(), 4);
        assert_eq!(PolicyGrid::quantized(1, 2, 4).unwrap().len(), 5);
        assert!(matches!(PolicyGrid::deterministic(20, 3), Err(Error::Size(_))));
        let p = PolicyTable::deterministic(&[0, 1], 2).unwrap();
        let g = PolicyGrid::from_policies(vec![p.clone(), p.clone()]).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn schedule_doubles_then_caps() {
        let s = PhaseSchedule { initial: 100, cap: 500 };
        assert_eq!((0..5).map(|k| s.length(k)).collect::<Vec<_>>(), vec![100, 200, 400, 500, 500]);
        assert_eq!(s.length(200), 500);
    }
}
