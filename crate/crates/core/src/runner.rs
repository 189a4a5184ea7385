//! Executes a [`RunConfig`] and writes its artifacts to a directory.
//!
//! One replicate writes `summary.json`, `qtable.csv`, `errors.csv`, the
//! induced-model tables and, depending on the configuration, `trace.csv`,
//! `lt_curve.csv`, `phases.csv` and `equilibria.json`. Several replicates
//! run in parallel into `seed_<seed>/` subdirectories, and a top-level
//! summary lists them by seed.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::beliefs::{
    estimate_lt_curve, lipschitz_constant_k2, Belief, BeliefPerception, BeliefQuantizer, LtConfig, LtPoint,
};
use crate::bounds::{
    belief_quant_bound, finite_window_bound, quantized_mdp_bound, BoundInputs, DistortionVariant,
};
use crate::config::{EnvironmentSpec, ExplorationSpec, PerceptionSpec, Regime, RunConfig};
use crate::envs::{
    machine_cost, machine_induced_kernel, machine_stationary_under, policy_value_mc, ContinuousEnv, Controller,
    Environment, FiniteMdpEnv, MachineReplacementEnv, McConfig, McEstimate, PerceptionFactory, PomdpEnv,
};
use crate::error::{Error, Result};
use crate::induced::{estimate_induced_model, value_iteration, InducedModel};
use crate::io;
use crate::magent::{enumerate_subjective_equilibria, run_subjective_q, EquilibriumReport};
use crate::metrics::FiniteDistribution;
use crate::par::{map_indices, ExecMode};
use crate::perception::{Identity, Quantizer, WindowBuffer};
use crate::qcore::{greedy_policy, run_q_learning, ExplorationPolicy, PolicyTable, QTable, RunOptions};

pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const QTABLE_FILE: &str = "qtable.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const INDUCED_COST_FILE: &str = "induced_cost.csv";
pub const INDUCED_KERNEL_FILE: &str = "induced_kernel.csv";
pub const LT_FILE: &str = "lt_curve.csv";
pub const PHASES_FILE: &str = "phases.csv";
pub const EQUILIBRIA_FILE: &str = "equilibria.json";

const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSource {
    /// Model known in closed form.
    Exact,
    /// Model estimated from the run's own trace.
    InducedFromTrace,
    /// No complete model was available.
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Quantized,
    Window,
    Belief,
}

/// A bound value together with everything needed to recompute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub kind: BoundKind,
    pub inputs: BoundInputs,
    pub value: f64,
}

impl BoundRecord {
    pub fn compute(kind: BoundKind, inputs: BoundInputs) -> Result<Self> {
        let value = match kind {
            BoundKind::Quantized => quantized_mdp_bound(&inputs)?,
            BoundKind::Window => finite_window_bound(&inputs)?.value,
            BoundKind::Belief => belief_quant_bound(&inputs, DistortionVariant::Uniform)?.value,
        };
        Ok(Self { kind, inputs, value })
    }

    pub fn recompute(&self) -> Result<f64> {
        Ok(Self::compute(self.kind, self.inputs.clone())?.value)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningSummary {
    pub n_states: usize,
    pub n_actions: usize,
    pub warmup_steps: u64,
    pub greedy_policy: Vec<usize>,
    pub oracle: OracleSource,
    pub final_sup_error: Option<f64>,
    /// Perceived pairs the trace never visited.
    pub unvisited_pairs: Vec<(usize, usize)>,
    /// States the error is measured on when some pairs were never visited.
    pub error_states: Option<Vec<usize>>,
    pub evaluation: Option<McEstimate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagentSummary {
    pub absorbed: bool,
    pub final_policies: Vec<usize>,
    pub steps: u64,
    /// Certified equilibria of the policy grids; absent when the joint grid
    /// is too large to enumerate.
    pub equilibria: Option<Vec<Vec<usize>>>,
    pub final_is_equilibrium: Option<bool>,
    pub enumeration_note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub seed: u64,
    /// The resolved configuration; rerunning it reproduces this directory.
    pub config: RunConfig,
    pub learning: Option<LearningSummary>,
    pub bound: Option<BoundRecord>,
    pub magent: Option<MagentSummary>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateIndex {
    pub version: String,
    pub config: RunConfig,
    pub replicates: Vec<ReplicateEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateEntry {
    pub seed: u64,
    pub dir: PathBuf,
    pub final_sup_error: Option<f64>,
}

pub fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Runs `cfg` into `out`. Replicate `i` uses seed `cfg.seed + i`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Vec<Summary>> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    if cfg.replicates == 1 {
        return Ok(vec![run_single(cfg, out)?]);
    }
    let seeds: Vec<u64> = (0..cfg.replicates as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let results = map_indices(ExecMode::Parallel, seeds.len(), |i| {
        let mut one = cfg.clone();
        one.seed = seeds[i];
        one.replicates = 1;
        let dir = out.join(format!("seed_{}", seeds[i]));
        std::fs::create_dir_all(&dir)?;
        run_single(&one, &dir)
    });
    let mut summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
    summaries.sort_by_key(|s| s.seed);
    let index = ReplicateIndex {
        version: version(),
        config: cfg.clone(),
        replicates: summaries
            .iter()
            .map(|s| ReplicateEntry {
                seed: s.seed,
                dir: PathBuf::from(format!("seed_{}", s.seed)),
                final_sup_error: s.learning.as_ref().and_then(|l| l.final_sup_error),
            })
            .collect(),
    };
    io::write_json(&out.join(SUMMARY_FILE), &index)?;
    Ok(summaries)
}

fn run_single(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let mut summary = Summary {
        version: version(),
        seed: cfg.seed,
        config: cfg.clone(),
        learning: None,
        bound: None,
        magent: None,
        files: Vec::new(),
    };
    match (&cfg.environment, cfg.regime) {
        (EnvironmentSpec::Team(spec), _) => {
            let mcfg = cfg.magent.as_ref().ok_or_else(|| Error::validation("magent", "missing section"))?;
            let run = run_subjective_q(spec, mcfg, cfg.seed)?;
            io::write_phases(&out.join(PHASES_FILE), &run.records)?;
            summary.files.push(PHASES_FILE.into());
            let (equilibria, note) = match enumerate_subjective_equilibria(spec, mcfg) {
                Ok(report) => {
                    io::write_json(&out.join(EQUILIBRIA_FILE), &report)?;
                    summary.files.push(EQUILIBRIA_FILE.into());
                    (Some(report), None)
                }
                Err(e @ (Error::Size(_) | Error::Ergodicity(_))) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            summary.magent = Some(MagentSummary {
                absorbed: run.absorbed,
                final_is_equilibrium: equilibria.as_ref().map(|r: &EquilibriumReport| r.is_certified(&run.final_policies)),
                equilibria: equilibria.map(|r| r.equilibria()),
                final_policies: run.final_policies,
                steps: run.steps,
                enumeration_note: note,
            });
        }
        (EnvironmentSpec::Machine { .. }, _) => {
            let (params, init) = cfg.environment.machine().expect("machine variant");
            let p = params.clone();
            let make = move || MachineReplacementEnv::new(p.clone(), init).expect("validated parameters");
            let factory = usize_factory(cfg, 2, 2)?;
            let exact = match (cfg.regime, exploration_table(cfg, 2, 2)?) {
                (Regime::Mdp, policy) => {
                    let repair = [policy.row(0)[1], policy.row(1)[1]];
                    machine_stationary_under(&params, repair)
                        .and_then(|pi| machine_induced_kernel(&pi))
                        .and_then(|k| {
                            let costs: Vec<Vec<f64>> =
                                (0..2).map(|x| (0..2).map(|u| machine_cost(&params, x, u)).collect()).collect();
                            InducedModel::exact(&costs, &k)
                        })
                        .ok()
                }
                _ => None,
            };
            learn(cfg, &make, &*factory, exact, out, &mut summary)?;
        }
        (EnvironmentSpec::Finite { .. }, _) => {
            let (mdp, initial) = cfg.environment.finite()?.expect("finite variant");
            let mdp = Arc::new(mdp);
            let init = FiniteDistribution::new(initial)?;
            let (ns, na) = (mdp.n_states(), mdp.n_actions());
            let m = Arc::clone(&mdp);
            let make = move || FiniteMdpEnv::new(Arc::clone(&m), init.clone()).expect("validated law");
            let factory = usize_factory(cfg, ns, na)?;
            let exact = match cfg.regime {
                Regime::Mdp => Some(InducedModel::exact(mdp.costs(), mdp.kernel())?),
                _ => None,
            };
            learn(cfg, &make, &*factory, exact, out, &mut summary)?;
        }
        (EnvironmentSpec::Continuous(spec), _) => {
            let PerceptionSpec::Quantizer { cells } = cfg.perception else {
                return Err(Error::validation("perception.kind", "continuous state needs a quantizer"));
            };
            let quantizer = Quantizer::uniform(0.0, 1.0, cells)?;
            let s = spec.clone();
            let make = move || ContinuousEnv::new(s.clone()).expect("validated spec");
            let factory: Box<PerceptionFactory<f64>> = Box::new(move || Box::new(quantizer));
            learn(cfg, &make, &*factory, None, out, &mut summary)?;
            summary.bound = Some(BoundRecord::compute(
                BoundKind::Quantized,
                BoundInputs {
                    alpha_c: spec.alpha_c(),
                    alpha_t: spec.alpha_t(),
                    beta: cfg.beta,
                    c_max: spec.c_max(),
                    l_bar: quantizer.l_bar(),
                    ..Default::default()
                },
            )?);
        }
        (EnvironmentSpec::Pomdp(spec), _) => {
            let model = Arc::new(spec.build()?);
            // Belief learning starts the hidden chain from its invariant law
            // under exploration unless a law is given.
            let init = match (&cfg.perception, &spec.initial) {
                (PerceptionSpec::Belief { .. }, None) => {
                    let mix = match &cfg.exploration {
                        ExplorationSpec::Uniform => vec![1.0 / model.n_actions() as f64; model.n_actions()],
                        ExplorationSpec::Table { rows } => PolicyTable::new(rows.clone())?.mixture(),
                    };
                    FiniteDistribution::new(model.invariant_under(&mix)?)?
                }
                _ => spec.initial_law()?,
            };
            let m = Arc::clone(&model);
            let law = init.clone();
            let make = move || PomdpEnv::new(Arc::clone(&m), law.clone()).expect("validated law");
            match &cfg.perception {
                PerceptionSpec::Belief { denominator, prior } => {
                    let quantizer =
                        Arc::new(BeliefQuantizer::lattice(model.n_hidden(), *denominator, model.distance().clone())?);
                    let prior = match prior {
                        Some(p) => Belief::new(p.clone()).map_err(|e| Error::validation("perception.prior", e.to_string()))?,
                        None => init.clone(),
                    };
                    if prior.len() != model.n_hidden() {
                        return Err(Error::validation("perception.prior", format!("needs {} entries", model.n_hidden())));
                    }
                    let (m, q) = (Arc::clone(&model), Arc::clone(&quantizer));
                    let factory: Box<PerceptionFactory<usize>> = Box::new(move || {
                        Box::new(BeliefPerception::new(Arc::clone(&m), Arc::clone(&q), prior.clone()).expect("checked prior"))
                    });
                    learn(cfg, &make, &*factory, None, out, &mut summary)?;
                    summary.bound = Some(BoundRecord::compute(
                        BoundKind::Belief,
                        BoundInputs {
                            alpha_c: model.cost_lipschitz(),
                            alpha_t: lipschitz_constant_k2(&model)?.k2,
                            beta: cfg.beta,
                            c_max: model.c_max(),
                            l_bar: quantizer.lattice_distortion(*denominator, 8)?,
                            ..Default::default()
                        },
                    )?);
                }
                _ => {
                    let (ny, nu) = (model.n_obs(), model.n_actions());
                    let factory = usize_factory(cfg, ny, nu)?;
                    learn(cfg, &make, &*factory, None, out, &mut summary)?;
                    if let (Some(lt), PerceptionSpec::Window { length, .. }) = (&cfg.lt, &cfg.perception) {
                        let curve = estimate_lt_curve(
                            &model,
                            &vec![1.0 / nu as f64; nu],
                            &LtConfig {
                                window: *length,
                                t_max: lt.t_max,
                                reps: lt.reps,
                                seed: cfg.seed,
                                initial: init.weights().to_vec(),
                                mode: ExecMode::Parallel,
                            },
                        )?;
                        io::write_lt_curve(&out.join(LT_FILE), &curve)?;
                        summary.files.push(LT_FILE.into());
                        summary.bound = Some(BoundRecord::compute(BoundKind::Window, window_inputs(cfg.beta, model.c_max(), &curve))?);
                    }
                }
            }
        }
    }
    summary.files.push(SUMMARY_FILE.into());
    io::write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Bound inputs from an estimated `L_t` curve; past the curve every `L_t`
/// is taken as the last estimate plus two standard errors.
pub fn window_inputs(beta: f64, c_max: f64, curve: &[LtPoint]) -> BoundInputs {
    BoundInputs {
        beta,
        c_max,
        l_curve: curve.iter().map(|p| p.estimate.clamp(0.0, 2.0)).collect(),
        l_tail: curve.last().map(|p| (p.estimate + 2.0 * p.stderr).clamp(0.0, 2.0)),
        ..Default::default()
    }
}

fn exploration_table(cfg: &RunConfig, n_states: usize, n_actions: usize) -> Result<PolicyTable> {
    match &cfg.exploration {
        ExplorationSpec::Uniform => PolicyTable::uniform(n_states, n_actions),
        ExplorationSpec::Table { rows } => {
            let table = PolicyTable::new(rows.clone()).map_err(|e| Error::validation("exploration.rows", e.to_string()))?;
            if table.n_states() != n_states || table.n_actions() != n_actions {
                return Err(Error::validation(
                    "exploration.rows",
                    format!("need {n_states} rows of {n_actions} probabilities"),
                ));
            }
            Ok(table)
        }
    }
}

/// Perception factory for environments with finite observations.
fn usize_factory(
    cfg: &RunConfig,
    n_obs: usize,
    n_actions: usize,
) -> Result<Box<PerceptionFactory<'static, usize>>> {
    match cfg.perception {
        PerceptionSpec::Identity => Ok(Box::new(move || Box::new(Identity::new(n_obs)))),
        PerceptionSpec::Window {
            length,
            include_actions,
        } => {
            let window = WindowBuffer::with_actions(length, n_obs, n_actions, include_actions)
                .map_err(|e| Error::validation("perception.length", e.to_string()))?;
            Ok(Box::new(move || Box::new(window.clone())))
        }
        _ => Err(Error::validation("perception.kind", "does not fit a finite observation space")),
    }
}

fn learn<E>(
    cfg: &RunConfig,
    make_env: &(dyn Fn() -> E + Sync),
    factory: &PerceptionFactory<'_, E::Obs>,
    exact: Option<InducedModel>,
    out: &Path,
    summary: &mut Summary,
) -> Result<()>
where
    E: Environment,
{
    let mut perception = factory();
    let n_states = perception.n_states();
    let mut env = make_env();
    let n_actions = env.n_actions();
    let explore = ExplorationPolicy::new(exploration_table(cfg, n_states, n_actions)?)
        .map_err(|e| Error::validation("exploration.rows", e.to_string()))?;
    let opts = RunOptions {
        steps: cfg.steps,
        beta: cfg.beta,
        seed: cfg.seed,
        initial: Some(QTable::filled(n_states, n_actions, cfg.initial_q)),
        snapshot_every: cfg.snapshot_every,
        // The trace-estimated oracle needs the trace even when it is not written.
        keep_trace: cfg.keep_trace || exact.is_none(),
    };
    let run = run_q_learning(&mut env, &mut perception, &explore, &opts)?;

    if cfg.keep_trace {
        io::write_trace(&out.join(TRACE_FILE), &run.trace)?;
        summary.files.push(TRACE_FILE.into());
    }
    io::write_qtable(&out.join(QTABLE_FILE), &run.table)?;
    summary.files.push(QTABLE_FILE.into());

    let (model, source) = match exact {
        Some(m) => (m, OracleSource::Exact),
        None => (estimate_induced_model(&run.trace, n_states, n_actions)?, OracleSource::InducedFromTrace),
    };
    io::write_induced(&out.join(INDUCED_COST_FILE), &out.join(INDUCED_KERNEL_FILE), &model)?;
    summary.files.extend([INDUCED_COST_FILE.into(), INDUCED_KERNEL_FILE.into()]);
    let unvisited = if source == OracleSource::Exact { Vec::new() } else { model.unvisited() };
    // With unvisited pairs, fall back to the closed set of fully visited
    // states and measure the error there only.
    let (oracle_model, kept) = match (model.is_complete(), model.restricted_to_visited()) {
        (true, _) => (Some(model), None),
        (false, Some((m, kept))) => (Some(m), Some(kept)),
        (false, None) => (None, None),
    };
    let (source, curve) = match oracle_model {
        Some(m) => {
            let q_star = value_iteration(&m, cfg.beta, ORACLE_TOL)?;
            let distance = |q: &QTable| -> Result<f64> {
                match &kept {
                    None => q.sup_distance(&q_star),
                    Some(kept) => Ok(kept
                        .iter()
                        .enumerate()
                        .flat_map(|(i, &s)| (0..n_actions).map(move |u| (i, s, u)))
                        .map(|(i, s, u)| (q.value(s, u) - q_star.value(i, u)).abs())
                        .fold(0.0, f64::max)),
                }
            };
            let mut curve = run
                .snapshots
                .iter()
                .map(|(t, q)| Ok((*t, distance(q)?)))
                .collect::<Result<Vec<_>>>()?;
            if curve.last().map(|c| c.0) != Some(cfg.steps) && cfg.steps > 0 {
                curve.push((cfg.steps, distance(&run.table)?));
            }
            (source, curve)
        }
        None => (OracleSource::Unavailable, Vec::new()),
    };
    io::write_errors(&out.join(ERRORS_FILE), &curve)?;
    summary.files.push(ERRORS_FILE.into());

    let policy = greedy_policy(&run.table);
    let evaluation = match &cfg.evaluation {
        Some(ev) => {
            let mut mc = McConfig::new(cfg.beta, ev.horizon, ev.reps, cfg.seed);
            mc.burn_in = ev.burn_in;
            Some(policy_value_mc(
                make_env,
                &Controller {
                    perception: factory,
                    policy: &policy,
                },
                None,
                &mc,
            )?)
        }
        None => None,
    };
    summary.learning = Some(LearningSummary {
        n_states,
        n_actions,
        warmup_steps: run.warmup_steps,
        greedy_policy: (0..n_states).map(|s| run.table.greedy_action(s)).collect(),
        oracle: source,
        final_sup_error: curve.last().map(|c| c.1),
        unvisited_pairs: unvisited,
        error_states: kept,
        evaluation,
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MACHINE: &str = r#"
regime = "mdp"
beta = 0.7
steps = 20000
snapshot_every = 5000

[environment]
kind = "machine"
"#;

    #[test]
    fn machine_run_writes_its_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_toml(MACHINE).unwrap();
        let s = execute(&cfg, dir.path()).unwrap().remove(0);
        let l = s.learning.unwrap();
        assert_eq!(l.oracle, OracleSource::Exact);
        assert_eq!(l.greedy_policy, vec![1, 0]);
        assert!(l.final_sup_error.unwrap() < 0.2);
        for f in &s.files {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let trace = io::read_trace(&dir.path().join(TRACE_FILE)).unwrap();
        assert_eq!(trace.len(), 20000);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = RunConfig::from_toml(MACHINE).unwrap();
        execute(&cfg, a.path()).unwrap();
        execute(&cfg, b.path()).unwrap();
        for f in [TRACE_FILE, QTABLE_FILE, ERRORS_FILE, SUMMARY_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn replicates_are_sorted_by_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::from_toml(MACHINE).unwrap();
        cfg.replicates = 3;
        cfg.steps = 500;
        cfg.seed = 10;
        let seeds: Vec<u64> = execute(&cfg, dir.path()).unwrap().iter().map(|s| s.seed).collect();
        assert_eq!(seeds, vec![10, 11, 12]);
        let index: ReplicateIndex = io::read_json(&dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(index.replicates.len(), 3);
        assert!(dir.path().join("seed_11").join(QTABLE_FILE).exists());
    }
}
