//! Desk-scale studies: each function runs one experiment end to end and
//! returns a serializable report. The acceptance suite and the command-line
//! harness both build on these.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::beliefs::{
    belief_kernel_eta, belief_w1, estimate_lt_curve, filter_start, filter_update, lipschitz_constant_k2, mixture_w1,
    Belief, BeliefPerception, BeliefQuantizer, LipschitzReport, LtConfig, LtPoint, PomdpModel, TwoStateBeliefOracle,
};
use crate::bounds::{
    belief_quant_bound, finite_window_bound, quantized_mdp_bound, BoundInputs, DistortionVariant, WindowBound,
};
use crate::envs::{
    machine_cost, machine_induced_kernel, machine_stationary, policy_value_mc, ContinuousEnv, ContinuousSpec,
    Controller, Environment, FiniteMdp, FiniteMdpEnv, MachineInit, MachineParams, MachineReplacementEnv, McConfig, McEstimate, PerceptionFactory,
    PomdpEnv, PomdpSpec, TeamSpec,
};
use crate::error::{Error, Result};
use crate::induced::{bellman_fixed_point, convergence_report, policy_evaluation, ConvergenceReport};
use crate::magent::{
    enumerate_subjective_equilibria, run_subjective_q, AgentConfig, GridSpec, MagentConfig, PerceivedMap, PhaseSchedule,
    PolicyGrid,
};
use crate::metrics::{ControlledKernel, FiniteDistribution, FiniteKernel};
use crate::par::{map_indices, ExecMode};
use crate::perception::{Identity, Quantizer, WindowBuffer};
use crate::qcore::{greedy_policy, run_q_learning, ExplorationPolicy, PolicyTable, QTable, RunOptions};
use crate::rng::{self, derive_seed, sample_index};

/// Discount used by the machine-replacement study.
pub const MACHINE_BETA: f64 = 0.7;

/// Repair exactly when the machine is broken.
pub fn machine_state_policy() -> PolicyTable {
    PolicyTable::deterministic(&[1, 0], 2).expect("valid policy")
}

/// On the window `(x_{t−1}, x_t)`, indexed `2·x_{t−1} + x_t`, repair only
/// after two broken readings in a row.
pub fn machine_window_policy() -> PolicyTable {
    PolicyTable::deterministic(&[1, 0, 0, 0], 2).expect("valid policy")
}

fn machine_costs() -> Vec<Vec<f64>> {
    let p = crate::envs::MachineParams::default();
    (0..2).map(|x| (0..2).map(|u| machine_cost(&p, x, u)).collect()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryStudy {
    /// `π(x, w)` indexed `2x + w`.
    pub analytic: Vec<f64>,
    pub empirical: Vec<f64>,
    pub steps: u64,
}

/// Stationary law of the machine under uniform exploration, solved and
/// counted along one trajectory.
pub fn machine_stationary_study(steps: u64, seed: u64) -> Result<StationaryStudy> {
    let mut env = MachineReplacementEnv::standard();
    env.reset(seed);
    let mut act = rng::stream(seed, rng::EXPLORE_STREAM);
    let mut counts = [0u64; 4];
    for _ in 0..steps {
        env.step(act.random_range(0..2))?;
        let (x, w) = env.hidden();
        counts[2 * x + w] += 1;
    }
    Ok(StationaryStudy {
        analytic: machine_stationary().into_inner(),
        empirical: counts.iter().map(|&c| c as f64 / steps.max(1) as f64).collect(),
        steps,
    })
}

/// Optimal Q table of the induced model on `s = x` under uniform
/// exploration, indexed `(x, u)`.
pub fn machine_q_star() -> Result<QTable> {
    let kernel = machine_induced_kernel(&machine_stationary())?;
    Ok(bellman_fixed_point(&machine_costs(), &kernel, MACHINE_BETA, 1e-13)?.0)
}

/// Optimal Q table of the induced model on the window `(x_{t−1}, x_t)`
/// under uniform exploration, indexed `(2·x_{t−1} + x_t, u)`.
pub fn machine_window_q_star() -> Result<QTable> {
    let params = crate::envs::MachineParams::default();
    let noise = |w: usize| {
        let p0 = params.noise_stay_zero[w];
        [p0, 1.0 - p0]
    };
    // Chain on (x_{t−1}, x_t, w_t), indexed 4·x_{t−1} + 2·x_t + w_t.
    let mut rows = vec![vec![0.0; 8]; 8];
    for xp in 0..2 {
        for x in 0..2 {
            for w in 0..2 {
                for u in 0..2 {
                    let x1 = crate::envs::machine_dynamics(x, u, w);
                    for (w1, pw) in noise(w).iter().enumerate() {
                        rows[4 * xp + 2 * x + w][4 * x + 2 * x1 + w1] += 0.5 * pw;
                    }
                }
            }
        }
    }
    let mu = crate::markov::long_run_occupancy(&FiniteKernel::new(rows)?, &[0.125; 8])?;
    let costs = machine_costs();
    let mut window_costs = vec![vec![0.0; 2]; 4];
    let mut per_action = vec![vec![vec![0.0; 4]; 4]; 2];
    for xp in 0..2 {
        for x in 0..2 {
            let s = 2 * xp + x;
            let mass = mu[4 * xp + 2 * x] + mu[4 * xp + 2 * x + 1];
            if mass <= 0.0 {
                return Err(Error::domain(format!("window ({xp}, {x}) has zero stationary mass")));
            }
            for u in 0..2 {
                window_costs[s][u] = costs[x][u];
                for w in 0..2 {
                    let x1 = crate::envs::machine_dynamics(x, u, w);
                    per_action[u][s][2 * x + x1] += mu[4 * xp + 2 * x + w] / mass;
                }
            }
        }
    }
    let kernel = ControlledKernel::new(per_action.into_iter().map(FiniteKernel::new).collect::<Result<Vec<_>>>()?)?;
    Ok(bellman_fixed_point(&window_costs, &kernel, MACHINE_BETA, 1e-13)?.0)
}

/// Q-learning on the window `(x_{t−1}, x_t)` with its error curve against
/// [`machine_window_q_star`].
pub fn machine_window_convergence(steps: u64, seed: u64, snapshot_every: u64) -> Result<(InitRun, QTable)> {
    let q_star = machine_window_q_star()?;
    let mut env = MachineReplacementEnv::standard();
    let mut window = WindowBuffer::observations_only(1, 2, 2)?;
    let mut opts = RunOptions::new(steps, MACHINE_BETA, seed);
    opts.snapshot_every = Some(snapshot_every);
    opts.keep_trace = false;
    let run = run_q_learning(&mut env, &mut window, &ExplorationPolicy::uniform(4, 2)?, &opts)?;
    let report = convergence_report(&run.snapshots, &q_star)?;
    Ok((
        InitRun {
            init: 0.0,
            table: run.table,
            report,
        },
        q_star,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitRun {
    /// Constant initial value of every entry.
    pub init: f64,
    pub table: QTable,
    pub report: ConvergenceReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub q_star: QTable,
    pub runs: Vec<InitRun>,
}

/// Q-learning on `s = x` from each constant initialization, with the error
/// curve against the induced-model fixed point.
pub fn machine_convergence_study(steps: u64, seed: u64, inits: &[f64], snapshot_every: u64) -> Result<ConvergenceStudy> {
    let q_star = machine_q_star()?;
    let runs = map_indices(ExecMode::Parallel, inits.len(), |i| -> Result<InitRun> {
        let mut env = MachineReplacementEnv::standard();
        let mut opts = RunOptions::new(steps, MACHINE_BETA, seed);
        opts.initial = Some(QTable::filled(2, 2, inits[i]));
        opts.snapshot_every = Some(snapshot_every);
        opts.keep_trace = false;
        let run = run_q_learning(&mut env, &mut Identity::new(2), &ExplorationPolicy::uniform(2, 2)?, &opts)?;
        let report = convergence_report(&run.snapshots, &q_star)?;
        Ok(InitRun {
            init: inits[i],
            table: run.table,
            report,
        })
    });
    Ok(ConvergenceStudy {
        q_star,
        runs: runs.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowLearnerStudy {
    pub table: QTable,
    /// Greedy action per window index.
    pub policy: Vec<usize>,
}

/// Q-learning on the observation window `(x_{t−1}, x_t)`.
pub fn machine_window_study(steps: u64, seed: u64) -> Result<WindowLearnerStudy> {
    let mut env = MachineReplacementEnv::standard();
    let mut window = WindowBuffer::observations_only(1, 2, 2)?;
    let mut opts = RunOptions::new(steps, MACHINE_BETA, seed);
    opts.keep_trace = false;
    let run = run_q_learning(&mut env, &mut window, &ExplorationPolicy::uniform(4, 2)?, &opts)?;
    let policy = (0..4).map(|s| run.table.greedy_action(s)).collect();
    Ok(WindowLearnerStudy {
        table: run.table,
        policy,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyValueStudy {
    pub state_policy: McEstimate,
    pub window_policy: McEstimate,
    pub burn_in: usize,
}

/// Discounted costs of the two machine policies started in the stationary
/// regime of the state policy (burn-in under it before each sum).
pub fn machine_policy_values(reps: usize, horizon: usize, burn_in: usize, seed: u64, mode: ExecMode) -> Result<PolicyValueStudy> {
    let (state_policy, window_policy) = policy_values_from(MachineInit::default(), reps, horizon, burn_in, seed, mode)?;
    Ok(PolicyValueStudy {
        state_policy,
        window_policy,
        burn_in,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSensitivity {
    pub x0: usize,
    pub state_policy: McEstimate,
    pub window_policy: McEstimate,
}

/// The same two values without burn-in, from each fixed machine state.
pub fn machine_start_sensitivity(reps: usize, horizon: usize, seed: u64, mode: ExecMode) -> Result<Vec<StartSensitivity>> {
    (0..2)
        .map(|x0| {
            let init = MachineInit { x0, w0: None };
            let (state_policy, window_policy) = policy_values_from(init, reps, horizon, 0, seed, mode)?;
            Ok(StartSensitivity {
                x0,
                state_policy,
                window_policy,
            })
        })
        .collect()
}

fn policy_values_from(
    init: MachineInit,
    reps: usize,
    horizon: usize,
    burn_in: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<(McEstimate, McEstimate)> {
    let make = move || MachineReplacementEnv::new(MachineParams::default(), init).expect("default parameters");
    let state_policy = machine_state_policy();
    let window_policy = machine_window_policy();
    let identity: &PerceptionFactory<usize> = &|| Box::new(Identity::new(2));
    let window: &PerceptionFactory<usize> =
        &|| Box::new(WindowBuffer::observations_only(1, 2, 2).expect("small window"));
    let reference = Controller {
        perception: identity,
        policy: &state_policy,
    };
    let mut cfg = McConfig::new(MACHINE_BETA, horizon, reps, seed);
    cfg.burn_in = burn_in;
    cfg.mode = mode;
    let state = policy_value_mc(&make, &reference, Some(&reference), &cfg)?;
    let target = Controller {
        perception: window,
        policy: &window_policy,
    };
    let win = policy_value_mc(&make, &target, Some(&reference), &cfg)?;
    Ok((state, win))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteMdpStudy {
    pub n_states: usize,
    pub n_actions: usize,
    pub mdp: FiniteMdp,
    pub q_star: QTable,
    pub learned: QTable,
    pub sup_error: f64,
}

/// Q-learning on a random finite MDP (fully observed) against value
/// iteration on the true model.
pub fn finite_mdp_study(n_states: usize, n_actions: usize, steps: u64, beta: f64, seed: u64) -> Result<FiniteMdpStudy> {
    let mut model_rng = rng::stream(seed, rng::MODEL_STREAM);
    let mdp = Arc::new(FiniteMdp::random(n_states, n_actions, &mut model_rng)?);
    let q_star = mdp.optimal_q(beta, 1e-13)?;
    let mut env = FiniteMdpEnv::new(Arc::clone(&mdp), FiniteDistribution::uniform(n_states)?)?;
    let mut opts = RunOptions::new(steps, beta, seed);
    opts.keep_trace = false;
    let run = run_q_learning(
        &mut env,
        &mut Identity::new(n_states),
        &ExplorationPolicy::uniform(n_states, n_actions)?,
        &opts,
    )?;
    let sup_error = run.table.sup_distance(&q_star)?;
    Ok(FiniteMdpStudy {
        n_states,
        n_actions,
        mdp: (*mdp).clone(),
        q_star,
        learned: run.table,
        sup_error,
    })
}

/// Scalar system used for the quantization study: mean reversion toward
/// zero, an optional upward push, and a tracking cost around `0.6`.
pub fn quantization_benchmark() -> ContinuousSpec {
    ContinuousSpec {
        a: 0.5,
        drift: vec![0.0, 0.45],
        sigma: 0.1,
        target: 0.6,
        slope: 1.0,
        action_cost: vec![0.0, 0.1],
        x0: 0.5,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizedPoint {
    pub cells: usize,
    pub policy: Vec<usize>,
    pub bound: f64,
    /// Fine-grid optimal value at `x0`.
    pub optimum: f64,
    pub value: McEstimate,
    /// `value.mean − optimum`.
    pub mc_gap: f64,
    /// Gap of the learned policy evaluated on the fine grid.
    pub grid_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizationSettings {
    pub beta: f64,
    pub steps: u64,
    pub fine_cells: usize,
    pub reps: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for QuantizationSettings {
    fn default() -> Self {
        Self {
            beta: 0.5,
            steps: 200_000,
            fine_cells: 800,
            reps: 4000,
            horizon: 45,
            seed: 5,
        }
    }
}

/// Learns a policy on `M` uniform cells for each `M` and measures its gap
/// to the fine-grid optimum. Monte-Carlo evaluations share seeds across `M`.
pub fn quantization_study(spec: &ContinuousSpec, cells: &[usize], s: &QuantizationSettings) -> Result<Vec<QuantizedPoint>> {
    spec.validate()?;
    let fine = spec.grid_model(s.fine_cells)?;
    let fine_q = fine.mdp.optimal_q(s.beta, 1e-12)?;
    let x0_cell = ((spec.x0 * s.fine_cells as f64) as usize).min(s.fine_cells - 1);
    let optimum = fine_q.state_value(x0_cell);
    cells
        .iter()
        .map(|&m| {
            let quantizer = Quantizer::uniform(0.0, 1.0, m)?;
            let mut env = ContinuousEnv::new(spec.clone())?;
            let mut opts = RunOptions::new(s.steps, s.beta, s.seed);
            opts.keep_trace = false;
            let run = run_q_learning(&mut env, &mut quantizer.clone(), &ExplorationPolicy::uniform(m, spec.n_actions())?, &opts)?;
            let policy = greedy_policy(&run.table);
            let actions: Vec<usize> = (0..m).map(|c| run.table.greedy_action(c)).collect();

            let fine_actions = fine
                .centers
                .iter()
                .map(|&x| quantizer.quantize(x).map(|c| actions[c]))
                .collect::<Result<Vec<_>>>()?;
            let v = fine
                .mdp
                .policy_values(&PolicyTable::deterministic(&fine_actions, spec.n_actions())?, s.beta)?;
            let grid_gap = v[x0_cell] - optimum;

            let factory: &PerceptionFactory<f64> = &move || Box::new(quantizer);
            let make = || ContinuousEnv::new(spec.clone()).expect("validated spec");
            let cfg = McConfig::new(s.beta, s.horizon, s.reps, s.seed);
            let value = policy_value_mc(
                &make,
                &Controller {
                    perception: factory,
                    policy: &policy,
                },
                None,
                &cfg,
            )?;
            let bound = quantized_mdp_bound(&BoundInputs {
                alpha_c: spec.alpha_c(),
                alpha_t: spec.alpha_t(),
                beta: s.beta,
                c_max: spec.c_max(),
                l_bar: quantizer.l_bar(),
                ..Default::default()
            })?;
            Ok(QuantizedPoint {
                cells: m,
                policy: actions,
                bound,
                optimum,
                mc_gap: value.mean - optimum,
                value,
                grid_gap,
            })
        })
        .collect()
}

/// Two hidden states, two actions; action 1 pushes toward state 0 at a
/// price. `observation` is the only free part.
pub fn two_state_pomdp(observation: Vec<Vec<f64>>) -> PomdpSpec {
    let positive = observation.iter().flatten().all(|&p| p > 0.0);
    PomdpSpec {
        transition: vec![
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.9, 0.1], vec![0.8, 0.2]],
        ],
        observation,
        cost: vec![vec![0.0, 0.1], vec![1.0, 1.1]],
        distance: None,
        positive_observation: positive,
        initial: None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowPomdpStudy {
    /// Greedy action per window index `y_{t−1}·|Y| + y_t`.
    pub policy: Vec<usize>,
    /// Expected value of the window policy once the window is full.
    pub value: f64,
    /// Expected optimal belief value at the same time.
    pub optimum: f64,
    pub gap: f64,
    pub lt_curve: Vec<LtPoint>,
    pub bound: WindowBound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSettings {
    pub beta: f64,
    pub steps: u64,
    pub seed: u64,
    pub lt_horizon: usize,
    pub lt_reps: usize,
    pub oracle_grid: usize,
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            beta: 0.5,
            steps: 300_000,
            seed: 6,
            lt_horizon: 12,
            lt_reps: 4000,
            oracle_grid: 2000,
        }
    }
}

/// Learns on the window `(y_{t−1}, y_t)` of a two-state POMDP and computes
/// the policy's exact gap to the belief-MDP optimum, together with the
/// window bound from an estimated `L_t` curve.
///
/// The gap is taken at time 1, after one warm-up action from the uniform
/// exploration law, averaging over `X₀ ~ initial`.
pub fn window_pomdp_study(spec: &PomdpSpec, initial: &[f64], s: &WindowSettings) -> Result<WindowPomdpStudy> {
    let model = Arc::new(spec.build()?);
    let (nx, nu, ny) = (model.n_hidden(), model.n_actions(), model.n_obs());
    let init = FiniteDistribution::new(initial.to_vec())?;
    let mut env = PomdpEnv::new(Arc::clone(&model), init.clone())?;
    let mut window = WindowBuffer::observations_only(1, ny, nu)?;
    let mut opts = RunOptions::new(s.steps, s.beta, s.seed);
    opts.keep_trace = false;
    let run = run_q_learning(&mut env, &mut window, &ExplorationPolicy::uniform(ny * ny, nu)?, &opts)?;
    let policy: Vec<usize> = (0..ny * ny).map(|w| run.table.greedy_action(w)).collect();

    // Chain on (x_t, y_{t−1}, y_t), indexed x·|Y|² + y_{t−1}·|Y| + y_t.
    let n = nx * ny * ny;
    let index = |x: usize, yp: usize, y: usize| x * ny * ny + yp * ny + y;
    let mut costs = vec![vec![0.0; nu]; n];
    let mut per_action = vec![vec![vec![0.0; n]; n]; nu];
    for x in 0..nx {
        for yp in 0..ny {
            for y in 0..ny {
                let i = index(x, yp, y);
                for u in 0..nu {
                    costs[i][u] = model.cost(x, u);
                    for x2 in 0..nx {
                        for y2 in 0..ny {
                            per_action[u][i][index(x2, y, y2)] +=
                                model.transition().row(x, u)[x2] * model.observation().row(x2)[y2];
                        }
                    }
                }
            }
        }
    }
    let kernel = ControlledKernel::new(per_action.into_iter().map(FiniteKernel::new).collect::<Result<Vec<_>>>()?)?;
    let joint_policy: Vec<usize> = (0..n).map(|i| policy[i % (ny * ny)]).collect();
    let v = policy_evaluation(&costs, &kernel, &PolicyTable::deterministic(&joint_policy, nu)?, s.beta, 1e-13)?;
    let oracle = TwoStateBeliefOracle::solve(&model, s.beta, s.oracle_grid, 1e-13)?;

    let mut value = 0.0;
    let mut optimum = 0.0;
    for y0 in 0..ny {
        for u0 in 0..nu {
            for y1 in 0..ny {
                let mut mass = 0.0;
                for x0 in 0..nx {
                    for x1 in 0..nx {
                        let p = initial[x0]
                            * model.observation().row(x0)[y0]
                            * model.transition().row(x0, u0)[x1]
                            * model.observation().row(x1)[y1]
                            / nu as f64;
                        value += p * v[index(x1, y0, y1)];
                        mass += p;
                    }
                }
                if mass > 0.0 {
                    let b = filter_update(&filter_start(&init, y0, &model)?, u0, y1, &model)?;
                    optimum += mass * oracle.value(&b);
                }
            }
        }
    }

    let lt_curve = estimate_lt_curve(
        &model,
        &vec![1.0 / nu as f64; nu],
        &LtConfig {
            window: 1,
            t_max: s.lt_horizon,
            reps: s.lt_reps,
            seed: s.seed,
            initial: initial.to_vec(),
            mode: ExecMode::Parallel,
        },
    )?;
    let last = lt_curve.last().expect("nonempty curve");
    let bound = finite_window_bound(&BoundInputs {
        beta: s.beta,
        c_max: model.c_max(),
        l_curve: lt_curve.iter().map(|p| p.estimate).collect(),
        l_tail: Some((last.estimate + 2.0 * last.stderr).min(2.0)),
        ..Default::default()
    })?;
    Ok(WindowPomdpStudy {
        policy,
        value,
        optimum,
        gap: value - optimum,
        lt_curve,
        bound,
    })
}

fn random_belief(n: usize, rng: &mut rng::Rng) -> Result<Belief> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    Belief::new(raw.into_iter().map(|r| r / total).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterInvariantStudy {
    pub updates: usize,
    /// Largest `|Σ π − 1|` or negative mass over all posteriors.
    pub simplex_error: f64,
    /// Largest deviation of `Σ_y η(y)·π_y` from the one-step prediction,
    /// or of `Σ_y η(y)` from 1.
    pub total_probability_error: f64,
}

/// Random filter updates and belief-kernel decompositions.
pub fn filter_invariant_study(m: &PomdpModel, updates: usize, seed: u64) -> Result<FilterInvariantStudy> {
    let mut r = rng::stream(seed, rng::MODEL_STREAM);
    let (nx, nu) = (m.n_hidden(), m.n_actions());
    let mut simplex_error = 0.0_f64;
    let mut total_probability_error = 0.0_f64;
    for _ in 0..updates {
        let b = random_belief(nx, &mut r)?;
        let u = r.random_range(0..nu);
        let eta = belief_kernel_eta(&b, u, m)?;
        let predicted: Vec<f64> = (0..nx)
            .map(|x2| (0..nx).map(|x| b.weights()[x] * m.transition().row(x, u)[x2]).sum())
            .collect();
        let mut recombined = vec![0.0; nx];
        for (w, atom) in eta.weights.iter().zip(&eta.atoms) {
            for (acc, p) in recombined.iter_mut().zip(atom.weights()) {
                *acc += w * p;
            }
        }
        let weight_sum: f64 = eta.weights.iter().sum();
        total_probability_error = total_probability_error
            .max((weight_sum - 1.0).abs())
            .max(recombined.iter().zip(&predicted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let y = eta.observations[sample_index(&eta.weights, &mut r)];
        let post = filter_update(&b, u, y, m)?;
        let sum: f64 = post.weights().iter().sum();
        let negative = post.weights().iter().fold(0.0_f64, |acc, p| acc.max(-p));
        simplex_error = simplex_error.max((sum - 1.0).abs()).max(negative);
    }
    Ok(FilterInvariantStudy {
        updates,
        simplex_error,
        total_probability_error,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionStudy {
    pub report: LipschitzReport,
    pub pairs: usize,
    /// Largest `W₁(η(a,u), η(b,u)) / W₁(a, b)` over the sampled pairs.
    pub worst_ratio: f64,
    pub violations: usize,
}

/// Samples belief pairs and checks `W₁(η(a,u), η(b,u)) ≤ K₂·W₁(a,b)`.
pub fn contraction_study(m: &PomdpModel, pairs: usize, seed: u64) -> Result<ContractionStudy> {
    let report = lipschitz_constant_k2(m)?;
    let results = map_indices(ExecMode::Parallel, pairs, |i| -> Result<(f64, bool)> {
        let mut r = rng::stream(derive_seed(seed, i as u64), rng::MODEL_STREAM);
        let a = random_belief(m.n_hidden(), &mut r)?;
        let b = random_belief(m.n_hidden(), &mut r)?;
        let u = r.random_range(0..m.n_actions());
        let before = belief_w1(&a, &b, m)?;
        let after = mixture_w1(&belief_kernel_eta(&a, u, m)?, &belief_kernel_eta(&b, u, m)?, m)?;
        let ratio = if before > 0.0 { after / before } else { 0.0 };
        Ok((ratio, after > report.k2 * before + 1e-12))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ContractionStudy {
        report,
        pairs,
        worst_ratio: results.iter().map(|r| r.0).fold(0.0, f64::max),
        violations: results.iter().filter(|r| r.1).count(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeliefLearningStudy {
    pub denominator: usize,
    pub codepoints: usize,
    pub distortion: f64,
    pub policy: Vec<usize>,
    pub value: McEstimate,
    /// Expected optimal value at the first posterior.
    pub optimum: f64,
    pub gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeliefSettings {
    pub beta: f64,
    pub steps: u64,
    pub denominator: usize,
    pub reps: usize,
    pub horizon: usize,
    pub seed: u64,
    pub oracle_grid: usize,
}

impl Default for BeliefSettings {
    fn default() -> Self {
        Self {
            beta: 0.5,
            steps: 300_000,
            denominator: 8,
            reps: 8000,
            horizon: 45,
            seed: 7,
            oracle_grid: 2000,
        }
    }
}

/// Q-learning on quantized filter beliefs, evaluated by Monte Carlo
/// against the two-state belief oracle.
pub fn belief_learning_study(m: Arc<PomdpModel>, prior: &[f64], s: &BeliefSettings) -> Result<BeliefLearningStudy> {
    let quantizer = Arc::new(BeliefQuantizer::lattice(m.n_hidden(), s.denominator, m.distance().clone())?);
    let prior = Belief::new(prior.to_vec())?;
    let mut env = PomdpEnv::new(Arc::clone(&m), prior.clone())?;
    let mut perception = BeliefPerception::new(Arc::clone(&m), Arc::clone(&quantizer), prior.clone())?;
    let mut opts = RunOptions::new(s.steps, s.beta, s.seed);
    opts.keep_trace = false;
    let run = run_q_learning(
        &mut env,
        &mut perception,
        &ExplorationPolicy::uniform(quantizer.len(), m.n_actions())?,
        &opts,
    )?;
    let policy = greedy_policy(&run.table);

    let (model, q, p) = (Arc::clone(&m), Arc::clone(&quantizer), prior.clone());
    let factory: &PerceptionFactory<usize> = &move || {
        Box::new(BeliefPerception::new(Arc::clone(&model), Arc::clone(&q), p.clone()).expect("prior checked"))
    };
    let make = || PomdpEnv::new(Arc::clone(&m), prior.clone()).expect("prior checked");
    let value = policy_value_mc(
        &make,
        &Controller {
            perception: factory,
            policy: &policy,
        },
        None,
        &McConfig::new(s.beta, s.horizon, s.reps, s.seed),
    )?;

    let oracle = TwoStateBeliefOracle::solve(&m, s.beta, s.oracle_grid, 1e-13)?;
    let mut optimum = 0.0;
    for y in 0..m.n_obs() {
        let py: f64 = (0..m.n_hidden()).map(|x| prior.weights()[x] * m.observation().row(x)[y]).sum();
        if py > 0.0 {
            optimum += py * oracle.value(&filter_start(&prior, y, &m)?);
        }
    }
    let distortion = quantizer.lattice_distortion(s.denominator, 8)?;
    let k2 = lipschitz_constant_k2(&m)?;
    let bound = belief_quant_bound(
        &BoundInputs {
            alpha_c: m.cost_lipschitz(),
            alpha_t: k2.k2,
            beta: s.beta,
            c_max: m.c_max(),
            l_bar: distortion,
            ..Default::default()
        },
        DistortionVariant::Uniform,
    )?
    .value;
    Ok(BeliefLearningStudy {
        denominator: s.denominator,
        codepoints: quantizer.len(),
        distortion,
        policy: (0..quantizer.len()).map(|c| run.table.greedy_action(c)).collect(),
        gap: value.mean - optimum,
        value,
        optimum,
        bound,
    })
}

/// Two agents on a two-state chain with a shared cost. The chain moves
/// toward the good state only when both agents push (action 1), and every
/// push costs a little. All matched deterministic profiles are subjective
/// equilibria; mismatched ones are not.
pub fn coordination_game() -> TeamSpec {
    let mut transition = Vec::with_capacity(4);
    let mut cost = vec![vec![0.0; 4]; 2];
    for j in 0..4 {
        let (a0, a1) = (j % 2, j / 2);
        let row = if a0 == 1 && a1 == 1 { vec![0.2, 0.8] } else { vec![0.8, 0.2] };
        transition.push(vec![row.clone(), row]);
        for (x, costs) in cost.iter_mut().enumerate() {
            costs[j] = if x == 0 { 1.0 } else { 0.0 } + 0.1 * (a0 + a1) as f64;
        }
    }
    TeamSpec {
        n_agents: 2,
        n_states: 2,
        n_actions: 2,
        transition,
        common_cost: Some(cost),
        agent_cost: None,
        initial_state: 0,
    }
}

/// Phase settings shared by the multi-agent studies.
pub fn magent_settings(n_agents: usize, epsilon: f64, tolerance: f64) -> MagentConfig {
    let agent = AgentConfig {
        perception: PerceivedMap::Global,
        grid: GridSpec::Deterministic,
        inertia: 0.5,
        tolerance,
        initial_policy: None,
    };
    MagentConfig {
        beta: 0.5,
        epsilon,
        rho: 0.1,
        phases: 60,
        schedule: PhaseSchedule {
            initial: 2000,
            cap: 20_000,
        },
        agents: vec![agent; n_agents],
        absorption_phases: 2,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagentOutcome {
    pub seed: u64,
    pub absorbed: bool,
    pub final_policies: Vec<usize>,
    /// Certified subjective equilibrium (team) or true gap within `ε + d`
    /// (single agent).
    pub accepted: bool,
    /// Largest true value gap of the final policy (single agent only).
    pub true_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagentStudy {
    pub config: MagentConfig,
    pub equilibria: Vec<Vec<usize>>,
    pub outcomes: Vec<MagentOutcome>,
}

impl MagentStudy {
    pub fn success_fraction(&self) -> f64 {
        let ok = self.outcomes.iter().filter(|o| o.absorbed && o.accepted).count();
        ok as f64 / self.outcomes.len().max(1) as f64
    }
}

/// Runs the phase dynamics on `spec` for `runs` seeds and classifies the
/// final joint policy against the brute-force equilibrium list.
pub fn magent_team_study(spec: &TeamSpec, cfg: &MagentConfig, runs: usize, seed: u64) -> Result<MagentStudy> {
    let report = enumerate_subjective_equilibria(spec, cfg)?;
    let outcomes = map_indices(ExecMode::Parallel, runs, |i| -> Result<MagentOutcome> {
        let s = derive_seed(seed, i as u64);
        let run = run_subjective_q(spec, cfg, s)?;
        Ok(MagentOutcome {
            seed: s,
            absorbed: run.absorbed,
            accepted: report.is_certified(&run.final_policies),
            final_policies: run.final_policies,
            true_gap: None,
        })
    });
    Ok(MagentStudy {
        config: cfg.clone(),
        equilibria: report.equilibria(),
        outcomes: outcomes.into_iter().collect::<Result<_>>()?,
    })
}

/// Single-agent degeneration on a random finite MDP: a run counts when it
/// absorbs at a policy whose true value is within `ε + d` of optimal in
/// every state.
pub fn magent_single_study(n_states: usize, n_actions: usize, cfg: &MagentConfig, runs: usize, seed: u64) -> Result<MagentStudy> {
    if cfg.agents.len() != 1 {
        return Err(Error::validation("magent.agents", "single-agent study takes one agent"));
    }
    let mdp = FiniteMdp::random(n_states, n_actions, &mut rng::stream(seed, rng::MODEL_STREAM))?;
    let spec = TeamSpec::from_mdp(&mdp, 0);
    let grid = PolicyGrid::deterministic(n_states, n_actions)?;
    let q_star = mdp.optimal_q(cfg.beta, 1e-13)?;
    let slack = cfg.epsilon + cfg.agents[0].tolerance;
    let report = enumerate_subjective_equilibria(&spec, cfg)?;
    let outcomes = map_indices(ExecMode::Parallel, runs, |i| -> Result<MagentOutcome> {
        let s = derive_seed(seed, i as u64);
        let run = run_subjective_q(&spec, cfg, s)?;
        let v = mdp.policy_values(grid.get(run.final_policies[0]), cfg.beta)?;
        let gap = (0..n_states).map(|x| v[x] - q_star.state_value(x)).fold(0.0, f64::max);
        Ok(MagentOutcome {
            seed: s,
            absorbed: run.absorbed,
            accepted: gap <= slack,
            final_policies: run.final_policies,
            true_gap: Some(gap),
        })
    });
    Ok(MagentStudy {
        config: cfg.clone(),
        equilibria: report.equilibria(),
        outcomes: outcomes.into_iter().collect::<Result<_>>()?,
    })
}

/// A model whose belief kernel contracts (`K₂ = 0.6` under the discrete
/// metric), with noisy positive observations.
pub fn contracting_pomdp() -> Result<PomdpModel> {
    two_state_pomdp(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn machine_q_star_prefers_repairing_broken() {
        let q = machine_q_star().unwrap();
        assert_eq!(q.greedy_action(0), 1);
        assert_eq!(q.greedy_action(1), 0);
    }

    #[test]
    fn window_q_star_matches_learned_policy() {
        let q = machine_window_q_star().unwrap();
        let greedy: Vec<usize> = (0..4).map(|s| q.greedy_action(s)).collect();
        assert_eq!(greedy, vec![1, 0, 0, 0]);
    }

    #[test]
    fn coordination_game_validates() {
        let g = coordination_game();
        g.validate().unwrap();
        assert_eq!(g.cost(0, 1, 3), 0.2);
    }

    #[test]
    fn contracting_model_constant() {
        let k = lipschitz_constant_k2(&contracting_pomdp().unwrap()).unwrap();
        assert!((k.k2 - 0.6).abs() < 1e-12);
        assert!(k.contracts);
    }

    #[test]
    fn filter_invariants_small() {
        let s = filter_invariant_study(&contracting_pomdp().unwrap(), 200, 1).unwrap();
        assert!(s.simplex_error < 1e-12 && s.total_probability_error < 1e-12);
    }
}
