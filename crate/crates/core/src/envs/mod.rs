//! Environments and Monte-Carlo policy evaluation.
//!
//! An environment owns its hidden state and its own random stream. The
//! learner sees only the observation payload and the realized cost; the
//! `hidden` accessor exists for oracles and diagnostics.

mod continuous;
mod finite;
mod machine;
mod pomdp;
mod team;

pub use continuous::{ContinuousEnv, ContinuousSpec, GridModel};
pub use finite::{FiniteMdp, FiniteMdpEnv};
pub use machine::{
    machine_cost, machine_dynamics, machine_induced_kernel, machine_stationary,
    machine_stationary_under, MachineInit, MachineParams, MachineReplacementEnv,
};
pub use pomdp::{PomdpEnv, PomdpSpec};
pub use team::{TeamEnv, TeamSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_indices, ExecMode};
use crate::perception::Perception;
use crate::qcore::PolicyTable;
use crate::rng::{self, derive_seed, sample_index};

/// Outcome of one environment step: the cost of the current state and
/// action, and the observation of the next state.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<O> {
    pub cost: f64,
    pub obs: O,
}

pub trait Environment {
    type Obs: Clone;
    type Hidden: Clone + std::fmt::Debug;

    fn n_actions(&self) -> usize;

    /// Reseeds the environment's stream, draws the initial hidden state and
    /// returns its observation.
    fn reset(&mut self, seed: u64) -> Self::Obs;

    fn step(&mut self, action: usize) -> Result<Step<Self::Obs>>;

    fn hidden(&self) -> Self::Hidden;
}

pub(crate) fn check_action(action: usize, n_actions: usize) -> Result<()> {
    if action >= n_actions {
        return Err(Error::dim(format!("action {action} of {n_actions}")));
    }
    Ok(())
}

pub type PerceptionFactory<'a, O> = dyn Fn() -> Box<dyn Perception<O>> + Sync + 'a;

/// A policy together with the perceived-state map it reads.
pub struct Controller<'a, O> {
    pub perception: &'a PerceptionFactory<'a, O>,
    pub policy: &'a PolicyTable,
}

impl<O> Controller<'_, O> {
    fn act<R: rand::Rng>(&self, state: Option<usize>, rng: &mut R) -> usize {
        match state {
            Some(s) => self.policy.sample(s, rng),
            None => sample_index(&self.policy.mixture(), rng),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub beta: f64,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    /// Steps simulated before the discounted sum starts. The burn-in is
    /// driven by the reference controller when one is given, otherwise by
    /// the evaluated policy itself.
    pub burn_in: usize,
    #[serde(default)]
    pub mode: ExecMode,
}

impl McConfig {
    pub fn new(beta: f64, horizon: usize, reps: usize, seed: u64) -> Self {
        Self {
            beta,
            horizon,
            reps,
            seed,
            burn_in: 0,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n).sqrt(),
            reps: samples.len(),
        }
    }
}

/// Monte-Carlo estimate of `E Σ_{t<horizon} βᵗ c_t` for `target`.
///
/// Each replicate builds a fresh environment, reseeds it from
/// `derive_seed(cfg.seed, rep)`, runs `cfg.burn_in` steps under the
/// reference controller (or the target, when none is given) and then sums
/// discounted costs under the target. Both perceptions see the whole
/// history, so a window policy starts with a full buffer.
pub fn policy_value_mc<E: Environment>(
    make_env: &(dyn Fn() -> E + Sync),
    target: &Controller<'_, E::Obs>,
    reference: Option<&Controller<'_, E::Obs>>,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(Error::domain(format!("discount {} outside (0,1)", cfg.beta)));
    }
    if cfg.reps == 0 {
        return Err(Error::domain("zero Monte-Carlo replicates"));
    }
    let samples = map_indices(cfg.mode, cfg.reps, |rep| {
        let seed = derive_seed(cfg.seed, rep as u64);
        let mut env = make_env();
        let mut rng = rng::stream(seed, rng::EXPLORE_STREAM);
        let obs = env.reset(seed);
        let mut target_p = (target.perception)();
        let mut target_s = target_p.start(&obs)?;
        let mut reference_p = reference.map(|r| (r.perception)());
        let mut reference_s = match reference_p.as_mut() {
            Some(p) => p.start(&obs)?,
            None => None,
        };
        for t in 0..cfg.burn_in {
            let u = match reference {
                Some(r) => r.act(reference_s, &mut rng),
                None => target.act(target_s, &mut rng),
            };
            let step = env.step(u).map_err(|e| Error::Environment {
                step: t as u64,
                source: Box::new(e),
            })?;
            target_s = target_p.advance(u, &step.obs)?;
            if let Some(p) = reference_p.as_mut() {
                reference_s = p.advance(u, &step.obs)?;
            }
        }
        let mut total = 0.0;
        let mut discount = 1.0;
        for t in 0..cfg.horizon {
            let u = target.act(target_s, &mut rng);
            let step = env.step(u).map_err(|e| Error::Environment {
                step: (cfg.burn_in + t) as u64,
                source: Box::new(e),
            })?;
            total += discount * step.cost;
            discount *= cfg.beta;
            target_s = target_p.advance(u, &step.obs)?;
        }
        Ok(total)
    });
    let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_samples(&samples))
}
