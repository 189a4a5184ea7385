//! Fully observed finite MDPs.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_action, Environment, Step};
use crate::error::{Error, Result};
use crate::induced::{bellman_fixed_point, policy_evaluation};
use crate::metrics::{ControlledKernel, FiniteDistribution, FiniteKernel};
use crate::qcore::{PolicyTable, QTable};
use crate::rng::{self, sample_index, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FiniteMdpRaw", into = "FiniteMdpRaw")]
pub struct FiniteMdp {
    costs: Vec<Vec<f64>>,
    kernel: ControlledKernel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FiniteMdpRaw {
    /// `costs[s][u]`.
    costs: Vec<Vec<f64>>,
    /// `transition[u][s][s']`.
    transition: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<FiniteMdpRaw> for FiniteMdp {
    type Error = Error;

    fn try_from(raw: FiniteMdpRaw) -> Result<Self> {
        let kernel = raw
            .transition
            .into_iter()
            .enumerate()
            .map(|(u, rows)| {
                FiniteKernel::new(rows).map_err(|e| Error::validation(format!("transition[{u}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        FiniteMdp::new(raw.costs, ControlledKernel::new(kernel)?)
    }
}

impl From<FiniteMdp> for FiniteMdpRaw {
    fn from(m: FiniteMdp) -> Self {
        Self {
            costs: m.costs,
            transition: Vec::<FiniteKernel>::from(m.kernel).into_iter().map(Vec::from).collect(),
        }
    }
}

impl FiniteMdp {
    pub fn new(costs: Vec<Vec<f64>>, kernel: ControlledKernel) -> Result<Self> {
        if costs.len() != kernel.n_states() {
            return Err(Error::validation("costs", "one row per state"));
        }
        for (s, row) in costs.iter().enumerate() {
            if row.len() != kernel.n_actions() {
                return Err(Error::validation(format!("costs[{s}]"), "one entry per action"));
            }
            if row.iter().any(|c| !c.is_finite()) {
                return Err(Error::validation(format!("costs[{s}]"), "costs must be finite"));
            }
        }
        Ok(Self { costs, kernel })
    }

    /// Costs uniform on `[0, 1]` and kernel rows drawn uniformly from the
    /// simplex, so every transition has positive probability.
    pub fn random(n_states: usize, n_actions: usize, rng: &mut Rng) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::dim("empty MDP"));
        }
        let costs = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
            .collect();
        let kernel = (0..n_actions)
            .map(|_| {
                let rows = (0..n_states)
                    .map(|_| {
                        let raw: Vec<f64> = (0..n_states).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                        let total: f64 = raw.iter().sum();
                        raw.iter().map(|r| r / total).collect()
                    })
                    .collect();
                FiniteKernel::new(rows)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(costs, ControlledKernel::new(kernel)?)
    }

    pub fn n_states(&self) -> usize {
        self.costs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.kernel.n_actions()
    }

    pub fn cost(&self, s: usize, u: usize) -> f64 {
        self.costs[s][u]
    }

    pub fn costs(&self) -> &[Vec<f64>] {
        &self.costs
    }

    pub fn kernel(&self) -> &ControlledKernel {
        &self.kernel
    }

    pub fn c_max(&self) -> f64 {
        self.costs.iter().flatten().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn optimal_q(&self, beta: f64, tol: f64) -> Result<QTable> {
        Ok(bellman_fixed_point(&self.costs, &self.kernel, beta, tol)?.0)
    }

    /// Exact discounted value of a stationary policy, per state.
    pub fn policy_values(&self, policy: &PolicyTable, beta: f64) -> Result<Vec<f64>> {
        policy_evaluation(&self.costs, &self.kernel, policy, beta, 1e-12)
    }
}

#[derive(Debug, Clone)]
pub struct FiniteMdpEnv {
    mdp: Arc<FiniteMdp>,
    init: FiniteDistribution,
    state: usize,
    rng: Rng,
}

impl FiniteMdpEnv {
    pub fn new(mdp: Arc<FiniteMdp>, init: FiniteDistribution) -> Result<Self> {
        if init.len() != mdp.n_states() {
            return Err(Error::validation("initial", "one weight per state"));
        }
        Ok(Self {
            mdp,
            init,
            state: 0,
            rng: rng::stream(0, rng::ENV_STREAM),
        })
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }
}

impl Environment for FiniteMdpEnv {
    type Obs = usize;
    type Hidden = usize;

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = rng::stream(seed, rng::ENV_STREAM);
        self.state = sample_index(self.init.weights(), &mut self.rng);
        self.state
    }

    fn step(&mut self, u: usize) -> Result<Step<usize>> {
        check_action(u, self.mdp.n_actions())?;
        let cost = self.mdp.cost(self.state, u);
        self.state = sample_index(self.mdp.kernel.row(self.state, u), &mut self.rng);
        Ok(Step { cost, obs: self.state })
    }

    fn hidden(&self) -> usize {
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_mdp_is_valid_and_seeded() {
        let a = FiniteMdp::random(4, 3, &mut rng::stream(5, 0)).unwrap();
        let b = FiniteMdp::random(4, 3, &mut rng::stream(5, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.kernel().action(0).rows().iter().flatten().all(|p| *p > 0.0));
    }

    #[test]
    fn serde_round_trip() {
        let m = FiniteMdp::random(2, 2, &mut rng::stream(1, 0)).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: FiniteMdp = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn empirical_kernel_matches() {
        let m = Arc::new(FiniteMdp::random(3, 1, &mut rng::stream(2, 0)).unwrap());
        let mut env = FiniteMdpEnv::new(m.clone(), FiniteDistribution::point_mass(3, 0).unwrap()).unwrap();
        let mut s = env.reset(9);
        let mut counts = [[0.0; 3]; 3];
        for _ in 0..200_000 {
            let next = env.step(0).unwrap().obs;
            counts[s][next] += 1.0;
            s = next;
        }
        for (from, row) in counts.iter().enumerate() {
            let total: f64 = row.iter().sum();
            for (to, c) in row.iter().enumerate() {
                assert!((c / total - m.kernel().row(from, 0)[to]).abs() < 0.01);
            }
        }
    }
}
