//! Scalar continuous-state MDP on `[0, 1]`.
//!
//! `x' = clamp(a·x + drift[u] + σ·ξ, 0, 1)` with `ξ` standard normal, and
//! cost `c(x, u) = slope·|x − target| + action_cost[u]`. The clamp is
//! 1-Lipschitz, so the kernel is `|a|`-Lipschitz in W₁ and the cost is
//! `slope`-Lipschitz.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{check_action, Environment, FiniteMdp, Step};
use crate::error::{Error, Result};
use crate::metrics::{ControlledKernel, FiniteKernel};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    pub a: f64,
    pub drift: Vec<f64>,
    pub sigma: f64,
    pub target: f64,
    pub slope: f64,
    pub action_cost: Vec<f64>,
    #[serde(default = "default_x0")]
    pub x0: f64,
}

fn default_x0() -> f64 {
    0.5
}

impl ContinuousSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(Error::validation("a", "must be finite"));
        }
        if self.drift.is_empty() {
            return Err(Error::validation("drift", "need at least one action"));
        }
        if self.drift.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("drift", "must be finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::validation("sigma", "must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.target) {
            return Err(Error::validation("target", "must lie in [0,1]"));
        }
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(Error::validation("slope", "Lipschitz constant must be positive"));
        }
        if self.action_cost.len() != self.drift.len() {
            return Err(Error::validation("action_cost", "one entry per action"));
        }
        if self.action_cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("action_cost", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(Error::validation("x0", "must lie in [0,1]"));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.drift.len()
    }

    /// Cost Lipschitz constant.
    pub fn alpha_c(&self) -> f64 {
        self.slope
    }

    /// Kernel Lipschitz constant in W₁.
    pub fn alpha_t(&self) -> f64 {
        self.a.abs()
    }

    pub fn c_max(&self) -> f64 {
        let reach = self.target.max(1.0 - self.target);
        self.action_cost
            .iter()
            .map(|c| (self.slope * reach + c).abs().max(c.abs()))
            .fold(0.0, f64::max)
    }

    pub fn cost(&self, x: f64, u: usize) -> f64 {
        self.slope * (x - self.target).abs() + self.action_cost[u]
    }

    pub fn mean_next(&self, x: f64, u: usize) -> f64 {
        self.a * x + self.drift[u]
    }

    /// Finite model on `n` equal cells of `[0, 1]`, represented by their
    /// midpoints. Cell `j` receives the probability that the clamped next
    /// state lands in it, starting from the midpoint of the source cell.
    pub fn grid_model(&self, n: usize) -> Result<GridModel> {
        self.validate()?;
        if n == 0 {
            return Err(Error::dim("grid needs at least one cell"));
        }
        let centers: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let costs = centers
            .iter()
            .map(|&x| (0..self.n_actions()).map(|u| self.cost(x, u)).collect())
            .collect();
        let per_action = (0..self.n_actions())
            .map(|u| {
                let rows = centers.iter().map(|&x| self.cell_masses(self.mean_next(x, u), n)).collect();
                FiniteKernel::new(rows)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridModel {
            centers,
            mdp: FiniteMdp::new(costs, ControlledKernel::new(per_action)?)?,
        })
    }

    fn cell_masses(&self, mean: f64, n: usize) -> Vec<f64> {
        let mut row = vec![0.0; n];
        if self.sigma == 0.0 {
            let x = mean.clamp(0.0, 1.0);
            row[((x * n as f64) as usize).min(n - 1)] = 1.0;
            return row;
        }
        let normal = Normal::new(mean, self.sigma).expect("positive sigma");
        let mut prev = 0.0;
        for (j, slot) in row.iter_mut().enumerate() {
            let upper = if j + 1 == n {
                1.0
            } else {
                normal.cdf((j + 1) as f64 / n as f64)
            };
            *slot = (upper - prev).max(0.0);
            prev = upper;
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        row
    }
}

/// Fine-grid discretization used as the optimal-value oracle.
#[derive(Debug, Clone)]
pub struct GridModel {
    pub centers: Vec<f64>,
    pub mdp: FiniteMdp,
}

#[derive(Debug, Clone)]
pub struct ContinuousEnv {
    spec: ContinuousSpec,
    x: f64,
    rng: Rng,
}

impl ContinuousEnv {
    pub fn new(spec: ContinuousSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            x: spec.x0,
            spec,
            rng: rng::stream(0, rng::ENV_STREAM),
        })
    }

    pub fn spec(&self) -> &ContinuousSpec {
        &self.spec
    }
}

impl Environment for ContinuousEnv {
    type Obs = f64;
    type Hidden = f64;

    fn n_actions(&self) -> usize {
        self.spec.n_actions()
    }

    fn reset(&mut self, seed: u64) -> f64 {
        self.rng = rng::stream(seed, rng::ENV_STREAM);
        self.x = self.spec.x0;
        self.x
    }

    fn step(&mut self, u: usize) -> Result<Step<f64>> {
        check_action(u, self.spec.n_actions())?;
        let cost = self.spec.cost(self.x, u);
        let noise: f64 = if self.spec.sigma > 0.0 {
            StandardNormal.sample(&mut self.rng)
        } else {
            0.0
        };
        self.x = (self.spec.mean_next(self.x, u) + self.spec.sigma * noise).clamp(0.0, 1.0);
        Ok(Step { cost, obs: self.x })
    }

    fn hidden(&self) -> f64 {
        self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ContinuousSpec {
        ContinuousSpec {
            a: 0.5,
            drift: vec![0.0, 0.0],
            sigma: 0.0,
            target: 0.0,
            slope: 1.0,
            action_cost: vec![0.0, 0.1],
            x0: 0.3,
        }
    }

    #[test]
    fn noiseless_linear_recursion() {
        let mut env = ContinuousEnv::new(spec()).unwrap();
        assert_eq!(env.reset(1), 0.3);
        for t in 1..20 {
            let x = env.step(0).unwrap().obs;
            assert!((x - 0.5f64.powi(t) * 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = spec();
        s.slope = 0.0;
        assert!(matches!(s.validate(), Err(Error::Validation { .. })));
        let mut s = spec();
        s.action_cost.pop();
        assert!(matches!(s.validate(), Err(Error::Validation { path, .. }) if path == "action_cost"));
    }

    #[test]
    fn grid_rows_are_stochastic() {
        let mut s = spec();
        s.sigma = 0.1;
        s.drift = vec![0.1, 0.4];
        let g = s.grid_model(64).unwrap();
        for u in 0..2 {
            for row in g.mdp.kernel().action(u).rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constants() {
        let s = spec();
        assert_eq!(s.alpha_c(), 1.0);
        assert_eq!(s.alpha_t(), 0.5);
        assert!((s.c_max() - 1.1).abs() < 1e-15);
    }
}
