//! Machine replacement with Markov (non-i.i.d.) breakdown noise.
//!
//! `x = 1` means the machine works, `u = 1` means it is repaired this step.
//! Noise `w = 1` breaks the machine at the next step whatever is done;
//! with `w = 0` a repair fixes it and an unrepaired broken machine stays
//! broken. The noise is itself a two-state Markov chain, so `x` alone is not
//! a controlled Markov chain.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_action, Environment, Step};
use crate::error::{Error, Result};
use crate::metrics::{ControlledKernel, FiniteDistribution, FiniteKernel};
use crate::rng::{self, Rng};

/// Next machine state `f(x, u, w)`.
pub fn machine_dynamics(x: usize, u: usize, w: usize) -> usize {
    match (x, u, w) {
        (_, _, 1) => 0,
        (0, 0, 0) => 0,
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineParams {
    /// R, paid whenever the machine is repaired.
    pub repair_cost: f64,
    /// E, paid whenever the machine is broken.
    pub broken_cost: f64,
    /// `P(w' = 0 | w)` for `w = 0, 1`.
    pub noise_stay_zero: [f64; 2],
}

impl Default for MachineParams {
    fn default() -> Self {
        Self {
            repair_cost: 1.0,
            broken_cost: 1.5,
            noise_stay_zero: [0.9, 0.4],
        }
    }
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.noise_stay_zero.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::validation(
                    format!("noise_stay_zero[{i}]"),
                    format!("{p} is not a probability"),
                ));
            }
        }
        if !self.repair_cost.is_finite() || !self.broken_cost.is_finite() {
            return Err(Error::validation("repair_cost", "costs must be finite"));
        }
        Ok(())
    }

    fn noise_row(&self, w: usize) -> [f64; 2] {
        let p0 = self.noise_stay_zero[w];
        [p0, 1.0 - p0]
    }

    /// Stationary law of the autonomous noise chain.
    pub fn noise_stationary(&self) -> [f64; 2] {
        let (a, b) = (1.0 - self.noise_stay_zero[0], self.noise_stay_zero[1]);
        if a + b == 0.0 {
            return [1.0, 0.0];
        }
        [b / (a + b), a / (a + b)]
    }
}

/// One-stage cost: `c(0,1) = R+E`, `c(0,0) = E`, `c(1,0) = 0`, `c(1,1) = R`.
pub fn machine_cost(params: &MachineParams, x: usize, u: usize) -> f64 {
    match (x, u) {
        (0, 1) => params.repair_cost + params.broken_cost,
        (0, _) => params.broken_cost,
        (_, 0) => 0.0,
        _ => params.repair_cost,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineInit {
    pub x0: usize,
    /// Fixed initial noise; drawn from the noise chain's stationary law
    /// when absent.
    pub w0: Option<usize>,
}

impl Default for MachineInit {
    fn default() -> Self {
        Self { x0: 1, w0: None }
    }
}

#[derive(Debug, Clone)]
pub struct MachineReplacementEnv {
    params: MachineParams,
    init: MachineInit,
    x: usize,
    w: usize,
    rng: Rng,
}

impl MachineReplacementEnv {
    pub fn new(params: MachineParams, init: MachineInit) -> Result<Self> {
        params.validate()?;
        if init.x0 > 1 || init.w0.is_some_and(|w| w > 1) {
            return Err(Error::validation("init", "machine and noise states are 0 or 1"));
        }
        Ok(Self {
            params,
            init,
            x: init.x0,
            w: 0,
            rng: rng::stream(0, rng::ENV_STREAM),
        })
    }

    pub fn standard() -> Self {
        Self::new(MachineParams::default(), MachineInit::default()).expect("default params are valid")
    }

    pub fn params(&self) -> &MachineParams {
        &self.params
    }
}

impl Environment for MachineReplacementEnv {
    type Obs = usize;
    type Hidden = (usize, usize);

    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = rng::stream(seed, rng::ENV_STREAM);
        self.x = self.init.x0;
        self.w = match self.init.w0 {
            Some(w) => w,
            None => {
                let p0 = self.params.noise_stationary()[0];
                usize::from(self.rng.random::<f64>() >= p0)
            }
        };
        self.x
    }

    fn step(&mut self, u: usize) -> Result<Step<usize>> {
        check_action(u, 2)?;
        let cost = machine_cost(&self.params, self.x, u);
        self.x = machine_dynamics(self.x, u, self.w);
        let p0 = self.params.noise_row(self.w)[0];
        self.w = usize::from(self.rng.random::<f64>() >= p0);
        Ok(Step { cost, obs: self.x })
    }

    fn hidden(&self) -> (usize, usize) {
        (self.x, self.w)
    }
}

/// Joint `(x, w)` chain when repairs happen with probability
/// `repair_prob[x]`. States are indexed `2x + w`.
fn joint_chain(params: &MachineParams, repair_prob: [f64; 2]) -> Result<FiniteKernel> {
    let mut rows = vec![vec![0.0; 4]; 4];
    for x in 0..2 {
        for w in 0..2 {
            for u in 0..2 {
                let pu = if u == 1 { repair_prob[x] } else { 1.0 - repair_prob[x] };
                let x1 = machine_dynamics(x, u, w);
                for (w1, pw) in params.noise_row(w).iter().enumerate() {
                    rows[2 * x + w][2 * x1 + w1] += pu * pw;
                }
            }
        }
    }
    FiniteKernel::new(rows)
}

/// Stationary law of `(x, w)` under the uniform exploration policy, indexed
/// `2x + w`.
pub fn machine_stationary() -> FiniteDistribution {
    machine_stationary_under(&MachineParams::default(), [0.5, 0.5])
        .expect("the default chain is irreducible")
}

/// Stationary law of `(x, w)` when repairs happen with probability
/// `repair_prob[x]`.
pub fn machine_stationary_under(
    params: &MachineParams,
    repair_prob: [f64; 2],
) -> Result<FiniteDistribution> {
    let chain = joint_chain(params, repair_prob)?;
    let mu = crate::markov::long_run_occupancy(&chain, &[0.25; 4])?;
    // The solve is exact up to rounding; renormalize the rounding only.
    let total: f64 = mu.iter().sum();
    FiniteDistribution::new(mu.iter().map(|m| m / total).collect())
}

/// Induced kernel on `s = x` under uniform exploration:
/// `P*(s₁ | s, u) = Σ_w 1{s₁ = f(s,u,w)} π(s,w) / Σ_w π(s,w)`.
pub fn machine_induced_kernel(pi: &FiniteDistribution) -> Result<ControlledKernel> {
    if pi.len() != 4 {
        return Err(Error::dim("machine stationary law has 4 atoms (x, w)"));
    }
    let pi = pi.weights();
    let mut per_action = Vec::with_capacity(2);
    for u in 0..2 {
        let mut rows = Vec::with_capacity(2);
        for s in 0..2 {
            let mass = pi[2 * s] + pi[2 * s + 1];
            if mass <= 0.0 {
                return Err(Error::domain(format!("state x={s} has zero stationary mass")));
            }
            let mut row = [0.0; 2];
            for w in 0..2 {
                row[machine_dynamics(s, u, w)] += pi[2 * s + w] / mass;
            }
            rows.push(row.to_vec());
        }
        per_action.push(FiniteKernel::new(rows)?);
    }
    ControlledKernel::new(per_action)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dynamics_table_matches_listing() {
        let table = [
            ((0, 0, 0), 0),
            ((0, 0, 1), 0),
            ((0, 1, 0), 1),
            ((0, 1, 1), 0),
            ((1, 0, 0), 1),
            ((1, 0, 1), 0),
            ((1, 1, 0), 1),
            ((1, 1, 1), 0),
        ];
        for ((x, u, w), x1) in table {
            assert_eq!(machine_dynamics(x, u, w), x1, "f({x},{u},{w})");
        }
    }

    #[test]
    fn cost_table() {
        let p = MachineParams::default();
        assert_eq!(machine_cost(&p, 0, 1), 2.5);
        assert_eq!(machine_cost(&p, 0, 0), 1.5);
        assert_eq!(machine_cost(&p, 1, 0), 0.0);
        assert_eq!(machine_cost(&p, 1, 1), 1.0);
    }

    #[test]
    fn stationary_matches_reference_values() {
        let pi = machine_stationary();
        let expected = [0.145, 0.127, 0.654, 0.0728];
        for (got, want) in pi.weights().iter().zip(expected) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        let w0 = pi.weights()[0] + pi.weights()[2];
        assert!((w0 - 0.8).abs() < 1e-12);
        assert!((pi.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn induced_kernel_values() {
        let k = machine_induced_kernel(&machine_stationary()).unwrap();
        assert_eq!(k.row(0, 0), &[1.0, 0.0]);
        assert!((k.row(0, 1)[1] - 0.145 / (0.145 + 0.127)).abs() < 2e-3);
        assert!((k.row(1, 0)[1] - 0.654 / (0.654 + 0.0728)).abs() < 2e-3);
    }

    #[test]
    fn induced_kernel_rejects_zero_mass() {
        let pi = FiniteDistribution::new(vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        assert!(matches!(machine_induced_kernel(&pi), Err(Error::Domain(_))));
    }

    #[test]
    fn env_is_reproducible() {
        let mut a = MachineReplacementEnv::standard();
        let mut b = MachineReplacementEnv::standard();
        a.reset(11);
        b.reset(11);
        for t in 0..1000 {
            let u = t % 2;
            assert_eq!(a.step(u).unwrap(), b.step(u).unwrap());
        }
        assert!(a.step(2).is_err());
    }
}
