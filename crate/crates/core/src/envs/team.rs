//! Stochastic game on a shared finite state with simultaneous moves.
//!
//! Joint actions are encoded in mixed radix with agent 0 least
//! significant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ControlledKernel, FiniteKernel};
use crate::rng::{self, sample_index, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamSpec {
    pub n_agents: usize,
    pub n_states: usize,
    /// Actions per agent.
    pub n_actions: usize,
    /// `transition[joint][x][x']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Cost shared by every agent, `common_cost[x][joint]`.
    #[serde(default)]
    pub common_cost: Option<Vec<Vec<f64>>>,
    /// Per-agent costs, `agent_cost[i][x][joint]`.
    #[serde(default)]
    pub agent_cost: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub initial_state: usize,
}

impl TeamSpec {
    pub fn n_joint(&self) -> usize {
        self.n_actions.pow(self.n_agents as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::validation("n_agents", "agents, states and actions must be positive"));
        }
        let joint = self
            .n_actions
            .checked_pow(self.n_agents as u32)
            .ok_or_else(|| Error::validation("n_agents", "joint action space too large"))?;
        if self.transition.len() != joint {
            return Err(Error::validation("transition", format!("expected {joint} joint actions")));
        }
        for (a, rows) in self.transition.iter().enumerate() {
            let k = FiniteKernel::new(rows.clone()).map_err(|e| Error::validation(format!("transition[{a}]"), e.to_string()))?;
            if k.n_from() != self.n_states || k.n_to() != self.n_states {
                return Err(Error::validation(format!("transition[{a}]"), "must be n_states x n_states"));
            }
        }
        let check_table = |path: String, t: &Vec<Vec<f64>>| -> Result<()> {
            if t.len() != self.n_states || t.iter().any(|r| r.len() != joint) {
                return Err(Error::validation(path, "shape must be [state][joint action]"));
            }
            if t.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::validation(path, "costs must be finite"));
            }
            Ok(())
        };
        match (&self.common_cost, &self.agent_cost) {
            (Some(c), None) => check_table("common_cost".into(), c)?,
            (None, Some(per)) => {
                if per.len() != self.n_agents {
                    return Err(Error::validation("agent_cost", "one table per agent"));
                }
                for (i, t) in per.iter().enumerate() {
                    check_table(format!("agent_cost[{i}]"), t)?;
                }
            }
            _ => return Err(Error::validation("common_cost", "give exactly one of common_cost and agent_cost")),
        }
        if self.initial_state >= self.n_states {
            return Err(Error::validation("initial_state", "out of range"));
        }
        Ok(())
    }

    pub fn encode_joint(&self, actions: &[usize]) -> Result<usize> {
        if actions.len() != self.n_agents {
            return Err(Error::dim(format!("{} actions for {} agents", actions.len(), self.n_agents)));
        }
        let mut idx = 0;
        for &a in actions.iter().rev() {
            if a >= self.n_actions {
                return Err(Error::dim(format!("action {a} of {}", self.n_actions)));
            }
            idx = idx * self.n_actions + a;
        }
        Ok(idx)
    }

    pub fn decode_joint(&self, mut joint: usize) -> Vec<usize> {
        (0..self.n_agents)
            .map(|_| {
                let a = joint % self.n_actions;
                joint /= self.n_actions;
                a
            })
            .collect()
    }

    pub fn cost(&self, agent: usize, x: usize, joint: usize) -> f64 {
        match (&self.common_cost, &self.agent_cost) {
            (Some(c), _) => c[x][joint],
            (_, Some(per)) => per[agent][x][joint],
            _ => unreachable!("validated spec has a cost table"),
        }
    }

    pub fn kernel(&self) -> Result<ControlledKernel> {
        ControlledKernel::new(
            self.transition
                .iter()
                .map(|rows| FiniteKernel::new(rows.clone()))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn cost_span(&self) -> f64 {
        let all: Vec<f64> = match (&self.common_cost, &self.agent_cost) {
            (Some(c), _) => c.iter().flatten().copied().collect(),
            (_, Some(per)) => per.iter().flatten().flatten().copied().collect(),
            _ => vec![0.0],
        };
        let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

#[derive(Debug, Clone)]
pub struct TeamEnv {
    spec: TeamSpec,
    x: usize,
    rng: Rng,
}

impl TeamEnv {
    pub fn new(spec: TeamSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            x: spec.initial_state,
            spec,
            rng: rng::stream(0, rng::ENV_STREAM),
        })
    }

    pub fn spec(&self) -> &TeamSpec {
        &self.spec
    }

    pub fn reset(&mut self, seed: u64) -> usize {
        self.rng = rng::stream(seed, rng::ENV_STREAM);
        self.x = self.spec.initial_state;
        self.x
    }

    pub fn state(&self) -> usize {
        self.x
    }

    /// Applies a joint action; returns each agent's cost and the next state.
    pub fn step_joint(&mut self, actions: &[usize]) -> Result<(Vec<f64>, usize)> {
        let joint = self.spec.encode_joint(actions)?;
        let costs = (0..self.spec.n_agents).map(|i| self.spec.cost(i, self.x, joint)).collect();
        self.x = sample_index(&self.spec.transition[joint][self.x], &mut self.rng);
        Ok((costs, self.x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TeamSpec {
        TeamSpec {
            n_agents: 2,
            n_states: 2,
            n_actions: 2,
            transition: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]; 4],
            common_cost: Some(vec![vec![0.0, 1.0, 1.0, 2.0]; 2]),
            agent_cost: None,
            initial_state: 0,
        }
    }

    #[test]
    fn joint_encoding_round_trips() {
        let s = spec();
        for j in 0..4 {
            assert_eq!(s.encode_joint(&s.decode_joint(j)).unwrap(), j);
        }
        assert_eq!(s.encode_joint(&[1, 0]).unwrap(), 1);
        assert!(s.encode_joint(&[2, 0]).is_err());
    }

    #[test]
    fn validation() {
        let mut s = spec();
        s.agent_cost = Some(vec![vec![vec![0.0; 4]; 2]; 2]);
        assert!(s.validate().is_err());
        let mut s = spec();
        s.transition.pop();
        assert!(matches!(s.validate(), Err(Error::Validation { path, .. }) if path == "transition"));
    }

    #[test]
    fn common_costs_are_shared() {
        let mut env = TeamEnv::new(spec()).unwrap();
        env.reset(1);
        let (c, _) = env.step_joint(&[1, 1]).unwrap();
        assert_eq!(c, vec![2.0, 2.0]);
    }
}
