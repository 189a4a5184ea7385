//! Finite POMDP environment: hidden chain `T(·|x,u)`, observations
//! `O(y|x)`, cost `c(x,u)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_action, Environment, Step};
use crate::beliefs::PomdpModel;
use crate::error::{Error, Result};
use crate::metrics::{ControlledKernel, DistanceTable, FiniteDistribution, FiniteKernel};
use crate::rng::{self, sample_index, Rng};

/// Declarative form of a [`PomdpModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PomdpSpec {
    /// `transition[u][x][x']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `observation[x][y]`.
    pub observation: Vec<Vec<f64>>,
    /// `cost[x][u]`.
    pub cost: Vec<Vec<f64>>,
    /// Hidden-space metric; the discrete metric when absent.
    #[serde(default)]
    pub distance: Option<Vec<Vec<f64>>>,
    /// Require every observation probability to be positive.
    #[serde(default = "yes")]
    pub positive_observation: bool,
    /// Law of the first hidden state. When absent it is uniform, except in
    /// the belief regime, which starts from the invariant law under
    /// exploration.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

impl PomdpSpec {
    pub fn build(&self) -> Result<PomdpModel> {
        let per_action = self
            .transition
            .iter()
            .enumerate()
            .map(|(u, rows)| {
                FiniteKernel::new(rows.clone()).map_err(|e| Error::validation(format!("transition[{u}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let transition =
            ControlledKernel::new(per_action).map_err(|e| Error::validation("transition", e.to_string()))?;
        let observation = FiniteKernel::new(self.observation.clone())
            .map_err(|e| Error::validation("observation", e.to_string()))?;
        let distance = match &self.distance {
            Some(d) => DistanceTable::new(d.clone()).map_err(|e| Error::validation("distance", e.to_string()))?,
            None => DistanceTable::discrete(transition.n_states())?,
        };
        PomdpModel::new(transition, observation, self.cost.clone(), distance, self.positive_observation)
    }

    pub fn initial_law(&self) -> Result<FiniteDistribution> {
        let n = self.observation.len();
        match &self.initial {
            None => FiniteDistribution::uniform(n),
            Some(w) if w.len() != n => Err(Error::validation("initial", format!("needs {n} entries"))),
            Some(w) => FiniteDistribution::new(w.clone()).map_err(|e| Error::validation("initial", e.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PomdpEnv {
    model: Arc<PomdpModel>,
    init: FiniteDistribution,
    x: usize,
    rng: Rng,
}

impl PomdpEnv {
    pub fn new(model: Arc<PomdpModel>, init: FiniteDistribution) -> Result<Self> {
        if init.len() != model.n_hidden() {
            return Err(Error::validation("initial", "one weight per hidden state"));
        }
        Ok(Self {
            model,
            init,
            x: 0,
            rng: rng::stream(0, rng::ENV_STREAM),
        })
    }

    pub fn model(&self) -> &PomdpModel {
        &self.model
    }

    fn observe(&mut self) -> usize {
        sample_index(self.model.observation().row(self.x), &mut self.rng)
    }
}

impl Environment for PomdpEnv {
    type Obs = usize;
    type Hidden = usize;

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = rng::stream(seed, rng::ENV_STREAM);
        self.x = sample_index(self.init.weights(), &mut self.rng);
        self.observe()
    }

    fn step(&mut self, u: usize) -> Result<Step<usize>> {
        check_action(u, self.model.n_actions())?;
        let cost = self.model.cost(self.x, u);
        self.x = sample_index(self.model.transition().row(self.x, u), &mut self.rng);
        let obs = self.observe();
        Ok(Step { cost, obs })
    }

    fn hidden(&self) -> usize {
        self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(observation: Vec<Vec<f64>>) -> PomdpSpec {
        PomdpSpec {
            transition: vec![vec![vec![0.7, 0.3], vec![0.4, 0.6]]],
            observation,
            cost: vec![vec![0.0], vec![1.0]],
            distance: None,
            positive_observation: true,
            initial: None,
        }
    }

    #[test]
    fn zero_observation_entry_is_rejected() {
        let r = spec(vec![vec![1.0, 0.0], vec![0.3, 0.7]]).build();
        assert!(matches!(r, Err(Error::Validation { .. })));
        let mut s = spec(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        s.positive_observation = false;
        assert!(s.build().is_ok());
    }

    #[test]
    fn non_stochastic_row_names_the_kernel() {
        let mut s = spec(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        s.transition[0][1] = vec![0.5, 0.6];
        match s.build() {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "transition[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identity_observation_reveals_state() {
        let mut s = spec(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        s.positive_observation = false;
        let mut env = PomdpEnv::new(Arc::new(s.build().unwrap()), FiniteDistribution::uniform(2).unwrap()).unwrap();
        let y = env.reset(4);
        assert_eq!(y, env.hidden());
        for _ in 0..100 {
            let st = env.step(0).unwrap();
            assert_eq!(st.obs, env.hidden());
        }
    }
}
