//! Run configuration, read from TOML.
//!
//! Unknown keys are rejected and every failure names the offending key
//! path, for example `environment.noise_stay_zero[1]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{ContinuousSpec, FiniteMdp, MachineInit, MachineParams, PomdpSpec, TeamSpec};
use crate::error::{Error, Result};
use crate::magent::MagentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Fully observed finite state.
    Mdp,
    /// Continuous state seen through a uniform quantizer.
    Quantized,
    /// Window of recent observations.
    Window,
    /// Quantized filter belief.
    Belief,
    /// Several satisficing learners on a shared game.
    Magent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Machine {
        #[serde(default = "default_repair_cost")]
        repair_cost: f64,
        #[serde(default = "default_broken_cost")]
        broken_cost: f64,
        #[serde(default = "default_noise")]
        noise_stay_zero: [f64; 2],
        #[serde(default = "default_x0")]
        x0: usize,
        #[serde(default)]
        w0: Option<usize>,
    },
    Finite {
        /// `costs[s][u]`.
        costs: Vec<Vec<f64>>,
        /// `transition[u][s][s']`.
        transition: Vec<Vec<Vec<f64>>>,
        /// Law of the first state; uniform when absent.
        #[serde(default)]
        initial: Option<Vec<f64>>,
    },
    Continuous(ContinuousSpec),
    Pomdp(PomdpSpec),
    Team(TeamSpec),
}

fn default_repair_cost() -> f64 {
    MachineParams::default().repair_cost
}

fn default_broken_cost() -> f64 {
    MachineParams::default().broken_cost
}

fn default_noise() -> [f64; 2] {
    MachineParams::default().noise_stay_zero
}

fn default_x0() -> usize {
    1
}

impl EnvironmentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Machine { .. } => "machine",
            Self::Finite { .. } => "finite",
            Self::Continuous(_) => "continuous",
            Self::Pomdp(_) => "pomdp",
            Self::Team(_) => "team",
        }
    }

    pub fn machine(&self) -> Option<(MachineParams, MachineInit)> {
        match self {
            Self::Machine {
                repair_cost,
                broken_cost,
                noise_stay_zero,
                x0,
                w0,
            } => Some((
                MachineParams {
                    repair_cost: *repair_cost,
                    broken_cost: *broken_cost,
                    noise_stay_zero: *noise_stay_zero,
                },
                MachineInit { x0: *x0, w0: *w0 },
            )),
            _ => None,
        }
    }

    pub fn finite(&self) -> Result<Option<(FiniteMdp, Vec<f64>)>> {
        let Self::Finite {
            costs,
            transition,
            initial,
        } = self
        else {
            return Ok(None);
        };
        let per_action = transition
            .iter()
            .enumerate()
            .map(|(u, rows)| {
                crate::metrics::FiniteKernel::new(rows.clone())
                    .map_err(|e| Error::validation(format!("environment.transition[{u}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let kernel = crate::metrics::ControlledKernel::new(per_action)
            .map_err(|e| Error::validation("environment.transition", e.to_string()))?;
        let mdp = FiniteMdp::new(costs.clone(), kernel).map_err(|e| prefix("environment", e))?;
        let n = mdp.n_states();
        let init = initial.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
        check_law("environment.initial", &init, n)?;
        Ok(Some((mdp, init)))
    }
}

fn check_law(path: &str, law: &[f64], n: usize) -> Result<()> {
    if law.len() != n {
        return Err(Error::validation(path, format!("needs {n} entries")));
    }
    crate::metrics::FiniteDistribution::new(law.to_vec()).map_err(|e| Error::validation(path, e.to_string()))?;
    Ok(())
}

/// Adds `section.` in front of a validation path.
fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Validation { path, message } => Error::validation(format!("{section}.{path}"), message),
        other => Error::validation(section, other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerceptionSpec {
    #[default]
    Identity,
    Quantizer {
        cells: usize,
    },
    Window {
        /// `N`: the window holds `N + 1` observations.
        length: usize,
        #[serde(default)]
        include_actions: bool,
    },
    Belief {
        /// Lattice resolution: codepoints have coordinates in multiples of
        /// `1/denominator`.
        denominator: usize,
        /// Filter prior; the environment's initial law when absent.
        #[serde(default)]
        prior: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplorationSpec {
    #[default]
    Uniform,
    /// One row of action probabilities per perceived state.
    Table { rows: Vec<Vec<f64>> },
}

/// Monte-Carlo evaluation of the learned greedy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    pub reps: usize,
    pub horizon: usize,
    #[serde(default)]
    pub burn_in: usize,
}

/// Filter-stability curve for the window regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtSpec {
    pub t_max: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub regime: Regime,
    #[serde(default)]
    pub seed: u64,
    pub beta: f64,
    #[serde(default)]
    pub steps: u64,
    #[serde(default)]
    pub snapshot_every: Option<u64>,
    /// Constant initial value of every Q entry.
    #[serde(default)]
    pub initial_q: f64,
    #[serde(default = "yes")]
    pub keep_trace: bool,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub perception: PerceptionSpec,
    #[serde(default)]
    pub exploration: ExplorationSpec,
    #[serde(default)]
    pub evaluation: Option<EvaluationSpec>,
    #[serde(default)]
    pub lt: Option<LtSpec>,
    #[serde(default)]
    pub magent: Option<MagentConfig>,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::validation("(document)", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.into_inner().message().to_string();
            Error::validation(if path == "." { "(root)".to_string() } else { path }, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::validation("(document)", e.to_string()))
    }

    /// Checks every referenced spec and the regime/environment/perception
    /// combination before anything runs.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::validation("beta", "must lie in (0,1)"));
        }
        if !self.initial_q.is_finite() {
            return Err(Error::validation("initial_q", "must be finite"));
        }
        if self.replicates == 0 {
            return Err(Error::validation("replicates", "must be positive"));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::validation("snapshot_every", "must be positive"));
        }
        match &self.environment {
            EnvironmentSpec::Machine { .. } => {
                let (p, init) = self.environment.machine().expect("machine variant");
                p.validate().map_err(|e| prefix("environment", e))?;
                if init.x0 > 1 {
                    return Err(Error::validation("environment.x0", "machine state is 0 or 1"));
                }
                if init.w0.is_some_and(|w| w > 1) {
                    return Err(Error::validation("environment.w0", "noise state is 0 or 1"));
                }
            }
            EnvironmentSpec::Finite { .. } => {
                self.environment.finite()?;
            }
            EnvironmentSpec::Continuous(spec) => spec.validate().map_err(|e| prefix("environment", e))?,
            EnvironmentSpec::Pomdp(model) => {
                model.build().map_err(|e| prefix("environment", e))?;
                model.initial_law().map_err(|e| prefix("environment", e))?;
            }
            EnvironmentSpec::Team(spec) => spec.validate().map_err(|e| prefix("environment", e))?,
        }
        let env = self.environment.kind();
        let allowed: &[&str] = match self.regime {
            Regime::Mdp => &["machine", "finite"],
            Regime::Quantized => &["continuous"],
            Regime::Window => &["machine", "finite", "pomdp"],
            Regime::Belief => &["pomdp"],
            Regime::Magent => &["team"],
        };
        if !allowed.contains(&env) {
            return Err(Error::validation(
                "environment.kind",
                format!("{env} does not fit the {:?} regime (expected one of {allowed:?})", self.regime),
            ));
        }
        let perception_ok = matches!(
            (self.regime, &self.perception),
            (Regime::Mdp, PerceptionSpec::Identity)
                | (Regime::Quantized, PerceptionSpec::Quantizer { .. })
                | (Regime::Window, PerceptionSpec::Window { .. })
                | (Regime::Belief, PerceptionSpec::Belief { .. })
                | (Regime::Magent, PerceptionSpec::Identity)
        );
        if !perception_ok {
            return Err(Error::validation("perception.kind", format!("does not fit the {:?} regime", self.regime)));
        }
        match &self.perception {
            PerceptionSpec::Quantizer { cells: 0 } => {
                return Err(Error::validation("perception.cells", "must be positive"));
            }
            PerceptionSpec::Belief { denominator: 0, .. } => {
                return Err(Error::validation("perception.denominator", "must be positive"));
            }
            _ => {}
        }
        if let Some(ev) = &self.evaluation {
            if ev.reps == 0 {
                return Err(Error::validation("evaluation.reps", "must be positive"));
            }
        }
        if let Some(lt) = &self.lt {
            if lt.reps == 0 {
                return Err(Error::validation("lt.reps", "must be positive"));
            }
            if env != "pomdp" || self.regime != Regime::Window {
                return Err(Error::validation("lt", "filter-stability curve needs the window regime on a pomdp"));
            }
            if self.exploration != ExplorationSpec::Uniform {
                return Err(Error::validation("lt", "filter-stability curve assumes uniform exploration"));
            }
        }
        match (&self.magent, &self.environment) {
            (Some(m), EnvironmentSpec::Team(spec)) => {
                m.validate(spec).map_err(|e| match e {
                    Error::Validation { path, message } if !path.starts_with("magent") => {
                        Error::validation(format!("magent.{path}"), message)
                    }
                    other => other,
                })?;
                if m.beta != self.beta {
                    return Err(Error::validation("magent.beta", "must equal the top-level beta"));
                }
            }
            (None, EnvironmentSpec::Team(_)) => {
                return Err(Error::validation("magent", "the magent regime needs a [magent] section"));
            }
            (Some(_), _) => return Err(Error::validation("magent", "only used by the magent regime")),
            (None, _) => {}
        }
        if let ExplorationSpec::Table { rows } = &self.exploration {
            crate::qcore::PolicyTable::new(rows.clone())
                .map_err(|e| Error::validation("exploration.rows", e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MACHINE: &str = r#"
regime = "mdp"
beta = 0.7
steps = 100

[environment]
kind = "machine"
"#;

    fn path_of(text: &str) -> String {
        match RunConfig::from_toml(text) {
            Err(Error::Validation { path, .. }) => path,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_machine_config() {
        let c = RunConfig::from_toml(MACHINE).unwrap();
        assert_eq!(c.regime, Regime::Mdp);
        assert_eq!(c.perception, PerceptionSpec::Identity);
        assert_eq!(c.environment.machine().unwrap().0, MachineParams::default());
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = MACHINE.replace("kind = \"machine\"", "kind = \"machine\"\nbogus = 1");
        assert_eq!(path_of(&text), "environment");
        let text = MACHINE.replace("steps = 100", "steps = 100\nstep_size = 3");
        assert_eq!(path_of(&text), "step_size");
    }

    #[test]
    fn wrong_type_names_its_path() {
        assert_eq!(path_of(&MACHINE.replace("steps = 100", "steps = \"many\"")), "steps");
    }

    #[test]
    fn semantic_errors_name_their_path() {
        let text = MACHINE.replace("kind = \"machine\"", "kind = \"machine\"\nnoise_stay_zero = [0.9, 1.4]");
        assert_eq!(path_of(&text), "environment.noise_stay_zero[1]");
        assert_eq!(path_of(&MACHINE.replace("beta = 0.7", "beta = 1.0")), "beta");
        let text = MACHINE.replace("regime = \"mdp\"", "regime = \"quantized\"");
        assert_eq!(path_of(&text), "environment.kind");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::from_toml(MACHINE).unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}
