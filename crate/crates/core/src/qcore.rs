//! The tabular Q iteration driven by an arbitrary perceived-state process.
//!
//! Each step updates one entry,
//! `Q(s,u) ← (1 − α) Q(s,u) + α (c + β min_a Q(s', a))`, with
//! `α = 1 / (1 + n)` where `n` counts visits to `(s,u)` including the
//! current one. No other entry moves. Costs are minimized throughout.

use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::metrics::check_probability_vector;
use crate::perception::Perception;
use crate::rng::{self, sample_index, Rng};

/// Action values and visit counts over perceived states × actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
        }
    }

    /// Table with the given row-major values and no visits.
    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::dim(format!(
                "{} values for a {n_states}x{n_actions} table",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite Q value"));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
            visits: vec![0; n_states * n_actions],
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn value(&self, s: usize, u: usize) -> f64 {
        self.values[s * self.n_actions + u]
    }

    pub fn set_value(&mut self, s: usize, u: usize, v: f64) {
        self.values[s * self.n_actions + u] = v;
    }

    pub fn visits(&self, s: usize, u: usize) -> u64 {
        self.visits[s * self.n_actions + u]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `V(s) = min_u Q(s,u)`.
    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Minimizing action; ties go to the lowest index.
    pub fn greedy_action(&self, s: usize) -> usize {
        argmin(self.row(s))
    }

    pub fn sup_distance(&self, other: &QTable) -> Result<f64> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::dim("Q tables of different shapes"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn check_indices(&self, s: usize, u: usize) -> Result<()> {
        if s >= self.n_states || u >= self.n_actions {
            return Err(Error::dim(format!(
                "pair (s={s}, u={u}) outside a {}x{} table",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }
}

pub(crate) fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v < row[best] {
            best = i;
        }
    }
    best
}

/// One perceived step `(s, u, c, s')` taken at environment time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: u64,
    pub s: usize,
    pub u: usize,
    pub c: f64,
    pub s_next: usize,
}

pub type Trace = Vec<TransitionRecord>;

/// Applies one update of the iteration to `q`.
pub fn step_update(q: &mut QTable, rec: &TransitionRecord, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("discount {beta} outside (0,1)")));
    }
    q.check_indices(rec.s, rec.u)?;
    q.check_indices(rec.s_next, 0)?;
    if !rec.c.is_finite() {
        return Err(Error::domain(format!("non-finite cost {} at t={}", rec.c, rec.t)));
    }
    let target = rec.c + beta * q.state_value(rec.s_next);
    let k = rec.s * q.n_actions + rec.u;
    q.visits[k] += 1;
    let alpha = 1.0 / (1.0 + q.visits[k] as f64);
    q.values[k] = (1.0 - alpha) * q.values[k] + alpha * target;
    Ok(())
}

/// A stationary policy over perceived states: one action distribution per
/// state. Deterministic policies are point masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    n_actions: usize,
    rows: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::dim("policy over zero states"))?;
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::dim(format!("policy row {s} length")));
            }
            check_probability_vector(row)
                .map_err(|e| Error::domain(format!("policy row {s}: {e}")))?;
        }
        Ok(Self { n_actions, rows })
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let rows = actions
            .iter()
            .map(|&a| {
                if a >= n_actions {
                    return Err(Error::dim(format!("action {a} of {n_actions}")));
                }
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// The action if row `s` is a point mass.
    pub fn deterministic_action(&self, s: usize) -> Option<usize> {
        self.rows[s].iter().position(|&p| p == 1.0)
    }

    /// Per-state actions when every row is a point mass.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        (0..self.n_states()).map(|s| self.deterministic_action(s)).collect()
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(&self.rows[s], rng)
    }

    /// State-independent mixture: the average of the rows.
    pub fn mixture(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.n_actions)
            .map(|a| self.rows.iter().map(|r| r[a]).sum::<f64>() / n)
            .collect()
    }
}

/// A randomized stationary policy that plays every action with positive
/// probability in every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyTable", into = "PolicyTable")]
pub struct ExplorationPolicy(PolicyTable);

impl ExplorationPolicy {
    pub fn new(policy: PolicyTable) -> Result<Self> {
        if let Some((s, _)) = policy
            .rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|&p| p <= 0.0))
        {
            return Err(Error::domain(format!(
                "exploration row {s} gives some action zero probability"
            )));
        }
        Ok(Self(policy))
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(PolicyTable::uniform(n_states, n_actions)?)
    }

    pub fn policy(&self) -> &PolicyTable {
        &self.0
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        self.0.sample(s, rng)
    }

    /// Draw used before the perceived state exists.
    pub fn sample_mixture<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.0.mixture(), rng)
    }
}

impl TryFrom<PolicyTable> for ExplorationPolicy {
    type Error = Error;

    fn try_from(p: PolicyTable) -> Result<Self> {
        Self::new(p)
    }
}

impl From<ExplorationPolicy> for PolicyTable {
    fn from(p: ExplorationPolicy) -> Self {
        p.0
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub steps: u64,
    pub beta: f64,
    pub seed: u64,
    /// Initial table; all zeros when absent.
    pub initial: Option<QTable>,
    /// Record a snapshot every this many environment steps.
    pub snapshot_every: Option<u64>,
    /// Keep the full trace (the learner itself never needs it).
    pub keep_trace: bool,
}

impl RunOptions {
    pub fn new(steps: u64, beta: f64, seed: u64) -> Self {
        Self {
            steps,
            beta,
            seed,
            initial: None,
            snapshot_every: None,
            keep_trace: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QRun {
    pub table: QTable,
    pub trace: Trace,
    /// `(environment steps completed, table)` pairs.
    pub snapshots: Vec<(u64, QTable)>,
    /// Steps spent before the perceived state became available.
    pub warmup_steps: u64,
}

/// Runs the iteration for `opts.steps` environment steps under `explore`.
///
/// Updates start once the perception reports a state; earlier actions are
/// drawn from the exploration policy's state-independent mixture. The run
/// is a pure function of `opts.seed`.
pub fn run_q_learning<E, P>(
    env: &mut E,
    perceive: &mut P,
    explore: &ExplorationPolicy,
    opts: &RunOptions,
) -> Result<QRun>
where
    E: Environment,
    P: Perception<E::Obs> + ?Sized,
{
    let n_states = perceive.n_states();
    let n_actions = env.n_actions();
    if explore.policy().n_states() != n_states || explore.policy().n_actions() != n_actions {
        return Err(Error::dim(format!(
            "exploration policy is {}x{}, perceived problem is {n_states}x{n_actions}",
            explore.policy().n_states(),
            explore.policy().n_actions()
        )));
    }
    let mut table = match &opts.initial {
        Some(q) if q.n_states != n_states || q.n_actions != n_actions => {
            return Err(Error::dim("initial Q table shape"));
        }
        Some(q) => q.clone(),
        None => QTable::zeros(n_states, n_actions),
    };

    let mut explore_rng: Rng = rng::stream(opts.seed, rng::EXPLORE_STREAM);
    let obs = env.reset(opts.seed);
    let mut state = perceive.start(&obs)?;
    let mut trace = Vec::with_capacity(if opts.keep_trace { opts.steps as usize } else { 0 });
    let mut snapshots = Vec::new();
    let mut warmup_steps = 0;

    for t in 0..opts.steps {
        let u = match state {
            Some(s) => explore.sample(s, &mut explore_rng),
            None => {
                warmup_steps += 1;
                explore.sample_mixture(&mut explore_rng)
            }
        };
        let step = env.step(u).map_err(|e| Error::Environment {
            step: t,
            source: Box::new(e),
        })?;
        let next = perceive.advance(u, &step.obs)?;
        if let (Some(s), Some(s_next)) = (state, next) {
            let rec = TransitionRecord {
                t,
                s,
                u,
                c: step.cost,
                s_next,
            };
            step_update(&mut table, &rec, opts.beta)?;
            if opts.keep_trace {
                trace.push(rec);
            }
        }
        if let Some(every) = opts.snapshot_every {
            if every > 0 && (t + 1) % every == 0 {
                snapshots.push((t + 1, table.clone()));
            }
        }
        state = next;
    }
    Ok(QRun {
        table,
        trace,
        snapshots,
        warmup_steps,
    })
}

/// Greedy (minimizing) deterministic policy; ties go to the lowest action.
pub fn greedy_policy(q: &QTable) -> PolicyTable {
    let actions: Vec<usize> = (0..q.n_states).map(|s| q.greedy_action(s)).collect();
    PolicyTable::deterministic(&actions, q.n_actions).expect("greedy actions are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: usize, u: usize, c: f64, s_next: usize) -> TransitionRecord {
        TransitionRecord { t: 0, s, u, c, s_next }
    }

    #[test]
    fn first_visit_uses_half_step() {
        let mut q = QTable::zeros(2, 2);
        step_update(&mut q, &rec(0, 1, 1.0, 1), 0.7).unwrap();
        assert_eq!(q.value(0, 1), 0.5);
        assert_eq!(q.visits(0, 1), 1);
        assert_eq!(q.value(0, 0), 0.0);
    }

    #[test]
    fn zero_cost_keeps_zero() {
        let mut q = QTable::zeros(2, 2);
        for _ in 0..10 {
            step_update(&mut q, &rec(0, 0, 0.0, 1), 0.7).unwrap();
        }
        assert_eq!(q.sup_norm(), 0.0);
    }

    #[test]
    fn two_visits_hand_evaluation() {
        // s' = 1 is absorbing with V = 0 (never updated).
        let mut q = QTable::zeros(2, 1);
        step_update(&mut q, &rec(0, 0, 1.0, 1), 0.7).unwrap();
        step_update(&mut q, &rec(0, 0, 1.0, 1), 0.7).unwrap();
        assert!((q.value(0, 0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn update_errors() {
        let mut q = QTable::zeros(2, 2);
        assert!(matches!(
            step_update(&mut q, &rec(2, 0, 1.0, 0), 0.7),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            step_update(&mut q, &rec(0, 0, 1.0, 5), 0.7),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            step_update(&mut q, &rec(0, 0, f64::NAN, 0), 0.7),
            Err(Error::Domain(_))
        ));
        assert!(step_update(&mut q, &rec(0, 0, 1.0, 0), 1.0).is_err());
    }

    #[test]
    fn greedy_tie_break() {
        let q = QTable::from_values(2, 2, vec![1.0, 2.0, 2.0, 2.0]).unwrap();
        let p = greedy_policy(&q);
        assert_eq!(p.as_deterministic().unwrap(), vec![0, 0]);
        let q = QTable::from_values(1, 3, vec![3.0, -1.0, -1.0]).unwrap();
        assert_eq!(q.greedy_action(0), 1);
    }

    #[test]
    fn exploration_requires_positive_rows() {
        let p = PolicyTable::deterministic(&[0, 1], 2).unwrap();
        assert!(ExplorationPolicy::new(p).is_err());
        assert!(ExplorationPolicy::uniform(3, 2).is_ok());
    }

    #[test]
    fn policy_rows_validated() {
        assert!(PolicyTable::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(PolicyTable::deterministic(&[3], 2).is_err());
        let p = PolicyTable::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(p.mixture(), vec![0.5, 0.5]);
    }
}
