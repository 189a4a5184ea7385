//! The induced model `(C*, P*)` of a trace and its Bellman fixed point.
//!
//! Along a trajectory the perceived pair `(S_t, U_t)` need not be Markov,
//! but its long-run conditional averages define an ordinary finite MDP. The
//! Q iterates approach that MDP's optimal Q table, which is what makes the
//! convergence claim checkable against a plain value-iteration oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ControlledKernel;
use crate::qcore::{argmin, PolicyTable, QTable, TransitionRecord};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Empirical cost means and next-state frequencies per perceived pair.
/// Unvisited pairs are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedModel {
    n_states: usize,
    n_actions: usize,
    c_star: Vec<Option<f64>>,
    p_star: Vec<Option<Vec<f64>>>,
    counts: Vec<u64>,
}

impl InducedModel {
    /// A model known exactly rather than estimated; visit counts are zero.
    pub fn exact(costs: &[Vec<f64>], kernel: &ControlledKernel) -> Result<Self> {
        let (ns, na) = (kernel.n_states(), kernel.n_actions());
        if costs.len() != ns || costs.iter().any(|r| r.len() != na) {
            return Err(Error::dim("cost table does not match the kernel"));
        }
        let mut c_star = Vec::with_capacity(ns * na);
        let mut p_star = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for u in 0..na {
                c_star.push(Some(costs[s][u]));
                p_star.push(Some(kernel.row(s, u).to_vec()));
            }
        }
        Ok(Self {
            n_states: ns,
            n_actions: na,
            c_star,
            p_star,
            counts: vec![0; ns * na],
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn c_star(&self, s: usize, u: usize) -> Option<f64> {
        self.c_star[s * self.n_actions + u]
    }

    pub fn p_star(&self, s: usize, u: usize) -> Option<&[f64]> {
        self.p_star[s * self.n_actions + u].as_deref()
    }

    pub fn count(&self, s: usize, u: usize) -> u64 {
        self.counts[s * self.n_actions + u]
    }

    pub fn unvisited(&self) -> Vec<(usize, usize)> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |u| (s, u)))
            .filter(|&(s, u)| self.c_star(s, u).is_none())
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.c_star.iter().all(Option::is_some)
    }

    /// Cost table and kernel, or the first unvisited pair.
    pub fn complete_parts(&self) -> Result<(Vec<Vec<f64>>, ControlledKernel)> {
        if let Some(&(s, u)) = self.unvisited().first() {
            return Err(Error::ModelIncomplete { s, u });
        }
        let costs = (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|u| self.c_star(s, u).unwrap()).collect())
            .collect();
        let per_action = (0..self.n_actions)
            .map(|u| {
                crate::metrics::FiniteKernel::new(
                    (0..self.n_states).map(|s| self.p_star(s, u).unwrap().to_vec()).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((costs, ControlledKernel::new(per_action)?))
    }

    /// The sub-model on the states whose every action was visited, with
    /// their original indices, provided no visited transition leaves that
    /// set. `None` when the set is empty or not closed.
    pub fn restricted_to_visited(&self) -> Option<(InducedModel, Vec<usize>)> {
        let kept: Vec<usize> = (0..self.n_states)
            .filter(|&s| (0..self.n_actions).all(|u| self.c_star(s, u).is_some()))
            .collect();
        if kept.is_empty() {
            return None;
        }
        let mut position = vec![None; self.n_states];
        for (i, &s) in kept.iter().enumerate() {
            position[s] = Some(i);
        }
        let mut c_star = Vec::with_capacity(kept.len() * self.n_actions);
        let mut p_star = Vec::with_capacity(kept.len() * self.n_actions);
        let mut counts = Vec::with_capacity(kept.len() * self.n_actions);
        for &s in &kept {
            for u in 0..self.n_actions {
                let row = self.p_star(s, u)?;
                let mut reduced = vec![0.0; kept.len()];
                for (s1, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        reduced[position[s1]?] = p;
                    }
                }
                c_star.push(self.c_star(s, u));
                p_star.push(Some(reduced));
                counts.push(self.count(s, u));
            }
        }
        Some((
            InducedModel {
                n_states: kept.len(),
                n_actions: self.n_actions,
                c_star,
                p_star,
                counts,
            },
            kept,
        ))
    }
}

pub fn estimate_induced_model(trace: &[TransitionRecord], n_states: usize, n_actions: usize) -> Result<InducedModel> {
    let pairs = n_states * n_actions;
    let mut cost_sum = vec![0.0; pairs];
    let mut counts = vec![0u64; pairs];
    let mut next = vec![vec![0u64; n_states]; pairs];
    for rec in trace {
        if rec.s >= n_states || rec.s_next >= n_states || rec.u >= n_actions {
            return Err(Error::dim(format!(
                "record at t={} ({}, {}, {}) outside {}x{}",
                rec.t, rec.s, rec.u, rec.s_next, n_states, n_actions
            )));
        }
        let k = rec.s * n_actions + rec.u;
        cost_sum[k] += rec.c;
        counts[k] += 1;
        next[k][rec.s_next] += 1;
    }
    let c_star = (0..pairs)
        .map(|k| (counts[k] > 0).then(|| cost_sum[k] / counts[k] as f64))
        .collect();
    let p_star = (0..pairs)
        .map(|k| {
            (counts[k] > 0).then(|| next[k].iter().map(|&n| n as f64 / counts[k] as f64).collect())
        })
        .collect();
    Ok(InducedModel {
        n_states,
        n_actions,
        c_star,
        p_star,
        counts,
    })
}

/// Optimal Q table with the sup-norm change of every sweep.
#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub q: QTable,
    pub residuals: Vec<f64>,
}

pub fn value_iteration(m: &InducedModel, beta: f64, tol: f64) -> Result<QTable> {
    Ok(value_iteration_with_residuals(m, beta, tol)?.q)
}

pub fn value_iteration_with_residuals(m: &InducedModel, beta: f64, tol: f64) -> Result<ValueIteration> {
    let (costs, kernel) = m.complete_parts()?;
    let (q, residuals) = bellman_fixed_point(&costs, &kernel, beta, tol)?;
    Ok(ValueIteration { q, residuals })
}

fn check_discount(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("discount {beta} outside (0,1)")));
    }
    Ok(())
}

/// Synchronous value iteration from zero until successive iterates differ
/// by at most `tol` in sup norm; the Bellman residual of the returned table
/// is then at most `β·tol`.
pub fn bellman_fixed_point(
    costs: &[Vec<f64>],
    kernel: &ControlledKernel,
    beta: f64,
    tol: f64,
) -> Result<(QTable, Vec<f64>)> {
    check_discount(beta)?;
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let (ns, na) = (kernel.n_states(), kernel.n_actions());
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut residuals = Vec::new();
    loop {
        let mut delta = 0.0_f64;
        for s in 0..ns {
            for u in 0..na {
                let cont: f64 = kernel.row(s, u).iter().zip(&v).map(|(p, v)| p * v).sum();
                let new = costs[s][u] + beta * cont;
                delta = delta.max((new - q[s * na + u]).abs());
                q[s * na + u] = new;
            }
        }
        for s in 0..ns {
            v[s] = q[s * na..(s + 1) * na].iter().copied().fold(f64::INFINITY, f64::min);
        }
        residuals.push(delta);
        if delta <= tol {
            break;
        }
    }
    Ok((QTable::from_values(ns, na, q)?, residuals))
}

/// Discounted value of a stationary randomized policy, iterated to a
/// sup-norm change of `tol`.
pub fn policy_evaluation(
    costs: &[Vec<f64>],
    kernel: &ControlledKernel,
    policy: &PolicyTable,
    beta: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    check_discount(beta)?;
    let (ns, na) = (kernel.n_states(), kernel.n_actions());
    if policy.n_states() != ns || policy.n_actions() != na {
        return Err(Error::dim("policy does not match the model"));
    }
    let mut c_pi = vec![0.0; ns];
    let mut p_pi = vec![vec![0.0; ns]; ns];
    for s in 0..ns {
        for (u, &w) in policy.row(s).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            c_pi[s] += w * costs[s][u];
            for (t, p) in kernel.row(s, u).iter().enumerate() {
                p_pi[s][t] += w * p;
            }
        }
    }
    let mut j = vec![0.0; ns];
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| c_pi[s] + beta * p_pi[s].iter().zip(&j).map(|(p, v)| p * v).sum::<f64>())
            .collect();
        let delta = next.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        j = next;
        if delta <= tol {
            return Ok(j);
        }
    }
}

/// Greedy actions of a Q table with ties to the lowest index.
pub fn greedy_actions(q: &QTable) -> Vec<usize> {
    (0..q.n_states()).map(|s| argmin(q.row(s))).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(t, ‖Q_t − Q*‖∞)` per snapshot.
    pub curve: Vec<(u64, f64)>,
    pub final_error: f64,
    /// Least-squares slope of the error against `t` over the final third.
    pub final_third_slope: f64,
}

pub fn convergence_report(snapshots: &[(u64, QTable)], q_star: &QTable) -> Result<ConvergenceReport> {
    let curve = snapshots
        .iter()
        .map(|(t, q)| Ok((*t, q.sup_distance(q_star)?)))
        .collect::<Result<Vec<_>>>()?;
    let final_error = curve.last().map_or(f64::NAN, |c| c.1);
    let tail = &curve[curve.len() - curve.len() / 3..];
    Ok(ConvergenceReport {
        final_third_slope: slope(tail),
        final_error,
        curve,
    })
}

fn slope(points: &[(u64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyReport {
    /// Visit fractions indexed `s · |U| + u`.
    pub fractions: Vec<f64>,
    pub min_fraction: f64,
    pub all_visited: bool,
}

pub fn occupancy_check(trace: &[TransitionRecord], n_states: usize, n_actions: usize) -> Result<OccupancyReport> {
    if trace.is_empty() {
        return Err(Error::domain("occupancy of an empty trace"));
    }
    let mut counts = vec![0u64; n_states * n_actions];
    for rec in trace {
        if rec.s >= n_states || rec.u >= n_actions {
            return Err(Error::dim(format!("record at t={} outside {}x{}", rec.t, n_states, n_actions)));
        }
        counts[rec.s * n_actions + rec.u] += 1;
    }
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / trace.len() as f64).collect();
    Ok(OccupancyReport {
        min_fraction: fractions.iter().copied().fold(f64::INFINITY, f64::min),
        all_visited: counts.iter().all(|&c| c > 0),
        fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::FiniteKernel;

    fn rec(t: u64, s: usize, u: usize, c: f64, s_next: usize) -> TransitionRecord {
        TransitionRecord { t, s, u, c, s_next }
    }

    #[test]
    fn restriction_keeps_closed_visited_states() {
        // State 2 is only ever a start state that was left once; state 1 is closed.
        let trace = vec![rec(0, 2, 0, 1.0, 0), rec(1, 0, 0, 0.5, 1), rec(2, 1, 0, 0.2, 1), rec(3, 1, 1, 0.3, 0), rec(4, 0, 1, 0.1, 1)];
        let m = estimate_induced_model(&trace, 3, 2).unwrap();
        assert!(!m.is_complete());
        let (r, kept) = m.restricted_to_visited().unwrap();
        assert_eq!(kept, vec![0, 1]);
        assert!(r.is_complete());
        assert_eq!(r.c_star(1, 1), Some(0.3));
        // A visited transition into an incompletely visited state breaks closure.
        let open = estimate_induced_model(&trace[1..4], 3, 2).unwrap();
        assert!(open.restricted_to_visited().is_none());
    }

    #[test]
    fn single_pair_geometric_series() {
        let k = ControlledKernel::new(vec![FiniteKernel::identity(1).unwrap()]).unwrap();
        let m = InducedModel::exact(&[vec![1.0]], &k).unwrap();
        let q = value_iteration(&m, 0.7, DEFAULT_TOL).unwrap();
        assert!((q.value(0, 0) - 10.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_costs_zero_fixed_point() {
        let k = ControlledKernel::new(vec![FiniteKernel::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap()]).unwrap();
        let m = InducedModel::exact(&[vec![0.0], vec![0.0]], &k).unwrap();
        assert_eq!(value_iteration(&m, 0.9, DEFAULT_TOL).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn residuals_contract() {
        let k = ControlledKernel::new(vec![
            FiniteKernel::new(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap(),
            FiniteKernel::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap(),
        ])
        .unwrap();
        let m = InducedModel::exact(&[vec![1.0, 0.3], vec![0.0, 2.0]], &k).unwrap();
        let vi = value_iteration_with_residuals(&m, 0.7, DEFAULT_TOL).unwrap();
        for w in vi.residuals.windows(2) {
            assert!(w[1] <= 0.7 * w[0] + 1e-15);
        }
    }

    #[test]
    fn unvisited_pair_is_named() {
        let trace = vec![rec(0, 0, 0, 1.0, 1), rec(1, 1, 0, 1.0, 0), rec(2, 0, 1, 1.0, 0)];
        let m = estimate_induced_model(&trace, 2, 2).unwrap();
        assert_eq!(m.unvisited(), vec![(1, 1)]);
        match value_iteration(&m, 0.7, DEFAULT_TOL) {
            Err(Error::ModelIncomplete { s: 1, u: 1 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_trace_estimates() {
        let trace: Vec<_> = (0..10).map(|t| rec(t, t as usize % 2, 0, 1.0, (t as usize + 1) % 2)).collect();
        let m = estimate_induced_model(&trace, 2, 1).unwrap();
        assert_eq!(m.c_star(0, 0), Some(1.0));
        assert_eq!(m.p_star(0, 0).unwrap(), &[0.0, 1.0]);
        assert_eq!(m.count(1, 0), 5);
    }

    #[test]
    fn occupancy_of_confined_trace() {
        let trace: Vec<_> = (0..5).map(|t| rec(t, 0, 0, 0.0, 0)).collect();
        let r = occupancy_check(&trace, 2, 2).unwrap();
        assert!(!r.all_visited);
        assert_eq!(r.min_fraction, 0.0);
        assert!((r.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn report_on_exact_snapshots() {
        let q = QTable::from_values(1, 2, vec![1.0, 2.0]).unwrap();
        let snaps: Vec<_> = (0..6).map(|t| (t, q.clone())).collect();
        let r = convergence_report(&snaps, &q).unwrap();
        assert!(r.curve.iter().all(|c| c.1 == 0.0));
        assert_eq!(r.final_third_slope, 0.0);
    }

    #[test]
    fn policy_evaluation_matches_closed_form() {
        let k = ControlledKernel::new(vec![FiniteKernel::identity(2).unwrap()]).unwrap();
        let pol = PolicyTable::uniform(2, 1).unwrap();
        let j = policy_evaluation(&[vec![1.0], vec![0.0]], &k, &pol, 0.5, 1e-14).unwrap();
        assert!((j[0] - 2.0).abs() < 1e-12 && j[1] == 0.0);
    }
}
