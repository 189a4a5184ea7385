//! Stationary laws and reachability for finite Markov chains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::FiniteKernel;

/// Solves `μ P = μ`, `Σ μ = 1` for an irreducible chain.
pub fn stationary_distribution(p: &FiniteKernel) -> Result<Vec<f64>> {
    let n = p.n_from();
    if n != p.n_to() {
        return Err(Error::dim("stationary distribution needs a square kernel"));
    }
    if !is_irreducible(p) {
        return Err(Error::Ergodicity("chain is reducible".into()));
    }
    stationary_on(p, &(0..n).collect::<Vec<_>>())
}

/// Stationary law of the chain restricted to `states`, which must be closed
/// and irreducible. Entries outside `states` are zero.
fn stationary_on(p: &FiniteKernel, states: &[usize]) -> Result<Vec<f64>> {
    let k = states.len();
    // Rows of (Pᵀ − I) with the last equation replaced by normalization.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (r, &to) in states.iter().enumerate() {
        for (c, &from) in states.iter().enumerate() {
            a[(r, c)] = p.get(from, to) - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..k {
        a[(k - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Ergodicity("singular stationarity system".into()))?;
    let mut out = vec![0.0; p.n_from()];
    for (r, &s) in states.iter().enumerate() {
        out[s] = sol[r].max(0.0);
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Long-run occupancy `lim (1/T) Σ ν Pᵗ` from the initial law `init`.
///
/// When the states reachable from `init` contain a single closed class the
/// answer is that class's stationary law, computed exactly. Otherwise the
/// Cesàro average is iterated numerically.
pub fn long_run_occupancy(p: &FiniteKernel, init: &[f64]) -> Result<Vec<f64>> {
    let n = p.n_from();
    if init.len() != n {
        return Err(Error::dim("initial law length"));
    }
    let reach = reachable_from(p, (0..n).filter(|&i| init[i] > 0.0));
    let closed = closed_classes(p, &reach);
    if closed.len() == 1 {
        return stationary_on(p, &closed[0]);
    }
    let mut cur = init.to_vec();
    let mut avg = vec![0.0; n];
    let rounds = 200_000;
    for _ in 0..rounds {
        for (a, c) in avg.iter_mut().zip(&cur) {
            *a += c;
        }
        cur = p.push_forward(&cur);
    }
    avg.iter_mut().for_each(|a| *a /= rounds as f64);
    Ok(avg)
}

pub fn is_irreducible(p: &FiniteKernel) -> bool {
    let n = p.n_from();
    (0..n).all(|s| reachable_from(p, [s]).iter().all(|&r| r))
}

fn reachable_from(p: &FiniteKernel, start: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let n = p.n_from();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = start.into_iter().collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        for t in 0..n {
            if p.get(s, t) > 0.0 && !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// Closed communicating classes inside the `within` set.
fn closed_classes(p: &FiniteKernel, within: &[bool]) -> Vec<Vec<usize>> {
    let n = p.n_from();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| if within[s] { reachable_from(p, [s]) } else { vec![false; n] })
        .collect();
    let mut classes = Vec::new();
    let mut assigned = vec![false; n];
    for s in 0..n {
        if !within[s] || assigned[s] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&t| reach[s][t] && reach[t][s]).collect();
        for &t in &class {
            assigned[t] = true;
        }
        let is_closed = class
            .iter()
            .all(|&a| (0..n).all(|b| !reach[a][b] || class.contains(&b)));
        if is_closed {
            classes.push(class);
        }
    }
    classes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_noise_chain() {
        let p = FiniteKernel::new(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        let mu = stationary_distribution(&p).unwrap();
        assert!((mu[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn reducible_chain_is_rejected_but_has_occupancy() {
        let p = FiniteKernel::new(vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(stationary_distribution(&p).is_err());
        let occ = long_run_occupancy(&p, &[1.0, 0.0, 0.0]).unwrap();
        assert!((occ[1] - 1.0).abs() < 1e-12);
        let split = long_run_occupancy(&p, &[0.0, 0.5, 0.5]).unwrap();
        assert!((split[1] - 0.5).abs() < 1e-9 && (split[2] - 0.5).abs() < 1e-9);
    }
}
