//! Probability metrics and kernel coefficients on finite spaces.
//!
//! Total variation uses the factor-2 convention, `‖p − q‖ = Σ|pᵢ − qᵢ|`,
//! so it ranges over `[0, 2]`. The order-1 Wasserstein distance is solved
//! exactly as a transportation problem by successive shortest paths; on the
//! real line the closed-form CDF integral is available as a cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ weights = 1`. Inputs outside it are rejected, never
/// renormalized.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Residual flow below this is treated as zero by the transport solver.
const FLOW_EPS: f64 = 1e-15;

/// A probability vector over indexed atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDistribution {
    weights: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_probability_vector(&weights)?;
        Ok(Self { weights })
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::dim(format!("point mass at {at} on {n} atoms")));
        }
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("empty support"));
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }
}

impl TryFrom<Vec<f64>> for FiniteDistribution {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<FiniteDistribution> for Vec<f64> {
    fn from(d: FiniteDistribution) -> Self {
        d.weights
    }
}

pub(crate) fn check_probability_vector(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::dim("empty support"));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::domain(format!("weight {w} is not a nonnegative real")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::domain(format!(
            "weights sum to {sum}, not 1 within {WEIGHT_TOL:e}"
        )));
    }
    Ok(())
}

/// Pairwise distances between the atoms of a finite metric space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    n: usize,
    d: Vec<f64>,
}

impl DistanceTable {
    /// Validates nonnegativity, symmetry and a zero diagonal. The triangle
    /// inequality is assumed, not checked.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::dim("empty distance table"));
        }
        let mut d = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dim(format!(
                    "distance row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            d.extend_from_slice(row);
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::domain(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::domain(format!("negative distance d({i},{j}) = {v}")));
                }
                if (v - d[j * n + i]).abs() > 1e-12 {
                    return Err(Error::domain(format!("asymmetric distance at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, d })
    }

    /// `|xᵢ − xⱼ|` over scalar points.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .map(|x| points.iter().map(|y| (x - y).abs()).collect())
                .collect(),
        )
    }

    /// The discrete metric: 1 between distinct atoms.
    pub fn discrete(n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn diameter(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }
}

/// A row-stochastic matrix `K(j | i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct FiniteKernel {
    rows: Vec<Vec<f64>>,
}

impl FiniteKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::dim("empty kernel"));
        };
        let width = first.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::dim(format!(
                    "kernel row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            check_probability_vector(row)
                .map_err(|e| Error::domain(format!("kernel row {i}: {e}")))?;
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn n_from(&self) -> usize {
        self.rows.len()
    }

    pub fn n_to(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Row vector `p` times the kernel.
    pub fn push_forward(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_to()];
        for (pi, row) in p.iter().zip(&self.rows) {
            if *pi == 0.0 {
                continue;
            }
            for (o, k) in out.iter_mut().zip(row) {
                *o += pi * k;
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for FiniteKernel {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<FiniteKernel> for Vec<Vec<f64>> {
    fn from(k: FiniteKernel) -> Self {
        k.rows
    }
}

/// A kernel per action over a common state space: `K(· | s, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FiniteKernel>", into = "Vec<FiniteKernel>")]
pub struct ControlledKernel {
    per_action: Vec<FiniteKernel>,
}

impl ControlledKernel {
    pub fn new(per_action: Vec<FiniteKernel>) -> Result<Self> {
        let Some(first) = per_action.first() else {
            return Err(Error::dim("controlled kernel with no actions"));
        };
        let n = first.n_from();
        for (u, k) in per_action.iter().enumerate() {
            if k.n_from() != n || k.n_to() != n {
                return Err(Error::dim(format!(
                    "action {u} kernel is {}x{}, expected {n}x{n}",
                    k.n_from(),
                    k.n_to()
                )));
            }
        }
        Ok(Self { per_action })
    }

    pub fn n_states(&self) -> usize {
        self.per_action[0].n_from()
    }

    pub fn n_actions(&self) -> usize {
        self.per_action.len()
    }

    pub fn action(&self, u: usize) -> &FiniteKernel {
        &self.per_action[u]
    }

    pub fn row(&self, s: usize, u: usize) -> &[f64] {
        self.per_action[u].row(s)
    }

    /// The uncontrolled kernel obtained when actions are drawn from `mix`
    /// independently of the state.
    pub fn mixed(&self, mix: &[f64]) -> Result<FiniteKernel> {
        if mix.len() != self.n_actions() {
            return Err(Error::dim("action mixture length"));
        }
        let n = self.n_states();
        let rows = (0..n)
            .map(|s| {
                let mut row = vec![0.0; n];
                for (u, w) in mix.iter().enumerate() {
                    for (r, k) in row.iter_mut().zip(self.row(s, u)) {
                        *r += w * k;
                    }
                }
                row
            })
            .collect();
        FiniteKernel::new(rows)
    }
}

impl TryFrom<Vec<FiniteKernel>> for ControlledKernel {
    type Error = Error;

    fn try_from(v: Vec<FiniteKernel>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ControlledKernel> for Vec<FiniteKernel> {
    fn from(k: ControlledKernel) -> Self {
        k.per_action
    }
}

/// Total variation with the factor-2 convention: `Σᵢ |pᵢ − qᵢ|`.
pub fn tv_distance(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    tv_slices(p.weights(), q.weights())
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(format!(
            "supports of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Exact order-1 Wasserstein distance between two distributions on the
/// atoms of `dist`.
pub fn w1_distance(
    p: &FiniteDistribution,
    q: &FiniteDistribution,
    dist: &DistanceTable,
) -> Result<f64> {
    w1_slices(p.weights(), q.weights(), dist)
}

pub(crate) fn w1_slices(p: &[f64], q: &[f64], dist: &DistanceTable) -> Result<f64> {
    if p.len() != q.len() || p.len() != dist.len() {
        return Err(Error::dim(format!(
            "supports {} / {} against a {}-point distance table",
            p.len(),
            q.len(),
            dist.len()
        )));
    }
    let sources: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    let supply: Vec<f64> = sources.iter().map(|&i| p[i]).collect();
    let demand: Vec<f64> = sinks.iter().map(|&j| q[j]).collect();
    let cost: Vec<Vec<f64>> = sources
        .iter()
        .map(|&i| sinks.iter().map(|&j| dist.get(i, j)).collect())
        .collect();
    Ok(transport_cost(&supply, &demand, &cost))
}

/// Minimum-cost transportation by successive shortest augmenting paths.
///
/// Nodes: 0 is the super-source, `1..=n` the supplies, `n+1..=n+m` the
/// demands, `n+m+1` the super-sink. Residual costs can be negative on
/// reverse arcs, so paths are found with Bellman-Ford.
fn transport_cost(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return 0.0;
    }
    let nodes = n + m + 2;
    let (src, sink) = (0, n + m + 1);
    let mut graph = FlowGraph::new(nodes);
    for (i, s) in supply.iter().enumerate() {
        graph.add_edge(src, 1 + i, *s, 0.0);
    }
    for (j, d) in demand.iter().enumerate() {
        graph.add_edge(1 + n + j, sink, *d, 0.0);
    }
    for i in 0..n {
        for j in 0..m {
            graph.add_edge(1 + i, 1 + n + j, f64::INFINITY, cost[i][j]);
        }
    }

    let total: f64 = supply.iter().sum::<f64>().min(demand.iter().sum());
    let mut shipped = 0.0;
    let mut total_cost = 0.0;
    // Each augmentation saturates at least one arc; the cap only guards
    // against floating-point cycling.
    let max_rounds = 64 * (nodes + n * m);
    for _ in 0..max_rounds {
        if total - shipped <= FLOW_EPS {
            break;
        }
        let Some(parent) = graph.shortest_path(src, sink) else {
            break;
        };
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != src {
            let e = parent[v];
            bottleneck = bottleneck.min(graph.cap[e]);
            v = graph.from[e];
        }
        bottleneck = bottleneck.min(total - shipped);
        let mut v = sink;
        while v != src {
            let e = parent[v];
            graph.cap[e] -= bottleneck;
            graph.cap[e ^ 1] += bottleneck;
            total_cost += bottleneck * graph.cost[e];
            v = graph.from[e];
        }
        shipped += bottleneck;
    }
    total_cost.max(0.0)
}

struct FlowGraph {
    adj: Vec<Vec<usize>>,
    from: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    cost: Vec<f64>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            from: Vec::new(),
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, cap: f64, cost: f64) {
        for (x, y, c, w) in [(a, b, cap, cost), (b, a, 0.0, -cost)] {
            self.adj[x].push(self.from.len());
            self.from.push(x);
            self.to.push(y);
            self.cap.push(c);
            self.cost.push(w);
        }
    }

    /// Bellman-Ford over arcs with positive residual capacity. Returns the
    /// arc entering each node on a cheapest path, when the sink is reachable.
    fn shortest_path(&self, src: usize, sink: usize) -> Option<Vec<usize>> {
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent = vec![usize::MAX; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for e in 0..self.from.len() {
                if self.cap[e] <= FLOW_EPS {
                    continue;
                }
                let (a, b) = (self.from[e], self.to[e]);
                if dist[a].is_finite() && dist[a] + self.cost[e] < dist[b] - 1e-15 {
                    dist[b] = dist[a] + self.cost[e];
                    parent[b] = e;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        dist[sink].is_finite().then_some(parent)
    }
}

/// Order-1 Wasserstein distance on the real line via
/// `∫ |F_p(x) − F_q(x)| dx`.
pub fn w1_scalar(points: &[f64], p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    if points.len() != p.len() || points.len() != q.len() {
        return Err(Error::dim("scalar support size"));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("non-finite support point"));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let (mut fp, mut fq, mut total) = (0.0, 0.0, 0.0);
    for k in 0..order.len() - 1 {
        let i = order[k];
        fp += p.weights()[i];
        fq += q.weights()[i];
        total += (fp - fq).abs() * (points[order[k + 1]] - points[i]);
    }
    Ok(total)
}

/// Dobrushin coefficient `min_{x,y} Σ_z min(K(x,z), K(y,z))`, the minimal
/// overlap between any two rows.
pub fn dobrushin_coefficient(k: &FiniteKernel) -> Result<f64> {
    if k.n_from() == 0 || k.n_to() == 0 {
        return Err(Error::dim("empty kernel"));
    }
    let mut best = 1.0_f64;
    for x in 0..k.n_from() {
        for y in x + 1..k.n_from() {
            let overlap: f64 = k.row(x).iter().zip(k.row(y)).map(|(a, b)| a.min(*b)).sum();
            best = best.min(overlap);
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(w: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(w.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        let d0 = dist(&[1.0, 0.0]);
        let d1 = dist(&[0.0, 1.0]);
        assert_eq!(tv_distance(&d0, &d0).unwrap(), 0.0);
        assert_eq!(tv_distance(&d0, &d1).unwrap(), 2.0);
        let v = tv_distance(&dist(&[0.5, 0.5]), &dist(&[0.9, 0.1])).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tv_rejects_mismatched_supports() {
        let r = tv_distance(&dist(&[1.0]), &dist(&[0.5, 0.5]));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn w1_examples() {
        let d = DistanceTable::from_points(&[0.0, 1.0]).unwrap();
        let d0 = dist(&[1.0, 0.0]);
        let d1 = dist(&[0.0, 1.0]);
        assert!((w1_distance(&d0, &d1, &d).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(w1_distance(&d1, &d1, &d).unwrap(), 0.0);
        let v = w1_distance(&dist(&[0.5, 0.5]), &dist(&[0.9, 0.1]), &d).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
        let c = w1_scalar(&[0.0, 1.0], &dist(&[0.5, 0.5]), &dist(&[0.9, 0.1])).unwrap();
        assert!((c - 0.4).abs() < 1e-12);
    }

    #[test]
    fn distance_table_validation() {
        assert!(DistanceTable::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(DistanceTable::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceTable::new(vec![vec![1.0]]).is_err());
        assert_eq!(DistanceTable::from_points(&[0.0, 0.3, 2.0]).unwrap().diameter(), 2.0);
    }

    #[test]
    fn distribution_validation() {
        assert!(FiniteDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(FiniteDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(FiniteDistribution::new(vec![]).is_err());
        assert!(FiniteDistribution::new(vec![0.5, 0.5 + 1e-13]).is_ok());
    }

    #[test]
    fn dobrushin_examples() {
        let same = FiniteKernel::new(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_eq!(dobrushin_coefficient(&same).unwrap(), 1.0);
        let id = FiniteKernel::identity(2).unwrap();
        assert_eq!(dobrushin_coefficient(&id).unwrap(), 0.0);
        let k = FiniteKernel::new(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        assert!((dobrushin_coefficient(&k).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_rows() {
        assert!(FiniteKernel::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(FiniteKernel::new(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::new(vec![]).is_err());
    }

    #[test]
    fn mixed_kernel_averages_actions() {
        let k = ControlledKernel::new(vec![
            FiniteKernel::identity(2).unwrap(),
            FiniteKernel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        ])
        .unwrap();
        let m = k.mixed(&[0.5, 0.5]).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
    }
}
