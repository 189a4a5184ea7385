//! Brute-force reference computations.
//!
//! These enumerate definitions directly and share no code path with the
//! fast implementations in [`crate::metrics`]. They are exponential in the
//! support size and only meant for supports of a handful of atoms.

/// `2 · max_B |p(B) − q(B)|` over every subset `B`.
pub fn tv_by_subsets(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let n = p.len();
    let mut best = 0.0_f64;
    for mask in 0u32..(1 << n) {
        let diff: f64 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| p[i] - q[i])
            .sum();
        best = best.max(diff.abs());
    }
    2.0 * best
}

/// Exact transport cost by enumerating basic feasible solutions: every
/// spanning tree of the complete bipartite supply/demand graph, with flows
/// fixed by peeling leaves, kept when all flows are nonnegative.
pub fn w1_by_vertex_enumeration(p: &[f64], q: &[f64], d: &[Vec<f64>]) -> f64 {
    let (n, m) = (p.len(), q.len());
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    for_each_combination(edges.len(), k, |chosen| {
        let tree: Vec<(usize, usize)> = chosen.iter().map(|&e| edges[e]).collect();
        if !is_spanning_tree(n, m, &tree) {
            return;
        }
        if let Some(flows) = tree_flows(p, q, &tree) {
            let cost: f64 = tree
                .iter()
                .zip(&flows)
                .map(|(&(i, j), f)| f * d[i][j])
                .sum();
            best = best.min(cost);
        }
    });
    best
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn is_spanning_tree(n: usize, m: usize, tree: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for &(i, j) in tree {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

fn tree_flows(p: &[f64], q: &[f64], tree: &[(usize, usize)]) -> Option<Vec<f64>> {
    let n = p.len();
    let mut mass: Vec<f64> = p.iter().chain(q).copied().collect();
    let mut flows = vec![f64::NAN; tree.len()];
    let mut open: Vec<bool> = vec![true; tree.len()];
    for _ in 0..tree.len() {
        let mut degree = vec![0usize; mass.len()];
        for (e, &(i, j)) in tree.iter().enumerate() {
            if open[e] {
                degree[i] += 1;
                degree[n + j] += 1;
            }
        }
        let (e, leaf_is_supply) = tree.iter().enumerate().find_map(|(e, &(i, j))| {
            if !open[e] {
                None
            } else if degree[i] == 1 {
                Some((e, true))
            } else if degree[n + j] == 1 {
                Some((e, false))
            } else {
                None
            }
        })?;
        let (i, j) = tree[e];
        let (leaf, other) = if leaf_is_supply { (i, n + j) } else { (n + j, i) };
        let f = mass[leaf];
        flows[e] = f;
        mass[leaf] = 0.0;
        mass[other] -= f;
        open[e] = false;
    }
    flows.iter().all(|f| *f >= -1e-12).then_some(flows)
}

/// Dobrushin coefficient from its definition: infimum over row pairs and
/// over every set partition `{A_i}` of the target space of
/// `Σ_i min(K(x, A_i), K(y, A_i))`.
pub fn dobrushin_by_partitions(rows: &[Vec<f64>]) -> f64 {
    let m = rows[0].len();
    let partitions = set_partitions(m);
    let mut best = f64::INFINITY;
    for x in rows {
        for y in rows {
            for part in &partitions {
                let total: f64 = part
                    .iter()
                    .map(|block| {
                        let kx: f64 = block.iter().map(|&z| x[z]).sum();
                        let ky: f64 = block.iter().map(|&z| y[z]).sum();
                        kx.min(ky)
                    })
                    .sum();
                best = best.min(total);
            }
        }
    }
    best
}

/// All set partitions of `{0, …, m−1}` via restricted growth strings.
pub fn set_partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; m];
    fn rec(pos: usize, max_label: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        let m = labels.len();
        if pos == m {
            let blocks = labels.iter().copied().max().map_or(0, |b| b + 1);
            let mut part = vec![Vec::new(); blocks];
            for (z, &l) in labels.iter().enumerate() {
                part[l].push(z);
            }
            out.push(part);
            return;
        }
        for l in 0..=max_label {
            labels[pos] = l;
            rec(pos + 1, max_label.max(l + 1), labels, out);
        }
    }
    if m == 0 {
        return vec![vec![]];
    }
    labels[0] = 0;
    rec(1, 1, &mut labels, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_numbers() {
        let counts: Vec<usize> = (1..=5).map(|m| set_partitions(m).len()).collect();
        assert_eq!(counts, vec![1, 2, 5, 15, 52]);
    }

    #[test]
    fn hand_checked_values() {
        assert!((tv_by_subsets(&[0.5, 0.5], &[0.9, 0.1]) - 0.8).abs() < 1e-15);
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!((w1_by_vertex_enumeration(&[0.5, 0.5], &[0.9, 0.1], &d) - 0.4).abs() < 1e-15);
        let k = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        assert!((dobrushin_by_partitions(&k) - 0.5).abs() < 1e-15);
    }
}
