//! Filtering for finite POMDPs: the Bayes recursion, the belief kernel,
//! belief quantization and filter-stability estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::McEstimate;
use crate::error::{Error, Result};
use crate::markov::stationary_distribution;
use crate::metrics::{
    check_probability_vector, dobrushin_coefficient, tv_slices, w1_slices, ControlledKernel, DistanceTable,
    FiniteDistribution, FiniteKernel,
};
use crate::par::{map_indices, ExecMode};
use crate::perception::Perception;
use crate::rng::{self, derive_seed, sample_index};

/// Posterior over the hidden states.
pub type Belief = FiniteDistribution;

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    transition: ControlledKernel,
    observation: FiniteKernel,
    cost: Vec<Vec<f64>>,
    distance: DistanceTable,
    positive_observation: bool,
}

impl PomdpModel {
    /// `cost[x][u]`. With `require_positive_observation` every observation
    /// must have positive probability from every hidden state.
    pub fn new(
        transition: ControlledKernel,
        observation: FiniteKernel,
        cost: Vec<Vec<f64>>,
        distance: DistanceTable,
        require_positive_observation: bool,
    ) -> Result<Self> {
        let n = transition.n_states();
        if observation.n_from() != n {
            return Err(Error::validation("observation", "one row per hidden state"));
        }
        if distance.len() != n {
            return Err(Error::validation("distance", "one row per hidden state"));
        }
        if cost.len() != n || cost.iter().any(|r| r.len() != transition.n_actions()) {
            return Err(Error::validation("cost", "shape must be [hidden state][action]"));
        }
        if cost.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::validation("cost", "costs must be finite"));
        }
        if require_positive_observation {
            for (x, row) in observation.rows().iter().enumerate() {
                if let Some(y) = row.iter().position(|&p| p <= 0.0) {
                    return Err(Error::validation(
                        format!("observation[{x}][{y}]"),
                        "observation probabilities must be positive",
                    ));
                }
            }
        }
        Ok(Self {
            transition,
            observation,
            cost,
            distance,
            positive_observation: require_positive_observation,
        })
    }

    pub fn n_hidden(&self) -> usize {
        self.transition.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.transition.n_actions()
    }

    pub fn n_obs(&self) -> usize {
        self.observation.n_to()
    }

    pub fn transition(&self) -> &ControlledKernel {
        &self.transition
    }

    pub fn observation(&self) -> &FiniteKernel {
        &self.observation
    }

    pub fn cost(&self, x: usize, u: usize) -> f64 {
        self.cost[x][u]
    }

    pub fn costs(&self) -> &[Vec<f64>] {
        &self.cost
    }

    pub fn distance(&self) -> &DistanceTable {
        &self.distance
    }

    pub fn positive_observation(&self) -> bool {
        self.positive_observation
    }

    pub fn diameter(&self) -> f64 {
        self.distance.diameter()
    }

    pub fn c_max(&self) -> f64 {
        self.cost.iter().flatten().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Smallest `α_c` with `|c(x,u) − c(x',u)| ≤ α_c·d(x,x')`; also the
    /// W₁-Lipschitz constant of the expected cost on beliefs.
    pub fn cost_lipschitz(&self) -> f64 {
        let n = self.n_hidden();
        let mut best = 0.0_f64;
        for u in 0..self.n_actions() {
            for x in 0..n {
                for x2 in 0..n {
                    let d = self.distance.get(x, x2);
                    if d > 0.0 {
                        best = best.max((self.cost[x][u] - self.cost[x2][u]).abs() / d);
                    }
                }
            }
        }
        best
    }

    /// Expected cost `Σ_x b(x) c(x,u)`.
    pub fn belief_cost(&self, b: &[f64], u: usize) -> f64 {
        b.iter().zip(&self.cost).map(|(p, row)| p * row[u]).sum()
    }

    /// Hidden chain when actions are drawn i.i.d. from `mix`.
    pub fn mixed_chain(&self, mix: &[f64]) -> Result<FiniteKernel> {
        self.transition.mixed(mix)
    }

    /// Invariant law of the hidden chain under a state-independent action
    /// mixture.
    pub fn invariant_under(&self, mix: &[f64]) -> Result<Vec<f64>> {
        stationary_distribution(&self.mixed_chain(mix)?)
    }

    fn predict(&self, b: &[f64], u: usize) -> Vec<f64> {
        self.transition.action(u).push_forward(b)
    }

    fn correct(&self, pred: &[f64], y: usize) -> Result<Vec<f64>> {
        let mut post: Vec<f64> = pred
            .iter()
            .enumerate()
            .map(|(x, p)| p * self.observation.get(x, y))
            .collect();
        let z: f64 = post.iter().sum();
        if z <= 0.0 {
            return Err(Error::Conditioning(format!("observation {y} has zero predicted probability")));
        }
        post.iter_mut().for_each(|p| *p /= z);
        Ok(post)
    }

    fn check_indices(&self, b: &[f64], u: usize, y: Option<usize>) -> Result<()> {
        if b.len() != self.n_hidden() {
            return Err(Error::dim(format!("belief over {} of {} states", b.len(), self.n_hidden())));
        }
        if u >= self.n_actions() {
            return Err(Error::dim(format!("action {u} of {}", self.n_actions())));
        }
        if let Some(y) = y.filter(|&y| y >= self.n_obs()) {
            return Err(Error::dim(format!("observation {y} of {}", self.n_obs())));
        }
        Ok(())
    }
}

/// Conditions a prior on the first observation.
pub fn filter_start(prior: &Belief, y: usize, m: &PomdpModel) -> Result<Belief> {
    if y >= m.n_obs() {
        return Err(Error::dim(format!("observation {y} of {}", m.n_obs())));
    }
    Belief::new(m.correct(prior.weights(), y)?)
}

/// One predict-correct step `F(b, u, y)`.
pub fn filter_update(b: &Belief, u: usize, y: usize, m: &PomdpModel) -> Result<Belief> {
    m.check_indices(b.weights(), u, Some(y))?;
    Belief::new(m.correct(&m.predict(b.weights(), u), y)?)
}

/// Finite mixture of posterior beliefs, one atom per observation with
/// positive predicted probability.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMixture {
    pub atoms: Vec<Belief>,
    pub weights: Vec<f64>,
    /// The observation behind each atom.
    pub observations: Vec<usize>,
}

pub fn belief_kernel_eta(b: &Belief, u: usize, m: &PomdpModel) -> Result<BeliefMixture> {
    m.check_indices(b.weights(), u, None)?;
    let pred = m.predict(b.weights(), u);
    let mut out = BeliefMixture {
        atoms: Vec::new(),
        weights: Vec::new(),
        observations: Vec::new(),
    };
    for y in 0..m.n_obs() {
        let py: f64 = pred.iter().enumerate().map(|(x, p)| p * m.observation.get(x, y)).sum();
        if py > 0.0 {
            out.atoms.push(Belief::new(m.correct(&pred, y)?)?);
            out.weights.push(py);
            out.observations.push(y);
        }
    }
    Ok(out)
}

/// W₁ on the belief space, over the hidden-space metric.
pub fn belief_w1(a: &Belief, b: &Belief, m: &PomdpModel) -> Result<f64> {
    w1_slices(a.weights(), b.weights(), &m.distance)
}

/// W₁ between two belief mixtures, with pairwise belief W₁ as ground cost.
pub fn mixture_w1(a: &BeliefMixture, b: &BeliefMixture, m: &PomdpModel) -> Result<f64> {
    let atoms: Vec<&Belief> = a.atoms.iter().chain(&b.atoms).collect();
    let k = atoms.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = belief_w1(atoms[i], atoms[j], m)?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut p = a.weights.clone();
    p.resize(k, 0.0);
    let mut q = vec![0.0; a.atoms.len()];
    q.extend_from_slice(&b.weights);
    w1_slices(&p, &q, &DistanceTable::new(d)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// Smallest `α` with `‖T(·|x,u) − T(·|x',u)‖_TV ≤ α·d(x,x')`.
    pub alpha: f64,
    pub diameter: f64,
    /// Dobrushin coefficient of the observation kernel.
    pub dobrushin_observation: f64,
    pub k2: f64,
    pub contracts: bool,
}

/// `K₂ = α·D·(3 − 2δ(O))/2`.
pub fn lipschitz_constant_k2(m: &PomdpModel) -> Result<LipschitzReport> {
    let n = m.n_hidden();
    let mut alpha = 0.0_f64;
    for u in 0..m.n_actions() {
        for x in 0..n {
            for x2 in x + 1..n {
                let d = m.distance.get(x, x2);
                let tv = tv_slices(m.transition.row(x, u), m.transition.row(x2, u))?;
                if d > 0.0 {
                    alpha = alpha.max(tv / d);
                } else if tv > 0.0 {
                    return Err(Error::domain(format!("states {x} and {x2} are at distance 0 but differ")));
                }
            }
        }
    }
    let diameter = m.diameter();
    let dob = dobrushin_coefficient(&m.observation)?;
    let k2 = alpha * diameter * (3.0 - 2.0 * dob) / 2.0;
    Ok(LipschitzReport {
        alpha,
        diameter,
        dobrushin_observation: dob,
        k2,
        contracts: k2 < 1.0,
    })
}

/// Nearest-codepoint quantizer on the belief simplex.
#[derive(Debug, Clone)]
pub struct BeliefQuantizer {
    codebook: Vec<Belief>,
    distance: DistanceTable,
    /// Set when every off-diagonal distance equals this value, so W₁ is a
    /// multiple of total variation.
    uniform_distance: Option<f64>,
}

impl BeliefQuantizer {
    pub fn new(codebook: Vec<Belief>, distance: DistanceTable) -> Result<Self> {
        if codebook.is_empty() {
            return Err(Error::validation("codebook", "needs at least one codepoint"));
        }
        if let Some(i) = codebook.iter().position(|b| b.len() != distance.len()) {
            return Err(Error::validation(format!("codebook[{i}]"), "wrong number of hidden states"));
        }
        let n = distance.len();
        let first = if n > 1 { distance.get(0, 1) } else { 0.0 };
        let uniform = (0..n).all(|i| (0..n).all(|j| i == j || distance.get(i, j) == first));
        Ok(Self {
            codebook,
            distance,
            uniform_distance: uniform.then_some(first),
        })
    }

    /// All beliefs whose entries are multiples of `1/denominator`.
    pub fn lattice(n_hidden: usize, denominator: usize, distance: DistanceTable) -> Result<Self> {
        if n_hidden == 0 || denominator == 0 {
            return Err(Error::validation("denominator", "lattice needs positive size"));
        }
        let mut codebook = Vec::new();
        let mut counts = vec![0usize; n_hidden];
        fn rec(pos: usize, left: usize, counts: &mut Vec<usize>, den: usize, out: &mut Vec<Belief>) {
            if pos + 1 == counts.len() {
                counts[pos] = left;
                let w = counts.iter().map(|&c| c as f64 / den as f64).collect();
                out.push(Belief::new(w).expect("lattice point sums to one"));
                return;
            }
            for c in (0..=left).rev() {
                counts[pos] = c;
                rec(pos + 1, left - c, counts, den, out);
            }
        }
        rec(0, denominator, &mut counts, denominator, &mut codebook);
        Self::new(codebook, distance)
    }

    pub fn len(&self) -> usize {
        self.codebook.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codebook.is_empty()
    }

    pub fn codepoint(&self, i: usize) -> &Belief {
        &self.codebook[i]
    }

    pub fn codebook(&self) -> &[Belief] {
        &self.codebook
    }

    fn distance_to(&self, b: &[f64], i: usize) -> Result<f64> {
        let c = self.codebook[i].weights();
        match self.uniform_distance {
            Some(d) => Ok(0.5 * d * tv_slices(b, c)?),
            None => w1_slices(b, c, &self.distance),
        }
    }

    /// Index of the nearest codepoint (lowest index on ties) and the
    /// distortion `W₁(b, g(b))`.
    pub fn quantize(&self, b: &[f64]) -> Result<(usize, f64)> {
        if b.len() != self.distance.len() {
            return Err(Error::dim(format!("belief over {} of {} states", b.len(), self.distance.len())));
        }
        let mut best = (0, f64::INFINITY);
        for i in 0..self.codebook.len() {
            let d = self.distance_to(b, i)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    /// Largest distortion over the given beliefs.
    pub fn max_distortion<'a>(&self, beliefs: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
        let mut worst = 0.0_f64;
        for b in beliefs {
            worst = worst.max(self.quantize(b)?.1);
        }
        Ok(worst)
    }

    /// Largest distortion over a lattice `refine` times finer than the
    /// codebook's denominator. With two hidden states and an even `refine`
    /// this hits the cell midpoints and is exact.
    pub fn lattice_distortion(&self, denominator: usize, refine: usize) -> Result<f64> {
        let fine = BeliefQuantizer::lattice(self.distance.len(), denominator * refine, self.distance.clone())?;
        self.max_distortion(fine.codebook.iter().map(|b| b.weights()))
    }
}

pub fn belief_quantize<'a>(g: &'a BeliefQuantizer, b: &Belief) -> Result<(usize, &'a Belief, f64)> {
    let (i, d) = g.quantize(b.weights())?;
    Ok((i, g.codepoint(i), d))
}

/// Perceived state `g(π_t)` from the running filter.
#[derive(Debug, Clone)]
pub struct BeliefPerception {
    model: Arc<PomdpModel>,
    quantizer: Arc<BeliefQuantizer>,
    prior: Belief,
    belief: Belief,
}

impl BeliefPerception {
    pub fn new(model: Arc<PomdpModel>, quantizer: Arc<BeliefQuantizer>, prior: Belief) -> Result<Self> {
        if prior.len() != model.n_hidden() {
            return Err(Error::dim("prior over the wrong number of hidden states"));
        }
        Ok(Self {
            model,
            quantizer,
            belief: prior.clone(),
            prior,
        })
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }
}

impl Perception<usize> for BeliefPerception {
    fn n_states(&self) -> usize {
        self.quantizer.len()
    }

    fn start(&mut self, obs: &usize) -> Result<Option<usize>> {
        self.belief = filter_start(&self.prior, *obs, &self.model)?;
        Ok(Some(self.quantizer.quantize(self.belief.weights())?.0))
    }

    fn advance(&mut self, action: usize, obs: &usize) -> Result<Option<usize>> {
        self.belief = filter_update(&self.belief, action, *obs, &self.model)?;
        Ok(Some(self.quantizer.quantize(self.belief.weights())?.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtConfig {
    pub window: usize,
    pub t_max: usize,
    pub reps: usize,
    pub seed: u64,
    /// Law of `X₀`; the predictor `π_t⁻` starts here.
    pub initial: Vec<f64>,
    #[serde(default)]
    pub mode: ExecMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtPoint {
    pub t: usize,
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte-Carlo curve of `L_t` for `t = 0..=t_max` under i.i.d. actions
/// from `explore_mix`.
///
/// Each replicate samples one path of length `t_max + N`. For every `t` the
/// true predictor `π_t⁻ = P(X_t | Y_{[0,t−1]}, U_{[0,t−1]})` and the
/// invariant law `π*` are each filtered over `Y_{[t,t+N]}`, `U_{[t,t+N−1]}`,
/// and the TV distance of the two posteriors is recorded.
pub fn estimate_lt_curve(m: &PomdpModel, explore_mix: &[f64], cfg: &LtConfig) -> Result<Vec<LtPoint>> {
    check_probability_vector(explore_mix)?;
    check_probability_vector(&cfg.initial)?;
    if cfg.initial.len() != m.n_hidden() || explore_mix.len() != m.n_actions() {
        return Err(Error::dim("initial law or action mixture has the wrong size"));
    }
    if cfg.reps == 0 {
        return Err(Error::domain("zero Monte-Carlo replicates"));
    }
    let pi_star = m.invariant_under(explore_mix)?;
    let len = cfg.t_max + cfg.window;
    let per_rep = map_indices(cfg.mode, cfg.reps, |rep| -> Result<Vec<f64>> {
        let seed = derive_seed(cfg.seed, rep as u64);
        let mut env_rng = rng::stream(seed, rng::ENV_STREAM);
        let mut act_rng = rng::stream(seed, rng::EXPLORE_STREAM);
        let mut x = sample_index(&cfg.initial, &mut env_rng);
        let mut ys = Vec::with_capacity(len + 1);
        let mut us = Vec::with_capacity(len);
        ys.push(sample_index(m.observation.row(x), &mut env_rng));
        for _ in 0..len {
            let u = sample_index(explore_mix, &mut act_rng);
            x = sample_index(m.transition.row(x, u), &mut env_rng);
            us.push(u);
            ys.push(sample_index(m.observation.row(x), &mut env_rng));
        }
        let mut predictor = cfg.initial.clone();
        let mut out = Vec::with_capacity(cfg.t_max + 1);
        for t in 0..=cfg.t_max {
            let a = run_filter(m, &predictor, &ys[t..=t + cfg.window], &us[t..t + cfg.window])?;
            let b = run_filter(m, &pi_star, &ys[t..=t + cfg.window], &us[t..t + cfg.window])?;
            out.push(tv_slices(&a, &b)?);
            if t < cfg.t_max {
                predictor = m.predict(&m.correct(&predictor, ys[t])?, us[t]);
            }
        }
        Ok(out)
    });
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..=cfg.t_max)
        .map(|t| {
            let samples: Vec<f64> = per_rep.iter().map(|r| r[t]).collect();
            let e = McEstimate::from_samples(&samples);
            LtPoint {
                t,
                estimate: e.mean,
                stderr: e.stderr,
            }
        })
        .collect())
}

/// Single-`t` value of [`estimate_lt_curve`].
pub fn estimate_lt(m: &PomdpModel, explore_mix: &[f64], cfg: &LtConfig, t: usize) -> Result<LtPoint> {
    let cfg = LtConfig { t_max: t, ..cfg.clone() };
    Ok(*estimate_lt_curve(m, explore_mix, &cfg)?.last().expect("curve has t_max + 1 points"))
}

fn run_filter(m: &PomdpModel, prior: &[f64], ys: &[usize], us: &[usize]) -> Result<Vec<f64>> {
    let mut b = m.correct(prior, ys[0])?;
    for (u, y) in us.iter().zip(&ys[1..]) {
        b = m.correct(&m.predict(&b, *u), *y)?;
    }
    Ok(b)
}

/// Optimal belief-MDP value for two hidden states, by value iteration on
/// a uniform grid over `P(X = 0)` with linear interpolation between grid
/// points.
/// Expected cost of one action at a grid point, and the `(probability,
/// next p0)` pairs it leads to.
type GridStep = (f64, Vec<(f64, f64)>);

#[derive(Debug, Clone)]
pub struct TwoStateBeliefOracle {
    values: Vec<f64>,
}

impl TwoStateBeliefOracle {
    pub fn solve(m: &PomdpModel, beta: f64, grid: usize, tol: f64) -> Result<Self> {
        if m.n_hidden() != 2 {
            return Err(Error::dim("the grid oracle covers two hidden states"));
        }
        if grid < 2 {
            return Err(Error::dim("grid needs two points"));
        }
        let mut model: Vec<Vec<GridStep>> = Vec::with_capacity(grid + 1);
        for i in 0..=grid {
            let p = i as f64 / grid as f64;
            let b = Belief::new(vec![p, 1.0 - p])?;
            let per_action = (0..m.n_actions())
                .map(|u| {
                    let eta = belief_kernel_eta(&b, u, m)?;
                    let next = eta.weights.iter().zip(&eta.atoms).map(|(w, a)| (*w, a.weights()[0])).collect();
                    Ok((m.belief_cost(b.weights(), u), next))
                })
                .collect::<Result<Vec<_>>>()?;
            model.push(per_action);
        }
        let mut values = vec![0.0; grid + 1];
        loop {
            let next: Vec<f64> = model
                .iter()
                .map(|acts| {
                    acts.iter()
                        .map(|(c, nxt)| c + beta * nxt.iter().map(|(w, p)| w * interpolate(&values, *p)).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let delta = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            values = next;
            if delta <= tol {
                return Ok(Self { values });
            }
        }
    }

    pub fn value(&self, b: &Belief) -> f64 {
        interpolate(&self.values, b.weights()[0])
    }
}

fn interpolate(values: &[f64], p: f64) -> f64 {
    let g = (values.len() - 1) as f64;
    let pos = (p.clamp(0.0, 1.0) * g).min(g);
    let i = (pos.floor() as usize).min(values.len() - 2);
    let frac = pos - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(t: Vec<Vec<f64>>, o: Vec<Vec<f64>>, positive: bool) -> PomdpModel {
        PomdpModel::new(
            ControlledKernel::new(vec![FiniteKernel::new(t).unwrap()]).unwrap(),
            FiniteKernel::new(o).unwrap(),
            vec![vec![0.0], vec![1.0]],
            DistanceTable::discrete(2).unwrap(),
            positive,
        )
        .unwrap()
    }

    fn b(w: &[f64]) -> Belief {
        Belief::new(w.to_vec()).unwrap()
    }

    #[test]
    fn hand_bayes_update() {
        let m = model(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.8, 0.2], vec![0.3, 0.7]], true);
        let post = filter_update(&b(&[0.5, 0.5]), 0, 0, &m).unwrap();
        assert!((post.weights()[0] - 0.8 / 1.1).abs() < 1e-15);
        let eta = belief_kernel_eta(&b(&[0.5, 0.5]), 0, &m).unwrap();
        assert!((eta.weights[0] - 0.55).abs() < 1e-15 && (eta.weights[1] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn identity_observation_collapses() {
        let m = model(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![1.0, 0.0], vec![0.0, 1.0]], false);
        assert_eq!(filter_update(&b(&[0.2, 0.8]), 0, 1, &m).unwrap().weights(), &[0.0, 1.0]);
        let eta = belief_kernel_eta(&b(&[0.2, 0.8]), 0, &m).unwrap();
        assert_eq!(eta.atoms.len(), 2);
    }

    #[test]
    fn noninformative_observation_returns_prediction() {
        let m = model(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![0.5, 0.5], vec![0.5, 0.5]], true);
        let post = filter_update(&b(&[1.0, 0.0]), 0, 1, &m).unwrap();
        assert_eq!(post.weights(), &[0.7, 0.3]);
        let eta = belief_kernel_eta(&b(&[1.0, 0.0]), 0, &m).unwrap();
        assert!(eta.atoms.iter().all(|a| a.weights() == [0.7, 0.3]));
    }

    #[test]
    fn zero_probability_observation_errors() {
        let m = model(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]], false);
        assert!(matches!(filter_update(&b(&[1.0, 0.0]), 0, 1, &m), Err(Error::Conditioning(_))));
    }

    #[test]
    fn positivity_is_enforced_when_declared() {
        let t = ControlledKernel::new(vec![FiniteKernel::identity(2).unwrap()]).unwrap();
        let r = PomdpModel::new(
            t,
            FiniteKernel::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap(),
            vec![vec![0.0], vec![0.0]],
            DistanceTable::discrete(2).unwrap(),
            true,
        );
        assert!(matches!(r, Err(Error::Validation { path, .. }) if path == "observation[0][1]"));
    }

    #[test]
    fn k2_example() {
        let m = model(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![0.9, 0.1], vec![0.4, 0.6]], true);
        let r = lipschitz_constant_k2(&m).unwrap();
        assert!((r.alpha - 0.6).abs() < 1e-12);
        assert!((r.dobrushin_observation - 0.5).abs() < 1e-12);
        assert!((r.k2 - 0.6).abs() < 1e-12);
        assert!(r.contracts);
        let flat = model(vec![vec![0.7, 0.3], vec![0.7, 0.3]], vec![vec![0.9, 0.1], vec![0.4, 0.6]], true);
        assert_eq!(lipschitz_constant_k2(&flat).unwrap().k2, 0.0);
        let blind = model(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![0.5, 0.5], vec![0.5, 0.5]], true);
        assert!((lipschitz_constant_k2(&blind).unwrap().k2 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn lattice_sizes_and_distortion() {
        let g = BeliefQuantizer::lattice(2, 8, DistanceTable::discrete(2).unwrap()).unwrap();
        assert_eq!(g.len(), 9);
        assert!((g.lattice_distortion(8, 2).unwrap() - 1.0 / 16.0).abs() < 1e-12);
        let (i, _, d) = belief_quantize(&g, g.codepoint(3)).unwrap();
        assert_eq!((i, d), (3, 0.0));
        assert_eq!(BeliefQuantizer::lattice(3, 4, DistanceTable::discrete(3).unwrap()).unwrap().len(), 15);
    }

    #[test]
    fn lt_vanishes_for_matching_priors_and_identity_observation() {
        let noisy = model(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![0.9, 0.1], vec![0.4, 0.6]], true);
        let pi = noisy.invariant_under(&[1.0]).unwrap();
        let cfg = LtConfig {
            window: 1,
            t_max: 5,
            reps: 200,
            seed: 3,
            initial: pi,
            mode: ExecMode::Sequential,
        };
        let curve = estimate_lt_curve(&noisy, &[1.0], &cfg).unwrap();
        assert!(curve[0].estimate < 1e-12, "{:?}", curve[0]);
        assert!(curve.iter().all(|p| (0.0..=2.0).contains(&p.estimate)));
        let exact = model(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![1.0, 0.0], vec![0.0, 1.0]], false);
        let cfg = LtConfig {
            initial: vec![1.0, 0.0],
            ..cfg
        };
        for p in estimate_lt_curve(&exact, &[1.0], &cfg).unwrap() {
            assert_eq!(p.estimate, 0.0);
        }
    }

    #[test]
    fn oracle_matches_fully_observed_values_with_identity_observation() {
        let m = model(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![1.0, 0.0], vec![0.0, 1.0]], false);
        let o = TwoStateBeliefOracle::solve(&m, 0.7, 200, 1e-12).unwrap();
        // Single action: J = c + βTJ with c = (0, 1).
        let k = ControlledKernel::new(vec![FiniteKernel::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()]).unwrap();
        let j = crate::induced::policy_evaluation(
            &[vec![0.0], vec![1.0]],
            &k,
            &crate::qcore::PolicyTable::uniform(2, 1).unwrap(),
            0.7,
            1e-13,
        )
        .unwrap();
        assert!((o.value(&b(&[1.0, 0.0])) - j[0]).abs() < 1e-9);
        assert!((o.value(&b(&[0.0, 1.0])) - j[1]).abs() < 1e-9);
    }
}
