//! Acceptance suite: nine criteria, each a pass/fail verdict with the
//! measured numbers. Seeds are fixed, so every verdict is reproducible.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::*;
use crate::metrics::{dobrushin_coefficient, tv_distance, w1_distance, w1_scalar, DistanceTable, FiniteDistribution, FiniteKernel};
use crate::oracle::{dobrushin_by_partitions, tv_by_subsets, w1_by_vertex_enumeration};
use crate::par::ExecMode;
use crate::rng;

/// Reference stationary law of the machine `(x, w)` under uniform
/// exploration, to three significant digits.
pub const REFERENCE_STATIONARY: [f64; 4] = [0.145, 0.127, 0.654, 0.0728];
/// Reference discounted costs of the state policy and the window policy.
pub const REFERENCE_STATE_POLICY_VALUE: f64 = 1.66;
pub const REFERENCE_WINDOW_POLICY_VALUE: f64 = 1.59;
/// Monte-Carlo tolerance for bound checks.
pub const MC_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {}: {} ({:.2} s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

fn timed(id: u8, name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> CriterionResult {
    let start = Instant::now();
    let outcome = body();
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds,
    }
}

fn with_limit(mut r: CriterionResult, limit: f64) -> CriterionResult {
    if r.seconds >= limit {
        r.passed = false;
        r.detail.push_str(&format!("; runtime limit {limit} s exceeded"));
    } else {
        r.detail.push_str(&format!("; runtime under {limit} s"));
    }
    r
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Machine stationary law: analytic within 0.001 and 10⁶-step frequencies
/// within 0.01 of the reference values, in under 5 s.
pub fn criterion_1() -> CriterionResult {
    let r = timed(1, "machine stationary distribution", || {
        let s = machine_stationary_study(1_000_000, 1)?;
        let analytic = dev(&s.analytic, &REFERENCE_STATIONARY);
        let empirical = dev(&s.empirical, &REFERENCE_STATIONARY);
        Ok((
            analytic <= 1e-3 && empirical <= 1e-2,
            format!(
                "analytic {} (max dev {analytic:.2e} <= 1e-3), empirical {} (max dev {empirical:.2e} <= 1e-2)",
                fmt_vec(&s.analytic),
                fmt_vec(&s.empirical)
            ),
        ))
    });
    with_limit(r, 5.0)
}

fn dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Initializations whose runs decide criterion 2.
pub const CONVERGENCE_INITS: [f64; 2] = [1.0, 3.0];

/// Q-learning on `s = x` reaches sup error 0.05 of the induced-model fixed
/// point after 10⁶ steps from two initializations, in under 30 s. The
/// zero initialization is reported alongside.
pub fn criterion_2() -> CriterionResult {
    let r = timed(2, "machine Q-learning convergence", || {
        let inits = [CONVERGENCE_INITS[0], CONVERGENCE_INITS[1], 0.0];
        let s = machine_convergence_study(1_000_000, 2, &inits, 10_000)?;
        let errs: Vec<f64> = s.runs.iter().map(|r| r.report.final_error).collect();
        let passed = errs[..2].iter().all(|e| *e <= 0.05);
        Ok((
            passed,
            format!(
                "sup error Q0=1: {:.4}, Q0=3: {:.4} (<= 0.05); Q0=0 (informational): {:.4}",
                errs[0], errs[1], errs[2]
            ),
        ))
    });
    with_limit(r, 30.0)
}

/// Monte-Carlo values of the two machine policies within 0.05 of the
/// reference values, window policy strictly better, in under 60 s.
pub fn criterion_3() -> CriterionResult {
    let r = timed(3, "machine policy values", || {
        let v = machine_policy_values(20_000, 80, 100, 3, ExecMode::Parallel)?;
        let learned = machine_window_study(1_000_000, 3)?;
        let starts = machine_start_sensitivity(20_000, 80, 3, ExecMode::Parallel)?;
        let (a, b) = (v.state_policy, v.window_policy);
        let passed = (a.mean - REFERENCE_STATE_POLICY_VALUE).abs() <= 0.05
            && (b.mean - REFERENCE_WINDOW_POLICY_VALUE).abs() <= 0.05
            && b.mean < a.mean;
        Ok((
            passed,
            format!(
                "state policy {:.4} ± {:.4} (target 1.66 ± 0.05), window policy {:.4} ± {:.4} (target 1.59 ± 0.05), \
                 window better: {}; window learner greedy policy {:?}; without burn-in (informational): {}",
                a.mean,
                a.stderr,
                b.mean,
                b.stderr,
                b.mean < a.mean,
                learned.policy,
                starts
                    .iter()
                    .map(|s| format!("x0={} {:.3}/{:.3}", s.x0, s.state_policy.mean, s.window_policy.mean))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ))
    });
    with_limit(r, 60.0)
}

/// Three random finite MDPs: learned Q within 0.05 of value iteration.
pub fn criterion_4() -> CriterionResult {
    timed(4, "finite-MDP oracle equivalence", || {
        let mut parts = Vec::new();
        let mut passed = true;
        for (i, (n, m)) in [(3, 2), (4, 3), (5, 5)].into_iter().enumerate() {
            let s = finite_mdp_study(n, m, 1_000_000, 0.5, 40 + i as u64)?;
            passed &= s.sup_error <= 0.05;
            parts.push(format!("{n}x{m}: {:.4}", s.sup_error));
        }
        Ok((passed, format!("sup errors {} (<= 0.05)", parts.join(", "))))
    })
}

/// Quantized continuous control: gap within the bound plus tolerance for
/// M = 4, 8, 16, and the gap does not grow with M.
pub fn criterion_5() -> CriterionResult {
    timed(5, "quantized-MDP bound soundness", || {
        let points = quantization_study(&quantization_benchmark(), &[4, 8, 16], &QuantizationSettings::default())?;
        let sound = points.iter().all(|p| p.mc_gap <= p.bound + MC_TOLERANCE);
        let grid_monotone = points.windows(2).all(|w| w[1].grid_gap <= w[0].grid_gap + 1e-12);
        let mc_monotone = points.windows(2).all(|w| {
            let se = (w[0].value.stderr.powi(2) + w[1].value.stderr.powi(2)).sqrt();
            w[1].mc_gap <= w[0].mc_gap + 2.0 * se
        });
        let parts: Vec<String> = points
            .iter()
            .map(|p| {
                format!(
                    "M={}: gap {:.4} ± {:.4} (fine-grid {:.4}) <= bound {:.3} + {MC_TOLERANCE}",
                    p.cells, p.mc_gap, p.value.stderr, p.grid_gap, p.bound
                )
            })
            .collect();
        Ok((
            sound && grid_monotone && mc_monotone,
            format!(
                "{}; nonincreasing: fine-grid {grid_monotone}, Monte Carlo within 2 se {mc_monotone}",
                parts.join("; ")
            ),
        ))
    })
}

/// Window learner on a two-state POMDP: identity observations give
/// `L_t = 0` for `t ≥ 1` and a gap within the window bound; noisy
/// observations give an `L_t` curve that decreases within 2 standard
/// errors, and a gap within its bound.
pub fn criterion_6() -> CriterionResult {
    timed(6, "finite-window POMDP", || {
        let settings = WindowSettings::default();
        let identity = window_pomdp_study(
            &two_state_pomdp(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            &[0.5, 0.5],
            &settings,
        )?;
        let lt_zero = identity.lt_curve.iter().skip(1).all(|p| p.estimate.abs() <= 1e-12);
        let id_ok = lt_zero && identity.gap <= identity.bound.value + 1e-9;

        let noisy = window_pomdp_study(
            &two_state_pomdp(vec![vec![0.8, 0.2], vec![0.3, 0.7]]),
            &[0.5, 0.5],
            &settings,
        )?;
        let c = &noisy.lt_curve;
        let decreasing = c.windows(2).all(|w| {
            let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[1].estimate <= w[0].estimate + 2.0 * se
        }) && c.last().map(|p| p.estimate) < c.first().map(|p| p.estimate);
        let noisy_ok = decreasing && noisy.gap <= noisy.bound.value + 1e-9;
        Ok((
            id_ok && noisy_ok,
            format!(
                "identity: L_t=0 for t>=1 {lt_zero}, gap {:.2e} <= bound {:.4}; noisy: L_0 {:.4} -> L_{} {:.4}, \
                 decreasing within 2 se {decreasing}, gap {:.4} <= bound {:.4}",
                identity.gap,
                identity.bound.value,
                c[0].estimate,
                c.len() - 1,
                c[c.len() - 1].estimate,
                noisy.gap,
                noisy.bound.value
            ),
        ))
    })
}

/// Belief pipeline: filter invariants, W₁ contraction with `K₂`, and the
/// belief-quantized learner within its bound.
pub fn criterion_7() -> CriterionResult {
    timed(7, "belief-quantization pipeline", || {
        let m = contracting_pomdp()?;
        let inv = filter_invariant_study(&m, 10_000, 1)?;
        let con = contraction_study(&m, 1000, 2)?;
        // The hidden chain starts from its invariant law under exploration.
        let prior = m.invariant_under(&[0.5, 0.5])?;
        let learn = belief_learning_study(Arc::new(m), &prior, &BeliefSettings::default())?;
        let inv_ok = inv.simplex_error <= 1e-12 && inv.total_probability_error <= 1e-12;
        let con_ok = con.report.k2 < 1.0 && con.violations == 0;
        let learn_ok = learn.gap <= learn.bound + MC_TOLERANCE;
        Ok((
            inv_ok && con_ok && learn_ok,
            format!(
                "filter: simplex err {:.1e}, total-prob err {:.1e} (<= 1e-12); contraction: K2 {:.3}, worst ratio {:.3}, \
                 violations {}/{}; lattice 1/{} ({} points): gap {:.4} ± {:.4} <= bound {:.4} + {MC_TOLERANCE}",
                inv.simplex_error,
                inv.total_probability_error,
                con.report.k2,
                con.worst_ratio,
                con.violations,
                con.pairs,
                learn.denominator,
                learn.codepoints,
                learn.gap,
                learn.value.stderr,
                learn.bound
            ),
        ))
    })
}

/// Satisficing dynamics: single-agent and two-agent team runs absorb at an
/// acceptable joint policy in at least 90% of 20 seeds, in under 5 min.
pub fn criterion_8() -> CriterionResult {
    let r = timed(8, "multi-agent satisficing", || {
        let single = magent_single_study(3, 2, &magent_settings(1, 0.15, 0.05), 20, 8)?;
        let team = magent_team_study(&coordination_game(), &magent_settings(2, 0.03, 0.05), 20, 8)?;
        let (fs, ft) = (single.success_fraction(), team.success_fraction());
        Ok((
            fs >= 0.9 && ft >= 0.9,
            format!(
                "single agent absorbed within eps+d: {:.0}% (>= 90%); team absorbed at certified equilibrium: {:.0}% \
                 (>= 90%), certified equilibria {:?}",
                100.0 * fs,
                100.0 * ft,
                team.equilibria
            ),
        ))
    });
    with_limit(r, 300.0)
}

fn random_weights(n: usize, support: u32, r: &mut rng::Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| if support & (1 << i) != 0 { r.random::<f64>() + 0.05 } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Metric micro-suite against brute-force definitions.
pub fn criterion_9() -> CriterionResult {
    timed(9, "metrics micro-suite", || {
        let mut r = rng::stream(9, rng::MODEL_STREAM);
        let (mut tv_err, mut w1_err, mut dob_err) = (0.0_f64, 0.0_f64, 0.0_f64);
        let mut cases = 0usize;
        for n in 1..=4usize {
            for sp in 1u32..(1 << n) {
                for sq in 1u32..(1 << n) {
                    let p = random_weights(n, sp, &mut r);
                    let q = random_weights(n, sq, &mut r);
                    let points: Vec<(f64, f64)> = (0..n).map(|_| (r.random(), r.random())).collect();
                    let d: Vec<Vec<f64>> = points
                        .iter()
                        .map(|a| points.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
                        .collect();
                    let (pd, qd) = (FiniteDistribution::new(p.clone())?, FiniteDistribution::new(q.clone())?);
                    tv_err = tv_err.max((tv_distance(&pd, &qd)? - tv_by_subsets(&p, &q)).abs());
                    let fast = w1_distance(&pd, &qd, &DistanceTable::new(d.clone())?)?;
                    w1_err = w1_err.max((fast - w1_by_vertex_enumeration(&p, &q, &d)).abs());
                    let rows: Vec<Vec<f64>> =
                        (0..n).map(|i| random_weights(n, if i == 0 { sp } else { sq }, &mut r)).collect();
                    let k = FiniteKernel::new(rows.clone())?;
                    dob_err = dob_err.max((dobrushin_coefficient(&k)? - dobrushin_by_partitions(&rows)).abs());
                    cases += 1;
                }
            }
        }
        let mut line_err = 0.0_f64;
        for _ in 0..1000 {
            let n = r.random_range(2..=8);
            let points: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
            let all = (1u32 << n) - 1;
            let p = FiniteDistribution::new(random_weights(n, all, &mut r))?;
            let q = FiniteDistribution::new(random_weights(n, all, &mut r))?;
            let flow = w1_distance(&p, &q, &DistanceTable::from_points(&points)?)?;
            line_err = line_err.max((flow - w1_scalar(&points, &p, &q)?).abs());
        }
        let tol = 1e-10;
        Ok((
            tv_err <= tol && w1_err <= tol && dob_err <= tol && line_err <= tol,
            format!(
                "{cases} support patterns: max |tv| err {tv_err:.1e}, |w1| err {w1_err:.1e}, |dobrushin| err {dob_err:.1e}; \
                 1000 line instances: flow vs CDF err {line_err:.1e} (all <= 1e-10)"
            ),
        ))
    })
}

/// Runs one criterion by number.
pub fn run_criterion(id: u8) -> Option<CriterionResult> {
    Some(match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        _ => return None,
    })
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=9).filter_map(run_criterion).collect()
}
