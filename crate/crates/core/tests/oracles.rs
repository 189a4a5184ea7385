//! Library results against independently computed answers.

use std::sync::Arc;

use ergoq::acceptance::REFERENCE_STATIONARY;
use ergoq::config::RunConfig;
use ergoq::envs::{
    machine_induced_kernel, machine_stationary, Environment, FiniteMdp, FiniteMdpEnv, MachineReplacementEnv,
};
use ergoq::experiments::{machine_q_star, machine_window_q_star, MACHINE_BETA};
use ergoq::induced::{estimate_induced_model, value_iteration};
use ergoq::metrics::FiniteDistribution;
use ergoq::perception::{Identity, WindowBuffer};
use ergoq::qcore::{run_q_learning, ExplorationPolicy, QTable, RunOptions};
use ergoq::rng;
use ergoq::runner::{self, OracleSource};

/// Optimal Q by enumerating deterministic policies and solving each
/// policy's linear system with Gaussian elimination.
fn q_by_policy_enumeration(costs: &[Vec<f64>], kernel: &[Vec<Vec<f64>>], beta: f64) -> Vec<Vec<f64>> {
    let (ns, na) = (costs.len(), costs[0].len());
    let mut best_v = vec![f64::INFINITY; ns];
    for code in 0..na.pow(ns as u32) {
        let policy: Vec<usize> = (0..ns).map(|s| code / na.pow(s as u32) % na).collect();
        // (I − βP_π) v = c_π
        let mut a: Vec<Vec<f64>> = (0..ns)
            .map(|s| {
                let mut row: Vec<f64> = (0..ns).map(|t| -beta * kernel[policy[s]][s][t]).collect();
                row[s] += 1.0;
                row.push(costs[s][policy[s]]);
                row
            })
            .collect();
        for col in 0..ns {
            let pivot = (col..ns).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, pivot);
            for r in 0..ns {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..=ns {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
        for s in 0..ns {
            best_v[s] = best_v[s].min(a[s][ns] / a[s][s]);
        }
    }
    (0..ns)
        .map(|s| {
            (0..na)
                .map(|u| costs[s][u] + beta * (0..ns).map(|t| kernel[u][s][t] * best_v[t]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn kernel_tables(k: &ergoq::metrics::ControlledKernel) -> Vec<Vec<Vec<f64>>> {
    (0..k.n_actions()).map(|u| k.action(u).rows().to_vec()).collect()
}

fn max_gap(q: &QTable, reference: &[Vec<f64>]) -> f64 {
    reference
        .iter()
        .enumerate()
        .flat_map(|(s, row)| row.iter().enumerate().map(move |(u, v)| (s, u, *v)))
        .map(|(s, u, v)| (q.value(s, u) - v).abs())
        .fold(0.0, f64::max)
}

#[test]
fn stationary_law_matches_reference_values() {
    let pi = machine_stationary();
    for (a, b) in pi.weights().iter().zip(REFERENCE_STATIONARY) {
        assert!((a - b).abs() <= 1e-3, "{a} vs {b}");
    }
}

#[test]
fn stationary_law_matches_simulated_frequencies() {
    // Visit frequencies of the simulated joint chain.
    let mut env = MachineReplacementEnv::standard();
    env.reset(11);
    let mut act = rng::stream(11, rng::EXPLORE_STREAM);
    let mut counts = [0u64; 4];
    let steps = 400_000;
    for _ in 0..steps {
        env.step(rand::Rng::random_range(&mut act, 0..2)).unwrap();
        let (x, w) = env.hidden();
        counts[2 * x + w] += 1;
    }
    for (c, p) in counts.iter().zip(machine_stationary().weights()) {
        assert!((*c as f64 / steps as f64 - p).abs() < 5e-3);
    }
}

#[test]
fn machine_fixed_point_matches_policy_enumeration() {
    let kernel = machine_induced_kernel(&machine_stationary()).unwrap();
    let p = ergoq::envs::MachineParams::default();
    let costs: Vec<Vec<f64>> = (0..2).map(|x| (0..2).map(|u| ergoq::envs::machine_cost(&p, x, u)).collect()).collect();
    let reference = q_by_policy_enumeration(&costs, &kernel_tables(&kernel), MACHINE_BETA);
    assert!(max_gap(&machine_q_star().unwrap(), &reference) < 1e-10);
}

#[test]
fn random_mdp_optimum_matches_policy_enumeration() {
    for seed in 0..5 {
        let mdp = FiniteMdp::random(4, 2, &mut rng::stream(seed, rng::MODEL_STREAM)).unwrap();
        let reference = q_by_policy_enumeration(mdp.costs(), &kernel_tables(mdp.kernel()), 0.8);
        assert!(max_gap(&mdp.optimal_q(0.8, 1e-13).unwrap(), &reference) < 1e-9);
    }
}

#[test]
fn trace_estimate_approaches_the_induced_model() {
    let mut env = MachineReplacementEnv::standard();
    let run = run_q_learning(
        &mut env,
        &mut Identity::new(2),
        &ExplorationPolicy::uniform(2, 2).unwrap(),
        &RunOptions::new(300_000, MACHINE_BETA, 4),
    )
    .unwrap();
    let estimated = estimate_induced_model(&run.trace, 2, 2).unwrap();
    let exact = machine_induced_kernel(&machine_stationary()).unwrap();
    for s in 0..2 {
        for u in 0..2 {
            for (a, b) in estimated.p_star(s, u).unwrap().iter().zip(exact.row(s, u)) {
                assert!((a - b).abs() < 1e-2);
            }
        }
    }
    let q = value_iteration(&estimated, MACHINE_BETA, 1e-12).unwrap();
    assert!(q.sup_distance(&machine_q_star().unwrap()).unwrap() < 0.05);
}

#[test]
fn window_fixed_point_matches_a_simulated_window_model() {
    let mut env = MachineReplacementEnv::standard();
    let mut window = WindowBuffer::observations_only(1, 2, 2).unwrap();
    let run = run_q_learning(
        &mut env,
        &mut window,
        &ExplorationPolicy::uniform(4, 2).unwrap(),
        &RunOptions::new(400_000, MACHINE_BETA, 9),
    )
    .unwrap();
    let estimated = value_iteration(&estimate_induced_model(&run.trace, 4, 2).unwrap(), MACHINE_BETA, 1e-12).unwrap();
    assert!(estimated.sup_distance(&machine_window_q_star().unwrap()).unwrap() < 0.05);
}

#[test]
fn learned_table_tracks_the_fixed_point_on_a_random_mdp() {
    let mdp = Arc::new(FiniteMdp::random(3, 2, &mut rng::stream(21, rng::MODEL_STREAM)).unwrap());
    let mut env = FiniteMdpEnv::new(Arc::clone(&mdp), FiniteDistribution::uniform(3).unwrap()).unwrap();
    let mut opts = RunOptions::new(500_000, 0.5, 21);
    opts.keep_trace = false;
    let run = run_q_learning(&mut env, &mut Identity::new(3), &ExplorationPolicy::uniform(3, 2).unwrap(), &opts).unwrap();
    assert!(run.table.sup_distance(&mdp.optimal_q(0.5, 1e-13).unwrap()).unwrap() < 0.05);
}

#[test]
fn runner_uses_the_exact_oracle_for_finite_models() {
    let text = r#"
regime = "mdp"
seed = 3
beta = 0.5
steps = 300000
keep_trace = false

[environment]
kind = "finite"
costs = [[0.0, 1.0], [1.0, 0.2], [0.5, 0.5]]
transition = [
  [[0.9, 0.1, 0.0], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]],
  [[0.2, 0.2, 0.6], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]],
]
"#;
    let cfg = RunConfig::from_toml(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = runner::execute(&cfg, dir.path()).unwrap().remove(0);
    let l = s.learning.unwrap();
    assert_eq!(l.oracle, OracleSource::Exact);
    assert!(l.final_sup_error.unwrap() < 0.05);
    assert!(!dir.path().join(runner::TRACE_FILE).exists());
}
