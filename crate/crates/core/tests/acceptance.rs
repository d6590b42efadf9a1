//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use nminus1::analysis::{degree_cluster_analysis, evaluate_mse, gap_ratio, NodeRole};
use nminus1::dataset::{write_dataset, ScenarioRecord};
use nminus1::grid::{build_ybus, BusKind, GridCase, Topology};
use nminus1::par::Execution;
use nminus1::powerflow::*;
use nminus1::scenario::{generate_dataset, SamplingConfig};
use nminus1::surrogate::model::mse_loss;
use nminus1::surrogate::{
    checkpoint, train, Architecture, ModelParams, Surrogate, TrainConfig, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];
const MIX_PROBS: [f64; 3] = [0.0, 0.01, 0.1];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn records(case: &GridCase, n: usize, p: f64, seed: u64) -> Vec<ScenarioRecord> {
    let cfg = SamplingConfig {
        n_instances: n,
        cut_probability: p,
        seed,
        ..Default::default()
    };
    generate_dataset(case, &cfg, Execution::Parallel)
        .unwrap()
        .records
}

/// IEEE 14 evaluation sets and the Small models trained per (seed, p).
struct Experiment {
    case: GridCase,
    eval_n: Vec<ScenarioRecord>,
    eval_n1: Vec<ScenarioRecord>,
    models: BTreeMap<(u64, usize), Surrogate>,
    /// Wall time of the seed-0, p = 0 train and evaluate cycle.
    first_cycle: Duration,
}

impl Experiment {
    fn run() -> Self {
        let case = load_case("ieee14");
        let eval_n = records(&case, 500, 0.0, 100);
        let eval_n1 = records(&case, 500, 1.0, 101);
        let mut models = BTreeMap::new();
        let mut first_cycle = Duration::ZERO;
        for seed in SEEDS {
            for (k, &p) in MIX_PROBS.iter().enumerate() {
                let start = Instant::now();
                let data = records(&case, 2000, p, 10 + 3 * seed);
                let cfg = TrainConfig {
                    seed,
                    ..Default::default()
                };
                let model = train(&data, Variant::Small, &cfg).unwrap().model;
                if seed == 0 && k == 0 {
                    evaluate_mse(&model, &eval_n, Execution::Parallel).unwrap();
                    evaluate_mse(&model, &eval_n1, Execution::Parallel).unwrap();
                    first_cycle = start.elapsed();
                }
                models.insert((seed, k), model);
            }
        }
        Experiment {
            case,
            eval_n,
            eval_n1,
            models,
            first_cycle,
        }
    }

    fn mse(&self, seed: u64, k: usize, data: &[ScenarioRecord]) -> f64 {
        evaluate_mse(&self.models[&(seed, k)], data, Execution::Parallel).unwrap()
    }
}

fn oracle_fidelity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["ieee14", "ieee118"] {
        let case = load_case(name);
        let reference = load_reference(name);
        let topo = case.full_topology();
        let opts = SolverOptions::default();
        let sol = newton_raphson_solve(&case, &topo, &opts).unwrap();
        let dv = sol
            .state
            .vm
            .iter()
            .zip(&reference.vm)
            .chain(sol.state.va.iter().zip(&reference.va))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let mut times: Vec<Duration> = (0..10)
            .map(|_| {
                let t = Instant::now();
                newton_raphson_solve(&case, &topo, &opts).unwrap();
                t.elapsed()
            })
            .collect();
        times.sort();
        let median = times[times.len() / 2];
        let ok = sol.iterations <= 10
            && sol.max_mismatch < 1e-8
            && dv < 1e-6
            && (name != "ieee118" || median < Duration::from_millis(50));
        pass &= ok;
        parts.push(format!(
            "{name} {} it, mismatch {:.1e}, |dV| {:.1e}, {:.2} ms",
            sol.iterations,
            sol.max_mismatch,
            dv,
            median.as_secs_f64() * 1e3
        ));
    }
    outcome(pass, parts.join("; "))
}

fn lossless(case: &GridCase) -> GridCase {
    let mut c = case.clone();
    for b in &mut c.buses {
        b.gs = 0.0;
    }
    for br in &mut c.branches {
        br.r = 0.0;
    }
    c
}

fn physics_identities() -> Outcome {
    let mut worst_s = 0.0f64;
    let mut exact = true;
    let mut worst_balance = 0.0f64;
    for name in ["ieee14", "ieee118"] {
        let case = load_case(name);
        for r in records(&case, 100, 0.5, 31) {
            let ybus = build_ybus(&case, &r.topology).unwrap();
            let (p, q) = injections_trig_with(&ybus, &r.bus_vm, &r.bus_va);
            for i in 0..case.n_bus() {
                worst_s = worst_s
                    .max((p[i] - r.bus_p[i]).abs())
                    .max((q[i] - r.bus_q[i]).abs());
            }
            let bus = BusQuantities {
                p: r.bus_p.clone(),
                q: r.bus_q.clone(),
                vm: r.bus_vm.clone(),
                va: r.bus_va.clone(),
            };
            let c = solution_to_currents(&case, &r.topology, &bus).unwrap();
            exact &= c.inj == r.inj_current && c.br_or == r.br_i_or && c.br_ex == r.br_i_ex;
        }
        for r in records(&lossless(&case), 100, 0.5, 32) {
            worst_balance = worst_balance.max(r.bus_p.iter().sum::<f64>().abs());
        }
    }
    outcome(
        worst_s < 1e-10 && exact && worst_balance < 1e-9,
        format!("max |S - V conj(I)| {worst_s:.1e}, currents exact {exact}, lossless |sum P| {worst_balance:.1e}"),
    )
}

fn backprop_error() -> f64 {
    let arch = Architecture {
        n_in: 6,
        n_out: 4,
        width: 10,
        blocks: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = ModelParams::init(arch, &mut rng);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grads) = p.backward(&x, &y).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for t in 0..p.tensors().len() {
        for i in 0..p.tensors()[t].len() {
            let orig = p.tensors()[t][i];
            p.tensors_mut()[t][i] = orig + h;
            let up = mse_loss(&p.forward(&x).unwrap(), &y).unwrap();
            p.tensors_mut()[t][i] = orig - h;
            let down = mse_loss(&p.forward(&x).unwrap(), &y).unwrap();
            p.tensors_mut()[t][i] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grads.tensors()[t][i];
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
        }
    }
    worst
}

fn jacobian_error() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for name in ["ieee14", "ieee118"] {
        let case = load_case(name);
        let ybus = build_ybus(&case, &case.full_topology()).unwrap();
        let part = Partition::new(&case);
        let unknowns: Vec<(bool, usize)> = part
            .pvpq
            .iter()
            .map(|&i| (true, i))
            .chain(part.pq.iter().map(|&i| (false, i)))
            .collect();
        for _ in 0..5 {
            let mut state = PfState::flat(&case);
            for b in &case.buses {
                if b.kind != BusKind::Slack {
                    state.va[b.id] = rng.random_range(-0.3..0.3);
                }
                if b.kind == BusKind::Pq {
                    state.vm[b.id] = rng.random_range(0.9..1.1);
                }
            }
            let jac = build_jacobian(&ybus, &state, &part).unwrap();
            let h = 1e-6;
            for (c, &(is_angle, i)) in unknowns.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut s = state.clone();
                    if is_angle {
                        s.va[i] += delta;
                    } else {
                        s.vm[i] += delta;
                    }
                    compute_mismatch(&case, &ybus, &s).unwrap()
                };
                let (fp, fm) = (eval(h), eval(-h));
                for r in 0..fp.len() {
                    let fd = (fp[r] - fm[r]) / (2.0 * h);
                    let a = jac.get(r, c);
                    worst = worst.max((a - fd).abs() / a.abs().max(1.0));
                }
            }
        }
    }
    worst
}

fn gradient_suite() -> Outcome {
    let bp = backprop_error();
    let jac = jacobian_error();
    outcome(
        bp < 1e-4 && jac < 1e-5,
        format!("backprop rel err {bp:.1e}, jacobian rel err {jac:.1e}"),
    )
}

fn robustness_gap(exp: &Experiment) -> Outcome {
    let n = exp.mse(0, 0, &exp.eval_n);
    let n1 = exp.mse(0, 0, &exp.eval_n1);
    let ratio = gap_ratio(n, n1);
    let secs = exp.first_cycle.as_secs_f64();
    outcome(
        ratio >= 5.0 && secs < 600.0,
        format!("N mse {n:.4}, N-1 mse {n1:.4}, ratio {ratio:.2} (need >= 5), {secs:.1} s"),
    )
}

fn mixed_training(exp: &Experiment) -> Outcome {
    let mut votes = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let m: Vec<f64> = (0..MIX_PROBS.len())
            .map(|k| exp.mse(seed, k, &exp.eval_n1))
            .collect();
        let ordered = m[2] < m[1] && m[1] < m[0];
        votes += ordered as usize;
        parts.push(format!(
            "seed {seed}: {:.4} / {:.4} / {:.4}",
            m[0], m[1], m[2]
        ));
    }
    outcome(
        votes * 2 > SEEDS.len(),
        format!(
            "N-1 mse at p = 0 / 0.01 / 0.1, {}; ordered in {votes}/3",
            parts.join(", ")
        ),
    )
}

/// Degree of `node` counted straight from the in-service branch list.
fn degree_of(case: &GridCase, topo: &Topology, node: usize) -> usize {
    case.branches
        .iter()
        .zip(&topo.in_service)
        .filter(|(br, on)| **on && (br.from_bus == node || br.to_bus == node))
        .count()
}

fn degree_analysis(exp: &Experiment) -> Outcome {
    let mut structure = true;
    let mut trend = 0;
    let mut summary = String::new();
    for seed in SEEDS {
        let model = &exp.models[&(seed, 0)];
        let table =
            degree_cluster_analysis(model, &exp.case, &exp.eval_n1, Execution::Parallel).unwrap();
        structure &= table.degrees_for(NodeRole::Max) == [5, 4]
            && table.degrees_for(NodeRole::Median) == [3, 2];
        for (role, node) in [
            (NodeRole::Max, table.nodes.max_node),
            (NodeRole::Median, table.nodes.median_node),
        ] {
            let mut expected: BTreeMap<usize, usize> = BTreeMap::new();
            for r in &exp.eval_n1 {
                *expected
                    .entry(degree_of(&exp.case, &r.topology, node))
                    .or_default() += 1;
            }
            let got: BTreeMap<usize, usize> =
                table.rows_for(role).map(|r| (r.degree, r.count)).collect();
            structure &= got == expected && got.values().sum::<usize>() == exp.eval_n1.len();
        }
        let mse = |role, d| table.rows_for(role).find(|r| r.degree == d).map(|r| r.mse);
        let hurts = mse(NodeRole::Max, 4) > mse(NodeRole::Max, 5)
            && mse(NodeRole::Median, 2) > mse(NodeRole::Median, 3);
        trend += hurts as usize;
        if seed == 0 {
            summary = table
                .rows
                .iter()
                .map(|r| format!("{}:{}x{}", r.role.as_str(), r.degree, r.count))
                .collect::<Vec<_>>()
                .join(" ");
        }
    }
    outcome(
        structure,
        format!("groups {summary}; high-degree cut hurts more in {trend}/3 seeds (informational)"),
    )
}

fn determinism() -> Outcome {
    let case = load_case("ieee14");
    let dir = tempfile::tempdir().unwrap();
    let cfg = SamplingConfig {
        n_instances: 300,
        cut_probability: 0.3,
        seed: 5,
        ..Default::default()
    };
    let mut files = Vec::new();
    for jobs in [1, 1, 0, 3] {
        let data = generate_dataset(&case, &cfg, Execution::from_jobs(jobs)).unwrap();
        let path = dir.path().join(format!("{}.jsonl", files.len()));
        write_dataset(&data.records, &path).unwrap();
        files.push(std::fs::read(path).unwrap());
    }
    let generate_ok = files.windows(2).all(|w| w[0] == w[1]);

    let data = generate_dataset(&case, &cfg, Execution::Parallel)
        .unwrap()
        .records;
    let tcfg = TrainConfig {
        epochs: 5,
        seed: 9,
        ..Default::default()
    };
    let a = train(&data, Variant::Small, &tcfg).unwrap();
    let b = train(&data, Variant::Small, &tcfg).unwrap();
    let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let train_ok = checkpoint::encode(&a.model) == checkpoint::encode(&b.model)
        && bits(&a.loss_trace) == bits(&b.loss_trace);

    let scores: Vec<u64> = [
        Execution::Sequential,
        Execution::Sequential,
        Execution::Parallel,
        Execution::Threads(3),
    ]
    .into_iter()
    .map(|exec| evaluate_mse(&a.model, &data, exec).unwrap().to_bits())
    .collect();
    let eval_ok = scores.windows(2).all(|w| w[0] == w[1]);
    outcome(
        generate_ok && train_ok && eval_ok,
        format!("generate across jobs 1/1/0/3 {generate_ok}, train {train_ok}, evaluate across executions {eval_ok}"),
    )
}

fn dataset_scale() -> Outcome {
    let case = load_case("ieee14");
    let cfg = SamplingConfig {
        n_instances: 10_000,
        cut_probability: 0.1,
        seed: 8,
        ..Default::default()
    };
    let start = Instant::now();
    let data = generate_dataset(&case, &cfg, Execution::Parallel).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rate = data.report.discard_rate();
    outcome(
        data.records.len() == 10_000 && secs < 120.0 && rate < 0.05,
        format!(
            "{} records in {secs:.2} s, discard rate {:.2}%",
            data.records.len(),
            rate * 100.0
        ),
    )
}

fn main() {
    let criteria = [
        (1, "oracle fidelity"),
        (2, "physics identities"),
        (3, "gradient suite"),
        (4, "robustness gap"),
        (5, "mixed-training remedy"),
        (6, "degree analysis"),
        (7, "determinism"),
        (8, "dataset scale"),
    ];
    // criteria 4 to 6 share one set of trained models
    let mut experiment: Option<Experiment> = None;
    let mut failures = 0;
    for (id, title) in criteria {
        let result = catch_unwind(AssertUnwindSafe(|| {
            if (4..=6).contains(&id) && experiment.is_none() {
                experiment = Some(Experiment::run());
            }
            let exp = || experiment.as_ref().unwrap();
            match id {
                1 => oracle_fidelity(),
                2 => physics_identities(),
                3 => gradient_suite(),
                4 => robustness_gap(exp()),
                5 => mixed_training(exp()),
                6 => degree_analysis(exp()),
                7 => determinism(),
                _ => dataset_scale(),
            }
        }))
        .unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failures += !result.pass as usize;
        println!(
            "{} criterion {id} {title}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failures > 0 {
        println!(
            "{failures} of {} acceptance criteria failed",
            criteria.len()
        );
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", criteria.len());
}
