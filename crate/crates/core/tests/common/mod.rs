#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};
use std::path::PathBuf;

use nminus1::grid::{Branch, Bus, BusKind, GridCase, Topology};
use nminus1::matpower::read_matpower_case;
use serde::Deserialize;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn load_case(name: &str) -> GridCase {
    read_matpower_case(data_dir().join(format!("{name}.m"))).expect("bundled case parses")
}

/// Frozen solution of the bundled case from an independent MATPOWER-family solver.
#[derive(Debug, Deserialize)]
pub struct Reference {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub i_or: Vec<f64>,
    pub i_ex: Vec<f64>,
    /// Nonzero Y-bus entries as (row, col, re, im).
    pub ybus: Vec<(usize, usize, f64, f64)>,
}

pub fn load_reference(name: &str) -> Reference {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(format!("{name}_reference.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Power injections computed straight from the trigonometric power-flow
/// equations, independent of the solver's complex matrix-vector route.
pub fn injections_trig(case: &GridCase, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ybus = nminus1::grid::build_ybus(case, &case.full_topology()).unwrap();
    injections_trig_with(&ybus, vm, va)
}

pub fn injections_trig_with(
    ybus: &nminus1::grid::AdmittanceMatrix,
    vm: &[f64],
    va: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = vm.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            let y = ybus.get(i, k);
            let (g, b) = (y.re, y.im);
            let t = va[i] - va[k];
            p[i] += vm[i] * vm[k] * (g * t.cos() + b * t.sin());
            q[i] += vm[i] * vm[k] * (g * t.sin() - b * t.cos());
        }
    }
    (p, q)
}

/// Breadth-first reachability from the slack over in-service branches.
pub fn bfs_connected(case: &GridCase, topo: &Topology) -> bool {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([case.slack()]);
    seen.insert(case.slack());
    while let Some(u) = queue.pop_front() {
        for (br, on) in case.branches.iter().zip(&topo.in_service) {
            if !*on {
                continue;
            }
            let other = if br.from_bus == u {
                br.to_bus
            } else if br.to_bus == u {
                br.from_bus
            } else {
                continue;
            };
            if seen.insert(other) {
                queue.push_back(other);
            }
        }
    }
    seen.len() == case.n_bus()
}

pub fn bus(id: usize, kind: BusKind) -> Bus {
    Bus {
        id,
        source_id: id as u64 + 1,
        kind,
        p_gen: 0.0,
        p_load: 0.0,
        q_load: 0.0,
        vm_setpoint: 1.0,
        va_slack: 0.0,
        gs: 0.0,
        bs: 0.0,
        vm_init: 1.0,
        va_init: 0.0,
    }
}

pub fn line(id: usize, from_bus: usize, to_bus: usize, r: f64, x: f64) -> Branch {
    Branch {
        id,
        from_bus,
        to_bus,
        r,
        x,
        b_charging: 0.0,
        tap_ratio: 1.0,
        phase_shift: 0.0,
    }
}

/// Max-norm of the power mismatch of a stored solution, recomputed with the
/// trigonometric equations on the record's own topology.
pub fn record_mismatch(case: &GridCase, r: &nminus1::dataset::ScenarioRecord) -> f64 {
    let inputs = nminus1::scenario::ScenarioInputs {
        pg: r.input_pg.clone(),
        vm: r.input_vm.clone(),
        pl: r.input_pl.clone(),
        ql: r.input_ql.clone(),
    };
    let scenario = inputs.apply(case).unwrap();
    let ybus = nminus1::grid::build_ybus(&scenario, &r.topology).unwrap();
    let (p, q) = injections_trig_with(&ybus, &r.bus_vm, &r.bus_va);
    let mut worst: f64 = 0.0;
    for (i, b) in scenario.buses.iter().enumerate() {
        if b.kind != BusKind::Slack {
            worst = worst.max((b.p_scheduled() - p[i]).abs());
        }
        if b.kind == BusKind::Pq {
            worst = worst.max((b.q_scheduled() - q[i]).abs());
        }
    }
    worst
}
