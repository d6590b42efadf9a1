//! Grid data model: buses, branches, topology and the bus admittance matrix.
//!
//! All quantities are per-unit on the case's MVA base. Bus injections follow
//! the net convention: generation positive, load positive as consumption, so
//! the scheduled injection of a bus is `p_gen - p_load`.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// Dense 0-based index.
    pub id: usize,
    /// Bus number in the source case file.
    pub source_id: u64,
    pub kind: BusKind,
    pub p_gen: f64,
    pub p_load: f64,
    pub q_load: f64,
    /// Voltage magnitude setpoint for Slack and PV buses.
    pub vm_setpoint: f64,
    /// Reference angle in radians, meaningful for the slack bus only.
    pub va_slack: f64,
    pub gs: f64,
    pub bs: f64,
    /// Initial guess from the case file, used when flat start is disabled.
    pub vm_init: f64,
    pub va_init: f64,
}

impl Bus {
    pub fn p_scheduled(&self) -> f64 {
        self.p_gen - self.p_load
    }

    pub fn q_scheduled(&self) -> f64 {
        -self.q_load
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, split half to each end.
    pub b_charging: f64,
    pub tap_ratio: f64,
    /// Phase shift in radians.
    pub phase_shift: f64,
}

/// The four π-model admittances of a branch: `[y_ff, y_ft, y_tf, y_tt]`.
pub type BranchStamp = [Complex64; 4];

impl Branch {
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }

    pub fn stamp(&self) -> BranchStamp {
        let y = self.series_admittance();
        let shunt = Complex64::new(0.0, self.b_charging / 2.0);
        let tap = Complex64::from_polar(self.tap_ratio, self.phase_shift);
        let y_ff = (y + shunt) / (self.tap_ratio * self.tap_ratio);
        let y_ft = -y / tap.conj();
        let y_tf = -y / tap;
        let y_tt = y + shunt;
        [y_ff, y_ft, y_tf, y_tt]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Total active generation `G` shared out by the dispatch sampler.
    pub total_generation: f64,
}

impl GridCase {
    /// Builds a case after checking its structural invariants.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        total_generation: f64,
    ) -> Result<Self> {
        let case = GridCase {
            name: name.into(),
            base_mva,
            buses,
            branches,
            total_generation,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        let slack_count = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slack_count != 1 {
            return Err(Error::InvalidCase(format!(
                "expected exactly one slack bus, found {slack_count}"
            )));
        }
        for (i, bus) in self.buses.iter().enumerate() {
            if bus.id != i {
                return Err(Error::InvalidCase(format!(
                    "bus at position {i} has id {}",
                    bus.id
                )));
            }
            if bus.kind != BusKind::Pq && !(bus.vm_setpoint > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "bus {} has non-positive voltage setpoint",
                    bus.source_id
                )));
            }
            if bus.kind == BusKind::Slack && !bus.va_slack.is_finite() {
                return Err(Error::InvalidCase("slack angle is not finite".into()));
            }
        }
        let n = self.buses.len();
        for (i, br) in self.branches.iter().enumerate() {
            if br.id != i {
                return Err(Error::InvalidCase(format!(
                    "branch at position {i} has id {}",
                    br.id
                )));
            }
            if br.from_bus >= n || br.to_bus >= n {
                return Err(Error::InvalidCase(format!(
                    "branch {i} references a missing bus"
                )));
            }
            if br.from_bus == br.to_bus {
                return Err(Error::InvalidCase(format!("branch {i} is a self-loop")));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::ZeroImpedance { branch: i });
            }
            if !(br.tap_ratio > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "branch {i} has non-positive tap ratio"
                )));
            }
        }
        if !(self.total_generation > 0.0) {
            return Err(Error::InvalidCase(
                "total generation must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn buses_of(&self, kind: BusKind) -> Vec<usize> {
        self.buses
            .iter()
            .filter(|b| b.kind == kind)
            .map(|b| b.id)
            .collect()
    }

    pub fn full_topology(&self) -> Topology {
        Topology::all_in_service(self.n_branch())
    }
}

/// Per-branch in-service flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Topology {
    pub in_service: Vec<bool>,
}

impl Topology {
    pub fn all_in_service(n_branch: usize) -> Self {
        Topology {
            in_service: vec![true; n_branch],
        }
    }

    pub fn len(&self) -> usize {
        self.in_service.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_service.is_empty()
    }

    pub fn count_in_service(&self) -> usize {
        self.in_service.iter().filter(|&&s| s).count()
    }

    pub fn is_full(&self) -> bool {
        self.in_service.iter().all(|&s| s)
    }

    pub fn check(&self, case: &GridCase) -> Result<()> {
        if self.len() != case.n_branch() {
            return Err(Error::DimensionMismatch {
                what: "topology length",
                expected: case.n_branch(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// Dense complex bus admittance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    y: Vec<Complex64>,
    /// Series admittance of every branch, in or out of service.
    pub y_series: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        AdmittanceMatrix {
            n,
            y: vec![Complex64::new(0.0, 0.0); n * n],
            y_series: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.y[i * self.n + k]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.y[i * self.n..(i + 1) * self.n]
    }

    fn add(&mut self, i: usize, k: usize, v: Complex64) {
        self.y[i * self.n + k] += v;
    }
}

/// Stamps every in-service branch's π-model and every bus shunt.
pub fn build_ybus(case: &GridCase, topo: &Topology) -> Result<AdmittanceMatrix> {
    topo.check(case)?;
    let mut ybus = AdmittanceMatrix::zeros(case.n_bus());
    let mut y_series = Vec::with_capacity(case.n_branch());
    for (br, &on) in case.branches.iter().zip(&topo.in_service) {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(Error::ZeroImpedance { branch: br.id });
        }
        y_series.push(br.series_admittance());
        if !on {
            continue;
        }
        let [y_ff, y_ft, y_tf, y_tt] = br.stamp();
        let (f, t) = (br.from_bus, br.to_bus);
        ybus.add(f, f, y_ff);
        ybus.add(f, t, y_ft);
        ybus.add(t, f, y_tf);
        ybus.add(t, t, y_tt);
    }
    for bus in &case.buses {
        ybus.add(bus.id, bus.id, Complex64::new(bus.gs, bus.bs));
    }
    ybus.y_series = y_series;
    Ok(ybus)
}

/// Number of in-service branches incident to each bus; parallel branches each count.
pub fn node_degrees(case: &GridCase, topo: &Topology) -> Result<Vec<usize>> {
    topo.check(case)?;
    let mut degrees = vec![0; case.n_bus()];
    for (br, &on) in case.branches.iter().zip(&topo.in_service) {
        if on {
            degrees[br.from_bus] += 1;
            degrees[br.to_bus] += 1;
        }
    }
    Ok(degrees)
}

/// Number of buses that cannot be reached from the slack bus.
pub fn unreachable_from_slack(case: &GridCase, topo: &Topology) -> usize {
    let n = case.n_bus();
    let mut adjacency = vec![Vec::new(); n];
    for (br, &on) in case.branches.iter().zip(&topo.in_service) {
        if on {
            adjacency[br.from_bus].push(br.to_bus);
            adjacency[br.to_bus].push(br.from_bus);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let slack = case.slack();
    seen[slack] = true;
    queue.push_back(slack);
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    n - reached
}

/// True iff every bus is reachable from the slack bus over in-service branches.
///
/// A topology whose length does not match the case is treated as
/// disconnected rather than an error.
pub fn is_slack_connected(case: &GridCase, topo: &Topology) -> bool {
    topo.len() == case.n_branch() && unreachable_from_slack(case, topo) == 0
}

/// Returns a copy of `topo` with `branch_id` taken out of service.
pub fn apply_line_cut(topo: &Topology, branch_id: usize) -> Result<Topology> {
    match topo.in_service.get(branch_id) {
        None => Err(Error::BranchOutOfRange {
            branch: branch_id,
            n_branch: topo.len(),
        }),
        Some(false) => Err(Error::BranchAlreadyCut(branch_id)),
        Some(true) => {
            let mut out = topo.clone();
            out.in_service[branch_id] = false;
            Ok(out)
        }
    }
}

/// Branches whose individual removal keeps every bus connected to the slack.
pub fn admissible_cuts(case: &GridCase, topo: &Topology) -> Vec<usize> {
    (0..topo.len())
        .filter(|&b| topo.in_service[b])
        .filter(|&b| {
            let mut cut = topo.clone();
            cut.in_service[b] = false;
            is_slack_connected(case, &cut)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

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

    /// Slack bus 0 feeding a PQ load at bus 1 over a lossless x = 0.1 line.
    pub fn two_bus(p_load: f64, q_load: f64) -> GridCase {
        let slack = bus(0, BusKind::Slack);
        let mut load = bus(1, BusKind::Pq);
        load.p_load = p_load;
        load.q_load = q_load;
        GridCase::new(
            "two-bus",
            100.0,
            vec![slack, load],
            vec![line(0, 0, 1, 0.0, 0.1)],
            1.0,
        )
        .unwrap()
    }

    /// Path 0 - 1 - 2 with the slack at 0.
    pub fn path3() -> GridCase {
        let buses = vec![
            bus(0, BusKind::Slack),
            bus(1, BusKind::Pq),
            bus(2, BusKind::Pq),
        ];
        let branches = vec![line(0, 0, 1, 0.01, 0.1), line(1, 1, 2, 0.02, 0.2)];
        GridCase::new("path3", 100.0, buses, branches, 1.0).unwrap()
    }
}
