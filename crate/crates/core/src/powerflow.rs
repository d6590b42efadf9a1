//! Newton-Raphson AC power flow and current recovery.
//!
//! The unknowns are the angles of every non-slack bus followed by the
//! magnitudes of every PQ bus, both in ascending bus order. The mismatch
//! vector uses the same layout: ΔP over non-slack buses, then ΔQ over PQ
//! buses. PV buses hold their voltage magnitude with unconstrained Q.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    build_ybus, unreachable_from_slack, AdmittanceMatrix, BusKind, GridCase, Topology,
};
use crate::lu::{self, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PfState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl PfState {
    pub fn flat(case: &GridCase) -> Self {
        let vm = case
            .buses
            .iter()
            .map(|b| {
                if b.kind == BusKind::Pq {
                    1.0
                } else {
                    b.vm_setpoint
                }
            })
            .collect();
        let va = case
            .buses
            .iter()
            .map(|b| {
                if b.kind == BusKind::Slack {
                    b.va_slack
                } else {
                    0.0
                }
            })
            .collect();
        PfState { vm, va }
    }

    /// Initial point from the case file, with setpoints and the slack angle enforced.
    pub fn from_case(case: &GridCase) -> Self {
        let mut state = PfState {
            vm: case.buses.iter().map(|b| b.vm_init).collect(),
            va: case.buses.iter().map(|b| b.va_init).collect(),
        };
        for b in &case.buses {
            match b.kind {
                BusKind::Slack => {
                    state.vm[b.id] = b.vm_setpoint;
                    state.va[b.id] = b.va_slack;
                }
                BusKind::Pv => state.vm[b.id] = b.vm_setpoint,
                BusKind::Pq => {}
            }
        }
        state
    }

    pub fn len(&self) -> usize {
        self.vm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vm.is_empty()
    }

    pub fn phasors(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub flat_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iterations: 20,
            flat_start: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations < 1 {
            return Err(Error::InvalidConfig(
                "solver tolerance must be > 0 and max_iterations >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Index sets of the unknowns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub slack: usize,
    /// Non-slack buses in ascending order (angle unknowns, ΔP rows).
    pub pvpq: Vec<usize>,
    /// PQ buses in ascending order (magnitude unknowns, ΔQ rows).
    pub pq: Vec<usize>,
}

impl Partition {
    pub fn new(case: &GridCase) -> Self {
        Partition {
            slack: case.slack(),
            pvpq: case
                .buses
                .iter()
                .filter(|b| b.kind != BusKind::Slack)
                .map(|b| b.id)
                .collect(),
            pq: case.buses_of(BusKind::Pq),
        }
    }

    pub fn n_unknowns(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }

    fn read(&self, state: &PfState) -> Vec<f64> {
        self.pvpq
            .iter()
            .map(|&i| state.va[i])
            .chain(self.pq.iter().map(|&i| state.vm[i]))
            .collect()
    }

    fn write(&self, state: &mut PfState, x: &[f64]) {
        let (angles, mags) = x.split_at(self.pvpq.len());
        for (&i, &v) in self.pvpq.iter().zip(angles) {
            state.va[i] = v;
        }
        for (&i, &v) in self.pq.iter().zip(mags) {
            state.vm[i] = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Currents {
    /// Per-bus injection current magnitude |I_i|.
    pub inj: Vec<f64>,
    /// Per-branch current magnitude at the origin end.
    pub br_or: Vec<f64>,
    /// Per-branch current magnitude at the extremity end.
    pub br_ex: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfSolution {
    pub state: PfState,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub currents: Currents,
    pub iterations: usize,
    pub max_mismatch: f64,
}

fn check_dims(ybus: &AdmittanceMatrix, state: &PfState) -> Result<()> {
    if ybus.dim() != state.len() || state.va.len() != state.vm.len() {
        return Err(Error::DimensionMismatch {
            what: "state length",
            expected: ybus.dim(),
            found: state.len(),
        });
    }
    Ok(())
}

fn matvec(ybus: &AdmittanceMatrix, v: &[Complex64]) -> Vec<Complex64> {
    (0..ybus.dim())
        .map(|i| ybus.row(i).iter().zip(v).map(|(y, v)| y * v).sum())
        .collect()
}

/// Net complex injections `S = V ∘ conj(Y V)`, returned as `(p, q)`.
pub fn compute_power_injections(
    ybus: &AdmittanceMatrix,
    state: &PfState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(ybus, state)?;
    let v = state.phasors();
    let i = matvec(ybus, &v);
    Ok(v.iter()
        .zip(&i)
        .map(|(v, i)| {
            let s = v * i.conj();
            (s.re, s.im)
        })
        .unzip())
}

/// Scheduled minus calculated injections in the solver's mismatch layout.
pub fn compute_mismatch(
    case: &GridCase,
    ybus: &AdmittanceMatrix,
    state: &PfState,
) -> Result<Vec<f64>> {
    let (p, q) = compute_power_injections(ybus, state)?;
    let part = Partition::new(case);
    Ok(mismatch_from(case, &part, &p, &q))
}

fn mismatch_from(case: &GridCase, part: &Partition, p: &[f64], q: &[f64]) -> Vec<f64> {
    part.pvpq
        .iter()
        .map(|&i| case.buses[i].p_scheduled() - p[i])
        .chain(part.pq.iter().map(|&i| case.buses[i].q_scheduled() - q[i]))
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Jacobian of the mismatch vector with respect to the unknowns
/// (`∂F/∂x`, so the Newton update is `x ← x − J⁻¹ F`).
pub fn build_jacobian(
    ybus: &AdmittanceMatrix,
    state: &PfState,
    part: &Partition,
) -> Result<DenseMatrix> {
    check_dims(ybus, state)?;
    let n = ybus.dim();
    let v = state.phasors();
    let ibus = matvec(ybus, &v);
    let unit: Vec<Complex64> = v.iter().zip(&state.vm).map(|(v, m)| v / m).collect();

    let npvpq = part.pvpq.len();
    let mut col_angle = vec![None; n];
    let mut col_mag = vec![None; n];
    for (c, &k) in part.pvpq.iter().enumerate() {
        col_angle[k] = Some(c);
    }
    for (c, &k) in part.pq.iter().enumerate() {
        col_mag[k] = Some(npvpq + c);
    }

    let mut jac = DenseMatrix::zeros(part.n_unknowns());
    let j = Complex64::i();
    for i in 0..n {
        let (row_p, row_q) = (col_angle[i], col_mag[i]);
        if row_p.is_none() {
            continue;
        }
        let yrow = ybus.row(i);
        for k in 0..n {
            if col_angle[k].is_none() && col_mag[k].is_none() {
                continue;
            }
            // dS_i/dθ_k and dS_i/d|V_k| of the calculated injection
            let mut ds_dva = -j * v[i] * (yrow[k] * v[k]).conj();
            let mut ds_dvm = v[i] * (yrow[k] * unit[k]).conj();
            if i == k {
                ds_dva += j * v[i] * ibus[i].conj();
                ds_dvm += ibus[i].conj() * unit[i];
            }
            for (row, part_of) in [(row_p, 0usize), (row_q, 1usize)] {
                let Some(r) = row else { continue };
                let pick = |s: Complex64| if part_of == 0 { s.re } else { s.im };
                if let Some(c) = col_angle[k] {
                    jac.set(r, c, -pick(ds_dva));
                }
                if let Some(c) = col_mag[k] {
                    jac.set(r, c, -pick(ds_dvm));
                }
            }
        }
    }
    Ok(jac)
}

/// Per-branch current magnitudes at both ends from the π-model.
pub fn branch_currents(
    case: &GridCase,
    topo: &Topology,
    state: &PfState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    topo.check(case)?;
    if state.len() != case.n_bus() {
        return Err(Error::DimensionMismatch {
            what: "state length",
            expected: case.n_bus(),
            found: state.len(),
        });
    }
    let v = state.phasors();
    Ok(case
        .branches
        .iter()
        .zip(&topo.in_service)
        .map(|(br, &on)| {
            if !on {
                return (0.0, 0.0);
            }
            let [y_ff, y_ft, y_tf, y_tt] = br.stamp();
            let (vf, vt) = (v[br.from_bus], v[br.to_bus]);
            (
                (y_ff * vf + y_ft * vt).norm(),
                (y_tf * vf + y_tt * vt).norm(),
            )
        })
        .unzip())
}

/// Per-bus |I_i| with `I = Y V`.
pub fn bus_injection_currents(ybus: &AdmittanceMatrix, state: &PfState) -> Result<Vec<f64>> {
    check_dims(ybus, state)?;
    Ok(matvec(ybus, &state.phasors())
        .iter()
        .map(|i| i.norm())
        .collect())
}

/// Per-bus quantities as predicted by a bus-level model.
#[derive(Debug, Clone, PartialEq)]
pub struct BusQuantities {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

/// Converts bus-level outputs into branch and injection currents.
/// Only the voltages enter; `p` and `q` are carried for completeness.
pub fn solution_to_currents(
    case: &GridCase,
    topo: &Topology,
    bus: &BusQuantities,
) -> Result<Currents> {
    let state = PfState {
        vm: bus.vm.clone(),
        va: bus.va.clone(),
    };
    let ybus = build_ybus(case, topo)?;
    currents_for(case, topo, &ybus, &state)
}

fn currents_for(
    case: &GridCase,
    topo: &Topology,
    ybus: &AdmittanceMatrix,
    state: &PfState,
) -> Result<Currents> {
    let inj = bus_injection_currents(ybus, state)?;
    let (br_or, br_ex) = branch_currents(case, topo, state)?;
    Ok(Currents { inj, br_or, br_ex })
}

/// Solves the AC power flow by Newton-Raphson.
pub fn newton_raphson_solve(
    case: &GridCase,
    topo: &Topology,
    opts: &SolverOptions,
) -> Result<PfSolution> {
    opts.validate()?;
    topo.check(case)?;
    let unreached = unreachable_from_slack(case, topo);
    if unreached > 0 {
        return Err(Error::IslandedGrid { unreached });
    }
    let ybus = build_ybus(case, topo)?;
    let part = Partition::new(case);
    let mut state = if opts.flat_start {
        PfState::flat(case)
    } else {
        PfState::from_case(case)
    };

    let mut iterations = 0;
    loop {
        let (p, q) = compute_power_injections(&ybus, &state)?;
        let f = mismatch_from(case, &part, &p, &q);
        let norm = inf_norm(&f);
        if !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: norm,
            });
        }
        if norm < opts.tolerance {
            let currents = currents_for(case, topo, &ybus, &state)?;
            return Ok(PfSolution {
                state,
                p,
                q,
                currents,
                iterations,
                max_mismatch: norm,
            });
        }
        if iterations == opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: norm,
            });
        }
        let jac = build_jacobian(&ybus, &state, &part)?;
        let dx = lu::solve(jac, &f)?;
        let mut x = part.read(&state);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi -= d;
        }
        part.write(&mut state, &x);
        iterations += 1;
    }
}
