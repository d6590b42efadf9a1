//! Scenario generation: constrained sampling of loads, voltages and
//! generation, the random line-cutting agent, and oracle labeling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::dataset::ScenarioRecord;
use crate::error::{Error, Result};
use crate::grid::{admissible_cuts, apply_line_cut, BusKind, GridCase, Topology};
use crate::par::{self, Execution};
use crate::powerflow::{newton_raphson_solve, PfSolution, SolverOptions};

/// Voltage magnitudes drawn for PV buses are clamped to this band (pu).
pub const VM_BAND: (f64, f64) = (0.9, 1.1);

/// Attempts per instance before generation gives up on the configuration.
pub const MAX_ATTEMPTS_PER_INSTANCE: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    /// Standard deviation of the absolute per-unit load and voltage perturbation.
    pub load_sigma: f64,
    pub cut_probability: f64,
    pub seed: u64,
    pub n_instances: usize,
    pub dirichlet_alpha: f64,
    pub solver: SolverOptions,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            load_sigma: 0.1,
            cut_probability: 0.0,
            seed: 0,
            n_instances: 1,
            dirichlet_alpha: 1.0,
            solver: SolverOptions::default(),
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cut_probability) {
            return Err(Error::InvalidConfig(format!(
                "cut probability {} is outside [0, 1]",
                self.cut_probability
            )));
        }
        if !(self.load_sigma >= 0.0) || !self.load_sigma.is_finite() {
            return Err(Error::InvalidConfig("load sigma must be >= 0".into()));
        }
        if self.n_instances < 1 {
            return Err(Error::InvalidConfig("n_instances must be >= 1".into()));
        }
        if !(self.dirichlet_alpha > 0.0) || !self.dirichlet_alpha.is_finite() {
            return Err(Error::InvalidConfig("dirichlet alpha must be > 0".into()));
        }
        self.solver.validate()
    }
}

/// Mixes a master seed with an instance id and attempt number (splitmix64).
pub fn child_seed(seed: u64, instance_id: u64, attempt: u32) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ instance_id) ^ u64::from(attempt))
}

pub fn instance_rng(seed: u64, instance_id: u64, attempt: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, instance_id, attempt))
}

/// Known quantities of one instance: `pg`/`vm` per PV bus and `pl`/`ql` per
/// PQ bus, in ascending bus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInputs {
    pub pg: Vec<f64>,
    pub vm: Vec<f64>,
    pub pl: Vec<f64>,
    pub ql: Vec<f64>,
}

impl ScenarioInputs {
    pub fn nominal(case: &GridCase) -> Self {
        let pv = case.buses_of(BusKind::Pv);
        let pq = case.buses_of(BusKind::Pq);
        ScenarioInputs {
            pg: pv.iter().map(|&i| case.buses[i].p_gen).collect(),
            vm: pv.iter().map(|&i| case.buses[i].vm_setpoint).collect(),
            pl: pq.iter().map(|&i| case.buses[i].p_load).collect(),
            ql: pq.iter().map(|&i| case.buses[i].q_load).collect(),
        }
    }

    /// Returns a copy of `case` carrying these inputs.
    pub fn apply(&self, case: &GridCase) -> Result<GridCase> {
        let pv = case.buses_of(BusKind::Pv);
        let pq = case.buses_of(BusKind::Pq);
        if self.pg.len() != pv.len() || self.vm.len() != pv.len() {
            return Err(Error::DimensionMismatch {
                what: "generator inputs",
                expected: pv.len(),
                found: self.pg.len(),
            });
        }
        if self.pl.len() != pq.len() || self.ql.len() != pq.len() {
            return Err(Error::DimensionMismatch {
                what: "load inputs",
                expected: pq.len(),
                found: self.pl.len(),
            });
        }
        let mut out = case.clone();
        for (k, &i) in pv.iter().enumerate() {
            out.buses[i].p_gen = self.pg[k];
            out.buses[i].vm_setpoint = self.vm[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            out.buses[i].p_load = self.pl[k];
            out.buses[i].q_load = self.ql[k];
        }
        Ok(out)
    }
}

/// Sampled PQ loads and PV voltage setpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub pl: Vec<f64>,
    pub ql: Vec<f64>,
    pub vm: Vec<f64>,
}

fn sign_preserving<R: Rng + ?Sized>(nominal: f64, normal: &Normal<f64>, rng: &mut R) -> f64 {
    if nominal == 0.0 {
        return 0.0;
    }
    loop {
        let v = nominal + normal.sample(rng);
        if v.signum() == nominal.signum() && v != 0.0 {
            return v;
        }
    }
}

/// Draws PQ loads and PV voltage setpoints around their nominal values.
///
/// Loads keep the sign of their nominal value (redrawn otherwise); buses
/// with zero nominal load stay at zero. Voltages are clamped to [`VM_BAND`].
pub fn sample_load_profile<R: Rng + ?Sized>(
    case: &GridCase,
    sigma: f64,
    rng: &mut R,
) -> LoadProfile {
    let normal = Normal::new(0.0, sigma).expect("sigma validated as finite and >= 0");
    let pq = case.buses_of(BusKind::Pq);
    let mut pl = Vec::with_capacity(pq.len());
    let mut ql = Vec::with_capacity(pq.len());
    for &i in &pq {
        let bus = &case.buses[i];
        pl.push(sign_preserving(bus.p_load, &normal, rng));
        ql.push(sign_preserving(bus.q_load, &normal, rng));
    }
    let vm = case
        .buses_of(BusKind::Pv)
        .iter()
        .map(|&i| (case.buses[i].vm_setpoint + normal.sample(rng)).clamp(VM_BAND.0, VM_BAND.1))
        .collect();
    LoadProfile { pl, ql, vm }
}

/// Splits the case's total generation over the PV generators with
/// Dirichlet(α·1) weights. The sum equals `total_generation`.
pub fn sample_generation_dispatch<R: Rng + ?Sized>(
    case: &GridCase,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = case.buses_of(BusKind::Pv).len();
    if n == 0 {
        return Err(Error::NoGenerators);
    }
    let total = case.total_generation;
    if n == 1 {
        return Ok(vec![total]);
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::InvalidConfig(format!("dirichlet alpha: {e}")))?;
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if !(sum > 0.0) {
        // every gamma draw underflowed (tiny alpha); fall back to a vertex
        draws.iter_mut().for_each(|d| *d = 0.0);
        draws[rng.random_range(0..n)] = 1.0;
    } else {
        draws.iter_mut().for_each(|d| *d /= sum);
    }
    let mut dispatch: Vec<f64> = draws.iter().map(|w| w * total).collect();
    let head: f64 = dispatch[..n - 1].iter().sum();
    dispatch[n - 1] = total - head;
    Ok(dispatch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentCut {
    pub topology: Topology,
    pub cut_branch: Option<usize>,
    /// The agent decided to cut but every candidate would island the grid.
    pub no_admissible_cut: bool,
}

/// With probability `p`, cuts one branch chosen uniformly among the cuts
/// that keep every bus connected to the slack.
pub fn random_agent_cut<R: Rng + ?Sized>(
    case: &GridCase,
    topo: &Topology,
    p: f64,
    rng: &mut R,
) -> AgentCut {
    let unchanged = |flag| AgentCut {
        topology: topo.clone(),
        cut_branch: None,
        no_admissible_cut: flag,
    };
    let draw: f64 = rng.random();
    if draw >= p {
        return unchanged(false);
    }
    let candidates = admissible_cuts(case, topo);
    if candidates.is_empty() {
        return unchanged(true);
    }
    let branch = candidates[rng.random_range(0..candidates.len())];
    AgentCut {
        topology: apply_line_cut(topo, branch).expect("candidate is in service"),
        cut_branch: Some(branch),
        no_admissible_cut: false,
    }
}

pub fn record_from_solution(
    instance_id: u64,
    topology: Topology,
    cut_branch: Option<usize>,
    inputs: &ScenarioInputs,
    sol: &PfSolution,
) -> ScenarioRecord {
    ScenarioRecord {
        instance_id,
        topology,
        cut_branch,
        bus_p: sol.p.clone(),
        bus_q: sol.q.clone(),
        bus_vm: sol.state.vm.clone(),
        bus_va: sol.state.va.clone(),
        inj_current: sol.currents.inj.clone(),
        br_i_or: sol.currents.br_or.clone(),
        br_i_ex: sol.currents.br_ex.clone(),
        input_pg: inputs.pg.clone(),
        input_vm: inputs.vm.clone(),
        input_pl: inputs.pl.clone(),
        input_ql: inputs.ql.clone(),
    }
}

/// Draws the inputs and topology of one attempt from its own rng stream.
pub fn sample_instance<R: Rng + ?Sized>(
    case: &GridCase,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<(ScenarioInputs, AgentCut)> {
    let loads = sample_load_profile(case, cfg.load_sigma, rng);
    let pg = sample_generation_dispatch(case, cfg.dirichlet_alpha, rng)?;
    let cut = random_agent_cut(case, &case.full_topology(), cfg.cut_probability, rng);
    let inputs = ScenarioInputs {
        pg,
        vm: loads.vm,
        pl: loads.pl,
        ql: loads.ql,
    };
    Ok((inputs, cut))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationReport {
    pub attempts: usize,
    /// Attempts dropped because the oracle failed (non-convergent or singular).
    pub discarded: usize,
    /// Branches never cut because removing them alone islands the grid.
    pub excluded_islanding_cuts: Vec<usize>,
    /// Instances where the agent fired but no admissible cut existed.
    pub no_admissible_cut: usize,
}

impl GenerationReport {
    pub fn discard_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.discarded as f64 / self.attempts as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub records: Vec<ScenarioRecord>,
    pub report: GenerationReport,
}

struct InstanceOutcome {
    record: ScenarioRecord,
    attempts: u32,
    no_admissible: bool,
}

fn generate_instance(case: &GridCase, cfg: &SamplingConfig, id: u64) -> Result<InstanceOutcome> {
    for attempt in 0..MAX_ATTEMPTS_PER_INSTANCE {
        let mut rng = instance_rng(cfg.seed, id, attempt);
        let (inputs, cut) = sample_instance(case, cfg, &mut rng)?;
        let scenario = inputs.apply(case)?;
        match newton_raphson_solve(&scenario, &cut.topology, &cfg.solver) {
            Ok(sol) => {
                return Ok(InstanceOutcome {
                    record: record_from_solution(id, cut.topology, cut.cut_branch, &inputs, &sol),
                    attempts: attempt + 1,
                    no_admissible: cut.no_admissible_cut,
                })
            }
            Err(
                Error::NonConvergence { .. }
                | Error::SingularJacobian { .. }
                | Error::IslandedGrid { .. },
            ) => {}
            Err(e) => return Err(e),
        }
    }
    let attempts = MAX_ATTEMPTS_PER_INSTANCE as usize;
    Err(Error::DiscardRateExceeded {
        discarded: attempts,
        attempts,
        rate: 100.0,
    })
}

/// Generates `cfg.n_instances` oracle-labeled records. Each instance draws
/// from its own seed stream, so the output is identical for every
/// [`Execution`] mode.
pub fn generate_dataset(
    case: &GridCase,
    cfg: &SamplingConfig,
    exec: Execution,
) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let outcomes = par::map_indexed(exec, cfg.n_instances, |i| {
        generate_instance(case, cfg, i as u64)
    });

    let full = case.full_topology();
    let admissible = admissible_cuts(case, &full);
    let mut report = GenerationReport {
        excluded_islanding_cuts: (0..case.n_branch())
            .filter(|b| !admissible.contains(b))
            .collect(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(cfg.n_instances);
    for outcome in outcomes {
        let o = outcome?;
        report.attempts += o.attempts as usize;
        report.discarded += o.attempts as usize - 1;
        report.no_admissible_cut += usize::from(o.no_admissible);
        records.push(o.record);
    }
    if report.discard_rate() > 0.5 {
        return Err(Error::DiscardRateExceeded {
            discarded: report.discarded,
            attempts: report.attempts,
            rate: 100.0 * report.discard_rate(),
        });
    }
    Ok(GeneratedDataset { records, report })
}
