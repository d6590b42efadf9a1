use crate::dataset::{RecordShape, ScenarioRecord};
use crate::error::{Error, Result};

/// Maps records to normalized network inputs and targets.
///
/// Input layout: `(pg, vm)` per PV bus, then `(pl, ql)` per PQ bus, then the
/// topology bits as 0/1. Target layout: every branch's origin current, every
/// branch's extremity current, then every bus injection current.
///
/// Continuous inputs and all targets are standardized. Topology bits pass
/// through unscaled (mean 0, std 1): standardizing a rarely flipped bit would
/// turn a single cut into an input tens of deviations away from training.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCodec {
    pub shape: RecordShape,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

/// Spreads at or below this (relative to the mean) are solver round-off, not signal.
const CONSTANT_STD: f64 = 1e-8;

fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .iter()
        .zip(&mean)
        .map(|(s, m)| {
            let sd = (s / n).sqrt();
            if sd <= CONSTANT_STD * m.abs().max(1.0) {
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean, std)
}

pub fn raw_input(r: &ScenarioRecord) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 * r.input_pg.len() + 2 * r.input_pl.len() + r.topology.len());
    for (pg, vm) in r.input_pg.iter().zip(&r.input_vm) {
        x.push(*pg);
        x.push(*vm);
    }
    for (pl, ql) in r.input_pl.iter().zip(&r.input_ql) {
        x.push(*pl);
        x.push(*ql);
    }
    x.extend(
        r.topology
            .in_service
            .iter()
            .map(|&on| if on { 1.0 } else { 0.0 }),
    );
    x
}

pub fn raw_target(r: &ScenarioRecord) -> Vec<f64> {
    r.br_i_or
        .iter()
        .chain(&r.br_i_ex)
        .chain(&r.inj_current)
        .copied()
        .collect()
}

impl FeatureCodec {
    /// Fits normalization statistics on the training records only.
    pub fn fit(records: &[ScenarioRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("codec needs training records"));
        }
        if records.len() < 2 {
            return Err(Error::InvalidConfig(
                "codec needs at least 2 records".into(),
            ));
        }
        let shape = records[0].shape();
        for r in records {
            check_shape(shape, r)?;
        }
        let inputs: Vec<_> = records.iter().map(raw_input).collect();
        let targets: Vec<_> = records.iter().map(raw_target).collect();
        let (mut input_mean, mut input_std) = moments(&inputs);
        let n_cont = input_mean.len() - shape.n_branch;
        input_mean[n_cont..].fill(0.0);
        input_std[n_cont..].fill(1.0);
        let (output_mean, output_std) = moments(&targets);
        Ok(FeatureCodec {
            shape,
            input_mean,
            input_std,
            output_mean,
            output_std,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_mean.len()
    }

    pub fn check(&self, r: &ScenarioRecord) -> Result<()> {
        check_shape(self.shape, r)
    }

    pub fn encode_input(&self, r: &ScenarioRecord) -> Result<Vec<f64>> {
        self.check(r)?;
        Ok(normalize(&raw_input(r), &self.input_mean, &self.input_std))
    }

    pub fn encode_target(&self, r: &ScenarioRecord) -> Result<Vec<f64>> {
        self.check(r)?;
        Ok(normalize(
            &raw_target(r),
            &self.output_mean,
            &self.output_std,
        ))
    }

    pub fn decode_input(&self, z: &[f64]) -> Vec<f64> {
        denormalize(z, &self.input_mean, &self.input_std)
    }

    pub fn decode_output(&self, z: &[f64]) -> Vec<f64> {
        denormalize(z, &self.output_mean, &self.output_std)
    }
}

fn check_shape(expected: RecordShape, r: &ScenarioRecord) -> Result<()> {
    let found = r.shape();
    if found != expected {
        let (what, e, f) = if found.n_branch != expected.n_branch {
            ("branch count", expected.n_branch, found.n_branch)
        } else if found.n_bus != expected.n_bus {
            ("bus count", expected.n_bus, found.n_bus)
        } else if found.n_gen != expected.n_gen {
            ("generator input count", expected.n_gen, found.n_gen)
        } else {
            ("load input count", expected.n_load, found.n_load)
        };
        return Err(Error::DimensionMismatch {
            what,
            expected: e,
            found: f,
        });
    }
    Ok(())
}

fn normalize(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((v, m), s)| (v - m) / s)
        .collect()
}

fn denormalize(z: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(mean)
        .zip(std)
        .map(|((v, m), s)| v * s + m)
        .collect()
}
