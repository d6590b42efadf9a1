//! Scenario records and their line-delimited JSON storage.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Topology;

/// One oracle-labeled grid instance.
///
/// Inputs are listed per PV bus (`input_pg`, `input_vm`) and per PQ bus
/// (`input_pl`, `input_ql`), each in ascending bus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub instance_id: u64,
    #[serde(rename = "in_service")]
    pub topology: Topology,
    pub cut_branch: Option<usize>,
    pub bus_p: Vec<f64>,
    pub bus_q: Vec<f64>,
    pub bus_vm: Vec<f64>,
    pub bus_va: Vec<f64>,
    pub inj_current: Vec<f64>,
    pub br_i_or: Vec<f64>,
    pub br_i_ex: Vec<f64>,
    pub input_pg: Vec<f64>,
    pub input_vm: Vec<f64>,
    pub input_pl: Vec<f64>,
    pub input_ql: Vec<f64>,
}

/// Lengths that must agree between records of one grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordShape {
    pub n_bus: usize,
    pub n_branch: usize,
    pub n_gen: usize,
    pub n_load: usize,
}

impl ScenarioRecord {
    pub fn shape(&self) -> RecordShape {
        RecordShape {
            n_bus: self.bus_vm.len(),
            n_branch: self.topology.len(),
            n_gen: self.input_pg.len(),
            n_load: self.input_pl.len(),
        }
    }

    /// Checks the per-record length invariants.
    pub fn check_consistent(&self) -> std::result::Result<(), String> {
        let s = self.shape();
        let bus_fields = [
            ("bus_p", self.bus_p.len()),
            ("bus_q", self.bus_q.len()),
            ("bus_va", self.bus_va.len()),
            ("inj_current", self.inj_current.len()),
        ];
        for (name, len) in bus_fields {
            if len != s.n_bus {
                return Err(format!("{name} has {len} entries, expected {}", s.n_bus));
            }
        }
        for (name, len) in [
            ("br_i_or", self.br_i_or.len()),
            ("br_i_ex", self.br_i_ex.len()),
        ] {
            if len != s.n_branch {
                return Err(format!("{name} has {len} entries, expected {}", s.n_branch));
            }
        }
        if self.input_vm.len() != s.n_gen {
            return Err("input_vm and input_pg lengths differ".into());
        }
        if self.input_ql.len() != s.n_load {
            return Err("input_ql and input_pl lengths differ".into());
        }
        if let Some(b) = self.cut_branch {
            if self.topology.in_service.get(b) != Some(&false) {
                return Err(format!("cut_branch {b} is not out of service"));
            }
        }
        Ok(())
    }
}

pub fn write_dataset(records: &[ScenarioRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(first) = records.first() {
        let shape = first.shape();
        if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.shape() != shape) {
            return Err(Error::Dataset {
                line: i + 1,
                message: format!(
                    "record shape {:?} differs from first record {shape:?}",
                    r.shape()
                ),
            });
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (i, r) in records.iter().enumerate() {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Dataset {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<ScenarioRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<ScenarioRecord> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let record: ScenarioRecord = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            line: lineno,
            message: e.to_string(),
        })?;
        record
            .check_consistent()
            .map_err(|message| Error::Dataset {
                line: lineno,
                message,
            })?;
        if let Some(first) = records.first() {
            if record.shape() != first.shape() {
                return Err(Error::Dataset {
                    line: lineno,
                    message: format!(
                        "dimension mismatch: {:?} vs {:?} on line 1",
                        record.shape(),
                        first.shape()
                    ),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}
