//! Scoring of trained surrogates: N vs N-1 error, degree clusters, and the
//! mixed-training table, with CSV emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ScenarioRecord;
use crate::error::{Error, Result};
use crate::grid::{node_degrees, GridCase};
use crate::par::{self, Execution};
use crate::surrogate::codec::raw_target;
use crate::surrogate::Surrogate;

/// Squared-error totals split by output group. Sums are accumulated in
/// record order so the result does not depend on scheduling.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MseBreakdown {
    pub records: usize,
    pub total: f64,
    pub branch_or: f64,
    pub branch_ex: f64,
    pub injection: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct SquaredErrors {
    or: f64,
    ex: f64,
    inj: f64,
}

fn squared_errors(model: &Surrogate, r: &ScenarioRecord) -> Result<SquaredErrors> {
    let pred = model.predict(r)?;
    let label = raw_target(r);
    let nb = r.topology.len();
    let sq = |range: std::ops::Range<usize>| -> f64 {
        pred[range.clone()]
            .iter()
            .zip(&label[range])
            .map(|(p, y)| (p - y) * (p - y))
            .sum()
    };
    Ok(SquaredErrors {
        or: sq(0..nb),
        ex: sq(nb..2 * nb),
        inj: sq(2 * nb..label.len()),
    })
}

pub fn evaluate_breakdown(
    model: &Surrogate,
    records: &[ScenarioRecord],
    exec: Execution,
) -> Result<MseBreakdown> {
    let first = records
        .first()
        .ok_or(Error::EmptyInput("no records to evaluate"))?;
    model.codec.check(first)?;
    let shape = model.codec.shape;
    let per_record = par::map_slice(exec, records, |r| squared_errors(model, r));
    let (mut or, mut ex, mut inj) = (0.0, 0.0, 0.0);
    for e in per_record {
        let e = e?;
        or += e.or;
        ex += e.ex;
        inj += e.inj;
    }
    let n = records.len() as f64;
    let n_or = n * shape.n_branch as f64;
    let n_inj = n * shape.n_bus as f64;
    Ok(MseBreakdown {
        records: records.len(),
        total: (or + ex + inj) / (2.0 * n_or + n_inj),
        branch_or: or / n_or.max(1.0),
        branch_ex: ex / n_or.max(1.0),
        injection: inj / n_inj.max(1.0),
    })
}

/// Mean squared error over every current output of every record, in per-unit.
pub fn evaluate_mse(model: &Surrogate, records: &[ScenarioRecord], exec: Execution) -> Result<f64> {
    Ok(evaluate_breakdown(model, records, exec)?.total)
}

/// `n1 / n`; infinite when the N error is exactly zero and the N-1 error is not.
pub fn gap_ratio(n_mse: f64, n1_mse: f64) -> f64 {
    if n_mse > 0.0 {
        n1_mse / n_mse
    } else if n1_mse > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Max,
    Median,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Max => "max",
            NodeRole::Median => "median",
        }
    }
}

/// The two reference nodes of the full topology. Ties go to the lowest bus
/// id; the median is the upper median of the sorted degree sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceNodes {
    pub max_node: usize,
    pub max_degree: usize,
    pub median_node: usize,
    pub median_degree: usize,
}

pub fn reference_nodes(case: &GridCase) -> Result<ReferenceNodes> {
    let degrees = node_degrees(case, &case.full_topology())?;
    if degrees.is_empty() {
        return Err(Error::EmptyInput("case has no buses"));
    }
    let max_degree = *degrees.iter().max().expect("non-empty");
    let mut sorted = degrees.clone();
    sorted.sort_unstable();
    let median_degree = sorted[sorted.len() / 2];
    let first_with = |d: usize| degrees.iter().position(|&x| x == d).expect("degree occurs");
    Ok(ReferenceNodes {
        max_node: first_with(max_degree),
        max_degree,
        median_node: first_with(median_degree),
        median_degree,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub role: NodeRole,
    pub degree: usize,
    pub count: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeTable {
    pub nodes: ReferenceNodes,
    /// Sorted by role, then by descending degree.
    pub rows: Vec<DegreeRow>,
}

impl DegreeTable {
    pub fn rows_for(&self, role: NodeRole) -> impl Iterator<Item = &DegreeRow> {
        self.rows.iter().filter(move |r| r.role == role)
    }

    pub fn degrees_for(&self, role: NodeRole) -> Vec<usize> {
        self.rows_for(role).map(|r| r.degree).collect()
    }
}

/// Groups N-1 records by the post-cut degree of each reference node and
/// reports the surrogate's error per group.
pub fn degree_cluster_analysis(
    model: &Surrogate,
    case: &GridCase,
    records: &[ScenarioRecord],
    exec: Execution,
) -> Result<DegreeTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no N-1 records to cluster"));
    }
    if let Some(r) = records.iter().find(|r| r.cut_branch.is_none()) {
        return Err(Error::MissingCut {
            instance_id: r.instance_id,
        });
    }
    let nodes = reference_nodes(case)?;
    let outputs = model.codec.output_dim() as f64;
    let per_record = par::map_slice(exec, records, |r| -> Result<(usize, usize, f64)> {
        let deg = node_degrees(case, &r.topology)?;
        let e = squared_errors(model, r)?;
        Ok((
            deg[nodes.max_node],
            deg[nodes.median_node],
            e.or + e.ex + e.inj,
        ))
    });
    // (role, Reverse(degree)) -> (count, squared error sum)
    let mut groups: BTreeMap<(NodeRole, std::cmp::Reverse<usize>), (usize, f64)> = BTreeMap::new();
    for item in per_record {
        let (d_max, d_med, se) = item?;
        for (role, d) in [(NodeRole::Max, d_max), (NodeRole::Median, d_med)] {
            let g = groups.entry((role, std::cmp::Reverse(d))).or_default();
            g.0 += 1;
            g.1 += se;
        }
    }
    let rows = groups
        .into_iter()
        .map(|((role, d), (count, se))| DegreeRow {
            role,
            degree: d.0,
            count,
            mse: se / (count as f64 * outputs),
        })
        .collect();
    Ok(DegreeTable { nodes, rows })
}

/// A trained model as it enters the report: its name (typically the
/// variant) and the cut probability of its training data.
#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub name: String,
    pub p: f64,
    pub model: Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub n_mse: f64,
    pub n1_mse: f64,
    pub gap_ratio: f64,
    pub clusters: Vec<DegreeRow>,
    /// `(p, n1_mse)` of every entry sharing this model name, ascending in p.
    pub mix_table: Vec<(f64, f64)>,
}

/// One report per distinct model name, in order of first appearance. The
/// N/N-1 columns and the degree table come from that name's lowest-p entry.
pub fn robustness_report(
    case: &GridCase,
    dataset: &str,
    models: &[ModelEntry],
    n_records: &[ScenarioRecord],
    n1_records: &[ScenarioRecord],
    exec: Execution,
) -> Result<Vec<EvalReport>> {
    if models.is_empty() {
        return Err(Error::EmptyInput("no models to report on"));
    }
    let mut names: Vec<&str> = Vec::new();
    for m in models {
        if !names.contains(&m.name.as_str()) {
            names.push(&m.name);
        }
    }
    let n1_scores = models
        .iter()
        .map(|m| evaluate_mse(&m.model, n1_records, exec))
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(names.len());
    for name in names {
        let mut idx: Vec<usize> = (0..models.len())
            .filter(|&i| models[i].name == name)
            .collect();
        idx.sort_by(|&a, &b| models[a].p.total_cmp(&models[b].p));
        let base = idx[0];
        let n_mse = evaluate_mse(&models[base].model, n_records, exec)?;
        let n1_mse = n1_scores[base];
        let clusters = degree_cluster_analysis(&models[base].model, case, n1_records, exec)?.rows;
        reports.push(EvalReport {
            dataset: dataset.to_string(),
            model: name.to_string(),
            n_mse,
            n1_mse,
            gap_ratio: gap_ratio(n_mse, n1_mse),
            clusters,
            mix_table: idx.iter().map(|&i| (models[i].p, n1_scores[i])).collect(),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub model: String,
    pub dataset: String,
    pub n_mse: f64,
    pub n1_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub model: String,
    pub p: f64,
    pub n1_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportTables {
    pub table1: Vec<Table1Row>,
    pub table2: Vec<DegreeRow>,
    pub table3: Vec<Table3Row>,
}

impl ReportTables {
    /// Table 2 carries the degree clusters of the first report only.
    pub fn from_reports(reports: &[EvalReport]) -> Self {
        ReportTables {
            table1: reports
                .iter()
                .map(|r| Table1Row {
                    model: r.model.clone(),
                    dataset: r.dataset.clone(),
                    n_mse: r.n_mse,
                    n1_mse: r.n1_mse,
                })
                .collect(),
            table2: reports
                .first()
                .map(|r| r.clusters.clone())
                .unwrap_or_default(),
            table3: reports
                .iter()
                .flat_map(|r| {
                    r.mix_table.iter().map(|&(p, n1_mse)| Table3Row {
                        model: r.model.clone(),
                        p,
                        n1_mse,
                    })
                })
                .collect(),
        }
    }
}

pub const TABLE_FILES: [&str; 3] = ["table1.csv", "table2.csv", "table3.csv"];

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_tables(tables: &ReportTables, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join(TABLE_FILES[0]),
        &tables.table1,
        &["model", "dataset", "n_mse", "n1_mse"],
    )?;
    write_csv(
        &dir.join(TABLE_FILES[1]),
        &tables.table2,
        &["role", "degree", "count", "mse"],
    )?;
    write_csv(
        &dir.join(TABLE_FILES[2]),
        &tables.table3,
        &["model", "p", "n1_mse"],
    )
}

pub fn read_tables(dir: impl AsRef<Path>) -> Result<ReportTables> {
    let dir = dir.as_ref();
    Ok(ReportTables {
        table1: read_csv(&dir.join(TABLE_FILES[0]))?,
        table2: read_csv(&dir.join(TABLE_FILES[1]))?,
        table3: read_csv(&dir.join(TABLE_FILES[2]))?,
    })
}
