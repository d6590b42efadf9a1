//! MATPOWER `.m` case ingestion (the `baseMVA`, `bus`, `gen` and `branch`
//! sections; everything else, including `gencost`, is skipped).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, BusKind, GridCase};

// Minimum column counts per MATPOWER's data format.
const BUS_COLS: usize = 13;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

#[derive(Debug, Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<f64>,
    matrices: HashMap<String, Vec<(usize, Vec<f64>)>>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_row(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("malformed matrix entry {t:?}"),
            })
        })
        .collect()
}

fn scan(text: &str) -> Result<RawCase> {
    let mut raw = RawCase::default();
    // name and starting line of the matrix being read
    let mut open: Option<(String, usize)> = None;
    let mut pending = String::new();

    for (idx, full_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(full_line).trim();
        if line.is_empty() {
            continue;
        }

        if let Some((name, _)) = open.as_ref() {
            let (body, closes) = match line.find(']') {
                Some(i) => (&line[..i], true),
                None => (line, false),
            };
            // rows end at ';' or at the end of a line
            for (i, chunk) in body.split(';').enumerate() {
                if i > 0 {
                    flush_row(&mut raw, name, &mut pending, lineno)?;
                }
                pending.push(' ');
                pending.push_str(chunk);
            }
            flush_row(&mut raw, name, &mut pending, lineno)?;
            if closes {
                open = None;
            }
            continue;
        }

        if let Some(rest) = line.strip_prefix("function") {
            if let Some((_, name)) = rest.split_once('=') {
                raw.name = Some(name.trim().to_string());
            }
            continue;
        }

        let Some(rest) = line.strip_prefix("mpc.") else {
            continue;
        };
        let Some((key, value)) = rest.split_once('=') else {
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if let Some(body) = value.strip_prefix('[') {
            let name = key.to_string();
            raw.matrices.entry(name.clone()).or_default();
            if let Some(end) = body.find(']') {
                for chunk in body[..end].split(';') {
                    pending.push_str(chunk);
                    flush_row(&mut raw, &name, &mut pending, lineno)?;
                }
            } else {
                for (i, chunk) in body.split(';').enumerate() {
                    if i > 0 {
                        flush_row(&mut raw, &name, &mut pending, lineno)?;
                    }
                    pending.push_str(chunk);
                }
                flush_row(&mut raw, &name, &mut pending, lineno)?;
                open = Some((name, lineno));
            }
        } else if key == "baseMVA" {
            let v = value.trim_end_matches(';').trim();
            raw.base_mva = Some(v.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid baseMVA {v:?}"),
            })?);
        }
    }
    if let Some((name, start)) = open {
        return Err(Error::Parse {
            line: start,
            message: format!("matrix mpc.{name} is never closed"),
        });
    }
    Ok(raw)
}

fn flush_row(raw: &mut RawCase, name: &str, pending: &mut String, line: usize) -> Result<()> {
    let row = parse_row(pending, line)?;
    pending.clear();
    if !row.is_empty() {
        raw.matrices
            .entry(name.to_string())
            .or_default()
            .push((line, row));
    }
    Ok(())
}

fn section<'a>(raw: &'a RawCase, name: &str, min_cols: usize) -> Result<&'a [(usize, Vec<f64>)]> {
    let rows = raw.matrices.get(name).ok_or_else(|| Error::Parse {
        line: 0,
        message: format!("missing mpc.{name} section"),
    })?;
    for (line, row) in rows {
        if row.len() < min_cols {
            return Err(Error::Parse {
                line: *line,
                message: format!(
                    "mpc.{name} row has {} columns, expected at least {min_cols}",
                    row.len()
                ),
            });
        }
    }
    Ok(rows)
}

/// Parses MATPOWER case text into a per-unit [`GridCase`].
///
/// Bus ids are re-indexed densely in file order. Several in-service
/// generators on one bus are aggregated; the voltage setpoint comes from the
/// first of them. Out-of-service generators and branches are dropped.
pub fn parse_matpower_case(text: &str) -> Result<GridCase> {
    let raw = scan(text)?;
    let base_mva = raw.base_mva.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing mpc.baseMVA".into(),
    })?;
    if !(base_mva > 0.0) {
        return Err(Error::Parse {
            line: 0,
            message: "baseMVA must be positive".into(),
        });
    }

    let mut index = HashMap::new();
    let mut buses = Vec::new();
    for (line, row) in section(&raw, "bus", BUS_COLS)? {
        let source_id = row[0] as u64;
        let kind = match row[1] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::Pv,
            1 => BusKind::Pq,
            other => {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("unsupported bus type {other}"),
                })
            }
        };
        let id = buses.len();
        if index.insert(source_id, id).is_some() {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate bus number {source_id}"),
            });
        }
        buses.push(Bus {
            id,
            source_id,
            kind,
            p_gen: 0.0,
            p_load: row[2] / base_mva,
            q_load: row[3] / base_mva,
            vm_setpoint: row[7],
            va_slack: row[8].to_radians(),
            gs: row[4] / base_mva,
            bs: row[5] / base_mva,
            vm_init: row[7],
            va_init: row[8].to_radians(),
        });
    }

    let slack_count = buses.iter().filter(|b| b.kind == BusKind::Slack).count();
    match slack_count {
        0 => {
            return Err(Error::Parse {
                line: 0,
                message: "no slack bus (type 3)".into(),
            })
        }
        1 => {}
        n => {
            return Err(Error::Parse {
                line: 0,
                message: format!("duplicate slack: {n} buses of type 3"),
            })
        }
    }

    let mut has_gen = vec![false; buses.len()];
    let mut total_generation = 0.0;
    for (line, row) in section(&raw, "gen", GEN_COLS)? {
        if row[7] <= 0.0 {
            continue;
        }
        let bus_id = *index.get(&(row[0] as u64)).ok_or_else(|| Error::Parse {
            line: *line,
            message: format!("generator at unknown bus {}", row[0]),
        })?;
        let bus = &mut buses[bus_id];
        let pg = row[1] / base_mva;
        bus.p_gen += pg;
        total_generation += pg;
        if !has_gen[bus_id] {
            has_gen[bus_id] = true;
            if bus.kind != BusKind::Pq {
                bus.vm_setpoint = row[5];
            }
        }
    }

    let mut branches = Vec::new();
    for (line, row) in section(&raw, "branch", BRANCH_COLS)? {
        if row[10] <= 0.0 {
            continue;
        }
        let endpoint = |v: f64| {
            index.get(&(v as u64)).copied().ok_or_else(|| Error::Parse {
                line: *line,
                message: format!("branch references unknown bus {v}"),
            })
        };
        let tap = if row[8] == 0.0 { 1.0 } else { row[8] };
        branches.push(Branch {
            id: branches.len(),
            from_bus: endpoint(row[0])?,
            to_bus: endpoint(row[1])?,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            tap_ratio: tap,
            phase_shift: row[9].to_radians(),
        });
    }

    let name = raw.name.unwrap_or_else(|| "case".to_string());
    GridCase::new(name, base_mva, buses, branches, total_generation)
}

pub fn read_matpower_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matpower_case(&text)
}
