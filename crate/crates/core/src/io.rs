//! Text, CSV and binary formats for matrices, labels, measures and fields.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so write/read round trips are exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{StateGrid, TimeGrid};
use crate::kernel::{LabelGrid, Matrix};
use crate::lqflock::{LqSolution, McKeanVlasovReport};
use crate::measure::{LabelStateMeasure, MeasureFlow, ParticleMeasure};
use crate::mfgpde::{EquilibriumField, GridField};
use crate::nashgap::{EmpRow, NashGapReport};
use crate::netgen::LabelAssignment;

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token.trim().parse::<f64>().map_err(|e| Error::Parse { line, reason: format!("`{token}`: {e}") })
}

fn parse_usize(token: &str, line: usize) -> Result<usize> {
    token.trim().parse::<usize>().map_err(|e| Error::Parse { line, reason: format!("`{token}`: {e}") })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Whitespace-separated dense matrix, one row per line. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_dense_matrix(text: &str) -> Result<Matrix> {
    let rows = content_lines(text)
        .map(|(line, l)| l.split_whitespace().map(|t| parse_f64(t, line)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(rows)
}

pub fn write_dense_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// `i j value` lines with 0-based indices; absent entries are zero. The
/// size is `n` when given, otherwise one more than the largest index.
pub fn read_edge_list(text: &str, n: Option<usize>) -> Result<Matrix> {
    let mut entries = Vec::new();
    for (line, l) in content_lines(text) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(Error::Parse { line, reason: format!("expected `i j value`, got {} fields", t.len()) });
        }
        entries.push((parse_usize(t[0], line)?, parse_usize(t[1], line)?, parse_f64(t[2], line)?, line));
    }
    let size = n.unwrap_or_else(|| entries.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0));
    let mut m = Matrix::zeros(size);
    for (i, j, v, line) in entries {
        if i >= size || j >= size {
            return Err(Error::Parse { line, reason: format!("index ({i}, {j}) outside n = {size}") });
        }
        m.set(i, j, v);
    }
    Ok(m)
}

/// Nonzero entries as `i j value` lines.
pub fn write_edge_list(m: &Matrix) -> String {
    let mut out = String::new();
    for (i, row) in m.rows().iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                out.push_str(&format!("{i} {j} {v}\n"));
            }
        }
    }
    out
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 fields")
}

fn csv_records(text: &str, header: &[&str]) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse { line: 1, reason: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(Error::Parse { line: 1, reason: format!("expected header {header:?}, got {found:?}") });
    }
    r.records()
        .enumerate()
        .map(|(k, rec)| {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Parse { line, reason: e.to_string() })?;
            Ok((line, rec.iter().map(|t| parse_f64(t, line)).collect::<Result<Vec<_>>>()?))
        })
        .collect()
}

/// `index,label` CSV.
pub fn write_labels(labels: &LabelAssignment) -> String {
    csv_string(&["index", "label"], labels.labels().iter().enumerate().map(|(i, u)| vec![i.to_string(), u.to_string()]))
}

pub fn read_labels(text: &str) -> Result<LabelAssignment> {
    let recs = csv_records(text, &["index", "label"])?;
    let mut labels = Vec::with_capacity(recs.len());
    for (k, (line, rec)) in recs.into_iter().enumerate() {
        if rec[0] != k as f64 {
            return Err(Error::Parse { line, reason: format!("expected index {k}, got {}", rec[0]) });
        }
        labels.push(rec[1]);
    }
    LabelAssignment::given(labels)
}

/// `x,w` CSV.
pub fn write_particles(m: &ParticleMeasure) -> String {
    csv_string(&["x", "w"], m.atoms().iter().map(|a| vec![a.x.to_string(), a.w.to_string()]))
}

pub fn read_particles(text: &str) -> Result<ParticleMeasure> {
    ParticleMeasure::from_atoms(csv_records(text, &["x", "w"])?.into_iter().map(|(_, r)| (r[0], r[1])))
}

/// `u,x,w` CSV.
pub fn write_label_state(m: &LabelStateMeasure) -> String {
    csv_string(&["u", "x", "w"], m.atoms().iter().map(|a| vec![a.u.to_string(), a.x.to_string(), a.w.to_string()]))
}

pub fn read_label_state(text: &str) -> Result<LabelStateMeasure> {
    LabelStateMeasure::from_atoms(csv_records(text, &["u", "x", "w"])?.into_iter().map(|(_, r)| (r[0], r[1], r[2])))
}

/// One `u,x,w` file per time node plus `index.csv` (node, time, file).
pub fn write_flow(dir: &Path, flow: &MeasureFlow) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = Vec::new();
    for (k, (t, m)) in flow.times().iter().zip(flow.nodes()).enumerate() {
        let name = format!("node_{k:05}.csv");
        fs::write(dir.join(&name), write_label_state(m))?;
        index.push(vec![k.to_string(), t.to_string(), name]);
    }
    fs::write(dir.join("index.csv"), csv_string(&["node", "time", "file"], index))?;
    Ok(())
}

pub fn read_flow(dir: &Path) -> Result<MeasureFlow> {
    let text = fs::read_to_string(dir.join("index.csv"))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut times = Vec::new();
    let mut nodes = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { line: k + 2, reason: e.to_string() })?;
        times.push(parse_f64(&rec[1], k + 2)?);
        nodes.push(read_label_state(&fs::read_to_string(dir.join(&rec[2]))?)?);
    }
    MeasureFlow::new(times, nodes)
}

/// Shape and grids of a binary field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub name: String,
    pub dtype: String,
    /// `[time nodes, label cells, state cells]`, last index fastest.
    pub shape: [usize; 3],
    pub time: TimeGrid,
    pub labels: usize,
    pub states: StateGrid,
}

/// Writes `<name>.bin` (little-endian `f64`) and `<name>.json`.
pub fn write_field(dir: &Path, name: &str, field: &GridField, time: TimeGrid, states: StateGrid) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(format!("{name}.bin")))?;
    let mut buf = Vec::with_capacity(field.data.len() * 8);
    for v in &field.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    let side = FieldSidecar {
        name: name.into(),
        dtype: "f64le".into(),
        shape: [field.nodes, field.labels, field.states],
        time,
        labels: field.labels,
        states,
    };
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_field(dir: &Path, name: &str) -> Result<(GridField, FieldSidecar)> {
    let side: FieldSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json")))?)?;
    let bytes = fs::read(dir.join(format!("{name}.bin")))?;
    let [nodes, labels, states] = side.shape;
    if bytes.len() != nodes * labels * states * 8 {
        return Err(Error::Parse { line: 0, reason: format!("{name}.bin has {} bytes, shape needs {}", bytes.len(), nodes * labels * states * 8) });
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((GridField { nodes, labels, states, data }, side))
}

/// `u,x,value` slice of a field at time node `k`.
pub fn field_slice_csv(field: &GridField, k: usize, states: &StateGrid) -> String {
    let grid = LabelGrid::new(field.labels).expect("field has labels");
    let xs = states.centers();
    let rows = (0..field.labels).flat_map(|l| {
        let u = grid.midpoint(l);
        xs.iter().enumerate().map(move |(j, x)| vec![u.to_string(), x.to_string(), field.at(k, l, j).to_string()]).collect::<Vec<_>>()
    });
    csv_string(&["u", "x", "value"], rows)
}

/// Value, control and both flows as binary fields with sidecars, plus
/// `diagnostics.json` and CSV slices at the first and last nodes.
pub fn write_equilibrium(dir: &Path, field: &EquilibriumField) -> Result<()> {
    let time = field.problem.time_grid();
    let states = field.problem.states;
    write_field(dir, "value", &field.value, time, states)?;
    write_field(dir, "control", &field.control, time, states)?;
    for (name, flow) in [("flow", &field.flow), ("induced", &field.induced)] {
        let f = GridField { nodes: flow.nodes, labels: flow.labels, states: flow.states, data: flow.mass.clone() };
        write_field(dir, name, &f, time, states)?;
    }
    let last = time.steps;
    fs::write(dir.join("control_t0.csv"), field_slice_csv(&field.control, 0, &states))?;
    fs::write(dir.join("control_tT.csv"), field_slice_csv(&field.control, last, &states))?;
    fs::write(dir.join("value_t0.csv"), field_slice_csv(&field.value, 0, &states))?;
    let diag = serde_json::json!({
        "converged": field.converged,
        "iterations": field.iterations,
        "gaps": field.gaps,
        "substeps": field.substeps,
        "boundary_mass": field.boundary_mass,
        "psd": field.psd,
        "problem": field.problem,
    });
    fs::write(dir.join("diagnostics.json"), serde_json::to_string_pretty(&diag)?)?;
    Ok(())
}

/// `u,M,psi` table.
pub fn target_csv(sol: &LqSolution) -> String {
    let mids = sol.labels.midpoints();
    csv_string(
        &["u", "M", "psi"],
        mids.iter().zip(&sol.target).zip(&sol.psi).map(|((u, m), p)| vec![u.to_string(), m.to_string(), p.to_string()]),
    )
}

/// `u,katz` table.
pub fn centrality_csv(grid: &LabelGrid, katz: &[f64]) -> String {
    csv_string(&["u", "katz"], grid.midpoints().iter().zip(katz).map(|(u, k)| vec![u.to_string(), k.to_string()]))
}

pub fn residual_csv(report: &McKeanVlasovReport) -> String {
    csv_string(
        &["u", "target", "estimate", "stderr", "residual"],
        report.rows.iter().map(|r| {
            vec![r.u.to_string(), r.target.to_string(), r.estimate.to_string(), r.stderr.to_string(), r.residual.to_string()]
        }),
    )
}

/// Player rows followed by one aggregate row per population size; the
/// `row` column is `player`, `mean` or `max`.
pub fn gap_report_csv(reports: &[NashGapReport]) -> String {
    let mut rows = Vec::new();
    for r in reports {
        for p in &r.players {
            rows.push(vec![
                "player".into(),
                r.n.to_string(),
                p.trial.to_string(),
                p.player.to_string(),
                p.label.to_string(),
                p.eps_hat.to_string(),
                p.stderr.to_string(),
            ]);
        }
        let agg = match r.aggregate {
            crate::nashgap::Aggregate::Mean => ("mean", r.mean),
            crate::nashgap::Aggregate::Max => ("max", r.max),
        };
        rows.push(vec![agg.0.into(), r.n.to_string(), String::new(), String::new(), String::new(), agg.1.mean.to_string(), agg.1.stderr.to_string()]);
    }
    csv_string(&["row", "n", "trial", "i", "label", "eps_hat", "stderr"], rows)
}

pub fn emp_csv(rows: &[EmpRow]) -> String {
    csv_string(
        &["n", "trials", "distance", "stderr"],
        rows.iter().map(|r| vec![r.n.to_string(), r.trials.to_string(), r.distance.mean.to_string(), r.distance.stderr.to_string()]),
    )
}
