//! CSV and JSON artifacts. Every writer goes through a temporary file in the
//! target directory and renames it into place, so a failed write leaves
//! nothing behind.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::diffusion::ResidualField;
use crate::error::{Error, Result};
use crate::mesh::{SpaceMesh, TimeMesh};
use crate::model::ControlGrid;
use crate::sim::{MCEstimate, Trajectory};
use crate::surface::{PolicySurface, SurfaceKind, ValueSurface};

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits.
#[inline]
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` to `path` atomically, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::config(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::config(format!("csv encoding failed: {e}")))
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("json encoding failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `t,x,value,control`, one row per node, time-major. `control` is the control
/// value applied on the step starting at `t`, empty on the terminal slice or
/// when no policy is given.
pub fn write_surface_csv(
    surface: &ValueSurface,
    policy: Option<(&PolicySurface, &ControlGrid)>,
    path: &Path,
) -> Result<()> {
    if surface.values().is_empty() {
        return Err(Error::config(
            "refusing to write a surface with an empty mesh",
        ));
    }
    if let Some((p, _)) = policy {
        if p.time != surface.time || p.space != surface.space {
            return Err(Error::config("policy and surface meshes differ"));
        }
    }
    let n_steps = surface.time.n_steps;
    let rows = (0..surface.n_slices()).flat_map(|k| {
        let t = fmt17(surface.time.t(k));
        (0..surface.space.n).map(move |i| {
            let control = match policy {
                Some((p, grid)) if k < n_steps => fmt17(grid.value(p.index(k, i))),
                _ => String::new(),
            };
            vec![
                t.clone(),
                fmt17(surface.space.x(i)),
                fmt17(surface.value(k, i)),
                control,
            ]
        })
    });
    write_atomic(path, &csv_bytes(&["t", "x", "value", "control"], rows)?)
}

/// Mesh metadata and the listed slices (default: first and terminal).
pub fn surface_summary(surface: &ValueSurface, slices: &[usize]) -> Value {
    let default = [0, surface.time.n_steps];
    let picks = if slices.is_empty() {
        &default[..]
    } else {
        slices
    };
    let selected: Vec<Value> = picks
        .iter()
        .filter(|&&k| k < surface.n_slices())
        .map(|&k| {
            json!({
                "k": k,
                "t": surface.time.t(k),
                "values": surface.slice(k),
            })
        })
        .collect();
    json!({
        "schema": SCHEMA_VERSION,
        "kind": surface.kind.as_str(),
        "epsilon": surface.epsilon,
        "time": { "T": surface.time.horizon, "dt": surface.time.dt, "n_steps": surface.time.n_steps },
        "space": { "x_lo": surface.space.x_lo, "dx": surface.space.dx, "n": surface.space.n },
        "sup_norm": surface.sup_norm(),
        "initial_sup_norm": surface.initial().iter().fold(0.0f64, |m, v| m.max(v.abs())),
        "slices": selected,
    })
}

pub fn write_surface_summary(surface: &ValueSurface, slices: &[usize], path: &Path) -> Result<()> {
    if surface.values().is_empty() {
        return Err(Error::config(
            "refusing to write a surface with an empty mesh",
        ));
    }
    write_json(&surface_summary(surface, slices), path)
}

/// `t,x,a,value` over the computed slices and every interior node.
pub fn write_residual_csv(field: &ResidualField, path: &Path) -> Result<()> {
    if field.slices.is_empty() || field.values().is_empty() {
        return Err(Error::config("refusing to write an empty residual field"));
    }
    let n = field.space.n;
    let rows = field.slices.iter().enumerate().flat_map(|(row, &k)| {
        let t = fmt17(field.time.t(k));
        (1..n - 1).flat_map(move |i| {
            let t = t.clone();
            let x = fmt17(field.space.x(i));
            field.controls.iter().enumerate().map(move |(m, &a)| {
                vec![
                    t.clone(),
                    x.clone(),
                    fmt17(a),
                    fmt17(field.value(row, i, m)),
                ]
            })
        })
    });
    write_atomic(path, &csv_bytes(&["t", "x", "a", "value"], rows)?)
}

/// `tau,x_pre,a,x_post,gain_cum`, one row per jump.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let rows = traj.events.iter().map(|e| {
        vec![
            fmt17(e.tau),
            fmt17(e.x_pre),
            fmt17(e.a),
            fmt17(e.x_post),
            fmt17(e.gain_cum),
        ]
    });
    write_atomic(
        path,
        &csv_bytes(&["tau", "x_pre", "a", "x_post", "gain_cum"], rows)?,
    )
}

pub fn estimate_json(est: &MCEstimate) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "mean": est.mean,
        "stderr": est.stderr,
        "n_paths": est.n_paths,
        "seed": est.seed,
        "epsilon": est.epsilon,
        "x0": est.x0,
        "t0": est.t0,
    })
}

pub fn write_estimate_json(est: &MCEstimate, path: &Path) -> Result<()> {
    write_json(&estimate_json(est), path)
}

/// Parsed contents of a surface CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTable {
    pub time: TimeMesh,
    pub space: SpaceMesh,
    pub values: Vec<f64>,
    /// Control value per row; `None` where the column is empty.
    pub controls: Vec<Option<f64>>,
}

impl SurfaceTable {
    pub fn into_surface(self, kind: SurfaceKind, epsilon: Option<f64>) -> Result<ValueSurface> {
        ValueSurface::from_values(kind, epsilon, self.time, self.space, self.values)
    }

    /// Policy rows mapped back onto `grid` (nearest grid value).
    pub fn policy(&self, grid: &ControlGrid) -> Result<PolicySurface> {
        let n = self.space.n;
        let rows = self.time.n_steps * n;
        let step = if grid.len() > 1 {
            grid.value(1) - grid.value(0)
        } else {
            1.0
        };
        let mut indices = Vec::with_capacity(rows);
        for (row, c) in self.controls[..rows].iter().enumerate() {
            let a = c.ok_or_else(|| {
                Error::config(format!("policy control missing on row {}", row + 2))
            })?;
            let m = ((a - grid.value(0)) / step).round();
            if !(m >= 0.0 && (m as usize) < grid.len()) || (grid.value(m as usize) - a).abs() > 1e-9
            {
                return Err(Error::config(format!(
                    "control {a} on row {} is not on the control grid",
                    row + 2
                )));
            }
            indices.push(m as u16);
        }
        PolicySurface::from_indices(self.time, self.space, indices)
    }
}

fn parse_f64(path: &Path, field: &str, row: usize, col: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        path: path.into(),
        detail: format!("row {row}, column {col}: {e}"),
    })
}

/// Reads a `t,x,value,control` file and rebuilds its meshes.
pub fn read_surface_csv(path: &Path) -> Result<SurfaceTable> {
    let parse_err = |detail: String| Error::Parse {
        path: path.into(),
        detail,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(format!("{other:?}")),
    })?;
    let header = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "x", "value", "control"] {
        return Err(parse_err(format!("unexpected header {:?}", header)));
    }
    let (mut ts, mut xs, mut values, mut controls) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let row = r + 2;
        ts.push(parse_f64(path, &rec[0], row, "t")?);
        xs.push(parse_f64(path, &rec[1], row, "x")?);
        values.push(parse_f64(path, &rec[2], row, "value")?);
        controls.push(if rec[3].trim().is_empty() {
            None
        } else {
            Some(parse_f64(path, &rec[3], row, "control")?)
        });
    }
    if values.is_empty() {
        return Err(parse_err("no data rows".into()));
    }
    let n = xs
        .iter()
        .skip(1)
        .position(|&x| x == xs[0])
        .map_or(xs.len(), |p| p + 1);
    if n < 3 || values.len() % n != 0 {
        return Err(parse_err(format!(
            "{} rows do not form a grid of {n} nodes",
            values.len()
        )));
    }
    let n_slices = values.len() / n;
    if n_slices < 2 {
        return Err(parse_err("surface needs at least two time slices".into()));
    }
    let space = SpaceMesh::new(xs[0], (xs[n - 1] - xs[0]) / (n - 1) as f64, n)?;
    let horizon = ts[values.len() - 1];
    let time = TimeMesh::covering(horizon, ts[n] - ts[0])?;
    if time.n_slices() != n_slices {
        return Err(parse_err(format!(
            "time column gives {n_slices} slices but step {} over {horizon} needs {}",
            ts[n] - ts[0],
            time.n_slices()
        )));
    }
    Ok(SurfaceTable {
        time,
        space,
        values,
        controls,
    })
}
