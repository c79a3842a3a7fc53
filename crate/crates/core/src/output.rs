//! Legacy-VTK snapshots and the diagnostics table.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::mesh::QuadMesh;
use crate::simulation::{Diagnostics, Snapshot};
use crate::{Error, Result};

pub const DIAGNOSTICS_HEADER: &str =
    "time,energy,functional,defect,penetration,stationarity,theta_min,theta_max";

pub fn snapshot_file_name(step: usize) -> String {
    format!("snap_{step:06}.vtk")
}

/// Shortest round-trip representation; identical input gives identical bytes.
fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:?}");
}

pub fn render_snapshot(snap: &Snapshot, mesh: &QuadMesh) -> Result<String> {
    let n = mesh.num_nodes();
    let ne = mesh.num_elements();
    if snap.positions.len() != n || snap.theta.len() != n || snap.defect.len() != n || snap.gap.len() != n {
        return Err(Error::InvalidInput(format!(
            "snapshot arrays do not match the mesh with {n} nodes"
        )));
    }
    let mut s = String::with_capacity(64 * n + 32 * ne);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "bilayer step {} time {:?}", snap.step, snap.time);
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in &snap.positions {
        num(&mut s, p[0]);
        s.push(' ');
        num(&mut s, p[1]);
        s.push(' ');
        num(&mut s, p[2]);
        s.push('\n');
    }
    let _ = writeln!(s, "CELLS {ne} {}", 5 * ne);
    for el in mesh.elements() {
        let _ = writeln!(s, "4 {} {} {} {}", el[0], el[1], el[2], el[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        s.push_str("9\n");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, data) in [
        ("temperature", &snap.theta),
        ("isometry_defect", &snap.defect),
        ("gap", &snap.gap),
    ] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in data.iter() {
            num(&mut s, *v);
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn write_snapshot(snap: &Snapshot, mesh: &QuadMesh, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(snapshot_file_name(snap.step));
    fs::write(&path, render_snapshot(snap, mesh)?)?;
    Ok(path)
}

/// Legacy-VTK snapshot as read back: point coordinates and named scalars.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Reads the subset of the legacy format written by [`render_snapshot`].
pub fn parse_snapshot(text: &str) -> Result<VtkData> {
    let bad = |m: &str| Error::InvalidInput(format!("malformed snapshot: {m}"));
    let mut lines = text.lines().skip(4);
    let mut out = VtkData::default();
    let header = lines.next().ok_or_else(|| bad("missing POINTS"))?;
    let n: usize = header
        .strip_prefix("POINTS ")
        .and_then(|r| r.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("POINTS header"))?;
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| bad("truncated points"))?;
        let v: Vec<f64> = line.split_whitespace().filter_map(|w| w.parse().ok()).collect();
        if v.len() != 3 {
            return Err(bad("point line"));
        }
        out.points.push([v[0], v[1], v[2]]);
    }
    let header = lines.next().ok_or_else(|| bad("missing CELLS"))?;
    let ne: usize = header
        .strip_prefix("CELLS ")
        .and_then(|r| r.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("CELLS header"))?;
    for _ in 0..ne {
        let line = lines.next().ok_or_else(|| bad("truncated cells"))?;
        let v: Vec<usize> = line.split_whitespace().filter_map(|w| w.parse().ok()).collect();
        if v.is_empty() || v[0] + 1 != v.len() {
            return Err(bad("cell line"));
        }
        out.cells.push(v[1..].to_vec());
    }
    // CELL_TYPES block
    lines.next();
    for _ in 0..ne {
        lines.next();
    }
    lines.next(); // POINT_DATA
    while let Some(line) = lines.next() {
        let name = line
            .strip_prefix("SCALARS ")
            .and_then(|r| r.split_whitespace().next())
            .ok_or_else(|| bad("SCALARS header"))?
            .to_string();
        lines.next();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = lines
                .next()
                .and_then(|l| l.trim().parse().ok())
                .ok_or_else(|| bad("scalar value"))?;
            data.push(v);
        }
        out.scalars.push((name, data));
    }
    Ok(out)
}

pub fn render_diagnostics(diag: &Diagnostics) -> String {
    let mut s = String::new();
    s.push_str(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in &diag.rows {
        let cols = [
            r.time,
            r.energy,
            r.functional,
            r.defect,
            r.penetration,
            r.stationarity,
            r.theta_min,
            r.theta_max,
        ];
        for (i, v) in cols.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn write_diagnostics(diag: &Diagnostics, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(render_diagnostics(diag).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rectangle_mesh;
    use crate::plate::PlateField;
    use crate::simulation::DiagnosticsRow;

    fn flat_snapshot(mesh: &QuadMesh) -> Snapshot {
        let y = PlateField::flat(mesh);
        let n = mesh.num_nodes();
        Snapshot {
            step: 123,
            time: 0.5,
            positions: y.positions(),
            theta: vec![0.0; n],
            defect: vec![0.0; n],
            gap: vec![0.0; n],
        }
    }

    #[test]
    fn flat_snapshot_round_trips() {
        let mesh = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 2).unwrap();
        let snap = flat_snapshot(&mesh);
        let dir = tempfile::tempdir().unwrap();
        let path = write_snapshot(&snap, &mesh, dir.path()).unwrap();
        assert!(path.ends_with("snap_000123.vtk"));
        let data = parse_snapshot(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(data.points.len(), 25);
        assert_eq!(data.cells.len(), 16);
        assert!(data.points.iter().all(|p| p[2] == 0.0));
        assert!(data.scalar("temperature").unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(data.scalar("gap").unwrap().len(), 25);
        for (p, q) in data.points.iter().zip(mesh.nodes()) {
            assert_eq!([p[0], p[1]], *q);
        }
    }

    #[test]
    fn mismatched_snapshot_is_rejected() {
        let mesh = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 1).unwrap();
        let mut snap = flat_snapshot(&mesh);
        snap.theta.pop();
        assert!(render_snapshot(&snap, &mesh).is_err());
    }

    #[test]
    fn diagnostics_line_counts() {
        let mut d = Diagnostics::default();
        assert_eq!(render_diagnostics(&d), format!("{DIAGNOSTICS_HEADER}\n"));
        for k in 1..=3 {
            d.push(DiagnosticsRow {
                step: k,
                time: 0.1 * k as f64,
                energy: 1.0 / 3.0,
                functional: 0.0,
                defect: 0.0,
                penetration: 0.0,
                stationarity: 0.0,
                theta_min: 0.0,
                theta_max: 100.0,
            });
        }
        let text = render_diagnostics(&d);
        assert_eq!(text.lines().count(), 4);
        let second: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(second.len(), 8);
        assert_eq!(second[1], "3.3333333333333331e-1");
        assert_eq!(second[1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
