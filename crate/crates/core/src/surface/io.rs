//! Mesh and geometry files: ASCII OFF with a boundary-edge sidecar, and the
//! per-quadrature-point geometry CSV.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{ExtrinsicData, SurfaceMesh};
use crate::error::{Result, WstabError};

/// Plain triangle soup as read back from OFF.
#[derive(Debug, Clone, PartialEq)]
pub struct OffMesh {
    pub positions: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
}

pub fn off_string(mesh: &SurfaceMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF");
    let _ = writeln!(s, "{} {} 0", mesh.vertices.len(), mesh.triangles.len());
    for v in &mesh.vertices {
        let p = v.position;
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t.v[0], t.v[1], t.v[2]);
    }
    s
}

/// One boundary edge per line: `a b`.
pub fn boundary_sidecar_string(mesh: &SurfaceMesh) -> String {
    mesh.boundary_edges
        .iter()
        .map(|e| format!("{} {}\n", e.v[0], e.v[1]))
        .collect()
}

/// Writes `path` (OFF) and `path` with extension `.boundary` next to it.
pub fn write_off(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    std::fs::write(path, off_string(mesh))?;
    std::fs::write(
        path.with_extension("boundary"),
        boundary_sidecar_string(mesh),
    )?;
    Ok(())
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> WstabError {
    WstabError::Input(format!("OFF line {line}: {msg}"))
}

pub fn parse_off(off: &str, sidecar: Option<&str>) -> Result<OffMesh> {
    let mut lines = off
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "OFF")) => {}
        Some((i, other)) => {
            return Err(parse_err(i, format!("expected header OFF, got '{other}'")))
        }
        None => return Err(WstabError::Input("empty OFF file".into())),
    }
    let (i, counts) = lines
        .next()
        .ok_or_else(|| WstabError::Input("missing OFF counts".into()))?;
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|x| x.parse().map_err(|e| parse_err(i, e)))
        .collect::<Result<_>>()?;
    let [nv, nf, ..] = counts[..] else {
        return Err(parse_err(i, "expected vertex and face counts"));
    };
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (i, l) = lines
            .next()
            .ok_or_else(|| WstabError::Input("truncated vertex list".into()))?;
        let c: Vec<f64> = l
            .split_whitespace()
            .map(|x| x.parse().map_err(|e| parse_err(i, e)))
            .collect::<Result<_>>()?;
        if c.len() != 3 {
            return Err(parse_err(i, "expected 3 coordinates"));
        }
        positions.push(Vector3::new(c[0], c[1], c[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (i, l) = lines
            .next()
            .ok_or_else(|| WstabError::Input("truncated face list".into()))?;
        let c: Vec<usize> = l
            .split_whitespace()
            .map(|x| x.parse().map_err(|e| parse_err(i, e)))
            .collect::<Result<_>>()?;
        if c.len() != 4 || c[0] != 3 {
            return Err(parse_err(i, "only triangles are supported"));
        }
        if c[1..].iter().any(|&v| v >= nv) {
            return Err(parse_err(i, "vertex index out of range"));
        }
        triangles.push([c[1], c[2], c[3]]);
    }
    let mut boundary_edges = Vec::new();
    if let Some(side) = sidecar {
        for (i, l) in side
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let c: Vec<usize> = l
                .split_whitespace()
                .map(|x| x.parse().map_err(|e| parse_err(i + 1, e)))
                .collect::<Result<_>>()?;
            match c[..] {
                [a, b] if a < nv && b < nv => boundary_edges.push([a, b]),
                _ => return Err(parse_err(i + 1, "expected two vertex indices")),
            }
        }
    }
    Ok(OffMesh {
        positions,
        triangles,
        boundary_edges,
    })
}

/// Reads `path` and, if present, its `.boundary` sidecar.
pub fn read_off(path: &Path) -> Result<OffMesh> {
    let off = std::fs::read_to_string(path)?;
    let side = path.with_extension("boundary");
    let sidecar = if side.exists() {
        Some(std::fs::read_to_string(side)?)
    } else {
        None
    };
    parse_off(&off, sidecar.as_deref())
}

/// Per-quadrature-point geometry table.
pub fn geometry_csv(data: &ExtrinsicData) -> String {
    let mut s = String::from("tri_index,qp_index,x,y,z,H,H_f,K,Ric_f_NN\n");
    for q in &data.interior {
        let p = &q.point;
        let _ = writeln!(
            s,
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            q.triangle,
            q.qp,
            p.position.x,
            p.position.y,
            p.position.z,
            p.mean_curvature,
            p.f_mean_curvature,
            p.gauss_curvature,
            p.ricci_f_nn
        );
    }
    s
}
