//! Triangle meshes in parameter space.
//!
//! Every triangle carries its own parameter-space corners (so periodic seams
//! unwrap correctly) and an element map from the reference triangle. Edges
//! lying on a circular parameter boundary use a blended map whose boundary
//! edge follows the circle exactly, so the mesh boundary maps onto `dM` and
//! boundary integrals run along the true curve.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::TAU;

use nalgebra::{Vector2, Vector3};
use serde::Serialize;

use super::{Immersion, ParamDomain};
use crate::ambient::AmbientSpace;
use crate::error::{Result, WstabError};
use crate::jet::Jet2;

/// Map from the reference triangle `{(x1, x2) : x1, x2 >= 0, x1 + x2 <= 1}`
/// to parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ElementMap {
    Affine,
    /// Local edge 0 (corners 1 -> 2) follows the circle `center + radius
    /// (cos t, sin t)` from angle `t1` to `t2`.
    ArcEdge {
        center: [f64; 2],
        radius: f64,
        t1: f64,
        t2: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Triangle {
    pub v: [usize; 3],
    pub patch: usize,
    pub corners: [Vector2<f64>; 3],
    pub map: ElementMap,
}

impl Triangle {
    /// Parameter-space point (as jets in the reference coordinates) at the
    /// reference point `xi`.
    pub fn param_jets(&self, xi: &Vector2<f64>) -> [Jet2; 2] {
        let x1 = Jet2::var(xi.x, 0);
        let x2 = Jet2::var(xi.y, 1);
        let [c0, c1, c2] = self.corners;
        match self.map {
            ElementMap::Affine => {
                let a = c1 - c0;
                let b = c2 - c0;
                [x1 * a.x + x2 * b.x + c0.x, x1 * a.y + x2 * b.y + c0.y]
            }
            ElementMap::ArcEdge {
                center: _,
                radius,
                t1,
                t2,
            } => {
                // Affine map plus `x1 x2 q(t)` with `t = (1 + x2 - x1) / 2`,
                // where `x1 x2 q` equals arc minus chord on edge 0 and `q`
                // is analytic, so the map is smooth on the whole triangle.
                let a = c1 - c0;
                let b = c2 - c0;
                let t = (x2 - x1 + 1.0) * 0.5;
                let [qr, qi] = arc_chord_quotient(t, t2 - t1);
                let w = x1 * x2 * radius;
                let (s1, co1) = t1.sin_cos();
                [
                    x1 * a.x + x2 * b.x + c0.x + w * (qr * co1 - qi * s1),
                    x1 * a.y + x2 * b.y + c0.y + w * (qr * s1 + qi * co1),
                ]
            }
        }
    }

    /// Parameter-space point at the reference point `xi`.
    pub fn param_point(&self, xi: &Vector2<f64>) -> Vector2<f64> {
        let j = self.param_jets(xi);
        Vector2::new(j[0].v, j[1].v)
    }
}

/// `(e^{i t d} - 1 - t (e^{i d} - 1)) / (t (1 - t))` as (re, im), summed
/// from its power series in `d`.
fn arc_chord_quotient(t: Jet2, d: f64) -> [Jet2; 2] {
    let mut re = Jet2::constant(0.0);
    let mut im = Jet2::constant(0.0);
    // `poly` = 1 + t + ... + t^(n-2), `coef` = d^n / n!.
    let mut poly = Jet2::constant(1.0);
    let mut power = Jet2::constant(1.0);
    let mut coef = d * d / 2.0;
    for n in 2..80 {
        let term = poly * (-coef);
        match n % 4 {
            0 => re += term,
            1 => im += term,
            2 => re -= term,
            _ => im -= term,
        }
        coef *= d / (n + 1) as f64;
        if coef.abs() < 1e-18 {
            break;
        }
        power = power * t;
        poly += power;
    }
    [re, im]
}

/// Reference coordinates of the triangle corners.
pub const REF_CORNERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Reference point at parameter `tau` in `[0, 1]` along local edge `e`
/// (the edge opposite corner `e`, oriented from corner `e+1` to `e+2`).
pub fn edge_point(e: usize, tau: f64) -> Vector2<f64> {
    let a = REF_CORNERS[(e + 1) % 3];
    let b = REF_CORNERS[(e + 2) % 3];
    Vector2::new(a[0] + tau * (b[0] - a[0]), a[1] + tau * (b[1] - a[1]))
}

/// Direction `d xi / d tau` along local edge `e`.
pub fn edge_direction(e: usize) -> Vector2<f64> {
    let a = REF_CORNERS[(e + 1) % 3];
    let b = REF_CORNERS[(e + 2) % 3];
    Vector2::new(b[0] - a[0], b[1] - a[1])
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshVertex {
    pub patch: usize,
    pub param: Vector2<f64>,
    pub position: Vector3<f64>,
    pub on_boundary: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub triangle: usize,
    /// Local edge index inside `triangle` (opposite that corner).
    pub local: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler_characteristic: i64,
    pub boundary_components: usize,
    pub connected_components: usize,
    /// Genus of an orientable surface with this `chi` and boundary count.
    pub genus: i64,
}

impl Topology {
    pub fn from_triangles(n_vertices: usize, triangles: &[[usize; 3]]) -> Topology {
        let edges = edge_table(triangles);
        let boundary: Vec<[usize; 2]> = edges
            .iter()
            .filter(|(_, uses)| uses.len() == 1)
            .map(|(k, _)| *k)
            .collect();
        let chi = n_vertices as i64 - edges.len() as i64 + triangles.len() as i64;
        let mut uf = UnionFind::new(n_vertices);
        for [a, b] in &boundary {
            uf.union(*a, *b);
        }
        let mut roots: Vec<usize> = boundary.iter().map(|e| uf.find(e[0])).collect();
        roots.sort_unstable();
        roots.dedup();
        let m = roots.len();
        let mut uf = UnionFind::new(n_vertices);
        for t in triangles {
            uf.union(t[0], t[1]);
            uf.union(t[1], t[2]);
        }
        let mut comps: Vec<usize> = (0..n_vertices).map(|i| uf.find(i)).collect();
        comps.sort_unstable();
        comps.dedup();
        Topology {
            vertices: n_vertices,
            edges: edges.len(),
            faces: triangles.len(),
            euler_characteristic: chi,
            boundary_components: m,
            connected_components: comps.len(),
            genus: (2 - chi - m as i64) / 2,
        }
    }
}

/// Sorted vertex pair -> list of (triangle, local edge) uses.
fn edge_table(triangles: &[[usize; 3]]) -> BTreeMap<[usize; 2], Vec<(usize, usize)>> {
    let mut edges: BTreeMap<[usize; 2], Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, t) in triangles.iter().enumerate() {
        for e in 0..3 {
            let a = t[(e + 1) % 3];
            let b = t[(e + 2) % 3];
            edges.entry([a.min(b), a.max(b)]).or_default().push((ti, e));
        }
    }
    edges
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Triangulated surface with its parameter-space element data.
#[derive(Debug, Clone, Serialize)]
pub struct SurfaceMesh {
    pub vertices: Vec<MeshVertex>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub topology: Topology,
    pub resolution: usize,
    /// Smallest interior angle (degrees) of the straight ambient triangles
    /// spanned by the chart images of the element corners.
    pub min_angle: f64,
}

impl SurfaceMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn has_boundary(&self) -> bool {
        !self.boundary_edges.is_empty()
    }

    pub fn min_angle_degrees(&self) -> f64 {
        self.min_angle
    }

    /// Same elements with vertices re-evaluated on another immersion over the
    /// same parameter domains (boundary vertices are projected onto `dM`).
    pub fn reposition(&self, space: &AmbientSpace, imm: &Immersion) -> Result<SurfaceMesh> {
        let mut out = self.clone();
        for v in out.vertices.iter_mut() {
            v.position = imm.position(v.patch, &v.param);
        }
        check_against_ambient(space, imm, &mut out.vertices)?;
        Ok(out)
    }
}

/// Builds the mesh of an immersion at the given resolution (number of
/// subdivisions across each parameter domain).
///
/// Vertices are evaluated exactly on the chart, boundary vertices receive one
/// Newton step onto `{Phi = 0}`, and the numbering is reordered by reverse
/// Cuthill-McKee to keep sparse factorizations cheap.
pub fn mesh_from_immersion(
    space: &AmbientSpace,
    imm: &Immersion,
    resolution: usize,
) -> Result<SurfaceMesh> {
    if resolution < 4 {
        return Err(WstabError::Input(format!(
            "resolution must be at least 4, got {resolution}"
        )));
    }
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (pi, patch) in imm.patches.iter().enumerate() {
        let (verts, tris) = match patch.domain {
            ParamDomain::Disk { radius } => disk_patch(radius, (resolution / 2).max(2)),
            ParamDomain::Rect {
                u,
                v,
                periodic_u,
                periodic_v,
            } => rect_patch(u, v, periodic_u, periodic_v, resolution),
        };
        let offset = vertices.len();
        for param in verts {
            let position = imm.position(pi, &param);
            vertices.push(MeshVertex {
                patch: pi,
                param,
                position,
                on_boundary: false,
            });
        }
        for (v, corners, map) in tris {
            triangles.push(Triangle {
                v: [v[0] + offset, v[1] + offset, v[2] + offset],
                patch: pi,
                corners,
                map,
            });
        }
    }
    for (i, v) in vertices.iter().enumerate() {
        if !v.position.iter().all(|x| x.is_finite()) {
            return Err(WstabError::Immersion(format!(
                "chart is not finite at parameter {:?} (vertex {i})",
                v.param.as_slice()
            )));
        }
    }
    if imm.patches.len() > 1 {
        weld(&mut vertices, &mut triangles);
    }
    let perm = reverse_cuthill_mckee(vertices.len(), &triangles);
    let (mut vertices, triangles) = renumber(vertices, triangles, &perm);

    let plain: Vec<[usize; 3]> = triangles.iter().map(|t| t.v).collect();
    let topology = Topology::from_triangles(vertices.len(), &plain);
    let mut boundary_edges = Vec::new();
    for ([a, b], uses) in edge_table(&plain) {
        if uses.len() == 1 {
            let (ti, local) = uses[0];
            boundary_edges.push(BoundaryEdge {
                v: [a, b],
                triangle: ti,
                local,
            });
            vertices[a].on_boundary = true;
            vertices[b].on_boundary = true;
        } else if uses.len() > 2 {
            return Err(WstabError::Meshing(format!("non-manifold edge ({a}, {b})")));
        }
    }
    boundary_edges.sort_by_key(|e| (e.triangle, e.local));

    check_against_ambient(space, imm, &mut vertices)?;

    // Corner images are taken from each triangle's own parameter corners,
    // so triangles across a periodic seam are measured unwrapped.
    let min_angle = triangles
        .iter()
        .map(|t| {
            let p = t.corners.map(|c| imm.position(t.patch, &c));
            (0..3)
                .map(|k| {
                    let a = p[(k + 1) % 3] - p[k];
                    let b = p[(k + 2) % 3] - p[k];
                    a.angle(&b).to_degrees()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    if !(min_angle >= 5.0) {
        return Err(WstabError::Meshing(format!(
            "degenerate triangle: minimum angle {min_angle:.3} degrees"
        )));
    }
    Ok(SurfaceMesh {
        vertices,
        triangles,
        boundary_edges,
        topology,
        resolution,
        min_angle,
    })
}

fn check_against_ambient(
    space: &AmbientSpace,
    imm: &Immersion,
    vertices: &mut [MeshVertex],
) -> Result<()> {
    let Some(bd) = space.boundary() else {
        if vertices.iter().any(|v| v.on_boundary) {
            return Err(WstabError::Immersion(format!(
                "surface '{}' has boundary but the ambient space has none",
                imm.name
            )));
        }
        return Ok(());
    };
    for (i, v) in vertices.iter_mut().enumerate() {
        for (c, r) in &bd.excluded {
            if (v.position - c).norm() < *r {
                return Err(WstabError::Immersion(format!(
                    "vertex {i} at {:?} lies within {r} of a singular point of the boundary",
                    v.position.as_slice()
                )));
            }
        }
        let Some(j) = space.phi_jet(&v.position) else {
            continue;
        };
        if v.on_boundary {
            if j.value.abs() > 1e-8 {
                return Err(WstabError::Immersion(format!(
                    "boundary vertex {i} at {:?} is off the ambient boundary (Phi = {:e})",
                    v.position.as_slice(),
                    j.value
                )));
            }
            let g2 = j.grad.norm_squared();
            if !(g2 > 1e-24) {
                return Err(WstabError::SingularBoundary(format!(
                    "{:?}",
                    v.position.as_slice()
                )));
            }
            let projected = v.position - j.value * j.grad / g2;
            let residual = space.phi(&projected).unwrap_or(0.0);
            if !(residual.abs() <= 1e-10) {
                return Err(WstabError::Meshing(format!(
                    "projection of boundary vertex {i} did not converge (Phi = {residual:e})"
                )));
            }
            v.position = projected;
        } else if !(j.value > 0.0) {
            return Err(WstabError::Immersion(format!(
                "interior vertex {i} at {:?} is not in the interior of M (Phi = {:e})",
                v.position.as_slice(),
                j.value
            )));
        }
    }
    Ok(())
}

type PatchTriangle = ([usize; 3], [Vector2<f64>; 3], ElementMap);

fn orient(v: [usize; 3], c: [Vector2<f64>; 3], map: ElementMap) -> PatchTriangle {
    let a = c[1] - c[0];
    let b = c[2] - c[0];
    if a.x * b.y - a.y * b.x >= 0.0 {
        return (v, c, map);
    }
    let map = match map {
        ElementMap::ArcEdge {
            center,
            radius,
            t1,
            t2,
        } => ElementMap::ArcEdge {
            center,
            radius,
            t1: t2,
            t2: t1,
        },
        m => m,
    };
    ([v[0], v[2], v[1]], [c[0], c[2], c[1]], map)
}

/// Concentric rings with `6 i` vertices on ring `i`, zipped by angle.
fn disk_patch(radius: f64, rings: usize) -> (Vec<Vector2<f64>>, Vec<PatchTriangle>) {
    let mut verts = vec![Vector2::zeros()];
    let mut start = vec![0usize];
    for i in 1..=rings {
        start.push(verts.len());
        let n = 6 * i;
        let r = radius * i as f64 / rings as f64;
        for j in 0..n {
            let t = TAU * j as f64 / n as f64;
            verts.push(Vector2::new(r * t.cos(), r * t.sin()));
        }
    }
    let angle = |ring: usize, j: usize| TAU * j as f64 / (6 * ring) as f64;
    let point = |ring: usize, j: usize| {
        let r = radius * ring as f64 / rings as f64;
        let t = angle(ring, j);
        Vector2::new(r * t.cos(), r * t.sin())
    };
    let mut tris = Vec::new();
    for j in 0..6 {
        let v = [0, start[1] + j, start[1] + (j + 1) % 6];
        let c = [Vector2::zeros(), point(1, j), point(1, j + 1)];
        let map = if rings == 1 {
            ElementMap::ArcEdge {
                center: [0.0, 0.0],
                radius,
                t1: angle(1, j),
                t2: angle(1, j + 1),
            }
        } else {
            ElementMap::Affine
        };
        tris.push(orient(v, c, map));
    }
    for i in 2..=rings {
        let (na, nb) = (6 * (i - 1), 6 * i);
        let (mut a, mut b) = (0usize, 0usize);
        let outer = i == rings;
        while a < na || b < nb {
            let next_a = angle(i - 1, a + 1);
            let next_b = angle(i, b + 1);
            let advance_b = a >= na || (b < nb && next_b <= next_a + 1e-12);
            let va = start[i - 1] + a % na;
            let vb = start[i] + b % nb;
            if advance_b {
                let v = [va, vb, start[i] + (b + 1) % nb];
                let c = [point(i - 1, a), point(i, b), point(i, b + 1)];
                let map = if outer {
                    ElementMap::ArcEdge {
                        center: [0.0, 0.0],
                        radius,
                        t1: angle(i, b),
                        t2: angle(i, b + 1),
                    }
                } else {
                    ElementMap::Affine
                };
                tris.push(orient(v, c, map));
                b += 1;
            } else {
                let v = [va, vb, start[i - 1] + (a + 1) % na];
                let c = [point(i - 1, a), point(i, b), point(i - 1, a + 1)];
                tris.push(orient(v, c, ElementMap::Affine));
                a += 1;
            }
        }
    }
    (verts, tris)
}

/// Near-square grid on a rectangle, with the diagonal alternating in a
/// checkerboard pattern.
fn rect_patch(
    u: [f64; 2],
    v: [f64; 2],
    periodic_u: bool,
    periodic_v: bool,
    resolution: usize,
) -> (Vec<Vector2<f64>>, Vec<PatchTriangle>) {
    let (lu, lv) = (u[1] - u[0], v[1] - v[0]);
    let d = lu.max(lv);
    let nu = ((resolution as f64 * lu / d).round() as usize).max(3);
    let nv = ((resolution as f64 * lv / d).round() as usize).max(3);
    let cu = if periodic_u { nu } else { nu + 1 };
    let cv = if periodic_v { nv } else { nv + 1 };
    let (du, dv) = (lu / nu as f64, lv / nv as f64);
    let at = |i: usize, j: usize| Vector2::new(u[0] + i as f64 * du, v[0] + j as f64 * dv);
    let mut verts = Vec::with_capacity(cu * cv);
    for j in 0..cv {
        for i in 0..cu {
            verts.push(at(i, j));
        }
    }
    let idx = |i: usize, j: usize| (j % cv) * cu + (i % cu);
    let mut tris = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let (a, b, c, dd) = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1));
            let split: [[(usize, usize); 3]; 2] = if (i + j) % 2 == 0 {
                [[a, b, c], [a, c, dd]]
            } else {
                [[a, b, dd], [b, c, dd]]
            };
            for t in split {
                let v = [
                    idx(t[0].0, t[0].1),
                    idx(t[1].0, t[1].1),
                    idx(t[2].0, t[2].1),
                ];
                let corners = [at(t[0].0, t[0].1), at(t[1].0, t[1].1), at(t[2].0, t[2].1)];
                tris.push((v, corners, ElementMap::Affine));
            }
        }
    }
    (verts, tris)
}

/// Merges vertices of different patches that coincide in the ambient space.
fn weld(vertices: &mut Vec<MeshVertex>, triangles: &mut [Triangle]) {
    let n = vertices.len();
    let scale = vertices
        .iter()
        .map(|v| v.position.amax())
        .fold(1.0_f64, f64::max);
    let tol = 1e-9 * scale;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vertices[a].position.x.total_cmp(&vertices[b].position.x));
    let mut uf = UnionFind::new(n);
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if vertices[b].position.x - vertices[a].position.x > tol {
                break;
            }
            if vertices[b].patch != vertices[a].patch
                && (vertices[b].position - vertices[a].position).norm() <= tol
            {
                uf.union(a, b);
            }
        }
    }
    let mut new_index = vec![usize::MAX; n];
    let mut kept = Vec::new();
    for i in 0..n {
        let r = uf.find(i);
        if r == i {
            new_index[i] = kept.len();
            kept.push(vertices[i].clone());
        }
    }
    for i in 0..n {
        new_index[i] = new_index[uf.find(i)];
    }
    for t in triangles.iter_mut() {
        for v in t.v.iter_mut() {
            *v = new_index[*v];
        }
    }
    *vertices = kept;
}

/// Reverse Cuthill-McKee ordering of the vertex adjacency graph; returns
/// `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(n: usize, triangles: &[Triangle]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in triangles {
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    adj[t.v[a]].push(t.v[b]);
                }
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let degree = |i: usize| adj[i].len();
    let bfs_last = |start: usize, seen: &mut Vec<bool>| -> (usize, Vec<usize>) {
        let mut order = vec![start];
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(x) = q.pop_front() {
            let mut next: Vec<usize> = adj[x].iter().copied().filter(|&y| !seen[y]).collect();
            next.sort_by_key(|&y| (degree(y), y));
            for y in next {
                seen[y] = true;
                order.push(y);
                q.push_back(y);
            }
        }
        (*order.last().unwrap_or(&start), order)
    };
    let mut visited = vec![false; n];
    let mut out = Vec::with_capacity(n);
    loop {
        let Some(seed) = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree(i), i))
        else {
            break;
        };
        // Pseudo-peripheral start: the last vertex reached from a
        // minimum-degree seed.
        let mut scratch = visited.clone();
        let (far, _) = bfs_last(seed, &mut scratch);
        let (_, order) = bfs_last(far, &mut visited);
        out.extend(order);
    }
    out.reverse();
    out
}

fn renumber(
    vertices: Vec<MeshVertex>,
    mut triangles: Vec<Triangle>,
    perm: &[usize],
) -> (Vec<MeshVertex>, Vec<Triangle>) {
    let mut inv = vec![0usize; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let new_vertices = perm.iter().map(|&old| vertices[old].clone()).collect();
    for t in triangles.iter_mut() {
        for v in t.v.iter_mut() {
            *v = inv[*v];
        }
    }
    (new_vertices, triangles)
}

/// Euler characteristic `V - E + F` of the mesh.
pub fn euler_characteristic(mesh: &SurfaceMesh) -> i64 {
    mesh.topology.euler_characteristic
}

/// Bandwidth of the vertex adjacency (largest index gap across an edge).
pub fn bandwidth(mesh: &SurfaceMesh) -> usize {
    mesh.triangles
        .iter()
        .flat_map(|t| {
            [(0, 1), (1, 2), (0, 2)]
                .into_iter()
                .map(move |(a, b)| t.v[a].abs_diff(t.v[b]))
        })
        .max()
        .unwrap_or(0)
}
