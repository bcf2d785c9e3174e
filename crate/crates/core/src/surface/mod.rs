//! Free-boundary surfaces: immersions, meshes and pointwise geometry.
//!
//! An [`Immersion`] is a set of chart patches over disks or rectangles in
//! parameter space. Charts are evaluated on jets, so normals, second
//! fundamental forms and every derived curvature come from exact chart
//! derivatives; the mesh is only used to place quadrature points and to carry
//! the finite element basis.

mod builtin;
mod geometry;
pub mod io;
mod mesh;

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};

use crate::jet::{values, Jet2};

pub use builtin::SurfaceSpec;
pub use geometry::{
    contact_angle, extrinsic_geometry, stationarity_verdict, BoundaryPoint, ExtrinsicData,
    QuadPoint, StationarityTolerances, StationarityVerdict, SurfacePoint,
};
pub use mesh::{
    bandwidth, edge_direction, edge_point, euler_characteristic, mesh_from_immersion,
    reverse_cuthill_mckee, BoundaryEdge, ElementMap, MeshVertex, SurfaceMesh, Topology, Triangle,
    REF_CORNERS,
};

/// Chart from parameter jets `(u, v)` to an ambient point.
pub type ChartFn = Arc<dyn Fn(&[Jet2; 2]) -> [Jet2; 3] + Send + Sync>;
/// Ambient vector field evaluated on a jet-valued point.
pub type JetVectorFn = Arc<dyn Fn(&[Jet2; 3]) -> [Jet2; 3] + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamDomain {
    /// Disk of the given radius centred at the origin; its circle is the
    /// boundary arc.
    Disk { radius: f64 },
    /// Rectangle `u[0]..u[1] x v[0]..v[1]`; non-periodic sides are boundary
    /// arcs.
    Rect {
        u: [f64; 2],
        v: [f64; 2],
        periodic_u: bool,
        periodic_v: bool,
    },
}

#[derive(Clone)]
pub struct Patch {
    pub chart: ChartFn,
    pub domain: ParamDomain,
    /// `+1` if `d_u x d_v` is the patch's contribution to the normal, `-1`
    /// to reverse it.
    pub orientation: f64,
}

/// Immersed surface given by one or more chart patches; patches are glued
/// where their images coincide.
#[derive(Clone)]
pub struct Immersion {
    pub name: String,
    pub patches: Vec<Patch>,
    /// Global sign applied to the unit normal; see the crate docs for the
    /// orientation convention.
    pub orientation_sign: f64,
    /// Ambient extension of the unit normal (with `orientation_sign`
    /// applied), used to build normal variation fields.
    pub normal_field: Option<JetVectorFn>,
}

impl std::fmt::Debug for Immersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Immersion")
            .field("name", &self.name)
            .field("patches", &self.patches.len())
            .field("orientation_sign", &self.orientation_sign)
            .finish_non_exhaustive()
    }
}

impl Immersion {
    pub fn single(name: impl Into<String>, chart: ChartFn, domain: ParamDomain) -> Self {
        Immersion {
            name: name.into(),
            patches: vec![Patch {
                chart,
                domain,
                orientation: 1.0,
            }],
            orientation_sign: 1.0,
            normal_field: None,
        }
    }

    pub fn with_orientation(mut self, sign: f64) -> Self {
        let flip = sign * self.orientation_sign;
        self.orientation_sign = sign;
        if flip < 0.0 {
            if let Some(n) = self.normal_field.take() {
                self.normal_field = Some(Arc::new(move |p| {
                    let v = n(p);
                    [-v[0], -v[1], -v[2]]
                }));
            }
        }
        self
    }

    /// Ambient position of a parameter point of a patch.
    pub fn position(&self, patch: usize, uv: &Vector2<f64>) -> Vector3<f64> {
        let p = (self.patches[patch].chart)(&[Jet2::constant(uv.x), Jet2::constant(uv.y)]);
        values(&p)
    }

    /// Chart evaluated on the reference point `xi` of a mesh triangle.
    pub fn triangle_jets(&self, tri: &Triangle, xi: &Vector2<f64>) -> [Jet2; 3] {
        (self.patches[tri.patch].chart)(&tri.param_jets(xi))
    }

    /// Sign multiplying `d_1 x d_2` for points of the given triangle.
    pub fn normal_sign(&self, tri: &Triangle) -> f64 {
        self.orientation_sign * self.patches[tri.patch].orientation
    }

    /// Human-readable description of the parameter-space boundary arcs.
    pub fn boundary_arcs(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, p) in self.patches.iter().enumerate() {
            match p.domain {
                ParamDomain::Disk { radius } => {
                    if self.patches.len() == 1 {
                        out.push(format!("patch {i}: circle |(u, v)| = {radius}"));
                    }
                }
                ParamDomain::Rect {
                    u,
                    v,
                    periodic_u,
                    periodic_v,
                } => {
                    if !periodic_u {
                        out.push(format!("patch {i}: u = {} and u = {}", u[0], u[1]));
                    }
                    if !periodic_v {
                        out.push(format!("patch {i}: v = {} and v = {}", v[0], v[1]));
                    }
                }
            }
        }
        out
    }
}
