//! Pointwise extrinsic and intrinsic geometry from exact chart derivatives.
//!
//! Conventions: `b(X, Y) = <D_X Y, N>`, `H = tr(g^-1 b) / 2`, so a round
//! sphere of radius `r` with outward normal has `H = -1/r`;
//! `H_f = 2H - <grad psi, N>`. Along the boundary, `nu` is the inner
//! conormal (tangent to the surface, pointing into it) and the geodesic
//! curvature is `h = <c'', nu> / |c'|^2`, so that Gauss-Bonnet reads
//! `int K + int h = 2 pi chi`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use super::{edge_direction, edge_point, Immersion, SurfaceMesh, Triangle, REF_CORNERS};
use crate::ambient::{perelman_unchecked, ricci_f, AmbientSpace, BoundaryFrame};
use crate::error::{Result, WstabError};
use crate::jet::{partial, partial2, values, Jet2};
use crate::quadrature::Quadrature;

/// Geometry of the surface at one point, computed from a chart jet.
#[derive(Debug, Clone, Serialize)]
pub struct SurfacePoint {
    pub position: Vector3<f64>,
    /// `d p / d x_a` in the local coordinates of the jet.
    pub tangents: [Vector3<f64>; 2],
    /// `d^2 p / d x_a d x_b`.
    pub second: [[Vector3<f64>; 2]; 2],
    pub metric: Matrix2<f64>,
    pub metric_inv: Matrix2<f64>,
    /// `sqrt(det g)`.
    pub area_element: f64,
    pub normal: Vector3<f64>,
    /// Second fundamental form in local coordinates.
    pub b: Matrix2<f64>,
    /// Shape operator `g^-1 b`.
    pub shape: Matrix2<f64>,
    pub mean_curvature: f64,
    /// `|sigma|^2 = tr((g^-1 b)^2)`.
    pub sigma_sq: f64,
    /// Intrinsic Gauss curvature (Gauss equation).
    pub gauss_curvature: f64,
    pub psi: f64,
    pub f: f64,
    pub grad_psi: Vector3<f64>,
    pub hess_psi: Matrix3<f64>,
    pub f_mean_curvature: f64,
    /// `Ric_f(N, N)`.
    pub ricci_f_nn: f64,
    /// `Ric_f(N, N) + |sigma|^2`.
    pub potential: f64,
    /// Tangential part of `grad psi`.
    pub grad_sigma_psi: Vector3<f64>,
    /// Laplace-Beltrami of `psi` restricted to the surface.
    pub laplacian_sigma_psi: f64,
    pub perelman_scalar: f64,
}

impl SurfacePoint {
    /// `normal_sign` multiplies `d_1 p x d_2 p` to give the unit normal.
    pub fn from_jet(space: &AmbientSpace, p: &[Jet2; 3], normal_sign: f64) -> Result<SurfacePoint> {
        let position = values(p);
        let t = [partial(p, 0), partial(p, 1)];
        let second = [
            [partial2(p, 0, 0), partial2(p, 0, 1)],
            [partial2(p, 1, 0), partial2(p, 1, 1)],
        ];
        let cross = t[0].cross(&t[1]);
        let scale = t[0].norm() * t[1].norm();
        if !(cross.norm() > 1e-12 * scale) || !(scale > 0.0) {
            return Err(WstabError::Immersion(format!(
                "chart Jacobian is rank deficient at {:?}",
                position.as_slice()
            )));
        }
        let normal = normal_sign * cross.normalize();
        let metric = Matrix2::from_fn(|a, c| t[a].dot(&t[c]));
        let det = metric.determinant();
        let metric_inv = Matrix2::new(
            metric[(1, 1)],
            -metric[(0, 1)],
            -metric[(1, 0)],
            metric[(0, 0)],
        ) / det;
        let b = Matrix2::from_fn(|a, c| second[a][c].dot(&normal));
        let shape = metric_inv * b;
        let mean_curvature = shape.trace() / 2.0;
        let sigma_sq = (shape * shape).trace();
        let ambient_sectional = space.scalar(&position) / 2.0 - space.ricci(&position, &normal);
        let gauss_curvature = shape.determinant() + ambient_sectional;

        let jet = space.psi_jet(&position);
        let grad_psi = jet.grad;
        let hess_psi = jet.hess;
        let dpsi = Vector2::new(grad_psi.dot(&t[0]), grad_psi.dot(&t[1]));
        let grad_sigma_psi = {
            let c = metric_inv * dpsi;
            t[0] * c.x + t[1] * c.y
        };
        // Intrinsic Laplacian: g^ab (d_a d_b psi - Gamma^c_ab d_c psi).
        let mut laplacian_sigma_psi = 0.0;
        for a in 0..2 {
            for c in 0..2 {
                let d2 = t[a].dot(&(hess_psi * t[c])) + grad_psi.dot(&second[a][c]);
                let lower = Vector2::new(second[a][c].dot(&t[0]), second[a][c].dot(&t[1]));
                let christoffel = metric_inv * lower;
                laplacian_sigma_psi += metric_inv[(a, c)] * (d2 - christoffel.dot(&dpsi));
            }
        }
        let ricci_f_nn = ricci_f(space, &position, &normal);
        Ok(SurfacePoint {
            position,
            tangents: t,
            second,
            metric,
            metric_inv,
            area_element: det.sqrt(),
            normal,
            b,
            shape,
            mean_curvature,
            sigma_sq,
            gauss_curvature,
            psi: jet.value,
            f: jet.value.exp(),
            grad_psi,
            hess_psi,
            f_mean_curvature: 2.0 * mean_curvature - grad_psi.dot(&normal),
            ricci_f_nn,
            potential: ricci_f_nn + sigma_sq,
            grad_sigma_psi,
            laplacian_sigma_psi,
            perelman_scalar: perelman_unchecked(space, &position),
        })
    }

    /// Surface gradient of a function with local differential `dphi`.
    pub fn surface_gradient(&self, dphi: &Vector2<f64>) -> Vector3<f64> {
        let c = self.metric_inv * dphi;
        self.tangents[0] * c.x + self.tangents[1] * c.y
    }
}

/// Interior quadrature point.
#[derive(Debug, Clone, Serialize)]
pub struct QuadPoint {
    pub triangle: usize,
    pub qp: usize,
    /// Reference coordinates.
    pub xi: Vector2<f64>,
    /// Quadrature weight times area element: the `da` of this point.
    pub da: f64,
    pub point: SurfacePoint,
}

/// Quadrature point on a boundary edge.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryPoint {
    /// Index into `SurfaceMesh::boundary_edges`.
    pub edge: usize,
    pub qp: usize,
    /// Reference coordinates inside the edge's triangle.
    pub xi: Vector2<f64>,
    /// `dl` of this point.
    pub dl: f64,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub tangent: Vector3<f64>,
    /// Inner conormal.
    pub conormal: Vector3<f64>,
    /// Inner normal of the ambient boundary.
    pub boundary_normal: Vector3<f64>,
    /// `<N, xi>`; zero at orthogonal contact.
    pub contact: f64,
    /// `II(N, N)` of the ambient boundary.
    pub ii_nn: f64,
    /// Geodesic curvature of the boundary curve in the surface.
    pub geodesic_curvature: f64,
    /// Mean curvature of the ambient boundary, `tr II / 2`.
    pub boundary_mean_curvature: f64,
    /// `tr II - <grad psi, xi>`.
    pub boundary_f_mean_curvature: f64,
    pub psi: f64,
    pub f: f64,
    pub grad_psi: Vector3<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtrinsicData {
    pub quadrature: Quadrature,
    pub interior: Vec<QuadPoint>,
    pub boundary: Vec<BoundaryPoint>,
}

impl ExtrinsicData {
    /// Integral of `g(point) da` over the surface.
    pub fn integrate(&self, g: impl Fn(&SurfacePoint) -> f64 + Sync) -> f64 {
        self.interior.iter().map(|q| g(&q.point) * q.da).sum()
    }

    /// Integral of `g(point) dl` over the boundary.
    pub fn integrate_boundary(&self, g: impl Fn(&BoundaryPoint) -> f64) -> f64 {
        self.boundary.iter().map(|b| g(b) * b.dl).sum()
    }

    pub fn area(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    pub fn weighted_area(&self) -> f64 {
        self.integrate(|p| p.f)
    }
}

/// Evaluates the surface geometry at the quadrature points of every triangle
/// and boundary edge.
pub fn extrinsic_geometry(
    space: &AmbientSpace,
    imm: &Immersion,
    mesh: &SurfaceMesh,
    quad: Quadrature,
) -> Result<ExtrinsicData> {
    if space.dim() != 3 {
        return Err(WstabError::DimensionMismatch {
            expected: 3,
            got: space.dim(),
        });
    }
    if imm.patches.len() <= mesh.triangles.iter().map(|t| t.patch).max().unwrap_or(0) {
        return Err(WstabError::Input(
            "mesh does not belong to this immersion".into(),
        ));
    }
    let rule = quad.rule.points();
    let interior = mesh
        .triangles
        .par_iter()
        .enumerate()
        .map(|(ti, tri)| {
            let sign = imm.normal_sign(tri);
            rule.iter()
                .enumerate()
                .map(|(qp, (xi, w))| {
                    let point = SurfacePoint::from_jet(space, &imm.triangle_jets(tri, xi), sign)?;
                    Ok(QuadPoint {
                        triangle: ti,
                        qp,
                        xi: *xi,
                        da: w * point.area_element,
                        point,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let edge_rule = quad.boundary_rule.points();
    let boundary = mesh
        .boundary_edges
        .par_iter()
        .enumerate()
        .map(|(ei, edge)| {
            let tri = &mesh.triangles[edge.triangle];
            edge_rule
                .iter()
                .enumerate()
                .map(|(qp, &(tau, w))| boundary_point(space, imm, tri, edge.local, ei, qp, tau, w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(ExtrinsicData {
        quadrature: quad,
        interior,
        boundary,
    })
}

#[allow(clippy::too_many_arguments)]
fn boundary_point(
    space: &AmbientSpace,
    imm: &Immersion,
    tri: &Triangle,
    local: usize,
    edge: usize,
    qp: usize,
    tau: f64,
    weight: f64,
) -> Result<BoundaryPoint> {
    let xi = edge_point(local, tau);
    let dir = edge_direction(local);
    let p = imm.triangle_jets(tri, &xi);
    let position = values(&p);
    let t = [partial(&p, 0), partial(&p, 1)];
    let c1 = t[0] * dir.x + t[1] * dir.y;
    let mut c2 = Vector3::zeros();
    for a in 0..2 {
        for c in 0..2 {
            c2 += partial2(&p, a, c) * (dir[a] * dir[c]);
        }
    }
    let speed = c1.norm();
    let cross = t[0].cross(&t[1]);
    if !(speed > 0.0) || !(cross.norm() > 1e-12 * t[0].norm() * t[1].norm()) {
        return Err(WstabError::Immersion(format!(
            "chart Jacobian is rank deficient at boundary point {:?}",
            position.as_slice()
        )));
    }
    let normal = imm.normal_sign(tri) * cross.normalize();
    let tangent = c1 / speed;
    let opposite = Vector2::new(REF_CORNERS[local][0], REF_CORNERS[local][1]) - xi;
    let inward = t[0] * opposite.x + t[1] * opposite.y;
    let mut conormal = normal.cross(&tangent);
    if conormal.dot(&inward) < 0.0 {
        conormal = -conormal;
    }
    let frame = BoundaryFrame::at(space, &position)?;
    let trace = frame.trace(3);
    let jet = space.psi_jet(&position);
    Ok(BoundaryPoint {
        edge,
        qp,
        xi,
        dl: weight * speed,
        position,
        normal,
        tangent,
        conormal,
        boundary_normal: frame.xi,
        contact: normal.dot(&frame.xi),
        ii_nn: frame.second_fundamental(&normal, &normal),
        geodesic_curvature: c2.dot(&conormal) / (speed * speed),
        boundary_mean_curvature: trace / 2.0,
        boundary_f_mean_curvature: trace - jet.grad.dot(&frame.xi),
        psi: jet.value,
        f: jet.value.exp(),
        grad_psi: jet.grad,
    })
}

/// `<N, xi>` at every boundary quadrature point.
pub fn contact_angle(data: &ExtrinsicData) -> Vec<f64> {
    data.boundary.iter().map(|b| b.contact).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityTolerances {
    /// Relative tolerance on the spread (and mean) of `H_f`.
    pub h_rel: f64,
    pub angle: f64,
}

impl Default for StationarityTolerances {
    fn default() -> Self {
        StationarityTolerances {
            h_rel: 1e-6,
            angle: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityVerdict {
    /// `H_f = 0` and orthogonal contact.
    pub strong: bool,
    /// `H_f` constant and orthogonal contact.
    pub volume_constrained: bool,
    /// Area-weighted mean of `H_f`.
    pub h_f_mean: f64,
    /// `max H_f - min H_f` over quadrature points.
    pub h_f_spread: f64,
    pub max_contact: f64,
}

pub fn stationarity_verdict(
    data: &ExtrinsicData,
    tol: StationarityTolerances,
) -> StationarityVerdict {
    let area = data.area();
    let mean = data.integrate(|p| p.f_mean_curvature) / area;
    let (lo, hi) = data
        .interior
        .iter()
        .map(|q| q.point.f_mean_curvature)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| {
            (lo.min(h), hi.max(h))
        });
    let spread = hi - lo;
    let max_contact = data
        .boundary
        .iter()
        .map(|b| b.contact.abs())
        .fold(0.0, f64::max);
    let tol_h = tol.h_rel * (1.0 + mean.abs());
    let volume_constrained = spread <= tol_h && max_contact <= tol.angle;
    StationarityVerdict {
        strong: volume_constrained && mean.abs() <= tol_h,
        volume_constrained,
        h_f_mean: mean,
        h_f_spread: spread,
        max_contact,
    }
}
