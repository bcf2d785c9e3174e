//! Weighted area and volume, admissible variations, and finite-difference
//! checks of the first and second variation formulas.
//!
//! A variation is given by an ambient vector field `X` (optionally cut off by
//! a bump in parameter space). The deformed surfaces are again immersions,
//! `phi_s = p + s X(p)` corrected near the boundary so that `phi_s(dSigma)`
//! stays on `{Phi = 0}`; their geometry is evaluated exactly like the base.

mod family;
mod field;

#[cfg(test)]
mod tests;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

pub use crate::quadrature::{EdgeRule, Quadrature, TriangleRule};
pub use family::{
    first_variation_fd, second_variation_fd, volume_variation_fd, DeformedFamily, FdEstimate,
    ADMISSIBILITY_TOL,
};
pub use field::{Cutoff, ScalarJetFn, VariationField};

use crate::ambient::{AmbientSpace, BoundaryFrame};
use crate::error::{Result, WstabError};
use crate::jet::{partial, values, Jet2};
use crate::surface::{edge_point, ExtrinsicData, Immersion, SurfaceMesh};

/// `A_f = int f da` by the given triangle rule.
pub fn weighted_area(
    space: &AmbientSpace,
    imm: &Immersion,
    mesh: &SurfaceMesh,
    quad: Quadrature,
) -> Result<f64> {
    let rule = quad.rule.points();
    let parts = mesh
        .triangles
        .par_iter()
        .map(|tri| {
            rule.iter()
                .map(|(xi, w)| {
                    let p = imm.triangle_jets(tri, xi);
                    let area = partial(&p, 0).cross(&partial(&p, 1)).norm();
                    let f = space.f(&values(&p));
                    if !f.is_finite() {
                        return Err(WstabError::Numerical(format!(
                            "density is not finite at {:?}",
                            values(&p).as_slice()
                        )));
                    }
                    Ok(w * area * f)
                })
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// Value of `X` (with its cutoff) at the reference point `xi` of a triangle.
fn field_jet(
    imm: &Immersion,
    mesh: &SurfaceMesh,
    field: &VariationField,
    tri: usize,
    xi: &nalgebra::Vector2<f64>,
) -> [Jet2; 3] {
    let t = &mesh.triangles[tri];
    let uv = t.param_jets(xi);
    let p = (imm.patches[t.patch].chart)(&uv);
    field.eval(t.patch, &uv, &p)
}

fn field_value(
    imm: &Immersion,
    mesh: &SurfaceMesh,
    field: &VariationField,
    tri: usize,
    xi: &nalgebra::Vector2<f64>,
) -> Vector3<f64> {
    values(&field_jet(imm, mesh, field, tri, xi))
}

/// Largest `|<X, xi>|` over boundary vertices and boundary quadrature points.
pub fn admissibility_residual(
    space: &AmbientSpace,
    imm: &Immersion,
    mesh: &SurfaceMesh,
    field: &VariationField,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for e in &mesh.boundary_edges {
        for tau in [0.0, 0.5, 1.0] {
            let xi = edge_point(e.local, tau);
            let x = field_value(imm, mesh, field, e.triangle, &xi);
            let p = imm.triangle_jets(&mesh.triangles[e.triangle], &xi);
            let frame = BoundaryFrame::at(space, &values(&p))?;
            worst = worst.max(x.dot(&frame.xi).abs());
        }
    }
    Ok(worst)
}

/// Normal speed `u = <X, N>` at every interior quadrature point of `data`.
pub fn normal_speeds(
    imm: &Immersion,
    mesh: &SurfaceMesh,
    data: &ExtrinsicData,
    field: &VariationField,
) -> Vec<f64> {
    data.interior
        .par_iter()
        .map(|q| field_value(imm, mesh, field, q.triangle, &q.xi).dot(&q.point.normal))
        .collect()
}

/// Right-hand side of the first variation of weighted area:
/// `-int H_f u da_f - int <X, nu> dl_f` with `nu` the inner conormal.
pub fn first_variation_formula(
    imm: &Immersion,
    mesh: &SurfaceMesh,
    data: &ExtrinsicData,
    field: &VariationField,
) -> f64 {
    let u = normal_speeds(imm, mesh, data, field);
    let interior: f64 = data
        .interior
        .iter()
        .zip(&u)
        .map(|(q, u)| -q.point.f_mean_curvature * u * q.point.f * q.da)
        .sum();
    let boundary: f64 = data
        .boundary
        .iter()
        .map(|b| {
            let e = &mesh.boundary_edges[b.edge];
            let x = field_value(imm, mesh, field, e.triangle, &b.xi);
            -x.dot(&b.conormal) * b.f * b.dl
        })
        .sum();
    interior + boundary
}

/// `V_f'(0) = int u da_f`.
pub fn volume_first_variation(
    imm: &Immersion,
    mesh: &SurfaceMesh,
    data: &ExtrinsicData,
    field: &VariationField,
) -> f64 {
    let u = normal_speeds(imm, mesh, data, field);
    data.interior
        .iter()
        .zip(&u)
        .map(|(q, u)| u * q.point.f * q.da)
        .sum()
}

/// Terms of the weighted divergence theorem
/// `int div_{Sigma,f} X da_f + int H_f <X, N> da_f + int <X, nu> dl_f = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DivergenceReport {
    pub divergence: f64,
    pub normal: f64,
    pub boundary: f64,
    pub residual: f64,
}

/// Evaluates the weighted divergence theorem for `X`, with
/// `div_{Sigma,f} X = div_Sigma X + <grad psi, X>` computed from the chart
/// and field jets.
pub fn divergence_theorem_residual(
    imm: &Immersion,
    mesh: &SurfaceMesh,
    data: &ExtrinsicData,
    field: &VariationField,
) -> DivergenceReport {
    let (divergence, normal) = data
        .interior
        .par_iter()
        .map(|q| {
            let x = field_jet(imm, mesh, field, q.triangle, &q.xi);
            let p = &q.point;
            let mut div = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    div += p.metric_inv[(a, b)] * partial(&x, a).dot(&p.tangents[b]);
                }
            }
            let xv = values(&x);
            let w = p.f * q.da;
            (
                (div + p.grad_psi.dot(&xv)) * w,
                p.f_mean_curvature * xv.dot(&p.normal) * w,
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let boundary: f64 = data
        .boundary
        .iter()
        .map(|b| {
            let e = &mesh.boundary_edges[b.edge];
            field_value(imm, mesh, field, e.triangle, &b.xi).dot(&b.conormal) * b.f * b.dl
        })
        .sum();
    DivergenceReport {
        divergence,
        normal,
        boundary,
        residual: (divergence + normal + boundary).abs(),
    }
}
