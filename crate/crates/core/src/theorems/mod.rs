//! Checkers for the Gauss rearrangement identity, the stability/Euler
//! characteristic chain, area bounds under a Perelman scalar curvature
//! bound, equality-case (rigidity) flags and the monotonicity identity of
//! stationary foliations.
//!
//! Pointwise hypotheses are sampled at quadrature points; reports carry the
//! sampled minimum rather than a proof.


use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientSpace;
use crate::error::{Result, WstabError};
use crate::functionals::DeformedFamily;
use crate::quadrature::Quadrature;
use crate::stability::{strong_stability_verdict, SpectralResult, VERDICT_TOL};
use crate::surface::{
    euler_characteristic, stationarity_verdict, ExtrinsicData, StationarityTolerances, SurfaceMesh,
};

/// Default threshold of the rigidity flags and chain inequalities.
pub const RIGIDITY_TOL: f64 = 1e-6;
/// Pass threshold of [`gauss_rearrangement_residual`].
pub const GAUSS_REARRANGEMENT_TOL: f64 = 1e-5;
/// Relative pass threshold of the foliation identity.
pub const FOLIATION_TOL: f64 = 1e-3;

/// A sampled pointwise hypothesis. `sampled_min` is `None` when there was
/// nothing to sample (the hypothesis holds vacuously).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub sampled_min: Option<f64>,
    pub holds: bool,
}

impl Hypothesis {
    /// `min(samples) >= -tol`.
    pub fn sampled(name: &str, samples: impl IntoIterator<Item = f64>, tol: f64) -> Self {
        let min = samples
            .into_iter()
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
        Hypothesis {
            name: name.into(),
            sampled_min: min,
            holds: min.is_none_or(|m| m >= -tol),
        }
    }

    pub fn flag(name: &str, value: f64, holds: bool) -> Self {
        Hypothesis {
            name: name.into(),
            sampled_min: Some(value),
            holds,
        }
    }
}

/// Outcome of one inequality or identity check, `lhs <= rhs` (identities
/// report `slack = -|lhs - rhs|`). Nothing is asserted when a hypothesis
/// fails; such reports pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremCheck {
    pub name: String,
    pub hypotheses: Vec<Hypothesis>,
    pub asserted: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

fn require_surface_dimension(space: &AmbientSpace) -> Result<()> {
    if space.dim() != 3 {
        return Err(WstabError::Input(format!(
            "surface theorems need a 3-dimensional ambient space, got dimension {}",
            space.dim()
        )));
    }
    Ok(())
}

fn require_stationary(data: &ExtrinsicData) -> Result<()> {
    let v = stationarity_verdict(data, StationarityTolerances::default());
    if !v.volume_constrained {
        return Err(WstabError::Precondition(format!(
            "surface is not f-stationary (H_f spread {:e}, max contact {:e})",
            v.h_f_spread, v.max_contact
        )));
    }
    Ok(())
}

/// Largest pointwise defect of
/// `Ric_f(N,N) + |sigma|^2 = (S_f + H_f^2)/2 + (|sigma|^2 + |grad_Sigma psi|^2)/2 - K + Delta_Sigma psi`.
pub fn gauss_rearrangement_residual(space: &AmbientSpace, data: &ExtrinsicData) -> Result<f64> {
    require_surface_dimension(space)?;
    Ok(data
        .interior
        .iter()
        .map(|q| {
            let p = &q.point;
            let lhs = p.ricci_f_nn + p.sigma_sq;
            let rhs = 0.5 * (p.perelman_scalar + p.f_mean_curvature.powi(2))
                + 0.5 * (p.sigma_sq + p.grad_sigma_psi.norm_squared())
                - p.gauss_curvature
                + p.laplacian_sigma_psi;
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max))
}

pub fn gauss_rearrangement_check(
    space: &AmbientSpace,
    data: &ExtrinsicData,
) -> Result<TheoremCheck> {
    let r = gauss_rearrangement_residual(space, data)?;
    Ok(TheoremCheck {
        name: "gauss-rearrangement".into(),
        hypotheses: Vec::new(),
        asserted: true,
        lhs: r,
        rhs: 0.0,
        slack: GAUSS_REARRANGEMENT_TOL - r,
        pass: r <= GAUSS_REARRANGEMENT_TOL,
    })
}

/// Largest `|II(N,N) - (2 H_dM - h)|` over boundary points.
pub fn boundary_identity_residual(data: &ExtrinsicData) -> f64 {
    data.boundary
        .iter()
        .map(|b| (b.ii_nn - (2.0 * b.boundary_mean_curvature - b.geodesic_curvature)).abs())
        .fold(0.0, f64::max)
}

/// The chain `I_f(u,u) <= bound1 <= bound2` for `u = 1/sqrt(f)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub euler_characteristic: i64,
    /// `I_f(1/sqrt f, 1/sqrt f)`.
    pub index_form_value: f64,
    /// `2 pi chi - 1/2 int (S_f + H_f^2) - 1/2 int |sigma|^2
    /// - 1/4 int |grad_Sigma psi|^2 - int (H_f)_dM dl`.
    pub gauss_bonnet_bound: f64,
    /// `2 pi chi`.
    pub topological_bound: f64,
    /// `|I_f(u,u) - gauss_bonnet_bound|`: the first step is an identity on
    /// stationary surfaces (Gauss-Bonnet plus the boundary identity).
    pub identity_residual: f64,
    pub check: TheoremCheck,
}

impl ChainReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.check.hypotheses.iter().all(|h| h.holds)
    }
}

pub fn stability_topology_chain(
    space: &AmbientSpace,
    mesh: &SurfaceMesh,
    data: &ExtrinsicData,
) -> Result<ChainReport> {
    require_surface_dimension(space)?;
    require_stationary(data)?;
    let chi = euler_characteristic(mesh);
    // With u = f^{-1/2}: u^2 f = 1 and |grad u|^2 f = |grad_Sigma psi|^2 / 4.
    let index_form_value = data
        .interior
        .iter()
        .map(|q| {
            let p = &q.point;
            (0.25 * p.grad_sigma_psi.norm_squared() - p.ricci_f_nn - p.sigma_sq) * q.da
        })
        .sum::<f64>()
        - data.boundary.iter().map(|b| b.ii_nn * b.dl).sum::<f64>();
    let interior_terms: f64 = data
        .interior
        .iter()
        .map(|q| {
            let p = &q.point;
            (0.5 * (p.perelman_scalar + p.f_mean_curvature.powi(2))
                + 0.5 * p.sigma_sq
                + 0.25 * p.grad_sigma_psi.norm_squared())
                * q.da
        })
        .sum();
    let boundary_term: f64 = data
        .boundary
        .iter()
        .map(|b| b.boundary_f_mean_curvature * b.dl)
        .sum();
    let topological_bound = 2.0 * PI * chi as f64;
    let gauss_bonnet_bound = topological_bound - interior_terms - boundary_term;

    let scale = data.area().max(1.0);
    let tol = RIGIDITY_TOL * scale;
    let hypotheses = vec![
        Hypothesis::sampled(
            "S_f + H_f^2 >= 0",
            data.interior
                .iter()
                .map(|q| q.point.perelman_scalar + q.point.f_mean_curvature.powi(2)),
            RIGIDITY_TOL,
        ),
        Hypothesis::sampled(
            "(H_f) of dM >= 0",
            data.boundary.iter().map(|b| b.boundary_f_mean_curvature),
            RIGIDITY_TOL,
        ),
    ];
    let asserted = hypotheses.iter().all(|h| h.holds);
    let slack = (gauss_bonnet_bound - index_form_value).min(topological_bound - gauss_bonnet_bound);
    let check = TheoremCheck {
        name: "stability-topology-chain".into(),
        hypotheses,
        asserted,
        lhs: index_form_value,
        rhs: topological_bound,
        slack,
        pass: !asserted || slack >= -tol,
    };
    Ok(ChainReport {
        euler_characteristic: chi,
        index_form_value,
        gauss_bonnet_bound,
        topological_bound,
        identity_residual: (index_form_value - gauss_bonnet_bound).abs(),
        check,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyVerdict {
    SphereOrTorus,
    DiskOrCylinder,
    /// Stable with verified hypotheses but `chi` outside the allowed set.
    Inconsistent,
    NotApplicable,
}

/// Topological conclusion for a strongly stable surface under
/// `S_f + H_f^2 >= 0` and an f-mean convex boundary.
pub fn topology_verdict(
    chain: &ChainReport,
    spec: &SpectralResult,
    has_boundary: bool,
) -> TopologyVerdict {
    if !chain.hypotheses_hold() || !strong_stability_verdict(spec, VERDICT_TOL) {
        return TopologyVerdict::NotApplicable;
    }
    match (has_boundary, chain.euler_characteristic) {
        (true, 0 | 1) => TopologyVerdict::DiskOrCylinder,
        (false, 0 | 2) => TopologyVerdict::SphereOrTorus,
        _ => TopologyVerdict::Inconsistent,
    }
}

/// Area bounds for strongly stable free-boundary surfaces when
/// `S_f >= s0 f` (taken literally, with the density on the right).
/// `s0 > 0`: `A_f <= 4 pi / s0` and `chi = 1`. `s0 < 0` and `chi < 0`:
/// `A_f >= 4 pi chi / s0`.
pub fn area_bound_check(
    space: &AmbientSpace,
    mesh: &SurfaceMesh,
    data: &ExtrinsicData,
    spec: &SpectralResult,
    s0: f64,
) -> Result<TheoremCheck> {
    require_surface_dimension(space)?;
    if s0 == 0.0 || !s0.is_finite() {
        return Err(WstabError::Input(format!(
            "area bound needs a finite non-zero S0, got {s0}"
        )));
    }
    require_stationary(data)?;
    let chi = euler_characteristic(mesh);
    let area = data.weighted_area();
    let mut hypotheses = vec![
        Hypothesis::sampled(
            "S_f - S0 f >= 0",
            data.interior
                .iter()
                .map(|q| q.point.perelman_scalar - s0 * q.point.f),
            RIGIDITY_TOL,
        ),
        Hypothesis::sampled(
            "(H_f) of dM >= 0",
            data.boundary.iter().map(|b| b.boundary_f_mean_curvature),
            RIGIDITY_TOL,
        ),
        Hypothesis::flag(
            "strongly f-stable",
            spec.lambda_min(),
            strong_stability_verdict(spec, VERDICT_TOL),
        ),
        Hypothesis::flag(
            "non-empty boundary",
            mesh.boundary_edges.len() as f64,
            mesh.has_boundary(),
        ),
    ];
    let tol = RIGIDITY_TOL * area.max(1.0);
    let (name, lhs, rhs, extra) = if s0 > 0.0 {
        ("area-upper-bound", area, 4.0 * PI / s0, None)
    } else {
        hypotheses.push(Hypothesis::flag(
            "negative Euler characteristic",
            chi as f64,
            chi < 0,
        ));
        (
            "area-lower-bound",
            4.0 * PI * chi as f64 / s0,
            area,
            Some(()),
        )
    };
    let asserted = hypotheses.iter().all(|h| h.holds);
    let slack = rhs - lhs;
    let topology_ok = extra.is_some() || chi == 1;
    Ok(TheoremCheck {
        name: name.into(),
        hypotheses,
        asserted,
        lhs,
        rhs,
        slack,
        pass: !asserted || (slack >= -tol && topology_ok),
    })
}

/// Equality-case conditions, each thresholded at `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidityFlags {
    pub totally_geodesic: bool,
    pub density_const_on_surface: bool,
    pub ricci_normal_zero: bool,
    #[serde(rename = "II_NN_zero")]
    pub ii_nn_zero: bool,
    pub boundary_geodesic: bool,
    pub gauss_flat: bool,
}

impl RigidityFlags {
    pub fn all(&self) -> bool {
        self.totally_geodesic
            && self.density_const_on_surface
            && self.ricci_normal_zero
            && self.ii_nn_zero
            && self.boundary_geodesic
            && self.gauss_flat
    }
}

pub fn rigidity_flags(data: &ExtrinsicData, tol: f64) -> RigidityFlags {
    let interior_max = |g: &dyn Fn(&crate::surface::SurfacePoint) -> f64| {
        data.interior
            .iter()
            .map(|q| g(&q.point).abs())
            .fold(0.0, f64::max)
    };
    let boundary_max = |g: &dyn Fn(&crate::surface::BoundaryPoint) -> f64| {
        data.boundary.iter().map(|b| g(b).abs()).fold(0.0, f64::max)
    };
    RigidityFlags {
        totally_geodesic: interior_max(&|p| p.sigma_sq.sqrt()) <= tol,
        density_const_on_surface: interior_max(&|p| p.grad_sigma_psi.norm()) <= tol,
        ricci_normal_zero: interior_max(&|p| p.ricci_f_nn) <= tol,
        ii_nn_zero: boundary_max(&|b| b.ii_nn) <= tol,
        boundary_geodesic: boundary_max(&|b| b.geodesic_curvature) <= tol,
        gauss_flat: interior_max(&|p| p.gauss_curvature) <= tol,
    }
}

/// One leaf of a foliation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoliationSample {
    pub s: f64,
    pub f_mean_curvature: f64,
    pub weighted_area: f64,
    /// `H_f'(s) A_f(s)`.
    pub lhs: f64,
    /// `int_dSigma II(N,N) u dl_f + int (Ric_f(N,N) + |sigma|^2) u da_f`.
    pub rhs: f64,
    pub rel_err: f64,
    pub min_speed: f64,
    pub ricci_min: f64,
    pub ii_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoliationReport {
    pub samples: Vec<FoliationSample>,
    /// `Ric_f(N,N) >= 0` and `II(N,N) >= 0` held on every leaf, so
    /// `H_f' >= 0` was asserted too.
    pub monotonicity_asserted: bool,
    pub pass: bool,
}

fn mean_f_curvature(data: &ExtrinsicData) -> f64 {
    let w: f64 = data.interior.iter().map(|q| q.da).sum();
    data.interior
        .iter()
        .map(|q| q.point.f_mean_curvature * q.da)
        .sum::<f64>()
        / w
}

/// Checks `H_f'(s) A_f(s) = int II u dl_f + int (Ric_f + |sigma|^2) u da_f`
/// on the leaves `s` of a family of f-stationary surfaces with normal speed
/// `u > 0`.
pub fn foliation_monotonicity_check(
    family: &DeformedFamily,
    leaves: &[f64],
    quad: Quadrature,
) -> Result<FoliationReport> {
    require_surface_dimension(family.space())?;
    let h = 1e-3;
    let mesh = family.base_mesh();
    let mut samples = Vec::with_capacity(leaves.len());
    for &s in leaves {
        let data = family.geometry_at(s, quad)?;
        require_stationary(&data)
            .map_err(|e| WstabError::Precondition(format!("leaf s = {s}: {e}")))?;
        let hf = |t: f64| -> Result<f64> { Ok(mean_f_curvature(&family.geometry_at(t, quad)?)) };
        let coarse = (hf(s + h)? - hf(s - h)?) / (2.0 * h);
        let fine = (hf(s + h / 2.0)? - hf(s - h / 2.0)?) / h;
        let derivative = (4.0 * fine - coarse) / 3.0;

        let speed = |tri: usize, xi: &Vector2<f64>, normal: &nalgebra::Vector3<f64>| {
            let t = &mesh.triangles[tri];
            family.velocity(t.patch, &t.param_point(xi), s).dot(normal)
        };
        let interior_speeds: Vec<f64> = data
            .interior
            .iter()
            .map(|q| speed(q.triangle, &q.xi, &q.point.normal))
            .collect();
        let boundary_speeds: Vec<f64> = data
            .boundary
            .iter()
            .map(|b| speed(mesh.boundary_edges[b.edge].triangle, &b.xi, &b.normal))
            .collect();
        let rhs = data
            .interior
            .iter()
            .zip(&interior_speeds)
            .map(|(q, u)| (q.point.ricci_f_nn + q.point.sigma_sq) * u * q.point.f * q.da)
            .sum::<f64>()
            + data
                .boundary
                .iter()
                .zip(&boundary_speeds)
                .map(|(b, u)| b.ii_nn * u * b.f * b.dl)
                .sum::<f64>();
        let area = data.weighted_area();
        let lhs = derivative * area;
        let min_speed = interior_speeds
            .iter()
            .chain(&boundary_speeds)
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(min_speed > 0.0) {
            return Err(WstabError::Precondition(format!(
                "leaf s = {s}: normal speed must be positive, min {min_speed:e}"
            )));
        }
        samples.push(FoliationSample {
            s,
            f_mean_curvature: mean_f_curvature(&data),
            weighted_area: area,
            lhs,
            rhs,
            rel_err: (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0),
            min_speed,
            ricci_min: data
                .interior
                .iter()
                .map(|q| q.point.ricci_f_nn)
                .fold(f64::INFINITY, f64::min),
            ii_min: data.boundary.iter().map(|b| b.ii_nn).reduce(f64::min),
        });
    }
    let monotonicity_asserted = samples
        .iter()
        .all(|x| x.ricci_min >= -RIGIDITY_TOL && x.ii_min.is_none_or(|m| m >= -RIGIDITY_TOL));
    let identity_ok = samples.iter().all(|x| x.rel_err <= FOLIATION_TOL);
    let monotone_ok = !monotonicity_asserted
        || samples
            .iter()
            .all(|x| x.lhs >= -FOLIATION_TOL * x.weighted_area.max(1.0));
    Ok(FoliationReport {
        samples,
        monotonicity_asserted,
        pass: identity_ok && monotone_ok,
    })
}
