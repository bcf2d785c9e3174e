//! Flat ambient spaces with a log-density and an implicit boundary.
//!
//! The ambient region is `M = {Phi >= 0}` inside either Euclidean space or a
//! flat product with circle factors. The density is `f = exp(psi)`. All
//! fields are given as pure callbacks returning value, gradient and Hessian,
//! so an [`AmbientSpace`] is immutable and can be shared across threads.
//!
//! Sign conventions: the boundary normal `xi = grad Phi / |grad Phi|` points
//! into `M`, and `II(v, w) = -Hess Phi(v, w) / |grad Phi|` is the second
//! fundamental form of `dM` with respect to `xi` (positive on a convex
//! boundary such as the inside of a ball).

mod builtin;

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, WstabError};
use crate::jet::{seed3, split3, Jet3};

pub use builtin::{BoundaryKind, DensitySpec, SmoothField};

pub type ScalarFn = Arc<dyn Fn(&Vector3<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Vector3<f64>) -> Vector3<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&Vector3<f64>) -> Matrix3<f64> + Send + Sync>;
/// Ricci curvature as a quadratic form: `(p, v) -> Ric_p(v, v)`.
pub type RicciFn = Arc<dyn Fn(&Vector3<f64>, &Vector3<f64>) -> f64 + Send + Sync>;
type JetFn = Arc<dyn Fn(&Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) + Send + Sync>;

/// Value, gradient and Hessian of an ambient scalar field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad: Vector3<f64>,
    pub hess: Matrix3<f64>,
}

/// A smooth scalar field with analytic first and second derivatives.
#[derive(Clone)]
pub struct Field {
    pub name: String,
    pub value: ScalarFn,
    pub grad: VectorFn,
    pub hess: MatrixFn,
    combined: Option<JetFn>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl Field {
    pub fn new(name: impl Into<String>, value: ScalarFn, grad: VectorFn, hess: MatrixFn) -> Self {
        Field {
            name: name.into(),
            value,
            grad,
            hess,
            combined: None,
        }
    }

    /// Builds a field whose derivatives come from automatic differentiation
    /// of a generic implementation.
    pub fn from_smooth<F: SmoothField>(name: impl Into<String>, field: F) -> Self {
        let field = Arc::new(field);
        let (a, b, c, d) = (field.clone(), field.clone(), field.clone(), field);
        Field {
            name: name.into(),
            value: Arc::new(move |p| a.eval(&[p.x, p.y, p.z])),
            grad: Arc::new(move |p| split3(&b.eval(&seed3(p))).1),
            hess: Arc::new(move |p| split3(&c.eval(&seed3(p))).2),
            combined: Some(Arc::new(move |p| split3(&d.eval::<Jet3>(&seed3(p))))),
        }
    }

    pub fn eval(&self, p: &Vector3<f64>) -> f64 {
        (self.value)(p)
    }

    pub fn jet(&self, p: &Vector3<f64>) -> FieldJet {
        let (value, grad, hess) = match &self.combined {
            Some(c) => c(p),
            None => ((self.value)(p), (self.grad)(p), (self.hess)(p)),
        };
        FieldJet { value, grad, hess }
    }

    /// Adds a constant to the field.
    pub fn shifted(&self, c: f64) -> Field {
        let v = self.value.clone();
        let comb = self.combined.clone();
        Field {
            name: format!("{}{:+}", self.name, c),
            value: Arc::new(move |p| v(p) + c),
            grad: self.grad.clone(),
            hess: self.hess.clone(),
            combined: comb.map(|j| -> JetFn {
                Arc::new(move |p| {
                    let (a, g, h) = j(p);
                    (a + c, g, h)
                })
            }),
        }
    }
}

/// Log-density `psi`; the density is `f = exp(psi)`.
pub type Density = Field;

/// Level-set description `M = {Phi >= 0}` of the ambient boundary.
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    pub phi: Field,
    /// Balls `(center, radius)` around singular points of `dM` (such as a
    /// cone apex) that surfaces must avoid.
    pub excluded: Vec<(Vector3<f64>, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dimension {
    Two,
    Three,
}

impl Dimension {
    pub fn get(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }
}

/// A coordinate axis identified with a circle of the given circumference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicAxis {
    pub axis: usize,
    pub circumference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MetricKind {
    FlatEuclidean,
    /// Flat product where the listed axes are circles. Fields are evaluated
    /// with the circle coordinates set to zero, so they are well defined on
    /// the quotient.
    FlatProduct(Vec<PeriodicAxis>),
}

#[derive(Clone)]
pub struct AmbientSpace {
    dim: Dimension,
    metric: MetricKind,
    ricci: Option<RicciFn>,
    scalar: Option<ScalarFn>,
    density: Density,
    boundary: Option<BoundarySpec>,
}

impl std::fmt::Debug for AmbientSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AmbientSpace")
            .field("dim", &self.dim)
            .field("metric", &self.metric)
            .field("density", &self.density.name)
            .field("boundary", &self.boundary.as_ref().map(|b| &b.phi.name))
            .field("custom_curvature", &self.ricci.is_some())
            .finish()
    }
}

impl AmbientSpace {
    pub fn new(
        dim: Dimension,
        metric: MetricKind,
        density: Density,
        boundary: Option<BoundarySpec>,
    ) -> Result<Self> {
        if let MetricKind::FlatProduct(axes) = &metric {
            for a in axes {
                if a.axis >= dim.get() || !(a.circumference > 0.0) {
                    return Err(WstabError::Input(format!(
                        "invalid periodic axis {} with circumference {}",
                        a.axis, a.circumference
                    )));
                }
            }
        }
        Ok(AmbientSpace {
            dim,
            metric,
            ricci: None,
            scalar: None,
            density,
            boundary,
        })
    }

    /// Euclidean 3-space with the given density and boundary.
    pub fn euclidean(density: Density, boundary: Option<BoundarySpec>) -> Self {
        AmbientSpace {
            dim: Dimension::Three,
            metric: MetricKind::FlatEuclidean,
            ricci: None,
            scalar: None,
            density,
            boundary,
        }
    }

    /// Replaces the (zero) curvature of the flat metric by user callbacks.
    pub fn with_curvature(mut self, ricci: RicciFn, scalar: ScalarFn) -> Self {
        self.ricci = Some(ricci);
        self.scalar = Some(scalar);
        self
    }

    pub fn with_density(&self, density: Density) -> Self {
        let mut out = self.clone();
        out.density = density;
        out
    }

    pub fn dim(&self) -> usize {
        self.dim.get()
    }

    pub fn metric(&self) -> &MetricKind {
        &self.metric
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn boundary(&self) -> Option<&BoundarySpec> {
        self.boundary.as_ref()
    }

    pub fn has_custom_curvature(&self) -> bool {
        self.ricci.is_some()
    }

    fn periodic_axes(&self) -> &[PeriodicAxis] {
        match &self.metric {
            MetricKind::FlatEuclidean => &[],
            MetricKind::FlatProduct(a) => a,
        }
    }

    /// Point at which fields are evaluated: circle coordinates zeroed.
    fn reduce(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut q = *p;
        for a in self.periodic_axes() {
            q[a.axis] = 0.0;
        }
        q
    }

    fn reduce_jet(&self, mut j: FieldJet) -> FieldJet {
        for a in self.periodic_axes() {
            j.grad[a.axis] = 0.0;
            for b in 0..3 {
                j.hess[(a.axis, b)] = 0.0;
                j.hess[(b, a.axis)] = 0.0;
            }
        }
        j
    }

    pub fn psi(&self, p: &Vector3<f64>) -> f64 {
        self.density.eval(&self.reduce(p))
    }

    pub fn f(&self, p: &Vector3<f64>) -> f64 {
        self.psi(p).exp()
    }

    /// `psi` with gradient and Hessian.
    pub fn psi_jet(&self, p: &Vector3<f64>) -> FieldJet {
        self.reduce_jet(self.density.jet(&self.reduce(p)))
    }

    pub fn grad_psi(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.psi_jet(p).grad
    }

    pub fn hess_psi(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        self.psi_jet(p).hess
    }

    pub fn laplacian_psi(&self, p: &Vector3<f64>) -> f64 {
        let h = self.hess_psi(p);
        (0..self.dim()).map(|i| h[(i, i)]).sum()
    }

    /// Ambient Ricci curvature `Ric(v, v)`.
    pub fn ricci(&self, p: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        self.ricci.as_ref().map_or(0.0, |r| r(p, v))
    }

    /// Ambient scalar curvature.
    pub fn scalar(&self, p: &Vector3<f64>) -> f64 {
        self.scalar.as_ref().map_or(0.0, |s| s(p))
    }

    pub fn phi(&self, p: &Vector3<f64>) -> Option<f64> {
        self.boundary.as_ref().map(|b| b.phi.eval(&self.reduce(p)))
    }

    pub fn phi_jet(&self, p: &Vector3<f64>) -> Option<FieldJet> {
        self.boundary
            .as_ref()
            .map(|b| self.reduce_jet(b.phi.jet(&self.reduce(p))))
    }

    /// True when `p` lies in `M` (up to `tol`).
    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        self.phi(p).is_none_or(|v| v >= -tol)
    }

    fn check_point(&self, p: &Vector3<f64>) -> Result<()> {
        if !p.iter().all(|x| x.is_finite()) {
            return Err(WstabError::Input(format!("non-finite point {p:?}")));
        }
        if self.dim == Dimension::Two && p.z.abs() > 1e-12 {
            return Err(WstabError::DimensionMismatch {
                expected: 2,
                got: 3,
            });
        }
        Ok(())
    }

    fn check_on_boundary(&self, p: &Vector3<f64>) -> Result<()> {
        self.check_point(p)?;
        let phi = self
            .phi(p)
            .ok_or_else(|| WstabError::Input("ambient space has no boundary".into()))?;
        if phi.abs() > 1e-10 {
            return Err(WstabError::Input(format!(
                "point {:?} is not on the boundary (Phi = {phi:e})",
                p.as_slice()
            )));
        }
        Ok(())
    }
}

/// Normal and curvature data of `dM` at a boundary point.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFrame {
    /// Inner unit normal.
    pub xi: Vector3<f64>,
    pub grad_norm: f64,
    /// `-Hess Phi / |grad Phi|`, to be restricted to tangent vectors.
    pub shape: Matrix3<f64>,
}

impl BoundaryFrame {
    /// Evaluates the frame without checking that `p` is on `dM`.
    pub fn at(space: &AmbientSpace, p: &Vector3<f64>) -> Result<Self> {
        let j = space
            .phi_jet(p)
            .ok_or_else(|| WstabError::Input("ambient space has no boundary".into()))?;
        let n = j.grad.norm();
        if !(n >= 1e-12) {
            return Err(WstabError::SingularBoundary(format!("{:?}", p.as_slice())));
        }
        Ok(BoundaryFrame {
            xi: j.grad / n,
            grad_norm: n,
            shape: -j.hess / n,
        })
    }

    pub fn second_fundamental(&self, v: &Vector3<f64>, w: &Vector3<f64>) -> f64 {
        v.dot(&(self.shape * w))
    }

    /// Trace of `II` over the tangent space of `dM` in an ambient space of
    /// dimension `dim`.
    pub fn trace(&self, dim: usize) -> f64 {
        let tr: f64 = (0..dim).map(|i| self.shape[(i, i)]).sum();
        tr - self.second_fundamental(&self.xi, &self.xi)
    }
}

/// `Ric_f(v, v) = Ric(v, v) - Hess psi(v, v)` for a unit vector `v`.
pub fn bakry_emery_ricci(space: &AmbientSpace, p: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64> {
    space.check_point(p)?;
    space.check_point(v)?;
    if (v.norm() - 1.0).abs() > 1e-12 {
        return Err(WstabError::Input(format!(
            "direction must be a unit vector, |v| = {}",
            v.norm()
        )));
    }
    Ok(ricci_f(space, p, v))
}

pub(crate) fn ricci_f(space: &AmbientSpace, p: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    space.ricci(p, v) - v.dot(&(space.hess_psi(p) * v))
}

/// Perelman scalar curvature `S_f = S - 2 Lap psi - |grad psi|^2`.
pub fn perelman_scalar(space: &AmbientSpace, p: &Vector3<f64>) -> Result<f64> {
    space.check_point(p)?;
    Ok(perelman_unchecked(space, p))
}

pub(crate) fn perelman_unchecked(space: &AmbientSpace, p: &Vector3<f64>) -> f64 {
    let j = space.psi_jet(p);
    let lap: f64 = (0..space.dim()).map(|i| j.hess[(i, i)]).sum();
    space.scalar(p) - 2.0 * lap - j.grad.norm_squared()
}

/// Inner unit normal `xi` of `dM` at a boundary point.
pub fn boundary_inner_normal(space: &AmbientSpace, p: &Vector3<f64>) -> Result<Vector3<f64>> {
    space.check_on_boundary(p)?;
    Ok(BoundaryFrame::at(space, p)?.xi)
}

/// `II(v, w)` of `dM` with respect to the inner normal, for tangent `v, w`.
pub fn boundary_second_fundamental(
    space: &AmbientSpace,
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    w: &Vector3<f64>,
) -> Result<f64> {
    space.check_on_boundary(p)?;
    let frame = BoundaryFrame::at(space, p)?;
    for (name, x) in [("v", v), ("w", w)] {
        let along = x.dot(&frame.xi) * frame.grad_norm;
        if along.abs() > 1e-10 * x.norm().max(1.0) {
            return Err(WstabError::Input(format!(
                "{name} is not tangent to the boundary (<{name}, grad Phi> = {along:e})"
            )));
        }
    }
    Ok(frame.second_fundamental(v, w))
}

/// f-mean curvature of `dM` with respect to `xi`: `tr II - <grad psi, xi>`.
pub fn boundary_f_mean_curvature(space: &AmbientSpace, p: &Vector3<f64>) -> Result<f64> {
    space.check_on_boundary(p)?;
    boundary_f_mean_unchecked(space, p)
}

pub(crate) fn boundary_f_mean_unchecked(space: &AmbientSpace, p: &Vector3<f64>) -> Result<f64> {
    let frame = BoundaryFrame::at(space, p)?;
    Ok(frame.trace(space.dim()) - space.grad_psi(p).dot(&frame.xi))
}

/// Result of comparing analytic derivatives with finite differences.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub samples: usize,
    pub max_grad_residual: f64,
    pub max_hess_residual: f64,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares `grad psi` with centred differences of `psi`, and `Hess psi` with
/// centred differences of `grad psi`, at step `1e-5 (1 + |p|)`. Residuals are
/// scaled by `max(1, |analytic|)`.
pub fn density_consistency_check(
    space: &AmbientSpace,
    samples: &[Vector3<f64>],
) -> ConsistencyReport {
    field_consistency(
        samples,
        |p| space.psi(p),
        |p| space.grad_psi(p),
        |p| space.hess_psi(p),
        space.dim(),
    )
}

/// Same check for the boundary level set `Phi`.
pub fn boundary_consistency_check(
    space: &AmbientSpace,
    samples: &[Vector3<f64>],
) -> Option<ConsistencyReport> {
    space.boundary()?;
    Some(field_consistency(
        samples,
        |p| space.phi(p).unwrap_or(0.0),
        |p| space.phi_jet(p).map(|j| j.grad).unwrap_or_default(),
        |p| space.phi_jet(p).map(|j| j.hess).unwrap_or_default(),
        space.dim(),
    ))
}

fn field_consistency(
    samples: &[Vector3<f64>],
    value: impl Fn(&Vector3<f64>) -> f64,
    grad: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    hess: impl Fn(&Vector3<f64>) -> Matrix3<f64>,
    dim: usize,
) -> ConsistencyReport {
    const TOL: f64 = 1e-6;
    let mut max_g: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    for p in samples {
        let h = 1e-5 * (1.0 + p.norm());
        let g = grad(p);
        let hs = hess(p);
        let mut dg: f64 = 0.0;
        let mut dh: f64 = 0.0;
        for i in 0..dim {
            let mut e = Vector3::zeros();
            e[i] = h;
            let fd = (value(&(p + e)) - value(&(p - e))) / (2.0 * h);
            dg = dg.max((fd - g[i]).abs());
            let col = (grad(&(p + e)) - grad(&(p - e))) / (2.0 * h);
            for k in 0..dim {
                dh = dh.max((col[k] - hs[(k, i)]).abs());
            }
        }
        let gscale = g.iter().take(dim).fold(1.0_f64, |a, x| a.max(x.abs()));
        let hscale = hs.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        max_g = max_g.max(if dg.is_nan() {
            f64::INFINITY
        } else {
            dg / gscale
        });
        max_h = max_h.max(if dh.is_nan() {
            f64::INFINITY
        } else {
            dh / hscale
        });
    }
    let max = max_g.max(max_h);
    ConsistencyReport {
        samples: samples.len(),
        max_grad_residual: max_g,
        max_hess_residual: max_h,
        max_residual: max,
        tolerance: TOL,
        pass: max <= TOL,
    }
}

/// Checks `scalar(p) = sum_i Ric(e_i, e_i)` at the given points; returns the
/// largest deviation.
pub fn curvature_consistency_check(space: &AmbientSpace, samples: &[Vector3<f64>]) -> f64 {
    samples
        .iter()
        .map(|p| {
            let trace: f64 = (0..space.dim())
                .map(|i| space.ricci(p, &Vector3::ith(i, 1.0)))
                .sum();
            (trace - space.scalar(p)).abs()
        })
        .fold(0.0, f64::max)
}

/// Validates the boundary at sample points: `|grad Phi| > 0` and the probe
/// `Phi(p + eps xi) > 0`.
pub fn boundary_probe_check(
    space: &AmbientSpace,
    samples: &[Vector3<f64>],
    eps: f64,
) -> Result<()> {
    for p in samples {
        let frame = BoundaryFrame::at(space, p)?;
        let probe = space.phi(&(p + eps * frame.xi)).unwrap_or(0.0);
        if !(probe > 0.0) {
            return Err(WstabError::SingularBoundary(format!(
                "inner normal at {:?} does not point into M (Phi(p + eps xi) = {probe:e})",
                p.as_slice()
            )));
        }
    }
    Ok(())
}

/// Deterministic uniform samples in a ball.
pub fn sample_ball(n: usize, center: &Vector3<f64>, radius: f64, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            out.push(center + radius * v);
        }
    }
    out
}

/// Deterministic samples on `{Phi = 0}` obtained by Newton projection of
/// random points in a ball; points where the projection fails are skipped.
pub fn sample_boundary(
    space: &AmbientSpace,
    n: usize,
    center: &Vector3<f64>,
    radius: f64,
    seed: u64,
) -> Vec<Vector3<f64>> {
    let Some(_) = space.boundary() else {
        return Vec::new();
    };
    let dim = space.dim();
    sample_ball(4 * n, center, radius, seed)
        .into_iter()
        .filter_map(|mut p| {
            if dim == 2 {
                p.z = 0.0;
            }
            for _ in 0..50 {
                let j = space.phi_jet(&p)?;
                if j.value.abs() < 1e-14 {
                    return Some(p);
                }
                let g2 = j.grad.norm_squared();
                if !(g2 > 1e-20) {
                    return None;
                }
                p -= j.value * j.grad / g2;
            }
            None
        })
        .take(n)
        .collect()
}

#[cfg(test)]
mod tests;
