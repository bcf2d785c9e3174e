//! One-parameter families of immersions generated by a variation field.

use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use super::{admissibility_residual, weighted_area, VariationField};
use crate::ambient::AmbientSpace;
use crate::error::{Result, WstabError};
use crate::jet::{partial, values, Jet2};
use crate::quadrature::{gauss_legendre, Quadrature};
use crate::surface::{
    extrinsic_geometry, stationarity_verdict, ExtrinsicData, Immersion, Patch,
    StationarityTolerances, SurfaceMesh,
};

/// Largest `|<X, xi>|` accepted along the boundary.
pub const ADMISSIBILITY_TOL: f64 = 1e-8;

struct Deformation {
    space: AmbientSpace,
    base: Immersion,
    field: VariationField,
    boundary_layer: f64,
}

fn add(a: &[Jet2; 3], b: &[Jet2; 3], s: Jet2) -> [Jet2; 3] {
    [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s]
}

impl Deformation {
    fn phi(&self, p: &[Jet2; 3]) -> Jet2 {
        let j = self
            .space
            .phi_jet(&values(p))
            .expect("deformation requires a boundary");
        Jet2::lift(j.value, &j.grad, &j.hess, p)
    }

    /// Fourth-order central difference of `Phi` along `dir`, as a jet.
    fn directional(&self, p: &[Jet2; 3], dir: &[Jet2; 3], eps: f64) -> Jet2 {
        let at = |k: f64| self.phi(&add(p, dir, Jet2::constant(k * eps)));
        ((at(1.0) - at(-1.0)) * 8.0 - (at(2.0) - at(-2.0))) / (12.0 * eps)
    }

    /// `phi_s` at a chart point. Near `dM` (where `Phi(p) < boundary_layer`)
    /// the straight displacement `q = p + s X` is pulled back along `grad
    /// Phi` so that `Phi(phi_s) = Phi(p) + s <grad Phi(p), X(p)>`, blended
    /// out smoothly with `Phi(p)`. Boundary points therefore stay on `dM`
    /// and the velocity at `s = 0` is exactly `X`.
    fn point(&self, patch: usize, uv: &[Jet2; 2], s: Jet2) -> [Jet2; 3] {
        let p = (self.base.patches[patch].chart)(uv);
        let x = self.field.eval(patch, uv, &p);
        let q = add(&p, &x, s);
        let Some(jp) = self.space.phi_jet(&values(&p)) else {
            return q;
        };
        if jp.value >= self.boundary_layer || (s.v == 0.0 && s.d == [0.0; 2]) {
            return q;
        }
        let phi_p = Jet2::lift(jp.value, &jp.grad, &jp.hess, &p);
        let size = 1e-3 * (1.0 + values(&p).norm());
        let xnorm = values(&x).norm();
        let slope = if xnorm > 0.0 {
            self.directional(&p, &x, size / xnorm)
        } else {
            Jet2::constant(0.0)
        };
        let target = phi_p + slope * s;
        let dir: [Jet2; 3] = std::array::from_fn(|i| {
            let mut e = [Jet2::constant(0.0); 3];
            e[i] = Jet2::constant(1.0);
            self.directional(&p, &e, size)
        });
        let dir_v = values(&dir);
        let mut c = Jet2::constant(0.0);
        for _ in 0..60 {
            let point = add(&q, &dir, -c);
            let residual = self.phi(&point) - target;
            let slope_c = -self
                .space
                .phi_jet(&values(&point))
                .map_or(0.0, |j| j.grad.dot(&dir_v));
            if !(slope_c.abs() > 1e-14) {
                break;
            }
            let step = residual / slope_c;
            c = c - step;
            let change = step.v.abs().max(step.d[0].abs()).max(step.d[1].abs());
            if change < 1e-15 * (1.0 + c.v.abs()) {
                break;
            }
        }
        let t = phi_p / self.boundary_layer;
        let blend = if t.v <= 0.0 {
            Jet2::constant(1.0)
        } else {
            let t3 = t * t * t;
            -(t3 * 10.0 - t3 * t * 15.0 + t3 * t * t * 6.0) + 1.0
        };
        add(&q, &dir, -(c * blend))
    }
}

/// The variation `s -> phi_s` of a base surface by a field `X`.
#[derive(Clone)]
pub struct DeformedFamily {
    inner: Arc<Deformation>,
    base_mesh: SurfaceMesh,
    max_s: f64,
}

impl std::fmt::Debug for DeformedFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeformedFamily")
            .field("surface", &self.inner.base.name)
            .field("field", &self.inner.field.name)
            .field("max_s", &self.max_s)
            .finish()
    }
}

/// Richardson-extrapolated finite-difference derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdEstimate {
    pub value: f64,
    /// `|extrapolated - fine|`.
    pub error_estimate: f64,
    pub coarse: f64,
    pub fine: f64,
    pub step: f64,
}

impl DeformedFamily {
    /// Fails if `X` is not tangent to `dM` along the boundary.
    pub fn new(
        space: &AmbientSpace,
        base: &Immersion,
        mesh: &SurfaceMesh,
        field: VariationField,
    ) -> Result<Self> {
        if space.boundary().is_some() && mesh.has_boundary() {
            let r = admissibility_residual(space, base, mesh, &field)?;
            if !(r <= ADMISSIBILITY_TOL) {
                return Err(WstabError::Input(format!(
                    "variation field '{}' is not tangent to the ambient boundary (|<X, xi>| = {r:e})",
                    field.name
                )));
            }
        }
        Ok(DeformedFamily {
            inner: Arc::new(Deformation {
                space: space.clone(),
                base: base.clone(),
                field,
                boundary_layer: 0.3,
            }),
            base_mesh: mesh.clone(),
            max_s: 1.0,
        })
    }

    /// Width (in values of `Phi`) of the layer where the boundary
    /// correction acts.
    pub fn with_boundary_layer(self, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(WstabError::Input(format!(
                "boundary layer must be positive, got {width}"
            )));
        }
        let d = &self.inner;
        Ok(DeformedFamily {
            inner: Arc::new(Deformation {
                space: d.space.clone(),
                base: d.base.clone(),
                field: d.field.clone(),
                boundary_layer: width,
            }),
            ..self
        })
    }

    /// Largest `|s|` at which the family may be evaluated.
    pub fn with_range(mut self, max_s: f64) -> Self {
        self.max_s = max_s;
        self
    }

    pub fn space(&self) -> &AmbientSpace {
        &self.inner.space
    }

    pub fn base(&self) -> &Immersion {
        &self.inner.base
    }

    pub fn base_mesh(&self) -> &SurfaceMesh {
        &self.base_mesh
    }

    pub fn field(&self) -> &VariationField {
        &self.inner.field
    }

    fn check(&self, s: f64) -> Result<()> {
        if !(s.abs() <= self.max_s) {
            return Err(WstabError::Input(format!(
                "s = {s} is outside the family range [-{m}, {m}]",
                m = self.max_s
            )));
        }
        Ok(())
    }

    /// `phi_s` at a chart point of the given patch.
    pub fn point(&self, patch: usize, uv: &[Jet2; 2], s: Jet2) -> [Jet2; 3] {
        self.inner.point(patch, uv, s)
    }

    /// `d phi_s / d s` at a parameter point.
    pub fn velocity(&self, patch: usize, uv: &nalgebra::Vector2<f64>, s: f64) -> Vector3<f64> {
        let p = self.point(
            patch,
            &[Jet2::constant(uv.x), Jet2::constant(uv.y)],
            Jet2::var(s, 0),
        );
        partial(&p, 0)
    }

    /// `phi_s` as an immersion over the base parameter domains. The normal
    /// extension of the base is kept.
    pub fn immersion_at(&self, s: f64) -> Result<Immersion> {
        self.check(s)?;
        let base = &self.inner.base;
        let patches = base
            .patches
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let inner = self.inner.clone();
                Patch {
                    chart: Arc::new(move |uv: &[Jet2; 2]| inner.point(i, uv, Jet2::constant(s))),
                    domain: p.domain,
                    orientation: p.orientation,
                }
            })
            .collect();
        Ok(Immersion {
            name: format!("{}[s={s}]", base.name),
            patches,
            orientation_sign: base.orientation_sign,
            normal_field: base.normal_field.clone(),
        })
    }

    /// Base mesh with vertices moved to `phi_s` (boundary vertices projected
    /// onto `dM`); `s = 0` returns the base mesh unchanged.
    pub fn mesh_at(&self, s: f64) -> Result<SurfaceMesh> {
        if s == 0.0 {
            return Ok(self.base_mesh.clone());
        }
        let imm = self.immersion_at(s)?;
        self.base_mesh.reposition(&self.inner.space, &imm)
    }

    pub fn weighted_area(&self, s: f64, quad: Quadrature) -> Result<f64> {
        if s == 0.0 {
            return weighted_area(&self.inner.space, &self.inner.base, &self.base_mesh, quad);
        }
        weighted_area(
            &self.inner.space,
            &self.immersion_at(s)?,
            &self.base_mesh,
            quad,
        )
    }

    pub fn geometry_at(&self, s: f64, quad: Quadrature) -> Result<ExtrinsicData> {
        extrinsic_geometry(
            &self.inner.space,
            &self.immersion_at(s)?,
            &self.base_mesh,
            quad,
        )
    }

    /// `int f <d phi / dt, N_t> da_t` over `Sigma_t`.
    fn volume_rate(&self, t: f64, quad: Quadrature) -> Result<f64> {
        let rule = quad.rule.points();
        let base = &self.inner.base;
        let parts = self
            .base_mesh
            .triangles
            .par_iter()
            .map(|tri| {
                let sign = base.normal_sign(tri);
                rule.iter()
                    .map(|(xi, w)| {
                        let uv = tri.param_jets(xi);
                        let p = self.point(tri.patch, &uv, Jet2::constant(t));
                        let cross = partial(&p, 0).cross(&partial(&p, 1));
                        let area = cross.norm();
                        if !(area > 0.0) {
                            return Err(WstabError::Immersion(format!(
                                "deformed chart is degenerate at s = {t}"
                            )));
                        }
                        let normal = sign * cross / area;
                        let v = self.velocity(tri.patch, &tri.param_point(xi), t);
                        Ok(w * area * self.inner.space.f(&values(&p)) * v.dot(&normal))
                    })
                    .sum::<Result<f64>>()
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum())
    }

    /// Signed weighted volume swept between `Sigma_0` and `Sigma_s`,
    /// `V_f(s) = int_0^s int f <d phi / dt, N_t> da_t dt`.
    pub fn swept_volume(&self, s: f64, quad: Quadrature) -> Result<f64> {
        self.check(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        let panels = ((s.abs() * 16.0).ceil() as usize).max(2);
        gauss_legendre(0.0, s, panels)
            .into_iter()
            .map(|(t, w)| Ok(w * self.volume_rate(t, quad)?))
            .sum()
    }
}

const FIRST_STEP: f64 = 1e-3;
const SECOND_STEP: f64 = 1e-2;

fn first_derivative(g: impl Fn(f64) -> Result<f64>) -> Result<FdEstimate> {
    let d = |h: f64| -> Result<f64> { Ok((g(h)? - g(-h)?) / (2.0 * h)) };
    let coarse = d(FIRST_STEP)?;
    let fine = d(FIRST_STEP / 2.0)?;
    finish((4.0 * fine - coarse) / 3.0, coarse, fine, FIRST_STEP)
}

fn second_derivative(g: impl Fn(f64) -> Result<f64>) -> Result<FdEstimate> {
    let g0 = g(0.0)?;
    let d = |h: f64| -> Result<f64> {
        let dg = |s: f64| -> Result<f64> { Ok(g(s)? - g0) };
        Ok((16.0 * (dg(h)? + dg(-h)?) - (dg(2.0 * h)? + dg(-2.0 * h)?)) / (12.0 * h * h))
    };
    let coarse = d(SECOND_STEP)?;
    let fine = d(SECOND_STEP / 2.0)?;
    finish((16.0 * fine - coarse) / 15.0, coarse, fine, SECOND_STEP)
}

fn finish(value: f64, coarse: f64, fine: f64, step: f64) -> Result<FdEstimate> {
    if !value.is_finite() || (coarse - fine).abs() > 1e-3 * value.abs().max(1.0) {
        return Err(WstabError::Numerical(format!(
            "finite differences are inconsistent across steps ({coarse:e} vs {fine:e}); the family is not smooth"
        )));
    }
    Ok(FdEstimate {
        value,
        error_estimate: (value - fine).abs(),
        coarse,
        fine,
        step,
    })
}

/// Richardson-extrapolated `A_f'(0)`.
pub fn first_variation_fd(family: &DeformedFamily, quad: Quadrature) -> Result<FdEstimate> {
    first_derivative(|s| family.weighted_area(s, quad))
}

/// Richardson-extrapolated `V_f'(0)`.
pub fn volume_variation_fd(family: &DeformedFamily, quad: Quadrature) -> Result<FdEstimate> {
    first_derivative(|s| family.swept_volume(s, quad))
}

/// Richardson-extrapolated `(A_f + H_f V_f)''(0)` on an f-stationary base,
/// where `H_f` is the constant f-mean curvature of the base.
pub fn second_variation_fd(family: &DeformedFamily, quad: Quadrature) -> Result<FdEstimate> {
    let data = extrinsic_geometry(family.space(), family.base(), family.base_mesh(), quad)?;
    let verdict = stationarity_verdict(&data, StationarityTolerances::default());
    if !verdict.volume_constrained {
        return Err(WstabError::Precondition(format!(
            "base surface is not f-stationary (H_f spread {:e}, max contact {:e})",
            verdict.h_f_spread, verdict.max_contact
        )));
    }
    let h = verdict.h_f_mean;
    second_derivative(|s| Ok(family.weighted_area(s, quad)? + h * family.swept_volume(s, quad)?))
}
