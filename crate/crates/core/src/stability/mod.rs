//! P1 discretisation of the weighted index form
//!
//! `I_f(u, u) = int |grad u|^2 - (Ric_f(N, N) + |sigma|^2) u^2 da_f
//!            - int_{dSigma} II(N, N) u^2 dl_f`
//!
//! on a surface mesh, the f-Jacobi operator, Robin spectra and stability
//! verdicts. The Robin condition `du/dnu + II(N, N) u = 0` is never imposed;
//! it is the natural boundary condition of the bilinear form.

#[cfg(test)]
mod tests;

use nalgebra::{DMatrix, DVector, Vector2};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::CscMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::ambient::AmbientSpace;
use crate::error::{Result, WstabError};
use crate::functionals::{DeformedFamily, ScalarJetFn};
use crate::jet::values;
use crate::linalg::{bilinear, combine, csc_from_triplets, matvec, smallest_eigenpairs};
use crate::quadrature::Quadrature;
use crate::surface::{
    extrinsic_geometry, stationarity_verdict, ExtrinsicData, Immersion, StationarityTolerances,
    SurfaceMesh, SurfacePoint, REF_CORNERS,
};

/// Default relative tolerance of the stability verdicts.
pub const VERDICT_TOL: f64 = 1e-3;

const HAT_GRADIENTS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

fn hats(xi: &Vector2<f64>) -> [f64; 3] {
    [1.0 - xi.x - xi.y, xi.x, xi.y]
}

/// Assembled matrices of the index form on P1 hat functions.
#[derive(Debug, Clone)]
pub struct IndexFormAssembly {
    /// `int <grad phi_i, grad phi_j> da_f`.
    pub stiffness: CscMatrix<f64>,
    /// `int (Ric_f(N, N) + |sigma|^2) phi_i phi_j da_f`.
    pub potential: CscMatrix<f64>,
    /// `int_{dSigma} II(N, N) phi_i phi_j dl_f`.
    pub robin: CscMatrix<f64>,
    /// `int phi_i phi_j da_f`.
    pub mass: CscMatrix<f64>,
    /// `stiffness - potential - robin`.
    pub index_form: CscMatrix<f64>,
    /// `int phi_i da_f`, the constraint of volume-preserving variations.
    pub load: DVector<f64>,
}

impl IndexFormAssembly {
    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dof() {
            return Err(WstabError::DimensionMismatch {
                expected: self.dof(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Assembles with Gauss3 on triangles and Gauss2 on boundary edges.
pub fn assemble(
    space: &AmbientSpace,
    imm: &Immersion,
    mesh: &SurfaceMesh,
) -> Result<IndexFormAssembly> {
    let data = extrinsic_geometry(space, imm, mesh, Quadrature::ASSEMBLY)?;
    Ok(assemble_from(mesh, &data))
}

/// Assembles from precomputed geometry (any quadrature).
pub fn assemble_from(mesh: &SurfaceMesh, data: &ExtrinsicData) -> IndexFormAssembly {
    let n = mesh.n_vertices();
    let locals: Vec<_> = data
        .interior
        .par_iter()
        .map(|q| {
            let p = &q.point;
            let phi = hats(&q.xi);
            let w = p.f * q.da;
            let v = p.ricci_f_nn + p.sigma_sq;
            let mut k = [[0.0; 3]; 3];
            let mut pm = [[0.0; 3]; 3];
            let mut m = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in a..3 {
                    let (ga, gb) = (HAT_GRADIENTS[a], HAT_GRADIENTS[b]);
                    let mut g = 0.0;
                    for c in 0..2 {
                        for d in 0..2 {
                            g +=
                                0.5 * (p.metric_inv[(c, d)] + p.metric_inv[(d, c)]) * ga[c] * gb[d];
                        }
                    }
                    k[a][b] = g * w;
                    m[a][b] = phi[a] * phi[b] * w;
                    pm[a][b] = v * m[a][b];
                    k[b][a] = k[a][b];
                    m[b][a] = m[a][b];
                    pm[b][a] = pm[a][b];
                }
            }
            (mesh.triangles[q.triangle].v, k, pm, m)
        })
        .collect();
    let triplets =
        |pick: fn(&([usize; 3], [[f64; 3]; 3], [[f64; 3]; 3], [[f64; 3]; 3])) -> &[[f64; 3]; 3]| {
            locals.iter().flat_map(move |l| {
                let v = l.0;
                let mat = *pick(l);
                (0..9).map(move |ab| (v[ab / 3], v[ab % 3], mat[ab / 3][ab % 3]))
            })
        };
    let stiffness = csc_from_triplets(n, triplets(|l| &l.1));
    let potential = csc_from_triplets(n, triplets(|l| &l.2));
    let mass = csc_from_triplets(n, triplets(|l| &l.3));

    let robin_triplets = data.boundary.iter().flat_map(|b| {
        let tri = &mesh.triangles[mesh.boundary_edges[b.edge].triangle];
        let phi = hats(&b.xi);
        let w = b.ii_nn * b.f * b.dl;
        let v = tri.v;
        (0..9).map(move |ab| (v[ab / 3], v[ab % 3], phi[ab / 3] * phi[ab % 3] * w))
    });
    let robin = csc_from_triplets(n, robin_triplets);
    let index_form = combine(
        1.0,
        &combine(1.0, &stiffness, -1.0, &potential),
        -1.0,
        &robin,
    );
    let load = matvec(&mass, &DVector::from_element(n, 1.0));
    IndexFormAssembly {
        stiffness,
        potential,
        robin,
        mass,
        index_form,
        load,
    }
}

/// `v^T (K - P - B) w`.
pub fn index_form_value(
    asm: &IndexFormAssembly,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64> {
    asm.check(v)?;
    asm.check(w)?;
    Ok(bilinear(&asm.index_form, v, w))
}

/// `I_f(u, u)` for a smooth ambient function `u`, evaluated with exact
/// surface gradients at the quadrature points of `data`.
pub fn index_form_exact(
    imm: &Immersion,
    mesh: &SurfaceMesh,
    data: &ExtrinsicData,
    u: &ScalarJetFn,
) -> f64 {
    let interior: Vec<f64> = data
        .interior
        .par_iter()
        .map(|q| {
            let jets = imm.triangle_jets(&mesh.triangles[q.triangle], &q.xi);
            let uj = u(&jets);
            let p = &q.point;
            let mut grad_sq = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    grad_sq += p.metric_inv[(a, b)] * uj.d[a] * uj.d[b];
                }
            }
            (grad_sq - (p.ricci_f_nn + p.sigma_sq) * uj.v * uj.v) * p.f * q.da
        })
        .collect();
    let boundary: f64 = data
        .boundary
        .iter()
        .map(|b| {
            let tri = &mesh.triangles[mesh.boundary_edges[b.edge].triangle];
            let uv = u(&imm.triangle_jets(tri, &b.xi)).v;
            b.ii_nn * uv * uv * b.f * b.dl
        })
        .sum();
    interior.iter().sum::<f64>() - boundary
}

fn mass_factor(asm: &IndexFormAssembly) -> Result<CscCholesky<f64>> {
    CscCholesky::factor(&asm.mass)
        .map_err(|e| WstabError::Numerical(format!("mass matrix factorization failed: {e}")))
}

/// Discrete `L_f u = Delta_{Sigma,f} u + (Ric_f(N, N) + |sigma|^2) u`, i.e.
/// `-M^{-1} (K - P) u`.
pub fn jacobi_apply(asm: &IndexFormAssembly, u: &DVector<f64>) -> Result<DVector<f64>> {
    asm.check(u)?;
    let rhs = -(matvec(&asm.stiffness, u) - matvec(&asm.potential, u));
    let sol = mass_factor(asm)?.solve(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()));
    Ok(sol.column(0).into_owned())
}

/// `|int v L_f w - w L_f v da_f|` in the discrete weak form (boundary flux
/// terms cancel identically).
pub fn jacobi_symmetry_residual(
    asm: &IndexFormAssembly,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64> {
    asm.check(v)?;
    asm.check(w)?;
    let a = combine(1.0, &asm.stiffness, -1.0, &asm.potential);
    Ok((bilinear(&a, v, w) - bilinear(&a, w, v)).abs())
}

/// Smallest eigenpairs of `(K - P - B) u = lambda M u`.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    /// `M`-normalized coefficient vectors.
    pub eigenfunctions: Vec<DVector<f64>>,
    pub solver_residuals: Vec<f64>,
}

impl SpectralResult {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn residual_max(&self) -> f64 {
        self.solver_residuals.iter().fold(0.0, |m, r| m.max(*r))
    }

    /// Number of negative eigenvalues below `-tol` among those computed.
    pub fn negative_count(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|l| **l < -tol).count()
    }

    /// Absolute verdict tolerance `rel * max(1, |lambda_max computed|)`.
    pub fn tolerance(&self, rel: f64) -> f64 {
        let top = self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        rel * top.max(1.0)
    }
}

pub fn robin_eigenproblem(asm: &IndexFormAssembly, count: usize) -> Result<SpectralResult> {
    let pairs = smallest_eigenpairs(&asm.index_form, &asm.mass, count, None)?;
    Ok(SpectralResult {
        eigenvalues: pairs.values,
        eigenfunctions: pairs.vectors,
        solver_residuals: pairs.residuals,
    })
}

/// `lambda_min >= -tol` with the scaled tolerance of [`SpectralResult::tolerance`].
pub fn strong_stability_verdict(spec: &SpectralResult, rel_tol: f64) -> bool {
    spec.lambda_min() >= -spec.tolerance(rel_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstrainedVerdict {
    /// Minimum of the Rayleigh quotient over `{u : int u da_f = 0}`.
    pub minimum: f64,
    pub residual: f64,
    pub stable: bool,
}

/// Stability under volume-preserving variations: the constraint
/// `load^T u = 0` is projected out of the pencil.
pub fn volume_constrained_verdict(
    asm: &IndexFormAssembly,
    spec: &SpectralResult,
    rel_tol: f64,
) -> Result<ConstrainedVerdict> {
    let pairs = smallest_eigenpairs(&asm.index_form, &asm.mass, 1, Some(&asm.load))?;
    let minimum = pairs.values[0];
    Ok(ConstrainedVerdict {
        minimum,
        residual: pairs.residuals[0],
        stable: minimum >= -spec.tolerance(rel_tol),
    })
}

/// Comparison of `d/ds H_f` along a family with the discrete `L_f(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobiCheck {
    pub points: usize,
    pub max_abs_error: f64,
    /// `max_abs_error / max(1, max |L_f u|)`.
    pub residual: f64,
    pub pass: bool,
}

/// Pass threshold of [`jacobi_fd_check`].
pub const JACOBI_FD_TOL: f64 = 1e-3;

/// Normal speed `<X, N>` of the family's field at each mesh vertex.
pub fn vertex_normal_speeds(family: &DeformedFamily) -> Result<DVector<f64>> {
    let (space, imm, mesh) = (family.space(), family.base(), family.base_mesh());
    let mut owner = vec![None; mesh.n_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for (corner, &v) in tri.v.iter().enumerate() {
            owner[v].get_or_insert((t, corner));
        }
    }
    let speeds = owner
        .iter()
        .map(|o| {
            let (t, corner) =
                o.ok_or_else(|| WstabError::Meshing("vertex without a triangle".into()))?;
            let tri = &mesh.triangles[t];
            let c = REF_CORNERS[corner];
            let xi = Vector2::new(c[0], c[1]);
            let uv = tri.param_jets(&xi);
            let jets = (imm.patches[tri.patch].chart)(&uv);
            let point = SurfacePoint::from_jet(space, &jets, imm.normal_sign(tri))?;
            Ok(values(&family.field().eval(tri.patch, &uv, &jets)).dot(&point.normal))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DVector::from_vec(speeds))
}

/// Compares the Richardson-extrapolated `d/ds H_f` at every Gauss3 point
/// with `L_f(u)` (discrete, interpolated), `u` the normal speed.
pub fn jacobi_fd_check(family: &DeformedFamily, asm: &IndexFormAssembly) -> Result<JacobiCheck> {
    let quad = Quadrature::ASSEMBLY;
    let base = extrinsic_geometry(family.space(), family.base(), family.base_mesh(), quad)?;
    let verdict = stationarity_verdict(&base, StationarityTolerances::default());
    if !verdict.volume_constrained {
        return Err(WstabError::Precondition(format!(
            "base surface is not f-stationary (H_f spread {:e})",
            verdict.h_f_spread
        )));
    }
    let u = vertex_normal_speeds(family)?;
    let lu = jacobi_apply(asm, &u)?;
    let h = 1e-3;
    let hf = |s: f64| -> Result<Vec<f64>> {
        Ok(family
            .geometry_at(s, quad)?
            .interior
            .iter()
            .map(|q| q.point.f_mean_curvature)
            .collect())
    };
    let (p1, m1, p2, m2) = (hf(h)?, hf(-h)?, hf(h / 2.0)?, hf(-h / 2.0)?);
    let mesh = family.base_mesh();
    let mut max_abs: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (i, q) in base.interior.iter().enumerate() {
        let coarse = (p1[i] - m1[i]) / (2.0 * h);
        let fine = (p2[i] - m2[i]) / h;
        let fd = (4.0 * fine - coarse) / 3.0;
        let phi = hats(&q.xi);
        let v = mesh.triangles[q.triangle].v;
        let exact: f64 = (0..3).map(|a| phi[a] * lu[v[a]]).sum();
        max_abs = max_abs.max((fd - exact).abs());
        scale = scale.max(exact.abs());
    }
    let residual = max_abs / scale;
    Ok(JacobiCheck {
        points: base.interior.len(),
        max_abs_error: max_abs,
        residual,
        pass: residual <= JACOBI_FD_TOL,
    })
}

/// Spectrum summary written to report files.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub surface: String,
    pub density: String,
    pub dof: usize,
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    pub verdict_strong: bool,
    pub verdict_volume_constrained: bool,
    pub constrained_minimum: f64,
    pub residual_max: f64,
}

impl SpectrumReport {
    pub fn new(
        surface: impl Into<String>,
        density: impl Into<String>,
        asm: &IndexFormAssembly,
        spec: &SpectralResult,
        constrained: &ConstrainedVerdict,
    ) -> Self {
        SpectrumReport {
            surface: surface.into(),
            density: density.into(),
            dof: asm.dof(),
            eigenvalues: spec.eigenvalues.clone(),
            lambda_min: spec.lambda_min(),
            verdict_strong: strong_stability_verdict(spec, VERDICT_TOL),
            verdict_volume_constrained: constrained.stable,
            constrained_minimum: constrained.minimum,
            residual_max: spec.residual_max().max(constrained.residual),
        }
    }
}

/// Per-vertex CSV: `vertex,x,y,z,u0,u1,...`.
pub fn eigenfunction_csv(mesh: &SurfaceMesh, spec: &SpectralResult) -> String {
    let mut out = String::from("vertex,x,y,z");
    for k in 0..spec.eigenfunctions.len() {
        out.push_str(&format!(",u{k}"));
    }
    out.push('\n');
    for (i, v) in mesh.vertices.iter().enumerate() {
        let p = v.position;
        out.push_str(&format!("{i},{:.12e},{:.12e},{:.12e}", p.x, p.y, p.z));
        for f in &spec.eigenfunctions {
            out.push_str(&format!(",{:.12e}", f[i]));
        }
        out.push('\n');
    }
    out
}
