use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ambient::DensitySpec;
use crate::functionals::{second_variation_fd, VariationField};
use crate::jet::{Jet2, Scalar};
use crate::linalg::symmetry_defect;
use crate::surface::SurfaceSpec;
use crate::testutil::*;

fn assembled(
    sp: &AmbientSpace,
    spec: &SurfaceSpec,
    res: usize,
) -> (Immersion, SurfaceMesh, IndexFormAssembly) {
    let (imm, mesh) = setup(sp, spec, res);
    let asm = assemble(sp, &imm, &mesh).unwrap();
    (imm, mesh, asm)
}

fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

fn hemisphere_spectrum(k: f64, res: usize, count: usize) -> SpectralResult {
    let (_, _, asm) = assembled(&half_space(radial_log(k)), &hemisphere(), res);
    robin_eigenproblem(&asm, count).unwrap()
}

fn slice_space() -> AmbientSpace {
    product(linear_s(), &[1], true)
}

#[test]
fn matrices_are_symmetric_with_constant_kernel() {
    let (_, _, asm) = assembled(&half_space(DensitySpec::Gaussian {}), &hemisphere(), 16);
    for m in [
        &asm.stiffness,
        &asm.potential,
        &asm.robin,
        &asm.mass,
        &asm.index_form,
    ] {
        assert!(symmetry_defect(m) <= 1e-12);
    }
    let n = asm.dof();
    assert!(crate::linalg::matvec(&asm.stiffness, &ones(n)).amax() < 1e-12);
    assert!(nalgebra_sparse::factorization::CscCholesky::factor(&asm.mass).is_ok());
    // Weighted area from the load vector.
    let (_, _, asm) = assembled(&half_space(constant()), &hemisphere(), 32);
    assert!((asm.load.sum() - TAU).abs() < 1e-4);
}

#[test]
fn index_form_of_constants() {
    let (_, _, asm) = assembled(&slice_space(), &slice(), 16);
    assert!(
        index_form_value(&asm, &ones(asm.dof()), &ones(asm.dof()))
            .unwrap()
            .abs()
            < 1e-12
    );

    // Potential 2 + k on the unit sphere: zero at k = -2.
    let (_, _, asm) = assembled(&half_space(radial_log(-2.0)), &hemisphere(), 16);
    assert!(
        index_form_value(&asm, &ones(asm.dof()), &ones(asm.dof()))
            .unwrap()
            .abs()
            < 1e-10
    );

    let (imm, mesh, asm) = assembled(&half_space(constant()), &hemisphere(), 32);
    let n = asm.dof();
    let discrete = index_form_value(&asm, &ones(n), &ones(n)).unwrap();
    assert!((discrete + 2.0 * TAU).abs() < 1e-3, "{discrete}");
    let data = extrinsic_geometry(&half_space(constant()), &imm, &mesh, Quadrature::FINE).unwrap();
    let one: ScalarJetFn = Arc::new(|_: &[Jet2; 3]| Jet2::constant(1.0));
    assert!((index_form_exact(&imm, &mesh, &data, &one) + 2.0 * TAU).abs() < 1e-4);
    assert!(matches!(
        index_form_value(&asm, &ones(n + 1), &ones(n)),
        Err(WstabError::DimensionMismatch { .. })
    ));
}

#[test]
fn index_form_value_converges_to_exact() {
    // Discrete I_f(I_h u, I_h u) against the exact quadrature of I_f(u, u).
    let sp = half_space(radial_log(-2.5));
    let u: ScalarJetFn = Arc::new(|p: &[Jet2; 3]| p[0] * p[1] + p[2] * 0.5 + 1.0);
    let mut errors = Vec::new();
    for res in [16, 32, 64] {
        let (imm, mesh, asm) = assembled(&sp, &hemisphere(), res);
        let data = extrinsic_geometry(&sp, &imm, &mesh, Quadrature::FINE).unwrap();
        let exact = index_form_exact(&imm, &mesh, &data, &u);
        let coeffs = DVector::from_iterator(
            mesh.n_vertices(),
            mesh.vertices.iter().map(|v| {
                let p = v.position;
                p.x * p.y + 0.5 * p.z + 1.0
            }),
        );
        errors.push((index_form_value(&asm, &coeffs, &coeffs).unwrap() - exact).abs());
    }
    assert!(errors[2] < 1e-2, "{errors:?}");
    assert!((errors[1] / errors[2]).log2() > 1.5, "{errors:?}");
}

#[test]
fn jacobi_operator_examples() {
    let (_, _, asm) = assembled(&slice_space(), &slice(), 12);
    let lu = jacobi_apply(&asm, &(ones(asm.dof()) * 3.0)).unwrap();
    assert!(lu.amax() < 1e-10);

    let (_, _, asm) = assembled(&half_space(constant()), &hemisphere(), 16);
    let n = asm.dof();
    let lu = jacobi_apply(&asm, &ones(n)).unwrap();
    assert!(lu.iter().all(|v| (v - 2.0).abs() < 1e-10));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let lhs = jacobi_apply(&asm, &(&u * 2.0 - &v * 0.5)).unwrap();
    let rhs = jacobi_apply(&asm, &u).unwrap() * 2.0 - jacobi_apply(&asm, &v).unwrap() * 0.5;
    assert!((lhs - rhs).amax() < 1e-12 * (1.0 + n as f64));
    assert!(jacobi_symmetry_residual(&asm, &u, &v).unwrap() <= 1e-8);
    assert_eq!(jacobi_symmetry_residual(&asm, &u, &u).unwrap(), 0.0);
}

#[test]
fn hemisphere_spectrum_matches_closed_form() {
    for (k, expected) in [(-2.5, 0.5), (-1.5, -0.5)] {
        let spec = hemisphere_spectrum(k, 64, 4);
        assert!(
            (spec.lambda_min() - expected).abs() < 2e-2,
            "k = {k}: {:?}",
            spec.eigenvalues
        );
        // First non-constant modes x, y with Neumann eigenvalue 2.
        assert!(
            (spec.eigenvalues[1] + k).abs() < 2e-2,
            "k = {k}: {:?}",
            spec.eigenvalues
        );
        assert!((spec.eigenvalues[2] + k).abs() < 2e-2);
        assert!(spec.residual_max() <= 1e-8);
    }
    assert!(strong_stability_verdict(
        &hemisphere_spectrum(-2.5, 32, 3),
        VERDICT_TOL
    ));
    assert!(!strong_stability_verdict(
        &hemisphere_spectrum(-1.5, 32, 3),
        VERDICT_TOL
    ));
}

#[test]
fn eigenvalues_converge_at_second_order() {
    // The constant mode is exact in P1, so the rate is measured on the
    // first non-constant eigenvalue, -k.
    let k = -2.5;
    let errors: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&res| (hemisphere_spectrum(k, res, 2).eigenvalues[1] + k).abs())
        .collect();
    for w in errors.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{errors:?}");
    }
}

#[test]
fn threshold_in_k() {
    let ks = [-3.0, -2.5, -2.0, -1.5, -1.0];
    let mins: Vec<f64> = ks
        .iter()
        .map(|&k| hemisphere_spectrum(k, 16, 1).lambda_min())
        .collect();
    assert!(mins.windows(2).all(|w| w[1] < w[0]), "{mins:?}");
    assert!(mins[2].abs() < 2e-2);
    for (k, m) in ks.iter().zip(&mins) {
        assert!((m + 2.0 + k).abs() < 2e-2);
    }
}

#[test]
fn product_slice_is_marginally_stable() {
    let (_, _, asm) = assembled(&slice_space(), &slice(), 24);
    let spec = robin_eigenproblem(&asm, 3).unwrap();
    assert!(spec.lambda_min().abs() < 1e-3, "{:?}", spec.eigenvalues);
    assert!(strong_stability_verdict(&spec, VERDICT_TOL));
    assert!(
        volume_constrained_verdict(&asm, &spec, VERDICT_TOL)
            .unwrap()
            .stable
    );
}

#[test]
fn round_sphere_is_unstable() {
    let sphere = SurfaceSpec::Sphere {
        radius: 1.0,
        center: [0.0; 3],
    };
    let (_, _, asm) = assembled(
        &space(constant(), crate::ambient::BoundaryKind::None {}),
        &sphere,
        32,
    );
    let spec = robin_eigenproblem(&asm, 4).unwrap();
    assert!(
        (spec.lambda_min() + 2.0).abs() < 2e-2,
        "{:?}",
        spec.eigenvalues
    );
    // Translations: lambda = 2 - 2 = 0, multiplicity three.
    for l in &spec.eigenvalues[1..4] {
        assert!(l.abs() < 2e-2, "{:?}", spec.eigenvalues);
    }
    assert!(!strong_stability_verdict(&spec, VERDICT_TOL));
    assert!(
        volume_constrained_verdict(&asm, &spec, VERDICT_TOL)
            .unwrap()
            .stable
    );
}

#[test]
fn volume_constrained_verdicts() {
    // Gaussian density: translations along dM are mean-zero and negative.
    let (_, _, asm) = assembled(&half_space(DensitySpec::Gaussian {}), &hemisphere(), 32);
    let spec = robin_eigenproblem(&asm, 3).unwrap();
    let v = volume_constrained_verdict(&asm, &spec, VERDICT_TOL).unwrap();
    assert!(!v.stable && v.minimum < -1e-3, "{v:?}");
    assert!(v.minimum >= spec.lambda_min() - 1e-10);

    // Convex cone, log-convex radial density.
    let cone = cone_space(
        0.6,
        DensitySpec::RadialSmooth {
            coeffs: vec![0.0, 0.0, 0.5],
        },
    );
    let cap = SurfaceSpec::SphericalCap {
        radius: 1.0,
        half_angle: 0.6,
        center: [0.0; 3],
    };
    let (_, _, asm) = assembled(&cone, &cap, 32);
    let spec = robin_eigenproblem(&asm, 3).unwrap();
    assert!(
        (spec.lambda_min() + 1.0).abs() < 1e-2,
        "{:?}",
        spec.eigenvalues
    );
    let v = volume_constrained_verdict(&asm, &spec, VERDICT_TOL).unwrap();
    assert!(v.stable, "{v:?}");
    assert!(v.residual <= 1e-8);
}

#[test]
fn density_scaling_scales_the_index_form() {
    let c: f64 = 3.7;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = half_space(radial_log(-1.5));
    let scaled = half_space(DensitySpec::Expression {
        psi: format!("-1.5 * ln(sqrt(x^2 + y^2 + z^2)) + {}", c.ln()),
        params: Default::default(),
    });
    let (_, _, a1) = assembled(&base, &hemisphere(), 16);
    let (_, _, a2) = assembled(&scaled, &hemisphere(), 16);
    let u = DVector::from_fn(a1.dof(), |_, _| rng.random_range(-1.0..1.0));
    let i1 = index_form_value(&a1, &u, &u).unwrap();
    let i2 = index_form_value(&a2, &u, &u).unwrap();
    assert!((i2 - c * i1).abs() < 1e-9 * i2.abs().max(1.0), "{i1} {i2}");
    let (s1, s2) = (
        robin_eigenproblem(&a1, 2).unwrap(),
        robin_eigenproblem(&a2, 2).unwrap(),
    );
    assert!((s1.lambda_min() - s2.lambda_min()).abs() < 1e-9);
    assert_eq!(
        strong_stability_verdict(&s1, VERDICT_TOL),
        strong_stability_verdict(&s2, VERDICT_TOL)
    );
}

#[test]
fn jacobi_matches_derivative_of_f_mean_curvature() {
    let radial = || VariationField::new("radial", Arc::new(|p: &[Jet2; 3]| *p));
    let cases = [
        (
            slice_space(),
            slice(),
            VariationField::constant("shift", Vector3::x()),
        ),
        (half_space(radial_log(-2.0)), hemisphere(), radial()),
        (half_space(radial_log(-2.5)), hemisphere(), radial()),
    ];
    for (sp, spec, field) in cases {
        let (imm, mesh, asm) = assembled(&sp, &spec, 24);
        let fam = DeformedFamily::new(&sp, &imm, &mesh, field).unwrap();
        let check = jacobi_fd_check(&fam, &asm).unwrap();
        assert!(check.pass, "{spec:?}: {check:?}");
    }
    // dH_f/dr = -0.5 for k = -2.5.
    let (imm, mesh, asm) = assembled(&half_space(radial_log(-2.5)), &hemisphere(), 8);
    let fam = DeformedFamily::new(&half_space(radial_log(-2.5)), &imm, &mesh, radial()).unwrap();
    let lu = jacobi_apply(&asm, &vertex_normal_speeds(&fam).unwrap()).unwrap();
    assert!(lu.iter().all(|v| (v + 0.5).abs() < 1e-9));

    let sp = half_space(constant());
    let perturbed = SurfaceSpec::PerturbedHemisphere {
        radius: 1.0,
        amplitude: 0.05,
        seed: 1,
    };
    let (imm, mesh, asm) = assembled(&sp, &perturbed, 8);
    let fam = DeformedFamily::new(&sp, &imm, &mesh, VariationField::zero()).unwrap();
    assert!(matches!(
        jacobi_fd_check(&fam, &asm),
        Err(WstabError::Precondition(_))
    ));
}

#[test]
fn second_variation_equals_index_form() {
    let sp_h = half_space(constant());
    let sp_k = half_space(radial_log(-2.5));
    let sp_s = slice_space();
    let hemisphere_us: Vec<ScalarJetFn> = vec![
        Arc::new(|_: &[Jet2; 3]| Jet2::constant(1.0)),
        Arc::new(|p: &[Jet2; 3]| p[0] + p[1] * 0.5),
        Arc::new(|p: &[Jet2; 3]| p[2] * p[2] + p[0] * p[1] * 0.7 - 0.3),
    ];
    let slice_us: Vec<ScalarJetFn> = vec![
        Arc::new(|_: &[Jet2; 3]| Jet2::constant(1.0)),
        Arc::new(|p: &[Jet2; 3]| p[1].sin() * 0.5 + p[2] * 0.3),
        Arc::new(|p: &[Jet2; 3]| p[1].cos() * p[2] + p[2] * p[2] * 0.4),
    ];
    for (sp, spec, us) in [
        (&sp_h, hemisphere(), &hemisphere_us),
        (&sp_k, hemisphere(), &hemisphere_us),
        (&sp_s, slice(), &slice_us),
    ] {
        let (imm, mesh) = setup(sp, &spec, 32);
        let data = extrinsic_geometry(sp, &imm, &mesh, Quadrature::FINE).unwrap();
        for u in us {
            let exact = index_form_exact(&imm, &mesh, &data, u);
            let field = VariationField::normal(&imm, "u N", u.clone()).unwrap();
            let fam = DeformedFamily::new(sp, &imm, &mesh, field).unwrap();
            let fd = second_variation_fd(&fam, Quadrature::FINE).unwrap();
            assert!(
                (fd.value - exact).abs() <= 1e-3 * exact.abs().max(1.0),
                "{spec:?}: fd {} vs I_f {exact}",
                fd.value
            );
        }
    }
}

#[test]
fn eigenfunction_csv_has_one_row_per_vertex() {
    let (_, mesh, asm) = assembled(&half_space(constant()), &hemisphere(), 8);
    let spec = robin_eigenproblem(&asm, 2).unwrap();
    let csv = eigenfunction_csv(&mesh, &spec);
    assert_eq!(csv.lines().count(), mesh.n_vertices() + 1);
    assert!(csv.starts_with("vertex,x,y,z,u0,u1\n"));
}
