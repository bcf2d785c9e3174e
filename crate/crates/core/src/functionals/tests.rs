use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::Vector3;

use super::*;
use crate::ambient::{AmbientSpace, DensitySpec};
use crate::jet::Scalar;
use crate::surface::{extrinsic_geometry, mesh_from_immersion, Immersion, SurfaceSpec};
use crate::testutil::*;
use crate::WstabError;

fn radial() -> VariationField {
    VariationField::new("radial", Arc::new(|p: &[Jet2; 3]| *p))
}

fn family(
    sp: &AmbientSpace,
    spec: &SurfaceSpec,
    res: usize,
    field: VariationField,
) -> DeformedFamily {
    let imm = spec.build().unwrap();
    let mesh = mesh_from_immersion(sp, &imm, res).unwrap();
    DeformedFamily::new(sp, &imm, &mesh, field).unwrap()
}

#[test]
fn hemisphere_inflation() {
    let sp = half_space(constant());
    let fam = family(&sp, &hemisphere(), 64, radial());
    let fd = first_variation_fd(&fam, Quadrature::FINE).unwrap();
    assert!((fd.value - 2.0 * TAU).abs() < 1e-4, "{fd:?}");
    let data = extrinsic_geometry(&sp, fam.base(), fam.base_mesh(), Quadrature::FINE).unwrap();
    let formula = first_variation_formula(fam.base(), fam.base_mesh(), &data, fam.field());
    assert!((formula - 2.0 * TAU).abs() < 1e-4, "{formula}");
    let vol = volume_variation_fd(&fam, Quadrature::FINE).unwrap();
    assert!((vol.value - TAU).abs() < 1e-4, "{vol:?}");
    assert!(
        (volume_first_variation(fam.base(), fam.base_mesh(), &data, fam.field()) - TAU).abs()
            < 1e-4
    );
}

#[test]
fn swept_volume_closed_forms() {
    let sp = cylinder(constant());
    let fam = family(
        &sp,
        &disk(0.5),
        16,
        VariationField::constant("up", Vector3::z()),
    );
    for s in [-0.3, 0.2, 0.7] {
        let v = fam.swept_volume(s, Quadrature::FINE).unwrap();
        assert!((v - PI * s).abs() < 1e-6, "s = {s}: {v}");
    }

    let sp = half_space(constant());
    let fam = family(&sp, &hemisphere(), 48, radial());
    for s in [0.25, 0.5, -0.2] {
        let v = fam.swept_volume(s, Quadrature::FINE).unwrap();
        let exact = TAU / 3.0 * ((1.0 + s).powi(3) - 1.0);
        assert!((v - exact).abs() < 1e-4, "s = {s}: {v} vs {exact}");
    }
}

#[test]
fn swept_volume_is_additive() {
    let sp = cylinder(DensitySpec::Gaussian {});
    let up = || VariationField::constant("up", Vector3::z());
    let total = family(&sp, &disk(0.2), 16, up())
        .swept_volume(0.5, Quadrature::FINE)
        .unwrap();
    let first = family(&sp, &disk(0.2), 16, up())
        .swept_volume(0.2, Quadrature::FINE)
        .unwrap();
    let second = family(&sp, &disk(0.4), 16, up())
        .swept_volume(0.3, Quadrature::FINE)
        .unwrap();
    assert!(
        (total - first - second).abs() < 1e-10,
        "{total} vs {}",
        first + second
    );
}

#[test]
fn family_range_is_enforced() {
    let sp = half_space(constant());
    let fam = family(&sp, &hemisphere(), 8, radial()).with_range(0.1);
    assert!(matches!(
        fam.swept_volume(0.2, Quadrature::FINE),
        Err(WstabError::Input(_))
    ));
    assert!(fam.immersion_at(-0.1).is_ok());
}

#[test]
fn weighted_areas() {
    let sp = half_space(constant());
    let (imm, mesh) = setup(&sp, &hemisphere(), 64);
    assert!((weighted_area(&sp, &imm, &mesh, Quadrature::FINE).unwrap() - TAU).abs() < 1e-4);

    let sp = cylinder(radial_log(2.0));
    let (imm, mesh) = setup(&sp, &disk(0.0), 32);
    assert!((weighted_area(&sp, &imm, &mesh, Quadrature::FINE).unwrap() - PI / 2.0).abs() < 1e-4);

    let sp = product(constant(), &[1], true);
    let (imm, mesh) = setup(&sp, &slice(), 8);
    assert!((weighted_area(&sp, &imm, &mesh, Quadrature::FINE).unwrap() - 2.0 * TAU).abs() < 1e-8);
}

#[test]
fn tangential_rotation_does_not_change_area() {
    let sp = half_space(DensitySpec::Gaussian {});
    let (imm, mesh) = setup(&sp, &hemisphere(), 24);
    let spin = VariationField::new(
        "spin",
        Arc::new(|p: &[Jet2; 3]| [-p[1], p[0], Jet2::constant(0.0)]),
    );
    let fam = DeformedFamily::new(&sp, &imm, &mesh, spin).unwrap();
    let fd = first_variation_fd(&fam, Quadrature::FINE).unwrap();
    assert!(fd.value.abs() < 1e-8, "{fd:?}");
    let data = extrinsic_geometry(&sp, &imm, &mesh, Quadrature::FINE).unwrap();
    assert!(first_variation_formula(&imm, &mesh, &data, fam.field()).abs() < 1e-8);
}

#[test]
fn zero_field_has_zero_variations() {
    let sp = half_space(DensitySpec::Gaussian {});
    let fam = family(&sp, &hemisphere(), 8, VariationField::zero());
    assert_eq!(
        first_variation_fd(&fam, Quadrature::FINE).unwrap().value,
        0.0
    );
    assert_eq!(
        second_variation_fd(&fam, Quadrature::FINE).unwrap().value,
        0.0
    );
}

#[test]
fn inadmissible_field_is_rejected() {
    let sp = half_space(constant());
    let (imm, mesh) = setup(&sp, &hemisphere(), 8);
    let up = VariationField::constant("up", Vector3::z());
    assert!(matches!(
        DeformedFamily::new(&sp, &imm, &mesh, up),
        Err(WstabError::Input(_))
    ));
}

#[test]
fn boundary_stays_on_the_ambient_boundary() {
    // Normal variation of a cone cap: the straight displacement leaves the
    // cone, the corrected family does not.
    let sp = cone_space(0.6, constant());
    let spec = SurfaceSpec::SphericalCap {
        radius: 1.0,
        half_angle: 0.6,
        center: [0.0; 3],
    };
    let (imm, mesh) = setup(&sp, &spec, 16);
    let u: ScalarJetFn = Arc::new(|p: &[Jet2; 3]| p[0] * 0.8 + 1.0);
    let field = VariationField::normal(&imm, "u N", u).unwrap();
    let fam = DeformedFamily::new(&sp, &imm, &mesh, field).unwrap();
    for s in [0.05, -0.1, 0.2] {
        let moved = fam.mesh_at(s).unwrap();
        let data = fam.geometry_at(s, Quadrature::FINE).unwrap();
        assert!(moved.n_vertices() == mesh.n_vertices());
        for b in &data.boundary {
            let phi = sp.phi(&b.position).unwrap();
            assert!(phi.abs() < 1e-12, "s = {s}: Phi = {phi:e}");
        }
    }
    // Velocity at s = 0 is exactly X.
    for tri in mesh.triangles.iter().step_by(7) {
        for xi in crate::surface::REF_CORNERS
            .iter()
            .map(|c| nalgebra::Vector2::new(c[0], c[1]))
        {
            let uv = tri.param_point(&xi);
            let jets = [Jet2::constant(uv.x), Jet2::constant(uv.y)];
            let p = (imm.patches[tri.patch].chart)(&jets);
            let x = values(&fam.field().eval(tri.patch, &jets, &p));
            let err = (fam.velocity(tri.patch, &uv, 0.0) - x).norm();
            assert!(err < 1e-10, "{uv:?}: {err:e}");
        }
    }
}

#[test]
fn divergence_identity_holds() {
    let field = VariationField::new(
        "poly",
        Arc::new(|p: &[Jet2; 3]| {
            [
                p[0] + p[1] * p[2],
                p[1] * p[1] - p[0] * 0.5,
                p[2] * p[2] + 0.3,
            ]
        }),
    );
    for (sp, spec) in [
        (half_space(DensitySpec::Gaussian {}), hemisphere()),
        (cylinder(radial_log(-1.0)), disk(0.5)),
        (
            cone_space(0.6, radial_log(-2.0)),
            SurfaceSpec::SphericalCap {
                radius: 1.3,
                half_angle: 0.6,
                center: [0.0; 3],
            },
        ),
    ] {
        let (imm, mesh) = setup(&sp, &spec, 64);
        let data = extrinsic_geometry(&sp, &imm, &mesh, Quadrature::FINE).unwrap();
        let r = divergence_theorem_residual(&imm, &mesh, &data, &field);
        assert!(r.residual <= 1e-4, "{spec:?}: {r:?}");
        assert!(r.divergence.abs() > 1e-2);
    }
}

#[test]
fn cutoff_fields_are_smooth() {
    let c = Cutoff {
        patch: 0,
        center: [0.2, 0.1],
        radius: 0.5,
    };
    // Value, gradient and Hessian vanish on the support circle.
    let on = c.eval(0, &[Jet2::var(0.7, 0), Jet2::var(0.1, 1)]);
    assert!(on.v.abs() < 1e-15 && on.d.iter().all(|d| d.abs() < 1e-15));
    let near = c.eval(0, &[Jet2::var(0.7 - 1e-12, 0), Jet2::var(0.1, 1)]);
    assert!(near.h.iter().flatten().all(|h| h.abs() < 1e-6));
    assert_eq!(c.eval(1, &[Jet2::var(0.2, 0), Jet2::var(0.1, 1)]).v, 0.0);
    assert_eq!(c.eval(0, &[Jet2::var(0.2, 0), Jet2::var(0.1, 1)]).v, 1.0);

    let sp = half_space(radial_log(-2.0));
    let (imm, mesh) = setup(&sp, &hemisphere(), 24);
    let u: ScalarJetFn = Arc::new(|p: &[Jet2; 3]| p[1] + 2.0);
    let field = VariationField::normal(&imm, "bump", u)
        .unwrap()
        .with_cutoff(c)
        .unwrap();
    let fam = DeformedFamily::new(&sp, &imm, &mesh, field).unwrap();
    let fd = first_variation_fd(&fam, Quadrature::FINE).unwrap();
    let data = extrinsic_geometry(&sp, &imm, &mesh, Quadrature::FINE).unwrap();
    let formula = first_variation_formula(&imm, &mesh, &data, fam.field());
    assert!(
        (fd.value - formula).abs() <= 1e-6f64.max(1e-4 * formula.abs()),
        "{fd:?} vs {formula}"
    );
    assert!(VariationField::sum("s", fam.field(), &VariationField::zero()).is_err());
}

fn densities() -> Vec<DensitySpec> {
    vec![
        DensitySpec::Gaussian {},
        radial_log(-3.0),
        radial_log(-2.0),
        radial_log(-1.0),
        constant(),
    ]
}

/// Normal, tangential and mixed admissible fields for a base surface.
fn fields(imm: &Immersion, kind: &str) -> Vec<VariationField> {
    let (u, v): (ScalarJetFn, crate::surface::JetVectorFn) = match kind {
        "hemisphere" => (
            Arc::new(|p: &[Jet2; 3]| p[0] * 0.3 + p[2] * p[2] * 0.2 + 1.0),
            Arc::new(|p: &[Jet2; 3]| [-p[1] + p[2] * 0.3, p[0], p[0] * p[2] * 0.5]),
        ),
        "disk" => (
            Arc::new(|p: &[Jet2; 3]| p[0] * p[1] * 0.4 + p[1] * 0.2 + 1.0),
            Arc::new(|p: &[Jet2; 3]| {
                let w = -(p[0] * p[0] + p[1] * p[1]) + 1.0;
                [-p[1] + w * 0.5, p[0] + w * p[0] * 0.3, Jet2::constant(0.7)]
            }),
        ),
        _ => (
            Arc::new(|p: &[Jet2; 3]| p[1].sin() * 0.3 + p[2] * 0.2 + 1.0),
            Arc::new(|p: &[Jet2; 3]| {
                let w = -(p[2] * p[2]) + 1.0;
                [p[2] * 0.3, p[2] * 0.3 + 1.0, w * p[1].cos() * 0.4]
            }),
        ),
    };
    let n = VariationField::normal(imm, "normal", u).unwrap();
    let t = VariationField::tangential(imm, "tangential", v).unwrap();
    let m = VariationField::sum("mixed", &n, &t).unwrap();
    vec![n, t, m]
}

#[test]
fn first_variation_formula_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for d in densities() {
        let cases = [
            ("hemisphere", half_space(d.clone()), hemisphere()),
            ("disk", cylinder(d.clone()), disk(0.5)),
            ("slice", product(d.clone(), &[1], true), slice_at(2.0)),
        ];
        for (kind, sp, spec) in cases {
            let (imm, mesh) = setup(&sp, &spec, 24);
            let data = extrinsic_geometry(&sp, &imm, &mesh, Quadrature::FINE).unwrap();
            for field in fields(&imm, kind) {
                let formula = first_variation_formula(&imm, &mesh, &data, &field);
                let fam = DeformedFamily::new(&sp, &imm, &mesh, field.clone()).unwrap();
                let fd = first_variation_fd(&fam, Quadrature::FINE).unwrap();
                let err = (fd.value - formula).abs();
                let tol = 1e-6f64.max(1e-4 * formula.abs());
                worst = worst.max(err / tol);
                assert!(
                    err <= tol,
                    "{kind} {d:?} {}: fd {} formula {formula}",
                    field.name,
                    fd.value
                );
            }
        }
    }
    assert!(worst <= 1.0);
}

#[test]
fn second_variation_of_inflated_hemisphere() {
    // F(s) = A(s) - 2 V(s) = 2 pi (1+s)^2 - (4 pi / 3) ((1+s)^3 - 1).
    let sp = half_space(constant());
    let fam = family(&sp, &hemisphere(), 32, radial());
    let fd = second_variation_fd(&fam, Quadrature::FINE).unwrap();
    assert!((fd.value + 2.0 * TAU).abs() < 1e-3, "{fd:?}");
}

#[test]
fn second_variation_requires_stationary_base() {
    let sp = half_space(constant());
    let spec = SurfaceSpec::PerturbedHemisphere {
        radius: 1.0,
        amplitude: 0.05,
        seed: 3,
    };
    let (imm, mesh) = setup(&sp, &spec, 12);
    let fam = DeformedFamily::new(&sp, &imm, &mesh, VariationField::zero()).unwrap();
    assert!(matches!(
        second_variation_fd(&fam, Quadrature::FINE),
        Err(WstabError::Precondition(_))
    ));
}
