use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::*;

fn space(d: DensitySpec, b: BoundaryKind) -> AmbientSpace {
    AmbientSpace::euclidean(d.build().unwrap(), b.build().unwrap())
}

fn none() -> BoundaryKind {
    BoundaryKind::None {}
}

/// Second derivatives of `psi` by plain central differences; independent of
/// the jet machinery.
fn fd_hessian(s: &AmbientSpace, p: &Vector3<f64>) -> Matrix3<f64> {
    let h = 1e-4;
    Matrix3::from_fn(|i, k| {
        let ei = Vector3::ith(i, h);
        let ek = Vector3::ith(k, h);
        (s.psi(&(p + ei + ek)) - s.psi(&(p + ei - ek)) - s.psi(&(p - ei + ek))
            + s.psi(&(p - ei - ek)))
            / (4.0 * h * h)
    })
}

#[test]
fn gaussian_ricci_is_two() {
    let s = space(DensitySpec::Gaussian {}, none());
    for p in sample_ball(20, &Vector3::zeros(), 2.0, 1) {
        for v in sample_ball(5, &Vector3::zeros(), 1.0, 2) {
            let v = v.normalize();
            assert!((bakry_emery_ricci(&s, &p, &v).unwrap() - 2.0).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_density_is_curvature_free() {
    let s = space(DensitySpec::Constant { psi0: 0.7 }, none());
    let p = Vector3::new(0.3, -1.0, 2.0);
    assert_eq!(bakry_emery_ricci(&s, &p, &Vector3::x()).unwrap(), 0.0);
    assert_eq!(perelman_scalar(&s, &p).unwrap(), 0.0);
}

#[test]
fn radial_log_ricci_matches_fd_oracle() {
    let s = space(DensitySpec::RadialLog { k: -2.0 }, none());
    let p = Vector3::new(1.0, 0.0, 0.0);
    let v = Vector3::new(0.0, 1.0, 0.0);
    let oracle = -(v.transpose() * fd_hessian(&s, &p) * v)[0];
    let got = bakry_emery_ricci(&s, &p, &v).unwrap();
    assert!((oracle - 2.0).abs() < 1e-6);
    assert!((got - 2.0).abs() < 1e-12);
}

#[test]
fn non_unit_direction_is_rejected() {
    let s = space(DensitySpec::Gaussian {}, none());
    let err = bakry_emery_ricci(&s, &Vector3::zeros(), &Vector3::new(1.0, 1.0, 0.0));
    assert!(matches!(err, Err(WstabError::Input(_))));
}

#[test]
fn builtin_densities_match_fd_hessian() {
    let specs = [
        DensitySpec::Gaussian {},
        DensitySpec::RadialLog { k: -3.0 },
        DensitySpec::RadialLog { k: 2.0 },
        DensitySpec::Linear {
            a: [1.0, -2.0, 0.5],
            b: 0.3,
        },
        DensitySpec::RadialSmooth {
            coeffs: vec![0.0, 0.0, 0.5, 0.1, -0.05],
        },
        DensitySpec::Quadratic {
            diag: [-1.0, 2.0, 0.5],
            a: [0.1, 0.0, -0.3],
            b: 1.0,
        },
    ];
    let pts = sample_ball(100, &Vector3::new(0.0, 0.0, 2.0), 1.0, 7);
    for spec in specs {
        let s = space(spec.clone(), none());
        for p in &pts {
            let fd = fd_hessian(&s, p);
            let an = s.hess_psi(p);
            let scale = an.abs().max().max(1.0);
            assert!((fd - an).abs().max() / scale < 1e-6, "{spec:?} at {p:?}");
            let v = (p + Vector3::new(0.3, 0.1, -0.2)).normalize();
            let want = -(v.transpose() * fd * v)[0];
            let got = bakry_emery_ricci(&s, p, &v).unwrap();
            assert!((want - got).abs() / scale < 1e-6);
        }
    }
}

#[test]
fn gaussian_perelman_scalar() {
    let s = space(DensitySpec::Gaussian {}, none());
    let p = Vector3::new(0.6, 0.0, 0.8);
    assert!((perelman_scalar(&s, &p).unwrap() - 8.0).abs() < 1e-12);
    for p in sample_ball(50, &Vector3::zeros(), 3.0, 3) {
        let want = 12.0 - 4.0 * p.norm_squared();
        assert!((perelman_scalar(&s, &p).unwrap() - want).abs() < 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn perelman_is_not_trace_of_ricci_f() {
    let s = space(DensitySpec::Gaussian {}, none());
    let p = Vector3::new(2.0, 0.0, 0.0);
    let trace: f64 = (0..3)
        .map(|i| bakry_emery_ricci(&s, &p, &Vector3::ith(i, 1.0)).unwrap())
        .sum();
    assert!((trace - 6.0).abs() < 1e-12);
    let sf = perelman_scalar(&s, &p).unwrap();
    assert!((sf + 4.0).abs() < 1e-12);
    assert!((trace - sf).abs() > 1.0);
}

#[test]
fn radial_log_perelman_closed_form() {
    for k in [-3.0, -2.0, -1.0, 1.0, 2.0] {
        let s = space(DensitySpec::RadialLog { k }, none());
        for p in sample_ball(30, &Vector3::new(1.0, 1.0, 1.0), 0.9, 11) {
            let want = -k * (k + 2.0) / p.norm_squared();
            let got = perelman_scalar(&s, &p).unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1e-300) + 1e-14,
                "k={k}"
            );
        }
    }
}

#[test]
fn inner_normals() {
    let s = space(
        DensitySpec::Constant { psi0: 0.0 },
        BoundaryKind::HalfSpace {
            normal: [1.0, 0.0, 0.0],
            offset: 0.0,
        },
    );
    let xi = boundary_inner_normal(&s, &Vector3::new(0.0, 1.0, 0.0)).unwrap();
    assert!((xi - Vector3::x()).norm() < 1e-15);

    let r = 0.7;
    let s = space(
        DensitySpec::Constant { psi0: 0.0 },
        BoundaryKind::BallComplement {
            center: [0.0; 3],
            radius: r,
        },
    );
    let xi = boundary_inner_normal(&s, &Vector3::new(r, 0.0, 0.0)).unwrap();
    assert!((xi - Vector3::x()).norm() < 1e-15);

    let s = space(
        DensitySpec::Constant { psi0: 0.0 },
        BoundaryKind::Slab {
            axis: [0.0, 0.0, 1.0],
            half_width: 1.0,
            center: 0.0,
        },
    );
    let p = Vector3::new(0.0, 0.0, 1.0);
    let xi = boundary_inner_normal(&s, &p).unwrap();
    assert!((xi + Vector3::z()).norm() < 1e-15);
    assert!(s.phi(&(p + 1e-4 * xi)).unwrap() > 0.0);
    assert!(boundary_inner_normal(&s, &Vector3::new(0.0, 0.0, 0.5)).is_err());
}

#[test]
fn singular_boundary_gradient_is_an_error() {
    let s = AmbientSpace::euclidean(
        DensitySpec::Constant { psi0: 0.0 }.build().unwrap(),
        Some(BoundarySpec {
            phi: Field::from_smooth("degenerate", builtin_expr("x^2")),
            excluded: vec![],
        }),
    );
    let err = boundary_inner_normal(&s, &Vector3::zeros());
    assert!(
        matches!(err, Err(WstabError::SingularBoundary(_))),
        "{err:?}"
    );
}

fn builtin_expr(src: &str) -> super::builtin::ExprField {
    super::builtin::ExprField(
        crate::expr::Expr::parse(src, &["x", "y", "z"], &Default::default()).unwrap(),
    )
}

/// Shape operator of a round sphere of radius `r` with respect to the normal
/// pointing towards its center: `II(v, v) = |v|^2 / r`.
fn sphere_ii(r: f64, v: &Vector3<f64>, towards_center: bool) -> f64 {
    let s = v.norm_squared() / r;
    if towards_center {
        s
    } else {
        -s
    }
}

#[test]
fn second_fundamental_form_of_spheres_and_planes() {
    let rad = 1.5;
    let ball = space(
        DensitySpec::Constant { psi0: 0.0 },
        BoundaryKind::Ball {
            center: [0.0; 3],
            radius: rad,
        },
    );
    let comp = space(
        DensitySpec::Constant { psi0: 0.0 },
        BoundaryKind::BallComplement {
            center: [0.0; 3],
            radius: rad,
        },
    );
    for p in sample_boundary(&ball, 20, &Vector3::zeros(), 2.0, 5) {
        let t = p.cross(&Vector3::new(0.3, -0.4, 1.0)).normalize();
        let ii = boundary_second_fundamental(&ball, &p, &t, &t).unwrap();
        assert!((ii - sphere_ii(rad, &t, true)).abs() < 1e-12);
        let ii = boundary_second_fundamental(&comp, &p, &t, &t).unwrap();
        assert!((ii - sphere_ii(rad, &t, false)).abs() < 1e-12);
    }
    let half = space(
        DensitySpec::Gaussian {},
        BoundaryKind::HalfSpace {
            normal: [1.0, 0.0, 0.0],
            offset: 0.0,
        },
    );
    let p = Vector3::new(0.0, 0.4, -1.0);
    let ii = boundary_second_fundamental(&half, &p, &Vector3::y(), &Vector3::z()).unwrap();
    assert_eq!(ii, 0.0);
    assert!(boundary_second_fundamental(&half, &p, &Vector3::x(), &Vector3::y()).is_err());
    assert_eq!(boundary_f_mean_curvature(&half, &p).unwrap(), 0.0);
}

#[test]
fn radial_log_boundary_f_mean_curvature() {
    for k in [-3.0, -2.0, -1.0, 0.5] {
        for r in [0.5, 1.0, 2.0] {
            let s = space(
                DensitySpec::RadialLog { k },
                BoundaryKind::BallComplement {
                    center: [0.0; 3],
                    radius: r,
                },
            );
            for p in sample_boundary(&s, 10, &Vector3::zeros(), 2.0 * r, 9) {
                let h = boundary_f_mean_curvature(&s, &p).unwrap();
                let want = -(k + 2.0) / r;
                assert!((h - want).abs() < 1e-10, "k={k} r={r}: {h} vs {want}");
            }
        }
    }
}

#[test]
fn consistency_checks() {
    let pts = sample_ball(100, &Vector3::zeros(), 1.0, 42);
    let s = space(DensitySpec::Gaussian {}, none());
    let rep = density_consistency_check(&s, &pts);
    assert!(rep.pass, "{rep:?}");
    let s = space(DensitySpec::Constant { psi0: 1.0 }, none());
    let rep = density_consistency_check(&s, &pts);
    assert!(rep.pass && rep.max_residual == 0.0);

    let good = DensitySpec::Gaussian {}.build().unwrap();
    let g = good.grad.clone();
    let corrupted = Field::new(
        "corrupted",
        good.value.clone(),
        std::sync::Arc::new(move |p| 1.1 * g(p)),
        good.hess.clone(),
    );
    let s = AmbientSpace::euclidean(corrupted, None);
    let rep = density_consistency_check(&s, &pts);
    assert!(!rep.pass);
}

#[test]
fn boundary_probes_and_consistency() {
    let kinds = [
        BoundaryKind::HalfSpace {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
        },
        BoundaryKind::Slab {
            axis: [0.0, 0.0, 1.0],
            half_width: 1.0,
            center: 0.0,
        },
        BoundaryKind::Ball {
            center: [0.0; 3],
            radius: 1.0,
        },
        BoundaryKind::BallComplement {
            center: [0.0; 3],
            radius: 1.0,
        },
        BoundaryKind::Cone {
            axis: [0.0, 0.0, 1.0],
            half_angle: PI / 4.0,
            apex_exclusion: 1e-3,
        },
        BoundaryKind::Cylinder {
            axis: [0.0, 0.0, 1.0],
            radius: 1.0,
        },
    ];
    for kind in kinds {
        let s = space(DensitySpec::Gaussian {}, kind.clone());
        // Stay clear of the cone apex, where Phi is not smooth.
        let pts: Vec<_> = sample_boundary(&s, 60, &Vector3::new(0.0, 0.0, 0.5), 2.0, 3)
            .into_iter()
            .filter(|p| p.norm() > 0.1)
            .collect();
        assert!(pts.len() >= 20, "{kind:?}");
        boundary_probe_check(&s, &pts, 1e-4).unwrap();
        let rep = boundary_consistency_check(&s, &pts).unwrap();
        assert!(rep.pass, "{kind:?}: {rep:?}");
    }
}

#[test]
fn cone_is_convex_with_flat_ruling() {
    let alpha = PI / 4.0;
    let s = space(
        DensitySpec::Constant { psi0: 0.0 },
        BoundaryKind::Cone {
            axis: [0.0, 0.0, 1.0],
            half_angle: alpha,
            apex_exclusion: 1e-3,
        },
    );
    let rho = 2.0;
    let p = Vector3::new(rho * alpha.sin(), 0.0, rho * alpha.cos());
    assert!(s.phi(&p).unwrap().abs() < 1e-15);
    let ruling = p.normalize();
    let circle = Vector3::y();
    assert!(
        boundary_second_fundamental(&s, &p, &ruling, &ruling)
            .unwrap()
            .abs()
            < 1e-14
    );
    // The horizontal circle through p has radius rho sin(alpha); its normal
    // curvature in the cone is cos(alpha) / (rho sin(alpha)).
    let want = alpha.cos() / (rho * alpha.sin());
    let got = boundary_second_fundamental(&s, &p, &circle, &circle).unwrap();
    assert!((got - want).abs() < 1e-13);
}

#[test]
fn product_metric_ignores_circle_coordinates() {
    let s = AmbientSpace::new(
        Dimension::Three,
        MetricKind::FlatProduct(vec![PeriodicAxis {
            axis: 1,
            circumference: 2.0 * PI,
        }]),
        DensitySpec::Gaussian {}.build().unwrap(),
        None,
    )
    .unwrap();
    let p = Vector3::new(0.5, 3.0, 0.1);
    assert!((s.psi(&p) + 0.26).abs() < 1e-15);
    assert_eq!(s.grad_psi(&p)[1], 0.0);
    assert!(AmbientSpace::new(
        Dimension::Three,
        MetricKind::FlatProduct(vec![PeriodicAxis {
            axis: 5,
            circumference: 1.0,
        }]),
        DensitySpec::Gaussian {}.build().unwrap(),
        None,
    )
    .is_err());
}

#[test]
fn planar_ambient_traces_two_directions() {
    let s = AmbientSpace::new(
        Dimension::Two,
        MetricKind::FlatEuclidean,
        DensitySpec::Gaussian {}.build().unwrap(),
        None,
    )
    .unwrap();
    let p = Vector3::new(1.0, 0.0, 0.0);
    // 2D: S_f = 8 - 4|p|^2
    assert!((perelman_scalar(&s, &p).unwrap() - 4.0).abs() < 1e-12);
    assert!(perelman_scalar(&s, &Vector3::new(0.0, 0.0, 1.0)).is_err());
}

#[test]
fn custom_curvature_trace_check() {
    let s = AmbientSpace::euclidean(DensitySpec::Gaussian {}.build().unwrap(), None)
        .with_curvature(
            std::sync::Arc::new(|_, v| 2.0 * v.norm_squared()),
            std::sync::Arc::new(|_| 6.0),
        );
    let pts = sample_ball(10, &Vector3::zeros(), 1.0, 1);
    assert!(curvature_consistency_check(&s, &pts) < 1e-14);
    let p = Vector3::new(0.0, 0.0, 1.0);
    assert!((bakry_emery_ricci(&s, &p, &Vector3::x()).unwrap() - 4.0).abs() < 1e-14);
    assert!((perelman_scalar(&s, &p).unwrap() - (6.0 + 8.0)).abs() < 1e-12);
}

#[test]
fn shifted_density_keeps_derivatives() {
    let d = DensitySpec::Gaussian {}.build().unwrap();
    let e = d.shifted(2.0_f64.ln());
    let p = Vector3::new(0.2, 0.3, -0.1);
    assert!((e.eval(&p).exp() - 2.0 * d.eval(&p).exp()).abs() < 1e-14);
    assert_eq!(e.jet(&p).grad, d.jet(&p).grad);
}

#[test]
fn registry_specs_parse_strictly() {
    let d: DensitySpec = toml::from_str("name = \"radial-log\"\nk = -2.0").unwrap();
    assert_eq!(d, DensitySpec::RadialLog { k: -2.0 });
    assert!(toml::from_str::<DensitySpec>("name = \"radial-log\"\nk = -2.0\nq = 1").is_err());
    assert!(toml::from_str::<DensitySpec>("name = \"nope\"").is_err());
    let b: BoundaryKind = toml::from_str("name = \"cone\"\nhalf_angle = 0.5").unwrap();
    assert!(matches!(b, BoundaryKind::Cone { apex_exclusion, .. } if apex_exclusion == 1e-3));
}
