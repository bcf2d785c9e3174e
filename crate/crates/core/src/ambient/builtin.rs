//! Built-in densities and boundaries, and their configuration specs.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{BoundarySpec, Density, Field};
use crate::error::{Result, WstabError};
use crate::expr::Expr;
use crate::jet::Scalar;

/// A scalar field on `R^3` written once for every [`Scalar`], so that its
/// derivatives come from jets.
pub trait SmoothField: Send + Sync + 'static {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S;
}

fn dot<S: Scalar>(a: &[f64; 3], p: &[S; 3]) -> S {
    p[0] * a[0] + p[1] * a[1] + p[2] * a[2]
}

fn norm2<S: Scalar>(p: &[S; 3]) -> S {
    p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
}

fn shift<S: Scalar>(p: &[S; 3], c: &[f64; 3]) -> [S; 3] {
    [p[0] - c[0], p[1] - c[1], p[2] - c[2]]
}

/// `|p - <a, p> a|` for a unit axis `a`.
fn radial<S: Scalar>(a: &[f64; 3], p: &[S; 3]) -> S {
    let t = dot(a, p);
    let q = [p[0] - t * a[0], p[1] - t * a[1], p[2] - t * a[2]];
    norm2(&q).sqrt()
}

fn unit(v: [f64; 3], what: &str) -> Result<[f64; 3]> {
    let n = Vector3::from(v).norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(WstabError::Config(format!(
            "{what} must be a non-zero vector"
        )));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

struct ConstantPsi(f64);
impl SmoothField for ConstantPsi {
    fn eval<S: Scalar>(&self, _: &[S; 3]) -> S {
        S::cst(self.0)
    }
}

struct GaussianPsi;
impl SmoothField for GaussianPsi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        -norm2(p)
    }
}

struct RadialLogPsi(f64);
impl SmoothField for RadialLogPsi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        norm2(p).ln() * (0.5 * self.0)
    }
}

struct LinearPsi([f64; 3], f64);
impl SmoothField for LinearPsi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        dot(&self.0, p) + self.1
    }
}

/// `g(|p|) = sum_i c_i |p|^i`; even powers are evaluated in `|p|^2` so the
/// field is smooth at the origin when only even coefficients are set.
struct RadialPolyPsi(Vec<f64>);
impl SmoothField for RadialPolyPsi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        let r2 = norm2(p);
        let has_odd = self.0.iter().skip(1).step_by(2).any(|c| *c != 0.0);
        let r = if has_odd { r2.sqrt() } else { r2 };
        let mut acc = S::cst(0.0);
        for (i, c) in self.0.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let term = if i % 2 == 0 {
                r2.powi(i as i32 / 2)
            } else {
                r.powi(i as i32)
            };
            acc = acc + term * *c;
        }
        acc
    }
}

struct QuadraticPsi {
    diag: [f64; 3],
    a: [f64; 3],
    b: f64,
}
impl SmoothField for QuadraticPsi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        let mut acc = dot(&self.a, p) + self.b;
        for i in 0..3 {
            acc = acc + p[i] * p[i] * (0.5 * self.diag[i]);
        }
        acc
    }
}

/// A field given by a parsed expression in `x, y, z`.
pub struct ExprField(pub Expr);
impl SmoothField for ExprField {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        self.0.eval(p)
    }
}

struct HalfSpacePhi {
    n: [f64; 3],
    offset: f64,
}
impl SmoothField for HalfSpacePhi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        dot(&self.n, p) - self.offset
    }
}

struct SlabPhi {
    a: [f64; 3],
    half_width: f64,
    center: f64,
}
impl SmoothField for SlabPhi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        -(dot(&self.a, p) - self.center).abs() + self.half_width
    }
}

struct BallPhi {
    c: [f64; 3],
    r: f64,
    inside: bool,
}
impl SmoothField for BallPhi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        let d = norm2(&shift(p, &self.c)).sqrt();
        if self.inside {
            -d + self.r
        } else {
            d - self.r
        }
    }
}

/// `|p| sin(alpha - theta)` with `theta` the angle to the axis; positive
/// inside the cone.
struct ConePhi {
    a: [f64; 3],
    alpha: f64,
}
impl SmoothField for ConePhi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        dot(&self.a, p) * self.alpha.sin() - radial(&self.a, p) * self.alpha.cos()
    }
}

struct CylinderPhi {
    a: [f64; 3],
    r: f64,
}
impl SmoothField for CylinderPhi {
    fn eval<S: Scalar>(&self, p: &[S; 3]) -> S {
        -radial(&self.a, p) + self.r
    }
}

/// Density registry entry, selected by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `psi = psi0`.
    Constant {
        #[serde(default)]
        psi0: f64,
    },
    /// `psi = -|p|^2`.
    Gaussian {},
    /// `psi = k log|p|`.
    RadialLog { k: f64 },
    /// `psi = <a, p> + b`.
    Linear {
        a: [f64; 3],
        #[serde(default)]
        b: f64,
    },
    /// `psi = sum_i coeffs[i] |p|^i`.
    RadialSmooth { coeffs: Vec<f64> },
    /// `psi = 1/2 sum_i diag[i] p_i^2 + <a, p> + b`.
    Quadratic {
        diag: [f64; 3],
        #[serde(default)]
        a: [f64; 3],
        #[serde(default)]
        b: f64,
    },
    /// `psi` given as an expression in `x, y, z`.
    Expression {
        psi: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

impl DensitySpec {
    pub fn build(&self) -> Result<Density> {
        Ok(match self {
            DensitySpec::Constant { psi0 } => Field::from_smooth("constant", ConstantPsi(*psi0)),
            DensitySpec::Gaussian {} => Field::from_smooth("gaussian", GaussianPsi),
            DensitySpec::RadialLog { k } => {
                Field::from_smooth(format!("radial-log(k={k})"), RadialLogPsi(*k))
            }
            DensitySpec::Linear { a, b } => Field::from_smooth("linear", LinearPsi(*a, *b)),
            DensitySpec::RadialSmooth { coeffs } => {
                if coeffs.is_empty() {
                    return Err(WstabError::Config(
                        "radial-smooth needs at least one coefficient".into(),
                    ));
                }
                Field::from_smooth("radial-smooth", RadialPolyPsi(coeffs.clone()))
            }
            DensitySpec::Quadratic { diag, a, b } => Field::from_smooth(
                "quadratic",
                QuadraticPsi {
                    diag: *diag,
                    a: *a,
                    b: *b,
                },
            ),
            DensitySpec::Expression { psi, params } => {
                let e = Expr::parse(psi, &["x", "y", "z"], params)?;
                Field::from_smooth(format!("expression({psi})"), ExprField(e))
            }
        })
    }

    /// Registry names with one-line descriptions.
    pub fn registry() -> &'static [(&'static str, &'static str)] {
        &[
            ("constant", "psi = psi0"),
            ("gaussian", "psi = -|p|^2"),
            ("radial-log", "psi = k log|p|"),
            ("linear", "psi = <a, p> + b"),
            ("radial-smooth", "psi = sum_i coeffs[i] |p|^i"),
            ("quadratic", "psi = 1/2 sum diag_i p_i^2 + <a, p> + b"),
            ("expression", "psi given as an expression in x, y, z"),
        ]
    }
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_apex_exclusion() -> f64 {
    1e-3
}

/// Boundary registry entry, selected by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryKind {
    /// `M` is all of the ambient space.
    None {},
    /// `{<n, p> >= offset}`.
    HalfSpace {
        normal: [f64; 3],
        #[serde(default)]
        offset: f64,
    },
    /// `{|<a, p> - center| <= half_width}`.
    Slab {
        axis: [f64; 3],
        half_width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `{|p - center| >= radius}`.
    BallComplement {
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
    },
    /// `{|p - center| <= radius}`.
    Ball {
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
    },
    /// Solid circular cone with apex at the origin; `half_angle` in radians.
    Cone {
        #[serde(default = "z_axis")]
        axis: [f64; 3],
        half_angle: f64,
        #[serde(default = "default_apex_exclusion")]
        apex_exclusion: f64,
    },
    /// Solid circular cylinder around an axis through the origin.
    Cylinder {
        #[serde(default = "z_axis")]
        axis: [f64; 3],
        radius: f64,
    },
}

impl BoundaryKind {
    pub fn build(&self) -> Result<Option<BoundarySpec>> {
        let positive = |x: f64, what: &str| -> Result<f64> {
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(WstabError::Config(format!(
                    "{what} must be positive, got {x}"
                )))
            }
        };
        let (phi, excluded) = match self {
            BoundaryKind::None {} => return Ok(None),
            BoundaryKind::HalfSpace { normal, offset } => (
                Field::from_smooth(
                    "half-space",
                    HalfSpacePhi {
                        n: unit(*normal, "half-space normal")?,
                        offset: *offset,
                    },
                ),
                vec![],
            ),
            BoundaryKind::Slab {
                axis,
                half_width,
                center,
            } => (
                Field::from_smooth(
                    "slab",
                    SlabPhi {
                        a: unit(*axis, "slab axis")?,
                        half_width: positive(*half_width, "slab half_width")?,
                        center: *center,
                    },
                ),
                vec![],
            ),
            BoundaryKind::BallComplement { center, radius } => (
                Field::from_smooth(
                    "ball-complement",
                    BallPhi {
                        c: *center,
                        r: positive(*radius, "radius")?,
                        inside: false,
                    },
                ),
                vec![],
            ),
            BoundaryKind::Ball { center, radius } => (
                Field::from_smooth(
                    "ball",
                    BallPhi {
                        c: *center,
                        r: positive(*radius, "radius")?,
                        inside: true,
                    },
                ),
                vec![],
            ),
            BoundaryKind::Cone {
                axis,
                half_angle,
                apex_exclusion,
            } => {
                if !(*half_angle > 0.0 && *half_angle < FRAC_PI_2 * 2.0) {
                    return Err(WstabError::Config(format!(
                        "cone half_angle must lie in (0, pi), got {half_angle}"
                    )));
                }
                (
                    Field::from_smooth(
                        "cone",
                        ConePhi {
                            a: unit(*axis, "cone axis")?,
                            alpha: *half_angle,
                        },
                    ),
                    vec![(
                        Vector3::zeros(),
                        positive(*apex_exclusion, "apex_exclusion")?,
                    )],
                )
            }
            BoundaryKind::Cylinder { axis, radius } => (
                Field::from_smooth(
                    "cylinder",
                    CylinderPhi {
                        a: unit(*axis, "cylinder axis")?,
                        r: positive(*radius, "radius")?,
                    },
                ),
                vec![],
            ),
        };
        Ok(Some(BoundarySpec { phi, excluded }))
    }

    pub fn registry() -> &'static [(&'static str, &'static str)] {
        &[
            ("none", "no boundary"),
            ("half-space", "{<n, p> >= offset}"),
            ("slab", "{|<a, p> - center| <= half_width}"),
            ("ball-complement", "{|p - center| >= radius}"),
            ("ball", "{|p - center| <= radius}"),
            ("cone", "solid circular cone of half-angle alpha, apex at 0"),
            ("cylinder", "solid circular cylinder of given radius"),
        ]
    }
}
