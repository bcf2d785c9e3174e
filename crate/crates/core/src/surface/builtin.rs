//! Built-in immersions and their configuration specs.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChartFn, Immersion, JetVectorFn, ParamDomain, Patch};
use crate::error::{Result, WstabError};
use crate::expr::Expr;
use crate::jet::{Jet2, Scalar};

/// Below this value of `w = u^2 + v^2` the cap chart switches to its power
/// series, avoiding `sqrt(w)` at the pole.
const SERIES_CUTOFF: f64 = 0.01;
const SERIES_TERMS: usize = 9;

/// `(sin(a sqrt w) / sqrt w, cos(a sqrt w))` as jets in `w`.
fn cap_factors(w: Jet2, a: f64) -> (Jet2, Jet2) {
    if w.v < SERIES_CUTOFF {
        let mut sc = [0.0; SERIES_TERMS];
        let mut cc = [0.0; SERIES_TERMS];
        let mut fact = 1.0; // (2n)!
        let mut pow = 1.0; // a^(2n)
        for n in 0..SERIES_TERMS {
            if n > 0 {
                fact *= (2 * n - 1) as f64 * (2 * n) as f64;
                pow *= a * a;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            cc[n] = sign * pow / fact;
            sc[n] = sign * pow * a / (fact * (2 * n + 1) as f64);
        }
        let horner = |c: &[f64; SERIES_TERMS]| {
            c.iter()
                .rev()
                .skip(1)
                .fold(Jet2::constant(c[SERIES_TERMS - 1]), |acc, &k| acc * w + k)
        };
        (horner(&sc), horner(&cc))
    } else {
        let r = w.sqrt();
        ((r * a).sin() / r, (r * a).cos())
    }
}

/// Spherical cap of polar half-angle `alpha` around the `z` axis, over the
/// unit parameter disk; `pole = -1` gives the cap around the south pole.
fn cap_chart(center: [f64; 3], radius: f64, alpha: f64, pole: f64) -> ChartFn {
    Arc::new(move |uv: &[Jet2; 2]| {
        let [u, v] = *uv;
        let (s, c) = cap_factors(u * u + v * v, alpha);
        [
            s * u * radius + center[0],
            s * v * radius + center[1],
            c * (pole * radius) + center[2],
        ]
    })
}

fn radial_field(center: [f64; 3]) -> JetVectorFn {
    Arc::new(move |p: &[Jet2; 3]| {
        let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / r, d[1] / r, d[2] / r]
    })
}

fn constant_field(n: [f64; 3]) -> JetVectorFn {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let n = [n[0] / len, n[1] / len, n[2] / len];
    Arc::new(move |_: &[Jet2; 3]| n.map(Jet2::constant))
}

fn origin() -> [f64; 3] {
    [0.0; 3]
}

fn one() -> f64 {
    1.0
}

fn default_circumference() -> f64 {
    std::f64::consts::TAU
}

fn default_amplitude() -> f64 {
    0.05
}

/// Parameter domain of a user chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Disk {
        radius: f64,
    },
    Rect {
        u: [f64; 2],
        v: [f64; 2],
        #[serde(default)]
        periodic_u: bool,
        #[serde(default)]
        periodic_v: bool,
    },
}

/// Named surface with its parameters, as written in scenario files.
///
/// Coordinates on product ambients are `(s, x, t)`: `s` the line factor, `x`
/// (and `t` for the torus) the circle factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceSpec {
    /// Upper half of the sphere `|p - center| = radius`.
    Hemisphere {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "origin")]
        center: [f64; 3],
    },
    /// Part of the sphere within polar angle `half_angle` of the `+z` axis.
    SphericalCap {
        #[serde(default = "one")]
        radius: f64,
        half_angle: f64,
        #[serde(default = "origin")]
        center: [f64; 3],
    },
    /// Closed round sphere, glued from two hemispherical patches.
    Sphere {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "origin")]
        center: [f64; 3],
    },
    /// Horizontal round disk centred at `center`.
    FlatDisk {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "origin")]
        center: [f64; 3],
    },
    /// `{s0} x S^1 x [-half_width, half_width]`.
    ProductSlice {
        #[serde(default)]
        s0: f64,
        #[serde(default = "default_circumference")]
        circumference: f64,
        #[serde(default = "one")]
        half_width: f64,
    },
    /// The graph `s = s0 + tilt * t` over `S^1 x [-half_width, half_width]`.
    TiltedSlice {
        #[serde(default)]
        s0: f64,
        tilt: f64,
        #[serde(default = "default_circumference")]
        circumference: f64,
        #[serde(default = "one")]
        half_width: f64,
    },
    /// `{s0} x S^1 x S^1`.
    ProductTorus {
        #[serde(default)]
        s0: f64,
        #[serde(default = "default_circumference")]
        circumference_x: f64,
        #[serde(default = "default_circumference")]
        circumference_t: f64,
    },
    /// Unit hemisphere with radius scaled by `1 + amplitude * P(u, v)` for a
    /// seeded random cubic `P` with coefficients in `[-1, 1]`.
    PerturbedHemisphere {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        seed: u64,
    },
    /// User chart: expressions for `x, y, z` in the parameters `u, v`.
    Chart {
        x: String,
        y: String,
        z: String,
        domain: DomainSpec,
        #[serde(default)]
        params: BTreeMap<String, f64>,
        /// Optional normal extension, expressions in `x, y, z`.
        #[serde(default)]
        normal: Option<[String; 3]>,
    },
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(WstabError::Config(format!(
            "{what} must be positive, got {x}"
        )))
    }
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<Immersion> {
        let disk = ParamDomain::Disk { radius: 1.0 };
        let imm = match self {
            SurfaceSpec::Hemisphere { radius, center } => {
                let r = positive(*radius, "radius")?;
                let mut imm =
                    Immersion::single("hemisphere", cap_chart(*center, r, FRAC_PI_2, 1.0), disk);
                imm.normal_field = Some(radial_field(*center));
                imm
            }
            SurfaceSpec::SphericalCap {
                radius,
                half_angle,
                center,
            } => {
                let r = positive(*radius, "radius")?;
                if !(*half_angle > 0.0 && *half_angle < std::f64::consts::PI) {
                    return Err(WstabError::Config(format!(
                        "half_angle must lie in (0, pi), got {half_angle}"
                    )));
                }
                let mut imm = Immersion::single(
                    "spherical-cap",
                    cap_chart(*center, r, *half_angle, 1.0),
                    disk,
                );
                imm.normal_field = Some(radial_field(*center));
                imm
            }
            SurfaceSpec::Sphere { radius, center } => {
                let r = positive(*radius, "radius")?;
                Immersion {
                    name: "sphere".into(),
                    patches: vec![
                        Patch {
                            chart: cap_chart(*center, r, FRAC_PI_2, 1.0),
                            domain: disk,
                            orientation: 1.0,
                        },
                        Patch {
                            chart: cap_chart(*center, r, FRAC_PI_2, -1.0),
                            domain: disk,
                            orientation: -1.0,
                        },
                    ],
                    orientation_sign: 1.0,
                    normal_field: Some(radial_field(*center)),
                }
            }
            SurfaceSpec::FlatDisk { radius, center } => {
                let r = positive(*radius, "radius")?;
                let c = *center;
                let chart: ChartFn = Arc::new(move |uv: &[Jet2; 2]| {
                    [uv[0] * r + c[0], uv[1] * r + c[1], Jet2::constant(c[2])]
                });
                let mut imm = Immersion::single("flat-disk", chart, disk);
                imm.normal_field = Some(constant_field([0.0, 0.0, 1.0]));
                imm
            }
            SurfaceSpec::ProductSlice {
                s0,
                circumference,
                half_width,
            } => {
                let l = positive(*circumference, "circumference")?;
                let w = positive(*half_width, "half_width")?;
                let s0 = *s0;
                let chart: ChartFn =
                    Arc::new(move |uv: &[Jet2; 2]| [Jet2::constant(s0), uv[0], uv[1]]);
                let domain = ParamDomain::Rect {
                    u: [0.0, l],
                    v: [-w, w],
                    periodic_u: true,
                    periodic_v: false,
                };
                let mut imm = Immersion::single("product-slice", chart, domain);
                imm.normal_field = Some(constant_field([1.0, 0.0, 0.0]));
                imm
            }
            SurfaceSpec::TiltedSlice {
                s0,
                tilt,
                circumference,
                half_width,
            } => {
                let l = positive(*circumference, "circumference")?;
                let w = positive(*half_width, "half_width")?;
                let (s0, tau) = (*s0, *tilt);
                let chart: ChartFn =
                    Arc::new(move |uv: &[Jet2; 2]| [uv[1] * tau + s0, uv[0], uv[1]]);
                let domain = ParamDomain::Rect {
                    u: [0.0, l],
                    v: [-w, w],
                    periodic_u: true,
                    periodic_v: false,
                };
                let mut imm = Immersion::single("tilted-slice", chart, domain);
                imm.normal_field = Some(constant_field([1.0, 0.0, -tau]));
                imm
            }
            SurfaceSpec::ProductTorus {
                s0,
                circumference_x,
                circumference_t,
            } => {
                let lx = positive(*circumference_x, "circumference_x")?;
                let lt = positive(*circumference_t, "circumference_t")?;
                let s0 = *s0;
                let chart: ChartFn =
                    Arc::new(move |uv: &[Jet2; 2]| [Jet2::constant(s0), uv[0], uv[1]]);
                let domain = ParamDomain::Rect {
                    u: [0.0, lx],
                    v: [0.0, lt],
                    periodic_u: true,
                    periodic_v: true,
                };
                let mut imm = Immersion::single("product-torus", chart, domain);
                imm.normal_field = Some(constant_field([1.0, 0.0, 0.0]));
                imm
            }
            SurfaceSpec::PerturbedHemisphere {
                radius,
                amplitude,
                seed,
            } => {
                let r = positive(*radius, "radius")?;
                if !(amplitude.abs() < 0.1) {
                    return Err(WstabError::Config(format!(
                        "amplitude must be below 0.1 in magnitude, got {amplitude}"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut terms = Vec::new();
                for i in 0..=3 {
                    for j in 0..=(3 - i) {
                        terms.push((i, j, rng.random_range(-1.0..1.0)));
                    }
                }
                let eps = *amplitude;
                let cap = cap_chart([0.0; 3], 1.0, FRAC_PI_2, 1.0);
                let chart: ChartFn = Arc::new(move |uv: &[Jet2; 2]| {
                    let [u, v] = *uv;
                    let poly = terms.iter().fold(Jet2::constant(0.0), |acc, &(i, j, c)| {
                        acc + u.powi(i) * v.powi(j) * c
                    });
                    let scale = (poly * eps + 1.0) * r;
                    cap(uv).map(|x| x * scale)
                });
                let mut imm = Immersion::single("perturbed-hemisphere", chart, disk);
                imm.normal_field = Some(radial_field([0.0; 3]));
                imm
            }
            SurfaceSpec::Chart {
                x,
                y,
                z,
                domain,
                params,
                normal,
            } => {
                let comps = [x, y, z]
                    .map(|src| Expr::parse(src, &["u", "v"], params))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                let chart: ChartFn = Arc::new(move |uv: &[Jet2; 2]| {
                    [comps[0].eval(uv), comps[1].eval(uv), comps[2].eval(uv)]
                });
                let domain = match *domain {
                    DomainSpec::Disk { radius } => ParamDomain::Disk {
                        radius: positive(radius, "domain radius")?,
                    },
                    DomainSpec::Rect {
                        u,
                        v,
                        periodic_u,
                        periodic_v,
                    } => {
                        if !(u[1] > u[0] && v[1] > v[0]) {
                            return Err(WstabError::Config(format!(
                                "empty parameter rectangle u = {u:?}, v = {v:?}"
                            )));
                        }
                        ParamDomain::Rect {
                            u,
                            v,
                            periodic_u,
                            periodic_v,
                        }
                    }
                };
                let mut imm = Immersion::single("chart", chart, domain);
                if let Some(n) = normal {
                    let comps = n
                        .iter()
                        .map(|src| Expr::parse(src, &["x", "y", "z"], params))
                        .collect::<Result<Vec<_>>>()?;
                    imm.normal_field = Some(Arc::new(move |p: &[Jet2; 3]| {
                        let n = [comps[0].eval(p), comps[1].eval(p), comps[2].eval(p)];
                        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                        n.map(|c| c / len)
                    }));
                }
                imm
            }
        };
        Ok(imm)
    }

    pub fn registry() -> &'static [(&'static str, &'static str)] {
        &[
            ("hemisphere", "upper half of a round sphere (disk)"),
            (
                "spherical-cap",
                "polar cap of a round sphere around +z (disk)",
            ),
            ("sphere", "closed round sphere"),
            ("flat-disk", "horizontal round disk"),
            (
                "product-slice",
                "{s0} x S^1 x [-w, w] in a product (cylinder)",
            ),
            (
                "tilted-slice",
                "graph s = s0 + tilt t in a product (cylinder)",
            ),
            ("product-torus", "{s0} x S^1 x S^1 (torus)"),
            (
                "perturbed-hemisphere",
                "hemisphere with a seeded cubic radial perturbation",
            ),
            ("chart", "user chart x(u, v), y(u, v), z(u, v)"),
        ]
    }
}
