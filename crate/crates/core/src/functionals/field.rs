//! Variation fields: ambient vector fields along the surface, with optional
//! compact support in parameter space.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::Serialize;

use crate::ambient::Field;
use crate::error::{Result, WstabError};
use crate::jet::{values, Jet2};
use crate::surface::{Immersion, JetVectorFn};

/// Scalar function of a jet-valued ambient point.
pub type ScalarJetFn = Arc<dyn Fn(&[Jet2; 3]) -> Jet2 + Send + Sync>;

/// Quintic bump `1 - (10 w^3 - 15 w^4 + 6 w^5)`, `w = |x - center|^2 /
/// radius^2`, on one patch; zero outside the disk and on other patches. The
/// bump and its first two derivatives vanish on the circle `w = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub patch: usize,
    pub center: [f64; 2],
    pub radius: f64,
}

impl Cutoff {
    pub fn eval(&self, patch: usize, uv: &[Jet2; 2]) -> Jet2 {
        if patch != self.patch {
            return Jet2::constant(0.0);
        }
        let du = uv[0] - self.center[0];
        let dv = uv[1] - self.center[1];
        let w = (du * du + dv * dv) / (self.radius * self.radius);
        if w.v >= 1.0 {
            return Jet2::constant(0.0);
        }
        let w3 = w * w * w;
        -(w3 * 10.0 - w3 * w * 15.0 + w3 * w * w * 6.0) + 1.0
    }
}

/// Ambient vector field `X` along the surface.
#[derive(Clone)]
pub struct VariationField {
    pub name: String,
    vector: JetVectorFn,
    pub cutoff: Option<Cutoff>,
}

impl std::fmt::Debug for VariationField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationField")
            .field("name", &self.name)
            .field("cutoff", &self.cutoff)
            .finish_non_exhaustive()
    }
}

fn scale(v: [Jet2; 3], s: Jet2) -> [Jet2; 3] {
    v.map(|c| c * s)
}

fn dot(a: &[Jet2; 3], b: &[Jet2; 3]) -> Jet2 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normal_extension(imm: &Immersion) -> Result<JetVectorFn> {
    imm.normal_field.clone().ok_or_else(|| {
        WstabError::Input(format!(
            "surface '{}' has no normal extension; normal and tangential fields need one",
            imm.name
        ))
    })
}

impl VariationField {
    pub fn new(name: impl Into<String>, vector: JetVectorFn) -> Self {
        VariationField {
            name: name.into(),
            vector,
            cutoff: None,
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", Arc::new(|_: &[Jet2; 3]| [Jet2::constant(0.0); 3]))
    }

    /// Constant (translation) field.
    pub fn constant(name: impl Into<String>, v: Vector3<f64>) -> Self {
        Self::new(
            name,
            Arc::new(move |_: &[Jet2; 3]| [v.x, v.y, v.z].map(Jet2::constant)),
        )
    }

    /// `X = u N` with `N` the immersion's normal extension.
    pub fn normal(imm: &Immersion, name: impl Into<String>, u: ScalarJetFn) -> Result<Self> {
        let n = normal_extension(imm)?;
        Ok(Self::new(
            name,
            Arc::new(move |p: &[Jet2; 3]| scale(n(p), u(p))),
        ))
    }

    /// Tangential part `V - <V, N> N` of an ambient field, with `N` the
    /// immersion's normal extension.
    pub fn tangential(imm: &Immersion, name: impl Into<String>, v: JetVectorFn) -> Result<Self> {
        let n = normal_extension(imm)?;
        Ok(Self::new(
            name,
            Arc::new(move |p: &[Jet2; 3]| {
                let nn = n(p);
                let vv = v(p);
                let c = dot(&vv, &nn);
                [vv[0] - nn[0] * c, vv[1] - nn[1] * c, vv[2] - nn[2] * c]
            }),
        ))
    }

    /// Tangential gradient of an ambient function. Its jets are exact to
    /// first order only, which suffices for divergence identities but not
    /// for curvature of deformed surfaces.
    pub fn surface_gradient_of(imm: &Immersion, name: impl Into<String>, w: Field) -> Result<Self> {
        let grad: JetVectorFn = Arc::new(move |p: &[Jet2; 3]| {
            let j = w.jet(&values(p));
            std::array::from_fn(|i| {
                let mut c = Jet2::constant(j.grad[i]);
                for k in 0..2 {
                    c.d[k] = (0..3).map(|a| j.hess[(i, a)] * p[a].d[k]).sum();
                }
                c
            })
        });
        Self::tangential(imm, name, grad)
    }

    /// `a + b`; both summands must be free of cutoffs.
    pub fn sum(name: impl Into<String>, a: &VariationField, b: &VariationField) -> Result<Self> {
        if a.cutoff.is_some() || b.cutoff.is_some() {
            return Err(WstabError::Input(
                "cannot add fields that carry cutoffs".into(),
            ));
        }
        let (a, b) = (a.clone(), b.clone());
        Ok(Self::new(
            name,
            Arc::new(move |p: &[Jet2; 3]| {
                let x = (a.vector)(p);
                let y = (b.vector)(p);
                [x[0] + y[0], x[1] + y[1], x[2] + y[2]]
            }),
        ))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let v = self.vector.clone();
        VariationField {
            name: format!("{c} * {}", self.name),
            vector: Arc::new(move |p: &[Jet2; 3]| v(p).map(|x| x * c)),
            cutoff: self.cutoff,
        }
    }

    pub fn with_cutoff(mut self, cutoff: Cutoff) -> Result<Self> {
        if !(cutoff.radius > 0.0) {
            return Err(WstabError::Input(format!(
                "cutoff radius must be positive, got {}",
                cutoff.radius
            )));
        }
        self.cutoff = Some(cutoff);
        Ok(self)
    }

    /// `X` at a chart point, including the cutoff.
    pub fn eval(&self, patch: usize, uv: &[Jet2; 2], p: &[Jet2; 3]) -> [Jet2; 3] {
        let x = (self.vector)(p);
        match &self.cutoff {
            Some(c) => scale(x, c.eval(patch, uv)),
            None => x,
        }
    }
}
