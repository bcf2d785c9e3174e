//! Second-order forward-mode differentiation.
//!
//! A [`Jet<N>`] carries a value together with its gradient and Hessian with
//! respect to `N` seed variables. Charts are evaluated on `Jet<2>` seeded with
//! reference-triangle coordinates, which yields exact first and second
//! parametric derivatives of the immersion. Built-in ambient fields are
//! evaluated on `Jet<3>` seeded with the ambient coordinates to obtain their
//! gradients and Hessians.
//!
//! All smooth built-ins are written once against the [`Scalar`] trait, which
//! is implemented for `f64` and for every `Jet<N>`.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Vector3};

/// Arithmetic needed by the smooth built-in fields and charts.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self {
        self.sin() / self.cos()
    }
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powf(self, e: f64) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn acos(self) -> Self;

    fn powi(self, e: i32) -> Self {
        let mut acc = Self::cst(1.0);
        for _ in 0..e.unsigned_abs() {
            acc = acc * self;
        }
        if e < 0 {
            Self::cst(1.0) / acc
        } else {
            acc
        }
    }

    /// `|x|`, differentiated with the sign of the value (undefined at 0).
    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn acos(self) -> Self {
        f64::acos(self)
    }
    fn powi(self, e: i32) -> Self {
        f64::powi(self, e)
    }
}

/// Value, gradient and (symmetric, fully stored) Hessian in `N` variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
    pub h: [[f64; N]; N],
}

/// Jets in the two surface parameters.
pub type Jet2 = Jet<2>;
/// Jets in the three ambient coordinates.
pub type Jet3 = Jet<3>;

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            d: [0.0; N],
            h: [[0.0; N]; N],
        }
    }

    /// The `i`-th seed variable with value `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut j = Self::constant(v);
        j.d[i] = 1.0;
        j
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v` (second-order chain rule).
    #[inline]
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        for i in 0..N {
            out.d[i] = f1 * self.d[i];
        }
        for i in 0..N {
            for k in 0..N {
                out.h[i][k] = f2 * self.d[i] * self.d[k] + f1 * self.h[i][k];
            }
        }
        out
    }

    /// Lifts an ambient scalar field through a jet-valued point, given the
    /// field's value, gradient and Hessian at `p.value()`.
    pub fn lift(value: f64, grad: &Vector3<f64>, hess: &Matrix3<f64>, p: &[Jet<N>; 3]) -> Self {
        let mut out = Self::constant(value);
        for i in 0..N {
            out.d[i] = (0..3).map(|a| grad[a] * p[a].d[i]).sum();
        }
        for i in 0..N {
            for k in 0..N {
                let mut acc = 0.0;
                for a in 0..3 {
                    acc += grad[a] * p[a].h[i][k];
                    for b in 0..3 {
                        acc += hess[(a, b)] * p[a].d[i] * p[b].d[k];
                    }
                }
                out.h[i][k] = acc;
            }
        }
        out
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.d[i] += o.d[i];
            for k in 0..N {
                self.h[i][k] += o.h[i][k];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for i in 0..N {
            self.d[i] = -self.d[i];
            for k in 0..N {
                self.h[i][k] = -self.h[i][k];
            }
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for i in 0..N {
            out.d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        for i in 0..N {
            for k in 0..N {
                out.h[i][k] = self.h[i][k] * o.v
                    + self.v * o.h[i][k]
                    + self.d[i] * o.d[k]
                    + self.d[k] * o.d[i];
            }
        }
        out
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let r = 1.0 / o.v;
        self * o.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..N {
            self.d[i] *= c;
            for k in 0..N {
                self.h[i][k] *= c;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

impl<const N: usize> AddAssign for Jet<N> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> SubAssign for Jet<N> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<const N: usize> MulAssign<f64> for Jet<N> {
    fn mul_assign(&mut self, c: f64) {
        *self = *self * c;
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }
    fn powf(self, e: f64) -> Self {
        let p = self.v.powf(e);
        let p1 = e * self.v.powf(e - 1.0);
        let p2 = e * (e - 1.0) * self.v.powf(e - 2.0);
        self.chain(p, p1, p2)
    }
    fn atan2(self, x: Self) -> Self {
        // Same derivatives as atan(y/x) (or -atan(x/y)); only the value
        // needs the quadrant offset.
        let y = self;
        let t = y.v.atan2(x.v);
        let mut out = if x.v.abs() >= y.v.abs() {
            (y / x).atan()
        } else {
            -(x / y).atan()
        };
        out.v = t;
        out
    }
    fn acos(self) -> Self {
        let x = self.v;
        let w = 1.0 - x * x;
        let f1 = -1.0 / w.sqrt();
        let f2 = -x / (w * w.sqrt());
        self.chain(x.acos(), f1, f2)
    }
}

impl<const N: usize> Jet<N> {
    fn atan(self) -> Self {
        let t = self.v;
        let w = 1.0 + t * t;
        self.chain(t.atan(), 1.0 / w, -2.0 * t / (w * w))
    }
}

/// Seeds a point in `R^3` so that the result holds gradients and Hessians with
/// respect to the ambient coordinates.
pub fn seed3(p: &Vector3<f64>) -> [Jet3; 3] {
    [Jet::var(p.x, 0), Jet::var(p.y, 1), Jet::var(p.z, 2)]
}

/// Extracts `(value, gradient, Hessian)` from an ambient jet.
pub fn split3(j: &Jet3) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let g = Vector3::new(j.d[0], j.d[1], j.d[2]);
    let h = Matrix3::from_fn(|a, b| j.h[a][b]);
    (j.v, g, h)
}

/// Value of a jet-valued point.
pub fn values<const N: usize>(p: &[Jet<N>; 3]) -> Vector3<f64> {
    Vector3::new(p[0].v, p[1].v, p[2].v)
}

/// Constant jet point.
pub fn constant_point<const N: usize>(p: &Vector3<f64>) -> [Jet<N>; 3] {
    [Jet::constant(p.x), Jet::constant(p.y), Jet::constant(p.z)]
}

/// First partial derivative `d p / d x_i` of a jet-valued point.
pub fn partial<const N: usize>(p: &[Jet<N>; 3], i: usize) -> Vector3<f64> {
    Vector3::new(p[0].d[i], p[1].d[i], p[2].d[i])
}

/// Second partial derivative of a jet-valued point.
pub fn partial2<const N: usize>(p: &[Jet<N>; 3], i: usize, k: usize) -> Vector3<f64> {
    Vector3::new(p[0].h[i][k], p[1].h[i][k], p[2].h[i][k])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd2(f: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let h = 1e-4;
        let gx = (-f(x + 2.0 * h, y) + 8.0 * f(x + h, y) - 8.0 * f(x - h, y) + f(x - 2.0 * h, y))
            / (12.0 * h);
        let gy = (-f(x, y + 2.0 * h) + 8.0 * f(x, y + h) - 8.0 * f(x, y - h) + f(x, y - 2.0 * h))
            / (12.0 * h);
        let hxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
        let hyy = (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h);
        let hxy =
            (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
        ([gx, gy], [[hxx, hxy], [hxy, hyy]])
    }

    fn generic<S: Scalar>(x: S, y: S) -> S {
        (x * y).sin() + (x * x + y * y + 1.0).sqrt() * y.exp() - (x + 2.0).ln() / (y.cos() + 3.0)
            + y.atan2(x + 3.0)
            + (x * 0.3).acos() * (y + 2.0).powf(1.7)
            + x.powi(-2) * 0.01
    }

    #[test]
    fn jet_matches_finite_differences() {
        for &(x, y) in &[(0.3, -0.2), (1.1, 0.7), (-0.5, 1.3)] {
            let j = generic(Jet2::var(x, 0), Jet2::var(y, 1));
            let (g, h) = fd2(|a, b| generic(a, b), x, y);
            assert!((j.v - generic(x, y)).abs() < 1e-14);
            for i in 0..2 {
                assert!(
                    (j.d[i] - g[i]).abs() < 1e-7,
                    "grad {i}: {} vs {}",
                    j.d[i],
                    g[i]
                );
                for k in 0..2 {
                    assert!(
                        (j.h[i][k] - h[i][k]).abs() < 2e-5,
                        "hess {i}{k}: {} vs {}",
                        j.h[i][k],
                        h[i][k]
                    );
                }
            }
        }
    }

    #[test]
    fn lift_agrees_with_direct_composition() {
        // psi(p) = |p|^2 composed with p(u, v) = (u, v, u v)
        let u = Jet2::var(0.4, 0);
        let v = Jet2::var(-0.7, 1);
        let p = [u, v, u * v];
        let direct = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let pv = values(&p);
        let lifted = Jet2::lift(
            pv.norm_squared(),
            &(2.0 * pv),
            &(2.0 * Matrix3::identity()),
            &p,
        );
        assert!((direct.v - lifted.v).abs() < 1e-14);
        for i in 0..2 {
            assert!((direct.d[i] - lifted.d[i]).abs() < 1e-13);
            for k in 0..2 {
                assert!((direct.h[i][k] - lifted.h[i][k]).abs() < 1e-13);
            }
        }
    }
}
