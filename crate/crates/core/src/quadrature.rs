//! Quadrature rules on the reference triangle and the unit interval.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Symmetric rules on the reference triangle `{x1, x2 >= 0, x1 + x2 <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TriangleRule {
    Centroid1,
    Gauss3,
    #[default]
    Gauss6,
}

/// Rules on the unit interval used along boundary edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeRule {
    Midpoint,
    #[default]
    Gauss2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Quadrature {
    pub rule: TriangleRule,
    pub boundary_rule: EdgeRule,
}

impl Quadrature {
    pub const FINE: Quadrature = Quadrature {
        rule: TriangleRule::Gauss6,
        boundary_rule: EdgeRule::Gauss2,
    };
    /// The rule used for finite element assembly.
    pub const ASSEMBLY: Quadrature = Quadrature {
        rule: TriangleRule::Gauss3,
        boundary_rule: EdgeRule::Gauss2,
    };
}

impl TriangleRule {
    /// Points and weights; weights sum to the reference area 1/2.
    pub fn points(self) -> Vec<(Vector2<f64>, f64)> {
        match self {
            TriangleRule::Centroid1 => vec![(Vector2::new(1.0 / 3.0, 1.0 / 3.0), 0.5)],
            TriangleRule::Gauss3 => {
                let w = 1.0 / 6.0;
                vec![
                    (Vector2::new(1.0 / 6.0, 1.0 / 6.0), w),
                    (Vector2::new(2.0 / 3.0, 1.0 / 6.0), w),
                    (Vector2::new(1.0 / 6.0, 2.0 / 3.0), w),
                ]
            }
            TriangleRule::Gauss6 => {
                let a = 0.445_948_490_915_965;
                let wa = 0.223_381_589_678_011 / 2.0;
                let b = 0.091_576_213_509_771;
                let wb = 0.109_951_743_655_322 / 2.0;
                let mut out = Vec::with_capacity(6);
                for (c, w) in [(a, wa), (b, wb)] {
                    let o = 1.0 - 2.0 * c;
                    out.push((Vector2::new(c, c), w));
                    out.push((Vector2::new(o, c), w));
                    out.push((Vector2::new(c, o), w));
                }
                out
            }
        }
    }

    /// Highest total polynomial degree integrated exactly.
    pub fn degree(self) -> usize {
        match self {
            TriangleRule::Centroid1 => 1,
            TriangleRule::Gauss3 => 2,
            TriangleRule::Gauss6 => 4,
        }
    }
}

impl EdgeRule {
    /// Points in `[0, 1]` and weights summing to 1.
    pub fn points(self) -> Vec<(f64, f64)> {
        match self {
            EdgeRule::Midpoint => vec![(0.5, 1.0)],
            EdgeRule::Gauss2 => {
                let d = 0.5 / 3f64.sqrt();
                vec![(0.5 - d, 0.5), (0.5 + d, 0.5)]
            }
        }
    }
}

/// Composite Gauss-Legendre rule (3 points per panel) on `[a, b]`.
pub fn gauss_legendre(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let nodes = [-(0.6f64).sqrt(), 0.0, 0.6f64.sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|k| {
            let mid = a + (k as f64 + 0.5) * h;
            nodes
                .iter()
                .zip(weights)
                .map(move |(x, w)| (mid + 0.5 * h * x, 0.5 * h * w))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_exact(i: i32, j: i32) -> f64 {
        // int x^i y^j over the reference triangle = i! j! / (i + j + 2)!
        let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn triangle_rules_are_exact_to_their_degree() {
        for rule in [
            TriangleRule::Centroid1,
            TriangleRule::Gauss3,
            TriangleRule::Gauss6,
        ] {
            let pts = rule.points();
            assert!(pts.iter().all(|(_, w)| *w > 0.0));
            let d = rule.degree() as i32;
            for i in 0..=d {
                for j in 0..=(d - i) {
                    let q: f64 = pts.iter().map(|(x, w)| w * x.x.powi(i) * x.y.powi(j)).sum();
                    assert!(
                        (q - monomial_exact(i, j)).abs() < 1e-14,
                        "{rule:?} x^{i} y^{j}"
                    );
                }
            }
        }
    }

    #[test]
    fn edge_rules_sum_to_one() {
        for r in [EdgeRule::Midpoint, EdgeRule::Gauss2] {
            let s: f64 = r.points().iter().map(|p| p.1).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        let q: f64 = EdgeRule::Gauss2
            .points()
            .iter()
            .map(|(t, w)| w * t.powi(3))
            .sum();
        assert!((q - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_quintics() {
        let q: f64 = gauss_legendre(-1.0, 2.0, 3)
            .iter()
            .map(|(t, w)| w * t.powi(5))
            .sum();
        assert!((q - (64.0 - 1.0) / 6.0).abs() < 1e-12);
    }
}
