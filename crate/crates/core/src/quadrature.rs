//! Quadrature rules on reference triangles and tetrahedra.
//!
//! Points are barycentric, weights sum to one; integrals over physical cells
//! are `measure * sum(w_i f(p_i))`. Degrees 1 and 2 use classic interior
//! symmetric rules; higher degrees are collapsed tensor Gauss-Legendre rules
//! (Duffy transform), which keeps every weight positive at any order.

use crate::{Error, Result};
use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Barycentric coordinates (3 per point).
    pub points: Vec<[f64; 3]>,
    /// Weights, summing to 1.
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

#[derive(Debug, Clone)]
pub struct TetRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

pub const MAX_TRIANGLE_DEGREE: usize = 8;
pub const MAX_TET_DEGREE: usize = 6;

/// Gauss-Legendre nodes/weights on [0, 1].
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // initial guess (Chebyshev) on [-1, 1], then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn duffy_triangle(degree: usize) -> TriangleRule {
    let n = (degree + 2).div_ceil(2);
    let (u, wu) = gauss_legendre_01(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = u[i];
            let y = u[j] * (1.0 - u[i]);
            points.push([1.0 - x - y, x, y]);
            // normalize to sum 1: raw Duffy weights sum to the reference area 1/2
            weights.push(2.0 * wu[i] * wu[j] * (1.0 - u[i]));
        }
    }
    TriangleRule {
        points,
        weights,
        exactness_degree: degree,
    }
}

fn duffy_tet(degree: usize) -> TetRule {
    let n = (degree + 3).div_ceil(2);
    let (u, wu) = gauss_legendre_01(n);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = u[i];
                let y = u[j] * (1.0 - u[i]);
                let z = u[k] * (1.0 - u[i]) * (1.0 - u[j]);
                points.push([1.0 - x - y - z, x, y, z]);
                let jac = (1.0 - u[i]) * (1.0 - u[i]) * (1.0 - u[j]);
                weights.push(6.0 * wu[i] * wu[j] * wu[k] * jac);
            }
        }
    }
    TetRule {
        points,
        weights,
        exactness_degree: degree,
    }
}

fn triangle_tables() -> &'static [TriangleRule; 5] {
    static TABLES: OnceLock<[TriangleRule; 5]> = OnceLock::new();
    TABLES.get_or_init(|| {
        let centroid = TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
            exactness_degree: 1,
        };
        let deg2 = TriangleRule {
            points: vec![
                [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            ],
            weights: vec![1.0 / 3.0; 3],
            exactness_degree: 2,
        };
        [
            centroid,
            deg2,
            duffy_triangle(4),
            duffy_triangle(6),
            duffy_triangle(8),
        ]
    })
}

fn tet_tables() -> &'static [TetRule; 4] {
    static TABLES: OnceLock<[TetRule; 4]> = OnceLock::new();
    TABLES.get_or_init(|| {
        let centroid = TetRule {
            points: vec![[0.25; 4]],
            weights: vec![1.0],
            exactness_degree: 1,
        };
        let a = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
        let b = (5.0 - 5f64.sqrt()) / 20.0;
        let deg2 = TetRule {
            points: vec![
                [a, b, b, b],
                [b, a, b, b],
                [b, b, a, b],
                [b, b, b, a],
            ],
            weights: vec![0.25; 4],
            exactness_degree: 2,
        };
        [centroid, deg2, duffy_tet(4), duffy_tet(6)]
    })
}

/// Smallest stored triangle rule with exactness at least `degree`.
pub fn triangle_rule(degree: usize) -> Result<&'static TriangleRule> {
    if degree == 0 || degree > MAX_TRIANGLE_DEGREE {
        return Err(Error::UnsupportedQuadratureDegree(degree));
    }
    let tables = triangle_tables();
    Ok(tables
        .iter()
        .find(|r| r.exactness_degree >= degree)
        .expect("table covers all supported degrees"))
}

/// Smallest stored tetrahedron rule with exactness at least `degree`.
pub fn tet_rule(degree: usize) -> Result<&'static TetRule> {
    if degree == 0 || degree > MAX_TET_DEGREE {
        return Err(Error::UnsupportedQuadratureDegree(degree));
    }
    let tables = tet_tables();
    Ok(tables
        .iter()
        .find(|r| r.exactness_degree >= degree)
        .expect("table covers all supported degrees"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
    }

    /// integral of x^p y^q over the unit right triangle
    fn tri_monomial(p: usize, q: usize) -> f64 {
        factorial(p) * factorial(q) / factorial(p + q + 2)
    }

    /// integral of x^p y^q z^r over the unit right tetrahedron
    fn tet_monomial(p: usize, q: usize, r: usize) -> f64 {
        factorial(p) * factorial(q) * factorial(r) / factorial(p + q + r + 3)
    }

    #[test]
    fn triangle_rules_exact_and_positive() {
        for degree in 1..=MAX_TRIANGLE_DEGREE {
            let rule = triangle_rule(degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for p in 0..=rule.exactness_degree {
                for q in 0..=rule.exactness_degree - p {
                    let mut s = 0.0;
                    for (pt, w) in rule.points.iter().zip(&rule.weights) {
                        // reference coordinates (x, y) = (lambda_1, lambda_2)
                        s += w * pt[1].powi(p as i32) * pt[2].powi(q as i32);
                    }
                    let exact = tri_monomial(p, q);
                    // rule convention: integral = area * sum(w f); ref area 1/2
                    assert!(
                        (0.5 * s - exact).abs() <= 1e-13 * exact.max(1.0),
                        "deg {degree} monomial x^{p} y^{q}: got {} want {exact}",
                        0.5 * s
                    );
                }
            }
        }
        assert!(triangle_rule(9).is_err());
        assert!(triangle_rule(0).is_err());
    }

    #[test]
    fn tet_rules_exact_and_positive() {
        for degree in 1..=MAX_TET_DEGREE {
            let rule = tet_rule(degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for p in 0..=rule.exactness_degree {
                for q in 0..=rule.exactness_degree - p {
                    for r in 0..=rule.exactness_degree - p - q {
                        let mut s = 0.0;
                        for (pt, w) in rule.points.iter().zip(&rule.weights) {
                            s += w
                                * pt[1].powi(p as i32)
                                * pt[2].powi(q as i32)
                                * pt[3].powi(r as i32);
                        }
                        let exact = tet_monomial(p, q, r);
                        let vol_ref = 1.0 / 6.0;
                        assert!(
                            (vol_ref * s - exact).abs() <= 1e-13 * exact.max(1.0),
                            "deg {degree} monomial x^{p} y^{q} z^{r}"
                        );
                    }
                }
            }
        }
        assert!(tet_rule(7).is_err());
    }

    #[test]
    fn centroid_rules() {
        let tri = triangle_rule(1).unwrap();
        assert_eq!(tri.points.len(), 1);
        assert_eq!(tri.points[0], [1.0 / 3.0; 3]);
        let tet = tet_rule(1).unwrap();
        assert_eq!(tet.points.len(), 1);
        assert_eq!(tet.points[0], [0.25; 4]);
    }

    #[test]
    fn gauss_nodes_match_known_values() {
        let (x, w) = gauss_legendre_01(2);
        let d = 0.5 / 3f64.sqrt();
        assert!((x[0] - (0.5 - d)).abs() < 1e-15);
        assert!((x[1] - (0.5 + d)).abs() < 1e-15);
        assert!((w[0] - 0.5).abs() < 1e-15);
        let (x5, w5) = gauss_legendre_01(5);
        assert!((x5[2] - 0.5).abs() < 1e-15);
        assert!((w5.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
