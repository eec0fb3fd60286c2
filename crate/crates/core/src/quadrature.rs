//! Gauss-Legendre rules on `[0, 1]` and collapsed (Stroud conical product)
//! rules on the reference triangle `(0,0), (1,0), (0,1)`.

use std::f64::consts::PI;

use crate::mesh::Point;

/// Quadrature on `[0, 1]`; weights sum to 1.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Quadrature on the reference triangle; weights sum to 1/2.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

impl LineRule {
    /// Gauss rule with `ceil((degree + 1) / 2)` points.
    pub fn with_degree(degree: usize) -> LineRule {
        let n = (degree + 2) / 2;
        let (x, w) = gauss_legendre(n.max(1));
        LineRule {
            points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|w| 0.5 * w).collect(),
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TriangleRule {
    /// Collapsed Gauss product rule exact for total degree `degree`.
    ///
    /// Maps `(s, t)` in the unit square to `(s, t (1 - s))`; the Jacobian adds
    /// one degree in `s`.
    pub fn with_degree(degree: usize) -> TriangleRule {
        let s_rule = LineRule::with_degree(degree + 1);
        let t_rule = LineRule::with_degree(degree);
        let mut points = Vec::with_capacity(s_rule.len() * t_rule.len());
        let mut weights = Vec::with_capacity(points.capacity());
        for (&s, &ws) in s_rule.points.iter().zip(&s_rule.weights) {
            for (&t, &wt) in t_rule.points.iter().zip(&t_rule.weights) {
                points.push([s, t * (1.0 - s)]);
                weights.push(ws * wt * (1.0 - s));
            }
        }
        TriangleRule {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical points and weights on the triangle `verts`.
    pub fn mapped(&self, verts: &[Point; 3]) -> (Vec<Point>, Vec<f64>) {
        let [a, b, c] = *verts;
        let det = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
        let pts = self
            .points
            .iter()
            .map(|&[s, t]| {
                [
                    a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]),
                    a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1]),
                ]
            })
            .collect();
        let w = self.weights.iter().map(|w| w * det).collect();
        (pts, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // int_0^1 t^p dt = 1/(p+1)
    #[test]
    fn line_rule_exactness() {
        for degree in 0..=25 {
            let r = LineRule::with_degree(degree);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..=degree {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(p as i32)).sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!((q - exact).abs() <= 1e-13 * exact, "deg {degree} p {p}: {q} vs {exact}");
            }
        }
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    // int over reference triangle of x^a y^b = a! b! / (a+b+2)!
    #[test]
    fn triangle_rule_exactness() {
        for degree in 0..=22 {
            let r = TriangleRule::with_degree(degree);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((q - exact).abs() <= 1e-13 * exact, "deg {degree} ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn triangle_points_are_interior() {
        let r = TriangleRule::with_degree(9);
        assert!(r.points.iter().all(|p| p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0));
    }

    #[test]
    fn mapped_rule_measures_area() {
        let r = TriangleRule::with_degree(3);
        let (_, w) = r.mapped(&[[1.0, 1.0], [3.0, 1.5], [0.5, 4.0]]);
        let area = 0.5 * ((2.0f64) * 3.0 - 0.5 * (-0.5));
        assert!((w.iter().sum::<f64>() - area).abs() < 1e-14);
    }
}
