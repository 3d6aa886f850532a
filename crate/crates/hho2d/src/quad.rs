//! Quadrature on the reference triangle conv{(0,0),(1,0),(0,1)} and on
//! physical triangles/edges. Rules are built from tensorized Gauss-Legendre
//! points under the collapsed (Duffy) map, which keeps all weights positive
//! at every degree.

use crate::{Error, Result};

/// A quadrature rule on the reference triangle.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

pub const MAX_DEGREE: usize = 30;

/// Rule exact for all polynomials of total degree <= `degree` on the
/// reference triangle (area 1/2).
pub fn quad_rule_triangle(degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::QuadDegree(degree));
    }
    if degree <= 1 {
        // centroid rule
        return Ok(QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exactness_degree: 1,
        });
    }
    // Under x = u, y = v(1-u) the integrand x^a y^b picks up u-degree
    // a+b+1 (including the Jacobian 1-u) and v-degree b.
    let n = (degree + 3) / 2;
    let g: Vec<(f64, f64)> = crate::legendre::gauss(n)
        .into_iter()
        .map(|(x, w)| ((x + 1.0) / 2.0, w / 2.0)) // map to [0,1]
        .collect();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            points.push([u, v * (1.0 - u)]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree: degree,
    })
}

/// Quadrature points and weights mapped to a physical triangle.
#[derive(Clone, Debug)]
pub struct PhysQuad {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl PhysQuad {
    pub fn on_triangle(v: &[[f64; 2]; 3], degree: usize) -> Result<Self> {
        let rule = quad_rule_triangle(degree)?;
        let area2 = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
            - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
            .abs();
        let points = rule
            .points
            .iter()
            .map(|&[x, y]| {
                [
                    v[0][0] + (v[1][0] - v[0][0]) * x + (v[2][0] - v[0][0]) * y,
                    v[0][1] + (v[1][1] - v[0][1]) * x + (v[2][1] - v[0][1]) * y,
                ]
            })
            .collect();
        // reference weights sum to 1/2; physical measure is area2/2
        let weights = rule.weights.iter().map(|w| w * area2).collect();
        Ok(PhysQuad { points, weights })
    }

    /// Integrate a function given its values at the quadrature points.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Gauss rule on the segment a -> b: points on the segment, weights
/// including the arclength factor.
pub fn edge_quad(a: [f64; 2], b: [f64; 2], npts: usize) -> (Vec<[f64; 2]>, Vec<f64>, Vec<f64>) {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut pts = Vec::with_capacity(npts);
    let mut ws = Vec::with_capacity(npts);
    let mut ts = Vec::with_capacity(npts);
    for (x, w) in crate::legendre::gauss(npts) {
        let t = (x + 1.0) / 2.0;
        pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        ws.push(w / 2.0 * len);
        ts.push(t);
    }
    (pts, ws, ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!.
    fn exact_monomial(a: usize, b: usize) -> f64 {
        let mut v = 1.0;
        // a!b!/(a+b+2)! computed as a product to avoid overflow
        for i in 1..=(a + b + 2) {
            v /= i as f64;
        }
        for i in 1..=a {
            v *= i as f64;
        }
        for i in 1..=b {
            v *= i as f64;
        }
        v
    }

    #[test]
    fn centroid_rule() {
        let r = quad_rule_triangle(0).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
        assert!((r.points[0][0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn xy_and_x8() {
        let r = quad_rule_triangle(8).unwrap();
        let xy: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| w * p[0] * p[1])
            .sum();
        assert!((xy - 1.0 / 24.0).abs() < 1e-14);
        let x8: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| w * p[0].powi(8))
            .sum();
        assert!((x8 - exact_monomial(8, 0)).abs() < 1e-14, "x^8: {x8}");
    }

    #[test]
    fn exactness_all_degrees() {
        for d in 0..=MAX_DEGREE {
            let r = quad_rule_triangle(d).unwrap();
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 0.5).abs() < 1e-13, "weight sum at degree {d}");
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d {
                for b in 0..=(d - a) {
                    let s: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let e = exact_monomial(a, b);
                    assert!(
                        (s - e).abs() < 1e-13 * e.max(1.0),
                        "monomial x^{a} y^{b} at degree {d}: {s} vs {e}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree_cap() {
        assert!(quad_rule_triangle(31).is_err());
    }

    #[test]
    fn physical_triangle_area() {
        let v = [[1.0, 1.0], [3.0, 1.5], [1.5, 4.0]];
        let q = PhysQuad::on_triangle(&v, 2).unwrap();
        let area: f64 = q.weights.iter().sum();
        // shoelace
        let exact = 0.5
            * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
                - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
                .abs();
        assert!((area - exact).abs() < 1e-13);
    }

    #[test]
    fn edge_rule_integrates_arclength() {
        let (_, ws, _) = edge_quad([0.0, 0.0], [3.0, 4.0], 4);
        let s: f64 = ws.iter().sum();
        assert!((s - 5.0).abs() < 1e-13);
    }
}
