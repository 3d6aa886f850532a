//! Legendre polynomials on the reference interval (-1, 1): three-term
//! recurrence evaluation, antiderivatives in closed form, exact norms,
//! Gauss nodes, and the 1D projection growth ratio.

/// L_k(x) by the three-term recurrence. Recurrence evaluation avoids the
/// cancellation a coefficient expansion suffers at high degree.
pub fn eval(k: usize, x: f64) -> f64 {
    eval_with_deriv(k, x).0
}

/// (L_k(x), L_k'(x)) by the recurrence for values and the standard
/// derivative identity (1-x^2) L_k' = k (L_{k-1} - x L_k).
pub fn eval_with_deriv(k: usize, x: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let mut pm = 1.0; // L_0
    let mut p = x; // L_1
    for j in 1..k {
        let jf = j as f64;
        let pn = ((2.0 * jf + 1.0) * x * p - jf * pm) / (jf + 1.0);
        pm = p;
        p = pn;
    }
    let kf = k as f64;
    let dp = if (1.0 - x * x).abs() < 1e-14 {
        // endpoint values: L_k'(±1) = ±^(k+1) k(k+1)/2
        let sign = if x > 0.0 { 1.0 } else { (-1.0f64).powi(k as i32 + 1) };
        sign * kf * (kf + 1.0) / 2.0
    } else {
        kf * (pm - x * p) / (1.0 - x * x)
    };
    (p, dp)
}

/// Antiderivative of L_k vanishing at -1, in closed form:
/// Lhat_k(x) = (L_{k+1}(x) - L_{k-1}(x)) / (2k+1), with L_{-1} = 0,
/// so Lhat_0(x) = x + 1.
pub fn antiderivative(k: usize, x: f64) -> f64 {
    if k == 0 {
        return x + 1.0;
    }
    (eval(k + 1, x) - eval(k - 1, x)) / (2.0 * k as f64 + 1.0)
}

/// ||L_k||^2 on (-1,1) = 2/(2k+1).
pub fn norm_sq(k: usize) -> f64 {
    2.0 / (2.0 * k as f64 + 1.0)
}

/// ||L_k'||^2 on (-1,1) = k(k+1).
pub fn deriv_norm_sq(k: usize) -> f64 {
    let kf = k as f64;
    kf * (kf + 1.0)
}

/// ||(Pi_p Lhat_p)'|| / ||Lhat_p'|| = sqrt(p(p-1) / (2(2p+1))), the closed
/// form of the 1D growth ratio; behaves like sqrt(p)/2 for large p.
pub fn growth_ratio(p: usize) -> f64 {
    assert!(p >= 1, "growth_ratio requires p >= 1");
    let pf = p as f64;
    (pf * (pf - 1.0) / (2.0 * (2.0 * pf + 1.0))).sqrt()
}

/// Gauss-Legendre nodes and weights on [-1, 1], exact for degree 2n-1.
/// Newton iteration from the Chebyshev initial guess.
pub fn gauss(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = eval_with_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((-x, w)); // ascending order
    }
    rule
}

/// Fully numeric cross-check pipeline for `growth_ratio`: build Lhat_p,
/// project onto P_p with the orthonormal (normalized Legendre) basis,
/// differentiate, and integrate. Used by tests and the CLI table.
pub fn growth_ratio_numeric(p: usize) -> f64 {
    assert!(p >= 1);
    let quad = gauss(p + 3);
    // coefficients of Pi_p Lhat_p in the Legendre basis
    let mut coeff = vec![0.0; p + 1];
    for (k, c) in coeff.iter_mut().enumerate() {
        let mut s = 0.0;
        for &(x, w) in &quad {
            s += w * antiderivative(p, x) * eval(k, x);
        }
        *c = s / norm_sq(k);
    }
    // || d/dx (sum c_k L_k) ||^2 by quadrature
    let mut num = 0.0;
    for &(x, w) in &quad {
        let mut d = 0.0;
        for (k, &c) in coeff.iter().enumerate() {
            d += c * eval_with_deriv(k, x).1;
        }
        num += w * d * d;
    }
    // || Lhat_p' ||^2 = || L_p ||^2
    (num / norm_sq(p)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_degree_values() {
        assert_eq!(eval(0, 0.3), 1.0);
        assert!((eval(1, 0.3) - 0.3).abs() < 1e-15);
        assert!((eval(2, 0.3) - (3.0 * 0.09 - 1.0) / 2.0).abs() < 1e-15);
        assert!((antiderivative(0, 0.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn endpoint_normalization() {
        for k in 0..=50 {
            assert!((eval(k, 1.0) - 1.0).abs() < 1e-10, "L_{k}(1) != 1");
        }
    }

    #[test]
    fn antiderivative_vanishes_at_endpoints() {
        for k in 1..=50 {
            assert!(antiderivative(k, -1.0).abs() < 1e-12);
            assert!(antiderivative(k, 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        // integrate L_k from -1 to x with an exact Gauss rule
        for k in [1usize, 2, 5, 17, 50] {
            for &x in &[-0.7, 0.0, 0.33, 0.9] {
                let n = k / 2 + 2;
                let mut s = 0.0;
                for &(t, w) in &gauss(n) {
                    // map [-1,1] -> [-1,x]
                    let half = (x + 1.0) / 2.0;
                    s += w * half * eval(k, -1.0 + half * (t + 1.0));
                }
                assert!(
                    (s - antiderivative(k, x)).abs() < 1e-12,
                    "closed form vs quadrature mismatch at k={k}, x={x}"
                );
            }
        }
    }

    #[test]
    fn norms_match_quadrature() {
        for k in 0..=50 {
            let quad = gauss(k + 2);
            let (mut v, mut d) = (0.0, 0.0);
            for &(x, w) in &quad {
                let (p, dp) = eval_with_deriv(k, x);
                v += w * p * p;
                d += w * dp * dp;
            }
            assert!((v - norm_sq(k)).abs() < 1e-10 * norm_sq(k).max(1.0));
            if k > 0 {
                assert!((d - deriv_norm_sq(k)).abs() < 1e-10 * deriv_norm_sq(k));
            }
        }
    }

    #[test]
    fn growth_ratio_values() {
        assert_eq!(growth_ratio(1), 0.0);
        assert!((growth_ratio(2) - (0.2f64).sqrt()).abs() < 1e-14);
        // asymptotics: ratio / sqrt(p) -> 1/2
        let r = growth_ratio(50) / (50.0f64).sqrt();
        assert!((r - 0.5).abs() < 0.01, "ratio/sqrt(p) = {r} at p=50");
    }

    #[test]
    fn growth_ratio_numeric_agrees() {
        for p in 1..=30 {
            let a = growth_ratio(p);
            let b = growth_ratio_numeric(p);
            assert!((a - b).abs() < 1e-9, "p={p}: closed {a} vs numeric {b}");
        }
    }

    #[test]
    fn gauss_rule_exactness() {
        // degree-9 monomials with a 5-point rule
        let rule = gauss(5);
        for d in 0..=9usize {
            let exact = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
            let s: f64 = rule.iter().map(|&(x, w)| w * x.powi(d as i32)).sum();
            assert!((s - exact).abs() < 1e-13);
        }
    }
}
