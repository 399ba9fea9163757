//! Real roots of low-order real polynomials.
//!
//! Cubics are solved as eigenvalues of the companion matrix and then polished
//! with Newton steps on the original coefficients. Near a fold the two
//! merging roots pick up an imaginary part of order sqrt(machine epsilon);
//! anything with `|im| < realness * (1 + |re|)` is accepted as real.

use nalgebra::Matrix3;

use crate::params::TOLERANCES;

#[derive(Debug, Clone, PartialEq)]
pub struct RealRoots {
    /// Ascending.
    pub roots: Vec<f64>,
    /// Two of the accepted roots are closer than the degeneracy tolerance.
    pub degenerate: bool,
}

/// Horner evaluation of `c[0] x^3 + c[1] x^2 + c[2] x + c[3]` and its derivative.
pub fn eval_cubic(c: &[f64; 4], x: f64) -> (f64, f64) {
    let f = ((c[0] * x + c[1]) * x + c[2]) * x + c[3];
    let df = (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2];
    (f, df)
}

/// Largest magnitude among the four terms at `x`; the scale for residuals.
pub fn cubic_term_scale(c: &[f64; 4], x: f64) -> f64 {
    let x2 = x * x;
    (c[0] * x2 * x)
        .abs()
        .max((c[1] * x2).abs())
        .max((c[2] * x).abs())
        .max(c[3].abs())
}

fn newton_polish(c: &[f64; 4], mut x: f64) -> f64 {
    // two unconditional steps, then continue only while the residual is
    // still above the round-off floor and the step helps
    for it in 0..12 {
        let (f, df) = eval_cubic(c, x);
        if f == 0.0 || df == 0.0 || !df.is_finite() {
            break;
        }
        let next = x - f / df;
        if it >= 2 {
            let (fn_, _) = eval_cubic(c, next);
            let converged = f.abs() <= 1e-13 * cubic_term_scale(c, x);
            if converged || fn_.abs() >= f.abs() {
                break;
            }
        }
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    x
}

fn flag_degenerate(roots: &[f64]) -> bool {
    roots.windows(2).any(|w| {
        let scale = w[0].abs().max(w[1].abs()).max(f64::MIN_POSITIVE);
        (w[1] - w[0]).abs() <= TOLERANCES.root_degeneracy * scale
    })
}

fn finish(mut roots: Vec<f64>) -> RealRoots {
    roots.sort_by(|a, b| a.total_cmp(b));
    let degenerate = flag_degenerate(&roots);
    RealRoots { roots, degenerate }
}

/// Real roots of `c2 x^2 + c1 x + c0`, falling back to linear when `c2 == 0`.
pub fn real_quadratic_roots(c2: f64, c1: f64, c0: f64) -> RealRoots {
    if c2 == 0.0 {
        if c1 == 0.0 {
            return RealRoots { roots: vec![], degenerate: false };
        }
        return finish(vec![-c0 / c1]);
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        let tol = TOLERANCES.root_realness;
        let re = -c1 / (2.0 * c2);
        let im = (-disc).sqrt() / (2.0 * c2.abs());
        return if im < tol * (1.0 + re.abs()) {
            finish(vec![re, re])
        } else {
            RealRoots { roots: vec![], degenerate: false }
        };
    }
    // cancellation-free form
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(q / c2);
        roots.push(c0 / q);
    } else {
        roots.extend([0.0, 0.0]);
    }
    finish(roots)
}

/// Real roots of `c[0] x^3 + c[1] x^2 + c[2] x + c[3]`.
pub fn real_cubic_roots(c: [f64; 4]) -> RealRoots {
    if c[0] == 0.0 {
        return real_quadratic_roots(c[1], c[2], c[3]);
    }
    let (p, q, r) = (c[1] / c[0], c[2] / c[0], c[3] / c[0]);
    if r == 0.0 {
        // x (x^2 + p x + q): keep the zero root exact
        let mut rest = real_quadratic_roots(1.0, p, q).roots;
        rest.push(0.0);
        return finish(rest);
    }
    // rescale x = s y so the constant of the monic cubic becomes +-1
    let s = r.abs().cbrt();
    let companion = Matrix3::new(
        -p / s,
        -q / (s * s),
        -r / (s * s * s),
        1.0,
        0.0,
        0.0,
        0.0,
        1.0,
        0.0,
    );
    let tol = TOLERANCES.root_realness;
    let roots = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < tol * (1.0 + z.re.abs()))
        .map(|z| newton_polish(&c, z.re * s))
        .collect();
    finish(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_distinct_roots() {
        // (x-1)(x-2)(x-3)
        let r = real_cubic_roots([1.0, -6.0, 11.0, -6.0]);
        assert_eq!(r.roots.len(), 3);
        for (got, want) in r.roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(!r.degenerate);
    }

    #[test]
    fn one_real_root() {
        // (x-2)(x^2+1)
        let r = real_cubic_roots([1.0, -2.0, 1.0, -2.0]);
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn double_root_is_flagged() {
        // (x-1)^2 (x+2)
        let r = real_cubic_roots([1.0, 0.0, -3.0, 2.0]);
        assert!(r.degenerate, "{r:?}");
        assert!(r.roots.iter().any(|x| (x + 2.0).abs() < 1e-12));
    }

    #[test]
    fn zero_constant_term_keeps_exact_zero() {
        let r = real_cubic_roots([1.0, -3.0, 2.0, 0.0]);
        assert_eq!(r.roots, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn leading_zero_falls_back() {
        let r = real_cubic_roots([0.0, 0.0, 2.0, -4.0]);
        assert_eq!(r.roots, vec![2.0]);
        let r = real_cubic_roots([0.0, 1.0, 0.0, -4.0]);
        assert_eq!(r.roots, vec![-2.0, 2.0]);
    }

    #[test]
    fn widely_separated_scales() {
        // tiny cubic coefficient: one root near 1e4, two complex near 5e15
        let chi = 1e-16;
        let c = [4.0 * chi * chi, -4.0 * chi, 1.0025, -1e4];
        let r = real_cubic_roots(c);
        assert_eq!(r.roots.len(), 1);
        let (f, _) = eval_cubic(&c, r.roots[0]);
        assert!(f.abs() <= 1e-9 * cubic_term_scale(&c, r.roots[0]));
        assert!((r.roots[0] - 1e4 / 1.0025).abs() < 1e-6);
    }
}
