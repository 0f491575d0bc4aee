//! Dense complex polynomials (coefficients stored low to high) and a
//! simultaneous-iteration root finder.
//!
//! Roots are found by Aberth-Ehrlich iteration with multiplicity clustering
//! and Newton polish. The public entry point enforces a degree cap; the
//! pipeline never needs large direct solves (larger periods go through
//! inverse-branch contraction instead).

use crate::{Error, Result, C};

/// Evaluate `p(z)` by Horner.
pub fn eval(coeffs: &[C], z: C) -> C {
    let mut acc = C::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        acc = acc * z + a;
    }
    acc
}

/// Evaluate `(p(z), p'(z))`.
pub fn eval_with_deriv(coeffs: &[C], z: C) -> (C, C) {
    let mut p = C::new(0.0, 0.0);
    let mut dp = C::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Coefficients of `p'`.
pub fn derivative(coeffs: &[C]) -> Vec<C> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * C::new(k as f64, 0.0))
        .collect()
}

/// Monic polynomial with the given roots.
pub fn from_roots(roots: &[C]) -> Vec<C> {
    let mut coeffs = vec![C::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C::new(0.0, 0.0); coeffs.len() + 1];
        for (k, &a) in coeffs.iter().enumerate() {
            next[k + 1] += a;
            next[k] -= a * r;
        }
        coeffs = next;
    }
    coeffs
}

/// Product of two polynomials.
pub fn mul(a: &[C], b: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// A root together with its multiplicity and the residual `|p(root)|`.
#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub value: C,
    pub multiplicity: usize,
    pub residual: f64,
}

/// All roots of `p`, with multiplicities summing to the degree.
///
/// Errors on the zero polynomial and on degrees beyond `cap`.
pub fn roots(coeffs: &[C], cap: usize) -> Result<Vec<Root>> {
    let mut c: Vec<C> = coeffs.to_vec();
    while let Some(last) = c.last() {
        if last.norm() == 0.0 && c.len() > 1 {
            c.pop();
        } else {
            break;
        }
    }
    if c.iter().all(|a| a.norm() == 0.0) {
        return Err(Error::ZeroPolynomial);
    }
    let degree = c.len() - 1;
    if degree > cap {
        return Err(Error::DegreeCap { degree, cap });
    }
    if degree == 0 {
        return Ok(vec![]);
    }

    // normalize to monic
    let lead = c[degree];
    let monic: Vec<C> = c.iter().map(|&a| a / lead).collect();

    let approx = aberth(&monic);
    let clustered = cluster(&monic, approx);
    Ok(clustered)
}

fn aberth(monic: &[C]) -> Vec<C> {
    let n = monic.len() - 1;
    let r0 = (monic[0].norm().max(1e-12)).powf(1.0 / n as f64).max(1e-3) + 0.5;
    let mut z: Vec<C> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.7;
            C::new(r0 * th.cos(), r0 * th.sin())
        })
        .collect();

    for _sweep in 0..400 {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            let (p, dp) = eval_with_deriv(monic, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let newton = if dp.norm() > 0.0 { p / dp } else { C::new(1e-3, 0.0) };
            let mut s = C::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let d = z[i] - z[j];
                    if d.norm() > 1e-300 {
                        s += C::new(1.0, 0.0) / d;
                    }
                }
            }
            let denom = C::new(1.0, 0.0) - newton * s;
            let w = if denom.norm() > 1e-300 { newton / denom } else { newton };
            z[i] -= w;
            max_step = max_step.max(w.norm() / (1.0 + z[i].norm()));
        }
        if max_step < 1e-15 {
            break;
        }
    }
    z
}

/// Multiplicity estimate at an approximate root: for a root of multiplicity m,
/// `p p'' / p'^2 -> (m-1)/m`, so `m ~ 1 / (1 - p p''/p'^2)`.
fn multiplicity_estimate(monic: &[C], z: C) -> usize {
    let dp_coeffs = derivative(monic);
    let ddp_coeffs = derivative(&dp_coeffs);
    let p = eval(monic, z);
    let dp = eval(&dp_coeffs, z);
    let ddp = eval(&ddp_coeffs, z);
    if dp.norm() == 0.0 {
        return 2;
    }
    let ratio = p * ddp / (dp * dp);
    let denom = C::new(1.0, 0.0) - ratio;
    if denom.norm() < 1e-3 {
        return monic.len() - 1;
    }
    let m = (C::new(1.0, 0.0) / denom).re;
    m.round().clamp(1.0, (monic.len() - 1) as f64) as usize
}

fn cluster(monic: &[C], mut approx: Vec<C>) -> Vec<Root> {
    let degree = monic.len() - 1;
    let mut out: Vec<Root> = Vec::new();
    approx.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let mut used = vec![false; approx.len()];

    for i in 0..approx.len() {
        if used[i] {
            continue;
        }
        let m_est = multiplicity_estimate(monic, approx[i]);
        // clustering radius: simple roots are tight, multiple roots spread as
        // the m-th root of machine epsilon
        let radius = if m_est > 1 {
            10.0 * (1e-13f64).powf(1.0 / m_est as f64) * (1.0 + approx[i].norm())
        } else {
            1e-7 * (1.0 + approx[i].norm())
        };
        let mut members = vec![i];
        for j in (i + 1)..approx.len() {
            if !used[j] && (approx[j] - approx[i]).norm() < radius {
                members.push(j);
            }
        }
        for &j in &members {
            used[j] = true;
        }
        let mult = members.len();
        let mut center = C::new(0.0, 0.0);
        for &j in &members {
            center += approx[j];
        }
        center /= C::new(mult as f64, 0.0);
        if mult == 1 {
            // Newton polish
            for _ in 0..8 {
                let (p, dp) = eval_with_deriv(monic, center);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = p / dp;
                center -= step;
                if step.norm() < 1e-16 * (1.0 + center.norm()) {
                    break;
                }
            }
        }
        let residual = eval(monic, center).norm();
        out.push(Root {
            value: center,
            multiplicity: mult,
            residual,
        });
    }

    debug_assert_eq!(out.iter().map(|r| r.multiplicity).sum::<usize>(), degree);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    #[test]
    fn quadratic_pm_one() {
        // z^2 - 1
        let rs = roots(&[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], 12).unwrap();
        let mut vals: Vec<f64> = rs.iter().map(|r| r.value.re).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] + 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn period_two_cycle_of_squaring() {
        // z^2 + z + 1: primitive cube roots of unity
        let rs = roots(&[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)], 12).unwrap();
        for r in &rs {
            assert!((r.value.norm() - 1.0).abs() < 1e-12);
            assert!((r.value.re + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn triple_root_at_zero() {
        let rs = roots(&[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], 12).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].multiplicity, 3);
        assert!(rs[0].value.norm() < 1e-4);
    }

    #[test]
    fn degree_cap_and_zero_poly() {
        let coeffs: Vec<C> = (0..=13).map(|k| c(1.0 + k as f64, 0.0)).collect();
        assert!(matches!(
            roots(&coeffs, 12),
            Err(Error::DegreeCap { degree: 13, cap: 12 })
        ));
        assert!(matches!(
            roots(&[c(0.0, 0.0), c(0.0, 0.0)], 12),
            Err(Error::ZeroPolynomial)
        ));
    }

    #[test]
    fn reconstruction_matches_input() {
        // random-ish degree 9 polynomial, roots -> monic reconstruction
        let mut coeffs = vec![
            c(0.3, -1.2),
            c(-0.7, 0.1),
            c(1.5, 0.9),
            c(0.0, -0.4),
            c(-1.1, 0.0),
            c(0.2, 2.0),
            c(0.8, -0.8),
            c(-0.3, 0.3),
            c(1.0, 1.0),
            c(2.0, -0.5),
        ];
        let lead = *coeffs.last().unwrap();
        let rs = roots(&coeffs, 12).unwrap();
        let mut expanded: Vec<C> = Vec::new();
        for r in &rs {
            for _ in 0..r.multiplicity {
                expanded.push(r.value);
            }
        }
        let rebuilt = from_roots(&expanded);
        for a in coeffs.iter_mut() {
            *a /= lead;
        }
        let scale: f64 = coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max);
        for (a, b) in coeffs.iter().zip(rebuilt.iter()) {
            assert!((a - b).norm() < 1e-8 * scale, "coefficient mismatch: {a} vs {b}");
        }
    }
}
