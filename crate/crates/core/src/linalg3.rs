//! Minimal dense complex linear algebra in dimensions 2 and 3.
//!
//! Jacobian chains of high iterates mix scales like 1e7 (unstable direction)
//! and 1e-18 (the `b`-column), and their determinants `(-b mu)^n` underflow
//! doubles long before the chains themselves stop making sense. Products are
//! therefore carried with an explicit power-of-two exponent, and linear solves
//! use fully pivoted, equilibrated elimination.

use crate::{Error, Result, C};

pub type C3 = [C; 3];

#[inline]
pub fn c3_add(a: C3, b: C3) -> C3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn c3_sub(a: C3, b: C3) -> C3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn c3_scale(s: C, a: C3) -> C3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// Euclidean norm on C^3 (the norm fixed for all expansion estimates).
#[inline]
pub fn c3_norm(a: C3) -> f64 {
    (a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()).sqrt()
}

#[inline]
pub fn c3_dist(a: C3, b: C3) -> f64 {
    c3_norm(c3_sub(a, b))
}

/// Hermitian inner product `<a, b> = sum a_i conj(b_i)`.
#[inline]
pub fn c3_dot(a: C3, b: C3) -> C {
    a[0] * b[0].conj() + a[1] * b[1].conj() + a[2] * b[2].conj()
}

/// Row-major 3x3 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M3(pub [[C; 3]; 3]);

impl M3 {
    pub fn zero() -> Self {
        M3([[C::new(0.0, 0.0); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = M3::zero();
        for i in 0..3 {
            m.0[i][i] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn diag(d: C3) -> Self {
        let mut m = M3::zero();
        for i in 0..3 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn mul_vec(&self, v: C3) -> C3 {
        let mut out = [C::new(0.0, 0.0); 3];
        for i in 0..3 {
            out[i] = self.0[i][0] * v[0] + self.0[i][1] * v[1] + self.0[i][2] * v[2];
        }
        out
    }

    pub fn mul(&self, rhs: &M3) -> M3 {
        let mut out = M3::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = C::new(0.0, 0.0);
                for k in 0..3 {
                    s += self.0[i][k] * rhs.0[k][j];
                }
                out.0[i][j] = s;
            }
        }
        out
    }

    pub fn det(&self) -> C {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for row in &self.0 {
            for e in row {
                m = m.max(e.norm());
            }
        }
        m
    }

    /// Solve `A x = b` by fully pivoted Gaussian elimination.
    pub fn solve(&self, b: C3) -> Result<C3> {
        let mut a = self.0;
        let mut rhs = b;
        let mut col_of = [0usize, 1, 2];

        for step in 0..3 {
            // full pivot
            let (mut pi, mut pj, mut pv) = (step, step, 0.0f64);
            for i in step..3 {
                for j in step..3 {
                    let v = a[i][j].norm();
                    if v > pv {
                        (pi, pj, pv) = (i, j, v);
                    }
                }
            }
            if pv == 0.0 {
                return Err(Error::SingularSystem("3x3 solve: zero pivot".into()));
            }
            a.swap(step, pi);
            rhs.swap(step, pi);
            for row in a.iter_mut() {
                row.swap(step, pj);
            }
            col_of.swap(step, pj);

            let piv = a[step][step];
            for i in (step + 1)..3 {
                let f = a[i][step] / piv;
                for j in step..3 {
                    let v = a[step][j];
                    a[i][j] -= f * v;
                }
                let v = rhs[step];
                rhs[i] -= f * v;
            }
        }

        let mut y = [C::new(0.0, 0.0); 3];
        for i in (0..3).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..3 {
                s -= a[i][j] * y[j];
            }
            y[i] = s / a[i][i];
        }
        let mut x = [C::new(0.0, 0.0); 3];
        for i in 0..3 {
            x[col_of[i]] = y[i];
        }
        Ok(x)
    }
}

/// A 3x3 complex matrix with a separate power-of-two exponent: the value is
/// `2^exp * mat`. Keeps long products away from overflow/underflow.
#[derive(Debug, Clone, Copy)]
pub struct ScaledM3 {
    pub mat: M3,
    pub exp: i64,
}

impl ScaledM3 {
    pub fn identity() -> Self {
        ScaledM3 {
            mat: M3::identity(),
            exp: 0,
        }
    }

    pub fn from_m3(m: M3) -> Self {
        let mut s = ScaledM3 { mat: m, exp: 0 };
        s.normalize();
        s
    }

    fn normalize(&mut self) {
        let m = self.mat.max_abs();
        if m == 0.0 || !m.is_finite() {
            return;
        }
        let e = m.log2().floor() as i64;
        if e != 0 {
            let f = (2.0f64).powi(-(e as i32));
            for row in self.mat.0.iter_mut() {
                for v in row.iter_mut() {
                    *v *= f;
                }
            }
            self.exp += e;
        }
    }

    /// `self <- m * self` (left-multiply by the next Jacobian in the chain).
    pub fn left_mul(&mut self, m: &M3) {
        self.mat = m.mul(&self.mat);
        self.normalize();
    }

    /// log2 of |det| of the scaled product. Only meaningful while the
    /// product stays condition-bounded; long hyperbolic chains should read
    /// determinants from a [`QrChain`] instead.
    pub fn log2_abs_det(&self) -> f64 {
        self.mat.det().norm().log2() + 3.0 * self.exp as f64
    }

    /// Apply to a vector, returning `(unit-ish vector, log2 growth)` relative
    /// to the input norm.
    pub fn apply_log(&self, v: C3) -> (C3, f64) {
        let nv = c3_norm(v);
        let w = self.mat.mul_vec(v);
        let nw = c3_norm(w);
        let growth = nw.log2() - nv.log2() + self.exp as f64;
        (c3_scale(C::new(1.0 / nw, 0.0), w), growth)
    }

    /// Eigenvalues as `(unit modulus direction, log2 modulus)` triples,
    /// computed from the characteristic cubic of the normalized matrix.
    pub fn eigenvalues_log(&self) -> Vec<(C, f64)> {
        let eigs = eigenvalues3(&self.mat);
        eigs.into_iter()
            .map(|l| {
                let n = l.norm();
                if n == 0.0 {
                    (C::new(0.0, 0.0), f64::NEG_INFINITY)
                } else {
                    (l / n, n.log2() + self.exp as f64)
                }
            })
            .collect()
    }
}

/// Eigenvalues of a 3x3 complex matrix via its characteristic cubic.
pub fn eigenvalues3(m: &M3) -> Vec<C> {
    // char poly: x^3 + a2 x^2 + a1 x + a0
    let tr = m.0[0][0] + m.0[1][1] + m.0[2][2];
    let a2 = -tr;
    let minors = (m.0[1][1] * m.0[2][2] - m.0[1][2] * m.0[2][1])
        + (m.0[0][0] * m.0[2][2] - m.0[0][2] * m.0[2][0])
        + (m.0[0][0] * m.0[1][1] - m.0[0][1] * m.0[1][0]);
    let a1 = minors;
    let a0 = -m.det();
    crate::poly::roots(&[a0, a1, a2, C::new(1.0, 0.0)], 16)
        .expect("cubic root finding cannot hit the degree cap")
        .into_iter()
        .map(|r| r.value)
        .collect()
}

/// Re-orthogonalized product of Jacobians: successive QR factorizations keep
/// columns independent, `log2_diag` accumulates log2 of the R diagonals
/// (singular-value-like scales), and `log2_det` sums the per-step closed-form
/// determinants — the overflow-free determinant of the whole chain.
///
/// For strongly hierarchical chains the smallest `log2_diag` entry saturates
/// at the f64 cancellation floor; determinant questions must go through
/// `log2_det`.
pub struct QrChain {
    pub q: M3,
    pub log2_diag: [f64; 3],
    pub log2_det: f64,
}

impl QrChain {
    pub fn new() -> Self {
        QrChain {
            q: M3::identity(),
            log2_diag: [0.0; 3],
            log2_det: 0.0,
        }
    }

    /// Push the next matrix: decompose `m * q_prev = q_new * r` (modified
    /// Gram-Schmidt) and accumulate the diagonal scales.
    pub fn push(&mut self, m: &M3) {
        self.log2_det += m.det().norm().log2();
        let a = m.mul(&self.q);
        // columns of a
        let mut cols: [C3; 3] = [[C::new(0.0, 0.0); 3]; 3];
        for j in 0..3 {
            for i in 0..3 {
                cols[j][i] = a.0[i][j];
            }
        }
        let mut q: [C3; 3] = [[C::new(0.0, 0.0); 3]; 3];
        for j in 0..3 {
            let mut v = cols[j];
            for k in 0..j {
                let proj = c3_dot(v, q[k]);
                v = c3_sub(v, c3_scale(proj, q[k]));
            }
            let n = c3_norm(v);
            self.log2_diag[j] += n.log2();
            q[j] = c3_scale(C::new(1.0 / n, 0.0), v);
        }
        for j in 0..3 {
            for i in 0..3 {
                self.q.0[i][j] = q[j][i];
            }
        }
    }
}

impl Default for QrChain {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn solve_roundtrip() {
        let m = M3([
            [c(2.0, 1.0), c(0.1, 0.0), c(0.0, -0.3)],
            [c(1.0, 0.0), c(0.0, 0.0), c(0.2, 0.0)],
            [c(0.5, 0.0), c(0.0, 0.1), c(1.0, 1.0)],
        ]);
        let x = [c(1.0, -2.0), c(0.5, 0.5), c(-3.0, 0.0)];
        let b = m.mul_vec(x);
        let y = m.solve(b).unwrap();
        for i in 0..3 {
            assert!(close(x[i], y[i], 1e-12));
        }
    }

    #[test]
    fn scaled_product_tracks_tiny_determinants() {
        // chains whose determinants underflow doubles: short products keep an
        // accurate det through the exponent ledger, long products go through
        // the re-orthogonalized route below
        let j = M3([
            [c(3.0, 0.0), c(1e-18, 0.0), c(0.0, 0.0)],
            [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.1, 0.0), c(0.0, 0.0), c(0.9, 0.0)],
        ]);
        let per = j.det().norm().log2();
        let mut p = ScaledM3::identity();
        p.left_mul(&j);
        assert!((p.log2_abs_det() - per).abs() < 1e-9);
        let mut chain = QrChain::new();
        for _ in 0..40 {
            chain.push(&j);
        }
        // per-step determinant accumulation is exact in log space
        assert!(
            (chain.log2_det - 40.0 * per).abs() < 1e-10 * per.abs() * 40.0,
            "chain det {} vs {}",
            chain.log2_det,
            40.0 * per
        );
        // the dominant R scale tracks the top eigenvalue growth
        let lmax = eigenvalues3(&j)
            .into_iter()
            .map(|l| l.norm())
            .fold(0.0f64, f64::max);
        assert!((chain.log2_diag[0] / 40.0 - lmax.log2()).abs() < 0.1);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = M3::diag([c(0.5, 0.0), c(0.0, 2.0), c(-1.0, -1.0)]);
        let mut eigs = eigenvalues3(&m);
        eigs.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        assert!(close(eigs[0], c(0.5, 0.0), 1e-10));
        assert!(close(eigs[1], c(-1.0, -1.0), 1e-10));
        assert!(close(eigs[2], c(0.0, 2.0), 1e-10));
    }

    #[test]
    fn qr_chain_matches_naive_product_on_short_chains() {
        let j = M3([
            [c(1.2, 0.3), c(0.4, 0.0), c(0.0, 0.1)],
            [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.2, 0.0), c(0.0, 0.0), c(0.7, 0.1)],
        ]);
        let mut chain = QrChain::new();
        let mut naive = M3::identity();
        for _ in 0..6 {
            chain.push(&j);
            naive = j.mul(&naive);
        }
        let sum_log: f64 = chain.log2_diag.iter().sum();
        // moderate hierarchy: R diagonals still carry the determinant, and the
        // per-step accumulation agrees
        assert!(
            (sum_log - naive.det().norm().log2()).abs() < 1e-6,
            "{sum_log} vs {}",
            naive.det().norm().log2()
        );
        assert!((chain.log2_det - sum_log).abs() < 1e-6);
    }
}
