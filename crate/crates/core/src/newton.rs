//! Damped Newton solvers: scalar complex, and small multivariate systems used
//! by the curve/surface pullback machinery.

use crate::disk::Precision;
use crate::linalg3::{c3_norm, c3_sub, M3, C3};
use crate::{Error, Result, C};

/// Outcome of a scalar Newton run.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOutcome {
    pub root: C,
    pub iters: usize,
    pub residual: f64,
}

/// Scalar complex Newton with stall detection.
///
/// `f` returns `(f(z), f'(z))`. Converges when `|f| <= prec.newton_tol`;
/// errors on slow (linear) convergence with a collapsing derivative, the
/// signature of a multiple root.
pub fn newton_solve<F>(f: F, x0: C, prec: &Precision) -> Result<NewtonOutcome>
where
    F: Fn(C) -> (C, C),
{
    prec.require_available()?;
    let mut z = x0;
    let mut prev_res = f64::INFINITY;
    let mut slow_steps = 0usize;

    for it in 0..prec.max_iter {
        let (p, dp) = f(z);
        let res = p.norm();
        if res <= prec.newton_tol {
            return Ok(NewtonOutcome {
                root: z,
                iters: it,
                residual: res,
            });
        }
        // multiple-root signature: linear contraction while |f'| ~ sqrt(|f|)
        if res > 0.1 * prev_res && dp.norm() < 10.0 * res.sqrt() {
            slow_steps += 1;
            if slow_steps >= 6 {
                return Err(Error::DegenerateDerivative {
                    deriv: dp.norm(),
                    threshold: 10.0 * res.sqrt(),
                });
            }
        } else {
            slow_steps = 0;
        }
        if dp.norm() < 1e-300 {
            return Err(Error::DegenerateDerivative {
                deriv: dp.norm(),
                threshold: 1e-300,
            });
        }
        let mut step = p / dp;
        // damping: keep steps from exploding out of the basin
        let max_step = 1.0 + z.norm();
        if step.norm() > max_step {
            step *= C::new(max_step / step.norm(), 0.0);
        }
        z -= step;
        prev_res = res;
    }
    let res = f(z).0.norm();
    if res <= prec.newton_tol {
        Ok(NewtonOutcome {
            root: z,
            iters: prec.max_iter,
            residual: res,
        })
    } else {
        Err(Error::NonConvergence {
            iters: prec.max_iter,
            residual: res,
        })
    }
}

/// Newton for a 2-equation complex system with user Jacobian.
///
/// `f(x)` returns the residual pair; `jac(x)` the 2x2 complex Jacobian rows.
pub fn newton2<F, J>(f: F, jac: J, x0: [C; 2], tol: f64, max_iter: usize) -> Result<([C; 2], f64)>
where
    F: Fn([C; 2]) -> [C; 2],
    J: Fn([C; 2]) -> [[C; 2]; 2],
{
    let mut x = x0;
    for _ in 0..max_iter {
        let r = f(x);
        let res = (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
        if res <= tol {
            return Ok((x, res));
        }
        let j = jac(x);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.norm() < 1e-300 {
            return Err(Error::SingularSystem("newton2 jacobian".into()));
        }
        let dx0 = (r[0] * j[1][1] - r[1] * j[0][1]) / det;
        let dx1 = (j[0][0] * r[1] - j[1][0] * r[0]) / det;
        x = [x[0] - dx0, x[1] - dx1];
    }
    let r = f(x);
    let res = (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
    if res <= tol {
        Ok((x, res))
    } else {
        Err(Error::NonConvergence {
            iters: max_iter,
            residual: res,
        })
    }
}

/// Newton for a 3-equation complex system with user Jacobian.
pub fn newton3<F, J>(f: F, jac: J, x0: C3, tol: f64, max_iter: usize) -> Result<(C3, f64)>
where
    F: Fn(C3) -> C3,
    J: Fn(C3) -> M3,
{
    let mut x = x0;
    for _ in 0..max_iter {
        let r = f(x);
        let res = c3_norm(r);
        if res <= tol {
            return Ok((x, res));
        }
        let j = jac(x);
        let dx = j.solve(r)?;
        x = c3_sub(x, dx);
    }
    let res = c3_norm(f(x));
    if res <= tol {
        Ok((x, res))
    } else {
        Err(Error::NonConvergence {
            iters: max_iter,
            residual: res,
        })
    }
}

/// Complex central finite difference of a holomorphic scalar function.
pub fn cdiff<F: Fn(C) -> C>(f: F, z: C, h: f64) -> C {
    let hh = C::new(h, 0.0);
    (f(z + hh) - f(z - hh)) / (2.0 * hh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    #[test]
    fn solves_square_root_of_two() {
        // f = z^2 + 2 from x0 = i converges to i sqrt(2)
        let out = newton_solve(
            |z| (z * z + c(2.0, 0.0), 2.0 * z),
            c(0.0, 1.0),
            &Precision::double(1e-13, 64),
        )
        .unwrap();
        assert!((out.root - c(0.0, 2.0f64.sqrt())).norm() < 1e-10);
        assert!(out.residual <= 1e-13);
    }

    #[test]
    fn finds_unit_root() {
        let out = newton_solve(
            |z| (z * z - c(1.0, 0.0), 2.0 * z),
            c(1.5, 0.0),
            &Precision::double(1e-13, 64),
        )
        .unwrap();
        assert!((out.root - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn double_root_stalls_with_degenerate_derivative() {
        let res = newton_solve(
            |z| (z * z, 2.0 * z),
            c(0.1, 0.0),
            &Precision::double(1e-13, 200),
        );
        assert!(matches!(res, Err(Error::DegenerateDerivative { .. })));
    }

    #[test]
    fn newton2_solves_coupled_system() {
        // x^2 - y = 0, y - 2 = 0  =>  y = 2, x = sqrt(2)
        let f = |x: [C; 2]| [x[0] * x[0] - x[1], x[1] - c(2.0, 0.0)];
        let jac = |x: [C; 2]| [[2.0 * x[0], c(-1.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let (x, _res) = newton2(f, jac, [c(1.0, 0.0), c(1.0, 0.0)], 1e-13, 50).unwrap();
        assert!((x[0] - c(2.0f64.sqrt(), 0.0)).norm() < 1e-10);
    }
}
