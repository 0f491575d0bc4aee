//! Holomorphic interpolation on disks via roots-of-unity sampling.
//!
//! Curves and surface graphs in this crate are analytic on neighborhoods of
//! closed disks, so they are carried as truncated power series recovered by a
//! discrete Cauchy transform: sample on the circle, take a DFT. Coefficient
//! tails double as accuracy probes.

use crate::{Error, Result, C};

/// Truncated power series `f(t) = sum c_k (t/radius)^k` on `|t| <= radius`.
#[derive(Debug, Clone)]
pub struct Series1 {
    pub coeffs: Vec<C>,
    pub radius: f64,
}

impl Series1 {
    pub fn constant(value: C, radius: f64) -> Self {
        Series1 {
            coeffs: vec![value],
            radius,
        }
    }

    /// Interpolate `f` from `n` samples on the circle of the given radius.
    pub fn from_fn<F: FnMut(C) -> C>(n: usize, radius: f64, mut f: F) -> Self {
        let vals: Vec<C> = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                f(C::new(radius * th.cos(), radius * th.sin()))
            })
            .collect();
        Series1 {
            coeffs: dft_coeffs(&vals),
            radius,
        }
    }

    /// Like `from_fn` but failing samplers abort the interpolation.
    pub fn try_from_fn<F: FnMut(C) -> Result<C>>(n: usize, radius: f64, mut f: F) -> Result<Self> {
        let mut vals = Vec::with_capacity(n);
        for j in 0..n {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            vals.push(f(C::new(radius * th.cos(), radius * th.sin()))?);
        }
        Ok(Series1 {
            coeffs: dft_coeffs(&vals),
            radius,
        })
    }

    pub fn eval(&self, t: C) -> C {
        let u = t / self.radius;
        let mut acc = C::new(0.0, 0.0);
        for &a in self.coeffs.iter().rev() {
            acc = acc * u + a;
        }
        acc
    }

    /// d/dt of the series.
    pub fn deriv(&self) -> Series1 {
        let coeffs: Vec<C> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &a)| a * C::new(k as f64 / self.radius, 0.0))
            .collect();
        Series1 {
            coeffs: if coeffs.is_empty() {
                vec![C::new(0.0, 0.0)]
            } else {
                coeffs
            },
            radius: self.radius,
        }
    }

    /// Sum of the top quarter of coefficient magnitudes; small tails mean the
    /// truncation resolves the function on this disk.
    pub fn tail_norm(&self) -> f64 {
        let n = self.coeffs.len();
        let start = n - (n / 4).max(1);
        self.coeffs[start..].iter().map(|a| a.norm()).sum()
    }

    /// Largest coefficient magnitude.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Roots of the series inside `|t| < rho_frac * radius`, via the
    /// polynomial companion route on the truncated coefficients.
    pub fn roots_in_disk(&self, rho_frac: f64, cap: usize) -> Result<Vec<C>> {
        let scale = self.max_coeff();
        if scale == 0.0 {
            return Err(Error::ZeroPolynomial);
        }
        // drop negligible high-order coefficients so the cap reflects content
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().unwrap().norm() < 1e-13 * scale {
            coeffs.pop();
        }
        let rs = crate::poly::roots(&coeffs, cap)?;
        Ok(rs
            .into_iter()
            .filter(|r| r.value.norm() <= rho_frac)
            .flat_map(|r| std::iter::repeat(r.value * self.radius).take(r.multiplicity))
            .collect())
    }
}

/// Truncated bivariate power series on a product of disks.
#[derive(Debug, Clone)]
pub struct Series2 {
    /// `coeffs[k][l]` multiplies `(u/r1)^k (v/r2)^l`.
    pub coeffs: Vec<Vec<C>>,
    pub r1: f64,
    pub r2: f64,
}

impl Series2 {
    pub fn from_fn<F: FnMut(C, C) -> C>(n: usize, r1: f64, r2: f64, mut f: F) -> Self {
        let mut samples = vec![vec![C::new(0.0, 0.0); n]; n];
        for j in 0..n {
            let a = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            for k in 0..n {
                let b = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                samples[j][k] = f(
                    C::new(r1 * a.cos(), r1 * a.sin()),
                    C::new(r2 * b.cos(), r2 * b.sin()),
                );
            }
        }
        // row DFT then column DFT
        let row_dft: Vec<Vec<C>> = samples.iter().map(|row| dft_coeffs(row)).collect();
        let mut coeffs = vec![vec![C::new(0.0, 0.0); n]; n];
        for l in 0..n {
            let col: Vec<C> = (0..n).map(|j| row_dft[j][l]).collect();
            let c = dft_coeffs(&col);
            for k in 0..n {
                coeffs[k][l] = c[k];
            }
        }
        Series2 { coeffs, r1, r2 }
    }

    pub fn eval(&self, u: C, v: C) -> C {
        let x = u / self.r1;
        let y = v / self.r2;
        let mut acc = C::new(0.0, 0.0);
        for row in self.coeffs.iter().rev() {
            let mut inner = C::new(0.0, 0.0);
            for &a in row.iter().rev() {
                inner = inner * y + a;
            }
            acc = acc * x + inner;
        }
        acc
    }

    /// Partial derivatives (d/du, d/dv).
    pub fn grad(&self, u: C, v: C) -> (C, C) {
        let x = u / self.r1;
        let y = v / self.r2;
        let n = self.coeffs.len();
        let mut du = C::new(0.0, 0.0);
        let mut dv = C::new(0.0, 0.0);
        let mut xp = C::new(1.0, 0.0);
        let mut xpow = vec![C::new(0.0, 0.0); n];
        for k in 0..n {
            xpow[k] = xp;
            xp *= x;
        }
        let mut ypow = vec![C::new(0.0, 0.0); self.coeffs[0].len()];
        let mut yp = C::new(1.0, 0.0);
        for l in 0..self.coeffs[0].len() {
            ypow[l] = yp;
            yp *= y;
        }
        for (k, row) in self.coeffs.iter().enumerate() {
            for (l, &a) in row.iter().enumerate() {
                if k > 0 {
                    du += a * C::new(k as f64, 0.0) * xpow[k - 1] * ypow[l];
                }
                if l > 0 {
                    dv += a * C::new(l as f64, 0.0) * xpow[k] * ypow[l - 1];
                }
            }
        }
        (du / self.r1, dv / self.r2)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|r| r.iter())
            .map(|a| a.norm())
            .fold(0.0, f64::max)
    }

    /// Oscillation probe: total magnitude of all non-constant coefficients.
    pub fn oscillation(&self) -> f64 {
        let mut s = 0.0;
        for (k, row) in self.coeffs.iter().enumerate() {
            for (l, &a) in row.iter().enumerate() {
                if k + l > 0 {
                    s += a.norm();
                }
            }
        }
        s
    }
}

fn dft_coeffs(vals: &[C]) -> Vec<C> {
    let n = vals.len();
    let mut out = vec![C::new(0.0, 0.0); n];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut s = C::new(0.0, 0.0);
        for (j, &v) in vals.iter().enumerate() {
            let th = -2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64;
            s += v * C::new(th.cos(), th.sin());
        }
        *slot = s / n as f64;
    }
    out
}
