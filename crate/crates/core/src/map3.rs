//! The degree-2 automorphism family of C^3:
//!
//! ```text
//! f(z1, z2, z3) = (P(z1) + b z2 + sigma z3 (z1 - alpha), z1, lambda z1 + mu z3 + nu)
//! ```
//!
//! with `P` the (possibly rescaled) quadratic. Evaluation, closed-form
//! inverse, Jacobians, orbits, scaled Jacobian chains, and the sigma = 0
//! skew-product oracle (Henon times affine fiber) used as an independent
//! check by the later modules.

use crate::coeffs::CoeffSet;
use crate::disk::PolyDisk3;
use crate::linalg3::{M3, ScaledM3, C3};
use crate::profile::RigorProfile;
use crate::quad::{QuadSetup, Rescale, RescaledQuad};
use crate::{Error, Result, C};
use serde::{Deserialize, Serialize};

/// Parameters of one map of the family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapParams {
    /// Quadratic parameter (original coordinates).
    #[serde(with = "crate::jsonio::complex")]
    pub c: C,
    #[serde(with = "crate::jsonio::complex")]
    pub b: C,
    #[serde(with = "crate::jsonio::complex")]
    pub sigma: C,
    #[serde(with = "crate::jsonio::complex")]
    pub lambda: C,
    #[serde(with = "crate::jsonio::complex")]
    pub mu: C,
    #[serde(with = "crate::jsonio::complex")]
    pub nu: C,
    /// The constant in the sigma-coupling term, in map coordinates.
    #[serde(with = "crate::jsonio::complex")]
    pub alpha: C,
    /// Change of variable between the original plane and map coordinates.
    pub rescale: Rescale,
    pub profile: RigorProfile,
    /// Present when the map was assembled by the pipeline.
    pub setup: Option<Box<QuadSetup>>,
    pub coeffs: Option<CoeffSet>,
}

impl MapParams {
    /// Assemble the pipeline map at `(c, b, sigma)` from a finished setup.
    pub fn from_pipeline(setup: &QuadSetup, coeffs: &CoeffSet, b: C, sigma: C) -> Result<Self> {
        if b.norm() == 0.0 {
            return Err(Error::Precondition("b = 0 is not an automorphism".into()));
        }
        Ok(MapParams {
            c: setup.c0,
            b,
            sigma,
            lambda: coeffs.lambda,
            mu: coeffs.mu,
            nu: coeffs.nu,
            alpha: setup.alpha, // rescaled alpha = 0
            rescale: setup.rescale,
            profile: setup.profile.clone(),
            setup: Some(Box::new(setup.clone())),
            coeffs: Some(coeffs.clone()),
        })
    }

    /// A free-standing map (identity rescale), used by tests and the
    /// dissipative sink family.
    pub fn bare(c: C, b: C, sigma: C, lambda: C, mu: C, nu: C, alpha: C) -> Self {
        MapParams {
            c,
            b,
            sigma,
            lambda,
            mu,
            nu,
            alpha,
            rescale: Rescale::identity(),
            profile: RigorProfile::demo(),
            setup: None,
            coeffs: None,
        }
    }

    pub fn quad(&self) -> RescaledQuad {
        RescaledQuad {
            c: self.c,
            rescale: self.rescale,
        }
    }

    /// The same map with a different quadratic parameter.
    pub fn with_c(&self, c: C) -> Self {
        let mut p = self.clone();
        p.c = c;
        p
    }

    pub fn qr(&self) -> usize {
        self.setup.as_ref().map(|s| s.q * s.r).unwrap_or(1)
    }
}

/// One application of the map.
pub fn f_apply(p: &MapParams, z: C3) -> C3 {
    let quad = p.quad();
    [
        quad.eval(z[0]) + p.b * z[1] + p.sigma * z[2] * (z[0] - p.alpha),
        z[0],
        p.lambda * z[0] + p.mu * z[2] + p.nu,
    ]
}

/// Closed-form inverse (requires `b != 0` and `mu != 0`).
pub fn f_inverse(p: &MapParams, w: C3) -> Result<C3> {
    if p.b.norm() == 0.0 {
        return Err(Error::Precondition("b = 0: map not invertible".into()));
    }
    if p.mu.norm() == 0.0 {
        return Err(Error::Precondition("mu = 0: map not invertible".into()));
    }
    let quad = p.quad();
    let z1 = w[1];
    let z3 = (w[2] - p.lambda * z1 - p.nu) / p.mu;
    let z2 = (w[0] - quad.eval(z1) - p.sigma * z3 * (z1 - p.alpha)) / p.b;
    Ok([z1, z2, z3])
}

/// Jacobian at a point: rows
/// `[(P'(z1) + sigma z3, b, sigma (z1 - alpha)), (1, 0, 0), (lambda, 0, mu)]`.
pub fn f_jacobian(p: &MapParams, z: C3) -> M3 {
    let quad = p.quad();
    let zero = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    M3([
        [
            quad.deriv(z[0]) + p.sigma * z[2],
            p.b,
            p.sigma * (z[0] - p.alpha),
        ],
        [one, zero, zero],
        [p.lambda, zero, p.mu],
    ])
}

/// Jacobian of the inverse at `w` in closed form.
pub fn f_inverse_jacobian(p: &MapParams, w: C3) -> Result<M3> {
    let z = f_inverse(p, w)?;
    let quad = p.quad();
    let zero = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    // rows of d z / d w with z1 = w2, z3 = (w3 - lambda w2 - nu)/mu,
    // z2 = (w1 - P(w2) - sigma z3 (w2 - alpha)) / b
    let dz3_dw2 = -p.lambda / p.mu;
    let dz3_dw3 = one / p.mu;
    let dz2_dw1 = one / p.b;
    let dz2_dw2 =
        (-quad.deriv(z[0]) - p.sigma * (dz3_dw2 * (z[0] - p.alpha) + z[2])) / p.b;
    let dz2_dw3 = -p.sigma * dz3_dw3 * (z[0] - p.alpha) / p.b;
    Ok(M3([
        [zero, one, zero],
        [dz2_dw1, dz2_dw2, dz2_dw3],
        [zero, dz3_dw2, dz3_dw3],
    ]))
}

/// Forward (n >= 0) or backward (n < 0) orbit, recording every point and the
/// first index that leaves `boxr` (if any).
pub fn orbit(p: &MapParams, z: C3, n: i64, boxr: &PolyDisk3) -> Result<(Vec<C3>, Option<usize>)> {
    let steps = n.unsigned_abs() as usize;
    let mut pts = Vec::with_capacity(steps + 1);
    let mut escaped_at = None;
    let mut x = z;
    pts.push(x);
    if !boxr.contains_point(x) {
        escaped_at = Some(0);
    }
    for k in 1..=steps {
        x = if n >= 0 { f_apply(p, x) } else { f_inverse(p, x)? };
        pts.push(x);
        if escaped_at.is_none() && !boxr.contains_point(x) {
            escaped_at = Some(k);
        }
    }
    Ok((pts, escaped_at))
}

/// Scaled product of Jacobians along a forward orbit of length `n` from `z`
/// (chain for `D f^n`), plus the visited points.
pub fn jacobian_chain(p: &MapParams, z: C3, n: usize) -> (ScaledM3, Vec<C3>) {
    let mut prod = ScaledM3::identity();
    let mut pts = Vec::with_capacity(n + 1);
    let mut x = z;
    pts.push(x);
    for _ in 0..n {
        prod.left_mul(&f_jacobian(p, x));
        x = f_apply(p, x);
        pts.push(x);
    }
    (prod, pts)
}

/// Re-orthogonalized Jacobian chain along a forward orbit: the stable way
/// to read off `log2 |det D f^n|` and singular-value scales for long n.
pub fn jacobian_chain_qr(p: &MapParams, z: C3, n: usize) -> crate::linalg3::QrChain {
    let mut chain = crate::linalg3::QrChain::new();
    let mut x = z;
    for _ in 0..n {
        chain.push(&f_jacobian(p, x));
        x = f_apply(p, x);
    }
    chain
}

/// Scaled product for `D f^{-n}` along the forward-computed orbit `pts`
/// (pts[0] = start of the forward orbit, pts[n] = the point where the
/// backward chain is anchored). Avoids unstable backward iteration.
pub fn inverse_jacobian_chain(p: &MapParams, pts: &[C3]) -> Result<ScaledM3> {
    let mut prod = ScaledM3::identity();
    for w in pts.iter().skip(1).rev() {
        prod.left_mul(&f_inverse_jacobian(p, *w)?);
    }
    Ok(prod)
}

/// Sectional dissipativity of a saddle spectrum `|l1| <= |l2| < 1 < |l3|`:
/// every pair product below 1.
pub fn sectionally_dissipative(eigs: (C, C, C)) -> Result<bool> {
    let mut mods = [eigs.0.norm(), eigs.1.norm(), eigs.2.norm()];
    mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if !(mods[1] < 1.0 && mods[2] > 1.0) {
        return Err(Error::Precondition(format!(
            "not a saddle of index (2,1): moduli {mods:?}"
        )));
    }
    Ok(mods[0] * mods[2] < 1.0 && mods[1] * mods[2] < 1.0)
}

/// Fixed points of `f` (solve the cubic-free reduction: z2 = z1,
/// z3 = (lambda z1 + nu)/(1 - mu), and P(z1) + b z1 + sigma z3 (z1-alpha) = z1).
pub fn fixed_points(p: &MapParams) -> Result<Vec<C3>> {
    // The first coordinate gives a quadratic in z1 after substituting z3.
    // Solve numerically via the polynomial route on a coarse basis.
    let one = C::new(1.0, 0.0);
    if (one - p.mu).norm() < 1e-14 {
        return Err(Error::SingularSystem("mu = 1: fiber fixed line degenerate".into()));
    }
    let quad = p.quad();
    // P(z) = s2 z^2 + s1 z + s0 in map coordinates
    let s2 = C::new(p.rescale.radius, 0.0);
    let s1 = 2.0 * p.rescale.center;
    let s0 = (p.rescale.center * p.rescale.center + p.c - p.rescale.center)
        / p.rescale.radius;
    debug_assert!(
        (quad.eval(C::new(0.3, -0.1))
            - (s2 * C::new(0.3, -0.1) * C::new(0.3, -0.1) + s1 * C::new(0.3, -0.1) + s0))
        .norm()
            < 1e-10
    );
    // z3(z1) = (lambda z1 + nu) / (1 - mu)
    let t1 = p.lambda / (one - p.mu);
    let t0 = p.nu / (one - p.mu);
    // equation: s2 z^2 + s1 z + s0 + b z + sigma (t1 z + t0)(z - alpha) - z = 0
    let a2 = s2 + p.sigma * t1;
    let a1 = s1 + p.b + p.sigma * (t0 - t1 * p.alpha) - one;
    let a0 = s0 - p.sigma * t0 * p.alpha;
    let roots = crate::poly::roots(&[a0, a1, a2], 4)?;
    Ok(roots
        .into_iter()
        .map(|r| {
            let z1 = r.value;
            let z3 = t1 * z1 + t0;
            [z1, z1, z3]
        })
        .collect())
}

// ---------------------------------------------------------------------------
// sigma = 0 oracle: Henon times affine fiber
// ---------------------------------------------------------------------------

/// The planar Henon factor `H(z1, z2) = (P(z1) + b z2, z1)`.
pub fn henon_apply(p: &MapParams, z: [C; 2]) -> [C; 2] {
    let quad = p.quad();
    [quad.eval(z[0]) + p.b * z[1], z[0]]
}

pub fn henon_jacobian(p: &MapParams, z: [C; 2]) -> [[C; 2]; 2] {
    let quad = p.quad();
    [
        [quad.deriv(z[0]), p.b],
        [C::new(1.0, 0.0), C::new(0.0, 0.0)],
    ]
}

/// Forward 3D orbit predicted by the skew product at `sigma = 0`: Henon in
/// `(z1, z2)`, and `z3` driven by `z3 <- lambda z1 + mu z3 + nu`.
pub fn skew_orbit_oracle(p: &MapParams, z: C3, n: usize) -> Vec<C3> {
    let mut out = Vec::with_capacity(n + 1);
    let mut xy = [z[0], z[1]];
    let mut z3 = z[2];
    out.push([xy[0], xy[1], z3]);
    for _ in 0..n {
        let new3 = p.lambda * xy[0] + p.mu * z3 + p.nu;
        xy = henon_apply(p, xy);
        z3 = new3;
        out.push([xy[0], xy[1], z3]);
    }
    out
}

/// Eigenvalue moduli (log2) of `D f^n` along an orbit at `sigma = 0`,
/// predicted by the factorization: the Henon pair plus `mu^n`.
pub fn skew_spectrum_oracle(p: &MapParams, z: C3, n: usize) -> Vec<f64> {
    // 2x2 scaled chain
    let mut prod = [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]];
    let mut exp2 = 0i64;
    let mut xy = [z[0], z[1]];
    for _ in 0..n {
        let j = henon_jacobian(p, xy);
        let a = [
            [
                j[0][0] * prod[0][0] + j[0][1] * prod[1][0],
                j[0][0] * prod[0][1] + j[0][1] * prod[1][1],
            ],
            [
                j[1][0] * prod[0][0] + j[1][1] * prod[1][0],
                j[1][0] * prod[0][1] + j[1][1] * prod[1][1],
            ],
        ];
        prod = a;
        let m = prod
            .iter()
            .flatten()
            .map(|e| e.norm())
            .fold(0.0f64, f64::max);
        if m > 0.0 {
            let e = m.log2().floor() as i64;
            if e != 0 {
                let f = (2.0f64).powi(-(e as i32));
                for row in prod.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= f;
                    }
                }
                exp2 += e;
            }
        }
        xy = henon_apply(p, xy);
    }
    // eigenvalues of the scaled 2x2
    let tr = prod[0][0] + prod[1][1];
    let det = prod[0][0] * prod[1][1] - prod[0][1] * prod[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    let mut logs = vec![
        l1.norm().log2() + exp2 as f64,
        l2.norm().log2() + exp2 as f64,
        (p.mu.norm().log2()) * n as f64,
    ];
    logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    logs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;
    use crate::linalg3::{c3_norm, eigenvalues3};
    use rand::Rng;
    use rand::SeedableRng;

    fn test_params() -> MapParams {
        MapParams::bare(
            c(-2.0, 0.0),
            c(1e-3, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.5, 0.0),
            c(0.0, 0.0),
            c(2.0, 0.0),
        )
    }

    fn rand_c3(rng: &mut impl Rng) -> C3 {
        [
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        ]
    }

    #[test]
    fn apply_matches_formula() {
        let p = test_params();
        let w = f_apply(&p, [c(0.0, 0.0); 3]);
        assert!((w[0] - c(-2.0, 0.0)).norm() < 1e-15);
        assert!(w[1].norm() < 1e-15);
        assert!(w[2].norm() < 1e-15);
        // z1 = alpha kills the sigma term identically
        let mut p2 = test_params();
        p2.sigma = c(0.7, 0.3);
        let z = [c(2.0, 0.0), c(0.3, 0.1), c(-0.2, 0.5)];
        let w_with = f_apply(&p2, z);
        p2.sigma = c(0.0, 0.0);
        let w_without = f_apply(&p2, z);
        assert!((w_with[0] - w_without[0]).norm() < 1e-15);
    }

    #[test]
    fn skew_structure_at_sigma_zero() {
        // third coordinate independent of z2
        let p = test_params();
        let z_a = [c(0.4, 0.1), c(0.9, -0.3), c(0.2, 0.0)];
        let z_b = [c(0.4, 0.1), c(-0.7, 0.8), c(0.2, 0.0)];
        assert!((f_apply(&p, z_a)[2] - f_apply(&p, z_b)[2]).norm() < 1e-15);
    }

    #[test]
    fn inverse_round_trips() {
        let mut p = test_params();
        p.sigma = c(1e-2, 5e-3);
        p.lambda = c(0.1, -0.05);
        p.nu = c(0.01, 0.0);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let z = rand_c3(&mut rng);
            let w = f_apply(&p, z);
            let back = f_inverse(&p, w).unwrap();
            assert!(c3_norm(crate::linalg3::c3_sub(back, z)) < 1e-12 * (1.0 + c3_norm(z)));
            let fwd = f_apply(&p, f_inverse(&p, z).unwrap());
            assert!(c3_norm(crate::linalg3::c3_sub(fwd, z)) < 1e-12 * (1.0 + c3_norm(z)));
        }
        // concrete triple
        let w = f_apply(&p, [c(0.0, 0.0); 3]);
        let z = f_inverse(&p, w).unwrap();
        assert!(c3_norm(z) < 1e-12);
        // b -> 0 errors
        p.b = c(0.0, 0.0);
        assert!(f_inverse(&p, [c(0.1, 0.0); 3]).is_err());
    }

    #[test]
    fn jacobian_determinant_is_minus_b_mu() {
        let mut p = test_params();
        p.sigma = c(0.3, -0.2);
        p.lambda = c(0.05, 0.02);
        let expect = -(p.b * p.mu);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let z = rand_c3(&mut rng);
            let det = f_jacobian(&p, z).det();
            assert!((det - expect).norm() < 1e-14);
        }
        // top row at z1 = alpha, z3 = 0
        let j = f_jacobian(&p, [p.alpha, c(0.2, 0.0), c(0.0, 0.0)]);
        assert!((j.0[0][2]).norm() < 1e-15);
        assert!((j.0[0][0] - p.quad().deriv(p.alpha)).norm() < 1e-15);
    }

    #[test]
    fn chain_rule_and_inverse_jacobian() {
        let mut p = test_params();
        p.sigma = c(0.1, 0.05);
        let z = [c(0.2, 0.1), c(-0.3, 0.2), c(0.4, -0.1)];
        // jacobian of f^2 = product along the orbit
        let (chain, pts) = jacobian_chain(&p, z, 2);
        let direct = f_jacobian(&p, pts[1]).mul(&f_jacobian(&p, pts[0]));
        let scale = (2.0f64).powi(chain.exp as i32);
        for i in 0..3 {
            for j in 0..3 {
                assert!((chain.mat.0[i][j] * scale - direct.0[i][j]).norm() < 1e-10);
            }
        }
        // inverse jacobian is the matrix inverse of the forward one
        let jf = f_jacobian(&p, z);
        let ji = f_inverse_jacobian(&p, f_apply(&p, z)).unwrap();
        let prod = ji.mul(&jf);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod.0[i][j] - c(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn degree_two_in_each_variable() {
        // polynomial degree 2: second differences in z1 are constant, and
        // the map is affine in z2 and z3
        let mut p = test_params();
        p.sigma = c(0.4, 0.1);
        let e = 0.37;
        let probe = |t: f64| f_apply(&p, [c(t, 0.0), c(0.1, 0.0), c(0.2, 0.0)])[0];
        let d3 = probe(3.0 * e) - 3.0 * probe(2.0 * e) + 3.0 * probe(e) - probe(0.0);
        assert!(d3.norm() < 1e-10, "third difference {d3}");
        let probe2 = |t: f64| f_apply(&p, [c(0.3, 0.0), c(t, 0.0), c(0.2, 0.0)])[0];
        let dd2 = probe2(2.0) - 2.0 * probe2(1.0) + probe2(0.0);
        assert!(dd2.norm() < 1e-12);
    }

    #[test]
    fn orbit_records_escape() {
        let p = test_params();
        let boxr = PolyDisk3::unit();
        // fixed point stays
        let fps = fixed_points(&p).unwrap();
        let inside = fps.iter().find(|z| boxr.contains_point(**z));
        if let Some(&fp) = inside {
            let (pts, esc) = orbit(&p, fp, 10, &boxr).unwrap();
            assert!(esc.is_none());
            assert!(c3_norm(crate::linalg3::c3_sub(pts[10], fp)) < 1e-6);
        }
        // far point escapes in one step
        let far = [c(5.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let (_, esc) = orbit(&p, far, 3, &boxr).unwrap();
        assert_eq!(esc, Some(0));
        // n = 0
        let (pts, esc) = orbit(&p, [c(0.1, 0.0); 3], 0, &boxr).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(esc.is_none());
    }

    #[test]
    fn sectional_dissipativity_cases() {
        let e = |x: f64| c(x, 0.0);
        assert!(sectionally_dissipative((e(0.5), e(0.9), e(1.1))).unwrap());
        assert!(!sectionally_dissipative((e(0.5), e(0.95), e(1.1))).unwrap());
        assert!(sectionally_dissipative((e(0.5), e(1.2), e(2.0))).is_err());
    }

    #[test]
    fn determinant_of_iterates_is_power() {
        // bounded regime so the 50-step orbit stays finite
        let mut p = test_params();
        p.c = c(-0.1, 0.05);
        p.b = c(1e-2, 0.0);
        p.sigma = c(0.05, 0.02);
        let z = [c(0.1, 0.0), c(0.0, 0.1), c(-0.1, 0.0)];
        let chain = jacobian_chain_qr(&p, z, 50);
        let got: f64 = chain.log2_det;
        let expect = 50.0 * (p.b.norm() * p.mu.norm()).log2();
        assert!(
            (got - expect).abs() < 1e-8 * expect.abs(),
            "got {got} expect {expect}"
        );
    }

    #[test]
    fn skew_oracle_matches_map_at_sigma_zero() {
        let mut p = test_params();
        p.lambda = c(0.12, -0.07);
        p.nu = c(0.03, 0.01);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let z = rand_c3(&mut rng);
            let oracle = skew_orbit_oracle(&p, z, 12);
            let mut x = z;
            for (k, o) in oracle.iter().enumerate() {
                if c3_norm(*o) > 1e3 {
                    break; // escaped: comparison no longer meaningful
                }
                assert!(
                    c3_norm(crate::linalg3::c3_sub(x, *o)) < 1e-9 * (1.0 + c3_norm(*o)),
                    "k={k}"
                );
                x = f_apply(&p, x);
            }
        }
    }

    #[test]
    fn skew_spectrum_matches_direct_eigenvalues() {
        // comparable eigenvalue scales keep the direct cubic route resolvable
        let mut p = test_params();
        p.c = c(-0.1, 0.05);
        p.b = c(0.9, 0.0);
        p.mu = c(0.8, 0.0);
        let z = [c(0.3, 0.2), c(-0.1, 0.4), c(0.2, -0.3)];
        let n = 12;
        let (chain, _) = jacobian_chain(&p, z, n);
        let mut direct: Vec<f64> = chain
            .eigenvalues_log()
            .into_iter()
            .map(|(_, l)| l)
            .collect();
        direct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = skew_spectrum_oracle(&p, z, n);
        for (d, o) in direct.iter().zip(oracle.iter()) {
            assert!((d - o).abs() < 1e-7 * (1.0 + o.abs()), "{d} vs {o}");
        }
        let _ = eigenvalues3(&M3::identity());
    }
}
