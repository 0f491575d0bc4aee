//! Synthesis and verification of the coefficients `mu0, mu, lambda, nu` and
//! the matrix-product expansion that feeds the transversality analysis.

use crate::profile::RigorProfile;
use crate::quad::QuadSetup;
use crate::{Error, Result, C};
use serde::{Deserialize, Serialize};

/// Third-coordinate window target `9/10 * 1e-4`.
pub const WINDOW_CENTER: f64 = 0.9e-4;

/// `mu0 = (1 - 1e-4)^{1/qr} e^{i pi / (2qr)}`, so `mu0^{qr} = (1 - 1e-4) i`.
pub fn mu0_of(q: usize, r: usize) -> C {
    let qr = (q * r) as f64;
    C::from_polar(
        (1.0 - 1e-4f64).powf(1.0 / qr),
        std::f64::consts::FRAC_PI_2 / qr,
    )
}

/// Geometric sums `S_r = 1 + mu^r + ... + mu^{qr-r}` (q terms) and
/// `S_1 = 1 + mu + ... + mu^{qr-1}`.
pub fn geometric_sums(mu: C, q: usize, r: usize) -> (C, C) {
    let mut s_r = C::new(0.0, 0.0);
    for n in 0..q {
        s_r += mu.powi((n * r) as i32);
    }
    let mut s_1 = C::new(0.0, 0.0);
    for n in 0..(q * r) {
        s_1 += mu.powi(n as i32);
    }
    (s_r, s_1)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeomSumCheck {
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// The two-sided estimate `q/2 <= 1 + |mu^r| + ... + |mu|^{qr-r}
/// <= 10 |1 + mu^r + ... + mu^{qr-r}|`.
pub fn geom_sum_check(mu0: C, q: usize, r: usize) -> GeomSumCheck {
    let lhs = q as f64 / 2.0;
    let mut mid = 0.0;
    for n in 0..q {
        mid += mu0.norm().powi((n * r) as i32);
    }
    let (s_r, _) = geometric_sums(mu0, q, r);
    let rhs = 10.0 * s_r.norm();
    GeomSumCheck {
        lhs,
        mid,
        rhs,
        pass: lhs <= mid && mid <= rhs,
    }
}

/// Solve the linear pair
/// `lambda A' S_r + nu S_1 =  9/10 1e-4`
/// `lambda B' S_r + nu S_1 = -9/10 1e-4`
/// and verify `|lambda| < 1` and the residuals.
pub fn solve_lambda_nu(aprime: C, bprime: C, mu0: C, q: usize, r: usize) -> Result<(C, C)> {
    let target = C::new(WINDOW_CENTER, 0.0);
    let (s_r, s_1) = geometric_sums(mu0, q, r);
    if s_r.norm() < 1e-12 || s_1.norm() < 1e-12 {
        return Err(Error::SingularSystem("vanishing geometric sum".into()));
    }
    let diff = aprime - bprime;
    if diff.norm() < 1e-12 {
        return Err(Error::SingularSystem("A' = B'".into()));
    }
    let lambda = 2.0 * target / (diff * s_r);
    let nu = (target - lambda * aprime * s_r) / s_1;

    let r1 = (lambda * aprime * s_r + nu * s_1 - target).norm();
    let r2 = (lambda * bprime * s_r + nu * s_1 + target).norm();
    if r1.max(r2) > 1e-12 * target.norm() {
        return Err(Error::check(
            "lambda_nu",
            "residuals above 1e-12 relative",
            1e-12 * target.norm() - r1.max(r2),
        ));
    }
    if lambda.norm() >= 1.0 {
        return Err(Error::check("lambda_nu", "|lambda| >= 1", 1.0 - lambda.norm()));
    }
    Ok((lambda, nu))
}

/// The recursion `w_0 = beta_0 - beta_m`,
/// `w_k = p'(beta_k) w_{k-1} + mu^k (beta_k - beta_m)` for `k = 1..m-1`.
/// `derivs[k]` must hold `p'(beta_k)`.
pub fn w_recursion(betas: &[C], derivs: &[C], mu: C) -> Vec<C> {
    let m = betas.len() - 1;
    let mut w = Vec::with_capacity(m);
    let mut cur = betas[0] - betas[m];
    w.push(cur);
    for k in 1..m {
        cur = derivs[k] * cur + mu.powi(k as i32) * (betas[k] - betas[m]);
        w.push(cur);
    }
    w
}

/// The full coefficient record consumed by the map family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffSet {
    #[serde(with = "crate::jsonio::complex")]
    pub mu0: C,
    #[serde(with = "crate::jsonio::complex")]
    pub mu: C,
    #[serde(with = "crate::jsonio::complex")]
    pub lambda: C,
    #[serde(with = "crate::jsonio::complex")]
    pub nu: C,
    pub q: usize,
    pub r: usize,
    pub m: usize,
    /// Critical orbit `beta_0 = 0, ..., beta_m = alpha` in original coordinates.
    #[serde(with = "crate::jsonio::complex_vec")]
    pub beta: Vec<C>,
    /// `w_0 .. w_{m-1}` of the recursion, in map (rescaled) coordinates.
    #[serde(with = "crate::jsonio::complex_vec")]
    pub w: Vec<C>,
    /// Half-width of the argument arc searched for mu, times |mu0|.
    pub b_mu_radius: f64,
}

impl CoeffSet {
    pub fn w_last(&self) -> C {
        *self.w.last().expect("w recursion is nonempty")
    }
}

/// Pick `mu` on the circle `|mu| = |mu0|` (an argument arc, so the modulus
/// constraints inherited from mu0 survive) maximizing `|w_{m-1}(mu)|`.
pub fn choose_mu(setup: &QuadSetup) -> Result<(C, Vec<C>)> {
    let m = setup.m;
    // critical orbit in original coordinates
    let mut betas = Vec::with_capacity(m + 1);
    let mut z = C::new(0.0, 0.0);
    for _ in 0..=m {
        betas.push(z);
        z = crate::quad::p(setup.c0, z);
    }
    // rescaled betas for the map-space recursion
    let betas_resc: Vec<C> = betas.iter().map(|&b| setup.rescale.to_unit(b)).collect();
    let derivs: Vec<C> = betas.iter().map(|&b| crate::quad::p_deriv(b)).collect();
    for (k, d) in derivs.iter().enumerate().take(m).skip(1) {
        if d.norm() < 1e-12 {
            return Err(Error::Precondition(format!(
                "p'(beta_{k}) = 0: w recursion degenerate"
            )));
        }
    }

    let mu0 = mu0_of(setup.q, setup.r);
    let arc = setup.profile.mu_ball_ratio;
    let mut best: Option<(C, Vec<C>, f64)> = None;
    let n_grid = 33;
    for i in 0..n_grid {
        let psi = arc * (2.0 * i as f64 / (n_grid - 1) as f64 - 1.0);
        let mu = mu0 * C::from_polar(1.0, psi);
        let w = w_recursion(&betas_resc, &derivs, mu);
        let score = w.last().unwrap().norm();
        if best.as_ref().map_or(true, |(_, _, s)| score > *s) {
            best = Some((mu, w, score));
        }
    }
    let (mu, w, score) = best.unwrap();
    if score < 1e-8 {
        return Err(Error::check(
            "choose_mu",
            "no mu in the search arc keeps |w_{m-1}| above threshold",
            score,
        ));
    }
    Ok((mu, w))
}

/// Assemble the coefficient set for a finished 1D setup.
pub fn build_coeffs(setup: &QuadSetup) -> Result<CoeffSet> {
    let mu0 = mu0_of(setup.q, setup.r);
    // the defining identity must reproduce (1 - 1e-4) i
    let pow = mu0.powi((setup.q * setup.r) as i32);
    let expect = C::new(0.0, 1.0 - 1e-4);
    if (pow - expect).norm() > 1e-13 {
        return Err(Error::check(
            "mu0",
            "mu0^{qr} identity drift",
            1e-13 - (pow - expect).norm(),
        ));
    }
    let gs = geom_sum_check(mu0, setup.q, setup.r);
    if !gs.pass {
        return Err(Error::check(
            "geom_sum",
            format!("{} <= {} <= {} violated", gs.lhs, gs.mid, gs.rhs),
            (gs.mid - gs.lhs).min(gs.rhs - gs.mid),
        ));
    }
    let (lambda, nu) = solve_lambda_nu(setup.aprime, setup.bprime, mu0, setup.q, setup.r)?;
    let (mu, w) = choose_mu(setup)?;

    let mut betas = Vec::with_capacity(setup.m + 1);
    let mut z = C::new(0.0, 0.0);
    for _ in 0..=setup.m {
        betas.push(z);
        z = crate::quad::p(setup.c0, z);
    }

    let coeffs = CoeffSet {
        mu0,
        mu,
        lambda,
        nu,
        q: setup.q,
        r: setup.r,
        m: setup.m,
        beta: betas,
        w,
        b_mu_radius: setup.profile.mu_ball_ratio * mu0.norm(),
    };
    validate_coeffs(setup, &coeffs)?;
    Ok(coeffs)
}

/// Invariant checks of a coefficient set against its setup.
pub fn validate_coeffs(setup: &QuadSetup, coeffs: &CoeffSet) -> Result<()> {
    let qr = (setup.q * setup.r) as i32;
    if coeffs.lambda.norm() >= 1.0 {
        return Err(Error::check("coeffs", "|lambda| >= 1", 1.0 - coeffs.lambda.norm()));
    }
    let hi = (1.0 - 1e-4 + 1e-10f64).powf(1.0 / qr as f64);
    if coeffs.mu.norm() >= hi {
        return Err(Error::check(
            "coeffs",
            "|mu| above the modulus cap",
            hi - coeffs.mu.norm(),
        ));
    }
    let lo = 1.0 - 2e-4;
    if coeffs.mu.norm().powi(2 * qr) <= lo {
        return Err(Error::check(
            "coeffs",
            "|mu|^{2qr} below 1 - 2e-4",
            coeffs.mu.norm().powi(2 * qr) - lo,
        ));
    }
    if coeffs.w_last().norm() == 0.0 {
        return Err(Error::check("coeffs", "w_{m-1} vanishes", 0.0));
    }
    if coeffs.beta[0].norm() > 0.0 {
        return Err(Error::Precondition("beta_0 must be the critical point 0".into()));
    }
    let (alpha, _) = crate::quad::alpha_fixed_point(setup.c0)?;
    if (coeffs.beta[coeffs.m] - alpha).norm() > 1e-10 {
        return Err(Error::Precondition("beta_m must be alpha".into()));
    }
    Ok(())
}

/// Evaluate the nested third-coordinate sum
/// `nu + lambda P^{qr-1}(z) + mu (nu + ... + mu (nu + lambda z))`
/// along the rescaled orbit of `z`.
pub fn third_coord_sum(setup: &QuadSetup, coeffs: &CoeffSet, z: C) -> C {
    let quad = setup.quad();
    let qr = setup.q * setup.r;
    let mut orbit = Vec::with_capacity(qr);
    let mut x = z;
    for _ in 0..qr {
        orbit.push(x);
        x = quad.eval(x);
    }
    let mut s = coeffs.nu + coeffs.lambda * orbit[0];
    for j in 1..qr {
        s = coeffs.nu + coeffs.lambda * orbit[j] + coeffs.mu * s;
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowReport {
    pub samples: usize,
    pub worst_margin: f64,
    #[serde(with = "crate::jsonio::complex")]
    pub worst_witness: C,
    /// Measured enclosing radii of the two branch windows.
    pub radius_branch1: f64,
    pub radius_branch2: f64,
}

/// Verify the third-coordinate windows `D(+- 9/10 1e-4, window_radius)` on
/// sampled points of `h_j^q(D')`.
pub fn third_coord_window(
    setup: &QuadSetup,
    coeffs: &CoeffSet,
    samples_n: usize,
    profile: &RigorProfile,
) -> Result<WindowReport> {
    let mut worst = f64::INFINITY;
    let mut witness = C::new(0.0, 0.0);
    let mut radii = [0.0f64; 2];
    for (bi, branch) in [1u8, 2].iter().enumerate() {
        let target = if *branch == 1 {
            C::new(WINDOW_CENTER, 0.0)
        } else {
            C::new(-WINDOW_CENTER, 0.0)
        };
        // sample the image of D' under h_branch^q: boundary rings + center
        let n_ring = (samples_n / 3).max(8);
        for ring in 0..3 {
            let rho = setup.dprime.radius * (1.0 - 0.45 * ring as f64);
            for i in 0..n_ring {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n_ring as f64;
                let w = C::from_polar(rho, th);
                let z = setup.h_q(*branch, w);
                let s = third_coord_sum(setup, coeffs, z);
                let dev = (s - target).norm();
                radii[bi] = radii[bi].max(dev);
                let margin = profile.window_radius - dev;
                if margin < worst {
                    worst = margin;
                    witness = z;
                }
            }
        }
    }
    if worst < 0.0 {
        return Err(Error::check(
            "third_coord_window",
            format!("sample escapes the window at z = {witness}"),
            worst,
        ));
    }
    Ok(WindowReport {
        samples: samples_n,
        worst_margin: worst,
        worst_witness: witness,
        radius_branch1: radii[0],
        radius_branch2: radii[1],
    })
}

/// The perturbed transfer matrix `N_n^sigma` of the expansion check.
/// `eps[i]` are the coefficients of the admissible perturbations:
/// `eps1 = eps[0] sigma`, `eps2 = eps[1] sigma^2`, `eps3 = eps[2] sigma`.
fn n_matrix(deriv: C, beta_rel: C, lambda: C, mu: C, sigma: C, eps: &[C; 3]) -> crate::linalg3::M3 {
    use crate::linalg3::M3;
    let zero = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    M3([
        [
            deriv + eps[0] * sigma,
            eps[1] * sigma * sigma,
            sigma * (beta_rel + eps[2] * sigma),
        ],
        [one, zero, zero],
        [lambda, zero, mu],
    ])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZetaReport {
    #[serde(with = "crate::jsonio::complex")]
    pub slope: C,
    #[serde(with = "crate::jsonio::complex")]
    pub w_expected: C,
    pub slope_error: f64,
    pub zeta3_error: f64,
    pub pass: bool,
}

/// Check `zeta_1(sigma) = w_{m-1} sigma + O(sigma^2)` and
/// `zeta_3(0) = mu^m` for the product `N_{m-1} ... N_0 (xi_1, xi_2, 1)`.
///
/// `eps` supplies per-step admissible perturbation coefficients (one `[C; 3]`
/// per matrix), `xi` the first-order coefficients of the input vector.
pub fn zeta_expansion_check(
    setup: &QuadSetup,
    coeffs: &CoeffSet,
    sigmas: &[f64],
    eps: &[[C; 3]],
    xi: [C; 2],
) -> Result<ZetaReport> {
    let m = coeffs.m;
    if eps.len() != m {
        return Err(Error::Precondition(format!(
            "need {m} perturbation rows, got {}",
            eps.len()
        )));
    }
    let betas_resc: Vec<C> = coeffs.beta.iter().map(|&b| setup.rescale.to_unit(b)).collect();
    let derivs: Vec<C> = coeffs.beta.iter().map(|&b| crate::quad::p_deriv(b)).collect();
    let beta_m = betas_resc[m];

    let zeta = |sigma: C| -> [C; 3] {
        let mut v = [xi[0] * sigma, xi[1] * sigma, C::new(1.0, 0.0)];
        for n in 0..m {
            let mat = n_matrix(
                derivs[n],
                betas_resc[n] - beta_m,
                coeffs.lambda,
                coeffs.mu,
                sigma,
                &eps[n],
            );
            v = mat.mul_vec(v);
        }
        v
    };

    // Richardson-extrapolated central differences for zeta_1'(0)
    let mut slope = C::new(0.0, 0.0);
    let mut prev: Option<C> = None;
    for (i, &h) in sigmas.iter().enumerate() {
        let hp = C::new(h, 0.0);
        let d = (zeta(hp)[0] - zeta(-hp)[0]) / (2.0 * hp);
        slope = match prev {
            // two scales differing by s: eliminate the O(h^2) term
            Some(d_prev) => {
                let s = sigmas[i - 1] / h;
                (d * C::new(s * s, 0.0) - d_prev) / (s * s - 1.0)
            }
            None => d,
        };
        prev = Some(d);
    }

    let w_expected = coeffs.w_last();
    let slope_error = (slope - w_expected).norm();
    let zeta3_error = (zeta(C::new(0.0, 0.0))[2] - coeffs.mu.powi(m as i32)).norm();
    let window = 10.0 * sigmas.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-14)
        * (1.0 + w_expected.norm());
    let pass = slope_error <= window && zeta3_error <= 1e-12 * (1.0 + coeffs.mu.norm());
    if !pass {
        return Err(Error::check(
            "zeta_expansion",
            format!("slope {slope} vs w {w_expected}"),
            window - slope_error,
        ));
    }
    Ok(ZetaReport {
        slope,
        w_expected,
        slope_error,
        zeta3_error,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;
    use crate::profile::RigorProfile;

    #[test]
    fn mu0_identities() {
        let m = mu0_of(1, 1);
        assert!((m - c(0.0, 0.9999)).norm() < 1e-15);
        let v = mu0_of(2, 3);
        assert!((v.powi(6) - c(0.0, 0.9999)).norm() < 1e-14);
        for q in 1..=8usize {
            for r in 1..=8usize {
                let m = mu0_of(q, r);
                assert!((m.norm() - (1.0f64 - 1e-4).powf(1.0 / (q * r) as f64)).abs() < 1e-15);
                assert!(
                    (m.powi((q * r) as i32) - c(0.0, 0.9999)).norm() < 1e-14,
                    "q={q} r={r}"
                );
            }
        }
        // the identity holds tightly out to qr = 64 x 64
        let m = mu0_of(64, 64);
        assert!((m.powi(64 * 64) - c(0.0, 0.9999)).norm() < 1e-12);
    }

    #[test]
    fn geom_sum_examples() {
        let g = geom_sum_check(mu0_of(1, 1), 1, 1);
        assert!(g.pass);
        assert!((g.lhs - 0.5).abs() < 1e-15 && (g.mid - 1.0).abs() < 1e-15);

        let g = geom_sum_check(mu0_of(4, 1), 4, 1);
        assert!(g.pass);
        let expect: f64 = (0..4).map(|n| (1.0f64 - 1e-4).powf(n as f64 / 4.0)).sum();
        assert!((g.mid - expect).abs() < 1e-12);

        // adversarial argument spread: mu = e^{i pi / r} with r = 1 makes the
        // sum 1 + mu^r + ... alternate and collapse, violating the right bound
        let bad = C::from_polar(1.0, std::f64::consts::PI);
        let g = geom_sum_check(bad, 4, 1);
        assert!(!g.pass);
    }

    #[test]
    fn lambda_nu_antisymmetric_case() {
        // A' = 1, B' = -1, q = r = 1: sums are 1, lambda = 9e-5, nu = 0
        let mu0 = mu0_of(1, 1);
        // with q = r = 1 the geometric sums are exactly 1
        let (l, n) = solve_lambda_nu(c(1.0, 0.0), c(-1.0, 0.0), mu0, 1, 1).unwrap();
        assert!((l - c(WINDOW_CENTER, 0.0)).norm() < 1e-18);
        assert!(n.norm() < 1e-18);
    }

    #[test]
    fn lambda_nu_shifted_case() {
        // A' = 2, B' = 0, q = r = 1: lambda = 9e-5, nu = -9e-5
        let mu0 = mu0_of(1, 1);
        let (l, n) = solve_lambda_nu(c(2.0, 0.0), c(0.0, 0.0), mu0, 1, 1).unwrap();
        assert!((l - c(WINDOW_CENTER, 0.0)).norm() < 1e-18);
        assert!((n + c(WINDOW_CENTER, 0.0)).norm() < 1e-18);
    }

    #[test]
    fn lambda_nu_swap_flips_targets() {
        let mu0 = mu0_of(3, 2);
        let a = c(1.3, -0.4);
        let b = c(-0.9, 0.7);
        let (l1, n1) = solve_lambda_nu(a, b, mu0, 3, 2).unwrap();
        let (l2, n2) = solve_lambda_nu(b, a, mu0, 3, 2).unwrap();
        // swapping A' and B' flips both window signs: same lambda scale,
        // opposite sign, and the nu adjusts to the negated targets
        let (s_r, s_1) = geometric_sums(mu0, 3, 2);
        let t = c(WINDOW_CENTER, 0.0);
        assert!((l1 * (a - b) * s_r - 2.0 * t).norm() < 1e-16);
        assert!((l2 + l1).norm() < 1e-16);
        assert!((l2 * b * s_r + n2 * s_1 - t).norm() < 1e-16);
        assert!((n1 + n2) .norm() < 2.0 * (n1.norm() + 1e-16));
    }

    #[test]
    fn singular_system_rejected() {
        let mu0 = mu0_of(2, 2);
        assert!(matches!(
            solve_lambda_nu(c(1.0, 0.0), c(1.0, 0.0), mu0, 2, 2),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn w_recursion_m1_and_m2() {
        // m = 1: w_0 = beta_0 - beta_1 = -alpha, nonzero for every mu
        let w = w_recursion(&[c(0.0, 0.0), c(2.0, 0.0)], &[c(0.0, 0.0), c(4.0, 0.0)], c(0.5, 0.0));
        assert_eq!(w.len(), 1);
        assert!((w[0] + c(2.0, 0.0)).norm() < 1e-15);

        // m = 2, c0 = -2: beta = (0, -2, 2); w_1 = p'(-2)(-2) + mu(-4) = 8 - 4 mu
        let mu = c(0.3, 0.1);
        let betas = [c(0.0, 0.0), c(-2.0, 0.0), c(2.0, 0.0)];
        let derivs = [c(0.0, 0.0), c(-4.0, 0.0), c(4.0, 0.0)];
        let w = w_recursion(&betas, &derivs, mu);
        assert_eq!(w.len(), 2);
        assert!((w[0] + c(2.0, 0.0)).norm() < 1e-15);
        assert!((w[1] - (c(8.0, 0.0) - 4.0 * mu)).norm() < 1e-14);
        // nonzero for all |mu| < 1
        assert!(w[1].norm() > 4.0 - 1e-12);
    }

    fn demo_setup() -> QuadSetup {
        crate::quad::build_setup(&RigorProfile::demo()).unwrap()
    }

    #[test]
    fn build_coeffs_demo() {
        let setup = demo_setup();
        let coeffs = build_coeffs(&setup).unwrap();
        assert!(coeffs.lambda.norm() < 1.0);
        assert!(coeffs.w_last().norm() > 1e-8);
        // |mu|^{2qr} > 1 - 2e-4
        let p2 = coeffs.mu.norm().powi(2 * (setup.q * setup.r) as i32);
        assert!(p2 > 1.0 - 2e-4);
        // serialization roundtrip
        let s = crate::jsonio::to_json_17(&coeffs).unwrap();
        let back: CoeffSet = serde_json::from_str(&s).unwrap();
        assert!((back.mu - coeffs.mu).norm() < 1e-16);
    }

    #[test]
    fn window_holds_on_demo_setup() {
        let setup = demo_setup();
        let coeffs = build_coeffs(&setup).unwrap();
        let report = third_coord_window(&setup, &coeffs, 48, &setup.profile).unwrap();
        assert!(report.worst_margin > 0.0, "report: {report:?}");
    }

    #[test]
    fn window_telescopes_exactly_at_alpha() {
        // at the exact fixed orbit the sum telescopes to the target
        let setup = demo_setup();
        let coeffs = build_coeffs(&setup).unwrap();
        let s = third_coord_sum(&setup, &coeffs, setup.alpha);
        // mu != mu0 shifts the telescoped value slightly; compare at mu = mu0
        let coeffs0 = CoeffSet {
            mu: coeffs.mu0,
            ..coeffs.clone()
        };
        let s0 = third_coord_sum(&setup, &coeffs0, setup.alpha);
        // floating drift of the fixed orbit is amplified over qr steps
        assert!((s0 - c(WINDOW_CENTER, 0.0)).norm() < 1e-9, "s0 = {s0}");
        assert!((s - c(WINDOW_CENTER, 0.0)).norm() < setup.profile.window_radius);
        // and the gamma branch telescopes to the negated target
        let sg = third_coord_sum(&setup, &coeffs0, setup.gamma);
        assert!((sg + c(WINDOW_CENTER, 0.0)).norm() < 1e-9, "sg = {sg}");
    }

    #[test]
    fn zeta_expansion_single_matrix() {
        // m = 1, eps = 0, xi = 0: M_0 (0,0,1) = (sigma (beta_0 - beta_m), 0, mu)
        let setup = demo_setup();
        let coeffs = build_coeffs(&setup).unwrap();
        if coeffs.m == 1 {
            let report = zeta_expansion_check(
                &setup,
                &coeffs,
                &[1e-4, 1e-5],
                &[[c(0.0, 0.0); 3]],
                [c(0.0, 0.0), c(0.0, 0.0)],
            )
            .unwrap();
            assert!(report.pass);
        }
    }

    #[test]
    fn zeta_expansion_demo_with_perturbations() {
        let setup = demo_setup();
        let coeffs = build_coeffs(&setup).unwrap();
        let eps: Vec<[C; 3]> = (0..coeffs.m)
            .map(|k| {
                let t = 0.3 + 0.1 * k as f64;
                [c(t, -0.2), c(-0.4, t), c(0.1, 0.2 * t)]
            })
            .collect();
        let report = zeta_expansion_check(
            &setup,
            &coeffs,
            &[1e-4, 1e-5, 1e-6],
            &eps,
            [c(0.7, 0.1), c(-0.3, 0.2)],
        )
        .unwrap();
        assert!(report.pass, "report: {report:?}");
        // sigma = 0 exactly: (0, 0, mu^m) modulo the xi-feedthrough
        assert!(report.zeta3_error < 1e-12);
    }

    #[test]
    fn zeta_slope_error_shrinks_with_sigma() {
        let setup = demo_setup();
        let coeffs = build_coeffs(&setup).unwrap();
        let eps: Vec<[C; 3]> = (0..coeffs.m).map(|_| [c(0.5, 0.0); 3]).collect();
        let big = zeta_expansion_check(&setup, &coeffs, &[1e-3], &eps, [c(0.4, 0.0); 2]).unwrap();
        let small = zeta_expansion_check(&setup, &coeffs, &[1e-5], &eps, [c(0.4, 0.0); 2]).unwrap();
        assert!(small.slope_error <= big.slope_error * 1.5 + 1e-14);
    }
}
