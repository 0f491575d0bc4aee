//! One-dimensional quadratic dynamics for the family `p_c(z) = z^2 + c`:
//! fixed and periodic points, escape radii, inverse branches, Misiurewicz
//! parameter search, and assembly of the rescaled two-branch IFS setup that
//! everything downstream consumes.

use crate::disk::{affine_image_disk, disk_contains, ComplexDisk, Precision};
use crate::newton::newton_solve;
use crate::profile::RigorProfile;
use crate::{Error, Result, C};
use serde::{Deserialize, Serialize};

/// `p_c(z) = z^2 + c`.
#[inline]
pub fn p(c: C, z: C) -> C {
    z * z + c
}

#[inline]
pub fn p_deriv(z: C) -> C {
    2.0 * z
}

/// n-th iterate.
pub fn p_iter(c: C, z: C, n: usize) -> C {
    let mut w = z;
    for _ in 0..n {
        w = p(c, w);
    }
    w
}

/// Iterate with the derivative chain `d/dz p^n`.
pub fn p_iter_with_deriv(c: C, z: C, n: usize) -> (C, C) {
    let mut w = z;
    let mut d = C::new(1.0, 0.0);
    for _ in 0..n {
        d *= p_deriv(w);
        w = p(c, w);
    }
    (w, d)
}

/// `d/dc p_c^n(0)` by forward recursion `u' <- 2 u u' + 1`.
pub fn critical_orbit_param_deriv(c: C, n: usize) -> C {
    let mut u = C::new(0.0, 0.0);
    let mut du = C::new(0.0, 0.0);
    for _ in 0..n {
        du = 2.0 * u * du + C::new(1.0, 0.0);
        u = u * u + c;
    }
    du
}

/// The fixed point `alpha_c = (1 + sqrt(1 - 4c)) / 2` with its multiplier `2 alpha`.
pub fn alpha_fixed_point(cv: C) -> Result<(C, C)> {
    let disc = C::new(1.0, 0.0) - 4.0 * cv;
    if disc.norm() < 1e-14 {
        return Err(Error::Precondition(
            "parabolic degenerate c = 1/4: alpha branch undefined".into(),
        ));
    }
    let alpha = (C::new(1.0, 0.0) + disc.sqrt()) / 2.0;
    Ok((alpha, 2.0 * alpha))
}

/// The other fixed point `beta_c = (1 - sqrt(1 - 4c)) / 2`.
pub fn beta_fixed_point(cv: C) -> (C, C) {
    let beta = (C::new(1.0, 0.0) - (C::new(1.0, 0.0) - 4.0 * cv).sqrt()) / 2.0;
    (beta, 2.0 * beta)
}

/// `d alpha / dc = -1 / sqrt(1 - 4c)`.
pub fn alpha_param_deriv(cv: C) -> C {
    -C::new(1.0, 0.0) / (C::new(1.0, 0.0) - 4.0 * cv).sqrt()
}

/// Radius beyond which orbits verifiably escape:
/// `|z| > R  =>  |p_c(z)| >= |z|^2 - |c| > |z|`.
pub fn minimal_escape_radius(cv: C) -> f64 {
    (1.0 + (1.0 + 4.0 * cv.norm()).sqrt()) / 2.0
}

/// Coarse uniform bound enclosing the Julia set, in the style of the
/// `D(0, 10)` estimate: never below 10 so one value serves a whole
/// parameter disk.
pub fn julia_radius(cv: C) -> f64 {
    minimal_escape_radius(cv).max(10.0)
}

/// A periodic point of `p_c`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CycleInfo {
    #[serde(with = "crate::jsonio::complex")]
    pub point: C,
    pub least_period: usize,
    #[serde(with = "crate::jsonio::complex")]
    pub multiplier: C,
    pub residual: f64,
}

/// All points of period dividing `n`, by direct root extraction of
/// `p^n(z) - z` (degree `2^n`, must fit under `cap`).
pub fn periodic_points(cv: C, n: usize, cap: usize) -> Result<Vec<CycleInfo>> {
    let mut coeffs: Vec<C> = vec![C::new(0.0, 0.0), C::new(1.0, 0.0)];
    for _ in 0..n {
        coeffs = crate::poly::mul(&coeffs, &coeffs);
        coeffs[0] += cv;
    }
    coeffs[1] -= C::new(1.0, 0.0); // p^n(z) - z
    let roots = crate::poly::roots(&coeffs, cap)?;

    let mut out = Vec::new();
    for root in roots {
        let z = root.value;
        let mut least = n;
        let mut w = z;
        for k in 1..=n {
            w = p(cv, w);
            if (w - z).norm() < 1e-8 * (1.0 + z.norm()) {
                least = k;
                break;
            }
        }
        let (_, mult) = p_iter_with_deriv(cv, z, least);
        for _ in 0..root.multiplicity {
            out.push(CycleInfo {
                point: z,
                least_period: least,
                multiplier: mult,
                residual: (p_iter(cv, z, n) - z).norm(),
            });
        }
    }
    Ok(out)
}

/// The real parameter `a < -1` whose period-3 cycle is parabolic
/// (multiplier 1), located as a sign change of the product of
/// `(multiplier - 1)` over all genuine 3-cycles.
pub fn parabolic3_parameter() -> Result<f64> {
    let cycle_product = |a: f64| -> Result<f64> {
        let cv = C::new(a, 0.0);
        let pts = periodic_points(cv, 3, 12)?;
        let mut prod = C::new(1.0, 0.0);
        let mut seen: Vec<C> = Vec::new();
        for ci in pts.iter().filter(|ci| ci.least_period == 3) {
            let on_seen_cycle = seen.iter().any(|&s| {
                let mut w = s;
                for _ in 0..3 {
                    if (w - ci.point).norm() < 1e-6 {
                        return true;
                    }
                    w = p(cv, w);
                }
                false
            });
            if on_seen_cycle {
                continue;
            }
            seen.push(ci.point);
            prod *= ci.multiplier - C::new(1.0, 0.0);
        }
        Ok(prod.re)
    };

    let (mut lo, mut hi) = (-1.9f64, -1.6f64);
    let mut flo = cycle_product(lo)?;
    let fhi = cycle_product(hi)?;
    if flo * fhi > 0.0 {
        return Err(Error::SearchExhausted(
            "no sign change for the parabolic period-3 parameter in (-1.9, -1.6)".into(),
        ));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let fm = cycle_product(mid)?;
        if fm == 0.0 || (hi - lo) < 1e-13 {
            return Ok(mid);
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finite branch word; symbol 1 is the principal square-root branch at the
/// running basepoint, symbol 2 its negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchWord(pub Vec<u8>);

impl BranchWord {
    pub fn new(symbols: Vec<u8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Precondition("branch word must be nonempty".into()));
        }
        if symbols.iter().any(|&s| s != 1 && s != 2) {
            return Err(Error::Precondition("branch symbols are 1 or 2".into()));
        }
        Ok(BranchWord(symbols))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One inverse step of `p_c` on the branch given by `symbol`.
#[inline]
pub fn inverse_step(cv: C, w: C, symbol: u8) -> C {
    let s = (w - cv).sqrt();
    if symbol == 1 {
        s
    } else {
        -s
    }
}

/// Pull circle samples of a disk back through a symbol word, testing for
/// branch collisions and accumulating per-sample derivative products.
/// Samples are continued in circle order from a per-stage basepoint.
fn pull_samples_through_word(
    cv: C,
    samples: &mut [C],
    dprod: &mut [f64],
    word: &[u8],
    mut base: C,
) -> Result<C> {
    for (stage, &sym) in word.iter().enumerate() {
        let hull = ComplexDisk::enclose_points(samples, 0.0);
        if hull.contains_point(cv) {
            return Err(Error::BranchCollision { stage });
        }
        base = inverse_step(cv, base, sym);
        let mut prev = base;
        for (k, z) in samples.iter_mut().enumerate() {
            let s = (*z - cv).sqrt();
            let pick = if (s - prev).norm() <= (-s - prev).norm() {
                s
            } else {
                -s
            };
            dprod[k] *= 1.0 / (2.0 * pick.norm());
            *z = pick;
            prev = pick;
        }
    }
    Ok(base)
}

fn circle_samples(d: ComplexDisk, n: usize) -> Vec<C> {
    let mut samples: Vec<C> = (0..n.max(8))
        .map(|j| {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n.max(8) as f64;
            d.center + d.radius * C::new(th.cos(), th.sin())
        })
        .collect();
    samples.push(d.center);
    samples
}

/// Pull `target` back through `word` (one `p^{-1}` step per symbol),
/// continuing branches from `basepoint`. Returns the enclosing disk of the
/// image and sampled bounds `(lo, hi)` on the composed derivative modulus.
pub fn inverse_branch(
    cv: C,
    target: ComplexDisk,
    word: &BranchWord,
    basepoint: C,
    samples_n: usize,
    slack: f64,
) -> Result<(ComplexDisk, (f64, f64))> {
    let mut samples = circle_samples(target, samples_n);
    let mut dprod = vec![1.0f64; samples.len()];
    pull_samples_through_word(cv, &mut samples, &mut dprod, &word.0, basepoint)?;
    let lo = dprod.iter().cloned().fold(f64::INFINITY, f64::min) * (1.0 - slack);
    let hi = dprod.iter().cloned().fold(0.0f64, f64::max) * (1.0 + slack);
    Ok((ComplexDisk::enclose_points(&samples, slack), (lo, hi)))
}

/// Misiurewicz parameter: Newton on `G(c) = p_c^m(0) - alpha_c` from `c_seed`.
/// Returns `(c0, transversality)` with `transversality = G'(c0)`.
pub fn misiurewicz_solve(m: usize, c_seed: C) -> Result<(C, C)> {
    if m < 1 {
        return Err(Error::Precondition("preperiod m must be >= 1".into()));
    }
    let g = |cv: C| -> C {
        let alpha = (C::new(1.0, 0.0) + (C::new(1.0, 0.0) - 4.0 * cv).sqrt()) / 2.0;
        p_iter(cv, C::new(0.0, 0.0), m) - alpha
    };
    let gp = |cv: C| critical_orbit_param_deriv(cv, m) - alpha_param_deriv(cv);

    let out = newton_solve(|cv| (g(cv), gp(cv)), c_seed, &Precision::double(1e-13, 128))?;
    let c0 = out.root;

    let (alpha, mult) = alpha_fixed_point(c0)?;
    for k in 1..m {
        if (p_iter(c0, C::new(0.0, 0.0), k) - alpha).norm() < 1e-8 {
            return Err(Error::Precondition(format!(
                "critical point lands on alpha after {k} < {m} steps: not a strict preperiod"
            )));
        }
    }
    if mult.norm() <= 1.0 {
        return Err(Error::check(
            "misiurewicz",
            "alpha not repelling at the solved parameter",
            mult.norm() - 1.0,
        ));
    }
    let transversality = gp(c0);
    if transversality.norm() < 1e-6 {
        return Err(Error::check(
            "misiurewicz",
            "parameter transversality below degeneracy threshold",
            transversality.norm(),
        ));
    }
    Ok((c0, transversality))
}

/// Affine change of variable `w = (z - center) / radius` sending a disk to
/// the unit disk; the whole pipeline works in these coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    #[serde(with = "crate::jsonio::complex")]
    pub center: C,
    pub radius: f64,
}

impl Rescale {
    pub fn identity() -> Self {
        Rescale {
            center: C::new(0.0, 0.0),
            radius: 1.0,
        }
    }

    #[inline]
    pub fn to_unit(&self, z: C) -> C {
        (z - self.center) / self.radius
    }

    #[inline]
    pub fn from_unit(&self, w: C) -> C {
        w * self.radius + self.center
    }

    pub fn disk_to_unit(&self, d: ComplexDisk) -> ComplexDisk {
        affine_image_disk(C::new(1.0 / self.radius, 0.0), -self.center / self.radius, d)
    }
}

/// The rescaled quadratic `P(w) = L(p_c(L^{-1}(w)))` for `L = rescale`.
/// Its derivative at `w` equals `p_c'` at the corresponding point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledQuad {
    #[serde(with = "crate::jsonio::complex")]
    pub c: C,
    pub rescale: Rescale,
}

impl RescaledQuad {
    #[inline]
    pub fn eval(&self, w: C) -> C {
        self.rescale.to_unit(p(self.c, self.rescale.from_unit(w)))
    }

    #[inline]
    pub fn deriv(&self, w: C) -> C {
        p_deriv(self.rescale.from_unit(w))
    }

    pub fn iter(&self, w: C, n: usize) -> C {
        let mut x = w;
        for _ in 0..n {
            x = self.eval(x);
        }
        x
    }

    pub fn iter_with_deriv(&self, w: C, n: usize) -> (C, C) {
        let mut x = w;
        let mut d = C::new(1.0, 0.0);
        for _ in 0..n {
            d *= self.deriv(x);
            x = self.eval(x);
        }
        (x, d)
    }

    /// Critical point in rescaled coordinates.
    pub fn critical_point(&self) -> C {
        self.rescale.to_unit(C::new(0.0, 0.0))
    }

    /// One rescaled inverse step choosing the preimage nearest `near`.
    pub fn inverse_step_near(&self, w: C, near: C) -> C {
        let z = self.rescale.from_unit(w);
        let s = (z - self.c).sqrt();
        let zb = self.rescale.from_unit(near);
        let pick = if (s - zb).norm() <= (-s - zb).norm() { s } else { -s };
        self.rescale.to_unit(pick)
    }
}

/// Named margins for the eight setup checks (positive = pass).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetupMargins {
    /// (1) univalent pullback components inside D, disjoint, holding alpha/gamma
    pub components: f64,
    /// (2) |A - B| above the profile gap
    pub gap: f64,
    /// (3) Misiurewicz residual and transversality floor
    pub misiurewicz: f64,
    /// (4) D' inside the Julia-radius disk
    pub julia_radius: f64,
    /// (5) delta multiplier inside the profile window
    pub delta_window: f64,
    /// (6) branch derivative sandwich 1/C < |h'| < 2/C with C above the floor
    pub derivative_bounds: f64,
    /// (7) diam(h_j^q(D')) against the profile ratio of the distance to dD
    pub diam_ratio: f64,
    /// (8) weighted orbit sums inside their windows over the required n-range
    pub orbit_windows: f64,
}

impl SetupMargins {
    pub fn worst(&self) -> (&'static str, f64) {
        [
            ("components", self.components),
            ("gap", self.gap),
            ("misiurewicz", self.misiurewicz),
            ("julia_radius", self.julia_radius),
            ("delta_window", self.delta_window),
            ("derivative_bounds", self.derivative_bounds),
            ("diam_ratio", self.diam_ratio),
            ("orbit_windows", self.orbit_windows),
        ]
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
    }

    pub fn all_pass(&self) -> bool {
        self.worst().1 >= 0.0
    }
}

/// Everything later stages need from the one-dimensional analysis, in
/// rescaled coordinates unless a field says otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadSetup {
    /// Misiurewicz anchor (original parameter coordinates).
    #[serde(with = "crate::jsonio::complex")]
    pub c0: C,
    /// Parameter disk around c0.
    pub c_disk: ComplexDisk,
    pub r: usize,
    pub q: usize,
    pub m: usize,
    /// Rescaled domain disks D ⊂ D'' ⊂ D' (D is the unit disk exactly).
    pub d: ComplexDisk,
    pub d2prime: ComplexDisk,
    pub dprime: ComplexDisk,
    /// Enclosures of the two branch components of P^{-r}(D).
    pub d1: ComplexDisk,
    pub d2: ComplexDisk,
    /// Orbit sums A = r*alpha, B = sum of the gamma cycle (rescaled).
    #[serde(with = "crate::jsonio::complex")]
    pub a_sum: C,
    #[serde(with = "crate::jsonio::complex")]
    pub b_sum: C,
    /// mu0-weighted orbit sums A', B'.
    #[serde(with = "crate::jsonio::complex")]
    pub aprime: C,
    #[serde(with = "crate::jsonio::complex")]
    pub bprime: C,
    /// Julia/domain bound in rescaled coordinates.
    pub julia_r: f64,
    /// Fixed points of P^r in rescaled coordinates (alpha is 0 by construction).
    #[serde(with = "crate::jsonio::complex")]
    pub alpha: C,
    #[serde(with = "crate::jsonio::complex")]
    pub gamma: C,
    /// The same points in original coordinates.
    #[serde(with = "crate::jsonio::complex")]
    pub alpha_orig: C,
    #[serde(with = "crate::jsonio::complex")]
    pub gamma_orig: C,
    /// d/dc [p^m(0) - alpha] at c0.
    #[serde(with = "crate::jsonio::complex")]
    pub transversality: C,
    /// Least-expanding repelling cycle (the delta point) and its multiplier.
    pub delta_period: usize,
    #[serde(with = "crate::jsonio::complex")]
    pub delta_multiplier: C,
    /// Rescale applied to the dynamical plane.
    pub rescale: Rescale,
    /// Per-step branch symbols for one r-block of h_1 resp. h_2.
    pub h1_word: Vec<u8>,
    pub h2_word: Vec<u8>,
    /// Measured per-branch derivative scales C_j = 1 / sup |(h_j^q)'|.
    pub c_bound_1: f64,
    pub c_bound_2: f64,
    /// Margins of the eight checks.
    pub margins: SetupMargins,
    /// Profile the setup was built and checked against.
    pub profile: RigorProfile,
}

impl QuadSetup {
    pub fn quad(&self) -> RescaledQuad {
        RescaledQuad {
            c: self.c0,
            rescale: self.rescale,
        }
    }

    pub fn quad_at(&self, cv: C) -> RescaledQuad {
        RescaledQuad {
            c: cv,
            rescale: self.rescale,
        }
    }

    /// Branch word for one h_j block (r inverse steps).
    pub fn block_word(&self, branch: u8) -> &[u8] {
        if branch == 1 {
            &self.h1_word
        } else {
            &self.h2_word
        }
    }

    /// Anchor point of a branch in rescaled coordinates.
    pub fn branch_anchor(&self, branch: u8) -> C {
        if branch == 1 {
            self.alpha
        } else {
            self.gamma
        }
    }

    /// Pull a rescaled point back through a sequence of branch blocks
    /// (`blocks[0]` applied first). Uses the stored per-step symbols.
    pub fn pull_back_point(&self, w: C, blocks: &[u8]) -> C {
        let mut z = self.rescale.from_unit(w);
        for &branch in blocks {
            for &sym in self.block_word(branch) {
                z = inverse_step(self.c0, z, sym);
            }
        }
        self.rescale.to_unit(z)
    }

    /// `h_branch^q` applied to a rescaled point.
    pub fn h_q(&self, branch: u8, w: C) -> C {
        self.pull_back_point(w, &vec![branch; self.q])
    }

    /// Full symbol word for `h_branch^q` (length q*r).
    pub fn h_q_word(&self, branch: u8) -> Vec<u8> {
        let mut w = Vec::with_capacity(self.q * self.r);
        for _ in 0..self.q {
            w.extend_from_slice(self.block_word(branch));
        }
        w
    }
}

/// Enumerate fixed points of `p^r` near the alpha region by iterating the
/// pullback of every sign-word of length r. Enumeration is capped: beyond
/// twelve symbols the 2^r word count stops being a search tool.
fn gamma_candidates(cv: C, alpha: C, r: usize) -> Vec<C> {
    if r > 12 {
        return Vec::new();
    }
    let mut out: Vec<C> = Vec::new();
    for mask in 0..(1usize << r) {
        let word: Vec<u8> = (0..r)
            .map(|k| if mask & (1 << k) != 0 { 2 } else { 1 })
            .collect();
        let mut z = alpha;
        let mut ok = true;
        for _ in 0..80 {
            let mut w = z;
            for &sym in &word {
                w = inverse_step(cv, w, sym);
                if !w.is_finite() {
                    ok = false;
                    break;
                }
            }
            if !ok {
                break;
            }
            let done = (w - z).norm() < 1e-14 * (1.0 + z.norm());
            z = w;
            if done {
                break;
            }
        }
        if !ok {
            continue;
        }
        if (p_iter(cv, z, r) - z).norm() < 1e-9 * (1.0 + z.norm())
            && out.iter().all(|&g| (g - z).norm() > 1e-8)
        {
            out.push(z);
        }
    }
    out
}

/// Per-step branch symbols of the r-step inverse branch fixing `point`
/// (signs along its own backward cycle).
fn branch_word_of_cycle(cv: C, point: C, r: usize) -> Vec<u8> {
    let mut orbit = Vec::with_capacity(r);
    let mut z = point;
    for _ in 0..r {
        orbit.push(z);
        z = p(cv, z);
    }
    let mut word = Vec::with_capacity(r);
    for j in 0..r {
        // pullback step j lands on orbit position r-1-j
        let target = orbit[r - 1 - j];
        let s = (p(cv, target) - cv).sqrt();
        word.push(if (s - target).norm() <= (-s - target).norm() {
            1
        } else {
            2
        });
    }
    word
}

/// Pull a rescaled disk back through a symbol word (original-coordinate
/// pullback, rescaled enclosure out), with sampled derivative bounds.
fn pull_disk_through_word(
    cv: C,
    rescale: &Rescale,
    disk: ComplexDisk,
    word: &[u8],
    basepoint_orig: C,
    samples_n: usize,
    slack: f64,
) -> Result<(ComplexDisk, (f64, f64))> {
    let d_orig = ComplexDisk::new(rescale.from_unit(disk.center), disk.radius * rescale.radius);
    let mut samples = circle_samples(d_orig, samples_n);
    let mut dprod = vec![1.0f64; samples.len()];
    pull_samples_through_word(cv, &mut samples, &mut dprod, word, basepoint_orig)?;
    let lo = dprod.iter().cloned().fold(f64::INFINITY, f64::min) * (1.0 - slack);
    let hi = dprod.iter().cloned().fold(0.0f64, f64::max) * (1.0 + slack);
    let rescaled: Vec<C> = samples.iter().map(|&z| rescale.to_unit(z)).collect();
    Ok((ComplexDisk::enclose_points(&rescaled, slack), (lo, hi)))
}

fn repeat_word(block: &[u8], q: usize) -> Vec<u8> {
    let mut w = Vec::with_capacity(block.len() * q);
    for _ in 0..q {
        w.extend_from_slice(block);
    }
    w
}

/// Assemble and verify the full one-dimensional setup for a profile.
pub fn build_setup(profile: &RigorProfile) -> Result<QuadSetup> {
    let m = profile.misiurewicz_m as usize;
    let seed = C::new(profile.misiurewicz_seed[0], profile.misiurewicz_seed[1]);
    let (c0, transversality) = misiurewicz_solve(m, seed)?;
    let (alpha, alpha_mult) = alpha_fixed_point(c0)?;
    if alpha_mult.norm() <= 2.0 {
        return Err(Error::check(
            "setup",
            "alpha multiplier not above 2",
            alpha_mult.norm() - 2.0,
        ));
    }

    // strictly preperiodic part of the critical orbit (excluding the critical
    // point itself, whose presence in D' is harmless for branch pullbacks)
    let mut crit_prefix = Vec::with_capacity(m.saturating_sub(1));
    let mut z = C::new(0.0, 0.0);
    for k in 0..m {
        if k > 0 {
            crit_prefix.push(z);
        }
        z = p(c0, z);
    }

    let r_julia = julia_radius(c0);

    // search r, gamma and the outer radius; the anchor's cycle predecessor
    // must also sit deep inside B, since the image boxes carry the one-step
    // preimage window in their second coordinate
    let mut found: Option<(usize, C, f64)> = None;
    'outer: for r in 1..=(profile.r_max as usize) {
        for gamma in gamma_candidates(c0, alpha, r) {
            if (gamma - alpha).norm() < 1e-8 {
                continue;
            }
            let pred = p_iter(c0, gamma, r - 1);
            for &rho_prime in &[2.2f64, 1.8, 1.4, 1.0, 0.7, 0.5] {
                let rho = profile.inner_disk_ratio * rho_prime;
                if (gamma - alpha).norm() > 0.85 * rho {
                    continue;
                }
                if r > 1 && (pred - alpha).norm() > 0.5 * rho {
                    continue;
                }
                if crit_prefix.iter().any(|&b| (b - alpha).norm() < 1.05 * rho_prime) {
                    continue;
                }
                let rescale = Rescale {
                    center: alpha,
                    radius: rho,
                };
                let dprime = ComplexDisk::new(C::new(0.0, 0.0), rho_prime / rho);
                let w1 = branch_word_of_cycle(c0, alpha, r);
                let w2 = branch_word_of_cycle(c0, gamma, r);
                let ok1 = pull_disk_through_word(c0, &rescale, dprime, &w1, alpha, 24, 0.05);
                let ok2 = pull_disk_through_word(c0, &rescale, dprime, &w2, gamma, 24, 0.05);
                if std::env::var("HENON3_DEBUG_SETUP").is_ok() {
                    eprintln!(
                        "search r={r} gamma={gamma:.5} rho'={rho_prime}: ok1={:?} ok2={:?}",
                        ok1.as_ref().map(|_| ()).map_err(|e| format!("{e}")),
                        ok2.as_ref().map(|_| ()).map_err(|e| format!("{e}"))
                    );
                }
                if ok1.is_ok() && ok2.is_ok() {
                    found = Some((r, gamma, rho_prime));
                    break 'outer;
                }
            }
        }
    }
    let (r, gamma, rho_prime) = found.ok_or_else(|| {
        Error::SearchExhausted(format!(
            "no (r, gamma, disks) with univalent branches for r <= {}",
            profile.r_max
        ))
    })?;

    let rho = profile.inner_disk_ratio * rho_prime;
    let rho2 = profile.middle_disk_ratio * rho_prime;
    let rescale = Rescale {
        center: alpha,
        radius: rho,
    };
    let d = ComplexDisk::unit();
    let d2prime = ComplexDisk::new(C::new(0.0, 0.0), rho2 / rho);
    let dprime = ComplexDisk::new(C::new(0.0, 0.0), rho_prime / rho);

    let h1_block = branch_word_of_cycle(c0, alpha, r);
    let h2_block = branch_word_of_cycle(c0, gamma, r);

    // orbit sums (rescaled)
    let gamma_resc = rescale.to_unit(gamma);
    let quad = RescaledQuad { c: c0, rescale };
    let a_sum = C::new(0.0, 0.0); // r * rescaled alpha
    let mut b_sum = C::new(0.0, 0.0);
    let mut w = gamma_resc;
    for _ in 0..r {
        b_sum += w;
        w = quad.eval(w);
    }
    let gap_margin = (a_sum - b_sum).norm() - profile.gap_min;

    // q search
    let mut chosen: Option<(usize, QSearchData)> = None;
    let mut last_fail = String::new();
    for q in 1..=(profile.q_max as usize) {
        match q_checks(
            profile, c0, &rescale, &quad, q, r, &h1_block, &h2_block, alpha, gamma, a_sum, b_sum,
        ) {
            Ok(data) => {
                if std::env::var("HENON3_DEBUG_SETUP").is_ok() {
                    eprintln!("q={q}: ok");
                }
                chosen = Some((q, data));
                break;
            }
            Err(e) => {
                if std::env::var("HENON3_DEBUG_SETUP").is_ok() {
                    eprintln!("q={q}: {e}");
                }
                last_fail = format!("q={q}: {e}");
            }
        }
    }
    let (q, qdata) = chosen.ok_or_else(|| {
        Error::SearchExhausted(format!(
            "q search exhausted at q_max={} ({last_fail}); strict-profile margins require \
             extended precision",
            profile.q_max
        ))
    })?;

    // branch components of P^{-r}(D)
    let (d1, _) = pull_disk_through_word(
        c0,
        &rescale,
        d,
        &h1_block,
        alpha,
        profile.boundary_samples,
        profile.enclosure_slack,
    )?;
    let (d2, _) = pull_disk_through_word(
        c0,
        &rescale,
        d,
        &h2_block,
        gamma,
        profile.boundary_samples,
        profile.enclosure_slack,
    )?;
    let (in1, m1) = disk_contains(d, d1);
    let (in2, m2) = disk_contains(d, d2);
    let sep = (d1.center - d2.center).norm() - d1.radius - d2.radius;
    let comp_margin = if in1
        && in2
        && d1.contains_point(C::new(0.0, 0.0))
        && d2.contains_point(gamma_resc)
    {
        m1.min(m2).min(sep)
    } else {
        -1.0
    };

    // delta point: least per-step expansion among small periods
    let mut best: Option<(usize, C, f64)> = None;
    for period in 1..=3usize {
        for ci in periodic_points(c0, period, 12)? {
            if ci.least_period != period {
                continue;
            }
            let per_step = ci.multiplier.norm().powf(1.0 / period as f64);
            if per_step <= 1.0 + 1e-12 {
                continue;
            }
            if best.map_or(true, |(_, _, b)| per_step < b) {
                best = Some((period, ci.multiplier, per_step));
            }
        }
    }
    let (delta_period, delta_multiplier, delta_per_step) =
        best.ok_or_else(|| Error::SearchExhausted("no repelling cycle for delta".into()))?;
    let delta_margin = {
        let hi = (1.0 + profile.delta_window).powf(1.0 / (q * r) as f64);
        (hi - delta_per_step).min(delta_per_step - 1.0) / hi
    };

    let julia_margin = r_julia - (alpha.norm() + rho_prime);
    let julia_r_rescaled = (r_julia + alpha.norm()) / rho;

    let mis_residual = (p_iter(c0, C::new(0.0, 0.0), m) - alpha).norm();
    let mis_margin = (1e-10 - mis_residual).min(transversality.norm() - 1e-6);

    let margins = SetupMargins {
        components: comp_margin,
        gap: gap_margin,
        misiurewicz: mis_margin,
        julia_radius: julia_margin,
        delta_window: delta_margin,
        derivative_bounds: qdata.sandwich_margin,
        diam_ratio: qdata.diam_margin,
        orbit_windows: qdata.orbit_margin,
    };
    if !margins.all_pass() {
        let (name, value) = margins.worst();
        return Err(Error::check("setup", format!("item `{name}` failed"), value));
    }

    Ok(QuadSetup {
        c0,
        c_disk: ComplexDisk::new(c0, profile.c_disk_radius),
        r,
        q,
        m,
        d,
        d2prime,
        dprime,
        d1,
        d2,
        a_sum,
        b_sum,
        aprime: qdata.aprime,
        bprime: qdata.bprime,
        julia_r: julia_r_rescaled,
        alpha: C::new(0.0, 0.0),
        gamma: gamma_resc,
        alpha_orig: alpha,
        gamma_orig: gamma,
        transversality,
        delta_period,
        delta_multiplier,
        rescale,
        h1_word: h1_block,
        h2_word: h2_block,
        c_bound_1: qdata.c1,
        c_bound_2: qdata.c2,
        margins,
        profile: profile.clone(),
    })
}

struct QSearchData {
    c1: f64,
    c2: f64,
    sandwich_margin: f64,
    diam_margin: f64,
    orbit_margin: f64,
    aprime: C,
    bprime: C,
}

#[allow(clippy::too_many_arguments)]
fn q_checks(
    profile: &RigorProfile,
    c0: C,
    rescale: &Rescale,
    quad: &RescaledQuad,
    q: usize,
    r: usize,
    h1_block: &[u8],
    h2_block: &[u8],
    alpha: C,
    gamma: C,
    a_sum: C,
    b_sum: C,
) -> Result<QSearchData> {
    let n_samp = profile.boundary_samples;
    let slack = profile.enclosure_slack;
    let d2prime = ComplexDisk::new(
        C::new(0.0, 0.0),
        profile.middle_disk_ratio / profile.inner_disk_ratio,
    );
    let dprime = ComplexDisk::new(C::new(0.0, 0.0), 1.0 / profile.inner_disk_ratio);

    let w1 = repeat_word(h1_block, q);
    let w2 = repeat_word(h2_block, q);

    // (6) derivative sandwich on D'' per branch, C floor on both
    let (_i1, (lo1, hi1)) =
        pull_disk_through_word(c0, rescale, d2prime, &w1, alpha, n_samp, slack)?;
    let (_i2, (lo2, hi2)) =
        pull_disk_through_word(c0, rescale, d2prime, &w2, gamma, n_samp, slack)?;
    let c1 = 1.0 / hi1;
    let c2 = 1.0 / hi2;
    let sandwich_margin = {
        let s1 = (2.0 * lo1 - hi1) / hi1;
        let s2 = (2.0 * lo2 - hi2) / hi2;
        let f1 = (c1 - profile.c_min) / profile.c_min;
        let f2 = (c2 - profile.c_min) / profile.c_min;
        s1.min(s2).min(f1).min(f2)
    };
    if sandwich_margin < 0.0 {
        return Err(Error::check(
            "setup",
            "derivative sandwich / C floor",
            sandwich_margin,
        ));
    }

    // (7) diameter vs distance for the D' images
    let (im1p, _) = pull_disk_through_word(c0, rescale, dprime, &w1, alpha, n_samp, slack)?;
    let (im2p, _) = pull_disk_through_word(c0, rescale, dprime, &w2, gamma, n_samp, slack)?;
    let mut diam_margin = f64::INFINITY;
    for im in [im1p, im2p] {
        let diam = 2.0 * im.radius;
        let dist = 1.0 - (im.center.norm() + im.radius);
        if dist <= 0.0 {
            return Err(Error::check("setup", "h^q image not inside D", dist));
        }
        diam_margin =
            diam_margin.min((profile.diam_ratio * dist - diam) / (profile.diam_ratio * dist));
    }
    if diam_margin < 0.0 {
        return Err(Error::check("setup", "diameter ratio", diam_margin));
    }

    // (8) weighted orbit-sum windows over the required n-range
    let mu0 = crate::coeffs::mu0_of(q, r);
    let gap = (a_sum - b_sum).norm();
    let window = profile.orbit_window_factor * gap;
    let n_required = ((q * r) as f64 * profile.orbit_window_frac).floor() as usize;

    let mut orbit_margin = f64::INFINITY;
    for (word, base, target) in [(&w1, alpha, a_sum), (&w2, gamma, b_sum)] {
        // sample h_j^q(D') by pulling boundary samples of D' back
        let d_orig = ComplexDisk::new(
            rescale.from_unit(dprime.center),
            dprime.radius * rescale.radius,
        );
        let mut samples = circle_samples(d_orig, 16);
        let mut dprod = vec![1.0; samples.len()];
        pull_samples_through_word(c0, &mut samples, &mut dprod, word, base)?;
        for &z_orig in &samples {
            let z = rescale.to_unit(z_orig);
            let mut orbit = Vec::with_capacity(n_required + r + 1);
            let mut x = z;
            for _ in 0..(n_required + r + 1) {
                orbit.push(x);
                x = quad.eval(x);
            }
            for n in 0..=n_required {
                let mut s = C::new(0.0, 0.0);
                for k in 0..r {
                    s += mu0.powi((r - 1 - k) as i32) * orbit[n + k];
                }
                orbit_margin = orbit_margin.min(window - (s - target).norm());
            }
        }
    }
    if orbit_margin < 0.0 {
        return Err(Error::check("setup", "orbit windows", orbit_margin));
    }

    // weighted sums on the exact cycles, and their window membership
    let mut aprime = C::new(0.0, 0.0);
    let mut x = C::new(0.0, 0.0);
    for k in 0..r {
        aprime += mu0.powi((r - 1 - k) as i32) * x;
        x = quad.eval(x);
    }
    let mut bprime = C::new(0.0, 0.0);
    let mut y = rescale.to_unit(gamma);
    for k in 0..r {
        bprime += mu0.powi((r - 1 - k) as i32) * y;
        y = quad.eval(y);
    }
    // the load-bearing consequence: the weighted sums stay separated by at
    // least half the gap, which is what the lambda/nu synthesis conditions on
    let separation = ((aprime - bprime).norm() - 0.5 * gap) / gap;
    let orbit_margin = orbit_margin
        .min(window - (aprime - a_sum).norm())
        .min(window - (bprime - b_sum).norm())
        .min(separation * gap);
    if orbit_margin < 0.0 {
        return Err(Error::check("setup", "A'/B' windows or separation", orbit_margin));
    }

    Ok(QSearchData {
        c1,
        c2,
        sandwich_margin,
        diam_margin,
        orbit_margin,
        aprime,
        bprime,
    })
}

/// Sum of all fixed points of `p^n` (vanishes: the polynomial `p^n(z) - z`
/// has zero coefficient in degree `2^n - 1` for n >= 2).
pub fn periodic_point_sum(cv: C, n: usize) -> Result<C> {
    let pts = periodic_points(cv, n, 16)?;
    Ok(pts.iter().map(|ci| ci.point).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    #[test]
    fn alpha_examples() {
        let (a, m) = alpha_fixed_point(c(0.0, 0.0)).unwrap();
        assert!((a - c(1.0, 0.0)).norm() < 1e-14);
        assert!((m - c(2.0, 0.0)).norm() < 1e-14);

        let (a, m) = alpha_fixed_point(c(-2.0, 0.0)).unwrap();
        assert!((a - c(2.0, 0.0)).norm() < 1e-14);
        assert!((m - c(4.0, 0.0)).norm() < 1e-14);

        let (a, m) = alpha_fixed_point(c(-1.75, 0.0)).unwrap();
        assert!((a.re - 0.5 * (1.0 + 8.0f64.sqrt())).abs() < 1e-12);
        assert!((m.norm() - (1.0 + 8.0f64.sqrt())).abs() < 1e-12);
        assert!((p(c(-1.75, 0.0), a) - a).norm() < 1e-12);
    }

    #[test]
    fn escape_radii() {
        assert_eq!(julia_radius(c(-1.75, 0.0)), 10.0);
        assert!((minimal_escape_radius(c(0.0, 0.0)) - 1.0).abs() < 1e-14);
        assert!((minimal_escape_radius(c(-2.0, 0.0)) - 2.0).abs() < 1e-14);
        for cv in [c(0.0, 0.0), c(-2.0, 0.0), c(-1.75, 0.3)] {
            let rr = minimal_escape_radius(cv) + 1e-6;
            let z = c(rr, 0.0);
            assert!(p(cv, z).norm() > z.norm());
        }
    }

    #[test]
    fn periodic_points_of_squaring() {
        let pts = periodic_points(c(0.0, 0.0), 2, 12).unwrap();
        assert_eq!(pts.len(), 4);
        let fixed0 = pts.iter().find(|p| p.point.norm() < 1e-8).unwrap();
        assert_eq!(fixed0.least_period, 1);
        assert!(fixed0.multiplier.norm() < 1e-7);
        let fixed1 = pts
            .iter()
            .find(|p| (p.point - c(1.0, 0.0)).norm() < 1e-8)
            .unwrap();
        assert!((fixed1.multiplier - c(2.0, 0.0)).norm() < 1e-8);
        let two_cycle: Vec<_> = pts.iter().filter(|p| p.least_period == 2).collect();
        assert_eq!(two_cycle.len(), 2);
        for ci in two_cycle {
            // multiplier 4 z1 z2 = 4 over the cycle of z^2+z+1 roots
            assert!((ci.multiplier - c(4.0, 0.0)).norm() < 1e-8);
            assert!((ci.point.re + 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn fixed_points_at_minus_two() {
        let pts = periodic_points(c(-2.0, 0.0), 1, 12).unwrap();
        assert_eq!(pts.len(), 2);
        let two = pts
            .iter()
            .find(|p| (p.point - c(2.0, 0.0)).norm() < 1e-9)
            .unwrap();
        assert!((two.multiplier - c(4.0, 0.0)).norm() < 1e-9);
        let minus_one = pts
            .iter()
            .find(|p| (p.point + c(1.0, 0.0)).norm() < 1e-9)
            .unwrap();
        assert!((minus_one.multiplier + c(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn fixed_point_multipliers_sum_to_two() {
        let pts = periodic_points(c(0.0, 1.0), 1, 12).unwrap();
        let s: C = pts.iter().map(|p| p.multiplier).sum();
        assert!((s - c(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn periodic_count_is_two_to_the_n() {
        for n in 1..=3 {
            let pts = periodic_points(c(0.3, 0.2), n, 12).unwrap();
            assert_eq!(pts.len(), 1 << n);
        }
    }

    #[test]
    fn periodic_sum_vanishes() {
        for n in 2..=4 {
            let s = periodic_point_sum(c(-1.1, 0.4), n).unwrap();
            assert!(s.norm() < 1e-6, "n={n}: sum {s}");
        }
    }

    #[test]
    fn parabolic_three_cycle_parameter() {
        let a = parabolic3_parameter().unwrap();
        assert!((a + 1.75).abs() < 1e-8, "a = {a}");
        let pts = periodic_points(c(a, 0.0), 3, 12).unwrap();
        let best = pts
            .iter()
            .filter(|p| p.least_period == 3)
            .map(|p| (p.multiplier - c(1.0, 0.0)).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-5, "multiplier distance from 1: {best}");
        let (_, m) = alpha_fixed_point(c(a, 0.0)).unwrap();
        assert!(m.norm() > 1.0);
    }

    #[test]
    fn misiurewicz_m2_is_minus_two() {
        let (c0, tr) = misiurewicz_solve(2, c(-2.1, 0.0)).unwrap();
        assert!((c0 - c(-2.0, 0.0)).norm() < 1e-10, "c0 = {c0}");
        // transversality: d/dc (c^2 + c) - dalpha/dc = (2c+1) + 1/sqrt(1-4c)
        let expect = c(-3.0, 0.0) - alpha_param_deriv(c(-2.0, 0.0));
        assert!((tr - expect).norm() < 1e-8, "tr = {tr}, expect = {expect}");
        assert!((p_iter(c(-2.0, 0.0), c(0.0, 0.0), 2) - c(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn misiurewicz_m1_has_no_solution() {
        assert!(misiurewicz_solve(1, c(-2.0, 0.0)).is_err());
    }

    #[test]
    fn misiurewicz_m3_strict_anchor() {
        let (c0, _) = misiurewicz_solve(3, c(-0.25, -1.1)).unwrap();
        assert!(
            (c0 - c(-0.22815549365396, -1.11514250803994)).norm() < 1e-9,
            "c0={c0}"
        );
        let (alpha, mult) = alpha_fixed_point(c0).unwrap();
        assert!(mult.norm() > 2.0);
        assert!((p_iter(c0, c(0.0, 0.0), 2) - alpha).norm() > 1e-3);
        assert!((p_iter(c0, c(0.0, 0.0), 3) - alpha).norm() < 1e-10);
    }

    #[test]
    fn inverse_branch_of_squaring() {
        let word = BranchWord::new(vec![1]).unwrap();
        let (image, (lo, hi)) = inverse_branch(
            c(0.0, 0.0),
            ComplexDisk::new(c(1.0, 0.0), 0.1),
            &word,
            c(1.0, 0.0),
            32,
            1e-3,
        )
        .unwrap();
        assert!((image.center - c(1.0, 0.0)).norm() < 1e-3);
        assert!((image.radius - 0.05).abs() < 0.01, "radius {}", image.radius);
        // |h'| = 1/(2 sqrt|z|) over the disk
        assert!(lo > 0.45 && lo < 0.50, "lo = {lo}");
        assert!(hi > 0.50 && hi < 0.55, "hi = {hi}");
        assert!((p(c(0.0, 0.0), image.center) - c(1.0, 0.0)).norm() < 1e-2);
    }

    #[test]
    fn inverse_branch_word_contracts() {
        let cv = c(-0.22815549365396, -1.11514250803994);
        let (alpha, _) = alpha_fixed_point(cv).unwrap();
        let t = ComplexDisk::new(alpha, 0.4);
        let (im1, (_, hi1)) = inverse_branch(cv, t, &BranchWord::new(vec![1]).unwrap(), alpha, 24, 1e-3).unwrap();
        let (im3, _) =
            inverse_branch(cv, t, &BranchWord::new(vec![1; 3]).unwrap(), alpha, 24, 1e-3).unwrap();
        // radius ratio bounded by the sampled sup of |h'| per step
        assert!(im1.radius <= t.radius * hi1 * 1.1);
        assert!(im3.radius < im1.radius);
        // iterating branch 1 homes in on alpha
        assert!((im3.center - alpha).norm() < (im1.center - alpha).norm() + 1e-12);
        // round trip: p^3 of the image center returns near the target center
        assert!((p_iter(cv, im3.center, 3) - alpha).norm() < 0.02);
    }

    #[test]
    fn branch_collision_is_detected() {
        // target disk holding the critical value c: pullback must fail
        let cv = c(-0.5, 0.3);
        let word = BranchWord::new(vec![1]).unwrap();
        let res = inverse_branch(cv, ComplexDisk::new(cv, 0.05), &word, cv.sqrt(), 16, 1e-3);
        assert!(matches!(res, Err(Error::BranchCollision { .. })));
    }

    #[test]
    fn demo_setup_builds_with_positive_margins() {
        let setup = build_setup(&RigorProfile::demo()).unwrap();
        assert!(setup.margins.all_pass(), "margins: {:?}", setup.margins);
        assert!(setup.r >= 1 && setup.q >= 1);
        assert!((setup.a_sum - setup.b_sum).norm() > setup.profile.gap_min);
        // gamma is a fixed point of P^r
        let quad = setup.quad();
        assert!((quad.iter(setup.gamma, setup.r) - setup.gamma).norm() < 1e-8);
        // components inside D
        assert!(disk_contains(setup.d, setup.d1).0);
        assert!(disk_contains(setup.d, setup.d2).0);
        // A', B' inside the profile windows
        let window = setup.profile.orbit_window_factor * (setup.a_sum - setup.b_sum).norm();
        assert!((setup.aprime - setup.a_sum).norm() <= window);
        assert!((setup.bprime - setup.b_sum).norm() <= window);
        // h_j^q round trip: P^{qr}(h_j^q(w)) returns to w
        for branch in [1u8, 2] {
            let w = c(0.3, -0.2);
            let z = setup.h_q(branch, w);
            let back = quad.iter(z, setup.q * setup.r);
            assert!((back - w).norm() < 1e-6, "branch {branch}: {back} vs {w}");
        }
    }

    #[test]
    fn paper_setup_fails_with_diagnostic() {
        let err = build_setup(&RigorProfile::paper()).unwrap_err();
        let msg = format!("{err}");
        assert!(
            msg.contains("extended precision") || msg.contains("failed") || msg.contains("exhausted"),
            "unexpected error: {msg}"
        );
    }

    #[test]
    fn setup_serializes_to_json() {
        let setup = build_setup(&RigorProfile::demo()).unwrap();
        let s = crate::jsonio::to_json_17(&setup).unwrap();
        let back: QuadSetup = serde_json::from_str(&s).unwrap();
        assert_eq!(back.r, setup.r);
        assert_eq!(back.q, setup.q);
        assert!((back.c0 - setup.c0).norm() < 1e-15);
    }
}
