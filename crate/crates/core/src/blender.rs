//! The blender machinery: the four two-block inverse branches `g_j`, the
//! open covering property of the affine fiber model, and the robust
//! intersection of ss-curves with the unstable set of the horseshoe.
//!
//! Backward dynamics is never iterated pointwise; every pullback is a
//! forward-anchored Newton solve, so the strongly stable coordinate is
//! always parameterized by the object being pulled back.

use crate::horseshoe::branch_z1_solve;
use crate::interp::Series1;
use crate::linalg3::{M3, C3};
use crate::map3::{f_apply, f_jacobian, MapParams};
use crate::profile::RigorProfile;
use crate::{Error, Result, C};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

/// Affine model of the third coordinate under the four two-block branches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlenderModel {
    #[serde(with = "crate::jsonio::complex")]
    pub mu2qr: C,
    /// Nominal translation constants `9/10 1e-4 (\pm 1 \pm i)`.
    #[serde(with = "crate::jsonio::complex_vec")]
    pub c_nominal: Vec<C>,
    /// Effective constants realized by the branch pairs, same order as `pairs`.
    #[serde(with = "crate::jsonio::complex_vec")]
    pub c_eff: Vec<C>,
    /// Branch pairs (s1, s2): the block through s1 happens first.
    pub pairs: Vec<(u8, u8)>,
    pub inner_radius: f64,
    pub slack: f64,
    pub contract_radius: f64,
}

impl BlenderModel {
    pub fn from_params(p: &MapParams) -> Result<Self> {
        let setup = p
            .setup
            .as_ref()
            .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
        let profile = &p.profile;
        let qr = (setup.q * setup.r) as i32;
        let mu_qr = p.mu.powi(qr);
        let mu_2qr = p.mu.powi(2 * qr);
        let wc = crate::coeffs::WINDOW_CENTER;
        let w = |s: u8| -> C {
            if s == 1 {
                C::new(wc, 0.0)
            } else {
                C::new(-wc, 0.0)
            }
        };
        let pairs = vec![(1u8, 1u8), (1, 2), (2, 1), (2, 2)];
        // two applications of the one-block fiber model give
        // x3 = z3 / mu^{2qr} - (w_{s1}/mu^{qr} + w_{s2}/mu^{2qr})
        let c_eff: Vec<C> = pairs
            .iter()
            .map(|&(s1, s2)| w(s1) / mu_qr + w(s2) / mu_2qr)
            .collect();
        let one = C::new(1.0, 0.0);
        let i = C::new(0.0, 1.0);
        let c_nominal = vec![
            wc * (one + i),
            wc * (-one + i),
            wc * (one - i),
            wc * (-one - i),
        ];
        let lo = 1.0 - 2.0 * profile.covering_slack;
        if mu_2qr.norm() <= lo {
            return Err(Error::check(
                "blender_model",
                "|mu|^{2qr} below 1 - 2 slack",
                mu_2qr.norm() - lo,
            ));
        }
        Ok(BlenderModel {
            mu2qr: mu_2qr,
            c_nominal,
            c_eff,
            pairs,
            inner_radius: profile.covering_inner_radius,
            slack: profile.covering_slack,
            contract_radius: profile.contract_radius,
        })
    }

    /// Covering margin of branch `j` at fiber value `z`: positive iff
    /// `z/mu^{2qr} - c_j` lands in `D(0, (1/10)(1 - slack))`, the radius the
    /// quadrant inequality chain actually supports.
    pub fn covering_margin(&self, z: C, j: usize) -> f64 {
        let target = self.mu2qr.norm() * self.inner_radius * (1.0 - self.slack);
        target - (z - self.mu2qr * self.c_eff[j]).norm()
    }

    /// Smallest admissible branch index at `z` with its margin.
    pub fn select(&self, z: C) -> Option<(usize, f64)> {
        for j in 0..4 {
            let m = self.covering_margin(z, j);
            if m >= 0.0 {
                return Some((j, m));
            }
        }
        None
    }

    /// Best covering margin over the four branches.
    pub fn best_margin(&self, z: C) -> (usize, f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for j in 0..4 {
            let m = self.covering_margin(z, j);
            if m > best.1 {
                best = (j, m);
            }
        }
        best
    }
}

/// Exact rational verification of the quadrant inequality chain behind the
/// covering property:
/// `1/100 - 2T/10 + 2T^2 < (1/100)(1 - 10^{-3}) < (1/100)(1-4e-4)^2
///  < (1/100)((1-2e-4)(1-1e-4))^2` with `T = 9e-5`.
pub fn covering_chain_exact() -> bool {
    let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    let t = r(9, 100_000);
    let hundredth = r(1, 100);
    // boundary point in the closed first quadrant with x + y >= 1/10:
    // |z - c1|^2 <= 1/100 - 2 T / 10 + 2 T^2
    let lhs = &hundredth - r(2, 10) * &t + r(2, 1) * &t * &t;
    let step1 = &hundredth * (r(1, 1) - r(1, 1000));
    let step2 = &hundredth * (r(1, 1) - r(4, 10_000)) * (r(1, 1) - r(4, 10_000));
    let modulus = (r(1, 1) - r(2, 10_000)) * (r(1, 1) - r(1, 10_000));
    let step3 = &hundredth * &modulus * &modulus;
    lhs < step1 && step1 < step2 && step2 < step3
}

/// Covering certificate over a boundary-biased grid of `D(0, 1/10)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringCert {
    pub grid_n: usize,
    pub min_margin: f64,
    #[serde(with = "crate::jsonio::complex")]
    pub argmin: C,
    /// Exact rational re-evaluation of the proof's inequality chain.
    pub exact_chain: bool,
    /// Central symmetry: z covered by j iff -z covered by the opposite j.
    pub symmetry_checked: bool,
    pub profile: RigorProfile,
}

/// Verify the covering property on `grid_n` points (boundary biased), with
/// the exact rational chain and the central-symmetry cross-check.
pub fn covering_verify(
    model: &BlenderModel,
    grid_n: usize,
    profile: &RigorProfile,
) -> Result<CoveringCert> {
    let exact_chain = covering_chain_exact();
    if !exact_chain {
        return Err(Error::check(
            "covering",
            "exact rational chain failed",
            -1.0,
        ));
    }
    let mut min_margin = f64::INFINITY;
    let mut argmin = C::new(0.0, 0.0);
    let golden = 2.399963229728653;
    let mut symmetry_checked = true;
    for k in 0..grid_n {
        let t = k as f64 / (grid_n.max(2) - 1) as f64;
        // boundary biased: half the points on the rim
        let radius = model.inner_radius * (1.0 - t * t).sqrt().max(0.0).min(1.0);
        let z = C::from_polar(radius, golden * k as f64);
        let (j, m) = model.best_margin(z);
        if m < 0.0 {
            return Err(Error::check(
                "covering",
                format!("uncovered witness z = {z}"),
                m,
            ));
        }
        if m < min_margin {
            min_margin = m;
            argmin = z;
        }
        // central symmetry: the pair set is symmetric, so -z must be covered
        // by the branch with the negated constant
        if k % 97 == 0 {
            let opp = model
                .c_eff
                .iter()
                .position(|&c| (c + model.c_eff[j]).norm() < 1e-12)
                .unwrap_or(3 - j);
            symmetry_checked &= model.covering_margin(-z, opp) >= 0.0;
        }
    }
    if !symmetry_checked {
        return Err(Error::check("covering", "central symmetry violated", -1.0));
    }
    Ok(CoveringCert {
        grid_n,
        min_margin,
        argmin,
        exact_chain,
        symmetry_checked,
        profile: profile.clone(),
    })
}

/// Per-branch reports of the g_j system contracts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GjReport {
    pub pair: (u8, u8),
    /// Worst deviation of pr3(g_j z) from the affine model over the samples.
    pub pr3_model_dev: f64,
    /// Worst one-block window deviation (the qr-block fiber model).
    pub block_window_dev: f64,
    /// z3-direction thickness of the sheet's z2 coordinate (the pr2 contract).
    pub pr2_fiber_thickness: f64,
    /// Distance of the sampled region to the z2 boundary face.
    pub dist_to_boundary: f64,
    /// Round trip |g_j(f^{2qr}(x)) - x| over samples.
    pub round_trip: f64,
}

/// The four restricted inverse branches with verified contracts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GjSystem {
    pub model: BlenderModel,
    pub reports: Vec<GjReport>,
}

/// Solve `f^{2qr}(x1, y2, y3)` landing at first coordinate `target` along the
/// branch pair (s1 first block, s2 second).
pub fn two_block_z1_solve(
    p: &MapParams,
    pair: (u8, u8),
    target: C,
    y2: C,
    y3: C,
) -> Result<C> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    let power = 2 * setup.q * setup.r;
    let mut blocks = vec![pair.1; setup.q];
    blocks.extend(vec![pair.0; setup.q]);
    let mut z1 = setup.pull_back_point(target, &blocks);
    for _ in 0..12 {
        let mut x = [z1, y2, y3];
        let mut v = [C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)];
        for _ in 0..power {
            let j = f_jacobian(p, x);
            v = j.mul_vec(v);
            x = f_apply(p, x);
        }
        let res = x[0] - target;
        if v[0].norm() < 1e-300 {
            return Err(Error::DegenerateDerivative {
                deriv: v[0].norm(),
                threshold: 1e-300,
            });
        }
        let step = res / v[0];
        z1 -= step;
        if step.norm() <= 1e-16 * (1.0 + z1.norm()) {
            break;
        }
    }
    Ok(z1)
}

/// Build the g_j system and verify its quantitative contracts on a sample
/// family per branch pair.
pub fn build_gj(p: &MapParams) -> Result<GjSystem> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    let profile = &p.profile;
    let model = BlenderModel::from_params(p)?;
    let power = setup.q * setup.r;

    let mu_qr = p.mu.powi(power as i32);
    let wc = crate::coeffs::WINDOW_CENTER;

    let mut reports = Vec::new();
    for (jidx, &pair) in model.pairs.iter().enumerate() {
        let mut pr3_dev: f64 = 0.0;
        let mut block_dev: f64 = 0.0;
        let mut fiber: f64 = 0.0;
        let mut dist_bdry: f64 = f64::INFINITY;
        let mut round_trip: f64 = 0.0;

        let targets = [C::new(0.4, 0.2), C::new(-0.6, 0.1), C::new(0.2, -0.7)];
        let y3s = [C::new(0.05, 0.0), C::new(-0.04, 0.06), C::new(0.0, -0.08)];
        let y2s = [
            C::new(0.0, 0.0),
            C::new(0.5, 0.3),
            C::new(-0.7, 0.1),
            C::new(0.2, -0.6),
        ];
        for &t in &targets {
            // mid-block first-coordinate target on the second branch window
            let mid_target = setup.pull_back_point(t, &vec![pair.1; setup.q]);
            for &y3 in &y3s {
                let mut sheet_z2: Vec<C> = Vec::new();
                for &y2 in &y2s {
                    // anchor x so its first block lands exactly on the mid
                    // window; a single 2qr-step shot would amplify the seed
                    // error beyond the domain
                    let x1 = branch_z1_solve(p, pair.0, mid_target, y2, y3)?;
                    let x = [x1, y2, y3];
                    let mut mid = x;
                    for _ in 0..power {
                        mid = f_apply(p, mid);
                    }
                    let mut z = mid;
                    for _ in 0..power {
                        z = f_apply(p, z);
                    }
                    let w1 = if pair.0 == 1 { wc } else { -wc };
                    block_dev = block_dev
                        .max((mid[2] - (mu_qr * x[2] + C::new(w1, 0.0))).norm());
                    pr3_dev = pr3_dev.max(
                        (x[2] - (z[2] / model.mu2qr - model.c_eff[jidx])).norm(),
                    );
                    sheet_z2.push(z[1]);
                    dist_bdry = dist_bdry.min(1.0 - z[1].norm());
                    // round trip: the one-block solve rebuilds x1 from mid
                    let x1_back = branch_z1_solve(p, pair.0, mid[0], y2, y3)?;
                    round_trip = round_trip.max((x1_back - x1).norm());
                }
                let mut spread: f64 = 0.0;
                for a in &sheet_z2 {
                    for b in &sheet_z2 {
                        spread = spread.max((a - b).norm());
                    }
                }
                fiber = fiber.max(spread);
            }
        }

        if pr3_dev > profile.contract_radius {
            return Err(Error::check(
                "gj_pr3_model",
                format!("pair {pair:?}"),
                profile.contract_radius - pr3_dev,
            ));
        }
        if block_dev > profile.block_window_radius {
            return Err(Error::check(
                "gj_block_window",
                format!("pair {pair:?}"),
                profile.block_window_radius - block_dev,
            ));
        }
        if fiber > profile.diam_ratio * dist_bdry {
            return Err(Error::check(
                "gj_pr2_fiber",
                format!("pair {pair:?}: thickness {fiber:.3e} vs dist {dist_bdry:.3e}"),
                profile.diam_ratio * dist_bdry - fiber,
            ));
        }
        reports.push(GjReport {
            pair,
            pr3_model_dev: pr3_dev,
            block_window_dev: block_dev,
            pr2_fiber_thickness: fiber,
            dist_to_boundary: dist_bdry,
            round_trip,
        });
    }
    Ok(GjSystem { model, reports })
}

/// A strongly stable curve: a graph `(z1(z2), z2, z3(z2))` over the unit disk
/// with tangents in the ss cone.
#[derive(Debug, Clone)]
pub struct SsCurve {
    pub z1: Series1,
    pub z3: Series1,
}

impl SsCurve {
    pub fn eval(&self, s: C) -> C3 {
        [self.z1.eval(s), s, self.z3.eval(s)]
    }

    pub fn tangent(&self, s: C) -> C3 {
        [self.z1.deriv().eval(s), C::new(1.0, 0.0), self.z3.deriv().eval(s)]
    }

    /// Verify the sampled tangent-cone condition.
    pub fn validate(&self, aperture: f64) -> Result<()> {
        for k in 0..24 {
            let s = C::from_polar(0.95, 0.26 * k as f64);
            let t = self.tangent(s);
            if t[0].norm() > aperture || t[2].norm() > aperture {
                return Err(Error::check(
                    "ss_curve",
                    format!("tangent outside the ss cone at s = {s}"),
                    aperture - t[0].norm().max(t[2].norm()),
                ));
            }
        }
        Ok(())
    }

    /// The curve parameter minimizing |z3| over a deterministic sample set.
    pub fn min_z3_param(&self) -> C {
        let mut best = (f64::INFINITY, C::new(0.0, 0.0));
        for ring in 0..4 {
            let r = 0.95 * (1.0 - 0.3 * ring as f64);
            for k in 0..32 {
                let s = C::from_polar(r, 2.0 * std::f64::consts::PI * k as f64 / 32.0);
                let v = self.z3.eval(s).norm();
                if v < best.0 {
                    best = (v, s);
                }
            }
        }
        best.1
    }
}

/// A certified point of `Gamma ∩ W^u(H)` with its construction trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlenderHit {
    #[serde(with = "crate::jsonio::complex3")]
    pub point: C3,
    /// Branch pair indices chosen per pullback (1-based j).
    pub selection_word: Vec<u8>,
    /// Final localization diameter on the original curve.
    pub residual: f64,
    pub forward_depth: usize,
    /// Worst pr3 model deviation along the run.
    pub model_dev: f64,
    /// Worst covering margin along the run.
    pub worst_covering_margin: f64,
    /// log2 localization contraction rates per step.
    pub rates_log2: Vec<f64>,
}

/// Pull an ss-curve back through one qr-block on the given branch. Seed
/// errors only see one block of expansion, which double precision absorbs.
/// Returns the new curve and the parameter map `t(s)` onto the old curve.
fn pull_back_curve_block(
    p: &MapParams,
    branch: u8,
    curve: &SsCurve,
    n_interp: usize,
) -> Result<(SsCurve, Series1)> {
    let setup = p.setup.as_ref().unwrap();
    let power = setup.q * setup.r;
    let d1 = curve.z1.deriv();
    let d3 = curve.z3.deriv();
    let wc = crate::coeffs::WINDOW_CENTER;
    let w = if branch == 1 { wc } else { -wc };
    let mu_qr = p.mu.powi(power as i32);

    let x1_seed = setup.pull_back_point(curve.z1.eval(C::new(0.0, 0.0)), &vec![branch; setup.q]);
    let quad = p.quad();
    let t_seed = quad.iter(x1_seed, power - 1);
    let z3_seed = (curve.z3.eval(t_seed) - C::new(w, 0.0)) / mu_qr;

    let mut s1 = Vec::with_capacity(n_interp);
    let mut s3 = Vec::with_capacity(n_interp);
    let mut tmap = Vec::with_capacity(n_interp);
    let mut state = [x1_seed, z3_seed, t_seed];
    for k in 0..n_interp {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n_interp as f64;
        let s = C::from_polar(1.0, th);
        // unknowns u = (x1, x3, t): f^{qr}(x1, s, x3) = Gamma(t)
        let mut u = state;
        let mut converged = false;
        for _ in 0..24 {
            let mut x = [u[0], s, u[1]];
            let mut v1 = [C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)];
            let mut v3 = [C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
            for _ in 0..power {
                let j = f_jacobian(p, x);
                v1 = j.mul_vec(v1);
                v3 = j.mul_vec(v3);
                x = f_apply(p, x);
            }
            let g = [curve.z1.eval(u[2]), u[2], curve.z3.eval(u[2])];
            let res = [x[0] - g[0], x[1] - g[1], x[2] - g[2]];
            let rn = crate::linalg3::c3_norm(res);
            if !rn.is_finite() {
                return Err(Error::NonConvergence {
                    iters: 24,
                    residual: rn,
                });
            }
            let jac = M3([
                [v1[0], v3[0], -d1.eval(u[2])],
                [v1[1], v3[1], -C::new(1.0, 0.0)],
                [v1[2], v3[2], -d3.eval(u[2])],
            ]);
            let du = jac.solve(res)?;
            let step = crate::linalg3::c3_norm(du);
            u = [u[0] - du[0], u[1] - du[1], u[2] - du[2]];
            // forward-image residuals floor at expansion times machine
            // epsilon; position accuracy is the honest criterion
            if step <= 1e-14 * (1.0 + crate::linalg3::c3_norm(u)) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iters: 24,
                residual: -1.0,
            });
        }
        if k == 0 {
            state = u;
        }
        s1.push(u[0]);
        s3.push(u[1]);
        tmap.push(u[2]);
    }
    let new_curve = SsCurve {
        z1: series_from_unit_circle(&s1),
        z3: series_from_unit_circle(&s3),
    };
    Ok((new_curve, series_from_unit_circle(&tmap)))
}

/// One g_j application on a curve: two chained one-block pullbacks, the
/// second block of the pair first.
fn pull_back_curve(
    p: &MapParams,
    pair: (u8, u8),
    curve: &SsCurve,
    n_interp: usize,
) -> Result<(SsCurve, Series1, Series1)> {
    let (mid, map_b) = pull_back_curve_block(p, pair.1, curve, n_interp)?;
    let (new_curve, map_a) = pull_back_curve_block(p, pair.0, &mid, n_interp)?;
    Ok((new_curve, map_a, map_b))
}

pub(crate) fn series_from_unit_circle(vals: &[C]) -> Series1 {
    let n = vals.len();
    let mut coeffs = vec![C::new(0.0, 0.0); n];
    for (k, slot) in coeffs.iter_mut().enumerate() {
        let mut acc = C::new(0.0, 0.0);
        for (j, &v) in vals.iter().enumerate() {
            let th = -2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64;
            acc += v * C::new(th.cos(), th.sin());
        }
        *slot = acc / n as f64;
    }
    Series1 {
        coeffs,
        radius: 1.0,
    }
}

/// Drive an ss-curve into the unstable set: iterate covering-selected
/// pullbacks, tracking the nested localization on the original curve.
pub fn ss_curve_intersect(
    p: &MapParams,
    curve: &SsCurve,
    tol: f64,
    max_depth: usize,
) -> Result<BlenderHit> {
    let profile = &p.profile;
    curve.validate(profile.cone_aperture)?;
    let model = BlenderModel::from_params(p)?;

    let s0 = curve.min_z3_param();
    if curve.z3.eval(s0).norm() > model.inner_radius {
        return Err(Error::Precondition(
            "curve does not meet D^2 x D(0, 1/10)".into(),
        ));
    }

    let mut current = curve.clone();
    let mut selection = Vec::new();
    let mut rates = Vec::new();
    let mut model_dev: f64 = 0.0;
    let mut worst_cov = f64::INFINITY;
    let mut t_maps: Vec<Series1> = Vec::new();
    let mut log2_diam: f64 = 1.0; // diameter ~ 2 on the original curve
    let mut hit_residual = f64::INFINITY;
    let mut depth = 0usize;

    for _step in 0..max_depth {
        let s_star = current.min_z3_param();
        let z3_here = current.z3.eval(s_star);
        let (j, margin) = model.select(z3_here).ok_or_else(|| {
            Error::check(
                "blender_trap",
                format!("fiber value {z3_here} left the covering region"),
                -1.0,
            )
        })?;
        worst_cov = worst_cov.min(margin);
        let pair = model.pairs[j];
        let (new_curve, map_a, map_b) = pull_back_curve(p, pair, &current, 16)?;

        // model fidelity along the new curve: compose the parameter maps
        for k in 0..8 {
            let s = C::from_polar(0.9, 0.785 * k as f64);
            let x3 = new_curve.z3.eval(s);
            let t = map_b.eval(map_a.eval(s));
            let old3 = current.z3.eval(t);
            model_dev = model_dev.max((x3 - (old3 / model.mu2qr - model.c_eff[j])).norm());
        }
        if model_dev > model.contract_radius {
            return Err(Error::check(
                "gj_pr3_model",
                "pullback left the contract radius",
                model.contract_radius - model_dev,
            ));
        }

        // localization rate per pullback: both block maps contract
        let s_next = new_curve.min_z3_param();
        let da = map_a.deriv().eval(s_next).norm();
        let db = map_b.deriv().eval(map_a.eval(s_next)).norm();
        let rate = if da * db > 0.0 {
            -((da * db).log2())
        } else {
            120.0
        };
        rates.push(rate);
        log2_diam -= rate;
        selection.push((j + 1) as u8);
        t_maps.push(map_a);
        t_maps.push(map_b);
        current = new_curve;
        depth += 1;
        hit_residual = (2.0f64).powf(log2_diam.max(-1060.0));
        if hit_residual <= tol && depth >= 2 {
            // keep the full depth for trap statistics; the localization is done
        }
    }

    if hit_residual > tol {
        return Err(Error::NonConvergence {
            iters: depth,
            residual: hit_residual,
        });
    }

    // compose the parameter maps to locate the hit on the original curve:
    // per pullback, map_a sends the new parameter to the intermediate curve
    // and map_b sends that to the previous one
    let mut t = current.min_z3_param();
    for chunk in t_maps.chunks(2).rev() {
        t = chunk[1].eval(chunk[0].eval(t));
    }
    let point = curve.eval(t);

    Ok(BlenderHit {
        point,
        selection_word: selection,
        residual: hit_residual,
        forward_depth: depth,
        model_dev,
        worst_covering_margin: worst_cov,
        rates_log2: rates,
    })
}
