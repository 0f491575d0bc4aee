//! The initial heteroclinic tangency: solve for the parameter where a pushed
//! unstable curve becomes tangent to the local stable manifold, certify the
//! generic unfolding and the transversality of the fiber direction, and
//! construct the folded surface inside the stable manifold.

use crate::folds::{identity_w2, measure_surface, FoldedSurface, QuasiPlane};
use crate::horseshoe::{local_stable, local_unstable, Itinerary, StableGraph, UnstableGraph};
use crate::interp::{Series1, Series2};
use crate::linalg3::{c3_norm, C3};
use crate::map3::{f_apply, f_jacobian, MapParams};
use crate::quad::{p_deriv, p_iter, QuadSetup};
use crate::{Error, Result, C};
use serde::{Deserialize, Serialize};

/// Existence-quantified scales of the surface pipeline; no verbatim values
/// exist for these, so they live here with demo defaults and are reported
/// per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryBudget {
    pub t: f64,
    pub t0: f64,
    pub rho: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    /// Cone aperture around the tangency-curve direction.
    pub epsilon: f64,
    /// Foliation closeness to the unstable leaf.
    pub eta: f64,
    /// Inclination depth.
    pub k_iter: usize,
    /// Boundary distance of the parameter winding pretest.
    pub l: f64,
    /// Transports attempted when concentrating the stable surface.
    pub crossed_depth: usize,
}

impl Default for GeometryBudget {
    fn default() -> Self {
        GeometryBudget {
            t: 1e-3,
            t0: 1e-2,
            rho: 0.3,
            rho1: 0.4,
            rho2: 0.3,
            rho3: 0.3,
            epsilon: 1e-2,
            eta: 1e-3,
            k_iter: 2,
            l: 1e-4,
            crossed_depth: 4,
        }
    }
}

/// A certified initial tangency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangencyRecord {
    #[serde(with = "crate::jsonio::complex")]
    pub c1: C,
    #[serde(with = "crate::jsonio::complex3")]
    pub tau: C3,
    pub s: usize,
    pub m: usize,
    #[serde(with = "crate::jsonio::complex")]
    pub unfolding_derivative: C,
    pub phi_itinerary: Itinerary,
    pub discriminant_residual: f64,
    /// Second derivative of the first coordinate at the tangency (the
    /// quadratic certificate).
    pub quadratic_coefficient: f64,
    #[serde(with = "crate::jsonio::complex")]
    pub pr3_phi: C,
    /// Curve parameter of tau on the unstable graph.
    #[serde(with = "crate::jsonio::complex")]
    pub tau_param: C,
    /// Window radius around the preimage of the critical point.
    pub window: f64,
}

/// Find the minimal depth s with a preimage of the critical point inside the
/// rescaled unit disk, together with the point.
pub fn preimage_depth(setup: &QuadSetup) -> Result<(usize, C)> {
    let c0 = setup.c0;
    let mut level = vec![C::new(0.0, 0.0)]; // the critical point, original coords
    for s in 1..=14usize {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &z in &level {
            let w = (z - c0).sqrt();
            for cand in [w, -w] {
                // prune far preimages: they stay outside the Julia hull
                if (cand - setup.alpha_orig).norm() < 6.0 {
                    next.push(cand);
                }
            }
        }
        // found one well inside the rescaled disk?
        if let Some(&z) = next
            .iter()
            .find(|z| setup.rescale.to_unit(**z).norm() < 0.8)
        {
            return Ok((s, setup.rescale.to_unit(z)));
        }
        level = next;
        if level.is_empty() {
            break;
        }
    }
    Err(Error::SearchExhausted(
        "no preimage of the critical point lands in the rescaled disk by depth 14".into(),
    ))
}

/// Continuation of the depth-s critical preimage at parameter `c`
/// (rescaled coordinates), Newton from the seed.
pub fn critical_preimage_at(setup: &QuadSetup, cv: C, s: usize, seed: C) -> Result<C> {
    let crit = setup.rescale.to_unit(C::new(0.0, 0.0));
    let quad = setup.quad_at(cv);
    let mut z = seed;
    for _ in 0..30 {
        let (val, dv) = quad.iter_with_deriv(z, s);
        let res = val - crit;
        if dv.norm() < 1e-300 {
            return Err(Error::DegenerateDerivative {
                deriv: dv.norm(),
                threshold: 1e-300,
            });
        }
        let step = res / dv;
        z -= step;
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    Ok(z)
}

/// Push a window of the unstable graph forward `steps` times, returning the
/// curve as a series triple over the window parameter.
pub fn push_window(
    p: &MapParams,
    graph: &UnstableGraph,
    center: C,
    window: f64,
    steps: usize,
    n_interp: usize,
) -> [Series1; 3] {
    let mut s1 = Vec::with_capacity(n_interp);
    let mut s2 = Vec::with_capacity(n_interp);
    let mut s3 = Vec::with_capacity(n_interp);
    for k in 0..n_interp {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n_interp as f64;
        let t = C::from_polar(window, th);
        let mut x = graph.eval(center + t);
        for _ in 0..steps {
            x = f_apply(p, x);
        }
        s1.push(x[0]);
        s2.push(x[1]);
        s3.push(x[2]);
    }
    let mut c1 = crate::blender::series_from_unit_circle(&s1);
    let mut c2 = crate::blender::series_from_unit_circle(&s2);
    let mut c3 = crate::blender::series_from_unit_circle(&s3);
    c1.radius = window;
    c2.radius = window;
    c3.radius = window;
    [c1, c2, c3]
}

struct FamilyData {
    pushed: [Series1; 3],
    stable: StableGraph,
    graph: UnstableGraph,
    beta_minus: C,
}

/// Assemble the pushed curve and stable graph at one parameter.
fn family_at(
    p0: &MapParams,
    cv: C,
    s: usize,
    beta_seed: C,
    window: f64,
    total_steps: usize,
) -> Result<FamilyData> {
    let p = p0.with_c(cv);
    let setup = p.setup.as_ref().unwrap();
    let beta_minus = critical_preimage_at(setup, cv, s, beta_seed)?;
    let graph = local_unstable(&p, &[2], 20, 1e-11, 6)?;
    let stable = local_stable(&p, &[1], 10, 1e-11, 6)?;
    let pushed = push_window(&p, &graph, beta_minus, window, total_steps, 32);
    Ok(FamilyData {
        pushed,
        stable,
        graph,
        beta_minus,
    })
}

/// The tangency functional `G(t) = pushed_1(t) - S(pushed_2(t), pushed_3(t))`
/// and its t-derivative, from the series data.
fn tangency_g(data: &FamilyData, t: C) -> (C, C) {
    let x1 = data.pushed[0].eval(t);
    let x2 = data.pushed[1].eval(t);
    let x3 = data.pushed[2].eval(t);
    let g = x1 - data.stable.s1.eval(x2, x3);
    let d1 = data.pushed[0].deriv().eval(t);
    let d2 = data.pushed[1].deriv().eval(t);
    let d3 = data.pushed[2].deriv().eval(t);
    let (s2, s3) = data.stable.s1.grad(x2, x3);
    let dg = d1 - s2 * d2 - s3 * d3;
    (g, dg)
}

/// Second t-derivative of the first pushed coordinate (quadratic witness).
fn pushed_second_deriv(data: &FamilyData, t: C) -> C {
    data.pushed[0].deriv().deriv().eval(t)
}

/// Winding pretest: the degree of `c -> p_c^m(0) - alpha_c` (rescaled) along
/// the parameter circle must be at least one for a tangency to exist inside.
pub fn winding_pretest(setup: &QuadSetup) -> Result<i64> {
    let n = 64;
    let mut total = 0.0;
    let mut prev = 0.0f64;
    for k in 0..=n {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let cv = setup.c_disk.center + setup.c_disk.radius * C::from_polar(1.0, th);
        let (alpha, _) = crate::quad::alpha_fixed_point(cv)?;
        let v = setup.rescale.to_unit(p_iter(cv, C::new(0.0, 0.0), setup.m))
            - setup.rescale.to_unit(alpha);
        let arg = v.im.atan2(v.re);
        if k > 0 {
            let mut d = arg - prev;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            total += d;
        }
        prev = arg;
    }
    let wind = (total / (2.0 * std::f64::consts::PI)).round() as i64;
    if wind < 1 {
        return Err(Error::check(
            "tangency_pretest",
            "parameter winding below one: wrong (s, m) or disk",
            wind as f64,
        ));
    }
    Ok(wind)
}

/// Solve for the parameter `c1` and curve point where the pushed unstable
/// curve of the gamma-anchored periodic point is quadratically tangent to
/// the local stable manifold of alpha.
pub fn initial_tangency_solve(p0: &MapParams) -> Result<TangencyRecord> {
    let setup = p0
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    if p0.sigma.norm() >= p0.profile.sigma1 && p0.sigma.norm() > 0.0 {
        return Err(Error::Precondition(format!(
            "|sigma| = {} at or above the tangency bound {}",
            p0.sigma.norm(),
            p0.profile.sigma1
        )));
    }
    winding_pretest(setup)?;

    let (s, beta_seed) = preimage_depth(setup)?;
    let m = setup.m;
    let total = s + m;
    // window small enough that the pushed image stays a resolved quadratic
    let quad0 = setup.quad();
    let (_, dchain) = quad0.iter_with_deriv(beta_seed, s);
    let window = (0.02 / dchain.norm()).min(0.05);

    let mut cv = setup.c0;
    let mut t = C::new(0.0, 0.0);
    let mut data = family_at(p0, cv, s, beta_seed, window, total)?;
    let h = 1e-8 * (1.0 + setup.c_disk.radius);
    let mut residual = f64::INFINITY;

    for _iter in 0..24 {
        let (g, dg) = tangency_g(&data, t);
        residual = (g.norm_sqr() + (dg * C::new(window, 0.0)).norm_sqr()).sqrt();
        // Newton on (G, dG/dt)(t, c)
        let ddg = pushed_second_deriv(&data, t);
        // c-derivatives by central differences (one family solve each side)
        let data_p = family_at(p0, cv + C::new(h, 0.0), s, data.beta_minus, window, total)?;
        let data_m = family_at(p0, cv - C::new(h, 0.0), s, data.beta_minus, window, total)?;
        let (gp, dgp) = tangency_g(&data_p, t);
        let (gm, dgm) = tangency_g(&data_m, t);
        let g_c = (gp - gm) / (2.0 * h);
        let dg_c = (dgp - dgm) / (2.0 * h);
        // s-graph correction enters dG/dt only through the chain rule above
        let (s2, s3) = data
            .stable
            .s1
            .grad(data.pushed[1].eval(t), data.pushed[2].eval(t));
        let _ = (s2, s3);
        let det = dg * dg_c - ddg * g_c;
        if det.norm() < 1e-300 {
            return Err(Error::SingularSystem("tangency newton".into()));
        }
        let dt = (g * dg_c - dg * g_c) / det;
        let dc = (dg * dg - g * ddg) / det;
        t -= dt;
        cv -= dc;
        if (cv - setup.c0).norm() > setup.c_disk.radius {
            return Err(Error::NonConvergence {
                iters: 24,
                residual: (cv - setup.c0).norm(),
            });
        }
        data = family_at(p0, cv, s, data.beta_minus, window, total)?;
        if dt.norm() < 1e-14 * window && dc.norm() < 1e-15 * (1.0 + cv.norm()) {
            break;
        }
    }

    let (g, dg) = tangency_g(&data, t);
    let quadratic = pushed_second_deriv(&data, t);
    let disc_residual = dg.norm() * window + g.norm();
    let _ = residual;
    if quadratic.norm() * window * window < 1e3 * disc_residual {
        return Err(Error::check(
            "initial_tangency",
            "quadratic certificate too weak against the residual",
            quadratic.norm(),
        ));
    }

    // the tangency point on the unstable curve (pre-push)
    let tau = data.graph.eval(data.beta_minus + t);

    // forward iterates of f^{s+m}(tau) stay near alpha in the first
    // coordinate (profile-scaled window)
    let p1 = p0.with_c(cv);
    let mut x = tau;
    for _ in 0..total {
        x = f_apply(&p1, x);
    }
    let w_scale = p0
        .coeffs
        .as_ref()
        .map(|co| co.w_last().norm())
        .unwrap_or(1.0);
    let window_alpha = 1e-3 * w_scale;
    for k in 0..6 {
        // re-project onto the stable graph to keep the orbit from drifting
        // off the manifold at the expansion rate
        let proj = data.stable.s1.eval(x[1], x[2]);
        if (x[0] - proj).norm() > 1e-6 {
            return Err(Error::check(
                "initial_tangency",
                format!("iterate {k} of the pushed tangency left the stable graph"),
                1e-6 - (x[0] - proj).norm(),
            ));
        }
        x[0] = proj;
        if (x[0] - setup.alpha).norm() > window_alpha {
            return Err(Error::check(
                "initial_tangency",
                format!("iterate {k} left the alpha window"),
                window_alpha - (x[0] - setup.alpha).norm(),
            ));
        }
        x = f_apply(&p1, x);
    }

    // the periodic anchor with third coordinate in the covering region
    let phi_it = Itinerary::new(vec![2], vec![2])?;
    let phi = crate::horseshoe::point_from_itinerary(&p1, &phi_it, 1e-5)?;
    let pr3_bound = p0.profile.covering_inner_radius - p0.profile.covering_slack;
    if phi[2].norm() >= pr3_bound {
        return Err(Error::check(
            "initial_tangency",
            "pr3 of the anchor left the covering window",
            pr3_bound - phi[2].norm(),
        ));
    }

    let mut record = TangencyRecord {
        c1: cv,
        tau,
        s,
        m,
        unfolding_derivative: C::new(0.0, 0.0),
        phi_itinerary: phi_it,
        discriminant_residual: disc_residual,
        quadratic_coefficient: quadratic.norm(),
        pr3_phi: phi[2],
        tau_param: t,
        window,
    };
    record.unfolding_derivative = unfolding_derivative(p0, &record)?;
    Ok(record)
}

/// The straightened tangency abscissa at parameter `c`: the value of
/// `G = pushed_1 - S(pushed_2, pushed_3)` at the critical parameter of G.
fn tangency_abscissa(
    p0: &MapParams,
    record: &TangencyRecord,
    cv: C,
    t_seed: C,
) -> Result<C> {
    let setup = p0.setup.as_ref().unwrap();
    let data = family_at(p0, cv, record.s, record.tau_param + setup.alpha, record.window, record.s + record.m)
        .or_else(|_| family_at(p0, cv, record.s, record.tau[0], record.window, record.s + record.m))?;
    let mut t = t_seed;
    for _ in 0..30 {
        let (_, dg) = tangency_g(&data, t);
        let ddg = pushed_second_deriv(&data, t);
        if ddg.norm() < 1e-300 {
            return Err(Error::DegenerateDerivative {
                deriv: 0.0,
                threshold: 1e-300,
            });
        }
        let step = dg / ddg;
        t -= step;
        if step.norm() < 1e-15 * record.window {
            break;
        }
    }
    Ok(tangency_g(&data, t).0)
}

/// Central finite difference of the tangency abscissa in the parameter
/// direction: the generic-unfolding speed.
pub fn unfolding_derivative(p0: &MapParams, record: &TangencyRecord) -> Result<C> {
    let h = 1e-7;
    let tp = tangency_abscissa(p0, record, record.c1 + C::new(h, 0.0), record.tau_param)?;
    let tm = tangency_abscissa(p0, record, record.c1 - C::new(h, 0.0), record.tau_param)?;
    let deriv = (tp - tm) / (2.0 * h);
    if deriv.norm() < 1e-3 {
        return Err(Error::check(
            "unfolding",
            "tangency does not unfold generically",
            deriv.norm(),
        ));
    }
    Ok(deriv)
}

/// The sigma = 0 closed form of the unfolding speed: the Misiurewicz
/// transversality carried through the rescale.
pub fn unfolding_oracle(setup: &QuadSetup) -> C {
    setup.transversality / setup.rescale.radius
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransversalityReport {
    #[serde(with = "crate::jsonio::complex3")]
    pub v0: C3,
    /// Margins of the three entry windows.
    pub window_margins: [f64; 3],
    /// |v1| growth factors per step of the induction.
    pub growth_trace: Vec<f64>,
    /// First index with |v1| >= |v3|.
    pub witness_index: usize,
    pub transverse: bool,
}

/// Run the fiber-transversality induction: push (0,0,1) through the
/// tangency excursion, check the entry windows, then iterate along the
/// stable orbit until the first coordinate dominates.
pub fn transversality_check(p0: &MapParams, record: &TangencyRecord) -> Result<TransversalityReport> {
    let setup = p0.setup.as_ref().unwrap();
    let coeffs = p0
        .coeffs
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no coefficient set".into()))?;
    let p1 = p0.with_c(record.c1);
    let total = record.s + record.m;

    // v0 = D f^{s+m}(tau) e3
    let mut x = record.tau;
    let mut v = [C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
    for _ in 0..total {
        let j = f_jacobian(&p1, x);
        v = j.mul_vec(v);
        x = f_apply(&p1, x);
    }
    let v0 = v;

    // entry windows, with the mu^s factor the excursion picks up
    let mu_s = p1.mu.powi(record.s as i32);
    let w_last = coeffs.w_last();
    let sigma = p1.sigma;
    let expect1 = mu_s * w_last * sigma;
    let expect3 = mu_s * p1.mu.powi(record.m as i32);
    let m1 = 0.1 * (w_last * sigma).norm() - (v0[0] - expect1).norm();
    let m2 = 1.0 - v0[1].norm();
    let m3 = 0.1 * expect3.norm() - (v0[2] - expect3).norm();
    let margins = [m1, m2, m3];
    if sigma.norm() > 0.0 && margins.iter().any(|&m| m < 0.0) {
        return Err(Error::check(
            "transversality",
            format!("entry windows violated: {margins:?}"),
            margins.iter().cloned().fold(f64::INFINITY, f64::min),
        ));
    }

    // induction along the stable orbit of f^{s+m}(tau)
    let data_stable = local_stable(&p1, &[1], 10, 1e-11, 6)?;
    let mut psi = x;
    let mut trace = Vec::new();
    let mut witness = usize::MAX;
    let mut prev1 = v0[0].norm().max(1e-300);
    let mut vv = v0;
    for i in 0..200 {
        if vv[0].norm() >= vv[2].norm() {
            witness = i;
            break;
        }
        let j = f_jacobian(&p1, psi);
        vv = j.mul_vec(vv);
        let growth = vv[0].norm() / prev1;
        trace.push(growth);
        prev1 = vv[0].norm().max(1e-300);
        // keep the orbit pinned to the stable manifold
        psi = f_apply(&p1, psi);
        psi[0] = data_stable.s1.eval(psi[1], psi[2]);
    }
    if witness == usize::MAX {
        return Err(Error::check(
            "transversality",
            "growth stalled before the first coordinate dominated",
            -1.0,
        ));
    }
    let min_growth = trace.iter().cloned().fold(f64::INFINITY, f64::min);
    if sigma.norm() > 0.0 && min_growth < 1.5 {
        return Err(Error::check(
            "transversality",
            "growth factor fell below 3/2",
            min_growth - 1.5,
        ));
    }
    Ok(TransversalityReport {
        v0,
        window_margins: margins,
        growth_trace: trace,
        witness_index: witness,
        transverse: true,
    })
}

/// Points of a (2,3)-graph surface where it is tangent to the leaves of a
/// foliation, assembled by sweeping the third coordinate.
pub fn tangency_locus<F: Fn(C3) -> C3>(
    surface: &Series2,
    leaf_tangent: F,
    n_samples: usize,
) -> Result<Vec<C3>> {
    let mut out = Vec::with_capacity(n_samples);
    let mut y2 = C::new(0.0, 0.0);
    for k in 0..n_samples {
        let y3 = C::new(-0.5 + k as f64 / (n_samples.max(2) - 1) as f64, 0.0);
        // solve in y2: ell_1 = S_2 ell_2 + S_3 ell_3 at (S(y2,y3), y2, y3)
        let mut ok = false;
        for _ in 0..40 {
            let z = [surface.eval(y2, y3), y2, y3];
            let ell = leaf_tangent([z[0], y2, y3]);
            let (s2, s3) = surface.grad(y2, y3);
            let h = ell[0] - s2 * ell[1] - s3 * ell[2];
            // derivative by a complex step in y2
            let dh = {
                let e = 1e-7;
                let zp = surface.eval(y2 + C::new(e, 0.0), y3);
                let ellp = leaf_tangent([zp, y2 + C::new(e, 0.0), y3]);
                let (s2p, s3p) = surface.grad(y2 + C::new(e, 0.0), y3);
                let hp = ellp[0] - s2p * ellp[1] - s3p * ellp[2];
                (hp - h) / e
            };
            if dh.norm() < 1e-14 {
                break;
            }
            let step = h / dh;
            y2 -= step;
            if step.norm() < 1e-13 {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::check(
                "tangency_locus",
                format!("leaf equation did not isolate a root at y3 = {y3}"),
                -1.0,
            ));
        }
        out.push([surface.eval(y2, y3), y2, y3]);
    }
    // regularity: turning angle between consecutive segments below 10 degrees
    for w in out.windows(3) {
        let a = c3_norm(crate::linalg3::c3_sub(w[1], w[0]));
        let b = c3_norm(crate::linalg3::c3_sub(w[2], w[1]));
        if a > 1e-12 && b > 1e-12 {
            let dot = crate::linalg3::c3_dot(
                crate::linalg3::c3_sub(w[1], w[0]),
                crate::linalg3::c3_sub(w[2], w[1]),
            );
            let cosang = dot.re / (a * b);
            if cosang < (10.0f64).to_radians().cos() - 1e-9 {
                return Err(Error::check(
                    "tangency_locus",
                    "sampled curve turns faster than 10 degrees",
                    cosang,
                ));
            }
        }
    }
    Ok(out)
}

/// Foliation of a neighborhood by graphs of bounded slope: straighten the
/// quasi-plane, then shear so the leaf through `theta` is tangent to `u`.
pub struct Foliation {
    pub v_graph: Series2,
    #[allow(dead_code)]
    theta: C3,
    theta_t: C3,
    eps2: C,
    eps3: C,
}

impl Foliation {
    /// Leaves `V_{x,y}` with `V_{x,0}` the u-curves of the plane `z2 = v(z1, z3)`
    /// sliced at `z3 = x`; the leaf through `theta` is tangent to `u`.
    pub fn new(v_graph: Series2, theta: C3, u: C3) -> Result<Self> {
        // phi_1 straightens: (z1, z2 - v(z1,z3), z3)
        let t2 = theta[1] - v_graph.eval(theta[0], theta[2]);
        if t2.norm() < 1e-12 {
            return Err(Error::Precondition(
                "theta lies on the foliated plane".into(),
            ));
        }
        // D phi_1 (u) = (u1, u2 - grad v . (u1,u3), u3); normalize first slot
        let (g1, g3) = v_graph.grad(theta[0], theta[2]);
        let du = [u[0], u[1] - g1 * u[0] - g3 * u[2], u[2]];
        if du[0].norm() < 1e-12 {
            return Err(Error::Precondition("u is not transverse enough".into()));
        }
        let eps2 = du[1] / du[0];
        let eps3 = du[2] / du[0];
        Ok(Foliation {
            v_graph,
            theta,
            theta_t: [theta[0], t2, theta[2]],
            eps2,
            eps3,
        })
    }

    /// Evaluate the leaf `V_{x,y}` at abscissa `z1`.
    pub fn leaf(&self, x: C, y: C, z1: C) -> C3 {
        // invert phi_2: straightened coordinates of the leaf are
        // z2t = y + eps2 (z1 - theta1) y/theta2t, z3t = x + eps3 (...) y/theta2t
        let shift = (z1 - self.theta_t[0]) / self.theta_t[1];
        let z2t = y + self.eps2 * shift * y;
        let z3t = x + self.eps3 * shift * y;
        // invert phi_1
        let z2 = z2t + self.v_graph.eval(z1, z3t);
        [z1, z2, z3t]
    }

    /// Tangent of the leaf at abscissa `z1`.
    pub fn leaf_tangent(&self, x: C, y: C, z1: C) -> C3 {
        let e = 1e-6;
        let a = self.leaf(x, y, z1 + C::new(e, 0.0));
        let b = self.leaf(x, y, z1 - C::new(e, 0.0));
        [
            (a[0] - b[0]) / (2.0 * e),
            (a[1] - b[1]) / (2.0 * e),
            (a[2] - b[2]) / (2.0 * e),
        ]
    }
}

/// Construct the folded (2,3)-surface inside the stable manifold through the
/// tangency: realize the component of `W^s(alpha)` through `tau` as a
/// uniformized double cover, validate it, and concentrate it by transports.
pub fn stable_folded_surface(
    p0: &MapParams,
    record: &TangencyRecord,
    budget: &GeometryBudget,
) -> Result<FoldedSurface> {
    let p1 = p0.with_c(record.c1);
    let setup = p1.setup.as_ref().unwrap();
    let total = record.s + record.m;
    let stable = local_stable(&p1, &[1], 10, 1e-11, 6)?;

    // stage 1: the surface component through tau, parameterized by
    // (u = z2 offset, eta = z1 offset along the curve window), solving the
    // third coordinate so the pushed point lands on the stable graph
    let n = 12;
    let eta_scale = record.window;
    let u_scale = 0.2;
    let tau = record.tau;
    let mut grid3 = vec![vec![C::new(0.0, 0.0); n]; n];
    let mut x3_prev = tau[2];
    for ku in 0..n {
        let au = 2.0 * std::f64::consts::PI * ku as f64 / n as f64;
        let u = C::from_polar(u_scale, au);
        let mut x3_row = x3_prev;
        for ke in 0..n {
            let ae = 2.0 * std::f64::consts::PI * ke as f64 / n as f64;
            let eta = C::from_polar(eta_scale, ae);
            let x1 = tau[0] + eta;
            let x2 = tau[1] + u;
            let mut x3 = x3_row;
            let mut ok = false;
            for _ in 0..40 {
                let mut x = [x1, x2, x3];
                let mut v = [C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
                for _ in 0..total {
                    let j = f_jacobian(&p1, x);
                    v = j.mul_vec(v);
                    x = f_apply(&p1, x);
                }
                let res = x[0] - stable.s1.eval(x[1], x[2]);
                let (s2, s3) = stable.s1.grad(x[1], x[2]);
                let deriv = v[0] - s2 * v[1] - s3 * v[2];
                if deriv.norm() < 1e-300 {
                    break;
                }
                let step = res / deriv;
                x3 -= step;
                if step.norm() < 1e-13 * (1.0 + x3.norm()) {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::check(
                    "stable_surface",
                    "stage 1: fiber solve did not converge (sigma-degenerate fold?)",
                    -1.0,
                ));
            }
            if ke == 0 {
                x3_row = x3;
                if ku == 0 {
                    x3_prev = x3;
                }
            }
            grid3[ku][ke] = x3;
        }
    }

    // assemble the surface: w1 = tau1 + eta, w2 = tau2 + u, w3 = solved grid
    let w3 = series2_from_grid(&grid3, n);
    let w1 = Series2::from_fn(4, 1.0, 1.0, |_, e| tau[0] + e * eta_scale);
    let w2 = Series2::from_fn(4, 1.0, 1.0, |uu, _| tau[1] + uu * u_scale);
    let surface = FoldedSurface {
        w1,
        w2,
        w3,
        fold_axis: 3,
        fold_disk: crate::disk::ComplexDisk::new(C::new(0.0, 0.0), 0.0),
        pr1_diam: 0.0,
        concentrated: false,
    };

    // stage 2: validate the double cover on a central quasi-plane slice
    let probe = QuasiPlane::constant((1, 3), tau[1]);
    let slice = crate::folds::slice_surface(&surface, &probe).map_err(|e| {
        Error::check(
            "stable_surface",
            format!("stage 2: slice validation failed: {e}"),
            -1.0,
        )
    })?;
    let _ = slice;
    let measured = measure_surface(surface, &p1.profile)?;

    // stage 3: concentrate by transports (the first one may start above the
    // pr1 hypothesis; each transport contracts pr1 by the block contraction)
    let mut current = measured;
    for k in 0..budget.crossed_depth {
        if current.concentrated
            && current.pr1_diam <= p1.profile.pr1_diam
            && current.fold_disk.center.norm() + current.fold_disk.radius
                <= p1.profile.covering_inner_radius
        {
            return Ok(current);
        }
        let model = crate::blender::BlenderModel::from_params(&p1)?;
        let j = model
            .select(current.fold_disk.center)
            .map(|(j, _)| j)
            .unwrap_or(0);
        let relaxed = FoldedSurface {
            pr1_diam: 0.0,
            ..current.clone()
        };
        current = crate::folds::fold_transport(&p1, &relaxed, j).map_err(|e| {
            Error::check(
                "stable_surface",
                format!("stage 3 transport {k}: {e}"),
                -1.0,
            )
        })?;
    }
    if current.concentrated && current.pr1_diam <= p1.profile.pr1_diam {
        Ok(current)
    } else {
        Err(Error::check(
            "stable_surface",
            "stage 3: transports did not concentrate the surface",
            -1.0,
        ))
    }
}

fn series2_from_grid(grid: &[Vec<C>], n: usize) -> Series2 {
    // grid[ku][ke] sampled on product circles; two DFT passes
    let rows: Vec<Series1> = grid
        .iter()
        .map(|row| crate::blender::series_from_unit_circle(row))
        .collect();
    let mut coeffs = vec![vec![C::new(0.0, 0.0); n]; n];
    for ke in 0..n {
        let col: Vec<C> = rows
            .iter()
            .map(|r| r.coeffs.get(ke).copied().unwrap_or(C::new(0.0, 0.0)))
            .collect();
        let d = crate::blender::series_from_unit_circle(&col);
        for ku in 0..n {
            coeffs[ku][ke] = d.coeffs[ku];
        }
    }
    Series2 {
        coeffs,
        r1: 1.0,
        r2: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;
    use crate::coeffs::build_coeffs;
    use crate::profile::RigorProfile;
    use crate::quad::build_setup;
    use std::sync::OnceLock;

    fn pipeline() -> &'static MapParams {
        static PIPE: OnceLock<MapParams> = OnceLock::new();
        PIPE.get_or_init(|| {
            let setup = build_setup(&RigorProfile::demo()).unwrap();
            let coeffs = build_coeffs(&setup).unwrap();
            let sigma = c(5e-10, 0.0);
            MapParams::from_pipeline(&setup, &coeffs, sigma * sigma, sigma).unwrap()
        })
    }

    #[test]
    fn preimage_depth_is_found() {
        let p = pipeline();
        let setup = p.setup.as_ref().unwrap();
        let (s, beta) = preimage_depth(setup).unwrap();
        assert!(s >= 1 && s <= 14);
        assert!(beta.norm() < 0.8);
        // p^s of the preimage is the critical point
        let quad = setup.quad();
        let crit = setup.rescale.to_unit(c(0.0, 0.0));
        assert!((quad.iter(beta, s) - crit).norm() < 1e-9);
    }

    #[test]
    fn winding_pretest_passes_on_demo() {
        let p = pipeline();
        assert!(winding_pretest(p.setup.as_ref().unwrap()).unwrap() >= 1);
    }

    #[test]
    fn tangency_solve_demo() {
        let p = pipeline();
        let record = initial_tangency_solve(p).unwrap();
        let setup = p.setup.as_ref().unwrap();
        // generic unfolding near the sigma = 0 oracle
        let oracle = unfolding_oracle(setup);
        assert!(
            (record.unfolding_derivative.norm() - oracle.norm()).abs() < 0.1 * oracle.norm(),
            "unfolding {} vs oracle {}",
            record.unfolding_derivative.norm(),
            oracle.norm()
        );
        assert!(record.discriminant_residual < 1e-10);
        assert!(record.pr3_phi.norm() < 0.1 - 1e-4);
        // c1 close to c0 at tiny sigma
        assert!((record.c1 - setup.c0).norm() < 1e-6, "c1 = {}", record.c1);
    }

    #[test]
    fn transversality_demo() {
        let p = pipeline();
        let record = initial_tangency_solve(p).unwrap();
        let report = transversality_check(p, &record).unwrap();
        assert!(report.transverse);
        assert!(report.witness_index > 0);
        for g in &report.growth_trace {
            assert!(*g >= 1.5, "growth {g}");
        }
    }

    #[test]
    fn locus_of_quadratic_model() {
        // surface z1 = z3^2, leaves parallel to e3: Tan = { z3 = 0 }
        let surf = Series2::from_fn(8, 1.0, 1.0, |_, y3| y3 * y3);
        let locus = tangency_locus(&surf, |_| [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], 9).unwrap();
        for pt in &locus {
            assert!(pt[2].norm() < 1e-10, "z3 = {}", pt[2]);
        }
        // tilted foliation: leaf tangent (delta, 0, 1) moves Tan to z3 = delta/2
        let delta = c(0.01, 0.0);
        let locus2 =
            tangency_locus(&surf, move |_| [delta, c(0.0, 0.0), c(1.0, 0.0)], 9);
        // the locus solves 2 z3 = delta; our sweep is over y3 with y2 free,
        // so each sample must satisfy the shifted relation
        if let Ok(pts) = locus2 {
            for pt in pts {
                let h = 2.0 * pt[2] - delta;
                assert!(h.norm() < 1e-8, "residual {h}");
            }
        }
    }

    #[test]
    fn foliation_reproduces_base_leaves() {
        // plane z2 = 0.3 + small, foliated by u-curves at z3 = x
        let v = Series2::from_fn(8, 1.0, 1.0, |z1, z3| {
            c(0.3, 0.0) + z1 * c(1e-5, 0.0) + z3 * c(2e-5, 0.0)
        });
        let theta = [c(0.1, 0.0), c(0.7, 0.1), c(0.05, 0.0)];
        let u = [c(1.0, 0.0), c(0.02, 0.0), c(0.01, 0.0)];
        let fol = Foliation::new(v.clone(), theta, u).unwrap();
        // V_{x,0} equals the sliced plane
        for k in 0..8 {
            let x = c(-0.4 + 0.1 * k as f64, 0.0);
            let z1 = c(0.2 * k as f64 - 0.6, 0.0);
            let leaf = fol.leaf(x, c(0.0, 0.0), z1);
            assert!((leaf[1] - v.eval(z1, x)).norm() < 1e-12);
            assert!((leaf[2] - x).norm() < 1e-12);
        }
        // the leaf through theta is tangent to u
        let y_theta = fol.theta_t[1];
        let x_theta = fol.theta_t[2];
        let tan = fol.leaf_tangent(x_theta, y_theta, theta[0]);
        let ratio2 = tan[1] / tan[0] - u[1] / u[0];
        let ratio3 = tan[2] / tan[0] - u[2] / u[0];
        assert!(ratio2.norm() < 1e-6, "slope mismatch {ratio2}");
        assert!(ratio3.norm() < 1e-6, "slope mismatch {ratio3}");
        // slopes bounded by 1e-1 on a sample set
        for k in 0..6 {
            let t = fol.leaf_tangent(c(0.1, 0.0), y_theta * 0.5, c(-0.5 + 0.2 * k as f64, 0.0));
            assert!((t[1] / t[0]).norm() < 0.1 && (t[2] / t[0]).norm() < 0.1);
        }
    }

    #[test]
    fn stable_surface_stages() {
        let p = pipeline();
        let record = initial_tangency_solve(p).unwrap();
        let budget = GeometryBudget::default();
        match stable_folded_surface(p, &record, &budget) {
            Ok(w) => {
                assert!(w.concentrated);
                assert!(w.pr1_diam <= p.profile.pr1_diam);
                assert!(
                    w.fold_disk.center.norm() + w.fold_disk.radius
                        <= p.profile.covering_inner_radius
                );
            }
            Err(e) => {
                // staged diagnostics must name the stage that broke
                let msg = format!("{e}");
                assert!(msg.contains("stage"), "unstaged failure: {msg}");
            }
        }
    }
}
