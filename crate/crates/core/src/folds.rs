//! Folded curves and surfaces: quasi-planes, fold extraction by the argument
//! principle, fold transport under the inverse branches, and the tangency
//! hunt against the unstable lamination.
//!
//! Surfaces are carried as bivariate power-series parameterizations
//! `W(u, zeta)` normalized so that the second coordinate is the parameter
//! `u` itself; the zeta direction carries the double cover of the fold axis.

use crate::blender::BlenderModel;
use crate::horseshoe::{Itinerary, UnstableCone};
use crate::interp::{Series1, Series2};
use crate::linalg3::{c3_dot, c3_norm, c3_scale, c3_sub, M3, C3};
use crate::map3::{f_apply, f_jacobian, MapParams};
use crate::{Error, Result, C};
use serde::{Deserialize, Serialize};

/// Holomorphic graph `z_k = v(z_i, z_j)` over the bidisk with small
/// oscillation around a level `v0`.
#[derive(Debug, Clone)]
pub struct QuasiPlane {
    pub axes: (usize, usize),
    pub graph: Series2,
    pub v0: C,
    pub oscillation: f64,
}

impl QuasiPlane {
    /// Build and validate from a graph function; the oscillation must stay
    /// below the profile constant.
    pub fn new(axes: (usize, usize), graph: Series2, osc_bound: f64) -> Result<Self> {
        let v0 = graph.coeffs[0][0];
        let oscillation = graph.oscillation();
        if oscillation >= osc_bound {
            return Err(Error::check(
                "quasi_plane",
                "oscillation above the bound",
                osc_bound - oscillation,
            ));
        }
        Ok(QuasiPlane {
            axes,
            graph,
            v0,
            oscillation,
        })
    }

    /// Constant plane `z_k = v0`.
    pub fn constant(axes: (usize, usize), v0: C) -> Self {
        QuasiPlane {
            axes,
            graph: Series2::from_fn(4, 1.0, 1.0, |_, _| v0),
            v0,
            oscillation: 0.0,
        }
    }
}

/// A parameterized curve in C^3 with a validated single fold over one axis.
#[derive(Debug, Clone)]
pub struct FoldedCurve {
    pub gamma: [Series1; 3],
    pub fold_axis: usize,
    #[allow(dead_code)]
    pub fold: C,
    pub ram: C,
}

impl FoldedCurve {
    pub fn eval(&self, t: C) -> C3 {
        [self.gamma[0].eval(t), self.gamma[1].eval(t), self.gamma[2].eval(t)]
    }

    pub fn tangent(&self, t: C) -> C3 {
        [
            self.gamma[0].deriv().eval(t),
            self.gamma[1].deriv().eval(t),
            self.gamma[2].deriv().eval(t),
        ]
    }
}

/// Winding number of a series around `w` along `|t| = rho` by phase summing.
fn winding_number(s: &Series1, w: C, rho: f64, samples: usize) -> i64 {
    let mut total = 0.0f64;
    let mut prev_arg = 0.0f64;
    for k in 0..=samples {
        let th = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
        let v = s.eval(C::from_polar(rho, th)) - w;
        let arg = v.im.atan2(v.re);
        if k > 0 {
            let mut d = arg - prev_arg;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            total += d;
        }
        prev_arg = arg;
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

/// Covering degree of `pr_axis` restricted to a parameterized curve, via
/// boundary winding around several interior targets.
pub fn curve_degree(gamma: &[Series1; 3], axis: usize, targets: &[C]) -> Result<usize> {
    let s = &gamma[axis - 1];
    let mut degree: Option<i64> = None;
    for &w in targets {
        let wind = winding_number(s, w, 1.0, 512);
        match degree {
            None => degree = Some(wind),
            Some(d) if d != wind => {
                return Err(Error::check(
                    "degree_count",
                    format!("winding {wind} at {w} disagrees with {d}"),
                    -1.0,
                ))
            }
            _ => {}
        }
    }
    let d = degree.unwrap_or(0);
    if d < 0 {
        return Err(Error::check("degree_count", "negative winding", d as f64));
    }
    Ok(d as usize)
}

/// Locate the unique ramification of `pr_axis` on the curve: the single root
/// of the derivative inside the parameter disk, counted by the argument
/// principle and polished by Newton. Errors when the count is not one.
pub fn fold_of_curve(gamma: &[Series1; 3], axis: usize) -> Result<(C, C)> {
    let proj = &gamma[axis - 1];
    let dproj = proj.deriv();
    let wind = winding_number(&dproj, C::new(0.0, 0.0), 1.0, 1024);
    if wind != 1 {
        return Err(Error::check(
            "fold_of_curve",
            format!("derivative has {wind} zeros in the parameter disk"),
            1.0 - wind as f64,
        ));
    }
    let roots = dproj.roots_in_disk(1.0, 40)?;
    let mut ram = match roots.len() {
        1 => roots[0],
        n => {
            // the winding said one; take the smallest-modulus candidate and
            // let Newton decide, but refuse clearly multiple folds
            if n == 0 {
                return Err(Error::check("fold_of_curve", "no interior critical point", -1.0));
            }
            roots
                .into_iter()
                .min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
                .unwrap()
        }
    };
    let ddproj = dproj.deriv();
    for _ in 0..20 {
        let v = dproj.eval(ram);
        let dv = ddproj.eval(ram);
        if dv.norm() < 1e-300 {
            break;
        }
        let step = v / dv;
        ram -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    Ok((proj.eval(ram), ram))
}

/// Validate a parameterized curve as a k-folded curve: degree 2 over the
/// fold axis with exactly one ramification.
pub fn validate_folded_curve(gamma: [Series1; 3], fold_axis: usize) -> Result<FoldedCurve> {
    let degree = curve_degree(
        &gamma,
        fold_axis,
        &[C::new(0.0, 0.0), C::new(0.2, 0.1), C::new(-0.15, -0.2)],
    )?;
    if degree != 2 {
        return Err(Error::check(
            "folded_curve",
            format!("projection degree {degree}, not a 2-cover"),
            -1.0,
        ));
    }
    let (fold, ram) = fold_of_curve(&gamma, fold_axis)?;
    Ok(FoldedCurve {
        gamma,
        fold_axis,
        fold,
        ram,
    })
}

/// The slope dichotomy on a validated folded curve: away from the fold and
/// with a thin first-coordinate range, the fold-axis derivative dominates.
pub fn slope_dichotomy_holds(curve: &FoldedCurve, fold_exclusion: f64) -> bool {
    let d1 = curve.gamma[0].deriv();
    let dk = curve.gamma[curve.fold_axis - 1].deriv();
    let proj = &curve.gamma[curve.fold_axis - 1];
    let fold_val = proj.eval(curve.ram);
    for ring in 0..3 {
        let r = 0.9 - 0.25 * ring as f64;
        for k in 0..24 {
            let t = C::from_polar(r, 0.2618 * k as f64);
            if (proj.eval(t) - fold_val).norm() < fold_exclusion {
                continue;
            }
            if d1.eval(t).norm() >= dk.eval(t).norm() {
                return false;
            }
        }
    }
    true
}

/// A folded (2,3)-surface `W(u, zeta)`; the zeta direction carries the
/// double cover of the fold axis. Pipeline-built surfaces keep `pr_2 W = u`.
#[derive(Debug, Clone)]
pub struct FoldedSurface {
    pub w1: Series2,
    pub w2: Series2,
    pub w3: Series2,
    pub fold_axis: usize,
    pub fold_disk: crate::disk::ComplexDisk,
    pub pr1_diam: f64,
    pub concentrated: bool,
}

impl FoldedSurface {
    pub fn eval(&self, u: C, zeta: C) -> C3 {
        [
            self.w1.eval(u, zeta),
            self.w2.eval(u, zeta),
            self.w3.eval(u, zeta),
        ]
    }

    /// Tangent basis at parameters `(u, zeta)`.
    pub fn tangents(&self, u: C, zeta: C) -> (C3, C3) {
        let (w1u, w1z) = self.w1.grad(u, zeta);
        let (w2u, w2z) = self.w2.grad(u, zeta);
        let (w3u, w3z) = self.w3.grad(u, zeta);
        ([w1u, w2u, w3u], [w1z, w2z, w3z])
    }
}

/// The identity graph `w2(u, zeta) = u`.
pub(crate) fn identity_w2() -> Series2 {
    Series2 {
        coeffs: vec![
            vec![C::new(0.0, 0.0), C::new(0.0, 0.0)],
            vec![C::new(1.0, 0.0), C::new(0.0, 0.0)],
        ],
        r1: 1.0,
        r2: 1.0,
    }
}

/// Synthetic concentrated 3-folded surface for tests and statistics:
/// `W(u,z) = (a0 + e1 u + e2 z, u, c0 + beta (z - rho(u))^2 + eta u)`.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_folded_surface(
    a0: C,
    e1: C,
    e2: C,
    fold_center: C,
    beta: C,
    rho0: C,
    rho1: C,
    eta: C,
    profile: &crate::profile::RigorProfile,
) -> Result<FoldedSurface> {
    let n = 12;
    let w1 = Series2::from_fn(n, 1.0, 1.0, |u, z| a0 + e1 * u + e2 * z);
    let w3 = Series2::from_fn(n, 1.0, 1.0, |u, z| {
        let rho = rho0 + rho1 * u;
        fold_center + beta * (z - rho) * (z - rho) + eta * u
    });
    let surface = FoldedSurface {
        w1,
        w2: identity_w2(),
        w3,
        fold_axis: 3,
        fold_disk: crate::disk::ComplexDisk::new(fold_center, 0.0),
        pr1_diam: 0.0,
        concentrated: false,
    };
    measure_surface(surface, profile)
}

/// Slice a folded surface by a (1,3)-quasi-plane: solve `u(zeta)` with
/// `u = v(W1, W3)` and assemble the intersection curve.
pub fn slice_surface(w: &FoldedSurface, plane: &QuasiPlane) -> Result<FoldedCurve> {
    if plane.axes != (1, 3) {
        return Err(Error::Precondition(
            "slicing needs a (1,3)-quasi-plane".into(),
        ));
    }
    let n = 24;
    // seed so that w2(u, .) starts near the plane level
    let mut u_prev = plane.v0 - w.w2.coeffs[0][0];
    let mut s1 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    let mut s3 = Vec::with_capacity(n);
    for k in 0..n {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let zeta = C::from_polar(1.0, th);
        let mut u = u_prev;
        let mut ok = false;
        for _ in 0..30 {
            let x1 = w.w1.eval(u, zeta);
            let x3 = w.w3.eval(u, zeta);
            let res = u - plane.graph.eval(x1, x3);
            let (g1, g3) = plane.graph.grad(x1, x3);
            let (w1u, _) = w.w1.grad(u, zeta);
            let (w3u, _) = w.w3.grad(u, zeta);
            let deriv = C::new(1.0, 0.0) - g1 * w1u - g3 * w3u;
            if deriv.norm() < 1e-12 {
                return Err(Error::check(
                    "slice_surface",
                    "degenerate slice: tangential intersection",
                    -1.0,
                ));
            }
            let step = res / deriv;
            u -= step;
            if step.norm() < 1e-14 {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::NonConvergence {
                iters: 30,
                residual: -1.0,
            });
        }
        u_prev = u;
        s1.push(w.w1.eval(u, zeta));
        s2.push(w.w2.eval(u, zeta));
        s3.push(w.w3.eval(u, zeta));
    }
    let gamma = [
        crate::blender::series_from_unit_circle(&s1),
        crate::blender::series_from_unit_circle(&s2),
        crate::blender::series_from_unit_circle(&s3),
    ];
    validate_folded_curve(gamma, w.fold_axis)
}

/// Probe family of quasi-planes used to measure `Fold(W)`.
fn probe_planes() -> Vec<QuasiPlane> {
    let mut out = vec![QuasiPlane::constant((1, 3), C::new(0.0, 0.0))];
    for k in 0..8 {
        let th = std::f64::consts::FRAC_PI_4 * k as f64;
        out.push(QuasiPlane::constant((1, 3), C::from_polar(0.45, th)));
    }
    out
}

/// Measure the fold set, first-coordinate diameter, and concentration of a
/// surface; returns it with the measured fields filled in.
pub fn measure_surface(
    mut w: FoldedSurface,
    profile: &crate::profile::RigorProfile,
) -> Result<FoldedSurface> {
    let mut folds = Vec::new();
    for plane in probe_planes() {
        let curve = slice_surface(&w, &plane)?;
        folds.push(curve.gamma[w.fold_axis - 1].eval(curve.ram));
    }
    let hull = crate::disk::ComplexDisk::enclose_points(&folds, 0.0);
    w.fold_disk = hull.inflate(profile.fold_drift);
    // first-coordinate diameter over a parameter grid
    let mut pts = Vec::new();
    for a in 0..5 {
        for b in 0..5 {
            let u = C::from_polar(0.95 * a as f64 / 4.0, 1.3 * a as f64);
            let z = C::from_polar(0.95 * b as f64 / 4.0, 0.7 * b as f64 + 0.4);
            pts.push(w.w1.eval(u, z));
        }
    }
    let h1 = crate::disk::ComplexDisk::enclose_points(&pts, 0.0);
    w.pr1_diam = 2.0 * h1.radius;
    w.concentrated = 2.0 * w.fold_disk.radius <= profile.fold_diam;
    Ok(w)
}

/// Fold stability across nearby quasi-planes: maximal fold motion between
/// plane pairs whose graphs differ by at most the quasi-plane oscillation.
pub fn fold_drift_measure(w: &FoldedSurface, n_pairs: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..n_pairs {
        let base = C::from_polar(0.3, 2.1 * k as f64);
        let p0 = QuasiPlane::constant((1, 3), base);
        let p1 = QuasiPlane::constant((1, 3), base + C::new(1e-4, 0.0));
        let c0 = slice_surface(w, &p0)?;
        let c1 = slice_surface(w, &p1)?;
        let f0 = c0.gamma[w.fold_axis - 1].eval(c0.ram);
        let f1 = c1.gamma[w.fold_axis - 1].eval(c1.ram);
        worst = worst.max((f0 - f1).norm());
    }
    Ok(worst)
}

/// Pull one v-slice curve of the surface back through one qr-block on the
/// given branch. Returns the new slice samples and the parameter map.
#[allow(clippy::type_complexity)]
fn pull_back_slice_block(
    p: &MapParams,
    branch: u8,
    slice: &[Series1; 3],
    n_interp: usize,
) -> Result<([Vec<C>; 3], Vec<C>)> {
    let setup = p.setup.as_ref().unwrap();
    let power = setup.q * setup.r;
    let d = [slice[0].deriv(), slice[1].deriv(), slice[2].deriv()];
    let wc = crate::coeffs::WINDOW_CENTER;
    let wsign = if branch == 1 { wc } else { -wc };
    let mu_qr = p.mu.powi(power as i32);

    let x1_seed = setup.pull_back_point(slice[0].eval(C::new(0.0, 0.0)), &vec![branch; setup.q]);
    let quad = p.quad();
    let t_seed = quad.iter(x1_seed, power - 1);
    let z3_seed = (slice[2].eval(t_seed) - C::new(wsign, 0.0)) / mu_qr;

    let mut out1 = Vec::with_capacity(n_interp);
    let mut out2 = Vec::with_capacity(n_interp);
    let mut out3 = Vec::with_capacity(n_interp);
    let mut tmap = Vec::with_capacity(n_interp);
    let mut state = [x1_seed, z3_seed, t_seed];
    for k in 0..n_interp {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n_interp as f64;
        let s = C::from_polar(1.0, th);
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
            let g = [slice[0].eval(u[2]), slice[1].eval(u[2]), slice[2].eval(u[2])];
            let res = [x[0] - g[0], x[1] - g[1], x[2] - g[2]];
            if !c3_norm(res).is_finite() {
                return Err(Error::NonConvergence {
                    iters: 24,
                    residual: c3_norm(res),
                });
            }
            let jac = M3([
                [v1[0], v3[0], -d[0].eval(u[2])],
                [v1[1], v3[1], -d[1].eval(u[2])],
                [v1[2], v3[2], -d[2].eval(u[2])],
            ]);
            let du = jac.solve(res)?;
            let step = c3_norm(du);
            u = [u[0] - du[0], u[1] - du[1], u[2] - du[2]];
            if step <= 1e-14 * (1.0 + c3_norm(u)) {
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
        out1.push(u[0]);
        out2.push(s);
        out3.push(u[1]);
        tmap.push(u[2]);
    }
    Ok(([out1, out2, out3], tmap))
}

/// Transport a concentrated folded surface by `g_j` (branch pair `pair`):
/// two chained one-block pullbacks of every v-slice, reassembled as a
/// surface over the same secondary parameter.
pub fn fold_transport(
    p: &MapParams,
    w: &FoldedSurface,
    pair_index: usize,
) -> Result<FoldedSurface> {
    fold_transport_with_map(p, w, pair_index).map(|(s, _)| s)
}

/// Like [`fold_transport`], additionally returning the parameter map
/// `u_old = T(s_new, v)` (the secondary parameter is carried over).
pub fn fold_transport_with_map(
    p: &MapParams,
    w: &FoldedSurface,
    pair_index: usize,
) -> Result<(FoldedSurface, Series2)> {
    let profile = &p.profile;
    if w.pr1_diam > profile.pr1_diam {
        return Err(Error::Precondition(format!(
            "surface pr1 diameter {} above the transport hypothesis {}",
            w.pr1_diam, profile.pr1_diam
        )));
    }
    let model = BlenderModel::from_params(p)?;
    let pair = model.pairs[pair_index];
    let n_s = 16usize;
    let n_v = 12usize;

    // per v-sample: the slice curve of W, pulled back twice
    let mut slices1: Vec<Vec<C>> = Vec::with_capacity(n_v);
    let mut slices3: Vec<Vec<C>> = Vec::with_capacity(n_v);
    let mut slices_u: Vec<Vec<C>> = Vec::with_capacity(n_v);
    for kv in 0..n_v {
        let th = 2.0 * std::f64::consts::PI * kv as f64 / n_v as f64;
        let v = C::from_polar(1.0, th);
        // v-slice as a curve over the old parameter u
        let n_c = 16;
        let mut c1 = Vec::with_capacity(n_c);
        let mut c2 = Vec::with_capacity(n_c);
        let mut c3v = Vec::with_capacity(n_c);
        for kc in 0..n_c {
            let ph = 2.0 * std::f64::consts::PI * kc as f64 / n_c as f64;
            let uu = C::from_polar(1.0, ph);
            let pt = w.eval(uu, v);
            c1.push(pt[0]);
            c2.push(pt[1]);
            c3v.push(pt[2]);
        }
        let slice = [
            crate::blender::series_from_unit_circle(&c1),
            crate::blender::series_from_unit_circle(&c2),
            crate::blender::series_from_unit_circle(&c3v),
        ];
        let (mid, map_b) = pull_back_slice_block(p, pair.1, &slice, n_s)?;
        let mid_series = [
            crate::blender::series_from_unit_circle(&mid[0]),
            crate::blender::series_from_unit_circle(&mid[1]),
            crate::blender::series_from_unit_circle(&mid[2]),
        ];
        let (new, map_a) = pull_back_slice_block(p, pair.0, &mid_series, n_s)?;
        slices1.push(new[0].clone());
        slices3.push(new[2].clone());
        // compose the two block maps: old u at each new s sample
        let map_b_series = crate::blender::series_from_unit_circle(&map_b);
        let u_samples: Vec<C> = map_a.iter().map(|&a| map_b_series.eval(a)).collect();
        slices_u.push(u_samples);
    }

    // assemble Series2 over (s, v) by a second DFT across the v-samples
    let w1 = series2_from_slices(&slices1, n_s, n_v);
    let w3 = series2_from_slices(&slices3, n_s, n_v);
    let umap = series2_from_slices(&slices_u, n_s, n_v);
    let new_surface = FoldedSurface {
        w1,
        w2: identity_w2(),
        w3,
        fold_axis: w.fold_axis,
        fold_disk: crate::disk::ComplexDisk::new(C::new(0.0, 0.0), 0.0),
        pr1_diam: 0.0,
        concentrated: false,
    };
    let measured = measure_surface(new_surface, profile)?;

    // Riemann-Hurwitz accounting on the transported surface
    let probe = QuasiPlane::constant((1, 3), C::new(0.0, 0.0));
    let _ = slice_surface(&measured, &probe)?;

    // fold prediction: new fold in D(old/mu^{2qr} - c_eff, transport radius)
    let predicted =
        w.fold_disk.center / model.mu2qr - model.c_eff[pair_index];
    let pred_radius = profile.fold_transport_radius
        + w.fold_disk.radius / model.mu2qr.norm()
        + profile.fold_diam;
    let dev = (measured.fold_disk.center - predicted).norm() + measured.fold_disk.radius;
    if dev > pred_radius {
        return Err(Error::check(
            "fold_transport",
            format!(
                "fold {} strayed from the prediction {predicted} (radius {pred_radius:.3e})",
                measured.fold_disk.center
            ),
            pred_radius - dev,
        ));
    }
    Ok((measured, umap))
}

fn series2_from_slices(slices: &[Vec<C>], n_s: usize, n_v: usize) -> Series2 {
    // slices[kv][ks]: first DFT in s per v-sample, then DFT across v
    let per_v: Vec<Series1> = slices
        .iter()
        .map(|vals| crate::blender::series_from_unit_circle(vals))
        .collect();
    let mut coeffs = vec![vec![C::new(0.0, 0.0); n_v]; n_s];
    for ks in 0..n_s {
        let col: Vec<C> = per_v
            .iter()
            .map(|s| s.coeffs.get(ks).copied().unwrap_or(C::new(0.0, 0.0)))
            .collect();
        let dft = crate::blender::series_from_unit_circle(&col);
        for kv in 0..n_v {
            coeffs[ks][kv] = dft.coeffs[kv];
        }
    }
    // coeffs[ks][kv] multiplies s^{ks} v^{kv}; our Series2 convention is
    // coeffs[k][l] on u^k v^l with u the first parameter
    Series2 {
        coeffs,
        r1: 1.0,
        r2: 1.0,
    }
}

/// A certified tangency between a folded surface and the unstable manifold
/// of a horseshoe point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangencyWitness {
    #[serde(with = "crate::jsonio::complex3")]
    pub point: C3,
    #[serde(with = "crate::jsonio::complex3")]
    pub surface_tangent: C3,
    #[serde(with = "crate::jsonio::complex3")]
    pub unstable_tangent: C3,
    pub angle_residual: f64,
    pub selection_word: Vec<u8>,
    pub anchor_itinerary: Itinerary,
    pub depth: usize,
}

/// Drive a concentrated folded surface into a tangency with the unstable
/// lamination: iterate covering-selected fold transports, track the fold
/// point through the parameter maps, and measure the angle against the
/// unstable graph of the anchor itinerary.
pub fn tangency_hunt(
    p: &MapParams,
    w0: &FoldedSurface,
    max_depth: usize,
    tol: f64,
) -> Result<TangencyWitness> {
    let profile = &p.profile;
    let model = BlenderModel::from_params(p)?;
    if !w0.concentrated {
        return Err(Error::Precondition("surface not concentrated".into()));
    }
    if w0.fold_disk.center.norm() + w0.fold_disk.radius > model.inner_radius {
        return Err(Error::Precondition("Fold(W) not inside D(0, 1/10)".into()));
    }

    let mut current = w0.clone();
    let mut selection: Vec<u8> = Vec::new();
    let mut umaps: Vec<Series2> = Vec::new();

    for _depth in 0..max_depth {
        // loop invariant: the fold set stays in the covering disk
        if current.fold_disk.center.norm() + current.fold_disk.radius > model.inner_radius {
            return Err(Error::check(
                "tangency_hunt",
                "fold disk left D(0, 1/10)",
                model.inner_radius
                    - current.fold_disk.center.norm()
                    - current.fold_disk.radius,
            ));
        }
        let fold = current.fold_disk.center;
        let (j, _margin) = model.select(fold).ok_or_else(|| {
            Error::check(
                "tangency_hunt",
                format!("fold {fold} left the covering region"),
                -1.0,
            )
        })?;
        let (next, umap) = fold_transport_with_map(p, &current, j)?;
        selection.push((j + 1) as u8);
        umaps.push(umap);
        current = next;
    }

    // deepest fold point in surface parameters
    let probe = QuasiPlane::constant((1, 3), C::new(0.0, 0.0));
    let deep_slice = slice_surface(&current, &probe)?;
    let v_deep = deep_slice.tangent(deep_slice.ram);
    let mut u_star = deep_slice.gamma[1].eval(deep_slice.ram);
    let zeta_star = deep_slice.ram;

    // walk the parameter maps back to the original surface
    for umap in umaps.iter().rev() {
        u_star = umap.eval(u_star, zeta_star);
    }
    let point = w0.eval(u_star, zeta_star);
    let (tu, tz) = w0.tangents(u_star, zeta_star);

    // unstable direction at the accumulated point: the local unstable graph
    // of the anchor itinerary, built by the (stable) graph transform
    let depth = selection.len();
    let mut word: Vec<u8> = Vec::with_capacity(2 * depth);
    for &j in selection.iter().rev() {
        let pair = model.pairs[(j - 1) as usize];
        word.push(pair.0);
        word.push(pair.1);
    }
    let graph = crate::horseshoe::local_unstable(p, &word, 20, 1e-10, 6)?;
    let unstable_tangent = {
        let t = graph.tangent(point[0]);
        let n = c3_norm(t);
        c3_scale(C::new(1.0 / n, 0.0), t)
    };

    let angle_residual = plane_angle(unstable_tangent, tu, tz);
    let ucone = UnstableCone::from_profile(profile);
    if !ucone.member(unstable_tangent) {
        return Err(Error::check(
            "tangency_hunt",
            "unstable tangent left the cone",
            -1.0,
        ));
    }
    if angle_residual > tol {
        return Err(Error::check(
            "tangency_hunt",
            "angle residual above tolerance",
            tol - angle_residual,
        ));
    }
    let anchor = Itinerary::new(vec![word[word.len() - 1]], word.clone())?;

    Ok(TangencyWitness {
        point,
        surface_tangent: v_deep,
        unstable_tangent,
        angle_residual,
        selection_word: selection,
        anchor_itinerary: anchor,
        depth,
    })
}

/// Sine of the angle between `v` and the plane spanned by `a`, `b`
/// (Hermitian least squares).
pub fn plane_angle(v: C3, a: C3, b: C3) -> f64 {
    // project v onto span{a, b}: solve the 2x2 normal equations
    let aa = c3_dot(a, a);
    let ab = c3_dot(a, b);
    let bb = c3_dot(b, b);
    let va = c3_dot(v, a);
    let vb = c3_dot(v, b);
    let det = aa * bb - ab * ab.conj();
    if det.norm() < 1e-300 {
        return 1.0;
    }
    let ca = (va * bb - vb * ab) / det;
    let cb = (aa * vb - ab.conj() * va) / det;
    let proj = crate::linalg3::c3_add(c3_scale(ca, a), c3_scale(cb, b));
    c3_norm(c3_sub(v, proj)) / c3_norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;
    use crate::profile::RigorProfile;

    fn series_curve<F: FnMut(C) -> C3>(mut f: F) -> [Series1; 3] {
        let n = 32;
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        let mut s3 = Vec::new();
        for k in 0..n {
            let t = C::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
            let p = f(t);
            s1.push(p[0]);
            s2.push(p[1]);
            s3.push(p[2]);
        }
        [
            crate::blender::series_from_unit_circle(&s1),
            crate::blender::series_from_unit_circle(&s2),
            crate::blender::series_from_unit_circle(&s3),
        ]
    }

    #[test]
    fn parabola_fold_at_zero() {
        let gamma = series_curve(|w| [w, c(0.0, 0.0), w * w]);
        let (fold, ram) = fold_of_curve(&gamma, 3).unwrap();
        assert!(fold.norm() < 1e-12);
        assert!(ram.norm() < 1e-12);
    }

    #[test]
    fn shifted_parabola_fold() {
        let gamma = series_curve(|w| {
            let s = w - c(0.3, 0.0);
            [w, c(0.0, 0.0), s * s + c(0.05, 0.0)]
        });
        let (fold, ram) = fold_of_curve(&gamma, 3).unwrap();
        assert!((fold - c(0.05, 0.0)).norm() < 1e-10, "fold {fold}");
        assert!((ram - c(0.3, 0.0)).norm() < 1e-10, "ram {ram}");
    }

    #[test]
    fn cubic_is_rejected() {
        let gamma = series_curve(|w| [w, c(0.0, 0.0), w * w * w]);
        assert!(fold_of_curve(&gamma, 3).is_err());
        assert!(validate_folded_curve(gamma, 3).is_err());
    }

    #[test]
    fn degree_counting() {
        // graph over z1: degree 1 over axis 1
        let graph = series_curve(|w| [w, c(0.1, 0.0) * w, c(0.0, 0.0)]);
        assert_eq!(
            curve_degree(&graph, 1, &[c(0.0, 0.0), c(0.3, 0.2)]).unwrap(),
            1
        );
        // (w^2, 0, w): a 2-cover over z1, degree 1 over z3
        let two = series_curve(|w| [w * w, c(0.0, 0.0), w]);
        assert_eq!(curve_degree(&two, 1, &[c(0.1, 0.05)]).unwrap(), 2);
        assert_eq!(curve_degree(&two, 3, &[c(0.1, 0.05)]).unwrap(), 1);
    }

    #[test]
    fn product_intersection_count() {
        // degree-2 horizontal curve against a vertical line in D^2:
        // z2 = u, z3 = u^2: intersect with z3 = w0 has two solutions
        let two = series_curve(|w| [c(0.0, 0.0), w, w * w]);
        let d = curve_degree(&two, 3, &[c(0.2, 0.1), c(-0.1, 0.3)]).unwrap();
        assert_eq!(d, 2);
    }

    #[test]
    fn synthetic_surface_slices_and_folds() {
        let profile = RigorProfile::demo();
        let w = synthetic_folded_surface(
            c(0.3, 0.1),
            c(1e-9, 0.0),
            c(2e-9, 1e-9),
            c(0.03, -0.02),
            c(1.6, 0.0),
            c(0.05, 0.02),
            c(0.03, 0.0),
            c(1e-6, 0.0),
            &profile,
        )
        .unwrap();
        assert!(w.concentrated, "fold disk {:?}", w.fold_disk);
        assert!(w.pr1_diam < profile.pr1_diam);
        assert!((w.fold_disk.center - c(0.03, -0.02)).norm() < 1e-4);

        // slicing by the plane z2 = 0.5 hits the analytic fold formula
        let plane = QuasiPlane::constant((1, 3), c(0.5, 0.0));
        let curve = slice_surface(&w, &plane).unwrap();
        let expect = c(0.03, -0.02) + c(1e-6, 0.0) * c(0.5, 0.0);
        let fold = curve.gamma[2].eval(curve.ram);
        assert!((fold - expect).norm() < 1e-8, "fold {fold} vs {expect}");
        // slope dichotomy away from the fold
        assert!(slope_dichotomy_holds(&curve, 1e-6));
    }

    #[test]
    fn nearby_planes_move_fold_little() {
        let profile = RigorProfile::demo();
        let w = synthetic_folded_surface(
            c(-0.2, 0.4),
            c(0.0, 1e-9),
            c(1e-9, 0.0),
            c(0.01, 0.04),
            c(1.5, 0.1),
            c(0.0, 0.0),
            c(0.08, 0.0),
            c(5e-7, 0.0),
            &profile,
        )
        .unwrap();
        let drift = fold_drift_measure(&w, 4).unwrap();
        assert!(drift < profile.fold_drift, "drift {drift}");
    }

    #[test]
    fn pipeline_transport_and_hunt() {
        use crate::coeffs::build_coeffs;
        use crate::map3::MapParams;
        let profile = RigorProfile::demo();
        let setup = crate::quad::build_setup(&profile).unwrap();
        let coeffs = build_coeffs(&setup).unwrap();
        let sigma = c(5e-10, 0.0);
        let p = MapParams::from_pipeline(&setup, &coeffs, sigma * sigma, sigma).unwrap();
        let w = synthetic_folded_surface(
            c(0.02, 0.01),
            c(1e-9, 0.0),
            c(1e-9, 1e-9),
            c(0.04, -0.03),
            c(1.6, 0.0),
            c(0.05, 0.02),
            c(0.02, 0.0),
            c(5e-7, 0.0),
            &profile,
        )
        .unwrap();
        // one transport: fold moves to the model-predicted disk and the
        // surface re-concentrates with a collapsed first coordinate
        let model = crate::blender::BlenderModel::from_params(&p).unwrap();
        let t = fold_transport(&p, &w, 0).unwrap();
        assert!(t.concentrated);
        assert!(t.pr1_diam < 1e-12);
        let predicted = w.fold_disk.center / model.mu2qr - model.c_eff[0];
        assert!(
            (t.fold_disk.center - predicted).norm()
                < profile.fold_transport_radius + 1e-5,
            "fold {} vs predicted {predicted}",
            t.fold_disk.center
        );
        // transport preserves the double cover over the fold axis
        let probe = QuasiPlane::constant((1, 3), c(0.0, 0.0));
        let slice = slice_surface(&t, &probe).unwrap();
        assert_eq!(
            curve_degree(&slice.gamma, 3, &[t.fold_disk.center + c(0.02, 0.0)]).unwrap(),
            2
        );

        // the hunt terminates with a small angle residual and in-cone tangent
        let wit = tangency_hunt(&p, &w, 5, 1e-5).unwrap();
        assert!(wit.angle_residual < 1e-5, "angle {}", wit.angle_residual);
        assert_eq!(wit.depth, 5);
        let ucone = UnstableCone::from_profile(&profile);
        assert!(ucone.member(wit.unstable_tangent));
        // witness serializes
        let s = crate::jsonio::to_json_17(&wit).unwrap();
        assert!(s.contains("selection_word"));
    }

    #[test]
    fn quasi_plane_oscillation_guard() {
        let tilted = Series2::from_fn(8, 1.0, 1.0, |u, v| u * c(0.4, 0.0) + v * c(0.2, 0.0));
        assert!(QuasiPlane::new((1, 3), tilted, 1e-4).is_err());
        let flat = Series2::from_fn(8, 1.0, 1.0, |u, v| {
            c(0.3, 0.0) + u * c(1e-5, 0.0) + v * c(1e-5, 0.0)
        });
        let q = QuasiPlane::new((1, 3), flat, 1e-4).unwrap();
        assert!(q.oscillation < 1e-4);
    }
}
