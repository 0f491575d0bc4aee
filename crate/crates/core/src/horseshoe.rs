//! Cone fields, two-branch horseshoe certification, symbolic dynamics and
//! local invariant manifolds for the qr-block map `F = f^{qr}`.
//!
//! Certification is grid-sampled but per-point exact: at each sample the cone
//! images are bounded by extremal inequalities on the Jacobian chain, not by
//! probing finitely many cone vectors. Backward quantities are always read
//! off forward-computed orbits, never by iterating the closed-form inverse.

use crate::disk::{ComplexDisk, PolyDisk3};
use crate::interp::{Series1, Series2};
use crate::linalg3::{c3_norm, c3_sub, ScaledM3, C3};
use crate::map3::{f_apply, f_inverse_jacobian, f_jacobian, MapParams};
use crate::profile::RigorProfile;
use crate::{Error, Result, C};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Constant cone with one dominant axis:
/// `max over non-dominant |v_i| <= aperture * |v_dominant|`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConeSpec {
    pub dominant_axis: usize,
    pub aperture: f64,
}

impl ConeSpec {
    pub fn new(dominant_axis: usize, aperture: f64) -> Result<Self> {
        if !(1..=3).contains(&dominant_axis) {
            return Err(Error::Precondition("cone axis must be 1, 2 or 3".into()));
        }
        if !(aperture > 0.0) {
            return Err(Error::Precondition("cone aperture must be positive".into()));
        }
        Ok(ConeSpec {
            dominant_axis,
            aperture,
        })
    }
}

/// Membership with slack `aperture |v_dom| - max other`.
pub fn cone_member(v: C3, cone: &ConeSpec) -> Result<(bool, f64)> {
    if c3_norm(v) == 0.0 {
        return Err(Error::Precondition("zero vector has no cone side".into()));
    }
    let dom = v[cone.dominant_axis - 1].norm();
    let mut other: f64 = 0.0;
    for (i, z) in v.iter().enumerate() {
        if i != cone.dominant_axis - 1 {
            other = other.max(z.norm());
        }
    }
    let slack = cone.aperture * dom - other;
    Ok((slack >= 0.0, slack))
}

/// Anisotropic unstable cone `|v2| <= a2 |v1|, |v3| <= a3 |v1|`. The z2 slot
/// of an image vector carries the previous z1 component, so its aperture is
/// bounded below by the reciprocal one-step expansion and cannot be made
/// small; the z3 slot stays lambda-small.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UnstableCone {
    pub a2: f64,
    pub a3: f64,
}

impl UnstableCone {
    pub fn from_profile(profile: &RigorProfile) -> Self {
        UnstableCone {
            a2: profile.cone_u_z2_aperture,
            a3: profile.cone_u_z3_aperture,
        }
    }

    pub fn member(&self, v: C3) -> bool {
        v[1].norm() <= self.a2 * v[0].norm() && v[2].norm() <= self.a3 * v[0].norm()
    }
}

/// Row-wise extremal bounds for images of the cone
/// `{(v1, u2 v1, u3 v1) : |u2| <= a2, |u3| <= a3}` under the scaled matrix:
/// per row `|w_i| / |v1|` lies in
/// `[ |M_i1| - a2|M_i2| - a3|M_i3|, |M_i1| + a2|M_i2| + a3|M_i3| ]`
/// (times `2^exp`).
fn cone_image_rows(m: &ScaledM3, a2: f64, a3: f64) -> [(f64, f64); 3] {
    let mut out = [(0.0, 0.0); 3];
    for i in 0..3 {
        let base = m.mat.0[i][0].norm();
        let spread = a2 * m.mat.0[i][1].norm() + a3 * m.mat.0[i][2].norm();
        out[i] = ((base - spread).max(0.0), base + spread);
    }
    out
}

/// Same bounds for a cone dominant in axis 2.
fn cone_image_rows_axis2(m: &ScaledM3, a1: f64, a3: f64) -> [(f64, f64); 3] {
    let mut out = [(0.0, 0.0); 3];
    for i in 0..3 {
        let base = m.mat.0[i][1].norm();
        let spread = a1 * m.mat.0[i][0].norm() + a3 * m.mat.0[i][2].norm();
        out[i] = ((base - spread).max(0.0), base + spread);
    }
    out
}

/// Per-item worst margins of a certificate (positive = pass).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorseshoeMargins {
    /// (1) image components avoid D x boundary(D x D)
    pub boundary_u: f64,
    /// (2) preimage components avoid boundary(D) x D x D
    pub boundary_s: f64,
    /// (3) C^u forward invariance
    pub cone_u: f64,
    /// (3) C^ss backward invariance
    pub cone_ss: f64,
    /// (4) expansion above C_F on both cones (log2 margin)
    pub expansion: f64,
    /// (4) two-sided bound on the transported center direction
    pub cs_two_sided: f64,
}

impl HorseshoeMargins {
    pub fn worst(&self) -> (&'static str, f64) {
        [
            ("boundary_u", self.boundary_u),
            ("boundary_s", self.boundary_s),
            ("cone_u", self.cone_u),
            ("cone_ss", self.cone_ss),
            ("expansion", self.expansion),
            ("cs_two_sided", self.cs_two_sided),
        ]
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorseshoeWitness {
    #[serde(with = "crate::jsonio::complex3")]
    pub point: C3,
    pub item: String,
}

/// Certificate for the two-branch horseshoe of `f^{power}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorseshoeCert {
    pub p: usize,
    pub power: usize,
    /// Per branch: (D^{j,u} enclosure, D^{j,s} enclosure).
    pub component_boxes: Vec<(PolyDisk3, PolyDisk3)>,
    /// Minimal certified expansion constant over both cones.
    pub expansion_constant: f64,
    pub sample_count: usize,
    pub grid_per_axis: usize,
    pub margins: HorseshoeMargins,
    pub verdict: bool,
    pub witness: Option<HorseshoeWitness>,
    pub profile: RigorProfile,
}

/// Solve `pr1 f^{power}(z1, y2, y3) = target` for `z1` on the given branch
/// (Newton seeded by the one-dimensional pullback).
pub fn branch_z1_solve(p: &MapParams, branch: u8, target: C, y2: C, y3: C) -> Result<C> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    let power = setup.q * setup.r;
    let mut z1 = setup.pull_back_point(target, &vec![branch; setup.q]);
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

/// Boundary-biased deterministic sample list for one disk axis.
fn axis_samples(n: usize, phase: f64) -> Vec<C> {
    let golden = 2.399963229728653;
    (0..n)
        .map(|k| {
            let t = k as f64 / (n.max(2) - 1) as f64;
            let r = t.powf(0.35);
            let th = golden * k as f64 + phase;
            C::from_polar(r, th)
        })
        .collect()
}

struct PointCheck {
    zeta1: C,
    image: C3,
    cone_u: f64,
    cone_ss: f64,
    expansion_margin: f64,
    expansion_log2: f64,
    cs_two_sided: f64,
}

fn check_point(
    p: &MapParams,
    power: usize,
    ucone: &UnstableCone,
    ss_aperture: f64,
    cf_min: f64,
    zeta: C3,
) -> Result<PointCheck> {
    // forward chain
    let mut fwd = ScaledM3::identity();
    let mut pts = Vec::with_capacity(power + 1);
    let mut x = zeta;
    pts.push(x);
    for _ in 0..power {
        fwd.left_mul(&f_jacobian(p, x));
        x = f_apply(p, x);
        pts.push(x);
    }
    let scale = (2.0f64).powi(fwd.exp as i32);

    // C^u invariance and expansion
    let rows = cone_image_rows(&fwd, ucone.a2, ucone.a3);
    let w1_min = rows[0].0;
    let cone_u = if w1_min > 0.0 {
        ((ucone.a2 * w1_min - rows[1].1) / (ucone.a2 * w1_min))
            .min((ucone.a3 * w1_min - rows[2].1) / (ucone.a3 * w1_min))
    } else {
        -1.0
    };
    let vnorm_max = (1.0 + ucone.a2 * ucone.a2 + ucone.a3 * ucone.a3).sqrt();
    let expansion_u_log2 = (w1_min / vnorm_max).log2() + fwd.exp as f64;

    // backward chain anchored at the image, built from the forward orbit
    let mut bwd = ScaledM3::identity();
    for w in pts.iter().skip(1).rev() {
        bwd.left_mul(&f_inverse_jacobian(p, *w)?);
    }
    let rows_ss = cone_image_rows_axis2(&bwd, ss_aperture, ss_aperture);
    let u2_min = rows_ss[1].0;
    let cone_ss = if u2_min > 0.0 {
        ((ss_aperture * u2_min - rows_ss[0].1) / (ss_aperture * u2_min))
            .min((ss_aperture * u2_min - rows_ss[2].1) / (ss_aperture * u2_min))
    } else {
        -1.0
    };
    let ssnorm_max = (1.0 + 2.0 * ss_aperture * ss_aperture).sqrt();
    let expansion_ss_log2 = (u2_min / ssnorm_max).log2() + bwd.exp as f64;

    let expansion_log2 = expansion_u_log2.min(expansion_ss_log2);
    let expansion_margin = expansion_log2 - cf_min.log2();

    // center direction: transport e3 forward and project out the unstable
    // part; the block multiplier kappa must satisfy 1 < 1/|kappa| < 2
    let eu = [fwd.mat.0[0][0], fwd.mat.0[1][0], fwd.mat.0[2][0]];
    let w3 = [fwd.mat.0[0][2], fwd.mat.0[1][2], fwd.mat.0[2][2]];
    let cs_mult = if eu[0].norm() > 0.0 {
        ((w3[2] - (w3[0] / eu[0]) * eu[2]) * scale).norm()
    } else {
        f64::INFINITY
    };
    let cs_two_sided = (1.0 - cs_mult).min(cs_mult - 0.5);

    Ok(PointCheck {
        zeta1: zeta[0],
        image: x,
        cone_u,
        cone_ss,
        expansion_margin,
        expansion_log2,
        cs_two_sided,
    })
}

/// Certify the two-branch horseshoe of `f^{power}` on the closed unit
/// tridisk by boundary-biased grid sampling (`grid_per_axis` per axis).
pub fn verify_horseshoe(
    p: &MapParams,
    power: usize,
    grid_per_axis: usize,
) -> Result<HorseshoeCert> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    if power != setup.q * setup.r {
        return Err(Error::Precondition(format!(
            "power {power} is not the setup block length {}",
            setup.q * setup.r
        )));
    }
    if p.b.norm() == 0.0 {
        return Err(Error::Precondition("b = 0 is not an automorphism".into()));
    }
    let profile = &p.profile;
    let ucone = UnstableCone::from_profile(profile);
    let ss_ap = profile.cone_aperture;
    let n = grid_per_axis.max(4);

    let t_samples = axis_samples(n, 0.0);
    let y2_samples = axis_samples(n, 1.1);
    let y3_samples = axis_samples(n, 2.3);

    let mut margins = HorseshoeMargins {
        boundary_u: f64::INFINITY,
        boundary_s: f64::INFINITY,
        cone_u: f64::INFINITY,
        cone_ss: f64::INFINITY,
        expansion: f64::INFINITY,
        cs_two_sided: f64::INFINITY,
    };
    let mut witness: Option<HorseshoeWitness> = None;
    let mut boxes = Vec::new();
    let mut cf_log2 = f64::INFINITY;
    let mut samples_total = 0usize;

    for branch in [1u8, 2u8] {
        let results: Vec<Result<PointCheck>> = t_samples
            .par_iter()
            .flat_map_iter(|&t| {
                let y2s = y2_samples.clone();
                let y3s = y3_samples.clone();
                y2s.into_iter().flat_map(move |y2| {
                    let y3s = y3s.clone();
                    y3s.into_iter().map(move |y3| {
                        let z1 = branch_z1_solve(p, branch, t, y2, y3)?;
                        check_point(p, power, &ucone, ss_ap, profile.cf_min, [z1, y2, y3])
                    })
                })
            })
            .collect();

        let mut z1s = Vec::with_capacity(results.len());
        let mut w2s = Vec::with_capacity(results.len());
        let mut w3s = Vec::with_capacity(results.len());
        for r in results {
            let pc = r?;
            samples_total += 1;
            z1s.push(pc.zeta1);
            w2s.push(pc.image[1]);
            w3s.push(pc.image[2]);
            let b_u = 1.0 - pc.image[1].norm().max(pc.image[2].norm());
            let b_s = 1.0 - pc.zeta1.norm();
            let items = [
                ("boundary_u", b_u),
                ("boundary_s", b_s),
                ("cone_u", pc.cone_u),
                ("cone_ss", pc.cone_ss),
                ("expansion", pc.expansion_margin),
                ("cs_two_sided", pc.cs_two_sided),
            ];
            for (name, value) in items {
                let slot = match name {
                    "boundary_u" => &mut margins.boundary_u,
                    "boundary_s" => &mut margins.boundary_s,
                    "cone_u" => &mut margins.cone_u,
                    "cone_ss" => &mut margins.cone_ss,
                    "expansion" => &mut margins.expansion,
                    _ => &mut margins.cs_two_sided,
                };
                if value < *slot {
                    *slot = value;
                    if value < 0.0 && witness.is_none() {
                        witness = Some(HorseshoeWitness {
                            point: [pc.zeta1, pc.image[1], pc.image[2]],
                            item: name.into(),
                        });
                    }
                }
            }
            cf_log2 = cf_log2.min(pc.expansion_log2);
        }

        let slack = profile.enclosure_slack;
        let d_u = PolyDisk3::new(
            ComplexDisk::unit(),
            ComplexDisk::enclose_points(&w2s, slack),
            ComplexDisk::enclose_points(&w3s, slack),
        );
        let d_s = PolyDisk3::new(
            ComplexDisk::enclose_points(&z1s, slack),
            ComplexDisk::unit(),
            ComplexDisk::unit(),
        );
        boxes.push((d_u, d_s));
    }

    let verdict = margins.worst().1 >= 0.0;
    Ok(HorseshoeCert {
        p: 2,
        power,
        component_boxes: boxes,
        expansion_constant: (2.0f64).powf(cf_log2),
        sample_count: samples_total,
        grid_per_axis: n,
        margins,
        verdict,
        witness,
        profile: profile.clone(),
    })
}

/// Bi-infinite branch itinerary: the finite word `past ++ future` repeats
/// periodically in both directions, with the present at position `past.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Itinerary {
    pub past: Vec<u8>,
    pub future: Vec<u8>,
}

impl Itinerary {
    pub fn new(past: Vec<u8>, future: Vec<u8>) -> Result<Self> {
        if past.is_empty() || future.is_empty() {
            return Err(Error::Precondition(
                "itinerary needs nonempty past and future".into(),
            ));
        }
        if past.iter().chain(future.iter()).any(|&s| s != 1 && s != 2) {
            return Err(Error::Precondition("branch symbols are 1 or 2".into()));
        }
        Ok(Itinerary { past, future })
    }

    pub fn word(&self) -> Vec<u8> {
        let mut w = self.past.clone();
        w.extend_from_slice(&self.future);
        w
    }

    pub fn phase(&self) -> usize {
        self.past.len()
    }
}

/// Periodic orbit of `f^{power}` with the prescribed branch word, one point
/// per block. Structured sweeps: the expanding coordinate is solved backward
/// along branches, the strongly stable one propagated forward, and the z3
/// fiber closed by a cyclic geometric solve.
pub fn periodic_block_orbit(p: &MapParams, word: &[u8]) -> Result<Vec<C3>> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    let power = setup.q * setup.r;
    let n = word.len();
    if n == 0 {
        return Err(Error::Precondition("empty block word".into()));
    }

    // 1D z1 cycle by backward-cyclic pullback
    let mut x1: Vec<C> = word.iter().map(|&w| setup.branch_anchor(w)).collect();
    for _ in 0..200 {
        let mut delta: f64 = 0.0;
        for k in (0..n).rev() {
            let target = x1[(k + 1) % n];
            let new = setup.pull_back_point(target, &vec![word[k]; setup.q]);
            delta = delta.max((new - x1[k]).norm());
            x1[k] = new;
        }
        if delta < 1e-15 {
            break;
        }
    }

    let quad = p.quad();
    let mut z: Vec<C3> = Vec::with_capacity(n);
    for k in 0..n {
        let prev = x1[(k + n - 1) % n];
        let z2 = quad.iter(prev, power - 1);
        z.push([x1[k], z2, C::new(0.0, 0.0)]);
    }

    let mu_block = p.mu.powi(power as i32);
    for sweep in 0..60 {
        // forward images and affine fiber parts
        let mut tparts = Vec::with_capacity(n);
        for zk in z.iter() {
            let mut x = *zk;
            for _ in 0..power {
                x = f_apply(p, x);
            }
            tparts.push(x[2] - mu_block * zk[2]);
        }
        // cyclic z3 solve: z3_{k+1} = mu^power z3_k + T_k
        let denom = C::new(1.0, 0.0) - mu_block.powi(n as i32);
        if denom.norm() < 1e-8 {
            return Err(Error::SingularSystem(
                "fiber monodromy too close to 1 for the cyclic solve".into(),
            ));
        }
        let mut acc = C::new(0.0, 0.0);
        for k in 0..n {
            acc = acc * mu_block + tparts[k];
        }
        let mut z3 = acc / denom;
        let mut new_z = z.clone();
        for k in 0..n {
            new_z[k][2] = z3;
            z3 = mu_block * z3 + tparts[k];
        }
        // strongly stable coordinate forward
        let mut pen = Vec::with_capacity(n);
        for zk in new_z.iter() {
            let mut x = *zk;
            for _ in 0..(power - 1) {
                x = f_apply(p, x);
            }
            pen.push(x[0]);
        }
        for k in 0..n {
            new_z[k][1] = pen[(k + n - 1) % n];
        }
        // expanding coordinate backward
        for k in 0..n {
            let target = new_z[(k + 1) % n][0];
            let z1 = branch_z1_solve(p, word[k], target, new_z[k][1], new_z[k][2])?;
            new_z[k][0] = z1;
        }
        let moved = z
            .iter()
            .zip(new_z.iter())
            .map(|(a, b)| c3_norm(c3_sub(*a, *b)))
            .fold(0.0f64, f64::max);
        z = new_z;
        if moved < 1e-14 && sweep > 1 {
            break;
        }
    }
    Ok(z)
}

/// Block residual `max_k |f^{power}(Z_k) - Z_{k+1}|`. The raw residual
/// carries one block of expansion; position uncertainty is this divided by
/// the certified expansion constant.
pub fn block_orbit_residual(p: &MapParams, orbit: &[C3]) -> f64 {
    let power = p.qr();
    let n = orbit.len();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let mut x = orbit[k];
        for _ in 0..power {
            x = f_apply(p, x);
        }
        worst = worst.max(c3_norm(c3_sub(x, orbit[(k + 1) % n])));
    }
    worst
}

/// The horseshoe point with the prescribed itinerary, located through the
/// periodic-orbit solve of the repeating word; `tol` bounds the block
/// residual.
pub fn point_from_itinerary(p: &MapParams, it: &Itinerary, tol: f64) -> Result<C3> {
    let word = it.word();
    let orbit = periodic_block_orbit(p, &word)?;
    let residual = block_orbit_residual(p, &orbit);
    if residual > tol {
        return Err(Error::NonConvergence {
            iters: word.len(),
            residual,
        });
    }
    Ok(orbit[it.phase() % word.len()])
}

/// Read back the branch word of a block orbit from the z1 coordinates.
pub fn read_back_word(p: &MapParams, orbit: &[C3]) -> Result<Vec<u8>> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    Ok(orbit
        .iter()
        .map(|z| {
            let d1 = (z[0] - setup.d1.center).norm();
            let d2 = (z[0] - setup.d2.center).norm();
            if d1 < d2 {
                1u8
            } else {
                2u8
            }
        })
        .collect())
}

/// Local unstable manifold: a graph `(z1, u2(z1), u3(z1))` over the unit disk.
#[derive(Debug, Clone)]
pub struct UnstableGraph {
    pub u2: Series1,
    pub u3: Series1,
    pub word: Vec<u8>,
}

impl UnstableGraph {
    pub fn eval(&self, t: C) -> C3 {
        [t, self.u2.eval(t), self.u3.eval(t)]
    }

    pub fn tangent(&self, t: C) -> C3 {
        [
            C::new(1.0, 0.0),
            self.u2.deriv().eval(t),
            self.u3.deriv().eval(t),
        ]
    }
}

/// One unstable graph-transform block: push the graph through `f^{power}`
/// along the given branch and resample over the unit circle.
fn unstable_block_transform(
    p: &MapParams,
    power: usize,
    branch: u8,
    u2: &Series1,
    u3: &Series1,
    n_interp: usize,
) -> Result<(Series1, Series1)> {
    let setup = p.setup.as_ref().unwrap();
    let du2 = u2.deriv();
    let du3 = u3.deriv();
    let mut samples2 = Vec::with_capacity(n_interp);
    let mut samples3 = Vec::with_capacity(n_interp);
    for j in 0..n_interp {
        let th = 2.0 * std::f64::consts::PI * j as f64 / n_interp as f64;
        let tp = C::from_polar(1.0, th);
        let mut t = setup.pull_back_point(tp, &vec![branch; setup.q]);
        let mut image = [C::new(0.0, 0.0); 3];
        for _ in 0..10 {
            let mut x = [t, u2.eval(t), u3.eval(t)];
            let mut v = [C::new(1.0, 0.0), du2.eval(t), du3.eval(t)];
            for _ in 0..power {
                let j = f_jacobian(p, x);
                v = j.mul_vec(v);
                x = f_apply(p, x);
            }
            image = x;
            let res = x[0] - tp;
            if v[0].norm() < 1e-300 {
                return Err(Error::DegenerateDerivative {
                    deriv: 0.0,
                    threshold: 1e-300,
                });
            }
            let step = res / v[0];
            t -= step;
            if step.norm() < 1e-16 {
                break;
            }
        }
        samples2.push(image[1]);
        samples3.push(image[2]);
    }
    // assemble series from the circle samples
    let s2 = series_from_circle(&samples2);
    let s3 = series_from_circle(&samples3);
    Ok((s2, s3))
}

fn series_from_circle(vals: &[C]) -> Series1 {
    let n = vals.len();
    let mut coeffs = vec![C::new(0.0, 0.0); n];
    for (k, slot) in coeffs.iter_mut().enumerate() {
        let mut s = C::new(0.0, 0.0);
        for (j, &v) in vals.iter().enumerate() {
            let th = -2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64;
            s += v * C::new(th.cos(), th.sin());
        }
        *slot = s / n as f64;
    }
    Series1 {
        coeffs,
        radius: 1.0,
    }
}

/// Graph transform for the unstable manifold of the periodic word orbit,
/// iterated until the sup change over probes drops below `tol`.
pub fn local_unstable(
    p: &MapParams,
    word: &[u8],
    n_interp: usize,
    tol: f64,
    max_cycles: usize,
) -> Result<UnstableGraph> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    let power = setup.q * setup.r;
    let orbit = periodic_block_orbit(p, word)?;
    let n = word.len();

    let mut graphs: Vec<(Series1, Series1)> = orbit
        .iter()
        .map(|z| (Series1::constant(z[1], 1.0), Series1::constant(z[2], 1.0)))
        .collect();

    for _cycle in 0..max_cycles {
        let mut change: f64 = 0.0;
        for k in 0..n {
            let (u2, u3) = graphs[k].clone();
            let (new2, new3) =
                unstable_block_transform(p, power, word[k], &u2, &u3, n_interp)?;
            let next = (k + 1) % n;
            let probe = C::new(0.37, 0.21);
            change = change
                .max((new2.eval(probe) - graphs[next].0.eval(probe)).norm())
                .max((new3.eval(probe) - graphs[next].1.eval(probe)).norm());
            graphs[next] = (new2, new3);
        }
        if change < tol {
            break;
        }
    }

    let (u2, u3) = graphs[0].clone();
    Ok(UnstableGraph {
        u2,
        u3,
        word: word.to_vec(),
    })
}

/// Local stable manifold graph `z1 = s(z2, z3)` over the unit bidisk.
#[derive(Debug, Clone)]
pub struct StableGraph {
    pub s1: Series2,
    pub word: Vec<u8>,
}

impl StableGraph {
    pub fn eval(&self, y2: C, y3: C) -> C3 {
        [self.s1.eval(y2, y3), y2, y3]
    }
}

/// Graph transform for the stable manifold of the periodic word orbit
/// (the backward transform realized by forward solves).
pub fn local_stable(
    p: &MapParams,
    word: &[u8],
    n_interp: usize,
    tol: f64,
    max_cycles: usize,
) -> Result<StableGraph> {
    let setup = p
        .setup
        .as_ref()
        .ok_or_else(|| Error::Precondition("map has no pipeline setup".into()))?;
    let power = setup.q * setup.r;
    let orbit = periodic_block_orbit(p, word)?;
    let n = word.len();

    let mut graphs: Vec<Series2> = orbit
        .iter()
        .map(|z| Series2::from_fn(n_interp, 1.0, 1.0, |_, _| z[0]))
        .collect();

    for _cycle in 0..max_cycles {
        let mut change: f64 = 0.0;
        for k in (0..n).rev() {
            let target = graphs[(k + 1) % n].clone();
            let anchor1 = orbit[k][0];
            let new = Series2::from_fn(n_interp, 1.0, 1.0, |y2, y3| {
                let mut z1 = anchor1;
                for _ in 0..14 {
                    let mut x = [z1, y2, y3];
                    let mut v = [C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)];
                    for _ in 0..power {
                        let j = f_jacobian(p, x);
                        v = j.mul_vec(v);
                        x = f_apply(p, x);
                    }
                    let (g2, g3) = target.grad(x[1], x[2]);
                    let res = x[0] - target.eval(x[1], x[2]);
                    let deriv = v[0] - g2 * v[1] - g3 * v[2];
                    if deriv.norm() < 1e-300 {
                        break;
                    }
                    let step = res / deriv;
                    z1 -= step;
                    if step.norm() < 1e-16 {
                        break;
                    }
                }
                z1
            });
            let probe2 = C::new(0.4, -0.2);
            let probe3 = C::new(-0.3, 0.5);
            change =
                change.max((new.eval(probe2, probe3) - graphs[k].eval(probe2, probe3)).norm());
            graphs[k] = new;
        }
        if change < tol {
            break;
        }
    }

    Ok(StableGraph {
        s1: graphs[0].clone(),
        word: word.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;
    use crate::coeffs::build_coeffs;
    use crate::profile::RigorProfile;
    use crate::quad::build_setup;
    use std::sync::OnceLock;

    pub(crate) fn pipeline() -> &'static MapParams {
        static PIPE: OnceLock<MapParams> = OnceLock::new();
        PIPE.get_or_init(|| {
            let setup = build_setup(&RigorProfile::demo()).unwrap();
            let coeffs = build_coeffs(&setup).unwrap();
            let sigma = c(5e-10, 0.0);
            MapParams::from_pipeline(&setup, &coeffs, sigma * sigma, sigma).unwrap()
        })
    }

    #[test]
    fn cone_membership_examples() {
        let cu = ConeSpec::new(1, 1e-6).unwrap();
        let (ok, _) = cone_member([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], &cu).unwrap();
        assert!(ok);
        let (ok, slack) = cone_member([c(1.0, 0.0), c(1e-6, 0.0), c(0.0, 0.0)], &cu).unwrap();
        assert!(ok && slack.abs() < 1e-18);
        let (ok, _) = cone_member([c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)], &cu).unwrap();
        assert!(!ok);
        assert!(cone_member([c(0.0, 0.0); 3], &cu).is_err());
    }

    #[test]
    fn branch_solve_round_trips() {
        let p = pipeline();
        let power = p.qr();
        for branch in [1u8, 2u8] {
            let t = c(0.3, -0.4);
            let z1 = branch_z1_solve(p, branch, t, c(0.2, 0.1), c(0.05, -0.02)).unwrap();
            let mut x = [z1, c(0.2, 0.1), c(0.05, -0.02)];
            for _ in 0..power {
                x = f_apply(p, x);
            }
            assert!(
                (x[0] - t).norm() < 1e-7,
                "branch {branch}: {}",
                (x[0] - t).norm()
            );
            assert!(z1.norm() < 1.0);
        }
    }

    #[test]
    fn demo_horseshoe_certifies() {
        let p = pipeline();
        let cert = verify_horseshoe(p, p.qr(), 8).unwrap();
        assert!(cert.verdict, "margins: {:?}", cert.margins);
        assert!(cert.expansion_constant > 2.0);
        for (du, ds) in &cert.component_boxes {
            assert!(ds.d1.radius < 0.2, "D^s z1 radius {}", ds.d1.radius);
            assert!(du.d2.radius < 0.5, "D^u z2 radius {}", du.d2.radius);
        }
        let s = crate::jsonio::to_json_17(&cert).unwrap();
        let back: HorseshoeCert = serde_json::from_str(&s).unwrap();
        assert_eq!(back.p, 2);
    }

    #[test]
    fn wrong_power_is_rejected() {
        let p = pipeline();
        assert!(verify_horseshoe(p, p.qr() + 1, 6).is_err());
    }

    #[test]
    fn fixed_point_orbits_from_constant_words() {
        let p = pipeline();
        let setup = p.setup.as_ref().unwrap();
        let orbit = periodic_block_orbit(p, &[1]).unwrap();
        assert!(block_orbit_residual(p, &orbit) < 1e-6);
        assert!((orbit[0][0] - setup.alpha).norm() < 0.05);
        let orbit2 = periodic_block_orbit(p, &[2]).unwrap();
        assert!(block_orbit_residual(p, &orbit2) < 1e-6);
        assert!((orbit2[0][0] - setup.gamma).norm() < 0.05);
    }

    #[test]
    fn period_two_word_and_read_back() {
        let p = pipeline();
        let it = Itinerary::new(vec![1], vec![2]).unwrap();
        let z = point_from_itinerary(p, &it, 1e-5).unwrap();
        let orbit = periodic_block_orbit(p, &[1, 2]).unwrap();
        assert!((z[0] - orbit[1][0]).norm() < 1e-9);
        assert_eq!(read_back_word(p, &orbit).unwrap(), vec![1, 2]);
    }

    #[test]
    fn depth_twenty_round_trip() {
        let p = pipeline();
        let word: Vec<u8> = (0..20)
            .map(|k| if (k * 7 + 3) % 5 < 2 { 1 } else { 2 })
            .collect();
        let orbit = periodic_block_orbit(p, &word).unwrap();
        assert!(block_orbit_residual(p, &orbit) < 1e-5);
        assert_eq!(read_back_word(p, &orbit).unwrap(), word);
    }

    #[test]
    fn unstable_graph_is_invariant_and_coned() {
        let p = pipeline();
        let g = local_unstable(p, &[1], 20, 1e-11, 8).unwrap();
        let power = p.qr();
        for &t in &[c(0.2, 0.1), c(-0.4, 0.3), c(0.6, -0.5)] {
            let mut x = g.eval(t);
            for _ in 0..power {
                x = f_apply(p, x);
            }
            if x[0].norm() <= 1.0 {
                let expect = g.eval(x[0]);
                assert!(
                    (x[1] - expect[1]).norm() + (x[2] - expect[2]).norm() < 1e-7,
                    "invariance drift at t={t}"
                );
            }
        }
        let ucone = UnstableCone::from_profile(&p.profile);
        for k in 0..16 {
            let t = C::from_polar(0.9, 0.4 * k as f64);
            assert!(ucone.member(g.tangent(t)));
        }
    }

    #[test]
    fn stable_graph_is_flat_in_z3_at_tiny_sigma() {
        let p = pipeline();
        let g = local_stable(p, &[1], 10, 1e-11, 6).unwrap();
        let a = g.s1.eval(c(0.3, 0.1), c(0.5, -0.2));
        let b = g.s1.eval(c(0.3, 0.1), c(-0.6, 0.4));
        assert!((a - b).norm() < 1e-6, "z3 dependence {}", (a - b).norm());
        let setup = p.setup.as_ref().unwrap();
        assert!((a - setup.alpha).norm() < 0.05);
    }

    #[test]
    fn stable_graph_invariance() {
        let p = pipeline();
        let g = local_stable(p, &[1], 10, 1e-11, 6).unwrap();
        let power = p.qr();
        for &(y2, y3) in &[(c(0.4, 0.0), c(0.2, 0.3)), (c(-0.5, 0.2), c(0.0, -0.4))] {
            let mut x = g.eval(y2, y3);
            for _ in 0..power {
                x = f_apply(p, x);
            }
            if x[1].norm() < 1.0 && x[2].norm() < 1.0 {
                let expect = g.s1.eval(x[1], x[2]);
                assert!(
                    (x[0] - expect).norm() < 1e-7,
                    "drift {}",
                    (x[0] - expect).norm()
                );
            }
        }
    }
}
