//! Rigor profiles: every numeric threshold of the construction lives here,
//! with two built-in instantiations.
//!
//! The `paper` profile carries the verbatim constants; those margins are not
//! reachable in double precision (they require products of thousands of
//! Jacobians carried to 1e-11), so quantitative pipelines run against the
//! `demo` profile, which keeps the same inequality shapes at double-precision
//! scales. Certificates embed the profile they were checked against.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigorProfile {
    pub name: String,

    // cone fields and covering
    /// Aperture of the constant cone fields C^ss and C^cs.
    pub cone_aperture: f64,
    /// C^u apertures per non-dominant axis: the z2 slot of the image of a
    /// u-vector carries the previous z1 component, so it can only be bounded
    /// by the reciprocal one-step expansion; the z3 slot stays lambda-small.
    pub cone_u_z2_aperture: f64,
    pub cone_u_z3_aperture: f64,
    /// Third-coordinate window target: the translation constant 9/10 * 1e-4.
    pub window_center: f64,
    /// Radius of the third-coordinate window (the z3-sum enclosure).
    pub window_radius: f64,
    /// Radius of the covering region D(0, 1/10).
    pub covering_inner_radius: f64,
    /// Covering slack: images must land in D(0, 1/10 - slack).
    pub covering_slack: f64,
    /// Checked bound for |pr3(g_j z) - (z3/mu^{2qr} - c_j)|.
    pub contract_radius: f64,
    /// Checked bound for the one-block model |pr3(f^{qr} z) - (mu^{qr} z3 +- w)|.
    pub block_window_radius: f64,

    // one-dimensional setup
    /// Required gap |A - B|.
    pub gap_min: f64,
    /// Required branch-derivative scale: C_j = 1/sup|（h_j^q)'| must exceed this.
    pub c_min: f64,
    /// diam(h_j^q(D')) <= diam_ratio * dist(h_j^q(D'), boundary of D).
    pub diam_ratio: f64,
    /// Weighted orbit sums must stay within this fraction of |A-B| of A resp. B.
    pub orbit_window_factor: f64,
    /// Orbit-sum windows must hold for n up to at least this fraction of qr.
    pub orbit_window_frac: f64,
    /// rad(B)/rad(B') for the disk around alpha.
    pub inner_disk_ratio: f64,
    /// rad(B'')/rad(B').
    pub middle_disk_ratio: f64,
    /// Caps for the (r, q) searches.
    pub r_max: u32,
    pub q_max: u32,
    /// delta multiplier window: |mult| in (1, (1 + delta_window)^{1/qr}).
    pub delta_window: f64,
    /// Preperiod of the Misiurewicz anchor.
    pub misiurewicz_m: u32,
    /// Newton seed for the anchor (re, im).
    pub misiurewicz_seed: [f64; 2],
    /// Radius of the parameter disk around c0.
    pub c_disk_radius: f64,

    // map parameter bounds
    /// Horseshoe regime: |b| < b0, |sigma| < sigma0.
    pub b0: f64,
    pub sigma0: f64,
    /// Tangency stage: |b| < b1 < b0, |sigma| < sigma1 < sigma0.
    pub b1: f64,
    pub sigma1: f64,

    // horseshoe certification
    /// Required expansion constant C_F.
    pub cf_min: f64,
    /// Grid resolution per axis for certification sampling.
    pub grid_per_axis: usize,

    // folded-surface geometry
    /// Concentration bound diam(Fold(W)).
    pub fold_diam: f64,
    /// Required diam(pr1(W)) before transport.
    pub pr1_diam: f64,
    /// Fold stability across quasi-plane probes.
    pub fold_drift: f64,
    /// Quasi-plane oscillation bound.
    pub quasi_plane_osc: f64,
    /// Fold transport prediction radius (Lemma-scale 2e-6 in the strict profile).
    pub fold_transport_radius: f64,

    // numeric plumbing
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Relative inflation applied to sampled hull enclosures.
    pub enclosure_slack: f64,
    /// Samples per circle when enclosing images of disks.
    pub boundary_samples: usize,
    /// Radius of the mu-perturbation ball as a fraction of |mu0|.
    pub mu_ball_ratio: f64,
}

impl RigorProfile {
    /// The construction's verbatim constants.
    pub fn paper() -> Self {
        RigorProfile {
            name: "paper".into(),
            cone_aperture: 1e-6,
            cone_u_z2_aperture: 1e-6,
            cone_u_z3_aperture: 1e-6,
            window_center: 0.9e-4,
            window_radius: 1e-10,
            covering_inner_radius: 0.1,
            covering_slack: 1e-4,
            contract_radius: 1e-6,
            block_window_radius: 1e-9,
            gap_min: 1.0,
            c_min: 1e10,
            diam_ratio: 1e-11,
            orbit_window_factor: 1e-10,
            orbit_window_frac: 0.999_999,
            inner_disk_ratio: 1e-3,
            middle_disk_ratio: 1e-2,
            r_max: 64,
            q_max: 64,
            delta_window: 1e-10,
            misiurewicz_m: 3,
            misiurewicz_seed: [-0.25, -1.1],
            c_disk_radius: 1e-3,
            b0: 1e-10,
            sigma0: 1e-10,
            b1: 0.5e-10,
            sigma1: 0.5e-10,
            cf_min: 2.0,
            grid_per_axis: 32,
            fold_diam: 1e-5,
            pr1_diam: 1e-8,
            fold_drift: 1e-6,
            quasi_plane_osc: 1e-4,
            fold_transport_radius: 2e-6,
            newton_tol: 1e-13,
            newton_max_iter: 128,
            enclosure_slack: 1e-3,
            boundary_samples: 64,
            mu_ball_ratio: 1e-3,
        }
    }

    /// Double-precision regime: same inequality shapes, reachable margins.
    pub fn demo() -> Self {
        RigorProfile {
            name: "demo".into(),
            cone_aperture: 1e-6,
            cone_u_z2_aperture: 0.45,
            cone_u_z3_aperture: 1e-5,
            window_center: 0.9e-4,
            window_radius: 5e-5,
            covering_inner_radius: 0.1,
            covering_slack: 1e-4,
            contract_radius: 1e-3,
            block_window_radius: 1e-4,
            gap_min: 0.1,
            c_min: 1e2,
            diam_ratio: 1e-4,
            orbit_window_factor: 0.35,
            orbit_window_frac: 0.375,
            inner_disk_ratio: 0.08,
            middle_disk_ratio: 0.0864,
            r_max: 8,
            q_max: 8,
            delta_window: 1e4,
            misiurewicz_m: 3,
            misiurewicz_seed: [-0.25, -1.1],
            c_disk_radius: 1e-3,
            b0: 1e-17,
            sigma0: 3e-9,
            b1: 0.5e-17,
            sigma1: 1.5e-9,
            cf_min: 2.0,
            grid_per_axis: 32,
            fold_diam: 1e-5,
            pr1_diam: 1e-8,
            fold_drift: 1e-6,
            quasi_plane_osc: 1e-4,
            fold_transport_radius: 1e-4,
            newton_tol: 1e-12,
            newton_max_iter: 128,
            enclosure_slack: 1e-2,
            boundary_samples: 48,
            mu_ball_ratio: 1e-3,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "demo" => Some(Self::demo()),
            _ => None,
        }
    }

    /// Every threshold of `self` at least as permissive as `other`'s.
    pub fn is_relaxation_of(&self, other: &RigorProfile) -> bool {
        self.window_radius >= other.window_radius
            && self.contract_radius >= other.contract_radius
            && self.block_window_radius >= other.block_window_radius
            && self.gap_min <= other.gap_min
            && self.c_min <= other.c_min
            && self.diam_ratio >= other.diam_ratio
            && self.orbit_window_factor >= other.orbit_window_factor
            && self.orbit_window_frac <= other.orbit_window_frac
            && self.cone_u_z2_aperture >= other.cone_u_z2_aperture
            && self.delta_window >= other.delta_window
            && self.fold_drift >= other.fold_drift
            && self.fold_transport_radius >= other.fold_transport_radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_is_a_relaxation_of_paper() {
        assert!(RigorProfile::demo().is_relaxation_of(&RigorProfile::paper()));
        assert!(!RigorProfile::paper().is_relaxation_of(&RigorProfile::demo()));
    }

    #[test]
    fn profiles_roundtrip_through_json() {
        let p = RigorProfile::demo();
        let s = serde_json::to_string(&p).unwrap();
        let q: RigorProfile = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn unknown_profile_keys_are_rejected() {
        let mut v: serde_json::Value =
            serde_json::to_value(RigorProfile::demo()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("no_such_knob".into(), serde_json::json!(1.0));
        assert!(serde_json::from_value::<RigorProfile>(v).is_err());
    }
}
