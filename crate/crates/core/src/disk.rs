//! Closed disks in the complex plane and tridisks in C^3.
//!
//! Disks are the primitive enclosure: every containment contract in the crate
//! is expressed as disk membership with an explicit margin. In double mode the
//! arithmetic is outward-rounded by a few ulps per operation; certificates
//! record that the enclosures are best-effort rather than directed-rounding
//! rigorous.

use crate::{Error, Result, C};
use serde::{Deserialize, Serialize};

/// Relative slack applied per outward-rounded operation (a few ulps).
const ULP_SLACK: f64 = 4.0 * f64::EPSILON;

/// A closed disk `{ z : |z - center| <= radius }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexDisk {
    #[serde(with = "crate::jsonio::complex")]
    pub center: C,
    pub radius: f64,
}

impl ComplexDisk {
    pub fn new(center: C, radius: f64) -> Self {
        assert!(radius >= 0.0, "disk radius must be nonnegative");
        ComplexDisk { center, radius }
    }

    /// The unit disk.
    pub fn unit() -> Self {
        ComplexDisk::new(C::new(0.0, 0.0), 1.0)
    }

    pub fn point(center: C) -> Self {
        ComplexDisk::new(center, 0.0)
    }

    /// Membership test, exact up to one rounding of `|z - center|`.
    pub fn contains_point(&self, z: C) -> bool {
        (z - self.center).norm() <= self.radius
    }

    /// Signed distance of `z` inside the disk (positive inside).
    pub fn point_margin(&self, z: C) -> f64 {
        self.radius - (z - self.center).norm()
    }

    /// Outward-rounded inflation by an absolute amount.
    pub fn inflate(&self, slack: f64) -> Self {
        ComplexDisk::new(self.center, self.radius + slack.abs())
    }

    /// Smallest disk centered at the centroid hull of `points`, inflated by
    /// `rel_slack` of its radius plus a few ulps. Demo-mode enclosure of a
    /// sampled set.
    pub fn enclose_points(points: &[C], rel_slack: f64) -> Self {
        assert!(!points.is_empty());
        let n = points.len() as f64;
        let centroid = points.iter().sum::<C>() / n;
        let mut r: f64 = 0.0;
        for &p in points {
            r = r.max((p - centroid).norm());
        }
        ComplexDisk::new(centroid, r * (1.0 + rel_slack) + ULP_SLACK * (1.0 + centroid.norm()))
    }
}

/// Image of a disk under the affine map `z -> a z + b`: exact center/radius,
/// outward-rounded in double mode.
pub fn affine_image_disk(a: C, b: C, d: ComplexDisk) -> ComplexDisk {
    let center = a * d.center + b;
    let radius = a.norm() * d.radius;
    ComplexDisk::new(center, radius * (1.0 + ULP_SLACK) + ULP_SLACK * center.norm())
}

/// Containment test with margin: `inner ⊆ outer` iff
/// `|outer.center - inner.center| + inner.radius <= outer.radius`.
/// Returns `(contained, margin)` where `margin` is the slack of that inequality.
pub fn disk_contains(outer: ComplexDisk, inner: ComplexDisk) -> (bool, f64) {
    let margin = outer.radius - ((outer.center - inner.center).norm() + inner.radius);
    (margin >= 0.0, margin)
}

/// A tridisk `D1 x D2 x D3 ⊂ C^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyDisk3 {
    pub d1: ComplexDisk,
    pub d2: ComplexDisk,
    pub d3: ComplexDisk,
}

impl PolyDisk3 {
    pub fn new(d1: ComplexDisk, d2: ComplexDisk, d3: ComplexDisk) -> Self {
        PolyDisk3 { d1, d2, d3 }
    }

    /// The unit tridisk, representable exactly.
    pub fn unit() -> Self {
        PolyDisk3 {
            d1: ComplexDisk::unit(),
            d2: ComplexDisk::unit(),
            d3: ComplexDisk::unit(),
        }
    }

    pub fn contains_point(&self, z: [C; 3]) -> bool {
        self.d1.contains_point(z[0]) && self.d2.contains_point(z[1]) && self.d3.contains_point(z[2])
    }

    /// Componentwise membership margin (positive iff inside).
    pub fn point_margin(&self, z: [C; 3]) -> f64 {
        self.d1
            .point_margin(z[0])
            .min(self.d2.point_margin(z[1]))
            .min(self.d3.point_margin(z[2]))
    }
}

/// Precision settings for the numeric kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrecisionMode {
    Double,
    /// Reserved for a multiprecision backend; not available in this build.
    Extended {
        bits: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub mode: PrecisionMode,
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl Precision {
    pub fn new(mode: PrecisionMode, newton_tol: f64, max_iter: usize) -> Result<Self> {
        if !(newton_tol > 0.0) {
            return Err(Error::Precondition("newton_tol must be positive".into()));
        }
        if max_iter == 0 {
            return Err(Error::Precondition("max_iter must be at least 1".into()));
        }
        Ok(Precision {
            mode,
            newton_tol,
            max_iter,
        })
    }

    pub fn double(newton_tol: f64, max_iter: usize) -> Self {
        Precision::new(PrecisionMode::Double, newton_tol, max_iter).unwrap()
    }

    /// Fails until a multiprecision backend is wired in; callers surface this
    /// as an inconclusive verdict rather than a silent downgrade.
    pub fn require_available(&self) -> Result<()> {
        match self.mode {
            PrecisionMode::Double => Ok(()),
            PrecisionMode::Extended { .. } => Err(Error::ExtendedPrecisionUnavailable),
        }
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::double(1e-12, 64)
    }
}
