//! Fields of uniformly magnetized thin disks, modeled as bound-current loops.
//!
//! A thin layer with sheet moment `Ms·t` is equivalent to a current
//! `I_b = Ms·t` circulating around its rim. The loop field is summed
//! segment by segment from the Biot-Savart kernel
//!
//! ```text
//! dH_k = I_b / (4π) · (dl_k × r_k) / |r_k|³
//! ```
//!
//! which yields H directly in A/m (no μ0 factor). `r_k` is measured from the
//! midpoint of chord `k`. Everything in this module is SI; conversions to
//! Oe and nm happen at the edges.

use std::f64::consts::PI;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// A/m per Oe.
pub const AM_PER_OE: f64 = 1000.0 / (4.0 * PI);

/// Points closer than this to a segment midpoint are treated as on the wire.
pub const WIRE_GUARD_M: f64 = 1e-12;

pub fn oersted_from_si(h_am: f64) -> f64 {
    h_am / AM_PER_OE
}

pub fn si_from_oersted(h_oe: f64) -> f64 {
    h_oe * AM_PER_OE
}

/// A point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn from_nm(x: f64, y: f64, z: f64) -> Self {
        Point3::new(x * 1e-9, y * 1e-9, z * 1e-9)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Magnetic field H in A/m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldVector {
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector {
        hx: 0.0,
        hy: 0.0,
        hz: 0.0,
    };

    pub const fn new(hx: f64, hy: f64, hz: f64) -> Self {
        FieldVector { hx, hy, hz }
    }

    pub fn from_oe(hx: f64, hy: f64, hz: f64) -> Self {
        FieldVector::new(si_from_oersted(hx), si_from_oersted(hy), si_from_oersted(hz))
    }

    pub fn hz_oe(&self) -> f64 {
        oersted_from_si(self.hz)
    }

    pub fn to_oe(&self) -> [f64; 3] {
        [
            oersted_from_si(self.hx),
            oersted_from_si(self.hy),
            oersted_from_si(self.hz),
        ]
    }

    pub fn norm(&self) -> f64 {
        (self.hx * self.hx + self.hy * self.hy + self.hz * self.hz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.hx.is_finite() && self.hy.is_finite() && self.hz.is_finite()
    }
}

impl Add for FieldVector {
    type Output = FieldVector;
    fn add(self, o: FieldVector) -> FieldVector {
        FieldVector::new(self.hx + o.hx, self.hy + o.hy, self.hz + o.hz)
    }
}

impl AddAssign for FieldVector {
    fn add_assign(&mut self, o: FieldVector) {
        self.hx += o.hx;
        self.hy += o.hy;
        self.hz += o.hz;
    }
}

impl Neg for FieldVector {
    type Output = FieldVector;
    fn neg(self) -> FieldVector {
        FieldVector::new(-self.hx, -self.hy, -self.hz)
    }
}

impl Mul<f64> for FieldVector {
    type Output = FieldVector;
    fn mul(self, s: f64) -> FieldVector {
        FieldVector::new(self.hx * s, self.hy * s, self.hz * s)
    }
}

impl Sum for FieldVector {
    fn sum<I: Iterator<Item = FieldVector>>(iter: I) -> FieldVector {
        iter.fold(FieldVector::ZERO, Add::add)
    }
}

/// Component-wise sum; the empty sum is the zero field.
pub fn superpose<I>(fields: I) -> FieldVector
where
    I: IntoIterator<Item = FieldVector>,
{
    fields.into_iter().sum()
}

/// Circular loop in a plane of constant z, normal along +z.
///
/// A positive `bound_current` circulates counter-clockwise seen from +z,
/// i.e. it represents magnetization along +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentLoop {
    center: Point3,
    radius: f64,
    bound_current: f64,
}

impl CurrentLoop {
    pub fn new(center: Point3, radius_m: f64, bound_current_a: f64) -> Result<Self> {
        ensure_finite("center.x", center.x)?;
        ensure_finite("center.y", center.y)?;
        ensure_finite("center.z", center.z)?;
        ensure_positive("radius", radius_m)?;
        ensure_finite("bound_current", bound_current_a)?;
        Ok(CurrentLoop {
            center,
            radius: radius_m,
            bound_current: bound_current_a,
        })
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn bound_current(&self) -> f64 {
        self.bound_current
    }

    /// Magnetic moment `I·πR²` along z, in A·m².
    pub fn moment(&self) -> f64 {
        self.bound_current * PI * self.radius * self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscretizationPolicy {
    n_segments: usize,
}

impl DiscretizationPolicy {
    pub const MIN_SEGMENTS: usize = 8;
    pub const DEFAULT_SEGMENTS: usize = 256;

    pub fn new(n_segments: usize) -> Result<Self> {
        if n_segments < Self::MIN_SEGMENTS {
            return Err(Error::invalid(
                "n_segments",
                format!("must be at least {}, got {n_segments}", Self::MIN_SEGMENTS),
            ));
        }
        Ok(DiscretizationPolicy { n_segments })
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }
}

impl Default for DiscretizationPolicy {
    fn default() -> Self {
        DiscretizationPolicy {
            n_segments: Self::DEFAULT_SEGMENTS,
        }
    }
}

/// Field of `current_loop` at `point` by the N-chord Biot-Savart sum.
pub fn loop_field(
    current_loop: &CurrentLoop,
    point: Point3,
    policy: DiscretizationPolicy,
) -> Result<FieldVector> {
    let n = policy.n_segments();
    let c = current_loop.center;
    let r = current_loop.radius;
    let step = 2.0 * PI / n as f64;

    let vertex = |k: usize| {
        let (s, co) = (step * k as f64).sin_cos();
        Point3::new(c.x + r * co, c.y + r * s, c.z)
    };

    let mut acc = Point3::ORIGIN;
    let mut start = vertex(0);
    for k in 0..n {
        // close the polygon on the exact starting vertex
        let end = if k + 1 == n { vertex(0) } else { vertex(k + 1) };
        let dl = end - start;
        let mid = Point3::new(
            0.5 * (start.x + end.x),
            0.5 * (start.y + end.y),
            0.5 * (start.z + end.z),
        );
        let rk = point - mid;
        let dist = rk.norm();
        if dist <= WIRE_GUARD_M {
            return Err(Error::OnWire { distance_m: dist });
        }
        let s = dl.cross(rk);
        let inv3 = 1.0 / (dist * dist * dist);
        acc = Point3::new(acc.x + s.x * inv3, acc.y + s.y * inv3, acc.z + s.z * inv3);
        start = end;
    }

    let k = current_loop.bound_current / (4.0 * PI);
    Ok(FieldVector::new(k * acc.x, k * acc.y, k * acc.z))
}

/// Closed-form on-axis field `I·R² / (2·(R² + z²)^(3/2))` in A/m, `z` in
/// meters from the loop plane.
pub fn on_axis_field_analytic(current_loop: &CurrentLoop, z: f64) -> f64 {
    let r2 = current_loop.radius * current_loop.radius;
    current_loop.bound_current * r2 / (2.0 * (r2 + z * z).powf(1.5))
}
