//! The FL/TB/RL/HL stack as a set of bound-current loops.

use std::fmt;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::magnetostatics::{
    loop_field, superpose, CurrentLoop, DiscretizationPolicy, FieldVector, Point3,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Free,
    Reference,
    Hard,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Free => "FL",
            LayerKind::Reference => "RL",
            LayerKind::Hard => "HL",
        })
    }
}

/// One ferromagnetic layer collapsed to a single rim current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Signed sheet moment Ms·t in A; the sign is the magnetization direction along z.
    pub ms_t: f64,
    /// Midplane offset from the FL midplane, nm.
    pub z_center_nm: f64,
    /// Layer diameter in nm; `None` follows the stack eCD.
    pub diameter_nm: Option<f64>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, ms_t: f64, z_center_nm: f64) -> Self {
        LayerSpec {
            kind,
            ms_t,
            z_center_nm,
            diameter_nm: None,
        }
    }

    pub fn with_diameter(mut self, diameter_nm: f64) -> Self {
        self.diameter_nm = Some(diameter_nm);
        self
    }

    fn validate(&self) -> Result<()> {
        ensure_finite("ms_t", self.ms_t)?;
        ensure_finite("z_center_nm", self.z_center_nm)?;
        if let Some(d) = self.diameter_nm {
            ensure_positive("diameter_nm", d)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtjStack {
    fl: LayerSpec,
    rl: LayerSpec,
    hl: LayerSpec,
    ra: f64,
    ecd: f64,
}

impl MtjStack {
    /// Validates the stack: positive RA and eCD, FL at z = 0, and an
    /// antiparallel RL/HL pair (both moments zero is accepted as a null stack).
    pub fn new(fl: LayerSpec, rl: LayerSpec, hl: LayerSpec, ra: f64, ecd_nm: f64) -> Result<Self> {
        for (layer, kind) in [(&fl, LayerKind::Free), (&rl, LayerKind::Reference), (&hl, LayerKind::Hard)] {
            if layer.kind != kind {
                return Err(Error::invalid("kind", format!("expected {kind}, got {}", layer.kind)));
            }
            layer.validate()?;
        }
        if fl.z_center_nm != 0.0 {
            return Err(Error::invalid("fl.z_center_nm", "the free layer defines z = 0"));
        }
        ensure_positive("ra", ra)?;
        ensure_positive("ecd", ecd_nm)?;
        let saf_ok = (rl.ms_t == 0.0 && hl.ms_t == 0.0) || rl.ms_t * hl.ms_t < 0.0;
        if !saf_ok {
            return Err(Error::invalid(
                "rl.ms_t/hl.ms_t",
                format!(
                    "reference and hard layers must be antiparallel, got {} and {}",
                    rl.ms_t, hl.ms_t
                ),
            ));
        }
        Ok(MtjStack { fl, rl, hl, ra, ecd: ecd_nm })
    }

    pub fn fl(&self) -> &LayerSpec {
        &self.fl
    }

    pub fn rl(&self) -> &LayerSpec {
        &self.rl
    }

    pub fn hl(&self) -> &LayerSpec {
        &self.hl
    }

    pub fn ra(&self) -> f64 {
        self.ra
    }

    pub fn ecd(&self) -> f64 {
        self.ecd
    }

    pub fn with_ecd(&self, ecd_nm: f64) -> Result<Self> {
        MtjStack::new(self.fl, self.rl, self.hl, self.ra, ecd_nm)
    }

    /// Multiplies the RL and HL moments, leaving the FL untouched.
    pub fn with_fixed_layer_scales(&self, rl_scale: f64, hl_scale: f64) -> Result<Self> {
        let mut rl = self.rl;
        let mut hl = self.hl;
        rl.ms_t *= rl_scale;
        hl.ms_t *= hl_scale;
        MtjStack::new(self.fl, rl, hl, self.ra, self.ecd)
    }

    /// Multiplies every layer moment by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let mut out = *self;
        out.fl.ms_t *= s;
        out.rl.ms_t *= s;
        out.hl.ms_t *= s;
        MtjStack::new(out.fl, out.rl, out.hl, out.ra, out.ecd)
    }

    pub fn layer_diameter_nm(&self, layer: &LayerSpec) -> f64 {
        layer.diameter_nm.unwrap_or(self.ecd)
    }

    /// Largest layer diameter, the footprint used for overlap checks.
    pub fn footprint_nm(&self) -> f64 {
        [self.fl, self.rl, self.hl]
            .iter()
            .map(|l| self.layer_diameter_nm(l))
            .fold(0.0, f64::max)
    }

    /// Rim current loop for `layer` of a cell centred at (`x_nm`, `y_nm`);
    /// `sign` multiplies the bound current (used to flip the FL state).
    pub fn layer_loop(&self, layer: &LayerSpec, x_nm: f64, y_nm: f64, sign: f64) -> Result<CurrentLoop> {
        CurrentLoop::new(
            Point3::from_nm(x_nm, y_nm, layer.z_center_nm),
            0.5 * self.layer_diameter_nm(layer) * 1e-9,
            sign * layer.ms_t,
        )
    }
}

/// eCD in nm from RA (Ω·µm²) and R_P (Ω).
pub fn ecd_from_rp(ra: f64, rp: f64) -> Result<f64> {
    ensure_positive("ra", ra)?;
    ensure_positive("rp", rp)?;
    Ok((4.0 / std::f64::consts::PI * ra / rp).sqrt() * 1e3)
}

/// R_P in Ω of a device with diameter `ecd_nm` and RA in Ω·µm².
pub fn rp_from_ecd(ra: f64, ecd_nm: f64) -> Result<f64> {
    ensure_positive("ra", ra)?;
    ensure_positive("ecd", ecd_nm)?;
    let d_um = ecd_nm * 1e-3;
    Ok(ra / (std::f64::consts::PI / 4.0 * d_um * d_um))
}

/// Field of the cell's own RL and HL at `point`.
pub fn intra_stray_field(stack: &MtjStack, point: Point3, policy: DiscretizationPolicy) -> Result<FieldVector> {
    let rl = loop_field(&stack.layer_loop(&stack.rl, 0.0, 0.0, 1.0)?, point, policy)?;
    let hl = loop_field(&stack.layer_loop(&stack.hl, 0.0, 0.0, 1.0)?, point, policy)?;
    Ok(superpose([rl, hl]))
}

/// Out-of-plane intra-cell field at the FL center, in Oe.
pub fn intra_center_hz_oe(stack: &MtjStack, policy: DiscretizationPolicy) -> Result<f64> {
    Ok(intra_stray_field(stack, Point3::ORIGIN, policy)?.hz_oe())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub radii_nm: Vec<f64>,
    pub hz_oe: Vec<f64>,
}

/// hz over the FL midplane from the center to the rim (r = eCD/2).
pub fn intra_stray_profile(stack: &MtjStack, n_points: usize, policy: DiscretizationPolicy) -> Result<RadialProfile> {
    intra_stray_profile_along(stack, n_points, 0.0, policy)
}

/// As [`intra_stray_profile`], sampling along the ray at `azimuth` radians.
pub fn intra_stray_profile_along(
    stack: &MtjStack,
    n_points: usize,
    azimuth: f64,
    policy: DiscretizationPolicy,
) -> Result<RadialProfile> {
    if n_points < 2 {
        return Err(Error::invalid("n_points", format!("need at least 2, got {n_points}")));
    }
    let rim = 0.5 * stack.ecd;
    let (s, c) = azimuth.sin_cos();
    let mut radii_nm = Vec::with_capacity(n_points);
    let mut hz_oe = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let r = rim * i as f64 / (n_points - 1) as f64;
        let h = intra_stray_field(stack, Point3::from_nm(r * c, r * s, 0.0), policy)?;
        radii_nm.push(r);
        hz_oe.push(h.hz_oe());
    }
    Ok(RadialProfile { radii_nm, hz_oe })
}

/// Least-squares multipliers for the template RL and HL moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsCalibration {
    pub rl_scale: f64,
    pub hl_scale: f64,
    /// Euclidean norm of the hz residuals, Oe.
    pub residual_norm_oe: f64,
}

impl MsCalibration {
    pub fn apply(&self, template: &MtjStack) -> Result<MtjStack> {
        template.with_fixed_layer_scales(self.rl_scale, self.hl_scale)
    }
}

/// Fits RL and HL moment multipliers so the FL-center hz of `template`
/// matches `measured` (eCD nm, hz Oe) pairs. The model is linear in the two
/// moments, so this is a closed-form 2×2 normal-equation solve.
pub fn calibrate_ms_t(
    measured: &[(f64, f64)],
    template: &MtjStack,
    policy: DiscretizationPolicy,
) -> Result<MsCalibration> {
    if measured.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two measured points, got {}",
            measured.len()
        )));
    }
    let first = measured[0].0;
    if measured.iter().all(|&(e, _)| e == first) {
        return Err(Error::DegenerateFit("all measured eCDs are equal".into()));
    }

    let mut columns = Vec::with_capacity(measured.len());
    for &(ecd, hz) in measured {
        ensure_finite("hs_intra_oe", hz)?;
        let stack = template.with_ecd(ecd)?;
        let a = loop_field(&stack.layer_loop(&stack.rl, 0.0, 0.0, 1.0)?, Point3::ORIGIN, policy)?.hz_oe();
        let b = loop_field(&stack.layer_loop(&stack.hl, 0.0, 0.0, 1.0)?, Point3::ORIGIN, policy)?.hz_oe();
        columns.push((a, b, hz));
    }

    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, b, y) in &columns {
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        say += a * y;
        sby += b * y;
    }
    let det = saa * sbb - sab * sab;
    if !(det.is_finite() && det > 1e-12 * saa * sbb && saa > 0.0 && sbb > 0.0) {
        return Err(Error::DegenerateFit("design matrix is rank-deficient".into()));
    }
    let rl_scale = (sbb * say - sab * sby) / det;
    let hl_scale = (saa * sby - sab * say) / det;
    let residual_norm_oe = columns
        .iter()
        .map(|&(a, b, y)| (rl_scale * a + hl_scale * b - y).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(MsCalibration {
        rl_scale,
        hl_scale,
        residual_norm_oe,
    })
}
