//! Closed-form calibration of all three layer moments against one intra-cell
//! anchor and one inter-cell map anchor.
//!
//! Every field in the model is linear in the layer moments, so with the
//! geometry fixed the FL moment follows from the map span, and the RL/HL pair
//! from the FL-center field plus the pattern-independent part of the map.

use crate::array::CELL_OFFSETS;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::magnetostatics::{loop_field, CurrentLoop, DiscretizationPolicy, Point3};
use crate::mtj::{LayerSpec, MtjStack};

/// Measured FL-center hz of an isolated device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntraAnchor {
    pub ecd_nm: f64,
    pub hz_center_oe: f64,
}

/// Inter-cell map extremes at one (eCD, pitch) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapAnchor {
    pub ecd_nm: f64,
    pub pitch_nm: f64,
    /// hz at NP₈ = 0.
    pub base_oe: f64,
    /// hz(NP₈ = 255) − hz(NP₈ = 0).
    pub span_oe: f64,
}

/// hz (Oe) at the origin per ampere of bound current in `layer`, summed over
/// the cells at `offsets` (nm).
fn hz_per_amp(
    stack: &MtjStack,
    layer: &LayerSpec,
    offsets: impl IntoIterator<Item = (f64, f64)>,
    policy: DiscretizationPolicy,
) -> Result<f64> {
    let radius = 0.5 * stack.layer_diameter_nm(layer) * 1e-9;
    let mut hz = 0.0;
    for (x, y) in offsets {
        let lp = CurrentLoop::new(Point3::from_nm(x, y, layer.z_center_nm), radius, 1.0)?;
        hz += loop_field(&lp, Point3::ORIGIN, policy)?.hz_oe();
    }
    Ok(hz)
}

/// Replaces the three moments of `template` (geometry kept) so the model
/// reproduces both anchors exactly.
pub fn calibrate_to_anchors(
    template: &MtjStack,
    intra: IntraAnchor,
    map: MapAnchor,
    policy: DiscretizationPolicy,
) -> Result<MtjStack> {
    ensure_finite("intra.hz_center_oe", intra.hz_center_oe)?;
    ensure_finite("map.base_oe", map.base_oe)?;
    ensure_positive("map.span_oe", map.span_oe)?;
    ensure_positive("map.pitch_nm", map.pitch_nm)?;

    let iso = template.with_ecd(intra.ecd_nm)?;
    let a_rl = hz_per_amp(&iso, iso.rl(), [(0.0, 0.0)], policy)?;
    let a_hl = hz_per_amp(&iso, iso.hl(), [(0.0, 0.0)], policy)?;

    let arr = template.with_ecd(map.ecd_nm)?;
    let cells = || CELL_OFFSETS.iter().map(|&(u, v)| (u * map.pitch_nm, v * map.pitch_nm));
    let b_rl = hz_per_amp(&arr, arr.rl(), cells(), policy)?;
    let b_hl = hz_per_amp(&arr, arr.hl(), cells(), policy)?;
    let c_fl = hz_per_amp(&arr, arr.fl(), cells(), policy)?;
    if c_fl == 0.0 {
        return Err(Error::DegenerateFit("free layer produces no field at the victim".into()));
    }

    // hz(NP) = fixed + Σ ±FL, so the span is 2·|Σ FL| and NP₈ = 0 sits half a
    // span below the fixed-layer sum.
    let fl = map.span_oe / (2.0 * c_fl.abs());
    let fixed = map.base_oe + 0.5 * map.span_oe;

    let det = a_rl * b_hl - a_hl * b_rl;
    if det.abs() <= 1e-12 * (a_rl * b_hl).abs().max((a_hl * b_rl).abs()) {
        return Err(Error::DegenerateFit("anchor system is singular".into()));
    }
    let rl = (intra.hz_center_oe * b_hl - a_hl * fixed) / det;
    let hl = (a_rl * fixed - b_rl * intra.hz_center_oe) / det;

    MtjStack::new(
        LayerSpec { ms_t: fl, ..*template.fl() },
        LayerSpec { ms_t: rl, ..*template.rl() },
        LayerSpec { ms_t: hl, ..*template.hl() },
        template.ra(),
        template.ecd(),
    )
}
