//! Default device: the calibrated stack and the measured electrical and
//! thermal parameters of the 35 nm devices.

use crate::array::{ArrayConfig, NeighborhoodPattern};
use crate::calibration::{IntraAnchor, MapAnchor};
use crate::error::Result;
use crate::magnetostatics::DiscretizationPolicy;
use crate::metrics::{
    calibrate_sun_prefactor, total_stray_field, Direction, ResistanceModel, StabilityParams, SunParams,
    SwitchParams,
};
use crate::mtj::{rp_from_ecd, LayerKind, LayerSpec, MtjStack};

/// Blanket RA, Ω·µm².
pub const RA_OHM_UM2: f64 = 4.5;

pub const FL_Z_NM: f64 = 0.0;
pub const RL_Z_NM: f64 = -2.2;
pub const HL_Z_NM: f64 = -7.0;

/// FL-center hz of a 35 nm device, from the 7% critical-current shift.
pub const INTRA_ANCHOR: IntraAnchor = IntraAnchor {
    ecd_nm: 35.0,
    hz_center_oe: -365.6,
};

/// 256-pattern map at eCD 55 nm, pitch 90 nm. The span is the reported
/// 80 Oe; the base is placed at −14 Oe (reported −16 Oe) because a base at
/// −16 Oe with this geometry leaves no room for a positive RL moment.
pub const MAP_ANCHOR: MapAnchor = MapAnchor {
    ecd_nm: 55.0,
    pitch_nm: 90.0,
    base_oe: -14.0,
    span_oe: 80.0,
};

/// Moments solved from [`INTRA_ANCHOR`] and [`MAP_ANCHOR`], rounded to four digits.
pub const FL_MS_T: f64 = 2.060e-3;
pub const RL_MS_T: f64 = 5.453e-4;
pub const HL_MS_T: f64 = -1.938e-3;

pub const IC0_UA: f64 = 57.2;
pub const HK_OE: f64 = 4646.8;
pub const DELTA0: f64 = 45.5;
pub const T_REF_K: f64 = 300.0;
pub const HC_OE: f64 = 2200.0;

/// Device sizes of the default Ψ sweep, nm.
pub const PSI_SIZES_NM: [f64; 3] = [35.0, 45.0, 55.0];

/// Zero-bias TMR ratio and AP roll-off voltage.
pub const TMR0: f64 = 1.5;
pub const VH_V: f64 = 0.5;

pub const SPIN_POLARIZATION: f64 = SunParams::DEFAULT_POLARIZATION;

/// Sun prefactor target: t_w(AP→P) spread between NP₈ = 0 and 255 at
/// 0.72 V for the 35 nm device at pitch 1.5·eCD.
pub const SUN_SPREAD_NS: f64 = 4.0;
pub const SUN_CAL_VP: f64 = 0.72;
pub const SUN_CAL_PITCH_FACTOR: f64 = 1.5;

/// Calibrated stack at eCD = 35 nm.
pub fn calibrated_stack() -> MtjStack {
    MtjStack::new(
        LayerSpec::new(LayerKind::Free, FL_MS_T, FL_Z_NM),
        LayerSpec::new(LayerKind::Reference, RL_MS_T, RL_Z_NM),
        LayerSpec::new(LayerKind::Hard, HL_MS_T, HL_Z_NM),
        RA_OHM_UM2,
        35.0,
    )
    .expect("preset stack is valid")
}

pub fn switch_params() -> SwitchParams {
    SwitchParams::new(IC0_UA, HK_OE).expect("preset switch params are valid")
}

pub fn stability_params() -> StabilityParams {
    StabilityParams::new(DELTA0, HK_OE, T_REF_K).expect("preset stability params are valid")
}

/// Resistance model of a device of the given size at the preset RA.
pub fn resistance_model(ecd_nm: f64) -> Result<ResistanceModel> {
    ResistanceModel::from_tmr(rp_from_ecd(RA_OHM_UM2, ecd_nm)?, TMR0, VH_V)
}

/// Sun parameters calibrated on `stack` so the AP→P t_w spread between
/// NP₈ = 0 and 255 at pitch 1.5·eCD and bias `vp` equals `spread_ns`.
#[allow(clippy::too_many_arguments)]
pub fn calibrated_sun_params(
    stack: &MtjStack,
    sw: &SwitchParams,
    rmodel: &ResistanceModel,
    delta_for_log: f64,
    spread_ns: f64,
    vp: f64,
    policy: DiscretizationPolicy,
) -> Result<SunParams> {
    let config = ArrayConfig::new(*stack, SUN_CAL_PITCH_FACTOR * stack.ecd())?;
    let slow = total_stray_field(&config, NeighborhoodPattern::ALL_P, policy)?;
    let fast = total_stray_field(&config, NeighborhoodPattern::ALL_AP, policy)?;
    calibrate_sun_prefactor(spread_ns, sw, rmodel, delta_for_log, vp, slow, fast, Direction::ApToP)
}

/// [`calibrated_sun_params`] for the default device.
pub fn sun_params() -> SunParams {
    let stack = calibrated_stack();
    let rmodel = resistance_model(stack.ecd()).expect("preset size is valid");
    calibrated_sun_params(
        &stack,
        &switch_params(),
        &rmodel,
        DELTA0,
        SUN_SPREAD_NS,
        SUN_CAL_VP,
        DiscretizationPolicy::default(),
    )
        .expect("preset calibration point is super-critical")
}
