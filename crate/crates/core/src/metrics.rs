//! Compact device metrics under a total out-of-plane stray field.
//!
//! Sign conventions follow the stack model: a negative hz at the FL (the
//! intra-cell field of the default stack) raises I_c(AP→P), lowers
//! I_c(P→AP), and stabilizes AP at the expense of P.

use std::f64::consts::PI;

use crate::array::{AggressorFields, ArrayConfig, NeighborhoodPattern};
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::magnetostatics::{si_from_oersted, DiscretizationPolicy};
use crate::mtj::intra_center_hz_oe;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const MU0: f64 = 1.256_637_062_12e-6;
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ApToP,
    PToAp,
}

impl Direction {
    /// State the FL starts from.
    pub fn initial_state(self) -> MtjState {
        match self {
            Direction::ApToP => MtjState::Ap,
            Direction::PToAp => MtjState::P,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Direction::PToAp => 1.0,
            Direction::ApToP => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MtjState {
    P,
    Ap,
}

impl MtjState {
    fn sign(self) -> f64 {
        match self {
            MtjState::P => 1.0,
            MtjState::Ap => -1.0,
        }
    }
}

/// Physical constituents of the I_c prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SttConstituents {
    pub eta: f64,
    pub alpha: f64,
    /// Saturation magnetization, A/m.
    pub ms: f64,
    /// FL volume, m³.
    pub volume: f64,
}

impl SttConstituents {
    /// `(1/η)(2αe/ħ)·μ0·Ms·V·Hk` in µA, with Hk given in Oe.
    pub fn intrinsic_ic_ua(&self, hk_oe: f64) -> f64 {
        let hk = si_from_oersted(hk_oe);
        2.0 * self.alpha * ELEMENTARY_CHARGE / (self.eta * HBAR) * MU0 * self.ms * self.volume * hk * 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchParams {
    ic0_ua: f64,
    hk_oe: f64,
    constituents: Option<SttConstituents>,
}

impl SwitchParams {
    pub fn new(ic0_ua: f64, hk_oe: f64) -> Result<Self> {
        Ok(SwitchParams {
            ic0_ua: ensure_positive("ic0", ic0_ua)?,
            hk_oe: ensure_positive("hk", hk_oe)?,
            constituents: None,
        })
    }

    /// Attaches constituents; they must reproduce `ic0` to 1e-6 relative.
    pub fn with_constituents(mut self, c: SttConstituents) -> Result<Self> {
        for (name, v) in [("eta", c.eta), ("alpha", c.alpha), ("ms", c.ms), ("volume", c.volume)] {
            ensure_positive(name, v)?;
        }
        let ic = c.intrinsic_ic_ua(self.hk_oe);
        if ((ic - self.ic0_ua) / self.ic0_ua).abs() >= 1e-6 {
            return Err(Error::invalid(
                "constituents",
                format!("reproduce ic0 = {ic} uA, configured {} uA", self.ic0_ua),
            ));
        }
        self.constituents = Some(c);
        Ok(self)
    }

    pub fn ic0_ua(&self) -> f64 {
        self.ic0_ua
    }

    pub fn hk_oe(&self) -> f64 {
        self.hk_oe
    }

    pub fn constituents(&self) -> Option<&SttConstituents> {
        self.constituents.as_ref()
    }
}

fn check_below_anisotropy(h_oe: f64, hk_oe: f64) -> Result<()> {
    ensure_finite("hstray_z", h_oe)?;
    if h_oe.abs() >= hk_oe {
        return Err(Error::FieldExceedsAnisotropy {
            field_oe: h_oe,
            hk_oe,
        });
    }
    Ok(())
}

/// `ic0·(1 ± h/Hk)`, '+' for P→AP and '−' for AP→P, in µA.
pub fn critical_current(params: &SwitchParams, hstray_z_oe: f64, direction: Direction) -> Result<f64> {
    check_below_anisotropy(hstray_z_oe, params.hk_oe)?;
    Ok(params.ic0_ua * (1.0 + direction.sign() * hstray_z_oe / params.hk_oe))
}

/// R_P constant, R_AP rolling off as `rp + (rap0 − rp)/(1 + (V/vh)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistanceModel {
    rp: f64,
    rap0: f64,
    vh: f64,
}

impl ResistanceModel {
    pub const DEFAULT_VH: f64 = 0.5;

    pub fn new(rp: f64, rap0: f64, vh: f64) -> Result<Self> {
        ensure_positive("rp", rp)?;
        ensure_positive("vh", vh)?;
        if !(rap0.is_finite() && rap0 > rp) {
            return Err(Error::invalid("rap0", format!("must exceed rp = {rp}, got {rap0}")));
        }
        Ok(ResistanceModel { rp, rap0, vh })
    }

    /// From R_P and the zero-bias TMR ratio.
    pub fn from_tmr(rp: f64, tmr0: f64, vh: f64) -> Result<Self> {
        ensure_positive("tmr0", tmr0)?;
        ResistanceModel::new(rp, rp * (1.0 + tmr0), vh)
    }

    pub fn rp(&self) -> f64 {
        self.rp
    }

    pub fn rap0(&self) -> f64 {
        self.rap0
    }

    pub fn vh(&self) -> f64 {
        self.vh
    }
}

pub fn resistance_at_voltage(model: &ResistanceModel, vp: f64, state: MtjState) -> f64 {
    match state {
        MtjState::P => model.rp,
        MtjState::Ap => {
            let x = vp / model.vh;
            model.rp + (model.rap0 - model.rp) / (1.0 + x * x)
        }
    }
}

/// Sun-model prefactor and the Δ used inside its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunParams {
    /// `2·μB·P / (e·m·(1 + P²))`, 1/(A·s).
    prefactor_b: f64,
    delta_for_log: f64,
}

impl SunParams {
    pub const DEFAULT_POLARIZATION: f64 = 0.6;

    pub fn new(prefactor_b: f64, delta_for_log: f64) -> Result<Self> {
        ensure_positive("prefactor_b", prefactor_b)?;
        ensure_finite("delta_for_log", delta_for_log)?;
        if delta_for_log <= 4.0 / (PI * PI) {
            return Err(Error::invalid("delta_for_log", format!("must exceed 4/π², got {delta_for_log}")));
        }
        Ok(SunParams {
            prefactor_b,
            delta_for_log,
        })
    }

    /// From the spin polarization and the FL moment `m = Ms·V` in A·m².
    pub fn from_constituents(polarization: f64, moment_am2: f64, delta_for_log: f64) -> Result<Self> {
        ensure_positive("polarization", polarization)?;
        ensure_positive("moment", moment_am2)?;
        let b = 2.0 * BOHR_MAGNETON * polarization
            / (ELEMENTARY_CHARGE * moment_am2 * (1.0 + polarization * polarization));
        SunParams::new(b, delta_for_log)
    }

    pub fn prefactor_b(&self) -> f64 {
        self.prefactor_b
    }

    pub fn delta_for_log(&self) -> f64 {
        self.delta_for_log
    }

    /// FL moment implied by `prefactor_b` at the given polarization, A·m².
    pub fn implied_moment(&self, polarization: f64) -> f64 {
        2.0 * BOHR_MAGNETON * polarization
            / (ELEMENTARY_CHARGE * self.prefactor_b * (1.0 + polarization * polarization))
    }

    /// `C + ln(π²Δ/4)`.
    fn log_term(&self) -> f64 {
        EULER_GAMMA + (PI * PI * self.delta_for_log / 4.0).ln()
    }

    /// t_w in seconds for an overdrive current in amperes.
    fn time_for_overdrive(&self, im_a: f64) -> f64 {
        self.log_term() / (2.0 * self.prefactor_b * im_a)
    }
}

/// Overdrive `V/R(V) − I_c` in µA, positive in the precessional regime.
pub fn overdrive_ua(
    sw: &SwitchParams,
    rmodel: &ResistanceModel,
    vp: f64,
    hstray_z_oe: f64,
    direction: Direction,
) -> Result<f64> {
    let ic = critical_current(sw, hstray_z_oe, direction)?;
    let drive = vp / resistance_at_voltage(rmodel, vp, direction.initial_state()) * 1e6;
    Ok(drive - ic)
}

/// Average precessional switching time, ns.
pub fn avg_switching_time(
    sw: &SwitchParams,
    sun: &SunParams,
    rmodel: &ResistanceModel,
    vp: f64,
    hstray_z_oe: f64,
    direction: Direction,
) -> Result<f64> {
    ensure_finite("vp", vp)?;
    let im = overdrive_ua(sw, rmodel, vp, hstray_z_oe, direction)?;
    if im <= 0.0 {
        let ic = critical_current(sw, hstray_z_oe, direction)?;
        return Err(Error::SubCriticalDrive {
            drive_ua: im + ic,
            ic_ua: ic,
        });
    }
    Ok(sun.time_for_overdrive(im * 1e-6) * 1e9)
}

/// Solves the prefactor so that `t_w(slow) − t_w(fast) = spread_ns` at `vp`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_sun_prefactor(
    spread_ns: f64,
    sw: &SwitchParams,
    rmodel: &ResistanceModel,
    delta_for_log: f64,
    vp: f64,
    h_slow_oe: f64,
    h_fast_oe: f64,
    direction: Direction,
) -> Result<SunParams> {
    ensure_positive("spread_ns", spread_ns)?;
    let slow = overdrive_ua(sw, rmodel, vp, h_slow_oe, direction)? * 1e-6;
    let fast = overdrive_ua(sw, rmodel, vp, h_fast_oe, direction)? * 1e-6;
    if slow <= 0.0 || fast <= 0.0 {
        return Err(Error::SubCriticalDrive {
            drive_ua: slow.min(fast) * 1e6,
            ic_ua: 0.0,
        });
    }
    if slow >= fast {
        return Err(Error::DegenerateFit("slow case must have the smaller overdrive".into()));
    }
    let unit = SunParams::new(1.0, delta_for_log)?;
    let spread_at_unit = unit.time_for_overdrive(slow) - unit.time_for_overdrive(fast);
    SunParams::new(spread_at_unit / (spread_ns * 1e-9), delta_for_log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityParams {
    delta0_ref: f64,
    hk_oe: f64,
    t_ref_k: f64,
}

impl StabilityParams {
    pub fn new(delta0_ref: f64, hk_oe: f64, t_ref_k: f64) -> Result<Self> {
        Ok(StabilityParams {
            delta0_ref: ensure_positive("delta0", delta0_ref)?,
            hk_oe: ensure_positive("hk", hk_oe)?,
            t_ref_k: ensure_positive("t_ref", t_ref_k)?,
        })
    }

    pub fn hk_oe(&self) -> f64 {
        self.hk_oe
    }

    pub fn t_ref_k(&self) -> f64 {
        self.t_ref_k
    }

    /// Intrinsic Δ₀ at temperature `t_k`, scaling as 1/T.
    pub fn delta0_at(&self, t_k: f64) -> Result<f64> {
        ensure_positive("temperature", t_k)?;
        Ok(self.delta0_ref * self.t_ref_k / t_k)
    }
}

/// `Δ₀(T)·(1 ± h/Hk)²`, '+' for P and '−' for AP.
pub fn thermal_stability(params: &StabilityParams, t_k: f64, hstray_z_oe: f64, state: MtjState) -> Result<f64> {
    let d0 = params.delta0_at(t_k)?;
    check_below_anisotropy(hstray_z_oe, params.hk_oe)?;
    let f = 1.0 + state.sign() * hstray_z_oe / params.hk_oe;
    Ok(d0 * f * f)
}

/// Total FL-center hz (intra + inter) for a pattern, Oe.
pub fn total_stray_field(config: &ArrayConfig, np8: NeighborhoodPattern, policy: DiscretizationPolicy) -> Result<f64> {
    let intra = intra_center_hz_oe(config.stack(), policy)?;
    let agg = AggressorFields::compute(config, policy)?;
    Ok(intra + agg.total(np8))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub delta: f64,
    pub state: MtjState,
    pub np8: NeighborhoodPattern,
}

/// Minimum Δ over both victim states and all 256 patterns. Ties keep the
/// first case in (P, AP) × (0..=255) order.
pub fn worst_case_delta(
    config: &ArrayConfig,
    params: &StabilityParams,
    t_k: f64,
    policy: DiscretizationPolicy,
) -> Result<WorstCase> {
    let intra = intra_center_hz_oe(config.stack(), policy)?;
    let agg = AggressorFields::compute(config, policy)?;
    let mut best: Option<WorstCase> = None;
    for state in [MtjState::P, MtjState::Ap] {
        for np8 in NeighborhoodPattern::all() {
            let delta = thermal_stability(params, t_k, intra + agg.total(np8), state)?;
            if best.is_none_or(|b| delta < b.delta) {
                best = Some(WorstCase { delta, state, np8 });
            }
        }
    }
    Ok(best.expect("512 cases evaluated"))
}
