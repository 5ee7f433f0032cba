//! TOML run configuration and its translation into validated model objects.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mram_coupling::array::PitchRange;
use mram_coupling::characterization::{RampProtocol, DEFAULT_ATTEMPT_HZ, DEFAULT_DWELL_S};
use mram_coupling::magnetostatics::DiscretizationPolicy;
use mram_coupling::metrics::{
    ResistanceModel, StabilityParams, SttConstituents, SunParams, SwitchParams,
};
use mram_coupling::mtj::{calibrate_ms_t, rp_from_ecd, LayerKind, LayerSpec, MtjStack};
use mram_coupling::{characterization, presets};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub stack: StackSection,
    pub device: DeviceSection,
    pub sweep: SweepSection,
    pub characterize: CharacterizeSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    /// Signed Ms·t, A.
    pub ms_t: f64,
    pub z_nm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diameter_nm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackSection {
    pub ecd_nm: f64,
    pub ra_ohm_um2: f64,
    pub segments: usize,
    /// `ecd_nm,hs_intra_oe` file; RL and HL moments are refitted to it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_file: Option<PathBuf>,
    pub fl: LayerSection,
    pub rl: LayerSection,
    pub hl: LayerSection,
}

impl Default for StackSection {
    fn default() -> Self {
        let s = presets::calibrated_stack();
        let layer = |l: &LayerSpec| LayerSection {
            ms_t: l.ms_t,
            z_nm: l.z_center_nm,
            diameter_nm: l.diameter_nm,
        };
        StackSection {
            ecd_nm: s.ecd(),
            ra_ohm_um2: s.ra(),
            segments: DiscretizationPolicy::DEFAULT_SEGMENTS,
            calibration_file: None,
            fl: layer(s.fl()),
            rl: layer(s.rl()),
            hl: layer(s.hl()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResistanceSection {
    /// Defaults to RA / area at the stack eCD.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rp_ohm: Option<f64>,
    pub tmr0: f64,
    pub vh_v: f64,
}

impl Default for ResistanceSection {
    fn default() -> Self {
        ResistanceSection {
            rp_ohm: None,
            tmr0: presets::TMR0,
            vh_v: presets::VH_V,
        }
    }
}

/// Sun prefactor: explicit `prefactor_b`, else from `moment_am2` and
/// `polarization`, else calibrated to `spread_ns` at `calibration_vp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefactor_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_am2: Option<f64>,
    pub polarization: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_for_log: Option<f64>,
    pub spread_ns: f64,
    pub calibration_vp: f64,
}

impl Default for SunSection {
    fn default() -> Self {
        SunSection {
            prefactor_b: None,
            moment_am2: None,
            polarization: presets::SPIN_POLARIZATION,
            delta_for_log: None,
            spread_ns: presets::SUN_SPREAD_NS,
            calibration_vp: presets::SUN_CAL_VP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SttSection {
    pub eta: f64,
    pub alpha: f64,
    pub ms_a_per_m: f64,
    pub volume_m3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub ic0_ua: f64,
    pub hk_oe: f64,
    pub delta0: f64,
    pub t_ref_k: f64,
    pub hc_oe: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stt: Option<SttSection>,
    pub resistance: ResistanceSection,
    pub sun: SunSection,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            ic0_ua: presets::IC0_UA,
            hk_oe: presets::HK_OE,
            delta0: presets::DELTA0,
            t_ref_k: presets::T_REF_K,
            hc_oe: presets::HC_OE,
            stt: None,
            resistance: ResistanceSection::default(),
            sun: SunSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSection {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl RangeSection {
    fn values(&self, name: &str) -> anyhow::Result<Vec<f64>> {
        if !(self.step.is_finite() && self.step > 0.0) {
            bail!(ConfigError::new(format!("{name}.step must be positive, got {}", self.step)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.max >= self.min) {
            bail!(ConfigError::new(format!("{name}: need min <= max, got [{}, {}]", self.min, self.max)));
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.min + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Sizes for `intra` and `psi`, nm.
    pub ecd_nm: Vec<f64>,
    /// Radial profile samples per size for `intra`; 0 disables.
    pub profile_points: usize,
    pub inter_ecd_nm: f64,
    pub inter_pitch_nm: f64,
    pub pitch_nm: RangeSection,
    /// Pitches of the `metrics` tables, in units of the stack eCD.
    pub pitch_factors: Vec<f64>,
    pub voltage_v: RangeSection,
    pub temperature_k: RangeSection,
    /// Pitch factor for the Δ-vs-temperature table.
    pub delta_pitch_factor: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ecd_nm: presets::PSI_SIZES_NM.to_vec(),
            profile_points: 0,
            inter_ecd_nm: presets::MAP_ANCHOR.ecd_nm,
            inter_pitch_nm: presets::MAP_ANCHOR.pitch_nm,
            pitch_nm: RangeSection {
                min: 50.0,
                max: 200.0,
                step: 0.5,
            },
            pitch_factors: vec![1.5, 2.0, 3.0],
            voltage_v: RangeSection {
                min: 0.6,
                max: 1.2,
                step: 0.02,
            },
            temperature_k: RangeSection {
                min: 250.0,
                max: 400.0,
                step: 10.0,
            },
            delta_pitch_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub devices_per_size: usize,
    pub sizes_nm: Vec<f64>,
    pub n_cycles: usize,
    pub noise_fraction: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            devices_per_size: 20,
            sizes_nm: vec![35.0, 55.0, 75.0, 100.0, 175.0],
            n_cycles: characterization::DEFAULT_TRIALS,
            noise_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizeSection {
    /// Loop CSVs; files with several cycles also get a switching fit.
    pub loops: Vec<PathBuf>,
    pub attempt_hz: f64,
    pub dwell_s: f64,
    pub bin_width_nm: f64,
    pub synthetic: SyntheticSection,
}

impl Default for CharacterizeSection {
    fn default() -> Self {
        CharacterizeSection {
            loops: Vec::new(),
            attempt_hz: DEFAULT_ATTEMPT_HZ,
            dwell_s: DEFAULT_DWELL_S,
            bin_width_nm: 5.0,
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub precision: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            precision: 9,
        }
    }
}

/// Validated model objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Model {
    pub stack: MtjStack,
    pub policy: DiscretizationPolicy,
    pub switch: SwitchParams,
    pub stability: StabilityParams,
    pub resistance: ResistanceModel,
    pub sun: SunParams,
    pub hc_oe: f64,
    pub pitches: PitchRange,
    pub voltages: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub protocol: RampProtocol,
}

fn field<T>(name: &str, r: mram_coupling::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| ConfigError::new(format!("{name}: {e}")).into())
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.stack.calibration_file.as_mut() {
            *p = base.join(&*p);
        }
        for p in &mut cfg.characterize.loops {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    fn check_files(&self) -> anyhow::Result<()> {
        let files = self.stack.calibration_file.iter().chain(&self.characterize.loops);
        for f in files {
            if !f.is_file() {
                bail!(ConfigError::new(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    fn template_stack(&self, policy: DiscretizationPolicy) -> anyhow::Result<MtjStack> {
        let s = &self.stack;
        let layer = |kind, l: &LayerSection| {
            let spec = LayerSpec::new(kind, l.ms_t, l.z_nm);
            match l.diameter_nm {
                Some(d) => spec.with_diameter(d),
                None => spec,
            }
        };
        let stack = field(
            "stack",
            MtjStack::new(
                layer(LayerKind::Free, &s.fl),
                layer(LayerKind::Reference, &s.rl),
                layer(LayerKind::Hard, &s.hl),
                s.ra_ohm_um2,
                s.ecd_nm,
            ),
        )?;
        let Some(path) = &s.calibration_file else {
            return Ok(stack);
        };
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let measured = characterization::read_calibration_csv(file)?;
        let cal = calibrate_ms_t(&measured, &stack, policy)?;
        Ok(cal.apply(&stack)?)
    }

    /// Builds every model object; any invalid value fails here.
    pub fn build(&self) -> anyhow::Result<Model> {
        self.check_files()?;
        let d = &self.device;
        let policy = field("stack.segments", DiscretizationPolicy::new(self.stack.segments))?;
        let stack = self.template_stack(policy)?;
        let mut switch = field("device", SwitchParams::new(d.ic0_ua, d.hk_oe))?;
        if let Some(c) = &d.stt {
            let c = SttConstituents {
                eta: c.eta,
                alpha: c.alpha,
                ms: c.ms_a_per_m,
                volume: c.volume_m3,
            };
            switch = field("device.stt", switch.with_constituents(c))?;
        }
        let stability = field("device", StabilityParams::new(d.delta0, d.hk_oe, d.t_ref_k))?;
        if !(d.hc_oe.is_finite() && d.hc_oe > 0.0) {
            bail!(ConfigError::new(format!("device.hc_oe must be positive, got {}", d.hc_oe)));
        }
        let r = &d.resistance;
        let rp = match r.rp_ohm {
            Some(rp) => rp,
            None => field("stack", rp_from_ecd(stack.ra(), stack.ecd()))?,
        };
        let resistance = field("device.resistance", ResistanceModel::from_tmr(rp, r.tmr0, r.vh_v))?;
        let sun_cfg = &d.sun;
        let delta_log = sun_cfg.delta_for_log.unwrap_or(d.delta0);
        let sun = match (sun_cfg.prefactor_b, sun_cfg.moment_am2) {
            (Some(b), _) => field("device.sun", SunParams::new(b, delta_log))?,
            (None, Some(m)) => field("device.sun", SunParams::from_constituents(sun_cfg.polarization, m, delta_log))?,
            (None, None) => field(
                "device.sun",
                presets::calibrated_sun_params(
                    &stack,
                    &switch,
                    &resistance,
                    delta_log,
                    sun_cfg.spread_ns,
                    sun_cfg.calibration_vp,
                    policy,
                ),
            )?,
        };
        let sw = &self.sweep;
        for &e in &sw.ecd_nm {
            if !(e.is_finite() && e > 0.0) {
                bail!(ConfigError::new(format!("sweep.ecd_nm entries must be positive, got {e}")));
            }
        }
        for &f in sw.pitch_factors.iter().chain([&sw.delta_pitch_factor]) {
            if !(f.is_finite() && f > 0.0) {
                bail!(ConfigError::new(format!("sweep pitch factors must be positive, got {f}")));
            }
        }
        let pr = &sw.pitch_nm;
        let pitches = field("sweep.pitch_nm", PitchRange::new(pr.min, pr.max, pr.step))?;
        let voltages = sw.voltage_v.values("sweep.voltage_v")?;
        let temperatures = sw.temperature_k.values("sweep.temperature_k")?;
        if temperatures.iter().any(|&t| t <= 0.0) {
            bail!(ConfigError::new("sweep.temperature_k must stay above 0 K"));
        }
        if voltages.iter().any(|&v| v < 0.0) {
            bail!(ConfigError::new("sweep.voltage_v must be non-negative"));
        }
        let c = &self.characterize;
        let protocol = field("characterize", RampProtocol::from_sweep(
            characterization::DEFAULT_POINTS,
            characterization::DEFAULT_HMAX_OE,
            c.dwell_s,
            c.attempt_hz,
        ))?;
        if !(c.bin_width_nm.is_finite() && c.bin_width_nm > 0.0) {
            bail!(ConfigError::new("characterize.bin_width_nm must be positive"));
        }
        if self.output.precision == 0 || self.output.precision > 17 {
            bail!(ConfigError::new("output.precision must be in 1..=17"));
        }
        Ok(Model {
            stack,
            policy,
            switch,
            stability,
            resistance,
            sun,
            hc_oe: d.hc_oe,
            pitches,
            voltages,
            temperatures,
            protocol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults_build() {
        let m = RunConfig::default().build().unwrap();
        assert_eq!(m.stack, presets::calibrated_stack());
        assert_eq!(m.sun, presets::sun_params());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[device]\nic0 = 1.0\n").is_err());
    }

    #[test]
    fn invalid_values_fail_fast() {
        let mut cfg = RunConfig::default();
        cfg.device.hk_oe = -1.0;
        let err = cfg.build().unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some(), "{err:#}");
        let mut cfg = RunConfig::default();
        cfg.sweep.voltage_v.step = 0.0;
        assert!(cfg.build().is_err());
        let mut cfg = RunConfig::default();
        cfg.characterize.loops = vec![PathBuf::from("/nonexistent/loop.csv")];
        assert!(cfg.build().unwrap_err().downcast_ref::<ConfigError>().is_some());
    }
}
