//! Inter-cell coupling in a 3×3 array with the victim C8 in the middle.
//!
//! Aggressor layout (pitch `p`, victim at the origin):
//!
//! ```text
//!   C4   C0   C5        (-p, p)  (0, p)  (p, p)
//!   C3   C8   C1        (-p, 0)  (0, 0)  (p, 0)
//!   C7   C2   C6        (-p,-p)  (0,-p)  (p,-p)
//! ```
//!
//! C0–C3 are the direct neighbours and C4–C7 the diagonal ones. A pattern
//! bit `d_i = 1` puts the FL of `Ci` in the AP state, which flips the sign of
//! its bound current; RL and HL are fixed.

use rayon::prelude::*;

use crate::error::{ensure_positive, Error, Result};
use crate::magnetostatics::{loop_field, DiscretizationPolicy, Point3};
use crate::mtj::MtjStack;

/// Densest pitch studied, as a multiple of eCD.
pub const MIN_PITCH_FACTOR: f64 = 1.5;
/// Loosest pitch studied, nm.
pub const MAX_PITCH_NM: f64 = 200.0;
/// Relative tolerance when grouping map values into distinct levels.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

/// Aggressor offsets in units of the pitch, indexed by cell number.
pub const CELL_OFFSETS: [(f64, f64); 8] = [
    (0.0, 1.0),
    (1.0, 0.0),
    (0.0, -1.0),
    (-1.0, 0.0),
    (-1.0, 1.0),
    (1.0, 1.0),
    (1.0, -1.0),
    (-1.0, -1.0),
];

/// The data held by C0..C7, as the binary numeral `[d0 … d7]₂` (d0 is the
/// most significant bit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeighborhoodPattern(u8);

impl NeighborhoodPattern {
    pub const ALL_P: NeighborhoodPattern = NeighborhoodPattern(0);
    pub const ALL_AP: NeighborhoodPattern = NeighborhoodPattern(255);

    pub const fn new(decimal: u8) -> Self {
        NeighborhoodPattern(decimal)
    }

    pub fn from_bits(bits: [bool; 8]) -> Self {
        let n = bits
            .iter()
            .fold(0u8, |acc, &b| (acc << 1) | u8::from(b));
        NeighborhoodPattern(n)
    }

    pub fn decimal(self) -> u8 {
        self.0
    }

    /// Data bit of cell `Ci`.
    pub fn bit(self, cell: usize) -> bool {
        assert!(cell < 8, "cell index {cell} out of range");
        (self.0 >> (7 - cell)) & 1 == 1
    }

    pub fn bits(self) -> [bool; 8] {
        std::array::from_fn(|i| self.bit(i))
    }

    pub fn ones_direct(self) -> u32 {
        (0..4).filter(|&i| self.bit(i)).count() as u32
    }

    pub fn ones_diag(self) -> u32 {
        (4..8).filter(|&i| self.bit(i)).count() as u32
    }

    pub fn complement(self) -> Self {
        NeighborhoodPattern(!self.0)
    }

    pub fn all() -> impl Iterator<Item = NeighborhoodPattern> {
        (0..=255u8).map(NeighborhoodPattern)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    stack: MtjStack,
    pitch_nm: f64,
}

impl ArrayConfig {
    /// Pitches below the cell footprint are rejected as overlapping.
    pub fn new(stack: MtjStack, pitch_nm: f64) -> Result<Self> {
        ensure_positive("pitch_nm", pitch_nm)?;
        let footprint = stack.footprint_nm();
        if pitch_nm < footprint {
            return Err(Error::Overlap {
                pitch_nm,
                diameter_nm: footprint,
            });
        }
        Ok(ArrayConfig { stack, pitch_nm })
    }

    pub fn stack(&self) -> &MtjStack {
        &self.stack
    }

    pub fn pitch_nm(&self) -> f64 {
        self.pitch_nm
    }

    /// True when the pitch lies in the studied window `[1.5·eCD, 200 nm]`.
    pub fn in_studied_range(&self) -> bool {
        pitch_in_studied_range(self.stack.ecd(), self.pitch_nm)
    }

    fn cell_center_nm(&self, cell: usize) -> (f64, f64) {
        let (ux, uy) = CELL_OFFSETS[cell];
        (ux * self.pitch_nm, uy * self.pitch_nm)
    }
}

fn pitch_in_studied_range(ecd: f64, pitch: f64) -> bool {
    let eps = 1e-9;
    pitch >= MIN_PITCH_FACTOR * ecd - eps && pitch <= MAX_PITCH_NM + eps
}

/// hz (Oe) at the victim FL center from all 24 aggressor loops.
pub fn inter_stray_field(
    config: &ArrayConfig,
    np8: NeighborhoodPattern,
    policy: DiscretizationPolicy,
) -> Result<f64> {
    let s = &config.stack;
    let mut hz = 0.0;
    for cell in 0..8 {
        let (x, y) = config.cell_center_nm(cell);
        let fl_sign = if np8.bit(cell) { -1.0 } else { 1.0 };
        for (layer, sign) in [(s.hl(), 1.0), (s.rl(), 1.0), (s.fl(), fl_sign)] {
            let lp = s.layer_loop(layer, x, y, sign)?;
            hz += loop_field(&lp, Point3::ORIGIN, policy)?.hz_oe();
        }
    }
    Ok(hz)
}

/// Per-aggressor hz contributions at the victim FL center, Oe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggressorFields {
    /// RL + HL of each aggressor.
    pub fixed: [f64; 8],
    /// FL of each aggressor in the P state.
    pub free_p: [f64; 8],
}

impl AggressorFields {
    pub fn compute(config: &ArrayConfig, policy: DiscretizationPolicy) -> Result<Self> {
        let s = &config.stack;
        let mut fixed = [0.0; 8];
        let mut free_p = [0.0; 8];
        for cell in 0..8 {
            let (x, y) = config.cell_center_nm(cell);
            let hz = |layer| -> Result<f64> {
                Ok(loop_field(&s.layer_loop(layer, x, y, 1.0)?, Point3::ORIGIN, policy)?.hz_oe())
            };
            fixed[cell] = hz(s.hl())? + hz(s.rl())?;
            free_p[cell] = hz(s.fl())?;
        }
        Ok(AggressorFields { fixed, free_p })
    }

    /// Superposed victim field for one pattern.
    pub fn total(&self, np8: NeighborhoodPattern) -> f64 {
        (0..8)
            .map(|i| {
                let fl = if np8.bit(i) { -self.free_p[i] } else { self.free_p[i] };
                self.fixed[i] + fl
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    /// hz at NP₈ = 0, Oe.
    pub base_field_oe: f64,
    /// hz increment per AP direct neighbour, Oe.
    pub step_direct_oe: f64,
    /// hz increment per AP diagonal neighbour, Oe.
    pub step_diag_oe: f64,
    /// hz for every pattern, indexed by the decimal form, Oe.
    pub full_map: Vec<f64>,
    /// Maximum map variation over the coercivity.
    pub psi: f64,
    /// Number of distinct levels in `full_map` at [`LEVEL_TOLERANCE`].
    pub distinct_levels: usize,
    /// Max residual of the affine model in (ones_direct, ones_diag), relative
    /// to the largest |hz|.
    pub affine_residual: f64,
}

impl CouplingReport {
    pub fn min(&self) -> f64 {
        self.full_map.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.full_map.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn variation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn hz(&self, np8: NeighborhoodPattern) -> f64 {
        self.full_map[np8.decimal() as usize]
    }
}

/// Counts values that differ by more than `rel_tol` of the largest magnitude.
pub fn count_distinct(values: &[f64], rel_tol: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = rel_tol * scale;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    1 + sorted.windows(2).filter(|w| w[1] - w[0] > tol).count()
}

/// Full 256-pattern map with its affine summary and Ψ = variation / `hc_oe`.
pub fn coupling_map(config: &ArrayConfig, hc_oe: f64, policy: DiscretizationPolicy) -> Result<CouplingReport> {
    if !(hc_oe.is_finite() && hc_oe > 0.0) {
        return Err(Error::MissingCoercivity(hc_oe));
    }
    let agg = AggressorFields::compute(config, policy)?;
    let full_map: Vec<f64> = NeighborhoodPattern::all().map(|n| agg.total(n)).collect();

    // Over the full enumeration the direct and diagonal counts are
    // independent Binomial(4, 1/2) variables (mean 2, variance 1), so the
    // least-squares slopes are plain covariances.
    let mean = full_map.iter().sum::<f64>() / 256.0;
    let (mut cov_d, mut cov_g) = (0.0, 0.0);
    for n in NeighborhoodPattern::all() {
        let dy = full_map[n.decimal() as usize] - mean;
        cov_d += (n.ones_direct() as f64 - 2.0) * dy;
        cov_g += (n.ones_diag() as f64 - 2.0) * dy;
    }
    let step_direct = cov_d / 256.0;
    let step_diag = cov_g / 256.0;
    let intercept = mean - 2.0 * step_direct - 2.0 * step_diag;

    let scale = full_map.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let affine_residual = if scale == 0.0 {
        0.0
    } else {
        NeighborhoodPattern::all()
            .map(|n| {
                let model = intercept + step_direct * n.ones_direct() as f64 + step_diag * n.ones_diag() as f64;
                (full_map[n.decimal() as usize] - model).abs()
            })
            .fold(0.0, f64::max)
            / scale
    };

    let lo = full_map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = full_map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CouplingReport {
        base_field_oe: full_map[0],
        step_direct_oe: step_direct,
        step_diag_oe: step_diag,
        distinct_levels: count_distinct(&full_map, LEVEL_TOLERANCE),
        psi: (hi - lo) / hc_oe,
        affine_residual,
        full_map,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchRange {
    pub min_nm: f64,
    pub max_nm: f64,
    pub step_nm: f64,
}

impl PitchRange {
    pub fn new(min_nm: f64, max_nm: f64, step_nm: f64) -> Result<Self> {
        ensure_positive("pitch min", min_nm)?;
        ensure_positive("pitch step", step_nm)?;
        if !(max_nm.is_finite() && max_nm >= min_nm) {
            return Err(Error::invalid("pitch max", format!("must be >= min ({min_nm}), got {max_nm}")));
        }
        Ok(PitchRange { min_nm, max_nm, step_nm })
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max_nm - self.min_nm) / self.step_nm + 1e-9).floor() as usize;
        (0..=n).map(|k| self.min_nm + k as f64 * self.step_nm).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiRow {
    pub ecd_nm: f64,
    pub pitch_nm: f64,
    pub psi: f64,
}

/// Ψ over every (eCD, pitch) grid point inside the studied window. Rows come
/// back ordered by eCD (input order) then pitch, regardless of threading.
pub fn psi_sweep(
    template: &MtjStack,
    ecd_list: &[f64],
    pitches: PitchRange,
    hc_oe: f64,
    policy: DiscretizationPolicy,
) -> Result<Vec<PsiRow>> {
    if !(hc_oe.is_finite() && hc_oe > 0.0) {
        return Err(Error::MissingCoercivity(hc_oe));
    }
    let grid: Vec<(f64, f64)> = ecd_list
        .iter()
        .flat_map(|&e| pitches.values().into_iter().map(move |p| (e, p)))
        .filter(|&(e, p)| pitch_in_studied_range(e, p))
        .collect();
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    grid.par_iter()
        .map(|&(ecd, pitch)| {
            let config = ArrayConfig::new(template.with_ecd(ecd)?, pitch)?;
            let report = coupling_map(&config, hc_oe, policy)?;
            Ok(PsiRow {
                ecd_nm: ecd,
                pitch_nm: pitch,
                psi: report.psi,
            })
        })
        .collect()
}

/// Candidate pitches `1.5·eCD + k` nm up to 200 nm, with 200 nm appended.
pub fn studied_pitch_grid(ecd: f64) -> Vec<f64> {
    let start = MIN_PITCH_FACTOR * ecd;
    let mut grid: Vec<f64> = (0..)
        .map(|k| start + k as f64)
        .take_while(|&p| p <= MAX_PITCH_NM + 1e-9)
        .collect();
    if grid.last().is_none_or(|&p| (p - MAX_PITCH_NM).abs() > 1e-9) && start <= MAX_PITCH_NM {
        grid.push(MAX_PITCH_NM);
    }
    grid
}

/// Smallest studied pitch whose Ψ is at most `psi_target`, or `None` when
/// even 200 nm exceeds it.
pub fn min_pitch_for_psi(
    stack: &MtjStack,
    hc_oe: f64,
    psi_target: f64,
    policy: DiscretizationPolicy,
) -> Result<Option<f64>> {
    ensure_positive("psi_target", psi_target)?;
    for pitch in studied_pitch_grid(stack.ecd()) {
        let config = ArrayConfig::new(*stack, pitch)?;
        if coupling_map(&config, hc_oe, policy)?.psi <= psi_target {
            return Ok(Some(pitch));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn policy() -> DiscretizationPolicy {
        DiscretizationPolicy::default()
    }

    fn config(ecd: f64, pitch: f64) -> ArrayConfig {
        ArrayConfig::new(presets::calibrated_stack().with_ecd(ecd).unwrap(), pitch).unwrap()
    }

    #[test]
    fn pattern_bits_round_trip() {
        for n in NeighborhoodPattern::all() {
            assert_eq!(NeighborhoodPattern::from_bits(n.bits()), n);
            assert_eq!(n.ones_direct() + n.ones_diag(), n.decimal().count_ones());
        }
        let p = NeighborhoodPattern::from_bits([true, false, false, false, false, false, false, false]);
        assert_eq!(p.decimal(), 128);
        assert_eq!(p.ones_direct(), 1);
        assert_eq!(NeighborhoodPattern::new(1).ones_diag(), 1);
    }

    #[test]
    fn overlap_is_rejected() {
        let s = presets::calibrated_stack().with_ecd(55.0).unwrap();
        assert!(matches!(ArrayConfig::new(s, 50.0), Err(Error::Overlap { .. })));
        assert!(ArrayConfig::new(s, 55.0).is_ok());
        assert!(!ArrayConfig::new(s, 60.0).unwrap().in_studied_range());
        assert!(ArrayConfig::new(s, 82.5).unwrap().in_studied_range());
    }

    #[test]
    fn zero_moments_give_zero_map() {
        let s = presets::calibrated_stack().scaled(0.0).unwrap().with_ecd(55.0).unwrap();
        let c = ArrayConfig::new(s, 90.0).unwrap();
        for n in [0u8, 17, 255] {
            assert_eq!(inter_stray_field(&c, NeighborhoodPattern::new(n), policy()).unwrap(), 0.0);
        }
        let r = coupling_map(&c, 2200.0, policy()).unwrap();
        assert_eq!(r.psi, 0.0);
        assert_eq!(r.step_direct_oe, 0.0);
        assert_eq!(r.step_diag_oe, 0.0);
    }

    #[test]
    fn direct_sum_matches_superposed_map() {
        let c = config(55.0, 90.0);
        let r = coupling_map(&c, 2200.0, policy()).unwrap();
        for n in [0u8, 1, 37, 128, 200, 255] {
            let np = NeighborhoodPattern::new(n);
            let direct = inter_stray_field(&c, np, policy()).unwrap();
            assert!((direct - r.hz(np)).abs() <= 1e-9 * r.max().abs());
        }
    }

    #[test]
    fn complement_identity_over_all_patterns() {
        let c = config(55.0, 90.0);
        let h0 = inter_stray_field(&c, NeighborhoodPattern::ALL_P, policy()).unwrap();
        let h255 = inter_stray_field(&c, NeighborhoodPattern::ALL_AP, policy()).unwrap();
        let expected = h0 + h255;
        // brute force over the direct 24-loop sum
        for n in NeighborhoodPattern::all() {
            let a = inter_stray_field(&c, n, policy()).unwrap();
            let b = inter_stray_field(&c, n.complement(), policy()).unwrap();
            assert!((a + b - expected).abs() <= 1e-9 * expected.abs(), "n = {}", n.decimal());
        }
    }

    #[test]
    fn map_structure_and_extremes() {
        let r = coupling_map(&config(55.0, 90.0), 2200.0, policy()).unwrap();
        assert_eq!(r.distinct_levels, 25);
        assert!(r.affine_residual < 1e-9);
        assert!(r.step_direct_oe > 0.0 && r.step_diag_oe > 0.0);
        assert_eq!(r.min(), r.hz(NeighborhoodPattern::ALL_P));
        assert_eq!(r.max(), r.hz(NeighborhoodPattern::ALL_AP));
        for n in NeighborhoodPattern::all() {
            let model = r.base_field_oe
                + n.ones_direct() as f64 * r.step_direct_oe
                + n.ones_diag() as f64 * r.step_diag_oe;
            assert!((r.hz(n) - model).abs() <= 1e-9 * r.max().abs());
        }
    }

    #[test]
    fn missing_coercivity_is_an_error() {
        let c = config(55.0, 90.0);
        assert!(matches!(coupling_map(&c, 0.0, policy()), Err(Error::MissingCoercivity(_))));
        assert!(matches!(coupling_map(&c, f64::NAN, policy()), Err(Error::MissingCoercivity(_))));
    }

    #[test]
    fn steps_decay_with_pitch() {
        let mut last = (f64::INFINITY, f64::INFINITY);
        for pitch in [53.0, 60.0, 80.0, 100.0, 140.0, 200.0] {
            let r = coupling_map(&config(35.0, pitch), 2200.0, policy()).unwrap();
            let (d, g) = (r.step_direct_oe.abs(), r.step_diag_oe.abs());
            assert!(g < d);
            assert!(d < last.0 && g < last.1);
            last = (d, g);
        }
    }

    #[test]
    fn count_distinct_groups_close_values() {
        assert_eq!(count_distinct(&[], 1e-9), 0);
        assert_eq!(count_distinct(&[1.0, 1.0 + 1e-12, 2.0], 1e-9), 2);
        assert_eq!(count_distinct(&[0.0, 0.0], 1e-9), 1);
    }

    #[test]
    fn pitch_range_values() {
        let r = PitchRange::new(50.0, 52.0, 0.5).unwrap();
        assert_eq!(r.values(), vec![50.0, 50.5, 51.0, 51.5, 52.0]);
        assert!(PitchRange::new(50.0, 40.0, 1.0).is_err());
        assert!(PitchRange::new(50.0, 60.0, 0.0).is_err());
    }

    #[test]
    fn sweep_skips_out_of_window_rows_and_keeps_order() {
        let s = presets::calibrated_stack();
        let rows = psi_sweep(&s, &[55.0, 35.0], PitchRange::new(50.0, 90.0, 10.0).unwrap(), 2200.0, policy()).unwrap();
        let keys: Vec<(f64, f64)> = rows.iter().map(|r| (r.ecd_nm, r.pitch_nm)).collect();
        assert_eq!(keys, vec![(55.0, 90.0), (35.0, 60.0), (35.0, 70.0), (35.0, 80.0), (35.0, 90.0)]);
        assert!(matches!(
            psi_sweep(&s, &[150.0], PitchRange::new(50.0, 90.0, 10.0).unwrap(), 2200.0, policy()),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn sweep_is_linear_in_moments() {
        let s = presets::calibrated_stack();
        let range = PitchRange::new(60.0, 200.0, 35.0).unwrap();
        let a = psi_sweep(&s, &[35.0, 55.0], range, 2200.0, policy()).unwrap();
        let b = psi_sweep(&s.scaled(2.0).unwrap(), &[35.0, 55.0], range, 2200.0, policy()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y.psi - 2.0 * x.psi).abs() <= 1e-12 * x.psi);
        }
    }

    #[test]
    fn studied_grid_bounds() {
        let g = studied_pitch_grid(35.0);
        assert_eq!(g[0], 52.5);
        assert_eq!(*g.last().unwrap(), 200.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(studied_pitch_grid(150.0).is_empty());
    }

    #[test]
    fn min_pitch_loosest_target() {
        let s = presets::calibrated_stack().with_ecd(35.0).unwrap();
        assert_eq!(min_pitch_for_psi(&s, 2200.0, 1.0, policy()).unwrap(), Some(52.5));
        assert_eq!(min_pitch_for_psi(&s, 2200.0, 1e-9, policy()).unwrap(), None);
        assert!(min_pitch_for_psi(&s, 2200.0, 0.0, policy()).is_err());
    }

    #[test]
    fn min_pitch_is_monotone_in_target() {
        let s = presets::calibrated_stack().with_ecd(35.0).unwrap();
        let mut last = f64::INFINITY;
        for target in [0.005, 0.01, 0.02, 0.04, 0.08] {
            let p = min_pitch_for_psi(&s, 2200.0, target, policy()).unwrap().unwrap();
            assert!(p <= last);
            last = p;
        }
    }
}
