//! R-H loop analysis, switching-probability curves and the thermal
//! activation fit of H_k and Δ₀.
//!
//! Loops follow the three-leg sweep 0 → +hmax → −hmax → 0. The FL starts
//! in AP, switches to P on the ascending leg at `hsw_p` and back to AP on
//! the descending leg at `hsw_n`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::statistics::{Data, Median, OrderStatistics};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::metrics::Direction;
use crate::mtj::ecd_from_rp;

pub const DEFAULT_POINTS: usize = 1000;
pub const DEFAULT_HMAX_OE: f64 = 3000.0;
pub const DEFAULT_READ_BIAS_V: f64 = 0.02;
pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_ATTEMPT_HZ: f64 = 1e9;
pub const DEFAULT_DWELL_S: f64 = 1e-3;

/// Plateaus closer than this many noise sigmas count as a stuck device.
const MIN_SEPARATION_SIGMA: f64 = 8.0;
/// MAD to Gaussian sigma.
const MAD_SCALE: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leg {
    Ascending,
    Descending,
    Return,
}

impl Leg {
    fn name(self) -> &'static str {
        match self {
            Leg::Ascending => "ascending",
            Leg::Descending => "descending",
            Leg::Return => "return",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisLoop {
    samples: Vec<(f64, f64)>,
    read_bias_v: f64,
    /// Index of the +hmax and −hmax turning points.
    turns: (usize, usize),
}

impl HysteresisLoop {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        Self::with_read_bias(samples, DEFAULT_READ_BIAS_V)
    }

    pub fn with_read_bias(samples: Vec<(f64, f64)>, read_bias_v: f64) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::InsufficientData(format!("{} loop samples, need at least 4", samples.len())));
        }
        for &(h, r) in &samples {
            ensure_finite("h_oe", h)?;
            ensure_positive("resistance", r)?;
        }
        let turns = find_turns(&samples)?;
        Ok(HysteresisLoop {
            samples,
            read_bias_v,
            turns,
        })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn read_bias_v(&self) -> f64 {
        self.read_bias_v
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fields(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    fn leg(&self, leg: Leg) -> &[(f64, f64)] {
        let (a, b) = self.turns;
        match leg {
            Leg::Ascending => &self.samples[..=a],
            Leg::Descending => &self.samples[a..=b],
            Leg::Return => &self.samples[b..],
        }
    }
}

fn find_turns(samples: &[(f64, f64)]) -> Result<(usize, usize)> {
    let argmax = |s: &[(f64, f64)]| {
        s.iter()
            .enumerate()
            .fold(0, |best, (i, p)| if p.0 > s[best].0 { i } else { best })
    };
    let a = argmax(samples);
    let tail = &samples[a..];
    let b = a + tail
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.0 < tail[best].0 { i } else { best });
    if a == 0 || b == a {
        return Err(Error::Parse("field sequence lacks the ascending and descending legs".into()));
    }
    let monotone = |s: &[(f64, f64)], up: bool| s.windows(2).all(|w| if up { w[1].0 >= w[0].0 } else { w[1].0 <= w[0].0 });
    if !monotone(&samples[..=a], true) || !monotone(&samples[a..=b], false) || !monotone(&samples[b..], true) {
        return Err(Error::Parse("field sequence is not piecewise monotone over three legs".into()));
    }
    Ok((a, b))
}

/// Field of sample `k` in the standard n-point sweep.
pub fn sweep_field(k: usize, n: usize, hmax_oe: f64) -> f64 {
    let s = k as f64 * 4.0 * hmax_oe / (n - 1) as f64;
    if s <= hmax_oe {
        s
    } else if s <= 3.0 * hmax_oe {
        2.0 * hmax_oe - s
    } else {
        s - 4.0 * hmax_oe
    }
}

/// Field spacing of the standard sweep.
pub fn sweep_step(n: usize, hmax_oe: f64) -> f64 {
    4.0 * hmax_oe / (n - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSummary {
    pub hsw_p: f64,
    pub hsw_n: f64,
    pub hc: f64,
    pub hoffset: f64,
    pub hs_intra_z: f64,
    pub rp: f64,
    pub rap: f64,
    pub tmr: f64,
    pub ecd_nm: f64,
    /// Pooled plateau noise, Ω (MAD estimate).
    pub noise_sigma: f64,
}

impl LoopSummary {
    fn from_fields(hsw_p: f64, hsw_n: f64, rp: f64, rap: f64, ecd_nm: f64, noise_sigma: f64) -> Self {
        let hc = (hsw_p - hsw_n) / 2.0;
        let hoffset = (hsw_p + hsw_n) / 2.0;
        LoopSummary {
            hsw_p,
            hsw_n,
            hc,
            hoffset,
            hs_intra_z: -hoffset,
            rp,
            rap,
            tmr: (rap - rp) / rp,
            ecd_nm,
            noise_sigma,
        }
    }
}

fn median(values: Vec<f64>) -> f64 {
    Data::new(values).median()
}

struct Plateaus {
    rp: f64,
    rap: f64,
    sigma: f64,
}

impl Plateaus {
    fn mid(&self) -> f64 {
        (self.rp + self.rap) / 2.0
    }
}

fn plateaus(samples: &[(f64, f64)]) -> Result<Plateaus> {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.1), b.max(s.1)));
    if hi <= lo {
        return Err(Error::NoTransition { leg: Leg::Ascending.name() });
    }
    let split = (lo + hi) / 2.0;
    let (low, high): (Vec<f64>, Vec<f64>) = samples.iter().map(|s| s.1).partition(|&r| r < split);
    let rp = median(low.clone());
    let rap = median(high.clone());
    let deviations: Vec<f64> = low
        .iter()
        .map(|r| (r - rp).abs())
        .chain(high.iter().map(|r| (r - rap).abs()))
        .collect();
    let sigma = MAD_SCALE * median(deviations);
    if rap - rp < MIN_SEPARATION_SIGMA * sigma {
        return Err(Error::NoTransition { leg: Leg::Ascending.name() });
    }
    Ok(Plateaus { rp, rap, sigma })
}

/// Mid-resistance crossings on one leg, linearly interpolated.
fn crossings(leg: &[(f64, f64)], mid: f64) -> Vec<(f64, bool)> {
    leg.windows(2)
        .filter_map(|w| {
            let (h0, r0) = w[0];
            let (h1, r1) = w[1];
            let (low0, low1) = (r0 < mid, r1 < mid);
            (low0 != low1).then(|| (h0 + (mid - r0) * (h1 - h0) / (r1 - r0), low1))
        })
        .collect()
}

fn single_crossing(lp: &HysteresisLoop, leg: Leg, mid: f64, to_low: bool) -> Result<f64> {
    let found = crossings(lp.leg(leg), mid);
    match found.as_slice() {
        [] => Err(Error::NoTransition { leg: leg.name() }),
        [(h, dir)] if *dir == to_low => Ok(*h),
        [_] => Err(Error::NoTransition { leg: leg.name() }),
        more => Err(Error::MultiTransition {
            leg: leg.name(),
            count: more.len(),
        }),
    }
}

/// Switching fields, plateaus and eCD of one loop. `ra` in Ω·µm².
pub fn analyze_loop(lp: &HysteresisLoop, ra: f64) -> Result<LoopSummary> {
    let pl = plateaus(&lp.samples)?;
    let mid = pl.mid();
    let hsw_p = single_crossing(lp, Leg::Ascending, mid, true)?;
    let hsw_n = single_crossing(lp, Leg::Descending, mid, false)?;
    let back = crossings(lp.leg(Leg::Return), mid);
    if !back.is_empty() {
        return Err(Error::MultiTransition {
            leg: Leg::Return.name(),
            count: back.len(),
        });
    }
    let ecd = ecd_from_rp(ra, pl.rp)?;
    Ok(LoopSummary::from_fields(hsw_p, hsw_n, pl.rp, pl.rap, ecd, pl.sigma))
}

/// [`analyze_loop`] over many devices in parallel, order preserved.
pub fn analyze_loops(loops: &[HysteresisLoop], ra: f64) -> Vec<Result<LoopSummary>> {
    loops.par_iter().map(|lp| analyze_loop(lp, ra)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub hsw_p: f64,
    pub hsw_n: f64,
    pub rp: f64,
    pub rap: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub n_points: usize,
    pub hmax_oe: f64,
}

impl SynthParams {
    pub fn new(hsw_p: f64, hsw_n: f64, rp: f64, rap: f64) -> Self {
        SynthParams {
            hsw_p,
            hsw_n,
            rp,
            rap,
            noise_sigma: 0.0,
            seed: 0,
            n_points: DEFAULT_POINTS,
            hmax_oe: DEFAULT_HMAX_OE,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    /// Half-width of the synthetic transition; switching fields must sit
    /// at least this far inside the sweep.
    pub fn transition_half_width(&self) -> f64 {
        sweep_step(self.n_points, self.hmax_oe)
    }
}

/// Fraction of the way from `from` to `to` across a transition of
/// half-width `w` centered at `center`, along coordinate `x`.
fn ramp(x: f64, center: f64, w: f64) -> f64 {
    ((x - center) / (2.0 * w) + 0.5).clamp(0.0, 1.0)
}

/// Deterministic synthetic loop. The transitions are linear over two grid
/// steps, so the mid-resistance crossing sits exactly at `hsw_p`/`hsw_n`.
pub fn synth_loop(p: &SynthParams) -> Result<HysteresisLoop> {
    ensure_positive("rp", p.rp)?;
    ensure_positive("hmax", p.hmax_oe)?;
    if p.rap.partial_cmp(&p.rp) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::invalid("rap", format!("must exceed rp = {}", p.rp)));
    }
    if p.n_points < 8 {
        return Err(Error::invalid("n_points", "need at least 8"));
    }
    ensure_finite("hsw_p", p.hsw_p)?;
    ensure_finite("hsw_n", p.hsw_n)?;
    if p.hsw_p.partial_cmp(&p.hsw_n) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::invalid("hsw_p", format!("must exceed hsw_n = {}", p.hsw_n)));
    }
    let w = p.transition_half_width();
    if p.hsw_p < w || p.hsw_p > p.hmax_oe - w || p.hsw_n < -p.hmax_oe + w || p.hsw_n > p.hmax_oe - w {
        return Err(Error::invalid("hsw", "switching fields must lie inside the sweep"));
    }
    if !(p.noise_sigma >= 0.0 && p.noise_sigma.is_finite()) {
        return Err(Error::invalid("noise_sigma", "must be finite and non-negative"));
    }
    let noise = Normal::new(0.0, p.noise_sigma).expect("sigma checked");
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let quarter = (p.n_points - 1) as f64 / 4.0;
    let span = p.rap - p.rp;
    let samples = (0..p.n_points)
        .map(|k| {
            let h = sweep_field(k, p.n_points, p.hmax_oe);
            let ideal = if (k as f64) <= quarter {
                p.rap - span * ramp(h, p.hsw_p, w)
            } else if (k as f64) <= 3.0 * quarter {
                p.rp + span * ramp(-h, -p.hsw_n, w)
            } else {
                p.rap
            };
            let r = if p.noise_sigma > 0.0 { ideal + noise.sample(&mut rng) } else { ideal };
            (h, r.max(f64::MIN_POSITIVE))
        })
        .collect();
    HysteresisLoop::new(samples)
}

/// Attempt frequency and field ramp rate of the switching statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampProtocol {
    pub attempt_hz: f64,
    pub ramp_oe_per_s: f64,
}

impl RampProtocol {
    pub fn new(attempt_hz: f64, ramp_oe_per_s: f64) -> Result<Self> {
        Ok(RampProtocol {
            attempt_hz: ensure_positive("attempt_frequency", attempt_hz)?,
            ramp_oe_per_s: ensure_positive("ramp_rate", ramp_oe_per_s)?,
        })
    }

    /// Ramp of a sweep that dwells `dwell_s` on each of `n` points.
    pub fn from_sweep(n: usize, hmax_oe: f64, dwell_s: f64, attempt_hz: f64) -> Result<Self> {
        ensure_positive("dwell", dwell_s)?;
        RampProtocol::new(attempt_hz, sweep_step(n, hmax_oe) / dwell_s)
    }
}

impl Default for RampProtocol {
    fn default() -> Self {
        RampProtocol::from_sweep(DEFAULT_POINTS, DEFAULT_HMAX_OE, DEFAULT_DWELL_S, DEFAULT_ATTEMPT_HZ)
            .expect("defaults are positive")
    }
}

/// Expected number of thermal escapes by field `h`:
/// `(f0/r)·∫₀ʰ exp(−Δ₀(1 − h′/Hk)²) dh′`.
fn escape_integral(hk: f64, delta0: f64, proto: &RampProtocol, h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let sd = delta0.sqrt();
    let pre = proto.attempt_hz / proto.ramp_oe_per_s * hk * std::f64::consts::PI.sqrt() / (2.0 * sd);
    pre * (erfc(sd * (1.0 - h / hk)) - erfc(sd))
}

/// Probability of having switched by field `h` under a constant ramp.
pub fn switching_cdf(hk: f64, delta0: f64, proto: &RampProtocol, h: f64) -> f64 {
    -(-escape_integral(hk, delta0, proto, h)).exp_m1()
}

/// Inverse of [`switching_cdf`] for `u` in (0, 1).
pub fn sample_switching_field(hk: f64, delta0: f64, proto: &RampProtocol, u: f64) -> f64 {
    let sd = delta0.sqrt();
    let pre = proto.attempt_hz / proto.ramp_oe_per_s * hk * std::f64::consts::PI.sqrt() / (2.0 * sd);
    let a = -(-u).ln_1p();
    let x = erfc_inv(a / pre + erfc(sd));
    hk * (1.0 - x / sd)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbPoint {
    pub h_oe: f64,
    pub p_switch: f64,
    pub n_trials: usize,
}

/// Switching probability against the field magnitude driving the
/// transition (`h_applied` for AP→P, `−h_applied` for P→AP).
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingProbCurve {
    pub direction: Direction,
    pub points: Vec<ProbPoint>,
}

impl SwitchingProbCurve {
    pub fn fields(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.h_oe).collect()
    }

    /// Every `k`-th point.
    pub fn subsample(&self, k: usize) -> Self {
        SwitchingProbCurve {
            direction: self.direction,
            points: self.points.iter().step_by(k.max(1)).copied().collect(),
        }
    }

    /// Noise-free model curve on the given fields.
    pub fn from_model(direction: Direction, fields: &[f64], hk: f64, delta0: f64, proto: &RampProtocol, n_trials: usize) -> Self {
        SwitchingProbCurve {
            direction,
            points: fields
                .iter()
                .map(|&h| ProbPoint {
                    h_oe: h,
                    p_switch: switching_cdf(hk, delta0, proto, h),
                    n_trials,
                })
                .collect(),
        }
    }
}

/// Weighted pool-adjacent-violators fit, non-decreasing.
pub fn isotonic_regression(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, n2) = blocks.pop().expect("len > 1");
            let (v1, w1, n1) = blocks.pop().expect("len > 1");
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

fn leg_curve(cycles: &[HysteresisLoop], mids: &[f64], leg: Leg, to_low: bool) -> Vec<ProbPoint> {
    let n = cycles.len();
    let len = cycles[0].leg(leg).len();
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let switched = cycles
                .iter()
                .zip(mids)
                .filter(|(c, &mid)| (c.leg(leg)[i].1 < mid) == to_low)
                .count();
            switched as f64 / n as f64
        })
        .collect();
    let clean = isotonic_regression(&raw, &vec![1.0; len]);
    cycles[0]
        .leg(leg)
        .iter()
        .zip(clean)
        .map(|(&(h, _), p)| ProbPoint {
            h_oe: h,
            p_switch: p,
            n_trials: n,
        })
        .collect()
}

/// AP→P and P→AP switching-probability curves from repeated loops of one
/// device. P→AP fields are negated; only non-negative drive fields are kept.
pub fn switching_probability(cycles: &[HysteresisLoop]) -> Result<(SwitchingProbCurve, SwitchingProbCurve)> {
    if cycles.len() < 2 {
        return Err(Error::InsufficientData(format!("{} cycles, need at least 2", cycles.len())));
    }
    let grid: Vec<f64> = cycles[0].fields().collect();
    for (i, c) in cycles.iter().enumerate().skip(1) {
        if c.len() != grid.len() || c.fields().zip(&grid).any(|(a, &b)| a != b) {
            return Err(Error::GridMismatch { cycle: i });
        }
    }
    let mids = cycles
        .iter()
        .map(|c| plateaus(&c.samples).map(|p| p.mid()))
        .collect::<Result<Vec<_>>>()?;
    let ap_p = leg_curve(cycles, &mids, Leg::Ascending, true);
    let p_ap = leg_curve(cycles, &mids, Leg::Descending, false)
        .into_iter()
        .map(|p| ProbPoint { h_oe: -p.h_oe, ..p })
        .filter(|p| p.h_oe >= 0.0)
        .collect();
    Ok((
        SwitchingProbCurve {
            direction: Direction::ApToP,
            points: ap_p,
        },
        SwitchingProbCurve {
            direction: Direction::PToAp,
            points: p_ap,
        },
    ))
}

/// Parameters for repeated loops of one device under thermal activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSynth {
    pub hk_oe: f64,
    pub delta0: f64,
    pub protocol: RampProtocol,
    pub rp: f64,
    pub rap: f64,
    pub noise_sigma: f64,
    pub n_cycles: usize,
    pub seed: u64,
}

/// Loops whose switching fields are drawn from the thermal model, both
/// directions independently.
pub fn synth_cycles(c: &CycleSynth) -> Result<Vec<HysteresisLoop>> {
    ensure_positive("hk", c.hk_oe)?;
    ensure_positive("delta0", c.delta0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    (0..c.n_cycles)
        .map(|i| {
            let hp = sample_switching_field(c.hk_oe, c.delta0, &c.protocol, unit.sample(&mut rng));
            let hn = -sample_switching_field(c.hk_oe, c.delta0, &c.protocol, unit.sample(&mut rng));
            let p = SynthParams::new(hp, hn, c.rp, c.rap).with_noise(c.noise_sigma, c.seed.wrapping_add(i as u64 + 1));
            synth_loop(&p)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalFit {
    pub hk_oe: f64,
    pub delta0: f64,
    /// Euclidean norm of the probability residuals.
    pub residual: f64,
    pub iterations: usize,
}

const FIT_MAX_ITER: usize = 500;

fn residuals(curve: &SwitchingProbCurve, proto: &RampProtocol, theta: [f64; 2], out: &mut Vec<f64>) {
    let (hk, d0) = (theta[0].exp(), theta[1].exp());
    out.clear();
    out.extend(curve.points.iter().map(|p| switching_cdf(hk, d0, proto, p.h_oe) - p.p_switch));
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn coarse_guess(curve: &SwitchingProbCurve, proto: &RampProtocol) -> [f64; 2] {
    let hmax = curve.points.iter().map(|p| p.h_oe).fold(0.0, f64::max).max(1.0);
    let mut r = Vec::new();
    let mut best = ([0.0; 2], f64::INFINITY);
    for i in 0..60 {
        let lhk = (hmax * 1.01).ln() + i as f64 * (30.0f64.ln() / 59.0);
        for j in 0..60 {
            let ld = 2.0f64.ln() + j as f64 * (250.0f64.ln() / 59.0);
            residuals(curve, proto, [lhk, ld], &mut r);
            let c = cost(&r);
            if c < best.1 {
                best = ([lhk, ld], c);
            }
        }
    }
    best.0
}

/// Levenberg-Marquardt fit of (H_k, Δ₀) in log space.
pub fn fit_hk_delta0(curve: &SwitchingProbCurve, proto: &RampProtocol) -> Result<ThermalFit> {
    if curve.points.len() < 3 {
        return Err(Error::InsufficientData(format!("{} curve points", curve.points.len())));
    }
    let (min_p, max_p) = curve
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.p_switch), b.max(p.p_switch)));
    if !(min_p < 0.1 && max_p > 0.9) {
        return Err(Error::InsufficientSpan { min_p, max_p });
    }
    let mut theta = coarse_guess(curve, proto);
    let mut r = Vec::new();
    residuals(curve, proto, theta, &mut r);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let (mut rp, mut rm, mut trial) = (Vec::new(), Vec::new(), Vec::new());
    let eps = 1e-6;
    for iter in 1..=FIT_MAX_ITER {
        let mut jac = [vec![0.0; r.len()], vec![0.0; r.len()]];
        for (k, col) in jac.iter_mut().enumerate() {
            let mut tp = theta;
            let mut tm = theta;
            tp[k] += eps;
            tm[k] -= eps;
            residuals(curve, proto, tp, &mut rp);
            residuals(curve, proto, tm, &mut rm);
            for ((out, a), b) in col.iter_mut().zip(&rp).zip(&rm) {
                *out = (a - b) / (2.0 * eps);
            }
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (a00, a01, a11) = (dot(&jac[0], &jac[0]), dot(&jac[0], &jac[1]), dot(&jac[1], &jac[1]));
        let (g0, g1) = (dot(&jac[0], &r), dot(&jac[1], &r));
        if g0.abs().max(g1.abs()) < 1e-15 {
            return Ok(finish(theta, c, iter));
        }
        loop {
            let (m00, m11) = (a00 * (1.0 + lambda), a11 * (1.0 + lambda));
            let det = m00 * m11 - a01 * a01;
            let step = [-(m11 * g0 - a01 * g1) / det, -(m00 * g1 - a01 * g0) / det];
            let cand = [theta[0] + step[0], theta[1] + step[1]];
            residuals(curve, proto, cand, &mut trial);
            let ct = cost(&trial);
            if ct.is_finite() && ct <= c {
                let small = step[0].abs().max(step[1].abs()) < 1e-11;
                let stalled = c - ct <= 1e-14 * c;
                theta = cand;
                std::mem::swap(&mut r, &mut trial);
                c = ct;
                lambda = (lambda / 3.0).max(1e-12);
                if small || stalled {
                    return Ok(finish(theta, c, iter));
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                return Ok(finish(theta, c, iter));
            }
        }
    }
    let best = finish(theta, c, FIT_MAX_ITER);
    Err(Error::NonConvergence {
        hk_oe: best.hk_oe,
        delta0: best.delta0,
        residual: best.residual,
    })
}

fn finish(theta: [f64; 2], cost: f64, iterations: usize) -> ThermalFit {
    ThermalFit {
        hk_oe: theta[0].exp(),
        delta0: theta[1].exp(),
        residual: cost.sqrt(),
        iterations,
    }
}

/// Median and quartiles of one eCD bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcdBin {
    pub ecd_nm: f64,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Groups `(ecd, value)` pairs into bins of `width_nm` centered on
/// multiples of the width, ascending.
pub fn aggregate_by_ecd(values: &[(f64, f64)], width_nm: f64) -> Result<Vec<EcdBin>> {
    ensure_positive("bin_width", width_nm)?;
    let mut keyed: Vec<(i64, f64)> = values
        .iter()
        .filter(|(e, v)| e.is_finite() && v.is_finite())
        .map(|&(e, v)| ((e / width_nm).round() as i64, v))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let bins = keyed
        .chunk_by(|a, b| a.0 == b.0)
        .map(|chunk| {
            let mut data = Data::new(chunk.iter().map(|c| c.1).collect::<Vec<_>>());
            EcdBin {
                ecd_nm: chunk[0].0 as f64 * width_nm,
                count: chunk.len(),
                median: data.median(),
                q1: data.lower_quartile(),
                q3: data.upper_quartile(),
            }
        })
        .collect();
    Ok(bins)
}

fn parse_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse(format!("missing column '{name}'")))
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse(format!("row {line}: missing value")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {line}: '{raw}' is not a number")))
}

/// How the loops of one measurement file relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopGrouping {
    /// One loop, no grouping column.
    Single,
    /// Repeated loops of one device, `cycle` column.
    Cycles,
    /// One loop per device, `device` column.
    Devices,
}

impl LoopGrouping {
    pub fn column(self) -> Option<&'static str> {
        match self {
            LoopGrouping::Single => None,
            LoopGrouping::Cycles => Some("cycle"),
            LoopGrouping::Devices => Some("device"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopFile {
    pub grouping: LoopGrouping,
    /// Group labels in order of first appearance.
    pub keys: Vec<String>,
    pub loops: Vec<HysteresisLoop>,
}

/// Reads `h_oe,resistance_ohm` rows, grouped by an optional `cycle` or
/// `device` column.
pub fn read_loop_file<R: Read>(reader: R) -> Result<LoopFile> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let ih = header_index(&headers, "h_oe")?;
    let ir = header_index(&headers, "resistance_ohm")?;
    let grouping = match (header_index(&headers, "cycle").is_ok(), header_index(&headers, "device").is_ok()) {
        (false, false) => LoopGrouping::Single,
        (true, false) => LoopGrouping::Cycles,
        (false, true) => LoopGrouping::Devices,
        (true, true) => return Err(Error::Parse("both 'cycle' and 'device' columns present".into())),
    };
    let ig = grouping.column().map(|c| header_index(&headers, c)).transpose()?;
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let key = ig.map(|i| rec.get(i).unwrap_or("").trim().to_string()).unwrap_or_default();
        let sample = (field(&rec, ih, line + 2)?, field(&rec, ir, line + 2)?);
        if groups.last().is_some_and(|g| g.0 == key) {
            groups.last_mut().expect("non-empty").1.push(sample);
        } else if groups.iter().any(|g| g.0 == key) {
            return Err(Error::Parse(format!("row {}: group '{key}' is not contiguous", line + 2)));
        } else {
            groups.push((key, vec![sample]));
        }
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData("no loop samples".into()));
    }
    let keys = groups.iter().map(|g| g.0.clone()).collect();
    let loops = groups.into_iter().map(|(_, s)| HysteresisLoop::new(s)).collect::<Result<_>>()?;
    Ok(LoopFile { grouping, keys, loops })
}

/// Loops of a measurement file regardless of grouping.
pub fn read_loops_csv<R: Read>(reader: R) -> Result<Vec<HysteresisLoop>> {
    Ok(read_loop_file(reader)?.loops)
}

/// Writes loops as `<group>,h_oe,resistance_ohm` with integer group labels.
pub fn write_loops_csv<W: Write>(writer: W, grouping: LoopGrouping, loops: &[HysteresisLoop]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    match grouping.column() {
        Some(c) => w.write_record([c, "h_oe", "resistance_ohm"]),
        None => w.write_record(["h_oe", "resistance_ohm"]),
    }
    .map_err(parse_err)?;
    for (i, lp) in loops.iter().enumerate() {
        for &(h, r) in lp.samples() {
            let (h, r) = (h.to_string(), r.to_string());
            match grouping {
                LoopGrouping::Single => w.write_record([h, r]),
                _ => w.write_record([i.to_string(), h, r]),
            }
            .map_err(parse_err)?;
        }
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Reads `ecd_nm,hs_intra_oe` calibration rows.
pub fn read_calibration_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let ie = header_index(&headers, "ecd_nm")?;
    let ih = header_index(&headers, "hs_intra_oe")?;
    rdr.records()
        .enumerate()
        .map(|(line, rec)| {
            let rec = rec.map_err(parse_err)?;
            Ok((field(&rec, ie, line + 2)?, field(&rec, ih, line + 2)?))
        })
        .collect()
}
