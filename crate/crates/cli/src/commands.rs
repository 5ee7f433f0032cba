//! Subcommand bodies. Each writes its CSVs into the output directory and
//! returns one human-readable summary line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mram_coupling::array::{
    coupling_map, psi_sweep, AggressorFields, ArrayConfig, NeighborhoodPattern, MAX_PITCH_NM, MIN_PITCH_FACTOR,
};
use mram_coupling::characterization::{
    aggregate_by_ecd, analyze_loop, fit_hk_delta0, read_loop_file, switching_probability, synth_cycles, synth_loop,
    write_loops_csv, CycleSynth, LoopGrouping, LoopSummary, RampProtocol, SynthParams,
};
use mram_coupling::metrics::{
    avg_switching_time, critical_current, thermal_stability, worst_case_delta, Direction, MtjState,
};
use mram_coupling::mtj::{intra_center_hz_oe, intra_stray_profile, rp_from_ecd};
use mram_coupling::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Model, RunConfig};
use crate::output::{fmt_sig, Cell, Table};
use crate::DataError;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub model: &'a Model,
    pub out: &'a Path,
    pub seed: u64,
}

impl Ctx<'_> {
    fn digits(&self) -> usize {
        self.cfg.output.precision
    }

    fn write(&self, table: &Table, name: &str) -> anyhow::Result<PathBuf> {
        table.write(self.out, name, self.digits())
    }
}

pub fn intra(ctx: &Ctx) -> anyhow::Result<String> {
    let m = ctx.model;
    let sizes = &ctx.cfg.sweep.ecd_nm;
    let fields = sizes
        .par_iter()
        .map(|&e| intra_center_hz_oe(&m.stack.with_ecd(e)?, m.policy))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut t = Table::new(&["ecd_nm", "hz_center_oe"]);
    for (&e, &h) in sizes.iter().zip(&fields) {
        t.push(vec![e.into(), h.into()]);
    }
    let path = ctx.write(&t, "intra.csv")?;
    let n = ctx.cfg.sweep.profile_points;
    if n > 0 {
        for &e in sizes {
            let prof = intra_stray_profile(&m.stack.with_ecd(e)?, n, m.policy)?;
            let mut p = Table::new(&["r_nm", "hz_oe"]);
            for (&r, &h) in prof.radii_nm.iter().zip(&prof.hz_oe) {
                p.push(vec![r.into(), h.into()]);
            }
            ctx.write(&p, &format!("intra_profile_{}nm.csv", fmt_sig(e, ctx.digits())))?;
        }
    }
    Ok(format!("intra: {} sizes -> {}", t.len(), path.display()))
}

pub fn inter(ctx: &Ctx, ecd: Option<f64>, pitch: Option<f64>) -> anyhow::Result<String> {
    let m = ctx.model;
    let ecd = ecd.unwrap_or(ctx.cfg.sweep.inter_ecd_nm);
    let pitch = pitch.unwrap_or(ctx.cfg.sweep.inter_pitch_nm);
    let config = ArrayConfig::new(m.stack.with_ecd(ecd)?, pitch)?;
    let rep = coupling_map(&config, m.hc_oe, m.policy)?;
    let mut t = Table::new(&["np8", "ones_direct", "ones_diag", "hz_oe"]);
    for np in NeighborhoodPattern::all() {
        t.push(vec![np.decimal().into(), np.ones_direct().into(), np.ones_diag().into(), rep.hz(np).into()]);
    }
    ctx.write(&t, "inter_map.csv")?;
    let mut s = Table::new(&[
        "ecd_nm",
        "pitch_nm",
        "base_oe",
        "step_direct_oe",
        "step_diag_oe",
        "min_oe",
        "max_oe",
        "psi",
        "distinct_levels",
    ]);
    s.push(vec![
        ecd.into(),
        pitch.into(),
        rep.base_field_oe.into(),
        rep.step_direct_oe.into(),
        rep.step_diag_oe.into(),
        rep.min().into(),
        rep.max().into(),
        rep.psi.into(),
        rep.distinct_levels.into(),
    ]);
    ctx.write(&s, "inter_summary.csv")?;
    let d = ctx.digits().min(6);
    Ok(format!(
        "inter: eCD {} nm, pitch {} nm: base {} Oe, step_direct {} Oe, step_diag {} Oe, psi {}, {} levels",
        fmt_sig(ecd, d),
        fmt_sig(pitch, d),
        fmt_sig(rep.base_field_oe, d),
        fmt_sig(rep.step_direct_oe, d),
        fmt_sig(rep.step_diag_oe, d),
        fmt_sig(rep.psi, d),
        rep.distinct_levels
    ))
}

pub fn psi(ctx: &Ctx) -> anyhow::Result<String> {
    let m = ctx.model;
    let sizes = &ctx.cfg.sweep.ecd_nm;
    let rows = if sizes.is_empty() {
        Vec::new()
    } else {
        psi_sweep(&m.stack, sizes, m.pitches, m.hc_oe, m.policy)?
    };
    let mut t = Table::new(&["ecd_nm", "pitch_nm", "psi"]);
    for r in &rows {
        t.push(vec![r.ecd_nm.into(), r.pitch_nm.into(), r.psi.into()]);
    }
    let path = ctx.write(&t, "psi.csv")?;
    Ok(format!("psi: {} points -> {}", t.len(), path.display()))
}

fn in_window(ecd: f64, pitch: f64) -> bool {
    pitch >= MIN_PITCH_FACTOR * ecd - 1e-9 && pitch <= MAX_PITCH_NM + 1e-9
}

const ENVELOPE: [NeighborhoodPattern; 2] = [NeighborhoodPattern::ALL_P, NeighborhoodPattern::ALL_AP];

pub fn metrics(ctx: &Ctx) -> anyhow::Result<String> {
    let m = ctx.model;
    let sw = &ctx.cfg.sweep;
    let stack = m.stack;
    let ecd = stack.ecd();
    let intra = intra_center_hz_oe(&stack, m.policy)?;
    let aggressors = |pitch: f64| -> Result<AggressorFields, Error> {
        AggressorFields::compute(&ArrayConfig::new(stack, pitch)?, m.policy)
    };

    let pitches: Vec<f64> = m.pitches.values().into_iter().filter(|&p| in_window(ecd, p)).collect();
    let per_pitch = pitches.par_iter().map(|&p| aggressors(p)).collect::<Result<Vec<_>, _>>()?;
    let mut ic = Table::new(&["pitch_nm", "np8", "hz_total_oe", "ic_ap_to_p_ua", "ic_p_to_ap_ua"]);
    for (&p, agg) in pitches.iter().zip(&per_pitch) {
        for np in ENVELOPE {
            let h = intra + agg.total(np);
            ic.push(vec![
                p.into(),
                np.decimal().into(),
                h.into(),
                critical_current(&m.switch, h, Direction::ApToP)?.into(),
                critical_current(&m.switch, h, Direction::PToAp)?.into(),
            ]);
        }
    }
    ctx.write(&ic, "ic_vs_pitch.csv")?;

    let mut tw = Table::new(&["pitch_factor", "pitch_nm", "vp_v", "np8", "hz_total_oe", "tw_ap_to_p_ns"]);
    let mut skipped = 0usize;
    for &f in &sw.pitch_factors {
        let pitch = f * ecd;
        let agg = aggressors(pitch)?;
        for &v in &m.voltages {
            for np in ENVELOPE {
                let h = intra + agg.total(np);
                match avg_switching_time(&m.switch, &m.sun, &m.resistance, v, h, Direction::ApToP) {
                    Ok(t) => tw.push(vec![f.into(), pitch.into(), v.into(), np.decimal().into(), h.into(), t.into()]),
                    Err(Error::SubCriticalDrive { .. }) => skipped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} sub-critical (vp, pattern) points in tw_vs_voltage.csv");
    }
    ctx.write(&tw, "tw_vs_voltage.csv")?;

    let agg = aggressors(sw.delta_pitch_factor * ecd)?;
    let mut dt = Table::new(&[
        "t_k",
        "delta0",
        "delta_p_intra",
        "delta_ap_intra",
        "delta_p_np0",
        "delta_ap_np0",
        "delta_p_np255",
        "delta_ap_np255",
    ]);
    for &t in &m.temperatures {
        let st = |h: f64, s: MtjState| thermal_stability(&m.stability, t, h, s);
        let (h0, h255) = (intra + agg.total(ENVELOPE[0]), intra + agg.total(ENVELOPE[1]));
        dt.push(vec![
            t.into(),
            m.stability.delta0_at(t)?.into(),
            st(intra, MtjState::P)?.into(),
            st(intra, MtjState::Ap)?.into(),
            st(h0, MtjState::P)?.into(),
            st(h0, MtjState::Ap)?.into(),
            st(h255, MtjState::P)?.into(),
            st(h255, MtjState::Ap)?.into(),
        ]);
    }
    ctx.write(&dt, "delta_vs_temperature.csv")?;

    let mut wc = Table::new(&["pitch_factor", "pitch_nm", "t_k", "delta_min", "state", "np8"]);
    for &f in &sw.pitch_factors {
        let config = ArrayConfig::new(stack, f * ecd)?;
        let cases = m
            .temperatures
            .par_iter()
            .map(|&t| worst_case_delta(&config, &m.stability, t, m.policy))
            .collect::<Result<Vec<_>, _>>()?;
        for (&t, w) in m.temperatures.iter().zip(cases) {
            let state = match w.state {
                MtjState::P => "P",
                MtjState::Ap => "AP",
            };
            wc.push(vec![f.into(), (f * ecd).into(), t.into(), w.delta.into(), state.into(), w.np8.decimal().into()]);
        }
    }
    ctx.write(&wc, "worst_case_delta.csv")?;
    Ok(format!(
        "metrics: eCD {} nm, intra hz {} Oe, {} Ic rows, {} tw rows, {} temperatures -> {}",
        fmt_sig(ecd, 6),
        fmt_sig(intra, 6),
        ic.len(),
        tw.len(),
        dt.len(),
        ctx.out.display()
    ))
}

/// Writes a deterministic wafer of single loops plus a multi-cycle device
/// into `<out>/fixtures` and returns the two paths.
fn write_fixtures(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    let m = ctx.model;
    let syn = &ctx.cfg.characterize.synthetic;
    let ra = m.stack.ra();
    let tmr0 = ctx.cfg.device.resistance.tmr0;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut wafer = Vec::new();
    for &size in &syn.sizes_nm {
        let hs = intra_center_hz_oe(&m.stack.with_ecd(size)?, m.policy)?;
        for _ in 0..syn.devices_per_size {
            let ecd = size * (1.0 + 0.02 * rng.random_range(-1.0..1.0));
            let rp = rp_from_ecd(ra, ecd)?;
            let hc = m.hc_oe * (1.0 + 0.05 * rng.random_range(-1.0..1.0));
            let hoffset = -hs * (1.0 + 0.05 * rng.random_range(-1.0..1.0));
            let p = SynthParams::new(hoffset + hc, hoffset - hc, rp, rp * (1.0 + tmr0))
                .with_noise(syn.noise_fraction * rp, rng.random());
            wafer.push(synth_loop(&p)?);
        }
    }
    let rp = rp_from_ecd(ra, m.stack.ecd())?;
    let cycles = synth_cycles(&CycleSynth {
        hk_oe: m.stability.hk_oe(),
        delta0: ctx.cfg.device.delta0,
        protocol: m.protocol,
        rp,
        rap: rp * (1.0 + tmr0),
        noise_sigma: syn.noise_fraction * rp,
        n_cycles: syn.n_cycles,
        seed: rng.random(),
    })?;
    let dir = ctx.out.join("fixtures");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::new();
    for (name, grouping, loops) in [("wafer.csv", LoopGrouping::Devices, &wafer), ("cycles.csv", LoopGrouping::Cycles, &cycles)] {
        let path = dir.join(name);
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_loops_csv(std::io::BufWriter::new(file), grouping, loops)?;
        paths.push(path);
    }
    Ok(paths)
}

fn summary_row(source: &str, group: &str, s: &LoopSummary) -> Vec<Cell> {
    vec![
        source.into(),
        group.into(),
        s.hsw_p.into(),
        s.hsw_n.into(),
        s.hc.into(),
        s.hoffset.into(),
        s.hs_intra_z.into(),
        s.rp.into(),
        s.rap.into(),
        s.tmr.into(),
        s.ecd_nm.into(),
    ]
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn characterize(ctx: &Ctx, extra: &[PathBuf], synthetic: bool) -> anyhow::Result<String> {
    let m = ctx.model;
    let c = &ctx.cfg.characterize;
    let ra = m.stack.ra();
    let mut files: Vec<PathBuf> = c.loops.iter().chain(extra).cloned().collect();
    if synthetic {
        files.extend(write_fixtures(ctx)?);
    }
    if files.is_empty() {
        return Err(DataError::new("no loop files given (config characterize.loops, arguments, or --synthetic)").into());
    }
    let mut summaries = Table::new(&[
        "source",
        "group",
        "hsw_p_oe",
        "hsw_n_oe",
        "hc_oe",
        "hoffset_oe",
        "hs_intra_oe",
        "rp_ohm",
        "rap_ohm",
        "tmr",
        "ecd_nm",
    ]);
    let mut fits = Table::new(&["source", "direction", "hk_oe", "delta0", "residual", "iterations"]);
    let mut devices: Vec<(f64, f64, f64)> = Vec::new();
    let mut rejected = 0usize;
    for path in &files {
        let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let file = fs::File::open(path).map_err(|e| DataError::new(format!("{}: {e}", path.display())))?;
        let lf = read_loop_file(std::io::BufReader::new(file)).map_err(|e| DataError::new(format!("{source}: {e}")))?;
        let results: Vec<_> = lf.loops.par_iter().map(|lp| analyze_loop(lp, ra)).collect();
        let mut ok = Vec::new();
        for (key, r) in lf.keys.iter().zip(results) {
            match r {
                Ok(s) => {
                    summaries.push(summary_row(&source, key, &s));
                    ok.push(s);
                }
                Err(e @ (Error::NoTransition { .. } | Error::MultiTransition { .. })) => {
                    eprintln!("warning: {source} group '{key}': {e}");
                    rejected += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        match lf.grouping {
            LoopGrouping::Cycles => {
                if !ok.is_empty() {
                    devices.push((
                        median(ok.iter().map(|s| s.ecd_nm).collect()),
                        median(ok.iter().map(|s| s.hs_intra_z).collect()),
                        median(ok.iter().map(|s| s.hc).collect()),
                    ));
                }
                let (up, down) = switching_probability(&lf.loops)?;
                let step = lf.loops[0].samples().windows(2).map(|w| (w[1].0 - w[0].0).abs()).fold(0.0, f64::max);
                let proto = RampProtocol::new(c.attempt_hz, step / c.dwell_s)?;
                for (name, curve) in [("AP->P", up), ("P->AP", down)] {
                    let f = fit_hk_delta0(&curve, &proto)?;
                    fits.push(vec![
                        source.as_str().into(),
                        name.into(),
                        f.hk_oe.into(),
                        f.delta0.into(),
                        f.residual.into(),
                        f.iterations.into(),
                    ]);
                }
            }
            _ => devices.extend(ok.iter().map(|s| (s.ecd_nm, s.hs_intra_z, s.hc))),
        }
    }
    if summaries.len() == 0 {
        return Err(DataError::new("no loop could be analyzed").into());
    }
    ctx.write(&summaries, "loop_summary.csv")?;
    ctx.write(&fits, "fit_report.csv")?;
    let hs: Vec<(f64, f64)> = devices.iter().map(|d| (d.0, d.1)).collect();
    let hc: Vec<(f64, f64)> = devices.iter().map(|d| (d.0, d.2)).collect();
    let hs_bins = aggregate_by_ecd(&hs, c.bin_width_nm)?;
    let hc_bins = aggregate_by_ecd(&hc, c.bin_width_nm)?;
    let mut bins = Table::new(&[
        "ecd_nm",
        "count",
        "hs_intra_median_oe",
        "hs_intra_q1_oe",
        "hs_intra_q3_oe",
        "hc_median_oe",
    ]);
    for (a, b) in hs_bins.iter().zip(&hc_bins) {
        bins.push(vec![a.ecd_nm.into(), a.count.into(), a.median.into(), a.q1.into(), a.q3.into(), b.median.into()]);
    }
    ctx.write(&bins, "ecd_bins.csv")?;
    Ok(format!(
        "characterize: {} loops analyzed, {rejected} rejected, {} fits, {} eCD bins -> {}",
        summaries.len(),
        fits.len(),
        bins.len(),
        ctx.out.display()
    ))
}
