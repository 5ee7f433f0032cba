//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use mram_coupling::array::{coupling_map, min_pitch_for_psi, psi_sweep, ArrayConfig, NeighborhoodPattern, PitchRange};
use mram_coupling::characterization::{
    analyze_loop, fit_hk_delta0, sweep_field, sweep_step, switching_probability, synth_cycles, synth_loop, CycleSynth,
    RampProtocol, SwitchingProbCurve, SynthParams, DEFAULT_TRIALS,
};
use mram_coupling::magnetostatics::{loop_field, on_axis_field_analytic, CurrentLoop, DiscretizationPolicy, Point3};
use mram_coupling::metrics::{
    avg_switching_time, critical_current, thermal_stability, total_stray_field, worst_case_delta, Direction, MtjState,
};
use mram_coupling::mtj::{intra_center_hz_oe, rp_from_ecd};
use mram_coupling::{presets, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn policy() -> DiscretizationPolicy {
    DiscretizationPolicy::default()
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn kernel() -> Outcome {
    let r = 30e-9;
    let lp = CurrentLoop::new(Point3::ORIGIN, r, 1e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let probes: Vec<f64> = (0..100).map(|_| rng.random_range(-10.0..=10.0) * r).collect();
    let start = Instant::now();
    let fields: Vec<f64> = probes
        .iter()
        .map(|&z| loop_field(&lp, Point3::new(0.0, 0.0, z), policy()).unwrap().hz)
        .collect();
    let per_point = start.elapsed().as_secs_f64() / probes.len() as f64;
    let worst = probes
        .iter()
        .zip(&fields)
        .map(|(&z, &h)| (h / on_axis_field_analytic(&lp, z) - 1.0).abs())
        .fold(0.0, f64::max);
    let errs: Vec<f64> = [16, 32, 64, 128, 256]
        .iter()
        .map(|&n| {
            let h = loop_field(&lp, Point3::new(0.0, 0.0, 0.5 * r), DiscretizationPolicy::new(n).unwrap())
                .unwrap()
                .hz;
            (h / on_axis_field_analytic(&lp, 0.5 * r) - 1.0).abs()
        })
        .collect();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst < 1e-3 && monotone && per_point < 1e-3,
        format!("max rel err {worst:.2e} (< 1e-3), decay monotone {monotone}, {:.1} us/point (< 1000)", per_point * 1e6),
    )
}

fn far_field() -> Outcome {
    let r = 30e-9;
    let lp = CurrentLoop::new(Point3::ORIGIN, r, 1e-3).unwrap();
    let z = 20.0 * r;
    let hz = loop_field(&lp, Point3::new(0.0, 0.0, z), policy()).unwrap().hz;
    let dipole = lp.moment() / (2.0 * PI * z.powi(3));
    let rel = (hz / dipole - 1.0).abs();
    outcome(rel < 0.01, format!("z = 20R: rel diff to dipole {rel:.2e} (< 1e-2)"))
}

fn critical_current_anchors() -> Outcome {
    let sw = presets::switch_params();
    let ap_p = critical_current(&sw, -365.6, Direction::ApToP).unwrap();
    let p_ap = critical_current(&sw, -365.6, Direction::PToAp).unwrap();
    outcome(
        within(ap_p, 61.7, 5e-3) && within(p_ap, 52.8, 5e-3),
        format!("Ic(AP->P) = {ap_p:.3} uA (61.7 +-0.5%), Ic(P->AP) = {p_ap:.3} uA (52.8 +-0.5%)"),
    )
}

fn stability_anchors() -> Outcome {
    let st = presets::stability_params();
    let h = intra_center_hz_oe(&presets::calibrated_stack(), policy()).unwrap();
    let p = thermal_stability(&st, 300.0, h, MtjState::P).unwrap();
    let ap = thermal_stability(&st, 300.0, h, MtjState::Ap).unwrap();
    let ratio = ap / p;
    let ratio_ok = (0.68..=0.76).contains(&ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hk = presets::HK_OE;
    let worst = (0..1000)
        .map(|_| {
            let h = rng.random_range(-0.999 * hk..0.999 * hk);
            let p = thermal_stability(&st, 300.0, h, MtjState::P).unwrap();
            let ap = thermal_stability(&st, 300.0, h, MtjState::Ap).unwrap();
            ((p / presets::DELTA0).sqrt() + (ap / presets::DELTA0).sqrt() - 2.0).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        ratio_ok && worst < 1e-12,
        format!("h = {h:.1} Oe: Delta_AP/Delta_P = {ratio:.4} (in [0.68, 0.76]: {ratio_ok}), identity max dev {worst:.1e} (< 1e-12)"),
    )
}

fn map_structure() -> Outcome {
    let stack = presets::calibrated_stack().with_ecd(55.0).unwrap();
    let rep = coupling_map(&ArrayConfig::new(stack, 90.0).unwrap(), presets::HC_OE, policy()).unwrap();
    let (min, max) = (rep.min(), rep.max());
    let ok = rep.distinct_levels == 25
        && rep.affine_residual < 1e-9
        && within(min, -16.0, 0.25)
        && within(max, 64.0, 0.25)
        && within(rep.step_direct_oe, 15.0, 0.25)
        && within(rep.step_diag_oe, 5.0, 0.25);
    outcome(
        ok,
        format!(
            "levels {} (25), affine residual {:.1e}, min {min:.2} (-16), max {max:.2} (64), step_direct {:.2} (15), step_diag {:.2} (5), Oe +-25%",
            rep.distinct_levels, rep.affine_residual, rep.step_direct_oe, rep.step_diag_oe
        ),
    )
}

fn psi_sweeps() -> Outcome {
    let template = presets::calibrated_stack();
    let start = Instant::now();
    let mut rows = Vec::new();
    for &ecd in &presets::PSI_SIZES_NM {
        let lo = 1.5 * ecd;
        let range = PitchRange::new(lo, 200.0, (200.0 - lo) / 119.0).unwrap();
        rows.push(psi_sweep(&template, &[ecd], range, presets::HC_OE, policy()).unwrap());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let points: usize = rows.iter().map(Vec::len).sum();
    let monotone = rows.iter().all(|r| r.windows(2).all(|w| w[1].psi <= w[0].psi));
    let at_200: Vec<f64> = rows.iter().map(|r| r.last().unwrap().psi).collect();
    let far_ok = rows.iter().all(|r| (r.last().unwrap().pitch_nm - 200.0).abs() < 1e-9) && at_200.iter().all(|&p| p < 0.005);
    let crossing = min_pitch_for_psi(&template, presets::HC_OE, 0.02, policy()).unwrap();
    let cross_ok = crossing.is_some_and(|p| (70.0..=90.0).contains(&p));
    let at_200_pct: Vec<String> = at_200.iter().map(|p| format!("{:.3}%", 100.0 * p)).collect();
    outcome(
        far_ok && cross_ok && monotone && points == 360 && elapsed < 10.0,
        format!(
            "Psi(200 nm) for {:?} nm = [{}] (< 0.5%), 2% crossing at {crossing:?} nm (80 +-10), non-increasing {monotone}, {points} points in {elapsed:.2} s (< 10)",
            presets::PSI_SIZES_NM,
            at_200_pct.join(", ")
        ),
    )
}

fn sun_model() -> Outcome {
    let stack = presets::calibrated_stack();
    let sw = presets::switch_params();
    let rm = presets::resistance_model(stack.ecd()).unwrap();
    let sun = presets::sun_params();
    let spread = |factor: f64, vp: f64| {
        let c = ArrayConfig::new(stack, factor * stack.ecd()).unwrap();
        let slow = total_stray_field(&c, NeighborhoodPattern::ALL_P, policy()).unwrap();
        let fast = total_stray_field(&c, NeighborhoodPattern::ALL_AP, policy()).unwrap();
        avg_switching_time(&sw, &sun, &rm, vp, slow, Direction::ApToP).unwrap()
            - avg_switching_time(&sw, &sun, &rm, vp, fast, Direction::ApToP).unwrap()
    };
    let h = intra_center_hz_oe(&stack, policy()).unwrap();
    let times: Vec<f64> = (0..60)
        .map(|k| avg_switching_time(&sw, &sun, &rm, 0.62 + 0.01 * k as f64, h, Direction::ApToP).unwrap())
        .collect();
    let decreasing = times.windows(2).all(|w| w[1] < w[0]);
    let sub = matches!(
        avg_switching_time(&sw, &sun, &rm, 0.2, h, Direction::ApToP),
        Err(Error::SubCriticalDrive { .. })
    );
    let (s15, s2, s3) = (spread(1.5, 0.72), spread(2.0, 0.72), spread(3.0, 0.72));
    outcome(
        decreasing && sub && (2.0..=6.0).contains(&s15) && s2 < s15 && s3 < s15,
        format!(
            "decreasing in vp {decreasing}, sub-critical rejected {sub}, spread at 0.72 V: {s15:.3} ns @1.5x (4 +-50%), {s2:.3} ns @2x, {s3:.3} ns @3x"
        ),
    )
}

fn retention() -> Outcome {
    let stack = presets::calibrated_stack();
    let st = presets::stability_params();
    let cases: Vec<_> = [1.5, 2.0, 3.0]
        .iter()
        .map(|f| worst_case_delta(&ArrayConfig::new(stack, f * stack.ecd()).unwrap(), &st, 300.0, policy()).unwrap())
        .collect();
    let minimizer = cases.iter().all(|w| w.state == MtjState::P && w.np8 == NeighborhoodPattern::ALL_P);
    let ordered = cases.windows(2).all(|w| w[0].delta < w[1].delta);
    let spread = (cases[2].delta - cases[0].delta) / presets::DELTA0;
    outcome(
        minimizer && ordered && spread < 0.10,
        format!(
            "minimizer (P, NP8=0) {minimizer}, Delta_min = {:.3} < {:.3} < {:.3}: {ordered}, spread {:.2}% of Delta0 (< 10%)",
            cases[0].delta,
            cases[1].delta,
            cases[2].delta,
            100.0 * spread
        ),
    )
}

fn characterization() -> Outcome {
    let ra = presets::RA_OHM_UM2;
    let rp = rp_from_ecd(ra, 55.0).unwrap();
    let step = sweep_step(1000, 3000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut exact, mut noisy, mut closure) = (true, true, true);
    for i in 0..100 {
        let hp = rng.random_range(500.0..2800.0);
        let hn = rng.random_range(-2800.0..hp - 100.0);
        let rap = rp * rng.random_range(1.3..3.0);
        let clean = analyze_loop(&synth_loop(&SynthParams::new(hp, hn, rp, rap)).unwrap(), ra).unwrap();
        exact &= (clean.hsw_p - hp).abs() < 1e-9 && (clean.hsw_n - hn).abs() < 1e-9 && clean.rp == rp && clean.rap == rap;
        let p = SynthParams::new(hp, hn, rp, rap).with_noise(0.02 * rp, i);
        let s = analyze_loop(&synth_loop(&p).unwrap(), ra).unwrap();
        noisy &= (s.hsw_p - hp).abs() < step && (s.hsw_n - hn).abs() < step;
        for s in [clean, s] {
            let tol = 4.0 * f64::EPSILON * s.hsw_p.abs().max(s.hsw_n.abs());
            closure &= s.hc == (s.hsw_p - s.hsw_n) / 2.0
                && s.hoffset == (s.hsw_p + s.hsw_n) / 2.0
                && s.hs_intra_z == -s.hoffset
                && (s.hoffset + s.hc - s.hsw_p).abs() <= tol
                && (s.hoffset - s.hc - s.hsw_n).abs() <= tol;
        }
    }
    let proto = RampProtocol::default();
    let (hk, d0) = (presets::HK_OE, presets::DELTA0);
    let fields: Vec<f64> = (0..250).map(|k| sweep_field(k, 1000, 3000.0)).collect();
    let model = SwitchingProbCurve::from_model(Direction::ApToP, &fields, hk, d0, &proto, DEFAULT_TRIALS);
    let f0 = fit_hk_delta0(&model, &proto).unwrap();
    let noiseless = within(f0.hk_oe, hk, 0.02) && within(f0.delta0, d0, 0.02);
    let cycles = synth_cycles(&CycleSynth {
        hk_oe: hk,
        delta0: d0,
        protocol: proto,
        rp,
        rap: 2.5 * rp,
        noise_sigma: 0.01 * rp,
        n_cycles: DEFAULT_TRIALS,
        seed: 5,
    })
    .unwrap();
    let (curve, _) = switching_probability(&cycles).unwrap();
    let f1 = fit_hk_delta0(&curve, &proto).unwrap();
    let binomial = within(f1.hk_oe, hk, 0.10) && within(f1.delta0, d0, 0.10);
    outcome(
        exact && noisy && closure && noiseless && binomial,
        format!(
            "noiseless exact {exact}, 2% noise within one step {noisy}, identity closure {closure}, fit noiseless ({:.1}, {:.3}), 1000 trials ({:.1}, {:.3})",
            f0.hk_oe, f0.delta0, f1.hk_oe, f1.delta0
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("Biot-Savart kernel", kernel),
        ("far-field dipole", far_field),
        ("critical-current anchors", critical_current_anchors),
        ("thermal-stability anchors", stability_anchors),
        ("inter-cell map structure", map_structure),
        ("Psi sweeps", psi_sweeps),
        ("Sun-model behavior", sun_model),
        ("worst-case retention", retention),
        ("characterization round-trips", characterization),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
