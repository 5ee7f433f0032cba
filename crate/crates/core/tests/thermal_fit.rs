use mram_coupling::characterization::*;
use mram_coupling::metrics::Direction;

const HK: f64 = 4646.8;
const DELTA0: f64 = 45.5;

fn cycles(seed: u64, noise: f64) -> Vec<HysteresisLoop> {
    synth_cycles(&CycleSynth {
        hk_oe: HK,
        delta0: DELTA0,
        protocol: RampProtocol::default(),
        rp: 4677.0,
        rap: 11692.0,
        noise_sigma: noise,
        n_cycles: DEFAULT_TRIALS,
        seed,
    })
    .unwrap()
}

/// Binomial 3-sigma band of the model curve, plus one grid step of slack
/// in field for the discretized detection.
#[test]
fn empirical_curve_within_binomial_band() {
    let proto = RampProtocol::default();
    let (up, down) = switching_probability(&cycles(11, 0.0)).unwrap();
    for curve in [&up, &down] {
        for p in &curve.points {
            let model = switching_cdf(HK, DELTA0, &proto, p.h_oe);
            let sd = (model * (1.0 - model) / p.n_trials as f64).sqrt();
            assert!(
                (p.p_switch - model).abs() <= 3.0 * sd + 0.01,
                "{:?} h = {}: {} vs {}",
                curve.direction,
                p.h_oe,
                p.p_switch,
                model
            );
        }
    }
}

#[test]
fn binomial_fit_recovers_parameters() {
    let proto = RampProtocol::default();
    for seed in [1, 2, 3] {
        let (up, down) = switching_probability(&cycles(seed, 0.01 * 4677.0)).unwrap();
        for curve in [up, down] {
            let fit = fit_hk_delta0(&curve, &proto).unwrap();
            eprintln!("seed {seed} {:?}: {fit:?}", curve.direction);
            assert!((fit.hk_oe / HK - 1.0).abs() < 0.10, "{fit:?}");
            assert!((fit.delta0 / DELTA0 - 1.0).abs() < 0.10, "{fit:?}");
        }
    }
}

#[test]
fn model_curve_fit_is_exact_on_both_directions() {
    let proto = RampProtocol::default();
    let fields: Vec<f64> = (0..250).map(|k| sweep_field(k, 1000, 3000.0)).collect();
    for dir in [Direction::ApToP, Direction::PToAp] {
        let curve = SwitchingProbCurve::from_model(dir, &fields, HK, DELTA0, &proto, 1000);
        let fit = fit_hk_delta0(&curve, &proto).unwrap();
        assert!(fit.residual < 1e-6);
        assert!((fit.hk_oe / HK - 1.0).abs() < 0.02);
    }
}
