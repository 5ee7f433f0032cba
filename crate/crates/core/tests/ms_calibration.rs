use mram_coupling::magnetostatics::DiscretizationPolicy;
use mram_coupling::mtj::{calibrate_ms_t, intra_center_hz_oe};
use mram_coupling::presets;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SIZES_NM: [f64; 6] = [35.0, 45.0, 55.0, 75.0, 100.0, 175.0];
const DEVICES_PER_SIZE: usize = 20;
const TRIALS: usize = 200;

/// 5% multiplicative noise on every device. Single fits scatter widely in
/// the RL scale because the RL and HL size signatures are close to
/// collinear, so the check is on the ensemble mean and on the predicted
/// field, which is well conditioned.
#[test]
fn noisy_calibration_is_unbiased() {
    let policy = DiscretizationPolicy::default();
    let truth = presets::calibrated_stack();
    let (rl0, hl0) = (0.7, 1.3);
    let template = truth.with_fixed_layer_scales(rl0, hl0).unwrap();
    let clean: Vec<f64> = SIZES_NM
        .iter()
        .map(|&e| intra_center_hz_oe(&truth.with_ecd(e).unwrap(), policy).unwrap())
        .collect();
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut rl_sum, mut hl_sum) = (0.0, 0.0);
    for _ in 0..TRIALS {
        let mut meas = Vec::new();
        for (&e, &h) in SIZES_NM.iter().zip(&clean) {
            for _ in 0..DEVICES_PER_SIZE {
                meas.push((e, h * (1.0 + noise.sample(&mut rng))));
            }
        }
        let cal = calibrate_ms_t(&meas, &template, policy).unwrap();
        rl_sum += cal.rl_scale * rl0;
        hl_sum += cal.hl_scale * hl0;
        let fitted = cal.apply(&template).unwrap();
        for (&e, &h) in SIZES_NM.iter().zip(&clean) {
            let pred = intra_center_hz_oe(&fitted.with_ecd(e).unwrap(), policy).unwrap();
            assert!((pred / h - 1.0).abs() < 0.05, "eCD {e}: {pred} vs {h}");
        }
    }
    let (rl, hl) = (rl_sum / TRIALS as f64, hl_sum / TRIALS as f64);
    assert!((rl - 1.0).abs() < 0.10, "mean RL factor {rl}");
    assert!((hl - 1.0).abs() < 0.10, "mean HL factor {hl}");
}
