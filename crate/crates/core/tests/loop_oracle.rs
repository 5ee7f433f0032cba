use std::f64::consts::PI;

use mram_coupling::magnetostatics::{loop_field, CurrentLoop, DiscretizationPolicy, Point3};
use proptest::prelude::*;

/// Complete elliptic integrals K(m), E(m) by the arithmetic-geometric mean.
fn elliptic_ke(m: f64) -> (f64, f64) {
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    let mut c = m.sqrt();
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    while c.abs() > 1e-16 {
        let an = 0.5 * (a + b);
        c = 0.5 * (a - b);
        b = (a * b).sqrt();
        a = an;
        pow *= 2.0;
        sum += pow * c * c;
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// Exact (H_rho, H_z) of a circular loop in the z = 0 plane, A/m.
fn exact_field(radius: f64, current: f64, rho: f64, z: f64) -> (f64, f64) {
    let alpha2 = (radius - rho).powi(2) + z * z;
    let beta2 = (radius + rho).powi(2) + z * z;
    let m = 4.0 * radius * rho / beta2;
    let (k, e) = elliptic_ke(m);
    let beta = beta2.sqrt();
    let hz = current / (2.0 * PI * beta) * (k + (radius * radius - rho * rho - z * z) / alpha2 * e);
    let hrho = if rho == 0.0 {
        0.0
    } else {
        current * z / (2.0 * PI * rho * beta) * (-k + (radius * radius + rho * rho + z * z) / alpha2 * e)
    };
    (hrho, hz)
}

#[test]
fn elliptic_integrals_at_known_points() {
    let (k, e) = elliptic_ke(0.0);
    assert!((k - PI / 2.0).abs() < 1e-15 && (e - PI / 2.0).abs() < 1e-15);
    let (k, e) = elliptic_ke(0.5);
    assert!((k - 1.854_074_677_301_372).abs() < 1e-13);
    assert!((e - 1.350_643_881_047_675).abs() < 1e-13);
}

#[test]
fn off_axis_error_decays_with_segments() {
    let r = 20e-9;
    let lp = CurrentLoop::new(Point3::ORIGIN, r, 1e-3).unwrap();
    let probe = Point3::new(0.6 * r, 0.0, 0.3 * r);
    let (_, hz) = exact_field(r, 1e-3, 0.6 * r, 0.3 * r);
    let errs: Vec<f64> = [16, 32, 64, 128, 256, 512]
        .iter()
        .map(|&n| {
            let f = loop_field(&lp, probe, DiscretizationPolicy::new(n).unwrap()).unwrap();
            (f.hz / hz - 1.0).abs()
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    // second order in 1/N once the chords resolve the probe distance
    let rate = errs[4] / errs[5];
    assert!((3.5..4.5).contains(&rate), "{errs:?}");
    assert!(errs[4] < 1e-4);
}

proptest! {
    #[test]
    fn matches_elliptic_oracle(
        rho_frac in 0.0f64..3.0,
        z_frac in 0.1f64..5.0,
        phi in 0.0f64..(2.0 * PI),
    ) {
        let r = 27.5e-9;
        let current = 2.06e-3;
        let lp = CurrentLoop::new(Point3::ORIGIN, r, current).unwrap();
        let (rho, z) = (rho_frac * r, z_frac * r);
        let f = loop_field(&lp, Point3::new(rho * phi.cos(), rho * phi.sin(), z), DiscretizationPolicy::default()).unwrap();
        let (hrho, hz) = exact_field(r, current, rho, z);
        let scale = hz.abs().max(hrho.abs());
        prop_assert!((f.hz - hz).abs() < 1e-3 * scale, "hz {} vs {}", f.hz, hz);
        let fr = f.hx * phi.cos() + f.hy * phi.sin();
        prop_assert!((fr - hrho).abs() < 1e-3 * scale, "hrho {} vs {}", fr, hrho);
    }
}
