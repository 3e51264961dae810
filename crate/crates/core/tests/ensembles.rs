use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqm_core::analysis::disturbance_at;
use sqm_core::constants::{ETA1, ETA2, GAMMA1};
use sqm_core::engine::{NoiseSource, StepPlan};
use sqm_core::ensemble::{par_map, trajectory_seed};
use sqm_core::fokker_planck::{angular_variance_series, sample_ensemble, InitialCondition, McConfig};
use sqm_core::{Bloch, ImperfectionParams, MeasChannel, QubitState};

fn pair(delta2: f64) -> Vec<MeasChannel> {
    vec![MeasChannel::new(0.0, GAMMA1, ETA1).unwrap(), MeasChannel::new(delta2, GAMMA1, ETA2).unwrap()]
}

fn mc(n_traj: usize, seed: u64) -> McConfig {
    McConfig { dt: 4e-9, n_traj, seed, imperfections: ImperfectionParams::default() }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn disturbance_matches_generated_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dt = 4e-9;
    let n = 100_000;
    for s in 0..20 {
        let channels = pair(TAU * uniform(&mut rng));
        let z = 2.0 * uniform(&mut rng) - 1.0;
        let phi = TAU * uniform(&mut rng);
        let rho = (1.0 - z * z).sqrt();
        let start = Bloch::new(rho * phi.cos(), rho * phi.sin(), z);
        let plan = StepPlan::new(&channels, dt, &ImperfectionParams::default()).unwrap();
        let steps = par_map(n, |i| {
            let mut noise = NoiseSource::new(trajectory_seed(s, i as u64), 2);
            let mut signals = [0.0; 2];
            plan.generate(&start, &mut noise, 0.0, &mut signals).unwrap() - start
        });
        // Tr[dρ²] = |dr|²/2 for the fluctuating part of the Bloch increment.
        let mean = steps.iter().fold(Bloch::ORIGIN, |a, d| a + *d) * (1.0 / n as f64);
        let measured = steps.iter().map(|d| (*d - mean).norm_sqr()).sum::<f64>() / n as f64 / 2.0;
        let analytic = disturbance_at(&QubitState::from_vector(start).unwrap(), &channels, dt);
        assert!((measured / analytic - 1.0).abs() < 0.02, "state {s}: {measured} vs {analytic}");
    }
}

#[test]
fn ensembles_do_not_depend_on_worker_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            sample_ensemble(&InitialCondition::Point(Bloch::new(-1.0, 0.0, 0.0)), &pair(FRAC_PI_2), &[0.2e-6, 0.4e-6], &mc(500, 77))
                .unwrap()
        })
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one, many);
}

#[test]
fn angular_slope_is_invariant_under_a_global_rotation() {
    let times: Vec<f64> = (0..=10).map(|k| k as f64 * 80e-9).collect();
    let ch = pair(FRAC_PI_2);
    let base = angular_variance_series(&ch, 0.86, 0.92, Bloch::in_plane(0.89, FRAC_PI_4), &times, &mc(5000, 5)).unwrap();
    let phi = 0.7;
    let rotated: Vec<MeasChannel> = ch.iter().map(|c| c.rotated(phi)).collect();
    let turned =
        angular_variance_series(&rotated, 0.86, 0.92, Bloch::in_plane(0.89, FRAC_PI_4 + phi), &times, &mc(5000, 5)).unwrap();
    assert!((turned.slope / base.slope - 1.0).abs() < 0.02, "{} vs {}", turned.slope, base.slope);
}
