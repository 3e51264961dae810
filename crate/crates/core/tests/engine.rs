use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqm_core::constants::{ETA1, ETA2, GAMMA1};
use sqm_core::engine::{NoiseSource, StepPlan};
use sqm_core::ensemble::{par_map, trajectory_seed};
use sqm_core::{filter, kraus_step, simulate_trajectory, Bloch, ImperfectionParams, MeasChannel, QubitState};

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn random_state(rng: &mut ChaCha8Rng) -> QubitState {
    let z = 2.0 * uniform(rng) - 1.0;
    let phi = TAU * uniform(rng);
    let r = uniform(rng).cbrt();
    let s = (1.0 - z * z).sqrt();
    QubitState::from_bloch(r * s * phi.cos(), r * s * phi.sin(), r * z).unwrap()
}

fn pair(delta2: f64) -> Vec<MeasChannel> {
    vec![MeasChannel::new(0.0, GAMMA1, ETA1).unwrap(), MeasChannel::new(delta2, GAMMA1, ETA2).unwrap()]
}

#[test]
fn positivity_over_random_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let none = ImperfectionParams::default();
    let mut worst = f64::INFINITY;
    for _ in 0..1_000_000 {
        let state = random_state(&mut rng);
        let dt = 1e-9 * (1.0 + 15.0 * uniform(&mut rng));
        let n = 1 + (rng.next_u64() % 2) as usize;
        let channels: Vec<MeasChannel> = (0..n)
            .map(|_| MeasChannel::new(TAU * uniform(&mut rng), 0.1 / dt * uniform(&mut rng), uniform(&mut rng)).unwrap())
            .collect();
        let signals: Vec<f64> = (0..n).map(|_| 40.0 * uniform(&mut rng) - 20.0).collect();
        let next = kraus_step(&state, &channels, &signals, dt, &none).unwrap();
        worst = worst.min(next.min_eigenvalue());
    }
    assert!(worst >= -1e-10, "min eigenvalue {worst}");
}

/// Trapezoid sum of the one-step outcome density over a box of ±12
/// standard deviations per channel.
fn outcome_mass(state: &QubitState, channels: &[MeasChannel], dt: f64, nodes: usize) -> f64 {
    let plan = StepPlan::new(channels, dt, &ImperfectionParams::default()).unwrap();
    let r = state.bloch();
    let means: Vec<f64> = channels.iter().map(|c| c.axis().dot(&r)).collect();
    let widths: Vec<f64> = channels.iter().map(|c| 12.0 / (2.0 * c.gamma * c.eta * dt).sqrt()).collect();
    let h: Vec<f64> = widths.iter().map(|w| 2.0 * w / (nodes - 1) as f64).collect();
    let node = |c: usize, k: usize| means[c] - widths[c] + k as f64 * h[c];
    let density = |v: &[f64]| {
        let (m, log_scale) = plan.step_map(v, 0.0);
        let p = m[0][0] + m[0][1] * r.x + m[0][2] * r.y + m[0][3] * r.z;
        p * log_scale.exp()
    };
    match channels.len() {
        1 => (0..nodes).map(|i| density(&[node(0, i)])).sum::<f64>() * h[0],
        2 => {
            let rows = par_map(nodes, |i| (0..nodes).map(|j| density(&[node(0, i), node(1, j)])).sum::<f64>());
            rows.iter().sum::<f64>() * h[0] * h[1]
        }
        _ => unreachable!(),
    }
}

#[test]
fn outcome_density_is_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dt = 1e-9;
    for delta2 in [0.0, 0.7, FRAC_PI_2] {
        for _ in 0..3 {
            let s = random_state(&mut rng);
            let mass = outcome_mass(&s, &pair(delta2), dt, 401);
            assert!((mass - 1.0).abs() < 1e-6, "delta2 {delta2}: mass {mass}");
        }
    }
    let single = [MeasChannel::new(0.3, GAMMA1, 0.9).unwrap()];
    let mass = outcome_mass(&QubitState::from_bloch(0.2, -0.5, 0.6).unwrap(), &single, 4e-9, 2001);
    assert!((mass - 1.0).abs() < 1e-9, "single channel mass {mass}");
}

/// Unconditional update: every channel contracts the Bloch components
/// perpendicular to its axis by `exp(−Γ dt)`.
fn lindblad(r: &Bloch, channels: &[MeasChannel], dt: f64) -> Bloch {
    channels.iter().fold(*r, |v, c| {
        let n = c.axis();
        let par = n * n.dot(&v);
        par + (v - par) * (-c.gamma * dt).exp()
    })
}

#[test]
fn ensemble_mean_follows_the_unconditional_update() {
    let channels = pair(1.1);
    let dt = 4e-9;
    let start = QubitState::from_bloch(0.6, 0.3, 0.5).unwrap();
    let plan = StepPlan::new(&channels, dt, &ImperfectionParams::default()).unwrap();
    let n = 1_000_000usize;
    let chunks = 100;
    let sums = par_map(chunks, |c| {
        let mut acc = [0.0f64; 6];
        let mut signals = [0.0; 2];
        for i in 0..n / chunks {
            let mut noise = NoiseSource::new(trajectory_seed(17, (c * n / chunks + i) as u64), 2);
            let b = plan.generate(&start.bloch(), &mut noise, 0.0, &mut signals).unwrap();
            for (k, v) in b.to_array().into_iter().enumerate() {
                acc[k] += v;
                acc[k + 3] += v * v;
            }
        }
        acc
    });
    let mut total = [0.0f64; 6];
    for s in &sums {
        for k in 0..6 {
            total[k] += s[k];
        }
    }
    let expected = lindblad(&start.bloch(), &channels, dt).to_array();
    let r0 = start.bloch().to_array();
    let mut worst_se = 0.0f64;
    for k in 0..3 {
        let mean = total[k] / n as f64;
        let se = ((total[k + 3] / n as f64 - mean * mean) / n as f64).sqrt();
        worst_se = worst_se.max(se);
        assert!((mean - expected[k]).abs() < 5.0 * se + 1e-5, "component {k}: {mean} vs {}, se {se}", expected[k]);
    }
    // The deterministic drift is resolved, so the check has teeth.
    let drift = (0..3).map(|k| (expected[k] - r0[k]).powi(2)).sum::<f64>().sqrt();
    assert!(drift > 30.0 * worst_se, "drift {drift}, se {worst_se}");
}

#[test]
fn purity_never_decreases_for_a_perfect_single_channel() {
    let ch = [MeasChannel::new(0.4, GAMMA1, 1.0).unwrap()];
    let none = ImperfectionParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..200 {
        let r = random_state(&mut rng).bloch();
        let s = QubitState::from_vector(r * (1.0 / r.norm())).unwrap();
        let (traj, _) = simulate_trajectory(&s, &ch, 2e-6, 4e-9, i, &none).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].purity() >= w[0].purity() - 1e-10, "trajectory {i}");
        }
    }
}

#[test]
fn common_rotation_of_the_axes_rotates_the_trajectory() {
    let none = ImperfectionParams::default();
    let start = Bloch::new(0.3, -0.4, 0.5);
    for phi in [0.3, 1.9, -2.5] {
        for seed in 0..5 {
            let ch = pair(1.2);
            let rotated: Vec<MeasChannel> = ch.iter().map(|c| c.rotated(phi)).collect();
            let (a, _) = simulate_trajectory(&QubitState::from_vector(start).unwrap(), &ch, 1e-6, 4e-9, seed, &none).unwrap();
            let (b, _) =
                simulate_trajectory(&QubitState::from_vector(start.rotate_z(phi)).unwrap(), &rotated, 1e-6, 4e-9, seed, &none)
                    .unwrap();
            for (x, y) in a.states.iter().zip(&b.states) {
                assert!(x.bloch().rotate_z(phi).distance(&y.bloch()) < 1e-9);
            }
        }
    }
}

#[test]
fn silent_second_channel_reproduces_the_single_channel_engine() {
    let none = ImperfectionParams::default();
    let one = [MeasChannel::new(0.2, GAMMA1, ETA1).unwrap()];
    let two = [one[0], MeasChannel::new(1.3, 0.0, ETA2).unwrap()];
    let start = QubitState::from_bloch(-0.2, 0.7, 0.4).unwrap();
    for seed in 0..10 {
        let (a, ra) = simulate_trajectory(&start, &one, 2e-6, 4e-9, seed, &none).unwrap();
        let (b, rb) = simulate_trajectory(&start, &two, 2e-6, 4e-9, seed, &none).unwrap();
        assert_eq!(ra.samples[0], rb.samples[0]);
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x.bloch(), y.bloch());
        }
    }
}

#[test]
fn record_statistics_match_the_signal_model() {
    let ch = [MeasChannel::new(0.0, GAMMA1, ETA1).unwrap()];
    let dt = 16e-9;
    let (_, rec) = simulate_trajectory(&QubitState::from_bloch(1.0, 0.0, 0.0).unwrap(), &ch, 1e5 * dt, dt, 42, &ImperfectionParams::default()).unwrap();
    let v = &rec.samples[0];
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let expected_var = 1.0 / (2.0 * ETA1 * GAMMA1 * dt);
    assert!((mean - 1.0).abs() < 3.0 * (expected_var / n).sqrt(), "mean {mean}");
    assert!((var / expected_var - 1.0).abs() < 0.02, "variance {var} vs {expected_var}");
}

#[test]
fn wrong_initial_state_converges_to_the_same_eigenstate() {
    let ch = [MeasChannel::new(0.0, GAMMA1, ETA1).unwrap()];
    let none = ImperfectionParams::default();
    for seed in 0..20 {
        let (traj, rec) = simulate_trajectory(&QubitState::from_bloch(0.0, 1.0, 0.0).unwrap(), &ch, 10.0 / GAMMA1, 4e-9, seed, &none).unwrap();
        let guess = filter(&QubitState::from_bloch(-0.5, -0.3, 0.6).unwrap(), &rec, &none).unwrap();
        let truth = traj.final_state().bloch();
        let est = guess.final_state().bloch();
        assert!(truth.x.abs() > 0.95, "seed {seed}: not collapsed ({})", truth.x);
        assert_eq!(truth.x.signum(), est.x.signum(), "seed {seed}");
        assert!(est.x.abs() > 0.9, "seed {seed}: {}", est.x);
    }
}

#[test]
fn commuting_channels_collapse_to_the_poles() {
    let ch = vec![MeasChannel::new(0.0, GAMMA1, ETA1).unwrap(), MeasChannel::new(0.0, GAMMA1, ETA2).unwrap()];
    let plan = StepPlan::new(&ch, 4e-9, &ImperfectionParams::default()).unwrap();
    let steps = (5.0 / GAMMA1 / 4e-9).ceil() as usize;
    let finals = par_map(1000, |i| sqm_core::engine::run_to_end(&plan, Bloch::new(0.0, 1.0, 0.0), steps, trajectory_seed(3, i as u64)).unwrap());
    let poles = [Bloch::new(1.0, 0.0, 0.0), Bloch::new(-1.0, 0.0, 0.0)];
    let near = finals.iter().filter(|b| poles.iter().any(|p| b.distance(p) < 0.05)).count();
    assert!(near >= 990, "{near} of 1000 near a pole");
    let up = finals.iter().filter(|b| b.x > 0.0).count();
    assert!((up as f64 - 500.0).abs() < 4.0 * 250f64.sqrt(), "{up} at +x");
}

#[test]
fn filter_round_trip_matches_the_generator() {
    let none = ImperfectionParams::default();
    let start = QubitState::from_bloch(0.1, 0.2, -0.9).unwrap();
    for seed in 0..20 {
        let (traj, rec) = simulate_trajectory(&start, &pair(PI / 3.0), 1e-6, 16e-9, seed, &none).unwrap();
        assert_eq!(traj.len(), 64);
        let again = filter(&start, &rec, &none).unwrap();
        for (a, b) in traj.states.iter().zip(&again.states) {
            assert!(a.trace_distance(b) < 1e-9);
        }
    }
}
