use std::f64::consts::{FRAC_PI_2, TAU};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqm_core::constants::{ETA1, ETA2, GAMMA1};
use sqm_core::ensemble::{par_map, trajectory_seed};
use sqm_core::retrodiction::{composite_map, grid_argmax, likelihood, mle_initial_state, mle_with_grid, LogLikelihood, TransferMap};
use sqm_core::{filter, simulate_decimated, Bloch, ImperfectionParams, MeasChannel, MeasurementRecord, QubitState};

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn random_bloch(rng: &mut ChaCha8Rng, max_radius: f64) -> Bloch {
    let z = 2.0 * uniform(rng) - 1.0;
    let phi = TAU * uniform(rng);
    let r = max_radius * uniform(rng).cbrt();
    let s = (1.0 - z * z).sqrt();
    Bloch::new(r * s * phi.cos(), r * s * phi.sin(), r * z)
}

fn pair(delta2: f64) -> Vec<MeasChannel> {
    vec![MeasChannel::new(0.0, GAMMA1, ETA1).unwrap(), MeasChannel::new(delta2, GAMMA1, ETA2).unwrap()]
}

fn record_from(prep: Bloch, channels: &[MeasChannel], seed: u64) -> MeasurementRecord {
    let s = QubitState::from_vector(prep).unwrap();
    simulate_decimated(&s, channels, 1e-6, 16e-9, 4, seed, &ImperfectionParams::default()).unwrap().1
}

fn maps_for(prep: Bloch, channels: &[MeasChannel], n: usize, seed: u64) -> Vec<TransferMap> {
    par_map(n, |i| composite_map(&record_from(prep, channels, trajectory_seed(seed, i as u64)), &ImperfectionParams::default()).unwrap())
}

#[test]
fn composite_maps_are_completely_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000u64 {
        let channels = if i % 3 == 0 {
            vec![MeasChannel::new(TAU * uniform(&mut rng), GAMMA1 * (0.2 + uniform(&mut rng)), uniform(&mut rng)).unwrap()]
        } else {
            pair(TAU * uniform(&mut rng))
        };
        let m = composite_map(&record_from(random_bloch(&mut rng, 1.0), &channels, i), &ImperfectionParams::default()).unwrap();
        assert!(m.choi_min_eigenvalue() >= -1e-9, "record {i}: {}", m.choi_min_eigenvalue());
    }
}

#[test]
fn concatenated_record_map_is_the_product_of_segment_maps() {
    for seed in 0..20 {
        let rec = record_from(Bloch::new(0.2, 0.4, -0.3), &pair(1.0), seed);
        let cut = 7 + seed as usize;
        let first = composite_map(&rec.slice(0, cut), &ImperfectionParams::default()).unwrap();
        let second = composite_map(&rec.slice(cut, rec.len()), &ImperfectionParams::default()).unwrap();
        let whole = composite_map(&rec, &ImperfectionParams::default()).unwrap();
        let product = first.then(&second).unwrap();
        let shift = (product.log_scale - whole.log_scale).exp();
        for i in 0..4 {
            for j in 0..4 {
                assert!((whole.matrix[i][j] - product.matrix[i][j] * shift).abs() < 1e-9, "seed {seed} entry {i}{j}");
            }
        }
    }
}

#[test]
fn normalized_map_output_matches_the_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..50 {
        let rec = record_from(random_bloch(&mut rng, 1.0), &pair(FRAC_PI_2), seed);
        let start = QubitState::from_vector(random_bloch(&mut rng, 1.0)).unwrap();
        let map = composite_map(&rec, &ImperfectionParams::default()).unwrap();
        let via_map = map.normalized_output(&start).unwrap();
        let via_filter = filter(&start, &rec, &ImperfectionParams::default()).unwrap();
        assert!(via_map.trace_distance(via_filter.final_state()) < 1e-9, "seed {seed}");
    }
}

#[test]
fn likelihood_is_affine_before_the_logarithm() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..20 {
        let map = composite_map(&record_from(Bloch::new(0.0, 0.0, 1.0), &pair(0.8), seed), &ImperfectionParams::default()).unwrap();
        let a = QubitState::from_vector(random_bloch(&mut rng, 1.0)).unwrap();
        let b = QubitState::from_vector(random_bloch(&mut rng, 1.0)).unwrap();
        let w = uniform(&mut rng);
        let p = |s: &QubitState| (likelihood(&map, s).unwrap() - map.log_scale).exp();
        let mixed = p(&a.mix(&b, w));
        let expected = w * p(&a) + (1.0 - w) * p(&b);
        assert!((mixed - expected).abs() < 1e-10 * expected.abs().max(1.0), "seed {seed}");
    }
}

#[test]
fn log_likelihood_is_concave_along_chords() {
    let maps = maps_for(Bloch::new(0.3, -0.5, 0.2), &pair(FRAC_PI_2), 300, 9);
    let ll = LogLikelihood::new(&maps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let a = random_bloch(&mut rng, 0.95);
        let b = random_bloch(&mut rng, 0.95);
        let h = 0.05;
        for k in 1..20 {
            let t = k as f64 / 20.0;
            let at = |s: f64| ll.value(&(a * (1.0 - s) + b * s));
            let second = at(t - h) - 2.0 * at(t) + at(t + h);
            assert!(second <= 1e-9 * at(t).abs().max(1.0), "second difference {second}");
        }
    }
}

#[test]
fn commuting_records_locate_the_x_pole() {
    let ch = vec![MeasChannel::new(0.0, GAMMA1, ETA1).unwrap(), MeasChannel::new(0.0, GAMMA1, ETA2).unwrap()];
    let maps = maps_for(Bloch::new(1.0, 0.0, 0.0), &ch, 2000, 12);
    let res = mle_initial_state(&maps).unwrap();
    assert!(res.mle.x > 0.9, "mle {:?}", res.mle);
    let grid = grid_argmax(&maps, 21).unwrap();
    assert!(grid.distance(&res.mle) < 0.15, "grid {grid:?} vs ascent {:?}", res.mle);
    // The objective at the ascent result is no worse than at the grid optimum.
    let ll = LogLikelihood::new(&maps).unwrap();
    assert!(res.log_likelihood >= ll.value(&grid) - 1e-9);
}

#[test]
fn truth_is_more_likely_than_its_antipode() {
    let prep = Bloch::new(0.0, -1.0, 0.0);
    let maps = maps_for(prep, &pair(FRAC_PI_2), 2000, 13);
    let at = |b: Bloch| {
        let s = QubitState::from_vector(b).unwrap();
        maps.iter().map(|m| likelihood(m, &s).unwrap()).sum::<f64>() / maps.len() as f64
    };
    assert!(at(prep) > at(Bloch::new(0.0, 1.0, 0.0)));
}

#[test]
fn estimator_error_shrinks_with_ensemble_size() {
    let prep = Bloch::new(0.4, -0.2, 0.5);
    let replicates = 15;
    let mut medians = Vec::new();
    for (k, n) in [250usize, 1000, 4000].into_iter().enumerate() {
        let mut errors: Vec<f64> = (0..replicates)
            .map(|r| {
                let maps = maps_for(prep, &pair(FRAC_PI_2), n, trajectory_seed(100 + k as u64, r as u64));
                mle_with_grid(&maps, 5).unwrap().mle.distance(&prep)
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        medians.push(errors[replicates / 2]);
    }
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "medians {medians:?}");
}
