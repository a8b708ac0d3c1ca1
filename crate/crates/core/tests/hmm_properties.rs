use phoneseg::features::{FeatureMatrix, FeatureSource};
use phoneseg::hmm::{
    brute_force_decode, build_lattice, decode_with_fixed_centroids, emission_logscore,
    train_segmental_kmeans, HmmConfig, Variant,
};
use phoneseg::kmeans::{fit_kmeans, Centroids, KmeansParams};
use phoneseg::svf::{deviation_track, BoundarySet, DeviationTrack};
use phoneseg::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, t: usize, d: usize) -> FeatureMatrix {
    let data = (0..t * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    FeatureMatrix::new(data, t, d, 0.01, FeatureSource::Ssl).unwrap()
}

fn random_centroids(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Centroids {
    Centroids::new((0..k * d).map(|_| rng.gen_range(-2.0..2.0)).collect(), k, d).unwrap()
}

fn random_track(rng: &mut ChaCha8Rng, t: usize) -> DeviationTrack {
    let frames = (0..t).filter(|_| rng.gen_bool(0.3)).collect();
    deviation_track(&BoundarySet::new(frames, t).unwrap())
}

#[test]
fn emission_matches_reference_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let d = rng.gen_range(1..8);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut sq = 0.0;
        for i in 0..d {
            sq += (x[i] - c[i]).powi(2);
        }
        assert!((emission_logscore(&x, &c).unwrap() + 0.5 * sq).abs() < 1e-9);
    }
}

#[test]
fn step_examples_agree_with_brute_force() {
    let rows: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0].iter().map(|&v| vec![v]).collect();
    let x = FeatureMatrix::from_rows(&rows, 0.01, FeatureSource::Ssl).unwrap();
    let c = Centroids::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
    let dev = deviation_track(&BoundarySet::new(vec![1], 6).unwrap());
    let cases = [
        (HmmConfig::dp(2, 1.0), None),
        (HmmConfig::dp(2, 1e6), None),
        (HmmConfig::nseg(2, 3.0), None),
        (HmmConfig::dp(2, 0.0).with_gamma(1e6), Some(&dev)),
    ];
    for (cfg, d) in cases {
        let fast = decode_with_fixed_centroids(&x, &c, &cfg, d).unwrap();
        let slow = brute_force_decode(&x, &c, &cfg, d).unwrap();
        assert_eq!(fast, slow, "{cfg:?}");
    }
}

#[test]
fn dp_without_penalty_equals_best_nseg() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let t = rng.gen_range(2..9);
        let k = rng.gen_range(2..4);
        let x = random_matrix(&mut rng, t, 2);
        let c = random_centroids(&mut rng, k, 2);
        let dp = brute_force_decode(&x, &c, &HmmConfig::dp(k, 0.0), None).unwrap();
        // avg_duration t / n yields exactly n segments
        let best_nseg = (1..=t)
            .map(|n| {
                let cfg = HmmConfig::nseg(k, t as f64 / n as f64);
                assert_eq!(cfg.num_segments(t), n);
                decode_with_fixed_centroids(&x, &c, &cfg, None).unwrap().score
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((dp.score - best_nseg).abs() < 1e-12);
    }
}

#[test]
fn zero_lambda_reduces_to_nearest_centroid() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_matrix(&mut rng, 60, 3);
    let frames: Vec<&[f64]> = x.rows().collect();
    let km = fit_kmeans(&frames, &KmeansParams::new(4, 2)).unwrap();
    let r = decode_with_fixed_centroids(&x, &km.centroids, &HmmConfig::dp(4, 0.0), None).unwrap();
    // independent nearest-neighbour labelling
    let nn: Vec<usize> = frames
        .iter()
        .map(|f| {
            let mut best = (0, f64::INFINITY);
            for k in 0..4 {
                let d: f64 = f.iter().zip(km.centroids.row(k)).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect();
    assert_eq!(r.assignments, nn);
    let changes: Vec<usize> = (1..60).filter(|&t| nn[t] != nn[t - 1]).collect();
    assert_eq!(r.boundaries.frames(), changes.as_slice());
}

#[test]
fn translation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for variant in [Variant::Dp, Variant::Nseg] {
        let x = random_matrix(&mut rng, 40, 3);
        let c = random_centroids(&mut rng, 5, 3);
        let shift = [0.5, -3.0, 8.0];
        let xs = FeatureMatrix::new(
            x.rows().flat_map(|r| r.iter().zip(shift).map(|(a, s)| a + s)).collect(),
            40,
            3,
            0.01,
            FeatureSource::Ssl,
        )
        .unwrap();
        let cs = Centroids::new(
            c.rows().flat_map(|r| r.iter().zip(shift).map(|(a, s)| a + s)).collect(),
            5,
            3,
        )
        .unwrap();
        let cfg = HmmConfig {
            variant,
            ..HmmConfig::dp(5, 0.7)
        }
        .with_gamma(0.0);
        let cfg = HmmConfig {
            avg_duration: 6.0,
            ..cfg
        };
        let a = decode_with_fixed_centroids(&x, &c, &cfg, None).unwrap();
        let b = decode_with_fixed_centroids(&xs, &cs, &cfg, None).unwrap();
        assert_eq!(a.boundaries, b.boundaries);
        assert!((a.score - b.score).abs() < 1e-9);
    }
}

#[test]
fn nseg_produces_exactly_n_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let t = rng.gen_range(1..120);
        let l = rng.gen_range(1.0..15.0);
        let x = random_matrix(&mut rng, t, 2);
        let c = random_centroids(&mut rng, 3, 2);
        let cfg = HmmConfig::nseg(3, l);
        let r = decode_with_fixed_centroids(&x, &c, &cfg, None).unwrap();
        assert_eq!(r.num_segments(), cfg.num_segments(t));
    }
}

#[test]
fn lattice_entries_never_grow_with_penalties() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for variant in [Variant::Dp, Variant::Nseg] {
        let x = random_matrix(&mut rng, 30, 2);
        let c = random_centroids(&mut rng, 4, 2);
        let dev = random_track(&mut rng, 30);
        let base = HmmConfig {
            variant,
            avg_duration: 5.0,
            ..HmmConfig::dp(4, 0.2)
        };
        let heavier = HmmConfig {
            lambda: 1.5,
            gamma: 0.8,
            ..base.clone()
        };
        let a = build_lattice(&x, &c, &base, Some(&dev)).unwrap();
        let b = build_lattice(&x, &c, &heavier, Some(&dev)).unwrap();
        for (p, q) in a.scores().iter().zip(b.scores()) {
            assert!(q <= p);
        }
    }
}

#[test]
fn decode_time_scales_linearly_in_k() {
    use std::time::Instant;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = random_matrix(&mut rng, 600, 1);
    let time = |k: usize, rng: &mut ChaCha8Rng| {
        let c = random_centroids(rng, k, 1);
        let cfg = HmmConfig::nseg(k, 8.0);
        let start = Instant::now();
        for _ in 0..3 {
            decode_with_fixed_centroids(&x, &c, &cfg, None).unwrap();
        }
        start.elapsed().as_secs_f64()
    };
    time(8, &mut rng);
    let small = time(16, &mut rng);
    let large = time(64, &mut rng);
    // quadratic-in-K work would give a ratio near 16
    let ratio = large / small;
    assert!(ratio < 4.0 * 2.0, "K x4 took {ratio:.2}x longer");
}

#[test]
fn hard_em_scores_never_decrease() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let corpus: Vec<FeatureMatrix> = (0..6).map(|_| random_matrix(&mut rng, 50, 2)).collect();
    for cfg in [HmmConfig::dp(4, 1.0), HmmConfig::nseg(4, 6.0)] {
        let cfg = HmmConfig { epochs: 6, ..cfg };
        let t = train_segmental_kmeans(&corpus, &cfg, None).unwrap();
        for w in t.epochs.windows(2) {
            if w[0].reseeded.is_empty() {
                assert!(w[1].total_score >= w[0].total_score - 1e-6, "{:?}", t.epochs);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn viterbi_matches_exhaustive_search(
        seed in any::<u64>(),
        t in 1usize..=7,
        k in 1usize..=3,
        d in 1usize..=2,
        lambda in prop::sample::select(vec![0.0, 0.5, 2.0]),
        gamma in prop::sample::select(vec![0.0, 1.0]),
        nseg in any::<bool>(),
        avg in prop::sample::select(vec![1.0, 2.0, 2.5, 4.0]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, t, d);
        let c = random_centroids(&mut rng, k, d);
        let dev = random_track(&mut rng, t);
        let cfg = HmmConfig {
            variant: if nseg { Variant::Nseg } else { Variant::Dp },
            avg_duration: avg,
            ..HmmConfig::dp(k, lambda)
        }.with_gamma(gamma);
        match (decode_with_fixed_centroids(&x, &c, &cfg, Some(&dev)), brute_force_decode(&x, &c, &cfg, Some(&dev))) {
            (Ok(fast), Ok(slow)) => prop_assert_eq!(fast, slow),
            (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {}
            (a, b) => prop_assert!(false, "decoders disagree: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn zero_gamma_ignores_deviation(seed in any::<u64>(), nseg in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, 40, 2);
        let c = random_centroids(&mut rng, 3, 2);
        let dev = random_track(&mut rng, 40);
        let cfg = HmmConfig {
            variant: if nseg { Variant::Nseg } else { Variant::Dp },
            avg_duration: 5.0,
            ..HmmConfig::dp(3, 0.9)
        };
        let plain = decode_with_fixed_centroids(&x, &c, &cfg, None).unwrap();
        let with_track = decode_with_fixed_centroids(&x, &c, &cfg, Some(&dev)).unwrap();
        prop_assert_eq!(&plain, &with_track);
        let zeros = DeviationTrack::zeros(40);
        let bf = cfg.clone().with_gamma(2.0);
        prop_assert_eq!(
            decode_with_fixed_centroids(&x, &c, &bf, Some(&zeros)).unwrap(),
            decode_with_fixed_centroids(&x, &c, &bf, None).unwrap()
        );
    }

    #[test]
    fn segment_count_monotone_in_lambda(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, 60, 2);
        let c = random_centroids(&mut rng, 5, 2);
        let counts: Vec<usize> = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&l| decode_with_fixed_centroids(&x, &c, &HmmConfig::dp(5, l), None).unwrap().num_segments())
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?}", counts);
    }
}
