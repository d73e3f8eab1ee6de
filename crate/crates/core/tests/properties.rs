use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;
use rand::Rng;

use rpsjs_core::controller::{compute_threshold, step_mode, RadioMode, SwitchingState};
use rpsjs_core::harness::{error_cdf, pursuit_step, MetricsOptions, Segment, TrajectoryInput, compute_metrics};
use rpsjs_core::positioning::{
    anchors_from, ekf_predict, ekf_update, multilaterate_lsq, EkfConfig, NavState, PositioningContext, RangeNoise,
    RangeObservation,
};
use rpsjs_core::scenario::{reference_scenario, rng_stream, BandId, Position2D};
use rpsjs_core::sweep::{extract_moments, pathloss_rss, simulate_sweep};

fn position() -> impl Strategy<Value = Position2D> {
    (-150.0f64..150.0, -150.0f64..150.0).prop_map(|(x, y)| Position2D::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_stays_symmetric_psd(
        seed in any::<u64>(),
        steps in 1usize..60,
        q in 1e-6f64..4.0,
        r in 1e-6f64..100.0,
        p0 in 1e-6f64..100.0,
    ) {
        let cfg = reference_scenario();
        let anchors = anchors_from(&cfg.transmitters);
        let ekf = EkfConfig {
            transition: Matrix2::identity(),
            process_noise: Matrix2::identity() * q,
            range_noise: RangeNoise::Constant { variance_m2: r },
            initial_covariance: Matrix2::identity() * p0,
        };
        let mut rng = rng_stream(seed, "prop");
        let mut state = NavState::new(Position2D::new(3.0, -4.0), ekf.initial_covariance, 0);
        for _ in 0..steps {
            let u = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            state = ekf_predict(&state, u, 0.2, &ekf);
            prop_assert!(state.covariance_is_valid());
            if rng.random_bool(0.7) {
                let ranges: Vec<RangeObservation> = cfg.transmitters.iter().take(rng.random_range(1..10)).map(|t| {
                    RangeObservation {
                        transmitter: t.id,
                        distance_m: (t.position.distance(&state.estimate) + rng.random_range(-5.0..5.0)).max(0.1),
                        band: t.id,
                    }
                }).collect();
                state = ekf_update(&state, &ranges, &anchors, &ekf).unwrap();
                prop_assert!(state.covariance_is_valid());
            }
        }
    }

    #[test]
    fn noiseless_sweep_reproduces_the_path_loss_model(p in position(), seed in any::<u64>()) {
        let mut cfg = reference_scenario();
        cfg.shadowing_sigma_db = 0.0;
        let m = extract_moments(&simulate_sweep(&cfg, p, 0, &mut rng_stream(seed, "sweep")));
        for t in &cfg.transmitters {
            let model = pathloss_rss(t, t.position.distance(&p), cfg.controller.n_pl);
            prop_assert!((m.mean[&t.id] - model).abs() <= 1e-12);
            prop_assert_eq!(m.variance[&t.id], 0.0);
        }
    }

    #[test]
    fn noiseless_sweeps_multilaterate_exactly(p in position()) {
        let mut cfg = reference_scenario();
        cfg.shadowing_sigma_db = 0.0;
        let ids: Vec<BandId> = cfg.transmitters.iter().map(|t| t.id).collect();
        let ctx = PositioningContext::new(&cfg, ids);
        let m = extract_moments(&simulate_sweep(&cfg, p, 0, &mut rng_stream(1, "sweep")));
        let fix = multilaterate_lsq(&ctx.ranges(&m).unwrap(), &ctx.anchors).unwrap();
        prop_assert!(fix.distance(&p) <= 1e-6, "{:?} vs {:?}", fix, p);
    }

    #[test]
    fn cdf_is_non_decreasing_and_ends_at_one(errors in prop::collection::vec(0.0f64..30.0, 1..200)) {
        let cdf = error_cdf(&errors, 0.1);
        prop_assert!(cdf.windows(2).all(|w| w[1].fraction >= w[0].fraction));
        prop_assert_eq!(cdf.last().unwrap().fraction, 1.0);
        prop_assert!(cdf.last().unwrap().error_m + 1e-9 >= errors.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn segment_diff_is_relative_path_error(scale in 0.1f64..3.0, len in 2usize..50) {
        let truth: Vec<Position2D> = (0..len).map(|i| Position2D::new(i as f64, 0.0)).collect();
        let est: Vec<Position2D> = truth.iter().map(|p| Position2D::new(p.x * scale, 0.0)).collect();
        let seg = Segment { label: "A-B".into(), start_step: 0, end_step: len - 1 };
        let r = compute_metrics(
            &TrajectoryInput { truth: &truth, relative: &est, gps: None, modes: None },
            &[seg],
            &MetricsOptions::default(),
        ).unwrap();
        let row = &r.segments[0];
        prop_assert!((row.relative_diff_pct - (row.relative_m - row.gt_m).abs() / row.gt_m * 100.0).abs() < 1e-9);
        prop_assert!((row.relative_diff_pct - (scale - 1.0).abs() * 100.0).abs() < 1e-6);
    }

    #[test]
    fn pursuit_respects_speed_and_standoff(
        p in position(),
        rx in -60.0f64..60.0,
        ry in -60.0f64..60.0,
        speed in 0.1f64..10.0,
        standoff in 0.0f64..20.0,
    ) {
        let rel = Vector2::new(rx, ry);
        let next = pursuit_step(p, rel, speed, 0.2, standoff);
        prop_assert!(next.distance(&p) <= speed * 0.2 + 1e-9);
        let target = p.offset(rel);
        if rel.norm() > standoff {
            prop_assert!(next.distance(&target) >= standoff - 1e-9);
        } else {
            prop_assert_eq!(next, p);
        }
    }

    #[test]
    fn mode_switch_follows_entry_and_exit_rules(
        d_c in prop::option::of(0.0f64..40.0),
        e_m in 0.0f64..3.0,
        t_d in 0.1f64..3.0,
        jamming in any::<bool>(),
    ) {
        let params = reference_scenario().controller;
        let mut s = SwitchingState::new(&params);
        s.t_d = Some(t_d);
        s.e_m = e_m;
        s.mode = if jamming { RadioMode::Jamming } else { RadioMode::RpsActive };
        step_mode(&mut s, 0, d_c, &params);
        let expected = if jamming {
            if e_m < t_d { RadioMode::Jamming } else { RadioMode::RpsActive }
        } else if d_c.is_some_and(|d| d <= params.d_jam_m) {
            RadioMode::Jamming
        } else {
            RadioMode::RpsActive
        };
        prop_assert_eq!(s.mode, expected);
        prop_assert_eq!(s.switch_count, s.events.len());
    }

    #[test]
    fn threshold_non_decreasing_in_percentile(
        residuals in prop::collection::vec(0.0f64..5.0, 1..100),
        a in 1.0f64..100.0,
        b in 1.0f64..100.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(compute_threshold(&residuals, lo).unwrap() <= compute_threshold(&residuals, hi).unwrap());
    }

    #[test]
    fn streams_replay_identically(seed in any::<u64>(), label in "[a-z-]{1,12}") {
        let a: Vec<u64> = rng_stream(seed, &label).random_iter().take(16).collect();
        let b: Vec<u64> = rng_stream(seed, &label).random_iter().take(16).collect();
        prop_assert_eq!(a, b);
    }
}
