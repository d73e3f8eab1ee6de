//! Spectrum sweeps over the SOP bands: synthesis, moment extraction and
//! ranging-band selection.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fmath;
use crate::scenario::{BandId, ControllerParams, Position2D, ScenarioConfig, Transmitter};

/// RSS samples (dBm) collected per band during one sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepFrame {
    pub step: usize,
    pub samples: BTreeMap<BandId, Vec<f64>>,
}

/// Per-band mean (dBm) and population variance (dB^2) of one sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BandMoments {
    pub step: usize,
    pub mean: BTreeMap<BandId, f64>,
    pub variance: BTreeMap<BandId, f64>,
}

/// Floor on the distance fed to the log-distance model.
const MIN_MODEL_DISTANCE_M: f64 = 1e-3;

/// Log-distance path-loss model: P0 - 10 n log10(d / d0).
pub fn pathloss_rss(tx: &Transmitter, distance_m: f64, n_pl: f64) -> f64 {
    let d = distance_m.max(MIN_MODEL_DISTANCE_M);
    tx.ref_rss_dbm - 10.0 * n_pl * fmath::log10(d / tx.d0_m)
}

/// Draws one sweep at `true_position`: `samples_per_band` shadowed samples
/// for every transmitter in the scenario.
pub fn simulate_sweep<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    true_position: Position2D,
    step: usize,
    rng: &mut R,
) -> SweepFrame {
    debug_assert!(true_position.is_finite());
    let sigma = config.shadowing_sigma_db;
    let mut samples = BTreeMap::new();
    for tx in &config.transmitters {
        let model = pathloss_rss(tx, tx.position.distance(&true_position), config.controller.n_pl);
        let band: Vec<f64> = (0..config.samples_per_band)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                model + sigma * z
            })
            .collect();
        samples.insert(tx.id, band);
    }
    SweepFrame { step, samples }
}

/// Groups `(step, band, rss_dbm)` rows into frames ordered by step.
///
/// Rows of one frame need not be contiguous; bands absent from a step are
/// simply missing from that frame.
pub fn frames_from_rows<I>(rows: I) -> Vec<SweepFrame>
where
    I: IntoIterator<Item = (usize, BandId, f64)>,
{
    let mut by_step: BTreeMap<usize, BTreeMap<BandId, Vec<f64>>> = BTreeMap::new();
    for (step, band, rss) in rows {
        by_step.entry(step).or_default().entry(band).or_default().push(rss);
    }
    by_step
        .into_iter()
        .map(|(step, samples)| SweepFrame { step, samples })
        .collect()
}

/// Mean and population variance per band.
///
/// Samples are summed in sorted order so the result does not depend on the
/// order in which they were recorded.
pub fn extract_moments(frame: &SweepFrame) -> BandMoments {
    let mut mean = BTreeMap::new();
    let mut variance = BTreeMap::new();
    let mut sorted = Vec::new();
    for (&band, samples) in &frame.samples {
        if samples.is_empty() {
            continue;
        }
        sorted.clear();
        sorted.extend_from_slice(samples);
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        // shifted by the median so constant input reproduces exactly
        let pivot = sorted[sorted.len() / 2];
        let m = pivot + sorted.iter().map(|s| s - pivot).sum::<f64>() / n;
        let v = sorted.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / n;
        mean.insert(band, m);
        variance.insert(band, v);
    }
    BandMoments {
        step: frame.step,
        mean,
        variance,
    }
}

/// Picks the `t_i` bands with the highest mean RSS averaged over the
/// calibration frames, strongest first; ties go to the lower band id.
pub fn select_transmitters(calibration: &[BandMoments], params: &ControllerParams) -> Result<Vec<BandId>> {
    let required = params.t_i;
    let mut sums: BTreeMap<BandId, (f64, usize)> = BTreeMap::new();
    for frame in calibration {
        for (&band, &m) in &frame.mean {
            let e = sums.entry(band).or_insert((0.0, 0));
            e.0 += m;
            e.1 += 1;
        }
    }
    if sums.len() < required || calibration.is_empty() {
        return Err(Error::InsufficientTransmitters {
            available: sums.len(),
            required,
        });
    }
    let mut ranked: Vec<(BandId, f64)> = sums
        .into_iter()
        .map(|(band, (sum, count))| (band, sum / count as f64))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(required).map(|(b, _)| b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use crate::scenario::{reference_scenario, rng_stream};
    use alloc::vec;
    use proptest::prelude::*;

    fn params(t_i: usize) -> ControllerParams {
        ControllerParams {
            t_i,
            n_pl: 2.8,
            a_percentile: 50.0,
            d_jam_m: 10.0,
            calib_window_steps: 10,
        }
    }

    fn moments_of(means: &[(u32, f64)]) -> BandMoments {
        BandMoments {
            step: 0,
            mean: means.iter().map(|&(b, m)| (BandId(b), m)).collect(),
            variance: means.iter().map(|&(b, _)| (BandId(b), 0.0)).collect(),
        }
    }

    #[test]
    fn noiseless_sweep_at_reference_distance() {
        let mut cfg = reference_scenario();
        cfg.shadowing_sigma_db = 0.0;
        let tx = cfg.transmitters[0].clone();
        let at = tx.position.offset(nalgebra::Vector2::new(tx.d0_m, 0.0));
        let frame = simulate_sweep(&cfg, at, 0, &mut rng_stream(1, "sweep"));
        assert!(frame.samples[&tx.id].iter().all(|&s| s == tx.ref_rss_dbm));
        assert_eq!(frame.samples[&tx.id].len(), 16);
    }

    #[test]
    fn noiseless_sweep_one_decade_out() {
        let mut cfg = reference_scenario();
        cfg.shadowing_sigma_db = 0.0;
        let tx = cfg.transmitters[3].clone();
        let at = tx.position.offset(nalgebra::Vector2::new(0.0, 10.0 * tx.d0_m));
        let frame = simulate_sweep(&cfg, at, 0, &mut rng_stream(1, "sweep"));
        for &s in &frame.samples[&tx.id] {
            assert!((s - (tx.ref_rss_dbm - 28.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn shadowed_sample_mean_close_to_model() {
        let mut cfg = reference_scenario();
        cfg.shadowing_sigma_db = 3.0;
        cfg.samples_per_band = 256;
        let pos = Position2D::new(10.0, -5.0);
        let frame = simulate_sweep(&cfg, pos, 0, &mut cfg.rng_stream("sweep"));
        let moments = extract_moments(&frame);
        for tx in &cfg.transmitters {
            let model = pathloss_rss(tx, tx.position.distance(&pos), 2.8);
            assert!((moments.mean[&tx.id] - model).abs() < 1.0);
        }
    }

    #[test]
    fn moments_two_points_and_single() {
        let mut frame = SweepFrame::default();
        frame.samples.insert(BandId(1), vec![-60.0, -62.0]);
        frame.samples.insert(BandId(2), vec![-70.0]);
        let m = extract_moments(&frame);
        assert_eq!(m.mean[&BandId(1)], -61.0);
        assert_eq!(m.variance[&BandId(1)], 1.0);
        assert_eq!(m.mean[&BandId(2)], -70.0);
        assert_eq!(m.variance[&BandId(2)], 0.0);
    }

    #[test]
    fn moments_of_constant_samples_are_exact() {
        let mut frame = SweepFrame::default();
        let v = -67.123456789;
        frame.samples.insert(BandId(9), vec![v; 256]);
        let m = extract_moments(&frame);
        assert_eq!(m.mean[&BandId(9)], v);
        assert_eq!(m.variance[&BandId(9)], 0.0);
    }

    #[test]
    fn rows_group_into_sorted_frames() {
        let frames = frames_from_rows(vec![(0, BandId(5), -60.0), (0, BandId(7), -70.0)]);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].samples.len(), 2);

        assert!(frames_from_rows(Vec::new()).is_empty());

        let frames = frames_from_rows(vec![(3, BandId(1), -1.0), (1, BandId(1), -2.0), (2, BandId(1), -3.0)]);
        let steps: Vec<usize> = frames.iter().map(|f| f.step).collect();
        assert_eq!(steps, vec![1, 2, 3]);
    }

    #[test]
    fn selection_by_mean_power() {
        let m = moments_of(&[(1, -50.0), (2, -60.0), (3, -55.0), (4, -70.0), (5, -52.0)]);
        let sel = select_transmitters(&[m], &params(4)).unwrap();
        assert_eq!(sel, vec![BandId(1), BandId(5), BandId(3), BandId(2)]);
    }

    #[test]
    fn selection_tie_break_lower_id() {
        let m = moments_of(&[(8, -50.0), (3, -50.0), (1, -80.0), (2, -81.0)]);
        let mut p = params(4);
        p.t_i = 1;
        assert_eq!(select_transmitters(&[m], &p).unwrap(), vec![BandId(3)]);
    }

    #[test]
    fn selection_needs_enough_bands() {
        let m = moments_of(&[(1, -50.0), (2, -60.0), (3, -55.0)]);
        let err = select_transmitters(&[m], &params(4)).unwrap_err();
        assert!(err.to_string().contains("insufficient transmitters"));
        assert!(select_transmitters(&[], &params(4)).is_err());
    }

    #[test]
    fn selection_averages_over_frames() {
        let a = moments_of(&[(1, -50.0), (2, -60.0), (3, -55.0), (4, -70.0), (5, -52.0)]);
        let b = moments_of(&[(1, -70.0), (2, -60.0), (3, -55.0), (4, -70.0), (5, -52.0)]);
        // band 1 averages to -60 and ties band 2, which it beats on id
        let sel = select_transmitters(&[a, b], &params(4)).unwrap();
        assert_eq!(sel, vec![BandId(5), BandId(3), BandId(1), BandId(2)]);
    }

    proptest! {
        #[test]
        fn moments_are_permutation_invariant(
            samples in prop::collection::vec(-120.0f64..0.0, 1..64),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = samples.clone();
            shuffled.shuffle(&mut rng_stream(seed, "perm"));
            let mut a = SweepFrame::default();
            a.samples.insert(BandId(1), samples);
            let mut b = SweepFrame::default();
            b.samples.insert(BandId(1), shuffled);
            prop_assert_eq!(extract_moments(&a), extract_moments(&b));
        }

        #[test]
        fn selection_ignores_insertion_order(
            means in prop::collection::btree_map(0u32..40, -100.0f64..-20.0, 4..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut pairs: Vec<(u32, f64)> = means.into_iter().collect();
            let fwd = moments_of(&pairs);
            pairs.shuffle(&mut rng_stream(seed, "perm"));
            let shuffled = moments_of(&pairs);
            let p = params(4);
            prop_assert_eq!(select_transmitters(&[fwd], &p).unwrap(), select_transmitters(&[shuffled], &p).unwrap());
        }
    }
}
