//! Invariants checked over random inputs.

use mssd::decompose::{decompose, extract_phase_windows, make_period_spec, reassemble, reassemble_compact, Phase};
use mssd::evalbench::{mae, mse, perturb, ErrorAccumulator, NoiseSpec};
use mssd::numcore::{Tape, Tensor};
use mssd::training::{chronological_split, make_windows, NormStats, PhaseClock, SplitFractions, WindowSpec};
use proptest::prelude::*;

/// Series with a random length and sampling rate, plus a valid offset.
fn series_case() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (prop_oneof![Just(1usize), Just(2), Just(4)], 24usize..=2000).prop_flat_map(|(sph, len)| {
        (
            Just(sph),
            0..24 * sph,
            prop::collection::vec(-1e6f64..1e6, len),
        )
    })
}

/// Compensated summation, independent of the plain left fold under test.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn components_sum_to_input((sph, offset, x) in series_case()) {
        let spec = make_period_spec(sph).unwrap();
        let d = decompose(&x, &spec, offset).unwrap();
        prop_assert_eq!(d.recompose(), x.clone());
        let back = reassemble(&d.ascending, &d.peak, &d.descending, x.len(), &spec, offset).unwrap();
        prop_assert_eq!(back, x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn each_position_has_exactly_one_phase((sph, offset, x) in series_case()) {
        let spec = make_period_spec(sph).unwrap();
        let d = decompose(&x, &spec, offset).unwrap();
        for t in 0..x.len() {
            let phase = d.labels[t];
            prop_assert_eq!(phase, spec.label(t + offset, 0));
            prop_assert_eq!(phase, spec.label(t + spec.period(), offset));
            for other in Phase::ALL {
                if other != phase {
                    prop_assert_eq!(d.component(other)[t], 0.0);
                }
            }
        }
        let total: usize = Phase::ALL.iter().map(|&p| spec.count(x.len(), offset, p)).sum();
        prop_assert_eq!(total, x.len());
    }

    #[test]
    fn compact_round_trip((sph, offset, x) in series_case()) {
        let spec = make_period_spec(sph).unwrap();
        let d = decompose(&x, &spec, offset).unwrap();
        let compact: Vec<Vec<f64>> = Phase::ALL
            .iter()
            .map(|&p| extract_phase_windows(&d, p).concat())
            .collect();
        for (k, &p) in Phase::ALL.iter().enumerate() {
            let segs = extract_phase_windows(&d, p);
            prop_assert!(segs.iter().all(|s| s.len() <= spec.phase_len()));
            prop_assert_eq!(compact[k].len(), spec.count(x.len(), offset, p));
        }
        let back = reassemble_compact(&compact[0], &compact[1], &compact[2], x.len(), &spec, offset).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn whole_days_split_evenly(sph in prop_oneof![Just(1usize), Just(2), Just(4)], days in 1usize..10, offset in 0usize..96) {
        let spec = make_period_spec(sph).unwrap();
        let offset = offset % spec.period();
        for p in Phase::ALL {
            prop_assert_eq!(spec.count(days * spec.period(), offset, p), days * spec.phase_len());
        }
    }

    #[test]
    fn reshape_concat_split_round_trip(rows in 1usize..6, cols in 2usize..9, cut in 1usize..8, seed in any::<u64>()) {
        let cut = cut.min(cols - 1);
        let n = rows * cols;
        let data: Vec<f64> = (0..n).map(|k| ((seed.wrapping_add(k as u64) % 1000) as f64) / 7.0).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![rows, cols], data.clone()).unwrap());
        let flat = tape.reshape(x, vec![n]).unwrap();
        let again = tape.reshape(flat, vec![rows, cols]).unwrap();
        prop_assert_eq!(tape.value(again).to_vec(), data.clone());
        let parts = tape.split(x, 1, &[cut, cols - cut]).unwrap();
        let joined = tape.concat(&parts, 1).unwrap();
        prop_assert_eq!(tape.value(joined).to_vec(), data);
        prop_assert_eq!(tape.shape(parts[0]), &[rows, cut][..]);
    }

    #[test]
    fn window_count_matches_enumeration(len in 0usize..400, i in 1usize..60, o in 1usize..30, stride in 1usize..5, base in 0usize..24) {
        let series: Vec<f64> = (0..len).map(|k| k as f64).collect();
        let spec = WindowSpec { input_len: i, horizon: o, stride };
        let clock = PhaseClock { base_offset: base, period: 24 };
        let windows: Vec<_> = make_windows(&series, 0..len, spec, clock).collect();
        let brute = (0..len).step_by(stride).filter(|s| s + i + o <= len).count();
        prop_assert_eq!(windows.len(), brute);
        prop_assert_eq!(spec.count(len), brute);
        for w in &windows {
            prop_assert_eq!(w.input[0], w.start as f64);
            prop_assert_eq!(w.target[0], (w.start + i) as f64);
            prop_assert_eq!(w.offset, (base + w.start) % 24);
        }
    }

    #[test]
    fn splits_partition_in_order(len in 30usize..5000) {
        let s = chronological_split(len, &SplitFractions::default(), 1).unwrap();
        prop_assert_eq!(s.train.start, 0);
        prop_assert_eq!(s.train.end, s.val.start);
        prop_assert_eq!(s.val.end, s.test.start);
        prop_assert_eq!(s.test.end, len);
    }

    #[test]
    fn norm_round_trip(x in prop::collection::vec(-1e4f64..1e4, 2..300)) {
        let stats = NormStats::fit(&x);
        let z = stats.normalize(&x);
        let back = stats.denormalize(&z);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        if stats.std > 1e-6 {
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn metrics_match_compensated_oracle(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..500)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let n = p.len() as f64;
        let want_mse = neumaier(p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b))) / n;
        let want_mae = neumaier(p.iter().zip(&t).map(|(a, b)| (a - b).abs())) / n;
        let got_mse = mse(&p, &t).unwrap();
        let got_mae = mae(&p, &t).unwrap();
        prop_assert!((got_mse - want_mse).abs() <= 1e-12 * want_mse.max(1.0));
        prop_assert!((got_mae - want_mae).abs() <= 1e-12 * want_mae.max(1.0));
        let mid = p.len() / 2;
        let (mut a, mut b) = (ErrorAccumulator::default(), ErrorAccumulator::default());
        if mid > 0 {
            a.push(&p[..mid], &t[..mid]).unwrap();
        }
        b.push(&p[mid..], &t[mid..]).unwrap();
        a.merge(&b);
        let (m2, a2) = a.finish().unwrap();
        prop_assert!((m2 - want_mse).abs() <= 1e-12 * want_mse.max(1.0));
        prop_assert!((a2 - want_mae).abs() <= 1e-12 * want_mae.max(1.0));
    }

    #[test]
    fn noise_masks_are_nested(n in 10usize..400, seed in any::<u64>()) {
        let raw: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let mut prev: Vec<usize> = Vec::new();
        for ratio in [0.0, 0.05, 0.1, 0.2] {
            let spec = NoiseSpec { ratio, sigma_scale: 1.0 };
            let (noisy, mask) = perturb(&raw, 0..n, &spec, 1.0, seed).unwrap();
            prop_assert_eq!(mask.len(), (ratio * n as f64).round() as usize);
            prop_assert!(prev.iter().all(|p| mask.contains(p)));
            for k in 0..n {
                if !mask.contains(&k) {
                    prop_assert_eq!(noisy[k], raw[k]);
                }
            }
            prev = mask;
        }
    }
}
