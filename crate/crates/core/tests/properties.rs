mod common;

use common::*;
use miura_rc::dynamics::{attach_payload, ExcitationSegment, ExcitationSpec, ModelParams, PayloadSpec, ReservoirModel};
use miura_rc::harness::{ExperimentConfig, GridSpec};
use miura_rc::reservoir::{resolve_selection, rmse, stack_segments, train_readout, ChannelSelection};
use miura_rc::tasks::{spearman, test_sequence, weight_target, Condition, PatternTaskSpec, TestSequenceSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn sheet() -> &'static ReservoirModel {
    static SHEET: OnceLock<ReservoirModel> = OnceLock::new();
    SHEET.get_or_init(|| ReservoirModel::from_params(&ModelParams::default()).unwrap())
}

proptest! {
    #[test]
    fn rmse_is_a_shift_and_scale_aware_distance(
        y in prop::collection::vec(-100.0f64..100.0, 1..40),
        c in -10.0f64..10.0,
        k in -5.0f64..5.0,
    ) {
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        prop_assert!((rmse(&y, &shifted).unwrap() - c.abs()).abs() < 1e-9);
        prop_assert_eq!(rmse(&y, &shifted).unwrap(), rmse(&shifted, &y).unwrap());
        let ys: Vec<f64> = y.iter().map(|v| k * v).collect();
        let ss: Vec<f64> = shifted.iter().map(|v| k * v).collect();
        prop_assert!((rmse(&ys, &ss).unwrap() - k.abs() * c.abs()).abs() < 1e-9);
    }

    #[test]
    fn target_offsets_move_only_the_bias(
        seed in any::<u64>(),
        rows in 40usize..80,
        cols in 2usize..10,
        c in -50.0f64..50.0,
        ridge in prop::bool::ANY,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = states(random_matrix(rows, cols, &mut rng));
        let y = random_matrix(rows, 1, &mut rng);
        let lambda = if ridge { 1e-3 } else { 0.0 };
        let a = train_readout(&s, &targets(y.clone()), lambda).unwrap();
        let b = train_readout(&s, &targets(y.add_scalar(c)), lambda).unwrap();
        prop_assert!((b.bias[0] - a.bias[0] - c).abs() < 1e-8 * (1.0 + c.abs()));
        for (wa, wb) in a.weights[0].iter().zip(&b.weights[0]) {
            prop_assert!((wa - wb).abs() < 1e-8 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn stacking_concatenates_rows(seed in any::<u64>(), sizes in prop::collection::vec(1usize..30, 1..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<_> = sizes.iter().map(|&n| states(random_matrix(n, 4, &mut rng))).collect();
        let s = stack_segments(&parts).unwrap();
        prop_assert_eq!(s.rows(), sizes.iter().sum::<usize>());
        prop_assert_eq!(s.origin().len(), sizes.len());
        let mut r = 0;
        for p in &parts {
            prop_assert_eq!(s.values().rows(r, p.rows()).into_owned(), p.values().clone());
            r += p.rows();
        }
    }

    #[test]
    fn random_channel_draws_are_sorted_distinct_and_seeded(count in 1usize..=28, seed in any::<u64>()) {
        let all: Vec<usize> = (0..28).collect();
        let sel = ChannelSelection::Random { count, seed };
        let ids = resolve_selection(&all, &sel).unwrap();
        prop_assert_eq!(ids.len(), count);
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(ids.iter().all(|i| *i < 28));
        prop_assert_eq!(ids, resolve_selection(&all, &sel).unwrap());
    }

    #[test]
    fn spearman_is_bounded_and_rank_based(x in prop::collection::vec(-10.0f64..10.0, 3..30), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_matrix(x.len(), 1, &mut rng);
        let y = y.as_slice();
        let rho = spearman(&x, y);
        prop_assume!(rho.is_finite());
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
        // a strictly increasing transform keeps the ranks
        let warped: Vec<f64> = y.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
        prop_assert!((spearman(&x, &warped) - rho).abs() < 1e-12);
    }

    #[test]
    fn weight_target_is_a_two_step(m1 in 1.0f64..20.0, dm in 0.5f64..10.0, seg in 1.0f64..10.0) {
        let y = weight_target(m1, m1 + dm, seg, 25.0).unwrap();
        let n = (seg * 25.0).round() as usize;
        let col = y.column(0);
        prop_assert_eq!(col.len(), 2 * n);
        prop_assert!(col[..n].iter().all(|&v| v == m1));
        prop_assert!(col[n..].iter().all(|&v| v == m1 + dm));
    }

    #[test]
    fn test_sequences_switch_on_whole_cycles(seed in any::<u64>(), segments in 1usize..20) {
        let spec = PatternTaskSpec {
            test: TestSequenceSpec { seed, segments, ..Default::default() },
            ..Default::default()
        };
        let (cond, labels) = test_sequence(&spec, 25.0).unwrap();
        prop_assert_eq!(cond.excitation.segments.len(), segments);
        prop_assert_eq!(labels.len(), (cond.duration() * 25.0).round() as usize);
        prop_assert!(labels.iter().all(|l| spec.patterns.contains(l)));
        for (k, s) in cond.excitation.segments.iter().enumerate() {
            let cycles = 2.0 * s.duration_s;
            prop_assert!((cycles - cycles.round()).abs() < 1e-9, "segment {} lasts {}", k, s.duration_s);
            let core = if k == 0 { s.duration_s - 5.0 } else { s.duration_s };
            prop_assert!((0.99..=4.01).contains(&core));
        }
    }

    #[test]
    fn excitation_is_bounded_and_restarts_each_segment(
        amps in prop::collection::vec(0.5f64..8.0, 1..5),
        t in 0.0f64..20.0,
    ) {
        let segments: Vec<ExcitationSegment> = amps
            .iter()
            .enumerate()
            .map(|(i, &a)| ExcitationSegment { amplitude_mm: a, frequency_hz: 1.0 + i as f64, duration_s: 2.5 })
            .collect();
        let e = ExcitationSpec { segments };
        let peak = amps.iter().copied().fold(0.0, f64::max);
        prop_assert!(e.displacement(t).abs() <= peak + 1e-12);
        for k in 0..amps.len() {
            prop_assert!(e.displacement(2.5 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn payload_adds_exactly_its_mass(m in 0.0f64..18.0, station in prop::sample::select(vec!['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'])) {
        let loaded = attach_payload(sheet(), PayloadSpec::new(m, station)).unwrap();
        prop_assert!((loaded.total_mass() - sheet().total_mass() - m * 1e-3).abs() < 1e-15);
    }

    #[test]
    fn condition_seeds_are_stable_and_distinct(m in 1.0f64..18.0, f in 0.5f64..6.0, seed in any::<u64>()) {
        let a = Condition::sine(m, 'c', 4.0, f, 15.0);
        let b = Condition::sine(m + 0.5, 'c', 4.0, f, 15.0);
        prop_assert_eq!(a.seed(seed), a.clone().seed(seed));
        prop_assert_ne!(a.seed(seed), b.seed(seed));
        prop_assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn configs_round_trip_through_json(
        seed in any::<u64>(),
        noise in 0.0f64..0.5,
        masses in prop::collection::vec(1.0f64..18.0, 1..6),
        freqs in prop::collection::vec(0.5f64..8.0, 1..4),
        alpha in 0.0f64..30.0,
        threads in prop::option::of(1usize..16),
    ) {
        let mut c = ExperimentConfig::default();
        c.campaign_seed = seed;
        c.measurement_noise_mm = noise;
        c.model.rayleigh_alpha = alpha;
        c.parallelism = threads;
        c.grid = GridSpec { masses_g: masses, frequencies_hz: freqs, ..GridSpec::desk() };
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(&back, &c);

        let mut edited = c.clone();
        edited.set_field("model.rayleigh_alpha", &format!("{}", alpha + 1.0)).unwrap();
        prop_assert_eq!(edited.model.rayleigh_alpha, alpha + 1.0);
        edited.set_field("model.rayleigh_alpha", &format!("{alpha}")).unwrap();
        prop_assert_eq!(edited, c);
    }
}

#[test]
fn grid_sizes() {
    assert_eq!(GridSpec::desk().len(), 72);
    assert_eq!(GridSpec::full().len(), 896);
    let conds = GridSpec::desk().conditions(&Default::default()).unwrap();
    let hashes: std::collections::BTreeSet<String> = conds.iter().map(Condition::hash).collect();
    assert_eq!(hashes.len(), 72);
}
