use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hmimo_isac::config::ScenarioConfig;
use hmimo_isac::experiment::TrialResult;
use hmimo_isac::geometry::{
    array_response, complex_gaussian, element_distance, fresnel_distance, ArrayGeometry, DistanceModel,
    SensingTarget,
};
use hmimo_isac::impairments::inject_csi_error;
use hmimo_isac::linalg::CVec;
use hmimo_isac::objective::{composite_objective, jain_fairness, NoiseModel, ObjectiveWeights};
use hmimo_isac::optimizers::model::project_powers;
use hmimo_isac::optimizers::Algorithm;
use hmimo_isac::rates::{
    conventional_noma_view, default_grouping, group_common_allocation, rate_breakdown, sum_rate, RsNomaSolution,
};
use hmimo_isac::records::{read_results_csv, write_results_csv};
use hmimo_isac::sensing::{detection_probability, sensing_sinr, target_models};
use hmimo_isac::stats::{mean_ci, paired_t_test};

const LAMBDA: f64 = 0.003;

fn unit(m: usize, rng: &mut ChaCha8Rng) -> CVec {
    let v = CVec::from_fn(m, |_, _| complex_gaussian(rng, 1.0));
    let n = v.norm();
    v.unscale(n)
}

fn instance(seed: u64, m: usize, k: usize, g: usize) -> (RsNomaSolution, Vec<CVec>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels: Vec<CVec> = (0..k).map(|_| CVec::from_fn(m, |_, _| complex_gaussian(&mut rng, 1.0))).collect();
    let sol = RsNomaSolution {
        w_common: (0..g).map(|_| unit(m, &mut rng)).collect(),
        w_private: (0..k).map(|_| unit(m, &mut rng)).collect(),
        w_sensing: unit(m, &mut rng),
        p_common: (0..g).map(|_| rng.random::<f64>()).collect(),
        p_private: (0..k).map(|_| rng.random::<f64>()).collect(),
        p_sensing: rng.random::<f64>(),
        rho: (0..k).map(|_| rng.random::<f64>()).collect(),
        grouping: default_grouping(&channels, g).unwrap(),
    };
    (sol, channels)
}

fn targets(seed: u64, count: usize) -> Vec<SensingTarget> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..count)
        .map(|_| {
            SensingTarget::new(
                rng.random_range(0.1..1.4),
                rng.random_range(-PI..PI),
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..5.0),
            )
            .unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fresnel_is_accurate_far_out(
        side in 2usize..17,
        m_frac in 0.0f64..1.0,
        n_frac in 0.0f64..1.0,
        theta in -PI / 2.0..PI / 2.0,
        phi in -PI..PI,
        factor in 100.0f64..1000.0,
    ) {
        let geom = ArrayGeometry::square(side, LAMBDA / 4.0, LAMBDA).unwrap();
        let m = ((side - 1) as f64 * m_frac).round() as usize;
        let n = ((side - 1) as f64 * n_frac).round() as usize;
        let r = factor * geom.aperture();
        let exact = element_distance(&geom, m, n, theta, phi, r).unwrap();
        let approx = fresnel_distance(&geom, m, n, theta, phi, r).unwrap();
        prop_assert!((approx - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn response_magnitude_is_inverse_distance(
        side in 2usize..9,
        theta in -1.2f64..1.2,
        phi in -PI..PI,
        r in 0.05f64..5.0,
    ) {
        let geom = ArrayGeometry::square(side, LAMBDA / 4.0, LAMBDA).unwrap();
        let a = array_response(&geom, theta, phi, r, DistanceModel::Exact).unwrap();
        let scale = 1.0 / (geom.m_total() as f64).sqrt();
        for m in 0..side {
            for n in 0..side {
                let d = element_distance(&geom, m, n, theta, phi, r).unwrap();
                let z = a[geom.flat_index(m, n)];
                prop_assert!((z.norm() - scale / d).abs() <= 1e-12 * scale / d);
            }
        }
    }

    #[test]
    fn rates_invariant_to_common_scaling(seed in any::<u64>(), c in 0.01f64..100.0) {
        let (sol, channels) = instance(seed, 6, 4, 2);
        let sigma = 0.1;
        let scaled: Vec<CVec> = channels.iter().map(|h| h.scale(c)).collect();
        let a = rate_breakdown(&sol, &channels, sigma);
        let b = rate_breakdown(&sol, &scaled, sigma * c * c);
        for (x, y) in a.users.iter().zip(&b.users) {
            prop_assert!((x.total_rate - y.total_rate).abs() <= 1e-9 * x.total_rate.max(1.0));
            prop_assert!(x.total_rate >= 0.0 && x.private_rate >= 0.0 && x.common_rate >= 0.0);
            prop_assert!((x.total_rate - x.allocated_common - x.private_rate).abs() <= 1e-12 * x.total_rate.max(1.0));
        }
    }

    #[test]
    fn common_allocation_sums_to_capacity(seed in any::<u64>()) {
        let (sol, channels) = instance(seed, 6, 6, 2);
        let br = rate_breakdown(&sol, &channels, 0.1);
        for g in 0..2 {
            let parts = group_common_allocation(g, &sol, &channels, 0.1).unwrap();
            let total: f64 = parts.iter().map(|p| p.1).sum();
            let cap = br.group_common_rate[g];
            prop_assert!((total - cap).abs() <= 1e-12 * cap.max(1.0));
        }
    }

    #[test]
    fn noma_view_is_consistent(seed in any::<u64>()) {
        let (mut sol, channels) = instance(seed, 6, 4, 2);
        sol.p_common.iter_mut().for_each(|p| *p = 0.0);
        sol.rho.iter_mut().for_each(|r| *r = 0.0);
        let a = sum_rate(&sol, &channels, 0.1).unwrap();
        let b = sum_rate(&conventional_noma_view(&sol), &channels, 0.1).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn later_decoded_private_rate_falls_with_earlier_power(seed in any::<u64>(), boost in 1.0f64..10.0) {
        let (sol, channels) = instance(seed, 4, 4, 1);
        let order = sol.grouping.sic_order[0].clone();
        let (first, last) = (order[0], order[order.len() - 1]);
        let before = rate_breakdown(&sol, &channels, 0.1).users[last].private_rate;
        let mut louder = sol.clone();
        louder.p_private[first] *= boost;
        let after = rate_breakdown(&louder, &channels, 0.1).users[last].private_rate;
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn detection_in_unit_interval_and_monotone(p_fa in 1e-6f64..0.99, g1 in 0.0f64..100.0, g2 in 0.0f64..100.0) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = detection_probability(lo, p_fa).unwrap();
        let b = detection_probability(hi, p_fa).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a <= b);
        prop_assert!((detection_probability(0.0, p_fa).unwrap() - p_fa).abs() < 1e-9);
    }

    #[test]
    fn sensing_sinr_ignores_global_phase(seed in any::<u64>(), angle in -PI..PI) {
        let geom = ArrayGeometry::square(3, LAMBDA / 4.0, LAMBDA).unwrap();
        let (sol, _) = instance(seed, 9, 3, 1);
        let ts = targets(seed, 2);
        let rot = Complex64::from_polar(1.0, angle);
        let mut turned = sol.clone();
        for j in 0..turned.num_streams() {
            let w = turned.beam(j) * rot;
            *turned.beam_mut(j) = w;
        }
        for l in 0..2 {
            let a = sensing_sinr(l, &sol, &ts, &geom, 1e-3).unwrap();
            let b = sensing_sinr(l, &turned, &ts, &geom, 1e-3).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
        }
    }

    #[test]
    fn jain_within_bounds(rates in prop::collection::vec(0.0f64..50.0, 1..20)) {
        prop_assume!(rates.iter().any(|r| *r > 0.0));
        let j = jain_fairness(&rates).unwrap();
        let k = rates.len() as f64;
        prop_assert!(j >= 1.0 / k - 1e-12 && j <= 1.0 + 1e-12);
    }

    #[test]
    fn composite_linear_in_weights(
        seed in any::<u64>(),
        a in prop::array::uniform4(0.01f64..1.0),
        b in prop::array::uniform4(0.01f64..1.0),
    ) {
        let geom = ArrayGeometry::square(3, LAMBDA / 4.0, LAMBDA).unwrap();
        let (sol, channels) = instance(seed, 9, 3, 1);
        let models = target_models(&geom, &targets(seed, 2)).unwrap();
        let noise = NoiseModel { sigma_n2: 0.1, sigma_s2: 1e-3 };
        // equal sums keep the normalized weights affine in the raw ones
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let b: Vec<f64> = b.iter().map(|x| x * sa / sb).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let eval = |w: &[f64]| {
            let w = ObjectiveWeights::new(w[0], w[1], w[2], w[3]).unwrap();
            composite_objective(&sol, &channels, &models, &w, &noise, None).unwrap().composite
        };
        let (fa, fb, fm) = (eval(&a), eval(&b), eval(&mid));
        prop_assert!((fm - 0.5 * (fa + fb)).abs() <= 1e-9 * fm.abs().max(1.0));
    }

    #[test]
    fn projection_is_feasible(
        powers in prop::collection::vec(-5.0f64..50.0, 2..12),
        p_max in 0.1f64..100.0,
        frozen_mask in any::<u16>(),
    ) {
        let frozen: Vec<bool> = (0..powers.len()).map(|i| frozen_mask >> i & 1 == 1).collect();
        let mut p = powers.clone();
        project_powers(&mut p, p_max, &frozen);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!(p.iter().sum::<f64>() <= p_max * (1.0 + 1e-12));
        for (x, f) in p.iter().zip(&frozen) {
            if *f {
                prop_assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn csi_error_has_exact_size(seed in any::<u64>(), eps in 0.0f64..2.0, m in 1usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = CVec::from_fn(m, |_, _| complex_gaussian(&mut rng, 1.0));
        prop_assume!(h.norm() > 0.0);
        let hat = inject_csi_error(&h, eps, &mut rng).unwrap();
        let err = (&hat - &h).norm() / h.norm();
        prop_assert!((err - eps).abs() <= 1e-12 * eps.max(1.0));
    }

    #[test]
    fn wider_interval_contains_narrower(samples in prop::collection::vec(-100.0f64..100.0, 2..40)) {
        let (_, lo95, hi95) = mean_ci(&samples, 0.95).unwrap();
        let (_, lo99, hi99) = mean_ci(&samples, 0.99).unwrap();
        prop_assert!(lo95 <= hi95);
        prop_assert!(lo99 <= lo95 && hi95 <= hi99);
    }

    #[test]
    fn paired_p_value_in_unit_interval(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Ok(t) = paired_t_test(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&t.p_value));
            if let Some((lo, hi)) = t.ci {
                prop_assert!(lo <= hi);
            }
        }
    }

    #[test]
    fn result_csv_round_trips(
        values in prop::array::uniform8(any::<f64>()),
        sinr in prop::collection::vec(any::<f64>(), 0..4),
        trial in 0usize..10_000,
        hash in any::<u64>(),
        flags in any::<u8>(),
    ) {
        let row = TrialResult {
            schema_version: 1,
            sweep_axis: "csi_eps".into(),
            sweep_index: 1,
            sweep_value: values[0],
            algorithm: Algorithm::ALL[trial % 4],
            trial,
            channel_hash: hash,
            failed: flags & 1 == 1,
            sum_rate: values[1],
            sinr_db: sinr,
            mean_detection_prob: values[2],
            mean_crlb: values[3],
            energy_efficiency: values[4],
            fairness: values[5],
            objective: values[6],
            upper_bound: values[7],
            feasible: flags & 2 == 2,
            iterations: trial / 3,
            converged: flags & 4 == 4,
            monotone: flags & 8 == 8,
        };
        let mut buf = Vec::new();
        write_results_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let back = read_results_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 1);
        let got = &back[0];
        let bits = |r: &TrialResult| {
            let mut v: Vec<u64> = [r.sweep_value, r.sum_rate, r.mean_detection_prob, r.mean_crlb,
                r.energy_efficiency, r.fairness, r.objective, r.upper_bound]
                .iter()
                .map(|x| if x.is_nan() { u64::MAX } else { x.to_bits() })
                .collect();
            v.extend(r.sinr_db.iter().map(|x| if x.is_nan() { u64::MAX } else { x.to_bits() }));
            v
        };
        prop_assert_eq!(bits(got), bits(&row));
        prop_assert_eq!((got.trial, got.channel_hash, got.algorithm), (row.trial, row.channel_hash, row.algorithm));
        prop_assert_eq!((got.failed, got.feasible, got.converged, got.monotone), (row.failed, row.feasible, row.converged, row.monotone));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn config_toml_round_trips(
        seed in any::<u64>(),
        trials in 2usize..500,
        eps in 0.0f64..1.0,
        corr in 0.0f64..0.99,
        preset in 0usize..3,
    ) {
        let mut cfg = ScenarioConfig::preset(hmimo_isac::config::PRESETS[preset]).unwrap();
        cfg.experiment.seed = seed;
        cfg.experiment.trials = trials;
        cfg.impairments.csi_eps = eps;
        cfg.channel.user_correlation = corr;
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
