use gpslab_core::guidance::guidance_gap;
use gpslab_core::sampler::{ddim_denoise, ddim_invert};
use gpslab_core::scoremodel::reference_mixture;
use gpslab_core::{Condition, GuidanceSpec, NoiseSchedule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

proptest! {
    #[test]
    fn alpha_bars_decrease_and_satisfy_recurrence(
        steps in 1usize..400,
        start in 1e-6f64..0.05,
        span in 0.0f64..0.9,
    ) {
        let end = (start + span).min(0.999);
        let s = NoiseSchedule::linear(steps, start, end).unwrap();
        let (a, b) = (s.alpha_bars(), s.betas());
        prop_assert_eq!(a[0], 1.0);
        for t in 1..=steps {
            prop_assert!(a[t] < a[t - 1]);
            prop_assert!(a[t] > 0.0);
            let next = a[t - 1] * (1.0 - b[t - 1]);
            prop_assert!((a[t] - next).abs() <= 1e-14 * next);
        }
    }

    #[test]
    fn denoise_invert_round_trip(
        t in 1usize..=50,
        x in prop::collection::vec(-5.0f64..5.0, 3),
        e in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let s = NoiseSchedule::default_linear(50).unwrap();
        let y = ddim_denoise(&x, &e, t, &s).unwrap();
        let back = ddim_invert(&y, &e, t, &s).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(NoiseSchedule::linear(0, 1e-4, 0.02).is_err());
    assert!(NoiseSchedule::linear(10, 0.02, 1e-4).is_err());
    assert!(NoiseSchedule::linear(10, 0.0, 0.02).is_err());
    assert!(NoiseSchedule::linear(10, 1e-4, 1.0).is_err());
    let s = NoiseSchedule::default_linear(10).unwrap();
    assert!(s.alpha_bar(11).is_err());
    assert!(ddim_denoise(&[0.0], &[0.0], 0, &s).is_err());
    assert!(ddim_denoise(&[0.0, 1.0], &[0.0], 3, &s).is_err());
    assert!(GuidanceSpec::interpolate(1.5).is_err());
    assert!(guidance_gap(&[0.0], &[0.0, 1.0]).is_err());
}

/// 20 probes drawn from the forward marginal; the analytic posterior mean agrees with
/// the importance-sampling oracle.
#[test]
fn posterior_mean_matches_sampling_oracle() {
    let m = reference_mixture();
    let s = NoiseSchedule::linear(50, 1e-4, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for probe in 0..20u64 {
        let t = rng.random_range(1..=50);
        let cond = if probe % 2 == 0 {
            Condition::Class("right".into())
        } else {
            Condition::Class("left".into())
        };
        let a = s.alpha_bar(t).unwrap();
        let centre = if probe % 2 == 0 { 3.0 } else { -3.0 };
        let x: Vec<f64> = [centre, 0.0]
            .iter()
            .map(|mu| {
                let x0 = mu + 0.5 * rng.sample::<f64, _>(StandardNormal);
                a.sqrt() * x0 + (1.0 - a).sqrt() * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let exact = m.posterior_mean_at(&x, a, &cond).unwrap();
        let sampled = m
            .mc_posterior_mean(&s, &x, t, &cond, 50_000, probe)
            .unwrap();
        let err = ((exact[0] - sampled[0]).powi(2) + (exact[1] - sampled[1]).powi(2)).sqrt();
        assert!(err < 0.05, "probe {probe} t={t}: {exact:?} vs {sampled:?}");
    }
}
