//! Statistical behaviour of the localisation-site predictor: robustness to
//! the level-depth parameter, agreement between the masked and j-ball
//! functionals, and the diagnostic gap events.

use bam_core::env::{Environment, PotentialParams, TrapParams};
use bam_core::lattice::BoxSpec;
use bam_core::predictor::{gap_event_check, predict_site, GapThresholds, PsiVariant};
use bam_core::ScaleSet;

fn build(seed: u64, radius: i64, gamma: f64, trap: TrapParams) -> Environment {
    Environment::build(
        BoxSpec::new(1, radius).unwrap(),
        seed,
        PotentialParams::new(gamma).unwrap(),
        trap,
    )
    .unwrap()
}

#[test]
fn theta_robustness_of_the_predicted_site() {
    // theta = 0.1 vs theta = 0.4 at t = 1e4 (d = 1, gamma = 2). Since the
    // deep candidate set is a subset of the shallow one, the two argmaxes
    // agree exactly when the shallow winner clears the deeper level; that
    // identity is asserted seed by seed. The agreement RATE is governed by
    // P(xi(Z_t) > L_{t,0.1}), whose margin grows only like a_t: at t = 1e4
    // it is near zero and the measured rate is ~0.35. Robustness in the
    // almost-sure sense is far beyond desk scale; the asserted floor is
    // frozen from measurement.
    let t = 1e4;
    let scales_shallow = ScaleSet::compute(t, 1, 2.0, 0.4).unwrap();
    let scales_deep = ScaleSet::compute(t, 1, 2.0, 0.1).unwrap();
    let radius = (3.0 * scales_shallow.big_r_t).floor() as i64;
    let trap = TrapParams::weibull_shifted(1.0, 1.0).unwrap();
    let mut agree = 0;
    for seed in 0..100u64 {
        let env = build(seed, radius, 2.0, trap);
        let shallow = predict_site(&env, &scales_shallow, PsiVariant::EtaOnly, 0.0).unwrap();
        let deep = predict_site(&env, &scales_deep, PsiVariant::EtaOnly, 0.0);
        let clears_level = env.xi_at(&shallow.site).unwrap() > scales_deep.l_t;
        match deep {
            Ok(deep) => {
                assert_eq!(
                    deep.site == shallow.site,
                    clears_level,
                    "seed {seed}: subset-argmax identity violated"
                );
                agree += (deep.site == shallow.site) as usize;
            }
            Err(_) => assert!(!clears_level, "seed {seed}: winner above level but set empty"),
        }
    }
    println!("theta agreement rate at t = 1e4: {agree}/100");
    assert!(agree >= 25, "theta agreement collapsed: {agree}/100");
}

#[test]
fn masked_and_jball_functionals_agree() {
    // gamma = 2 gives rho = 0 (masked = eta) and j = 1; their argmaxes
    // agree once the eigenvalue corrections (of order sigma^-2 / a_t) are
    // small against the top-two gap, so the trap floor is raised to 4.
    let t = 1e4;
    let scales = ScaleSet::compute(t, 1, 2.0, 0.45).unwrap();
    let radius = scales.big_r_t.floor() as i64;
    let trap = TrapParams::weibull_shifted(4.0, 1.0).unwrap();
    let mut agree = 0;
    for seed in 0..100u64 {
        let env = build(seed, radius, 2.0, trap);
        let masked = predict_site(&env, &scales, PsiVariant::EtaOnly, 0.0).unwrap();
        let jball = predict_site(&env, &scales, PsiVariant::JBall { j: 1 }, 0.0).unwrap();
        agree += (masked.site == jball.site) as usize;
    }
    assert!(agree >= 90, "masked and j-ball agreed in only {agree}/100 seeds");
}

#[test]
fn gap_events_grow_more_likely_with_t() {
    let trap = TrapParams::weibull_shifted(1.0, 1.0).unwrap();
    let thresholds = GapThresholds::default();
    let mut rates = Vec::new();
    for &t in &[1e3, 1e4, 1e5] {
        let scales = ScaleSet::compute(t, 1, 2.0, 0.45).unwrap();
        let radius = scales.big_r_t.floor() as i64;
        let mut hits = 0;
        let seeds = 200u64;
        for seed in 0..seeds {
            let env = build(seed, radius, 2.0, trap);
            let ev = gap_event_check(&env, &scales, PsiVariant::EtaOnly, &thresholds).unwrap();
            if ev.gap_event == Some(true) && ev.distance_event && ev.height_event {
                hits += 1;
            }
        }
        rates.push(hits as f64 / seeds as f64);
    }
    println!("joint gap-event rates across t: {rates:?}");
    // trend target with a 2-sigma binomial allowance (se ~ 0.035)
    for w in rates.windows(2) {
        assert!(
            w[1] >= w[0] - 0.07,
            "joint event rate fell from {} to {}",
            w[0],
            w[1]
        );
    }
    assert!(rates[2] > 0.0, "joint event never held at t = 1e5");
}
