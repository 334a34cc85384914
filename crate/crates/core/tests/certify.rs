use std::f64::consts::{E, LN_2};

use enrand::certify::*;
use enrand::entropy::*;
use enrand::qset::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_tf() -> TradeoffFunction {
    TradeoffFunction::new([0.25, 0.25], [0.5, -0.5], [0.0, 0.0], InputDistribution::uniform()).unwrap()
}

fn zero_tf(inputs: InputDistribution) -> TradeoffFunction {
    TradeoffFunction::new([0.0; 2], [0.0; 2], [0.0; 2], inputs).unwrap()
}

/// Certificates from the entropy dual at random targets and energies, which
/// are valid trade-off functions by construction.
fn certificate_pool(count: usize, seed: u64) -> Vec<(DualCertificate, EnergyBounds, InputDistribution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let pk = [rng.random_range(0.05..0.6), rng.random_range(0.05..0.6)];
        let p1 = rng.random_range(0.2..0.8);
        let inputs = InputDistribution::new(p1, 1.0 - p1).unwrap();
        let rep = random_representation_below(&mut rng, pk);
        let (target, _) = behaviour_from_representation(&rep);
        let en = EnergyBounds::peak_only(pk).unwrap();
        let prob = EntropyProblem::new(Target::Behaviour(target), en, inputs, 8);
        if let Ok((_, cert)) = entropy_lower_bound(&prob) {
            out.push((cert, en, inputs));
        }
    }
    out
}

/// Shrinking a valid certificate towards zero or lowering its constant keeps
/// it valid, since the entropy is non-negative.
fn perturbed(cert: &DualCertificate, inputs: InputDistribution, rng: &mut ChaCha8Rng) -> TradeoffFunction {
    let scale = rng.random_range(0.0..=1.0);
    let alpha = scale * cert.alpha - rng.random_range(0.0..0.5);
    let share = rng.random_range(-1.0..2.0);
    TradeoffFunction::new(
        [share * alpha, (1.0 - share) * alpha],
        [scale * cert.beta[0], scale * cert.beta[1]],
        [scale * cert.gamma[0], scale * cert.gamma[1]],
        inputs,
    )
    .unwrap()
}

#[test]
fn estimator_examples() {
    let tf = toy_tf();
    assert_eq!(estimator(&tf, 1, 0), 1.5);
    assert_eq!(estimator(&tf, -1, 1), 1.5);
    assert_eq!(estimator(&tf, -1, 0), -0.5);
    assert_eq!(tf.xi_plus(), 1.5);
    assert_eq!(tf.xi_minus(), -0.5);
}

#[test]
fn estimator_is_unbiased() {
    let inputs = InputDistribution::new(0.3, 0.7).unwrap();
    let tf = TradeoffFunction::new([0.1, 0.3], [0.4, -0.2], [-0.5, 0.0], inputs).unwrap();
    let e = [0.35, -0.6];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rounds = 1_000_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..rounds {
        let x = usize::from(!rng.random_bool(inputs.p(0)));
        let a = if rng.random_bool((1.0 + e[x]) / 2.0) { 1 } else { -1 };
        let v = estimator(&tf, a, x);
        sum += v;
        sq += v * v;
    }
    let mean = sum / rounds as f64;
    let sd = ((sq / rounds as f64 - mean * mean) / rounds as f64).sqrt();
    let expected = tf.alpha() + tf.beta()[0] * e[0] + tf.beta()[1] * e[1];
    assert!((mean - expected).abs() < 4.0 * sd, "{mean} vs {expected} (sd {sd})");
}

#[test]
fn unbiasedness_holds_symbolically() {
    let inputs = InputDistribution::new(0.2, 0.8).unwrap();
    let tf = TradeoffFunction::new([0.7, -0.1], [0.3, 0.9], [-0.2, -0.4], inputs).unwrap();
    for e in [[0.0, 0.0], [1.0, -1.0], [0.3, 0.6], [-0.9, 0.2]] {
        let mut mean = 0.0;
        for x in 0..2 {
            for a in [1i8, -1] {
                mean += inputs.p(x) * (1.0 + a as f64 * e[x]) / 2.0 * estimator(&tf, a, x);
            }
        }
        let direct = tf.alpha() + tf.beta()[0] * e[0] + tf.beta()[1] * e[1];
        assert!((mean - direct).abs() < 1e-14);
    }
}

#[test]
fn zero_function_variance() {
    let vb = variance_bound(&zero_tf(InputDistribution::uniform()));
    assert_eq!(vb.xi_plus, 0.0);
    assert_eq!(vb.xi_minus, 0.0);
    let expected = 8.0 / (E * E) / (LN_2 * LN_2);
    assert!((vb.v - expected).abs() < 1e-12);
    assert!((vb.v - 2.253).abs() < 1e-3);
}

#[test]
fn variance_forms_differ_only_in_the_cross_term() {
    // ξ⁻ + γ̄ < 0 here, so only the derived cross term is active
    let tf = TradeoffFunction::new([0.1, 0.1], [0.3, 0.3], [-0.2, -0.1], InputDistribution::uniform()).unwrap();
    let lo = tf.xi_minus() + tf.gamma_sum();
    assert!(lo < 0.0);
    let d = variance_bound_with(&tf, VarianceForm::Derived).v;
    let p = variance_bound_with(&tf, VarianceForm::AsPrinted).v;
    let c = variance_bound_with(&tf, VarianceForm::Conservative).v;
    assert!((d - p - 2.0 * (-lo)).abs() < 1e-12);
    assert_eq!(c, d);
    assert_eq!(variance_bound(&tf).v, d);
}

#[test]
fn error_term_examples() {
    let l = 1e6f64.log2();
    let expected = 2f64.sqrt() * (l / 1e6).sqrt() + l / 3e6;
    let t = error_term(1.0, 1.0, 1_000_000, 1e-6).unwrap();
    assert!((t - expected).abs() < 1e-15);
    assert!((t - 6.32e-3).abs() < 5e-6);
    assert_eq!(error_term(1.0, 1.0, 1000, 1.0).unwrap(), 0.0);
    let n = 1u64 << 40;
    let ratio = error_term(2.0, 3.0, 4 * n, 1e-6).unwrap() / error_term(2.0, 3.0, n, 1e-6).unwrap();
    assert!((ratio - 0.5).abs() < 1e-5);
    assert!(error_term(1.0, 1.0, 0, 0.1).is_err());
    assert!(error_term(1.0, 1.0, 10, 0.0).is_err());
    assert!(error_term(-1.0, 1.0, 10, 0.1).is_err());
}

#[test]
fn surprisal_rate_examples() {
    let en = EnergyBounds::peak_only([0.1, 0.1]).unwrap();
    let flat = zero_tf(InputDistribution::uniform());
    assert!((surprisal_rate(0.5, &flat, &en, 0.01) - 0.49).abs() < 1e-15);
    let tilted = TradeoffFunction::new([0.0; 2], [0.0; 2], [-1.0, -1.0], InputDistribution::uniform()).unwrap();
    assert!((surprisal_rate(0.5, &tilted, &en, 0.01) - 0.29).abs() < 1e-15);
}

#[test]
fn min_entropy_budget_examples() {
    let s = min_entropy_budget(1_000_000, 0.2, 0.0063, 1e-6).unwrap();
    assert!((s - (1e6 * (0.2 - 0.0063) - 1e6f64.log2())).abs() < 1e-6);
    assert!((s - 1.9368e5).abs() < 1.0);
    assert!((min_entropy_budget(1000, 0.3, 0.1, 1.0).unwrap() - 200.0).abs() < 1e-9);
    assert!((min_entropy_budget(1000, 0.1, 0.1, 1.0 / 1024.0).unwrap() + 10.0).abs() < 1e-12);
    assert!(min_entropy_budget(10, 1.5, 0.1, 0.5).is_err());
}

#[test]
fn soundness_examples() {
    assert!((soundness_epsilon(1e-6, 1e-6, 1e-6, 1e-6) - 4e-6).abs() < 1e-20);
    let eps = Epsilons { t: 1e-3, m: 2e-3, ext: 3e-3, omega: 4e-3 };
    assert!((eps.conditional(1.0) - eps.total()).abs() < 1e-18);
    let extra = eps.conditional(0.5) - eps.ext;
    assert!((extra - 2.0 * (eps.t + eps.m + eps.omega)).abs() < 1e-15);
    assert!(eps.validate().is_ok());
    assert!(Epsilons { omega: 0.0, ..eps }.validate().is_ok());
    assert!(Epsilons { t: 0.0, ..eps }.validate().is_err());
    assert!(Epsilons { ext: 1.0, ..eps }.validate().is_err());
}

#[test]
fn min_spread_split_is_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let p1 = rng.random_range(0.05..0.95);
        let inputs = InputDistribution::new(p1, 1.0 - p1).unwrap();
        let cert = DualCertificate {
            alpha: rng.random_range(-1.0..1.0),
            beta: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            gamma: [-rng.random_range(0.0..1.0), -rng.random_range(0.0..1.0)],
            value: 0.0,
        };
        let spread = |tf: &TradeoffFunction| tf.xi_plus() - tf.xi_minus();
        let best = spread(&TradeoffFunction::from_certificate(&cert, inputs, AlphaSplit::MinSpread).unwrap());
        let even = spread(&TradeoffFunction::from_certificate(&cert, inputs, AlphaSplit::Even).unwrap());
        assert!(best <= even + 1e-12);
        for i in 0..=400 {
            let a1 = cert.alpha * (-2.0 + 5.0 * i as f64 / 400.0);
            let tf = TradeoffFunction::new([a1, cert.alpha - a1], cert.beta, cert.gamma, inputs).unwrap();
            assert!(best <= spread(&tf) + 1e-12);
        }
    }
}

#[test]
fn tradeoff_at_the_difference_setting_reproduces_the_bound() {
    let en = EnergyBounds::new([0.3, 0.3], [1.0, 1.0]).unwrap();
    let inputs = InputDistribution::uniform();
    let expected = Behaviour::new(0.8, -0.8).unwrap();
    let tf = make_tradeoff_function(&expected, &en, &inputs, 16).unwrap();
    let prob = EntropyProblem::new(Target::Behaviour(expected), en, inputs, 16);
    let (bound, _) = entropy_lower_bound(&prob).unwrap();
    let value = tf.value(expected.as_array(), en.avg());
    assert!(bound > 0.05);
    assert!((value - bound).abs() < 1e-6, "{value} vs {bound}");
    assert!(verify_tradeoff(&tf.certificate(), &en, &inputs, 20_000));
}

#[test]
fn classical_expectation_gives_a_zero_value() {
    let en = EnergyBounds::new([0.3, 0.3], [1.0, 1.0]).unwrap();
    let inputs = InputDistribution::uniform();
    let expected = Behaviour::new(0.4, -0.4).unwrap();
    let tf = make_tradeoff_function(&expected, &en, &inputs, 8).unwrap();
    let v = tf.value(expected.as_array(), en.avg());
    assert!(v.abs() < 1e-6, "{v} {tf:?}");
}

#[test]
fn positive_energy_coefficients_are_rejected() {
    let inputs = InputDistribution::uniform();
    assert!(TradeoffFunction::new([0.0; 2], [0.0; 2], [0.1, 0.0], inputs).is_err());
    assert!(TradeoffFunction::new([f64::NAN, 0.0], [0.0; 2], [0.0; 2], inputs).is_err());
}

#[test]
fn tradeoff_serialization_round_trips_and_rejects_unknown_keys() {
    let tf = TradeoffFunction::new([0.1, 0.2], [0.3, -0.4], [-0.5, -0.6], InputDistribution::new(0.25, 0.75).unwrap())
        .unwrap();
    let text = serde_json::to_string(&tf).unwrap();
    let back: TradeoffFunction = serde_json::from_str(&text).unwrap();
    assert_eq!(back, tf);
    let extra = text.replacen('{', "{\"delta\":1,", 1);
    assert!(serde_json::from_str::<TradeoffFunction>(&extra).is_err());
    let positive = r#"{"alpha_split":[0,0],"beta":[0,0],"gamma":[0.5,0],"inputs":[0.5,0.5]}"#;
    assert!(serde_json::from_str::<TradeoffFunction>(positive).is_err());
}

#[test]
fn single_round_moments_hold_on_random_pairs() {
    let pool = certificate_pool(20, 77);
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for (cert, en, inputs) in &pool {
        assert!(verify_tradeoff(cert, en, inputs, 5_000));
    }
    for i in 0..1000 {
        let (cert, en, inputs) = &pool[i % pool.len()];
        let tf = perturbed(cert, *inputs, &mut rng);
        let rep = random_representation_below(&mut rng, en.pk());
        let (beh, w) = behaviour_from_representation(&rep);
        let m = round_moments(&tf, beh.as_array(), w);
        let vb = variance_bound(&tf);
        assert!(m.mean <= 1e-9, "E[T] = {} at pair {i}", m.mean);
        assert!(m.second <= vb.v, "E[T²] = {} > V = {} at pair {i}", m.second, vb.v);
        assert!(m.max <= tf.xi_plus() + 1e-15);
    }
}

#[test]
fn enumerated_moments_match_sampling() {
    let pool = certificate_pool(3, 91);
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    for (cert, en, inputs) in &pool {
        let tf = TradeoffFunction::from_certificate(cert, *inputs, AlphaSplit::Even).unwrap();
        let rep = random_representation_below(&mut rng, en.pk());
        let (beh, w) = behaviour_from_representation(&rep);
        let e = beh.as_array();
        let m = round_moments(&tf, e, w);
        let energy = tf.gamma()[0] * w[0] + tf.gamma()[1] * w[1];
        let samples = 100_000;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..samples {
            let x = usize::from(!rng.random_bool(inputs.p(0)));
            let up = (1.0 + e[x]) / 2.0;
            let a: i8 = if rng.random_bool(up.clamp(0.0, 1.0)) { 1 } else { -1 };
            let cond = if a > 0 { up } else { 1.0 - up };
            let t = tf.xi(a, x) + energy + cond.log2();
            s1 += t;
            s2 += t * t;
            s4 += t.powi(4);
        }
        let n = samples as f64;
        let sd1 = ((s2 / n - (s1 / n).powi(2)) / n).sqrt();
        let sd2 = ((s4 / n - (s2 / n).powi(2)) / n).sqrt();
        assert!((s1 / n - m.mean).abs() < 5.0 * sd1 + 1e-12);
        assert!((s2 / n - m.second).abs() < 5.0 * sd2 + 1e-12);
    }
}

#[test]
fn protocol_config_validation() {
    let inputs = InputDistribution::uniform();
    let cfg = ProtocolConfig {
        n: 100_000,
        inputs,
        energies: EnergyBounds::peak_only([0.2, 0.2]).unwrap(),
        eps: Epsilons { t: 1e-6, m: 1e-6, ext: 1e-6, omega: 0.0 },
        tf: toy_tf(),
        threshold: 0.1,
        variance_form: VarianceForm::Derived,
    };
    cfg.validate().unwrap();
    assert!(cfg.passes(0.1) && !cfg.passes(0.0999));
    let budget = cfg.min_entropy_budget().unwrap();
    let t = cfg.error_term().unwrap();
    assert!((budget - (1e5 * (0.1 - t) - 1e6f64.log2())).abs() < 1e-6);
    let ext = cfg.extractor().unwrap();
    assert!(ext.sigma as f64 <= budget - 2.0 * 1e6f64.log2());
    assert!(ProtocolConfig { n: 0, ..cfg }.validate().is_err());
    assert!(ProtocolConfig { threshold: 3.0, ..cfg }.validate().is_err());
    let skewed = InputDistribution::new(0.4, 0.6).unwrap();
    assert!(ProtocolConfig { inputs: skewed, ..cfg }.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pointwise_round_value_is_below_the_top_estimator(
        a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, b1 in -1.0f64..1.0, b2 in -1.0f64..1.0,
        g1 in 0.0f64..1.0, g2 in 0.0f64..1.0, p1 in 0.05f64..0.95,
        e1 in -1.0f64..1.0, e2 in -1.0f64..1.0, w1 in 0.0f64..1.0, w2 in 0.0f64..1.0,
    ) {
        let inputs = InputDistribution::new(p1, 1.0 - p1).unwrap();
        let tf = TradeoffFunction::new([a1, a2], [b1, b2], [-g1, -g2], inputs).unwrap();
        let m = round_moments(&tf, [e1, e2], [w1, w2]);
        prop_assert!(m.max <= tf.xi_plus());
    }

    #[test]
    fn error_term_decreases_with_rounds(v in 0.0f64..10.0, xi in 0.0f64..5.0, n in 1u64..1_000_000, eps in 1e-9f64..0.5) {
        let t1 = error_term(v, xi, n, eps).unwrap();
        let t2 = error_term(v, xi, n + 1, eps).unwrap();
        prop_assert!(t2 <= t1);
        prop_assert!(t1 >= 0.0);
    }
}
