use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use enrand::bellmap::*;
use enrand::qset::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-7;

fn bell(c: [f64; 4]) -> BellBehaviour {
    BellBehaviour::new(c).unwrap()
}

fn beh(e1: f64, e2: f64) -> Behaviour {
    Behaviour::new(e1, e2).unwrap()
}

/// Landau's arcsine criterion for 2×2 correlators, an analytic oracle that
/// shares nothing with the SDP route.
fn landau_margin(c: [f64; 4]) -> f64 {
    let s: Vec<f64> = c.iter().map(|v| v.asin()).collect();
    let total: f64 = s.iter().sum();
    (0..4).map(|odd| PI - (total - 2.0 * s[odd]).abs()).fold(f64::INFINITY, f64::min)
}

#[test]
fn mapping_examples() {
    assert_eq!(pm_to_bell(&beh(0.0, 0.0), [0.5, 0.5]).unwrap().correlators(), [0.0; 4]);
    assert_eq!(pm_to_bell(&beh(1.0, 1.0), [1.0, 1.0]).unwrap().correlators(), [1.0; 4]);
    let img = pm_to_bell(&beh(0.6, -0.6), [0.3, 0.3]).unwrap().correlators();
    let expected = [0.6, -0.4, -0.6, -0.4];
    for (a, b) in img.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(pm_to_bell(&beh(0.0, 0.0), [1.5, 0.0]).is_err());
    assert!(BellBehaviour::new([1.1, 0.0, 0.0, 0.0]).is_err());
}

#[test]
fn chsh_examples() {
    let img = pm_to_bell(&beh(0.6, -0.6), [0.3, 0.3]).unwrap();
    let [plus, minus] = chsh_values(&img);
    assert!((plus - 2.0).abs() < 1e-9);
    assert!((minus - (-0.4)).abs() < 1e-12);
    assert_eq!(chsh_values(&bell([0.0; 4])), [0.0, 0.0]);
    let h = FRAC_1_SQRT_2;
    let tsirelson = bell([h, -h, -h, -h]);
    assert!((chsh_values(&tsirelson)[0] - 2.0 * SQRT_2).abs() < 1e-12);
}

#[test]
fn tsirelson_and_pr_box() {
    let h = FRAC_1_SQRT_2;
    // maximal violation of the combination used here
    assert!(bell_quantum_membership(&bell([h, -h, -h, -h]), TOL).unwrap());
    // the textbook point, maximal for ⟨A₁B₁⟩ + ⟨A₁B₂⟩ + ⟨A₂B₁⟩ − ⟨A₂B₂⟩
    assert!(bell_quantum_membership(&bell([h, h, h, -h]), TOL).unwrap());
    assert!(!bell_quantum_membership(&bell([1.0, 1.0, 1.0, -1.0]), TOL).unwrap());
    assert!(!bell_quantum_membership(&bell([1.0, -1.0, -1.0, -1.0]), TOL).unwrap());
    assert!(bell_quantum_membership(&bell([1.0, 1.0, 1.0, 1.0]), TOL).unwrap());
}

#[test]
fn sdp_agrees_with_arcsine_criterion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 200 {
        let c = [0; 4].map(|_| rng.random_range(-1.0..1.0));
        let margin = landau_margin(c);
        if margin.abs() < 1e-4 {
            continue;
        }
        assert_eq!(bell_quantum_membership(&bell(c), TOL).unwrap(), margin > 0.0, "{c:?}");
        checked += 1;
    }
}

#[test]
fn saturated_image_of_a_member_need_not_be_bell_quantum() {
    // the first state is the vacuum, the second is close to it
    let b = beh(0.9, 0.9);
    let w = [0.0, 0.9];
    assert!(in_quantum_set_closed_form(&b, w, CLOSED_FORM_TOL).unwrap());
    assert!(!bell_quantum_membership(&pm_to_bell(&b, w).unwrap(), TOL).unwrap());
    assert!(pm_membership_via_bell(&b, w, TOL).unwrap());
}

#[test]
fn membership_transports_in_both_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut members, mut others) = (0, 0);
    while members < 100 || others < 100 {
        let b = beh(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let w = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        if boundary_distance(&b, w) < 1e-4 {
            continue;
        }
        let inside = in_quantum_set_closed_form(&b, w, CLOSED_FORM_TOL).unwrap();
        if (inside && members >= 100) || (!inside && others >= 100) {
            continue;
        }
        assert_eq!(pm_membership_via_bell(&b, w, TOL).unwrap(), inside, "{b:?} {w:?}");
        // a Bell-quantum saturated image always certifies membership
        if bell_quantum_membership(&pm_to_bell(&b, w).unwrap(), TOL).unwrap() {
            assert!(inside);
        }
        if inside {
            members += 1;
        } else {
            others += 1;
        }
    }
}

#[test]
fn classicality_transports() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..1000 {
        let b = beh(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let w = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let img = pm_to_bell(&b, w).unwrap();
        assert_eq!(is_classical(&b, w, EnergyMode::MaxAverage), bell_classical(&img, 1e-9), "{b:?} {w:?}");
    }
}

#[test]
fn serde_validates_range() {
    let bb: BellBehaviour = serde_json::from_str("[0.1, -0.2, 0.3, 1.0]").unwrap();
    assert_eq!(bb.get(1, 0), 0.3);
    assert!(serde_json::from_str::<BellBehaviour>("[0.1, -0.2, 0.3, 1.5]").is_err());
}
