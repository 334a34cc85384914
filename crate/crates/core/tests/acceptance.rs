//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use enrand::bellmap::*;
use enrand::certify::*;
use enrand::entropy::*;
use enrand::extract::*;
use enrand::qset::*;
use enrand::sim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn beh(e1: f64, e2: f64) -> Behaviour {
    Behaviour::new(e1, e2).unwrap()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Closed form against the Gram SDP on uniform points off the boundary.
fn membership_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut points = Vec::with_capacity(10_000);
    while points.len() < 10_000 {
        let b = beh(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        let w = [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)];
        if boundary_distance(&b, w) >= 1e-6 {
            points.push((b, w));
        }
    }
    let disagreements = points
        .par_iter()
        .filter(|(b, w)| {
            in_quantum_set_closed_form(b, *w, CLOSED_FORM_TOL).unwrap() != in_quantum_set_sdp(b, *w, 1e-10).unwrap()
        })
        .count();
    let t = start.elapsed();
    check(disagreements == 0 && t < Duration::from_secs(60), format!("{disagreements} disagreements, {:.1} s", secs(t)))
}

fn difference_bound(value: f64, k: usize) -> f64 {
    let en = EnergyBounds::new([0.3, 0.3], [1.0, 1.0]).unwrap();
    let target = Target::Functional { coeffs: [0.5, -0.5], value };
    entropy_lower_bound(&EntropyProblem::new(target, en, InputDistribution::uniform(), k)).unwrap().0
}

/// Difference sweep at ω = 0.3: zero up to the classical threshold, positive
/// beyond it, nondecreasing in k.
fn difference_sweep() -> Verdict {
    let ks = [2, 4, 8, 16];
    let start = Instant::now();
    // the sweep stops short of the largest quantum difference ≈ 0.9165
    let grid: Vec<f64> = (0..50).map(|i| 0.9 * i as f64 / 49.0).collect();
    let sweep: Vec<f64> = grid.par_iter().map(|v| difference_bound(*v, 16)).collect();
    let sweep_time = start.elapsed();

    let mut probes: Vec<f64> = grid.clone();
    probes.extend([0.6, 0.62]);
    let table: Vec<Vec<f64>> =
        probes.par_iter().map(|v| ks.iter().map(|k| difference_bound(*v, *k)).collect()).collect();
    let mut worst_zero = 0.0f64;
    let mut monotone = true;
    for (v, row) in probes.iter().zip(&table) {
        if *v <= 0.6 {
            worst_zero = row.iter().fold(worst_zero, |m, h| m.max(h.abs()));
        }
        monotone &= row.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    }
    let at_062 = table[probes.len() - 1].clone();
    let ok = worst_zero <= 1e-6
        && at_062.iter().all(|h| *h > 0.0)
        && monotone
        && sweep_time < Duration::from_secs(600)
        && sweep.iter().zip(&table).all(|(a, row)| *a == row[3]);
    check(
        ok,
        format!(
            "max |H| below 0.6 = {worst_zero:.1e}, H(0.62) = {:?}, monotone = {monotone}, 50-point k=16 sweep {:.1} s",
            at_062.iter().map(|h| format!("{h:.5}")).collect::<Vec<_>>(),
            secs(sweep_time)
        ),
    )
}

/// Random behaviour strictly inside the quantum set and not classical.
fn random_nonclassical(rng: &mut ChaCha8Rng) -> (Behaviour, [f64; 2]) {
    loop {
        let w = [rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)];
        let b = beh(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if closed_form_margin(&b, w) > 1e-4 && !is_classical_tol(&b, w, EnergyMode::MaxAverage, -1e-3) {
            return (b, w);
        }
    }
}

struct Sample {
    lower32: f64,
    lower2: f64,
    min_entropy: f64,
    upper: f64,
    support: usize,
}

fn random_samples() -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<_> = (0..100).map(|_| random_nonclassical(&mut rng)).collect();
    let inputs = InputDistribution::uniform();
    points
        .par_iter()
        .map(|(b, w)| {
            let en = EnergyBounds::new(*w, *w).unwrap();
            let prob = |k| EntropyProblem::new(Target::Behaviour(*b), en, inputs, k);
            let up = decompose_upper_bound(b, &en, &inputs, 10_000).unwrap();
            Sample {
                lower32: entropy_lower_bound(&prob(32)).unwrap().0,
                lower2: entropy_lower_bound(&prob(2)).unwrap().0,
                min_entropy: min_entropy_bound(&prob(1)).unwrap().0,
                upper: up.value,
                support: up.support.len(),
            }
        })
        .collect()
}

fn sandwich(samples: &[Sample]) -> Verdict {
    let below = samples.iter().all(|s| s.lower32 <= s.upper + 1e-6);
    let gap = samples.iter().map(|s| s.upper - s.lower32).fold(0.0f64, f64::max);
    check(below && gap <= 0.05, format!("lower ≤ upper on all {}: {below}, max gap {gap:.4} bits", samples.len()))
}

fn min_entropy_dominance(samples: &[Sample]) -> Verdict {
    let excess = samples.iter().map(|s| s.min_entropy - s.lower2).fold(f64::NEG_INFINITY, f64::max);
    check(excess <= 1e-8, format!("max Hmin − H₂ = {excess:.2e} over {}", samples.len()))
}

fn ook_agreement() -> Verdict {
    let inputs = InputDistribution::uniform();
    let cases: Vec<(f64, f64)> = [0.5, 1.0].iter().flat_map(|eta| [0.05, 0.1, 0.2].map(|p| (*eta, p))).collect();
    let gaps: Vec<f64> = cases
        .par_iter()
        .map(|(eta, photons)| {
            let (b, en) = ook_behaviour((2.0 * photons).sqrt(), *eta).unwrap();
            let exact = ook_entropy_analytic(&inputs, b.e2(), en.pk()[1]).unwrap();
            let h = entropy_lower_bound(&EntropyProblem::new(Target::Behaviour(b), en, inputs, 64)).unwrap().0;
            (h - exact).abs()
        })
        .collect();
    let worst = gaps.iter().fold(0.0f64, |m, g| m.max(*g));
    check(worst <= 0.01, format!("max |H₆₄ − formula| = {worst:.2e} over {} settings", cases.len()))
}

/// Dual certificates at random targets; each is a valid trade-off function.
fn certificate_pool(count: usize, seed: u64) -> Vec<(DualCertificate, EnergyBounds, InputDistribution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let pk = [rng.random_range(0.05..0.6), rng.random_range(0.05..0.6)];
        let p1 = rng.random_range(0.2..0.8);
        let inputs = InputDistribution::new(p1, 1.0 - p1).unwrap();
        let (target, _) = behaviour_from_representation(&random_representation_below(&mut rng, pk));
        let en = EnergyBounds::peak_only(pk).unwrap();
        if let Ok((_, cert)) = entropy_lower_bound(&EntropyProblem::new(Target::Behaviour(target), en, inputs, 8)) {
            out.push((cert, en, inputs));
        }
    }
    out
}

fn single_round_moments() -> Verdict {
    let pool = certificate_pool(20, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for i in 0..1000 {
        let (cert, en, inputs) = &pool[i % pool.len()];
        // shrinking a valid function and lowering its constant keeps it valid
        let scale = rng.random_range(0.0..=1.0);
        let alpha = scale * cert.alpha - rng.random_range(0.0..0.5);
        let share = rng.random_range(-1.0..2.0);
        let tf = TradeoffFunction::new(
            [share * alpha, (1.0 - share) * alpha],
            cert.beta.map(|v| scale * v),
            cert.gamma.map(|v| scale * v),
            *inputs,
        )
        .unwrap();
        let (b, w) = behaviour_from_representation(&random_representation_below(&mut rng, en.pk()));
        let m = round_moments(&tf, b.as_array(), w);
        if m.mean > 1e-9 || m.second > variance_bound(&tf).v {
            violations += 1;
        }
    }
    check(violations == 0, format!("{violations} violations in 1000 pairs"))
}

fn bpsk_design(n: u64, eps: Epsilons) -> (DeviceModel, ProtocolDesign) {
    let (expected, energies) = bpsk_setting(0.5, 0.9, 0.01).unwrap();
    let inputs = InputDistribution::uniform();
    let prob = EntropyProblem::new(Target::Behaviour(expected), energies, inputs, 16)
        .with_average(AverageConstraint::Weighted(inputs.as_array()));
    let design = design_protocol(&prob, n, eps, 2.0, AlphaSplit::Even).unwrap();
    (DeviceModel::Bpsk { amplitude: 0.5, efficiency: 0.9, margin: 0.01 }, design)
}

fn monte_carlo() -> Verdict {
    let eps = Epsilons { t: 0.01, m: 0.01, ext: 0.01, omega: 0.0 };
    let (dev, design) = bpsk_design(10_000, eps);
    let trials = 10_000;
    let report = monte_carlo_soundness(&dev, &design.config, trials, 8).unwrap();
    let limit = 0.01 + 3.0 * (0.01f64 * 0.99 / trials as f64).sqrt();
    check(
        report.frequency <= limit,
        format!("violation frequency {:.4} ≤ {limit:.4} ({} of {trials})", report.frequency, report.violations),
    )
}

fn bell_transport() -> Verdict {
    const TOL: f64 = 1e-7;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut members, mut others, mut mismatches) = (0, 0, 0);
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
        if pm_membership_via_bell(&b, w, TOL).unwrap() != inside {
            mismatches += 1;
        }
        if inside {
            members += 1;
        } else {
            others += 1;
        }
    }
    let (mut classical, mut nonclassical) = (0, 0);
    while classical < 100 || nonclassical < 100 {
        let b = beh(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let w = [rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)];
        let side = is_classical(&b, w, EnergyMode::MaxAverage);
        if (side && classical >= 100) || (!side && nonclassical >= 100) {
            continue;
        }
        if side != bell_classical(&pm_to_bell(&b, w).unwrap(), 1e-9) {
            mismatches += 1;
        }
        if side {
            classical += 1;
        } else {
            nonclassical += 1;
        }
    }
    let chsh = chsh_values(&pm_to_bell(&beh(0.6, -0.6), [0.3, 0.3]).unwrap())[0];
    check(
        mismatches == 0 && (chsh - 2.0).abs() <= 1e-9,
        format!("{mismatches} mismatches over 400 points, boundary image CHSH = {chsh:.12}"),
    )
}

fn support_size(samples: &[Sample]) -> Verdict {
    let inputs = InputDistribution::uniform();
    let mut sizes: Vec<usize> = samples.iter().map(|s| s.support).collect();
    for photons in [0.05f64, 0.1, 0.2, 0.5] {
        let (b, en) = ook_behaviour((2.0 * photons).sqrt(), 0.5).unwrap();
        sizes.push(decompose_upper_bound(&b, &en, &inputs, 10_000).unwrap().support.len());
    }
    let en = EnergyBounds::new([0.3, 0.3], [1.0, 1.0]).unwrap();
    for e in [0.0, 0.5, 0.8, 0.9] {
        sizes.push(decompose_upper_bound(&beh(e, -e), &en, &inputs, 10_000).unwrap().support.len());
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    check(largest <= 5, format!("largest support {largest} over {} decompositions", sizes.len()))
}

fn bits_of(v: u64, len: usize) -> Vec<bool> {
    (0..len).map(|i| v >> i & 1 == 1).collect()
}

/// `T[j][i] = s[j−i]` on and below the diagonal, `s[σ−1+i−j]` above.
fn dense_product(seed: &[bool], sigma: usize, a: &[bool]) -> Vec<bool> {
    (0..sigma)
        .map(|j| {
            a.iter().enumerate().fold(false, |acc, (i, x)| {
                let t = if j >= i { seed[j - i] } else { seed[sigma - 1 + i - j] };
                acc ^ (t && *x)
            })
        })
        .collect()
}

fn extractor() -> Verdict {
    let params = |n: usize, sigma: usize| ExtractorParams { n, l: n + sigma - 1, sigma_h: 0.0, sigma, eps_ext: 0.5 };
    let p = params(8, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    for _ in 0..10 {
        let s: Vec<bool> = (0..p.l).map(|_| rng.random_bool(0.5)).collect();
        let seed = BitString::from_bits(&s);
        for a in 0..256u64 {
            let bits = bits_of(a, 8);
            let k = toeplitz_extract(&BitString::from_bits(&bits), &seed, &p).unwrap();
            if k.iter().collect::<Vec<_>>() != dense_product(&s, 3, &bits) {
                mismatches += 1;
            }
        }
    }
    let mut exact = true;
    for (n, sigma) in [(4, 1), (5, 2), (6, 3), (8, 4)] {
        let p = params(n, sigma);
        let seeds = 1u64 << p.l;
        for (a, b) in [(0u64, 1u64), (3, 12), ((1 << n) - 1, 5)] {
            let (a, b) = (BitString::from_bits(&bits_of(a, n)), BitString::from_bits(&bits_of(b, n)));
            let collisions = (0..seeds)
                .filter(|s| {
                    let seed = BitString::from_bits(&bits_of(*s, p.l));
                    toeplitz_extract(&a, &seed, &p).unwrap() == toeplitz_extract(&b, &seed, &p).unwrap()
                })
                .count() as u64;
            exact &= collisions << sigma == seeds;
        }
    }
    check(
        mismatches == 0 && exact,
        format!("{mismatches} mismatches over 2560 products, collision rate exactly 2^-σ: {exact}"),
    )
}

fn end_to_end() -> Verdict {
    let start = Instant::now();
    let eps = Epsilons { t: 1e-6, m: 1e-6, ext: 1e-6, omega: 0.0 };
    let (dev, design) = bpsk_design(100_000, eps);
    let runs: Vec<ProtocolTranscript> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut t = run_protocol(&dev, &design.config, seed).unwrap();
            // rounds are not needed past the decision
            t.inputs = Vec::new();
            t.outputs = Vec::new();
            t.energies = Vec::new();
            t
        })
        .collect();
    let elapsed = start.elapsed();
    let passed = runs.iter().filter(|t| t.decision == Decision::Pass).count();
    let t = design.config.error_term().unwrap();
    let worst = runs.iter().map(|r| (r.test_value - design.expected_value).abs()).fold(0.0f64, f64::max);
    check(
        passed >= 95 && worst <= t && elapsed < Duration::from_secs(300),
        format!(
            "{passed}/100 passed, max |rate − TF value| = {worst:.4} ≤ t = {t:.4}, TF value {:.4}, {:.1} s",
            design.expected_value,
            secs(elapsed)
        ),
    )
}

fn main() -> ExitCode {
    let samples = random_samples();
    let criteria: [(&str, Box<dyn Fn() -> Verdict + '_>); 11] = [
        ("quantum-set oracle equivalence", Box::new(membership_equivalence)),
        ("difference sweep at ω = 0.3", Box::new(difference_sweep)),
        ("duality sandwich", Box::new(|| sandwich(&samples))),
        ("min-entropy dominance", Box::new(|| min_entropy_dominance(&samples))),
        ("OOK closed form", Box::new(ook_agreement)),
        ("single-round moments", Box::new(single_round_moments)),
        ("Monte Carlo soundness", Box::new(monte_carlo)),
        ("Bell transport", Box::new(bell_transport)),
        ("decomposition support", Box::new(|| support_size(&samples))),
        ("extractor", Box::new(extractor)),
        ("BPSK end to end", Box::new(end_to_end)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
