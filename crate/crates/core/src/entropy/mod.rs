//! Worst-case output entropy of an energy-bounded device, given its
//! observed correlators.
//!
//! The adversary may prepare any mixture of quantum behaviours that averages
//! to the observed one while meeting the energy bounds. Lower bounds come from
//! dual SDP certificates ([`entropy_lower_bound`], [`min_entropy_bound`]),
//! upper bounds from explicit decompositions ([`decompose_upper_bound`]).

mod dual;
mod lp;
mod primal;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qset::{self, Behaviour, EnergyBounds};

pub use dual::{entropy_lower_bound, min_entropy_bound};
pub use primal::{decompose_upper_bound, decompose_upper_bound_with, Decomposition, SupportPoint};

/// Probabilities of the two inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct InputDistribution {
    p: [f64; 2],
}

impl InputDistribution {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        if !(p1 > 0.0 && p2 > 0.0 && p1.is_finite() && p2.is_finite()) {
            return Err(Error::Domain(format!("input probabilities ({p1}, {p2}) must be positive")));
        }
        if (p1 + p2 - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("input probabilities ({p1}, {p2}) do not sum to 1")));
        }
        let s = p1 + p2;
        Ok(Self { p: [p1 / s, p2 / s] })
    }

    pub fn uniform() -> Self {
        Self { p: [0.5, 0.5] }
    }

    pub fn p(&self, x: usize) -> f64 {
        self.p[x]
    }

    pub fn as_array(&self) -> [f64; 2] {
        self.p
    }
}

impl TryFrom<[f64; 2]> for InputDistribution {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        InputDistribution::new(v[0], v[1])
    }
}

impl From<InputDistribution> for [f64; 2] {
    fn from(d: InputDistribution) -> Self {
        d.p
    }
}

/// What the observed statistics pin down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Target {
    /// Both correlators.
    Behaviour(Behaviour),
    /// Only `coeffs · E = value`.
    Functional { coeffs: [f64; 2], value: f64 },
}

/// Form of the max-average energy assumption.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageConstraint {
    /// `Σ_λ p(λ) ω^λ_x ≤ ω_avg,x` for each input.
    #[default]
    PerInput,
    /// `Σ_x w_x Σ_λ p(λ) ω^λ_x ≤ Σ_x w_x ω_avg,x`, e.g. averaged over inputs
    /// with `w = p(x)`.
    Weighted([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyProblem {
    pub target: Target,
    pub energies: EnergyBounds,
    pub inputs: InputDistribution,
    /// Number of chords approximating the binary entropy.
    pub segments: usize,
    #[serde(default)]
    pub average: AverageConstraint,
}

impl EntropyProblem {
    pub fn new(target: Target, energies: EnergyBounds, inputs: InputDistribution, segments: usize) -> Self {
        Self { target, energies, inputs, segments, average: AverageConstraint::PerInput }
    }

    pub fn with_average(mut self, average: AverageConstraint) -> Self {
        self.average = average;
        self
    }
}

/// Affine lower bound `α + β·E + γ·ω` on the entropy over the peak-energy
/// quantum set; `value` is its worth at the problem's target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualCertificate {
    pub alpha: f64,
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
    pub value: f64,
}

impl DualCertificate {
    pub fn zero() -> Self {
        Self { alpha: 0.0, beta: [0.0; 2], gamma: [0.0; 2], value: 0.0 }
    }

    /// `α + β·E + γ·ω`.
    pub fn evaluate(&self, e: [f64; 2], w: [f64; 2]) -> f64 {
        self.alpha + self.beta[0] * e[0] + self.beta[1] * e[1] + self.gamma[0] * w[0] + self.gamma[1] * w[1]
    }
}

/// `h(E) = −Σ_{a=±1} (1+aE)/2 · log₂((1+aE)/2)` in bits.
pub fn binary_entropy(e: f64) -> f64 {
    let e = e.clamp(-1.0, 1.0);
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term((1.0 + e) / 2.0) + term((1.0 - e) / 2.0)
}

/// Binary entropy of a probability `q`.
pub fn binary_entropy_prob(q: f64) -> f64 {
    binary_entropy(2.0 * q - 1.0)
}

/// `H(A|X) = Σ_x p(x) h(E_x)` for a single behaviour.
pub fn conditional_entropy(e: [f64; 2], inputs: &InputDistribution) -> f64 {
    inputs.p(0) * binary_entropy(e[0]) + inputs.p(1) * binary_entropy(e[1])
}

/// Average probability of guessing the output knowing the input.
pub fn guessing_probability(e: [f64; 2], inputs: &InputDistribution) -> f64 {
    inputs.p(0) * (1.0 + e[0].abs()) / 2.0 + inputs.p(1) * (1.0 + e[1].abs()) / 2.0
}

/// Chords of the binary entropy through `k + 1` equally spaced nodes on
/// `[−1, 1]`, stored as `(slope, intercept)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChordFamily {
    lines: Vec<(f64, f64)>,
}

impl ChordFamily {
    pub fn lines(&self) -> &[(f64, f64)] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// `min_i (c_i E + d_i)`, the piecewise-linear interpolant of `h`.
    pub fn lower_envelope(&self, e: f64) -> f64 {
        self.lines.iter().map(|(c, d)| c * e + d).fold(f64::INFINITY, f64::min)
    }

    /// `Σ_x p(x) min_i (c_i E_x + d_i)`.
    pub fn conditional_bound(&self, e: [f64; 2], inputs: &InputDistribution) -> f64 {
        inputs.p(0) * self.lower_envelope(e[0]) + inputs.p(1) * self.lower_envelope(e[1])
    }
}

pub fn chords(k: usize) -> Result<ChordFamily> {
    if k == 0 {
        return Err(Error::Domain("chord count must be at least 1".into()));
    }
    let node = |j: usize| -1.0 + 2.0 * j as f64 / k as f64;
    let lines = (1..=k)
        .map(|j| {
            let (a, b) = (node(j - 1), node(j));
            let (ha, hb) = (binary_entropy(a), binary_entropy(b));
            let slope = (hb - ha) / (b - a);
            (slope, ha - slope * a)
        })
        .collect();
    Ok(ChordFamily { lines })
}

/// Printed closed form for on-off keying:
/// `p_X(1) · (1 + E₂)/(2ω_pk,2) · h(ω_pk,2)` with `h` the binary entropy of a
/// probability.
///
/// The decomposition behind it puts all randomness on input 2, which suggests
/// `p_X(2)` as the prefactor; [`ook_entropy_decomposition`] uses that. Both
/// agree for uniform inputs.
pub fn ook_entropy_analytic(inputs: &InputDistribution, e2: f64, wpk2: f64) -> Result<f64> {
    ook_check(e2, wpk2)?;
    Ok(inputs.p(0) * (1.0 + e2) / (2.0 * wpk2) * binary_entropy_prob(wpk2))
}

/// On-off keying entropy from the unique extremal decomposition of `E₂`
/// into `−1` and `−1 + 2ω_pk,2`.
pub fn ook_entropy_decomposition(inputs: &InputDistribution, e2: f64, wpk2: f64) -> Result<f64> {
    ook_check(e2, wpk2)?;
    Ok(inputs.p(1) * (1.0 + e2) / (2.0 * wpk2) * binary_entropy_prob(wpk2))
}

fn ook_check(e2: f64, wpk2: f64) -> Result<()> {
    if !(wpk2 > 0.0 && wpk2 <= 1.0) {
        return Err(Error::Domain(format!("peak energy {wpk2} outside (0, 1]")));
    }
    if !(-1.0..=-1.0 + 2.0 * wpk2 + 1e-12).contains(&e2) {
        return Err(Error::Domain(format!("E2 = {e2} outside [-1, {}]", -1.0 + 2.0 * wpk2)));
    }
    Ok(())
}

const VERIFY_SLACK: f64 = 1e-9;
const VERIFY_SEED: u64 = 0x7ce2_61f0_9b3d_4a15;

/// Samples members of the peak-energy quantum set and checks the certificate
/// against the chord envelope `Σ_x p(x) min_i(c_i E_x + d_i)` (itself below
/// the entropy) with slack 1e-9.
pub fn verify_certificate(
    cert: &DualCertificate,
    chords: &ChordFamily,
    energies: &EnergyBounds,
    inputs: &InputDistribution,
    samples: usize,
) -> bool {
    max_violation_sampled(cert, energies.pk(), samples, |e| chords.conditional_bound(e, inputs)) <= VERIFY_SLACK
}

/// As [`verify_certificate`] but against the exact conditional entropy.
pub fn verify_tradeoff(
    cert: &DualCertificate,
    energies: &EnergyBounds,
    inputs: &InputDistribution,
    samples: usize,
) -> bool {
    max_violation_sampled(cert, energies.pk(), samples, |e| conditional_entropy(e, inputs)) <= VERIFY_SLACK
}

/// Largest `cert(E, ω) − bound(E)` over sampled members of `Q_pk`.
pub fn max_violation_sampled(
    cert: &DualCertificate,
    pk: [f64; 2],
    samples: usize,
    bound: impl Fn([f64; 2]) -> f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    let mut worst = f64::NEG_INFINITY;
    let mut check = |e: [f64; 2], w: [f64; 2]| {
        let v = cert.evaluate(e, w) - bound(e);
        if v > worst {
            worst = v;
        }
    };
    for i in 0..samples {
        match i % 3 {
            0 => {
                let r = qset::random_representation_below(&mut rng, pk);
                let (b, w) = qset::behaviour_from_representation(&r);
                check(b.as_array(), w);
            }
            1 => {
                let (e, w) = random_boundary_member(&mut rng, pk);
                check(e, w);
            }
            _ => {
                // unconstrained realization, kept only if within the peak bound
                for _ in 0..64 {
                    let r = qset::random_representation(&mut rng);
                    let (b, w) = qset::behaviour_from_representation(&r);
                    if w[0] <= pk[0] && w[1] <= pk[1] {
                        check(b.as_array(), w);
                        break;
                    }
                }
            }
        }
    }
    worst
}

/// A point on the curved boundary of `Q(ω)` with `ω` uniform below `pk`
/// (half the time on the peak face).
fn random_boundary_member<R: Rng + ?Sized>(rng: &mut R, pk: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let on_face = rng.random_bool(0.5);
    let w = if on_face { pk } else { [pk[0] * rng.random::<f64>(), pk[1] * rng.random::<f64>()] };
    let half = |v: f64| v.clamp(0.0, 1.0).sqrt().asin();
    let spread = (2.0 * (half(w[0]) + half(w[1]))).min(std::f64::consts::PI);
    let h = std::f64::consts::FRAC_PI_2;
    let t1: f64 = rng.random_range(-h..=h);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let t2 = (t1 + sign * spread).clamp(-h, h);
    ([t1.sin(), t2.sin()], w)
}

/// Closed-form feasibility of the primal problem: does some decomposition
/// reproduce the target within the energy bounds?
pub(crate) fn target_is_reachable(prob: &EntropyProblem) -> Result<()> {
    let avg = prob.energies.avg();
    let pk = prob.energies.pk();
    match (prob.target, prob.average) {
        (Target::Behaviour(b), AverageConstraint::PerInput) => {
            if !qset::in_quantum_set_closed_form(&b, avg, qset::CLOSED_FORM_TOL)? {
                return Err(Error::InfeasibleBehaviour(format!(
                    "E = {:?} is outside the quantum set at average energies {avg:?}",
                    b.as_array()
                )));
            }
        }
        (Target::Behaviour(b), AverageConstraint::Weighted(wt)) => {
            let budget = wt[0] * avg[0] + wt[1] * avg[1];
            if best_margin_on_budget(&b, wt, budget, pk) < -qset::CLOSED_FORM_TOL {
                return Err(Error::InfeasibleBehaviour(format!(
                    "E = {:?} needs more than the weighted energy budget {budget}",
                    b.as_array()
                )));
            }
        }
        (Target::Functional { coeffs, value }, AverageConstraint::PerInput) => {
            let (lo, hi) = functional_range(coeffs, avg);
            if value < lo - qset::CLOSED_FORM_TOL || value > hi + qset::CLOSED_FORM_TOL {
                return Err(Error::InfeasibleBehaviour(format!(
                    "no quantum behaviour at energies {avg:?} has {coeffs:?}·E = {value} (range [{lo}, {hi}])"
                )));
            }
        }
        // left to the solver's unboundedness detection
        (Target::Functional { .. }, AverageConstraint::Weighted(_)) => {}
    }
    Ok(())
}

/// Best closed-form margin over energies `0 ≤ ω ≤ pk` spending `wt·ω ≤ budget`.
fn best_margin_on_budget(b: &Behaviour, wt: [f64; 2], budget: f64, pk: [f64; 2]) -> f64 {
    if wt[0] * pk[0] + wt[1] * pk[1] <= budget {
        return qset::closed_form_margin(b, pk);
    }
    let energies_at = |w1: f64| -> [f64; 2] {
        let w2 = if wt[1] > 0.0 { ((budget - wt[0] * w1) / wt[1]).clamp(0.0, pk[1]) } else { pk[1] };
        [w1, w2]
    };
    let hi = if wt[0] > 0.0 { (budget / wt[0]).min(pk[0]) } else { pk[0] };
    let margin = |w1: f64| {
        let m = qset::closed_form_margin(b, energies_at(w1));
        if m.is_infinite() {
            f64::MAX
        } else {
            m
        }
    };
    maximize_1d(margin, 0.0, hi.max(0.0), 2000)
}

/// Range of `c·E` over `Q(ω)`.
pub(crate) fn functional_range(c: [f64; 2], w: [f64; 2]) -> (f64, f64) {
    (-max_functional([-c[0], -c[1]], w), max_functional(c, w))
}

fn max_functional(c: [f64; 2], w: [f64; 2]) -> f64 {
    let h = std::f64::consts::FRAC_PI_2;
    let half = |v: f64| v.clamp(0.0, 1.0).sqrt().asin();
    let spread = if w[0] + w[1] >= 1.0 { std::f64::consts::PI } else { 2.0 * (half(w[0]) + half(w[1])) };
    // sin is increasing on [−π/2, π/2], so the best θ₂ sits at an end of its window
    let f = |t1: f64| {
        let t2 = if c[1] >= 0.0 { (t1 + spread).min(h) } else { (t1 - spread).max(-h) };
        c[0] * t1.sin() + c[1] * t2.sin()
    };
    maximize_1d(f, -h, h, 4000)
}

/// Grid search followed by golden-section refinement around the best node.
pub(crate) fn maximize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    if hi <= lo {
        return f(lo);
    }
    let step = (hi - lo) / n as f64;
    let mut best = (lo, f(lo));
    for i in 1..=n {
        let t = lo + step * i as f64;
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.1.max(f(0.5 * (a + b)))
}
