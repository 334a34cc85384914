//! Trade-off functions and the finite-statistics accounting of the protocol.
//!
//! All logarithms are base 2.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::entropy::{self, DualCertificate, EntropyProblem, InputDistribution, Target};
use crate::error::{Error, Result};
use crate::extract::{self, ExtractorParams};
use crate::qset::{Behaviour, EnergyBounds};

/// Number of outcomes.
const OUTCOMES: f64 = 2.0;

/// How the constant `α` is shared between the two inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSplit {
    /// `α_x = α/2`.
    #[default]
    Even,
    /// `α_x = p(x)·α`, which lines up the estimator ranges of the two inputs
    /// and so minimizes `ξ⁺ − ξ⁻`.
    MinSpread,
}

/// Affine lower bound `Σ_x α_x + β·E + γ·ω ≤ H(E)` on the peak-energy set,
/// with `γ ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTradeoff", into = "RawTradeoff")]
pub struct TradeoffFunction {
    alpha_split: [f64; 2],
    beta: [f64; 2],
    gamma: [f64; 2],
    inputs: InputDistribution,
    xi: [[f64; 2]; 2],
    xi_plus: f64,
    xi_minus: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTradeoff {
    alpha_split: [f64; 2],
    beta: [f64; 2],
    gamma: [f64; 2],
    inputs: InputDistribution,
}

impl TryFrom<RawTradeoff> for TradeoffFunction {
    type Error = Error;

    fn try_from(r: RawTradeoff) -> Result<Self> {
        Self::new(r.alpha_split, r.beta, r.gamma, r.inputs)
    }
}

impl From<TradeoffFunction> for RawTradeoff {
    fn from(t: TradeoffFunction) -> Self {
        Self { alpha_split: t.alpha_split, beta: t.beta, gamma: t.gamma, inputs: t.inputs }
    }
}

impl TradeoffFunction {
    pub fn new(alpha_split: [f64; 2], beta: [f64; 2], gamma: [f64; 2], inputs: InputDistribution) -> Result<Self> {
        let finite = alpha_split.iter().chain(&beta).chain(&gamma).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("trade-off coefficients must be finite".into()));
        }
        if gamma.iter().any(|g| *g > 0.0) {
            return Err(Error::Domain(format!("energy coefficients {gamma:?} must be non-positive")));
        }
        let mut xi = [[0.0; 2]; 2];
        for (x, row) in xi.iter_mut().enumerate() {
            // row[0] for a = +1, row[1] for a = −1
            row[0] = (alpha_split[x] + beta[x]) / inputs.p(x);
            row[1] = (alpha_split[x] - beta[x]) / inputs.p(x);
        }
        let all = xi.iter().flatten();
        let xi_plus = all.clone().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let xi_minus = all.fold(f64::INFINITY, |m, v| m.min(*v));
        Ok(Self { alpha_split, beta, gamma, inputs, xi, xi_plus, xi_minus })
    }

    /// Splits the constant of a dual certificate.
    pub fn from_certificate(cert: &DualCertificate, inputs: InputDistribution, split: AlphaSplit) -> Result<Self> {
        let alpha_split = match split {
            AlphaSplit::Even => [cert.alpha / 2.0, cert.alpha / 2.0],
            AlphaSplit::MinSpread => [inputs.p(0) * cert.alpha, inputs.p(1) * cert.alpha],
        };
        Self::new(alpha_split, cert.beta, cert.gamma, inputs)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_split[0] + self.alpha_split[1]
    }

    pub fn alpha_split(&self) -> [f64; 2] {
        self.alpha_split
    }

    pub fn beta(&self) -> [f64; 2] {
        self.beta
    }

    pub fn gamma(&self) -> [f64; 2] {
        self.gamma
    }

    pub fn inputs(&self) -> InputDistribution {
        self.inputs
    }

    /// `γ₁ + γ₂`.
    pub fn gamma_sum(&self) -> f64 {
        self.gamma[0] + self.gamma[1]
    }

    pub fn xi_plus(&self) -> f64 {
        self.xi_plus
    }

    pub fn xi_minus(&self) -> f64 {
        self.xi_minus
    }

    /// `α + β·E + γ·ω`.
    pub fn value(&self, e: [f64; 2], w: [f64; 2]) -> f64 {
        self.alpha() + self.beta[0] * e[0] + self.beta[1] * e[1] + self.gamma[0] * w[0] + self.gamma[1] * w[1]
    }

    /// The coefficients as a dual certificate, with `value` left at zero.
    pub fn certificate(&self) -> DualCertificate {
        DualCertificate { alpha: self.alpha(), beta: self.beta, gamma: self.gamma, value: 0.0 }
    }

    /// Estimator value for output `a = ±1` on input index `x ∈ {0, 1}`.
    pub fn xi(&self, a: i8, x: usize) -> f64 {
        self.xi[x][if a > 0 { 0 } else { 1 }]
    }
}

/// Runs the entropy dual at the expected behaviour (per-input average
/// energies) and turns the certificate into a trade-off function.
pub fn make_tradeoff_function(
    expected: &Behaviour,
    energies: &EnergyBounds,
    inputs: &InputDistribution,
    k: usize,
) -> Result<TradeoffFunction> {
    let prob = EntropyProblem::new(Target::Behaviour(*expected), *energies, *inputs, k);
    Ok(make_tradeoff_function_for(&prob, AlphaSplit::Even)?.0)
}

/// General form: any entropy problem, any split. Also returns the certified
/// value at the target.
pub fn make_tradeoff_function_for(prob: &EntropyProblem, split: AlphaSplit) -> Result<(TradeoffFunction, f64)> {
    let (value, cert) = entropy::entropy_lower_bound(prob)?;
    Ok((TradeoffFunction::from_certificate(&cert, prob.inputs, split)?, value))
}

/// Energy term `γ·ω_avg` of the protocol test. With a weighted average
/// constraint the trade-off's `γ` is already proportional to the weights.
pub fn energy_term(tf: &TradeoffFunction, energies: &EnergyBounds) -> f64 {
    let w = energies.avg();
    tf.gamma[0] * w[0] + tf.gamma[1] * w[1]
}

/// `ξ(a, x) = (α_x + aβ_x)/p(x)` for `x ∈ {0, 1}`.
pub fn estimator(tf: &TradeoffFunction, a: i8, x: usize) -> f64 {
    tf.xi(a, x)
}

/// Sign of the cross term in the variance bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceForm {
    /// `2·max{−log|A|·(ξ⁻ + γ̄), 0}`, the form that follows from expanding
    /// `E[T'²]`.
    #[default]
    Derived,
    /// `2·max{log|A|·(ξ⁻ + γ̄), 0}`, with the sign flipped inside the maximum.
    AsPrinted,
    /// The larger of the two.
    Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceBound {
    pub v: f64,
    pub xi_plus: f64,
    pub xi_minus: f64,
}

pub fn variance_bound(tf: &TradeoffFunction) -> VarianceBound {
    variance_bound_with(tf, VarianceForm::Derived)
}

pub fn variance_bound_with(tf: &TradeoffFunction, form: VarianceForm) -> VarianceBound {
    let g = tf.gamma_sum();
    let (hi, lo) = (tf.xi_plus, tf.xi_minus);
    let square = (hi + g).powi(2).max((lo + g).powi(2));
    let log_a = OUTCOMES.log2();
    let derived = 2.0 * (-log_a * (lo + g)).max(0.0);
    let printed = 2.0 * (log_a * (lo + g)).max(0.0);
    let cross = match form {
        VarianceForm::Derived => derived,
        VarianceForm::AsPrinted => printed,
        VarianceForm::Conservative => derived.max(printed),
    };
    let surprisal = 4.0 * OUTCOMES / (E * E) * std::f64::consts::LOG2_E.powi(2);
    VarianceBound { v: square + cross + surprisal, xi_plus: hi, xi_minus: lo }
}

/// `t = √(2V)·√(log(1/ε_t)/n) + (ξ⁺/3)·log(1/ε_t)/n`.
pub fn error_term(v: f64, xi_plus: f64, n: u64, eps_t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("round count must be positive".into()));
    }
    if !(eps_t > 0.0 && eps_t <= 1.0) {
        return Err(Error::Domain(format!("eps_t = {eps_t} outside (0, 1]")));
    }
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("variance bound {v} must be non-negative")));
    }
    let l = (1.0 / eps_t).log2() / n as f64;
    Ok((2.0 * v).sqrt() * l.sqrt() + xi_plus / 3.0 * l)
}

/// Certified surprisal per round: `⟨ξ⟩ + γ·ω_avg − t`.
pub fn surprisal_rate(mean_xi: f64, tf: &TradeoffFunction, energies: &EnergyBounds, t: f64) -> f64 {
    mean_xi + energy_term(tf, energies) - t
}

/// `σ_h = n(r − t) − log(1/ε_m)`; non-positive means nothing is extractable.
pub fn min_entropy_budget(n: u64, r: f64, t: f64, eps_m: f64) -> Result<f64> {
    if r - t > 1.0 {
        return Err(Error::Domain(format!("threshold minus error term {} exceeds one bit", r - t)));
    }
    if !(eps_m > 0.0 && eps_m <= 1.0) {
        return Err(Error::Domain(format!("eps_m = {eps_m} outside (0, 1]")));
    }
    Ok(n as f64 * (r - t) - (1.0 / eps_m).log2())
}

/// Security parameters of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Epsilons {
    pub t: f64,
    pub m: f64,
    pub ext: f64,
    /// Probability that the average-energy assumption fails. An assumption,
    /// not something estimated from data; zero is allowed.
    pub omega: f64,
}

impl Epsilons {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_t", self.t), ("eps_m", self.m), ("eps_ext", self.ext)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!("{name} = {v} outside (0, 1)")));
            }
        }
        if !(self.omega >= 0.0 && self.omega < 1.0) {
            return Err(Error::Domain(format!("eps_omega = {} outside [0, 1)", self.omega)));
        }
        Ok(())
    }

    /// `ε_t + ε_m + ε_Ext + ε_ω`.
    pub fn total(&self) -> f64 {
        soundness_epsilon(self.t, self.m, self.ext, self.omega)
    }

    /// `ε_Ext + (ε_ω + ε_t + ε_m)/κ` for pass probability `κ`.
    pub fn conditional(&self, kappa: f64) -> f64 {
        conditional_soundness(self.t, self.m, self.ext, self.omega, kappa)
    }
}

pub fn soundness_epsilon(eps_t: f64, eps_m: f64, eps_ext: f64, eps_omega: f64) -> f64 {
    eps_t + eps_m + eps_ext + eps_omega
}

pub fn conditional_soundness(eps_t: f64, eps_m: f64, eps_ext: f64, eps_omega: f64, kappa: f64) -> f64 {
    eps_ext + (eps_omega + eps_t + eps_m) / kappa
}

/// Arguments of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n: u64,
    pub inputs: InputDistribution,
    pub energies: EnergyBounds,
    pub eps: Epsilons,
    pub tf: TradeoffFunction,
    /// Test threshold `r` on `⟨ξ⟩ + γ·ω_avg`.
    pub threshold: f64,
    #[serde(default)]
    pub variance_form: VarianceForm,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("round count must be positive".into()));
        }
        self.eps.validate()?;
        if self.tf.inputs() != self.inputs {
            return Err(Error::Config("trade-off function was built for another input distribution".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        let t = self.error_term()?;
        if self.threshold - t > 1.0 {
            return Err(Error::Config(format!("r − t = {} exceeds one bit", self.threshold - t)));
        }
        Ok(())
    }

    pub fn variance(&self) -> VarianceBound {
        variance_bound_with(&self.tf, self.variance_form)
    }

    pub fn error_term(&self) -> Result<f64> {
        let v = self.variance();
        error_term(v.v, v.xi_plus, self.n, self.eps.t)
    }

    pub fn min_entropy_budget(&self) -> Result<f64> {
        min_entropy_budget(self.n, self.threshold, self.error_term()?, self.eps.m)
    }

    pub fn extractor(&self) -> Result<ExtractorParams> {
        extract::plan(self.n as usize, self.min_entropy_budget()?.max(0.0), self.eps.ext)
    }

    /// Test statistic `⟨ξ⟩ + γ·ω_avg`.
    pub fn test_value(&self, mean_xi: f64) -> f64 {
        mean_xi + energy_term(&self.tf, &self.energies)
    }

    pub fn passes(&self, mean_xi: f64) -> bool {
        self.test_value(mean_xi) >= self.threshold
    }
}

/// Threshold `k` error terms below the trade-off value at an expected
/// behaviour.
pub fn threshold_below(tf: &TradeoffFunction, expected: &Behaviour, energies: &EnergyBounds, t: f64, k: f64) -> f64 {
    tf.alpha() + tf.beta[0] * expected.e1() + tf.beta[1] * expected.e2() + energy_term(tf, energies) - k * t
}

/// Exact single-round moments of `T = ξ(A,X) + γ·ω + log p(A|X)` for a
/// behaviour `(E, ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMoments {
    pub mean: f64,
    pub second: f64,
    /// Largest value of `T` with positive probability.
    pub max: f64,
}

pub fn round_moments(tf: &TradeoffFunction, e: [f64; 2], w: [f64; 2]) -> RoundMoments {
    let energy = tf.gamma[0] * w[0] + tf.gamma[1] * w[1];
    let mut m = RoundMoments { mean: 0.0, second: 0.0, max: f64::NEG_INFINITY };
    for x in 0..2 {
        for a in [1i8, -1] {
            let cond = (1.0 + a as f64 * e[x]) / 2.0;
            if cond <= 0.0 {
                continue;
            }
            let t = tf.xi(a, x) + energy + cond.log2();
            let p = tf.inputs.p(x) * cond;
            m.mean += p * t;
            m.second += p * t * t;
            m.max = m.max.max(t);
        }
    }
    m
}

/// A protocol configuration built around an expected behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolDesign {
    pub config: ProtocolConfig,
    /// `α + β·E + γ·ω_avg` at the expected behaviour.
    pub expected_value: f64,
}

/// Builds the trade-off function at the problem's target behaviour and sets
/// the threshold `margin_terms` error terms below its expected value.
pub fn design_protocol(
    prob: &EntropyProblem,
    n: u64,
    eps: Epsilons,
    margin_terms: f64,
    split: AlphaSplit,
) -> Result<ProtocolDesign> {
    let Target::Behaviour(expected) = prob.target else {
        return Err(Error::Config("a protocol is designed around a full expected behaviour".into()));
    };
    let (tf, _) = make_tradeoff_function_for(prob, split)?;
    let expected_value = tf.value(expected.as_array(), prob.energies.avg());
    let mut config = ProtocolConfig {
        n,
        inputs: prob.inputs,
        energies: prob.energies,
        eps,
        tf,
        threshold: 0.0,
        variance_form: VarianceForm::default(),
    };
    config.threshold = expected_value - margin_terms * config.error_term()?;
    config.validate()?;
    Ok(ProtocolDesign { config, expected_value })
}
