//! Simulated devices and end-to-end protocol runs.
//!
//! Device models expose their true per-round probabilities and energies.
//! That introspection is only used to validate the models and to measure the
//! true surprisal in [`monte_carlo_soundness`]; the protocol itself sees only
//! inputs and outputs.

use std::fmt;
use std::sync::Arc;

use libm::erf;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{estimator, ProtocolConfig};
use crate::entropy::InputDistribution;
use crate::error::{Error, Result};
use crate::extract::{self, BitString, ExtractorParams};
use crate::qset::{self, Behaviour, EnergyBounds};

/// Slack allowed when checking a round behaviour against the quantum set.
const ROUND_TOL: f64 = 1e-9;

/// `E = (erf(ηξ), −erf(ηξ))` and mean photon number `ξ²/2` of the
/// phase-shift-keyed coherent states.
pub fn bpsk_behaviour(amplitude: f64, efficiency: f64) -> Result<(Behaviour, f64)> {
    check_optical(amplitude, efficiency)?;
    let e = erf(efficiency * amplitude);
    Ok((Behaviour::new(e, -e)?, amplitude * amplitude / 2.0))
}

/// `E = (−1, 1 − 2e^{−ηξ²/2})` with peak energies `(0, ξ²/2)`.
pub fn ook_behaviour(amplitude: f64, efficiency: f64) -> Result<(Behaviour, EnergyBounds)> {
    check_optical(amplitude, efficiency)?;
    let mut photons = amplitude * amplitude / 2.0;
    if photons > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("mean photon number {photons} exceeds the unit energy scale")));
    }
    photons = photons.min(1.0);
    let e2 = 1.0 - 2.0 * (-efficiency * photons).exp();
    Ok((Behaviour::new(-1.0, e2)?, EnergyBounds::peak_only([0.0, photons])?))
}

fn check_optical(amplitude: f64, efficiency: f64) -> Result<()> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::Domain(format!("amplitude {amplitude} must be finite and non-negative")));
    }
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::Domain(format!("efficiency {efficiency} outside [0, 1]")));
    }
    Ok(())
}

/// Correlators and energies of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundBehaviour {
    pub e: [f64; 2],
    pub w: [f64; 2],
}

impl RoundBehaviour {
    /// `μ(a|x) = (1 + a·E_x)/2`.
    pub fn prob(&self, a: i8, x: usize) -> f64 {
        (1.0 + a as f64 * self.e[x]) / 2.0
    }
}

/// One hidden-variable value of an i.i.d. ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleComponent {
    pub weight: f64,
    pub e: [f64; 2],
    pub w: [f64; 2],
}

/// Deterministic strategy: the round behaviour is a function of the history
/// `(x_j, a_j)_{j<i}` and of a hidden variable drawn once per run.
pub trait AdaptiveRule: Send + Sync + fmt::Debug {
    fn round(&self, history: &[(usize, i8)], lambda: u64) -> RoundBehaviour;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeviceModel {
    /// A fresh hidden variable is drawn every round.
    IidEnsemble {
        components: Vec<EnsembleComponent>,
    },
    /// `margin` is the safety factor `δ` of the declared average energy
    /// `(1+δ)ξ²/2`; it does not change the device.
    Bpsk {
        amplitude: f64,
        efficiency: f64,
        margin: f64,
    },
    Ook {
        amplitude: f64,
        efficiency: f64,
    },
    #[serde(skip)]
    Adaptive(Arc<dyn AdaptiveRule>),
}

impl DeviceModel {
    /// Fixed round behaviour of an honest optical device.
    fn fixed(&self) -> Result<Option<RoundBehaviour>> {
        Ok(match self {
            DeviceModel::Bpsk { amplitude, efficiency, .. } => {
                let (b, photons) = bpsk_behaviour(*amplitude, *efficiency)?;
                Some(RoundBehaviour { e: b.as_array(), w: [photons; 2] })
            }
            DeviceModel::Ook { amplitude, efficiency } => {
                let (b, en) = ook_behaviour(*amplitude, *efficiency)?;
                Some(RoundBehaviour { e: b.as_array(), w: en.pk() })
            }
            _ => None,
        })
    }

    /// Declared per-input average energy, where the model has one.
    pub fn mean_energy(&self) -> Result<Option<[f64; 2]>> {
        Ok(match self {
            DeviceModel::IidEnsemble { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut m = [0.0; 2];
                for c in components {
                    for x in 0..2 {
                        m[x] += c.weight / total * c.w[x];
                    }
                }
                Some(m)
            }
            DeviceModel::Adaptive(_) => None,
            _ => self.fixed()?.map(|r| r.w),
        })
    }

    /// Checks every behaviour the model can produce without history.
    pub fn validate(&self, pk: [f64; 2]) -> Result<()> {
        match self {
            DeviceModel::IidEnsemble { components } => {
                if components.is_empty() {
                    return Err(Error::Config("ensemble has no components".into()));
                }
                if components.iter().any(|c| !(c.weight >= 0.0 && c.weight.is_finite()))
                    || components.iter().all(|c| c.weight == 0.0)
                {
                    return Err(Error::Config("ensemble weights must be non-negative and not all zero".into()));
                }
                for c in components {
                    check_round(&RoundBehaviour { e: c.e, w: c.w }, pk, 0)?;
                }
                Ok(())
            }
            DeviceModel::Adaptive(_) => Ok(()),
            _ => check_round(&self.fixed()?.expect("optical model"), pk, 0),
        }
    }
}

/// Expected behaviour and declared energies of the BPSK set-up, with the
/// average energy taken over inputs as well as hidden variables.
pub fn bpsk_setting(amplitude: f64, efficiency: f64, margin: f64) -> Result<(Behaviour, EnergyBounds)> {
    if !(margin >= 0.0) {
        return Err(Error::Domain(format!("energy margin {margin} must be non-negative")));
    }
    let (b, photons) = bpsk_behaviour(amplitude, efficiency)?;
    let avg = ((1.0 + margin) * photons).min(1.0);
    Ok((b, EnergyBounds::new([avg; 2], [1.0; 2])?))
}

fn check_round(r: &RoundBehaviour, pk: [f64; 2], round: usize) -> Result<()> {
    if r.w.iter().zip(&pk).any(|(w, p)| !(*w >= 0.0 && *w <= p + ROUND_TOL)) {
        return Err(Error::DeviceInvariant {
            round,
            detail: format!("energies {:?} exceed the peak bound {pk:?}", r.w),
        });
    }
    let b = Behaviour::new(r.e[0], r.e[1]).map_err(|e| Error::DeviceInvariant { round, detail: e.to_string() })?;
    let w = [r.w[0].min(1.0), r.w[1].min(1.0)];
    if !qset::in_quantum_set_closed_form(&b, w, ROUND_TOL)? {
        return Err(Error::DeviceInvariant {
            round,
            detail: format!("correlators {:?} are not realizable with energies {:?}", r.e, r.w),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Inputs = 0,
    Device = 1,
    ExtractorSeed = 2,
}

/// Independent ChaCha stream for one purpose of one trial.
fn stream(seed: u64, trial: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial << 2 | purpose as u64);
    rng
}

pub fn sample_input<R: Rng + ?Sized>(rng: &mut R, inputs: &InputDistribution) -> usize {
    usize::from(rng.random::<f64>() >= inputs.p(0))
}

/// Raw rounds together with the simulation-only log-probability sum.
struct Rounds {
    inputs: Vec<usize>,
    outputs: Vec<i8>,
    energies: Vec<[f64; 2]>,
    log_prob: f64,
}

/// Streaming source of round behaviours.
enum Source<'a> {
    Fixed(RoundBehaviour),
    Ensemble(&'a [EnsembleComponent], WeightedIndex<f64>),
    Adaptive(&'a dyn AdaptiveRule, u64),
}

impl<'a> Source<'a> {
    fn new<R: Rng + ?Sized>(dev: &'a DeviceModel, pk: [f64; 2], rng: &mut R) -> Result<Self> {
        dev.validate(pk)?;
        Ok(match dev {
            DeviceModel::IidEnsemble { components } => {
                let w = WeightedIndex::new(components.iter().map(|c| c.weight))
                    .map_err(|e| Error::Config(format!("ensemble weights: {e}")))?;
                Source::Ensemble(components, w)
            }
            DeviceModel::Adaptive(rule) => Source::Adaptive(rule.as_ref(), rng.random()),
            _ => Source::Fixed(dev.fixed()?.expect("optical model")),
        })
    }

    fn next<R: Rng + ?Sized>(&self, rng: &mut R, history: &[(usize, i8)], pk: [f64; 2]) -> Result<RoundBehaviour> {
        Ok(match self {
            Source::Fixed(r) => *r,
            Source::Ensemble(c, w) => {
                let k = &c[w.sample(rng)];
                RoundBehaviour { e: k.e, w: k.w }
            }
            Source::Adaptive(rule, lambda) => {
                let r = rule.round(history, *lambda);
                check_round(&r, pk, history.len())?;
                r
            }
        })
    }
}

fn simulate(
    dev: &DeviceModel,
    n: usize,
    inputs: &InputDistribution,
    pk: [f64; 2],
    seed: u64,
    trial: u64,
) -> Result<Rounds> {
    let mut in_rng = stream(seed, trial, Purpose::Inputs);
    let mut dev_rng = stream(seed, trial, Purpose::Device);
    let source = Source::new(dev, pk, &mut dev_rng)?;
    let adaptive = matches!(source, Source::Adaptive(..));
    let mut history = Vec::with_capacity(if adaptive { n } else { 0 });
    let mut out = Rounds {
        inputs: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
        energies: Vec::with_capacity(n),
        log_prob: 0.0,
    };
    for _ in 0..n {
        let x = sample_input(&mut in_rng, inputs);
        let r = source.next(&mut dev_rng, &history, pk)?;
        let up = r.prob(1, x);
        let a: i8 = if dev_rng.random::<f64>() < up { 1 } else { -1 };
        out.log_prob += r.prob(a, x).log2();
        out.inputs.push(x);
        out.outputs.push(a);
        out.energies.push(r.w);
        if adaptive {
            history.push((x, a));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Pass,
    Abort,
}

/// Everything a protocol run produced. Inputs are stored as indices 0, 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub seed: u64,
    pub inputs: Vec<u8>,
    pub outputs: Vec<i8>,
    /// True per-round energies of the simulated device.
    pub energies: Vec<[f64; 2]>,
    pub mean_xi: f64,
    /// `⟨ξ⟩ + γ·ω_avg`.
    pub test_value: f64,
    pub threshold: f64,
    pub error_term: f64,
    pub min_entropy_budget: f64,
    pub decision: Decision,
    pub extractor: Option<ExtractorParams>,
    pub extractor_seed: Option<BitString>,
    pub key: Option<BitString>,
}

impl ProtocolTranscript {
    /// The raw string `A^n`, one bit per round, set for `a = +1`.
    pub fn raw_bits(&self) -> BitString {
        BitString::from_iter_len(self.outputs.len(), self.outputs.iter().map(|a| *a > 0))
    }

    /// Realized mean energy per input.
    pub fn mean_energy(&self) -> [f64; 2] {
        let n = self.energies.len().max(1) as f64;
        let mut m = [0.0; 2];
        for w in &self.energies {
            m[0] += w[0];
            m[1] += w[1];
        }
        [m[0] / n, m[1] / n]
    }

    /// `round,x,a` rows with inputs labelled 1, 2 and outputs ±1.
    pub fn rounds_csv(&self) -> String {
        let mut s = String::with_capacity(16 * self.inputs.len() + 16);
        s.push_str("round,x,a\n");
        for (i, (x, a)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            s.push_str(&format!("{},{},{}\n", i + 1, x + 1, a));
        }
        s
    }
}

/// `(1/n)·Σ ξ(a_i, x_i)` summed in round order.
pub fn mean_estimator(cfg: &ProtocolConfig, inputs: &[u8], outputs: &[i8]) -> f64 {
    let sum: f64 = inputs.iter().zip(outputs).map(|(x, a)| estimator(&cfg.tf, *a, *x as usize)).sum();
    sum / inputs.len() as f64
}

pub fn run_protocol(dev: &DeviceModel, cfg: &ProtocolConfig, seed: u64) -> Result<ProtocolTranscript> {
    cfg.validate()?;
    let n = usize::try_from(cfg.n).map_err(|_| Error::Config("round count does not fit in memory".into()))?;
    let rounds = simulate(dev, n, &cfg.inputs, cfg.energies.pk(), seed, 0)?;
    let inputs: Vec<u8> = rounds.inputs.iter().map(|x| *x as u8).collect();
    let mean_xi = mean_estimator(cfg, &inputs, &rounds.outputs);
    let test_value = cfg.test_value(mean_xi);
    let error_term = cfg.error_term()?;
    let mut t = ProtocolTranscript {
        seed,
        inputs,
        outputs: rounds.outputs,
        energies: rounds.energies,
        mean_xi,
        test_value,
        threshold: cfg.threshold,
        error_term,
        min_entropy_budget: cfg.min_entropy_budget()?,
        decision: if cfg.passes(mean_xi) { Decision::Pass } else { Decision::Abort },
        extractor: None,
        extractor_seed: None,
        key: None,
    };
    if t.decision == Decision::Pass {
        let params = cfg.extractor()?;
        let mut rng = stream(seed, 0, Purpose::ExtractorSeed);
        let s = BitString::from_iter_len(params.l, (0..params.l).map(|_| rng.random::<bool>()));
        t.key = Some(extract::toeplitz_extract(&t.raw_bits(), &s, &params)?);
        t.extractor = Some(params);
        t.extractor_seed = Some(s);
    }
    Ok(t)
}

/// Outcome of repeated runs checked against the surprisal bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub trials: u64,
    /// Runs where the true surprisal fell below `⟨ξ⟩ + γ·ω_avg − t`.
    pub violations: u64,
    pub frequency: f64,
    /// Runs where the realized mean energy exceeded `ω_avg` in some input.
    pub energy_excursions: u64,
    pub error_term: f64,
}

/// Trial `i` uses stream `i` of `seed`; results do not depend on the thread
/// count.
pub fn monte_carlo_soundness(
    dev: &DeviceModel,
    cfg: &ProtocolConfig,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let n = usize::try_from(cfg.n).map_err(|_| Error::Config("round count does not fit in memory".into()))?;
    let t = cfg.error_term()?;
    let avg = cfg.energies.avg();
    let outcomes: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let r = simulate(dev, n, &cfg.inputs, cfg.energies.pk(), seed, trial)?;
            let sum: f64 = r.inputs.iter().zip(&r.outputs).map(|(x, a)| estimator(&cfg.tf, *a, *x)).sum();
            let bound = cfg.test_value(sum / n as f64) - t;
            let surprisal = -r.log_prob / n as f64;
            let mut mean = [0.0; 2];
            for w in &r.energies {
                mean[0] += w[0] / n as f64;
                mean[1] += w[1] / n as f64;
            }
            let excursion = mean[0] > avg[0] + 1e-12 || mean[1] > avg[1] + 1e-12;
            Ok((surprisal < bound, excursion))
        })
        .collect::<Result<_>>()?;
    let violations = outcomes.iter().filter(|o| o.0).count() as u64;
    let energy_excursions = outcomes.iter().filter(|o| o.1).count() as u64;
    Ok(MonteCarloReport {
        trials,
        violations,
        frequency: violations as f64 / trials.max(1) as f64,
        energy_excursions,
        error_term: t,
    })
}
