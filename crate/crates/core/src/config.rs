//! JSON run configuration shared by the command-line front-end.
//!
//! ```json
//! {
//!   "problem":   { "behaviour": [0.8, -0.8], "energies": { "avg": [0.3, 0.3], "pk": [1, 1] } },
//!   "algorithm": { "ks": [2, 4, 8, 16], "grid": 1000 },
//!   "protocol":  { "n": 100000, "epsilons": { "t": 1e-6, "m": 1e-6, "ext": 1e-6, "omega": 0 },
//!                  "threshold": { "error-terms-below": 2 }, "seed": 1 },
//!   "output":    { "directory": "out", "prefix": "run" }
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{design_protocol, AlphaSplit, Epsilons, ProtocolDesign, VarianceForm};
use crate::entropy::{AverageConstraint, EntropyProblem, InputDistribution, Target};
use crate::error::{Error, Result};
use crate::qset::{Behaviour, EnergyBounds};
use crate::sim::{self, DeviceModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub coeffs: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Observed correlators `(E₁, E₂)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behaviour: Option<[f64; 2]>,
    /// Only `coeffs · E = value` is observed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<EnergyBounds>,
    #[serde(default = "InputDistribution::uniform")]
    pub inputs: InputDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average: Option<AverageConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceModel>,
}

/// One-parameter families of problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    /// `(E₁ − E₂)/2 = v` with the problem's energies.
    Difference { from: f64, to: f64, points: usize },
    /// `E = (v, −v)` with the problem's energies.
    Correlation { from: f64, to: f64, points: usize },
    /// BPSK device against its mean photon number `ξ²/2`.
    Bpsk { efficiency: f64, margin: f64, from: f64, to: f64, points: usize },
    /// OOK device against its mean photon number `ξ²/2`.
    Ook { efficiency: f64, from: f64, to: f64, points: usize },
}

impl Sweep {
    pub fn parameters(&self) -> Vec<f64> {
        let (from, to, points) = match *self {
            Sweep::Difference { from, to, points }
            | Sweep::Correlation { from, to, points }
            | Sweep::Bpsk { from, to, points, .. }
            | Sweep::Ook { from, to, points, .. } => (from, to, points),
        };
        match points {
            0 => vec![],
            1 => vec![from],
            _ => (0..points).map(|i| from + (to - from) * i as f64 / (points - 1) as f64).collect(),
        }
    }

    pub fn parameter_name(&self) -> &'static str {
        match self {
            Sweep::Difference { .. } => "difference",
            Sweep::Correlation { .. } => "correlation",
            Sweep::Bpsk { .. } | Sweep::Ook { .. } => "mean_photon_number",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    /// Chord counts; the largest one designs trade-off functions.
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    /// Grid size of the decomposition upper bound; 0 skips it.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_true")]
    pub min_entropy: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub alpha_split: AlphaSplit,
    #[serde(default)]
    pub variance_form: VarianceForm,
}

fn default_ks() -> Vec<usize> {
    vec![16]
}

fn default_grid() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

fn default_tolerance() -> f64 {
    crate::qset::CLOSED_FORM_TOL
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            ks: default_ks(),
            grid: default_grid(),
            min_entropy: true,
            tolerance: default_tolerance(),
            alpha_split: AlphaSplit::default(),
            variance_form: VarianceForm::default(),
        }
    }
}

impl AlgorithmSection {
    pub fn design_k(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(16)
    }
}

/// Where the test threshold sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThresholdRule {
    /// This many error terms below the trade-off value at the expected
    /// behaviour.
    ErrorTermsBelow(f64),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub n: u64,
    pub epsilons: Epsilons,
    pub threshold: ThresholdRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
}

fn default_trials() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Files are written here; without it results go to standard output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

impl OutputSection {
    pub fn prefix(&self) -> &str {
        self.prefix.as_deref().unwrap_or("enrand")
    }
}

/// A fully resolved single problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedProblem {
    pub target: Target,
    pub energies: EnergyBounds,
    pub inputs: InputDistribution,
    pub average: AverageConstraint,
}

impl ResolvedProblem {
    pub fn entropy_problem(&self, k: usize) -> EntropyProblem {
        EntropyProblem::new(self.target, self.energies, self.inputs, k).with_average(self.average)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.behaviour.is_some() && p.functional.is_some() {
            return Err(Error::Config("give either problem.behaviour or problem.functional, not both".into()));
        }
        if let Some(b) = p.behaviour {
            Behaviour::new(b[0], b[1]).map_err(|e| Error::Config(format!("problem.behaviour: {e}")))?;
        }
        if let Some(f) = &p.functional {
            if !f.coeffs.iter().chain([&f.value]).all(|v| v.is_finite()) || f.coeffs == [0.0, 0.0] {
                return Err(Error::Config("problem.functional needs finite, nonzero coefficients".into()));
            }
        }
        if let Some(AverageConstraint::Weighted(w)) = p.average {
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w == [0.0, 0.0] {
                return Err(Error::Config("weighted average needs non-negative weights".into()));
            }
        }
        if let Some(s) = &p.sweep {
            let ok = match *s {
                Sweep::Difference { from, to, points } | Sweep::Correlation { from, to, points } => {
                    from.abs() <= 1.0 && to.abs() <= 1.0 && points > 0
                }
                Sweep::Bpsk { efficiency, margin, from, to, points } => {
                    (0.0..=1.0).contains(&efficiency) && margin >= 0.0 && from >= 0.0 && to >= 0.0 && points > 0
                }
                Sweep::Ook { efficiency, from, to, points } => {
                    (0.0..=1.0).contains(&efficiency)
                        && (0.0..=1.0).contains(&from)
                        && (0.0..=1.0).contains(&to)
                        && points > 0
                }
            };
            if !ok {
                return Err(Error::Config(format!("problem.sweep out of range: {s:?}")));
            }
        }
        let a = &self.algorithm;
        if a.ks.is_empty() || a.ks.contains(&0) {
            return Err(Error::Config("algorithm.ks must list positive chord counts".into()));
        }
        if !(a.tolerance >= 0.0 && a.tolerance < 1.0) {
            return Err(Error::Config("algorithm.tolerance must lie in [0, 1)".into()));
        }
        if let Some(pr) = &self.protocol {
            if pr.n == 0 || pr.trials == 0 {
                return Err(Error::Config("protocol.n and protocol.trials must be positive".into()));
            }
            pr.epsilons.validate().map_err(|e| Error::Config(format!("protocol.epsilons: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, in hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The single problem described by the configuration, filling in what a
    /// BPSK or OOK device implies.
    pub fn resolve(&self) -> Result<ResolvedProblem> {
        let p = &self.problem;
        let implied = match &p.device {
            Some(DeviceModel::Bpsk { amplitude, efficiency, margin }) => {
                let (b, en) = sim::bpsk_setting(*amplitude, *efficiency, *margin)?;
                Some((b, en, Some(AverageConstraint::Weighted(p.inputs.as_array()))))
            }
            Some(DeviceModel::Ook { amplitude, efficiency }) => {
                let (b, en) = sim::ook_behaviour(*amplitude, *efficiency)?;
                Some((b, en, None))
            }
            _ => None,
        };
        let target = match (p.behaviour, &p.functional, &implied) {
            (Some(b), _, _) => Target::Behaviour(Behaviour::new(b[0], b[1])?),
            (None, Some(f), _) => Target::Functional { coeffs: f.coeffs, value: f.value },
            (None, None, Some((b, _, _))) => Target::Behaviour(*b),
            _ => return Err(Error::Config("problem needs a behaviour, a functional or an optical device".into())),
        };
        let energies = match (p.energies, &implied) {
            (Some(e), _) => e,
            (None, Some((_, e, _))) => *e,
            _ => return Err(Error::Config("problem.energies is required".into())),
        };
        let average = p.average.or(implied.and_then(|i| i.2)).unwrap_or_default();
        Ok(ResolvedProblem { target, energies, inputs: p.inputs, average })
    }

    pub fn protocol(&self) -> Result<&ProtocolSection> {
        self.protocol.as_ref().ok_or_else(|| Error::Config("a protocol section is required".into()))
    }

    /// Device model for simulated runs.
    pub fn device(&self) -> Result<&DeviceModel> {
        self.problem.device.as_ref().ok_or_else(|| Error::Config("problem.device is required".into()))
    }

    /// Trade-off function and protocol parameters at the expected behaviour.
    pub fn design(&self) -> Result<ProtocolDesign> {
        let pr = self.protocol()?;
        let prob = self.resolve()?.entropy_problem(self.algorithm.design_k());
        let margin = match pr.threshold {
            ThresholdRule::ErrorTermsBelow(m) => m,
            ThresholdRule::Value(_) => 0.0,
        };
        let mut d = design_protocol(&prob, pr.n, pr.epsilons, margin, self.algorithm.alpha_split)?;
        d.config.variance_form = self.algorithm.variance_form;
        let t = d.config.error_term()?;
        d.config.threshold = match pr.threshold {
            ThresholdRule::ErrorTermsBelow(m) => d.expected_value - m * t,
            ThresholdRule::Value(r) => r,
        };
        d.config.validate()?;
        Ok(d)
    }
}
