//! Parameter sweeps producing plot-ready tables of entropy bounds.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{AlgorithmSection, ResolvedProblem, RunConfig, Sweep};
use crate::entropy::{self, AverageConstraint, Target};
use crate::error::{Error, Result};
use crate::qset::{Behaviour, EnergyBounds};
use crate::sim;

/// One table row; `NaN` marks a bound that does not exist at that point
/// (for instance a target outside the quantum set).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: f64,
    /// One lower bound per entry of `AlgorithmSection::ks`.
    pub lower: Vec<f64>,
    pub min_entropy: f64,
    pub upper: f64,
}

/// The problem at one sweep point, plus a behaviour for the upper bound.
fn point(base: &RunConfig, sweep: &Sweep, v: f64) -> Result<(ResolvedProblem, Option<Behaviour>)> {
    let p = &base.problem;
    let energies = || p.energies.ok_or_else(|| Error::Config("this sweep needs problem.energies".into()));
    let average = p.average.unwrap_or_default();
    Ok(match *sweep {
        Sweep::Difference { .. } => {
            let target = Target::Functional { coeffs: [0.5, -0.5], value: v };
            let witness = Behaviour::new(v, -v).ok();
            (ResolvedProblem { target, energies: energies()?, inputs: p.inputs, average }, witness)
        }
        Sweep::Correlation { .. } => {
            let b = Behaviour::new(v, -v)?;
            (
                ResolvedProblem { target: Target::Behaviour(b), energies: energies()?, inputs: p.inputs, average },
                Some(b),
            )
        }
        Sweep::Bpsk { efficiency, margin, .. } => {
            let (b, en) = sim::bpsk_setting((2.0 * v).sqrt(), efficiency, margin)?;
            let average = p.average.unwrap_or(AverageConstraint::Weighted(p.inputs.as_array()));
            (ResolvedProblem { target: Target::Behaviour(b), energies: en, inputs: p.inputs, average }, Some(b))
        }
        Sweep::Ook { efficiency, .. } => {
            let (b, en) = sim::ook_behaviour((2.0 * v).sqrt(), efficiency)?;
            (ResolvedProblem { target: Target::Behaviour(b), energies: en, inputs: p.inputs, average }, Some(b))
        }
    })
}

fn or_nan(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::InfeasibleBehaviour(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Bounds for one resolved problem.
pub fn evaluate(
    prob: &ResolvedProblem,
    witness: Option<Behaviour>,
    alg: &AlgorithmSection,
) -> Result<(Vec<f64>, f64, f64)> {
    let lower = alg
        .ks
        .iter()
        .map(|&k| or_nan(entropy::entropy_lower_bound(&prob.entropy_problem(k)).map(|r| r.0)))
        .collect::<Result<Vec<_>>>()?;
    let min_entropy = if alg.min_entropy {
        or_nan(entropy::min_entropy_bound(&prob.entropy_problem(alg.design_k())).map(|r| r.0))?
    } else {
        f64::NAN
    };
    let upper = match witness {
        Some(b) if alg.grid > 0 => or_nan(
            entropy::decompose_upper_bound_with(&b, &prob.energies, &prob.inputs, prob.average, alg.grid)
                .map(|d| d.value),
        )?,
        _ => f64::NAN,
    };
    Ok((lower, min_entropy, upper))
}

/// Runs the configured sweep; rows come back in parameter order whatever
/// the thread count.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let sweep = cfg.problem.sweep.as_ref().ok_or_else(|| Error::Config("problem.sweep is required".into()))?;
    sweep
        .parameters()
        .into_par_iter()
        .map(|v| {
            let (prob, witness) = point(cfg, sweep, v)?;
            let (lower, min_entropy, upper) = evaluate(&prob, witness, &cfg.algorithm)?;
            Ok(SweepRow { parameter: v, lower, min_entropy, upper })
        })
        .collect()
}

/// Single-point table for a configuration without a sweep.
pub fn run_single(cfg: &RunConfig) -> Result<SweepRow> {
    let prob = cfg.resolve()?;
    let witness = match prob.target {
        Target::Behaviour(b) => Some(b),
        Target::Functional { .. } => None,
    };
    let (lower, min_entropy, upper) = evaluate(&prob, witness, &cfg.algorithm)?;
    let parameter = match prob.target {
        Target::Behaviour(b) => b.e1(),
        Target::Functional { value, .. } => value,
    };
    Ok(SweepRow { parameter, lower, min_entropy, upper })
}

/// CSV with a `#` metadata header: version, configuration hash and column
/// meanings.
pub fn to_csv(cfg: &RunConfig, parameter_name: &str, rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# enrand {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# config-sha256 {}", cfg.hash());
    let _ = writeln!(
        s,
        "# parameter: {parameter_name}; h_k<k>: lower bound with k chords; h_min: min-entropy lower bound; h_upper: decomposition upper bound; NaN: not defined"
    );
    s.push_str("parameter");
    for k in &cfg.algorithm.ks {
        let _ = write!(s, ",h_k{k}");
    }
    s.push_str(",h_min,h_upper\n");
    for r in rows {
        let _ = write!(s, "{}", r.parameter);
        for v in &r.lower {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{},{}", r.min_entropy, r.upper);
    }
    s
}

/// Energies used at a sweep point, for reports.
pub fn energies_at(cfg: &RunConfig, v: f64) -> Result<EnergyBounds> {
    let sweep = cfg.problem.sweep.as_ref().ok_or_else(|| Error::Config("problem.sweep is required".into()))?;
    Ok(point(cfg, sweep, v)?.0.energies)
}
