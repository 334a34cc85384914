//! Upper bounds on the worst-case entropy from explicit decompositions into
//! extremal members of the peak-energy set.
//!
//! Extremal members sit on the curved boundary with the least energy that
//! realizes them. With angles `u_x = asin E_x`, half-spread `φ = |u₁ − u₂|/2`
//! and split `a ∈ [0, φ]`, the energies are `(sin²a, sin²(φ − a))`. A grid in
//! (spread, centre, split) seeds a linear program over mixtures; columns with
//! negative reduced cost are then added by local search until none remain.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use super::lp::{Lp, LpOutcome};
use super::{conditional_entropy, target_is_reachable, AverageConstraint, EntropyProblem, InputDistribution, Target};
use crate::error::{Error, Result};
use crate::qset::{self, Behaviour, EnergyBounds};

/// One extremal behaviour of a decomposition and its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportPoint {
    pub weight: f64,
    pub behaviour: [f64; 2],
    pub energies: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    /// `Σ_λ p(λ) H(E^λ)`, an upper bound on the worst-case entropy.
    pub value: f64,
    pub support: Vec<SupportPoint>,
    /// Columns in the final LP.
    pub columns: usize,
}

#[derive(Debug, Clone, Copy)]
struct Atom {
    e: [f64; 2],
    w: [f64; 2],
}

/// Maps normalized coordinates to extremal atoms of `Q_pk`.
struct AtomSpace {
    theta_pk: [f64; 2],
    phi_max: f64,
    /// Angles every atom must share with the target. A target at `|E_x| = 1`
    /// is only a mixture of atoms with the same `E_x`, and near-copies off
    /// that face make the simplex basis singular.
    pinned: [Option<f64>; 2],
}

impl AtomSpace {
    fn new(pk: [f64; 2], target: [f64; 2]) -> Self {
        let theta_pk = [pk[0].clamp(0.0, 1.0).sqrt().asin(), pk[1].clamp(0.0, 1.0).sqrt().asin()];
        let pinned = target.map(|e| (e.abs() >= 1.0 - PIN_TOL).then(|| FRAC_PI_2.copysign(e)));
        Self { theta_pk, phi_max: (theta_pk[0] + theta_pk[1]).min(FRAC_PI_2), pinned }
    }

    fn admits(&self, e: [f64; 2]) -> bool {
        (0..2).all(|x| self.pinned[x].is_none_or(|p| e[x] == p.sin()))
    }

    /// `spread ∈ [−1, 1]`, `centre ∈ [−1, 1]`, `split ∈ [0, 1]`. With one
    /// angle pinned, `spread` places the other and `centre` is unused.
    fn atom(&self, spread: f64, centre: f64, split: f64) -> Atom {
        let reach = 2.0 * self.phi_max * spread.clamp(-1.0, 1.0);
        let (u1, u2) = match self.pinned {
            [Some(p), Some(q)] => (p, q),
            [Some(p), None] => (p, (p + reach).clamp(-FRAC_PI_2, FRAC_PI_2)),
            [None, Some(q)] => ((q + reach).clamp(-FRAC_PI_2, FRAC_PI_2), q),
            [None, None] => {
                let d = reach / 2.0;
                let c = centre.clamp(-1.0, 1.0) * (FRAC_PI_2 - d.abs());
                ((c + d).clamp(-FRAC_PI_2, FRAC_PI_2), (c - d).clamp(-FRAC_PI_2, FRAC_PI_2))
            }
        };
        let phi = ((u1 - u2).abs() / 2.0).min(self.phi_max);
        let (lo, hi) = self.split_range(phi);
        let a = lo + split.clamp(0.0, 1.0) * (hi - lo);
        let b = (phi - a).max(0.0);
        Atom { e: [u1.sin(), u2.sin()], w: [a.sin().powi(2), b.sin().powi(2)] }
    }

    fn split_range(&self, phi: f64) -> (f64, f64) {
        let lo = (phi - self.theta_pk[1]).max(0.0);
        let hi = phi.min(self.theta_pk[0]).max(lo);
        (lo, hi)
    }

    /// Least-energy split for a given behaviour, `None` outside `Q_pk`.
    fn tight_energies(&self, e: [f64; 2]) -> Option<[f64; 2]> {
        let phi = (e[0].asin() - e[1].asin()).abs() / 2.0;
        if phi > self.phi_max + 1e-12 {
            return None;
        }
        let (lo, hi) = self.split_range(phi.min(self.phi_max));
        let a = 0.5 * (lo + hi);
        Some([a.sin().powi(2), (phi - a).max(0.0).sin().powi(2)])
    }
}

struct Rows {
    average: AverageConstraint,
}

impl Rows {
    fn count(&self) -> usize {
        match self.average {
            AverageConstraint::PerInput => 5,
            AverageConstraint::Weighted(_) => 4,
        }
    }

    fn rhs(&self, e: [f64; 2], avg: [f64; 2]) -> Vec<f64> {
        match self.average {
            AverageConstraint::PerInput => vec![1.0, e[0], e[1], avg[0], avg[1]],
            AverageConstraint::Weighted(wt) => vec![1.0, e[0], e[1], wt[0] * avg[0] + wt[1] * avg[1]],
        }
    }

    fn column(&self, a: &Atom) -> Vec<f64> {
        match self.average {
            AverageConstraint::PerInput => vec![1.0, a.e[0], a.e[1], a.w[0], a.w[1]],
            AverageConstraint::Weighted(wt) => vec![1.0, a.e[0], a.e[1], wt[0] * a.w[0] + wt[1] * a.w[1]],
        }
    }

    fn slack_columns(&self) -> Vec<Vec<f64>> {
        let m = self.count();
        (3..m)
            .map(|r| {
                let mut c = vec![0.0; m];
                c[r] = 1.0;
                c
            })
            .collect()
    }
}

const REFINE_ROUNDS: usize = 60;
const REDUCED_COST_TOL: f64 = 1e-9;
const ATOM_SEPARATION: f64 = 1e-7;
const PIN_TOL: f64 = 1e-12;

fn distance(a: &Atom, b: &Atom) -> f64 {
    let d = [a.e[0] - b.e[0], a.e[1] - b.e[1], a.w[0] - b.w[0], a.w[1] - b.w[1]];
    d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Decomposition bound under the per-input max-average assumption.
pub fn decompose_upper_bound(
    b: &Behaviour,
    energies: &EnergyBounds,
    inputs: &InputDistribution,
    grid: usize,
) -> Result<Decomposition> {
    decompose_upper_bound_with(b, energies, inputs, AverageConstraint::PerInput, grid)
}

/// Minimizes `Σ_λ p(λ) H(E^λ)` over mixtures of extremal members of `Q_pk`
/// that reproduce `b` and respect the average energy constraint. About
/// `grid` seed atoms are used before column generation.
pub fn decompose_upper_bound_with(
    b: &Behaviour,
    energies: &EnergyBounds,
    inputs: &InputDistribution,
    average: AverageConstraint,
    grid: usize,
) -> Result<Decomposition> {
    if grid == 0 {
        return Err(Error::Domain("grid size must be positive".into()));
    }
    let pk = energies.pk();
    if !qset::in_quantum_set_closed_form(b, pk, qset::CLOSED_FORM_TOL)? {
        return Err(Error::InfeasibleBehaviour(format!(
            "E = {:?} is outside the quantum set at peak energies {pk:?}",
            b.as_array()
        )));
    }
    target_is_reachable(&EntropyProblem::new(Target::Behaviour(*b), *energies, *inputs, 1).with_average(average))?;
    // a zero per-input average forces zero energy on every atom
    let atom_pk = match average {
        AverageConstraint::PerInput => [0, 1].map(|x| if energies.avg()[x] <= 0.0 { 0.0 } else { pk[x] }),
        AverageConstraint::Weighted(_) => pk,
    };
    let space = AtomSpace::new(atom_pk, b.as_array());
    let rows = Rows { average };
    let cost = |a: &Atom| conditional_entropy(a.e, inputs);

    let mut atoms = seed_atoms(&space, grid);
    if let Some(w) = space.tight_energies(b.as_array()) {
        atoms.push((b.as_array(), w, [f64::NAN; 3]));
    }
    // corners are deterministic and free of entropy
    for e in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
        if let Some(w) = space.tight_energies(e) {
            atoms.push((e, w, [f64::NAN; 3]));
        }
    }
    atoms.retain(|(e, _, _)| space.admits(*e));

    let mut lp = Lp::new(rows.rhs(b.as_array(), energies.avg()));
    let mut columns: Vec<Option<(Atom, [f64; 3])>> = Vec::new();
    for col in rows.slack_columns() {
        lp.add_column(&col, 0.0);
        columns.push(None);
    }
    let mut seen = std::collections::HashSet::new();
    for (e, w, coords) in atoms {
        let a = Atom { e, w };
        let key = [e[0], e[1], w[0], w[1]].map(|v| (v * 1e8).round() as i64);
        if !seen.insert(key) {
            continue;
        }
        lp.add_column(&rows.column(&a), cost(&a));
        columns.push(Some((a, coords)));
    }

    let mut outcome = lp.solve();
    for _ in 0..REFINE_ROUNDS {
        // while the grid cannot reproduce the target, price columns for the
        // feasibility phase instead
        let (basis, duals, feasibility) = match &outcome {
            LpOutcome::Optimal { basis, duals, .. } => (basis, duals, false),
            LpOutcome::Infeasible { basis, duals, .. } => (basis, duals, true),
            _ => break,
        };
        let reduced = |a: &Atom| -> f64 {
            let c = rows.column(a);
            let price = c.iter().zip(duals).map(|(x, y)| x * y).sum::<f64>();
            if feasibility {
                -price
            } else {
                cost(a) - price
            }
        };
        let rc_at = |p: [f64; 3]| reduced(&space.atom(p[0], p[1], p[2]));

        // starting points: basic atoms and the best-priced grid atoms
        let mut starts: Vec<[f64; 3]> = basis
            .iter()
            .filter_map(|&j| columns.get(j).copied().flatten())
            .map(|(_, p)| p)
            .filter(|p| p[0].is_finite())
            .collect();
        let mut priced: Vec<(f64, [f64; 3])> =
            columns.iter().flatten().filter(|(_, p)| p[0].is_finite()).map(|(a, p)| (reduced(a), *p)).collect();
        priced.sort_by(|x, y| x.0.total_cmp(&y.0));
        starts.extend(priced.iter().take(8).map(|(_, p)| *p));

        let mut added = 0;
        for s in starts {
            let (p, v) = compass_search(&rc_at, s);
            let a = space.atom(p[0], p[1], p[2]);
            // near-copies of existing columns only make the basis ill-conditioned
            let fresh = columns.iter().flatten().all(|(b, _)| distance(&a, b) > ATOM_SEPARATION);
            if v < -REDUCED_COST_TOL && fresh {
                lp.add_column(&rows.column(&a), cost(&a));
                columns.push(Some((a, p)));
                added += 1;
            }
        }
        if added == 0 {
            break;
        }
        outcome = lp.solve();
    }

    match outcome {
        LpOutcome::Optimal { x, objective, .. } => {
            let mut support: Vec<SupportPoint> = x
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 1e-12)
                .filter_map(|(j, &v)| {
                    columns[j].map(|(a, _)| SupportPoint { weight: v, behaviour: a.e, energies: a.w })
                })
                .collect();
            support.sort_by(|p, q| q.weight.total_cmp(&p.weight));
            Ok(Decomposition { value: objective.max(0.0), support, columns: lp.num_columns() })
        }
        LpOutcome::Infeasible { residual, .. } => Err(Error::LpInfeasible(format!(
            "E = {:?} is not a mixture of grid atoms within the average energies {:?} (residual {residual:e})",
            b.as_array(),
            energies.avg()
        ))),
        LpOutcome::Unbounded => Err(Error::Internal("decomposition LP reported unbounded".into())),
        LpOutcome::IterationLimit => Err(Error::Internal("decomposition LP hit its pivot limit".into())),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
}

fn seed_atoms(space: &AtomSpace, grid: usize) -> Vec<([f64; 2], [f64; 2], [f64; 3])> {
    let splittable = space.theta_pk[0] > 0.0 && space.theta_pk[1] > 0.0;
    let n_split = if splittable { ((grid as f64).cbrt() / 3.0).round().clamp(1.0, 9.0) as usize } else { 1 };
    let side = ((grid as f64 / n_split as f64).sqrt().round() as usize).max(2);
    let mut out = Vec::with_capacity(side * side * n_split);
    for spread in linspace(-1.0, 1.0, side) {
        for centre in linspace(-1.0, 1.0, side) {
            for split in linspace(0.0, 1.0, n_split) {
                let a = space.atom(spread, centre, split);
                out.push((a.e, a.w, [spread, centre, split]));
            }
        }
    }
    out
}

/// Coordinate pattern search on the box `[−1,1]² × [0,1]`.
fn compass_search(f: &dyn Fn([f64; 3]) -> f64, start: [f64; 3]) -> ([f64; 3], f64) {
    let clamp = |p: [f64; 3]| [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0), p[2].clamp(0.0, 1.0)];
    let mut p = clamp(start);
    let mut v = f(p);
    let mut step = 0.05;
    while step > 1e-10 {
        let mut improved = false;
        for axis in 0..3 {
            for dir in [1.0, -1.0] {
                let mut q = p;
                q[axis] += dir * step;
                let q = clamp(q);
                let fq = f(q);
                if fq < v {
                    p = q;
                    v = fq;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (p, v)
}
