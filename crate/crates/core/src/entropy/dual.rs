//! Dual programs: the best affine function `α + β·E + γ·ω` lying below a
//! minimum of affine pieces `r₀ + r·E` everywhere on the peak-energy set.
//!
//! For each piece the pointwise inequality is a 4×4 LMI in the Gram
//! matrix of the realization: `A(α − r₀, β − r) + C(γ + γ′) + diag(δ) ⪯ 0`
//! with `Σδ + γ′·ω_pk ≥ 0` and `γ′ ≤ 0`. `Tr[A(a, b)Γ] = a + b·E` and
//! `Tr[C(g)Γ] = g·η` make the LMI imply the inequality on every member.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};

use enrand_sdp::{solve, LinearConstraint, LmiBlock, SdpOptions, SdpProblem, Sense, Status};

use super::{chords, target_is_reachable, AverageConstraint, DualCertificate, EntropyProblem, Target};
use crate::error::{Error, Result};
use crate::qset::{Behaviour, EnergyBounds};

/// `r₀ + r·E`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    r0: f64,
    r: [f64; 2],
}

/// `A(a, b)`: `a/4` on the diagonal, `b_x/2` at `(x, m)`.
fn a_matrix(a: f64, b: [f64; 2]) -> Matrix4<f64> {
    let mut m = Matrix4::identity() * (a / 4.0);
    for x in 0..2 {
        m[(x, 2)] = b[x] / 2.0;
        m[(2, x)] = b[x] / 2.0;
    }
    m
}

/// `C(g)`: `(g₁ + g₂)/8` on the diagonal, `g_x/4` at `(x, k)`.
fn c_matrix(g: [f64; 2]) -> Matrix4<f64> {
    let mut m = Matrix4::identity() * ((g[0] + g[1]) / 8.0);
    for x in 0..2 {
        m[(x, 3)] = g[x] / 4.0;
        m[(3, x)] = g[x] / 4.0;
    }
    m
}

fn dyn4(m: Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

/// Variable layout of one dual program.
struct Layout {
    beta_dir: Option<[f64; 2]>,
    gamma_weights: Option<[f64; 2]>,
    n_global: usize,
}

impl Layout {
    fn new(target: &Target, average: &AverageConstraint) -> Self {
        let beta_dir = match target {
            Target::Behaviour(_) => None,
            Target::Functional { coeffs, .. } => Some(*coeffs),
        };
        let gamma_weights = match average {
            AverageConstraint::PerInput => None,
            AverageConstraint::Weighted(w) => Some(*w),
        };
        let n_global = 1 + if beta_dir.is_some() { 1 } else { 2 } + if gamma_weights.is_some() { 1 } else { 2 };
        Self { beta_dir, gamma_weights, n_global }
    }

    fn beta_vars(&self) -> std::ops::Range<usize> {
        1..if self.beta_dir.is_some() { 2 } else { 3 }
    }

    fn gamma_vars(&self) -> std::ops::Range<usize> {
        self.beta_vars().end..self.n_global
    }

    fn beta(&self, x: &[f64]) -> [f64; 2] {
        match self.beta_dir {
            Some(c) => [x[1] * c[0], x[1] * c[1]],
            None => [x[1], x[2]],
        }
    }

    fn beta_coeff(&self, var: usize) -> [f64; 2] {
        match self.beta_dir {
            Some(c) => c,
            None => {
                let mut e = [0.0; 2];
                e[var - 1] = 1.0;
                e
            }
        }
    }

    fn gamma_coeff(&self, var: usize) -> [f64; 2] {
        match self.gamma_weights {
            Some(w) => w,
            None => {
                let mut e = [0.0; 2];
                e[var - self.gamma_vars().start] = 1.0;
                e
            }
        }
    }

    fn piece_base(&self, j: usize) -> usize {
        self.n_global + 6 * j
    }
}

fn build(pieces: &[Piece], prob: &EntropyProblem, layout: &Layout) -> SdpProblem {
    let pk = prob.energies.pk();
    let avg = prob.energies.avg();
    let nv = layout.n_global + 6 * pieces.len();
    let mut p = SdpProblem::new(nv);

    // maximize α + β·E + γ·ω_avg
    p.set_objective_coeff(0, -1.0);
    match prob.target {
        Target::Behaviour(b) => {
            p.set_objective_coeff(1, -b.e1());
            p.set_objective_coeff(2, -b.e2());
        }
        Target::Functional { value, .. } => p.set_objective_coeff(1, -value),
    }
    for v in layout.gamma_vars() {
        let g = layout.gamma_coeff(v);
        p.set_objective_coeff(v, -(g[0] * avg[0] + g[1] * avg[1]));
        p.set_upper(v, 0.0);
    }

    let alpha_m = dyn4(-a_matrix(1.0, [0.0; 2]));
    let beta_m: Vec<(usize, DMatrix<f64>)> =
        layout.beta_vars().map(|v| (v, dyn4(-a_matrix(0.0, layout.beta_coeff(v))))).collect();
    let gamma_m: Vec<(usize, DMatrix<f64>)> =
        layout.gamma_vars().map(|v| (v, dyn4(-c_matrix(layout.gamma_coeff(v))))).collect();
    let gp_m = [dyn4(-c_matrix([1.0, 0.0])), dyn4(-c_matrix([0.0, 1.0]))];

    for (j, piece) in pieces.iter().enumerate() {
        let base = layout.piece_base(j);
        // −[A(α − r₀, β − r) + C(γ + γ′) + diag(δ)] ⪰ 0
        let mut blk = LmiBlock::new(dyn4(a_matrix(piece.r0, piece.r))).with_term(0, alpha_m.clone());
        for (v, m) in beta_m.iter().chain(gamma_m.iter()) {
            blk.add_term(*v, m.clone());
        }
        for x in 0..2 {
            blk.add_term(base + x, gp_m[x].clone());
            p.set_upper(base + x, 0.0);
        }
        for i in 0..4 {
            let mut d = DMatrix::zeros(4, 4);
            d[(i, i)] = -1.0;
            blk.add_term(base + 2 + i, d);
        }
        p.add_block(blk);
        // Σδ + γ′·ω_pk ≥ 0
        let mut row: Vec<(usize, f64)> = (0..4).map(|i| (base + 2 + i, 1.0)).collect();
        for x in 0..2 {
            if pk[x] != 0.0 {
                row.push((base + x, pk[x]));
            }
        }
        p.add_linear(LinearConstraint::new(row, Sense::Ge, 0.0));
    }
    p
}

fn piece_matrix(
    alpha: f64,
    beta: [f64; 2],
    gamma: [f64; 2],
    piece: &Piece,
    gp: [f64; 2],
    delta: [f64; 4],
) -> Matrix4<f64> {
    let mut m = a_matrix(alpha - piece.r0, [beta[0] - piece.r[0], beta[1] - piece.r[1]])
        + c_matrix([gamma[0] + gp[0], gamma[1] + gp[1]]);
    for i in 0..4 {
        m[(i, i)] += delta[i];
    }
    m
}

fn largest_eigenvalue(m: &Matrix4<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.max()
}

struct Repaired {
    alpha: f64,
    beta: [f64; 2],
    gamma: [f64; 2],
    /// Scalars along the functional direction and the average weights.
    beta_scale: Option<f64>,
    gamma_scale: Option<f64>,
}

/// Moves a solver point onto the exactly feasible side: clamps the sign
/// constraints, restores each linear row through `δ`, then lowers `α` until
/// every piece's LMI holds.
fn repair(x: &[f64], pieces: &[Piece], layout: &Layout, pk: [f64; 2]) -> Repaired {
    let mut alpha = x[0];
    let beta = layout.beta(x);
    let g0 = layout.gamma_vars().start;
    let gamma_scale = layout.gamma_weights.map(|_| x[g0].min(0.0));
    let gamma = match (layout.gamma_weights, gamma_scale) {
        (Some(w), Some(s)) => [s * w[0], s * w[1]],
        _ => [x[g0].min(0.0), x[g0 + 1].min(0.0)],
    };
    let mut blocks = Vec::with_capacity(pieces.len());
    for j in 0..pieces.len() {
        let base = layout.piece_base(j);
        let gp = [x[base].min(0.0), x[base + 1].min(0.0)];
        let mut delta = [x[base + 2], x[base + 3], x[base + 4], x[base + 5]];
        let row = |d: &[f64; 4]| d.iter().sum::<f64>() + gp[0] * pk[0] + gp[1] * pk[1];
        let mut lhs = row(&delta);
        while lhs < 0.0 {
            delta[3] += (-lhs).max(f64::EPSILON * (1.0 + delta[3].abs()));
            lhs = row(&delta);
        }
        blocks.push((gp, delta));
    }
    for _ in 0..60 {
        let mut worst = f64::NEG_INFINITY;
        let mut scale: f64 = 1.0;
        for (piece, (gp, delta)) in pieces.iter().zip(&blocks) {
            let m = piece_matrix(alpha, beta, gamma, piece, *gp, *delta);
            worst = worst.max(largest_eigenvalue(&m));
            scale = scale.max(m.amax());
        }
        let margin = 64.0 * f64::EPSILON * scale;
        if worst <= -margin {
            break;
        }
        // α enters every block as (α/4)·I
        alpha -= 4.0 * (worst + 2.0 * margin);
    }
    Repaired { alpha, beta, gamma, beta_scale: layout.beta_dir.map(|_| x[1]), gamma_scale }
}

fn objective_at(prob: &EntropyProblem, r: &Repaired) -> f64 {
    let avg = prob.energies.avg();
    let target_part = match prob.target {
        Target::Behaviour(b) => r.beta[0] * b.e1() + r.beta[1] * b.e2(),
        Target::Functional { value, .. } => r.beta_scale.unwrap_or(0.0) * value,
    };
    let gamma_part = match (prob.average, r.gamma_scale) {
        (AverageConstraint::Weighted(w), Some(g)) => g * (w[0] * avg[0] + w[1] * avg[1]),
        _ => r.gamma[0] * avg[0] + r.gamma[1] * avg[1],
    };
    r.alpha + target_part + gamma_part
}

// Distances kept from |E| = 1 and from zero energies when building the
// program, tried in turn. Targets there have no strictly feasible
// decomposition and the interior-point iteration stalls on an unbounded
// optimal face; the larger shift costs a little tightness.
const INTERIOR_SHIFTS: [f64; 2] = [1e-7, 1e-5];

/// The problem with the target pulled off `|E_x| = 1` and zero energy bounds
/// raised to `shift`. A certificate repaired against the larger peak bounds
/// stays valid for the original ones, and it is evaluated at the original
/// target afterwards.
fn interior_relaxation(prob: &EntropyProblem, shift: f64) -> Result<EntropyProblem> {
    let mut out = *prob;
    if let Target::Behaviour(b) = prob.target {
        let lim = 1.0 - shift;
        out.target = Target::Behaviour(Behaviour::new(b.e1().clamp(-lim, lim), b.e2().clamp(-lim, lim))?);
    }
    let raise = |v: [f64; 2]| v.map(|w| w.max(shift));
    out.energies = EnergyBounds::new(raise(prob.energies.avg()), raise(prob.energies.pk()))?;
    Ok(out)
}

// the repaired certificate is valid whatever the gap; this only guards tightness
const ACCEPTED_GAP: f64 = 1e-3;

/// Solves the dual for `pieces` and returns a repaired certificate, or the
/// fallback if that is better.
fn certified_affine_bound(
    pieces: &[Piece],
    prob: &EntropyProblem,
    fallback: DualCertificate,
) -> Result<DualCertificate> {
    target_is_reachable(prob)?;
    if let Target::Functional { coeffs, .. } = prob.target {
        if coeffs[0] == 0.0 && coeffs[1] == 0.0 {
            return Err(Error::Domain("functional coefficients must not both vanish".into()));
        }
    }
    if let AverageConstraint::Weighted(w) = prob.average {
        if w.iter().any(|v| !(*v >= 0.0)) || w[0] + w[1] == 0.0 {
            return Err(Error::Domain(format!("average weights {w:?} must be non-negative and not all zero")));
        }
    }
    let layout = Layout::new(&prob.target, &prob.average);
    let mut last_gap = f64::NAN;
    let mut last_status = Status::NumericalFailure;
    for shift in INTERIOR_SHIFTS {
        let relaxed = interior_relaxation(prob, shift)?;
        let sol = solve(&build(pieces, &relaxed, &layout), &SdpOptions::default())?;
        match sol.status {
            Status::Optimal => {}
            Status::NumericalFailure if sol.gap <= ACCEPTED_GAP => {}
            Status::Unbounded => {
                return Err(Error::InfeasibleBehaviour(
                    "the dual program is unbounded, so no decomposition meets the constraints".into(),
                ))
            }
            status => {
                (last_gap, last_status) = (sol.gap, status);
                continue;
            }
        }
        let r = repair(&sol.x, pieces, &layout, relaxed.energies.pk());
        let value = objective_at(prob, &r);
        let cert = DualCertificate { alpha: r.alpha, beta: r.beta, gamma: r.gamma, value };
        return Ok(if value.is_finite() && value > fallback.value { cert } else { fallback });
    }
    Err(Error::Solver { status: last_status, detail: format!("entropy dual stopped with relative gap {last_gap:e}") })
}

/// Lower bound `H_k*` on the worst-case conditional Shannon entropy using
/// `k` chords per input (`k²` pieces), with the certificate achieving it.
pub fn entropy_lower_bound(prob: &EntropyProblem) -> Result<(f64, DualCertificate)> {
    let family = chords(prob.segments)?;
    let p = prob.inputs.as_array();
    let mut pieces = Vec::with_capacity(family.len() * family.len());
    for &(c1, d1) in family.lines() {
        for &(c2, d2) in family.lines() {
            pieces.push(Piece { r0: p[0] * d1 + p[1] * d2, r: [p[0] * c1, p[1] * c2] });
        }
    }
    let cert = certified_affine_bound(&pieces, prob, DualCertificate::zero())?;
    Ok((cert.value, cert))
}

/// Lower bound on the worst-case min-entropy `−log₂ G*`, with a certificate
/// for the affine bound on `−G`.
pub fn min_entropy_bound(prob: &EntropyProblem) -> Result<(f64, DualCertificate)> {
    let p = prob.inputs.as_array();
    // −G(E) = min over output guesses (a₁, a₂) of −Σ_x p(x)(1 + a_x E_x)/2
    let mut pieces = Vec::with_capacity(4);
    for a1 in [1.0, -1.0] {
        for a2 in [1.0, -1.0] {
            pieces.push(Piece { r0: -0.5, r: [-p[0] * a1 / 2.0, -p[1] * a2 / 2.0] });
        }
    }
    let trivial = DualCertificate { alpha: -1.0, beta: [0.0; 2], gamma: [0.0; 2], value: -1.0 };
    let cert = certified_affine_bound(&pieces, prob, trivial)?;
    let guess = (-cert.value).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(((-guess.log2()).max(0.0), cert))
}
