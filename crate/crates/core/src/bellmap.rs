//! Dictionary between prepare-and-measure behaviours and two-party CHSH
//! correlators, used as an independent check of the quantum-set tests.
//!
//! The energy observable plays the role of a second observable on the
//! measurement side: `⟨A_x B₁⟩ = E_x`, `⟨A_x B₂⟩ = 2η_x − 1` with `η_x ≤ ω_x`.

use enrand_sdp::{LmiBlock, SdpOptions, SdpProblem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qset::Behaviour;

/// Correlators `(⟨A₁B₁⟩, ⟨A₁B₂⟩, ⟨A₂B₁⟩, ⟨A₂B₂⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BellBehaviour {
    c: [f64; 4],
}

impl TryFrom<[f64; 4]> for BellBehaviour {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Self::new(c)
    }
}

impl From<BellBehaviour> for [f64; 4] {
    fn from(b: BellBehaviour) -> Self {
        b.c
    }
}

impl BellBehaviour {
    pub fn new(c: [f64; 4]) -> Result<Self> {
        if c.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Domain(format!("correlators {c:?} must lie in [-1, 1]")));
        }
        Ok(Self { c })
    }

    pub fn correlators(&self) -> [f64; 4] {
        self.c
    }

    /// `⟨A_x B_y⟩` for `x, y ∈ {0, 1}`.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.c[2 * x + y]
    }
}

/// Image with the energy correlators saturated, `⟨A_x B₂⟩ = 2ω_x − 1`.
pub fn pm_to_bell(b: &Behaviour, w: [f64; 2]) -> Result<BellBehaviour> {
    if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain(format!("energies {w:?} outside [0, 1]")));
    }
    BellBehaviour::new([b.e1(), 2.0 * w[0] - 1.0, b.e2(), 2.0 * w[1] - 1.0])
}

/// `±(⟨A₁B₁⟩ − ⟨A₂B₁⟩) − ⟨A₁B₂⟩ − ⟨A₂B₂⟩`.
pub fn chsh_values(bb: &BellBehaviour) -> [f64; 2] {
    let [a1b1, a1b2, a2b1, a2b2] = bb.c;
    let d = a1b1 - a2b1;
    [d - a1b2 - a2b2, -d - a1b2 - a2b2]
}

/// Gram matrix of unit vectors `(A₁, A₂, B₁, B₂)` as an affine function of
/// the free overlaps `u = A₁·A₂`, `v = B₁·B₂` and, when `energy_vars` is set,
/// of `η₁, η₂` entering through `⟨A_x B₂⟩ = 2η_x − 1`.
fn tsirelson_block(c: [f64; 4], energy_vars: bool) -> LmiBlock {
    let sym = |m: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
        m[(i, j)] = v;
        m[(j, i)] = v;
    };
    let mut base = DMatrix::identity(4, 4);
    sym(&mut base, 0, 2, c[0]);
    sym(&mut base, 1, 2, c[2]);
    let mut terms = Vec::new();
    let unit = |i: usize, j: usize, v: f64| {
        let mut m = DMatrix::zeros(4, 4);
        sym(&mut m, i, j, v);
        m
    };
    terms.push((0, unit(0, 1, 1.0)));
    terms.push((1, unit(2, 3, 1.0)));
    if energy_vars {
        sym(&mut base, 0, 3, -1.0);
        sym(&mut base, 1, 3, -1.0);
        terms.push((2, unit(0, 3, 2.0)));
        terms.push((3, unit(1, 3, 2.0)));
    } else {
        sym(&mut base, 0, 3, c[1]);
        sym(&mut base, 1, 3, c[3]);
    }
    let mut block = LmiBlock::new(base);
    for (var, m) in terms {
        block = block.with_term(var, m);
    }
    block
}

fn feasible(p: &SdpProblem, tol: f64) -> Result<bool> {
    let opts = SdpOptions { gap_tol: 1e-11, feas_tol: 1e-11, ..SdpOptions::default() };
    let r = enrand_sdp::feasibility_slack(p, &opts)?;
    Ok(r.slack >= -tol)
}

/// Tsirelson's criterion: some unit vectors realize the four correlators.
pub fn bell_quantum_membership(bb: &BellBehaviour, tol: f64) -> Result<bool> {
    let mut p = SdpProblem::new(2);
    p.add_block(tsirelson_block(bb.c, false));
    feasible(&p, tol)
}

/// Membership of `(E, ω)` decided on the Bell side, with the energy
/// correlators free below their bounds, `⟨A_x B₂⟩ ≤ 2ω_x − 1`.
pub fn pm_membership_via_bell(b: &Behaviour, w: [f64; 2], tol: f64) -> Result<bool> {
    if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain(format!("energies {w:?} outside [0, 1]")));
    }
    let mut p = SdpProblem::new(4);
    p.add_block(tsirelson_block([b.e1(), 0.0, b.e2(), 0.0], true));
    p.set_upper(2, w[0]);
    p.set_upper(3, w[1]);
    feasible(&p, tol)
}

/// Classicality on the Bell side: both CHSH values at most 2.
pub fn bell_classical(bb: &BellBehaviour, tol: f64) -> bool {
    chsh_values(bb).iter().all(|v| *v <= 2.0 + tol)
}
