//! The set of quantum behaviours `(E, ω)` reachable by qubit-like
//! prepare-and-measure devices under energy bounds.
//!
//! Membership is decided two ways: a closed form in angles (cross-checked at
//! every call against the equivalent scalar-product form) and a 4×4 Gram
//! matrix feasibility problem solved by [`enrand_sdp`].

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector3, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use enrand_sdp::{feasibility_slack, LmiBlock, SdpOptions, SdpProblem};

use crate::error::{Error, Result};

/// Default tolerance of the closed-form membership test.
pub const CLOSED_FORM_TOL: f64 = 1e-9;
/// Default feasibility margin of the SDP membership test.
pub const SDP_MARGIN: f64 = 1e-7;

const UNIT_SLACK: f64 = 1e-12;

/// Correlators `E_x = Pr(a=+1|x) − Pr(a=−1|x)` for inputs `x = 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Behaviour {
    e1: f64,
    e2: f64,
}

impl Behaviour {
    /// Values within 1e-12 of ±1 are snapped onto the interval.
    pub fn new(e1: f64, e2: f64) -> Result<Self> {
        let fix = |e: f64, name: &str| -> Result<f64> {
            if !e.is_finite() || e.abs() > 1.0 + UNIT_SLACK {
                return Err(Error::Domain(format!("{name} = {e} is outside [-1, 1]")));
            }
            Ok(e.clamp(-1.0, 1.0))
        };
        Ok(Self { e1: fix(e1, "E1")?, e2: fix(e2, "E2")? })
    }

    pub fn e1(&self) -> f64 {
        self.e1
    }

    pub fn e2(&self) -> f64 {
        self.e2
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.e1, self.e2]
    }

    pub fn get(&self, x: usize) -> f64 {
        [self.e1, self.e2][x]
    }

    /// Convex combination `(1 − t)·self + t·other`.
    pub fn mix(&self, other: &Behaviour, t: f64) -> Behaviour {
        Behaviour {
            e1: ((1.0 - t) * self.e1 + t * other.e1).clamp(-1.0, 1.0),
            e2: ((1.0 - t) * self.e2 + t * other.e2).clamp(-1.0, 1.0),
        }
    }
}

impl TryFrom<[f64; 2]> for Behaviour {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Behaviour::new(v[0], v[1])
    }
}

impl From<Behaviour> for [f64; 2] {
    fn from(b: Behaviour) -> Self {
        b.as_array()
    }
}

/// Average and peak energy bounds per input, `0 ≤ avg ≤ pk ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnergies", into = "RawEnergies")]
pub struct EnergyBounds {
    avg: [f64; 2],
    pk: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergies {
    avg: [f64; 2],
    pk: [f64; 2],
}

impl TryFrom<RawEnergies> for EnergyBounds {
    type Error = Error;
    fn try_from(r: RawEnergies) -> Result<Self> {
        EnergyBounds::new(r.avg, r.pk)
    }
}

impl From<EnergyBounds> for RawEnergies {
    fn from(e: EnergyBounds) -> Self {
        RawEnergies { avg: e.avg, pk: e.pk }
    }
}

impl EnergyBounds {
    /// Components above 1 are clamped to 1, which loses no generality since
    /// every energy is at most 1 for a unit-gap observable.
    pub fn new(avg: [f64; 2], pk: [f64; 2]) -> Result<Self> {
        let avg = clamp_energies(avg)?;
        let pk = clamp_energies(pk)?;
        for x in 0..2 {
            if avg[x] > pk[x] {
                return Err(Error::Domain(format!(
                    "average energy {} exceeds peak energy {} for input {}",
                    avg[x],
                    pk[x],
                    x + 1
                )));
            }
        }
        Ok(Self { avg, pk })
    }

    /// Peak bound only: the average bound coincides with it.
    pub fn peak_only(pk: [f64; 2]) -> Result<Self> {
        Self::new(pk, pk)
    }

    pub fn avg(&self) -> [f64; 2] {
        self.avg
    }

    pub fn pk(&self) -> [f64; 2] {
        self.pk
    }
}

/// Checks energies are finite and non-negative, clamping values above 1.
pub fn clamp_energies(w: [f64; 2]) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for x in 0..2 {
        if !w[x].is_finite() || w[x] < 0.0 {
            return Err(Error::Domain(format!("energy {} = {} must be a non-negative number", x + 1, w[x])));
        }
        out[x] = w[x].min(1.0);
    }
    Ok(out)
}

/// Which energy assumption defines the classical set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMode {
    MaxAverage,
    MaxPeak,
}

/// Qubit realization: state Bloch vectors `n1, n2`, measurement vector `m`
/// (`|m| ≤ 1`) and energy direction `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumRepresentation {
    pub n1: Vector3<f64>,
    pub n2: Vector3<f64>,
    pub m: Vector3<f64>,
    pub k: Vector3<f64>,
}

impl QuantumRepresentation {
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (name, v) in [("n1", &self.n1), ("n2", &self.n2), ("k", &self.k)] {
            if (v.norm() - 1.0).abs() > tol {
                return Err(Error::Domain(format!("{name} has norm {} (expected 1)", v.norm())));
            }
        }
        if self.m.norm() > 1.0 + tol {
            return Err(Error::Domain(format!("m has norm {} > 1", self.m.norm())));
        }
        Ok(())
    }

    pub fn states(&self) -> [Vector3<f64>; 2] {
        [self.n1, self.n2]
    }
}

/// Symmetric 4×4 matrix with unit diagonal indexed as (n1, n2, m, k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramMatrix(Matrix4<f64>);

impl GramMatrix {
    /// Builds the matrix from its six free entries, with `η` the energies
    /// saturating the peak constraint.
    pub fn from_entries(b: &Behaviour, eta: [f64; 2], u: f64, v: f64) -> Self {
        let mut g = Matrix4::identity();
        let mut set = |i: usize, j: usize, val: f64| {
            g[(i, j)] = val;
            g[(j, i)] = val;
        };
        set(0, 1, u);
        set(0, 2, b.e1);
        set(1, 2, b.e2);
        set(0, 3, 2.0 * eta[0] - 1.0);
        set(1, 3, 2.0 * eta[1] - 1.0);
        set(2, 3, v);
        Self(g)
    }

    /// Accepts any symmetric matrix with unit diagonal.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        for i in 0..4 {
            if m[(i, i)] != 1.0 {
                return Err(Error::Domain(format!("diagonal entry {i} is {} (expected 1)", m[(i, i)])));
            }
            for j in (i + 1)..4 {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Domain("Gram matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn correlators(&self) -> [f64; 2] {
        [self.0[(0, 2)], self.0[(1, 2)]]
    }

    /// `η_x` read from the `(x, k)` entries.
    pub fn energies(&self) -> [f64; 2] {
        [(self.0[(0, 3)] + 1.0) / 2.0, (self.0[(1, 3)] + 1.0) / 2.0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0).eigenvalues.min()
    }
}

fn half_angle(w: f64) -> f64 {
    w.clamp(0.0, 1.0).sqrt().asin()
}

/// Signed distance to the membership boundary in the angle form:
/// `2(asin√w₁ + asin√w₂) − |asin E₁ − asin E₂|`, or `+∞` when `w₁ + w₂ ≥ 1`.
pub fn closed_form_margin(b: &Behaviour, w: [f64; 2]) -> f64 {
    if w[0] + w[1] >= 1.0 {
        return f64::INFINITY;
    }
    2.0 * (half_angle(w[0]) + half_angle(w[1])) - (b.e1.asin() - b.e2.asin()).abs()
}

/// `½(√(1+E₁)√(1+E₂) + √(1−E₁)√(1−E₂)) − (√(1−w₁)√(1−w₂) − √(w₁w₂))`.
pub fn scalar_form_margin(b: &Behaviour, w: [f64; 2]) -> f64 {
    let (e1, e2) = (b.e1, b.e2);
    let lhs = 0.5 * ((1.0 + e1).sqrt() * (1.0 + e2).sqrt() + (1.0 - e1).sqrt() * (1.0 - e2).sqrt());
    let (w1, w2) = (w[0].clamp(0.0, 1.0), w[1].clamp(0.0, 1.0));
    let rhs = (1.0 - w1).sqrt() * (1.0 - w2).sqrt() - (w1 * w2).sqrt();
    lhs - rhs
}

// Below this magnitude a verdict flip between the two forms is a conditioning
// artefact (the scalar form is quadratic in the angle near w = 0).
const FORM_AGREEMENT_BAND: f64 = 1e-7;

pub fn in_quantum_set_closed_form(b: &Behaviour, w: [f64; 2], tol: f64) -> Result<bool> {
    if !(tol >= 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be non-negative")));
    }
    let w = clamp_energies(w)?;
    let angle = closed_form_margin(b, w);
    let scalar = scalar_form_margin(b, w);
    let by_angle = angle >= -tol;
    let by_scalar = scalar >= -tol;
    if by_angle != by_scalar && angle.abs() > FORM_AGREEMENT_BAND && scalar.abs() > FORM_AGREEMENT_BAND {
        return Err(Error::Internal(format!(
            "closed forms disagree at E = {:?}, w = {w:?}: angle margin {angle:e}, scalar margin {scalar:e}",
            b.as_array()
        )));
    }
    Ok(by_angle)
}

fn unit_pair(n: usize, i: usize, j: usize, val: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] += val;
    m[(j, i)] += val;
    m
}

/// Feasibility problem over `(u, v, η₁, η₂)` with `η_x ≤ w_x` whose LMI is
/// the Gram matrix.
pub fn gram_problem(b: &Behaviour, w: [f64; 2]) -> SdpProblem {
    let mut c = DMatrix::identity(4, 4);
    for (i, j, val) in [(0, 2, b.e1), (1, 2, b.e2), (0, 3, -1.0), (1, 3, -1.0)] {
        c[(i, j)] = val;
        c[(j, i)] = val;
    }
    let block = LmiBlock::new(c)
        .with_term(0, unit_pair(4, 0, 1, 1.0))
        .with_term(1, unit_pair(4, 2, 3, 1.0))
        .with_term(2, unit_pair(4, 0, 3, 2.0))
        .with_term(3, unit_pair(4, 1, 3, 2.0));
    let mut p = SdpProblem::new(4);
    p.add_block(block);
    p.set_upper(2, w[0]);
    p.set_upper(3, w[1]);
    p
}

/// Phase-I runs at tolerances well below any sensible margin, since the
/// optimal slack shrinks to ~1e-3 of the boundary distance near `w = 0`.
fn membership_options() -> SdpOptions {
    SdpOptions { gap_tol: 1e-11, feas_tol: 1e-11, max_iter: 200 }
}

pub fn in_quantum_set_sdp(b: &Behaviour, w: [f64; 2], tol: f64) -> Result<bool> {
    if !(tol >= 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be non-negative")));
    }
    let w = clamp_energies(w)?;
    Ok(feasibility_slack(&gram_problem(b, w), &membership_options())?.slack >= -tol)
}

/// First-order Euclidean distance from `(E, w)` to the curved membership
/// boundary `2(asin√w₁ + asin√w₂) = |asin E₁ − asin E₂|`.
pub fn boundary_distance(b: &Behaviour, w: [f64; 2]) -> f64 {
    let w = [w[0].clamp(0.0, 1.0), w[1].clamp(0.0, 1.0)];
    let margin = 2.0 * (half_angle(w[0]) + half_angle(w[1])) - (b.e1.asin() - b.e2.asin()).abs();
    let grad_sq = 1.0 / (1.0 - b.e1 * b.e1)
        + 1.0 / (1.0 - b.e2 * b.e2)
        + 1.0 / (w[0] * (1.0 - w[0]))
        + 1.0 / (w[1] * (1.0 - w[1]));
    if grad_sq.is_finite() {
        margin.abs() / grad_sq.sqrt()
    } else {
        0.0
    }
}

/// Largest-slack Gram matrix for `(b, w)`, or `None` when the behaviour lies
/// outside the set by more than `tol`.
pub fn gram_witness(b: &Behaviour, w: [f64; 2], tol: f64) -> Result<Option<GramMatrix>> {
    let w = clamp_energies(w)?;
    let p = gram_problem(b, w);
    let r = feasibility_slack(&p, &membership_options())?;
    if r.slack < -tol {
        return Ok(None);
    }
    let eta = [r.x[2].min(w[0]).max(0.0), r.x[3].min(w[1]).max(0.0)];
    Ok(Some(GramMatrix::from_entries(b, eta, r.x[0].clamp(-1.0, 1.0), r.x[1].clamp(-1.0, 1.0))))
}

/// Classical (deterministic hidden-variable) behaviours. Max-average:
/// `|E₁ − E₂| ≤ 2(ω₁ + ω₂)`; max-peak with `ω₁ + ω₂ < 1`: `E₁ = E₂`.
pub fn is_classical(b: &Behaviour, w: [f64; 2], mode: EnergyMode) -> bool {
    is_classical_tol(b, w, mode, CLOSED_FORM_TOL)
}

pub fn is_classical_tol(b: &Behaviour, w: [f64; 2], mode: EnergyMode, tol: f64) -> bool {
    let w = [w[0].clamp(0.0, 1.0), w[1].clamp(0.0, 1.0)];
    let gap = (b.e1 - b.e2).abs();
    match mode {
        EnergyMode::MaxAverage => gap <= 2.0 * (w[0] + w[1]) + tol,
        EnergyMode::MaxPeak => w[0] + w[1] >= 1.0 || gap <= tol,
    }
}

/// Largest `E₁ − E₂` over two inputs sharing energy `w`, halved:
/// `2√(w(1 − w))`.
pub fn max_violation(w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("energy {w} outside [0, 1]")));
    }
    Ok(2.0 * (w * (1.0 - w)).sqrt())
}

fn vector_from_row(q: &Matrix4<f64>, sqrt_l: &Vector4<f64>, i: usize) -> Vector4<f64> {
    Vector4::from_fn(|j, _| q[(i, j)] * sqrt_l[j])
}

/// Factorizes a PSD Gram matrix into Bloch data living in three dimensions.
pub fn representation_from_gram(g: &GramMatrix, tol: f64) -> Result<QuantumRepresentation> {
    let eig = SymmetricEigen::new(g.0);
    let lmin = eig.eigenvalues.min();
    if lmin < -tol {
        return Err(Error::NotPsd { min_eigenvalue: lmin });
    }
    let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut vecs: Vec<Vector4<f64>> = (0..4).map(|i| vector_from_row(&eig.eigenvectors, &sqrt_l, i)).collect();
    for v in &mut vecs {
        let n = v.norm();
        if n > 0.0 {
            *v /= n;
        }
    }
    let (n1, n2, m, k) = (vecs[0], vecs[1], vecs[2], vecs[3]);

    // orthonormal basis of span{n1, n2, k}
    let mut basis: Vec<Vector4<f64>> = Vec::with_capacity(3);
    for v in [n1, n2, k] {
        let mut r = v;
        for b in &basis {
            r -= b * b.dot(&r);
        }
        for b in &basis {
            r -= b * b.dot(&r);
        }
        let n = r.norm();
        if n > 1e-10 {
            basis.push(r / n);
        }
    }
    let coords = |v: &Vector4<f64>| -> Vector3<f64> {
        let mut c = Vector3::zeros();
        for (i, b) in basis.iter().enumerate() {
            c[i] = b.dot(v);
        }
        c
    };
    let unit = |v: Vector3<f64>| -> Vector3<f64> {
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            v
        }
    };
    let mut m3 = coords(&m);
    if m3.norm() > 1.0 {
        m3 /= m3.norm();
    }
    Ok(QuantumRepresentation { n1: unit(coords(&n1)), n2: unit(coords(&n2)), m: m3, k: unit(coords(&k)) })
}

/// Forward map `E_x = n_x·m`, `ω_x = (1 + n_x·k)/2`.
pub fn behaviour_from_representation(r: &QuantumRepresentation) -> (Behaviour, [f64; 2]) {
    let e = |n: &Vector3<f64>| n.dot(&r.m).clamp(-1.0, 1.0);
    let w = |n: &Vector3<f64>| ((1.0 + n.dot(&r.k)) / 2.0).clamp(0.0, 1.0);
    (Behaviour { e1: e(&r.n1), e2: e(&r.n2) }, [w(&r.n1), w(&r.n2)])
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Random qubit realization: uniform unit vectors, with `m` on the sphere
/// half of the time and inside the ball otherwise.
pub fn random_representation<R: Rng + ?Sized>(rng: &mut R) -> QuantumRepresentation {
    let m_dir = random_unit(rng);
    let radius: f64 = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>().cbrt() };
    QuantumRepresentation { n1: random_unit(rng), n2: random_unit(rng), m: m_dir * radius, k: random_unit(rng) }
}

/// Random realization whose energies are uniform on `[0, pk_x]`.
pub fn random_representation_below<R: Rng + ?Sized>(rng: &mut R, pk: [f64; 2]) -> QuantumRepresentation {
    let k = Vector3::new(0.0, 0.0, 1.0);
    let mut state = |cap: f64| {
        let w: f64 = cap * rng.random::<f64>();
        let z = 2.0 * w - 1.0;
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).max(0.0).sqrt();
        Vector3::new(s * phi.cos(), s * phi.sin(), z)
    };
    let n1 = state(pk[0]);
    let n2 = state(pk[1]);
    let m_dir = random_unit(rng);
    let radius: f64 = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>().cbrt() };
    QuantumRepresentation { n1, n2, m: m_dir * radius, k }
}
