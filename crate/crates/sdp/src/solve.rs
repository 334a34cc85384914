use nalgebra::{DMatrix, DVector};

use crate::ipm::{self, Cone, Conic, IpmResult, IpmSettings, IpmStatus};
use crate::problem::{min_eigenvalue, SdpProblem, Sense};
use crate::SdpError;

/// Solver tolerances. Gap and feasibility are relative measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9, feas_tol: 1e-9, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Multipliers for every constraint of an [`SdpProblem`].
///
/// For an optimal solve these are the dual solution. For an infeasible solve
/// they form a Farkas certificate, see [`SdpProblem::verify_infeasibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    /// One PSD matrix per LMI block.
    pub blocks: Vec<DMatrix<f64>>,
    /// Nonnegative for `≤`/`≥` constraints, free for equalities.
    pub linear: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: Status,
    /// Primal point (best iterate when not optimal).
    pub x: Vec<f64>,
    pub duals: Duals,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal − dual| / (1 + |primal| + |dual|)`, or the complementarity
    /// if that is larger.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    /// Improving direction when `status == Unbounded`.
    pub ray: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    Block(usize),
    Linear(usize),
    Lower(usize),
    Upper(usize),
}

/// Problem after equality elimination (`x = x0 + N·z`) and cone scaling.
struct Reduced {
    conic: Conic,
    origins: Vec<Origin>,
    cone_scale: Vec<f64>,
    obj_scale: f64,
    x0: Vec<f64>,
    null_basis: Option<DMatrix<f64>>,
    eq_rows: Vec<usize>,
}

impl Reduced {
    fn lift(&self, z: &[f64]) -> Vec<f64> {
        match &self.null_basis {
            None => z.to_vec(),
            Some(n) => {
                let zv = DVector::from_column_slice(z);
                let x = n * zv;
                self.x0.iter().zip(x.iter()).map(|(a, b)| a + b).collect()
            }
        }
    }

    fn lift_direction(&self, z: &[f64]) -> Vec<f64> {
        match &self.null_basis {
            None => z.to_vec(),
            Some(n) => (n * DVector::from_column_slice(z)).iter().copied().collect(),
        }
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Builds the reduced conic form or returns an equality-inconsistency
/// certificate `ν` (with `Aᵀν = 0`, `ν·b > 0`).
fn reduce(p: &SdpProblem) -> Result<Reduced, Vec<f64>> {
    let nv = p.nv;
    let mut raw: Vec<(Origin, Cone)> = Vec::new();
    for (i, b) in p.blocks.iter().enumerate() {
        raw.push((Origin::Block(i), Cone { f0: b.constant.clone(), terms: b.terms.clone() }));
    }
    let mut eq_rows = Vec::new();
    for (i, c) in p.linear.iter().enumerate() {
        let sign = match c.sense {
            Sense::Ge => 1.0,
            Sense::Le => -1.0,
            Sense::Eq => {
                eq_rows.push(i);
                continue;
            }
        };
        let terms = merge_scalar_terms(c.coeffs.iter().map(|(v, a)| (*v, sign * a)));
        raw.push((Origin::Linear(i), Cone { f0: scalar(-sign * c.rhs), terms }));
    }
    for v in 0..nv {
        if let Some(lo) = p.lower[v] {
            raw.push((Origin::Lower(v), Cone { f0: scalar(-lo), terms: vec![(v, scalar(1.0))] }));
        }
        if let Some(hi) = p.upper[v] {
            raw.push((Origin::Upper(v), Cone { f0: scalar(hi), terms: vec![(v, scalar(-1.0))] }));
        }
    }

    let mut c = p.objective.clone();
    let mut x0 = vec![0.0; nv];
    let mut null_basis = None;
    let mut m = nv;
    if !eq_rows.is_empty() {
        let a = DMatrix::from_fn(eq_rows.len(), nv, |r, j| {
            p.linear[eq_rows[r]].coeffs.iter().filter(|(v, _)| *v == j).map(|(_, a)| a).sum()
        });
        let b = DVector::from_iterator(eq_rows.len(), eq_rows.iter().map(|&r| p.linear[r].rhs));
        let (xs, n) = affine_solution(&a, &b)?;
        x0 = xs.iter().copied().collect();
        m = n.ncols();
        for (_, cone) in raw.iter_mut() {
            let mut f0 = cone.f0.clone();
            for (v, f) in &cone.terms {
                f0 += f * x0[*v];
            }
            let mut terms = Vec::new();
            for j in 0..m {
                let mut acc = DMatrix::zeros(f0.nrows(), f0.ncols());
                for (v, f) in &cone.terms {
                    acc += f * n[(*v, j)];
                }
                if acc.amax() > 1e-14 {
                    terms.push((j, acc));
                }
            }
            *cone = Cone { f0, terms };
        }
        c = (n.transpose() * DVector::from_column_slice(&p.objective)).iter().copied().collect();
        null_basis = Some(n);
    }

    let mut origins = Vec::with_capacity(raw.len());
    let mut cones = Vec::with_capacity(raw.len());
    let mut cone_scale = Vec::with_capacity(raw.len());
    for (o, mut cone) in raw {
        let mut amax = cone.f0.amax();
        for (_, f) in &cone.terms {
            amax = amax.max(f.amax());
        }
        let s = if amax > 0.0 { 1.0 / amax } else { 1.0 };
        cone.f0 *= s;
        for (_, f) in &mut cone.terms {
            *f *= s;
        }
        origins.push(o);
        cones.push(cone);
        cone_scale.push(s);
    }
    let cmax = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let obj_scale = if cmax > 0.0 { cmax } else { 1.0 };
    let c = c.iter().map(|v| v / obj_scale).collect();
    Ok(Reduced { conic: Conic { m, c, cones }, origins, cone_scale, obj_scale, x0, null_basis, eq_rows })
}

fn merge_scalar_terms(it: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, DMatrix<f64>)> {
    let mut out: Vec<(usize, DMatrix<f64>)> = Vec::new();
    for (v, a) in it {
        if let Some((_, m)) = out.iter_mut().find(|(w, _)| *w == v) {
            m[(0, 0)] += a;
        } else {
            out.push((v, scalar(a)));
        }
    }
    out
}

/// Particular solution and null-space basis of `A x = b`.
fn affine_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), Vec<f64>> {
    let (rows, cols) = a.shape();
    // pad to at least square so that V spans the whole variable space
    let mut padded = DMatrix::zeros(rows.max(cols), cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(a);
    let svd = padded.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-11 * smax.max(1.0) * (rows.max(cols) as f64);
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let x = svd
        .solve(
            &{
                let mut bp = DVector::zeros(rows.max(cols));
                bp.rows_mut(0, rows).copy_from(b);
                bp
            },
            tol,
        )
        .expect("svd solve with computed factors");
    let resid = b - a * &x;
    if resid.norm() > 1e-9 * (1.0 + b.norm()) {
        return Err(resid.iter().copied().collect());
    }
    let null_idx: Vec<usize> = (0..cols).filter(|&k| svd.singular_values[k] <= tol).collect();
    debug_assert_eq!(null_idx.len(), cols - rank);
    let n = DMatrix::from_fn(cols, null_idx.len(), |i, j| vt[(null_idx[j], i)]);
    Ok((x, n))
}

fn settings(opts: &SdpOptions) -> IpmSettings {
    IpmSettings { gap_tol: opts.gap_tol, feas_tol: opts.feas_tol, max_iter: opts.max_iter }
}

/// Maps internal cone duals back to the user's constraints.
fn unpack_duals(p: &SdpProblem, red: &Reduced, z: &[DMatrix<f64>], objective: &[f64]) -> Duals {
    let mut d = Duals {
        blocks: p.blocks.iter().map(|b| DMatrix::zeros(b.dim(), b.dim())).collect(),
        linear: vec![0.0; p.linear.len()],
        lower: vec![0.0; p.nv],
        upper: vec![0.0; p.nv],
    };
    for (k, o) in red.origins.iter().enumerate() {
        let zk = &z[k] * (red.cone_scale[k] * red.obj_scale);
        match *o {
            Origin::Block(i) => d.blocks[i] = zk,
            Origin::Linear(i) => d.linear[i] = zk[(0, 0)],
            Origin::Lower(v) => d.lower[v] = zk[(0, 0)],
            Origin::Upper(v) => d.upper[v] = zk[(0, 0)],
        }
    }
    if !red.eq_rows.is_empty() {
        // equality multipliers from the stationarity residual
        let resid = p.stationarity_residual(objective, &d);
        let a = DMatrix::from_fn(red.eq_rows.len(), p.nv, |r, j| {
            p.linear[red.eq_rows[r]].coeffs.iter().filter(|(v, _)| *v == j).map(|(_, a)| a).sum()
        });
        let at = a.transpose();
        let svd = at.clone().svd(true, true);
        if let Ok(nu) = svd.solve(&DVector::from_column_slice(&resid), 1e-12) {
            for (r, &row) in red.eq_rows.iter().enumerate() {
                d.linear[row] = nu[r];
            }
        }
    }
    d
}

impl SdpProblem {
    /// Generalized constraint value `g(x) ≥ 0` data: constant and
    /// per-variable coefficient, for linear rows.
    fn linear_as_cone(&self, i: usize) -> (f64, f64) {
        let c = &self.linear[i];
        match c.sense {
            Sense::Ge => (-c.rhs, 1.0),
            Sense::Le => (c.rhs, -1.0),
            Sense::Eq => (c.rhs, 1.0),
        }
    }

    /// `c − Σ⟨F_i, Z⟩ − Σ (multiplier · coefficient)` over all constraints.
    pub fn stationarity_residual(&self, objective: &[f64], d: &Duals) -> Vec<f64> {
        let mut r = objective.to_vec();
        for (b, blk) in self.blocks.iter().enumerate() {
            for (v, f) in &blk.terms {
                r[*v] -= f.iter().zip(d.blocks[b].iter()).map(|(a, z)| a * z).sum::<f64>();
            }
        }
        for (i, c) in self.linear.iter().enumerate() {
            let (_, sign) = self.linear_as_cone(i);
            for (v, a) in &c.coeffs {
                r[*v] -= sign * a * d.linear[i];
            }
        }
        for v in 0..self.nv {
            r[v] -= d.lower[v] - d.upper[v];
        }
        r
    }

    /// Dual objective `−Σ⟨F_0, Z⟩ − Σ g_0·y + Σ ν·b`.
    pub fn dual_value(&self, d: &Duals) -> f64 {
        let mut val = 0.0;
        for (b, blk) in self.blocks.iter().enumerate() {
            val -= blk.constant.iter().zip(d.blocks[b].iter()).map(|(a, z)| a * z).sum::<f64>();
        }
        for (i, c) in self.linear.iter().enumerate() {
            let (g0, _) = self.linear_as_cone(i);
            val += match c.sense {
                Sense::Eq => g0 * d.linear[i],
                _ => -g0 * d.linear[i],
            };
        }
        for v in 0..self.nv {
            if let Some(lo) = self.lower[v] {
                val += lo * d.lower[v];
            }
            if let Some(hi) = self.upper[v] {
                val -= hi * d.upper[v];
            }
        }
        val
    }

    /// Checks a Farkas certificate: PSD/nonnegative multipliers whose
    /// combination cancels every variable and leaves a positive constant.
    pub fn verify_infeasibility(&self, d: &Duals, tol: f64) -> bool {
        let psd = d.blocks.iter().all(|z| min_eigenvalue(z) >= -tol);
        let nonneg = self.linear.iter().zip(&d.linear).all(|(c, y)| c.sense == Sense::Eq || *y >= -tol)
            && d.lower.iter().chain(&d.upper).all(|y| *y >= -tol);
        let zero = vec![0.0; self.nv];
        let resid = self.stationarity_residual(&zero, d);
        let mut size = d.blocks.iter().map(|z| z.amax()).fold(0.0f64, f64::max);
        size = d.linear.iter().chain(&d.lower).chain(&d.upper).fold(size, |a, v| a.max(v.abs()));
        let cancels = resid.iter().all(|r| r.abs() <= tol * (1.0 + size));
        psd && nonneg && cancels && self.dual_value(d) > tol * (1.0 + size)
    }

    /// Checks an unbounded direction: it keeps every constraint satisfied
    /// and strictly decreases the objective.
    pub fn verify_ray(&self, ray: &[f64], tol: f64) -> bool {
        let scale = ray.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            return false;
        }
        let d: Vec<f64> = ray.iter().map(|v| v / scale).collect();
        let blocks_ok = self.blocks.iter().all(|b| {
            let mut m = DMatrix::zeros(b.dim(), b.dim());
            for (v, f) in &b.terms {
                m += f * d[*v];
            }
            min_eigenvalue(&m) >= -tol
        });
        let lin_ok = self.linear.iter().all(|c| {
            let s = c.lhs(&d);
            match c.sense {
                Sense::Le => s <= tol,
                Sense::Ge => s >= -tol,
                Sense::Eq => s.abs() <= tol,
            }
        });
        let bounds_ok =
            (0..self.nv).all(|v| (self.lower[v].is_none() || d[v] >= -tol) && (self.upper[v].is_none() || d[v] <= tol));
        blocks_ok && lin_ok && bounds_ok && self.objective_value(&d) < -tol
    }
}

/// Phase-I conic: maximize t subject to every cone shifted by −t·I, t ≤ 1.
fn phase_one(conic: &Conic) -> Conic {
    let t = conic.m;
    let mut cones: Vec<Cone> = conic
        .cones
        .iter()
        .map(|c| {
            let mut terms = c.terms.clone();
            terms.push((t, -DMatrix::identity(c.dim(), c.dim())));
            Cone { f0: c.f0.clone(), terms }
        })
        .collect();
    cones.push(Cone { f0: scalar(1.0), terms: vec![(t, scalar(-1.0))] });
    let mut c = vec![0.0; conic.m + 1];
    c[t] = -1.0;
    Conic { m: conic.m + 1, c, cones }
}

/// Ray problem: minimize c·d over the recession cone, with c·d ≥ −1.
fn ray_problem(conic: &Conic) -> Conic {
    let mut cones: Vec<Cone> =
        conic.cones.iter().map(|c| Cone { f0: DMatrix::zeros(c.dim(), c.dim()), terms: c.terms.clone() }).collect();
    let terms = conic.c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, scalar(*v))).collect();
    cones.push(Cone { f0: scalar(1.0), terms });
    Conic { m: conic.m, c: conic.c.clone(), cones }
}

const CLASSIFY_MERIT: f64 = 1e-6;

/// Solves the problem; see [`Status`] for outcomes.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    let red = match reduce(p) {
        Ok(r) => r,
        Err(nu) => return Ok(equality_infeasible(p, nu)),
    };
    let res = ipm::run(&red.conic, &settings(opts));
    let x = red.lift(&res.x);
    let duals = unpack_duals(p, &red, &res.z, &p.objective);
    let mut sol = SdpSolution {
        status: Status::Optimal,
        primal_objective: p.objective_value(&x),
        dual_objective: p.dual_value(&duals),
        x,
        duals,
        gap: res.relgap,
        primal_infeasibility: res.pinf,
        dual_infeasibility: res.dinf,
        iterations: res.iterations,
        ray: None,
    };
    if res.status == IpmStatus::Converged {
        return Ok(sol);
    }
    sol.status = Status::NumericalFailure;
    let merit = res.pinf.max(res.dinf).max(res.relgap);
    if merit <= CLASSIFY_MERIT && res.status != IpmStatus::Diverged {
        return Ok(sol);
    }

    let ph1 = ipm::run(&phase_one(&red.conic), &settings(opts));
    let t = ph1.x[red.conic.m];
    if ph1.status == IpmStatus::Converged && t < -10.0 * opts.feas_tol {
        let z: Vec<DMatrix<f64>> = ph1.z[..red.conic.cones.len()].to_vec();
        let zero = vec![0.0; p.nv];
        let cert = unpack_duals_feasibility(p, &red, &z, &zero);
        sol.status = Status::Infeasible;
        sol.duals = cert;
        return Ok(sol);
    }
    let rp = ipm::run(&ray_problem(&red.conic), &settings(opts));
    if rp.status == IpmStatus::Converged && rp.pobj < -0.5 {
        let ray = red.lift_direction(&rp.x);
        if p.verify_ray(&ray, 1e-7) {
            sol.status = Status::Unbounded;
            sol.ray = Some(ray);
        }
    }
    Ok(sol)
}

fn unpack_duals_feasibility(p: &SdpProblem, red: &Reduced, z: &[DMatrix<f64>], zero: &[f64]) -> Duals {
    let scaled = Reduced {
        conic: Conic { m: 0, c: Vec::new(), cones: Vec::new() },
        origins: red.origins.clone(),
        cone_scale: red.cone_scale.clone(),
        obj_scale: 1.0,
        x0: red.x0.clone(),
        null_basis: red.null_basis.clone(),
        eq_rows: red.eq_rows.clone(),
    };
    unpack_duals(p, &scaled, z, zero)
}

fn equality_infeasible(p: &SdpProblem, nu: Vec<f64>) -> SdpSolution {
    let mut linear = vec![0.0; p.linear.len()];
    let mut k = 0;
    for (i, c) in p.linear.iter().enumerate() {
        if c.sense == Sense::Eq {
            linear[i] = nu[k];
            k += 1;
        }
    }
    let duals = Duals {
        blocks: p.blocks.iter().map(|b| DMatrix::zeros(b.dim(), b.dim())).collect(),
        linear,
        lower: vec![0.0; p.nv],
        upper: vec![0.0; p.nv],
    };
    SdpSolution {
        status: Status::Infeasible,
        x: vec![0.0; p.nv],
        primal_objective: f64::NAN,
        dual_objective: p.dual_value(&duals),
        duals,
        gap: f64::NAN,
        primal_infeasibility: f64::NAN,
        dual_infeasibility: f64::NAN,
        iterations: 0,
        ray: None,
    }
}

/// Result of the phase-I problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Optimal slack `t*`: the largest `t` with every block ⪰ `t·I` and every
    /// scalar constraint ≥ `t` (after per-block normalization), capped at 1.
    pub slack: f64,
    /// Witness point attaining the slack.
    pub x: Vec<f64>,
}

/// Computes the phase-I slack. Each block is normalized to unit max-entry
/// before shifting, so the sign of the slack is invariant under positive
/// rescaling of any block.
pub fn feasibility_slack(p: &SdpProblem, opts: &SdpOptions) -> Result<FeasibilityReport, SdpError> {
    p.validate()?;
    let red = match reduce(p) {
        Ok(r) => r,
        Err(_) => return Ok(FeasibilityReport { slack: f64::NEG_INFINITY, x: vec![0.0; p.nv] }),
    };
    if red.conic.cones.is_empty() {
        return Ok(FeasibilityReport { slack: 1.0, x: red.lift(&vec![0.0; red.conic.m]) });
    }
    let res: IpmResult = ipm::run(&phase_one(&red.conic), &settings(opts));
    let merit = res.pinf.max(res.dinf).max(res.relgap);
    if res.status != IpmStatus::Converged && merit > CLASSIFY_MERIT {
        return Err(SdpError::Solver {
            status: Status::NumericalFailure,
            detail: format!("phase-I stopped after {} iterations (residual {:.2e})", res.iterations, merit),
        });
    }
    let slack = res.x[red.conic.m];
    Ok(FeasibilityReport { slack, x: red.lift(&res.x[..red.conic.m]) })
}

/// True iff the phase-I slack is at least `−margin`.
pub fn check_feasible(p: &SdpProblem, margin: f64) -> Result<bool, SdpError> {
    Ok(feasibility_slack(p, &SdpOptions::default())?.slack >= -margin)
}
