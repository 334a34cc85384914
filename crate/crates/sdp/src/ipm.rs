//! Infeasible-start primal-dual path following with Nesterov–Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Works on `min c·x  s.t.  S_b = F_b0 + Σ x_i F_bi ⪰ 0` with dual variables
//! `Z_b ⪰ 0`, `Σ_b ⟨F_bi, Z_b⟩ = c_i`. Scalar constraints are 1×1 cones.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::schur::{Pattern, SchurSystem};

#[derive(Debug, Clone)]
pub(crate) struct Cone {
    pub f0: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl Cone {
    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.f0.clone();
        for (v, m) in &self.terms {
            out += m * x[*v];
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conic {
    pub m: usize,
    pub c: Vec<f64>,
    pub cones: Vec<Cone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Converged,
    Stalled,
    IterationLimit,
    Diverged,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub pobj: f64,
    pub pinf: f64,
    pub dinf: f64,
    pub relgap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

const STEP_FRACTION: f64 = 0.98;
const DIVERGENCE: f64 = 1e13;

struct Scaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    lambda: Vec<f64>,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// NT scaling point: `Rᵀ S R = Λ = R⁻¹ Z R⁻ᵀ`.
fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let n = s.nrows();
    if n == 1 {
        let (sv, zv) = (s[(0, 0)], z[(0, 0)]);
        if !(sv > 0.0 && zv > 0.0) {
            return None;
        }
        let r = (zv / sv).powf(0.25);
        return Some(Scaling {
            r: DMatrix::from_element(1, 1, r),
            r_inv: DMatrix::from_element(1, 1, 1.0 / r),
            lambda: vec![(sv * zv).sqrt()],
        });
    }
    let ls = s.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let p = lz.transpose() * &ls;
    let svd = p.svd(false, true);
    let v = svd.v_t?.transpose();
    let lambda: Vec<f64> = svd.singular_values.iter().copied().collect();
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let mut vl = v.clone();
    let mut vli = v.transpose();
    for k in 0..n {
        let sq = lambda[k].sqrt();
        for i in 0..n {
            vl[(i, k)] *= sq;
            vli[(k, i)] /= sq;
        }
    }
    // R = L_s^{-T} V Λ^{1/2};  R^{-1} = Λ^{-1/2} Vᵀ L_sᵀ
    let mut r = vl;
    ls.transpose().solve_upper_triangular_mut(&mut r);
    let r_inv = vli * ls.transpose();
    Some(Scaling { r, r_inv, lambda })
}

fn congruence(r: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    if r.nrows() == 1 {
        return DMatrix::from_element(1, 1, r[(0, 0)] * r[(0, 0)] * m[(0, 0)]);
    }
    let mut out = r.transpose() * m * r;
    symmetrize(&mut out);
    out
}

/// Solves Λ∘D = rhs for symmetric D (Λ diagonal).
fn lyapunov(lambda: &[f64], rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lambda.len();
    DMatrix::from_fn(n, n, |i, j| 2.0 * rhs[(i, j)] / (lambda[i] + lambda[j]))
}

/// Largest α with Λ + αΔ ⪰ 0 (∞ if unconstrained).
fn max_step(lambda: &[f64], delta: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let rho = if n == 1 {
        delta[(0, 0)] / lambda[0]
    } else {
        let m = DMatrix::from_fn(n, n, |i, j| delta[(i, j)] / (lambda[i] * lambda[j]).sqrt());
        SymmetricEigen::new(m).eigenvalues.min()
    };
    if rho < 0.0 {
        -1.0 / rho
    } else {
        f64::INFINITY
    }
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
}

pub(crate) fn run(prob: &Conic, settings: &IpmSettings) -> IpmResult {
    let m = prob.m;
    let nb = prob.cones.len();
    let total_dim: usize = prob.cones.iter().map(|c| c.dim()).sum::<usize>().max(1);
    let cone_vars: Vec<Vec<usize>> = prob.cones.iter().map(|c| c.terms.iter().map(|(v, _)| *v).collect()).collect();
    let pattern = Pattern::analyze(m, &cone_vars);

    let c_norm = prob.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let f0_norm = prob.cones.iter().map(|c| c.f0.norm_squared()).sum::<f64>().sqrt();
    let zeta = prob.c.iter().fold(1.0f64, |a, v| a.max(v.abs()));

    let mut x = vec![0.0; m];
    let mut s: Vec<DMatrix<f64>> = prob.cones.iter().map(|c| DMatrix::identity(c.dim(), c.dim())).collect();
    let mut z: Vec<DMatrix<f64>> = prob.cones.iter().map(|c| DMatrix::identity(c.dim(), c.dim()) * zeta).collect();

    let mut best: Option<(f64, IpmResult)> = None;
    let mut small_steps = 0usize;
    let mut status = IpmStatus::IterationLimit;
    let mut iter = 0usize;

    loop {
        // residuals and objectives
        let mut rp: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut pinf_sq = 0.0;
        let mut rd = prob.c.clone();
        let mut dobj = 0.0;
        let mut comp = 0.0;
        for (b, cone) in prob.cones.iter().enumerate() {
            let r = cone.evaluate(&x) - &s[b];
            pinf_sq += r.norm_squared();
            rp.push(r);
            for (v, f) in &cone.terms {
                rd[*v] -= inner(f, &z[b]);
            }
            dobj -= inner(&cone.f0, &z[b]);
            comp += inner(&s[b], &z[b]);
        }
        let pobj: f64 = prob.c.iter().zip(&x).map(|(a, b)| a * b).sum();
        let pinf = pinf_sq.sqrt() / (1.0 + f0_norm);
        let dinf = rd.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + c_norm);
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let relgap = (pobj - dobj).abs().max(comp.max(0.0)) / denom;
        let mu = comp / total_dim as f64;

        let snapshot =
            |status| IpmResult { status, x: x.clone(), z: z.clone(), pobj, pinf, dinf, relgap, iterations: iter };
        let merit = pinf.max(dinf).max(relgap);
        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((merit, snapshot(IpmStatus::Stalled)));
        }
        if pinf <= settings.feas_tol && dinf <= settings.feas_tol && relgap <= settings.gap_tol {
            return snapshot(IpmStatus::Converged);
        }
        let xmax = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let zmax = z.iter().map(|m| m.amax()).fold(0.0f64, f64::max);
        if !(xmax < DIVERGENCE && zmax < DIVERGENCE) || !pobj.is_finite() || !dobj.is_finite() {
            status = IpmStatus::Diverged;
            break;
        }
        if iter >= settings.max_iter {
            break;
        }
        iter += 1;

        // scaling and Schur matrix
        let mut scal = Vec::with_capacity(nb);
        for b in 0..nb {
            match nt_scaling(&s[b], &z[b]) {
                Some(sc) => scal.push(sc),
                None => {
                    status = IpmStatus::Stalled;
                    break;
                }
            }
        }
        if scal.len() != nb {
            break;
        }
        let mut schur = SchurSystem::new(&pattern);
        let mut g: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(nb);
        let mut p_scaled: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for (b, cone) in prob.cones.iter().enumerate() {
            let gb: Vec<DMatrix<f64>> = cone.terms.iter().map(|(_, f)| congruence(&scal[b].r, f)).collect();
            for (p, (vp, _)) in cone.terms.iter().enumerate() {
                for (q, (vq, _)) in cone.terms.iter().enumerate() {
                    if q < p {
                        continue;
                    }
                    let val = inner(&gb[p], &gb[q]);
                    schur.add(*vp, *vq, val);
                    if q != p {
                        schur.add(*vq, *vp, val);
                    }
                }
            }
            p_scaled.push(congruence(&scal[b].r, &rp[b]));
            g.push(gb);
        }
        let Some(fact) = schur.factor() else {
            status = IpmStatus::Stalled;
            break;
        };

        let solve_direction = |d: &[DMatrix<f64>]| -> Direction {
            let mut h: Vec<f64> = rd.iter().map(|v| -v).collect();
            for (b, cone) in prob.cones.iter().enumerate() {
                let t = &d[b] - &p_scaled[b];
                for (k, (v, _)) in cone.terms.iter().enumerate() {
                    h[*v] += inner(&g[b][k], &t);
                }
            }
            let dx = fact.solve(&h);
            let mut ds = Vec::with_capacity(nb);
            let mut dz = Vec::with_capacity(nb);
            for (b, cone) in prob.cones.iter().enumerate() {
                let mut dsb = p_scaled[b].clone();
                for (k, (v, _)) in cone.terms.iter().enumerate() {
                    dsb += &g[b][k] * dx[*v];
                }
                dz.push(&d[b] - &dsb);
                ds.push(dsb);
            }
            Direction { dx, ds, dz }
        };
        let step_lengths = |dir: &Direction| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for b in 0..nb {
                ap = ap.min(max_step(&scal[b].lambda, &dir.ds[b]));
                ad = ad.min(max_step(&scal[b].lambda, &dir.dz[b]));
            }
            (ap, ad)
        };

        // predictor
        let d_aff: Vec<DMatrix<f64>> = scal
            .iter()
            .map(|sc| {
                DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(sc.lambda.len(), sc.lambda.iter().map(|l| -l)))
            })
            .collect();
        let aff = solve_direction(&d_aff);
        let (ap, ad) = step_lengths(&aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for b in 0..nb {
            let n = scal[b].lambda.len();
            let lam = DMatrix::from_fn(n, n, |i, j| if i == j { scal[b].lambda[i] } else { 0.0 });
            mu_aff += inner(&(&lam + &aff.ds[b] * ap), &(&lam + &aff.dz[b] * ad));
        }
        mu_aff /= total_dim as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

        // corrector
        let d_cor: Vec<DMatrix<f64>> = (0..nb)
            .map(|b| {
                let lam = &scal[b].lambda;
                let n = lam.len();
                let cross = &aff.ds[b] * &aff.dz[b];
                let rhs = DMatrix::from_fn(n, n, |i, j| {
                    let base = if i == j { sigma * mu - lam[i] * lam[i] } else { 0.0 };
                    base - 0.5 * (cross[(i, j)] + cross[(j, i)])
                });
                lyapunov(lam, &rhs)
            })
            .collect();
        let dir = solve_direction(&d_cor);
        let (ap, ad) = step_lengths(&dir);
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);

        for (xi, dxi) in x.iter_mut().zip(&dir.dx) {
            *xi += ap * dxi;
        }
        for b in 0..nb {
            let sc = &scal[b];
            let n = sc.lambda.len();
            let mut snew = dir.ds[b].clone() * ap;
            let mut znew = dir.dz[b].clone() * ad;
            for i in 0..n {
                snew[(i, i)] += sc.lambda[i];
                znew[(i, i)] += sc.lambda[i];
            }
            let mut sb = sc.r_inv.transpose() * snew * &sc.r_inv;
            let mut zb = &sc.r * znew * sc.r.transpose();
            symmetrize(&mut sb);
            symmetrize(&mut zb);
            s[b] = sb;
            z[b] = zb;
        }

        if ap < 1e-7 && ad < 1e-7 {
            small_steps += 1;
            if small_steps >= 3 {
                status = IpmStatus::Stalled;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    // a diverging or stalled run still reports its best iterate
    let (_, mut out) = best.expect("at least one iterate is evaluated");
    out.status = status;
    out
}
