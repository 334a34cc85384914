//! Dense revised simplex for `min c·x  s.t.  A x = b, x ≥ 0` with few rows
//! and many columns. The basis inverse is recomputed at every pivot, which is
//! cheap for the ≤ 6 rows used here.

use nalgebra::DMatrix;

const PIVOT_TOL: f64 = 1e-11;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 20_000;
// degenerate pivots tolerated before switching to Bland's rule for good
const DEGENERATE_LIMIT: usize = 50;
// pivots without objective progress before the basis is accepted as optimal
const STALL_LIMIT: usize = 500;

pub(crate) struct Lp {
    m: usize,
    cols: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        basis: Vec<usize>,
        objective: f64,
        /// Row multipliers `y` with reduced costs `c_j − y·A_j ≥ 0`.
        duals: Vec<f64>,
    },
    /// Phase 1 ended with positive artificials; `duals` price columns for it.
    Infeasible {
        residual: f64,
        basis: Vec<usize>,
        duals: Vec<f64>,
    },
    Unbounded,
    IterationLimit,
}

impl Lp {
    pub(crate) fn new(rhs: Vec<f64>) -> Self {
        Self { m: rhs.len(), cols: Vec::new(), cost: Vec::new(), rhs }
    }

    pub(crate) fn add_column(&mut self, col: &[f64], cost: f64) -> usize {
        assert_eq!(col.len(), self.m);
        self.cols.extend_from_slice(col);
        self.cost.push(cost);
        self.cost.len() - 1
    }

    pub(crate) fn num_columns(&self) -> usize {
        self.cost.len()
    }

    fn max_residual(&self, x: &[f64]) -> f64 {
        let mut r = self.rhs.clone();
        for (j, &v) in x.iter().enumerate() {
            for (ri, a) in r.iter_mut().zip(self.column(j)) {
                *ri -= a * v;
            }
        }
        r.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.cols[j * self.m..(j + 1) * self.m]
    }

    pub(crate) fn solve(&self) -> LpOutcome {
        let m = self.m;
        let n = self.num_columns();
        // rows with negative right-hand side are negated
        let sign: Vec<f64> = self.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = self.rhs.iter().zip(&sign).map(|(b, s)| b * s).collect();
        let col = |j: usize| -> Vec<f64> {
            if j < n {
                self.column(j).iter().zip(&sign).map(|(a, s)| a * s).collect()
            } else {
                let mut e = vec![0.0; m];
                e[j - n] = 1.0;
                e
            }
        };

        // phase 1 over originals plus one artificial per row
        let phase1_cost: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
        let mut basis: Vec<usize> = (n..n + m).collect();
        match run(m, n + m, &col, &phase1_cost, &rhs, &mut basis, n + m) {
            Run::Optimal => {}
            Run::Unbounded => return LpOutcome::Unbounded,
            Run::IterationLimit => return LpOutcome::IterationLimit,
        }
        let (xb, y) = basic_solution(m, &col, &basis, &rhs, &phase1_cost);
        let residual: f64 = basis.iter().zip(&xb).filter(|(&j, _)| j >= n).map(|(_, v)| v.max(0.0)).sum();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual > FEAS_TOL * scale {
            let duals = y.iter().zip(&sign).map(|(v, s)| v * s).collect();
            return LpOutcome::Infeasible { residual, basis, duals };
        }
        // pivot zero-level artificials out where possible
        for r in 0..m {
            if basis[r] < n {
                continue;
            }
            let binv = match inverse(m, &col, &basis) {
                Some(b) => b,
                None => break,
            };
            if let Some(j) = (0..n).filter(|j| !basis.contains(j)).find(|&j| {
                let u = &binv * nalgebra::DVector::from_vec(col(j));
                u[r].abs() > 1e-9
            }) {
                basis[r] = j;
            }
        }

        let phase2_cost: Vec<f64> = (0..n + m).map(|j| if j < n { self.cost[j] } else { 0.0 }).collect();
        match run(m, n + m, &col, &phase2_cost, &rhs, &mut basis, n) {
            Run::Optimal => {}
            Run::Unbounded => return LpOutcome::Unbounded,
            Run::IterationLimit => return LpOutcome::IterationLimit,
        }
        let (xb, y) = basic_solution(m, &col, &basis, &rhs, &phase2_cost);
        let mut x = vec![0.0; n];
        for (r, &j) in basis.iter().enumerate() {
            if j < n {
                x[j] = if xb[r] > 0.0 { xb[r] } else { 0.0 };
            }
        }
        if self.max_residual(&x) > FEAS_TOL * scale * 1e3 {
            return LpOutcome::IterationLimit;
        }
        let objective = x.iter().zip(&self.cost).map(|(a, c)| a * c).sum();
        let duals = y.iter().zip(&sign).map(|(v, s)| v * s).collect();
        LpOutcome::Optimal { x, basis, objective, duals }
    }
}

enum Run {
    Optimal,
    Unbounded,
    IterationLimit,
}

fn inverse(m: usize, col: &dyn Fn(usize) -> Vec<f64>, basis: &[usize]) -> Option<DMatrix<f64>> {
    let mut b = DMatrix::zeros(m, m);
    for (r, &j) in basis.iter().enumerate() {
        let c = col(j);
        for i in 0..m {
            b[(i, r)] = c[i];
        }
    }
    b.try_inverse()
}

/// Basic values `B⁻¹b` and multipliers `c_Bᵀ B⁻¹`.
fn basic_solution(
    m: usize,
    col: &dyn Fn(usize) -> Vec<f64>,
    basis: &[usize],
    rhs: &[f64],
    cost: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let binv = inverse(m, col, basis).expect("basis stays nonsingular");
    let xb = &binv * nalgebra::DVector::from_column_slice(rhs);
    let cb = nalgebra::RowDVector::from_iterator(m, basis.iter().map(|&j| cost[j]));
    let y = cb * &binv;
    (xb.iter().copied().collect(), y.iter().copied().collect())
}

/// Primal simplex from a feasible basis; only columns `< enter_limit` may
/// enter.
fn run(
    m: usize,
    ncols: usize,
    col: &dyn Fn(usize) -> Vec<f64>,
    cost: &[f64],
    rhs: &[f64],
    basis: &mut [usize],
    enter_limit: usize,
) -> Run {
    let mut degenerate = 0usize;
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut in_basis = vec![false; ncols];
    for &j in basis.iter() {
        in_basis[j] = true;
    }
    for _ in 0..MAX_PIVOTS {
        let binv = match inverse(m, col, basis) {
            Some(b) => b,
            None => return Run::IterationLimit,
        };
        let xb = &binv * nalgebra::DVector::from_column_slice(rhs);
        let cb = nalgebra::RowDVector::from_iterator(m, basis.iter().map(|&j| cost[j]));
        let objective: f64 = (0..m).map(|i| cb[i] * xb[i]).sum();
        let y = cb * &binv;
        if objective < best - 1e-12 * (1.0 + best.abs().min(1e300)) {
            best = objective;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > STALL_LIMIT {
                return Run::Optimal;
            }
        }

        let bland = degenerate >= DEGENERATE_LIMIT;
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..enter_limit {
            if in_basis[j] {
                continue;
            }
            let a = col(j);
            let d = cost[j] - (0..m).map(|i| y[i] * a[i]).sum::<f64>();
            let scale = 1.0 + cost[j].abs();
            if d < -OPT_TOL * scale {
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d < best) {
                    entering = Some((j, d));
                }
            }
        }
        let Some((j, _)) = entering else {
            return Run::Optimal;
        };
        let u = &binv * nalgebra::DVector::from_vec(col(j));
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            // a zero-level artificial must not move off zero in either direction
            let artificial = basis[r] >= enter_limit;
            if u[r] > PIVOT_TOL || (artificial && u[r] < -PIVOT_TOL) {
                let ratio = if artificial { 0.0 } else { xb[r].max(0.0) / u[r] };
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => ratio < lratio - 1e-15 || (ratio <= lratio + 1e-15 && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((r, ratio)) = leave else {
            return Run::Unbounded;
        };
        if ratio <= 1e-12 {
            degenerate += 1;
        }
        in_basis[basis[r]] = false;
        in_basis[j] = true;
        basis[r] = j;
    }
    Run::IterationLimit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp_optimum() {
        // min −x − y  s.t. x + s1 = 1, y + s2 = 2
        let mut lp = Lp::new(vec![1.0, 2.0]);
        lp.add_column(&[1.0, 0.0], -1.0);
        lp.add_column(&[0.0, 1.0], -1.0);
        lp.add_column(&[1.0, 0.0], 0.0);
        lp.add_column(&[0.0, 1.0], 0.0);
        match lp.solve() {
            LpOutcome::Optimal { x, objective, duals, .. } => {
                assert!((objective + 3.0).abs() < 1e-12);
                assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
                assert!((duals[0] + 1.0).abs() < 1e-12 && (duals[1] + 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_lp_is_detected() {
        // x = 1 and x = 2
        let mut lp = Lp::new(vec![1.0, 2.0]);
        lp.add_column(&[1.0, 1.0], 0.0);
        assert!(matches!(lp.solve(), LpOutcome::Infeasible { .. }));
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let mut lp = Lp::new(vec![1.0, 1.0]);
        lp.add_column(&[1.0, 1.0], 2.0);
        lp.add_column(&[1.0, 1.0], 1.0);
        match lp.solve() {
            LpOutcome::Optimal { objective, .. } => assert!((objective - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
