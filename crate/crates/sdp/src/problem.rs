use nalgebra::DMatrix;

use crate::SdpError;

/// Largest LMI block dimension accepted by the solver.
pub const MAX_BLOCK_DIM: usize = 8;

const SYMMETRY_TOL: f64 = 1e-12;

/// One linear matrix inequality `constant + Σ x_i · coeff_i ⪰ 0`.
///
/// Coefficients are stored sparsely: variables that do not appear in the
/// block carry an implicit zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub(crate) constant: DMatrix<f64>,
    pub(crate) terms: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn new(constant: DMatrix<f64>) -> Self {
        Self { constant, terms: Vec::new() }
    }

    /// Zero constant of the given dimension.
    pub fn zeros(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim))
    }

    pub fn with_term(mut self, var: usize, coeff: DMatrix<f64>) -> Self {
        self.add_term(var, coeff);
        self
    }

    /// Adds `coeff` to the coefficient of `var`, merging repeated variables.
    pub fn add_term(&mut self, var: usize, coeff: DMatrix<f64>) {
        if let Some((_, m)) = self.terms.iter_mut().find(|(v, _)| *v == var) {
            *m += coeff;
        } else {
            self.terms.push((var, coeff));
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> &[(usize, DMatrix<f64>)] {
        &self.terms
    }

    /// Coefficient matrix of `var`, or `None` if it does not appear.
    pub fn coefficient(&self, var: usize) -> Option<&DMatrix<f64>> {
        self.terms.iter().find(|(v, _)| *v == var).map(|(_, m)| m)
    }

    /// Evaluates `constant + Σ x_i coeff_i`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, m) in &self.terms {
            out += m * x[*v];
        }
        out
    }

    /// Multiplies constant and coefficients by `c`.
    pub fn scaled(mut self, c: f64) -> Self {
        self.constant *= c;
        for (_, m) in &mut self.terms {
            *m *= c;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// `Σ coeffs · x  (sense)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(v, a)| a * x[*v]).sum()
    }
}

/// Minimize `objective · x` subject to LMI blocks, linear constraints and
/// optional variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub(crate) nv: usize,
    pub(crate) objective: Vec<f64>,
    pub(crate) blocks: Vec<LmiBlock>,
    pub(crate) linear: Vec<LinearConstraint>,
    pub(crate) lower: Vec<Option<f64>>,
    pub(crate) upper: Vec<Option<f64>>,
}

impl SdpProblem {
    pub fn new(nv: usize) -> Self {
        Self {
            nv,
            objective: vec![0.0; nv],
            blocks: Vec::new(),
            linear: Vec::new(),
            lower: vec![None; nv],
            upper: vec![None; nv],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.nv
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.nv, "objective length must equal variable count");
        self.objective = c;
    }

    pub fn set_objective_coeff(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn add_block(&mut self, block: LmiBlock) -> usize {
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [LmiBlock] {
        &mut self.blocks
    }

    pub fn add_linear(&mut self, c: LinearConstraint) -> usize {
        self.linear.push(c);
        self.linear.len() - 1
    }

    pub fn linear(&self) -> &[LinearConstraint] {
        &self.linear
    }

    pub fn set_lower(&mut self, var: usize, lo: f64) {
        self.lower[var] = Some(lo);
    }

    pub fn set_upper(&mut self, var: usize, hi: f64) {
        self.upper[var] = Some(hi);
    }

    pub fn lower(&self) -> &[Option<f64>] {
        &self.lower
    }

    pub fn upper(&self) -> &[Option<f64>] {
        &self.upper
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Smallest eigenvalue over all LMI blocks at `x` (`+∞` with no blocks).
    pub fn min_block_eigenvalue(&self, x: &[f64]) -> f64 {
        self.blocks.iter().map(|b| min_eigenvalue(&b.evaluate(x))).fold(f64::INFINITY, f64::min)
    }

    /// Largest violation of linear constraints and bounds at `x` (0 if none).
    pub fn max_linear_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.linear {
            let d = c.lhs(x) - c.rhs;
            let v = match c.sense {
                Sense::Le => d,
                Sense::Ge => -d,
                Sense::Eq => d.abs(),
            };
            worst = worst.max(v);
        }
        for i in 0..self.nv {
            if let Some(lo) = self.lower[i] {
                worst = worst.max(lo - x[i]);
            }
            if let Some(hi) = self.upper[i] {
                worst = worst.max(x[i] - hi);
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.objective.len() != self.nv || self.lower.len() != self.nv || self.upper.len() != self.nv {
            return Err(SdpError::IllPosed("vector lengths disagree with the variable count".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(SdpError::IllPosed("non-finite objective coefficient".into()));
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            let n = b.dim();
            if b.constant.ncols() != n {
                return Err(SdpError::IllPosed(format!("block {bi}: constant is not square")));
            }
            if n == 0 || n > MAX_BLOCK_DIM {
                return Err(SdpError::IllPosed(format!("block {bi}: dimension {n} outside 1..={MAX_BLOCK_DIM}")));
            }
            check_symmetric(&b.constant, bi)?;
            for (v, m) in &b.terms {
                if *v >= self.nv {
                    return Err(SdpError::IllPosed(format!("block {bi}: variable {v} out of range")));
                }
                if m.nrows() != n || m.ncols() != n {
                    return Err(SdpError::IllPosed(format!("block {bi}: coefficient of variable {v} has wrong shape")));
                }
                check_symmetric(m, bi)?;
            }
        }
        for (li, c) in self.linear.iter().enumerate() {
            if !c.rhs.is_finite() || c.coeffs.iter().any(|(v, a)| *v >= self.nv || !a.is_finite()) {
                return Err(SdpError::IllPosed(format!("linear constraint {li} is malformed")));
            }
        }
        for i in 0..self.nv {
            if let (Some(lo), Some(hi)) = (self.lower[i], self.upper[i]) {
                if lo > hi {
                    return Err(SdpError::IllPosed(format!("variable {i}: lower bound above upper")));
                }
            }
        }
        Ok(())
    }
}

fn check_symmetric(m: &DMatrix<f64>, block: usize) -> Result<(), SdpError> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let a = m[(i, j)];
            if !a.is_finite() {
                return Err(SdpError::IllPosed(format!("block {block}: non-finite entry")));
            }
            if j > i && (a - m[(j, i)]).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                return Err(SdpError::IllPosed(format!("block {block}: matrix is not symmetric")));
            }
        }
    }
    Ok(())
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone().symmetric_eigenvalues().min()
}
