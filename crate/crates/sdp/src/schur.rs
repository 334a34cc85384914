//! Schur-complement system `M Δx = h` with block-arrow sparsity.
//!
//! Variables that touch many cones become "global"; the rest split into
//! clusters that never share a cone with each other. `M` then has dense
//! cluster-diagonal blocks plus a dense border, and is solved by eliminating
//! each cluster onto the global block.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

const MAX_CLUSTER: usize = 48;
const MAX_GLOBAL: usize = 128;

#[derive(Debug, Clone, Copy)]
enum Role {
    Global(usize),
    Local(usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Pattern {
    roles: Vec<Role>,
    globals: Vec<usize>,
    clusters: Vec<Vec<usize>>,
}

impl Pattern {
    /// Picks the smallest global set (by a degree threshold) leaving clusters
    /// of bounded size; falls back to one dense block.
    pub(crate) fn analyze(m: usize, cone_vars: &[Vec<usize>]) -> Self {
        let mut degree = vec![0usize; m];
        for vars in cone_vars {
            for &v in vars {
                degree[v] += 1;
            }
        }
        let mut thresholds: Vec<usize> = degree.clone();
        thresholds.sort_unstable_by(|a, b| b.cmp(a));
        thresholds.dedup();

        let no_globals = vec![false; m];
        if let Some(p) = Self::try_split(m, cone_vars, &no_globals) {
            return p;
        }
        for &tau in &thresholds {
            let is_global: Vec<bool> = degree.iter().map(|&d| d >= tau).collect();
            if is_global.iter().filter(|&&g| g).count() > MAX_GLOBAL {
                break;
            }
            if let Some(p) = Self::try_split(m, cone_vars, &is_global) {
                return p;
            }
        }
        Self::dense(m)
    }

    fn dense(m: usize) -> Self {
        Self { roles: (0..m).map(Role::Global).collect(), globals: (0..m).collect(), clusters: Vec::new() }
    }

    fn try_split(m: usize, cone_vars: &[Vec<usize>], is_global: &[bool]) -> Option<Self> {
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for vars in cone_vars {
            let mut first: Option<usize> = None;
            for &v in vars.iter().filter(|&&v| !is_global[v]) {
                match first {
                    None => first = Some(v),
                    Some(f) => {
                        let (a, b) = (find(&mut parent, f), find(&mut parent, v));
                        if a != b {
                            parent[b] = a;
                        }
                    }
                }
            }
        }
        let mut root_to_cluster = vec![usize::MAX; m];
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        let mut roles = vec![Role::Global(0); m];
        let mut globals = Vec::new();
        for v in 0..m {
            if is_global[v] {
                roles[v] = Role::Global(globals.len());
                globals.push(v);
                continue;
            }
            let r = find(&mut parent, v);
            if root_to_cluster[r] == usize::MAX {
                root_to_cluster[r] = clusters.len();
                clusters.push(Vec::new());
            }
            let c = root_to_cluster[r];
            roles[v] = Role::Local(c, clusters[c].len());
            clusters[c].push(v);
            if clusters[c].len() > MAX_CLUSTER {
                return None;
            }
        }
        Some(Self { roles, globals, clusters })
    }
}

/// Assembled (and, after `factor`, factorized) Schur matrix.
pub(crate) struct SchurSystem<'a> {
    pattern: &'a Pattern,
    gg: DMatrix<f64>,
    cc: Vec<DMatrix<f64>>,
    cg: Vec<DMatrix<f64>>,
}

pub(crate) struct Factorized<'a> {
    sys: SchurSystem<'a>,
    cluster_chol: Vec<DMatrix<f64>>,
    // L_c^{-1} M_cG for every cluster
    cluster_border: Vec<DMatrix<f64>>,
    reduced: Cholesky<f64, Dyn>,
}

impl<'a> SchurSystem<'a> {
    pub(crate) fn new(pattern: &'a Pattern) -> Self {
        let ng = pattern.globals.len();
        Self {
            pattern,
            gg: DMatrix::zeros(ng, ng),
            cc: pattern.clusters.iter().map(|c| DMatrix::zeros(c.len(), c.len())).collect(),
            cg: pattern.clusters.iter().map(|c| DMatrix::zeros(c.len(), ng)).collect(),
        }
    }

    /// Adds `v` at position (i, j) and implicitly (j, i); call once per
    /// ordered pair of variables sharing a cone.
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        match (self.pattern.roles[i], self.pattern.roles[j]) {
            (Role::Global(a), Role::Global(b)) => self.gg[(a, b)] += v,
            (Role::Local(c, a), Role::Local(d, b)) => {
                debug_assert_eq!(c, d, "variables of distinct clusters share a cone");
                self.cc[c][(a, b)] += v;
            }
            (Role::Local(c, a), Role::Global(b)) => self.cg[c][(a, b)] += v,
            (Role::Global(_), Role::Local(_, _)) => {}
        }
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let p = self.pattern;
        let mut out = vec![0.0; x.len()];
        let xg = DVector::from_iterator(p.globals.len(), p.globals.iter().map(|&v| x[v]));
        let mut yg = &self.gg * &xg;
        for (c, vars) in p.clusters.iter().enumerate() {
            let xc = DVector::from_iterator(vars.len(), vars.iter().map(|&v| x[v]));
            let yc = &self.cc[c] * &xc + &self.cg[c] * &xg;
            yg += self.cg[c].transpose() * &xc;
            for (k, &v) in vars.iter().enumerate() {
                out[v] = yc[k];
            }
        }
        for (k, &v) in p.globals.iter().enumerate() {
            out[v] = yg[k];
        }
        out
    }

    pub(crate) fn factor(self) -> Option<Factorized<'a>> {
        let mut cluster_chol = Vec::with_capacity(self.cc.len());
        let mut cluster_border = Vec::with_capacity(self.cc.len());
        let mut reduced = self.gg.clone();
        for (c, m) in self.cc.iter().enumerate() {
            let l = robust_cholesky(m)?.l();
            let mut y = self.cg[c].clone();
            l.solve_lower_triangular_mut(&mut y);
            if reduced.nrows() > 0 {
                reduced -= y.transpose() * &y;
            }
            cluster_chol.push(l);
            cluster_border.push(y);
        }
        let reduced = robust_cholesky(&reduced)?;
        Some(Factorized { sys: self, cluster_chol, cluster_border, reduced })
    }
}

impl Factorized<'_> {
    fn solve_once(&self, h: &[f64]) -> Vec<f64> {
        let p = self.sys.pattern;
        let mut out = vec![0.0; h.len()];
        let mut hg = DVector::from_iterator(p.globals.len(), p.globals.iter().map(|&v| h[v]));
        let mut ys = Vec::with_capacity(p.clusters.len());
        for (c, vars) in p.clusters.iter().enumerate() {
            let mut y = DVector::from_iterator(vars.len(), vars.iter().map(|&v| h[v]));
            self.cluster_chol[c].solve_lower_triangular_mut(&mut y);
            if hg.nrows() > 0 {
                hg -= self.cluster_border[c].transpose() * &y;
            }
            ys.push(y);
        }
        let xg = self.reduced.solve(&hg);
        for (c, vars) in p.clusters.iter().enumerate() {
            let mut r = ys[c].clone();
            if xg.nrows() > 0 {
                r -= &self.cluster_border[c] * &xg;
            }
            self.cluster_chol[c].tr_solve_lower_triangular_mut(&mut r);
            for (k, &v) in vars.iter().enumerate() {
                out[v] = r[k];
            }
        }
        for (k, &v) in p.globals.iter().enumerate() {
            out[v] = xg[k];
        }
        out
    }

    /// Solves `M x = h` with one step of iterative refinement.
    pub(crate) fn solve(&self, h: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(h);
        let mx = self.sys.mul(&x);
        let r: Vec<f64> = h.iter().zip(&mx).map(|(a, b)| a - b).collect();
        let dx = self.solve_once(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        x
    }
}

/// Cholesky with a growing diagonal shift for (near-)singular matrices.
fn robust_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.nrows() == 0 {
        return Cholesky::new(m.clone());
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 1e-14 * scale;
    for _ in 0..12 {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += shift;
        }
        if let Some(c) = Cholesky::new(a) {
            return Some(c);
        }
        shift *= 100.0;
    }
    None
}
