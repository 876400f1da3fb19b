//! Small dense linear algebra: symmetric matrices, Cholesky solves, cyclic
//! Jacobi eigenvalues and a two-phase tableau simplex.
//!
//! Everything here works on matrices of at most a few hundred rows. Gram
//! matrices are kept per class, so the largest symmetric matrix the rest of
//! the crate hands in is `d x d`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("non-finite matrix")]
    NonFinite,
    #[error("not positive definite")]
    NotPositiveDefinite,
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix stored row-major with both triangles populated.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be >= 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = c;
        }
        m
    }

    /// Builds a matrix from rows, rejecting asymmetry beyond `1e-12` and
    /// averaging away anything smaller.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(LinalgError::Dimension("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(LinalgError::Dimension("matrix is not square".into()));
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (rows[i][j], rows[j][i]);
                if !a.is_finite() {
                    return Err(LinalgError::NonFinite);
                }
                let scale = 1.0_f64.max(a.abs()).max(b.abs());
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(LinalgError::Dimension(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
                m.data[i * dim + j] = 0.5 * (a + b);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// `self += weight * x xᵀ`
    pub fn add_outer(&mut self, x: &[f64], weight: f64) {
        debug_assert_eq!(x.len(), self.dim);
        let n = self.dim;
        for i in 0..n {
            let wi = weight * x[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, &xj) in row.iter_mut().zip(x) {
                *r += wi * xj;
            }
        }
    }

    pub fn add_diagonal(&mut self, c: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += c;
        }
    }

    pub fn add_assign(&mut self, other: &SymMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Multiplies by a row-major `dim x cols` matrix.
    pub fn mul_mat(&self, b: &[f64], cols: usize) -> Vec<f64> {
        let n = self.dim;
        debug_assert_eq!(b.len(), n * cols);
        let mut out = vec![0.0; n * cols];
        for i in 0..n {
            let out_row = &mut out[i * cols..(i + 1) * cols];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &bv) in out_row.iter_mut().zip(&b[k * cols..(k + 1) * cols]) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(LinalgError::NonFinite)
        }
    }
}

/// All eigenvalues of a symmetric matrix in ascending order, by cyclic
/// Jacobi sweeps.
pub fn eigenvalues_sym(m: &SymMatrix) -> Result<Vec<f64>> {
    m.check_finite()?;
    let n = m.dim;
    let mut a = m.data.clone();
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = JACOBI_OFF_TOL * frob.max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Smallest eigenvalue by Householder reduction to tridiagonal form and
/// Sturm-sequence bisection, about an order of magnitude cheaper than a
/// full Jacobi solve at `d = 40`.
pub fn min_eigenvalue_sym(m: &SymMatrix) -> Result<f64> {
    m.check_finite()?;
    let (diag, off) = tridiagonalize(m);
    Ok(tridiagonal_min_eigenvalue(&diag, &off))
}

/// Diagonal and sub-diagonal of a tridiagonal matrix similar to `m`.
fn tridiagonalize(m: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.dim;
    let mut a = m.data.clone();
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let norm = ((k + 1)..n).map(|i| a[i * n + k] * a[i * n + k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let x0 = a[(k + 1) * n + k];
        let alpha = if x0 > 0.0 { -norm } else { norm };
        for i in (k + 1)..n {
            v[i] = a[i * n + k];
        }
        v[k + 1] -= alpha;
        let vnorm = ((k + 1)..n).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        off[k] = alpha;
        if vnorm == 0.0 {
            continue;
        }
        for i in (k + 1)..n {
            v[i] /= vnorm;
        }
        for i in (k + 1)..n {
            p[i] = ((k + 1)..n).map(|j| a[i * n + j] * v[j]).sum();
        }
        let kk: f64 = ((k + 1)..n).map(|i| v[i] * p[i]).sum();
        for i in (k + 1)..n {
            p[i] -= kk * v[i];
        }
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                a[i * n + j] -= 2.0 * (v[i] * p[j] + p[i] * v[j]);
            }
        }
    }
    if n >= 2 {
        off[n - 2] = a[(n - 1) * n + (n - 2)];
    }
    let diag = (0..n).map(|i| a[i * n + i]).collect();
    (diag, off)
}

fn tridiagonal_min_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let radius = |i: usize| {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { off[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let below = |x: f64| {
        let mut count = 0;
        let mut q = diag[0] - x;
        for i in 0..n {
            if i > 0 {
                q = diag[i] - x - off[i - 1] * off[i - 1] / q;
            }
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
        if below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &SymMatrix) -> Result<Self> {
        m.check_finite()?;
        let n = m.dim;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = m.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { dim: n, l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solves against a row-major `dim x cols` right-hand side.
    pub fn solve_mat(&self, rhs: &[f64], cols: usize) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * cols];
        let mut col = vec![0.0; n];
        for c in 0..cols {
            for i in 0..n {
                col[i] = rhs[i * cols + c];
            }
            let x = self.solve(&col);
            for i in 0..n {
                out[i * cols + c] = x[i];
            }
        }
        out
    }

    /// `xᵀ m⁻¹ x`
    pub fn inv_quad(&self, x: &[f64]) -> f64 {
        let n = self.dim;
        let mut y = x.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y.iter().map(|v| v * v).sum()
    }
}

pub fn solve_spd(m: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.dim {
        return Err(LinalgError::Dimension(format!(
            "rhs has length {}, matrix has dimension {}",
            rhs.len(),
            m.dim
        )));
    }
    Ok(Cholesky::factor(m)?.solve(rhs))
}

/// `max cᵀx  s.t.  A x <= b,  x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// One nonnegative multiplier per constraint row.
    pub duals: Vec<f64>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>, constraints: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        let p = Self {
            objective,
            constraints,
            rhs,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn validate(&self) -> Result<()> {
        if self.rhs.len() != self.constraints.len() {
            return Err(LinalgError::Dimension(
                "rhs length differs from constraint rows".into(),
            ));
        }
        let n = self.objective.len();
        if self.constraints.iter().any(|row| row.len() != n) {
            return Err(LinalgError::Dimension(
                "constraint row length differs from variable count".into(),
            ));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.rhs.iter().all(|v| v.is_finite())
            && self.constraints.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(LinalgError::NonFinite);
        }
        Ok(())
    }
}

const LP_EPS: f64 = 1e-11;

struct Tableau {
    rows: usize,
    cols: usize,
    // rows x (cols + 1); last column is the rhs
    t: Vec<f64>,
    // objective row, length cols + 1, stores reduced costs c_B B^-1 A_j - c_j
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let pv = self.at(pr, pc);
        for c in 0..w {
            self.t[pr * w + c] /= pv;
        }
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.t[r * w + c] -= f * prow[c];
                }
                self.t[r * w + pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for c in 0..w {
                self.obj[c] -= f * prow[c];
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Primal simplex with Bland's rule over the columns in `allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let scale = 1.0 + self.t.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let eps = LP_EPS * scale;
        loop {
            let entering = (0..allowed).find(|&c| self.obj[c] < -eps);
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > eps {
                    let ratio = self.at(r, self.cols) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - eps
                                || (ratio <= bratio + eps && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Err(LinalgError::Unbounded),
                Some((pr, _)) => self.pivot(pr, pc),
            }
        }
    }
}

/// Solves a packing-form LP to a vertex optimum (two-phase tableau simplex,
/// Bland's rule).
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars();
    let m = p.num_constraints();
    let negative: Vec<usize> = (0..m).filter(|&i| p.rhs[i] < 0.0).collect();
    let n_art = negative.len();
    // columns: originals | slacks | artificials
    let cols = n + m + n_art;
    let w = cols + 1;
    let mut t = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut art_idx = 0;
    for i in 0..m {
        let sign = if p.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sign * p.constraints[i][j];
        }
        t[i * w + n + i] = sign;
        t[i * w + cols] = sign * p.rhs[i];
        if sign < 0.0 {
            t[i * w + n + m + art_idx] = 1.0;
            basis[i] = n + m + art_idx;
            art_idx += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        obj: vec![0.0; w],
        basis,
    };

    if n_art > 0 {
        // phase I: maximize -sum(artificials)
        for a in 0..n_art {
            tab.obj[n + m + a] = 1.0;
        }
        for r in 0..m {
            if tab.basis[r] >= n + m {
                for c in 0..w {
                    tab.obj[c] -= tab.t[r * w + c];
                }
            }
        }
        tab.optimize(cols)?;
        let infeas = -tab.obj[cols];
        let rhs_scale = 1.0 + p.rhs.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if infeas < -1e-9 * rhs_scale || infeas > 1e-9 * rhs_scale {
            return Err(LinalgError::Infeasible);
        }
        // drive remaining artificials out of the basis
        for r in 0..m {
            if tab.basis[r] >= n + m {
                if let Some(pc) = (0..n + m).find(|&c| tab.at(r, c).abs() > 1e-9) {
                    tab.pivot(r, pc);
                }
            }
        }
    }

    // phase II over originals and slacks
    tab.obj = vec![0.0; w];
    for j in 0..n {
        tab.obj[j] = -p.objective[j];
    }
    for r in 0..m {
        let b = tab.basis[r];
        let cb = if b < n { p.objective[b] } else { 0.0 };
        if cb != 0.0 {
            for c in 0..w {
                tab.obj[c] += cb * tab.t[r * w + c];
            }
        }
    }
    tab.optimize(n + m)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        let b = tab.basis[r];
        if b < n {
            x[b] = tab.at(r, cols).max(0.0);
        }
    }
    let value = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m).map(|i| tab.obj[n + i].max(0.0)).collect();
    Ok(LpSolution { x, value, duals })
}
