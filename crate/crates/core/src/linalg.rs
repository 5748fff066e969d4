//! Small dense linear algebra: row-major matrices, pivoted solves, the
//! Moore–Penrose pseudo-inverse and the sum-to-one constrained quadratic
//! minimizer behind every matrix weight formula.
//!
//! Every matrix here is `m × m` with `m` the number of populations, so
//! dimensions are capped at [`MAX_DIM`].

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::error::{Result, WleError};

pub const MAX_DIM: usize = 64;

/// Relative pivot threshold for [`solve_linear`].
const PIVOT_TOL: f64 = 1e-13;

/// Condition numbers above this trigger the singular paths.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Ridge scale used by [`ridge_if_ill_conditioned`].
const RIDGE_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(WleError::InvalidInput("matrix must be non-empty".into()));
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(WleError::InvalidInput("ragged matrix rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = Self { rows: r, cols: c, data };
        m.validate()?;
        Ok(m)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Outer product `u vᵗ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, a) in u.iter().enumerate() {
            for (k, b) in v.iter().enumerate() {
                m[(i, k)] = a * b;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, k)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for k in 0..self.cols {
                t[(k, i)] = self[(i, k)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for k in 0..other.cols {
                    out[(i, k)] += a * other[(l, k)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵗ A v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.matvec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.add(&other.scaled(-1.0))
    }

    pub fn add_to_diagonal(&mut self, tau: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += tau;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = 1.0 + self.max_abs();
        (0..self.rows).all(|i| (0..i).all(|k| (self[(i, k)] - self[(k, i)]).abs() <= tol * scale))
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let sym = self.to_nalgebra();
        let sym = (&sym + sym.transpose()) * 0.5;
        let mut eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self
            .to_nalgebra()
            .singular_values()
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// 2-norm condition number; infinite for singular matrices.
    pub fn condition_number(&self) -> f64 {
        let sv = self.singular_values();
        let max = sv.first().copied().unwrap_or(0.0);
        let min = sv.last().copied().unwrap_or(0.0);
        if max == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rows > MAX_DIM || self.cols > MAX_DIM {
            return Err(WleError::InvalidInput(format!(
                "matrix {}x{} exceeds the {MAX_DIM}x{MAX_DIM} size cap",
                self.rows, self.cols
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(WleError::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(())
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for k in 0..m.ncols() {
                out[(i, k)] = m[(i, k)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, k): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + k]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, k): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + k]
    }
}

/// Solves `A x = b` by Gaussian elimination with scaled partial pivoting.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    a.validate()?;
    if !a.is_square() {
        return Err(WleError::InvalidInput("solve_linear needs a square matrix".into()));
    }
    let n = a.rows();
    if b.len() != n {
        return Err(WleError::InvalidInput(format!(
            "right-hand side has length {}, expected {n}",
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let mut scale: Vec<f64> = (0..n)
        .map(|i| m.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
        .collect();

    for col in 0..n {
        let (piv, _) = (col..n)
            .map(|r| (r, if scale[r] > 0.0 { m[(r, col)].abs() / scale[r] } else { 0.0 }))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let pivot = m[(piv, col)];
        if scale[piv] == 0.0 || pivot.abs() < PIVOT_TOL * scale[piv] {
            return Err(WleError::SingularMatrix {
                column: col,
                pivot: pivot.abs(),
            });
        }
        if piv != col {
            for k in 0..n {
                m.data.swap(piv * n + k, col * n + k);
            }
            rhs.swap(piv, col);
            scale.swap(piv, col);
        }
        for r in col + 1..n {
            let factor = m[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                let v = m[(col, k)];
                m[(r, k)] -= factor * v;
            }
            rhs[r] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[(i, k)] * x[k]).sum();
        x[i] = (rhs[i] - s) / m[(i, i)];
    }
    Ok(x)
}

/// Moore–Penrose pseudo-inverse via the SVD, truncating singular values
/// below `max(rows, cols) · ε · σ_max`.
pub fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    a.validate()?;
    let svd = a.to_nalgebra().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = a.rows().max(a.cols()) as f64 * f64::EPSILON * smax;
    let pinv = svd
        .pseudo_inverse(eps)
        .map_err(|e| WleError::OptimizationFailed(format!("pseudo-inverse: {e}")))?;
    Ok(Matrix::from_nalgebra(&pinv))
}

/// Adds `τ = 1e-12 · trace(A)/m` to the diagonal when the condition number
/// exceeds [`CONDITION_LIMIT`]. Returns whether the ridge was applied.
pub fn ridge_if_ill_conditioned(a: &mut Matrix) -> bool {
    if a.condition_number() <= CONDITION_LIMIT {
        return false;
    }
    let tau = RIDGE_SCALE * a.trace() / a.rows() as f64;
    if tau > 0.0 {
        a.add_to_diagonal(tau);
    }
    true
}

/// Result of [`constrained_quadratic_min`].
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub lambda: Vec<f64>,
    /// False when the minimizer is not unique on the constraint plane and
    /// the minimum-norm point was returned.
    pub unique: bool,
    /// Lagrange multiplier of `1ᵗλ = 1` in `2Aλ − 2b − ν1 = 0`.
    pub nu: f64,
}

/// Minimizes `c − 2λᵗb + λᵗAλ` subject to `1ᵗλ = 1` for symmetric PSD `A`.
///
/// Well-conditioned `A` uses the Lagrange solution
/// `λ = A⁻¹(b + (ν/2)1)`. Otherwise the problem is reduced onto the
/// constraint plane and solved with a pseudo-inverse, which yields the
/// minimum-norm minimizer.
pub fn constrained_quadratic_min(a: &Matrix, b: &[f64]) -> Result<QpSolution> {
    a.validate()?;
    let m = a.rows();
    if !a.is_square() || b.len() != m {
        return Err(WleError::InvalidInput(format!(
            "quadratic needs a square matrix and matching vector, got {}x{} and {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    if !a.is_symmetric(1e-10) {
        return Err(WleError::InvalidInput("quadratic matrix is not symmetric".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(WleError::InvalidInput("linear term has non-finite entries".into()));
    }
    if m == 1 {
        return Ok(QpSolution {
            lambda: vec![1.0],
            unique: true,
            nu: 2.0 * (a[(0, 0)] - b[0]),
        });
    }

    if a.condition_number() <= CONDITION_LIMIT {
        if let Ok(sol) = lagrange_solution(a, b) {
            return Ok(sol);
        }
    }
    minimum_norm_solution(a, b)
}

fn lagrange_solution(a: &Matrix, b: &[f64]) -> Result<QpSolution> {
    let m = a.rows();
    let ones = vec![1.0; m];
    let ainv_b = solve_linear(a, b)?;
    let ainv_1 = solve_linear(a, &ones)?;
    let denom: f64 = ainv_1.iter().sum();
    if !denom.is_finite() || denom.abs() < 1e-300 {
        return Err(WleError::DegenerateConstraint(format!(
            "1ᵗA⁻¹1 = {denom:e}"
        )));
    }
    let half_nu = (1.0 - ainv_b.iter().sum::<f64>()) / denom;
    let lambda: Vec<f64> = ainv_b
        .iter()
        .zip(&ainv_1)
        .map(|(x, y)| x + half_nu * y)
        .collect();
    Ok(QpSolution {
        lambda,
        unique: true,
        nu: 2.0 * half_nu,
    })
}

/// Orthonormal basis (as columns) of `{v : 1ᵗv = 0}`, taken from the
/// Householder reflection that maps `1/√m` onto `e_1`.
fn constraint_plane_basis(m: usize) -> Matrix {
    let u = 1.0 / (m as f64).sqrt();
    let mut v = vec![u; m];
    v[0] -= 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut basis = Matrix::zeros(m, m - 1);
    for i in 0..m {
        for k in 1..m {
            let h = if i == k { 1.0 } else { 0.0 } - 2.0 * v[i] * v[k] / vv;
            basis[(i, k - 1)] = h;
        }
    }
    basis
}

fn minimum_norm_solution(a: &Matrix, b: &[f64]) -> Result<QpSolution> {
    let m = a.rows();
    let basis = constraint_plane_basis(m);
    let center = vec![1.0 / m as f64; m];
    let a_center = a.matvec(&center);
    let residual: Vec<f64> = b.iter().zip(&a_center).map(|(x, y)| x - y).collect();

    let reduced = basis.transpose().matmul(a).matmul(&basis);
    let gradient = basis.transpose().matvec(&residual);
    let z = pseudo_inverse(&reduced)?.matvec(&gradient);
    let step = basis.matvec(&z);
    let lambda: Vec<f64> = center.iter().zip(&step).map(|(c, s)| c + s).collect();
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(WleError::DegenerateConstraint(
            "reduced quadratic produced a non-finite solution".into(),
        ));
    }

    let kkt: Vec<f64> = a
        .matvec(&lambda)
        .iter()
        .zip(b)
        .map(|(al, bi)| 2.0 * al - 2.0 * bi)
        .collect();
    let nu = kkt.iter().sum::<f64>() / m as f64;
    Ok(QpSolution {
        lambda,
        unique: reduced.condition_number() <= CONDITION_LIMIT,
        nu,
    })
}
