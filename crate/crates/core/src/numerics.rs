//! Dense complex kernels: LU log-determinants, thin QR with a positive real
//! R-diagonal, unitary complements, singular values and eigenvalues.
//!
//! Determinants are only ever reported in log space. LU and QR are written
//! here so that their conventions (pivot floor, phase normalization) are
//! fixed bit-for-bit; the iterative SVD and nonsymmetric eigensolver are
//! delegated to `faer`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::sync::Once;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

/// Pivot magnitudes below this are treated as exact zeros.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Largest dimension accepted by [`eigvals`].
pub const EIGVALS_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular (pivot {index} below floor)")]
    Singular { index: usize },
    #[error("matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("input columns are not orthonormal (residual {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("dimension {dim} exceeds the cap {cap}")]
    SizeCap { dim: usize, cap: usize },
    #[error("{0} failed to converge")]
    NoConvergence(&'static str),
}

/// `log|det M|` with the unit-modulus phase `det M / |det M|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub phase: Complex64,
}

impl LogDet {
    /// `det M` itself; overflows for large log magnitudes.
    pub fn value(&self) -> Complex64 {
        self.phase * self.log_abs.exp()
    }
}

/// Partial-pivoting LU factorization `P·M = L·U`, stored compactly.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: CMatrix,
    perm: Vec<usize>,
    odd_swaps: bool,
}

fn require_square(m: &CMatrix) -> Result<usize, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

/// Runs the elimination; returns the first column whose pivot fell below
/// the floor (elimination stops there) or `None`.
fn eliminate(a: &mut CMatrix, perm: &mut [usize], odd_swaps: &mut bool) -> Option<usize> {
    let n = a.nrows();
    for k in 0..n {
        let mut p = k;
        let mut best = a[(k, k)].norm();
        for i in k + 1..n {
            let v = a[(i, k)].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best >= PIVOT_FLOOR) {
            return Some(k);
        }
        if p != k {
            a.swap_rows(p, k);
            perm.swap(p, k);
            *odd_swaps = !*odd_swaps;
        }
        // column-major storage: eliminate column by column on contiguous slices
        let pivot = a[(k, k)];
        let data = a.as_mut_slice();
        for x in &mut data[k * n + k + 1..(k + 1) * n] {
            *x /= pivot;
        }
        for j in k + 1..n {
            let (left, right) = data.split_at_mut(j * n);
            let u = right[k];
            if u == Complex64::new(0.0, 0.0) {
                continue;
            }
            let multipliers = &left[k * n + k + 1..(k + 1) * n];
            for (x, l) in right[k + 1..n].iter_mut().zip(multipliers) {
                *x -= l * u;
            }
        }
    }
    None
}

impl Lu {
    pub fn factor(m: &CMatrix) -> Result<Self, LinalgError> {
        let n = require_square(m)?;
        let mut factors = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut odd_swaps = false;
        if let Some(index) = eliminate(&mut factors, &mut perm, &mut odd_swaps) {
            return Err(LinalgError::Singular { index });
        }
        Ok(Self { factors, perm, odd_swaps })
    }

    pub fn dim(&self) -> usize {
        self.factors.nrows()
    }

    pub fn log_det(&self) -> LogDet {
        let mut log_abs = 0.0;
        let mut phase = Complex64::new(if self.odd_swaps { -1.0 } else { 1.0 }, 0.0);
        for i in 0..self.dim() {
            let u = self.factors[(i, i)];
            let r = u.norm();
            log_abs += r.ln();
            phase *= u / r;
        }
        // renormalize accumulated rounding in the phase
        LogDet { log_abs, phase: phase / phase.norm() }
    }

    /// Solves `M·X = rhs` for every column of `rhs`.
    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix, LinalgError> {
        let n = self.dim();
        if rhs.nrows() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "right-hand side has {} rows, system has {n}",
                rhs.nrows()
            )));
        }
        let mut x = CMatrix::zeros(n, rhs.ncols());
        for (i, &p) in self.perm.iter().enumerate() {
            x.set_row(i, &rhs.row(p));
        }
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.factors[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.factors[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.factors[(i, i)];
            }
        }
        Ok(x)
    }
}

/// `log|det M|` from the LU pivots; fails with `Singular` below the pivot floor.
pub fn lu_logdet(m: &CMatrix) -> Result<LogDet, LinalgError> {
    Ok(Lu::factor(m)?.log_det())
}

/// Plain determinant, exactly zero when elimination hits a zero pivot.
/// Meant for small matrices (minors in exterior powers).
pub fn det(m: &CMatrix) -> Result<Complex64, LinalgError> {
    let n = require_square(m)?;
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut odd = false;
    if eliminate(&mut a, &mut perm, &mut odd).is_some() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut d = Complex64::new(if odd { -1.0 } else { 1.0 }, 0.0);
    for i in 0..n {
        d *= a[(i, i)];
    }
    Ok(d)
}

/// Solves `B·X = rhs` without forming `B⁻¹`.
pub fn solve_lu(b: &CMatrix, rhs: &CMatrix) -> Result<CMatrix, LinalgError> {
    Lu::factor(b)?.solve(rhs)
}

/// Householder reflector data for one column: `H = I − τ·v·v*` with `v[0] = 1`.
struct Reflector {
    v: Vec<Complex64>,
    tau: f64,
}

/// Builds the reflector mapping `x` onto `alpha·e₁` with
/// `alpha = −e^{i·arg x₀}·‖x‖`. Returns `None` for a zero vector.
fn householder(x: &[Complex64]) -> (Option<Reflector>, Complex64) {
    let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (None, Complex64::new(0.0, 0.0));
    }
    let x0 = x[0];
    let phase = if x0.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x0 / x0.norm() };
    let alpha = -phase * norm;
    let head = x0 - alpha;
    let mut v: Vec<Complex64> = x.iter().map(|&c| c / head).collect();
    v[0] = Complex64::new(1.0, 0.0);
    let vnorm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    (Some(Reflector { v, tau: 2.0 / vnorm2 }), alpha)
}

/// Applies `H = I − τvv*` to rows `offset..` of `m`, columns `cols`.
fn apply_reflector(r: &Reflector, m: &mut CMatrix, offset: usize, cols: std::ops::Range<usize>) {
    for j in cols {
        let mut s = Complex64::new(0.0, 0.0);
        for (k, vk) in r.v.iter().enumerate() {
            s += vk.conj() * m[(offset + k, j)];
        }
        s *= r.tau;
        for (k, vk) in r.v.iter().enumerate() {
            m[(offset + k, j)] -= vk * s;
        }
    }
}

fn householder_qr(m: &CMatrix) -> (Vec<Option<Reflector>>, CMatrix) {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut reflectors = Vec::with_capacity(cols.min(rows));
    for j in 0..cols.min(rows) {
        let x: Vec<Complex64> = (j..rows).map(|i| a[(i, j)]).collect();
        let (refl, alpha) = householder(&x);
        if let Some(r) = &refl {
            apply_reflector(r, &mut a, j, j + 1..cols);
            a[(j, j)] = alpha;
            for i in j + 1..rows {
                a[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        reflectors.push(refl);
    }
    (reflectors, a)
}

/// Accumulates `H₁⋯H_k` applied to the first `width` columns of the identity.
fn accumulate_q(reflectors: &[Option<Reflector>], rows: usize, width: usize) -> CMatrix {
    let mut q = CMatrix::identity(rows, width);
    for (j, r) in reflectors.iter().enumerate().rev() {
        if let Some(r) = r {
            apply_reflector(r, &mut q, j, 0..width);
        }
    }
    q
}

/// Thin QR of a tall matrix with `diag(R)` real and positive.
pub fn qr_thin(m: &CMatrix) -> Result<(CMatrix, CMatrix), LinalgError> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(LinalgError::DimensionMismatch(format!("thin QR needs rows >= cols, got {rows}x{cols}")));
    }
    let (reflectors, a) = householder_qr(m);
    let mut q = accumulate_q(&reflectors, rows, cols);
    let mut r = a.rows(0, cols).upper_triangle();
    for j in 0..cols {
        let d = r[(j, j)];
        let mag = d.norm();
        if !(mag >= PIVOT_FLOOR) {
            return Err(LinalgError::RankDeficient { column: j });
        }
        let phase = d / mag;
        for k in j..cols {
            r[(j, k)] *= phase.conj();
        }
        r[(j, j)] = Complex64::new(mag, 0.0);
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    Ok((q, r))
}

/// `max |(Q*Q − I)_{ij}|`.
pub fn orthonormality_residual(q: &CMatrix) -> f64 {
    let g = q.adjoint() * q;
    let id = CMatrix::identity(q.ncols(), q.ncols());
    (g - id).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Orthonormal basis of the orthogonal complement of `range(Q₋)`, taken from
/// the trailing columns of the full Householder Q of `Q₋`.
pub fn unitary_complement(q_minus: &CMatrix) -> Result<CMatrix, LinalgError> {
    let (rows, cols) = q_minus.shape();
    if rows < cols {
        return Err(LinalgError::DimensionMismatch(format!("frame is {rows}x{cols}")));
    }
    let residual = orthonormality_residual(q_minus);
    if !(residual <= 1e-10) {
        return Err(LinalgError::NotOrthonormal { residual });
    }
    let (reflectors, _) = householder_qr(q_minus);
    let full = accumulate_q(&reflectors, rows, rows);
    Ok(full.columns(cols, rows - cols).into_owned())
}

/// `H^{-1/2}` for Hermitian positive definite `H`, via its eigendecomposition.
/// Eigenvalues below the pivot floor are reported as singular.
pub fn hermitian_inv_sqrt(h: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = require_square(h)?;
    let herm = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if !(lambda >= PIVOT_FLOOR) {
            return Err(LinalgError::Singular { index: j });
        }
        let s = 1.0 / lambda.sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    Ok(scaled * eig.eigenvectors.adjoint())
}

fn sequential_faer() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|c| c.im == 0.0)
}

/// Singular values in descending order.
pub fn svd_values(m: &CMatrix) -> Result<Vec<f64>, LinalgError> {
    sequential_faer();
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut values = if is_real(m) {
        faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re).singular_values()
    } else {
        faer::Mat::<faer::c64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]).singular_values()
    }
    .map_err(|_| LinalgError::NoConvergence("singular value decomposition"))?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Eigenvalues of a square matrix of dimension at most [`EIGVALS_CAP`].
pub fn eigvals(m: &CMatrix) -> Result<Vec<Complex64>, LinalgError> {
    sequential_faer();
    let n = require_square(m)?;
    if n > EIGVALS_CAP {
        return Err(LinalgError::SizeCap { dim: n, cap: EIGVALS_CAP });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if is_real(m) {
        faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].re).eigenvalues()
    } else {
        faer::Mat::<faer::c64>::from_fn(n, n, |i, j| m[(i, j)]).eigenvalues()
    }
    .map_err(|_| LinalgError::NoConvergence("eigenvalue iteration"))
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> Result<f64, LinalgError> {
    Ok(svd_values(m)?.first().copied().unwrap_or(0.0))
}
