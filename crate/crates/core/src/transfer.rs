//! Transfer-matrix evaluation of block tridiagonal determinants.
//!
//! A frame is a `2ℓ×ℓ` matrix whose top half is the current block column
//! `x_k` and bottom half is `x_{k−1}`. The transfer map
//! `M_k = [[−B_k⁻¹(A_k−z), −B_k⁻¹C_k], [I, 0]]` advances it by one block.
//! Frames are re-orthonormalized by a thin QR and the log-volume growth
//! `Σ log R_ii` is accumulated, so the exterior power `∧^ℓ` is only ever
//! handled through frames (explicit wedge matrices exist for validation at
//! `ℓ ≤ 4`).

use crate::entropy::{AtomLaw, SeedScheme};
use crate::model::{standard_pi, standard_xi, BlockTridiagonal};
use crate::numerics::{
    det, hermitian_inv_sqrt, lu_logdet, orthonormality_residual, qr_thin, CMatrix, LinalgError, Lu,
};
use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

/// Largest `ℓ` accepted by [`wedge_power_small`].
pub const WEDGE_MAX_ELL: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransferError {
    #[error("B_{step} is singular")]
    SingularB { step: usize },
    #[error("frame became rank deficient at step {step}")]
    Degenerate { step: usize },
    #[error("start frame is not orthonormal (residual {residual:e})")]
    StartNotOrthonormal { residual: f64 },
    #[error("frame Gram matrix is singular")]
    SingularFrame,
    #[error("wedge power needs 2ℓ×2ℓ input with ℓ <= {WEDGE_MAX_ELL}, got {rows}x{cols}")]
    WedgeSize { rows: usize, cols: usize },
    #[error("no admissible subsystem length for n = {n}")]
    NoAdmissibleSplit { n: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferState {
    /// `2ℓ×ℓ` frame with orthonormal columns.
    pub frame: CMatrix,
    /// Running `Σ log R_ii`.
    pub log_accum: f64,
    /// Number of transfer maps applied.
    pub step: usize,
}

impl TransferState {
    pub fn new(frame: CMatrix) -> Self {
        Self { frame, log_accum: 0.0, step: 0 }
    }
}

/// Per-renormalization log-volume increments and their sum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CocycleTrace {
    pub increments: Vec<f64>,
    pub total: f64,
}

impl CocycleTrace {
    fn push(&mut self, g: f64) {
        self.increments.push(g);
        self.total += g;
    }
}

fn shifted(a: &CMatrix, z: Complex64) -> CMatrix {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] -= z;
    }
    m
}

fn transfer_with(lu_b: &Lu, a: &CMatrix, c: &CMatrix, z: Complex64, frame: &CMatrix) -> Result<CMatrix, LinalgError> {
    let ell = a.nrows();
    let u = frame.rows(0, ell);
    let v = frame.rows(ell, ell);
    let w = a * u - u * z + c * v;
    let x = lu_b.solve(&(-w))?;
    let mut out = CMatrix::zeros(2 * ell, frame.ncols());
    out.rows_mut(0, ell).copy_from(&x);
    out.rows_mut(ell, ell).copy_from(&u);
    Ok(out)
}

/// `M_k·frame` through a solve against `B`; `B⁻¹` is never formed.
pub fn apply_transfer(
    a: &CMatrix,
    b: &CMatrix,
    c: &CMatrix,
    z: Complex64,
    frame: &CMatrix,
) -> Result<CMatrix, TransferError> {
    let lu = Lu::factor(b).map_err(|_| TransferError::SingularB { step: 1 })?;
    Ok(transfer_with(&lu, a, c, z, frame)?)
}

/// The dense `2ℓ×2ℓ` transfer matrix, for validation and wedge checks.
pub fn transfer_matrix(a: &CMatrix, b: &CMatrix, c: &CMatrix, z: Complex64) -> Result<CMatrix, TransferError> {
    let ell = a.nrows();
    let mut rhs = CMatrix::zeros(ell, 2 * ell);
    rhs.columns_mut(0, ell).copy_from(&shifted(a, z));
    rhs.columns_mut(ell, ell).copy_from(c);
    let top = -Lu::factor(b).map_err(|_| TransferError::SingularB { step: 1 })?.solve(&rhs)?;
    let mut m = CMatrix::zeros(2 * ell, 2 * ell);
    m.rows_mut(0, ell).copy_from(&top);
    m.view_mut((ell, 0), (ell, ell)).fill_with_identity();
    Ok(m)
}

/// One transfer step followed by renormalization. Returns the new state and
/// the increment `g = Σ log R_ii`.
pub fn cocycle_step(
    state: &TransferState,
    a: &CMatrix,
    b: &CMatrix,
    c: &CMatrix,
    z: Complex64,
) -> Result<(TransferState, f64), TransferError> {
    let step = state.step + 1;
    let lu = Lu::factor(b).map_err(|_| TransferError::SingularB { step })?;
    let y = transfer_with(&lu, a, c, z, &state.frame)?;
    let (q, r) = qr_thin(&y).map_err(|_| TransferError::Degenerate { step })?;
    let g: f64 = (0..r.nrows()).map(|i| r[(i, i)].re.ln()).sum();
    Ok((TransferState { frame: q, log_accum: state.log_accum + g, step }, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub state: TransferState,
    pub trace: CocycleTrace,
    /// `Σ_k log|det B_k|`.
    pub block_logdet: f64,
}

/// Runs all `n` transfer maps of `model` from an orthonormal `start` frame,
/// renormalizing after every `cadence` steps and after the last one.
pub fn propagate(model: &BlockTridiagonal, z: Complex64, start: &CMatrix, cadence: usize) -> Result<Propagation, TransferError> {
    let ell = model.ell;
    if start.shape() != (2 * ell, ell) {
        return Err(TransferError::Invalid(format!("start frame must be {}x{ell}", 2 * ell)));
    }
    if cadence == 0 {
        return Err(TransferError::Invalid("renormalization cadence must be positive".into()));
    }
    let residual = orthonormality_residual(start);
    if !(residual <= 1e-10) {
        return Err(TransferError::StartNotOrthonormal { residual });
    }
    let mut state = TransferState::new(start.clone());
    let mut trace = CocycleTrace::default();
    let mut block_logdet = 0.0;
    let mut y = start.clone();
    for k in 0..model.n {
        let step = k + 1;
        let lu = Lu::factor(&model.b[k]).map_err(|_| TransferError::SingularB { step })?;
        block_logdet += lu.log_det().log_abs;
        y = transfer_with(&lu, &model.a[k], &model.c[k], z, &y)?;
        if step % cadence == 0 || step == model.n {
            let (q, r) = qr_thin(&y).map_err(|_| TransferError::Degenerate { step })?;
            let g: f64 = (0..ell).map(|i| r[(i, i)].re.ln()).sum();
            trace.push(g);
            state.log_accum += g;
            y = q;
        }
        state.step = step;
    }
    state.frame = y;
    Ok(Propagation { state, trace, block_logdet })
}

/// Components of the transfer evaluation of a bordered determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferLogDet {
    /// `Σ log|det B_k|`.
    pub block_logdet: f64,
    /// `Σ log|det R_k|`.
    pub cocycle: f64,
    /// `log|det(Q̃₊ Q_n)|`, `−∞` when degenerate.
    pub pairing: f64,
    /// The pairing fell below the pivot floor.
    pub degenerate: bool,
    /// `log|det(𝒯 − z·I_mid)|` of the bordered matrix with normalized frames;
    /// for the standard frames this is `log|det(T − zI)|`.
    pub total: f64,
    /// `log|det(Π·M_n⋯M_1·Ξ)|`.
    pub pro: f64,
    pub trace: CocycleTrace,
}

fn normalize_frames(pi: &CMatrix, xi: &CMatrix) -> Result<(CMatrix, CMatrix, f64), TransferError> {
    let pi_gram = pi * pi.adjoint();
    let xi_gram = xi.adjoint() * xi;
    let gram_logdet = |g: &CMatrix| lu_logdet(g).map(|d| d.log_abs).map_err(|_| TransferError::SingularFrame);
    let correction = 0.5 * (gram_logdet(&pi_gram)? + gram_logdet(&xi_gram)?);
    let q_minus = xi * hermitian_inv_sqrt(&xi_gram).map_err(|_| TransferError::SingularFrame)?;
    let q_plus = hermitian_inv_sqrt(&pi_gram).map_err(|_| TransferError::SingularFrame)? * pi;
    Ok((q_plus, q_minus, correction))
}

/// Log-determinant through the frame recursion with boundary frames
/// `Π` (ℓ×2ℓ) and `Ξ` (2ℓ×ℓ) of full rank.
pub fn logdet_via_transfer(model: &BlockTridiagonal, z: Complex64, pi: &CMatrix, xi: &CMatrix) -> Result<TransferLogDet, TransferError> {
    let ell = model.ell;
    if pi.shape() != (ell, 2 * ell) || xi.shape() != (2 * ell, ell) {
        return Err(TransferError::Invalid(format!("frames must be {ell}x{0} and {0}x{ell}", 2 * ell)));
    }
    let (q_plus, q_minus, correction) = normalize_frames(pi, xi)?;
    let prop = propagate(model, z, &q_minus, 1)?;
    let (pairing, degenerate) = match lu_logdet(&(&q_plus * &prop.state.frame)) {
        Ok(d) => (d.log_abs, false),
        Err(LinalgError::Singular { .. }) => (f64::NEG_INFINITY, true),
        Err(e) => return Err(e.into()),
    };
    let cocycle = prop.state.log_accum;
    Ok(TransferLogDet {
        block_logdet: prop.block_logdet,
        cocycle,
        pairing,
        degenerate,
        total: prop.block_logdet + cocycle + pairing,
        pro: cocycle + pairing + correction,
        trace: prop.trace,
    })
}

/// `log|det(T − zI)|` of the plain matrix, via the standard frames.
pub fn plain_logdet(model: &BlockTridiagonal, z: Complex64) -> Result<f64, TransferError> {
    Ok(logdet_via_transfer(model, z, &standard_pi(model.ell), &standard_xi(model.ell))?.total)
}

/// `log‖∧^ℓ(M_n⋯M_1)·∧^ℓΞ‖` for a full-rank frame `Ξ`.
pub fn frame_growth(model: &BlockTridiagonal, z: Complex64, xi: &CMatrix, cadence: usize) -> Result<f64, TransferError> {
    let xi_gram = xi.adjoint() * xi;
    let half_logdet = 0.5 * lu_logdet(&xi_gram).map_err(|_| TransferError::SingularFrame)?.log_abs;
    let q = xi * hermitian_inv_sqrt(&xi_gram).map_err(|_| TransferError::SingularFrame)?;
    Ok(propagate(model, z, &q, cadence)?.state.log_accum + half_logdet)
}

/// Increasing `k`-subsets of `0..d` in lexicographic order.
pub fn combinations(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            if d - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, d, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, d, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn minor(g: &CMatrix, rows: &[usize], cols: &[usize]) -> Result<Complex64, LinalgError> {
    det(&CMatrix::from_fn(rows.len(), cols.len(), |i, j| g[(rows[i], cols[j])]))
}

/// `∧^ℓ g` for a `2ℓ×2ℓ` matrix in the lexicographic basis of ℓ-subsets.
pub fn wedge_power_small(g: &CMatrix) -> Result<CMatrix, TransferError> {
    let (rows, cols) = g.shape();
    if rows != cols || rows % 2 != 0 || rows == 0 || rows / 2 > WEDGE_MAX_ELL {
        return Err(TransferError::WedgeSize { rows, cols });
    }
    let subsets = combinations(rows, rows / 2);
    let dim = subsets.len();
    let mut out = CMatrix::zeros(dim, dim);
    for (i, rs) in subsets.iter().enumerate() {
        for (j, cs) in subsets.iter().enumerate() {
            out[(i, j)] = minor(g, rs, cs)?;
        }
    }
    Ok(out)
}

/// Plücker coordinates of a `2ℓ×ℓ` frame: all maximal row minors in
/// lexicographic order, i.e. `∧^ℓ` of the frame's columns.
pub fn wedge_vector(frame: &CMatrix) -> Result<DVector<Complex64>, TransferError> {
    let (rows, ell) = frame.shape();
    if rows != 2 * ell || ell == 0 || ell > WEDGE_MAX_ELL {
        return Err(TransferError::WedgeSize { rows, cols: ell });
    }
    let all: Vec<usize> = (0..ell).collect();
    let subsets = combinations(rows, ell);
    let mut v = DVector::zeros(subsets.len());
    for (i, rs) in subsets.iter().enumerate() {
        v[i] = minor(frame, rs, &all)?;
    }
    Ok(v)
}

/// A subsystem length `n₀` and the tiling of `1..=n` it induces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemSplit {
    pub n0: usize,
    /// Inclusive 1-based `(first, last)` pairs; the final one is the remainder.
    pub segments: Vec<(usize, usize)>,
}

/// Smallest `n₀ ∈ [2ℓ^d, 4ℓ^d]` whose remainder `n − n₀⌊n/n₀⌋` is at least `n₀/2`.
pub fn subsystem_split(n: usize, ell: usize, d: f64) -> Result<SubsystemSplit, TransferError> {
    if ell == 0 || !(d >= 0.0) {
        return Err(TransferError::Invalid("need ell >= 1 and d >= 0".into()));
    }
    let scale = (ell as f64).powf(d);
    let lo = ((2.0 * scale) - 1e-9).ceil().max(1.0) as usize;
    let hi = ((4.0 * scale) + 1e-9).floor() as usize;
    let n0 = (lo..=hi.min(n))
        .find(|&n0| 2 * (n % n0) >= n0)
        .ok_or(TransferError::NoAdmissibleSplit { n })?;
    let full = n / n0;
    let mut segments: Vec<(usize, usize)> = (1..=full).map(|k| ((k - 1) * n0 + 1, k * n0)).collect();
    segments.push((full * n0 + 1, n));
    Ok(SubsystemSplit { n0, segments })
}

/// Spread of `(1/nℓ)·Pro(Π, Ξ)` with `Π = [I, 0]` over a set of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationSummary {
    pub n: usize,
    pub ell: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_dev: f64,
}

pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    (mean, variance)
}

/// Runs the normalized `Pro` statistic on the given trial ids (repeats allowed).
pub fn concentration_experiment(
    n: usize,
    ell: usize,
    z: Complex64,
    law: AtomLaw,
    scheme: SeedScheme,
    trials: &[u64],
    xi: &CMatrix,
) -> Result<ConcentrationSummary, TransferError> {
    if trials.len() < 2 {
        return Err(TransferError::Invalid("need at least two trials".into()));
    }
    let pi = standard_pi(ell);
    let values = trials
        .iter()
        .map(|&t| {
            let model = BlockTridiagonal::sample(n, ell, law, scheme, t);
            Ok(logdet_via_transfer(&model, z, &pi, xi)?.pro / (n * ell) as f64)
        })
        .collect::<Result<Vec<_>, TransferError>>()?;
    let (mean, variance) = mean_and_variance(&values);
    Ok(ConcentrationSummary { n, ell, values, mean, variance, std_dev: variance.sqrt() })
}

/// [`concentration_experiment`] over several `n` with `Ξ = [I; 0]`;
/// the trial ids are shared across `n`.
pub fn concentration_sweep(
    ns: &[usize],
    ell: usize,
    z: Complex64,
    law: AtomLaw,
    scheme: SeedScheme,
    trials: &[u64],
) -> Result<Vec<ConcentrationSummary>, TransferError> {
    let xi = standard_xi(ell);
    ns.iter().map(|&n| concentration_experiment(n, ell, z, law, scheme, trials, &xi)).collect()
}

/// Whether the standard deviation strictly decreases along the sweep.
pub fn std_strictly_decreasing(sweep: &[ConcentrationSummary]) -> bool {
    sweep.windows(2).all(|w| w[1].std_dev < w[0].std_dev)
}
