//! The random block tridiagonal ensemble and its bordered and periodic variants.
//!
//! Blocks are indexed from zero: `a[k]`, `b[k]`, `c[k]` are the blocks of
//! block row `k + 1`. The plain matrix only uses `c[1..]` and `b[..n-1]`;
//! the bordered matrix and the transfer recursion also use `c[0]` and
//! `b[n-1]`, so all three lists always have `n` entries.

use crate::entropy::{fill_block, sample_atom, AtomLaw, Role, SeedScheme};
use crate::numerics::{hermitian_inv_sqrt, lu_logdet, operator_norm, unitary_complement, CMatrix, LinalgError};
use num_complex::Complex64;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Default cap on the dimension of any dense realization.
pub const DEFAULT_MAX_DENSE: usize = 8192;

const MAGIC: &[u8; 4] = b"BTRI";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dense dimension {dim} exceeds the cap {cap}")]
    SizeCap { dim: usize, cap: usize },
    #[error("frame normalization violated: {0}")]
    FrameNormalization(String),
    #[error("frame Gram matrix is numerically singular")]
    SingularGram,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed ensemble file: {0}")]
    Format(String),
}

/// Something with a dense realization at a complex shift.
pub trait Realize {
    /// Total dimension of the dense matrix.
    fn dim(&self) -> usize;

    /// The shifted dense matrix; errors when `dim() > cap`.
    fn dense(&self, z: Complex64, cap: usize) -> Result<CMatrix, ModelError>;
}

fn check_cap(dim: usize, cap: usize) -> Result<(), ModelError> {
    if dim > cap {
        Err(ModelError::SizeCap { dim, cap })
    } else {
        Ok(())
    }
}

/// Seed provenance of a sampled ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRecord {
    pub master: u64,
    pub trial: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    pub n: usize,
    pub ell: usize,
    pub a: Vec<CMatrix>,
    pub b: Vec<CMatrix>,
    pub c: Vec<CMatrix>,
    pub law: AtomLaw,
    pub seed: SeedRecord,
}

impl BlockTridiagonal {
    /// Samples all blocks, each from its own `(trial, block, role)` stream.
    pub fn sample(n: usize, ell: usize, law: AtomLaw, scheme: SeedScheme, trial: u64) -> Self {
        assert!(n >= 1 && ell >= 1, "n and ell must be positive");
        let blocks = |role| {
            (0..n)
                .map(|k| fill_block(ell, law, &mut scheme.stream(trial, k as u64, role)))
                .collect::<Vec<_>>()
        };
        Self {
            n,
            ell,
            a: blocks(Role::Diagonal),
            b: blocks(Role::Upper),
            c: blocks(Role::Lower),
            law,
            seed: SeedRecord { master: scheme.master, trial },
        }
    }

    /// Deterministic ensemble from explicit blocks (each list of length `n`).
    pub fn from_blocks(a: Vec<CMatrix>, b: Vec<CMatrix>, c: Vec<CMatrix>) -> Self {
        let n = a.len();
        assert!(n >= 1 && b.len() == n && c.len() == n, "block lists must all have length n >= 1");
        let ell = a[0].nrows();
        assert!(
            a.iter().chain(&b).chain(&c).all(|m| m.nrows() == ell && m.ncols() == ell),
            "all blocks must be {ell}x{ell}"
        );
        Self {
            n,
            ell,
            a,
            b,
            c,
            law: AtomLaw::RealGaussian,
            seed: SeedRecord { master: 0, trial: 0 },
        }
    }

    pub fn zeros(n: usize, ell: usize) -> Self {
        let z = || vec![CMatrix::zeros(ell, ell); n];
        Self::from_blocks(z(), z(), z())
    }

    /// Largest operator norms over the A, B and C lists.
    pub fn max_block_norms(&self) -> Result<[f64; 3], LinalgError> {
        let mut out = [0.0; 3];
        for (slot, list) in out.iter_mut().zip([&self.a, &self.b, &self.c]) {
            for m in list {
                *slot = f64::max(*slot, operator_norm(m)?);
            }
        }
        Ok(out)
    }

    /// Writes the ensemble in the little-endian binary format.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.ell as u64).to_le_bytes())?;
        w.write_all(&[self.law.tag()])?;
        w.write_all(&self.law.smoothing_exponent().to_le_bytes())?;
        w.write_all(&self.seed.master.to_le_bytes())?;
        w.write_all(&self.seed.trial.to_le_bytes())?;
        for m in self.a.iter().chain(&self.b).chain(&self.c) {
            for i in 0..self.ell {
                for j in 0..self.ell {
                    w.write_all(&m[(i, j)].re.to_le_bytes())?;
                    w.write_all(&m[(i, j)].im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, ModelError> {
        fn take<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K], ModelError> {
            let mut buf = [0u8; K];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        if &take::<4, _>(&mut r)? != MAGIC {
            return Err(ModelError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(take(&mut r)?) as usize;
        let ell = u64::from_le_bytes(take(&mut r)?) as usize;
        if n == 0 || ell == 0 {
            return Err(ModelError::Format("zero dimension".into()));
        }
        let [tag] = take::<1, _>(&mut r)?;
        let exponent = f64::from_le_bytes(take(&mut r)?);
        let law = AtomLaw::from_tag(tag, exponent).ok_or_else(|| ModelError::Format(format!("unknown law tag {tag}")))?;
        let master = u64::from_le_bytes(take(&mut r)?);
        let trial = u64::from_le_bytes(take(&mut r)?);
        let read_list = |r: &mut R| -> Result<Vec<CMatrix>, ModelError> {
            (0..n)
                .map(|_| {
                    let mut m = CMatrix::zeros(ell, ell);
                    for i in 0..ell {
                        for j in 0..ell {
                            let re = f64::from_le_bytes(take(r)?);
                            let im = f64::from_le_bytes(take(r)?);
                            m[(i, j)] = Complex64::new(re, im);
                        }
                    }
                    Ok(m)
                })
                .collect()
        };
        let a = read_list(&mut r)?;
        let b = read_list(&mut r)?;
        let c = read_list(&mut r)?;
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(ModelError::Format("trailing bytes".into()));
        }
        Ok(Self { n, ell, a, b, c, law, seed: SeedRecord { master, trial } })
    }
}

fn place(m: &mut CMatrix, ell: usize, row: usize, col: usize, block: &CMatrix) {
    let mut view = m.view_mut((row * ell, col * ell), (ell, ell));
    view += block;
}

fn subtract_shift(m: &mut CMatrix, z: Complex64, range: std::ops::Range<usize>) {
    for i in range {
        m[(i, i)] -= z;
    }
}

impl Realize for BlockTridiagonal {
    fn dim(&self) -> usize {
        self.n * self.ell
    }

    /// `T − zI`.
    fn dense(&self, z: Complex64, cap: usize) -> Result<CMatrix, ModelError> {
        check_cap(self.dim(), cap)?;
        let (n, ell) = (self.n, self.ell);
        let mut m = CMatrix::zeros(n * ell, n * ell);
        for k in 0..n {
            place(&mut m, ell, k, k, &self.a[k]);
            if k + 1 < n {
                place(&mut m, ell, k, k + 1, &self.b[k]);
            }
            if k > 0 {
                place(&mut m, ell, k, k - 1, &self.c[k]);
            }
        }
        subtract_shift(&mut m, z, 0..n * ell);
        Ok(m)
    }
}

/// The plain ensemble with two extra independent corner blocks: `C₀` in the
/// top-right block position and `B_{n+1}` in the bottom-left one. For `n < 3`
/// the corners land on already occupied positions and are added to them.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicEnsemble {
    pub inner: BlockTridiagonal,
    pub corner_top_right: CMatrix,
    pub corner_bottom_left: CMatrix,
}

impl PeriodicEnsemble {
    /// Shares every interior block with `BlockTridiagonal::sample` at the same
    /// seed; the corners come from their own roles.
    pub fn sample(n: usize, ell: usize, law: AtomLaw, scheme: SeedScheme, trial: u64) -> Self {
        let inner = BlockTridiagonal::sample(n, ell, law, scheme, trial);
        let corner = |role| fill_block(ell, law, &mut scheme.stream(trial, 0, role));
        Self {
            inner,
            corner_top_right: corner(Role::CornerTopRight),
            corner_bottom_left: corner(Role::CornerBottomLeft),
        }
    }
}

impl Realize for PeriodicEnsemble {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn dense(&self, z: Complex64, cap: usize) -> Result<CMatrix, ModelError> {
        let mut m = self.inner.dense(z, cap)?;
        let (n, ell) = (self.inner.n, self.inner.ell);
        place(&mut m, ell, 0, n - 1, &self.corner_top_right);
        place(&mut m, ell, n - 1, 0, &self.corner_bottom_left);
        Ok(m)
    }
}

/// The bordered matrix of size `(n+2)ℓ`: the interior block rows of `inner`
/// framed by a unitary top row `[V, U]` and bottom row `[S, C₊]`.
///
/// In transfer coordinates a frame has the current column `x_k` on top and
/// `x_{k−1}` below. The top row annihilates exactly `range(Ξ)` in the
/// coordinates `(x₁, x₀)`, and the bottom row is the normalized `Π` acting on
/// `(x_{n+1}, x_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderedEnsemble {
    pub inner: BlockTridiagonal,
    /// `[V, U]`, multiplying `(x₀, x₁)`.
    pub top_row: CMatrix,
    /// `[S, C₊]`, multiplying `(x_n, x_{n+1})`.
    pub bottom_row: CMatrix,
    pub pi: CMatrix,
    pub xi: CMatrix,
    /// `Ξ(Ξ*Ξ)^{−1/2}`.
    pub q_minus: CMatrix,
    /// `(ΠΠ*)^{−1/2}Π`.
    pub q_plus: CMatrix,
}

/// Tolerance on `det(ΠΠ*) = det(Ξ*Ξ) = 1`.
pub const FRAME_DET_TOL: f64 = 1e-10;

/// `Π = [I, 0]`, the frame used for the plain (unbordered) determinant.
pub fn standard_pi(ell: usize) -> CMatrix {
    CMatrix::identity(ell, 2 * ell)
}

/// `Ξ = [I; 0]`.
pub fn standard_xi(ell: usize) -> CMatrix {
    CMatrix::identity(2 * ell, ell)
}

/// Random complex Gaussian `2ℓ×ℓ` frame scaled so that `det(Ξ*Ξ) = 1`.
/// Its adjoint is a valid `Π`.
pub fn random_unit_frame<R: rand::Rng + ?Sized>(ell: usize, rng: &mut R) -> CMatrix {
    let xi = CMatrix::from_fn(2 * ell, ell, |_, _| sample_atom(AtomLaw::ComplexGaussian, ell, rng));
    let log_gram = lu_logdet(&(xi.adjoint() * &xi)).map(|d| d.log_abs).unwrap_or(0.0);
    xi * Complex64::new((-log_gram / (2.0 * ell as f64)).exp(), 0.0)
}

fn unit_gram_det(g: &CMatrix, name: &str) -> Result<(), ModelError> {
    let ld = lu_logdet(g).map_err(|_| ModelError::SingularGram)?;
    let det = ld.value();
    if (det - Complex64::new(1.0, 0.0)).norm() > FRAME_DET_TOL {
        return Err(ModelError::FrameNormalization(format!("det({name}) = {det}")));
    }
    Ok(())
}

/// Assembles the bordered ensemble from an interior and boundary frames
/// `Π` (ℓ×2ℓ) and `Ξ` (2ℓ×ℓ) with unit Gram determinants.
pub fn build_bordered(inner: BlockTridiagonal, pi: CMatrix, xi: CMatrix) -> Result<BorderedEnsemble, ModelError> {
    let ell = inner.ell;
    if pi.shape() != (ell, 2 * ell) || xi.shape() != (2 * ell, ell) {
        return Err(ModelError::FrameNormalization(format!(
            "frames must be {ell}x{} and {}x{ell}",
            2 * ell,
            2 * ell
        )));
    }
    let xi_gram = xi.adjoint() * &xi;
    let pi_gram = &pi * pi.adjoint();
    unit_gram_det(&xi_gram, "Ξ*Ξ")?;
    unit_gram_det(&pi_gram, "ΠΠ*")?;
    let q_minus = &xi * hermitian_inv_sqrt(&xi_gram).map_err(|_| ModelError::SingularGram)?;
    let q_plus = hermitian_inv_sqrt(&pi_gram).map_err(|_| ModelError::SingularGram)? * &pi;

    // (Q⊥)* = [U V] in frame coordinates (x₁, x₀); the matrix row takes (x₀, x₁).
    let perp_adj = unitary_complement(&q_minus)?.adjoint();
    let mut top_row = CMatrix::zeros(ell, 2 * ell);
    top_row.columns_mut(0, ell).copy_from(&perp_adj.columns(ell, ell));
    top_row.columns_mut(ell, ell).copy_from(&perp_adj.columns(0, ell));

    // Q̃₊ = [C₊ S] in (x_{n+1}, x_n); the matrix row takes (x_n, x_{n+1}).
    let mut bottom_row = CMatrix::zeros(ell, 2 * ell);
    bottom_row.columns_mut(0, ell).copy_from(&q_plus.columns(ell, ell));
    bottom_row.columns_mut(ell, ell).copy_from(&q_plus.columns(0, ell));

    Ok(BorderedEnsemble { inner, top_row, bottom_row, pi, xi, q_minus, q_plus })
}

impl BorderedEnsemble {
    /// Bordered ensemble with the standard frames `Π = [I, 0]`, `Ξ = [I; 0]`.
    pub fn standard(inner: BlockTridiagonal) -> Self {
        let ell = inner.ell;
        build_bordered(inner, standard_pi(ell), standard_xi(ell)).expect("standard frames are normalized")
    }

    /// `max |RR* − I|` over both boundary rows.
    pub fn boundary_unitarity_residual(&self) -> f64 {
        let id = CMatrix::identity(self.inner.ell, self.inner.ell);
        [&self.top_row, &self.bottom_row]
            .iter()
            .map(|r| (*r * r.adjoint() - &id).iter().map(|c| c.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Checks `‖𝒯‖ ≤ 2 + 10(max‖A‖ + max‖B‖ + max‖C‖)` on the unshifted matrix.
    pub fn operator_norm_check(&self, cap: usize) -> Result<bool, ModelError> {
        let norm = operator_norm(&self.dense(Complex64::new(0.0, 0.0), cap)?)?;
        let [a, b, c] = self.inner.max_block_norms()?;
        Ok(norm <= 2.0 + 10.0 * (a + b + c))
    }
}

impl Realize for BorderedEnsemble {
    fn dim(&self) -> usize {
        (self.inner.n + 2) * self.inner.ell
    }

    /// `𝒯 − z·I_mid`: the shift touches only the interior block rows.
    fn dense(&self, z: Complex64, cap: usize) -> Result<CMatrix, ModelError> {
        check_cap(self.dim(), cap)?;
        let (n, ell) = (self.inner.n, self.inner.ell);
        let dim = self.dim();
        let mut m = CMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (ell, 2 * ell)).copy_from(&self.top_row);
        m.view_mut(((n + 1) * ell, n * ell), (ell, 2 * ell)).copy_from(&self.bottom_row);
        for k in 0..n {
            let row = k + 1;
            place(&mut m, ell, row, row - 1, &self.inner.c[k]);
            place(&mut m, ell, row, row, &self.inner.a[k]);
            place(&mut m, ell, row, row + 1, &self.inner.b[k]);
        }
        subtract_shift(&mut m, z, ell..(n + 1) * ell);
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::qr_thin;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scheme() -> SeedScheme {
        SeedScheme::new(0x5eed)
    }

    /// Random frame rescaled so that its Gram determinant is one.
    fn normalized_xi(ell: usize, seed: u64) -> CMatrix {
        let mut rng = SeedScheme::new(seed).stream(0, 0, Role::Frame);
        let raw = crate::entropy::fill_square(2 * ell, AtomLaw::ComplexGaussian, ell, 1.0, &mut rng);
        let xi = raw.columns(0, ell).into_owned();
        let ld = lu_logdet(&(xi.adjoint() * &xi)).unwrap().log_abs;
        xi * c((-ld / (2.0 * ell as f64)).exp(), 0.0)
    }

    #[test]
    fn smallest_case() {
        let t = BlockTridiagonal::sample(1, 1, AtomLaw::RealGaussian, scheme(), 0);
        let d = t.dense(c(0.0, 0.0), DEFAULT_MAX_DENSE).unwrap();
        assert_eq!(d.shape(), (1, 1));
        assert_eq!(d[(0, 0)], t.a[0][(0, 0)]);
    }

    #[test]
    fn sparsity_pattern() {
        let t = BlockTridiagonal::sample(3, 2, AtomLaw::ComplexGaussian, scheme(), 1);
        let d = t.dense(c(0.0, 0.0), DEFAULT_MAX_DENSE).unwrap();
        assert_eq!(d.shape(), (6, 6));
        assert!(d.view((0, 4), (2, 2)).iter().all(|v| *v == c(0.0, 0.0)));
        assert!(d.view((4, 0), (2, 2)).iter().all(|v| *v == c(0.0, 0.0)));
        let nonzero = d.iter().filter(|v| **v != c(0.0, 0.0)).count();
        assert!(nonzero <= (3 * 3 - 2) * 4);
        // unshifted dense is exactly the block assembly
        assert_eq!(d.view((2, 4), (2, 2)), t.b[1]);
        assert_eq!(d.view((2, 0), (2, 2)), t.c[1]);
    }

    #[test]
    fn frobenius_normalization() {
        let (n, ell, trials) = (100, 20, 20);
        let mean: f64 = (0..trials)
            .map(|t| {
                let m = BlockTridiagonal::sample(n, ell, AtomLaw::RealGaussian, scheme(), t)
                    .dense(c(0.0, 0.0), DEFAULT_MAX_DENSE)
                    .unwrap();
                m.norm_squared() / (n * ell) as f64
            })
            .sum::<f64>()
            / trials as f64;
        // (3n − 2)ℓ² entries of variance 1/(3ℓ) over N = nℓ
        let expected = (3 * n - 2) as f64 / (3 * n) as f64;
        assert!((mean - expected).abs() < 0.05 * expected, "{mean}");
        assert!((mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn size_cap_is_enforced() {
        let t = BlockTridiagonal::zeros(4, 3);
        assert!(matches!(t.dense(c(0.0, 0.0), 11), Err(ModelError::SizeCap { dim: 12, cap: 11 })));
    }

    #[test]
    fn bordered_shift_only_on_middle() {
        let t = BlockTridiagonal::sample(1, 1, AtomLaw::RealGaussian, scheme(), 2);
        let bordered = BorderedEnsemble::standard(t);
        let z = c(1.0, 0.0);
        let shifted = bordered.dense(z, DEFAULT_MAX_DENSE).unwrap();
        let plain = bordered.dense(c(0.0, 0.0), DEFAULT_MAX_DENSE).unwrap();
        let diff = plain - shifted;
        assert_eq!(diff[(0, 0)], c(0.0, 0.0));
        assert_eq!(diff[(1, 1)], z);
        assert_eq!(diff[(2, 2)], c(0.0, 0.0));
    }

    #[test]
    fn standard_frames_boundary_rows() {
        let ell = 2;
        let b = BorderedEnsemble::standard(BlockTridiagonal::zeros(3, ell));
        // U = 0 and V unitary
        assert!(b.top_row.columns(ell, ell).norm() < 1e-14);
        let v = b.top_row.columns(0, ell).into_owned();
        assert!((&v * v.adjoint() - CMatrix::identity(ell, ell)).norm() < 1e-12);
        // [S, C₊] = [0, I]
        assert!(b.bottom_row.columns(0, ell).norm() < 1e-14);
        assert!((b.bottom_row.columns(ell, ell) - CMatrix::identity(ell, ell)).norm() < 1e-14);
    }

    #[test]
    fn two_dimensional_complement() {
        let inner = BlockTridiagonal::zeros(1, 1);
        let pi = CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let xi = CMatrix::from_column_slice(2, 1, &[c(0.0, 0.0), c(1.0, 0.0)]);
        let b = build_bordered(inner, pi, xi).unwrap();
        // the top row, read in frame order (x₁, x₀), is orthogonal to Ξ = (0, 1)
        let frame_order = [b.top_row[(0, 1)], b.top_row[(0, 0)]];
        assert!((frame_order[0].norm() - 1.0).abs() < 1e-14);
        assert!(frame_order[1].norm() < 1e-14);
    }

    #[test]
    fn random_frames_satisfy_invariants() {
        for seed in 0..10 {
            let ell = 1 + (seed as usize % 4);
            let xi = normalized_xi(ell, seed);
            let pi = normalized_xi(ell, seed + 100).adjoint();
            let t = BlockTridiagonal::sample(3, ell, AtomLaw::ComplexGaussian, scheme(), seed);
            let b = build_bordered(t, pi, xi).unwrap();
            assert!(b.boundary_unitarity_residual() < 1e-12);
            let frame = random_unit_frame(ell, &mut scheme().stream(seed, 0, Role::Frame));
            assert!((lu_logdet(&(frame.adjoint() * &frame)).unwrap().value() - c(1.0, 0.0)).norm() < 1e-10);
            // top row annihilates range(Ξ) in frame coordinates
            let mut swapped = CMatrix::zeros(ell, 2 * ell);
            swapped.columns_mut(0, ell).copy_from(&b.top_row.columns(ell, ell));
            swapped.columns_mut(ell, ell).copy_from(&b.top_row.columns(0, ell));
            assert!((swapped * &b.xi).norm() < 1e-12);
        }
    }

    #[test]
    fn frame_errors() {
        let inner = BlockTridiagonal::zeros(2, 2);
        let xi = standard_xi(2) * c(2.0, 0.0);
        assert!(matches!(
            build_bordered(inner.clone(), standard_pi(2), xi),
            Err(ModelError::FrameNormalization(_))
        ));
        assert!(matches!(
            build_bordered(inner, standard_pi(2), CMatrix::zeros(4, 2)),
            Err(ModelError::SingularGram)
        ));
    }

    #[test]
    fn operator_norm_bound() {
        let zero = BorderedEnsemble::standard(BlockTridiagonal::zeros(6, 4));
        let norm = operator_norm(&zero.dense(c(0.0, 0.0), DEFAULT_MAX_DENSE).unwrap()).unwrap();
        assert!(norm <= 2.0 + 1e-12);
        assert!(zero.operator_norm_check(DEFAULT_MAX_DENSE).unwrap());

        let t = BlockTridiagonal::sample(6, 4, AtomLaw::RealGaussian, scheme(), 3);
        assert!(BorderedEnsemble::standard(t).operator_norm_check(DEFAULT_MAX_DENSE).unwrap());
        for trial in 0..50 {
            let t = BlockTridiagonal::sample(8, 8, AtomLaw::ComplexGaussian, scheme(), 100 + trial);
            let xi = normalized_xi(8, trial);
            let pi = normalized_xi(8, trial + 1000).adjoint();
            let b = build_bordered(t, pi, xi).unwrap();
            assert!(b.operator_norm_check(DEFAULT_MAX_DENSE).unwrap());
        }
    }

    #[test]
    fn periodic_differs_only_in_corners() {
        let (n, ell) = (5, 3);
        let p = PeriodicEnsemble::sample(n, ell, AtomLaw::RealGaussian, scheme(), 4);
        let plain = BlockTridiagonal::sample(n, ell, AtomLaw::RealGaussian, scheme(), 4);
        assert_eq!(p.inner, plain);
        let z = c(0.3, -0.2);
        let diff = p.dense(z, DEFAULT_MAX_DENSE).unwrap() - plain.dense(z, DEFAULT_MAX_DENSE).unwrap();
        let changed = diff.iter().filter(|v| **v != c(0.0, 0.0)).count();
        assert_eq!(changed, 2 * ell * ell);
        assert_eq!(diff.view((0, (n - 1) * ell), (ell, ell)), p.corner_top_right);
        assert_eq!(diff.view(((n - 1) * ell, 0), (ell, ell)), p.corner_bottom_left);
        // every block row of the periodic matrix carries exactly three blocks
        let d = p.dense(c(0.0, 0.0), DEFAULT_MAX_DENSE).unwrap();
        for i in 0..n * ell {
            assert_eq!(d.row(i).iter().filter(|v| **v != c(0.0, 0.0)).count(), 3 * ell);
        }
    }

    #[test]
    fn periodic_small_n_wraps() {
        let p = PeriodicEnsemble::sample(1, 2, AtomLaw::RealGaussian, scheme(), 5);
        let d = p.dense(c(0.0, 0.0), DEFAULT_MAX_DENSE).unwrap();
        let expected = &p.inner.a[0] + &p.corner_top_right + &p.corner_bottom_left;
        assert!((d - expected).norm() < 1e-15);
    }

    #[test]
    fn dump_format_header() {
        let t = BlockTridiagonal::sample(2, 1, AtomLaw::SmoothedRademacher { exponent: 1.5 }, scheme(), 9);
        let mut bytes = Vec::new();
        t.dump(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"BTRI");
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 1 + 8 + 8 + 8 + 3 * 2 * 16);
        bytes.push(0);
        assert!(matches!(BlockTridiagonal::load(bytes.as_slice()), Err(ModelError::Format(_))));
        assert!(matches!(BlockTridiagonal::load(&b"XXXX"[..]), Err(ModelError::Format(_))));
    }

    #[test]
    fn qr_frames_are_valid_inputs() {
        let (q, _) = qr_thin(&normalized_xi(3, 77)).unwrap();
        let b = build_bordered(BlockTridiagonal::zeros(2, 3), q.adjoint(), q).unwrap();
        assert!((b.q_minus - &b.xi).norm() < 1e-12);
    }

    fn law_strategy() -> impl Strategy<Value = AtomLaw> {
        prop_oneof![
            Just(AtomLaw::RealGaussian),
            Just(AtomLaw::ComplexGaussian),
            Just(AtomLaw::RealUniform),
            (0.0f64..4.0).prop_map(|exponent| AtomLaw::SmoothedRademacher { exponent }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dump_load_round_trip_is_bit_exact(
            n in 1usize..6, ell in 1usize..5, master in any::<u64>(), trial in any::<u64>(), law in law_strategy()
        ) {
            let t = BlockTridiagonal::sample(n, ell, law, SeedScheme::new(master), trial);
            let mut bytes = Vec::new();
            t.dump(&mut bytes).unwrap();
            let back = BlockTridiagonal::load(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.seed, t.seed);
            prop_assert_eq!(back.law, t.law);
            for (x, y) in t.a.iter().chain(&t.b).chain(&t.c).zip(back.a.iter().chain(&back.b).chain(&back.c)) {
                for (u, v) in x.iter().zip(y.iter()) {
                    prop_assert_eq!(u.re.to_bits(), v.re.to_bits());
                    prop_assert_eq!(u.im.to_bits(), v.im.to_bits());
                }
            }
        }
    }
}
