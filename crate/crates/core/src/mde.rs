//! Block-constant reductions of the matrix Dyson equation for the
//! Hermitization of `T − z`.
//!
//! The bulk value `m_c(w, z)` solves `m⁻¹ = −w(1+m) + |z|²/(1+m)`. The
//! boundary chain replaces `m` in the self-energy by the three-site average
//! `(m_{i−1} + m_i + m_{i+1})/3` with `m₀ = m_{n+1} = 0`.

use crate::entropy::{AtomLaw, SeedScheme};
use crate::model::{PeriodicEnsemble, DEFAULT_MAX_DENSE};
use crate::spectra::{empirical_stieltjes, singular_values, SpectraError};
use num_complex::Complex64;
use thiserror::Error;

/// Smallest damping factor before the chain solver gives up.
pub const DAMPING_FLOOR: f64 = 1.0 / 1024.0;
const INITIAL_DAMPING: f64 = 0.5;
const MC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdeError {
    #[error("spectral parameter must have positive imaginary part, got {0}")]
    NotUpperHalfPlane(Complex64),
    #[error("no admissible root of the bulk equation at w = {w}, z = {z}")]
    NoAdmissibleRoot { w: Complex64, z: Complex64 },
    #[error("damping fell below the floor after {iterations} iterations (residual {residual:e})")]
    DampingFloor { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Right-hand side map `m ↦ [−w(1+s) + |z|²/(1+s)]⁻¹` at average `s`.
fn bulk_map(s: Complex64, w: Complex64, z2: f64) -> Complex64 {
    (-w * (one() + s) + z2 / (one() + s)).inv()
}

/// `|m − F(m)|` for the bulk equation.
pub fn mc_residual(m: Complex64, w: Complex64, z: Complex64) -> f64 {
    (m - bulk_map(m, w, z.norm_sqr())).norm()
}

/// Coefficients (highest degree first) of
/// `−w m³ − 2w m² + (|z|² − 1 − w) m − 1`.
fn cubic(w: Complex64, z2: f64) -> [Complex64; 4] {
    [-w, -2.0 * w, z2 - one() - w, -one()]
}

fn horner(p: &[Complex64], x: Complex64) -> Complex64 {
    p.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

fn derivative(p: &[Complex64; 4]) -> [Complex64; 3] {
    [3.0 * p[0], 2.0 * p[1], p[2]]
}

/// All three roots by Durand–Kerner on the monic cubic.
fn cubic_roots(p: &[Complex64; 4]) -> [Complex64; 3] {
    let monic: Vec<Complex64> = p.iter().map(|c| c / p[0]).collect();
    let seed = Complex64::new(0.4, 0.9);
    let mut r = [one(), seed, seed * seed];
    for _ in 0..500 {
        let mut delta: f64 = 0.0;
        for i in 0..3 {
            let mut denom = one();
            for j in 0..3 {
                if i != j {
                    denom *= r[i] - r[j];
                }
            }
            let step = horner(&monic, r[i]) / denom;
            r[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    r
}

fn newton_polish(p: &[Complex64; 4], mut x: Complex64) -> Complex64 {
    let dp = derivative(p);
    for _ in 0..20 {
        let d = horner(&dp, x);
        if d.norm() == 0.0 {
            break;
        }
        let step = horner(p, x) / d;
        x -= step;
        if step.norm() <= 1e-17 * x.norm().max(1.0) {
            break;
        }
    }
    x
}

/// A root is admissible when it could be the Stieltjes transform of a
/// probability measure on `[0, ∞)`: `Im m > 0` and `Im(w·m) > 0`.
fn admissible(m: Complex64, w: Complex64) -> bool {
    m.im > 0.0 && (w * m).im > 0.0 && m.is_finite()
}

fn admissible_roots(w: Complex64, z2: f64) -> Vec<Complex64> {
    let p = cubic(w, z2);
    cubic_roots(&p).into_iter().map(|r| newton_polish(&p, r)).filter(|&m| admissible(m, w)).collect()
}

/// Follows the root that behaves like `−1/w` far up the imaginary axis
/// down to `w`.
fn homotopy_root(w: Complex64, z2: f64) -> Option<Complex64> {
    const STEPS: usize = 400;
    let lift = 1e3;
    let start = w + Complex64::new(0.0, lift);
    let target = -start.inv();
    let mut m = admissible_roots(start, z2)
        .into_iter()
        .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))?;
    for k in 1..=STEPS {
        // steps shrink cubically as the path approaches w
        let remaining = (1.0 - k as f64 / STEPS as f64).powi(3);
        let wk = w + Complex64::new(0.0, lift * remaining);
        m = newton_polish(&cubic(wk, z2), m);
    }
    admissible(m, w).then_some(m)
}

/// The bulk solution `m_c(w, z)` with `Im m > 0`.
pub fn solve_mc(w: Complex64, z: Complex64) -> Result<Complex64, MdeError> {
    if !(w.im > 0.0) {
        return Err(MdeError::NotUpperHalfPlane(w));
    }
    let z2 = z.norm_sqr();
    let roots = admissible_roots(w, z2);
    let m = match roots.as_slice() {
        [m] => *m,
        _ => homotopy_root(w, z2).ok_or(MdeError::NoAdmissibleRoot { w, z })?,
    };
    if mc_residual(m, w, z) > MC_TOL {
        return Err(MdeError::NoAdmissibleRoot { w, z });
    }
    Ok(m)
}

/// Uniform bound `max(2|z|, √6)·η^{−1/2}` on `|Im m_i|` at `w = iη`.
pub fn uniform_bound(z: Complex64, eta: f64) -> f64 {
    (2.0 * z.norm()).max(6f64.sqrt()) / eta.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdeChain {
    pub n: usize,
    pub w: Complex64,
    pub z: Complex64,
    pub m: Vec<Complex64>,
    /// `sup_i |m_i − F_i(m)|`.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl MdeChain {
    /// `max_i |m_i − m_{n+1−i}|`.
    pub fn reflection_asymmetry(&self) -> f64 {
        let n = self.m.len();
        (0..n).map(|i| (self.m[i] - self.m[n - 1 - i]).norm()).fold(0.0, f64::max)
    }

    /// `max |m_i − m_c|` over sites `i ∈ [n/4, 3n/4]` (1-based).
    pub fn bulk_deviation(&self, mc: Complex64) -> f64 {
        let n = self.m.len();
        let lo = (n / 4).max(1);
        let hi = (3 * n / 4).max(lo);
        (lo..=hi).map(|i| (self.m[i - 1] - mc).norm()).fold(0.0, f64::max)
    }
}

/// The chain map `F(m)` with zero boundary values.
pub fn chain_map(m: &[Complex64], w: Complex64, z: Complex64) -> Vec<Complex64> {
    let z2 = z.norm_sqr();
    let n = m.len();
    let zero = Complex64::new(0.0, 0.0);
    (0..n)
        .map(|i| {
            let left = if i > 0 { m[i - 1] } else { zero };
            let right = if i + 1 < n { m[i + 1] } else { zero };
            bulk_map((left + m[i] + right) / 3.0, w, z2)
        })
        .collect()
}

pub fn chain_residual(m: &[Complex64], w: Complex64, z: Complex64) -> f64 {
    m.iter().zip(chain_map(m, w, z)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// Damped fixed-point iteration for the boundary chain, started at `m_c`.
/// Hitting `max_iter` returns the last iterate with `converged = false`.
pub fn solve_chain(n: usize, w: Complex64, z: Complex64, tol: f64, max_iter: usize) -> Result<MdeChain, MdeError> {
    if n == 0 {
        return Err(MdeError::Invalid("chain needs at least one site".into()));
    }
    if !(tol > 0.0) {
        return Err(MdeError::Invalid("tolerance must be positive".into()));
    }
    let mc = solve_mc(w, z)?;
    let mut m = vec![mc; n];
    let mut residual = chain_residual(&m, w, z);
    let mut damping = INITIAL_DAMPING;
    let mut iterations = 0;
    while residual > tol && iterations < max_iter {
        iterations += 1;
        let f = chain_map(&m, w, z);
        loop {
            let candidate: Vec<Complex64> = m.iter().zip(&f).map(|(a, b)| a * (1.0 - damping) + b * damping).collect();
            let positive = candidate.iter().all(|c| c.im > 0.0);
            let next = if positive { chain_residual(&candidate, w, z) } else { f64::INFINITY };
            if next <= residual {
                m = candidate;
                residual = next;
                damping = (2.0 * damping).min(INITIAL_DAMPING);
                break;
            }
            damping /= 2.0;
            if damping < DAMPING_FLOOR {
                return Err(MdeError::DampingFloor { iterations, residual });
            }
        }
    }
    Ok(MdeChain { n, w, z, m, residual, converged: residual <= tol, iterations })
}

/// Variance profile of the `nℓ × nℓ` ensemble: `s_ic = 1/(3ℓ)` when the
/// blocks of `i` and `c` are adjacent or equal (cyclically if periodic).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfEnergyProfile {
    pub n: usize,
    pub ell: usize,
    pub periodic: bool,
}

impl SelfEnergyProfile {
    pub fn dim(&self) -> usize {
        self.n * self.ell
    }

    fn neighbours(&self, a: usize, b: usize) -> bool {
        let d = a.abs_diff(b);
        d <= 1 || (self.periodic && d == self.n - 1)
    }

    pub fn entry(&self, i: usize, c: usize) -> f64 {
        if self.neighbours(i / self.ell, c / self.ell) {
            1.0 / (3.0 * self.ell as f64)
        } else {
            0.0
        }
    }

    /// `(Φ[Z])_ii = Σ_c s_ic Z_cc` on the diagonal of `Z`.
    pub fn apply(&self, diag: &[Complex64]) -> Result<Vec<Complex64>, MdeError> {
        if diag.len() != self.dim() {
            return Err(MdeError::DimensionMismatch { expected: self.dim(), got: diag.len() });
        }
        let sums: Vec<Complex64> = diag.chunks(self.ell).map(|b| b.iter().sum()).collect();
        let scale = 1.0 / (3.0 * self.ell as f64);
        let mut out = Vec::with_capacity(self.dim());
        for block in 0..self.n {
            let total: Complex64 = (0..self.n).filter(|&c| self.neighbours(block, c)).map(|c| sums[c]).sum();
            out.extend(std::iter::repeat_n(total * scale, self.ell));
        }
        Ok(out)
    }

    /// `(Φ̃[Z])_cc = Σ_i s_ic Z_ii`; equal to [`Self::apply`] for this symmetric profile.
    pub fn apply_transposed(&self, diag: &[Complex64]) -> Result<Vec<Complex64>, MdeError> {
        self.apply(diag)
    }
}

/// One row of an empirical-versus-bulk Stieltjes comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRow {
    pub ell: usize,
    pub xi: Complex64,
    pub empirical: Complex64,
    pub theory: Complex64,
    pub deviation: f64,
}

/// Trial-averaged Stieltjes transform of the squared singular values of the
/// periodic ensemble at shift `z`, compared with `m_c(ξ, z)`.
pub fn mde_vs_empirical(
    n: usize,
    ells: &[usize],
    z: Complex64,
    xis: &[Complex64],
    trials: u64,
    law: AtomLaw,
    scheme: SeedScheme,
) -> Result<Vec<DeviationRow>, MdeError> {
    if trials == 0 {
        return Err(MdeError::Invalid("need at least one trial".into()));
    }
    if let Some(&xi) = xis.iter().find(|xi| !(xi.im > 0.0)) {
        return Err(MdeError::NotUpperHalfPlane(xi));
    }
    let theory: Vec<Complex64> = xis.iter().map(|&xi| solve_mc(xi, z)).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for &ell in ells {
        let mut sums = vec![Complex64::new(0.0, 0.0); xis.len()];
        for t in 0..trials {
            let p = PeriodicEnsemble::sample(n, ell, law, scheme, t);
            let measure = singular_values(&p, z, DEFAULT_MAX_DENSE)?;
            for (s, &xi) in sums.iter_mut().zip(xis) {
                *s += empirical_stieltjes(&measure, xi)?;
            }
        }
        for ((&xi, s), &th) in xis.iter().zip(sums).zip(&theory) {
            let empirical = s / trials as f64;
            rows.push(DeviationRow { ell, xi, empirical, theory: th, deviation: (empirical - th).norm() });
        }
    }
    Ok(rows)
}

/// `(1/π)·Im m(E + iη)` on a grid of energies.
pub fn density_from_stieltjes<F>(m: F, energies: &[f64], eta: f64) -> Result<Vec<f64>, MdeError>
where
    F: Fn(Complex64) -> Result<Complex64, MdeError>,
{
    if !(eta > 0.0) {
        return Err(MdeError::Invalid("eta must be positive".into()));
    }
    energies
        .iter()
        .map(|&e| Ok((m(Complex64::new(e, eta))?.im / std::f64::consts::PI).max(0.0)))
        .collect()
}
