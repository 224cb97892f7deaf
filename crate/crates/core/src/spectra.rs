//! Spectral diagnostics on dense realizations.
//!
//! Singular values enter as an [`EmpiricalMeasure`] of their squares, the
//! natural input for Stieltjes transforms of `YY*`.

use crate::entropy::{fill_square, AtomLaw, Role, SeedScheme};
use crate::model::{BlockTridiagonal, ModelError, Realize};
use crate::numerics::{eigvals, lu_logdet, svd_values, LinalgError};
use crate::transfer::{plain_logdet, TransferError};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("spectral parameter must have positive imaginary part, got {0}")]
    NotUpperHalfPlane(Complex64),
    #[error("empirical measure needs at least one finite atom")]
    Empty,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Equal-weight atoms, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(mut atoms: Vec<f64>) -> Result<Self, SpectraError> {
        if atoms.is_empty() || atoms.iter().any(|a| !a.is_finite()) {
            return Err(SpectraError::Empty);
        }
        atoms.sort_by(f64::total_cmp);
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Right-continuous CDF `μ((−∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms.partition_point(|&a| a <= x) as f64 / self.len() as f64
    }
}

/// Squared singular values of the shifted dense realization.
pub fn singular_values<E: Realize>(ensemble: &E, z: Complex64, cap: usize) -> Result<EmpiricalMeasure, SpectraError> {
    let s = svd_values(&ensemble.dense(z, cap)?)?;
    EmpiricalMeasure::new(s.into_iter().map(|v| v * v).collect())
}

/// Smallest singular value of the shifted dense realization.
pub fn least_singular_value<E: Realize>(ensemble: &E, z: Complex64, cap: usize) -> Result<f64, SpectraError> {
    let s = svd_values(&ensemble.dense(z, cap)?)?;
    Ok(s.last().copied().unwrap_or(0.0))
}

/// Number of atoms `≤ threshold`.
pub fn rigidity_count(measure: &EmpiricalMeasure, threshold: f64) -> usize {
    measure.atoms.partition_point(|&a| a <= threshold)
}

/// `(1/count)·Σ (atom − ξ)⁻¹` for `Im ξ > 0`.
pub fn empirical_stieltjes(measure: &EmpiricalMeasure, xi: Complex64) -> Result<Complex64, SpectraError> {
    if !(xi.im > 0.0) {
        return Err(SpectraError::NotUpperHalfPlane(xi));
    }
    let sum: Complex64 = measure.atoms.iter().map(|&a| (Complex64::new(a, 0.0) - xi).inv()).sum();
    Ok(sum / measure.len() as f64)
}

/// `sup_x |F_μ(x) − F_ν(x)|`, attained at an atom of either measure.
pub fn kolmogorov_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let (a, b) = (&mu.atoms, &nu.atoms);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsdSummary {
    pub eigenvalues: Vec<Complex64>,
    pub fraction_in_disk: f64,
    /// `sup_{r∈[0,1]} |F̂(r) − r²|` for the empirical radial CDF `F̂`.
    pub radial_cdf_distance: f64,
}

/// Fraction of points in the closed unit disk and the radial CDF distance
/// to the uniform law on the disk.
pub fn circular_law_stats(points: &[Complex64]) -> (f64, f64) {
    let count = points.len() as f64;
    let mut radii: Vec<f64> = points.iter().map(|p| p.norm()).collect();
    radii.sort_by(f64::total_cmp);
    let inside = radii.partition_point(|&r| r <= 1.0);
    let mut sup: f64 = 0.0;
    let mut k = 0;
    while k < inside {
        let r = radii[k];
        let below = k as f64 / count;
        let mut next = k;
        while next < radii.len() && radii[next] == r {
            next += 1;
        }
        let at = next as f64 / count;
        sup = sup.max((below - r * r).abs()).max((at - r * r).abs());
        k = next;
    }
    // left limit at r = 1 and the value there
    sup = sup.max((inside as f64 / count - 1.0).abs());
    (inside as f64 / count, sup)
}

/// Eigenvalue statistics of the unshifted dense realization.
pub fn esd<E: Realize>(ensemble: &E, cap: usize) -> Result<EsdSummary, SpectraError> {
    let eigenvalues = eigvals(&ensemble.dense(Complex64::new(0.0, 0.0), cap)?)?;
    let (fraction_in_disk, radial_cdf_distance) = circular_law_stats(&eigenvalues);
    Ok(EsdSummary { eigenvalues, fraction_in_disk, radial_cdf_distance })
}

/// `(1/N)·log|det(T − zI)|` at each grid point, via the transfer recursion.
pub fn log_potential(model: &BlockTridiagonal, zs: &[Complex64]) -> Result<Vec<f64>, SpectraError> {
    let dim = (model.n * model.ell) as f64;
    zs.iter().map(|&z| Ok(plain_logdet(model, z)? / dim)).collect()
}

/// Log-potential of the circular law.
pub fn ginibre_potential(z: Complex64) -> f64 {
    let r2 = z.norm_sqr();
    if r2 <= 1.0 {
        0.5 * (r2 - 1.0)
    } else {
        0.5 * r2.ln()
    }
}

/// Limit of `(1/n)·log|det((3n)^{−1/2}A)|` for an i.i.d. `n×n` matrix `A`.
pub fn ginibre_logdet_limit() -> f64 {
    -0.5 * 3f64.ln() - 0.5
}

/// One sample of `(1/n)·log|det((3n)^{−1/2}A)|`.
pub fn ginibre_logdet_sample(n: usize, law: AtomLaw, scheme: SeedScheme, trial: u64) -> Result<f64, SpectraError> {
    let scale = 1.0 / (3.0 * n as f64).sqrt();
    let a = fill_square(n, law, n, scale, &mut scheme.stream(trial, 0, Role::Square));
    Ok(lu_logdet(&a)?.log_abs / n as f64)
}

/// Mean of [`ginibre_logdet_sample`] over trials `0..trials`.
pub fn ginibre_logdet_check(n: usize, trials: u64, law: AtomLaw, scheme: SeedScheme) -> Result<f64, SpectraError> {
    if trials == 0 {
        return Err(SpectraError::Invalid("need at least one trial".into()));
    }
    let mut sum = 0.0;
    for t in 0..trials {
        sum += ginibre_logdet_sample(n, law, scheme, t)?;
    }
    Ok(sum / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIntCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub kolmogorov: f64,
    pub holds: bool,
}

/// Compares `|∫ₐᵇ |log x|^β dμ − ∫ₐᵇ |log x|^β dν|` with
/// `2(|log a|^β + |log b|^β)·K(μ, ν)`.
pub fn logint_bound_check(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, a: f64, b: f64, beta: f64) -> Result<LogIntCheck, SpectraError> {
    if !(0.0 < a && a < b) || !(beta >= 1.0) {
        return Err(SpectraError::Invalid(format!("need 0 < a < b and beta >= 1, got a={a}, b={b}, beta={beta}")));
    }
    let f = |x: f64| x.ln().abs().powf(beta);
    let integral = |m: &EmpiricalMeasure| {
        m.atoms.iter().filter(|&&x| a <= x && x <= b).map(|&x| f(x)).sum::<f64>() / m.len() as f64
    };
    let kolmogorov = kolmogorov_distance(mu, nu);
    let lhs = (integral(mu) - integral(nu)).abs();
    let rhs = 2.0 * (f(a) + f(b)) * kolmogorov;
    // slack for rounding in the two sums
    Ok(LogIntCheck { lhs, rhs, kolmogorov, holds: lhs <= rhs + 1e-12 * (1.0 + rhs) })
}

/// Empirical `P(s ≤ t)` and `P(s ≤ t)/t` for each threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub t: f64,
    pub probability: f64,
    pub ratio: f64,
}

pub fn tail_profile(samples: &[f64], thresholds: &[f64]) -> Result<Vec<TailPoint>, SpectraError> {
    let measure = EmpiricalMeasure::new(samples.to_vec())?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let probability = measure.cdf(t);
            TailPoint { t, probability, ratio: probability / t }
        })
        .collect())
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `E|log s|^4` and the implied constant `C` in `(C·n·(log ℓ + log n))⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMoment {
    pub fourth_moment: f64,
    pub calibrated_c: f64,
}

pub fn log_fourth_moment(samples: &[f64], n: usize, ell: usize) -> LogMoment {
    let fourth_moment = samples.iter().map(|s| s.ln().powi(4)).sum::<f64>() / samples.len() as f64;
    let scale = n as f64 * ((ell as f64).ln() + (n as f64).ln());
    LogMoment { fourth_moment, calibrated_c: fourth_moment.powf(0.25) / scale }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BorderedEnsemble, PeriodicEnsemble, DEFAULT_MAX_DENSE};
    use crate::numerics::{qr_thin, CMatrix};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn measure(atoms: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(atoms.to_vec()).unwrap()
    }

    fn normal_sample(count: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeedScheme::new(seed).stream(0, 0, Role::Auxiliary);
        (0..count).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
    }

    /// Brute-force CDF distance over every atom of both measures.
    fn brute_kolmogorov(mu: &[f64], nu: &[f64]) -> f64 {
        let cdf = |atoms: &[f64], x: f64| atoms.iter().filter(|&&a| a <= x).count() as f64 / atoms.len() as f64;
        mu.iter().chain(nu).map(|&x| (cdf(mu, x) - cdf(nu, x)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_and_unitary_singular_values() {
        let zero = BlockTridiagonal::zeros(3, 2);
        assert!(singular_values(&zero, c(0.0, 0.0), 100).unwrap().atoms().iter().all(|&a| a == 0.0));
        let ell = 3;
        let id = BlockTridiagonal::from_blocks(vec![CMatrix::identity(ell, ell); 2], vec![CMatrix::zeros(ell, ell); 2], vec![CMatrix::zeros(ell, ell); 2]);
        let (q, _) = qr_thin(&fill_square(ell, AtomLaw::ComplexGaussian, 1, 1.0, &mut SeedScheme::new(1).stream(0, 0, Role::Auxiliary))).unwrap();
        let unitary = BlockTridiagonal::from_blocks(vec![q.clone(), q], vec![CMatrix::zeros(ell, ell); 2], vec![CMatrix::zeros(ell, ell); 2]);
        for m in [id, unitary] {
            assert!(singular_values(&m, c(0.0, 0.0), 100).unwrap().atoms().iter().all(|&a| (a - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn squared_singular_values_match_logdet() {
        let t = BlockTridiagonal::sample(4, 3, AtomLaw::ComplexGaussian, SeedScheme::new(2), 0);
        let z = c(0.3, 0.1);
        let sum: f64 = singular_values(&t, z, 100).unwrap().atoms().iter().map(|a| a.ln()).sum();
        let ld = lu_logdet(&t.dense(z, 100).unwrap()).unwrap().log_abs;
        assert!((sum - 2.0 * ld).abs() < 1e-6 * ld.abs().max(1.0));
        assert!((0.5 * sum - plain_logdet(&t, z).unwrap()).abs() < 1e-6 * ld.abs().max(1.0));
    }

    #[test]
    fn least_singular_value_boundary_only() {
        let b = BorderedEnsemble::standard(BlockTridiagonal::zeros(3, 2));
        assert!(least_singular_value(&b, c(0.0, 0.0), 100).unwrap() >= 0.0);
    }

    #[test]
    fn rigidity_basics() {
        let m = measure(&[0.5, 0.1, 2.0, 0.1, 7.0]);
        assert_eq!(rigidity_count(&m, 0.05), 0);
        assert_eq!(rigidity_count(&m, 7.0), 5);
        assert_eq!(rigidity_count(&m, 0.1), 2);
    }

    #[test]
    fn stieltjes_one_atom_formulas() {
        assert!((empirical_stieltjes(&measure(&[0.0]), c(0.0, 1.0)).unwrap() - c(0.0, 1.0)).norm() < 1e-15);
        assert!((empirical_stieltjes(&measure(&[1.0]), c(1.0, 1.0)).unwrap() - c(0.0, 1.0)).norm() < 1e-15);
        assert!(matches!(empirical_stieltjes(&measure(&[1.0]), c(1.0, 0.0)), Err(SpectraError::NotUpperHalfPlane(_))));
        assert!(EmpiricalMeasure::new(vec![]).is_err());
        let m = measure(&normal_sample(200, 3).iter().map(|x| x * x).collect::<Vec<_>>());
        let xi = c(0.0, 1e6);
        assert!((empirical_stieltjes(&m, xi).unwrap() * xi + 1.0).norm() <= 1e-4);
    }

    #[test]
    fn kolmogorov_examples() {
        let a = measure(&[0.0]);
        let b = measure(&[1.0]);
        assert_eq!(kolmogorov_distance(&a, &a), 0.0);
        assert_eq!(kolmogorov_distance(&a, &b), 1.0);
        for seed in 0..20 {
            let x = normal_sample(1 + seed as usize % 50, seed);
            let y = normal_sample(1 + (seed as usize * 7) % 50, seed + 100);
            assert!((kolmogorov_distance(&measure(&x), &measure(&y)) - brute_kolmogorov(&x, &y)).abs() < 1e-15);
        }
        let d = kolmogorov_distance(&measure(&normal_sample(1000, 5)), &measure(&normal_sample(1000, 6)));
        assert!((0.0..=0.1).contains(&d));
    }

    #[test]
    fn circular_stats_hand_cases() {
        let (frac, dist) = circular_law_stats(&[c(0.0, 0.0), c(2.0, 0.0)]);
        assert_eq!(frac, 0.5);
        // F̂ jumps to 1/2 at 0 and stays there until r = 1
        assert!((dist - 0.5).abs() < 1e-15);
        let (frac, dist) = circular_law_stats(&[c(0.5_f64.sqrt(), 0.0)]);
        assert_eq!(frac, 1.0);
        assert!((dist - 0.5).abs() < 1e-15);
    }

    #[test]
    fn esd_of_block_diagonal_is_union_of_blocks() {
        let t = BlockTridiagonal::sample(3, 2, AtomLaw::ComplexGaussian, SeedScheme::new(4), 0);
        let diag = BlockTridiagonal::from_blocks(t.a.clone(), vec![CMatrix::zeros(2, 2); 3], vec![CMatrix::zeros(2, 2); 3]);
        let mut got = esd(&diag, 100).unwrap().eigenvalues;
        let mut want: Vec<Complex64> = t.a.iter().flat_map(|b| eigvals(b).unwrap()).collect();
        let key = |z: &Complex64| (z.re, z.im);
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn ginibre_potential_values() {
        assert_eq!(ginibre_potential(c(0.0, 0.0)), -0.5);
        assert!(ginibre_potential(c(0.6, 0.8)).abs() < 1e-15);
        assert!((ginibre_potential(c(2.0, 0.0)) - 2f64.ln()).abs() < 1e-15);
        assert!((ginibre_logdet_limit() + 1.04930614).abs() < 1e-8);
        assert!(ginibre_logdet_sample(2, AtomLaw::RealGaussian, SeedScheme::new(1), 0).unwrap().is_finite());
    }

    #[test]
    fn log_potential_agrees_with_dense() {
        let t = BlockTridiagonal::sample(5, 3, AtomLaw::RealGaussian, SeedScheme::new(5), 0);
        let zs = [c(0.0, 0.0), c(2.0, 0.0)];
        let got = log_potential(&t, &zs).unwrap();
        for (z, g) in zs.iter().zip(got) {
            let ld = lu_logdet(&t.dense(*z, 100).unwrap()).unwrap().log_abs / 15.0;
            assert!((g - ld).abs() < 1e-10);
        }
    }

    #[test]
    fn logint_examples() {
        let mu = measure(&[0.5]);
        let r = logint_bound_check(&mu, &mu, 0.1, 1.0, 1.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds);
        let r = logint_bound_check(&mu, &measure(&[0.25]), 0.1, 1.0, 1.0).unwrap();
        assert!((r.lhs - 2f64.ln()).abs() < 1e-15);
        assert!((r.rhs - 2.0 * 10f64.ln()).abs() < 1e-12);
        assert!(r.holds);
        assert!(logint_bound_check(&mu, &mu, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn tail_profile_is_monotone() {
        let samples = normal_sample(500, 7).iter().map(|x| x.abs()).collect::<Vec<_>>();
        let pts = tail_profile(&samples, &[0.01, 0.1, 0.5, 1.0]).unwrap();
        assert!(pts.windows(2).all(|w| w[0].probability <= w[1].probability));
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        let moment = log_fourth_moment(&[std::f64::consts::E], 2, 2);
        assert!((moment.fourth_moment - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_stieltjes_is_herglotz() {
        let p = PeriodicEnsemble::sample(4, 3, AtomLaw::RealGaussian, SeedScheme::new(8), 0);
        let m = singular_values(&p, c(0.5, 0.0), DEFAULT_MAX_DENSE).unwrap();
        for xi in [c(2.0, 1.0), c(-1.0, 0.01), c(0.0, 10.0)] {
            assert!(empirical_stieltjes(&m, xi).unwrap().im > 0.0);
        }
    }

    fn atoms_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 1..40)
    }

    proptest! {
        #[test]
        fn kolmogorov_is_a_metric(x in atoms_strategy(), y in atoms_strategy(), w in atoms_strategy()) {
            let (mx, my, mw) = (measure(&x), measure(&y), measure(&w));
            let dxy = kolmogorov_distance(&mx, &my);
            prop_assert!(dxy >= 0.0);
            prop_assert_eq!(dxy, kolmogorov_distance(&my, &mx));
            prop_assert!(dxy <= kolmogorov_distance(&mx, &mw) + kolmogorov_distance(&mw, &my) + 1e-15);
            prop_assert!((dxy - brute_kolmogorov(&x, &y)).abs() < 1e-15);
        }

        #[test]
        fn rigidity_matches_scan_and_is_monotone(x in atoms_strategy(), t1 in -6.0f64..6.0, t2 in -6.0f64..6.0) {
            let m = measure(&x);
            let scan = x.iter().filter(|&&a| a <= t1).count();
            prop_assert_eq!(rigidity_count(&m, t1), scan);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(rigidity_count(&m, lo) <= rigidity_count(&m, hi));
        }

        #[test]
        fn stieltjes_herglotz(x in prop::collection::vec(0.0f64..10.0, 1..40), re in -20.0f64..20.0, im in 1e-3f64..50.0) {
            prop_assert!(empirical_stieltjes(&measure(&x), c(re, im)).unwrap().im > 0.0);
        }

        #[test]
        fn logint_inequality_holds(
            x in prop::collection::vec(1e-3f64..5.0, 1..100),
            y in prop::collection::vec(1e-3f64..5.0, 1..100),
            a in 1e-3f64..0.9, width in 0.1f64..4.0, beta in prop::sample::select(vec![1.0, 2.0])
        ) {
            let r = logint_bound_check(&measure(&x), &measure(&y), a, a + width, beta).unwrap();
            prop_assert!(r.holds, "{:?}", r);
        }
    }
}
