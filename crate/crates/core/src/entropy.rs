//! Seeded randomness and the admissible atom laws.
//!
//! Every random draw in the crate comes from a [`Stream`] obtained through a
//! [`SeedScheme`]. A stream is a ChaCha8 generator keyed by the tuple
//! `(master seed, trial, block, role)`, so the scalar sequence for a given
//! block is fixed no matter in which order (or on which thread) trials run.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Scalar entry law ζ. Every variant has mean 0 and E|ζ|² = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AtomLaw {
    RealGaussian,
    /// (g₁ + i·g₂)/√2 with independent standard normals.
    ComplexGaussian,
    /// Uniform on [−√3, √3].
    RealUniform,
    /// √(1 − ℓ^{−2C})·ε + ℓ^{−C}·g with ε a Rademacher sign and g standard normal.
    SmoothedRademacher { exponent: f64 },
}

impl AtomLaw {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            AtomLaw::SmoothedRademacher { exponent } if !(exponent >= 0.0 && exponent.is_finite()) => {
                Err(format!("smoothing exponent must be a finite nonnegative number, got {exponent}"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_real(&self) -> bool {
        !matches!(self, AtomLaw::ComplexGaussian)
    }

    /// Stable one-byte tag used by the binary ensemble format.
    pub fn tag(&self) -> u8 {
        match self {
            AtomLaw::RealGaussian => 0,
            AtomLaw::ComplexGaussian => 1,
            AtomLaw::RealUniform => 2,
            AtomLaw::SmoothedRademacher { .. } => 3,
        }
    }

    pub fn from_tag(tag: u8, exponent: f64) -> Option<Self> {
        match tag {
            0 => Some(AtomLaw::RealGaussian),
            1 => Some(AtomLaw::ComplexGaussian),
            2 => Some(AtomLaw::RealUniform),
            3 => Some(AtomLaw::SmoothedRademacher { exponent }),
            _ => None,
        }
    }

    pub fn smoothing_exponent(&self) -> f64 {
        match *self {
            AtomLaw::SmoothedRademacher { exponent } => exponent,
            _ => 0.0,
        }
    }
}

impl fmt::Display for AtomLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomLaw::RealGaussian => write!(f, "real-gaussian"),
            AtomLaw::ComplexGaussian => write!(f, "complex-gaussian"),
            AtomLaw::RealUniform => write!(f, "real-uniform"),
            AtomLaw::SmoothedRademacher { exponent } => write!(f, "smoothed-rademacher:{exponent}"),
        }
    }
}

impl FromStr for AtomLaw {
    type Err = String;

    /// Accepts `real-gaussian`, `complex-gaussian`, `real-uniform` and
    /// `smoothed-rademacher[:C]` (C defaults to 1).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let law = match s {
            "real-gaussian" => AtomLaw::RealGaussian,
            "complex-gaussian" => AtomLaw::ComplexGaussian,
            "real-uniform" => AtomLaw::RealUniform,
            "smoothed-rademacher" => AtomLaw::SmoothedRademacher { exponent: 1.0 },
            other => match other.strip_prefix("smoothed-rademacher:") {
                Some(c) => AtomLaw::SmoothedRademacher {
                    exponent: c.parse().map_err(|_| format!("bad smoothing exponent `{c}`"))?,
                },
                None => return Err(format!("unknown atom law `{other}`")),
            },
        };
        law.validate()?;
        Ok(law)
    }
}

/// What a stream is used for. Distinct roles never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Diagonal = 1,
    Upper = 2,
    Lower = 3,
    CornerTopRight = 4,
    CornerBottomLeft = 5,
    Square = 6,
    Frame = 7,
    Auxiliary = 8,
}

/// Counter-based stream derivation from a 64-bit master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedScheme {
    pub master: u64,
}

pub type Stream = ChaCha8Rng;

impl SeedScheme {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// The stream for `(trial, block, role)`. The tuple is written verbatim
    /// into the 256-bit ChaCha key, so distinct tuples give distinct keys.
    pub fn stream(&self, trial: u64, block: u64, role: Role) -> Stream {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&trial.to_le_bytes());
        key[16..24].copy_from_slice(&block.to_le_bytes());
        key[24] = role as u8;
        ChaCha8Rng::from_seed(key)
    }

    /// A per-trial seed for reporting, derived from the trial's auxiliary stream.
    pub fn trial_seed(&self, trial: u64) -> u64 {
        self.stream(trial, u64::MAX, Role::Auxiliary).random()
    }
}

/// One draw from ζ at block size `ell` (only the smoothed law depends on it).
pub fn sample_atom<R: Rng + ?Sized>(law: AtomLaw, ell: usize, rng: &mut R) -> Complex64 {
    match law {
        AtomLaw::RealGaussian => Complex64::new(rng.sample(StandardNormal), 0.0),
        AtomLaw::ComplexGaussian => {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
        AtomLaw::RealUniform => {
            let bound = 3f64.sqrt();
            Complex64::new(rng.random_range(-bound..bound), 0.0)
        }
        AtomLaw::SmoothedRademacher { exponent } => {
            let noise = (ell as f64).powf(-exponent);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let g: f64 = rng.sample(StandardNormal);
            Complex64::new(sign * (1.0 - noise * noise).max(0.0).sqrt() + noise * g, 0.0)
        }
    }
}

/// ℓ×ℓ block with i.i.d. entries ζ/√(3ℓ), filled row-major.
pub fn fill_block<R: Rng + ?Sized>(ell: usize, law: AtomLaw, rng: &mut R) -> DMatrix<Complex64> {
    assert!(ell >= 1, "block size must be positive");
    let scale = 1.0 / (3.0 * ell as f64).sqrt();
    let mut block = DMatrix::zeros(ell, ell);
    for i in 0..ell {
        for j in 0..ell {
            block[(i, j)] = sample_atom(law, ell, rng) * scale;
        }
    }
    block
}

/// n×n block of i.i.d. ζ entries scaled by `scale`.
pub fn fill_square<R: Rng + ?Sized>(
    n: usize,
    law: AtomLaw,
    ell_for_law: usize,
    scale: f64,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = sample_atom(law, ell_for_law, rng) * scale;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(law: AtomLaw, ell: usize, count: usize, seed: u64) -> (Complex64, f64, f64) {
        let mut rng = SeedScheme::new(seed).stream(0, 0, Role::Auxiliary);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut sq = 0.0;
        let mut fourth = 0.0;
        for _ in 0..count {
            let x = sample_atom(law, ell, &mut rng);
            sum += x;
            sq += x.norm_sqr();
            fourth += x.norm_sqr() * x.norm_sqr();
        }
        let n = count as f64;
        (sum / n, sq / n, fourth / n)
    }

    #[test]
    fn real_gaussian_mean_is_zero() {
        let (mean, var, _) = moments(AtomLaw::RealGaussian, 1, 1_000_000, 7);
        assert!(mean.norm() < 0.005, "{mean}");
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn complex_gaussian_has_unit_second_moment() {
        let (mean, var, _) = moments(AtomLaw::ComplexGaussian, 1, 1_000_000, 8);
        assert!((var - 1.0).abs() < 0.005, "{var}");
        assert!(mean.norm() < 0.005);
    }

    #[test]
    fn complex_gaussian_parts_have_half_variance() {
        let mut rng = SeedScheme::new(3).stream(0, 0, Role::Auxiliary);
        let count = 400_000;
        let (mut re2, mut im2, mut cross) = (0.0, 0.0, 0.0);
        for _ in 0..count {
            let x = sample_atom(AtomLaw::ComplexGaussian, 1, &mut rng);
            re2 += x.re * x.re;
            im2 += x.im * x.im;
            cross += x.re * x.im;
        }
        let n = count as f64;
        // standard error of a variance-½ estimate is ½·√(2/n)
        let se = 0.5 * (2.0 / n).sqrt();
        assert!((re2 / n - 0.5).abs() < 5.0 * se);
        assert!((im2 / n - 0.5).abs() < 5.0 * se);
        assert!((cross / n).abs() < 5.0 * 0.5 / n.sqrt());
    }

    #[test]
    fn moments_within_five_standard_errors() {
        let laws = [
            AtomLaw::RealGaussian,
            AtomLaw::ComplexGaussian,
            AtomLaw::RealUniform,
            AtomLaw::SmoothedRademacher { exponent: 1.0 },
            AtomLaw::SmoothedRademacher { exponent: 0.25 },
        ];
        let count = 200_000;
        for (i, law) in laws.into_iter().enumerate() {
            let (mean, var, fourth) = moments(law, 10, count, 100 + i as u64);
            let n = count as f64;
            assert!(mean.norm() < 5.0 / n.sqrt() * 2f64.sqrt(), "{law}: mean {mean}");
            let se_var = ((fourth - var * var).max(0.0) / n).sqrt();
            assert!((var - 1.0).abs() < 5.0 * se_var + 1e-12, "{law}: var {var}");
        }
    }

    #[test]
    fn smoothed_rademacher_draw_structure_and_fourth_moment() {
        let law = AtomLaw::SmoothedRademacher { exponent: 1.0 };
        let mut rng = SeedScheme::new(11).stream(0, 0, Role::Auxiliary);
        let count = 1_000_000;
        let mut fourth = 0.0;
        let base = (1.0 - 1e-4f64).sqrt();
        for _ in 0..count {
            let x = sample_atom(law, 100, &mut rng);
            assert_eq!(x.im, 0.0);
            // |x| - base is a scaled Gaussian 10⁻²·g, far below 10⁻² · 8 in practice
            assert!((x.re.abs() - base).abs() < 0.08);
            fourth += x.re.powi(4);
        }
        let empirical = fourth / count as f64;

        // independent oracle: Monte Carlo of the defining formula
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(0xfeed);
        let mut oracle = 0.0;
        for _ in 0..count {
            let sign = if oracle_rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            let g: f64 = oracle_rng.sample(StandardNormal);
            let x = sign * base + 1e-2 * g;
            oracle += x.powi(4);
        }
        let oracle = oracle / count as f64;
        assert!((empirical - oracle).abs() < 0.02 * oracle, "{empirical} vs {oracle}");
    }

    #[test]
    fn scalar_block_has_variance_one_third() {
        let seeds = SeedScheme::new(5);
        let trials = 1_000_000u64;
        let mut rng = seeds.stream(0, 0, Role::Diagonal);
        let mut sq = 0.0;
        for _ in 0..trials {
            sq += fill_block(1, AtomLaw::RealGaussian, &mut rng)[(0, 0)].norm_sqr();
        }
        let var = sq / trials as f64;
        assert!((var - 1.0 / 3.0).abs() < 0.01 / 3.0, "{var}");
    }

    #[test]
    fn block_entry_variance_at_fifty() {
        let seeds = SeedScheme::new(6);
        let mut sq = 0.0;
        let mut count = 0.0;
        for t in 0..40 {
            let b = fill_block(50, AtomLaw::RealGaussian, &mut seeds.stream(t, 0, Role::Diagonal));
            sq += b.iter().map(|x| x.norm_sqr()).sum::<f64>();
            count += 2500.0;
        }
        let var = sq / count;
        assert!((var - 1.0 / 150.0).abs() < 0.02 / 150.0, "{var}");
    }

    #[test]
    fn block_operator_norm_is_order_one() {
        let seeds = SeedScheme::new(9);
        let ell = 50usize;
        let bound = 10.0 * (ell as f64).sqrt() / (3.0 * ell as f64).sqrt();
        let mut within = 0;
        for t in 0..100 {
            let b = fill_block(ell, AtomLaw::RealGaussian, &mut seeds.stream(t, 0, Role::Diagonal));
            let norm = crate::numerics::svd_values(&b).unwrap()[0];
            if norm <= bound {
                within += 1;
            }
        }
        assert!(within >= 99, "{within}/100");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let seeds = SeedScheme::new(42);
        let draws = |mut s: Stream| -> Vec<u64> { (0..8).map(|_| s.random()).collect() };
        let a = draws(seeds.stream(3, 4, Role::Upper));
        assert_eq!(a, draws(seeds.stream(3, 4, Role::Upper)));
        assert_ne!(a, draws(seeds.stream(3, 4, Role::Lower)));
        assert_ne!(a, draws(seeds.stream(4, 3, Role::Upper)));
        assert_ne!(a, draws(SeedScheme::new(43).stream(3, 4, Role::Upper)));
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let seeds = SeedScheme::new(1);
        let mut r1 = seeds.stream(0, 1, Role::Diagonal);
        let mut r2 = seeds.stream(0, 2, Role::Diagonal);
        let n = 200_000;
        let mut cross = 0.0;
        for _ in 0..n {
            let x: f64 = r1.sample(StandardNormal);
            let y: f64 = r2.sample(StandardNormal);
            cross += x * y;
        }
        assert!((cross / n as f64).abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn law_parsing() {
        assert_eq!("real-gaussian".parse::<AtomLaw>().unwrap(), AtomLaw::RealGaussian);
        assert_eq!(
            "smoothed-rademacher:0.5".parse::<AtomLaw>().unwrap(),
            AtomLaw::SmoothedRademacher { exponent: 0.5 }
        );
        assert!("smoothed-rademacher:-1".parse::<AtomLaw>().is_err());
        assert!("cauchy".parse::<AtomLaw>().is_err());
        for law in [AtomLaw::RealUniform, AtomLaw::SmoothedRademacher { exponent: 2.0 }] {
            assert_eq!(law.to_string().parse::<AtomLaw>().unwrap(), law);
        }
    }
}
