//! Small numeric helpers shared across the crate: Bessel J0, seeded
//! Gaussian sampling, seed derivation, and a stable 64-bit hash.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_4, PI};

/// Zeroth-order Bessel function of the first kind.
///
/// Power series for |x| <= 12, Hankel's asymptotic expansion above.
/// Absolute accuracy is better than 1e-8 over the whole real line
/// (about 1e-12 for small arguments, ~1e-9 for large ones).
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        // sum_k (-1)^k (x^2/4)^k / (k!)^2
        let q = 0.25 * x * x;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut k = 1.0f64;
        while term.abs() > 1e-17 * sum.abs().max(1.0) {
            term *= -q / (k * k);
            sum += term;
            k += 1.0;
            if k > 60.0 {
                break;
            }
        }
        sum
    } else {
        // J0(x) ~ sqrt(2/(pi x)) [P(x) cos(x - pi/4) - Q(x) sin(x - pi/4)]
        // with Hankel coefficients A_m = A_{m-1} (2m-1)^2 / (8m).
        let mut p = 1.0;
        let mut q = 0.0;
        let mut a = 1.0;
        let mut xp = 1.0;
        for m in 1..=11u32 {
            let m_f = f64::from(m);
            a *= (2.0 * m_f - 1.0) * (2.0 * m_f - 1.0) / (8.0 * m_f);
            xp *= x;
            let term = a / xp;
            match m % 4 {
                1 => q -= term,
                2 => p -= term,
                3 => q += term,
                _ => p += term,
            }
        }
        let w = x - FRAC_PI_4;
        (2.0 / (PI * x)).sqrt() * (p * w.cos() - q * w.sin())
    }
}

/// Seedable random source used everywhere in the crate: ChaCha8 keyed by a
/// 64-bit seed, with Gaussian variates produced by the Box-Muller transform.
pub struct SeededRng {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gen_bool(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn gen_range_usize(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Standard normal N(0, 1) via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = (1.0 - self.uniform()).max(f64::MIN_POSITIVE); // (0, 1]
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Circularly symmetric complex Gaussian CN(0, 1).
    pub fn complex_gaussian(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Complex64::new(self.gaussian() * s, self.gaussian() * s)
    }

    /// CN(0, sigma2): per-component variance sigma2 / 2.
    pub fn complex_gaussian_var(&mut self, sigma2: f64) -> Complex64 {
        self.complex_gaussian() * sigma2.sqrt()
    }
}

/// SplitMix64 step; used to derive independent stream seeds from a base
/// seed so parallel trials stay reproducible.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a 64-bit hash; stable across platforms, used for model fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    // Plain term-by-term series summation, kept independent of the
    // piecewise implementation above.
    fn j0_series_oracle(x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..80u32 {
            let mut term = 1.0;
            for j in 1..=k {
                term *= (x / 2.0) / f64::from(j);
            }
            let term = term * term;
            sum += if k % 2 == 0 { term } else { -term };
        }
        sum
    }

    #[test]
    fn j0_at_zero_is_one() {
        assert_eq!(bessel_j0(0.0), 1.0);
    }

    #[test]
    fn j0_matches_series_oracle_small_args() {
        for i in 0..=240 {
            let x = f64::from(i) * 0.05; // up to 12
            let want = j0_series_oracle(x);
            assert!(
                (bessel_j0(x) - want).abs() < 1e-10,
                "x={x}: {} vs {}",
                bessel_j0(x),
                want
            );
        }
    }

    #[test]
    fn j0_first_zero() {
        // First positive zero of J0, a known constant.
        let z = 2.404825557695773;
        assert!(bessel_j0(z).abs() < 1e-8);
    }

    #[test]
    fn j0_reference_values() {
        // Published values (Abramowitz & Stegun tables).
        assert!((bessel_j0(1.0) - 0.7651976865579666).abs() < 1e-10);
        assert!((bessel_j0(2.0) - 0.2238907791412357).abs() < 1e-10);
        assert!((bessel_j0(5.0) + 0.1775967713143383).abs() < 1e-10);
        // Large-argument branch.
        assert!((bessel_j0(15.0) + 0.0142244728267806).abs() < 1e-8);
        assert!((bessel_j0(30.0) + 0.0863679835810403).abs() < 1e-8);
        assert!((bessel_j0(100.0) - 0.0199858503042233).abs() < 1e-8);
    }

    #[test]
    fn j0_even_function() {
        assert_eq!(bessel_j0(-3.7), bessel_j0(3.7));
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = SeededRng::new(42);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.gaussian();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 0.01, "mean {m1}");
        assert!((m2 - 1.0).abs() < 0.02, "var {m2}");
    }

    #[test]
    fn complex_gaussian_unit_power() {
        let mut rng = SeededRng::new(7);
        let n = 200_000;
        let p: f64 = (0..n).map(|_| rng.complex_gaussian().norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.02, "power {p}");
    }

    #[test]
    fn derive_seed_streams_differ() {
        let s = derive_seed(123, 0);
        assert_ne!(s, derive_seed(123, 1));
        assert_eq!(s, derive_seed(123, 0));
    }
}
