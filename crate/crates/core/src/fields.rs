//! Gaussian reference measure on `E_N`, Wick-renormalized mass and exact log-densities.
//!
//! Convention: a complex standard Gaussian `g` has `E|g|² = 1`, so each coordinate
//! `c_n = √ε g_n / λ_n` has real and imaginary parts of variance `ε / (2λ_n²)`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::spectral::HermiteBasis;

/// Parameters fixing one Gibbs measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsParams {
    pub epsilon: f64,
    pub coupling: f64,
    pub chem_potential: f64,
    pub truncation: usize,
    pub mass_level: f64,
    pub shell_width: f64,
}

impl Default for GibbsParams {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            coupling: 1.0,
            chem_potential: 0.0,
            truncation: 8,
            mass_level: 1.0,
            shell_width: 0.1,
        }
    }
}

impl GibbsParams {
    pub fn new(
        epsilon: f64,
        coupling: f64,
        chem_potential: f64,
        truncation: usize,
        mass_level: f64,
        shell_width: f64,
    ) -> Result<Self> {
        let p = Self {
            epsilon,
            coupling,
            chem_potential,
            truncation,
            mass_level,
            shell_width,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("mass_level", self.mass_level),
            ("shell_width", self.shell_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return param_err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let nonneg = [
            ("coupling", self.coupling),
            ("chem_potential", self.chem_potential),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return param_err(format!("{name} must be nonnegative and finite, got {v}"));
            }
        }
        Ok(())
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_shell_width(mut self, r: f64) -> Self {
        self.shell_width = r;
        self
    }
}

/// A field `φ = Σ c_n h_n` in `E_N`, stored by its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub coeffs: Vec<Complex64>,
}

impl Field {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    /// `a · h_k` as a field of dimension `dim`.
    pub fn mode(dim: usize, k: usize, a: f64) -> Self {
        let mut f = Self::zeros(dim);
        f.coeffs[k] = Complex64::new(a, 0.0);
        f
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self {
            coeffs: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `Σ |c_n|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Global phase rotation `e^{iθ} φ`.
    pub fn rotate(&self, theta: f64) -> Self {
        let z = Complex64::from_polar(1.0, theta);
        Self {
            coeffs: self.coeffs.iter().map(|c| c * z).collect(),
        }
    }

    /// Real pairing `Re Σ conj(a_n) b_n`.
    pub fn real_dot(&self, other: &Field) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    /// Complex inner product `Σ conj(a_n) b_n`.
    pub fn inner(&self, other: &Field) -> Complex64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (c, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += v * a;
        }
    }

    /// Interleaved `re, im` pairs.
    pub fn interleaved(&self) -> Vec<f64> {
        self.coeffs.iter().flat_map(|c| [c.re, c.im]).collect()
    }
}

impl Add<&Field> for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        Field::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect())
    }
}

impl Sub<&Field> for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        Field::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        Field::new(self.coeffs.iter().map(|a| a * rhs).collect())
    }
}

/// Standard complex Gaussian with `E|g|² = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw from `μ_{ε,N}`: `c_n = √ε g_n / λ_n`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    params: &GibbsParams,
    rng: &mut R,
) -> Field {
    let se = params.epsilon.max(0.0).sqrt();
    Field::new(
        basis
            .eigenvalues()
            .iter()
            .map(|l| complex_normal(rng) * (se / l))
            .collect(),
    )
}

/// In-place variant of [`sample_gaussian`] for hot loops.
pub fn sample_gaussian_into<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    epsilon: f64,
    rng: &mut R,
    out: &mut [Complex64],
) {
    let se = epsilon.max(0.0).sqrt();
    for (o, l) in out.iter_mut().zip(basis.eigenvalues()) {
        *o = complex_normal(rng) * (se / l);
    }
}

/// `ε Σ_{n ≤ N} 1/(1 + 2n)`.
pub fn renorm_constant(params: &GibbsParams) -> f64 {
    params.epsilon * harmonic_sum(params.truncation)
}

/// `Σ_{n ≤ N} 1/(1 + 2n)`.
pub fn harmonic_sum(n: usize) -> f64 {
    (0..=n).map(|k| 1.0 / (1.0 + 2.0 * k as f64)).sum()
}

/// `M^w(φ) = ‖φ‖²_{L²} − ε Σ 1/λ_n²`.
pub fn wick_mass(_basis: &HermiteBasis, params: &GibbsParams, phi: &Field) -> f64 {
    phi.norm_sqr() - renorm_constant(params)
}

/// Log-density of `μ_{ε,N}` against Lebesgue measure on the real and imaginary parts
/// of the coefficients: `Σ_n [ln(λ_n²/(πε)) − λ_n²|c_n|²/ε]`.
pub fn gaussian_logdensity(basis: &HermiteBasis, params: &GibbsParams, phi: &Field) -> f64 {
    let eps = params.epsilon;
    phi.coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let l2 = basis.eigenvalue_sq(n);
            (l2 / (std::f64::consts::PI * eps)).ln() - l2 * c.norm_sqr() / eps
        })
        .sum()
}

/// Real `ℋ¹` pairing `Re Σ λ_n² conj(a_n) b_n`.
pub fn h1_pairing(basis: &HermiteBasis, a: &Field, b: &Field) -> f64 {
    a.coeffs
        .iter()
        .zip(&b.coeffs)
        .enumerate()
        .map(|(n, (x, y))| basis.eigenvalue_sq(n) * (x.re * y.re + x.im * y.im))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn params_validation() {
        assert!(GibbsParams::new(0.0, 1.0, 0.0, 2, 1.0, 0.1).is_err());
        assert!(GibbsParams::new(0.5, -1.0, 0.0, 2, 1.0, 0.1).is_err());
        assert!(GibbsParams::new(0.5, 1.0, -0.1, 2, 1.0, 0.1).is_err());
        assert!(GibbsParams::new(0.5, 1.0, 0.0, 2, 1.0, 0.0).is_err());
        assert!(GibbsParams::new(0.5, 1.0, 0.0, 2, 1.0, 0.1).is_ok());
    }

    #[test]
    fn renorm_examples() {
        let p = GibbsParams::new(1.0, 1.0, 0.0, 0, 1.0, 0.1).unwrap();
        assert_eq!(renorm_constant(&p), 1.0);
        let p = GibbsParams { truncation: 2, ..p };
        assert!((renorm_constant(&p) - 23.0 / 15.0).abs() < 1e-15);
        let half = p.with_epsilon(0.5);
        assert!((renorm_constant(&half) - 0.5 * renorm_constant(&p)).abs() < 1e-15);
    }

    #[test]
    fn wick_mass_examples() {
        let b = HermiteBasis::new(2).unwrap();
        let p = GibbsParams::new(1.0, 1.0, 0.0, 2, 1.0, 0.1).unwrap();
        assert!((wick_mass(&b, &p, &Field::zeros(3)) + 23.0 / 15.0).abs() < 1e-15);
        let d: f64 = 2.5;
        let phi = Field::mode(3, 0, d.sqrt());
        assert!((wick_mass(&b, &p, &phi) - (d - 23.0 / 15.0)).abs() < 1e-14);
    }

    #[test]
    fn zero_temperature_sample_is_zero() {
        let b = HermiteBasis::new(3).unwrap();
        let p = GibbsParams {
            epsilon: 0.0,
            ..GibbsParams::default()
        };
        let f = sample_gaussian(&b, &p, &mut stream(1, 0));
        assert_eq!(f.norm_sqr(), 0.0);
    }

    #[test]
    fn logdensity_single_mode_origin() {
        let b = HermiteBasis::new(0).unwrap();
        let p = GibbsParams::new(1.0, 1.0, 0.0, 0, 1.0, 0.1).unwrap();
        let v = gaussian_logdensity(&b, &p, &Field::zeros(1));
        assert!((v + std::f64::consts::PI.ln()).abs() < 1e-15);
    }

    #[test]
    fn logdensity_phase_invariant() {
        let b = HermiteBasis::new(4).unwrap();
        let p = GibbsParams::new(0.3, 1.0, 0.0, 4, 1.0, 0.1).unwrap();
        let phi = sample_gaussian(&b, &p, &mut stream(3, 1));
        let a = gaussian_logdensity(&b, &p, &phi);
        let r = gaussian_logdensity(&b, &p, &phi.rotate(0.77));
        assert!((a - r).abs() < 1e-12);
    }
}
