//! Deterministic functionals on `E_N`: mass, Hamiltonian, grand Hamiltonian, tamed
//! potential, their gradients, the constrained rate function and the calibration of
//! the chemical potential.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::fields::{wick_mass, Field, GibbsParams};
use crate::rng::{mix, stream};
use crate::soliton::{minimize_constrained, SolitonOptions};
use crate::spectral::{gns_ratio, random_probe, HermiteBasis};

/// Terms of `H` and `H^G` for one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `½‖φ‖²_{ℋ¹}`
    pub kinetic_plus_trap: f64,
    /// `¼‖φ‖⁴_{L⁴}`
    pub quartic: f64,
    /// `‖φ‖²_{L²}`
    pub mass: f64,
    pub total_h: f64,
    pub total_hg: f64,
}

/// `Σ |c_n|²`.
pub fn mass(_basis: &HermiteBasis, phi: &Field) -> f64 {
    phi.norm_sqr()
}

fn half_h1(basis: &HermiteBasis, phi: &Field) -> f64 {
    0.5 * phi
        .coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| basis.eigenvalue_sq(n) * c.norm_sqr())
        .sum::<f64>()
}

/// All terms of `H^G = H + A M³` with `H = ½‖φ‖²_{ℋ¹} − (λ/4)‖φ‖⁴_{L⁴}`.
pub fn energy_breakdown(basis: &HermiteBasis, phi: &Field, coupling: f64, a: f64) -> EnergyBreakdown {
    let kinetic_plus_trap = half_h1(basis, phi);
    let quartic = 0.25 * basis.quartic(&phi.coeffs);
    let m = phi.norm_sqr();
    let total_h = kinetic_plus_trap - coupling * quartic;
    EnergyBreakdown {
        kinetic_plus_trap,
        quartic,
        mass: m,
        total_h,
        total_hg: total_h + a * m * m * m,
    }
}

/// Breakdown of `H`; `total_hg` equals `total_h` (no chemical potential).
pub fn hamiltonian(basis: &HermiteBasis, phi: &Field, coupling: f64) -> EnergyBreakdown {
    energy_breakdown(basis, phi, coupling, 0.0)
}

/// `H(φ) + A M(φ)³`.
pub fn grand_hamiltonian(basis: &HermiteBasis, phi: &Field, coupling: f64, a: f64) -> f64 {
    energy_breakdown(basis, phi, coupling, a).total_hg
}

/// `V(φ) = −(λ/4)‖φ‖⁴_{L⁴} + A |M^w(φ)|³`.
pub fn tamed_potential(basis: &HermiteBasis, params: &GibbsParams, phi: &Field) -> f64 {
    let mw = wick_mass(basis, params, phi);
    let mut v = params.chem_potential * mw.abs().powi(3);
    if params.coupling != 0.0 {
        v -= 0.25 * params.coupling * basis.quartic(&phi.coeffs);
    }
    v
}

/// `λ_n² c_n − λ · analyze(|φ|²φ)`, the gradient of `H` for the pairing `Re Σ conj(g) ψ`.
pub fn gradient_h(basis: &HermiteBasis, phi: &Field, coupling: f64) -> Field {
    let mut out: Vec<Complex64> = phi
        .coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| c * basis.eigenvalue_sq(n))
        .collect();
    if coupling != 0.0 {
        let nl = cubic_term(basis, phi);
        for (o, v) in out.iter_mut().zip(nl) {
            *o -= v * coupling;
        }
    }
    Field::new(out)
}

/// Gradient of `H^G`: `gradient_h + 6 A M² c`.
pub fn gradient_hg(basis: &HermiteBasis, phi: &Field, coupling: f64, a: f64) -> Field {
    let mut g = gradient_h(basis, phi, coupling);
    let m = phi.norm_sqr();
    g.axpy(6.0 * a * m * m, phi);
    g
}

/// Coefficients of `|φ|²φ` projected to `E_N`.
pub fn cubic_term(basis: &HermiteBasis, phi: &Field) -> Vec<Complex64> {
    let mut grid = vec![Complex64::new(0.0, 0.0); basis.n_nodes()];
    basis.synthesize_into(&phi.coeffs, &mut grid);
    grid.iter_mut().for_each(|v| *v *= v.norm_sqr());
    let mut out = vec![Complex64::new(0.0, 0.0); basis.dim()];
    basis.analyze_into(&grid, &mut out);
    out
}

/// Default width of the mass band used by [`rate_jd`].
pub fn default_mass_tol(d: f64) -> f64 {
    1e-8 * d
}

/// `J^D(φ) = H(φ) − I(D)` on `{|M(φ) − D| ≤ mass_tol}`, `+∞` elsewhere.
pub fn rate_jd(
    basis: &HermiteBasis,
    phi: &Field,
    coupling: f64,
    d: f64,
    i_of_d: f64,
    mass_tol: f64,
) -> Result<f64> {
    if !(mass_tol >= 0.0) {
        return param_err(format!("mass tolerance must be nonnegative, got {mass_tol}"));
    }
    if (phi.norm_sqr() - d).abs() > mass_tol {
        return Ok(f64::INFINITY);
    }
    Ok(hamiltonian(basis, phi, coupling).total_h - i_of_d)
}

/// Result of [`calibrate_a`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Calibrated chemical potential, a point of the calibration grid.
    pub a0: f64,
    /// Smallest `A` making every probe direction nonnegative, before margin and snapping.
    pub required: f64,
    /// Largest GNS ratio seen over the probes.
    pub gns_constant: f64,
    pub n_probes: usize,
}

/// Relative safety margin applied on top of the probe requirement.
pub const CALIBRATION_MARGIN: f64 = 0.1;
const GRID_BASE: f64 = 1e-6;
const GRID_RATIO: f64 = 1.02;
const GRID_MAX: f64 = 1e6;

/// Smallest calibration-grid point `1e-6 · 1.02^k` that is at least `a`.
pub fn snap_to_grid(a: f64) -> Option<f64> {
    if a <= 0.0 {
        return Some(0.0);
    }
    let k = ((a / GRID_BASE).ln() / GRID_RATIO.ln()).ceil().max(0.0);
    let mut v = GRID_BASE * GRID_RATIO.powf(k);
    while v < a {
        v *= GRID_RATIO;
    }
    (v <= GRID_MAX).then_some(v)
}

/// Smallest `A` with `H^G(tu) ≥ 0` for every `t`, given the direction `u`.
///
/// Along the ray `tu` with `m = M(u)`, `K = ‖u‖²_{ℋ¹}`, `q = ‖u‖⁴_{L⁴}`, the grand
/// Hamiltonian is `½Ks − (λ/4)qs² + Am³s³` in `s = t²`; dividing by `s` leaves a
/// quadratic whose minimum is nonnegative exactly when `A ≥ λ² R² / 32` with `R` the
/// GNS ratio of `u`.
pub fn required_a(coupling: f64, gns: f64) -> f64 {
    coupling * coupling * gns * gns / 32.0
}

/// Calibrate the chemical potential from `probes` random fields, soliton shapes and
/// GNS ascent maxima. Deterministic in `seed`.
pub fn calibrate_a(
    basis: &HermiteBasis,
    coupling: f64,
    probes: usize,
    seed: u64,
) -> Result<Calibration> {
    if probes < 1000 {
        return param_err(format!("calibration needs at least 1000 probes, got {probes}"));
    }
    if !(coupling >= 0.0) {
        return param_err(format!("coupling must be nonnegative, got {coupling}"));
    }
    let mut rng = stream(mix(&[seed, 0xca1b]), 0);
    let mut c_hat = 0.0_f64;
    let mut best: Vec<(f64, Vec<Complex64>)> = Vec::new();
    for k in 0..probes {
        let c = random_probe(basis, k, &mut rng);
        if let Ok(r) = gns_ratio(basis, &c) {
            c_hat = c_hat.max(r);
            best.push((r, c));
            if best.len() > 64 {
                best.sort_by(|a, b| b.0.total_cmp(&a.0));
                best.truncate(8);
            }
        }
    }
    // soliton shapes at a few masses, at unit coupling
    let opts = SolitonOptions {
        restarts: 1,
        max_iterations: 20_000,
        ..SolitonOptions::default()
    };
    for d in [0.5, 2.0, 4.0, 6.0, 8.0] {
        let q = match minimize_constrained(basis, 1.0, d, &opts) {
            Ok(r) => r.q_coeffs,
            Err(Error::NotConverged { best: Some(b), .. }) => b.q_coeffs,
            Err(_) => continue,
        };
        if let Ok(r) = gns_ratio(basis, &q.coeffs) {
            c_hat = c_hat.max(r);
            best.push((r, q.coeffs));
        }
    }
    best.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, c) in best.iter().take(4) {
        c_hat = c_hat.max(crate::spectral::ascend_gns(basis, c.clone(), 400));
    }
    let required = required_a(coupling, c_hat);
    let a0 = snap_to_grid(required * (1.0 + CALIBRATION_MARGIN)).ok_or_else(|| {
        Error::Diagnostic(format!(
            "no chemical potential on the calibration grid covers the requirement {required:.3e}"
        ))
    })?;
    Ok(Calibration {
        a0,
        required,
        gns_constant: c_hat,
        n_probes: probes,
    })
}
