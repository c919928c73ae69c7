//! Mass-constrained ground states `I(D) = inf{H : M = D}`, the negative-energy threshold
//! scan, unconstrained minimization of `H^G` and distances to the phase orbit of `Q`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{cubic_term, gradient_hg, grand_hamiltonian, hamiltonian};
use crate::error::{param_err, Error, Result};
use crate::fields::{complex_normal, Field};
use crate::rng::{mix, stream};
use crate::spectral::HermiteBasis;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonOptions {
    /// Initial step `τ` of the preconditioned flow.
    pub step: f64,
    /// Gradient tolerance; `None` means `1e-8 · max(1, |I|)`.
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    /// Number of runs: the unperturbed start plus `restarts - 1` perturbed ones.
    pub restarts: usize,
    /// Relative size of restart perturbations.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for SolitonOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            tolerance: None,
            max_iterations: 100_000,
            restarts: 5,
            perturbation: 0.3,
            seed: 0x5011,
        }
    }
}

impl SolitonOptions {
    fn tol(&self, energy: f64) -> f64 {
        self.tolerance.unwrap_or(1e-8 * energy.abs().max(1.0))
    }
}

/// A constrained minimizer `Q` with its energy `I(D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonResult {
    pub q_coeffs: Field,
    pub energy: f64,
    pub mass_residual: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Rotate `φ` so that its first non-negligible coefficient is real and positive.
pub fn gauge_fix(phi: &Field) -> Field {
    let scale = phi.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    match phi.coeffs.iter().find(|c| c.norm() > 1e-12 * scale) {
        Some(c) => {
            let mut out = phi.rotate(-c.arg());
            if let Some(k) = phi.coeffs.iter().position(|v| v.norm() > 1e-12 * scale) {
                out.coeffs[k] = Complex64::new(out.coeffs[k].norm(), 0.0);
            }
            out
        }
        None => phi.clone(),
    }
}

/// Scale `phi` in place to `‖phi‖²_{L²} = d`; the zero field is left alone.
pub fn rescale_to(phi: &mut Field, d: f64) {
    let m = phi.norm_sqr();
    if m > 0.0 {
        let s = (d / m).sqrt();
        phi.coeffs.iter_mut().for_each(|c| *c *= s);
    }
}

/// Tangential part of the gradient of `H` at mass `d`, with `H` itself.
fn constrained_gradient(basis: &HermiteBasis, c: &Field, coupling: f64) -> (Field, f64) {
    let nl = if coupling != 0.0 {
        cubic_term(basis, c)
    } else {
        vec![Complex64::new(0.0, 0.0); basis.dim()]
    };
    let g = Field::new(
        c.coeffs
            .iter()
            .zip(&nl)
            .enumerate()
            .map(|(n, (v, w))| v * basis.eigenvalue_sq(n) - w * coupling)
            .collect(),
    );
    let mu = g.real_dot(c) / c.norm_sqr();
    let mut gt = g;
    gt.axpy(-mu, c);
    let energy = hamiltonian(basis, c, coupling).total_h;
    (gt, energy)
}

fn flow(basis: &HermiteBasis, coupling: f64, d: f64, start: Field, opts: &SolitonOptions) -> SolitonResult {
    let mut c = start;
    rescale_to(&mut c, d);
    let mut tau = opts.step;
    let (mut gt, mut energy) = constrained_gradient(basis, &c, coupling);
    let mut res = gt.norm_sqr().sqrt();
    let mut it = 0;
    let mut converged = res <= opts.tol(energy);
    while !converged && it < opts.max_iterations {
        it += 1;
        let slack = 1e-14 * energy.abs().max(1.0);
        // ℋ¹-preconditioned tangential step; its fixed points are exactly the
        // constrained critical points
        let p = Field::new(
            gt.coeffs
                .iter()
                .enumerate()
                .map(|(n, v)| v / basis.eigenvalue_sq(n))
                .collect(),
        );
        let mut accepted = false;
        while tau > 1e-12 {
            let mut trial = c.clone();
            trial.axpy(-tau, &p);
            rescale_to(&mut trial, d);
            let (tg, te) = constrained_gradient(basis, &trial, coupling);
            if te <= energy + slack {
                c = trial;
                gt = tg;
                energy = te;
                tau = (tau * 1.25).min(1.5);
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        res = gt.norm_sqr().sqrt();
        converged = res <= opts.tol(energy);
        if !accepted {
            break;
        }
    }
    let q = gauge_fix(&c);
    SolitonResult {
        mass_residual: (q.norm_sqr() - d).abs(),
        q_coeffs: q,
        energy,
        grad_residual: res,
        iterations: it,
        converged,
    }
}

/// Strict order used to pick among restarts: lower energy, then lexicographic coefficients.
fn better(a: &SolitonResult, b: &SolitonResult) -> bool {
    if (a.energy - b.energy).abs() > 1e-12 {
        return a.energy < b.energy;
    }
    for (x, y) in a.q_coeffs.coeffs.iter().zip(&b.q_coeffs.coeffs) {
        if x.re != y.re {
            return x.re < y.re;
        }
        if x.im != y.im {
            return x.im < y.im;
        }
    }
    false
}

/// Minimize `H` on `{M = D}` by a preconditioned normalized gradient flow with
/// backtracking, from `√D h_0` and perturbed restarts run in parallel.
pub fn minimize_constrained(
    basis: &HermiteBasis,
    coupling: f64,
    d: f64,
    opts: &SolitonOptions,
) -> Result<SolitonResult> {
    if !(d > 0.0 && d.is_finite()) {
        return param_err(format!("mass must be positive, got {d}"));
    }
    if !(coupling >= 0.0) {
        return param_err(format!("coupling must be nonnegative, got {coupling}"));
    }
    let dim = basis.dim();
    if coupling == 0.0 {
        // linear problem: the ground state is the lowest eigenmode
        return Ok(SolitonResult {
            q_coeffs: Field::mode(dim, 0, d.sqrt()),
            energy: 0.5 * d,
            mass_residual: 0.0,
            grad_residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let runs = opts.restarts.max(1);
    let results: Vec<SolitonResult> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut start = Field::mode(dim, 0, d.sqrt());
            if k > 0 {
                let mut rng = stream(mix(&[opts.seed, k as u64]), 0);
                let amp = opts.perturbation * d.sqrt();
                for (n, c) in start.coeffs.iter_mut().enumerate() {
                    *c += complex_normal(&mut rng) * (amp / basis.eigenvalues()[n]);
                }
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                start = start.rotate(theta);
            }
            flow(basis, coupling, d, start, opts)
        })
        .collect();
    let mut best_conv: Option<&SolitonResult> = None;
    let mut best_any: Option<&SolitonResult> = None;
    for r in &results {
        if best_any.map_or(true, |b| better(r, b)) {
            best_any = Some(r);
        }
        if r.converged && best_conv.map_or(true, |b| better(r, b)) {
            best_conv = Some(r);
        }
    }
    match best_conv {
        Some(r) => Ok(r.clone()),
        None => {
            let b = best_any.cloned();
            Err(Error::NotConverged {
                iterations: b.as_ref().map_or(0, |r| r.iterations),
                residual: b.as_ref().map_or(f64::NAN, |r| r.grad_residual),
                best: b.map(Box::new),
            })
        }
    }
}

/// `H(√D h_0) = D/2 − λD²/(4√(2π))`, an upper bound for `I(D)`.
pub fn competitor_bound(coupling: f64, d: f64) -> f64 {
    0.5 * d - coupling * d * d / (4.0 * (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassScanRow {
    pub mass: f64,
    pub energy: f64,
    pub competitor_bound: f64,
    pub converged: bool,
}

/// Result of [`scan_mass_threshold`]; `d_star` is `+∞` when no grid point has `I(D) < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassScan {
    pub d_star: f64,
    pub table: Vec<MassScanRow>,
}

/// Smallest grid mass with negative constrained minimum, together with the `I(D)` table.
pub fn scan_mass_threshold(
    basis: &HermiteBasis,
    coupling: f64,
    d_grid: &[f64],
    opts: &SolitonOptions,
) -> Result<MassScan> {
    if d_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return param_err("mass grid must be strictly increasing");
    }
    let mut table = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        let (energy, converged) = match minimize_constrained(basis, coupling, d, opts) {
            Ok(r) => (r.energy, true),
            Err(Error::NotConverged { best: Some(b), .. }) => (b.energy, false),
            Err(e) => return Err(e),
        };
        table.push(MassScanRow {
            mass: d,
            energy,
            competitor_bound: competitor_bound(coupling, d),
            converged,
        });
    }
    let d_star = table
        .iter()
        .find(|r| r.energy < 0.0)
        .map_or(f64::INFINITY, |r| r.mass);
    Ok(MassScan { d_star, table })
}

/// Outcome of a descent on `H^G`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedResult {
    pub field: Field,
    pub objective: f64,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Minimize `H^G` from `opts.restarts` random starts; every start must reach the zero field.
pub fn minimize_unconstrained_hg(
    basis: &HermiteBasis,
    coupling: f64,
    a: f64,
    opts: &SolitonOptions,
) -> Result<UnconstrainedResult> {
    let runs = opts.restarts.max(1);
    let mut best: Option<UnconstrainedResult> = None;
    for k in 0..runs {
        let mut rng = stream(mix(&[opts.seed, 0x4a, k as u64]), 0);
        let start = Field::new(
            basis
                .eigenvalues()
                .iter()
                .map(|l| complex_normal(&mut rng) * (opts.perturbation / l))
                .collect(),
        );
        let r = minimize_unconstrained_hg_from(basis, coupling, a, start, opts)?;
        if best.as_ref().map_or(true, |b| r.objective < b.objective) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Preconditioned steepest descent on `H^G` from `start` with Armijo backtracking.
pub fn minimize_unconstrained_hg_from(
    basis: &HermiteBasis,
    coupling: f64,
    a: f64,
    start: Field,
    opts: &SolitonOptions,
) -> Result<UnconstrainedResult> {
    let mut c = start;
    let mut f = grand_hamiltonian(basis, &c, coupling, a);
    let mut history = vec![f];
    let mut tau = 1.0;
    let mut it = 0;
    loop {
        if f < -1e-12 {
            return Err(Error::Diagnostic(format!(
                "grand Hamiltonian reached {f:.6e} < 0: chemical potential {a} is below the coercivity threshold"
            )));
        }
        let norm = c.norm_sqr().sqrt();
        if norm <= 1e-6 && f <= 1e-10 {
            break;
        }
        if it >= opts.max_iterations {
            return Err(Error::Diagnostic(format!(
                "descent on H^G did not reach the zero field in {it} iterations (norm {norm:.3e})"
            )));
        }
        it += 1;
        let g = gradient_hg(basis, &c, coupling, a);
        let p = Field::new(
            g.coeffs
                .iter()
                .enumerate()
                .map(|(n, v)| v / basis.eigenvalue_sq(n))
                .collect(),
        );
        let slope = g.real_dot(&p);
        if slope <= 1e-300 {
            return Err(Error::Diagnostic(format!(
                "H^G is stationary at a nonzero field (norm {norm:.3e}, value {f:.3e})"
            )));
        }
        let mut accepted = false;
        while tau > 1e-14 {
            let mut trial = c.clone();
            trial.axpy(-tau, &p);
            let ft = grand_hamiltonian(basis, &trial, coupling, a);
            if ft <= f - 1e-4 * tau * slope {
                c = trial;
                f = ft;
                history.push(f);
                tau = (tau * 2.0).min(1.0);
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            return Err(Error::Diagnostic(format!(
                "descent on H^G stalled at a nonzero field (norm {norm:.3e}, value {f:.3e})"
            )));
        }
    }
    Ok(UnconstrainedResult {
        field: c,
        objective: f,
        history,
        iterations: it,
    })
}

/// Distance from `φ` to the orbit `{e^{iθ} Q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitDistance {
    pub theta_star: f64,
    pub distance: f64,
    pub p: f64,
}

fn wrap_angle(t: f64) -> f64 {
    let v = t.rem_euclid(std::f64::consts::TAU);
    if v >= std::f64::consts::TAU {
        0.0
    } else {
        v
    }
}

/// Precomputed grid values for repeated orbit-distance evaluations against one `Q`.
pub struct OrbitProbe<'a> {
    basis: &'a HermiteBasis,
    q: Field,
    q_grid: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl<'a> OrbitProbe<'a> {
    pub fn new(basis: &'a HermiteBasis, q: &Field) -> Self {
        let mut q_grid = vec![Complex64::new(0.0, 0.0); basis.n_nodes()];
        basis.synthesize_into(&q.coeffs, &mut q_grid);
        Self {
            basis,
            q: q.clone(),
            q_grid,
            scratch: vec![Complex64::new(0.0, 0.0); basis.n_nodes()],
        }
    }

    /// Orbit distance of `φ` in `L^p`.
    pub fn distance(&mut self, phi: &Field, p: f64) -> Result<OrbitDistance> {
        if !(p >= 1.0) {
            return param_err(format!("orbit distance needs p >= 1, got {p}"));
        }
        if phi.dim() != self.q.dim() {
            return param_err("field and soliton have different dimensions");
        }
        let seed = wrap_angle(self.q.inner(phi).arg());
        if p == 2.0 {
            let diff = phi - &self.q.rotate(seed);
            return Ok(OrbitDistance {
                theta_star: seed,
                distance: diff.norm_sqr().sqrt(),
                p,
            });
        }
        self.basis.synthesize_into(&phi.coeffs, &mut self.scratch);
        let phi_grid = std::mem::take(&mut self.scratch);
        let w = self.basis.quad_weights();
        let qg = &self.q_grid;
        let eval = |t: f64| -> f64 {
            let z = Complex64::from_polar(1.0, t);
            let s: f64 = if p == 4.0 {
                w.iter()
                    .zip(phi_grid.iter().zip(qg))
                    .map(|(wj, (f, q))| {
                        let a = (f - q * z).norm_sqr();
                        wj * a * a
                    })
                    .sum()
            } else {
                w.iter()
                    .zip(phi_grid.iter().zip(qg))
                    .map(|(wj, (f, q))| wj * (f - q * z).norm().powf(p))
                    .sum()
            };
            s
        };
        const GRID: usize = 64;
        let h = std::f64::consts::TAU / GRID as f64;
        let mut best_t = seed;
        let mut best_v = eval(seed);
        for k in 0..GRID {
            let t = k as f64 * h;
            let v = eval(t);
            if v < best_v {
                best_v = v;
                best_t = t;
            }
        }
        // golden-section refinement on a bracket around the best grid point
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (best_t - h, best_t + h);
        let mut x1 = hi - gr * (hi - lo);
        let mut x2 = lo + gr * (hi - lo);
        let mut f1 = eval(x1);
        let mut f2 = eval(x2);
        while hi - lo > 1e-10 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - gr * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + gr * (hi - lo);
                f2 = eval(x2);
            }
        }
        let tm = 0.5 * (lo + hi);
        let vm = eval(tm);
        if vm < best_v {
            best_v = vm;
            best_t = tm;
        }
        self.scratch = phi_grid;
        Ok(OrbitDistance {
            theta_star: wrap_angle(best_t),
            distance: best_v.max(0.0).powf(1.0 / p),
            p,
        })
    }
}

/// `inf_θ ‖φ − e^{iθ}Q‖_{L^p}`.
pub fn orbit_distance(basis: &HermiteBasis, phi: &Field, q: &Field, p: f64) -> Result<OrbitDistance> {
    OrbitProbe::new(basis, q).distance(phi, p)
}

/// Empirical stability margin: the smallest `H(φ) − I(D)` over perturb-and-rescale fields of
/// mass `D` lying at `L^p` orbit distance at least `delta` from `Q`.
///
/// Each trial draws a random direction, then bisects the perturbation size down to the
/// boundary of the `delta` ball, where the energy gap is smallest along that ray.
#[allow(clippy::too_many_arguments)]
pub fn stability_margin(
    basis: &HermiteBasis,
    q: &SolitonResult,
    coupling: f64,
    delta: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let d = q.q_coeffs.norm_sqr();
    let mut probe = OrbitProbe::new(basis, &q.q_coeffs);
    let mut margin = f64::INFINITY;
    for k in 0..trials {
        let mut rng = stream(mix(&[seed, 0x57ab, k as u64]), 0);
        let dir = Field::new(
            basis
                .eigenvalues()
                .iter()
                .map(|l| complex_normal(&mut rng) / *l)
                .collect(),
        );
        let make = |t: f64| {
            let mut f = q.q_coeffs.clone();
            f.axpy(t, &dir);
            rescale_to(&mut f, d);
            f
        };
        let mut hi = 0.05 * d.sqrt();
        let mut reached = false;
        for _ in 0..40 {
            if probe.distance(&make(hi), p)?.distance >= delta {
                reached = true;
                break;
            }
            hi *= 1.5;
        }
        if !reached {
            continue;
        }
        let mut lo = 0.0;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if probe.distance(&make(mid), p)?.distance >= delta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let gap = hamiltonian(basis, &make(hi), coupling).total_h - q.energy;
        margin = margin.min(gap);
    }
    Ok(margin)
}
