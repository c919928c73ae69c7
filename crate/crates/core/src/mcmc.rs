//! Gaussian-reference (pCN) Metropolis chains for `ρ_{ε,A} ∝ e^{−V/ε} μ_ε`, their
//! restriction to the Wick-mass shell, and Monte Carlo estimators of partition
//! functions and shell probabilities.
//!
//! Sample stores persist as CSV or little-endian binary. Both carry, per record, the step
//! index, the coefficients as interleaved `re, im` pairs, `M^w`, `H` and `H^G`.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::energy::{energy_breakdown, tamed_potential};
use crate::error::{param_err, Error, Result};
use crate::fields::{
    renorm_constant, sample_gaussian, sample_gaussian_into, wick_mass, Field,
    GibbsParams,
};
use crate::rng::stream;
use crate::spectral::HermiteBasis;

/// Default pCN mixing parameter for the unconditioned chain.
pub fn default_beta(epsilon: f64) -> f64 {
    if epsilon >= 0.2 {
        0.5
    } else {
        0.1
    }
}

/// Default mixing parameter for shell-conditioned chains.
///
/// A pCN move shrinks the mass by a factor `1 − β²` on average, so `β²D` must stay
/// within the shell width for proposals to land inside it.
pub fn default_conditioned_beta(params: &GibbsParams) -> f64 {
    default_beta(params.epsilon).min(0.5 * (params.shell_width / params.mass_level).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub params: GibbsParams,
    pub step_beta: f64,
    pub n_steps: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: Field,
}

impl ChainConfig {
    pub fn validate(&self, basis: &HermiteBasis) -> Result<()> {
        self.params.validate()?;
        if !(self.step_beta > 0.0 && self.step_beta <= 1.0) {
            return param_err(format!("step_beta must lie in (0, 1], got {}", self.step_beta));
        }
        if self.n_steps <= self.n_burn {
            return param_err(format!(
                "n_steps ({}) must exceed n_burn ({})",
                self.n_steps, self.n_burn
            ));
        }
        if self.thin == 0 {
            return param_err("thin must be at least 1");
        }
        if self.init.dim() != basis.dim() {
            return param_err(format!(
                "initial field has {} coefficients, basis has {}",
                self.init.dim(),
                basis.dim()
            ));
        }
        if !self.init.is_finite() {
            return param_err("initial field is not finite");
        }
        Ok(())
    }
}

/// A Monte Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_effective: f64,
    /// `value` is a natural logarithm when set.
    pub log_scale: bool,
}

/// Streaming log-mean-exp with a running max shift.
#[derive(Debug, Clone, Copy)]
pub struct LogMeanExp {
    shift: f64,
    s1: f64,
    s2: f64,
    n: usize,
}

impl Default for LogMeanExp {
    fn default() -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            s1: 0.0,
            s2: 0.0,
            n: 0,
        }
    }
}

impl LogMeanExp {
    /// Add one sample of `log w` (`-∞` for a zero weight).
    pub fn push(&mut self, lw: f64) {
        self.n += 1;
        if lw == f64::NEG_INFINITY {
            return;
        }
        if lw > self.shift {
            let f = (self.shift - lw).exp();
            self.s1 *= f;
            self.s2 *= f * f;
            self.shift = lw;
        }
        let e = (lw - self.shift).exp();
        self.s1 += e;
        self.s2 += e * e;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// `log (1/n Σ w_i)`.
    pub fn log_mean(&self) -> f64 {
        if self.s1 == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shift + (self.s1 / self.n as f64).ln()
    }

    /// Kish effective sample size `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        if self.s2 == 0.0 {
            0.0
        } else {
            self.s1 * self.s1 / self.s2
        }
    }

    /// Delta-method standard error of [`Self::log_mean`].
    pub fn log_se(&self) -> f64 {
        let n = self.n as f64;
        if self.s1 == 0.0 {
            return f64::INFINITY;
        }
        let m1 = self.s1 / n;
        let var = (self.s2 / n - m1 * m1).max(0.0);
        (var / n).sqrt() / m1
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.log_mean(),
            std_error: self.log_se(),
            n_effective: self.ess(),
            log_scale: true,
        }
    }
}

/// Potential and Wick mass of a field in one pass.
fn potential(basis: &HermiteBasis, params: &GibbsParams, phi: &Field) -> f64 {
    tamed_potential(basis, params, phi)
}

fn in_shell(params: &GibbsParams, mw: f64) -> bool {
    (mw - params.mass_level).abs() <= params.shell_width
}

/// One pCN proposal `√(1−β²)φ + βξ`, `ξ ~ μ_{ε,N}`, accepted with probability
/// `min(1, e^{(V(φ) − V(φ'))/ε})`.
pub fn pcn_step<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    state: &Field,
    config: &ChainConfig,
    rng: &mut R,
) -> (Field, bool) {
    let v = potential(basis, &config.params, state);
    let (f, _, acc) = pcn_move(basis, &config.params, config.step_beta, state, v, None, rng);
    (f, acc)
}

/// pCN move with a cached potential; `shell` rejects proposals outside the Wick-mass shell.
fn pcn_move<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    params: &GibbsParams,
    beta: f64,
    state: &Field,
    v_state: f64,
    shell: Option<&GibbsParams>,
    rng: &mut R,
) -> (Field, f64, bool) {
    let a = (1.0 - beta * beta).max(0.0).sqrt();
    let mut prop = Field::zeros(basis.dim());
    sample_gaussian_into(basis, params.epsilon, rng, &mut prop.coeffs);
    for (p, s) in prop.coeffs.iter_mut().zip(&state.coeffs) {
        *p = s * a + *p * beta;
    }
    let u: f64 = rng.gen();
    if let Some(sp) = shell {
        if !in_shell(sp, wick_mass(basis, sp, &prop)) {
            return (state.clone(), v_state, false);
        }
    }
    let v_prop = potential(basis, params, &prop);
    let log_alpha = (v_state - v_prop) / params.epsilon;
    if log_alpha >= 0.0 || u.ln() < log_alpha {
        (prop, v_prop, true)
    } else {
        (state.clone(), v_state, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub step: usize,
    pub coeffs: Vec<Complex64>,
    pub wick_mass: f64,
    pub h: f64,
    pub hg: f64,
}

/// Thinned post-burn samples of one chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleStore {
    pub dim: usize,
    pub records: Vec<SampleRecord>,
}

impl SampleStore {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fields(&self) -> impl Iterator<Item = Field> + '_ {
        self.records.iter().map(|r| Field::new(r.coeffs.clone()))
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["step".to_string()];
        for n in 0..self.dim {
            cols.push(format!("re{n}"));
            cols.push(format!("im{n}"));
        }
        cols.extend(["wick_mass", "h", "hg"].map(String::from));
        cols.join(",")
    }

    /// CSV with a header row; lines of `comment` are written first, each prefixed by `# `.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: &str) -> Result<()> {
        for line in comment.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", self.csv_header())?;
        for r in &self.records {
            let mut line = r.step.to_string();
            for c in &r.coeffs {
                line.push_str(&format!(",{:e},{:e}", c.re, c.im));
            }
            line.push_str(&format!(",{:e},{:e},{:e}", r.wick_mass, r.h, r.hg));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Binary layout: magic `GPSS`, `u64` dim, `u64` record count, then per record a `u64`
    /// step followed by `2·dim + 3` little-endian `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"GPSS")?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&(r.step as u64).to_le_bytes())?;
            for c in &r.coeffs {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
            for v in [r.wick_mass, r.h, r.hg] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`Self::write_binary`]; a leading `#` text line is skipped.
    pub fn read_binary(mut bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Config("malformed sample store".into());
        if bytes.first() == Some(&b'#') {
            let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(bad)?;
            bytes = &bytes[nl + 1..];
        }
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + k).ok_or_else(bad)?;
            pos += k;
            Ok(s)
        };
        if take(4)? != b"GPSS" {
            return Err(bad());
        }
        let u64_of = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
        let f64_of = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let dim = u64_of(take(8)?) as usize;
        let count = u64_of(take(8)?) as usize;
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let step = u64_of(take(8)?) as usize;
            let mut coeffs = Vec::with_capacity(dim);
            for _ in 0..dim {
                let re = f64_of(take(8)?);
                let im = f64_of(take(8)?);
                coeffs.push(Complex64::new(re, im));
            }
            let wm = f64_of(take(8)?);
            let h = f64_of(take(8)?);
            let hg = f64_of(take(8)?);
            records.push(SampleRecord {
                step,
                coeffs,
                wick_mass: wm,
                h,
                hg,
            });
        }
        Ok(Self { dim, records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time of `‖φ‖²_{L²}` over post-burn steps.
    pub iat_mass: f64,
    pub n_post_burn: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub store: SampleStore,
    pub diagnostics: ChainDiagnostics,
}

fn record(basis: &HermiteBasis, params: &GibbsParams, step: usize, phi: &Field) -> SampleRecord {
    let e = energy_breakdown(basis, phi, params.coupling, params.chem_potential);
    SampleRecord {
        step,
        coeffs: phi.coeffs.clone(),
        wick_mass: wick_mass(basis, params, phi),
        h: e.total_h,
        hg: e.total_hg,
    }
}

fn drive(basis: &HermiteBasis, config: &ChainConfig, conditioned: bool) -> Result<ChainOutput> {
    config.validate(basis)?;
    let params = &config.params;
    if conditioned && !in_shell(params, wick_mass(basis, params, &config.init)) {
        return param_err(format!(
            "initial field has Wick mass {:.6} outside [{}, {}]",
            wick_mass(basis, params, &config.init),
            params.mass_level - params.shell_width,
            params.mass_level + params.shell_width
        ));
    }
    let mut rng = stream(config.seed, if conditioned { 1 } else { 0 });
    let mut state = config.init.clone();
    let mut v = potential(basis, params, &state);
    let mut accepted = 0usize;
    let mut trace = Vec::with_capacity(config.n_steps - config.n_burn);
    let mut store = SampleStore {
        dim: basis.dim(),
        records: Vec::new(),
    };
    let shell = conditioned.then_some(params);
    for step in 0..config.n_steps {
        let (next, nv, acc) = pcn_move(basis, params, config.step_beta, &state, v, shell, &mut rng);
        state = next;
        v = nv;
        if step >= config.n_burn {
            accepted += acc as usize;
            trace.push(state.norm_sqr());
            if (step - config.n_burn) % config.thin == 0 {
                store.records.push(record(basis, params, step, &state));
            }
        }
    }
    let n_post = config.n_steps - config.n_burn;
    let acceptance_rate = accepted as f64 / n_post as f64;
    let mut warnings = Vec::new();
    if acceptance_rate < 0.01 {
        warnings.push(format!(
            "acceptance rate {acceptance_rate:.4} below 1%: step_beta {} too large for epsilon {}",
            config.step_beta, params.epsilon
        ));
    }
    Ok(ChainOutput {
        store,
        diagnostics: ChainDiagnostics {
            acceptance_rate,
            iat_mass: integrated_autocorrelation(&trace),
            n_post_burn: n_post,
            warnings,
        },
    })
}

/// Unconditioned chain targeting `ρ_{ε,A}`.
pub fn run_chain(basis: &HermiteBasis, config: &ChainConfig) -> Result<ChainOutput> {
    drive(basis, config, false)
}

/// Chain targeting `ρ_{ε,A}` restricted to `|M^w − D| ≤ r`; proposals leaving the shell
/// are rejected inside the Metropolis filter.
pub fn run_conditioned_chain(basis: &HermiteBasis, config: &ChainConfig) -> Result<ChainOutput> {
    drive(basis, config, true)
}

/// `Q` rescaled to mass `D + ε Σ 1/λ_n²`, so that its Wick mass is exactly `D`.
pub fn make_shell_init(basis: &HermiteBasis, params: &GibbsParams, q: &Field) -> Field {
    let target = params.mass_level + renorm_constant(params);
    let m = q.norm_sqr();
    if m == 0.0 {
        return Field::mode(basis.dim(), 0, target.sqrt());
    }
    q * (target / m).sqrt()
}

/// Integrated autocorrelation time with Sokal's adaptive window (`c = 5`).
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = series
        .iter()
        .map(|x| Complex64::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|z| *z = Complex64::new(z.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 0.0) {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n {
        tau += 2.0 * buf[t].re / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

fn check_samples(n: usize) -> Result<()> {
    if n < 1000 {
        return param_err(format!("estimators need at least 1000 samples, got {n}"));
    }
    Ok(())
}

fn ess_guard(acc: &LogMeanExp, what: &str) -> Result<()> {
    let ess = acc.ess();
    if ess < 10.0 {
        return Err(Error::Diagnostic(format!(
            "{what}: effective sample size {ess:.2} below 10"
        )));
    }
    Ok(())
}

/// `log E_{μ_ε}[e^{−V/ε}]` by plain Monte Carlo from the Gaussian reference.
pub fn estimate_partition<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    params: &GibbsParams,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_samples(n_samples)?;
    let mut acc = LogMeanExp::default();
    for _ in 0..n_samples {
        let phi = sample_gaussian(basis, params, rng);
        acc.push(-potential(basis, params, &phi) / params.epsilon);
    }
    ess_guard(&acc, "partition function")?;
    Ok(acc.estimate())
}

/// `ln I_0(x)` for `x ≥ 0`: power series below 30, asymptotic expansion above.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < 30.0 {
        let q = 0.25 * x * x;
        let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        return sum.ln();
    }
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..8 {
        let odd = (2 * k - 1) as f64;
        term *= odd * odd / (k as f64 * 8.0 * x);
        sum += term;
    }
    x - 0.5 * (std::f64::consts::TAU * x).ln() + sum.ln()
}

/// Log density ratio `dμ_ε / dq` for the proposal `q` that draws `ξ ~ μ_ε` and a uniform
/// phase `θ` and returns `e^{iθ}Q + ξ`.
///
/// Averaging the shifted Gaussian over the orbit gives
/// `dq/dμ_ε(φ) = e^{−‖Q‖²_{ℋ¹}/ε} I_0(2|⟨Q, φ⟩_{ℋ¹}|/ε)`.
pub fn orbit_mixture_log_ratio(basis: &HermiteBasis, epsilon: f64, q: &Field, phi: &Field) -> f64 {
    let mut qq = 0.0;
    let mut qp = Complex64::new(0.0, 0.0);
    for (n, (a, b)) in q.coeffs.iter().zip(&phi.coeffs).enumerate() {
        let l2 = basis.eigenvalue_sq(n);
        qq += l2 * a.norm_sqr();
        qp += a.conj() * b * l2;
    }
    qq / epsilon - ln_bessel_i0(2.0 * qp.norm() / epsilon)
}

/// Shell probabilities for several half-widths from one importance-sampled population.
///
/// The numerator `E_μ[e^{−V/ε} 1_shell]` is sampled from `μ_{ε,N}` shifted to a uniformly
/// random point of the phase orbit of the mass-adjusted `Q` (see [`make_shell_init`]),
/// weighted by the exact density ratio [`orbit_mixture_log_ratio`]; the denominator is
/// [`estimate_partition`] on its own draws. Every width reuses the same draws, so the
/// estimates are monotone in the width.
pub fn estimate_shell_probabilities<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    params: &GibbsParams,
    q: &Field,
    widths: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<Estimate>> {
    check_samples(n_samples)?;
    if q.dim() != basis.dim() {
        return param_err("soliton dimension does not match the basis");
    }
    let center = make_shell_init(basis, params, q);
    let mut accs = vec![LogMeanExp::default(); widths.len()];
    for _ in 0..n_samples {
        let xi = sample_gaussian(basis, params, rng);
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let phi = &xi + &center.rotate(theta);
        let mw = wick_mass(basis, params, &phi);
        let lw = orbit_mixture_log_ratio(basis, params.epsilon, &center, &phi)
            - potential(basis, params, &phi) / params.epsilon;
        for (acc, &r) in accs.iter_mut().zip(widths) {
            let inside = (mw - params.mass_level).abs() <= r;
            acc.push(if inside { lw } else { f64::NEG_INFINITY });
        }
    }
    let den = estimate_partition(basis, params, n_samples, rng)?;
    let mut out = Vec::with_capacity(widths.len());
    for (acc, &r) in accs.iter().zip(widths) {
        ess_guard(acc, &format!("shell numerator at epsilon {}, r {r}", params.epsilon))?;
        let num = acc.estimate();
        out.push(Estimate {
            value: num.value - den.value,
            std_error: num.std_error.hypot(den.std_error),
            n_effective: num.n_effective.min(den.n_effective),
            log_scale: true,
        });
    }
    Ok(out)
}

/// `log ρ_{ε,A}(|M^w − D| ≤ r)` by importance sampling at the soliton.
pub fn estimate_shell_probability<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    params: &GibbsParams,
    q: &Field,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    Ok(estimate_shell_probabilities(basis, params, q, &[params.shell_width], n_samples, rng)?[0])
}

/// `log ρ_{ε,A}(shell)` as a self-normalized ratio over plain Gaussian draws.
pub fn estimate_shell_probability_naive<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    params: &GibbsParams,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_samples(n_samples)?;
    let mut lw = Vec::with_capacity(n_samples);
    let mut hit = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let phi = sample_gaussian(basis, params, rng);
        lw.push(-potential(basis, params, &phi) / params.epsilon);
        hit.push(in_shell(params, wick_mass(basis, params, &phi)));
    }
    let shift = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = n_samples as f64;
    let w: Vec<f64> = lw.iter().map(|l| (l - shift).exp()).collect();
    let b = w.iter().sum::<f64>() / n;
    let a = w.iter().zip(&hit).filter(|(_, &h)| h).map(|(x, _)| x).sum::<f64>() / n;
    let hits = hit.iter().filter(|&&h| h).count();
    if hits < 10 {
        return Err(Error::Diagnostic(format!(
            "naive shell estimator saw only {hits} samples in the shell"
        )));
    }
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (x, &h) in w.iter().zip(&hit) {
        let ai = if h { *x } else { 0.0 } - a;
        let bi = x - b;
        vaa += ai * ai;
        vbb += bi * bi;
        vab += ai * bi;
    }
    let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
    let var = (vaa / (a * a) + vbb / (b * b) - 2.0 * vab / (a * b)).max(0.0) / n;
    let sw2: f64 = w.iter().zip(&hit).filter(|(_, &h)| h).map(|(x, _)| x * x).sum();
    let sw: f64 = a * n;
    Ok(Estimate {
        value: (a / b).ln(),
        std_error: var.sqrt(),
        n_effective: sw * sw / sw2,
        log_scale: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_exp_matches_direct() {
        let xs = [0.1, -3.0, 2.0, 700.0, 699.0];
        let mut acc = LogMeanExp::default();
        xs.iter().for_each(|&x| acc.push(x));
        let direct = 700.0 + ((1.0 + (-1f64).exp()) / 5.0).ln();
        assert!((acc.log_mean() - direct).abs() < 1e-12);
    }

    #[test]
    fn bessel_i0_values() {
        assert_eq!(ln_bessel_i0(0.0), 0.0);
        // I_0(1) = 1.2660658777520082, I_0(10) = 2815.716628466254
        assert!((ln_bessel_i0(1.0) - 1.2660658777520082f64.ln()).abs() < 1e-14);
        assert!((ln_bessel_i0(10.0) - 2815.716628466254f64.ln()).abs() < 1e-13);
        // continuity across the switch between series and expansion
        assert!((ln_bessel_i0(30.0 - 1e-9) - ln_bessel_i0(30.0)).abs() < 1e-9);
    }

    #[test]
    fn constant_weights_have_zero_error() {
        let mut acc = LogMeanExp::default();
        (0..100).for_each(|_| acc.push(0.0));
        assert_eq!(acc.log_mean(), 0.0);
        assert_eq!(acc.log_se(), 0.0);
        assert_eq!(acc.ess(), 100.0);
    }

    #[test]
    fn iat_of_white_noise_is_near_one() {
        let mut rng = stream(5, 0);
        let xs: Vec<f64> = (0..20000).map(|_| rng.gen::<f64>()).collect();
        let t = integrated_autocorrelation(&xs);
        assert!((t - 1.0).abs() < 0.15, "{t}");
    }

    #[test]
    fn iat_of_ar1() {
        let mut rng = stream(6, 0);
        let rho: f64 = 0.8;
        let mut x = 0.0;
        let xs: Vec<f64> = (0..200000)
            .map(|_| {
                x = rho * x + rng.gen::<f64>() - 0.5;
                x
            })
            .collect();
        let exact = (1.0 + rho) / (1.0 - rho);
        let t = integrated_autocorrelation(&xs);
        assert!((t - exact).abs() / exact < 0.1, "{t} vs {exact}");
    }

    #[test]
    fn config_validation() {
        let b = HermiteBasis::new(2).unwrap();
        let good = ChainConfig {
            params: GibbsParams::default(),
            step_beta: 0.3,
            n_steps: 10,
            n_burn: 2,
            thin: 1,
            seed: 1,
            init: Field::zeros(3),
        };
        assert!(good.validate(&b).is_ok());
        assert!(ChainConfig { step_beta: 0.0, ..good.clone() }.validate(&b).is_err());
        assert!(ChainConfig { step_beta: 1.5, ..good.clone() }.validate(&b).is_err());
        assert!(ChainConfig { n_burn: 10, ..good.clone() }.validate(&b).is_err());
        assert!(ChainConfig { init: Field::zeros(2), ..good }.validate(&b).is_err());
    }

    #[test]
    fn shell_init_has_exact_wick_mass() {
        let b = HermiteBasis::new(4).unwrap();
        let p = GibbsParams::new(0.3, 1.0, 0.0, 4, 2.0, 0.1).unwrap();
        let q = Field::from_real(&[1.0, 0.0, 0.3, 0.0, 0.1]);
        let f = make_shell_init(&b, &p, &q);
        assert!((wick_mass(&b, &p, &f) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn binary_round_trip() {
        let store = SampleStore {
            dim: 2,
            records: vec![SampleRecord {
                step: 3,
                coeffs: vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)],
                wick_mass: 0.1,
                h: 0.2,
                hg: 0.3,
            }],
        };
        let mut buf = Vec::new();
        store.write_binary(&mut buf).unwrap();
        assert_eq!(SampleStore::read_binary(&buf).unwrap(), store);
        assert!(SampleStore::read_binary(&buf[..10]).is_err());
    }
}
