//! Rate fits and the low-temperature experiments: free energy, shell entropy and
//! concentration near the soliton orbit, plus a tensor quadrature oracle for `N ≤ 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{grand_hamiltonian, tamed_potential};
use crate::error::{param_err, Error, Result};
use crate::fields::{renorm_constant, Field, GibbsParams};
use crate::mcmc::{
    default_conditioned_beta, estimate_partition, estimate_shell_probabilities,
    integrated_autocorrelation, make_shell_init, run_conditioned_chain, ChainConfig,
};
use crate::rng::{mix, stream};
use crate::soliton::{
    minimize_constrained, minimize_unconstrained_hg, OrbitProbe, SolitonOptions,
};
use crate::spectral::HermiteBasis;
use crate::Complex64;

/// One `(ε, log value, standard error)` point of a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub epsilon: f64,
    pub log_value: f64,
    pub std_error: f64,
}

/// Weighted least-squares fit `log P ≈ −c/ε + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope_c: f64,
    pub intercept_b: f64,
    /// Weighted residual sum of squares.
    pub residual: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub points: Vec<RatePoint>,
}

/// Fit `log_value` against `1/ε`. Weights are `1/std_error²` unless some error is zero
/// or not finite, in which case all points get unit weight. Standard errors are
/// inflated by `√χ²_red` when the scatter exceeds the quoted errors.
pub fn fit_rate(points: &[RatePoint]) -> Result<RateFit> {
    if points.len() < 3 {
        return param_err(format!("rate fit needs at least 3 points, got {}", points.len()));
    }
    let mut eps: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 3 {
        return param_err(format!(
            "degenerate design: {} distinct epsilon values, need 3",
            eps.len()
        ));
    }
    if points.iter().any(|p| !(p.epsilon > 0.0) || !p.log_value.is_finite()) {
        return param_err("rate fit points need positive epsilon and finite values");
    }
    let unit = points.iter().any(|p| !(p.std_error > 0.0 && p.std_error.is_finite()));
    let w: Vec<f64> = points
        .iter()
        .map(|p| if unit { 1.0 } else { 1.0 / (p.std_error * p.std_error) })
        .collect();
    let x: Vec<f64> = points.iter().map(|p| 1.0 / p.epsilon).collect();
    let y: Vec<f64> = points.iter().map(|p| p.log_value).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(a, b)| a * (b - xm) * (b - xm)).sum();
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(a, (b, c))| a * (b - xm) * (c - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = w
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(a, (b, c))| {
            let r = c - intercept - slope * b;
            a * r * r
        })
        .sum();
    let dof = (points.len() - 2) as f64;
    let scale = if unit {
        (rss / dof).sqrt()
    } else {
        (rss / dof).sqrt().max(1.0)
    };
    let slope_se = scale / sxx.sqrt();
    let intercept_se = scale * (1.0 / sw + xm * xm / sxx).sqrt();
    Ok(RateFit {
        slope_c: -slope + 0.0,
        intercept_b: intercept,
        residual: rss,
        slope_se,
        intercept_se,
        points: points.to_vec(),
    })
}

/// One estimated cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub series: String,
    pub epsilon: f64,
    /// Shell half-width or orbit-distance threshold, depending on the experiment.
    pub r_or_delta: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_effective: f64,
    /// Zero events observed; `estimate` is then an upper bound on the probability.
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFit {
    pub label: String,
    pub r_or_delta: f64,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTarget {
    pub label: String,
    pub value: f64,
    pub source: String,
}

/// Outcome of one experiment: cells, fits, the variational target and a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub params: GibbsParams,
    pub n_samples: usize,
    pub cells: Vec<Cell>,
    pub fits: Vec<LabeledFit>,
    /// Index into `fits` of the headline fit.
    pub headline: Option<usize>,
    pub target: f64,
    pub target_source: String,
    pub references: Vec<ReferenceTarget>,
    pub tolerance: f64,
    pub pass: bool,
    pub verdict: String,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn headline_fit(&self) -> Option<&RateFit> {
        self.headline.and_then(|i| self.fits[i].fit.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `series,epsilon,r_or_delta,estimate,std_error,n_effective,censored` rows.
    pub fn cells_csv(&self) -> String {
        let mut s =
            String::from("series,epsilon,r_or_delta,estimate,std_error,n_effective,censored\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{}\n",
                c.series,
                c.epsilon, c.r_or_delta, c.estimate, c.std_error, c.n_effective, c.censored as u8
            ));
        }
        s
    }

    /// Two-column `1/ε  log value` data per fit, followed by the fitted line as comments.
    pub fn fit_lines(&self) -> Vec<(String, String)> {
        self.fits
            .iter()
            .filter_map(|f| {
                let fit = f.fit.as_ref()?;
                let mut s = format!(
                    "# {} slope_c {:e} intercept_b {:e}\n",
                    f.label, fit.slope_c, fit.intercept_b
                );
                for p in &fit.points {
                    s.push_str(&format!("{:e} {:e}\n", 1.0 / p.epsilon, p.log_value));
                }
                Some((f.label.clone(), s))
            })
            .collect()
    }
}

const TOLERANCE_NOTE: &str =
    "tolerances are engineering choices validated against the exactly solvable single-mode case";

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return param_err("epsilon grid must be nonempty and positive");
    }
    Ok(())
}

/// Free-energy tolerance on `|ε log Z|` and on the extrapolated intercept.
pub const FREE_ENERGY_TOL: f64 = 0.05;

/// `ε log Z_{ε,A}` along `eps_grid`; the low-temperature limit is `−inf H^G = 0`.
pub fn free_energy_experiment(
    basis: &HermiteBasis,
    base: &GibbsParams,
    eps_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    base.validate()?;
    check_grid(eps_grid)?;
    let opts = SolitonOptions {
        seed: mix(&[seed, 0xf0]),
        ..SolitonOptions::default()
    };
    let zero = minimize_unconstrained_hg(basis, base.coupling, base.chem_potential, &opts)?;
    let estimates: Vec<Result<(f64, crate::mcmc::Estimate)>> = eps_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let p = base.with_epsilon(eps);
            let mut rng = stream(mix(&[seed, 0xfe, i as u64]), 0);
            estimate_partition(basis, &p, n_samples, &mut rng).map(|e| (eps, e))
        })
        .collect();
    let mut cells = Vec::new();
    let mut points = Vec::new();
    for e in estimates {
        let (eps, est) = e?;
        cells.push(Cell {
            series: "log_z".into(),
            epsilon: eps,
            r_or_delta: 0.0,
            estimate: eps * est.value,
            std_error: eps * est.std_error,
            n_effective: est.n_effective,
            censored: false,
        });
        points.push(RatePoint {
            epsilon: eps,
            log_value: est.value,
            std_error: est.std_error,
        });
    }
    let fit = fit_rate(&points).ok();
    let mut by_eps: Vec<&Cell> = cells.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let decreasing = by_eps
        .windows(2)
        .all(|w| w[1].estimate.abs() <= w[0].estimate.abs());
    let smallest = by_eps.last().map_or(f64::NAN, |c| c.estimate.abs());
    let intercept = fit.as_ref().map_or(f64::NAN, |f| -f.slope_c);
    let pass = decreasing && smallest <= FREE_ENERGY_TOL && intercept.abs() <= FREE_ENERGY_TOL;
    let verdict = format!(
        "|eps log Z| non-increasing: {decreasing}; at smallest eps {smallest:.4e} (tol {FREE_ENERGY_TOL}); extrapolated limit {intercept:.4e}"
    );
    Ok(ExperimentReport {
        experiment: "free-energy".into(),
        config_hash: String::new(),
        seed,
        params: *base,
        n_samples,
        cells,
        fits: vec![LabeledFit {
            label: "log_z".into(),
            r_or_delta: 0.0,
            fit,
        }],
        headline: Some(0),
        target: -zero.objective,
        target_source: "unconstrained minimization of the grand Hamiltonian (soliton module)".into(),
        references: vec![],
        tolerance: FREE_ENERGY_TOL,
        pass,
        verdict,
        notes: vec![
            format!(
                "minimizer of H^G reached norm {:.3e} after {} iterations",
                zero.field.norm_sqr().sqrt(),
                zero.iterations
            ),
            TOLERANCE_NOTE.into(),
        ],
    })
}

/// Relative tolerance of the entropy slope against its target.
pub const ENTROPY_REL_TOL: f64 = 0.15;

/// Default shell half-widths as fractions of `D`.
pub const R_SCHEDULE: [f64; 3] = [0.2, 0.1, 0.05];

/// Shell probabilities along `eps_grid × r_fracs·D`, fitted in `ε` per width.
///
/// The headline fit is the smallest width; its slope is compared with
/// `inf_{M=D} H^G = I(D) + A D³`.
pub fn entropy_experiment(
    basis: &HermiteBasis,
    base: &GibbsParams,
    eps_grid: &[f64],
    r_fracs: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    base.validate()?;
    check_grid(eps_grid)?;
    if r_fracs.is_empty() || r_fracs.iter().any(|r| !(*r > 0.0)) {
        return param_err("shell schedule must be nonempty and positive");
    }
    let d = base.mass_level;
    let a = base.chem_potential;
    let opts = SolitonOptions {
        seed: mix(&[seed, 0x501]),
        ..SolitonOptions::default()
    };
    let sol = minimize_constrained(basis, base.coupling, d, &opts)?;
    let target = sol.energy + a * d * d * d;
    let hg_q = grand_hamiltonian(basis, &sol.q_coeffs, base.coupling, a);
    if (hg_q - target).abs() > 1e-8 * target.abs().max(1.0) {
        return Err(Error::Diagnostic(format!(
            "H^G(Q) = {hg_q} differs from I(D) + A D^3 = {target}"
        )));
    }
    // The reference has E|c_n|² = ε/λ_n², so the sampled density is proportional to
    // exp(−(‖φ‖²_{ℋ¹} + V)/ε); on the shell its mode is the half-coupling ground state,
    // which therefore centres the importance proposal.
    let center = minimize_constrained(basis, 0.5 * base.coupling, d, &opts)?;
    let widths: Vec<f64> = r_fracs.iter().map(|f| f * d).collect();
    let per_eps: Vec<Result<Vec<crate::mcmc::Estimate>>> = eps_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let p = base.with_epsilon(eps);
            let mut rng = stream(mix(&[seed, 0xe7, i as u64]), 0);
            estimate_shell_probabilities(basis, &p, &center.q_coeffs, &widths, n_samples, &mut rng)
                .map_err(|e| match e {
                    Error::Diagnostic(m) => Error::Diagnostic(format!("epsilon {eps}: {m}")),
                    other => other,
                })
        })
        .collect();
    let mut cells = Vec::new();
    let mut notes = Vec::new();
    let mut table: Vec<Vec<crate::mcmc::Estimate>> = Vec::new();
    for (res, &eps) in per_eps.into_iter().zip(eps_grid) {
        let ests = res?;
        let mut order: Vec<usize> = (0..widths.len()).collect();
        order.sort_by(|&x, &y| widths[x].total_cmp(&widths[y]));
        if order
            .windows(2)
            .any(|w| ests[w[1]].value < ests[w[0]].value)
        {
            notes.push(format!("shell probability not monotone in r at epsilon {eps}"));
        }
        for (est, &r) in ests.iter().zip(&widths) {
            cells.push(Cell {
                series: "shell".into(),
                epsilon: eps,
                r_or_delta: r,
                estimate: est.value,
                std_error: est.std_error,
                n_effective: est.n_effective,
                censored: false,
            });
        }
        table.push(ests);
    }
    let mut fits = Vec::new();
    for (k, &r) in widths.iter().enumerate() {
        let pts: Vec<RatePoint> = eps_grid
            .iter()
            .zip(&table)
            .map(|(&eps, row)| RatePoint {
                epsilon: eps,
                log_value: row[k].value,
                std_error: row[k].std_error,
            })
            .collect();
        fits.push(LabeledFit {
            label: format!("r={r}"),
            r_or_delta: r,
            fit: fit_rate(&pts).ok(),
        });
    }
    let headline = widths
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i);
    let trend: Vec<String> = fits
        .iter()
        .map(|f| {
            format!(
                "{}: {}",
                f.label,
                f.fit.as_ref().map_or("no fit".into(), |x| format!("{:.4}", x.slope_c))
            )
        })
        .collect();
    notes.push(format!("slope trend over the shell schedule: {}", trend.join(", ")));
    let c = headline
        .and_then(|i| fits[i].fit.as_ref())
        .map_or(f64::NAN, |f| f.slope_c);
    let rel = (c - target).abs() / target.abs();
    let pass = rel <= ENTROPY_REL_TOL;
    let references = vec![ReferenceTarget {
        label: "measure-consistent".into(),
        value: 2.0 * center.energy + a * d * d * d,
        source: "2 I(D) at half coupling plus A D^3 (soliton module)".into(),
    }];
    notes.push(format!(
        "I(D) = {:.6}, soliton gradient residual {:.2e}",
        sol.energy, sol.grad_residual
    ));
    notes.push(TOLERANCE_NOTE.into());
    Ok(ExperimentReport {
        experiment: "entropy".into(),
        config_hash: String::new(),
        seed,
        params: *base,
        n_samples,
        cells,
        fits,
        headline,
        target,
        target_source: "I(D) from constrained minimization plus A D^3 (soliton and energy modules)"
            .into(),
        references,
        tolerance: ENTROPY_REL_TOL,
        pass,
        verdict: format!(
            "headline slope {c:.4} vs target {target:.4}: relative error {rel:.3} (tol {ENTROPY_REL_TOL})"
        ),
        notes,
    })
}

/// Chain settings for [`concentration_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSettings {
    pub n_steps: usize,
    pub n_burn: usize,
    pub thin: usize,
    /// `None` selects [`default_conditioned_beta`] per temperature.
    pub beta: Option<f64>,
    pub p: f64,
}

impl Default for ConcentrationSettings {
    fn default() -> Self {
        Self {
            n_steps: 200_000,
            n_burn: 20_000,
            thin: 10,
            beta: None,
            p: 4.0,
        }
    }
}

type SeriesRow = Vec<(f64, f64, f64, bool)>;

/// Exceedance fractions `P(dist ≥ δ)` with standard errors from the autocorrelation time.
fn exceedances(dist: &[f64], delta_grid: &[f64]) -> (SeriesRow, f64) {
    let n = dist.len() as f64;
    let tau = integrated_autocorrelation(dist);
    let n_eff = n / tau;
    let row = delta_grid
        .iter()
        .map(|&delta| {
            let hits = dist.iter().filter(|&&x| x >= delta).count() as f64;
            let f = hits / n;
            if hits == 0.0 {
                (3.0 / n_eff, f64::INFINITY, n_eff, true)
            } else {
                (f, (f * (1.0 - f) / n_eff).sqrt(), n_eff, false)
            }
        })
        .collect();
    (row, tau)
}

/// Fits per δ for one series, with the pass flag and verdict text.
fn concentration_fits(
    series: &str,
    rows: &[SeriesRow],
    eps_grid: &[f64],
    delta_grid: &[f64],
    notes: &mut Vec<String>,
) -> (Vec<LabeledFit>, bool, Vec<String>) {
    let mut fits = Vec::new();
    let mut pass = true;
    let mut verdicts = Vec::new();
    let mut last_c = f64::NEG_INFINITY;
    let mut deltas: Vec<usize> = (0..delta_grid.len()).collect();
    deltas.sort_by(|&x, &y| delta_grid[x].total_cmp(&delta_grid[y]));
    for &k in &deltas {
        let delta = delta_grid[k];
        let mut pts = Vec::new();
        let mut censored = 0;
        for (row, &eps) in rows.iter().zip(eps_grid) {
            let (f, se, _, cens) = row[k];
            if cens {
                censored += 1;
                continue;
            }
            pts.push(RatePoint {
                epsilon: eps,
                log_value: f.ln(),
                std_error: se / f,
            });
        }
        let mut by_eps: Vec<(f64, f64, bool)> = rows
            .iter()
            .zip(eps_grid)
            .map(|(row, &e)| (e, row[k].0, row[k].3))
            .collect();
        by_eps.sort_by(|x, y| y.0.total_cmp(&x.0));
        let fit = fit_rate(&pts).ok();
        if censored > 0 {
            notes.push(format!(
                "{series} delta {delta}: {censored} censored cell(s) excluded from the fit"
            ));
        }
        if delta > 0.0 {
            let strictly =
                by_eps.iter().all(|c| !c.2) && by_eps.windows(2).all(|w| w[1].1 < w[0].1);
            let (ok, msg) = match &fit {
                Some(f) => {
                    let significant = f.slope_c > 3.0 * f.slope_se;
                    let monotone = f.slope_c >= last_c;
                    last_c = f.slope_c;
                    (
                        significant && monotone && strictly,
                        format!(
                            "{series} delta {delta}: c = {:.4} +- {:.4}, significant {significant}, non-decreasing {monotone}, fractions strictly decreasing {strictly}",
                            f.slope_c, f.slope_se
                        ),
                    )
                }
                None => (
                    false,
                    format!("{series} delta {delta}: fewer than 3 uncensored temperatures, no fit"),
                ),
            };
            pass &= ok;
            verdicts.push(msg);
        }
        fits.push(LabeledFit {
            label: format!("{series} delta={delta}"),
            r_or_delta: delta,
            fit,
        });
    }
    (fits, pass, verdicts)
}

/// Fractions of shell-conditioned samples at `L^p` orbit distance `≥ δ` from the soliton
/// `Q`, fitted in `ε` per `δ`. Cells with no exceedance are censored and left out of the
/// fits.
///
/// A second series measures distances to the ground state at half coupling, the
/// constrained minimizer of the exponent `‖φ‖²_{ℋ¹} + V` of the sampled density; it is
/// reported for reference and does not enter the verdict.
pub fn concentration_experiment(
    basis: &HermiteBasis,
    base: &GibbsParams,
    eps_grid: &[f64],
    delta_grid: &[f64],
    settings: &ConcentrationSettings,
    seed: u64,
) -> Result<ExperimentReport> {
    base.validate()?;
    check_grid(eps_grid)?;
    if delta_grid.iter().any(|d| !(*d >= 0.0)) {
        return param_err("delta grid must be nonnegative");
    }
    if !(settings.p > 2.0) {
        return param_err(format!("concentration needs p > 2, got {}", settings.p));
    }
    let opts = SolitonOptions {
        seed: mix(&[seed, 0x501]),
        ..SolitonOptions::default()
    };
    let sol = minimize_constrained(basis, base.coupling, base.mass_level, &opts)?;
    let reference = minimize_constrained(basis, 0.5 * base.coupling, base.mass_level, &opts)?;
    type Row = (SeriesRow, SeriesRow, f64, f64, f64);
    let rows: Vec<Result<Row>> = eps_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let p = base.with_epsilon(eps);
            let beta = settings.beta.unwrap_or_else(|| default_conditioned_beta(&p));
            let config = ChainConfig {
                params: p,
                step_beta: beta,
                n_steps: settings.n_steps,
                n_burn: settings.n_burn,
                thin: settings.thin,
                seed: mix(&[seed, 0xc0, i as u64]),
                init: make_shell_init(basis, &p, &sol.q_coeffs),
            };
            let out = run_conditioned_chain(basis, &config)?;
            let mut probe = OrbitProbe::new(basis, &sol.q_coeffs);
            let mut probe_ref = OrbitProbe::new(basis, &reference.q_coeffs);
            let mut dist = Vec::with_capacity(out.store.len());
            let mut dist_ref = Vec::with_capacity(out.store.len());
            for f in out.store.fields() {
                dist.push(probe.distance(&f, settings.p)?.distance);
                dist_ref.push(probe_ref.distance(&f, settings.p)?.distance);
            }
            let (row, tau) = exceedances(&dist, delta_grid);
            let (row_ref, _) = exceedances(&dist_ref, delta_grid);
            Ok((row, row_ref, out.diagnostics.acceptance_rate, tau, beta))
        })
        .collect();
    let mut cells = Vec::new();
    let mut notes = Vec::new();
    let mut grid: Vec<SeriesRow> = Vec::new();
    let mut grid_ref: Vec<SeriesRow> = Vec::new();
    for (res, &eps) in rows.into_iter().zip(eps_grid) {
        let (row, row_ref, acc, tau, beta) = res?;
        notes.push(format!(
            "epsilon {eps}: step_beta {beta:.4}, acceptance {acc:.4}, autocorrelation time of the distance {tau:.1}"
        ));
        for (series, r) in [("soliton", &row), ("reference", &row_ref)] {
            for (&delta, &(f, se, ne, censored)) in delta_grid.iter().zip(r) {
                cells.push(Cell {
                    series: series.into(),
                    epsilon: eps,
                    r_or_delta: delta,
                    estimate: f,
                    std_error: se,
                    n_effective: ne,
                    censored,
                });
            }
        }
        grid.push(row);
        grid_ref.push(row_ref);
    }
    let (mut fits, pass, verdicts) =
        concentration_fits("soliton", &grid, eps_grid, delta_grid, &mut notes);
    let headline = fits.iter().rposition(|f| f.fit.is_some());
    let (ref_fits, ref_pass, ref_verdicts) =
        concentration_fits("reference", &grid_ref, eps_grid, delta_grid, &mut notes);
    fits.extend(ref_fits);
    notes.push(format!(
        "reference series (half-coupling ground state, L^{} orbit distance {:.4} from Q): criteria {}; {}",
        settings.p,
        OrbitProbe::new(basis, &sol.q_coeffs)
            .distance(&reference.q_coeffs, settings.p)?
            .distance,
        if ref_pass { "met" } else { "not met" },
        ref_verdicts.join("; ")
    ));
    notes.push("distances are to the phase orbit of one minimizer, an upper bound for the distance to the full minimizer set".into());
    notes.push(TOLERANCE_NOTE.into());
    Ok(ExperimentReport {
        experiment: "concentration".into(),
        config_hash: String::new(),
        seed,
        params: *base,
        n_samples: settings.n_steps,
        cells,
        fits,
        headline,
        target: 0.0,
        target_source: "positivity of c(delta) (soliton stability margin)".into(),
        references: vec![
            ReferenceTarget {
                label: "soliton energy".into(),
                value: sol.energy,
                source: "constrained minimization (soliton module)".into(),
            },
            ReferenceTarget {
                label: "half-coupling ground state energy".into(),
                value: reference.energy,
                source: "constrained minimization (soliton module)".into(),
            },
        ],
        tolerance: 3.0,
        pass,
        verdict: verdicts.join("; "),
        notes,
    })
}

/// Observable integrated by [`quadrature_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    /// `E_μ[e^{−V/ε}]`
    Partition,
    /// `ρ_{ε,A}(|M^w − D| ≤ r)`
    ShellProbability,
    /// `E_ρ[|c_mode|^{2 power}]` under the grand-canonical measure
    GibbsMoment { mode: usize, power: u32 },
    /// The same moment under the shell-conditioned measure
    ShellMoment { mode: usize, power: u32 },
}

/// Resolution of the oracle's tensor grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Panels along the total squared modulus.
    pub panels: usize,
    /// Panels along the split fraction between the two modes (`N = 1`).
    pub split_panels: usize,
    /// Trapezoid nodes for the relative phase (`N = 1`).
    pub phase_nodes: usize,
    /// Coverage in Gaussian standard deviations per real coordinate.
    pub tail: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            order: 16,
            panels: 48,
            split_panels: 8,
            phase_nodes: 16,
            tail: 6.0,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { 1.0 } else { p0 };
            let p = if m == 1 { z } else { p1 };
            dp = mf * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[lo, hi]` with `panels` panels plus extra breakpoints.
fn composite(lo: f64, hi: f64, panels: usize, breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = (0..=panels)
        .map(|k| lo + (hi - lo) * k as f64 / panels as f64)
        .chain(breaks.iter().cloned().filter(|b| *b > lo && *b < hi))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (gx, gw) = gauss_legendre(order);
    let mut out = Vec::new();
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let h = 0.5 * (b - a);
        for (x, w) in gx.iter().zip(&gw) {
            out.push((a + h * (x + 1.0), h * w));
        }
    }
    out
}

/// Tensor quadrature of `observable` against the coordinate density of `μ_{ε,N}`.
///
/// Coordinates are written `c_n = √s_n e^{iθ_n}`; each `s_n` is exponential with mean
/// `ε/λ_n²` and the phases are uniform. Since `V` depends only on the moduli and the
/// relative phase, `N = 0` is a one-dimensional integral and `N = 1` a three-dimensional
/// one, taken in the total `t = s_0 + s_1`, the split `u = s_0/t` and the relative phase.
/// Panels break at the shell boundaries so that indicator observables are integrated
/// to quadrature accuracy.
pub fn quadrature_oracle(
    basis: &HermiteBasis,
    params: &GibbsParams,
    observable: Observable,
    grid: &GridSpec,
) -> Result<f64> {
    let dim = basis.dim();
    if 2 * dim > 4 {
        return param_err(format!(
            "quadrature oracle supports real dimension at most 4, got {}",
            2 * dim
        ));
    }
    params.validate()?;
    match observable {
        Observable::GibbsMoment { mode, .. } | Observable::ShellMoment { mode, .. } if mode >= dim => {
            return param_err(format!("mode {mode} outside the basis"));
        }
        _ => {}
    }
    if grid.order == 0 || grid.panels == 0 || grid.split_panels == 0 || grid.phase_nodes == 0 {
        return param_err("grid resolution must be positive");
    }
    let eps = params.epsilon;
    let kappa = renorm_constant(params);
    let (lo_s, hi_s) = (
        params.mass_level - params.shell_width + kappa,
        params.mass_level + params.shell_width + kappa,
    );
    let means: Vec<f64> = (0..dim).map(|n| eps / basis.eigenvalue_sq(n)).collect();
    let max_mean = means.iter().cloned().fold(0.0, f64::max);
    let tail = grid.tail * grid.tail * max_mean;
    let shell_involved = matches!(
        observable,
        Observable::ShellProbability | Observable::ShellMoment { .. }
    );
    let t_max = if shell_involved { tail + hi_s } else { tail };
    let breaks = [lo_s, hi_s];
    let t_nodes = composite(0.0, t_max, grid.panels, &breaks, grid.order);

    // (log weight, in shell, moment value) for each quadrature point
    let mut pts: Vec<(f64, f64, bool, f64)> = Vec::new();
    let power = match observable {
        Observable::GibbsMoment { power, .. } | Observable::ShellMoment { power, .. } => power,
        _ => 0,
    };
    let mode = match observable {
        Observable::GibbsMoment { mode, .. } | Observable::ShellMoment { mode, .. } => mode,
        _ => 0,
    };
    let eval = |c: Vec<Complex64>, w: f64, pts: &mut Vec<(f64, f64, bool, f64)>| {
        let phi = Field::new(c);
        let m = phi.norm_sqr();
        let lw = -tamed_potential(basis, params, &phi) / eps;
        let inside = m >= lo_s && m <= hi_s;
        let mv = phi.coeffs[mode].norm_sqr().powi(power as i32);
        pts.push((w, lw, inside, mv));
    };
    if dim == 1 {
        let rate = 1.0 / means[0];
        for &(t, w) in &t_nodes {
            let dens = rate * (-rate * t).exp();
            eval(vec![Complex64::new(t.sqrt(), 0.0)], w * dens, &mut pts);
        }
    } else {
        let (r0, r1) = (1.0 / means[0], 1.0 / means[1]);
        let u_nodes = composite(0.0, 1.0, grid.split_panels, &[], grid.order);
        let nth = grid.phase_nodes;
        for &(t, wt) in &t_nodes {
            for &(u, wu) in &u_nodes {
                let (s0, s1) = (u * t, (1.0 - u) * t);
                let dens = r0 * r1 * (-r0 * s0 - r1 * s1).exp() * t;
                for k in 0..nth {
                    let th = std::f64::consts::TAU * k as f64 / nth as f64;
                    let c = vec![
                        Complex64::new(s0.sqrt(), 0.0),
                        Complex64::from_polar(s1.sqrt(), th),
                    ];
                    eval(c, wt * wu * dens / nth as f64, &mut pts);
                }
            }
        }
    }
    let shift = pts
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut zs, mut mom, mut moms) = (0.0, 0.0, 0.0, 0.0);
    for &(w, lw, inside, mv) in &pts {
        let e = w * (lw - shift).exp();
        z += e;
        mom += e * mv;
        if inside {
            zs += e;
            moms += e * mv;
        }
    }
    Ok(match observable {
        Observable::Partition => z * shift.exp(),
        Observable::ShellProbability => zs / z,
        Observable::GibbsMoment { .. } => mom / z,
        Observable::ShellMoment { .. } => {
            if zs == 0.0 {
                return Err(Error::Domain("shell carries no mass on the oracle grid".into()));
            }
            moms / zs
        }
    })
}

/// Closed form of the single-mode Gaussian shell probability
/// `e^{−(D−r+ε)/ε} − e^{−(D+r+ε)/ε}` (lower edge clipped at zero).
pub fn gaussian_shell_probability(epsilon: f64, d: f64, r: f64) -> f64 {
    let lo = (d - r + epsilon).max(0.0);
    let hi = d + r + epsilon;
    (-lo / epsilon).exp() - (-hi / epsilon).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<RatePoint> {
        [0.5, 0.25, 0.125]
            .iter()
            .map(|&e| RatePoint {
                epsilon: e,
                log_value: f(e),
                std_error: 0.1,
            })
            .collect()
    }

    #[test]
    fn exact_line() {
        let f = fit_rate(&pts(|e| -2.0 / e + 0.3)).unwrap();
        assert!((f.slope_c - 2.0).abs() < 1e-12);
        assert!((f.intercept_b - 0.3).abs() < 1e-12);
    }

    #[test]
    fn flat_line() {
        let f = fit_rate(&pts(|_| -1.7)).unwrap();
        assert!(f.slope_c.abs() < 1e-12);
    }

    #[test]
    fn degenerate_design() {
        let p: Vec<RatePoint> = (0..4)
            .map(|_| RatePoint {
                epsilon: 0.5,
                log_value: 1.0,
                std_error: 0.1,
            })
            .collect();
        assert!(matches!(fit_rate(&p), Err(Error::Parameter(_))));
        assert!(fit_rate(&p[..2]).is_err());
    }

    #[test]
    fn legendre_rule() {
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(8)).sum();
        assert!((q - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn oracle_rejects_large_dimension() {
        let b = HermiteBasis::new(2).unwrap();
        let p = GibbsParams::new(0.5, 1.0, 0.0, 2, 1.0, 0.1).unwrap();
        assert!(quadrature_oracle(&b, &p, Observable::Partition, &GridSpec::default()).is_err());
    }

    #[test]
    fn oracle_gaussian_cases() {
        let b = HermiteBasis::new(0).unwrap();
        let p = GibbsParams::new(0.5, 0.0, 0.0, 0, 1.0, 0.1).unwrap();
        let g = GridSpec::default();
        let z = quadrature_oracle(&b, &p, Observable::Partition, &g).unwrap();
        assert!((z - 1.0).abs() < 1e-8);
        let s = quadrature_oracle(&b, &p, Observable::ShellProbability, &g).unwrap();
        assert!((s - gaussian_shell_probability(0.5, 1.0, 0.1)).abs() < 1e-6);
    }
}
