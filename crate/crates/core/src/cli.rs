//! Command-line front end.
//!
//! Configuration files are flat `key = value` text grouped in `[sections]`; `#` starts a
//! comment. Every key has a default, unknown keys and sections are rejected, and
//! `chem_potential` / `step_beta` accept `auto`. The canonical serialization written by
//! [`ExperimentConfig::to_text`] parses back to the same configuration, and its SHA-256
//! prefix is the config hash stamped on every output file.
//!
//! Sample stores are written as `samples.csv` (header row `step,re0,im0,…,wick_mass,h,hg`)
//! and `samples.bin` (a `# config_hash=…` line, then the binary layout of
//! [`SampleStore::write_binary`]).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::{calibrate_a, Calibration};
use crate::error::{Error, Result};
use crate::fields::{Field, GibbsParams};
use crate::ldp::{
    concentration_experiment, entropy_experiment, free_energy_experiment,
    gaussian_shell_probability, quadrature_oracle, ConcentrationSettings, ExperimentReport,
    GridSpec, Observable,
};
use crate::mcmc::{
    default_beta, default_conditioned_beta, make_shell_init, run_chain, run_conditioned_chain,
    ChainConfig, ChainOutput,
};
use crate::rng::mix;
use crate::soliton::{minimize_constrained, scan_mass_threshold, SolitonOptions};
use crate::spectral::{build_basis, default_quad_size, HermiteBasis};

/// Everything a run needs; mirrors [`GibbsParams`] plus grids, chain and run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub coupling: f64,
    /// `None` calibrates the chemical potential.
    pub chem_potential: Option<f64>,
    pub truncation: usize,
    pub mass_level: f64,
    pub shell_width: f64,
    pub eps_grid: Vec<f64>,
    /// Shell half-widths as fractions of the mass level.
    pub r_schedule: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub mass_grid: Vec<f64>,
    pub n_steps: usize,
    pub n_burn: usize,
    pub thin: usize,
    /// `None` selects the temperature-dependent default.
    pub step_beta: Option<f64>,
    pub p: f64,
    /// `None` selects the default quadrature size for the truncation.
    pub quad_size: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub n_samples: usize,
    pub probes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            coupling: 1.0,
            chem_potential: None,
            truncation: 8,
            mass_level: 5.5,
            shell_width: 0.275,
            eps_grid: vec![0.4, 0.2, 0.1],
            r_schedule: vec![0.2, 0.1, 0.05],
            delta_grid: vec![0.2, 0.5],
            mass_grid: (1..=16).map(|k| 0.5 * k as f64).collect(),
            n_steps: 200_000,
            n_burn: 20_000,
            thin: 10,
            step_beta: None,
            p: 4.0,
            quad_size: None,
            seed: 1,
            out_dir: PathBuf::from("out"),
            n_samples: 100_000,
            probes: 10_000,
        }
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_auto<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or("auto".into(), |x| x.to_string())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

const SECTIONS: [(&str, &[&str]); 4] = [
    (
        "params",
        &["epsilon", "coupling", "chem_potential", "truncation", "mass_level", "shell_width"],
    ),
    ("grids", &["eps_grid", "r_schedule", "delta_grid", "mass_grid"]),
    ("chain", &["n_steps", "n_burn", "thin", "step_beta", "p"]),
    ("run", &["seed", "out_dir", "n_samples", "probes", "quad_size"]),
];

impl ExperimentConfig {
    /// Canonical text form; every key is written, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (section, keys) in SECTIONS {
            let _ = writeln!(s, "[{section}]");
            for key in keys {
                let _ = writeln!(s, "{key} = {}", self.get(key));
            }
            s.push('\n');
        }
        s
    }

    fn get(&self, key: &str) -> String {
        match key {
            "epsilon" => self.epsilon.to_string(),
            "coupling" => self.coupling.to_string(),
            "chem_potential" => fmt_auto(&self.chem_potential),
            "truncation" => self.truncation.to_string(),
            "mass_level" => self.mass_level.to_string(),
            "shell_width" => self.shell_width.to_string(),
            "eps_grid" => fmt_list(&self.eps_grid),
            "r_schedule" => fmt_list(&self.r_schedule),
            "delta_grid" => fmt_list(&self.delta_grid),
            "mass_grid" => fmt_list(&self.mass_grid),
            "n_steps" => self.n_steps.to_string(),
            "n_burn" => self.n_burn.to_string(),
            "thin" => self.thin.to_string(),
            "step_beta" => fmt_auto(&self.step_beta),
            "p" => self.p.to_string(),
            "seed" => self.seed.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "n_samples" => self.n_samples.to_string(),
            "probes" => self.probes.to_string(),
            "quad_size" => fmt_auto(&self.quad_size),
            _ => unreachable!("unknown key {key}"),
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let auto = v == "auto";
        match key {
            "epsilon" => self.epsilon = parse_f64(key, v)?,
            "coupling" => self.coupling = parse_f64(key, v)?,
            "chem_potential" => {
                self.chem_potential = if auto { None } else { Some(parse_f64(key, v)?) }
            }
            "truncation" => self.truncation = parse_usize(key, v)?,
            "mass_level" => self.mass_level = parse_f64(key, v)?,
            "shell_width" => self.shell_width = parse_f64(key, v)?,
            "eps_grid" => self.eps_grid = parse_list(key, v)?,
            "r_schedule" => self.r_schedule = parse_list(key, v)?,
            "delta_grid" => self.delta_grid = parse_list(key, v)?,
            "mass_grid" => self.mass_grid = parse_list(key, v)?,
            "n_steps" => self.n_steps = parse_usize(key, v)?,
            "n_burn" => self.n_burn = parse_usize(key, v)?,
            "thin" => self.thin = parse_usize(key, v)?,
            "step_beta" => self.step_beta = if auto { None } else { Some(parse_f64(key, v)?) },
            "p" => self.p = parse_f64(key, v)?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("seed: expected a u64, got '{v}'")))?
            }
            "out_dir" => self.out_dir = PathBuf::from(v),
            "n_samples" => self.n_samples = parse_usize(key, v)?,
            "probes" => self.probes = parse_usize(key, v)?,
            "quad_size" => self.quad_size = if auto { None } else { Some(parse_usize(key, v)?) },
            _ => return cfg_err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Parse configuration text on top of the defaults. Keys must appear in their own
    /// section; keys before any section header are looked up in all sections.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section: Option<&str> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                match SECTIONS.iter().find(|(s, _)| *s == name) {
                    Some((s, _)) => section = Some(s),
                    None => return cfg_err(format!("line {}: unknown section [{name}]", lineno + 1)),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return cfg_err(format!("line {}: expected 'key = value'", lineno + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            let known = SECTIONS
                .iter()
                .filter(|(s, _)| section.map_or(true, |cur| cur == *s))
                .any(|(_, keys)| keys.contains(&key));
            if !known {
                return cfg_err(format!(
                    "line {}: unknown key '{key}'{}",
                    lineno + 1,
                    section.map_or(String::new(), |s| format!(" in [{s}]"))
                ));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`] without the `out_dir` line,
    /// so that the same experiment written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("out_dir"))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// All positivity and ordering constraints.
    pub fn validate(&self) -> Result<()> {
        self.gibbs_params(self.chem_potential.unwrap_or(0.0))
            .map_err(|e| Error::Config(e.to_string()))?;
        let positive_list = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return cfg_err(format!("{name} must be a nonempty list of positive numbers"));
            }
            Ok(())
        };
        positive_list("eps_grid", &self.eps_grid)?;
        positive_list("r_schedule", &self.r_schedule)?;
        positive_list("mass_grid", &self.mass_grid)?;
        if self.mass_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return cfg_err("mass_grid must be strictly increasing");
        }
        if self.delta_grid.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return cfg_err("delta_grid entries must be nonnegative");
        }
        if self.n_steps <= self.n_burn {
            return cfg_err("n_steps must exceed n_burn");
        }
        if self.thin == 0 {
            return cfg_err("thin must be at least 1");
        }
        if let Some(b) = self.step_beta {
            if !(b > 0.0 && b <= 1.0) {
                return cfg_err("step_beta must lie in (0, 1]");
            }
        }
        if !(self.p >= 1.0) {
            return cfg_err("p must be at least 1");
        }
        if let Some(q) = self.quad_size {
            if q < 2 * self.truncation + 2 {
                return cfg_err("quad_size must be at least 2 truncation + 2");
            }
        }
        if self.n_samples < 1000 {
            return cfg_err("n_samples must be at least 1000");
        }
        if self.probes < 1000 {
            return cfg_err("probes must be at least 1000");
        }
        Ok(())
    }

    pub fn gibbs_params(&self, a: f64) -> Result<GibbsParams> {
        GibbsParams::new(
            self.epsilon,
            self.coupling,
            a,
            self.truncation,
            self.mass_level,
            self.shell_width,
        )
    }

    pub fn basis(&self) -> Result<HermiteBasis> {
        build_basis(
            self.truncation,
            self.quad_size.unwrap_or_else(|| default_quad_size(self.truncation)),
        )
    }
}

#[derive(Parser, Debug)]
#[command(name = "gpgibbs", version, about = "Gross-Pitaevskii Gibbs measure laboratory")]
struct Cli {
    /// Configuration file (key = value with [sections])
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Temperature list; the first entry also sets the single-temperature epsilon
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    eps: Option<Vec<f64>>,
    /// Mass level D
    #[arg(long, global = true, allow_negative_numbers = true)]
    mass: Option<f64>,
    /// Shell half-width r
    #[arg(long, global = true, allow_negative_numbers = true)]
    shell: Option<f64>,
    /// Orbit-distance thresholds
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    delta: Option<Vec<f64>>,
    #[arg(long = "n-samples", global = true)]
    n_samples: Option<usize>,
    /// Suppress the summary printed on stdout
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Constrained minimizer at the mass level and the I(D) table over mass_grid
    Soliton,
    /// Negative-energy threshold scan over mass_grid
    Dstar,
    /// Grand-canonical pCN chain
    Sample,
    /// Shell-conditioned chain started at the soliton
    Condition,
    /// Free-energy experiment over eps_grid
    FreeEnergy,
    /// Shell-entropy experiment over eps_grid and r_schedule
    Entropy,
    /// Concentration experiment over eps_grid and delta_grid
    Concentration,
    /// Tensor quadrature ground truth (truncation at most 1)
    Oracle,
    /// Calibrate the chemical potential
    CalibrateA,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Soliton => "soliton",
            Command::Dstar => "dstar",
            Command::Sample => "sample",
            Command::Condition => "condition",
            Command::FreeEnergy => "free-energy",
            Command::Entropy => "entropy",
            Command::Concentration => "concentration",
            Command::Oracle => "oracle",
            Command::CalibrateA => "calibrate-a",
        }
    }
}

/// Exit code for an error: 2 for usage and configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

/// Writes files into one directory, stamping each with the config hash.
struct Output {
    dir: PathBuf,
    quiet: bool,
    hash: String,
    seed: u64,
    files: Vec<String>,
}

impl Output {
    fn say(&self, line: String) {
        if !self.quiet {
            println!("{line}");
        }
    }

    fn header(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let content = format!("# {}\n{body}", self.header());
        fs::write(self.dir.join(name), content)?;
        self.files.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(m) = &mut v {
            m.insert("config_hash".into(), self.hash.clone().into());
        }
        fs::write(self.dir.join(name), serde_json::to_string_pretty(&v)? + "\n")?;
        self.files.push(name.into());
        Ok(())
    }

    fn chain(&mut self, out: &ChainOutput) -> Result<()> {
        let mut csv = Vec::new();
        out.store.write_csv(&mut csv, &self.header())?;
        fs::write(self.dir.join("samples.csv"), csv)?;
        let mut bin = format!("# {}\n", self.header()).into_bytes();
        out.store.write_binary(&mut bin)?;
        fs::write(self.dir.join("samples.bin"), bin)?;
        self.files.push("samples.csv".into());
        self.files.push("samples.bin".into());
        self.json("diagnostics.json", &out.diagnostics)
    }

    fn report(&mut self, mut report: ExperimentReport) -> Result<bool> {
        report.config_hash = self.hash.clone();
        fs::write(self.dir.join("report.json"), report.to_json()? + "\n")?;
        self.files.push("report.json".into());
        self.text("cells.csv", &report.cells_csv())?;
        for (label, data) in report.fit_lines() {
            let name = format!("fit_{}.dat", label.replace([' ', '='], "_"));
            self.text(&name, &data)?;
        }
        self.say(format!("{}: {}", report.experiment, report.verdict));
        Ok(report.pass)
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(e) = &cli.eps {
        if let Some(first) = e.first() {
            cfg.epsilon = *first;
        }
        cfg.eps_grid = e.clone();
    }
    if let Some(m) = cli.mass {
        cfg.mass_level = m;
    }
    if let Some(r) = cli.shell {
        cfg.shell_width = r;
    }
    if let Some(d) = &cli.delta {
        cfg.delta_grid = d.clone();
    }
    if let Some(n) = cli.n_samples {
        cfg.n_samples = n;
    }
}

fn chemical_potential(cfg: &ExperimentConfig, basis: &HermiteBasis) -> Result<(f64, Option<Calibration>)> {
    match cfg.chem_potential {
        Some(a) => Ok((a, None)),
        None => {
            let cal = calibrate_a(basis, cfg.coupling, cfg.probes, cfg.seed)?;
            Ok((cal.a0, Some(cal)))
        }
    }
}

fn soliton_opts(cfg: &ExperimentConfig) -> SolitonOptions {
    SolitonOptions {
        seed: mix(&[cfg.seed, 0x501]),
        ..SolitonOptions::default()
    }
}

fn execute(command: Command, cfg: &ExperimentConfig, out: &mut Output) -> Result<bool> {
    let basis = cfg.basis()?;
    match command {
        Command::CalibrateA => {
            let cal = calibrate_a(&basis, cfg.coupling, cfg.probes, cfg.seed)?;
            out.say(format!("A0 = {} (GNS constant {:.6})", cal.a0, cal.gns_constant));
            out.json("calibration.json", &cal)?;
            Ok(true)
        }
        Command::Soliton => {
            let opts = soliton_opts(cfg);
            let sol = minimize_constrained(&basis, cfg.coupling, cfg.mass_level, &opts)?;
            let mut q = String::from("n,re,im\n");
            for (n, c) in sol.q_coeffs.coeffs.iter().enumerate() {
                let _ = writeln!(q, "{n},{:e},{:e}", c.re, c.im);
            }
            out.text("soliton.csv", &q)?;
            let scan = scan_mass_threshold(&basis, cfg.coupling, &cfg.mass_grid, &opts)?;
            let mut t = String::from("mass,energy,competitor_bound,converged\n");
            for r in &scan.table {
                let _ = writeln!(
                    t,
                    "{:e},{:e},{:e},{}",
                    r.mass, r.energy, r.competitor_bound, r.converged as u8
                );
            }
            out.text("energy_table.csv", &t)?;
            out.say(format!(
                "I({}) = {:.10} (gradient residual {:.2e}, {} iterations)",
                cfg.mass_level, sol.energy, sol.grad_residual, sol.iterations
            ));
            Ok(true)
        }
        Command::Dstar => {
            let scan = scan_mass_threshold(&basis, cfg.coupling, &cfg.mass_grid, &soliton_opts(cfg))?;
            let mut t = String::from("mass,energy,competitor_bound,converged\n");
            for r in &scan.table {
                let _ = writeln!(
                    t,
                    "{:e},{:e},{:e},{}",
                    r.mass, r.energy, r.competitor_bound, r.converged as u8
                );
            }
            out.text("dstar.csv", &t)?;
            out.json("dstar.json", &scan)?;
            out.say(format!("D* = {}", scan.d_star));
            Ok(true)
        }
        Command::Sample | Command::Condition => {
            let (a, _) = chemical_potential(cfg, &basis)?;
            let params = cfg.gibbs_params(a)?;
            let (init, beta) = if command == Command::Sample {
                (Field::zeros(basis.dim()), cfg.step_beta.unwrap_or(default_beta(params.epsilon)))
            } else {
                let sol = minimize_constrained(&basis, cfg.coupling, cfg.mass_level, &soliton_opts(cfg))?;
                (
                    make_shell_init(&basis, &params, &sol.q_coeffs),
                    cfg.step_beta.unwrap_or(default_conditioned_beta(&params)),
                )
            };
            let chain = ChainConfig {
                params,
                step_beta: beta,
                n_steps: cfg.n_steps,
                n_burn: cfg.n_burn,
                thin: cfg.thin,
                seed: cfg.seed,
                init,
            };
            let res = if command == Command::Sample {
                run_chain(&basis, &chain)?
            } else {
                run_conditioned_chain(&basis, &chain)?
            };
            for w in &res.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            out.say(format!(
                "{} samples, acceptance {:.4}, IAT {:.2}, A = {a}",
                res.store.len(),
                res.diagnostics.acceptance_rate,
                res.diagnostics.iat_mass
            ));
            out.chain(&res)?;
            Ok(true)
        }
        Command::FreeEnergy => {
            let (a, _) = chemical_potential(cfg, &basis)?;
            let base = cfg.gibbs_params(a)?;
            out.report(free_energy_experiment(&basis, &base, &cfg.eps_grid, cfg.n_samples, cfg.seed)?)
        }
        Command::Entropy => {
            let (a, _) = chemical_potential(cfg, &basis)?;
            let base = cfg.gibbs_params(a)?;
            out.report(entropy_experiment(
                &basis,
                &base,
                &cfg.eps_grid,
                &cfg.r_schedule,
                cfg.n_samples,
                cfg.seed,
            )?)
        }
        Command::Concentration => {
            let (a, _) = chemical_potential(cfg, &basis)?;
            let base = cfg.gibbs_params(a)?;
            let settings = ConcentrationSettings {
                n_steps: cfg.n_steps,
                n_burn: cfg.n_burn,
                thin: cfg.thin,
                beta: cfg.step_beta,
                p: cfg.p,
            };
            out.report(concentration_experiment(
                &basis,
                &base,
                &cfg.eps_grid,
                &cfg.delta_grid,
                &settings,
                cfg.seed,
            )?)
        }
        Command::Oracle => {
            let (a, _) = chemical_potential(cfg, &basis)?;
            let grid = GridSpec::default();
            let mut t = String::from(
                "epsilon,r,oracle_gaussian_shell,closed_form_single_mode,oracle_shell,oracle_partition\n",
            );
            for &eps in &cfg.eps_grid {
                for &frac in &cfg.r_schedule {
                    let r = frac * cfg.mass_level;
                    let p = cfg.gibbs_params(a)?.with_epsilon(eps).with_shell_width(r);
                    let free = GibbsParams {
                        coupling: 0.0,
                        chem_potential: 0.0,
                        ..p
                    };
                    let g = quadrature_oracle(&basis, &free, Observable::ShellProbability, &grid)?;
                    let s = quadrature_oracle(&basis, &p, Observable::ShellProbability, &grid)?;
                    let z = quadrature_oracle(&basis, &p, Observable::Partition, &grid)?;
                    let closed = if basis.dim() == 1 {
                        format!("{:e}", gaussian_shell_probability(eps, cfg.mass_level, r))
                    } else {
                        String::new()
                    };
                    let _ = writeln!(t, "{eps:e},{r:e},{g:e},{closed},{s:e},{z:e}");
                }
            }
            out.text("oracle.csv", &t)?;
            out.say(t.trim_end().to_string());
            Ok(true)
        }
    }
}

/// Run the command line `argv` (program name first) and return the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let mut cfg = match &cli.config {
        Some(path) => match fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|t| ExperimentConfig::parse(&t))
        {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, &cli);
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return 2;
    }
    if let Err(e) = fs::create_dir_all(&cfg.out_dir) {
        eprintln!("error: cannot create {}: {e}", cfg.out_dir.display());
        return 1;
    }
    let mut out = Output {
        dir: cfg.out_dir.clone(),
        quiet: cli.quiet,
        hash: cfg.hash(),
        seed: cfg.seed,
        files: Vec::new(),
    };
    let mut work = || execute(cli.command, &cfg, &mut out);
    let result = match cli.threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => work(),
    };
    let code = match &result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e)
        }
    };
    let manifest = serde_json::json!({
        "command": cli.command.name(),
        "config": &cfg,
        "config_text": cfg.to_text(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "threads": cli.threads,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "exit_code": code,
        "outputs": &out.files,
        "error": result.as_ref().err().map(|e| e.to_string()),
    });
    if let Err(e) = write_manifest(&cfg.out_dir, &manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return 1;
    }
    code
}

fn write_manifest(dir: &Path, manifest: &serde_json::Value) -> Result<()> {
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("[params]\nbogus = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::parse("[nowhere]\n").is_err());
        // key in the wrong section
        assert!(ExperimentConfig::parse("[chain]\nepsilon = 1\n").is_err());
    }

    #[test]
    fn auto_values() {
        let c = ExperimentConfig::parse("[params]\nchem_potential = 0.25 # fixed\n").unwrap();
        assert_eq!(c.chem_potential, Some(0.25));
        let c = ExperimentConfig::parse("[params]\nchem_potential = auto\n").unwrap();
        assert_eq!(c.chem_potential, None);
    }

    #[test]
    fn validation_catches_ordering() {
        let c = ExperimentConfig {
            mass_grid: vec![2.0, 1.0],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            n_burn: 10,
            n_steps: 10,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seed: 2,
            ..a.clone()
        };
        assert_eq!(a.hash().len(), 16);
        assert_ne!(a.hash(), b.hash());
        let c = ExperimentConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), c.hash());
    }
}
