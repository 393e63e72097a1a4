//! Command-line driver: validate a filter, tabulate spectral densities,
//! run the perturbative and truncation stability analyses, and simulate
//! the coupled SDE.
//!
//! Exit codes: 0 success, 1 validation failure, 2 numerical failure,
//! 3 usage or config/schema error.

mod config;

use clap::{Parser, Subcommand};
use config::{RunConfig, SchemaError};
use num_complex::Complex64;
use oustab::filter::validate_basic_conditions;
use oustab::moments::build_gamma;
use oustab::perturbation::Perturbation;
use oustab::spectral::Spectrum;
use oustab::truncation::{critical_epsilon, solve_at, Filter2Spec, TruncationConfig};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "oustab",
    version,
    about = "Moment stability under Ornstein-Uhlenbeck colored-noise forcing"
)]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write outputs into this directory instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the simulation seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the basic conditions on the configured filter
    Validate,
    /// Tabulate the power spectral density of the readout
    Psd {
        #[arg(long, default_value_t = 0.0)]
        omega_min: f64,
        #[arg(long, default_value_t = 5.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 200)]
        omega_count: usize,
    },
    /// Per-branch second-order expansion of the dominant moment eigenvalue
    Perturb,
    /// Non-perturbative growth rates over a list of amplitudes
    Solve {
        /// Comma-separated amplitudes, e.g. 0.01,0.05,0.10
        #[arg(long)]
        eps_list: Option<String>,
        /// Bisect the stability boundary over this bracket
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        bracket: Option<Vec<f64>>,
    },
    /// Ensemble simulation of the coupled SDE
    Simulate,
    /// Reproduce the reference-configuration table of growth rates
    Table1,
}

enum Failure {
    Schema(String),
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Schema(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Schema(m) | Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::Schema(e.to_string())
    }
}

impl From<oustab::Error> for Failure {
    fn from(e: oustab::Error) -> Self {
        match e {
            oustab::Error::BasicConditions(_) => Failure::Validation(e.to_string()),
            oustab::Error::InvalidArgument(_) => Failure::Schema(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    // clap would exit with code 2 on usage errors; remap to the contract
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            };
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Schema("--config PATH is required for this command".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Schema(format!("cannot read {}: {e}", path.display())))?;
    Ok(config::parse(&text)?)
}

fn section<'a, T>(opt: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    opt.as_ref()
        .ok_or_else(|| Failure::Schema(format!("config section [{name}] is required")))
}

/// Output directory: the --out flag wins over `output.directory` in the
/// config. Also rejects unknown format names up front.
fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<Option<PathBuf>, Failure> {
    if let Some(output) = cfg.and_then(|c| c.output.as_ref()) {
        if let Some(formats) = &output.formats {
            for f in formats {
                if f != "csv" && f != "txt" {
                    return Err(Failure::Schema(format!("unknown output format {f:?}")));
                }
            }
        }
        if cli.out.is_none() {
            return Ok(output.directory.as_ref().map(PathBuf::from));
        }
    }
    Ok(cli.out.clone())
}

/// Write `contents` to `<dir>/<name>` when a directory is set, else stdout.
fn emit(dir: &Option<PathBuf>, name: &str, contents: &str) -> Result<(), Failure> {
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::Schema(format!("cannot create {}: {e}", dir.display())))?;
            let path = dir.join(name);
            std::fs::write(&path, contents)
                .map_err(|e| Failure::Schema(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{contents}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Validate => cmd_validate(cli),
        Command::Psd {
            omega_min,
            omega_max,
            omega_count,
        } => cmd_psd(cli, *omega_min, *omega_max, *omega_count),
        Command::Perturb => cmd_perturb(cli),
        Command::Solve { eps_list, bracket } => {
            cmd_solve(cli, eps_list.as_deref(), bracket.as_deref())
        }
        Command::Simulate => cmd_simulate(cli),
        Command::Table1 => cmd_table1(cli),
    }
}

fn cmd_validate(cli: &Cli) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let filter = section(&cfg.filter, "filter")?.to_filter_spec()?;
    let report = validate_basic_conditions(&filter);
    emit(&dir, "validate.txt", &format!("{report}"))?;
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_psd(cli: &Cli, omega_min: f64, omega_max: f64, omega_count: usize) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let filter = section(&cfg.filter, "filter")?.to_filter_spec()?;
    let spectrum = Spectrum::new(&filter)?;
    let rows = spectrum.psd_grid(omega_min, omega_max, omega_count)?;
    let mut out = String::from("omega,S\n");
    for (omega, s) in rows {
        out.push_str(&format!("{omega},{s}\n"));
    }
    emit(&dir, "psd.csv", &out)?;
    Ok(0)
}

fn cmd_perturb(cli: &Cli) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let filter = section(&cfg.filter, "filter")?.to_filter_spec()?;
    let sys = section(&cfg.system, "system")?.to_system_spec()?;
    let pert = Perturbation::new(&sys, &filter)?;
    let prediction = pert.predict()?;
    let mut out = String::from("branch_re,branch_im,lambda2_re,lambda2_im,valid,predicted_re\n");
    for b in &prediction.branches {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.nu1.re, b.nu1.im, b.lambda2.re, b.lambda2.im, b.valid, b.predicted.re
        ));
    }
    emit(&dir, "perturb.csv", &out)?;
    let chosen = prediction.selected_branch();
    eprintln!(
        "selected branch {:.6e} + {:.6e} i: predicted growth rate {:.6e} at epsilon = {}",
        chosen.nu1.re, chosen.nu1.im, chosen.predicted.re, chosen.epsilon
    );
    Ok(0)
}

fn parse_eps_list(text: &str) -> Result<Vec<f64>, Failure> {
    let list: Result<Vec<f64>, _> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let list = list.map_err(|e| Failure::Schema(format!("bad --eps-list: {e}")))?;
    if list.is_empty() {
        return Err(Failure::Schema("--eps-list is empty".into()));
    }
    Ok(list)
}

fn cmd_solve(cli: &Cli, eps_list: Option<&str>, bracket: Option<&[f64]>) -> Result<u8, Failure> {
    if eps_list.is_none() && bracket.is_none() {
        return Err(Failure::Schema(
            "solve needs --eps-list and/or --bracket LO HI".into(),
        ));
    }
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let filter_section = section(&cfg.filter, "filter")?;
    let f2 = filter_section.to_filter2()?;
    let sys = section(&cfg.system, "system")?.to_system_spec()?;
    let tr = section(&cfg.truncation, "truncation")?;
    let trunc_cfg = TruncationConfig::new(tr.n_m, tr.n_h)?;
    let tol = tr.tol.unwrap_or(1e-8);
    let op = build_gamma(&sys);

    let mut out = String::from("epsilon,lambda_re,lambda_im,Nm,Nh,converged\n");
    if let Some(text) = eps_list {
        for eps in parse_eps_list(text)? {
            let lambda = solve_at(&op, &f2, &trunc_cfg, eps)?;
            let refined = solve_at(
                &op,
                &f2,
                &TruncationConfig::new(tr.n_m + 2, tr.n_h + 2)?,
                eps,
            )?;
            let converged = (lambda - refined).norm() < tol;
            out.push_str(&format!(
                "{eps},{},{},{},{},{converged}\n",
                lambda.re, lambda.im, tr.n_m, tr.n_h
            ));
        }
    }
    if let Some(b) = bracket {
        let crit = critical_epsilon(&op, &f2, &trunc_cfg, (b[0], b[1]))?;
        out.push_str(&format!(
            "# critical_epsilon,{},bracket,{},{}\n",
            crit.eps_star, b[0], b[1]
        ));
        eprintln!(
            "critical amplitude {} in [{}, {}] after {} bisections",
            crit.eps_star, b[0], b[1], crit.iterations
        );
    }
    emit(&dir, "solve.csv", &out)?;
    Ok(0)
}

fn cmd_simulate(cli: &Cli) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let filter = section(&cfg.filter, "filter")?.to_filter_spec()?;
    let system_section = section(&cfg.system, "system")?;
    let sys = system_section.to_system_spec()?;
    let sim_section = section(&cfg.simulate, "simulate")?;
    let sim_cfg = sim_section.to_sim_config(cli.seed, system_section.x0.clone());
    let series = oustab::montecarlo::simulate(&filter, &sys, &sim_cfg)?;

    let mut out = String::new();
    out.push_str(&format!(
        "# dt = {}, T = {}, paths = {}, seed = {}, burn_in = {}, p = {}, epsilon = {}\n",
        sim_cfg.dt,
        sim_cfg.t_final,
        sim_cfg.paths,
        sim_cfg.seed,
        sim_cfg.burn_in,
        sys.p(),
        sys.epsilon()
    ));
    if let Some(w) = &series.stability_warning {
        out.push_str(&format!("# warning: {w}\n"));
    }
    if let Some(t) = series.blow_up {
        out.push_str(&format!("# blow_up at t = {t}; series truncated\n"));
    }
    let n = filter.dim();
    let mut header = String::from("t");
    for m in 0..series.basis.len() {
        header.push_str(&format!(",moment_{}", series.basis.label(m)));
    }
    for m in 0..series.basis.len() {
        header.push_str(&format!(",stderr_{}", series.basis.label(m)));
    }
    for r in 0..n {
        for c in r..n {
            header.push_str(&format!(",scov_{}{}", r + 1, c + 1));
        }
    }
    out.push_str(&header);
    out.push('\n');
    for (i, t) in series.times.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for v in &series.moments[i] {
            out.push_str(&format!(",{v}"));
        }
        for v in &series.stderrs[i] {
            out.push_str(&format!(",{v}"));
        }
        for r in 0..n {
            for c in r..n {
                out.push_str(&format!(",{}", series.s_outer[i][(r, c)]));
            }
        }
        out.push('\n');
    }
    emit(&dir, "simulate.csv", &out)?;
    Ok(0)
}

fn cmd_table1(cli: &Cli) -> Result<u8, Failure> {
    let dir = out_dir(cli, None)?;
    let sys = oustab::SystemSpec::mathieu(0.5, 0.01, 2, 0.0)?;
    let filter = oustab::FilterSpec::filter2(1.8, 0.9, 1.0, 1.0, 0.9)?;
    let f2 = Filter2Spec::new(1.8, 0.9, 1.0, 1.0, 0.9)?;
    let trunc_cfg = TruncationConfig::new(7, 5)?;
    let op = build_gamma(&sys);

    let pert = Perturbation::new(&sys, &filter)?;
    let branch = pert
        .branch_near(Complex64::new(-0.01, 0.0))
        .ok_or_else(|| Failure::Numerical("no dominant branch".into()))?;
    let lambda0 = -0.01;
    let lambda2 = pert.lambda2_spectral(branch)?.re;

    let mut out = String::new();
    out.push_str(
        "reference configuration: mu1 = 1.8, mu2 = 0.9, beta = 1, gamma = 0.01, omega0 = 0.5, \
         a = (1, 0.9), N_m = 7, N_h = 5, p = 2\n",
    );
    out.push_str(&format!("lambda0 = {lambda0}, lambda2 = {lambda2:.6}\n\n"));
    out.push_str("    eps     lambda(eps)          E2      E2/eps^4\n");
    let mut lambda4_estimates = Vec::new();
    for eps in [0.01, 0.05, 0.10] {
        let lambda = solve_at(&op, &f2, &trunc_cfg, eps)?.re;
        let residual = lambda - (lambda0 + lambda2 * eps * eps);
        let e2 = residual.abs();
        out.push_str(&format!(
            "  {eps:5.2}   {lambda:+12.6e}   {e2:9.3e}   {:9.4}\n",
            e2 / eps.powi(4)
        ));
        if eps <= 0.05 {
            lambda4_estimates.push(residual / eps.powi(4));
        }
    }
    let lambda4 = lambda4_estimates.iter().sum::<f64>() / lambda4_estimates.len() as f64;
    out.push_str(&format!(
        "\nempirical fourth-order coefficient from the eps = 0.01, 0.05 residuals: lambda4 ~ {lambda4:.3}\n"
    ));
    out.push_str(
        "E4 column omitted: no closed-form lambda4 is implemented; the estimate above is a residual fit.\n",
    );
    emit(&dir, "table1.txt", &out)?;
    Ok(0)
}
