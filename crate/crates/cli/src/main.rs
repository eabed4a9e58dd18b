//! `toric`: batch front-end for simulation sweeps, fits and overhead queries.
//!
//! Exit status: 0 on success, 2 for invalid input or data, 3 when a fit
//! does not converge.

use std::collections::HashSet;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toric_core::io::{append_rows, read_rows_from_path, FitReport, ResultRow, CHI2_KEY};
use toric_core::montecarlo::{exact_failure_probability, run_batch, thread_pool, TrialConfig};
use toric_core::noise::derive_seed;
use toric_core::overhead::{plan_overhead, OverheadEstimate};
use toric_core::scaling::lm::LmOptions;
use toric_core::scaling::{
    classify_regime, collapse, fit_decay_constant, fit_quadratic_log_l, fit_threshold, p_fail_lowp, p_fail_ush,
    DataPoint, Regime, ThresholdFitOptions, ThresholdParams, ValidityRule,
};
use toric_core::Error;

#[derive(Parser, Debug)]
#[command(name = "toric", version, about = "Toric-code decoding simulations, scaling fits and qubit overhead")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Monte Carlo worker threads; results do not depend on this.
    #[arg(long, global = true, env = "TORIC_WORKERS")]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long, global = true, env = "TORIC_SEED", default_value_t = 1)]
    seed: u64,
    /// Degeneracy weight τ in `d - τ ln D`.
    #[arg(long, global = true, env = "TORIC_TAU", default_value_t = 0.02)]
    tau: f64,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run N decoding trials for one (L, p) cell and emit a CSV row.
    Simulate {
        #[arg(long = "L")]
        size: usize,
        #[arg(long)]
        p: f64,
        #[arg(long = "N")]
        trials: u64,
        /// Append to this CSV file instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (L, p) cell of a grid, appending rows to a CSV file.
    /// Cells already present in the file are skipped.
    Sweep {
        #[arg(long = "L", value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Comma-separated error rates.
        #[arg(long, value_delimiter = ',', required_unless_present = "p_range")]
        p: Vec<f64>,
        /// Inclusive range `start:stop:step`.
        #[arg(long, conflicts_with = "p")]
        p_range: Option<String>,
        #[arg(long = "N")]
        trials: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a CSV of results and write a report.
    Fit {
        kind: FitKind,
        #[arg(long)]
        input: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Threshold fit: hold μ at this value.
        #[arg(long)]
        fix_mu: Option<f64>,
        /// Threshold fit: number of LM starts.
        #[arg(long, default_value_t = 16)]
        starts: usize,
        /// Threshold fit: iteration cap per LM start.
        #[arg(long, default_value_t = 2000)]
        max_iterations: usize,
        /// Threshold fit: also write collapse rows (L,x,P_corrected,sigma) to this CSV.
        #[arg(long)]
        collapse: Option<PathBuf>,
        /// Decay fit: row filter (`closed`, `none`, or `numeric:<n_sigma>`).
        #[arg(long, default_value = "closed")]
        rule: String,
        /// Decay fit: report supplying A, p_c0, nu0 (reference values otherwise).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Quadratic fit: use only rows at this p.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Regime classification and both regime predictions for (L, p).
    Predict {
        #[arg(long = "L")]
        size: usize,
        #[arg(long)]
        p: f64,
        /// Fit reports; later files override earlier ones.
        #[arg(long = "fit")]
        fits: Vec<PathBuf>,
    },
    /// Qubit overhead for target failure rates and error rates.
    Overhead {
        #[arg(long, value_delimiter = ',', required = true)]
        target: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long = "fit")]
        fits: Vec<PathBuf>,
    },
    /// Exact (or weight-truncated) failure probability by enumeration.
    Exact {
        #[arg(long = "L")]
        size: usize,
        #[arg(long)]
        p: f64,
        /// Highest chain weight enumerated; omit for full enumeration (L = 3).
        #[arg(long)]
        max_weight: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitKind {
    Threshold,
    Decay,
    Quadratic,
}

type CliResult<T = ()> = Result<T, Error>;

/// Shortest round-trip form, switching to scientific notation for small
/// or huge magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.dump_config {
        let mut out = io::stdout().lock();
        let _ = writeln!(out, "workers = {}", cli.global.workers.map_or("auto".to_string(), |w| w.to_string()));
        let _ = writeln!(out, "seed = {}", cli.global.seed);
        let _ = writeln!(out, "tau = {}", cli.global.tau);
        let _ = writeln!(out, "command = {:?}", cli.command);
        return ExitCode::SUCCESS;
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::FitFailed(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { size, p, trials, out } => {
            let config = TrialConfig { size: *size, p: *p, trials: *trials, tau: g.tau, master_seed: g.seed };
            let row = simulate(&config, g.workers)?;
            match out {
                Some(path) => append_rows(path, &[row]),
                None => toric_core::io::write_rows(io::stdout().lock(), &[row]),
            }
        }
        Command::Sweep { sizes, p, p_range, trials, out } => {
            let ps = match p_range {
                Some(r) => parse_range(r)?,
                None => p.clone(),
            };
            sweep(sizes, &ps, *trials, g, out)
        }
        Command::Fit { kind, input, out, fix_mu, starts, max_iterations, collapse: collapse_out, rule, params, p } => {
            let rows = read_rows_from_path(input)?;
            let report = match kind {
                FitKind::Threshold => threshold_report(&rows, *fix_mu, *starts, *max_iterations, g.seed, collapse_out.as_deref())?,
                FitKind::Decay => decay_report(&rows, rule, params.as_deref())?,
                FitKind::Quadratic => quadratic_report(&rows, *p)?,
            };
            match out {
                Some(path) => std::fs::write(path, report.to_string()).map_err(Error::from),
                None => write!(io::stdout().lock(), "{report}").map_err(Error::from),
            }
        }
        Command::Predict { size, p, fits } => predict(*size, *p, &load_reports(fits)?),
        Command::Overhead { target, p, fits } => overhead(target, p, &load_reports(fits)?),
        Command::Exact { size, p, max_weight } => {
            let exact = exact_failure_probability(*size, *p, g.tau, *max_weight)?;
            let mut out = io::stdout().lock();
            writeln!(out, "L = {}", exact.size)?;
            writeln!(out, "p = {}", num(exact.p))?;
            writeln!(out, "tau = {}", exact.tau)?;
            writeln!(out, "max_weight = {}", exact.max_weight)?;
            writeln!(out, "P_fail = {}", num(exact.p_fail))?;
            writeln!(out, "truncation_bound = {}", num(exact.truncation_bound))?;
            writeln!(out, "weight,failing")?;
            for (w, c) in exact.failing_by_weight.iter().enumerate() {
                writeln!(out, "{w},{c}")?;
            }
            Ok(())
        }
    }
}

fn simulate(config: &TrialConfig, workers: Option<usize>) -> CliResult<ResultRow> {
    config.validate()?;
    let start = Instant::now();
    let estimate = match workers {
        Some(w) => thread_pool(w)?.install(|| run_batch(config))?,
        None => run_batch(config)?,
    };
    Ok(ResultRow::new(config, &estimate, start.elapsed().as_secs_f64()))
}

fn parse_range(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("p range must be start:stop:step, got `{spec}`"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || stop < start {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Round to 12 decimals so 0.095 + 3 * 0.001 prints as 0.098.
    Ok((0..=n).map(|i| ((start + step * i as f64) * 1e12).round() / 1e12).collect())
}

fn sweep(sizes: &[usize], ps: &[f64], trials: u64, g: &Global, out: &Path) -> CliResult {
    if sizes.is_empty() || ps.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one L and one p".into()));
    }
    let cells: Vec<TrialConfig> = sizes
        .iter()
        .flat_map(|&size| ps.iter().map(move |&p| (size, p)))
        .enumerate()
        .map(|(i, (size, p))| TrialConfig { size, p, trials, tau: g.tau, master_seed: derive_seed(g.seed, i as u64) })
        .collect();
    for c in &cells {
        c.validate()?;
    }
    let done: HashSet<(usize, u64, u64, u64, u64)> = if out.exists() && std::fs::metadata(out)?.len() > 0 {
        read_rows_from_path(out)?
            .iter()
            .map(|r| (r.size, r.p.to_bits(), r.tau.to_bits(), r.trials, r.master_seed))
            .collect()
    } else {
        HashSet::new()
    };
    let mut skipped = 0;
    for c in &cells {
        if done.contains(&(c.size, c.p.to_bits(), c.tau.to_bits(), c.trials, c.master_seed)) {
            skipped += 1;
            continue;
        }
        let row = simulate(c, g.workers)?;
        append_rows(out, &[row])?;
    }
    eprintln!("sweep: {} cells, {} run, {} already present", cells.len(), cells.len() - skipped, skipped);
    Ok(())
}

fn points(rows: &[ResultRow]) -> Vec<DataPoint> {
    rows.iter().map(ResultRow::data_point).collect()
}

fn threshold_report(
    rows: &[ResultRow],
    fix_mu: Option<f64>,
    starts: usize,
    max_iterations: usize,
    seed: u64,
    collapse_out: Option<&Path>,
) -> CliResult<FitReport> {
    let data = points(rows);
    let lm = LmOptions { max_iterations, ..Default::default() };
    let options = ThresholdFitOptions { fix_mu, starts, seed, lm, ..Default::default() };
    let fit = fit_threshold(&data, &options)?;
    let mut report = FitReport::default();
    report.comment("fit: threshold");
    report.comment(format!("rows: {}, dof: {}, accepted start: {}", data.len(), fit.dof, fit.start));
    if fit.mu_fixed {
        report.comment("mu held fixed");
    }
    for ((name, v), u) in ThresholdParams::NAMES
        .iter()
        .zip(fit.params.to_array())
        .zip(fit.uncertainties.to_array())
    {
        report.push(name, v, Some(u));
    }
    report.push(CHI2_KEY, fit.chi2_per_dof(), None);
    if let Some(path) = collapse_out {
        let mut wtr = std::fs::File::create(path)?;
        writeln!(wtr, "L,x,P_corrected,sigma")?;
        for (l, x, y, s) in collapse(&data, &fit.params) {
            writeln!(wtr, "{l},{x},{y},{s}")?;
        }
    }
    Ok(report)
}

fn parse_rule(rule: &str) -> CliResult<ValidityRule> {
    match rule {
        "closed" => Ok(ValidityRule::ClosedForm),
        "none" => Ok(ValidityRule::None),
        other => other
            .strip_prefix("numeric:")
            .and_then(|n| n.parse::<f64>().ok())
            .filter(|n| *n > 0.0)
            .map(|n_sigma| ValidityRule::Numeric { n_sigma })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown rule `{other}`"))),
    }
}

fn decay_report(rows: &[ResultRow], rule: &str, params: Option<&Path>) -> CliResult<FitReport> {
    let fixed = match params {
        Some(path) => FitReport::read_path(path)?.universal_params(),
        None => toric_core::scaling::UniversalScalingParams::REFERENCE,
    };
    let fit = fit_decay_constant(&points(rows), &fixed, parse_rule(rule)?)?;
    let mut report = FitReport::default();
    report.comment("fit: decay");
    report.comment(format!(
        "fixed: A = {}, p_c0 = {}, nu0 = {}; rule: {rule}",
        fixed.amplitude, fixed.p_c0, fixed.nu0
    ));
    report.comment(format!("rows used: {}, filtered: {}", fit.used.len(), fit.filtered.len()));
    for f in &fit.filtered {
        let r = &rows[f.index];
        report.comment(format!("filtered L = {}, p = {}: {}", r.size, r.p, f.reason));
    }
    report.push("a", fit.decay, Some(fit.decay_err));
    report.push(CHI2_KEY, fit.chi2_per_dof(), None);
    Ok(report)
}

fn quadratic_report(rows: &[ResultRow], p: Option<f64>) -> CliResult<FitReport> {
    let mut ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let p = match (p, ps.as_slice()) {
        (Some(p), _) => p,
        (None, [only]) => *only,
        (None, _) => {
            return Err(Error::InvalidParameter(format!(
                "input has {} distinct p values; choose one with --p",
                ps.len()
            )))
        }
    };
    let data: Vec<DataPoint> = rows.iter().filter(|r| r.p == p).map(ResultRow::data_point).collect();
    let fit = fit_quadratic_log_l(&data)?;
    let mut report = FitReport::default();
    report.comment(format!("fit: quadratic ln P_fail in L at p = {p}"));
    report.comment(format!("points: {}, excluded (P_fail = 0): {}", fit.points, fit.excluded_zero));
    report.push("alpha", fit.alpha, Some(fit.alpha_err));
    report.push("beta", fit.beta, Some(fit.beta_err));
    report.push("gamma", fit.gamma, Some(fit.gamma_err));
    report.push("gamma_over_beta", fit.gamma_over_beta(), None);
    report.push(CHI2_KEY, fit.chi2_per_dof(), None);
    Ok(report)
}

fn load_reports(paths: &[PathBuf]) -> CliResult<FitReport> {
    let mut merged = FitReport::default();
    for path in paths {
        merged.merge(&FitReport::read_path(path)?);
    }
    Ok(merged)
}

fn predict(size: usize, p: f64, report: &FitReport) -> CliResult {
    toric_core::lattice::ToricLattice::new(size)?;
    let params = report.universal_params();
    let regime = classify_regime(size as f64, p);
    let label = |applies: bool| if applies { "" } else { " (outside regime)" };
    let mut out = io::stdout().lock();
    writeln!(out, "L = {size}")?;
    writeln!(out, "p = {}", num(p))?;
    writeln!(out, "regime = {regime}")?;
    match p_fail_ush(size as f64, p, &params) {
        Ok(v) => writeln!(out, "P_fail_ush = {}{}", num(v), label(regime == Regime::UniversalScaling))?,
        Err(e) => writeln!(out, "P_fail_ush = nan (not applicable: {e})")?,
    }
    match p_fail_lowp(size, p) {
        Ok(v) => writeln!(out, "P_fail_lowp = {}{}", num(v), label(regime == Regime::LowP))?,
        Err(e) => writeln!(out, "P_fail_lowp = nan (not applicable: {e})")?,
    }
    Ok(())
}

fn overhead(targets: &[f64], ps: &[f64], report: &FitReport) -> CliResult {
    let params = report.universal_params();
    let mut out = io::stdout().lock();
    writeln!(out, "target,p,regime,omega,L_real,L_code,achieved_p_fail,omega_ush,omega_lp")?;
    let omega = |e: Option<OverheadEstimate>| e.map_or("nan".to_string(), |e| num(e.omega));
    for &t in targets {
        for &p in ps {
            let r = plan_overhead(t, p, &params)?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                num(t),
                num(p),
                r.regime,
                num(r.omega()),
                num(r.l_real()),
                r.l_code(),
                num(r.achieved_p_fail()),
                omega(r.ush),
                omega(r.low_p)
            )?;
        }
    }
    Ok(())
}
