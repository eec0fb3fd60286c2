use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use wgbf_core::postproc::{convergence_rates, ErrorReport};
use wgbf_core::scenario::{run_cavity, run_selftest, run_study, ScenarioConfig, ScenarioKind};
use wgbf_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Weak Galerkin solver for the stationary Brinkman-Forchheimer equations.
#[derive(Debug, Parser)]
#[command(name = "wgbf", version)]
struct Cli {
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// manufactured, cavity or custom.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated mesh levels, each `n` or `nxXny` (e.g. `4,8,16` or `8x16`).
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    /// Output directory for CSV, VTK and history files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run the invariant checks and exit.
    #[arg(long)]
    selftest: bool,
    /// Eliminate cell interiors before the global solve.
    #[arg(long, value_enum)]
    condense: Option<Switch>,
    /// Cell quadrature degree.
    #[arg(long)]
    quaddeg: Option<usize>,
    /// Worker threads; falls back to WG_BF_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_levels(text: &str) -> Result<Vec<(usize, usize)>, Error> {
    let bad = |item: &str| Error::Config(format!("--levels: cannot parse `{item}`"));
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| match item.split_once('x') {
            Some((a, b)) => Ok((a.parse().map_err(|_| bad(item))?, b.parse().map_err(|_| bad(item))?)),
            None => item.parse().map(|n| (n, n)).map_err(|_| bad(item)),
        })
        .collect()
}

fn build_config(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let kind = cli.scenario.as_deref().map(str::parse::<ScenarioKind>).transpose()?;
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::named(kind.unwrap_or(ScenarioKind::Manufactured)),
    };
    if let Some(kind) = kind {
        cfg.scenario = kind;
    }
    if let Some(levels) = &cli.levels {
        cfg.levels = parse_levels(levels)?;
        cfg.mesh_files = None;
    }
    if let Some(m) = cli.m {
        cfg.m = m;
        if cli.k.is_none() {
            cfg.k = cfg.k.min(m).max(m.saturating_sub(1));
        }
    }
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    cfg.nu = cli.nu.unwrap_or(cfg.nu);
    cfg.alpha = cli.alpha.unwrap_or(cfg.alpha);
    cfg.r = cli.r.unwrap_or(cfg.r);
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(c) = cli.condense {
        cfg.condense = matches!(c, Switch::On);
    }
    if cli.quaddeg.is_some() {
        cfg.quadrature_degree = cli.quaddeg;
    }
    let env_threads = match std::env::var("WG_BF_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("WG_BF_THREADS: not a thread count: `{v}`")))?,
        ),
        Err(_) => None,
    };
    cfg.threads = cli.threads.or(env_threads).or(cfg.threads);
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::NotConverged { .. } | Error::LinearSolve { .. } | Error::SingularLocalBlock { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

/// Rates on the last two refinements must be within tolerance of
/// `(m + 1, m, m)` and every level must be divergence free.
fn study_checks(reports: &[ErrorReport], m: usize) -> Vec<String> {
    let mut failures = Vec::new();
    for r in reports {
        if r.div_inf > 1e-10 || r.jump_inf > 1e-10 {
            failures.push(format!("{}: divergence {:.2e}, jump {:.2e}", r.mesh, r.div_inf, r.jump_inf));
        }
    }
    if reports.len() >= 3 {
        let m = m as f64;
        let columns: [(&str, fn(&ErrorReport) -> f64, f64, f64); 3] = [
            ("L2u", |r| r.l2_u, m + 1.0, 0.15),
            ("H1u", |r| r.h1_u, m, 0.10),
            ("L2p", |r| r.l2_p, m, 0.10),
        ];
        for (name, get, target, tol) in columns {
            let pairs: Vec<(f64, f64)> = reports.iter().map(|r| (r.h, get(r))).collect();
            let rates = convergence_rates(&pairs);
            for rate in &rates[rates.len() - 2..] {
                match rate {
                    Some(v) if (v - target).abs() <= tol => {}
                    _ => failures.push(format!("{name} rate {} outside {target} +- {tol}", fmt_rate(*rate))),
                }
            }
        }
    }
    failures
}

fn study(cfg: &ScenarioConfig) -> Result<u8, Error> {
    let results = run_study(cfg, &mut |line| println!("{line}"))?;
    let reports: Vec<ErrorReport> = results.into_iter().map(|r| r.report).collect();
    let rows = wgbf_core::postproc::table_rows(&reports);
    println!();
    println!(
        "{:>9} {:>9} {:>8} {:>5} {:>11} {:>5} {:>11} {:>5} {:>11} {:>5}",
        "mesh", "h", "dofs", "iters", "errL2u", "rate", "errH1u", "rate", "errL2p", "rate"
    );
    for r in &rows {
        println!(
            "{:>9} {:>9.3e} {:>8} {:>5} {:>11.4e} {:>5} {:>11.4e} {:>5} {:>11.4e} {:>5}",
            r.mesh,
            r.h,
            r.dofs,
            r.iters,
            r.err_l2_u,
            fmt_rate(r.rate_l2_u),
            r.err_h1_u,
            fmt_rate(r.rate_h1_u),
            r.err_l2_p,
            fmt_rate(r.rate_l2_p)
        );
    }
    let failures = study_checks(&reports, cfg.m);
    if failures.is_empty() {
        println!("study checks passed");
        Ok(0)
    } else {
        for f in &failures {
            eprintln!("check failed: {f}");
        }
        Ok(EXIT_ACCEPTANCE)
    }
}

fn selftest() -> Result<u8, Error> {
    let report = run_selftest(1.0, &mut |c| {
        let status = match (c.passed, c.flagged) {
            (false, _) => "FAIL",
            (true, true) => "FLAG",
            (true, false) => "PASS",
        };
        println!("{status} {}: {}", c.name, c.detail);
    })?;
    Ok(if report.passed() { 0 } else { EXIT_ACCEPTANCE })
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = build_config(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
    }
    if cli.selftest {
        return selftest();
    }
    match cfg.scenario {
        ScenarioKind::Manufactured => study(&cfg),
        ScenarioKind::Cavity | ScenarioKind::Custom => {
            run_cavity(&cfg, &mut |line| println!("{line}"))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_accept_squares_and_rectangles() {
        assert_eq!(parse_levels("4, 8,16").unwrap(), vec![(4, 4), (8, 8), (16, 16)]);
        assert_eq!(parse_levels("8x16").unwrap(), vec![(8, 16)]);
        assert!(parse_levels("4,x").is_err());
    }

    #[test]
    fn solver_failures_map_to_their_exit_code() {
        let inner = Error::LinearSolve {
            iteration: 2,
            message: "x".into(),
        };
        let e = Error::AtLevel {
            level: "4x4".into(),
            source: Box::new(inner),
        };
        assert_eq!(exit_code(&e), EXIT_SOLVER);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
    }

    fn report(h: f64, e: f64) -> ErrorReport {
        ErrorReport {
            mesh: format!("{h}"),
            h,
            dofs: 1,
            iterations: 3,
            l2_u: e * e,
            h1_u: e,
            l2_p: e,
            weak_h1_u: e,
            div_inf: 0.0,
            jump_inf: 0.0,
        }
    }

    #[test]
    fn study_checks_gate_on_rates_and_divergence() {
        let good: Vec<ErrorReport> = [0.5, 0.25, 0.125].iter().map(|&h| report(h, h)).collect();
        assert!(study_checks(&good, 1).is_empty());
        assert_eq!(study_checks(&good, 2).len(), 6);
        let mut bad = good.clone();
        bad[1].div_inf = 1e-6;
        assert_eq!(study_checks(&bad, 1).len(), 1);
    }
}
