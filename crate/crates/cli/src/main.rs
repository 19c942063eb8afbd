use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use ndirac::config::RunConfig;
use ndirac::constants::{check_gamma_admissible, load_or_build, ConstantsTable, CODE_VERSION};
use ndirac::field::{write_binary, write_csv};
use ndirac::minimizer::{minimize_outer, write_outer_trace, SolveReport};
use ndirac::nonlinearity::{estimate_mu_delta, validate_hypotheses};
use ndirac::verify::{check_multiplier_sandwich, run_scorecard, seed_sweep, CheckResult, Status};
use ndirac::Error;

const EXIT_SOLVER: u8 = 1;
const EXIT_CHECKS: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "ndirac", version, about = "Normalized solitary waves of a nonlinear Dirac equation on a periodic box")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Directory for reports, traces and the constants cache.
    #[arg(short, long, env = "NDIRAC_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Re-estimate the constants even when a cached table exists.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the outer energy and write the solve report.
    Solve(Common),
    /// Run the full inequality scorecard.
    Verify(Common),
    /// Seed asymptotics on scaled boxes plus E(φ_ε) on the configured grid.
    SweepEpsilon(Common),
    /// Solve at each configured mass λ.
    SweepLambda(Common),
    /// Estimate (or refresh) the Sobolev constants and the coupling threshold.
    EstimateConstants(Common),
    /// Test the configured coupling against the admissibility conditions.
    CheckGamma {
        #[command(flatten)]
        common: Common,
        /// Coupling to test instead of the configured one.
        #[arg(long)]
        gamma: Option<f64>,
    },
}

/// Failure classes mapped to exit codes.
enum Fail {
    Config(String),
    Solver(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidParameter(_) | Error::InadmissibleCoupling { .. } => {
                Fail::Config(e.to_string())
            }
            other => Fail::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Solver(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail::Solver(format!("json: {e}"))
    }
}

struct Ctx {
    cfg: RunConfig,
    config_path: PathBuf,
    out: PathBuf,
    seed: u64,
    force: bool,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self, Fail> {
        let mut cfg = RunConfig::load(&c.config)?;
        let seed = c.seed.unwrap_or(cfg.rng_seed());
        cfg.verify.seed = seed;
        let out = c
            .output_dir
            .clone()
            .or_else(|| cfg.run.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("ndirac-out"));
        std::fs::create_dir_all(&out)?;
        Ok(Ctx { cfg, config_path: c.config.clone(), out, seed, force: c.force })
    }

    fn base_dir(&self) -> &Path {
        self.config_path.parent().unwrap_or(Path::new("."))
    }

    fn constants(&self) -> Result<ConstantsTable, Fail> {
        let grid = self.cfg.grid()?;
        let mu = estimate_mu_delta(&self.cfg.nonlinearity, self.cfg.constants.mu_samples, self.cfg.constants.seed).mu;
        Ok(load_or_build(&self.out, &grid, &self.cfg.nonlinearity, mu, &self.cfg.constants.ascent(), self.force)?)
    }

    fn maybe_constants(&self) -> Result<Option<ConstantsTable>, Fail> {
        if self.cfg.needs_constants() {
            self.constants().map(Some)
        } else {
            Ok(None)
        }
    }

    /// Header fields shared by every artifact.
    fn provenance(&self, table: Option<&ConstantsTable>) -> serde_json::Value {
        json!({
            "code_version": CODE_VERSION,
            "rng_seed": self.seed,
            "config_path": self.config_path,
            "grid_fingerprint": self.cfg.grid().map(|g| g.fingerprint()).unwrap_or_default(),
            "constants_hash": table.map(|t| t.hash()),
        })
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), Fail> {
        let path = self.out.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }
}

fn status_word(c: &CheckResult) -> &'static str {
    match c.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Inconclusive => "INCONCLUSIVE",
    }
}

fn print_checks(checks: &[CheckResult]) {
    for c in checks {
        eprintln!("  {:<30} {:<13} margin {:+.3e}", c.name, status_word(c), c.margin);
    }
}

fn checks_exit(checks: &[CheckResult]) -> u8 {
    if checks.iter().any(|c| c.failed()) {
        EXIT_CHECKS
    } else {
        0
    }
}

fn write_solution(ctx: &Ctx, report: &SolveReport, stem: &str) -> Result<(), Fail> {
    write_binary(&report.psi, &mut BufWriter::new(File::create(ctx.out.join(format!("{stem}.bin")))?))?;
    write_csv(&report.psi, &mut BufWriter::new(File::create(ctx.out.join(format!("{stem}.csv")))?))?;
    write_outer_trace(&report.trace, &mut BufWriter::new(File::create(ctx.out.join(format!("{stem}_trace.csv")))?))?;
    Ok(())
}

fn solve(ctx: &Ctx) -> Result<u8, Fail> {
    let table = ctx.maybe_constants()?;
    let gamma = ctx.cfg.gamma(table.as_ref())?;
    let cfg = ctx.cfg.solve_config_with_seed(gamma, ctx.base_dir())?;
    let report = minimize_outer(&cfg, table.as_ref())?;
    write_solution(ctx, &report, "psi")?;
    ctx.write_json("report.json", &json!({ "provenance": ctx.provenance(table.as_ref()), "config": cfg, "report": report }))?;
    eprintln!(
        "E = {:.12}  omega = {:.12}  residual = {:.3e}  outer iterations = {}",
        report.energy, report.omega, report.residual, report.outer_stats.iterations
    );
    print_checks(&report.checks);
    Ok(checks_exit(&report.checks))
}

fn verify(ctx: &Ctx) -> Result<u8, Fail> {
    let table = ctx.constants()?;
    let gamma = ctx.cfg.gamma(Some(&table))?;
    let cfg = ctx.cfg.solve_config_with_seed(gamma, ctx.base_dir())?;
    let card = run_scorecard(&cfg, &table, &ctx.cfg.verify)?;
    let hyp = validate_hypotheses(&ctx.cfg.nonlinearity, 2000, ctx.seed)?;
    ctx.write_json("scorecard.json", &json!({ "provenance": ctx.provenance(Some(&table)), "scorecard": card, "hypotheses": hyp }))?;
    let table_text = card.summary_table();
    std::fs::write(ctx.out.join("scorecard.txt"), &table_text)?;
    print!("{table_text}");
    Ok(checks_exit(&card.checks))
}

fn sweep_epsilon(ctx: &Ctx) -> Result<u8, Fail> {
    let grid = ctx.cfg.grid()?;
    let base = ctx.cfg.sweep.base_length.unwrap_or(grid.box_length / 2.0);
    let sweep = seed_sweep(grid.n_per_axis, base, grid.mass, ctx.cfg.seed.sigma, &ctx.cfg.sweep.epsilons)?;
    let table = ctx.maybe_constants()?;
    let gamma = ctx.cfg.gamma(table.as_ref())?;
    let cfg = ctx.cfg.solve_config(gamma)?;
    let deficit = ndirac::verify::check_upper_bound_e(&cfg, &ctx.cfg.sweep.epsilons)?;
    let mut csv = String::from("epsilon,box_length,h_excess,projection_gap,projection_norm\n");
    for r in &sweep.rows {
        csv += &format!("{},{},{:.12e},{:.12e},{:.15}\n", r.epsilon, r.box_length, r.h_excess, r.projection_gap, r.projection_norm);
    }
    std::fs::write(ctx.out.join("sweep_epsilon.csv"), csv)?;
    let slope_checks = vec![
        CheckResult::le("h_excess_slope", 1.8, sweep.h_excess_slope.unwrap_or(f64::NAN), 0.0),
        CheckResult::le("projection_gap_slope", 0.9, sweep.projection_gap_slope.unwrap_or(f64::NAN), 0.0),
        deficit,
    ];
    ctx.write_json(
        "sweep_epsilon.json",
        &json!({ "provenance": ctx.provenance(table.as_ref()), "base_length": base, "sweep": sweep, "checks": slope_checks }),
    )?;
    eprintln!(
        "slopes: h_excess {:.3}, projection_gap {:.3}",
        sweep.h_excess_slope.unwrap_or(f64::NAN),
        sweep.projection_gap_slope.unwrap_or(f64::NAN)
    );
    print_checks(&slope_checks);
    Ok(checks_exit(&slope_checks))
}

fn sweep_lambda(ctx: &Ctx) -> Result<u8, Fail> {
    let table = ctx.maybe_constants()?;
    let gamma = ctx.cfg.gamma(table.as_ref())?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut csv = String::from("lambda,E,omega,residual,E_over_lambda\n");
    for &lambda in &ctx.cfg.sweep.lambdas {
        let mut cfg = ctx.cfg.solve_config_with_seed(gamma, ctx.base_dir())?;
        cfg.lambda = lambda;
        let r = minimize_outer(&cfg, table.as_ref())?;
        csv += &format!("{lambda},{:.15e},{:.15e},{:.3e},{:.15e}\n", r.energy, r.omega, r.residual, r.energy / lambda);
        checks.extend(r.checks.iter().cloned().map(|c| c.with_input("lambda", lambda)));
        checks.push(check_multiplier_sandwich(&r).with_input("lambda", lambda));
        rows.push(json!({ "lambda": lambda, "energy": r.energy, "omega": r.omega, "residual": r.residual }));
    }
    // e(λ)/λ is strictly decreasing under strict subadditivity
    let per: Vec<(f64, f64)> = rows.iter().map(|r| (r["lambda"].as_f64().unwrap(), r["energy"].as_f64().unwrap())).collect();
    let mut sorted = per.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for p in sorted.windows(2) {
        let c = CheckResult::le("energy_monotone_in_lambda", p[0].1, p[1].1, 0.0).with_input("lambda", p[1].0);
        checks.push(c);
        let ratio = CheckResult::lt("energy_per_mass_decreasing", p[1].1 / p[1].0, p[0].1 / p[0].0, 0.0).with_input("lambda", p[1].0);
        checks.push(if gamma > 0.0 { ratio } else { ratio.inconclusive("equality by design at gamma = 0") });
    }
    std::fs::write(ctx.out.join("sweep_lambda.csv"), csv)?;
    ctx.write_json("sweep_lambda.json", &json!({ "provenance": ctx.provenance(table.as_ref()), "gamma": gamma, "rows": rows, "checks": checks }))?;
    for r in &rows {
        eprintln!("lambda {:<6} E {:.12}  omega {:.12}", r["lambda"], r["energy"].as_f64().unwrap(), r["omega"].as_f64().unwrap());
    }
    let failed: Vec<CheckResult> = checks.iter().filter(|c| c.failed()).cloned().collect();
    print_checks(&failed);
    Ok(checks_exit(&checks))
}

fn estimate_constants(ctx: &Ctx) -> Result<u8, Fail> {
    let table = ctx.constants()?;
    let derived = estimate_mu_delta(&ctx.cfg.nonlinearity, ctx.cfg.constants.mu_samples, ctx.cfg.constants.seed);
    ctx.write_json("constants.json", &json!({ "provenance": ctx.provenance(Some(&table)), "table": table, "derived": derived }))?;
    for e in &table.sobolev {
        eprintln!("S_{:<12} q = {:<8.5} {:.10} (spread {:.1e})", e.label, e.q, e.value, e.uncertainty);
    }
    eprintln!("mu = {:.6}  gamma0 = {:.6e}", table.mu, table.gamma0_bound);
    for w in &derived.warnings {
        eprintln!("warning: {w}");
    }
    Ok(0)
}

fn check_gamma(ctx: &Ctx, gamma: Option<f64>) -> Result<u8, Fail> {
    let table = ctx.constants()?;
    let gamma = match gamma {
        Some(g) => g,
        None => ctx.cfg.gamma(Some(&table))?,
    };
    let rep = check_gamma_admissible(gamma, &table, table.mu, ctx.cfg.nonlinearity.alpha)?;
    ctx.write_json("check_gamma.json", &json!({ "provenance": ctx.provenance(Some(&table)), "admissibility": rep }))?;
    println!("{}", serde_json::to_string_pretty(&rep)?);
    Ok(if rep.admissible { 0 } else { EXIT_CHECKS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = (|| -> Result<u8, Fail> {
        match &cli.command {
            Command::Solve(c) => solve(&Ctx::new(c)?),
            Command::Verify(c) => verify(&Ctx::new(c)?),
            Command::SweepEpsilon(c) => sweep_epsilon(&Ctx::new(c)?),
            Command::SweepLambda(c) => sweep_lambda(&Ctx::new(c)?),
            Command::EstimateConstants(c) => estimate_constants(&Ctx::new(c)?),
            Command::CheckGamma { common, gamma } => check_gamma(&Ctx::new(common)?, *gamma),
        }
    })();
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Fail::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Fail::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
