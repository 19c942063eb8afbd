//! Inequality checks and the scorecard.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{ConstantsTable, CODE_VERSION};
use crate::dirac::Sign;
use crate::error::{Error, Result};
use crate::field::{h_half_norm, GridSpec, random_smooth, Representation, SpinorField};
use crate::maximizer::{random_negative, random_positive_unit, real_dot, Decomposition, InnerOptions, Problem};
use crate::minimizer::{minimize_outer, seed_w_epsilon, SeedSpec, SolveConfig, SolveReport};
use crate::nonlinearity::{grad_f_field, integral_f, Nonlinearity, Soler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The statement degenerates to an equality for these inputs.
    Inconclusive,
}

/// One inequality `lhs ≤ rhs` with `margin = rhs − lhs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub inputs: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    pub fn le(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = rhs - lhs;
        let pass = margin >= -tolerance;
        CheckResult {
            name: name.into(),
            inputs: BTreeMap::new(),
            lhs,
            rhs,
            margin,
            tolerance,
            pass,
            status: if pass { Status::Pass } else { Status::Fail },
            note: None,
        }
    }

    /// Strict `lhs < rhs`: the margin has to be positive, not merely above `−tolerance`.
    pub fn lt(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let mut c = Self::le(name, lhs, rhs, tolerance);
        c.pass = c.margin > tolerance;
        c.status = if c.pass { Status::Pass } else { Status::Fail };
        c
    }

    pub fn inconclusive(mut self, why: &str) -> Self {
        self.status = Status::Inconclusive;
        self.note = Some(why.into());
        self
    }

    pub fn with_input(mut self, key: &str, value: f64) -> Self {
        self.inputs.insert(key.into(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

/// Settings for the scorecard; every random draw is seeded from `seed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub samples: usize,
    pub directions: usize,
    pub seed: u64,
    pub epsilon_grid: Vec<f64>,
    pub sub_lambda: f64,
    pub sub_theta: f64,
    /// Seeded outer solves per `e(λ)` estimate.
    pub solves_per_level: usize,
    pub subadditivity: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 10,
            directions: 5,
            seed: 2024,
            epsilon_grid: vec![0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005],
            sub_lambda: 0.5,
            sub_theta: 1.5,
            solves_per_level: 4,
            subadditivity: true,
        }
    }
}

const LINEAR: &str = "equality by design at gamma = 0";

/// Random `(w, η)` with `J(η) ≥ 0` and `‖η‖²` drawn from `[lo, hi)·λ`.
pub fn sample_decompositions<N: Nonlinearity>(
    problem: &Problem<N>,
    lambda: f64,
    count: usize,
    range: (f64, f64),
    w_width: f64,
    seed: u64,
) -> Result<Vec<Decomposition>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..50 * count.max(1) {
        if out.len() == count {
            break;
        }
        let w = random_positive_unit(&problem.modes, &mut rng, w_width);
        let frac: f64 = rng.random_range(range.0..range.1);
        let eta = random_negative(&problem.modes, &mut rng, 1.0, frac * lambda);
        let dec = Decomposition::new(&w, &eta, lambda)?;
        if problem.eval_j(&dec)? >= 0.0 {
            out.push(dec);
        }
    }
    Ok(out)
}

fn worst(name: &str, items: impl Iterator<Item = (f64, f64)>, tolerance: f64, strict: bool) -> CheckResult {
    let mut pick: Option<(f64, f64)> = None;
    for (l, r) in items {
        if pick.is_none_or(|(pl, pr)| r - l < pr - pl) {
            pick = Some((l, r));
        }
    }
    let (l, r) = pick.unwrap_or((f64::NAN, f64::NAN));
    let c = if strict { CheckResult::lt(name, l, r, tolerance) } else { CheckResult::le(name, l, r, tolerance) };
    if pick.is_none() {
        return c.inconclusive("no admissible samples");
    }
    c
}

/// `‖η‖²_H ≤ a²‖w‖²_H − 2J(η)` at sampled decompositions.
pub fn check_inner_energy_bound<N: Nonlinearity>(problem: &Problem<N>, decs: &[Decomposition]) -> Result<CheckResult> {
    let mut rows = Vec::new();
    for d in decs {
        let w_h = problem.h_sq(&d.w);
        let a2 = d.amplitude().powi(2);
        rows.push((problem.h_sq(&d.eta), a2 * w_h - 2.0 * problem.eval_j(d)?));
    }
    let c = worst("inner_energy_bound", rows.into_iter(), 1e-10, false).with_input("samples", decs.len() as f64);
    Ok(if problem.gamma == 0.0 { c.inconclusive(LINEAR) } else { c })
}

/// `a⁻¹|∫⟨∇F(ψ), w⟩| ≤ C_{α,λ}‖w‖²_H` at inner maximizers.
pub fn check_gradient_along_w<N: Nonlinearity>(
    problem: &Problem<N>,
    table: &ConstantsTable,
    lambda: f64,
    count: usize,
    seed: u64,
) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c_al = table.c_alpha_lambda_at(lambda);
    let mut rows = Vec::new();
    for _ in 0..count {
        let w = random_positive_unit(&problem.modes, &mut rng, 1.0);
        let r = problem.maximize_inner(&w, lambda, &InnerOptions::default())?;
        if r.j_value < 0.0 {
            continue;
        }
        rows.push((problem.gamma * r.state.c_w.abs() / r.state.a, problem.gamma * c_al * problem.h_sq(&w)));
    }
    let c = worst("gradient_along_w_bound", rows.into_iter(), 1e-12, false)
        .with_input("c_alpha_lambda", c_al)
        .with_input("samples", count as f64)
        .with_note("both sides carry the factor gamma");
    Ok(if problem.gamma == 0.0 { c.inconclusive(LINEAR) } else { c })
}

/// `dJ(η)[η] < −‖η‖²_H` where `J(η) ≥ 0` and `‖η‖² ≥ λ/2`.
pub fn check_boundary_push<N: Nonlinearity>(problem: &Problem<N>, lambda: f64, count: usize, seed: u64) -> Result<CheckResult> {
    // broad-band w so that J stays non-negative with a heavy η
    let decs = sample_decompositions(problem, lambda, count, (0.5, 0.8), 0.4, seed)?;
    let mut rows = Vec::new();
    for d in &decs {
        let g = problem.grad_j(d)?;
        rows.push((real_dot(&g, &d.eta, None), -problem.h_sq(&d.eta)));
    }
    Ok(worst("boundary_push", rows.into_iter(), 0.0, true).with_input("samples", decs.len() as f64))
}

/// `d²J(η)[ξ,ξ] + ‖ξ‖²_H ≤ 1e-8` for `‖ξ‖_H = 1` at sampled decompositions.
pub fn check_concavity<N: Nonlinearity>(
    problem: &Problem<N>,
    decs: &[Decomposition],
    directions: usize,
    seed: u64,
) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut skipped = 0;
    for d in decs {
        for _ in 0..directions {
            let mut xi = random_smooth(*problem.grid(), &mut rng, 1.0);
            problem.modes.project_frequency(&mut xi, Sign::Minus);
            let xi = xi.scaled(1.0 / problem.h_sq(&xi).sqrt());
            match problem.hess_j_quadform(d, &xi) {
                Ok(q) => rows.push((q + 1.0, 0.0)),
                Err(Error::SingularHessian) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let n = rows.len();
    Ok(worst("inner_concavity", rows.into_iter(), 1e-8, false)
        .with_input("evaluations", n as f64)
        .with_input("singular_skipped", skipped as f64))
}

fn energy_coefficient(table: &ConstantsTable, gamma: f64, lambda: f64) -> f64 {
    let al = table.nonlinearity.alpha;
    let (s2, s4) = (table.s("2"), table.s("4/(4-alpha)"));
    1.0 - gamma * (s2 * s2 + 2.0 * (table.mu / al) * lambda.powf((al - 2.0) / 2.0) * s4 * s4)
}

/// `λ/(2S₂²)·c ≤ ½λc‖w‖²_H ≤ E(w) ≤ ½λ‖w‖²_H` with `c = 1 − γ(S₂² + 2(μ/α)λ^{(α−2)/2}S²_{4/(4−α)})`.
pub fn check_energy_bounds<N: Nonlinearity>(
    problem: &Problem<N>,
    w: &SpinorField,
    lambda: f64,
    table: &ConstantsTable,
) -> Result<CheckResult> {
    let (e, _) = problem.eval_e(w, lambda, &InnerOptions::default())?;
    let w_h = problem.h_sq(&w.in_representation(Representation::Frequency));
    let coeff = energy_coefficient(table, problem.gamma, lambda);
    let s2 = table.s("2");
    let floor = lambda / (2.0 * s2 * s2) * coeff;
    let lower = 0.5 * lambda * coeff * w_h;
    let upper = 0.5 * lambda * w_h;
    let tol = 1e-10;
    let mut c = CheckResult::le("energy_sandwich", lower, e, tol)
        .with_input("floor", floor)
        .with_input("upper", upper)
        .with_input("coefficient", coeff);
    c.margin = (e - lower).min(upper - e).min(lower - floor).min(floor);
    c.pass = c.margin >= -tol && floor > 0.0;
    c.status = if c.pass { Status::Pass } else { Status::Fail };
    Ok(if problem.gamma == 0.0 { c.inconclusive("upper bound is tight at gamma = 0") } else { c })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Sweeps `E(φ_ε)` over `eps` and asserts `min E < λm/2`.
pub fn check_upper_bound_e(cfg: &SolveConfig, eps: &[f64]) -> Result<CheckResult> {
    let problem = Problem::new(cfg.grid, Soler::new(cfg.nonlinearity)?, cfg.gamma)?;
    let sigma = match cfg.seed {
        SeedSpec::Gaussian { sigma, .. } => sigma,
        SeedSpec::Explicit(_) => 1.0,
    };
    let target = 0.5 * cfg.lambda * cfg.grid.mass;
    let mut best = f64::INFINITY;
    let mut deficits = Vec::new();
    for &e in eps {
        let seed = match seed_w_epsilon(&cfg.grid, e, sigma) {
            Ok(s) => s,
            Err(Error::SeedTooWide(_)) => continue,
            Err(err) => return Err(err),
        };
        let (energy, _) = problem.eval_e(&seed.phi_eps, cfg.lambda, &InnerOptions::default())?;
        best = best.min(energy);
        deficits.push((e, target - energy));
    }
    let mut c = CheckResult::lt("energy_deficit", best, target, 0.0).with_input("seeds", deficits.len() as f64);
    if let Some(s) = log_log_slope(&deficits) {
        c = c.with_input("deficit_slope", s).with_note("deficit slope over the sweep is informational");
    }
    Ok(if cfg.gamma == 0.0 { c.inconclusive(LINEAR) } else { c })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedSweepRow {
    pub epsilon: f64,
    pub box_length: f64,
    /// `‖φ_ε‖²_H − m`
    pub h_excess: f64,
    /// `‖w_ε − φ_ε‖_{L²}`
    pub projection_gap: f64,
    pub projection_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedSweep {
    pub rows: Vec<SeedSweepRow>,
    pub h_excess_slope: Option<f64>,
    pub projection_gap_slope: Option<f64>,
}

/// Seed family on boxes `L = base_length/ε` at fixed `N`, so every `w_ε` is resolved alike.
pub fn seed_sweep(n: usize, base_length: f64, mass: f64, sigma: f64, eps: &[f64]) -> Result<SeedSweep> {
    let mut rows = Vec::new();
    for &e in eps {
        let g = GridSpec::new(n, base_length / e, mass)?;
        let s = seed_w_epsilon(&g, e, sigma)?;
        let h = real_dot(&s.phi_eps, &s.phi_eps, Some(&g.weights())) - mass;
        let gap = real_dot(&s.w_eps.sub(&s.phi_eps)?, &s.w_eps.sub(&s.phi_eps)?, None).sqrt();
        rows.push(SeedSweepRow { epsilon: e, box_length: g.box_length, h_excess: h, projection_gap: gap, projection_norm: s.projection_norm });
    }
    let h_excess_slope = log_log_slope(&rows.iter().map(|r| (r.epsilon, r.h_excess)).collect::<Vec<_>>());
    let projection_gap_slope = log_log_slope(&rows.iter().map(|r| (r.epsilon, r.projection_gap)).collect::<Vec<_>>());
    Ok(SeedSweep { rows, h_excess_slope, projection_gap_slope })
}

/// Best and spread of `E` over seeded solves at one mass level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub lambda: f64,
    pub energies: Vec<f64>,
    pub best: f64,
    pub spread: f64,
}

pub fn estimate_level(cfg: &SolveConfig, table: Option<&ConstantsTable>, lambda: f64, solves: usize) -> Result<LevelEstimate> {
    let sigma = match cfg.seed {
        SeedSpec::Gaussian { sigma, .. } => sigma,
        SeedSpec::Explicit(_) => 1.0,
    };
    let mut energies = Vec::new();
    for k in 0..solves.max(1) {
        let mut c = cfg.clone();
        c.lambda = lambda;
        c.seed = SeedSpec::Gaussian { epsilon: 0.6 / (1.0 + k as f64), sigma };
        energies.push(minimize_outer(&c, table)?.energy);
    }
    let best = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max) - best;
    Ok(LevelEstimate { lambda, energies, best, spread })
}

/// `e(θλ) < θe(λ)` beyond three times the solver spread, plus monotonicity of `e`.
pub fn check_subadditivity(
    cfg: &SolveConfig,
    table: Option<&ConstantsTable>,
    lambda: f64,
    theta: f64,
    solves: usize,
) -> Result<Vec<CheckResult>> {
    if !(lambda > 0.0 && lambda < 1.0 && theta > 1.0 && theta * lambda <= 1.0) {
        return Err(Error::InvalidParameter("need lambda in (0,1), theta > 1, theta lambda <= 1".into()));
    }
    let lo = estimate_level(cfg, table, lambda, solves)?;
    let hi = estimate_level(cfg, table, theta * lambda, solves)?;
    let slack = 3.0 * lo.spread.max(hi.spread);
    let sub = CheckResult::lt("strict_subadditivity", hi.best, theta * lo.best - slack, 0.0)
        .with_input("lambda", lambda)
        .with_input("theta", theta)
        .with_input("slack", slack)
        .with_input("e_lambda", lo.best)
        .with_input("e_theta_lambda", hi.best);
    let mono = CheckResult::le("energy_monotone_in_lambda", lo.best, hi.best, 0.0);
    if cfg.gamma == 0.0 {
        Ok(vec![sub.inconclusive(LINEAR), mono])
    } else {
        Ok(vec![sub, mono])
    }
}

/// `(1 − γC_{α,λ})‖w‖²_H ≤ ω ≤ 2E/λ` from a solve report.
pub fn check_multiplier_sandwich(report: &SolveReport) -> CheckResult {
    let (lower, upper) = report.omega_bounds.unwrap_or((report.w_h_sq, 2.0 * report.energy / report.lambda));
    let tol = 1e-8;
    let mut c = CheckResult::le("multiplier_sandwich", lower, report.omega, tol).with_input("upper", upper);
    c.margin = (report.omega - lower).min(upper - report.omega);
    c.pass = c.margin >= -tol;
    c.status = if c.pass { Status::Pass } else { Status::Fail };
    if report.gamma == 0.0 {
        c.inconclusive(LINEAR)
    } else {
        c
    }
}

/// Lower bounds at a critical point: on `‖ψ‖_H^{α−2}` and on the action `I(ψ)`.
pub fn check_lower_bounds(report: &SolveReport, table: &ConstantsTable) -> Vec<CheckResult> {
    let (g, m, om) = (report.gamma, report.mass, report.omega);
    let al = table.nonlinearity.alpha;
    let c_al = table.s("alpha");
    // |∇F(φ)| ≤ μ|φ|^{α−1} for the Soler family, so μ_ε = μ serves for every ε
    let bound = (1.0 - om / m) / (2.0 * g * table.mu * c_al.powf(al));
    let norm = report.psi_h_sq.sqrt().powf(al - 2.0);
    let a = CheckResult::le("critical_point_norm_bound", bound, norm, 0.0).with_input("omega", om);
    // I − ½dI[ψ] + ½ω‖ψ‖² = γ(α/2 − 1)∫F + ½ω‖ψ‖² at a critical point of a degree-α nonlinearity
    let via = g * (al / 2.0 - 1.0) * report.f_integral + 0.5 * om * report.psi_l2_sq;
    let tol = 1e-9_f64.max(report.residual * report.psi_h_sq);
    let mut b = CheckResult::le("critical_point_action_bound", via, report.action, tol).with_input("action", report.action);
    b.margin = b.margin.min(report.action);
    b.pass = b.margin >= -tol && report.action > 0.0 && (via - report.action).abs() <= tol;
    b.status = if b.pass { Status::Pass } else { Status::Fail };
    if g == 0.0 {
        vec![a.inconclusive("bound is vacuous at gamma = 0"), b]
    } else {
        vec![a, b]
    }
}

/// `∫F(ψ) ≥ ∫F(√λw) + Re∫⟨∇F(aw),η⟩ − (S₂² + μλ^{(α−2)/2}S²_{4/(4−α)})‖η‖²‖w‖²_H`.
pub fn check_stimautile<N: Nonlinearity>(f: &N, dec: &Decomposition, gamma: f64, table: &ConstantsTable) -> CheckResult {
    let lambda = dec.lambda;
    let a = dec.amplitude();
    let al = table.nonlinearity.alpha;
    let (s2, s4) = (table.s("2"), table.s("4/(4-alpha)"));
    let lhs_f = integral_f(&dec.psi(), f);
    let base = integral_f(&dec.w.scaled(lambda.sqrt()), f);
    let grad = grad_f_field(&dec.w.scaled(a), f).into_representation(Representation::Frequency);
    let lin = real_dot(&grad, &dec.eta, None);
    let eta_sq = real_dot(&dec.eta, &dec.eta, None);
    let w_h = h_half_norm(&dec.w).powi(2);
    let corr = (s2 * s2 + table.mu * lambda.powf((al - 2.0) / 2.0) * s4 * s4) * eta_sq * w_h;
    let c = CheckResult::le("convexity_lower_bound", base + lin - corr, lhs_f, 1e-12).with_input("gamma", gamma);
    if eta_sq == 0.0 {
        c.inconclusive("equality at eta = 0")
    } else {
        c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Scorecard {
    pub grid_fingerprint: String,
    pub constants_hash: String,
    pub code_version: String,
    pub gamma: f64,
    pub lambda: f64,
    pub options: VerifyOptions,
    pub checks: Vec<CheckResult>,
}

impl Scorecard {
    pub fn failed(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| c.failed()).collect()
    }

    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<30} {:<13} {:>14} {:>14} {:>12}\n", "check", "status", "lhs", "rhs", "margin");
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Inconclusive => "INCONCLUSIVE",
            };
            out += &format!("{:<30} {:<13} {:>14.6e} {:>14.6e} {:>12.3e}\n", c.name, status, c.lhs, c.rhs, c.margin);
        }
        out
    }
}

/// Runs every check once for `cfg`.
pub fn run_scorecard(cfg: &SolveConfig, table: &ConstantsTable, opts: &VerifyOptions) -> Result<Scorecard> {
    cfg.validate()?;
    let problem = Problem::new(cfg.grid, Soler::new(cfg.nonlinearity)?, cfg.gamma)?;
    let lambda = cfg.lambda;
    let decs = sample_decompositions(&problem, lambda, opts.samples, (0.0, 0.45), 1.0, opts.seed)?;
    let mut checks = vec![
        check_inner_energy_bound(&problem, &decs)?,
        check_gradient_along_w(&problem, table, lambda, opts.samples, opts.seed + 1)?,
        check_boundary_push(&problem, lambda, opts.samples, opts.seed + 2)?,
        check_concavity(&problem, &decs, opts.directions, opts.seed + 3)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 4);
    let w = random_positive_unit(&problem.modes, &mut rng, 1.0);
    checks.push(check_energy_bounds(&problem, &w, lambda, table)?);
    let useful = decs
        .iter()
        .map(|d| check_stimautile(&problem.nonlinearity, d, cfg.gamma, table))
        .min_by(|a, b| a.margin.total_cmp(&b.margin));
    if let Some(c) = useful {
        checks.push(c.with_input("samples", decs.len() as f64));
    }
    checks.push(check_upper_bound_e(cfg, &opts.epsilon_grid)?);
    if opts.subadditivity {
        checks.extend(check_subadditivity(cfg, Some(table), opts.sub_lambda, opts.sub_theta, opts.solves_per_level)?);
    }
    let report = minimize_outer(cfg, Some(table))?;
    checks.push(check_multiplier_sandwich(&report));
    checks.extend(check_lower_bounds(&report, table));
    if let Some(c) = report.check("euler_lagrange_residual") {
        checks.push(c.clone());
    }
    Ok(Scorecard {
        grid_fingerprint: cfg.grid.fingerprint(),
        constants_hash: table.hash(),
        code_version: CODE_VERSION.into(),
        gamma: cfg.gamma,
        lambda,
        options: opts.clone(),
        checks,
    })
}
