//! Browser bindings. Every export takes plain numbers and returns a JSON string;
//! failures come back as `{"error": "..."}`.

use ndirac::constants::{build_constants_table, check_gamma_admissible, AscentOptions, ConstantsTable};
use ndirac::field::{GridSpec, Representation, SpinorField};
use ndirac::minimizer::{minimize_outer, seed_w_epsilon, SeedSpec, SolveConfig};
use ndirac::nonlinearity::{estimate_mu_delta, NonlinearitySpec};
use ndirac::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest grid the page offers; keeps a solve under a few seconds.
pub const MAX_N: usize = 16;

const DEMO_ASCENT: AscentOptions = AscentOptions { starts: 3, iterations: 80, seed: 17 };

fn render(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn demo_grid(n: usize, box_length: f64) -> Result<GridSpec> {
    if n > MAX_N {
        return Err(ndirac::Error::InvalidParameter(format!("grid size {n} exceeds {MAX_N}")));
    }
    GridSpec::new(n, box_length, 1.0)
}

fn spec(a: f64, alpha: f64) -> Result<NonlinearitySpec> {
    let s = NonlinearitySpec { a, alpha, ..NonlinearitySpec::default() };
    s.validate()?;
    Ok(s)
}

fn table(grid: &GridSpec, spec: &NonlinearitySpec) -> Result<ConstantsTable> {
    let mu = estimate_mu_delta(spec, 200, DEMO_ASCENT.seed).mu;
    build_constants_table(grid, spec, mu, &DEMO_ASCENT)
}

/// Density `|ψ|²` along the x axis through the origin, as `(x, density)` pairs.
pub fn axis_profile(u: &SpinorField) -> Vec<(f64, f64)> {
    let g = *u.grid();
    let p = u.in_representation(Representation::Position);
    let n = g.n_per_axis;
    let (j0, k0) = (n / 2, n / 2);
    (0..n)
        .map(|i| {
            let idx = (i * n + j0) * n + k0;
            let x = g.position(idx)[0];
            (x, p.at(idx).iter().map(|c| c.norm_sqr()).sum())
        })
        .collect()
}

pub fn seed_profile_value(n: usize, box_length: f64, epsilon: f64, sigma: f64) -> Result<Value> {
    let grid = demo_grid(n, box_length)?;
    let s = seed_w_epsilon(&grid, epsilon, sigma)?;
    Ok(json!({
        "epsilon": epsilon,
        "projection_norm": s.projection_norm,
        "raw": axis_profile(&s.w_eps),
        "projected": axis_profile(&s.phi_eps),
    }))
}

pub fn admissibility_value(n: usize, box_length: f64, a: f64, alpha: f64, gamma: f64) -> Result<Value> {
    let grid = demo_grid(n, box_length)?;
    let spec = spec(a, alpha)?;
    let t = table(&grid, &spec)?;
    let report = check_gamma_admissible(gamma, &t, t.mu, alpha)?;
    Ok(json!({ "mu": t.mu, "sobolev": t.sobolev, "report": report }))
}

pub fn solve_value(n: usize, box_length: f64, a: f64, alpha: f64, gamma_ratio: f64, lambda: f64, epsilon: f64) -> Result<Value> {
    let grid = demo_grid(n, box_length)?;
    let spec = spec(a, alpha)?;
    let t = if gamma_ratio > 0.0 { Some(table(&grid, &spec)?) } else { None };
    let gamma = t.as_ref().map_or(0.0, |t| gamma_ratio * t.gamma0_bound);
    let mut cfg = SolveConfig::new(grid, spec, gamma);
    cfg.lambda = lambda;
    cfg.seed = SeedSpec::Gaussian { epsilon, sigma: 1.0 };
    cfg.max_outer_iterations = 400;
    let r = minimize_outer(&cfg, t.as_ref())?;
    let checks: Vec<Value> =
        r.checks.iter().map(|c| json!({ "name": c.name, "status": c.status, "margin": c.margin })).collect();
    Ok(json!({
        "gamma": r.gamma,
        "gamma0": t.as_ref().map(|t| t.gamma0_bound),
        "energy": r.energy,
        "omega": r.omega,
        "residual": r.residual,
        "iterations": r.outer_stats.iterations,
        "profile": axis_profile(&r.psi),
        "checks": checks,
    }))
}

/// The Gaussian seed before and after projection onto the positive-energy subspace.
#[wasm_bindgen]
pub fn seed_profile(n: usize, box_length: f64, epsilon: f64, sigma: f64) -> String {
    render(seed_profile_value(n, box_length, epsilon, sigma))
}

/// Estimates the grid constants and tests a coupling against both size conditions.
#[wasm_bindgen]
pub fn admissibility(n: usize, box_length: f64, a: f64, alpha: f64, gamma: f64) -> String {
    render(admissibility_value(n, box_length, a, alpha, gamma))
}

/// Ground-state solve at `gamma = gamma_ratio * gamma0`.
#[wasm_bindgen]
pub fn solve(n: usize, box_length: f64, a: f64, alpha: f64, gamma_ratio: f64, lambda: f64, epsilon: f64) -> String {
    render(solve_value(n, box_length, a, alpha, gamma_ratio, lambda, epsilon))
}
