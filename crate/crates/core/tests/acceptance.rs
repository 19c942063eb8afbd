//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ndirac::constants::{build_constants_table, AscentOptions, ConstantsTable};
use ndirac::dirac::{ModeTable, Sign};
use ndirac::field::{h_half_norm, l2_inner, l2_norm, random_smooth, GridSpec};
use ndirac::maximizer::{random_negative, random_positive_unit, Decomposition, InnerOptions, Problem};
use ndirac::minimizer::{minimize_outer, SolveConfig, SolveReport};
use ndirac::nonlinearity::{estimate_mu_delta, NonlinearitySpec, Soler};
use ndirac::verify::{check_concavity, check_subadditivity, sample_decompositions, seed_sweep};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let o = f();
        let dt = t.elapsed();
        let pass = o.pass && dt <= limit;
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {} ({:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            dt.as_secs_f64(),
            limit.as_secs()
        );
    }
}

fn table_for(grid: &GridSpec, spec: &NonlinearitySpec) -> ConstantsTable {
    let mu = estimate_mu_delta(spec, 4000, 1).mu;
    build_constants_table(grid, spec, mu, &AscentOptions::default()).expect("constants")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Criterion 1: projector and operator algebra.
fn operator_algebra(grid: GridSpec) -> Outcome {
    let modes = ModeTable::new(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let u = random_smooth(grid, &mut rng, 0.7);
        let n = l2_norm(&u);
        let (p, m) = (modes.project(&u, Sign::Plus), modes.project(&u, Sign::Minus));
        worst = worst.max(l2_norm(&p.add(&m).unwrap().sub(&u).unwrap()) / n);
        worst = worst.max(l2_norm(&modes.project(&p, Sign::Plus).sub(&p).unwrap()) / n);
        worst = worst.max(l2_norm(&modes.project(&m, Sign::Minus).sub(&m).unwrap()) / n);
        worst = worst.max(l2_norm(&modes.project(&p, Sign::Minus)) / n);
        // HΛ± = ±|D|Λ±, with |D| applied as the per-mode energy
        let e = &modes.energy;
        let hp = modes.apply_dirac(&p).sub(&p.mode_multiplied(e)).unwrap();
        let hm = modes.apply_dirac(&m).add(&m.mode_multiplied(e)).unwrap();
        let scale = h_half_norm(&u).max(1.0) * e.iter().cloned().fold(0.0, f64::max).sqrt();
        worst = worst.max(l2_norm(&hp) / (n * scale)).max(l2_norm(&hm) / (n * scale));
        // ⟨Hu,u⟩ = ‖Λ₊u‖²_H − ‖Λ₋u‖²_H
        let q = modes.dirac_quadratic_form(&u);
        let split = h_half_norm(&p).powi(2) - h_half_norm(&m).powi(2);
        worst = worst.max((q - split).abs() / h_half_norm(&u).powi(2));
    }
    outcome(worst <= 1e-12, format!("worst relative defect {worst:.2e} <= 1e-12"))
}

/// Criterion 2: analytic gradients against central differences.
fn gradient_fidelity(grid: GridSpec, table: &ConstantsTable) -> Outcome {
    let p = Problem::new(grid, Soler::new(table.nonlinearity).unwrap(), table.gamma0_bound).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let tight = InnerOptions { tol: 1e-12, ..Default::default() };
    for _ in 0..20 {
        let w = random_positive_unit(&p.modes, &mut rng, 1.0);
        let frac = rng.random_range(0.05..0.4);
        let eta = random_negative(&p.modes, &mut rng, 1.0, frac);
        let d = Decomposition::new(&w, &eta, 1.0).unwrap();
        let xi = random_negative(&p.modes, &mut rng, 1.0, 0.1);
        let g = p.grad_j(&d).unwrap();
        let j = |s: f64| p.eval_j(&Decomposition { lambda: 1.0, w: d.w.clone(), eta: d.eta.axpy(s, &xi).unwrap() }).unwrap();
        let h = 1e-5;
        let fd = (j(h) - j(-h)) / (2.0 * h);
        let an = l2_inner(&g, &xi).unwrap().re;
        worst = worst.max(rel(fd, an));
    }
    for _ in 0..20 {
        let w = random_positive_unit(&p.modes, &mut rng, 1.0);
        let v = random_positive_unit(&p.modes, &mut rng, 1.0);
        let v = v.axpy(-l2_inner(&w, &v).unwrap().re, &w).unwrap();
        let g = p.grad_e_tangent(&w, 1.0, &tight).unwrap();
        let e = |s: f64| {
            let u = w.axpy(s, &v).unwrap();
            let u = u.scaled(1.0 / l2_norm(&u));
            p.eval_e(&u, 1.0, &tight).unwrap().0
        };
        let h = 1e-4;
        let fd = (e(h) - e(-h)) / (2.0 * h);
        let an = l2_inner(&g, &v).unwrap().re;
        worst = worst.max(rel(fd, an));
    }
    outcome(worst <= 1e-5, format!("worst relative mismatch {worst:.2e} <= 1e-5 over 20 + 20 probes"))
}

/// Criterion 3: sampled curvature of J.
fn concavity(grid: GridSpec, table: &ConstantsTable) -> Outcome {
    let p = Problem::new(grid, Soler::new(table.nonlinearity).unwrap(), 0.5 * table.gamma0_bound).unwrap();
    let decs = sample_decompositions(&p, 1.0, 50, (0.0, 0.5), 1.0, 3).unwrap();
    let c = check_concavity(&p, &decs, 20, 4).unwrap();
    let n = c.inputs["evaluations"];
    outcome(
        decs.len() == 50 && n == 1000.0 && c.pass,
        format!("max d2J[xi,xi] + |xi|_H^2 = {:.3e} <= 1e-8 over {n} evaluations", c.lhs),
    )
}

/// Criterion 4: multistart agreement of the inner maximizer.
fn inner_uniqueness(grid: GridSpec, table: &ConstantsTable) -> Outcome {
    let p = Problem::new(grid, Soler::new(table.nonlinearity).unwrap(), table.gamma0_bound).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let w = random_positive_unit(&p.modes, &mut rng, 1.0);
        let base = p.maximize_inner(&w, 1.0, &InnerOptions::default()).unwrap();
        for _ in 0..2 {
            let frac = rng.random_range(0.05..0.45);
            let start = random_negative(&p.modes, &mut rng, 1.0, frac);
            let r = p.maximize_inner(&w, 1.0, &InnerOptions { start: Some(start), ..Default::default() }).unwrap();
            worst = worst.max(h_half_norm(&r.eta_star.sub(&base.eta_star).unwrap()));
        }
    }
    outcome(worst <= 1e-7, format!("worst H-distance between starts {worst:.2e} <= 1e-7 on 10 fields"))
}

fn nonlinear_window(r: &SolveReport) -> (bool, String) {
    let (lo, hi) = r.omega_bounds.expect("constants attached");
    let ok = r.omega > 0.0 && r.omega < r.mass && lo <= r.omega + 1e-8 && r.omega <= hi + 1e-8;
    (ok, format!("lambda {} omega {:.9} in ({lo:.6}, {hi:.9})", r.lambda, r.omega))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    let spec = NonlinearitySpec::default();
    let grid = GridSpec::new(16, 16.0, 1.0).unwrap();
    let t = Instant::now();
    let table = table_for(&grid, &spec);
    println!(
        "constants on {}: gamma0 = {:.6e}, mu = {}, S_2.5 = {:.6} ({:.1}s)",
        grid.fingerprint(),
        table.gamma0_bound,
        table.mu,
        table.s("alpha"),
        t.elapsed().as_secs_f64()
    );
    let mut solves: Vec<SolveReport> = Vec::new();

    suite.run(1, "projector and operator algebra", Duration::from_secs(5), || operator_algebra(grid));
    suite.run(2, "gradient fidelity", Duration::from_secs(120), || gradient_fidelity(grid, &table));
    suite.run(3, "inner concavity", Duration::from_secs(300), || concavity(grid, &table));
    suite.run(4, "inner uniqueness", Duration::from_secs(300), || inner_uniqueness(grid, &table));
    suite.run(5, "linear baseline", Duration::from_secs(60), || {
        let r = minimize_outer(&SolveConfig::new(grid, spec, 0.0), None).unwrap();
        let (de, dw) = ((r.energy - 0.5).abs(), (r.omega - 1.0).abs());
        outcome(de <= 1e-8 && dw <= 1e-8, format!("|E - m/2| = {de:.2e}, |omega - m| = {dw:.2e}"))
    });
    suite.run(6, "strict energy deficit at gamma0", Duration::from_secs(900), || {
        let cfg = SolveConfig::new(grid, spec, table.gamma0_bound);
        let r = minimize_outer(&cfg, Some(&table)).unwrap();
        let margin = 0.5 - r.energy;
        let o = outcome(margin > 10.0 * cfg.tol_outer, format!("m/2 - E = {margin:.4e} > {:.1e}", 10.0 * cfg.tol_outer));
        solves.push(r);
        o
    });
    suite.run(9, "strict subadditivity", Duration::from_secs(2700), || {
        let cfg = SolveConfig::new(grid, spec, table.gamma0_bound);
        let checks = check_subadditivity(&cfg, Some(&table), 0.5, 1.5, 4).unwrap();
        let c = &checks[0];
        // the sub-solves are also nonlinear solves; keep one per level for the window criteria
        for lambda in [0.5, 0.75] {
            let mut c2 = cfg.clone();
            c2.lambda = lambda;
            solves.push(minimize_outer(&c2, Some(&table)).unwrap());
        }
        outcome(
            c.pass && checks[1].pass,
            format!(
                "e(0.75) = {:.10}, 1.5 e(0.5) = {:.10}, margin {:.3e} beyond slack {:.1e}",
                c.inputs["e_theta_lambda"],
                1.5 * c.inputs["e_lambda"],
                c.margin,
                c.inputs["slack"]
            ),
        )
    });
    suite.run(10, "seed asymptotics", Duration::from_secs(120), || {
        let sw = seed_sweep(16, 8.0, 1.0, 1.0, &[0.4, 0.2, 0.1, 0.05]).unwrap();
        let (a, b) = (sw.h_excess_slope.unwrap_or(f64::NAN), sw.projection_gap_slope.unwrap_or(f64::NAN));
        outcome(a >= 1.8 && b >= 0.9, format!("slopes {a:.3} >= 1.8 (H excess), {b:.3} >= 0.9 (projection gap)"))
    });
    suite.run(11, "box refinement stability", Duration::from_secs(1800), || {
        let big = GridSpec::new(32, 32.0, 1.0).unwrap();
        let big_table = table_for(&big, &spec);
        let gamma = table.gamma0_bound.min(big_table.gamma0_bound);
        let r1 = minimize_outer(&SolveConfig::new(grid, spec, gamma), Some(&table)).unwrap();
        let r2 = minimize_outer(&SolveConfig::new(big, spec, gamma), Some(&big_table)).unwrap();
        let (de, dw) = (rel(r2.energy, r1.energy), rel(r2.omega, r1.omega));
        solves.push(r1);
        solves.push(r2);
        outcome(de < 1e-3 && dw < 1e-3, format!("relative change E {de:.2e}, omega {dw:.2e} (< 1e-3), L 16 -> 32 at h = 1"))
    });
    suite.run(7, "multiplier window and sandwich", Duration::from_secs(1), || {
        let rows: Vec<(bool, String)> = solves.iter().map(nonlinear_window).collect();
        let bad: Vec<&String> = rows.iter().filter(|r| !r.0).map(|r| &r.1).collect();
        let detail = match bad.first() {
            Some(b) => format!("violated: {b}"),
            None => format!("{} nonlinear solves inside the window", rows.len()),
        };
        outcome(!rows.is_empty() && bad.is_empty(), detail)
    });
    suite.run(8, "Euler-Lagrange residual", Duration::from_secs(1), || {
        let worst = solves.iter().map(|r| r.residual).fold(0.0, f64::max);
        outcome(!solves.is_empty() && worst <= 1e-6, format!("worst residual {worst:.3e} <= 1e-6 over {} solves", solves.len()))
    });

    println!("{} failure(s)", suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
