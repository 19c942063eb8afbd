//! Outer problem: minimize `E(w) = max_η J(η)` over unit fields in the positive
//! subspace, then read off the multiplier `ω` and the Euler-Lagrange residual.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{check_gamma_admissible, ConstantsTable, CODE_VERSION};
use crate::dirac::{ModeTable, Sign};
use crate::error::{Error, Result};
use crate::field::{l2_norm, random_smooth, GridSpec, Representation, SpinorField, C64};
use crate::maximizer::{real_dot, Decomposition, InnerOptions, InnerSolveResult, Problem, NOISE, SAFE_FRACTION};
use crate::nonlinearity::{Nonlinearity, NonlinearitySpec, Soler};
use crate::verify::CheckResult;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const RESTART_EVERY: usize = 50;
const CRITICAL_PROBES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum SeedSpec {
    /// `w_ε(x) = ε^{3/2} w₁(εx)` with `w₁` a unit Gaussian of width `sigma`.
    Gaussian { epsilon: f64, sigma: f64 },
    #[serde(skip)]
    Explicit(Box<SpinorField>),
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Gaussian { epsilon: 0.5, sigma: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub grid: GridSpec,
    pub nonlinearity: NonlinearitySpec,
    pub gamma: f64,
    pub lambda: f64,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub residual_target: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub seed: SeedSpec,
}

impl SolveConfig {
    pub fn new(grid: GridSpec, nonlinearity: NonlinearitySpec, gamma: f64) -> Self {
        SolveConfig {
            grid,
            nonlinearity,
            gamma,
            lambda: 1.0,
            tol_inner: 1e-10,
            tol_outer: 1e-8,
            residual_target: 1e-6,
            max_outer_iterations: 5000,
            max_inner_iterations: 500,
            seed: SeedSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.nonlinearity.validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must lie in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if !(self.tol_inner > 0.0 && self.tol_outer > 0.0 && self.residual_target > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return bad("iteration caps must be positive");
        }
        match &self.seed {
            SeedSpec::Gaussian { epsilon, sigma } if !(*epsilon > 0.0 && *sigma > 0.0) => {
                bad("seed epsilon and sigma must be positive")
            }
            SeedSpec::Explicit(f) if f.grid() != &self.grid => Err(Error::GridMismatch),
            _ => Ok(()),
        }
    }

    pub fn outer_options(&self) -> OuterOptions {
        OuterOptions {
            tol_outer: self.tol_outer,
            tol_inner: self.tol_inner,
            max_iterations: self.max_outer_iterations,
            max_inner_iterations: self.max_inner_iterations,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OuterOptions {
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_iterations: usize,
    pub max_inner_iterations: usize,
}

impl Default for OuterOptions {
    fn default() -> Self {
        OuterOptions { tol_outer: 1e-8, tol_inner: 1e-10, max_iterations: 5000, max_inner_iterations: 500 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterTraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub inner_iterations: usize,
    pub restart: bool,
}

pub fn write_outer_trace(rows: &[OuterTraceRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "iteration,E,grad_norm,step,inner_iterations,restart")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.17e},{:.6e},{:.6e},{},{}",
            r.iteration, r.energy, r.grad_norm, r.step, r.inner_iterations, r.restart as u8
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InnerStats {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub boundary_projections: usize,
}

impl InnerStats {
    fn record(&mut self, r: &InnerSolveResult) {
        self.solves += 1;
        self.total_iterations += r.iterations;
        self.max_iterations = self.max_iterations.max(r.iterations);
        self.boundary_projections += r.boundary_projections;
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OuterStats {
    pub iterations: usize,
    pub restarts: usize,
    pub energy_evaluations: usize,
    pub grad_norm: f64,
}

/// An outer iterate together with everything the inner solve produced for it.
#[derive(Clone, Debug)]
pub struct OuterPoint {
    pub w: SpinorField,
    pub w_h_sq: f64,
    pub inner: InnerSolveResult,
    pub energy: f64,
    pub omega: f64,
    /// Tangent gradient in frequency representation.
    pub grad: SpinorField,
}

impl OuterPoint {
    pub fn decomposition(&self, lambda: f64) -> Decomposition {
        Decomposition { lambda, w: self.w.clone(), eta: self.inner.eta_star.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct OuterResult {
    pub point: OuterPoint,
    pub trace: Vec<OuterTraceRow>,
    pub inner_stats: InnerStats,
    pub outer_stats: OuterStats,
}

fn freq(u: &SpinorField) -> SpinorField {
    u.in_representation(Representation::Frequency)
}

impl<N: Nonlinearity> Problem<N> {
    fn check_sphere(&self, w: &SpinorField) -> Result<SpinorField> {
        if w.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        let w = freq(w);
        if (l2_norm(&w) - 1.0).abs() > 1e-10 || l2_norm(&self.modes.project(&w, Sign::Minus)) > 1e-10 {
            return Err(Error::InvalidParameter("w must be a unit field in the positive subspace".into()));
        }
        Ok(w)
    }

    /// `E(w)` and the inner maximizer behind it.
    pub fn eval_e(&self, w: &SpinorField, lambda: f64, opts: &InnerOptions) -> Result<(f64, InnerSolveResult)> {
        let w = self.check_sphere(w)?;
        let r = self.maximize_inner(&w, lambda, opts)?;
        Ok((r.j_value, r))
    }

    /// `ω = a⁻¹ dI(ψ)[w] = ‖w‖²_H − γ Re∫⟨∇F(ψ), w⟩ / a`.
    pub fn compute_omega(&self, dec: &Decomposition) -> Result<f64> {
        let a = dec.amplitude();
        if a < 1e-8 {
            return Err(Error::DegenerateAmplitude(a));
        }
        let w_h = self.h_sq(&dec.w);
        let (_, _, grad_f) = self.pointwise(&dec.psi());
        Ok(w_h - self.gamma * real_dot(&grad_f, &dec.w, None) / a)
    }

    /// `(G, ω)` with `G = a²(|D| − ω)w − aγΛ₊∇F(ψ)`, tangent to the sphere at `w`.
    fn outer_gradient(&self, w: &SpinorField, w_h_sq: f64, r: &InnerSolveResult) -> (SpinorField, f64) {
        let st = &r.state;
        let a = st.a;
        let omega = w_h_sq - self.gamma * st.c_w / a;
        let mut g = st.grad_f.scaled(-self.gamma * a);
        self.modes.project_frequency(&mut g, Sign::Plus);
        let cells = self.grid().cells();
        let (wd, e) = (w.data(), &self.modes.energy);
        for (i, z) in g.data_mut().iter_mut().enumerate() {
            *z += wd[i] * (a * a * (e[i % cells] - omega));
        }
        (g, omega)
    }

    pub fn grad_e_tangent(&self, w: &SpinorField, lambda: f64, opts: &InnerOptions) -> Result<SpinorField> {
        let w = self.check_sphere(w)?;
        let r = self.maximize_inner(&w, lambda, opts)?;
        let w_h = self.h_sq(&w);
        Ok(self.outer_gradient(&w, w_h, &r).0)
    }

    /// `‖Hψ − ωψ − γ∇F(ψ)‖_{H^{-1/2}} / ‖ψ‖_H`.
    pub fn residual_euler_lagrange(&self, psi: &SpinorField, omega: f64) -> f64 {
        let psi = freq(psi);
        let (_, _, grad_f) = self.pointwise(&psi);
        let r = self.modes.apply_dirac(&psi).axpy(-omega, &psi).expect("same grid").axpy(-self.gamma, &grad_f).expect("same grid");
        let inv: Vec<f64> = self.modes.energy.iter().map(|e| 1.0 / e).collect();
        real_dot(&r, &r, Some(&inv)).sqrt() / self.h_sq(&psi).sqrt()
    }

    fn outer_point(&self, w: SpinorField, lambda: f64, warm: Option<&SpinorField>, opts: &InnerOptions) -> Result<OuterPoint> {
        let mut o = opts.clone();
        o.start = warm.filter(|s| real_dot(s, s, None) <= SAFE_FRACTION * lambda).cloned();
        let inner = self.maximize_inner(&w, lambda, &o)?;
        let w_h_sq = self.h_sq(&w);
        let (grad, omega) = self.outer_gradient(&w, w_h_sq, &inner);
        Ok(OuterPoint { energy: inner.j_value, w, w_h_sq, inner, omega, grad })
    }

    /// `E(new) − E(old)` from field differences.
    fn delta_e(&self, old: &OuterPoint, new: &OuterPoint, lambda: f64) -> f64 {
        let (o, n) = (&old.inner.state, &new.inner.state);
        let e = &self.modes.energy;
        let dw = new.w.sub(&old.w).expect("same grid");
        let sw = new.w.add(&old.w).expect("same grid");
        let d_wh = real_dot(&dw, &sw, Some(e));
        let de = n.eta.sub(&o.eta).expect("same grid");
        let se = n.eta.add(&o.eta).expect("same grid");
        let d_el2 = real_dot(&de, &se, None);
        let d_eh = real_dot(&de, &se, Some(e));
        let d_f: f64 = n.f_values.iter().zip(&o.f_values).map(|(a, b)| a - b).sum::<f64>() * self.grid().cell_volume();
        0.5 * lambda * d_wh - 0.5 * (n.eta_l2_sq * d_wh + old.w_h_sq * d_el2) - 0.5 * d_eh - self.gamma * d_f
    }

    fn retract(&self, w: &SpinorField, d: &SpinorField, t: f64) -> SpinorField {
        let mut u = w.axpy(-t, d).expect("same grid");
        self.modes.project_frequency(&mut u, Sign::Plus);
        let n = l2_norm(&u);
        u.scaled(1.0 / n)
    }

    fn outer_dual_norm(&self, g: &SpinorField) -> f64 {
        let inv: Vec<f64> = self.modes.energy.iter().map(|e| 1.0 / e).collect();
        real_dot(g, g, Some(&inv)).sqrt()
    }

    /// Preconditioned nonlinear conjugate gradients on the sphere, starting at `w0`.
    pub fn minimize(&self, w0: &SpinorField, lambda: f64, opts: &OuterOptions) -> Result<OuterResult> {
        let w0 = self.check_sphere(w0)?;
        let inv: Vec<f64> = self.modes.energy.iter().map(|e| 1.0 / e).collect();
        let mut inner_opts = InnerOptions { tol: opts.tol_inner, max_iterations: opts.max_inner_iterations, ..Default::default() };
        let mut stats = InnerStats::default();
        let mut ostats = OuterStats::default();
        let mut cur = self.outer_point(w0, lambda, None, &inner_opts)?;
        stats.record(&cur.inner);
        ostats.energy_evaluations += 1;
        let mut trace = Vec::new();
        let mut prev: Option<(SpinorField, SpinorField, f64)> = None; // (direction, preconditioned gradient, ⟨G,PG⟩)
        let mut t0 = 1.0;
        let mut step = 0.0;
        let mut since_restart = 0;
        for it in 0..=opts.max_iterations {
            let pg = self.tangent(&cur.w, cur.grad.mode_multiplied(&inv));
            let gpg = real_dot(&cur.grad, &pg, None);
            let gn = self.outer_dual_norm(&cur.grad);
            ostats.grad_norm = gn;
            let mut restart = prev.is_none() || since_restart >= RESTART_EVERY;
            let mut d = pg.clone();
            if !restart {
                let (d_old, pg_old, gpg_old) = prev.as_ref().expect("checked");
                let beta = (real_dot(&cur.grad, &pg.sub(pg_old).expect("same grid"), None) / gpg_old).max(0.0);
                d = pg.axpy(beta, &self.tangent(&cur.w, d_old.clone())).expect("same grid");
                if real_dot(&cur.grad, &d, None) <= 1e-3 * gpg.max(0.0) {
                    d = pg.clone();
                    restart = true;
                }
            }
            trace.push(OuterTraceRow {
                iteration: it,
                energy: cur.energy,
                grad_norm: gn,
                step,
                inner_iterations: cur.inner.iterations,
                restart,
            });
            if gn <= opts.tol_outer {
                ostats.iterations = it;
                return Ok(OuterResult { point: cur, trace, inner_stats: stats, outer_stats: ostats });
            }
            if it == opts.max_iterations {
                break;
            }
            if restart {
                ostats.restarts += 1;
                since_restart = 0;
            }
            since_restart += 1;
            inner_opts.tol = opts.tol_inner.min(1e-2 * gn).max(1e-13);
            let slope = real_dot(&cur.grad, &d, None);
            let (next, t, evals) = self.line_search(&cur, &d, slope, t0, lambda, &inner_opts, &mut stats)?;
            ostats.energy_evaluations += evals;
            step = t;
            t0 = t;
            prev = Some((d, pg, gpg));
            cur = next;
        }
        Err(Error::IterationCap { stage: "outer", cap: opts.max_iterations, grad_norm: ostats.grad_norm })
    }

    /// L² projection onto the tangent space of the sphere at `w`.
    fn tangent(&self, w: &SpinorField, v: SpinorField) -> SpinorField {
        let c = real_dot(w, &v, None);
        v.axpy(-c, w).expect("same grid")
    }

    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        cur: &OuterPoint,
        d: &SpinorField,
        slope: f64,
        t0: f64,
        lambda: f64,
        opts: &InnerOptions,
        stats: &mut InnerStats,
    ) -> Result<(OuterPoint, f64, usize)> {
        let warm = Some(&cur.inner.eta_star);
        let mut t = t0;
        let mut evals = 0;
        let st = &cur.inner.state;
        let scale = 0.5 * lambda * cur.w_h_sq + 0.5 * st.eta_h_sq + self.gamma * st.f_integral.abs();
        let d_sq = real_dot(d, d, None);
        for _ in 0..MAX_BACKTRACKS {
            let cand = self.outer_point(self.retract(&cur.w, d, t), lambda, warm, opts)?;
            stats.record(&cand.inner);
            evals += 1;
            let de = self.delta_e(cur, &cand, lambda);
            let curv = 2.0 * (de + slope * t) / (t * t);
            let mut ok = de <= -ARMIJO_C * t * slope;
            if !ok && de.abs() <= NOISE * scale {
                // derivative of E along the retraction curve
                let dphi = -real_dot(&cand.grad, d, None) / (1.0 + t * t * d_sq).sqrt();
                ok = dphi <= (1.0 - 2.0 * ARMIJO_C) * slope;
            }
            if ok {
                // the quadratic model may put the minimum well beyond t
                if curv > 0.0 && slope / curv > 1.5 * t {
                    let ts = (slope / curv).min(4.0 * t);
                    let far = self.outer_point(self.retract(&cur.w, d, ts), lambda, warm, opts)?;
                    stats.record(&far.inner);
                    evals += 1;
                    if self.delta_e(cur, &far, lambda) < de {
                        return Ok((far, ts, evals));
                    }
                }
                return Ok((cand, t, evals));
            }
            t = if curv > 0.0 { (slope / curv).clamp(0.1 * t, 0.5 * t) } else { 0.5 * t };
        }
        Err(Error::LineSearch { stage: "outer", backtracks: MAX_BACKTRACKS })
    }
}

/// The normalized Gaussian seed before and after projection onto the positive subspace.
#[derive(Clone, Debug)]
pub struct SeedField {
    pub epsilon: f64,
    pub w_eps: SpinorField,
    pub phi_eps: SpinorField,
    pub projection_norm: f64,
}

/// `φ_ε = Λ₊w_ε / ‖Λ₊w_ε‖` with `w_ε = (ε^{3/2}w₁(εx), 0, 0, 0)`, normalized on the grid.
pub fn seed_w_epsilon(grid: &GridSpec, epsilon: f64, sigma: f64) -> Result<SeedField> {
    grid.validate()?;
    if !(epsilon > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidParameter("epsilon and sigma must be positive".into()));
    }
    let norm = (std::f64::consts::PI * sigma * sigma).powf(-0.75);
    let raw = SpinorField::from_position_fn(*grid, |x| {
        let r2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) * epsilon * epsilon;
        let v = epsilon.powf(1.5) * norm * (-r2 / (2.0 * sigma * sigma)).exp();
        [C64::new(v, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
    });
    let w_eps = freq(&raw);
    let w_eps = w_eps.scaled(1.0 / l2_norm(&w_eps));
    let modes = ModeTable::new(*grid);
    let mut phi = w_eps.clone();
    modes.project_frequency(&mut phi, Sign::Plus);
    let projection_norm = l2_norm(&phi);
    if projection_norm <= 0.5 {
        return Err(Error::SeedTooWide(projection_norm));
    }
    Ok(SeedField { epsilon, w_eps, phi_eps: phi.scaled(1.0 / projection_norm), projection_norm })
}

/// Rotates the phase so the largest Fourier coefficient is real and positive; returns the phase factor applied.
pub fn gauge_phase(psi: &SpinorField) -> C64 {
    let f = freq(psi);
    let big = f.data().iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())).unwrap_or(C64::new(1.0, 0.0));
    if big.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        big.conj() / big.norm()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub energy: f64,
    pub omega: f64,
    pub residual: f64,
    pub residual_target: f64,
    pub omega_bounds: Option<(f64, f64)>,
    pub gamma: f64,
    pub lambda: f64,
    pub mass: f64,
    pub psi_l2_sq: f64,
    pub psi_h_sq: f64,
    pub w_h_sq: f64,
    pub eta_l2_sq: f64,
    pub amplitude: f64,
    /// `I(ψ)` recomputed directly from `ψ`.
    pub action: f64,
    pub f_integral: f64,
    pub inner_stats: InnerStats,
    pub outer_stats: OuterStats,
    pub checks: Vec<CheckResult>,
    pub grid_fingerprint: String,
    pub constants_hash: Option<String>,
    pub constants: Option<ConstantsTable>,
    pub code_version: String,
    #[serde(skip)]
    pub psi: SpinorField,
    #[serde(skip)]
    pub w: SpinorField,
    #[serde(skip)]
    pub eta: SpinorField,
    #[serde(skip)]
    pub trace: Vec<OuterTraceRow>,
}

impl SolveReport {
    pub fn failed_checks(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| c.failed()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn initial_w(cfg: &SolveConfig) -> Result<SpinorField> {
    match &cfg.seed {
        SeedSpec::Gaussian { epsilon, sigma } => Ok(seed_w_epsilon(&cfg.grid, *epsilon, *sigma)?.phi_eps),
        SeedSpec::Explicit(f) => {
            let modes = ModeTable::new(cfg.grid);
            let mut w = freq(f);
            modes.project_frequency(&mut w, Sign::Plus);
            let n = l2_norm(&w);
            if !(n > 0.0) {
                return Err(Error::InvalidParameter("explicit seed has no positive-energy part".into()));
            }
            Ok(w.scaled(1.0 / n))
        }
    }
}

/// Full solve for the Soler nonlinearity. A positive coupling needs a constants
/// table for the same grid and must pass the admissibility test.
pub fn minimize_outer(cfg: &SolveConfig, constants: Option<&ConstantsTable>) -> Result<SolveReport> {
    cfg.validate()?;
    if let Some(t) = constants {
        if t.grid != cfg.grid || t.nonlinearity != cfg.nonlinearity {
            return Err(Error::InvalidParameter("constants table was built for a different grid or nonlinearity".into()));
        }
    }
    if cfg.gamma > 0.0 {
        let t = constants.ok_or_else(|| Error::InvalidParameter("a positive coupling needs a constants table".into()))?;
        let adm = check_gamma_admissible(cfg.gamma, t, t.mu, cfg.nonlinearity.alpha)?;
        if !adm.admissible {
            return Err(Error::InadmissibleCoupling { gamma: cfg.gamma, margin: adm.margin_first.min(adm.margin_second) });
        }
    }
    let problem = Problem::new(cfg.grid, Soler::new(cfg.nonlinearity)?, cfg.gamma)?;
    let w0 = initial_w(cfg)?;
    let res = problem.minimize(&w0, cfg.lambda, &cfg.outer_options())?;
    assemble_report(&problem, cfg, constants, res)
}

fn assemble_report(
    problem: &Problem<Soler>,
    cfg: &SolveConfig,
    constants: Option<&ConstantsTable>,
    res: OuterResult,
) -> Result<SolveReport> {
    let OuterResult { point, trace, inner_stats, outer_stats } = res;
    let (gamma, lambda, m) = (cfg.gamma, cfg.lambda, cfg.grid.mass);
    let st = &point.inner.state;
    let phase = gauge_phase(&st.psi);
    let psi = st.psi.scaled_complex(phase);
    let w = point.w.scaled_complex(phase);
    let eta = st.eta.scaled_complex(phase);
    let omega = point.omega;
    let energy = point.energy;
    let residual = problem.residual_euler_lagrange(&psi, omega);
    let psi_l2_sq = real_dot(&psi, &psi, None);
    let psi_h_sq = problem.h_sq(&psi);
    let action = problem.eval_i(&psi);
    let w_h = point.w_h_sq;

    if gamma > 0.0 && !(omega > 0.0 && omega < m) {
        return Err(Error::MultiplierOutOfWindow { omega, mass: m });
    }

    let mut checks = Vec::new();
    let tag = |c: CheckResult| c.with_input("gamma", gamma).with_input("lambda", lambda);
    checks.push(tag(CheckResult::le("normalization", (psi_l2_sq - lambda).abs(), 0.0, 1e-10)));
    checks.push(tag(CheckResult::le("euler_lagrange_residual", residual, cfg.residual_target, 0.0)));
    let monotone = trace.windows(2).map(|p| p[1].energy - p[0].energy).fold(f64::NEG_INFINITY, f64::max);
    checks.push(tag(CheckResult::le("monotone_descent", monotone.max(-1.0), 0.0, 1e-12 * energy.abs().max(1.0))));

    let window = CheckResult::lt("multiplier_window", omega, m, 0.0).with_input("omega", omega);
    let deficit = CheckResult::lt("energy_deficit", energy, 0.5 * lambda * m, 0.0);
    let upper = CheckResult::le("multiplier_upper", omega, 2.0 * energy / lambda, 1e-8);
    let mut omega_bounds = None;
    let mut constants_hash = None;
    if gamma > 0.0 {
        checks.push(tag(window));
        checks.push(tag(deficit));
        checks.push(tag(upper));
    } else {
        checks.push(tag(window.inconclusive("equality omega = m in the linear limit")));
        checks.push(tag(deficit.inconclusive("equality E = lambda m / 2 in the linear limit")));
        checks.push(tag(upper.inconclusive("equality in the linear limit")));
    }
    if let Some(t) = constants {
        constants_hash = Some(t.hash());
        let lower = (1.0 - gamma * t.c_alpha_lambda_at(lambda)) * w_h;
        omega_bounds = Some((lower, 2.0 * energy / lambda));
        let c = tag(CheckResult::le("multiplier_lower", lower, omega, 1e-8));
        checks.push(if gamma > 0.0 { c } else { c.inconclusive("equality in the linear limit") });
        let al = cfg.nonlinearity.alpha;
        let (s2, s4) = (t.s("2"), t.s("4/(4-alpha)"));
        let coeff = 1.0 - gamma * (s2 * s2 + 2.0 * (t.mu / al) * lambda.powf((al - 2.0) / 2.0) * s4 * s4);
        checks.push(tag(CheckResult::le("energy_lower", 0.5 * lambda * coeff * w_h, energy, 1e-10)));
        let c = tag(CheckResult::le("energy_upper", energy, 0.5 * lambda * w_h, 1e-10));
        checks.push(if gamma > 0.0 { c } else { c.inconclusive("equality in the linear limit") });
    }
    checks.push(tag(critical_point_probes(problem, &psi, omega, cfg.residual_target)));

    Ok(SolveReport {
        energy,
        omega,
        residual,
        residual_target: cfg.residual_target,
        omega_bounds,
        gamma,
        lambda,
        mass: m,
        psi_l2_sq,
        psi_h_sq,
        w_h_sq: w_h,
        eta_l2_sq: st.eta_l2_sq,
        amplitude: st.a,
        action,
        f_integral: st.f_integral,
        inner_stats,
        outer_stats,
        checks,
        grid_fingerprint: cfg.grid.fingerprint(),
        constants_hash,
        constants: constants.cloned(),
        code_version: CODE_VERSION.into(),
        psi,
        w,
        eta,
        trace,
    })
}

/// Worst `|dI(ψ)[h] − ω Re⟨ψ,h⟩|` over seeded unit probes from both spectral halves.
fn critical_point_probes<N: Nonlinearity>(problem: &Problem<N>, psi: &SpinorField, omega: f64, target: f64) -> CheckResult {
    let psi = freq(psi);
    let (_, _, grad_f) = problem.pointwise(&psi);
    let dpsi = problem.modes.apply_dirac(&psi).axpy(-problem.gamma, &grad_f).expect("same grid");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for sign in [Sign::Plus, Sign::Minus] {
        for _ in 0..CRITICAL_PROBES {
            let mut h = random_smooth(*problem.grid(), &mut rng, 1.0);
            problem.modes.project_frequency(&mut h, sign);
            let h = h.scaled(1.0 / problem.h_sq(&h).sqrt());
            let gap = real_dot(&dpsi, &h, None) - omega * real_dot(&psi, &h, None);
            worst = worst.max(gap.abs());
        }
    }
    let tol = target * problem.h_sq(&psi).sqrt();
    CheckResult::le("critical_point_probes", worst, tol, 0.0).with_input("probes", (2 * CRITICAL_PROBES) as f64)
}
