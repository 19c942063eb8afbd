//! Inner problem: for fixed `w` in the positive unit sphere, maximize
//! `J(η) = I(a(η)w + η)` over `η` in the negative spectral subspace,
//! with `a(η) = √(λ − ‖η‖²)`.
//!
//! All fields are kept in frequency representation; the nonlinearity is
//! evaluated pointwise after one inverse transform of `ψ`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dirac::{ModeTable, Sign};
use crate::error::{Error, Result};
use crate::field::{l2_norm, random_smooth, GridSpec, Representation, SpinorField};
use crate::nonlinearity::Nonlinearity;

/// `Σ_k Re(conj(u_k) v_k) · weight_k` over frequency data.
pub(crate) fn real_dot(u: &SpinorField, v: &SpinorField, weights: Option<&[f64]>) -> f64 {
    let cells = u.grid().cells();
    let (a, b) = (u.data(), v.data());
    let mut acc = 0.0;
    for i in 0..4 * cells {
        let t = a[i].re * b[i].re + a[i].im * b[i].im;
        acc += match weights {
            Some(w) => t * w[i % cells],
            None => t,
        };
    }
    acc
}

fn freq(u: &SpinorField) -> SpinorField {
    u.in_representation(Representation::Frequency)
}

/// A split `ψ = a w + η` of a field with `‖ψ‖² = λ`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub lambda: f64,
    pub w: SpinorField,
    pub eta: SpinorField,
}

impl Decomposition {
    /// Validates `Λ₋w = 0`, `‖w‖ = 1`, `Λ₊η = 0` and `‖η‖² < λ` to `1e-10`.
    pub fn new(w: &SpinorField, eta: &SpinorField, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        if w.grid() != eta.grid() {
            return Err(Error::GridMismatch);
        }
        let modes = ModeTable::new(*w.grid());
        let (w, eta) = (freq(w), freq(eta));
        if (l2_norm(&w) - 1.0).abs() > 1e-10 || l2_norm(&modes.project(&w, Sign::Minus)) > 1e-10 {
            return Err(Error::InvalidParameter("w must be a unit field in the positive subspace".into()));
        }
        if l2_norm(&modes.project(&eta, Sign::Plus)) > 1e-10 * l2_norm(&eta).max(1.0) {
            return Err(Error::InvalidParameter("eta must lie in the negative subspace".into()));
        }
        if l2_norm(&eta).powi(2) >= lambda {
            return Err(Error::InvalidParameter("|eta|^2 must be below lambda".into()));
        }
        Ok(Decomposition { lambda, w, eta })
    }

    pub fn amplitude(&self) -> f64 {
        (self.lambda - l2_norm(&self.eta).powi(2)).max(0.0).sqrt()
    }

    pub fn psi(&self) -> SpinorField {
        self.eta.axpy(self.amplitude(), &self.w).expect("same grid")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InnerTraceRow {
    pub iteration: usize,
    pub j: f64,
    pub grad_norm: f64,
    pub eta_l2_sq: f64,
    pub step: f64,
}

pub fn write_inner_trace(rows: &[InnerTraceRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "iteration,J,grad_norm,eta_l2_sq,step")?;
    for r in rows {
        writeln!(out, "{},{:.17e},{:.6e},{:.6e},{:.6e}", r.iteration, r.j, r.grad_norm, r.eta_l2_sq, r.step)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub start: Option<SpinorField>,
    pub trace: bool,
    /// Random directions used to sample `d²J[ξ,ξ] + ‖ξ‖²_H` at the result (0 disables).
    pub witness_samples: usize,
    pub seed: u64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions { tol: 1e-10, max_iterations: 500, start: None, trace: false, witness_samples: 0, seed: 0 }
    }
}

pub(crate) const SAFE_FRACTION: f64 = 0.49;
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
pub(crate) const NOISE: f64 = 1e-13;

/// Everything derived from one `(w, η)` pair.
#[derive(Clone, Debug)]
pub struct InnerState {
    pub eta: SpinorField,
    pub eta_l2_sq: f64,
    pub eta_h_sq: f64,
    pub a: f64,
    pub psi: SpinorField,
    /// `∇F(ψ)` in frequency representation.
    pub grad_f: SpinorField,
    pub f_values: Vec<f64>,
    pub f_integral: f64,
    /// `Re ∫⟨∇F(ψ), w⟩`
    pub c_w: f64,
    pub j: f64,
}

#[derive(Clone, Debug)]
pub struct InnerSolveResult {
    pub eta_star: SpinorField,
    pub j_value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Worst sampled `d²J[ξ,ξ] + ‖ξ‖²_H` for `‖ξ‖_H = 1`; `None` when not sampled.
    pub concavity_witness: Option<f64>,
    pub boundary_projections: usize,
    /// Fitted per-iteration contraction of the gradient norm.
    pub rate: Option<f64>,
    pub trace: Vec<InnerTraceRow>,
    pub state: InnerState,
}

/// Grid operators, nonlinearity and coupling shared by the inner and outer problems.
#[derive(Clone, Debug)]
pub struct Problem<N> {
    pub modes: ModeTable,
    pub nonlinearity: N,
    pub gamma: f64,
}

impl<N: Nonlinearity> Problem<N> {
    pub fn new(grid: GridSpec, nonlinearity: N, gamma: f64) -> Result<Self> {
        grid.validate()?;
        if !(gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(Problem { modes: ModeTable::new(grid), nonlinearity, gamma })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.modes.grid
    }

    pub fn h_sq(&self, u: &SpinorField) -> f64 {
        real_dot(u, u, Some(&self.modes.energy))
    }

    /// `(F values, ∫F, ∇F in frequency)` for `ψ` given in frequency representation.
    pub(crate) fn pointwise(&self, psi: &SpinorField) -> (Vec<f64>, f64, SpinorField) {
        let g = *self.grid();
        let pos = psi.in_representation(Representation::Position);
        let mut grad = SpinorField::zeros(g, Representation::Position);
        let mut values = Vec::with_capacity(g.cells());
        let mut total = 0.0;
        for i in 0..g.cells() {
            let s = pos.at(i);
            let v = self.nonlinearity.value(&s);
            total += v;
            values.push(v);
            grad.set(i, self.nonlinearity.gradient(&s));
        }
        (values, total * g.cell_volume(), grad.into_representation(Representation::Frequency))
    }

    /// `½‖Λ₊ψ‖²_H − ½‖Λ₋ψ‖²_H − γ∫F(ψ)`.
    pub fn eval_i(&self, psi: &SpinorField) -> f64 {
        let p = freq(psi);
        let plus = self.modes.project(&p, Sign::Plus);
        let minus = self.modes.project(&p, Sign::Minus);
        let (_, f, _) = self.pointwise(&p);
        0.5 * self.h_sq(&plus) - 0.5 * self.h_sq(&minus) - self.gamma * f
    }

    pub fn state(&self, w: &SpinorField, w_h_sq: f64, eta: SpinorField, lambda: f64) -> Result<InnerState> {
        let eta_l2_sq = real_dot(&eta, &eta, None);
        let a2 = lambda - eta_l2_sq;
        if !(a2 > 1e-16) {
            return Err(Error::DegenerateAmplitude(a2.max(0.0).sqrt()));
        }
        let a = a2.sqrt();
        let eta_h_sq = self.h_sq(&eta);
        let psi = eta.axpy(a, w)?;
        let (f_values, f_integral, grad_f) = self.pointwise(&psi);
        let c_w = real_dot(&grad_f, w, None);
        let j = 0.5 * a2 * w_h_sq - 0.5 * eta_h_sq - self.gamma * f_integral;
        Ok(InnerState { eta, eta_l2_sq, eta_h_sq, a, psi, grad_f, f_values, f_integral, c_w, j })
    }

    pub fn eval_j(&self, dec: &Decomposition) -> Result<f64> {
        let w_h = self.h_sq(&dec.w);
        Ok(self.state(&dec.w, w_h, dec.eta.clone(), dec.lambda)?.j)
    }

    /// L²-Riesz gradient of `J` at a state, in frequency form and in the negative subspace.
    fn gradient(&self, st: &InnerState, w_h_sq: f64) -> Result<SpinorField> {
        if st.a < 1e-8 {
            return Err(Error::DegenerateAmplitude(st.a));
        }
        let mut gf = st.grad_f.scaled(-self.gamma);
        self.modes.project_frequency(&mut gf, Sign::Minus);
        let shift = self.gamma * st.c_w / st.a - w_h_sq;
        let mut g = gf;
        let cells = self.grid().cells();
        let (eta, e) = (st.eta.data(), &self.modes.energy);
        for (i, z) in g.data_mut().iter_mut().enumerate() {
            *z += eta[i] * (shift - e[i % cells]);
        }
        Ok(g)
    }

    pub fn grad_j(&self, dec: &Decomposition) -> Result<SpinorField> {
        let w_h = self.h_sq(&dec.w);
        let st = self.state(&dec.w, w_h, dec.eta.clone(), dec.lambda)?;
        self.gradient(&st, w_h)
    }

    /// `d²J(η)[ξ,ξ]` for `ξ` in the negative subspace.
    pub fn hess_j_quadform(&self, dec: &Decomposition, xi: &SpinorField) -> Result<f64> {
        let w_h = self.h_sq(&dec.w);
        let st = self.state(&dec.w, w_h, dec.eta.clone(), dec.lambda)?;
        self.hess_at(&st, &dec.w, w_h, dec.lambda, &freq(xi))
    }

    fn hess_at(&self, st: &InnerState, w: &SpinorField, w_h_sq: f64, lambda: f64, xi: &SpinorField) -> Result<f64> {
        if st.a < 1e-8 {
            return Err(Error::DegenerateAmplitude(st.a));
        }
        let xi_l2 = real_dot(xi, xi, None);
        let xi_h = self.h_sq(xi);
        let eta_xi = real_dot(&st.eta, xi, None);
        let da = -eta_xi / st.a;
        let d2a = -(xi_l2 + eta_xi * eta_xi / (lambda - st.eta_l2_sq)) / st.a;
        let h = xi.axpy(da, w)?.into_representation(Representation::Position);
        let psi = st.psi.in_representation(Representation::Position);
        let g = *self.grid();
        let mut curv = 0.0;
        for i in 0..g.cells() {
            let hv = h.at(i);
            let d = self.nonlinearity.hessian_vec(&psi.at(i), &hv)?;
            curv += crate::field::spinor_dot(&d, &hv).re;
        }
        curv *= g.cell_volume();
        Ok(-xi_l2 * w_h_sq - xi_h - self.gamma * curv - self.gamma * d2a * st.c_w)
    }

    fn dual_norm(&self, g: &SpinorField) -> f64 {
        let inv: Vec<f64> = self.modes.energy.iter().map(|e| 1.0 / e).collect();
        real_dot(g, g, Some(&inv)).sqrt()
    }

    /// Sum of term magnitudes in `J`, the reference for roundoff in differences.
    fn scale(&self, st: &InnerState, w_h_sq: f64) -> f64 {
        0.5 * st.a * st.a * w_h_sq + 0.5 * st.eta_h_sq + self.gamma * st.f_integral.abs()
    }

    /// Exact `J(new) − J(old)` assembled from differences, free of cancellation in `J` itself.
    fn delta_j(&self, old: &InnerState, new: &InnerState, w_h_sq: f64) -> f64 {
        let diff = new.eta.sub(&old.eta).expect("same grid");
        let sum = new.eta.add(&old.eta).expect("same grid");
        let d_l2 = real_dot(&diff, &sum, None);
        let d_h = real_dot(&diff, &sum, Some(&self.modes.energy));
        let d_f: f64 = new.f_values.iter().zip(&old.f_values).map(|(a, b)| a - b).sum::<f64>()
            * self.grid().cell_volume();
        -0.5 * w_h_sq * d_l2 - 0.5 * d_h - self.gamma * d_f
    }

    /// Preconditioned ascent from `opts.start` (default `η = 0`).
    pub fn maximize_inner(&self, w: &SpinorField, lambda: f64, opts: &InnerOptions) -> Result<InnerSolveResult> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        let w = freq(w);
        let w_h = self.h_sq(&w);
        let start = match &opts.start {
            Some(s) => {
                let s = freq(s);
                if real_dot(&s, &s, None) > SAFE_FRACTION * lambda {
                    return Err(Error::InvalidParameter("start lies outside the safe region".into()));
                }
                s
            }
            None => SpinorField::zeros(*self.grid(), Representation::Frequency),
        };
        let precond: Vec<f64> = self.modes.energy.iter().map(|e| 1.0 / (w_h + e)).collect();
        let mut st = self.state(&w, w_h, start, lambda)?;
        let mut trace = Vec::new();
        let mut norms = Vec::new();
        let mut projections = 0;
        let mut step = 0.0;
        for it in 0..=opts.max_iterations {
            let g = self.gradient(&st, w_h)?;
            let gn = self.dual_norm(&g);
            norms.push(gn);
            if opts.trace {
                trace.push(InnerTraceRow { iteration: it, j: st.j, grad_norm: gn, eta_l2_sq: st.eta_l2_sq, step });
            }
            if gn <= opts.tol {
                if st.eta_l2_sq >= SAFE_FRACTION * lambda * (1.0 - 1e-12) && projections > 0 {
                    return Err(Error::BoundaryViolation(projections));
                }
                let concavity_witness = self.witness(&st, &w, w_h, lambda, opts)?;
                return Ok(InnerSolveResult {
                    eta_star: st.eta.clone(),
                    j_value: st.j,
                    grad_norm: gn,
                    iterations: it,
                    concavity_witness,
                    boundary_projections: projections,
                    rate: fitted_rate(&norms),
                    trace,
                    state: st,
                });
            }
            if it == opts.max_iterations {
                break;
            }
            let d = g.mode_multiplied(&precond);
            let slope = real_dot(&g, &d, None);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let mut trial = st.eta.axpy(t, &d)?;
                let n2 = real_dot(&trial, &trial, None);
                if n2 > SAFE_FRACTION * lambda {
                    trial = trial.scaled((SAFE_FRACTION * lambda / n2).sqrt());
                    projections += 1;
                }
                let cand = self.state(&w, w_h, trial, lambda)?;
                let dj = self.delta_j(&st, &cand, w_h);
                if dj >= ARMIJO_C * t * slope {
                    accepted = Some(cand);
                    break;
                }
                // Near convergence ΔJ drowns in roundoff; fall back to the derivative along the line.
                if dj.abs() <= NOISE * self.scale(&st, w_h) && cand.eta_l2_sq < SAFE_FRACTION * lambda {
                    let dphi = real_dot(&self.gradient(&cand, w_h)?, &d, None);
                    if dphi >= -(1.0 - 2.0 * ARMIJO_C) * slope && dphi < slope {
                        accepted = Some(cand);
                        break;
                    }
                }
                t *= SHRINK;
            }
            match accepted {
                Some(c) => {
                    st = c;
                    step = t;
                }
                None => return Err(Error::LineSearch { stage: "inner", backtracks: MAX_BACKTRACKS }),
            }
        }
        Err(Error::IterationCap { stage: "inner", cap: opts.max_iterations, grad_norm: *norms.last().unwrap() })
    }

    fn witness(
        &self,
        st: &InnerState,
        w: &SpinorField,
        w_h: f64,
        lambda: f64,
        opts: &InnerOptions,
    ) -> Result<Option<f64>> {
        if opts.witness_samples == 0 {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut worst: Option<f64> = None;
        for _ in 0..opts.witness_samples {
            let mut xi = random_smooth(*self.grid(), &mut rng, 1.0);
            self.modes.project_frequency(&mut xi, Sign::Minus);
            let xi = xi.scaled(1.0 / self.h_sq(&xi).sqrt());
            match self.hess_at(st, w, w_h, lambda, &xi) {
                Ok(v) => worst = Some(worst.map_or(v + 1.0, |x: f64| x.max(v + 1.0))),
                Err(Error::SingularHessian) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(worst)
    }
}

/// Geometric rate from a log-linear fit of the gradient norms (needs three points above roundoff).
fn fitted_rate(norms: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > 1e-15)
        .map(|(i, n)| (i as f64, n.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

/// Random unit field in the positive subspace.
pub fn random_positive_unit(modes: &ModeTable, rng: &mut impl rand::Rng, width: f64) -> SpinorField {
    let mut w = random_smooth(modes.grid, rng, width);
    modes.project_frequency(&mut w, Sign::Plus);
    let n = l2_norm(&w);
    w.scaled(1.0 / n)
}

/// Random field in the negative subspace with `‖η‖² = target`.
pub fn random_negative(modes: &ModeTable, rng: &mut impl rand::Rng, width: f64, target_l2_sq: f64) -> SpinorField {
    let mut e = random_smooth(modes.grid, rng, width);
    modes.project_frequency(&mut e, Sign::Minus);
    let n = l2_norm(&e);
    e.scaled(target_l2_sq.sqrt() / n)
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<InnerSolveResult>();
    check::<Problem<crate::nonlinearity::Soler>>();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::dirac_quadratic_form;
    use crate::field::{h_half_norm, GridSpec};
    use crate::nonlinearity::{integral_f, NonlinearitySpec, Soler};
    use rand::Rng;

    fn problem(gamma: f64, a: f64) -> Problem<Soler> {
        let g = GridSpec::new(8, 6.0, 1.0).unwrap();
        let f = Soler::new(NonlinearitySpec { a, ..Default::default() }).unwrap();
        Problem::new(g, f, gamma).unwrap()
    }

    fn sample(p: &Problem<Soler>, seed: u64, eta_frac: f64) -> Decomposition {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_positive_unit(&p.modes, &mut rng, 1.0);
        let eta = random_negative(&p.modes, &mut rng, 1.0, eta_frac);
        Decomposition::new(&w, &eta, 1.0).unwrap()
    }

    #[test]
    fn eval_i_examples() {
        let p = problem(0.3, 1.0);
        let zero = SpinorField::zeros(*p.grid(), Representation::Frequency);
        assert_eq!(p.eval_i(&zero), 0.0);
        let lin = problem(0.0, 1.0);
        let d = sample(&lin, 1, 0.1);
        assert!((lin.eval_i(&d.w) - 0.5 * h_half_norm(&d.w).powi(2)).abs() < 1e-12);
        for seed in 0..5 {
            let d = sample(&p, seed, 0.2);
            let psi = d.psi();
            let other = 0.5 * dirac_quadratic_form(&psi) - 0.3 * integral_f(&psi, &p.nonlinearity);
            assert!((p.eval_i(&psi) - other).abs() < 1e-10);
            assert!((p.eval_j(&d).unwrap() - p.eval_i(&psi)).abs() < 1e-10);
            assert!((l2_norm(&psi).powi(2) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eval_j_at_zero_eta() {
        let p = problem(0.3, 1.0);
        let d = sample(&p, 3, 0.0);
        let w_h = h_half_norm(&d.w).powi(2);
        let expect = 0.5 * w_h - 0.3 * integral_f(&d.w, &p.nonlinearity);
        assert!((p.eval_j(&d).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn decomposition_validation() {
        let p = problem(0.0, 1.0);
        let d = sample(&p, 2, 0.3);
        assert!(Decomposition::new(&d.eta, &d.eta, 1.0).is_err());
        assert!(Decomposition::new(&d.w, &d.w.scaled(0.1), 1.0).is_err());
        assert!(Decomposition::new(&d.w, &d.eta.scaled(2.0), 1.0).is_err());
        assert!(Decomposition::new(&d.w, &d.eta, 1.5).is_err());
    }

    #[test]
    fn linear_case() {
        let p = problem(0.0, 1.0);
        let d = sample(&p, 4, 0.0);
        assert!(l2_norm(&p.grad_j(&d).unwrap()) < 1e-14);
        let r = p.maximize_inner(&d.w, 1.0, &InnerOptions::default()).unwrap();
        assert!(l2_norm(&r.eta_star) < 1e-14);
        assert!((r.j_value - 0.5 * h_half_norm(&d.w).powi(2)).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xi = random_negative(&p.modes, &mut rng, 1.0, 0.3);
        let q = p.hess_j_quadform(&d, &xi).unwrap();
        let expect = -0.3 * h_half_norm(&d.w).powi(2) - h_half_norm(&xi).powi(2);
        assert!((q - expect).abs() < 1e-12);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        // strong coupling so the nonlinear terms dominate the check
        let p = problem(0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..6 {
            let d = sample(&p, seed, 0.2);
            let xi = random_negative(&p.modes, &mut rng, 1.0, 0.05);
            let g = p.grad_j(&d).unwrap();
            assert!(l2_norm(&p.modes.project(&g, Sign::Plus)) < 1e-12 * l2_norm(&g));
            let t = 1e-5;
            let shifted = |s: f64| {
                let e = d.eta.axpy(s, &xi).unwrap();
                p.eval_j(&Decomposition { lambda: 1.0, w: d.w.clone(), eta: e }).unwrap()
            };
            let fd = (shifted(t) - shifted(-t)) / (2.0 * t);
            let an = real_dot(&g, &xi, None);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
            let t = 1e-4;
            let fd2 = (shifted(t) - 2.0 * shifted(0.0) + shifted(-t)) / (t * t);
            let an2 = p.hess_j_quadform(&d, &xi).unwrap();
            assert!((fd2 - an2).abs() <= 1e-5 * an2.abs(), "{fd2} vs {an2}");
        }
    }

    #[test]
    fn inner_solve_properties() {
        // coupling near the admissible range; ∇F is only Hölder across {s = 0}, which limits
        // attainable gradient norms when γa is large
        let p = problem(0.05, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let w = random_positive_unit(&p.modes, &mut rng, 1.0);
            let opts = InnerOptions { trace: true, witness_samples: 5, ..Default::default() };
            let r = p.maximize_inner(&w, 1.0, &opts).unwrap();
            assert!(r.grad_norm <= 1e-10);
            assert!(r.state.eta_l2_sq < 0.5);
            // monotone ascent
            assert!(r.trace.windows(2).all(|x| x[1].j > x[0].j || x[1].grad_norm <= 1e-10));
            if let Some(rate) = r.rate {
                assert!(rate < 1.0);
            }
            assert!(r.concavity_witness.unwrap() <= 1e-8);
            // ‖η*‖²_H ≤ a²‖w‖²_H − 2J
            let w_h = p.h_sq(&w.in_representation(Representation::Frequency));
            let a2 = 1.0 - r.state.eta_l2_sq;
            assert!(r.state.eta_h_sq <= a2 * w_h - 2.0 * r.j_value + 1e-10);
            // J(η*) ≥ J(0) > 0
            let j0 = p.state(&w.in_representation(Representation::Frequency), w_h, SpinorField::zeros(*p.grid(), Representation::Frequency), 1.0).unwrap().j;
            assert!(r.j_value >= j0 && j0 > 0.0);
            // a second start in the safe region reaches the same maximizer
            let frac = rng.random_range(0.05..0.3);
            let start = random_negative(&p.modes, &mut rng, 1.0, frac);
            let r2 = p.maximize_inner(&w, 1.0, &InnerOptions { start: Some(start), ..Default::default() }).unwrap();
            let diff = r.eta_star.sub(&r2.eta_star).unwrap();
            assert!(h_half_norm(&diff) < 1e-7);
        }
        let mut buf = Vec::new();
        write_inner_trace(&[InnerTraceRow { iteration: 0, j: 1.0, grad_norm: 0.1, eta_l2_sq: 0.0, step: 0.0 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
