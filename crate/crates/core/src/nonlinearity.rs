//! Soler-type nonlinearity `F(φ) = a|s|^{α/2} + b|p|^{α/2}` with
//! `s = ⟨φ,βφ⟩` and `p = ⟨φ,γ¹γ²γ³φ⟩`.
//!
//! Gradients follow the real convention `dF(φ)[h] = Re⟨∇F(φ), h⟩`.
//! With `delta_reg > 0` each term becomes `c((x²+δ²)^{α/4} − δ^{α/2})`.

use nalgebra::{SMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{spinor_dot, spinor_norm, Representation, Spinor, SpinorField, C64, ZERO_SPINOR};

/// Pointwise nonlinearity used by the energy functionals.
pub trait Nonlinearity: Sync {
    fn value(&self, phi: &Spinor) -> f64;
    fn gradient(&self, phi: &Spinor) -> Spinor;
    fn hessian_vec(&self, phi: &Spinor, v: &Spinor) -> Result<Spinor>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearitySpec {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub delta_reg: f64,
    pub xi_exponent: f64,
    pub rho: f64,
    pub big_r: f64,
    pub nu: f64,
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        NonlinearitySpec {
            a: 0.01,
            b: 0.0,
            alpha: 2.5,
            delta_reg: 0.0,
            xi_exponent: 4.0,
            rho: 1.0,
            big_r: 1.0,
            nu: 1.375,
        }
    }
}

impl NonlinearitySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 2.0 && self.alpha <= 8.0 / 3.0) {
            return bad(format!("alpha must lie in (2, 8/3], got {}", self.alpha));
        }
        if !(self.a > 0.0) || !(self.b >= 0.0) {
            return bad(format!("need a > 0 and b >= 0, got a = {}, b = {}", self.a, self.b));
        }
        if !(self.nu > self.alpha / 2.0 && self.nu < 1.5) {
            return bad(format!("nu must lie in (alpha/2, 3/2), got {}", self.nu));
        }
        if !(self.delta_reg >= 0.0) || !(self.xi_exponent > 3.0) || !(self.rho > 0.0) || !(self.big_r > 0.0) {
            return bad("need delta_reg >= 0, xi_exponent > 3, rho > 0, R > 0".into());
        }
        Ok(())
    }
}

/// `(s, p)` for one spinor: `s = |φ₀|²+|φ₁|²−|φ₂|²−|φ₃|²`, `p = 2 Im(φ̄₀φ₂ + φ̄₁φ₃)`.
#[inline]
pub fn bilinears(phi: &Spinor) -> (f64, f64) {
    let s = phi[0].norm_sqr() + phi[1].norm_sqr() - phi[2].norm_sqr() - phi[3].norm_sqr();
    let p = 2.0 * (phi[0].conj() * phi[2] + phi[1].conj() * phi[3]).im;
    (s, p)
}

#[inline]
fn beta(phi: &Spinor) -> Spinor {
    [phi[0], phi[1], -phi[2], -phi[3]]
}

/// `γ¹γ²γ³φ = i(−φ_lower, φ_upper)`.
#[inline]
fn gamma123(phi: &Spinor) -> Spinor {
    let i = C64::new(0.0, 1.0);
    [-i * phi[2], -i * phi[3], i * phi[0], i * phi[1]]
}

#[derive(Clone, Copy, Debug)]
pub struct Soler {
    spec: NonlinearitySpec,
}

impl Soler {
    pub fn new(spec: NonlinearitySpec) -> Result<Self> {
        spec.validate()?;
        Ok(Soler { spec })
    }

    /// Skips validation; for degenerate specs in diagnostics.
    pub fn unchecked(spec: NonlinearitySpec) -> Self {
        Soler { spec }
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    fn term(&self, c: f64, x: f64) -> f64 {
        let (al, d) = (self.spec.alpha, self.spec.delta_reg);
        if c == 0.0 {
            0.0
        } else if d == 0.0 {
            c * x.abs().powf(al / 2.0)
        } else {
            c * ((x * x + d * d).powf(al / 4.0) - d.powf(al / 2.0))
        }
    }

    /// Coefficient of `βφ` (resp. `γ¹γ²γ³φ`) in the gradient.
    fn coeff(&self, c: f64, x: f64) -> f64 {
        let (al, d) = (self.spec.alpha, self.spec.delta_reg);
        if c == 0.0 || (x == 0.0 && d == 0.0) {
            0.0
        } else if d == 0.0 {
            c * al * x.abs().powf(al / 2.0 - 1.0) * x.signum()
        } else {
            c * al * x * (x * x + d * d).powf(al / 4.0 - 1.0)
        }
    }

    fn coeff_derivative(&self, c: f64, x: f64) -> f64 {
        let (al, d) = (self.spec.alpha, self.spec.delta_reg);
        if c == 0.0 {
            0.0
        } else if d == 0.0 {
            c * al * (al / 2.0 - 1.0) * x.abs().powf(al / 2.0 - 2.0)
        } else {
            let q = x * x + d * d;
            c * al * q.powf(al / 4.0 - 2.0) * (q + (al / 2.0 - 2.0) * x * x)
        }
    }
}

impl Nonlinearity for Soler {
    #[inline]
    fn value(&self, phi: &Spinor) -> f64 {
        let (s, p) = bilinears(phi);
        self.term(self.spec.a, s) + self.term(self.spec.b, p)
    }

    #[inline]
    fn gradient(&self, phi: &Spinor) -> Spinor {
        let (s, p) = bilinears(phi);
        let ca = self.coeff(self.spec.a, s);
        let cb = self.coeff(self.spec.b, p);
        let (bp, mp) = (beta(phi), gamma123(phi));
        std::array::from_fn(|i| bp[i] * ca + mp[i] * cb)
    }

    fn hessian_vec(&self, phi: &Spinor, v: &Spinor) -> Result<Spinor> {
        let r2 = phi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if r2 == 0.0 {
            return Ok(ZERO_SPINOR);
        }
        let (s, p) = bilinears(phi);
        if self.spec.delta_reg == 0.0 {
            let tiny = 1e-12 * r2;
            if (self.spec.a != 0.0 && s.abs() < tiny) || (self.spec.b != 0.0 && p.abs() < tiny) {
                return Err(Error::SingularHessian);
            }
        }
        let (bp, mp) = (beta(phi), gamma123(phi));
        let (bv, mv) = (beta(v), gamma123(v));
        let ca = self.coeff(self.spec.a, s);
        let cb = self.coeff(self.spec.b, p);
        let da = self.coeff_derivative(self.spec.a, s) * 2.0 * spinor_dot(&bp, v).re;
        let db = self.coeff_derivative(self.spec.b, p) * 2.0 * spinor_dot(&mp, v).re;
        Ok(std::array::from_fn(|i| bv[i] * ca + mv[i] * cb + bp[i] * da + mp[i] * db))
    }
}

/// `∫F(u)` as a cell-weighted sum.
pub fn integral_f<N: Nonlinearity + ?Sized>(u: &SpinorField, f: &N) -> f64 {
    let u = u.in_representation(Representation::Position);
    let g = u.grid();
    (0..g.cells()).map(|i| f.value(&u.at(i))).sum::<f64>() * g.cell_volume()
}

/// Pointwise gradient, returned in position representation.
pub fn grad_f_field<N: Nonlinearity + ?Sized>(u: &SpinorField, f: &N) -> SpinorField {
    let u = u.in_representation(Representation::Position);
    let mut out = SpinorField::zeros(*u.grid(), Representation::Position);
    for i in 0..u.grid().cells() {
        out.set(i, f.gradient(&u.at(i)));
    }
    out
}

pub(crate) fn random_unit_spinor(rng: &mut impl Rng) -> Spinor {
    loop {
        let s: Spinor = std::array::from_fn(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let n = spinor_norm(&s);
        if n > 1e-8 {
            return s.map(|z| z / n);
        }
    }
}

fn scaled(s: &Spinor, r: f64) -> Spinor {
    s.map(|z| z * r)
}

/// Largest absolute eigenvalue of `D²F(φ)` viewed as a real symmetric 8×8 matrix.
pub fn hessian_operator_norm<N: Nonlinearity + ?Sized>(f: &N, phi: &Spinor) -> Result<f64> {
    let mut m = SMatrix::<f64, 8, 8>::zeros();
    for col in 0..8 {
        let mut e = ZERO_SPINOR;
        e[col / 2] = if col % 2 == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 1.0) };
        let h = f.hessian_vec(phi, &e)?;
        for row in 0..8 {
            m[(row, col)] = if row % 2 == 0 { h[row / 2].re } else { h[row / 2].im };
        }
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub samples: usize,
    pub violations: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub spec: NonlinearitySpec,
    pub checks: Vec<HypothesisCheck>,
    /// Smallest sampled shell radius from which the large-field Hessian bound holds; `None` if none does.
    pub smallest_r: Option<f64>,
    /// `(ζ, C_ζ)` fitted for the growth condition with exponent `xi_exponent`.
    pub growth_constants: Vec<(f64, f64)>,
}

impl HypothesisReport {
    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn summarize(name: &str, margins: &[f64], skipped: usize, detail: String) -> HypothesisCheck {
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let violations = margins.iter().filter(|m| **m < 0.0).count();
    let detail = if skipped > 0 { format!("{detail}; {skipped} singular samples skipped") } else { detail };
    HypothesisCheck {
        name: name.into(),
        pass: violations == 0,
        worst_margin: if margins.is_empty() { f64::NAN } else { worst },
        samples: margins.len(),
        violations,
        detail,
    }
}

/// Samples each structural hypothesis H1..H7 and reports margins (negative means violated).
pub fn validate_hypotheses(spec: &NonlinearitySpec, n_samples: usize, seed: u64) -> Result<HypothesisReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    let f = Soler::new(*spec)?;
    let al = spec.alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // H1: ∇F(0) = 0 and D²F → 0 at the origin, probed on a tiny shell.
    let r0 = 1e-10;
    let mut h1 = vec![-spinor_norm(&f.gradient(&ZERO_SPINOR))];
    let mut skipped = 0;
    for _ in 0..n_samples {
        match hessian_operator_norm(&f, &scaled(&random_unit_spinor(&mut rng), r0)) {
            Ok(n) => h1.push(1e-3 - n),
            Err(_) => skipped += 1,
        }
    }
    checks.push(summarize("H1", &h1, skipped, format!("|D2F| < 1e-3 on shell |phi| = {r0:e}")));

    // H2 on shells of growing radius.
    let shells: Vec<f64> = (0..8).map(|k| spec.big_r * 4f64.powi(k)).collect();
    let mut per_shell = Vec::new();
    let mut all = Vec::new();
    let mut skipped = 0;
    for &r in &shells {
        let mut worst = f64::INFINITY;
        for _ in 0..n_samples.div_ceil(shells.len()) {
            let phi = scaled(&random_unit_spinor(&mut rng), r);
            match hessian_operator_norm(&f, &phi) {
                Ok(n) => {
                    let m = r.powf(al - 2.0) - n;
                    worst = worst.min(m);
                    all.push(m);
                }
                Err(_) => skipped += 1,
            }
        }
        per_shell.push((r, worst));
    }
    let mut smallest_r = None;
    for &(r, worst) in per_shell.iter().rev() {
        if worst >= 0.0 {
            smallest_r = Some(r);
        } else {
            break;
        }
    }
    checks.push(summarize(
        "H2",
        &all,
        skipped,
        format!("shells {:?}, smallest passing R {:?}", shells, smallest_r),
    ));

    // H3 Euler inequality, relative margin.
    let h3: Vec<f64> = (0..n_samples)
        .map(|_| {
            let r = 10f64.powf(rng.random_range(-2.0..2.0));
            let phi = scaled(&random_unit_spinor(&mut rng), r);
            let lhs = spinor_dot(&f.gradient(&phi), &phi).re;
            let rhs = al * f.value(&phi);
            let m = (lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE);
            // roundoff-level deficits count as equality
            if m > -1e-12 { m.max(0.0) } else { m }
        })
        .collect();
    checks.push(summarize("H3", &h3, 0, "(<gradF,phi> - alpha F)/(alpha F)".into()));

    // H4 convexity, unit φ and v.
    let mut h4 = Vec::new();
    let mut skipped = 0;
    for _ in 0..n_samples {
        let phi = random_unit_spinor(&mut rng);
        let v = random_unit_spinor(&mut rng);
        match f.hessian_vec(&phi, &v) {
            Ok(h) => h4.push(spinor_dot(&h, &v).re),
            Err(_) => skipped += 1,
        }
    }
    checks.push(summarize("H4", &h4, skipped, "Re<D2F v, v> on unit samples".into()));

    // H5 and H6 inside the ball of radius rho.
    let mut h5 = Vec::new();
    let mut h6 = Vec::new();
    for _ in 0..n_samples {
        let r = spec.rho * rng.random_range(0.0f64..1.0).powf(1.0 / 8.0);
        let phi = scaled(&random_unit_spinor(&mut rng), r);
        let (s, _) = bilinears(&phi);
        h5.push(f.value(&phi) - spec.a * s.abs().powf(al / 2.0));
        h6.push(r.powf(spec.nu) - spinor_norm(&f.gradient(&phi)));
    }
    checks.push(summarize("H5", &h5, 0, format!("F - a|s|^(alpha/2) for |phi| < {}", spec.rho)));
    checks.push(summarize("H6", &h6, 0, format!("|phi|^nu - |gradF|, nu = {}", spec.nu)));

    // H7: fit C_ζ on one sample set, confirm with 10% headroom on a fresh one.
    let xi = spec.xi_exponent;
    let draw = |rng: &mut ChaCha8Rng| {
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        scaled(&random_unit_spinor(rng), r)
    };
    let excess = |phi: &Spinor, zeta: f64| -> (f64, f64) {
        let r = spinor_norm(phi);
        (spinor_norm(&f.gradient(phi)) / r - zeta, f.value(phi).powf(1.0 / xi))
    };
    let mut growth_constants = Vec::new();
    let mut h7 = Vec::new();
    for zeta in [1e-1, 1e-2, 1e-3, 1e-4] {
        let mut c: f64 = 0.0;
        for _ in 0..n_samples {
            let (e, fx) = excess(&draw(&mut rng), zeta);
            if e > 0.0 {
                c = c.max(if fx > 0.0 { e / fx } else { f64::INFINITY });
            }
        }
        growth_constants.push((zeta, c));
        for _ in 0..n_samples {
            let phi = draw(&mut rng);
            let (e, fx) = excess(&phi, zeta);
            h7.push((1.1 * c * fx - e) / (zeta + 1.1 * c * fx));
        }
    }
    checks.push(summarize("H7", &h7, 0, format!("fitted (zeta, C_zeta) {growth_constants:?}, xi = {xi}")));

    Ok(HypothesisReport { spec: *spec, checks, smallest_r, growth_constants })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub mu: f64,
    pub delta: f64,
    pub gamma_bar: f64,
    pub nu: f64,
    pub mu_eps: Vec<(f64, f64)>,
    pub delta_eps: Vec<(f64, f64)>,
    pub scan_resolution: usize,
    pub pair_samples: usize,
    pub warnings: Vec<String>,
}

const EPS_GRID: [f64; 4] = [1.0, 0.5, 0.1, 0.01];

/// `α · max √(a²|σ|^{α−2} + b²|π|^{α−2})` over a polar scan of the unit disk.
fn mu_scan(spec: &NonlinearitySpec, n: usize) -> f64 {
    let e = spec.alpha - 2.0;
    let mut best: f64 = 0.0;
    for ir in 0..=n {
        let r = ir as f64 / n as f64;
        for it in 0..=n {
            let th = std::f64::consts::FRAC_PI_2 * it as f64 / n as f64;
            let (sg, pi) = (r * th.cos(), r * th.sin());
            let g = spec.a * spec.a * sg.powf(e) + spec.b * spec.b * pi.powf(e);
            best = best.max(g.sqrt());
        }
    }
    spec.alpha * best
}

fn delta_sample<N: Nonlinearity>(f: &N, al: f64, pairs: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = vec![0.0f64; EPS_GRID.len()];
    for _ in 0..pairs {
        let r1 = 10f64.powf(rng.random_range(-3.0..3.0));
        let r2 = 10f64.powf(rng.random_range(-3.0..3.0));
        let phi = scaled(&random_unit_spinor(&mut rng), r1);
        let dphi = scaled(&random_unit_spinor(&mut rng), r2);
        let moved: Spinor = std::array::from_fn(|i| phi[i] + dphi[i]);
        let g0 = f.gradient(&phi);
        let g1 = f.gradient(&moved);
        let diff: Spinor = std::array::from_fn(|i| g1[i] - g0[i]);
        let num = spinor_norm(&diff);
        let den = (r1.powf(al - 2.0) + r2.powf(al - 2.0)) * r2;
        for (b, eps) in best.iter_mut().zip(EPS_GRID) {
            *b = b.max((num - eps * r2) / den);
        }
    }
    best
}

/// Growth constants `μ_ε` (for `|∇F| ≤ ε|φ| + μ_ε|φ|^{α−1}`) and `δ_ε` (for the increment bound).
///
/// The supremum defining `μ_ε` is approached as `|φ| → ∞`, where the `ε|φ|` slack is
/// negligible, so `μ_ε = μ` for every ε. `δ_ε` is a sampled lower estimate.
pub fn estimate_mu_delta(spec: &NonlinearitySpec, pair_samples: usize, seed: u64) -> DerivedConstants {
    let mut warnings = Vec::new();
    let mut n = 64;
    let mut mu = mu_scan(spec, n);
    loop {
        let next = mu_scan(spec, 2 * n);
        let converged = (next - mu).abs() <= 1e-9 * next.max(f64::MIN_POSITIVE);
        n *= 2;
        mu = next;
        if converged {
            break;
        }
        if n >= 4096 {
            let bound = spec.alpha * (spec.a * spec.a + spec.b * spec.b).sqrt();
            warnings.push(format!("mu scan not converged at resolution {n}; upper bound {bound}"));
            break;
        }
    }
    let f = Soler::unchecked(*spec);
    let d1 = delta_sample(&f, spec.alpha, pair_samples, seed);
    let d2 = delta_sample(&f, spec.alpha, 2 * pair_samples, seed ^ 0x5eed);
    let delta_eps: Vec<(f64, f64)> = EPS_GRID
        .iter()
        .zip(d1.iter().zip(&d2))
        .map(|(e, (a, b))| (*e, a.max(*b)))
        .collect();
    if (d2[0] - d1[0]).abs() > 0.1 * d1[0].max(d2[0]) {
        warnings.push(format!(
            "delta estimate not stable under doubling the pair count ({} vs {})",
            d1[0], d2[0]
        ));
    }
    DerivedConstants {
        mu,
        delta: delta_eps[0].1,
        gamma_bar: spec.a,
        nu: spec.nu,
        mu_eps: EPS_GRID.iter().map(|e| (*e, mu)).collect(),
        delta_eps,
        scan_resolution: n,
        pair_samples: 3 * pair_samples,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::DiracAlgebra;
    use nalgebra::Vector4;
    use proptest::prelude::*;

    fn soler(a: f64, b: f64) -> Soler {
        Soler::new(NonlinearitySpec { a, b, ..Default::default() }).unwrap()
    }

    fn sp(v: [f64; 8]) -> Spinor {
        std::array::from_fn(|i| C64::new(v[2 * i], v[2 * i + 1]))
    }

    #[test]
    fn bilinears_match_dense_matrices() {
        let d = DiracAlgebra::standard();
        let phi = sp([0.3, -0.1, 1.2, 0.4, -0.7, 0.2, 0.5, 0.9]);
        let v = Vector4::from(phi);
        let s = (v.adjoint() * d.beta * v)[(0, 0)];
        let p = (v.adjoint() * d.gamma123 * v)[(0, 0)];
        let (s2, p2) = bilinears(&phi);
        assert!((s.re - s2).abs() < 1e-14 && s.im.abs() < 1e-14);
        assert!((p.re - p2).abs() < 1e-14 && p.im.abs() < 1e-14);
        let mv = d.gamma123 * v;
        let fast = gamma123(&phi);
        for i in 0..4 {
            assert!((mv[i] - fast[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn point_examples() {
        let f = soler(1.0, 0.0);
        assert_eq!(f.value(&ZERO_SPINOR), 0.0);
        assert_eq!(f.gradient(&ZERO_SPINOR), ZERO_SPINOR);
        let e1 = sp([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((f.value(&e1) - 1.0).abs() < 1e-15);
        assert!((f.gradient(&e1)[0] - C64::new(2.5, 0.0)).norm() < 1e-15);
        let h = 1.0 / 2f64.sqrt();
        let balanced = sp([h, 0.0, 0.0, 0.0, h, 0.0, 0.0, 0.0]);
        assert_eq!(soler(1.0, 0.0).value(&balanced), 0.0);
        let g = soler(1.0, 0.7);
        // p = 0 too for a real balanced spinor, so only an imaginary phase brings in the b-term
        let twisted = sp([h, 0.0, 0.0, 0.0, 0.0, h, 0.0, 0.0]);
        let (s, p) = bilinears(&twisted);
        assert!(s.abs() < 1e-15 && (p - 1.0).abs() < 1e-15);
        assert!((g.value(&twisted) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_alpha() {
        assert!(Soler::new(NonlinearitySpec { alpha: 4.0, ..Default::default() }).is_err());
        assert!(Soler::new(NonlinearitySpec { alpha: 2.0, ..Default::default() }).is_err());
        assert!(Soler::new(NonlinearitySpec { a: 0.0, ..Default::default() }).is_err());
        assert!(Soler::new(NonlinearitySpec { nu: 1.2, ..Default::default() }).is_err());
    }

    #[test]
    fn regularized_hessian_at_origin_vanishes() {
        let f = Soler::new(NonlinearitySpec { delta_reg: 0.1, b: 0.3, ..Default::default() }).unwrap();
        let v = sp([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(f.hessian_vec(&ZERO_SPINOR, &v).unwrap(), ZERO_SPINOR);
    }

    #[test]
    fn singular_hessian_is_an_error() {
        let f = soler(1.0, 0.0);
        let h = 1.0 / 2f64.sqrt();
        let balanced = sp([h, 0.0, 0.0, 0.0, h, 0.0, 0.0, 0.0]);
        assert!(matches!(f.hessian_vec(&balanced, &balanced), Err(Error::SingularHessian)));
    }

    #[test]
    fn soler_is_not_convex() {
        // F(e₁ + t e₃) = a|1 − t²|^{α/2} bends downward at t = 0.
        let f = soler(0.01, 0.0);
        let e1 = sp([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let e3 = sp([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let q = spinor_dot(&f.hessian_vec(&e1, &e3).unwrap(), &e3).re;
        assert!((q + 0.01 * 2.5).abs() < 1e-15);
        let t: f64 = 1e-3;
        let fd = (f.value(&sp([1.0, 0.0, 0.0, 0.0, t, 0.0, 0.0, 0.0])) - 2.0 * f.value(&e1)
            + f.value(&sp([1.0, 0.0, 0.0, 0.0, -t, 0.0, 0.0, 0.0])))
            / (t * t);
        assert!((fd - q).abs() < 1e-6);
    }

    #[test]
    fn hypothesis_report() {
        let spec = NonlinearitySpec { a: 0.01, b: 0.0, alpha: 2.5, ..Default::default() };
        let r = validate_hypotheses(&spec, 1000, 3).unwrap();
        let h3 = r.check("H3").unwrap();
        assert!(h3.pass && h3.worst_margin.abs() < 1e-12);
        let h5 = r.check("H5").unwrap();
        assert!(h5.pass && h5.worst_margin == 0.0);
        assert!(r.check("H1").unwrap().pass);
        assert!(r.check("H6").unwrap().pass);
        assert!(r.check("H7").unwrap().pass);
        // convexity fails for this family; see soler_is_not_convex
        assert!(!r.check("H4").unwrap().pass);
        assert_eq!(r.growth_constants.len(), 4);
        assert!(serde_json::to_string(&r).is_ok());
        assert!(validate_hypotheses(&spec, 0, 3).is_err());
        assert!(validate_hypotheses(&NonlinearitySpec { alpha: 4.0, ..spec }, 10, 3).is_err());
    }

    #[test]
    fn mu_examples() {
        let zero = NonlinearitySpec { a: 0.0, b: 0.0, ..Default::default() };
        assert_eq!(estimate_mu_delta(&zero, 100, 1).mu, 0.0);
        let spec = NonlinearitySpec { a: 0.01, ..Default::default() };
        let d = estimate_mu_delta(&spec, 2000, 1);
        assert!((d.mu - 0.025).abs() < 1e-12);
        assert!(d.mu_eps.iter().all(|(_, m)| *m == d.mu));
        assert_eq!(d.gamma_bar, 0.01);
        let d2 = estimate_mu_delta(&NonlinearitySpec { a: 0.02, ..spec }, 2000, 1);
        assert!(d2.mu <= 2.0 * d.mu * (1.0 + 1e-12));
        // both terms: analytic maximum of √(a²σ^{1/2} + b²π^{1/2}) on the unit circle
        let both = NonlinearitySpec { a: 0.3, b: 0.4, ..Default::default() };
        let oracle = (0..200_000)
            .map(|i| {
                let th = std::f64::consts::FRAC_PI_2 * i as f64 / 200_000.0;
                (0.09 * th.cos().sqrt() + 0.16 * th.sin().sqrt()).sqrt()
            })
            .fold(0.0, f64::max)
            * 2.5;
        let got = estimate_mu_delta(&both, 100, 1).mu;
        assert!((got - oracle).abs() < 1e-6 * oracle);
    }

    fn arb_spinor(lo: f64, hi: f64) -> impl Strategy<Value = Spinor> {
        (proptest::array::uniform8(-1.0f64..1.0), lo..hi).prop_filter_map("nonzero", |(v, r)| {
            let s = sp(v);
            let n = spinor_norm(&s);
            (n > 1e-3).then(|| scaled(&s, r / n))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn gauge_and_homogeneity(phi in arb_spinor(0.1, 10.0), th in 0.0f64..6.3, sig in 0.0f64..5.0, b in 0.0f64..1.0) {
            let f = soler(0.7, b);
            let rot = phi.map(|z| z * C64::from_polar(1.0, th));
            let v = f.value(&phi);
            prop_assert!(v >= 0.0);
            prop_assert!((f.value(&rot) - v).abs() <= 1e-12 * v.max(1e-300));
            prop_assert!((spinor_norm(&f.gradient(&rot)) - spinor_norm(&f.gradient(&phi))).abs() <= 1e-12 * spinor_norm(&f.gradient(&phi)).max(1e-300));
            prop_assert!((f.value(&scaled(&phi, sig)) - sig.powf(2.5) * v).abs() <= 1e-12 * (sig.powf(2.5) * v).max(1e-300));
            let euler = spinor_dot(&f.gradient(&phi), &phi);
            prop_assert!((euler.re - 2.5 * v).abs() <= 1e-12 * v.max(1e-300));
        }

        #[test]
        fn gradient_matches_finite_differences(phi in arb_spinor(0.1, 10.0), dir in arb_spinor(1.0, 1.0001), b in 0.0f64..1.0) {
            let f = soler(0.7, b);
            let h = 1e-6 * spinor_norm(&phi);
            let plus: Spinor = std::array::from_fn(|i| phi[i] + dir[i] * h);
            let minus: Spinor = std::array::from_fn(|i| phi[i] - dir[i] * h);
            let fd = (f.value(&plus) - f.value(&minus)) / (2.0 * h);
            let an = spinor_dot(&f.gradient(&phi), &dir).re;
            let scale = spinor_norm(&f.gradient(&phi));
            prop_assert!((fd - an).abs() <= 1e-6 * scale.max(1e-12));
        }

        #[test]
        fn hessian_matches_finite_differences(phi in arb_spinor(0.5, 2.0), dir in arb_spinor(1.0, 1.0001), b in 0.0f64..1.0) {
            let f = soler(0.7, b);
            let (s, p) = bilinears(&phi);
            let r2 = spinor_norm(&phi).powi(2);
            prop_assume!(s.abs() > 0.05 * r2 && (b == 0.0 || p.abs() > 0.05 * r2));
            let h = 1e-5;
            let plus: Spinor = std::array::from_fn(|i| phi[i] + dir[i] * h);
            let minus: Spinor = std::array::from_fn(|i| phi[i] - dir[i] * h);
            let (gp, gm) = (f.gradient(&plus), f.gradient(&minus));
            let an = f.hessian_vec(&phi, &dir).unwrap();
            let err: f64 = (0..4).map(|i| ((gp[i] - gm[i]) / (2.0 * h) - an[i]).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-6 * spinor_norm(&an).max(1e-3));
            // symmetry of the real bilinear form
            let w = phi.map(|z| z.conj() * C64::new(0.3, 0.8));
            let a1 = spinor_dot(&f.hessian_vec(&phi, &dir).unwrap(), &w).re;
            let a2 = spinor_dot(&f.hessian_vec(&phi, &w).unwrap(), &dir).re;
            prop_assert!((a1 - a2).abs() <= 1e-12 * (a1.abs() + a2.abs()).max(1.0));
        }

        #[test]
        fn gradient_norm_identity(phi in arb_spinor(0.1, 10.0), b in 0.0f64..1.0) {
            // |∇F|² = (A² + B²)|φ|² because βφ ⟂ γ¹γ²γ³φ in the real inner product
            let f = soler(0.7, b);
            let (s, p) = bilinears(&phi);
            let ca = f.coeff(0.7, s);
            let cb = f.coeff(b, p);
            let lhs = spinor_norm(&f.gradient(&phi)).powi(2);
            let rhs = (ca * ca + cb * cb) * spinor_norm(&phi).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
            let mu = estimate_mu_delta(f.spec(), 10, 0).mu;
            prop_assert!(lhs.sqrt() <= mu * spinor_norm(&phi).powf(1.5) * (1.0 + 1e-9));
        }
    }
}
