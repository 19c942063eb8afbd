//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! n_per_axis = 16        # N, points per axis
//! box_length = 16.0      # L, side of the periodic box
//! mass = 1.0             # m
//!
//! [nonlinearity]         # F(φ) = a|s|^{α/2} + b|p|^{α/2}
//! a = 0.01
//! b = 0.0
//! alpha = 2.5            # α in (2, 8/3]
//!
//! [solve]
//! gamma_over_gamma0 = 0.5   # or gamma = 0.03
//! lambda = 1.0              # λ, prescribed ‖ψ‖²
//!
//! [seed]
//! epsilon = 0.5          # ε in w_ε(x) = ε^{3/2} w₁(εx)
//! sigma = 1.0            # width of the Gaussian w₁
//! # path = "start.bin"   # explicit starting field instead
//!
//! [run]
//! seed = 2024
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{AscentOptions, ConstantsTable};
use crate::error::{Error, Result};
use crate::field::{read_binary, GridSpec};
use crate::minimizer::{SeedSpec, SolveConfig};
use crate::nonlinearity::NonlinearitySpec;
use crate::verify::VerifyOptions;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_per_axis: usize,
    pub box_length: f64,
    #[serde(default = "one")]
    pub mass: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub gamma: Option<f64>,
    pub gamma_over_gamma0: Option<f64>,
    pub lambda: Option<f64>,
    pub tol_inner: Option<f64>,
    pub tol_outer: Option<f64>,
    pub residual_target: Option<f64>,
    pub max_outer_iterations: Option<usize>,
    pub max_inner_iterations: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSection {
    pub epsilon: f64,
    pub sigma: f64,
    pub path: Option<PathBuf>,
}

impl Default for SeedSection {
    fn default() -> Self {
        SeedSection { epsilon: 0.5, sigma: 1.0, path: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Spinor pairs sampled when estimating μ.
    pub mu_samples: usize,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        let a = AscentOptions::default();
        ConstantsSection { starts: a.starts, iterations: a.iterations, seed: a.seed, mu_samples: 4000 }
    }
}

impl ConstantsSection {
    pub fn ascent(&self) -> AscentOptions {
        AscentOptions { starts: self.starts, iterations: self.iterations, seed: self.seed }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Box side at ε = 1 for the scaled-grid seed sweep (`L = base_length / ε`).
    pub base_length: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { epsilons: vec![0.4, 0.2, 0.1, 0.05], lambdas: vec![0.25, 0.5, 0.75, 1.0], base_length: None }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub seed: SeedSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n_per_axis, self.grid.box_length, self.grid.mass)
    }

    fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(Error::Config(m.into()));
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        self.nonlinearity.validate().map_err(|e| Error::Config(e.to_string()))?;
        match (self.solve.gamma, self.solve.gamma_over_gamma0) {
            (Some(_), Some(_)) => return cfg("set only one of solve.gamma and solve.gamma_over_gamma0"),
            (Some(g), None) if !(g >= 0.0 && g.is_finite()) => return cfg("solve.gamma must be finite and >= 0"),
            (None, Some(r)) if !(r >= 0.0 && r.is_finite()) => return cfg("solve.gamma_over_gamma0 must be >= 0"),
            _ => {}
        }
        if !(self.seed.epsilon > 0.0 && self.seed.sigma > 0.0) {
            return cfg("seed.epsilon and seed.sigma must be positive");
        }
        if self.constants.starts == 0 || self.constants.iterations == 0 || self.constants.mu_samples == 0 {
            return cfg("constants.starts, iterations and mu_samples must be positive");
        }
        if self.sweep.epsilons.iter().any(|e| !(*e > 0.0)) || self.sweep.lambdas.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
            return cfg("sweep.epsilons must be positive and sweep.lambdas must lie in (0, 1]");
        }
        self.solve_config(0.0).and_then(|c| c.validate()).map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })
    }

    /// Whether the coupling depends on the constants table.
    pub fn needs_constants(&self) -> bool {
        self.solve.gamma_over_gamma0.is_some_and(|r| r > 0.0) || self.solve.gamma.is_some_and(|g| g > 0.0)
    }

    pub fn gamma(&self, table: Option<&ConstantsTable>) -> Result<f64> {
        match (self.solve.gamma, self.solve.gamma_over_gamma0) {
            (Some(g), _) => Ok(g),
            (None, Some(0.0)) => Ok(0.0),
            (None, Some(r)) => table
                .map(|t| r * t.gamma0_bound)
                .ok_or_else(|| Error::Config("gamma_over_gamma0 needs the constants table".into())),
            (None, None) => Ok(0.0),
        }
    }

    /// The solver configuration at coupling `gamma`.
    pub fn solve_config(&self, gamma: f64) -> Result<SolveConfig> {
        let mut c = SolveConfig::new(self.grid()?, self.nonlinearity, gamma);
        let s = &self.solve;
        c.lambda = s.lambda.unwrap_or(c.lambda);
        c.tol_inner = s.tol_inner.unwrap_or(c.tol_inner);
        c.tol_outer = s.tol_outer.unwrap_or(c.tol_outer);
        c.residual_target = s.residual_target.unwrap_or(c.residual_target);
        c.max_outer_iterations = s.max_outer_iterations.unwrap_or(c.max_outer_iterations);
        c.max_inner_iterations = s.max_inner_iterations.unwrap_or(c.max_inner_iterations);
        c.seed = SeedSpec::Gaussian { epsilon: self.seed.epsilon, sigma: self.seed.sigma };
        Ok(c)
    }

    /// Like [`solve_config`](Self::solve_config) but loads an explicit seed field when one is configured.
    pub fn solve_config_with_seed(&self, gamma: f64, base_dir: &Path) -> Result<SolveConfig> {
        let mut c = self.solve_config(gamma)?;
        if let Some(p) = &self.seed.path {
            let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            let mut f = std::fs::File::open(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let field = read_binary(&mut f)?;
            if field.grid() != &c.grid {
                return Err(Error::Config("seed field grid differs from [grid]".into()));
            }
            c.seed = SeedSpec::Explicit(Box::new(field));
        }
        Ok(c)
    }

    pub fn rng_seed(&self) -> u64 {
        self.run.seed.unwrap_or(self.verify.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[grid]
n_per_axis = 8
box_length = 8.0

[nonlinearity]
a = 0.02

[solve]
gamma_over_gamma0 = 0.5
lambda = 0.75

[run]
seed = 7
"#;

    #[test]
    fn parses_sample_with_defaults() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.grid().unwrap(), GridSpec::new(8, 8.0, 1.0).unwrap());
        assert_eq!(c.nonlinearity.a, 0.02);
        assert_eq!(c.nonlinearity.alpha, 2.5);
        assert!(c.needs_constants());
        assert_eq!(c.rng_seed(), 7);
        let s = c.solve_config(0.1).unwrap();
        assert_eq!(s.lambda, 0.75);
        assert_eq!(s.tol_outer, 1e-8);
        assert!(c.gamma(None).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "[grid]\nn_per_axis = 7\nbox_length = 8.0\n",
            "[grid]\nn_per_axis = 8\nbox_length = 8.0\n[solve]\ngamma = 0.1\ngamma_over_gamma0 = 0.5\n",
            "[grid]\nn_per_axis = 8\nbox_length = 8.0\n[solve]\nlambda = 1.5\n",
            "[grid]\nn_per_axis = 8\nbox_length = 8.0\n[nonlinearity]\nalpha = 4.0\n",
            "[grid]\nn_per_axis = 8\nbox_length = 8.0\nunknown = 1\n",
            "not toml at all",
        ] {
            assert!(matches!(RunConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn linear_config_needs_no_constants() {
        let c = RunConfig::parse("[grid]\nn_per_axis = 8\nbox_length = 8.0\n[solve]\ngamma = 0.0\n").unwrap();
        assert!(!c.needs_constants());
        assert_eq!(c.gamma(None).unwrap(), 0.0);
    }
}
