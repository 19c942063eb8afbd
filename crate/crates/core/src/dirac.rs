//! Free Dirac operator `H = -i α·∇ + mβ` in the standard representation.
//!
//! Every operator here is diagonal in frequency: mode `ξ` sees the 4×4 block
//! `h(ξ) = α·ξ + mβ`, whose eigenvalues are `±√(|ξ|²+m²)`. Projectors use the
//! closed form `Λ± = ½(I ± h/√(|ξ|²+m²))`.

use nalgebra::Matrix4;
use serde_json::{json, Value};

use crate::field::{GridSpec, Representation, Spinor, SpinorField, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Dense matrices, used for audit and as an independent route in tests.
#[derive(Clone, Debug)]
pub struct DiracAlgebra {
    pub beta: Matrix4<C64>,
    pub alpha: [Matrix4<C64>; 3],
    pub gamma123: Matrix4<C64>,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

impl DiracAlgebra {
    pub fn standard() -> Self {
        let o = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        let sigma = [
            [[o, one], [one, o]],
            [[o, -i], [i, o]],
            [[one, o], [o, -one]],
        ];
        let beta = Matrix4::from_diagonal(&nalgebra::Vector4::new(one, one, -one, -one));
        let alpha = sigma.map(|s| {
            let mut a = Matrix4::zeros();
            for r in 0..2 {
                for col in 0..2 {
                    a[(r, col + 2)] = s[r][col];
                    a[(r + 2, col)] = s[r][col];
                }
            }
            a
        });
        let gamma = alpha.map(|a| beta * a);
        let gamma123 = gamma[0] * gamma[1] * gamma[2];
        DiracAlgebra { beta, alpha, gamma123 }
    }

    pub fn symbol(&self, xi: [f64; 3], mass: f64) -> Matrix4<C64> {
        self.alpha[0] * c(xi[0], 0.0) + self.alpha[1] * c(xi[1], 0.0) + self.alpha[2] * c(xi[2], 0.0)
            + self.beta * c(mass, 0.0)
    }

    pub fn to_json(&self) -> Value {
        let dump = |m: &Matrix4<C64>| -> Value {
            (0..4)
                .map(|r| (0..4).map(|k| json!([m[(r, k)].re, m[(r, k)].im])).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .into()
        };
        json!({
            "beta": dump(&self.beta),
            "alpha": self.alpha.iter().map(dump).collect::<Vec<_>>(),
            "gamma123": dump(&self.gamma123),
        })
    }
}

/// `h(ξ)φ` without forming the matrix.
#[inline]
pub fn apply_symbol(xi: [f64; 3], mass: f64, phi: &Spinor) -> Spinor {
    let sx = |u0: C64, u1: C64| -> (C64, C64) {
        let p = c(xi[0], -xi[1]);
        let q = c(xi[0], xi[1]);
        (u0 * xi[2] + p * u1, q * u0 - u1 * xi[2])
    };
    let (l0, l1) = sx(phi[2], phi[3]);
    let (u0, u1) = sx(phi[0], phi[1]);
    [l0 + phi[0] * mass, l1 + phi[1] * mass, u0 - phi[2] * mass, u1 - phi[3] * mass]
}

#[inline]
pub fn project_spinor(xi: [f64; 3], mass: f64, energy: f64, sign: Sign, phi: &Spinor) -> Spinor {
    let h = apply_symbol(xi, mass, phi);
    let s = 0.5 * sign.factor() / energy;
    [
        phi[0] * 0.5 + h[0] * s,
        phi[1] * 0.5 + h[1] * s,
        phi[2] * 0.5 + h[2] * s,
        phi[3] * 0.5 + h[3] * s,
    ]
}

/// Per-mode frequency vectors and energies `√(|ξ|²+m²)` for one grid.
#[derive(Clone, Debug)]
pub struct ModeTable {
    pub grid: GridSpec,
    pub xi: Vec<[f64; 3]>,
    pub energy: Vec<f64>,
}

impl ModeTable {
    pub fn new(grid: GridSpec) -> Self {
        let xi: Vec<_> = (0..grid.cells()).map(|i| grid.mode_xi(i)).collect();
        ModeTable { grid, xi, energy: grid.weights() }
    }

    fn map_modes(&self, u: &SpinorField, f: impl Fn(usize, &Spinor) -> Spinor) -> SpinorField {
        let repr = u.representation();
        let mut v = u.in_representation(Representation::Frequency);
        for k in 0..self.grid.cells() {
            let s = v.at(k);
            v.set(k, f(k, &s));
        }
        v.into_representation(repr)
    }

    pub fn apply_dirac(&self, u: &SpinorField) -> SpinorField {
        let m = self.grid.mass;
        self.map_modes(u, |k, s| apply_symbol(self.xi[k], m, s))
    }

    pub fn project(&self, u: &SpinorField, sign: Sign) -> SpinorField {
        let m = self.grid.mass;
        self.map_modes(u, |k, s| project_spinor(self.xi[k], m, self.energy[k], sign, s))
    }

    /// Projection in frequency form, skipping the representation round trip.
    pub fn project_frequency(&self, u: &mut SpinorField, sign: Sign) {
        debug_assert_eq!(u.representation(), Representation::Frequency);
        let m = self.grid.mass;
        for k in 0..self.grid.cells() {
            let s = u.at(k);
            u.set(k, project_spinor(self.xi[k], m, self.energy[k], sign, &s));
        }
    }

    pub fn apply_sqrt_quarter(&self, u: &SpinorField) -> SpinorField {
        let w: Vec<f64> = self.energy.iter().map(|e| e.sqrt()).collect();
        u.mode_multiplied(&w).into_representation(u.representation())
    }

    pub fn dirac_quadratic_form(&self, u: &SpinorField) -> f64 {
        let f = u.in_representation(Representation::Frequency);
        let m = self.grid.mass;
        (0..self.grid.cells())
            .map(|k| {
                let s = f.at(k);
                let h = apply_symbol(self.xi[k], m, &s);
                s.iter().zip(&h).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
            })
            .sum()
    }
}

pub fn apply_dirac(u: &SpinorField) -> SpinorField {
    ModeTable::new(*u.grid()).apply_dirac(u)
}

pub fn project(u: &SpinorField, sign: Sign) -> SpinorField {
    ModeTable::new(*u.grid()).project(u, sign)
}

pub fn apply_sqrt_quarter(u: &SpinorField) -> SpinorField {
    ModeTable::new(*u.grid()).apply_sqrt_quarter(u)
}

pub fn dirac_quadratic_form(u: &SpinorField) -> f64 {
    ModeTable::new(*u.grid()).dirac_quadratic_form(u)
}
