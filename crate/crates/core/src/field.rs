//! Spinor fields on a periodic cube.
//!
//! A field stores four complex components per grid point, component-major.
//! The frequency representation uses the unitary convention
//! `û_k = L^{3/2} N^{-3} Σ_j u_j e^{-2πi k·j/N}`, so that
//! `h³ Σ_j conj(u_j) v_j = Σ_k conj(û_k) v̂_k` and a constant field `c`
//! maps to `û_0 = c √V`.

use std::cell::RefCell;
use std::fmt;
use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Spinor = [C64; 4];

pub const ZERO_SPINOR: Spinor = [C64::new(0.0, 0.0); 4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_per_axis: usize,
    pub box_length: f64,
    pub mass: f64,
}

impl GridSpec {
    pub fn new(n_per_axis: usize, box_length: f64, mass: f64) -> Result<Self> {
        let g = GridSpec { n_per_axis, box_length, mass };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_axis < 4 || !self.n_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_per_axis must be even and >= 4, got {}",
                self.n_per_axis
            )));
        }
        if !(self.box_length > 0.0 && self.box_length.is_finite()) {
            return Err(Error::InvalidGrid(format!("box_length must be positive, got {}", self.box_length)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidGrid(format!("mass must be positive, got {}", self.mass)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.n_per_axis.pow(3)
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    /// Signed wavenumber for a per-axis index, in `-N/2..N/2`.
    pub fn signed_index(&self, i: usize) -> i64 {
        let n = self.n_per_axis;
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn split(&self, idx: usize) -> [usize; 3] {
        let n = self.n_per_axis;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn mode_xi(&self, idx: usize) -> [f64; 3] {
        let s = 2.0 * std::f64::consts::PI / self.box_length;
        let [i, j, k] = self.split(idx);
        [
            s * self.signed_index(i) as f64,
            s * self.signed_index(j) as f64,
            s * self.signed_index(k) as f64,
        ]
    }

    /// Point coordinates, centred so that index `N/2` sits at the origin.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let half = self.box_length / 2.0;
        let [i, j, k] = self.split(idx);
        [i as f64 * h - half, j as f64 * h - half, k as f64 * h - half]
    }

    /// `√(|ξ|² + m²)` for every mode.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.cells())
            .map(|idx| {
                let xi = self.mode_xi(idx);
                (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2] + self.mass * self.mass).sqrt()
            })
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        let text = format!("N={};L={:.17e};m={:.17e}", self.n_per_axis, self.box_length, self.mass);
        short_hash(text.as_bytes())
    }
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Position,
    Frequency,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Position => "position",
            Representation::Frequency => "frequency",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    repr: Representation,
    data: Vec<C64>,
}

impl SpinorField {
    pub fn zeros(grid: GridSpec, repr: Representation) -> Self {
        SpinorField { grid, repr, data: vec![C64::new(0.0, 0.0); 4 * grid.cells()] }
    }

    /// Builds a field from component-major values.
    pub fn from_components(grid: GridSpec, repr: Representation, data: Vec<C64>) -> Result<Self> {
        if data.len() != 4 * grid.cells() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                4 * grid.cells(),
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("field construction"));
        }
        Ok(SpinorField { grid, repr, data })
    }

    pub fn from_position_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> Spinor) -> Self {
        let mut u = Self::zeros(grid, Representation::Position);
        for idx in 0..grid.cells() {
            u.set(idx, f(grid.position(idx)));
        }
        u
    }

    /// A single plane wave `e^{iξ·x} s` sampled on the grid; `k` holds signed mode indices.
    pub fn plane_wave(grid: GridSpec, k: [i64; 3], s: Spinor) -> Self {
        let tau = 2.0 * std::f64::consts::PI / grid.box_length;
        let xi = [tau * k[0] as f64, tau * k[1] as f64, tau * k[2] as f64];
        Self::from_position_fn(grid, |x| {
            let phase = C64::from_polar(1.0, xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2]);
            s.map(|c| c * phase)
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn component(&self, c: usize) -> &[C64] {
        let n = self.grid.cells();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Spinor {
        let n = self.grid.cells();
        [self.data[idx], self.data[n + idx], self.data[2 * n + idx], self.data[3 * n + idx]]
    }

    #[inline]
    pub fn set(&mut self, idx: usize, s: Spinor) {
        let n = self.grid.cells();
        for (c, v) in s.into_iter().enumerate() {
            self.data[c * n + idx] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn to_frequency(&self) -> Result<Self> {
        if self.repr == Representation::Frequency {
            return Err(Error::WrongRepresentation { expected: "position" });
        }
        Ok(self.transformed(Representation::Frequency))
    }

    pub fn to_position(&self) -> Result<Self> {
        if self.repr == Representation::Position {
            return Err(Error::WrongRepresentation { expected: "frequency" });
        }
        Ok(self.transformed(Representation::Position))
    }

    /// Returns the field in the requested representation, transforming only if needed.
    pub fn in_representation(&self, repr: Representation) -> Self {
        if self.repr == repr {
            self.clone()
        } else {
            self.transformed(repr)
        }
    }

    pub fn into_representation(self, repr: Representation) -> Self {
        if self.repr == repr {
            self
        } else {
            self.transformed(repr)
        }
    }

    fn transformed(&self, target: Representation) -> Self {
        let n = self.grid.n_per_axis;
        let cells = self.grid.cells();
        let mut data = self.data.clone();
        let (direction, scale) = match target {
            Representation::Frequency => {
                (FftDirection::Forward, self.grid.box_length.powf(1.5) / cells as f64)
            }
            Representation::Position => (FftDirection::Inverse, self.grid.box_length.powf(-1.5)),
        };
        for c in 0..4 {
            fft3(&mut data[c * cells..(c + 1) * cells], n, direction);
        }
        for z in &mut data {
            *z *= scale;
        }
        SpinorField { grid: self.grid, repr: target, data }
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= s);
        out
    }

    pub fn scaled_complex(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= s);
        out
    }

    /// `self + s·other`, with `other` converted to this field's representation.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let other = other.in_representation(self.repr);
        let mut out = self.clone();
        for (z, o) in out.data.iter_mut().zip(&other.data) {
            *z += o * s;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// Applies a per-mode scalar multiplier (frequency side); result is in frequency form.
    pub fn mode_multiplied(&self, weights: &[f64]) -> Self {
        let mut out = self.in_representation(Representation::Frequency);
        let cells = self.grid.cells();
        for c in 0..4 {
            for (z, w) in out.data[c * cells..(c + 1) * cells].iter_mut().zip(weights) {
                *z *= *w;
            }
        }
        out
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized 3D DFT in place on an `n³` block laid out as `(i, j, k)` with `k` fastest.
fn fft3(block: &mut [C64], n: usize, direction: FftDirection) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction));
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(block, &mut scratch);

    // Gather strided lines into a contiguous buffer, transform as a batch, scatter back.
    let mut lines = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let plane = &mut block[i * n * n..(i + 1) * n * n];
        for k in 0..n {
            for j in 0..n {
                lines[k * n + j] = plane[j * n + k];
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for k in 0..n {
            for j in 0..n {
                plane[j * n + k] = lines[k * n + j];
            }
        }
    }
    let mut lines = vec![C64::new(0.0, 0.0); n * n * n];
    for i in 0..n {
        for jk in 0..n * n {
            lines[jk * n + i] = block[i * n * n + jk];
        }
    }
    fft.process_with_scratch(&mut lines, &mut scratch);
    for i in 0..n {
        for jk in 0..n * n {
            block[i * n * n + jk] = lines[jk * n + i];
        }
    }
}

fn raw_inner(u: &SpinorField, v: &SpinorField, weights: Option<&[f64]>) -> C64 {
    let cells = u.grid.cells();
    let mut acc = C64::new(0.0, 0.0);
    for c in 0..4 {
        let a = &u.data[c * cells..(c + 1) * cells];
        let b = &v.data[c * cells..(c + 1) * cells];
        match weights {
            Some(w) => {
                for ((x, y), wk) in a.iter().zip(b).zip(w) {
                    acc += x.conj() * y * *wk;
                }
            }
            None => {
                for (x, y) in a.iter().zip(b) {
                    acc += x.conj() * y;
                }
            }
        }
    }
    acc
}

/// `∫⟨u, v⟩`, conjugate-linear in `u`.
pub fn l2_inner(u: &SpinorField, v: &SpinorField) -> Result<C64> {
    u.check_same_grid(v)?;
    let v = v.in_representation(u.repr);
    let raw = raw_inner(u, &v, None);
    Ok(match u.repr {
        Representation::Position => raw * u.grid.cell_volume(),
        Representation::Frequency => raw,
    })
}

pub fn l2_norm(u: &SpinorField) -> f64 {
    let raw = u.data.iter().map(|z| z.norm_sqr()).sum::<f64>();
    match u.repr {
        Representation::Position => (raw * u.grid.cell_volume()).sqrt(),
        Representation::Frequency => raw.sqrt(),
    }
}

pub fn h_half_inner(u: &SpinorField, v: &SpinorField) -> Result<C64> {
    u.check_same_grid(v)?;
    let u = u.in_representation(Representation::Frequency);
    let v = v.in_representation(Representation::Frequency);
    Ok(raw_inner(&u, &v, Some(&u.grid.weights())))
}

pub fn h_half_norm(u: &SpinorField) -> f64 {
    let u = u.in_representation(Representation::Frequency);
    let w = u.grid.weights();
    let cells = u.grid.cells();
    let mut acc = 0.0;
    for c in 0..4 {
        for (z, wk) in u.data[c * cells..(c + 1) * cells].iter().zip(&w) {
            acc += z.norm_sqr() * wk;
        }
    }
    acc.sqrt()
}

/// Cell-volume quadrature of `|u(x)|^p`, then the `p`-th root. `p = ∞` gives the max.
pub fn lp_norm(u: &SpinorField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("lp_norm needs p >= 1, got {p}")));
    }
    let u = u.in_representation(Representation::Position);
    let moduli = (0..u.grid.cells()).map(|i| spinor_norm(&u.at(i)));
    if p.is_infinite() {
        return Ok(moduli.fold(0.0, f64::max));
    }
    let sum: f64 = moduli.map(|r| r.powf(p)).sum();
    Ok((sum * u.grid.cell_volume()).powf(1.0 / p))
}

#[inline]
pub fn spinor_norm(s: &Spinor) -> f64 {
    s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[inline]
pub fn spinor_dot(a: &Spinor, b: &Spinor) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Gaussian random field with correlation length about `width`, in frequency representation.
pub fn random_smooth(grid: GridSpec, rng: &mut impl rand::Rng, width: f64) -> SpinorField {
    use rand_distr::StandardNormal;
    let mut u = SpinorField::zeros(grid, Representation::Frequency);
    for k in 0..grid.cells() {
        let xi = grid.mode_xi(k);
        let env = (-(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) * width * width / 2.0).exp();
        let s: Spinor = std::array::from_fn(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * env);
        u.set(k, s);
    }
    u
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    grid: GridSpec,
    representation: Representation,
    endianness: String,
    dtype: String,
    layout: String,
}

/// CSV with columns `x,y,z,re0,im0,...,re3,im3` in position representation.
pub fn write_csv(u: &SpinorField, out: &mut impl Write) -> Result<()> {
    let u = u.in_representation(Representation::Position);
    writeln!(out, "x,y,z,re0,im0,re1,im1,re2,im2,re3,im3")?;
    for idx in 0..u.grid.cells() {
        let x = u.grid.position(idx);
        let s = u.at(idx);
        write!(out, "{},{},{}", x[0], x[1], x[2])?;
        for z in s {
            write!(out, ",{:.17e},{:.17e}", z.re, z.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Binary dump: `u32` little-endian header length, JSON header, then `f64` little-endian
/// values ordered by point (row-major `i, j, k`) and then `re0, im0, ..., re3, im3`.
pub fn write_binary(u: &SpinorField, out: &mut impl Write) -> Result<()> {
    let header = DumpHeader {
        grid: u.grid,
        representation: u.repr,
        endianness: "little".into(),
        dtype: "f64".into(),
        layout: "row-major points, 8 reals per point".into(),
    };
    let text = serde_json::to_vec(&header)?;
    out.write_all(&(text.len() as u32).to_le_bytes())?;
    out.write_all(&text)?;
    for idx in 0..u.grid.cells() {
        for z in u.at(idx) {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary(input: &mut impl Read) -> Result<SpinorField> {
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut text = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut text)?;
    let header: DumpHeader = serde_json::from_slice(&text)?;
    header.grid.validate()?;
    if header.endianness != "little" || header.dtype != "f64" {
        return Err(Error::InvalidParameter("unsupported dump encoding".into()));
    }
    let mut u = SpinorField::zeros(header.grid, header.representation);
    let mut buf = [0u8; 8];
    let mut next = |input: &mut dyn Read| -> Result<f64> {
        input.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    };
    for idx in 0..header.grid.cells() {
        let mut s = ZERO_SPINOR;
        for z in &mut s {
            let re = next(input)?;
            let im = next(input)?;
            *z = C64::new(re, im);
        }
        u.set(idx, s);
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("binary dump"));
    }
    Ok(u)
}
