//! Discrete Fourier-multiplier engine on a periodic box.
//!
//! The box `[0, extent)^dim` stands in for the whole space. Physical samples
//! sit at `x_j = j * dx`; the frequency lattice is `xi_k = 2 pi k / extent`
//! for `k` in `-N/2 .. N/2 - 1`, stored in FFT order. The continuous Fourier
//! transform `f^(xi) = \int f(x) e^{-i x xi} dx` is approximated by the
//! left-endpoint Riemann sum, i.e. `dx^dim` times the raw DFT, which makes
//! the discrete Plancherel identity
//! `||f||^2 = (2 pi)^{-dim} (2 pi / extent)^dim sum |f^(xi_k)|^2`
//! hold exactly.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::symbol::MultiplierSymbol;
use crate::thick::SupportMask;

struct GridInner {
    dim: usize,
    extent: f64,
    points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Signed wavenumbers per axis, FFT order.
    axis_xi: Vec<f64>,
    /// `|xi|` for every flattened site, FFT order.
    xi_abs: Vec<f64>,
}

/// Uniform periodic lattice in one or two dimensions.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.inner.dim)
            .field("extent", &self.inner.extent)
            .field("points", &self.inner.points)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.dim == other.inner.dim
                && self.inner.points == other.inner.points
                && self.inner.extent.to_bits() == other.inner.extent.to_bits())
    }
}

/// Builds a grid. `points` must be even and at least 4.
pub fn make_grid(dim: usize, extent: f64, points: usize) -> Result<Grid> {
    Grid::new(dim, extent, points)
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(invalid("extent", format!("must be positive, got {extent}")));
        }
        if points % 2 != 0 || points < 4 {
            return Err(invalid(
                "points",
                format!("must be even and at least 4, got {points}"),
            ));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);
        let axis_xi: Vec<f64> = (0..points)
            .map(|i| 2.0 * PI * signed_index(i, points) as f64 / extent)
            .collect();
        let xi_abs = match dim {
            1 => axis_xi.iter().map(|x| x.abs()).collect(),
            _ => {
                let mut v = Vec::with_capacity(points * points);
                for a in &axis_xi {
                    for b in &axis_xi {
                        v.push(a.hypot(*b));
                    }
                }
                v
            }
        };
        Ok(Self {
            inner: Arc::new(GridInner {
                dim,
                extent,
                points,
                forward,
                inverse,
                axis_xi,
                xi_abs,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn extent(&self) -> f64 {
        self.inner.extent
    }

    pub fn points(&self) -> usize {
        self.inner.points
    }

    pub fn dx(&self) -> f64 {
        self.inner.extent / self.inner.points as f64
    }

    /// Number of lattice sites, `N^dim`.
    pub fn len(&self) -> usize {
        self.inner.points.pow(self.inner.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one cell, `dx^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.inner.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.inner.extent.powi(self.inner.dim as i32)
    }

    /// Nyquist radius `pi N / extent`.
    pub fn xi_max(&self) -> f64 {
        PI * self.inner.points as f64 / self.inner.extent
    }

    /// Frequency lattice spacing `2 pi / extent`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.inner.extent
    }

    /// Sorted per-axis frequency lattice `{-N/2, ..., N/2-1} * 2 pi / extent`.
    pub fn axis_frequencies(&self) -> Vec<f64> {
        let n = self.inner.points as i64;
        (-n / 2..n / 2)
            .map(|k| 2.0 * PI * k as f64 / self.inner.extent)
            .collect()
    }

    /// `|xi|` per site in FFT order.
    pub fn xi_abs(&self) -> &[f64] {
        &self.inner.xi_abs
    }

    /// Frequency vector of a flattened FFT-order index.
    pub fn xi_at(&self, index: usize) -> [f64; 2] {
        let n = self.inner.points;
        match self.inner.dim {
            1 => [self.inner.axis_xi[index], 0.0],
            _ => [self.inner.axis_xi[index / n], self.inner.axis_xi[index % n]],
        }
    }

    /// Physical coordinates of a flattened row-major site index.
    pub fn x_at(&self, index: usize) -> [f64; 2] {
        let n = self.inner.points;
        let dx = self.dx();
        match self.inner.dim {
            1 => [index as f64 * dx, 0.0],
            _ => [(index / n) as f64 * dx, (index % n) as f64 * dx],
        }
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Unnormalised forward DFT along every axis.
    pub(crate) fn dft(&self, values: &mut [Complex64]) {
        self.transform(values, &self.inner.forward);
    }

    /// Inverse DFT including the `1 / N^dim` normalisation.
    pub(crate) fn idft(&self, values: &mut [Complex64]) {
        self.transform(values, &self.inner.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in values.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, values: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.inner.points;
        debug_assert_eq!(values.len(), self.len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // rows are contiguous: one batched call covers every row
        fft.process_with_scratch(values, &mut scratch);
        if self.inner.dim == 2 {
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    column[r] = values[r * n + c];
                }
                fft.process_with_scratch(&mut column, &mut scratch);
                for r in 0..n {
                    values[r * n + c] = column[r];
                }
            }
        }
    }
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Complex samples on the physical lattice, row-major.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f` at every site; the closure receives `[x, y]` (y = 0 in 1-D).
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.x_at(i))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_real(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Quadrature L2 norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &SpectralField) -> Result<Complex64> {
        self.grid.check_same(&other.grid)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &SpectralField, factor: Complex64) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * factor;
        }
        Ok(())
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.add_scaled(other, Complex64::new(-1.0, 0.0))?;
        Ok(out)
    }

    pub fn spectrum(&self) -> Spectrum {
        let mut coeffs = self.values.clone();
        self.grid.dft(&mut coeffs);
        let w = self.grid.cell_volume();
        for c in coeffs.iter_mut() {
            *c *= w;
        }
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }
}

/// Approximate continuous Fourier transform sampled on the frequency lattice
/// (FFT order).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// `(2 pi)^{-dim}` times the lattice quadrature of `|f^|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.grid.volume()
    }

    pub fn to_field(&self) -> SpectralField {
        let mut values = self.coeffs.clone();
        self.grid.idft(&mut values);
        let w = 1.0 / self.grid.cell_volume();
        for v in values.iter_mut() {
            *v *= w;
        }
        SpectralField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Multiplies every coefficient by `m(|xi|)`.
    pub fn apply_radial(&mut self, mut m: impl FnMut(f64) -> Result<Complex64>) -> Result<()> {
        for (c, &r) in self.coeffs.iter_mut().zip(self.grid.xi_abs()) {
            *c *= m(r)?;
        }
        Ok(())
    }
}

/// `e^{-t F(|D|)} f`.
pub fn apply_semigroup(f: &SpectralField, symbol: &MultiplierSymbol, t: f64) -> Result<SpectralField> {
    if !t.is_finite() || t < 0.0 {
        return Err(invalid("t", format!("must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let mut s = f.spectrum();
    s.apply_radial(|r| Ok(Complex64::new((-t * symbol.eval(r)?).exp(), 0.0)))?;
    Ok(s.to_field())
}

/// Semigroup factors `e^{-t F(|xi|)}` for every lattice site, FFT order.
pub fn semigroup_factors(grid: &Grid, symbol: &MultiplierSymbol, t: f64) -> Result<Vec<f64>> {
    grid.xi_abs()
        .iter()
        .map(|&r| Ok((-t * symbol.eval(r)?).exp()))
        .collect()
}

/// Orthogonal projection onto the closed frequency ball `|xi| <= R`.
pub fn project_ball(f: &SpectralField, radius: f64) -> Result<SpectralField> {
    if !(radius > 0.0) {
        return Err(invalid("R", format!("must be positive, got {radius}")));
    }
    let mut s = f.spectrum();
    s.apply_radial(|r| Ok(Complex64::new(if in_ball(r, radius) { 1.0 } else { 0.0 }, 0.0)))?;
    Ok(s.to_field())
}

/// Closed-ball membership with a relative slack so lattice points lying on
/// the sphere up to rounding are kept.
pub(crate) fn in_ball(r: f64, radius: f64) -> bool {
    r <= radius * (1.0 + 1e-12)
}

/// `(sum_cells fraction * |f|^2 * dx^dim)^{1/2}`.
pub fn restricted_norm(f: &SpectralField, mask: &SupportMask) -> Result<f64> {
    f.grid().check_same(mask.grid())?;
    let w = f.grid().cell_volume();
    let s: f64 = f
        .values()
        .iter()
        .zip(mask.fractions())
        .map(|(v, m)| m * v.norm_sqr())
        .sum();
    Ok((s * w).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::MultiplierSymbol;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> SpectralField {
        let values = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        SpectralField::new(grid, values).unwrap()
    }

    #[test]
    fn unit_spacing_lattice_on_two_pi_box() {
        let g = make_grid(1, 2.0 * PI, 8).unwrap();
        let k: Vec<f64> = g.axis_frequencies();
        let expect = [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        for (a, b) in k.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn spacing_and_nyquist() {
        let g = make_grid(1, 40.0, 256).unwrap();
        assert_eq!(g.dx(), 0.15625);
        assert_relative_eq!(g.xi_max(), PI * 256.0 / 40.0, max_relative = 1e-15);
        assert_relative_eq!(g.xi_max(), 20.106192982974676, max_relative = 1e-12);
        assert_eq!(g.dx() * g.points() as f64, g.extent());
    }

    #[test]
    fn two_dimensional_small_grid() {
        let g = make_grid(2, 2.0 * PI, 4).unwrap();
        assert_eq!(g.len(), 16);
        let k = g.axis_frequencies();
        assert_eq!(k.len(), 4);
        for (a, b) in k.iter().zip([-2.0, -1.0, 0.0, 1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_grid(1, 1.0, 9).is_err());
        assert!(make_grid(3, 1.0, 8).is_err());
        assert!(make_grid(1, 0.0, 8).is_err());
        assert!(make_grid(1, -2.0, 8).is_err());
    }

    #[test]
    fn plancherel_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..100 {
            let g = if trial % 2 == 0 {
                make_grid(1, 7.3, 64).unwrap()
            } else {
                make_grid(2, 3.1, 16).unwrap()
            };
            let f = random_field(&g, &mut rng);
            let lhs = f.norm_sqr();
            let rhs = f.spectrum().norm_sqr();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn semigroup_identity_and_constant_symbol() {
        let g = make_grid(1, 10.0, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_field(&g, &mut rng);
        let same = apply_semigroup(&f, &MultiplierSymbol::halfheat(), 0.0).unwrap();
        assert_eq!(same.values(), f.values());

        let c = MultiplierSymbol::constant(1.7);
        let out = apply_semigroup(&f, &c, 0.4).unwrap();
        let k = (-1.7f64 * 0.4).exp();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b * k).norm() <= 1e-13);
        }
        assert!(apply_semigroup(&f, &c, f64::NAN).is_err());
        assert!(apply_semigroup(&f, &c, -1.0).is_err());
    }

    #[test]
    fn projection_keeps_closed_ball() {
        let g = make_grid(1, 2.0 * PI, 16).unwrap();
        let mode = |k: f64| SpectralField::from_fn(&g, move |x| Complex64::from_polar(1.0, k * x[0]));
        let on_sphere = mode(3.0);
        let kept = project_ball(&on_sphere, 3.0).unwrap();
        assert!(kept.sub(&on_sphere).unwrap().norm() < 1e-12);
        let outside = mode(4.0);
        assert!(project_ball(&outside, 3.0).unwrap().norm() < 1e-12);
        assert!(project_ball(&outside, 0.0).is_err());
    }

    #[test]
    fn projection_idempotent_and_self_adjoint() {
        let g = make_grid(2, 6.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_field(&g, &mut rng);
        let h = random_field(&g, &mut rng);
        let p = project_ball(&f, 4.0).unwrap();
        let pp = project_ball(&p, 4.0).unwrap();
        assert!(pp.sub(&p).unwrap().norm() <= 1e-13 * f.norm());
        let a = p.inner(&h).unwrap();
        let b = f.inner(&project_ball(&h, 4.0).unwrap()).unwrap();
        assert!((a - b).norm() <= 1e-12 * f.norm() * h.norm());
    }

    #[test]
    fn semigroup_group_law_commutation_and_contraction() {
        let g = make_grid(1, 12.0, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(&g, &mut rng);
        let h = random_field(&g, &mut rng);
        let sym = MultiplierSymbol::loglog(1.0, 0.5).unwrap();
        let a = apply_semigroup(&apply_semigroup(&f, &sym, 0.3).unwrap(), &sym, 0.2).unwrap();
        let b = apply_semigroup(&f, &sym, 0.5).unwrap();
        assert!(a.sub(&b).unwrap().norm() <= 1e-12 * b.norm());

        let pa = project_ball(&apply_semigroup(&f, &sym, 0.7).unwrap(), 5.0).unwrap();
        let pb = apply_semigroup(&project_ball(&f, 5.0).unwrap(), &sym, 0.7).unwrap();
        assert!(pa.sub(&pb).unwrap().norm() <= 1e-13 * f.norm());

        let l = apply_semigroup(&f, &sym, 0.4).unwrap().inner(&h).unwrap();
        let r = f.inner(&apply_semigroup(&h, &sym, 0.4).unwrap()).unwrap();
        assert!((l - r).norm() <= 1e-12 * f.norm() * h.norm());

        let shifted = MultiplierSymbol::shifted(sym.clone(), 2.0);
        let inf_lattice = g
            .xi_abs()
            .iter()
            .map(|&r| shifted.eval(r).unwrap())
            .fold(f64::INFINITY, f64::min);
        for t in [0.0, 0.1, 0.5, 2.0] {
            let out = apply_semigroup(&f, &shifted, t).unwrap();
            assert!(out.norm() <= (-t * inf_lattice).exp() * f.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn restricted_norm_cases() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let one = SpectralField::from_real(&g, |_| 1.0);
        let full = SupportMask::full(&g);
        assert_relative_eq!(restricted_norm(&one, &full).unwrap(), one.norm(), max_relative = 1e-14);
        assert_eq!(restricted_norm(&one, &SupportMask::empty(&g)).unwrap(), 0.0);
        let half = SupportMask::from_fractions(
            &g,
            (0..64).map(|i| if i < 32 { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        assert_relative_eq!(half.total_measure(), PI, max_relative = 1e-14);
        assert_relative_eq!(restricted_norm(&one, &half).unwrap(), PI.sqrt(), max_relative = 1e-14);
    }
}
