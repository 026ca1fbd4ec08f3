//! Band-limited subspace `{f : supp f^ in closed B(0, R)}` in the orthonormal
//! plane-wave basis `e_k(x) = e^{i xi_k . x} / sqrt(|box|)`, and the
//! compression `K_R 1_omega K_R` of a mask onto it.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::spectral::{in_ball, Grid, SpectralField, Spectrum};
use crate::thick::SupportMask;

#[derive(Clone, Debug)]
pub struct BandSpace {
    grid: Grid,
    radius: f64,
    /// Flattened FFT-order indices of the lattice points in the ball.
    indices: Vec<usize>,
}

impl BandSpace {
    pub fn new(grid: &Grid, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(invalid("R", format!("must be non-negative, got {radius}")));
        }
        let indices = grid
            .xi_abs()
            .iter()
            .enumerate()
            .filter(|(_, &r)| in_ball(r, radius))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            grid: grid.clone(),
            radius,
            indices,
        })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Orthonormal-basis coordinates of `K_R f`.
    pub fn coordinates(&self, spectrum: &Spectrum) -> Vec<Complex64> {
        let s = 1.0 / self.grid.volume().sqrt();
        self.indices.iter().map(|&i| spectrum.coeffs()[i] * s).collect()
    }

    pub fn spectrum_of(&self, coords: &[Complex64]) -> Spectrum {
        let mut c = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        let s = self.grid.volume().sqrt();
        for (&i, v) in self.indices.iter().zip(coords) {
            c[i] = v * s;
        }
        Spectrum::new(&self.grid, c).expect("grid sized")
    }

    pub fn field_of(&self, coords: &[Complex64]) -> SpectralField {
        self.spectrum_of(coords).to_field()
    }

    /// Applies `K_R 1_omega K_R` matrix-free (two FFTs).
    pub fn apply_compression(&self, mask: &SupportMask, coords: &[Complex64]) -> Vec<Complex64> {
        let mut f = self.field_of(coords);
        for (v, m) in f.values_mut().iter_mut().zip(mask.fractions()) {
            *v *= m;
        }
        self.coordinates(&f.spectrum())
    }

    /// Dense Hermitian matrix `<e_k, 1_omega e_j>`.
    pub fn compression_matrix(&self, mask: &SupportMask) -> Result<DMatrix<Complex64>> {
        self.grid.check_same(mask.grid())?;
        let mut raw: Vec<Complex64> = mask
            .fractions()
            .iter()
            .map(|&m| Complex64::new(m, 0.0))
            .collect();
        self.grid.dft(&mut raw);
        let n = self.grid.points();
        let scale = 1.0 / self.grid.len() as f64;
        let d = self.dim();
        let split = |i: usize| -> (usize, usize) {
            if self.grid.dim() == 1 {
                (i, 0)
            } else {
                (i / n, i % n)
            }
        };
        let mut a = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for (r, &ki) in self.indices.iter().enumerate() {
            let (k0, k1) = split(ki);
            for (c, &ji) in self.indices.iter().enumerate() {
                let (j0, j1) = split(ji);
                let i0 = (k0 + n - j0) % n;
                let i1 = (k1 + n - j1) % n;
                let flat = if self.grid.dim() == 1 { i0 } else { i0 * n + i1 };
                a[(r, c)] = raw[flat] * scale;
            }
        }
        Ok(a)
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(mat: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = mat.nrows();
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Conjugate gradients for a Hermitian positive-definite operator.
pub fn conjugate_gradient(
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    rhs: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<Complex64>, usize)> {
    let mut x = vec![Complex64::new(0.0, 0.0); rhs.len()];
    let mut r = rhs.to_vec();
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r).re;
    for it in 0..max_iter {
        if rr.sqrt() <= tol * b_norm {
            return Ok((x, it));
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap).re;
        if !(pap > 0.0) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rr.sqrt() / b_norm,
            });
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = dot(&r, &r).re;
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + p[i] * beta;
        }
        rr = rr_new;
    }
    if rr.sqrt() <= tol * b_norm {
        Ok((x, max_iter))
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: rr.sqrt() / b_norm,
        })
    }
}
