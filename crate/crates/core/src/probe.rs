//! Modulated Gaussian probes `g(x) = l^{-n} exp(i x.xi0 - |x - x0|^2 / (2 l^2))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{Grid, SpectralField};

/// Spatial margin: the probe must fit `PROBE_WIDTHS` widths inside half the box.
pub const PROBE_WIDTHS: f64 = 6.0;
/// Frequency margin: `|xi0| + PROBE_FREQ_WIDTHS / l <= xi_max`.
pub const PROBE_FREQ_WIDTHS: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianProbe {
    pub center: Vec<f64>,
    pub modulation: Vec<f64>,
    pub width: f64,
}

impl GaussianProbe {
    pub fn new(center: Vec<f64>, modulation: Vec<f64>, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(invalid("width", format!("must be positive, got {width}")));
        }
        if center.len() != modulation.len() || center.is_empty() || center.len() > 2 {
            return Err(invalid("center", "center and modulation must share dimension 1 or 2"));
        }
        Ok(Self {
            center,
            modulation,
            width,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn modulation_norm(&self) -> f64 {
        self.modulation.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Checks the width/box and modulation/Nyquist margins.
    pub fn check_admissible(&self, grid: &Grid) -> Result<()> {
        if self.dim() != grid.dim() {
            return Err(Error::InadmissibleProbe(format!(
                "probe dimension {} on a {}-D grid",
                self.dim(),
                grid.dim()
            )));
        }
        if PROBE_WIDTHS * self.width > grid.extent() / 2.0 {
            return Err(Error::InadmissibleProbe(format!(
                "width {} too large for extent {}",
                self.width,
                grid.extent()
            )));
        }
        if self.modulation_norm() + PROBE_FREQ_WIDTHS / self.width > grid.xi_max() {
            return Err(Error::InadmissibleProbe(format!(
                "|xi0| + {PROBE_FREQ_WIDTHS}/l = {} exceeds Nyquist radius {}",
                self.modulation_norm() + PROBE_FREQ_WIDTHS / self.width,
                grid.xi_max()
            )));
        }
        Ok(())
    }

    /// Closed-form `||g||^2 = (pi / l^2)^{n/2}`.
    pub fn norm_sqr_exact(&self) -> f64 {
        (PI / (self.width * self.width)).powf(self.dim() as f64 / 2.0)
    }

    /// Closed-form transform `(2 pi)^{n/2} exp(-i x0.(xi - xi0) - l^2 |xi - xi0|^2 / 2)`.
    pub fn transform_exact(&self, xi: &[f64]) -> Complex64 {
        let n = self.dim();
        let mut phase = 0.0;
        let mut dist2 = 0.0;
        for a in 0..n {
            let d = xi[a] - self.modulation[a];
            phase -= self.center[a] * d;
            dist2 += d * d;
        }
        let amp = (2.0 * PI).powf(n as f64 / 2.0) * (-0.5 * self.width * self.width * dist2).exp();
        Complex64::from_polar(amp, phase)
    }

    fn value_at(&self, x: &[f64]) -> Complex64 {
        let n = self.dim();
        let mut phase = 0.0;
        let mut dist2 = 0.0;
        for a in 0..n {
            phase += x[a] * self.modulation[a];
            let d = x[a] - self.center[a];
            dist2 += d * d;
        }
        let amp = self.width.powi(-(n as i32)) * (-dist2 / (2.0 * self.width * self.width)).exp();
        Complex64::from_polar(amp, phase)
    }
}

/// Samples the probe with one periodic image per axis on each side.
pub fn sample_probe(probe: &GaussianProbe, grid: &Grid) -> Result<SpectralField> {
    probe.check_admissible(grid)?;
    let ell = grid.extent();
    let images: &[f64] = &[-1.0, 0.0, 1.0];
    let field = match grid.dim() {
        1 => SpectralField::from_fn(grid, |x| {
            images
                .iter()
                .map(|m| probe.value_at(&[x[0] + m * ell]))
                .sum()
        }),
        _ => SpectralField::from_fn(grid, |x| {
            let mut acc = Complex64::new(0.0, 0.0);
            for mx in images {
                for my in images {
                    acc += probe.value_at(&[x[0] + mx * ell, x[1] + my * ell]);
                }
            }
            acc
        }),
    };
    Ok(field)
}

/// Deterministic dictionary of admissible probes with widths drawn from
/// `[width_min, width_max]`, centres anywhere in the box and modulations
/// inside the admissible frequency ball.
pub fn random_probes(
    grid: &Grid,
    count: usize,
    width_min: f64,
    width_max: f64,
    seed: u64,
) -> Result<Vec<GaussianProbe>> {
    if !(width_min > 0.0 && width_min <= width_max) {
        return Err(invalid("width", "need 0 < width_min <= width_max"));
    }
    if PROBE_WIDTHS * width_max > grid.extent() / 2.0 {
        return Err(invalid("width_max", "too wide for the box"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let width = rng.gen_range(width_min..=width_max);
        let budget = grid.xi_max() - PROBE_FREQ_WIDTHS / width;
        if budget < 0.0 {
            return Err(invalid("width_min", "too narrow for the grid resolution"));
        }
        let center: Vec<f64> = (0..grid.dim())
            .map(|_| rng.gen_range(0.0..grid.extent()))
            .collect();
        // uniform radius in [0, budget / sqrt(dim)] per axis keeps |xi0| <= budget
        let per_axis = budget / (grid.dim() as f64).sqrt();
        let modulation: Vec<f64> = (0..grid.dim())
            .map(|_| rng.gen_range(-per_axis..=per_axis))
            .collect();
        let p = GaussianProbe::new(center, modulation, width)?;
        p.check_admissible(grid)?;
        out.push(p);
    }
    Ok(out)
}
