//! Control supports as per-cell measure fractions, and thickness certificates.
//!
//! A set is `gamma`-thick at scale `L` when every axis-aligned `L`-cube meets
//! it in measure at least `gamma L^n`. On the torus the windows wrap
//! cyclically, and window placements run over the cell lattice.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::spectral::Grid;

/// Sub-samples per axis used to resolve cells cut by a ball boundary.
const BALL_SUBSAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub gamma: f64,
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct SupportMask {
    grid: Grid,
    fractions: Vec<f64>,
    total_measure: f64,
    certificate: Option<Certificate>,
}

impl SupportMask {
    pub fn from_fractions(grid: &Grid, fractions: Vec<f64>) -> Result<Self> {
        if fractions.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "mask has {} cells, grid has {}",
                fractions.len(),
                grid.len()
            )));
        }
        if let Some(bad) = fractions.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("fraction", format!("cell fraction {bad} outside [0, 1]")));
        }
        let total_measure = fractions.iter().sum::<f64>() * grid.cell_volume();
        Ok(Self {
            grid: grid.clone(),
            fractions,
            total_measure,
            certificate: None,
        })
    }

    pub fn full(grid: &Grid) -> Self {
        let mut m = Self::from_fractions(grid, vec![1.0; grid.len()]).expect("valid");
        m.certificate = Some(Certificate {
            gamma: 1.0,
            scale: grid.extent(),
        });
        m
    }

    pub fn empty(grid: &Grid) -> Self {
        Self::from_fractions(grid, vec![0.0; grid.len()]).expect("valid")
    }

    /// Mask built from a site predicate on cell corners `[x, y]`.
    pub fn from_predicate(grid: &Grid, inside: impl Fn([f64; 2]) -> bool) -> Self {
        let f = (0..grid.len())
            .map(|i| if inside(grid.x_at(i)) { 1.0 } else { 0.0 })
            .collect();
        Self::from_fractions(grid, f).expect("valid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn total_measure(&self) -> f64 {
        self.total_measure
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        self.certificate.as_ref()
    }

    pub fn with_certificate(mut self, gamma: f64, scale: f64) -> Self {
        self.certificate = Some(Certificate { gamma, scale });
        self
    }

    /// Pointwise `self >= other`.
    pub fn dominates(&self, other: &SupportMask) -> bool {
        self.fractions
            .iter()
            .zip(&other.fractions)
            .all(|(a, b)| a >= b)
    }

    /// Cyclic shift by whole cells along each axis.
    pub fn shifted(&self, shift: [usize; 2]) -> Self {
        let n = self.grid.points();
        let mut out = vec![0.0; self.fractions.len()];
        match self.grid.dim() {
            1 => {
                for i in 0..n {
                    out[(i + shift[0]) % n] = self.fractions[i];
                }
            }
            _ => {
                for r in 0..n {
                    for c in 0..n {
                        out[((r + shift[0]) % n) * n + (c + shift[1]) % n] = self.fractions[r * n + c];
                    }
                }
            }
        }
        Self::from_fractions(&self.grid, out).expect("valid")
    }

    /// Pointwise complement `1 - fraction`.
    pub fn complement(&self) -> Self {
        Self::from_fractions(&self.grid, self.fractions.iter().map(|v| 1.0 - v).collect())
            .expect("valid")
    }

    /// SHA-256 of the mask file encoding, hex.
    pub fn content_hash(&self) -> String {
        let bytes = crate::io::encode_mask(self);
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn cells_per(grid: &Grid, length: f64, name: &'static str) -> Result<usize> {
    let c = length / grid.dx();
    let r = c.round();
    if r < 1.0 || (c - r).abs() > 1e-9 * c.max(1.0) {
        return Err(invalid(
            name,
            format!("{length} is not a positive multiple of the cell size {}", grid.dx()),
        ));
    }
    Ok(r as usize)
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Union over the period lattice of `[j P, j P + fill P)^dim`.
pub fn make_periodic_thick(grid: &Grid, period: f64, fill: f64) -> Result<SupportMask> {
    if !(period > 0.0) {
        return Err(invalid("period", "must be positive"));
    }
    if !(fill > 0.0 && fill <= 1.0) {
        return Err(invalid("fill", format!("must lie in (0, 1], got {fill}")));
    }
    let copies = grid.extent() / period;
    if (copies - copies.round()).abs() > 1e-9 * copies || copies.round() < 1.0 {
        return Err(invalid("period", "must divide the box extent"));
    }
    if fill * period < grid.dx() * (1.0 - 1e-12) {
        return Err(invalid("fill", "fill * period must span at least one cell"));
    }
    let n = grid.points();
    let dx = grid.dx();
    let on = fill * period;
    // exact 1-D cell coverage by the periodic union
    let axis: Vec<f64> = (0..n)
        .map(|j| {
            let a = j as f64 * dx;
            let b = a + dx;
            let first = (a / period).floor() as i64 - 1;
            let last = (b / period).ceil() as i64 + 1;
            let covered: f64 = (first..=last)
                .map(|q| {
                    let s = q as f64 * period;
                    overlap(a, b, s, s + on)
                })
                .sum();
            (covered / dx).clamp(0.0, 1.0)
        })
        .collect();
    let fractions = match grid.dim() {
        1 => axis,
        _ => {
            let mut v = Vec::with_capacity(n * n);
            for a in &axis {
                for b in &axis {
                    v.push(a * b);
                }
            }
            v
        }
    };
    let gamma = fill.powi(grid.dim() as i32);
    Ok(SupportMask::from_fractions(grid, fractions)?.with_certificate(gamma, period))
}

fn torus_delta(a: f64, b: f64, ell: f64) -> f64 {
    let d = (a - b).rem_euclid(ell);
    d.min(ell - d)
}

/// Complement of the (periodically wrapped) ball `B(center, radius)`.
pub fn make_ball_complement(grid: &Grid, center: &[f64], radius: f64) -> Result<SupportMask> {
    if center.len() != grid.dim() {
        return Err(invalid("center", "dimension mismatch"));
    }
    if !(radius >= 0.0) || 2.0 * radius > grid.extent() {
        return Err(invalid("radius", "ball must fit in the box"));
    }
    if radius == 0.0 {
        return Ok(SupportMask::full(grid));
    }
    let dx = grid.dx();
    let ell = grid.extent();
    let dim = grid.dim();
    let half_diag = 0.5 * dx * (dim as f64).sqrt();
    let sub = BALL_SUBSAMPLES;
    let fractions = (0..grid.len())
        .map(|i| {
            let x = grid.x_at(i);
            let mid: Vec<f64> = (0..dim).map(|a| x[a] + 0.5 * dx).collect();
            let dist = (0..dim)
                .map(|a| torus_delta(mid[a], center[a], ell).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist + half_diag < radius {
                return 0.0;
            }
            if dist - half_diag > radius {
                return 1.0;
            }
            let mut outside = 0usize;
            let total = sub.pow(dim as u32);
            for q in 0..total {
                let mut d2 = 0.0;
                let mut rem = q;
                for a in 0..dim {
                    let k = rem % sub;
                    rem /= sub;
                    let p = x[a] + (k as f64 + 0.5) * dx / sub as f64;
                    d2 += torus_delta(p, center[a], ell).powi(2);
                }
                if d2.sqrt() > radius {
                    outside += 1;
                }
            }
            outside as f64 / total as f64
        })
        .collect();
    SupportMask::from_fractions(grid, fractions)
}

/// Random support thick at scale `L`: each aligned `L`-cube first receives
/// uniformly drawn cells until it holds `gamma L^n`; then any sliding window
/// still short of `gamma L^n` receives further random cells from inside it.
pub fn make_random_thick(grid: &Grid, scale: f64, gamma: f64, seed: u64) -> Result<SupportMask> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    let w = cells_per(grid, scale, "L")?;
    let n = grid.points();
    if n % w != 0 {
        return Err(invalid("L", "must divide the box extent"));
    }
    let dim = grid.dim();
    let window_cells = w.pow(dim as u32);
    let need = (gamma * window_cells as f64 - 1e-9).ceil().max(0.0) as usize;
    if gamma * (window_cells as f64) < 1.0 - 1e-9 {
        return Err(Error::Infeasible(format!(
            "gamma L^n = {} is below one cell measure",
            gamma * scale.powi(dim as i32)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frac = vec![0.0; grid.len()];
    let blocks = n / w;
    let block_count = blocks.pow(dim as u32);
    for b in 0..block_count {
        let (br, bc) = if dim == 1 { (b, 0) } else { (b / blocks, b % blocks) };
        let mut cells: Vec<usize> = (0..window_cells)
            .map(|q| {
                if dim == 1 {
                    br * w + q
                } else {
                    (br * w + q / w) * n + bc * w + q % w
                }
            })
            .collect();
        cells.shuffle(&mut rng);
        for &c in cells.iter().take(need) {
            frac[c] = 1.0;
        }
    }
    let target = need as f64 / window_cells as f64;
    loop {
        let mask = SupportMask::from_fractions(grid, frac.clone())?;
        let Some((pos, value)) = worst_window(&mask, w, 1) else {
            break;
        };
        if value + 1e-12 >= target {
            break;
        }
        let empty: Vec<usize> = window_cells_at(grid, pos, w)
            .into_iter()
            .filter(|&c| frac[c] < 1.0)
            .collect();
        let pick = empty[rng.gen_range(0..empty.len())];
        frac[pick] = 1.0;
    }
    Ok(SupportMask::from_fractions(grid, frac)?.with_certificate(gamma, scale))
}

fn window_cells_at(grid: &Grid, pos: usize, w: usize) -> Vec<usize> {
    let n = grid.points();
    match grid.dim() {
        1 => (0..w).map(|k| (pos + k) % n).collect(),
        _ => {
            let (r0, c0) = (pos / n, pos % n);
            let mut v = Vec::with_capacity(w * w);
            for a in 0..w {
                for b in 0..w {
                    v.push(((r0 + a) % n) * n + (c0 + b) % n);
                }
            }
            v
        }
    }
}

/// Returns `(window origin index, fraction)` of the emptiest window.
fn worst_window(mask: &SupportMask, w: usize, stride: usize) -> Option<(usize, f64)> {
    let grid = mask.grid();
    let n = grid.points();
    let f = mask.fractions();
    let area = w.pow(grid.dim() as u32) as f64;
    let mut best: Option<(usize, f64)> = None;
    let mut consider = |pos: usize, sum: f64| {
        let v = sum / area;
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((pos, v));
        }
    };
    match grid.dim() {
        1 => {
            // cyclic prefix sums over a doubled sequence
            let mut prefix = vec![0.0; 2 * n + 1];
            for i in 0..2 * n {
                prefix[i + 1] = prefix[i] + f[i % n];
            }
            let mut p = 0;
            while p < n {
                consider(p, prefix[p + w] - prefix[p]);
                p += stride;
            }
        }
        _ => {
            let m = 2 * n + 1;
            let mut prefix = vec![0.0; m * m];
            for r in 0..2 * n {
                for c in 0..2 * n {
                    prefix[(r + 1) * m + c + 1] = f[(r % n) * n + c % n] + prefix[r * m + c + 1]
                        + prefix[(r + 1) * m + c]
                        - prefix[r * m + c];
                }
            }
            let mut r = 0;
            while r < n {
                let mut c = 0;
                while c < n {
                    let s = prefix[(r + w) * m + c + w] - prefix[r * m + c + w] - prefix[(r + w) * m + c]
                        + prefix[r * m + c];
                    consider(r * n + c, s);
                    c += stride;
                }
                r += stride;
            }
        }
    }
    best
}

/// `min` over cyclic window placements (every `stride` cells) of
/// `|omega cap window| / L^n`.
pub fn thickness_certificate(mask: &SupportMask, scale: f64, stride: usize) -> Result<f64> {
    if stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }
    if scale > mask.grid().extent() * (1.0 + 1e-12) {
        return Err(invalid("L", "window larger than the box"));
    }
    let w = cells_per(mask.grid(), scale, "L")?;
    Ok(worst_window(mask, w, stride).map(|(_, v)| v).unwrap_or(0.0))
}
