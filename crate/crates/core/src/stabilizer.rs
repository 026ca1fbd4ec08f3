//! Closed-loop stabilization `d_t f = -F(|D|) f - lambda 1_omega K_R f` with the
//! Lyapunov functional `V = mu |K_R f|^2 + |(1 - K_R) f|^2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::band::{conjugate_gradient, dot, hermitian_eigen, norm, BandSpace};
use crate::error::{invalid, Error, Result};
use crate::spectral::{in_ball, SpectralField, Spectrum};
use crate::symbol::{alpha_r, MultiplierSymbol};
use crate::thick::SupportMask;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Gains of the low-mode feedback for a given cut-off `R` and spectral constant `C`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeedbackConfig {
    pub radius: f64,
    pub constant: f64,
    pub inf_f: f64,
    pub alpha_r: f64,
    pub alpha_tilde: f64,
    pub lambda: f64,
    pub mu: f64,
    pub predicted_rate: f64,
    /// Apply the feedback as `K_R 1_omega` instead of `1_omega K_R`.
    pub adjoint_order: bool,
}

impl FeedbackConfig {
    /// Largest step accepted by the splitting integrator.
    pub fn dt_max(&self) -> f64 {
        if self.lambda > 0.0 {
            0.1 / self.lambda
        } else {
            f64::INFINITY
        }
    }

    /// Prefactor `sqrt(2) C e^{CR}` of the decay envelope.
    pub fn decay_prefactor(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.constant * (self.constant * self.radius).exp()
    }

    /// Same configuration with the gain overridden (e.g. `0` for the open loop).
    pub fn with_gain(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_adjoint_order(mut self, adjoint: bool) -> Self {
        self.adjoint_order = adjoint;
        self
    }
}

/// Computes `alpha_R`, `lambda = C e^{CR} alpha_tilde` and `mu = 2 C^2 e^{2CR}`.
pub fn design_feedback(symbol: &MultiplierSymbol, radius: f64, constant: f64) -> Result<FeedbackConfig> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("R", format!("must be positive, got {radius}")));
    }
    if !(constant >= 1.0 && constant.is_finite()) {
        return Err(invalid("C", format!("must be at least 1, got {constant}")));
    }
    let r_max = (100.0 * radius).max(1e3);
    let mut alpha = alpha_r(symbol, radius, r_max, 4096)?.value;
    if let Some(limit) = symbol.limit_at_infinity() {
        alpha = alpha.min(limit);
    }
    let inf_f = symbol.inf_value();
    let alpha_tilde = alpha - inf_f;
    if !(alpha_tilde > 0.0) {
        return Err(Error::BelowStabilizableRegime {
            r: radius,
            alpha_tilde,
        });
    }
    let growth = (constant * radius).exp();
    Ok(FeedbackConfig {
        radius,
        constant,
        inf_f,
        alpha_r: alpha,
        alpha_tilde,
        lambda: constant * growth * alpha_tilde,
        mu: 2.0 * constant * constant * growth * growth,
        predicted_rate: (alpha + inf_f) / 2.0,
        adjoint_order: false,
    })
}

/// Best constant in `|f| <= C |f|_{L^2(omega)}` over the band `|xi| <= R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralConstant {
    pub value: f64,
    pub lambda_min: f64,
    pub band_dim: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// Inverse power iteration on `K_R 1_omega K_R` restricted to the band, inner
/// solves by conjugate gradients, best of `trials` seeded random starts.
pub fn estimate_spectral_constant(
    mask: &SupportMask,
    radius: f64,
    trials: usize,
    iterations: usize,
    seed: u64,
) -> Result<SpectralConstant> {
    if !(radius > 0.0) || radius > mask.grid().xi_max() * (1.0 + 1e-12) {
        return Err(invalid(
            "R",
            format!("must lie in (0, {}], got {radius}", mask.grid().xi_max()),
        ));
    }
    if trials == 0 || iterations == 0 {
        return Err(invalid("trials", "trials and iterations must be positive"));
    }
    if mask.total_measure() <= 0.0 {
        return Err(invalid("mask", "empty support gives an infinite constant"));
    }
    let band = BandSpace::new(mask.grid(), radius)?;
    let d = band.dim();
    let apply = |x: &[Complex64]| band.apply_compression(mask, x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<SpectralConstant> = None;
    let mut last_failure = None;
    for _ in 0..trials {
        let mut x: Vec<Complex64> = (0..d)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        normalize(&mut x);
        let mut rho = dot(&x, &apply(&x)).re;
        let mut stalled = 0;
        let mut outcome = None;
        let mut residual = f64::INFINITY;
        for it in 1..=iterations {
            let (mut y, _) = conjugate_gradient(apply, &x, 1e-14, 20 * d + 100)?;
            normalize(&mut y);
            let ay = apply(&y);
            let next = dot(&y, &ay).re;
            residual = norm(
                &ay.iter()
                    .zip(&y)
                    .map(|(a, v)| a - v * next)
                    .collect::<Vec<_>>(),
            );
            let change = (next - rho).abs();
            rho = next;
            x = y;
            stalled = if change <= 1e-15 * rho { stalled + 1 } else { 0 };
            if residual <= 1e-12 || stalled >= 3 {
                outcome = Some(it);
                break;
            }
        }
        match outcome {
            Some(it) if rho > 0.0 => {
                let candidate = SpectralConstant {
                    value: 1.0 / rho.sqrt(),
                    lambda_min: rho,
                    band_dim: d,
                    iterations: it,
                    residual,
                };
                if best.as_ref().map_or(true, |b| candidate.lambda_min < b.lambda_min) {
                    best = Some(candidate);
                }
            }
            _ => last_failure = Some(residual),
        }
    }
    best.ok_or(Error::NoConvergence {
        iterations,
        residual: last_failure.unwrap_or(f64::NAN),
    })
}

/// Same constant from a dense eigensolve of the compression matrix.
pub fn spectral_constant_dense(mask: &SupportMask, radius: f64) -> Result<f64> {
    let band = BandSpace::new(mask.grid(), radius)?;
    let (values, _) = hermitian_eigen(band.compression_matrix(mask)?);
    match values.first() {
        Some(&v) if v > 0.0 => Ok(1.0 / v.sqrt()),
        Some(_) => Err(invalid("mask", "compression is singular on the band")),
        None => Err(invalid("R", "band space is empty")),
    }
}

fn normalize(x: &mut [Complex64]) {
    let n = norm(x);
    for v in x.iter_mut() {
        *v /= n;
    }
}

/// `(|K_R f|^2, |(1 - K_R) f|^2)`.
fn split_energy(s: &Spectrum, radius: f64) -> (f64, f64) {
    let v = s.grid().volume();
    let (mut low, mut high) = (0.0, 0.0);
    for (c, &r) in s.coeffs().iter().zip(s.grid().xi_abs()) {
        if in_ball(r, radius) {
            low += c.norm_sqr();
        } else {
            high += c.norm_sqr();
        }
    }
    (low / v, high / v)
}

/// `V(f) = mu |K_R f|^2 + |(1 - K_R) f|^2`.
pub fn lyapunov(f: &SpectralField, cfg: &FeedbackConfig) -> f64 {
    let (low, high) = split_energy(&f.spectrum(), cfg.radius);
    cfg.mu * low + high
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Integrator {
    /// Strang splitting: exact multiplier half-steps around an RK4 step of the feedback.
    Splitting,
    /// Exact propagation on the band plus driven high modes; any step size.
    Exact,
}

enum Propagator {
    Splitting {
        half: Vec<f64>,
        low: Vec<bool>,
        mask: SupportMask,
        lambda: f64,
        adjoint: bool,
        dt: f64,
    },
    Exact(ExactStep),
}

struct ExactStep {
    band: Vec<usize>,
    high: Vec<usize>,
    high_decay: Vec<f64>,
    eig_decay: Vec<f64>,
    vectors: DMatrix<Complex64>,
    /// `high x d` (default order) or `d x high` (adjoint order).
    coupling: DMatrix<Complex64>,
    adjoint: bool,
    scale: f64,
}

/// `int_0^dt e^{-(dt - s) a} e^{-s b} ds`.
fn duhamel_weight(a: f64, b: f64, dt: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let x = (hi - lo) * dt;
    let ratio = if x < 1e-12 { 1.0 } else { -(-x).exp_m1() / x };
    (-lo * dt).exp() * dt * ratio
}

impl Propagator {
    fn new(
        symbol: &MultiplierSymbol,
        mask: &SupportMask,
        cfg: &FeedbackConfig,
        dt: f64,
        integrator: Integrator,
    ) -> Result<Self> {
        let grid = mask.grid().clone();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be finite and non-negative, got {}", cfg.lambda)));
        }
        let symbol_values: Vec<f64> = grid
            .xi_abs()
            .iter()
            .map(|&r| symbol.eval(r))
            .collect::<Result<_>>()?;
        match integrator {
            Integrator::Splitting => {
                if dt > cfg.dt_max() * (1.0 + 1e-12) {
                    return Err(invalid(
                        "dt",
                        format!("{dt} exceeds dt_max = 0.1/lambda = {}", cfg.dt_max()),
                    ));
                }
                Ok(Propagator::Splitting {
                    half: symbol_values.iter().map(|f| (-0.5 * dt * f).exp()).collect(),
                    low: grid.xi_abs().iter().map(|&r| in_ball(r, cfg.radius)).collect(),
                    mask: mask.clone(),
                    lambda: cfg.lambda,
                    adjoint: cfg.adjoint_order,
                    dt,
                })
            }
            Integrator::Exact => {
                let space = BandSpace::new(&grid, cfg.radius)?;
                let band = space.indices().to_vec();
                let mut is_low = vec![false; grid.len()];
                for &i in &band {
                    is_low[i] = true;
                }
                let high: Vec<usize> = (0..grid.len()).filter(|&i| !is_low[i]).collect();
                let d = band.len();
                let mut h = space.compression_matrix(mask)? * Complex64::new(cfg.lambda, 0.0);
                for (k, &i) in band.iter().enumerate() {
                    h[(k, k)] += symbol_values[i];
                }
                let (eig, vectors) = hermitian_eigen(h);
                let scale = grid.volume().sqrt();
                // Columns: high-mode coordinates of 1_omega w_j.
                let mut leak = DMatrix::from_element(high.len(), d, ZERO);
                for j in 0..d {
                    let w: Vec<Complex64> = vectors.column(j).iter().copied().collect();
                    let mut f = space.field_of(&w);
                    for (v, m) in f.values_mut().iter_mut().zip(mask.fractions()) {
                        *v *= m;
                    }
                    let s = f.spectrum();
                    for (row, &i) in high.iter().enumerate() {
                        leak[(row, j)] = s.coeffs()[i] / scale;
                    }
                }
                let lambda = cfg.lambda;
                let coupling = if cfg.adjoint_order {
                    DMatrix::from_fn(d, high.len(), |j, row| {
                        -leak[(row, j)].conj() * lambda * duhamel_weight(symbol_values[high[row]], eig[j], dt)
                    })
                } else {
                    DMatrix::from_fn(high.len(), d, |row, j| {
                        -leak[(row, j)] * lambda * duhamel_weight(symbol_values[high[row]], eig[j], dt)
                    })
                };
                Ok(Propagator::Exact(ExactStep {
                    high_decay: high.iter().map(|&i| (-dt * symbol_values[i]).exp()).collect(),
                    eig_decay: eig.iter().map(|h| (-dt * h).exp()).collect(),
                    band,
                    high,
                    vectors,
                    coupling,
                    adjoint: cfg.adjoint_order,
                    scale,
                }))
            }
        }
    }

    fn step(&self, s: &mut Spectrum) {
        match self {
            Propagator::Splitting {
                half,
                low,
                mask,
                lambda,
                adjoint,
                dt,
            } => {
                for (c, f) in s.coeffs_mut().iter_mut().zip(half) {
                    *c *= f;
                }
                if *lambda != 0.0 {
                    let apply_b = |x: &Spectrum| -> Spectrum {
                        let mut y = x.clone();
                        if !*adjoint {
                            project(&mut y, low);
                        }
                        let mut f = y.to_field();
                        for (v, m) in f.values_mut().iter_mut().zip(mask.fractions()) {
                            *v *= m * lambda;
                        }
                        let mut out = f.spectrum();
                        if *adjoint {
                            project(&mut out, low);
                        }
                        out
                    };
                    // Classical RK4 on the linear autonomous system f' = -B f
                    // coincides with the degree-4 Taylor polynomial of e^{-dt B}.
                    let mut term = s.clone();
                    for k in 1..=4 {
                        term = apply_b(&term);
                        let factor = -dt / k as f64;
                        for (t, acc) in term.coeffs_mut().iter_mut().zip(s.coeffs_mut()) {
                            *t *= factor;
                            *acc += *t;
                        }
                    }
                }
                for (c, f) in s.coeffs_mut().iter_mut().zip(half) {
                    *c *= f;
                }
            }
            Propagator::Exact(e) => e.step(s),
        }
    }
}

fn project(s: &mut Spectrum, low: &[bool]) {
    for (c, &keep) in s.coeffs_mut().iter_mut().zip(low) {
        if !keep {
            *c = ZERO;
        }
    }
}

impl ExactStep {
    fn step(&self, s: &mut Spectrum) {
        let c = s.coeffs_mut();
        let u = DVector::from_iterator(self.band.len(), self.band.iter().map(|&i| c[i] / self.scale));
        let v = DVector::from_iterator(self.high.len(), self.high.iter().map(|&i| c[i] / self.scale));
        let mut y = self.vectors.adjoint() * u;
        let mut v_new = v.component_mul(&DVector::from_iterator(
            v.len(),
            self.high_decay.iter().map(|&d| Complex64::new(d, 0.0)),
        ));
        if self.adjoint {
            let forced = &self.coupling * &v;
            for (j, yj) in y.iter_mut().enumerate() {
                *yj = *yj * self.eig_decay[j] + forced[j];
            }
        } else {
            v_new += &self.coupling * &y;
            for (j, yj) in y.iter_mut().enumerate() {
                *yj *= self.eig_decay[j];
            }
        }
        let u_new = &self.vectors * y;
        for (k, &i) in self.band.iter().enumerate() {
            c[i] = u_new[k] * self.scale;
        }
        for (k, &i) in self.high.iter().enumerate() {
            c[i] = v_new[k] * self.scale;
        }
    }
}

/// One closed-loop step by Strang splitting; `dt <= 0.1 / lambda`.
pub fn step_closed_loop(
    f: &SpectralField,
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    cfg: &FeedbackConfig,
    dt: f64,
) -> Result<SpectralField> {
    f.grid().check_same(mask.grid())?;
    let prop = Propagator::new(symbol, mask, cfg, dt, Integrator::Splitting)?;
    let mut s = f.spectrum();
    prop.step(&mut s);
    Ok(s.to_field())
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub low_norms: Vec<f64>,
    pub high_norms: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<SpectralField>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest relative one-step increase of `V`, or `0` if `V` never grows.
    pub fn max_lyapunov_increase(&self) -> f64 {
        self.lyapunov
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] - 1.0 } else { 0.0 })
            .fold(0.0, f64::max)
    }

    /// Least-squares decay rate of `log |f(t)|` on `t >= (1 - tail) T`.
    pub fn fitted_rate(&self, tail: f64) -> f64 {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        let start = (1.0 - tail) * t_end;
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.norms)
            .filter(|(&t, &n)| t >= start - 1e-12 && n > 0.0)
            .map(|(&t, &n)| (t, n.ln()))
            .collect();
        if pts.len() < 2 {
            return f64::INFINITY;
        }
        -least_squares_slope(&pts)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,norm,lyapunov,low_norm,high_norm\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i], self.norms[i], self.lyapunov[i], self.low_norms[i], self.high_norms[i]
            ));
        }
        out
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    least_squares_line(pts).1
}

/// `(intercept, slope)` of the least-squares line through `pts`.
pub(crate) fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub integrator: Integrator,
    /// Store a field snapshot every this many steps (always including `t = 0`).
    pub snapshot_every: Option<usize>,
    /// Fraction of `[0, T]` used by the rate fit.
    pub tail_fraction: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::Splitting,
            snapshot_every: None,
            tail_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilizationRun {
    pub trajectory: Trajectory,
    pub fitted_rate: f64,
    pub dt: f64,
    pub steps: usize,
}

/// Integrates the closed loop over `[0, T]` with `round(T/dt)` equal steps.
pub fn run_stabilization(
    f0: &SpectralField,
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    cfg: &FeedbackConfig,
    t_final: f64,
    dt: f64,
    options: &RunOptions,
) -> Result<StabilizationRun> {
    f0.grid().check_same(mask.grid())?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(invalid("T", format!("must be positive, got {t_final}")));
    }
    if !(dt > 0.0 && dt <= t_final) {
        return Err(invalid("dt", format!("must lie in (0, T], got {dt}")));
    }
    if !(options.tail_fraction > 0.0 && options.tail_fraction <= 1.0) {
        return Err(invalid("tail_fraction", "must lie in (0, 1]"));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let h = t_final / steps as f64;
    let prop = Propagator::new(symbol, mask, cfg, h, options.integrator)?;
    let mut s = f0.spectrum();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        norms: Vec::with_capacity(steps + 1),
        lyapunov: Vec::with_capacity(steps + 1),
        low_norms: Vec::with_capacity(steps + 1),
        high_norms: Vec::with_capacity(steps + 1),
        snapshot_times: Vec::new(),
        snapshots: Vec::new(),
    };
    let record = |traj: &mut Trajectory, s: &Spectrum, step: usize| -> Result<()> {
        let (low, high) = split_energy(s, cfg.radius);
        let total = low + high;
        if !total.is_finite() {
            return Err(Error::NonFiniteState { step });
        }
        let t = step as f64 * h;
        traj.times.push(t);
        traj.norms.push(total.sqrt());
        traj.lyapunov.push(cfg.mu * low + high);
        traj.low_norms.push(low.sqrt());
        traj.high_norms.push(high.sqrt());
        if let Some(every) = options.snapshot_every {
            if step % every.max(1) == 0 {
                traj.snapshot_times.push(t);
                traj.snapshots.push(s.to_field());
            }
        }
        Ok(())
    };
    record(&mut traj, &s, 0)?;
    for step in 1..=steps {
        prop.step(&mut s);
        record(&mut traj, &s, step)?;
    }
    let fitted_rate = traj.fitted_rate(options.tail_fraction);
    Ok(StabilizationRun {
        trajectory: traj,
        fitted_rate,
        dt: h,
        steps,
    })
}

/// Relative defect of `f(T) = e^{-TA} f(0) - int_0^T e^{-(T-t)A} B f(t) dt`
/// with the integral taken by the trapezoid rule over every `stride`-th snapshot.
pub fn duhamel_residual(
    traj: &Trajectory,
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    cfg: &FeedbackConfig,
    stride: usize,
) -> Result<f64> {
    let stride = stride.max(1);
    let picks: Vec<usize> = (0..traj.snapshots.len()).step_by(stride).collect();
    if picks.len() < 2 {
        return Err(invalid("snapshots", "need at least two snapshots for the quadrature"));
    }
    let grid = mask.grid();
    traj.snapshots[0].grid().check_same(grid)?;
    let symbol_values: Vec<f64> = grid
        .xi_abs()
        .iter()
        .map(|&r| symbol.eval(r))
        .collect::<Result<_>>()?;
    let low: Vec<bool> = grid.xi_abs().iter().map(|&r| in_ball(r, cfg.radius)).collect();
    let t_end = traj.snapshot_times[*picks.last().expect("non-empty")];
    let mut rhs = traj.snapshots[picks[0]].spectrum();
    for (c, f) in rhs.coeffs_mut().iter_mut().zip(&symbol_values) {
        *c *= (-(t_end - traj.snapshot_times[picks[0]]) * f).exp();
    }
    for (k, &idx) in picks.iter().enumerate() {
        let weight = match k {
            0 => 0.5 * (traj.snapshot_times[picks[1]] - traj.snapshot_times[idx]),
            _ if k == picks.len() - 1 => 0.5 * (traj.snapshot_times[idx] - traj.snapshot_times[picks[k - 1]]),
            _ => 0.5 * (traj.snapshot_times[picks[k + 1]] - traj.snapshot_times[picks[k - 1]]),
        };
        let mut b = traj.snapshots[idx].spectrum();
        if !cfg.adjoint_order {
            project(&mut b, &low);
        }
        let mut f = b.to_field();
        for (v, m) in f.values_mut().iter_mut().zip(mask.fractions()) {
            *v *= m * cfg.lambda;
        }
        let mut b = f.spectrum();
        if cfg.adjoint_order {
            project(&mut b, &low);
        }
        let lag = t_end - traj.snapshot_times[idx];
        for ((acc, c), f) in rhs.coeffs_mut().iter_mut().zip(b.coeffs()).zip(&symbol_values) {
            *acc -= c * (weight * (-lag * f).exp());
        }
    }
    let state = traj.snapshots[*picks.last().expect("non-empty")].spectrum();
    let diff: f64 = state
        .coeffs()
        .iter()
        .zip(rhs.coeffs())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let scale = state.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
    if scale == 0.0 {
        return Ok(diff.sqrt());
    }
    Ok((diff / scale).sqrt())
}

/// Largest deviation of `|f_mu(t)| / (e^{mu t} |f(t)|)` from `1`, where `f_mu`
/// runs the same feedback on `F - mu`.
pub fn shift_covariance_deviation(
    f0: &SpectralField,
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    cfg: &FeedbackConfig,
    t_final: f64,
    dt: f64,
    mu: f64,
    options: &RunOptions,
) -> Result<f64> {
    let base = run_stabilization(f0, symbol, mask, cfg, t_final, dt, options)?;
    let shifted = MultiplierSymbol::shifted(symbol.clone(), mu);
    let moved = run_stabilization(f0, &shifted, mask, cfg, t_final, dt, options)?;
    let mut worst = 0.0f64;
    for ((t, a), b) in base
        .trajectory
        .times
        .iter()
        .zip(&base.trajectory.norms)
        .zip(&moved.trajectory.norms)
    {
        if *a > 0.0 {
            worst = worst.max((b / (a * (mu * t).exp()) - 1.0).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{apply_semigroup, make_grid, project_ball};
    use crate::thick::make_periodic_thick;
    use approx::assert_relative_eq;

    fn smooth_field(grid: &crate::spectral::Grid) -> SpectralField {
        let l = grid.extent();
        SpectralField::from_real(grid, |x| {
            (-(x[0] - 0.4 * l).powi(2) / 2.0).exp() + 0.3 * (2.0 * std::f64::consts::PI * 3.0 * x[0] / l).cos()
        })
    }

    #[test]
    fn design_examples() {
        let c = design_feedback(&MultiplierSymbol::fractional(1.0).unwrap(), 2.0, 1.0).unwrap();
        assert_relative_eq!(c.alpha_r, 4.0, max_relative = 1e-12);
        assert_relative_eq!(c.lambda, 4.0 * 2f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(c.mu, 2.0 * 4f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(c.predicted_rate, 2.0, max_relative = 1e-12);
        let h = design_feedback(&MultiplierSymbol::halfheat(), 8.0, 1.0).unwrap();
        assert_relative_eq!(h.lambda, 8.0 * 8f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(h.predicted_rate, 4.0, max_relative = 1e-12);
        assert!(h.decay_prefactor() >= std::f64::consts::SQRT_2);
        assert!(matches!(
            design_feedback(&MultiplierSymbol::constant(2.0), 1.0, 1.0),
            Err(Error::BelowStabilizableRegime { .. })
        ));
        assert!(design_feedback(&MultiplierSymbol::halfheat(), 1.0, 0.5).is_err());
    }

    #[test]
    fn lyapunov_examples() {
        let g = make_grid(1, 2.0 * std::f64::consts::PI, 32).unwrap();
        let cfg = design_feedback(&MultiplierSymbol::halfheat(), 2.0, 1.0).unwrap();
        let high = SpectralField::from_fn(&g, |x| Complex64::new(0.0, 5.0 * x[0]).exp());
        assert_relative_eq!(lyapunov(&high, &cfg), high.norm_sqr(), max_relative = 1e-12);
        let low = SpectralField::from_fn(&g, |x| Complex64::new(0.0, x[0]).exp());
        assert_relative_eq!(lyapunov(&low, &cfg), cfg.mu * low.norm_sqr(), max_relative = 1e-12);
        let mut mixed = low.clone();
        mixed.add_scaled(&high, Complex64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(
            lyapunov(&mixed, &cfg),
            (cfg.mu * 0.5 + 0.5) * mixed.norm_sqr(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn spectral_constant_matches_dense_and_trivial_cases() {
        let g = make_grid(1, 16.0, 256).unwrap();
        let mask = make_periodic_thick(&g, 1.0, 0.5).unwrap();
        for r in [2.0, 4.0] {
            let it = estimate_spectral_constant(&mask, r, 3, 500, 1).unwrap();
            let dense = spectral_constant_dense(&mask, r).unwrap();
            assert_relative_eq!(it.value, dense, max_relative = 1e-8);
        }
        let full = SupportMask::full(&g);
        assert_relative_eq!(estimate_spectral_constant(&full, 3.0, 2, 100, 0).unwrap().value, 1.0, epsilon = 1e-10);
        let c0 = estimate_spectral_constant(&mask, 0.1, 1, 50, 0).unwrap();
        assert_eq!(c0.band_dim, 1);
        assert_relative_eq!(c0.value, (16.0 / mask.total_measure()).sqrt(), max_relative = 1e-12);
        assert!(estimate_spectral_constant(&SupportMask::empty(&g), 1.0, 1, 10, 0).is_err());
    }

    #[test]
    fn zero_gain_is_the_semigroup() {
        let g = make_grid(1, 16.0, 128).unwrap();
        let mask = make_periodic_thick(&g, 1.0, 0.5).unwrap();
        let sym = MultiplierSymbol::halfheat();
        let cfg = design_feedback(&sym, 2.0, 1.0).unwrap().with_gain(0.0);
        let f0 = smooth_field(&g);
        let one = step_closed_loop(&f0, &sym, &mask, &cfg, 0.01).unwrap();
        let exact = apply_semigroup(&f0, &sym, 0.01).unwrap();
        assert!(one.sub(&exact).unwrap().norm() <= 1e-14 * exact.norm());
        let opts = RunOptions {
            snapshot_every: Some(1),
            ..RunOptions::default()
        };
        let run = run_stabilization(&f0, &sym, &mask, &cfg, 0.5, 0.01, &opts).unwrap();
        for (t, snap) in run.trajectory.snapshot_times.iter().zip(&run.trajectory.snapshots) {
            let exact = apply_semigroup(&f0, &sym, *t).unwrap();
            assert!(snap.sub(&exact).unwrap().norm() <= 1e-12 * exact.norm());
        }
        assert!(duhamel_residual(&run.trajectory, &sym, &mask, &cfg, 1).unwrap() <= 1e-12);
    }

    #[test]
    fn full_box_commuting_case() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let mask = SupportMask::full(&g);
        let sym = MultiplierSymbol::fractional(0.5).unwrap();
        let cfg = design_feedback(&sym, g.xi_max(), 1.0).unwrap().with_gain(3.0);
        let f0 = smooth_field(&g);
        let dt = 1e-3;
        let out = step_closed_loop(&f0, &sym, &mask, &cfg, dt).unwrap();
        let want = apply_semigroup(&f0, &sym, dt).unwrap().scaled(Complex64::new((-3.0 * dt).exp(), 0.0));
        assert!(out.sub(&want).unwrap().norm() <= 1e-10 * want.norm());

        let gentle = cfg.clone().with_gain(0.2);
        let opts = RunOptions {
            snapshot_every: Some(1),
            ..RunOptions::default()
        };
        let run = run_stabilization(&f0, &sym, &mask, &gentle, 1.0, 1e-3, &opts).unwrap();
        assert!(duhamel_residual(&run.trajectory, &sym, &mask, &gentle, 1).unwrap() <= 1e-8);
    }

    #[test]
    fn exact_and_splitting_agree_for_moderate_gain() {
        let g = make_grid(1, 16.0, 128).unwrap();
        let mask = make_periodic_thick(&g, 1.0, 0.5).unwrap();
        let sym = MultiplierSymbol::halfheat();
        for adjoint in [false, true] {
            let cfg = design_feedback(&sym, 2.0, 1.0).unwrap().with_adjoint_order(adjoint);
            let f0 = smooth_field(&g);
            let opts = |integrator, every| RunOptions {
                integrator,
                snapshot_every: Some(every),
                ..RunOptions::default()
            };
            let a = run_stabilization(&f0, &sym, &mask, &cfg, 0.25, 1e-3, &opts(Integrator::Splitting, 250)).unwrap();
            let b = run_stabilization(&f0, &sym, &mask, &cfg, 0.25, 1e-3, &opts(Integrator::Exact, 250)).unwrap();
            let (fa, fb) = (a.trajectory.snapshots.last().unwrap(), b.trajectory.snapshots.last().unwrap());
            assert!(fa.sub(fb).unwrap().norm() <= 1e-4 * fb.norm(), "adjoint={adjoint} {}", fa.sub(fb).unwrap().norm() / fb.norm());
            let coarse = run_stabilization(&f0, &sym, &mask, &cfg, 0.25, 0.05, &opts(Integrator::Exact, 5)).unwrap();
            let fc = coarse.trajectory.snapshots.last().unwrap();
            assert!(fc.sub(fb).unwrap().norm() <= 1e-10 * fb.norm(), "adjoint={adjoint} {}", fc.sub(fb).unwrap().norm() / fb.norm());
        }
    }

    #[test]
    fn high_mode_decays_at_its_symbol_value() {
        let g = make_grid(1, 2.0 * std::f64::consts::PI, 64).unwrap();
        let mask = make_periodic_thick(&g, std::f64::consts::PI / 2.0, 0.5).unwrap();
        let sym = MultiplierSymbol::halfheat();
        let cfg = design_feedback(&sym, 3.0, 1.0).unwrap();
        let f0 = SpectralField::from_fn(&g, |x| Complex64::new(0.0, 7.0 * x[0]).exp());
        let run = run_stabilization(&f0, &sym, &mask, &cfg, 1.0, cfg.dt_max() / 2.0, &RunOptions::default()).unwrap();
        assert!((run.fitted_rate - 7.0).abs() <= 7e-9, "{}", run.fitted_rate);
        assert!(project_ball(&f0, 3.0).unwrap().norm() <= 1e-14 * f0.norm());
    }

    #[test]
    fn constant_mode_open_and_closed_loop() {
        let g = make_grid(1, 16.0, 128).unwrap();
        let mask = make_periodic_thick(&g, 1.0, 0.5).unwrap();
        let sym = MultiplierSymbol::halfheat();
        let f0 = SpectralField::from_real(&g, |_| 1.0);
        let cfg = design_feedback(&sym, 2.0, 1.0).unwrap();
        let open = run_stabilization(&f0, &sym, &mask, &cfg.clone().with_gain(0.0), 2.0, 0.01, &RunOptions::default()).unwrap();
        assert!(open.fitted_rate.abs() <= 1e-12);
        let opts = RunOptions {
            integrator: Integrator::Exact,
            ..RunOptions::default()
        };
        let closed = run_stabilization(&f0, &sym, &mask, &cfg, 4.0, 0.01, &opts).unwrap();
        assert!(closed.fitted_rate >= 0.45 * cfg.alpha_tilde, "{}", closed.fitted_rate);
    }

    #[test]
    fn shift_covariance_and_orthogonal_split() {
        let g = make_grid(1, 16.0, 64).unwrap();
        let mask = make_periodic_thick(&g, 1.0, 0.5).unwrap();
        let sym = MultiplierSymbol::halfheat();
        let cfg = design_feedback(&sym, 2.0, 1.0).unwrap();
        let f0 = smooth_field(&g);
        for integrator in [Integrator::Splitting, Integrator::Exact] {
            let opts = RunOptions {
                integrator,
                ..RunOptions::default()
            };
            let dev = shift_covariance_deviation(&f0, &sym, &mask, &cfg, 0.2, 5e-3, 0.7, &opts).unwrap();
            assert!(dev <= 1e-10, "{integrator:?}: {dev}");
            let run = run_stabilization(&f0, &sym, &mask, &cfg, 0.2, 5e-3, &opts).unwrap();
            let t = &run.trajectory;
            for i in 0..t.len() {
                let sum = t.low_norms[i].powi(2) + t.high_norms[i].powi(2);
                assert_relative_eq!(sum, t.norms[i].powi(2), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn rejects_oversized_steps() {
        let g = make_grid(1, 16.0, 64).unwrap();
        let mask = make_periodic_thick(&g, 1.0, 0.5).unwrap();
        let sym = MultiplierSymbol::halfheat();
        let cfg = design_feedback(&sym, 2.0, 1.0).unwrap();
        let f0 = smooth_field(&g);
        assert!(step_closed_loop(&f0, &sym, &mask, &cfg, 2.0 * cfg.dt_max()).is_err());
        assert!(step_closed_loop(&f0, &sym, &mask, &cfg, 0.0).is_err());
    }
}
