//! Observability estimates for `e^{-tF(|D|)}` from a support `omega`: probe
//! dictionaries, necessity scans, growth of the spectral constant, good/bad
//! cube decompositions, penalised control synthesis and the bounded-symbol
//! scaling experiment.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::band::conjugate_gradient;
use crate::error::{invalid, Error, Result};
use crate::probe::{sample_probe, GaussianProbe, PROBE_FREQ_WIDTHS};
use crate::qa::{log_moment, MomentSearch};
use crate::spectral::{Grid, SpectralField, Spectrum};
use crate::stabilizer::{estimate_spectral_constant, least_squares_line};
use crate::symbol::MultiplierSymbol;
use crate::thick::{make_ball_complement, SupportMask};

const MIN_QUADRATURE_STEPS: usize = 32;

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid("T", format!("must be positive, got {t}")))
    }
}

fn symbol_table(grid: &Grid, symbol: &MultiplierSymbol, freq_scale: f64) -> Result<Vec<f64>> {
    grid.xi_abs().iter().map(|&r| symbol.eval(r * freq_scale)).collect()
}

fn decayed(s: &Spectrum, table: &[f64], t: f64) -> Spectrum {
    let mut out = s.clone();
    for (c, f) in out.coeffs_mut().iter_mut().zip(table) {
        *c *= (-t * f).exp();
    }
    out
}

fn masked_energy(f: &SpectralField, mask: &SupportMask) -> f64 {
    let w = f.grid().cell_volume();
    f.values()
        .iter()
        .zip(mask.fractions())
        .map(|(v, m)| m * v.norm_sqr())
        .sum::<f64>()
        * w
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1]))
}

/// `t -> |e^{-tF} g|^2_{L^2(omega)}` sampled on `steps + 1` uniform times in `[0, T]`.
fn observed_integrand(s: &Spectrum, table: &[f64], mask: &SupportMask, t_final: f64, steps: usize) -> Vec<f64> {
    let h = t_final / steps as f64;
    (0..=steps)
        .map(|j| masked_energy(&decayed(s, table, j as f64 * h).to_field(), mask))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResult {
    pub id: usize,
    pub probe: GaussianProbe,
    pub norm_sqr: f64,
    /// `|e^{-TF} g|^2`.
    pub lhs: f64,
    /// `int_0^T |e^{-tF} g|^2_{L^2(omega)} dt`.
    pub obs_integral: f64,
    /// `max(0, (lhs - eps |g|^2) / obs_integral)`; infinite when nothing is observed.
    pub required_c: f64,
    pub infinite: bool,
    #[serde(skip)]
    pub integrand: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservabilityReport {
    pub symbol: String,
    pub mask_hash: String,
    pub t: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub probe_results: Vec<ProbeResult>,
    /// Largest required constant; a lower bound for any admissible constant.
    pub c_est: f64,
    pub c_est_infinite: bool,
}

impl ObservabilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn evaluate_probe(
    id: usize,
    probe: &GaussianProbe,
    table: &[f64],
    mask: &SupportMask,
    t_final: f64,
    epsilon: f64,
    steps: usize,
) -> Result<ProbeResult> {
    let g = sample_probe(probe, mask.grid())?;
    let s = g.spectrum();
    let norm_sqr = g.norm_sqr();
    let lhs = decayed(&s, table, t_final).norm_sqr();
    let integrand = observed_integrand(&s, table, mask, t_final, steps);
    let obs_integral = trapezoid(&integrand, t_final / steps as f64);
    let excess = lhs - epsilon * norm_sqr;
    let (required_c, infinite) = if excess <= 0.0 {
        (0.0, false)
    } else if obs_integral > 0.0 {
        (excess / obs_integral, false)
    } else {
        (f64::INFINITY, true)
    };
    Ok(ProbeResult {
        id,
        probe: probe.clone(),
        norm_sqr,
        lhs,
        obs_integral,
        required_c,
        infinite,
        integrand,
    })
}

/// Smallest `C` with `|e^{-TF} g|^2 <= C int_0^T |e^{-tF} g|^2_omega dt + eps |g|^2`
/// for every probe, time integral by the composite trapezoid rule.
pub fn estimate_observability_constant(
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    t_final: f64,
    epsilon: f64,
    probes: &[GaussianProbe],
    steps: usize,
) -> Result<ObservabilityReport> {
    check_epsilon(epsilon)?;
    check_time(t_final)?;
    if steps < MIN_QUADRATURE_STEPS {
        return Err(invalid(
            "steps",
            format!("need at least {MIN_QUADRATURE_STEPS} quadrature steps, got {steps}"),
        ));
    }
    for p in probes {
        p.check_admissible(mask.grid())?;
    }
    let table = symbol_table(mask.grid(), symbol, 1.0)?;
    let probe_results = probes
        .par_iter()
        .enumerate()
        .map(|(id, p)| evaluate_probe(id, p, &table, mask, t_final, epsilon, steps))
        .collect::<Result<Vec<_>>>()?;
    let c_est = probe_results.iter().map(|r| r.required_c).fold(0.0, f64::max);
    Ok(ObservabilityReport {
        symbol: symbol.to_string(),
        mask_hash: mask.content_hash(),
        t: t_final,
        epsilon,
        steps,
        c_est_infinite: c_est.is_infinite(),
        probe_results,
        c_est,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftIdentity {
    pub holds: bool,
    pub worst_relative_error: f64,
}

/// Recomputes the report for `F - mu` and compares with
/// `lhs_mu = e^{2T mu} lhs` and `integrand_mu(t) = e^{2t mu} integrand(t)`.
pub fn shift_observability_identity_check(
    report: &ObservabilityReport,
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    mu: f64,
) -> Result<ShiftIdentity> {
    let probes: Vec<GaussianProbe> = report.probe_results.iter().map(|r| r.probe.clone()).collect();
    let shifted = MultiplierSymbol::shifted(symbol.clone(), mu);
    let moved = estimate_observability_constant(&shifted, mask, report.t, report.epsilon, &probes, report.steps)?;
    let h = report.t / report.steps as f64;
    let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { (a / b - 1.0).abs() };
    let mut worst = 0.0f64;
    for (a, b) in report.probe_results.iter().zip(&moved.probe_results) {
        worst = worst.max(rel(b.lhs, a.lhs * (2.0 * report.t * mu).exp()));
        for (j, (x, y)) in a.integrand.iter().zip(&b.integrand).enumerate() {
            worst = worst.max(rel(*y, x * (2.0 * j as f64 * h * mu).exp()));
        }
    }
    Ok(ShiftIdentity {
        holds: worst <= 1e-10,
        worst_relative_error: worst,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NecessityRow {
    pub center: Vec<f64>,
    pub lhs: f64,
    pub obs_integral: f64,
    pub required_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NecessityScan {
    pub modulation: Vec<f64>,
    pub width: f64,
    pub rows: Vec<NecessityRow>,
    /// Index of the first probe that violates the estimate with the given `C`.
    pub witness: Option<usize>,
}

/// Lattice frequency (along the first axis) minimising `F` among admissible
/// modulations, required to satisfy `e^{-2TF} > eps`.
fn pick_modulation(symbol: &MultiplierSymbol, grid: &Grid, width: f64, t_final: f64, epsilon: f64) -> Result<Vec<f64>> {
    let budget = grid.xi_max() - PROBE_FREQ_WIDTHS / width;
    let mut best: Option<(f64, f64)> = None;
    for xi in grid.axis_frequencies() {
        if xi.abs() > budget {
            continue;
        }
        let v = symbol.eval(xi.abs())?;
        let better = match best {
            None => true,
            Some((bx, bv)) => v < bv || (v == bv && xi.abs() < bx.abs()),
        };
        if better {
            best = Some((xi, v));
        }
    }
    let (xi, v) = best.ok_or_else(|| invalid("width", "no admissible modulation on this grid"))?;
    if (-2.0 * t_final * v).exp() <= epsilon {
        return Err(Error::Infeasible(format!(
            "no frequency with e^(-2TF) > eps: min F = {v} needs F <= ln(1/eps)/(2T) = {}",
            (1.0 / epsilon).ln() / (2.0 * t_final)
        )));
    }
    let mut m = vec![0.0; grid.dim()];
    m[0] = xi;
    Ok(m)
}

/// Required constants for probes of a fixed width centred along `centers`.
pub fn necessity_probe_scan(
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    t_final: f64,
    epsilon: f64,
    constant: f64,
    centers: &[Vec<f64>],
    width: f64,
    steps: usize,
) -> Result<NecessityScan> {
    check_epsilon(epsilon)?;
    check_time(t_final)?;
    if !(constant > 0.0) {
        return Err(invalid("C", format!("must be positive, got {constant}")));
    }
    let modulation = pick_modulation(symbol, mask.grid(), width, t_final, epsilon)?;
    let probes = centers
        .iter()
        .map(|c| GaussianProbe::new(c.clone(), modulation.clone(), width))
        .collect::<Result<Vec<_>>>()?;
    let report = estimate_observability_constant(symbol, mask, t_final, epsilon, &probes, steps)?;
    let rows: Vec<NecessityRow> = report
        .probe_results
        .iter()
        .map(|r| NecessityRow {
            center: r.probe.center.clone(),
            lhs: r.lhs,
            obs_integral: r.obs_integral,
            required_c: r.required_c,
        })
        .collect();
    let witness = rows.iter().position(|r| r.required_c > constant);
    Ok(NecessityScan {
        modulation,
        width,
        rows,
        witness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KovrijkineFit {
    pub radii: Vec<f64>,
    pub constants: Vec<f64>,
    pub intercept: f64,
    pub slope: f64,
    /// Largest absolute residual of the linear fit of `log C_emp`.
    pub max_residual: f64,
    /// `max_residual` divided by the range of `log C_emp` (`0` for a flat curve).
    pub residual_ratio: f64,
    pub non_decreasing: bool,
    /// Slope `C_n L log(C_n / gamma)` of the theoretical bound, when certified.
    pub bound_slope: Option<f64>,
}

/// `C_emp(R)` along a ladder of radii and the linear fit of `log C_emp` in `R`.
pub fn kovrijkine_empirical(
    mask: &SupportMask,
    radii: &[f64],
    c_n: f64,
    trials: usize,
    iterations: usize,
    seed: u64,
) -> Result<KovrijkineFit> {
    if radii.len() < 2 {
        return Err(invalid("radii", "need at least two radii"));
    }
    let constants = radii
        .par_iter()
        .map(|&r| estimate_spectral_constant(mask, r, trials, iterations, seed).map(|c| c.value))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = radii.iter().zip(&constants).map(|(&r, c)| (r, c.ln())).collect();
    let (intercept, slope) = least_squares_line(&pts);
    let max_residual = pts
        .iter()
        .map(|(r, y)| (y - intercept - slope * r).abs())
        .fold(0.0, f64::max);
    let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let residual_ratio = if range > 0.0 { max_residual / range } else { 0.0 };
    let non_decreasing = pts.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12);
    let bound_slope = mask
        .certificate()
        .map(|c| c_n * c.scale * (c_n / c.gamma).ln());
    Ok(KovrijkineFit {
        radii: radii.to_vec(),
        constants,
        intercept,
        slope,
        max_residual,
        residual_ratio,
        non_decreasing,
        bound_slope,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubeLabel {
    pub index: usize,
    pub good: bool,
    pub worst_beta: Vec<usize>,
    /// Largest ratio of `|d^beta u|^2_Q` to its threshold; `> 1` means bad.
    pub ratio: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubeReport {
    pub scale: f64,
    pub epsilon: f64,
    pub beta_max: usize,
    pub cubes: Vec<CubeLabel>,
    pub bad_fraction: f64,
    /// `sum_bad |u|^2_Q` with `u = e^{-T G} g`.
    pub bad_mass: f64,
    /// `eps |g|^2`.
    pub mass_bound: f64,
    /// Bound on the part of the defining sum beyond `beta_max`.
    pub tail_bound: f64,
}

impl CubeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cube,label,worst_beta,ratio\n");
        for c in &self.cubes {
            let beta: Vec<String> = c.worst_beta.iter().map(|b| b.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.index,
                if c.good { "good" } else { "bad" },
                beta.join(";"),
                c.ratio
            ));
        }
        out
    }
}

fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    if dim == 1 {
        vec![vec![order]]
    } else {
        (0..=order).map(|a| vec![a, order - a]).collect()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Labels each `L`-cube good when every `|beta| <= beta_max` satisfies
/// `|d^beta u|^2_Q <= 2^{2|beta|+n} / eps * (M_{|beta|})^2 |u|^2_Q`, with
/// `u = e^{-T G} g`, `G = F - inf F` and moments of `(T/2) G`.
pub fn classify_cubes(
    g: &SpectralField,
    symbol: &MultiplierSymbol,
    t_final: f64,
    epsilon: f64,
    scale: f64,
    beta_max: usize,
) -> Result<CubeReport> {
    check_epsilon(epsilon)?;
    check_time(t_final)?;
    if beta_max > 8 {
        return Err(invalid("beta_max", format!("at most 8, got {beta_max}")));
    }
    let grid = g.grid();
    let ratio = scale / grid.dx();
    let w = ratio.round() as usize;
    if w == 0 || (ratio - w as f64).abs() > 1e-9 * ratio || grid.points() % w != 0 {
        return Err(invalid("L", "cube side must be a whole number of cells dividing the box"));
    }
    let dim = grid.dim();
    let gen = MultiplierSymbol::shifted(symbol.clone(), symbol.inf_value());
    let half_time = MultiplierSymbol::scaled(gen.clone(), t_final / 2.0)?;
    let search = MomentSearch::default();
    let log_m = (0..=beta_max)
        .map(|k| log_moment(&half_time, k, &search).map(|m| m.log_value))
        .collect::<Result<Vec<_>>>()?;
    let table = symbol_table(grid, &gen, 1.0)?;
    let u = decayed(&g.spectrum(), &table, t_final);

    let per_axis = grid.points() / w;
    let n_cubes = per_axis.pow(dim as u32);
    let cube_of = |i: usize| -> usize {
        if dim == 1 {
            i / w
        } else {
            let (r, c) = (i / grid.points(), i % grid.points());
            (r / w) * per_axis + c / w
        }
    };
    let cell = grid.cell_volume();
    let local = |f: &SpectralField| -> Vec<f64> {
        let mut acc = vec![0.0; n_cubes];
        for (i, v) in f.values().iter().enumerate() {
            acc[cube_of(i)] += v.norm_sqr() * cell;
        }
        acc
    };
    let mass = local(&u.to_field());
    let mut labels: Vec<CubeLabel> = (0..n_cubes)
        .map(|index| CubeLabel {
            index,
            good: true,
            worst_beta: vec![0; dim],
            ratio: 0.0,
            mass: mass[index],
        })
        .collect();
    let two_pow_n = 2f64.powi(dim as i32);
    for order in 0..=beta_max {
        let coef = two_pow_n * 4f64.powi(order as i32) / epsilon * (2.0 * log_m[order]).exp();
        for beta in multi_indices(dim, order) {
            let mut d = u.clone();
            for (idx, c) in d.coeffs_mut().iter_mut().enumerate() {
                let xi = grid.xi_at(idx);
                let mut factor = Complex64::new(1.0, 0.0);
                for (axis, &b) in beta.iter().enumerate() {
                    factor *= Complex64::new(0.0, xi[axis]).powu(b as u32);
                }
                *c *= factor;
            }
            let deriv = local(&d.to_field());
            for (label, dm) in labels.iter_mut().zip(&deriv) {
                let threshold = coef * label.mass;
                let r = if threshold > 0.0 {
                    dm / threshold
                } else if *dm > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                if r > label.ratio {
                    label.ratio = r;
                    label.worst_beta = beta.clone();
                }
                if r > 1.0 {
                    label.good = false;
                }
            }
        }
    }
    let bad: Vec<&CubeLabel> = labels.iter().filter(|c| !c.good).collect();
    let bad_fraction = bad.len() as f64 / n_cubes as f64;
    let bad_mass = bad.iter().fold(0.0, |acc, c| acc + c.mass);
    let g_norm = g.norm_sqr();
    // sum over |beta| > beta_max of 2^{-2|beta|-n}, times eps |g|^2
    let tail: f64 = ((beta_max + 1)..(beta_max + 200))
        .map(|k| binomial(k + dim - 1, dim - 1) * 2f64.powi(-(2 * k as i32) - dim as i32))
        .sum();
    Ok(CubeReport {
        scale,
        epsilon,
        beta_max,
        cubes: labels,
        bad_fraction,
        bad_mass,
        mass_bound: epsilon * g_norm,
        tail_bound: epsilon * tail * g_norm,
    })
}

#[derive(Clone, Debug)]
pub struct ControlSynthesis {
    /// Slice boundaries `t_0 = 0 < ... < t_M = T`.
    pub times: Vec<f64>,
    /// Control on each slice, supported in `omega`.
    pub controls: Vec<SpectralField>,
    pub final_state: SpectralField,
    /// `int_0^T |h|^2_{L^2(omega)} dt`.
    pub cost: f64,
    pub penalty: f64,
    /// `|f(T)| / |f0|`.
    pub achieved_ratio: f64,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub slices: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub penalties: Vec<f64>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            slices: 32,
            tolerance: 1e-12,
            max_iterations: 5000,
            penalties: (0..10).map(|k| 10f64.powi(k)).collect(),
        }
    }
}

/// `(e^{-(T - t1) F} - e^{-(T - t0) F}) / F`, i.e. `int_{t0}^{t1} e^{-(T - s) F} ds`.
fn slice_weight(f: f64, lag_end: f64, dt: f64) -> f64 {
    let x = dt * f;
    let frac = if x.abs() < 1e-14 { dt } else { -(-x).exp_m1() / f };
    (-lag_end * f).exp() * frac
}

/// Penalised minimisation of `int_0^T |h|^2_omega dt + (K / eps) |f(T)|^2` over
/// controls constant on `slices` time slices; `K` climbs the ladder until
/// `|f(T)| <= eps |f0|`.
pub fn synthesize_control(
    f0: &SpectralField,
    symbol: &MultiplierSymbol,
    mask: &SupportMask,
    t_final: f64,
    epsilon: f64,
    options: &SynthesisOptions,
) -> Result<ControlSynthesis> {
    check_epsilon(epsilon)?;
    check_time(t_final)?;
    f0.grid().check_same(mask.grid())?;
    if options.slices == 0 || options.penalties.is_empty() {
        return Err(invalid("slices", "need at least one slice and one penalty"));
    }
    let grid = f0.grid();
    let m = options.slices;
    let dt = t_final / m as f64;
    let times: Vec<f64> = (0..=m).map(|j| j as f64 * dt).collect();
    let table = symbol_table(grid, symbol, 1.0)?;
    let weights: Vec<Vec<f64>> = (0..m)
        .map(|j| table.iter().map(|&f| slice_weight(f, t_final - times[j + 1], dt)).collect())
        .collect();
    let free = decayed(&f0.spectrum(), &table, t_final);
    let f0_norm = f0.norm();
    let zero_controls = || vec![SpectralField::zeros(grid); m];
    if f0_norm == 0.0 {
        return Ok(ControlSynthesis {
            times,
            controls: zero_controls(),
            final_state: f0.clone(),
            cost: 0.0,
            penalty: 0.0,
            achieved_ratio: 0.0,
            cg_iterations: 0,
        });
    }
    let masked = |coeffs: &[Complex64], w: &[f64]| -> SpectralField {
        let weighted: Vec<Complex64> = coeffs.iter().zip(w).map(|(c, x)| c * x).collect();
        Spectrum::new(grid, weighted).expect("grid sized").to_field()
    };
    let mut best: Option<ControlSynthesis> = None;
    for &penalty in &options.penalties {
        if !(penalty > 0.0) {
            return Err(invalid("penalty", "penalties must be positive"));
        }
        let gain = penalty / (epsilon * dt);
        // (I + gain sum_m Phi_m M Phi_m) f_T = e^{-TF} f0
        let apply = |x: &[Complex64]| -> Vec<Complex64> {
            let mut out = x.to_vec();
            for w in &weights {
                let mut f = masked(x, w);
                for (v, frac) in f.values_mut().iter_mut().zip(mask.fractions()) {
                    *v *= frac;
                }
                let s = f.spectrum();
                for ((o, c), x) in out.iter_mut().zip(s.coeffs()).zip(w) {
                    *o += c * (gain * x);
                }
            }
            out
        };
        let (f_t, iters) = conjugate_gradient(apply, free.coeffs(), options.tolerance, options.max_iterations)?;
        let mut controls = Vec::with_capacity(m);
        let mut cost = 0.0;
        let mut state = free.clone();
        for w in &weights {
            let mut h = masked(&f_t, w);
            for (v, frac) in h.values_mut().iter_mut().zip(mask.fractions()) {
                *v *= if *frac > 0.0 { -gain } else { 0.0 };
            }
            cost += dt * masked_energy(&h, mask);
            let mut source = h.clone();
            for (v, frac) in source.values_mut().iter_mut().zip(mask.fractions()) {
                *v *= frac;
            }
            for ((acc, c), x) in state.coeffs_mut().iter_mut().zip(source.spectrum().coeffs()).zip(w) {
                *acc += c * x;
            }
            controls.push(h);
        }
        let final_state = state.to_field();
        let achieved_ratio = final_state.norm() / f0_norm;
        let run = ControlSynthesis {
            times: times.clone(),
            controls,
            final_state,
            cost,
            penalty,
            achieved_ratio,
            cg_iterations: iters,
        };
        if achieved_ratio <= epsilon {
            return Ok(run);
        }
        if best.as_ref().map_or(true, |b| run.achieved_ratio < b.achieved_ratio) {
            best = Some(run);
        }
    }
    Err(Error::Infeasible(format!(
        "penalty ladder exhausted; best |f(T)|/|f0| = {}",
        best.map_or(f64::NAN, |b| b.achieved_ratio)
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegativeLimitRow {
    pub h: f64,
    /// `int_0^T0 |e^{-tF(|D|/h)} psi|^2 over the complement of B(c, r/h)`.
    pub integral: f64,
    /// `|psi|^2 / integral`.
    pub constant: f64,
    #[serde(skip)]
    pub integrand: Vec<f64>,
}

/// Observability integrals of a fixed `psi` under the rescaled semigroup
/// `e^{-tF(|D|/h)}` from the complement of the growing ball `B(center, r/h)`.
pub fn negative_limit_experiment(
    symbol: &MultiplierSymbol,
    psi: &SpectralField,
    center: &[f64],
    radius: f64,
    h_ladder: &[f64],
    t0: f64,
    steps: usize,
) -> Result<Vec<NegativeLimitRow>> {
    check_time(t0)?;
    if symbol.sup_value().is_none() {
        return Err(invalid("F", "the symbol must be bounded"));
    }
    match symbol.limit_at_infinity() {
        Some(l) if l >= 0.0 && l.is_finite() => {}
        _ => return Err(invalid("F", "the symbol needs a finite non-negative limit at infinity")),
    }
    if steps < MIN_QUADRATURE_STEPS {
        return Err(invalid("steps", format!("need at least {MIN_QUADRATURE_STEPS}")));
    }
    let grid = psi.grid();
    let s = psi.spectrum();
    let norm = psi.norm_sqr();
    h_ladder
        .par_iter()
        .map(|&h| {
            if !(h > 0.0) {
                return Err(invalid("h", format!("must be positive, got {h}")));
            }
            let mask = make_ball_complement(grid, center, radius / h)?;
            let table = symbol_table(grid, symbol, 1.0 / h)?;
            let integrand = observed_integrand(&s, &table, &mask, t0, steps);
            let integral = trapezoid(&integrand, t0 / steps as f64);
            Ok(NegativeLimitRow {
                h,
                integral,
                constant: if integral > 0.0 { norm / integral } else { f64::INFINITY },
                integrand,
            })
        })
        .collect()
}
