//! Bernstein moment sequences `M_k = sup_{r >= 0} r^k e^{-F(r)}` and the
//! quasi-analyticity toolkit built on them.
//!
//! Everything is carried in the log domain: `M_k` overflows `f64` for
//! moderate `k` (around 150 for `F(r) = r`).

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::symbol::{golden_min, phi_p, MultiplierSymbol};

/// Search settings for `sup_s k s - F(e^s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSearch {
    pub s_min: f64,
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for MomentSearch {
    fn default() -> Self {
        Self {
            s_min: -50.0,
            grid_points: 4096,
            tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogMoment {
    pub log_value: f64,
    pub argmax: f64,
}

/// `(log M_k, r*_k)`.
pub fn log_moment(symbol: &MultiplierSymbol, k: usize, search: &MomentSearch) -> Result<LogMoment> {
    let kf = k as f64;
    let s_lo = search.s_min;
    let s_hi = symbol.r_cap().ln();
    if !(s_hi > s_lo) {
        return Err(invalid("s_min", "search interval is empty"));
    }
    let neg_h = |s: f64| -> Result<f64> { Ok(symbol.eval(s.exp())? - kf * s) };

    let (s_best, neg_best) = if symbol.log_convex_hint() {
        golden_min(neg_h, s_lo, s_hi, search.tol)?
    } else {
        let n = search.grid_points.max(3);
        let step = (s_hi - s_lo) / (n - 1) as f64;
        let mut best_i = 0;
        let mut best_v = f64::INFINITY;
        for i in 0..n {
            let v = neg_h(s_lo + step * i as f64)?;
            if v < best_v {
                best_v = v;
                best_i = i;
            }
        }
        let a = s_lo + step * best_i.saturating_sub(1) as f64;
        let b = (s_lo + step * (best_i + 1) as f64).min(s_hi);
        let (s, v) = golden_min(neg_h, a, b, search.tol)?;
        if v <= best_v {
            (s, v)
        } else {
            (s_lo + step * best_i as f64, best_v)
        }
    };

    // an objective still rising at the right end means the sup is not attained
    let probe = 1e-3 * (s_hi - s_lo);
    if s_hi - s_best < probe && neg_h(s_hi)? < neg_h(s_hi - probe)? {
        return Err(Error::SupremumInfinite { k, s_max: s_hi });
    }

    let mut out = LogMoment {
        log_value: -neg_best,
        argmax: s_best.exp(),
    };
    if k == 0 {
        // r = 0 is part of the range and only reachable exactly when k = 0
        let at_zero = -symbol.eval(0.0)?;
        if at_zero >= out.log_value {
            out = LogMoment {
                log_value: at_zero,
                argmax: 0.0,
            };
        }
    }
    Ok(out)
}

/// Log-domain moment sequence `k = 0..=k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct QASequence {
    symbol: Option<MultiplierSymbol>,
    log_moments: Vec<f64>,
    argmax: Vec<f64>,
    ratio_bound: f64,
}

impl QASequence {
    pub fn build(symbol: &MultiplierSymbol, k_max: usize, search: &MomentSearch) -> Result<Self> {
        let moments: Vec<LogMoment> = (0..=k_max)
            .into_par_iter()
            .map(|k| log_moment(symbol, k, search))
            .collect::<Result<_>>()?;
        let mut s = Self::from_log_moments(moments.iter().map(|m| m.log_value).collect())?;
        s.argmax = moments.iter().map(|m| m.argmax).collect();
        s.symbol = Some(symbol.clone());
        Ok(s)
    }

    /// Wraps externally supplied log moments (argmax unknown, reported as NaN).
    pub fn from_log_moments(log_moments: Vec<f64>) -> Result<Self> {
        if log_moments.is_empty() || log_moments.iter().any(|v| !v.is_finite()) {
            return Err(invalid("log_moments", "need a non-empty finite sequence"));
        }
        let ratio_bound = log_moments
            .windows(2)
            .map(|w| (w[0] - w[1]).exp())
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            symbol: None,
            argmax: vec![f64::NAN; log_moments.len()],
            log_moments,
            ratio_bound,
        })
    }

    pub fn symbol(&self) -> Option<&MultiplierSymbol> {
        self.symbol.as_ref()
    }

    pub fn k_max(&self) -> usize {
        self.log_moments.len() - 1
    }

    pub fn log_moments(&self) -> &[f64] {
        &self.log_moments
    }

    pub fn argmax(&self) -> &[f64] {
        &self.argmax
    }

    /// `sup_k M_k / M_{k+1}` over the computed range.
    pub fn ratio_bound(&self) -> f64 {
        self.ratio_bound
    }

    /// `M_k / M_{k+1}` for `k < k_max`.
    pub fn ratios(&self) -> Vec<f64> {
        self.log_moments
            .windows(2)
            .map(|w| (w[0] - w[1]).exp())
            .collect()
    }

    /// CSV with columns `k,log_moment,argmax,ratio,dc_partial_sum`, one row
    /// per `k <= k_max`. The partial sum column holds `S_k`; the ratio
    /// `M_k / M_{k+1}` is left empty on the last row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,log_moment,argmax,ratio,dc_partial_sum\n");
        let ratios = self.ratios();
        let mut partial = 0.0;
        for k in 0..self.log_moments.len() {
            let ratio = ratios.get(k).map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{k},{},{},{ratio},{partial}",
                self.log_moments[k], self.argmax[k]
            );
            if let Some(r) = ratios.get(k) {
                partial += r;
            }
        }
        out
    }
}

/// `S_K = sum_{k=0}^{K-1} M_k / M_{k+1}`.
pub fn dc_partial_sum(seq: &QASequence, terms: usize) -> Result<f64> {
    if terms > seq.k_max() {
        return Err(invalid(
            "K",
            format!("needs moments up to {terms}, sequence stops at {}", seq.k_max()),
        ));
    }
    Ok(seq.log_moments[..=terms]
        .windows(2)
        .map(|w| (w[0] - w[1]).exp())
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityReport {
    pub holds: bool,
    pub worst_violation: f64,
    pub worst_k: usize,
}

/// Checks `2 log M_k <= log M_{k+1} + log M_{k-1}` with tolerance
/// `1e-9 |log M_k| + 1e-12`.
pub fn log_convexity_report(seq: &QASequence) -> Result<ConvexityReport> {
    let lm = &seq.log_moments;
    if lm.len() < 3 {
        return Err(invalid("k_max", "log-convexity needs k_max >= 2"));
    }
    let mut holds = true;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_k = 1;
    for k in 1..lm.len() - 1 {
        let v = 2.0 * lm[k] - lm[k + 1] - lm[k - 1];
        if v > 1e-9 * lm[k].abs() + 1e-12 {
            holds = false;
        }
        if v > worst {
            worst = v;
            worst_k = k;
        }
    }
    Ok(ConvexityReport {
        holds,
        worst_violation: worst,
        worst_k,
    })
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `int_0^{T_max} F(t) / (1 + t^2) dt` by adaptive Simpson on dyadic panels.
pub fn integral_test(symbol: &MultiplierSymbol, t_max: f64) -> Result<f64> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(invalid("T_max", format!("must be positive, got {t_max}")));
    }
    // validate once so the integrand can be infallible
    symbol.eval(t_max)?;
    let f = |t: f64| symbol.eval(t).unwrap_or(f64::NAN) / (1.0 + t * t);
    let mut total = 0.0;
    let mut a = 0.0;
    let mut b = t_max.min(1.0);
    loop {
        let panel = adaptive_simpson(&f, a, b, 1e-12 * (b - a).max(1.0));
        total += panel;
        if b >= t_max {
            break;
        }
        a = b;
        b = (2.0 * b).min(t_max);
    }
    if total.is_nan() {
        return Err(Error::SymbolEvaluation {
            r: t_max,
            reason: "integrand not finite".into(),
        });
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `log M_k^{T F} <= (1/p - T) inf F + (1/p) log M_{kp}^F`.
pub fn scaling_inequality_check(
    symbol: &MultiplierSymbol,
    t: f64,
    p: u32,
    k: usize,
    search: &MomentSearch,
) -> Result<ScalingCheck> {
    if p == 0 {
        return Err(invalid("p", "must be positive"));
    }
    let inv_p = 1.0 / p as f64;
    if !(t >= inv_p * (1.0 - 1e-15)) {
        return Err(invalid("T", format!("need T >= 1/p = {inv_p}, got {t}")));
    }
    let scaled = MultiplierSymbol::scaled(symbol.clone(), t)?;
    let lhs = log_moment(&scaled, k, search)?.log_value;
    let rhs = (inv_p - t) * symbol.inf_value() + inv_p * log_moment(symbol, k * p as usize, search)?.log_value;
    let tol = 1e-9 * (1.0 + rhs.abs());
    Ok(ScalingCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + tol,
    })
}

/// Smallest `k` for which the critical-point checks are meaningful.
pub const K_FLOOR: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalPointBound {
    pub t_k: f64,
    pub bound: f64,
    pub holds: bool,
}

fn t_times_derivative_fd(sym: &MultiplierSymbol, t: f64) -> Result<f64> {
    let h = (1e-6 * t).max(1e-6);
    Ok(t * (sym.eval(t + h)? - sym.eval(t - h)?) / (2.0 * h))
}

/// Solves `t F_p'(t) = k` by bisection and compares with `2 k phi_p(k)`.
pub fn tk_bound_check(p: u32, k: usize) -> Result<CriticalPointBound> {
    if k < K_FLOOR {
        return Err(invalid("k", format!("must be at least {K_FLOOR}")));
    }
    let sym = MultiplierSymbol::iterated(p)?;
    let target = k as f64;
    let g = |t: f64| -> Result<f64> { Ok(t_times_derivative_fd(&sym, t)? - target) };
    let mut lo = target;
    if g(lo)? >= 0.0 {
        return Err(Error::BracketFailure { lo, hi: lo });
    }
    let mut hi = 2.0 * target;
    while g(hi)? <= 0.0 {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::BracketFailure { lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let t_k = 0.5 * (lo + hi);
    let bound = 2.0 * target * phi_p(target, p);
    Ok(CriticalPointBound {
        t_k,
        bound,
        holds: t_k <= bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioBound {
    pub ratio: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `M_{k-1} / M_k >= 1 / (2 k phi_p(k))` for `F_p`.
pub fn ratio_lower_bound_check(p: u32, k: usize, search: &MomentSearch) -> Result<RatioBound> {
    if k < K_FLOOR {
        return Err(invalid("k", format!("must be at least {K_FLOOR}")));
    }
    let sym = MultiplierSymbol::iterated(p)?;
    let a = log_moment(&sym, k - 1, search)?.log_value;
    let b = log_moment(&sym, k, search)?.log_value;
    let ratio = (a - b).exp();
    let bound = 1.0 / (2.0 * k as f64 * phi_p(k as f64, p));
    Ok(RatioBound {
        ratio,
        bound,
        holds: ratio >= bound,
    })
}
