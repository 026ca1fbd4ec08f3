//! Diffusion symbols `F : [0, inf) -> R` and their infima.

use std::fmt;

use crate::error::{invalid, Error, Result};

/// Default upper end of the log-moment search range.
pub const DEFAULT_R_CAP: f64 = 1e8;
const DEFAULT_INF_R_MAX: f64 = 100.0;
const DEFAULT_INF_GRID: usize = 4096;
const E: f64 = std::f64::consts::E;

#[derive(Clone, Debug, PartialEq)]
pub enum SymbolFamily {
    /// `r^{2s}`.
    Fractional { s: f64 },
    /// `r`.
    HalfHeat,
    /// `r^s / log^delta(e + r)`.
    LogLog { s: f64, delta: f64 },
    /// `r / (g(r) g(g(r)) ... g^{p}(r))` with `g(t) = log(e + t)`.
    Iterated { p: u32 },
    /// `r / (1 + r)`, bounded with limit 1.
    Saturating,
    Constant { c: f64 },
    /// `base(r) - mu`.
    Shifted { base: Box<MultiplierSymbol>, mu: f64 },
    /// `factor * base(r)`, `factor > 0`.
    Scaled { base: Box<MultiplierSymbol>, factor: f64 },
    /// Piecewise-linear table with flat extrapolation.
    Custom { r: Vec<f64>, values: Vec<f64> },
}

/// A continuous, bounded-below symbol together with cached metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSymbol {
    family: SymbolFamily,
    inf_value: f64,
    inf_argmin: f64,
    monotone_tail: bool,
    log_convex: bool,
    r_cap: f64,
}

/// Result of a numerical infimum search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfResult {
    pub value: f64,
    pub argmin: f64,
    /// False when the minimiser sits at the right end of a range beyond which
    /// the symbol is not known to be non-decreasing.
    pub reliable: bool,
}

/// `g^{i}(t)` for `i = 1..=p`.
pub fn iterated_logs(t: f64, p: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(p as usize);
    let mut g = t;
    for _ in 0..p {
        g = (E + g).ln();
        out.push(g);
    }
    out
}

/// `phi_p(t) = g(t) g(g(t)) ... g^{p}(t)`.
pub fn phi_p(t: f64, p: u32) -> f64 {
    iterated_logs(t, p).iter().product()
}

/// Closed-form `phi_p'(t) / phi_p(t)`.
pub fn phi_p_log_derivative(t: f64, p: u32) -> f64 {
    let logs = iterated_logs(t, p);
    let mut sum = 0.0;
    // prod_{j=1}^{i} 1 / (e + g^{j-1}(t)), with g^0(t) = t
    let mut chain = 1.0;
    let mut prev = t;
    for gi in &logs {
        chain /= E + prev;
        sum += chain / gi;
        prev = *gi;
    }
    sum
}

/// Closed-form derivative of `F_p(t) = t / phi_p(t)`.
pub fn iterated_symbol_derivative(t: f64, p: u32) -> f64 {
    (1.0 - t * phi_p_log_derivative(t, p)) / phi_p(t, p)
}

impl MultiplierSymbol {
    fn build(family: SymbolFamily, monotone_tail: bool, log_convex: bool) -> Self {
        let mut sym = Self {
            family,
            inf_value: 0.0,
            inf_argmin: 0.0,
            monotone_tail,
            log_convex,
            r_cap: DEFAULT_R_CAP,
        };
        let inf = match &sym.family {
            SymbolFamily::Shifted { base, mu } => InfResult {
                value: base.inf_value - mu,
                argmin: base.inf_argmin,
                reliable: true,
            },
            SymbolFamily::Scaled { base, factor } => InfResult {
                value: base.inf_value * factor,
                argmin: base.inf_argmin,
                reliable: true,
            },
            SymbolFamily::Custom { r, .. } => {
                let r_max = r.last().copied().unwrap_or(1.0).max(1e-12);
                inf_f(&sym, r_max, DEFAULT_INF_GRID).expect("table symbol evaluates")
            }
            _ => inf_f(&sym, DEFAULT_INF_R_MAX, DEFAULT_INF_GRID).expect("family evaluates"),
        };
        sym.inf_value = inf.value;
        sym.inf_argmin = inf.argmin;
        sym
    }

    pub fn fractional(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("s", format!("must be positive, got {s}")));
        }
        Ok(Self::build(SymbolFamily::Fractional { s }, true, true))
    }

    pub fn halfheat() -> Self {
        Self::build(SymbolFamily::HalfHeat, true, true)
    }

    pub fn loglog(s: f64, delta: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("s", format!("must be positive, got {s}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be non-negative, got {delta}")));
        }
        Ok(Self::build(SymbolFamily::LogLog { s, delta }, true, true))
    }

    pub fn iterated(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(invalid("p", "must be a positive integer"));
        }
        Ok(Self::build(SymbolFamily::Iterated { p }, true, true))
    }

    pub fn saturating() -> Self {
        Self::build(SymbolFamily::Saturating, true, false)
    }

    pub fn constant(c: f64) -> Self {
        Self::build(SymbolFamily::Constant { c }, true, true)
    }

    pub fn shifted(base: MultiplierSymbol, mu: f64) -> Self {
        let (m, c, cap) = (base.monotone_tail, base.log_convex, base.r_cap);
        let mut s = Self::build(
            SymbolFamily::Shifted {
                base: Box::new(base),
                mu,
            },
            m,
            c,
        );
        s.r_cap = cap;
        s
    }

    pub fn scaled(base: MultiplierSymbol, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(invalid("factor", format!("must be positive, got {factor}")));
        }
        let (m, c, cap) = (base.monotone_tail, base.log_convex, base.r_cap);
        let mut s = Self::build(
            SymbolFamily::Scaled {
                base: Box::new(base),
                factor,
            },
            m,
            c,
        );
        s.r_cap = cap;
        Ok(s)
    }

    /// Tabulated symbol; `r` strictly increasing, starting at a non-negative point.
    pub fn custom(r: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if r.is_empty() || r.len() != values.len() {
            return Err(invalid("table", "need matching, non-empty r and value columns"));
        }
        if r[0] < 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("table", "r must be non-negative and strictly increasing"));
        }
        if r.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("table", "entries must be finite"));
        }
        let monotone = values.windows(2).all(|w| w[1] >= w[0]);
        Ok(Self::build(SymbolFamily::Custom { r, values }, monotone, false))
    }

    pub fn with_r_cap(mut self, r_cap: f64) -> Result<Self> {
        if !(r_cap > 1.0 && r_cap.is_finite()) {
            return Err(invalid("r_cap", format!("must exceed 1, got {r_cap}")));
        }
        self.r_cap = r_cap;
        Ok(self)
    }

    pub fn family(&self) -> &SymbolFamily {
        &self.family
    }

    /// Cached `inf F`.
    pub fn inf_value(&self) -> f64 {
        self.inf_value
    }

    pub fn monotone_tail(&self) -> bool {
        self.monotone_tail
    }

    /// Whether `s -> F(e^s)` is known to be convex.
    pub fn log_convex_hint(&self) -> bool {
        self.log_convex
    }

    pub fn r_cap(&self) -> f64 {
        self.r_cap
    }

    /// Finite upper bound of the symbol, when the family has one.
    pub fn sup_value(&self) -> Option<f64> {
        match &self.family {
            SymbolFamily::Saturating => Some(1.0),
            SymbolFamily::Constant { c } => Some(*c),
            SymbolFamily::Shifted { base, mu } => base.sup_value().map(|v| v - mu),
            SymbolFamily::Scaled { base, factor } => base.sup_value().map(|v| v * factor),
            SymbolFamily::Custom { values, .. } => {
                Some(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            _ => None,
        }
    }

    /// `lim_{r -> inf} F(r)` when it is finite.
    pub fn limit_at_infinity(&self) -> Option<f64> {
        match &self.family {
            SymbolFamily::Saturating => Some(1.0),
            SymbolFamily::Constant { c } => Some(*c),
            SymbolFamily::Shifted { base, mu } => base.limit_at_infinity().map(|v| v - mu),
            SymbolFamily::Scaled { base, factor } => base.limit_at_infinity().map(|v| v * factor),
            SymbolFamily::Custom { values, .. } => values.last().copied(),
            _ => None,
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || r.is_nan() {
            return Err(Error::SymbolEvaluation {
                r,
                reason: "argument must be non-negative".into(),
            });
        }
        let v = match &self.family {
            SymbolFamily::Fractional { s } => r.powf(2.0 * s),
            SymbolFamily::HalfHeat => r,
            SymbolFamily::LogLog { s, delta } => r.powf(*s) / (E + r).ln().powf(*delta),
            SymbolFamily::Iterated { p } => r / phi_p(r, *p),
            SymbolFamily::Saturating => r / (1.0 + r),
            SymbolFamily::Constant { c } => *c,
            SymbolFamily::Shifted { base, mu } => base.eval(r)? - mu,
            SymbolFamily::Scaled { base, factor } => factor * base.eval(r)?,
            SymbolFamily::Custom { r: xs, values } => interpolate(xs, values, r),
        };
        if v.is_nan() {
            return Err(Error::SymbolEvaluation {
                r,
                reason: "evaluated to NaN".into(),
            });
        }
        Ok(v)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], r: f64) -> f64 {
    if r <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if r >= xs[last] {
        return ys[last];
    }
    let j = xs.partition_point(|&x| x <= r);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = (r - x0) / (x1 - x0);
    ys[j - 1] * (1.0 - w) + ys[j] * w
}

impl fmt::Display for MultiplierSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            SymbolFamily::Fractional { s } => write!(f, "fractional(s={s})"),
            SymbolFamily::HalfHeat => write!(f, "halfheat"),
            SymbolFamily::LogLog { s, delta } => write!(f, "loglog(s={s},delta={delta})"),
            SymbolFamily::Iterated { p } => write!(f, "iterated(p={p})"),
            SymbolFamily::Saturating => write!(f, "saturating"),
            SymbolFamily::Constant { c } => write!(f, "constant(c={c})"),
            SymbolFamily::Shifted { base, mu } => write!(f, "shifted({base},mu={mu})"),
            SymbolFamily::Scaled { base, factor } => write!(f, "scaled({base},factor={factor})"),
            SymbolFamily::Custom { r, .. } => write!(f, "custom({} points)", r.len()),
        }
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_min(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..400 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Minimises `F` on `[lo, hi]`: uniform scan followed by golden-section
/// refinement around the best cell. Endpoints are always evaluated exactly.
fn min_on_interval(symbol: &MultiplierSymbol, lo: f64, hi: f64, grid_points: usize) -> Result<InfResult> {
    let n = grid_points.max(2);
    let h = (hi - lo) / (n - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..n {
        let r = if i == n - 1 { hi } else { lo + h * i as f64 };
        let v = symbol.eval(r)?;
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut best_r = if best_i == n - 1 { hi } else { lo + h * best_i as f64 };
    let a = (best_r - h).max(lo);
    let b = (best_r + h).min(hi);
    if b > a {
        let (r, v) = golden_min(|r| symbol.eval(r), a, b, 1e-12 * (1.0 + b.abs()))?;
        if v < best_v {
            best_v = v;
            best_r = r;
        }
    }
    let reliable = symbol.monotone_tail || best_i + 1 < n - 1;
    Ok(InfResult {
        value: best_v,
        argmin: best_r,
        reliable,
    })
}

/// `inf_{0 <= r <= r_max} F(r)`.
pub fn inf_f(symbol: &MultiplierSymbol, r_max: f64, grid_points: usize) -> Result<InfResult> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(invalid("r_max", format!("must be positive, got {r_max}")));
    }
    match symbol.family() {
        SymbolFamily::Shifted { base, mu } => {
            let b = inf_f(base, r_max, grid_points)?;
            Ok(InfResult {
                value: b.value - mu,
                ..b
            })
        }
        _ => min_on_interval(symbol, 0.0, r_max, grid_points),
    }
}

/// Tail infimum `alpha_R = inf_{R <= r <= r_max} F(r)`.
pub fn alpha_r(symbol: &MultiplierSymbol, radius: f64, r_max: f64, grid_points: usize) -> Result<InfResult> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("R", format!("must be positive, got {radius}")));
    }
    match symbol.family() {
        SymbolFamily::Shifted { base, mu } => {
            let b = alpha_r(base, radius, r_max, grid_points)?;
            Ok(InfResult {
                value: b.value - mu,
                ..b
            })
        }
        _ if r_max <= radius => Ok(InfResult {
            value: symbol.eval(radius)?,
            argmin: radius,
            reliable: symbol.monotone_tail,
        }),
        _ => min_on_interval(symbol, radius, r_max, grid_points),
    }
}
