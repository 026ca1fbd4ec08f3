//! TOML experiment configuration: parsing, `--set` overrides and validation
//! into core objects. Nothing here runs a computation beyond building the
//! grid, symbol, mask and initial field.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thickstab_core::io::{read_field, read_mask};
use thickstab_core::probe::GaussianProbe;
use thickstab_core::{
    make_ball_complement, make_grid, make_periodic_thick, make_random_thick, sample_probe, Grid,
    MultiplierSymbol, SpectralField, SupportMask,
};

use crate::catalog::ScenarioInfo;
use crate::error::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: Option<String>,
    pub grid: Option<GridSection>,
    pub symbol: Option<SymbolSection>,
    pub mask: Option<MaskSection>,
    pub init: Option<InitSection>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSection {
    pub family: String,
    pub s: Option<f64>,
    pub delta: Option<f64>,
    pub p: Option<u32>,
    pub c: Option<f64>,
    /// Subtracted from the symbol: `F - mu`.
    pub mu: Option<f64>,
    /// Multiplies the symbol.
    pub factor: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSection {
    pub kind: String,
    pub period: Option<f64>,
    pub fill: Option<f64>,
    #[serde(rename = "L")]
    pub scale: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub kind: String,
    pub center: Option<Vec<f64>>,
    pub width: Option<f64>,
    pub modulation: Option<Vec<f64>>,
    pub amplitude: Option<f64>,
    pub value: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    #[serde(rename = "R")]
    pub band_radius: Option<f64>,
    pub radius: Option<f64>,
    #[serde(rename = "C")]
    pub constant: Option<f64>,
    #[serde(rename = "L")]
    pub scale: Option<f64>,
    pub epsilon: Option<f64>,
    pub dt: Option<f64>,
    pub k_max: Option<usize>,
    pub h_ladder: Option<Vec<f64>>,
    pub radii: Option<Vec<f64>>,
    pub centers: Option<Vec<Vec<f64>>>,
    pub center: Option<Vec<f64>>,
    pub width: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub steps: Option<usize>,
    pub probes: Option<usize>,
    pub width_min: Option<f64>,
    pub width_max: Option<f64>,
    pub trials: Option<usize>,
    pub iterations: Option<usize>,
    pub integrator: Option<String>,
    pub snapshot_every: Option<usize>,
    pub tail_fraction: Option<f64>,
    pub adjoint_order: Option<bool>,
    pub beta_max: Option<usize>,
    pub slices: Option<usize>,
    pub stride: Option<usize>,
    pub c_n: Option<f64>,
}

/// Reads the config file and applies `section.key=value` overrides.
pub fn load(path: &Path, overrides: &[String]) -> Result<(toml::Table, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    Ok((table, text))
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set `{item}`: expected section.key=value")))?;
    let key = key.trim();
    let value = parse_value(raw.trim());
    match key.split_once('.') {
        None if key == "scenario" => {
            table.insert(key.to_string(), value);
        }
        None => {
            return Err(CliError::Config(format!(
                "--set `{key}`: expected section.key (e.g. run.T)"
            )))
        }
        Some((section, field)) => {
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let sub = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("--set `{key}`: `{section}` is not a section")))?;
            sub.insert(field.to_string(), value);
        }
    }
    Ok(())
}

/// TOML literal when it parses as one, bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn parse(table: &toml::Table) -> Result<Config, CliError> {
    toml::Value::Table(table.clone())
        .try_into::<Config>()
        .map_err(|e| CliError::Config(e.message().trim().to_string()))
}

fn keys_of(table: &toml::Table, section: &str) -> Vec<String> {
    table
        .get(section)
        .and_then(|v| v.as_table())
        .map(|t| t.keys().cloned().collect())
        .unwrap_or_default()
}

fn check_allowed(table: &toml::Table, section: &str, allowed: &[&str], context: &str) -> Result<(), CliError> {
    for k in keys_of(table, section) {
        if !allowed.contains(&k.as_str()) {
            return Err(CliError::Config(format!(
                "key `{section}.{k}` is not used by {context}; allowed: {}",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

pub fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing key `{key}`"))
}

/// Core objects resolved from a validated config.
pub struct Resolved {
    pub grid: Option<Grid>,
    pub symbol: Option<MultiplierSymbol>,
    pub mask: Option<SupportMask>,
    pub init: Option<SpectralField>,
    /// Input files referenced by the config, for hashing.
    pub input_files: Vec<PathBuf>,
}

pub fn resolve(
    cfg: &Config,
    table: &toml::Table,
    info: &ScenarioInfo,
    base_dir: &Path,
) -> Result<Resolved, CliError> {
    if let Some(s) = &cfg.scenario {
        if s != info.name {
            return Err(CliError::Config(format!(
                "key `scenario` is `{s}` but the command line asks for `{}`",
                info.name
            )));
        }
    }
    for section in ["grid", "symbol", "mask", "init"] {
        if table.contains_key(section) && !info.sections.contains(&section) {
            return Err(CliError::Config(format!(
                "section `[{section}]` is not used by scenario `{}`",
                info.name
            )));
        }
    }
    for k in keys_of(table, "run") {
        if !info.allows(&k) {
            return Err(CliError::Config(format!(
                "key `run.{k}` is not used by scenario `{}`",
                info.name
            )));
        }
    }
    for k in info.required {
        if !keys_of(table, "run").iter().any(|x| x == k) {
            return Err(missing(&format!("run.{k}")));
        }
    }
    let need = |s: &str| info.sections.contains(&s);
    let mut input_files = Vec::new();

    let grid = if need("grid") {
        let g = cfg.grid.as_ref().ok_or_else(|| missing("grid"))?;
        Some(make_grid(g.dim, g.extent, g.points)?)
    } else {
        None
    };
    let symbol = if need("symbol") {
        let s = cfg.symbol.as_ref().ok_or_else(|| missing("symbol.family"))?;
        Some(build_symbol(s, table)?)
    } else {
        None
    };
    let mask = match (need("mask"), &grid) {
        (true, Some(g)) => {
            let m = cfg.mask.as_ref().ok_or_else(|| missing("mask.kind"))?;
            Some(build_mask(m, table, g, base_dir, &mut input_files)?)
        }
        _ => None,
    };
    let init = match (need("init"), &grid) {
        (true, Some(g)) => {
            let i = cfg.init.as_ref().ok_or_else(|| missing("init.kind"))?;
            Some(build_init(i, table, g, base_dir, &mut input_files)?)
        }
        _ => None,
    };
    validate_run(&cfg.run, info)?;
    Ok(Resolved {
        grid,
        symbol,
        mask,
        init,
        input_files,
    })
}

fn req<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| missing(key))
}

fn build_symbol(s: &SymbolSection, table: &toml::Table) -> Result<MultiplierSymbol, CliError> {
    let (base, params): (MultiplierSymbol, &[&str]) = match s.family.as_str() {
        "fractional" => (MultiplierSymbol::fractional(req(s.s, "symbol.s")?)?, &["s"]),
        "halfheat" => (MultiplierSymbol::halfheat(), &[]),
        "loglog" => (
            MultiplierSymbol::loglog(req(s.s, "symbol.s")?, req(s.delta, "symbol.delta")?)?,
            &["s", "delta"],
        ),
        "iterated" => (MultiplierSymbol::iterated(req(s.p, "symbol.p")?)?, &["p"]),
        "saturating" => (MultiplierSymbol::saturating(), &[]),
        "constant" => (MultiplierSymbol::constant(req(s.c, "symbol.c")?), &["c"]),
        other => {
            return Err(CliError::Config(format!(
                "key `symbol.family`: unknown family `{other}` (fractional, halfheat, loglog, iterated, saturating, constant)"
            )))
        }
    };
    let mut allowed = vec!["family", "mu", "factor"];
    allowed.extend_from_slice(params);
    check_allowed(table, "symbol", &allowed, &format!("symbol family `{}`", s.family))?;
    let scaled = match s.factor {
        Some(f) => MultiplierSymbol::scaled(base, f)?,
        None => base,
    };
    Ok(match s.mu {
        Some(mu) => MultiplierSymbol::shifted(scaled, mu),
        None => scaled,
    })
}

fn build_mask(
    m: &MaskSection,
    table: &toml::Table,
    grid: &Grid,
    base_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<SupportMask, CliError> {
    let (mask, params): (SupportMask, &[&str]) = match m.kind.as_str() {
        "full" => (SupportMask::full(grid), &[]),
        "periodic" => (
            make_periodic_thick(grid, req(m.period, "mask.period")?, req(m.fill, "mask.fill")?)?,
            &["period", "fill"],
        ),
        "random" => (
            make_random_thick(
                grid,
                req(m.scale, "mask.L")?,
                req(m.gamma, "mask.gamma")?,
                req(m.seed, "mask.seed")?,
            )?,
            &["L", "gamma", "seed"],
        ),
        "ball-complement" => {
            let c = m.center.as_ref().ok_or_else(|| missing("mask.center"))?;
            (
                make_ball_complement(grid, c, req(m.radius, "mask.radius")?)?,
                &["center", "radius"],
            )
        }
        "file" => {
            let p = base_dir.join(m.path.as_ref().ok_or_else(|| missing("mask.path"))?);
            let mask = read_mask(&p)?;
            if !same_grid(mask.grid(), grid) {
                return Err(CliError::Config(format!(
                    "key `mask.path`: {} was written on a different grid",
                    p.display()
                )));
            }
            files.push(p);
            (mask, &["path"])
        }
        other => {
            return Err(CliError::Config(format!(
                "key `mask.kind`: unknown kind `{other}` (full, periodic, random, ball-complement, file)"
            )))
        }
    };
    let mut allowed = vec!["kind"];
    allowed.extend_from_slice(params);
    check_allowed(table, "mask", &allowed, &format!("mask kind `{}`", m.kind))?;
    Ok(mask)
}

fn build_init(
    i: &InitSection,
    table: &toml::Table,
    grid: &Grid,
    base_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<SpectralField, CliError> {
    let (field, params): (SpectralField, &[&str]) = match i.kind.as_str() {
        "gaussian" => {
            let center = i.center.clone().ok_or_else(|| missing("init.center"))?;
            let modulation = i.modulation.clone().unwrap_or_else(|| vec![0.0; grid.dim()]);
            let probe = GaussianProbe::new(center, modulation, req(i.width, "init.width")?)?;
            let f = sample_probe(&probe, grid)?;
            let a = i.amplitude.unwrap_or(1.0);
            (
                f.scaled(Complex64::new(a, 0.0)),
                &["center", "width", "modulation", "amplitude"],
            )
        }
        "constant" => {
            let v = req(i.value, "init.value")?;
            (SpectralField::from_real(grid, |_| v), &["value"])
        }
        "file" => {
            let p = base_dir.join(i.path.as_ref().ok_or_else(|| missing("init.path"))?);
            let f = read_field(&p)?;
            if !same_grid(f.grid(), grid) {
                return Err(CliError::Config(format!(
                    "key `init.path`: {} was written on a different grid",
                    p.display()
                )));
            }
            files.push(p);
            (f, &["path"])
        }
        other => {
            return Err(CliError::Config(format!(
                "key `init.kind`: unknown kind `{other}` (gaussian, constant, file)"
            )))
        }
    };
    let mut allowed = vec!["kind"];
    allowed.extend_from_slice(params);
    check_allowed(table, "init", &allowed, &format!("init kind `{}`", i.kind))?;
    Ok(field)
}

fn same_grid(a: &Grid, b: &Grid) -> bool {
    a.dim() == b.dim() && a.points() == b.points() && a.extent() == b.extent()
}

fn positive(v: Option<f64>, key: &str) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Config(format!(
            "key `run.{key}`: must be positive and finite, got {x}"
        ))),
        _ => Ok(()),
    }
}

fn at_least_one(v: Option<usize>, key: &str) -> Result<(), CliError> {
    match v {
        Some(0) => Err(CliError::Config(format!("key `run.{key}`: must be at least 1"))),
        _ => Ok(()),
    }
}

/// Range checks on run keys that are cheap to make before any computation.
fn validate_run(run: &RunSection, info: &ScenarioInfo) -> Result<(), CliError> {
    positive(run.t_final, "T")?;
    positive(run.constant, "C")?;
    positive(run.scale, "L")?;
    positive(run.dt, "dt")?;
    positive(run.width, "width")?;
    positive(run.width_min, "width_min")?;
    positive(run.width_max, "width_max")?;
    positive(run.c_n, "c_n")?;
    positive(run.radius, "radius")?;
    if let Some(r) = run.band_radius {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(CliError::Config(format!("key `run.R`: must be non-negative, got {r}")));
        }
    }
    if let Some(e) = run.epsilon {
        if !(e > 0.0 && e < 1.0) {
            return Err(CliError::Config(format!("key `run.epsilon`: must lie in (0, 1), got {e}")));
        }
    }
    if let Some(f) = run.tail_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::Config(format!(
                "key `run.tail_fraction`: must lie in (0, 1], got {f}"
            )));
        }
    }
    if let (Some(a), Some(b)) = (run.width_min, run.width_max) {
        if a > b {
            return Err(CliError::Config("key `run.width_min`: exceeds run.width_max".into()));
        }
    }
    for (v, k) in [
        (run.samples, "samples"),
        (run.steps, "steps"),
        (run.probes, "probes"),
        (run.trials, "trials"),
        (run.iterations, "iterations"),
        (run.snapshot_every, "snapshot_every"),
        (run.slices, "slices"),
        (run.stride, "stride"),
    ] {
        at_least_one(v, k)?;
    }
    if let Some(i) = &run.integrator {
        if i != "splitting" && i != "exact" {
            return Err(CliError::Config(format!(
                "key `run.integrator`: expected `splitting` or `exact`, got `{i}`"
            )));
        }
    }
    if let Some(h) = &run.h_ladder {
        if h.is_empty() || h.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(CliError::Config("key `run.h_ladder`: need positive entries".into()));
        }
    }
    if let Some(r) = &run.radii {
        if r.len() < 2 || r.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(CliError::Config("key `run.radii`: need at least two positive radii".into()));
        }
    }
    if let Some(c) = &run.centers {
        if c.is_empty() {
            return Err(CliError::Config("key `run.centers`: need at least one centre".into()));
        }
    }
    if info.name == "stabilize" && run.constant.is_none() && run.seed.is_none() {
        return Err(CliError::Config(
            "missing key `run.C` (or `run.seed` to estimate it from the mask)".into(),
        ));
    }
    Ok(())
}
