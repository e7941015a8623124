//! Run configuration: a flat UTF-8 key-value file (`section.key = value`,
//! `#` comments), every key overridable on the command line.

use crate::env::{EnvError, PotentialParams, TrapParams};
use crate::predictor::{GapThresholds, PsiVariant};
use crate::scales::{RadiusSet, ScaleError, ScaleSet};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    BadLine(usize),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}` as {want}")]
    BadValue { key: String, value: String, want: &'static str },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("override `{0}` is not of the form section.key=value")]
    BadOverride(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Scales(#[from] ScaleError),
    #[error("config I/O: {0}")]
    Io(#[from] std::io::Error),
}

const KNOWN_KEYS: &[&str] = &[
    "model.d",
    "model.gamma",
    "model.theta",
    "trap.family",
    "trap.delta_sigma",
    "trap.mu",
    "trap.beta",
    "trap.x0",
    "box.radius",
    "box.radius_factor",
    "box.macrobox",
    "time.points",
    "seeds.start",
    "seeds.count",
    "predictor.variant",
    "predictor.c",
    "predictor.printed_exponents",
    "thresholds.e",
    "thresholds.f",
    "thresholds.g",
    "evolve.local_tol",
    "fk.samples",
    "ageing.grid_factor",
    "ageing.grid_points",
    "output.dir",
    "parallel.degree",
];

/// Which lambda functional the experiments use; `Auto` resolves from the
/// radius set (eta for rho = 0, the masked Hamiltonian otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKey {
    Auto,
    Masked,
    JBall,
    PuncturedJBall,
    EtaOnly,
    XiOnly,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Raw flat key-value map, echoed verbatim into every report.
    pub raw: BTreeMap<String, String>,
    pub d: usize,
    pub gamma: f64,
    pub theta: f64,
    pub trap: TrapParams,
    /// Explicit box radius; when absent the radius comes from the factor.
    pub box_radius: Option<i64>,
    /// Box radius as a multiple of r_t (defaults 4 in d = 1, 3 otherwise).
    pub radius_factor: Option<f64>,
    /// Use the full macrobox radius floor(R_t) instead of the r_t factor.
    pub macrobox: bool,
    pub times: Vec<f64>,
    pub seed_start: u64,
    pub seed_count: u64,
    pub variant: VariantKey,
    pub psi_c: f64,
    pub printed_exponents: bool,
    pub thresholds: GapThresholds,
    pub evolve_tol: f64,
    pub fk_samples: u64,
    pub ageing_grid_factor: f64,
    pub ageing_grid_points: usize,
    pub output_dir: PathBuf,
    pub parallel_degree: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            raw: BTreeMap::new(),
            d: 1,
            gamma: 2.0,
            theta: 0.25,
            trap: TrapParams::weibull_shifted(1.0, 1.0).expect("default trap"),
            box_radius: None,
            radius_factor: None,
            macrobox: false,
            times: vec![100.0, 1000.0, 10000.0],
            seed_start: 0,
            seed_count: 200,
            variant: VariantKey::Auto,
            psi_c: 0.0,
            printed_exponents: false,
            thresholds: GapThresholds::default(),
            evolve_tol: 1e-9,
            fk_samples: 100_000,
            ageing_grid_factor: 20.0,
            ageing_grid_points: 48,
            output_dir: PathBuf::from("out"),
            parallel_degree: 0,
        }
    }
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::BadLine(no + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    pub fn from_str_with_overrides(
        text: &str,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut map = parse_kv(text)?;
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(ov.clone()))?;
            if k.trim().is_empty() {
                return Err(ConfigError::BadOverride(ov.clone()));
            }
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(map)
    }

    pub fn from_file(
        path: &std::path::Path,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_with_overrides(&text, overrides)
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        for k in map.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        let get = |k: &str| map.get(k).map(|s| s.as_str());
        let parse_f64 = |k: &str| -> Result<Option<f64>, ConfigError> {
            get(k)
                .map(|v| {
                    v.parse::<f64>().map_err(|_| ConfigError::BadValue {
                        key: k.into(),
                        value: v.into(),
                        want: "a real number",
                    })
                })
                .transpose()
        };
        let parse_u64 = |k: &str| -> Result<Option<u64>, ConfigError> {
            get(k)
                .map(|v| {
                    v.parse::<u64>().map_err(|_| ConfigError::BadValue {
                        key: k.into(),
                        value: v.into(),
                        want: "a non-negative integer",
                    })
                })
                .transpose()
        };

        let mut cfg = RunConfig::default();
        if let Some(d) = parse_u64("model.d")? {
            cfg.d = d as usize;
        }
        if let Some(g) = parse_f64("model.gamma")? {
            cfg.gamma = g;
        }
        if let Some(th) = parse_f64("model.theta")? {
            cfg.theta = th;
        }
        PotentialParams::new(cfg.gamma)?;

        let delta = parse_f64("trap.delta_sigma")?.unwrap_or(1.0);
        let family = get("trap.family").unwrap_or("weibull-shifted");
        let x0 = parse_f64("trap.x0")?;
        cfg.trap = match family {
            "weibull-shifted" => {
                let mu = parse_f64("trap.mu")?.unwrap_or(1.0);
                match x0 {
                    Some(x0) if x0 > 0.0 => TrapParams::weibull_shifted_glued(delta, mu, x0)?,
                    _ => TrapParams::weibull_shifted(delta, mu)?,
                }
            }
            "log-weibull" => {
                let beta = parse_f64("trap.beta")?.unwrap_or(1.5);
                match x0 {
                    Some(x0) if x0 > 0.0 => TrapParams::log_weibull_glued(delta, beta, x0)?,
                    _ => TrapParams::log_weibull(delta, beta)?,
                }
            }
            "constant" => TrapParams::constant(delta)?,
            other => {
                return Err(ConfigError::BadValue {
                    key: "trap.family".into(),
                    value: other.into(),
                    want: "weibull-shifted | log-weibull | constant",
                })
            }
        };

        if let Some(r) = parse_u64("box.radius")? {
            if r > 0 {
                cfg.box_radius = Some(r as i64);
            }
        }
        if let Some(f) = parse_f64("box.radius_factor")? {
            if f > 0.0 {
                cfg.radius_factor = Some(f);
            }
        }
        if let Some(m) = get("box.macrobox") {
            cfg.macrobox = m == "true" || m == "1";
        }
        if let Some(ts) = get("time.points") {
            let mut times = Vec::new();
            for part in ts.split(',') {
                let v = part.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
                    key: "time.points".into(),
                    value: part.into(),
                    want: "a comma list of reals",
                })?;
                times.push(v);
            }
            if times.is_empty() {
                return Err(ConfigError::Missing("time.points"));
            }
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cfg.times = times;
        }
        if let Some(s) = parse_u64("seeds.start")? {
            cfg.seed_start = s;
        }
        if let Some(c) = parse_u64("seeds.count")? {
            cfg.seed_count = c;
        }
        if let Some(v) = get("predictor.variant") {
            cfg.variant = match v {
                "auto" => VariantKey::Auto,
                "masked" => VariantKey::Masked,
                "jball" => VariantKey::JBall,
                "punctured-jball" => VariantKey::PuncturedJBall,
                "eta-only" => VariantKey::EtaOnly,
                "xi-only" => VariantKey::XiOnly,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "predictor.variant".into(),
                        value: other.into(),
                        want: "auto | masked | jball | punctured-jball | eta-only | xi-only",
                    })
                }
            };
        }
        if let Some(c) = parse_f64("predictor.c")? {
            cfg.psi_c = c;
        }
        if let Some(p) = get("predictor.printed_exponents") {
            cfg.printed_exponents = p == "true" || p == "1";
        }
        if let Some(e) = parse_f64("thresholds.e")? {
            cfg.thresholds.e = e;
        }
        if let Some(f) = parse_f64("thresholds.f")? {
            cfg.thresholds.f = f;
        }
        if let Some(g) = parse_f64("thresholds.g")? {
            cfg.thresholds.g = g;
        }
        if let Some(tol) = parse_f64("evolve.local_tol")? {
            cfg.evolve_tol = tol;
        }
        if let Some(s) = parse_u64("fk.samples")? {
            cfg.fk_samples = s;
        }
        if let Some(f) = parse_f64("ageing.grid_factor")? {
            cfg.ageing_grid_factor = f;
        }
        if let Some(p) = parse_u64("ageing.grid_points")? {
            cfg.ageing_grid_points = p as usize;
        }
        if let Some(dir) = get("output.dir") {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(p) = parse_u64("parallel.degree")? {
            cfg.parallel_degree = p as usize;
        }

        // validate by computing the scale set at the first time point
        ScaleSet::compute(cfg.times[0], cfg.d, cfg.gamma, cfg.theta)?;
        cfg.raw = map;
        Ok(cfg)
    }

    pub fn scales(&self, t: f64) -> Result<ScaleSet, ScaleError> {
        ScaleSet::compute(t, self.d, self.gamma, self.theta)
    }

    pub fn radius_set(&self) -> Result<RadiusSet, ScaleError> {
        RadiusSet::compute(self.gamma, self.trap.mu())
    }

    /// Box radius for a time point: explicit radius, or factor * r_t
    /// (defaults 4 r_t in d = 1 and 3 r_t otherwise).
    pub fn box_radius_for(&self, scales: &ScaleSet) -> i64 {
        if let Some(r) = self.box_radius {
            return r;
        }
        if self.macrobox {
            return scales.big_r_t.floor() as i64;
        }
        let factor = self
            .radius_factor
            .unwrap_or(if self.d == 1 { 4.0 } else { 3.0 });
        (factor * scales.r_t).ceil().max(1.0) as i64
    }

    /// Resolve the predictor variant at a given scale set.
    pub fn psi_variant(&self, scales: &ScaleSet) -> Result<PsiVariant, ScaleError> {
        let radius = self.radius_set()?;
        Ok(match self.variant {
            VariantKey::Auto => {
                if radius.rho == 0 {
                    PsiVariant::EtaOnly
                } else {
                    PsiVariant::Masked { rho: radius.rho, rho_xi: radius.rho_xi }
                }
            }
            VariantKey::Masked => {
                PsiVariant::Masked { rho: radius.rho, rho_xi: radius.rho_xi }
            }
            VariantKey::JBall => PsiVariant::JBall { j: radius.j },
            VariantKey::PuncturedJBall => {
                PsiVariant::PuncturedJBall { j: radius.j, level: scales.l_t }
            }
            VariantKey::EtaOnly => PsiVariant::EtaOnly,
            VariantKey::XiOnly => PsiVariant::XiOnly,
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        (self.seed_start..self.seed_start + self.seed_count).collect()
    }
}
