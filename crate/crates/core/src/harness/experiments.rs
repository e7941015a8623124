//! Experiment campaigns over seed sweeps: localisation match rates, the
//! rescaled-distance law, field-correlation profiles, mass asymptotics,
//! top-two gap statistics, and ageing times.
//!
//! Every campaign maps a closure over seeds (rayon-parallel, reduced in seed
//! order), records one row per seed (failures captured as row errors, never
//! dropped), and computes aggregates that can be recomputed from the rows.

use super::config::RunConfig;
use super::report::{Meta, Report, SCHEMA_VERSION};
use crate::env::{Environment, PotentialParams};
use crate::lattice::{l1_ball, l1_norm, linf_dist, BoxSpec, Site};
use crate::parallel;
use crate::predictor::{predict_site, PsiVariant};
use crate::scales::{ExponentSet, ScaleError, ScaleSet};
use crate::solver::{evolve, mass_profile, EvolveControls};
use crate::stats;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scales(#[from] ScaleError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error("experiment `{0}` is not one of localisation | laplace | correlation | mass | gap | ageing")]
    UnknownTag(String),
}

fn build_meta(cfg: &RunConfig, experiment: &str) -> Result<Meta, HarnessError> {
    let mut scales = Vec::new();
    for &t in &cfg.times {
        scales.push(cfg.scales(t)?);
    }
    Ok(Meta {
        schema_version: SCHEMA_VERSION,
        experiment: experiment.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_ms: 0,
        config: cfg.raw.clone(),
        scales,
        radius: cfg.radius_set()?,
        exponents: ExponentSet::compute(cfg.gamma, cfg.trap.mu(), cfg.trap.delta_sigma, cfg.d)?,
    })
}

fn build_env(cfg: &RunConfig, seed: u64, radius: i64) -> Result<Environment, String> {
    let spec = BoxSpec::new(cfg.d, radius).map_err(|e| e.to_string())?;
    Environment::build(
        spec,
        seed,
        PotentialParams::new(cfg.gamma).map_err(|e| e.to_string())?,
        cfg.trap,
    )
    .map_err(|e| e.to_string())
}

fn fmt_site(z: &[i64]) -> String {
    z.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

// ---------------------------------------------------------------- localisation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocData {
    pub z_pred: Site,
    pub argmax: Site,
    pub matched: bool,
    pub frac_top1: f64,
    pub frac_top2: f64,
    pub gap_over_dt: Option<f64>,
    pub log_mass: f64,
    /// t * Psi of the j-ball functional at its own argmax.
    pub t_psi_j: f64,
    /// Predicted site within 10% of the box edge (undersized box warning).
    pub near_boundary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocRow {
    pub seed: u64,
    pub t: f64,
    pub error: Option<String>,
    pub data: Option<LocData>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LocAgg {
    pub t: f64,
    pub rows: usize,
    pub failures: usize,
    pub match_rate: f64,
    pub mean_frac_top1: f64,
    pub mean_frac_top2: f64,
    pub boundary_hits: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LocAggregates {
    pub per_t: Vec<LocAgg>,
}

fn localisation_row(cfg: &RunConfig, seed: u64, t: f64) -> Result<LocData, String> {
    let scales = cfg.scales(t).map_err(|e| e.to_string())?;
    let radius = cfg.box_radius_for(&scales);
    let env = build_env(cfg, seed, radius)?;
    let variant = cfg.psi_variant(&scales).map_err(|e| e.to_string())?;
    let top = predict_site(&env, &scales, variant, cfg.psi_c).map_err(|e| e.to_string())?;
    let domain: Vec<Site> = env.spec.sites().collect();
    let controls = EvolveControls { local_tol: cfg.evolve_tol, ..Default::default() };
    let state = evolve(&env, &domain, t, &controls).map_err(|e| e.to_string())?;
    let profile = mass_profile(&state);
    let j = cfg.radius_set().map_err(|e| e.to_string())?.j;
    let jtop = predict_site(&env, &scales, PsiVariant::JBall { j }, cfg.psi_c)
        .map_err(|e| e.to_string())?;
    let origin = vec![0i64; cfg.d];
    let near_boundary = linf_dist(&top.site, &origin) as f64 >= 0.9 * radius as f64;
    Ok(LocData {
        matched: top.site == profile.argmax,
        z_pred: top.site,
        argmax: profile.argmax,
        frac_top1: profile.top_fraction,
        frac_top2: profile.second_fraction,
        gap_over_dt: top.gap_over_dt,
        log_mass: state.log_mass,
        t_psi_j: t * jtop.psi,
        near_boundary,
    })
}

pub fn recompute_loc_aggregates(times: &[f64], rows: &[LocRow]) -> LocAggregates {
    let per_t = times
        .iter()
        .map(|&t| {
            let at_t: Vec<&LocRow> = rows.iter().filter(|r| r.t == t).collect();
            let ok: Vec<&LocData> = at_t.iter().filter_map(|r| r.data.as_ref()).collect();
            let n = ok.len().max(1) as f64;
            LocAgg {
                t,
                rows: at_t.len(),
                failures: at_t.len() - ok.len(),
                match_rate: ok.iter().filter(|d| d.matched).count() as f64 / n,
                mean_frac_top1: ok.iter().map(|d| d.frac_top1).sum::<f64>() / n,
                mean_frac_top2: ok.iter().map(|d| d.frac_top2).sum::<f64>() / n,
                boundary_hits: ok.iter().filter(|d| d.near_boundary).count(),
            }
        })
        .collect();
    LocAggregates { per_t }
}

/// Theorem-1 style campaign: per (seed, t), predict the site, evolve the
/// solution on the box, and compare.
pub fn run_localisation(cfg: &RunConfig) -> Result<Report<LocRow, LocAggregates>, HarnessError> {
    let started = std::time::Instant::now();
    let mut meta = build_meta(cfg, "localisation")?;
    let seeds = cfg.seeds();
    let mut pairs = Vec::new();
    for &seed in &seeds {
        for &t in &cfg.times {
            pairs.push((seed, t));
        }
    }
    let rows: Vec<LocRow> = parallel::with_degree(cfg.parallel_degree, || {
        parallel::map_indexed(pairs.len(), |i| {
            let (seed, t) = pairs[i];
            match localisation_row(cfg, seed, t) {
                Ok(data) => LocRow { seed, t, error: None, data: Some(data) },
                Err(e) => LocRow { seed, t, error: Some(e), data: None },
            }
        })
    });
    let aggregates = recompute_loc_aggregates(&cfg.times, &rows);
    meta.wall_time_ms = started.elapsed().as_millis() as u64;
    Ok(Report { meta, rows, aggregates })
}

pub fn loc_csv_header() -> &'static str {
    "seed,t,z_pred,argmax,matched,frac_top1,frac_top2,gap_over_dt,log_mass,t_psi_j,error"
}

pub fn loc_csv_row(r: &LocRow) -> String {
    match &r.data {
        Some(d) => format!(
            "{},{},{},{},{},{},{},{},{},{},",
            r.seed,
            r.t,
            fmt_site(&d.z_pred),
            fmt_site(&d.argmax),
            d.matched,
            d.frac_top1,
            d.frac_top2,
            d.gap_over_dt.map(|g| g.to_string()).unwrap_or_default(),
            d.log_mass,
            d.t_psi_j
        ),
        None => format!(
            "{},{},,,,,,,,,{}",
            r.seed,
            r.t,
            r.error.clone().unwrap_or_default()
        ),
    }
}

// ------------------------------------------------------- top-two sweep (laplace/gap)

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopTwoData {
    /// Z / r_t, coordinatewise.
    pub x1: Vec<f64>,
    /// Z_2 / r_t when a runner-up exists.
    pub x2: Option<Vec<f64>>,
    /// (Psi(Z) - a_t) / d_t.
    pub y1: f64,
    pub y2: Option<f64>,
    pub candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopTwoRow {
    pub seed: u64,
    pub t: f64,
    pub error: Option<String>,
    pub data: Option<TopTwoData>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopTwoAgg {
    pub t: f64,
    pub rows: usize,
    pub failures: usize,
    /// One-sample KS of each coordinate of Z/r_t against the Laplace CDF.
    pub ks_per_coord: Vec<f64>,
    pub ks_p_per_coord: Vec<f64>,
    /// Mean |coordinate| (the Laplace normalisation target is 1).
    pub mean_abs_coord: Vec<f64>,
    /// Mean l1 norm |Z|/r_t with its standard error.
    pub mean_abs_x1: f64,
    pub se_abs_x1: f64,
    /// Quadrature moments of the limiting top-two density.
    pub oracle_abs_x1: f64,
    pub oracle_total_mass: f64,
    /// Gap (y1 - y2) rescaled to the r_t time scale, where the limiting gap
    /// law applies; None when r_t is too small to carry its own scale set.
    pub mean_gap_rt: Option<f64>,
    pub ks_gap_vs_oracle: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopTwoAggregates {
    pub per_t: Vec<TopTwoAgg>,
}

fn top_two_row(cfg: &RunConfig, seed: u64, t: f64) -> Result<TopTwoData, String> {
    let scales = cfg.scales(t).map_err(|e| e.to_string())?;
    let radius = cfg.box_radius_for(&scales);
    let env = build_env(cfg, seed, radius)?;
    let variant = cfg.psi_variant(&scales).map_err(|e| e.to_string())?;
    let top = predict_site(&env, &scales, variant, cfg.psi_c).map_err(|e| e.to_string())?;
    let rescale = |z: &Site| z.iter().map(|&c| c as f64 / scales.r_t).collect::<Vec<f64>>();
    Ok(TopTwoData {
        x1: rescale(&top.site),
        x2: top.runner_up.as_ref().map(&rescale),
        y1: (top.psi - scales.a_t) / scales.d_t,
        y2: top.runner_up_psi.map(|p| (p - scales.a_t) / scales.d_t),
        candidates: top.candidates,
    })
}

pub fn recompute_top_two_aggregates(
    cfg_d: usize,
    times: &[f64],
    scale_sets: &[ScaleSet],
    rows: &[TopTwoRow],
) -> TopTwoAggregates {
    let per_t = times
        .iter()
        .zip(scale_sets)
        .map(|(&t, scales)| {
            let at_t: Vec<&TopTwoRow> = rows.iter().filter(|r| r.t == t).collect();
            let ok: Vec<&TopTwoData> = at_t.iter().filter_map(|r| r.data.as_ref()).collect();
            let mut ks_per_coord = Vec::new();
            let mut ks_p_per_coord = Vec::new();
            let mut mean_abs_coord = Vec::new();
            for axis in 0..cfg_d {
                let coords: Vec<f64> = ok.iter().map(|d| d.x1[axis]).collect();
                if coords.is_empty() {
                    ks_per_coord.push(f64::NAN);
                    ks_p_per_coord.push(f64::NAN);
                    mean_abs_coord.push(f64::NAN);
                } else {
                    let d = stats::ks_statistic(&coords, stats::laplace_cdf);
                    ks_per_coord.push(d);
                    ks_p_per_coord.push(stats::ks_p_value(d, coords.len()));
                    mean_abs_coord.push(stats::mean(
                        &coords.iter().map(|c| c.abs()).collect::<Vec<_>>(),
                    ));
                }
            }
            let norms: Vec<f64> =
                ok.iter().map(|d| d.x1.iter().map(|c| c.abs()).sum()).collect();
            let (mean_abs_x1, se_abs_x1) = if norms.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                stats::mean_se(&norms)
            };
            // gap rescaled to the r_t scale where the limit law lives
            let (mean_gap_rt, ks_gap) = match ScaleSet::compute(
                scales.r_t,
                scales.d,
                scales.gamma,
                scales.theta,
            ) {
                Ok(rt_scales) => {
                    let factor = scales.d_t / rt_scales.d_t;
                    let gaps: Vec<f64> = ok
                        .iter()
                        .filter_map(|d| d.y2.map(|y2| (d.y1 - y2) * factor))
                        .collect();
                    if gaps.is_empty() {
                        (None, None)
                    } else {
                        let ks = stats::ks_statistic(&gaps, |g| {
                            1.0 - stats::top_two_density::gap_sf(cfg_d, g)
                        });
                        (Some(stats::mean(&gaps)), Some(ks))
                    }
                }
                Err(_) => (None, None),
            };
            TopTwoAgg {
                t,
                rows: at_t.len(),
                failures: at_t.len() - ok.len(),
                ks_per_coord,
                ks_p_per_coord,
                mean_abs_coord,
                mean_abs_x1,
                se_abs_x1,
                oracle_abs_x1: stats::top_two_density::abs_x1_mean(cfg_d),
                oracle_total_mass: stats::top_two_density::total_mass(cfg_d),
                mean_gap_rt,
                ks_gap_vs_oracle: ks_gap,
            }
        })
        .collect();
    TopTwoAggregates { per_t }
}

fn run_top_two(cfg: &RunConfig, name: &str) -> Result<Report<TopTwoRow, TopTwoAggregates>, HarnessError> {
    let started = std::time::Instant::now();
    let mut meta = build_meta(cfg, name)?;
    let seeds = cfg.seeds();
    let mut pairs = Vec::new();
    for &seed in &seeds {
        for &t in &cfg.times {
            pairs.push((seed, t));
        }
    }
    let rows: Vec<TopTwoRow> = parallel::with_degree(cfg.parallel_degree, || {
        parallel::map_indexed(pairs.len(), |i| {
            let (seed, t) = pairs[i];
            match top_two_row(cfg, seed, t) {
                Ok(data) => TopTwoRow { seed, t, error: None, data: Some(data) },
                Err(e) => TopTwoRow { seed, t, error: Some(e), data: None },
            }
        })
    });
    let aggregates = recompute_top_two_aggregates(cfg.d, &cfg.times, &meta.scales, &rows);
    meta.wall_time_ms = started.elapsed().as_millis() as u64;
    Ok(Report { meta, rows, aggregates })
}

/// Rescaled-distance law of the predicted site (Laplace coordinates).
pub fn run_laplace_test(cfg: &RunConfig) -> Result<Report<TopTwoRow, TopTwoAggregates>, HarnessError> {
    run_top_two(cfg, "laplace")
}

/// Top-two gap statistics against the quadrature oracle; shares its sampling
/// with the Laplace campaign.
pub fn run_gap_statistics(cfg: &RunConfig) -> Result<Report<TopTwoRow, TopTwoAggregates>, HarnessError> {
    run_top_two(cfg, "gap")
}

pub fn top_two_csv_header() -> &'static str {
    "seed,t,x1,y1,x2,y2,error"
}

pub fn top_two_csv_row(r: &TopTwoRow) -> String {
    match &r.data {
        Some(d) => format!(
            "{},{},{},{},{},{},",
            r.seed,
            r.t,
            d.x1.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
            d.y1,
            d.x2
                .as_ref()
                .map(|x| x.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
            d.y2.map(|y| y.to_string()).unwrap_or_default()
        ),
        None => format!("{},{},,,,,{}", r.seed, r.t, r.error.clone().unwrap_or_default()),
    }
}

/// Empirical-vs-model CDF points for the first coordinate of Z/r_t.
pub fn laplace_cdf_points(rows: &[TopTwoRow], t: f64) -> Vec<(f64, f64)> {
    let mut coords: Vec<f64> = rows
        .iter()
        .filter(|r| r.t == t)
        .filter_map(|r| r.data.as_ref().map(|d| d.x1[0]))
        .collect();
    coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
    coords
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / coords.len() as f64, stats::laplace_cdf(x)))
        .collect()
}

// ------------------------------------------------------------- correlation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationData {
    pub z_pred: Site,
    pub sigma_z: f64,
    /// log sigma(Z) / log a_t.
    pub sigma_exponent_raw: f64,
    /// log(sigma(Z)/c_sigma) / log a_t when c_sigma > 0.
    pub sigma_exponent_adjusted: Option<f64>,
    /// (offset, xi(Z+offset)) for |offset| <= rho_xi.
    pub xi_profile: Vec<(Site, f64)>,
    /// (offset, sigma(Z+offset)) for |offset| <= rho.
    pub sigma_profile: Vec<(Site, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub seed: u64,
    pub t: f64,
    pub error: Option<String>,
    pub data: Option<CorrelationData>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OffsetSummary {
    pub offset: Site,
    pub norm: u64,
    /// Median of the field value at Z + offset.
    pub median: f64,
    /// Mean empirical exponent log value / log a_t (xi profiles).
    pub mean_exponent: f64,
    /// Target exponent from the scale formulas.
    pub target_exponent: f64,
    /// Target constant (c_xi(y) for xi, delta_sigma for off-centre sigma).
    pub target_constant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorrelationAggregates {
    pub t: f64,
    pub rows: usize,
    pub failures: usize,
    pub q_sigma: f64,
    pub c_sigma: f64,
    pub mean_sigma_exponent_raw: f64,
    pub se_sigma_exponent_raw: f64,
    pub mean_sigma_exponent_adjusted: Option<f64>,
    pub se_sigma_exponent_adjusted: Option<f64>,
    pub xi_offsets: Vec<OffsetSummary>,
    pub sigma_offsets: Vec<OffsetSummary>,
    /// Two-sample KS p-value of sigma(Z) against fresh sigma samples
    /// (the sigma-independence check, meaningful for gamma < 1).
    pub sigma_vs_fresh_p: f64,
    /// True when rho_xi = 0 and rho = 0 make the off-centre profiles empty.
    pub profiles_vacuous: bool,
}

fn correlation_row(cfg: &RunConfig, seed: u64, t: f64) -> Result<CorrelationData, String> {
    let scales = cfg.scales(t).map_err(|e| e.to_string())?;
    let radius_set = cfg.radius_set().map_err(|e| e.to_string())?;
    let radius = cfg.box_radius_for(&scales);
    let env = build_env(cfg, seed, radius)?;
    let variant = cfg.psi_variant(&scales).map_err(|e| e.to_string())?;
    let top = predict_site(&env, &scales, variant, cfg.psi_c).map_err(|e| e.to_string())?;
    let z = top.site.clone();
    let exponents = ExponentSet::compute(cfg.gamma, cfg.trap.mu(), cfg.trap.delta_sigma, cfg.d)
        .map_err(|e| e.to_string())?;
    let sigma_z = env.sigma_at(&z).ok_or("predicted site outside box")?;
    let log_a = scales.a_t.ln();
    let origin = vec![0i64; cfg.d];
    let mut xi_profile = Vec::new();
    for off in l1_ball(&origin, radius_set.rho_xi as u64) {
        let site: Site = z.iter().zip(&off).map(|(a, b)| a + b).collect();
        if let Some(v) = env.xi_at(&site) {
            xi_profile.push((off, v));
        }
    }
    let mut sigma_profile = Vec::new();
    for off in l1_ball(&origin, radius_set.rho as u64) {
        let site: Site = z.iter().zip(&off).map(|(a, b)| a + b).collect();
        if let Some(v) = env.sigma_at(&site) {
            sigma_profile.push((off, v));
        }
    }
    Ok(CorrelationData {
        z_pred: z,
        sigma_z,
        sigma_exponent_raw: sigma_z.ln() / log_a,
        sigma_exponent_adjusted: (exponents.c_sigma > 0.0)
            .then(|| (sigma_z / exponents.c_sigma).ln() / log_a),
        xi_profile,
        sigma_profile,
    })
}

pub fn recompute_correlation_aggregates(
    cfg: &RunConfig,
    scales: &ScaleSet,
    rows: &[CorrelationRow],
) -> CorrelationAggregates {
    let exponents =
        ExponentSet::compute(cfg.gamma, cfg.trap.mu(), cfg.trap.delta_sigma, cfg.d)
            .expect("validated config");
    let radius_set = cfg.radius_set().expect("validated config");
    let ok: Vec<&CorrelationData> = rows.iter().filter_map(|r| r.data.as_ref()).collect();
    let raw: Vec<f64> = ok.iter().map(|d| d.sigma_exponent_raw).collect();
    let adj: Vec<f64> = ok.iter().filter_map(|d| d.sigma_exponent_adjusted).collect();
    let (mean_raw, se_raw) =
        if raw.is_empty() { (f64::NAN, f64::NAN) } else { stats::mean_se(&raw) };
    let (mean_adj, se_adj) = if adj.is_empty() {
        (None, None)
    } else {
        let (m, s) = stats::mean_se(&adj);
        (Some(m), Some(s))
    };
    let log_a = scales.a_t.ln();
    let summarise = |profile_of: &dyn Fn(&CorrelationData) -> &Vec<(Site, f64)>,
                     is_xi: bool|
     -> Vec<OffsetSummary> {
        let mut offsets: Vec<Site> = Vec::new();
        if let Some(first) = ok.first() {
            offsets = profile_of(first).iter().map(|(o, _)| o.clone()).collect();
        }
        offsets
            .into_iter()
            .map(|off| {
                let norm = l1_norm(&off);
                let mut values = Vec::new();
                for d in &ok {
                    for (o, v) in profile_of(d) {
                        if *o == off {
                            values.push(*v);
                        }
                    }
                }
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median =
                    if values.is_empty() { f64::NAN } else { stats::quantile(&values, 0.5) };
                let mean_exponent = if values.is_empty() {
                    f64::NAN
                } else {
                    stats::mean(&values.iter().map(|v| v.ln() / log_a).collect::<Vec<_>>())
                };
                let (target_exponent, target_constant) = if is_xi {
                    let q = if cfg.printed_exponents {
                        exponents.q_xi_printed(norm)
                    } else {
                        exponents.q_xi(norm)
                    };
                    (q, exponents.c_xi(&off).unwrap_or(0.0))
                } else if norm == 0 {
                    (exponents.q_sigma, exponents.c_sigma)
                } else {
                    (0.0, cfg.trap.delta_sigma)
                };
                OffsetSummary {
                    offset: off,
                    norm,
                    median,
                    mean_exponent,
                    target_exponent,
                    target_constant,
                }
            })
            .collect()
    };
    let xi_offsets = summarise(&|d: &CorrelationData| &d.xi_profile, true);
    let sigma_offsets = summarise(&|d: &CorrelationData| &d.sigma_profile, false);
    // fresh sigma draws under a disjoint seed tag for the independence check
    let sigma_samples: Vec<f64> = ok.iter().map(|d| d.sigma_z).collect();
    let sigma_vs_fresh_p = if sigma_samples.is_empty() {
        f64::NAN
    } else {
        let fresh: Vec<f64> = (0..sigma_samples.len())
            .map(|i| crate::env::sample_trap(0xFEED_5EED, &[i as i64], &cfg.trap))
            .collect();
        stats::ks_two_sample(&sigma_samples, &fresh).1
    };
    CorrelationAggregates {
        t: scales.t,
        rows: rows.len(),
        failures: rows.len() - ok.len(),
        q_sigma: exponents.q_sigma,
        c_sigma: exponents.c_sigma,
        mean_sigma_exponent_raw: mean_raw,
        se_sigma_exponent_raw: se_raw,
        mean_sigma_exponent_adjusted: mean_adj,
        se_sigma_exponent_adjusted: se_adj,
        xi_offsets,
        sigma_offsets,
        sigma_vs_fresh_p,
        profiles_vacuous: radius_set.rho == 0,
    }
}

/// Field-correlation profile around the predicted site, at the last
/// configured time point.
pub fn run_correlation_profile(
    cfg: &RunConfig,
) -> Result<Report<CorrelationRow, CorrelationAggregates>, HarnessError> {
    let started = std::time::Instant::now();
    let mut meta = build_meta(cfg, "correlation")?;
    let t = *cfg.times.last().unwrap();
    let scales = cfg.scales(t)?;
    let seeds = cfg.seeds();
    let rows: Vec<CorrelationRow> = parallel::with_degree(cfg.parallel_degree, || {
        parallel::map_indexed(seeds.len(), |i| {
            let seed = seeds[i];
            match correlation_row(cfg, seed, t) {
                Ok(data) => CorrelationRow { seed, t, error: None, data: Some(data) },
                Err(e) => CorrelationRow { seed, t, error: Some(e), data: None },
            }
        })
    });
    let aggregates = recompute_correlation_aggregates(cfg, &scales, &rows);
    meta.wall_time_ms = started.elapsed().as_millis() as u64;
    Ok(Report { meta, rows, aggregates })
}

// ------------------------------------------------------------------- mass

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassData {
    pub log_mass: f64,
    pub t_psi_j: f64,
    /// (log U(t) - t Psi^{(j)}(Z^{(j)})) / (t d_t).
    pub normalized_discrepancy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassRow {
    pub seed: u64,
    pub t: f64,
    pub error: Option<String>,
    pub data: Option<MassData>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MassAgg {
    pub t: f64,
    pub rows: usize,
    pub failures: usize,
    pub median_abs_discrepancy: f64,
    pub q25_discrepancy: f64,
    pub q75_discrepancy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MassAggregates {
    pub per_t: Vec<MassAgg>,
}

fn mass_row(cfg: &RunConfig, seed: u64, t: f64) -> Result<MassData, String> {
    let scales = cfg.scales(t).map_err(|e| e.to_string())?;
    let radius = cfg.box_radius_for(&scales);
    let env = build_env(cfg, seed, radius)?;
    let j = cfg.radius_set().map_err(|e| e.to_string())?.j;
    let jtop = predict_site(&env, &scales, PsiVariant::JBall { j }, cfg.psi_c)
        .map_err(|e| e.to_string())?;
    let domain: Vec<Site> = env.spec.sites().collect();
    let controls = EvolveControls { local_tol: cfg.evolve_tol, ..Default::default() };
    let state = evolve(&env, &domain, t, &controls).map_err(|e| e.to_string())?;
    let t_psi_j = t * jtop.psi;
    Ok(MassData {
        log_mass: state.log_mass,
        t_psi_j,
        normalized_discrepancy: (state.log_mass - t_psi_j) / (t * scales.d_t),
    })
}

pub fn recompute_mass_aggregates(times: &[f64], rows: &[MassRow]) -> MassAggregates {
    let per_t = times
        .iter()
        .map(|&t| {
            let at_t: Vec<&MassRow> = rows.iter().filter(|r| r.t == t).collect();
            let ok: Vec<&MassData> = at_t.iter().filter_map(|r| r.data.as_ref()).collect();
            let mut discs: Vec<f64> = ok.iter().map(|d| d.normalized_discrepancy).collect();
            discs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut abs: Vec<f64> = discs.iter().map(|d| d.abs()).collect();
            abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            MassAgg {
                t,
                rows: at_t.len(),
                failures: at_t.len() - ok.len(),
                median_abs_discrepancy: if abs.is_empty() {
                    f64::NAN
                } else {
                    stats::quantile(&abs, 0.5)
                },
                q25_discrepancy: if discs.is_empty() {
                    f64::NAN
                } else {
                    stats::quantile(&discs, 0.25)
                },
                q75_discrepancy: if discs.is_empty() {
                    f64::NAN
                } else {
                    stats::quantile(&discs, 0.75)
                },
            }
        })
        .collect();
    MassAggregates { per_t }
}

/// Compare the evolved log total mass with t Psi^{(j)} at the j-ball argmax.
pub fn run_mass_asymptotics(cfg: &RunConfig) -> Result<Report<MassRow, MassAggregates>, HarnessError> {
    let started = std::time::Instant::now();
    let mut meta = build_meta(cfg, "mass")?;
    let seeds = cfg.seeds();
    let mut pairs = Vec::new();
    for &seed in &seeds {
        for &t in &cfg.times {
            pairs.push((seed, t));
        }
    }
    let rows: Vec<MassRow> = parallel::with_degree(cfg.parallel_degree, || {
        parallel::map_indexed(pairs.len(), |i| {
            let (seed, t) = pairs[i];
            match mass_row(cfg, seed, t) {
                Ok(data) => MassRow { seed, t, error: None, data: Some(data) },
                Err(e) => MassRow { seed, t, error: Some(e), data: None },
            }
        })
    });
    let aggregates = recompute_mass_aggregates(&cfg.times, &rows);
    meta.wall_time_ms = started.elapsed().as_millis() as u64;
    Ok(Report { meta, rows, aggregates })
}

// ------------------------------------------------------------------ ageing

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgeingData {
    /// T_t / t.
    pub ratio: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgeingRow {
    pub seed: u64,
    pub t: f64,
    pub error: Option<String>,
    pub data: Option<AgeingData>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgeingAggregates {
    pub t: f64,
    pub rows: usize,
    pub failures: usize,
    pub censor_rate: f64,
    /// Fraction with T/t > 0 (positivity target: 1).
    pub positive_rate: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    /// Interquartile range of T/t (censored entries enter at the grid end).
    pub iqr: f64,
}

fn ageing_row(cfg: &RunConfig, seed: u64, t0: f64) -> Result<AgeingData, String> {
    let t_max = t0 * cfg.ageing_grid_factor;
    let scales_max = cfg.scales(t_max).map_err(|e| e.to_string())?;
    let radius = cfg.box_radius_for(&scales_max);
    let env = build_env(cfg, seed, radius)?;
    let scales0 = cfg.scales(t0).map_err(|e| e.to_string())?;
    let variant = cfg.psi_variant(&scales0).map_err(|e| e.to_string())?;
    let points = cfg.ageing_grid_points.max(2);
    let ratio = cfg.ageing_grid_factor.powf(1.0 / points as f64);
    let grid: Vec<f64> = (1..=points).map(|k| t0 * ratio.powi(k as i32)).collect();
    let out = crate::predictor::ageing_time(&env, t0, &grid, cfg.d, cfg.gamma, cfg.theta, variant)
        .map_err(|e| e.to_string())?;
    Ok(AgeingData { ratio: out.shift / t0, censored: out.censored })
}

pub fn recompute_ageing_aggregates(t: f64, rows: &[AgeingRow]) -> AgeingAggregates {
    let ok: Vec<&AgeingData> = rows.iter().filter_map(|r| r.data.as_ref()).collect();
    let mut ratios: Vec<f64> = ok.iter().map(|d| d.ratio).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (q25, median, q75) = if ratios.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            stats::quantile(&ratios, 0.25),
            stats::quantile(&ratios, 0.5),
            stats::quantile(&ratios, 0.75),
        )
    };
    let n = ok.len().max(1) as f64;
    AgeingAggregates {
        t,
        rows: rows.len(),
        failures: rows.len() - ok.len(),
        censor_rate: ok.iter().filter(|d| d.censored).count() as f64 / n,
        positive_rate: ok.iter().filter(|d| d.ratio > 0.0).count() as f64 / n,
        q25,
        median,
        q75,
        iqr: q75 - q25,
    }
}

/// Ageing-time campaign at the last configured time point.
pub fn run_ageing(cfg: &RunConfig) -> Result<Report<AgeingRow, AgeingAggregates>, HarnessError> {
    let started = std::time::Instant::now();
    let mut meta = build_meta(cfg, "ageing")?;
    let t0 = *cfg.times.last().unwrap();
    let seeds = cfg.seeds();
    let rows: Vec<AgeingRow> = parallel::with_degree(cfg.parallel_degree, || {
        parallel::map_indexed(seeds.len(), |i| {
            let seed = seeds[i];
            match ageing_row(cfg, seed, t0) {
                Ok(data) => AgeingRow { seed, t: t0, error: None, data: Some(data) },
                Err(e) => AgeingRow { seed, t: t0, error: Some(e), data: None },
            }
        })
    });
    let aggregates = recompute_ageing_aggregates(t0, &rows);
    meta.wall_time_ms = started.elapsed().as_millis() as u64;
    Ok(Report { meta, rows, aggregates })
}
