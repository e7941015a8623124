//! The localisation-site predictor: penalisation functionals over the
//! candidate level set, top-two statistics, ageing times and gap events.
//!
//! The functional is Psi_t(z) = lambda(z) - (|z| / (gamma t)) loglog t, with
//! the lambda part selected by variant: the masked Hamiltonian on B(z, rho),
//! the plain j-ball eigenvalue, its punctured version, the net growth rate
//! eta(z), or the bare potential xi(z). An optional + c |z| / t term covers
//! the generalised functional.

use crate::env::Environment;
use crate::lattice::{l1_norm, Site};
use crate::operator::{
    local_eigenvalue, masked_local_eigenvalue, punctured_local_eigenvalue, OperatorError,
};
use crate::scales::{ScaleSet, ScaleError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Scales(#[from] ScaleError),
    #[error("site {0:?} outside the environment box")]
    OutsideBox(Site),
    #[error("empty candidate set at level {level}")]
    EmptyCandidates { level: f64 },
    #[error("ageing grid must be strictly increasing from t0")]
    BadGrid,
}

/// Which local functional plays the lambda role in Psi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum PsiVariant {
    /// lambda(z) of (Delta sigma^-1 + xi 1_{B(z,rho_xi)}) 1_{B(z,rho)}.
    Masked { rho: u32, rho_xi: u32 },
    /// lambda^{(j)}(z) on the plain j-ball.
    JBall { j: u32 },
    /// j-ball eigenvalue with off-centre potentials clamped below `level`.
    PuncturedJBall { j: u32, level: f64 },
    /// eta(z) = xi(z) - sigma^-1(z); exact for rho = 0.
    EtaOnly,
    /// xi(z) alone (the sigma-independent reduction).
    XiOnly,
}

impl PsiVariant {
    /// l1 radius of the ball the variant needs around each candidate.
    pub fn ball_radius(&self) -> u64 {
        match *self {
            PsiVariant::Masked { rho, .. } => rho as u64,
            PsiVariant::JBall { j } => j as u64,
            PsiVariant::PuncturedJBall { j, .. } => j as u64,
            PsiVariant::EtaOnly | PsiVariant::XiOnly => 0,
        }
    }

    pub fn lambda_part(&self, env: &Environment, z: &[i64]) -> Result<f64, PredictorError> {
        match *self {
            PsiVariant::Masked { rho, rho_xi } => {
                Ok(masked_local_eigenvalue(env, z, rho, rho_xi)?)
            }
            PsiVariant::JBall { j } => {
                if j == 0 {
                    env.eta_at(z).ok_or_else(|| PredictorError::OutsideBox(z.to_vec()))
                } else {
                    Ok(local_eigenvalue(env, z, j as u64)?)
                }
            }
            PsiVariant::PuncturedJBall { j, level } => {
                if j == 0 {
                    env.eta_at(z).ok_or_else(|| PredictorError::OutsideBox(z.to_vec()))
                } else {
                    Ok(punctured_local_eigenvalue(env, z, j as u64, level)?)
                }
            }
            PsiVariant::EtaOnly => {
                env.eta_at(z).ok_or_else(|| PredictorError::OutsideBox(z.to_vec()))
            }
            PsiVariant::XiOnly => {
                env.xi_at(z).ok_or_else(|| PredictorError::OutsideBox(z.to_vec()))
            }
        }
    }
}

/// Psi_{t,c}(z) = lambda_variant(z) - (|z|/(gamma t)) loglog t + c |z| / t.
pub fn psi(
    env: &Environment,
    z: &[i64],
    scales: &ScaleSet,
    variant: PsiVariant,
    c: f64,
) -> Result<f64, PredictorError> {
    let lambda = variant.lambda_part(env, z)?;
    let n = l1_norm(z);
    Ok(lambda - scales.penalty(n) + c * n as f64 / scales.t)
}

/// Top-two statistics of Psi over the candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTwo {
    pub site: Site,
    pub psi: f64,
    pub runner_up: Option<Site>,
    pub runner_up_psi: Option<f64>,
    pub gap: Option<f64>,
    pub gap_over_dt: Option<f64>,
    pub candidates: usize,
    /// Candidates skipped because their eigenvalue ball crossed the box edge.
    pub boundary_skipped: usize,
}

/// Argmax (and runner-up) of Psi over the level set Pi^{(L_t)}.
/// Candidates whose ball does not fit inside the box are skipped and
/// counted; ties break lexicographically.
pub fn predict_site(
    env: &Environment,
    scales: &ScaleSet,
    variant: PsiVariant,
    c: f64,
) -> Result<TopTwo, PredictorError> {
    let candidates = env.level_set(scales.l_t);
    if candidates.is_empty() {
        return Err(PredictorError::EmptyCandidates { level: scales.l_t });
    }
    let radius = variant.ball_radius();
    let mut best: Option<(Site, f64)> = None;
    let mut second: Option<(Site, f64)> = None;
    let mut skipped = 0usize;
    let mut evaluated = 0usize;
    for z in candidates {
        if radius > 0 && !crate::lattice::ball_in_box(&env.spec, &z, radius) {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        let value = psi(env, &z, scales, variant, c)?;
        // strict > keeps the lexicographically first site on ties
        match best {
            Some((_, bv)) if value <= bv => match second {
                Some((_, sv)) if value <= sv => {}
                _ => second = Some((z, value)),
            },
            _ => {
                second = best.take();
                best = Some((z, value));
            }
        }
    }
    let (site, best_psi) = best.ok_or(PredictorError::EmptyCandidates { level: scales.l_t })?;
    let gap = second.as_ref().map(|(_, s)| best_psi - s);
    Ok(TopTwo {
        site,
        psi: best_psi,
        runner_up: second.as_ref().map(|(z, _)| z.clone()),
        runner_up_psi: second.as_ref().map(|(_, v)| *v),
        gap,
        gap_over_dt: gap.map(|g| g / scales.d_t),
        candidates: evaluated,
        boundary_skipped: skipped,
    })
}

/// Outcome of the ageing-time search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeingOutcome {
    /// Time shift T with Z_{t0+T} != Z_{t0}; the grid end when censored.
    pub shift: f64,
    pub censored: bool,
    /// False when the crossing sat between grid points and bisection refined it.
    pub at_grid_resolution: bool,
}

/// First time shift at which the predicted site changes, on a grid of
/// absolute times, refined by bisection to 1e-3 relative.
pub fn ageing_time(
    env: &Environment,
    t0: f64,
    grid: &[f64],
    d: usize,
    gamma: f64,
    theta: f64,
    variant: PsiVariant,
) -> Result<AgeingOutcome, PredictorError> {
    if grid.is_empty() || grid[0] <= t0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PredictorError::BadGrid);
    }
    let site_at = |t: f64| -> Result<Site, PredictorError> {
        let scales = ScaleSet::compute(t, d, gamma, theta)?;
        Ok(predict_site(env, &scales, variant, 0.0)?.site)
    };
    let base = site_at(t0)?;
    let mut lo = t0;
    let mut hi = None;
    for &t in grid {
        if site_at(t)? != base {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(mut hi) = hi else {
        return Ok(AgeingOutcome {
            shift: grid[grid.len() - 1] - t0,
            censored: true,
            at_grid_resolution: true,
        });
    };
    // bisect the bracketing interval on the predicate "site changed"
    let mut refined = false;
    while (hi - lo) > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if site_at(mid)? != base {
            hi = mid;
        } else {
            lo = mid;
        }
        refined = true;
    }
    Ok(AgeingOutcome { shift: hi - t0, censored: false, at_grid_resolution: !refined })
}

/// Diagnostic thresholds for the gap events.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapThresholds {
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

impl Default for GapThresholds {
    fn default() -> Self {
        GapThresholds { e: 1.0, f: 0.1, g: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEvents {
    /// Psi(Z) - Psi(Z2) > d_t * e.
    pub gap_event: Option<bool>,
    /// r_t f < |Z| < r_t g.
    pub distance_event: bool,
    /// a_t (1 - f) < Psi(Z) < a_t (1 + f).
    pub height_event: bool,
    pub top: TopTwo,
}

pub fn gap_event_check(
    env: &Environment,
    scales: &ScaleSet,
    variant: PsiVariant,
    thresholds: &GapThresholds,
) -> Result<GapEvents, PredictorError> {
    let top = predict_site(env, scales, variant, 0.0)?;
    let norm = l1_norm(&top.site) as f64;
    Ok(GapEvents {
        gap_event: top.gap.map(|g| g > scales.d_t * thresholds.e),
        distance_event: scales.r_t * thresholds.f < norm && norm < scales.r_t * thresholds.g,
        height_event: scales.a_t * (1.0 - thresholds.f) < top.psi
            && top.psi < scales.a_t * (1.0 + thresholds.f),
        top,
    })
}
