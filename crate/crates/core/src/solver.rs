//! Time evolution of the Cauchy problem du/dt = (Delta sigma^-1 + xi) u on a
//! domain, exact spectral solutions on small domains, and a Feynman-Kac
//! Monte Carlo estimator.
//!
//! The integrator is an adaptive embedded Runge-Kutta 5(4) pair
//! (Dormand-Prince) on the shifted operator H - (max eta) I, with per-step
//! renormalisation: the state keeps an l1-normalised profile plus a log-mass
//! offset, so exponential growth never materialises as a raw float. The step
//! is capped at 1.5 / (upper - lower Gershgorin bound).

use crate::env::Environment;
use crate::lattice::Site;
use crate::operator::{DomainOperator, OperatorError};
use crate::parallel;
use crate::rng::{tag, Stream};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("start site {0:?} not in the domain")]
    StartNotInDomain(Site),
    #[error("target site {0:?} not in the domain")]
    TargetNotInDomain(Site),
    #[error("step size underflow at t = {t} (dt = {dt})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("non-finite values at t = {t}; the integration blew up")]
    NonFinite { t: f64 },
    #[error("step budget exhausted ({0} steps)")]
    StepBudget(u64),
    #[error("domain of size {0} too large for a dense eigendecomposition (limit 2000)")]
    DomainTooLargeForDense(usize),
    #[error("Feynman-Kac variance guard: t * max xi = {0} exceeds 20")]
    FkGuard(f64),
    #[error("Feynman-Kac called with zero samples")]
    NoSamples,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveControls {
    /// Target local truncation error per step, relative to the profile mass.
    pub local_tol: f64,
    pub max_steps: u64,
}

impl Default for EvolveControls {
    fn default() -> Self {
        EvolveControls { local_tol: 1e-9, max_steps: 200_000_000 }
    }
}

/// Normalised solution profile with log-mass offset; raw solution is
/// exp(log_mass) * u.
#[derive(Debug, Clone)]
pub struct SolutionState {
    pub sites: Vec<Site>,
    pub u: Vec<f64>,
    pub log_mass: f64,
    pub time: f64,
    pub steps: u64,
    pub rejected: u64,
}

pub fn initial_state(op: &DomainOperator, start: &[i64]) -> Result<SolutionState, SolverError> {
    let idx = op
        .local_index(start)
        .ok_or_else(|| SolverError::StartNotInDomain(start.to_vec()))?;
    let mut u = vec![0.0; op.len()];
    u[idx] = 1.0;
    Ok(SolutionState {
        sites: op.sites.clone(),
        u,
        log_mass: 0.0,
        time: 0.0,
        steps: 0,
        rejected: 0,
    })
}

// Dormand-Prince 5(4) coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Advance the state to `t_target` under the operator.
pub fn advance(
    op: &DomainOperator,
    state: &mut SolutionState,
    t_target: f64,
    controls: &EvolveControls,
) -> Result<(), SolverError> {
    assert_eq!(state.u.len(), op.len());
    let n = op.len();
    let shift = op.eig_lower;
    let spread = op.eig_upper - op.eig_lower;
    let dt_cap = if spread > 0.0 { 1.5 / spread } else { f64::INFINITY };

    // shifted matvec B v = (H - shift) v
    let bmv = |v: &[f64], out: &mut [f64]| {
        op.apply_into(v, out);
        for i in 0..n {
            out[i] -= shift * v[i];
        }
    };

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut dt = dt_cap.min(t_target - state.time);
    if !dt.is_finite() {
        dt = t_target - state.time;
    }
    let mut fsal_valid = false;

    while state.time < t_target * (1.0 - 1e-15) {
        if state.steps + state.rejected > controls.max_steps {
            return Err(SolverError::StepBudget(controls.max_steps));
        }
        dt = dt.min(t_target - state.time);
        if dt <= 1e-14 * t_target.max(1.0) {
            return Err(SolverError::StepUnderflow { t: state.time, dt });
        }
        if !fsal_valid {
            bmv(&state.u, &mut k1);
            fsal_valid = true;
        }
        let u = &state.u;
        for i in 0..n {
            ytmp[i] = u[i] + dt * A21 * k1[i];
        }
        bmv(&ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = u[i] + dt * (A31 * k1[i] + A32 * k2[i]);
        }
        bmv(&ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = u[i] + dt * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        bmv(&ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] =
                u[i] + dt * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        bmv(&ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = u[i]
                + dt * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        bmv(&ytmp, &mut k6);
        // 5th-order solution (the b-row; b2 = b7 = 0); ytmp doubles as the
        // k1..k6 part of the embedded error while the arrays are hot
        for i in 0..n {
            y5[i] = u[i]
                + dt * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            ytmp[i] = E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i];
        }
        bmv(&y5, &mut k7);
        // embedded error estimate
        let mut err = 0.0;
        for i in 0..n {
            err += (ytmp[i] + E7 * k7[i]).abs();
        }
        err *= dt;
        let ynorm: f64 = y5.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
        let ratio = err / (controls.local_tol * ynorm);
        if !ratio.is_finite() {
            // blow-up inside the step: retry with a much smaller step
            dt *= 0.1;
            state.rejected += 1;
            fsal_valid = false;
            if dt <= 1e-14 * t_target.max(1.0) {
                return Err(SolverError::NonFinite { t: state.time });
            }
            continue;
        }
        if ratio <= 1.0 {
            // accept: clip round-off negatives, renormalise, accumulate mass.
            // B is linear, so the FSAL stage k7 = B(y5) rescales with y5.
            let mut norm1 = 0.0;
            for x in y5.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
                norm1 += *x;
            }
            if !(norm1 > 0.0) || !norm1.is_finite() {
                return Err(SolverError::NonFinite { t: state.time });
            }
            let inv = 1.0 / norm1;
            for i in 0..n {
                state.u[i] = y5[i] * inv;
                k1[i] = k7[i] * inv;
            }
            state.log_mass += shift * dt + norm1.ln();
            state.time += dt;
            state.steps += 1;
            let grow = if ratio > 0.0 { 0.9 * ratio.powf(-0.2) } else { 5.0 };
            dt = (dt * grow.clamp(0.2, 5.0)).min(dt_cap);
        } else {
            state.rejected += 1;
            fsal_valid = false;
            let shrink = (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
            dt *= shrink;
        }
    }
    state.time = t_target;
    Ok(())
}

/// Solve the Cauchy problem from a unit mass at the lattice origin.
pub fn evolve(
    env: &Environment,
    domain: &[Site],
    t_end: f64,
    controls: &EvolveControls,
) -> Result<SolutionState, SolverError> {
    let op = DomainOperator::new(env, domain)?;
    let origin = vec![0i64; env.spec.d];
    let mut state = initial_state(&op, &origin)?;
    advance(&op, &mut state, t_end, controls)?;
    Ok(state)
}

/// A value stored as log of absolute value plus sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub log_abs: f64,
    pub sign: f64,
}

impl LogValue {
    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }

    pub fn zero() -> Self {
        LogValue { log_abs: f64::NEG_INFINITY, sign: 0.0 }
    }
}

struct SpectralDecomposition {
    op: DomainOperator,
    eigenvalues: Vec<f64>,
    /// Column i is the i-th orthonormal eigenvector of the symmetrised form.
    vectors: nalgebra::DMatrix<f64>,
}

fn decompose(env: &Environment, domain: &[Site]) -> Result<SpectralDecomposition, SolverError> {
    let op = DomainOperator::new(env, domain)?;
    if op.len() > 2000 {
        return Err(SolverError::DomainTooLargeForDense(op.len()));
    }
    let eig = op.dense_sym().symmetric_eigen();
    Ok(SpectralDecomposition {
        op,
        eigenvalues: eig.eigenvalues.iter().cloned().collect(),
        vectors: eig.eigenvectors,
    })
}

impl SpectralDecomposition {
    /// u_z(t, y) = sqrt(sigma(y)/sigma(z)) sum_i e^{lambda_i t} v_i(z) v_i(y),
    /// evaluated with the top exponent factored out.
    fn point_value(&self, t: f64, zi: usize, yi: usize) -> LogValue {
        let lam_top = self.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        for (i, &lam) in self.eigenvalues.iter().enumerate() {
            acc += ((lam - lam_top) * t).exp() * self.vectors[(zi, i)] * self.vectors[(yi, i)];
        }
        let sig = (self.op.sigma(yi) / self.op.sigma(zi)).sqrt();
        if acc == 0.0 {
            return LogValue::zero();
        }
        LogValue {
            log_abs: lam_top * t + acc.abs().ln() + sig.ln(),
            sign: acc.signum(),
        }
    }
}

/// Exact spectral solution u_z(t, y) on a small domain.
pub fn spectral_solution(
    env: &Environment,
    domain: &[Site],
    t: f64,
    z: &[i64],
    y: &[i64],
) -> Result<LogValue, SolverError> {
    let dec = decompose(env, domain)?;
    let zi = dec.op.local_index(z).ok_or_else(|| SolverError::StartNotInDomain(z.to_vec()))?;
    let yi = dec.op.local_index(y).ok_or_else(|| SolverError::TargetNotInDomain(y.to_vec()))?;
    Ok(dec.point_value(t, zi, yi))
}

/// Full spectral profile from a start site: (l1-normalised u, log total mass).
pub fn spectral_profile(
    env: &Environment,
    domain: &[Site],
    t: f64,
    z: &[i64],
) -> Result<(Vec<f64>, f64), SolverError> {
    let dec = decompose(env, domain)?;
    let zi = dec.op.local_index(z).ok_or_else(|| SolverError::StartNotInDomain(z.to_vec()))?;
    let n = dec.op.len();
    let lam_top = dec.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut u = vec![0.0; n];
    for yi in 0..n {
        let mut acc = 0.0;
        for (i, &lam) in dec.eigenvalues.iter().enumerate() {
            acc += ((lam - lam_top) * t).exp() * dec.vectors[(zi, i)] * dec.vectors[(yi, i)];
        }
        u[yi] = (acc * (dec.op.sigma(yi) / dec.op.sigma(zi)).sqrt()).max(0.0);
    }
    let norm1: f64 = u.iter().sum();
    for x in u.iter_mut() {
        *x /= norm1;
    }
    Ok((u, lam_top * t + norm1.ln()))
}

/// Monte Carlo Feynman-Kac estimate.
#[derive(Debug, Clone, Copy)]
pub struct FkEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub t: f64,
}

/// Estimate u_z(t, y) (or the total mass when `target` is None) by
/// simulating killed trap-model walks carrying exp(int xi) weights.
/// Walkers use independent counter-based streams and reduce in index order,
/// so the result is independent of the parallel schedule.
pub fn fk_monte_carlo(
    env: &Environment,
    domain: &[Site],
    t: f64,
    z: &[i64],
    target: Option<&[i64]>,
    samples: u64,
    seed: u64,
) -> Result<FkEstimate, SolverError> {
    if samples == 0 {
        return Err(SolverError::NoSamples);
    }
    let op = DomainOperator::new(env, domain)?;
    let start = op
        .local_index(z)
        .ok_or_else(|| SolverError::StartNotInDomain(z.to_vec()))?;
    let target_idx = match target {
        Some(y) => Some(
            op.local_index(y)
                .ok_or_else(|| SolverError::TargetNotInDomain(y.to_vec()))?,
        ),
        None => None,
    };
    let max_xi = op.xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if t * max_xi > 20.0 {
        return Err(SolverError::FkGuard(t * max_xi));
    }
    // global site index -> local, for neighbour stepping
    let box_index: Vec<Option<u32>> = {
        let mut v = vec![None; env.spec.site_count()];
        for (i, s) in op.sites.iter().enumerate() {
            v[env.spec.index_of(s).unwrap()] = Some(i as u32);
        }
        v
    };
    let d = env.spec.d;
    let weights: Vec<f64> = parallel::map_indexed(samples as usize, |w| {
        let mut stream = Stream::new(seed, tag::WALKER, w as u64);
        let mut at = start;
        let mut site = op.sites[at].clone();
        let mut elapsed = 0.0;
        let mut integral = 0.0;
        loop {
            let sigma = 1.0 / op.inv_sigma[at];
            let dwell = stream.exponential(sigma);
            if elapsed + dwell >= t {
                integral += op.xi[at] * (t - elapsed);
                break;
            }
            integral += op.xi[at] * dwell;
            elapsed += dwell;
            let dir = stream.below(2 * d as u64) as usize;
            let axis = dir / 2;
            let step = if dir % 2 == 0 { -1i64 } else { 1 };
            site[axis] += step;
            match env.spec.index_of(&site).and_then(|gi| box_index[gi]) {
                Some(next) => at = next as usize,
                None => return 0.0, // left the domain: Dirichlet kill
            }
        }
        match target_idx {
            Some(y) if at != y => 0.0,
            _ => integral.exp(),
        }
    });
    let n = samples as f64;
    let mean: f64 = weights.iter().sum::<f64>() / n;
    let var: f64 = weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(FkEstimate { estimate: mean, std_error: (var / n).sqrt(), samples, t })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassProfile {
    pub argmax: Site,
    pub top_fraction: f64,
    pub second: Option<Site>,
    pub second_fraction: f64,
}

/// Top two mass fractions; ties broken lexicographically (scan order).
pub fn mass_profile(state: &SolutionState) -> MassProfile {
    let mut best = 0usize;
    for i in 1..state.u.len() {
        if state.u[i] > state.u[best] {
            best = i;
        }
    }
    let mut second: Option<usize> = None;
    for i in 0..state.u.len() {
        if i == best {
            continue;
        }
        match second {
            Some(s) if state.u[i] <= state.u[s] => {}
            _ => second = Some(i),
        }
    }
    let total: f64 = state.u.iter().sum();
    MassProfile {
        argmax: state.sites[best].clone(),
        top_fraction: state.u[best] / total,
        second: second.map(|s| state.sites[s].clone()),
        second_fraction: second.map(|s| state.u[s] / total).unwrap_or(0.0),
    }
}
