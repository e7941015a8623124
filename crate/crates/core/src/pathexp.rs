//! Path expansions for principal eigenvalues and eigenfunctions, boundary
//! exit functionals, and Feynman-Kac path weights.
//!
//! The eigenvalue expansion sums over return paths from the centre that
//! avoid it internally:
//!
//!   lambda = eta(z) + sigma^-1(z) Sum_{2 <= |p| <= max_len}
//!            (2d)^-1 Prod_{0 < i < |p|} (2d)^-1 sigma^-1(p_i) / (lambda - eta(p_i))
//!
//! Each of the |p| hops carries one (2d)^-1; the hop out of the centre is the
//! leading factor and the remaining ones sit with their interior site. (On a
//! 3-site chain with unit sigma this reads lambda = eta_0 +
//! (1/4)[1/(lambda - eta_+) + 1/(lambda - eta_-)], which the dense secular
//! equation confirms.) The fixed point is solved iteratively from the upper
//! Gershgorin bound, damping on oscillation.

use crate::env::Environment;
use crate::lattice::{l1_dist, Site};
use crate::operator::{ball_domain, DomainOperator, OperatorError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Enumerated-path budget per ball.
pub const PATH_BUDGET: usize = 100_000;
pub const MAX_FIXED_POINT_ITERS: usize = 10_000;

#[derive(Debug, Error)]
pub enum PathExpError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("path budget exceeded: more than {0} return paths")]
    PathBudget(usize),
    #[error("max_len must be an even integer >= 2, got {0}")]
    BadMaxLen(usize),
    #[error("gap violation: lambda = {lambda} does not exceed eta = {eta} at an interior site")]
    GapViolation { lambda: f64, eta: f64 },
    #[error("fixed point did not converge in {iters} iterations (last delta {delta})")]
    NonConvergence { iters: usize, delta: f64 },
    #[error("geometric tail bound {bound} not below tol {tol} at truncation {max_len}")]
    TailBound { bound: f64, tol: f64, max_len: usize },
    #[error("zeta = {zeta} must exceed the principal eigenvalue {lambda}")]
    ZetaBelowLambda { zeta: f64, lambda: f64 },
    #[error("zeta = {zeta} must exceed eta = {eta} on the path")]
    ZetaBelowEta { zeta: f64, eta: f64 },
    #[error("path sites must be nearest neighbours")]
    NotAPath,
    #[error("site {0:?} outside the environment box")]
    OutsideBox(Site),
}

#[derive(Debug, Clone)]
pub struct PathExpansionResult {
    pub lambda: f64,
    /// Truncation length (paths of length 2..=truncation were summed).
    pub truncation: usize,
    pub iterations: usize,
    pub last_delta: f64,
    /// Per path length: (length, number of paths, summed contribution at the
    /// final lambda).
    pub contributions: Vec<(usize, usize, f64)>,
}

/// Return paths of length 2..=max_len from `center` that avoid it internally
/// and stay inside the operator's domain. Each path is the list of interior
/// local indices.
fn enumerate_return_paths(
    op: &DomainOperator,
    center: usize,
    max_len: usize,
) -> Result<Vec<Vec<u32>>, PathExpError> {
    let mut out = Vec::new();
    let mut interior = Vec::new();
    dfs_return(op, center, center, 0, max_len, &mut interior, &mut out)?;
    Ok(out)
}

fn dfs_return(
    op: &DomainOperator,
    center: usize,
    at: usize,
    depth: usize,
    max_len: usize,
    interior: &mut Vec<u32>,
    out: &mut Vec<Vec<u32>>,
) -> Result<(), PathExpError> {
    if depth > 0 && at == center {
        if depth >= 2 {
            if out.len() >= PATH_BUDGET {
                return Err(PathExpError::PathBudget(PATH_BUDGET));
            }
            out.push(interior.clone());
        }
        return Ok(());
    }
    if depth == max_len {
        return Ok(());
    }
    if depth > 0 {
        interior.push(at as u32);
    }
    for &nb in op.neighbors_of(at) {
        dfs_return(op, center, nb as usize, depth + 1, max_len, interior, out)?;
    }
    if depth > 0 {
        interior.pop();
    }
    Ok(())
}

/// Iteratively solve the truncated path-expansion fixed point for the
/// principal eigenvalue of the n-local Hamiltonian at `z`.
pub fn path_expansion_eigenvalue(
    env: &Environment,
    z: &[i64],
    n: u64,
    max_len: usize,
    tol: f64,
) -> Result<PathExpansionResult, PathExpError> {
    if max_len < 2 || max_len % 2 != 0 {
        return Err(PathExpError::BadMaxLen(max_len));
    }
    let domain = ball_domain(env, z, n)?;
    let op = DomainOperator::new(env, &domain)?;
    let center = op.local_index(z).expect("centre in its own ball");
    let paths = enumerate_return_paths(&op, center, max_len)?;
    let two_d_inv = 1.0 / (2.0 * op.d as f64);
    let eta: Vec<f64> = (0..op.len()).map(|i| op.eta(i)).collect();
    let sum_at = |lambda: f64| -> Result<f64, PathExpError> {
        let mut total = 0.0;
        for p in &paths {
            let mut w = two_d_inv;
            for &i in p {
                let gap = lambda - eta[i as usize];
                if gap <= 0.0 {
                    return Err(PathExpError::GapViolation { lambda, eta: eta[i as usize] });
                }
                w *= two_d_inv * op.inv_sigma[i as usize] / gap;
            }
            total += w;
        }
        Ok(total)
    };

    let eta_z = eta[center];
    let mut lambda = op.eig_upper;
    let mut prev_step = 0.0f64;
    let mut delta = f64::INFINITY;
    for it in 1..=MAX_FIXED_POINT_ITERS {
        let candidate = eta_z + op.inv_sigma[center] * sum_at(lambda)?;
        let step = candidate - lambda;
        // damp when the iteration starts to alternate
        let next = if prev_step * step < 0.0 { 0.5 * (lambda + candidate) } else { candidate };
        delta = (next - lambda).abs();
        prev_step = step;
        lambda = next;
        if delta < tol {
            let mut contributions = Vec::new();
            for p in &paths {
                let k = p.len() + 1;
                let mut w = two_d_inv;
                for &i in p {
                    w *= two_d_inv * op.inv_sigma[i as usize] / (lambda - eta[i as usize]);
                }
                w *= op.inv_sigma[center];
                match contributions.iter_mut().find(|(len, _, _)| *len == k) {
                    Some((_, cnt, sum)) => {
                        *cnt += 1;
                        *sum += w;
                    }
                    None => contributions.push((k, 1, w)),
                }
            }
            contributions.sort_by_key(|&(k, _, _)| k);
            return Ok(PathExpansionResult {
                lambda,
                truncation: max_len,
                iterations: it,
                last_delta: delta,
                contributions,
            });
        }
    }
    Err(PathExpError::NonConvergence { iters: MAX_FIXED_POINT_ITERS, delta })
}

/// Truncated path expansion of the eigenfunction ratio phi(y)/phi(z) on the
/// domain `sites`, with a geometric tail bound certified below `tol`.
pub fn eigenfunction_ratio(
    env: &Environment,
    sites: &[Site],
    z: &[i64],
    y: &[i64],
    lambda: f64,
    max_len: usize,
    tol: f64,
) -> Result<f64, PathExpError> {
    if y == z {
        return Ok(1.0);
    }
    let op = DomainOperator::new(env, sites)?;
    let center = op
        .local_index(z)
        .ok_or_else(|| PathExpError::OutsideBox(z.to_vec()))?;
    let start = op
        .local_index(y)
        .ok_or_else(|| PathExpError::OutsideBox(y.to_vec()))?;
    let two_d_inv = 1.0 / (2.0 * op.d as f64);
    // per-site hop factor a(x) = (2d)^-1 sigma^-1(x) / (lambda - eta(x))
    let mut a = vec![0.0; op.len()];
    let mut ratio_max = 0.0f64;
    for i in 0..op.len() {
        if i == center {
            continue;
        }
        let gap = lambda - op.eta(i);
        if gap <= 0.0 {
            return Err(PathExpError::GapViolation { lambda, eta: op.eta(i) });
        }
        a[i] = two_d_inv * op.inv_sigma[i] / gap;
        ratio_max = ratio_max.max(op.inv_sigma[i] / gap);
    }
    if ratio_max >= 1.0 {
        return Err(PathExpError::TailBound { bound: f64::INFINITY, tol, max_len });
    }
    let tail = ratio_max.powi(max_len as i32 + 1) / (1.0 - ratio_max);
    let sigma_ratio = op.sigma(start) / op.sigma(center);
    if sigma_ratio * tail >= tol {
        return Err(PathExpError::TailBound { bound: sigma_ratio * tail, tol, max_len });
    }
    // DFS over paths y -> z avoiding z internally, accumulating weights
    let mut total = 0.0;
    let mut count = 0usize;
    dfs_ratio(&op, start, center, 1.0, 0, max_len, &a, &mut total, &mut count)?;
    Ok(sigma_ratio * total)
}

#[allow(clippy::too_many_arguments)]
fn dfs_ratio(
    op: &DomainOperator,
    at: usize,
    target: usize,
    weight: f64,
    depth: usize,
    max_len: usize,
    a: &[f64],
    total: &mut f64,
    count: &mut usize,
) -> Result<(), PathExpError> {
    if at == target && depth > 0 {
        *count += 1;
        if *count > PATH_BUDGET {
            return Err(PathExpError::PathBudget(PATH_BUDGET));
        }
        *total += weight;
        return Ok(());
    }
    if depth == max_len {
        return Ok(());
    }
    let w = weight * a[at];
    for &nb in op.neighbors_of(at) {
        dfs_ratio(op, nb as usize, target, w, depth + 1, max_len, a, total, count)?;
    }
    Ok(())
}

/// Boundary-value exit functional
/// u(z) = E_z[exp{ int_0^{tau_{D^c}} (xi(X_s) - zeta) ds }], with u = 1 off D.
///
/// As a function of the start site this solves the backward problem
/// (sigma^-1 Delta + xi - zeta) u = 0 on D — the transpose of the forward
/// operator — by a direct solve (CG on the symmetrised system above 2000
/// sites). Integrating the first holding time confirms the convention:
/// u(y) = sigma^-1(y) (zeta - eta(y))^-1 (2d)^-1 sum over neighbours of u.
pub fn exit_functional(
    env: &Environment,
    sites: &[Site],
    z: &[i64],
    zeta: f64,
) -> Result<f64, PathExpError> {
    let op = DomainOperator::new(env, sites)?;
    let at = op
        .local_index(z)
        .ok_or_else(|| PathExpError::OutsideBox(z.to_vec()))?;
    let lambda = op.principal_eigenpair(crate::operator::DEFAULT_EIG_TOL)?.lambda;
    if zeta <= lambda {
        return Err(PathExpError::ZetaBelowLambda { zeta, lambda });
    }
    let n = op.len();
    let two_d_inv = 1.0 / (2.0 * op.d as f64);
    // boundary inflow: each out-of-domain neighbour contributes a jump at
    // rate sigma^-1(y) (2d)^-1 into the constant boundary value 1
    let mut b = vec![0.0; n];
    for (i, _site) in op.sites.iter().enumerate() {
        let in_domain = op.neighbors_of(i).len();
        let outside = 2 * op.d - in_domain;
        b[i] = outside as f64 * two_d_inv * op.inv_sigma[i];
    }
    if n <= 2000 {
        let mut m = -op.dense().transpose();
        for i in 0..n {
            m[(i, i)] += zeta;
        }
        let rhs = DVector::from_vec(b);
        let lu = m.lu();
        let u = lu.solve(&rhs).expect("zeta - H is invertible for zeta > lambda_1");
        Ok(u[at])
    } else {
        Ok(exit_functional_cg(&op, &b, zeta, at))
    }
}

/// Jacobi-preconditioned CG on the symmetrised system for large domains.
/// With w = sigma^1/2 u, (zeta - H~) w = sigma^1/2 b.
fn exit_functional_cg(op: &DomainOperator, b: &[f64], zeta: f64, at: usize) -> f64 {
    let n = op.len();
    let bs: Vec<f64> = (0..n).map(|i| b[i] / op.inv_sigma[i].sqrt()).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        op.apply_sym_into(v, out);
        for i in 0..n {
            out[i] = zeta * v[i] - out[i];
        }
    };
    let precond: Vec<f64> = (0..n).map(|i| 1.0 / (zeta - op.eta(i)).max(1e-300)).collect();
    let mut x = vec![0.0; n];
    let mut r = bs.clone();
    let mut zv: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
    let mut p = zv.clone();
    let mut rz: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..10 * n {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm < 1e-12 * (1.0 + bs.iter().map(|v| v * v).sum::<f64>().sqrt()) {
            break;
        }
        for i in 0..n {
            zv[i] = r[i] * precond[i];
        }
        let rz_new: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = zv[i] + beta * p[i];
        }
    }
    x[at] * op.inv_sigma[at].sqrt()
}

/// Feynman-Kac weight of a fixed path:
/// prod_{i=0}^{k-1} (2d)^-1 sigma^-1(p_i) / (zeta - eta(p_i)).
pub fn fk_path_weight(env: &Environment, path: &[Site], zeta: f64) -> Result<f64, PathExpError> {
    if path.len() <= 1 {
        return Ok(1.0);
    }
    let two_d_inv = 1.0 / (2.0 * env.spec.d as f64);
    let mut w = 1.0;
    for i in 0..path.len() - 1 {
        if l1_dist(&path[i], &path[i + 1]) != 1 {
            return Err(PathExpError::NotAPath);
        }
        let eta = env
            .eta_at(&path[i])
            .ok_or_else(|| PathExpError::OutsideBox(path[i].clone()))?;
        if zeta <= eta {
            return Err(PathExpError::ZetaBelowEta { zeta, eta });
        }
        let inv_sigma = 1.0 / env.sigma_at(&path[i]).unwrap();
        w *= two_d_inv * inv_sigma / (zeta - eta);
    }
    Ok(w)
}

/// Dense principal eigenvalue helper used by oracles.
pub fn dense_top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}
