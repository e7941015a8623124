//! Matrix-free Hamiltonians H = (Delta sigma^-1 + xi) 1_D with Dirichlet
//! boundary, their principal eigenpairs, and the local / masked / punctured
//! eigenvalue variants.
//!
//! The operator acts as
//!   (Hv)(z) = sum_{|y-z|=1, y in D} (2d)^-1 sigma^-1(y) v(y) + eta(z) v(z)
//! with eta = xi - sigma^-1. It is similar to the symmetric form
//! sigma^-1/2 Delta sigma^-1/2 + xi, on which the eigensolver runs.

use crate::env::Environment;
use crate::lattice::{ball_in_box, l1_ball, l1_dist, Site};
use nalgebra::DMatrix;
use thiserror::Error;

pub const DEFAULT_EIG_TOL: f64 = 1e-12;
pub const MAX_EIG_ITERS: usize = 400_000;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("domain is empty")]
    EmptyDomain,
    #[error("site {0:?} outside the environment box")]
    SiteOutsideBox(Site),
    #[error("ball B({center:?}, {n}) does not fit inside the box")]
    BallOutsideBox { center: Site, n: u64 },
    #[error("vector length {got} does not match domain size {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("rho_xi = {rho_xi} exceeds rho = {rho}")]
    BadMaskRadii { rho: u32, rho_xi: u32 },
    #[error("eigensolver did not converge in {iters} iterations (last Rayleigh {last})")]
    NonConvergence { iters: usize, last: f64 },
    #[error("computed eigenvalue {lambda} violates the Gershgorin sandwich [{lower}, {upper}]")]
    SandwichViolation { lambda: f64, lower: f64, upper: f64 },
}

/// Principal eigenpair of an operator on a domain.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    /// Eigenvector of the original (unsymmetrised) operator, l2-normalised,
    /// sign fixed positive.
    pub phi: Vec<f64>,
    /// Residual ||H~ v - lambda v||_2 of the symmetrised iterate.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
struct ChainCoefs {
    sub: Vec<f64>,
    sup: Vec<f64>,
    sub_sym: Vec<f64>,
    sup_sym: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DomainOperator {
    pub d: usize,
    /// Domain sites in lexicographic order.
    pub sites: Vec<Site>,
    /// Effective potential per site (masking already applied).
    pub xi: Vec<f64>,
    pub inv_sigma: Vec<f64>,
    sqrt_sigma: Vec<f64>,
    /// CSR adjacency: neighbours of site i are cols[offsets[i]..offsets[i+1]].
    offsets: Vec<u32>,
    cols: Vec<u32>,
    /// Hop coefficient (2d)^-1 sigma^-1(y) per CSR entry.
    coef: Vec<f64>,
    /// Symmetrised hop coefficient (2d)^-1 (sigma(z) sigma(y))^-1/2.
    coef_sym: Vec<f64>,
    /// Tridiagonal fast path for contiguous d = 1 chains:
    /// (sub, super, sub_sym, super_sym).
    chain: Option<ChainCoefs>,
    /// Lower eigenvalue bound: max eta.
    pub eig_lower: f64,
    /// Upper eigenvalue bound: max (eta + sum of in-domain hop coefficients).
    pub eig_upper: f64,
    /// Gershgorin lower disc edge of the symmetrised form (for shifting).
    sym_disc_min: f64,
}

impl DomainOperator {
    pub fn new(env: &Environment, domain: &[Site]) -> Result<Self, OperatorError> {
        Self::with_potential(env, domain, |_, xi| xi)
    }

    /// Build with a transformed potential; `f(site, xi)` returns the
    /// effective potential (used by the masked and punctured variants).
    pub fn with_potential(
        env: &Environment,
        domain: &[Site],
        f: impl Fn(&[i64], f64) -> f64,
    ) -> Result<Self, OperatorError> {
        if domain.is_empty() {
            return Err(OperatorError::EmptyDomain);
        }
        let mut sites: Vec<Site> = domain.to_vec();
        sites.sort();
        sites.dedup();
        let n = sites.len();
        let mut local = std::collections::HashMap::with_capacity(n);
        for (i, z) in sites.iter().enumerate() {
            if !env.spec.contains(z) {
                return Err(OperatorError::SiteOutsideBox(z.clone()));
            }
            local.insert(z.clone(), i as u32);
        }
        let d = env.spec.d;
        let two_d_inv = 1.0 / (2.0 * d as f64);
        let mut xi = Vec::with_capacity(n);
        let mut inv_sigma = Vec::with_capacity(n);
        let mut sqrt_sigma = Vec::with_capacity(n);
        for z in &sites {
            let idx = env.spec.index_of(z).unwrap();
            xi.push(f(z, env.xi[idx]));
            inv_sigma.push(1.0 / env.sigma[idx]);
            sqrt_sigma.push(env.sigma[idx].sqrt());
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut coef = Vec::new();
        let mut coef_sym = Vec::new();
        offsets.push(0u32);
        for (i, z) in sites.iter().enumerate() {
            for k in 0..d {
                for s in [-1i64, 1] {
                    let mut y = z.clone();
                    y[k] += s;
                    if let Some(&j) = local.get(&y) {
                        cols.push(j);
                        coef.push(two_d_inv * inv_sigma[j as usize]);
                        coef_sym.push(
                            two_d_inv / (sqrt_sigma[i] * sqrt_sigma[j as usize]),
                        );
                    }
                }
            }
            offsets.push(cols.len() as u32);
        }
        let mut eig_lower = f64::NEG_INFINITY;
        let mut eig_upper = f64::NEG_INFINITY;
        let mut sym_disc_min = f64::INFINITY;
        for i in 0..n {
            let eta = xi[i] - inv_sigma[i];
            eig_lower = eig_lower.max(eta);
            let row_unsym: f64 =
                (offsets[i]..offsets[i + 1]).map(|e| coef[e as usize]).sum();
            let row_sym: f64 =
                (offsets[i]..offsets[i + 1]).map(|e| coef_sym[e as usize]).sum();
            eig_upper = eig_upper.max(eta + row_unsym);
            sym_disc_min = sym_disc_min.min(eta - row_sym);
        }
        // contiguous d = 1 chains get branch-free tridiagonal coefficients
        let chain = if d == 1
            && n >= 2
            && sites.windows(2).all(|w| w[1][0] == w[0][0] + 1)
        {
            let half = 0.5;
            let mut sub = vec![0.0; n];
            let mut sup = vec![0.0; n];
            let mut sub_sym = vec![0.0; n];
            let mut sup_sym = vec![0.0; n];
            for i in 0..n {
                if i > 0 {
                    sub[i] = half * inv_sigma[i - 1];
                    sub_sym[i] = half / (sqrt_sigma[i] * sqrt_sigma[i - 1]);
                }
                if i + 1 < n {
                    sup[i] = half * inv_sigma[i + 1];
                    sup_sym[i] = half / (sqrt_sigma[i] * sqrt_sigma[i + 1]);
                }
            }
            Some(ChainCoefs { sub, sup, sub_sym, sup_sym })
        } else {
            None
        };
        Ok(DomainOperator {
            d,
            sites,
            xi,
            inv_sigma,
            sqrt_sigma,
            offsets,
            cols,
            coef,
            coef_sym,
            eig_lower,
            eig_upper,
            sym_disc_min,
            chain,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn local_index(&self, z: &[i64]) -> Option<usize> {
        self.sites.binary_search_by(|s| s.as_slice().cmp(z)).ok()
    }

    #[inline]
    pub fn eta(&self, i: usize) -> f64 {
        self.xi[i] - self.inv_sigma[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        1.0 / self.inv_sigma[i]
    }

    /// In-domain neighbour local indices of site i.
    pub fn neighbors_of(&self, i: usize) -> &[u32] {
        &self.cols[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.len());
        let n = self.len();
        if let Some(chain) = &self.chain {
            out[0] = (self.xi[0] - self.inv_sigma[0]) * v[0] + chain.sup[0] * v[1];
            for i in 1..n - 1 {
                out[i] = (self.xi[i] - self.inv_sigma[i]) * v[i]
                    + chain.sub[i] * v[i - 1]
                    + chain.sup[i] * v[i + 1];
            }
            out[n - 1] = (self.xi[n - 1] - self.inv_sigma[n - 1]) * v[n - 1]
                + chain.sub[n - 1] * v[n - 2];
            return;
        }
        for i in 0..n {
            let mut acc = (self.xi[i] - self.inv_sigma[i]) * v[i];
            for e in self.offsets[i] as usize..self.offsets[i + 1] as usize {
                acc += self.coef[e] * v[self.cols[e] as usize];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if v.len() != self.len() {
            return Err(OperatorError::DimensionMismatch { got: v.len(), want: self.len() });
        }
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    pub fn apply_sym_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.len());
        let n = self.len();
        if let Some(chain) = &self.chain {
            out[0] = (self.xi[0] - self.inv_sigma[0]) * v[0] + chain.sup_sym[0] * v[1];
            for i in 1..n - 1 {
                out[i] = (self.xi[i] - self.inv_sigma[i]) * v[i]
                    + chain.sub_sym[i] * v[i - 1]
                    + chain.sup_sym[i] * v[i + 1];
            }
            out[n - 1] = (self.xi[n - 1] - self.inv_sigma[n - 1]) * v[n - 1]
                + chain.sub_sym[n - 1] * v[n - 2];
            return;
        }
        for i in 0..n {
            let mut acc = (self.xi[i] - self.inv_sigma[i]) * v[i];
            for e in self.offsets[i] as usize..self.offsets[i + 1] as usize {
                acc += self.coef_sym[e] * v[self.cols[e] as usize];
            }
            out[i] = acc;
        }
    }

    /// Dense unsymmetrised matrix (small domains; oracles and spectral sums).
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.xi[i] - self.inv_sigma[i];
            for e in self.offsets[i] as usize..self.offsets[i + 1] as usize {
                m[(i, self.cols[e] as usize)] = self.coef[e];
            }
        }
        m
    }

    /// Dense symmetrised matrix.
    pub fn dense_sym(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.xi[i] - self.inv_sigma[i];
            for e in self.offsets[i] as usize..self.offsets[i + 1] as usize {
                m[(i, self.cols[e] as usize)] = self.coef_sym[e];
            }
        }
        m
    }

    /// Principal eigenpair by shifted power iteration on the symmetrised
    /// form. The shift makes every Gershgorin disc strictly positive, so the
    /// iteration converges to the Perron root from a positive start.
    pub fn principal_eigenpair(&self, tol: f64) -> Result<EigenPair, OperatorError> {
        assert!(tol > 0.0, "tolerance must be positive");
        let n = self.len();
        let shift = (-self.sym_disc_min).max(0.0) + 1.0;
        let mut v = vec![(n as f64).powf(-0.5); n];
        let mut w = vec![0.0; n];
        let mut theta_prev = f64::INFINITY;
        for it in 1..=MAX_EIG_ITERS {
            self.apply_sym_into(&v, &mut w);
            let theta: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            if it >= 3 && (theta - theta_prev).abs() <= tol * (1.0 + theta.abs()) {
                let residual = v
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| (b - theta * a).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let slack = 1e-9 * (1.0 + theta.abs());
                if theta < self.eig_lower - slack || theta > self.eig_upper + slack {
                    return Err(OperatorError::SandwichViolation {
                        lambda: theta,
                        lower: self.eig_lower,
                        upper: self.eig_upper,
                    });
                }
                let phi = self.unsymmetrize(&v);
                return Ok(EigenPair { lambda: theta, phi, residual, iterations: it });
            }
            theta_prev = theta;
            let mut norm = 0.0;
            for i in 0..n {
                w[i] += shift * v[i];
                norm += w[i] * w[i];
            }
            let norm = norm.sqrt();
            for i in 0..n {
                v[i] = w[i] / norm;
            }
        }
        Err(OperatorError::NonConvergence { iters: MAX_EIG_ITERS, last: theta_prev })
    }

    fn unsymmetrize(&self, v_sym: &[f64]) -> Vec<f64> {
        let mut phi: Vec<f64> =
            v_sym.iter().zip(&self.sqrt_sigma).map(|(v, s)| v * s).collect();
        let norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = phi
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|m| if m < 0.0 { -1.0 } else { 1.0 })
            .unwrap_or(1.0);
        for x in phi.iter_mut() {
            *x *= sign / norm;
        }
        phi
    }
}

/// Domain of the n-local eigenvalue: the l1 ball B(z, n), which must fit in
/// the box (no silent truncation).
pub fn ball_domain(env: &Environment, z: &[i64], n: u64) -> Result<Vec<Site>, OperatorError> {
    if !ball_in_box(&env.spec, z, n) {
        return Err(OperatorError::BallOutsideBox { center: z.to_vec(), n });
    }
    Ok(l1_ball(z, n))
}

/// n-local principal eigenvalue: lambda_1 of (Delta sigma^-1 + xi) 1_{B(z,n)}.
pub fn local_eigenvalue(env: &Environment, z: &[i64], n: u64) -> Result<f64, OperatorError> {
    let domain = ball_domain(env, z, n)?;
    let op = DomainOperator::new(env, &domain)?;
    Ok(op.principal_eigenpair(DEFAULT_EIG_TOL)?.lambda)
}

/// Masked local eigenvalue: lambda_1 of (Delta sigma^-1 + xi 1_{B(z,rho_xi)})
/// on B(z, rho). For rho = 0 this is exactly the net growth rate eta(z).
pub fn masked_local_eigenvalue(
    env: &Environment,
    z: &[i64],
    rho: u32,
    rho_xi: u32,
) -> Result<f64, OperatorError> {
    if rho_xi > rho {
        return Err(OperatorError::BadMaskRadii { rho, rho_xi });
    }
    if rho == 0 {
        if !env.spec.contains(z) {
            return Err(OperatorError::SiteOutsideBox(z.to_vec()));
        }
        return Ok(env.eta_at(z).unwrap());
    }
    let domain = ball_domain(env, z, rho as u64)?;
    let op = DomainOperator::with_potential(env, &domain, |y, xi| {
        if l1_dist(y, z) <= rho_xi as u64 {
            xi
        } else {
            0.0
        }
    })?;
    Ok(op.principal_eigenpair(DEFAULT_EIG_TOL)?.lambda)
}

/// Punctured local eigenvalue: off-centre potentials at or above the level
/// are zeroed, the centre keeps its value.
pub fn punctured_local_eigenvalue(
    env: &Environment,
    z: &[i64],
    n: u64,
    level: f64,
) -> Result<f64, OperatorError> {
    let domain = ball_domain(env, z, n)?;
    let op = DomainOperator::with_potential(env, &domain, |y, xi| {
        if y == z || xi < level {
            xi
        } else {
            0.0
        }
    })?;
    Ok(op.principal_eigenpair(DEFAULT_EIG_TOL)?.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, PotentialParams, TrapParams};
    use crate::lattice::BoxSpec;
    use approx::assert_relative_eq;

    fn chain_env(xi: &[f64], sigma: &[f64]) -> Environment {
        let radius = (xi.len() / 2) as i64;
        let spec = BoxSpec::new(1, radius).unwrap();
        assert_eq!(spec.site_count(), xi.len());
        Environment::from_fields(
            spec,
            xi.to_vec(),
            sigma.to_vec(),
            PotentialParams::new(1.0).unwrap(),
            TrapParams::constant(1.0).unwrap(),
        )
    }

    fn random_env(seed: u64, d: usize, radius: i64) -> Environment {
        Environment::build(
            BoxSpec::new(d, radius).unwrap(),
            seed,
            PotentialParams::new(2.0).unwrap(),
            TrapParams::weibull_shifted(1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn apply_single_site_is_net_growth_rate() {
        let env = chain_env(&[0.0, 5.0, 0.0], &[1.0, 2.0, 1.0]);
        let op = DomainOperator::new(&env, &[vec![0]]).unwrap();
        let out = op.apply(&[3.0]).unwrap();
        assert_relative_eq!(out[0], (5.0 - 0.5) * 3.0, epsilon = 1e-14);
    }

    #[test]
    fn apply_two_site_stencil() {
        // D = {0, 1}, sigma = 1, xi = 0, v = (1, 0) -> Hv = (-1, 1/2)
        let env = chain_env(&[0.0; 5], &[1.0; 5]);
        let op = DomainOperator::new(&env, &[vec![0], vec![1]]).unwrap();
        let out = op.apply(&[1.0, 0.0]).unwrap();
        assert_relative_eq!(out[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(out[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let env = chain_env(&[0.0; 3], &[1.0; 3]);
        let op = DomainOperator::new(&env, &[vec![0], vec![1]]).unwrap();
        assert!(op.apply(&[1.0]).is_err());
    }

    #[test]
    fn apply_is_linear() {
        let env = random_env(3, 2, 4);
        let domain = l1_ball(&[0, 0], 3);
        let op = DomainOperator::new(&env, &domain).unwrap();
        let n = op.len();
        let v: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 / 7.0 - 1.0).collect();
        let w: Vec<f64> = (0..n).map(|i| ((i * 61 + 5) % 23) as f64 / 9.0 - 1.0).collect();
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let hv = op.apply(&v).unwrap();
        let hw = op.apply(&w).unwrap();
        let hsum = op.apply(&sum).unwrap();
        for i in 0..n {
            assert_relative_eq!(hsum[i], hv[i] + hw[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn eigenpair_single_site() {
        let env = chain_env(&[0.0, 5.0, 0.0], &[1.0, 2.0, 1.0]);
        let op = DomainOperator::new(&env, &[vec![0]]).unwrap();
        let pair = op.principal_eigenpair(1e-13).unwrap();
        assert_relative_eq!(pair.lambda, 4.5, epsilon = 1e-12);
        assert_relative_eq!(pair.phi[0].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenpair_two_site_quadratic_oracle() {
        // symmetrised 2x2: [[a - 1/s0, h], [h, b - 1/s1]], h = 1/(2 sqrt(s0 s1))
        let (a, b, s0, s1) = (2.0, 0.7, 1.3, 2.4);
        let env = chain_env(&[0.0, a, b, 0.0, 0.0], &[1.0, s0, s1, 1.0, 1.0]);
        let op = DomainOperator::new(&env, &[vec![-1], vec![0]]).unwrap();
        let d0 = a - 1.0 / s0;
        let d1 = b - 1.0 / s1;
        let h = 0.5 / (s0 * s1).sqrt();
        let mean = 0.5 * (d0 + d1);
        let oracle = mean + ((d0 - d1) * (d0 - d1) / 4.0 + h * h).sqrt();
        let pair = op.principal_eigenpair(1e-13).unwrap();
        assert_relative_eq!(pair.lambda, oracle, epsilon = 1e-11);
    }

    #[test]
    fn eigenpair_matches_dense_oracle() {
        for seed in 0..20u64 {
            let env = random_env(seed, 1, 30);
            let domain: Vec<Site> = (-12..=12).map(|c| vec![c]).collect();
            let op = DomainOperator::new(&env, &domain).unwrap();
            let pair = op.principal_eigenpair(1e-13).unwrap();
            let dense_top = op
                .dense_sym()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(pair.lambda, dense_top, epsilon = 1e-10);
            assert!(pair.lambda >= op.eig_lower - 1e-12);
            assert!(pair.lambda <= op.eig_upper + 1e-12);
        }
    }

    #[test]
    fn perron_positivity_on_connected_domain() {
        let env = random_env(9, 2, 6);
        let domain = l1_ball(&[1, -1], 3);
        let op = DomainOperator::new(&env, &domain).unwrap();
        let pair = op.principal_eigenpair(1e-13).unwrap();
        assert!(pair.phi.iter().all(|&x| x > 0.0), "Perron vector must be positive");
    }

    #[test]
    fn similarity_dense_spectra_agree() {
        for seed in 40..44u64 {
            let env = random_env(seed, 2, 5);
            let domain = l1_ball(&[0, 0], 2);
            let op = DomainOperator::new(&env, &domain).unwrap();
            let mut sym: Vec<f64> =
                op.dense_sym().symmetric_eigen().eigenvalues.iter().cloned().collect();
            let mut unsym: Vec<f64> = op
                .dense()
                .complex_eigenvalues()
                .iter()
                .map(|c| {
                    assert!(c.im.abs() < 1e-9, "spectrum must be real");
                    c.re
                })
                .collect();
            sym.sort_by(|a, b| a.partial_cmp(b).unwrap());
            unsym.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in sym.iter().zip(&unsym) {
                assert_relative_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn local_eigenvalue_reduces_to_eta_at_n0() {
        let env = random_env(5, 2, 4);
        let z = vec![1, 0];
        assert_relative_eq!(
            local_eigenvalue(&env, &z, 0).unwrap(),
            env.eta_at(&z).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn local_eigenvalue_full_ball_equals_domain_eigenvalue() {
        let env = random_env(6, 1, 10);
        let domain = l1_ball(&[0], 3);
        let op = DomainOperator::new(&env, &domain).unwrap();
        let pair = op.principal_eigenpair(DEFAULT_EIG_TOL).unwrap();
        assert_relative_eq!(
            local_eigenvalue(&env, &[0], 3).unwrap(),
            pair.lambda,
            epsilon = 1e-10
        );
    }

    #[test]
    fn local_eigenvalue_strictly_monotone_in_n() {
        for seed in 0..100u64 {
            let env = random_env(seed, 1, 12);
            let l1 = local_eigenvalue(&env, &[0], 1).unwrap();
            let l2 = local_eigenvalue(&env, &[0], 2).unwrap();
            assert!(l2 > l1, "seed {seed}: lambda^(2) = {l2} <= lambda^(1) = {l1}");
        }
    }

    #[test]
    fn local_eigenvalue_errors_outside_box() {
        let env = random_env(1, 1, 3);
        assert!(matches!(
            local_eigenvalue(&env, &[2], 2),
            Err(OperatorError::BallOutsideBox { .. })
        ));
    }

    #[test]
    fn masked_rho0_is_net_growth_rate() {
        let env = random_env(8, 2, 5);
        let z = vec![2, -1];
        assert_eq!(
            masked_local_eigenvalue(&env, &z, 0, 0).unwrap(),
            env.eta_at(&z).unwrap()
        );
    }

    #[test]
    fn masked_noop_when_xi_already_zero_outside() {
        let mut xi = vec![0.0; 9];
        xi[4] = 6.0; // site 0
        let env = chain_env(&xi, &[1.0; 9]);
        let a = masked_local_eigenvalue(&env, &[0], 2, 2).unwrap();
        let b = local_eigenvalue(&env, &[0], 2).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn masked_three_site_dense_oracle() {
        // xi = (9, 4, 9) around z, sigma = 1, rho = 1, rho_xi = 0:
        // masking zeroes the off-centre 9s -> [[-1, 1/2, 0], [1/2, 3, 1/2], [0, 1/2, -1]]
        let env = chain_env(&[0.0, 9.0, 4.0, 9.0, 0.0], &[1.0; 5]);
        let lam = masked_local_eigenvalue(&env, &[0], 1, 0).unwrap();
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 0.5, 0.0, 0.5, 3.0, 0.5, 0.0, 0.5, -1.0],
        );
        let oracle = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(lam, oracle, epsilon = 1e-10);
    }

    #[test]
    fn masked_rejects_bad_radii() {
        let env = random_env(2, 1, 5);
        assert!(matches!(
            masked_local_eigenvalue(&env, &[0], 1, 2),
            Err(OperatorError::BadMaskRadii { .. })
        ));
    }

    #[test]
    fn punctured_noop_below_level() {
        let env = chain_env(&[0.2, 0.9, 4.0, 1.1, 0.4], &[1.0; 5]);
        let a = punctured_local_eigenvalue(&env, &[0], 2, 2.0).unwrap();
        let b = local_eigenvalue(&env, &[0], 2).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn punctured_zero_level_zeroes_off_centre() {
        let env = chain_env(&[0.7, 1.3, 4.0, 0.9, 0.2], &[2.0; 5]);
        let lam = punctured_local_eigenvalue(&env, &[0], 2, 0.0).unwrap();
        // oracle: operator with off-centre xi zeroed
        let op = DomainOperator::with_potential(&env, &l1_ball(&[0], 2), |y, xi| {
            if y == [0] {
                xi
            } else {
                0.0
            }
        })
        .unwrap();
        let oracle = op
            .dense_sym()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(lam, oracle, epsilon = 1e-10);
    }

    #[test]
    fn punctured_three_site_dense_oracle() {
        // xi = (10, 2, 1) with L = 5: the 10 is replaced by 0
        let env = chain_env(&[0.0, 10.0, 2.0, 1.0, 0.0], &[1.0; 5]);
        let lam = punctured_local_eigenvalue(&env, &[0], 1, 5.0).unwrap();
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 0.0],
        );
        let oracle = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(lam, oracle, epsilon = 1e-10);
    }

    #[test]
    fn monotone_in_potential_bump() {
        for seed in 100..200u64 {
            let env = random_env(seed, 1, 8);
            let domain: Vec<Site> = (-4..=4).map(|c| vec![c]).collect();
            let op = DomainOperator::new(&env, &domain).unwrap();
            let base = op.principal_eigenpair(1e-13).unwrap();
            let bump_at = (seed % 9) as i64 - 4;
            let mut env2 = env.clone();
            let idx = env2.spec.index_of(&[bump_at]).unwrap();
            env2.xi[idx] += 1.0;
            let op2 = DomainOperator::new(&env2, &domain).unwrap();
            let bumped = op2.principal_eigenpair(1e-13).unwrap();
            assert!(
                bumped.lambda > base.lambda,
                "seed {seed}: bump at {bump_at} did not raise lambda"
            );
        }
    }
}
