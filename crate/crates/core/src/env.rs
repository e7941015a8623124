//! Random environments: the potential field `xi` and trapping landscape
//! `sigma` on a finite box.
//!
//! `xi` has the Weibull upper tail `P(xi > x) = exp(-x^gamma)`. `sigma` is
//! bounded below by `delta_sigma` and drawn from one of three families:
//! a Weibull-tailed law glued to a flat lower piece, a log-Weibull-tailed
//! law for the heavy-tailed regime, or the degenerate constant law. Both
//! fields are sampled by exact inverse CDF from counter-based uniforms, so a
//! site's value depends only on (seed, site, params) and never on the box.

use crate::lattice::{l1_dist, lex_cmp, BoxSpec, LatticeError, Site};
use crate::parallel;
use crate::rng::{self, tag};
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("gamma must be > 0, got {0}")]
    BadGamma(f64),
    #[error("delta_sigma must be > 0, got {0}")]
    BadDeltaSigma(f64),
    #[error("weibull-shifted trap family needs mu > 0, got {0}")]
    BadMu(f64),
    #[error("log-weibull trap family needs beta > 1, got {0}")]
    BadBeta(f64),
    #[error("glue point x0 = {x0} invalid (must be > {min})")]
    BadGluePoint { x0: f64, min: f64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("environment I/O: {0}")]
    Io(#[from] io::Error),
    #[error("binary dump corrupt: {0}")]
    BadDump(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub gamma: f64,
}

impl PotentialParams {
    pub fn new(gamma: f64) -> Result<Self, EnvError> {
        if !(gamma > 0.0) {
            return Err(EnvError::BadGamma(gamma));
        }
        Ok(PotentialParams { gamma })
    }

    /// Survival function exp(-x^gamma) for x >= 0.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-x.powf(self.gamma)).exp()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.sf(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum TrapFamily {
    /// Upper tail exp(-x^mu) above the glue point.
    WeibullShifted { mu: f64 },
    /// Upper tail exp(-(log(x/delta_sigma))^beta) above the glue point.
    LogWeibull { beta: f64 },
    /// sigma == delta_sigma everywhere.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    pub family: TrapFamily,
    pub delta_sigma: f64,
    /// Glue point between the lower piece and the named tail.
    pub x0: f64,
}

impl TrapParams {
    pub fn weibull_shifted(delta_sigma: f64, mu: f64) -> Result<Self, EnvError> {
        Self::weibull_shifted_glued(delta_sigma, mu, delta_sigma + 1.0)
    }

    pub fn weibull_shifted_glued(delta_sigma: f64, mu: f64, x0: f64) -> Result<Self, EnvError> {
        if !(delta_sigma > 0.0) {
            return Err(EnvError::BadDeltaSigma(delta_sigma));
        }
        if !(mu > 0.0) {
            return Err(EnvError::BadMu(mu));
        }
        if !(x0 > delta_sigma) {
            return Err(EnvError::BadGluePoint { x0, min: delta_sigma });
        }
        Ok(TrapParams { family: TrapFamily::WeibullShifted { mu }, delta_sigma, x0 })
    }

    /// The log-Weibull tail form only decays past delta_sigma * e, so the
    /// glue point defaults there.
    pub fn log_weibull(delta_sigma: f64, beta: f64) -> Result<Self, EnvError> {
        Self::log_weibull_glued(delta_sigma, beta, delta_sigma * std::f64::consts::E)
    }

    pub fn log_weibull_glued(delta_sigma: f64, beta: f64, x0: f64) -> Result<Self, EnvError> {
        if !(delta_sigma > 0.0) {
            return Err(EnvError::BadDeltaSigma(delta_sigma));
        }
        if !(beta > 1.0) {
            return Err(EnvError::BadBeta(beta));
        }
        let min = delta_sigma * std::f64::consts::E;
        if !(x0 >= min) {
            return Err(EnvError::BadGluePoint { x0, min });
        }
        Ok(TrapParams { family: TrapFamily::LogWeibull { beta }, delta_sigma, x0 })
    }

    pub fn constant(delta_sigma: f64) -> Result<Self, EnvError> {
        if !(delta_sigma > 0.0) {
            return Err(EnvError::BadDeltaSigma(delta_sigma));
        }
        Ok(TrapParams { family: TrapFamily::Constant, delta_sigma, x0: delta_sigma })
    }

    /// mu exponent used in the scale formulas (0 for the non-Weibull families).
    pub fn mu(&self) -> f64 {
        match self.family {
            TrapFamily::WeibullShifted { mu } => mu,
            _ => 0.0,
        }
    }

    /// Tail survival on the named upper piece, x >= x0.
    fn tail_sf(&self, x: f64) -> f64 {
        match self.family {
            TrapFamily::WeibullShifted { mu } => (-x.powf(mu)).exp(),
            TrapFamily::LogWeibull { beta } => (-((x / self.delta_sigma).ln()).powf(beta)).exp(),
            TrapFamily::Constant => {
                if x < self.delta_sigma {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Continuity constant of the lower piece F(x) = C exp(-2/(x - delta)).
    fn lower_c(&self) -> f64 {
        let f_x0 = 1.0 - self.tail_sf(self.x0);
        f_x0 * (2.0 / (self.x0 - self.delta_sigma)).exp()
    }

    /// Survival function of the glued law.
    pub fn sf(&self, x: f64) -> f64 {
        if let TrapFamily::Constant = self.family {
            return self.tail_sf(x);
        }
        if x <= self.delta_sigma {
            1.0
        } else if x >= self.x0 {
            self.tail_sf(x)
        } else {
            1.0 - self.lower_c() * (-2.0 / (x - self.delta_sigma)).exp()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.sf(x)
    }

    /// Exponential tail-decay function g(x) = -log P(sigma > x).
    ///
    /// `None` for the constant family, whose tail is degenerate.
    pub fn g_sigma(&self, x: f64) -> Option<f64> {
        match self.family {
            TrapFamily::Constant => None,
            _ => {
                if x <= self.delta_sigma {
                    Some(0.0)
                } else if x >= self.x0 {
                    match self.family {
                        TrapFamily::WeibullShifted { mu } => Some(x.powf(mu)),
                        TrapFamily::LogWeibull { beta } => {
                            Some(((x / self.delta_sigma).ln()).powf(beta))
                        }
                        TrapFamily::Constant => unreachable!(),
                    }
                } else {
                    Some(-self.sf(x).ln())
                }
            }
        }
    }

    /// Inverse of g_sigma on the tail piece (used by the coarse graining).
    pub fn g_sigma_inv(&self, g: f64) -> Option<f64> {
        match self.family {
            TrapFamily::Constant => None,
            TrapFamily::WeibullShifted { mu } => Some(g.powf(1.0 / mu)),
            TrapFamily::LogWeibull { beta } => {
                Some(self.delta_sigma * (g.powf(1.0 / beta)).exp())
            }
        }
    }

    /// Quantile of the glued law: smallest x with F(x) >= p.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..1.0).contains(&p), "quantile needs p in [0,1)");
        self.from_uniform(1.0 - p)
    }

    /// Inverse-CDF sample where `v` plays the role of the survival value.
    pub fn from_uniform(&self, v: f64) -> f64 {
        debug_assert!(v > 0.0 && v < 1.0);
        match self.family {
            TrapFamily::Constant => self.delta_sigma,
            TrapFamily::WeibullShifted { mu } => {
                if v <= self.tail_sf(self.x0) {
                    (-v.ln()).powf(1.0 / mu)
                } else {
                    self.lower_invert(v)
                }
            }
            TrapFamily::LogWeibull { beta } => {
                if v <= self.tail_sf(self.x0) {
                    self.delta_sigma * ((-v.ln()).powf(1.0 / beta)).exp()
                } else {
                    self.lower_invert(v)
                }
            }
        }
    }

    fn lower_invert(&self, v: f64) -> f64 {
        // solve C exp(-2/(x - delta)) = 1 - v on (delta, x0]
        let c = self.lower_c();
        self.delta_sigma + 2.0 / (c / (1.0 - v)).ln()
    }
}

/// Exact inverse CDF of the Weibull tail applied to a site-keyed uniform.
pub fn potential_from_uniform(u: f64, params: &PotentialParams) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    (-u.ln()).powf(1.0 / params.gamma)
}

pub fn sample_potential(seed: u64, site: &[i64], params: &PotentialParams) -> f64 {
    potential_from_uniform(rng::site_uniform(seed, tag::POTENTIAL, site), params)
}

pub fn sample_trap(seed: u64, site: &[i64], params: &TrapParams) -> f64 {
    params.from_uniform(rng::site_uniform(seed, tag::TRAP, site))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub spec: BoxSpec,
    pub seed: u64,
    pub potential: PotentialParams,
    pub trap: TrapParams,
    pub xi: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Environment {
    pub fn build(
        spec: BoxSpec,
        seed: u64,
        potential: PotentialParams,
        trap: TrapParams,
    ) -> Result<Self, EnvError> {
        let n = spec.site_count();
        let fields: Vec<(f64, f64)> = parallel::map_indexed(n, |i| {
            let z = spec.site_at(i);
            (sample_potential(seed, &z, &potential), sample_trap(seed, &z, &trap))
        });
        let (xi, sigma) = fields.into_iter().unzip();
        Ok(Environment { spec, seed, potential, trap, xi, sigma })
    }

    /// Hand-built environment from explicit field arrays (tests, CLI replay).
    pub fn from_fields(
        spec: BoxSpec,
        xi: Vec<f64>,
        sigma: Vec<f64>,
        potential: PotentialParams,
        trap: TrapParams,
    ) -> Self {
        assert_eq!(xi.len(), spec.site_count());
        assert_eq!(sigma.len(), spec.site_count());
        Environment { spec, seed: 0, potential, trap, xi, sigma }
    }

    #[inline]
    pub fn xi_at(&self, z: &[i64]) -> Option<f64> {
        self.spec.index_of(z).map(|i| self.xi[i])
    }

    #[inline]
    pub fn sigma_at(&self, z: &[i64]) -> Option<f64> {
        self.spec.index_of(z).map(|i| self.sigma[i])
    }

    /// Net growth rate eta = xi - 1/sigma at a site.
    #[inline]
    pub fn eta_at(&self, z: &[i64]) -> Option<f64> {
        self.spec.index_of(z).map(|i| self.xi[i] - 1.0 / self.sigma[i])
    }

    pub fn max_xi(&self) -> f64 {
        self.xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// All sites with xi strictly above the level, lexicographically sorted.
    pub fn level_set(&self, level: f64) -> Vec<Site> {
        // index order is lexicographic order
        (0..self.spec.site_count())
            .filter(|&i| self.xi[i] > level)
            .map(|i| self.spec.site_at(i))
            .collect()
    }

    /// CSV dump `site_index,coord_1..coord_d,xi,sigma`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "site_index")?;
        for k in 1..=self.spec.d {
            write!(w, ",coord_{k}")?;
        }
        writeln!(w, ",xi,sigma")?;
        for i in 0..self.spec.site_count() {
            let z = self.spec.site_at(i);
            write!(w, "{i}")?;
            for c in &z {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{},{}", self.xi[i], self.sigma[i])?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.spec.d as u32).to_le_bytes())?;
        w.write_all(&self.spec.radius.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.spec.site_count() as u64).to_le_bytes())?;
        for &x in &self.xi {
            w.write_all(&x.to_le_bytes())?;
        }
        for &s in &self.sigma {
            w.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read back a binary dump; params are not stored so the caller supplies them.
    pub fn read_binary<R: Read>(
        mut r: R,
        potential: PotentialParams,
        trap: TrapParams,
    ) -> Result<Self, EnvError> {
        let mut magic = [0u8; 12];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(EnvError::BadDump("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != DUMP_VERSION {
            return Err(EnvError::BadDump("unsupported version".into()));
        }
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let radius = i64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let spec = BoxSpec::new(d, radius)?;
        if spec.site_count() != n {
            return Err(EnvError::BadDump("site count mismatch".into()));
        }
        let mut read_vec = |len: usize| -> Result<Vec<f64>, EnvError> {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut b8)?;
                v.push(f64::from_le_bytes(b8));
            }
            Ok(v)
        };
        let xi = read_vec(n)?;
        let sigma = read_vec(n)?;
        Ok(Environment { spec, seed, potential, trap, xi, sigma })
    }
}

const DUMP_MAGIC: &[u8; 12] = b"BAMENVDUMP\0\0";
const DUMP_VERSION: u32 = 1;

/// Minimum pairwise l1 distance of a site set; `None` means fewer than two
/// sites, i.e. the separation is infinite.
pub fn separation_radius(sites: &[Site]) -> Option<u64> {
    if sites.len() < 2 {
        return None;
    }
    let mut best = u64::MAX;
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            best = best.min(l1_dist(&sites[i], &sites[j]));
        }
    }
    Some(best)
}

/// Lexicographically sort a site list in place (tie-break order everywhere).
pub fn sort_sites(sites: &mut [Site]) {
    sites.sort_by(|a, b| lex_cmp(a, b));
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn potential_inverse_cdf_hand_values() {
        let g1 = PotentialParams::new(1.0).unwrap();
        assert_relative_eq!(potential_from_uniform((-2.0f64).exp(), &g1), 2.0, epsilon = 1e-12);
        let g2 = PotentialParams::new(2.0).unwrap();
        assert_relative_eq!(potential_from_uniform((-9.0f64).exp(), &g2), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn potential_rejects_bad_gamma() {
        assert!(PotentialParams::new(0.0).is_err());
        assert!(PotentialParams::new(-1.0).is_err());
    }

    #[test]
    fn trap_constant_family_is_degenerate() {
        let p = TrapParams::constant(2.5).unwrap();
        for i in 0..50 {
            assert_eq!(sample_trap(9, &[i], &p), 2.5);
        }
    }

    #[test]
    fn trap_tail_evaluation() {
        // weibull-shifted with mu = 1: tail survival at x >= x0 is e^{-x}
        let p = TrapParams::weibull_shifted(1.0, 1.0).unwrap();
        let x = p.x0 + 3.0;
        assert_relative_eq!(p.sf(x), (-x).exp(), epsilon = 1e-14);
        // glued CDF is continuous at x0
        assert_relative_eq!(p.sf(p.x0 - 1e-9), p.sf(p.x0), epsilon = 1e-6);
    }

    #[test]
    fn trap_sample_monotone_in_survival_and_bounded() {
        let p = TrapParams::weibull_shifted(1.0, 2.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let v = k as f64 / 200.0;
            let x = p.from_uniform(v);
            assert!(x > p.delta_sigma);
            assert!(x <= prev, "inverse survival must be non-increasing");
            prev = x;
        }
        // round trip: sf(from_uniform(v)) == v
        for &v in &[0.01, 0.2, 0.5, 0.9, 0.99] {
            assert_relative_eq!(p.sf(p.from_uniform(v)), v, epsilon = 1e-10);
        }
    }

    #[test]
    fn trap_rejects_inconsistent_params() {
        assert!(TrapParams::weibull_shifted(0.0, 1.0).is_err());
        assert!(TrapParams::weibull_shifted(1.0, 0.0).is_err());
        assert!(TrapParams::weibull_shifted_glued(1.0, 1.0, 0.5).is_err());
        assert!(TrapParams::log_weibull(1.0, 1.0).is_err());
        assert!(TrapParams::log_weibull_glued(1.0, 1.5, 2.0).is_err());
    }

    #[test]
    fn environment_is_box_independent() {
        let pot = PotentialParams::new(2.0).unwrap();
        let trap = TrapParams::weibull_shifted(1.0, 1.0).unwrap();
        let small = Environment::build(BoxSpec::new(1, 5).unwrap(), 11, pot, trap).unwrap();
        let large = Environment::build(BoxSpec::new(1, 10).unwrap(), 11, pot, trap).unwrap();
        for z in small.spec.sites() {
            assert_eq!(small.xi_at(&z), large.xi_at(&z));
            assert_eq!(small.sigma_at(&z), large.sigma_at(&z));
        }
    }

    #[test]
    fn environment_single_site() {
        let pot = PotentialParams::new(1.0).unwrap();
        let trap = TrapParams::constant(1.0).unwrap();
        let env = Environment::build(BoxSpec::new(1, 0).unwrap(), 3, pot, trap).unwrap();
        assert_eq!(env.xi.len(), 1);
        assert!(env.xi[0] > 0.0);
    }

    #[test]
    fn environment_rebuild_identical() {
        let pot = PotentialParams::new(2.0).unwrap();
        let trap = TrapParams::weibull_shifted(1.0, 1.0).unwrap();
        let spec = BoxSpec::new(2, 50).unwrap();
        let a = Environment::build(spec, 77, pot, trap).unwrap();
        let b = Environment::build(spec, 77, pot, trap).unwrap();
        assert_eq!(a.xi, b.xi);
        assert_eq!(a.sigma, b.sigma);
        // and a cheap checksum, stable across runs of this test binary
        let sum: f64 = a.xi.iter().sum();
        let sum2: f64 = b.xi.iter().sum();
        assert_eq!(sum.to_bits(), sum2.to_bits());
    }

    #[test]
    fn level_set_extremes() {
        let pot = PotentialParams::new(2.0).unwrap();
        let trap = TrapParams::constant(1.0).unwrap();
        let env = Environment::build(BoxSpec::new(1, 20).unwrap(), 5, pot, trap).unwrap();
        assert_eq!(env.level_set(-1.0).len(), env.spec.site_count());
        assert!(env.level_set(env.max_xi()).is_empty());
        let ls = env.level_set(1.0);
        let mut sorted = ls.clone();
        sort_sites(&mut sorted);
        assert_eq!(ls, sorted);
    }

    #[test]
    fn separation_radius_examples() {
        assert_eq!(separation_radius(&[vec![0, 0], vec![3, 4]]), Some(7));
        assert_eq!(separation_radius(&[vec![0], vec![5], vec![6]]), Some(1));
        assert_eq!(separation_radius(&[vec![1]]), None);
    }

    #[test]
    fn sigma_respects_lower_bound_exactly() {
        let trap = TrapParams::weibull_shifted(1.5, 0.7).unwrap();
        let pot = PotentialParams::new(1.0).unwrap();
        let env = Environment::build(BoxSpec::new(1, 5000).unwrap(), 41, pot, trap).unwrap();
        assert!(env.sigma.iter().all(|&s| s >= 1.5));
    }

    #[test]
    fn binary_roundtrip() {
        let pot = PotentialParams::new(2.0).unwrap();
        let trap = TrapParams::weibull_shifted(1.0, 1.0).unwrap();
        let env = Environment::build(BoxSpec::new(2, 4).unwrap(), 5, pot, trap).unwrap();
        let mut buf = Vec::new();
        env.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..12], DUMP_MAGIC);
        let back = Environment::read_binary(&buf[..], pot, trap).unwrap();
        assert_eq!(back.xi, env.xi);
        assert_eq!(back.sigma, env.sigma);
        assert_eq!(back.seed, 5);
    }
}
