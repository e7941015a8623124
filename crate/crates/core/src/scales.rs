//! Deterministic scales, radii of influence, and correlation exponents.
//!
//! Everything here is a closed-form function of (t, d, gamma, theta) or
//! (gamma, mu, delta_sigma, d). Integer parts land exactly on integers at
//! interface parameter values, so the floor is taken with a 1e-12 relative
//! snap; exact rational inputs can use `RadiusSet::from_rational`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScaleError {
    #[error("t must exceed e^e (about 15.154), got {0}")]
    TooEarly(f64),
    #[error("gamma must be > 0, got {0}")]
    BadGamma(f64),
    #[error("theta must lie in (0, 1/2), got {0}")]
    BadTheta(f64),
    #[error("mu must be >= 0, got {0}")]
    BadMu(f64),
    #[error("shortest path count overflows for |z| = {0} (limit 40)")]
    PathCountOverflow(u64),
}

const SNAP_TOL: f64 = 1e-12;

/// Integer part with a relative snap to the nearest integer, then floor.
fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOL * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// `[x]^+` = positive part of the integer part.
fn int_part_pos(x: f64) -> u32 {
    snapped_floor(x).max(0.0) as u32
}

/// All closed-form scales derived from (t, d, gamma, theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub t: f64,
    pub d: usize,
    pub gamma: f64,
    pub theta: f64,
    /// Height scale of the potential at the localisation site.
    pub a_t: f64,
    /// Log-scale derivative of the height scale.
    pub d_t: f64,
    /// Distance scale of the localisation site.
    pub r_t: f64,
    /// Macrobox radius.
    pub big_r_t: f64,
    /// Macrobox cardinality (as a float; it is astronomically large).
    pub v_t: f64,
    /// log |V_t|.
    pub log_v_t: f64,
    /// Candidate level.
    pub l_t: f64,
    /// log log t, the entropic penalty numerator.
    pub loglog_t: f64,
}

impl ScaleSet {
    pub fn compute(t: f64, d: usize, gamma: f64, theta: f64) -> Result<Self, ScaleError> {
        let ee = std::f64::consts::E.powf(std::f64::consts::E);
        if !(t > ee) {
            return Err(ScaleError::TooEarly(t));
        }
        if !(gamma > 0.0) {
            return Err(ScaleError::BadGamma(gamma));
        }
        if !(theta > 0.0 && theta < 0.5) {
            return Err(ScaleError::BadTheta(theta));
        }
        let log_t = t.ln();
        let loglog_t = log_t.ln();
        let dlt = d as f64 * log_t;
        let a_t = dlt.powf(1.0 / gamma);
        let d_t = dlt.powf(1.0 / gamma - 1.0) / gamma;
        let r_t = t * dlt.powf(1.0 / gamma - 1.0) / loglog_t;
        let big_r_t = t * log_t.powf(1.0 / gamma);
        let side = 2.0 * big_r_t.floor() + 1.0;
        let v_t = side.powi(d as i32);
        let log_v_t = d as f64 * side.ln();
        let l_t = ((1.0 - theta) * log_v_t).powf(1.0 / gamma);
        Ok(ScaleSet { t, d, gamma, theta, a_t, d_t, r_t, big_r_t, v_t, log_v_t, l_t, loglog_t })
    }

    /// Level for an arbitrary depth parameter a: ((1-a) log|V_t|)^{1/gamma}.
    pub fn level(&self, a: f64) -> f64 {
        ((1.0 - a) * self.log_v_t).powf(1.0 / self.gamma)
    }

    /// Entropic penalty (|z|/(gamma t)) loglog t at l1 distance `n`.
    pub fn penalty(&self, n: u64) -> f64 {
        n as f64 * self.loglog_t / (self.gamma * self.t)
    }
}

/// Radii of influence and interface-set membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadiusSet {
    pub rho: u32,
    pub rho_xi: u32,
    /// Truncation constant [gamma - 1]^+ for the path expansion.
    pub j: u32,
    /// (gamma, mu) lies on a rho-interface curve.
    pub in_b: bool,
    /// (gamma, mu) lies on a rho_xi-interface curve.
    pub in_b_xi: bool,
}

impl RadiusSet {
    pub fn compute(gamma: f64, mu: f64) -> Result<Self, ScaleError> {
        if !(gamma > 0.0) {
            return Err(ScaleError::BadGamma(gamma));
        }
        if !(mu >= 0.0) {
            return Err(ScaleError::BadMu(mu));
        }
        let core = (gamma - 1.0) / 2.0 * mu / (mu + 1.0);
        let rho = int_part_pos(core + 0.5);
        let rho_xi = int_part_pos(core);
        let j = int_part_pos(gamma - 1.0);
        let on_int = |x: f64, k: u32| (x - k as f64).abs() <= SNAP_TOL * x.abs().max(1.0);
        Ok(RadiusSet {
            rho,
            rho_xi,
            j,
            in_b: on_int(core + 0.5, rho),
            in_b_xi: on_int(core, rho_xi),
        })
    }

    /// Exact-rational variant: gamma = gn/gd, mu = mn/md.
    pub fn from_rational(gn: i64, gd: i64, mn: i64, md: i64) -> Result<Self, ScaleError> {
        if gd <= 0 || md <= 0 || gn <= 0 {
            return Err(ScaleError::BadGamma(gn as f64 / gd as f64));
        }
        if mn < 0 {
            return Err(ScaleError::BadMu(mn as f64 / md as f64));
        }
        // core = (gamma-1)/2 * mu/(mu+1) = (gn-gd) mn / (2 gd (mn+md))
        let num = (gn as i128 - gd as i128) * mn as i128;
        let den = 2 * gd as i128 * (mn as i128 + md as i128);
        let floor_div = |n: i128, d: i128| -> i128 {
            debug_assert!(d > 0);
            if n >= 0 {
                n / d
            } else {
                -((-n + d - 1) / d)
            }
        };
        let rho_i = floor_div(num * 2 + den, den * 2).max(0); // floor(core + 1/2)
        let rho_xi_i = floor_div(num, den).max(0);
        let gamma = gn as f64 / gd as f64;
        let j = int_part_pos(gamma - 1.0);
        let in_b = num * 2 + den == rho_i * den * 2 && rho_i >= 0;
        let in_b_xi = num == rho_xi_i * den && rho_xi_i >= 0;
        Ok(RadiusSet { rho: rho_i as u32, rho_xi: rho_xi_i as u32, j, in_b, in_b_xi })
    }
}

/// Correlation exponents and constants around the localisation site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    pub gamma: f64,
    pub mu: f64,
    pub delta_sigma: f64,
    pub d: usize,
    pub q_sigma: f64,
    pub c_sigma: f64,
}

impl ExponentSet {
    pub fn compute(gamma: f64, mu: f64, delta_sigma: f64, d: usize) -> Result<Self, ScaleError> {
        if !(gamma > 0.0) {
            return Err(ScaleError::BadGamma(gamma));
        }
        if !(mu >= 0.0) {
            return Err(ScaleError::BadMu(mu));
        }
        let q_sigma = ((gamma - 1.0) / (mu + 1.0)).max(0.0);
        let c_sigma = if q_sigma > 0.0 && mu > 0.0 {
            (gamma / mu).powf(1.0 / (mu + 1.0))
        } else {
            0.0
        };
        Ok(ExponentSet { gamma, mu, delta_sigma, d, q_sigma, c_sigma })
    }

    /// q_xi with the corrected branch condition: the first branch applies for
    /// gamma > 1 (the printed condition `gamma < 1` contradicts the exponent
    /// balance that defines q_xi) and q_xi(0) = 1 always.
    pub fn q_xi(&self, x: u64) -> f64 {
        if x == 0 {
            return 1.0;
        }
        if self.gamma > 1.0 {
            (1.0 - 2.0 * x as f64 / (self.gamma - 1.0) - 1.0 / (self.mu + 1.0)).max(0.0)
        } else {
            (1.0 - x as f64).max(0.0)
        }
    }

    /// q_xi exactly as printed (branch selected by gamma < 1); kept for the
    /// `--printed-exponents` experiment switch.
    pub fn q_xi_printed(&self, x: u64) -> f64 {
        if self.gamma < 1.0 {
            (1.0 - 2.0 * x as f64 / (self.gamma - 1.0) - 1.0 / (self.mu + 1.0)).max(0.0)
        } else {
            (1.0 - x as f64).max(0.0)
        }
    }

    /// c_xi(y); zero whenever the defining exponent vanishes or degenerates.
    pub fn c_xi(&self, y: &[i64]) -> Result<f64, ScaleError> {
        let norm = crate::lattice::l1_norm(y);
        if self.q_xi(norm) <= 0.0 || self.c_sigma <= 0.0 || self.gamma <= 1.0 {
            return Ok(0.0);
        }
        let n = shortest_path_count(y)? as f64;
        let base = n * n / (2.0 * self.d as f64) / self.delta_sigma / self.c_sigma;
        Ok(base.powf(1.0 / (self.gamma - 1.0)))
    }

    /// Interface tilt constant for sigma: n(y)^2 (2d)^-1 gamma / c_sigma.
    pub fn c_bar_sigma(&self, y: &[i64]) -> Result<f64, ScaleError> {
        if self.c_sigma <= 0.0 {
            return Ok(0.0);
        }
        let n = shortest_path_count(y)? as f64;
        Ok(n * n / (2.0 * self.d as f64) * self.gamma / self.c_sigma)
    }

    pub fn c_bar_xi(&self, y: &[i64]) -> Result<f64, ScaleError> {
        Ok(self.c_bar_sigma(y)? / self.delta_sigma)
    }
}

/// Number of shortest nearest-neighbour paths from the origin to `z`:
/// the multinomial |z|! / prod_i |z_i|!.
pub fn shortest_path_count(z: &[i64]) -> Result<u128, ScaleError> {
    let total = crate::lattice::l1_norm(z);
    if total > 40 {
        return Err(ScaleError::PathCountOverflow(total));
    }
    let mut result: u128 = 1;
    let mut placed: u64 = 0;
    for &c in z {
        let k = c.unsigned_abs();
        // multiply by C(placed + k, k) incrementally; stays integral stepwise
        for i in 1..=k {
            placed += 1;
            result = result
                .checked_mul(placed as u128)
                .ok_or(ScaleError::PathCountOverflow(total))?
                / i as u128;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scales_hand_values_at_t_e4() {
        let s = ScaleSet::compute(std::f64::consts::E.powi(4), 1, 2.0, 0.25).unwrap();
        assert_relative_eq!(s.a_t, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.d_t, 0.25, epsilon = 1e-12);
        // r_t = e^4 * 4^{-1/2} / ln 4
        assert_relative_eq!(s.r_t, 19.692, epsilon = 1e-3);
    }

    #[test]
    fn scale_identity_and_level_consistency() {
        for &(t, d, gamma, theta) in &[
            (1e3, 1usize, 0.7, 0.1),
            (1e4, 2, 2.0, 0.25),
            (1e6, 1, 3.5, 0.49),
            (16.0, 3, 1.0, 0.3),
        ] {
            let s = ScaleSet::compute(t, d, gamma, theta).unwrap();
            let lhs = s.a_t / s.d_t;
            let rhs = gamma * d as f64 * t.ln();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            // l_t = a_t ((1-theta) log|V_t| / (d log t))^{1/gamma}
            let alt = s.a_t * ((1.0 - theta) * s.log_v_t / (d as f64 * t.ln())).powf(1.0 / gamma);
            assert_relative_eq!(s.l_t, alt, max_relative = 1e-12);
            assert!(s.r_t > 0.0 && s.big_r_t > 0.0 && s.l_t > 0.0);
        }
    }

    #[test]
    fn scales_reject_degenerate_inputs() {
        assert!(ScaleSet::compute(10.0, 1, 2.0, 0.25).is_err()); // t <= e^e
        assert!(ScaleSet::compute(1e3, 1, 0.0, 0.25).is_err());
        assert!(ScaleSet::compute(1e3, 1, 2.0, 0.5).is_err());
        assert!(ScaleSet::compute(1e3, 1, 2.0, 0.0).is_err());
    }

    #[test]
    fn radius_hand_values() {
        let r = RadiusSet::compute(2.0, 10.0).unwrap();
        assert_eq!(r.rho, 0);
        let r = RadiusSet::compute(3.0, 1.0).unwrap();
        assert_eq!((r.rho, r.rho_xi, r.j), (1, 0, 2));
        let r = RadiusSet::compute(5.0, 3.0).unwrap();
        assert_eq!(r.rho, 2);
        assert!(r.in_b, "(4/2)(3/4) + 1/2 = 2 exactly");
    }

    #[test]
    fn radius_grid_monotone_and_zero_criterion() {
        let gammas: Vec<f64> = (1..=20).map(|k| k as f64 * 0.5).collect();
        let mus: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        for &mu in &mus {
            let mut prev = RadiusSet::compute(gammas[0], mu).unwrap();
            for &gamma in &gammas[1..] {
                let cur = RadiusSet::compute(gamma, mu).unwrap();
                assert!(cur.rho >= prev.rho, "rho not monotone in gamma");
                assert!(cur.rho_xi >= prev.rho_xi);
                prev = cur;
            }
        }
        for &gamma in &gammas {
            let mut prev = RadiusSet::compute(gamma, mus[0]).unwrap();
            for &mu in &mus[1..] {
                let cur = RadiusSet::compute(gamma, mu).unwrap();
                assert!(cur.rho >= prev.rho, "rho not monotone in mu");
                assert!(cur.rho_xi >= prev.rho_xi);
                prev = cur;
            }
            for &mu in &mus {
                let r = RadiusSet::compute(gamma, mu).unwrap();
                let zero = gamma <= 2.0 || (gamma > 2.0 && mu < 1.0 / (gamma - 2.0));
                assert_eq!(r.rho == 0, zero, "gamma={gamma} mu={mu}");
            }
        }
    }

    #[test]
    fn radius_relations() {
        for k in 1..60 {
            let gamma = k as f64 * 0.17;
            for m in 0..40 {
                let mu = m as f64 * 0.23;
                let r = RadiusSet::compute(gamma, mu).unwrap();
                assert!(r.rho_xi == r.rho || r.rho_xi + 1 == r.rho);
                if gamma >= 1.0 {
                    assert!(r.j >= r.rho, "j >= rho for gamma >= 1");
                }
            }
        }
    }

    #[test]
    fn boundary_curves_are_detected() {
        for i in 1u32..=3 {
            for &gamma in &[2.0 * i as f64 + 0.5, 2.0 * i as f64 + 1.0, 2.0 * i as f64 + 2.0] {
                let mu = (2.0 * i as f64 - 1.0) / (gamma - 2.0 * i as f64);
                if mu < 0.0 {
                    continue;
                }
                let r = RadiusSet::compute(gamma, mu).unwrap();
                assert!(r.in_b, "boundary point gamma={gamma} mu={mu} i={i}");
                assert_eq!(r.rho, i);
            }
        }
    }

    #[test]
    fn rational_matches_float_on_grid() {
        for gn in 1..=20i64 {
            for mn in 0..=20i64 {
                let f = RadiusSet::compute(gn as f64 / 2.0, mn as f64 / 2.0).unwrap();
                let r = RadiusSet::from_rational(gn, 2, mn, 2).unwrap();
                assert_eq!(f, r, "gamma={}/2 mu={}/2", gn, mn);
            }
        }
    }

    #[test]
    fn exponents_hand_values() {
        let e = ExponentSet::compute(3.0, 1.0, 1.0, 1).unwrap();
        assert_relative_eq!(e.q_sigma, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.c_sigma, 3.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(e.q_xi(1), 0.0, epsilon = 1e-14);
        assert_relative_eq!(e.q_xi(0), 1.0, epsilon = 1e-14);
        let e = ExponentSet::compute(1.0, 0.5, 1.0, 1).unwrap();
        assert_eq!(e.q_sigma, 0.0);
        assert_eq!(e.c_sigma, 0.0);
    }

    #[test]
    fn q_xi_nonincreasing_and_nonnegative() {
        for &(gamma, mu) in &[(0.5, 0.0), (1.0, 2.0), (3.0, 1.0), (7.0, 4.0)] {
            let e = ExponentSet::compute(gamma, mu, 1.0, 2).unwrap();
            let mut prev = e.q_xi(0);
            for x in 1..10 {
                let q = e.q_xi(x);
                assert!(q >= 0.0 && q <= prev + 1e-15);
                prev = q;
            }
        }
    }

    #[test]
    fn path_count_examples() {
        assert_eq!(shortest_path_count(&[3]).unwrap(), 1);
        assert_eq!(shortest_path_count(&[1, 1]).unwrap(), 2);
        assert_eq!(shortest_path_count(&[2, 1]).unwrap(), 3);
        assert_eq!(shortest_path_count(&[0, 0, 0]).unwrap(), 1);
        assert!(shortest_path_count(&[41]).is_err());
    }

    /// Brute-force oracle: count nearest-neighbour paths of length |z| from 0 to z.
    fn brute_paths(z: &[i64]) -> u128 {
        fn rec(cur: &mut Vec<i64>, target: &[i64], left: u64) -> u128 {
            if left == 0 {
                return (cur.as_slice() == target) as u128;
            }
            let mut total = 0;
            for k in 0..cur.len() {
                for s in [-1i64, 1] {
                    cur[k] += s;
                    if crate::lattice::l1_dist(cur, target) <= left - 1 {
                        total += rec(cur, target, left - 1);
                    }
                    cur[k] -= s;
                }
            }
            total
        }
        let mut cur = vec![0i64; z.len()];
        rec(&mut cur, z, crate::lattice::l1_norm(z))
    }

    #[test]
    fn path_count_matches_brute_force() {
        for d in 1..=3usize {
            for idx in 0..(7usize.pow(d as u32)) {
                let mut z = vec![0i64; d];
                let mut v = idx;
                for c in z.iter_mut() {
                    *c = (v % 7) as i64 - 3;
                    v /= 7;
                }
                if crate::lattice::l1_norm(&z) > 6 {
                    continue;
                }
                assert_eq!(
                    shortest_path_count(&z).unwrap(),
                    brute_paths(&z),
                    "z = {z:?}"
                );
            }
        }
    }
}
