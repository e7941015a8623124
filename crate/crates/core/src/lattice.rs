//! Finite boxes of the integer lattice with a lexicographic site order.
//!
//! Sites are coordinate vectors `[i64]`; a `BoxSpec` is the centred cube
//! `[-R, R]^d` with a bijective site <-> index map. The index order (first
//! coordinate most significant) is exactly lexicographic order on
//! coordinates, which fixes every set-enumeration order in the crate.

use thiserror::Error;

pub type Site = Vec<i64>;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension must be >= 1")]
    ZeroDimension,
    #[error("radius must be >= 0")]
    NegativeRadius,
    #[error("box with {sites} sites exceeds the capacity budget of {budget}")]
    TooLarge { sites: u128, budget: u128 },
}

/// Hard cap on addressable sites (two f64 fields stay around 2 GiB).
pub const SITE_BUDGET: u128 = 1 << 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BoxSpec {
    pub d: usize,
    pub radius: i64,
}

impl BoxSpec {
    pub fn new(d: usize, radius: i64) -> Result<Self, LatticeError> {
        if d == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        if radius < 0 {
            return Err(LatticeError::NegativeRadius);
        }
        let spec = BoxSpec { d, radius };
        let sites = spec.site_count_u128();
        if sites > SITE_BUDGET {
            return Err(LatticeError::TooLarge { sites, budget: SITE_BUDGET });
        }
        Ok(spec)
    }

    #[inline]
    pub fn side(&self) -> i64 {
        2 * self.radius + 1
    }

    fn site_count_u128(&self) -> u128 {
        let side = self.side() as u128;
        let mut n: u128 = 1;
        for _ in 0..self.d {
            n = n.saturating_mul(side);
        }
        n
    }

    #[inline]
    pub fn site_count(&self) -> usize {
        self.site_count_u128() as usize
    }

    #[inline]
    pub fn contains(&self, z: &[i64]) -> bool {
        z.len() == self.d && z.iter().all(|&c| c.abs() <= self.radius)
    }

    /// Lexicographic index of a site, first coordinate most significant.
    pub fn index_of(&self, z: &[i64]) -> Option<usize> {
        if !self.contains(z) {
            return None;
        }
        let side = self.side() as usize;
        let mut idx = 0usize;
        for &c in z {
            idx = idx * side + (c + self.radius) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let side = self.side() as usize;
        let mut z = vec![0i64; self.d];
        for k in (0..self.d).rev() {
            z[k] = (idx % side) as i64 - self.radius;
            idx /= side;
        }
        z
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.site_count()).map(move |i| self.site_at(i))
    }

    /// The 2d nearest neighbours of `z`, those inside the box only.
    pub fn neighbors_in_box(&self, z: &[i64]) -> Vec<Site> {
        let mut out = Vec::with_capacity(2 * self.d);
        for k in 0..self.d {
            for s in [-1i64, 1] {
                let mut y = z.to_vec();
                y[k] += s;
                if self.contains(&y) {
                    out.push(y);
                }
            }
        }
        out
    }
}

/// All 2d nearest neighbours of `z` in Z^d.
pub fn neighbors(z: &[i64]) -> Vec<Site> {
    let d = z.len();
    let mut out = Vec::with_capacity(2 * d);
    for k in 0..d {
        for s in [-1i64, 1] {
            let mut y = z.to_vec();
            y[k] += s;
            out.push(y);
        }
    }
    out
}

#[inline]
pub fn l1_norm(z: &[i64]) -> u64 {
    z.iter().map(|&c| c.unsigned_abs()).sum()
}

#[inline]
pub fn l1_dist(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y).unsigned_abs()).sum()
}

#[inline]
pub fn linf_dist(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y).unsigned_abs()).max().unwrap_or(0)
}

/// Sites of the l1 ball B(center, n), lexicographically ordered.
pub fn l1_ball(center: &[i64], n: u64) -> Vec<Site> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; center.len()];
    fill_ball(center, n as i64, 0, &mut cur, &mut out);
    out
}

fn fill_ball(center: &[i64], budget: i64, k: usize, cur: &mut [i64], out: &mut Vec<Site>) {
    if k == center.len() {
        out.push(cur.to_vec());
        return;
    }
    for off in -budget..=budget {
        cur[k] = center[k] + off;
        fill_ball(center, budget - off.abs(), k + 1, cur, out);
    }
}

/// True when B(center, n) lies entirely inside the box.
pub fn ball_in_box(spec: &BoxSpec, center: &[i64], n: u64) -> bool {
    center.len() == spec.d
        && center.iter().all(|&c| c.abs() + n as i64 <= spec.radius)
}

/// Lexicographic comparison of coordinate vectors.
pub fn lex_cmp(a: &[i64], b: &[i64]) -> std::cmp::Ordering {
    a.cmp(b)
}
