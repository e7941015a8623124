//! Statistical utilities for the experiment harness: Kolmogorov-Smirnov
//! tests, simple summary statistics, adaptive quadrature, and the limiting
//! top-two density of the rescaled penalisation functional.

use crate::parallel;

/// One-sample KS statistic sup_x |F_n(x) - F(x)| against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    assert!(!sample.is_empty());
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic Kolmogorov survival function Q(x) = 2 sum (-1)^{k-1} e^{-2k^2x^2}.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Asymptotic p-value of a one-sample KS statistic.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d))
}

/// CDF of the standard Laplace law with density (1/2) e^{-|x|}.
pub fn laplace_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * x.exp()
    } else {
        1.0 - 0.5 * (-x).exp()
    }
}

/// Inverse CDF of the standard Laplace law.
pub fn laplace_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    if p < 0.5 {
        (2.0 * p).ln()
    } else {
        -(2.0 * (1.0 - p)).ln()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// (mean, standard error of the mean).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, (var / xs.len() as f64).sqrt())
}

/// Quantile by linear interpolation on the sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Adaptive Simpson quadrature on [a, b].
pub fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_rec(f, a, b, fa, fb, fc, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64 + Copy>(
    f: F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let lm = 0.5 * (a + c);
    let rm = 0.5 * (c + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (c - a) / 6.0 * (fa + 4.0 * flm + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, c, fa, fc, flm, left, tol / 2.0, depth - 1)
            + simpson_rec(f, c, b, fc, fb, frm, right, tol / 2.0, depth - 1)
    }
}

/// The limiting joint density of the rescaled top-two statistics
/// (x1, x2, y1, y2) in d dimensions:
///
///   p = exp{ -(y1 + y2) - |x1| - |x2| - 2^d e^{-y2} } 1{y1 > y2},
///
/// with x1, x2 in R^d and |.| the l1 norm. The moments below are obtained by
/// numerical quadrature of this density, never hand-entered.
pub mod top_two_density {
    use super::adaptive_simpson;

    const Y_LO: f64 = -8.0;
    const Y_HI: f64 = 60.0;
    const X_HI: f64 = 60.0;
    const TOL: f64 = 1e-10;

    pub fn density(d: usize, x1: &[f64], x2: &[f64], y1: f64, y2: f64) -> f64 {
        if y1 <= y2 {
            return 0.0;
        }
        let n1: f64 = x1.iter().map(|v| v.abs()).sum();
        let n2: f64 = x2.iter().map(|v| v.abs()).sum();
        let pd = 2f64.powi(d as i32);
        (-(y1 + y2) - n1 - n2 - pd * (-y2).exp()).exp()
    }

    /// Integral of exp(-|s|) over one coordinate axis.
    fn coord_mass() -> f64 {
        2.0 * adaptive_simpson(|s: f64| (-s).exp(), 0.0, X_HI, TOL)
    }

    /// Integral over y1 > y2 of exp(-(y1+y2) - 2^d e^{-y2}).
    fn y_mass(d: usize) -> f64 {
        let pd = 2f64.powi(d as i32);
        adaptive_simpson(
            |y2: f64| {
                // inner integral over y1 in (y2, inf) of e^{-y1}
                (-y2).exp() * (-y2 - pd * (-y2).exp()).exp()
            },
            Y_LO,
            Y_HI,
            TOL,
        )
    }

    /// Total mass of the printed density; equals 1 by construction.
    pub fn total_mass(d: usize) -> f64 {
        coord_mass().powi(2 * d as i32) * y_mass(d)
    }

    /// E |x1| (l1 norm of the first rescaled site).
    pub fn abs_x1_mean(d: usize) -> f64 {
        let per_coord =
            2.0 * adaptive_simpson(|s: f64| s * (-s).exp(), 0.0, X_HI, TOL) / coord_mass();
        d as f64 * per_coord
    }

    /// Survival function of the gap y1 - y2 under the joint law.
    pub fn gap_sf(d: usize, g: f64) -> f64 {
        if g <= 0.0 {
            return 1.0;
        }
        let pd = 2f64.powi(d as i32);
        let num = adaptive_simpson(
            |y2: f64| (-(y2 + g) - y2 - pd * (-y2).exp()).exp(),
            Y_LO,
            Y_HI,
            TOL,
        );
        num / y_mass(d)
    }
}

/// Deterministic ordered reduction of a batch statistic over seeds.
pub fn collect_over_seeds<T: Send>(
    seeds: &[u64],
    f: impl Fn(u64) -> T + Sync + Send,
) -> Vec<T> {
    parallel::map_indexed(seeds.len(), |i| f(seeds[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ks_statistic_detects_uniform_vs_not() {
        let n = 2000;
        let uniform: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&uniform, |x| x.clamp(0.0, 1.0));
        assert!(d < 0.01, "uniform grid should fit the uniform CDF, d = {d}");
        let squashed: Vec<f64> = uniform.iter().map(|x| x * x).collect();
        let d2 = ks_statistic(&squashed, |x| x.clamp(0.0, 1.0));
        assert!(d2 > 0.2, "x^2 transform should be far from uniform");
    }

    #[test]
    fn kolmogorov_sf_reference_points() {
        // classical table values
        assert_relative_eq!(kolmogorov_sf(1.2238), 0.10, epsilon = 2e-3);
        assert_relative_eq!(kolmogorov_sf(1.3581), 0.05, epsilon = 2e-3);
    }

    #[test]
    fn laplace_cdf_quantile_roundtrip() {
        for &p in &[0.01, 0.2, 0.5, 0.77, 0.99] {
            assert_relative_eq!(laplace_cdf(laplace_quantile(p)), p, epsilon = 1e-12);
        }
        assert_relative_eq!(laplace_cdf(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_relative_eq!(v, 2.0, epsilon = 1e-10);
        let g = adaptive_simpson(|x: f64| (-x * x / 2.0).exp(), -8.0, 8.0, 1e-12);
        assert_relative_eq!(g, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn top_two_density_normalises() {
        for d in 1..=2usize {
            assert_relative_eq!(top_two_density::total_mass(d), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn top_two_gap_is_unit_exponential() {
        // the gap marginal works out to Exp(1); the quadrature should see it
        for &g in &[0.1, 0.5, 1.0, 2.5] {
            assert_relative_eq!(top_two_density::gap_sf(1, g), (-g).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn top_two_abs_mean_is_d() {
        assert_relative_eq!(top_two_density::abs_x1_mean(1), 1.0, epsilon = 1e-6);
        assert_relative_eq!(top_two_density::abs_x1_mean(2), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(quantile(&xs, 0.0), 1.0);
        assert_relative_eq!(quantile(&xs, 1.0), 4.0);
        assert_relative_eq!(quantile(&xs, 0.5), 2.5);
    }

    #[test]
    fn two_sample_ks_accepts_same_law() {
        let a: Vec<f64> = (0..500).map(|i| ((i * 37 + 11) % 1000) as f64 / 1000.0).collect();
        let b: Vec<f64> = (0..400).map(|i| ((i * 61 + 29) % 1000) as f64 / 1000.0).collect();
        let (_, p) = ks_two_sample(&a, &b);
        assert!(p > 0.01, "p = {p}");
    }
}
