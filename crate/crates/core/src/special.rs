//! Spherical Bessel functions, spherical harmonics and a few related
//! integrals used by the transforms.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::quadrature::GaussLegendre;

/// Fills `out[l] = j_l(x)` for `l = 0..out.len()`.
///
/// Power series below `x = 1`, upward recurrence when every requested order is
/// below `x`, Miller's downward recurrence otherwise.
pub fn spherical_bessel_all(x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let lmax = n - 1;
    if x == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    if x < 1.0 {
        let x2 = x * x;
        let mut lead = 1.0; // x^l / (2l+1)!!
        for (l, slot) in out.iter_mut().enumerate() {
            if l > 0 {
                lead *= x / (2 * l + 1) as f64;
            }
            if lead == 0.0 {
                *slot = 0.0;
                continue;
            }
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..40 {
                let kf = k as f64;
                term *= -0.5 * x2 / (kf * (2.0 * (l as f64) + 2.0 * kf + 1.0));
                sum += term;
                if term.abs() < 1e-17 * sum.abs() {
                    break;
                }
            }
            *slot = lead * sum;
        }
        return;
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    if x > lmax as f64 {
        out[0] = j0;
        if lmax >= 1 {
            out[1] = s / (x * x) - c / x;
        }
        for l in 1..lmax {
            out[l + 1] = (2 * l + 1) as f64 / x * out[l] - out[l - 1];
        }
        return;
    }
    let j1 = s / (x * x) - c / x;
    let start = lmax + 20 + (40.0 * (lmax.max(1) as f64)).sqrt() as usize;
    let mut next = 0.0;
    let mut cur = 1e-300;
    let mut vals = vec![0.0; lmax + 1];
    for l in (1..=start).rev() {
        let prev = (2 * l + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if l - 1 <= lmax {
            vals[l - 1] = cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            for v in vals.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let scale = if j0.abs() >= j1.abs() || lmax == 0 {
        j0 / vals[0]
    } else {
        j1 / vals[1]
    };
    for (o, v) in out.iter_mut().zip(&vals) {
        *o = v * scale;
    }
}

pub fn spherical_bessel(l: usize, x: f64) -> f64 {
    let mut buf = vec![0.0; l + 1];
    spherical_bessel_all(x, &mut buf);
    buf[l]
}

/// `∫_0^∞ j_l(x)/x dx = √π Γ(l/2) / (4 Γ((l+3)/2))`, for `l ≥ 1`.
pub fn bessel_over_x_total(l: usize) -> f64 {
    assert!(l >= 1, "the l = 0 integral diverges");
    let (mut g, mut k) = if l % 2 == 1 { (PI / 4.0, 1) } else { (1.0 / 3.0, 2) };
    while k < l {
        g *= k as f64 / (k as f64 + 3.0);
        k += 2;
    }
    g
}

/// Cumulative `∫_0^{X} j_l(x)/x dx` for every `X` in the sorted slice `xs` and
/// every `1 ≤ l ≤ lmax`. Row `l = 0` is left at zero.
pub fn bessel_over_x_cumulative(lmax: usize, xs: &[f64]) -> Vec<Vec<f64>> {
    let rule = GaussLegendre::new(16);
    let mut out = vec![vec![0.0; xs.len()]; lmax + 1];
    let mut acc = vec![0.0; lmax + 1];
    let mut buf = vec![0.0; lmax + 1];
    let mut lo = 0.0;
    for (idx, &hi) in xs.iter().enumerate() {
        assert!(hi >= lo, "abscissae must be sorted");
        let span = hi - lo;
        let panels = (span / 0.5).ceil().max(1.0) as usize;
        let width = span / panels as f64;
        for p in 0..panels {
            let a = lo + p as f64 * width;
            for (x, w) in rule.mapped(a, a + width) {
                spherical_bessel_all(x, &mut buf);
                for l in 1..=lmax {
                    acc[l] += w * buf[l] / x;
                }
            }
        }
        for l in 1..=lmax {
            out[l][idx] = acc[l];
        }
        lo = hi;
    }
    out
}

/// Orthonormal associated Legendre values `p̄_l^m(cos θ)` for `0 ≤ m ≤ l ≤ lmax`,
/// including the Condon–Shortley phase, so that `Y_lm = p̄_l^m e^{imφ}`.
/// Indexed as `out[l][m]`.
pub fn normalized_legendre(lmax: usize, cos_theta: f64) -> Vec<Vec<f64>> {
    let x = cos_theta.clamp(-1.0, 1.0);
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut out: Vec<Vec<f64>> = (0..=lmax).map(|l| vec![0.0; l + 1]).collect();
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            pmm *= -s * ((2.0 * mf - 1.0) / (2.0 * mf)).sqrt();
        }
        let mf = m as f64;
        out[m][m] = pmm * (2.0 * mf + 1.0).sqrt();
        if m < lmax {
            out[m + 1][m] = x * (2.0 * mf + 3.0).sqrt() * out[m][m];
        }
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let lp = lf - 1.0;
            let a_prev = ((4.0 * lp * lp - 1.0) / (lp * lp - mf * mf)).sqrt();
            out[l][m] = a * (x * out[l - 1][m] - out[l - 2][m] / a_prev);
        }
    }
    out
}

/// Complex spherical harmonic `Y_lm(θ, φ)` (Condon–Shortley convention).
pub fn spherical_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> Complex64 {
    let ma = m.unsigned_abs() as usize;
    if ma > l {
        return Complex64::new(0.0, 0.0);
    }
    let p = normalized_legendre(l, theta.cos())[l][ma];
    let y = Complex64::from_polar(p, ma as f64 * phi);
    if m < 0 {
        let sign = if ma % 2 == 0 { 1.0 } else { -1.0 };
        y.conj() * sign
    } else {
        y
    }
}

/// Polar angles of a (not necessarily normalised) nonzero 3-vector.
pub fn polar_angles(v: [f64; 3]) -> (f64, f64) {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]);
    (theta, phi)
}

/// `Y_l0` as a function of the cosine of the polar angle.
pub fn zonal_harmonic(l: usize, cos_theta: f64) -> f64 {
    legendre_p(l, cos_theta) * ((2 * l + 1) as f64 / (4.0 * PI)).sqrt()
}

/// `Y_l0(cos ϑ)` for `l = 0..=lmax`.
pub fn zonal_harmonics_all(lmax: usize, cos_theta: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax + 1];
    p[0] = 1.0;
    if lmax >= 1 {
        p[1] = cos_theta;
    }
    for k in 2..=lmax {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * cos_theta * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    for (l, v) in p.iter_mut().enumerate() {
        *v *= ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
    }
    p
}

pub fn legendre_p(l: usize, x: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=l {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;
    use approx::assert_relative_eq;

    fn j_closed(l: usize, x: f64) -> f64 {
        let (s, c) = x.sin_cos();
        match l {
            0 => s / x,
            1 => s / (x * x) - c / x,
            2 => (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x),
            3 => (15.0 / x.powi(3) - 6.0 / x) * s / x - (15.0 / (x * x) - 1.0) * c / x,
            _ => unreachable!(),
        }
    }

    // j_l(x) = x^l / (2^(l+1) l!) ∫_{-1}^{1} cos(xt) (1-t²)^l dt
    fn j_integral(l: usize, x: f64) -> f64 {
        let gl = GaussLegendre::new(60);
        let fact: f64 = (1..=l).map(|k| k as f64).product();
        let pref = x.powi(l as i32) / (2f64.powi(l as i32 + 1) * fact);
        pref * gl.integrate(-1.0, 1.0, |t| (x * t).cos() * (1.0 - t * t).powi(l as i32))
    }

    #[test]
    fn series_branch_matches_integral_representation() {
        let mut buf = [0.0; 13];
        for &x in &[1e-3, 0.05, 0.3, 0.7, 0.99] {
            spherical_bessel_all(x, &mut buf);
            for (l, v) in buf.iter().enumerate() {
                let e = j_integral(l, x);
                assert!((v - e).abs() <= 1e-13 * e.abs(), "l={l} x={x}");
            }
        }
    }

    #[test]
    fn low_orders_match_closed_forms() {
        let mut buf = [0.0; 4];
        for &x in &[1.0, 2.5, 3.7, 10.0, 55.0, 400.0] {
            spherical_bessel_all(x, &mut buf);
            for l in 0..4 {
                let e = j_closed(l, x);
                assert!((buf[l] - e).abs() <= 1e-12 * e.abs().max(1e-3), "l={l} x={x}");
            }
        }
    }

    #[test]
    fn miller_branch_agrees_with_series_at_crossover() {
        let lmax = 40;
        let mut a = vec![0.0; lmax + 1];
        let mut b = vec![0.0; lmax + 1];
        spherical_bessel_all(1.0 - 1e-12, &mut a);
        spherical_bessel_all(1.0 + 1e-12, &mut b);
        for l in 0..=lmax {
            assert!((a[l] - b[l]).abs() <= 1e-10 * a[l].abs() + 1e-300, "l={l}");
        }
    }

    #[test]
    fn high_order_small_argument_is_tiny_and_positive() {
        let v = spherical_bessel(30, 5.0);
        assert!(v > 0.0 && v < 1e-12);
    }

    #[test]
    fn bessel_over_x_totals() {
        assert_relative_eq!(bessel_over_x_total(1), PI / 4.0);
        for l in 1..6 {
            // finite part by quadrature plus the 1/x^2 asymptotic tail
            let big = 400.0;
            let part = adaptive(&|x: f64| spherical_bessel(l, x) / x, 1e-12, big, 1e-13);
            let tail_est = ((big - l as f64 * PI / 2.0).cos()) / (big * big);
            let total = part + tail_est;
            assert!((total - bessel_over_x_total(l)).abs() < 5e-6, "l={l}");
        }
    }

    #[test]
    fn cumulative_integral_matches_direct() {
        let xs = [0.1, 0.5, 2.0, 9.0, 30.0];
        let cum = bessel_over_x_cumulative(3, &xs);
        for (i, &x) in xs.iter().enumerate() {
            for l in 1..=3 {
                let d = adaptive(&|t: f64| spherical_bessel(l, t) / t, 1e-14, x, 1e-14);
                assert!((cum[l][i] - d).abs() < 1e-12, "l={l} x={x}");
            }
        }
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let lmax = 5;
        let gl = GaussLegendre::new(24);
        let nphi = 24;
        for l1 in 0..=lmax {
            for l2 in 0..=lmax {
                for m in -(l1.min(l2) as i64)..=(l1.min(l2) as i64) {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (x, w) in gl.mapped(-1.0, 1.0) {
                        let th = x.acos();
                        for k in 0..nphi {
                            let ph = 2.0 * PI * k as f64 / nphi as f64;
                            acc += spherical_harmonic(l1, m, th, ph).conj()
                                * spherical_harmonic(l2, m, th, ph)
                                * (w * 2.0 * PI / nphi as f64);
                        }
                    }
                    let e = if l1 == l2 { 1.0 } else { 0.0 };
                    assert!((acc.re - e).abs() < 1e-12 && acc.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn negative_m_relation_and_zonal() {
        let (th, ph) = (0.7, 1.3);
        for l in 0..6usize {
            for m in 1..=l as i64 {
                let a = spherical_harmonic(l, -m, th, ph);
                let b = spherical_harmonic(l, m, th, ph).conj() * if m % 2 == 0 { 1.0 } else { -1.0 };
                assert!((a - b).norm() < 1e-14);
            }
            assert_relative_eq!(
                spherical_harmonic(l, 0, th, ph).re,
                zonal_harmonic(l, th.cos()),
                epsilon = 1e-14
            );
        }
        // Condon-Shortley: Y_11 = -sqrt(3/8pi) sin θ e^{iφ}
        let y11 = spherical_harmonic(1, 1, th, ph);
        let e = Complex64::from_polar(-(3.0 / (8.0 * PI)).sqrt() * th.sin(), ph);
        assert!((y11 - e).norm() < 1e-14);
    }
}
