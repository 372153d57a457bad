//! Real roots of low-degree polynomials.

use std::f64::consts::PI;

/// Real roots of `c3 a^3 + c2 a^2 + c1 a + c0`, ascending, each polished by
/// one Newton step. Falls back to lower degree when `c3` vanishes.
pub fn real_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let scale = c2.abs().max(c1.abs()).max(c0.abs());
    if c3.abs() <= 1e-14 * scale {
        return quadratic_roots(c2, c1, c0);
    }
    let (b, c, e) = (c2 / c3, c1 / c3, c0 / c3);
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + e;

    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;

    let mut roots = if p == 0.0 && q == 0.0 {
        vec![0.0]
    } else if disc > 0.0 {
        let big = -half_q.signum() * (half_q.abs() + disc.sqrt()).cbrt();
        let small = if big != 0.0 { -third_p / big } else { 0.0 };
        vec![big + small]
    } else {
        let m = 2.0 * (-third_p).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3).map(|k| m * (theta - 2.0 * PI * k as f64 / 3.0).cos()).collect()
    };

    for t in roots.iter_mut() {
        *t -= shift;
        *t = newton_step(*t, c3, c2, c1, c0);
    }
    roots.sort_by(f64::total_cmp);
    roots
}

fn newton_step(a: f64, c3: f64, c2: f64, c1: f64, c0: f64) -> f64 {
    let f = ((c3 * a + c2) * a + c1) * a + c0;
    let df = (3.0 * c3 * a + 2.0 * c2) * a + c1;
    if df == 0.0 || !df.is_finite() {
        return a;
    }
    let next = a - f / df;
    if next.is_finite() {
        next
    } else {
        a
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() <= 1e-14 * b.abs().max(c.abs()) {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    let mut r = vec![q / a, c / q];
    r.sort_by(f64::total_cmp);
    r
}
