//! Clebsch–Gordan and Wigner 6j symbols from the Racah formulas.
//!
//! Quantum numbers are passed as `f64` and may be half-integers; internally
//! they are doubled so all the factorial arguments are exact integers.

const MAX_FACT: usize = 64;

fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0 && (n as usize) < MAX_FACT);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn twice(x: f64) -> Option<i64> {
    let t = 2.0 * x;
    let r = t.round();
    ((t - r).abs() < 1e-9).then_some(r as i64)
}

/// `(a + b + ...)/2` for doubled arguments, if it is a nonnegative integer.
fn half(sum2: i64) -> Option<i64> {
    (sum2 >= 0 && sum2 % 2 == 0).then_some(sum2 / 2)
}

fn triangle(a2: i64, b2: i64, c2: i64) -> Option<f64> {
    let x = half(a2 + b2 - c2)?;
    let y = half(a2 - b2 + c2)?;
    let z = half(-a2 + b2 + c2)?;
    let s = half(a2 + b2 + c2)?;
    Some((factorial(x) * factorial(y) * factorial(z) / factorial(s + 1)).sqrt())
}

/// `⟨j1 m1; j2 m2 | j m⟩` in the Condon–Shortley phase convention.
///
/// Returns zero for any combination violating the selection rules.
pub fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> f64 {
    let (Some(j1), Some(m1), Some(j2), Some(m2), Some(j), Some(m)) =
        (twice(j1), twice(m1), twice(j2), twice(m2), twice(j), twice(m))
    else {
        return 0.0;
    };
    cg2(j1, m1, j2, m2, j, m)
}

fn cg2(j1: i64, m1: i64, j2: i64, m2: i64, j: i64, m: i64) -> f64 {
    if m1 + m2 != m || m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    if (j1 + m1) % 2 != 0 || (j2 + m2) % 2 != 0 || (j + m) % 2 != 0 {
        return 0.0;
    }
    let Some(tri) = triangle(j1, j2, j) else {
        return 0.0;
    };
    let f = |x2: i64| factorial(x2 / 2);
    let pre = ((j + 1) as f64).sqrt()
        * tri
        * (f(j + m) * f(j - m) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)).sqrt();
    // Every denominator argument must stay nonnegative.
    let a = (j1 + j2 - j) / 2;
    let b = (j1 - m1) / 2;
    let c = (j2 + m2) / 2;
    let d = (j - j2 + m1) / 2;
    let e = (j - j1 - m2) / 2;
    let kmin = 0.max(-d).max(-e);
    let kmax = a.min(b).min(c);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign
            / (factorial(k)
                * factorial(a - k)
                * factorial(b - k)
                * factorial(c - k)
                * factorial(d + k)
                * factorial(e + k));
    }
    pre * sum
}

/// Wigner 6j symbol `{j1 j2 j3; j4 j5 j6}`.
pub fn wigner_6j(j1: f64, j2: f64, j3: f64, j4: f64, j5: f64, j6: f64) -> f64 {
    let (Some(a), Some(b), Some(c), Some(d), Some(e), Some(f)) =
        (twice(j1), twice(j2), twice(j3), twice(j4), twice(j5), twice(j6))
    else {
        return 0.0;
    };
    let tris = [
        triangle(a, b, c),
        triangle(a, e, f),
        triangle(d, b, f),
        triangle(d, e, c),
    ];
    if tris.iter().any(Option::is_none) {
        return 0.0;
    }
    let pre: f64 = tris.iter().map(|t| t.unwrap()).product();
    let a1 = (a + b + c) / 2;
    let a2 = (a + e + f) / 2;
    let a3 = (d + b + f) / 2;
    let a4 = (d + e + c) / 2;
    let b1 = (a + b + d + e) / 2;
    let b2 = (b + c + e + f) / 2;
    let b3 = (c + a + f + d) / 2;
    let tmin = a1.max(a2).max(a3).max(a4);
    let tmax = b1.min(b2).min(b3);
    let mut sum = 0.0;
    for t in tmin..=tmax {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * factorial(t + 1)
            / (factorial(t - a1)
                * factorial(t - a2)
                * factorial(t - a3)
                * factorial(t - a4)
                * factorial(b1 - t)
                * factorial(b2 - t)
                * factorial(b3 - t));
    }
    pre * sum
}
