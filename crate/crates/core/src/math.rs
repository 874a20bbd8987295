//! Scalar helpers shared by the controllers: sign, saturation and signed powers.

/// Sign with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Unit saturation: identity on [-1, 1], sign outside.
#[inline]
pub fn sat(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Signed rational power `sgn(x)^a * |x|^(a/b)` for odd `b`.
///
/// Odd `a` keeps the sign of `x`; even `a` gives an even, non-negative map.
#[inline]
pub fn fpow(x: f64, a: i32, b: u32) -> f64 {
    debug_assert!(b % 2 == 1, "fpow denominator must be odd");
    if a == 0 {
        return 1.0;
    }
    let m = x.abs().powf(a as f64 / b as f64);
    if a.rem_euclid(2) == 1 {
        sgn(x) * m
    } else {
        m
    }
}

/// `sgn(x) * |x|^alpha` for a real exponent (the super-twisting `sig` map).
#[inline]
pub fn sig(x: f64, alpha: f64) -> f64 {
    sgn(x) * x.abs().powf(alpha)
}

/// Smallest and largest entries of a slice; `None` when empty.
pub fn min_max(xs: &[f64]) -> Option<(f64, f64)> {
    let mut it = xs.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
}
