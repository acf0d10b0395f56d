//! Riccati-Bessel functions at k = 1.
//!
//! `u_l(r) = sqrt(pi r / 2) J_{l+1/2}(r)` is the regular free radial
//! solution, `v_l` the irregular counterpart normalized so that
//! `v_l(r) -> cos(r - l pi / 2)` for large r. Both satisfy
//! `z'' + z - l(l+1)/r^2 z = 0`.

use thiserror::Error;

/// Largest order supported by the evaluation scheme.
pub const MAX_L: u32 = 60;

#[derive(Debug, Error)]
pub enum BesselError {
    #[error("argument must be positive and finite, got {0}")]
    InvalidArgument(f64),
    #[error("order {0} exceeds supported maximum {MAX_L}")]
    OrderTooLarge(u32),
    #[error("severe loss of significance for l={l}, r={r}")]
    AccuracyLoss { l: u32, r: f64 },
}

fn check(l: u32, r: f64) -> Result<(), BesselError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(BesselError::InvalidArgument(r));
    }
    if l > MAX_L {
        return Err(BesselError::OrderTooLarge(l));
    }
    Ok(())
}

/// (2l+1)!! in double precision.
pub fn double_factorial_odd(l: u32) -> f64 {
    (0..=l).map(|k| (2 * k + 1) as f64).product()
}

/// Regular Riccati-Bessel function u_l(r).
pub fn riccati_bessel_u(l: u32, r: f64) -> Result<f64, BesselError> {
    Ok(*riccati_bessel_u_all(l, r)?.last().unwrap())
}

/// u_0(r) .. u_{l_max}(r) in one pass.
///
/// Small arguments use the ascending series; otherwise Miller's downward
/// recurrence with normalization against u_0 = sin r (or u_1 when sin r is
/// near a zero). Orders whose true value underflows come back as 0.
pub fn riccati_bessel_u_all(l_max: u32, r: f64) -> Result<Vec<f64>, BesselError> {
    check(l_max, r)?;
    if r < 0.5 {
        return Ok((0..=l_max).map(|l| u_series(l, r)).collect());
    }
    // The downward recurrence must start above the turning point n ~ r,
    // where u_n is the minimal solution; the cube-root margin covers the
    // transition zone's Airy-like width.
    let base = (l_max as f64).max(r);
    let start = base.ceil() as usize + 25 + (12.0 * base.cbrt()).ceil() as usize;
    let mut out = vec![0.0; l_max as usize + 1];
    let mut upper = 0.0f64; // u_{n+1}
    let mut cur = 1e-280; // u_n (arbitrary seed, fixed by normalization)
    for n in (0..start).rev() {
        let lower = (2.0 * n as f64 + 3.0) / r * cur - upper;
        upper = cur;
        cur = lower;
        if n < out.len() {
            out[n] = cur;
        }
        if cur.abs() > 1e250 {
            let scale = 1e-250;
            cur *= scale;
            upper *= scale;
            for v in out.iter_mut().skip(n) {
                *v *= scale;
            }
        }
    }
    // After the loop `cur` holds raw u_0 and `upper` raw u_1. Anchor on
    // whichever closed form is away from a zero.
    let (anchor_raw, anchor_true) = if r.sin().abs() > 0.1 {
        (cur, r.sin())
    } else {
        (upper, r.sin() / r - r.cos())
    };
    if anchor_raw == 0.0 {
        return Err(BesselError::AccuracyLoss { l: l_max, r });
    }
    let scale = anchor_true / anchor_raw;
    for v in out.iter_mut() {
        *v *= scale;
    }
    Ok(out)
}

/// Ascending series for u_l; accurate for small r (no cancellation below
/// r ~ 1).
fn u_series(l: u32, r: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let x2 = -0.5 * r * r;
    for k in 1..40 {
        term *= x2 / (k as f64 * (2.0 * l as f64 + 2.0 * k as f64 + 1.0));
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    // r^{l+1} / (2l+1)!! computed factor-by-factor to delay underflow.
    let mut lead = r;
    for k in 1..=l {
        lead *= r / (2.0 * k as f64 + 1.0);
    }
    lead * sum
}

/// Irregular Riccati-Bessel function v_l(r), normalized so that
/// v_l(r) -> cos(r - l pi / 2) as r -> infinity. Upward recurrence (the
/// stable direction for the irregular solution).
pub fn riccati_bessel_v(l: u32, r: f64) -> Result<f64, BesselError> {
    check(l, r)?;
    let v0 = r.cos();
    if l == 0 {
        return Ok(v0);
    }
    let mut prev = v0;
    let mut cur = r.cos() / r + r.sin();
    for n in 1..l {
        let next = (2.0 * n as f64 + 1.0) / r * cur - prev;
        prev = cur;
        cur = next;
    }
    if !cur.is_finite() {
        return Err(BesselError::AccuracyLoss { l, r });
    }
    Ok(cur)
}

/// Large-r asymptotic form sin(r - l pi / 2).
pub fn u_asymptotic(l: u32, r: f64) -> f64 {
    // Quarter-turn reduction keeps the phase exact for integer l.
    match l % 4 {
        0 => r.sin(),
        1 => -r.cos(),
        2 => -r.sin(),
        _ => r.cos(),
    }
}
