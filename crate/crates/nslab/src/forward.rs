//! Forward fixed-energy scattering at k = 1: the radial equation
//! `phi'' + phi - l(l+1)/r^2 phi - q(r) phi = 0` integrated from the
//! origin, phase shifts and Jost magnitudes read off the large-r
//! asymptotics, plus an independent variable-phase oracle.

use crate::bessel::{double_factorial_odd, riccati_bessel_u, riccati_bessel_v, BesselError};
use crate::potential::Potential;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ODE step size underflow at r = {r}")]
    IntegrationFailure { r: f64 },
    #[error("unstable asymptotic matching for l = {l} (determinant {det:.3e})")]
    MatchFailure { l: u32, det: f64 },
    #[error(transparent)]
    Bessel(#[from] BesselError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Phase shifts (reduced to (-pi/2, pi/2]) and Jost magnitudes for
/// l = 0..=l_max at k = 1.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PhaseShiftSet {
    pub deltas: Vec<f64>,
    pub jost_magnitudes: Vec<f64>,
    pub l_max: u32,
    pub match_radius: f64,
}

impl PhaseShiftSet {
    pub fn zero(l_max: u32, match_radius: f64) -> Self {
        Self {
            deltas: vec![0.0; l_max as usize + 1],
            jost_magnitudes: vec![1.0; l_max as usize + 1],
            l_max,
            match_radius,
        }
    }

    /// CSV with columns l, delta, jost_magnitude.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,delta,jost_magnitude\n");
        for l in 0..=self.l_max as usize {
            out.push_str(&format!(
                "{},{:.16e},{:.16e}\n",
                l, self.deltas[l], self.jost_magnitudes[l]
            ));
        }
        out
    }

    pub fn from_csv(path: &Path) -> Result<Self, ForwardError> {
        let text = std::fs::read_to_string(path)?;
        let mut deltas = Vec::new();
        let mut jost = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') || line.starts_with('l') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 {
                return Err(ForwardError::InvalidArgument(format!(
                    "bad shift CSV line {line:?}"
                )));
            }
            deltas.push(cols[1].parse::<f64>().map_err(|e| {
                ForwardError::InvalidArgument(format!("bad delta in {line:?}: {e}"))
            })?);
            jost.push(if cols.len() > 2 {
                cols[2].parse::<f64>().unwrap_or(1.0)
            } else {
                1.0
            });
        }
        if deltas.is_empty() {
            return Err(ForwardError::InvalidArgument("empty shift CSV".into()));
        }
        Ok(Self {
            l_max: deltas.len() as u32 - 1,
            deltas,
            jost_magnitudes: jost,
            match_radius: 0.0,
        })
    }
}

/// Regular solution samples, normalized to phi(r) ~ r^{l+1} at the origin.
#[derive(Debug, Clone)]
pub struct RegularSolution {
    pub l: u32,
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
}

const ABS_TOL: f64 = 1e-13;
const REL_TOL: f64 = 1e-11;

/// Dormand-Prince 5(4) with step control, sampling the solution at the
/// requested output radii (assumed increasing, all > r0).
pub(crate) fn rk45<F>(
    f: F,
    r0: f64,
    y0: &[f64],
    outputs: &[f64],
) -> Result<Vec<Vec<f64>>, ForwardError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let dim = y0.len();
    let mut r = r0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; dim]; 7];
    f(r, &y, &mut k[0]);
    let mut h: f64 = 1e-4;
    let mut results = Vec::with_capacity(outputs.len());
    for &target in outputs {
        if target <= r {
            return Err(ForwardError::InvalidArgument(
                "output radii must be increasing and beyond the start".into(),
            ));
        }
        while r < target {
            let mut step = h.min(target - r);
            loop {
                let mut ytmp = vec![0.0; dim];
                for stage in 0..6 {
                    for d in 0..dim {
                        let mut acc = 0.0;
                        for (j, kj) in k.iter().enumerate().take(stage + 1) {
                            acc += A[stage][j] * kj[d];
                        }
                        ytmp[d] = y[d] + step * acc;
                    }
                    let stage_r = r + C[stage] * step;
                    let (head, tail) = k.split_at_mut(stage + 1);
                    let _ = head;
                    f(stage_r, &ytmp, &mut tail[0]);
                }
                // 5th-order solution is stage 6's ytmp (FSAL layout).
                let ynew = ytmp;
                let mut err = 0.0f64;
                for d in 0..dim {
                    let mut e = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        e += E[j] * kj[d];
                    }
                    e *= step;
                    let sc = ABS_TOL + REL_TOL * y[d].abs().max(ynew[d].abs());
                    err = err.max((e / sc).abs());
                }
                if err <= 1.0 {
                    r += step;
                    y = ynew;
                    k[0] = k[6].clone();
                    let grow = if err > 0.0 {
                        (0.9 * err.powf(-0.2)).min(5.0)
                    } else {
                        5.0
                    };
                    h = (step * grow).max(1e-12);
                    break;
                }
                step *= (0.9 * err.powf(-0.2)).max(0.1);
                if step < 1e-13 * (1.0 + r.abs()) {
                    return Err(ForwardError::IntegrationFailure { r });
                }
            }
        }
        results.push(y.clone());
    }
    Ok(results)
}

fn radial_rhs<'a>(q: &'a Potential, l: u32) -> impl Fn(f64, &[f64], &mut [f64]) + 'a {
    let ll1 = (l * (l + 1)) as f64;
    move |r: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = (ll1 / (r * r) + q.eval(r) - 1.0) * y[0];
    }
}

fn start_radius(l: u32) -> f64 {
    1e-4 * (l + 1) as f64
}

/// Series start for the regular solution: phi = r^{l+1}(1 + c2 r^2) with
/// the curvature coefficient from a locally constant q; the bare leading
/// term alone leaves an O(r0^2) relative amplitude error.
///
/// Returned normalized to phi(r0) ~ 1 together with the true scale
/// r0^{l+1}: the raw start value underflows the integrator's absolute
/// error floor for moderate l, which silently corrupts the amplitude.
fn series_start(q: &Potential, l: u32, r0: f64) -> ([f64; 2], f64) {
    let c2 = (q.eval(r0) - 1.0) / (4.0 * l as f64 + 6.0);
    let y = [
        1.0 + c2 * r0 * r0,
        ((l as f64 + 1.0) + (l as f64 + 3.0) * c2 * r0 * r0) / r0,
    ];
    (y, r0.powi(l as i32 + 1))
}

/// Regular solution of the radial equation on a uniform grid up to r_max,
/// started with the exact leading behavior phi = r^{l+1}.
pub fn regular_solution(q: &Potential, l: u32, r_max: f64) -> Result<RegularSolution, ForwardError> {
    let r0 = start_radius(l);
    if r_max <= r0 {
        return Err(ForwardError::InvalidArgument(format!(
            "r_max {r_max} must exceed the start radius {r0}"
        )));
    }
    let step = 0.05;
    let n = ((r_max - r0) / step).ceil() as usize;
    let r_grid: Vec<f64> = (1..=n).map(|i| r0 + i as f64 * (r_max - r0) / n as f64).collect();
    let (y0, scale) = series_start(q, l, r0);
    let samples = rk45(radial_rhs(q, l), r0, &y0, &r_grid)?;
    let mut grid = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    grid.push(r0);
    values.push(y0[0] * scale);
    for (r, s) in r_grid.iter().zip(&samples) {
        grid.push(*r);
        values.push(s[0] * scale);
    }
    Ok(RegularSolution {
        l,
        r_grid: grid,
        values,
    })
}

/// Projection of two solution values onto (u_l, v_l): returns
/// (delta reduced to (-pi/2, pi/2], amplitude sqrt(alpha^2 + beta^2)).
pub(crate) fn project_onto_free(
    l: u32,
    r1: f64,
    phi1: f64,
    r2: f64,
    phi2: f64,
) -> Result<(f64, f64), ForwardError> {
    let u1 = riccati_bessel_u(l, r1)?;
    let v1 = riccati_bessel_v(l, r1)?;
    let u2 = riccati_bessel_u(l, r2)?;
    let v2 = riccati_bessel_v(l, r2)?;
    let det = u1 * v2 - u2 * v1;
    let scale = (u1.abs() + v1.abs()) * (u2.abs() + v2.abs());
    if det.abs() < 1e-8 * scale.max(1e-300) {
        return Err(ForwardError::MatchFailure { l, det });
    }
    let alpha = (phi1 * v2 - phi2 * v1) / det;
    let beta = (phi2 * u1 - phi1 * u2) / det;
    Ok((reduce_phase(beta.atan2(alpha)), alpha.hypot(beta)))
}

/// Reduce an angle modulo pi into (-pi/2, pi/2].
pub fn reduce_phase(delta: f64) -> f64 {
    let mut d = delta % PI;
    if d > FRAC_PI_2 {
        d -= PI;
    } else if d <= -FRAC_PI_2 {
        d += PI;
    }
    d
}

/// Phase shifts and Jost magnitudes for l = 0..=l_max by projecting the
/// regular solution onto (u_l, v_l) at match_radius and
/// match_radius + pi/4.
pub fn phase_shifts(
    q: &Potential,
    l_max: u32,
    match_radius: f64,
) -> Result<PhaseShiftSet, ForwardError> {
    let r2 = match_radius + FRAC_PI_4;
    let mut deltas = Vec::with_capacity(l_max as usize + 1);
    let mut jost = Vec::with_capacity(l_max as usize + 1);
    for l in 0..=l_max {
        let r0 = start_radius(l);
        if match_radius <= r0 + 1.0 {
            return Err(ForwardError::InvalidArgument(format!(
                "match radius {match_radius} too small for l = {l}"
            )));
        }
        let (y0, scale) = series_start(q, l, r0);
        let vals = rk45(radial_rhs(q, l), r0, &y0, &[match_radius, r2])?;
        let (delta, amp) = project_onto_free(l, match_radius, vals[0][0], r2, vals[1][0])?;
        deltas.push(delta);
        // phi started as r^{l+1}; dividing by (2l+1)!! matches the
        // convention under which |F_l| = 1 for q = 0.
        jost.push(amp * scale / double_factorial_odd(l));
    }
    Ok(PhaseShiftSet {
        deltas,
        jost_magnitudes: jost,
        l_max,
        match_radius,
    })
}

/// Independent oracle: the variable-phase equation
/// `delta' = -q(r) [cos(delta) u_l - sin(delta) v_l]^2` integrated from the
/// origin; returns the accumulated phase reduced to (-pi/2, pi/2].
pub fn phase_shifts_variable_phase(q: &Potential, l: u32) -> Result<f64, ForwardError> {
    let r0 = 1e-3;
    let r_end = q.truncation_radius;
    let rhs = |r: f64, y: &[f64], dy: &mut [f64]| {
        let u = riccati_bessel_u(l, r).unwrap_or(0.0);
        let v = riccati_bessel_v(l, r).unwrap_or(0.0);
        let (s, c) = y[0].sin_cos();
        // With v_0 = cos r (v_l ~ cos(r - l pi/2)) the phase equation is
        // delta' = -q (cos(delta) u_l + sin(delta) v_l)^2.
        let w = c * u + s * v;
        dy[0] = -q.eval(r) * w * w;
    };
    let vals = rk45(rhs, r0, &[0.0], &[r_end])?;
    Ok(reduce_phase(vals[0][0]))
}

/// First Born approximation delta_l ~ -int_0^inf q(r) u_l(r)^2 dr by
/// panelwise quadrature out to the potential's truncation radius. Accurate
/// for weak potentials; emitted as a cross-check column by the CLI.
pub fn born_phase_shift(q: &Potential, l: u32) -> Result<f64, ForwardError> {
    let r_max = q.truncation_radius;
    let mut total = 0.0;
    let mut x = 0.0;
    while x < r_max {
        let rule = crate::numerics::gauss_legendre(24, x, (x + 1.0).min(r_max))
            .map_err(|e| ForwardError::InvalidArgument(e.to_string()))?;
        let mut err = None;
        total += rule.integrate(|r| match riccati_bessel_u(l, r) {
            Ok(u) => q.eval(r) * u * u,
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
        x += 1.0;
    }
    Ok(-total)
}

/// max_l |F_l| over the set; the numerical stand-in for the boundedness
/// constant sup_l |F_l|.
pub fn jost_magnitude_bound(set: &PhaseShiftSet) -> f64 {
    set.jost_magnitudes.iter().cloned().fold(0.0, f64::max)
}
