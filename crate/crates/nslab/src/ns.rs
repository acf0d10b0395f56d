//! The Newton-Sabatier kernel machinery.
//!
//! For a coefficient set {c_l} the separable kernel
//! `f(r,s) = sum_l c_l u_l(r) u_l(s)` defines, at each radius r, the basic
//! integral equation
//! `K(r,s) + int_0^r K(r,t) f(t,s) dt/t^2 = f(r,s)`, `0 <= s <= r`.
//! The equation is discretized by a Nystrom rule per radius; its
//! conditioning is tracked along the radius sweep, and the first radius
//! where the discretized operator becomes singular is refined by a
//! determinant sign change. When the sweep survives, the output potential
//! is `q1(r) = -(2/r) d/dr (K(r,r)/r)` and the transformation functions
//! `phi_l(r) = u_l(r) - int_0^r K(r,t) u_l(t) dt/t^2` carry the phase
//! shifts the output potential generates.

use crate::bessel::{riccati_bessel_u, riccati_bessel_u_all, BesselError};
use crate::forward::{project_onto_free, ForwardError, PhaseShiftSet};
use crate::numerics::{
    dense_determinant, differentiate_grid, find_root_bracketed, gauss_legendre, least_squares_fit,
    solve_dense, FitError, FitOptions, NumericsError, QuadratureRule,
};
use nalgebra::DMatrix;
use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("basic equation not solvable at r = {r} (smallest singular value {smallest_singular:.3e})")]
    BasicEquationNotSolvable { r: f64, smallest_singular: f64 },
    #[error("reconstruction impossible: {0}")]
    ReconstructionImpossible(String),
    #[error("kernel not available at r = {r}: breakdown at {breakdown}")]
    NotAvailable { r: f64, breakdown: f64 },
    #[error("coefficient fit step failed{}: {detail}", breakdown_radius.map(|r| format!(" (breakdown at r = {r})")).unwrap_or_default())]
    FitStepFailed {
        breakdown_radius: Option<f64>,
        detail: String,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Bessel(#[from] BesselError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Real coefficients c_0..c_L of the separable kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub c: Vec<f64>,
}

impl CoefficientSet {
    pub fn new(c: Vec<f64>) -> Result<Self, NsError> {
        if c.is_empty() {
            return Err(NsError::InvalidArgument("need at least c_0".into()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(NsError::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self { c })
    }

    pub fn rank_one(c0: f64) -> Self {
        Self { c: vec![c0] }
    }

    pub fn zeros(l_max: u32) -> Self {
        Self {
            c: vec![0.0; l_max as usize + 1],
        }
    }

    pub fn l_max(&self) -> u32 {
        self.c.len() as u32 - 1
    }

    /// Sum |c_l|; with finitely many coefficients the summability hypothesis
    /// holds automatically, the value is recorded for reporting.
    pub fn sum_abs(&self) -> f64 {
        self.c.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// CSV with columns l, c_l.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,c_l\n");
        for (l, v) in self.c.iter().enumerate() {
            out.push_str(&format!("{},{:.16e}\n", l, v));
        }
        out
    }

    pub fn from_csv(path: &Path) -> Result<Self, NsError> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') || line.starts_with('l') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 {
                return Err(NsError::InvalidArgument(format!("bad coefficient line {line:?}")));
            }
            c.push(cols[1].parse::<f64>().map_err(|e| {
                NsError::InvalidArgument(format!("bad coefficient in {line:?}: {e}"))
            })?);
        }
        CoefficientSet::new(c)
    }
}

/// Node count policy: at least 8 quadrature nodes per oscillation
/// wavelength at k = 1, never fewer than 16.
pub fn nodes_for_radius(r: f64) -> usize {
    16usize.max((8.0 * r / PI).ceil() as usize)
}

/// Kernel f(r,s) = sum_{l<=L} c_l u_l(r) u_l(s); symmetric by construction.
pub fn build_f(c: &CoefficientSet, r: f64, s: f64) -> Result<f64, NsError> {
    let ur = riccati_bessel_u_all(c.l_max(), r)?;
    let us = riccati_bessel_u_all(c.l_max(), s)?;
    Ok(dot3(&c.c, &ur, &us))
}

fn dot3(c: &[f64], a: &[f64], b: &[f64]) -> f64 {
    c.iter().zip(a).zip(b).map(|((&c, &a), &b)| c * a * b).sum()
}

/// Per-radius Nystrom solution of the basic integral equation: K(r, t_j) at
/// interior Gauss-Legendre nodes, the natural Nystrom extension for the
/// trace K(r,r), and the conditioning of the discrete system.
#[derive(Debug, Clone)]
pub struct BasicSolution {
    pub r: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// K(r, t_j) at the quadrature nodes.
    pub k_values: Vec<f64>,
    /// K(r, r) via the Nystrom interpolant at s = r.
    pub trace: f64,
    pub condition: f64,
    pub smallest_singular: f64,
}

impl BasicSolution {
    /// Nystrom extension K(r, s) = f(r,s) - sum_j w_j K(r,t_j) f(t_j,s)/t_j^2.
    pub fn k_at(&self, c: &CoefficientSet, s: f64) -> Result<f64, NsError> {
        let us = riccati_bessel_u_all(c.l_max(), s)?;
        let ur = riccati_bessel_u_all(c.l_max(), self.r)?;
        let mut val = dot3(&c.c, &ur, &us);
        for ((&t, &w), &k) in self.nodes.iter().zip(&self.weights).zip(&self.k_values) {
            let ut = riccati_bessel_u_all(c.l_max(), t)?;
            val -= w * k * dot3(&c.c, &ut, &us) / (t * t);
        }
        Ok(val)
    }
}

struct NodeTables {
    rule: QuadratureRule,
    /// u[j][l] = u_l(t_j)
    u: Vec<Vec<f64>>,
}

fn node_tables(c: &CoefficientSet, r: f64, n_nodes: usize) -> Result<NodeTables, NsError> {
    let rule = gauss_legendre(n_nodes, 0.0, r)?;
    let u = rule
        .nodes
        .iter()
        .map(|&t| riccati_bessel_u_all(c.l_max(), t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NodeTables { rule, u })
}

fn nystrom_matrix(c: &CoefficientSet, tables: &NodeTables) -> DMatrix<f64> {
    let n = tables.rule.nodes.len();
    DMatrix::from_fn(n, n, |i, j| {
        let t = tables.rule.nodes[j];
        let w = tables.rule.weights[j];
        let f_ji = dot3(&c.c, &tables.u[j], &tables.u[i]);
        let delta = if i == j { 1.0 } else { 0.0 };
        delta + w * f_ji / (t * t)
    })
}

/// Solve the basic integral equation at radius r on `n_nodes` quadrature
/// nodes. A numerically singular discrete system is the breakdown event and
/// is reported as [`NsError::BasicEquationNotSolvable`].
pub fn solve_basic_equation(
    c: &CoefficientSet,
    r: f64,
    n_nodes: usize,
) -> Result<BasicSolution, NsError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(NsError::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    let tables = node_tables(c, r, n_nodes)?;
    let a = nystrom_matrix(c, &tables);
    let ur = riccati_bessel_u_all(c.l_max(), r)?;
    let rhs: Vec<f64> = tables.u.iter().map(|uj| dot3(&c.c, &ur, uj)).collect();
    let report = match solve_dense(&a, &rhs) {
        Ok(rep) => rep,
        Err(NumericsError::SingularSystem { smallest_singular }) => {
            return Err(NsError::BasicEquationNotSolvable {
                r,
                smallest_singular,
            })
        }
        Err(e) => return Err(e.into()),
    };
    // Natural Nystrom extension at s = r for the trace.
    let mut trace = dot3(&c.c, &ur, &ur);
    for ((&t, &w), (&k, uj)) in tables
        .rule
        .nodes
        .iter()
        .zip(&tables.rule.weights)
        .zip(report.solution.iter().zip(&tables.u))
    {
        trace -= w * k * dot3(&c.c, uj, &ur) / (t * t);
    }
    Ok(BasicSolution {
        r,
        nodes: tables.rule.nodes,
        weights: tables.rule.weights,
        k_values: report.solution,
        trace,
        condition: report.condition_estimate,
        smallest_singular: report.smallest_singular_value_estimate,
    })
}

fn fredholm_determinant(c: &CoefficientSet, r: f64, n_nodes: usize) -> Result<f64, NsError> {
    let tables = node_tables(c, r, n_nodes)?;
    Ok(dense_determinant(&nystrom_matrix(c, &tables)))
}

/// Cheap determinant-only scan for the first breakdown radius on
/// (0, r_max]: step along the radius, watch the Fredholm determinant's
/// sign, refine a sign change by bracketed root finding. Returns the
/// refined radius of the first singularity, or None when the equation
/// stays solvable throughout.
pub fn breakdown_scan(
    c: &CoefficientSet,
    r_max: f64,
    step: f64,
    refine_tol: f64,
) -> Result<Option<f64>, NsError> {
    if !(r_max > 0.0 && step > 0.0) {
        return Err(NsError::InvalidArgument("r_max and step must be positive".into()));
    }
    let mut prev: Option<(f64, f64)> = None;
    let mut i = 1usize;
    loop {
        let r = (i as f64 * step).min(r_max);
        let n = nodes_for_radius(r);
        let det = fredholm_determinant(c, r, n)?;
        if let Some((r_lo, d)) = prev {
            if d.signum() != det.signum() {
                let root = find_root_bracketed(
                    |x| fredholm_determinant(c, x, n).unwrap_or(0.0),
                    r_lo,
                    r,
                    refine_tol,
                )?;
                return Ok(Some(root));
            }
        }
        prev = Some((r, det));
        if r >= r_max {
            return Ok(None);
        }
        i += 1;
    }
}

/// Conditioning of the basic equation along a radius sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SolvabilityReport {
    pub r_grid: Vec<f64>,
    pub condition: Vec<f64>,
    pub smallest_singular: Vec<f64>,
    pub first_breakdown_radius: Option<f64>,
}

/// K(r, .) solutions over a radius grid, truncated at the first breakdown.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub entries: Vec<BasicSolution>,
    pub report: SolvabilityReport,
}

impl KernelField {
    pub fn trace(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.trace).collect()
    }
}

/// Solve the basic equation at every grid radius, watching the sign of the
/// Fredholm determinant. On a sign change (or a singular solve) the
/// breakdown radius is refined by bracketed root finding on the determinant
/// and the sweep stops; everything before it is returned.
pub fn assemble_kernel_field(c: &CoefficientSet, r_grid: &[f64]) -> Result<KernelField, NsError> {
    if r_grid.is_empty() || r_grid[0] <= 0.0 || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NsError::InvalidArgument(
            "radius grid must be positive and strictly increasing".into(),
        ));
    }
    let mut entries = Vec::with_capacity(r_grid.len());
    let mut report = SolvabilityReport {
        r_grid: Vec::new(),
        condition: Vec::new(),
        smallest_singular: Vec::new(),
        first_breakdown_radius: None,
    };
    let mut prev: Option<(f64, f64)> = None; // (r, det)
    for &r in r_grid {
        let n = nodes_for_radius(r);
        let det = fredholm_determinant(c, r, n)?;
        let crossed = matches!(prev, Some((_, d)) if d.signum() != det.signum());
        if crossed {
            let (r_lo, _) = prev.unwrap();
            let root = find_root_bracketed(
                |x| fredholm_determinant(c, x, n).unwrap_or(0.0),
                r_lo,
                r,
                1e-6,
            )?;
            report.first_breakdown_radius = Some(root);
            break;
        }
        match solve_basic_equation(c, r, n) {
            Ok(sol) => {
                report.r_grid.push(r);
                report.condition.push(sol.condition);
                report.smallest_singular.push(sol.smallest_singular);
                entries.push(sol);
                prev = Some((r, det));
            }
            Err(NsError::BasicEquationNotSolvable { r, .. }) => {
                // Singular without a determinant sign change: grazing
                // contact; report the grid radius itself.
                report.first_breakdown_radius = Some(r);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(KernelField { entries, report })
}

/// NS output potential on a radius grid.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub r_grid: Vec<f64>,
    /// q1(r) = -(2/r) d/dr (K(r,r)/r)
    pub q1: Vec<f64>,
    pub kk_trace: Vec<f64>,
    /// int_0^R r q1 dr, tail-averaged over the last oscillation window.
    pub moment_q1: f64,
    pub solvability: SolvabilityReport,
    /// True when the grid was cut short by a breakdown.
    pub partial: bool,
    pub l_max: u32,
    pub sum_abs_c: f64,
}

impl ReconstructionResult {
    /// CSV with columns r, K_rr, q1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,K_rr,q1\n");
        for i in 0..self.r_grid.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e}\n",
                self.r_grid[i], self.kk_trace[i], self.q1[i]
            ));
        }
        out
    }

    /// L_{1,1} norm of q1 over its grid (trapezoid).
    pub fn l11_norm(&self) -> f64 {
        let mut total = 0.0;
        for i in 1..self.r_grid.len() {
            let f0 = self.r_grid[i - 1] * self.q1[i - 1].abs();
            let f1 = self.r_grid[i] * self.q1[i].abs();
            total += 0.5 * (f0 + f1) * (self.r_grid[i] - self.r_grid[i - 1]);
        }
        total
    }
}

/// Integral of the parabola through (xs, ys) over [a, b].
fn parabola_integral(xs: [f64; 3], ys: [f64; 3], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..3 {
        let (xi, xj, xk) = (xs[i], xs[(i + 1) % 3], xs[(i + 2) % 3]);
        let denom = (xi - xj) * (xi - xk);
        // int (x-xj)(x-xk) dx on [a,b]
        let anti = |x: f64| x * x * x / 3.0 - (xj + xk) * x * x / 2.0 + xj * xk * x;
        total += ys[i] * (anti(b) - anti(a)) / denom;
    }
    total
}

/// Cumulative integral of g(s) = s * q1(s) from 0 to each grid point: a
/// quadratic head extrapolation on (0, r_0) plus piecewise-parabolic
/// integration between samples.
fn cumulative_moment(rs: &[f64], q1: &[f64]) -> Vec<f64> {
    let n = rs.len();
    let g: Vec<f64> = rs.iter().zip(q1).map(|(&r, &q)| r * q).collect();
    let mut out = vec![0.0; n];
    // Head: s*q1 is smooth up to s = 0 even when q1 ~ C/r.
    out[0] = parabola_integral([rs[0], rs[1], rs[2]], [g[0], g[1], g[2]], 0.0, rs[0]);
    for i in 1..n {
        let j = if i == 1 { 0 } else { i - 2 };
        out[i] = out[i - 1]
            + parabola_integral(
                [rs[j], rs[j + 1], rs[j + 2]],
                [g[j], g[j + 1], g[j + 2]],
                rs[i - 1],
                rs[i],
            );
    }
    out
}

/// Limit of the cumulative moment M(R) as R -> infinity. The truncation
/// error behaves like g(R)/R with g oscillating at wavelength pi around a
/// nonzero mean, so a plain tail value (or tail mean) is only O(1/R).
/// Averaging over two adjacent 2 pi windows kills the oscillation, and
/// Richardson extrapolation in 1/R removes the mean, leaving O(1/R^2).
fn extrapolate_moment(rs: &[f64], cumulative: &[f64]) -> f64 {
    let r_end = *rs.last().unwrap();
    let w = 2.0 * PI;
    let window = |lo: f64, hi: f64| -> Option<(f64, f64)> {
        let mut sum_m = 0.0;
        let mut sum_x = 0.0;
        let mut n = 0usize;
        for (&r, &m) in rs.iter().zip(cumulative) {
            if r >= lo && r < hi {
                sum_m += m;
                sum_x += 1.0 / r;
                n += 1;
            }
        }
        (n > 3).then(|| (sum_m / n as f64, sum_x / n as f64))
    };
    match (
        window(r_end - w, r_end + 1e-9),
        window(r_end - 2.0 * w, r_end - w),
    ) {
        (Some((a1, x1)), Some((a2, x2))) if (x1 - x2).abs() > 1e-12 => {
            let g = (a1 - a2) / (x1 - x2);
            a1 - g * x1
        }
        _ => *cumulative.last().unwrap(),
    }
}

/// Extract the NS potential on a radius grid. If a breakdown occurs the
/// result covers the grid up to the breakdown and is marked partial; a
/// breakdown before the third grid point makes reconstruction impossible.
pub fn reconstruct_potential(
    c: &CoefficientSet,
    r_grid: &[f64],
) -> Result<ReconstructionResult, NsError> {
    let field = assemble_kernel_field(c, r_grid)?;
    if let Some(b) = field.report.first_breakdown_radius {
        if field.entries.len() < 3 {
            return Err(NsError::ReconstructionImpossible(format!(
                "breakdown at r = {b} before the third grid point"
            )));
        }
    }
    if field.entries.len() < 5 {
        return Err(NsError::ReconstructionImpossible(
            "fewer than 5 usable grid points".into(),
        ));
    }
    let rs: Vec<f64> = field.entries.iter().map(|e| e.r).collect();
    let trace = field.trace();
    let g: Vec<f64> = rs.iter().zip(&trace).map(|(&r, &t)| t / r).collect();
    let dg = differentiate_grid(&rs, &g)?;
    let q1: Vec<f64> = rs.iter().zip(&dg).map(|(&r, &d)| -2.0 * d / r).collect();
    let cumulative = cumulative_moment(&rs, &q1);
    let moment_q1 = extrapolate_moment(&rs, &cumulative);
    Ok(ReconstructionResult {
        r_grid: rs,
        q1,
        kk_trace: trace,
        moment_q1,
        partial: field.report.first_breakdown_radius.is_some(),
        solvability: field.report,
        l_max: c.l_max(),
        sum_abs_c: c.sum_abs(),
    })
}

/// Internal-consistency residual of the potential extraction:
/// max over the grid of |K(r,r) + (r/2) int_0^r s q1 ds| / (1 + |K(r,r)|).
pub fn kk_consistency(result: &ReconstructionResult) -> f64 {
    let cumulative = cumulative_moment(&result.r_grid, &result.q1);
    result
        .r_grid
        .iter()
        .zip(&result.kk_trace)
        .zip(&cumulative)
        .map(|((&r, &kk), &m)| (kk + 0.5 * r * m).abs() / (1.0 + kk.abs()))
        .fold(0.0, f64::max)
}

fn entry_at(
    c: &CoefficientSet,
    field: &KernelField,
    r: f64,
) -> Result<BasicSolution, NsError> {
    if let Some(b) = field.report.first_breakdown_radius {
        if r >= b {
            return Err(NsError::NotAvailable { r, breakdown: b });
        }
    }
    if let Some(e) = field.entries.iter().find(|e| (e.r - r).abs() < 1e-9) {
        return Ok(e.clone());
    }
    solve_basic_equation(c, r, nodes_for_radius(r))
}

/// Transformation function phi_l(r) = u_l(r) - int_0^r K(r,t) u_l(t) dt/t^2
/// by quadrature over the stored kernel nodes.
pub fn phi_from_k(
    c: &CoefficientSet,
    field: &KernelField,
    l: u32,
    r: f64,
) -> Result<f64, NsError> {
    let entry = entry_at(c, field, r)?;
    phi_from_entry(&entry, l, r)
}

fn phi_from_entry(entry: &BasicSolution, l: u32, r: f64) -> Result<f64, NsError> {
    let mut phi = riccati_bessel_u(l, r)?;
    for ((&t, &w), &k) in entry.nodes.iter().zip(&entry.weights).zip(&entry.k_values) {
        phi -= w * k * riccati_bessel_u(l, t)? / (t * t);
    }
    Ok(phi)
}

/// Phase shifts generated by the NS output, read from the large-r behavior
/// of phi_l by the same two-radius projection the forward solver uses.
pub fn shifts_from_phi(
    c: &CoefficientSet,
    field: &KernelField,
    l_max: u32,
    match_radius: f64,
) -> Result<PhaseShiftSet, NsError> {
    let r1 = match_radius;
    let r2 = match_radius + FRAC_PI_4;
    let e1 = entry_at(c, field, r1)?;
    let e2 = entry_at(c, field, r2)?;
    let mut deltas = Vec::with_capacity(l_max as usize + 1);
    let mut jost = Vec::with_capacity(l_max as usize + 1);
    for l in 0..=l_max {
        let phi1 = phi_from_entry(&e1, l, r1)?;
        let phi2 = phi_from_entry(&e2, l, r2)?;
        let (delta, amp) = project_onto_free(l, r1, phi1, r2, phi2)?;
        deltas.push(delta);
        jost.push(amp);
    }
    Ok(PhaseShiftSet {
        deltas,
        jost_magnitudes: jost,
        l_max,
        match_radius,
    })
}

/// Result of fitting coefficients to target phase shifts.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub coefficients: CoefficientSet,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Least-squares inversion of the forward map c -> delta through the NS
/// machinery itself, in tan-space: minimize
/// sum_l (tan delta_l(c) - tan delta_l^target)^2.
///
/// Before each evaluation the basic equation's solvability is checked on a
/// coarse sweep up to the matching radius; a trial c that breaks the sweep
/// is an infeasible step and, if the fitter cannot back away, surfaces as
/// [`NsError::FitStepFailed`] carrying the breakdown radius.
pub fn fit_coefficients(
    target: &PhaseShiftSet,
    l_max: u32,
    initial: &CoefficientSet,
    match_radius: f64,
) -> Result<FitOutcome, NsError> {
    fit_coefficients_damped(target, l_max, initial, match_radius, 0.0)
}

/// [`fit_coefficients`] with a ridge penalty `ridge * c_l` appended to the
/// residual. The forward map flattens out in several coefficient
/// directions (near-transparent combinations), so an unpenalized fit can
/// wander to huge c that barely improve the shifts while making the output
/// potential violent; a small ridge keeps the fit on the moderate sheet.
pub fn fit_coefficients_damped(
    target: &PhaseShiftSet,
    l_max: u32,
    initial: &CoefficientSet,
    match_radius: f64,
    ridge: f64,
) -> Result<FitOutcome, NsError> {
    if target.deltas.len() < l_max as usize + 1 {
        return Err(NsError::InvalidArgument(format!(
            "target has {} shifts, need {}",
            target.deltas.len(),
            l_max + 1
        )));
    }
    let target_tan: Vec<f64> = target.deltas[..=l_max as usize]
        .iter()
        .map(|d| d.tan())
        .collect();
    let mut initial_c = initial.c.clone();
    initial_c.resize(l_max as usize + 1, 0.0);
    let residual = |params: &[f64]| -> Result<Vec<f64>, NsError> {
        let c = CoefficientSet::new(params.to_vec())?;
        let shifts = ns_shifts_checked(&c, l_max, match_radius)?;
        let mut res: Vec<f64> = shifts
            .deltas
            .iter()
            .zip(&target_tan)
            .map(|(d, t)| d.tan() - t)
            .collect();
        if ridge > 0.0 {
            res.extend(params.iter().map(|&p| ridge * p));
        }
        Ok(res)
    };
    let out = least_squares_fit(residual, &initial_c, &FitOptions::default());
    match out {
        Ok(fit) => Ok(FitOutcome {
            coefficients: CoefficientSet::new(fit.params)?,
            residual_norm: fit.residual_norm,
            iterations: fit.iterations,
        }),
        Err(FitError::FitStepFailed { inner }) => {
            let breakdown = match &inner {
                NsError::BasicEquationNotSolvable { r, .. } => Some(*r),
                NsError::NotAvailable { breakdown, .. } => Some(*breakdown),
                _ => None,
            };
            Err(NsError::FitStepFailed {
                breakdown_radius: breakdown,
                detail: inner.to_string(),
            })
        }
        Err(e) => Err(NsError::FitStepFailed {
            breakdown_radius: None,
            detail: e.to_string(),
        }),
    }
}

/// Shifts for a trial coefficient set, with a coarse solvability sweep up to
/// the matching radius first.
fn ns_shifts_checked(
    c: &CoefficientSet,
    l_max: u32,
    match_radius: f64,
) -> Result<PhaseShiftSet, NsError> {
    if c.max_abs() > 0.0 {
        if let Some(root) = breakdown_scan(c, match_radius + FRAC_PI_4, 0.5, 1e-4)? {
            return Err(NsError::BasicEquationNotSolvable {
                r: root,
                smallest_singular: 0.0,
            });
        }
    }
    let empty = KernelField {
        entries: Vec::new(),
        report: SolvabilityReport {
            r_grid: Vec::new(),
            condition: Vec::new(),
            smallest_singular: Vec::new(),
            first_breakdown_radius: None,
        },
    };
    shifts_from_phi(c, &empty, l_max, match_radius)
}

/// Least-squares slope of |K(r,r)| against r over the last half of the
/// grid; the testable proxy for bounded-trace behavior.
pub fn trace_slope_proxy(result: &ReconstructionResult) -> f64 {
    let n = result.r_grid.len();
    let start = n / 2;
    let rs = &result.r_grid[start..];
    let ys: Vec<f64> = result.kk_trace[start..].iter().map(|k| k.abs()).collect();
    let m = rs.len() as f64;
    let mean_r = rs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, y) in rs.iter().zip(&ys) {
        num += (r - mean_r) * (y - mean_y);
        den += (r - mean_r) * (r - mean_r);
    }
    num / den
}
