//! Shared numerical primitives: Gauss-Legendre quadrature, dense linear
//! solves with condition estimates, grid differentiation, bracketed
//! root-finding and a damped least-squares fitter.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerically singular system (smallest singular value estimate {smallest_singular:.3e})")]
    SingularSystem { smallest_singular: f64 },
    #[error("no sign change on the given bracket")]
    NoBracket,
}

/// Failure modes of [`least_squares_fit`]. The residual closure's own error
/// type is carried through unchanged.
#[derive(Debug, Error)]
pub enum FitError<E: std::fmt::Display + std::fmt::Debug> {
    #[error("residual evaluation failed: {inner}")]
    FitStepFailed { inner: E },
    #[error("residual length {m} smaller than parameter count {p}")]
    Underdetermined { m: usize, p: usize },
    #[error("non-finite residual at initial parameters")]
    NonFiniteResidual,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A fixed quadrature rule on an interval (a, b).
///
/// Nodes are strictly interior and strictly increasing; weights sum to the
/// interval length.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre rule with `n` nodes on (a, b); exact for polynomials of
/// degree 2n - 1.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule, NumericsError> {
    if n == 0 {
        return Err(NumericsError::InvalidArgument("n must be >= 1".into()));
    }
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(NumericsError::InvalidArgument(format!(
            "bad interval ({a}, {b})"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Recurrence for P_n(x) and P_{n-1}(x).
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        // Map from (-1, 1) to (a, b). cos() guesses start near +1, so x
        // descends with i; store symmetric pairs from both ends.
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Solution of a dense linear system together with conditioning data.
#[derive(Debug, Clone)]
pub struct LinearSolveReport {
    pub solution: Vec<f64>,
    /// Estimate of cond_1(A), accurate to within roughly a factor of 10.
    pub condition_estimate: f64,
    pub smallest_singular_value_estimate: f64,
}

const SINGULARITY_FACTOR: f64 = 1e-10;

/// LU solve with a Hager-style 1-norm condition estimate. For systems of
/// order <= 200 that look near-singular the estimate is refined by an exact
/// SVD before declaring [`NumericsError::SingularSystem`].
pub fn solve_dense(a: &DMatrix<f64>, b: &[f64]) -> Result<LinearSolveReport, NumericsError> {
    let n = a.nrows();
    if n != a.ncols() || n != b.len() {
        return Err(NumericsError::InvalidArgument(
            "matrix must be square and match rhs length".into(),
        ));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::InvalidArgument(
            "non-finite matrix entry".into(),
        ));
    }
    let norm_a = matrix_norm_1(a);
    let norm_a_inf = matrix_norm_inf(a);
    let lu = a.clone().lu();
    let lu_t = a.transpose().lu();
    let inv_norm = match invnorm_1_estimate(&lu, &lu_t, n) {
        Some(v) => v,
        None => {
            // LU solve failed outright: exactly singular pivot.
            return Err(NumericsError::SingularSystem {
                smallest_singular: 0.0,
            });
        }
    };
    let mut smallest = if inv_norm > 0.0 { 1.0 / inv_norm } else { 0.0 };
    let threshold = SINGULARITY_FACTOR * norm_a_inf;
    if n <= 200 && smallest < 100.0 * threshold {
        // Near-singular per the cheap estimate: settle it with an exact SVD.
        let sv = a.clone().svd(false, false).singular_values;
        smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    if smallest < threshold {
        return Err(NumericsError::SingularSystem {
            smallest_singular: smallest,
        });
    }
    let bv = DVector::from_column_slice(b);
    let mut x = lu
        .solve(&bv)
        .ok_or(NumericsError::SingularSystem {
            smallest_singular: smallest,
        })?;
    // One step of iterative refinement keeps the residual at rounding level.
    let r = &bv - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(LinearSolveReport {
        solution: x.iter().cloned().collect(),
        condition_estimate: (norm_a * inv_norm).max(1.0),
        smallest_singular_value_estimate: smallest,
    })
}

/// Determinant via LU; used to track sign changes of the Fredholm
/// determinant along a radius sweep.
pub fn dense_determinant(a: &DMatrix<f64>) -> f64 {
    a.clone().lu().determinant()
}

fn matrix_norm_1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn matrix_norm_inf(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's estimator for ||A^{-1}||_1 from the LU factors of A and A^T.
fn invnorm_1_estimate(
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
) -> Option<f64> {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0f64;
    for _ in 0..5 {
        let y = lu.solve(&x)?;
        est = est.max(y.iter().map(|v| v.abs()).sum::<f64>());
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = lu_t.solve(&xi)?;
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v.abs()))
            .fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[jmax] = 1.0;
    }
    Some(est)
}

/// Derivative samples on a strictly increasing grid, using five-point
/// Fornberg stencils (O(h^4) in the interior, one-sided at the ends).
pub fn differentiate_grid(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let n = xs.len();
    if n < 5 || ys.len() != n {
        return Err(NumericsError::InvalidArgument(
            "need at least 5 matching samples".into(),
        ));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NumericsError::InvalidArgument(
            "grid must be strictly increasing".into(),
        ));
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let start = i.saturating_sub(2).min(n - 5);
        let stencil = &xs[start..start + 5];
        let w = fd_weights(xs[i], stencil, 1);
        out[i] = w
            .iter()
            .zip(&ys[start..start + 5])
            .map(|(&wi, &yi)| wi * yi)
            .sum();
    }
    Ok(out)
}

/// Fornberg finite-difference weights for the m-th derivative at `x0` on the
/// nodes `xs`.
pub fn fd_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Bracketed root finding (bisection with secant acceleration). Requires a
/// sign change on [a, b]; returns a point with bracket width <= tol.
pub fn find_root_bracketed<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, NumericsError> {
    let (mut lo, mut hi) = (a, b);
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 || !flo.is_finite() || !fhi.is_finite() {
        return Err(NumericsError::NoBracket);
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        // Secant candidate, clamped away from the bracket ends.
        let mut mid = (lo * fhi - hi * flo) / (fhi - flo);
        let margin = 0.1 * (hi - lo);
        if !(mid > lo + margin && mid < hi - margin) {
            mid = 0.5 * (lo + hi);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if flo * fmid < 0.0 {
            hi = mid;
            fhi = fmid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when the residual norm improves by less than this relative
    /// amount over an iteration.
    pub relative_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            relative_tolerance: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Levenberg-Marquardt with a forward-difference Jacobian.
///
/// The residual closure may fail (for trial parameters that make an inner
/// solve impossible); failures at trial steps are treated as rejected steps
/// and raise the damping, so the fitter backs away from infeasible regions.
/// A failure at the initial parameters, or persistent failure under maximal
/// damping, is surfaced as [`FitError::FitStepFailed`].
pub fn least_squares_fit<F, E>(
    mut residual: F,
    initial: &[f64],
    options: &FitOptions,
) -> Result<FitResult, FitError<E>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: std::fmt::Display + std::fmt::Debug,
{
    let p = initial.len();
    let mut params = initial.to_vec();
    let mut res = residual(&params).map_err(|inner| FitError::FitStepFailed { inner })?;
    let m = res.len();
    if m < p {
        return Err(FitError::Underdetermined { m, p });
    }
    if res.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFiniteResidual);
    }
    let mut norm = l2(&res);
    let mut lambda = options.initial_damping;
    let mut iterations = 0;
    if norm == 0.0 || p == 0 {
        return Ok(FitResult {
            params,
            residual_norm: norm,
            iterations,
        });
    }
    'outer: for _ in 0..options.max_iterations {
        iterations += 1;
        // Forward-difference Jacobian; a failed probe shrinks the step once
        // before giving up on the whole fit.
        let mut jac = DMatrix::zeros(m, p);
        for j in 0..p {
            let scale = 1e-7 * (1.0 + params[j].abs());
            let mut probe = params.clone();
            probe[j] += scale;
            let rj = match residual(&probe) {
                Ok(r) => r,
                Err(_) => {
                    probe[j] = params[j] - scale;
                    residual(&probe).map_err(|inner| FitError::FitStepFailed { inner })?
                }
            };
            let sign = if probe[j] > params[j] { 1.0 } else { -1.0 };
            for i in 0..m {
                jac[(i, j)] = sign * (rj[i] - res[i]) / scale;
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&res);
        if g.amax() < 1e-14 * (1.0 + norm) {
            break;
        }
        let mut last_err: Option<E> = None;
        for _ in 0..25 {
            let mut a = jtj.clone();
            for j in 0..p {
                a[(j, j)] += lambda * (jtj[(j, j)].abs() + 1e-12);
            }
            let step = match solve_dense(&a, g.as_slice()) {
                Ok(rep) => rep.solution,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(&step).map(|(x, s)| x - s).collect();
            match residual(&trial) {
                Ok(r) if r.iter().all(|v| v.is_finite()) => {
                    let trial_norm = l2(&r);
                    if trial_norm < norm {
                        let improvement = (norm - trial_norm) / norm.max(1e-300);
                        params = trial;
                        res = r;
                        norm = trial_norm;
                        lambda = (lambda * 0.3).max(1e-14);
                        if improvement < options.relative_tolerance || norm == 0.0 {
                            break 'outer;
                        }
                        continue 'outer;
                    }
                    lambda *= 10.0;
                }
                Ok(_) => lambda *= 10.0,
                Err(e) => {
                    last_err = Some(e);
                    lambda *= 10.0;
                }
            }
            if lambda > 1e12 {
                if let Some(inner) = last_err {
                    return Err(FitError::FitStepFailed { inner });
                }
                break 'outer;
            }
        }
        if lambda > 1e12 {
            break;
        }
    }
    Ok(FitResult {
        params,
        residual_norm: norm,
        iterations,
    })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_midpoint() {
        let rule = gauss_legendre(1, 0.0, 2.0).unwrap();
        assert!((rule.nodes[0] - 1.0).abs() < 1e-14);
        assert!((rule.weights[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_sin_integral() {
        let rule = gauss_legendre(20, 0.0, std::f64::consts::PI).unwrap();
        let val = rule.integrate(f64::sin);
        assert!((val - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_degree_five() {
        let rule = gauss_legendre(3, 0.0, 1.0).unwrap();
        let val = rule.integrate(|t| t.powi(5));
        assert!((val - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_rejects_bad_interval() {
        assert!(gauss_legendre(4, 0.0, f64::NAN).is_err());
        assert!(gauss_legendre(4, 1.0, 1.0).is_err());
        assert!(gauss_legendre(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn quadrature_weights_sum_to_length() {
        for n in [1, 2, 5, 16, 57] {
            let rule = gauss_legendre(n, -1.5, 4.0).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 5.5).abs() < 1e-12 * 5.5, "n={n}");
            assert!(rule.nodes.windows(2).all(|w| w[1] > w[0]));
            assert!(rule.nodes.iter().all(|&x| x > -1.5 && x < 4.0));
        }
    }

    #[test]
    fn solve_identity() {
        let a = DMatrix::identity(3, 3);
        let rep = solve_dense(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(rep.solution, vec![1.0, 2.0, 3.0]);
        assert!(rep.condition_estimate < 1.0 + 1e-12);
    }

    #[test]
    fn solve_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let rep = solve_dense(&a, &[2.0, 4.0]).unwrap();
        assert!((rep.solution[0] - 1.0).abs() < 1e-14);
        assert!((rep.solution[1] - 1.0).abs() < 1e-14);
        assert!((rep.condition_estimate - 2.0).abs() < 1e-10);
    }

    #[test]
    fn solve_singular_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match solve_dense(&a, &[1.0, 1.0]) {
            Err(NumericsError::SingularSystem { smallest_singular }) => {
                assert!(smallest_singular < 1e-12);
            }
            other => panic!("expected SingularSystem, got {other:?}"),
        }
    }

    #[test]
    fn hilbert_condition_matches_svd_oracle() {
        let n = 6;
        let a = DMatrix::from_fn(n, n, |i, j| 1.0 / (i as f64 + j as f64 + 1.0));
        let rep = solve_dense(&a, &vec![1.0; n]).unwrap();
        // Oracle: full SVD condition number, computed independently.
        let sv = a.clone().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let cond_svd = smax / smin;
        assert!(
            rep.condition_estimate > cond_svd / 10.0 && rep.condition_estimate < cond_svd * 10.0,
            "estimate {} vs svd {}",
            rep.condition_estimate,
            cond_svd
        );
    }

    #[test]
    fn differentiate_linear() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        let d = differentiate_grid(&xs, &ys).unwrap();
        assert!(d.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn differentiate_sin() {
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let d = differentiate_grid(&xs, &ys).unwrap();
        for i in 2..xs.len() - 2 {
            assert!((d[i] - xs[i].cos()).abs() < 1e-8, "at x={}", xs[i]);
        }
    }

    #[test]
    fn differentiate_rejects_non_monotone() {
        let xs = [0.0, 1.0, 0.5, 2.0, 3.0];
        let ys = [0.0; 5];
        assert!(differentiate_grid(&xs, &ys).is_err());
    }

    #[test]
    fn differentiation_order_at_least_3p5() {
        // Observed convergence order on exp(sin x) under grid refinement.
        let err_at = |h: f64| {
            let n = (2.0 / h) as usize;
            let xs: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
            let ys: Vec<f64> = xs.iter().map(|x| x.sin().exp()).collect();
            let d = differentiate_grid(&xs, &ys).unwrap();
            xs.iter()
                .zip(&d)
                .skip(2)
                .take(n - 4)
                .map(|(x, v)| (v - x.cos() * x.sin().exp()).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err_at(0.02);
        let e2 = err_at(0.01);
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn root_linear() {
        let r = find_root_bracketed(|t| t - 1.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn root_cosine() {
        let r = find_root_bracketed(f64::cos, 1.0, 2.0, 1e-12).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn root_requires_bracket() {
        assert!(matches!(
            find_root_bracketed(|t| t * t + 1.0, -1.0, 1.0, 1e-10),
            Err(NumericsError::NoBracket)
        ));
    }

    #[test]
    fn fit_scalar_offset() {
        let res = least_squares_fit::<_, std::convert::Infallible>(
            |p| Ok(vec![p[0] - 5.0]),
            &[0.0],
            &FitOptions::default(),
        )
        .unwrap();
        assert!((res.params[0] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn fit_linear_matches_normal_equations() {
        // Ax - b with A 3x2 full rank; normal-equation solution is exact.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_column_slice(&[1.0, 2.0, 2.5]);
        let res = least_squares_fit::<_, std::convert::Infallible>(
            |p| {
                let x = DVector::from_column_slice(p);
                Ok((&a * x - &b).iter().cloned().collect())
            },
            &[0.0, 0.0],
            &FitOptions::default(),
        )
        .unwrap();
        let ata = a.transpose() * &a;
        let atb = a.transpose() * &b;
        let exact = ata.lu().solve(&atb).unwrap();
        assert!((res.params[0] - exact[0]).abs() < 1e-10);
        assert!((res.params[1] - exact[1]).abs() < 1e-10);
    }

    #[test]
    fn fit_propagates_initial_failure() {
        #[derive(Debug)]
        struct Boom;
        impl std::fmt::Display for Boom {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "boom")
            }
        }
        let out = least_squares_fit(|_p| Err::<Vec<f64>, _>(Boom), &[1.0], &FitOptions::default());
        assert!(matches!(out, Err(FitError::FitStepFailed { .. })));
    }
}
