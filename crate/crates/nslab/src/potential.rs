//! Candidate potentials q(r) on (0, infinity), their weighted moment
//! Q = int r q dr and L_{1,1} norm int r |q| dr, plus a small catalog of
//! test potentials including deliberately non-analytic ones.

use crate::numerics::gauss_legendre;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_TRUNCATION_RADIUS: f64 = 80.0;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("potential is not in L_{{1,1}}: {0}")]
    NotInL11(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Tail model declared for tabulated potentials beyond their last sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// Identically zero beyond the grid.
    Zero,
    /// C r^{-p} matched to the last sample; requires p > 2 for L_{1,1}.
    Power(f64),
}

#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// depth * exp(-r)
    Exponential { depth: f64 },
    /// -v0 on (0, a), zero beyond
    SquareWell { v0: f64, a: f64 },
    /// exp(-r) - (4/9) exp(-2r/3); the coefficients solve the 2x2 moment
    /// system exactly, so Q = 0.
    ZeroMoment,
    /// depth * exp(-r) cut to zero at r = a (discontinuous, non-analytic)
    TruncatedExponential { depth: f64, a: f64 },
    /// depth * exp(-r) on (0, a], then depth * exp(-a) * exp(-2(r-a));
    /// continuous with a derivative jump at a (non-analytic)
    Kink { depth: f64, a: f64 },
    /// Samples on an increasing grid, linear interpolation in between.
    /// Below the first sample the value follows q_0 * r_0 / r when
    /// `singular_head` is set, otherwise the first sample is held.
    Tabulated {
        rs: Vec<f64>,
        qs: Vec<f64>,
        tail: Tail,
        singular_head: bool,
    },
}

#[derive(Debug, Clone)]
pub struct Potential {
    pub kind: PotentialKind,
    pub truncation_radius: f64,
}

/// Moment data for a potential: Q = int_0^inf r q dr and the L_{1,1} norm.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MomentReport {
    pub q_moment: f64,
    pub norm: f64,
    pub truncation_radius: f64,
    pub quadrature_error_estimate: f64,
}

impl Potential {
    pub fn new(kind: PotentialKind) -> Result<Self, PotentialError> {
        let p = Self {
            kind,
            truncation_radius: DEFAULT_TRUNCATION_RADIUS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Tabulated {
                rs: vec![1.0, 2.0],
                qs: vec![0.0, 0.0],
                tail: Tail::Zero,
                singular_head: false,
            },
            truncation_radius: DEFAULT_TRUNCATION_RADIUS,
        }
    }

    fn validate(&self) -> Result<(), PotentialError> {
        match &self.kind {
            PotentialKind::Tabulated { rs, qs, tail, .. } => {
                if rs.len() != qs.len() || rs.len() < 2 {
                    return Err(PotentialError::InvalidArgument(
                        "tabulated potential needs >= 2 matching samples".into(),
                    ));
                }
                if rs.windows(2).any(|w| w[1] <= w[0]) || rs[0] <= 0.0 {
                    return Err(PotentialError::InvalidArgument(
                        "tabulated grid must be positive and strictly increasing".into(),
                    ));
                }
                if let Tail::Power(p) = tail {
                    if *p <= 2.0 {
                        return Err(PotentialError::NotInL11(format!(
                            "declared tail exponent {p} <= 2 makes int r|q| diverge"
                        )));
                    }
                }
                Ok(())
            }
            PotentialKind::SquareWell { a, .. }
            | PotentialKind::TruncatedExponential { a, .. }
            | PotentialKind::Kink { a, .. } => {
                if *a <= 0.0 {
                    return Err(PotentialError::InvalidArgument("radius a must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Potential value at r > 0.
    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Exponential { depth } => depth * (-r).exp(),
            PotentialKind::SquareWell { v0, a } => {
                if r < *a {
                    -v0
                } else {
                    0.0
                }
            }
            PotentialKind::ZeroMoment => (-r).exp() - 4.0 / 9.0 * (-2.0 * r / 3.0).exp(),
            PotentialKind::TruncatedExponential { depth, a } => {
                if r < *a {
                    depth * (-r).exp()
                } else {
                    0.0
                }
            }
            PotentialKind::Kink { depth, a } => {
                if r <= *a {
                    depth * (-r).exp()
                } else {
                    depth * (-a).exp() * (-2.0 * (r - a)).exp()
                }
            }
            PotentialKind::Tabulated {
                rs,
                qs,
                tail,
                singular_head,
            } => {
                let n = rs.len();
                if r < rs[0] {
                    return if *singular_head { qs[0] * rs[0] / r } else { qs[0] };
                }
                if r > rs[n - 1] {
                    return match tail {
                        Tail::Zero => 0.0,
                        Tail::Power(p) => qs[n - 1] * (rs[n - 1] / r).powf(*p),
                    };
                }
                let idx = match rs.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
                    Ok(i) => return qs[i],
                    Err(i) => i - 1,
                };
                let t = (r - rs[idx]) / (rs[idx + 1] - rs[idx]);
                qs[idx] * (1.0 - t) + qs[idx + 1] * t
            }
        }
    }

    /// Tabulated potential from reconstructed samples; the grid head is
    /// declared 1/r-singular, the tail zero beyond the last sample.
    pub fn from_samples(rs: Vec<f64>, qs: Vec<f64>) -> Result<Self, PotentialError> {
        Potential::new(PotentialKind::Tabulated {
            rs,
            qs,
            tail: Tail::Zero,
            singular_head: true,
        })
    }

    /// Load a tabulated potential from two-column CSV (r, q). A header line
    /// is skipped if the first field does not parse as a number.
    pub fn from_csv(path: &Path, tail: Tail) -> Result<Self, PotentialError> {
        let text = std::fs::read_to_string(path)?;
        let mut rs = Vec::new();
        let mut qs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(',').map(str::trim);
            let (c1, c2) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
            match (c1.parse::<f64>(), c2.parse::<f64>()) {
                (Ok(r), Ok(q)) => {
                    rs.push(r);
                    qs.push(q);
                }
                _ if lineno == 0 => continue, // header
                _ => {
                    return Err(PotentialError::InvalidArgument(format!(
                        "unparseable CSV line {}: {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Potential::new(PotentialKind::Tabulated {
            rs,
            qs,
            tail,
            singular_head: false,
        })
    }
}

/// Named catalog entries.
///
/// `truncated-exponential` and `kink` are deliberately not restrictions of
/// analytic functions to (0, infinity).
pub fn catalog(name: &str, params: &BTreeMap<String, f64>) -> Result<Potential, PotentialError> {
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    let kind = match name {
        "zero" => return Ok(Potential::zero()),
        "exponential" => PotentialKind::Exponential {
            depth: get("depth", 1.0),
        },
        "square-well" => PotentialKind::SquareWell {
            v0: get("v0", 2.0),
            a: get("a", 1.0),
        },
        "zero-moment" => PotentialKind::ZeroMoment,
        "truncated-exponential" => PotentialKind::TruncatedExponential {
            depth: get("depth", 1.0),
            a: get("a", 3.0),
        },
        "kink" => PotentialKind::Kink {
            depth: get("depth", 1.0),
            a: get("a", 2.0),
        },
        other => {
            return Err(PotentialError::InvalidArgument(format!(
                "unknown catalog potential {other:?}"
            )))
        }
    };
    Potential::new(kind)
}

/// Q = int_0^inf r q dr and the L_{1,1} norm by panelwise Gauss-Legendre
/// quadrature on (0, truncation_radius) plus the declared analytic tail.
pub fn weighted_moment(q: &Potential) -> Result<MomentReport, PotentialError> {
    let r_max = q.truncation_radius;
    // Panels aligned with any discontinuity the catalog families carry.
    let mut cuts = vec![0.0];
    match &q.kind {
        PotentialKind::SquareWell { a, .. }
        | PotentialKind::TruncatedExponential { a, .. }
        | PotentialKind::Kink { a, .. } => {
            if *a < r_max {
                cuts.push(*a);
            }
        }
        PotentialKind::Tabulated { rs, .. } => {
            if *rs.last().unwrap() < r_max {
                cuts.push(*rs.last().unwrap());
            }
        }
        _ => {}
    }
    cuts.push(r_max);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let panel_integral = |f: &dyn Fn(f64) -> f64, n: usize| -> f64 {
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mut x = lo;
            while x < hi - 1e-12 {
                let next = (x + 1.0).min(hi);
                let rule = gauss_legendre(n, x, next).expect("valid panel");
                total += rule.integrate(f);
                x = next;
            }
        }
        total
    };
    let fq = |r: f64| r * q.eval(r);
    let fabs = |r: f64| r * q.eval(r).abs();
    let moment = panel_integral(&fq, 24);
    let norm = panel_integral(&fabs, 24);
    // Refinement difference as the quadrature error estimate.
    let moment_coarse = panel_integral(&fq, 16);
    let norm_coarse = panel_integral(&fabs, 16);
    let tail = tail_moment(q, r_max)?;
    let err = (moment - moment_coarse).abs().max((norm - norm_coarse).abs()) + tail.2;
    Ok(MomentReport {
        q_moment: moment + tail.0,
        norm: norm + tail.1,
        truncation_radius: r_max,
        quadrature_error_estimate: err,
    })
}

/// (tail moment, tail norm, tail error) beyond r_max in closed form.
fn tail_moment(q: &Potential, r_max: f64) -> Result<(f64, f64, f64), PotentialError> {
    match &q.kind {
        PotentialKind::Exponential { depth } => {
            let t = depth * (1.0 + r_max) * (-r_max).exp();
            Ok((t, t.abs(), 1e-16 * t.abs()))
        }
        PotentialKind::ZeroMoment => {
            let t1 = (1.0 + r_max) * (-r_max).exp();
            let b = 2.0 / 3.0;
            let t2 = -4.0 / 9.0 * (r_max / b + 1.0 / (b * b)) * (-b * r_max).exp();
            Ok((t1 + t2, t1.abs() + t2.abs(), 1e-16))
        }
        PotentialKind::Kink { depth, a } => {
            if *a >= r_max {
                let t = depth * (1.0 + r_max) * (-r_max).exp();
                return Ok((t, t.abs(), 1e-16 * t.abs()));
            }
            // depth e^{-a} int_{R}^inf r e^{-2(r-a)} dr
            let c = depth * (-a).exp() * (2.0 * a).exp();
            let t = c * (r_max / 2.0 + 0.25) * (-2.0 * r_max).exp();
            Ok((t, t.abs(), 1e-16 * t.abs()))
        }
        PotentialKind::SquareWell { .. } | PotentialKind::TruncatedExponential { .. } => {
            Ok((0.0, 0.0, 0.0))
        }
        PotentialKind::Tabulated { rs, qs, tail, .. } => {
            let rn = *rs.last().unwrap();
            if rn >= r_max {
                return Ok((0.0, 0.0, 0.0));
            }
            match tail {
                Tail::Zero => Ok((0.0, 0.0, 0.0)),
                Tail::Power(p) => {
                    // int_R^inf r C (rn/r)^p dr with C = last sample.
                    let c = *qs.last().unwrap();
                    let t = c * rn.powf(*p) * r_max.powf(2.0 - p) / (p - 2.0);
                    Ok((t, t.abs(), 1e-3 * t.abs()))
                }
            }
        }
    }
}

/// L_{1,1} distance int r |a(r) - b(r)| dr over (0, r_max) on a fine
/// trapezoid grid.
pub fn l11_distance(a: &Potential, b: &Potential, r_max: f64, step: f64) -> f64 {
    let n = (r_max / step).ceil() as usize;
    let mut total = 0.0;
    let mut prev = 0.0;
    let mut prev_r = 0.0;
    for i in 1..=n {
        let r = i as f64 * step;
        let val = r * (a.eval(r) - b.eval(r)).abs();
        total += 0.5 * (val + prev) * (r - prev_r);
        prev = val;
        prev_r = r;
    }
    total
}
