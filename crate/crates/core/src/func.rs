//! Scalar function specifications for price and offset costs.
//!
//! Three closed-form kinds are supported: affine, quadratic, and tabulated
//! piecewise-linear. Every kind exposes exact evaluation, an exact Lipschitz
//! constant on an interval, an exact antiderivative, and a monotonicity
//! check. Tabulated functions are extended as constants outside their
//! breakpoint range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar function given in closed form or as a tabulated polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionSpec {
    /// `c0 + c1 * s`
    Affine { c0: f64, c1: f64 },
    /// `c0 + c1 * s + c2 * s^2`
    Quadratic { c0: f64, c1: f64, c2: f64 },
    /// Linear interpolation through `(breakpoints[j], values[j])`, constant
    /// outside the breakpoint range.
    TabulatedPiecewiseLinear {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Grid resolution used by the monotonicity check, as a fraction of the
/// interval length.
const MONOTONE_GRID_STEP: f64 = 1e-3;

impl FunctionSpec {
    /// Constant function.
    pub fn constant(c: f64) -> Self {
        FunctionSpec::Affine { c0: c, c1: 0.0 }
    }

    /// Checks that the coefficients define a usable function.
    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionSpec::Affine { c0, c1 } => {
                if !c0.is_finite() || !c1.is_finite() {
                    return Err(Error::invalid("affine coefficients must be finite"));
                }
            }
            FunctionSpec::Quadratic { c0, c1, c2 } => {
                if !c0.is_finite() || !c1.is_finite() || !c2.is_finite() {
                    return Err(Error::invalid("quadratic coefficients must be finite"));
                }
            }
            FunctionSpec::TabulatedPiecewiseLinear {
                breakpoints,
                values,
            } => {
                if breakpoints.len() < 2 {
                    return Err(Error::invalid("tabulated function needs >= 2 breakpoints"));
                }
                if breakpoints.len() != values.len() {
                    return Err(Error::invalid(
                        "tabulated breakpoints and values must have equal length",
                    ));
                }
                if breakpoints.iter().any(|x| !x.is_finite())
                    || values.iter().any(|v| !v.is_finite())
                {
                    return Err(Error::invalid("tabulated data must be finite"));
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid(
                        "tabulated breakpoints must be strictly increasing",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the function at `s`.
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            FunctionSpec::Affine { c0, c1 } => c0 + c1 * s,
            FunctionSpec::Quadratic { c0, c1, c2 } => c0 + s * (c1 + c2 * s),
            FunctionSpec::TabulatedPiecewiseLinear {
                breakpoints,
                values,
            } => {
                let n = breakpoints.len();
                if s <= breakpoints[0] {
                    return values[0];
                }
                if s >= breakpoints[n - 1] {
                    return values[n - 1];
                }
                // First breakpoint strictly above s.
                let hi = breakpoints.partition_point(|&b| b <= s);
                let (x0, x1) = (breakpoints[hi - 1], breakpoints[hi]);
                let (v0, v1) = (values[hi - 1], values[hi]);
                let t = (s - x0) / (x1 - x0);
                v0 + t * (v1 - v0)
            }
        }
    }

    /// Exact Lipschitz constant on `[lo, hi]`.
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        match self {
            FunctionSpec::Affine { c1, .. } => c1.abs(),
            FunctionSpec::Quadratic { c1, c2, .. } => {
                // Derivative c1 + 2 c2 s is affine, so its max modulus on an
                // interval is attained at an endpoint.
                (c1 + 2.0 * c2 * lo).abs().max((c1 + 2.0 * c2 * hi).abs())
            }
            FunctionSpec::TabulatedPiecewiseLinear {
                breakpoints,
                values,
            } => {
                let mut lip: f64 = 0.0;
                for j in 0..breakpoints.len() - 1 {
                    let (x0, x1) = (breakpoints[j], breakpoints[j + 1]);
                    if x1 <= lo || x0 >= hi {
                        continue;
                    }
                    lip = lip.max(((values[j + 1] - values[j]) / (x1 - x0)).abs());
                }
                lip
            }
        }
    }

    /// Maximum of `|f|` on `[lo, hi]`.
    pub fn max_abs_on(&self, lo: f64, hi: f64) -> f64 {
        let mut candidates = vec![lo, hi];
        match self {
            FunctionSpec::Affine { .. } => {}
            FunctionSpec::Quadratic { c1, c2, .. } => {
                if *c2 != 0.0 {
                    let vertex = -c1 / (2.0 * c2);
                    if vertex > lo && vertex < hi {
                        candidates.push(vertex);
                    }
                }
            }
            FunctionSpec::TabulatedPiecewiseLinear { breakpoints, .. } => {
                candidates.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
            }
        }
        candidates
            .into_iter()
            .map(|s| self.eval(s).abs())
            .fold(0.0, f64::max)
    }

    /// Whether the function is nondecreasing on `[lo, hi]`.
    ///
    /// Checked on a uniform grid of resolution `1e-3 * (hi - lo)` augmented
    /// with the kind's critical points (breakpoints, quadratic vertex), which
    /// makes the check exact for all three kinds up to fp roundoff.
    pub fn is_nondecreasing_on(&self, lo: f64, hi: f64) -> bool {
        if hi <= lo {
            return true;
        }
        let mut pts = Vec::new();
        let step = MONOTONE_GRID_STEP * (hi - lo);
        let mut s = lo;
        while s < hi {
            pts.push(s);
            s += step;
        }
        pts.push(hi);
        match self {
            FunctionSpec::Affine { .. } => {}
            FunctionSpec::Quadratic { c1, c2, .. } => {
                if *c2 != 0.0 {
                    let vertex = -c1 / (2.0 * c2);
                    if vertex > lo && vertex < hi {
                        pts.push(vertex);
                    }
                }
            }
            FunctionSpec::TabulatedPiecewiseLinear { breakpoints, .. } => {
                pts.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev = self.eval(pts[0]);
        for &s in &pts[1..] {
            let v = self.eval(s);
            if v < prev - 1e-12 * (1.0 + prev.abs()) {
                return false;
            }
            prev = prev.max(v);
        }
        true
    }

    /// Exact integral `∫_a^s f(u) du`.
    pub fn integral_from(&self, a: f64, s: f64) -> f64 {
        match self {
            FunctionSpec::Affine { c0, c1 } => {
                c0 * (s - a) + c1 * (s * s - a * a) / 2.0
            }
            FunctionSpec::Quadratic { c0, c1, c2 } => {
                c0 * (s - a) + c1 * (s * s - a * a) / 2.0 + c2 * (s * s * s - a * a * a) / 3.0
            }
            FunctionSpec::TabulatedPiecewiseLinear { .. } => {
                if s >= a {
                    self.pwl_integral_signed(a, s)
                } else {
                    -self.pwl_integral_signed(s, a)
                }
            }
        }
    }

    /// Integral of a tabulated polyline over `[a, b]` with `a <= b`, using
    /// the trapezoid rule segment by segment (exact for a polyline).
    fn pwl_integral_signed(&self, a: f64, b: f64) -> f64 {
        let FunctionSpec::TabulatedPiecewiseLinear { breakpoints, .. } = self else {
            unreachable!()
        };
        let mut cuts = vec![a];
        cuts.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
        cuts.push(b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])) / 2.0;
        }
        total
    }
}
