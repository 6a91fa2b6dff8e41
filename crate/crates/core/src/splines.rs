//! Centred B-splines `θ_1`, `θ_3` and the smoothing operators built from
//! them.
//!
//! `T^{h,j}_i f(x) = h^{-1} ∫ f(…, y_i, …) θ_j((x_i - y_i)/h) dy_i`, and a
//! [`SmoothingPlan`] picks one kernel per axis. Quadrature is composite
//! Gauss–Legendre with panel breaks at the spline knots, so piecewise
//! polynomial integrands are integrated exactly up to the rule's degree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::DIM;
use crate::quadrature::GaussLegendre;

/// Nodes per knot interval: 6 points integrate degree 11 exactly.
pub const NODES_PER_PANEL: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplineKernel {
    /// `θ_1`, the indicator of `[-½, ½]`.
    Box,
    /// `θ_3`, the quadratic B-spline supported on `[-3/2, 3/2]`.
    Quadratic,
}

impl SplineKernel {
    pub fn from_index(j: u8) -> Result<Self> {
        match j {
            1 => Ok(SplineKernel::Box),
            3 => Ok(SplineKernel::Quadratic),
            _ => Err(Error::invalid(format!(
                "only the B-splines θ_1 and θ_3 are supported, got j = {j}"
            ))),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            SplineKernel::Box => 1,
            SplineKernel::Quadratic => 3,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let a = z.abs();
        match self {
            SplineKernel::Box => {
                if a <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            SplineKernel::Quadratic => {
                if a <= 0.5 {
                    0.75 - a * a
                } else if a <= 1.5 {
                    0.5 * (a - 1.5) * (a - 1.5)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn half_width(&self) -> f64 {
        match self {
            SplineKernel::Box => 0.5,
            SplineKernel::Quadratic => 1.5,
        }
    }

    pub fn knots(&self) -> &'static [f64] {
        match self {
            SplineKernel::Box => &[-0.5, 0.5],
            SplineKernel::Quadratic => &[-1.5, -0.5, 0.5, 1.5],
        }
    }
}

pub fn eval_spline(j: u8, z: f64) -> Result<f64> {
    Ok(SplineKernel::from_index(j)?.eval(z))
}

/// Closed axis-aligned box on which a function handle may be evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: [f64; DIM],
    pub hi: [f64; DIM],
}

impl Domain {
    pub fn everywhere() -> Self {
        Self {
            lo: [f64::NEG_INFINITY; DIM],
            hi: [f64::INFINITY; DIM],
        }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Self {
            lo: [lo; DIM],
            hi: [hi; DIM],
        }
    }

    pub fn contains(&self, y: [f64; DIM]) -> bool {
        (0..DIM).all(|i| self.lo[i] <= y[i] && y[i] <= self.hi[i])
    }
}

/// A real function on a region of `R^4` that knows where it is valid.
pub trait ScalarFunction {
    fn eval(&self, y: [f64; DIM]) -> f64;
    fn domain(&self) -> Domain;
}

pub struct FunctionHandle<F> {
    f: F,
    domain: Domain,
}

impl<F: Fn([f64; DIM]) -> f64> FunctionHandle<F> {
    pub fn new(domain: Domain, f: F) -> Self {
        Self { f, domain }
    }

    pub fn everywhere(f: F) -> Self {
        Self::new(Domain::everywhere(), f)
    }
}

impl<F: Fn([f64; DIM]) -> f64> ScalarFunction for FunctionHandle<F> {
    fn eval(&self, y: [f64; DIM]) -> f64 {
        (self.f)(y)
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

/// One kernel per axis at mesh `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPlan {
    pub kernels: [SplineKernel; DIM],
    pub h: f64,
}

impl SmoothingPlan {
    pub fn new(kernels: [SplineKernel; DIM], h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid("mesh width must be positive"));
        }
        Ok(Self { kernels, h })
    }

    /// `T^{h,3,3,3,3}`.
    pub fn all_quadratic(h: f64) -> Result<Self> {
        Self::new([SplineKernel::Quadratic; DIM], h)
    }

    /// `T^{h,3,3,3,3-2e_i}`: `θ_1` on `axis`, `θ_3` elsewhere.
    pub fn box_on_axis(axis: usize, h: f64) -> Result<Self> {
        if axis >= DIM {
            return Err(Error::invalid(format!("axis {axis} out of range 0..4")));
        }
        let mut kernels = [SplineKernel::Quadratic; DIM];
        kernels[axis] = SplineKernel::Box;
        Self::new(kernels, h)
    }
}

/// Quadrature nodes `y` and weights `w · θ((x - y)/h) / h` along one axis.
fn axis_rule(rule: &GaussLegendre, kernel: SplineKernel, h: f64, x: f64) -> Vec<(f64, f64)> {
    let knots = kernel.knots();
    let mut out = Vec::with_capacity((knots.len() - 1) * rule.nodes.len());
    for pair in knots.windows(2) {
        let (a, b) = (x + pair[0] * h, x + pair[1] * h);
        for (y, w) in rule.mapped(a, b) {
            out.push((y, w * kernel.eval((x - y) / h) / h));
        }
    }
    out
}

/// `T^{plan} f(x)` by tensor-product quadrature.
pub fn smooth(f: &dyn ScalarFunction, plan: &SmoothingPlan, x: [f64; DIM]) -> Result<f64> {
    let domain = f.domain();
    let mut lo = [0.0; DIM];
    let mut hi = [0.0; DIM];
    for i in 0..DIM {
        let w = plan.kernels[i].half_width() * plan.h;
        lo[i] = x[i] - w;
        hi[i] = x[i] + w;
    }
    if !domain.contains(lo) {
        return Err(Error::OutsideDomain { point: lo });
    }
    if !domain.contains(hi) {
        return Err(Error::OutsideDomain { point: hi });
    }

    let rule = GaussLegendre::new(NODES_PER_PANEL);
    let rules: Vec<Vec<(f64, f64)>> = (0..DIM)
        .map(|i| axis_rule(&rule, plan.kernels[i], plan.h, x[i]))
        .collect();
    let mut total = 0.0;
    for &(y0, w0) in &rules[0] {
        for &(y1, w1) in &rules[1] {
            let w01 = w0 * w1;
            for &(y2, w2) in &rules[2] {
                let w012 = w01 * w2;
                let mut inner = 0.0;
                for &(y3, w3) in &rules[3] {
                    inner += w3 * f.eval([y0, y1, y2, y3]);
                }
                total += w012 * inner;
            }
        }
    }
    Ok(total)
}

/// `|T^{h,3,3,3,3} ∂_i² f(x) - D^h_i D^h_{-i} T^{h,3,3,3,3-2e_i} f(x)|`, with
/// `second_derivative` the closed form of `∂_i² f`.
pub fn check_commutation(
    f: &dyn ScalarFunction,
    second_derivative: &dyn ScalarFunction,
    axis: usize,
    x: [f64; DIM],
    h: f64,
) -> Result<f64> {
    let lhs = smooth(second_derivative, &SmoothingPlan::all_quadratic(h)?, x)?;
    let plan = SmoothingPlan::box_on_axis(axis, h)?;
    let shifted = |s: f64| {
        let mut y = x;
        y[axis] += s * h;
        smooth(f, &plan, y)
    };
    let rhs = (shifted(1.0)? - 2.0 * shifted(0.0)? + shifted(-1.0)?) / (h * h);
    Ok((lhs - rhs).abs())
}

/// One-dimensional smoothing `h^{-1} ∫_a^b g(y) θ((x - y)/h) dy` of a profile
/// that is extended by zero outside `support = [a, b]`.
///
/// Panels that end on `a` or `b` use the graded map `y = a + (c - a) s^4`,
/// which absorbs integrable endpoint singularities of `g` such as
/// `(y - a)^{-1/2}`.
pub fn smooth_axis(
    rule: &GaussLegendre,
    kernel: SplineKernel,
    h: f64,
    x: f64,
    g: &dyn Fn(f64) -> f64,
    support: (f64, f64),
) -> f64 {
    const GRADING: i32 = 4;
    let (a, b) = support;
    let mut breaks: Vec<f64> = kernel.knots().iter().map(|k| x + k * h).collect();
    for edge in [a, b] {
        if edge > breaks[0] && edge < breaks[breaks.len() - 1] {
            breaks.push(edge);
        }
    }
    breaks.sort_by(|p, q| p.total_cmp(q));
    breaks.dedup_by(|p, q| (*p - *q).abs() < 1e-15 * h);

    let mut total = 0.0;
    for pair in breaks.windows(2) {
        let lo = pair[0].max(a);
        let hi = pair[1].min(b);
        if hi <= lo {
            continue;
        }
        let touches_lo = (lo - a).abs() <= 1e-14 * h.max(1.0);
        let touches_hi = (hi - b).abs() <= 1e-14 * h.max(1.0);
        let mut weight = |y: f64| g(y) * kernel.eval((x - y) / h);
        let len = hi - lo;
        total += if touches_lo && !touches_hi {
            rule.integrate(0.0, 1.0, |s| {
                let ds = GRADING as f64 * s.powi(GRADING - 1) * len;
                weight(lo + len * s.powi(GRADING)) * ds
            })
        } else if touches_hi && !touches_lo {
            rule.integrate(0.0, 1.0, |s| {
                let ds = GRADING as f64 * s.powi(GRADING - 1) * len;
                weight(hi - len * s.powi(GRADING)) * ds
            })
        } else if touches_lo && touches_hi {
            // the whole support sits inside one panel: grade both halves
            let half = 0.5 * len;
            rule.integrate(0.0, 1.0, |s| {
                let t = half * s.powi(GRADING);
                let ds = GRADING as f64 * s.powi(GRADING - 1) * half;
                (weight(lo + t) + weight(hi - t)) * ds
            })
        } else {
            rule.integrate(lo, hi, &mut weight)
        };
    }
    total / h
}
