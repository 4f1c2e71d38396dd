//! Deterministic quadrature on truncated boxes and the principal-value rule
//! used by the odd-dimension inversion branch.
//!
//! All reductions run in ascending flat-index order through [`KahanSum`], so
//! results do not depend on how callers parallelize around them.

use serde::{Deserialize, Serialize};

use crate::error::{RadonError, Result};
use crate::types::Grid1D;

/// Compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Fixed-order compensated sum.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<KahanSum>().value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadScheme {
    /// Uniform nodes on `[-R, R]`, endpoints included, trapezoid weights.
    TrapezoidUniform,
    /// Composite Gauss-Legendre on equal panels of `[-R, R]` with a breakpoint
    /// at the origin; optionally the two panels touching the origin are
    /// refined geometrically.
    GaussLegendrePanels,
}

fn default_panel_order() -> usize {
    8
}

/// Tensor-product rule over the box `prod [-R_i, R_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub scheme: QuadScheme,
    pub truncation_radius: Vec<f64>,
    pub nodes_per_axis: Vec<usize>,
    /// Gauss points per panel (Gauss-Legendre scheme only).
    #[serde(default = "default_panel_order")]
    pub panel_order: usize,
    /// Geometric refinement levels toward the origin (Gauss-Legendre scheme only).
    #[serde(default)]
    pub grading_levels: usize,
}

/// Ratio between consecutive geometrically graded breakpoints.
const GRADING_RATIO: f64 = 0.15;

impl QuadratureRule {
    /// Same uniform trapezoid rule on every axis.
    pub fn trapezoid(dim: usize, radius: f64, nodes: usize) -> Self {
        QuadratureRule {
            scheme: QuadScheme::TrapezoidUniform,
            truncation_radius: vec![radius; dim],
            nodes_per_axis: vec![nodes; dim],
            panel_order: default_panel_order(),
            grading_levels: 0,
        }
    }

    /// Composite Gauss-Legendre with `panels` panels of `order` points per axis.
    pub fn gauss_legendre(dim: usize, radius: f64, panels: usize, order: usize) -> Self {
        QuadratureRule {
            scheme: QuadScheme::GaussLegendrePanels,
            truncation_radius: vec![radius; dim],
            nodes_per_axis: vec![panels * order; dim],
            panel_order: order,
            grading_levels: 0,
        }
    }

    pub fn with_grading(mut self, levels: usize) -> Self {
        self.grading_levels = levels;
        self
    }

    pub fn with_axis(mut self, axis: usize, radius: f64, nodes: usize) -> Self {
        self.truncation_radius[axis] = radius;
        self.nodes_per_axis[axis] = nodes;
        self
    }

    pub fn dim(&self) -> usize {
        self.truncation_radius.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.truncation_radius.len() != self.nodes_per_axis.len() {
            return Err(RadonError::InvalidParams(format!(
                "quadrature rule has {} radii but {} node counts",
                self.truncation_radius.len(),
                self.nodes_per_axis.len()
            )));
        }
        if self.truncation_radius.is_empty() {
            return Err(RadonError::InvalidParams("quadrature rule has no axes".into()));
        }
        for (i, (&r, &k)) in self
            .truncation_radius
            .iter()
            .zip(&self.nodes_per_axis)
            .enumerate()
        {
            if !(r.is_finite() && r > 0.0) {
                return Err(RadonError::InvalidParams(format!(
                    "truncation radius on axis {} must be positive, got {r}",
                    i + 1
                )));
            }
            if k < 8 {
                return Err(RadonError::InvalidParams(format!(
                    "at least 8 nodes per axis required, axis {} has {k}",
                    i + 1
                )));
            }
            if self.scheme == QuadScheme::GaussLegendrePanels {
                let order = self.panel_order;
                if order == 0 || k % order != 0 || !(k / order).is_multiple_of(2) {
                    return Err(RadonError::InvalidParams(format!(
                        "axis {}: {k} nodes is not an even number of {order}-point panels",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nodes and weights of one axis.
    pub fn axis(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let r = self.truncation_radius[i];
        let k = self.nodes_per_axis[i];
        match self.scheme {
            QuadScheme::TrapezoidUniform => {
                let g = Grid1D {
                    min: -r,
                    max: r,
                    count: k,
                };
                (g.nodes(), g.trapezoid_weights())
            }
            QuadScheme::GaussLegendrePanels => {
                let panels = k / self.panel_order;
                let width = 2.0 * r / panels as f64;
                let mut breaks: Vec<f64> = (0..=panels)
                    .map(|j| (j as f64).mul_add(width, -r))
                    .collect();
                // exact origin breakpoint
                breaks[panels / 2] = 0.0;
                if self.grading_levels > 0 {
                    let mut inner = Vec::new();
                    for l in (1..=self.grading_levels).rev() {
                        inner.push(width * GRADING_RATIO.powi(l as i32));
                    }
                    let mid = panels / 2;
                    let mut graded = breaks[..mid].to_vec();
                    graded.extend(inner.iter().map(|b| -b));
                    graded.push(0.0);
                    graded.extend(inner.iter().rev().copied());
                    graded.extend_from_slice(&breaks[mid + 1..]);
                    graded.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    breaks = graded;
                }
                let (gx, gw) = gauss_legendre(self.panel_order);
                let mut nodes = Vec::with_capacity(breaks.len() * gx.len());
                let mut weights = Vec::with_capacity(nodes.capacity());
                for pair in breaks.windows(2) {
                    let half = 0.5 * (pair[1] - pair[0]);
                    let mid = 0.5 * (pair[1] + pair[0]);
                    for (x, w) in gx.iter().zip(&gw) {
                        nodes.push(half.mul_add(*x, mid));
                        weights.push(half * w);
                    }
                }
                (nodes, weights)
            }
        }
    }

    pub fn axes(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.dim()).map(|i| self.axis(i)).collect()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Visits every tensor-product node in row-major order.
pub(crate) fn for_each_node(
    axes: &[(Vec<f64>, Vec<f64>)],
    mut visit: impl FnMut(&[f64], f64) -> Result<()>,
) -> Result<()> {
    let dim = axes.len();
    let mut index = vec![0usize; dim];
    let mut point: Vec<f64> = axes.iter().map(|(x, _)| x[0]).collect();
    if axes.iter().any(|(x, _)| x.is_empty()) {
        return Ok(());
    }
    loop {
        let weight = index
            .iter()
            .zip(axes)
            .fold(1.0, |acc, (&i, (_, w))| acc * w[i]);
        visit(&point, weight)?;
        let mut axis = dim;
        loop {
            if axis == 0 {
                return Ok(());
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < axes[axis].0.len() {
                point[axis] = axes[axis].0[index[axis]];
                break;
            }
            index[axis] = 0;
            point[axis] = axes[axis].0[0];
        }
    }
}

/// Integral value together with `sum |w g|`, a natural scale for cancellation checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_scale: f64,
}

/// Integrates `g` over the rule's truncated box.
pub fn integrate_nd(g: impl Fn(&[f64]) -> f64, rule: &QuadratureRule) -> Result<f64> {
    integrate_nd_scaled(g, rule).map(|i| i.value)
}

/// Like [`integrate_nd`], also returning the absolute scale of the sum.
pub fn integrate_nd_scaled(g: impl Fn(&[f64]) -> f64, rule: &QuadratureRule) -> Result<Integral> {
    rule.check()?;
    let axes = rule.axes();
    let mut acc = KahanSum::new();
    let mut abs = KahanSum::new();
    for_each_node(&axes, |x, w| {
        let v = g(x);
        if !v.is_finite() {
            return Err(RadonError::NonFinite {
                node: x.to_vec(),
                value: v,
            });
        }
        acc.add(w * v);
        abs.add((w * v).abs());
        Ok(())
    })?;
    Ok(Integral {
        value: acc.value(),
        abs_scale: abs.value(),
    })
}

/// `pv int g(u) / (pole - u) du` over the span of `grid`, from samples of `g`.
///
/// The pole must sit at least half a step inside the span.
pub fn pv_integral(samples: &[f64], grid: &Grid1D, pole: f64) -> Result<f64> {
    if samples.len() != grid.count {
        return Err(RadonError::Dimension(format!(
            "{} samples for a {}-node grid",
            samples.len(),
            grid.count
        )));
    }
    if grid.count < PV_STENCIL {
        return Err(RadonError::InvalidGrid(format!(
            "principal value needs at least {PV_STENCIL} nodes"
        )));
    }
    let h = grid.step();
    let err = |reason| RadonError::PoleOutsideGrid {
        pole,
        min: grid.min,
        max: grid.max,
        reason,
    };
    if !(pole > grid.min && pole < grid.max) {
        return Err(err("outside the grid span"));
    }
    if pole < grid.min + 0.5 * h || pole > grid.max - 0.5 * h {
        return Err(err("within half a step of the grid end"));
    }
    Ok(pv_sum(samples, grid.min, h, pole))
}

/// Principal value on the uniform grid `u_k = u0 + k h`, for any pole.
///
/// Poles at least half a step inside the span use singularity subtraction:
/// a local degree-5 interpolant `q` around the pole supplies `g(pole)`, the remainder
/// `(g - q(pole)) / (pole - u)` is smooth and integrated by the trapezoid rule
/// with an Euler-Maclaurin end correction, and the subtracted part is
/// integrated exactly. Other poles fall back to exact product integration of
/// the piecewise-linear interpolant, taken to fall linearly to zero over one
/// step beyond each end.
pub fn pv_sum(samples: &[f64], u0: f64, h: f64, pole: f64) -> f64 {
    let n = samples.len();
    let last = u0 + (n - 1) as f64 * h;
    if n >= PV_STENCIL && pole >= u0 + 0.5 * h && pole <= last - 0.5 * h {
        pv_subtracted(samples, u0, h, pole)
    } else {
        pv_linear(samples, u0, h, pole)
    }
}

/// Points in the local interpolant used by the subtraction rule.
const PV_STENCIL: usize = 6;

fn pv_subtracted(g: &[f64], u0: f64, h: f64, pole: f64) -> f64 {
    let n = g.len();
    let pos = (pole - u0) / h;
    let on_node = (pos - pos.round()).abs() < 1e-9;
    let cell = if on_node { pos.round() } else { pos.floor() };
    let base = (cell as isize - (PV_STENCIL as isize / 2 - 1))
        .clamp(0, n as isize - PV_STENCIL as isize) as usize;
    // Taylor coefficients at the pole of the interpolant through the stencil
    // starting at `first`, in powers of (u - pole) / h
    let taylor = |first: usize| {
        let mut coef = [0.0f64; PV_STENCIL];
        for m in 0..PV_STENCIL {
            let tm = (first + m) as f64;
            let mut poly = [0.0f64; PV_STENCIL];
            poly[0] = 1.0;
            let mut denom = 1.0;
            for l in 0..PV_STENCIL {
                if l == m {
                    continue;
                }
                let tl = (first + l) as f64;
                let c0 = pos - tl;
                let mut next = [0.0f64; PV_STENCIL];
                for j in 0..PV_STENCIL {
                    next[j] += poly[j] * c0;
                    if j + 1 < PV_STENCIL {
                        next[j + 1] += poly[j];
                    }
                }
                poly = next;
                denom *= tm - tl;
            }
            for j in 0..PV_STENCIL {
                coef[j] += g[first + m] * poly[j] / denom;
            }
        }
        coef
    };
    // A pole on a node has no centred even stencil; averaging the stencil
    // with its mirror keeps the rule symmetric about the pole.
    let (lo, hi, coef) = if on_node && base > 0 && base + PV_STENCIL < n {
        let (a, b) = (taylor(base), taylor(base - 1));
        let mut c = [0.0f64; PV_STENCIL];
        for j in 0..PV_STENCIL {
            c[j] = 0.5 * (a[j] + b[j]);
        }
        (base - 1, base + PV_STENCIL, c)
    } else {
        (base, base + PV_STENCIL, taylor(base))
    };
    let a0 = coef[0];
    // -(q(u) - q(pole)) / (u - pole) for stencil nodes, no cancellation
    let divided = |tau: f64| -> f64 {
        let t = tau / h;
        let mut acc = 0.0;
        for j in (1..PV_STENCIL).rev() {
            acc = acc * t + coef[j];
        }
        -acc / h
    };

    let mut acc = KahanSum::new();
    for (k, &gk) in g.iter().enumerate() {
        let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
        let uk = (k as f64).mul_add(h, u0);
        let r = if k >= lo && k < hi {
            divided(uk - pole)
        } else {
            (gk - a0) / (pole - uk)
        };
        acc.add(w * r);
    }
    // Euler-Maclaurin correction -h^2/12 (r'(b) - r'(a)) for the remainder
    let deriv = |k: usize, dir: f64| -> f64 {
        // one-sided second-order difference pointing into the grid
        let (g0, g1, g2) = if dir > 0.0 {
            (g[k], g[k + 1], g[k + 2])
        } else {
            (g[k], g[k - 1], g[k - 2])
        };
        dir * (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * h)
    };
    let ua = u0;
    let ub = (n - 1) as f64 * h + u0;
    let da = pole - ua;
    let db = pole - ub;
    let ra = deriv(0, 1.0) / da + (g[0] - a0) / (da * da);
    let rb = deriv(n - 1, -1.0) / db + (g[n - 1] - a0) / (db * db);
    acc.add(-h * h / 12.0 * (rb - ra));
    acc.add(a0 * (da.abs().ln() - db.abs().ln()));
    acc.value()
}

#[inline]
fn xlogx(d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d * d.abs().ln()
    }
}

/// Weight of an interior node for the piecewise-linear product rule, with
/// `r = h / (pole - u_k)`.
#[inline]
fn linear_interior_weight(d: f64, h: f64) -> f64 {
    let r = h / d;
    let ar = r.abs();
    if ar <= 0.1 {
        let r2 = r * r;
        r * (1.0
            + r2 * (1.0 / 6.0
                + r2 * (1.0 / 15.0 + r2 * (1.0 / 28.0 + r2 * (1.0 / 45.0 + r2 / 66.0)))))
    } else if ar <= 0.5 {
        ((1.0 - r) * (-r).ln_1p() + (1.0 + r) * r.ln_1p()) / r
    } else {
        (xlogx(d + h) - 2.0 * xlogx(d) + xlogx(d - h)) / h
    }
}

fn pv_linear(g: &[f64], u0: f64, h: f64, pole: f64) -> f64 {
    // every node carries a full hat, so the interpolant falls to zero one step
    // off each end and the rule stays continuous in the pole there
    let mut acc = KahanSum::new();
    for (k, &gk) in g.iter().enumerate() {
        let d = pole - (k as f64).mul_add(h, u0);
        acc.add(linear_interior_weight(d, h) * gk);
    }
    acc.value()
}

/// 4-point Lagrange interpolation on a uniform grid; `None` outside the span.
pub fn cubic_interpolate(samples: &[f64], u0: f64, h: f64, u: f64) -> Option<f64> {
    let n = samples.len();
    let pos = (u - u0) / h;
    if !(pos >= 0.0 && pos <= (n - 1) as f64) {
        return None;
    }
    if n < 4 {
        let i = (pos.floor() as usize).min(n - 2);
        let t = pos - i as f64;
        return Some(samples[i] * (1.0 - t) + samples[i + 1] * t);
    }
    let base = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let t = pos - base as f64;
    // nodes at 0, 1, 2, 3 relative to base
    let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    Some(
        l0 * samples[base]
            + l1 * samples[base + 1]
            + l2 * samples[base + 2]
            + l3 * samples[base + 3],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_1d() {
        let rule = QuadratureRule::trapezoid(1, 10.0, 2001);
        let v = integrate_nd(|x| (-x[0] * x[0]).exp(), &rule).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn gaussian_2d() {
        let rule = QuadratureRule::trapezoid(2, 10.0, 401);
        let v = integrate_nd(|x| (-x[0] * x[0] - x[1] * x[1]).exp(), &rule).unwrap();
        assert!((v - PI).abs() < 1e-8, "{v}");
    }

    #[test]
    fn odd_integrand_vanishes() {
        let rule = QuadratureRule::trapezoid(1, 10.0, 2001);
        let v = integrate_nd(|x| x[0] * (-x[0] * x[0]).exp(), &rule).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn gauss_legendre_panels_integrate_gaussian() {
        let rule = QuadratureRule::gauss_legendre(1, 10.0, 20, 8).with_grading(4);
        rule.check().unwrap();
        let v = integrate_nd(|x| (-x[0] * x[0]).exp(), &rule).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn graded_panels_handle_sqrt_endpoint() {
        // int_0^R sqrt(x) e^{-x} dx = Gamma(3/2) up to a negligible tail
        let rule = QuadratureRule::gauss_legendre(1, 40.0, 40, 16).with_grading(12);
        let v = integrate_nd(
            |x| if x[0] > 0.0 { x[0].sqrt() * (-x[0]).exp() } else { 0.0 },
            &rule,
        )
        .unwrap();
        assert!((v - 0.5 * PI.sqrt()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn gauss_legendre_nodes_are_exact_for_polynomials() {
        let (x, w) = gauss_legendre(6);
        // exact up to degree 11
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn non_finite_sample_names_node() {
        let rule = QuadratureRule::trapezoid(1, 1.0, 11);
        let err = integrate_nd(|x| if x[0].abs() < 1e-9 { f64::NAN } else { 1.0 }, &rule).unwrap_err();
        match err {
            RadonError::NonFinite { node, .. } => assert!(node[0].abs() < 1e-9),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rule_validation() {
        assert!(QuadratureRule::trapezoid(1, 1.0, 7).check().is_err());
        assert!(QuadratureRule::trapezoid(1, -1.0, 9).check().is_err());
        let mut odd = QuadratureRule::gauss_legendre(1, 1.0, 3, 8);
        assert!(odd.check().is_err());
        odd.nodes_per_axis = vec![32];
        assert!(odd.check().is_ok());
    }

    #[test]
    fn pv_of_constant_on_symmetric_grid_is_zero() {
        let grid = Grid1D::new(-5.0, 5.0, 101).unwrap();
        let g = vec![1.0; 101];
        for pole in [0.0, 0.05, -0.01] {
            // grid symmetric about the pole only for pole = 0
            let v = pv_integral(&g, &grid, pole).unwrap();
            let exact = ((pole + 5.0) / (pole - 5.0)).abs().ln();
            assert!((v - exact).abs() < 1e-12, "{pole}: {v} vs {exact}");
        }
        assert!(pv_integral(&g, &grid, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pv_exact_for_affine() {
        let grid = Grid1D::new(-3.0, 4.0, 71).unwrap();
        let (a, b) = (0.7, -1.3);
        let g: Vec<f64> = grid.nodes().iter().map(|u| a + b * u).collect();
        for pole in [0.123, 0.0, -2.9, 3.93, 1.05] {
            let v = pv_integral(&g, &grid, pole).unwrap();
            let exact = (a + b * pole) * ((pole + 3.0) / (pole - 4.0)).abs().ln() - b * 7.0;
            assert!((v - exact).abs() < 1e-12, "{pole}: {v} vs {exact}");
        }
    }

    #[test]
    fn pv_rejects_bad_poles() {
        let grid = Grid1D::new(0.0, 1.0, 11).unwrap();
        let g = vec![0.0; 11];
        assert!(pv_integral(&g, &grid, 1.5).is_err());
        assert!(pv_integral(&g, &grid, 0.02).is_err());
        assert!(pv_integral(&g, &grid, 0.98).is_err());
        assert!(pv_integral(&g, &grid, 0.06).is_ok());
    }

    /// Exact integral of the zero-extended hat interpolant, segment by segment.
    fn hat_reference(g: &[f64], u0: f64, h: f64, pole: f64) -> f64 {
        let mut vals = vec![0.0];
        vals.extend_from_slice(g);
        vals.push(0.0);
        let mut total = 0.0;
        for k in 0..vals.len() - 1 {
            let a = u0 + (k as f64 - 1.0) * h;
            let b = a + h;
            let slope = (vals[k + 1] - vals[k]) / h;
            let at_pole = vals[k] + slope * (pole - a);
            total += at_pole * ((pole - a) / (pole - b)).abs().ln() - slope * h;
        }
        total
    }

    #[test]
    fn linear_fallback_matches_analytic_for_outside_pole() {
        let (u0, h, n) = (0.0, 0.1, 11);
        let g: Vec<f64> = (0..n).map(|k| 2.0 + 0.5 * (u0 + k as f64 * h)).collect();
        for pole in [-0.3, 1.7, 1.04, -0.01, -0.13] {
            let v = pv_sum(&g, u0, h, pole);
            let exact = hat_reference(&g, u0, h, pole);
            assert!((v - exact).abs() < 1e-12, "{pole}: {v} vs {exact}");
        }
    }

    #[test]
    fn linear_fallback_is_continuous_at_the_end_nodes() {
        let (u0, h) = (-1.0, 0.1);
        let g: Vec<f64> = (0..21).map(|k| 1.0 + 0.1 * k as f64).collect();
        for end in [u0, u0 + 20.0 * h] {
            let lo = pv_sum(&g, u0, h, end - 1e-13);
            let hi = pv_sum(&g, u0, h, end + 1e-13);
            assert!((lo - hi).abs() < 1e-9, "{end}: {lo} vs {hi}");
            let on = pv_sum(&g, u0, h, end);
            assert!(on.is_finite() && (on - lo).abs() < 1e-9, "{end}: {on}");
        }
        // zero end samples with the pole on the end node once gave 0 * inf
        let mut z = g.clone();
        z[0] = 0.0;
        assert!(pv_sum(&z, u0, h, u0).is_finite());
    }

    #[test]
    fn linear_weights_agree_across_branches() {
        let h = 0.1;
        for d in [0.2 - 1e-12, 0.2 + 1e-12, 1.0 - 1e-12, 1.0 + 1e-12] {
            let a = linear_interior_weight(d, h);
            let b = (xlogx(d + h) - 2.0 * xlogx(d) + xlogx(d - h)) / h;
            assert!((a - b).abs() < 1e-9 * a.abs(), "{d}: {a} vs {b}");
        }
    }

    #[test]
    fn cubic_interpolation_reproduces_cubics() {
        let g: Vec<f64> = (0..10)
            .map(|k| {
                let u = 0.5 * k as f64;
                u * u * u - 2.0 * u + 1.0
            })
            .collect();
        for u in [0.0, 0.1, 2.2, 4.49, 4.5] {
            let v = cubic_interpolate(&g, 0.0, 0.5, u).unwrap();
            assert!((v - (u * u * u - 2.0 * u + 1.0)).abs() < 1e-12);
        }
        assert!(cubic_interpolate(&g, 0.0, 0.5, 4.6).is_none());
        assert!(cubic_interpolate(&g, 0.0, 0.5, -0.01).is_none());
    }
}
