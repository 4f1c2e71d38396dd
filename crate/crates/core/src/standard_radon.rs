//! Standard Radon transform on graph hyperplanes `eta = <s, xi> + u`, the
//! hemisphere chart `s -> omega`, and the chart-coordinate inversion engine
//! shared by all transform families.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RadonError, Result};
use crate::quadrature::{cubic_interpolate, integrate_nd, pv_sum, QuadratureRule};
use crate::types::{Grid1D, Sinogram};

/// A chart coordinate with the sphere point it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub s: Vec<f64>,
    pub u: f64,
    pub omega: Vec<f64>,
    pub t: f64,
}

impl ChartPoint {
    pub fn new(s: &[f64], u: f64) -> Self {
        let (omega, t, _) = chart_to_sphere_t(s, u);
        ChartPoint {
            s: s.to_vec(),
            u,
            omega,
            t,
        }
    }
}

fn norm_sq(s: &[f64]) -> f64 {
    s.iter().map(|v| v * v).sum()
}

/// `omega = (-s, 1) / sqrt(1 + |s|^2)` and the surface-measure density
/// `(1 + |s|^2)^{-(n+1)/2}`.
pub fn chart_to_sphere(s: &[f64]) -> (Vec<f64>, f64) {
    let q = 1.0 + norm_sq(s);
    let r = q.sqrt();
    let mut omega: Vec<f64> = s.iter().map(|v| -v / r).collect();
    omega.push(1.0 / r);
    let n = s.len() as i32;
    (omega, 1.0 / r.powi(n + 1))
}

/// Adds `t = u / sqrt(1 + |s|^2)`; the Jacobian of `(s, u) -> (omega, t)` is
/// `(1 + |s|^2)^{-(n+2)/2}`.
pub fn chart_to_sphere_t(s: &[f64], u: f64) -> (Vec<f64>, f64, f64) {
    let (omega, jac) = chart_to_sphere(s);
    let r = (1.0 + norm_sq(s)).sqrt();
    (omega, u / r, jac / r)
}

/// Trapezoid integral of the chart density over the box spanned by `axes`.
pub fn chart_measure(axes: &[Grid1D]) -> Result<f64> {
    let rule_axes: Vec<(Vec<f64>, Vec<f64>)> = axes
        .iter()
        .map(|g| (g.nodes(), g.trapezoid_weights()))
        .collect();
    let mut acc = crate::quadrature::KahanSum::new();
    crate::quadrature::for_each_node(&rule_axes, |s, w| {
        acc.add(w * chart_to_sphere(s).1);
        Ok(())
    })?;
    Ok(acc.value())
}

/// `int F(xi, <s, xi> + u) d xi`, which equals `XF(omega, t) / sqrt(1 + |s|^2)`.
pub fn radon_of_graph(
    big_f: impl Fn(&[f64], f64) -> f64,
    s: &[f64],
    u: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    if rule.dim() != s.len() {
        return Err(RadonError::Dimension(format!(
            "rule has {} axes for {} slopes",
            rule.dim(),
            s.len()
        )));
    }
    integrate_nd(
        |xi| {
            let eta = xi.iter().zip(s).fold(u, |acc, (x, sv)| x.mul_add(*sv, acc));
            big_f(xi, eta)
        },
        rule,
    )
}

/// `XF(omega, t)` for any direction with `omega_{n+1} != 0`, integrating over
/// the hyperplane parametrized by its first `n` coordinates.
pub fn radon_hyperplane(
    big_f: impl Fn(&[f64], f64) -> f64,
    omega: &[f64],
    t: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    let n = omega.len() - 1;
    let last = omega[n];
    if last.abs() < 1e-12 {
        return Err(RadonError::Unsupported(
            "hyperplanes parallel to the y-axis are not graphs".into(),
        ));
    }
    // <xi, omega'> + eta * last = t  =>  eta = <s, xi> + u
    let s: Vec<f64> = omega[..n].iter().map(|w| -w / last).collect();
    let u = t / last;
    let scale = 1.0 / last.abs();
    Ok(scale * radon_of_graph(big_f, &s, u, rule)?)
}

/// Inversion constant for the standard transform.
pub fn standard_constant(n: usize) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    if n % 2 == 1 {
        let sign = if ((n - 1) / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        2.0 * sign / two_pi.powi(n as i32 + 1)
    } else {
        let sign = if (n / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        sign / two_pi.powi(n as i32)
    }
}

/// Result of backprojecting at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub value: f64,
    /// Share of the direction mass whose lookup fell outside the u-span.
    pub clamp_fraction: f64,
    /// Number of s-nodes whose lookup fell outside the u-span.
    pub clamped: usize,
}

/// Largest tolerated clamp fraction before backprojection fails.
pub const CLAMP_LIMIT: f64 = 0.2;

struct SNode {
    line: usize,
    s: Vec<f64>,
    weight: f64,
    mass: f64,
    /// Weights for the nested boxes used by the extrapolation, if any.
    box_weights: Vec<f64>,
}

/// Trapezoid weights of a uniform axis restricted to `|x| <= limit`, with
/// half weights at the ends of the kept run.
fn restricted_weights(x: &[f64], w: &[f64], limit: f64) -> Vec<f64> {
    let inside: Vec<bool> = x.iter().map(|v| v.abs() <= limit * (1.0 + 1e-12)).collect();
    let h = if x.len() > 1 { x[1] - x[0] } else { 1.0 };
    (0..x.len())
        .map(|k| {
            if !inside[k] {
                0.0
            } else {
                let left = k > 0 && inside[k - 1];
                let right = k + 1 < x.len() && inside[k + 1];
                if left && right {
                    h
                } else if left || right {
                    0.5 * h
                } else {
                    w[k]
                }
            }
        })
        .collect()
}

/// Value at `x = 0` of the polynomial through `(x_k, y_k)` (Neville).
fn extrapolate_to_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let m = x.len();
    for level in 1..m {
        for i in 0..m - level {
            let (a, b) = (x[i], x[i + level]);
            p[i] = (b * p[i] - a * p[i + 1]) / (b - a);
        }
    }
    p[0]
}

/// Box fractions used for `levels` nested truncation boxes.
fn box_fractions(levels: usize) -> &'static [f64] {
    match levels {
        2 => &[1.0, 0.5],
        3 => &[1.0, 0.75, 0.5],
        _ => &[1.0],
    }
}

/// Precomputed s-quadrature over a filtered sinogram; evaluates the
/// chart-coordinate inversion integral at arbitrary `(xi, eta)`.
pub struct ChartBackprojector<'a> {
    sino: &'a Sinogram,
    nodes: Vec<SNode>,
    total_mass: f64,
    s_truncation: f64,
    /// Radii of the nested boxes, outermost first; empty without extrapolation.
    boxes: Vec<f64>,
}

impl<'a> ChartBackprojector<'a> {
    /// `s_truncation` keeps the s-nodes with `max_i |s_i| <= S`; `None` keeps all.
    pub fn new(sino: &'a Sinogram, s_truncation: Option<f64>) -> Result<Self> {
        sino.check()?;
        let n = sino.params.n;
        if sino.derivative_order != n {
            return Err(RadonError::DerivativeOrder {
                expected: n,
                found: sino.derivative_order,
            });
        }
        if sino.grid.u_axis.count < 6 {
            return Err(RadonError::InvalidGrid(
                "backprojection needs at least 6 u-nodes".into(),
            ));
        }
        let limit = s_truncation.unwrap_or(f64::INFINITY);
        if !(limit > 0.0) {
            return Err(RadonError::InvalidParams(format!(
                "s truncation must be positive, got {limit}"
            )));
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = sino
            .grid
            .s_axes
            .iter()
            .map(|g| (g.nodes(), g.trapezoid_weights()))
            .collect();
        let kept: Vec<Vec<f64>> = axes.iter().map(|(x, w)| restricted_weights(x, w, limit)).collect();
        let shape = sino.grid.s_shape();
        let mut nodes = Vec::new();
        let mut total = 0.0;
        for line in 0..shape.len() {
            let idx = shape.unflatten(line);
            let weight: f64 = idx.iter().zip(&kept).map(|(&i, w)| w[i]).product();
            if weight == 0.0 {
                continue;
            }
            let s: Vec<f64> = idx.iter().zip(&axes).map(|(&i, (x, _))| x[i]).collect();
            let mass = weight * chart_to_sphere(&s).1;
            total += mass;
            nodes.push(SNode {
                line,
                s,
                weight,
                mass,
                box_weights: Vec::new(),
            });
        }
        if nodes.is_empty() {
            return Err(RadonError::InvalidGrid(format!(
                "no s-nodes within truncation {limit}"
            )));
        }
        let radius = sino
            .grid
            .s_axes
            .iter()
            .map(|g| g.min.abs().max(g.max.abs()))
            .fold(0.0, f64::max)
            .min(limit);
        Ok(ChartBackprojector {
            sino,
            nodes,
            total_mass: total,
            s_truncation: radius,
            boxes: Vec::new(),
        })
    }

    /// Extrapolates the truncated s-integral to `S -> infinity`.
    ///
    /// The integral is also evaluated over `levels - 1` smaller boxes
    /// (`S/2`, or `3S/4` and `S/2`, snapped to s-nodes) and the results are
    /// extrapolated polynomially in `1/S`. The filtered data decays like
    /// `|s|^-(n+1)`, which makes the truncation error `a_1/S + a_2/S^2 + ...`.
    /// `levels <= 1` switches extrapolation off.
    pub fn with_extrapolation(mut self, levels: usize) -> Result<Self> {
        if levels <= 1 {
            self.boxes.clear();
            return Ok(self);
        }
        if levels > 3 {
            return Err(RadonError::InvalidParams(format!(
                "s extrapolation supports at most 3 levels, got {levels}"
            )));
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = self
            .sino
            .grid
            .s_axes
            .iter()
            .map(|g| (g.nodes(), g.trapezoid_weights()))
            .collect();
        let mut radii = Vec::new();
        for &frac in box_fractions(levels) {
            let target = frac * self.s_truncation;
            // largest node radius not beyond the target, common to all axes
            let r = axes
                .iter()
                .map(|(x, _)| {
                    x.iter()
                        .map(|v| v.abs())
                        .filter(|v| *v <= target * (1.0 + 1e-12))
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            if !(r > 0.0) || radii.last().is_some_and(|last| r >= *last) {
                return Err(RadonError::InvalidGrid(format!(
                    "s-grid too coarse for {levels}-level extrapolation from S = {}",
                    self.s_truncation
                )));
            }
            radii.push(r);
        }
        let shape = self.sino.grid.s_shape();
        let per_box: Vec<Vec<Vec<f64>>> = radii
            .iter()
            .map(|&r| axes.iter().map(|(x, w)| restricted_weights(x, w, r)).collect())
            .collect();
        for node in &mut self.nodes {
            let idx = shape.unflatten(node.line);
            node.box_weights = per_box
                .iter()
                .map(|kept| idx.iter().zip(kept).map(|(&i, w)| w[i]).product())
                .collect();
        }
        self.boxes = radii;
        Ok(self)
    }

    /// Box radii used by the extrapolation (outermost first).
    pub fn extrapolation_radii(&self) -> &[f64] {
        &self.boxes
    }

    /// Effective s-truncation radius.
    pub fn s_truncation(&self) -> f64 {
        self.s_truncation
    }

    /// `int ds K[data(s, .)](eta - <s, xi>)` without the inversion constant,
    /// where `K` is the principal-value filter for odd `n` and point
    /// evaluation for even `n`.
    pub fn integrate(&self, xi: &[f64], eta: f64) -> Result<PointValue> {
        let n = self.sino.params.n;
        let u = &self.sino.grid.u_axis;
        let (u0, h) = (u.min, u.step());
        let lo = u.min + 0.5 * h;
        let hi = u.max - 0.5 * h;
        let mut acc = crate::quadrature::KahanSum::new();
        let mut box_acc = vec![crate::quadrature::KahanSum::new(); self.boxes.len()];
        let mut clamped_mass = 0.0;
        let mut clamped = 0;
        let mut first_clamped: Option<&[f64]> = None;
        for node in &self.nodes {
            let pole = node
                .s
                .iter()
                .zip(xi)
                .fold(eta, |acc, (s, x)| (-s).mul_add(*x, acc));
            let line = self.sino.u_line(node.line);
            let v = if n % 2 == 1 {
                if !(pole >= lo && pole <= hi) {
                    clamped += 1;
                    clamped_mass += node.mass;
                    first_clamped.get_or_insert(&node.s);
                }
                pv_sum(line, u0, h, pole)
            } else {
                match cubic_interpolate(line, u0, h, pole) {
                    Some(v) => v,
                    None => {
                        clamped += 1;
                        clamped_mass += node.mass;
                        first_clamped.get_or_insert(&node.s);
                        0.0
                    }
                }
            };
            acc.add(node.weight * v);
            for (b, w) in box_acc.iter_mut().zip(&node.box_weights) {
                if *w != 0.0 {
                    b.add(w * v);
                }
            }
        }
        let value = if self.boxes.is_empty() {
            acc.value()
        } else {
            let x: Vec<f64> = self.boxes.iter().map(|r| 1.0 / r).collect();
            let y: Vec<f64> = box_acc.iter().map(|b| b.value()).collect();
            extrapolate_to_zero(&x, &y)
        };
        let fraction = clamped_mass / self.total_mass;
        if fraction > CLAMP_LIMIT {
            let mut point = xi.to_vec();
            point.push(eta);
            return Err(RadonError::ClampLimit {
                point,
                s_node: first_clamped.map(<[f64]>::to_vec).unwrap_or_default(),
                fraction,
                limit: CLAMP_LIMIT,
            });
        }
        Ok(PointValue {
            value,
            clamp_fraction: fraction,
            clamped,
        })
    }
}

/// Standard inversion at `(xi, eta)` from chart samples of `d^n/du^n` of
/// [`radon_of_graph`].
pub fn invert_radon_chart(
    sino_filtered: &Sinogram,
    xi: &[f64],
    eta: f64,
    s_truncation: Option<f64>,
) -> Result<f64> {
    let bp = ChartBackprojector::new(sino_filtered, s_truncation)?;
    let v = bp.integrate(xi, eta)?;
    Ok(standard_constant(sino_filtered.params.n) * v.value)
}

/// [`invert_radon_chart`] at many points, in parallel.
pub fn invert_radon_chart_many(
    sino_filtered: &Sinogram,
    points: &[(Vec<f64>, f64)],
    s_truncation: Option<f64>,
) -> Result<Vec<f64>> {
    let bp = ChartBackprojector::new(sino_filtered, s_truncation)?;
    let c = standard_constant(sino_filtered.params.n);
    points
        .par_iter()
        .map(|(xi, eta)| bp.integrate(xi, *eta).map(|v| c * v.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn chart_examples() {
        let (w, j) = chart_to_sphere(&[0.0, 0.0]);
        assert_eq!(w, vec![-0.0, -0.0, 1.0]);
        assert_eq!(j, 1.0);
        let (w, j) = chart_to_sphere(&[1.0]);
        assert!((w[0] + 0.5f64.sqrt()).abs() < 1e-15 && (w[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((j - 0.5).abs() < 1e-15);
        let (w, j) = chart_to_sphere(&[3.0, 4.0]);
        let r = 26f64.sqrt();
        assert!((w[0] + 3.0 / r).abs() < 1e-15 && (w[2] - 1.0 / r).abs() < 1e-15);
        assert!((j - 26f64.powf(-1.5)).abs() < 1e-17);
        let (_, t, j) = chart_to_sphere_t(&[1.0], 2f64.sqrt());
        assert!((t - 1.0).abs() < 1e-15);
        assert!((j - 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn jacobians_are_consistent() {
        for s in [vec![0.3], vec![-7.0, 2.5], vec![1e3, 1e-3]] {
            let (_, j1) = chart_to_sphere(&s);
            let (_, _, j2) = chart_to_sphere_t(&s, 0.0);
            let r = (1.0 + norm_sq(&s)).sqrt();
            assert!((j2 - j1 / r).abs() <= 4.0 * f64::EPSILON * j2);
        }
    }

    #[test]
    fn measure_n1_matches_arctan() {
        let g = Grid1D::new(-50.0, 50.0, 20001).unwrap();
        let m = chart_measure(&[g]).unwrap();
        assert!((m - 2.0 * 50f64.atan()).abs() < 1e-7);
        assert!(PI - m <= 2.0 / 50.0);
    }

    #[test]
    fn radon_of_graph_gaussian() {
        let rule = QuadratureRule::trapezoid(1, 10.0, 2001);
        let f = |xi: &[f64], eta: f64| (-xi[0] * xi[0] - eta * eta).exp();
        let v = radon_of_graph(f, &[0.0], 0.4, &rule).unwrap();
        assert!((v - PI.sqrt() * (-0.16f64).exp()).abs() < 1e-10);
        let v = radon_of_graph(f, &[1.0], 0.0, &rule).unwrap();
        assert!((v - (PI / 2.0).sqrt()).abs() < 1e-10);
        let odd = |xi: &[f64], eta: f64| eta * (-xi[0] * xi[0] - eta * eta).exp();
        assert!(radon_of_graph(odd, &[0.0], 0.0, &rule).unwrap().abs() < 1e-15);
    }

    #[test]
    fn hyperplane_evenness() {
        let rule = QuadratureRule::trapezoid(1, 10.0, 2001);
        let f = |xi: &[f64], eta: f64| (-(xi[0] - 0.3).powi(2) - 2.0 * eta * eta).exp();
        let (omega, t, _) = chart_to_sphere_t(&[0.7], 0.2);
        let a = radon_hyperplane(f, &omega, t, &rule).unwrap();
        let neg: Vec<f64> = omega.iter().map(|w| -w).collect();
        let b = radon_hyperplane(f, &neg, -t, &rule).unwrap();
        assert!((a - b).abs() < 1e-14);
        let c = radon_of_graph(f, &[0.7], 0.2, &rule).unwrap() * (1.0f64 + 0.49).sqrt();
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn constants() {
        assert_eq!(standard_constant(1), 2.0 / (2.0 * PI).powi(2));
        assert_eq!(standard_constant(2), -1.0 / (2.0 * PI).powi(2));
        assert_eq!(standard_constant(3), -2.0 / (2.0 * PI).powi(4));
        assert_eq!(standard_constant(4), 1.0 / (2.0 * PI).powi(4));
    }
}
