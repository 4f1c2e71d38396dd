//! Forward seismic-type transforms, their derived integrands, the sinogram
//! sweep and the `d^n/du^n` filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RadonError, Result};
use crate::phantom::{phantom_dy, Phantom, PolyGaussian};
use crate::quadrature::{cubic_interpolate, gauss_legendre, KahanSum, QuadratureRule};
use crate::source::{require_membership, Source};
use crate::types::{
    FilterMethod, Grid1D, Sinogram, SinogramGrid, SinogramMeta, TransformKind, TransformParams,
};

/// Below this the level-set parameter `w` is treated as zero for kind R.
const R_GUARD: f64 = 1e-300;
/// Merged quadrature weights smaller than this fraction of the largest are dropped.
const PRUNE: f64 = 1e-17;
/// Gauss-Legendre order of the panels on the last axis for kind R.
const KINK_ORDER: usize = 8;

/// Surface term of axis `i`: `|t|^alpha` for P and R, `t |t|^(alpha - 1)` for Q.
#[inline]
pub fn surface_term(kind: TransformKind, alpha: f64, t: f64) -> f64 {
    let a = t.abs();
    let p = if alpha == 2.0 {
        a * a
    } else if alpha == 3.0 {
        a * a * a
    } else {
        a.powf(alpha)
    };
    if kind == TransformKind::Q && t < 0.0 {
        -p
    } else {
        p
    }
}

#[inline]
fn root(w: f64, beta: f64) -> f64 {
    if beta == 2.0 {
        w.sqrt()
    } else {
        w.powf(1.0 / beta)
    }
}

fn check_kind(kind: TransformKind) -> Result<()> {
    if kind == TransformKind::XStandard {
        return Err(RadonError::Unsupported(
            "forward sweeps cover kinds P, Q and R".into(),
        ));
    }
    Ok(())
}

/// y-dependence of a separable integrand after substituting the surface.
struct YPart {
    kind: TransformKind,
    poly: PolyGaussian,
    shift: f64,
    beta: f64,
}

impl YPart {
    #[inline]
    fn eval(&self, arg: f64) -> f64 {
        if self.kind == TransformKind::R {
            if arg > R_GUARD {
                let r = root(arg, self.beta);
                self.poly.eval(r - self.shift) / r
            } else {
                0.0
            }
        } else {
            self.poly.eval(arg - self.shift)
        }
    }

    /// Interval of `arg` outside which `eval` is negligible.
    fn support(&self) -> (f64, f64) {
        let y = negligible_radius(&self.poly);
        if self.kind == TransformKind::R {
            let top = (y + self.shift.abs()).max(0.0);
            (0.0, top.powf(self.beta))
        } else {
            (self.shift - y, self.shift + y)
        }
    }
}

/// Radius beyond which `|p(t)| < 1e-18 max |p|` (by scanning a bound).
fn negligible_radius(p: &PolyGaussian) -> f64 {
    let bound = |t: f64| {
        let poly: f64 = p
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c.abs() * t.powi(j as i32))
            .sum();
        let z = t / p.width;
        poly * (-z * z).exp()
    };
    let step = 0.05 * p.width;
    let mut peak = 0.0f64;
    let mut last = 0.0;
    for k in 0..2000 {
        let t = k as f64 * step;
        let b = bound(t);
        peak = peak.max(b);
        if b >= 1e-18 * peak {
            last = t;
        }
    }
    last + step
}

/// Per-axis nodes with the surface term and weight; for separable sources the
/// x-factor is folded into the weight and mirror nodes are merged.
struct Axis {
    x: Vec<f64>,
    a: Vec<f64>,
    w: Vec<f64>,
}

impl Axis {
    fn a_range(&self) -> (f64, f64) {
        self.a
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Last axis of a separable kind-R integrand, integrated over `t = |x - c|`
/// only where `0 < w < top`. The end where `w = 0` carries a `w^(1/beta)`
/// type singularity and is resolved with `t = t_end +- d tau^2`.
struct KinkAxis {
    factor: PolyGaussian,
    off: f64,
    alpha: f64,
    radius: f64,
    panels: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl KinkAxis {
    fn new(factor: &PolyGaussian, off: f64, alpha: f64, radius: f64, nodes: usize) -> Self {
        let (x, w) = gauss_legendre(KINK_ORDER);
        KinkAxis {
            factor: factor.clone(),
            off,
            alpha,
            radius,
            panels: (nodes / (2 * KINK_ORDER)).max(8),
            nodes: x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
            weights: w.iter().map(|v| 0.5 * v).collect(),
        }
    }

    #[inline]
    fn x_factor(&self, t: f64) -> f64 {
        self.factor.eval(t + self.off) + self.factor.eval(self.off - t)
    }

    /// `t >= 0` with `sigma t^alpha + z = w`, if any.
    fn level(&self, sigma: f64, z: f64, w: f64) -> Option<f64> {
        let q = (w - z) / sigma;
        (q >= 0.0).then(|| q.powf(1.0 / self.alpha))
    }

    /// `int_{-R}^{R} e(x) V(sigma |x|^alpha + z) dx`.
    fn integral(&self, y: &YPart, sigma: f64, z: f64) -> f64 {
        let top = y.support().1;
        let r = self.radius;
        let (lo, hi, kink_low, kink_high);
        if sigma == 0.0 {
            if !(z > 0.0 && z < top) {
                return 0.0;
            }
            (lo, hi, kink_low, kink_high) = (0.0, r, false, false);
        } else if sigma > 0.0 {
            let end = sigma * surface_term(TransformKind::P, self.alpha, r) + z;
            let a = if z >= 0.0 { Some(0.0) } else { self.level(sigma, z, 0.0) };
            let b = if end <= top { Some(r) } else { self.level(sigma, z, top) };
            let (Some(a), Some(b)) = (a, b) else { return 0.0 };
            (lo, hi, kink_low, kink_high) = (a, b.min(r), z < 0.0, false);
        } else {
            let end = sigma * surface_term(TransformKind::P, self.alpha, r) + z;
            let a = if z <= top { Some(0.0) } else { self.level(sigma, z, top) };
            let b = if end >= 0.0 { Some(r) } else { self.level(sigma, z, 0.0) };
            let (Some(a), Some(b)) = (a, b) else { return 0.0 };
            (lo, hi, kink_low, kink_high) = (a, b.min(r), false, end < 0.0);
        }
        let cluster = if kink_low {
            Cluster::Low
        } else if kink_high {
            Cluster::High
        } else {
            Cluster::None
        };
        self.piece(lo, hi, cluster, |t| {
            let arg = sigma.mul_add(surface_term(TransformKind::P, self.alpha, t), z);
            self.x_factor(t) * y.eval(arg)
        })
    }

    /// `int_{-R}^{R} e(x) G(sigma |x|^alpha + z) dx` for an inner integral `G`
    /// that is not smooth where its argument crosses 0. The crossing becomes a
    /// breakpoint and both sides are clustered toward it.
    fn outer_integral(&self, sigma: f64, z: f64, mut inner: impl FnMut(f64) -> f64) -> f64 {
        let r = self.radius;
        let mut g = |t: f64| {
            let arg = sigma.mul_add(surface_term(TransformKind::P, self.alpha, t), z);
            self.x_factor(t) * inner(arg)
        };
        let crossing = if sigma != 0.0 {
            self.level(sigma, z, 0.0)
        } else {
            None
        };
        match crossing {
            Some(t) if t <= 0.0 => self.piece(0.0, r, Cluster::Low, g),
            Some(t) if t < r => {
                self.piece(0.0, t, Cluster::High, &mut g) + self.piece(t, r, Cluster::Low, &mut g)
            }
            _ => self.piece(0.0, r, Cluster::None, g),
        }
    }

    /// Composite Gauss-Legendre over `[lo, hi]`, optionally with
    /// `t = end +- d tau^2` toward one end.
    fn piece(&self, lo: f64, hi: f64, cluster: Cluster, mut f: impl FnMut(f64) -> f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let d = hi - lo;
        let width = 1.0 / self.panels as f64;
        let mut acc = KahanSum::new();
        for p in 0..self.panels {
            for (g, gw) in self.nodes.iter().zip(&self.weights) {
                let tau = (p as f64 + g) * width;
                let (t, jac) = match cluster {
                    Cluster::Low => (lo + d * tau * tau, 2.0 * d * tau),
                    Cluster::High => (hi - d * tau * tau, 2.0 * d * tau),
                    Cluster::None => (lo + d * tau, d),
                };
                acc.add(gw * width * jac * f(t));
            }
        }
        acc.value()
    }
}

/// Integrates axes `0..n-1` with [`KinkAxis::outer_integral`], handing the
/// last slope and the accumulated argument to `last`.
fn nested_kink(kinks: &[KinkAxis], s: &[f64], z: f64, last: &mut dyn FnMut(f64, f64) -> f64) -> f64 {
    let n = s.len();
    if n == 1 {
        return last(s[0], z);
    }
    kinks[0].outer_integral(s[0], z, |z2| nested_kink(&kinks[1..], &s[1..], z2, last))
}

#[derive(Clone, Copy)]
enum Cluster {
    Low,
    High,
    None,
}

enum Mode<'a> {
    Separable {
        y: YPart,
        axes: Vec<Axis>,
        /// Kind R: every axis integrated in `|x_i - c_i|` with kink handling;
        /// `axes` is then only used for its ranges.
        kinks: Option<Vec<KinkAxis>>,
    },
    General {
        src: &'a dyn Source,
        c: Vec<f64>,
        beta: f64,
        axes: Vec<Axis>,
    },
}

/// Quadrature plan for one source, transform kind and rule.
struct ForwardPlan<'a> {
    kind: TransformKind,
    mode: Mode<'a>,
}

impl<'a> ForwardPlan<'a> {
    fn new(
        src: &'a dyn Source,
        params: &TransformParams,
        kind: TransformKind,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        check_kind(kind)?;
        params.check()?;
        rule.check()?;
        require_membership(src, kind)?;
        let n = params.n;
        if src.dim() != n || rule.dim() != n {
            return Err(RadonError::Dimension(format!(
                "source of dimension {} and rule of dimension {} for n = {n}",
                src.dim(),
                rule.dim()
            )));
        }
        let beta = if kind == TransformKind::R {
            params.beta_or_err()?
        } else {
            1.0
        };
        let raw = rule.axes();
        let mode = match src.separable() {
            Some((f, shift)) => {
                let axes = raw
                    .iter()
                    .enumerate()
                    .map(|(i, (x, w))| {
                        let off = params.c[i] - f.center[i];
                        merged_axis(kind, params.alpha[i], &f.x_factors[i], off, x, w)
                    })
                    .collect();
                let kinks = (kind == TransformKind::R).then(|| {
                    (0..n)
                        .map(|i| {
                            KinkAxis::new(
                                &f.x_factors[i],
                                params.c[i] - f.center[i],
                                params.alpha[i],
                                rule.truncation_radius[i],
                                rule.nodes_per_axis[i],
                            )
                        })
                        .collect()
                });
                Mode::Separable {
                    y: YPart {
                        kind,
                        poly: f.y_factor.clone(),
                        shift,
                        beta,
                    },
                    axes,
                    kinks,
                }
            }
            None => {
                let axes = raw
                    .into_iter()
                    .enumerate()
                    .map(|(i, (x, w))| Axis {
                        a: x.iter().map(|&t| surface_term(kind, params.alpha[i], t)).collect(),
                        x,
                        w,
                    })
                    .collect();
                Mode::General {
                    src,
                    c: params.c.clone(),
                    beta,
                    axes,
                }
            }
        };
        Ok(ForwardPlan { kind, mode })
    }

    fn value(&self, s: &[f64], u: f64) -> Result<f64> {
        let v = match &self.mode {
            Mode::Separable {
                y,
                kinks: Some(kinks),
                ..
            } => nested_kink(kinks, s, u, &mut |sigma, z| kinks[kinks.len() - 1].integral(y, sigma, z)),
            Mode::Separable { y, axes, .. } => {
                if axes.len() == 1 {
                    let ax = &axes[0];
                    let mut acc = KahanSum::new();
                    for (a, w) in ax.a.iter().zip(&ax.w) {
                        acc.add(w * y.eval(s[0].mul_add(*a, u)));
                    }
                    acc.value()
                } else {
                    let mut acc = KahanSum::new();
                    tensor(axes, s, u, |arg, w| acc.add(w * y.eval(arg)));
                    acc.value()
                }
            }
            Mode::General { src, c, beta, axes } => {
                let mut acc = KahanSum::new();
                let mut bad: Option<(Vec<f64>, f64)> = None;
                let mut point = vec![0.0; axes.len()];
                tensor_with_index(axes, s, u, |idx, arg, w| {
                    for (i, ax) in axes.iter().enumerate() {
                        point[i] = ax.x[idx[i]] + c[i];
                    }
                    let v = if self.kind == TransformKind::R {
                        if arg > R_GUARD {
                            let r = root(arg, *beta);
                            src.eval(&point, r) / r
                        } else {
                            0.0
                        }
                    } else {
                        src.eval(&point, arg)
                    };
                    if !v.is_finite() && bad.is_none() {
                        bad = Some((point.clone(), v));
                    }
                    acc.add(w * v);
                });
                if let Some((node, value)) = bad {
                    return Err(RadonError::NonFinite { node, value });
                }
                acc.value()
            }
        };
        if !v.is_finite() {
            let mut node = s.to_vec();
            node.push(u);
            return Err(RadonError::NonFinite { node, value: v });
        }
        Ok(v)
    }
}

fn merged_axis(
    kind: TransformKind,
    alpha: f64,
    factor: &PolyGaussian,
    off: f64,
    x: &[f64],
    w: &[f64],
) -> Axis {
    let n = x.len();
    let mut out = Axis {
        x: Vec::new(),
        a: Vec::new(),
        w: Vec::new(),
    };
    if kind == TransformKind::Q {
        for k in 0..n {
            out.x.push(x[k]);
            out.a.push(surface_term(kind, alpha, x[k]));
            out.w.push(w[k] * factor.eval(x[k] + off));
        }
    } else {
        // the rule is symmetric: node k mirrors node n-1-k
        for k in 0..n.div_ceil(2) {
            let j = n - 1 - k;
            let mut weight = w[k] * factor.eval(x[k] + off);
            if j != k {
                weight += w[j] * factor.eval(x[j] + off);
            }
            out.x.push(x[k]);
            out.a.push(surface_term(kind, alpha, x[k]));
            out.w.push(weight);
        }
    }
    let peak = out.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<bool> = out.w.iter().map(|v| v.abs() > PRUNE * peak).collect();
    let filter = |v: &Vec<f64>| -> Vec<f64> {
        v.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect()
    };
    Axis {
        x: filter(&out.x),
        a: filter(&out.a),
        w: filter(&out.w),
    }
}

/// Visits the tensor product in row-major order with `arg = u + sum s_i a_i`.
fn tensor(axes: &[Axis], s: &[f64], u: f64, mut visit: impl FnMut(f64, f64)) {
    tensor_with_index(axes, s, u, |_, arg, w| visit(arg, w));
}

fn tensor_with_index(axes: &[Axis], s: &[f64], u: f64, mut visit: impl FnMut(&[usize], f64, f64)) {
    let d = axes.len();
    if axes.iter().any(|a| a.a.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; d];
    // partial sums of arg and weight up to each depth
    let mut args = vec![0.0; d + 1];
    let mut ws = vec![0.0; d + 1];
    args[0] = u;
    ws[0] = 1.0;
    for i in 0..d {
        args[i + 1] = s[i].mul_add(axes[i].a[0], args[i]);
        ws[i + 1] = ws[i] * axes[i].w[0];
    }
    loop {
        visit(&idx, args[d], ws[d]);
        let mut i = d;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < axes[i].a.len() {
                break;
            }
            idx[i] = 0;
        }
        for k in i..d {
            args[k + 1] = s[k].mul_add(axes[k].a[idx[k]], args[k]);
            ws[k + 1] = ws[k] * axes[k].w[idx[k]];
        }
    }
}

/// Forward transform of `kind` at one `(s, u)`.
pub fn forward(
    kind: TransformKind,
    f: &dyn Source,
    params: &TransformParams,
    s: &[f64],
    u: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    if s.len() != params.n {
        return Err(RadonError::Dimension(format!(
            "{} slopes for n = {}",
            s.len(),
            params.n
        )));
    }
    ForwardPlan::new(f, params, kind, rule)?.value(s, u)
}

/// `int f(x + c, sum s_i |x_i|^alpha_i + u) dx`.
pub fn forward_p(
    f: &dyn Source,
    params: &TransformParams,
    s: &[f64],
    u: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    forward(TransformKind::P, f, params, s, u, rule)
}

/// `int f(x + c, sum s_i x_i |x_i|^(alpha_i - 1) + u) dx`.
pub fn forward_q(
    f: &dyn Source,
    params: &TransformParams,
    s: &[f64],
    u: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    forward(TransformKind::Q, f, params, s, u, rule)
}

/// `int_{w > 0} f(x + c, w^(1/beta)) / w^(1/beta) dx` with
/// `w = sum s_i |x_i|^alpha_i + u`.
pub fn forward_r(
    f: &dyn Source,
    params: &TransformParams,
    s: &[f64],
    u: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    forward(TransformKind::R, f, params, s, u, rule)
}

/// Options for [`forward_sinogram_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// For separable sources with `n >= 2`: tabulate the integral over the
    /// last axis on a z-grid with this step and interpolate it (cubic),
    /// instead of summing the full tensor product in every cell.
    #[serde(default)]
    pub nested_table_step: Option<f64>,
}

/// Samples of `z -> sum_k w_k V(sigma a_k + z)` on a uniform grid.
struct InnerTable {
    z0: f64,
    dz: f64,
    values: Vec<f64>,
    /// Index of the node at `z = 0` when the tabulated function is not smooth
    /// there; stencils then stay on one side of it.
    split: Option<usize>,
}

impl InnerTable {
    #[inline]
    fn eval(&self, z: f64) -> f64 {
        let n = self.values.len();
        if n < 4 {
            return 0.0;
        }
        let Some(k0) = self.split else {
            return cubic_interpolate(&self.values, self.z0, self.dz, z).unwrap_or(0.0);
        };
        let pos = (z - self.z0) / self.dz;
        if !(pos >= 0.0 && pos <= (n - 1) as f64) {
            return 0.0;
        }
        let mut base = pos.floor() as isize - 1;
        let k0 = k0 as isize;
        if pos >= k0 as f64 {
            base = base.max(k0);
        } else {
            base = base.min(k0 - 3);
        }
        let base = base.clamp(0, n as isize - 4) as usize;
        let t = pos - base as f64;
        let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
        let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
        let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
        let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
        let v = &self.values[base..base + 4];
        l0 * v[0] + l1 * v[1] + l2 * v[2] + l3 * v[3]
    }
}

fn build_tables(
    y: &YPart,
    last: &Axis,
    kink: Option<&KinkAxis>,
    outer: &[Axis],
    grid: &SinogramGrid,
    dz: f64,
) -> Vec<InnerTable> {
    let n = grid.n();
    // range of z = u + sum_{i < n-1} s_i a_i over the sweep
    let mut zlo = grid.u_axis.min;
    let mut zhi = grid.u_axis.max;
    for (i, ax) in outer.iter().enumerate() {
        let (alo, ahi) = ax.a_range();
        let g = &grid.s_axes[i];
        let prods = [g.min * alo, g.min * ahi, g.max * alo, g.max * ahi];
        zlo += prods.iter().cloned().fold(f64::INFINITY, f64::min);
        zhi += prods.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    let (ylo, yhi) = y.support();
    let (alo, ahi) = last.a_range();
    let sigmas = grid.s_axes[n - 1].nodes();
    sigmas
        .par_iter()
        .map(|&sigma| {
            let (blo, bhi) = if sigma >= 0.0 {
                (sigma * alo, sigma * ahi)
            } else {
                (sigma * ahi, sigma * alo)
            };
            let lo = zlo.max(ylo - bhi) - 3.0 * dz;
            let hi = zhi.min(yhi - blo) + 3.0 * dz;
            if !(hi > lo) {
                return InnerTable {
                    z0: 0.0,
                    dz,
                    values: Vec::new(),
                    split: None,
                };
            }
            // with kinks, put z = 0 on a node so stencils can avoid crossing it
            let (lo, split) = match kink {
                Some(_) => {
                    let k = (lo / dz).floor();
                    let idx = -k;
                    (k * dz, (idx >= 0.0 && lo < 0.0 && hi > 0.0).then_some(idx as usize))
                }
                None => (lo, None),
            };
            let count = ((hi - lo) / dz).ceil() as usize + 1;
            let values = (0..count)
                .map(|k| {
                    let z = (k as f64).mul_add(dz, lo);
                    if let Some(kink) = kink {
                        return kink.integral(y, sigma, z);
                    }
                    let mut acc = KahanSum::new();
                    for (a, w) in last.a.iter().zip(&last.w) {
                        acc.add(w * y.eval(sigma.mul_add(*a, z)));
                    }
                    acc.value()
                })
                .collect();
            InnerTable {
                z0: lo,
                dz,
                values,
                split,
            }
        })
        .collect()
}

/// Forward transform on every cell of `grid` (direct quadrature per cell).
pub fn forward_sinogram(
    f: &dyn Source,
    params: &TransformParams,
    kind: TransformKind,
    grid: &SinogramGrid,
    rule: &QuadratureRule,
) -> Result<Sinogram> {
    forward_sinogram_with(f, params, kind, grid, rule, &SweepOptions::default())
}

pub fn forward_sinogram_with(
    f: &dyn Source,
    params: &TransformParams,
    kind: TransformKind,
    grid: &SinogramGrid,
    rule: &QuadratureRule,
    opts: &SweepOptions,
) -> Result<Sinogram> {
    if grid.n() != params.n {
        return Err(RadonError::Dimension(format!(
            "sinogram grid has {} slope axes for n = {}",
            grid.n(),
            params.n
        )));
    }
    let plan = ForwardPlan::new(f, params, kind, rule)?;
    let n = params.n;
    let s_count = grid.s_shape().len();
    let u_nodes = grid.u_axis.nodes();

    let nested = match (&plan.mode, opts.nested_table_step) {
        (Mode::Separable { y, axes, kinks }, Some(dz)) if n >= 2 => {
            if !(dz.is_finite() && dz > 0.0) {
                return Err(RadonError::InvalidParams(format!(
                    "nested table step must be positive, got {dz}"
                )));
            }
            let (outer, last) = axes.split_at(n - 1);
            let kink = kinks.as_ref().map(|k| &k[n - 1]);
            Some((build_tables(y, &last[0], kink, outer, grid, dz), outer, kinks.as_deref()))
        }
        _ => None,
    };

    let lines: Vec<Result<Vec<f64>>> = (0..s_count)
        .into_par_iter()
        .map(|j| {
            let s = grid.s_point(j);
            match &nested {
                Some((tables, outer, kinks)) => {
                    let idx_last = j % grid.s_axes[n - 1].count;
                    let table = &tables[idx_last];
                    Ok(u_nodes
                        .iter()
                        .map(|&u| match kinks {
                            Some(k) => nested_kink(k, &s, u, &mut |_, z| table.eval(z)),
                            None => {
                                let mut acc = KahanSum::new();
                                tensor(outer, &s[..n - 1], u, |z, w| acc.add(w * table.eval(z)));
                                acc.value()
                            }
                        })
                        .collect())
                }
                None => u_nodes.iter().map(|&u| plan.value(&s, u)).collect(),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        values.extend(line?);
    }
    let meta = SinogramMeta {
        quadrature: Some(rule.clone()),
        filter: None,
        trimmed_u_nodes: 0,
        source: f.describe(),
        nested_table_step: nested.as_ref().and(opts.nested_table_step),
    };
    Sinogram::new(kind, params.clone(), grid.clone(), values, 0, meta)
}

/// Fourth-order central first derivative, dropping two nodes at each end.
fn central_difference(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (2..n - 2)
        .map(|k| {
            (values[k - 2] - values[k + 2] + 8.0 * (values[k + 1] - values[k - 1])) / (12.0 * h)
        })
        .collect()
}

/// `d^n/du^n` of a raw sinogram.
///
/// `finite_difference` composes a fourth-order central stencil `n` times and
/// returns data on the u-grid shrunk by `2n` nodes at each end. `exact_dy`
/// re-runs the forward sweep on `d^n f / dy^n` (valid for P and Q only) and
/// needs the phantom the sinogram was built from.
pub fn du_n_filter(
    sino: &Sinogram,
    method: FilterMethod,
    phantom: Option<&Phantom>,
) -> Result<Sinogram> {
    sino.check()?;
    if sino.derivative_order != 0 {
        return Err(RadonError::DerivativeOrder {
            expected: 0,
            found: sino.derivative_order,
        });
    }
    let n = sino.params.n;
    match method {
        FilterMethod::FiniteDifference => {
            let u = &sino.grid.u_axis;
            if u.count < 4 * n + 2 {
                return Err(RadonError::InvalidGrid(format!(
                    "finite-difference filter of order {n} needs at least {} u-nodes, got {}",
                    4 * n + 2,
                    u.count
                )));
            }
            let h = u.step();
            let new_u = u.trimmed(2 * n)?;
            let mut values = Vec::with_capacity(sino.s_count() * new_u.count);
            for j in 0..sino.s_count() {
                let mut line = sino.u_line(j).to_vec();
                for _ in 0..n {
                    line = central_difference(&line, h);
                }
                values.extend(line);
            }
            let grid = SinogramGrid::new(sino.grid.s_axes.clone(), new_u);
            let meta = SinogramMeta {
                filter: Some(FilterMethod::FiniteDifference),
                trimmed_u_nodes: sino.meta.trimmed_u_nodes + 2 * n,
                ..sino.meta.clone()
            };
            Sinogram::new(sino.kind, sino.params.clone(), grid, values, n, meta)
        }
        FilterMethod::ExactDy => {
            if sino.kind == TransformKind::R {
                return Err(RadonError::Unsupported("use finite_difference".into()));
            }
            let phantom = phantom.ok_or_else(|| {
                RadonError::InvalidParams("exact_dy needs the source phantom".into())
            })?;
            let rule = sino.meta.quadrature.as_ref().ok_or_else(|| {
                RadonError::InvalidParams("sinogram does not record its quadrature rule".into())
            })?;
            let dy = phantom_dy(phantom, n);
            let opts = SweepOptions {
                nested_table_step: sino.meta.nested_table_step,
            };
            let mut out =
                forward_sinogram_with(&dy, &sino.params, sino.kind, &sino.grid, rule, &opts)?;
            out.derivative_order = n;
            out.meta.filter = Some(FilterMethod::ExactDy);
            out.meta.source = sino.meta.source.clone();
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivedKind {
    FP,
    FQ,
    FR,
}

impl DerivedKind {
    pub fn for_transform(kind: TransformKind) -> Result<Self> {
        match kind {
            TransformKind::P => Ok(DerivedKind::FP),
            TransformKind::Q => Ok(DerivedKind::FQ),
            TransformKind::R => Ok(DerivedKind::FR),
            TransformKind::XStandard => Err(RadonError::Unsupported(
                "the standard transform has no derived integrand".into(),
            )),
        }
    }
}

/// The function on `(xi, eta)` whose standard graph transform equals the
/// seismic transform of `f`.
///
/// Points on a coordinate hyperplane (`xi_i = 0`, or `eta <= 0` for FR)
/// evaluate to 0; the integrand has finite one-sided limits there, so this
/// only matters for quadrature nodes placed exactly on the hyperplane.
pub struct DerivedIntegrand<'a> {
    pub kind: DerivedKind,
    pub source: &'a dyn Source,
    pub params: TransformParams,
}

pub fn derived_integrand<'a>(
    f: &'a dyn Source,
    params: &TransformParams,
    kind: DerivedKind,
) -> Result<DerivedIntegrand<'a>> {
    let tk = match kind {
        DerivedKind::FP => TransformKind::P,
        DerivedKind::FQ => TransformKind::Q,
        DerivedKind::FR => TransformKind::R,
    };
    require_membership(f, tk)?;
    params.check()?;
    if kind == DerivedKind::FR {
        params.beta_or_err()?;
    }
    Ok(DerivedIntegrand {
        kind,
        source: f,
        params: params.clone(),
    })
}

impl DerivedIntegrand<'_> {
    pub fn eval(&self, xi: &[f64], eta: f64) -> f64 {
        let n = self.params.n;
        let mut x = vec![0.0; n];
        let mut denom = 1.0;
        for i in 0..n {
            let a = self.params.alpha[i];
            let v = xi[i];
            match self.kind {
                DerivedKind::FQ => {
                    if v == 0.0 {
                        return 0.0;
                    }
                }
                _ => {
                    if v <= 0.0 {
                        return 0.0;
                    }
                }
            }
            let r = v.abs().powf(1.0 / a);
            x[i] = self.params.c[i] + if v < 0.0 { -r } else { r };
            // |xi|^{(a-1)/a} = |xi| / r
            denom *= a * v.abs() / r;
        }
        match self.kind {
            DerivedKind::FP => 2f64.powi(n as i32) * self.source.eval(&x, eta) / denom,
            DerivedKind::FQ => self.source.eval(&x, eta) / denom,
            DerivedKind::FR => {
                if eta <= 0.0 {
                    return 0.0;
                }
                let beta = self.params.beta.unwrap_or(2.0);
                let r = root(eta, beta);
                2f64.powi(n as i32) * self.source.eval(&x, r) / (denom * r)
            }
        }
    }

    /// Recovers `f(x, y)` from the derived integrand via the algebraic
    /// inverse of the change of variables.
    pub fn reconstruct_source(&self, x: &[f64], y: f64) -> f64 {
        let n = self.params.n;
        let mut pre = 1.0;
        let mut xi = vec![0.0; n];
        for i in 0..n {
            let a = self.params.alpha[i];
            let t = x[i] - self.params.c[i];
            pre *= a * t.abs().powf(a - 1.0);
            xi[i] = match self.kind {
                DerivedKind::FQ => surface_term(TransformKind::Q, a, t),
                _ => surface_term(TransformKind::P, a, t),
            };
        }
        let half = 0.5f64.powi(n as i32);
        match self.kind {
            DerivedKind::FP => half * pre * self.eval(&xi, y),
            DerivedKind::FQ => pre * self.eval(&xi, y),
            DerivedKind::FR => {
                let beta = self.params.beta.unwrap_or(2.0);
                half * pre * y.abs() * self.eval(&xi, y.abs().powf(beta))
            }
        }
    }
}

/// One row of a reduction-identity comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSample {
    pub s: Vec<f64>,
    pub u: f64,
    pub direct: f64,
    pub derived: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub kind: TransformKind,
    pub samples: Vec<ReductionSample>,
    pub max_relative_deviation: f64,
}

/// Deviations are relative to `max(|direct|, |derived|)`, floored at this
/// fraction of the largest direct value among the samples.
pub const REDUCTION_FLOOR: f64 = 1e-3;

/// Compares the direct forward transform with the standard graph transform
/// of the derived integrand at each `(s, u)`.
///
/// `x_rule` drives the direct side. On the derived side the outer axes use
/// `xi_rule` as given (graded Gauss-Legendre works well) and the last axis is
/// split at its non-smooth points, with `xi_rule`'s node budget.
pub fn reduction_identity_check(
    f: &dyn Source,
    params: &TransformParams,
    kind: TransformKind,
    sample_points: &[(Vec<f64>, f64)],
    x_rule: &QuadratureRule,
    xi_rule: &QuadratureRule,
) -> Result<ReductionReport> {
    let derived = derived_integrand(f, params, DerivedKind::for_transform(kind)?)?;
    let plan = ForwardPlan::new(f, params, kind, x_rule)?;
    let pairs: Vec<(f64, f64)> = sample_points
        .par_iter()
        .map(|(s, u)| Ok((plan.value(s, *u)?, derived_radon(&derived, s, *u, xi_rule)?)))
        .collect::<Result<_>>()?;
    // samples that vanish by symmetry are compared on the scale of the others
    let floor = REDUCTION_FLOOR * pairs.iter().fold(0.0f64, |m, (a, _)| m.max(a.abs()));
    let samples: Vec<ReductionSample> = sample_points
        .iter()
        .zip(pairs)
        .map(|((s, u), (direct, other))| {
            let scale = direct.abs().max(other.abs()).max(floor);
            let rel = if scale > 0.0 {
                (direct - other).abs() / scale
            } else {
                0.0
            };
            ReductionSample {
                s: s.clone(),
                u: *u,
                direct,
                derived: other,
                relative_deviation: rel,
            }
        })
        .collect();
    let max = samples
        .iter()
        .map(|r| r.relative_deviation)
        .fold(0.0, f64::max);
    Ok(ReductionReport {
        kind,
        samples,
        max_relative_deviation: max,
    })
}

/// `int F(xi, <s, xi> + u) d xi` for a derived integrand.
///
/// Axes are integrated one inside the other. Each is split at `xi_k = 0`
/// and where the partial sum `u + s_1 xi_1 + .. + s_k xi_k` crosses 0, the
/// places where `F` or the inner integral has fractional-power behaviour.
/// Every piece is mapped through the quintic smoothstep, which clusters
/// Gauss-Legendre nodes at both of its ends.
fn derived_radon(d: &DerivedIntegrand, s: &[f64], u: f64, rule: &QuadratureRule) -> Result<f64> {
    rule.check()?;
    let n = s.len();
    if rule.dim() != n {
        return Err(RadonError::Dimension(format!(
            "rule has {} axes for {} slopes",
            rule.dim(),
            n
        )));
    }
    let (gx, gw) = gauss_legendre(rule.panel_order);
    let mut xi = vec![0.0; n];
    Ok(derived_axis(d, s, rule, &gx, &gw, 0, u, &mut xi))
}

#[allow(clippy::too_many_arguments)]
fn derived_axis(
    d: &DerivedIntegrand,
    s: &[f64],
    rule: &QuadratureRule,
    gx: &[f64],
    gw: &[f64],
    k: usize,
    base: f64,
    xi: &mut [f64],
) -> f64 {
    let n = s.len();
    let radius = rule.truncation_radius[k];
    let panels = (rule.nodes_per_axis[k] / rule.panel_order / 2).max(2);
    let mut breaks = vec![-radius, 0.0, radius];
    if s[k] != 0.0 {
        let z0 = -base / s[k];
        if z0.abs() < radius && z0 != 0.0 {
            breaks.push(z0);
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut acc = KahanSum::new();
    let half = 0.5 / panels as f64;
    for pair in breaks.windows(2) {
        let (a, len) = (pair[0], pair[1] - pair[0]);
        for p in 0..panels {
            let lo = p as f64 / panels as f64;
            for (x, wg) in gx.iter().zip(gw) {
                let t = lo + half * (1.0 + x);
                let q = t * t * t * (10.0 + t * (6.0 * t - 15.0));
                let dq = 30.0 * t * t * (1.0 - t) * (1.0 - t);
                xi[k] = len.mul_add(q, a);
                let next = s[k].mul_add(xi[k], base);
                let v = if k + 1 == n {
                    d.eval(xi, next)
                } else {
                    derived_axis(d, s, rule, gx, gw, k + 1, next, xi)
                };
                acc.add(wg * half * len * dq * v);
            }
        }
    }
    acc.value()
}

/// Rule on the u-axis shrunk by the stencil of an order-`n` finite-difference filter.
pub fn filtered_u_axis(u: &Grid1D, n: usize) -> Result<Grid1D> {
    u.trimmed(2 * n)
}
