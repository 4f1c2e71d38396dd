//! Inversion of filtered P, Q and R sinograms and the full round-trip driver.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RadonError, Result};
use crate::phantom::Phantom;
use crate::quadrature::QuadratureRule;
use crate::seismic::{du_n_filter, forward_sinogram_with, surface_term, SweepOptions};
use crate::standard_radon::{standard_constant, ChartBackprojector};
use crate::types::{Field, FieldGrid, FilterMethod, Sinogram, SinogramGrid, TransformKind};

/// Constant in front of the backprojection integral.
///
/// P and R carry the extra `2^{-n}` from folding the even integrand onto the
/// positive orthant; Q uses the standard constants.
pub fn inversion_constant(kind: TransformKind, n: usize) -> Result<f64> {
    match kind {
        TransformKind::P | TransformKind::R => Ok(0.5f64.powi(n as i32) * standard_constant(n)),
        TransformKind::Q | TransformKind::XStandard => Ok(standard_constant(n)),
    }
}

/// How far the backprojection reaches in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum STruncation {
    /// Use every s-node of the sinogram.
    #[default]
    Full,
    /// Keep nodes with `max_i |s_i| <= S`.
    Fixed(f64),
    /// Smallest box outside of which the filtered data stays below `1e-6` of its peak.
    Auto,
}


/// Relative level below which filtered data counts as negligible for [`STruncation::Auto`].
pub const AUTO_TRUNCATION_LEVEL: f64 = 1e-6;

/// Radius chosen by [`STruncation::Auto`].
pub fn auto_s_truncation(sino: &Sinogram) -> f64 {
    let shape = sino.grid.s_shape();
    let mut rows: Vec<(f64, f64)> = (0..shape.len())
        .map(|j| {
            let s = sino.grid.s_point(j);
            let radius = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let peak = sino.u_line(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (radius, peak)
        })
        .collect();
    let global = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let full = rows.first().map(|r| r.0).unwrap_or(0.0);
    // walk inward while everything outside stays negligible
    let mut radius = full;
    let mut k = 0;
    while k < rows.len() {
        let r = rows[k].0;
        let mut shell_peak = 0.0f64;
        while k < rows.len() && rows[k].0 == r {
            shell_peak = shell_peak.max(rows[k].1);
            k += 1;
        }
        if shell_peak > AUTO_TRUNCATION_LEVEL * global {
            return radius;
        }
        radius = rows.get(k).map(|row| row.0).unwrap_or(r);
    }
    radius
}

/// What to reconstruct and from which data.
#[derive(Debug, Clone)]
pub struct ReconRequest<'a> {
    pub sino: &'a Sinogram,
    pub recon_grid: FieldGrid,
    pub s_truncation: STruncation,
    pub report_clamps: bool,
    /// Subdivide every s-cell this many times (cubic interpolation in s)
    /// before backprojecting; 1 uses the sinogram as is.
    pub s_refine: usize,
    /// Nested truncation boxes for extrapolation in `1/S`; 1 switches it off.
    pub s_extrapolation: usize,
}

/// Four-point Lagrange weights for nodes `-1, 0, 1, 2` at offset `t`.
fn lagrange4(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Resamples a sinogram onto s-axes with `factor` times as many cells,
/// interpolating each s-axis with cubic Lagrange stencils (one-sided at the ends).
pub fn refine_s(sino: &Sinogram, factor: usize) -> Result<Sinogram> {
    sino.check()?;
    if factor == 0 {
        return Err(RadonError::InvalidParams("s refinement factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(sino.clone());
    }
    let n = sino.grid.n();
    let nu = sino.grid.u_axis.count;
    let mut axes = sino.grid.s_axes.clone();
    let mut values = sino.values.clone();
    for ax in 0..n {
        let old = axes[ax];
        if old.count < 4 {
            return Err(RadonError::InvalidGrid(format!(
                "s-axis {ax} needs at least 4 nodes to refine, got {}",
                old.count
            )));
        }
        let new = old.refined(factor);
        // strides of the row-major (s_0, .., s_{n-1}, u) layout
        let outer: usize = axes[..ax].iter().map(|a| a.count).product();
        let inner: usize = axes[ax + 1..].iter().map(|a| a.count).product::<usize>() * nu;
        let mut out = vec![0.0; outer * new.count * inner];
        for j in 0..new.count {
            let pos = j as f64 / factor as f64;
            let base = (pos.floor() as usize).clamp(1, old.count - 3) - 1;
            let w = lagrange4(pos - base as f64 - 1.0);
            for o in 0..outer {
                let dst = (o * new.count + j) * inner;
                for (q, wq) in w.iter().enumerate() {
                    let src = (o * old.count + base + q) * inner;
                    for i in 0..inner {
                        out[dst + i] += wq * values[src + i];
                    }
                }
            }
        }
        axes[ax] = new;
        values = out;
    }
    let grid = SinogramGrid::new(axes, sino.grid.u_axis);
    Sinogram::new(
        sino.kind,
        sino.params.clone(),
        grid,
        values,
        sino.derivative_order,
        sino.meta.clone(),
    )
}

/// Backprojection diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconStats {
    pub s_truncation: f64,
    pub max_clamp_fraction: f64,
    pub clamped_lookups: u64,
    pub total_lookups: u64,
}

fn y_term(kind: TransformKind, beta: f64, y: f64) -> f64 {
    if kind == TransformKind::R {
        y.abs().powf(beta)
    } else {
        y
    }
}

/// Dispatches on the sinogram kind.
pub fn invert(req: &ReconRequest<'_>) -> Result<(Field, ReconStats)> {
    let sino = req.sino;
    let kind = sino.kind;
    let params = &sino.params;
    let n = params.n;
    if kind == TransformKind::XStandard {
        return Err(RadonError::Unsupported(
            "use standard_radon::invert_radon_chart for standard sinograms".into(),
        ));
    }
    if req.recon_grid.n() != n {
        return Err(RadonError::Dimension(format!(
            "reconstruction grid has {} x-axes for n = {n}",
            req.recon_grid.n()
        )));
    }
    let beta = if kind == TransformKind::R {
        params.beta_or_err()?
    } else {
        1.0
    };
    let limit = match req.s_truncation {
        STruncation::Full => None,
        STruncation::Fixed(s) => Some(s),
        STruncation::Auto => Some(auto_s_truncation(sino)),
    };
    let refined;
    let sino = if req.s_refine > 1 {
        refined = refine_s(sino, req.s_refine)?;
        &refined
    } else {
        sino
    };
    let bp = ChartBackprojector::new(sino, limit)?.with_extrapolation(req.s_extrapolation)?;
    let constant = inversion_constant(kind, n)?;
    let grid = &req.recon_grid;
    let results: Vec<Result<(f64, f64, usize)>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = grid.point(k);
            let mut pre = 1.0;
            let mut xi = Vec::with_capacity(n);
            for ((&xv, &a), &c) in x.iter().zip(&params.alpha).zip(&params.c) {
                let t = xv - c;
                pre *= a * t.abs().powf(a - 1.0);
                xi.push(surface_term(kind, a, t));
            }
            if kind == TransformKind::R {
                pre *= y.abs();
            }
            if pre == 0.0 {
                return Ok((0.0, 0.0, 0));
            }
            let v = bp.integrate(&xi, y_term(kind, beta, y))?;
            Ok((constant * pre * v.value, v.clamp_fraction, v.clamped))
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut stats = ReconStats {
        s_truncation: bp.s_truncation(),
        ..Default::default()
    };
    let per_point = sino.s_count() as u64;
    for r in results {
        let (v, frac, clamped) = r.map_err(|e| e.context(format!("invert {kind}")))?;
        values.push(v);
        stats.max_clamp_fraction = stats.max_clamp_fraction.max(frac);
        stats.clamped_lookups += clamped as u64;
        stats.total_lookups += per_point;
    }
    let mut field = Field::new(grid.clone(), values)?
        .with_meta("kind", kind.to_string())
        .with_meta("s_truncation", stats.s_truncation)
        .with_meta("inversion_constant", constant)
        .with_meta("s_refine", req.s_refine.max(1))
        .with_meta("s_extrapolation_radii", bp.extrapolation_radii().to_vec())
        .with_meta("branch", if n % 2 == 1 { "odd" } else { "even" });
    if let Some(filter) = sino.meta.filter {
        field = field.with_meta("filter", serde_json::to_value(filter).expect("filter serializes"));
    }
    if let Some(rule) = &sino.meta.quadrature {
        field = field.with_meta("quadrature_truncation_radius", rule.truncation_radius.clone());
    }
    if req.report_clamps {
        field = field
            .with_meta("max_clamp_fraction", stats.max_clamp_fraction)
            .with_meta("clamped_lookups", stats.clamped_lookups)
            .with_meta("total_lookups", stats.total_lookups);
    }
    Ok((field, stats))
}

fn invert_kind(req: &ReconRequest<'_>, kind: TransformKind) -> Result<Field> {
    if req.sino.kind != kind {
        return Err(RadonError::InvalidParams(format!(
            "sinogram of kind {} passed to the {kind} inversion",
            req.sino.kind
        )));
    }
    invert(req).map(|(f, _)| f)
}

/// Inversion of a filtered P sinogram.
pub fn invert_p(req: &ReconRequest<'_>) -> Result<Field> {
    invert_kind(req, TransformKind::P)
}

/// Inversion of a filtered Q sinogram.
pub fn invert_q(req: &ReconRequest<'_>) -> Result<Field> {
    invert_kind(req, TransformKind::Q)
}

/// Inversion of a filtered R sinogram.
pub fn invert_r(req: &ReconRequest<'_>) -> Result<Field> {
    invert_kind(req, TransformKind::R)
}

/// Everything needed to run forward, filter and inversion in one go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripSetup {
    pub kind: TransformKind,
    pub sinogram_grid: SinogramGrid,
    pub quadrature: QuadratureRule,
    #[serde(default)]
    pub sweep: SweepOptions,
    pub filter: FilterMethod,
    pub recon_grid: FieldGrid,
    #[serde(default)]
    pub s_truncation: STruncation,
    #[serde(default = "one")]
    pub s_refine: usize,
    #[serde(default = "one")]
    pub s_extrapolation: usize,
}

fn one() -> usize {
    1
}

/// Error statistics of a reconstruction against the true function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// `max |err| / max |f|` over the mask.
    pub rel_linf: f64,
    /// `sqrt(sum err^2 / sum f^2)` over the mask.
    pub rel_l2: f64,
    /// Largest pointwise `|err| / |f|` over the mask.
    pub max_pointwise_rel: f64,
    pub abs_linf: f64,
    /// Mask threshold as a fraction of `max |f|`.
    pub mask_level: f64,
    pub mask_points: usize,
}

/// Mask level used by [`error_stats`].
pub const MASK_LEVEL: f64 = 1e-3;

/// Compares `recon` with `reference` on the nodes where `|reference| >= MASK_LEVEL * max`.
pub fn error_stats(recon: &[f64], reference: &[f64]) -> ErrorStats {
    let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = MASK_LEVEL * peak;
    let mut max_err = 0.0f64;
    let mut max_ref = 0.0f64;
    let mut sum_err = 0.0;
    let mut sum_ref = 0.0;
    let mut max_rel = 0.0f64;
    let mut count = 0;
    let mut abs_linf = 0.0f64;
    for (r, f) in recon.iter().zip(reference) {
        let e = (r - f).abs();
        abs_linf = abs_linf.max(e);
        if f.abs() >= level && peak > 0.0 {
            count += 1;
            max_err = max_err.max(e);
            max_ref = max_ref.max(f.abs());
            sum_err += e * e;
            sum_ref += f * f;
            max_rel = max_rel.max(e / f.abs());
        }
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    ErrorStats {
        rel_linf: ratio(max_err, max_ref),
        rel_l2: ratio(sum_err, sum_ref).sqrt(),
        max_pointwise_rel: max_rel,
        abs_linf,
        mask_level: MASK_LEVEL,
        mask_points: count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub kind: TransformKind,
    pub errors: ErrorStats,
    pub recon: ReconStats,
    pub truncation_radius: Vec<f64>,
    pub u_span: (f64, f64),
    pub filtered_u_count: usize,
    /// Wall-clock time per stage; not serialized so artifacts stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
}

/// Artifacts of one round trip.
#[derive(Debug, Clone)]
pub struct RoundtripOutput {
    pub sinogram: Sinogram,
    pub filtered: Sinogram,
    pub field: Field,
    pub reference: Field,
    pub report: RoundtripReport,
}

/// Forward sweep, filter and inversion of a certified phantom, compared with
/// the phantom itself.
pub fn roundtrip_report(f: &Phantom, setup: &RoundtripSetup) -> Result<RoundtripOutput> {
    let params = &f.params;
    let mut timings = Vec::new();
    let t0 = Instant::now();
    let sinogram = forward_sinogram_with(
        f,
        params,
        setup.kind,
        &setup.sinogram_grid,
        &setup.quadrature,
        &setup.sweep,
    )
    .map_err(|e| e.context("forward"))?;
    timings.push(("forward".to_string(), t0.elapsed()));

    let t1 = Instant::now();
    let filtered =
        du_n_filter(&sinogram, setup.filter, Some(f)).map_err(|e| e.context("filter"))?;
    timings.push(("filter".to_string(), t1.elapsed()));

    let t2 = Instant::now();
    let req = ReconRequest {
        sino: &filtered,
        recon_grid: setup.recon_grid.clone(),
        s_truncation: setup.s_truncation,
        report_clamps: true,
        s_refine: setup.s_refine,
        s_extrapolation: setup.s_extrapolation,
    };
    let (field, recon) = invert(&req)?;
    timings.push(("invert".to_string(), t2.elapsed()));

    let reference = Field::from_fn(setup.recon_grid.clone(), |x, y| f.eval(x, y))?;
    let errors = error_stats(&field.values, &reference.values);
    let report = RoundtripReport {
        kind: setup.kind,
        errors,
        recon,
        truncation_radius: setup.quadrature.truncation_radius.clone(),
        u_span: (filtered.grid.u_axis.min, filtered.grid.u_axis.max),
        filtered_u_count: filtered.grid.u_axis.count,
        timings,
    };
    Ok(RoundtripOutput {
        sinogram,
        filtered,
        field,
        reference,
        report,
    })
}
