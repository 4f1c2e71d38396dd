//! Shared domain types: transform parameters, uniform grids, sinograms and fields.
//!
//! Everything here is plain data. Constructors validate invariants; the
//! report-style [`validate_params`] lists every violated constraint instead of
//! stopping at the first one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RadonError, Result};
use crate::quadrature::QuadratureRule;

/// Which transform family a sinogram belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    /// Power-law graphs `y = sum s_i |x_i - c_i|^alpha_i + u`.
    P,
    /// Signed-power graphs `y = sum s_i (x_i - c_i)|x_i - c_i|^(alpha_i - 1) + u`.
    Q,
    /// Level sets `|y|^beta = sum s_i |x_i - c_i|^alpha_i + u`.
    R,
    /// Standard Radon transform over graph hyperplanes, in chart coordinates.
    #[serde(rename = "X")]
    XStandard,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TransformKind::P => "P",
            TransformKind::Q => "Q",
            TransformKind::R => "R",
            TransformKind::XStandard => "X",
        };
        f.write_str(s)
    }
}

/// Exponents, center and dimension of a transform family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub n: usize,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    pub c: Vec<f64>,
}

impl TransformParams {
    /// Builds parameters and rejects anything [`validate_params`] would flag.
    pub fn new(alpha: Vec<f64>, beta: Option<f64>, c: Vec<f64>) -> Result<Self> {
        let params = TransformParams {
            n: alpha.len(),
            alpha,
            beta,
            c,
        };
        params.check()?;
        Ok(params)
    }

    /// Origin-centered parameters, `c = 0`.
    pub fn centered(alpha: Vec<f64>, beta: Option<f64>) -> Result<Self> {
        let c = vec![0.0; alpha.len()];
        Self::new(alpha, beta, c)
    }

    pub fn check(&self) -> Result<()> {
        let report = validate_params_only(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(RadonError::InvalidParams(report.to_string()))
        }
    }

    pub fn beta_or_err(&self) -> Result<f64> {
        self.beta
            .ok_or_else(|| RadonError::InvalidParams("beta is required for kind R".into()))
    }
}

/// Vanishing orders `m_i` at `x_i = c_i`.
///
/// Stored signed so that malformed input can be reported rather than rejected
/// at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VanishingOrders {
    pub m: Vec<i64>,
}

impl VanishingOrders {
    pub fn new(m: Vec<i64>) -> Self {
        VanishingOrders { m }
    }

    /// Smallest orders satisfying `m_i >= alpha_i - 2`.
    pub fn minimal_for(params: &TransformParams) -> Self {
        let m = params
            .alpha
            .iter()
            .map(|a| (a - 2.0).ceil().max(0.0) as i64)
            .collect();
        VanishingOrders { m }
    }

    pub fn get(&self, i: usize) -> usize {
        self.m[i].max(0) as usize
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Axis the violation refers to, 1-based, if any.
    pub axis: Option<usize>,
    pub constraint: String,
    pub detail: String,
}

/// Result of [`validate_params`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, axis: Option<usize>, constraint: &str, detail: String) {
        self.violations.push(Violation {
            axis,
            constraint: constraint.to_string(),
            detail,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            match v.axis {
                Some(i) => write!(f, "axis {}: {} ({})", i, v.constraint, v.detail)?,
                None => write!(f, "{} ({})", v.constraint, v.detail)?,
            }
        }
        Ok(())
    }
}

fn validate_params_only(params: &TransformParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    if params.n < 1 {
        report.push(None, "n >= 1", format!("n = {}", params.n));
    }
    if params.alpha.len() != params.n {
        report.push(
            None,
            "alpha has n entries",
            format!("{} entries for n = {}", params.alpha.len(), params.n),
        );
    }
    if params.c.len() != params.n {
        report.push(
            None,
            "c has n entries",
            format!("{} entries for n = {}", params.c.len(), params.n),
        );
    }
    for (i, a) in params.alpha.iter().enumerate() {
        if !(a.is_finite() && *a > 1.0) {
            report.push(Some(i + 1), "alpha > 1", format!("alpha = {a}"));
        }
    }
    for (i, c) in params.c.iter().enumerate() {
        if !c.is_finite() {
            report.push(Some(i + 1), "c finite", format!("c = {c}"));
        }
    }
    if let Some(b) = params.beta {
        if !(b.is_finite() && b > 1.0) {
            report.push(None, "beta > 1", format!("beta = {b}"));
        }
    }
    report
}

/// Checks every parameter invariant and the vanishing-order condition
/// `m_i >= alpha_i - 2`, listing all violations.
pub fn validate_params(params: &TransformParams, orders: &VanishingOrders) -> ValidationReport {
    let mut report = validate_params_only(params);
    if orders.m.len() != params.n {
        report.push(
            None,
            "m has n entries",
            format!("{} entries for n = {}", orders.m.len(), params.n),
        );
    }
    for (i, &m) in orders.m.iter().enumerate() {
        if m < 0 {
            report.push(Some(i + 1), "m nonnegative", format!("m = {m}"));
            continue;
        }
        if let Some(&a) = params.alpha.get(i) {
            if (m as f64) < a - 2.0 {
                report.push(
                    Some(i + 1),
                    "m >= alpha - 2",
                    format!("m = {m} < {}", a - 2.0),
                );
            }
        }
    }
    report
}

/// Uniform grid on `[min, max]` with `count` nodes, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Grid1DRaw")]
pub struct Grid1D {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Deserialize)]
struct Grid1DRaw {
    min: f64,
    max: f64,
    count: usize,
}

impl TryFrom<Grid1DRaw> for Grid1D {
    type Error = RadonError;

    fn try_from(raw: Grid1DRaw) -> Result<Self> {
        Grid1D::new(raw.min, raw.max, raw.count)
    }
}

impl Grid1D {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(RadonError::InvalidGrid(format!(
                "non-finite bounds [{min}, {max}]"
            )));
        }
        if min >= max {
            return Err(RadonError::InvalidGrid(format!("min {min} >= max {max}")));
        }
        if count < 2 {
            return Err(RadonError::InvalidGrid(format!("count {count} < 2")));
        }
        Ok(Grid1D { min, max, count })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, count: usize) -> Result<Self> {
        Self::new(-half_width, half_width, count)
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        (i as f64).mul_add(self.step(), self.min)
    }

    pub fn nodes(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.count)
            .map(|i| (i as f64).mul_add(step, self.min))
            .collect()
    }

    /// Same span, `factor`-times finer step.
    pub fn refined(&self, factor: usize) -> Self {
        Grid1D {
            min: self.min,
            max: self.max,
            count: (self.count - 1) * factor + 1,
        }
    }

    /// Interior sub-grid with `k` nodes removed from each end.
    pub fn trimmed(&self, k: usize) -> Result<Self> {
        if self.count < 2 * k + 2 {
            return Err(RadonError::InvalidGrid(format!(
                "cannot trim {k} nodes from each end of a {}-node grid",
                self.count
            )));
        }
        Ok(Grid1D {
            min: self.node(k),
            max: self.node(self.count - 1 - k),
            count: self.count - 2 * k,
        })
    }

    /// Trapezoid weights for the grid nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.count];
        w[0] = 0.5 * h;
        w[self.count - 1] = 0.5 * h;
        w
    }
}

/// Row-major shape helper shared by sinograms and fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Self {
        Shape { dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn unflatten(&self, mut k: usize) -> Vec<usize> {
        let mut index = vec![0; self.dims.len()];
        for (slot, &d) in index.iter_mut().zip(&self.dims).rev() {
            *slot = k % d;
            k /= d;
        }
        index
    }
}

/// Sampling of `(s, u)`: one axis per slope coordinate plus the offset axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinogramGrid {
    pub s_axes: Vec<Grid1D>,
    pub u_axis: Grid1D,
}

impl SinogramGrid {
    pub fn new(s_axes: Vec<Grid1D>, u_axis: Grid1D) -> Self {
        SinogramGrid { s_axes, u_axis }
    }

    pub fn n(&self) -> usize {
        self.s_axes.len()
    }

    pub fn shape(&self) -> Shape {
        let mut dims: Vec<usize> = self.s_axes.iter().map(|g| g.count).collect();
        dims.push(self.u_axis.count);
        Shape::new(dims)
    }

    pub fn s_shape(&self) -> Shape {
        Shape::new(self.s_axes.iter().map(|g| g.count).collect())
    }

    pub fn len(&self) -> usize {
        self.shape().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(s, u)` coordinates of flat cell `k`.
    pub fn point(&self, k: usize) -> (Vec<f64>, f64) {
        let idx = self.shape().unflatten(k);
        let n = self.n();
        let s = (0..n).map(|i| self.s_axes[i].node(idx[i])).collect();
        (s, self.u_axis.node(idx[n]))
    }

    /// Slope vector of flat s-index `j` (row-major over the s axes).
    pub fn s_point(&self, j: usize) -> Vec<f64> {
        let idx = self.s_shape().unflatten(j);
        idx.iter()
            .zip(&self.s_axes)
            .map(|(&i, g)| g.node(i))
            .collect()
    }
}

/// Which filter produced a derivative sinogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMethod {
    FiniteDifference,
    ExactDy,
}

/// Provenance carried by every sinogram.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SinogramMeta {
    /// Quadrature used for the forward integrals.
    #[serde(default)]
    pub quadrature: Option<QuadratureRule>,
    /// Filter applied, if any.
    #[serde(default)]
    pub filter: Option<FilterMethod>,
    /// u-nodes dropped from each end by the finite-difference filter.
    #[serde(default)]
    pub trimmed_u_nodes: usize,
    /// Free-form description of the source function.
    #[serde(default)]
    pub source: String,
    /// z-step of the tabulated inner integral, when the nested forward path was used.
    #[serde(default)]
    pub nested_table_step: Option<f64>,
}

/// Sampled transform values over a [`SinogramGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub kind: TransformKind,
    pub params: TransformParams,
    pub grid: SinogramGrid,
    pub values: Vec<f64>,
    pub derivative_order: usize,
    #[serde(default)]
    pub meta: SinogramMeta,
}

impl Sinogram {
    pub fn new(
        kind: TransformKind,
        params: TransformParams,
        grid: SinogramGrid,
        values: Vec<f64>,
        derivative_order: usize,
        meta: SinogramMeta,
    ) -> Result<Self> {
        let sino = Sinogram {
            kind,
            params,
            grid,
            values,
            derivative_order,
            meta,
        };
        sino.check()?;
        Ok(sino)
    }

    pub fn zeros(
        kind: TransformKind,
        params: TransformParams,
        grid: SinogramGrid,
        derivative_order: usize,
    ) -> Self {
        let len = grid.len();
        Sinogram {
            kind,
            params,
            grid,
            values: vec![0.0; len],
            derivative_order,
            meta: SinogramMeta::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.grid.n() != self.params.n {
            return Err(RadonError::Dimension(format!(
                "sinogram has {} slope axes but n = {}",
                self.grid.n(),
                self.params.n
            )));
        }
        if self.values.len() != self.grid.len() {
            return Err(RadonError::Dimension(format!(
                "sinogram holds {} values for a grid of {}",
                self.values.len(),
                self.grid.len()
            )));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(RadonError::NonFinite {
                node: {
                    let (mut s, u) = self.grid.point(k);
                    s.push(u);
                    s
                },
                value: self.values[k],
            });
        }
        Ok(())
    }

    /// Samples along u for flat s-index `j`.
    pub fn u_line(&self, j: usize) -> &[f64] {
        let nu = self.grid.u_axis.count;
        &self.values[j * nu..(j + 1) * nu]
    }

    pub fn s_count(&self) -> usize {
        self.grid.s_shape().len()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.grid.shape().flatten(index)]
    }
}

/// Axes of a reconstruction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub x_axes: Vec<Grid1D>,
    pub y_axis: Grid1D,
}

impl FieldGrid {
    pub fn new(x_axes: Vec<Grid1D>, y_axis: Grid1D) -> Self {
        FieldGrid { x_axes, y_axis }
    }

    pub fn n(&self) -> usize {
        self.x_axes.len()
    }

    pub fn shape(&self) -> Shape {
        let mut dims: Vec<usize> = self.x_axes.iter().map(|g| g.count).collect();
        dims.push(self.y_axis.count);
        Shape::new(dims)
    }

    pub fn len(&self) -> usize {
        self.shape().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(x, y)` coordinates of flat node `k`.
    pub fn point(&self, k: usize) -> (Vec<f64>, f64) {
        let idx = self.shape().unflatten(k);
        let n = self.n();
        let x = (0..n).map(|i| self.x_axes[i].node(idx[i])).collect();
        (x, self.y_axis.node(idx[n]))
    }
}

/// Sampled function of `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: FieldGrid,
    pub values: Vec<f64>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Field {
    pub fn new(grid: FieldGrid, values: Vec<f64>) -> Result<Self> {
        let field = Field {
            grid,
            values,
            meta: BTreeMap::new(),
        };
        field.check()?;
        Ok(field)
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(grid: FieldGrid, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(&x, y)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn check(&self) -> Result<()> {
        if self.values.len() != self.grid.len() {
            return Err(RadonError::Dimension(format!(
                "field holds {} values for a grid of {}",
                self.values.len(),
                self.grid.len()
            )));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            let (mut x, y) = self.grid.point(k);
            x.push(y);
            return Err(RadonError::NonFinite {
                node: x,
                value: self.values[k],
            });
        }
        Ok(())
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }
}
