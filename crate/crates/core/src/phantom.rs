//! Separable test functions `f(x, y) = prod e_i(x_i - c_i) * h(y)` built from
//! polynomial-times-Gaussian profiles, with membership certification for the
//! three function spaces the transforms are defined on.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RadonError, Result};
use crate::types::{validate_params, TransformKind, TransformParams, VanishingOrders};

/// Function spaces, from weakest to strongest requirements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionSpace {
    /// Vanishing orders only.
    #[serde(rename = "S_cm")]
    Scm,
    /// Plus evenness in each `x_i` about `c_i`.
    #[serde(rename = "S_cm_P")]
    ScmP,
    /// Plus evenness in `y` and `f(x, 0) = 0`.
    #[serde(rename = "S_cm_R")]
    ScmR,
}

impl FunctionSpace {
    /// The space a transform kind requires of its input.
    pub fn required_by(kind: TransformKind) -> Option<FunctionSpace> {
        match kind {
            TransformKind::P => Some(FunctionSpace::ScmP),
            TransformKind::Q => Some(FunctionSpace::Scm),
            TransformKind::R => Some(FunctionSpace::ScmR),
            TransformKind::XStandard => None,
        }
    }

    /// Whether membership in `self` implies membership in `other`.
    pub fn contained_in(self, other: FunctionSpace) -> bool {
        self.rank() >= other.rank()
    }

    fn rank(self) -> u8 {
        match self {
            FunctionSpace::Scm => 0,
            FunctionSpace::ScmP => 1,
            FunctionSpace::ScmR => 2,
        }
    }

    fn x_even(self) -> bool {
        self != FunctionSpace::Scm
    }
}

impl fmt::Display for FunctionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionSpace::Scm => "S_cm",
            FunctionSpace::ScmP => "S_cm_P",
            FunctionSpace::ScmR => "S_cm_R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    EvenForced,
    Free,
}

/// `e(t) = t^p exp(-(t/w)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisProfile {
    pub exponent: u32,
    pub width: f64,
    pub parity: Parity,
}

impl AxisProfile {
    pub fn new(exponent: u32, width: f64, parity: Parity) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(RadonError::InvalidParams(format!(
                "profile width must be positive, got {width}"
            )));
        }
        if parity == Parity::EvenForced && !exponent.is_multiple_of(2) {
            return Err(RadonError::InvalidParams(format!(
                "even-forced profile has odd exponent {exponent}"
            )));
        }
        Ok(AxisProfile {
            exponent,
            width,
            parity,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let z = t / self.width;
        t.powi(self.exponent as i32) * (-z * z).exp()
    }

    pub fn to_poly(&self) -> PolyGaussian {
        let mut coeffs = vec![0.0; self.exponent as usize + 1];
        coeffs[self.exponent as usize] = 1.0;
        PolyGaussian {
            coeffs,
            width: self.width,
        }
    }
}

/// `P(t) exp(-(t/w)^2)` with `P` given by ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyGaussian {
    pub coeffs: Vec<f64>,
    pub width: f64,
}

impl PolyGaussian {
    pub fn eval(&self, t: f64) -> f64 {
        let p = self.coeffs.iter().rev().fold(0.0f64, |acc, c| acc.mul_add(t, *c));
        let z = t / self.width;
        p * (-z * z).exp()
    }

    pub fn derivative(&self) -> PolyGaussian {
        // (P' - 2 t P / w^2) e^{-t^2/w^2}
        let k = self.coeffs.len();
        let mut out = vec![0.0; k + 1];
        for (j, c) in self.coeffs.iter().enumerate() {
            if j > 0 {
                out[j - 1] += j as f64 * c;
            }
            out[j + 1] -= 2.0 * c / (self.width * self.width);
        }
        while out.len() > 1 && *out.last().unwrap() == 0.0 {
            out.pop();
        }
        PolyGaussian {
            coeffs: out,
            width: self.width,
        }
    }

    pub fn derivative_n(&self, k: usize) -> PolyGaussian {
        (0..k).fold(self.clone(), |p, _| p.derivative())
    }

    /// `int_R P(t) e^{-(t/w)^2} dt` in closed form.
    pub fn integral(&self) -> f64 {
        // int t^{2j} e^{-t^2/w^2} dt = w^{2j+1} Gamma(j + 1/2)
        let mut gamma = std::f64::consts::PI.sqrt();
        let mut total = 0.0;
        for (deg, c) in self.coeffs.iter().enumerate() {
            if deg % 2 == 0 {
                let j = deg / 2;
                if j > 0 {
                    gamma *= j as f64 - 0.5;
                }
                total += c * self.width.powi(deg as i32 + 1) * gamma;
            }
        }
        total
    }
}

/// Product-form function `prod_i x_factors[i](x_i - center_i) * y_factor(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableFunction {
    pub center: Vec<f64>,
    pub x_factors: Vec<PolyGaussian>,
    pub y_factor: PolyGaussian,
    /// Space the function was certified for, if any.
    #[serde(skip)]
    pub certified: Option<FunctionSpace>,
}

impl SeparableFunction {
    pub fn dim(&self) -> usize {
        self.x_factors.len()
    }

    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        let mut v = self.y_factor.eval(y);
        for ((e, xi), ci) in self.x_factors.iter().zip(x).zip(&self.center) {
            v *= e.eval(xi - ci);
        }
        v
    }

    /// `d^k/dy^k`, still in product form.
    pub fn dy(&self, k: usize) -> SeparableFunction {
        SeparableFunction {
            y_factor: self.y_factor.derivative_n(k),
            ..self.clone()
        }
    }

    /// Translates the function by `delta` in `y`.
    pub fn shifted_y(&self, delta: f64) -> ShiftedY<'_> {
        ShiftedY { f: self, delta }
    }
}

/// `f(x, y - delta)`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedY<'a> {
    pub f: &'a SeparableFunction,
    pub delta: f64,
}

/// Gaussian widths for a phantom's x and y profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomWidths {
    pub x: Vec<f64>,
    pub y: f64,
}

impl PhantomWidths {
    pub fn uniform(n: usize, w: f64) -> Self {
        PhantomWidths { x: vec![w; n], y: w }
    }
}

/// A separable test function together with the space it claims to lie in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub params: TransformParams,
    pub orders: VanishingOrders,
    pub axis_profiles: Vec<AxisProfile>,
    pub y_profile: AxisProfile,
    pub space: FunctionSpace,
    #[serde(skip)]
    certified: bool,
}

/// Builds the phantom with minimal exponents for the requested space and
/// certifies it.
pub fn make_phantom(
    params: &TransformParams,
    orders: &VanishingOrders,
    space: FunctionSpace,
    widths: &PhantomWidths,
) -> Result<Phantom> {
    let report = validate_params(params, orders);
    if !report.is_ok() {
        return Err(RadonError::InvalidParams(report.to_string()));
    }
    if widths.x.len() != params.n {
        return Err(RadonError::Dimension(format!(
            "{} x widths for n = {}",
            widths.x.len(),
            params.n
        )));
    }
    let parity = if space.x_even() {
        Parity::EvenForced
    } else {
        Parity::Free
    };
    let mut axis_profiles = Vec::with_capacity(params.n);
    for (i, &w) in widths.x.iter().enumerate() {
        let mut p = orders.get(i) as u32 + 1;
        if parity == Parity::EvenForced && p % 2 == 1 {
            p += 1;
        }
        axis_profiles.push(AxisProfile::new(p, w, parity)?);
    }
    let y_profile = match space {
        FunctionSpace::ScmR => AxisProfile::new(2, widths.y, Parity::EvenForced)?,
        _ => AxisProfile::new(0, widths.y, Parity::Free)?,
    };
    Phantom::from_profiles(params.clone(), orders.clone(), axis_profiles, y_profile, space)?
        .certify()
}

impl Phantom {
    /// Assembles a phantom without certifying it; forward transforms refuse
    /// it until [`Phantom::certify`] succeeds.
    pub fn from_profiles(
        params: TransformParams,
        orders: VanishingOrders,
        axis_profiles: Vec<AxisProfile>,
        y_profile: AxisProfile,
        space: FunctionSpace,
    ) -> Result<Phantom> {
        if axis_profiles.len() != params.n || orders.m.len() != params.n {
            return Err(RadonError::Dimension(format!(
                "phantom has {} profiles and {} orders for n = {}",
                axis_profiles.len(),
                orders.m.len(),
                params.n
            )));
        }
        Ok(Phantom {
            params,
            orders,
            axis_profiles,
            y_profile,
            space,
            certified: false,
        })
    }

    /// Runs [`certify_membership`] and marks the phantom certified if every
    /// check passes.
    pub fn certify(mut self) -> Result<Phantom> {
        let report = certify_membership(&self);
        if report.passed() {
            self.certified = true;
            Ok(self)
        } else {
            Err(RadonError::Uncertified(format!(
                "{}: {}",
                self.space,
                report.failures().join("; ")
            )))
        }
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        eval_phantom(self, x, y)
    }

    pub fn separable(&self) -> SeparableFunction {
        SeparableFunction {
            center: self.params.c.clone(),
            x_factors: self.axis_profiles.iter().map(|p| p.to_poly()).collect(),
            y_factor: self.y_profile.to_poly(),
            certified: self.certified.then_some(self.space),
        }
    }
}

pub fn eval_phantom(phantom: &Phantom, x: &[f64], y: f64) -> f64 {
    let mut v = phantom.y_profile.eval(y);
    for ((p, xi), ci) in phantom.axis_profiles.iter().zip(x).zip(&phantom.params.c) {
        v *= p.eval(xi - ci);
    }
    v
}

/// Exact `d^k f / dy^k` in product form.
pub fn phantom_dy(phantom: &Phantom, order: usize) -> SeparableFunction {
    phantom.separable().dy(order)
}

/// One certification check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub condition: String,
    /// 1-based axis, if the check concerns one.
    pub axis: Option<usize>,
    /// Derivative order for vanishing checks.
    pub order: Option<usize>,
    pub passed: bool,
    /// Largest observed deviation relative to the check's scale.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub space: FunctionSpace,
    pub checks: Vec<CheckResult>,
}

impl MembershipReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| {
                let mut s = c.condition.clone();
                if let Some(a) = c.axis {
                    s.push_str(&format!(" axis {a}"));
                }
                if let Some(k) = c.order {
                    s.push_str(&format!(" order {k}"));
                }
                s
            })
            .collect()
    }
}

const CERTIFY_SEED: u64 = 42;
const CERTIFY_SAMPLES: usize = 32;
const SYMMETRY_TOL: f64 = 1e-12;
const VANISHING_TOL: f64 = 1e-8;

/// Verifies the claimed space's conditions at seeded random points.
pub fn certify_membership(phantom: &Phantom) -> MembershipReport {
    certify_membership_seeded(phantom, CERTIFY_SEED)
}

pub fn certify_membership_seeded(phantom: &Phantom, seed: u64) -> MembershipReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = phantom.n();
    let c = &phantom.params.c;
    let wx: Vec<f64> = phantom.axis_profiles.iter().map(|p| p.width).collect();
    let wy = phantom.y_profile.width;
    let mut checks = Vec::new();

    let random_point = |rng: &mut ChaCha8Rng| -> (Vec<f64>, f64) {
        let x = (0..n)
            .map(|i| c[i] + wx[i] * rng.gen_range(-2.0..2.0))
            .collect();
        (x, wy * rng.gen_range(-2.0..2.0))
    };
    let f = |x: &[f64], y: f64| eval_phantom(phantom, x, y);

    if phantom.space.x_even() {
        for i in 0..n {
            let mut worst = 0.0f64;
            for _ in 0..CERTIFY_SAMPLES {
                let (mut x, y) = random_point(&mut rng);
                let a = f(&x, y);
                x[i] = 2.0 * c[i] - x[i];
                let b = f(&x, y);
                let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
                worst = worst.max((a - b).abs() / scale);
            }
            checks.push(CheckResult {
                condition: "even in x about c".into(),
                axis: Some(i + 1),
                order: None,
                passed: worst <= SYMMETRY_TOL,
                worst,
            });
        }
    }
    if phantom.space == FunctionSpace::ScmR {
        let mut worst = 0.0f64;
        for _ in 0..CERTIFY_SAMPLES {
            let (x, y) = random_point(&mut rng);
            let a = f(&x, y);
            let b = f(&x, -y);
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((a - b).abs() / scale);
        }
        checks.push(CheckResult {
            condition: "even in y".into(),
            axis: None,
            order: None,
            passed: worst <= SYMMETRY_TOL,
            worst,
        });
    }

    for i in 0..n {
        let m = phantom.orders.get(i);
        for k in 0..=m {
            let mut worst = 0.0f64;
            for _ in 0..CERTIFY_SAMPLES / 4 {
                let (mut x, y) = random_point(&mut rng);
                let h = 0.05 * wx[i];
                let radius = k / 2 + 5;
                let offsets: Vec<f64> = (-(radius as i64)..=radius as i64)
                    .map(|j| j as f64)
                    .collect();
                let weights = fornberg_weights(0.0, &offsets, k);
                let mut line_max = 0.0f64;
                let mut acc = 0.0;
                for (t, w) in offsets.iter().zip(&weights) {
                    x[i] = c[i] + t * h;
                    let v = f(&x, y);
                    acc += w * v;
                    line_max = line_max.max(v.abs());
                }
                // typical size of a k-th derivative along this line
                for t in [0.5, 1.0, 1.5] {
                    x[i] = c[i] + t * wx[i];
                    line_max = line_max.max(f(&x, y).abs());
                }
                let deriv = acc / h.powi(k as i32);
                let scale = (line_max / wx[i].powi(k as i32)).max(f64::MIN_POSITIVE);
                worst = worst.max(deriv.abs() / scale);
            }
            checks.push(CheckResult {
                condition: "derivative vanishes at c".into(),
                axis: Some(i + 1),
                order: Some(k),
                passed: worst <= VANISHING_TOL,
                worst,
            });
        }
    }

    if phantom.space == FunctionSpace::ScmR {
        let mut worst = 0.0f64;
        for _ in 0..CERTIFY_SAMPLES {
            let (x, _) = random_point(&mut rng);
            let scale = (0..4)
                .map(|j| f(&x, wy * 0.5 * j as f64).abs())
                .fold(f64::MIN_POSITIVE, f64::max);
            worst = worst.max(f(&x, 0.0).abs() / scale);
        }
        checks.push(CheckResult {
            condition: "vanishes at y = 0".into(),
            axis: None,
            order: None,
            passed: worst <= SYMMETRY_TOL,
            worst,
        });
    }

    MembershipReport {
        space: phantom.space,
        checks,
    }
}

/// Finite-difference weights for the `order`-th derivative at `z` on the
/// given nodes (Fornberg's recursion).
pub fn fornberg_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let m = order;
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
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
