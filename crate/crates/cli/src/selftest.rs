//! Built-in analytic and property checks, run by `radonseis selftest`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radonseis::quadrature::pv_integral;
use radonseis::seismic::{forward_p, reduction_identity_check, ReductionReport};
use radonseis::source::FnSource;
use radonseis::standard_radon::chart_measure;
use radonseis::{
    make_phantom, FunctionSpace, Grid1D, PhantomWidths, QuadratureRule, Result, TransformKind, TransformParams,
    VanishingOrders,
};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Check::new(name, passed, detail),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        }
    }
}

/// Dawson's function by its Maclaurin series (accurate for |x| <= 1).
pub fn dawson(x: f64) -> f64 {
    let mut term = x;
    let mut total = x;
    for k in 1..60 {
        term *= -2.0 * x * x / (2 * k + 1) as f64;
        total += term;
    }
    total
}

/// `(s, u)` samples with `|s_i| < 1.5`; `u` is kept positive where the
/// hyperbolic transform needs a non-empty level set.
pub fn samples(n: usize, count: usize, positive_u: bool, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let u = if positive_u {
                rng.gen_range(0.05..2.0)
            } else {
                rng.gen_range(-2.0..2.0)
            };
            (s, u)
        })
        .collect()
}

/// Direct forward transform against the graph transform of the derived
/// integrand, for the minimal phantom of `kind` with exponents `alpha`.
pub fn reduction_check(kind: TransformKind, alpha: &[f64], count: usize, seed: u64) -> Result<ReductionReport> {
    let n = alpha.len();
    let beta = (kind == TransformKind::R).then_some(2.0);
    let params = TransformParams::centered(alpha.to_vec(), beta)?;
    let space = FunctionSpace::required_by(kind).expect("seismic kind");
    let ph = make_phantom(&params, &VanishingOrders::minimal_for(&params), space, &PhantomWidths::uniform(n, 1.0))?;
    let x_rule = QuadratureRule::gauss_legendre(n, 7.0, 64, 12);
    // xi = |x|^alpha, so the derived side reaches out to 7^alpha
    let mut xi_rule = QuadratureRule::gauss_legendre(n, 1.0, 32, 12).with_grading(12);
    for (i, a) in alpha.iter().enumerate() {
        xi_rule = xi_rule.with_axis(i, 7f64.powf(*a), 32 * 12);
    }
    let pts = samples(n, count, kind == TransformKind::R, seed);
    reduction_identity_check(&ph, &params, kind, &pts, &x_rule, &xi_rule)
}

/// Largest `|P f_odd| / P |f_odd|` over `count` samples, for a source odd in
/// `x_1`; the denominator is the quadrature scale of the integral.
pub fn odd_part_annihilation(n: usize, count: usize, seed: u64) -> Result<f64> {
    let odd = |x: &[f64], y: f64| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        x[0] * (1.0 + x[0] * x[0]) * (-r2 - (y - 0.3).powi(2)).exp()
    };
    let f = FnSource::new(n, "odd in x_1", odd);
    let abs = FnSource::new(n, "|odd|", |x: &[f64], y: f64| odd(x, y).abs());
    let params = TransformParams::centered(vec![2.0; n], None)?;
    let rule = QuadratureRule::trapezoid(n, 7.0, 281);
    let mut worst = 0.0f64;
    for (s, u) in samples(n, count, false, seed) {
        let v = forward_p(&f, &params, &s, u, &rule)?;
        let scale = forward_p(&abs, &params, &s, u, &rule)?;
        if scale > 0.0 {
            worst = worst.max(v.abs() / scale);
        }
    }
    Ok(worst)
}

fn chart_checks() -> Result<(bool, String)> {
    let s_max = 1000.0;
    let one = chart_measure(&[Grid1D::symmetric(s_max, 40_001)?])?;
    let exact_one = 2.0 * f64::atan(s_max);
    let s2: f64 = 10.0;
    let g = Grid1D::symmetric(s2, 401)?;
    let two = chart_measure(&[g, g])?;
    let exact_two = 4.0 * (s2 * s2 / (1.0 + 2.0 * s2 * s2).sqrt()).atan();
    let ok = (one - exact_one).abs() < 1e-6 && (PI - one).abs() <= 2.1e-3 && (two - exact_two).abs() < 1e-5;
    Ok((
        ok,
        format!("n=1 S=1000: {one:.9} (pi - {:.3e}); n=2 box S=10: {two:.9} vs {exact_two:.9}", PI - one),
    ))
}

fn pv_checks() -> Result<(bool, String)> {
    let grid = Grid1D::symmetric(12.0, 4801)?;
    let gauss: Vec<f64> = grid.nodes().iter().map(|u| (-u * u).exp()).collect();
    let v = pv_integral(&gauss, &grid, 0.5)?;
    let dawson_err = (v - 2.0 * PI.sqrt() * dawson(0.5)).abs();
    let wide = Grid1D::symmetric(200.0, 40_001)?;
    let lorentz: Vec<f64> = wide.nodes().iter().map(|u| u / (1.0 + u * u)).collect();
    let l = pv_integral(&lorentz, &wide, 0.0)?;
    let truncated = -2.0 * 200f64.atan();
    let err = |count| -> Result<f64> {
        let g = Grid1D::symmetric(200.0, count)?;
        let s: Vec<f64> = g.nodes().iter().map(|u| u / (1.0 + u * u)).collect();
        Ok((pv_integral(&s, &g, 0.0)? - truncated).abs())
    };
    let ratio = err(401)? / err(801)?;
    let ok = dawson_err < 1e-6 && (l + PI).abs() < 1e-2 && ratio >= 3.0;
    Ok((
        ok,
        format!("Gaussian error {dawson_err:.2e}; Lorentzian {l:.6}; refinement ratio {ratio:.1}"),
    ))
}

fn reduction_checks(seed: u64) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, alpha, tol) in [
        (TransformKind::P, 2.0, 1e-6),
        (TransformKind::Q, 3.0, 1e-6),
        (TransformKind::R, 2.0, 1e-5),
    ] {
        let r = reduction_check(kind, &[alpha], 8, seed)?;
        ok &= r.max_relative_deviation <= tol;
        parts.push(format!("{kind} {:.2e}", r.max_relative_deviation));
    }
    Ok((ok, parts.join(", ")))
}

fn odd_checks(seed: u64) -> Result<(bool, String)> {
    let worst = odd_part_annihilation(1, 25, seed)?.max(odd_part_annihilation(2, 5, seed)?);
    Ok((worst <= 1e-10, format!("max |P f_odd| / P|f_odd| = {worst:.2e}")))
}

/// Runs every check; `seed` drives the sampled `(s, u)` points.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    vec![
        Check::from_result("chart measure", chart_checks()),
        Check::from_result("principal value", pv_checks()),
        Check::from_result("reduction identities (n=1)", reduction_checks(seed)),
        Check::from_result("odd-part annihilation", odd_checks(seed)),
    ]
}
