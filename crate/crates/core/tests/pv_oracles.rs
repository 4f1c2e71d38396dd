use std::f64::consts::PI;

use proptest::prelude::*;
use radonseis::quadrature::{integrate_nd, pv_integral, QuadratureRule};
use radonseis::Grid1D;

mod common;
use common::integrate;

/// Dawson's function by its Maclaurin series (fine for |x| <= 1).
fn dawson_series(x: f64) -> f64 {
    let mut term = x;
    let mut total = x;
    let x2 = x * x;
    for k in 1..60 {
        term *= -2.0 * x2 / (2 * k + 1) as f64;
        total += term;
    }
    total
}

/// PV by symmetric excision of `(pole - eps, pole + eps)` and Richardson
/// extrapolation in `eps`. For smooth `g` the excised value is
/// `PV - 2 g'(pole) eps + O(eps^3)`, so only odd powers appear.
fn pv_excision(g: &dyn Fn(f64) -> f64, a: f64, b: f64, pole: f64) -> f64 {
    let f = |u: f64| g(u) / (pole - u);
    let eps = [0.2, 0.1, 0.05, 0.025];
    let mut table: Vec<f64> = eps
        .iter()
        .map(|&e| integrate(&f, a, pole - e) + integrate(&f, pole + e, b))
        .collect();
    for (level, power) in [1, 3, 5].into_iter().enumerate() {
        let r = 2f64.powi(power);
        for k in 0..table.len() - level - 1 {
            table[k] = (r * table[k + 1] - table[k]) / (r - 1.0);
        }
    }
    table[0]
}

#[test]
fn dawson_oracles_agree() {
    let closed = 2.0 * PI.sqrt() * dawson_series(0.5);
    let excised = pv_excision(&|u: f64| (-u * u).exp(), -12.0, 12.0, 0.5);
    assert!((closed - excised).abs() < 1e-9, "{closed} vs {excised}");
    // frozen from the two oracles above
    assert!((closed - 1.504_587_804_805_14).abs() < 1e-12, "{closed}");
}

#[test]
fn gaussian_pv_matches_dawson() {
    let grid = Grid1D::new(-12.0, 12.0, 4801).unwrap();
    let samples: Vec<f64> = grid.nodes().iter().map(|u| (-u * u).exp()).collect();
    let v = pv_integral(&samples, &grid, 0.5).unwrap();
    let oracle = 2.0 * PI.sqrt() * dawson_series(0.5);
    assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
}

#[test]
fn gaussian_pv_at_off_node_poles() {
    let grid = Grid1D::new(-12.0, 12.0, 2401).unwrap();
    let samples: Vec<f64> = grid.nodes().iter().map(|u| (-u * u).exp()).collect();
    for pole in [-0.93, 0.0, 0.004_7, 0.77] {
        let v = pv_integral(&samples, &grid, pole).unwrap();
        let oracle = pv_excision(&|u: f64| (-u * u).exp(), -12.0, 12.0, pole);
        assert!((v - oracle).abs() < 1e-6, "pole {pole}: {v} vs {oracle}");
    }
}

#[test]
fn lorentzian_pv_tends_to_minus_pi() {
    let grid = Grid1D::new(-200.0, 200.0, 40001).unwrap();
    let samples: Vec<f64> = grid.nodes().iter().map(|u| u / (1.0 + u * u)).collect();
    let v = pv_integral(&samples, &grid, 0.0).unwrap();
    assert!((v + PI).abs() < 1e-2, "{v}");
    assert!((v + 2.0 * 200f64.atan()).abs() < 1e-8, "{v}");
}

#[test]
fn lorentzian_pv_error_shrinks_under_refinement() {
    let truncated = -2.0 * 200f64.atan();
    let err = |count| {
        let grid = Grid1D::new(-200.0, 200.0, count).unwrap();
        let samples: Vec<f64> = grid.nodes().iter().map(|u| u / (1.0 + u * u)).collect();
        (pv_integral(&samples, &grid, 0.0).unwrap() - truncated).abs()
    };
    let (coarse, fine) = (err(401), err(801));
    assert!(coarse >= 3.0 * fine, "{coarse} -> {fine}");
}

#[test]
fn tensor_rule_integrates_separable_gaussian() {
    let rule = QuadratureRule::gauss_legendre(3, 7.0, 14, 10);
    let v = integrate_nd(|x| (-x.iter().map(|t| t * t).sum::<f64>()).exp(), &rule).unwrap();
    assert!((v - PI.powf(1.5)).abs() < 1e-12, "{v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pv_is_translation_covariant(delta in -3.0f64..3.0, pole_frac in 0.2f64..0.8, width in 0.5f64..2.0) {
        let g = |u: f64| (u * u / width).cos() * (-(u / width).powi(2)).exp();
        let base = Grid1D::new(-10.0, 10.0, 801).unwrap();
        let moved = Grid1D::new(-10.0 + delta, 10.0 + delta, 801).unwrap();
        let pole = -10.0 + 20.0 * pole_frac;
        let a: Vec<f64> = base.nodes().iter().map(|&u| g(u)).collect();
        let b: Vec<f64> = moved.nodes().iter().map(|&u| g(u - delta)).collect();
        let va = pv_integral(&a, &base, pole).unwrap();
        let vb = pv_integral(&b, &moved, pole + delta).unwrap();
        prop_assert!((va - vb).abs() <= 1e-10 * (1.0 + va.abs()), "{} vs {}", va, vb);
    }

    #[test]
    fn pv_of_function_even_about_pole_vanishes(pole in -5.0f64..5.0, width in 0.3f64..3.0, half in 200usize..600) {
        let grid = Grid1D::new(pole - 12.0, pole + 12.0, 2 * half + 1).unwrap();
        let samples: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&u| (1.0 + (u - pole).powi(2)) * (-((u - pole) / width).powi(2)).exp())
            .collect();
        let v = pv_integral(&samples, &grid, pole).unwrap();
        prop_assert!(v.abs() <= 1e-10, "{}", v);
    }

    #[test]
    fn pv_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, pole in -4.0f64..4.0) {
        let grid = Grid1D::new(-12.0, 12.0, 601).unwrap();
        let g1: Vec<f64> = grid.nodes().iter().map(|u| (-u * u).exp()).collect();
        let g2: Vec<f64> = grid.nodes().iter().map(|u| u * (-0.5 * u * u).exp()).collect();
        let mix: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let lhs = pv_integral(&mix, &grid, pole).unwrap();
        let rhs = a * pv_integral(&g1, &grid, pole).unwrap() + b * pv_integral(&g2, &grid, pole).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }
}
