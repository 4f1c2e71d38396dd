use std::f64::consts::PI;

use proptest::prelude::*;
use radonseis::phantom::PolyGaussian;
use radonseis::seismic::du_n_filter;
use radonseis::standard_radon::{
    chart_measure, chart_to_sphere, chart_to_sphere_t, invert_radon_chart, invert_radon_chart_many,
    radon_hyperplane, radon_of_graph, standard_constant, ChartBackprojector,
};
use radonseis::{
    FilterMethod, Grid1D, QuadratureRule, Sinogram, SinogramGrid, SinogramMeta, TransformKind,
    TransformParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn a(t: f64) -> f64 {
    t * t * (-t * t).exp()
}

fn big_f(xi: &[f64], eta: f64) -> f64 {
    xi.iter().map(|&t| a(t)).product::<f64>() * (-eta * eta).exp()
}

fn chart_sinogram(grid: SinogramGrid, order: usize, sample: impl Fn(&[f64], f64) -> f64 + Sync) -> Sinogram {
    let n = grid.n();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (s, u) = grid.point(k);
            sample(&s, u)
        })
        .collect();
    let params = TransformParams::centered(vec![2.0; n], None).unwrap();
    Sinogram::new(TransformKind::XStandard, params, grid, values, order, SinogramMeta::default()).unwrap()
}

/// `d^2/du^2` of the graph transform of `a(xi_1) a(xi_2) exp(-eta^2)`, from
/// Gaussian moments: mean `-u s / q` and covariance `(I + s s^T)^-1 / 2`.
fn graph_transform_2d_uu(s: &[f64], u: f64) -> f64 {
    let q = 1.0 + s[0] * s[0] + s[1] * s[1];
    let s11 = 0.5 * (1.0 - s[0] * s[0] / q);
    let s22 = 0.5 * (1.0 - s[1] * s[1] / q);
    let s12 = -0.5 * s[0] * s[1] / q;
    let (c1, c2) = (-s[0] / q, -s[1] / q);
    let k = PI / q.sqrt();
    let g = PolyGaussian {
        coeffs: vec![
            k * (s11 * s22 + 2.0 * s12 * s12),
            0.0,
            k * (c1 * c1 * s22 + c2 * c2 * s11 + 4.0 * c1 * c2 * s12),
            0.0,
            k * c1 * c1 * c2 * c2,
        ],
        width: q.sqrt(),
    };
    g.derivative_n(2).eval(u)
}

#[test]
fn chart_measure_matches_truncated_hemisphere() {
    for s_max in [5.0, 50.0, 1000.0] {
        let count = (40.0 * s_max) as usize + 1;
        let m = chart_measure(&[Grid1D::symmetric(s_max, count).unwrap()]).unwrap();
        let exact = 2.0 * f64::atan(s_max);
        assert!((m - exact).abs() < 1e-5, "S {s_max}: {m} vs {exact}");
        assert!((PI - m).abs() <= 2.0 / s_max);
    }
    // n = 2 over a square: 4 atan(S^2 / sqrt(1 + 2 S^2))
    let s_max: f64 = 10.0;
    let g = Grid1D::symmetric(s_max, 401).unwrap();
    let m = chart_measure(&[g, g]).unwrap();
    let exact = 4.0 * (s_max * s_max / (1.0 + 2.0 * s_max * s_max).sqrt()).atan();
    assert!((m - exact).abs() < 1e-5, "{m} vs {exact}");
}

#[test]
fn graph_transform_examples() {
    let rule = QuadratureRule::gauss_legendre(1, 8.0, 16, 12);
    let gauss = |xi: &[f64], eta: f64| (-xi[0] * xi[0] - eta * eta).exp();
    let v = radon_of_graph(gauss, &[1.0], 0.0, &rule).unwrap();
    assert!((v - (PI / 2.0).sqrt()).abs() < 1e-13);
    let odd = |xi: &[f64], eta: f64| eta * (-xi[0] * xi[0] - eta * eta).exp();
    assert!(radon_of_graph(odd, &[0.0], 0.0, &rule).unwrap().abs() < 1e-15);
}

#[test]
fn pointwise_reconstruction_in_one_dimension() {
    let grid = SinogramGrid::new(vec![Grid1D::symmetric(20.0, 201).unwrap()], Grid1D::symmetric(30.0, 601).unwrap());
    let rule = QuadratureRule::trapezoid(1, 6.0, 481);
    // d/du of the graph transform is the graph transform of dF/deta
    let sino = chart_sinogram(grid, 1, |s, u| {
        radon_of_graph(|xi, eta| -2.0 * eta * big_f(xi, eta), s, u, &rule).unwrap()
    });
    let expect = 0.49 * (-0.49f64).exp() * (-0.09f64).exp();
    let peak = (-1f64).exp();
    let plain = invert_radon_chart(&sino, &[0.7], 0.3, None).unwrap();
    assert!((plain - expect).abs() < 5e-2 * peak, "{plain} vs {expect}");
    let bp = ChartBackprojector::new(&sino, None).unwrap().with_extrapolation(3).unwrap();
    let extrapolated = standard_constant(1) * bp.integrate(&[0.7], 0.3).unwrap().value;
    assert!((extrapolated - expect).abs() < 2e-2 * peak, "{extrapolated} vs {expect}");
    assert!((extrapolated - expect).abs() < (plain - expect).abs());
}

#[test]
fn pointwise_reconstruction_in_two_dimensions() {
    let s_axis = Grid1D::symmetric(20.0, 81).unwrap();
    let grid = SinogramGrid::new(vec![s_axis, s_axis], Grid1D::symmetric(40.0, 801).unwrap());
    let sino = chart_sinogram(grid, 2, graph_transform_2d_uu);
    // the even branch interpolates in u; s is resampled four times finer
    let fine = radonseis::inversion::refine_s(&sino, 4).unwrap();
    let bp = ChartBackprojector::new(&fine, None).unwrap().with_extrapolation(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let peak = (-2f64).exp();
    for _ in 0..5 {
        let xi = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let eta = rng.gen_range(-1.0..1.0);
        let v = standard_constant(2) * bp.integrate(&xi, eta).unwrap().value;
        let expect = big_f(&xi, eta);
        assert!((v - expect).abs() < 2e-2 * peak, "{xi:?} {eta}: {v} vs {expect}");
    }
}

#[test]
fn reconstruction_is_unchanged_by_antipodal_rebuild() {
    let grid = SinogramGrid::new(vec![Grid1D::symmetric(8.0, 41).unwrap()], Grid1D::symmetric(12.0, 241).unwrap());
    let rule = QuadratureRule::trapezoid(1, 6.0, 241);
    let direct = chart_sinogram(grid.clone(), 0, |s, u| radon_of_graph(big_f, s, u, &rule).unwrap());
    let rebuilt = chart_sinogram(grid, 0, |s, u| {
        let (omega, t, _) = chart_to_sphere_t(s, u);
        let flipped: Vec<f64> = omega.iter().map(|w| -w).collect();
        // XF(-omega, -t) = XF(omega, t); the chart sample divides by sqrt(1 + |s|^2)
        radon_hyperplane(big_f, &flipped, -t, &rule).unwrap() / (1.0 + s[0] * s[0]).sqrt()
    });
    let points = vec![(vec![0.7], 0.3), (vec![-1.2], -0.4), (vec![0.1], 1.1)];
    let a = invert_radon_chart_many(&du_n_filter(&direct, FilterMethod::FiniteDifference, None).unwrap(), &points, None)
        .unwrap();
    let b = invert_radon_chart_many(&du_n_filter(&rebuilt, FilterMethod::FiniteDifference, None).unwrap(), &points, None)
        .unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-3), "{x} {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobians_are_consistent(s in prop::collection::vec(-50.0f64..50.0, 1..4), u in -5.0f64..5.0) {
        let (omega, jac) = chart_to_sphere(&s);
        let (omega_t, t, jac_t) = chart_to_sphere_t(&s, u);
        prop_assert_eq!(omega, omega_t);
        let norm = (1.0 + s.iter().map(|v| v * v).sum::<f64>()).sqrt();
        prop_assert!((t - u / norm).abs() <= 4.0 * f64::EPSILON * (u / norm).abs().max(1e-300));
        prop_assert!((jac_t - jac / norm).abs() <= 4.0 * f64::EPSILON * jac_t);
    }

    #[test]
    fn chart_inversion_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, n in 1usize..3) {
        let grid = SinogramGrid::new(vec![Grid1D::symmetric(3.0, 7).unwrap(); n], Grid1D::symmetric(10.0, 61).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> Vec<f64> { (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let (v1, v2) = (draw(), draw());
        let mix: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
        let make = |v: Vec<f64>| {
            let params = TransformParams::centered(vec![2.0; n], None).unwrap();
            Sinogram::new(TransformKind::XStandard, params, grid.clone(), v, n, SinogramMeta::default()).unwrap()
        };
        let (s1, s2, sm) = (make(v1), make(v2), make(mix));
        let xi = vec![0.4; n];
        let r1 = invert_radon_chart(&s1, &xi, 0.2, None).unwrap();
        let r2 = invert_radon_chart(&s2, &xi, 0.2, None).unwrap();
        let rm = invert_radon_chart(&sm, &xi, 0.2, None).unwrap();
        let scale = a.abs() * r1.abs() + b.abs() * r2.abs() + 1e-3;
        prop_assert!((rm - (a * r1 + b * r2)).abs() <= 1e-12 * scale, "{} vs {}", rm, a * r1 + b * r2);
    }
}
