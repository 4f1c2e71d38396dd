use proptest::prelude::*;
use radonseis::phantom::{eval_phantom, phantom_dy, Parity};
use radonseis::{make_phantom, FunctionSpace, Grid1D, PhantomWidths, Shape, TransformParams, VanishingOrders};

fn space_strategy() -> impl Strategy<Value = FunctionSpace> {
    prop_oneof![
        Just(FunctionSpace::Scm),
        Just(FunctionSpace::ScmP),
        Just(FunctionSpace::ScmR),
    ]
}

fn build(alpha: Vec<f64>, space: FunctionSpace, width: f64) -> radonseis::Phantom {
    let beta = (space == FunctionSpace::ScmR).then_some(2.0);
    let n = alpha.len();
    let params = TransformParams::centered(alpha, beta).unwrap();
    let orders = VanishingOrders::minimal_for(&params);
    make_phantom(&params, &orders, space, &PhantomWidths::uniform(n, width)).unwrap()
}

#[test]
fn grid_nodes_are_single_multiply_adds() {
    let g = Grid1D::new(-1.7, 3.1, 97).unwrap();
    let step = (3.1 - -1.7) / 96.0;
    for i in 0..97 {
        assert_eq!(g.node(i).to_bits(), (i as f64).mul_add(step, -1.7).to_bits());
    }
    assert!((g.node(96) - 3.1).abs() <= 4.0 * f64::EPSILON * 3.1);
}

#[test]
fn phantom_examples() {
    // n=1, alpha=2 in the even space: e(x) = x^2 exp(-x^2), h = exp(-y^2)
    let ph = build(vec![2.0], FunctionSpace::ScmP, 1.0);
    let expect = 0.49 * (-0.49f64).exp() * (-0.09f64).exp();
    assert!((eval_phantom(&ph, &[0.7], 0.3) - expect).abs() < 1e-15);
    // alpha=3 needs m=1, and the first admissible even exponent is 2
    let ph = build(vec![3.0], FunctionSpace::ScmP, 1.0);
    assert_eq!(ph.axis_profiles[0].exponent, 2);
    let ph = build(vec![2.0], FunctionSpace::ScmR, 1.0);
    assert_eq!(ph.y_profile.exponent, 2);
    assert_eq!(eval_phantom(&ph, &[0.4], 0.0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flatten_unflatten_roundtrip(dims in prop::collection::vec(1usize..7, 1..4), pick in 0usize..1000) {
        let shape = Shape::new(dims);
        let k = pick % shape.len();
        prop_assert_eq!(shape.flatten(&shape.unflatten(k)), k);
    }

    #[test]
    fn minimal_exponents_satisfy_the_space(
        alpha in prop::collection::vec(1.0f64..5.0, 1..3),
        space in space_strategy(),
        width in 0.5f64..2.0,
    ) {
        let ph = build(alpha.clone(), space, width);
        prop_assert!(ph.is_certified());
        for (p, a) in ph.axis_profiles.iter().zip(&alpha) {
            let m = (a - 2.0).ceil().max(0.0) as u32;
            let need_even = space != FunctionSpace::Scm;
            let mut expect = m + 1;
            if need_even && expect % 2 == 1 {
                expect += 1;
            }
            prop_assert_eq!(p.exponent, expect);
            prop_assert_eq!(p.parity == Parity::EvenForced, need_even);
        }
        let y_expect = if space == FunctionSpace::ScmR { 2 } else { 0 };
        prop_assert_eq!(ph.y_profile.exponent, y_expect);
    }

    #[test]
    fn even_spaces_have_no_odd_part(
        alpha in prop::collection::vec(1.0f64..4.0, 1..3),
        t in prop::collection::vec(-2.5f64..2.5, 2),
        y in -2.0f64..2.0,
    ) {
        let ph = build(alpha.clone(), FunctionSpace::ScmR, 1.0);
        let n = alpha.len();
        let x: Vec<f64> = t[..n].to_vec();
        for i in 0..n {
            let mut mirrored = x.clone();
            mirrored[i] = -mirrored[i];
            prop_assert_eq!(eval_phantom(&ph, &x, y), eval_phantom(&ph, &mirrored, y));
        }
        prop_assert_eq!(eval_phantom(&ph, &x, y), eval_phantom(&ph, &x, -y));
    }

    #[test]
    fn y_derivatives_match_finite_differences(
        space in space_strategy(),
        x in -2.0f64..2.0,
        y in -2.5f64..2.5,
    ) {
        let ph = build(vec![2.0], space, 1.0);
        let h = 1e-2;
        let f = |d: f64| eval_phantom(&ph, &[x], y + d * h);
        let (m2, m1, z, p1, p2) = (f(-2.0), f(-1.0), f(0.0), f(1.0), f(2.0));
        let fd1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
        let fd2 = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * h * h);
        let scale = (-x * x).exp().max(1e-300);
        for (k, fd) in [(1, fd1), (2, fd2)] {
            let exact = phantom_dy(&ph, k).eval(&[x], y);
            // the stencil error is h^4 |f^(5)| / 30, which scales with the x-factor
            let tol = 1e-6 * exact.abs() + 1e-7 * scale;
            prop_assert!((exact - fd).abs() <= tol, "k={} exact {} fd {}", k, exact, fd);
        }
    }
}
