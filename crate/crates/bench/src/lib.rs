//! Fixtures shared by the benchmarks.

use radonseis::{
    make_phantom, FunctionSpace, Phantom, PhantomWidths, TransformKind, TransformParams, VanishingOrders,
};

/// Minimal certified phantom for `kind` with `alpha_i = 2` on every axis.
pub fn phantom(kind: TransformKind, n: usize) -> Phantom {
    let beta = (kind == TransformKind::R).then_some(2.0);
    let params = TransformParams::centered(vec![2.0; n], beta).expect("valid params");
    let space = FunctionSpace::required_by(kind).expect("seismic kind");
    make_phantom(&params, &VanishingOrders::minimal_for(&params), space, &PhantomWidths::uniform(n, 1.0))
        .expect("phantom")
}
