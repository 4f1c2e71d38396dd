use radonseis::io::{write_field, write_sinogram, Provenance};
use radonseis::{
    du_n_filter, invert, make_phantom, FieldGrid, FilterMethod, FunctionSpace, Grid1D, PhantomWidths,
    QuadratureRule, ReconRequest, STruncation, SinogramGrid, SweepOptions, TransformKind, TransformParams,
    VanishingOrders,
};

/// Forward, filter and invert on a pool of `threads` workers; returns the
/// written sinogram and field files.
fn run(kind: TransformKind, threads: usize) -> (Vec<u8>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let beta = (kind == TransformKind::R).then_some(2.0);
        let params = TransformParams::centered(vec![2.0, 3.0], beta).unwrap();
        let space = FunctionSpace::required_by(kind).unwrap();
        let orders = VanishingOrders::minimal_for(&params);
        let ph = make_phantom(&params, &orders, space, &PhantomWidths::uniform(2, 1.0)).unwrap();
        let grid = SinogramGrid::new(vec![Grid1D::symmetric(4.0, 9).unwrap(); 2], Grid1D::symmetric(48.0, 321).unwrap());
        let rule = QuadratureRule::gauss_legendre(2, 5.0, 8, 8);
        let opts = SweepOptions { nested_table_step: Some(0.05) };
        let sino = radonseis::seismic::forward_sinogram_with(&ph, &params, kind, &grid, &rule, &opts).unwrap();
        let filtered = du_n_filter(&sino, FilterMethod::FiniteDifference, None).unwrap();
        let req = ReconRequest {
            sino: &filtered,
            recon_grid: FieldGrid::new(vec![Grid1D::new(-1.9, 2.1, 5).unwrap(); 2], Grid1D::symmetric(2.0, 5).unwrap()),
            s_truncation: STruncation::Auto,
            report_clamps: true,
            s_refine: 2,
            s_extrapolation: 2,
        };
        let (field, _) = invert(&req).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new("test", None);
        write_sinogram(&dir.path().join("s.json"), &sino, &prov).unwrap();
        write_field(&dir.path().join("f.json"), &field, &prov).unwrap();
        (
            std::fs::read(dir.path().join("s.json")).unwrap(),
            std::fs::read(dir.path().join("f.json")).unwrap(),
        )
    })
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    for kind in [TransformKind::P, TransformKind::Q, TransformKind::R] {
        let one = run(kind, 1);
        let three = run(kind, 3);
        assert!(one.0 == three.0, "{kind} sinogram differs");
        assert!(one.1 == three.1, "{kind} field differs");
    }
}
