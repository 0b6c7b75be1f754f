use bridgelab::bridge::{reverse_path, sample_bridge_exact, sample_bridge_sde, BridgePath, BridgeSpec, TimeGrid};
use bridgelab::Error;
use bridgelab::geometry::{ManifoldModel, Point};
use bridgelab::heatkernel::{kernel, SeriesControl};
use bridgelab::io::{read_paths, PathWriter};
use bridgelab::lift::{horizontal_lift, Frame};
use bridgelab::rng::RngStream;
use bridgelab::semimart::{compute_y, exit_time_localization, TestFunction};
use proptest::prelude::*;

fn models() -> Vec<ManifoldModel> {
    vec![
        ManifoldModel::euclidean(1).unwrap(),
        ManifoldModel::euclidean(2).unwrap(),
        ManifoldModel::euclidean(3).unwrap(),
        ManifoldModel::circle(),
        ManifoldModel::sphere2(),
        ManifoldModel::hyperbolic3(),
    ]
}

fn model() -> impl Strategy<Value = ManifoldModel> {
    (0..6usize).prop_map(|i| models()[i])
}

/// Lenient chart input for `m`, kept within a few units of the origin.
fn point_on(m: ManifoldModel) -> impl Strategy<Value = Point> {
    let n = match m.name().as_str() {
        "s2" => 2,
        "h3" => 3,
        _ => m.chart_len(),
    };
    proptest::collection::vec(-2.0..2.0f64, n).prop_map(move |c| m.point_from_input(&c).unwrap())
}

fn model_and_points(k: usize) -> impl Strategy<Value = (ManifoldModel, Vec<Point>)> {
    model().prop_flat_map(move |m| (Just(m), proptest::collection::vec(point_on(m), k)))
}

fn bridge(m: ManifoldModel, x: Point, y: Point, steps: usize) -> (BridgeSpec, TimeGrid) {
    (BridgeSpec::new(m, x, y, 1.0).unwrap(), TimeGrid::uniform(1.0, steps).unwrap())
}

/// Exact path, or `None` when rejection sampling reports the documented
/// efficiency error (far endpoints on a coarse H3 or sphere grid).
fn exact(spec: &BridgeSpec, grid: &TimeGrid, stream: &mut RngStream) -> Option<BridgePath> {
    match sample_bridge_exact(spec, grid, stream) {
        Ok(p) => Some(p),
        Err(Error::Efficiency { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn far_endpoints_on_a_coarse_grid_report_efficiency() {
    let m = ManifoldModel::hyperbolic3();
    let y = m.point_from_input(&[4.0, 0.0, 0.0]).unwrap();
    let spec = BridgeSpec::new(m, m.origin(), y, 0.05).unwrap();
    let r = sample_bridge_exact(&spec, &TimeGrid::uniform(0.05, 2).unwrap(), &mut RngStream::new(1, "prop", 0));
    assert!(matches!(r, Err(Error::Efficiency { .. })), "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_metric((m, p) in model_and_points(3)) {
        let d = |a: &Point, b: &Point| m.distance(a, b);
        prop_assert!(d(&p[0], &p[0]) <= 1e-7);
        prop_assert!(d(&p[0], &p[1]) >= 0.0);
        prop_assert!((d(&p[0], &p[1]) - d(&p[1], &p[0])).abs() <= 1e-12 * (1.0 + d(&p[0], &p[1])));
        prop_assert!(d(&p[0], &p[2]) <= d(&p[0], &p[1]) + d(&p[1], &p[2]) + 1e-9);
    }

    #[test]
    fn exp_of_log_returns_target((m, p) in model_and_points(2)) {
        prop_assume!(!m.is_compact() || m.distance(&p[0], &p[1]) < m.injectivity_radius() - 1e-3);
        let v = m.log_ambient(&p[0], &p[1]);
        let q = m.exp_ambient(&p[0], &v);
        prop_assert!(m.validate(&q).is_ok());
        prop_assert!(m.distance(&q, &p[1]) <= 1e-9);
        prop_assert!((m.vec_norm(&v) - m.distance(&p[0], &p[1])).abs() <= 1e-9);
    }

    #[test]
    fn transport_preserves_inner_products((m, p) in model_and_points(2)) {
        prop_assume!(!m.is_compact() || m.distance(&p[0], &p[1]) < m.injectivity_radius() - 1e-2);
        let f = m.frame(&p[0]);
        let moved: Vec<_> = f.iter().map(|v| m.transport(&p[0], &p[1], v)).collect();
        for (i, a) in moved.iter().enumerate() {
            prop_assert!(m.project_tangent(&p[1], a).iter().zip(a.iter()).all(|(x, y)| (x - y).abs() <= 1e-9));
            for (j, b) in moved.iter().enumerate() {
                let want = m.inner(&f[i], &f[j]);
                prop_assert!((m.inner(a, b) - want).abs() <= 1e-9, "{i},{j}");
            }
        }
    }

    #[test]
    fn kernel_is_symmetric_and_positive((m, p) in model_and_points(2), t in 0.05..3.0f64) {
        let ctl = SeriesControl::default();
        let a = kernel(&m, t, &p[0], &p[1], &ctl).unwrap();
        let b = kernel(&m, t, &p[1], &p[0], &ctl).unwrap();
        prop_assert!(a.value > 0.0);
        prop_assert!((a.value - a.log_value.exp()).abs() <= 1e-12 * a.value);
        prop_assert!((a.log_value - b.log_value).abs() <= 1e-10 * (1.0 + a.log_value.abs()));
    }

    #[test]
    fn reversal_is_an_involution((m, p) in model_and_points(2), steps in 2..20usize, seed in any::<u64>()) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), steps);
        let path = exact(&spec, &grid, &mut RngStream::new(seed, "prop", 0));
        prop_assume!(path.is_some());
        let path = path.unwrap();
        let back = reverse_path(&reverse_path(&path));
        prop_assert_eq!(&back.points, &path.points);
        for (a, b) in back.grid.times().iter().zip(path.grid.times()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        let rev = reverse_path(&path);
        prop_assert_eq!(&rev.points[0], &path.points[steps]);
        prop_assert_eq!(rev.spec.x, path.spec.y);
    }

    #[test]
    fn samplers_pin_both_endpoints((m, p) in model_and_points(2), steps in 8..30usize, seed in any::<u64>()) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), steps);
        let exact = exact(&spec, &grid, &mut RngStream::new(seed, "prop", 1));
        prop_assume!(exact.is_some());
        let exact = exact.unwrap();
        let sde = sample_bridge_sde(&spec, &grid, &mut RngStream::new(seed, "prop", 2)).unwrap();
        for path in [&exact, &sde] {
            prop_assert_eq!(path.points.len(), steps + 1);
            prop_assert_eq!(&path.points[0], &p[0]);
            prop_assert_eq!(&path.points[steps], &p[1]);
            prop_assert!(path.points.iter().all(|q| m.validate(q).is_ok()));
        }
    }

    #[test]
    fn same_stream_gives_same_path((m, p) in model_and_points(2), seed in any::<u64>()) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), 12);
        let a = sample_bridge_sde(&spec, &grid, &mut RngStream::new(seed, "prop", 3)).unwrap();
        let b = sample_bridge_sde(&spec, &grid, &mut RngStream::new(seed, "prop", 3)).unwrap();
        prop_assert_eq!(a.points, b.points);
    }

    #[test]
    fn y_starts_at_zero_and_is_linear_in_f(
        (m, p) in model_and_points(3),
        r1 in 0.3..2.0f64,
        r2 in 0.3..2.0f64,
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        seed in any::<u64>(),
    ) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), 16);
        let path = exact(&spec, &grid, &mut RngStream::new(seed, "prop", 4));
        prop_assume!(path.is_some());
        let path = path.unwrap();
        let ctl = SeriesControl::default();
        let f = TestFunction::bump(p[2].clone(), r1);
        let g = TestFunction::bump(p[0].clone(), r2);
        let h = TestFunction::Combination { terms: vec![(a, f.clone()), (b, g.clone())] };
        let (yf, yg, yh) = (compute_y(&path, &f, &ctl).unwrap(), compute_y(&path, &g, &ctl).unwrap(), compute_y(&path, &h, &ctl).unwrap());
        prop_assert_eq!(yh[0], 0.0);
        prop_assert_eq!(yf[0], 0.0);
        for j in 0..yh.len() {
            let want = a * yf[j] + b * yg[j];
            prop_assert!((yh[j] - want).abs() <= 1e-9 * (1.0 + want.abs()), "j={j}: {} vs {want}", yh[j]);
        }
    }

    #[test]
    fn constant_f_has_zero_y((m, p) in model_and_points(2), c in -5.0..5.0f64, seed in any::<u64>()) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), 10);
        let path = exact(&spec, &grid, &mut RngStream::new(seed, "prop", 5));
        prop_assume!(path.is_some());
        let path = path.unwrap();
        let y = compute_y(&path, &TestFunction::Constant { value: c }, &SeriesControl::default()).unwrap();
        prop_assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exit_indices_grow_with_radius(
        (m, p) in model_and_points(2),
        mut radii in proptest::collection::btree_set(1u32..4000, 1..12),
        seed in any::<u64>(),
    ) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), 40);
        let path = sample_bridge_sde(&spec, &grid, &mut RngStream::new(seed, "prop", 6)).unwrap();
        let r: Vec<f64> = std::mem::take(&mut radii).into_iter().map(|k| k as f64 * 1e-3).collect();
        let idx = exit_time_localization(&path, &r).unwrap();
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(idx.iter().all(|&k| (1..=40).contains(&k)));
        for (k, rad) in idx.iter().zip(&r) {
            if *k < 40 {
                prop_assert!(m.distance(&p[0], &path.points[*k]) >= *rad);
            }
            prop_assert!(path.points[1..*k].iter().all(|q| m.distance(&p[0], q) < *rad));
        }
    }

    #[test]
    fn lift_projects_to_path_and_stays_orthonormal((m, p) in model_and_points(2), seed in any::<u64>()) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), 50);
        let path = sample_bridge_sde(&spec, &grid, &mut RngStream::new(seed, "prop", 7)).unwrap();
        let lift = horizontal_lift(&path, &Frame::canonical(&m, &path.points[0])).unwrap();
        prop_assert_eq!(lift.frames.len(), path.points.len());
        for (f, q) in lift.frames.iter().zip(&path.points) {
            prop_assert_eq!(&f.base, q);
            prop_assert!(f.gram_defect(&m) <= 1e-10);
        }
    }

    #[test]
    fn path_csv_round_trips((m, p) in model_and_points(2), n in 1..5u64, steps in 1..10usize, seed in any::<u64>()) {
        let (spec, grid) = bridge(m, p[0].clone(), p[1].clone(), steps);
        let paths: Option<Vec<_>> = (0..n).map(|i| exact(&spec, &grid, &mut RngStream::new(seed, "prop", 8 + i))).collect();
        prop_assume!(paths.is_some());
        let paths = paths.unwrap();
        let mut w = PathWriter::new(Vec::new());
        for (i, path) in paths.iter().enumerate() {
            w.write(i as u64 * 3, path).unwrap();
        }
        let recs = read_paths(w.finish().unwrap().as_slice()).unwrap();
        prop_assert_eq!(recs.len() as u64, n);
        for (i, (r, path)) in recs.iter().zip(&paths).enumerate() {
            prop_assert_eq!(r.path_id, i as u64 * 3);
            let back = r.to_bridge_path(m).unwrap();
            prop_assert_eq!(&back.points, &path.points);
            prop_assert_eq!(back.grid.times(), path.grid.times());
        }
    }

    #[test]
    fn bump_vanishes_outside_support((m, p) in model_and_points(2), r in 0.1..1.5f64) {
        let f = TestFunction::bump(p[0].clone(), r);
        if m.distance(&p[0], &p[1]) >= r {
            prop_assert_eq!(f.eval(&m, &p[1]), 0.0);
            prop_assert!(f.gradient(&m, &p[1]).iter().all(|v| *v == 0.0));
            prop_assert_eq!(f.laplacian(&m, &p[1]), 0.0);
        } else {
            prop_assert!(f.eval(&m, &p[1]) > 0.0);
        }
    }
}
