use boxseq::geometry::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box<R: Rng>(rng: &mut R, spread: f64) -> Box7 {
    Box7::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(-spread / 4.0..spread / 4.0),
        rng.random_range(0.5..5.0),
        rng.random_range(0.5..3.0),
        rng.random_range(0.5..2.5),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
    .unwrap()
}

/// Intersection volume estimated by uniform sampling inside `a`.
fn monte_carlo_iou<R: Rng>(a: &Box7, b: &Box7, samples: usize, rng: &mut R) -> f64 {
    let frame = a.frame();
    let [w, l, h] = a.size();
    let mut hits = 0usize;
    for _ in 0..samples {
        let local = [
            rng.random_range(-0.5..0.5) * w,
            rng.random_range(-0.5..0.5) * l,
            rng.random_range(-0.5..0.5) * h,
        ];
        if b.contains(frame.apply(local)) {
            hits += 1;
        }
    }
    let inter = a.volume() * hits as f64 / samples as f64;
    inter / (a.volume() + b.volume() - inter)
}

#[test]
fn corner_round_trip_over_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let b = random_box(&mut rng, 50.0);
        let back = corners_to_box(&box_to_corners(&b, 0.0)).unwrap();
        let d = b.to_array().iter().zip(back.to_array()).take(6).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(d).max(wrap_angle(b.theta() - back.theta()).abs());
    }
    assert!(worst < 1e-6, "worst round-trip error {worst}");
}

#[test]
fn iou_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for _ in 0..100 {
        let a = random_box(&mut rng, 1.0);
        let b = random_box(&mut rng, 1.0);
        let d = (iou3d(&a, &b) - monte_carlo_iou(&a, &b, 100_000, &mut rng)).abs();
        worst = worst.max(d);
    }
    assert!(worst <= 0.01, "worst deviation {worst}");
}

#[test]
fn disjoint_and_nested_boxes() {
    let a = Box7::new(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.3).unwrap();
    let far = Box7::new(10.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.3).unwrap();
    assert_eq!(iou3d(&a, &far), 0.0);
    let inner = Box7::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.3).unwrap();
    assert!((iou3d(&a, &inner) - 1.0 / 8.0).abs() < 1e-12);
    // Stacked boxes share a face but no volume.
    let above = Box7::new(0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 0.3).unwrap();
    assert_eq!(iou3d(&a, &above), 0.0);
}

fn arb_box() -> impl Strategy<Value = Box7> {
    (
        -20.0..20.0f64,
        -20.0..20.0f64,
        -3.0..3.0f64,
        0.2..6.0f64,
        0.2..6.0f64,
        0.2..4.0f64,
        -10.0..10.0f64,
    )
        .prop_map(|(x, y, z, w, l, h, t)| Box7::new(x, y, z, w, l, h, t).unwrap())
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (-3.2..3.2f64, -50.0..50.0f64, -50.0..50.0f64, -2.0..2.0f64).prop_map(|(yaw, x, y, z)| Pose::from_yaw(yaw, [x, y, z]))
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = iou3d(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - iou3d(&b, &a)).abs() < 1e-9);
        prop_assert!((iou3d(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_is_invariant_under_rigid_motion(a in arb_box(), b in arb_box(), p in arb_pose()) {
        let moved = iou3d(&transform_box(&a, &p), &transform_box(&b, &p));
        prop_assert!((moved - iou3d(&a, &b)).abs() < 1e-7);
    }

    #[test]
    fn corners_round_trip(b in arb_box(), t in -2.0..0.0f64) {
        let set = box_to_corners(&b, t);
        let back = corners_to_box(&set).unwrap();
        for (x, y) in b.to_array().iter().zip(back.to_array()).take(6) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        prop_assert!(wrap_angle(b.theta() - back.theta()).abs() < 1e-6);
    }

    #[test]
    fn pose_inverse_composes_to_identity(p in arb_pose(), q in (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)) {
        let pt = [q.0, q.1, q.2];
        let back = p.inverse().apply(p.apply(pt));
        for k in 0..3 {
            prop_assert!((back[k] - pt[k]).abs() < 1e-9);
        }
        let id = p.compose(&p.inverse());
        prop_assert!(id.translation().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn wrap_angle_stays_in_range(a in -1e3..1e3f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        prop_assert!(((a - w) / std::f64::consts::TAU - ((a - w) / std::f64::consts::TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn center_distance_is_a_metric(a in arb_box(), b in arb_box(), c in arb_box()) {
        prop_assert!((center_distance(&a, &b) - center_distance(&b, &a)).abs() < 1e-12);
        prop_assert!(center_distance(&a, &c) <= center_distance(&a, &b) + center_distance(&b, &c) + 1e-9);
    }
}
