use boxseq::data::*;
use boxseq::geometry::{Box7, Pose};
use proptest::prelude::*;

/// Containment written against the raw box parameters.
fn inside(b: &Box7, p: [f64; 3]) -> bool {
    let (dx, dy, dz) = (p[0] - b.x(), p[1] - b.y(), p[2] - b.z());
    let (s, c) = b.theta().sin_cos();
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    let tol = 1e-9;
    u.abs() <= b.w() / 2.0 + tol && v.abs() <= b.l() / 2.0 + tol && dz.abs() <= b.h() / 2.0 + tol
}

fn moving_tracklet(frames: usize, seed: u64) -> Tracklet {
    let spec = SyntheticSpec { frames, ..Default::default() };
    generate_synthetic_tracklet(&spec, "t", seed).unwrap()
}

fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
    (0..3).all(|k| (a[k] - b[k]).abs() <= tol)
}

#[test]
fn track_start_replicates_frame_zero() {
    let t = moving_tracklet(6, 1);
    let cfg = SampleConfig { mode: SampleMode::Test, ..Default::default() };
    let s = build_sample(&t, 0, &cfg, 3).unwrap();
    assert_eq!(s.n_frames(), cfg.n_frames);
    let b0 = &t.frames[0].gt_box;
    for h in &s.history_boxes {
        assert_eq!(h, &s.history_boxes[0]);
        assert!(close(h.center(), [0.0; 3], 1e-12) && h.theta().abs() < 1e-12);
    }
    let raw: Vec<[f64; 3]> = t.frames[0].points.iter().map(|&p| t.frames[0].pose.apply(p)).collect();
    for f in &s.frames {
        for p in &f.points {
            let w = s.to_world.apply([p[0], p[1], p[2]]);
            assert!(raw.iter().any(|&r| close(r, w, 1e-9)), "point not from frame 0");
        }
    }
    assert!(close(s.to_world.apply([0.0; 3]), b0.center(), 1e-12));
}

#[test]
fn zero_offsets_reproduce_ground_truth_history() {
    let t = moving_tracklet(8, 2);
    let cfg = SampleConfig { offset_range: [0.0; 4], ..Default::default() };
    for f in 0..t.len() {
        let s = build_sample(&t, f, &cfg, f as u64).unwrap();
        let gt = &s.labels.as_ref().unwrap().gt_boxes;
        for (h, g) in s.history_boxes.iter().zip(gt) {
            assert!(close(h.center(), g.center(), 1e-12));
            assert!((h.theta() - g.theta()).abs() < 1e-12);
        }
    }
}

#[test]
fn five_frame_window_channels() {
    let t = moving_tracklet(5, 3);
    let cfg = SampleConfig::default();
    let s = build_sample(&t, 4, &cfg, 11).unwrap();
    assert_eq!(s.n_frames(), 4);
    assert_eq!(s.timestamps, vec![-1.5, -1.0, -0.5, 0.0]);
    for (k, frame) in s.frames.iter().enumerate() {
        let src = &t.frames[k + 1];
        let raw: Vec<[f64; 3]> = src.points.iter().map(|&p| src.pose.apply(p)).collect();
        assert_eq!(frame.len(), cfg.points_per_frame);
        for p in &frame.points {
            assert_eq!(p[3], s.timestamps[k]);
            let world = s.to_world.apply([p[0], p[1], p[2]]);
            assert!(raw.iter().any(|&r| close(r, world, 1e-9)), "frame {k} point from the wrong source");
            let expect = if k == 3 {
                0.5
            } else if inside(&src.gt_box, world) {
                1.0
            } else {
                0.0
            };
            assert_eq!(p[4], expect, "frame {k} mask");
        }
    }
    // The history mask is not constant, so the check above is not vacuous.
    let masks: Vec<f64> = s.frames[..3].iter().flat_map(|f| f.points.iter().map(|p| p[4])).collect();
    assert!(masks.contains(&1.0) && masks.contains(&0.0));
}

#[test]
fn test_mode_masks_follow_given_boxes() {
    let t = moving_tracklet(6, 4);
    let cfg = SampleConfig { mode: SampleMode::Test, ..Default::default() };
    let s = build_sample(&t, 5, &cfg, 2).unwrap();
    for (k, frame) in s.frames[..3].iter().enumerate() {
        for p in &frame.points {
            let expect = if inside(&s.history_boxes[k], [p[0], p[1], p[2]]) { 1.0 } else { 0.0 };
            assert_eq!(p[4], expect);
        }
    }
}

#[test]
fn out_of_range_index() {
    let t = moving_tracklet(3, 5);
    assert!(matches!(
        build_sample(&t, 3, &SampleConfig::default(), 0),
        Err(boxseq::Error::Index { index: 3, len: 3 })
    ));
}

#[test]
fn train_mode_requires_ground_truth() {
    let t = moving_tracklet(3, 5);
    let f = &t.frames[0];
    let window = vec![WindowFrame { points: &f.points, pose: &f.pose }; 4];
    let hist = vec![f.gt_box; 3];
    let r = assemble_sample(&window, &hist, &f.gt_box, None, f.gt_box.size(), &SampleConfig::default(), 0);
    assert!(matches!(r, Err(boxseq::Error::Config(_))));
}

#[test]
fn empty_dataset_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.txt");
    save_tracklets(&path, &[]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("boxseq-tracklets"));
    assert!(load_tracklets(&path).unwrap().is_empty());
}

#[test]
fn dataset_round_trip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { frames: 4, ego_speed: [0.5, 1.0], ..Default::default() };
    let data = generate_dataset(&spec, 3, 21, "rt").unwrap();
    let path = dir.path().join("d.txt");
    save_tracklets(&path, &data).unwrap();
    assert_eq!(load_tracklets(&path).unwrap(), data);
}

#[test]
fn sparse_first_frames() {
    let spec = SyntheticSpec { first_frame_points: Some([0, 15]), ..Default::default() };
    for t in generate_dataset(&spec, 16, 4, "s").unwrap() {
        assert!(t.first_frame_points() <= 15);
    }
}

#[test]
fn empty_frames_resample_to_the_region_center() {
    let mut t = moving_tracklet(3, 6);
    for f in &mut t.frames {
        f.points.clear();
    }
    let cfg = SampleConfig { mode: SampleMode::Test, ..Default::default() };
    let s = build_sample(&t, 2, &cfg, 0).unwrap();
    for (k, frame) in s.frames.iter().enumerate() {
        let center = if k == 3 { [0.0; 3] } else { s.history_boxes[k].center() };
        assert!(frame.points.iter().all(|p| close([p[0], p[1], p[2]], center, 1e-12)));
    }
}

fn arb_config() -> impl Strategy<Value = SampleConfig> {
    (1usize..6, 1usize..40, 0.5..3.0f64, any::<bool>()).prop_map(|(n, w, margin, train)| SampleConfig {
        n_frames: n,
        points_per_frame: w,
        margin,
        mode: if train { SampleMode::Train } else { SampleMode::Test },
        ..Default::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sample_invariants(cfg in arb_config(), seed in 0u64..1000, frame in 0usize..8) {
        let t = moving_tracklet(8, seed);
        let s = build_sample(&t, frame, &cfg, seed).unwrap();
        prop_assert_eq!(s, build_sample(&t, frame, &cfg, seed).unwrap());
        let s = build_sample(&t, frame, &cfg, seed).unwrap();
        prop_assert_eq!(s.frames.len(), cfg.n_frames);
        prop_assert_eq!(s.history_boxes.len(), cfg.n_frames - 1);
        for (k, f) in s.frames.iter().enumerate() {
            prop_assert_eq!(f.len(), cfg.points_per_frame);
            for p in &f.points {
                prop_assert!(p.iter().all(|v| v.is_finite()));
                prop_assert_eq!(p[3], s.timestamps[k]);
                let allowed = if k + 1 == cfg.n_frames { p[4] == 0.5 } else { p[4] == 0.0 || p[4] == 1.0 };
                prop_assert!(allowed);
            }
        }
        let labels = s.labels.as_ref().unwrap();
        // Current ground truth lies inside the crop region around the anchor.
        let c = labels.gt_boxes[cfg.n_frames - 1].center();
        let anchor = Box7::from_parts([0.0; 3], t.target_size(), 0.0).unwrap();
        let grown = Box7::from_parts([0.0; 3], anchor.size().map(|v| v + 2.0 * cfg.margin), 0.0).unwrap();
        prop_assert!(inside(&grown, c));
        // Foreground labels agree with brute-force containment.
        for (k, f) in s.frames.iter().enumerate() {
            for (i, p) in f.points.iter().enumerate() {
                let y = labels.gt_foreground[k * cfg.points_per_frame + i];
                prop_assert_eq!(y, if inside(&labels.gt_boxes[k], [p[0], p[1], p[2]]) { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn crop_agrees_with_containment(seed in 0u64..500, margin in 0.0..2.0f64) {
        let t = moving_tracklet(2, seed);
        let f = &t.frames[1];
        let local = f.gt_box.frame().inverse().compose(&f.pose);
        let pts: Vec<[f64; 3]> = f.points.iter().map(|&p| local.apply(p)).collect();
        let b = Box7::from_parts([0.0; 3], f.gt_box.size(), 0.0).unwrap();
        let kept = crop_region(&pts, &b, margin);
        let grown = Box7::from_parts([0.0; 3], b.size().map(|v| v + 2.0 * margin), 0.0).unwrap();
        let expect: Vec<[f64; 3]> = pts.iter().copied().filter(|&p| inside(&grown, p)).collect();
        prop_assert_eq!(kept, expect);
    }

    #[test]
    fn resample_draws_from_input(m in 0usize..20, w in 1usize..30, seed in 0u64..100) {
        use rand::SeedableRng;
        let pts: Vec<[f64; 3]> = (0..m).map(|i| [i as f64, 0.0, 1.0]).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let out = resample_fixed(&pts, w, [9.0, 9.0, 9.0], &mut rng);
        prop_assert_eq!(out.len(), w);
        if m == 0 {
            prop_assert!(out.iter().all(|p| *p == [9.0, 9.0, 9.0]));
        } else {
            prop_assert!(out.iter().all(|p| pts.contains(p)));
        }
        if m >= w {
            let mut idx: Vec<i64> = out.iter().map(|p| p[0] as i64).collect();
            idx.sort();
            idx.dedup();
            prop_assert_eq!(idx.len(), w);
        }
    }
}

#[test]
fn poses_move_points_consistently() {
    // A point fixed in the world maps to the same local coordinates from any
    // ego pose.
    let anchor = Box7::new(3.0, -1.0, 0.0, 4.0, 2.0, 1.5, 0.4).unwrap();
    let world = [4.0, -0.5, 0.2];
    let to_local = anchor.frame().inverse();
    let expect = to_local.apply(world);
    for yaw in [0.0, 0.7, -2.0] {
        let ego = Pose::from_yaw(yaw, [1.0, 2.0, 0.0]);
        let sensor = ego.inverse().apply(world);
        let got = to_local.compose(&ego).apply(sensor);
        assert!(close(got, expect, 1e-12));
    }
}
