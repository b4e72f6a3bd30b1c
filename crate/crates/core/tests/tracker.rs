use boxseq::data::{generate_dataset, generate_synthetic_tracklet, SampleConfig, SyntheticSpec, Tracklet};
use boxseq::eval::success_score;
use boxseq::geometry::{center_distance, iou3d, Box7, Pose};
use boxseq::network::{ModelConfig, Network};
use boxseq::tracker::*;

fn echo(n: usize) -> EchoHistory {
    EchoHistory { n_frames: n, points_per_frame: 16 }
}

fn cfg(n: usize) -> SampleConfig {
    SampleConfig { n_frames: n, points_per_frame: 16, ..Default::default() }
}

fn static_tracklet(seed: u64) -> Tracklet {
    let spec = SyntheticSpec { speed: [0.0, 0.0], ego_speed: [0.3, 0.8], ego_yaw_rate: [-0.05, 0.05], ..Default::default() };
    generate_synthetic_tracklet(&spec, "static", seed).unwrap()
}

#[test]
fn init_returns_initial_box_and_fixes_size() {
    let t = static_tracklet(1);
    let b0 = t.frames[0].gt_box;
    let p = echo(4);
    let mut tr = Tracker::new(&p, &cfg(4), 0).unwrap();
    assert_eq!(tr.init(b0, t.frames[0].points.clone(), t.frames[0].pose).unwrap(), b0);
    let st = tr.state().unwrap();
    assert_eq!(st.target_size(), b0.size());
    assert!(st.boxes().all(|b| *b == b0));
    assert_eq!(st.buffer_len(), 1);
    assert_eq!(st.frames_seen(), 1);
}

#[test]
fn invalid_initial_box_cannot_be_built() {
    assert!(matches!(Box7::new(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0), Err(boxseq::Error::InvalidBox(_))));
    assert!(Box7::new(0.0, 0.0, f64::NAN, 1.0, 1.0, 1.0, 0.0).is_err());
}

#[test]
fn buffers_hold_the_latest_predictions() {
    let spec = SyntheticSpec { frames: 12, ..Default::default() };
    let t = generate_synthetic_tracklet(&spec, "m", 3).unwrap();
    for n in [1usize, 2, 4] {
        let p = echo(n);
        let mut tr = Tracker::new(&p, &cfg(n), 0).unwrap();
        let mut outputs = vec![tr.init(t.frames[0].gt_box, t.frames[0].points.clone(), t.frames[0].pose).unwrap()];
        for (k, f) in t.frames[1..=n + 3].iter().enumerate() {
            outputs.push(tr.step(f.points.clone(), f.pose).unwrap());
            let st = tr.state().unwrap();
            assert_eq!(st.buffer_len(), (k + 2).min(n - 1));
            assert_eq!(st.frames_seen(), k + 2);
        }
        let st = tr.state().unwrap();
        assert_eq!(st.buffer_len(), n - 1);
        let tail: Vec<Box7> = outputs[outputs.len() - (n - 1)..].to_vec();
        assert_eq!(st.boxes().copied().collect::<Vec<_>>(), tail);
        assert_eq!(st.target_size(), t.frames[0].gt_box.size());
    }
}

#[test]
fn echo_on_static_target_scores_perfect_overlap() {
    for seed in 0..4 {
        let t = static_tracklet(seed);
        let boxes = run_tracklet(&echo(4), &t, &cfg(4), 9).unwrap();
        let gt: Vec<Box7> = t.frames.iter().map(|f| f.gt_box).collect();
        for (p, g) in boxes.iter().zip(&gt) {
            assert!(center_distance(p, g) < 1e-6);
            assert!((iou3d(p, g) - 1.0).abs() < 1e-6);
        }
        let max = 100.0 * 20.0 / 21.0;
        assert!((success_score(&boxes, &gt).unwrap() - max).abs() < 1e-9);
    }
}

#[test]
fn world_local_round_trip_under_ego_motion() {
    // The echo model returns its anchor, so every output must equal the
    // initial box up to transform round-off.
    let spec = SyntheticSpec { frames: 40, ego_speed: [1.0, 2.0], ego_yaw_rate: [0.1, 0.2], ..Default::default() };
    let t = generate_synthetic_tracklet(&spec, "ego", 2).unwrap();
    let boxes = run_tracklet(&echo(3), &t, &cfg(3), 1).unwrap();
    let b0 = t.frames[0].gt_box;
    for b in &boxes {
        assert!(center_distance(b, &b0) < 1e-6);
        assert!(boxseq::geometry::wrap_angle(b.theta() - b0.theta()).abs() < 1e-9);
    }
}

#[test]
fn empty_clouds_still_produce_boxes() {
    let net = Network::new(ModelConfig::micro(), 4).unwrap();
    let c = SampleConfig { n_frames: 2, points_per_frame: 8, ..Default::default() };
    let b0 = Box7::new(5.0, 1.0, 0.0, 4.0, 1.8, 1.5, 0.2).unwrap();
    let mut tr = Tracker::new(&net, &c, 0).unwrap();
    tr.init(b0, vec![], Pose::identity()).unwrap();
    for _ in 0..3 {
        let b = tr.step(vec![], Pose::identity()).unwrap();
        assert!(b.to_array().iter().all(|v| v.is_finite()));
        assert_eq!(b.size(), b0.size());
    }
}

#[test]
fn single_frame_tracklet() {
    let mut t = static_tracklet(0);
    t.frames.truncate(1);
    let boxes = run_tracklet(&echo(4), &t, &cfg(4), 0).unwrap();
    assert_eq!(boxes, vec![t.frames[0].gt_box]);
}

#[test]
fn step_before_init_fails() {
    let p = echo(4);
    let mut tr = Tracker::new(&p, &cfg(4), 0).unwrap();
    assert!(matches!(tr.step(vec![], Pose::identity()), Err(boxseq::Error::State(_))));
}

#[test]
fn window_mismatch_is_a_config_error() {
    let p = echo(4);
    assert!(matches!(Tracker::new(&p, &cfg(3), 0), Err(boxseq::Error::Config(_))));
}

#[test]
fn network_tracking_is_deterministic_and_worker_independent() {
    let model = ModelConfig::micro();
    let net = Network::new(model.clone(), 6).unwrap();
    let spec = SyntheticSpec { frames: 6, ..Default::default() };
    let data = generate_dataset(&spec, 5, 8, "w").unwrap();
    let c = SampleConfig { n_frames: model.n_frames, points_per_frame: model.points_per_frame, ..Default::default() };
    let a = track_dataset(&net, &data, &c, 3, 1).unwrap();
    let b = track_dataset(&net, &data, &c, 3, 1).unwrap();
    let p = track_dataset(&net, &data, &c, 3, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, p);
    for (pred, t) in a.iter().zip(&data) {
        assert_eq!(pred.tracklet_id, t.id);
        assert_eq!(pred.boxes.len(), t.len());
        assert_eq!(pred.boxes[0], t.frames[0].gt_box);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pred.txt");
    save_predictions(&path, &a).unwrap();
    assert_eq!(load_predictions(&path).unwrap(), a);
}
