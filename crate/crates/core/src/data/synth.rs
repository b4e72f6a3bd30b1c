use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mix_seed, Frame, Tracklet};
use crate::error::{Error, Result};
use crate::geometry::{Box7, Pose};

/// Parameters of the synthetic single-target scene generator.
///
/// Ranges are `[min, max]` and sampled uniformly once per tracklet (motion,
/// start) or once per frame (point counts). Distances are meters, angles
/// radians, rates per frame. The target moves along its heading, which is the
/// box's local x axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub category: String,
    pub frames: usize,
    /// `(w, l, h)`; `w` lies along the heading.
    pub size: [f64; 3],
    pub start_distance: [f64; 2],
    pub heading: [f64; 2],
    pub speed: [f64; 2],
    pub yaw_rate: [f64; 2],
    /// Standard deviation of the per-frame center jitter.
    pub center_jitter: f64,
    pub yaw_jitter: f64,
    pub target_points: [usize; 2],
    /// Overrides `target_points` on frame 0 (sparsity buckets).
    pub first_frame_points: Option<[usize; 2]>,
    /// Probability that a frame after the first has no target points.
    pub occlusion_prob: f64,
    pub clutter_points: [usize; 2],
    /// Half-extent added around the box for clutter placement.
    pub clutter_margin: f64,
    pub ground_points: usize,
    /// Inward depth noise of surface returns.
    pub sensor_noise: f64,
    pub ego_speed: [f64; 2],
    pub ego_yaw_rate: [f64; 2],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            category: "Car".into(),
            frames: 20,
            size: [4.2, 1.8, 1.6],
            start_distance: [8.0, 25.0],
            heading: [-PI, PI],
            speed: [0.5, 1.5],
            yaw_rate: [0.0, 0.0],
            center_jitter: 0.0,
            yaw_jitter: 0.0,
            target_points: [60, 150],
            first_frame_points: None,
            occlusion_prob: 0.0,
            clutter_points: [20, 60],
            clutter_margin: 2.5,
            ground_points: 30,
            sensor_noise: 0.02,
            ego_speed: [0.0, 1.0],
            ego_yaw_rate: [-0.02, 0.02],
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::Config(format!("{name} range {r:?} is invalid")));
    }
    Ok(())
}

fn draw<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn draw_count<R: Rng>(rng: &mut R, r: [usize; 2]) -> usize {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("synthetic frame count must be positive".into()));
        }
        if self.size.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config(format!("synthetic size {:?} must be positive", self.size)));
        }
        for (name, r) in [
            ("start_distance", self.start_distance),
            ("heading", self.heading),
            ("speed", self.speed),
            ("yaw_rate", self.yaw_rate),
            ("ego_speed", self.ego_speed),
            ("ego_yaw_rate", self.ego_yaw_rate),
        ] {
            check_range(name, r)?;
        }
        let counts = [Some(self.target_points), self.first_frame_points, Some(self.clutter_points)];
        for r in counts.into_iter().flatten() {
            if r[0] > r[1] {
                return Err(Error::Config(format!("point count range {r:?} is invalid")));
            }
        }
        if self.target_points[1] == 0 && self.first_frame_points.is_none_or(|r| r[1] == 0) {
            return Err(Error::Config("synthetic target point counts must allow at least one point".into()));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::Config("occlusion probability must be in [0, 1]".into()));
        }
        if self.center_jitter < 0.0 || self.yaw_jitter < 0.0 || self.sensor_noise < 0.0 || self.clutter_margin < 0.0 {
            return Err(Error::Config("noise levels and margins must be nonnegative".into()));
        }
        if self.category.is_empty() || self.category.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid category {:?}", self.category)));
        }
        Ok(())
    }
}

/// Uniform sample on the surface of `b`, pushed inward by `depth`.
fn surface_point<R: Rng>(rng: &mut R, b: &Box7, depth: f64) -> [f64; 3] {
    let [w, l, h] = b.size();
    let areas = [l * h, l * h, w * h, w * h, w * l, w * l];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut face = 0;
    for (i, a) in areas.iter().enumerate() {
        if pick < *a {
            face = i;
            break;
        }
        pick -= a;
        face = i;
    }
    let half = [0.5 * w, 0.5 * l, 0.5 * h];
    let axis = face / 2;
    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
    let mut local = [0.0; 3];
    for (k, v) in local.iter_mut().enumerate() {
        *v = if k == axis {
            sign * (half[k] - depth.min(half[k]))
        } else {
            rng.random_range(-half[k]..=half[k])
        };
    }
    b.frame().apply(local)
}

/// Generates one tracklet; deterministic in `(spec, seed)`.
pub fn generate_synthetic_tracklet(spec: &SyntheticSpec, id: &str, seed: u64) -> Result<Tracklet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center_noise = Normal::new(0.0, spec.center_jitter.max(0.0)).expect("finite std");
    let yaw_noise = Normal::new(0.0, spec.yaw_jitter.max(0.0)).expect("finite std");
    let depth_noise = Normal::new(0.0, spec.sensor_noise.max(0.0)).expect("finite std");

    let [w, l, h] = spec.size;
    let distance = draw(&mut rng, spec.start_distance);
    let bearing = rng.random_range(-PI..PI);
    let heading0 = draw(&mut rng, spec.heading);
    let speed = draw(&mut rng, spec.speed);
    let yaw_rate = draw(&mut rng, spec.yaw_rate);
    let ego_speed = draw(&mut rng, spec.ego_speed);
    let ego_yaw_rate = draw(&mut rng, spec.ego_yaw_rate);

    let mut center = [distance * bearing.cos(), distance * bearing.sin(), 0.5 * h];
    let mut heading = heading0;
    let mut ego_pos = [0.0, 0.0, 0.0];
    let mut ego_yaw = 0.0;

    let mut frames = Vec::with_capacity(spec.frames);
    for k in 0..spec.frames {
        let jitter = if spec.center_jitter > 0.0 {
            [center_noise.sample(&mut rng), center_noise.sample(&mut rng), 0.0]
        } else {
            [0.0; 3]
        };
        let yaw_j = if spec.yaw_jitter > 0.0 { yaw_noise.sample(&mut rng) } else { 0.0 };
        let gt_box = Box7::new(
            center[0] + jitter[0],
            center[1] + jitter[1],
            center[2] + jitter[2],
            w,
            l,
            h,
            heading + yaw_j,
        )?;
        let pose = Pose::from_yaw(ego_yaw, ego_pos);

        let occluded = k > 0 && spec.occlusion_prob > 0.0 && rng.random::<f64>() < spec.occlusion_prob;
        let n_target = match (k, spec.first_frame_points) {
            (0, Some(r)) => draw_count(&mut rng, r),
            _ => draw_count(&mut rng, spec.target_points),
        };
        let n_target = if occluded { 0 } else { n_target };
        let mut world_points = Vec::new();
        for _ in 0..n_target {
            // A tiny floor keeps surface returns strictly inside after frame round trips.
            let depth = if spec.sensor_noise > 0.0 { depth_noise.sample(&mut rng).abs() } else { 0.0 };
            let depth = depth.max(1e-6);
            world_points.push(surface_point(&mut rng, &gt_box, depth));
        }
        let reach = [0.5 * w + spec.clutter_margin, 0.5 * l + spec.clutter_margin];
        let n_clutter = draw_count(&mut rng, spec.clutter_points);
        let frame_pose = gt_box.frame();
        let mut placed = 0;
        let mut attempts = 0;
        while placed < n_clutter && attempts < 50 * (n_clutter + 1) {
            attempts += 1;
            let local = [
                rng.random_range(-reach[0]..=reach[0]),
                rng.random_range(-reach[1]..=reach[1]),
                rng.random_range(-0.5 * h..=0.5 * h + 1.0),
            ];
            let p = frame_pose.apply(local);
            if !gt_box.contains(p) {
                world_points.push(p);
                placed += 1;
            }
        }
        for _ in 0..spec.ground_points {
            let local = [
                rng.random_range(-reach[0]..=reach[0]),
                rng.random_range(-reach[1]..=reach[1]),
                -0.5 * h - 0.05,
            ];
            world_points.push(frame_pose.apply(local));
        }
        let to_sensor = pose.inverse();
        let points = world_points.iter().map(|&p| to_sensor.apply(p)).collect();
        frames.push(Frame { points, pose, gt_box });

        center[0] += speed * heading.cos();
        center[1] += speed * heading.sin();
        heading += yaw_rate;
        ego_pos[0] += ego_speed * ego_yaw.cos();
        ego_pos[1] += ego_speed * ego_yaw.sin();
        ego_yaw += ego_yaw_rate;
    }
    Ok(Tracklet {
        id: id.to_string(),
        category: spec.category.clone(),
        frames,
    })
}

/// `count` tracklets named `{prefix}{index:04}`, each seeded from `(seed, index)`.
pub fn generate_dataset(spec: &SyntheticSpec, count: usize, seed: u64, prefix: &str) -> Result<Vec<Tracklet>> {
    (0..count)
        .map(|i| generate_synthetic_tracklet(spec, &format!("{prefix}{i:04}"), mix_seed(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic_tracklet(&spec, "t", 7).unwrap();
        let b = generate_synthetic_tracklet(&spec, "t", 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_tracklet(&spec, "t", 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn static_target_keeps_its_box() {
        let spec = SyntheticSpec {
            speed: [0.0, 0.0],
            yaw_rate: [0.0, 0.0],
            frames: 6,
            ..Default::default()
        };
        let t = generate_synthetic_tracklet(&spec, "s", 1).unwrap();
        let first = t.frames[0].gt_box;
        assert!(t.frames.iter().all(|f| f.gt_box == first));
    }

    #[test]
    fn constant_velocity_kinematics() {
        let spec = SyntheticSpec {
            frames: 10,
            start_distance: [0.0, 0.0],
            heading: [0.0, 0.0],
            speed: [1.0, 1.0],
            ..Default::default()
        };
        let t = generate_synthetic_tracklet(&spec, "v", 3).unwrap();
        for (k, f) in t.frames.iter().enumerate() {
            assert!((f.gt_box.x() - k as f64).abs() < 1e-12);
            assert!(f.gt_box.y().abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_first_frame_is_respected() {
        let spec = SyntheticSpec {
            first_frame_points: Some([0, 15]),
            ..Default::default()
        };
        for seed in 0..20 {
            let t = generate_synthetic_tracklet(&spec, "x", seed).unwrap();
            assert!(t.first_frame_points() <= 15);
        }
    }

    #[test]
    fn target_points_lie_in_box_and_clutter_outside() {
        let spec = SyntheticSpec {
            target_points: [40, 40],
            clutter_points: [30, 30],
            ground_points: 10,
            ..Default::default()
        };
        let t = generate_synthetic_tracklet(&spec, "c", 11).unwrap();
        for f in &t.frames {
            assert_eq!(f.points.len(), 80);
            assert_eq!(f.target_point_count(), 40);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = SyntheticSpec {
            frames: 0,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic_tracklet(&bad, "b", 0), Err(Error::Config(_))));
        let bad = SyntheticSpec {
            size: [1.0, 0.0, 1.0],
            ..Default::default()
        };
        assert!(generate_synthetic_tracklet(&bad, "b", 0).is_err());
    }
}
