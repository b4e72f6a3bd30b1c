//! Sample construction: cropping, fixed-cardinality resampling, channel
//! attachment and history-box perturbation, all in a target-centric local
//! frame anchored at the previous box.

mod io;
mod synth;

pub use io::{load_tracklets, read_tracklets, save_tracklets, write_tracklets, TRACKLET_FORMAT_VERSION};
pub use synth::{generate_dataset, generate_synthetic_tracklet, SyntheticSpec};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_box_offset, transform_box, Box7, Pose};

/// Mask channel value for current-frame points, whose status is unknown.
pub const CURRENT_MASK_VALUE: f64 = 0.5;

/// One annotated frame of a tracklet: raw sensor-frame points, the sensor's
/// pose in world coordinates and the world-frame ground-truth box.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub points: Vec<[f64; 3]>,
    pub pose: Pose,
    pub gt_box: Box7,
}

impl Frame {
    /// Number of raw points inside the ground-truth box.
    pub fn target_point_count(&self) -> usize {
        self.points
            .iter()
            .filter(|&&p| self.gt_box.contains(self.pose.apply(p)))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    pub id: String,
    pub category: String,
    pub frames: Vec<Frame>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn target_size(&self) -> [f64; 3] {
        self.frames[0].gt_box.size()
    }

    pub fn first_frame_points(&self) -> usize {
        self.frames.first().map_or(0, Frame::target_point_count)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Config(format!("tracklet {} has no frames", self.id)));
        }
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid tracklet id {:?}", self.id)));
        }
        if self.category.is_empty() || self.category.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid category {:?}", self.category)));
        }
        Ok(())
    }
}

/// `W` points of one frame, columns `(x, y, z, timestamp, mask_status)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCloud {
    pub points: Vec<[f64; 5]>,
}

impl FrameCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xyz(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p[0], p[1], p[2]]).collect()
    }
}

/// Supervision attached to a sample when ground truth is known.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleLabels {
    /// `N` boxes, oldest first, in the local frame.
    pub gt_boxes: Vec<Box7>,
    /// `N·W` foreground labels, frame-major.
    pub gt_foreground: Vec<f64>,
}

/// One network input window in the local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqSample {
    /// `N` frames, oldest first; the last one is the current frame.
    pub frames: Vec<FrameCloud>,
    /// `N - 1` history boxes, oldest first.
    pub history_boxes: Vec<Box7>,
    pub timestamps: Vec<f64>,
    pub target_size: [f64; 3],
    /// Maps local coordinates to world coordinates.
    pub to_world: Pose,
    pub labels: Option<SampleLabels>,
}

impl SeqSample {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// History boxes are perturbed ground truth; history masks come from
    /// ground-truth containment.
    #[default]
    Train,
    /// History boxes are given (tracker predictions); history masks come from
    /// containment in those boxes.
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub n_frames: usize,
    pub points_per_frame: usize,
    /// Crop margin around the reference box, meters per side.
    pub margin: f64,
    /// Seconds between consecutive frames.
    pub frame_interval: f64,
    /// Half-widths of the uniform history-box offsets `(dx, dy, dz, dtheta)`.
    pub offset_range: [f64; 4],
    pub mode: SampleMode,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n_frames: 4,
            points_per_frame: 128,
            margin: 2.0,
            frame_interval: 0.5,
            offset_range: [0.3, 0.3, 0.1, 5f64.to_radians()],
            mode: SampleMode::Train,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 || self.points_per_frame == 0 {
            return Err(Error::Config("sample window and point count must be positive".into()));
        }
        if !(self.margin >= 0.0) || !(self.frame_interval > 0.0) {
            return Err(Error::Config("margin must be >= 0 and frame interval > 0".into()));
        }
        if self.offset_range.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("offset ranges must be nonnegative".into()));
        }
        Ok(())
    }

    /// Timestamp of window slot `k` (oldest first), relative to the current frame.
    pub fn timestamp(&self, k: usize) -> f64 {
        -((self.n_frames - 1 - k) as f64) * self.frame_interval
    }
}

/// Points inside the axis-aligned (in the box frame) expansion of `center_box`
/// by `margin` on every side. Coordinates are returned unchanged.
pub fn crop_region(points: &[[f64; 3]], center_box: &Box7, margin: f64) -> Vec<[f64; 3]> {
    let grown = Box7::from_parts(
        center_box.center(),
        center_box.size().map(|s| s + 2.0 * margin.max(0.0)),
        center_box.theta(),
    )
    .expect("growing a valid box keeps it valid");
    points.iter().copied().filter(|&p| grown.contains(p)).collect()
}

/// Exactly `count` points: a random subset when there are enough points, all
/// points plus random repeats when there are fewer, and `count` copies of
/// `center` when there are none.
pub fn resample_fixed<R: Rng>(
    points: &[[f64; 3]],
    count: usize,
    center: [f64; 3],
    rng: &mut R,
) -> Vec<[f64; 3]> {
    let m = points.len();
    if m == 0 {
        return vec![center; count];
    }
    if m >= count {
        return rand::seq::index::sample(rng, m, count)
            .into_iter()
            .map(|i| points[i])
            .collect();
    }
    let mut out = points.to_vec();
    out.extend((m..count).map(|_| points[rng.random_range(0..m)]));
    out.shuffle(rng);
    out
}

/// Splitmix-style seed derivation, so that every (run, item) pair gets an
/// independent reproducible stream.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A raw frame reference used when assembling a window.
#[derive(Clone, Copy, Debug)]
pub struct WindowFrame<'a> {
    pub points: &'a [[f64; 3]],
    pub pose: &'a Pose,
}

/// Builds a sample from raw window frames (oldest first, current last).
///
/// `history_world` holds the `N - 1` history boxes and `anchor_world` the box
/// whose pose defines the local frame (the previous box). When `gt_world` is
/// given (`N` boxes) foreground labels are attached; in train mode it also
/// drives the history mask channel.
pub fn assemble_sample(
    window: &[WindowFrame<'_>],
    history_world: &[Box7],
    anchor_world: &Box7,
    gt_world: Option<&[Box7]>,
    target_size: [f64; 3],
    cfg: &SampleConfig,
    seed: u64,
) -> Result<SeqSample> {
    let n = cfg.n_frames;
    if window.len() != n {
        return Err(Error::shape("sample window", n, window.len()));
    }
    if history_world.len() + 1 != n {
        return Err(Error::shape("history boxes", n - 1, history_world.len()));
    }
    if let Some(gt) = gt_world {
        if gt.len() != n {
            return Err(Error::shape("ground-truth boxes", n, gt.len()));
        }
    }
    if cfg.mode == SampleMode::Train && gt_world.is_none() {
        return Err(Error::Config("train-mode samples need ground truth".into()));
    }
    let to_world = anchor_world.frame();
    let to_local = to_world.inverse();
    let local = |b: &Box7| transform_box(b, &to_local);
    let history: Vec<Box7> = history_world.iter().map(local).collect();
    let gt_local: Option<Vec<Box7>> = gt_world.map(|g| g.iter().map(local).collect());
    let anchor_local = Box7::from_parts(local(anchor_world).center(), target_size, local(anchor_world).theta())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(n);
    let mut gt_foreground = Vec::with_capacity(n * cfg.points_per_frame);
    let timestamps: Vec<f64> = (0..n).map(|k| cfg.timestamp(k)).collect();
    for (k, wf) in window.iter().enumerate() {
        let is_current = k + 1 == n;
        let frame_to_local = to_local.compose(wf.pose);
        let pts: Vec<[f64; 3]> = wf.points.iter().map(|&p| frame_to_local.apply(p)).collect();
        let crop_box = if is_current { anchor_local } else { history[k] };
        let cropped = crop_region(&pts, &crop_box, cfg.margin);
        let sampled = resample_fixed(&cropped, cfg.points_per_frame, crop_box.center(), &mut rng);
        let mask_box = match (cfg.mode, &gt_local) {
            (SampleMode::Train, Some(gt)) => gt[k],
            _ => crop_box,
        };
        let points = sampled
            .iter()
            .map(|&[x, y, z]| {
                let mask = if is_current {
                    CURRENT_MASK_VALUE
                } else if mask_box.contains([x, y, z]) {
                    1.0
                } else {
                    0.0
                };
                [x, y, z, timestamps[k], mask]
            })
            .collect();
        if let Some(gt) = &gt_local {
            gt_foreground.extend(
                sampled
                    .iter()
                    .map(|&p| if gt[k].contains(p) { 1.0 } else { 0.0 }),
            );
        }
        frames.push(FrameCloud { points });
    }
    Ok(SeqSample {
        frames,
        history_boxes: history,
        timestamps,
        target_size,
        to_world,
        labels: gt_local.map(|gt_boxes| SampleLabels {
            gt_boxes,
            gt_foreground,
        }),
    })
}

/// Source frame index for window slot `k` ending at `frame_index`, padding the
/// track start by repeating frame 0.
pub fn window_source(frame_index: usize, n_frames: usize, k: usize) -> usize {
    (frame_index + k + 1).saturating_sub(n_frames)
}

/// Builds the sample ending at `frame_index` from a ground-truth tracklet.
///
/// Train mode perturbs each source frame's box with a uniform offset drawn
/// from `cfg.offset_range`; test mode uses the unperturbed boxes, as a perfect
/// tracker would have predicted them.
pub fn build_sample(
    tracklet: &Tracklet,
    frame_index: usize,
    cfg: &SampleConfig,
    seed: u64,
) -> Result<SeqSample> {
    cfg.validate()?;
    if frame_index >= tracklet.len() {
        return Err(Error::Index {
            index: frame_index,
            len: tracklet.len(),
        });
    }
    let n = cfg.n_frames;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x0ff5e7));
    // One offset per source frame so that padded replicas stay identical.
    let first_src = window_source(frame_index, n, 0).min(frame_index.saturating_sub(1));
    let perturbed: Vec<Box7> = (first_src..=frame_index)
        .map(|src| {
            let gt = tracklet.frames[src].gt_box;
            match cfg.mode {
                SampleMode::Train => {
                    let r = cfg.offset_range;
                    let mut draw = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
                    let offset = [draw(r[0]), draw(r[1]), draw(r[2]), draw(r[3])];
                    apply_box_offset(&gt, offset)
                }
                SampleMode::Test => gt,
            }
        })
        .collect();
    let boxed = |src: usize| perturbed[src - first_src];
    let window: Vec<WindowFrame<'_>> = (0..n)
        .map(|k| {
            let f = &tracklet.frames[window_source(frame_index, n, k)];
            WindowFrame {
                points: &f.points,
                pose: &f.pose,
            }
        })
        .collect();
    let history: Vec<Box7> = (0..n - 1).map(|k| boxed(window_source(frame_index, n, k))).collect();
    let anchor = boxed(frame_index.saturating_sub(1));
    let gt: Vec<Box7> = (0..n)
        .map(|k| tracklet.frames[window_source(frame_index, n, k)].gt_box)
        .collect();
    assemble_sample(
        &window,
        &history,
        &anchor,
        Some(&gt),
        tracklet.target_size(),
        cfg,
        mix_seed(seed, 0x5a3b1e),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Box7 {
        Box7::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn crop_keeps_contained_points() {
        let pts = vec![[0.1, 0.2, -0.3], [0.5, 0.5, 0.5], [-0.4, 0.0, 0.1]];
        assert_eq!(crop_region(&pts, &unit_box(), 0.0), pts);
        assert!(crop_region(&[], &unit_box(), 1.0).is_empty());
    }

    #[test]
    fn crop_grid_matches_brute_force() {
        let mut grid = Vec::new();
        for i in -8..=8 {
            for j in -8..=8 {
                for k in -8..=8 {
                    grid.push([i as f64 * 0.25, j as f64 * 0.25, k as f64 * 0.25]);
                }
            }
        }
        let kept = crop_region(&grid, &unit_box(), 1.0);
        let expected: Vec<_> = grid
            .iter()
            .copied()
            .filter(|p| p.iter().all(|c| c.abs() <= 1.5))
            .collect();
        assert_eq!(kept, expected);
        assert_eq!(kept.len(), 13 * 13 * 13);
    }

    #[test]
    fn resample_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        let mut same = resample_fixed(&pts, 5, [0.0; 3], &mut rng);
        same.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(same, pts);

        assert_eq!(resample_fixed(&[], 4, [1.0, 2.0, 3.0], &mut rng), vec![[1.0, 2.0, 3.0]; 4]);

        let two = [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let up = resample_fixed(&two, 6, [0.0; 3], &mut rng);
        assert_eq!(up.len(), 6);
        assert!(up.iter().all(|p| two.contains(p)));

        let many: Vec<[f64; 3]> = (0..50).map(|i| [i as f64, 1.0, 0.0]).collect();
        let down = resample_fixed(&many, 10, [0.0; 3], &mut rng);
        let mut xs: Vec<i64> = down.iter().map(|p| p[0] as i64).collect();
        xs.sort();
        xs.dedup();
        assert_eq!(xs.len(), 10, "sampling without replacement");
    }

    #[test]
    fn window_source_pads_with_frame_zero() {
        assert_eq!((0..4).map(|k| window_source(0, 4, k)).collect::<Vec<_>>(), vec![0, 0, 0, 0]);
        assert_eq!((0..4).map(|k| window_source(2, 4, k)).collect::<Vec<_>>(), vec![0, 0, 1, 2]);
        assert_eq!((0..4).map(|k| window_source(7, 4, k)).collect::<Vec<_>>(), vec![4, 5, 6, 7]);
    }

    #[test]
    fn timestamps_are_relative_to_current_frame() {
        let cfg = SampleConfig::default();
        let ts: Vec<f64> = (0..4).map(|k| cfg.timestamp(k)).collect();
        assert_eq!(ts, vec![-1.5, -1.0, -0.5, 0.0]);
    }
}
