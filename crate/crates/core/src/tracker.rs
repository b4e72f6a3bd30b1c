//! Autoregressive tracking: rolling frame and box buffers, a test-mode sample
//! per frame, and the model's current box mapped back to world coordinates.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::data::{assemble_sample, mix_seed, SampleConfig, SampleMode, SeqSample, Tracklet, WindowFrame};
use crate::error::{Error, Result};
use crate::geometry::{transform_box, Box7, Pose};
use crate::network::Network;

/// Anything that maps a test-mode sample to the current box `(x, y, z, theta)`
/// in the sample's local frame.
pub trait BoxPredictor: Sync {
    /// Window length `N` and points per frame `W` the predictor expects.
    fn window(&self) -> (usize, usize);
    fn predict(&self, sample: &SeqSample) -> Result<[f64; 4]>;
}

impl BoxPredictor for Network {
    fn window(&self) -> (usize, usize) {
        (self.config().n_frames, self.config().points_per_frame)
    }

    fn predict(&self, sample: &SeqSample) -> Result<[f64; 4]> {
        Network::predict(self, sample)
    }
}

/// Predicts the most recent history box (the local-frame anchor). On a static
/// target it reproduces the initial box every frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EchoHistory {
    pub n_frames: usize,
    pub points_per_frame: usize,
}

impl BoxPredictor for EchoHistory {
    fn window(&self) -> (usize, usize) {
        (self.n_frames, self.points_per_frame)
    }

    fn predict(&self, sample: &SeqSample) -> Result<[f64; 4]> {
        Ok(sample
            .history_boxes
            .last()
            .map_or([0.0; 4], Box7::pose_params))
    }
}

/// Rolling state of one track.
#[derive(Clone, Debug)]
pub struct TrackState {
    frames: VecDeque<(Vec<[f64; 3]>, Pose)>,
    boxes: VecDeque<Box7>,
    target_size: [f64; 3],
    anchor: Box7,
    frames_seen: usize,
}

impl TrackState {
    /// Buffered raw frames, oldest first.
    pub fn frames(&self) -> impl Iterator<Item = &(Vec<[f64; 3]>, Pose)> {
        self.frames.iter()
    }

    /// Buffered world-frame boxes, oldest first.
    pub fn boxes(&self) -> impl Iterator<Item = &Box7> {
        self.boxes.iter()
    }

    pub fn buffer_len(&self) -> usize {
        self.boxes.len()
    }

    pub fn target_size(&self) -> [f64; 3] {
        self.target_size
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }
}

pub struct Tracker<'a, P: BoxPredictor + ?Sized> {
    predictor: &'a P,
    cfg: SampleConfig,
    seed: u64,
    state: Option<TrackState>,
}

impl<'a, P: BoxPredictor + ?Sized> Tracker<'a, P> {
    /// `cfg` supplies crop margin and frame interval; window size and point
    /// count must match the predictor.
    pub fn new(predictor: &'a P, cfg: &SampleConfig, seed: u64) -> Result<Self> {
        let (n, w) = predictor.window();
        if cfg.n_frames != n || cfg.points_per_frame != w {
            return Err(Error::Config(format!(
                "sample window {}×{} does not match the model's {n}×{w}",
                cfg.n_frames, cfg.points_per_frame
            )));
        }
        let cfg = SampleConfig {
            mode: SampleMode::Test,
            ..cfg.clone()
        };
        cfg.validate()?;
        Ok(Tracker {
            predictor,
            cfg,
            seed,
            state: None,
        })
    }

    pub fn state(&self) -> Option<&TrackState> {
        self.state.as_ref()
    }

    /// Starts a track from the given first box; returns that box unchanged.
    pub fn init(&mut self, initial_box: Box7, cloud: Vec<[f64; 3]>, pose: Pose) -> Result<Box7> {
        if initial_box.size().iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidBox("initial box must have positive size".into()));
        }
        let cap = self.cfg.n_frames - 1;
        let mut frames = VecDeque::with_capacity(cap);
        let mut boxes = VecDeque::with_capacity(cap);
        if cap > 0 {
            frames.push_back((cloud, pose));
            boxes.push_back(initial_box);
        }
        self.state = Some(TrackState {
            frames,
            boxes,
            target_size: initial_box.size(),
            anchor: initial_box,
            frames_seen: 1,
        });
        Ok(initial_box)
    }

    /// Tracks the target into a new frame and returns its world-frame box.
    pub fn step(&mut self, cloud: Vec<[f64; 3]>, pose: Pose) -> Result<Box7> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::State("step called before init".into()))?;
        let n = self.cfg.n_frames;
        let cap = n - 1;
        let pad = cap - state.boxes.len();
        let mut window: Vec<WindowFrame<'_>> = Vec::with_capacity(n);
        let mut history = Vec::with_capacity(cap);
        for k in 0..cap {
            let i = k.saturating_sub(pad);
            let (pts, p) = &state.frames[i];
            window.push(WindowFrame { points: pts, pose: p });
            history.push(state.boxes[i]);
        }
        window.push(WindowFrame {
            points: &cloud,
            pose: &pose,
        });
        let sample = assemble_sample(
            &window,
            &history,
            &state.anchor,
            None,
            state.target_size,
            &self.cfg,
            mix_seed(self.seed, state.frames_seen as u64),
        )?;
        let local = self.predictor.predict(&sample)?;
        let local_box = Box7::from_pose(local, state.target_size)?;
        let world = transform_box(&local_box, &sample.to_world);
        if cap > 0 {
            if state.boxes.len() == cap {
                state.boxes.pop_front();
                state.frames.pop_front();
            }
            state.boxes.push_back(world);
            state.frames.push_back((cloud, pose));
        }
        state.anchor = world;
        state.frames_seen += 1;
        Ok(world)
    }
}

/// One-pass evaluation run: initialized from the ground-truth first box,
/// then fed only clouds and poses.
pub fn run_tracklet<P: BoxPredictor + ?Sized>(
    predictor: &P,
    tracklet: &Tracklet,
    cfg: &SampleConfig,
    seed: u64,
) -> Result<Vec<Box7>> {
    let first = tracklet
        .frames
        .first()
        .ok_or_else(|| Error::Config(format!("tracklet {} has no frames", tracklet.id)))?;
    let mut tracker = Tracker::new(predictor, cfg, seed)?;
    let mut out = Vec::with_capacity(tracklet.len());
    out.push(tracker.init(first.gt_box, first.points.clone(), first.pose)?);
    for f in &tracklet.frames[1..] {
        out.push(tracker.step(f.points.clone(), f.pose)?);
    }
    Ok(out)
}

/// Predictions for one tracklet.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackPrediction {
    pub tracklet_id: String,
    pub boxes: Vec<Box7>,
}

/// Runs every tracklet on a pool of `workers` threads; results keep input order.
pub fn track_dataset<P: BoxPredictor + ?Sized>(
    predictor: &P,
    tracklets: &[Tracklet],
    cfg: &SampleConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<TrackPrediction>> {
    let job = |(i, t): (usize, &Tracklet)| -> Result<TrackPrediction> {
        Ok(TrackPrediction {
            tracklet_id: t.id.clone(),
            boxes: run_tracklet(predictor, t, cfg, mix_seed(seed, i as u64))?,
        })
    };
    if workers <= 1 {
        return tracklets.iter().enumerate().map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| tracklets.par_iter().enumerate().map(job).collect())
}

pub const PREDICTION_FORMAT_VERSION: u32 = 1;
const PREDICTION_MAGIC: &str = "boxseq-predictions";

/// Writes one row per frame: `tracklet_id frame_index x y z w l h theta`.
pub fn write_predictions<W: Write>(mut out: W, predictions: &[TrackPrediction]) -> std::io::Result<()> {
    writeln!(out, "{PREDICTION_MAGIC} {PREDICTION_FORMAT_VERSION}")?;
    writeln!(out, "# tracklet_id frame_index x y z w l h theta")?;
    for p in predictions {
        for (k, b) in p.boxes.iter().enumerate() {
            let [x, y, z, w, l, h, t] = b.to_array();
            writeln!(out, "{} {k} {x} {y} {z} {w} {l} {h} {t}", p.tracklet_id)?;
        }
    }
    out.flush()
}

pub fn save_predictions(path: &Path, predictions: &[TrackPrediction]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions(BufWriter::new(file), predictions).map_err(|e| Error::io(path, e))
}

pub fn read_predictions<R: BufRead>(reader: R, path: &Path) -> Result<Vec<TrackPrediction>> {
    let err = |line: usize, record: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        record: record.to_string(),
        message,
    };
    let mut out: Vec<TrackPrediction> = Vec::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let mut parts = line.split_whitespace();
            let version = match (parts.next(), parts.next(), parts.next()) {
                (Some(PREDICTION_MAGIC), Some(v), None) => v.parse::<u32>().ok(),
                _ => None,
            };
            if version != Some(PREDICTION_FORMAT_VERSION) {
                return Err(err(lineno, "header", format!("expected `{PREDICTION_MAGIC} {PREDICTION_FORMAT_VERSION}`, found {line:?}")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let record = fields.first().copied().unwrap_or("");
        if fields.len() != 9 {
            return Err(err(lineno, record, format!("expected 9 fields, found {}", fields.len())));
        }
        let index: usize = fields[1]
            .parse()
            .map_err(|_| err(lineno, record, format!("bad frame index {:?}", fields[1])))?;
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields[2..]) {
            *slot = f
                .parse()
                .map_err(|_| err(lineno, record, format!("cannot parse number {f:?}")))?;
        }
        let b = Box7::try_from(v).map_err(|e| err(lineno, record, e.to_string()))?;
        match out.last_mut() {
            Some(p) if p.tracklet_id == record => {
                if index != p.boxes.len() {
                    return Err(err(lineno, record, format!("frame index {index} out of order, expected {}", p.boxes.len())));
                }
                p.boxes.push(b);
            }
            _ => {
                if out.iter().any(|p| p.tracklet_id == record) {
                    return Err(err(lineno, record, "rows of this tracklet are not contiguous".into()));
                }
                if index != 0 {
                    return Err(err(lineno, record, format!("first frame index is {index}, expected 0")));
                }
                out.push(TrackPrediction {
                    tracklet_id: record.to_string(),
                    boxes: vec![b],
                });
            }
        }
    }
    if !saw_header {
        return Err(err(0, "header", "missing prediction file header".into()));
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<TrackPrediction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_file_roundtrip() {
        let b = |x: f64| Box7::new(x, 0.25, -1.0, 1.8, 4.2, 1.6, 0.1 * x).unwrap();
        let preds = vec![
            TrackPrediction {
                tracklet_id: "a".into(),
                boxes: vec![b(0.0), b(1.0 / 3.0)],
            },
            TrackPrediction {
                tracklet_id: "b".into(),
                boxes: vec![b(2.0)],
            },
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &preds).unwrap();
        assert_eq!(read_predictions(&buf[..], Path::new("p")).unwrap(), preds);
    }

    #[test]
    fn prediction_file_errors() {
        let text = "boxseq-predictions 1\na 0 0 0 0 1 1 1 0\na 2 0 0 0 1 1 1 0\n";
        assert!(matches!(read_predictions(text.as_bytes(), Path::new("p")), Err(Error::Parse { line: 3, .. })));
        assert!(read_predictions("a 0 0 0 0 1 1 1 0\n".as_bytes(), Path::new("p")).is_err());
    }

    #[test]
    fn step_before_init_is_a_state_error() {
        let stub = EchoHistory {
            n_frames: 3,
            points_per_frame: 8,
        };
        let cfg = SampleConfig {
            n_frames: 3,
            points_per_frame: 8,
            ..Default::default()
        };
        let mut t = Tracker::new(&stub, &cfg, 0).unwrap();
        assert!(matches!(t.step(vec![], Pose::identity()), Err(Error::State(_))));
    }
}
