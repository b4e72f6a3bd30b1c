//! One-pass evaluation: Success (IoU AUC) and Precision (center-distance AUC).
//!
//! Both scores average a per-threshold success rate over a closed uniform
//! grid, with strict comparisons: a frame counts at IoU threshold `tau` when
//! `iou > tau`, and at distance threshold `d` when `distance < d`. On the
//! default grids a perfect frame therefore scores `100·20/21` Success and
//! `100·40/41` Precision.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Tracklet;
use crate::error::{Error, Result};
use crate::geometry::{center_distance, iou3d, Box7};
use crate::tracker::TrackPrediction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Intervals of the IoU grid on `[0, 1]`.
    pub success_steps: usize,
    /// Upper end of the distance grid, meters.
    pub precision_max: f64,
    pub precision_steps: usize,
    /// Lower edges of the first-frame point-count buckets.
    pub buckets: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            success_steps: 20,
            precision_max: 2.0,
            precision_steps: 40,
            buckets: vec![0, 15, 50, 150],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.success_steps == 0 || self.precision_steps == 0 || !(self.precision_max > 0.0) {
            return Err(Error::Config("threshold grids need a positive step count and range".into()));
        }
        if self.buckets.is_empty() || self.buckets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("eval.buckets must be a nonempty increasing list".into()));
        }
        Ok(())
    }

    pub fn success_thresholds(&self) -> Vec<f64> {
        grid(1.0, self.success_steps)
    }

    pub fn precision_thresholds(&self) -> Vec<f64> {
        grid(self.precision_max, self.precision_steps)
    }
}

/// `steps + 1` points `k·max/steps`.
fn grid(max: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 * max / steps as f64).collect()
}

/// Fraction of `ious` strictly above each threshold.
pub fn success_curve(ious: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let n = ious.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| ious.iter().filter(|&&v| v > t).count() as f64 / n)
        .collect()
}

/// Fraction of `distances` strictly below each threshold.
pub fn precision_curve(distances: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let n = distances.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| distances.iter().filter(|&&v| v < t).count() as f64 / n)
        .collect()
}

fn auc(curve: &[f64]) -> f64 {
    100.0 * curve.iter().sum::<f64>() / curve.len() as f64
}

fn check_aligned(pred: &[Box7], gt: &[Box7]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::shape("prediction sequence", gt.len(), pred.len()));
    }
    Ok(())
}

pub fn success_score(pred: &[Box7], gt: &[Box7]) -> Result<f64> {
    check_aligned(pred, gt)?;
    let ious: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| iou3d(p, g)).collect();
    Ok(auc(&success_curve(&ious, &EvalConfig::default().success_thresholds())))
}

pub fn precision_score(pred: &[Box7], gt: &[Box7]) -> Result<f64> {
    check_aligned(pred, gt)?;
    let d: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| center_distance(p, g)).collect();
    Ok(auc(&precision_curve(&d, &EvalConfig::default().precision_thresholds())))
}

/// `sum(values·counts) / sum(counts)`.
pub fn weighted_mean(values: &[f64], counts: &[usize]) -> Result<f64> {
    if values.len() != counts.len() {
        return Err(Error::shape("weighted mean counts", values.len(), counts.len()));
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyReport);
    }
    Ok(values.iter().zip(counts).map(|(v, &c)| v * c as f64).sum::<f64>() / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackletScore {
    pub id: String,
    pub category: String,
    pub frames: usize,
    pub first_frame_points: usize,
    pub success: f64,
    pub precision: f64,
    /// Per-threshold success rates of this tracklet.
    pub success_curve: Vec<f64>,
    pub precision_curve: Vec<f64>,
}

pub fn score_tracklet(pred: &[Box7], tracklet: &Tracklet, cfg: &EvalConfig) -> Result<TrackletScore> {
    let gt: Vec<Box7> = tracklet.frames.iter().map(|f| f.gt_box).collect();
    check_aligned(pred, &gt)?;
    let ious: Vec<f64> = pred.iter().zip(&gt).map(|(p, g)| iou3d(p, g)).collect();
    let dist: Vec<f64> = pred.iter().zip(&gt).map(|(p, g)| center_distance(p, g)).collect();
    let sc = success_curve(&ious, &cfg.success_thresholds());
    let pc = precision_curve(&dist, &cfg.precision_thresholds());
    Ok(TrackletScore {
        id: tracklet.id.clone(),
        category: tracklet.category.clone(),
        frames: tracklet.len(),
        first_frame_points: tracklet.first_frame_points(),
        success: auc(&sc),
        precision: auc(&pc),
        success_curve: sc,
        precision_curve: pc,
    })
}

/// Scores predictions against ground truth, matching tracklets by id.
pub fn evaluate(predictions: &[TrackPrediction], tracklets: &[Tracklet], cfg: &EvalConfig) -> Result<Vec<TrackletScore>> {
    let by_id: BTreeMap<&str, &TrackPrediction> = predictions.iter().map(|p| (p.tracklet_id.as_str(), p)).collect();
    let mut missing = Vec::new();
    let mut short = Vec::new();
    for t in tracklets {
        match by_id.get(t.id.as_str()) {
            None => missing.push(t.id.clone()),
            Some(p) if p.boxes.len() != t.len() => {
                short.push(format!("{} ({} predicted, {} annotated)", t.id, p.boxes.len(), t.len()))
            }
            _ => {}
        }
    }
    let extra: Vec<&str> = predictions
        .iter()
        .map(|p| p.tracklet_id.as_str())
        .filter(|id| !tracklets.iter().any(|t| t.id == *id))
        .collect();
    if !missing.is_empty() || !short.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing predictions for {}", missing.join(", ")));
        }
        if !short.is_empty() {
            parts.push(format!("frame count mismatch for {}", short.join(", ")));
        }
        if !extra.is_empty() {
            parts.push(format!("unknown tracklets {}", extra.join(", ")));
        }
        return Err(Error::Alignment(parts.join("; ")));
    }
    tracklets
        .iter()
        .map(|t| score_tracklet(&by_id[t.id.as_str()].boxes, t, cfg))
        .collect()
}

/// Frame-weighted scores of a group of tracklets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub name: String,
    pub tracklets: usize,
    pub frames: usize,
    pub success: f64,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpeReport {
    pub overall: GroupScore,
    /// Sorted by category name.
    pub categories: Vec<GroupScore>,
    /// Nonempty sparsity buckets in increasing order.
    pub buckets: Vec<GroupScore>,
    /// Sorted by tracklet id.
    pub tracklets: Vec<TrackletScore>,
    pub success_thresholds: Vec<f64>,
    pub success_curve: Vec<f64>,
    pub precision_thresholds: Vec<f64>,
    pub precision_curve: Vec<f64>,
}

fn group(name: String, members: &[&TrackletScore]) -> GroupScore {
    let frames: usize = members.iter().map(|s| s.frames).sum();
    let w = |f: &dyn Fn(&TrackletScore) -> f64| members.iter().map(|s| f(s) * s.frames as f64).sum::<f64>() / frames as f64;
    GroupScore {
        name,
        tracklets: members.len(),
        frames,
        success: w(&|s| s.success),
        precision: w(&|s| s.precision),
    }
}

/// Label of the bucket holding `points`: bucket `k` covers
/// `(edges[k], edges[k+1]]`, the first one also includes `edges[0]`, the last
/// one is open-ended.
pub fn bucket_of(points: usize, edges: &[usize]) -> Option<(usize, String)> {
    if points < edges[0] {
        return None;
    }
    let k = edges
        .iter()
        .skip(1)
        .position(|&hi| points <= hi)
        .unwrap_or(edges.len() - 1);
    let label = match edges.get(k + 1) {
        Some(hi) => format!("{}-{}", edges[k], hi),
        None => format!("{}+", edges[k]),
    };
    Some((k, label))
}

/// Frame-weighted aggregation by category, overall and by sparsity bucket.
pub fn aggregate(scores: &[TrackletScore], cfg: &EvalConfig) -> Result<OpeReport> {
    if scores.is_empty() || scores.iter().all(|s| s.frames == 0) {
        return Err(Error::EmptyReport);
    }
    cfg.validate()?;
    let mut sorted: Vec<&TrackletScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id).then(a.category.cmp(&b.category)));

    let mut cats: BTreeMap<&str, Vec<&TrackletScore>> = BTreeMap::new();
    let mut buckets: BTreeMap<usize, (String, Vec<&TrackletScore>)> = BTreeMap::new();
    for s in &sorted {
        cats.entry(s.category.as_str()).or_default().push(s);
        if let Some((k, label)) = bucket_of(s.first_frame_points, &cfg.buckets) {
            buckets.entry(k).or_insert_with(|| (label, Vec::new())).1.push(s);
        }
    }
    let frames: usize = sorted.iter().map(|s| s.frames).sum();
    let pooled = |f: &dyn Fn(&TrackletScore) -> &Vec<f64>| -> Vec<f64> {
        let len = f(sorted[0]).len();
        (0..len)
            .map(|k| sorted.iter().map(|s| f(s)[k] * s.frames as f64).sum::<f64>() / frames as f64)
            .collect()
    };
    Ok(OpeReport {
        overall: group("all".into(), &sorted),
        categories: cats.into_iter().map(|(c, m)| group(c.to_string(), &m)).collect(),
        buckets: buckets.into_values().map(|(l, m)| group(l, &m)).collect(),
        success_thresholds: cfg.success_thresholds(),
        success_curve: pooled(&|s| &s.success_curve),
        precision_thresholds: cfg.precision_thresholds(),
        precision_curve: pooled(&|s| &s.precision_curve),
        tracklets: sorted.into_iter().cloned().collect(),
    })
}

pub const REPORT_FORMAT_VERSION: u32 = 1;
const REPORT_MAGIC: &str = "boxseq-report";
const CURVE_MAGIC: &str = "boxseq-curves";

/// Whitespace-separated table, one row per scope.
pub fn write_report<W: Write>(mut out: W, report: &OpeReport) -> std::io::Result<()> {
    writeln!(out, "{REPORT_MAGIC} {REPORT_FORMAT_VERSION}")?;
    writeln!(out, "# scope name tracklets frames success precision")?;
    let row = |out: &mut W, scope: &str, g: &GroupScore| {
        writeln!(
            out,
            "{scope} {} {} {} {} {}",
            g.name, g.tracklets, g.frames, g.success, g.precision
        )
    };
    row(&mut out, "overall", &report.overall)?;
    for g in &report.categories {
        row(&mut out, "category", g)?;
    }
    for g in &report.buckets {
        row(&mut out, "bucket", g)?;
    }
    writeln!(out, "# tracklet id category first_frame_points frames success precision")?;
    for t in &report.tracklets {
        writeln!(
            out,
            "tracklet {} {} {} {} {} {}",
            t.id, t.category, t.first_frame_points, t.frames, t.success, t.precision
        )?;
    }
    out.flush()
}

/// Per-threshold curve dump: `success <tau> <rate>` and `precision <d> <rate>` rows.
pub fn write_curves<W: Write>(mut out: W, report: &OpeReport) -> std::io::Result<()> {
    writeln!(out, "{CURVE_MAGIC} {REPORT_FORMAT_VERSION}")?;
    for (t, v) in report.success_thresholds.iter().zip(&report.success_curve) {
        writeln!(out, "success {t} {v}")?;
    }
    for (t, v) in report.precision_thresholds.iter().zip(&report.precision_curve) {
        writeln!(out, "precision {t} {v}")?;
    }
    out.flush()
}

/// Group rows of a report file: `(scope, score)` pairs in file order.
pub fn read_report_groups<R: BufRead>(reader: R, path: &Path) -> Result<Vec<(String, GroupScore)>> {
    let mut rows = Vec::new();
    let mut header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            record: line.split_whitespace().take(2).collect::<Vec<_>>().join(" "),
            message: m,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() || f[0].starts_with('#') {
            continue;
        }
        if !header {
            if f != [REPORT_MAGIC, &REPORT_FORMAT_VERSION.to_string()] {
                return Err(err(format!("expected `{REPORT_MAGIC} {REPORT_FORMAT_VERSION}` header")));
            }
            header = true;
            continue;
        }
        if f[0] == "tracklet" {
            continue;
        }
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad count {s:?}")));
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad score {s:?}")));
        rows.push((
            f[0].to_string(),
            GroupScore {
                name: f[1].to_string(),
                tracklets: int(f[2])?,
                frames: int(f[3])?,
                success: num(f[4])?,
                precision: num(f[5])?,
            },
        ));
    }
    if !header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            record: "header".into(),
            message: "empty report file".into(),
        });
    }
    Ok(rows)
}

/// `(success, precision)` curves from a curve dump, as `(threshold, rate)` points.
#[allow(clippy::type_complexity)]
pub fn read_curves<R: BufRead>(reader: R, path: &Path) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let mut success = Vec::new();
    let mut precision = Vec::new();
    let mut header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            record: line.clone(),
            message: m,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if !header {
            if f != [CURVE_MAGIC, &REPORT_FORMAT_VERSION.to_string()] {
                return Err(err(format!("expected `{CURVE_MAGIC} {REPORT_FORMAT_VERSION}` header")));
            }
            header = true;
            continue;
        }
        if f.len() != 3 {
            return Err(err("expected 3 fields".into()));
        }
        let t: f64 = f[1].parse().map_err(|_| err("bad threshold".into()))?;
        let v: f64 = f[2].parse().map_err(|_| err("bad rate".into()))?;
        match f[0] {
            "success" => success.push((t, v)),
            "precision" => precision.push((t, v)),
            other => return Err(err(format!("unknown curve {other:?}"))),
        }
    }
    if !header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            record: "header".into(),
            message: "empty curve file".into(),
        });
    }
    Ok((success, precision))
}

pub fn save_report(dir: &Path, report: &OpeReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rp = dir.join("report.txt");
    let f = File::create(&rp).map_err(|e| Error::io(&rp, e))?;
    write_report(BufWriter::new(f), report).map_err(|e| Error::io(&rp, e))?;
    let cp = dir.join("curves.txt");
    let f = File::create(&cp).map_err(|e| Error::io(&cp, e))?;
    write_curves(BufWriter::new(f), report).map_err(|e| Error::io(&cp, e))
}

pub fn load_report_groups(path: &Path) -> Result<Vec<(String, GroupScore)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_report_groups(BufReader::new(f), path)
}

#[allow(clippy::type_complexity)]
pub fn load_curves(path: &Path) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_curves(BufReader::new(f), path)
}
