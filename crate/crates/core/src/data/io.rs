//! Plain-text tracklet files.
//!
//! ```text
//! boxseq-tracklets 1
//! tracklets <count>
//! tracklet <id> <category> <frames>
//! frame <index> <points>
//! pose <r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2>
//! box <x y z w l h theta>
//! <x y z>            (one line per point)
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Frame, Tracklet};
use crate::error::{Error, Result};
use crate::geometry::{Box7, Pose};

pub const TRACKLET_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "boxseq-tracklets";

pub fn write_tracklets<W: Write>(mut out: W, tracklets: &[Tracklet]) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} {TRACKLET_FORMAT_VERSION}")?;
    writeln!(out, "tracklets {}", tracklets.len())?;
    for t in tracklets {
        writeln!(out, "tracklet {} {} {}", t.id, t.category, t.frames.len())?;
        for (k, f) in t.frames.iter().enumerate() {
            writeln!(out, "frame {k} {}", f.points.len())?;
            write!(out, "pose")?;
            for v in f.pose.to_matrix() {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
            write!(out, "box")?;
            for v in f.gt_box.to_array() {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
            for p in &f.points {
                writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
            }
        }
    }
    out.flush()
}

pub fn save_tracklets(path: &Path, tracklets: &[Tracklet]) -> Result<()> {
    for t in tracklets {
        t.validate()?;
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tracklets(BufWriter::new(file), tracklets).map_err(|e| Error::io(path, e))
}

pub fn load_tracklets(path: &Path) -> Result<Vec<Tracklet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tracklets(BufReader::new(file), path)
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    path: PathBuf,
    line: usize,
    record: String,
}

impl<R: BufRead> Lines<R> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            record: self.record.clone(),
            message: message.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(self.err(format!("unexpected end of file, expected {what}"))),
                Some(Err(e)) => return Err(Error::io(self.path.clone(), e)),
                Some(Ok(l)) if l.trim().is_empty() => continue,
                Some(Ok(l)) => return Ok(l),
            }
        }
    }

    /// Reads a line starting with `keyword` and returns the remaining fields.
    fn keyed(&mut self, keyword: &str, fields: usize) -> Result<Vec<String>> {
        let line = self.next_line(keyword)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}` line, found {line:?}")));
        }
        let rest: Vec<String> = parts.map(str::to_string).collect();
        if rest.len() != fields {
            return Err(self.err(format!("`{keyword}` expects {fields} fields, found {}", rest.len())));
        }
        Ok(rest)
    }

    fn num<T: FromStr>(&self, field: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.err(format!("cannot parse number {field:?}")))
    }

    fn floats<const K: usize>(&self, fields: &[String]) -> Result<[f64; K]> {
        let mut out = [0.0f64; K];
        for (o, f) in out.iter_mut().zip(fields) {
            *o = self.num(f)?;
            if !o.is_finite() {
                return Err(self.err(format!("non-finite value {f:?}")));
            }
        }
        Ok(out)
    }
}

pub fn read_tracklets<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Tracklet>> {
    let mut lines = Lines {
        inner: reader.lines(),
        path: path.to_path_buf(),
        line: 0,
        record: "header".into(),
    };
    let header = lines.keyed(MAGIC, 1)?;
    let version: u32 = lines.num(&header[0])?;
    if version != TRACKLET_FORMAT_VERSION {
        return Err(lines.err(format!("unsupported format version {version}")));
    }
    let count: usize = {
        let f = lines.keyed("tracklets", 1)?;
        lines.num(&f[0])?
    };
    let mut tracklets = Vec::with_capacity(count);
    for t in 0..count {
        lines.record = format!("tracklet #{t}");
        let f = lines.keyed("tracklet", 3)?;
        let id = f[0].clone();
        let category = f[1].clone();
        let n_frames: usize = lines.num(&f[2])?;
        if n_frames == 0 {
            return Err(lines.err("tracklet has no frames"));
        }
        lines.record = format!("tracklet {id}");
        let mut frames = Vec::with_capacity(n_frames);
        for k in 0..n_frames {
            lines.record = format!("tracklet {id} frame {k}");
            let f = lines.keyed("frame", 2)?;
            let index: usize = lines.num(&f[0])?;
            if index != k {
                return Err(lines.err(format!("frame index {index} out of order, expected {k}")));
            }
            let n_points: usize = lines.num(&f[1])?;
            let pose_fields = lines.keyed("pose", 12)?;
            let pose = Pose::from_matrix(lines.floats::<12>(&pose_fields)?).map_err(|e| lines.err(e.to_string()))?;
            let box_fields = lines.keyed("box", 7)?;
            let gt_box = Box7::try_from(lines.floats::<7>(&box_fields)?).map_err(|e| lines.err(e.to_string()))?;
            let mut points = Vec::with_capacity(n_points);
            for _ in 0..n_points {
                let line = lines.next_line("a point")?;
                let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                if fields.len() != 3 {
                    return Err(lines.err(format!("point line needs 3 values, found {line:?}")));
                }
                points.push(lines.floats::<3>(&fields)?);
            }
            frames.push(Frame { points, pose, gt_box });
        }
        tracklets.push(Tracklet { id, category, frames });
    }
    lines.record = "trailer".into();
    if let Ok(extra) = lines.next_line("end of file") {
        return Err(lines.err(format!("unexpected trailing content {extra:?}")));
    }
    Ok(tracklets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, SyntheticSpec};

    fn roundtrip(ts: &[Tracklet]) -> Result<Vec<Tracklet>> {
        let mut buf = Vec::new();
        write_tracklets(&mut buf, ts).unwrap();
        read_tracklets(&buf[..], Path::new("mem"))
    }

    #[test]
    fn roundtrip_is_lossless() {
        let spec = SyntheticSpec {
            frames: 3,
            ..Default::default()
        };
        let ts = generate_dataset(&spec, 3, 5, "rt").unwrap();
        assert_eq!(roundtrip(&ts).unwrap(), ts);
        assert_eq!(roundtrip(&[]).unwrap(), vec![]);
    }

    #[test]
    fn truncated_file_reports_location() {
        let spec = SyntheticSpec {
            frames: 2,
            ..Default::default()
        };
        let ts = generate_dataset(&spec, 1, 1, "tr").unwrap();
        let mut buf = Vec::new();
        write_tracklets(&mut buf, &ts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        match read_tracklets(cut.as_bytes(), Path::new("cut.txt")) {
            Err(Error::Parse { line, record, .. }) => {
                assert_eq!(line, 21);
                assert!(record.contains("tr0000"), "{record}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_numbers_are_rejected() {
        let text = "boxseq-tracklets 1\ntracklets 1\ntracklet a Car 1\nframe 0 0\npose 1 0 0 0 0 1 0 0 0 0 1 0\nbox 0 0 0 1 1 x 0\n";
        let err = read_tracklets(text.as_bytes(), Path::new("m")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");
        let bad_version = "boxseq-tracklets 9\ntracklets 0\n";
        assert!(read_tracklets(bad_version.as_bytes(), Path::new("v")).is_err());
    }
}
