//! Static SVG figures: OPE curves, sparsity-bucket bars and loss curves.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};

const SIZE: (u32, u32) = (640, 480);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Plot(format!("{}: {e}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// One labelled polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart of several series with shared axes.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Plot(format!("{}: non-finite point ({x}, {y})", path.display())));
        }
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::Plot(format!("{}: nothing to plot", path.display())));
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    ensure_parent(path)?;
    let e = plot_err(path);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&e)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(&e)?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(&e)?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(&e)?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&e)?;
    root.present().map_err(&e)?;
    Ok(())
}

/// Success curve: fraction of frames with IoU above each threshold.
pub fn success_plot(path: &Path, series: &[Series]) -> Result<()> {
    line_chart(path, "Success", "overlap threshold", "success rate (%)", series)
}

/// Precision curve: fraction of frames with center error below each threshold.
pub fn precision_plot(path: &Path, series: &[Series]) -> Result<()> {
    line_chart(path, "Precision", "center error threshold (m)", "precision (%)", series)
}

/// Per-epoch training (and optionally validation) loss.
pub fn loss_plot(path: &Path, train: &[f64], val: Option<&[f64]>) -> Result<()> {
    let to_pts = |v: &[f64]| v.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).collect();
    let mut series = vec![Series { label: "train".into(), points: to_pts(train) }];
    if let Some(v) = val {
        series.push(Series { label: "val".into(), points: to_pts(v) });
    }
    line_chart(path, "Loss", "epoch", "loss", &series)
}

/// Grouped bars of Success and Precision per sparsity bucket.
pub fn bucket_plot(path: &Path, buckets: &[(String, f64, f64)]) -> Result<()> {
    if buckets.is_empty() {
        return Err(Error::Plot(format!("{}: no buckets to plot", path.display())));
    }
    ensure_parent(path)?;
    let e = plot_err(path);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&e)?;
    let n = buckets.len();
    let mut chart = ChartBuilder::on(&root)
        .caption("Sparsity buckets", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0f64..n as f64, 0f64..100f64)
        .map_err(&e)?;
    let labels: Vec<String> = buckets.iter().map(|b| b.0.clone()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n * 2 + 1)
        .x_label_formatter(&|x| {
            let k = (x - 0.5).round();
            if (x - 0.5 - k).abs() < 1e-6 && k >= 0.0 && (k as usize) < labels.len() {
                labels[k as usize].clone()
            } else {
                String::new()
            }
        })
        .x_desc("first-frame target points")
        .y_desc("score (%)")
        .draw()
        .map_err(&e)?;
    for (j, (label, color)) in [("Success", PALETTE[0]), ("Precision", PALETTE[1])].into_iter().enumerate() {
        chart
            .draw_series(buckets.iter().enumerate().map(|(i, b)| {
                let v = if j == 0 { b.1 } else { b.2 };
                let left = i as f64 + 0.1 + 0.4 * j as f64;
                Rectangle::new([(left, 0.0), (left + 0.4, v.clamp(0.0, 100.0))], color.filled())
            }))
            .map_err(&e)?
            .label(label)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&e)?;
    root.present().map_err(&e)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_svg_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = Series { label: "a".into(), points: vec![(0.0, 100.0), (0.5, 60.0), (1.0, 0.0)] };
        let p = dir.path().join("sub/success.svg");
        success_plot(&p, &[s.clone()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<svg"));
        loss_plot(&dir.path().join("loss.svg"), &[3.0, 2.0, 1.0], Some(&[3.5, 2.5, 2.0])).unwrap();
        bucket_plot(&dir.path().join("b.svg"), &[("0-15".into(), 40.0, 50.0), ("15-50".into(), 70.0, 80.0)]).unwrap();
        assert!(dir.path().join("b.svg").exists());
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(line_chart(&dir.path().join("x.svg"), "t", "x", "y", &[]), Err(Error::Plot(_))));
        let bad = Series { label: "nan".into(), points: vec![(0.0, f64::NAN)] };
        assert!(matches!(precision_plot(&dir.path().join("y.svg"), &[bad]), Err(Error::Plot(_))));
        assert!(bucket_plot(&dir.path().join("z.svg"), &[]).is_err());
    }
}
