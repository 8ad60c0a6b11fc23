//! Line charts written as PNG files: TJE against frame offset per method,
//! and the sweep objective against the feedback gain.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use image::RgbImage;
use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::SweepResult;
use crate::io::report::{ReportRow, Value, AGGREGATE_ID};

pub const FONT_ENV: &str = "CLCGEN_FONT";

const SIZE: (u32, u32) = (720, 480);
const FONT_CANDIDATES: [&str; 4] = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/Library/Fonts/Arial.ttf",
];

static FONT: OnceLock<bool> = OnceLock::new();

/// Registers a text font once per process. Without one, charts are drawn
/// without captions, tick labels or legends.
fn ensure_font(explicit: Option<&Path>) -> bool {
    *FONT.get_or_init(|| {
        let env = std::env::var_os(FONT_ENV).map(PathBuf::from);
        let candidates = explicit
            .map(Path::to_path_buf)
            .into_iter()
            .chain(env)
            .chain(FONT_CANDIDATES.iter().map(PathBuf::from));
        for p in candidates {
            if let Ok(bytes) = std::fs::read(&p) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        false
    })
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::io("drawing chart", std::io::Error::other(format!("{e:?}")))
}

pub fn line_chart(
    out: &Path,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    series: &[Series],
    font: Option<&Path>,
) -> Result<()> {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::Validation("nothing to plot".into()));
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let y1 = if y1 > 0.0 { y1 * 1.1 } else { 1.0 };
    let labels = ensure_font(font);

    let (w, h) = SIZE;
    let mut buf = vec![0u8; (w * h * 3) as usize];
    {
        let root = BitMapBackend::with_buffer(&mut buf, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let mut builder = ChartBuilder::on(&root);
        builder.margin(16);
        if labels {
            builder
                .caption(title, ("sans-serif", 22))
                .x_label_area_size(40)
                .y_label_area_size(56);
        }
        let mut chart = builder
            .build_cartesian_2d(x0..x1, 0.0..y1)
            .map_err(draw_err)?;
        let mut mesh = chart.configure_mesh();
        if labels {
            mesh.x_desc(x_desc).y_desc(y_desc);
        } else {
            mesh.x_labels(0).y_labels(0);
        }
        mesh.draw().map_err(draw_err)?;
        for (i, s) in series.iter().enumerate() {
            let color = Palette99::pick(i).stroke_width(2);
            let line = chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color))
                .map_err(draw_err)?;
            if labels {
                line.label(s.name.clone()).legend(move |(x, y)| {
                    PathElement::new(vec![(x, y), (x + 18, y)], Palette99::pick(i).stroke_width(2))
                });
            }
            chart
                .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, Palette99::pick(i).filled())))
                .map_err(draw_err)?;
        }
        if labels {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(draw_err)?;
        }
        root.present().map_err(draw_err)?;
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    RgbImage::from_raw(w, h, buf)
        .expect("buffer matches chart size")
        .save(out)
        .map_err(|e| Error::io(format!("writing {}", out.display()), std::io::Error::other(e)))
}

/// Aggregate TJE per method as curves over the frame offset.
pub fn tje_series(rows: &[ReportRow]) -> Vec<Series> {
    let mut methods: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .filter_map(|m| {
            let mut points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.video_id == AGGREGATE_ID && r.method == m && r.metric == "tje")
                .filter_map(|r| match (r.delta, r.value) {
                    (Some(d), Value::Number(v)) => Some((d as f64, v)),
                    _ => None,
                })
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            (!points.is_empty()).then_some(Series { name: m, points })
        })
        .collect()
}

pub fn plot_tje(rows: &[ReportRow], out: &Path, font: Option<&Path>) -> Result<()> {
    let series = tje_series(rows);
    line_chart(out, "Temporal jitter error", "frame offset", "TJE", &series, font)
}

pub fn plot_sweep(sweep: &SweepResult, out: &Path, font: Option<&Path>) -> Result<()> {
    let series = [Series {
        name: "mean TJE".into(),
        points: sweep.rows.iter().map(|r| (r.beta, r.objective)).collect(),
    }];
    line_chart(out, "Feedback gain sweep", "beta", "objective", &series, font)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_png_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let s = [Series {
            name: "clc".into(),
            points: vec![(1.0, 0.5), (2.0, 0.9), (4.0, 1.4), (8.0, 2.0)],
        }];
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        line_chart(&a, "t", "x", "y", &s, None).unwrap();
        line_chart(&b, "t", "x", "y", &s, None).unwrap();
        let bytes = std::fs::read(&a).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
        assert_eq!(bytes, std::fs::read(&b).unwrap());
        assert!(line_chart(&a, "t", "x", "y", &[], None).is_err());
    }
}
