//! PNG figures drawn directly into RGB buffers: loss curves, the loss-weight
//! schedule, per-class Dice bars and label overlays.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::checkpoint::Checkpoint;
use super::eval::predict_labels;
use super::train::{LogRecord, RunRecord};
use crate::data::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::metrics::DiceReport;
use crate::types::{ImageTensor, LabelMap};

pub const LOSS_CURVES_FILE: &str = "loss_curves.png";
pub const SCHEDULE_FILE: &str = "schedule.png";
pub const DICE_BARS_FILE: &str = "dice_bars.png";
pub const OVERLAYS_FILE: &str = "overlays.png";

pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 400;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);

pub const LAMBDA1_COLOR: Rgb<u8> = Rgb([31, 119, 180]);
pub const LAMBDA2_COLOR: Rgb<u8> = Rgb([214, 39, 40]);

/// One colour per run.
pub const SERIES_COLORS: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

/// Overlay tint per class; class 0 (benign) is left untinted. Grades 3, 4
/// and 5 are red, green and blue.
pub const CLASS_COLORS: [Option<Rgb<u8>>; 6] = [
    None,
    Some(Rgb([255, 0, 0])),
    Some(Rgb([0, 255, 0])),
    Some(Rgb([0, 0, 255])),
    Some(Rgb([255, 255, 0])),
    Some(Rgb([0, 255, 255])),
];

pub fn series_color(i: usize) -> Rgb<u8> {
    SERIES_COLORS[i % SERIES_COLORS.len()]
}

// 3x5 bitmap glyphs, rows top to bottom.
fn glyph(c: char) -> [&'static str; 5] {
    match c.to_ascii_uppercase() {
        '0' => ["###", "#.#", "#.#", "#.#", "###"],
        '1' => [".#.", "##.", ".#.", ".#.", "###"],
        '2' => ["###", "..#", "###", "#..", "###"],
        '3' => ["###", "..#", ".##", "..#", "###"],
        '4' => ["#.#", "#.#", "###", "..#", "..#"],
        '5' => ["###", "#..", "###", "..#", "###"],
        '6' => ["###", "#..", "###", "#.#", "###"],
        '7' => ["###", "..#", ".#.", ".#.", ".#."],
        '8' => ["###", "#.#", "###", "#.#", "###"],
        '9' => ["###", "#.#", "###", "..#", "###"],
        'A' => [".#.", "#.#", "###", "#.#", "#.#"],
        'B' => ["##.", "#.#", "##.", "#.#", "##."],
        'C' => [".##", "#..", "#..", "#..", ".##"],
        'D' => ["##.", "#.#", "#.#", "#.#", "##."],
        'E' => ["###", "#..", "##.", "#..", "###"],
        'F' => ["###", "#..", "##.", "#..", "#.."],
        'G' => [".##", "#..", "#.#", "#.#", ".##"],
        'H' => ["#.#", "#.#", "###", "#.#", "#.#"],
        'I' => ["###", ".#.", ".#.", ".#.", "###"],
        'J' => ["..#", "..#", "..#", "#.#", ".#."],
        'K' => ["#.#", "#.#", "##.", "#.#", "#.#"],
        'L' => ["#..", "#..", "#..", "#..", "###"],
        'M' => ["#.#", "###", "###", "#.#", "#.#"],
        'N' => ["##.", "#.#", "#.#", "#.#", "#.#"],
        'O' => [".#.", "#.#", "#.#", "#.#", ".#."],
        'P' => ["##.", "#.#", "##.", "#..", "#.."],
        'Q' => [".#.", "#.#", "#.#", "##.", ".##"],
        'R' => ["##.", "#.#", "##.", "#.#", "#.#"],
        'S' => [".##", "#..", ".#.", "..#", "##."],
        'T' => ["###", ".#.", ".#.", ".#.", ".#."],
        'U' => ["#.#", "#.#", "#.#", "#.#", "###"],
        'V' => ["#.#", "#.#", "#.#", "#.#", ".#."],
        'W' => ["#.#", "#.#", "###", "###", "#.#"],
        'X' => ["#.#", "#.#", ".#.", "#.#", "#.#"],
        'Y' => ["#.#", "#.#", ".#.", ".#.", ".#."],
        'Z' => ["###", "..#", ".#.", "#..", "###"],
        '.' => ["...", "...", "...", "...", ".#."],
        '-' => ["...", "...", "###", "...", "..."],
        '_' => ["...", "...", "...", "...", "###"],
        ':' => ["...", ".#.", "...", ".#.", "..."],
        '=' => ["...", "###", "...", "###", "..."],
        '/' => ["..#", "..#", ".#.", "#..", "#.."],
        '(' => [".#.", "#..", "#..", "#..", ".#."],
        ')' => [".#.", "..#", "..#", "..#", ".#."],
        '+' => ["...", ".#.", "###", ".#.", "..."],
        _ => ["...", "...", "...", "...", "..."],
    }
}

/// An RGB drawing surface with clipped primitives.
pub struct Canvas {
    pub img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            img: RgbImage::from_pixel(width, height, WHITE),
        }
    }

    pub fn set(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.set(x, y, c);
            }
        }
    }

    /// Bresenham line.
    pub fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.set(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    pub fn thick_line(&mut self, a: (i64, i64), b: (i64, i64), c: Rgb<u8>) {
        self.line(a, b, c);
        self.line((a.0, a.1 + 1), (b.0, b.1 + 1), c);
    }

    pub fn text(&mut self, x: i64, y: i64, s: &str, scale: i64, c: Rgb<u8>) {
        for (i, ch) in s.chars().enumerate() {
            let ox = x + i as i64 * 4 * scale;
            for (row, bits) in glyph(ch).iter().enumerate() {
                for (col, b) in bits.bytes().enumerate() {
                    if b == b'#' {
                        let (px, py) = (ox + col as i64 * scale, y + row as i64 * scale);
                        self.fill_rect(px, py, px + scale - 1, py + scale - 1, c);
                    }
                }
            }
        }
    }

    pub fn text_width(s: &str, scale: i64) -> i64 {
        (s.chars().count() as i64 * 4 - 1).max(0) * scale
    }
}

/// Maps data coordinates into a pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub left: i64,
    pub top: i64,
    pub right: i64,
    pub bottom: i64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Frame {
    pub fn standard(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        Self {
            left: 70,
            top: 40,
            right: WIDTH as i64 - 20,
            bottom: HEIGHT as i64 - 50,
            x_range: widen(x_range),
            y_range: widen(y_range),
        }
    }

    pub fn px(&self, x: f64, y: f64) -> (i64, i64) {
        let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (
            self.left + (fx * (self.right - self.left) as f64).round() as i64,
            self.bottom - (fy * (self.bottom - self.top) as f64).round() as i64,
        )
    }

    fn draw_axes(&self, canvas: &mut Canvas, title: &str, x_label: &str, x_ticks: bool) {
        for i in 0..=4 {
            let v = self.y_range.0 + (self.y_range.1 - self.y_range.0) * i as f64 / 4.0;
            let (_, y) = self.px(self.x_range.0, v);
            canvas.line((self.left, y), (self.right, y), GRID);
            let label = format_tick(v);
            canvas.text(
                self.left - 8 - Canvas::text_width(&label, 2),
                y - 5,
                &label,
                2,
                BLACK,
            );
        }
        if x_ticks {
            for i in 0..=4 {
                let v = self.x_range.0 + (self.x_range.1 - self.x_range.0) * i as f64 / 4.0;
                let (x, _) = self.px(v, self.y_range.0);
                canvas.line((x, self.bottom), (x, self.bottom + 4), BLACK);
                let label = format_tick(v);
                canvas.text(
                    x - Canvas::text_width(&label, 2) / 2,
                    self.bottom + 10,
                    &label,
                    2,
                    BLACK,
                );
            }
        }
        canvas.line((self.left, self.top), (self.left, self.bottom), BLACK);
        canvas.line((self.left, self.bottom), (self.right, self.bottom), BLACK);
        canvas.text(self.left, 12, title, 2, BLACK);
        let w = Canvas::text_width(x_label, 2);
        canvas.text(
            (self.left + self.right - w) / 2,
            self.bottom + 30,
            x_label,
            2,
            BLACK,
        );
    }
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 100.0 || (v.fract() == 0.0 && v.abs() >= 1.0) {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(canvas: &mut Canvas, frame: &Frame, entries: &[(String, Rgb<u8>)]) {
    let mut y = frame.top + 6;
    for (name, c) in entries {
        let w = Canvas::text_width(name, 2);
        let x = frame.right - w - 6;
        canvas.fill_rect(x - 18, y + 1, x - 6, y + 9, *c);
        canvas.text(x, y, name, 2, BLACK);
        y += 16;
    }
}

/// Trailing moving average over at most `window` values.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            sum += v;
            if i >= window {
                sum -= values[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}

fn require_runs<T>(runs: &[T]) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::Dataset("nothing to plot".into()));
    }
    Ok(())
}

/// Total training loss per run, raw (faint) and smoothed over 50 iterations.
pub fn loss_curves(runs: &[(&str, &[LogRecord])]) -> Result<RgbImage> {
    require_runs(runs)?;
    let smoothed: Vec<Vec<f64>> = runs
        .iter()
        .map(|(_, log)| moving_average(&log.iter().map(|r| r.loss.total).collect::<Vec<_>>(), 50))
        .collect();
    let x_max = runs.iter().map(|(_, l)| l.len()).max().unwrap_or(1).max(1) as f64;
    let y_max = runs
        .iter()
        .flat_map(|(_, l)| l.iter().map(|r| r.loss.total))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let frame = Frame::standard(
        (0.0, x_max),
        (0.0, if y_max > 0.0 { y_max * 1.05 } else { 1.0 }),
    );
    let mut canvas = Canvas::new(WIDTH, HEIGHT);
    frame.draw_axes(&mut canvas, "TRAINING LOSS", "ITERATION", true);
    for (i, ((_, log), smooth)) in runs.iter().zip(&smoothed).enumerate() {
        let c = series_color(i);
        let faint = Rgb(c.0.map(|v| (v as u16 + 2 * 255).div_euclid(3) as u8));
        draw_series(
            &mut canvas,
            &frame,
            log.iter().map(|r| (r.iter as f64, r.loss.total)),
            faint,
        );
        draw_series_thick(
            &mut canvas,
            &frame,
            log.iter().zip(smooth).map(|(r, s)| (r.iter as f64, *s)),
            c,
        );
    }
    let entries: Vec<_> = runs
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.to_string(), series_color(i)))
        .collect();
    legend(&mut canvas, &frame, &entries);
    Ok(canvas.img)
}

fn draw_series(
    canvas: &mut Canvas,
    frame: &Frame,
    pts: impl Iterator<Item = (f64, f64)>,
    c: Rgb<u8>,
) {
    let mut prev: Option<(i64, i64)> = None;
    for (x, y) in pts.filter(|(_, y)| y.is_finite()) {
        let p = frame.px(x, y);
        match prev {
            Some(q) => canvas.line(q, p, c),
            None => canvas.set(p.0, p.1, c),
        }
        prev = Some(p);
    }
}

fn draw_series_thick(
    canvas: &mut Canvas,
    frame: &Frame,
    pts: impl Iterator<Item = (f64, f64)>,
    c: Rgb<u8>,
) {
    let mut prev: Option<(i64, i64)> = None;
    for (x, y) in pts.filter(|(_, y)| y.is_finite()) {
        let p = frame.px(x, y);
        if let Some(q) = prev {
            canvas.thick_line(q, p, c);
        }
        prev = Some(p);
    }
}

/// The frame used by [`schedule_plot`] for a log of `len` iterations.
pub fn schedule_frame(len: usize) -> Frame {
    Frame::standard((0.0, len.max(1) as f64), (0.0, 1.0))
}

/// λ1 and λ2 per iteration, taken from the first run's log.
pub fn schedule_plot(runs: &[(&str, &[LogRecord])]) -> Result<RgbImage> {
    require_runs(runs)?;
    let log = runs[0].1;
    let frame = schedule_frame(log.len());
    let mut canvas = Canvas::new(WIDTH, HEIGHT);
    frame.draw_axes(&mut canvas, "LOSS WEIGHTS", "ITERATION", true);
    draw_series_thick(
        &mut canvas,
        &frame,
        log.iter().map(|r| (r.iter as f64, r.loss.lambda2)),
        LAMBDA2_COLOR,
    );
    draw_series_thick(
        &mut canvas,
        &frame,
        log.iter().map(|r| (r.iter as f64, r.loss.lambda1)),
        LAMBDA1_COLOR,
    );
    legend(
        &mut canvas,
        &Frame {
            top: frame.top + 40,
            ..frame
        },
        &[
            ("LAMBDA1".into(), LAMBDA1_COLOR),
            ("LAMBDA2".into(), LAMBDA2_COLOR),
        ],
    );
    Ok(canvas.img)
}

/// Pixel extent of one bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bar {
    pub x0: i64,
    pub x1: i64,
}

/// Bars grouped by class: `layout[k][r]` is run `r`'s bar for class `k`.
/// Bars of a group are adjacent; groups are separated by a gap.
pub fn bar_layout(frame: &Frame, num_classes: usize, num_runs: usize) -> Vec<Vec<Bar>> {
    let group_w = (frame.right - frame.left) as f64 / num_classes.max(1) as f64;
    let gap = (group_w * 0.2).max(2.0);
    let bar_w = ((group_w - gap) / num_runs.max(1) as f64).floor().max(1.0) as i64;
    (0..num_classes)
        .map(|k| {
            let start = frame.left + (k as f64 * group_w + gap / 2.0).round() as i64;
            (0..num_runs)
                .map(|r| Bar {
                    x0: start + r as i64 * bar_w,
                    x1: start + (r as i64 + 1) * bar_w - 1,
                })
                .collect()
        })
        .collect()
}

pub fn dice_bars_frame() -> Frame {
    Frame::standard((0.0, 1.0), (0.0, 1.0))
}

/// Per-class Dice, one coloured bar per run within each class group.
pub fn dice_bars(reports: &[(&str, &DiceReport)]) -> Result<RgbImage> {
    require_runs(reports)?;
    let k = reports
        .iter()
        .map(|(_, r)| r.per_class.len())
        .max()
        .unwrap_or(0);
    let frame = dice_bars_frame();
    let mut canvas = Canvas::new(WIDTH, HEIGHT);
    frame.draw_axes(&mut canvas, "DICE PER CLASS", "CLASS", false);
    let layout = bar_layout(&frame, k, reports.len());
    for (class, bars) in layout.iter().enumerate() {
        for (r, bar) in bars.iter().enumerate() {
            if let Some(Some(d)) = reports[r].1.per_class.get(class) {
                let (_, y) = frame.px(0.0, *d);
                canvas.fill_rect(bar.x0, y, bar.x1, frame.bottom - 1, series_color(r));
            }
        }
        let mid = (bars.first().map_or(0, |b| b.x0) + bars.last().map_or(0, |b| b.x1)) / 2;
        let label = class.to_string();
        canvas.text(
            mid - Canvas::text_width(&label, 2) / 2,
            frame.bottom + 10,
            &label,
            2,
            BLACK,
        );
    }
    let entries: Vec<_> = reports
        .iter()
        .enumerate()
        .map(|(i, (n, r))| (format!("{n} {:.3}", r.mean), series_color(i)))
        .collect();
    legend(&mut canvas, &frame, &entries);
    Ok(canvas.img)
}

/// Blend class colours over an image at `alpha`; class 0 shows the image.
pub fn overlay_labels(image: &ImageTensor, labels: &LabelMap, alpha: f64) -> RgbImage {
    let mut out = image.to_rgb8();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let k = usize::from(labels.get(y as usize, x as usize));
        if let Some(Some(c)) = CLASS_COLORS.get(k) {
            for i in 0..3 {
                px.0[i] = ((1.0 - alpha) * px.0[i] as f64 + alpha * c.0[i] as f64).round() as u8;
            }
        }
    }
    out
}

/// One overlay row: the image, its reference labels, and one prediction per
/// run.
#[derive(Debug, Clone)]
pub struct OverlayRow {
    pub image: ImageTensor,
    pub reference: LabelMap,
    pub predictions: Vec<LabelMap>,
}

/// Grid of rows `[image | reference | prediction...]`.
pub fn overlays(rows: &[OverlayRow]) -> Result<RgbImage> {
    require_runs(rows)?;
    let cols = 2 + rows.iter().map(|r| r.predictions.len()).max().unwrap_or(0);
    let cell_w = rows.iter().map(|r| r.image.width()).max().unwrap_or(1) as u32;
    let cell_h = rows.iter().map(|r| r.image.height()).max().unwrap_or(1) as u32;
    let scale = (192 / cell_w.max(cell_h)).max(1);
    let pad = 8;
    let (cw, ch) = (cell_w * scale, cell_h * scale);
    let width = pad + cols as u32 * (cw + pad);
    let height = pad + rows.len() as u32 * (ch + pad);
    let mut canvas = Canvas::new(width, height);
    for (r, row) in rows.iter().enumerate() {
        let mut cells = vec![
            row.image.to_rgb8(),
            overlay_labels(&row.image, &row.reference, 0.45),
        ];
        cells.extend(
            row.predictions
                .iter()
                .map(|p| overlay_labels(&row.image, p, 0.45)),
        );
        for (c, cell) in cells.iter().enumerate() {
            let ox = pad + c as u32 * (cw + pad);
            let oy = pad + r as u32 * (ch + pad);
            for (x, y, px) in cell.enumerate_pixels() {
                for dy in 0..scale {
                    for dx in 0..scale {
                        canvas
                            .img
                            .put_pixel(ox + x * scale + dx, oy + y * scale + dy, *px);
                    }
                }
            }
        }
    }
    Ok(canvas.img)
}

/// A finished run as seen by the plotting code.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub name: String,
    pub record: RunRecord,
}

/// Writes the four figures into `out` and returns their paths.
pub fn plot_runs(runs: &[RunArtifacts], rows: &[OverlayRow], out: &Path) -> Result<Vec<PathBuf>> {
    require_runs(runs)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let logs: Vec<(&str, &[LogRecord])> = runs
        .iter()
        .map(|r| (r.name.as_str(), &r.record.log[..]))
        .collect();
    let reports: Vec<(&str, &DiceReport)> = runs
        .iter()
        .map(|r| (r.name.as_str(), &r.record.final_test))
        .collect();
    let figures = [
        (LOSS_CURVES_FILE, loss_curves(&logs)?),
        (SCHEDULE_FILE, schedule_plot(&logs)?),
        (DICE_BARS_FILE, dice_bars(&reports)?),
        (OVERLAYS_FILE, overlays(rows)?),
    ];
    let mut paths = Vec::with_capacity(figures.len());
    for (name, img) in figures {
        let path = out.join(name);
        crate::data::io::write_rgb(&img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Overlay rows for the first `limit` test samples, one prediction per run
/// from its best checkpoint.
pub fn overlay_rows(
    data: &Dataset,
    checkpoints: &[Checkpoint],
    limit: usize,
) -> Result<Vec<OverlayRow>> {
    let samples: Vec<Sample> = data
        .split(Split::Test)
        .iter()
        .take(limit)
        .cloned()
        .collect();
    let mut per_run = Vec::with_capacity(checkpoints.len());
    for ckpt in checkpoints {
        per_run.push(predict_labels(&ckpt.seg_net()?, &samples)?);
    }
    Ok(samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| OverlayRow {
            predictions: per_run.iter().map(|p| p[i].clone()).collect(),
            image: s.image,
            reference: s.reference,
        })
        .collect())
}

/// Plot training output directories. Overlays use the first run's dataset
/// and each run's best checkpoint.
pub fn plot_run_dirs(dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    require_runs(dirs)?;
    let mut runs = Vec::with_capacity(dirs.len());
    let mut checkpoints = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let record = RunRecord::load(dir)?;
        let best = match &record.best.path {
            Some(p) if p.is_absolute() || p.exists() => p.clone(),
            Some(p) => dir
                .join(super::train::CHECKPOINT_DIR)
                .join(p.file_name().unwrap_or_default()),
            None => {
                return Err(Error::Dataset(format!(
                    "{}: run has no saved checkpoint",
                    dir.display()
                )));
            }
        };
        checkpoints.push(Checkpoint::load(&best)?);
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| record.config.ablation.label().to_string());
        runs.push(RunArtifacts { name, record });
    }
    let cfg = &runs[0].record.config;
    let data = Dataset::load(&cfg.dataset_dir, cfg.tie_rule)?;
    let rows = overlay_rows(&data, &checkpoints, 4)?;
    plot_runs(&runs, &rows, out)
}
