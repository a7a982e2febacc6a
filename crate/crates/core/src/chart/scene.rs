//! Backend-neutral drawing primitives and the layout of each chart type.

use std::collections::HashMap;

use crate::executor::ExtractedData;
use crate::plan::{ChartSpec, ChartType, SortDir};

use super::ChartError;

pub const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];
const AXIS: &str = "#333333";
const GRID: &str = "#dddddd";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Start,
    Middle,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prim {
    Rect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        fill: &'static str,
        class: &'static str,
        title: Option<String>,
    },
    Line {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        stroke: &'static str,
        width: f64,
    },
    Polyline {
        points: Vec<(f64, f64)>,
        stroke: &'static str,
        title: String,
    },
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
        fill: &'static str,
        class: &'static str,
        title: Option<String>,
    },
    /// Angles in radians, clockwise from 12 o'clock.
    Sector {
        cx: f64,
        cy: f64,
        r: f64,
        a0: f64,
        a1: f64,
        fill: &'static str,
        title: String,
    },
    Text {
        x: f64,
        y: f64,
        text: String,
        size: f64,
        anchor: Anchor,
        /// Degrees, counter-clockwise negative as in SVG.
        rotate: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: f64,
    pub height: f64,
    pub prims: Vec<Prim>,
}

impl Scene {
    pub fn count_class(&self, class: &str) -> usize {
        self.prims
            .iter()
            .filter(|p| match p {
                Prim::Rect { class: c, .. } | Prim::Circle { class: c, .. } => *c == class,
                Prim::Sector { .. } => class == "sector",
                Prim::Polyline { .. } => class == "line",
                _ => false,
            })
            .count()
    }
}

pub fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Round tick bounds and step covering `[lo, hi]` in about five steps.
pub fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = if hi == 0.0 { 1.0 } else { hi.abs() * 0.1 };
        lo -= pad;
        hi += pad;
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag
        * if norm <= 1.0 {
            1.0
        } else if norm <= 2.0 {
            2.0
        } else if norm <= 2.5 {
            2.5
        } else if norm <= 5.0 {
            5.0
        } else {
            10.0
        };
    let start = (lo / step).floor();
    let end = (hi / step).ceil();
    let n = (end - start).round() as i64;
    (0..=n).map(|k| (start + k as f64) * step).collect()
}

/// One row of the chart after column lookup and numeric conversion.
struct Row {
    x: String,
    x_num: Option<f64>,
    ys: Vec<f64>,
    series: Option<String>,
}

/// Legend label, colour, points.
type Polyline = (String, &'static str, Vec<(f64, f64)>);

fn column(data: &ExtractedData, name: &str) -> Result<usize, ChartError> {
    data.column_index(name).ok_or_else(|| ChartError::ColumnMissing(name.to_string()))
}

fn extract_rows(spec: &ChartSpec, data: &ExtractedData) -> Result<Vec<Row>, ChartError> {
    let xi = column(data, &spec.x)?;
    let yis: Vec<usize> = spec.y.iter().map(|y| column(data, y)).collect::<Result<_, _>>()?;
    let si = spec.series.as_deref().map(|s| column(data, s)).transpose()?;
    let sort_i = spec.sort.as_ref().map(|s| column(data, &s.by)).transpose()?;
    if data.row_count() == 0 {
        return Err(ChartError::EmptyData);
    }

    let mut order: Vec<usize> = (0..data.row_count()).collect();
    if let (Some(col), Some(sort)) = (sort_i, &spec.sort) {
        let vals: Vec<_> = data.column_values(col).collect();
        let numeric: Option<Vec<f64>> = vals.iter().map(|v| v.as_f64()).collect();
        let cmp = |a: usize, b: usize| match &numeric {
            Some(n) => n[a].total_cmp(&n[b]),
            None => vals[a].label().cmp(&vals[b].label()),
        };
        // Stable sort; ties keep data order in both directions.
        match sort.dir {
            SortDir::Asc => order.sort_by(|&a, &b| cmp(a, b)),
            SortDir::Desc => order.sort_by(|&a, &b| cmp(b, a)),
        }
    }

    let rows = data.rows();
    order
        .into_iter()
        .map(|r| {
            let row = &rows[r];
            let ys = yis
                .iter()
                .map(|&yi| {
                    row[yi].as_f64().ok_or_else(|| ChartError::NonNumericY {
                        column: data.columns()[yi].clone(),
                        row: r,
                        value: row[yi].label(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Row {
                x: row[xi].label(),
                x_num: row[xi].as_f64(),
                ys,
                series: si.map(|i| row[i].label()),
            })
        })
        .collect()
}

/// Distinct values in first-appearance order.
fn distinct<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items.filter(|s| seen.insert(*s)).map(str::to_string).collect()
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Frame {
    left: f64,
    top: f64,
    right: f64,
    bottom: f64,
}

impl Frame {
    fn w(&self) -> f64 {
        self.right - self.left
    }
    fn h(&self) -> f64 {
        self.bottom - self.top
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    ticks: Vec<f64>,
}

impl Axis {
    fn new(lo: f64, hi: f64) -> Self {
        let ticks = nice_ticks(lo, hi);
        Self {
            lo: ticks[0],
            hi: *ticks.last().expect("at least one tick"),
            ticks,
        }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

fn text(x: f64, y: f64, s: impl Into<String>, size: f64, anchor: Anchor, rotate: f64) -> Prim {
    Prim::Text {
        x,
        y,
        text: s.into(),
        size,
        anchor,
        rotate,
    }
}

fn line(x1: f64, y1: f64, x2: f64, y2: f64, stroke: &'static str, width: f64) -> Prim {
    Prim::Line {
        x1,
        y1,
        x2,
        y2,
        stroke,
        width,
    }
}

fn y_axis(prims: &mut Vec<Prim>, f: &Frame, axis: &Axis, label: &str) {
    for &t in &axis.ticks {
        let y = axis.map(t, f.bottom, f.top);
        prims.push(line(f.left, y, f.right, y, GRID, 1.0));
        prims.push(text(f.left - 6.0, y + 4.0, fmt_num(t), 11.0, Anchor::End, 0.0));
    }
    prims.push(line(f.left, f.top, f.left, f.bottom, AXIS, 1.0));
    prims.push(text(20.0, (f.top + f.bottom) / 2.0, label, 13.0, Anchor::Middle, -90.0));
}

fn x_axis_line(prims: &mut Vec<Prim>, f: &Frame) {
    prims.push(line(f.left, f.bottom, f.right, f.bottom, AXIS, 1.0));
}

fn x_label(prims: &mut Vec<Prim>, f: &Frame, height: f64, label: &str) {
    prims.push(text((f.left + f.right) / 2.0, height - 12.0, label, 13.0, Anchor::Middle, 0.0));
}

fn category_labels(prims: &mut Vec<Prim>, f: &Frame, cats: &[String], rotated: bool) {
    let band = f.w() / cats.len() as f64;
    for (i, c) in cats.iter().enumerate() {
        let x = f.left + band * (i as f64 + 0.5);
        if rotated {
            prims.push(text(x, f.bottom + 12.0, c.clone(), 11.0, Anchor::End, -45.0));
        } else {
            prims.push(text(x, f.bottom + 16.0, c.clone(), 11.0, Anchor::Middle, 0.0));
        }
    }
}

fn legend(prims: &mut Vec<Prim>, width: f64, top: f64, entries: &[(String, &'static str)]) {
    let x = width - 150.0;
    prims.push(Prim::Rect {
        x: x - 6.0,
        y: top - 4.0,
        w: 146.0,
        h: 20.0 * entries.len() as f64 + 8.0,
        fill: "#ffffff",
        class: "legend",
        title: None,
    });
    for (i, (name, c)) in entries.iter().enumerate() {
        let y = top + 20.0 * i as f64;
        prims.push(Prim::Rect {
            x,
            y,
            w: 12.0,
            h: 12.0,
            fill: c,
            class: "legend-key",
            title: None,
        });
        prims.push(text(x + 18.0, y + 10.0, name.clone(), 11.0, Anchor::Start, 0.0));
    }
}

/// Lay out `spec` over `data` on a `width` × `height` canvas.
pub fn build_scene(spec: &ChartSpec, data: &ExtractedData, width: f64, height: f64) -> Result<Scene, ChartError> {
    spec.check_shape().map_err(ChartError::BadSpec)?;
    let rows = extract_rows(spec, data)?;
    let y_label = spec.y.join(", ");
    let mut prims = Vec::new();
    prims.push(Prim::Rect {
        x: 0.0,
        y: 0.0,
        w: width,
        h: height,
        fill: "#ffffff",
        class: "background",
        title: None,
    });

    if spec.chart_type == ChartType::Pie {
        pie(&mut prims, &rows, width, height)?;
        return Ok(Scene { width, height, prims });
    }

    let series_names = distinct(rows.iter().filter_map(|r| r.series.as_deref()));
    let has_legend = spec.series.is_some() || spec.y.len() > 1;
    let legend_entries: Vec<(String, &'static str)> = if spec.series.is_some() {
        series_names.iter().enumerate().map(|(i, s)| (s.clone(), color(i))).collect()
    } else if spec.y.len() > 1 {
        spec.y.iter().enumerate().map(|(i, s)| (s.clone(), color(i))).collect()
    } else {
        Vec::new()
    };

    let cats = distinct(rows.iter().map(|r| r.x.as_str()));
    let numeric_x = spec.chart_type.is_scatter() && rows.iter().all(|r| r.x_num.is_some());
    let rotated = !numeric_x && cats.len() > 8;
    let frame = Frame {
        left: 80.0,
        top: 30.0,
        right: width - 30.0 - if has_legend { 150.0 } else { 0.0 },
        bottom: height - if rotated { 110.0 } else { 60.0 },
    };
    if frame.w() < 10.0 || frame.h() < 10.0 {
        return Err(ChartError::BadSpec(format!("canvas {width}x{height} is too small")));
    }
    let cat_index: HashMap<&str, usize> = cats.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let series_index: HashMap<&str, usize> = series_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let band = frame.w() / cats.len() as f64;
    let cat_x = |c: &str| frame.left + band * (cat_index[c] as f64 + 0.5);

    match spec.chart_type {
        ChartType::Bar => {
            let all = rows.iter().flat_map(|r| r.ys.iter().copied());
            let (lo, hi) = bounds(all, true);
            let axis = Axis::new(lo, hi);
            y_axis(&mut prims, &frame, &axis, &y_label);
            let m = spec.y.len();
            let bw = band * 0.8 / m as f64;
            let zero = axis.map(0.0, frame.bottom, frame.top);
            for r in &rows {
                for (j, v) in r.ys.iter().enumerate() {
                    let x0 = frame.left + band * cat_index[r.x.as_str()] as f64 + band * 0.1 + bw * j as f64;
                    let yv = axis.map(*v, frame.bottom, frame.top);
                    prims.push(Prim::Rect {
                        x: x0,
                        y: yv.min(zero),
                        w: bw,
                        h: (yv - zero).abs(),
                        fill: color(if m > 1 { j } else { 0 }),
                        class: "bar",
                        title: Some(if m > 1 {
                            format!("{} / {}: {}", r.x, spec.y[j], fmt_num(*v))
                        } else {
                            format!("{}: {}", r.x, fmt_num(*v))
                        }),
                    });
                }
            }
        }
        ChartType::StackedBar => {
            // Sum duplicates per (category, series), then stack in series order.
            let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
            for r in &rows {
                let s = series_index[r.series.as_deref().unwrap_or_default()];
                *cells.entry((cat_index[r.x.as_str()], s)).or_default() += r.ys[0];
            }
            let mut pos = vec![0.0f64; cats.len()];
            let mut neg = vec![0.0f64; cats.len()];
            let mut segs = Vec::new();
            for ci in 0..cats.len() {
                for si in 0..series_names.len() {
                    if let Some(&v) = cells.get(&(ci, si)) {
                        let acc = if v >= 0.0 { &mut pos[ci] } else { &mut neg[ci] };
                        segs.push((ci, si, *acc, *acc + v, v));
                        *acc += v;
                    }
                }
            }
            let lo = neg.iter().copied().fold(0.0, f64::min);
            let hi = pos.iter().copied().fold(0.0, f64::max);
            let axis = Axis::new(lo, hi);
            y_axis(&mut prims, &frame, &axis, &y_label);
            for (ci, si, a, b, v) in segs {
                let ya = axis.map(a, frame.bottom, frame.top);
                let yb = axis.map(b, frame.bottom, frame.top);
                prims.push(Prim::Rect {
                    x: frame.left + band * ci as f64 + band * 0.15,
                    y: ya.min(yb),
                    w: band * 0.7,
                    h: (ya - yb).abs(),
                    fill: color(si),
                    class: "bar",
                    title: Some(format!("{} / {}: {}", cats[ci], series_names[si], fmt_num(v))),
                });
            }
        }
        ChartType::Line | ChartType::GroupingLine => {
            let (lo, hi) = bounds(rows.iter().flat_map(|r| r.ys.iter().copied()), false);
            let axis = Axis::new(lo, hi);
            y_axis(&mut prims, &frame, &axis, &y_label);
            let mut lines: Vec<Polyline> = Vec::new();
            if spec.chart_type == ChartType::GroupingLine {
                for (si, name) in series_names.iter().enumerate() {
                    let pts = rows
                        .iter()
                        .filter(|r| r.series.as_deref() == Some(name.as_str()))
                        .map(|r| (cat_x(&r.x), axis.map(r.ys[0], frame.bottom, frame.top)))
                        .collect();
                    lines.push((name.clone(), color(si), pts));
                }
            } else {
                for (j, name) in spec.y.iter().enumerate() {
                    let pts = rows
                        .iter()
                        .map(|r| (cat_x(&r.x), axis.map(r.ys[j], frame.bottom, frame.top)))
                        .collect();
                    lines.push((name.clone(), color(j), pts));
                }
            }
            for (name, c, pts) in lines {
                for &(x, y) in &pts {
                    prims.push(Prim::Circle {
                        cx: x,
                        cy: y,
                        r: 3.0,
                        fill: c,
                        class: "marker",
                        title: None,
                    });
                }
                prims.push(Prim::Polyline {
                    points: pts,
                    stroke: c,
                    title: name,
                });
            }
        }
        ChartType::Scatter | ChartType::GroupingScatter => {
            let (lo, hi) = bounds(rows.iter().flat_map(|r| r.ys.iter().copied()), false);
            let axis = Axis::new(lo, hi);
            y_axis(&mut prims, &frame, &axis, &y_label);
            let x_axis = numeric_x.then(|| {
                let (lo, hi) = bounds(rows.iter().filter_map(|r| r.x_num), false);
                Axis::new(lo, hi)
            });
            if let Some(xa) = &x_axis {
                for &t in &xa.ticks {
                    let x = xa.map(t, frame.left, frame.right);
                    prims.push(line(x, frame.bottom, x, frame.bottom + 4.0, AXIS, 1.0));
                    prims.push(text(x, frame.bottom + 16.0, fmt_num(t), 11.0, Anchor::Middle, 0.0));
                }
            }
            for r in &rows {
                let x = match (&x_axis, r.x_num) {
                    (Some(xa), Some(v)) => xa.map(v, frame.left, frame.right),
                    _ => cat_x(&r.x),
                };
                for (j, v) in r.ys.iter().enumerate() {
                    let ci = match &r.series {
                        Some(s) => series_index[s.as_str()],
                        None => j,
                    };
                    prims.push(Prim::Circle {
                        cx: x,
                        cy: axis.map(*v, frame.bottom, frame.top),
                        r: 4.0,
                        fill: color(ci),
                        class: "point",
                        title: Some(match &r.series {
                            Some(s) => format!("{s}: ({}, {})", r.x, fmt_num(*v)),
                            None => format!("({}, {})", r.x, fmt_num(*v)),
                        }),
                    });
                }
            }
        }
        ChartType::Pie => unreachable!("handled above"),
    }

    x_axis_line(&mut prims, &frame);
    if !numeric_x {
        category_labels(&mut prims, &frame, &cats, rotated);
    }
    x_label(&mut prims, &frame, height, &spec.x);
    if has_legend {
        legend(&mut prims, width, frame.top, &legend_entries);
    }
    Ok(Scene { width, height, prims })
}

fn bounds(values: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if include_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    (lo, hi)
}

fn pie(prims: &mut Vec<Prim>, rows: &[Row], width: f64, height: f64) -> Result<(), ChartError> {
    if let Some(r) = rows.iter().find(|r| r.ys[0] < 0.0 || !r.ys[0].is_finite()) {
        return Err(ChartError::PieDomainError(format!("{} has value {}", r.x, r.ys[0])));
    }
    let total: f64 = rows.iter().map(|r| r.ys[0]).sum();
    if total <= 0.0 {
        return Err(ChartError::PieDomainError("values sum to zero".into()));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].ys[0].total_cmp(&rows[a].ys[0]));
    let (cx, cy) = (width / 2.0, height / 2.0);
    let r = (width.min(height) / 2.0 - 60.0).max(20.0);
    let mut a = 0.0;
    for i in order {
        let row = &rows[i];
        let v = row.ys[0];
        let sweep = v / total * std::f64::consts::TAU;
        let title = format!("{}: {}", row.x, fmt_num(v));
        let fill = color(i);
        if rows.len() == 1 || sweep >= std::f64::consts::TAU - 1e-12 {
            prims.push(Prim::Circle {
                cx,
                cy,
                r,
                fill,
                class: "sector",
                title: Some(title),
            });
        } else {
            prims.push(Prim::Sector {
                cx,
                cy,
                r,
                a0: a,
                a1: a + sweep,
                fill,
                title,
            });
        }
        if v > 0.0 {
            let mid = a + sweep / 2.0;
            let (lx, ly) = (cx + (r + 14.0) * mid.sin(), cy - (r + 14.0) * mid.cos());
            let anchor = if mid.sin() > 0.1 {
                Anchor::Start
            } else if mid.sin() < -0.1 {
                Anchor::End
            } else {
                Anchor::Middle
            };
            let pct = fmt_num((v / total * 1000.0).round() / 10.0);
            prims.push(text(lx, ly + 4.0, format!("{} ({pct}%)", row.x), 11.0, anchor, 0.0));
        }
        a += sweep;
    }
    Ok(())
}
