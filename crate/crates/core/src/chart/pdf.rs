//! Single-page PDF 1.4 writer with the built-in Helvetica font.

use std::fmt::Write;

use super::scene::{Anchor, Prim, Scene};

fn rgb(hex: &str) -> (f64, f64, f64) {
    let v = u32::from_str_radix(hex.trim_start_matches('#'), 16).unwrap_or(0);
    let c = |shift: u32| f64::from((v >> shift) & 0xff) / 255.0;
    (c(16), c(8), c(0))
}

fn fill(s: &mut String, hex: &str) {
    let (r, g, b) = rgb(hex);
    let _ = writeln!(s, "{r:.3} {g:.3} {b:.3} rg");
}

fn stroke(s: &mut String, hex: &str) {
    let (r, g, b) = rgb(hex);
    let _ = writeln!(s, "{r:.3} {g:.3} {b:.3} RG");
}

fn pdf_string(t: &str) -> String {
    let mut out = String::from("(");
    for c in t.chars() {
        match c {
            '(' | ')' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            c if c.is_ascii() && !c.is_ascii_control() => out.push(c),
            _ => out.push('?'),
        }
    }
    out.push(')');
    out
}

fn content(scene: &Scene) -> String {
    let h = scene.height;
    let mut s = String::new();
    for p in &scene.prims {
        match p {
            Prim::Rect { x, y, w, h: rh, fill: f, .. } => {
                fill(&mut s, f);
                let _ = writeln!(s, "{x:.2} {:.2} {w:.2} {rh:.2} re f", h - y - rh);
            }
            Prim::Line {
                x1,
                y1,
                x2,
                y2,
                stroke: c,
                width,
            } => {
                stroke(&mut s, c);
                let _ = writeln!(s, "{width:.1} w {x1:.2} {:.2} m {x2:.2} {:.2} l S", h - y1, h - y2);
            }
            Prim::Polyline { points, stroke: c, .. } => {
                stroke(&mut s, c);
                s.push_str("2 w\n");
                for (i, (x, y)) in points.iter().enumerate() {
                    let op = if i == 0 { "m" } else { "l" };
                    let _ = writeln!(s, "{x:.2} {:.2} {op}", h - y);
                }
                s.push_str("S\n");
            }
            Prim::Circle { cx, cy, r, fill: f, .. } => {
                fill(&mut s, f);
                let (x, y) = (*cx, h - cy);
                let k = 0.552_284_75 * r;
                let _ = writeln!(s, "{:.2} {y:.2} m", x + r);
                let _ = writeln!(s, "{:.2} {:.2} {:.2} {:.2} {x:.2} {:.2} c", x + r, y + k, x + k, y + r, y + r);
                let _ = writeln!(s, "{:.2} {:.2} {:.2} {:.2} {:.2} {y:.2} c", x - k, y + r, x - r, y + k, x - r);
                let _ = writeln!(s, "{:.2} {:.2} {:.2} {:.2} {x:.2} {:.2} c", x - r, y - k, x - k, y - r, y - r);
                let _ = writeln!(s, "{:.2} {:.2} {:.2} {:.2} {:.2} {y:.2} c", x + k, y - r, x + r, y - k, x + r);
                s.push_str("f\n");
            }
            Prim::Sector {
                cx,
                cy,
                r,
                a0,
                a1,
                fill: f,
                ..
            } => {
                fill(&mut s, f);
                let (x, y) = (*cx, h - cy);
                let _ = writeln!(s, "{x:.2} {y:.2} m");
                let steps = ((a1 - a0).to_degrees().ceil() as usize).max(2);
                for i in 0..=steps {
                    let a = a0 + (a1 - a0) * i as f64 / steps as f64;
                    let _ = writeln!(s, "{:.2} {:.2} l", x + r * a.sin(), y + r * a.cos());
                }
                s.push_str("h f\n");
            }
            Prim::Text {
                x,
                y,
                text,
                size,
                anchor,
                rotate,
            } => {
                let width = 0.5 * size * text.chars().count() as f64;
                let dx = match anchor {
                    Anchor::Start => 0.0,
                    Anchor::Middle => -width / 2.0,
                    Anchor::End => -width,
                };
                let phi = (-rotate).to_radians();
                let (c, sn) = (phi.cos(), phi.sin());
                let (tx, ty) = (x + dx * c, h - y + dx * sn);
                fill(&mut s, "#222222");
                let _ = writeln!(
                    s,
                    "BT /F1 {size:.0} Tf {c:.4} {sn:.4} {:.4} {c:.4} {tx:.2} {ty:.2} Tm {} Tj ET",
                    -sn,
                    pdf_string(text)
                );
            }
        }
    }
    s
}

pub fn to_pdf(scene: &Scene) -> Vec<u8> {
    let stream = content(scene);
    let objects = [
        "<< /Type /Catalog /Pages 2 0 R >>".to_string(),
        "<< /Type /Pages /Kids [3 0 R] /Count 1 >>".to_string(),
        format!(
            "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {:.0} {:.0}] /Resources << /Font << /F1 4 0 R >> >> /Contents 5 0 R >>",
            scene.width, scene.height
        ),
        "<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica /Encoding /WinAnsiEncoding >>".to_string(),
        format!("<< /Length {} >>\nstream\n{stream}endstream", stream.len()),
    ];
    let mut out = String::from("%PDF-1.4\n");
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        let _ = write!(out, "{} 0 obj\n{body}\nendobj\n", i + 1);
    }
    let xref = out.len();
    let _ = write!(out, "xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1);
    for off in offsets {
        let _ = writeln!(out, "{off:010} 00000 n ");
    }
    let _ = write!(
        out,
        "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{xref}\n%%EOF\n",
        objects.len() + 1
    );
    out.into_bytes()
}
