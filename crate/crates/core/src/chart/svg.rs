use std::fmt::Write;

use super::scene::{Anchor, Prim, Scene};

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c if (c as u32) < 0x20 && c != '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn title(t: &Option<String>) -> String {
    match t {
        Some(t) => format!("<title>{}</title>", esc(t)),
        None => String::new(),
    }
}

pub fn to_svg(scene: &Scene) -> Vec<u8> {
    let (w, h) = (scene.width, scene.height);
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"Helvetica, Arial, sans-serif\">"
    );
    for p in &scene.prims {
        match p {
            Prim::Rect {
                x,
                y,
                w,
                h,
                fill,
                class,
                title: t,
            } => {
                let stroke = if *class == "legend" { " stroke=\"#cccccc\"" } else { "" };
                let _ = writeln!(
                    s,
                    "<rect class=\"{class}\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"{stroke}>{}</rect>",
                    title(t)
                );
            }
            Prim::Line {
                x1,
                y1,
                x2,
                y2,
                stroke,
                width,
            } => {
                let _ = writeln!(
                    s,
                    "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width:.1}\"/>"
                );
            }
            Prim::Polyline { points, stroke, title: t } => {
                let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    "<polyline class=\"line\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"2\" points=\"{}\"><title>{}</title></polyline>",
                    pts.join(" "),
                    esc(t)
                );
            }
            Prim::Circle {
                cx,
                cy,
                r,
                fill,
                class,
                title: t,
            } => {
                let _ = writeln!(
                    s,
                    "<circle class=\"{class}\" cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{fill}\">{}</circle>",
                    title(t)
                );
            }
            Prim::Sector {
                cx,
                cy,
                r,
                a0,
                a1,
                fill,
                title: t,
            } => {
                let (x0, y0) = (cx + r * a0.sin(), cy - r * a0.cos());
                let (x1, y1) = (cx + r * a1.sin(), cy - r * a1.cos());
                let large = u8::from(a1 - a0 > std::f64::consts::PI);
                let _ = writeln!(
                    s,
                    "<path class=\"sector\" d=\"M {cx:.2} {cy:.2} L {x0:.2} {y0:.2} A {r:.2} {r:.2} 0 {large} 1 {x1:.2} {y1:.2} Z\" fill=\"{fill}\" stroke=\"#ffffff\"><title>{}</title></path>",
                    esc(t)
                );
            }
            Prim::Text {
                x,
                y,
                text,
                size,
                anchor,
                rotate,
            } => {
                let a = match anchor {
                    Anchor::Start => "start",
                    Anchor::Middle => "middle",
                    Anchor::End => "end",
                };
                let tr = if *rotate != 0.0 {
                    format!(" transform=\"rotate({rotate:.0} {x:.2} {y:.2})\"")
                } else {
                    String::new()
                };
                let _ = writeln!(
                    s,
                    "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.0}\" text-anchor=\"{a}\" fill=\"#222222\"{tr}>{}</text>",
                    esc(text)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}
