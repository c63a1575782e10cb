//! Hand-written SVG charts on a fixed 800×400 canvas.

use std::fmt::Write;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;
pub const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
];

const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn plot_w() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - TOP - BOTTOM
}

fn y_px(v: f64) -> f64 {
    TOP + plot_h() * (1.0 - v)
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn y_axis(out: &mut String, label: &str) {
    let _ = write!(out, r#"<g class="axis">"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = y_px(v);
        let _ = write!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            LEFT + plot_w(),
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = write!(
        out,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text></g>"#,
        TOP + plot_h() / 2.0,
        escape(label)
    );
}

fn legend(out: &mut String, names: &[String]) {
    let _ = write!(out, r#"<g class="legend">"#);
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 20.0;
        let _ = write!(
            out,
            r#"<rect x="{x}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            color(i),
            x + 18.0,
            y + 10.0,
            escape(n)
        );
    }
    out.push_str("</g>");
}

/// Grouped bars: one group per category, one series per expert.
/// `values[c][s]` is the bar of series `s` in category `c`.
pub fn grouped_bar_chart(title: &str, categories: &[String], series: &[String], values: &[Vec<f64>]) -> String {
    let mut out = String::new();
    open(&mut out, title);
    y_axis(&mut out, "mean routing probability");
    let group_w = plot_w() / categories.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (s, name) in series.iter().enumerate() {
        let _ = write!(
            out,
            r#"<g class="series" data-series="{}" fill="{}">"#,
            escape(name),
            color(s)
        );
        for (c, row) in values.iter().enumerate() {
            let v = row[s].clamp(0.0, 1.0);
            let x = LEFT + group_w * c as f64 + group_w * 0.1 + bar_w * s as f64;
            let _ = write!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}"/>"#,
                y_px(v),
                plot_h() * v
            );
        }
        out.push_str("</g>");
    }
    for (c, name) in categories.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + group_w * (c as f64 + 0.5),
            TOP + plot_h() + 20.0,
            escape(name)
        );
    }
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}

/// Lower and upper boundary of every band at every time point. The top of
/// the last band is exactly 1.
pub fn stack_bounds(rows: &[Vec<f64>]) -> Vec<Vec<(f64, f64)>> {
    let series = rows.first().map_or(0, Vec::len);
    let mut bands = vec![Vec::with_capacity(rows.len()); series];
    for row in rows {
        let mut acc = 0.0;
        for (s, &v) in row.iter().enumerate() {
            let lo = acc;
            acc = if s + 1 == series { 1.0 } else { (acc + v).min(1.0) };
            bands[s].push((lo, acc));
        }
    }
    bands
}

/// Stacked areas over time bins, one band per expert.
pub fn stacked_area_chart(title: &str, series: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    open(&mut out, title);
    y_axis(&mut out, "routing probability");
    let n = rows.len();
    let x_px = |t: usize| LEFT + plot_w() * if n > 1 { t as f64 / (n - 1) as f64 } else { 0.5 };
    for (s, band) in stack_bounds(rows).iter().enumerate() {
        let mut pts = String::new();
        for (t, &(_, hi)) in band.iter().enumerate() {
            let _ = write!(pts, "{:.2},{:.2} ", x_px(t), y_px(hi));
        }
        for (t, &(lo, _)) in band.iter().enumerate().rev() {
            let _ = write!(pts, "{:.2},{:.2} ", x_px(t), y_px(lo));
        }
        let _ = write!(
            out,
            r#"<g class="series" data-series="{}"><polygon points="{}" fill="{}"/></g>"#,
            escape(series.get(s).map_or("", String::as_str)),
            pts.trim_end(),
            color(s)
        );
    }
    for t in 0..n {
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            x_px(t),
            TOP + plot_h() + 18.0
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time bin</text>"#,
        LEFT + plot_w() / 2.0,
        HEIGHT - 10.0
    );
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}
