//! Minimal SVG charts. Bars are the only `<rect>` elements, so a chart has
//! exactly one rect per plotted bin or example.

use std::fmt::Write as _;

use shiftcal_core::metrics::{EceReport, IwReport};

/// Plot area in pixels; data coordinates run over `[0, 1]` on both axes
/// unless a chart rescales them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl Frame {
    pub fn x(&self, v: f64) -> f64 {
        self.left + v * self.width
    }

    pub fn y(&self, v: f64) -> f64 {
        self.top + (1.0 - v) * self.height
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }
}

const WIDTH: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const PLOT: f64 = 320.0;
const MASS_HEIGHT: f64 = 100.0;

/// Upper panel: accuracy against confidence.
pub const ACCURACY_FRAME: Frame = Frame {
    left: MARGIN_LEFT,
    top: 40.0,
    width: PLOT,
    height: PLOT,
};

/// Lower panel: share of examples per bin.
pub const MASS_FRAME: Frame = Frame {
    left: MARGIN_LEFT,
    top: 40.0 + PLOT + 50.0,
    width: PLOT,
    height: MASS_HEIGHT,
};

/// One bar in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub x: f64,
    pub width: f64,
    pub y: f64,
    pub height: f64,
}

fn bars(report: &EceReport, frame: &Frame, value: impl Fn(usize) -> f64) -> Vec<Bar> {
    report
        .bins
        .iter()
        .enumerate()
        .filter(|(_, b)| b.count > 0)
        .map(|(i, _)| {
            let (lo, hi) = (report.edges[i], report.edges[i + 1]);
            let top = frame.y(value(i).clamp(0.0, 1.0));
            Bar {
                x: frame.x(lo),
                width: (hi - lo) * frame.width,
                y: top,
                height: frame.bottom() - top,
            }
        })
        .collect()
}

/// Accuracy bars of the nonempty bins, one per bin over its edges.
pub fn accuracy_bars(report: &EceReport) -> Vec<Bar> {
    bars(report, &ACCURACY_FRAME, |i| report.bins[i].accuracy)
}

/// Mass bars, scaled so the largest bin fills the panel.
pub fn mass_bars(report: &EceReport) -> Vec<Bar> {
    let max = report.bins.iter().map(|b| b.mass).fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    bars(report, &MASS_FRAME, |i| report.bins[i].mass * scale)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis(out: &mut String, frame: &Frame) {
    let _ = writeln!(
        out,
        r##"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="#333" stroke-width="1"/>"##,
        l = frame.left,
        t = frame.top,
        b = frame.bottom(),
        r = frame.left + frame.width
    );
}

fn ticks(out: &mut String, frame: &Frame, y_axis: bool) {
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v}</text>"#,
            frame.x(v),
            frame.bottom() + 14.0
        );
        if y_axis {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v}</text>"#,
                frame.left - 6.0,
                frame.y(v) + 3.0
            );
        }
    }
}

fn rect(out: &mut String, bar: &Bar, fill: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}" stroke="white" stroke-width="0.5"/>"#,
        bar.x, bar.y, bar.width, bar.height
    );
}

/// Two panels: accuracy bars against the diagonal, and bin masses below.
pub fn reliability_svg(report: &EceReport, title: &str) -> String {
    let height = MASS_FRAME.bottom() + 40.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" font-size="13" text-anchor="middle">{} (ECE {:.4}, over-confident {:.4})</text>"#,
        MARGIN_LEFT + PLOT / 2.0,
        escape(title),
        report.ece,
        report.overconfident_ece
    );

    let f = ACCURACY_FRAME;
    let _ = writeln!(out, r#"<g class="accuracy">"#);
    for bar in accuracy_bars(report) {
        rect(&mut out, &bar, "#4878b8");
    }
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#c0392b" stroke-dasharray="4 3" stroke-width="1.2"/>"##,
        f.x(0.0),
        f.y(0.0),
        f.x(1.0),
        f.y(1.0)
    );
    axis(&mut out, &f);
    ticks(&mut out, &f, true);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" font-size="11" transform="rotate(-90 14 {:.1})" text-anchor="middle">accuracy</text>"#,
        f.top + f.height / 2.0,
        f.top + f.height / 2.0
    );
    let _ = writeln!(out, "</g>");

    let m = MASS_FRAME;
    let _ = writeln!(out, r#"<g class="mass">"#);
    for bar in mass_bars(report) {
        rect(&mut out, &bar, "#8aa4c8");
    }
    axis(&mut out, &m);
    ticks(&mut out, &m, false);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" font-size="11" transform="rotate(-90 14 {:.1})" text-anchor="middle">mass</text>"#,
        m.top + m.height / 2.0,
        m.top + m.height / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">confidence</text>"#,
        m.left + m.width / 2.0,
        m.bottom() + 30.0
    );
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

/// Per ranked example: a min-max whisker, a median bar and a mean dot.
pub fn iw_svg(report: &IwReport, title: &str) -> String {
    let n = report.rows.len().max(1) as f64;
    let top = report.rows.iter().map(|r| r.max).fold(0.0, f64::max).max(1e-12) * 1.05;
    let frame = Frame {
        left: MARGIN_LEFT,
        top: 40.0,
        width: (24.0 * n).max(PLOT),
        height: 260.0,
    };
    let width = frame.left + frame.width + 20.0;
    let height = frame.bottom() + 50.0;
    let y = |v: f64| frame.y(v / top);
    let slot = frame.width / n;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" font-size="13" text-anchor="middle">{} ({} runs)</text>"#,
        frame.left + frame.width / 2.0,
        escape(title),
        report.runs
    );
    for (rank, row) in report.rows.iter().enumerate() {
        let cx = frame.left + slot * (rank as f64 + 0.5);
        let _ = writeln!(
            out,
            r##"<line x1="{cx:.3}" y1="{:.3}" x2="{cx:.3}" y2="{:.3}" stroke="#555"/>"##,
            y(row.min),
            y(row.max)
        );
        let half = slot * 0.3;
        let bar = Bar {
            x: cx - half,
            width: 2.0 * half,
            y: y(row.median) - 1.0,
            height: 2.0,
        };
        rect(&mut out, &bar, "#4878b8");
        let _ = writeln!(
            out,
            r##"<circle cx="{cx:.3}" cy="{:.3}" r="2.5" fill="#c0392b"/>"##,
            y(row.mean)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="9" text-anchor="middle">{}</text>"#,
            frame.bottom() + 14.0,
            row.index
        );
    }
    axis(&mut out, &frame);
    for k in 0..=4 {
        let v = top * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            frame.left - 6.0,
            y(v) + 3.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">source example (ranked by mean estimated weight)</text>"#,
        frame.left + frame.width / 2.0,
        frame.bottom() + 34.0
    );
    out.push_str("</svg>\n");
    out
}
