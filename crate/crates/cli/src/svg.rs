//! Minimal line charts of sweep metrics.

use std::fmt::Write;

use consistent_core::eval::{Metric, SweepReport};
use consistent_core::Mode;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

fn color(mode: Mode) -> &'static str {
    match mode {
        Mode::Plain => "#1f77b4",
        Mode::Sc => "#d62728",
        Mode::Uc => "#2ca02c",
    }
}

fn label(mode: Mode) -> &'static str {
    match mode {
        Mode::Plain => "SVD",
        Mode::Sc => "SC-SVD",
        Mode::Uc => "UC-SVD",
    }
}

pub fn metric_chart(report: &SweepReport, metric: Metric) -> String {
    let (name, value): (&str, fn(&consistent_core::eval::EvalReport) -> f64) = match metric {
        Metric::Rmse => ("RMSE", |r| r.rmse),
        Metric::Mae => ("MAE", |r| r.mae),
    };
    let ks: Vec<usize> = {
        let mut ks: Vec<usize> = report.reports.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    let (kmin, kmax) = (ks[0] as f64, ks[ks.len() - 1] as f64);
    let (mut ymin, mut ymax) = report
        .reports
        .iter()
        .map(value)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((ymax - ymin) * 0.05).max(1e-6);
    ymin -= pad;
    ymax += pad;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |k: f64| {
        if kmax > kmin {
            LEFT + (k - kmin) / (kmax - kmin) * plot_w
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let y = |v: f64| TOP + (ymax - v) / (ymax - ymin) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP, TOP + plot_h);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1} {y0:.1} V{y1:.1} H{x1:.1}" fill="none" stroke="black"/>"#
    );

    let step = ks.len().div_ceil(10).max(1);
    for &k in ks.iter().step_by(step) {
        let px = x(k as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{y1:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            y1 + 5.0,
            y1 + 19.0
        );
    }
    for i in 0..=5 {
        let v = ymin + (ymax - ymin) * i as f64 / 5.0;
        let py = y(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.4}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">k</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{name}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let modes: Vec<Mode> = Mode::ALL
        .into_iter()
        .filter(|&m| report.for_mode(m).next().is_some())
        .collect();
    for (slot, &mode) in modes.iter().enumerate() {
        let points: Vec<String> = report
            .for_mode(mode)
            .map(|r| format!("{:.2},{:.2}", x(r.k as f64), y(value(r))))
            .collect();
        let c = color(mode);
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + slot as f64 * 20.0;
        let lx = x1 + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0,
            label(mode)
        );
    }
    s.push_str("</svg>\n");
    s
}
