use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::train::MetricsRow;
use crate::error::{Error, Result};

/// Exponential moving average seeded with the first value;
/// `alpha = 1` returns the input unchanged.
pub fn ema(values: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = None;
    for &v in values {
        let next = match acc {
            None => v,
            Some(prev) => alpha * v + (1.0 - alpha) * prev,
        };
        out.push(next);
        acc = Some(next);
    }
    out
}

/// A curve per method: the mean over runs at each episode.
/// A run's method is its knowledge sources joined by `+` in schedule order.
pub fn curves(
    rows: &[MetricsRow],
    metric: fn(&MetricsRow) -> f64,
) -> BTreeMap<String, BTreeMap<String, Vec<f64>>> {
    let mut by_run: BTreeMap<(String, String, u64), Vec<&MetricsRow>> = BTreeMap::new();
    let mut methods: BTreeMap<(String, u64), Vec<String>> = BTreeMap::new();
    for r in rows {
        let m = methods.entry((r.level.clone(), r.run)).or_default();
        if m.last() != Some(&r.knowledge_source) {
            m.push(r.knowledge_source.clone());
        }
    }
    for r in rows {
        let method = methods[&(r.level.clone(), r.run)].join("+");
        by_run
            .entry((r.level.clone(), method, r.run))
            .or_default()
            .push(r);
    }
    let mut sums: BTreeMap<(String, String), BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for ((level, method, _), rs) in by_run {
        let acc = sums.entry((level, method)).or_default();
        for r in rs {
            let e = acc.entry(r.episode).or_insert((0.0, 0));
            e.0 += metric(r);
            e.1 += 1;
        }
    }
    let mut out: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for ((level, method), acc) in sums {
        let series = acc.values().map(|(s, n)| s / *n as f64).collect();
        out.entry(level).or_default().insert(method, series);
    }
    out
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// A line chart with one polyline per series.
pub fn svg_chart(title: &str, y_label: &str, series: &BTreeMap<String, Vec<f64>>) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 160.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = series.values().map(Vec::len).max().unwrap_or(1).max(2);
    let all = series.values().flatten().copied();
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |i: usize| left + pw * i as f64 / (n - 1) as f64;
    let y = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    )
    .unwrap();
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            left - 6.0,
            y(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">episode</text>"#,
        left + pw / 2.0,
        h - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{left}" y="{}" text-anchor="start">1</text>"#,
        top + ph + 16.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{n}</text>"#,
        left + pw,
        top + ph + 16.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (i, (name, vals)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(k, &v)| format!("{:.2},{:.2}", x(k), y(v)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = top + 16.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            left + pw + 10.0,
            left + pw + 30.0,
            left + pw + 36.0,
            ly + 4.0,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<level>_score.svg` and `<level>_steps.svg` with smoothed curves.
pub fn plot_curves(
    rows: &[MetricsRow],
    alpha: f64,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Data("metrics contain no rows".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!(
            "smoothing alpha {alpha} outside (0, 1]"
        )));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics: [(&str, &str, fn(&MetricsRow) -> f64); 2] = [
        ("score", "normalized score", |r| r.score),
        ("steps", "steps", |r| f64::from(r.steps)),
    ];
    let mut written = Vec::new();
    for (key, label, f) in metrics {
        for (level, series) in curves(rows, f) {
            let smoothed: BTreeMap<String, Vec<f64>> = series
                .into_iter()
                .map(|(m, v)| (m, ema(&v, alpha)))
                .collect();
            let path = out_dir.join(format!("{level}_{key}.svg"));
            let title = format!("{level}, {label}");
            fs::write(&path, svg_chart(&title, label, &smoothed))
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
