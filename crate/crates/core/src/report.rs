//! Result files: per-trial CSV and simple SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{mean_snr, success_probability, GroupRate, SolverId, TrialResult};

pub const CSV_HEADER: &str = "solver,K,L,trial,seed,snr_db,consistency,iterations,wall_time";

/// Flat CSV record; column names follow [`CSV_HEADER`].
#[derive(Serialize, Deserialize)]
struct CsvRow {
    solver: SolverId,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    l: usize,
    trial: usize,
    seed: u64,
    snr_db: f64,
    consistency: f64,
    iterations: usize,
    wall_time: f64,
}

impl From<&TrialResult> for CsvRow {
    fn from(r: &TrialResult) -> Self {
        Self {
            solver: r.solver,
            k: r.k,
            l: r.l,
            trial: r.trial,
            seed: r.seed,
            snr_db: r.snr_db,
            consistency: r.sign_consistency,
            iterations: r.iterations,
            wall_time: r.wall_time,
        }
    }
}

impl From<CsvRow> for TrialResult {
    fn from(r: CsvRow) -> Self {
        Self {
            solver: r.solver,
            k: r.k,
            l: r.l,
            trial: r.trial,
            seed: r.seed,
            snr_db: r.snr_db,
            sign_consistency: r.consistency,
            iterations: r.iterations,
            wall_time: r.wall_time,
            error: None,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn results_to_csv(rows: &[TrialResult]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow::from(r)).expect("in-memory CSV write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("utf-8 CSV");
    format!("{CSV_HEADER}\n{body}")
}

pub fn results_from_csv(text: &str) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<&str> = r.headers().map_err(csv_error)?.iter().collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!(
            "unexpected header {:?}",
            header.join(",")
        )));
    }
    r.deserialize::<CsvRow>()
        .map(|row| row.map(TrialResult::from).map_err(csv_error))
        .collect()
}

pub fn rates_to_csv(rates: &[GroupRate]) -> String {
    let mut out = String::from("solver,K,L,trials,successes,rate\n");
    for g in rates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            g.solver.name(),
            g.k,
            g.l,
            g.trials,
            g.successes,
            g.rate
        );
    }
    out
}

/// One line per series on a linear-x, linear-y chart.
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            top + ph + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + pw + 10.0,
            left + pw + 30.0,
            left + pw + 36.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v.fract().abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn label(solver: SolverId, l: usize, multi_l: bool) -> String {
    if multi_l {
        format!("{} L={l}", solver.name())
    } else {
        solver.name().to_string()
    }
}

/// Mean SNR against K, one series per `(solver, L)`.
pub fn snr_plot(rows: &[TrialResult]) -> String {
    let means = mean_snr(rows);
    let multi_l = means
        .keys()
        .map(|k| k.2)
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        > 1;
    let mut series: BTreeMap<(SolverId, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for (&(solver, k, l), &snr) in &means {
        series.entry((solver, l)).or_default().push((k as f64, snr));
    }
    let series: Vec<Series> = series
        .into_iter()
        .map(|((solver, l), points)| Series {
            label: label(solver, l, multi_l),
            points,
        })
        .collect();
    line_chart("Mean reconstruction SNR", "K", "SNR (dB)", &series)
}

/// Success rate against `K / band_width`.
pub fn success_plot(rows: &[TrialResult], threshold_db: f64, band_width: usize) -> Result<String> {
    let rates = success_probability(rows, threshold_db)?;
    let multi_l = rates
        .iter()
        .map(|g| g.l)
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        > 1;
    let mut series: BTreeMap<(SolverId, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for g in &rates {
        series
            .entry((g.solver, g.l))
            .or_default()
            .push((g.k as f64 / band_width as f64, g.rate));
    }
    let series: Vec<Series> = series
        .into_iter()
        .map(|((solver, l), points)| Series {
            label: label(solver, l, multi_l),
            points,
        })
        .collect();
    Ok(line_chart(
        &format!("Success rate (SNR > {threshold_db} dB)"),
        "K / band width",
        "success probability",
        &series,
    ))
}
