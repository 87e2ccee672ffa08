//! Deterministic SVG plots of theta and revealment tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use coxperc_core::analysis::{REVEAL_HEADER, THETA_HEADER};

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    ThetaVsLambda,
    ThetaVsNLog,
    RevealmentMap,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::ThetaVsLambda => "theta_vs_lambda",
            PlotKind::ThetaVsNLog => "theta_vs_n_log",
            PlotKind::RevealmentMap => "revealment_map",
        }
    }

    fn header(self) -> &'static str {
        match self {
            PlotKind::RevealmentMap => REVEAL_HEADER,
            _ => THETA_HEADER,
        }
    }
}

impl FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "theta_vs_lambda" => Ok(PlotKind::ThetaVsLambda),
            "theta_vs_n_log" => Ok(PlotKind::ThetaVsNLog),
            "revealment_map" => Ok(PlotKind::RevealmentMap),
            o => Err(format!(
                "unknown plot kind '{o}' (theta_vs_lambda, theta_vs_n_log, revealment_map)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotError {
    BadHeader { expected: String, found: String },
    Parse(String),
}

impl std::fmt::Display for PlotError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlotError::BadHeader { expected, found } => {
                write!(f, "BAD_HEADER: expected '{expected}', found '{found}'")
            }
            PlotError::Parse(s) => write!(f, "parse error: {s}"),
        }
    }
}

/// Rows of a table after its header; `#` lines are comments.
pub fn parse_table(text: &str, header: &str) -> Result<Vec<Vec<f64>>, PlotError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        None => return Ok(Vec::new()),
        Some(h) if h == header => {}
        Some(h) => {
            return Err(PlotError::BadHeader {
                expected: header.into(),
                found: h.into(),
            })
        }
    }
    let width = header.split(',').count();
    lines
        .map(|l| {
            let row: Vec<f64> = l
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PlotError::Parse(format!("'{l}': {e}")))?;
            if row.len() != width {
                return Err(PlotError::Parse(format!("'{l}': expected {width} fields")));
            }
            Ok(row)
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Linear map from data to canvas, y upward.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn span(vals: impl Iterator<Item = f64>, default: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return default;
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

struct Axes<'a> {
    title: &'a str,
    xlabel: &'a str,
    ylabel: &'a str,
    xticks: Vec<(f64, String)>,
    yticks: Vec<(f64, String)>,
}

fn open(s: &mut String, f: &Frame, a: &Axes) {
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        a.title
    );
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        s,
        "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        r - l,
        b - t
    );
    for (v, label) in &a.xticks {
        let x = f.px(*v);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{b}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/><text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
            b + 5.0,
            b + 18.0
        );
    }
    for (v, label) in &a.yticks {
        let y = f.py(*v);
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{l}\" y2=\"{y:.2}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>",
            l - 5.0,
            l - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        (l + r) / 2.0,
        H - 18.0,
        a.xlabel,
        (t + b) / 2.0,
        (t + b) / 2.0,
        a.ylabel
    );
}

fn series(s: &mut String, k: usize, label: &str, pts: &[(f64, f64)]) {
    let c = PALETTE[k % PALETTE.len()];
    if pts.len() > 1 {
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\"/>",
            path.join(" ")
        );
    }
    for (x, y) in pts {
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{c}\"/>");
    }
    let ly = TOP + 10.0 + 18.0 * k as f64;
    let lx = W - RIGHT + 12.0;
    let _ = writeln!(
        s,
        "<circle cx=\"{lx}\" cy=\"{ly}\" r=\"4\" fill=\"{c}\"/><text x=\"{}\" y=\"{}\">{label}</text>",
        lx + 10.0,
        ly + 4.0
    );
}

/// Group theta rows by one column, keeping the other as abscissa.
fn grouped(rows: &[Vec<f64>], key: usize, x: usize) -> BTreeMap<u64, (f64, Vec<Vec<f64>>)> {
    let mut m: BTreeMap<u64, (f64, Vec<Vec<f64>>)> = BTreeMap::new();
    for r in rows {
        m.entry(r[key].to_bits())
            .or_insert_with(|| (r[key], Vec::new()))
            .1
            .push(r.clone());
    }
    for (_, v) in m.values_mut() {
        v.sort_by(|a, b| a[x].total_cmp(&b[x]));
    }
    m
}

fn theta_vs_lambda(rows: &[Vec<f64>]) -> String {
    // Columns: lambda, n, trials, hits, theta, ci_lo, ci_hi, seed.
    let (x0, x1) = span(rows.iter().map(|r| r[0]), (0.0, 1.0));
    let f = Frame {
        x0,
        x1,
        y0: 0.0,
        y1: 1.0,
    };
    let mut s = String::new();
    open(
        &mut s,
        &f,
        &Axes {
            title: "theta_n versus lambda",
            xlabel: "lambda",
            ylabel: "theta_n",
            xticks: ticks(x0, x1).into_iter().map(|v| (v, fmt_num(v))).collect(),
            yticks: ticks(0.0, 1.0).into_iter().map(|v| (v, fmt_num(v))).collect(),
        },
    );
    let mut by_n: Vec<_> = grouped(rows, 1, 0).into_values().collect();
    by_n.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (k, (n, rs)) in by_n.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        for r in rs {
            let x = f.px(r[0]);
            let _ = writeln!(
                s,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"{c}\" stroke-opacity=\"0.5\"/>",
                f.py(r[5]),
                f.py(r[6])
            );
        }
        let pts: Vec<(f64, f64)> = rs.iter().map(|r| (f.px(r[0]), f.py(r[4]))).collect();
        series(&mut s, k, &format!("n = {}", fmt_num(*n)), &pts);
    }
    s.push_str("</svg>\n");
    s
}

fn theta_vs_n_log(rows: &[Vec<f64>]) -> String {
    let positive: Vec<&Vec<f64>> = rows.iter().filter(|r| r[4] > 0.0).collect();
    let (x0, x1) = span(rows.iter().map(|r| r[1]), (5.0, 10.0));
    let (lo, hi) = span(positive.iter().map(|r| r[4].log10()), (-3.0, 0.0));
    let (y0, y1) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let f = Frame { x0, x1, y0, y1 };
    let mut s = String::new();
    let yticks = (y0 as i64..=y1 as i64)
        .map(|k| (k as f64, format!("1e{k}")))
        .collect();
    open(
        &mut s,
        &f,
        &Axes {
            title: "theta_n versus n (log scale)",
            xlabel: "n",
            ylabel: "theta_n",
            xticks: ticks(x0, x1).into_iter().map(|v| (v, fmt_num(v))).collect(),
            yticks,
        },
    );
    let dropped = rows.len() - positive.len();
    if dropped > 0 {
        let _ = writeln!(s, "<!-- {dropped} rows with theta = 0 not drawn -->");
    }
    let pos: Vec<Vec<f64>> = positive.into_iter().cloned().collect();
    let mut by_l: Vec<_> = grouped(&pos, 0, 1).into_values().collect();
    by_l.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (k, (l, rs)) in by_l.iter().enumerate() {
        let pts: Vec<(f64, f64)> = rs
            .iter()
            .map(|r| (f.px(r[1]), f.py(r[4].log10())))
            .collect();
        series(&mut s, k, &format!("lambda = {}", fmt_num(*l)), &pts);
    }
    s.push_str("</svg>\n");
    s
}

fn revealment_map(rows: &[Vec<f64>]) -> String {
    // Columns: block_x, block_y, delta, se, trials.
    let (bx0, bx1) = span(rows.iter().map(|r| r[0]), (-1.0, 1.0));
    let (by0, by1) = span(rows.iter().map(|r| r[1]), (-1.0, 1.0));
    let f = Frame {
        x0: bx0 - 0.5,
        x1: bx1 + 0.5,
        y0: by0 - 0.5,
        y1: by1 + 0.5,
    };
    let mut s = String::new();
    open(
        &mut s,
        &f,
        &Axes {
            title: "revealment per block",
            xlabel: "block x",
            ylabel: "block y",
            xticks: ticks(bx0, bx1).into_iter().map(|v| (v, fmt_num(v))).collect(),
            yticks: ticks(by0, by1).into_iter().map(|v| (v, fmt_num(v))).collect(),
        },
    );
    let cw = f.px(1.0) - f.px(0.0);
    let ch = f.py(0.0) - f.py(1.0);
    for r in rows {
        let g = (255.0 * (1.0 - r[2].clamp(0.0, 1.0))).round() as u8;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"rgb({g},{g},{g})\"><title>{} {}: {}</title></rect>",
            f.px(r[0] - 0.5),
            f.py(r[1] + 0.5),
            fmt_num(r[0]),
            fmt_num(r[1]),
            fmt_num(r[2])
        );
    }
    // Grey-scale key.
    let lx = W - RIGHT + 20.0;
    for i in 0..=4 {
        let d = i as f64 / 4.0;
        let g = (255.0 * (1.0 - d)).round() as u8;
        let y = TOP + 10.0 + 22.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{lx}\" y=\"{y}\" width=\"16\" height=\"16\" fill=\"rgb({g},{g},{g})\" stroke=\"black\"/><text x=\"{}\" y=\"{}\">delta = {}</text>",
            lx + 22.0,
            y + 12.0,
            fmt_num(d)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render(kind: PlotKind, table: &str) -> Result<String, PlotError> {
    let rows = parse_table(table, kind.header())?;
    Ok(match kind {
        PlotKind::ThetaVsLambda => theta_vs_lambda(&rows),
        PlotKind::ThetaVsNLog => theta_vs_n_log(&rows),
        PlotKind::RevealmentMap => revealment_map(&rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circles(svg: &str) -> Vec<(f64, f64)> {
        svg.lines()
            .filter(|l| l.starts_with("<circle cx") && l.contains("r=\"3\""))
            .map(|l| {
                let get = |k: &str| -> f64 {
                    let i = l.find(k).unwrap() + k.len();
                    l[i..].split('"').next().unwrap().parse().unwrap()
                };
                (get("cx=\""), get("cy=\""))
            })
            .collect()
    }

    #[test]
    fn empty_table_gives_axes_only() {
        for kind in [
            PlotKind::ThetaVsLambda,
            PlotKind::ThetaVsNLog,
            PlotKind::RevealmentMap,
        ] {
            let svg = render(kind, &format!("# c\n{}\n", kind.header())).unwrap();
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
            assert!(circles(&svg).is_empty());
            assert!(!svg.contains("fill=\"rgb(") || kind == PlotKind::RevealmentMap);
            assert_eq!(render(kind, "").unwrap(), svg);
        }
    }

    #[test]
    fn bad_header_is_reported() {
        let e = render(PlotKind::ThetaVsLambda, "a,b,c\n1,2,3\n").unwrap_err();
        assert!(matches!(e, PlotError::BadHeader { .. }));
        assert!(e.to_string().starts_with("BAD_HEADER"));
        assert!(render(PlotKind::RevealmentMap, &format!("{THETA_HEADER}\n")).is_err());
    }

    #[test]
    fn exponential_decay_is_a_line_on_the_log_axis() {
        let mut t = format!("{THETA_HEADER}\n");
        for n in 5..=16 {
            let th = (-(n as f64)).exp();
            t.push_str(&format!("1,{n},100,0,{th},0,1,1\n"));
        }
        let pts = circles(&render(PlotKind::ThetaVsNLog, &t).unwrap());
        assert_eq!(pts.len(), 12);
        let slope = (pts[1].1 - pts[0].1) / (pts[1].0 - pts[0].0);
        for w in pts.windows(2) {
            let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            // Coordinates are printed with two decimals.
            assert!((s - slope).abs() < 0.02, "{s} vs {slope}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = format!(
            "{REVEAL_HEADER}\n0,0,0.5,0.1,10\n1,0,1,0,10\n0,1,0,0,10\n1,1,0.25,0.1,10\n"
        );
        let a = render(PlotKind::RevealmentMap, &t).unwrap();
        assert_eq!(a, render(PlotKind::RevealmentMap, &t).unwrap());
        assert_eq!(a.matches("<title>").count(), 4);
        let th = format!("{THETA_HEADER}\n0.5,6,10,2,0.2,0.05,0.5,1\n1,6,10,7,0.7,0.4,0.9,1\n");
        assert_eq!(circles(&render(PlotKind::ThetaVsLambda, &th).unwrap()).len(), 2);
    }
}
