//! Plain-text SVG line charts of a trajectory.

use std::fmt::Write as _;

use crate::CliError;

/// Numeric CSV with a header; empty cells are missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table, CliError> {
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| CliError::Config("trajectory file is empty".into()))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != columns.len() {
                return Err(CliError::Config(format!(
                    "line {}: expected {} cells, found {}",
                    i + 2,
                    columns.len(),
                    cells.len()
                )));
            }
            let row = cells
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>()
                            .map(Some)
                            .map_err(|_| CliError::Config(format!("line {}: `{c}` is not a number", i + 2)))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, CliError> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Config(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<String>,
}

pub fn default_panels() -> Vec<Panel> {
    let p = |title: &str, series: &[&str]| Panel {
        title: title.to_string(),
        series: series.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        p("accuracy", &["train_acc", "val_acc", "test_acc"]),
        p("remaining samples", &["remaining_train", "remaining_val"]),
        p("balance degree", &["balance_train", "balance_val"]),
        p("dominant eigenvalue", &["eig_max"]),
    ]
}

pub fn single_panel(series: &[String]) -> Vec<Panel> {
    vec![Panel {
        title: series.join(", "),
        series: series.to_vec(),
    }]
}

const WIDTH: f64 = 640.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One panel per entry in `panels`, one polyline per series, x = epoch.
pub fn emit_svg(table: &Table, panels: &[Panel]) -> Result<String, CliError> {
    let epochs: Vec<f64> = table
        .column("epoch")?
        .into_iter()
        .map(|e| e.ok_or_else(|| CliError::Config("epoch cell is empty".into())))
        .collect::<Result<_, _>>()?;
    if epochs.is_empty() {
        return Err(CliError::Config("trajectory has no rows".into()));
    }
    let (x0, x1) = epochs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let height = PANEL_H * panels.len() as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" data-x-min="{x0}" data-x-max="{x1}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#).unwrap();
    for (pi, panel) in panels.iter().enumerate() {
        let top = pi as f64 * PANEL_H;
        let cols = panel
            .series
            .iter()
            .map(|name| table.column(name))
            .collect::<Result<Vec<_>, _>>()?;
        let finite = cols.iter().flatten().flatten().copied().filter(|v| v.is_finite());
        let (mut y0, mut y1) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let (left, right) = (MARGIN, WIDTH - 16.0);
        let (ptop, pbot) = (top + 28.0, top + PANEL_H - 28.0);
        let px = |x: f64| left + (x - x0) / xspan * (right - left);
        let py = |y: f64| pbot - (y - y0) / (y1 - y0) * (pbot - ptop);
        writeln!(s, r#"<g class="panel">"#).unwrap();
        writeln!(
            s,
            r#"<text x="{left}" y="{:.1}" font-family="sans-serif" font-size="13">{}</text>"#,
            top + 18.0,
            escape(&panel.title)
        )
        .unwrap();
        writeln!(
            s,
            r#"<path d="M{left:.1},{ptop:.1} L{left:.1},{pbot:.1} L{right:.1},{pbot:.1}" stroke="black" fill="none"/>"#
        )
        .unwrap();
        for (txt, x, y) in [
            (format!("{x0}"), left, pbot + 14.0),
            (format!("{x1}"), right - 16.0, pbot + 14.0),
            (format!("{y0:.3}"), 2.0, pbot),
            (format!("{y1:.3}"), 2.0, ptop + 4.0),
        ] {
            writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="10">{txt}</text>"#).unwrap();
        }
        for (si, (name, col)) in panel.series.iter().zip(&cols).enumerate() {
            let mut pts = String::new();
            for (e, v) in epochs.iter().zip(col) {
                if let Some(v) = v.filter(|v| v.is_finite()) {
                    if !pts.is_empty() {
                        pts.push(' ');
                    }
                    write!(pts, "{:.2},{:.2}", px(*e), py(v)).unwrap();
                }
            }
            let color = COLORS[si % COLORS.len()];
            writeln!(
                s,
                r#"<polyline data-series="{}" points="{pts}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
                escape(name)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" fill="{color}">{}</text>"#,
                right - 120.0,
                top + 18.0 + 12.0 * si as f64,
                escape(name)
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}
