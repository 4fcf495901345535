//! ROC (linear and linear-log) and precision-recall plots as standalone
//! SVG files, one per manipulation type.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};

/// Smallest false-positive rate shown on the logarithmic axis.
pub const LINLOG_MIN_FPR: f64 = 1e-3;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotMode {
    RocLinear,
    RocLinlog,
    Pr,
}

impl PlotMode {
    pub const ALL: [PlotMode; 3] = [PlotMode::RocLinear, PlotMode::RocLinlog, PlotMode::Pr];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotMode::RocLinear => "roc_linear",
            PlotMode::RocLinlog => "roc_linlog",
            PlotMode::Pr => "pr",
        }
    }
}

impl std::fmt::Display for PlotMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn slug(s: &str) -> String {
    let slug: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    if slug.is_empty() {
        "all".into()
    } else {
        slug
    }
}

/// Legend text: description plus AUC or AP to three decimals.
pub fn legend_label(report: &EvalReport, mode: PlotMode) -> String {
    match mode {
        PlotMode::RocLinear | PlotMode::RocLinlog => format!("{} (AUC = {:.3})", report.meta.description, report.auc),
        PlotMode::Pr => format!("{} (AP = {:.3})", report.meta.description, report.average_precision),
    }
}

struct Axes {
    mode: PlotMode,
}

impl Axes {
    fn plot_w(&self) -> f64 {
        WIDTH - LEFT - RIGHT
    }

    fn plot_h(&self) -> f64 {
        HEIGHT - TOP - BOTTOM
    }

    /// Unit-interval position along x.
    fn x_unit(&self, x: f64) -> f64 {
        match self.mode {
            PlotMode::RocLinlog => {
                let lo = LINLOG_MIN_FPR.log10();
                (x.max(LINLOG_MIN_FPR).log10() - lo) / -lo
            }
            _ => x,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + self.x_unit(x) * self.plot_w()
    }

    fn py(&self, y: f64) -> f64 {
        TOP + (1.0 - y) * self.plot_h()
    }

    fn x_ticks(&self) -> Vec<(f64, String)> {
        match self.mode {
            PlotMode::RocLinlog => vec![
                (1e-3, "0.001".into()),
                (1e-2, "0.01".into()),
                (1e-1, "0.1".into()),
                (1.0, "1".into()),
            ],
            _ => (0..=5)
                .map(|i| (i as f64 / 5.0, format!("{:.1}", i as f64 / 5.0)))
                .collect(),
        }
    }

    fn labels(&self) -> (&'static str, &'static str) {
        match self.mode {
            PlotMode::Pr => ("Recall", "Precision"),
            _ => ("False positive rate", "True positive rate"),
        }
    }
}

/// SVG document for reports sharing one manipulation type.
pub fn render_svg(reports: &[&EvalReport], mode: PlotMode, title: &str) -> String {
    let ax = Axes { mode };
    let mut s = String::new();
    let scale = if mode == PlotMode::RocLinlog { "log" } else { "linear" };
    let x_min = if mode == PlotMode::RocLinlog {
        LINLOG_MIN_FPR
    } else {
        0.0
    };
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g id="axes" data-x-scale="{scale}" data-x-min="{x_min}" data-x-max="1" data-y-min="0" data-y-max="1">"#
    );
    let (x0, x1, y0, y1) = (ax.px(x_min), ax.px(1.0), ax.py(0.0), ax.py(1.0));
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for (v, label) in ax.x_ticks() {
        let x = ax.px(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#cccccc"/>"##,
            y1
        );
        let _ = writeln!(
            s,
            r#"<text class="xtick" x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            y0 + 16.0
        );
    }
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = ax.py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#cccccc"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    let (xl, yl) = ax.labels();
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xl}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{yl}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    if mode != PlotMode::Pr {
        // Chance diagonal; on the log axis it is the curve tpr = fpr.
        let pts: Vec<String> = (0..=30)
            .map(|i| {
                let f = if mode == PlotMode::RocLinlog {
                    10f64.powf(-3.0 + 3.0 * i as f64 / 30.0)
                } else {
                    i as f64 / 30.0
                };
                format!("{:.2},{:.2}", ax.px(f), ax.py(f))
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>"##,
            pts.join(" ")
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="curves">"#);
    for (i, r) in reports.iter().enumerate() {
        let points = if mode == PlotMode::Pr {
            &r.pr_points
        } else {
            &r.roc_points
        };
        let pts: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", ax.px(p[0]), ax.py(p[1])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            pts.join(" "),
            PALETTE[i % PALETTE.len()]
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="legend">"#);
    for (i, r) in reports.iter().enumerate() {
        let y = y0 - 12.0 - 16.0 * (reports.len() - 1 - i) as f64;
        let x = x0 + if mode == PlotMode::Pr { 12.0 } else { ax.plot_w() * 0.35 };
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            y - 4.0,
            x + 18.0,
            y - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{:.2}" y="{y:.2}">{}</text>"#,
            x + 24.0,
            escape(&legend_label(r, mode))
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

/// Writes `<mode>_<manipulation>.svg` under `out` for every manipulation
/// type present in `reports`, in order of first appearance.
pub fn emit_plots(reports: &[EvalReport], out: &Path, mode: PlotMode) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to plot".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut groups: Vec<(&str, Vec<&EvalReport>)> = Vec::new();
    for r in reports {
        match groups.iter_mut().find(|(m, _)| *m == r.meta.manipulation) {
            Some((_, g)) => g.push(r),
            None => groups.push((&r.meta.manipulation, vec![r])),
        }
    }
    let mut written = Vec::new();
    for (manip, group) in groups {
        let title = match mode {
            PlotMode::RocLinear => format!("ROC: {manip}"),
            PlotMode::RocLinlog => format!("ROC (log FPR): {manip}"),
            PlotMode::Pr => format!("Precision-recall: {manip}"),
        };
        let path = out.join(format!("{}_{}.svg", mode.as_str(), slug(manip)));
        fs::write(&path, render_svg(&group, mode, &title)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
