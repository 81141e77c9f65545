//! Static SVG regret plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::policy::FeatureKind;

use super::aggregate::CellSummary;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn color(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Hybrid => "#d62728",
        FeatureKind::LinearZ => "#1f77b4",
        FeatureKind::LinearXz => "#17becf",
        FeatureKind::CoverageX => "#2ca02c",
        FeatureKind::CoverageXz => "#9467bd",
    }
}

/// Roughly five round tick values covering `[0, max]`.
fn ticks(max: f64) -> Vec<f64> {
    if max <= 0.0 {
        return vec![0.0];
    }
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    (0..)
        .map(|i| i as f64 * step)
        .take_while(|v| *v <= max * (1.0 + 1e-9))
        .collect()
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Axes, labels and coordinate mapping shared by both plot kinds.
struct Frame {
    x_max: f64,
    y_max: f64,
    x_min: f64,
    svg: String,
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str, x_min: f64, x_max: f64, y_max: f64) -> Self {
        let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
        let x_max = if x_max > x_min { x_max } else { x_min + 1.0 };
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        )
        .unwrap();
        let mut frame = Self {
            x_max,
            y_max,
            x_min,
            svg,
        };
        frame.axes(x_label, y_label);
        frame
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - y / self.y_max * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        let mut s = String::new();
        writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#).unwrap();
        writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#).unwrap();
        for t in ticks(self.y_max) {
            let y = self.py(t);
            writeln!(
                s,
                r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#e0e0e0"/>"##
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                y + 4.0,
                fmt_tick(t)
            )
            .unwrap();
        }
        let span = self.x_max - self.x_min;
        for t in ticks(span) {
            let x = self.px(self.x_min + t);
            writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/>"#,
                y0 + 5.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 18.0,
                fmt_tick(self.x_min + t)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 10.0,
            escape(x_label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        )
        .unwrap();
        self.svg.push_str(&s);
    }

    fn band(&mut self, kind: FeatureKind, upper: &[(f64, f64)], lower: &[(f64, f64)]) {
        let pts: Vec<String> = upper
            .iter()
            .chain(lower.iter().rev())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y.max(0.0))))
            .collect();
        writeln!(
            self.svg,
            r#"<polygon class="band" points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
            pts.join(" "),
            color(kind)
        )
        .unwrap();
    }

    fn curve(&mut self, kind: FeatureKind, points: &[(f64, f64)], markers: bool) {
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        writeln!(
            self.svg,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            pts.join(" "),
            color(kind)
        )
        .unwrap();
        if markers {
            for &(x, y) in points {
                writeln!(
                    self.svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                    self.px(x),
                    self.py(y),
                    color(kind)
                )
                .unwrap();
            }
        }
    }

    fn legend(&mut self, kinds: &[FeatureKind]) {
        for (i, kind) in kinds.iter().enumerate() {
            let y = TOP + 12.0 + 18.0 * i as f64;
            let x = LEFT + 12.0;
            writeln!(
                self.svg,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
                x + 22.0,
                color(*kind),
                x + 28.0,
                y + 4.0,
                kind.display_name()
            )
            .unwrap();
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn regret_plot(cells: &[&CellSummary]) -> String {
    let first = cells[0].cell;
    let x_max = cells
        .iter()
        .flat_map(|c| c.points.last())
        .map(|p| p.step as f64)
        .fold(0.0, f64::max);
    let y_max = cells
        .iter()
        .flat_map(|c| &c.points)
        .map(|p| p.mean + p.stderr.unwrap_or(0.0))
        .fold(0.0, f64::max);
    let title = format!("lambda = {}, K = {}, d = {}", first.lambda, first.k, first.d);
    let mut frame = Frame::new(&title, "step", "cumulative regret", 0.0, x_max, y_max);
    for c in cells {
        if c.points.iter().all(|p| p.stderr.is_some()) {
            let upper: Vec<(f64, f64)> = c
                .points
                .iter()
                .map(|p| (p.step as f64, p.mean + p.stderr.unwrap()))
                .collect();
            let lower: Vec<(f64, f64)> = c
                .points
                .iter()
                .map(|p| (p.step as f64, p.mean - p.stderr.unwrap()))
                .collect();
            frame.band(c.cell.policy, &upper, &lower);
        }
    }
    for c in cells {
        let mut pts = vec![(0.0, 0.0)];
        pts.extend(c.points.iter().map(|p| (p.step as f64, p.mean)));
        frame.curve(c.cell.policy, &pts, false);
    }
    frame.legend(&cells.iter().map(|c| c.cell.policy).collect::<Vec<_>>());
    frame.finish()
}

fn lambda_plot(cells: &[&CellSummary], policies: &[FeatureKind]) -> String {
    let first = cells[0].cell;
    let finals: Vec<(FeatureKind, f64, f64, f64)> = cells
        .iter()
        .filter_map(|c| {
            c.final_point()
                .map(|p| (c.cell.policy, c.cell.lambda, p.mean, p.stderr.unwrap_or(0.0)))
        })
        .collect();
    let y_max = finals.iter().map(|f| f.2 + f.3).fold(0.0, f64::max);
    let x_min = finals.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let x_max = finals.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
    let title = format!("final regret, K = {}, d = {}", first.k, first.d);
    let mut frame = Frame::new(&title, "lambda", "n-step regret", x_min, x_max, y_max);
    for &kind in policies {
        let mut pts: Vec<(f64, f64, f64)> = finals.iter().filter(|f| f.0 == kind).map(|f| (f.1, f.2, f.3)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let upper: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1 + p.2)).collect();
        let lower: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1 - p.2)).collect();
        frame.band(kind, &upper, &lower);
        frame.curve(kind, &pts.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), true);
    }
    frame.legend(policies);
    frame.finish()
}

fn write(path: PathBuf, svg: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes one regret-versus-step plot per (lambda, K, d) overlaying every
/// policy with a shaded band of one standard error, and, for each (K, d)
/// with more than one lambda, a plot of final regret against lambda.
pub fn render_plots(summary: &[CellSummary], out: &Path) -> Result<Vec<PathBuf>> {
    if summary.is_empty() {
        return Err(Error::invalid("nothing to plot: the summary is empty"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for s in summary {
        let g = (s.cell.lambda, s.cell.k, s.cell.d);
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    for &(lambda, k, d) in &groups {
        let cells: Vec<&CellSummary> = summary
            .iter()
            .filter(|s| (s.cell.lambda, s.cell.k, s.cell.d) == (lambda, k, d))
            .filter(|s| {
                if s.points.is_empty() {
                    log::warn!(
                        "cell {} lambda={lambda} K={k} d={d} has no points; skipped",
                        s.cell.policy
                    );
                }
                !s.points.is_empty()
            })
            .collect();
        if cells.is_empty() {
            continue;
        }
        write(
            out.join(format!("regret_lambda{lambda}_K{k}_d{d}.svg")),
            &regret_plot(&cells),
            &mut written,
        )?;
    }

    let mut kd: Vec<(usize, usize)> = Vec::new();
    for &(_, k, d) in &groups {
        if !kd.contains(&(k, d)) {
            kd.push((k, d));
        }
    }
    for (k, d) in kd {
        let cells: Vec<&CellSummary> = summary
            .iter()
            .filter(|s| (s.cell.k, s.cell.d) == (k, d) && !s.points.is_empty())
            .collect();
        let mut lambdas: Vec<f64> = cells.iter().map(|c| c.cell.lambda).collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        if lambdas.len() < 2 {
            continue;
        }
        let mut policies: Vec<FeatureKind> = Vec::new();
        for c in &cells {
            if !policies.contains(&c.cell.policy) {
                policies.push(c.cell.policy);
            }
        }
        write(
            out.join(format!("final_regret_K{k}_d{d}.svg")),
            &lambda_plot(&cells, &policies),
            &mut written,
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::aggregate::{CellKey, SummaryPoint};

    fn cell(policy: FeatureKind, lambda: f64, scale: f64) -> CellSummary {
        CellSummary {
            cell: CellKey {
                policy,
                lambda,
                k: 10,
                d: 5,
            },
            points: (1..=4)
                .map(|i| SummaryPoint {
                    step: 50 * i,
                    runs: 2,
                    mean: scale * (i as f64).sqrt(),
                    stderr: Some(0.1 * scale),
                })
                .collect(),
        }
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(ticks(20000.0), vec![0.0, 5000.0, 10000.0, 15000.0, 20000.0]);
        assert_eq!(ticks(0.0), vec![0.0]);
    }

    #[test]
    fn one_curve_and_band_per_policy() {
        let summary: Vec<CellSummary> = FeatureKind::ALL
            .iter()
            .flat_map(|&p| [cell(p, 0.5, 1.0), cell(p, 1.0, 2.0)])
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let files = render_plots(&summary, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let svg = fs::read_to_string(dir.path().join("regret_lambda0.5_K10_d5.svg")).unwrap();
        assert_eq!(svg.matches(r#"class="curve""#).count(), 5);
        assert_eq!(svg.matches(r#"class="band""#).count(), 5);
        assert!(svg.contains("CascadeHybrid") && svg.contains("cumulative regret"));
        let sweep = fs::read_to_string(dir.path().join("final_regret_K10_d5.svg")).unwrap();
        assert_eq!(sweep.matches(r#"class="curve""#).count(), 5);
    }

    #[test]
    fn single_lambda_has_no_sweep_and_empty_summary_fails() {
        let dir = tempfile::tempdir().unwrap();
        let files = render_plots(&[cell(FeatureKind::Hybrid, 0.5, 1.0)], dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        assert!(render_plots(&[], dir.path()).is_err());
    }
}
