//! Accuracy-versus-budget chart as a self-contained SVG plus a markdown
//! digest. Output depends only on the sweep rows and the bounds, so equal
//! inputs give equal bytes.

use std::fmt::Write as _;

use super::experiment::{bound_marker, BoundsOutput};
use super::CliError;
use crate::attack::{AttackKind, SweepRow};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 590.0;
/// The legend sits to the right of the plot area, clear of the curves.
const LEGEND_X: f64 = RIGHT + 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 360.0;
const DASH: &str = "6 4";

/// Tick label with at most three decimals and no trailing zeros.
fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn color(pipeline: &str) -> &'static str {
    match pipeline {
        "THR" => "#d62728",
        "BP" => "#1f77b4",
        _ => "#555555",
    }
}

/// Pipelines in order of first appearance, each with its rows sorted by ε.
fn curves(rows: &[SweepRow]) -> Vec<(String, Vec<&SweepRow>)> {
    let mut out: Vec<(String, Vec<&SweepRow>)> = Vec::new();
    for row in rows {
        match out.iter_mut().find(|(name, _)| *name == row.pipeline) {
            Some((_, list)) => list.push(row),
            None => out.push((row.pipeline.clone(), vec![row])),
        }
    }
    for (_, list) in &mut out {
        list.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    }
    out
}

fn attack_kind(rows: &[SweepRow]) -> AttackKind {
    match rows.first().map(|r| r.norm_kind.as_str()) {
        Some("linf") => AttackKind::FgsmLinf,
        _ => AttackKind::GradAscentL2,
    }
}

struct Marker {
    pipeline: String,
    label: String,
    eps: Option<f64>,
}

fn markers(rows: &[SweepRow], bounds: &BoundsOutput) -> Vec<Marker> {
    let kind = attack_kind(rows);
    curves(rows)
        .iter()
        .filter_map(|(name, _)| {
            let report = bounds.report(name)?;
            Some(Marker {
                pipeline: name.clone(),
                label: report.bound_kind.label().to_string(),
                eps: bound_marker(report, kind, bounds.signal_dim),
            })
        })
        .collect()
}

/// Renders the chart. Fails on an empty table.
pub fn render_svg(rows: &[SweepRow], bounds: &BoundsOutput) -> Result<String, CliError> {
    if rows.is_empty() {
        return Err(CliError::Config("sweep table is empty".into()));
    }
    let curves = curves(rows);
    let markers = markers(rows, bounds);
    let x_max = rows.iter().map(|r| r.eps).fold(0.0, f64::max);
    let x_max = if x_max > 0.0 { x_max } else { 1.0 };
    let sx = |eps: f64| LEFT + (RIGHT - LEFT) * eps / x_max;
    let sy = |acc: f64| BOTTOM - (BOTTOM - TOP) * acc;
    let norm = match attack_kind(rows) {
        AttackKind::FgsmLinf => "ℓ∞",
        AttackKind::GradAscentL2 => "ℓ2",
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">Accuracy under attack ({norm} budget)</text>"#, (LEFT + RIGHT) / 2.0);

    s.push_str("<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n");
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}"/>"#);
    for i in 0..=5 {
        let eps = x_max * i as f64 / 5.0;
        let x = sx(eps);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{BOTTOM}" x2="{x:.2}" y2="{:.2}"/>"#, BOTTOM + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" stroke="none">{}</text>"#, BOTTOM + 18.0, tick(eps));
    }
    for i in 0..=4 {
        let acc = i as f64 / 4.0;
        let y = sy(acc);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none">{}%</text>"#, LEFT - 8.0, y + 4.0, i * 25);
    }
    s.push_str("</g>\n");
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">attack budget ε</text>"#, (LEFT + RIGHT) / 2.0, BOTTOM + 40.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">accuracy</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    );

    s.push_str("<g id=\"curves\" fill=\"none\" stroke-width=\"2\">\n");
    for (name, list) in &curves {
        let points: Vec<String> = list.iter().map(|r| format!("{:.2},{:.2}", sx(r.eps), sy(r.accuracy))).collect();
        let _ = writeln!(s, r#"<polyline class="curve" data-pipeline="{name}" stroke="{}" points="{}"/>"#, color(name), points.join(" "));
    }
    s.push_str("</g>\n");

    s.push_str("<g id=\"bounds\" stroke-width=\"1.5\">\n");
    for m in &markers {
        if let Some(eps) = m.eps.filter(|&e| e <= x_max) {
            let x = sx(eps);
            let _ = writeln!(
                s,
                r#"<line class="bound" data-pipeline="{}" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{BOTTOM}" stroke="{}" stroke-dasharray="{DASH}"/>"#,
                m.pipeline,
                color(&m.pipeline)
            );
        }
    }
    s.push_str("</g>\n");

    s.push_str("<g id=\"legend\">\n");
    let mut y = TOP + 14.0;
    let lx = LEGEND_X;
    for (name, _) in &curves {
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/>"#, lx + 24.0, color(name));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{name} empirical</text>"#, lx + 30.0, y + 4.0);
        y += 18.0;
    }
    for m in &markers {
        let text = match m.eps {
            Some(eps) if eps <= x_max => format!("{} bound ε = {eps:.4}", m.label),
            Some(eps) => format!("{} bound ε = {eps:.4} (beyond axis, not drawn)", m.label),
            None => format!("{} bound infeasible (not drawn)", m.label),
        };
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="1.5" stroke-dasharray="{DASH}"/>"#,
            lx + 24.0,
            color(&m.pipeline)
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{text}</text>"#, lx + 30.0, y + 4.0);
        y += 18.0;
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

/// Markdown digest: one accuracy column per pipeline plus the bound lines.
pub fn render_markdown(rows: &[SweepRow], bounds: &BoundsOutput) -> Result<String, CliError> {
    if rows.is_empty() {
        return Err(CliError::Config("sweep table is empty".into()));
    }
    let curves = curves(rows);
    let markers = markers(rows, bounds);
    let mut s = String::from("# Accuracy under attack\n\n");
    let _ = writeln!(
        s,
        "{} signals, budget norm `{}`, seed {}, coherence {}, dataset margin {:.4}.\n",
        rows[0].n_signals,
        rows[0].norm_kind,
        rows[0].seed,
        bounds.layers.iter().map(|l| format!("{:.4}", l.mu)).collect::<Vec<_>>().join(" / "),
        bounds.margin_star
    );
    s.push_str("## Certified budgets\n\n| pipeline | bound | status | ε (attack units) |\n|---|---|---|---|\n");
    for m in &markers {
        let report = bounds.report(&m.pipeline);
        let status = report.map_or("unknown".to_string(), |r| format!("{:?}", r.status).to_lowercase());
        let eps = m.eps.map_or("not drawn".to_string(), |e| format!("{e:.6}"));
        let _ = writeln!(s, "| {} | {} | {status} | {eps} |", m.pipeline, m.label);
    }
    s.push_str("\n## Accuracy\n\n| ε |");
    for (name, _) in &curves {
        let _ = write!(s, " {name} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(curves.len()));
    s.push('\n');
    let mut grid: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for eps in grid {
        let _ = write!(s, "| {eps} |");
        for (_, list) in &curves {
            match list.iter().find(|r| r.eps == eps) {
                Some(r) => {
                    let _ = write!(s, " {:.1}% |", 100.0 * r.accuracy);
                }
                None => s.push_str(" |"),
            }
        }
        s.push('\n');
    }
    s.push_str("\n## Breakdown\n\n");
    for (name, list) in &curves {
        let below = |t: f64| list.iter().find(|r| r.accuracy < t).map_or("none in grid".to_string(), |r| r.eps.to_string());
        let _ = writeln!(s, "- {name}: first ε below 100%: {}; first ε below 95%: {}", below(1.0), below(0.95));
    }
    Ok(s)
}
