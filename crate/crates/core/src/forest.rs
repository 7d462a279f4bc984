//! Forest-plot rendering: per-study markers with interval whiskers and
//! pooled diamonds, as plain text or SVG. Both renderers are pure
//! functions of their inputs; rendering the same rows twice yields
//! byte-identical output.

use crate::effects::{study_effects, CorrectionPolicy, EffectError};
use crate::model::{z_quantile, Measure, MetaDataset, PooledEstimate};

/// Rounds to `digits` significant figures for table display. Values far
/// from 1 switch to scientific notation.
pub fn format_sig(value: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if value == 0.0 {
        return "0".into();
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i32;
    if magnitude >= digits as i32 || magnitude < -4 {
        format!("{:.*e}", digits - 1, value)
    } else {
        let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
        format!("{:.*}", decimals, value)
    }
}

/// One line of a forest plot, on the reporting scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub point: f64,
    pub low: f64,
    pub high: f64,
    pub kind: RowKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Study,
    Pooled,
}

/// Per-study rows: points and normal intervals on the reporting scale.
pub fn study_rows(
    dataset: &MetaDataset,
    measure: Measure,
    policy: CorrectionPolicy,
    ci_level: f64,
) -> Result<Vec<ForestRow>, EffectError> {
    let z = z_quantile(ci_level);
    Ok(study_effects(dataset, measure, policy)?
        .into_iter()
        .map(|e| {
            let half = z * e.sigma2_hat.sqrt();
            let (point, low, high) = if e.measure.reports_exponentiated() {
                (e.theta_hat.exp(), (e.theta_hat - half).exp(), (e.theta_hat + half).exp())
            } else {
                (e.theta_hat, e.theta_hat - half, e.theta_hat + half)
            };
            ForestRow { label: e.label, point, low, high, kind: RowKind::Study }
        })
        .collect())
}

/// A pooled estimate as a diamond row.
pub fn pooled_row(estimate: &PooledEstimate) -> ForestRow {
    ForestRow {
        label: estimate.method.to_string(),
        point: estimate.point,
        low: estimate.ci_low,
        high: estimate.ci_high,
        kind: RowKind::Pooled,
    }
}

/// Axis position of `value`: ratio measures are laid out on a log axis.
fn axis_pos(measure: Measure, value: f64) -> f64 {
    if measure.is_ratio() && !matches!(measure, Measure::LogRr | Measure::LogOr) {
        value.ln()
    } else {
        value
    }
}

fn axis_range(rows: &[ForestRow], measure: Measure) -> (f64, f64) {
    let null = axis_pos(measure, measure.null_value());
    let mut lo = null;
    let mut hi = null;
    for r in rows {
        lo = lo.min(axis_pos(measure, r.low));
        hi = hi.max(axis_pos(measure, r.high));
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Text forest plot. Each row shows the label, the point with its
/// interval, and a fixed-width track where `-` spans the interval, `o`
/// marks a study point, `#` a pooled point and `:` the no-effect line.
/// A footer line repeats the no-effect column, which whiskers may have
/// covered in every data row.
pub fn render_text_forest(rows: &[ForestRow], measure: Measure, track_width: usize) -> String {
    let track_width = track_width.max(11);
    let (axis_lo, axis_hi) = axis_range(rows, measure);
    let to_col = |v: f64| -> usize {
        let frac = (axis_pos(measure, v) - axis_lo) / (axis_hi - axis_lo);
        ((frac * (track_width - 1) as f64).round() as isize)
            .clamp(0, track_width as isize - 1) as usize
    };
    // axis_range seeds on the null value, so this is always in bounds
    let null_col = to_col(measure.null_value());

    let label_width = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let fmt_est = |r: &ForestRow| {
        format!(
            "{} [{}, {}]",
            format_sig(r.point, 4),
            format_sig(r.low, 4),
            format_sig(r.high, 4)
        )
    };
    let measure_name = measure.to_string();
    let footer_note = format!("no effect = {}", format_sig(measure.null_value(), 4));
    let est_width = rows
        .iter()
        .map(|r| fmt_est(r).len())
        .max()
        .unwrap_or(0)
        .max(measure_name.len())
        .max(footer_note.len());

    let mut out = String::new();
    out.push_str(&format!(
        "{:<label_width$}  {:<est_width$}  {}\n",
        "study",
        measure_name,
        "" // track header left blank
    ));
    for r in rows {
        let mut track = vec![' '; track_width];
        track[null_col] = ':';
        let (c_lo, c_hi) = (to_col(r.low), to_col(r.high));
        for cell in track.iter_mut().take(c_hi + 1).skip(c_lo) {
            *cell = '-';
        }
        let marker = if r.kind == RowKind::Pooled { '#' } else { 'o' };
        track[to_col(r.point)] = marker;
        out.push_str(&format!(
            "{:<label_width$}  {:<est_width$}  {}\n",
            r.label,
            fmt_est(r),
            track.iter().collect::<String>()
        ));
    }
    let mut axis = vec![' '; track_width];
    axis[null_col] = ':';
    out.push_str(&format!(
        "{:<label_width$}  {:<est_width$}  {}\n",
        "",
        footer_note,
        axis.iter().collect::<String>()
    ));
    out
}

const SVG_WIDTH: f64 = 760.0;
const ROW_HEIGHT: f64 = 26.0;
const TOP_MARGIN: f64 = 46.0;
const LABEL_X: f64 = 12.0;
const TRACK_X0: f64 = 210.0;
const TRACK_X1: f64 = 560.0;
const VALUE_X: f64 = 572.0;

/// SVG forest plot on a fixed canvas. Element order follows row order, all
/// coordinates are rounded to two decimals, and no identifiers or
/// timestamps are generated, so output is byte-stable for fixed input.
pub fn render_svg_forest(rows: &[ForestRow], measure: Measure, title: &str) -> String {
    let (axis_lo, axis_hi) = axis_range(rows, measure);
    let to_x = |v: f64| -> f64 {
        let frac = (axis_pos(measure, v) - axis_lo) / (axis_hi - axis_lo);
        TRACK_X0 + frac.clamp(0.0, 1.0) * (TRACK_X1 - TRACK_X0)
    };
    let height = TOP_MARGIN + rows.len() as f64 * ROW_HEIGHT + 34.0;
    let xml_escape = |s: &str| {
        s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{height:.2}\" \
         viewBox=\"0 0 {SVG_WIDTH} {height:.2}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{LABEL_X}\" y=\"20\" font-size=\"14\">{}</text>\n",
        xml_escape(title)
    ));

    // no-effect reference line
    let null_x = to_x(measure.null_value());
    let plot_bottom = TOP_MARGIN + rows.len() as f64 * ROW_HEIGHT;
    svg.push_str(&format!(
        "  <line x1=\"{null_x:.2}\" y1=\"{TOP_MARGIN}\" x2=\"{null_x:.2}\" y2=\"{plot_bottom:.2}\" \
         stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{null_x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#555555\">{}</text>\n",
        plot_bottom + 16.0,
        format_sig(measure.null_value(), 4)
    ));

    for (i, r) in rows.iter().enumerate() {
        let y = TOP_MARGIN + (i as f64 + 0.5) * ROW_HEIGHT;
        let (x_lo, x_hi, x_pt) = (to_x(r.low), to_x(r.high), to_x(r.point));
        svg.push_str(&format!(
            "  <text x=\"{LABEL_X}\" y=\"{:.2}\">{}</text>\n",
            y + 4.0,
            xml_escape(&r.label)
        ));
        svg.push_str(&format!(
            "  <line x1=\"{x_lo:.2}\" y1=\"{y:.2}\" x2=\"{x_hi:.2}\" y2=\"{y:.2}\" stroke=\"#333333\"/>\n"
        ));
        match r.kind {
            RowKind::Study => {
                svg.push_str(&format!(
                    "  <circle cx=\"{x_pt:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"#1f6fb2\"/>\n"
                ));
            }
            RowKind::Pooled => {
                svg.push_str(&format!(
                    "  <polygon points=\"{:.2},{y:.2} {x_pt:.2},{:.2} {:.2},{y:.2} {x_pt:.2},{:.2}\" \
                     fill=\"#b2451f\"/>\n",
                    x_pt - 6.0,
                    y - 6.0,
                    x_pt + 6.0,
                    y + 6.0
                ));
            }
        }
        svg.push_str(&format!(
            "  <text x=\"{VALUE_X}\" y=\"{:.2}\">{} [{}, {}]</text>\n",
            y + 4.0,
            format_sig(r.point, 4),
            format_sig(r.low, 4),
            format_sig(r.high, 4)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
