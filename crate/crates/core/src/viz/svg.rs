use std::collections::BTreeMap;
use std::fmt::Write;

use super::linkage::Dendrogram;
use super::tsne::Projection2D;

const LOW: (u8, u8, u8) = (0xf7, 0xfb, 0xff);
const HIGH: (u8, u8, u8) = (0x08, 0x30, 0x6b);
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Sequential blue scale; 0 maps to near-white and 1 to the darkest blue.
pub fn color_scale(v: f64) -> String {
    let t = if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(LOW.0, HIGH.0),
        mix(LOW.1, HIGH.1),
        mix(LOW.2, HIGH.2)
    )
}

/// Colour for each distinct group name, assigned in sorted order.
pub fn group_colors<'a>(
    groups: impl IntoIterator<Item = &'a str>,
) -> BTreeMap<&'a str, &'static str> {
    let mut names: Vec<&str> = groups.into_iter().collect();
    names.sort_unstable();
    names.dedup();
    names
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, PALETTE[i % PALETTE.len()]))
        .collect()
}

/// Annotated heatmap of a row-major `rows x cols` matrix with values in [0, 1].
pub fn heatmap_svg(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[f64],
) -> String {
    let (rows, cols) = (row_labels.len(), col_labels.len());
    let cell = 48.0;
    let left = 8.0 + 7.0 * row_labels.iter().map(|l| l.len()).max().unwrap_or(0) as f64;
    let top = 40.0 + 7.0 * col_labels.iter().map(|l| l.len()).max().unwrap_or(0) as f64;
    let width = left + cell * cols as f64 + 10.0;
    let height = top + cell * rows as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-size="13">{}</text>"#,
        escape(title)
    );
    for (j, label) in col_labels.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" transform="rotate(-60 {x:.1} {:.1})">{}</text>"#,
            top - 4.0,
            top - 4.0,
            escape(label)
        );
    }
    for (i, label) in row_labels.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 4.0,
            y + cell / 2.0 + 4.0,
            escape(label)
        );
        for j in 0..cols {
            let v = values[i * cols + j];
            let x = left + cell * j as f64;
            let _ = writeln!(
                s,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{}" stroke="#ffffff"/>"##,
                color_scale(v)
            );
            let ink = if v > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}">{v:.2}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter plot of a projection. `groups[i]` colours point `i`; points with
/// `emphasis[i]` are drawn large and outlined (sense centroids).
pub fn scatter_svg(
    title: &str,
    projection: &Projection2D,
    groups: &[String],
    emphasis: &[bool],
) -> String {
    let size: f64 = 480.0;
    let pad = 30.0;
    let xs: Vec<f64> = projection.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = projection.points.iter().map(|p| p.y).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x0, xw) = range(&xs);
    let (y0, yw) = range(&ys);
    let colors = group_colors(groups.iter().map(String::as_str));
    let mut s = String::new();
    let total = size + 2.0 * pad;
    let legend_h = 16.0 * colors.len() as f64;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="11">"#,
        total + 200.0,
        total.max(legend_h + 40.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-size="13">{}</text>"#,
        escape(title)
    );
    for (i, p) in projection.points.iter().enumerate() {
        let cx = pad + (p.x - x0) / xw * size;
        let cy = pad + size - (p.y - y0) / yw * size;
        let fill = colors[groups[i].as_str()];
        if emphasis[i] {
            let _ = writeln!(
                s,
                r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="8" fill="{fill}" stroke="#000000" stroke-width="1.5"/>"##
            );
        } else {
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{fill}" fill-opacity="0.7"/>"#
            );
        }
    }
    for (k, (name, color)) in colors.iter().enumerate() {
        let y = 40.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.0}" y="{:.0}" width="10" height="10" fill="{color}"/><text x="{:.0}" y="{:.0}">{}</text>"#,
            total + 10.0,
            y - 9.0,
            total + 26.0,
            y,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Dendrogram with leaves along the bottom, coloured by group.
pub fn dendrogram_svg(
    title: &str,
    dendrogram: &Dendrogram,
    leaf_labels: &[String],
    groups: &[String],
) -> String {
    let n = dendrogram.n_leaves;
    let order = dendrogram.leaf_order();
    let step = 12.0;
    let left = 40.0;
    let plot_h = 300.0;
    let top = 30.0;
    let base = top + plot_h;
    let width = left + step * n as f64 + 20.0;
    let max_h = dendrogram
        .merges
        .last()
        .map(|m| m.height)
        .unwrap_or(0.0)
        .max(1e-12);
    let mut x_of = vec![0.0; n + dendrogram.merges.len()];
    let mut y_of = vec![base; n + dendrogram.merges.len()];
    for (pos, &leaf) in order.iter().enumerate() {
        x_of[leaf] = left + step * (pos as f64 + 0.5);
    }
    let colors = group_colors(groups.iter().map(String::as_str));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{:.0}" font-family="sans-serif" font-size="9">"#,
        base + 120.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-size="13">{}</text>"#,
        escape(title)
    );
    for (i, m) in dendrogram.merges.iter().enumerate() {
        let id = n + i;
        let y = base - m.height / max_h * plot_h;
        x_of[id] = (x_of[m.a] + x_of[m.b]) / 2.0;
        y_of[id] = y;
        let _ = writeln!(
            s,
            r##"<path d="M{:.2},{:.2}V{y:.2}H{:.2}V{:.2}" fill="none" stroke="#333333"/>"##,
            x_of[m.a], y_of[m.a], x_of[m.b], y_of[m.b]
        );
    }
    for &leaf in &order {
        let x = x_of[leaf];
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{base:.2}" r="3" fill="{}"/><text x="{x:.2}" y="{:.2}" transform="rotate(90 {x:.2} {:.2})">{}</text>"#,
            colors[groups[leaf].as_str()],
            base + 8.0,
            base + 8.0,
            escape(&leaf_labels[leaf])
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_extremes() {
        assert_eq!(color_scale(1.0), "#08306b");
        assert_eq!(color_scale(0.0), "#f7fbff");
        assert_eq!(color_scale(7.0), "#08306b");
    }

    #[test]
    fn identity_heatmap_diagonal_is_darkest() {
        let labels: Vec<String> = vec!["a".into(), "b".into()];
        let svg = heatmap_svg("t", &labels, &labels, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(svg.matches("#08306b").count(), 2);
        assert_eq!(svg.matches(">1.00<").count(), 2);
        assert_eq!(
            svg,
            heatmap_svg("t", &labels, &labels, &[1.0, 0.0, 0.0, 1.0])
        );
        let one = heatmap_svg("single", &labels[..1], &labels[..1], &[1.0]);
        assert_eq!(one.matches("<rect").count(), 1);
        assert!(escape("<a&b>").contains("&lt;a&amp;b&gt;"));
    }
}
