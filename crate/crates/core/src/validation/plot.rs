//! Overlaid speed histograms as a standalone SVG document.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Bin counts of `values` over `[lo, hi]` split into `bins` equal bins. The
/// upper edge belongs to the last bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    if bins == 0 {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[i] += 1;
    }
    counts
}

/// Render each labelled sample as a density histogram on shared bins.
pub fn histogram_svg(series: &[(&str, &[f64])], bins: usize, x_label: &str) -> String {
    let bins = bins.max(1);
    let all = series.iter().flat_map(|(_, v)| v.iter().copied());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    } else if hi <= lo {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let bin_w = (hi - lo) / bins as f64;
    let densities: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, v)| {
            let n = v.len().max(1) as f64;
            histogram(v, lo, hi, bins)
                .into_iter()
                .map(|c| c as f64 / (n * bin_w))
                .collect()
        })
        .collect();
    let top = densities
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - lo) / (hi - lo) * plot_w;
    let sy = |d: f64| HEIGHT - MARGIN - d / top * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, dens) in densities.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for (i, &d) in dens.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let x0 = sx(lo + i as f64 * bin_w);
            let x1 = sx(lo + (i + 1) as f64 * bin_w);
            let y = sy(d);
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                x1 - x0,
                HEIGHT - MARGIN - y
            );
        }
    }
    let base = HEIGHT - MARGIN;
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{base}" stroke="black"/>"#
    );
    for x in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-size="12" text-anchor="middle">{x:.1}</text>"#,
            sx(x),
            base + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    for (k, (label, v)) in series.iter().enumerate() {
        let y = MARGIN + 16.0 * k as f64;
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#,
            WIDTH - MARGIN - 150.0,
            y - 9.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="12">{} (n={})</text>"#,
            WIDTH - MARGIN - 135.0,
            escape(label),
            v.len()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_edges() {
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 2.0], 0.0, 1.0, 2), vec![1, 2]);
        assert_eq!(histogram(&[3.0, 3.0], 3.0, 3.0, 4), vec![2, 0, 0, 0]);
    }

    #[test]
    fn svg_is_deterministic_and_labelled() {
        let a = [10.0, 12.0, 13.5, 20.0];
        let b = [15.0, 16.0];
        let s1 = histogram_svg(&[("drone", &a), ("sat <ps>", &b)], 8, "speed (km/h)");
        let s2 = histogram_svg(&[("drone", &a), ("sat <ps>", &b)], 8, "speed (km/h)");
        assert_eq!(s1, s2);
        assert!(s1.starts_with("<svg"));
        assert!(s1.contains("sat &lt;ps&gt; (n=2)"));
        assert!(histogram_svg(&[], 5, "x").ends_with("</svg>\n"));
    }
}
