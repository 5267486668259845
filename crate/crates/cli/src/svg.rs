//! Minimal deterministic SVG line plots: fixed canvas, fixed palette, no
//! randomness, so identical inputs give byte-identical output.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Axes {
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Render one or more series as polylines on shared axes. Every series needs
/// at least two points. With `log_y`, non-positive samples are dropped from
/// the plot (they have no image on a log axis).
pub fn render_svg(series: &[Series], axes: &Axes) -> Result<String, String> {
    if series.is_empty() {
        return Err("no series to plot".into());
    }
    for s in series {
        if s.points.len() < 2 {
            return Err(format!("series {:?} has fewer than 2 points", s.label));
        }
    }
    let ty = |y: f64| -> Option<f64> {
        if axes.log_y {
            if y > 0.0 { Some(y.log10()) } else { None }
        } else {
            Some(y)
        }
    };
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            if let Some(yt) = ty(y) {
                y_min = y_min.min(yt);
                y_max = y_max.max(yt);
            }
        }
    }
    if !(x_min.is_finite() && y_min.is_finite()) {
        return Err("no plottable points".into());
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // axes
    out.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN),
        fmt(HEIGHT - MARGIN),
        fmt(WIDTH - MARGIN),
        fmt(HEIGHT - MARGIN)
    ));
    out.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN),
        fmt(MARGIN),
        fmt(MARGIN),
        fmt(HEIGHT - MARGIN)
    ));
    // ticks
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let yv = y_min + f * (y_max - y_min);
        let xpix = px(xv);
        let ypix = py(yv);
        out.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(xpix),
            fmt(HEIGHT - MARGIN),
            fmt(xpix),
            fmt(HEIGHT - MARGIN + 5.0)
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{:.3e}</text>\n",
            fmt(xpix),
            fmt(HEIGHT - MARGIN + 18.0),
            xv
        ));
        out.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN - 5.0),
            fmt(ypix),
            fmt(MARGIN),
            fmt(ypix)
        ));
        let label = if axes.log_y {
            format!("1e{yv:.2}")
        } else {
            format!("{yv:.3e}")
        };
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{label}</text>\n",
            fmt(MARGIN - 8.0),
            fmt(ypix + 3.0)
        ));
    }
    // axis labels
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        fmt(WIDTH / 2.0),
        fmt(HEIGHT - 15.0),
        xml_escape(&axes.x_label)
    ));
    out.push_str(&format!(
        "  <text x=\"15\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 15 {})\">{}</text>\n",
        fmt(HEIGHT / 2.0),
        fmt(HEIGHT / 2.0),
        xml_escape(&axes.y_label)
    ));
    // data
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter_map(|&(x, y)| ty(y).map(|yt| format!("{},{}", fmt(px(x)), fmt(py(yt)))))
            .collect();
        if pts.len() < 2 {
            return Err(format!("series {:?} has fewer than 2 plottable points", s.label));
        }
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        // legend entry
        let ly = MARGIN + 16.0 * k as f64;
        out.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
            fmt(WIDTH - MARGIN - 130.0),
            fmt(ly)
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fmt(WIDTH - MARGIN - 115.0),
            fmt(ly + 9.0),
            xml_escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
