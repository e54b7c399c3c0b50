//! Static SVG emission: a two-curve recurrence chart and a position-by-step
//! heatmap with a logarithmic color scale. Written directly, with fixed
//! float formatting, so identical inputs produce byte-identical files.

use qwalk_core::{Error, RecurrenceSeries, Result};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn svg_header(out: &mut String, title: &str, provenance: &str) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!("<!-- {provenance} -->\n"));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));
    out.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{}\" height=\"{}\" \
         fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n",
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    ));
}

/// Two recurrence curves against the step count, with a dashed reference
/// line at 2/pi.
pub fn recurrence_chart(series: &RecurrenceSeries, provenance: &str) -> Result<String> {
    if series.horizon() == 0 || (!series.has_continual() && !series.has_reset()) {
        return Err(Error::EmptySeries);
    }
    let horizon = series.horizon() as f64;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |t: f64| MARGIN_LEFT + t / horizon * plot_w;
    let y_of = |p: f64| MARGIN_TOP + (1.0 - p) * plot_h;

    let mut out = String::new();
    svg_header(
        &mut out,
        "Recurrence probability by observation scheme",
        provenance,
    );

    // axis ticks
    for i in 0..=5 {
        let p = i as f64 / 5.0;
        let y = y_of(p);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT - 5.0),
            fmt(y),
            fmt(MARGIN_LEFT),
            fmt(y)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 9.0),
            fmt(y + 4.0),
            fmt(p)
        ));
        let t = horizon * p;
        let x = x_of(t);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(x),
            fmt(HEIGHT - MARGIN_BOTTOM),
            fmt(x),
            fmt(HEIGHT - MARGIN_BOTTOM + 5.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(HEIGHT - MARGIN_BOTTOM + 20.0),
            (t.round() as i64)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">steps T</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 16.0)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">recurrence probability</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0)
    ));

    // reference line at 2/pi
    let limit = std::f64::consts::FRAC_2_PI;
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" \
         stroke-dasharray=\"6,4\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(y_of(limit)),
        fmt(WIDTH - MARGIN_RIGHT),
        fmt(y_of(limit))
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         fill=\"gray\">2/&#960;</text>\n",
        fmt(WIDTH - MARGIN_RIGHT - 34.0),
        fmt(y_of(limit) - 6.0)
    ));

    let polyline = |values: &dyn Fn(usize) -> f64, color: &str| -> String {
        let points: Vec<String> = (1..=series.horizon())
            .map(|t| format!("{},{}", fmt(x_of(t as f64)), fmt(y_of(values(t)))))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        )
    };
    if series.has_reset() {
        out.push_str(&polyline(&|t| series.reset(t), "#c0392b"));
    }
    if series.has_continual() {
        out.push_str(&polyline(&|t| series.continual(t), "#2155a8"));
    }

    // legend
    let mut legend_y = MARGIN_TOP + 16.0;
    for (label, color, show) in [
        ("reset scheme", "#c0392b", series.has_reset()),
        ("continual scheme", "#2155a8", series.has_continual()),
    ] {
        if !show {
            continue;
        }
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt(MARGIN_LEFT + 12.0),
            fmt(legend_y),
            fmt(MARGIN_LEFT + 44.0),
            fmt(legend_y)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>\n",
            fmt(MARGIN_LEFT + 50.0),
            fmt(legend_y + 4.0)
        ));
        legend_y += 18.0;
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One row of heatmap data: step index and the (position, probability)
/// pairs occupied at that step.
pub type HeatmapRow = (usize, Vec<(i64, f64)>);

/// Position-by-step probability heatmap on a logarithmic color scale, one
/// rectangle per nonzero cell.
pub fn heatmap_chart(rows: &[HeatmapRow], title: &str, provenance: &str) -> Result<String> {
    if rows.is_empty() || rows.iter().all(|(_, cells)| cells.is_empty()) {
        return Err(Error::EmptySeries);
    }
    let max_step = rows.iter().map(|(t, _)| *t).max().unwrap_or(0).max(1);
    let reach = rows
        .iter()
        .flat_map(|(_, cells)| cells.iter().map(|(x, _)| x.abs()))
        .max()
        .unwrap_or(1)
        .max(1);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let cell_w = plot_w / (2.0 * reach as f64 + 1.0);
    let cell_h = plot_h / (max_step as f64 + 1.0);

    let mut out = String::new();
    svg_header(&mut out, title, provenance);

    for (t, cells) in rows {
        for (x, p) in cells {
            if *p <= 0.0 {
                continue;
            }
            // log scale over six decades
            let norm = ((p.log10() + 6.0) / 6.0).clamp(0.0, 1.0);
            let r = (13.0 + norm * (240.0 - 13.0)).round() as u8;
            let g = (8.0 + norm * (249.0 - 8.0)).round() as u8;
            let b = (135.0 + norm * (33.0 - 135.0)).round() as u8;
            let cx = MARGIN_LEFT + ((x + reach) as f64) * cell_w;
            let cy = MARGIN_TOP + (*t as f64) * cell_h;
            out.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({r},{g},{b})\"/>\n",
                fmt(cx),
                fmt(cy),
                fmt(cell_w),
                fmt(cell_h)
            ));
        }
    }

    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">position x</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 16.0)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">step t</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0)
    ));
    for x_label in [-reach, 0, reach] {
        let cx = MARGIN_LEFT + ((x_label + reach) as f64 + 0.5) * cell_w;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{x_label}</text>\n",
            fmt(cx),
            fmt(HEIGHT - MARGIN_BOTTOM + 20.0)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}
