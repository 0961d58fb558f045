use std::path::Path;

use plotters::prelude::*;

use distatt::runtime::SimLog;

type PlotResult = Result<(), Box<dyn std::error::Error>>;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn line_chart(path: &Path, title: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> PlotResult {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in series {
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))?;
    chart.configure_mesh().x_desc("t [s]").y_desc(y_label).draw()?;
    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

/// Writes `rbar.svg`, `xi.svg`, `ptilde.svg` and `e_norm.svg` into `dir`.
pub fn write_plots(log: &SimLog, dir: &Path, stride: usize) -> PlotResult {
    let stride = stride.max(1);
    let rows: Vec<_> = log.rows.iter().step_by(stride).chain(log.rows.last()).collect();
    let m = rows[0].rbar.len();
    let n = rows[0].ptilde.len();
    let per = |count: usize, prefix: &str, get: &dyn Fn(usize, usize) -> f64| -> Vec<(String, Vec<(f64, f64)>)> {
        (0..count)
            .map(|k| (format!("{prefix}{}", k + 1), rows.iter().enumerate().map(|(r, row)| (row.t, get(r, k))).collect()))
            .collect()
    };
    line_chart(&dir.join("rbar.svg"), "relative attitude error |R̄_k|_I", "|R̄_k|_I", &per(m, "edge ", &|r, k| rows[r].rbar[k]))?;
    line_chart(&dir.join("xi.svg"), "hybrid variables ξ_k", "ξ_k [rad]", &per(m, "edge ", &|r, k| rows[r].xi[k]))?;
    let norms: Vec<Vec<f64>> = rows.iter().map(|r| r.ptilde_norms()).collect();
    line_chart(&dir.join("ptilde.svg"), "position error ‖p̃_i‖", "‖p̃_i‖ [m]", &per(n, "agent ", &|r, i| norms[r][i]))?;
    let e: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.e_norm().max(1e-300).log10())).collect();
    line_chart(&dir.join("e_norm.svg"), "centroid-reduced position error", "log10 ‖e‖", &[("‖e‖".to_string(), e)])
}
