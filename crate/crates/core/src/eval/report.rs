//! Result persistence and static figures.
//!
//! Sweep results are stored as append-only CSV (one row per cell), metric
//! tables as CSV keyed by (method, design, prior, delta1, look, true_rr),
//! and figures as self-contained SVG line charts.

use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::{CellKey, CellValue, MetricTable, OutcomeId, ResultsStore};
use crate::grid::BetaGrid;
use crate::maxsprt::Method;

fn method_from_label(s: &str) -> Result<Method> {
    match s {
        "maxsprt" => Ok(Method::Maxsprt),
        "bayes" => Ok(Method::Bayes),
        "bbc" => Ok(Method::Bbc),
        other => Err(Error::Parse(format!("unknown method `{other}`"))),
    }
}

fn outcome_label(outcome: OutcomeId) -> String {
    outcome.to_string()
}

fn outcome_from_label(s: &str) -> Result<OutcomeId> {
    if let Some(rest) = s.strip_prefix("nc") {
        return rest
            .parse()
            .map(OutcomeId::Negative)
            .map_err(|_| Error::Parse(format!("bad outcome `{s}`")));
    }
    if let Some(rest) = s.strip_prefix("pc") {
        if let Some((parent, rr)) = rest.split_once('r') {
            let parent = parent.parse().map_err(|_| Error::Parse(format!("bad outcome `{s}`")))?;
            let rr_index = rr.parse().map_err(|_| Error::Parse(format!("bad outcome `{s}`")))?;
            return Ok(OutcomeId::Positive { parent, rr_index });
        }
    }
    Err(Error::Parse(format!("bad outcome `{s}`")))
}

/// Write the store as CSV. `header_comments` lines are prefixed with `# `;
/// the store's own metadata lines follow so the file round-trips.
pub fn write_results_csv<W: Write>(
    out: &mut W,
    store: &ResultsStore,
    header_comments: &[String],
) -> Result<()> {
    for line in header_comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "# designs={}", store.design_labels.join(";"))?;
    let priors: Vec<String> = store.prior_variances.iter().map(|p| p.to_string()).collect();
    writeln!(out, "# priors={}", priors.join(";"))?;
    let rrs: Vec<String> = store.positive_rr.iter().map(|p| p.to_string()).collect();
    writeln!(out, "# positive_rr={}", rrs.join(";"))?;
    writeln!(out, "# n_looks={}", store.n_looks)?;
    writeln!(
        out,
        "seed,design,method,prior,outcome,look,statistic,threshold,point,lo95,hi95,estimable,flagged,skipped,true_beta"
    )?;
    for (k, v) in store.iter() {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{},{},{},{:.9}",
            k.seed,
            k.design,
            k.method.label(),
            k.prior,
            outcome_label(k.outcome),
            k.look,
            v.statistic,
            v.threshold,
            v.point,
            v.lo95,
            v.hi95,
            v.estimable as u8,
            v.flagged as u8,
            v.skipped as u8,
            v.true_beta,
        )?;
    }
    Ok(())
}

/// Read a results CSV back into a store.
pub fn read_results_csv<R: std::io::BufRead>(input: R) -> Result<ResultsStore> {
    let mut store = ResultsStore::default();
    for line in input.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# designs=") {
            store.design_labels = rest.split(';').map(str::to_string).collect();
        } else if let Some(rest) = line.strip_prefix("# priors=") {
            store.prior_variances = parse_list(rest)?;
        } else if let Some(rest) = line.strip_prefix("# positive_rr=") {
            store.positive_rr = parse_list(rest)?;
        } else if let Some(rest) = line.strip_prefix("# n_looks=") {
            store.n_looks =
                rest.parse().map_err(|_| Error::Parse("bad n_looks header".into()))?;
        } else if line.starts_with('#') || line.starts_with("seed,") || line.trim().is_empty() {
            continue;
        } else {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 15 {
                return Err(Error::Parse(format!("expected 15 fields: {line}")));
            }
            let key = CellKey {
                seed: f[0].parse().map_err(|_| Error::Parse("bad seed".into()))?,
                design: f[1].parse().map_err(|_| Error::Parse("bad design".into()))?,
                method: method_from_label(f[2])?,
                prior: f[3].parse().map_err(|_| Error::Parse("bad prior".into()))?,
                outcome: outcome_from_label(f[4])?,
                look: f[5].parse().map_err(|_| Error::Parse("bad look".into()))?,
            };
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
            };
            let value = CellValue {
                statistic: num(f[6])?,
                threshold: num(f[7])?,
                point: num(f[8])?,
                lo95: num(f[9])?,
                hi95: num(f[10])?,
                estimable: f[11] == "1",
                flagged: f[12] == "1",
                skipped: f[13] == "1",
                true_beta: num(f[14])?,
            };
            store.append(key, value);
        }
    }
    Ok(store)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .map(|x| x.parse().map_err(|_| Error::Parse(format!("bad list entry `{x}`"))))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Write the metric table as CSV.
pub fn write_metrics_csv<W: Write>(
    out: &mut W,
    table: &MetricTable,
    header_comments: &[String],
) -> Result<()> {
    for line in header_comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(
        out,
        "method,design,prior,delta1,look,true_rr,type1,type2,sensitivity,specificity,ttd25,ttd50,mse,coverage95,non_estimable_rate,low_evidence,n_cells"
    )?;
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{},{}",
            r.method.label(),
            r.design,
            opt(r.prior_variance),
            opt(r.delta1),
            r.look,
            r.true_rr,
            opt(r.type1),
            opt(r.type2),
            opt(r.sensitivity),
            opt(r.specificity),
            r.ttd25.map(|t| t.to_string()).unwrap_or_default(),
            r.ttd50.map(|t| t.to_string()).unwrap_or_default(),
            opt(r.mse),
            opt(r.coverage95),
            r.non_estimable_rate,
            r.low_evidence as u8,
            r.n_cells,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// SVG line charts
// ---------------------------------------------------------------------------

/// One plotted series.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render a line chart as a standalone SVG document.
pub fn line_chart_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_range: Option<(f64, f64)>,
) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let (x0, x1) = bounds(&xs, (0.0, 1.0));
    let (y0, y1) = y_range.unwrap_or_else(|| pad(bounds(&ys, (0.0, 1.0))));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0).max(1e-12) * plot_w;
    let py = |y: f64| MARGIN_T + plot_h - (y - y0) / (y1 - y0).max(1e-12) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" font-weight=\"bold\">{}</text>\n",
        MARGIN_L,
        esc(title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        MARGIN_T + plot_h
    ));
    // ticks
    for i in 0..=5 {
        let xv = x0 + (x1 - x0) * i as f64 / 5.0;
        let yv = y0 + (y1 - y0) * i as f64 / 5.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            px(xv),
            MARGIN_T + plot_h + 18.0,
            trim_num(xv)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            py(yv) + 4.0,
            trim_num(yv)
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{:.1}\" x2=\"{}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            MARGIN_L,
            py(yv),
            MARGIN_L + plot_w,
            py(yv)
        ));
    }
    // axis labels
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        esc(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        esc(y_label)
    ));
    // series
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        if pts.len() > 1 {
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                color,
                pts.join(" ")
            ));
        }
        for p in &pts {
            let mut it = p.split(',');
            let (cx, cy) = (it.next().unwrap(), it.next().unwrap());
            svg.push_str(&format!(
                "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"2.5\" fill=\"{color}\"/>\n"
            ));
        }
        let ly = MARGIN_T + 16.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"4\" fill=\"{}\"/>\n",
            MARGIN_L + plot_w + 12.0,
            ly,
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            MARGIN_L + plot_w + 30.0,
            ly + 6.0,
            esc(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Stacked density traces over looks (the bias-distribution evolution
/// figure): each look's curve is drawn on its own baseline.
pub fn ridgeline_svg(title: &str, densities: &[(String, Vec<f64>)]) -> String {
    let rows = densities.len().max(1);
    let row_h = 42.0;
    let height = MARGIN_T + MARGIN_B + row_h * rows as f64 + 40.0;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let dmax = densities
        .iter()
        .flat_map(|(_, d)| d.iter().cloned())
        .fold(f64::MIN_POSITIVE, f64::max);
    let px = |beta: f64| MARGIN_L + (beta - BetaGrid::MIN) / (BetaGrid::MAX - BetaGrid::MIN) * plot_w;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" font-weight=\"bold\">{}</text>\n",
        MARGIN_L,
        esc(title)
    ));
    // zero-effect reference line
    svg.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n",
        px(0.0),
        MARGIN_T,
        px(0.0),
        height - MARGIN_B + 10.0
    ));
    for (i, (name, density)) in densities.iter().enumerate() {
        let base = MARGIN_T + row_h * (i as f64 + 1.0);
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = density
            .iter()
            .enumerate()
            .map(|(j, d)| {
                format!("{:.1},{:.1}", px(BetaGrid::beta(j)), base - d / dmax * row_h * 1.6)
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            base,
            esc(name)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">log rate ratio</text>\n",
        MARGIN_L + plot_w / 2.0,
        height - 14.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64], fallback: (f64, f64)) -> (f64, f64) {
    if values.is_empty() {
        return fallback;
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    let d = (hi - lo) * 0.05;
    (lo - d, hi + d)
}

fn trim_num(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Figures for a metric table: Type 1 error curves per design and power
/// curves per (design, effect size). Returns (file name, svg) pairs.
pub fn metric_figures(table: &MetricTable) -> Vec<(String, String)> {
    let mut figures = Vec::new();
    let mut designs: Vec<String> = table.rows.iter().map(|r| r.design.clone()).collect();
    designs.sort();
    designs.dedup();
    for design in &designs {
        // Type 1 per method
        let mut series = Vec::new();
        for method in [Method::Maxsprt, Method::Bayes, Method::Bbc] {
            let points: Vec<(f64, f64)> = table
                .rows
                .iter()
                .filter(|r| {
                    r.design == *design && r.method == method && r.true_rr == 1.0
                })
                .filter_map(|r| r.type1.map(|t| (r.look as f64, t)))
                .collect();
            if !points.is_empty() {
                series.push(Series { name: method.label().to_string(), points });
            }
        }
        if !series.is_empty() {
            figures.push((
                format!("type1_{design}.svg"),
                line_chart_svg(
                    &format!("Type 1 error over looks ({design})"),
                    "analysis month",
                    "cumulative Type 1 error",
                    &series,
                    Some((0.0, 1.0)),
                ),
            ));
        }
        // power per effect size
        let mut rrs: Vec<f64> =
            table.rows.iter().filter(|r| r.true_rr > 1.0).map(|r| r.true_rr).collect();
        rrs.sort_by(f64::total_cmp);
        rrs.dedup();
        for rr in rrs {
            let mut series = Vec::new();
            for method in [Method::Maxsprt, Method::Bayes, Method::Bbc] {
                let points: Vec<(f64, f64)> = table
                    .rows
                    .iter()
                    .filter(|r| {
                        r.design == *design && r.method == method && r.true_rr == rr
                    })
                    .filter_map(|r| r.sensitivity.map(|s| (r.look as f64, s)))
                    .collect();
                if !points.is_empty() {
                    series.push(Series { name: method.label().to_string(), points });
                }
            }
            if !series.is_empty() {
                figures.push((
                    format!("power_rr{rr}_{design}.svg"),
                    line_chart_svg(
                        &format!("Power over looks, RR = {rr} ({design})"),
                        "analysis month",
                        "power",
                        &series,
                        Some((0.0, 1.0)),
                    ),
                ));
            }
        }
    }
    figures
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{CellKey, CellValue};

    fn small_store() -> ResultsStore {
        let mut store = ResultsStore::new(vec!["hc-unadj-4w".into()], vec![4.0], vec![2.0], 2);
        for look in 1..=2u8 {
            store.append(
                CellKey {
                    seed: 0,
                    design: 0,
                    method: Method::Maxsprt,
                    prior: 0,
                    outcome: OutcomeId::Negative(3),
                    look,
                },
                CellValue {
                    statistic: 1.5,
                    threshold: 3.0,
                    point: 0.1,
                    lo95: -0.4,
                    hi95: 0.6,
                    estimable: true,
                    flagged: false,
                    skipped: false,
                    true_beta: 0.0,
                },
            );
            store.append(
                CellKey {
                    seed: 0,
                    design: 0,
                    method: Method::Bbc,
                    prior: 0,
                    outcome: OutcomeId::Positive { parent: 3, rr_index: 0 },
                    look,
                },
                CellValue {
                    statistic: 0.93,
                    threshold: f64::NAN,
                    point: 0.69,
                    lo95: 0.1,
                    hi95: 1.3,
                    estimable: true,
                    flagged: false,
                    skipped: false,
                    true_beta: 0.696,
                },
            );
        }
        store
    }

    #[test]
    fn results_csv_round_trip() {
        let store = small_store();
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &store, &["manifest=abc123".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# manifest=abc123\n"));
        let back = read_results_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.len(), store.len());
        assert_eq!(back.design_labels, store.design_labels);
        assert_eq!(back.n_looks, 2);
        for ((ka, va), (kb, vb)) in store.iter().zip(back.iter()) {
            assert_eq!(ka, kb);
            assert!((va.statistic - vb.statistic).abs() < 1e-9);
            assert_eq!(va.estimable, vb.estimable);
        }
    }

    #[test]
    fn metrics_csv_has_a_row_per_key() {
        let store = small_store();
        let table = crate::eval::compute_metrics(&store, &[0.9]);
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &table, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), table.rows.len() + 1);
        assert!(text.lines().next().unwrap().starts_with("method,design,prior"));
    }

    /// Minimal well-formedness check: every opened tag is closed in order.
    fn assert_well_formed_xml(svg: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = svg;
        while let Some(start) = rest.find('<') {
            rest = &rest[start + 1..];
            if let Some(end) = rest.find('>') {
                let tag = &rest[..end];
                rest = &rest[end + 1..];
                if tag.starts_with('?') || tag.ends_with('/') || tag.starts_with('!') {
                    continue;
                }
                if let Some(name) = tag.strip_prefix('/') {
                    let open = stack.pop().expect("close without open");
                    assert_eq!(open, name, "mismatched tags");
                } else {
                    let name: String =
                        tag.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
                    stack.push(name);
                }
            } else {
                panic!("unterminated tag");
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn line_chart_is_valid_svg() {
        let series = vec![
            Series { name: "a".into(), points: vec![(1.0, 0.1), (2.0, 0.3), (3.0, 0.2)] },
            Series { name: "b & c".into(), points: vec![(1.0, 0.5), (3.0, 0.9)] },
        ];
        let svg = line_chart_svg("Test <chart>", "x", "y", &series, None);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.contains("<svg"));
        assert_well_formed_xml(&svg);
    }

    #[test]
    fn ridgeline_is_valid_svg() {
        let d1: Vec<f64> = BetaGrid::betas().map(|b| (-b * b).exp()).collect();
        let d2: Vec<f64> = BetaGrid::betas().map(|b| (-(b - 0.3) * (b - 0.3)).exp()).collect();
        let svg = ridgeline_svg("Bias over time", &[("month 1".into(), d1), ("month 2".into(), d2)]);
        assert_well_formed_xml(&svg);
    }

    #[test]
    fn figures_generated_for_both_metric_kinds() {
        let store = small_store();
        let table = crate::eval::compute_metrics(&store, &[0.9]);
        let figs = metric_figures(&table);
        assert!(figs.iter().any(|(name, _)| name.starts_with("type1_")));
        assert!(figs.iter().any(|(name, _)| name.starts_with("power_")));
        for (_, svg) in figs {
            assert_well_formed_xml(&svg);
        }
    }
}
