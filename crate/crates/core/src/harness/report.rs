//! Result emission: CSV (round-trippable), a markdown table, and an SVG
//! chart of MSE against bit width per method with the full-precision
//! baseline as a reference line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{EvalRow, HyperPoint, Method, ResultTable, FP_BITS};
use crate::stats::significantly_different;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_MD: &str = "results.md";
pub const CURVES_SVG: &str = "curves.svg";

#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub csv: PathBuf,
    pub markdown: PathBuf,
    pub svg: PathBuf,
}

/// Writes results.csv, results.md and curves.svg into `out_dir`.
pub fn emit_report(table: &ResultTable, out_dir: &Path) -> Result<EmittedFiles> {
    if table.rows.is_empty() {
        return Err(Error::NothingToReport);
    }
    std::fs::create_dir_all(out_dir)?;
    let files = EmittedFiles {
        csv: out_dir.join(RESULTS_CSV),
        markdown: out_dir.join(RESULTS_MD),
        svg: out_dir.join(CURVES_SVG),
    };
    std::fs::write(&files.csv, results_csv(&table.rows))?;
    std::fs::write(&files.markdown, results_markdown(&table.rows))?;
    std::fs::write(&files.svg, curves_svg(&table.rows))?;
    Ok(files)
}

const CSV_HEADER: &str = "dataset,method,bits,mean_mse,ci_low,ci_high,splits,split_mses,\
dropout,learning_rate,hidden_layers,hidden_neurons,epochs,decrease_factor";

/// Full-precision decimal formatting so parsing the file back reproduces
/// every value bit for bit.
pub fn results_csv(rows: &[EvalRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let split_mses: Vec<String> = r.split_mses.iter().map(f64::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.method,
            r.bits,
            r.mean_mse,
            r.ci_low,
            r.ci_high,
            r.split_mses.len(),
            split_mses.join(";"),
            r.hyper.dropout,
            r.hyper.learning_rate,
            r.hyper.hidden_layers,
            r.hyper.hidden_neurons,
            r.hyper.epochs,
            r.hyper.decrease_factor,
        );
    }
    out
}

pub fn write_results_csv(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, results_csv(&table.rows))?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<ResultTable> {
    let text = std::fs::read_to_string(path)?;
    parse_results_csv(&text)
}

pub fn parse_results_csv(text: &str) -> Result<ResultTable> {
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 {
            if line != CSV_HEADER {
                return Err(Error::InvalidConfig("unrecognized results.csv header".into()));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::CsvCell {
                row: line_no,
                column: "results".into(),
                message: format!("expected 14 fields, got {}", fields.len()),
            });
        }
        let parse_f = |idx: usize| -> Result<f64> {
            fields[idx].parse().map_err(|e| Error::CsvCell {
                row: line_no,
                column: format!("field {idx}"),
                message: format!("{e}"),
            })
        };
        let split_mses: Vec<f64> = if fields[7].is_empty() {
            Vec::new()
        } else {
            fields[7]
                .split(';')
                .map(|s| {
                    s.parse().map_err(|e| Error::CsvCell {
                        row: line_no,
                        column: "split_mses".into(),
                        message: format!("{e}"),
                    })
                })
                .collect::<Result<_>>()?
        };
        rows.push(EvalRow {
            dataset: fields[0].to_owned(),
            method: fields[1].parse()?,
            bits: fields[2].parse().map_err(|e| Error::CsvCell {
                row: line_no,
                column: "bits".into(),
                message: format!("{e}"),
            })?,
            mean_mse: parse_f(3)?,
            ci_low: parse_f(4)?,
            ci_high: parse_f(5)?,
            split_mses,
            hyper: HyperPoint {
                dropout: parse_f(8)?,
                learning_rate: parse_f(9)?,
                hidden_layers: fields[10].parse().map_err(|e| Error::CsvCell {
                    row: line_no,
                    column: "hidden_layers".into(),
                    message: format!("{e}"),
                })?,
                hidden_neurons: fields[11].parse().map_err(|e| Error::CsvCell {
                    row: line_no,
                    column: "hidden_neurons".into(),
                    message: format!("{e}"),
                })?,
                epochs: fields[12].parse().map_err(|e| Error::CsvCell {
                    row: line_no,
                    column: "epochs".into(),
                    message: format!("{e}"),
                })?,
                decrease_factor: parse_f(13)?,
            },
        });
    }
    Ok(ResultTable { rows })
}

/// Markdown table with a disjoint-interval significance flag against the
/// same dataset's full-precision row.
pub fn results_markdown(rows: &[EvalRow]) -> String {
    let mut out = String::from("# Results\n\n");
    out.push_str("| dataset | method | bits | mean MSE | 95% CI | vs FP |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for r in rows {
        let fp = rows
            .iter()
            .find(|f| f.dataset == r.dataset && f.method == Method::Fp);
        let vs_fp = match fp {
            Some(f) if r.method != Method::Fp => {
                if significantly_different(&r.ci(), &f.ci()) {
                    "significant"
                } else {
                    "not significant"
                }
            }
            _ => "-",
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.4} | [{:.4}, {:.4}] | {} |",
            r.dataset, r.method, r.bits, r.mean_mse, r.ci_low, r.ci_high, vs_fp
        );
    }
    out
}

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Line chart of mean MSE against bit width per method, one panel per
/// dataset, with a dashed red full-precision reference line.
pub fn curves_svg(rows: &[EvalRow]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let panel_w = 640.0;
    let panel_h = 360.0;
    let margin_left = 64.0;
    let margin_right = 150.0;
    let margin_top = 40.0;
    let margin_bottom = 48.0;
    let total_h = panel_h * datasets.len() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{panel_w}\" height=\"{total_h}\" \
viewBox=\"0 0 {panel_w} {total_h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );

    for (panel, ds) in datasets.iter().enumerate() {
        let ds_rows: Vec<&EvalRow> = rows.iter().filter(|r| &r.dataset == ds).collect();
        let quant_rows: Vec<&EvalRow> = ds_rows.iter().copied().filter(|r| r.bits != FP_BITS).collect();
        let fp_row = ds_rows.iter().copied().find(|r| r.bits == FP_BITS);

        let y_top = panel as f64 * panel_h;
        let plot_x0 = margin_left;
        let plot_x1 = panel_w - margin_right;
        let plot_y0 = y_top + margin_top;
        let plot_y1 = y_top + panel_h - margin_bottom;

        let bits_min = quant_rows.iter().map(|r| r.bits).min().unwrap_or(2) as f64;
        let bits_max = quant_rows.iter().map(|r| r.bits).max().unwrap_or(8) as f64;
        let bits_span = (bits_max - bits_min).max(1.0);
        let mse_max = ds_rows
            .iter()
            .map(|r| r.mean_mse)
            .fold(0.0f64, f64::max)
            .max(1e-12)
            * 1.08;

        let x_of = |bits: f64| plot_x0 + (bits - bits_min) / bits_span * (plot_x1 - plot_x0);
        let y_of = |mse: f64| plot_y1 - (mse / mse_max) * (plot_y1 - plot_y0);

        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"15\" font-weight=\"bold\">{}: MSE vs bit width</text>",
            plot_x0,
            y_top + 22.0,
            xml_escape(ds)
        );
        let _ = writeln!(
            svg,
            "<rect x=\"{plot_x0}\" y=\"{plot_y0}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
            plot_x1 - plot_x0,
            plot_y1 - plot_y0
        );

        // Axis ticks.
        let mut b = bits_min as u8;
        while b as f64 <= bits_max {
            let x = x_of(b as f64);
            let _ = writeln!(
                svg,
                "<line x1=\"{x}\" y1=\"{plot_y1}\" x2=\"{x}\" y2=\"{}\" stroke=\"#444\"/>\
<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{b}</text>",
                plot_y1 + 5.0,
                plot_y1 + 20.0
            );
            b += 1;
        }
        for i in 0..=4 {
            let v = mse_max * i as f64 / 4.0;
            let y = y_of(v);
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{y}\" x2=\"{plot_x0}\" y2=\"{y}\" stroke=\"#444\"/>\
<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.3}</text>",
                plot_x0 - 5.0,
                plot_x0 - 8.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">bits per feature</text>",
            (plot_x0 + plot_x1) / 2.0,
            plot_y1 + 38.0
        );

        // Full-precision reference.
        let mut legend_y = plot_y0 + 4.0;
        if let Some(fp) = fp_row {
            let y = y_of(fp.mean_mse);
            let _ = writeln!(
                svg,
                "<line x1=\"{plot_x0}\" y1=\"{y}\" x2=\"{plot_x1}\" y2=\"{y}\" \
stroke=\"red\" stroke-dasharray=\"6 4\"/>"
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{legend_y}\" x2=\"{}\" y2=\"{legend_y}\" stroke=\"red\" stroke-dasharray=\"6 4\"/>\
<text x=\"{}\" y=\"{}\">FP ({:.3})</text>",
                plot_x1 + 8.0,
                plot_x1 + 28.0,
                plot_x1 + 34.0,
                legend_y + 4.0,
                fp.mean_mse
            );
            legend_y += 18.0;
        }

        // One polyline per method.
        let mut methods: Vec<Method> = Vec::new();
        for r in &quant_rows {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        for (mi, method) in methods.iter().enumerate() {
            let color = SERIES_COLORS[mi % SERIES_COLORS.len()];
            let mut pts: Vec<(u8, f64)> = quant_rows
                .iter()
                .filter(|r| r.method == *method)
                .map(|r| (r.bits, r.mean_mse))
                .collect();
            pts.sort_by_key(|&(b, _)| b);
            let path: Vec<String> = pts
                .iter()
                .map(|&(b, m)| format!("{:.2},{:.2}", x_of(b as f64), y_of(m)))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                path.join(" ")
            );
            for &(b, m) in &pts {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                    x_of(b as f64),
                    y_of(m)
                );
            }
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{legend_y}\" x2=\"{}\" y2=\"{legend_y}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\
<text x=\"{}\" y=\"{}\">{method}</text>",
                plot_x1 + 8.0,
                plot_x1 + 28.0,
                plot_x1 + 34.0,
                legend_y + 4.0
            );
            legend_y += 18.0;
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
