//! Report files for a heatmap: values CSV, flags CSV, and a standalone SVG.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::interpret::{LayerHeatmap, SignificanceFlags};
use crate::matrix::Matrix;

/// Writes `content` to `path` atomically (temp file + rename).
pub(crate) fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Paths produced by [`render_report`].
#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub heatmap_csv: PathBuf,
    pub flags_csv: PathBuf,
    pub svg: PathBuf,
}

/// Heatmap CSV: header `client,<col0>,<col1>,…`, one row per client. Values
/// use the shortest round-trip float form, so parsing them back is exact.
pub fn heatmap_csv_string(hm: &LayerHeatmap) -> String {
    let mut out = String::new();
    out.push_str("client");
    for c in &hm.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, client) in hm.clients.iter().enumerate() {
        out.push_str(client);
        for j in 0..hm.values.cols() {
            out.push(',');
            out.push_str(&hm.values.get(i, j).to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_heatmap_csv(path: &Path, hm: &LayerHeatmap) -> Result<()> {
    write_atomic(path, &heatmap_csv_string(hm))
}

/// Parses a heatmap CSV back into `(clients, columns, values)`.
pub fn read_heatmap_csv(path: &Path) -> Result<(Vec<String>, Vec<String>, Matrix)> {
    let text = std::fs::read_to_string(path)?;
    parse_heatmap_csv(&text)
}

pub fn parse_heatmap_csv(text: &str) -> Result<(Vec<String>, Vec<String>, Matrix)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::data("empty heatmap csv"))?;
    let columns: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let mut clients = Vec::new();
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let mut fields = line.split(',');
        clients.push(fields.next().unwrap_or_default().to_string());
        let row: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::data(format!("bad value '{f}' in heatmap csv")))
            })
            .collect::<Result<_>>()?;
        if row.len() != columns.len() {
            return Err(Error::data("ragged heatmap csv"));
        }
        rows.push(row);
    }
    Ok((clients, columns, Matrix::from_rows(&rows)?))
}

/// Flags CSV: same header as the heatmap, then one `column_flags` row of
/// `x` markers, then one row per client of `O` markers.
pub fn flags_csv_string(hm: &LayerHeatmap, flags: &SignificanceFlags) -> String {
    let n_cols = hm.values.cols();
    let mut out = String::new();
    out.push_str("client");
    for c in &hm.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    out.push_str("column_flags");
    for j in 0..n_cols {
        out.push(',');
        if flags.columns.as_ref().is_some_and(|cols| cols[j]) {
            out.push('x');
        }
    }
    out.push('\n');
    for (i, client) in hm.clients.iter().enumerate() {
        out.push_str(client);
        for j in 0..n_cols {
            out.push(',');
            if flags.cell(i, j, n_cols) {
                out.push('O');
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a flags CSV into `(column_flags, cell_flags)` marker grids.
pub fn parse_flags_csv(text: &str) -> Result<(Vec<bool>, Vec<Vec<bool>>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::data("empty flags csv"))?;
    let n_cols = header.split(',').count() - 1;
    let col_line = lines.next().ok_or_else(|| Error::data("flags csv missing column row"))?;
    let columns: Vec<bool> = col_line.split(',').skip(1).map(|f| f == "x").collect();
    if columns.len() != n_cols {
        return Err(Error::data("ragged flags csv"));
    }
    let mut cells = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let row: Vec<bool> = line.split(',').skip(1).map(|f| f == "O").collect();
        if row.len() != n_cols {
            return Err(Error::data("ragged flags csv"));
        }
        cells.push(row);
    }
    Ok((columns, cells))
}

fn color(value: f64, center: f64, scale: f64) -> String {
    // diverging blue-white-red around the layer's neutral value
    let t = if scale == 0.0 { 0.0 } else { ((value - center) / scale).clamp(-1.0, 1.0) };
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    let (r, g, b) = if t < 0.0 {
        let t = -t;
        (lerp(255.0, 59.0, t), lerp(255.0, 76.0, t), lerp(255.0, 192.0, t))
    } else {
        (lerp(255.0, 180.0, t), lerp(255.0, 4.0, t), lerp(255.0, 38.0, t))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG heatmap: diverging colors centered at the layer's neutral
/// value, flagged cells outlined, flagged columns marked `x` in the header.
pub fn svg_string(hm: &LayerHeatmap, flags: &SignificanceFlags) -> String {
    const CELL: f64 = 26.0;
    const LEFT: f64 = 120.0;
    const TOP: f64 = 80.0;
    let n_cols = hm.values.cols();
    let n_rows = hm.values.rows();
    let width = LEFT + CELL * n_cols as f64 + 20.0;
    let height = TOP + CELL * n_rows as f64 + 40.0;

    let center = hm.layer.center();
    let scale = hm
        .values
        .as_slice()
        .iter()
        .map(|v| (v - center).abs())
        .fold(0.0, f64::max);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"10\" y=\"20\" font-size=\"14\">{} heatmap (center {center}, max |dev| {scale:.4})</text>\n",
        xml_escape(hm.layer.name())
    ));

    for (j, name) in hm.columns.iter().enumerate() {
        let x = LEFT + CELL * (j as f64 + 0.5);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"start\" \
             transform=\"rotate(-45 {x:.1} {:.1})\">{}</text>\n",
            TOP - 22.0,
            TOP - 22.0,
            xml_escape(name)
        ));
        if flags.columns.as_ref().is_some_and(|cols| cols[j]) {
            svg.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" \
                 font-weight=\"bold\">x</text>\n",
                TOP - 6.0
            ));
        }
    }

    for (i, client) in hm.clients.iter().enumerate() {
        let y = TOP + CELL * (i as f64 + 0.65);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{y:.1}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            LEFT - 6.0,
            xml_escape(client)
        ));
        for j in 0..n_cols {
            let v = hm.values.get(i, j);
            let x = LEFT + CELL * j as f64;
            let y = TOP + CELL * i as f64;
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{}\" stroke=\"#cccccc\" stroke-width=\"0.5\"><title>{}/{} = {v}</title></rect>\n",
                color(v, center, scale),
                xml_escape(client),
                xml_escape(&hm.columns[j]),
            ));
            if flags.cell(i, j, n_cols) {
                svg.push_str(&format!(
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
                     fill=\"none\" stroke=\"#000000\" stroke-width=\"2.5\"/>\n",
                    x + 1.25,
                    y + 1.25,
                    CELL - 2.5,
                    CELL - 2.5
                ));
            }
        }
    }

    svg.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"{:.1}\" font-size=\"10\">flagged cell = outlined (O), flagged column = x</text>\n",
        TOP + CELL * n_rows as f64 + 20.0
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Writes the three report files for one layer into `out_dir`.
pub fn render_report(
    hm: &LayerHeatmap,
    flags: &SignificanceFlags,
    out_dir: &Path,
) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir)?;
    let name = hm.layer.name();
    let files = ReportFiles {
        heatmap_csv: out_dir.join(format!("heatmap_{name}.csv")),
        flags_csv: out_dir.join(format!("flags_{name}.csv")),
        svg: out_dir.join(format!("heatmap_{name}.svg")),
    };
    write_atomic(&files.heatmap_csv, &heatmap_csv_string(hm))?;
    write_atomic(&files.flags_csv, &flags_csv_string(hm, flags))?;
    write_atomic(&files.svg, &svg_string(hm, flags))?;
    Ok(files)
}
