//! Heatmap assembly from per-client personal layers and the significance
//! rules used to flag suspicious shifts.
//!
//! Two rules, both at a default threshold of 2 population SDs, strict
//! inequality:
//! - cell rule (`O`): a client's value differs from its feature's
//!   cross-client mean by more than `t` SD of that feature's column;
//! - column rule (`x`): a feature's cross-client SD differs from the mean of
//!   all features' SDs by more than `t` SD of those SDs.

pub(crate) mod render;

pub use render::{
    flags_csv_string, heatmap_csv_string, parse_flags_csv, parse_heatmap_csv, read_heatmap_csv,
    render_report, svg_string, write_heatmap_csv, ReportFiles,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::params::{PersonalParams, WOut};

/// Which personal vector a heatmap is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    BIn,
    WIn,
    BOut,
    WOut,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::BIn, Layer::WIn, Layer::BOut, Layer::WOut];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "b_in" => Ok(Layer::BIn),
            "w_in" => Ok(Layer::WIn),
            "b_out" => Ok(Layer::BOut),
            "w_out" => Ok(Layer::WOut),
            other => Err(Error::config(format!(
                "unknown layer '{other}' (expected b_in|w_in|b_out|w_out)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::BIn => "b_in",
            Layer::WIn => "w_in",
            Layer::BOut => "b_out",
            Layer::WOut => "w_out",
        }
    }

    /// Neutral value of this layer (bias 0, weight 1); the diverging color
    /// scale of the rendered heatmap is centered here.
    pub fn center(&self) -> f64 {
        match self {
            Layer::BIn | Layer::BOut => 0.0,
            Layer::WIn | Layer::WOut => 1.0,
        }
    }
}

/// One personal vector stacked across clients: one row per client, one
/// column per feature (or logit; a scalar output weight gives one column).
#[derive(Clone, Debug)]
pub struct LayerHeatmap {
    pub layer: Layer,
    pub values: Matrix,
    pub clients: Vec<String>,
    pub columns: Vec<String>,
}

/// Significance flags for a heatmap; `columns` is absent when the heatmap
/// has fewer than two columns (the column rule needs a spread of SDs).
#[derive(Clone, Debug)]
pub struct SignificanceFlags {
    /// Row-major clients x columns cell flags (the `O` markers).
    pub cells: Vec<bool>,
    /// Per-column flags (the `x` markers).
    pub columns: Option<Vec<bool>>,
    pub threshold: f64,
}

impl SignificanceFlags {
    #[inline]
    pub fn cell(&self, client: usize, column: usize, n_cols: usize) -> bool {
        self.cells[client * n_cols + column]
    }

    pub fn any_cell(&self) -> bool {
        self.cells.iter().any(|&f| f)
    }
}

/// Stacks one personal vector across clients.
///
/// Fails if clients disagree on dimensions, or if the requested layer was not
/// trainable in this run (its heatmap would be a constant identity and any
/// flags meaningless).
pub fn build_heatmap(
    personal: &[(String, PersonalParams)],
    layer: Layer,
    feature_names: &[String],
) -> Result<LayerHeatmap> {
    let (first, rest) = personal
        .split_first()
        .ok_or_else(|| Error::data("no personal layers to build a heatmap from"))?;
    let (d, k) = first.1.dims();
    for (label, p) in rest {
        if p.dims() != (d, k) || p.is_scalar_w_out() != first.1.is_scalar_w_out() {
            return Err(Error::shape(format!(
                "client '{label}' personal layers are shaped differently from '{}'",
                first.0
            )));
        }
    }
    let trained = match layer {
        Layer::BIn => first.1.train_b_in,
        Layer::WIn => first.1.train_w_in,
        Layer::BOut => first.1.train_b_out,
        Layer::WOut => first.1.train_w_out,
    };
    if !trained {
        return Err(Error::config(format!(
            "layer {} was not trained in this run",
            layer.name()
        )));
    }

    let rows: Vec<Vec<f64>> = personal
        .iter()
        .map(|(_, p)| match layer {
            Layer::BIn => p.b_in.clone(),
            Layer::WIn => p.w_in.clone(),
            Layer::BOut => p.b_out.clone(),
            Layer::WOut => p.w_out.values(),
        })
        .collect();
    let values = Matrix::from_rows(&rows)?;

    let columns: Vec<String> = match layer {
        Layer::BIn | Layer::WIn => {
            if feature_names.len() == d {
                feature_names.to_vec()
            } else {
                (0..d).map(|j| format!("f{j}")).collect()
            }
        }
        Layer::BOut => (0..k).map(|j| format!("class{j}")).collect(),
        Layer::WOut => match &first.1.w_out {
            WOut::Vector(_) => (0..k).map(|j| format!("class{j}")).collect(),
            WOut::Scalar(_) => vec!["scalar".to_string()],
        },
    };

    Ok(LayerHeatmap {
        layer,
        values,
        clients: personal.iter().map(|(l, _)| l.clone()).collect(),
        columns,
    })
}

fn column_mean_sd(values: &Matrix, col: usize) -> (f64, f64) {
    let n = values.rows() as f64;
    let mean = (0..values.rows()).map(|r| values.get(r, col)).sum::<f64>() / n;
    let var = (0..values.rows())
        .map(|r| {
            let d = values.get(r, col) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Cell rule: flag `(client, column)` when the value deviates from the
/// column mean by more than `threshold` column SDs. Columns with zero SD
/// produce no flags. Needs at least two clients.
pub fn flag_cells(hm: &LayerHeatmap, threshold: f64) -> Result<Vec<bool>> {
    let c = hm.values.rows();
    if c < 2 {
        return Err(Error::data(format!(
            "cell significance needs at least 2 clients, got {c}"
        )));
    }
    let n_cols = hm.values.cols();
    let mut flags = vec![false; c * n_cols];
    for j in 0..n_cols {
        let (mean, sd) = column_mean_sd(&hm.values, j);
        if sd == 0.0 {
            continue;
        }
        for i in 0..c {
            if (hm.values.get(i, j) - mean).abs() > threshold * sd {
                flags[i * n_cols + j] = true;
            }
        }
    }
    Ok(flags)
}

/// Column rule: flag column `j` when its cross-client SD deviates from the
/// mean of all columns' SDs by more than `threshold` SDs of those SDs.
/// Needs at least two clients and two columns.
pub fn flag_columns(hm: &LayerHeatmap, threshold: f64) -> Result<Vec<bool>> {
    let c = hm.values.rows();
    let n_cols = hm.values.cols();
    if c < 2 {
        return Err(Error::data(format!(
            "column significance needs at least 2 clients, got {c}"
        )));
    }
    if n_cols < 2 {
        return Err(Error::data(format!(
            "column significance needs at least 2 columns, got {n_cols}"
        )));
    }
    let sds: Vec<f64> = (0..n_cols).map(|j| column_mean_sd(&hm.values, j).1).collect();
    let n = n_cols as f64;
    let mean = sds.iter().sum::<f64>() / n;
    let spread = (sds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
    if spread == 0.0 {
        return Ok(vec![false; n_cols]);
    }
    Ok(sds.iter().map(|s| (s - mean).abs() > threshold * spread).collect())
}

/// Applies both rules with the default threshold of 2.
pub fn significance(hm: &LayerHeatmap, threshold: f64) -> Result<SignificanceFlags> {
    let cells = flag_cells(hm, threshold)?;
    let columns = if hm.values.cols() >= 2 {
        Some(flag_columns(hm, threshold)?)
    } else {
        None
    };
    Ok(SignificanceFlags { cells, columns, threshold })
}

/// Per-client verdict of the target-flip check.
#[derive(Clone, Debug, PartialEq)]
pub struct FlipVerdict {
    pub client: String,
    pub suspected: bool,
    /// Most negative output-weight component.
    pub value: f64,
    /// Column of that component.
    pub component: String,
}

/// Flags a client as a suspected target flip when any component of its
/// learned output weight is negative.
pub fn detect_target_flip(hm: &LayerHeatmap) -> Result<Vec<FlipVerdict>> {
    if hm.layer != Layer::WOut {
        return Err(Error::config(format!(
            "target-flip detection reads the w_out heatmap, got {}",
            hm.layer.name()
        )));
    }
    Ok(hm
        .clients
        .iter()
        .enumerate()
        .map(|(i, client)| {
            let row = hm.values.row(i);
            let (j, &value) = row
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .unwrap();
            FlipVerdict {
                client: client.clone(),
                suspected: value < 0.0,
                value,
                component: hm.columns[j].clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::FOutMode;

    fn heatmap_from(rows: &[Vec<f64>], layer: Layer) -> LayerHeatmap {
        let values = Matrix::from_rows(rows).unwrap();
        LayerHeatmap {
            layer,
            columns: (0..values.cols()).map(|j| format!("f{j}")).collect(),
            clients: (0..values.rows()).map(|i| format!("client{i}")).collect(),
            values,
        }
    }

    #[test]
    fn untrained_federation_heatmaps_are_identity() {
        let personal: Vec<(String, PersonalParams)> = (0..3)
            .map(|i| (format!("c{i}"), PersonalParams::identity(2, 2, true, FOutMode::Both)))
            .collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let b_in = build_heatmap(&personal, Layer::BIn, &names).unwrap();
        assert!(b_in.values.as_slice().iter().all(|&v| v == 0.0));
        let w_in = build_heatmap(&personal, Layer::WIn, &names).unwrap();
        assert!(w_in.values.as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(w_in.columns, names);
    }

    #[test]
    fn heatmap_stacks_client_vectors_in_order() {
        let personal: Vec<(String, PersonalParams)> = (0..3)
            .map(|i| {
                let mut p = PersonalParams::identity(2, 2, true, FOutMode::None);
                p.b_in = vec![i as f64, 10.0 * i as f64];
                (format!("c{i}"), p)
            })
            .collect();
        let hm = build_heatmap(&personal, Layer::BIn, &[]).unwrap();
        assert_eq!(hm.values.row(2), &[2.0, 20.0]);
        assert_eq!(hm.clients[1], "c1");
    }

    #[test]
    fn scalar_w_out_heatmap_is_one_column() {
        let personal: Vec<(String, PersonalParams)> = (0..4)
            .map(|i| (format!("c{i}"), PersonalParams::identity(3, 2, true, FOutMode::ScalarWeight)))
            .collect();
        let hm = build_heatmap(&personal, Layer::WOut, &[]).unwrap();
        assert_eq!(hm.values.rows(), 4);
        assert_eq!(hm.values.cols(), 1);
    }

    #[test]
    fn frozen_layer_is_rejected() {
        let personal =
            vec![("c0".to_string(), PersonalParams::identity(2, 2, true, FOutMode::None))];
        let err = build_heatmap(&personal, Layer::WOut, &[]).unwrap_err();
        assert!(err.to_string().contains("not trained"));
    }

    #[test]
    fn constant_column_produces_no_cell_flags() {
        let hm = heatmap_from(&[vec![1.0], vec![1.0], vec![1.0]], Layer::WIn);
        assert!(flag_cells(&hm, 2.0).unwrap().iter().all(|&f| !f));
    }

    #[test]
    fn single_outlier_ratio_boundary() {
        // column [0,0,0,0,0,d]: deviation/sd = sqrt(C-1) = sqrt(5) > 2 -> flagged
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![if i == 5 { 3.0 } else { 0.0 }]).collect();
        let hm = heatmap_from(&rows, Layer::BIn);
        let flags = flag_cells(&hm, 2.0).unwrap();
        assert_eq!(flags, vec![false, false, false, false, false, true]);
        // C = 5: sqrt(4) = 2 is not > 2 -> nothing flagged
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![if i == 4 { 3.0 } else { 0.0 }]).collect();
        let hm = heatmap_from(&rows, Layer::BIn);
        assert!(flag_cells(&hm, 2.0).unwrap().iter().all(|&f| !f));
    }

    #[test]
    fn cell_flags_need_two_clients() {
        let hm = heatmap_from(&[vec![1.0, 2.0]], Layer::BIn);
        assert!(flag_cells(&hm, 2.0).is_err());
    }

    #[test]
    fn uniform_column_sds_produce_no_column_flags() {
        // every column has the same cross-client SD
        let hm = heatmap_from(&[vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]], Layer::BIn);
        assert!(flag_columns(&hm, 2.0).unwrap().iter().all(|&f| !f));
    }

    #[test]
    fn single_dispersed_column_boundary() {
        // 6 columns, one with nonzero SD: flagged; 5 columns: not flagged
        let make = |d: usize| {
            let mut row0 = vec![0.0; d];
            let mut row1 = vec![0.0; d];
            row0[d - 1] = -1.0;
            row1[d - 1] = 1.0;
            heatmap_from(&[row0, row1], Layer::WIn)
        };
        let flags = flag_columns(&make(6), 2.0).unwrap();
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(flags[5]);
        assert!(flag_columns(&make(5), 2.0).unwrap().iter().all(|&f| !f));
    }

    #[test]
    fn flip_detection_reads_signs() {
        let hm = heatmap_from(&[vec![1.05], vec![-0.8], vec![0.97]], Layer::WOut);
        let verdicts = detect_target_flip(&hm).unwrap();
        assert!(!verdicts[0].suspected);
        assert!(verdicts[1].suspected);
        assert_eq!(verdicts[1].value, -0.8);
        // vector mode: negative component is reported
        let hm = heatmap_from(&[vec![1.1, -0.4], vec![1.0, 0.9]], Layer::WOut);
        let verdicts = detect_target_flip(&hm).unwrap();
        assert!(verdicts[0].suspected);
        assert_eq!(verdicts[0].component, "f1");
        // wrong layer is an error
        let hm = heatmap_from(&[vec![1.0]], Layer::WIn);
        assert!(detect_target_flip(&hm).is_err());
    }
}
