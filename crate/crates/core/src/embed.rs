//! Classical (Torgerson) multidimensional scaling and SVG scatter output.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::featnet::DistanceMatrix;
use crate::io::atomic_write;
use crate::linalg::symmetric_eigen;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Embedding {
    /// `D x dim`, one row per node.
    #[serde(skip)]
    pub coords: DMatrix<f64>,
    /// `||embedded distances - C||_F / ||C||_F`.
    pub stress: f64,
    /// Leading eigenvalues of the double-centered matrix.
    pub eigenvalues: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }
}

/// Embeds `c` in `dim` dimensions from the top eigenpairs of `-1/2 J C^2 J`.
pub fn classical_mds(c: &DistanceMatrix, dim: usize) -> Result<Embedding> {
    let n = c.d();
    if n < 3 {
        return Err(Error::invalid(format!("MDS needs at least 3 nodes, got {n}")));
    }
    if dim == 0 || dim > n {
        return Err(Error::invalid(format!("embedding dimension must be in 1..={n}, got {dim}")));
    }
    let sq = c.matrix().map(|v| v * v);
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    // sq is symmetric, so column means equal row means
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));

    let eig = symmetric_eigen(&b)?;
    let top = eig.values[0].max(0.0);
    let mut coords = DMatrix::zeros(n, dim);
    let mut warnings = Vec::new();
    let mut eigenvalues = Vec::with_capacity(dim);
    for k in 0..dim {
        let lambda = eig.values[k];
        eigenvalues.push(lambda);
        if lambda <= 0.0 && lambda < -RANK_TOL * top {
            warnings.push(format!("axis {k}: negative eigenvalue {lambda:e}, coordinates zeroed"));
        } else if lambda <= RANK_TOL * top {
            warnings.push(format!("axis {k}: rank deficient (eigenvalue {lambda:e}), coordinates zeroed"));
        } else {
            let scale = lambda.sqrt();
            for i in 0..n {
                coords[(i, k)] = eig.vectors[(i, k)] * scale;
            }
        }
    }

    let embedded = DistanceMatrix::euclidean_rows(&coords, 1.0);
    let denom = c.matrix().norm();
    let stress = if denom > 0.0 { (embedded.matrix() - c.matrix()).norm() / denom } else { 0.0 };
    Ok(Embedding { coords, stress, eigenvalues, warnings })
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// Standalone SVG 1.1 scatter of the first two coordinates.
pub fn render_svg(e: &Embedding, labels: Option<&[usize]>) -> Result<String> {
    let n = e.len();
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::shape(format!("{} labels for {n} points", l.len())));
        }
    }
    let point = |i: usize| {
        let x = e.coords[(i, 0)];
        let y = if e.dim() > 1 { e.coords[(i, 1)] } else { 0.0 };
        (x, -y)
    };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let (x, y) = point(i);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if n == 0 {
        (x0, x1, y0, y1) = (0.0, 0.0, 0.0, 0.0);
    }
    let span = (x1 - x0).max(y1 - y0);
    let span = if span > 0.0 { span } else { 1.0 };
    let (w, h) = ((x1 - x0).max(span * 1e-3), (y1 - y0).max(span * 1e-3));
    let (mx, my) = (0.05 * w, 0.05 * h);
    let radius = 0.008 * span;

    let mut out = String::new();
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="640" height="640" viewBox="{:.6} {:.6} {:.6} {:.6}" preserveAspectRatio="xMidYMid meet">"#,
        x0 - mx,
        y0 - my,
        w + 2.0 * mx,
        h + 2.0 * my
    )
    .unwrap();
    for i in 0..n {
        let (x, y) = point(i);
        let color = match labels {
            Some(l) => PALETTE[l[i] % PALETTE.len()],
            None => PALETTE[0],
        };
        writeln!(out, r#"  <circle cx="{x:.6}" cy="{y:.6}" r="{radius:.6}" fill="{color}" fill-opacity="0.8"/>"#)
            .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn scatter_svg(e: &Embedding, labels: Option<&[usize]>, path: &Path) -> Result<()> {
    atomic_write(path, render_svg(e, labels)?.as_bytes())
}

/// `node_id,x,y,...` with one column per embedding axis.
pub fn coords_csv(e: &Embedding) -> String {
    let mut out = String::from("node_id");
    let axes = ["x", "y", "z"];
    for k in 0..e.dim() {
        out.push(',');
        match axes.get(k) {
            Some(a) => out.push_str(a),
            None => write!(out, "x{k}").unwrap(),
        }
    }
    out.push('\n');
    for i in 0..e.len() {
        write!(out, "{i}").unwrap();
        for k in 0..e.dim() {
            write!(out, ",{}", e.coords[(i, k)]).unwrap();
        }
        out.push('\n');
    }
    out
}
