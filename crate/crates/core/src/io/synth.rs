//! Seeded synthetic point sets and labelled Gaussian blobs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::table::Dataset;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointKind {
    /// Uniform in `[0, 1]^dim`.
    UniformCube { dim: usize },
    /// Uniform on `[0, 1] x {0}` in the plane.
    Segment,
    /// Middle-thirds Cantor set truncated after `depth` removals, 1-D.
    Cantor { depth: u32 },
}

impl PointKind {
    pub fn dim(self) -> usize {
        match self {
            PointKind::UniformCube { dim } => dim,
            PointKind::Segment => 2,
            PointKind::Cantor { .. } => 1,
        }
    }
}

impl fmt::Display for PointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointKind::UniformCube { dim } => write!(f, "uniform_cube:{dim}"),
            PointKind::Segment => f.write_str("segment"),
            PointKind::Cantor { depth } => write!(f, "cantor:{depth}"),
        }
    }
}

/// Parses `segment`, `uniform_cube[:dim]` (default 2) or `cantor[:depth]` (default 7).
impl FromStr for PointKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: u64| -> Result<u64> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| Error::invalid(format!("bad parameter '{a}' in point kind '{s}'")))
            })
        };
        let kind = match name {
            "segment" if arg.is_none() => PointKind::Segment,
            "uniform_cube" | "cube" => PointKind::UniformCube { dim: num(2)? as usize },
            "cantor" => PointKind::Cantor { depth: num(7)? as u32 },
            _ => return Err(Error::invalid(format!("unknown point kind '{s}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl PointKind {
    fn validate(self) -> Result<()> {
        match self {
            PointKind::UniformCube { dim: 0 } => Err(Error::invalid("uniform_cube needs dim >= 1")),
            PointKind::Cantor { depth } if depth == 0 || depth > 30 => {
                Err(Error::invalid(format!("cantor depth must be in 1..=30, got {depth}")))
            }
            _ => Ok(()),
        }
    }
}

/// `n x kind.dim()` matrix of points.
pub fn synth_points(kind: PointKind, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    kind.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let mut rng = stream(seed, Stream::Points);
    let dim = kind.dim();
    let mut out = DMatrix::zeros(n, dim);
    for i in 0..n {
        match kind {
            PointKind::UniformCube { .. } => {
                for j in 0..dim {
                    out[(i, j)] = rng.random::<f64>();
                }
            }
            PointKind::Segment => out[(i, 0)] = rng.random::<f64>(),
            PointKind::Cantor { depth } => {
                let mut x = 0.0;
                let mut width = 1.0;
                for _ in 0..depth {
                    width /= 3.0;
                    if rng.random::<bool>() {
                        x += 2.0 * width;
                    }
                }
                out[(i, 0)] = x + width * rng.random::<f64>();
            }
        }
    }
    Ok(out)
}

/// Unit-variance Gaussian clusters whose centers sit on a circle in the first
/// two coordinates, adjacent centers `separation` apart, with a seeded phase.
/// Row `r` belongs to class `r % classes`.
pub fn synth_blobs(classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid(format!("blobs need at least 2 classes, got {classes}")));
    }
    if per_class == 0 {
        return Err(Error::invalid("per_class must be >= 1"));
    }
    if dim < 2 {
        return Err(Error::invalid(format!("blobs need dim >= 2, got {dim}")));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::invalid(format!("separation must be finite and >= 0, got {separation}")));
    }
    let mut rng = stream(seed, Stream::Blobs);
    let radius = separation / (2.0 * (PI / classes as f64).sin());
    let phase = rng.random::<f64>() * 2.0 * PI;
    let centers: Vec<(f64, f64)> = (0..classes)
        .map(|c| {
            let a = phase + 2.0 * PI * c as f64 / classes as f64;
            (radius * a.cos(), radius * a.sin())
        })
        .collect();
    let n = classes * per_class;
    let mut x = DMatrix::zeros(n, dim);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let c = r % classes;
        for j in 0..dim {
            x[(r, j)] = rng.sample::<f64, _>(StandardNormal);
        }
        x[(r, 0)] += centers[c].0;
        x[(r, 1)] += centers[c].1;
        y.push(c);
    }
    Dataset::new(x, y, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_is_flat_and_reproducible() {
        let p = synth_points(PointKind::Segment, 5, 3).unwrap();
        assert_eq!(p.shape(), (5, 2));
        assert!(p.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(p, synth_points(PointKind::Segment, 5, 3).unwrap());
        assert_ne!(p, synth_points(PointKind::Segment, 5, 4).unwrap());
    }

    #[test]
    fn cantor_avoids_removed_thirds() {
        let p = synth_points(PointKind::Cantor { depth: 1 }, 500, 1).unwrap();
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x) && !(x > 1.0 / 3.0 && x < 2.0 / 3.0)));
        let p = synth_points(PointKind::Cantor { depth: 2 }, 500, 1).unwrap();
        assert!(p.iter().all(|&x| !(x > 1.0 / 9.0 && x < 2.0 / 9.0) && !(x > 7.0 / 9.0 && x < 8.0 / 9.0)));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("segment".parse::<PointKind>().unwrap(), PointKind::Segment);
        assert_eq!("uniform_cube:3".parse::<PointKind>().unwrap(), PointKind::UniformCube { dim: 3 });
        assert_eq!("cantor".parse::<PointKind>().unwrap(), PointKind::Cantor { depth: 7 });
        assert!("sierpinski".parse::<PointKind>().is_err());
        assert!("cantor:0".parse::<PointKind>().is_err());
        assert!(synth_points(PointKind::Segment, 0, 1).is_err());
    }

    #[test]
    fn blob_shapes() {
        let d = synth_blobs(3, 4, 2, 5.0, 1).unwrap();
        assert_eq!(d.x.shape(), (12, 2));
        assert_eq!(d.y, (0..12).map(|r| r % 3).collect::<Vec<_>>());
        assert!(synth_blobs(1, 4, 2, 5.0, 1).is_err());
    }

    #[test]
    fn zero_separation_shares_centers() {
        let d = synth_blobs(3, 400, 2, 0.0, 2).unwrap();
        let means = class_means(&d);
        for m in &means {
            assert!(m.norm() < 0.25, "{m}");
        }
    }

    fn class_means(d: &Dataset) -> Vec<nalgebra::DVector<f64>> {
        let dim = d.x.ncols();
        (0..d.classes)
            .map(|c| {
                let rows: Vec<usize> = (0..d.y.len()).filter(|&r| d.y[r] == c).collect();
                let mut m = nalgebra::DVector::zeros(dim);
                for &r in &rows {
                    m += d.x.row(r).transpose();
                }
                m / rows.len() as f64
            })
            .collect()
    }

    // closed-form LDA: shared covariance, linear discriminants
    fn lda_accuracy(d: &Dataset) -> f64 {
        let means = class_means(d);
        let dim = d.x.ncols();
        let mut cov = DMatrix::zeros(dim, dim);
        for r in 0..d.y.len() {
            let e = d.x.row(r).transpose() - &means[d.y[r]];
            cov += &e * e.transpose();
        }
        cov /= (d.y.len() - d.classes) as f64;
        let inv = cov.try_inverse().unwrap();
        let correct = (0..d.y.len())
            .filter(|&r| {
                let x = d.x.row(r).transpose();
                let score = |c: usize| {
                    let w = &inv * &means[c];
                    w.dot(&x) - 0.5 * w.dot(&means[c])
                };
                (0..d.classes).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap() == d.y[r]
            })
            .count();
        correct as f64 / d.y.len() as f64
    }

    #[test]
    fn separated_blobs_are_linearly_separable() {
        for seed in 0..3 {
            let d = synth_blobs(3, 167, 2, 5.0, seed).unwrap();
            let acc = lda_accuracy(&d);
            assert!(acc >= 0.95, "seed {seed}: {acc}");
        }
    }
}
