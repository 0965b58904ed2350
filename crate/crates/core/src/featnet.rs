//! Feature-network construction: activation tensors to feature matrices,
//! normalized pairwise distances, and thresholded adjacency.
//!
//! A feature network has one node per channel. Node `i` carries the vector of
//! that channel's (spatially or token-averaged) activations across the batch,
//! so a `B x D` activation matrix becomes a `D x B` [`FeatureMatrix`].
//!
//! All distances are on the `1/sqrt(B)`-normalized scale. Adjacency thresholds
//! are interpreted on that same scale.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis order of a raw activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// batch x channels
    Bd,
    /// batch x channels x height x width
    Bdhw,
    /// batch x tokens x channels
    Bnd,
}

impl Layout {
    pub fn arity(self) -> usize {
        match self {
            Layout::Bd => 2,
            Layout::Bnd => 3,
            Layout::Bdhw => 4,
        }
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bd" => Ok(Layout::Bd),
            "bdhw" => Ok(Layout::Bdhw),
            "bnd" => Ok(Layout::Bnd),
            other => Err(Error::invalid(format!("unsupported layout '{other}' (expected bd, bdhw or bnd)"))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Bd => "bd",
            Layout::Bdhw => "bdhw",
            Layout::Bnd => "bnd",
        })
    }
}

/// Dense activation tensor in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTensor {
    values: Vec<f64>,
    layout: Layout,
    dims: Vec<usize>,
}

impl HiddenTensor {
    pub fn new(values: Vec<f64>, layout: Layout, dims: Vec<usize>) -> Result<Self> {
        if dims.len() != layout.arity() {
            return Err(Error::shape(format!("layout {layout} needs {} axes, got {:?}", layout.arity(), dims)));
        }
        if dims.contains(&0) {
            return Err(Error::shape(format!("all axes must be non-empty, got {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(Error::shape(format!("dims {dims:?} need {expected} values, got {}", values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("activation tensor element {pos} is {}", values[pos])));
        }
        Ok(HiddenTensor { values, layout, dims })
    }

    /// Wraps a `B x D` matrix as a BD tensor.
    pub fn from_matrix(h: &DMatrix<f64>) -> Result<Self> {
        let values = (0..h.nrows()).flat_map(|r| (0..h.ncols()).map(move |c| h[(r, c)])).collect();
        Self::new(values, Layout::Bd, vec![h.nrows(), h.ncols()])
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Collapses spatial (BDHW) or token (BND) axes by averaging; BD passes through.
/// Returns a `B x D` matrix.
pub fn reduce_mean(t: &HiddenTensor) -> DMatrix<f64> {
    let v = &t.values;
    match (t.layout, t.dims.as_slice()) {
        (Layout::Bd, &[b, d]) => DMatrix::from_row_slice(b, d, v),
        (Layout::Bdhw, &[b, d, h, w]) => {
            let plane = h * w;
            DMatrix::from_fn(b, d, |i, j| {
                let start = (i * d + j) * plane;
                v[start..start + plane].iter().sum::<f64>() / plane as f64
            })
        }
        (Layout::Bnd, &[b, n, d]) => {
            DMatrix::from_fn(b, d, |i, j| (0..n).map(|k| v[(i * n + k) * d + j]).sum::<f64>() / n as f64)
        }
        _ => unreachable!("dims validated against layout at construction"),
    }
}

/// `D x B` matrix: one row per node (channel), one column per batch sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    /// Takes a `D x B` matrix directly.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::shape(format!("feature matrix needs at least 2 nodes, got {}", data.nrows())));
        }
        if data.ncols() < 1 {
            return Err(Error::shape("feature matrix needs at least 1 feature column"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(FeatureMatrix { data })
    }

    /// Number of nodes `D`.
    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    /// Feature dimension `B`.
    pub fn b(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// Transposes a `B x D` activation matrix into a `D x B` feature matrix.
pub fn to_feature_matrix(h: &DMatrix<f64>) -> Result<FeatureMatrix> {
    FeatureMatrix::new(h.transpose())
}

/// Convenience: tensor -> reduce -> transpose.
pub fn feature_matrix_from_tensor(t: &HiddenTensor) -> Result<FeatureMatrix> {
    to_feature_matrix(&reduce_mean(t))
}

/// Symmetric, zero-diagonal, non-negative pairwise distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    c: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Validates an explicit matrix. Symmetry must hold exactly.
    pub fn from_matrix(c: DMatrix<f64>) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::shape(format!("distance matrix is {}x{}", c.nrows(), c.ncols())));
        }
        let n = c.nrows();
        for i in 0..n {
            if c[(i, i)] != 0.0 {
                return Err(Error::invalid(format!("distance diagonal entry {i} is {}", c[(i, i)])));
            }
            for j in (i + 1)..n {
                let v = c[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("distance ({i},{j}) = {v} must be finite and >= 0")));
                }
                if v != c[(j, i)] {
                    return Err(Error::invalid(format!("distance matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(DistanceMatrix { c })
    }

    /// Plain Euclidean distances between the rows of `points`, scaled by `scale`.
    /// Each unordered pair is computed once and mirrored.
    pub fn euclidean_rows(points: &DMatrix<f64>, scale: f64) -> Self {
        let n = points.nrows();
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let mut acc = 0.0;
                for k in 0..points.ncols() {
                    let diff = points[(i, k)] - points[(j, k)];
                    acc += diff * diff;
                }
                let v = acc.sqrt() * scale;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        DistanceMatrix { c }
    }

    pub fn d(&self) -> usize {
        self.c.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    /// Largest off-diagonal entry (0 when every node coincides).
    pub fn max_off_diagonal(&self) -> f64 {
        self.off_diagonal().fold(0.0, f64::max)
    }

    /// Off-diagonal entries in row-major order, i.e. the `D(D-1)` ordered pairs.
    pub fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.d();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| self.c[(i, j)]))
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.d();
        DistanceMatrix { c: DMatrix::from_fn(n, n, |i, j| self.c[(perm[i], perm[j])]) }
    }
}

/// `C_ij = ||F_i - F_j||_2 / sqrt(B)`.
pub fn distance_matrix(f: &FeatureMatrix) -> DistanceMatrix {
    DistanceMatrix::euclidean_rows(&f.data, 1.0 / (f.b() as f64).sqrt())
}

/// Binary adjacency with `a_ij = 1` iff `C_ij < epsilon`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    a: DMatrix<u8>,
    epsilon_bits: u64,
}

impl Adjacency {
    pub fn matrix(&self) -> &DMatrix<u8> {
        &self.a
    }

    pub fn epsilon(&self) -> f64 {
        f64::from_bits(self.epsilon_bits)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.a[(i, j)] == 1
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.a.nrows();
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).filter(|&(i, j)| self.a[(i, j)] == 1).collect()
    }
}

pub fn adjacency(c: &DistanceMatrix, epsilon: f64) -> Result<Adjacency> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let a = c.c.map(|v| u8::from(v < epsilon));
    Ok(Adjacency { a, epsilon_bits: epsilon.to_bits() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bdhw_reduces_over_spatial_axes() {
        let t = HiddenTensor::new(vec![1.0, 2.0, 3.0, 4.0], Layout::Bdhw, vec![1, 1, 2, 2]).unwrap();
        assert_eq!(reduce_mean(&t), DMatrix::from_row_slice(1, 1, &[2.5]));
    }

    #[test]
    fn bd_is_identity() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = HiddenTensor::from_matrix(&h).unwrap();
        assert_eq!(reduce_mean(&t), h);
    }

    #[test]
    fn bnd_with_equal_tokens_returns_token() {
        // B=2, N=3, D=2; every token of sample b equals [b, 10+b]
        let mut v = Vec::new();
        for b in 0..2 {
            for _ in 0..3 {
                v.extend([b as f64, 10.0 + b as f64]);
            }
        }
        let t = HiddenTensor::new(v, Layout::Bnd, vec![2, 3, 2]).unwrap();
        assert_eq!(reduce_mean(&t), DMatrix::from_row_slice(2, 2, &[0.0, 10.0, 1.0, 11.0]));
    }

    #[test]
    fn bnd_averages_tokens() {
        // B=1, N=2, D=2: tokens [1,2] and [3,6]
        let t = HiddenTensor::new(vec![1.0, 2.0, 3.0, 6.0], Layout::Bnd, vec![1, 2, 2]).unwrap();
        assert_eq!(reduce_mean(&t), DMatrix::from_row_slice(1, 2, &[2.0, 4.0]));
    }

    #[test]
    fn bdhw_unit_spatial_equals_bd() {
        let v = vec![0.5, -1.0, 2.0, 3.5, 0.0, 7.0];
        let a = HiddenTensor::new(v.clone(), Layout::Bdhw, vec![2, 3, 1, 1]).unwrap();
        let b = HiddenTensor::new(v, Layout::Bd, vec![2, 3]).unwrap();
        assert_eq!(reduce_mean(&a), reduce_mean(&b));
    }

    #[test]
    fn tensor_validation() {
        assert!(matches!(HiddenTensor::new(vec![1.0, f64::NAN], Layout::Bd, vec![1, 2]), Err(Error::NonFinite(_))));
        assert!(HiddenTensor::new(vec![1.0; 4], Layout::Bd, vec![1, 2, 2]).is_err());
        assert!(HiddenTensor::new(vec![1.0; 4], Layout::Bd, vec![1, 3]).is_err());
        assert!(HiddenTensor::new(vec![], Layout::Bd, vec![0, 3]).is_err());
        assert!("bhwd".parse::<Layout>().is_err());
    }

    #[test]
    fn transpose_cases() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let f = to_feature_matrix(&h).unwrap();
        assert_eq!(f.data(), &DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        // involution: transposing F^T again recovers h
        let back = to_feature_matrix(&f.data().transpose()).unwrap();
        assert_eq!(back.data(), f.data());
        assert_eq!(back.data().transpose(), h);

        let row = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let f = to_feature_matrix(&row).unwrap();
        assert_eq!((f.d(), f.b()), (3, 1));
        assert!(to_feature_matrix(&DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn distance_examples() {
        let f = FeatureMatrix::new(DMatrix::from_row_slice(2, 1, &[0.0, 3.0])).unwrap();
        let c = distance_matrix(&f);
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]));

        let f = FeatureMatrix::new(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0])).unwrap();
        assert_eq!(distance_matrix(&f).get(0, 1), 0.0);

        let f = FeatureMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0])).unwrap();
        let v = distance_matrix(&f).get(0, 1);
        assert!((v - 5.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((v - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn adjacency_examples() {
        let f = FeatureMatrix::new(DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 4.0])).unwrap();
        let c = distance_matrix(&f);
        let a = adjacency(&c, 0.1).unwrap();
        assert!(a.has_edge(0, 1));
        assert!(a.has_edge(0, 0));
        assert!(!a.has_edge(0, 2));
        assert_eq!(a.edges(), vec![(0, 1)]);

        let a0 = adjacency(&c, 0.0).unwrap();
        assert!(a0.matrix().iter().all(|&v| v == 0));

        // C_02 = 3 exactly; strict inequality excludes it
        let a3 = adjacency(&c, 3.0).unwrap();
        assert!(!a3.has_edge(0, 2));
        assert!(adjacency(&c, 3.0 + 1e-9).unwrap().has_edge(0, 2));

        assert!(adjacency(&c, -0.5).is_err());
        assert!(adjacency(&c, f64::NAN).is_err());
    }

    #[test]
    fn from_matrix_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.5, 0.0]);
        assert!(DistanceMatrix::from_matrix(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 1.0, 0.0]);
        assert!(DistanceMatrix::from_matrix(m).is_err());
    }

    fn feature_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (2usize..10, 1usize..6)
            .prop_flat_map(|(d, b)| (Just(d), Just(b), proptest::collection::vec(-10.0f64..10.0, d * b)))
    }

    proptest! {
        #[test]
        fn distances_symmetric_and_permutation_equivariant(
            (d, b, vals) in feature_strategy(),
            shift in 0usize..10,
            eps in 0.0f64..5.0,
        ) {
            let f = FeatureMatrix::new(DMatrix::from_row_slice(d, b, &vals)).unwrap();
            let c = distance_matrix(&f);
            prop_assert_eq!(c.matrix(), &c.matrix().transpose());
            prop_assert!((0..d).all(|i| c.get(i, i) == 0.0));

            let perm: Vec<usize> = (0..d).map(|i| (i + shift) % d).collect();
            let fp = FeatureMatrix::new(DMatrix::from_fn(d, b, |i, j| f.data()[(perm[i], j)])).unwrap();
            let cp = distance_matrix(&fp);
            let expected = c.permuted(&perm);
            prop_assert_eq!(cp.matrix(), expected.matrix());
            let a = adjacency(&c, eps).unwrap();
            let ap = adjacency(&cp, eps).unwrap();
            for i in 0..d {
                for j in 0..d {
                    prop_assert_eq!(ap.has_edge(i, j), a.has_edge(perm[i], perm[j]));
                }
            }
        }

        #[test]
        fn distances_scale_covariant((d, b, vals) in feature_strategy(), scale in 0.01f64..100.0) {
            let f = FeatureMatrix::new(DMatrix::from_row_slice(d, b, &vals)).unwrap();
            let fs = FeatureMatrix::new(f.data() * scale).unwrap();
            let c = distance_matrix(&f);
            let cs = distance_matrix(&fs);
            for (x, y) in c.matrix().iter().zip(cs.matrix().iter()) {
                prop_assert!((x * scale - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
