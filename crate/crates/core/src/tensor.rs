//! Dense row-major tensors and the two reductions belief propagation needs:
//! the outer ("tensor") sum of vectors and log-sum-exp / max over every axis
//! but one.

use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};

/// How a reduction collapses the axes it sums out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMode {
    /// Numerically stable `ln Σ exp`.
    LogSumExp,
    Max,
}

/// N-dimensional array of reals, row-major, one axis per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(FgError::EmptyAxis);
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(FgError::ShapeMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    /// Rank-1 tensor over `values`.
    pub fn vector(values: Vec<f64>) -> Result<Self> {
        Self::new(vec![values.len()], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise sum with a tensor of identical shape.
    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(FgError::ShapeMismatch {
                shape: other.shape.clone(),
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// New tensor whose axis `k` is this tensor's axis `order[k]`.
    pub fn permute_axes(&self, order: &[usize]) -> Result<Self> {
        let rank = self.rank();
        if order.len() != rank || !is_permutation(order) {
            return Err(FgError::AxisOutOfRange {
                axis: order.len(),
                rank,
            });
        }
        let new_shape: Vec<usize> = order.iter().map(|&o| self.shape[o]).collect();
        let old_strides = self.strides();
        let mut data = Vec::with_capacity(self.len());
        for idx in MultiIndex::new(&new_shape) {
            let off: usize = idx
                .iter()
                .zip(order)
                .map(|(&i, &o)| i * old_strides[o])
                .sum();
            data.push(self.data[off]);
        }
        Self::new(new_shape, data)
    }

    /// Relabels the entries of `axis`: old slice `s` lands at position `perm[s]`.
    pub fn permute_axis_entries(&self, axis: usize, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        if axis >= rank {
            return Err(FgError::AxisOutOfRange { axis, rank });
        }
        if perm.len() != self.shape[axis] || !is_permutation(perm) {
            return Err(FgError::ShapeMismatch {
                shape: self.shape.clone(),
                expected: self.shape[axis],
                actual: perm.len(),
            });
        }
        let strides = self.strides();
        let mut data = vec![0.0; self.len()];
        for (off, idx) in MultiIndex::new(&self.shape).enumerate() {
            let new_off = off + (perm[idx[axis]] * strides[axis]) - idx[axis] * strides[axis];
            data[new_off] = self.data[off];
        }
        Self::new(self.shape.clone(), data)
    }
}

pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x >= p.len() || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

/// Row-major iterator over every index tuple of a shape.
#[derive(Debug, Clone)]
pub struct MultiIndex {
    shape: Vec<usize>,
    current: Vec<usize>,
    done: bool,
}

impl MultiIndex {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            current: vec![0; shape.len()],
            done: shape.contains(&0),
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut k = self.shape.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.current[k] += 1;
            if self.current[k] < self.shape[k] {
                break;
            }
            self.current[k] = 0;
        }
        Some(out)
    }
}

/// Stable `ln Σ exp(x)`; `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Shifts a log-space vector so that its log-sum-exp is zero.
pub fn log_normalize(xs: &mut [f64]) {
    let z = log_sum_exp(xs);
    if z.is_finite() {
        for x in xs.iter_mut() {
            *x -= z;
        }
    }
}

/// Outer sum: entry `(i1, …, iK)` is `v1[i1] + … + vK[iK]`.
pub fn tensor_sum(operands: &[&[f64]]) -> Result<DenseTensor> {
    if operands.is_empty() {
        return Err(FgError::NoOperands);
    }
    if operands.iter().any(|v| v.is_empty()) {
        return Err(FgError::EmptyAxis);
    }
    let shape: Vec<usize> = operands.iter().map(|v| v.len()).collect();
    let mut data = Vec::with_capacity(shape.iter().product());
    for idx in MultiIndex::new(&shape) {
        data.push(idx.iter().zip(operands).map(|(&i, v)| v[i]).sum());
    }
    DenseTensor::new(shape, data)
}

/// Collapses every axis except `keep_axis`.
pub fn reduce_except(t: &DenseTensor, keep_axis: usize, mode: ReduceMode) -> Result<Vec<f64>> {
    let rank = t.rank();
    if keep_axis >= rank {
        return Err(FgError::AxisOutOfRange {
            axis: keep_axis,
            rank,
        });
    }
    let n = t.shape[keep_axis];
    let stride = t.strides()[keep_axis];
    let kept = |off: usize| (off / stride) % n;
    let mut maxes = vec![f64::NEG_INFINITY; n];
    for (off, &x) in t.data.iter().enumerate() {
        let l = kept(off);
        if x > maxes[l] {
            maxes[l] = x;
        }
    }
    if mode == ReduceMode::Max {
        return Ok(maxes);
    }
    let mut sums = vec![0.0; n];
    for (off, &x) in t.data.iter().enumerate() {
        let l = kept(off);
        if maxes[l].is_finite() {
            sums[l] += (x - maxes[l]).exp();
        }
    }
    Ok(maxes
        .iter()
        .zip(&sums)
        .map(|(&m, &s)| if m.is_finite() { m + s.ln() } else { m })
        .collect())
}

/// For each entry of `keep_axis`, the flat offset of the first (lowest offset)
/// maximal element among the entries sharing that index.
pub fn argmax_except(t: &DenseTensor, keep_axis: usize) -> Result<Vec<usize>> {
    let rank = t.rank();
    if keep_axis >= rank {
        return Err(FgError::AxisOutOfRange {
            axis: keep_axis,
            rank,
        });
    }
    let n = t.shape[keep_axis];
    let stride = t.strides()[keep_axis];
    let mut best = vec![usize::MAX; n];
    for (off, &x) in t.data.iter().enumerate() {
        let l = (off / stride) % n;
        if best[l] == usize::MAX || x > t.data[best[l]] {
            best[l] = off;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn tensor_sum_matrix_display() {
        let t = tensor_sum(&[&[1.0, 2.0], &[10.0, 20.0]]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[11.0, 21.0, 12.0, 22.0]);
    }

    #[test]
    fn tensor_sum_zero_and_three_operands() {
        let t = tensor_sum(&[&[0.0], &[0.0]]).unwrap();
        assert_eq!(t.shape(), &[1, 1]);
        assert_eq!(t.data(), &[0.0]);

        let t = tensor_sum(&[&[1.0, 2.0], &[0.0, 0.0], &[5.0]]).unwrap();
        assert_eq!(t.shape(), &[2, 2, 1]);
        assert_eq!(t.get(&[0, 0, 0]), 6.0);
        assert_eq!(t.get(&[1, 1, 0]), 7.0);
    }

    #[test]
    fn tensor_sum_errors() {
        assert_eq!(tensor_sum(&[]), Err(FgError::NoOperands));
        assert_eq!(tensor_sum(&[&[1.0], &[]]), Err(FgError::EmptyAxis));
    }

    #[test]
    fn reduce_uniform_and_max() {
        let t = DenseTensor::zeros(vec![2, 2]).unwrap();
        let r = reduce_except(&t, 1, ReduceMode::LogSumExp).unwrap();
        assert!(close(&r, &[2f64.ln(), 2f64.ln()], 1e-15));
        let r = reduce_except(&t, 0, ReduceMode::Max).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn reduce_rows_linear_space() {
        let t = DenseTensor::new(
            vec![2, 2],
            vec![1f64.ln(), 2f64.ln(), 3f64.ln(), 4f64.ln()],
        )
        .unwrap();
        let r = reduce_except(&t, 0, ReduceMode::LogSumExp).unwrap();
        assert!(close(&r, &[3f64.ln(), 7f64.ln()], 1e-14));
    }

    #[test]
    fn reduce_axis_out_of_range() {
        let t = DenseTensor::zeros(vec![2]).unwrap();
        assert!(matches!(
            reduce_except(&t, 1, ReduceMode::Max),
            Err(FgError::AxisOutOfRange { axis: 1, rank: 1 })
        ));
    }

    #[test]
    fn lse_stable_with_large_and_neg_inf() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[f64::NEG_INFINITY, 0.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn shape_validation() {
        assert!(DenseTensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert_eq!(
            DenseTensor::new(vec![2, 0], vec![]),
            Err(FgError::EmptyAxis)
        );
    }

    #[test]
    fn permute_axes_is_transpose() {
        let t = DenseTensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        let tt = t.permute_axes(&[1, 0]).unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(t.get(&[i, j]), tt.get(&[j, i]));
            }
        }
    }

    #[test]
    fn permute_entries_moves_slices() {
        let t = DenseTensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        let p = t.permute_axis_entries(1, &[2, 0, 1]).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(p.get(&[i, [2, 0, 1][j]]), t.get(&[i, j]));
            }
        }
    }

    #[test]
    fn argmax_lowest_offset_on_ties() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        assert_eq!(argmax_except(&t, 0).unwrap(), vec![0, 3]);
        assert_eq!(argmax_except(&t, 1).unwrap(), vec![0, 3]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs() -> impl Strategy<Value = Vec<Vec<f64>>> {
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 1..4), 1..5)
        }

        proptest! {
            #[test]
            fn lse_separates_over_outer_sums(vs in vecs(), pick in 0usize..8) {
                let j = pick % vs.len();
                let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
                let t = tensor_sum(&refs).unwrap();
                let r = reduce_except(&t, j, ReduceMode::LogSumExp).unwrap();
                let others: f64 = vs.iter().enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, v)| log_sum_exp(v))
                    .sum();
                for (l, &x) in r.iter().enumerate() {
                    prop_assert!((x - (vs[j][l] + others)).abs() < 1e-10);
                }
            }

            #[test]
            fn lse_of_constant_tensor(
                shape in prop::collection::vec(1usize..4, 1..4),
                c in -10.0f64..10.0,
                pick in 0usize..8,
            ) {
                let keep = pick % shape.len();
                let t = DenseTensor::filled(shape.clone(), c).unwrap();
                let size = t.len() as f64;
                let n = shape[keep] as f64;
                for x in reduce_except(&t, keep, ReduceMode::LogSumExp).unwrap() {
                    prop_assert!((x - (c + (size / n).ln())).abs() < 1e-12);
                }
            }
        }
    }
}
