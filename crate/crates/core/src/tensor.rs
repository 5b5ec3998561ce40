//! Dense row-major tensors with shape-checked products and contractions.
//!
//! Every multi-axis contraction is lowered to a single matrix multiply:
//! the operands are permuted (only when their layout is not already a
//! plain or transposed matrix view), multiplied, and the result is read
//! back with the free axes of `a` followed by the free axes of `b`.

use std::borrow::Cow;
use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

/// Default cap on the number of elements any single tensor may hold.
pub const DEFAULT_ELEMENT_BUDGET: usize = 1 << 26;

static ELEMENT_BUDGET: AtomicUsize = AtomicUsize::new(DEFAULT_ELEMENT_BUDGET);

/// Current element budget applied to products and contractions.
pub fn element_budget() -> usize {
    ELEMENT_BUDGET.load(Ordering::Relaxed)
}

/// Sets the process-wide element budget, returning the previous value.
pub fn set_element_budget(budget: usize) -> usize {
    ELEMENT_BUDGET.swap(budget.max(1), Ordering::Relaxed)
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements but {actual} were given")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("zero-sized dimension in shape {0:?}")]
    ZeroDimension(Vec<usize>),
    #[error("non-finite element at flat index {index}")]
    NonFinite { index: usize },
    #[error("result would hold {requested} elements, over the budget of {budget}")]
    Capacity { requested: usize, budget: usize },
    #[error("axis {axis} out of range for a tensor of order {order}")]
    AxisOutOfRange { axis: usize, order: usize },
    #[error("axis {axis_a} of a (size {size_a}) does not match axis {axis_b} of b (size {size_b})")]
    ShapeMismatch {
        axis_a: usize,
        axis_b: usize,
        size_a: usize,
        size_b: usize,
    },
    #[error("axis {axis} listed more than once")]
    RepeatedAxis { axis: usize },
    #[error("{perm:?} is not a permutation of 0..{order}")]
    InvalidPermutation { perm: Vec<usize>, order: usize },
    #[error("shapes {left:?} and {right:?} differ")]
    Incompatible { left: Vec<usize>, right: Vec<usize> },
    #[error("cannot contract the degree axis (axis 0)")]
    DegreeAxisContracted,
    #[error("degree tensors need order >= 1")]
    MissingDegreeAxis,
    #[error("non-finite feature value {0}")]
    NonFiniteFeature(f64),
    #[error("malformed tensor fragment: {0}")]
    Fragment(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn checked_count(shape: &[usize]) -> Result<usize> {
    let budget = element_budget();
    let mut count: usize = 1;
    for &d in shape {
        count = count.saturating_mul(d);
    }
    if count > budget {
        return Err(TensorError::Capacity {
            requested: count,
            budget,
        });
    }
    Ok(count)
}

/// Row-major strides for `shape`.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

impl DenseTensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroDimension(shape));
        }
        let expected = checked_count(&shape)?;
        if expected != data.len() {
            return Err(TensorError::ElementCount {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for data produced by our own kernels.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroDimension(shape));
        }
        let n = checked_count(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Result<Self> {
        Self::from_vec(vec![values.len()], values)
    }

    /// Square identity matrix of size `n`.
    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
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

    fn flat_index(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        Some(flat)
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.flat_index(index).map(|k| self.data[k])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Option<()> {
        let k = self.flat_index(index)?;
        self.data[k] = value;
        Some(())
    }

    /// Same elements under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.contains(&0) {
            return Err(TensorError::ElementCount {
                shape,
                expected,
                actual: self.data.len(),
            });
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn into_reshaped(self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.contains(&0) {
            return Err(TensorError::ElementCount {
                shape,
                expected,
                actual: self.data.len(),
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::Incompatible {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += alpha * y;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Slice along axis 0: the sub-tensor with the leading index fixed.
    pub fn leading_slice(&self, i: usize) -> Result<Self> {
        if self.shape.is_empty() {
            return Err(TensorError::AxisOutOfRange { axis: 0, order: 0 });
        }
        if i >= self.shape[0] {
            return Err(TensorError::AxisOutOfRange {
                axis: i,
                order: self.shape[0],
            });
        }
        let inner = self.data.len() / self.shape[0];
        Ok(Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        })
    }

    /// Writes the little-endian checkpoint fragment: `u32` order, `u64`
    /// per shape entry, then the `f64` elements.
    pub fn write_fragment<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_fragment<R: Read>(r: &mut R) -> io::Result<Self> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let order = u32::from_le_bytes(b4) as usize;
        if order > 64 {
            return Err(bad(format!("implausible tensor order {order}")));
        }
        let mut shape = Vec::with_capacity(order);
        for _ in 0..order {
            r.read_exact(&mut b8)?;
            let d = u64::from_le_bytes(b8);
            shape.push(usize::try_from(d).map_err(|_| bad(format!("dimension {d} too large")))?);
        }
        let n = checked_count(&shape).map_err(|e| bad(e.to_string()))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        Self::from_vec(shape, data).map_err(|e| bad(e.to_string()))
    }
}

/// Tensor product: every pairwise product of elements, axes of `a`
/// followed by axes of `b`.
pub fn tensor_product(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    contract(a, b, &[])
}

/// Permutes axes so that axis `k` of the result is axis `perm[k]` of `a`.
pub fn permute_axes(a: &DenseTensor, perm: &[usize]) -> Result<DenseTensor> {
    let order = a.order();
    let mut seen = vec![false; order];
    if perm.len() != order
        || perm
            .iter()
            .any(|&p| p >= order || std::mem::replace(&mut seen[p], true))
    {
        return Err(TensorError::InvalidPermutation {
            perm: perm.to_vec(),
            order,
        });
    }
    if perm.iter().enumerate().all(|(k, &p)| k == p) {
        return Ok(a.clone());
    }
    let shape: Vec<usize> = perm.iter().map(|&p| a.shape[p]).collect();
    let src_strides = a.strides();
    let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let mut data = Vec::with_capacity(a.len());
    let mut idx = vec![0usize; order];
    let mut offset = 0usize;
    let last = order - 1;
    'outer: loop {
        // innermost axis as a strided run
        let (d, s) = (shape[last], strides[last]);
        for t in 0..d {
            data.push(a.data[offset + t * s]);
        }
        let mut k = last;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            offset += strides[k];
            if idx[k] < shape[k] {
                break;
            }
            offset -= strides[k] * shape[k];
            idx[k] = 0;
        }
    }
    Ok(DenseTensor::from_parts(shape, data))
}

/// Inverse of a permutation.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Validated contraction geometry shared by the dense and degree-resolved
/// kernels.
#[derive(Debug, Clone)]
pub(crate) struct ContractPlan {
    pub free_a: Vec<usize>,
    pub free_b: Vec<usize>,
    pub con_a: Vec<usize>,
    pub con_b: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub out_shape: Vec<usize>,
}

impl ContractPlan {
    /// Plans a contraction over the axes in `a_axes`/`b_axes` (subsets of
    /// the operands' axes; the rest are ignored, e.g. a degree axis).
    pub fn new(
        a_shape: &[usize],
        b_shape: &[usize],
        pairs: &[(usize, usize)],
        a_axes: std::ops::Range<usize>,
        b_axes: std::ops::Range<usize>,
    ) -> Result<Self> {
        let (oa, ob) = (a_shape.len(), b_shape.len());
        let mut used_a = vec![false; oa];
        let mut used_b = vec![false; ob];
        for &(x, y) in pairs {
            if x >= oa {
                return Err(TensorError::AxisOutOfRange { axis: x, order: oa });
            }
            if y >= ob {
                return Err(TensorError::AxisOutOfRange { axis: y, order: ob });
            }
            if !a_axes.contains(&x) || !b_axes.contains(&y) {
                return Err(TensorError::DegreeAxisContracted);
            }
            if std::mem::replace(&mut used_a[x], true) {
                return Err(TensorError::RepeatedAxis { axis: x });
            }
            if std::mem::replace(&mut used_b[y], true) {
                return Err(TensorError::RepeatedAxis { axis: y });
            }
            if a_shape[x] != b_shape[y] {
                return Err(TensorError::ShapeMismatch {
                    axis_a: x,
                    axis_b: y,
                    size_a: a_shape[x],
                    size_b: b_shape[y],
                });
            }
        }
        let free_a: Vec<usize> = a_axes.clone().filter(|&x| !used_a[x]).collect();
        let free_b: Vec<usize> = b_axes.clone().filter(|&y| !used_b[y]).collect();
        let con_a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let con_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let m = free_a.iter().map(|&x| a_shape[x]).product();
        let k = con_a.iter().map(|&x| a_shape[x]).product();
        let n = free_b.iter().map(|&y| b_shape[y]).product();
        let out_shape = free_a
            .iter()
            .map(|&x| a_shape[x])
            .chain(free_b.iter().map(|&y| b_shape[y]))
            .collect();
        Ok(Self {
            free_a,
            free_b,
            con_a,
            con_b,
            m,
            k,
            n,
            out_shape,
        })
    }
}

/// Borrowed or owned matrix with explicit strides.
pub(crate) struct MatView<'a> {
    pub data: Cow<'a, [f64]>,
    pub rs: isize,
    pub cs: isize,
}

impl MatView<'_> {
    pub fn transposed(&self) -> MatView<'_> {
        MatView {
            data: Cow::Borrowed(&self.data),
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// Arranges `t` so that axes `lead` form the rows and `trail` the columns
/// (both groups in the given order). `prefix` axes, if any, are kept in
/// front and must be handled by the caller via slice offsets.
pub(crate) fn matrix_view<'a>(
    t: &'a DenseTensor,
    prefix: &[usize],
    rows: &[usize],
    cols: &[usize],
) -> MatView<'a> {
    let n_rows: usize = rows.iter().map(|&x| t.shape[x]).product();
    let n_cols: usize = cols.iter().map(|&x| t.shape[x]).product();
    let plain = prefix.iter().chain(rows).chain(cols).copied();
    if plain.enumerate().all(|(k, x)| k == x) {
        return MatView {
            data: Cow::Borrowed(&t.data),
            rs: n_cols as isize,
            cs: 1,
        };
    }
    let swapped = prefix.iter().chain(cols).chain(rows).copied();
    if swapped.enumerate().all(|(k, x)| k == x) {
        return MatView {
            data: Cow::Borrowed(&t.data),
            rs: 1,
            cs: n_rows as isize,
        };
    }
    let perm: Vec<usize> = prefix.iter().chain(rows).chain(cols).copied().collect();
    let p = permute_axes(t, &perm).expect("internal permutation is valid");
    MatView {
        data: Cow::Owned(p.into_data()),
        rs: n_cols as isize,
        cs: 1,
    }
}

/// `c[m×n] += a[m×k] · b[k×n]` with arbitrary strides on `a` and `b`;
/// `c` is row-major contiguous.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices that cover the strided extents of the
    // m×k and k×n operands and an m×n row-major output.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Contracts `a` with `b` over `pairs` of (axis of a, axis of b). The
/// result carries the uncontracted axes of `a` then those of `b`.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let plan = ContractPlan::new(&a.shape, &b.shape, pairs, 0..a.order(), 0..b.order())?;
    let count = checked_count(&plan.out_shape)?;
    let va = matrix_view(a, &[], &plan.free_a, &plan.con_a);
    let vb = matrix_view(b, &[], &plan.con_b, &plan.free_b);
    let mut out = vec![0.0; count];
    gemm_acc(
        plan.m, plan.k, plan.n, &va.data, va.rs, va.cs, &vb.data, vb.rs, vb.cs, &mut out,
    );
    Ok(DenseTensor::from_parts(plan.out_shape, out))
}

/// Adjoints of [`contract`]: given `dL/dC`, returns `(dL/dA, dL/dB)`.
pub fn contract_backward(
    a: &DenseTensor,
    b: &DenseTensor,
    pairs: &[(usize, usize)],
    grad_out: &DenseTensor,
) -> Result<(DenseTensor, DenseTensor)> {
    let plan = ContractPlan::new(&a.shape, &b.shape, pairs, 0..a.order(), 0..b.order())?;
    if grad_out.shape != plan.out_shape {
        return Err(TensorError::Incompatible {
            left: grad_out.shape.clone(),
            right: plan.out_shape,
        });
    }
    // dA[free_a, con_a] = G[free_a, free_b] · B[con_b, free_b]^T
    let g = MatView {
        data: Cow::Borrowed(&grad_out.data),
        rs: plan.n as isize,
        cs: 1,
    };
    let vb = matrix_view(b, &[], &plan.con_b, &plan.free_b);
    let vbt = vb.transposed();
    let mut ga = vec![0.0; a.len()];
    gemm_acc(
        plan.m, plan.n, plan.k, &g.data, g.rs, g.cs, &vbt.data, vbt.rs, vbt.cs, &mut ga,
    );
    let ga_shape: Vec<usize> = plan
        .free_a
        .iter()
        .chain(&plan.con_a)
        .map(|&x| a.shape[x])
        .collect();
    let ga_axes: Vec<usize> = plan.free_a.iter().chain(&plan.con_a).copied().collect();
    let ga = permute_axes(
        &DenseTensor::from_parts(ga_shape, ga),
        &invert_permutation(&ga_axes),
    )?;

    // dB[con_b, free_b] = A[free_a, con_a]^T · G[free_a, free_b]
    let va = matrix_view(a, &[], &plan.free_a, &plan.con_a);
    let vat = va.transposed();
    let mut gb = vec![0.0; b.len()];
    gemm_acc(
        plan.k, plan.m, plan.n, &vat.data, vat.rs, vat.cs, &g.data, g.rs, g.cs, &mut gb,
    );
    let gb_shape: Vec<usize> = plan
        .con_b
        .iter()
        .chain(&plan.free_b)
        .map(|&y| b.shape[y])
        .collect();
    let gb_axes: Vec<usize> = plan.con_b.iter().chain(&plan.free_b).copied().collect();
    let gb = permute_axes(
        &DenseTensor::from_parts(gb_shape, gb),
        &invert_permutation(&gb_axes),
    )?;
    Ok((ga, gb))
}
