//! Degree-resolved tensor algebra.
//!
//! A [`DegreeTensor`] is a dense tensor whose axis 0 is a degree index:
//! slice `j` holds the part of the value built from products of exactly
//! `j` features. The degree-preserving product convolves this index,
//!
//! ```text
//! (A ⊛ B)[j, i.., k..] = Σ_{ja + jb = j} A[ja, i..] · B[jb, k..]
//! ```
//!
//! and the degree-preserving contraction additionally sums paired
//! non-degree axes. Feeding the diagonal feature matrices
//! `H(x) = [[1, 0], [0, x]]` through a network with these operations keeps
//! every interaction degree in its own slice. An optional cap `j_max`
//! drops all slices above `j_max` as soon as they would be produced.

use std::borrow::Cow;
use std::cell::Cell;

use crate::tensor::{
    gemm_acc, invert_permutation, matrix_view, permute_axes, ContractPlan, DenseTensor, MatView,
    Result, TensorError,
};

thread_local! {
    static SLICE_PRODUCTS: Cell<u64> = const { Cell::new(0) };
}

/// Number of slice-pair products performed on this thread since the last
/// [`reset_slice_product_count`].
pub fn slice_product_count() -> u64 {
    SLICE_PRODUCTS.with(|c| c.get())
}

pub fn reset_slice_product_count() {
    SLICE_PRODUCTS.with(|c| c.set(0));
}

fn record_slice_products(n: u64) {
    SLICE_PRODUCTS.with(|c| c.set(c.get() + n));
}

/// Number of slice products needed for the uncapped degree-preserving
/// product of operands whose largest degrees are `j_bar_a` and `j_bar_b`.
pub fn term_count(j_bar_a: usize, j_bar_b: usize) -> usize {
    (j_bar_a + 1) * (j_bar_b + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeTensor {
    inner: DenseTensor,
}

impl DegreeTensor {
    pub fn new(inner: DenseTensor) -> Result<Self> {
        if inner.order() == 0 {
            return Err(TensorError::MissingDegreeAxis);
        }
        Ok(Self { inner })
    }

    pub fn inner(&self) -> &DenseTensor {
        &self.inner
    }

    pub fn into_inner(self) -> DenseTensor {
        self.inner
    }

    pub fn degree_extent(&self) -> usize {
        self.inner.shape()[0]
    }

    /// Shape without the degree axis.
    pub fn value_shape(&self) -> &[usize] {
        &self.inner.shape()[1..]
    }

    /// The degree-`j` slice.
    pub fn slice(&self, j: usize) -> Result<DenseTensor> {
        self.inner.leading_slice(j)
    }

    /// Sum over the degree axis.
    pub fn collapse(&self) -> DenseTensor {
        let e = self.degree_extent();
        let len = self.inner.len() / e;
        let mut out = vec![0.0; len];
        for j in 0..e {
            for (o, v) in out.iter_mut().zip(&self.inner.data()[j * len..(j + 1) * len]) {
                *o += v;
            }
        }
        DenseTensor::from_parts(self.value_shape().to_vec(), out)
    }

    /// Drops all slices above `j_max`.
    pub fn truncate(&self, j_max: usize) -> DegreeTensor {
        let e = self.degree_extent().min(j_max + 1);
        let len = self.inner.len() / self.degree_extent();
        let mut shape = self.inner.shape().to_vec();
        shape[0] = e;
        DegreeTensor {
            inner: DenseTensor::from_parts(shape, self.inner.data()[..e * len].to_vec()),
        }
    }
}

/// Adds a degree axis of size one; the value becomes the degree-0 slice.
pub fn lift(a: &DenseTensor) -> DegreeTensor {
    let mut shape = Vec::with_capacity(a.order() + 1);
    shape.push(1);
    shape.extend_from_slice(a.shape());
    DegreeTensor {
        inner: DenseTensor::from_parts(shape, a.data().to_vec()),
    }
}

/// The local feature map `[1, x]`.
pub fn h_feature(x: f64) -> Result<DenseTensor> {
    if !x.is_finite() {
        return Err(TensorError::NonFiniteFeature(x));
    }
    Ok(DenseTensor::from_parts(vec![2], vec![1.0, x]))
}

/// The degree-aligned feature matrix `[[1, 0], [0, x]]`: row `j` carries the
/// degree-`j` part of `[1, x]`.
pub fn h_feature_matrix(x: f64) -> Result<DegreeTensor> {
    if !x.is_finite() {
        return Err(TensorError::NonFiniteFeature(x));
    }
    Ok(DegreeTensor {
        inner: DenseTensor::from_parts(vec![2, 2], vec![1.0, 0.0, 0.0, x]),
    })
}

fn output_extent(ea: usize, eb: usize, j_max: Option<usize>) -> usize {
    let full = ea + eb - 1;
    match j_max {
        Some(cap) => full.min(cap + 1),
        None => full,
    }
}

/// Degree-preserving tensor product.
pub fn degree_product(
    a: &DegreeTensor,
    b: &DegreeTensor,
    j_max: Option<usize>,
) -> Result<DegreeTensor> {
    degree_contract(a, b, &[], j_max)
}

/// Degree-preserving contraction over `pairs` of non-degree axes (axis
/// numbers include the degree axis, so valid axes start at 1). Each output
/// slice accumulates its `(ja, jb)` products in ascending `ja` order.
pub fn degree_contract(
    a: &DegreeTensor,
    b: &DegreeTensor,
    pairs: &[(usize, usize)],
    j_max: Option<usize>,
) -> Result<DegreeTensor> {
    Ok(DegreeTensor {
        inner: degree_contract_dense(&a.inner, &b.inner, pairs, j_max)?,
    })
}

/// [`degree_contract`] on plain tensors whose axis 0 is the degree axis.
pub fn degree_contract_dense(
    a: &DenseTensor,
    b: &DenseTensor,
    pairs: &[(usize, usize)],
    j_max: Option<usize>,
) -> Result<DenseTensor> {
    if a.order() == 0 || b.order() == 0 {
        return Err(TensorError::MissingDegreeAxis);
    }
    let (sa, sb) = (a.shape(), b.shape());
    let plan = ContractPlan::new(sa, sb, pairs, 1..sa.len(), 1..sb.len())?;
    let (ea, eb) = (sa[0], sb[0]);
    let e_out = output_extent(ea, eb, j_max);
    let mut shape = Vec::with_capacity(plan.out_shape.len() + 1);
    shape.push(e_out);
    shape.extend_from_slice(&plan.out_shape);
    let mut out = DenseTensor::zeros(shape)?.into_data();

    let va = matrix_view(a, &[0], &plan.free_a, &plan.con_a);
    let vb = matrix_view(b, &[0], &plan.con_b, &plan.free_b);
    let (m, k, n) = (plan.m, plan.k, plan.n);
    let (sla, slb, slc) = (m * k, k * n, m * n);
    let mut products = 0u64;
    for j in 0..e_out {
        let c = &mut out[j * slc..(j + 1) * slc];
        let lo = j.saturating_sub(eb - 1);
        let hi = j.min(ea - 1);
        for ja in lo..=hi {
            let jb = j - ja;
            gemm_acc(
                m,
                k,
                n,
                &va.data[ja * sla..],
                va.rs,
                va.cs,
                &vb.data[jb * slb..],
                vb.rs,
                vb.cs,
                c,
            );
            products += 1;
        }
    }
    record_slice_products(products);
    Ok(DenseTensor::from_parts(
        std::iter::once(e_out).chain(plan.out_shape).collect(),
        out,
    ))
}

/// Adjoints of [`degree_contract`]. The convolution over the degree index
/// transposes to a correlation: `dA[ja] = Σ_jb dC[ja + jb] · B[jb]ᵀ`.
pub fn degree_contract_backward(
    a: &DegreeTensor,
    b: &DegreeTensor,
    pairs: &[(usize, usize)],
    j_max: Option<usize>,
    grad_out: &DenseTensor,
) -> Result<(DenseTensor, DenseTensor)> {
    degree_contract_backward_dense(&a.inner, &b.inner, pairs, j_max, grad_out)
}

/// [`degree_contract_backward`] on plain tensors whose axis 0 is the degree
/// axis.
pub fn degree_contract_backward_dense(
    a: &DenseTensor,
    b: &DenseTensor,
    pairs: &[(usize, usize)],
    j_max: Option<usize>,
    grad_out: &DenseTensor,
) -> Result<(DenseTensor, DenseTensor)> {
    if a.order() == 0 || b.order() == 0 {
        return Err(TensorError::MissingDegreeAxis);
    }
    let (sa, sb) = (a.shape(), b.shape());
    let plan = ContractPlan::new(sa, sb, pairs, 1..sa.len(), 1..sb.len())?;
    let (ea, eb) = (sa[0], sb[0]);
    let e_out = output_extent(ea, eb, j_max);
    let expect: Vec<usize> = std::iter::once(e_out).chain(plan.out_shape.clone()).collect();
    if grad_out.shape() != expect.as_slice() {
        return Err(TensorError::Incompatible {
            left: grad_out.shape().to_vec(),
            right: expect,
        });
    }
    let (m, k, n) = (plan.m, plan.k, plan.n);
    let (sla, slb, slc) = (m * k, k * n, m * n);
    let g = MatView {
        data: Cow::Borrowed(grad_out.data()),
        rs: n as isize,
        cs: 1,
    };
    let va = matrix_view(a, &[0], &plan.free_a, &plan.con_a);
    let vb = matrix_view(b, &[0], &plan.con_b, &plan.free_b);
    let (vat, vbt) = (va.transposed(), vb.transposed());

    let mut ga = vec![0.0; ea * sla];
    let mut gb = vec![0.0; eb * slb];
    for ja in 0..ea {
        for jb in 0..eb {
            let j = ja + jb;
            if j >= e_out {
                break;
            }
            gemm_acc(
                m,
                n,
                k,
                &g.data[j * slc..],
                g.rs,
                g.cs,
                &vbt.data[jb * slb..],
                vbt.rs,
                vbt.cs,
                &mut ga[ja * sla..(ja + 1) * sla],
            );
            gemm_acc(
                k,
                m,
                n,
                &vat.data[ja * sla..],
                vat.rs,
                vat.cs,
                &g.data[j * slc..],
                g.rs,
                g.cs,
                &mut gb[jb * slb..(jb + 1) * slb],
            );
        }
    }

    let a_axes: Vec<usize> = std::iter::once(0)
        .chain(plan.free_a.iter().copied())
        .chain(plan.con_a.iter().copied())
        .collect();
    let ga_shape: Vec<usize> = a_axes.iter().map(|&x| sa[x]).collect();
    let ga = permute_axes(
        &DenseTensor::from_parts(ga_shape, ga),
        &invert_permutation(&a_axes),
    )?;
    let b_axes: Vec<usize> = std::iter::once(0)
        .chain(plan.con_b.iter().copied())
        .chain(plan.free_b.iter().copied())
        .collect();
    let gb_shape: Vec<usize> = b_axes.iter().map(|&y| sb[y]).collect();
    let gb = permute_axes(
        &DenseTensor::from_parts(gb_shape, gb),
        &invert_permutation(&b_axes),
    )?;
    Ok((ga, gb))
}
