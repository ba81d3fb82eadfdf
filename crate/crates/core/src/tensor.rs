//! Dense row-major `f32` tensors and the GEMM kernels behind convolution and
//! the fully connected layers.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Root of every pseudo-random stream. Equal seeds give equal streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derives an independent child seed for a named consumer.
    ///
    /// The child is drawn from a ChaCha stream selected by `stream`, so forks
    /// with different stream ids do not overlap and the mapping is stable
    /// across runs and platforms.
    pub fn fork(self, stream: u64) -> RngSeed {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        RngSeed(rng.next_u64())
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    /// Multiply by a scalar operand.
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
    /// Index of the maximum; ties go to the lowest index. Indices are stored as `f32`.
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform {
        low: f32,
        high: f32,
    },
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    KaimingFanIn {
        fan_in: usize,
    },
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "shape {shape:?} holds {} elements but {} were given",
                numel(shape),
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let &[m, n] = self.shape.as_slice() else {
            return Err(Error::shape("transpose", &self.shape, &[0, 0]));
        };
        let mut out = vec![0.0; m * n];
        transpose_into(&self.data, m, n, &mut out);
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.shape.as_slice(), rhs.shape.as_slice()) else {
            return Err(Error::shape("matmul", &self.shape, &rhs.shape));
        };
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &rhs.shape));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(m, k, n, &self.data, &rhs.data, &mut out);
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn elementwise(&self, op: ElementwiseOp, rhs: Operand<'_>) -> Result<Tensor> {
        let data = match rhs {
            Operand::Scalar(s) => {
                let f: fn(f32, f32) -> f32 = match op {
                    ElementwiseOp::Add => |a, b| a + b,
                    ElementwiseOp::Sub => |a, b| a - b,
                    ElementwiseOp::Mul | ElementwiseOp::Scale => |a, b| a * b,
                };
                self.data.iter().map(|&a| f(a, s)).collect()
            }
            Operand::Tensor(t) => {
                if t.shape != self.shape {
                    return Err(Error::shape("elementwise", &self.shape, &t.shape));
                }
                let f: fn(f32, f32) -> f32 = match op {
                    ElementwiseOp::Add => |a, b| a + b,
                    ElementwiseOp::Sub => |a, b| a - b,
                    ElementwiseOp::Mul => |a, b| a * b,
                    ElementwiseOp::Scale => {
                        return Err(Error::InvalidArgument(
                            "scale takes a scalar operand".into(),
                        ))
                    }
                };
                self.data
                    .iter()
                    .zip(&t.data)
                    .map(|(&a, &b)| f(a, b))
                    .collect()
            }
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.elementwise(ElementwiseOp::Add, Operand::Tensor(rhs))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.elementwise(ElementwiseOp::Sub, Operand::Tensor(rhs))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.elementwise(ElementwiseOp::Mul, Operand::Tensor(rhs))
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Reduces over `axis`, or over every element when `axis` is `None`.
    ///
    /// The reduced axis is removed; a full reduction yields shape `[1]`.
    /// Sums and means accumulate in `f64`.
    pub fn reduce(&self, op: ReduceOp, axis: Option<usize>) -> Result<Tensor> {
        if self.data.is_empty() {
            return Err(Error::Domain("reduction over an empty tensor".into()));
        }
        let Some(axis) = axis else {
            return Ok(Tensor::scalar(reduce_strided(
                op,
                &self.data,
                0,
                self.data.len(),
                1,
            )));
        };
        if axis >= self.shape.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "axis {axis} out of range for rank {}",
                self.shape.len()
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                data.push(reduce_strided(
                    op,
                    &self.data,
                    o * len * inner + i,
                    len,
                    inner,
                ));
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Tensor { shape, data })
    }

    pub fn sum(&self) -> f32 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() as f32
    }

    /// Global argmax; ties resolve to the lowest index.
    pub fn argmax(&self) -> Result<usize> {
        if self.data.is_empty() {
            return Err(Error::Domain("argmax of an empty tensor".into()));
        }
        Ok(argmax(&self.data))
    }

    pub fn random_init(shape: &[usize], init: Init, seed: RngSeed) -> Result<Tensor> {
        if shape.is_empty() {
            return Err(Error::InvalidArgument(
                "random_init needs a non-empty shape".into(),
            ));
        }
        let mut rng = seed.rng();
        let n = numel(shape);
        let data = match init {
            Init::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "uniform interval [{low}, {high}] is empty"
                    )));
                }
                if low == high {
                    vec![low; n]
                } else {
                    (0..n).map(|_| rng.random_range(low..high)).collect()
                }
            }
            Init::KaimingFanIn { fan_in } => {
                if fan_in == 0 {
                    return Err(Error::InvalidArgument("fan_in must be positive".into()));
                }
                let std = libm::sqrt(2.0 / fan_in as f64);
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (z * std) as f32
                    })
                    .collect()
            }
        };
        Tensor::new(shape, data)
    }
}

fn reduce_strided(op: ReduceOp, data: &[f32], start: usize, len: usize, stride: usize) -> f32 {
    let it = (0..len).map(|j| data[start + j * stride]);
    match op {
        ReduceOp::Sum => it.map(|v| v as f64).sum::<f64>() as f32,
        ReduceOp::Mean => (it.map(|v| v as f64).sum::<f64>() / len as f64) as f32,
        ReduceOp::Max => it.fold(f32::NEG_INFINITY, f32::max),
        ReduceOp::Argmax => {
            let mut best = 0;
            let mut best_v = f32::NEG_INFINITY;
            for (j, v) in it.enumerate() {
                if v > best_v || j == 0 {
                    best = j;
                    best_v = v;
                }
            }
            best as f32
        }
    }
}

/// Index of the largest element, lowest index on ties. `xs` must be non-empty.
pub fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn transpose_into(src: &[f32], rows: usize, cols: usize, dst: &mut [f32]) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

const COL_TILE: usize = 512;

/// `c[m,n] += a[m,k] · b[k,n]`, all row-major.
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for j0 in (0..n).step_by(COL_TILE) {
        let j1 = (j0 + COL_TILE).min(n);
        let mut i = 0;
        while i + 4 <= m {
            let (c0, rest) = c[i * n..].split_at_mut(n);
            let (c1, rest) = rest.split_at_mut(n);
            let (c2, rest) = rest.split_at_mut(n);
            let c3 = &mut rest[..n];
            let (c0, c1, c2, c3) = (
                &mut c0[j0..j1],
                &mut c1[j0..j1],
                &mut c2[j0..j1],
                &mut c3[j0..j1],
            );
            for p in 0..k {
                let brow = &b[p * n + j0..p * n + j1];
                let (a0, a1, a2, a3) = (
                    a[i * k + p],
                    a[(i + 1) * k + p],
                    a[(i + 2) * k + p],
                    a[(i + 3) * k + p],
                );
                for ((((x0, x1), x2), x3), &bv) in c0
                    .iter_mut()
                    .zip(c1.iter_mut())
                    .zip(c2.iter_mut())
                    .zip(c3.iter_mut())
                    .zip(brow)
                {
                    *x0 += a0 * bv;
                    *x1 += a1 * bv;
                    *x2 += a2 * bv;
                    *x3 += a3 * bv;
                }
            }
            i += 4;
        }
        for i in i..m {
            let crow = &mut c[i * n + j0..i * n + j1];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &b[p * n + j0..p * n + j1];
                for (x, &bv) in crow.iter_mut().zip(brow) {
                    *x += av * bv;
                }
            }
        }
    }
}

/// `c[m,n] += a[m,k] · b[n,k]ᵀ`, all row-major. Each entry is a contiguous dot product.
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(a.matmul(&Tensor::identity(2)).unwrap(), a);
        let b = t(&[2, 2], &[5., 6., 7., 8.]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[19., 22., 43., 50.]);
        let row = t(&[1, 3], &[1., 2., 3.]);
        let col = t(&[3, 1], &[4., 5., 6.]);
        let out = row.matmul(&col).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[32.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn gemm_kernels_agree_with_naive_product() {
        let mut rng = RngSeed(3).rng();
        for &(m, k, n) in &[(1, 1, 1), (5, 7, 3), (9, 33, 600), (4, 8, 513), (13, 2, 17)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut naive = vec![0.0f64; m * n];
            for i in 0..m {
                for j in 0..n {
                    for p in 0..k {
                        naive[i * n + j] += a[i * k + p] as f64 * b[p * n + j] as f64;
                    }
                }
            }
            let mut c = vec![0.0; m * n];
            gemm_nn(m, k, n, &a, &b, &mut c);
            let mut bt = vec![0.0; k * n];
            transpose_into(&b, k, n, &mut bt);
            let mut c2 = vec![0.0; m * n];
            gemm_nt(m, k, n, &a, &bt, &mut c2);
            for idx in 0..m * n {
                assert!((c[idx] as f64 - naive[idx]).abs() < 1e-4);
                assert!((c2[idx] as f64 - naive[idx]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn elementwise_examples() {
        let a = t(&[2], &[1., 2.]);
        assert_eq!(a.add(&Tensor::zeros(&[2])).unwrap(), a);
        let m = t(&[3], &[1., 2., 3.]).mul(&t(&[3], &[2., 2., 2.])).unwrap();
        assert_eq!(m.data(), &[2., 4., 6.]);
        let s = t(&[2], &[1., -1.])
            .elementwise(ElementwiseOp::Scale, Operand::Scalar(-1.0))
            .unwrap();
        assert_eq!(s.data(), &[-1., 1.]);
        assert!(a.add(&Tensor::zeros(&[3])).is_err());
        assert!(a.sub(&a).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reduce_examples() {
        let x = t(&[3], &[1., 2., 3.]);
        assert_eq!(x.reduce(ReduceOp::Sum, None).unwrap().data(), &[6.]);
        assert_eq!(t(&[2], &[0.1, 0.9]).argmax().unwrap(), 1);
        let eq = Tensor::full(&[4], 2.5);
        assert_eq!(eq.reduce(ReduceOp::Max, None).unwrap().data(), &[2.5]);
        assert_eq!(eq.argmax().unwrap(), 0);
        assert_eq!(eq.reduce(ReduceOp::Argmax, None).unwrap().data(), &[0.]);

        let m = t(&[2, 3], &[1., 5., 3., 4., 2., 6.]);
        assert_eq!(
            m.reduce(ReduceOp::Sum, Some(0)).unwrap().data(),
            &[5., 7., 9.]
        );
        assert_eq!(m.reduce(ReduceOp::Mean, Some(1)).unwrap().data(), &[3., 4.]);
        assert_eq!(
            m.reduce(ReduceOp::Argmax, Some(1)).unwrap().data(),
            &[1., 2.]
        );
        assert_eq!(m.reduce(ReduceOp::Max, Some(0)).unwrap().shape(), &[3]);
        assert!(m.reduce(ReduceOp::Sum, Some(2)).is_err());
    }

    #[test]
    fn reduce_empty_is_domain_error() {
        let e = Tensor::new(&[0], vec![]).unwrap();
        assert!(matches!(
            e.reduce(ReduceOp::Sum, None),
            Err(Error::Domain(_))
        ));
        assert!(matches!(e.argmax(), Err(Error::Domain(_))));
    }

    #[test]
    fn random_init_examples() {
        let init = Init::KaimingFanIn { fan_in: 100 };
        let a = Tensor::random_init(&[4, 5], init, RngSeed(7)).unwrap();
        let b = Tensor::random_init(&[4, 5], init, RngSeed(7)).unwrap();
        assert_eq!(a, b);
        let c = Tensor::random_init(&[4, 5], init, RngSeed(8)).unwrap();
        assert_ne!(a, c);

        let z = Tensor::random_init(
            &[10],
            Init::Uniform {
                low: 0.0,
                high: 0.0,
            },
            RngSeed(1),
        )
        .unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));

        let u = Tensor::random_init(
            &[1000],
            Init::Uniform {
                low: -2.0,
                high: 3.0,
            },
            RngSeed(1),
        )
        .unwrap();
        assert!(u.data().iter().all(|&v| (-2.0..3.0).contains(&v)));
        assert!(Tensor::random_init(&[], init, RngSeed(1)).is_err());
    }

    #[test]
    fn kaiming_sample_std_matches_fan_in() {
        let x = Tensor::random_init(
            &[1_000_000],
            Init::KaimingFanIn { fan_in: 100 },
            RngSeed(11),
        )
        .unwrap();
        let n = x.len() as f64;
        let mean = x.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let expected = (2.0f64 / 100.0).sqrt();
        assert!((var.sqrt() - expected).abs() / expected < 0.02);
    }

    #[test]
    fn fork_is_stable_and_distinct() {
        let s = RngSeed(42);
        assert_eq!(s.fork(1), s.fork(1));
        assert_ne!(s.fork(1), s.fork(2));
        assert_ne!(s.fork(1), RngSeed(43).fork(1));
    }
}
