//! Complex linear-algebra substrate shared by the whole pipeline.
//!
//! Matrices are [`faer::Mat`]; the SVD behind the pseudo-inverse comes from
//! faer as well. The DFT is an explicit normalized matrix, which at N = 64 is
//! cheap and keeps `F_N` literally available for the oracle tests.

use std::f64::consts::PI;

use faer::traits::ComplexField;
use faer::Mat;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = Mat<C64>;
pub type RealMatrix = Mat<f64>;

/// Scalars the pseudo-inverse is generic over (`f64` and `C64`).
pub trait Scalar: ComplexField + Copy {
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn is_finite_value(self) -> bool;
}

impl Scalar for f64 {
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for C64 {
    fn from_real(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Normalized N-point DFT with a cached twiddle table.
///
/// Entry `(k, l)` of `F_N` is `exp(-j 2 pi k l / N) / sqrt(N)`; the table is
/// indexed by `k * l mod N` so the matrix and the vector routines agree bit
/// for bit.
#[derive(Debug, Clone)]
pub struct Dft {
    n: usize,
    twiddles: Vec<C64>,
}

impl Dft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let twiddles = (0..n)
            .map(|i| C64::from_polar(scale, -2.0 * PI * i as f64 / n as f64))
            .collect();
        Ok(Self { n, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entry(&self, k: usize, l: usize) -> C64 {
        self.twiddles[(k * l) % self.n]
    }

    pub fn matrix(&self) -> ComplexMatrix {
        Mat::from_fn(self.n, self.n, |k, l| self.entry(k, l))
    }

    /// `F_N x`.
    pub fn forward(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(l, &v)| v * self.entry(k, l))
                    .sum()
            })
            .collect()
    }

    /// `F_N^H x`.
    pub fn inverse(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|l| {
                x.iter()
                    .enumerate()
                    .map(|(k, &v)| v * self.entry(k, l).conj())
                    .sum()
            })
            .collect()
    }
}

pub fn dft_matrix(n: usize) -> Result<ComplexMatrix> {
    Ok(Dft::new(n)?.matrix())
}

/// Default relative truncation tolerance: machine epsilon times the larger
/// matrix dimension.
pub fn default_pinv_tolerance(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols) as f64
}

struct ThinSvd<T: Scalar> {
    u: Mat<T>,
    s: Vec<f64>,
    v: Mat<T>,
}

fn thin_svd<T: Scalar>(m: &Mat<T>) -> Result<ThinSvd<T>> {
    if let Some(bad) = (0..m.ncols())
        .flat_map(|j| (0..m.nrows()).map(move |i| (i, j)))
        .find(|&(i, j)| !m[(i, j)].is_finite_value())
    {
        return Err(Error::InvalidInput(format!(
            "non-finite entry at ({}, {})",
            bad.0, bad.1
        )));
    }
    let svd = m.thin_svd().map_err(|_| Error::SvdNoConvergence)?;
    let s = svd
        .S()
        .column_vector()
        .iter()
        .map(|&x| x.modulus())
        .collect();
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s,
        v: svd.V().to_owned(),
    })
}

/// Reciprocal singular values with relative truncation and optional ridge.
fn filtered_inverse(s: &[f64], tol: f64, ridge: f64) -> Vec<f64> {
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * smax;
    s.iter()
        .map(|&x| {
            if smax == 0.0 || x <= cutoff {
                0.0
            } else if ridge > 0.0 {
                x / (x * x + ridge)
            } else {
                1.0 / x
            }
        })
        .collect()
}

/// Moore-Penrose pseudo-inverse via the thin SVD.
///
/// Singular values at or below `tol * sigma_max` are treated as zero. Pass
/// `None` for the default tolerance.
pub fn pseudo_inverse<T: Scalar>(m: &Mat<T>, tol: Option<f64>) -> Result<Mat<T>> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let tol = tol.unwrap_or_else(|| default_pinv_tolerance(rows, cols));
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be >= 0")));
    }
    if rows == 0 || cols == 0 {
        return Ok(Mat::zeros(cols, rows));
    }
    let svd = thin_svd(m)?;
    let inv = filtered_inverse(&svd.s, tol, 0.0);
    let mut vs = svd.v;
    for (j, &w) in inv.iter().enumerate() {
        let w = T::from_real(w);
        for i in 0..vs.nrows() {
            vs[(i, j)] = vs[(i, j)] * w;
        }
    }
    Ok(&vs * svd.u.adjoint())
}

/// Solves `min_X ||X A - B||_F` (plus `ridge * ||X||_F^2`), i.e. returns
/// `B A^+` without materializing the pseudo-inverse of `A`.
///
/// `A` is `k x n` and `B` is `r x n`; the result is `r x k`. With
/// `ridge = 0` this is exactly `B * pseudo_inverse(A, tol)`.
pub fn right_least_squares(
    design: &RealMatrix,
    targets: &RealMatrix,
    tol: Option<f64>,
    ridge: f64,
) -> Result<RealMatrix> {
    if design.ncols() != targets.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, targets have {}",
            design.ncols(),
            targets.ncols()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge {ridge} must be >= 0")));
    }
    let (k, n) = (design.nrows(), design.ncols());
    if k == 0 || n == 0 {
        return Ok(Mat::zeros(targets.nrows(), k));
    }
    let tol = tol.unwrap_or_else(|| default_pinv_tolerance(k, n));
    let svd = thin_svd(design)?;
    let inv = filtered_inverse(&svd.s, tol, ridge);
    // B V diag(inv) U^T
    let mut bv = targets * &svd.v;
    for (j, &w) in inv.iter().enumerate() {
        for i in 0..bv.nrows() {
            bv[(i, j)] *= w;
        }
    }
    Ok(&bv * svd.u.transpose())
}

/// Singular values of `m`, largest first.
pub fn singular_values<T: Scalar>(m: &Mat<T>) -> Result<Vec<f64>> {
    Ok(thin_svd(m)?.s)
}

pub fn frobenius_norm<T: Scalar>(m: &Mat<T>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)].modulus();
            acc += v * v;
        }
    }
    acc.sqrt()
}

pub fn max_abs_diff<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).modulus());
        }
    }
    worst
}

// Domain tags keep independent consumers of one user seed on disjoint keys.
pub mod domain {
    pub const TRIAL: u64 = 0x7472_6961_6c00_0001;
    pub const TRAINING: u64 = 0x7472_6169_6e00_0002;
    pub const PROBE: u64 = 0x7072_6f62_6500_0003;
    pub const ELM_INIT: u64 = 0x656c_6d69_6e00_0004;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Reproducible ChaCha8 generator.
///
/// `(seed, domain)` selects the key and `stream` the ChaCha stream, so
/// generators derived for different trial indices never share output.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, 0, 0)
    }

    pub fn derive(seed: u64, domain: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` i.i.d. circularly symmetric complex Gaussian samples of total variance
/// `variance` (each quadrature gets `variance / 2`).
pub fn complex_gaussian(rng: &mut SeededRng, n: usize, variance: f64) -> Result<Vec<C64>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "variance {variance} must be finite and >= 0"
        )));
    }
    let sd = (variance / 2.0).sqrt();
    Ok((0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(sd * re, sd * im)
        })
        .collect())
}
