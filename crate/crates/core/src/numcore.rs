//! Numeric substrate: dense vectors and matrices, softmax, norms, a seeded
//! random stream, power iteration and central finite differences.
//!
//! Everything here is `f64` and single-pass deterministic: for a fixed seed
//! and fixed call order every kernel produces the same bits on every
//! platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{BdpError, Result};

/// Plain owned vector of doubles.
pub type Vec64 = Vec<f64>;

/// Row-major dense matrix with a fixed shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(BdpError::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec64> {
        if x.len() != self.cols {
            return Err(BdpError::LengthMismatch {
                expected: self.cols,
                actual: x.len(),
            });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s * x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Index of the first maximal entry.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec64> {
    if v.is_empty() {
        return Err(BdpError::LengthMismatch {
            expected: 1,
            actual: 0,
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BdpError::NonFiniteLogits);
    }
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec64 = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    Ok(out)
}

/// Euclidean distance between two equal-length vectors.
pub fn l2_distance(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(BdpError::LengthMismatch {
            expected: p.len(),
            actual: y.len(),
        });
    }
    Ok(p.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Seeded random stream backed by ChaCha8.
///
/// The raw 64-bit words come from ChaCha8 keyed by `seed_from_u64(seed)` on
/// stream `stream`. Derived draws are defined here, not by `rand`, so the
/// sequence does not change with `rand` releases:
///
/// * `uniform()`: top 53 bits of a word times 2^-53, in `[0, 1)`.
/// * `normal()`: Box-Muller on two uniforms, the second output cached.
/// * `below(n)`: rejection sampling on the full 64-bit range.
/// * `shuffle()`: Fisher-Yates from the back using `below`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            inner,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for a named component; depends only on the seed
    /// and the tag, never on how many draws this stream has made.
    pub fn derive(&self, tag: &str) -> RngStream {
        Self::with_stream(self.seed, fnv1a(tag.as_bytes()))
    }

    /// Like [`derive`](Self::derive) with an extra integer discriminator.
    pub fn derive_indexed(&self, tag: &str, index: u64) -> RngStream {
        let mut bytes = tag.as_bytes().to_vec();
        bytes.push(b'#');
        bytes.extend_from_slice(&index.to_le_bytes());
        Self::with_stream(self.seed, fnv1a(&bytes))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Shorthand for [`RngStream::new`].
pub fn seeded_rng(seed: u64) -> RngStream {
    RngStream::new(seed)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const ZERO_VECTOR_RETRIES: usize = 3;

/// Dominant eigenpair of a symmetric linear operator by power iteration.
///
/// The eigenvalue is the Rayleigh quotient `vᵀAv` of the unit iterate, so a
/// negative dominant eigenvalue keeps its sign. Stops when successive
/// quotients differ by at most `tol` or after `max_iters` products.
pub fn power_iteration<F>(
    mut matvec: F,
    dim: usize,
    max_iters: usize,
    tol: f64,
    rng: &mut RngStream,
) -> Result<(f64, Vec64)>
where
    F: FnMut(&[f64]) -> Result<Vec64>,
{
    if dim == 0 {
        return Err(BdpError::InvalidConfig("power iteration dim must be >= 1".into()));
    }
    let mut v = start_vector(dim, rng)?;
    let mut prev: Option<f64> = None;
    let mut lambda = 0.0;
    for _ in 0..max_iters.max(1) {
        let w = matvec(&v)?;
        if w.len() != dim {
            return Err(BdpError::LengthMismatch {
                expected: dim,
                actual: w.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(BdpError::NonFinite("operator output".into()));
        }
        lambda = dot(&v, &w);
        let nw = norm2(&w);
        if nw == 0.0 {
            // v lies in the null space: an exact eigenpair with eigenvalue 0.
            return Ok((0.0, v));
        }
        let converged = prev.is_some_and(|p| (lambda - p).abs() <= tol);
        if converged {
            break;
        }
        prev = Some(lambda);
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Ok((lambda, v))
}

fn start_vector(dim: usize, rng: &mut RngStream) -> Result<Vec64> {
    for _ in 0..=ZERO_VECTOR_RETRIES {
        let v: Vec64 = (0..dim).map(|_| rng.normal()).collect();
        let n = norm2(&v);
        if n > 1e-300 && n.is_finite() {
            return Ok(v.into_iter().map(|x| x / n).collect());
        }
    }
    Err(BdpError::ZeroStartVector)
}

/// Central-difference gradient: component i is
/// `(f(x + h eᵢ) - f(x - h eᵢ)) / 2h`.
pub fn central_diff_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(BdpError::InvalidConfig("step h must be positive".into()));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(BdpError::NonFinite(format!("probe at coordinate {i}")));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        assert!(close(&softmax(&[0.0; 5]).unwrap(), &[0.2; 5], 1e-15));
        assert!(close(&softmax(&[1000.0, 1000.0]).unwrap(), &[0.5, 0.5], 1e-15));
        let s = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!(close(&s, &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert_eq!(softmax(&[0.0, f64::NAN]), Err(BdpError::NonFiniteLogits));
        assert_eq!(softmax(&[f64::INFINITY]), Err(BdpError::NonFiniteLogits));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_distance(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let d = l2_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((l2_distance(&[0.0, 1.0], &[1.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(l2_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn power_iteration_diagonal() {
        let diag = [5.0, 1.0, -3.0];
        let mut rng = seeded_rng(7);
        let (l, v) = power_iteration(
            |x| Ok(x.iter().zip(&diag).map(|(a, d)| a * d).collect()),
            3,
            1000,
            1e-14,
            &mut rng,
        )
        .unwrap();
        assert!((l - 5.0).abs() < 1e-9, "{l}");
        assert!((norm2(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_negative_dominant_keeps_sign() {
        let diag = [1.0, -4.0, 2.0];
        let mut rng = seeded_rng(3);
        let (l, _) = power_iteration(
            |x| Ok(x.iter().zip(&diag).map(|(a, d)| a * d).collect()),
            3,
            2000,
            1e-14,
            &mut rng,
        )
        .unwrap();
        assert!((l + 4.0).abs() < 1e-9, "{l}");
    }

    #[test]
    fn power_iteration_identity() {
        let mut rng = seeded_rng(1);
        let (l, _) = power_iteration(|x| Ok(x.to_vec()), 4, 10, 1e-12, &mut rng).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_wrong_dimension() {
        let mut rng = seeded_rng(1);
        let r = power_iteration(|_| Ok(vec![1.0; 2]), 3, 10, 1e-9, &mut rng);
        assert!(matches!(r, Err(BdpError::LengthMismatch { .. })));
    }

    #[test]
    fn power_iteration_zero_operator() {
        let mut rng = seeded_rng(1);
        let (l, _) = power_iteration(|x| Ok(vec![0.0; x.len()]), 3, 10, 1e-9, &mut rng).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn central_diff_examples() {
        let g = central_diff_gradient(|x| 0.5 * dot(x, x), &[1.0, 2.0], 1e-5).unwrap();
        assert!(close(&g, &[1.0, 2.0], 1e-8));
        let g = central_diff_gradient(|_| 3.0, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(close(&g, &[0.0; 3], 0.0));
        assert!(central_diff_gradient(|_| f64::NAN, &[1.0], 1e-5).is_err());
        assert!(central_diff_gradient(|_| 0.0, &[1.0], 0.0).is_err());
    }

    #[test]
    fn central_diff_matches_softmax_ce_gradient() {
        // logits = A x + c, loss = -ln softmax(logits)[target]
        let a = Mat64::from_vec(3, 2, vec![0.3, -1.2, 0.7, 0.4, -0.5, 0.9]).unwrap();
        let c = [0.1, -0.2, 0.05];
        let target = 2;
        let loss = |x: &[f64]| {
            let mut z = a.matvec(x).unwrap();
            z.iter_mut().zip(&c).for_each(|(zi, ci)| *zi += ci);
            -softmax(&z).unwrap()[target].ln()
        };
        let x = [0.8, -0.3];
        let mut z = a.matvec(&x).unwrap();
        z.iter_mut().zip(&c).for_each(|(zi, ci)| *zi += ci);
        let mut dz = softmax(&z).unwrap();
        dz[target] -= 1.0;
        let analytic: Vec<f64> = (0..2)
            .map(|j| (0..3).map(|i| a.get(i, j) * dz[i]).sum())
            .collect();
        let numeric = central_diff_gradient(loss, &x, 1e-5).unwrap();
        assert!(close(&analytic, &numeric, 1e-6));
    }

    #[test]
    fn rng_determinism_and_distinct_seeds() {
        let mut a = seeded_rng(42);
        let mut b = seeded_rng(42);
        let da: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let db: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(da, db);
        let mut c = seeded_rng(43);
        let dc: Vec<u64> = (0..100).map(|_| c.next_u64()).collect();
        assert!(da.iter().zip(&dc).any(|(x, y)| x != y));
    }

    #[test]
    fn rng_shuffle_is_permutation() {
        let mut rng = seeded_rng(9);
        let mut v: Vec<usize> = (0..10).collect();
        rng.shuffle(&mut v);
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn derived_streams_are_independent_of_parent_position() {
        let mut root = seeded_rng(5);
        let d1 = root.derive("split").next_u64();
        root.next_u64();
        let d2 = root.derive("split").next_u64();
        assert_eq!(d1, d2);
        assert_ne!(root.derive("split").next_u64(), root.derive("search").next_u64());
        assert_ne!(
            root.derive_indexed("eig", 1).next_u64(),
            root.derive_indexed("eig", 2).next_u64()
        );
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = seeded_rng(11);
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(rng.normal().is_finite());
        }
    }
}
