//! Dense row-major tensors (BHSD layout) and symmetric per-tensor int8
//! quantization.
//!
//! Quantization is zero-point-free: `scale = max|x| / 127`, codes live in
//! `[-127, 127]` so negation stays representable. Rounding is
//! half-away-from-zero for cross-platform determinism.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const QMAX: i32 = 127;

/// Dense float tensor. `dims` is BHSD: batch, heads, sequence, head-dim.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Real> {
    dims: Vec<usize>,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn new(dims: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::validation("tensor must have at least one dim"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::validation("tensor dims must be positive"));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::validation(format!(
                "data length {} does not match dims product {}",
                data.len(),
                n
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("tensor contains non-finite values"));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        Tensor::new(dims, vec![S::zero(); n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Last dim, i.e. d_k for attention tensors.
    pub fn head_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |m, &x| if x.abs() > m { x.abs() } else { m })
    }

    /// Map elements through `f`, keeping dims. The result is re-validated.
    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        Tensor::new(self.dims.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    /// Extract one head of a BHSD tensor as a `[1, 1, S, D]` tensor.
    pub fn slice_head(&self, head: usize) -> Result<Self> {
        if self.dims.len() != 4 || self.dims[0] != 1 {
            return Err(Error::validation("slice_head expects a batch-1 BHSD tensor"));
        }
        let (h, s, d) = (self.dims[1], self.dims[2], self.dims[3]);
        if head >= h {
            return Err(Error::validation(format!("head {head} out of range ({h} heads)")));
        }
        let base = head * s * d;
        Tensor::new(vec![1, 1, s, d], self.data[base..base + s * d].to_vec())
    }
}

/// Int8 tensor plus the single positive scale factor lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor<S: Real> {
    dims: Vec<usize>,
    data: Vec<i8>,
    scale: S,
}

impl<S: Real> QuantizedTensor<S> {
    pub fn new(dims: Vec<usize>, data: Vec<i8>, scale: S) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::validation("quantized tensor dims must be positive"));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::validation("quantized data length mismatch"));
        }
        if !(scale > S::zero()) || !scale.is_finite() {
            return Err(Error::validation("scale must be a positive finite float"));
        }
        if data.iter().any(|&v| v == i8::MIN) {
            return Err(Error::validation("code -128 is outside the symmetric range"));
        }
        Ok(QuantizedTensor { dims, data, scale })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn scale(&self) -> S {
        self.scale
    }

    pub fn head_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }
}

/// Symmetric per-tensor quantization.
///
/// Without an override the scale is `max|x| / 127`, falling back to 1.0 on an
/// all-zero tensor so the `scale > 0` invariant always holds.
pub fn quantize<S: Real>(t: &Tensor<S>, scale_override: Option<S>) -> Result<QuantizedTensor<S>> {
    let scale = match scale_override {
        Some(s) => {
            if !(s > S::zero()) || !s.is_finite() {
                return Err(Error::validation("scale override must be positive"));
            }
            s
        }
        None => {
            let m = t.max_abs();
            if m == S::zero() {
                S::one()
            } else {
                m / S::from_f64_lossy(QMAX as f64)
            }
        }
    };
    let lo = S::from_f64_lossy(-(QMAX as f64));
    let hi = S::from_f64_lossy(QMAX as f64);
    let data = t
        .data()
        .iter()
        .map(|&x| {
            // f32/f64 round() is half-away-from-zero.
            let q = (x / scale).round();
            let q = if q < lo { lo } else if q > hi { hi } else { q };
            q.to_f64_lossy() as i8
        })
        .collect();
    QuantizedTensor::new(t.dims().to_vec(), data, scale)
}

pub fn dequantize<S: Real>(q: &QuantizedTensor<S>) -> Tensor<S> {
    let scale = q.scale();
    let data = q
        .data()
        .iter()
        .map(|&v| scale * S::from_f64_lossy(v as f64))
        .collect();
    Tensor::new(q.dims().to_vec(), data).expect("dequantized values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f32>) -> Tensor<f32> {
        let n = data.len();
        Tensor::new(vec![1, 1, 1, n], data).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::new(vec![2], vec![1.0f32, f32::NAN]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0f32, f32::INFINITY]).is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(vec![3], vec![1.0f32, 2.0]).is_err());
    }

    #[test]
    fn exact_endpoints() {
        let q = quantize(&t(vec![127.0, -127.0]), None).unwrap();
        assert_eq!(q.scale(), 1.0);
        assert_eq!(q.data(), &[127, -127]);
    }

    #[test]
    fn all_zero_fallback_scale() {
        let q = quantize(&t(vec![0.0, 0.0, 0.0]), None).unwrap();
        assert_eq!(q.scale(), 1.0);
        assert!(q.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn round_half_away_from_zero() {
        let q = quantize(&t(vec![0.5, -0.5, 1.5, 127.0]), Some(1.0)).unwrap();
        assert_eq!(q.data(), &[1, -1, 2, 127]);
    }

    #[test]
    fn clamps_to_symmetric_range() {
        let q = quantize(&t(vec![500.0, -500.0]), Some(1.0)).unwrap();
        assert_eq!(q.data(), &[127, -127]);
    }

    #[test]
    fn round_trip_error_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..1024).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = Tensor::new(vec![1, 1, 16, 64], data).unwrap();
        let q = quantize(&x, None).unwrap();
        let back = dequantize(&q);
        let bound = q.scale() / 2.0 + 1e-6;
        for (a, b) in x.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= bound, "|{a} - {b}| > {bound}");
        }
    }

    #[test]
    fn lattice_points_are_lossless() {
        let s = 0.03f32;
        let codes = [-127i32, -5, 0, 1, 90, 127];
        let x = t(codes.iter().map(|&k| s * k as f32).collect());
        let q = quantize(&x, Some(s)).unwrap();
        let got: Vec<i32> = q.data().iter().map(|&v| v as i32).collect();
        assert_eq!(got, codes);
    }
}
