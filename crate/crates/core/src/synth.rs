//! Seeded synthetic activations for experiments and tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::{quantize, Tensor};

/// i.i.d. Gaussian tensor with the given sigma.
pub fn gaussian_tensor<S: Real>(dims: Vec<usize>, sigma: f64, seed: u64) -> Result<Tensor<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| S::from_f64_lossy(normal.sample(&mut rng)))
        .collect();
    Tensor::new(dims, data)
}

/// Gaussian bulk with a sprinkle of large-magnitude outliers, mimicking
/// hard-to-quantize activation spikes.
pub fn heavy_tailed_tensor<S: Real>(
    dims: Vec<usize>,
    sigma: f64,
    outlier_prob: f64,
    outlier_scale: f64,
    seed: u64,
) -> Result<Tensor<S>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let x = normal.sample(&mut rng);
            let x = if rng.gen_bool(outlier_prob) { x * outlier_scale } else { x };
            S::from_f64_lossy(x)
        })
        .collect();
    Tensor::new(dims, data)
}

/// Snap every element onto the quantization lattice of its own max-based
/// scale. Re-quantizing the result with the returned scale is lossless.
pub fn snap_to_lattice<S: Real>(t: &Tensor<S>) -> Result<(Tensor<S>, S)> {
    let q = quantize(t, None)?;
    Ok((crate::tensor::dequantize(&q), q.scale()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = gaussian_tensor::<f32>(vec![2, 8], 1.0, 123).unwrap();
        let b = gaussian_tensor::<f32>(vec![2, 8], 1.0, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn snapped_tensor_round_trips_exactly() {
        let t = gaussian_tensor::<f32>(vec![4, 16], 1.0, 9).unwrap();
        let (snapped, scale) = snap_to_lattice(&t).unwrap();
        let q = quantize(&snapped, Some(scale)).unwrap();
        let back = crate::tensor::dequantize(&q);
        assert_eq!(snapped, back);
    }
}
