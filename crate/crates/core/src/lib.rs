//! Dynamic sparse attention for heterogeneous SoCs, at desk scale.
//!
//! The pipeline: quantize Q/K to int8 with bucketed per-tensor scales,
//! estimate raw attention scores with integer arithmetic (the accelerator
//! stage), keep the top-k key positions per query row under head-specific
//! budgets, then run high-precision attention only over the survivors.
//! A greedy planner overlaps the estimation launches with the
//! top-k + sparse-QKV work on the general-purpose lane.
//!
//! No real accelerator is driven; hardware time exists only inside the
//! [`pipeline`] cost model, and accuracy is checked against float and
//! brute-force oracles.

pub mod attention;
pub mod bucketing;
pub mod driver;
pub mod error;
pub mod pipeline;
pub mod scalar;
pub mod sparsity;
pub mod synth;
pub mod tensor;
pub mod tensor_io;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete single-precision aliases; the math core is generic over [`Real`].
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type QuantizedTensor32 = tensor::QuantizedTensor<f32>;
pub type QuantizedTensor64 = tensor::QuantizedTensor<f64>;
pub type ScoreMatrix32 = attention::ScoreMatrix<f32>;
pub type ScoreMatrix64 = attention::ScoreMatrix<f64>;
