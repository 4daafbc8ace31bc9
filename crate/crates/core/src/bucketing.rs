//! Scale-factor buckets for static-graph quantized Q·K.
//!
//! A quantized Q·K graph bakes in a `(lambda_q, lambda_k)` pair. To keep a
//! finite set of precompiled graphs, the offline stage builds a grid of
//! scale pairs around a calibrated center, spaced by powers of a step
//! factor per axis. Online inputs snap to the bucket with the smallest MSE
//! against their observed scales and reuse that bucket's cached graph.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 0.5;
pub const DEFAULT_PER_AXIS: usize = 3; // 9 buckets

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePair {
    pub lambda_q: f64,
    pub lambda_k: f64,
}

impl ScalePair {
    pub fn new(lambda_q: f64, lambda_k: f64) -> Result<Self> {
        if !(lambda_q > 0.0 && lambda_k > 0.0) {
            return Err(Error::validation("scale factors must be positive"));
        }
        Ok(ScalePair { lambda_q, lambda_k })
    }
}

/// Distance metric for bucket selection. MSE over the two scale
/// components, either in linear scale space (default) or on log scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseSpace {
    #[default]
    Linear,
    Log,
}

/// Shape of one Q·K launch; graphs are cached per (bucket, shape).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeKey {
    pub q_len: usize,
    pub k_len: usize,
    pub d_k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketGrid {
    pub center: ScalePair,
    pub step: f64,
    pub per_axis: usize,
    pub buckets: Vec<ScalePair>,
    #[serde(default)]
    graph_cache: HashMap<String, u64>,
    #[serde(default)]
    next_graph_id: u64,
    #[serde(default)]
    pub hits: u64,
    #[serde(default)]
    pub misses: u64,
}

impl BucketGrid {
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

/// Cartesian grid of scale pairs: per-axis multipliers are
/// `step^m` for `m = -(per_axis-1)/2 ..= (per_axis-1)/2`, sorted ascending,
/// applied to the calibrated center.
pub fn build_grid(center: ScalePair, step: f64, per_axis: usize) -> Result<BucketGrid> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::validation("step must be in (0, 1)"));
    }
    if per_axis == 0 || per_axis % 2 == 0 {
        return Err(Error::validation("per_axis must be an odd positive integer"));
    }
    let half = (per_axis as i32 - 1) / 2;
    let mut multipliers: Vec<f64> = (-half..=half).map(|m| step.powi(m)).collect();
    multipliers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut buckets = Vec::with_capacity(per_axis * per_axis);
    for &mq in &multipliers {
        for &mk in &multipliers {
            buckets.push(ScalePair {
                lambda_q: center.lambda_q * mq,
                lambda_k: center.lambda_k * mk,
            });
        }
    }
    Ok(BucketGrid {
        center,
        step,
        per_axis,
        buckets,
        graph_cache: HashMap::new(),
        next_graph_id: 0,
        hits: 0,
        misses: 0,
    })
}

/// Index of the bucket with the smallest MSE to the observed scales;
/// ties go to the lower index.
pub fn select_bucket(grid: &BucketGrid, observed: ScalePair, space: MseSpace) -> usize {
    debug_assert!(!grid.is_empty());
    let dist = |b: &ScalePair| -> f64 {
        match space {
            MseSpace::Linear => {
                ((observed.lambda_q - b.lambda_q).powi(2) + (observed.lambda_k - b.lambda_k).powi(2)) / 2.0
            }
            MseSpace::Log => {
                ((observed.lambda_q.ln() - b.lambda_q.ln()).powi(2)
                    + (observed.lambda_k.ln() - b.lambda_k.ln()).powi(2))
                    / 2.0
            }
        }
    };
    let mut best = 0;
    let mut best_d = dist(&grid.buckets[0]);
    for (i, b) in grid.buckets.iter().enumerate().skip(1) {
        let d = dist(b);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

impl BucketGrid {
    /// Cached graph identifier for (bucket, shape). A miss registers a
    /// fresh identifier, standing in for a graph precompiled offline.
    pub fn lookup_graph(&mut self, bucket: usize, shape: ShapeKey) -> Result<u64> {
        if bucket >= self.buckets.len() {
            return Err(Error::validation(format!("bucket index {bucket} out of range")));
        }
        // string key keeps the grid serializable as plain JSON
        let key = format!("{bucket}:{}x{}x{}", shape.q_len, shape.k_len, shape.d_k);
        if let Some(&id) = self.graph_cache.get(&key) {
            self.hits += 1;
            return Ok(id);
        }
        let id = self.next_graph_id;
        self.next_graph_id += 1;
        self.graph_cache.insert(key, id);
        self.misses += 1;
        Ok(id)
    }

    pub fn cached_graphs(&self) -> usize {
        self.graph_cache.len()
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}
