//! Experiment driver: config ingestion, synthetic workloads, the full
//! sparse-attention pipeline run, and baseline comparisons.
//!
//! Every report is a pure function of (config, seed): generation, bucket
//! selection, planning and simulation are all deterministic.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{
    self, AttentionInputs, OutputError, ScoreMatrix, SparseSelection,
};
use crate::bucketing::{self, BucketGrid, MseSpace, ScalePair, ShapeKey};
use crate::error::{Error, Result};
use crate::pipeline::{self, CostProfile, LaneModel};
use crate::synth;
use crate::tensor::{quantize, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelGeometry {
    pub q_heads: usize,
    pub kv_heads: usize,
    pub head_dim: usize,
    pub layers: usize,
}

impl Default for ModelGeometry {
    // Qwen2-0.5B geometry
    fn default() -> Self {
        ModelGeometry { q_heads: 14, kv_heads: 2, head_dim: 64, layers: 24 }
    }
}

/// Synthetic activation distribution. The heavy-tailed mixture mimics
/// the occasional large-magnitude outliers seen in real activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Gaussian,
    HeavyTailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    #[default]
    Row,
    Head,
}

/// Which attention path `run` executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Dense float attention (the oracle path itself).
    Full,
    /// Float-score top-k, sparse attention.
    Sparse,
    /// Block-granular selection on pooled float scores.
    BlockSparse,
    /// Whole attention from dequantized int8 scores.
    NpuFull,
    /// Quantized estimation with bucketed scales, then sparse attention.
    #[default]
    Shadow,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Full => "cg_full",
            Baseline::Sparse => "cg_sparse",
            Baseline::BlockSparse => "cg_block_sparse",
            Baseline::NpuFull => "npu_full",
            Baseline::Shadow => "shadow",
        }
    }

    pub fn all() -> [Baseline; 5] {
        [Baseline::Full, Baseline::Sparse, Baseline::BlockSparse, Baseline::NpuFull, Baseline::Shadow]
    }
}

/// Cost knobs for the simulator, uniform across heads. `qkv_dense_ms` is
/// the full-attention cost of one head; the sparse stage takes
/// `ratio * qkv_dense_ms`. `cpu_estimate_ms` is a float Q·K pass on the
/// general-purpose lane (only the C/G baselines pay it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub npu_points: Vec<(usize, f64)>,
    pub topk_ms: f64,
    pub qkv_dense_ms: f64,
    pub cpu_estimate_ms: f64,
    /// Whole-attention-on-accelerator cost as a multiple of one fused
    /// estimation launch over all heads.
    pub npu_full_factor: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            // estimation is 2/3 of the serialized sparse time at ratio 0.2:
            // per head 2.0 vs (0.2 + 0.2 * 4.0)
            npu_points: vec![(1, 0.3), (2, 0.35), (4, 0.45), (8, 0.65), (14, 0.95)],
            topk_ms: 0.2,
            qkv_dense_ms: 4.0,
            cpu_estimate_ms: 2.0,
            npu_full_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelGeometry,
    /// Global sparsity ratio r.
    pub ratio: f64,
    pub clamp_threshold: f64,
    pub bucket_step: f64,
    pub bucket_per_axis: usize,
    pub seed: u64,
    pub seq_lens: Vec<usize>,
    pub q_offset: usize,
    pub causal: bool,
    pub theta_base: f64,
    pub distribution: Distribution,
    pub selection: SelectionMode,
    pub lane: LaneModel,
    pub mse_space: MseSpace,
    pub baseline: Baseline,
    pub block_size: usize,
    pub cost: CostConfig,
    /// Optional per-head ratios (from `allocate`); falls back to the
    /// uniform global ratio.
    pub head_ratios: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: 1,
            model: ModelGeometry::default(),
            ratio: crate::sparsity::DEFAULT_GLOBAL_RATIO,
            clamp_threshold: crate::sparsity::DEFAULT_CLAMP_THRESHOLD,
            bucket_step: bucketing::DEFAULT_STEP,
            bucket_per_axis: bucketing::DEFAULT_PER_AXIS,
            seed: 0,
            seq_lens: vec![256],
            q_offset: 0,
            causal: true,
            theta_base: 10_000.0,
            distribution: Distribution::Gaussian,
            selection: SelectionMode::Row,
            lane: LaneModel::ThreeClock,
            mse_space: MseSpace::Linear,
            baseline: Baseline::Shadow,
            block_size: 64,
            cost: CostConfig::default(),
            head_ratios: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Config(format!("unsupported config version {}", self.version)));
        }
        let m = &self.model;
        if m.q_heads == 0 || m.kv_heads == 0 || m.q_heads % m.kv_heads != 0 {
            return Err(Error::Config("q_heads must be a positive multiple of kv_heads".into()));
        }
        if m.head_dim == 0 || m.head_dim % 2 != 0 {
            return Err(Error::Config("head_dim must be positive and even (for rope)".into()));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config("ratio must be in (0, 1]".into()));
        }
        if self.seq_lens.is_empty() || self.seq_lens.contains(&0) {
            return Err(Error::Config("seq_lens must be non-empty and positive".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be >= 1".into()));
        }
        if let Some(r) = &self.head_ratios {
            if r.len() != m.q_heads || r.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                return Err(Error::Config("head_ratios must give one (0,1] ratio per q head".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable hash of the full config; names report files.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.head_ratios
            .clone()
            .unwrap_or_else(|| vec![self.ratio; self.model.q_heads])
    }

    /// Expand the uniform cost knobs into a per-head profile, with each
    /// head's qkv stage scaled by its ratio.
    pub fn cost_profile(&self, ratios: &[f64]) -> CostProfile {
        CostProfile {
            npu_points: self.cost.npu_points.clone(),
            topk_ms: vec![self.cost.topk_ms; ratios.len()],
            qkv_ms: ratios.iter().map(|&r| r * self.cost.qkv_dense_ms).collect(),
        }
    }
}

/// Everything measured in one `run` invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub seq_len: usize,
    pub baseline: &'static str,
    pub recall: f64,
    pub output_error: OutputError,
    pub makespan_ms: f64,
    pub serialized_ms: f64,
    pub speedup_vs_serialized: f64,
    pub bucket_hit_rate: f64,
    pub num_groups: usize,
    pub mean_ratio: f64,
}

/// One row of the bench table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub baseline: &'static str,
    pub latency_ms: f64,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub relative_l2: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub config_hash: String,
    pub seed: u64,
    pub seq_len: usize,
    pub rows: Vec<BenchRow>,
}

/// Per-head workload for one layer: roped q/k, raw v, observed scales.
struct Workload {
    q: Tensor<f32>,
    k: Tensor<f32>,
    v: Tensor<f32>,
    /// observed per-q-head scale pairs (kv scale taken from the mapped head)
    observed: Vec<ScalePair>,
}

fn synth_tensor(cfg: &ExperimentConfig, dims: Vec<usize>, seed: u64) -> Result<Tensor<f32>> {
    match cfg.distribution {
        Distribution::Gaussian => synth::gaussian_tensor(dims, 1.0, seed),
        Distribution::HeavyTailed => synth::heavy_tailed_tensor(dims, 1.0, 0.02, 8.0, seed),
    }
}

fn build_workload(cfg: &ExperimentConfig, seq_len: usize, seed: u64) -> Result<Workload> {
    let m = &cfg.model;
    let q = synth_tensor(cfg, vec![1, m.q_heads, seq_len, m.head_dim], seed.wrapping_mul(3) + 1)?;
    let k = synth_tensor(cfg, vec![1, m.kv_heads, seq_len, m.head_dim], seed.wrapping_mul(3) + 2)?;
    let v = synth_tensor(cfg, vec![1, m.kv_heads, seq_len, m.head_dim], seed.wrapping_mul(3) + 3)?;
    let q = attention::apply_rope(&q, cfg.q_offset, cfg.theta_base)?;
    let k = attention::apply_rope(&k, 0, cfg.theta_base)?;
    let group = m.q_heads / m.kv_heads;
    let mut observed = Vec::with_capacity(m.q_heads);
    for h in 0..m.q_heads {
        let kvh = h / group;
        let qh = q.slice_head(h)?;
        let kh = k.slice_head(kvh)?;
        let lq = (qh.max_abs() / 127.0).max(f32::MIN_POSITIVE) as f64;
        let lk = (kh.max_abs() / 127.0).max(f32::MIN_POSITIVE) as f64;
        observed.push(ScalePair::new(lq, lk)?);
    }
    Ok(Workload { q, k, v, observed })
}

/// Calibrated grid center: mean of the observed per-head scales.
pub fn calibrate_center(observed: &[ScalePair]) -> Result<ScalePair> {
    if observed.is_empty() {
        return Err(Error::validation("calibration needs at least one scale pair"));
    }
    let n = observed.len() as f64;
    ScalePair::new(
        observed.iter().map(|p| p.lambda_q).sum::<f64>() / n,
        observed.iter().map(|p| p.lambda_k).sum::<f64>() / n,
    )
}

/// Quantized estimation with bucketed scales, per head; also records
/// graph-cache traffic in the grid.
fn estimate_with_buckets(
    wl: &Workload,
    cfg: &ExperimentConfig,
    grid: &mut BucketGrid,
    seq_len: usize,
) -> Result<(ScoreMatrix<f32>, Vec<usize>)> {
    let m = &cfg.model;
    let group = m.q_heads / m.kv_heads;
    let shape = ShapeKey { q_len: seq_len, k_len: seq_len, d_k: m.head_dim };
    let mut buckets = Vec::with_capacity(m.q_heads);
    let mut data = Vec::with_capacity(m.q_heads * seq_len * seq_len);
    for h in 0..m.q_heads {
        let bucket = bucketing::select_bucket(grid, wl.observed[h], cfg.mse_space);
        grid.lookup_graph(bucket, shape)?;
        buckets.push(bucket);
        let pair = grid.buckets[bucket];
        let qh = quantize(&wl.q.slice_head(h)?, Some(pair.lambda_q as f32))?;
        let kh = quantize(&wl.k.slice_head(h / group)?, Some(pair.lambda_k as f32))?;
        let scores = attention::estimate_scores(&qh, &kh, m.head_dim)?;
        data.extend_from_slice(scores.data());
    }
    Ok((ScoreMatrix::new(m.q_heads, seq_len, seq_len, data)?, buckets))
}

fn select(
    cfg: &ExperimentConfig,
    scores: &ScoreMatrix<f32>,
    ratios: &[f64],
) -> Result<SparseSelection> {
    match cfg.selection {
        SelectionMode::Row => attention::topk_select_head_ratios(scores, ratios, cfg.causal, cfg.q_offset),
        SelectionMode::Head => {
            // head-aggregate mode shares one ratio; use the mean
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            Ok(attention::topk_select_per_head(scores, mean, cfg.causal, cfg.q_offset))
        }
    }
}

/// Run the full pipeline once for one sequence length.
pub fn run_once(cfg: &ExperimentConfig, seq_len: usize, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let m = &cfg.model;
    let wl = build_workload(cfg, seq_len, seed)?;
    let ratios = cfg.ratios();
    let inputs = AttentionInputs {
        q: &wl.q,
        k: &wl.k,
        v: &wl.v,
        num_q_heads: m.q_heads,
        num_kv_heads: m.kv_heads,
        causal: cfg.causal,
        q_offset: cfg.q_offset,
    };
    let oracle = attention::full_attention(&inputs)?;
    let float_scores = attention::float_scores(&wl.q, &wl.k, m.q_heads, m.kv_heads)?;
    let truth = select(cfg, &float_scores, &ratios)?;

    let center = calibrate_center(&wl.observed)?;
    let mut grid = bucketing::build_grid(center, cfg.bucket_step, cfg.bucket_per_axis)?;
    // warm the cache the way the offline stage would, then measure hits
    for b in 0..grid.len() {
        grid.lookup_graph(b, ShapeKey { q_len: seq_len, k_len: seq_len, d_k: m.head_dim })?;
    }
    grid.hits = 0;
    grid.misses = 0;

    let (est_scores, head_buckets) = estimate_with_buckets(&wl, cfg, &mut grid, seq_len)?;

    let (output, selection) = match cfg.baseline {
        Baseline::Full => (oracle.clone(), truth.clone()),
        Baseline::Sparse => {
            let out = attention::sparse_qkv(&inputs, &truth)?;
            (out, truth.clone())
        }
        Baseline::BlockSparse => {
            let budget = ((cfg.ratio * seq_len as f64).ceil() as usize).max(1);
            let sel = attention::block_sparse_select(
                &wl.q, &wl.k, cfg.block_size, budget, cfg.causal, cfg.q_offset,
            )?;
            let out = attention::sparse_qkv(&inputs, &sel)?;
            (out, sel)
        }
        Baseline::NpuFull => {
            let out = attention::attention_from_scores(
                &est_scores, &wl.v, m.kv_heads, cfg.causal, cfg.q_offset,
            )?;
            (out, truth.clone())
        }
        Baseline::Shadow => {
            let sel = select(cfg, &est_scores, &ratios)?;
            let out = attention::sparse_qkv(&inputs, &sel)?;
            (out, sel)
        }
    };

    let recall = attention::recall(&selection, &truth)?;
    let output_error = attention::output_error(&output, &oracle)?;

    let profile = cfg.cost_profile(&ratios);
    let groups = pipeline::form_groups(&head_buckets);
    let schedule = pipeline::plan_greedy(&groups, &profile, cfg.lane)?;
    pipeline::simulate(&schedule, &profile)?;
    let serialized = pipeline::serialized_makespan(&groups, &profile);

    Ok(RunReport {
        config_hash: cfg.hash(),
        seed,
        seq_len,
        baseline: cfg.baseline.name(),
        recall,
        output_error,
        makespan_ms: schedule.makespan,
        serialized_ms: serialized,
        speedup_vs_serialized: serialized / schedule.makespan,
        bucket_hit_rate: grid.hit_rate(),
        num_groups: groups.len(),
        mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    cfg.seq_lens.iter().map(|&s| run_once(cfg, s, cfg.seed)).collect()
}

/// Simulated latencies for every baseline plus accuracy against the
/// float oracle.
pub fn bench_once(cfg: &ExperimentConfig, seq_len: usize, seed: u64) -> Result<BenchReport> {
    cfg.validate()?;
    let m = &cfg.model;
    let ratios = cfg.ratios();
    let h = m.q_heads as f64;
    let c = &cfg.cost;
    let sparse_qkv_total: f64 = ratios.iter().map(|&r| r * c.qkv_dense_ms).sum();
    let topk_total = c.topk_ms * h;

    let profile = cfg.cost_profile(&ratios);

    let mut rows = Vec::new();
    for baseline in Baseline::all() {
        let mut sub = cfg.clone();
        sub.baseline = baseline;
        let rep = run_once(&sub, seq_len, seed)?;
        let latency = match baseline {
            Baseline::Full => c.qkv_dense_ms * h,
            Baseline::Sparse => c.cpu_estimate_ms * h + topk_total + sparse_qkv_total,
            Baseline::BlockSparse => {
                // pooled estimation shrinks the score pass by the block size
                c.cpu_estimate_ms * h / cfg.block_size as f64 + topk_total + sparse_qkv_total
            }
            Baseline::NpuFull => pipeline::npu_time_of(&profile, m.q_heads) * c.npu_full_factor,
            Baseline::Shadow => rep.makespan_ms,
        };
        rows.push(BenchRow {
            baseline: baseline.name(),
            latency_ms: latency,
            max_abs: rep.output_error.max_abs,
            mean_abs: rep.output_error.mean_abs,
            relative_l2: rep.output_error.relative_l2,
            recall: rep.recall,
        });
    }
    Ok(BenchReport { config_hash: cfg.hash(), seed, seq_len, rows })
}

pub fn bench(cfg: &ExperimentConfig) -> Result<Vec<BenchReport>> {
    cfg.seq_lens.iter().map(|&s| bench_once(cfg, s, cfg.seed)).collect()
}

pub fn bench_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from("config,seed,seq_len,baseline,latency_ms,max_abs,mean_abs,relative_l2,recall\n");
    for rep in reports {
        for row in &rep.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6e},{:.6e},{:.6e},{:.6}\n",
                rep.config_hash, rep.seed, rep.seq_len, row.baseline, row.latency_ms,
                row.max_abs, row.mean_abs, row.relative_l2, row.recall
            ));
        }
    }
    out
}

pub fn run_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(
        "config,seed,seq_len,baseline,recall,max_abs,mean_abs,relative_l2,makespan_ms,serialized_ms,speedup,bucket_hit_rate,num_groups,mean_ratio\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6e},{:.6e},{:.6e},{:.4},{:.4},{:.4},{:.4},{},{:.4}\n",
            r.config_hash, r.seed, r.seq_len, r.baseline, r.recall, r.output_error.max_abs,
            r.output_error.mean_abs, r.output_error.relative_l2, r.makespan_ms, r.serialized_ms,
            r.speedup_vs_serialized, r.bucket_hit_rate, r.num_groups, r.mean_ratio
        ));
    }
    out
}
