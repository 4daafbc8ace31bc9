//! Reference attention and the two-stage sparse path.
//!
//! Stage one ranks key positions from low-precision scores: dense int8
//! Q·K accumulated in i64, scaled by `lambda_q * lambda_k / sqrt(d_k)`.
//! No softmax and no mask are applied there — softmax is strictly
//! monotonic, so ranking raw scores gives the same top-k, and masked
//! positions are simply skipped during selection. Stage two recomputes
//! attention in float over the selected positions only.
//!
//! All score and output accumulation happens in f64 and is cast back to
//! the tensor scalar at the end.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{QuantizedTensor, Tensor};

/// Inputs for one layer's attention over one prefill chunk.
///
/// `q_offset` is the absolute position of query row 0, so chunked prefill
/// keeps the causal mask consistent across chunks.
#[derive(Debug, Clone, Copy)]
pub struct AttentionInputs<'a, S: Real> {
    pub q: &'a Tensor<S>,
    pub k: &'a Tensor<S>,
    pub v: &'a Tensor<S>,
    pub num_q_heads: usize,
    pub num_kv_heads: usize,
    pub causal: bool,
    pub q_offset: usize,
}

/// Validated geometry extracted from [`AttentionInputs`].
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub q_len: usize,
    pub k_len: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub group: usize, // q heads per kv head
}

impl<'a, S: Real> AttentionInputs<'a, S> {
    pub fn validate(&self) -> Result<Geometry> {
        let (q, k, v) = (self.q, self.k, self.v);
        for (name, t, heads) in [
            ("q", q, self.num_q_heads),
            ("k", k, self.num_kv_heads),
            ("v", v, self.num_kv_heads),
        ] {
            if t.dims().len() != 4 {
                return Err(Error::validation(format!("{name} must be BHSD (4 dims)")));
            }
            if t.dims()[0] != 1 {
                return Err(Error::validation(format!("{name}: only batch 1 is supported")));
            }
            if t.dims()[1] != heads {
                return Err(Error::validation(format!(
                    "{name}: head dim {} does not match declared head count {heads}",
                    t.dims()[1]
                )));
            }
        }
        if self.num_kv_heads == 0 || self.num_q_heads % self.num_kv_heads != 0 {
            return Err(Error::validation(
                "num_q_heads must be a positive multiple of num_kv_heads",
            ));
        }
        if q.dims()[3] != k.dims()[3] {
            return Err(Error::validation("q and k must share head dim (d_k)"));
        }
        if k.dims()[2] != v.dims()[2] {
            return Err(Error::validation("k and v must share sequence length"));
        }
        Ok(Geometry {
            q_len: q.dims()[2],
            k_len: k.dims()[2],
            d_k: q.dims()[3],
            d_v: v.dims()[3],
            group: self.num_q_heads / self.num_kv_heads,
        })
    }
}

/// Raw pre-softmax scores, one row of `num_keys` per (q-head, query row).
/// Masking is never baked in; callers carry `causal`/`q_offset` separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<S: Real> {
    pub num_heads: usize,
    pub num_rows: usize,
    pub num_keys: usize,
    data: Vec<S>,
}

impl<S: Real> ScoreMatrix<S> {
    pub fn new(num_heads: usize, num_rows: usize, num_keys: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != num_heads * num_rows * num_keys {
            return Err(Error::validation("score matrix length mismatch"));
        }
        Ok(ScoreMatrix { num_heads, num_rows, num_keys, data })
    }

    pub fn row(&self, head: usize, row: usize) -> &[S] {
        let base = (head * self.num_rows + row) * self.num_keys;
        &self.data[base..base + self.num_keys]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }
}

/// Retained key indices per (q-head, query row), strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseSelection {
    pub num_heads: usize,
    pub num_rows: usize,
    pub num_keys: usize,
    rows: Vec<Vec<usize>>,
    budgets: Vec<usize>,
}

impl SparseSelection {
    fn with_capacity(num_heads: usize, num_rows: usize, num_keys: usize) -> Self {
        SparseSelection {
            num_heads,
            num_rows,
            num_keys,
            rows: Vec::with_capacity(num_heads * num_rows),
            budgets: Vec::with_capacity(num_heads * num_rows),
        }
    }

    pub fn row(&self, head: usize, row: usize) -> &[usize] {
        &self.rows[head * self.num_rows + row]
    }

    /// Budget that was in force for this row (before clamping to the
    /// number of unmasked positions).
    pub fn budget(&self, head: usize, row: usize) -> usize {
        self.budgets[head * self.num_rows + row]
    }

    pub fn same_geometry(&self, other: &SparseSelection) -> bool {
        self.num_heads == other.num_heads
            && self.num_rows == other.num_rows
            && self.num_keys == other.num_keys
    }
}

fn unmasked_count(num_keys: usize, causal: bool, q_offset: usize, row: usize) -> usize {
    if causal {
        num_keys.min(q_offset + row + 1)
    } else {
        num_keys
    }
}

/// Rotary position embedding: consecutive pairs `(x_{2i}, x_{2i+1})`
/// rotated by `pos * theta_base^{-2i/d}`.
pub fn apply_rope<S: Real>(t: &Tensor<S>, position_offset: usize, theta_base: f64) -> Result<Tensor<S>> {
    if t.dims().len() != 4 {
        return Err(Error::validation("rope expects a BHSD tensor"));
    }
    let d = t.head_dim();
    if d % 2 != 0 {
        return Err(Error::validation("rope requires an even head dim"));
    }
    let (b, h, s) = (t.dims()[0], t.dims()[1], t.dims()[2]);
    let half = d / 2;
    let inv_freq: Vec<f64> = (0..half)
        .map(|i| theta_base.powf(-((2 * i) as f64) / d as f64))
        .collect();
    let mut out = t.data().to_vec();
    for bi in 0..b {
        for hi in 0..h {
            for si in 0..s {
                let pos = (position_offset + si) as f64;
                let base = ((bi * h + hi) * s + si) * d;
                for i in 0..half {
                    let angle = pos * inv_freq[i];
                    let (sin, cos) = angle.sin_cos();
                    let x0 = out[base + 2 * i].to_f64_lossy();
                    let x1 = out[base + 2 * i + 1].to_f64_lossy();
                    out[base + 2 * i] = S::from_f64_lossy(x0 * cos - x1 * sin);
                    out[base + 2 * i + 1] = S::from_f64_lossy(x0 * sin + x1 * cos);
                }
            }
        }
    }
    Tensor::new(t.dims().to_vec(), out)
}

/// Float reference: `softmax(mask(Q·K / sqrt(d_k))) · V` with GQA mapping
/// q-head h -> kv-head h / group and max-subtracted softmax.
pub fn full_attention<S: Real>(inp: &AttentionInputs<'_, S>) -> Result<Tensor<S>> {
    let g = inp.validate()?;
    let sqrt_d = (g.d_k as f64).sqrt();
    let mut out = vec![S::zero(); inp.num_q_heads * g.q_len * g.d_v];
    for h in 0..inp.num_q_heads {
        let kvh = h / g.group;
        for r in 0..g.q_len {
            let n = unmasked_count(g.k_len, inp.causal, inp.q_offset, r);
            let qb = (h * g.q_len + r) * g.d_k;
            let mut scores = vec![0f64; n];
            for j in 0..n {
                let kb = (kvh * g.k_len + j) * g.d_k;
                let mut acc = 0f64;
                for d in 0..g.d_k {
                    acc += inp.q.data()[qb + d].to_f64_lossy() * inp.k.data()[kb + d].to_f64_lossy();
                }
                scores[j] = acc / sqrt_d;
            }
            let ob = (h * g.q_len + r) * g.d_v;
            weighted_v(&scores, inp.v.data(), kvh, g.k_len, g.d_v, &mut out[ob..ob + g.d_v]);
        }
    }
    Tensor::new(vec![1, inp.num_q_heads, g.q_len, g.d_v], out)
}

/// Softmax over `scores` (support = their indices) then weighted sum of
/// the matching v rows into `out`.
fn weighted_v_indexed<S: Real>(
    scores: &[f64],
    idx: &[usize],
    v: &[S],
    kvh: usize,
    k_len: usize,
    d_v: usize,
    out: &mut [S],
) {
    debug_assert_eq!(scores.len(), idx.len());
    if scores.is_empty() {
        for o in out.iter_mut() {
            *o = S::zero();
        }
        return;
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut acc = vec![0f64; d_v];
    for (w, &j) in exps.iter().zip(idx) {
        let vb = (kvh * k_len + j) * d_v;
        for d in 0..d_v {
            acc[d] += w / z * v[vb + d].to_f64_lossy();
        }
    }
    for d in 0..d_v {
        out[d] = S::from_f64_lossy(acc[d]);
    }
}

fn weighted_v<S: Real>(scores: &[f64], v: &[S], kvh: usize, k_len: usize, d_v: usize, out: &mut [S]) {
    let idx: Vec<usize> = (0..scores.len()).collect();
    weighted_v_indexed(scores, &idx, v, kvh, k_len, d_v, out);
}

/// Float Q·K / sqrt(d_k) score matrix; ground truth for recall.
pub fn float_scores<S: Real>(
    q: &Tensor<S>,
    k: &Tensor<S>,
    num_q_heads: usize,
    num_kv_heads: usize,
) -> Result<ScoreMatrix<S>> {
    if q.dims().len() != 4 || k.dims().len() != 4 {
        return Err(Error::validation("scores expect BHSD tensors"));
    }
    if q.dims()[3] != k.dims()[3] {
        return Err(Error::validation("q and k must share head dim"));
    }
    if num_kv_heads == 0 || num_q_heads % num_kv_heads != 0 {
        return Err(Error::validation("invalid GQA head counts"));
    }
    let (q_len, k_len, d_k) = (q.dims()[2], k.dims()[2], q.dims()[3]);
    let group = num_q_heads / num_kv_heads;
    let sqrt_d = (d_k as f64).sqrt();
    let mut data = Vec::with_capacity(num_q_heads * q_len * k_len);
    for h in 0..num_q_heads {
        let kvh = h / group;
        for r in 0..q_len {
            let qb = (h * q_len + r) * d_k;
            for j in 0..k_len {
                let kb = (kvh * k_len + j) * d_k;
                let mut acc = 0f64;
                for d in 0..d_k {
                    acc += q.data()[qb + d].to_f64_lossy() * k.data()[kb + d].to_f64_lossy();
                }
                data.push(S::from_f64_lossy(acc / sqrt_d));
            }
        }
    }
    ScoreMatrix::new(num_q_heads, q_len, k_len, data)
}

/// Estimation stage: dense int8 Q·K accumulated in i64, scaled by
/// `lambda_q * lambda_k / sqrt(d_k)`. No mask, no softmax.
pub fn estimate_scores<S: Real>(
    q: &QuantizedTensor<S>,
    k: &QuantizedTensor<S>,
    d_k: usize,
) -> Result<ScoreMatrix<S>> {
    if q.dims().len() != 4 || k.dims().len() != 4 {
        return Err(Error::validation("estimate expects BHSD tensors"));
    }
    if q.head_dim() != k.head_dim() || q.head_dim() != d_k {
        return Err(Error::validation("head dim mismatch in estimation"));
    }
    if !(q.scale() > S::zero() && k.scale() > S::zero()) {
        return Err(Error::validation("quantization scales must be positive"));
    }
    let (num_q_heads, num_kv_heads) = (q.dims()[1], k.dims()[1]);
    if num_kv_heads == 0 || num_q_heads % num_kv_heads != 0 {
        return Err(Error::validation("invalid GQA head counts"));
    }
    let (q_len, k_len) = (q.dims()[2], k.dims()[2]);
    let group = num_q_heads / num_kv_heads;
    let factor = q.scale().to_f64_lossy() * k.scale().to_f64_lossy() / (d_k as f64).sqrt();
    let mut data = Vec::with_capacity(num_q_heads * q_len * k_len);
    for h in 0..num_q_heads {
        let kvh = h / group;
        for r in 0..q_len {
            let qb = (h * q_len + r) * d_k;
            for j in 0..k_len {
                let kb = (kvh * k_len + j) * d_k;
                let mut acc = 0i64;
                for d in 0..d_k {
                    acc += q.data()[qb + d] as i64 * k.data()[kb + d] as i64;
                }
                data.push(S::from_f64_lossy(acc as f64 * factor));
            }
        }
    }
    ScoreMatrix::new(num_q_heads, q_len, k_len, data)
}

fn select_row<S: Real>(scores: &[S], unmasked: usize, budget: usize) -> Vec<usize> {
    let take = budget.min(unmasked);
    let mut order: Vec<usize> = (0..unmasked).collect();
    // descending score, ties to the lower key index
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order.into_iter().take(take).collect();
    picked.sort_unstable();
    picked
}

/// Per-row top-k on raw scores, skipping masked positions.
pub fn topk_select<S: Real>(
    scores: &ScoreMatrix<S>,
    budget_per_row: usize,
    causal: bool,
    q_offset: usize,
) -> SparseSelection {
    topk_select_with(scores, |_, _, _| budget_per_row, causal, q_offset)
}

/// Per-row top-k with budget `ceil(ratio * unmasked)`, at least 1.
pub fn topk_select_ratio<S: Real>(
    scores: &ScoreMatrix<S>,
    ratio: f64,
    causal: bool,
    q_offset: usize,
) -> SparseSelection {
    topk_select_with(
        scores,
        |_, _, unmasked| ((ratio * unmasked as f64).ceil() as usize).max(1),
        causal,
        q_offset,
    )
}

fn topk_select_with<S: Real>(
    scores: &ScoreMatrix<S>,
    budget_of: impl Fn(usize, usize, usize) -> usize,
    causal: bool,
    q_offset: usize,
) -> SparseSelection {
    let mut sel = SparseSelection::with_capacity(scores.num_heads, scores.num_rows, scores.num_keys);
    for h in 0..scores.num_heads {
        for r in 0..scores.num_rows {
            let unmasked = unmasked_count(scores.num_keys, causal, q_offset, r);
            let budget = budget_of(h, r, unmasked);
            sel.rows.push(select_row(scores.row(h, r), unmasked, budget));
            sel.budgets.push(budget);
        }
    }
    sel
}

/// Per-row top-k with a distinct ratio per head.
pub fn topk_select_head_ratios<S: Real>(
    scores: &ScoreMatrix<S>,
    ratios: &[f64],
    causal: bool,
    q_offset: usize,
) -> Result<SparseSelection> {
    if ratios.len() != scores.num_heads {
        return Err(Error::validation("one ratio per head required"));
    }
    Ok(topk_select_with(
        scores,
        |h, _, unmasked| ((ratios[h] * unmasked as f64).ceil() as usize).max(1),
        causal,
        q_offset,
    ))
}

/// Head-aggregate variant: one shared index set per head, ranked by the
/// column sum of unmasked scores, then trimmed to each row's mask.
pub fn topk_select_per_head<S: Real>(
    scores: &ScoreMatrix<S>,
    ratio: f64,
    causal: bool,
    q_offset: usize,
) -> SparseSelection {
    let mut sel = SparseSelection::with_capacity(scores.num_heads, scores.num_rows, scores.num_keys);
    for h in 0..scores.num_heads {
        let mut col = vec![0f64; scores.num_keys];
        for r in 0..scores.num_rows {
            let unmasked = unmasked_count(scores.num_keys, causal, q_offset, r);
            let row = scores.row(h, r);
            for (j, c) in col.iter_mut().enumerate().take(unmasked) {
                *c += row[j].to_f64_lossy();
            }
        }
        let budget = ((ratio * scores.num_keys as f64).ceil() as usize).max(1);
        let shared = select_row(&col, scores.num_keys, budget);
        for r in 0..scores.num_rows {
            let unmasked = unmasked_count(scores.num_keys, causal, q_offset, r);
            let row: Vec<usize> = shared.iter().cloned().filter(|&j| j < unmasked).collect();
            sel.rows.push(row);
            sel.budgets.push(budget);
        }
    }
    sel
}

/// Attention stage: float softmax and weighted sum restricted to the
/// selected key positions (discarded positions act as -inf).
pub fn sparse_qkv<S: Real>(inp: &AttentionInputs<'_, S>, sel: &SparseSelection) -> Result<Tensor<S>> {
    let g = inp.validate()?;
    if sel.num_heads != inp.num_q_heads || sel.num_rows != g.q_len || sel.num_keys != g.k_len {
        return Err(Error::validation("selection geometry mismatch"));
    }
    let sqrt_d = (g.d_k as f64).sqrt();
    let mut out = vec![S::zero(); inp.num_q_heads * g.q_len * g.d_v];
    for h in 0..inp.num_q_heads {
        let kvh = h / g.group;
        for r in 0..g.q_len {
            let idx = sel.row(h, r);
            let unmasked = unmasked_count(g.k_len, inp.causal, inp.q_offset, r);
            let qb = (h * g.q_len + r) * g.d_k;
            let mut scores = Vec::with_capacity(idx.len());
            for &j in idx {
                if j >= g.k_len {
                    return Err(Error::validation(format!("selected index {j} out of range")));
                }
                if j >= unmasked {
                    return Err(Error::validation(format!(
                        "selected index {j} violates the causal mask at row {r}"
                    )));
                }
                let kb = (kvh * g.k_len + j) * g.d_k;
                let mut acc = 0f64;
                for d in 0..g.d_k {
                    acc += inp.q.data()[qb + d].to_f64_lossy() * inp.k.data()[kb + d].to_f64_lossy();
                }
                scores.push(acc / sqrt_d);
            }
            let ob = (h * g.q_len + r) * g.d_v;
            weighted_v_indexed(&scores, idx, inp.v.data(), kvh, g.k_len, g.d_v, &mut out[ob..ob + g.d_v]);
        }
    }
    Tensor::new(vec![1, inp.num_q_heads, g.q_len, g.d_v], out)
}

/// Attention computed from a precomputed score matrix: masked softmax
/// over the given raw scores, then the weighted sum of v rows. Used by
/// the all-integer baseline, where the scores come from dequantized int8
/// estimation instead of a float Q·K.
pub fn attention_from_scores<S: Real>(
    scores: &ScoreMatrix<S>,
    v: &Tensor<S>,
    num_kv_heads: usize,
    causal: bool,
    q_offset: usize,
) -> Result<Tensor<S>> {
    if v.dims().len() != 4 || v.dims()[1] != num_kv_heads {
        return Err(Error::validation("v must be BHSD with num_kv_heads heads"));
    }
    if v.dims()[2] != scores.num_keys || num_kv_heads == 0 || scores.num_heads % num_kv_heads != 0 {
        return Err(Error::validation("score/v geometry mismatch"));
    }
    let group = scores.num_heads / num_kv_heads;
    let (k_len, d_v) = (scores.num_keys, v.dims()[3]);
    let mut out = vec![S::zero(); scores.num_heads * scores.num_rows * d_v];
    for h in 0..scores.num_heads {
        let kvh = h / group;
        for r in 0..scores.num_rows {
            let n = unmasked_count(k_len, causal, q_offset, r);
            let row: Vec<f64> = scores.row(h, r)[..n].iter().map(|&x| x.to_f64_lossy()).collect();
            let ob = (h * scores.num_rows + r) * d_v;
            weighted_v(&row, v.data(), kvh, k_len, d_v, &mut out[ob..ob + d_v]);
        }
    }
    Tensor::new(vec![1, scores.num_heads, scores.num_rows, d_v], out)
}

/// Block-sparse baseline: mean-pool q and k rows per block, rank blocks,
/// keep whole blocks until the token budget is covered, then trim each
/// row's expansion to its causal mask.
pub fn block_sparse_select<S: Real>(
    q: &Tensor<S>,
    k: &Tensor<S>,
    block: usize,
    budget_per_row: usize,
    causal: bool,
    q_offset: usize,
) -> Result<SparseSelection> {
    if block == 0 {
        return Err(Error::validation("block size must be >= 1"));
    }
    if q.dims().len() != 4 || k.dims().len() != 4 || q.dims()[3] != k.dims()[3] {
        return Err(Error::validation("block-sparse expects BHSD q/k with equal head dim"));
    }
    let (num_q_heads, num_kv_heads) = (q.dims()[1], k.dims()[1]);
    if num_kv_heads == 0 || num_q_heads % num_kv_heads != 0 {
        return Err(Error::validation("invalid GQA head counts"));
    }
    let (q_len, k_len, d_k) = (q.dims()[2], k.dims()[2], q.dims()[3]);
    let group = num_q_heads / num_kv_heads;
    let sqrt_d = (d_k as f64).sqrt();
    let q_blocks = q_len.div_ceil(block);
    let k_blocks = k_len.div_ceil(block);

    let pool = |t: &Tensor<S>, head: usize, nblocks: usize, seq: usize| -> Vec<Vec<f64>> {
        (0..nblocks)
            .map(|b| {
                let lo = b * block;
                let hi = ((b + 1) * block).min(seq);
                let mut acc = vec![0f64; d_k];
                for s in lo..hi {
                    let base = (head * seq + s) * d_k;
                    for d in 0..d_k {
                        acc[d] += t.data()[base + d].to_f64_lossy();
                    }
                }
                let n = (hi - lo) as f64;
                acc.iter().map(|a| a / n).collect()
            })
            .collect()
    };

    let mut sel = SparseSelection::with_capacity(num_q_heads, q_len, k_len);
    for h in 0..num_q_heads {
        let kvh = h / group;
        let qp = pool(q, h, q_blocks, q_len);
        let kp = pool(k, kvh, k_blocks, k_len);
        let mut per_row: Vec<Vec<usize>> = vec![Vec::new(); q_len];
        for qb in 0..q_blocks {
            let row_hi = ((qb + 1) * block).min(q_len) - 1;
            let last_pos = q_offset + row_hi;
            // blocks visible to at least one row of this q block
            let candidates: Vec<usize> = (0..k_blocks)
                .filter(|&kb| !causal || kb * block <= last_pos)
                .collect();
            let mut ranked: Vec<(usize, f64)> = candidates
                .iter()
                .map(|&kb| {
                    let s: f64 = qp[qb].iter().zip(&kp[kb]).map(|(a, b)| a * b).sum();
                    (kb, s / sqrt_d)
                })
                .collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
            let mut chosen = Vec::new();
            let mut covered = 0usize;
            for (kb, _) in ranked {
                if covered >= budget_per_row {
                    break;
                }
                let lo = kb * block;
                let hi = ((kb + 1) * block).min(k_len);
                let visible_hi = if causal { hi.min(last_pos + 1) } else { hi };
                if visible_hi > lo {
                    covered += visible_hi - lo;
                    chosen.push(kb);
                }
            }
            for r in qb * block..=row_hi {
                let unmasked = unmasked_count(k_len, causal, q_offset, r);
                let mut tokens: Vec<usize> = chosen
                    .iter()
                    .flat_map(|&kb| kb * block..((kb + 1) * block).min(k_len))
                    .filter(|&j| j < unmasked)
                    .collect();
                tokens.sort_unstable();
                per_row[r] = tokens;
            }
        }
        for row in per_row {
            sel.rows.push(row);
            sel.budgets.push(budget_per_row);
        }
    }
    Ok(sel)
}

/// `|predicted ∩ truth| / |truth|`, averaged over rows then heads.
/// Rows with empty truth are excluded.
pub fn recall(predicted: &SparseSelection, truth: &SparseSelection) -> Result<f64> {
    if !predicted.same_geometry(truth) {
        return Err(Error::validation("recall requires matching selection geometry"));
    }
    let mut head_sum = 0f64;
    let mut heads_counted = 0usize;
    for h in 0..truth.num_heads {
        let mut row_sum = 0f64;
        let mut rows_counted = 0usize;
        for r in 0..truth.num_rows {
            let t = truth.row(h, r);
            if t.is_empty() {
                continue;
            }
            let p = predicted.row(h, r);
            // both sides sorted ascending
            let mut hits = 0usize;
            let mut pi = 0usize;
            for &j in t {
                while pi < p.len() && p[pi] < j {
                    pi += 1;
                }
                if pi < p.len() && p[pi] == j {
                    hits += 1;
                }
            }
            row_sum += hits as f64 / t.len() as f64;
            rows_counted += 1;
        }
        if rows_counted > 0 {
            head_sum += row_sum / rows_counted as f64;
            heads_counted += 1;
        }
    }
    Ok(if heads_counted == 0 { 1.0 } else { head_sum / heads_counted as f64 })
}

/// Element-wise error metrics between two tensors of identical dims.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OutputError {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub relative_l2: f64,
}

pub fn output_error<S: Real>(a: &Tensor<S>, b: &Tensor<S>) -> Result<OutputError> {
    if a.dims() != b.dims() {
        return Err(Error::validation("output_error requires matching dims"));
    }
    let mut max_abs = 0f64;
    let mut sum_abs = 0f64;
    let mut diff_sq = 0f64;
    let mut ref_sq = 0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = (x.to_f64_lossy() - y.to_f64_lossy()).abs();
        max_abs = max_abs.max(d);
        sum_abs += d;
        diff_sq += d * d;
        ref_sq += y.to_f64_lossy().powi(2);
    }
    let relative_l2 = if ref_sq == 0.0 {
        if diff_sq == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (diff_sq / ref_sq).sqrt()
    };
    Ok(OutputError { max_abs, mean_abs: sum_abs / a.len() as f64, relative_l2 })
}
