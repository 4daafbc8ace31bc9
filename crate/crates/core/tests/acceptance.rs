//! Acceptance suite: one pass/fail line per criterion, property-based
//! plus cost-model trend checks. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the lines on success).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use satn::attention::{
    block_sparse_select, estimate_scores, float_scores, full_attention, output_error, recall,
    sparse_qkv, topk_select, topk_select_head_ratios, AttentionInputs, ScoreMatrix,
};
use satn::bucketing::{build_grid, select_bucket, MseSpace, ScalePair};
use satn::driver::{self, ExperimentConfig, ModelGeometry};
use satn::pipeline::{
    plan_bruteforce, plan_greedy, plan_sequential, serialized_makespan, simulate, CostProfile,
    FusedGroup, LaneModel, DEFAULT_BRUTE_FORCE_LIMIT,
};
use satn::sparsity::{allocate_ratios, precap_mean, ImportanceTable};
use satn::synth::{gaussian_tensor, heavy_tailed_tensor, snap_to_lattice};
use satn::tensor::{dequantize, quantize};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Gate { failures: Vec::new() }
    }

    fn check(&mut self, id: &str, what: &str, ok: bool, detail: String) {
        if ok {
            println!("PASS {id}: {what} ({detail})");
        } else {
            println!("FAIL {id}: {what} ({detail})");
            self.failures.push(format!("{id}: {what} ({detail})"));
        }
    }
}

fn criterion_1_dense_degeneration(gate: &mut Gate) {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let cfg = ExperimentConfig {
            model: ModelGeometry { q_heads: 4, kv_heads: 2, head_dim: 16, layers: 1 },
            seq_lens: vec![24],
            ratio: 1.0,
            ..Default::default()
        };
        let rep = driver::run_once(&cfg, 24, seed).expect("run");
        worst = worst.max(rep.output_error.max_abs);
    }
    gate.check(
        "criterion 1",
        "sparse attention at ratio 1.0 matches full attention",
        worst <= 1e-5,
        format!("worst max_abs = {worst:.3e} over 100 seeds, tolerance 1e-5"),
    );
}

fn criterion_2_monotonicity(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=128usize);
        let row: Vec<f32> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = row.iter().map(|&x| (x - m).exp()).collect();
        let z: f32 = exps.iter().sum();
        let soft: Vec<f32> = exps.iter().map(|&e| e / z).collect();
        let raw = ScoreMatrix::new(1, 1, n, row).unwrap();
        let post = ScoreMatrix::new(1, 1, n, soft).unwrap();
        let causal = rng.gen_bool(0.5);
        let offset = rng.gen_range(0..n);
        let budget = rng.gen_range(1..=n);
        if topk_select(&raw, budget, causal, offset) != topk_select(&post, budget, causal, offset) {
            mismatches += 1;
        }
    }
    gate.check(
        "criterion 2",
        "pre- and post-softmax top-k selections identical",
        mismatches == 0,
        format!("{mismatches} mismatches over 1000 rows (must be 0)"),
    );
}

fn criterion_3_estimation_exactness(gate: &mut Gate) {
    let mut worst: f32 = 0.0;
    for seed in 0..500u64 {
        let q = gaussian_tensor::<f32>(vec![1, 1, 6, 16], 1.0, 7000 + seed).unwrap();
        let k = gaussian_tensor::<f32>(vec![1, 1, 6, 16], 1.0, 8000 + seed).unwrap();
        let qq = quantize(&q, None).unwrap();
        let qk = quantize(&k, None).unwrap();
        let est = estimate_scores(&qq, &qk, 16).unwrap();
        let flt = float_scores(&dequantize(&qq), &dequantize(&qk), 1, 1).unwrap();
        for (a, b) in est.data().iter().zip(flt.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    gate.check(
        "criterion 3",
        "integer-accumulated scores equal float scores of dequantized tensors",
        worst <= 1e-5,
        format!("worst abs diff = {worst:.3e} over 500 cases, tolerance 1e-5"),
    );
}

fn criterion_4_recall_floor(gate: &mut Gate) {
    let (d_k, seq, ratio) = (64usize, 256usize, 0.2f64);
    let mut sum = 0.0;
    for seed in 0..16u64 {
        let q = gaussian_tensor::<f32>(vec![1, 1, seq, d_k], 1.0, 100 + seed).unwrap();
        let k = gaussian_tensor::<f32>(vec![1, 1, seq, d_k], 1.0, 200 + seed).unwrap();
        let qq = quantize(&q, None).unwrap();
        let qk = quantize(&k, None).unwrap();
        let est = estimate_scores(&qq, &qk, d_k).unwrap();
        let flt = float_scores(&q, &k, 1, 1).unwrap();
        let pred = topk_select_head_ratios(&est, &[ratio], true, 0).unwrap();
        let truth = topk_select_head_ratios(&flt, &[ratio], true, 0).unwrap();
        sum += recall(&pred, &truth).unwrap();
    }
    let mean = sum / 16.0;
    gate.check(
        "criterion 4a",
        "mean recall at ratio 0.2 over 16 seeds",
        mean >= 0.90,
        format!("mean recall = {mean:.4}, floor 0.90"),
    );

    // lossless lattice case
    let mut min_recall = 1.0f64;
    for seed in 0..4u64 {
        let q0 = gaussian_tensor::<f32>(vec![1, 1, seq, d_k], 1.0, 300 + seed).unwrap();
        let k0 = gaussian_tensor::<f32>(vec![1, 1, seq, d_k], 1.0, 400 + seed).unwrap();
        let (q, sq) = snap_to_lattice(&q0).unwrap();
        let (k, sk) = snap_to_lattice(&k0).unwrap();
        let qq = quantize(&q, Some(sq)).unwrap();
        let qk = quantize(&k, Some(sk)).unwrap();
        let est = estimate_scores(&qq, &qk, d_k).unwrap();
        let flt = float_scores(&q, &k, 1, 1).unwrap();
        let pred = topk_select_head_ratios(&est, &[ratio], true, 0).unwrap();
        let truth = topk_select_head_ratios(&flt, &[ratio], true, 0).unwrap();
        min_recall = min_recall.min(recall(&pred, &truth).unwrap());
    }
    gate.check(
        "criterion 4b",
        "recall is exactly 1.0 on lattice-snapped inputs",
        min_recall == 1.0,
        format!("min recall = {min_recall}"),
    );
}

fn criterion_5_allocation(gate: &mut Gate) {
    let table = ImportanceTable {
        baseline_loss: 0.0,
        head_losses: vec![1e-4, 2e-4, 5e-4, 2e-3],
        layer_losses: vec![1.0],
        heads_per_layer: 4,
    };
    let budget = allocate_ratios(&table, 0.2, 1e-3).unwrap();
    let expect = [0.0444, 0.0889, 0.2222, 0.4444];
    let worked_ok = budget
        .ratios
        .iter()
        .zip(expect)
        .all(|(got, want)| (got - want).abs() <= 1e-3);
    gate.check(
        "criterion 5a",
        "clamped allocation worked example",
        worked_ok,
        format!("ratios = {:?}, expected ~{:?} within 1e-3", budget.ratios, expect),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let layers = rng.gen_range(1..=4usize);
        let hpl = rng.gen_range(1..=8usize);
        let baseline = rng.gen_range(0.0..5.0);
        let table = ImportanceTable {
            baseline_loss: baseline,
            head_losses: (0..layers * hpl).map(|_| baseline + rng.gen_range(0.0..2e-3)).collect(),
            layer_losses: (0..layers).map(|_| baseline + rng.gen_range(0.0..2.0)).collect(),
            heads_per_layer: hpl,
        };
        let r = rng.gen_range(0.05..0.95);
        let mean = precap_mean(&table, r, 1e-3).unwrap();
        worst = worst.max((mean - r).abs());
    }
    gate.check(
        "criterion 5b",
        "pre-capping mean ratio equals r",
        worst <= 1e-9,
        format!("worst |mean - r| = {worst:.3e} over 1000 tables, tolerance 1e-9"),
    );
}

fn criterion_6_bucket_selection(gate: &mut Gate) {
    let cfg = ExperimentConfig::default();
    let defaults_ok = cfg.bucket_per_axis * cfg.bucket_per_axis == 9 && cfg.bucket_step == 0.5;
    let grid = build_grid(ScalePair::new(0.05, 0.12).unwrap(), cfg.bucket_step, cfg.bucket_per_axis).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0C4E7);
    let mut mismatches = 0usize;
    for _ in 0..10_000 {
        let obs = ScalePair::new(rng.gen_range(1e-4..1.0), rng.gen_range(1e-4..1.0)).unwrap();
        let got = select_bucket(&grid, obs, MseSpace::Linear);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, b) in grid.buckets.iter().enumerate() {
            let d = (obs.lambda_q - b.lambda_q).powi(2) + (obs.lambda_k - b.lambda_k).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        if got != best {
            mismatches += 1;
        }
    }
    gate.check(
        "criterion 6",
        "bucket selection equals exhaustive-scan oracle; default grid 9 buckets at step 0.5",
        mismatches == 0 && defaults_ok && grid.len() == 9,
        format!("{mismatches} mismatches over 10000 pairs; grid size {}, step {}", grid.len(), cfg.bucket_step),
    );
}

fn criterion_7_planner(gate: &mut Gate) {
    // worked instance: A(npu 1; topk 1, qkv 5), B(npu 5; topk 1, qkv 1)
    let profile = CostProfile {
        npu_points: vec![(1, 1.0)],
        topk_ms: vec![1.0, 1.0],
        qkv_ms: vec![5.0, 1.0],
    };
    let groups = vec![
        FusedGroup::with_launch_cost(0, vec![0], 1.0),
        FusedGroup::with_launch_cost(1, vec![1], 5.0),
    ];
    let greedy = plan_greedy(&groups, &profile, LaneModel::ThreeClock).unwrap();
    let oracle = plan_bruteforce(&groups, &profile, LaneModel::ThreeClock, 1000).unwrap();
    let serial = serialized_makespan(&groups, &profile);
    let worked_ok = greedy.makespan == 8.0 && oracle.makespan == 8.0 && serial == 14.0;
    gate.check(
        "criterion 7a",
        "worked instance: greedy = brute-force = 8, serialized = 14",
        worked_ok,
        format!("greedy {}, oracle {}, serialized {}", greedy.makespan, oracle.makespan, serial),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0x90DA);
    let mut bad = 0usize;
    for _ in 0..200 {
        let n_groups = rng.gen_range(1..=4usize);
        let mut groups = Vec::new();
        let mut topk = Vec::new();
        let mut qkv = Vec::new();
        let mut head = 0usize;
        for gi in 0..n_groups {
            let sz = rng.gen_range(1..=3usize);
            groups.push(FusedGroup::with_launch_cost(
                gi,
                (head..head + sz).collect(),
                rng.gen_range(0.1..5.0),
            ));
            head += sz;
            for _ in 0..sz {
                topk.push(rng.gen_range(0.05..2.0));
                qkv.push(rng.gen_range(0.05..6.0));
            }
        }
        let profile = CostProfile { npu_points: vec![(1, 1.0)], topk_ms: topk, qkv_ms: qkv };
        let greedy = plan_greedy(&groups, &profile, LaneModel::ThreeClock).unwrap();
        let oracle = plan_bruteforce(&groups, &profile, LaneModel::ThreeClock, DEFAULT_BRUTE_FORCE_LIMIT).unwrap();
        let serial = serialized_makespan(&groups, &profile);
        let sim_greedy = simulate(&greedy, &profile).unwrap();
        let sim_oracle = simulate(&oracle, &profile).unwrap();
        let seq = plan_sequential(&groups, &profile).unwrap();
        let sim_seq = simulate(&seq, &profile).unwrap();
        let ok = oracle.makespan <= greedy.makespan + 1e-12
            && greedy.makespan <= serial + 1e-12
            && sim_greedy.makespan == greedy.makespan
            && sim_oracle.makespan == oracle.makespan
            && sim_seq.makespan == seq.makespan;
        if !ok {
            bad += 1;
        }
    }
    gate.check(
        "criterion 7b",
        "greedy bounded by oracle and serialized; simulator agrees exactly",
        bad == 0,
        format!("{bad} violations over 200 random instances"),
    );
}

fn criterion_8_trends(gate: &mut Gate) {
    // estimation ~2/3 of serialized sparse time is the default cost profile
    let cfg = ExperimentConfig {
        seq_lens: vec![64],
        ..Default::default()
    };
    let c = &cfg.cost;
    let per_head_sparse = c.cpu_estimate_ms + c.topk_ms + cfg.ratio * c.qkv_dense_ms;
    let est_fraction = c.cpu_estimate_ms / per_head_sparse;
    let report = driver::bench_once(&cfg, 64, 0).unwrap();
    let latency = |name: &str| {
        report.rows.iter().find(|r| r.baseline == name).map(|r| r.latency_ms).unwrap()
    };
    let shadow = latency("shadow");
    let cg_sparse = latency("cg_sparse");
    let cg_full = latency("cg_full");
    gate.check(
        "criterion 8a",
        "shadow makespan strictly below C/G-Sparse and C/G-Full",
        shadow < cg_sparse && shadow < cg_full && (est_fraction - 2.0 / 3.0).abs() < 0.05,
        format!(
            "shadow {shadow:.2} ms vs sparse {cg_sparse:.2} ms / full {cg_full:.2} ms; estimation fraction {est_fraction:.3}"
        ),
    );

    // block 64 vs token-level recall on heavy-tailed inputs
    let (seq, d_k, ratio) = (128usize, 64usize, 0.2f64);
    let mut token_sum = 0.0;
    let mut block_sum = 0.0;
    for seed in 0..8u64 {
        let q = heavy_tailed_tensor::<f32>(vec![1, 1, seq, d_k], 1.0, 0.02, 8.0, 500 + seed).unwrap();
        let k = heavy_tailed_tensor::<f32>(vec![1, 1, seq, d_k], 1.0, 0.02, 8.0, 600 + seed).unwrap();
        let flt = float_scores(&q, &k, 1, 1).unwrap();
        let truth = topk_select_head_ratios(&flt, &[ratio], true, 0).unwrap();
        let qq = quantize(&q, None).unwrap();
        let qk = quantize(&k, None).unwrap();
        let est = estimate_scores(&qq, &qk, d_k).unwrap();
        let token = topk_select_head_ratios(&est, &[ratio], true, 0).unwrap();
        let budget = ((ratio * seq as f64).ceil() as usize).max(1);
        let block = block_sparse_select(&q, &k, 64, budget, true, 0).unwrap();
        token_sum += recall(&token, &truth).unwrap();
        block_sum += recall(&block, &truth).unwrap();
    }
    let (token_recall, block_recall) = (token_sum / 8.0, block_sum / 8.0);
    gate.check(
        "criterion 8b",
        "block-sparse (block 64) recall below token-level on heavy-tailed inputs",
        block_recall < token_recall,
        format!("block recall {block_recall:.4} < token recall {token_recall:.4}"),
    );
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let mut gate = Gate::new();
    criterion_1_dense_degeneration(&mut gate);
    criterion_2_monotonicity(&mut gate);
    criterion_3_estimation_exactness(&mut gate);
    criterion_4_recall_floor(&mut gate);
    criterion_5_allocation(&mut gate);
    criterion_6_bucket_selection(&mut gate);
    criterion_7_planner(&mut gate);
    criterion_8_trends(&mut gate);
    let elapsed = start.elapsed().as_secs_f64();
    gate.check(
        "criterion 9",
        "suite runtime within budget",
        elapsed <= 120.0,
        format!("{elapsed:.1} s, budget 120 s"),
    );
    assert!(gate.failures.is_empty(), "failed criteria:\n{}", gate.failures.join("\n"));
}

/// Dense degeneration at the attention level, independent of the driver:
/// selecting every unmasked position must reproduce full attention.
#[test]
fn full_selection_equals_dense_attention() {
    for seed in 0..10u64 {
        let q = gaussian_tensor::<f32>(vec![1, 2, 16, 8], 1.0, 900 + seed).unwrap();
        let k = gaussian_tensor::<f32>(vec![1, 1, 16, 8], 1.0, 910 + seed).unwrap();
        let v = gaussian_tensor::<f32>(vec![1, 1, 16, 8], 1.0, 920 + seed).unwrap();
        let inp = AttentionInputs {
            q: &q,
            k: &k,
            v: &v,
            num_q_heads: 2,
            num_kv_heads: 1,
            causal: true,
            q_offset: 0,
        };
        let flt = float_scores(&q, &k, 2, 1).unwrap();
        let sel = topk_select(&flt, 16, true, 0);
        let sparse = sparse_qkv(&inp, &sel).unwrap();
        let dense = full_attention(&inp).unwrap();
        let err = output_error(&sparse, &dense).unwrap();
        assert!(err.max_abs <= 1e-5);
    }
}
