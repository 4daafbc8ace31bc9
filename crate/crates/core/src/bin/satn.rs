//! Experiment CLI: sparsity allocation, bucket generation, pipeline
//! planning, single runs and baseline benches over synthetic workloads.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use satn::bucketing::{self, ScalePair};
use satn::driver::{self, ExperimentConfig, SelectionMode};
use satn::pipeline::{self, CostProfile, LaneModel};
use satn::sparsity::{self, ImportanceTable};

#[derive(Parser)]
#[command(name = "satn", version, about = "Dynamic sparse attention experiments")]
struct Cli {
    /// Experiment config file (JSON); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Global sparsity ratio r.
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// Buckets per axis (odd; total buckets = N^2).
    #[arg(long = "buckets", global = true)]
    buckets_per_axis: Option<usize>,
    /// Bucket step factor sigma.
    #[arg(long, global = true)]
    step: Option<f64>,
    #[arg(long, global = true, value_enum)]
    selection: Option<SelectionArg>,
    #[arg(long, global = true, value_enum)]
    lane: Option<LaneArg>,
    /// Output directory for reports and generated files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Row,
    Head,
}

#[derive(Clone, Copy, ValueEnum)]
enum LaneArg {
    #[value(name = "three-clock")]
    ThreeClock,
    Single,
}

#[derive(Subcommand)]
enum Command {
    /// Turn an importance table into per-head sparsity ratios.
    Allocate {
        /// Importance table JSON (baseline_loss, head_losses, layer_losses,
        /// heads_per_layer).
        importance: PathBuf,
        /// Clamp threshold for importance products.
        #[arg(long)]
        clamp: Option<f64>,
    },
    /// Build a scale-factor bucket grid from calibration statistics.
    Buckets {
        /// Calibration JSON: {"scales": [{"lambda_q": .., "lambda_k": ..}, ..]}
        calibration: PathBuf,
    },
    /// Run the full pipeline on a synthetic workload and report metrics.
    Run,
    /// Compare all baselines under the cost model.
    Bench,
    /// Plan and simulate a pipeline instance (no attention math).
    Plan {
        /// Instance JSON: {"profile": CostProfile, "head_buckets": [..]}.
        /// Without it, a synthetic instance comes from the config.
        instance: Option<PathBuf>,
        /// Also run the brute-force oracle when feasible.
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationStats {
    scales: Vec<ScalePair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanInstance {
    profile: CostProfile,
    head_buckets: Vec<usize>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.ratio {
        cfg.ratio = r;
    }
    if let Some(b) = cli.buckets_per_axis {
        cfg.bucket_per_axis = b;
    }
    if let Some(s) = cli.step {
        cfg.bucket_step = s;
    }
    if let Some(sel) = cli.selection {
        cfg.selection = match sel {
            SelectionArg::Row => SelectionMode::Row,
            SelectionArg::Head => SelectionMode::Head,
        };
    }
    if let Some(lane) = cli.lane {
        cfg.lane = match lane {
            LaneArg::ThreeClock => LaneModel::ThreeClock,
            LaneArg::Single => LaneModel::SingleLane,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    std::fs::create_dir_all(&cli.out)?;
    let cfg = load_config(&cli)?;

    match &cli.command {
        Command::Allocate { importance, clamp } => {
            let text = std::fs::read_to_string(importance)
                .with_context(|| format!("reading {}", importance.display()))?;
            let table: ImportanceTable = serde_json::from_str(&text).context("parsing importance table")?;
            let budget = sparsity::allocate_ratios(
                &table,
                cfg.ratio,
                clamp.unwrap_or(cfg.clamp_threshold),
            )?;
            let path = cli.out.join(format!("budget_{}.json", cfg.hash()));
            write_json(&path, &budget)?;
            println!(
                "allocated {} head ratios (r = {}, {} capped)",
                budget.ratios.len(),
                budget.global_ratio,
                budget.capped
            );
        }
        Command::Buckets { calibration } => {
            let text = std::fs::read_to_string(calibration)
                .with_context(|| format!("reading {}", calibration.display()))?;
            let stats: CalibrationStats = serde_json::from_str(&text).context("parsing calibration stats")?;
            let center = driver::calibrate_center(&stats.scales)?;
            let grid = bucketing::build_grid(center, cfg.bucket_step, cfg.bucket_per_axis)?;
            let path = cli.out.join(format!("buckets_{}.json", cfg.hash()));
            write_json(&path, &grid)?;
            println!(
                "grid: {} buckets, center ({:.5}, {:.5}), step {}",
                grid.len(),
                center.lambda_q,
                center.lambda_k,
                grid.step
            );
        }
        Command::Run => {
            let reports = driver::run(&cfg)?;
            for r in &reports {
                println!(
                    "seq {:>6}  recall {:.4}  max_abs {:.3e}  rel_l2 {:.3e}  makespan {:.3} ms  (serialized {:.3} ms, x{:.2})  bucket hits {:.0}%",
                    r.seq_len,
                    r.recall,
                    r.output_error.max_abs,
                    r.output_error.relative_l2,
                    r.makespan_ms,
                    r.serialized_ms,
                    r.speedup_vs_serialized,
                    r.bucket_hit_rate * 100.0
                );
            }
            let base = cli.out.join(format!("run_{}", cfg.hash()));
            write_json(&base.with_extension("json"), &reports)?;
            std::fs::write(base.with_extension("csv"), driver::run_csv(&reports))?;
        }
        Command::Bench => {
            let reports = driver::bench(&cfg)?;
            for rep in &reports {
                println!("seq {}:", rep.seq_len);
                println!("  {:<16} {:>12} {:>12} {:>10}", "baseline", "latency ms", "rel_l2", "recall");
                for row in &rep.rows {
                    println!(
                        "  {:<16} {:>12.3} {:>12.3e} {:>10.4}",
                        row.baseline, row.latency_ms, row.relative_l2, row.recall
                    );
                }
            }
            let base = cli.out.join(format!("bench_{}", cfg.hash()));
            write_json(&base.with_extension("json"), &reports)?;
            std::fs::write(base.with_extension("csv"), driver::bench_csv(&reports))?;
        }
        Command::Plan { instance, oracle } => {
            let (profile, head_buckets) = match instance {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    let inst: PlanInstance = serde_json::from_str(&text).context("parsing plan instance")?;
                    (inst.profile, inst.head_buckets)
                }
                None => {
                    use rand::{Rng, SeedableRng};
                    let ratios = cfg.ratios();
                    let profile = cfg.cost_profile(&ratios);
                    let n_buckets = cfg.bucket_per_axis * cfg.bucket_per_axis;
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
                    let buckets = (0..cfg.model.q_heads).map(|_| rng.gen_range(0..n_buckets)).collect();
                    (profile, buckets)
                }
            };
            let groups = pipeline::form_groups(&head_buckets);
            let schedule = pipeline::plan_greedy(&groups, &profile, cfg.lane)?;
            let report = pipeline::simulate(&schedule, &profile)?;
            let serialized = pipeline::serialized_makespan(&groups, &profile);
            println!(
                "{} heads in {} fused groups; greedy makespan {:.3} ms, serialized {:.3} ms (x{:.2})",
                head_buckets.len(),
                groups.len(),
                schedule.makespan,
                serialized,
                serialized / schedule.makespan
            );
            println!(
                "breakdown: npu {:.1}%  topk {:.1}%  qkv {:.1}%  (bubble {:.3} ms)",
                report.npu_fraction * 100.0,
                report.topk_fraction * 100.0,
                report.qkv_fraction * 100.0,
                report.bubble
            );
            if *oracle {
                match pipeline::plan_bruteforce(
                    &groups,
                    &profile,
                    cfg.lane,
                    pipeline::DEFAULT_BRUTE_FORCE_LIMIT,
                ) {
                    Ok(best) => println!("brute-force optimum: {:.3} ms", best.makespan),
                    Err(e) => bail!("oracle unavailable: {e}"),
                }
            }
            for e in &schedule.events {
                println!(
                    "  {:?} {:>3}  [{:8.3}, {:8.3})",
                    e.stage, e.id, e.start, e.finish
                );
            }
            let path = cli.out.join(format!("schedule_{}.json", cfg.hash()));
            write_json(&path, &schedule)?;
        }
    }
    Ok(())
}
