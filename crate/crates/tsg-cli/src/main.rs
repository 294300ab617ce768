//! `tsg` command line: run experiments, compare two runs, re-render maps.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use tsg_core::experiment::{run_experiment, write_reports, ExperimentResult};
use tsg_core::freespace::Backend;
use tsg_core::metrics::{mean_report, MetricsReport};
use tsg_core::pipeline::PipelineConfig;
use tsg_core::render::{render_svg_from_state, RenderState};
use tsg_core::rooms::Strategy;
use tsg_core::world::{build_canonical, load_scenario, CanonicalScenario, Scenario};

#[derive(Parser)]
#[command(name = "tsg", about = "Traversability-aware situational-graph testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment and write reports into --out.
    Run {
        /// Canonical name (four_rooms, long_corridor, open_corridor) or a
        /// scenario JSON path.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "traversability")]
        backend: Backend,
        #[arg(long, default_value = "flush")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Measure PGO wall time; forces serial repeats.
        #[arg(long, default_value_t = false)]
        timing: bool,
        /// Worker threads for repeats (clamped to 1 when --timing is on).
        #[arg(long, default_value_t = 1)]
        repeats_parallel: usize,
        /// Optional pipeline config JSON overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Side-by-side CSV of two runs' mean metrics.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the map SVG of a finished run directory.
    Render {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        svg: PathBuf,
    },
}

fn resolve_scenario(name: &str) -> Result<Scenario> {
    if let Ok(canonical) = name.parse::<CanonicalScenario>() {
        return Ok(build_canonical(canonical));
    }
    load_scenario(Path::new(name)).with_context(|| format!("loading scenario '{name}'"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            backend,
            strategy,
            seed,
            repeats,
            timing,
            repeats_parallel,
            config,
            out,
        } => {
            let sc = resolve_scenario(&scenario)?;
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading config {path:?}"))?;
                    serde_json::from_str::<PipelineConfig>(&text)
                        .with_context(|| format!("parsing config {path:?}"))?
                }
                None => PipelineConfig::default(),
            };
            cfg.cluster.backend = backend;
            cfg.rooms.strategy = strategy;
            let seed = match std::env::var("TSG_SEED") {
                Ok(v) => v.parse::<u64>().context("TSG_SEED must be an integer")?,
                Err(_) => seed,
            };
            let workers = if timing {
                if repeats_parallel > 1 {
                    eprintln!("timing mode: forcing --repeats-parallel 1");
                }
                1
            } else {
                repeats_parallel.max(1)
            };
            let result = if workers <= 1 {
                run_experiment(&sc, &cfg, seed, repeats)?
            } else {
                run_parallel(&sc, &cfg, seed, repeats, workers)?
            };
            write_reports(&out, &sc, &cfg, seed, &result)?;
            println!("scenario={} backend={:?} strategy={:?} seed={seed} repeats={repeats}", sc.name, backend, strategy);
            println!("{}", MetricsReport::csv_header());
            println!("{}", result.mean.csv_row());
            println!("reports written to {}", out.display());
            Ok(())
        }
        Command::Compare { a, b, out } => {
            let ra = read_metrics(&a)?;
            let rb = read_metrics(&b)?;
            let csv = compare_csv(&ra, &rb);
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .with_context(|| format!("writing {path:?}"))?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Render { run, svg } => {
            let state_path = run.join("render_state.json");
            let text = std::fs::read_to_string(&state_path)
                .with_context(|| format!("reading {state_path:?}"))?;
            let state: RenderState = serde_json::from_str(&text)?;
            let scenario = Scenario::from_json(&state.scenario)?;
            std::fs::write(&svg, render_svg_from_state(&scenario, &state))
                .with_context(|| format!("writing {svg:?}"))?;
            println!("wrote {}", svg.display());
            Ok(())
        }
    }
}

/// Repeats fanned out over worker threads with per-repeat seeds; metric
/// aggregation is a terminal reduce so ordering does not matter.
fn run_parallel(
    sc: &Scenario,
    cfg: &PipelineConfig,
    seed: u64,
    repeats: usize,
    workers: usize,
) -> Result<ExperimentResult> {
    let repeats = repeats.max(1);
    let mut slots: Vec<Option<ExperimentResult>> = Vec::new();
    slots.resize_with(repeats, || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(repeats) {
            scope.spawn(|| loop {
                let rep = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if rep >= repeats {
                    break;
                }
                let r = run_experiment(sc, cfg, seed + rep as u64, 1);
                if let Ok(r) = r {
                    slots.lock().unwrap()[rep] = Some(r);
                }
            });
        }
    });
    let slots = slots.into_inner().unwrap();
    let mut runs = Vec::with_capacity(repeats);
    let mut seeds = Vec::with_capacity(repeats);
    let mut last = None;
    for (rep, s) in slots.iter_mut().enumerate() {
        match s.take() {
            Some(r) => {
                runs.push(r.runs[0]);
                seeds.push(seed + rep as u64);
                last = Some(r.last);
            }
            None => bail!("repeat {rep} (seed {}) failed", seed + rep as u64),
        }
    }
    Ok(ExperimentResult {
        mean: mean_report(&runs),
        runs,
        seeds,
        last: last.expect("at least one repeat"),
    })
}

fn read_metrics(dir: &Path) -> Result<serde_json::Value> {
    let path = dir.join("metrics.json");
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {path:?}"))?;
    Ok(serde_json::from_str(&text)?)
}

fn compare_csv(a: &serde_json::Value, b: &serde_json::Value) -> String {
    let label = |v: &serde_json::Value| {
        format!(
            "{}/{}/{}",
            v["scenario"].as_str().unwrap_or("?"),
            v["backend"].as_str().unwrap_or("?"),
            v["strategy"].as_str().unwrap_or("?")
        )
    };
    let mut csv = format!("metric,{},{}\n", label(a), label(b));
    for key in [
        "n_first",
        "n_second",
        "n_re",
        "f_re",
        "dcs_mean",
        "dcs_best",
        "d_center",
        "ate",
        "ate_rmse",
        "t_pgo_total",
        "t_pgo_mean",
    ] {
        let get = |v: &serde_json::Value| {
            v["mean"][key].as_f64().map(|x| x.to_string()).unwrap_or_default()
        };
        csv.push_str(&format!("{key},{},{}\n", get(a), get(b)));
    }
    csv
}
