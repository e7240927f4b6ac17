//! `easemap` command-line front end.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use easemap::config::RunConfig;
use easemap::eval::{cross_validate, grid_search, EvalReport, Grid, ReportRow, SplitSpec};
use easemap::export::{comparison_report, ease_to_difficulty, read_reference_csv, trace_series, write_comparison_csv};
use easemap::ingest::{read_prepared_jsonl, write_prepared_jsonl, write_scores, Format};
use easemap::solver::{fit, FittedModel};
use easemap::synth::{generate, to_raw_records, GroundTruth};
use easemap::{build_graph, clean_and_filter, parse_scores, Dataset};

#[derive(Parser)]
#[command(name = "easemap", version, about = "Estimate player skill and map ease from score records")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, clean and transform a raw score dump into a prepared dataset.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<Format>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dataset: PathBuf,
        #[arg(long)]
        out_manifest: PathBuf,
    },
    /// Fit skills and eases to a prepared dataset.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_state: PathBuf,
        #[arg(long)]
        out_trace: PathBuf,
    },
    /// Cross-validate the configured hyperparameters.
    Cv {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Cross-validate every combination of a hyperparameter grid.
    Grid {
        #[command(flatten)]
        eval: EvalArgs,
        /// JSON object mapping hyperparameter names to lists of values.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Rescale fitted eases onto a difficulty scale and compare to a reference.
    Export {
        #[arg(long)]
        state: PathBuf,
        /// CSV with columns map_id,stars.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Difficulty of the hardest and the easiest map, as HARD,EASY.
        #[arg(long, default_value = "15,1", value_parser = parse_anchors)]
        anchors: (f64, f64),
        /// Flag maps whose difficulty differs from the reference by at least this much.
        #[arg(long, default_value_t = 1.0)]
        flag_threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with known skills and eases.
    Synth {
        #[arg(long)]
        players: usize,
        #[arg(long)]
        maps: usize,
        #[arg(long)]
        density: f64,
        /// Standard deviation of the multiplicative log-normal noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArgs,
        /// Prepared dataset (JSONL), or raw scores with --raw.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        out_truth: PathBuf,
        /// Write raw percentage scores (CSV or JSONL by extension) obtained
        /// by inverting the configured score transform.
        #[arg(long)]
        raw: bool,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Report CSV; a JSON copy is written next to it.
    #[arg(long)]
    out_report: PathBuf,
}

/// A JSON config file plus one override flag per configuration key.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    aggregation_topscores_p: Option<f64>,
    /// A positive number, or `none` to disable the filter.
    #[arg(long)]
    aggregation_topscores_sd_range: Option<String>,
    #[arg(long)]
    beta_alpha: Option<f64>,
    #[arg(long)]
    beta_beta: Option<f64>,
    #[arg(long)]
    default_rating: Option<f64>,
    #[arg(long)]
    error_change_prop: Option<f64>,
    #[arg(long)]
    finish_early: Option<bool>,
    #[arg(long)]
    truncexp_base_mean: Option<f64>,
    #[arg(long)]
    truncexp_max: Option<f64>,
    #[arg(long)]
    min_raw_score: Option<f64>,
    #[arg(long)]
    recency_keep_fraction: Option<f64>,
    /// sequential or simultaneous
    #[arg(long)]
    update_schedule: Option<String>,
    /// estimate or player_skill
    #[arg(long)]
    rank_map_edges_by: Option<String>,
    /// upper or two_sided
    #[arg(long)]
    sd_filter: Option<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// default_rating or skip
    #[arg(long)]
    unseen_nodes: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_reader(BufReader::new(open(path)?))
                .with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        let sd_range = self.aggregation_topscores_sd_range.as_deref().map(|s| match s {
            "none" | "null" => Ok(Value::Null),
            s => s.parse::<f64>().map(|v| json!(v)).map_err(|_| anyhow::anyhow!("invalid sd range `{s}`")),
        });
        let overrides: [(&str, Option<Value>); 16] = [
            ("aggregation_topscores_p", self.aggregation_topscores_p.map(|v| json!(v))),
            ("aggregation_topscores_sd_range", sd_range.transpose()?),
            ("beta_alpha", self.beta_alpha.map(|v| json!(v))),
            ("beta_beta", self.beta_beta.map(|v| json!(v))),
            ("default_rating", self.default_rating.map(|v| json!(v))),
            ("error_change_prop", self.error_change_prop.map(|v| json!(v))),
            ("finish_early", self.finish_early.map(|v| json!(v))),
            ("truncexp_base_mean", self.truncexp_base_mean.map(|v| json!(v))),
            ("truncexp_max", self.truncexp_max.map(|v| json!(v))),
            ("min_raw_score", self.min_raw_score.map(|v| json!(v))),
            ("recency_keep_fraction", self.recency_keep_fraction.map(|v| json!(v))),
            ("update_schedule", self.update_schedule.as_ref().map(|v| json!(v))),
            ("rank_map_edges_by", self.rank_map_edges_by.as_ref().map(|v| json!(v))),
            ("sd_filter", self.sd_filter.as_ref().map(|v| json!(v))),
            ("max_iterations", self.max_iterations.map(|v| json!(v))),
            ("unseen_nodes", self.unseen_nodes.as_ref().map(|v| json!(v))),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                cfg.set(key, value).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        Ok(cfg)
    }
}

fn parse_anchors(s: &str) -> Result<(f64, f64), String> {
    let (hard, easy) = s.split_once(',').ok_or("expected HARD,EASY")?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("invalid number `{t}`"));
    Ok((parse(hard)?, parse(easy)?))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let edges = read_prepared_jsonl(BufReader::new(open(path)?))
        .with_context(|| format!("reading dataset {}", path.display()))?;
    Ok(Dataset::from_edges(edges)?)
}

fn prepare(input: &Path, format: Option<Format>, cfg: &RunConfig, out_dataset: &Path, out_manifest: &Path) -> Result<()> {
    let format = match format.or_else(|| Format::from_path(input)) {
        Some(f) => f,
        None => bail!("cannot tell the format of {}; pass --format", input.display()),
    };
    let parsed = parse_scores(BufReader::new(open(input)?), format)?;
    for err in &parsed.errors {
        eprintln!("warning: {}: {err}", input.display());
    }
    ensure!(!parsed.records.is_empty(), "no records in {}", input.display());
    let ds = clean_and_filter(&parsed.records, &cfg.hyperparams, &cfg.modifiers)?;

    let mut out = create(out_dataset)?;
    write_prepared_jsonl(&mut out, &ds.edges)?;
    let m = ds.manifest;
    let manifest = json!({
        "input_rows": parsed.records.len() + parsed.errors.len(),
        "parse_errors": parsed.errors.len(),
        "records": parsed.records.len(),
        "dropped": {
            "unknown_modifier": m.unknown_modifier,
            "below_min_score": m.below_min_score,
            "perfect_score": m.perfect_score,
            "recency": m.recency,
            "duplicate": m.duplicate,
        },
        "edges": ds.edges.len(),
        "players": ds.players.len(),
        "maps": ds.maps.len(),
    });
    write_json(out_manifest, &manifest)?;
    eprintln!("{} records -> {} edges", parsed.records.len(), ds.edges.len());
    Ok(())
}

fn run_fit(dataset: &Path, cfg: &RunConfig, out_state: &Path, out_trace: &Path) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let graph = build_graph(&ds);
    let (state, trace) = fit(&graph, &cfg.hyperparams, &cfg.options.solver)?;
    for (it, mae) in &trace.points {
        eprintln!("iteration {it}: mae {mae}");
    }
    let halt = serde_json::to_value(trace.halt_reason)?;
    eprintln!("halted: {}", halt.as_str().unwrap_or_default());
    write_json(out_state, &FittedModel::new(&graph, &state, &trace))?;
    let mut out = create(out_trace)?;
    trace_series(&mut out, &trace)?;
    Ok(())
}

fn split_spec(eval: &EvalArgs) -> SplitSpec {
    SplitSpec { train_fraction: eval.train_fraction, folds: eval.folds, seed: eval.seed }
}

fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    let csv_path = path.with_extension("csv");
    let mut out = create(&csv_path)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    write_json(&path.with_extension("json"), report)?;
    Ok(())
}

fn print_row(fields: &[String], row: &ReportRow) {
    let params: Vec<String> = fields.iter().map(|f| format!("{f}={}", row.params.get(f).unwrap_or(&Value::Null))).collect();
    let mae = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    println!("best: {} train_mae={} test_mae={}", params.join(" "), mae(row.train_mae), mae(row.test_mae));
}

fn run_cv(eval: &EvalArgs) -> Result<()> {
    let cfg = eval.config.load()?;
    let ds = read_dataset(&eval.dataset)?;
    let cv = cross_validate(&ds.edges, &cfg.hyperparams, &split_spec(eval), &cfg.options)?;
    let report = EvalReport {
        fields: Vec::new(),
        rows: vec![ReportRow {
            params: Default::default(),
            train_mae: Some(cv.train_mae),
            test_mae: Some(cv.test_mae),
            folds: cv.folds,
            failed: false,
            error: None,
        }],
        best: Some(0),
    };
    write_report(&eval.out_report, &report)?;
    print_row(&[], &report.rows[0]);
    Ok(())
}

fn run_grid(eval: &EvalArgs, grid_path: &Path) -> Result<()> {
    let cfg = eval.config.load()?;
    let grid_json: Value = serde_json::from_reader(BufReader::new(open(grid_path)?))
        .with_context(|| format!("reading grid {}", grid_path.display()))?;
    let grid = Grid::from_json(&grid_json)?;
    let ds = read_dataset(&eval.dataset)?;
    let report = grid_search(&ds.edges, &cfg.hyperparams, &grid, &split_spec(eval), &cfg.options)?;
    for row in report.rows.iter().filter(|r| r.failed) {
        eprintln!("warning: combination {} failed: {}", Value::Object(row.params.clone()), row.error.as_deref().unwrap_or(""));
    }
    write_report(&eval.out_report, &report)?;
    match report.best_row() {
        Some(row) => print_row(&report.fields, row),
        None => bail!("every grid combination failed"),
    }
    Ok(())
}

fn run_export(state: &Path, reference: Option<&Path>, anchors: (f64, f64), threshold: f64, out: &Path) -> Result<()> {
    let model: FittedModel = serde_json::from_reader(BufReader::new(open(state)?))
        .with_context(|| format!("reading state {}", state.display()))?;
    let difficulty = ease_to_difficulty(&model.maps, anchors.0, anchors.1)?;
    let reference = match reference {
        Some(path) => read_reference_csv(BufReader::new(open(path)?))
            .with_context(|| format!("reading reference {}", path.display()))?,
        None => Default::default(),
    };
    let rows = comparison_report(&difficulty, &reference, threshold)?;
    let mut w = create(out)?;
    write_comparison_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_synth(
    players: usize,
    maps: usize,
    density: f64,
    noise: f64,
    seed: u64,
    cfg: &RunConfig,
    out: &Path,
    out_truth: &Path,
    raw: bool,
) -> Result<()> {
    let truth = GroundTruth::random(players, maps, noise, seed)?;
    let ds = generate(&truth, density, cfg.hyperparams.truncexp_max)?;
    let mut w = create(out)?;
    if raw {
        let format = match Format::from_path(out) {
            Some(f) => f,
            None => bail!("--raw output must end in .csv or .jsonl"),
        };
        write_scores(&mut w, &to_raw_records(&ds, &cfg.hyperparams)?, format)?;
    } else {
        write_prepared_jsonl(&mut w, &ds.edges)?;
    }
    w.flush()?;
    write_json(out_truth, &truth)?;
    eprintln!("{} edges over {players} players and {maps} maps", ds.edges.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Prepare { input, format, config, out_dataset, out_manifest } => {
            prepare(&input, format, &config.load()?, &out_dataset, &out_manifest)
        }
        Command::Fit { dataset, config, out_state, out_trace } => {
            run_fit(&dataset, &config.load()?, &out_state, &out_trace)
        }
        Command::Cv { eval } => run_cv(&eval),
        Command::Grid { eval, grid } => run_grid(&eval, &grid),
        Command::Export { state, reference, anchors, flag_threshold, out } => {
            run_export(&state, reference.as_deref(), anchors, flag_threshold, &out)
        }
        Command::Synth { players, maps, density, noise, seed, config, out, out_truth, raw } => {
            run_synth(players, maps, density, noise, seed, &config.load()?, &out, &out_truth, raw)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
