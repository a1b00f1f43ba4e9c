//! Command-line front end: population generation, single-sample estimation,
//! exact variances, design comparison, replicated simulation, closed-form
//! model biases, and a canned two-way STSI scenario.
//!
//! Every output embeds its resolved configuration so a run can be
//! reproduced from the output alone.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ccs_core::bias::{closed_form_rb, BiasInputs};
use ccs_core::design::{CrossSample, DesignSpec, Stratum};
use ccs_core::estimate::{ht_ratio, ht_total, SampleMatrix};
use ccs_core::grid::PopulationGrid;
use ccs_core::model::{calibrate_beta, generate_count_pair, generate_grid, PMode};
use ccs_core::montecarlo::{run_experiment, ExperimentSpec, PopSource, DEFAULT_TRUTH_REPS};
use ccs_core::varest;
use ccs_core::ModelParams;
use ccs_core::{exact, rng};

#[derive(Parser)]
#[command(name = "ccs", version, about = "Estimation under cross-classified sampling")]
struct Cli {
    /// Master seed for all randomized subcommands.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replicated runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a population grid (and optionally a count pair) from the
    /// two-way random-effects model.
    GenPop(GenPopArgs),
    /// Draw one cross sample and estimate a total or ratio with all
    /// variance estimators.
    Estimate(EstimateArgs),
    /// Exact design variance of the HT total with its decompositions.
    ExactVariance(ExactVarianceArgs),
    /// Sweep SI sample sizes comparing cross-classified against two-stage
    /// row-first sampling.
    CompareDesigns(CompareDesignsArgs),
    /// Replicated simulation: relative biases, negative counts, coverage.
    Simulate(SimulateArgs),
    /// Closed-form relative biases of the simplified estimators.
    ModelBias(ModelBiasArgs),
    /// Canned two-way stratified scenario on a 544 x 365 grid.
    ElfeScenario(ElfeArgs),
}

#[derive(Args)]
struct GenPopArgs {
    #[arg(long)]
    nm: usize,
    #[arg(long)]
    nd: usize,
    #[arg(long, default_value_t = 200.0)]
    mu: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_m: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_d: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_e: f64,
    /// Also derive a count pair (x, y) from the grid.
    #[arg(long)]
    count_pair: bool,
    /// Constant per-cell success probability for the count pair.
    #[arg(long, conflicts_with = "logit_target")]
    p: Option<f64>,
    /// Calibrate a logit slope so the average probability hits this target.
    #[arg(long)]
    logit_target: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Population CSV (the study variable; numerator when --pop-x is given).
    #[arg(long)]
    pop: PathBuf,
    /// Denominator variable CSV; switches to ratio estimation.
    #[arg(long)]
    pop_x: Option<PathBuf>,
    /// Row design, e.g. "si(n=5)" or "stsi(10:2,10:3)" or "poisson(p=0.1)".
    #[arg(long)]
    dm: String,
    /// Column design, same grammar.
    #[arg(long)]
    dd: String,
}

#[derive(Args)]
struct ExactVarianceArgs {
    #[arg(long)]
    pop: PathBuf,
    #[arg(long)]
    dm: String,
    #[arg(long)]
    dd: String,
}

#[derive(Args)]
struct CompareDesignsArgs {
    #[arg(long)]
    pop: PathBuf,
    /// Comma-separated SI sample sizes applied to both dimensions.
    #[arg(long, default_value = "5,10,100,500", value_delimiter = ',')]
    sizes: Vec<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    pop: PathBuf,
    #[arg(long)]
    pop_x: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Target::Total)]
    target: Target,
    #[arg(long)]
    dm: String,
    #[arg(long)]
    dd: String,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_TRUTH_REPS)]
    truth_reps: usize,
    /// Confidence level in (0,1) for interval coverage.
    #[arg(long)]
    ci_level: Option<f64>,
    /// Skipped replications above this count fail the run.
    #[arg(long, default_value_t = 0)]
    max_skipped: u64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Target {
    Total,
    Ratio,
}

#[derive(Args)]
struct ModelBiasArgs {
    #[arg(long)]
    rm: f64,
    #[arg(long)]
    rd: f64,
    #[arg(long)]
    nm: usize,
    #[arg(long = "NM")]
    cap_nm: usize,
    #[arg(long)]
    nd: usize,
    #[arg(long = "ND")]
    cap_nd: usize,
}

#[derive(Args)]
struct ElfeArgs {
    #[arg(long, default_value_t = 200.0)]
    mu: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_m: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_d: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_e: f64,
    /// Samples over which the relative differences are averaged.
    #[arg(long, default_value_t = 100)]
    reps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing the worker pool")?;
    }
    match &cli.command {
        Command::GenPop(a) => cmd_gen_pop(&cli, a),
        Command::Estimate(a) => cmd_estimate(&cli, a),
        Command::ExactVariance(a) => cmd_exact_variance(&cli, a),
        Command::CompareDesigns(a) => cmd_compare_designs(&cli, a),
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::ModelBias(a) => cmd_model_bias(&cli, a),
        Command::ElfeScenario(a) => cmd_elfe_scenario(&cli, a),
    }
}

fn write_output(cli: &Cli, value: &Value) -> Result<()> {
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(value)?,
        Format::Csv => to_csv(value),
    };
    match &cli.out {
        Some(path) => {
            std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

/// CSV rendering: an array of flat objects becomes a table; any other value
/// becomes flattened `key,value` rows.
fn to_csv(value: &Value) -> String {
    if let Some(rows) = value.as_array() {
        if let Some(first) = rows.first().and_then(|r| r.as_object()) {
            let headers: Vec<&String> = first.keys().collect();
            let mut out = headers
                .iter()
                .map(|h| h.as_str())
                .collect::<Vec<_>>()
                .join(",");
            for row in rows {
                out.push('\n');
                let obj = row.as_object().expect("homogeneous rows");
                let cells: Vec<String> = headers.iter().map(|h| scalar(&obj[*h])).collect();
                out.push_str(&cells.join(","));
            }
            return out;
        }
    }
    let mut rows = Vec::new();
    flatten("", value, &mut rows);
    rows.iter()
        .map(|(k, v)| format!("{k},{v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), v, rows);
            }
        }
        other => rows.push((prefix.to_string(), scalar(other))),
    }
}

fn load_grid(path: &Path) -> Result<PopulationGrid> {
    PopulationGrid::read_csv_file(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_design(text: &str, population_size: usize, which: &str) -> Result<DesignSpec> {
    DesignSpec::parse(text, population_size)
        .with_context(|| format!("parsing --{which} design '{text}'"))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned());
    let mut name = format!("{stem}_{suffix}");
    if let Some(ext) = ext {
        name = format!("{name}.{ext}");
    }
    path.with_file_name(name)
}

fn cmd_gen_pop(cli: &Cli, a: &GenPopArgs) -> Result<ExitCode> {
    let out = cli
        .out
        .as_ref()
        .context("gen-pop requires --out for the population file")?;
    let params = ModelParams {
        mu: a.mu,
        sigma_m: a.sigma_m,
        sigma_d: a.sigma_d,
        sigma_e: a.sigma_e,
        n_rows: a.nm,
        n_cols: a.nd,
        seed: cli.seed,
    };
    let label = format!(
        "mu={} sigma_m={} sigma_d={} sigma_e={} seed={}",
        a.mu, a.sigma_m, a.sigma_d, a.sigma_e, cli.seed
    );
    let mut written = vec![out.display().to_string()];
    if a.count_pair {
        let p_mode = match (a.p, a.logit_target) {
            (Some(p), None) => PMode::Constant(p),
            (None, Some(target)) => {
                let z = generate_grid(&params)?;
                PMode::Logit(calibrate_beta(&z, target)?)
            }
            (None, None) => PMode::Constant(0.3),
            (Some(_), Some(_)) => unreachable!("clap conflict"),
        };
        let pair = generate_count_pair(&params, p_mode)?;
        generate_grid(&params)?.with_label(label.clone()).write_csv_file(out)?;
        let x_path = sibling(out, "x");
        let y_path = sibling(out, "y");
        pair.x.with_label(format!("{label} var=x")).write_csv_file(&x_path)?;
        pair.y.with_label(format!("{label} var=y")).write_csv_file(&y_path)?;
        written.push(x_path.display().to_string());
        written.push(y_path.display().to_string());
    } else {
        generate_grid(&params)?.with_label(label).write_csv_file(out)?;
    }
    eprintln!("wrote {}", written.join(", "));
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate(cli: &Cli, a: &EstimateArgs) -> Result<ExitCode> {
    let y = load_grid(&a.pop)?;
    let dm = parse_design(&a.dm, y.n_rows(), "dm")?;
    let dd = parse_design(&a.dd, y.n_cols(), "dd")?;
    let mut rng = rng::stream_rng(cli.seed, 0);
    let sample = CrossSample::draw(&dm, &dd, &mut rng);
    let config = json!({
        "subcommand": "estimate",
        "pop": a.pop.display().to_string(),
        "pop_x": a.pop_x.as_ref().map(|p| p.display().to_string()),
        "dm": dm.grammar_string(),
        "dd": dd.grammar_string(),
        "seed": cli.seed,
    });
    let output = match &a.pop_x {
        None => {
            let est = ht_total(&y, &dm, &dd, &sample)?;
            let sm = SampleMatrix::from_grid(&y, &sample);
            let report = varest::full_report(&sm, &dm, &dd)?;
            json!({
                "config": config,
                "target": "total",
                "t_hat": est.t_hat,
                "degenerate": est.degenerate,
                "sample_rows": sample.rows.len(),
                "sample_cols": sample.cols.len(),
                "variance": report,
            })
        }
        Some(x_path) => {
            let x = load_grid(x_path)?;
            let est = ht_ratio(&y, &x, &dm, &dd, &sample)?;
            let report = varest::full_report(&est.linearized, &dm, &dd)?;
            json!({
                "config": config,
                "target": "ratio",
                "r_hat": est.r_hat,
                "t_hat_y": est.t_hat_y,
                "t_hat_x": est.t_hat_x,
                "sample_rows": sample.rows.len(),
                "sample_cols": sample.cols.len(),
                "variance": report,
            })
        }
    };
    write_output(cli, &output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_exact_variance(cli: &Cli, a: &ExactVarianceArgs) -> Result<ExitCode> {
    let y = load_grid(&a.pop)?;
    let dm = parse_design(&a.dm, y.n_rows(), "dm")?;
    let dd = parse_design(&a.dd, y.n_cols(), "dd")?;
    let report = exact::decompose(&y, &dm, &dd)?;
    let output = json!({
        "config": {
            "subcommand": "exact-variance",
            "pop": a.pop.display().to_string(),
            "dm": dm.grammar_string(),
            "dd": dd.grammar_string(),
        },
        "report": report,
    });
    write_output(cli, &output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare_designs(cli: &Cli, a: &CompareDesignsArgs) -> Result<ExitCode> {
    let y = load_grid(&a.pop)?;
    if a.sizes.is_empty() {
        bail!("--sizes must list at least one sample size");
    }
    let mut pairs = Vec::new();
    for &nm in &a.sizes {
        for &nd in &a.sizes {
            pairs.push((nm, nd));
        }
    }
    let rows = exact::variance_ratio_sweep(&y, &pairs)?;
    let table: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "n_m": r.n_m,
                "n_d": r.n_d,
                "v_ccs": r.v_ccs,
                "v_md": r.v_md,
                "ratio_pct": r.ratio_pct,
            })
        })
        .collect();
    let output = match cli.format {
        Format::Csv => Value::Array(table),
        Format::Json => json!({
            "config": {
                "subcommand": "compare-designs",
                "pop": a.pop.display().to_string(),
                "sizes": a.sizes,
            },
            "rows": table,
        }),
    };
    write_output(cli, &output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<ExitCode> {
    let y = load_grid(&a.pop)?;
    let (nr, nc) = (y.n_rows(), y.n_cols());
    let pop = match a.target {
        Target::Total => {
            if a.pop_x.is_some() {
                bail!("--pop-x only applies to --target ratio");
            }
            PopSource::Total(y)
        }
        Target::Ratio => {
            let x_path = a.pop_x.as_ref().context("--target ratio requires --pop-x")?;
            PopSource::Ratio { y, x: load_grid(x_path)? }
        }
    };
    let dm = parse_design(&a.dm, nr, "dm")?;
    let dd = parse_design(&a.dd, nc, "dd")?;
    let spec = ExperimentSpec {
        pop,
        dm,
        dd,
        reps: a.reps,
        truth_reps: a.truth_reps,
        seed: cli.seed,
        ci_level: a.ci_level,
    };
    let summary = run_experiment(&spec)?;
    let skipped = summary.skipped;
    let output = json!({
        "spec_echo": {
            "subcommand": "simulate",
            "pop": a.pop.display().to_string(),
            "pop_x": a.pop_x.as_ref().map(|p| p.display().to_string()),
            "target": if a.target == Target::Total { "total" } else { "ratio" },
            "dm": spec.dm.grammar_string(),
            "dd": spec.dd.grammar_string(),
            "reps": a.reps,
            "truth_reps": a.truth_reps,
            "seed": cli.seed,
            "ci_level": a.ci_level,
        },
        "rb_mc": summary.rb_mc,
        "neg_count": summary.neg_count,
        "true_variance": summary.true_variance,
        "true_variance_se": summary.true_variance_se,
        "coverage": summary.coverage,
        "skipped": summary.skipped,
        "elapsed_ms": summary.elapsed_ms,
    });
    write_output(cli, &output)?;
    if skipped > a.max_skipped {
        eprintln!("error: {skipped} replications skipped (max allowed {})", a.max_skipped);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_model_bias(cli: &Cli, a: &ModelBiasArgs) -> Result<ExitCode> {
    let inputs = BiasInputs {
        r_m: a.rm,
        r_d: a.rd,
        n_m: a.nm,
        n_d: a.nd,
        cap_n_m: a.cap_nm,
        cap_n_d: a.cap_nd,
    };
    let report = closed_form_rb(&inputs)?;
    let output = json!({
        "config": {
            "subcommand": "model-bias",
            "rm": a.rm, "rd": a.rd,
            "nm": a.nm, "NM": a.cap_nm,
            "nd": a.nd, "ND": a.cap_nd,
        },
        "a1": report.a1,
        "a2": report.a2,
        "a3": report.a3,
        "rb1": report.rb1,
        "rb2": report.rb2,
        "rb3": report.rb3,
    });
    write_output(cli, &output)?;
    Ok(ExitCode::SUCCESS)
}

/// Built-in strata of the canned scenario: 544 rows sampled 287, 365
/// columns sampled 25.
fn elfe_designs() -> (DesignSpec, DesignSpec) {
    let rows = DesignSpec::stsi(vec![
        Stratum { size: 108, take: 21 },
        Stratum { size: 108, take: 41 },
        Stratum { size: 109, take: 55 },
        Stratum { size: 108, take: 80 },
        Stratum { size: 111, take: 90 },
    ])
    .expect("built-in row strata are valid");
    let cols = DesignSpec::stsi(vec![
        Stratum { size: 91, take: 4 },
        Stratum { size: 91, take: 6 },
        Stratum { size: 91, take: 7 },
        Stratum { size: 92, take: 8 },
    ])
    .expect("built-in column strata are valid");
    (rows, cols)
}

fn cmd_elfe_scenario(cli: &Cli, a: &ElfeArgs) -> Result<ExitCode> {
    if a.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let (dm, dd) = elfe_designs();
    let params = ModelParams {
        mu: a.mu,
        sigma_m: a.sigma_m,
        sigma_d: a.sigma_d,
        sigma_e: a.sigma_e,
        n_rows: dm.population_size(),
        n_cols: dd.population_size(),
        seed: cli.seed,
    };
    let grid = generate_grid(&params)?;
    let v_exact = exact::v_ccs(&grid, &dm, &dd)?;
    let mut sums = [0.0f64; 5]; // v_yg, v_simp1..3, v_ht
    let mut rd_sums = [0.0f64; 3];
    for rep in 0..a.reps {
        let mut rng = rng::stream_rng(cli.seed, rng::REP_STREAM_BASE + rep as u64);
        let sample = CrossSample::draw(&dm, &dd, &mut rng);
        let sm = SampleMatrix::from_grid(&grid, &sample);
        let report = varest::full_report(&sm, &dm, &dd)?;
        let v_yg = report.v_yg.expect("stsi designs are fixed-size");
        sums[0] += v_yg;
        sums[1] += report.v_simp1.unwrap();
        sums[2] += report.v_simp2.unwrap();
        sums[3] += report.v_simp3.unwrap();
        sums[4] += report.v_ht;
        if v_yg != 0.0 {
            rd_sums[0] += (report.v_simp1.unwrap() - v_yg) / v_yg;
            rd_sums[1] += (report.v_simp2.unwrap() - v_yg) / v_yg;
            rd_sums[2] += (report.v_simp3.unwrap() - v_yg) / v_yg;
        }
    }
    let n = a.reps as f64;
    let output = json!({
        "config": {
            "subcommand": "elfe-scenario",
            "mu": a.mu,
            "sigma_m": a.sigma_m,
            "sigma_d": a.sigma_d,
            "sigma_e": a.sigma_e,
            "reps": a.reps,
            "seed": cli.seed,
            "dm": dm.grammar_string(),
            "dd": dd.grammar_string(),
        },
        "n_m": 287,
        "n_d": 25,
        "v_ccs_exact": v_exact,
        "mean_v_yg": sums[0] / n,
        "mean_v_simp1": sums[1] / n,
        "mean_v_simp2": sums[2] / n,
        "mean_v_simp3": sums[3] / n,
        "mean_v_ht": sums[4] / n,
        "rd_simp1": rd_sums[0] / n,
        "rd_simp2": rd_sums[1] / n,
        "rd_simp3": rd_sums[2] / n,
    });
    write_output(cli, &output)?;
    Ok(ExitCode::SUCCESS)
}
