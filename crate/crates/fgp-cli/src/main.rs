//! Command-line front end: simulate or ingest a market panel, run one or
//! many decompositions, emit CSV series and static SVG charts.

mod plot;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fgp::{
    ingest, multiplicative_decomposition, open_market_decomposition,
    ranked_multiplicative_decomposition, simulate, Baseline, DecompositionSeries, DlretPolicy,
    EntrantCapRule, Family, MarketPath, SimConfig, SimModel,
};
use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Default output directory when `--out` is not given.
const OUT_DIR_ENV: &str = "FGP_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "fgp",
    version,
    about = "Self-financing portfolio decompositions in markets of changing dimension"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a market and write the canonical CSV panel.
    Simulate(SimulateArgs),
    /// Decompose one or more families over a panel; write CSVs and charts.
    Backtest(BacktestArgs),
    /// Decompose a single family and print its series CSV to stdout.
    Decompose(DecomposeArgs),
}

/// Simulation flags; each has a config-file twin under the same name with
/// dashes replaced by underscores.
#[derive(Args, Clone, Default)]
struct SimFlags {
    /// Market model: birth-death, split-merge or combined.
    #[arg(long)]
    model: Option<String>,
    /// Number of trading days.
    #[arg(long)]
    horizon: Option<usize>,
    /// Initial number of stocks.
    #[arg(long)]
    n0: Option<usize>,
    /// Per-day entry rate.
    #[arg(long)]
    birth_rate: Option<f64>,
    /// Per-day exit rate.
    #[arg(long)]
    death_rate: Option<f64>,
    /// Per-day merger rate (split-merge and combined models).
    #[arg(long)]
    merge_rate: Option<f64>,
    /// Largest-weight threshold that triggers a split.
    #[arg(long)]
    split_threshold: Option<f64>,
    /// Daily log-return drift.
    #[arg(long)]
    drift: Option<f64>,
    /// Daily log-return volatility.
    #[arg(long)]
    vol: Option<f64>,
    /// Entrant capitalization: "median" or a fixed positive number.
    #[arg(long)]
    entrant_cap: Option<String>,
    /// Probability that a death's delisting return is missing.
    #[arg(long)]
    dlret_missing_prob: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat TOML config; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    sim: SimFlags,
    /// Output CSV file (default: <out dir>/panel.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BacktestArgs {
    /// Flat TOML config; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input panel CSV. Mutually exclusive with --simulate.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Simulate the input panel instead of reading a file.
    #[arg(long)]
    simulate: bool,
    #[command(flatten)]
    sim: SimFlags,
    /// Family spec, repeatable: market, equal, entropy, diversity:p=0.25,
    /// top_m:m=10, diversity_top_m:p=0.5,m=10.
    #[arg(long = "family")]
    families: Vec<String>,
    /// Baseline: total_market, sfm or top_m:m=N.
    #[arg(long)]
    baseline: Option<String>,
    /// Delisting-return policy: conservative, optimistic or as-given.
    #[arg(long)]
    dlret_policy: Option<String>,
    /// Write an SVG chart per family (--plot=false to disable a config twin).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    plot: Option<bool>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Flat TOML config; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input panel CSV. Mutually exclusive with --simulate.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Simulate the input panel instead of reading a file.
    #[arg(long)]
    simulate: bool,
    #[command(flatten)]
    sim: SimFlags,
    /// Family spec.
    #[arg(long)]
    family: Option<String>,
    /// Baseline: total_market, sfm or top_m:m=N.
    #[arg(long)]
    baseline: Option<String>,
    /// Delisting-return policy: conservative, optimistic or as-given.
    #[arg(long)]
    dlret_policy: Option<String>,
}

/// Config-file twins of the command-line flags, one flat document per run.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    horizon: Option<usize>,
    n0: Option<usize>,
    birth_rate: Option<f64>,
    death_rate: Option<f64>,
    merge_rate: Option<f64>,
    split_threshold: Option<f64>,
    drift: Option<f64>,
    vol: Option<f64>,
    entrant_cap: Option<String>,
    dlret_missing_prob: Option<f64>,
    seed: Option<u64>,
    input: Option<PathBuf>,
    simulate: Option<bool>,
    family: Option<Vec<String>>,
    baseline: Option<String>,
    dlret_policy: Option<String>,
    plot: Option<bool>,
    out: Option<PathBuf>,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn build_sim_config(flags: &SimFlags, file: &FileConfig) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    let model = flags.model.clone().or_else(|| file.model.clone());
    if let Some(m) = model {
        cfg.model = SimModel::parse(&m)
            .ok_or_else(|| anyhow!("unknown model `{m}` (birth-death, split-merge, combined)"))?;
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = flags.$field.or(file.$field) {
                cfg.$field = v;
            }
        };
    }
    take!(horizon);
    take!(n0);
    take!(birth_rate);
    take!(death_rate);
    take!(merge_rate);
    take!(split_threshold);
    take!(drift);
    take!(dlret_missing_prob);
    take!(seed);
    if let Some(v) = flags.vol.or(file.vol) {
        cfg.volatility = v;
    }
    if let Some(rule) = flags
        .entrant_cap
        .clone()
        .or_else(|| file.entrant_cap.clone())
    {
        cfg.entrant_cap = if rule == "median" {
            EntrantCapRule::MedianCap
        } else {
            let cap: f64 = rule
                .parse()
                .map_err(|_| anyhow!("entrant_cap must be `median` or a number, got `{rule}`"))?;
            EntrantCapRule::FixedCap(cap)
        };
    }
    Ok(cfg)
}

fn out_dir(cli: &Option<PathBuf>, file: &FileConfig) -> PathBuf {
    cli.clone()
        .or_else(|| file.out.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn parse_policy(cli: &Option<String>, file: &FileConfig) -> Result<DlretPolicy> {
    match cli.clone().or_else(|| file.dlret_policy.clone()) {
        None => Ok(DlretPolicy::AsGiven),
        Some(s) => DlretPolicy::parse(&s).ok_or_else(|| {
            anyhow!("unknown dlret policy `{s}` (conservative, optimistic, as-given)")
        }),
    }
}

fn parse_baseline(cli: &Option<String>, file: &FileConfig) -> Result<Baseline> {
    match cli.clone().or_else(|| file.baseline.clone()) {
        None => Ok(Baseline::TotalMarket),
        Some(s) => Baseline::parse(&s)
            .ok_or_else(|| anyhow!("unknown baseline `{s}` (total_market, sfm, top_m:m=N)")),
    }
}

/// Reads or simulates the input panel, with delisting returns left as given
/// so that both policy bounds can still be derived from it.
fn resolve_input(
    input: &Option<PathBuf>,
    simulate_flag: bool,
    sim: &SimFlags,
    file: &FileConfig,
) -> Result<MarketPath> {
    let input = input.clone().or_else(|| file.input.clone());
    let simulate_requested = simulate_flag || file.simulate.unwrap_or(false);
    match (input, simulate_requested) {
        (Some(_), true) => bail!("--input and --simulate are mutually exclusive"),
        (Some(path), false) => ingest::load_csv(&path, DlretPolicy::AsGiven)
            .with_context(|| format!("loading panel {}", path.display())),
        (None, true) => {
            let cfg = build_sim_config(sim, file)?;
            Ok(simulate(&cfg)?)
        }
        (None, false) => bail!("no input: pass --input <panel.csv> or --simulate"),
    }
}

/// Runs one family's decomposition under the requested baseline and policy.
fn run_family(
    path: &MarketPath,
    spec: &str,
    baseline: Baseline,
    policy: DlretPolicy,
) -> Result<DecompositionSeries> {
    let fam = Family::builtin(spec)?;
    let resolved = path.with_dlret_policy(policy);
    let mut series = match baseline {
        Baseline::TopM { m } => open_market_decomposition(&resolved, &fam, m, true)?,
        _ => {
            if fam.flags().rank_only {
                ranked_multiplicative_decomposition(&resolved, &fam, true)?
            } else {
                multiplicative_decomposition(&resolved, &fam, true)?
            }
        }
    };
    if !matches!(baseline, Baseline::TopM { .. }) {
        series.baseline = baseline;
    }
    Ok(series)
}

fn family_file_stem(spec: &str) -> String {
    spec.chars()
        .map(|c| match c {
            ':' | ',' | '=' => '_',
            c => c,
        })
        .collect()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let cfg = build_sim_config(&args.sim, &file)?;
    let path = simulate(&cfg)?;
    let out = match args.out.clone().or_else(|| file.out.clone()) {
        Some(p) if p.extension().is_some() => p,
        Some(dir) => dir.join("panel.csv"),
        None => out_dir(&None, &file).join("panel.csv"),
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    ingest::save_csv(&path, &out)?;
    println!(
        "wrote {} ({} days, {} resets, final dimension {})",
        out.display(),
        path.num_days(),
        path.jump_days().len(),
        path.dim(path.num_days() - 1)
    );
    Ok(())
}

struct FamilyOutcome {
    spec: String,
    result: Result<(PathBuf, Option<PathBuf>)>,
}

fn cmd_backtest(args: &BacktestArgs) -> Result<ExitCode> {
    let file = load_file_config(&args.config)?;
    let mut families = args.families.clone();
    if families.is_empty() {
        families = file.family.clone().unwrap_or_default();
    }
    if families.is_empty() {
        bail!("at least one --family is required");
    }
    let baseline = parse_baseline(&args.baseline, &file)?;
    let policy = parse_policy(&args.dlret_policy, &file)?;
    let want_plot = args.plot.or(file.plot).unwrap_or(false);
    let dir = out_dir(&args.out, &file);
    fs::create_dir_all(&dir)?;

    let path = resolve_input(&args.input, args.simulate, &args.sim, &file)?;
    let has_missing_dlret = path.delistings().iter().any(|d| d.dlret.is_none());

    // Families are independent pure runs over the shared immutable path.
    let outcomes: Vec<FamilyOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = families
            .iter()
            .map(|spec| {
                let path = &path;
                let dir = &dir;
                scope.spawn(move || FamilyOutcome {
                    spec: spec.clone(),
                    result: run_and_write(
                        path,
                        spec,
                        baseline,
                        policy,
                        want_plot,
                        has_missing_dlret,
                        dir,
                    ),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("family worker panicked"))
            .collect()
    });

    let mut failures = 0;
    for outcome in &outcomes {
        match &outcome.result {
            Ok((csv, svg)) => {
                let extra = svg
                    .as_ref()
                    .map(|p| format!(" + {}", p.display()))
                    .unwrap_or_default();
                println!("{:<28} wrote {}{}", outcome.spec, csv.display(), extra);
            }
            Err(err) => {
                failures += 1;
                eprintln!("{:<28} ERROR {err:#}", outcome.spec);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} of {} families failed", outcomes.len());
        Ok(ExitCode::FAILURE)
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn run_and_write(
    path: &MarketPath,
    spec: &str,
    baseline: Baseline,
    policy: DlretPolicy,
    want_plot: bool,
    has_missing_dlret: bool,
    dir: &Path,
) -> Result<(PathBuf, Option<PathBuf>)> {
    let series = run_family(path, spec, baseline, policy)?;
    let stem = family_file_stem(spec);
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    fs::write(&csv_path, buf)?;

    let svg_path = if want_plot {
        let svg = if has_missing_dlret {
            // Solid lines: conservative bound; dashed: optimistic bound.
            let conservative = run_family(path, spec, baseline, DlretPolicy::Conservative)?;
            let optimistic = run_family(path, spec, baseline, DlretPolicy::Optimistic)?;
            plot::render(
                &format!("{spec} vs {}", series.baseline.tag()),
                &conservative,
                Some(&optimistic),
            )
        } else {
            plot::render(
                &format!("{spec} vs {}", series.baseline.tag()),
                &series,
                None,
            )
        };
        let p = dir.join(format!("{stem}.svg"));
        fs::write(&p, svg)?;
        Some(p)
    } else {
        None
    };
    Ok((csv_path, svg_path))
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let spec = args
        .family
        .clone()
        .or_else(|| file.family.as_ref().and_then(|f| f.first().cloned()))
        .ok_or_else(|| anyhow!("--family is required"))?;
    let baseline = parse_baseline(&args.baseline, &file)?;
    let policy = parse_policy(&args.dlret_policy, &file)?;
    let path = resolve_input(&args.input, args.simulate, &args.sim, &file)?;
    let series = run_family(&path, &spec, baseline, policy)?;
    let mut stdout = std::io::stdout().lock();
    series.write_csv(&mut stdout)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args).map(|()| ExitCode::SUCCESS),
        Command::Backtest(args) => cmd_backtest(args),
        Command::Decompose(args) => cmd_decompose(args).map(|()| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
