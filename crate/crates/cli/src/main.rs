use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridwelfare::harness::{
    fmt_num, ingest_price_traces, ingest_wind_trace, oracle_report, run_experiment, to_rounded_json,
    validate_config, write_distribution_dump, write_json, Experiment, ExperimentConfig, MarketKind, Overrides,
};
use gridwelfare::oracle::OracleOutcome;
use gridwelfare::{Error, PricingMode, Result};

#[derive(Parser)]
#[command(name = "gridwelfare", version, about = "Dynamic pricing and power procurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one controller for the configured horizon.
    Simulate(RunArgs),
    /// Run every eta in parallel with a shared seed.
    Sweep(RunArgs),
    /// Solve the stationary benchmark LP and the price-of-single-price.
    Oracle(RunArgs),
    /// Check a config and report gamma, delta_max and the queue bounds.
    Validate(RunArgs),
    /// Convert price and wind CSV traces into a market file and a renewable dump.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Pricing {
    Same,
    PerUser,
}

#[derive(Clone, Copy, ValueEnum)]
enum Market {
    Iid,
    Markov,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated eta values.
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(long)]
    days: Option<u64>,
    #[arg(long, value_enum)]
    pricing: Option<Pricing>,
    #[arg(long, value_enum)]
    market: Option<Market>,
}

#[derive(Args)]
struct IngestArgs {
    /// Slots per day.
    #[arg(long, default_value_t = 24)]
    slots: usize,
    /// One `hour,dayahead,realtime` file per market state.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    prices: Vec<PathBuf>,
    /// A `day,hour,power_100mw` wind trace.
    #[arg(long)]
    wind: Option<PathBuf>,
    #[arg(long, default_value = "ingested")]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            days: self.days,
            eta: self.eta.clone(),
            pricing: self.pricing.map(|p| match p {
                Pricing::Same => PricingMode::Same,
                Pricing::PerUser => PricingMode::PerUser,
            }),
            market: self.market.map(|m| match m {
                Market::Iid => MarketKind::Iid,
                Market::Markov => MarketKind::Markov,
            }),
            out: None,
        });
        Ok(cfg)
    }
}

/// `--out` is taken relative to the working directory, a config `out`
/// relative to the config file.
fn out_dir(args: &RunArgs, cfg: &ExperimentConfig) -> PathBuf {
    match (&args.out, &cfg.out) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => PathBuf::from("out"),
    }
}

fn sweep(args: &RunArgs, single: bool) -> Result<()> {
    let cfg = args.load()?;
    if single && cfg.etas().len() != 1 {
        return Err(Error::Config(format!(
            "simulate takes exactly one eta, got {}; use sweep for lists",
            cfg.etas().len()
        )));
    }
    let out = out_dir(args, &cfg);
    let exp = Experiment::build(cfg)?;
    let res = run_experiment(&exp, &out)?;
    println!("eta\twelfare\tavg_queue\tmax_queue\tbound");
    for r in &res.rows {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            fmt_num(r.eta),
            fmt_num(r.welfare),
            fmt_num(r.avg_queue),
            fmt_num(r.max_queue),
            fmt_num(r.bound)
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn oracle(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let out = out_dir(args, &cfg);
    let exp = Experiment::build(cfg)?;
    let rep = oracle_report(exp.instance())?;
    fs::create_dir_all(&out)?;
    write_json(&out.join("oracle.json"), &rep)?;
    match &rep.outcome {
        OracleOutcome::Optimal(sol) => {
            println!("value\t{}", fmt_num(sol.value));
            println!("dual_bound\t{}", fmt_num(sol.dual_bound));
            println!("certified\t{}", sol.certified);
            for (n, (y, s)) in sol.qou_duals.iter().zip(&sol.qou_slack).enumerate() {
                println!("qou_{n}\tdual {}\tslack {}", fmt_num(*y), fmt_num(*s));
            }
        }
        OracleOutcome::Infeasible(c) => println!("infeasible\tviolation {}", fmt_num(c.violation)),
    }
    if let Some(p) = &rep.posp {
        println!("posp\t{}", fmt_num(p.posp));
    }
    println!("unconstrained\t{}", fmt_num(rep.unconstrained));
    Ok(())
}

fn validate(args: &RunArgs) -> Result<bool> {
    let cfg = args.load()?;
    let report = validate_config(&cfg);
    print!("{}", to_rounded_json(&report)?);
    Ok(report.ok)
}

fn ingest(args: &IngestArgs) -> Result<()> {
    if args.prices.is_empty() && args.wind.is_none() {
        return Err(Error::Config("nothing to ingest: pass --prices and/or --wind".into()));
    }
    fs::create_dir_all(&args.out)?;
    if !args.prices.is_empty() {
        let p = ingest_price_traces(&args.prices, args.slots)?;
        write_json(&args.out.join("market.json"), &p.process)?;
        println!(
            "market: {} states, beta_max {}, alpha_max {}",
            p.process.states().len(),
            fmt_num(p.beta_max),
            fmt_num(p.alpha_max)
        );
    }
    if let Some(w) = &args.wind {
        let dists = ingest_wind_trace(w, args.slots)?;
        let path: &Path = &args.out.join("renewable.csv");
        write_distribution_dump(BufWriter::new(File::create(path)?), &dists)?;
        let atoms: usize = dists.iter().map(|d| d.len()).sum();
        println!("renewable: {} slots, {atoms} atoms", dists.len());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvariantViolation { .. } | Error::ModelViolation(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => sweep(a, true),
        Command::Sweep(a) => sweep(a, false),
        Command::Oracle(a) => oracle(a),
        Command::Validate(a) => match validate(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Ingest(a) => ingest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
