//! `rankaudit` — outcome tests of ranker bias from ranked-list logs.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rankaudit::rationalize;
use rankaudit::simulate::{
    inframarginality_experiment, run_size_power, simulate_dataset, HarnessTest, OutcomeNoise,
    PowerRow, QualityLaw, SimConfig,
};

use rankaudit_cli::audit::{run_audit, write_artifacts, AuditConfig, ConditioningChoice, JointChoice};
use rankaudit_cli::calibrate;
use rankaudit_cli::ingest::{self, Format};

#[derive(Parser)]
#[command(
    name = "rankaudit",
    version,
    about = "Tests whether a ranker is biased against a group, from ranked-list logs",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the adjacent-rank moments and test them pointwise and jointly.
    Audit(AuditArgs),
    /// Generate a synthetic ranked-list dataset.
    Simulate(SimulateArgs),
    /// Monte Carlo size/power study over a grid of penalties.
    Power(PowerArgs),
    /// Check the inequalities on a finite-support distribution and build the
    /// rationalizing information structure when they hold.
    Rationalize(RationalizeArgs),
    /// Binned calibration of a score column against outcomes, by group.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct AuditArgs {
    /// Input path, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Test level for joint critical values.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Position multiplier: outcomes at rank r are treated as carrying a
    /// factor (1+gamma)^r, which the comparison removes.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// NDCG-normalize each query's outcomes before testing.
    #[arg(long, default_value_t = false)]
    normalize: bool,
    #[arg(long, value_enum, default_value_t = ConditioningChoice::Pair)]
    conditioning: ConditioningChoice,
    /// Moments matching fewer queries are excluded from joint tests.
    #[arg(long = "min-n", default_value_t = 30)]
    min_n: usize,
    #[arg(long, value_enum, default_value_t = JointChoice::Lf)]
    joint: JointChoice,
    #[arg(long = "mc-reps", default_value_t = 10_000)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature names to stratify on (repeat or comma-separate).
    #[arg(long = "stratify-by", value_delimiter = ',')]
    stratify_by: Vec<String>,
    /// Output directory for report.json, moments.csv, moments.svg.
    #[arg(long, default_value = "audit_out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Candidates per query.
    #[arg(long, default_value_t = 11)]
    j: usize,
    /// Number of queries.
    #[arg(long, default_value_t = 1000)]
    q: usize,
    /// Probability a candidate belongs to group 1.
    #[arg(long = "p-group", default_value_t = 0.5)]
    p_group: f64,
    /// `uniform01` or `normal:MEAN,SD`.
    #[arg(long, default_value = "uniform01", value_parser = parse_quality)]
    quality: QualityLaw,
    /// `bernoulli` or `normal:SD`.
    #[arg(long, default_value = "bernoulli", value_parser = parse_noise)]
    noise: OutcomeNoise,
    /// Ranker's penalty on group-1 candidates.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Display effect applied to realized outcomes ((1+gamma)^rank).
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the JSONL dataset, or `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct PowerArgs {
    /// Comma-separated penalty grid, e.g. `0,0.2,0.5`.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.5")]
    tau: Vec<f64>,
    #[arg(long, default_value_t = 11)]
    j: usize,
    #[arg(long, default_value_t = 1000)]
    q: usize,
    #[arg(long = "p-group", default_value_t = 0.5)]
    p_group: f64,
    #[arg(long, default_value = "uniform01", value_parser = parse_quality)]
    quality: QualityLaw,
    #[arg(long, default_value = "bernoulli", value_parser = parse_noise)]
    noise: OutcomeNoise,
    /// Display effect applied by the simulator.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Position multiplier handed to the audit (defaults to --gamma).
    #[arg(long = "audit-gamma")]
    audit_gamma: Option<f64>,
    /// Replications per grid point.
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "mc-reps", default_value_t = 2_000)]
    mc_reps: usize,
    #[arg(long = "min-n", default_value_t = 30)]
    min_n: usize,
    /// Run the fixed-penalty list-length experiment over this comma-separated
    /// J grid instead of the tau grid.
    #[arg(long = "j-grid", value_delimiter = ',')]
    j_grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional output path for the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RationalizeArgs {
    /// Distribution file (`probability | groups | outcomes` rows), or `-`.
    #[arg(long, default_value = "-")]
    input: String,
    /// Certificate output path, or `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV with `group`, `score` and `outcome` columns.
    #[arg(long)]
    input: String,
    /// Equal-count bins per group.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Output directory for calibration.csv and calibration.svg.
    #[arg(long, default_value = "calibration_out")]
    out: PathBuf,
}

fn parse_quality(s: &str) -> Result<QualityLaw, String> {
    if s.eq_ignore_ascii_case("uniform01") {
        return Ok(QualityLaw::Uniform01);
    }
    if let Some(rest) = s.strip_prefix("normal:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() == 2 {
            let mean = parts[0].parse().map_err(|e| format!("bad mean: {e}"))?;
            let sd = parts[1].parse().map_err(|e| format!("bad sd: {e}"))?;
            return Ok(QualityLaw::Normal { mean, sd });
        }
    }
    Err(format!("expected `uniform01` or `normal:MEAN,SD`, got {s:?}"))
}

fn parse_noise(s: &str) -> Result<OutcomeNoise, String> {
    if s.eq_ignore_ascii_case("bernoulli") {
        return Ok(OutcomeNoise::Bernoulli);
    }
    if let Some(rest) = s.strip_prefix("normal:") {
        let sd = rest.parse().map_err(|e| format!("bad sd: {e}"))?;
        return Ok(OutcomeNoise::AdditiveNormal { sd });
    }
    Err(format!("expected `bernoulli` or `normal:SD`, got {s:?}"))
}

fn open_input(path: &str) -> Result<Box<dyn BufRead>> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let file =
            File::open(path).with_context(|| format!("opening input file {path}"))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn open_output(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout())))
    } else {
        let file =
            File::create(path).with_context(|| format!("creating output file {path}"))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let reader = open_input(&args.input)?;
    let (dataset, warnings) = ingest::ingest(reader, args.format)?;
    let config = AuditConfig {
        input: args.input,
        format: args.format,
        alpha: args.alpha,
        gamma: args.gamma,
        normalize: args.normalize,
        conditioning: args.conditioning,
        min_n: args.min_n,
        joint: args.joint,
        mc_reps: args.mc_reps,
        seed: args.seed,
        stratify_by: args.stratify_by,
        out_dir: args.out.clone(),
    };
    let artifacts = run_audit(&config, &dataset, warnings)?;
    write_artifacts(&args.out, &artifacts)?;

    for w in &artifacts.report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "audited {} queries, {} moments",
        artifacts.report.dataset.queries,
        artifacts.report.pointwise.len()
    );
    for j in &artifacts.report.joint {
        println!(
            "joint [{}] k={} T={:.4} p={:.4}{}",
            j.subset,
            j.k,
            j.t_stat,
            j.p_value,
            if j.reject { " (reject)" } else { "" }
        );
    }
    println!("wrote {}", args.out.join("report.json").display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let config = SimConfig {
        candidates_per_query: args.j,
        queries: args.q,
        group1_probability: args.p_group,
        quality: args.quality,
        tau: args.tau,
        gamma: args.gamma,
        noise: args.noise,
        seed: args.seed,
    };
    let dataset = simulate_dataset(&config)?;
    let mut writer = open_output(&args.out)?;
    ingest::emit_jsonl(&dataset, &mut writer)?;
    writer.flush()?;
    Ok(())
}

fn power_table(rows: &[PowerRow]) -> String {
    let mut out = String::from("tau,j,q,reps,rejections,rejection_rate,mc_se\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.config.tau,
            r.config.candidates_per_query,
            r.config.queries,
            r.reps,
            r.rejections,
            r.rejection_rate,
            r.mc_se
        ));
    }
    out
}

fn cmd_power(args: PowerArgs) -> Result<()> {
    let test = HarnessTest {
        alpha: args.alpha,
        mc_reps: args.mc_reps,
        min_n: args.min_n,
        display_gamma: args.audit_gamma.unwrap_or(args.gamma),
    };
    let rows = if let Some(j_grid) = &args.j_grid {
        let tau = match args.tau.as_slice() {
            [tau] => *tau,
            _ => bail!("--j-grid expects a single --tau value"),
        };
        inframarginality_experiment(j_grid, tau, args.q, test, args.reps, args.seed)?
    } else {
        let grid: Vec<SimConfig> = args
            .tau
            .iter()
            .map(|&tau| SimConfig {
                candidates_per_query: args.j,
                queries: args.q,
                group1_probability: args.p_group,
                quality: args.quality,
                tau,
                gamma: args.gamma,
                noise: args.noise,
                seed: 0,
            })
            .collect();
        run_size_power(&grid, test, args.reps, args.seed)?
    };
    let table = power_table(&rows);
    print!("{table}");
    if let Some(path) = &args.out {
        fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_rationalize(args: RationalizeArgs) -> Result<()> {
    let mut text = String::new();
    open_input(&args.input)?.read_to_string(&mut text)?;
    let dist = rationalize::parse_distribution(&text)?;
    let certificate = rationalize::construct_information_structure(&dist);
    let rendered = rationalize::render_certificate(&certificate);
    let mut writer = open_output(&args.out)?;
    writer.write_all(rendered.as_bytes())?;
    writer.flush()?;
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let reader = open_input(&args.input)?;
    let (rows, warnings) = calibrate::read_score_csv(reader)?;
    let (bins, bin_warnings) = calibrate::binned_calibration(&rows, args.bins);
    for w in warnings.iter().chain(&bin_warnings) {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    fs::write(args.out.join("calibration.csv"), calibrate::calibration_csv(&bins))?;
    fs::write(args.out.join("calibration.svg"), calibrate::calibration_svg(&bins))?;
    println!(
        "wrote {} bins to {}",
        bins.len(),
        args.out.join("calibration.csv").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit(args) => cmd_audit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Power(args) => cmd_power(args),
        Command::Rationalize(args) => cmd_rationalize(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
