mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ccqkan::data::{bundled_digits, load_digits, synthetic_dataset, Digits};
use ccqkan::experiments::{
    read_results_csv, run_cell, run_grid, run_mnist_binary, run_mnist_ova, summarize,
    write_accuracy_csv, write_curves_csv, write_failures_csv, write_per_class_csv,
    write_results_csv, MnistReport, MnistSpec, SummaryTable,
};
use ccqkan::{resources, Error, ExecutionMode, NetworkConfig, ResourceReport, REFERENCE_CONFIGS};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{parse_range, GridFile, MnistFile, StatsFile, TrainFile};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }

    fn config(e: Error) -> Self {
        CliError::Config(e.to_string())
    }

    /// Classifies an error raised while loading inputs or running experiments.
    fn run(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Parse { .. }
            | Error::Degenerate(_)
            | Error::IncompletePairing(_) => CliError::Data(e.to_string()),
            Error::InvalidInput(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qkan",
    version,
    about = "Chebyshev quantum KAN simulator and experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print qubit and circuit-execution counts.
    Resources {
        #[arg(long, requires = "d")]
        n: Option<usize>,
        #[arg(long, requires = "n")]
        d: Option<usize>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train one configuration on the synthetic task.
    Train(RunArgs),
    /// Run a configuration x condition x model x seed grid.
    Grid(RunArgs),
    /// Summarize a results CSV: means, curves and paired tests.
    Stats {
        #[command(flatten)]
        run: RunArgs,
        /// Results CSV to summarize (overrides `results` in the config).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Digits 0 vs 1 classification.
    MnistBinary(RunArgs),
    /// Ten-class one-vs-all digits classification.
    MnistOva(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Seed range `a..b` (train/grid: run seeds, stats: test seeds).
    #[arg(long, value_parser = parse_range)]
    seed_range: Option<std::ops::Range<u64>>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    config_hash: String,
    config: &'a C,
    build: String,
    wall_time_seconds: f64,
    artifacts: Vec<String>,
}

fn build_id() -> String {
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    format!(
        "{} {} ({profile})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    )
}

/// SHA-256 of the canonical JSON of `config`, ignoring `workers`.
fn config_hash<C: Serialize>(command: &str, config: &C) -> Result<String, CliError> {
    let mut value = serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("workers");
    }
    let canonical =
        serde_json::to_string(&(command, value)).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> ccqkan::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        fill(&mut buf).map_err(CliError::run)?;
        let path = self.dir.join(name);
        fs::write(&path, buf)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    fn finish<C: Serialize>(
        mut self,
        command: &str,
        config: &C,
        start: Instant,
    ) -> Result<(), CliError> {
        let manifest = Manifest {
            command,
            config_hash: config_hash(command, config)?,
            config,
            build: build_id(),
            wall_time_seconds: start.elapsed().as_secs_f64(),
            artifacts: std::mem::take(&mut self.written),
        };
        self.json("manifest.json", &manifest)?;
        println!(
            "wrote {} artifacts to {}",
            manifest.artifacts.len() + 1,
            self.dir.display()
        );
        Ok(())
    }
}

fn resource_rows(n: Option<usize>, d: Option<usize>) -> Result<Vec<ResourceReport>, CliError> {
    match (n, d) {
        (Some(n), Some(d)) => Ok(vec![resources(n, d).map_err(CliError::config)?]),
        _ => REFERENCE_CONFIGS
            .iter()
            .map(|&(n, d)| resources(n, d).map_err(CliError::config))
            .collect(),
    }
}

fn cmd_resources(n: Option<usize>, d: Option<usize>, csv: Option<&Path>) -> Result<(), CliError> {
    let rows = resource_rows(n, d)?;
    let mut stdout = std::io::stdout().lock();
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    writeln!(
        stdout,
        "{:<9} {:>2} {:>5} {:>5} {:>5} {:>5} {:>5} {:>5} {:>3}",
        "network", "d", "Q_par", "C_par", "Q_seq", "C_seq", "Q_red", "C_red", "dQ"
    )
    .map_err(io)?;
    for r in &rows {
        writeln!(
            stdout,
            "{:<9} {:>2} {:>5} {:>5} {:>5} {:>5} {:>5} {:>5} {:>3}",
            format!("[{0},{0},1]", r.n),
            r.degree,
            r.q_par,
            r.c_par,
            r.q_seq,
            r.c_seq,
            r.q_red,
            r.c_red,
            r.delta_q
        )
        .map_err(io)?;
    }
    if let Some(path) = csv {
        let mut text = String::from("n,d,q_par,c_par,q_seq,c_seq,q_red,c_red,delta_q\n");
        for r in &rows {
            text += &format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.n, r.degree, r.q_par, r.c_par, r.q_seq, r.c_seq, r.q_red, r.c_red, r.delta_q
            );
        }
        fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let file: TrainFile = config::load(args.config.as_deref())?;
    let seeds = args.seed_range.clone().unwrap_or(file.seed..file.seed + 1);
    NetworkConfig::new(file.n, file.degree, ExecutionMode::Sequential).map_err(CliError::config)?;
    file.condition.validate().map_err(CliError::config)?;
    file.train.validate().map_err(CliError::config)?;
    let data =
        synthetic_dataset(file.n, file.n_points, file.data_seed).map_err(CliError::config)?;

    let mut records = Vec::new();
    for seed in seeds.clone() {
        records.extend(run_cell(
            &data,
            file.n,
            file.degree,
            seed,
            &[file.condition],
            &[file.model],
            &file.train,
        ));
    }
    for r in &records {
        match (&r.failure, r.final_loss()) {
            (None, Some(loss)) => println!("seed {}: final loss {loss}", r.seed),
            (failure, _) => println!(
                "seed {}: failed: {}",
                r.seed,
                failure.as_deref().unwrap_or("no losses")
            ),
        }
    }
    let mut out = Output::new(&args.out)?;
    out.write("results.csv", |w| write_results_csv(&records, w))?;
    out.write("failures.csv", |w| write_failures_csv(&records, w))?;
    let resolved = TrainFile {
        seed: seeds.start,
        ..file
    };
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        file: &'a TrainFile,
        seeds: String,
    }
    out.finish(
        "train",
        &Resolved {
            file: &resolved,
            seeds: format!("{}..{}", seeds.start, seeds.end),
        },
        start,
    )
}

fn cmd_grid(args: &RunArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut file: GridFile = config::load(args.config.as_deref())?;
    if let Some(r) = &args.seed_range {
        file.seeds = format!("{}..{}", r.start, r.end);
    }
    if let Some(w) = args.workers {
        file.workers = w;
    }
    let spec = file.to_spec()?;
    spec.validate().map_err(CliError::config)?;
    let records = run_grid(&spec).map_err(CliError::run)?;
    let failed = records.iter().filter(|r| r.failure.is_some()).count();
    println!("{} runs, {failed} failed", records.len());
    let mut out = Output::new(&args.out)?;
    out.write("results.csv", |w| write_results_csv(&records, w))?;
    out.write("failures.csv", |w| write_failures_csv(&records, w))?;
    out.finish("grid", &file, start)
}

fn write_summary(out: &mut Output, table: &SummaryTable) -> Result<(), CliError> {
    out.json("summary.json", table)?;
    out.write("curves.csv", |w| write_curves_csv(table, w))?;
    out.write("significance.csv", |w| {
        writeln!(
            w,
            "pair,condition,p<0.001,p<0.01,p<0.05,p>=0.05,degenerate,lower_loss"
        )?;
        for c in &table.significance_counts {
            writeln!(
                w,
                "{},\"{}\",{},{},{},{},{},{}",
                c.pair,
                c.condition,
                c.p001,
                c.p01,
                c.p05,
                c.not_significant,
                c.degenerate,
                c.lower_loss
            )?;
        }
        Ok(())
    })
}

fn cmd_stats(args: &RunArgs, results: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let mut file: StatsFile = config::load(args.config.as_deref())?;
    if let Some(p) = results {
        file.results = Some(p.to_path_buf());
    }
    if let Some(r) = &args.seed_range {
        file.test_seeds = format!("{}..{}", r.start, r.end);
    }
    let path = file.results.clone().ok_or_else(|| {
        CliError::Config("no results CSV given (use --results or `results` in the config)".into())
    })?;
    let curve = parse_range(&file.curve_seeds)
        .map_err(|e| CliError::Config(format!("curve_seeds: {e}")))?;
    let test =
        parse_range(&file.test_seeds).map_err(|e| CliError::Config(format!("test_seeds: {e}")))?;
    let reader = fs::File::open(&path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let records = read_results_csv(std::io::BufReader::new(reader)).map_err(CliError::run)?;
    let table = summarize(&records, curve, test).map_err(CliError::run)?;
    for c in &table.significance_counts {
        println!(
            "{:<22} {:<26} ***:{} **:{} *:{} n.s.:{} degenerate:{} lower: {}",
            c.pair,
            c.condition,
            c.p001,
            c.p01,
            c.p05,
            c.not_significant,
            c.degenerate,
            c.lower_loss
        );
    }
    let mut out = Output::new(&args.out)?;
    write_summary(&mut out, &table)?;
    out.finish("stats", &file, start)
}

fn load_digit_data(file: &MnistFile) -> Result<Digits, CliError> {
    match &file.digits {
        Some(path) => {
            load_digits(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
        None => bundled_digits().map_err(CliError::run),
    }
}

fn write_mnist(out: &mut Output, report: &MnistReport, per_class: bool) -> Result<(), CliError> {
    out.write("results.csv", |w| write_results_csv(&report.records, w))?;
    out.write("accuracy.csv", |w| write_accuracy_csv(report, w))?;
    if per_class {
        out.write("per_class.csv", |w| write_per_class_csv(report, w))?;
    }
    out.json("report.json", report)
}

fn cmd_mnist(args: &RunArgs, ova: bool) -> Result<(), CliError> {
    let start = Instant::now();
    if args.seed_range.is_some() {
        return Err(CliError::Config(
            "--seed-range applies to train, grid and stats".into(),
        ));
    }
    let mut file: MnistFile = config::load(args.config.as_deref())?;
    if let Some(w) = args.workers {
        file.workers = w;
    }
    let base = if ova {
        MnistSpec::ova_default()
    } else {
        MnistSpec::binary_default()
    };
    let spec = file.to_spec(base);
    let digits = load_digit_data(&file)?;
    let report = if ova {
        run_mnist_ova(&spec, &digits)
    } else {
        run_mnist_binary(&spec, &digits)
    }
    .map_err(CliError::run)?;
    for a in &report.aggregates {
        println!(
            "n={} {:<8} test accuracy {:.4} ± {:.4}  final loss {:.4} ± {:.4}",
            a.n,
            a.model,
            a.test_accuracy_mean,
            a.test_accuracy_std,
            a.final_loss_mean,
            a.final_loss_std
        );
    }
    let mut out = Output::new(&args.out)?;
    write_mnist(&mut out, &report, ova)?;
    let command = if ova { "mnist-ova" } else { "mnist-binary" };
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        file: &'a MnistFile,
        degree_resolved: usize,
        models_resolved: &'a [ccqkan::ModelVariant],
    }
    out.finish(
        command,
        &Resolved {
            file: &file,
            degree_resolved: spec.degree,
            models_resolved: &spec.models,
        },
        start,
    )
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Resources { n, d, csv } => cmd_resources(*n, *d, csv.as_deref()),
        Command::Train(args) => cmd_train(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Stats { run, results } => cmd_stats(run, results.as_deref()),
        Command::MnistBinary(args) => cmd_mnist(args, false),
        Command::MnistOva(args) => cmd_mnist(args, true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
