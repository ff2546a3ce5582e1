//! Command-line interface.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use deconv_core::config::{adder_count, pe_count, peak_throughput, resource_estimate, validate_config};
use deconv_core::layer::validate_layer;
use deconv_core::{AccelConfig, Dims, Fidelity, NetworkDescriptor, SimOptions};

use crate::benchmarks::{builtin_benchmarks, builtin_config, builtin_network, BENCHMARK_NAMES, CONFIG_NAMES};
use crate::formats::{parse_config, parse_network, read_to_string, FormatError};
use crate::report::{write_comparison, write_report, write_sparsity_csv, Format};
use crate::runner::{run_all, schedule_dump, thread_pool, NetworkRun, RunError, RunOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SIM: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "deconvsim", version, about = "Simulate a uniform 2D/3D deconvolution accelerator")]
#[command(after_help = "Exit codes: 0 ok, 1 simulation error, 2 invalid input, 3 oracle mismatch, 4 I/O error.\n\
Environment: DECONVSIM_THREADS caps the number of worker threads.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate every layer of one or more networks and write a report.
    Simulate(SimulateArgs),
    /// Write the per-layer zero-insertion sparsity as a two-column CSV.
    Sparsity(SparsityArgs),
    /// Re-run a simulation for each value of one parameter.
    Sweep(SweepArgs),
    /// Check a configuration (and optionally a network) and print PE and adder counts.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Network JSON file, `builtin:<name>` (dcgan, gp-gan, 3d-gan, v-net) or `builtin:all`.
    #[arg(long)]
    pub network: String,

    /// Config JSON file or `builtin:<name>` (table2-2d, table2-3d, or table2 to match each network).
    #[arg(long, default_value = "builtin:table2")]
    pub config: String,

    /// Override the off-chip bandwidth in GB/s.
    #[arg(long)]
    pub bandwidth_gbps: Option<f64>,

    /// Override the share of nominal bandwidth transfers achieve, in (0, 1].
    #[arg(long)]
    pub derating: Option<f64>,

    /// Override the number of fraction bits of the fixed-point format.
    #[arg(long)]
    pub frac_bits: Option<u32>,

    /// Extra cycles per overlap addition received from a neighbouring PE.
    #[arg(long, default_value_t = 0)]
    pub overlap_add_cycles: u64,

    /// Timing model granularity. `cycle` steps every PE and is only practical for small layers.
    #[arg(long, value_enum, default_value_t = FidelityArg::Tile)]
    pub fidelity: FidelityArg,

    /// Seed for the random operands used by --check-oracle and --trace.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Simulate on seeded random data and compare every output with the scatter-add oracle.
    #[arg(long)]
    pub check_oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FidelityArg {
    Tile,
    Cycle,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write a per-cycle PE trace to this file. Implies `--fidelity cycle`.
    #[arg(long)]
    pub trace: Option<PathBuf>,

    /// Write the tile schedule of every layer as JSON to this file.
    #[arg(long)]
    pub dump_schedule: Option<PathBuf>,

    /// Tiles per layer whose PE assignments are included in the schedule dump.
    #[arg(long, default_value_t = 4)]
    pub dump_mapped_tiles: usize,
}

#[derive(Args, Debug)]
pub struct SparsityArgs {
    /// Network JSON file, `builtin:<name>` or `builtin:all`.
    #[arg(long)]
    pub network: String,

    /// Output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "t_m")]
    TM,
    #[value(name = "t_n")]
    TN,
    #[value(name = "t_z")]
    TZ,
    #[value(name = "t_r")]
    TR,
    #[value(name = "t_c")]
    TC,
    Bandwidth,
    Derating,
    #[value(name = "frac_bits")]
    FracBits,
    #[value(name = "clock_mhz")]
    ClockMhz,
    #[value(name = "overlap_add_cycles")]
    OverlapAddCycles,
    #[value(name = "input_buffer")]
    InputBuffer,
    #[value(name = "weight_buffer")]
    WeightBuffer,
    #[value(name = "output_buffer")]
    OutputBuffer,
}

impl SweepParam {
    fn name(self) -> String {
        self.to_possible_value().expect("named").get_name().to_string()
    }

    /// Applies `value` to a copy of the configuration and options.
    fn apply(self, value: &str, cfg: &mut AccelConfig, opts: &mut RunOptions) -> Result<(), String> {
        let int = || value.parse::<u64>().map_err(|e| format!("{}: {value:?}: {e}", self.name()));
        let real = || value.parse::<f64>().map_err(|e| format!("{}: {value:?}: {e}", self.name()));
        match self {
            SweepParam::TM => cfg.t_m = int()? as usize,
            SweepParam::TN => cfg.t_n = int()? as usize,
            SweepParam::TZ => cfg.t_z = int()? as usize,
            SweepParam::TR => cfg.t_r = int()? as usize,
            SweepParam::TC => cfg.t_c = int()? as usize,
            SweepParam::Bandwidth => cfg.ddr_bandwidth_gbps = real()?,
            SweepParam::Derating => cfg.derating = real()?,
            SweepParam::FracBits => cfg.frac_bits = int()? as u32,
            SweepParam::ClockMhz => cfg.clock_mhz = real()?,
            SweepParam::OverlapAddCycles => opts.sim.overlap_add_cycles = int()?,
            SweepParam::InputBuffer => cfg.buffers.input = int()?,
            SweepParam::WeightBuffer => cfg.buffers.weight = int()?,
            SweepParam::OutputBuffer => cfg.buffers.output = int()?,
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, value_enum)]
    pub param: SweepParam,

    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub values: Vec<String>,

    /// Directory receiving one report per value and `comparison.csv`.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Config JSON file or `builtin:<name>`.
    #[arg(long)]
    pub config: String,

    /// Also check every layer of this network against the configuration.
    #[arg(long)]
    pub network: Option<String>,
}

/// A failure that maps to an exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Self {
            code: if e.is_io() { EXIT_IO } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Config(_) => EXIT_INVALID,
            RunError::Sim { .. } => EXIT_SIM,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

const BUILTIN: &str = "builtin:";

pub fn load_networks(source: &str) -> Result<Vec<NetworkDescriptor>, Failure> {
    if let Some(name) = source.strip_prefix(BUILTIN) {
        if name == "all" {
            return Ok(builtin_benchmarks());
        }
        return builtin_network(name).map(|n| vec![n]).ok_or_else(|| {
            Failure::invalid(format!(
                "unknown builtin network {name:?}; expected one of {}, all",
                BENCHMARK_NAMES.join(", ")
            ))
        });
    }
    let text = read_to_string(Path::new(source))?;
    Ok(vec![parse_network(&text).map_err(|e| Failure::invalid(format!("{source}: {e}")))?])
}

/// Resolves the configuration source for a network of `dims`.
pub fn load_config(source: &str, dims: Dims) -> Result<AccelConfig, Failure> {
    if let Some(name) = source.strip_prefix(BUILTIN) {
        return builtin_config(name, dims).ok_or_else(|| {
            Failure::invalid(format!(
                "unknown builtin config {name:?}; expected one of {}",
                CONFIG_NAMES.join(", ")
            ))
        });
    }
    let text = read_to_string(Path::new(source))?;
    parse_config(&text).map_err(|e| Failure::invalid(format!("{source}: {e}")))
}

impl ModelArgs {
    fn options(&self, trace: bool) -> RunOptions {
        RunOptions {
            seed: self.seed,
            check_oracle: self.check_oracle,
            sim: SimOptions {
                fidelity: match (self.fidelity, trace) {
                    (FidelityArg::Cycle, _) | (_, true) => Fidelity::Cycle,
                    (FidelityArg::Tile, false) => Fidelity::Tile,
                },
                overlap_add_cycles: self.overlap_add_cycles,
                trace,
            },
        }
    }

    fn configure(&self, mut cfg: AccelConfig) -> AccelConfig {
        if let Some(b) = self.bandwidth_gbps {
            cfg.ddr_bandwidth_gbps = b;
        }
        if let Some(d) = self.derating {
            cfg.derating = d;
        }
        if let Some(f) = self.frac_bits {
            cfg.frac_bits = f;
        }
        cfg
    }

    fn jobs(&self) -> Result<Vec<(NetworkDescriptor, AccelConfig)>, Failure> {
        load_networks(&self.network)?
            .into_iter()
            .map(|n| {
                let cfg = self.configure(load_config(&self.config, n.dims)?);
                Ok((n, cfg))
            })
            .collect()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| w.flush()).map_err(|e| Failure::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}

fn collect(results: Vec<Result<NetworkRun, RunError>>) -> Result<Vec<NetworkRun>, Failure> {
    results.into_iter().map(|r| r.map_err(Failure::from)).collect()
}

fn oracle_verdict(runs: &[NetworkRun]) -> Result<(), Failure> {
    let bad: Vec<String> = runs
        .iter()
        .flat_map(|r| {
            r.oracle
                .iter()
                .filter(|c| c.mismatches > 0)
                .map(move |c| format!("{}/{}: {} of {} elements differ", r.network.name, c.layer, c.mismatches, c.elements))
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_ORACLE,
            message: format!("oracle mismatch:\n  {}", bad.join("\n  ")),
        })
    }
}

fn write_trace(path: &Path, runs: &[NetworkRun]) -> Result<(), Failure> {
    emit(Some(path), |w| {
        writeln!(w, "# cycle, pe(z,r,c), op, operands")?;
        for run in runs {
            for (layer, events) in &run.traces {
                writeln!(w, "# {}/{}", run.network.name, layer)?;
                for e in events {
                    writeln!(w, "{e}")?;
                }
            }
        }
        Ok(())
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let jobs = args.model.jobs()?;
    let opts = args.model.options(args.trace.is_some());
    if let Some(path) = &args.dump_schedule {
        let dumps: Vec<_> = jobs
            .iter()
            .flat_map(|(n, c)| schedule_dump(n, c, args.dump_mapped_tiles))
            .collect();
        emit(Some(path), |w| {
            serde_json::to_writer_pretty(&mut *w, &dumps)?;
            writeln!(w)
        })?;
    }
    let runs = collect(run_all(&thread_pool(), &jobs, &opts))?;
    emit(args.out.as_deref(), |w| write_report(&runs, args.format, w))?;
    if let Some(path) = &args.trace {
        write_trace(path, &runs)?;
    }
    oracle_verdict(&runs)
}

pub fn cmd_sparsity(args: &SparsityArgs) -> Result<(), Failure> {
    let nets = load_networks(&args.network)?;
    emit(args.out.as_deref(), |w| write_sparsity_csv(&nets, w).map_err(io::Error::other))
}

/// File stem of the report for one sweep value.
pub fn sweep_report_name(param: &str, value: &str, format: Format) -> String {
    format!("{param}-{value}.{}", format.extension())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let values: Vec<&str> = args.values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::invalid("sweep needs at least one value (--values a,b,...)"));
    }
    let param = args.param.name();
    let base = args.model.jobs()?;
    let base_opts = args.model.options(false);
    let mut per_value = Vec::with_capacity(values.len());
    for v in &values {
        let mut opts = base_opts;
        let mut jobs = base.clone();
        for (_, cfg) in &mut jobs {
            args.param.apply(v, cfg, &mut opts).map_err(Failure::invalid)?;
        }
        per_value.push((v.to_string(), jobs, opts));
    }
    let pool = thread_pool();
    let results: Vec<Vec<Result<NetworkRun, RunError>>> = pool.install(|| {
        use rayon::prelude::*;
        per_value
            .par_iter()
            .map(|(_, jobs, opts)| run_all(&pool, jobs, opts))
            .collect()
    });
    let mut rows = Vec::with_capacity(values.len());
    for ((value, _, _), res) in per_value.into_iter().zip(results) {
        rows.push((value, collect(res)?));
    }
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(&args.out, e))?;
    for (value, runs) in &rows {
        let path = args.out.join(sweep_report_name(&param, value, args.format));
        emit(Some(&path), |w| write_report(runs, args.format, w))?;
    }
    let path = args.out.join("comparison.csv");
    emit(Some(&path), |w| write_comparison(&param, &rows, w).map_err(io::Error::other))?;
    let all: Vec<NetworkRun> = rows.into_iter().flat_map(|(_, r)| r).collect();
    oracle_verdict(&all)
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let nets = match &args.network {
        Some(src) => load_networks(src)?,
        None => Vec::new(),
    };
    let dims = nets.first().map_or(Dims::Three, |n| n.dims);
    let cfg = load_config(&args.config, dims)?;
    let adders = match adder_count(&cfg) {
        Ok(n) => n.to_string(),
        Err(_) => "n/a".into(),
    };
    let io_err = |e| Failure::io(Path::new("<stdout>"), e);
    writeln!(out, "PEs: {}, adders: {adders}", pe_count(&cfg)).map_err(io_err)?;
    writeln!(out, "peak: {:.1} GOP/s", peak_throughput(&cfg)).map_err(io_err)?;
    let est = resource_estimate(&cfg, 3, 2);
    writeln!(
        out,
        "resources (K=3, S=2): {} multipliers, {} adders, {} buffer bits, {} FIFO bits",
        est.multipliers, est.adders, est.buffer_bits, est.fifo_bits
    )
    .map_err(io_err)?;

    let mut problems: Vec<String> = validate_config(&cfg, None).iter().map(|v| v.to_string()).collect();
    for net in &nets {
        let cfg = load_config(&args.config, net.dims)?;
        problems.extend(net.validate().iter().map(|v| format!("{}: {v}", net.name)));
        for layer in &net.layers {
            problems.extend(validate_layer(layer).iter().map(|v| format!("{}: {v}", net.name)));
            if layer.is_valid() && validate_config(&cfg, None).is_empty() {
                problems.extend(
                    validate_config(&cfg, Some(layer))
                        .iter()
                        .map(|v| format!("{}: {v}", net.name)),
                );
            }
        }
    }
    problems.dedup();
    if problems.is_empty() {
        writeln!(out, "ok").map_err(io_err)?;
        Ok(())
    } else {
        Err(Failure::invalid(format!(
            "{} violation(s):\n  {}",
            problems.len(),
            problems.join("\n  ")
        )))
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sparsity(a) => cmd_sparsity(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a, &mut io::stdout().lock()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("deconvsim: {}", f.message);
            f.code
        }
    }
}
