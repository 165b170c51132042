use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use devstone_bench::config::{DEFAULT_MEM_CAP, DEFAULT_TIME_CAP, DEFAULT_TRIALS};
use devstone_bench::verify::DEFAULT_EVENT_LIMIT;
use devstone_bench::{
    emit, report, runner, sweep, Format, Profile, RunConfig, RunResult, Runner, SweepConfig,
    VerifyOptions,
};
use devstone_core::{BenchmarkSpec, Family};

#[derive(Parser)]
#[command(name = "devstone", version, about = "DEVStone benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark cell.
    Run(RunArgs),
    /// Run a width x depth grid from a profile or config file.
    Sweep(SweepArgs),
    /// Check simulated counters against the analytic predictions.
    Verify(VerifyArgs),
    /// Print the model topology outline.
    Dump(DumpArgs),
    #[command(hide = true)]
    Trial(TrialArgs),
    #[command(hide = true, name = "alloc-probe")]
    AllocProbe {
        #[arg(long)]
        mib: u64,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    depth: u32,
    /// CPU seconds burned per internal transition.
    #[arg(long, default_value_t = 0.0)]
    delta_int: f64,
    /// CPU seconds burned per external transition.
    #[arg(long, default_value_t = 0.0)]
    delta_ext: f64,
    /// Events injected at the root input.
    #[arg(long, default_value_t = 1)]
    events: u32,
}

impl ModelArgs {
    fn spec(&self) -> BenchmarkSpec {
        BenchmarkSpec::new(self.family, self.width, self.depth)
            .with_delays(self.delta_int, self.delta_ext)
            .with_events(self.events)
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputArgs {
    fn write(&self, results: &[RunResult]) -> Result<()> {
        match &self.out {
            Some(path) => emit(results, self.format, path)?,
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                report::write(results, self.format, &mut lock)?;
                lock.flush()?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: u32,
    /// Seconds.
    #[arg(long, default_value_t = DEFAULT_TIME_CAP)]
    time_cap: f64,
    /// Bytes.
    #[arg(long, default_value_t = DEFAULT_MEM_CAP)]
    mem_cap: u64,
    /// Run trials inside this process (memory figures become unreliable).
    #[arg(long)]
    in_process: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep file; applied on top of --profile when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled grid: paper or desk. Defaults to paper without --config.
    #[arg(long)]
    profile: Option<Profile>,
    /// Restrict to these families (comma separated).
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<Family>>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    time_cap: Option<f64>,
    #[arg(long)]
    mem_cap: Option<u64>,
    #[arg(long)]
    delta_int: Option<f64>,
    #[arg(long)]
    delta_ext: Option<f64>,
    #[arg(long)]
    events: Option<u32>,
    #[arg(long)]
    in_process: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Largest width, for every family (default 10 for LI/HI/HO, 6 otherwise).
    #[arg(long)]
    max_width: Option<u32>,
    /// Largest depth, for every family (same defaults as --max-width).
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long, value_delimiter = ',', default_value = "LI,HI,HO,HOmod,HOmem")]
    families: Vec<Family>,
    #[arg(long, default_value_t = 1)]
    events: u32,
    /// Skip cells predicted to carry more events than this.
    #[arg(long, default_value_t = DEFAULT_EVENT_LIMIT)]
    max_events: u128,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    depth: u32,
}

#[derive(Args)]
struct TrialArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    time_cap: f64,
    #[arg(long)]
    mem_cap: u64,
    #[arg(long, default_value_t = 0.0)]
    builder_sleep: f64,
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = RunConfig {
        spec: args.model.spec(),
        trials: args.trials,
        time_cap: args.time_cap,
        mem_cap: args.mem_cap,
        isolate: !args.in_process,
    };
    cfg.validate()?;
    let runner = Runner::current().context("cannot locate the devstone executable")?;
    let result = runner.run_benchmark(&cfg)?;
    if let Some(e) = &result.error {
        eprintln!("error: {e}");
    }
    args.output.write(std::slice::from_ref(&result))?;
    Ok(ExitCode::SUCCESS)
}

fn load_sweep(args: &SweepArgs) -> Result<SweepConfig> {
    let mut cfg = match (&args.config, args.profile) {
        (None, p) => SweepConfig::profile(p.unwrap_or(Profile::Paper)),
        (Some(path), p) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            match p {
                Some(p) => SweepConfig::profile(p).overlay(&text)?,
                None => SweepConfig::parse(&text)?,
            }
        }
    };
    if let Some(fams) = &args.families {
        cfg.retain_families(fams);
    }
    cfg.isolate = !args.in_process;
    cfg.for_each_family(|fs| {
        if let Some(v) = args.trials {
            fs.trials = v;
        }
        if let Some(v) = args.time_cap {
            fs.time_cap = v;
        }
        if let Some(v) = args.mem_cap {
            fs.mem_cap = v;
        }
        if let Some(v) = args.delta_int {
            fs.int_delay = v;
        }
        if let Some(v) = args.delta_ext {
            fs.ext_delay = v;
        }
        if let Some(v) = args.events {
            fs.events = v;
        }
    })?;
    if cfg.cell_count() == 0 {
        bail!("the sweep has no cells");
    }
    Ok(cfg)
}

fn run_sweep(args: SweepArgs) -> Result<ExitCode> {
    let cfg = load_sweep(&args)?;
    let runner = Runner::current().context("cannot locate the devstone executable")?;
    eprintln!("sweep: {} cells", cfg.cell_count());
    let results = sweep::sweep(&cfg, &runner, |partial| {
        if let Some(path) = &args.output.out {
            if let Err(e) = emit(partial, args.output.format, path) {
                eprintln!("warning: cannot flush partial results: {e}");
            }
        }
    });
    args.output.write(&results)?;
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> Result<ExitCode> {
    let opts = VerifyOptions {
        families: args.families,
        max_width: args.max_width,
        max_depth: args.max_depth,
        events: args.events,
        event_limit: args.max_events,
    };
    let report = devstone_bench::verify(&opts);
    print!("{}", report.render());
    Ok(if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_dump(args: DumpArgs) -> Result<ExitCode> {
    let model = devstone_core::build(&BenchmarkSpec::new(args.family, args.width, args.depth))?;
    print!("{}", model.root.outline());
    Ok(ExitCode::SUCCESS)
}

fn alloc_probe(mib: u64) -> ExitCode {
    let len = (mib * 1024 * 1024) as usize;
    let mut buf = vec![0u8; len];
    for i in (0..len).step_by(4096) {
        buf[i] = 1;
    }
    std::hint::black_box(&buf);
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Verify(a) => run_verify(a),
        Command::Dump(a) => run_dump(a),
        Command::Trial(a) => {
            let code = runner::child_main(
                &a.model.spec(),
                a.time_cap,
                a.mem_cap,
                Duration::from_secs_f64(a.builder_sleep.max(0.0)),
            );
            return ExitCode::from(code as u8);
        }
        Command::AllocProbe { mib } => return alloc_probe(mib),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
