use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use steadystein::tables::{build_table, md_curve, ph_ou_config, Table, TableId, TableOptions};
use steadystein::verify::{run_suite, Model, Preset, Suite, VerifyOptions};
use steadystein::Error;

#[derive(Parser)]
#[command(name = "steadystein", version, about = "Diffusion approximations for many-server queues")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, global = true, env = "STEADYSTEIN_JOBS")]
    jobs: Option<usize>,
    /// Truncate the exact chain once the remaining tail mass is below this.
    #[arg(long, global = true, default_value_t = 1e-14)]
    tail_eps: f64,
    /// Simulation steps (diffusion) per replication.
    #[arg(long, global = true)]
    steps: Option<f64>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Burn-in in time units.
    #[arg(long, global = true)]
    burnin: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write one of the data tables as CSV.
    Table {
        id: TableId,
        /// Server counts, comma separated (md and ph tables).
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u64>>,
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        #[arg(long, default_value_t = 2.4)]
        z: f64,
        /// Abandonment rate for the phase-type table.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Euler step for the diffusion simulation.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Run an invariant suite and write a JSON-lines report.
    Verify {
        suite: Suite,
        #[arg(long)]
        model: Option<Model>,
        #[arg(long, default_value = "h2")]
        preset: Preset,
        /// Composition samples for the ssc suite.
        #[arg(long, default_value_t = 1e6)]
        samples: f64,
    },
    /// Relative tail errors of both diffusions along the lattice.
    MdCurve {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        z_max: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) | Error::Truncation(_) => 3,
        _ => 2,
    }
}

fn open_out(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_table(t: &Table, common: &Common, seed_meta: bool) -> io::Result<()> {
    let mut t = t.clone();
    if seed_meta && !t.meta.iter().any(|(k, _)| k == "seed") {
        t.meta.push(("seed".into(), common.seed.to_string()));
    }
    let mut w = open_out(&common.out)?;
    t.write_csv(&mut w)?;
    w.flush()
}

fn run(cli: Cli) -> Result<u8, (u8, String)> {
    let common = &cli.common;
    if let Some(j) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| (2, format!("cannot size worker pool: {e}")))?;
    }
    let fail = |e: Error| (exit_code(&e), e.to_string());
    let io_fail = |e: io::Error| (2, format!("write failed: {e}"));
    match &cli.cmd {
        Cmd::Table { id, n, rho, z, alpha, step } => {
            let mut ou = ph_ou_config(common.seed);
            if let Some(s) = common.steps {
                ou.steps = s as u64;
            }
            if let Some(r) = common.reps {
                ou.reps = r;
            }
            if let Some(b) = common.burnin {
                ou.burnin = b;
            }
            if let Some(h) = step {
                ou.step = *h;
            }
            let opts = TableOptions { tail_eps: common.tail_eps, n: n.clone(), rho: *rho, z: *z, alpha: *alpha, ou };
            let t = build_table(*id, &opts).map_err(fail)?;
            write_table(&t, common, *id == TableId::Ph).map_err(io_fail)?;
            Ok(0)
        }
        Cmd::MdCurve { n, rho, z_max } => {
            let t = md_curve(*n, *rho, *z_max, common.tail_eps).map_err(fail)?;
            write_table(&t, common, false).map_err(io_fail)?;
            Ok(0)
        }
        Cmd::Verify { suite, model, preset, samples } => {
            let mut opts = VerifyOptions {
                model: *model,
                tail_eps: common.tail_eps,
                seed: common.seed,
                preset: *preset,
                samples: *samples,
                ..VerifyOptions::default()
            };
            if let Some(r) = common.reps {
                opts.reps = r;
            }
            if let Some(b) = common.burnin {
                opts.burnin = b;
            }
            let recs = run_suite(*suite, &opts).map_err(fail)?;
            let mut w = open_out(&common.out).map_err(io_fail)?;
            for r in &recs {
                let line = serde_json::to_string(r).map_err(|e| (3, e.to_string()))?;
                writeln!(w, "{line}").map_err(io_fail)?;
            }
            w.flush().map_err(io_fail)?;
            let failed: Vec<_> = recs.iter().filter(|r| !r.passed).collect();
            for r in &failed {
                eprintln!("FAIL {} {} value={} bound={:?} params={:?}", r.suite, r.check, r.value, r.bound, r.params);
            }
            eprintln!("{}: {} checks, {} failed", suite.as_str(), recs.len(), failed.len());
            Ok(if failed.is_empty() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => ExitCode::from(c),
        Err((c, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(c)
        }
    }
}
