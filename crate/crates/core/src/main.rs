use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use callpack::config::{dump_config, load_config};
use callpack::engine::report::{
    read_aggregates_json, summarize, write_aggregates_json, write_comparison_csv,
    write_snapshots_csv, write_timings_csv, PlanLog,
};
use callpack::engine::{compare, run_with_observer, MigrationMode, RunConfig};
use callpack::policies::PolicyKind;
use callpack::trace::{generate_trace, load_trace, save_trace, CallTrace};

/// Call-packing simulator for conferencing media-processor fleets.
#[derive(Parser)]
#[command(name = "callpack", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace.
    GenTrace {
        #[command(flatten)]
        common: Common,
        /// Calls in the reported day.
        #[arg(long)]
        n_calls: Option<usize>,
        /// Trace file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace under one configuration.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Directory for the report files.
        #[arg(long)]
        out: PathBuf,
        /// Also write every planned move to plans.jsonl.
        #[arg(long)]
        plans: bool,
    },
    /// Replay one trace under several configurations.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunFlags,
        /// Comma-separated `policy` or `policy+migration` entries.
        #[arg(long, default_value = "rr+none,random+none,ll+none,llr+none,p2+none,rr+greedy,random+greedy,ll+greedy,llr+greedy,p2+greedy,tetris+mip")]
        policies: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of a report directory.
    Report { dir: PathBuf },
    /// Print the effective configuration as TOML.
    DumpConfig {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for both the trace generator and the simulation.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunFlags {
    /// Trace file; generated from the config when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Number of MPs.
    #[arg(long)]
    cluster_size: Option<usize>,
    #[arg(long)]
    migration: Option<MigrationMode>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).map_err(|e| Failure::Config(e.into()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.trace.seed = seed;
    }
    Ok(cfg)
}

fn apply_run_flags(cfg: &mut RunConfig, flags: &RunFlags, policy: Option<PolicyKind>) -> Result<(), Failure> {
    if let Some(n) = flags.cluster_size {
        cfg.cluster.n_mps = n;
    }
    if let Some(m) = flags.migration {
        cfg.migration = m;
    }
    if let Some(p) = policy {
        cfg.policy = p;
    }
    cfg.validate()
        .map_err(|e| Failure::Config(anyhow!("{e} (after command-line overrides)")))
}

fn obtain_trace(cfg: &RunConfig, path: Option<&Path>) -> Result<CallTrace, Failure> {
    match path {
        Some(p) => load_trace(p).with_context(|| format!("loading trace {}", p.display())).map_err(runtime),
        None => generate_trace(&cfg.trace).context("generating trace").map_err(runtime),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime)
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Outcome {
    let mut w = create(dir, name)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", dir.join(name).display()))
        .map_err(runtime)
}

fn make_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime)
}

fn parse_entries(list: &str, default_migration: MigrationMode) -> Result<Vec<(PolicyKind, MigrationMode)>, Failure> {
    let mut out = Vec::new();
    for entry in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (p, m) = match entry.split_once('+') {
            Some((p, m)) => (p, Some(m)),
            None => (entry, None),
        };
        let policy: PolicyKind = p
            .parse()
            .map_err(|e| Failure::Config(anyhow!("--policies entry `{entry}`: {e}")))?;
        let migration = match m {
            Some(m) => m
                .parse()
                .map_err(|e| Failure::Config(anyhow!("--policies entry `{entry}`: {e}")))?,
            None => default_migration,
        };
        out.push((policy, migration));
    }
    if out.is_empty() {
        return Err(Failure::Config(anyhow!("--policies is empty")));
    }
    Ok(out)
}

fn execute(cli: Cli) -> Outcome {
    match cli.command {
        Command::GenTrace { common, n_calls, out } => {
            let mut cfg = config(&common)?;
            if let Some(n) = n_calls {
                cfg.trace.n_calls = n;
            }
            cfg.trace
                .validate()
                .map_err(|e| Failure::Config(anyhow!("invalid config: {e}")))?;
            let trace = generate_trace(&cfg.trace).context("generating trace").map_err(runtime)?;
            save_trace(&trace, &out)
                .with_context(|| format!("writing {}", out.display()))
                .map_err(runtime)?;
            eprintln!("wrote {} calls to {}", trace.calls.len(), out.display());
            Ok(())
        }
        Command::Simulate { common, run, policy, out, plans } => {
            let mut cfg = config(&common)?;
            apply_run_flags(&mut cfg, &run, policy)?;
            let trace = obtain_trace(&cfg, run.trace.as_deref())?;
            make_dir(&out)?;
            let report = if plans {
                let mut log = PlanLog::new(create(&out, "plans.jsonl")?);
                let report = run_with_observer(&cfg, &trace, &mut log).map_err(runtime)?;
                log.finish().context("writing plans.jsonl").map_err(runtime)?;
                report
            } else {
                run_with_observer(&cfg, &trace, &mut ()).map_err(runtime)?
            };
            write_file(&out, "snapshots.csv", |w| write_snapshots_csv(&report.snapshots, w))?;
            write_file(&out, "aggregates.json", |w| write_aggregates_json(&report.aggregates, w))?;
            write_file(&out, "solver_timings.csv", |w| write_timings_csv(&report.timings, w))?;
            print!("{}", summarize(&report.aggregates));
            Ok(())
        }
        Command::Compare { common, run, policies, out } => {
            let mut cfg = config(&common)?;
            apply_run_flags(&mut cfg, &run, None)?;
            let entries = parse_entries(&policies, cfg.migration)?;
            let cfgs: Vec<RunConfig> = entries
                .into_iter()
                .map(|(policy, migration)| RunConfig { policy, migration, ..cfg.clone() })
                .collect();
            let trace = obtain_trace(&cfg, run.trace.as_deref())?;
            make_dir(&out)?;
            let (table, _) = compare(&cfgs, &trace).map_err(runtime)?;
            write_file(&out, "comparison.csv", |w| write_comparison_csv(&table, w))?;
            let all: Vec<_> = table.rows.iter().map(|r| r.aggregates.clone()).collect();
            write_file(&out, "comparison.json", |w| {
                serde_json::to_writer_pretty(&mut *w, &all)?;
                writeln!(w)
            })?;
            print_comparison(&table);
            Ok(())
        }
        Command::Report { dir } => report(&dir),
        Command::DumpConfig { common, run, policy, out } => {
            let mut cfg = config(&common)?;
            apply_run_flags(&mut cfg, &run, policy)?;
            let text = dump_config(&cfg).map_err(runtime)?;
            match out {
                Some(path) => fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))
                    .map_err(runtime),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn print_comparison(table: &callpack::engine::Comparison) {
    println!("{:<22}{:>14}{:>10}{:>12}{:>10}", "config", "H", "H/RR", "migrations", "max cpu");
    for r in &table.rows {
        let a = &r.aggregates;
        let rel = r.h_vs_ref.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<22}{:>14}{:>10}{:>12}{:>10.1}",
            a.label, a.hot_participant_minutes, rel, a.total_migrations, a.max_of_max_cpu
        );
    }
}

fn report(dir: &Path) -> Outcome {
    let mut found = false;
    let single = dir.join("aggregates.json");
    if single.exists() {
        let text = fs::read_to_string(&single)
            .with_context(|| format!("reading {}", single.display()))
            .map_err(runtime)?;
        let agg = read_aggregates_json(&text)
            .with_context(|| format!("parsing {}", single.display()))
            .map_err(runtime)?;
        print!("{}", summarize(&agg));
        found = true;
    }
    let table = dir.join("comparison.csv");
    if table.exists() {
        let text = fs::read_to_string(&table)
            .with_context(|| format!("reading {}", table.display()))
            .map_err(runtime)?;
        if found {
            println!();
        }
        for line in text.lines() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() >= 9 {
                println!("{:<22}{:>16}{:>16}{:>12}", cols[0], cols[1], cols[8], cols[4]);
            }
        }
        found = true;
    }
    if found {
        Ok(())
    } else {
        Err(runtime(anyhow!(
            "{} holds neither aggregates.json nor comparison.csv",
            dir.display()
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
