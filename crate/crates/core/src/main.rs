use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use congestion::runner::{self, parse_config_with, parse_override, serialize_config, RunConfig};
use congestion::scenarios::SCENARIOS;
use congestion::Error;

#[derive(Parser)]
#[command(name = "congestion", version, about = "Compressible Navier-Stokes runs with a congestion barrier")]
struct Cli {
    /// Worker threads for sweeps (1 gives strictly sequential execution).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its artifacts.
    Run(ConfigArgs),
    /// Run every member of the configuration's [sweep] plan.
    Sweep(ConfigArgs),
    /// List the built-in scenarios, or print one as a config file.
    Scenarios { name: Option<String> },
    /// Parse and validate a configuration without running it.
    Check(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, applied after the file is read.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let text = std::fs::read_to_string(&self.config).map_err(|source| Error::Io {
            path: self.config.display().to_string(),
            source,
        })?;
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        parse_config_with(&text, &overrides)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.output.dir.clone())
    }
}

fn report(e: &Error) {
    match e {
        Error::Parse(issues) | Error::Validation(issues) => {
            let kind = if matches!(e, Error::Parse(_)) { "parse" } else { "validation" };
            eprintln!("error: {kind} failed");
            for i in issues {
                eprintln!("  {i}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn run(args: &ConfigArgs) -> Result<(), Error> {
    let cfg = args.load()?;
    let dir = args.out_dir(&cfg);
    let s = runner::run_once(&cfg, &dir)?;
    println!(
        "ok: t = {} in {} steps, max ratio {:.6}, mass drift {:.2e}, wrote {}",
        s.final_t,
        s.steps,
        s.max_ratio,
        s.mass_drift,
        dir.display()
    );
    Ok(())
}

fn sweep(args: &ConfigArgs) -> Result<bool, Error> {
    let cfg = args.load()?;
    let dir = args.out_dir(&cfg);
    let r = runner::run_sweep(&cfg, Some(&dir))?;
    for row in &r.rows {
        let s = &row.summary;
        match &s.error {
            None => println!(
                "{}: complementarity {:.4e}, pi {:.4e}, lmp {:.4}, max pi {:.4e}",
                row.label, s.complementarity_integral, s.pi_l1_integral, s.lmp_mean, s.max_pi
            ),
            Some(e) => println!("{}: failed: {e}", row.label),
        }
    }
    let show = |v: Option<bool>| v.map_or("n/a", |b| if b { "yes" } else { "no" });
    println!("complementarity decreasing: {}", show(r.checks.complementarity_decreasing));
    println!("lmp decreasing: {}", show(r.checks.lmp_decreasing));
    if r.checks.max_pi_increasing.is_some() {
        println!("max pi increasing: {}", show(r.checks.max_pi_increasing));
    }
    println!("wrote {}", Path::new(&dir).join("sweep.csv").display());
    Ok(r.checks.failed_members == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match &cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => sweep(a),
        Command::Check(a) => a.load().map(|cfg| {
            println!("ok: {}", cfg.scenario.as_deref().unwrap_or("custom configuration"));
            true
        }),
        Command::Scenarios { name: None } => {
            for s in SCENARIOS {
                println!("{s}");
            }
            Ok(true)
        }
        Command::Scenarios { name: Some(n) } => RunConfig::scenario(n).map(|cfg| {
            print!("{}", serialize_config(&cfg));
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
