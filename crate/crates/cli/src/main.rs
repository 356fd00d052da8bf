use clap::{Parser, Subcommand};
use lelong_lab::acceptance;
use lelong_lab::run::{describe, RunError};
use lelong_lab::{execute, parse, Plan};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lelong-lab", version, about = "Generalized Lelong numbers: experiment runner and verification suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config (or re-run the config echoed in a summary.json).
    Run {
        config: PathBuf,
        /// Validate and print the resolved plan without computing or writing anything.
        #[arg(long)]
        dry_run: bool,
        /// Worker threads; LELONG_LAB_THREADS takes precedence.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance table.
    Verify {
        /// Only the rows with this tag or number.
        #[arg(long)]
        only: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_threads(flag: Option<usize>) -> Result<(), String> {
    let env = match std::env::var("LELONG_LAB_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| format!("LELONG_LAB_THREADS must be a positive integer, got `{v}`"))?),
        Err(_) => None,
    };
    if let Some(n) = env.or(flag) {
        if n == 0 {
            return Err("thread count must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(config: PathBuf, dry_run: bool, out: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let plan = match parse(&text).and_then(Plan::resolve) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let dir = out.unwrap_or_else(|| PathBuf::from(&plan.config.output.dir));
    if dry_run {
        println!("{}", serde_json::to_string_pretty(&describe(&plan, &dir)).expect("plan serializes"));
        return ExitCode::SUCCESS;
    }
    let output = match execute(&plan).and_then(|o| o.write(&dir).map(|_| o)) {
        Ok(o) => o,
        Err(e @ RunError::Schema(_)) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(3);
        }
    };
    for (name, l) in &output.summary.limits {
        println!("{name}: {:.12e} +- {:.3e}", l.limit, l.error);
    }
    let failed = output.summary.failed();
    for a in &failed {
        eprintln!("assertion failed: {} ({})", a.name, a.detail);
    }
    println!("wrote {}", dir.display());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn verify(only: Option<String>) -> ExitCode {
    let rows = acceptance::select(only.as_deref());
    if rows.is_empty() {
        eprintln!("no acceptance row matches `{}`; tags: {}", only.unwrap_or_default(), acceptance::tags().join(", "));
        return ExitCode::from(2);
    }
    let mut failed = Vec::new();
    for c in rows {
        let r = c.run();
        println!("{}", r.line());
        if !r.pass {
            failed.push(format!("{} {}", r.id, r.title));
        }
    }
    if failed.is_empty() {
        println!("all rows pass");
        ExitCode::SUCCESS
    } else {
        eprintln!("failing rows: {}", failed.join("; "));
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Run { threads, .. } | Command::Verify { threads, .. } => *threads,
    };
    if let Err(e) = init_threads(threads) {
        eprintln!("{e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Run { config, dry_run, out, .. } => run(config, dry_run, out),
        Command::Verify { only, .. } => verify(only),
    }
}
