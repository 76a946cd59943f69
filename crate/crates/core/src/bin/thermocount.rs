use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thermocount::scenario::{
    emit_report, run_scenario, write_table, ReportFormat, SaddleCase, Scenario, SlopeChoice, Task,
};

#[derive(Parser)]
#[command(version, about = "Pressure, Manhattan curves and window counts on finite Markov shifts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML scenario; built-in defaults otherwise
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Search-node budget for counting
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Seed for randomized checks; counts never depend on it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the fully resolved config and exit
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    Pressure,
    Manhattan {
        #[arg(long)]
        samples: Option<usize>,
        /// Extra copy of curve.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Correlation {
        #[arg(long, value_delimiter = ',')]
        m: Vec<f64>,
    },
    BishopSteger,
    Count {
        /// Slope: a number, `star` or `midpoint`
        #[arg(long)]
        m: Option<SlopeChoice>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        t_step: Option<f64>,
        #[arg(long)]
        cylinder: Option<String>,
        /// Extra copy of report.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Verify,
    Saddle {
        #[arg(long, value_enum)]
        case: Option<CaseArg>,
        #[arg(long, value_delimiter = ',')]
        n: Vec<f64>,
    },
    TruncationStudy {
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Gaussian,
    Quartic,
    Pressure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(64)
        }
    }
}

fn run(cli: Cli) -> thermocount::Result<u8> {
    let g = cli.global;
    let mut s = match &g.config {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Some(d) = g.out_dir {
        s.run.out_dir = d;
    }
    if g.threads.is_some() {
        s.run.threads = g.threads;
    }
    if let Some(b) = g.budget {
        s.run.budget = b;
    }
    if let Some(seed) = g.seed {
        s.run.seed = seed;
    }
    let mut out: Option<PathBuf> = None;
    s.task = Some(match cli.command {
        Command::Pressure => Task::PressureGrid,
        Command::Manhattan { samples, out: o } => {
            out = o;
            if let Some(n) = samples {
                s.manhattan.samples = n;
            }
            Task::Manhattan
        }
        Command::Correlation { m } => {
            if !m.is_empty() {
                s.manhattan.slopes = m;
            }
            Task::Correlation
        }
        Command::BishopSteger => Task::BishopSteger,
        Command::Count { m, xi, t_min, t_max, t_step, cylinder, out: o } => {
            out = o;
            let c = &mut s.count;
            c.m = m.or(c.m);
            c.xi = xi.unwrap_or(c.xi);
            c.t_from = t_min.unwrap_or(c.t_from);
            c.t_to = t_max.unwrap_or(c.t_to);
            c.t_step = t_step.unwrap_or(c.t_step);
            if let Some(p) = cylinder {
                c.cylinder = p;
            }
            Task::Count
        }
        Command::Verify => Task::Verify,
        Command::Saddle { case, n } => {
            if let Some(c) = case {
                s.saddle.case = match c {
                    CaseArg::Gaussian => SaddleCase::Gaussian,
                    CaseArg::Quartic => SaddleCase::Quartic,
                    CaseArg::Pressure => SaddleCase::Pressure,
                };
            }
            if !n.is_empty() {
                s.saddle.n = n;
            }
            Task::Saddle
        }
        Command::TruncationStudy { sizes } => {
            if !sizes.is_empty() {
                s.truncation.sizes = sizes;
            }
            Task::TruncationStudy
        }
    });
    let config = s.to_toml();
    if g.print_config {
        print!("{config}");
        return Ok(0);
    }
    let outcome = run_scenario(&s)?;
    let format = if s.run.json_summary {
        ReportFormat::CsvAndJson
    } else {
        ReportFormat::Csv
    };
    for path in emit_report(&outcome, &config, &s.run.out_dir, format)? {
        println!("wrote {}", path.display());
    }
    if let (Some(path), Some(table)) = (out, outcome.tables.first()) {
        write_table(&outcome, &config, table, &path)?;
        println!("wrote {}", path.display());
    }
    for (k, v) in &outcome.scalars {
        println!("{k} = {v}");
    }
    for (k, v) in &outcome.notes {
        println!("{k}: {v}");
    }
    if let Some(t) = outcome.table("verify.csv") {
        println!("{}", t.header());
        for row in &t.rows {
            println!("{}", row.join(","));
        }
    }
    Ok(outcome.status.exit_code() as u8)
}
