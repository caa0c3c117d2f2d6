use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nested_bsde::harness::{emit_report, run_convergence, Format, RunOptions};
use nested_bsde::stencil::root_condition_report;
use nested_bsde::{Layout, QuadratureRule, Scheme, Stencil};

#[derive(Parser, Debug)]
#[command(name = "bsde", version, about = "Multi-step BSDE solvers and convergence benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a convergence study over N = 2^n-min ..= 2^n-max.
    Run(RunArgs),
    /// Print the exact coefficients of a derivative stencil.
    Stencil {
        #[arg(long, value_enum)]
        layout: LayoutArg,
        #[arg(long)]
        k: usize,
    },
    /// Print the largest non-trivial characteristic root modulus for k = 1..=k-max.
    Stability {
        #[arg(long, value_enum)]
        layout: LayoutArg,
        #[arg(long = "k-max")]
        k_max: usize,
    },
    /// Print the nodes and weights of the L-point Gauss-Hermite rule.
    Quadrature {
        #[arg(long = "L")]
        order: usize,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long, value_parser = ["example41", "example42", "example43"])]
    problem: String,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Baseline step count.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Baseline quadrature order.
    #[arg(long = "L", default_value_t = 8)]
    quadrature_order: usize,
    /// Baseline interpolation degree.
    #[arg(long, default_value_t = 8)]
    r: usize,
    #[arg(long = "n-min")]
    n_min: u32,
    #[arg(long = "n-max")]
    n_max: u32,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "fit-skip", default_value_t = 0)]
    fit_skip: usize,
    /// Worker threads, 0 for automatic.
    #[arg(long, env = "BSDE_THREADS", default_value_t = 0, hide = true)]
    threads: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LayoutArg {
    Equidistant,
    Squared,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Equidistant => Layout::Equidistant,
            LayoutArg::Squared => Layout::Squared,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SchemeArg {
    Nested3,
    Baseline,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Markdown => Format::Markdown,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Run(args) => run(args),
        Command::Stencil { layout, k } => {
            let stencil = Stencil::new(layout.into(), k).map_err(|e| e.to_string())?;
            println!("i\toffset\tcoefficient");
            for (i, c) in stencil.coefficients().iter().enumerate() {
                println!("{i}\t{}\t{c}", stencil.layout().offset(i));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability { layout, k_max } => {
            println!("k\tmax_modulus\troot_condition");
            for k in 1..=k_max {
                let rep = root_condition_report(k, layout.into()).map_err(|e| e.to_string())?;
                println!(
                    "{k}\t{}\t{}",
                    rep.max_nontrivial_modulus,
                    if rep.satisfied { "satisfied" } else { "violated" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Quadrature { order } => {
            let rule = QuadratureRule::gauss_hermite(order).map_err(|e| e.to_string())?;
            println!("i\tnode\tweight");
            for (i, (a, w)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
                println!("{}\t{a:e}\t{w:e}", i + 1);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    if args.n_min > args.n_max {
        return Err(format!("--n-min {} exceeds --n-max {}", args.n_min, args.n_max));
    }
    if args.n_max >= usize::BITS - 1 {
        return Err(format!("--n-max {} is too large", args.n_max));
    }
    let scheme = match args.scheme {
        SchemeArg::Nested3 => Scheme::Nested3,
        SchemeArg::Baseline => Scheme::Baseline {
            k: args.k,
            quadrature_order: args.quadrature_order,
            r: args.r,
        },
    };
    let ns: Vec<usize> = (args.n_min..=args.n_max).map(|e| 1usize << e).collect();
    let opts = RunOptions {
        fit_skip: args.fit_skip,
        threads: args.threads,
    };
    let report = run_convergence(&args.problem, scheme, &ns, opts).map_err(|e| e.to_string())?;
    for row in &report.rows {
        if let Some(why) = &row.failure {
            eprintln!("N={} failed: {why}", row.n);
        }
    }
    let text = emit_report(&report, args.format.into());
    match &args.out {
        Some(path) => fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(if report.any_failed() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
