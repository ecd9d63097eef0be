//! Benchmark CLI: run experiments from config files, fit log-log rates on
//! trace columns, execute the acceptance suite, and list the problem zoo.

use std::path::PathBuf;
use std::process::ExitCode;

use rgvi::harness::{fit_rate, list_problems, run_acceptance, run_experiment, ExperimentConfig};

const USAGE: &str = "\
rgvi - reduced-gradient methods for composite variational inequalities

USAGE:
    rgvi run <config>                              run an experiment, write its trace CSV
    rgvi fit <trace.csv> --column <name> --window a:b
                                                   least-squares log-log slope of a column
    rgvi accept                                    run the acceptance suite
    rgvi list-problems                             list the instance zoo

Exit codes: 0 success, 1 acceptance criterion failure, 2 config or usage error.
The RGVI_THREADS environment variable bounds parallel experiment execution.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("run") => cmd_run(&args[1..]),
        Some("fit") => cmd_fit(&args[1..]),
        Some("accept") => cmd_accept(),
        Some("list-problems") => {
            print!("{}", list_problems());
            ExitCode::SUCCESS
        }
        Some("--help") | Some("-h") | Some("help") => {
            println!("{USAGE}");
            ExitCode::SUCCESS
        }
        _ => {
            eprintln!("{USAGE}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(args: &[String]) -> ExitCode {
    let Some(path) = args.first() else {
        eprintln!("run: missing config path\n{USAGE}");
        return ExitCode::from(2);
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("run: cannot read {path}: {e}");
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("run: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("run: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_fit(args: &[String]) -> ExitCode {
    let mut path: Option<PathBuf> = None;
    let mut column: Option<String> = None;
    let mut window: Option<(usize, usize)> = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--column" => column = it.next().cloned(),
            "--window" => {
                window = it.next().and_then(|w| {
                    let (a, b) = w.split_once(':')?;
                    Some((a.parse().ok()?, b.parse().ok()?))
                });
                if window.is_none() {
                    eprintln!("fit: --window expects a:b with integer bounds");
                    return ExitCode::from(2);
                }
            }
            other if path.is_none() => path = Some(PathBuf::from(other)),
            other => {
                eprintln!("fit: unexpected argument {other}\n{USAGE}");
                return ExitCode::from(2);
            }
        }
    }
    let (Some(path), Some(column), Some((lo, hi))) = (path, column, window) else {
        eprintln!("fit: need <trace.csv> --column <name> --window a:b\n{USAGE}");
        return ExitCode::from(2);
    };
    match fit_rate(&path, &column, lo, hi) {
        Ok(fit) => {
            println!(
                "column {column} over t in [{lo}, {hi}]: slope {:.6}, intercept {:.6}, \
                 rms residual {:.3e}, {} points",
                fit.slope, fit.intercept, fit.residual, fit.points
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fit: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_accept() -> ExitCode {
    let report = run_acceptance();
    print!("{}", report.render());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
