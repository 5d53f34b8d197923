use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use histfed_cli::args::{Cli, Command};
use histfed_cli::commands::{
    cmd_baseline, cmd_evaluate, cmd_generate, cmd_plotdata, cmd_prepare, cmd_sweep, cmd_train,
};
use histfed_cli::error::Result;
use histfed_cli::RunSummary;

/// Writes to stdout, ignoring a closed pipe (e.g. output piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn print_summary(s: &RunSummary) {
    out!("{} {} on {} ({} runs)", s.command, s.label, s.dataset, s.n_runs);
    for (metric, st) in &s.stats {
        out!("  {metric:<9} mean {:.6}  std {:.6}", st.mean, st.std);
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => out!("{}", json(&cmd_prepare(&args.resolve()?)?)),
        Command::Train(args) => {
            let config = args.resolve()?;
            print_summary(&cmd_train(&config)?);
            out!("outputs in {}", config.output.display());
        }
        Command::Baseline(args) => {
            let config = args.resolve()?;
            print_summary(&cmd_baseline(&config)?);
            out!("outputs in {}", config.output.display());
        }
        Command::Sweep(args) => {
            let config = args.resolve()?;
            let result = cmd_sweep(&config)?;
            let best = result.best();
            let p = &best.params;
            let mean = best.stats.get(&result.primary_metric).map_or(f64::NAN, |s| s.mean);
            out!(
                "{} grid points; best eta={} lambda={} max_depth={} fraction={} with mean {} {:.6}",
                result.ranked.len(),
                p.eta,
                p.lambda,
                p.max_depth,
                p.sampling_fraction,
                result.primary_metric,
                mean
            );
            out!("outputs in {}", config.output.display());
        }
        Command::Plotdata(args) => {
            let summaries = args.summaries.iter().map(|p| RunSummary::load(p)).collect::<Result<Vec<_>>>()?;
            let files = cmd_plotdata(&summaries, &args.output)?;
            out!("{}\n{}\n{}", files.boxplot.display(), files.stats.display(), files.deltas.display());
        }
        Command::Evaluate(args) => {
            let report = cmd_evaluate(&args.model, &args.data, args.predictions.as_deref())?;
            out!("{}", json(&report));
        }
        Command::Generate(args) => {
            cmd_generate(&args.spec()?, &args.csv, &args.manifest)?;
            out!("{}\n{}", args.csv.display(), args.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
