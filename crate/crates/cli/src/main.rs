mod commands;
mod formats;

use clap::{Parser, Subcommand};

/// Reservoir-system toolbox: ESP/FMP certificates over weighted sequence
/// spaces, filter and derivative evaluation, forgetting experiments, and
/// Volterra kernel extraction with certified truncation bounds.
///
/// Window CSV files hold one row per time step, oldest first. Weighting
/// specs are JSON, inline or as a path, e.g.
/// '{"kind":"geometric","lambda":0.5}'. All randomness is fixed by
/// --seed, so identical invocations produce byte-identical outputs.
#[derive(Parser)]
#[command(name = "rescert", version, about, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a sufficient ESP/FMP condition for a (system, weighting) pair.
    Certify(commands::CertifyArgs),
    /// Run the reservoir filter on an input window and write the states.
    Eval(commands::EvalArgs),
    /// Compare the filter derivative recursion against finite differences.
    DerivativeCheck(commands::DerivativeCheckArgs),
    /// Input- or state-forgetting experiment with certified envelopes.
    Forgetting(commands::ForgettingArgs),
    /// Extract Volterra kernels (exact nilpotent or finite differences).
    VolterraExtract(commands::VolterraExtractArgs),
    /// Evaluate a finite Volterra series on an input window.
    VolterraEval(commands::VolterraEvalArgs),
    /// Check the Volterra truncation bound against measured errors.
    BoundCheck(commands::BoundCheckArgs),
    /// Certify a grid over one or two scalar parameters, CSV output.
    Sweep(commands::SweepArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Certify(args) => commands::certify(args),
        Command::Eval(args) => commands::eval(args),
        Command::DerivativeCheck(args) => commands::derivative_check(args),
        Command::Forgetting(args) => commands::forgetting(args),
        Command::VolterraExtract(args) => commands::volterra_extract(args),
        Command::VolterraEval(args) => commands::volterra_eval(args),
        Command::BoundCheck(args) => commands::bound_check(args),
        Command::Sweep(args) => commands::sweep(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
