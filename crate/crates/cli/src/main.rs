//! Command-line front end: marginalize a program file, optionally dump
//! the compiled network, report solver statistics, or benchmark the
//! bundled nested-reasoning model over a range of depths.
//!
//! Output is a single JSON object (or array, for benchmarks) on stdout.
//! Failures print a one-line JSON error object and map onto exit codes:
//! 1 syntax/runtime, 2 budget exceeded, 3 no convergence, 4 zero mass.

mod bench;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::json;

use marginal::solve::{SolveMethod, SolveOptions};
use marginal::{run_program, CompileOptions, Error, PipelineOptions, PipelineOutput, Store};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Fixpoint,
    Newton,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmitArg {
    Dot,
    #[value(name = "fspn-json")]
    FspnJson,
}

#[derive(Debug, Parser)]
#[command(
    name = "marginal",
    about = "Exact marginal distributions for discrete probabilistic programs"
)]
struct Cli {
    /// Program file (UTF-8 s-expressions). Ignored with --bench-depths.
    input: Option<PathBuf>,

    /// Equation solver for cyclic components.
    #[arg(long, value_enum, default_value_t = SolverArg::Fixpoint)]
    solver: SolverArg,

    /// Convergence tolerance.
    #[arg(long, default_value_t = marginal::solve::DEFAULT_TOL)]
    tol: f64,

    /// Iteration cap per component.
    #[arg(long, default_value_t = marginal::solve::DEFAULT_MAX_ITER)]
    max_iter: u64,

    /// Compilation cap on popped tasks.
    #[arg(long, default_value_t = marginal::compile::DEFAULT_TASK_BUDGET)]
    task_budget: u64,

    /// Compilation cap on network nodes.
    #[arg(long, default_value_t = marginal::compile::DEFAULT_NODE_BUDGET)]
    node_budget: u64,

    /// Divide the distribution by its total mass.
    #[arg(long)]
    normalize: bool,

    /// Write the compiled network beside the input (or to --emit-path).
    #[arg(long, value_enum)]
    emit: Option<EmitArg>,

    /// Destination for the --emit artifact.
    #[arg(long)]
    emit_path: Option<PathBuf>,

    /// Include graph/solver statistics in the output.
    #[arg(long)]
    stats: bool,

    /// Run the bundled nested-reasoning benchmark at these depths.
    #[arg(long, value_delimiter = ',')]
    bench_depths: Option<Vec<u32>>,
}

impl Cli {
    fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            compile: CompileOptions {
                task_budget: self.task_budget,
                node_budget: self.node_budget,
                ..CompileOptions::default()
            },
            solve: SolveOptions {
                method: match self.solver {
                    SolverArg::Fixpoint => SolveMethod::Fixpoint,
                    SolverArg::Newton => SolveMethod::Newton,
                },
                tol: self.tol,
                max_iter: self.max_iter,
                normalize: self.normalize,
                ..SolveOptions::default()
            },
        }
    }
}

#[derive(Serialize)]
struct DistEntry {
    value: String,
    prob: f64,
}

/// Print one line to stdout, tolerating a closed pipe.
fn emit_line(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn error_exit(code: &str, message: String) -> ExitCode {
    emit_line(&json!({ "error": { "code": code, "message": message } }).to_string());
    let status: u8 = match code {
        "budget" => 2,
        "no-convergence" => 3,
        "zero-mass" => 4,
        _ => 1,
    };
    ExitCode::from(status)
}

fn error_code(err: &Error) -> &'static str {
    match err {
        Error::Syntax(_) => "syntax",
        Error::Compile(marginal::CompileError::Runtime(_)) => "runtime",
        Error::Compile(marginal::CompileError::BudgetExceeded { .. }) => "budget",
        Error::Solve(marginal::SolveError::NoConvergence { .. }) => "no-convergence",
        Error::Solve(marginal::SolveError::EquationBudget { .. }) => "budget",
        Error::Solve(marginal::SolveError::ZeroMass { .. }) => "zero-mass",
    }
}

fn stats_json(out: &PipelineOutput) -> serde_json::Value {
    let scc_sizes: Vec<usize> = out.report.components.iter().map(|c| c.size).collect();
    json!({
        "nodes": out.fspn.node_count(),
        "edges": out.fspn.edge_count(),
        "roots": out.fspn.root_count(),
        "sccCount": out.report.components.len(),
        "sccSizes": scc_sizes,
        "components": out.report.components,
        "phases": {
            "parseMs": out.phases.parse_ms,
            "compileMs": out.phases.compile_ms,
            "solveMs": out.phases.solve_ms,
        },
    })
}

fn run(cli: &Cli) -> ExitCode {
    if let Some(depths) = &cli.bench_depths {
        return match bench::run(depths, &cli.pipeline_options()) {
            Ok(rows) => {
                emit_line(&serde_json::to_string(&rows).expect("serializable"));
                ExitCode::SUCCESS
            }
            Err(err) => error_exit(error_code(&err), err.to_string()),
        };
    }

    let Some(input) = &cli.input else {
        return error_exit("io", "no input file given (and no --bench-depths)".into());
    };
    let text = match std::fs::read_to_string(input) {
        Ok(text) => text,
        Err(err) => return error_exit("io", format!("cannot read {}: {err}", input.display())),
    };

    let mut store = Store::new();
    let out = match run_program(&mut store, &text, &cli.pipeline_options()) {
        Ok(out) => out,
        Err(err) => return error_exit(error_code(&err), err.to_string()),
    };

    if let Some(emit) = cli.emit {
        let (default_ext, contents) = match emit {
            EmitArg::Dot => ("dot", out.fspn.emit_dot(&store)),
            EmitArg::FspnJson => (
                "fspn.json",
                serde_json::to_string_pretty(&out.fspn.dump(&store)).expect("serializable"),
            ),
        };
        let path = cli
            .emit_path
            .clone()
            .unwrap_or_else(|| input.with_extension(default_ext));
        if let Err(err) = std::fs::write(&path, contents) {
            return error_exit("io", format!("cannot write {}: {err}", path.display()));
        }
    }

    let mut entries: Vec<DistEntry> = out
        .distribution
        .mass
        .iter()
        .map(|(&v, &prob)| DistEntry {
            value: store.value_text(v),
            prob,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.prob
            .total_cmp(&a.prob)
            .then_with(|| a.value.cmp(&b.value))
    });

    let mut output = json!({
        "distribution": entries,
        "totalMass": out.distribution.total_mass,
    });
    if cli.stats {
        output["stats"] = stats_json(&out);
    }
    emit_line(&output.to_string());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run(&cli)
}
