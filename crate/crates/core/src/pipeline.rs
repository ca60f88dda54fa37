//! End-to-end driver: parse, compile, solve, with phase timings.

use std::time::Instant;

use crate::compile::{build_fspn, CompileOptions, CompileState};
use crate::error::Error;
use crate::fspn::{Distribution, Fspn};
use crate::solve::{marginal, SolveOptions, SolveReport};
use crate::syntax::{parse_program, Store};

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineOptions {
    pub compile: CompileOptions,
    pub solve: SolveOptions,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub parse_ms: f64,
    pub compile_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub distribution: Distribution,
    pub report: SolveReport,
    pub fspn: Fspn,
    pub state: CompileState,
    pub phases: PhaseTimings,
}

/// Run a program text through the whole pipeline.
pub fn run_program(
    store: &mut Store,
    text: &str,
    opts: &PipelineOptions,
) -> Result<PipelineOutput, Error> {
    let mut phases = PhaseTimings::default();

    let t0 = Instant::now();
    let body = parse_program(store, text)?;
    phases.parse_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let (fspn, state) = build_fspn(store, body, &opts.compile)?;
    phases.compile_ms = t1.elapsed().as_secs_f64() * 1e3;

    let t2 = Instant::now();
    let (distribution, report) = marginal(&fspn, &state, &opts.solve)?;
    phases.solve_ms = t2.elapsed().as_secs_f64() * 1e3;

    Ok(PipelineOutput {
        distribution,
        report,
        fspn,
        state,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_program_end_to_end() {
        let mut st = Store::new();
        let out = run_program(&mut st, "(flip 0.6)", &PipelineOptions::default()).unwrap();
        let t = st.bool_value(true);
        assert!((out.distribution.mass[&t] - 0.6).abs() < 1e-12);
        assert!((out.distribution.total_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn syntax_errors_propagate() {
        let mut st = Store::new();
        match run_program(&mut st, "(flip", &PipelineOptions::default()) {
            Err(Error::Syntax(_)) => {}
            other => panic!("expected syntax error, got {other:?}"),
        }
    }
}
