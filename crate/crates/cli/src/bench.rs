//! Depth-scaling benchmark on the bundled nested-reasoning model.
//!
//! Runs the scalar-implicature listener at each requested depth and
//! reports network size and phase timings per depth. Network sizes are
//! deterministic; times are not.

use serde::Serialize;

use marginal::{run_program, Error, PipelineOptions, Store};

/// The bundled model, compiled in so the benchmark works regardless of
/// the working directory.
pub const IMPLICATURE: &str = include_str!("../../../programs/implicature.ss");

/// The driver line the bundled file ends with; the benchmark swaps the
/// depth in place.
pub const DRIVER: &str = "(listener #t some-sentence 4)";

#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub depth: u32,
    pub nodes: usize,
    pub edges: usize,
    pub roots: usize,
    #[serde(rename = "compileMs")]
    pub compile_ms: f64,
    #[serde(rename = "solveMs")]
    pub solve_ms: f64,
}

pub fn program_at_depth(depth: u32) -> String {
    assert!(
        IMPLICATURE.contains(DRIVER),
        "bundled model must end with the known driver line"
    );
    IMPLICATURE.replace(DRIVER, &format!("(listener #t some-sentence {depth})"))
}

pub fn run(depths: &[u32], opts: &PipelineOptions) -> Result<Vec<BenchRow>, Error> {
    let mut rows = Vec::with_capacity(depths.len());
    for &depth in depths {
        let text = program_at_depth(depth);
        let mut store = Store::new();
        let out = run_program(&mut store, &text, opts)?;
        rows.push(BenchRow {
            depth,
            nodes: out.fspn.node_count(),
            edges: out.fspn.edge_count(),
            roots: out.fspn.root_count(),
            compile_ms: out.phases.compile_ms,
            solve_ms: out.phases.solve_ms,
        });
    }
    Ok(rows)
}
