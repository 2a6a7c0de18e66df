//! Finite-difference check of every graph operation, then of a single
//! hand-built expression.

use spreader_profiler::autograd::{grad_check, Graph, ParamStore};
use spreader_profiler::gradsuite::{run_suite, STEP, TOLERANCE};
use spreader_profiler::Tensor;

fn main() -> spreader_profiler::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let report = run_suite(0, seeds)?;
    print!("{}", report.to_table());
    println!("suite passed: {}\n", report.passed);

    // sum(tanh(x·W)) for a single 2x3 parameter
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::from_rows(&[vec![0.3, -0.2, 0.5], vec![0.1, 0.4, -0.6]])?);
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25]])?;
    let check = grad_check(
        |g: &mut Graph, store: &ParamStore| {
            let xv = g.constant(x.clone());
            let wv = g.param(store, w);
            let y = g.matmul(xv, wv)?;
            let y = g.tanh(y);
            Ok(g.sum(y))
        },
        &mut store,
        &[w],
        STEP,
        TOLERANCE,
    )?;
    println!("tanh(x·W): max relative error {:.2e}, passed {}", check.max_rel_error, check.passed);
    Ok(())
}
