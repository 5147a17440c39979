//! Benchmark harness: compile each kernel with and without MACC synthesis,
//! simulate both builds on the same inputs, check them against a direct
//! Rust evaluation and compare cycle counts.

mod kernels;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::kernels::{Kernel, Values};
use crate::codegen::symbol_name;
use crate::driver::{compile, CompileError, Compiled};
use crate::machine::MachineDesc;
use crate::sim::{cycle_report, CycleReport, SimError, SimState};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRow {
    pub baseline_cycles: u64,
    pub optimized_cycles: u64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub name: String,
    pub kernel: Kernel,
    pub paper: PaperRow,
    /// Accepted speedup range.
    pub min_speedup: f64,
    pub max_speedup: Option<f64>,
}

impl BenchCase {
    /// A case with no published reference and no speedup requirement.
    pub fn adhoc(name: &str, kernel: Kernel) -> BenchCase {
        case(name, kernel, (0, 0, 0.0), 0.0, None)
    }

    pub fn source(&self) -> String {
        self.kernel.source()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("{case} ({build}): compile failure: {error}")]
    CompileFailure { case: String, build: &'static str, error: CompileError },
    #[error("{case} ({build}): simulation failure: {error}")]
    SimFailure { case: String, build: &'static str, error: SimError },
    #[error("{case} ({build}): `{var}` is {got:?}, oracle says {want:?}")]
    OracleMismatch { case: String, build: &'static str, var: String, got: Vec<i32>, want: Vec<i32> },
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub baseline_cycles: u64,
    pub optimized_cycles: u64,
    /// Baseline over optimized total cycles, two decimals.
    pub speedup: f64,
    pub baseline_loop_cycles: u64,
    pub optimized_loop_cycles: u64,
    pub oracle_match: bool,
    pub within_tolerance: bool,
    pub paper: PaperRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite: String,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub failures: Vec<RowFailure>,
    pub pass: bool,
}

fn case(name: &str, kernel: Kernel, paper: (u64, u64, f64), min: f64, max: Option<f64>) -> BenchCase {
    BenchCase {
        name: name.into(),
        kernel,
        paper: PaperRow { baseline_cycles: paper.0, optimized_cycles: paper.1, speedup: paper.2 },
        min_speedup: min,
        max_speedup: max,
    }
}

/// Cases of a named suite, in report order.
pub fn suite_cases(suite: &str) -> Result<Vec<BenchCase>, BenchError> {
    match suite {
        "table1" => Ok(vec![
            case("dot product (N=1024)", Kernel::DotProduct { n: 1024 }, (17430, 1969, 8.85), 8.0, Some(9.2)),
            case("convolution (N=1024)", Kernel::Convolution { n: 1024 }, (19508, 3289, 5.93), 4.0, None),
            case(
                "FIR filter (n=1024, N=128)",
                Kernel::Fir { outputs: 1024, taps: 128 },
                (2099277, 428423, 4.90),
                4.0,
                None,
            ),
            case(
                "matrix multiply (100x100)",
                Kernel::MatMul { rows: 100, inner: 100, cols: 100 },
                (23101215, 4176534, 5.53),
                4.0,
                None,
            ),
        ]),
        other => Err(BenchError::UnknownSuite(other.to_string())),
    }
}

/// Expected final values for `inputs`.
pub fn oracle_eval(case: &BenchCase, inputs: &Values) -> Values {
    case.kernel.oracle(inputs)
}

/// One simulated build.
#[derive(Debug, Clone)]
pub struct BuildRun {
    pub compiled: Compiled,
    pub state: SimState,
    pub report: CycleReport,
}

impl BuildRun {
    /// Cycles spent in innermost loop bodies.
    pub fn loop_cycles(&self) -> u64 {
        self.compiled.function.innermost_labels().iter().filter_map(|l| self.report.label(l)).sum()
    }

    /// Final words of a source variable.
    pub fn value(&self, var: &str) -> Option<&[i32]> {
        let s = self.compiled.image.symbol(&symbol_name(var))?;
        self.state.memory.get(s.addr as usize..(s.addr + s.len) as usize)
    }
}

fn label(macc: bool) -> &'static str {
    if macc {
        "optimized"
    } else {
        "baseline"
    }
}

/// Compile, load `inputs`, simulate and check against `expected`.
pub fn run_build(
    case: &BenchCase,
    desc: &MachineDesc,
    macc: bool,
    inputs: &Values,
    expected: &Values,
) -> Result<BuildRun, BenchError> {
    let compiled = compile(&case.source(), desc, macc).map_err(|error| BenchError::CompileFailure {
        case: case.name.clone(),
        build: label(macc),
        error,
    })?;
    run_compiled(case, compiled, desc, inputs, expected)
}

/// Simulate an existing build of `case` on `inputs` and check it.
pub fn run_compiled(
    case: &BenchCase,
    compiled: Compiled,
    desc: &MachineDesc,
    inputs: &Values,
    expected: &Values,
) -> Result<BuildRun, BenchError> {
    let build = label(compiled.report.rewritten() > 0);
    let mut image = compiled.image.clone();
    for (name, words) in inputs {
        image.write(&symbol_name(name), words);
    }
    let state = compiled.simulate(&image, desc).map_err(|error| BenchError::SimFailure {
        case: case.name.clone(),
        build,
        error,
    })?;
    let run = BuildRun { report: cycle_report(&state), compiled, state };
    for (var, want) in expected {
        let got = run.value(var).unwrap_or_default();
        if got != want.as_slice() {
            return Err(BenchError::OracleMismatch {
                case: case.name.clone(),
                build,
                var: var.clone(),
                got: got.to_vec(),
                want: want.clone(),
            });
        }
    }
    Ok(run)
}

fn speedup(base: u64, opt: u64) -> f64 {
    if opt == 0 {
        return 1.0;
    }
    (base as f64 / opt as f64 * 100.0).round() / 100.0
}

/// Compare two builds of a case; `run_case` is baseline against MACC.
pub fn compare_builds(
    case: &BenchCase,
    desc: &MachineDesc,
    seed: u64,
    base_macc: bool,
    opt_macc: bool,
) -> Result<BenchRow, BenchError> {
    let inputs = case.kernel.inputs(seed);
    let expected = oracle_eval(case, &inputs);
    let base = run_build(case, desc, base_macc, &inputs, &expected)?;
    let opt = run_build(case, desc, opt_macc, &inputs, &expected)?;
    let s = speedup(base.report.total_cycles, opt.report.total_cycles);
    Ok(BenchRow {
        name: case.name.clone(),
        baseline_cycles: base.report.total_cycles,
        optimized_cycles: opt.report.total_cycles,
        speedup: s,
        baseline_loop_cycles: base.loop_cycles(),
        optimized_loop_cycles: opt.loop_cycles(),
        oracle_match: true,
        within_tolerance: s >= case.min_speedup && case.max_speedup.is_none_or(|m| s <= m),
        paper: case.paper.clone(),
    })
}

pub fn run_case(case: &BenchCase, desc: &MachineDesc, seed: u64) -> Result<BenchRow, BenchError> {
    compare_builds(case, desc, seed, false, true)
}

/// Run every case of a suite, rows in parallel; row order follows the suite.
pub fn run_suite(suite: &str, seed: u64, desc: &MachineDesc) -> Result<BenchReport, BenchError> {
    let cases = suite_cases(suite)?;
    let results: Vec<Result<BenchRow, BenchError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cases.iter().map(|c| scope.spawn(move || run_case(c, desc, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("bench row panicked")).collect()
    });
    let mut report = BenchReport { suite: suite.into(), seed, rows: Vec::new(), failures: Vec::new(), pass: true };
    for (c, r) in cases.iter().zip(results) {
        match r {
            Ok(row) => {
                report.pass &= row.within_tolerance;
                report.rows.push(row);
            }
            Err(e) => {
                report.pass = false;
                report.failures.push(RowFailure { name: c.name.clone(), error: e.to_string() });
            }
        }
    }
    Ok(report)
}

impl BenchReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Suite `{}`, seed {}\n", self.suite, self.seed);
        s.push_str("| algorithm | baseline cycles | optimized cycles | speedup | loop body (baseline / optimized) | paper | check |\n");
        s.push_str("|---|---:|---:|---:|---:|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.2} | {} / {} | {} / {} = {:.2} | {} |",
                r.name,
                r.baseline_cycles,
                r.optimized_cycles,
                r.speedup,
                r.baseline_loop_cycles,
                r.optimized_loop_cycles,
                r.paper.baseline_cycles,
                r.paper.optimized_cycles,
                r.paper.speedup,
                if r.within_tolerance { "pass" } else { "FAIL" },
            );
        }
        for f in &self.failures {
            let _ = writeln!(s, "| {} | - | - | - | - | - | FAIL: {} |", f.name, f.error);
        }
        let _ = writeln!(s, "\n{}", if self.pass { "all rows pass" } else { "suite FAILED" });
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
