//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic;
use std::time::{Duration, Instant};

use bwcc::bench::{run_build, run_case, run_compiled, suite_cases, BenchCase, Kernel, Values, DEFAULT_SEED};
use bwcc::codegen::{verify_allocation, verify_bundles, CgirFunction};
use bwcc::driver::{compile, Compiled};
use bwcc::isa::{OpcodeClass, Operand, RegClass};
use bwcc::maccpass::Mode;
use bwcc::machine::MachineDesc;
use bwcc::sim::{self, cycle_report, parse_assembly, AsmProgram, SimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn desc() -> MachineDesc {
    MachineDesc::default_bw()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table1() -> Vec<BenchCase> {
    suite_cases("table1").unwrap()
}

fn c1_dot_loop_cycles() -> Outcome {
    let start = Instant::now();
    let case = &table1()[0];
    let inputs = case.kernel.inputs(DEFAULT_SEED);
    let expected = case.kernel.oracle(&inputs);
    let base = run_build(case, &desc(), false, &inputs, &expected).map_err(|e| e.to_string())?;
    let opt = run_build(case, &desc(), true, &inputs, &expected).map_err(|e| e.to_string())?;
    let (b, o) = (base.loop_cycles(), opt.loop_cycles());
    ensure(b == 17 * 1024, || format!("baseline loop body {b} cycles, want 17408"))?;
    ensure(o == 15 * 1024 / 8, || format!("optimized loop body {o} cycles, want 1920"))?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!("baseline {b}, optimized {o} ({took:.2?})"))
}

fn c2_dot_speedup() -> Outcome {
    let row = run_case(&table1()[0], &desc(), DEFAULT_SEED).map_err(|e| e.to_string())?;
    ensure((8.0..=9.2).contains(&row.speedup), || format!("speedup {:.2} outside [8.0, 9.2]", row.speedup))?;
    Ok(format!("{} / {} = {:.2}", row.baseline_cycles, row.optimized_cycles, row.speedup))
}

fn c3_other_kernels() -> Outcome {
    let mut notes = Vec::new();
    for case in &table1()[1..] {
        let start = Instant::now();
        let row = run_case(case, &desc(), DEFAULT_SEED).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        ensure(row.oracle_match, || format!("{}: oracle mismatch", case.name))?;
        ensure(row.speedup >= 4.0, || format!("{}: speedup {:.2} < 4.0", case.name, row.speedup))?;
        if matches!(case.kernel, Kernel::MatMul { .. }) {
            ensure(took < Duration::from_secs(60), || format!("matmul took {took:?}"))?;
        }
        notes.push(format!("{} {:.2}", case.name, row.speedup));
    }
    Ok(notes.join(", "))
}

const SIZES: [u32; 7] = [0, 1, 7, 8, 9, 1024, 1027];

fn families(n: u32) -> [Kernel; 4] {
    [
        Kernel::DotProduct { n },
        Kernel::Convolution { n },
        Kernel::Fir { outputs: 8, taps: n },
        Kernel::MatMul { rows: 2, inner: n, cols: 3 },
    ]
}

fn c4_semantics_preserved() -> Outcome {
    let d = desc();
    let checks: Result<Vec<usize>, String> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..4)
            .map(|family| {
                let d = &d;
                scope.spawn(move || -> Result<usize, String> {
                    let mut checks = 0;
                    for n in SIZES {
                        let kernel = families(n)[family];
                        let case = BenchCase::adhoc(&format!("{kernel:?}"), kernel);
                        let base = compile(&case.source(), d, false).map_err(|e| e.to_string())?;
                        let opt = compile(&case.source(), d, true).map_err(|e| e.to_string())?;
                        for seed in 0..100u64 {
                            let inputs = kernel.inputs(seed);
                            let expected = kernel.oracle(&inputs);
                            for build in [&base, &opt] {
                                run_compiled(&case, build.clone(), d, &inputs, &expected)
                                    .map_err(|e| format!("seed {seed}: {e}"))?;
                            }
                            checks += 1;
                        }
                    }
                    Ok(checks)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let total: usize = checks?.iter().sum();
    Ok(format!("{total} input sets, baseline = optimized = oracle"))
}

fn macc_regs(f: &CgirFunction) -> BTreeSet<u8> {
    let m = f.materialized();
    m.ops()
        .flat_map(|op| op.operands.iter())
        .filter_map(|o| match o {
            Operand::Reg(r) if r.reg.class == RegClass::Macc => r.reg.phys(),
            _ => None,
        })
        .collect()
}

fn macc_ops(f: &CgirFunction) -> usize {
    f.ops().filter(|o| matches!(o.class, OpcodeClass::Macc | OpcodeClass::MaccInit | OpcodeClass::MaccRead)).count()
}

/// `k` accumulators over the arrays a, b, c.
fn accumulators(k: usize) -> (String, Vec<(usize, usize)>) {
    let pairs = [(0, 1), (0, 2), (1, 2), (0, 0), (2, 2)];
    let arrays = ["a", "b", "c"];
    let mut src = String::from("int a[64]; int b[64]; int c[64];");
    for s in 0..k {
        src.push_str(&format!(" int s{s};"));
    }
    src.push_str(" int i;\nfor (i = 0; i < 64; i++) {");
    for (s, (x, y)) in pairs[..k].iter().enumerate() {
        src.push_str(&format!(" s{s} += {}[i] * {}[i];", arrays[*x], arrays[*y]));
    }
    src.push_str(" }\n");
    (src, pairs[..k].to_vec())
}

/// Simulate with random inputs and compare every accumulator with a direct sum.
fn check_accumulators(c: &Compiled, pairs: &[(usize, usize)], seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<i32>> = (0..3).map(|_| (0..64).map(|_| rng.gen()).collect()).collect();
    let mut img = c.image.clone();
    for (name, words) in ["__a", "__b", "__c"].iter().zip(&data) {
        img.write(name, words);
    }
    let s = c.simulate(&img, &desc()).map_err(|e| e.to_string())?;
    for (k, (x, y)) in pairs.iter().enumerate() {
        let want = data[*x].iter().zip(&data[*y]).fold(0i32, |acc, (p, q)| acc.wrapping_add(p.wrapping_mul(*q)));
        let at = img.symbol(&format!("__s{k}")).unwrap().addr as usize;
        ensure(s.memory[at] == want, || format!("s{k} = {}, want {want}", s.memory[at]))?;
    }
    Ok(())
}

fn c5_resources() -> Outcome {
    let d = desc();
    let (src5, pairs5) = accumulators(5);
    let five = compile(&src5, &d, true).map_err(|e| e.to_string())?;
    ensure(five.report.loops[0].mode == Mode::None, || format!("5 accumulators: {:?}", five.report.loops[0]))?;
    ensure(macc_ops(&five.function) == 0 && !five.asm.contains("MACC"), || "5 accumulators emit MACC ops".into())?;
    check_accumulators(&five, &pairs5, 5)?;

    let (src3, pairs3) = accumulators(3);
    let three = compile(&src3, &d, true).map_err(|e| e.to_string())?;
    let l = &three.report.loops[0];
    ensure(l.mode == Mode::SimdSingleWord && l.macc_regs_used == 3, || format!("3 accumulators: {l:?}"))?;
    let regs3 = macc_regs(&three.function);
    ensure(regs3 == BTreeSet::from([0, 1, 2]), || format!("3 accumulators use MACC{regs3:?}"))?;
    check_accumulators(&three, &pairs3, 3)?;

    let (src1, pairs1) = accumulators(1);
    let one = compile(&src1, &d, true).map_err(|e| e.to_string())?;
    let l = &one.report.loops[0];
    ensure(l.mode == Mode::SimdDoubleWord, || format!("1 accumulator: {l:?}"))?;
    let regs1 = macc_regs(&one.function);
    ensure(regs1 == BTreeSet::from([0, 1]), || format!("1 accumulator uses MACC{regs1:?}"))?;
    check_accumulators(&one, &pairs1, 1)?;
    Ok("5 -> no MACC, 3 -> single-word MACC0..2, 1 -> double-word MACC0/MACC1".into())
}

fn c6_golden_structure() -> Outcome {
    use OpcodeClass::*;
    let c = compile(&table1()[0].source(), &desc(), true).map_err(|e| e.to_string())?;
    let f = &c.function;
    let inner = f.innermost_labels();
    ensure(inner.len() == 1, || format!("innermost loops {inner:?}"))?;
    let at = f.block(inner[0]).unwrap();
    let shape: Vec<BTreeSet<OpcodeClass>> =
        f.blocks[at].bundles.iter().map(|b| b.ops.iter().map(|o| o.class).collect()).collect();
    let want: Vec<BTreeSet<OpcodeClass>> =
        [vec![LoadDual, MoveImm], vec![LoadDual, Add], vec![Macc], vec![BranchCond, Macc]]
            .into_iter()
            .map(|v| v.into_iter().collect())
            .collect();
    ensure(shape == want, || format!("loop body {shape:?}"))?;
    let sizes: Vec<usize> = f.blocks[at].bundles.iter().map(|b| b.ops.len()).collect();
    ensure(sizes == [3, 2, 1, 2], || format!("bundle sizes {sizes:?}"))?;
    let epilogue = f.blocks.get(at + 1).ok_or("no epilogue block")?;
    let count = |class| epilogue.ops().filter(|o| o.class == class).count();
    ensure(count(MaccRead) == 2, || format!("{} macc_read", count(MaccRead)))?;
    ensure(count(Add) >= 1 && count(Sigma) == 1 && count(StoreWord) == 1, || format!("epilogue {epilogue:?}"))?;
    ensure(c.asm.contains("xyztMACC0+=") && c.asm.contains("=sigma xyzt"), || "listing text".into())?;
    Ok("(load_dual|imm|imm) (load_dual|add) (macc) (branch|macc); epilogue macc_read x2, add, sigma, store".into())
}

fn corpus() -> Vec<String> {
    let mut out: Vec<String> = table1().iter().map(BenchCase::source).collect();
    for n in [0, 1, 7, 9, 1027] {
        out.extend(families(n).iter().map(Kernel::source));
    }
    for k in 1..=5 {
        out.push(accumulators(k).0);
    }
    out.push(
        "int a[64]; int n = 10; int m; int s; int i; int j; m = n;\n\
         for (i = 0; i < m; i++) { for (j = i; j < m; j++) { s += a[i * 6 + j] * a[j]; } }\n"
            .into(),
    );
    out.push("int x[40]; int y[40]; int i; for (i = 1; i < 40; i += 3) { y[i] = x[i - 1] * 3 + y[i]; }\n".into());
    out
}

fn c7_static_verifier() -> Outcome {
    let d = desc();
    let mut programs = 0;
    for src in corpus() {
        for macc in [false, true] {
            let c = compile(&src, &d, macc).map_err(|e| format!("{e}\n{src}"))?;
            if let Err(v) = verify_allocation(&c.function) {
                return Err(format!("allocation: {v:?}\n{src}"));
            }
            let bundles = verify_bundles(&c.function.materialized(), &d);
            ensure(bundles.is_empty(), || format!("bundles: {bundles:?}\n{src}"))?;
            programs += 1;
        }
    }
    Ok(format!("{programs} programs clean"))
}

fn c8_round_trip() -> Outcome {
    let d = desc();
    let mut runs = 0;
    for case in table1() {
        let inputs: Values = case.kernel.inputs(DEFAULT_SEED);
        for macc in [false, true] {
            let c = compile(&case.source(), &d, macc).map_err(|e| e.to_string())?;
            let mut img = c.image.clone();
            for (name, words) in &inputs {
                img.write(&format!("__{name}"), words);
            }
            let parsed = parse_assembly(&c.asm, &d)
                .and_then(|p| p.link(&img.addresses()))
                .map_err(|e| format!("{}: {e}", case.name))?;
            let direct = AsmProgram::from_cgir(&c.function).map_err(|e| e.to_string())?;
            let a =
                sim::run(&parsed, SimState::from_image(&d, &img), &d, sim::DEFAULT_FUEL).map_err(|e| e.to_string())?;
            let b =
                sim::run(&direct, SimState::from_image(&d, &img), &d, sim::DEFAULT_FUEL).map_err(|e| e.to_string())?;
            ensure(a.memory == b.memory, || format!("{}: memory differs", case.name))?;
            ensure(cycle_report(&a) == cycle_report(&b), || format!("{}: cycles differ", case.name))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} programs: identical memory and cycles"))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "dot-product loop-body cycles", c1_dot_loop_cycles),
        (2, "dot-product end-to-end speedup", c2_dot_speedup),
        (3, "convolution, FIR and matmul speedups", c3_other_kernels),
        (4, "semantics preservation on random inputs", c4_semantics_preserved),
        (5, "MACC resource constraints", c5_resources),
        (6, "optimized dot-product structure", c6_golden_structure),
        (7, "static verification of the corpus", c7_static_verifier),
        (8, "assembly round trip", c8_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, title, check) in criteria {
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS  {title}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL  {title}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria pass");
}
