use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::driver::compile;

fn desc() -> MachineDesc {
    MachineDesc::default_bw()
}

const PAPER_BASELINE: &str = "\
_Lt_0_3586:
xr11=[u5+=1,0]                // a
||xr13=1
||xr14=1023
xr10=[u6+=1,0]                // b
||xr15=r15+r13
xr11=r11*r10
.code_align 4
If xr15!=r14 B _Lt_0_3586
|| xr14=r14+ r11
_Lt_0_2050:
u6=__sum
[u6+0,0]=xr14
";

const PAPER_OPTIMIZED: &str = "\
_Lt_0_2562:
xyztr13=0
xyztMACC0=r13
xyztMACC1=r13
_Lt_0_770:
xyztr19:18=[u5+=8,1]          // a
||xr17=8
||xr16=1023

xyztr21:20=[u6+=8,1]           // b
||xr15=r15+r17
xyztMACC0+=r19*r21
.code_align 4
If xr16>=r15 B _Lt_0_770
||xyztMACC1+=r18*r20
_Lt_0_1538:
u6=__sum
||xyztr8=MACC0
xyztr9=MACC1
xyztr8=r8+r9
xr10=sigma xyztr8
[u6+0,0]=xr10
";

fn parse(text: &str) -> AsmProgram {
    parse_assembly(text, &desc()).unwrap()
}

fn run_text(text: &str, memory: Vec<i32>) -> Result<SimState, SimError> {
    let d = desc();
    run(&parse(text), SimState::new(&d, memory), &d, DEFAULT_FUEL)
}

#[test]
fn paper_optimized_listing_parses() {
    let p = parse(PAPER_OPTIMIZED);
    assert_eq!(p.labels.len(), 3);
    assert_eq!(p.block_len("_Lt_0_770"), Some(4));
    assert_eq!(p.bundles[p.label("_Lt_0_770").unwrap() + 3][0].class, OpcodeClass::BranchCond);
}

#[test]
fn paper_baseline_listing_parses() {
    let p = parse(PAPER_BASELINE);
    assert_eq!(p.labels.len(), 2);
    assert_eq!(p.block_len("_Lt_0_3586"), Some(4));
    let classes: Vec<OpcodeClass> = p.bundles[3].iter().map(|o| o.class).collect();
    assert_eq!(classes, vec![OpcodeClass::BranchCond, OpcodeClass::Add]);
}

#[test]
fn paper_optimized_listing_runs() {
    // a at 0, b at 1024, sum at 2048; the listing expects u5 and u6 preset.
    let d = desc();
    let mut mem = vec![0; 2049];
    for i in 0..1024 {
        mem[i] = i as i32 * 7 - 3000;
        mem[1024 + i] = 11 - i as i32 * 5;
    }
    let expected = (0..1024).fold(0i32, |s, i| s.wrapping_add(mem[i].wrapping_mul(mem[1024 + i])));
    let p = parse(PAPER_OPTIMIZED).link(&BTreeMap::from([("__sum".to_string(), 2048)])).unwrap();
    let mut init = SimState::new(&d, mem);
    init.addr[5] = 0;
    init.addr[6] = 1024;
    let s = run(&p, init, &d, DEFAULT_FUEL).unwrap();
    assert_eq!(s.memory[2048], expected);
    let r = cycle_report(&s);
    assert_eq!(r.label("_Lt_0_770"), Some(15 * 1024 / 8));
}

#[test]
fn missing_label_is_reported() {
    let err = parse_assembly(".code_align 4\nIf xr0==r1 B nowhere\n", &desc()).unwrap_err();
    assert_eq!(err, SimError::UndefinedLabel("nowhere".into()));
}

#[test]
fn unbound_symbol_is_reported() {
    let err = parse("u1=__nothing\n").link(&BTreeMap::new()).unwrap_err();
    assert_eq!(err, SimError::UndefinedSymbol("__nothing".into()));
}

#[test]
fn syntax_errors_carry_line_numbers() {
    let err = parse_assembly("L:\nxr1=r2+r3\nxr1=r2 ?? r3\n", &desc()).unwrap_err();
    assert!(matches!(err, SimError::AsmSyntaxError { line: 3, .. }), "{err:?}");
    let err = parse_assembly("xr70=1\n", &desc()).unwrap_err();
    assert!(matches!(err, SimError::AsmSyntaxError { line: 1, .. }), "{err:?}");
    let err = parse_assembly("L:\n||xr1=1\n", &desc()).unwrap_err();
    assert!(matches!(err, SimError::AsmSyntaxError { line: 2, .. }), "{err:?}");
}

#[test]
fn runaway_loop_runs_out_of_fuel() {
    let d = desc();
    let p = parse("L:\n.code_align 4\nIf xr0==r0 B L\n");
    assert_eq!(run(&p, SimState::new(&d, vec![]), &d, 1000), Err(SimError::OutOfFuel(1000)));
}

#[test]
fn out_of_range_access_is_an_error() {
    let err = run_text("u0=10\nxr1=[u0+0,0]\n", vec![0; 10]).unwrap_err();
    assert_eq!(err, SimError::MemoryOutOfRange { addr: 10, size: 10 });
    let err = run_text("u0=0\nxyztr3:2=[u0+=8,1]\n", vec![0; 7]).unwrap_err();
    assert!(matches!(err, SimError::MemoryOutOfRange { .. }));
}

#[test]
fn slot_conflict_is_rejected_before_running() {
    let err = run_text("xr1=r2+r3\n||xr4=r5+r6\n", vec![]).unwrap_err();
    assert_eq!(err, SimError::DivergentSlotUse { bundle: 0, op: "add".into() });
    // Different clusters have their own slots.
    assert!(run_text("xr1=r2+r3\n||yr4=r5+r6\n", vec![]).is_ok());
}

#[test]
fn empty_program_costs_nothing() {
    let s = run_text("", vec![]).unwrap();
    assert_eq!(cycle_report(&s), CycleReport::default());
    let s = run_text("_Lt_0_0:\n", vec![]).unwrap();
    assert_eq!(cycle_report(&s).total_cycles, 0);
}

#[test]
fn bundles_before_first_label_are_charged_to_entry() {
    let s = run_text("xr1=5\nL:\nxr2=r1*r1\n", vec![]).unwrap();
    let r = cycle_report(&s);
    assert_eq!(r.label(ENTRY_LABEL), Some(1));
    assert_eq!(r.label("L"), Some(4));
    assert_eq!(s.gpr[0][2], 25);
}

#[test]
fn parallel_reads_swap_registers() {
    let s = run_text("xr1=7\n||xr2=9\nxr1=r2\n||xr2=r1\n", vec![]);
    // move_reg has a single alu slot, so the swap needs add with r0 = 0.
    assert!(matches!(s, Err(SimError::DivergentSlotUse { .. })));
    let s = run_text("xr1=7\n||xr2=9\nxr1=r2+r0\n||xr2=r1*r3\n||xr3=1\n", vec![]).unwrap();
    assert_eq!((s.gpr[0][1], s.gpr[0][2], s.gpr[0][3]), (9, 0, 1));
}

#[test]
fn branch_bundle_pays_penalty_taken_or_not() {
    let s = run_text("xr1=1\n.code_align 4\nIf xr1==r0 B L\nL:\n", vec![]).unwrap();
    assert_eq!(s.cycles, 1 + 5);
}

#[test]
fn image_text_round_trip() {
    let mut img = DataImage::parse("size 6\nsymbol __a 0 4\nsymbol __s 4 1\ndata 1 -5 0 4294967295\n").unwrap();
    assert_eq!(img.read("__a"), Some(&[0, -5, 0, -1][..]));
    assert!(img.write("__s", &[9]));
    assert!(!img.write("__s", &[1, 2]));
    assert_eq!(DataImage::parse(&img.to_text()).unwrap(), img);
    assert!(matches!(DataImage::parse("data 0 1\n"), Err(SimError::ImageSyntax { line: 1, .. })));
    assert!(matches!(DataImage::parse("size 2\nbogus\n"), Err(SimError::ImageSyntax { line: 2, .. })));
}

#[test]
fn zero_trip_dot_product_leaves_sum() {
    let d = desc();
    let c =
        compile("int a[8]; int b[8]; int sum = 42; int i; for (i = 0; i < 0; i++) { sum += a[i] * b[i]; }", &d, true)
            .unwrap();
    let s = c.simulate(&c.image, &d).unwrap();
    let at = c.image.symbol("__sum").unwrap().addr as usize;
    assert_eq!(s.memory[at], 42);
    assert!(c.function.innermost_labels().is_empty());
}

#[test]
fn runs_are_deterministic() {
    let d = desc();
    let c = compile("int a[20]; int b[20]; int sum; int i; for (i = 0; i < 20; i++) { sum += a[i] * b[i]; }", &d, true)
        .unwrap();
    let mut img = c.image.clone();
    img.write("__a", &(0..20).collect::<Vec<_>>());
    img.write("__b", &(0..20).map(|x| 3 - x).collect::<Vec<_>>());
    let a = c.simulate(&img, &d).unwrap();
    let b = c.simulate(&img, &d).unwrap();
    assert_eq!(a, b);
    assert_eq!(cycle_report(&a), cycle_report(&b));
}

fn state_with(gpr: &[i32], memory: Vec<i32>) -> SimState {
    let d = desc();
    let mut s = SimState::new(&d, memory);
    for (cl, regs) in s.gpr.iter_mut().enumerate() {
        for (n, r) in regs.iter_mut().enumerate().take(16) {
            *r = gpr[(cl * 16 + n) % gpr.len()];
        }
    }
    s
}

fn lanes() -> impl Strategy<Value = String> {
    (1u8..16).prop_map(|bits| {
        ["x", "y", "z", "t"].iter().enumerate().filter(|(i, _)| bits & (1 << i) != 0).map(|(_, c)| *c).collect()
    })
}

/// One op per slot class so any order is slot-legal; destinations distinct.
fn bundle_ops() -> impl Strategy<Value = Vec<String>> {
    (
        Just((0u32..8).collect::<Vec<_>>()).prop_shuffle(),
        prop::collection::vec(0u32..16, 6),
        prop::collection::vec(lanes(), 6),
        any::<i16>(),
        any::<bool>(),
    )
        .prop_map(|(dst, src, cl, imm, dist)| {
            vec![
                format!("{}r{}=r{}+r{}", cl[0], dst[0], src[0], src[1]),
                format!("{}r{}=r{}*r{}", cl[1], dst[1], src[2], src[3]),
                format!("{}r{}={imm}", cl[2], dst[2]),
                format!("{}r{}=-{}", cl[3], dst[3], src[4]),
                format!("{}MACC0+=r{}*r{}", cl[4], src[5], src[0]),
                format!("{}r{}=[u0+=1,{}]", cl[5], dst[4], u8::from(dist)),
                format!("u1=xr{}", src[1]),
            ]
        })
}

fn bundle_text(ops: &[String]) -> String {
    ops.iter().enumerate().map(|(i, o)| if i == 0 { format!("{o}\n") } else { format!("||{o}\n") }).collect()
}

proptest! {
    #[test]
    fn distributed_dual_load_is_eight_scalar_loads(
        mem in prop::collection::vec(any::<i32>(), 40),
        u in 0i32..=32,
        low in (0u8..31).prop_map(|n| n * 2),
    ) {
        let d = desc();
        let mut init = SimState::new(&d, mem);
        init.addr[3] = u;
        let simd = parse(&format!("xyztr{}:{low}=[u3+=8,1]\n", low + 1));
        let mut text = String::new();
        for (k, c) in ["x", "y", "z", "t"].iter().enumerate() {
            text.push_str(&format!("{c}r{low}=[u3+{},0]\n", 2 * k));
            text.push_str(&format!("{c}r{}=[u3+{},0]\n", low + 1, 2 * k + 1));
        }
        text.push_str(&format!("u3={}\n", u + 8));
        let scalar = parse(&text);
        let a = run(&simd, init.clone(), &d, DEFAULT_FUEL).unwrap();
        let b = run(&scalar, init, &d, DEFAULT_FUEL).unwrap();
        prop_assert!(a.same_data(&b));
    }

    #[test]
    fn sigma_is_the_wrapping_lane_sum(vals in prop::array::uniform4(any::<i32>()), n in 0u8..64, dst in 0u8..64) {
        let d = desc();
        let mut init = SimState::new(&d, vec![]);
        for (cl, v) in vals.iter().enumerate() {
            init.gpr[cl][n as usize] = *v;
        }
        let s = run(&parse(&format!("xr{dst}=sigma xyztr{n}\n")), init, &d, DEFAULT_FUEL).unwrap();
        let reference = vals[0].wrapping_add(vals[1]).wrapping_add(vals[2]).wrapping_add(vals[3]);
        prop_assert_eq!(s.gpr[0][dst as usize], reference);
    }

    #[test]
    fn bundle_order_does_not_matter(
        (ops, shuffled) in bundle_ops().prop_flat_map(|ops| (Just(ops.clone()), Just(ops).prop_shuffle())),
        regs in prop::collection::vec(any::<i32>(), 64),
        mem in prop::collection::vec(any::<i32>(), 8),
    ) {
        let d = desc();
        let a = run(&parse(&bundle_text(&ops)), state_with(&regs, mem.clone()), &d, DEFAULT_FUEL).unwrap();
        let b = run(&parse(&bundle_text(&shuffled)), state_with(&regs, mem), &d, DEFAULT_FUEL).unwrap();
        prop_assert!(a.same_data(&b));
        prop_assert_eq!(a.cycles, b.cycles);
    }

    #[test]
    fn cycles_add_up_over_the_trace(n in 0i32..40, macc in any::<bool>(), seed in any::<u32>()) {
        let d = desc();
        let src = format!("int a[40]; int b[40]; int sum; int i; for (i = 0; i < {n}; i++) {{ sum += a[i] * b[i]; }}");
        let c = compile(&src, &d, macc).unwrap();
        let mut img = c.image.clone();
        img.write("__a", &(0..40i32).map(|k| k.wrapping_mul(seed as i32)).collect::<Vec<_>>());
        let p = c.program().unwrap();
        let (s, trace) = run_traced(&p, SimState::from_image(&d, &img), &d, DEFAULT_FUEL).unwrap();
        let r = cycle_report(&s);
        prop_assert_eq!(trace.iter().map(|t| u64::from(t.cost)).sum::<u64>(), r.total_cycles);
        prop_assert_eq!(r.per_label.iter().map(|l| l.cycles).sum::<u64>(), r.total_cycles);
        for t in &trace {
            prop_assert_eq!(t.cost, bundle_cost(&p.bundles[t.pc], &d));
        }
        prop_assert_eq!(trace.len() as u64, r.bundles);
    }

    #[test]
    fn image_text_round_trips(words in prop::collection::vec(prop_oneof![Just(0i32), any::<i32>()], 0..80)) {
        let img = DataImage {
            symbols: vec![crate::codegen::Symbol { name: "__w".into(), addr: 0, len: words.len() as u32 }],
            words,
        };
        prop_assert_eq!(DataImage::parse(&img.to_text()).unwrap(), img);
    }
}
