use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::frontend::compile_to_ir;
use crate::isa::{ClusterSet, OpcodeClass, Operand, Placement, Reg, RegClass, RegRef};
use crate::maccpass::run_macc_pass;

fn desc() -> MachineDesc {
    MachineDesc::default_bw()
}

const DOT: &str = "int a[1024]; int b[1024]; int sum = 0; int i;\n\
                   for (i = 0; i < 1024; i++) { sum += a[i] * b[i]; }";

fn build(src: &str, macc: bool) -> CgirFunction {
    let ir = compile_to_ir(src).unwrap();
    let ir = if macc { run_macc_pass(&ir, &desc()).0 } else { ir };
    generate(&ir, &desc()).unwrap()
}

fn classes(b: &Bundle) -> Vec<OpcodeClass> {
    b.ops.iter().map(|o| o.class).collect()
}

fn loop_block(f: &CgirFunction) -> &Block {
    let label = f.innermost_labels()[0];
    &f.blocks[f.block(label).unwrap()]
}

fn r(reg: Reg) -> Operand {
    Operand::Reg(RegRef::whole(reg))
}

fn single_block(ops: Vec<Op>) -> CgirFunction {
    CgirFunction {
        name: "t".into(),
        blocks: vec![Block {
            label: "_Lt_0_0".into(),
            depth: 0,
            bundles: ops.into_iter().map(|o| Bundle { ops: vec![o] }).collect(),
        }],
        symbols: SymbolTable::default(),
        assignment: BTreeMap::new(),
        loops: Vec::new(),
        next_vreg: 100,
    }
}

fn add(d: u32, a: u32, b: u32) -> Op {
    let g = |n| r(Reg::virt(RegClass::Gpr, n));
    Op::new(OpcodeClass::Add, Placement::Scalar, vec![g(d), g(a), g(b)])
}

#[test]
fn baseline_loop_body_structure() {
    use OpcodeClass::*;
    let f = build(DOT, false);
    let body = loop_block(&f);
    let shape: Vec<Vec<OpcodeClass>> = body.bundles.iter().map(classes).collect();
    assert_eq!(shape, vec![vec![LoadWord, MoveImm, MoveImm], vec![LoadWord, Add], vec![Mul], vec![BranchCond, Add],]);
}

#[test]
fn optimized_loop_body_structure() {
    use OpcodeClass::*;
    let f = build(DOT, true);
    let body = loop_block(&f);
    let shape: Vec<Vec<OpcodeClass>> = body.bundles.iter().map(classes).collect();
    assert_eq!(shape, vec![vec![LoadDual, MoveImm, MoveImm], vec![LoadDual, Add], vec![Macc], vec![BranchCond, Macc],]);
    let all = desc().all_clusters();
    assert_eq!(body.bundles[0].ops[0].clusters, all);
    assert_eq!(body.bundles[1].ops[1].clusters, ClusterSet::single(0));
    assert_eq!(body.bundles[2].ops[0].clusters, all);
}

#[test]
fn double_word_accumulators_use_macc0_and_macc1() {
    let f = build(DOT, true);
    let text = emit_assembly(&f, &desc());
    assert!(text.contains("xyztMACC0+="), "{text}");
    assert!(text.contains("xyztMACC1+="), "{text}");
    assert!(text.contains("=sigma xyzt"), "{text}");
    assert!(text.contains("=[u") && text.contains("+=8,1]"), "{text}");
}

#[test]
fn two_dependent_adds_take_two_bundles() {
    let f = single_block(vec![add(1, 0, 0), add(2, 1, 1)]);
    let f = schedule_bundles(assign_clusters(f, &desc()), &desc());
    assert_eq!(f.blocks[0].bundles.len(), 2);
}

#[test]
fn independent_adds_limited_by_slots() {
    let d = desc();
    let n = 5;
    let f = single_block((0..n).map(|k| add(10 + k, 0, 1)).collect());
    let f = schedule_bundles(assign_clusters(f, &d), &d);
    let alu_slots = d.opcode(OpcodeClass::Add).slots.len() as u32;
    assert_eq!(f.blocks[0].bundles.len() as u32, n.div_ceil(alu_slots));
}

#[test]
fn empty_program_emits_entry_label_only() {
    let ir = compile_to_ir("int x;").unwrap();
    let f = generate(&ir, &desc()).unwrap();
    assert_eq!(emit_assembly(&f, &desc()), "_Lt_0_0:\n");
}

#[test]
fn empty_loop_body_has_only_control() {
    use OpcodeClass::*;
    let f = build("int i; for (i = 0; i < 10; i++) { }", false);
    let body = loop_block(&f);
    let ops: Vec<OpcodeClass> = body.ops().map(|o| o.class).collect();
    let mut sorted = ops.clone();
    sorted.sort();
    assert_eq!(sorted, vec![MoveImm, MoveImm, Add, BranchCond]);
}

#[test]
fn scalar_body_lowers_to_load_load_mul_add() {
    use OpcodeClass::*;
    let ir = compile_to_ir(DOT).unwrap();
    let f = annotate(&ir, &desc()).unwrap();
    let label = f.innermost_labels()[0];
    let body = &f.blocks[f.block(label).unwrap()];
    let ops: Vec<OpcodeClass> = body.ops().map(|o| o.class).collect();
    assert_eq!(ops, vec![LoadWord, LoadWord, Mul, Add, MoveImm, MoveImm, Add, BranchCond]);
}

#[test]
fn emission_is_deterministic() {
    let a = emit_assembly(&build(DOT, true), &desc());
    let b = emit_assembly(&build(DOT, true), &desc());
    assert_eq!(a, b);
}

#[test]
fn no_cross_block_registers_means_no_global_assignment() {
    let zero = Op::new(OpcodeClass::MoveImm, Placement::Scalar, vec![r(Reg::virt(RegClass::Gpr, 0)), Operand::Imm(3)]);
    let f = single_block(vec![zero, add(1, 0, 0), add(2, 1, 1)]);
    let f = schedule_bundles(assign_clusters(f, &desc()), &desc());
    let g = allocate_global(f.clone(), &desc()).unwrap();
    assert!(g.assignment.is_empty());
    assert_eq!(g, f);
}

#[test]
fn interfering_cross_block_registers_get_distinct_registers() {
    let f =
        build("int a[8]; int s = 0; int t = 0; int i; for (i = 0; i < 8; i++) { s = s + a[i]; t = t - a[i]; }", false);
    let graph = interference(&f);
    let global: Vec<LiveRange> = live_ranges(&f).into_iter().filter(|l| l.spans_block_boundary).collect();
    assert!(global.len() >= 2);
    for x in &global {
        for y in &global {
            if x.reg != y.reg && graph[&x.reg].contains(&y.reg) {
                assert_ne!(f.assignment[&x.reg], f.assignment[&y.reg]);
            }
        }
    }
    assert!(verify_allocation(&f).is_ok());
}

#[test]
fn corrupted_assignment_is_reported() {
    let f = single_block(vec![add(1, 0, 0), add(2, 0, 0), add(3, 1, 2)]);
    let f = schedule_bundles(assign_clusters(f, &desc()), &desc());
    let f = allocate_local(allocate_global(f, &desc()).unwrap(), &desc()).unwrap();
    assert!(verify_allocation(&f).is_ok());
    let mut bad = f.clone();
    let v1 = Reg::virt(RegClass::Gpr, 1);
    let v2 = Reg::virt(RegClass::Gpr, 2);
    bad.assignment.insert(v1, Reg::gpr(5));
    bad.assignment.insert(v2, Reg::gpr(5));
    let errs = verify_allocation(&bad).unwrap_err();
    assert_eq!(errs.len(), 1, "{errs:?}");
    assert!(matches!(errs[0], AllocViolation::SharedRegister { .. }));
}

#[test]
fn macc_on_general_register_is_reported() {
    let op = Op::new(OpcodeClass::Macc, Placement::Vector, vec![r(Reg::gpr(3)), r(Reg::gpr(4)), r(Reg::gpr(5))]);
    let f = assign_clusters(single_block(vec![op]), &desc());
    let errs = verify_allocation(&f).unwrap_err();
    assert_eq!(errs.len(), 1);
    assert!(errs[0].to_string().contains("MACC op requires MACC register"));
}

#[test]
fn corpus_passes_static_verification() {
    let corpus = [
        DOT,
        "int x[40]; int h[8]; int y[32]; int acc; int n; int i;\n\
         for (n = 0; n < 32; n++) { acc = 0; for (i = 0; i < 8; i++) { acc += h[i] * x[n + i]; } y[n] = acc; }",
        "int a[16]; int b[16]; int c[16]; int p; int q; int r; int i;\n\
         for (i = 0; i < 16; i++) { p += a[i]*b[i]; q += b[i]*c[i]; r += c[i]*a[i]; }",
        "int a[64]; int n = 10; int m; int s; int i; int j; m = n;\n\
         for (i = 0; i < m; i++) { for (j = i; j < m; j++) { s += a[i * 6 + j] * a[j]; } }",
    ];
    for src in corpus {
        for macc in [false, true] {
            let f = build(src, macc);
            assert!(verify_allocation(&f).is_ok(), "{src}");
            assert!(verify_bundles(&f.materialized(), &desc()).is_empty(), "{src}");
            assert!(verify_bundles(&f, &desc()).is_empty(), "{src}");
            assert!(!f.materialized().has_virtual_regs());
        }
    }
}

#[test]
fn allocation_overflow_without_spilling() {
    let text = crate::machine::DEFAULT_DESCRIPTION.replace("general 64", "general 4");
    let small = crate::machine::load_machine_description(&text).unwrap();
    let ops: Vec<Op> = (1..=6).map(|k| add(k, 0, 0)).chain([add(20, 1, 2), add(21, 3, 4), add(22, 5, 6)]).collect();
    let f = schedule_bundles(assign_clusters(single_block(ops), &small), &small);
    let f = allocate_global(f, &small).unwrap();
    assert!(matches!(allocate_local(f, &small), Err(CodegenError::AllocationOverflow(_))));
}

proptest! {
    /// Random straight-line blocks with bounded pressure always allocate cleanly.
    #[test]
    fn random_blocks_allocate(spec in prop::collection::vec((0usize..1000, 0usize..1000, 0u8..3), 1..120)) {
        let d = desc();
        let mut ops = Vec::new();
        let mut defined: Vec<u32> = vec![0];
        let g = |n| r(Reg::virt(RegClass::Gpr, n));
        ops.push(Op::new(OpcodeClass::MoveImm, Placement::Scalar, vec![g(0), Operand::Imm(1)]));
        for (k, (a, b, kind)) in spec.into_iter().enumerate() {
            let window = &defined[defined.len().saturating_sub(40)..];
            let x = window[a % window.len()];
            let y = window[b % window.len()];
            let dst = k as u32 + 1;
            let class = [OpcodeClass::Add, OpcodeClass::Sub, OpcodeClass::Mul][kind as usize];
            ops.push(Op::new(class, Placement::Scalar, vec![g(dst), g(x), g(y)]));
            defined.push(dst);
        }
        let f = schedule_bundles(assign_clusters(single_block(ops), &d), &d);
        let f = allocate_local(allocate_global(f, &d).unwrap(), &d).unwrap();
        prop_assert!(verify_allocation(&f).is_ok());
        prop_assert!(verify_bundles(&f.materialized(), &d).is_empty());
    }
}
