use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::frontend::compile_to_ir;
use crate::frontend::interp::{run_ir, State};

fn desc() -> MachineDesc {
    MachineDesc::default_bw()
}

fn dot(n: u32) -> String {
    format!(
        "int a[{m}]; int b[{m}]; int sum = 0; int i;\n\
         for (i = 0; i < {n}; i++) {{ sum += a[i] * b[i]; }}",
        m = n.max(1)
    )
}

fn first_inner(ir: &LoopIr) -> LoopRef {
    innermost_loops(ir).remove(0)
}

/// Independent check of the four recognition conditions over every store.
fn oracle_matches(ir: &LoopIr, r: &LoopRef) -> Vec<NodeId> {
    let l = ir.loop_at(&r.path).unwrap();
    let mut out = Vec::new();
    for n in &l.body {
        let Node::Store(s) = n else { continue };
        // 1. the stored value is an addition
        let Expr::Add(x, y) = &s.value else { continue };
        let operands = [x.as_ref(), y.as_ref()];
        // 2. one operand is a multiplication, the other a plain operand
        let muls: Vec<&Expr> = operands.iter().copied().filter(|e| matches!(e, Expr::Mul(..))).collect();
        let others: Vec<&Expr> = operands.iter().copied().filter(|e| !matches!(e, Expr::Mul(..))).collect();
        if muls.len() != 1 || others.len() != 1 {
            continue;
        }
        // 3. the multiplication takes the two multiply inputs
        let Expr::Mul(_, _) = muls[0] else { continue };
        // 4. the sum is written back to the plain operand
        match others[0] {
            Expr::Load(p) if *p == s.target => out.push(s.id),
            _ => {}
        }
    }
    out
}

#[test]
fn dot_product_matches_once() {
    let ir = compile_to_ir(&dot(1024)).unwrap();
    let r = first_inner(&ir);
    let m = find_macc_patterns(&r, &ir);
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].accumulator, Place::Scalar("sum".into()));
    assert_eq!(m[0].mul_lhs, Expr::element("a", Expr::scalar("i")));
    assert_eq!(m[0].mul_rhs, Expr::element("b", Expr::scalar("i")));
}

#[test]
fn plain_product_is_not_an_accumulation() {
    let ir =
        compile_to_ir("int a[4]; int b[4]; int sum; int i; for (i = 0; i < 4; i++) { sum = a[i] * b[i]; }").unwrap();
    assert!(find_macc_patterns(&first_inner(&ir), &ir).is_empty());
}

#[test]
fn two_accumulators_agree_with_oracle() {
    let ir = compile_to_ir(
        "int a[8]; int b[8]; int c[8]; int s1; int s2; int t; int i;\n\
         for (i = 0; i < 8; i++) { s1 += a[i] * b[i]; s2 = a[i] * c[i] + s2; t = t + a[i]; s1 = s2 + a[i] * b[i]; }",
    )
    .unwrap();
    let r = first_inner(&ir);
    let found: Vec<NodeId> = find_macc_patterns(&r, &ir).iter().map(|m| m.store_node).collect();
    assert_eq!(found.len(), 2);
    assert_eq!(found, oracle_matches(&ir, &r));
}

#[test]
fn commuted_add_matches() {
    let ir =
        compile_to_ir("int a[4]; int b[4]; int s; int i; for (i = 0; i < 4; i++) { s = a[i] * b[i] + s; }").unwrap();
    let m = find_macc_patterns(&first_inner(&ir), &ir);
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].accumulator, Place::Scalar("s".into()));
}

fn fake_matches(k: usize) -> Vec<MaccMatch> {
    let ir = compile_to_ir(&dot(8)).unwrap();
    let r = first_inner(&ir);
    let m = find_macc_patterns(&r, &ir).remove(0);
    vec![m; k]
}

#[test]
fn resource_decisions() {
    let d = desc();
    let one = check_macc_resources(&fake_matches(1), &d);
    assert_eq!((one.mode, one.vector_factor, one.macc_regs_used), (Mode::SimdDoubleWord, 8, 2));
    let two = check_macc_resources(&fake_matches(2), &d);
    assert_eq!((two.mode, two.vector_factor, two.macc_regs_used), (Mode::SimdDoubleWord, 8, 4));
    let three = check_macc_resources(&fake_matches(3), &d);
    assert_eq!((three.mode, three.vector_factor, three.macc_regs_used), (Mode::SimdSingleWord, 4, 3));
    let four = check_macc_resources(&fake_matches(4), &d);
    assert_eq!((four.mode, four.macc_regs_used), (Mode::SimdSingleWord, 4));
    let five = check_macc_resources(&fake_matches(5), &d);
    assert_eq!(five.mode, Mode::None);
    assert!(five.matches_accepted.is_empty());
    assert_eq!(check_macc_resources(&[], &d).mode, Mode::None);
}

#[test]
fn two_cluster_factor() {
    let text = crate::machine::DEFAULT_DESCRIPTION.replace("names x y z t", "names x y");
    let d = crate::machine::load_machine_description(&text).unwrap();
    let one = check_macc_resources(&fake_matches(1), &d);
    assert_eq!(one.vector_factor, 4);
    let three = check_macc_resources(&fake_matches(3), &d);
    assert_eq!(three.vector_factor, 2);
}

#[test]
fn dot_product_rewrite_shape() {
    let ir = compile_to_ir(&dot(1024)).unwrap();
    let r = first_inner(&ir);
    let dec = check_macc_resources(&find_macc_patterns(&r, &ir), &desc());
    let rw = rewrite_macc(&r, &dec, &ir).unwrap();
    assert_eq!(rw.main_trip_count(), Some(128));
    assert_eq!(rw.remainder_trip_count(), Some(0));
    assert_eq!(rw.prologue.len(), 1);
    assert!(matches!(rw.epilogue[0], Node::MaccReduce { ref target, .. } if target == "sum"));
    assert_eq!(rw.accumulators[0].layout, LaneLayout::DoubleWord);
}

#[test]
fn remainder_split() {
    let ir = compile_to_ir(&dot(1027)).unwrap();
    let r = first_inner(&ir);
    let dec = check_macc_resources(&find_macc_patterns(&r, &ir), &desc());
    let rw = rewrite_macc(&r, &dec, &ir).unwrap();
    assert_eq!(rw.main_trip_count(), Some(128));
    assert_eq!(rw.remainder_trip_count(), Some(3));
}

#[test]
fn array_accumulator_rejected() {
    let ir =
        compile_to_ir("int a[4]; int b[4]; int c[2]; int i; for (i = 0; i < 4; i++) { c[1] += a[i] * b[i]; }").unwrap();
    let r = first_inner(&ir);
    let m = find_macc_patterns(&r, &ir);
    assert_eq!(m.len(), 1);
    let dec = check_macc_resources(&m, &desc());
    assert!(matches!(rewrite_macc(&r, &dec, &ir), Err(RewriteError::RewriteUnsupported(_))));
    let (out, report) = run_macc_pass(&ir, &desc());
    assert_eq!(out, ir);
    assert_eq!(report.loops[0].mode, Mode::None);
}

#[test]
fn aliasing_rejected() {
    let ir = compile_to_ir("int a[64]; int s; int i; for (i = 0; i < 4; i++) { s += a[i] * s; }").unwrap();
    let r = first_inner(&ir);
    let dec = check_macc_resources(&find_macc_patterns(&r, &ir), &desc());
    assert!(matches!(rewrite_macc(&r, &dec, &ir), Err(RewriteError::RewriteUnsupported(_))));
}

#[test]
fn strided_operand_falls_back_to_scalar_macc() {
    let src = "int a[400]; int b[100]; int s; int i; for (i = 0; i < 100; i++) { s += a[4 * i] * b[i]; }";
    let ir = compile_to_ir(src).unwrap();
    let (out, report) = run_macc_pass(&ir, &desc());
    assert_eq!(report.loops[0].mode, Mode::ScalarMacc);
    assert_eq!(out.accumulators[0].layout, LaneLayout::Scalar);
    assert_semantics_equal(&ir, &out, 7);
}

#[test]
fn five_accumulators_leave_ir_untouched() {
    let src = "int a[16]; int b[16]; int s0; int s1; int s2; int s3; int s4; int i;\n\
               for (i = 0; i < 16; i++) { s0 += a[i]*b[i]; s1 += a[i]*a[i]; s2 += b[i]*b[i]; s3 += a[i]*b[i]; s4 += b[i]*a[i]; }";
    let ir = compile_to_ir(src).unwrap();
    let (out, report) = run_macc_pass(&ir, &desc());
    assert_eq!(report.loops[0].mode, Mode::None);
    assert_eq!(report.loops[0].matches, 5);
    assert_eq!(format!("{out}"), format!("{ir}"));
    assert_eq!(out, ir);
}

fn random_state(ir: &LoopIr, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = State::for_ir(ir);
    for v in &ir.vars {
        if v.constant || v.induction {
            continue;
        }
        let data: Vec<i32> = (0..v.words()).map(|_| rng.gen()).collect();
        st.fill(&v.name, &data).unwrap();
    }
    st
}

fn assert_semantics_equal(original: &LoopIr, rewritten: &LoopIr, seed: u64) {
    let base = random_state(original, seed);
    let mut a = base.clone();
    let mut b = base;
    run_ir(original, &mut a, 100_000_000).unwrap();
    run_ir(rewritten, &mut b, 100_000_000).unwrap();
    assert_eq!(a, b);
}

#[test]
fn semantics_preserved_across_trip_counts() {
    for n in [0, 1, 7, 8, 9, 1024, 1027] {
        let ir = compile_to_ir(&dot(n)).unwrap();
        let (out, report) = run_macc_pass(&ir, &desc());
        assert_eq!(report.loops[0].mode, Mode::SimdDoubleWord, "N={n}");
        for seed in 0..5 {
            assert_semantics_equal(&ir, &out, seed);
        }
    }
}

#[test]
fn nested_kernels_preserved() {
    let fir = "int x[160]; int h[13]; int y[24]; int acc; int n; int i;\n\
               for (n = 0; n < 24; n++) { acc = 0; for (i = 0; i < 13; i++) { acc += h[i] * x[n + i]; } y[n] = acc; }";
    let single = "int a[20]; int b[20]; int c[20]; int p; int q; int r; int i;\n\
                  for (i = 0; i < 19; i++) { p += a[i] * b[i]; q += b[i] * c[i]; r += c[i] * a[i]; }";
    for src in [fir, single] {
        let ir = compile_to_ir(src).unwrap();
        let (out, report) = run_macc_pass(&ir, &desc());
        assert_eq!(report.rewritten(), 1, "{src}");
        for seed in 0..10 {
            assert_semantics_equal(&ir, &out, seed);
        }
    }
}

proptest! {
    #[test]
    fn trip_count_arithmetic(n in 0u32..5000) {
        let ir = compile_to_ir(&dot(n)).unwrap();
        let r = first_inner(&ir);
        let dec = check_macc_resources(&find_macc_patterns(&r, &ir), &desc());
        let rw = rewrite_macc(&r, &dec, &ir).unwrap();
        prop_assert_eq!(rw.main_trip_count(), Some(n / 8));
        prop_assert_eq!(rw.remainder_trip_count(), Some(n % 8));
        prop_assert!(rw.decision.macc_regs_used <= 4);
    }

    #[test]
    fn breaking_any_condition_removes_the_match(which in 0usize..4) {
        // The accumulate statement with exactly one of the four conditions broken.
        let body = match which {
            0 => "s = s - a[i] * b[i];",
            1 => "s = s + a[i] + b[i];",
            2 => "s = s + a[i];",
            _ => "t = s + a[i] * b[i];",
        };
        let src = format!("int a[8]; int b[8]; int s; int t; int i; for (i = 0; i < 8; i++) {{ {body} }}");
        let ir = compile_to_ir(&src).unwrap();
        let r = first_inner(&ir);
        prop_assert!(find_macc_patterns(&r, &ir).is_empty());
        prop_assert!(oracle_matches(&ir, &r).is_empty());
    }

    #[test]
    fn random_inputs_preserved(n in 0u32..40, seed in any::<u64>()) {
        let ir = compile_to_ir(&dot(n)).unwrap();
        let (out, _) = run_macc_pass(&ir, &desc());
        assert_semantics_equal(&ir, &out, seed);
    }
}
