use std::collections::BTreeMap;

use hdsafe_core::ir::{parse_program, render_program, validate, Opcode, SecurityClass};
use hdsafe_core::leakage::{check_equivalence, outputs, run, Sampling, Verdict};
use hdsafe_core::model::lower::lower;
use hdsafe_core::model::{add_security_constraints, build_base_model, check};
use hdsafe_core::solver::{solve, NoClock, SolveBudget, Status};
use hdsafe_core::target::{load_target, preset, render_target, OpInfo, TargetDesc, MACHINE_OPS};
use hdsafe_core::typeinf::infer_types;
use hdsafe_core::{oracle, secsets};
use proptest::prelude::*;

const CLASSES: [&str; 3] = ["secret", "public", "random"];
const BINARY: [&str; 5] = ["xor", "and", "or", "gf_mul", "add"];

/// Source text of a random straight-line program over `n` inputs.
fn program_text(width: u32, classes: Vec<usize>, body: Vec<(usize, usize, usize, Option<u64>)>) -> String {
    let n = classes.len();
    let mut s = format!("func p width {width}\nin");
    for (i, c) in classes.iter().enumerate() {
        s.push_str(&format!(" t{i}:{}", CLASSES[*c]));
    }
    s.push('\n');
    let mut defined = n;
    for (op, a, b, imm) in body {
        let x = a % defined;
        let line = if op == BINARY.len() {
            format!("t{defined} = not t{x}\n")
        } else {
            let y = match imm {
                Some(c) => format!("{c:#x}"),
                None => format!("t{}", b % defined),
            };
            format!("t{defined} = {} t{x}, {y}\n", BINARY[op])
        };
        s.push_str(&line);
        defined += 1;
    }
    s.push_str(&format!("out t{}\n", defined - 1));
    s
}

fn programs(max_inputs: usize, max_body: usize) -> impl Strategy<Value = String> {
    (
        prop::sample::select(vec![4u32, 8]),
        prop::collection::vec(0..3usize, 1..=max_inputs),
        prop::collection::vec((0..=BINARY.len(), 0..16usize, 0..16usize, prop::option::weighted(0.2, 0..16u64)), 0..=max_body),
    )
        .prop_map(|(w, c, b)| program_text(w, c, b))
}

/// Width-4 programs where every input class is present and xors dominate.
fn masked_programs() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(0..3usize, 0..=1),
        prop::collection::vec((prop::sample::select(vec![0usize, 0, 0, 1, 3]), 0..8usize, 0..8usize), 1..=3),
    )
        .prop_map(|(extra, body)| {
            let mut classes = vec![0, 2, 1];
            classes.extend(extra);
            program_text(4, classes, body.into_iter().map(|(o, a, b)| (o, a, b, None)).collect())
        })
}

fn targets() -> impl Strategy<Value = TargetDesc> {
    (1..6usize, 0..4usize, prop::collection::vec((1..4u32, any::<bool>()), MACHINE_OPS.len()), any::<bool>())
        .prop_flat_map(|(nregs, slots, infos, name_flag)| {
            (
                Just((nregs, slots, infos, name_flag)),
                prop::sample::subsequence((0..nregs).collect::<Vec<_>>(), 0..=nregs),
                prop::sample::subsequence((0..nregs).collect::<Vec<_>>(), 0..=nregs.min(2)),
            )
        })
        .prop_map(|((nregs, slots, infos, name_flag), args, results)| {
            let ops: BTreeMap<Opcode, OpInfo> = MACHINE_OPS
                .iter()
                .zip(infos)
                .map(|(&op, (latency, ta))| {
                    (op, OpInfo { latency, two_address: ta && op.is_binary(), is_memory: op.is_memory() })
                })
                .collect();
            TargetDesc {
                name: if name_flag { "gen".into() } else { "other-target".into() },
                registers: (0..nregs).map(|i| format!("R{i}")).collect(),
                slots,
                ops,
                args,
                results,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn program_text_round_trips(src in programs(4, 6)) {
        let p = parse_program(&src).unwrap();
        prop_assert!(validate(&p).is_empty());
        let text = render_program(&p);
        let q = parse_program(&text).unwrap();
        prop_assert_eq!(&p, &q);
        prop_assert_eq!(render_program(&q), text);
    }

    #[test]
    fn target_text_round_trips(t in targets()) {
        let text = render_target(&t);
        prop_assert_eq!(load_target(&text), Ok(t));
    }

    #[test]
    fn dom_within_unq_within_supp(src in programs(5, 8)) {
        let p = parse_program(&src).unwrap();
        let env = infer_types(&p);
        for t in 0..p.num_temps() {
            let t = hdsafe_core::ir::Temp(t as u32);
            prop_assert_eq!(env.dom(t) & !env.unq(t), 0);
            prop_assert_eq!(env.unq(t) & !env.supp(t), 0);
        }
    }

    #[test]
    fn secure_sets_respect_their_classes(src in programs(4, 5)) {
        let p = parse_program(&src).unwrap();
        let env = infer_types(&p);
        let f = hdsafe_core::model::Function::expand(&p, 1);
        let sets = secsets::compute(&env, &f);
        let class = |t: usize| env.class(f.temps[t].value);
        for &(a, b) in &sets.rpairs {
            prop_assert!(class(a) != SecurityClass::Secret && class(b) != SecurityClass::Secret);
        }
        for (k, hs) in &sets.spairs {
            prop_assert_eq!(class(*k), SecurityClass::Secret);
            for &h in hs {
                prop_assert_eq!(class(h), SecurityClass::Random);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_output_is_valid_and_computes_the_program(src in programs(3, 3), k in 0..2usize) {
        let p = parse_program(&src).unwrap();
        let t = preset("thumb-like").unwrap();
        let m = build_base_model(&p, &t, k).unwrap();
        let out = solve(&m, SolveBudget::nodes(200_000), &NoClock);
        prop_assume!(out.best.is_some());
        let sol = out.best.unwrap();
        prop_assert_eq!(check(&m, &sol), Ok(()));
        prop_assert_eq!(m.canonical_violation(&sol), None);
        let low = lower(&m, &sol);
        let inputs: Vec<u64> = (0..p.inputs.len() as u64).map(|i| (i * 5 + 3) & 0xf).collect();
        let (st, _) = run(&low, &inputs).unwrap();
        let vals = p.eval(&inputs);
        let want: Vec<u64> = p.outputs.iter().map(|t| vals[t.index()]).collect();
        prop_assert_eq!(outputs(&low, &st), want);
    }

    #[test]
    fn secure_solutions_of_soundly_typed_programs_do_not_leak(src in masked_programs()) {
        let p = parse_program(&src).unwrap();
        let env = infer_types(&p);
        prop_assume!(oracle::type_soundness(&p, &env.classes).unwrap().is_empty());
        let base = build_base_model(&p, &preset("thumb-like").unwrap(), 1).unwrap();
        let sets = secsets::compute(&env, &base.func);
        let sec = add_security_constraints(base, &sets);
        let out = solve(&sec, SolveBudget::nodes(200_000), &NoClock);
        prop_assume!(out.status == Status::Optimal);
        let low = lower(&sec, out.best.as_ref().unwrap());
        let public = vec![0x6; p.inputs_of(SecurityClass::Public).len()];
        let ns = p.inputs_of(SecurityClass::Secret).len();
        let v = check_equivalence(&low, &public, (&vec![0x0; ns], &vec![0xf; ns]), Sampling::Exhaustive).unwrap();
        prop_assert_eq!(v, Verdict::Equivalent, "{}", src);
    }
}
