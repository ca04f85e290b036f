// SPDX-License-Identifier: Apache-2.0

//! Invariants over seeded random netlists, polynomials and streams.

mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use bistbench::access::{self, TapSession, TapState, WrapperState};
use bistbench::bist::{self, BistPlan};
use bistbench::circuit::{evaluate, parse_netlist, toggle_activity, Logic, LogicState, Netlist};
use bistbench::compactor::{signature_of, MisrState};
use bistbench::diagnosis::{build_matrix, classify, is_refinement, refine, DiagnosticMatrix, Granularity, Stimulus};
use bistbench::faultsim::{
    collapse, detection_rows, enumerate_faults, parallel_fault_sim, run_fault_sim, serial_fault_sim, FaultKind,
};
use bistbench::synth::{random_core, random_netlist, BlockShape};
use bistbench::tpg::{assemble_pattern, AlfsrState, BitSource, CgEntry, ConstraintProgram, Polynomial, PortBinding};
use common::*;

/// A one-block combinational core with a block pragma.
fn core(inputs: usize, outputs: usize, gates: usize, seed: u64) -> Netlist {
    random_core("prop", &[BlockShape::new("B", "", inputs, outputs, gates)], seed)
}

fn random_patterns(n: &Netlist, count: usize, seed: u64) -> Vec<Vec<bool>> {
    alfsr_patterns(n, count, (seed % ((1 << 20) - 1)) + 1)
}

fn shape() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (2usize..7, 1usize..4, 4usize..30, any::<u64>()).prop_map(|(i, o, g, s)| (i, o, g.max(o), s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // circuit

    #[test]
    fn eval_matches_truth_table((i, o, g, seed) in shape()) {
        let n = random_netlist(i, o, g, 0, seed);
        for p in exhaustive(i) {
            let want = fixpoint_eval(&n, &p, None);
            let got = evaluate(&n, &LogicState::reset(&n), &p).unwrap();
            let got: Vec<bool> = got.nets().iter().map(|&l| l == Logic::One).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn bench_round_trip((i, o, g, seed) in shape(), flops in 0usize..3) {
        let n = random_netlist(i, o, g, flops, seed);
        let text = n.to_bench();
        let back = parse_netlist(&text).unwrap();
        prop_assert_eq!(&back.to_bench(), &text);
        prop_assert_eq!(back.net_count(), n.net_count());
    }

    #[test]
    fn toggle_counts_grow_with_prefix((i, o, g, seed) in shape(), cut in 2usize..30) {
        let n = random_netlist(i, o, g, 0, seed);
        let pats = random_patterns(&n, 32, seed);
        let short = toggle_activity(&n, &pats[..cut]).unwrap();
        let long = toggle_activity(&n, &pats).unwrap();
        prop_assert!(short.counts.iter().zip(&long.counts).all(|(a, b)| a <= b));
        prop_assert!(short.fraction <= long.fraction);
    }

    // tpg

    #[test]
    fn alfsr_step_is_a_bijection(degree in 2u32..11, tapbits in any::<u64>()) {
        let taps: Vec<u32> = (1..degree).filter(|t| tapbits >> t & 1 == 1).collect();
        let poly = Polynomial::new(degree, &taps).unwrap();
        let images: HashSet<u64> = (0..1u64 << degree).map(|r| poly.step(r)).collect();
        prop_assert_eq!(images.len(), 1 << degree);
        // Explicit inverse: stage i+1 moved to i, stage 0 recovered from the
        // feedback bit.
        for r in 0..1u64 << degree {
            let next = poly.step(r);
            let fb = next >> (degree - 1) & 1;
            let upper = next & ((1 << (degree - 1)) - 1);
            let taps_rest = taps.iter().fold(0, |acc, &t| acc ^ (upper >> (t - 1) & 1));
            let prev = (upper << 1) | (fb ^ taps_rest);
            prop_assert_eq!(prev, r);
        }
    }

    #[test]
    fn cg_and_alfsr_bits_are_disjoint(
        width in 4usize..60,
        cg_width in 1usize..4,
        pick in any::<u64>(),
        reg in 1u64..(1 << 20),
        cycle in 0u64..5000,
    ) {
        let cg_width = cg_width.min(width);
        let mut bits: Vec<usize> = (0..width).collect();
        let mut s = pick;
        for i in (1..bits.len()).rev() {
            bits.swap(i, (s % (i as u64 + 1)) as usize);
            s = s.rotate_left(7) ^ 0x9e37;
        }
        bits.truncate(cg_width);
        let schedule = (0..1u64 << cg_width).map(|v| CgEntry { value: v, hold: 3 }).collect();
        let program = ConstraintProgram::new(cg_width, schedule, true).unwrap();
        let b = PortBinding::with_constraints("X", width, 20, program.clone(), &bits).unwrap();
        let cg: HashSet<usize> = b.cg_bits().into_iter().collect();
        let alfsr: HashSet<usize> = b
            .sources()
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, BitSource::Alfsr(_)))
            .map(|(i, _)| i)
            .collect();
        prop_assert!(cg.is_disjoint(&alfsr));
        prop_assert_eq!(cg.len() + alfsr.len(), width);
        // CG bits ignore the register, ALFSR bits ignore the cycle.
        let poly = Polynomial::default_alfsr();
        let s1 = AlfsrState::from_value(poly.clone(), reg).unwrap();
        let s2 = AlfsrState::from_value(poly, reg ^ 0xfffff).unwrap();
        let a = assemble_pattern(&b, &s1, cycle).unwrap();
        let c = assemble_pattern(&b, &s2, cycle).unwrap();
        let d = assemble_pattern(&b, &s1, cycle + 1).unwrap();
        for i in 0..width {
            if cg.contains(&i) {
                prop_assert_eq!(a[i], c[i]);
            } else {
                prop_assert_eq!(a[i], d[i]);
            }
        }
        let v = program.value_at(cycle);
        for (k, &bit) in b.cg_bits().iter().enumerate() {
            prop_assert_eq!(a[bit], v >> k & 1 == 1);
        }
    }

    // compactor

    #[test]
    fn misr_is_linear(degree in 2u32..17, x in prop::collection::vec(any::<u64>(), 1..40), y_seed in any::<u64>()) {
        let poly = bistbench::tpg::primitive_polynomial(degree).unwrap();
        let m = poly.mask();
        let x: Vec<u64> = x.iter().map(|w| w & m).collect();
        let y: Vec<u64> = x.iter().enumerate().map(|(i, w)| (w.rotate_left(i as u32) ^ y_seed) & m).collect();
        let xy: Vec<u64> = x.iter().zip(&y).map(|(a, b)| a ^ b).collect();
        prop_assert_eq!(signature_of(&poly, &xy), signature_of(&poly, &x) ^ signature_of(&poly, &y));
    }

    #[test]
    fn single_word_error_never_aliases(degree in 2u32..9, err in 1u64..256, at in 0usize..50, len in 1usize..50) {
        let poly = bistbench::tpg::primitive_polynomial(degree).unwrap();
        let err = err & poly.mask();
        prop_assume!(err != 0);
        let at = at % len;
        let mut stream = vec![0u64; len];
        stream[at] = err;
        prop_assert_ne!(signature_of(&poly, &stream), 0);
    }

    #[test]
    fn zero_word_absorb_is_autonomous(degree in 2u32..25, reg in any::<u64>()) {
        let poly = bistbench::tpg::primitive_polynomial(degree).unwrap();
        let mut m = MisrState::with_register(poly.clone(), reg & poly.mask()).unwrap();
        m.absorb(0).unwrap();
        prop_assert_eq!(m.register(), poly.step(reg & poly.mask()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // faultsim

    #[test]
    fn parallel_equals_serial((i, o, g, seed) in shape(), count in 2usize..140, workers in 1usize..5) {
        let n = random_netlist(i, o, g, 0, seed);
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let pats = random_patterns(&n, count, seed);
        let s = serial_fault_sim(&n, &u, &pats).unwrap();
        prop_assert_eq!(&parallel_fault_sim(&n, &u, &pats).unwrap(), &s);
        prop_assert_eq!(&run_fault_sim(&n, &u, &pats, workers).unwrap(), &s);
    }

    #[test]
    fn sequential_engine_is_worker_independent((i, o, g, seed) in shape(), flops in 1usize..3, workers in 2usize..5) {
        let n = random_netlist(i, o, g, flops, seed);
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let pats = random_patterns(&n, 40, seed);
        prop_assert_eq!(run_fault_sim(&n, &u, &pats, workers).unwrap(), serial_fault_sim(&n, &u, &pats).unwrap());
    }

    #[test]
    fn coverage_grows_with_prefix((i, o, g, seed) in shape(), cut in 2usize..100) {
        let n = random_netlist(i, o, g, 0, seed);
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let pats = random_patterns(&n, 100, seed);
        let full = parallel_fault_sim(&n, &u, &pats).unwrap();
        let prefix = parallel_fault_sim(&n, &u, &pats[..cut]).unwrap();
        prop_assert_eq!(&full.truncated(cut), &prefix);
        prop_assert!(prefix.detected() <= full.detected());
    }

    #[test]
    fn collapsed_faults_share_rows((i, o, g, seed) in shape()) {
        let n = random_netlist(i, o, g, 0, seed);
        let u = collapse(&enumerate_faults(&n, &FaultKind::SAF), &n);
        let pats = exhaustive(i);
        let rows = detection_rows(&n, &u, &pats, 1).unwrap();
        for (k, f) in u.faults().iter().enumerate() {
            prop_assert_eq!(&rows[k], &rows[f.class_id], "fault {}", f.label(&n));
        }
    }

    #[test]
    fn transition_detection_implies_stuck_at((i, o, g, seed) in shape()) {
        let n = random_netlist(i, o, g, 0, seed);
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let pats = random_patterns(&n, 96, seed);
        let rows = detection_rows(&n, &u, &pats, 1).unwrap();
        for (k, f) in u.faults().iter().enumerate() {
            let partner = match f.kind {
                FaultKind::Str => FaultKind::Sa0,
                FaultKind::Stf => FaultKind::Sa1,
                _ => continue,
            };
            let j = u.faults().iter().position(|h| h.site == f.site && h.kind == partner).unwrap();
            for (a, b) in rows[k].iter().zip(&rows[j]) {
                prop_assert_eq!(a & !b, 0);
            }
        }
    }

    // bist

    #[test]
    fn selftest_passes_own_golden((i, o, g, seed) in shape(), count in 1u32..300) {
        let n = core(i, o, g, seed);
        let plan = BistPlan::default_for(&n).unwrap().with_pattern_count(count).unwrap();
        let plan = plan.with_golden(bist::compute_golden(&n, &plan).unwrap()).unwrap();
        let r = bist::run_selftest(&n, &plan, None).unwrap();
        prop_assert_eq!(r.passed(), Some(true));
        prop_assert_eq!(r.patterns_applied, count);
    }

    #[test]
    fn pre_misr_detection_is_mismatch_or_alias((i, o, g, seed) in shape(), count in 2u32..120) {
        let n = core(i, o, g, seed);
        let plan = BistPlan::default_for(&n).unwrap().with_pattern_count(count).unwrap();
        let plan = plan.with_golden(bist::compute_golden(&n, &plan).unwrap()).unwrap();
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let d = bist::misr_detection_rate(&n, &plan, &u, 2).unwrap();
        let pre = serial_fault_sim(&n, &u, &plan.patterns(&n).unwrap()).unwrap();
        prop_assert_eq!(d.pre_misr_detected, pre.detected());
        prop_assert_eq!(d.misr_detected + d.aliased.len(), d.pre_misr_detected);
        for k in 0..u.len() {
            let passed = bist::run_selftest(&n, &plan, Some(&u.faults()[k])).unwrap().passed().unwrap();
            if pre.is_detected(k) {
                prop_assert_eq!(passed, d.aliased.contains(&k));
            } else {
                prop_assert!(passed);
            }
        }
    }

    // access

    #[test]
    fn shift_is_circular(wir in 0u8..8, wbr_len in 0usize..12, fill in any::<u64>()) {
        let mut w = WrapperState::new(wbr_len);
        w.wir = wir;
        w.wir_shift = (fill & 7) as u8;
        w.wcdr_shift = fill as u16;
        w.wdr_shift = (fill >> 16) as u32 & 0x3ffff;
        w.wby = fill >> 40 & 1 == 1;
        for (k, c) in w.wbr_shift.iter_mut().enumerate() {
            *c = fill >> (k + 20) & 1 == 1;
        }
        for (tap, len) in [(TapState::ShiftIr, access::WIR_WIDTH), (TapState::ShiftDr, w.selected_len())] {
            let mut cur = w.clone();
            let mut out = Vec::new();
            for _ in 0..len {
                let lsb = match tap {
                    TapState::ShiftIr => cur.wir_shift & 1 == 1,
                    _ => shift_out_bit(&cur),
                };
                let (next, tdo) = access::shift(&cur, tap, lsb).unwrap();
                prop_assert_eq!(tdo, lsb);
                out.push(tdo);
                cur = next;
            }
            prop_assert_eq!(&cur, &w);
        }
        prop_assert!(access::shift(&w, TapState::RunTestIdle, false).is_err());
    }

    #[test]
    fn update_stages_change_only_on_update(ops in prop::collection::vec((any::<bool>(), any::<bool>()), 1..160)) {
        let n = core(4, 2, 8, 5);
        let plan = BistPlan::default_for(&n).unwrap().with_pattern_count(8).unwrap();
        let mut s = TapSession::new(&n, &plan).unwrap();
        for (tms, tdi) in ops {
            let before_state = s.tap();
            let before = s.wrapper().clone();
            let tdo = s.clock(tms, tdi).unwrap();
            let after = s.wrapper();
            prop_assert_eq!(tdo.is_some(), before_state.is_shift());
            prop_assert_eq!(s.tap(), before_state.step(tms));
            match before_state {
                TapState::UpdateIr | TapState::UpdateDr | TapState::TestLogicReset => {}
                _ => {
                    prop_assert_eq!(before.wir, after.wir);
                    prop_assert_eq!(&before.wbr, &after.wbr);
                    prop_assert_eq!(before.wcdr, after.wcdr);
                    prop_assert_eq!(before.wdr, after.wdr);
                    prop_assert_eq!(before.error, after.error);
                }
            }
        }
    }

    // diagnosis

    #[test]
    fn extra_patterns_only_split((i, o, g, seed) in shape(), base_len in 1usize..40, extra_len in 1usize..40) {
        let n = random_netlist(i, o, g, 0, seed);
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let pats = random_patterns(&n, base_len + extra_len, seed);
        let base = build_matrix(&n, &u, Stimulus::Patterns(&pats[..base_len]), Granularity::Pattern, 1).unwrap();
        let extra = build_matrix(&n, &u, Stimulus::Patterns(&pats[base_len..]), Granularity::Pattern, 1).unwrap();
        let (merged, r) = refine(&base, &extra).unwrap();
        let after = r.report.unwrap();
        prop_assert!(is_refinement(&after, &classify(&base)));
        prop_assert_eq!(merged.columns(), pats.len());
        // Stuck-at rows do not depend on the previous pattern, so split runs
        // concatenate to the single run.
        let saf = u.of_group(FaultKind::Sa0.group());
        let whole = build_matrix(&n, &saf, Stimulus::Patterns(&pats), Granularity::Pattern, 1).unwrap();
        let halves = build_matrix(&n, &saf, Stimulus::Patterns(&pats[..base_len]), Granularity::Pattern, 1)
            .unwrap()
            .concat(&build_matrix(&n, &saf, Stimulus::Patterns(&pats[base_len..]), Granularity::Pattern, 1).unwrap())
            .unwrap();
        prop_assert_eq!(halves, whole);
    }

    #[test]
    fn both_granularities_coarsen_full_response((i, o, g, seed) in shape(), count in 2u32..64) {
        let n = core(i, o, g, seed);
        let plan = BistPlan::default_for(&n).unwrap().with_pattern_count(count).unwrap();
        let u = enumerate_faults(&n, &FaultKind::SAF);
        let pats = plan.patterns(&n).unwrap();
        let blk = &n.blocks()[0];
        let cascade = &plan.misrs[0].cascade;
        // Full response: folded output difference at every pattern.
        let rows: Vec<Vec<u64>> = u
            .faults()
            .iter()
            .map(|f| {
                pats.iter()
                    .map(|p| {
                        let good = fixpoint_eval(&n, p, None);
                        let bad = fixpoint_eval(&n, p, Some((f.site, f.kind.forced_value())));
                        let diff: Vec<bool> = blk.output_port.iter().map(|x| good[x.index()] != bad[x.index()]).collect();
                        cascade.fold(&diff).unwrap()
                    })
                    .collect()
            })
            .collect();
        let full = classify(&DiagnosticMatrix::new(Granularity::Pattern, pats.len(), &u, rows));
        let by_pattern = classify(&build_matrix(&n, &u, Stimulus::Plan(&plan), Granularity::Pattern, 1).unwrap());
        let by_signature = classify(&build_matrix(&n, &u, Stimulus::Plan(&plan), Granularity::Signature, 1).unwrap());
        prop_assert!(is_refinement(&full, &by_pattern));
        prop_assert!(is_refinement(&full, &by_signature));
    }

    #[test]
    fn class_sizes_are_consistent((i, o, g, seed) in shape(), count in 1usize..64) {
        let n = random_netlist(i, o, g, 0, seed);
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let pats = random_patterns(&n, count, seed);
        let r = classify(&build_matrix(&n, &u, Stimulus::Patterns(&pats), Granularity::Pattern, 1).unwrap());
        for row in &r.rows {
            if let Some(mean) = row.mean_size {
                prop_assert!(row.max_size as f64 >= mean && mean >= 1.0);
            } else {
                prop_assert_eq!(row.classes, 0);
            }
            if let Some(mean) = row.mean_size_all {
                prop_assert!(row.max_size_all as f64 >= mean && mean >= 1.0);
            }
        }
        prop_assert_eq!(r.total().faults, u.len());
        prop_assert_eq!(r.classes.iter().map(Vec::len).sum::<usize>() + r.undetected.len(), u.len());
    }
}

/// Bit that the selected data register drives on TDO next.
fn shift_out_bit(w: &WrapperState) -> bool {
    match w.selected() {
        access::Instruction::Bypass => w.wby,
        access::Instruction::WbrSel => w.wbr_shift.first().copied().unwrap_or(false),
        access::Instruction::WcdrSel => w.wcdr_shift & 1 == 1,
        access::Instruction::WdrSel => w.wdr_shift & 1 == 1,
    }
}
