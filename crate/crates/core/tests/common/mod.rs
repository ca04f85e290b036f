// SPDX-License-Identifier: Apache-2.0

//! Independent oracles shared by the integration tests. None of them reuse
//! the library's simulators: evaluation here iterates gates to a fixpoint
//! in declaration order, with faults applied literally per pattern.

#![allow(dead_code)]

use std::path::PathBuf;

use bistbench::circuit::{parse_netlist, NetId, Netlist};
use bistbench::faultsim::{FaultDescriptor, FaultKind, Site};
use bistbench::tpg::{AlfsrState, Polynomial, PortBinding};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn fixture(name: &str) -> Netlist {
    parse_netlist(&fixture_text(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Gate function from its keyword, written out longhand.
pub fn gate_fn(kind: &str, ins: &[bool]) -> bool {
    let ones = ins.iter().filter(|&&b| b).count();
    match kind {
        "AND" => ones == ins.len(),
        "NAND" => ones != ins.len(),
        "OR" => ones > 0,
        "NOR" => ones == 0,
        "XOR" => ones % 2 == 1,
        "XNOR" => ones % 2 == 0,
        "NOT" => !ins[0],
        "BUF" => ins[0],
        other => panic!("unknown gate {other}"),
    }
}

/// Fixpoint evaluation of a combinational netlist with an optional forced
/// value on a stem or on one gate input pin. Returns every net value.
pub fn fixpoint_eval(n: &Netlist, inputs: &[bool], force: Option<(Site, bool)>) -> Vec<bool> {
    assert!(n.flops().is_empty(), "fixpoint oracle is combinational only");
    let mut v = vec![false; n.net_count()];
    let stem_force = |net: NetId, val: bool| match force {
        Some((Site::Stem(s), f)) if s == net => f,
        _ => val,
    };
    for (i, &pi) in n.primary_inputs().iter().enumerate() {
        v[pi.index()] = stem_force(pi, inputs[i]);
    }
    // Enough sweeps for any depth.
    for _ in 0..=n.gates().len() {
        let mut changed = false;
        for (gi, g) in n.gates().iter().enumerate() {
            let ins: Vec<bool> = g
                .inputs
                .iter()
                .enumerate()
                .map(|(pin, &net)| match force {
                    Some((Site::Branch { gate, pin: p, .. }, f)) if gate == gi && p == pin => f,
                    _ => v[net.index()],
                })
                .collect();
            let out = stem_force(g.output, gate_fn(g.kind.keyword(), &ins));
            if v[g.output.index()] != out {
                v[g.output.index()] = out;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    v
}

/// Detection bit of `fault` at every pattern, brute force. Transition
/// faults act as the matching stuck-at fault on patterns where the
/// fault-free net makes the slow transition from the previous pattern.
pub fn brute_detections(n: &Netlist, fault: &FaultDescriptor, patterns: &[Vec<bool>]) -> Vec<bool> {
    let observed = n.observed_nets();
    let mut prev_good: Option<Vec<bool>> = None;
    patterns
        .iter()
        .map(|p| {
            let good = fixpoint_eval(n, p, None);
            let net = fault.site.net().index();
            let force = match fault.kind {
                FaultKind::Sa0 => Some(false),
                FaultKind::Sa1 => Some(true),
                FaultKind::Str => prev_good.as_ref().and_then(|pg| (!pg[net] && good[net]).then_some(false)),
                FaultKind::Stf => prev_good.as_ref().and_then(|pg| (pg[net] && !good[net]).then_some(true)),
            };
            let hit = match force {
                None => false,
                Some(f) => {
                    let bad = fixpoint_eval(n, p, Some((fault.site, f)));
                    observed.iter().any(|o| bad[o.index()] != good[o.index()])
                }
            };
            prev_good = Some(good);
            hit
        })
        .collect()
}

/// First detecting pattern, brute force.
pub fn brute_first(n: &Netlist, fault: &FaultDescriptor, patterns: &[Vec<bool>]) -> Option<u32> {
    brute_detections(n, fault, patterns).iter().position(|&b| b).map(|i| i as u32)
}

/// All 2^k input vectors, input 0 as the most significant bit.
pub fn exhaustive(k: usize) -> Vec<Vec<bool>> {
    (0..1u64 << k).map(|v| (0..k).map(|i| v >> (k - 1 - i) & 1 == 1).collect()).collect()
}

/// ALFSR patterns for every primary input, through one modular binding.
pub fn alfsr_patterns(n: &Netlist, count: usize, seed: u64) -> Vec<Vec<bool>> {
    let poly = Polynomial::default_alfsr();
    let degree = poly.degree();
    let binding = PortBinding::modular("ALL", n.primary_inputs().len(), degree);
    let mut s = AlfsrState::from_value(poly, seed).unwrap();
    (0..count)
        .map(|c| {
            let p = bistbench::tpg::assemble_pattern(&binding, &s, c as u64).unwrap();
            s.advance();
            p
        })
        .collect()
}
