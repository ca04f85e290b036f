// SPDX-License-Identifier: Apache-2.0

//! Seeded random netlists: property-test subjects and the bundled fixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{GateKind, Netlist, NetlistBuilder};

/// Shape of one generated block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub name: String,
    /// Net name prefix, keeps blocks of one netlist apart.
    pub prefix: String,
    pub inputs: usize,
    pub outputs: usize,
    pub gates: usize,
    pub flops: usize,
}

impl BlockShape {
    pub fn new(name: &str, prefix: &str, inputs: usize, outputs: usize, gates: usize) -> Self {
        BlockShape {
            name: name.to_string(),
            prefix: prefix.to_string(),
            inputs,
            outputs,
            gates,
            flops: 0,
        }
    }

    pub fn with_flops(mut self, flops: usize) -> Self {
        self.flops = flops;
        self
    }
}

const KIND_WEIGHTS: [(GateKind, u32); 8] = [
    (GateKind::And, 4),
    (GateKind::Nand, 5),
    (GateKind::Or, 4),
    (GateKind::Nor, 4),
    (GateKind::Xor, 3),
    (GateKind::Xnor, 2),
    (GateKind::Not, 2),
    (GateKind::Buf, 1),
];

fn pick_kind(rng: &mut ChaCha8Rng) -> GateKind {
    let total: u32 = KIND_WEIGHTS.iter().map(|k| k.1).sum();
    let mut r = rng.gen_range(0..total);
    for &(k, w) in &KIND_WEIGHTS {
        if r < w {
            return k;
        }
        r -= w;
    }
    unreachable!()
}

/// Adds one block to `b`. Nets that nothing reads yet are preferred as
/// gate inputs, so few nets end up dangling.
fn add_block(b: &mut NetlistBuilder, shape: &BlockShape, rng: &mut ChaCha8Rng, pragma: bool) {
    assert!(shape.inputs > 0 && shape.outputs > 0, "block needs ports");
    assert!(shape.gates >= shape.outputs, "every output is a gate output");
    let p = &shape.prefix;
    let ins: Vec<String> = (0..shape.inputs).map(|i| format!("{p}i{i}")).collect();
    let qs: Vec<String> = (0..shape.flops).map(|i| format!("{p}q{i}")).collect();
    for i in &ins {
        b.input(i);
    }
    let mut pool: Vec<String> = ins.iter().chain(&qs).cloned().collect();
    let mut unread: Vec<usize> = (0..pool.len()).collect();
    let mut gate_nets = Vec::with_capacity(shape.gates);
    for g in 0..shape.gates {
        let kind = pick_kind(rng);
        let arity = if kind.is_unary() {
            1
        } else if rng.gen_bool(0.2) {
            3
        } else {
            2
        };
        let mut chosen: Vec<usize> = Vec::with_capacity(arity);
        while chosen.len() < arity.min(pool.len()) {
            let idx = if !unread.is_empty() && rng.gen_bool(0.7) {
                unread[rng.gen_range(0..unread.len())]
            } else {
                // Bias toward recent nets for depth.
                let lo = pool.len().saturating_sub(24);
                if rng.gen_bool(0.6) {
                    rng.gen_range(lo..pool.len())
                } else {
                    rng.gen_range(0..pool.len())
                }
            };
            if !chosen.contains(&idx) {
                chosen.push(idx);
            }
        }
        let kind = if chosen.len() == 1 && !kind.is_unary() { GateKind::Not } else { kind };
        unread.retain(|u| !chosen.contains(u));
        let out = format!("{p}n{g}");
        let names: Vec<&str> = chosen.iter().map(|&i| pool[i].as_str()).collect();
        b.gate(kind, &names, &out);
        unread.push(pool.len());
        gate_nets.push(pool.len());
        pool.push(out);
    }
    // Flop inputs come from late gates; they count as reads.
    for q in &qs {
        let d = if let Some(pos) = unread.iter().position(|u| gate_nets.contains(u)) {
            unread.remove(pos)
        } else {
            *gate_nets.choose(rng).expect("gates")
        };
        b.flop(&pool[d], q);
    }
    let mut outs: Vec<usize> = unread.iter().copied().filter(|u| gate_nets.contains(u)).collect();
    outs.truncate(shape.outputs);
    let mut rest: Vec<usize> = gate_nets.iter().copied().filter(|g| !outs.contains(g)).collect();
    rest.reverse();
    while outs.len() < shape.outputs {
        outs.push(rest.remove(0));
    }
    outs.sort_unstable();
    let out_names: Vec<String> = outs.iter().map(|&i| pool[i].clone()).collect();
    for o in &out_names {
        b.output(o);
    }
    if pragma {
        let ir: Vec<&str> = ins.iter().map(String::as_str).collect();
        let or: Vec<&str> = out_names.iter().map(String::as_str).collect();
        b.block(&shape.name, &ir, &or);
    }
}

/// A netlist made of independent blocks.
pub fn random_core(name: &str, blocks: &[BlockShape], seed: u64) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetlistBuilder::new(name);
    for shape in blocks {
        add_block(&mut b, shape, &mut rng, true);
    }
    b.build().expect("generated netlist is well formed")
}

/// A single-block netlist without a block pragma.
pub fn random_netlist(inputs: usize, outputs: usize, gates: usize, flops: usize, seed: u64) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetlistBuilder::new(format!("rand_{seed:x}"));
    let shape = BlockShape::new("CORE", "", inputs, outputs, gates).with_flops(flops);
    add_block(&mut b, &shape, &mut rng, false);
    b.build().expect("generated netlist is well formed")
}

/// Seeds the bundled fixtures were generated with.
pub const SEED_TEN: u64 = 10;
pub const SEED_SEVENTEEN: u64 = 17;
pub const SEED_CASE_STUDY: u64 = 0xb157;

pub fn ten_gate() -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_TEN);
    let mut b = NetlistBuilder::new("ten_gate");
    add_block(&mut b, &BlockShape::new("T10", "", 5, 3, 10), &mut rng, true);
    b.build().expect("fixture")
}

pub fn seventeen_gate() -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_SEVENTEEN);
    let mut b = NetlistBuilder::new("seventeen_gate");
    add_block(&mut b, &BlockShape::new("T17", "", 8, 4, 17), &mut rng, true);
    b.build().expect("fixture")
}

/// Block shapes of the case-study core: name, prefix, input and output width.
pub const CASE_STUDY_SHAPES: [(&str, &str, usize, usize, usize); 3] = [
    ("BIT_NODE", "bn_", 54, 55, 420),
    ("CHECK_NODE", "cn_", 53, 53, 380),
    ("CONTROL_UNIT", "cu_", 45, 44, 300),
];

fn case_shape(i: usize) -> BlockShape {
    let (n, p, i_w, o_w, g) = CASE_STUDY_SHAPES[i];
    BlockShape::new(n, p, i_w, o_w, g)
}

/// The BIT_NODE-shaped block alone.
pub fn ldpc_like_bn() -> Netlist {
    random_core("ldpc_like_bn", &[case_shape(0)], SEED_CASE_STUDY)
}

/// Three combinational blocks with the case-study port widths.
pub fn case_study_core() -> Netlist {
    random_core("ldpc_like_core", &[case_shape(0), case_shape(1), case_shape(2)], SEED_CASE_STUDY)
}
