// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlists in a bench-style text format, fault-free logic
//! evaluation and toggle-activity measurement.
//!
//! The format is the ISCAS-89 flavour:
//!
//! ```text
//! #@netlist tiny
//! #@block TOP in: a,b out: y
//! INPUT(a)
//! INPUT(b)
//! OUTPUT(y)
//! n1 = NAND(a, b)
//! y = DFF(n1)
//! ```
//!
//! Every net has exactly one driver: a primary input, a gate output or a
//! flop Q. Cycles are only allowed through flops. One call to [`evaluate`]
//! is one clock cycle.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a net inside its [`Netlist`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetId(pub u32);

impl NetId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
}

impl GateKind {
    pub const ALL: [GateKind; 8] = [
        GateKind::And,
        GateKind::Nand,
        GateKind::Or,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Not,
        GateKind::Buf,
    ];

    pub fn from_keyword(word: &str) -> Option<GateKind> {
        Some(match word {
            "AND" => GateKind::And,
            "NAND" => GateKind::Nand,
            "OR" => GateKind::Or,
            "NOR" => GateKind::Nor,
            "XOR" => GateKind::Xor,
            "XNOR" => GateKind::Xnor,
            "NOT" | "INV" => GateKind::Not,
            "BUF" | "BUFF" => GateKind::Buf,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Or => "OR",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buf => "BUF",
        }
    }

    /// NOT and BUF take exactly one input, everything else at least one.
    pub fn is_unary(self) -> bool {
        matches!(self, GateKind::Not | GateKind::Buf)
    }

    fn inverting(self) -> bool {
        matches!(
            self,
            GateKind::Nand | GateKind::Nor | GateKind::Xnor | GateKind::Not
        )
    }

    /// Two-valued evaluation.
    pub fn eval(self, inputs: impl IntoIterator<Item = bool>) -> bool {
        let mut it = inputs.into_iter();
        let base = match self {
            GateKind::And | GateKind::Nand => it.all(|v| v),
            GateKind::Or | GateKind::Nor => it.any(|v| v),
            GateKind::Xor | GateKind::Xnor => it.fold(false, |acc, v| acc ^ v),
            GateKind::Not | GateKind::Buf => it.next().unwrap_or(false),
        };
        base ^ self.inverting()
    }

    /// Bit-parallel evaluation, one pattern per bit.
    pub fn eval_word(self, inputs: impl IntoIterator<Item = u64>) -> u64 {
        let mut it = inputs.into_iter();
        let base = match self {
            GateKind::And | GateKind::Nand => it.fold(!0u64, |acc, v| acc & v),
            GateKind::Or | GateKind::Nor => it.fold(0u64, |acc, v| acc | v),
            GateKind::Xor | GateKind::Xnor => it.fold(0u64, |acc, v| acc ^ v),
            GateKind::Not | GateKind::Buf => it.next().unwrap_or(0),
        };
        if self.inverting() {
            !base
        } else {
            base
        }
    }

    /// Three-valued evaluation with the usual controlling-value rules.
    pub fn eval_logic(self, inputs: impl IntoIterator<Item = Logic>) -> Logic {
        let it = inputs.into_iter();
        let base = match self {
            GateKind::And | GateKind::Nand => {
                let mut out = Logic::One;
                for v in it {
                    match v {
                        Logic::Zero => {
                            out = Logic::Zero;
                            break;
                        }
                        Logic::X => out = Logic::X,
                        Logic::One => {}
                    }
                }
                out
            }
            GateKind::Or | GateKind::Nor => {
                let mut out = Logic::Zero;
                for v in it {
                    match v {
                        Logic::One => {
                            out = Logic::One;
                            break;
                        }
                        Logic::X => out = Logic::X,
                        Logic::Zero => {}
                    }
                }
                out
            }
            GateKind::Xor | GateKind::Xnor => {
                let mut acc = false;
                for v in it {
                    match v.to_bool() {
                        Some(b) => acc ^= b,
                        None => return Logic::X,
                    }
                }
                Logic::from(acc)
            }
            GateKind::Not | GateKind::Buf => {
                let mut it = it;
                it.next().unwrap_or(Logic::X)
            }
        };
        if self.inverting() {
            !base
        } else {
            base
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flop {
    pub d: NetId,
    pub q: NetId,
    pub init: bool,
}

/// A named partition of the netlist with ordered, LSB-first ports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub input_port: Vec<NetId>,
    pub output_port: Vec<NetId>,
}

impl Block {
    pub fn input_width(&self) -> usize {
        self.input_port.len()
    }

    pub fn output_width(&self) -> usize {
        self.output_port.len()
    }
}

/// The unique source of a net.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Driver {
    Input(usize),
    Gate(usize),
    Flop(usize),
}

/// A consumer of a net.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reader {
    Gate { gate: usize, pin: usize },
    Flop(usize),
}

/// Source position used in diagnostics. Line 0 means "not from text".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str("<builder>")
        } else {
            write!(f, "{}:{}", self.line, self.col)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: unknown gate kind `{kind}`")]
    UnknownGate { pos: Pos, kind: String },
    #[error("{pos}: {kind} gate driving `{net}` has {got} input(s)")]
    Arity {
        pos: Pos,
        kind: GateKind,
        net: String,
        got: usize,
    },
    #[error("{pos}: net `{net}` is never driven")]
    UndrivenNet { pos: Pos, net: String },
    #[error("{pos}: net `{net}` is driven more than once (first driver at {first})")]
    MultiplyDriven { pos: Pos, net: String, first: Pos },
    #[error("combinational loop through net `{net}`")]
    CombinationalLoop { net: String },
    #[error("{pos}: duplicate port `{net}`")]
    DuplicatePort { pos: Pos, net: String },
    #[error("{pos}: block `{block}` references unknown net `{net}`")]
    UnknownBlockNet { pos: Pos, block: String, net: String },
    #[error("{pos}: block `{block}` declared twice")]
    DuplicateBlock { pos: Pos, block: String },
    #[error("netlist is empty")]
    Empty,
}

/// Immutable gate-level circuit. Shareable across threads.
#[derive(Clone, Debug)]
pub struct Netlist {
    name: String,
    net_names: Vec<String>,
    gates: Vec<Gate>,
    flops: Vec<Flop>,
    primary_inputs: Vec<NetId>,
    primary_outputs: Vec<NetId>,
    blocks: Vec<Block>,
    statements: Vec<Driver>,
    drivers: Vec<Driver>,
    readers: Vec<Vec<Reader>>,
    topo: Vec<usize>,
    name_index: HashMap<String, NetId>,
}

impl PartialEq for Netlist {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.net_names == other.net_names
            && self.gates == other.gates
            && self.flops == other.flops
            && self.primary_inputs == other.primary_inputs
            && self.primary_outputs == other.primary_outputs
            && self.blocks == other.blocks
            && self.statements == other.statements
    }
}

impl Eq for Netlist {}

impl Netlist {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn net_count(&self) -> usize {
        self.net_names.len()
    }

    pub fn net_name(&self, net: NetId) -> &str {
        &self.net_names[net.index()]
    }

    pub fn net_id(&self, name: &str) -> Option<NetId> {
        self.name_index.get(name).copied()
    }

    pub fn nets(&self) -> impl Iterator<Item = NetId> + '_ {
        (0..self.net_names.len() as u32).map(NetId)
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn flops(&self) -> &[Flop] {
        &self.flops
    }

    pub fn primary_inputs(&self) -> &[NetId] {
        &self.primary_inputs
    }

    pub fn primary_outputs(&self) -> &[NetId] {
        &self.primary_outputs
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn driver(&self, net: NetId) -> Driver {
        self.drivers[net.index()]
    }

    pub fn readers(&self, net: NetId) -> &[Reader] {
        &self.readers[net.index()]
    }

    /// Gate indices in an order where every gate follows its fan-in.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn is_combinational(&self) -> bool {
        self.flops.is_empty()
    }

    pub fn is_primary_output(&self, net: NetId) -> bool {
        self.primary_outputs.contains(&net)
    }

    /// Nets compared against the fault-free machine: primary outputs first,
    /// then block output bits not already listed.
    pub fn observed_nets(&self) -> Vec<NetId> {
        let mut seen = vec![false; self.net_count()];
        let mut out = Vec::new();
        let block_outs = self.blocks.iter().flat_map(|b| b.output_port.iter());
        for &net in self.primary_outputs.iter().chain(block_outs) {
            if !seen[net.index()] {
                seen[net.index()] = true;
                out.push(net);
            }
        }
        out
    }

    /// Nets in the transitive fan-in of `roots`, stopping at flops and inputs.
    pub fn fanin_cone(&self, roots: &[NetId]) -> Vec<bool> {
        let mut mark = vec![false; self.net_count()];
        let mut stack: Vec<NetId> = roots.to_vec();
        while let Some(net) = stack.pop() {
            if std::mem::replace(&mut mark[net.index()], true) {
                continue;
            }
            if let Driver::Gate(g) = self.drivers[net.index()] {
                stack.extend(self.gates[g].inputs.iter().copied());
            }
        }
        mark
    }

    /// Bench text that parses back to an equal netlist.
    pub fn to_bench(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#@netlist {}\n", self.name));
        for block in &self.blocks {
            let names = |port: &[NetId]| {
                port.iter()
                    .map(|n| self.net_name(*n))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            out.push_str(&format!(
                "#@block {} in: {} out: {}\n",
                block.name,
                names(&block.input_port),
                names(&block.output_port)
            ));
        }
        for &pi in &self.primary_inputs {
            out.push_str(&format!("INPUT({})\n", self.net_name(pi)));
        }
        for &po in &self.primary_outputs {
            out.push_str(&format!("OUTPUT({})\n", self.net_name(po)));
        }
        for stmt in &self.statements {
            match *stmt {
                Driver::Gate(g) => {
                    let gate = &self.gates[g];
                    let args = gate
                        .inputs
                        .iter()
                        .map(|n| self.net_name(*n))
                        .collect::<Vec<_>>()
                        .join(", ");
                    out.push_str(&format!(
                        "{} = {}({})\n",
                        self.net_name(gate.output),
                        gate.kind,
                        args
                    ));
                }
                Driver::Flop(f) => {
                    let flop = &self.flops[f];
                    out.push_str(&format!(
                        "{} = DFF({})\n",
                        self.net_name(flop.q),
                        self.net_name(flop.d)
                    ));
                }
                Driver::Input(_) => {}
            }
        }
        out
    }

    /// Two-valued settle of all gates. Primary inputs and flop Q nets must
    /// already hold their values.
    pub fn settle(&self, values: &mut [bool]) {
        for &g in &self.topo {
            let gate = &self.gates[g];
            let v = gate.kind.eval(gate.inputs.iter().map(|n| values[n.index()]));
            values[gate.output.index()] = v;
        }
    }

    /// Bit-parallel settle, 64 patterns per word.
    pub fn settle_words(&self, values: &mut [u64]) {
        for &g in &self.topo {
            let gate = &self.gates[g];
            let v = gate
                .kind
                .eval_word(gate.inputs.iter().map(|n| values[n.index()]));
            values[gate.output.index()] = v;
        }
    }
}

/// Incremental construction of a [`Netlist`]; the parser is built on it.
#[derive(Clone, Debug, Default)]
pub struct NetlistBuilder {
    name: String,
    names: Vec<String>,
    index: HashMap<String, u32>,
    first_use: Vec<Pos>,
    driver: Vec<Option<(Driver, Pos)>>,
    gates: Vec<Gate>,
    flops: Vec<Flop>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    statements: Vec<Driver>,
    blocks: Vec<(Block, Pos)>,
    pending_blocks: Vec<(String, Vec<String>, Vec<String>, Pos)>,
    error: Option<NetlistError>,
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    fn intern(&mut self, name: &str, pos: Pos) -> NetId {
        if let Some(&id) = self.index.get(name) {
            return NetId(id);
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.first_use.push(pos);
        self.driver.push(None);
        NetId(id)
    }

    fn record_error(&mut self, err: NetlistError) {
        if self.error.is_none() {
            self.error = Some(err);
        }
    }

    fn set_driver(&mut self, net: NetId, driver: Driver, pos: Pos) {
        match self.driver[net.index()] {
            Some((_, first)) => {
                let err = NetlistError::MultiplyDriven {
                    pos,
                    net: self.names[net.index()].clone(),
                    first,
                };
                self.record_error(err);
            }
            None => self.driver[net.index()] = Some((driver, pos)),
        }
    }

    pub fn input(&mut self, name: &str) -> &mut Self {
        self.input_at(name, Pos::default())
    }

    pub fn input_at(&mut self, name: &str, pos: Pos) -> &mut Self {
        let net = self.intern(name, pos);
        if self.inputs.contains(&net) {
            self.record_error(NetlistError::DuplicatePort {
                pos,
                net: name.to_string(),
            });
            return self;
        }
        let idx = self.inputs.len();
        self.inputs.push(net);
        self.set_driver(net, Driver::Input(idx), pos);
        self
    }

    pub fn output(&mut self, name: &str) -> &mut Self {
        self.output_at(name, Pos::default())
    }

    pub fn output_at(&mut self, name: &str, pos: Pos) -> &mut Self {
        let net = self.intern(name, pos);
        if self.outputs.contains(&net) {
            self.record_error(NetlistError::DuplicatePort {
                pos,
                net: name.to_string(),
            });
            return self;
        }
        self.outputs.push(net);
        self
    }

    pub fn gate(&mut self, kind: GateKind, inputs: &[&str], output: &str) -> &mut Self {
        self.gate_at(kind, inputs, output, Pos::default())
    }

    pub fn gate_at(&mut self, kind: GateKind, inputs: &[&str], output: &str, pos: Pos) -> &mut Self {
        let out = self.intern(output, pos);
        let ins: Vec<NetId> = inputs.iter().map(|n| self.intern(n, pos)).collect();
        let arity_ok = if kind.is_unary() {
            ins.len() == 1
        } else {
            !ins.is_empty()
        };
        if !arity_ok {
            self.record_error(NetlistError::Arity {
                pos,
                kind,
                net: output.to_string(),
                got: ins.len(),
            });
            return self;
        }
        let idx = self.gates.len();
        self.gates.push(Gate {
            kind,
            inputs: ins,
            output: out,
        });
        self.statements.push(Driver::Gate(idx));
        self.set_driver(out, Driver::Gate(idx), pos);
        self
    }

    pub fn flop(&mut self, d: &str, q: &str) -> &mut Self {
        self.flop_at(d, q, Pos::default())
    }

    pub fn flop_at(&mut self, d: &str, q: &str, pos: Pos) -> &mut Self {
        let qn = self.intern(q, pos);
        let dn = self.intern(d, pos);
        let idx = self.flops.len();
        self.flops.push(Flop {
            d: dn,
            q: qn,
            init: false,
        });
        self.statements.push(Driver::Flop(idx));
        self.set_driver(qn, Driver::Flop(idx), pos);
        self
    }

    /// Declares a block; its nets are resolved at [`build`](Self::build) time.
    pub fn block(&mut self, name: &str, inputs: &[&str], outputs: &[&str]) -> &mut Self {
        self.block_at(name, inputs, outputs, Pos::default())
    }

    pub fn block_at(&mut self, name: &str, inputs: &[&str], outputs: &[&str], pos: Pos) -> &mut Self {
        let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        self.pending_blocks
            .push((name.to_string(), strings(inputs), strings(outputs), pos));
        self
    }

    pub fn build(mut self) -> Result<Netlist, NetlistError> {
        if let Some(err) = self.error.take() {
            return Err(err);
        }
        if self.names.is_empty() {
            return Err(NetlistError::Empty);
        }
        let mut drivers = Vec::with_capacity(self.names.len());
        for (i, d) in self.driver.iter().enumerate() {
            match d {
                Some((drv, _)) => drivers.push(*drv),
                None => {
                    return Err(NetlistError::UndrivenNet {
                        pos: self.first_use[i],
                        net: self.names[i].clone(),
                    })
                }
            }
        }

        for (name, ins, outs, pos) in std::mem::take(&mut self.pending_blocks) {
            if self.blocks.iter().any(|(b, _)| b.name == name) {
                return Err(NetlistError::DuplicateBlock { pos, block: name });
            }
            let resolve = |list: &[String]| -> Result<Vec<NetId>, NetlistError> {
                let mut port: Vec<NetId> = Vec::with_capacity(list.len());
                for n in list {
                    let id = self.index.get(n).map(|&i| NetId(i)).ok_or_else(|| {
                        NetlistError::UnknownBlockNet {
                            pos,
                            block: name.clone(),
                            net: n.clone(),
                        }
                    })?;
                    if port.contains(&id) {
                        return Err(NetlistError::DuplicatePort { pos, net: n.clone() });
                    }
                    port.push(id);
                }
                Ok(port)
            };
            let block = Block {
                name: name.clone(),
                input_port: resolve(&ins)?,
                output_port: resolve(&outs)?,
            };
            self.blocks.push((block, pos));
        }

        // Canonical numbering: inputs, then driven nets in statement order.
        // This makes parse -> serialize -> parse an identity.
        let mut order: Vec<NetId> = self.inputs.clone();
        for stmt in &self.statements {
            match *stmt {
                Driver::Gate(g) => order.push(self.gates[g].output),
                Driver::Flop(f) => order.push(self.flops[f].q),
                Driver::Input(_) => {}
            }
        }
        debug_assert_eq!(order.len(), self.names.len());
        let mut remap = vec![NetId(0); self.names.len()];
        for (new, old) in order.iter().enumerate() {
            remap[old.index()] = NetId(new as u32);
        }
        let map = |n: NetId| remap[n.index()];

        let mut net_names = vec![String::new(); self.names.len()];
        let mut new_drivers = vec![Driver::Input(0); self.names.len()];
        for (old, name) in self.names.iter().enumerate() {
            let new = remap[old].index();
            net_names[new] = name.clone();
            new_drivers[new] = drivers[old];
        }
        let gates: Vec<Gate> = self
            .gates
            .iter()
            .map(|g| Gate {
                kind: g.kind,
                inputs: g.inputs.iter().map(|&n| map(n)).collect(),
                output: map(g.output),
            })
            .collect();
        let flops: Vec<Flop> = self
            .flops
            .iter()
            .map(|f| Flop {
                d: map(f.d),
                q: map(f.q),
                init: f.init,
            })
            .collect();
        let blocks: Vec<Block> = self
            .blocks
            .iter()
            .map(|(b, _)| Block {
                name: b.name.clone(),
                input_port: b.input_port.iter().map(|&n| map(n)).collect(),
                output_port: b.output_port.iter().map(|&n| map(n)).collect(),
            })
            .collect();
        let primary_inputs: Vec<NetId> = self.inputs.iter().map(|&n| map(n)).collect();
        let primary_outputs: Vec<NetId> = self.outputs.iter().map(|&n| map(n)).collect();

        let mut readers = vec![Vec::new(); net_names.len()];
        for (g, gate) in gates.iter().enumerate() {
            for (pin, &n) in gate.inputs.iter().enumerate() {
                readers[n.index()].push(Reader::Gate { gate: g, pin });
            }
        }
        for (f, flop) in flops.iter().enumerate() {
            readers[flop.d.index()].push(Reader::Flop(f));
        }

        let topo = topological_order(&gates, &new_drivers, &readers).map_err(|g| {
            NetlistError::CombinationalLoop {
                net: net_names[gates[g].output.index()].clone(),
            }
        })?;

        let name_index = net_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), NetId(i as u32)))
            .collect();

        Ok(Netlist {
            name: if self.name.is_empty() {
                "netlist".to_string()
            } else {
                self.name
            },
            net_names,
            gates,
            flops,
            primary_inputs,
            primary_outputs,
            blocks,
            statements: self.statements,
            drivers: new_drivers,
            readers,
            topo,
            name_index,
        })
    }
}

/// Kahn's algorithm over gates; inputs and flop outputs are sources.
/// On a loop returns some gate on (or behind) the cycle.
fn topological_order(
    gates: &[Gate],
    drivers: &[Driver],
    readers: &[Vec<Reader>],
) -> Result<Vec<usize>, usize> {
    let mut pending: Vec<usize> = gates
        .iter()
        .map(|g| {
            g.inputs
                .iter()
                .filter(|n| matches!(drivers[n.index()], Driver::Gate(_)))
                .count()
        })
        .collect();
    let mut ready: Vec<usize> = (0..gates.len()).filter(|&g| pending[g] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(gates.len());
    while let Some(g) = ready.pop() {
        order.push(g);
        for r in &readers[gates[g].output.index()] {
            if let Reader::Gate { gate, .. } = *r {
                pending[gate] -= 1;
                if pending[gate] == 0 {
                    ready.push(gate);
                }
            }
        }
    }
    if order.len() == gates.len() {
        Ok(order)
    } else {
        Err((0..gates.len()).find(|&g| pending[g] > 0).unwrap_or(0))
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses bench text into a validated netlist.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::new("");
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno as u32 + 1;
        let indent = raw.len() - raw.trim_start().len();
        let line = raw.trim();
        let pos = |offset: usize| Pos {
            line: line_no,
            col: (indent + offset) as u32 + 1,
        };
        if line.is_empty() {
            continue;
        }
        if let Some(pragma) = line.strip_prefix("#@") {
            parse_pragma(&mut b, pragma, pos(0))?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        // Trailing comments.
        let line = match line.find('#') {
            Some(i) => line[..i].trim_end(),
            None => line,
        };

        if let Some((lhs, rhs)) = line.split_once('=') {
            let target = lhs.trim();
            if !is_ident(target) {
                return Err(NetlistError::Syntax {
                    pos: pos(0),
                    msg: format!("invalid net name `{target}`"),
                });
            }
            let rhs_off = lhs.len() + 1 + (rhs.len() - rhs.trim_start().len());
            let (kind, args) = split_call(rhs.trim()).ok_or_else(|| NetlistError::Syntax {
                pos: pos(rhs_off),
                msg: "expected `KIND(arg, ...)`".to_string(),
            })?;
            let args = parse_args(args, pos(rhs_off))?;
            if kind == "DFF" {
                if args.len() != 1 {
                    return Err(NetlistError::Syntax {
                        pos: pos(rhs_off),
                        msg: format!("DFF takes exactly one argument, got {}", args.len()),
                    });
                }
                b.flop_at(args[0], target, pos(0));
            } else {
                let gk = GateKind::from_keyword(kind).ok_or_else(|| NetlistError::UnknownGate {
                    pos: pos(rhs_off),
                    kind: kind.to_string(),
                })?;
                b.gate_at(gk, &args, target, pos(0));
            }
        } else {
            let (kw, args) = split_call(line).ok_or_else(|| NetlistError::Syntax {
                pos: pos(0),
                msg: format!("unrecognised statement `{line}`"),
            })?;
            let args = parse_args(args, pos(0))?;
            if args.len() != 1 {
                return Err(NetlistError::Syntax {
                    pos: pos(0),
                    msg: format!("{kw} takes exactly one net"),
                });
            }
            match kw {
                "INPUT" => b.input_at(args[0], pos(0)),
                "OUTPUT" => b.output_at(args[0], pos(0)),
                _ => {
                    return Err(NetlistError::Syntax {
                        pos: pos(0),
                        msg: format!("expected INPUT or OUTPUT, found `{kw}`"),
                    })
                }
            };
        }
        if let Some(err) = b.error.clone() {
            return Err(err);
        }
    }
    b.build()
}

fn split_call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    let inner = s.strip_suffix(')')?;
    let kw = s[..open].trim();
    if !is_ident(kw) {
        return None;
    }
    Some((kw, &inner[open + 1..]))
}

fn parse_args(args: &str, pos: Pos) -> Result<Vec<&str>, NetlistError> {
    if args.trim().is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|a| {
            let a = a.trim();
            if is_ident(a) {
                Ok(a)
            } else {
                Err(NetlistError::Syntax {
                    pos,
                    msg: format!("invalid net name `{a}`"),
                })
            }
        })
        .collect()
}

fn parse_pragma(b: &mut NetlistBuilder, pragma: &str, pos: Pos) -> Result<(), NetlistError> {
    let syntax = |msg: &str| NetlistError::Syntax {
        pos,
        msg: msg.to_string(),
    };
    let (word, rest) = pragma
        .trim()
        .split_once(char::is_whitespace)
        .unwrap_or((pragma.trim(), ""));
    match word {
        "netlist" => {
            let name = rest.trim();
            if !is_ident(name) {
                return Err(syntax("`#@netlist` needs an identifier"));
            }
            b.set_name(name);
        }
        "block" => {
            let rest = rest.trim();
            let (name, ports) = rest
                .split_once(char::is_whitespace)
                .ok_or_else(|| syntax("expected `#@block NAME in: ... out: ...`"))?;
            if !is_ident(name) {
                return Err(syntax("invalid block name"));
            }
            let ports = ports.trim();
            let ports = ports
                .strip_prefix("in:")
                .ok_or_else(|| syntax("block pragma is missing `in:`"))?;
            let (ins, outs) = ports
                .split_once("out:")
                .ok_or_else(|| syntax("block pragma is missing `out:`"))?;
            let ins = parse_args(ins, pos)?;
            let outs = parse_args(outs, pos)?;
            b.block_at(name, &ins, &outs, pos);
        }
        // Unknown pragmas are ordinary comments.
        _ => {}
    }
    Ok(())
}

/// Three-valued logic level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Logic {
    Zero,
    One,
    X,
}

impl Logic {
    pub fn to_bool(self) -> Option<bool> {
        match self {
            Logic::Zero => Some(false),
            Logic::One => Some(true),
            Logic::X => None,
        }
    }
}

impl From<bool> for Logic {
    fn from(b: bool) -> Self {
        if b {
            Logic::One
        } else {
            Logic::Zero
        }
    }
}

impl std::ops::Not for Logic {
    type Output = Logic;
    fn not(self) -> Logic {
        match self {
            Logic::Zero => Logic::One,
            Logic::One => Logic::Zero,
            Logic::X => Logic::X,
        }
    }
}

/// Per-net values of the last settled cycle plus the register contents
/// that the next cycle will see on the flop outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicState {
    nets: Vec<Logic>,
    flops: Vec<Logic>,
}

impl LogicState {
    /// Power-on: all nets unknown, flops at their reset value.
    pub fn reset(netlist: &Netlist) -> Self {
        LogicState {
            nets: vec![Logic::X; netlist.net_count()],
            flops: netlist.flops.iter().map(|f| Logic::from(f.init)).collect(),
        }
    }

    pub fn net(&self, net: NetId) -> Logic {
        self.nets[net.index()]
    }

    pub fn nets(&self) -> &[Logic] {
        &self.nets
    }

    pub fn flops(&self) -> &[Logic] {
        &self.flops
    }

    pub fn has_unknown(&self) -> bool {
        self.nets.contains(&Logic::X)
    }

    /// Settled values as booleans; `None` while any net is unknown.
    pub fn to_bools(&self) -> Option<Vec<bool>> {
        self.nets.iter().map(|v| v.to_bool()).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("primary input `{0}` is unassigned")]
    UnassignedInput(String),
    #[error("{got} input values given for {expected} primary inputs")]
    TooManyInputs { expected: usize, got: usize },
    #[error("state does not belong to this netlist")]
    StateMismatch,
    #[error("toggle activity needs at least 2 patterns, got {0}")]
    TooFewPatterns(usize),
}

/// One clock cycle: apply `inputs` (primary-input order), settle the
/// combinational logic, then clock every flop once.
pub fn evaluate(netlist: &Netlist, state: &LogicState, inputs: &[bool]) -> Result<LogicState, EvalError> {
    check_inputs(netlist, inputs)?;
    if state.nets.len() != netlist.net_count() || state.flops.len() != netlist.flops.len() {
        return Err(EvalError::StateMismatch);
    }
    let mut nets = state.nets.clone();
    for (&pi, &v) in netlist.primary_inputs.iter().zip(inputs) {
        nets[pi.index()] = Logic::from(v);
    }
    for (flop, &v) in netlist.flops.iter().zip(&state.flops) {
        nets[flop.q.index()] = v;
    }
    for &g in &netlist.topo {
        let gate = &netlist.gates[g];
        nets[gate.output.index()] = gate.kind.eval_logic(gate.inputs.iter().map(|n| nets[n.index()]));
    }
    let flops = netlist.flops.iter().map(|f| nets[f.d.index()]).collect();
    Ok(LogicState { nets, flops })
}

pub(crate) fn check_inputs(netlist: &Netlist, inputs: &[bool]) -> Result<(), EvalError> {
    let expected = netlist.primary_inputs.len();
    if inputs.len() < expected {
        let name = netlist.net_name(netlist.primary_inputs[inputs.len()]).to_string();
        return Err(EvalError::UnassignedInput(name));
    }
    if inputs.len() > expected {
        return Err(EvalError::TooManyInputs {
            expected,
            got: inputs.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToggleReport {
    /// Nets that changed at least once divided by all nets.
    pub fraction: f64,
    pub toggled_nets: usize,
    pub total_nets: usize,
    /// Per-net count of value changes between consecutive cycles.
    pub counts: Vec<u32>,
}

/// Toggle activity over a sequence of full primary-input vectors, starting
/// from reset. The first settle out of X does not count as a toggle.
pub fn toggle_activity(netlist: &Netlist, patterns: &[Vec<bool>]) -> Result<ToggleReport, EvalError> {
    if patterns.len() < 2 {
        return Err(EvalError::TooFewPatterns(patterns.len()));
    }
    let mut counts = vec![0u32; netlist.net_count()];
    let mut state = LogicState::reset(netlist);
    let mut prev: Option<Vec<Logic>> = None;
    for p in patterns {
        state = evaluate(netlist, &state, p)?;
        if let Some(prev) = &prev {
            for (i, (a, b)) in prev.iter().zip(&state.nets).enumerate() {
                if a != b && *a != Logic::X && *b != Logic::X {
                    counts[i] += 1;
                }
            }
        }
        prev = Some(state.nets.clone());
    }
    let toggled = counts.iter().filter(|&&c| c > 0).count();
    Ok(ToggleReport {
        fraction: toggled as f64 / netlist.net_count() as f64,
        toggled_nets: toggled,
        total_nets: netlist.net_count(),
        counts,
    })
}
