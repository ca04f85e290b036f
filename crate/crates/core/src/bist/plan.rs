// SPDX-License-Identifier: Apache-2.0

//! Engine configuration and its JSON file form.

use serde::{Deserialize, Serialize};

use super::BistError;
use crate::circuit::{Driver, NetId, Netlist};
use crate::compactor::{format_hex, parse_hex, Signature, XorCascade};
use crate::tpg::{assemble_pattern, AlfsrState, BitSource, CgEntry, ConstraintProgram, PortBinding, Polynomial};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// Default `pattern_counter` width.
pub const DEFAULT_COUNTER_WIDTH: u32 = 12;

/// Signature register and width-folding cascade of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MisrAssignment {
    pub block: String,
    pub polynomial: Polynomial,
    pub cascade: XorCascade,
}

/// Full engine configuration. MISR order is the output-selector order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BistPlan {
    pub alfsr_polynomial: Polynomial,
    pub alfsr_seed: u64,
    pub counter_width: u32,
    pub pattern_count: u32,
    pub bindings: Vec<PortBinding>,
    pub misrs: Vec<MisrAssignment>,
    pub golden: Option<Vec<Signature>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    schema_version: u32,
    alfsr: AlfsrSpec,
    counter_width: u32,
    pattern_count: u32,
    bindings: Vec<BindingSpec>,
    misrs: Vec<MisrSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    golden: Option<Vec<Signature>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlfsrSpec {
    poly: Polynomial,
    seed: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BindingSpec {
    block: String,
    width: usize,
    /// ALFSR stage for each non-constrained bit in ascending bit order;
    /// absent means bit `i` takes stage `i mod degree`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alfsr_map: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cg: Option<CgSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CgSpec {
    /// Input bit driven by each generator bit.
    bits: Vec<usize>,
    cyclic: bool,
    schedule: Vec<CgEntrySpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CgEntrySpec {
    /// Binary, MSB left.
    value: String,
    hold: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MisrSpec {
    block: String,
    poly: Polynomial,
    cascade: XorCascade,
}

fn binding_to_spec(b: &PortBinding, degree: u32) -> BindingSpec {
    let cg = b.constraint_program().map(|p| CgSpec {
        bits: b.cg_bits(),
        cyclic: p.cyclic(),
        schedule: p
            .schedule()
            .iter()
            .map(|e| CgEntrySpec {
                value: format!("{:0width$b}", e.value, width = p.port_width()),
                hold: e.hold,
            })
            .collect(),
    });
    let mut modular = true;
    let mut map = Vec::new();
    for (i, s) in b.sources().iter().enumerate() {
        if let BitSource::Alfsr(stage) = *s {
            modular &= stage as usize == i % degree as usize;
            map.push(stage);
        }
    }
    BindingSpec {
        block: b.block().to_string(),
        width: b.width(),
        alfsr_map: if modular { None } else { Some(map) },
        cg,
    }
}

fn binding_from_spec(spec: BindingSpec, degree: u32) -> Result<PortBinding, BistError> {
    let program = match &spec.cg {
        Some(cg) => {
            let width = cg.bits.len();
            let schedule = cg
                .schedule
                .iter()
                .map(|e| {
                    if e.value.len() != width || !e.value.chars().all(|c| c == '0' || c == '1') {
                        return Err(BistError::Plan(format!(
                            "block `{}`: constraint value `{}` is not a {width}-bit binary string",
                            spec.block, e.value
                        )));
                    }
                    let value = u64::from_str_radix(&e.value, 2).expect("checked binary");
                    Ok(CgEntry { value, hold: e.hold })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(ConstraintProgram::new(width, schedule, cg.cyclic)?)
        }
        None => None,
    };
    let mut sources: Vec<Option<BitSource>> = vec![None; spec.width];
    if let Some(cg) = &spec.cg {
        for (k, &bit) in cg.bits.iter().enumerate() {
            match sources.get_mut(bit) {
                Some(slot @ None) => *slot = Some(BitSource::Cg(k as u32)),
                _ => {
                    return Err(BistError::Plan(format!(
                        "block `{}`: constrained bit {bit} out of range or repeated",
                        spec.block
                    )))
                }
            }
        }
    }
    let free: Vec<usize> = (0..spec.width).filter(|&i| sources[i].is_none()).collect();
    match &spec.alfsr_map {
        Some(map) => {
            if map.len() != free.len() {
                return Err(BistError::Plan(format!(
                    "block `{}`: alfsr_map has {} entries for {} free bits",
                    spec.block,
                    map.len(),
                    free.len()
                )));
            }
            for (&i, &stage) in free.iter().zip(map) {
                sources[i] = Some(BitSource::Alfsr(stage));
            }
        }
        None => {
            for &i in &free {
                sources[i] = Some(BitSource::Alfsr((i % degree as usize) as u32));
            }
        }
    }
    let sources = sources.into_iter().map(|s| s.expect("all bits bound")).collect();
    Ok(PortBinding::from_sources(spec.block, sources, program)?)
}

impl BistPlan {
    pub fn from_json(text: &str) -> Result<Self, BistError> {
        let file: PlanFile = serde_json::from_str(text).map_err(|e| BistError::Plan(e.to_string()))?;
        if file.schema_version != PLAN_SCHEMA_VERSION {
            return Err(BistError::Plan(format!(
                "unsupported schema_version {} (expected {PLAN_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let degree = file.alfsr.poly.degree();
        let seed = parse_hex(&file.alfsr.seed)?;
        let bindings = file
            .bindings
            .into_iter()
            .map(|b| binding_from_spec(b, degree))
            .collect::<Result<Vec<_>, _>>()?;
        let plan = BistPlan {
            alfsr_polynomial: file.alfsr.poly,
            alfsr_seed: seed,
            counter_width: file.counter_width,
            pattern_count: file.pattern_count,
            bindings,
            misrs: file
                .misrs
                .into_iter()
                .map(|m| MisrAssignment {
                    block: m.block,
                    polynomial: m.poly,
                    cascade: m.cascade,
                })
                .collect(),
            golden: file.golden,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let degree = self.alfsr_polynomial.degree();
        let file = PlanFile {
            schema_version: PLAN_SCHEMA_VERSION,
            alfsr: AlfsrSpec {
                poly: self.alfsr_polynomial.clone(),
                seed: format_hex(self.alfsr_seed, degree as usize),
            },
            counter_width: self.counter_width,
            pattern_count: self.pattern_count,
            bindings: self.bindings.iter().map(|b| binding_to_spec(b, degree)).collect(),
            misrs: self
                .misrs
                .iter()
                .map(|m| MisrSpec {
                    block: m.block.clone(),
                    poly: m.polynomial.clone(),
                    cascade: m.cascade,
                })
                .collect(),
            golden: self.golden.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("plan serializes");
        s.push('\n');
        s
    }

    /// Checks the invariants that do not need a netlist.
    pub fn validate(&self) -> Result<(), BistError> {
        if !(1..=32).contains(&self.counter_width) {
            return Err(BistError::Plan(format!(
                "counter_width {} outside 1..=32",
                self.counter_width
            )));
        }
        self.check_count(self.pattern_count)?;
        AlfsrState::from_value(self.alfsr_polynomial.clone(), self.alfsr_seed)?;
        let degree = self.alfsr_polynomial.degree();
        for (i, b) in self.bindings.iter().enumerate() {
            b.validate(b.width(), degree)?;
            if self.bindings[..i].iter().any(|o| o.block() == b.block()) {
                return Err(BistError::Plan(format!("block `{}` bound twice", b.block())));
            }
        }
        if self.misrs.is_empty() || self.misrs.len() > 4 {
            return Err(BistError::Plan(format!(
                "{} MISRs configured; the 2-bit selector addresses 1..=4",
                self.misrs.len()
            )));
        }
        for (i, m) in self.misrs.iter().enumerate() {
            // A narrower folded word enters the low register stages.
            if m.cascade.out_width() > m.polynomial.degree() as usize {
                return Err(BistError::Plan(format!(
                    "MISR for `{}`: cascade folds to {} bits, register has only {}",
                    m.block,
                    m.cascade.out_width(),
                    m.polynomial.degree()
                )));
            }
            if self.misrs[..i].iter().any(|o| o.block == m.block) {
                return Err(BistError::Plan(format!("block `{}` has two MISRs", m.block)));
            }
        }
        if let Some(golden) = &self.golden {
            if golden.len() != self.misrs.len()
                || golden.iter().zip(&self.misrs).any(|(g, m)| {
                    g.block != m.block || g.polynomial != m.polynomial || g.pattern_count != self.pattern_count
                })
            {
                return Err(BistError::Plan("golden signatures do not match the MISR list".into()));
            }
        }
        Ok(())
    }

    pub fn max_patterns(&self) -> u64 {
        1u64 << self.counter_width
    }

    pub(crate) fn check_count(&self, count: u32) -> Result<(), BistError> {
        if count == 0 || count as u64 > self.max_patterns() {
            return Err(BistError::CountOutOfRange {
                count: count as u64,
                max: self.max_patterns(),
            });
        }
        Ok(())
    }

    pub fn initial_alfsr(&self) -> AlfsrState {
        AlfsrState::from_value(self.alfsr_polynomial.clone(), self.alfsr_seed).expect("validated seed")
    }

    /// Same plan with a different pattern count; golden signatures are dropped.
    pub fn with_pattern_count(&self, count: u32) -> Result<BistPlan, BistError> {
        self.check_count(count)?;
        Ok(BistPlan {
            pattern_count: count,
            golden: None,
            ..self.clone()
        })
    }

    /// Same plan with a different ALFSR seed; golden signatures are dropped.
    pub fn with_seed(&self, seed: u64) -> Result<BistPlan, BistError> {
        AlfsrState::from_value(self.alfsr_polynomial.clone(), seed)?;
        Ok(BistPlan {
            alfsr_seed: seed,
            golden: None,
            ..self.clone()
        })
    }

    pub fn with_golden(&self, golden: Vec<Signature>) -> Result<BistPlan, BistError> {
        let plan = BistPlan {
            golden: Some(golden),
            ..self.clone()
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Connects the plan to a netlist. Every block must be bound exactly
    /// once, every bound input bit must be a primary input, and every
    /// primary input must be bound.
    pub fn wire(&self, netlist: &Netlist) -> Result<Wiring, BistError> {
        self.validate()?;
        let degree = self.alfsr_polynomial.degree();
        let mut pi_source: Vec<Option<(usize, usize)>> = vec![None; netlist.primary_inputs().len()];
        for block in netlist.blocks() {
            if !self.bindings.iter().any(|b| b.block() == block.name) {
                return Err(BistError::Plan(format!("block `{}` has no binding", block.name)));
            }
        }
        for (bi, binding) in self.bindings.iter().enumerate() {
            let block = netlist.block(binding.block()).ok_or_else(|| {
                BistError::Plan(format!("binding names unknown block `{}`", binding.block()))
            })?;
            binding.validate(block.input_width(), degree)?;
            for (bit, &net) in block.input_port.iter().enumerate() {
                let Driver::Input(pi) = netlist.driver(net) else {
                    return Err(BistError::Plan(format!(
                        "block `{}` input `{}` is not a primary input",
                        block.name,
                        netlist.net_name(net)
                    )));
                };
                if pi_source[pi].is_some() {
                    return Err(BistError::Plan(format!(
                        "primary input `{}` bound twice",
                        netlist.net_name(net)
                    )));
                }
                pi_source[pi] = Some((bi, bit));
            }
        }
        let pi_source = pi_source
            .into_iter()
            .enumerate()
            .map(|(pi, s)| {
                s.ok_or_else(|| {
                    BistError::Plan(format!(
                        "primary input `{}` is not driven by any binding",
                        netlist.net_name(netlist.primary_inputs()[pi])
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut misr_outputs = Vec::with_capacity(self.misrs.len());
        for m in &self.misrs {
            let block = netlist
                .block(&m.block)
                .ok_or_else(|| BistError::Plan(format!("MISR names unknown block `{}`", m.block)))?;
            if block.output_width() != m.cascade.in_width() {
                return Err(BistError::Plan(format!(
                    "MISR for `{}`: cascade takes {} bits, block output port has {}",
                    m.block,
                    m.cascade.in_width(),
                    block.output_width()
                )));
            }
            misr_outputs.push(block.output_port.clone());
        }
        Ok(Wiring {
            pi_source,
            misr_outputs,
        })
    }

    /// Primary-input vector applied at `cycle` for the given ALFSR contents.
    pub fn input_vector(&self, wiring: &Wiring, alfsr: &AlfsrState, cycle: u64) -> Vec<bool> {
        let blocks: Vec<Vec<bool>> = self
            .bindings
            .iter()
            .map(|b| assemble_pattern(b, alfsr, cycle).expect("binding validated"))
            .collect();
        wiring.pi_source.iter().map(|&(b, bit)| blocks[b][bit]).collect()
    }

    /// The `pattern_count` primary-input vectors of a test run.
    pub fn patterns(&self, netlist: &Netlist) -> Result<Vec<Vec<bool>>, BistError> {
        let wiring = self.wire(netlist)?;
        let mut alfsr = self.initial_alfsr();
        let mut out = Vec::with_capacity(self.pattern_count as usize);
        for cycle in 0..self.pattern_count as u64 {
            out.push(self.input_vector(&wiring, &alfsr, cycle));
            alfsr.advance();
        }
        Ok(out)
    }

    /// One modular binding per block, default ALFSR, and a MISR per block
    /// (16 bits, or the block output width when narrower, at least 2).
    pub fn default_for(netlist: &Netlist) -> Result<BistPlan, BistError> {
        let poly = Polynomial::default_alfsr();
        let degree = poly.degree();
        let bindings = netlist
            .blocks()
            .iter()
            .map(|b| PortBinding::modular(b.name.clone(), b.input_width(), degree))
            .collect();
        let misrs = netlist
            .blocks()
            .iter()
            .map(|b| {
                let width = b.output_width().clamp(2, 16);
                let polynomial = if width == 16 {
                    Polynomial::default_misr()
                } else {
                    crate::tpg::primitive_polynomial(width as u32).expect("table covers 2..=16")
                };
                Ok(MisrAssignment {
                    block: b.name.clone(),
                    polynomial,
                    cascade: XorCascade::new(b.output_width(), width.min(b.output_width()))?,
                })
            })
            .collect::<Result<Vec<_>, BistError>>()?;
        let plan = BistPlan {
            alfsr_polynomial: poly,
            alfsr_seed: DEFAULT_SEED,
            counter_width: DEFAULT_COUNTER_WIDTH,
            pattern_count: 1 << DEFAULT_COUNTER_WIDTH,
            bindings,
            misrs,
            golden: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Engine configuration for the three-block decoder-shaped core:
    /// 20-bit ALFSR, a 4-bit constraint generator on the first four
    /// BIT_NODE inputs, three 16-bit MISRs selected as BIT_NODE = 0,
    /// CHECK_NODE = 1, CONTROL_UNIT = 2, and 4096 patterns.
    pub fn case_study(netlist: &Netlist) -> Result<BistPlan, BistError> {
        let poly = Polynomial::default_alfsr();
        let degree = poly.degree();
        let mut bindings = Vec::new();
        let mut misrs = Vec::new();
        for name in CASE_STUDY_BLOCKS {
            let block = netlist
                .block(name)
                .ok_or_else(|| BistError::Plan(format!("case-study block `{name}` missing")))?;
            let binding = if name == "BIT_NODE" {
                // Walk every 4-bit selection value, each held for 256 cycles.
                let schedule = (0..16u64).map(|v| CgEntry { value: v, hold: 256 }).collect();
                let program = ConstraintProgram::new(4, schedule, true)?;
                PortBinding::with_constraints(name, block.input_width(), degree, program, &[0, 1, 2, 3])?
            } else {
                PortBinding::modular(name, block.input_width(), degree)
            };
            bindings.push(binding);
            misrs.push(MisrAssignment {
                block: name.to_string(),
                polynomial: Polynomial::default_misr(),
                cascade: XorCascade::new(block.output_width(), 16)?,
            });
        }
        let plan = BistPlan {
            alfsr_polynomial: poly,
            alfsr_seed: DEFAULT_SEED,
            counter_width: DEFAULT_COUNTER_WIDTH,
            pattern_count: 1 << DEFAULT_COUNTER_WIDTH,
            bindings,
            misrs,
            golden: None,
        };
        plan.validate()?;
        Ok(plan)
    }
}

pub const DEFAULT_SEED: u64 = 0x5eed1;

pub const CASE_STUDY_BLOCKS: [&str; 3] = ["BIT_NODE", "CHECK_NODE", "CONTROL_UNIT"];

/// Plan resolved against a netlist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wiring {
    /// For each primary input: (binding index, block input bit).
    pub pi_source: Vec<(usize, usize)>,
    /// Block output nets feeding each MISR, in selector order.
    pub misr_outputs: Vec<Vec<NetId>>,
}
