// SPDX-License-Identifier: Apache-2.0

//! The BIST engine: control unit, golden signatures and self-test sessions.
//!
//! Cycle timing is fixed for golden and faulty runs alike: in cycle `t` the
//! pattern built from the current ALFSR contents (and constraint value `t`)
//! is applied, the netlist settles and clocks once, the settled block
//! outputs are folded and absorbed by their MISRs, then the ALFSR steps.
//! For sequential blocks the response to a pattern therefore reaches the
//! MISR through the flops on later cycles.

mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{EvalError, Netlist};
use crate::compactor::{CompactorError, MisrState, Signature};
use crate::faultsim::{self, FaultDescriptor, FaultSimError, FaultUniverse, FaultyMachine, WordSim};
use crate::tpg::{AlfsrState, TpgError};

pub use plan::{BistPlan, MisrAssignment, Wiring, CASE_STUDY_BLOCKS, DEFAULT_COUNTER_WIDTH, DEFAULT_SEED, PLAN_SCHEMA_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BistError {
    #[error("plan: {0}")]
    Plan(String),
    #[error("pattern count {count} outside 1..={max}")]
    CountOutOfRange { count: u64, max: u64 },
    #[error("golden signatures required")]
    MissingGolden,
    #[error("cannot {action} while {phase:?}")]
    Phase { action: &'static str, phase: Phase },
    #[error("output select {sel} out of range ({count} MISRs)")]
    Selector { sel: u8, count: usize },
    #[error("signature routes disagree for fault {0}")]
    Inconsistent(usize),
    #[error(transparent)]
    Tpg(#[from] TpgError),
    #[error(transparent)]
    Compactor(#[from] CompactorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    FaultSim(#[from] FaultSimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Loading,
    Running,
    Done,
}

/// Control unit registers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlUnitState {
    pub pattern_counter: u32,
    pub pattern_count: u32,
    pub test_enable: bool,
    pub output_select: u8,
    pub phase: Phase,
}

/// One cycle-accurate run of the engine over a shared netlist.
#[derive(Clone, Debug)]
pub struct BistSession<'a> {
    netlist: &'a Netlist,
    plan: BistPlan,
    wiring: Wiring,
    control: ControlUnitState,
    alfsr: AlfsrState,
    misrs: Vec<MisrState>,
    machine: FaultyMachine<'a>,
}

impl<'a> BistSession<'a> {
    pub fn new(netlist: &'a Netlist, plan: &BistPlan, injected: Option<FaultDescriptor>) -> Result<Self, BistError> {
        let wiring = plan.wire(netlist)?;
        Ok(BistSession {
            netlist,
            wiring,
            control: ControlUnitState {
                pattern_counter: 0,
                pattern_count: plan.pattern_count,
                test_enable: false,
                output_select: 0,
                phase: Phase::Idle,
            },
            alfsr: plan.initial_alfsr(),
            misrs: plan.misrs.iter().map(|m| MisrState::new(m.polynomial.clone())).collect(),
            machine: FaultyMachine::new(netlist, injected),
            plan: plan.clone(),
        })
    }

    pub fn plan(&self) -> &BistPlan {
        &self.plan
    }

    pub fn netlist(&self) -> &'a Netlist {
        self.netlist
    }

    pub fn control(&self) -> &ControlUnitState {
        &self.control
    }

    pub fn misr_count(&self) -> usize {
        self.misrs.len()
    }

    fn clear_engines(&mut self) {
        self.control.pattern_counter = 0;
        self.alfsr = self.plan.initial_alfsr();
        self.misrs.iter_mut().for_each(MisrState::reset);
        self.machine.reset();
    }

    /// Core reset: ALFSR reseeded, MISRs and counter cleared, phase idle.
    /// The output selector and loaded count survive.
    pub fn reset(&mut self) {
        self.clear_engines();
        self.control.test_enable = false;
        self.control.pattern_count = self.plan.pattern_count;
        self.control.phase = Phase::Idle;
    }

    /// Loads the number of patterns for the next run.
    pub fn set_count(&mut self, count: u32) -> Result<(), BistError> {
        if self.control.phase == Phase::Running {
            return Err(BistError::Phase {
                action: "load a pattern count",
                phase: self.control.phase,
            });
        }
        self.plan.check_count(count)?;
        self.clear_engines();
        self.control.pattern_count = count;
        self.control.phase = Phase::Loading;
        Ok(())
    }

    /// Raises `test_enable`. Without a prior count the plan default is used.
    pub fn start(&mut self) -> Result<(), BistError> {
        match self.control.phase {
            Phase::Running => {
                return Err(BistError::Phase {
                    action: "start",
                    phase: Phase::Running,
                })
            }
            Phase::Idle | Phase::Done => {
                self.control.pattern_count = self.plan.pattern_count;
                self.control.phase = Phase::Loading;
            }
            Phase::Loading => {}
        }
        self.clear_engines();
        self.control.test_enable = true;
        self.control.phase = Phase::Running;
        Ok(())
    }

    /// Applies one pattern. Returns `false` once the test has ended.
    pub fn step(&mut self) -> Result<bool, BistError> {
        if self.control.phase != Phase::Running {
            return Ok(false);
        }
        let cycle = self.control.pattern_counter as u64;
        let inputs = self.plan.input_vector(&self.wiring, &self.alfsr, cycle);
        let values = self.machine.cycle(&inputs)?;
        for ((misr, assign), outs) in self.misrs.iter_mut().zip(&self.plan.misrs).zip(&self.wiring.misr_outputs) {
            let word: Vec<bool> = outs.iter().map(|n| values[n.index()]).collect();
            misr.absorb_unchecked(assign.cascade.fold_unchecked(&word));
        }
        self.alfsr.advance();
        self.control.pattern_counter += 1;
        if self.control.pattern_counter == self.control.pattern_count {
            self.control.test_enable = false;
            self.control.phase = Phase::Done;
        }
        Ok(self.control.phase == Phase::Running)
    }

    pub fn run_to_completion(&mut self) -> Result<(), BistError> {
        while self.step()? {}
        Ok(())
    }

    pub fn select(&mut self, sel: u8) -> Result<(), BistError> {
        if sel > 3 || sel as usize >= self.misrs.len() {
            return Err(BistError::Selector {
                sel,
                count: self.misrs.len(),
            });
        }
        self.control.output_select = sel;
        Ok(())
    }

    /// Current MISR contents, tagged with the patterns applied so far.
    pub fn signatures(&self) -> Vec<Signature> {
        self.misrs
            .iter()
            .zip(&self.plan.misrs)
            .map(|(m, a)| Signature {
                block: a.block.clone(),
                polynomial: a.polynomial.clone(),
                value: m.register(),
                pattern_count: self.control.pattern_counter,
            })
            .collect()
    }

    pub fn selected_signature(&self) -> Signature {
        self.signatures().swap_remove(self.control.output_select as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BistResult {
    pub signatures: Vec<Signature>,
    /// Per MISR: signature equals golden. Absent without golden signatures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<Vec<bool>>,
    pub patterns_applied: u32,
}

impl BistResult {
    pub fn passed(&self) -> Option<bool> {
        self.pass.as_ref().map(|p| p.iter().all(|&b| b))
    }
}

/// Runs exactly `plan.pattern_count` patterns, optionally with a fault
/// injected, and compares against the plan's golden signatures if present.
pub fn run_selftest(netlist: &Netlist, plan: &BistPlan, injected: Option<&FaultDescriptor>) -> Result<BistResult, BistError> {
    let mut session = BistSession::new(netlist, plan, injected.copied())?;
    session.start()?;
    session.run_to_completion()?;
    let signatures = session.signatures();
    let pass = plan
        .golden
        .as_ref()
        .map(|g| g.iter().zip(&signatures).map(|(a, b)| a.value == b.value).collect());
    Ok(BistResult {
        patterns_applied: session.control.pattern_counter,
        signatures,
        pass,
    })
}

/// Fault-free signatures of a plan.
pub fn compute_golden(netlist: &Netlist, plan: &BistPlan) -> Result<Vec<Signature>, BistError> {
    let plan = BistPlan {
        golden: None,
        ..plan.clone()
    };
    Ok(run_selftest(netlist, &plan, None)?.signatures)
}

/// Per fault and MISR, `faulty_signature ^ golden_signature`.
///
/// Combinational netlists use the word simulator: MISRs and the folding
/// cascades are linear, so the difference signature is the compaction of
/// the folded output differences from the all-zero state. Sequential
/// netlists replay a full session per fault.
pub fn error_signatures(
    netlist: &Netlist,
    plan: &BistPlan,
    universe: &FaultUniverse,
    workers: usize,
) -> Result<Vec<Vec<u64>>, BistError> {
    let wiring = plan.wire(netlist)?;
    let faults = universe.faults();
    if !netlist.is_combinational() {
        let golden = compute_golden(netlist, plan)?;
        let rows = faultsim_rows(faults.len(), workers, |i| {
            let r = run_selftest(netlist, plan, Some(&faults[i]))?;
            Ok(r.signatures.iter().zip(&golden).map(|(a, b)| a.value ^ b.value).collect())
        })?;
        return Ok(rows);
    }
    let patterns = plan.patterns(netlist)?;
    let observed: Vec<_> = wiring.misr_outputs.iter().flatten().copied().collect();
    let offsets: Vec<usize> = wiring
        .misr_outputs
        .iter()
        .scan(0, |acc, outs| {
            let start = *acc;
            *acc += outs.len();
            Some(start)
        })
        .collect();
    let rows = faultsim_rows_batched(faults.len(), workers, |range| {
        let mut sim = WordSim::new(netlist, observed.clone())?;
        let mut regs: Vec<Vec<MisrState>> = range
            .clone()
            .map(|_| plan.misrs.iter().map(|m| MisrState::new(m.polynomial.clone())).collect())
            .collect();
        let mut words = [0u64; 64];
        let mut start = 0;
        while start < patterns.len() {
            sim.load_batch(&patterns, start);
            let len = sim.batch_len();
            for i in range.clone() {
                let diffs = sim.diffs(&faults[i]);
                for (m, assign) in plan.misrs.iter().enumerate() {
                    let k = assign.cascade.out_width();
                    let outs = &diffs[offsets[m]..offsets[m] + wiring.misr_outputs[m].len()];
                    // Fold net differences into cascade output columns first.
                    let mut cols = [0u64; 64];
                    for (j, &d) in outs.iter().enumerate() {
                        cols[j % k] ^= d;
                    }
                    let reg = &mut regs[i - range.start][m];
                    if reg.register() == 0 && cols[..k].iter().all(|&c| c == 0) {
                        continue;
                    }
                    words[..len].iter_mut().for_each(|w| *w = 0);
                    for (b, &c) in cols[..k].iter().enumerate() {
                        let mut c = c;
                        while c != 0 {
                            words[c.trailing_zeros() as usize] |= 1u64 << b;
                            c &= c - 1;
                        }
                    }
                    for &w in &words[..len] {
                        reg.absorb_unchecked(w);
                    }
                }
            }
            start += 64;
        }
        Ok(regs
            .into_iter()
            .map(|r| r.into_iter().map(|m| m.register()).collect())
            .collect())
    })?;
    Ok(rows)
}

fn faultsim_rows<F>(n: usize, workers: usize, f: F) -> Result<Vec<Vec<u64>>, BistError>
where
    F: Fn(usize) -> Result<Vec<u64>, BistError> + Sync,
{
    faultsim_rows_batched(n, workers, |range| range.map(&f).collect())
}

fn faultsim_rows_batched<F>(n: usize, workers: usize, f: F) -> Result<Vec<Vec<u64>>, BistError>
where
    F: Fn(std::ops::Range<usize>) -> Result<Vec<Vec<u64>>, BistError> + Sync,
{
    let chunks: Vec<Result<Vec<Vec<u64>>, BistError>> =
        faultsim::par_map_ranges(n, workers, |range| vec![f(range)]);
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Compaction loss relative to pre-compaction detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisrDetection {
    pub faults: usize,
    /// Detected at block/primary outputs before compaction.
    pub pre_misr_detected: usize,
    /// Of those, detected by a signature mismatch.
    pub misr_detected: usize,
    /// Universe indices detected before compaction whose signatures all
    /// equal the golden ones.
    pub aliased: Vec<usize>,
    /// `misr_detected / pre_misr_detected`.
    pub rate: f64,
}

/// Replays every pre-compaction-detected fault through the MISRs and lists
/// the aliased ones. Each aliased fault is re-checked with a full
/// [`run_selftest`] replay.
pub fn misr_detection_rate(
    netlist: &Netlist,
    plan: &BistPlan,
    universe: &FaultUniverse,
    workers: usize,
) -> Result<MisrDetection, BistError> {
    let golden = plan.golden.as_ref().ok_or(BistError::MissingGolden)?;
    if universe.is_empty() {
        return Err(FaultSimError::EmptyUniverse.into());
    }
    let patterns = plan.patterns(netlist)?;
    let pre = faultsim::run_fault_sim(netlist, universe, &patterns, workers)?;
    let detected: Vec<usize> = (0..universe.len()).filter(|&i| pre.is_detected(i)).collect();
    let sub = FaultUniverse::from_faults(
        detected.iter().map(|&i| universe.faults()[i]).collect(),
        universe.block_names().to_vec(),
    );
    let errors = error_signatures(netlist, plan, &sub, workers)?;
    let mut aliased = Vec::new();
    for (row, &i) in errors.iter().zip(&detected) {
        if row.iter().all(|&e| e == 0) {
            let replay = run_selftest(netlist, plan, Some(&universe.faults()[i]))?;
            if replay.signatures.iter().zip(golden).any(|(a, b)| a.value != b.value) {
                return Err(BistError::Inconsistent(i));
            }
            aliased.push(i);
        }
    }
    let pre_n = detected.len();
    let misr_n = pre_n - aliased.len();
    Ok(MisrDetection {
        faults: universe.len(),
        pre_misr_detected: pre_n,
        misr_detected: misr_n,
        aliased,
        rate: if pre_n == 0 { 1.0 } else { misr_n as f64 / pre_n as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_netlist;
    use crate::compactor::XorCascade;
    use crate::faultsim::{enumerate_faults, FaultKind};
    use crate::tpg::{Polynomial, PortBinding};

    const TINY: &str = "#@block B in: a,b,c out: y,z\nINPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nOUTPUT(z)\nt = NAND(a,b)\ny = XOR(t,c)\nz = NOR(a,c)\n";

    fn tiny_plan(n: &Netlist, count: u32) -> BistPlan {
        let poly: Polynomial = "x^4+x+1".parse().unwrap();
        BistPlan {
            alfsr_polynomial: poly.clone(),
            alfsr_seed: 0b1001,
            counter_width: 4,
            pattern_count: count,
            bindings: vec![PortBinding::modular("B", 3, 4)],
            misrs: vec![MisrAssignment {
                block: "B".into(),
                polynomial: "x^2+x+1".parse().unwrap(),
                cascade: XorCascade::new(n.block("B").unwrap().output_width(), 2).unwrap(),
            }],
            golden: None,
        }
    }

    #[test]
    fn control_unit_phases() {
        let n = parse_netlist(TINY).unwrap();
        let plan = tiny_plan(&n, 5);
        let mut s = BistSession::new(&n, &plan, None).unwrap();
        assert_eq!(s.control().phase, Phase::Idle);
        s.set_count(3).unwrap();
        assert_eq!(s.control().phase, Phase::Loading);
        s.start().unwrap();
        assert!(s.control().test_enable);
        let mut phases = vec![s.control().phase];
        while s.step().unwrap() {
            phases.push(s.control().phase);
        }
        assert_eq!(s.control().phase, Phase::Done);
        assert_eq!(s.control().pattern_counter, 3);
        assert!(!s.control().test_enable);
        assert_eq!(phases, vec![Phase::Running; 3]);
        assert!(s.set_count(17).is_err());
        assert!(s.select(1).is_err());
    }

    #[test]
    fn zero_pattern_plan_rejected() {
        let n = parse_netlist(TINY).unwrap();
        let plan = tiny_plan(&n, 0);
        assert!(matches!(compute_golden(&n, &plan), Err(BistError::CountOutOfRange { .. })));
    }

    #[test]
    fn golden_is_deterministic_and_passes() {
        let n = parse_netlist(TINY).unwrap();
        let plan = tiny_plan(&n, 16);
        let g1 = compute_golden(&n, &plan).unwrap();
        let g2 = compute_golden(&n, &plan).unwrap();
        assert_eq!(g1, g2);
        let plan = plan.with_golden(g1).unwrap();
        assert_eq!(run_selftest(&n, &plan, None).unwrap().passed(), Some(true));
        let json = plan.to_json();
        assert_eq!(BistPlan::from_json(&json).unwrap(), plan);
    }

    #[test]
    fn both_signature_routes_agree() {
        let n = parse_netlist(TINY).unwrap();
        let plan = tiny_plan(&n, 16);
        let golden = compute_golden(&n, &plan).unwrap();
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let fast = error_signatures(&n, &plan, &u, 2).unwrap();
        for (i, f) in u.faults().iter().enumerate() {
            let r = run_selftest(&n, &plan, Some(f)).unwrap();
            let slow: Vec<u64> = r.signatures.iter().zip(&golden).map(|(a, b)| a.value ^ b.value).collect();
            assert_eq!(fast[i], slow, "fault {}", f.label(&n));
        }
    }

    #[test]
    fn detection_rate_needs_golden() {
        let n = parse_netlist(TINY).unwrap();
        let plan = tiny_plan(&n, 16);
        let u = enumerate_faults(&n, &FaultKind::SAF);
        assert_eq!(misr_detection_rate(&n, &plan, &u, 1).unwrap_err(), BistError::MissingGolden);
        let plan = plan.clone().with_golden(compute_golden(&n, &plan).unwrap()).unwrap();
        let empty = FaultUniverse::from_faults(vec![], vec![]);
        assert!(matches!(
            misr_detection_rate(&n, &plan, &empty, 1),
            Err(BistError::FaultSim(FaultSimError::EmptyUniverse))
        ));
        let d = misr_detection_rate(&n, &plan, &u, 1).unwrap();
        assert_eq!(d.misr_detected + d.aliased.len(), d.pre_misr_detected);
    }

    #[test]
    fn plan_wiring_errors() {
        let n = parse_netlist(TINY).unwrap();
        let mut plan = tiny_plan(&n, 4);
        plan.bindings[0] = PortBinding::modular("B", 2, 4);
        assert!(plan.wire(&n).is_err());
        let mut plan = tiny_plan(&n, 4);
        plan.bindings[0] = PortBinding::modular("X", 3, 4);
        assert!(plan.wire(&n).is_err());
        let mut plan = tiny_plan(&n, 4);
        plan.misrs[0].cascade = XorCascade::new(3, 2).unwrap();
        assert!(plan.wire(&n).is_err());
        let plan = tiny_plan(&n, 4);
        assert!(matches!(plan.with_pattern_count(17), Err(BistError::CountOutOfRange { .. })));
        assert!(plan.with_seed(0).is_err());
    }
}
