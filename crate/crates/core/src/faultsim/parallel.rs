// SPDX-License-Identifier: Apache-2.0

//! Parallel-pattern single-fault propagation over 64-bit words.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::serial::{serial_detection_rows, serial_fault_sim_with};
use super::{par_map_ranges, CoverageReport, FaultDescriptor, FaultKind, FaultSimError, FaultUniverse, Site};
use crate::circuit::{check_inputs, NetId, Netlist, Reader};

/// Word-level simulator for one batch of up to 64 patterns at a time.
/// Combinational netlists only.
pub struct WordSim<'a> {
    netlist: &'a Netlist,
    topo_pos: Vec<usize>,
    observed: Vec<NetId>,
    good: Vec<u64>,
    work: Vec<u64>,
    touched: Vec<usize>,
    queued: Vec<bool>,
    heap: BinaryHeap<Reverse<usize>>,
    /// Fault-free value of every net under the last pattern of the
    /// previous batch, for transition launch detection.
    prev_last: Vec<bool>,
    batch_start: usize,
    batch_len: usize,
}

impl<'a> WordSim<'a> {
    pub fn new(netlist: &'a Netlist, observed: Vec<NetId>) -> Result<Self, FaultSimError> {
        if !netlist.is_combinational() {
            return Err(FaultSimError::Sequential);
        }
        let mut topo_pos = vec![0; netlist.gates().len()];
        for (pos, &g) in netlist.topo_order().iter().enumerate() {
            topo_pos[g] = pos;
        }
        let n = netlist.net_count();
        Ok(WordSim {
            netlist,
            topo_pos,
            observed,
            good: vec![0; n],
            work: vec![0; n],
            touched: Vec::new(),
            queued: vec![false; netlist.gates().len()],
            heap: BinaryHeap::new(),
            prev_last: vec![false; n],
            batch_start: 0,
            batch_len: 0,
        })
    }

    pub fn batch_start(&self) -> usize {
        self.batch_start
    }

    pub fn batch_len(&self) -> usize {
        self.batch_len
    }

    pub fn valid_mask(&self) -> u64 {
        if self.batch_len == 64 {
            !0
        } else {
            (1u64 << self.batch_len) - 1
        }
    }

    /// Fault-free word of a net in the current batch.
    pub fn good(&self, net: NetId) -> u64 {
        self.good[net.index()]
    }

    /// Loads patterns `start..start+64` and settles the fault-free machine.
    /// Batches must be loaded in increasing order for transition faults.
    pub fn load_batch(&mut self, patterns: &[Vec<bool>], start: usize) {
        if self.batch_len > 0 && start == self.batch_start + self.batch_len {
            let last = self.batch_len - 1;
            for (p, g) in self.prev_last.iter_mut().zip(&self.good) {
                *p = (g >> last) & 1 == 1;
            }
        }
        let len = (patterns.len() - start).min(64);
        self.batch_start = start;
        self.batch_len = len;
        for (i, &pi) in self.netlist.primary_inputs().iter().enumerate() {
            let mut w = 0u64;
            for (t, p) in patterns[start..start + len].iter().enumerate() {
                w |= (p[i] as u64) << t;
            }
            self.good[pi.index()] = w;
        }
        self.netlist.settle_words(&mut self.good);
        self.work.copy_from_slice(&self.good);
    }

    /// Patterns in this batch where the fault is active.
    fn activation(&self, fault: &FaultDescriptor) -> u64 {
        let valid = self.valid_mask();
        match fault.kind {
            FaultKind::Sa0 | FaultKind::Sa1 => valid,
            FaultKind::Str | FaultKind::Stf => {
                let n = fault.site.net().index();
                let cur = self.good[n];
                let prev = (cur << 1) | self.prev_last[n] as u64;
                let mut launch = if fault.kind == FaultKind::Str {
                    !prev & cur
                } else {
                    prev & !cur
                };
                if self.batch_start == 0 {
                    launch &= !1;
                }
                launch & valid
            }
        }
    }

    fn schedule_readers(&mut self, net: NetId) {
        for r in self.netlist.readers(net) {
            if let Reader::Gate { gate, .. } = *r {
                if !self.queued[gate] {
                    self.queued[gate] = true;
                    self.heap.push(Reverse(self.topo_pos[gate]));
                }
            }
        }
    }

    fn set(&mut self, net: NetId, value: u64) {
        if self.work[net.index()] != value {
            self.work[net.index()] = value;
            self.touched.push(net.index());
            self.schedule_readers(net);
        }
    }

    /// Injects the fault into the working copy and propagates it.
    fn inject(&mut self, fault: &FaultDescriptor) {
        let active = self.activation(fault);
        if active == 0 {
            return;
        }
        let forced = if fault.kind.forced_value() { active } else { 0 };
        match fault.site {
            Site::Stem(n) => {
                let v = (self.good[n.index()] & !active) | forced;
                self.set(n, v);
            }
            Site::Branch { gate, pin, .. } => {
                let g = &self.netlist.gates()[gate];
                let work = &self.work;
                let v = g.kind.eval_word(g.inputs.iter().enumerate().map(|(p, n)| {
                    let w = work[n.index()];
                    if p == pin {
                        (w & !active) | forced
                    } else {
                        w
                    }
                }));
                self.set(g.output, v);
            }
        }
        let topo = self.netlist.topo_order();
        while let Some(Reverse(pos)) = self.heap.pop() {
            let gate = topo[pos];
            self.queued[gate] = false;
            let g = &self.netlist.gates()[gate];
            let work = &self.work;
            let v = g.kind.eval_word(g.inputs.iter().map(|n| work[n.index()]));
            self.set(g.output, v);
        }
    }

    fn restore(&mut self) {
        for &n in &self.touched {
            self.work[n] = self.good[n];
        }
        self.touched.clear();
    }

    /// Patterns of this batch where some observed net differs.
    pub fn detect(&mut self, fault: &FaultDescriptor) -> u64 {
        self.inject(fault);
        let mut diff = 0u64;
        for &o in &self.observed {
            diff |= self.work[o.index()] ^ self.good[o.index()];
        }
        self.restore();
        diff & self.valid_mask()
    }

    /// Per observed net difference words.
    pub fn diffs(&mut self, fault: &FaultDescriptor) -> Vec<u64> {
        self.inject(fault);
        let valid = self.valid_mask();
        let out = self
            .observed
            .iter()
            .map(|o| (self.work[o.index()] ^ self.good[o.index()]) & valid)
            .collect();
        self.restore();
        out
    }
}

fn check_patterns(netlist: &Netlist, patterns: &[Vec<bool>]) -> Result<(), FaultSimError> {
    if patterns.is_empty() {
        return Err(FaultSimError::NoPatterns);
    }
    for p in patterns {
        check_inputs(netlist, p)?;
    }
    Ok(())
}

/// Bit-parallel fault simulation with fault dropping. Rejects sequential
/// netlists; use [`run_fault_sim`](super::run_fault_sim) for automatic
/// fallback.
pub fn parallel_fault_sim(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
) -> Result<CoverageReport, FaultSimError> {
    parallel_fault_sim_with(netlist, universe, patterns, 1)
}

pub(crate) fn parallel_fault_sim_with(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
    workers: usize,
) -> Result<CoverageReport, FaultSimError> {
    if !netlist.is_combinational() {
        return Err(FaultSimError::Sequential);
    }
    check_patterns(netlist, patterns)?;
    let faults = universe.faults();
    let observed = netlist.observed_nets();
    let first = par_map_ranges(faults.len(), workers, |range| {
        let mut sim = WordSim::new(netlist, observed.clone()).expect("combinational");
        let mut first: Vec<Option<u32>> = vec![None; range.len()];
        let mut alive: Vec<usize> = range.clone().collect();
        let mut start = 0;
        while start < patterns.len() && !alive.is_empty() {
            sim.load_batch(patterns, start);
            alive.retain(|&i| {
                let diff = sim.detect(&faults[i]);
                if diff != 0 {
                    first[i - range.start] = Some((start + diff.trailing_zeros() as usize) as u32);
                    false
                } else {
                    true
                }
            });
            start += 64;
        }
        first
    });
    Ok(CoverageReport::new(universe, patterns.len(), first))
}

/// Transition-fault coverage with launch-on-capture over consecutive
/// pattern pairs. Uses the word simulator for combinational netlists and
/// serial replay otherwise.
pub fn tdf_sim(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
    workers: usize,
) -> Result<CoverageReport, FaultSimError> {
    if patterns.len() < 2 {
        return Err(FaultSimError::TooFewPatterns(patterns.len()));
    }
    if let Some(i) = universe.faults().iter().position(|f| !f.kind.is_transition()) {
        return Err(FaultSimError::NotTransition(i));
    }
    if netlist.is_combinational() {
        parallel_fault_sim_with(netlist, universe, patterns, workers)
    } else {
        serial_fault_sim_with(netlist, universe, patterns, workers)
    }
}

/// Per-pattern detection bits for every fault, packed 64 per word, without
/// fault dropping.
pub fn detection_rows(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
    workers: usize,
) -> Result<Vec<Vec<u64>>, FaultSimError> {
    if !netlist.is_combinational() {
        return serial_detection_rows(netlist, universe, patterns, workers);
    }
    check_patterns(netlist, patterns)?;
    let faults = universe.faults();
    let observed = netlist.observed_nets();
    let words = patterns.len().div_ceil(64);
    Ok(par_map_ranges(faults.len(), workers, |range| {
        let mut sim = WordSim::new(netlist, observed.clone()).expect("combinational");
        let mut rows = vec![vec![0u64; words]; range.len()];
        #[allow(clippy::needless_range_loop)]
        for b in 0..words {
            sim.load_batch(patterns, b * 64);
            for i in range.clone() {
                rows[i - range.start][b] = sim.detect(&faults[i]);
            }
        }
        rows
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_netlist;
    use crate::faultsim::{enumerate_faults, serial_fault_sim};

    #[test]
    fn rejects_sequential_and_empty() {
        let seq = parse_netlist("INPUT(a)\nOUTPUT(q)\nq = DFF(a)").unwrap();
        let u = enumerate_faults(&seq, &FaultKind::SAF);
        assert_eq!(
            parallel_fault_sim(&seq, &u, &[vec![true]]).unwrap_err(),
            FaultSimError::Sequential
        );
        let comb = parse_netlist("INPUT(a)\nOUTPUT(y)\ny = NOT(a)").unwrap();
        let u = enumerate_faults(&comb, &FaultKind::SAF);
        assert_eq!(parallel_fault_sim(&comb, &u, &[]).unwrap_err(), FaultSimError::NoPatterns);
    }

    #[test]
    fn tail_batch_matches_serial() {
        let n = parse_netlist(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nOUTPUT(z)\nt = NAND(a,b)\ny = XOR(t,c)\nz = NOR(a,t)",
        )
        .unwrap();
        let u = enumerate_faults(&n, &FaultKind::ALL);
        // 67 patterns where the only detecting inputs come late.
        let mut pats: Vec<Vec<bool>> = vec![vec![true, true, false]; 64];
        pats.extend([vec![false, true, true], vec![true, false, false], vec![false, false, false]]);
        let a = parallel_fault_sim(&n, &u, &pats).unwrap();
        let b = serial_fault_sim(&n, &u, &pats).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tdf_requires_two_patterns() {
        let n = parse_netlist("INPUT(a)\nOUTPUT(y)\ny = BUF(a)").unwrap();
        let u = enumerate_faults(&n, &FaultKind::TDF);
        assert_eq!(tdf_sim(&n, &u, &[vec![true]], 1).unwrap_err(), FaultSimError::TooFewPatterns(1));
        let saf = enumerate_faults(&n, &FaultKind::SAF);
        assert!(matches!(
            tdf_sim(&n, &saf, &[vec![true], vec![false]], 1).unwrap_err(),
            FaultSimError::NotTransition(0)
        ));
    }
}
