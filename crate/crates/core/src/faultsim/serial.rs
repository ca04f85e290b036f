// SPDX-License-Identifier: Apache-2.0

//! Scalar fault injection and the serial reference simulator.

use super::{par_map_ranges, CoverageReport, FaultDescriptor, FaultKind, FaultSimError, FaultUniverse, Site};
use crate::circuit::{check_inputs, EvalError, NetId, Netlist};

/// Two-valued machine with at most one fault injected, one clock per
/// [`cycle`](Self::cycle). Flops start at their reset value.
///
/// Stuck-at faults force their site every cycle. A transition fault on net
/// `n` holds the old value for one cycle whenever the value computed for `n`
/// makes the slow transition, which is launch-on-capture for consecutive
/// patterns.
#[derive(Clone, Debug)]
pub struct FaultyMachine<'a> {
    netlist: &'a Netlist,
    fault: Option<FaultDescriptor>,
    values: Vec<bool>,
    flops: Vec<bool>,
    prev_computed: Option<bool>,
}

impl<'a> FaultyMachine<'a> {
    pub fn new(netlist: &'a Netlist, fault: Option<FaultDescriptor>) -> Self {
        FaultyMachine {
            netlist,
            fault,
            values: vec![false; netlist.net_count()],
            flops: netlist.flops().iter().map(|f| f.init).collect(),
            prev_computed: None,
        }
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = false);
        for (s, f) in self.flops.iter_mut().zip(self.netlist.flops()) {
            *s = f.init;
        }
        self.prev_computed = None;
    }

    pub fn fault(&self) -> Option<&FaultDescriptor> {
        self.fault.as_ref()
    }

    /// Net values settled in the last cycle.
    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn value(&self, net: NetId) -> bool {
        self.values[net.index()]
    }

    fn apply_stem(&mut self, net: NetId, kind: FaultKind) {
        let computed = self.values[net.index()];
        let delivered = match kind {
            FaultKind::Sa0 => false,
            FaultKind::Sa1 => true,
            FaultKind::Str => {
                if self.prev_computed == Some(false) && computed {
                    false
                } else {
                    computed
                }
            }
            FaultKind::Stf => {
                if self.prev_computed == Some(true) && !computed {
                    true
                } else {
                    computed
                }
            }
        };
        self.prev_computed = Some(computed);
        self.values[net.index()] = delivered;
    }

    pub fn cycle(&mut self, inputs: &[bool]) -> Result<&[bool], EvalError> {
        check_inputs(self.netlist, inputs)?;
        let netlist = self.netlist;
        for (&pi, &v) in netlist.primary_inputs().iter().zip(inputs) {
            self.values[pi.index()] = v;
        }
        for (f, flop) in netlist.flops().iter().enumerate() {
            self.values[flop.q.index()] = self.flops[f];
        }
        let (stem, branch, kind) = match self.fault {
            Some(FaultDescriptor {
                site: Site::Stem(n),
                kind,
                ..
            }) => (Some(n), None, kind),
            Some(FaultDescriptor {
                site: Site::Branch { gate, pin, .. },
                kind,
                ..
            }) => (None, Some((gate, pin)), kind),
            None => (None, None, FaultKind::Sa0),
        };
        if let Some(n) = stem {
            if !matches!(netlist.driver(n), crate::circuit::Driver::Gate(_)) {
                self.apply_stem(n, kind);
            }
        }
        for &g in netlist.topo_order() {
            let gate = &netlist.gates()[g];
            let values = &self.values;
            let v = match branch {
                Some((bg, bpin)) if bg == g => gate.kind.eval(
                    gate.inputs
                        .iter()
                        .enumerate()
                        .map(|(pin, n)| if pin == bpin { kind.forced_value() } else { values[n.index()] }),
                ),
                _ => gate.kind.eval(gate.inputs.iter().map(|n| values[n.index()])),
            };
            self.values[gate.output.index()] = v;
            if stem == Some(gate.output) {
                self.apply_stem(gate.output, kind);
            }
        }
        for (f, flop) in netlist.flops().iter().enumerate() {
            self.flops[f] = self.values[flop.d.index()];
        }
        Ok(&self.values)
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

fn good_responses(netlist: &Netlist, observed: &[NetId], patterns: &[Vec<bool>]) -> Result<Vec<Vec<bool>>, FaultSimError> {
    let mut good = FaultyMachine::new(netlist, None);
    patterns
        .iter()
        .map(|p| {
            let v = good.cycle(p)?;
            Ok(observed.iter().map(|n| v[n.index()]).collect())
        })
        .collect()
}

/// Reference fault simulator: one full replay per fault, stopping at the
/// first pattern where any observed net differs from the fault-free run.
pub fn serial_fault_sim(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
) -> Result<CoverageReport, FaultSimError> {
    serial_fault_sim_with(netlist, universe, patterns, 1)
}

pub(crate) fn serial_fault_sim_with(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
    workers: usize,
) -> Result<CoverageReport, FaultSimError> {
    check_patterns(netlist, patterns)?;
    let observed = netlist.observed_nets();
    let good = good_responses(netlist, &observed, patterns)?;
    let faults = universe.faults();
    let first = par_map_ranges(faults.len(), workers, |range| {
        range
            .map(|i| {
                let mut m = FaultyMachine::new(netlist, Some(faults[i]));
                for (t, p) in patterns.iter().enumerate() {
                    let v = m.cycle(p).expect("patterns checked");
                    if observed.iter().zip(&good[t]).any(|(n, &g)| v[n.index()] != g) {
                        return Some(t as u32);
                    }
                }
                None
            })
            .collect()
    });
    Ok(CoverageReport::new(universe, patterns.len(), first))
}

/// Full per-pattern detection bits for every fault (no fault dropping),
/// packed 64 patterns per word.
pub fn serial_detection_rows(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
    workers: usize,
) -> Result<Vec<Vec<u64>>, FaultSimError> {
    check_patterns(netlist, patterns)?;
    let observed = netlist.observed_nets();
    let good = good_responses(netlist, &observed, patterns)?;
    let faults = universe.faults();
    let words = patterns.len().div_ceil(64);
    Ok(par_map_ranges(faults.len(), workers, |range| {
        range
            .map(|i| {
                let mut row = vec![0u64; words];
                let mut m = FaultyMachine::new(netlist, Some(faults[i]));
                for (t, p) in patterns.iter().enumerate() {
                    let v = m.cycle(p).expect("patterns checked");
                    if observed.iter().zip(&good[t]).any(|(n, &g)| v[n.index()] != g) {
                        row[t / 64] |= 1u64 << (t % 64);
                    }
                }
                row
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_netlist;
    use crate::faultsim::enumerate_faults;

    fn find(u: &FaultUniverse, n: &Netlist, label: &str) -> usize {
        u.faults().iter().position(|f| f.label(n) == label).unwrap()
    }

    #[test]
    fn and_output_sa0() {
        let n = parse_netlist("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a,b)").unwrap();
        let u = enumerate_faults(&n, &FaultKind::SAF);
        let y0 = find(&u, &n, "y/SA0");
        let r = serial_fault_sim(&n, &u, &[vec![true, true]]).unwrap();
        assert_eq!(r.first_detection[y0], Some(0));
        let r = serial_fault_sim(&n, &u, &[vec![false, false], vec![false, true], vec![true, false]]).unwrap();
        assert_eq!(r.first_detection[y0], None);
        assert_eq!(serial_fault_sim(&n, &u, &[]).unwrap_err(), FaultSimError::NoPatterns);
    }

    #[test]
    fn buffer_transition() {
        let n = parse_netlist("INPUT(a)\nOUTPUT(y)\ny = BUF(a)").unwrap();
        let u = enumerate_faults(&n, &FaultKind::TDF);
        let a_str = find(&u, &n, "a/STR");
        let r = serial_fault_sim(&n, &u, &[vec![false], vec![true]]).unwrap();
        assert_eq!(r.first_detection[a_str], Some(1));
        let r = serial_fault_sim(&n, &u, &[vec![true], vec![true]]).unwrap();
        assert_eq!(r.first_detection[a_str], None);
    }

    #[test]
    fn sequential_fault_propagates_through_flop() {
        let n = parse_netlist("INPUT(a)\nOUTPUT(q)\nq = DFF(a)").unwrap();
        let u = enumerate_faults(&n, &FaultKind::SAF);
        let a1 = find(&u, &n, "a/SA1");
        let r = serial_fault_sim(&n, &u, &[vec![false], vec![false]]).unwrap();
        assert_eq!(r.first_detection[a1], Some(1));
    }
}
