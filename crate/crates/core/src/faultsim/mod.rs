// SPDX-License-Identifier: Apache-2.0

//! Fault universes, structural collapsing and fault simulation.
//!
//! Stuck-at faults sit on fault *sites*: the stem of every net, plus one
//! branch per gate input pin when the net fans out to more than one
//! consumer (gate pins, flop D pins and observation points all count).
//! Transition delay faults sit on nets only.
//!
//! Two simulators are provided. [`serial_fault_sim`] replays the whole
//! pattern sequence once per fault with a scalar evaluator and is the
//! reference. [`parallel_fault_sim`] packs 64 patterns per machine word and
//! only re-evaluates the fanout cone of the fault; it must agree with the
//! serial path bit for bit.

mod parallel;
mod serial;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{EvalError, NetId, Netlist, Reader};

pub use parallel::{detection_rows, parallel_fault_sim, tdf_sim, WordSim};
pub use serial::{serial_detection_rows, serial_fault_sim, FaultyMachine};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaultSimError {
    #[error("no patterns")]
    NoPatterns,
    #[error("transition faults need at least 2 patterns, got {0}")]
    TooFewPatterns(usize),
    #[error("parallel simulation requires a combinational netlist")]
    Sequential,
    #[error("empty universe")]
    EmptyUniverse,
    #[error("fault {0} is not a transition fault")]
    NotTransition(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    #[serde(rename = "SA0")]
    Sa0,
    #[serde(rename = "SA1")]
    Sa1,
    /// Slow to rise.
    #[serde(rename = "STR")]
    Str,
    /// Slow to fall.
    #[serde(rename = "STF")]
    Stf,
}

impl FaultKind {
    pub const SAF: [FaultKind; 2] = [FaultKind::Sa0, FaultKind::Sa1];
    pub const TDF: [FaultKind; 2] = [FaultKind::Str, FaultKind::Stf];
    pub const ALL: [FaultKind; 4] = [FaultKind::Sa0, FaultKind::Sa1, FaultKind::Str, FaultKind::Stf];

    pub fn is_transition(self) -> bool {
        matches!(self, FaultKind::Str | FaultKind::Stf)
    }

    /// Value the site is forced to while the fault is active.
    pub fn forced_value(self) -> bool {
        match self {
            FaultKind::Sa0 | FaultKind::Str => false,
            FaultKind::Sa1 | FaultKind::Stf => true,
        }
    }

    pub fn group(self) -> FaultGroup {
        if self.is_transition() {
            FaultGroup::Tdf
        } else {
            FaultGroup::Saf
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FaultKind::Sa0 => "SA0",
            FaultKind::Sa1 => "SA1",
            FaultKind::Str => "STR",
            FaultKind::Stf => "STF",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultGroup {
    #[serde(rename = "SAF")]
    Saf,
    #[serde(rename = "TDF")]
    Tdf,
}

impl fmt::Display for FaultGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultGroup::Saf => "SAF",
            FaultGroup::Tdf => "TDF",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    /// The net itself, as seen by every consumer.
    Stem(NetId),
    /// One gate input pin of a fanout net.
    Branch { net: NetId, gate: usize, pin: usize },
}

impl Site {
    pub fn net(self) -> NetId {
        match self {
            Site::Stem(n) | Site::Branch { net: n, .. } => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaultDescriptor {
    pub site: Site,
    pub kind: FaultKind,
    /// Index of the class representative in the owning universe.
    pub class_id: usize,
    /// First block (declaration order) whose output cone contains the site.
    pub block: Option<usize>,
}

impl FaultDescriptor {
    /// `net/SA0`, or `net>gate_output.pin/SA0` for branch sites.
    pub fn label(&self, netlist: &Netlist) -> String {
        match self.site {
            Site::Stem(n) => format!("{}/{}", netlist.net_name(n), self.kind.label()),
            Site::Branch { net, gate, pin } => format!(
                "{}>{}.{}/{}",
                netlist.net_name(net),
                netlist.net_name(netlist.gates()[gate].output),
                pin,
                self.kind.label()
            ),
        }
    }
}

/// Ordered fault list with its collapse map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultUniverse {
    faults: Vec<FaultDescriptor>,
    block_names: Vec<String>,
}

impl FaultUniverse {
    pub fn from_faults(faults: Vec<FaultDescriptor>, block_names: Vec<String>) -> Self {
        FaultUniverse { faults, block_names }
    }

    pub fn faults(&self) -> &[FaultDescriptor] {
        &self.faults
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn block_names(&self) -> &[String] {
        &self.block_names
    }

    pub fn counts(&self) -> BTreeMap<FaultKind, usize> {
        let mut m = BTreeMap::new();
        for f in &self.faults {
            *m.entry(f.kind).or_insert(0) += 1;
        }
        m
    }

    /// Indices of class representatives.
    pub fn representative_indices(&self) -> Vec<usize> {
        (0..self.faults.len())
            .filter(|&i| self.faults[i].class_id == i)
            .collect()
    }

    /// A new universe holding only the representatives (each its own class).
    pub fn representatives(&self) -> FaultUniverse {
        let faults = self
            .representative_indices()
            .into_iter()
            .enumerate()
            .map(|(new, old)| FaultDescriptor {
                class_id: new,
                ..self.faults[old]
            })
            .collect();
        FaultUniverse::from_faults(faults, self.block_names.clone())
    }

    /// Sub-universe of faults of one group, renumbered.
    pub fn of_group(&self, group: FaultGroup) -> FaultUniverse {
        let keep: Vec<usize> = (0..self.faults.len())
            .filter(|&i| self.faults[i].kind.group() == group)
            .collect();
        let mut remap = vec![usize::MAX; self.faults.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let faults = keep
            .iter()
            .enumerate()
            .map(|(new, &old)| {
                let f = self.faults[old];
                let class = remap[f.class_id];
                FaultDescriptor {
                    class_id: if class == usize::MAX { new } else { class },
                    ..f
                }
            })
            .collect();
        FaultUniverse::from_faults(faults, self.block_names.clone())
    }

    /// Classes as member lists, ordered by representative.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut by_rep: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, f) in self.faults.iter().enumerate() {
            by_rep.entry(f.class_id).or_default().push(i);
        }
        by_rep.into_values().collect()
    }
}

/// Number of consumers of a net, counting observation as one.
fn fanout_count(netlist: &Netlist, net: NetId, observed: &[bool]) -> usize {
    netlist.readers(net).len() + observed[net.index()] as usize
}

fn block_assignment(netlist: &Netlist) -> Vec<Option<usize>> {
    let mut owner = vec![None; netlist.net_count()];
    for (b, block) in netlist.blocks().iter().enumerate() {
        let cone = netlist.fanin_cone(&block.output_port);
        for (i, inside) in cone.into_iter().enumerate() {
            if inside && owner[i].is_none() {
                owner[i] = Some(b);
            }
        }
    }
    owner
}

/// Builds the uncollapsed fault list: stuck-at faults on every site, then
/// transition faults on every net, in net order.
pub fn enumerate_faults(netlist: &Netlist, kinds: &[FaultKind]) -> FaultUniverse {
    let mut observed = vec![false; netlist.net_count()];
    for n in netlist.observed_nets() {
        observed[n.index()] = true;
    }
    let owner = block_assignment(netlist);
    let saf: Vec<FaultKind> = FaultKind::SAF.into_iter().filter(|k| kinds.contains(k)).collect();
    let tdf: Vec<FaultKind> = FaultKind::TDF.into_iter().filter(|k| kinds.contains(k)).collect();
    let mut faults = Vec::new();
    let push = |site: Site, kind: FaultKind, faults: &mut Vec<FaultDescriptor>| {
        let idx = faults.len();
        faults.push(FaultDescriptor {
            site,
            kind,
            class_id: idx,
            block: owner[site.net().index()],
        });
    };
    if !saf.is_empty() {
        for net in netlist.nets() {
            for &k in &saf {
                push(Site::Stem(net), k, &mut faults);
            }
            if fanout_count(netlist, net, &observed) > 1 {
                for r in netlist.readers(net) {
                    if let Reader::Gate { gate, pin } = *r {
                        for &k in &saf {
                            push(Site::Branch { net, gate, pin }, k, &mut faults);
                        }
                    }
                }
            }
        }
    }
    for net in netlist.nets() {
        for &k in &tdf {
            push(Site::Stem(net), k, &mut faults);
        }
    }
    let block_names = netlist.blocks().iter().map(|b| b.name.clone()).collect();
    FaultUniverse::from_faults(faults, block_names)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// Keeps the smaller index as root so representatives are the earliest
    /// member of each class.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Applies gate-local stuck-at equivalences:
/// AND/NAND inputs SA0 with output SA0/SA1, OR/NOR inputs SA1 with output
/// SA1/SA0, NOT input SAv with output SA!v, BUF input SAv with output SAv.
/// Transition faults are left uncollapsed.
pub fn collapse(universe: &FaultUniverse, netlist: &Netlist) -> FaultUniverse {
    use crate::circuit::GateKind::*;

    let mut index: BTreeMap<(Site, FaultKind), usize> = BTreeMap::new();
    for (i, f) in universe.faults.iter().enumerate() {
        index.insert((f.site, f.kind), i);
    }
    let mut uf = UnionFind((0..universe.len()).collect());
    let input_site = |gate: usize, pin: usize, net: NetId| {
        let branch = Site::Branch { net, gate, pin };
        if index.contains_key(&(branch, FaultKind::Sa0)) || index.contains_key(&(branch, FaultKind::Sa1)) {
            branch
        } else {
            Site::Stem(net)
        }
    };
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (g, gate) in netlist.gates().iter().enumerate() {
        let out = Site::Stem(gate.output);
        // (input value, output value) pairs that are equivalent.
        let rules: &[(bool, bool)] = match gate.kind {
            And => &[(false, false)],
            Nand => &[(false, true)],
            Or => &[(true, true)],
            Nor => &[(true, false)],
            Not => &[(false, true), (true, false)],
            Buf => &[(false, false), (true, true)],
            Xor | Xnor => &[],
        };
        for (pin, &net) in gate.inputs.iter().enumerate() {
            let site = input_site(g, pin, net);
            for &(vin, vout) in rules {
                let kin = if vin { FaultKind::Sa1 } else { FaultKind::Sa0 };
                let kout = if vout { FaultKind::Sa1 } else { FaultKind::Sa0 };
                if let (Some(&a), Some(&b)) = (index.get(&(site, kin)), index.get(&(out, kout))) {
                    pairs.push((a, b));
                }
            }
        }
    }
    for (a, b) in pairs {
        uf.union(a, b);
    }
    let faults = universe
        .faults
        .iter()
        .enumerate()
        .map(|(i, f)| FaultDescriptor {
            class_id: uf.find(i),
            ..*f
        })
        .collect();
    FaultUniverse::from_faults(faults, universe.block_names.clone())
}

/// Per-fault detection results of one simulation run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageReport {
    pub pattern_count: usize,
    pub faults: Vec<FaultDescriptor>,
    pub block_names: Vec<String>,
    /// Index of the first detecting pattern (for transition faults: the
    /// capture pattern of the first detecting pair).
    pub first_detection: Vec<Option<u32>>,
}

impl CoverageReport {
    pub(crate) fn new(universe: &FaultUniverse, pattern_count: usize, first_detection: Vec<Option<u32>>) -> Self {
        CoverageReport {
            pattern_count,
            faults: universe.faults.clone(),
            block_names: universe.block_names.clone(),
            first_detection,
        }
    }

    pub fn detected(&self) -> usize {
        self.first_detection.iter().filter(|d| d.is_some()).count()
    }

    pub fn is_detected(&self, fault: usize) -> bool {
        self.first_detection[fault].is_some()
    }

    /// The report restricted to the first `n` patterns.
    pub fn truncated(&self, n: usize) -> CoverageReport {
        CoverageReport {
            pattern_count: n.min(self.pattern_count),
            faults: self.faults.clone(),
            block_names: self.block_names.clone(),
            first_detection: self
                .first_detection
                .iter()
                .map(|d| d.filter(|&i| (i as usize) < n))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    /// Block name, `(unassigned)` or `total`.
    pub scope: String,
    pub group: FaultGroup,
    pub faults: usize,
    pub detected: usize,
    /// Percentage, 0..=100.
    pub coverage: f64,
}

/// Per-group, per-block coverage table. An empty universe is an error
/// rather than 100 %.
pub fn coverage(report: &CoverageReport) -> Result<Vec<CoverageRow>, FaultSimError> {
    if report.faults.is_empty() {
        return Err(FaultSimError::EmptyUniverse);
    }
    let mut rows = Vec::new();
    for group in [FaultGroup::Saf, FaultGroup::Tdf] {
        let in_group: Vec<usize> = (0..report.faults.len())
            .filter(|&i| report.faults[i].kind.group() == group)
            .collect();
        if in_group.is_empty() {
            continue;
        }
        let mut scopes: Vec<(String, Option<Option<usize>>)> = report
            .block_names
            .iter()
            .enumerate()
            .map(|(b, name)| (name.clone(), Some(Some(b))))
            .collect();
        if in_group.iter().any(|&i| report.faults[i].block.is_none()) {
            scopes.push(("(unassigned)".to_string(), Some(None)));
        }
        scopes.push(("total".to_string(), None));
        for (scope, filter) in scopes {
            let members: Vec<usize> = in_group
                .iter()
                .copied()
                .filter(|&i| filter.is_none_or(|b| report.faults[i].block == b))
                .collect();
            let detected = members.iter().filter(|&&i| report.is_detected(i)).count();
            let faults = members.len();
            rows.push(CoverageRow {
                scope,
                group,
                faults,
                detected,
                coverage: if faults == 0 {
                    0.0
                } else {
                    100.0 * detected as f64 / faults as f64
                },
            });
        }
    }
    Ok(rows)
}

/// Fault simulation with the fastest applicable engine: bit-parallel for
/// combinational netlists, serial replay otherwise. `workers` threads share
/// the fault list; the result does not depend on the worker count.
pub fn run_fault_sim(
    netlist: &Netlist,
    universe: &FaultUniverse,
    patterns: &[Vec<bool>],
    workers: usize,
) -> Result<CoverageReport, FaultSimError> {
    if netlist.is_combinational() {
        parallel::parallel_fault_sim_with(netlist, universe, patterns, workers)
    } else {
        serial::serial_fault_sim_with(netlist, universe, patterns, workers)
    }
}

/// Splits `0..n` into at most `workers` contiguous ranges.
pub(crate) fn partition(n: usize, workers: usize) -> Vec<std::ops::Range<usize>> {
    let workers = workers.max(1).min(n.max(1));
    let chunk = n.div_ceil(workers);
    (0..workers)
        .map(|w| (w * chunk).min(n)..((w + 1) * chunk).min(n))
        .filter(|r| !r.is_empty())
        .collect()
}

/// Runs `f` over fault-index ranges on scoped threads and concatenates the
/// per-range results in index order.
pub(crate) fn par_map_ranges<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Vec<T> + Sync,
{
    let ranges = partition(n, workers);
    if ranges.len() <= 1 {
        return ranges.into_iter().flat_map(&f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|r| {
                let f = &f;
                s.spawn(move || f(r))
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("fault simulation worker panicked"))
            .collect()
    })
}
