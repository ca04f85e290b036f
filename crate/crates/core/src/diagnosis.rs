// SPDX-License-Identifier: Apache-2.0

//! Diagnostic matrices and equivalent fault classes.
//!
//! A syndrome is either the per-pattern detection bit vector of a fault or
//! its per-MISR signature difference from the golden run. Faults with an
//! all-zero syndrome are undetected; they are kept in one separate class,
//! since their "equivalence" only says the test cannot see them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bist::{error_signatures, BistError, BistPlan};
use crate::circuit::Netlist;
use crate::faultsim::{detection_rows, FaultDescriptor, FaultKind, FaultSimError, FaultUniverse};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const MATRIX_MAGIC: &[u8; 8] = b"BBDMTX01";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosisError {
    #[error("granularity mismatch: {0} vs {1}")]
    GranularityMismatch(Granularity, Granularity),
    #[error("matrices cover different fault lists")]
    FaultMismatch,
    #[error("signature syndromes need a BIST plan")]
    NeedsPlan,
    #[error("packed matrix: {0}")]
    Format(String),
    #[error(transparent)]
    FaultSim(#[from] FaultSimError),
    #[error(transparent)]
    Bist(#[from] BistError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Pattern,
    Signature,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Pattern => "pattern",
            Granularity::Signature => "signature",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pattern" => Ok(Granularity::Pattern),
            "signature" => Ok(Granularity::Signature),
            other => Err(format!("unknown granularity `{other}` (pattern|signature)")),
        }
    }
}

/// Where the observations come from.
#[derive(Clone, Copy, Debug)]
pub enum Stimulus<'a> {
    Patterns(&'a [Vec<bool>]),
    Plan(&'a BistPlan),
}

/// One syndrome row per fault, in fault-universe order.
///
/// Pattern rows pack detection bits 64 per word (bit `p % 64` of word
/// `p / 64` is pattern `p`). Signature rows hold one difference word per MISR.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagnosticMatrix {
    granularity: Granularity,
    columns: usize,
    faults: Vec<FaultDescriptor>,
    block_names: Vec<String>,
    rows: Vec<Vec<u64>>,
}

impl DiagnosticMatrix {
    pub fn new(
        granularity: Granularity,
        columns: usize,
        universe: &FaultUniverse,
        rows: Vec<Vec<u64>>,
    ) -> DiagnosticMatrix {
        assert_eq!(rows.len(), universe.len(), "one row per fault");
        DiagnosticMatrix {
            granularity,
            columns,
            faults: universe.faults().to_vec(),
            block_names: universe.block_names().to_vec(),
            rows,
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Patterns (pattern granularity) or MISRs (signature granularity).
    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn faults(&self) -> &[FaultDescriptor] {
        &self.faults
    }

    pub fn block_names(&self) -> &[String] {
        &self.block_names
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn row(&self, fault: usize) -> &[u64] {
        &self.rows[fault]
    }

    /// Detection bit of a pattern-granularity matrix.
    pub fn bit(&self, fault: usize, pattern: usize) -> bool {
        self.rows[fault][pattern / 64] >> (pattern % 64) & 1 == 1
    }

    pub fn is_detected(&self, fault: usize) -> bool {
        self.rows[fault].iter().any(|&w| w != 0)
    }

    /// Appends the columns of `other` (same faults, same granularity).
    pub fn concat(&self, other: &DiagnosticMatrix) -> Result<DiagnosticMatrix, DiagnosisError> {
        if self.granularity != other.granularity {
            return Err(DiagnosisError::GranularityMismatch(self.granularity, other.granularity));
        }
        if self.faults != other.faults {
            return Err(DiagnosisError::FaultMismatch);
        }
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| match self.granularity {
                Granularity::Signature => a.iter().chain(b).copied().collect(),
                Granularity::Pattern => append_bits(a, self.columns, b, other.columns),
            })
            .collect();
        Ok(DiagnosticMatrix {
            granularity: self.granularity,
            columns: self.columns + other.columns,
            faults: self.faults.clone(),
            block_names: self.block_names.clone(),
            rows,
        })
    }
}

fn append_bits(a: &[u64], a_len: usize, b: &[u64], b_len: usize) -> Vec<u64> {
    let mut out = vec![0u64; (a_len + b_len).div_ceil(64)];
    out[..a.len()].copy_from_slice(a);
    for p in 0..b_len {
        if b[p / 64] >> (p % 64) & 1 == 1 {
            let q = a_len + p;
            out[q / 64] |= 1 << (q % 64);
        }
    }
    out
}

/// Builds the syndrome of every fault of `universe`.
pub fn build_matrix(
    netlist: &Netlist,
    universe: &FaultUniverse,
    stimulus: Stimulus<'_>,
    granularity: Granularity,
    workers: usize,
) -> Result<DiagnosticMatrix, DiagnosisError> {
    match (granularity, stimulus) {
        (Granularity::Pattern, Stimulus::Patterns(p)) => {
            let rows = detection_rows(netlist, universe, p, workers)?;
            Ok(DiagnosticMatrix::new(granularity, p.len(), universe, rows))
        }
        (Granularity::Pattern, Stimulus::Plan(plan)) => {
            let p = plan.patterns(netlist)?;
            let rows = detection_rows(netlist, universe, &p, workers)?;
            Ok(DiagnosticMatrix::new(granularity, p.len(), universe, rows))
        }
        (Granularity::Signature, Stimulus::Plan(plan)) => {
            let rows = error_signatures(netlist, plan, universe, workers)?;
            Ok(DiagnosticMatrix::new(granularity, plan.misrs.len(), universe, rows))
        }
        (Granularity::Signature, Stimulus::Patterns(_)) => Err(DiagnosisError::NeedsPlan),
    }
}

/// Size statistics of one scope. `*_all` figures count undetected faults
/// as one extra class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub scope: String,
    pub faults: usize,
    pub undetected: usize,
    pub classes: usize,
    pub max_size: usize,
    pub mean_size: Option<f64>,
    pub max_size_all: usize,
    pub mean_size_all: Option<f64>,
}

/// Partition of the faults by identical syndrome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub schema_version: u32,
    pub granularity: Granularity,
    pub columns: usize,
    /// Detected classes, numbered by their smallest member.
    pub classes: Vec<Vec<usize>>,
    pub undetected: Vec<usize>,
    /// Per block (declaration order), `(unassigned)` if any, then `total`.
    pub rows: Vec<ClassRow>,
}

impl ClassReport {
    /// Class number of every fault; undetected faults map to `None`.
    pub fn class_of(&self) -> Vec<Option<usize>> {
        let n = self.classes.iter().map(Vec::len).sum::<usize>() + self.undetected.len();
        let mut out = vec![None; n];
        for (c, members) in self.classes.iter().enumerate() {
            for &f in members {
                out[f] = Some(c);
            }
        }
        out
    }

    pub fn total(&self) -> &ClassRow {
        self.rows.last().expect("total row")
    }
}

/// Canonical little-endian bytes of a syndrome.
fn canonical(row: &[u64]) -> Vec<u8> {
    row.iter().flat_map(|w| w.to_le_bytes()).collect()
}

fn stats(scope: &str, faults: &[usize], class_of: &[Option<usize>]) -> ClassRow {
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    let mut undetected = 0;
    for &f in faults {
        match class_of[f] {
            Some(c) => *sizes.entry(c).or_default() += 1,
            None => undetected += 1,
        }
    }
    let detected = faults.len() - undetected;
    let classes = sizes.len();
    let max_size = sizes.values().copied().max().unwrap_or(0);
    let all_classes = classes + usize::from(undetected > 0);
    ClassRow {
        scope: scope.to_string(),
        faults: faults.len(),
        undetected,
        classes,
        max_size,
        mean_size: (classes > 0).then(|| detected as f64 / classes as f64),
        max_size_all: max_size.max(undetected),
        mean_size_all: (all_classes > 0).then(|| faults.len() as f64 / all_classes as f64),
    }
}

/// Groups identical syndromes.
pub fn classify(matrix: &DiagnosticMatrix) -> ClassReport {
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut undetected = Vec::new();
    let mut class_of = vec![None; matrix.rows.len()];
    for (f, row) in matrix.rows.iter().enumerate() {
        if !matrix.is_detected(f) {
            undetected.push(f);
            continue;
        }
        let c = *index.entry(canonical(row)).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        classes[c].push(f);
        class_of[f] = Some(c);
    }
    let mut rows = Vec::new();
    for (b, name) in matrix.block_names.iter().enumerate() {
        let members: Vec<usize> = (0..matrix.faults.len()).filter(|&f| matrix.faults[f].block == Some(b)).collect();
        rows.push(stats(name, &members, &class_of));
    }
    let orphans: Vec<usize> = (0..matrix.faults.len()).filter(|&f| matrix.faults[f].block.is_none()).collect();
    if !orphans.is_empty() {
        rows.push(stats("(unassigned)", &orphans, &class_of));
    }
    let all: Vec<usize> = (0..matrix.faults.len()).collect();
    rows.push(stats("total", &all, &class_of));
    ClassReport {
        schema_version: REPORT_SCHEMA_VERSION,
        granularity: matrix.granularity,
        columns: matrix.columns,
        classes,
        undetected,
        rows,
    }
}

/// True when every class of `fine` lies inside one class of `coarse`
/// (undetected faults count as one class in both).
pub fn is_refinement(fine: &ClassReport, coarse: &ClassReport) -> bool {
    let f = fine.class_of();
    let c = coarse.class_of();
    if f.len() != c.len() {
        return false;
    }
    let mut seen: HashMap<Option<usize>, Option<usize>> = HashMap::new();
    f.iter().zip(&c).all(|(a, b)| *seen.entry(*a).or_insert(*b) == *b)
}

/// Before/after statistics of adding observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub before: Vec<ClassRow>,
    pub after: Vec<ClassRow>,
    #[serde(skip)]
    pub report: Option<ClassReport>,
}

/// Classifies `base` extended with the columns of `extra`.
pub fn refine(base: &DiagnosticMatrix, extra: &DiagnosticMatrix) -> Result<(DiagnosticMatrix, Refinement), DiagnosisError> {
    let merged = base.concat(extra)?;
    let before = classify(base);
    let after = classify(&merged);
    Ok((
        merged,
        Refinement {
            before: before.rows,
            after: after.rows.clone(),
            report: Some(after),
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixHeader {
    pub schema_version: u32,
    pub granularity: Granularity,
    pub columns: usize,
    pub words_per_row: usize,
    pub blocks: Vec<String>,
    pub faults: Vec<MatrixFault>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFault {
    pub label: String,
    pub kind: FaultKind,
    pub block: Option<usize>,
}

/// `MATRIX_MAGIC`, header length (u32 LE), JSON header, then every row as
/// little-endian u64 words.
pub fn export_packed(matrix: &DiagnosticMatrix, netlist: &Netlist) -> Vec<u8> {
    let words = matrix.rows.first().map_or(0, Vec::len);
    let header = MatrixHeader {
        schema_version: REPORT_SCHEMA_VERSION,
        granularity: matrix.granularity,
        columns: matrix.columns,
        words_per_row: words,
        blocks: matrix.block_names.clone(),
        faults: matrix
            .faults
            .iter()
            .map(|f| MatrixFault {
                label: f.label(netlist),
                kind: f.kind,
                block: f.block,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 8 * words * matrix.rows.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for row in &matrix.rows {
        out.extend(canonical(row));
    }
    out
}

pub fn import_packed(bytes: &[u8]) -> Result<(MatrixHeader, Vec<Vec<u64>>), DiagnosisError> {
    let bad = |m: &str| DiagnosisError::Format(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != MATRIX_MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: MatrixHeader = serde_json::from_slice(body).map_err(|e| DiagnosisError::Format(e.to_string()))?;
    let data = &bytes[12 + hlen..];
    let row_bytes = header.words_per_row * 8;
    if data.len() != row_bytes * header.faults.len() {
        return Err(bad("row data length does not match header"));
    }
    let rows = if row_bytes == 0 {
        vec![Vec::new(); header.faults.len()]
    } else {
        data.chunks(row_bytes)
            .map(|r| r.chunks(8).map(|w| u64::from_le_bytes(w.try_into().expect("8 bytes"))).collect())
            .collect()
    };
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_netlist;
    use crate::faultsim::{enumerate_faults, Site};

    fn and2() -> Netlist {
        parse_netlist("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a,b)\n").unwrap()
    }

    fn exhaustive(n: usize) -> Vec<Vec<bool>> {
        (0..1u32 << n).map(|v| (0..n).map(|i| v >> (n - 1 - i) & 1 == 1).collect()).collect()
    }

    #[test]
    fn and_gate_sa0_class() {
        let n = and2();
        let u = enumerate_faults(&n, &FaultKind::SAF);
        let m = build_matrix(&n, &u, Stimulus::Patterns(&exhaustive(2)), Granularity::Pattern, 1).unwrap();
        let r = classify(&m);
        let sa0: Vec<usize> = (0..u.len()).filter(|&i| u.faults()[i].kind == FaultKind::Sa0).collect();
        assert_eq!(sa0.len(), 3);
        assert!(r.classes.contains(&sa0));
        assert_eq!(r.total().max_size, 3);
        assert!(r.undetected.is_empty());
        let sizes: usize = r.classes.iter().map(Vec::len).sum();
        assert_eq!(sizes, u.len());
    }

    #[test]
    fn single_fault_single_row() {
        let n = and2();
        let u = enumerate_faults(&n, &FaultKind::SAF);
        let one = FaultUniverse::from_faults(vec![u.faults()[0]], vec![]);
        let m = build_matrix(&n, &one, Stimulus::Patterns(&exhaustive(2)), Granularity::Pattern, 1).unwrap();
        assert_eq!(m.rows().len(), 1);
        assert_eq!(m.columns(), 4);
        assert!(matches!(
            build_matrix(&n, &one, Stimulus::Patterns(&exhaustive(2)), Granularity::Signature, 1),
            Err(DiagnosisError::NeedsPlan)
        ));
    }

    #[test]
    fn refine_splits_only() {
        let n = and2();
        let u = enumerate_faults(&n, &FaultKind::SAF);
        let pats = exhaustive(2);
        let first = build_matrix(&n, &u, Stimulus::Patterns(&pats[3..]), Granularity::Pattern, 1).unwrap();
        let same = build_matrix(&n, &u, Stimulus::Patterns(&pats[3..]), Granularity::Pattern, 1).unwrap();
        let (_, r) = refine(&first, &same).unwrap();
        assert_eq!(r.before.last().unwrap().classes, r.after.last().unwrap().classes);
        let rest = build_matrix(&n, &u, Stimulus::Patterns(&pats[..3]), Granularity::Pattern, 1).unwrap();
        let (merged, r) = refine(&first, &rest).unwrap();
        assert_eq!(merged.columns(), 4);
        assert!(r.after.last().unwrap().classes > r.before.last().unwrap().classes);
        assert!(is_refinement(r.report.as_ref().unwrap(), &classify(&first)));
    }

    #[test]
    fn bit_concat_crosses_words() {
        let a = vec![u64::MAX, 0b1];
        let b = vec![0b101];
        let out = append_bits(&a, 65, &b, 3);
        assert_eq!(out, vec![u64::MAX, 0b1011]);
    }

    #[test]
    fn packed_round_trip() {
        let n = and2();
        let u = enumerate_faults(&n, &FaultKind::ALL);
        let m = build_matrix(&n, &u, Stimulus::Patterns(&exhaustive(2)), Granularity::Pattern, 1).unwrap();
        let bytes = export_packed(&m, &n);
        let (h, rows) = import_packed(&bytes).unwrap();
        assert_eq!(rows, m.rows());
        assert_eq!(h.columns, 4);
        assert_eq!(h.faults[0].label, "a/SA0");
        assert!(import_packed(&bytes[..bytes.len() - 1]).is_err());
        assert!(import_packed(b"nope").is_err());
        assert!(matches!(u.faults()[0].site, Site::Stem(_)));
    }

    #[test]
    fn undetected_faults_separate() {
        // y = a OR NOT a is constant 1, so some faults stay invisible
        let n = parse_netlist("INPUT(a)\nOUTPUT(y)\nna = NOT(a)\ny = OR(a,na)\n").unwrap();
        let u = enumerate_faults(&n, &FaultKind::SAF);
        let m = build_matrix(&n, &u, Stimulus::Patterns(&exhaustive(1)), Granularity::Pattern, 1).unwrap();
        let r = classify(&m);
        assert!(!r.undetected.is_empty());
        let t = r.total();
        assert_eq!(t.undetected, r.undetected.len());
        assert_eq!(t.faults, u.len());
        let mean_all = t.mean_size_all.unwrap();
        assert!((mean_all - u.len() as f64 / (t.classes + 1) as f64).abs() < 1e-12);
    }
}
