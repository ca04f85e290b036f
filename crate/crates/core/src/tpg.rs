// SPDX-License-Identifier: Apache-2.0

//! Test pattern generation: Fibonacci ALFSR, constraint generators and the
//! mapping of generator bits onto block input ports.
//!
//! Register convention: bit `i` of the register word is stage `i`. One step
//! computes the feedback as the XOR of stage 0 and every stage `e` for which
//! `x^e` (0 < e < degree) appears in the polynomial, shifts the register one
//! place towards stage 0 and inserts the feedback at stage `degree - 1`. The
//! produced sequence has the polynomial as its characteristic polynomial, so
//! a primitive polynomial yields period `2^degree - 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TpgError {
    #[error("invalid polynomial `{text}`: {msg}")]
    Polynomial { text: String, msg: String },
    #[error("polynomial degree {0} outside 2..=64")]
    Degree(u32),
    #[error("tap x^{tap} outside 1..={degree}")]
    Tap { tap: u32, degree: u32 },
    #[error("all-zero seed is a fixed point of the feedback")]
    ZeroSeed,
    #[error("seed has {got} bits, polynomial degree is {expected}")]
    SeedLength { expected: usize, got: usize },
    #[error("constraint program: {0}")]
    Program(String),
    #[error("binding for block `{block}`: {msg}")]
    Binding { block: String, msg: String },
}

/// Characteristic polynomial over GF(2) with an implicit constant term.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Polynomial {
    degree: u32,
    /// Exponents in descending order; always contains `degree`.
    taps: Vec<u32>,
    feedback: u64,
}

impl Polynomial {
    /// `taps` lists the non-constant exponents; `degree` itself may be omitted.
    pub fn new(degree: u32, taps: &[u32]) -> Result<Self, TpgError> {
        if !(2..=64).contains(&degree) {
            return Err(TpgError::Degree(degree));
        }
        let mut all: Vec<u32> = taps.to_vec();
        all.push(degree);
        for &t in &all {
            if t == 0 || t > degree {
                return Err(TpgError::Tap { tap: t, degree });
            }
        }
        all.sort_unstable_by(|a, b| b.cmp(a));
        all.dedup();
        let mut feedback = 1u64;
        for &t in &all {
            if t < degree {
                feedback |= 1u64 << t;
            }
        }
        Ok(Polynomial {
            degree,
            taps: all,
            feedback,
        })
    }

    /// x^20 + x^3 + 1, the pattern generator default.
    pub fn default_alfsr() -> Self {
        Polynomial::new(20, &[3]).expect("valid")
    }

    /// x^16 + x^14 + x^13 + x^11 + 1, the signature register default.
    pub fn default_misr() -> Self {
        Polynomial::new(16, &[14, 13, 11]).expect("valid")
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Non-constant exponents, highest first.
    pub fn taps(&self) -> &[u32] {
        &self.taps
    }

    pub fn mask(&self) -> u64 {
        if self.degree == 64 {
            !0
        } else {
            (1u64 << self.degree) - 1
        }
    }

    /// One autonomous shift of a register word.
    #[inline]
    pub fn step(&self, register: u64) -> u64 {
        let fb = (register & self.feedback).count_ones() as u64 & 1;
        (register >> 1) | (fb << (self.degree - 1))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.taps {
            match t {
                1 => f.write_str("x+")?,
                _ => write!(f, "x^{t}+")?,
            }
        }
        f.write_str("1")
    }
}

impl FromStr for Polynomial {
    type Err = TpgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: &str| TpgError::Polynomial {
            text: s.to_string(),
            msg: msg.to_string(),
        };
        let mut exps = Vec::new();
        let mut constant = false;
        for term in s.split('+') {
            let term = term.trim();
            if term == "1" {
                if constant {
                    return Err(bad("constant term repeated"));
                }
                constant = true;
            } else if term == "x" {
                exps.push(1);
            } else if let Some(e) = term.strip_prefix("x^") {
                let e: u32 = e.trim().parse().map_err(|_| bad("bad exponent"))?;
                if e == 0 {
                    return Err(bad("use `1` for the constant term"));
                }
                exps.push(e);
            } else {
                return Err(bad("terms must be `x^k`, `x` or `1`"));
            }
        }
        if !constant {
            return Err(bad("constant term `1` is required"));
        }
        let degree = *exps.iter().max().ok_or_else(|| bad("no x^k term"))?;
        let n = exps.len();
        exps.sort_unstable();
        exps.dedup();
        if exps.len() != n {
            return Err(bad("repeated term"));
        }
        Polynomial::new(degree, &exps)
    }
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Exponents of one primitive polynomial per degree 2..=24, without the
/// leading and constant terms.
const PRIMITIVE_TAPS: [&[u32]; 23] = [
    &[1],
    &[2],
    &[3],
    &[3],
    &[5],
    &[6],
    &[6, 5, 4],
    &[5],
    &[7],
    &[9],
    &[6, 4, 1],
    &[4, 3, 1],
    &[5, 3, 1],
    &[14],
    &[15, 13, 4],
    &[14],
    &[11],
    &[6, 2, 1],
    &[17],
    &[19],
    &[21],
    &[18],
    &[23, 22, 17],
];

/// A primitive polynomial of the given degree (2..=24).
pub fn primitive_polynomial(degree: u32) -> Option<Polynomial> {
    let taps = PRIMITIVE_TAPS.get(degree.checked_sub(2)? as usize)?;
    Polynomial::new(degree, taps).ok()
}

/// Fibonacci ALFSR contents. Never all-zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AlfsrState {
    polynomial: Polynomial,
    register: u64,
}

/// Validates a seed given stage-by-stage (`bits[i]` is stage `i`).
pub fn seed(polynomial: &Polynomial, seed_bits: &[bool]) -> Result<AlfsrState, TpgError> {
    let expected = polynomial.degree() as usize;
    if seed_bits.len() != expected {
        return Err(TpgError::SeedLength {
            expected,
            got: seed_bits.len(),
        });
    }
    let value = seed_bits
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i));
    AlfsrState::from_value(polynomial.clone(), value)
}

impl AlfsrState {
    pub fn from_value(polynomial: Polynomial, value: u64) -> Result<Self, TpgError> {
        if value & !polynomial.mask() != 0 {
            return Err(TpgError::SeedLength {
                expected: polynomial.degree() as usize,
                got: 64 - value.leading_zeros() as usize,
            });
        }
        if value == 0 {
            return Err(TpgError::ZeroSeed);
        }
        Ok(AlfsrState {
            polynomial,
            register: value,
        })
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.polynomial
    }

    pub fn register(&self) -> u64 {
        self.register
    }

    pub fn bit(&self, stage: u32) -> bool {
        (self.register >> stage) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.polynomial.degree()).map(|i| self.bit(i)).collect()
    }

    /// Successor state.
    pub fn step(&self) -> AlfsrState {
        AlfsrState {
            polynomial: self.polynomial.clone(),
            register: self.polynomial.step(self.register),
        }
    }

    pub fn advance(&mut self) {
        self.register = self.polynomial.step(self.register);
    }

    /// Steps until the register returns to its current value.
    pub fn period(&self) -> u64 {
        let start = self.register;
        let limit = if self.polynomial.degree() >= 64 {
            u64::MAX
        } else {
            1u64 << self.polynomial.degree()
        };
        let mut r = self.polynomial.step(start);
        let mut n = 1u64;
        while r != start && n < limit {
            r = self.polynomial.step(r);
            n += 1;
        }
        n
    }
}

/// Free-function form of [`AlfsrState::step`].
pub fn alfsr_step(state: &AlfsrState) -> AlfsrState {
    state.step()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CgEntry {
    /// Port value, bit `i` drives constrained bit `i`.
    pub value: u64,
    pub hold: u32,
}

/// Declarative constraint generator: a schedule of held port values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintProgram {
    port_width: usize,
    schedule: Vec<CgEntry>,
    cyclic: bool,
    total: u64,
}

impl ConstraintProgram {
    pub fn new(port_width: usize, schedule: Vec<CgEntry>, cyclic: bool) -> Result<Self, TpgError> {
        if port_width == 0 || port_width > 64 {
            return Err(TpgError::Program(format!("port width {port_width} outside 1..=64")));
        }
        if schedule.is_empty() {
            return Err(TpgError::Program("empty schedule".into()));
        }
        let mut total = 0u64;
        for e in &schedule {
            if e.hold == 0 {
                return Err(TpgError::Program("hold count must be at least 1".into()));
            }
            if port_width < 64 && e.value >> port_width != 0 {
                return Err(TpgError::Program(format!(
                    "value {:#x} does not fit {port_width} bits",
                    e.value
                )));
            }
            total += e.hold as u64;
        }
        Ok(ConstraintProgram {
            port_width,
            schedule,
            cyclic,
            total,
        })
    }

    pub fn port_width(&self) -> usize {
        self.port_width
    }

    pub fn schedule(&self) -> &[CgEntry] {
        &self.schedule
    }

    pub fn cyclic(&self) -> bool {
        self.cyclic
    }

    /// Port value at `cycle`.
    pub fn value_at(&self, cycle: u64) -> u64 {
        let mut t = if self.cyclic {
            cycle % self.total
        } else if cycle >= self.total {
            return self.schedule.last().map(|e| e.value).unwrap_or(0);
        } else {
            cycle
        };
        for e in &self.schedule {
            if t < e.hold as u64 {
                return e.value;
            }
            t -= e.hold as u64;
        }
        unreachable!("cycle within schedule length")
    }

    pub fn cg_step(&self, cycle: u64) -> Vec<bool> {
        let v = self.value_at(cycle);
        (0..self.port_width).map(|i| (v >> i) & 1 == 1).collect()
    }
}

/// Where one block input bit comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitSource {
    Alfsr(u32),
    Cg(u32),
}

/// The four wiring situations for a block input port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Situation {
    /// No constrained inputs, port fits the ALFSR.
    A,
    /// No constrained inputs, port wider than the ALFSR (replication).
    B,
    /// Constrained inputs, remaining bits fit the ALFSR.
    C,
    /// Constrained inputs, remaining bits need replication.
    D,
}

/// Source of every input bit of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PortBinding {
    block: String,
    sources: Vec<BitSource>,
    cg: Option<ConstraintProgram>,
}

impl PortBinding {
    /// Input bit `i` takes ALFSR stage `i mod degree`.
    pub fn modular(block: impl Into<String>, width: usize, degree: u32) -> Self {
        PortBinding {
            block: block.into(),
            sources: (0..width)
                .map(|i| BitSource::Alfsr((i % degree as usize) as u32))
                .collect(),
            cg: None,
        }
    }

    /// Constraint bit `k` drives input bit `cg_bits[k]`; every other input
    /// bit `i` takes ALFSR stage `i mod degree`.
    pub fn with_constraints(
        block: impl Into<String>,
        width: usize,
        degree: u32,
        program: ConstraintProgram,
        cg_bits: &[usize],
    ) -> Result<Self, TpgError> {
        let block = block.into();
        if cg_bits.len() != program.port_width() {
            return Err(TpgError::Binding {
                block,
                msg: format!(
                    "{} constrained bits listed for a {}-bit generator",
                    cg_bits.len(),
                    program.port_width()
                ),
            });
        }
        let mut sources: Vec<BitSource> = (0..width)
            .map(|i| BitSource::Alfsr((i % degree as usize) as u32))
            .collect();
        let mut taken = vec![false; width];
        for (k, &bit) in cg_bits.iter().enumerate() {
            if bit >= width || std::mem::replace(&mut taken[bit], true) {
                return Err(TpgError::Binding {
                    block,
                    msg: format!("constrained bit {bit} out of range or repeated"),
                });
            }
            sources[bit] = BitSource::Cg(k as u32);
        }
        PortBinding::from_sources(block, sources, Some(program))
    }

    /// Explicit binding table.
    pub fn from_sources(
        block: impl Into<String>,
        sources: Vec<BitSource>,
        cg: Option<ConstraintProgram>,
    ) -> Result<Self, TpgError> {
        let block = block.into();
        let cg_width = cg.as_ref().map_or(0, |p| p.port_width());
        let mut used = vec![false; cg_width];
        for s in &sources {
            if let BitSource::Cg(k) = *s {
                if k as usize >= cg_width {
                    return Err(TpgError::Binding {
                        block,
                        msg: format!("constraint bit {k} beyond a {cg_width}-bit generator"),
                    });
                }
                if std::mem::replace(&mut used[k as usize], true) {
                    return Err(TpgError::Binding {
                        block,
                        msg: format!("constraint bit {k} drives more than one input"),
                    });
                }
            }
        }
        Ok(PortBinding { block, sources, cg })
    }

    pub fn block(&self) -> &str {
        &self.block
    }

    pub fn width(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[BitSource] {
        &self.sources
    }

    pub fn constraint_program(&self) -> Option<&ConstraintProgram> {
        self.cg.as_ref()
    }

    /// Input bit positions driven by the constraint generator, by CG bit.
    pub fn cg_bits(&self) -> Vec<usize> {
        let mut bits: Vec<(u32, usize)> = self
            .sources
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                BitSource::Cg(k) => Some((*k, i)),
                BitSource::Alfsr(_) => None,
            })
            .collect();
        bits.sort_unstable();
        bits.into_iter().map(|(_, i)| i).collect()
    }

    pub fn situation(&self, degree: u32) -> Situation {
        let free = self
            .sources
            .iter()
            .filter(|s| matches!(s, BitSource::Alfsr(_)))
            .count();
        let wide = free > degree as usize;
        match (self.cg.is_some(), wide) {
            (false, false) => Situation::A,
            (false, true) => Situation::B,
            (true, false) => Situation::C,
            (true, true) => Situation::D,
        }
    }

    /// Checks the binding against a block width and generator degree.
    pub fn validate(&self, block_width: usize, degree: u32) -> Result<(), TpgError> {
        if self.sources.len() != block_width {
            return Err(TpgError::Binding {
                block: self.block.clone(),
                msg: format!(
                    "binds {} bits, block input port has {block_width}",
                    self.sources.len()
                ),
            });
        }
        for s in &self.sources {
            if let BitSource::Alfsr(i) = *s {
                if i >= degree {
                    return Err(TpgError::Binding {
                        block: self.block.clone(),
                        msg: format!("ALFSR stage {i} beyond degree {degree}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Input pattern for one block at `cycle`, LSB-first.
pub fn assemble_pattern(binding: &PortBinding, alfsr: &AlfsrState, cycle: u64) -> Result<Vec<bool>, TpgError> {
    let degree = alfsr.polynomial().degree();
    binding.validate(binding.width(), degree)?;
    let cg = binding.cg.as_ref().map(|p| p.value_at(cycle)).unwrap_or(0);
    Ok(binding
        .sources
        .iter()
        .map(|s| match *s {
            BitSource::Alfsr(i) => alfsr.bit(i),
            BitSource::Cg(k) => (cg >> k) & 1 == 1,
        })
        .collect())
}
