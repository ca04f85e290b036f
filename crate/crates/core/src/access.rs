// SPDX-License-Identifier: Apache-2.0

//! Serial test access: TAP controller, P1500-style wrapper and trace replay.
//!
//! Every TCK sample is one rising edge. The action belonging to the state
//! the controller is in at that edge happens first (capture, shift, update,
//! or instruction reset), then the controller moves on according to TMS.
//! Register maps are documented in `PROTOCOL.md`.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::bist::{BistError, BistPlan, BistSession, Phase};
use crate::circuit::Netlist;

pub const PROTOCOL_VERSION: u32 = 1;
pub const WIR_WIDTH: usize = 3;
pub const WCDR_WIDTH: usize = 16;
pub const WDR_WIDTH: usize = 18;
/// Largest pattern count SET_COUNT can encode (operand holds count - 1).
pub const MAX_SET_COUNT: u32 = 1 << 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccessError {
    #[error("shift requested in {0}")]
    NotShifting(TapState),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
    #[error(transparent)]
    Bist(#[from] BistError),
}

/// The sixteen 1149.1 controller states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TapState {
    TestLogicReset,
    RunTestIdle,
    SelectDrScan,
    CaptureDr,
    ShiftDr,
    Exit1Dr,
    PauseDr,
    Exit2Dr,
    UpdateDr,
    SelectIrScan,
    CaptureIr,
    ShiftIr,
    Exit1Ir,
    PauseIr,
    Exit2Ir,
    UpdateIr,
}

impl TapState {
    pub const ALL: [TapState; 16] = [
        TapState::TestLogicReset,
        TapState::RunTestIdle,
        TapState::SelectDrScan,
        TapState::CaptureDr,
        TapState::ShiftDr,
        TapState::Exit1Dr,
        TapState::PauseDr,
        TapState::Exit2Dr,
        TapState::UpdateDr,
        TapState::SelectIrScan,
        TapState::CaptureIr,
        TapState::ShiftIr,
        TapState::Exit1Ir,
        TapState::PauseIr,
        TapState::Exit2Ir,
        TapState::UpdateIr,
    ];

    pub fn step(self, tms: bool) -> TapState {
        use TapState::*;
        match (self, tms) {
            (TestLogicReset, false) => RunTestIdle,
            (TestLogicReset, true) => TestLogicReset,
            (RunTestIdle, false) => RunTestIdle,
            (RunTestIdle, true) => SelectDrScan,
            (SelectDrScan, false) => CaptureDr,
            (SelectDrScan, true) => SelectIrScan,
            (CaptureDr, false) => ShiftDr,
            (CaptureDr, true) => Exit1Dr,
            (ShiftDr, false) => ShiftDr,
            (ShiftDr, true) => Exit1Dr,
            (Exit1Dr, false) => PauseDr,
            (Exit1Dr, true) => UpdateDr,
            (PauseDr, false) => PauseDr,
            (PauseDr, true) => Exit2Dr,
            (Exit2Dr, false) => ShiftDr,
            (Exit2Dr, true) => UpdateDr,
            (UpdateDr, false) => RunTestIdle,
            (UpdateDr, true) => SelectDrScan,
            (SelectIrScan, false) => CaptureIr,
            (SelectIrScan, true) => TestLogicReset,
            (CaptureIr, false) => ShiftIr,
            (CaptureIr, true) => Exit1Ir,
            (ShiftIr, false) => ShiftIr,
            (ShiftIr, true) => Exit1Ir,
            (Exit1Ir, false) => PauseIr,
            (Exit1Ir, true) => UpdateIr,
            (PauseIr, false) => PauseIr,
            (PauseIr, true) => Exit2Ir,
            (Exit2Ir, false) => ShiftIr,
            (Exit2Ir, true) => UpdateIr,
            (UpdateIr, false) => RunTestIdle,
            (UpdateIr, true) => SelectDrScan,
        }
    }

    pub fn is_shift(self) -> bool {
        matches!(self, TapState::ShiftDr | TapState::ShiftIr)
    }

    pub fn name(self) -> &'static str {
        use TapState::*;
        match self {
            TestLogicReset => "Test-Logic-Reset",
            RunTestIdle => "Run-Test/Idle",
            SelectDrScan => "Select-DR-Scan",
            CaptureDr => "Capture-DR",
            ShiftDr => "Shift-DR",
            Exit1Dr => "Exit1-DR",
            PauseDr => "Pause-DR",
            Exit2Dr => "Exit2-DR",
            UpdateDr => "Update-DR",
            SelectIrScan => "Select-IR-Scan",
            CaptureIr => "Capture-IR",
            ShiftIr => "Shift-IR",
            Exit1Ir => "Exit1-IR",
            PauseIr => "Pause-IR",
            Exit2Ir => "Exit2-IR",
            UpdateIr => "Update-IR",
        }
    }
}

impl fmt::Display for TapState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn tap_step(state: TapState, tms: bool) -> TapState {
    state.step(tms)
}

/// Wrapper instructions. Codes outside the table select the bypass cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Instruction {
    Bypass,
    WbrSel,
    WcdrSel,
    WdrSel,
}

impl Instruction {
    pub fn code(self) -> u8 {
        match self {
            Instruction::Bypass => 0b000,
            Instruction::WbrSel => 0b001,
            Instruction::WcdrSel => 0b010,
            Instruction::WdrSel => 0b011,
        }
    }

    pub fn decode(code: u8) -> Instruction {
        match code & 0b111 {
            0b001 => Instruction::WbrSel,
            0b010 => Instruction::WcdrSel,
            0b011 => Instruction::WdrSel,
            _ => Instruction::Bypass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Reset,
    SetCount,
    Start,
    Select,
    ReadStatus,
}

impl Command {
    pub fn code(self) -> u16 {
        match self {
            Command::Reset => 0x1,
            Command::SetCount => 0x2,
            Command::Start => 0x3,
            Command::Select => 0x4,
            Command::ReadStatus => 0x5,
        }
    }

    pub fn decode(code: u16) -> Option<Command> {
        Some(match code {
            0x1 => Command::Reset,
            0x2 => Command::SetCount,
            0x3 => Command::Start,
            0x4 => Command::Select,
            0x5 => Command::ReadStatus,
            _ => return None,
        })
    }

    /// 16-bit WCDR word: command in bits 15:12, operand in 11:0.
    pub fn word(self, operand: u16) -> u16 {
        (self.code() << 12) | (operand & 0x0fff)
    }
}

/// Two-bit status field of the WDR.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Idle,
    Running,
    Done,
    Error,
}

impl Status {
    pub fn code(self) -> u32 {
        match self {
            Status::Idle => 0b00,
            Status::Running => 0b01,
            Status::Done => 0b10,
            Status::Error => 0b11,
        }
    }

    pub fn decode(code: u32) -> Status {
        match code & 0b11 {
            0b00 => Status::Idle,
            0b01 => Status::Running,
            0b10 => Status::Done,
            _ => Status::Error,
        }
    }
}

/// WDR word: signature slice in bits 15:0, status in 17:16.
pub fn wdr_word(status: Status, slice: u16) -> u32 {
    (status.code() << 16) | slice as u32
}

pub fn split_wdr(word: u32) -> (Status, u16) {
    (Status::decode(word >> 16), (word & 0xffff) as u16)
}

/// Shift and update stages of all wrapper registers.
///
/// Shift stages are `*_shift`; the other fields are update stages, which
/// only change on Update-IR / Update-DR (the WDR latch is written by the
/// READ_STATUS command, itself an Update-DR effect).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrapperState {
    pub wir_shift: u8,
    pub wir: u8,
    pub wby: bool,
    pub wbr_shift: Vec<bool>,
    pub wbr: Vec<bool>,
    pub wcdr_shift: u16,
    pub wcdr: u16,
    pub wdr_shift: u32,
    pub wdr: u32,
    /// Sticky command error, cleared by RESET.
    pub error: bool,
}

impl WrapperState {
    /// `wbr_len` boundary cells: core inputs first, then core outputs.
    pub fn new(wbr_len: usize) -> Self {
        WrapperState {
            wir_shift: 0,
            wir: Instruction::Bypass.code(),
            wby: false,
            wbr_shift: vec![false; wbr_len],
            wbr: vec![false; wbr_len],
            wcdr_shift: 0,
            wcdr: 0,
            wdr_shift: 0,
            wdr: 0,
            error: false,
        }
    }

    pub fn selected(&self) -> Instruction {
        Instruction::decode(self.wir)
    }

    /// Length of the register currently between TDI and TDO in Shift-DR.
    pub fn selected_len(&self) -> usize {
        match self.selected() {
            Instruction::Bypass => 1,
            Instruction::WbrSel => self.wbr_shift.len(),
            Instruction::WcdrSel => WCDR_WIDTH,
            Instruction::WdrSel => WDR_WIDTH,
        }
    }
}

fn shift_word<T>(reg: T, width: usize, tdi: bool) -> (T, bool)
where
    T: Into<u64> + TryFrom<u64>,
    <T as TryFrom<u64>>::Error: fmt::Debug,
{
    let v: u64 = reg.into();
    let out = v & 1 == 1;
    let next = (v >> 1) | ((tdi as u64) << (width - 1));
    (T::try_from(next).expect("register width"), out)
}

/// One shift clock through WIR (Shift-IR) or the selected data register
/// (Shift-DR). The LSB leaves on TDO, TDI enters at the MSB.
pub fn shift(wrapper: &WrapperState, tap: TapState, tdi: bool) -> Result<(WrapperState, bool), AccessError> {
    let mut w = wrapper.clone();
    let tdo = shift_in_place(&mut w, tap, tdi)?;
    Ok((w, tdo))
}

fn shift_in_place(w: &mut WrapperState, tap: TapState, tdi: bool) -> Result<bool, AccessError> {
    Ok(match tap {
        TapState::ShiftIr => {
            let (r, o) = shift_word(w.wir_shift, WIR_WIDTH, tdi);
            w.wir_shift = r;
            o
        }
        TapState::ShiftDr => match w.selected() {
            Instruction::Bypass => std::mem::replace(&mut w.wby, tdi),
            Instruction::WbrSel => {
                if w.wbr_shift.is_empty() {
                    tdi
                } else {
                    let o = w.wbr_shift.remove(0);
                    w.wbr_shift.push(tdi);
                    o
                }
            }
            Instruction::WcdrSel => {
                let (r, o) = shift_word(w.wcdr_shift, WCDR_WIDTH, tdi);
                w.wcdr_shift = r;
                o
            }
            Instruction::WdrSel => {
                let (r, o) = shift_word(w.wdr_shift, WDR_WIDTH, tdi);
                w.wdr_shift = r;
                o
            }
        },
        other => return Err(AccessError::NotShifting(other)),
    })
}

/// Status as the control unit reports it.
pub fn status_of(wrapper: &WrapperState, session: &BistSession<'_>) -> Status {
    if wrapper.error {
        return Status::Error;
    }
    match session.control().phase {
        Phase::Idle | Phase::Loading => Status::Idle,
        Phase::Running => Status::Running,
        Phase::Done => Status::Done,
    }
}

/// Dispatches the WCDR update-stage word to the control unit.
pub fn execute_command(wrapper: &mut WrapperState, session: &mut BistSession<'_>) -> Result<(), AccessError> {
    let word = wrapper.wcdr;
    let operand = word & 0x0fff;
    let Some(cmd) = Command::decode(word >> 12) else {
        wrapper.error = true;
        return Ok(());
    };
    let outcome = match cmd {
        Command::Reset => {
            session.reset();
            wrapper.error = false;
            Ok(())
        }
        Command::SetCount => session.set_count(operand as u32 + 1),
        Command::Start => session.start().and_then(|_| session.run_to_completion()),
        Command::Select => session.select((operand & 0b11) as u8),
        Command::ReadStatus => {
            let slice = session.selected_signature().value as u16;
            wrapper.wdr = wdr_word(status_of(wrapper, session), slice);
            Ok(())
        }
    };
    match outcome {
        Ok(()) => Ok(()),
        Err(BistError::CountOutOfRange { .. } | BistError::Selector { .. } | BistError::Phase { .. }) => {
            wrapper.error = true;
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

/// A TAP controller, wrapper and BIST engine driven one TCK at a time.
#[derive(Clone, Debug)]
pub struct TapSession<'a> {
    tap: TapState,
    wrapper: WrapperState,
    bist: BistSession<'a>,
}

impl<'a> TapSession<'a> {
    pub fn new(netlist: &'a Netlist, plan: &BistPlan) -> Result<Self, AccessError> {
        let bist = BistSession::new(netlist, plan, None)?;
        let len = netlist.primary_inputs().len() + netlist.primary_outputs().len();
        Ok(TapSession {
            tap: TapState::TestLogicReset,
            wrapper: WrapperState::new(len),
            bist,
        })
    }

    pub fn tap(&self) -> TapState {
        self.tap
    }

    pub fn wrapper(&self) -> &WrapperState {
        &self.wrapper
    }

    pub fn bist(&self) -> &BistSession<'a> {
        &self.bist
    }

    /// One TCK rising edge. Returns TDO when a bit was shifted out.
    pub fn clock(&mut self, tms: bool, tdi: bool) -> Result<Option<bool>, AccessError> {
        let w = &mut self.wrapper;
        let mut tdo = None;
        match self.tap {
            TapState::TestLogicReset => {
                w.wir = Instruction::Bypass.code();
                w.wir_shift = w.wir;
            }
            TapState::CaptureIr => w.wir_shift = 0b001,
            TapState::UpdateIr => w.wir = w.wir_shift,
            TapState::CaptureDr => match w.selected() {
                Instruction::Bypass => w.wby = false,
                Instruction::WbrSel => self.capture_wbr(),
                Instruction::WcdrSel => w.wcdr_shift = w.wcdr,
                Instruction::WdrSel => w.wdr_shift = w.wdr,
            },
            TapState::UpdateDr => match w.selected() {
                Instruction::WbrSel => {
                    let n = self.bist.netlist().primary_inputs().len();
                    let (shifted, kept) = (&w.wbr_shift[..n], &mut w.wbr[..n]);
                    kept.copy_from_slice(shifted);
                }
                Instruction::WcdrSel => {
                    w.wcdr = w.wcdr_shift;
                    execute_command(w, &mut self.bist)?;
                }
                Instruction::Bypass | Instruction::WdrSel => {}
            },
            TapState::ShiftIr | TapState::ShiftDr => tdo = Some(shift_in_place(w, self.tap, tdi)?),
            _ => {}
        }
        self.tap = self.tap.step(tms);
        Ok(tdo)
    }

    /// Input cells keep their driven values; output cells capture the core
    /// response, settled from the flops' initial contents.
    fn capture_wbr(&mut self) {
        let netlist = self.bist.netlist();
        let pis = netlist.primary_inputs();
        let mut values = vec![false; netlist.net_count()];
        for f in netlist.flops() {
            values[f.q.index()] = f.init;
        }
        for (i, &pi) in pis.iter().enumerate() {
            values[pi.index()] = self.wrapper.wbr[i];
        }
        netlist.settle(&mut values);
        let w = &mut self.wrapper;
        w.wbr_shift[..pis.len()].copy_from_slice(&w.wbr[..pis.len()]);
        for (j, &po) in netlist.primary_outputs().iter().enumerate() {
            w.wbr_shift[pis.len() + j] = values[po.index()];
        }
    }
}

/// One recorded TCK edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceSample {
    pub tms: bool,
    pub tdi: bool,
    /// `None` when nothing was shifted out (or not recorded).
    pub tdo: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SerialTrace {
    pub samples: Vec<TraceSample>,
}

impl SerialTrace {
    /// Lines `TCK TMS TDI [TDO]`. TCK counts from 0 without gaps; TDO is
    /// `0`, `1` or `-`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<SerialTrace, AccessError> {
        let mut samples = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| AccessError::Trace { line: ln + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 && f.len() != 4 {
                return Err(err(format!("expected 3 or 4 fields, found {}", f.len())));
            }
            let tck: usize = f[0].parse().map_err(|_| err(format!("bad TCK `{}`", f[0])))?;
            if tck != samples.len() {
                return Err(err(format!("TCK {tck} out of sequence, expected {}", samples.len())));
            }
            let bit = |s: &str, what: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(err(format!("bad {what} `{s}`"))),
            };
            let tdo = match f.get(3) {
                None | Some(&"-") => None,
                Some(s) => Some(bit(s, "TDO")?),
            };
            samples.push(TraceSample {
                tms: bit(f[1], "TMS")?,
                tdi: bit(f[2], "TDI")?,
                tdo,
            });
        }
        Ok(SerialTrace { samples })
    }

    /// Four-column text form.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# TCK TMS TDI TDO\n");
        for (i, s) in self.samples.iter().enumerate() {
            let tdo = match s.tdo {
                None => '-',
                Some(b) => if b { '1' } else { '0' },
            };
            out.push_str(&format!("{i} {} {} {tdo}\n", s.tms as u8, s.tdi as u8));
        }
        out
    }

    /// Three-column form, the input side of a trace.
    pub fn to_stimulus_text(&self) -> String {
        let mut out = String::from("# TCK TMS TDI\n");
        for (i, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{i} {} {}\n", s.tms as u8, s.tdi as u8));
        }
        out
    }

    pub fn tdo_stream(&self) -> Vec<Option<bool>> {
        self.samples.iter().map(|s| s.tdo).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Replays a trace; the returned trace carries the produced TDO.
pub fn drive_trace(session: &mut TapSession<'_>, trace: &SerialTrace) -> Result<SerialTrace, AccessError> {
    let mut out = Vec::with_capacity(trace.len());
    for s in &trace.samples {
        let tdo = session.clock(s.tms, s.tdi)?;
        out.push(TraceSample { tdo, ..*s });
    }
    Ok(SerialTrace { samples: out })
}

/// Index of the first sample whose TDO differs.
pub fn first_divergence(actual: &SerialTrace, expected: &SerialTrace) -> Option<usize> {
    let n = actual.len().max(expected.len());
    (0..n).find(|&i| actual.samples.get(i) != expected.samples.get(i))
}

/// Builds TMS/TDI sequences that start and end in Run-Test/Idle.
#[derive(Clone, Debug, Default)]
pub struct TraceBuilder {
    samples: Vec<TraceSample>,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, tms: bool, tdi: bool) {
        self.samples.push(TraceSample { tms, tdi, tdo: None });
    }

    /// Five TMS=1 clocks, then into Run-Test/Idle.
    pub fn reset(&mut self) -> &mut Self {
        for _ in 0..5 {
            self.push(true, false);
        }
        self.push(false, false);
        self
    }

    pub fn idle(&mut self, clocks: usize) -> &mut Self {
        for _ in 0..clocks {
            self.push(false, false);
        }
        self
    }

    /// Run-Test/Idle to Shift, shifts `bits` (LSB first), Update, back to
    /// Run-Test/Idle. Returns the sample range carrying the shifted-out bits.
    fn scan(&mut self, ir: bool, bits: &[bool]) -> Range<usize> {
        self.push(true, false);
        if ir {
            self.push(true, false);
        }
        self.push(false, false); // to Capture
        self.push(false, false); // Capture, to Shift
        let start = self.samples.len();
        for (i, &b) in bits.iter().enumerate() {
            self.push(i + 1 == bits.len(), b);
        }
        let end = self.samples.len();
        self.push(true, false); // Exit1, to Update
        self.push(false, false); // Update, to Run-Test/Idle
        start..end
    }

    pub fn instruction(&mut self, instr: Instruction) -> &mut Self {
        self.scan(true, &to_bits(instr.code() as u64, WIR_WIDTH));
        self
    }

    pub fn data(&mut self, bits: &[bool]) -> Range<usize> {
        self.scan(false, bits)
    }

    /// Selects WCDR and writes one command word.
    pub fn command(&mut self, cmd: Command, operand: u16) -> &mut Self {
        self.instruction(Instruction::WcdrSel);
        self.data(&to_bits(cmd.word(operand) as u64, WCDR_WIDTH));
        self
    }

    /// READ_STATUS, then a full WDR scan. Returns where the 18 bits appear.
    pub fn read_wdr(&mut self) -> Range<usize> {
        self.command(Command::ReadStatus, 0);
        self.instruction(Instruction::WdrSel);
        self.data(&[false; WDR_WIDTH])
    }

    pub fn build(&self) -> SerialTrace {
        SerialTrace {
            samples: self.samples.clone(),
        }
    }
}

pub fn to_bits(value: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| value >> i & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().rev().fold(0, |acc, &b| acc << 1 | b as u64)
}

/// The standard session: reset, load the count, start, poll, then select
/// and read every MISR.
#[derive(Clone, Debug)]
pub struct SessionScript {
    pub trace: SerialTrace,
    pub poll: Range<usize>,
    pub reads: Vec<Range<usize>>,
}

pub fn standard_session(pattern_count: u32, misr_count: usize) -> SessionScript {
    let mut b = TraceBuilder::new();
    b.reset();
    b.command(Command::Reset, 0);
    b.command(Command::SetCount, (pattern_count.saturating_sub(1) & 0x0fff) as u16);
    b.command(Command::Start, 0);
    let poll = b.read_wdr();
    let reads = (0..misr_count.min(4))
        .map(|m| {
            b.command(Command::Select, m as u16);
            b.read_wdr()
        })
        .collect();
    SessionScript {
        trace: b.build(),
        poll,
        reads,
    }
}

/// Decodes the WDR words read back by a replayed script.
pub fn decode_reads(recorded: &SerialTrace, ranges: &[Range<usize>]) -> Vec<(Status, u16)> {
    ranges
        .iter()
        .map(|r| {
            let bits: Vec<bool> = recorded.samples[r.clone()].iter().map(|s| s.tdo.unwrap_or(false)).collect();
            split_wdr(from_bits(&bits) as u32)
        })
        .collect()
}
