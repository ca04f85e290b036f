// SPDX-License-Identifier: Apache-2.0

//! The `bistbench` command line.
//!
//! Exit codes: 0 success, 1 validation failure (bad input, failed
//! comparison), 2 runtime error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::access::{self, drive_trace, first_divergence, SerialTrace, TapSession};
use crate::bist::{self, BistError, BistPlan, CASE_STUDY_BLOCKS};
use crate::circuit::{parse_netlist, Netlist};
use crate::compactor::format_hex;
use crate::diagnosis::{self, DiagnosisError, Granularity, Stimulus};
use crate::faultsim::{self, FaultGroup, FaultKind, FaultSimError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "BISTBENCH_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "bistbench", version, about = "BIST workbench for wrapped logic cores")]
pub struct Cli {
    /// Fault-simulation worker threads (results do not depend on it).
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Directory for report files; reports go to stdout without it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and check a netlist.
    Lint { netlist: PathBuf },
    /// Golden signatures, self-test, fault coverage and compaction loss.
    Bist(RunArgs),
    /// Fault coverage of the plan's patterns or of a pattern file.
    Faultsim {
        #[command(flatten)]
        run: RunArgs,
        /// External pattern file instead of generated patterns.
        #[arg(long = "pattern-file")]
        pattern_file: Option<PathBuf>,
    },
    /// Compare an external pattern set with the generated one.
    Import {
        #[command(flatten)]
        run: RunArgs,
        /// External pattern file.
        patterns_file: PathBuf,
    },
    /// Replay a serial trace through the TAP and wrapper.
    Tap {
        #[command(flatten)]
        run: RunArgs,
        /// Trace file; omit with `--standard`.
        trace: Option<PathBuf>,
        /// Use the standard session script as input trace.
        #[arg(long)]
        standard: bool,
        /// Recorded trace to compare against.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
    /// Equivalent fault classes.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "pattern-file")]
        pattern_file: Option<PathBuf>,
        #[arg(long, default_value = "pattern")]
        granularity: Granularity,
    },
    /// Render JSON reports as text tables.
    Report { files: Vec<PathBuf> },
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    pub netlist: PathBuf,
    /// Plan file; the default plan is derived from the netlist blocks.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Override the pattern count.
    #[arg(long)]
    pub patterns: Option<u32>,
    /// Override the ALFSR seed (decimal or 0x hex).
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "all")]
    pub faults: FaultSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultSet {
    Saf,
    Tdf,
    All,
}

impl FaultSet {
    fn kinds(self) -> &'static [FaultKind] {
        match self {
            FaultSet::Saf => &FaultKind::SAF,
            FaultSet::Tdf => &FaultKind::TDF,
            FaultSet::All => &FaultKind::ALL,
        }
    }
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("bad seed `{s}`: {e}"))
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<BistError> for CliError {
    fn from(e: BistError) -> Self {
        match e {
            BistError::Eval(_) | BistError::FaultSim(_) | BistError::Inconsistent(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FaultSimError> for CliError {
    fn from(e: FaultSimError) -> Self {
        match e {
            FaultSimError::Eval(_) | FaultSimError::NoPatterns | FaultSimError::TooFewPatterns(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<DiagnosisError> for CliError {
    fn from(e: DiagnosisError) -> Self {
        match e {
            DiagnosisError::Bist(b) => b.into(),
            DiagnosisError::FaultSim(f) => f.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<access::AccessError> for CliError {
    fn from(e: access::AccessError) -> Self {
        match e {
            access::AccessError::Bist(b) => b.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn workers(cli: &Cli) -> usize {
    cli.workers
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_netlist(path: &Path) -> CliResult<Netlist> {
    let text = read_text(path)?;
    let n = parse_netlist(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(with_default_block(n))
}

/// Netlists without block pragmas become one block `CORE` spanning all
/// primary inputs and outputs.
pub fn with_default_block(netlist: Netlist) -> Netlist {
    if !netlist.blocks().is_empty() || netlist.primary_inputs().is_empty() || netlist.primary_outputs().is_empty() {
        return netlist;
    }
    let names = |ids: &[crate::circuit::NetId]| {
        ids.iter().map(|&n| netlist.net_name(n)).collect::<Vec<_>>().join(",")
    };
    let text = format!(
        "#@block CORE in: {} out: {}\n{}",
        names(netlist.primary_inputs()),
        names(netlist.primary_outputs()),
        netlist.to_bench()
    );
    parse_netlist(&text).expect("adding a block keeps the netlist valid")
}

/// Plan file, else the case-study plan when its blocks exist, else the
/// generic default; then the overrides.
pub fn resolve_plan(netlist: &Netlist, args: &RunArgs) -> CliResult<BistPlan> {
    let mut plan = match &args.plan {
        Some(p) => BistPlan::from_json(&read_text(p)?).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?,
        None if CASE_STUDY_BLOCKS.iter().all(|b| netlist.block(b).is_some()) => BistPlan::case_study(netlist)?,
        None => BistPlan::default_for(netlist)?,
    };
    if let Some(n) = args.patterns {
        plan = plan.with_pattern_count(n)?;
    }
    if let Some(s) = args.seed {
        plan = plan.with_seed(s)?;
    }
    plan.wire(netlist)?;
    Ok(plan)
}

/// Pattern file: one vector per line, `#` comments. Each vector is the
/// input ports in plan binding order, each port written MSB-left.
pub fn parse_patterns(text: &str, netlist: &Netlist, plan: &BistPlan) -> CliResult<Vec<Vec<bool>>> {
    let wiring = plan.wire(netlist)?;
    let widths: Vec<usize> = plan.bindings.iter().map(|b| b.width()).collect();
    let total: usize = widths.iter().sum();
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.len() != total {
            return Err(CliError::Validation(format!(
                "pattern line {}: width {} does not match the {} input bits of the bound ports",
                ln + 1,
                line.len(),
                total
            )));
        }
        let mut ports: Vec<Vec<bool>> = Vec::with_capacity(widths.len());
        let mut chars = line.chars();
        for &w in &widths {
            let mut port = vec![false; w];
            for bit in (0..w).rev() {
                port[bit] = match chars.next() {
                    Some('0') => false,
                    Some('1') => true,
                    other => {
                        return Err(CliError::Validation(format!(
                            "pattern line {}: bad character {:?}",
                            ln + 1,
                            other
                        )))
                    }
                };
            }
            ports.push(port);
        }
        out.push(wiring.pi_source.iter().map(|&(b, bit)| ports[b][bit]).collect());
    }
    if out.is_empty() {
        return Err(CliError::Validation("pattern file holds no vectors".into()));
    }
    Ok(out)
}

/// Inverse of [`parse_patterns`].
pub fn format_patterns(patterns: &[Vec<bool>], netlist: &Netlist, plan: &BistPlan) -> CliResult<String> {
    let wiring = plan.wire(netlist)?;
    let mut s = String::new();
    for p in patterns {
        let mut ports: Vec<Vec<bool>> = plan.bindings.iter().map(|b| vec![false; b.width()]).collect();
        for (pi, &(b, bit)) in wiring.pi_source.iter().enumerate() {
            ports[b][bit] = p[pi];
        }
        for port in &ports {
            s.extend(port.iter().rev().map(|&v| if v { '1' } else { '0' }));
        }
        s.push('\n');
    }
    Ok(s)
}

/// One block row: stuck-at and transition coverage side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageLine {
    pub block: String,
    pub saf_faults: usize,
    pub saf_detected: usize,
    pub saf_coverage: Option<f64>,
    pub tdf_faults: usize,
    pub tdf_detected: usize,
    pub tdf_coverage: Option<f64>,
}

pub fn coverage_table(report: &faultsim::CoverageReport) -> CliResult<Vec<CoverageLine>> {
    let rows = faultsim::coverage(report)?;
    let mut out: Vec<CoverageLine> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|l| l.block == r.scope) {
            Some(i) => i,
            None => {
                out.push(CoverageLine {
                    block: r.scope.clone(),
                    saf_faults: 0,
                    saf_detected: 0,
                    saf_coverage: None,
                    tdf_faults: 0,
                    tdf_detected: 0,
                    tdf_coverage: None,
                });
                out.len() - 1
            }
        };
        let line = &mut out[idx];
        match r.group {
            FaultGroup::Saf => {
                line.saf_faults = r.faults;
                line.saf_detected = r.detected;
                line.saf_coverage = Some(r.coverage);
            }
            FaultGroup::Tdf => {
                line.tdf_faults = r.faults;
                line.tdf_detected = r.detected;
                line.tdf_coverage = Some(r.coverage);
            }
        }
    }
    // Keep `total` last.
    if let Some(i) = out.iter().position(|l| l.block == "total") {
        let t = out.remove(i);
        out.push(t);
    }
    Ok(out)
}

fn header(command: &str, netlist: &Netlist, plan: &BistPlan) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), REPORT_SCHEMA_VERSION.into());
    m.insert("command".into(), command.into());
    m.insert("netlist".into(), netlist.name().into());
    m.insert("alfsr".into(), plan.alfsr_polynomial.to_string().into());
    m.insert(
        "seed".into(),
        format_hex(plan.alfsr_seed, plan.alfsr_polynomial.degree() as usize).into(),
    );
    m.insert("pattern_count".into(), plan.pattern_count.into());
    m
}

fn emit(
    cli: &Cli,
    file: &str,
    report: &Value,
    summary: &str,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io)?;
            fs::write(dir.join(file), json).map_err(io)?;
            stdout.write_all(summary.as_bytes()).map_err(io)?;
        }
        None => stdout.write_all(json.as_bytes()).map_err(io)?,
    }
    Ok(())
}

fn write_out(cli: &Cli, file: &str, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = &cli.out {
        let io = |e: std::io::Error| CliError::Runtime(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join(file), bytes).map_err(io)?;
    }
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |c| format!("{c:.2}%"))
}

pub fn render_coverage(lines: &[CoverageLine]) -> String {
    let mut s = format!("{:<14} {:>8} {:>9} {:>8} {:>9}\n", "block", "SAF", "SAF cov", "TDF", "TDF cov");
    for l in lines {
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>9} {:>8} {:>9}",
            l.block,
            l.saf_faults,
            pct(l.saf_coverage),
            l.tdf_faults,
            pct(l.tdf_coverage)
        );
    }
    s
}

pub fn render_classes(rows: &[diagnosis::ClassRow]) -> String {
    let f = |v: Option<f64>| v.map_or("-".into(), |m| format!("{m:.3}"));
    let mut s = format!(
        "{:<14} {:>7} {:>8} {:>8} {:>9} {:>10} {:>10}\n",
        "block", "faults", "classes", "max", "mean", "undetected", "mean(all)"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14} {:>7} {:>8} {:>8} {:>9} {:>10} {:>10}",
            r.scope,
            r.faults,
            r.classes,
            r.max_size,
            f(r.mean_size),
            r.undetected,
            f(r.mean_size_all)
        );
    }
    s
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<i32> {
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    let w = workers(cli);
    match &cli.command {
        Command::Lint { netlist } => {
            let text = read_text(netlist)?;
            let n = parse_netlist(&text).map_err(|e| CliError::Validation(format!("{}: {e}", netlist.display())))?;
            writeln!(
                stdout,
                "{}: ok ({} inputs, {} outputs, {} gates, {} flops, {} blocks)",
                n.name(),
                n.primary_inputs().len(),
                n.primary_outputs().len(),
                n.gates().len(),
                n.flops().len(),
                n.blocks().len()
            )
            .map_err(io)?;
            Ok(0)
        }
        Command::Bist(args) => cmd_bist(cli, args, w, stdout),
        Command::Faultsim { run, pattern_file } => {
            let n = load_netlist(&run.netlist)?;
            let plan = resolve_plan(&n, run)?;
            let (patterns, source) = match pattern_file {
                Some(p) => (parse_patterns(&read_text(p)?, &n, &plan)?, "file"),
                None => (plan.patterns(&n)?, "alfsr"),
            };
            let u = faultsim::enumerate_faults(&n, run.faults.kinds());
            let rep = faultsim::run_fault_sim(&n, &u, &patterns, w)?;
            let table = coverage_table(&rep)?;
            let mut h = header("faultsim", &n, &plan);
            h.insert("source".into(), source.into());
            h.insert("pattern_count".into(), patterns.len().into());
            h.insert("coverage".into(), serde_json::to_value(&table).expect("serializes"));
            let undetected: Vec<String> = (0..u.len())
                .filter(|&i| !rep.is_detected(i))
                .map(|i| u.faults()[i].label(&n))
                .collect();
            h.insert("undetected".into(), undetected.into());
            emit(cli, "faultsim_report.json", &Value::Object(h), &render_coverage(&table), stdout)?;
            Ok(0)
        }
        Command::Import { run, patterns_file } => {
            let n = load_netlist(&run.netlist)?;
            let plan = resolve_plan(&n, run)?;
            let external = parse_patterns(&read_text(patterns_file)?, &n, &plan)?;
            let generated = plan.patterns(&n)?;
            let u = faultsim::enumerate_faults(&n, run.faults.kinds());
            let ext = coverage_table(&faultsim::run_fault_sim(&n, &u, &external, w)?)?;
            let gen = coverage_table(&faultsim::run_fault_sim(&n, &u, &generated, w)?)?;
            let rows: Vec<Value> = ext
                .iter()
                .zip(&gen)
                .map(|(e, g)| {
                    serde_json::json!({
                        "block": e.block,
                        "saf_faults": e.saf_faults,
                        "saf_external": e.saf_coverage,
                        "saf_alfsr": g.saf_coverage,
                        "tdf_faults": e.tdf_faults,
                        "tdf_external": e.tdf_coverage,
                        "tdf_alfsr": g.tdf_coverage,
                    })
                })
                .collect();
            let mut h = header("import", &n, &plan);
            h.insert("external_patterns".into(), external.len().into());
            h.insert("comparison".into(), rows.into());
            let mut summary = format!(
                "{:<14} {:>11} {:>11} {:>11} {:>11}\n",
                "block", "SAF ext", "SAF alfsr", "TDF ext", "TDF alfsr"
            );
            for (e, g) in ext.iter().zip(&gen) {
                let _ = writeln!(
                    summary,
                    "{:<14} {:>11} {:>11} {:>11} {:>11}",
                    e.block,
                    pct(e.saf_coverage),
                    pct(g.saf_coverage),
                    pct(e.tdf_coverage),
                    pct(g.tdf_coverage)
                );
            }
            emit(cli, "import_report.json", &Value::Object(h), &summary, stdout)?;
            Ok(0)
        }
        Command::Tap {
            run,
            trace,
            standard,
            expect,
        } => {
            let n = load_netlist(&run.netlist)?;
            let plan = resolve_plan(&n, run)?;
            let input = match (trace, standard) {
                (Some(p), false) => SerialTrace::parse(&read_text(p)?)?,
                (None, true) => access::standard_session(plan.pattern_count, plan.misrs.len()).trace,
                _ => return Err(CliError::Validation("give a trace file or --standard".into())),
            };
            let mut session = TapSession::new(&n, &plan)?;
            let recorded = drive_trace(&mut session, &input)?;
            let text = recorded.to_text();
            match &cli.out {
                Some(_) => write_out(cli, "session.tdo", text.as_bytes())?,
                None => stdout.write_all(text.as_bytes()).map_err(io)?,
            }
            writeln!(
                stderr,
                "{} clocks, final state {}, phase {:?}",
                recorded.len(),
                session.tap(),
                session.bist().control().phase
            )
            .map_err(io)?;
            if let Some(e) = expect {
                let want = SerialTrace::parse(&read_text(e)?)?;
                if let Some(i) = first_divergence(&recorded, &want) {
                    writeln!(stderr, "mismatch at sample {i}").map_err(io)?;
                    return Ok(1);
                }
            }
            Ok(0)
        }
        Command::Diagnose {
            run,
            pattern_file,
            granularity,
        } => {
            let n = load_netlist(&run.netlist)?;
            let plan = resolve_plan(&n, run)?;
            let u = faultsim::enumerate_faults(&n, run.faults.kinds());
            let external;
            let (stimulus, source) = match pattern_file {
                Some(p) => {
                    external = parse_patterns(&read_text(p)?, &n, &plan)?;
                    (Stimulus::Patterns(&external), "file")
                }
                None => (Stimulus::Plan(&plan), "alfsr"),
            };
            let m = diagnosis::build_matrix(&n, &u, stimulus, *granularity, w)?;
            let rep = diagnosis::classify(&m);
            let mut h = header("diagnose", &n, &plan);
            h.insert("source".into(), source.into());
            h.insert("granularity".into(), granularity.to_string().into());
            h.insert("columns".into(), m.columns().into());
            h.insert("classes_table".into(), serde_json::to_value(&rep.rows).expect("serializes"));
            let label = |i: &usize| u.faults()[*i].label(&n);
            let classes: Vec<Vec<String>> = rep
                .classes
                .iter()
                .filter(|c| c.len() > 1)
                .map(|c| c.iter().map(label).collect())
                .collect();
            h.insert("multi_member_classes".into(), serde_json::to_value(classes).expect("serializes"));
            h.insert(
                "undetected".into(),
                rep.undetected.iter().map(label).collect::<Vec<_>>().into(),
            );
            write_out(cli, "matrix.bin", &diagnosis::export_packed(&m, &n))?;
            emit(cli, "diagnose_report.json", &Value::Object(h), &render_classes(&rep.rows), stdout)?;
            Ok(0)
        }
        Command::Report { files } => {
            if files.is_empty() {
                return Err(CliError::Validation("no report files given".into()));
            }
            for f in files {
                let v: Value = serde_json::from_str(&read_text(f)?)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", f.display())))?;
                writeln!(stdout, "{}", render_report(&v).map_err(|m| CliError::Validation(format!("{}: {m}", f.display())))?)
                    .map_err(io)?;
            }
            Ok(0)
        }
    }
}

fn cmd_bist(cli: &Cli, args: &RunArgs, w: usize, stdout: &mut dyn Write) -> CliResult<i32> {
    let n = load_netlist(&args.netlist)?;
    let mut plan = resolve_plan(&n, args)?;
    let supplied_golden = plan.golden.is_some();
    let computed = bist::compute_golden(&n, &plan)?;
    if !supplied_golden {
        plan = plan.with_golden(computed.clone())?;
    }
    // Compaction loss is measured against the fault-free signatures, even
    // when a supplied golden set disagrees with them.
    let reference = plan.with_golden(computed)?;
    let result = bist::run_selftest(&n, &plan, None)?;
    let patterns = plan.patterns(&n)?;
    let u = faultsim::enumerate_faults(&n, args.faults.kinds());
    let cov = faultsim::run_fault_sim(&n, &u, &patterns, w)?;
    let table = coverage_table(&cov)?;
    let saf = u.of_group(FaultGroup::Saf);
    let compaction = if saf.is_empty() {
        Value::Null
    } else {
        let d = bist::misr_detection_rate(&n, &reference, &saf, w)?;
        serde_json::json!({
            "faults": d.faults,
            "pre_misr_detected": d.pre_misr_detected,
            "misr_detected": d.misr_detected,
            "rate": d.rate,
            "aliased": d.aliased.iter().map(|&i| saf.faults()[i].label(&n)).collect::<Vec<_>>(),
        })
    };
    let mut h = header("bist", &n, &plan);
    h.insert("blocks".into(), plan.bindings.iter().map(|b| b.block().to_string()).collect::<Vec<_>>().into());
    h.insert("golden_supplied".into(), supplied_golden.into());
    h.insert("selftest".into(), serde_json::to_value(&result).expect("serializes"));
    h.insert("coverage".into(), serde_json::to_value(&table).expect("serializes"));
    h.insert("compaction".into(), compaction);
    let mut summary = String::new();
    for (i, s) in result.signatures.iter().enumerate() {
        let ok = result.pass.as_ref().is_none_or(|p| p[i]);
        let _ = writeln!(summary, "sel {i} {:<14} {} {}", s.block, s.hex(), if ok { "pass" } else { "FAIL" });
    }
    summary.push_str(&render_coverage(&table));
    write_out(cli, "plan.json", plan.to_json().as_bytes())?;
    emit(cli, "bist_report.json", &Value::Object(h), &summary, stdout)?;
    Ok(if result.passed() == Some(false) { 1 } else { 0 })
}

/// Text tables for a report written by `bist`, `faultsim`, `import` or
/// `diagnose`.
pub fn render_report(v: &Value) -> Result<String, String> {
    if v.get("schema_version").and_then(Value::as_u64) != Some(REPORT_SCHEMA_VERSION as u64) {
        return Err("unsupported or missing schema_version".into());
    }
    let cmd = v.get("command").and_then(Value::as_str).unwrap_or("");
    let mut s = format!(
        "{} report for {} ({} patterns)\n",
        cmd,
        v.get("netlist").and_then(Value::as_str).unwrap_or("?"),
        v.get("pattern_count").and_then(Value::as_u64).unwrap_or(0)
    );
    match cmd {
        "bist" | "faultsim" => {
            let lines: Vec<CoverageLine> =
                serde_json::from_value(v["coverage"].clone()).map_err(|e| e.to_string())?;
            s.push_str(&render_coverage(&lines));
        }
        "diagnose" => {
            let rows: Vec<diagnosis::ClassRow> =
                serde_json::from_value(v["classes_table"].clone()).map_err(|e| e.to_string())?;
            s.push_str(&render_classes(&rows));
        }
        "import" => {
            let f = |r: &Value, k: &str| r[k].as_f64().map_or("-".into(), |c| format!("{c:.2}%"));
            let _ = writeln!(s, "{:<14} {:>11} {:>11} {:>11} {:>11}", "block", "SAF ext", "SAF alfsr", "TDF ext", "TDF alfsr");
            for r in v["comparison"].as_array().ok_or("missing comparison")? {
                let _ = writeln!(
                    s,
                    "{:<14} {:>11} {:>11} {:>11} {:>11}",
                    r["block"].as_str().unwrap_or("?"),
                    f(r, "saf_external"),
                    f(r, "saf_alfsr"),
                    f(r, "tdf_external"),
                    f(r, "tdf_alfsr")
                );
            }
        }
        other => return Err(format!("unknown report kind `{other}`")),
    }
    Ok(s)
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run(std::env::args_os(), &mut out, &mut err)
}
