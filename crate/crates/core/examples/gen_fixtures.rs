// SPDX-License-Identifier: Apache-2.0

//! Regenerates the bundled fixtures under `tests/fixtures`.
//!
//! Run with `cargo run --example gen_fixtures`. Output is deterministic, so
//! a clean run leaves the tree unchanged.

use std::fs;
use std::path::Path;

use bistbench::access::{drive_trace, standard_session, TapSession};
use bistbench::bist::{compute_golden, BistPlan};
use bistbench::circuit::parse_netlist;
use bistbench::synth;

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap_or_else(|e| panic!("{name}: {e}"));
    println!("wrote {name}");
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    fs::create_dir_all(&dir).expect("fixture dir");

    write(
        &dir,
        "and2.bench",
        "# two-input AND\n#@netlist and2\nINPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n",
    );
    write(&dir, "and2.patterns", "# b a\n00\n01\n10\n11\n");
    write(&dir, "ten_gate.bench", &synth::ten_gate().to_bench());
    write(&dir, "seventeen_gate.bench", &synth::seventeen_gate().to_bench());
    write(&dir, "ldpc_like_bn.bench", &synth::ldpc_like_bn().to_bench());

    let core = synth::case_study_core();
    write(&dir, "ldpc_like_core.bench", &core.to_bench());
    let core = parse_netlist(&core.to_bench()).expect("round trip");
    let plan = BistPlan::case_study(&core).expect("plan");
    let plan = plan.with_golden(compute_golden(&core, &plan).expect("golden")).expect("golden");
    write(&dir, "ldpc_like_core.plan.json", &plan.to_json());

    let script = standard_session(plan.pattern_count, plan.misrs.len());
    let input = script.trace.to_stimulus_text();
    write(&dir, "session.trace", &input);
    let mut tap = TapSession::new(&core, &plan).expect("tap");
    let recorded = drive_trace(&mut tap, &script.trace).expect("replay");
    write(&dir, "session.tdo", &recorded.to_text());
}
