//! Human-readable renderings of pipeline results.

use std::fmt::Write;

use polsynth_core::pipeline::PipelineResult;
use polsynth_core::synthesis::VerificationReport;
use polsynth_core::EdgeSet;

fn edge_list(es: &EdgeSet) -> String {
    if es.is_empty() {
        return "(none)".into();
    }
    es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
}

fn report(out: &mut String, title: &str, r: &VerificationReport) {
    let verdict = if r.overall { "PASS" } else { "FAIL" };
    writeln!(out, "{title}: {verdict}").unwrap();
    for res in &r.per_invariant {
        let mark = if res.holds { "ok  " } else { "FAIL" };
        write!(out, "  {mark} {} ({})", res.instance, res.template).unwrap();
        if !res.holds {
            write!(out, ": {}", edge_list(&res.offending)).unwrap();
        }
        out.push('\n');
    }
}

pub fn summary(r: &PipelineResult) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "entities: {}, invariants: {}",
        r.policy.nodes().len(),
        r.instances.len()
    )
    .unwrap();
    writeln!(
        out,
        "policy: {} edges constructed, {} after refinement",
        r.constructed.edges().len(),
        r.policy.edges().len()
    )
    .unwrap();
    if let Some(sp) = &r.stateful {
        writeln!(out, "stateful: {} edges", sp.stateful().len()).unwrap();
    }
    out
}

pub fn verification(r: &PipelineResult) -> String {
    let mut out = String::new();
    report(&mut out, "policy", &r.report_policy);
    if let Some(rs) = &r.report_stateful {
        report(&mut out, "stateful", rs);
    }
    out
}

pub fn stateful(r: &PipelineResult) -> String {
    match &r.stateful {
        Some(sp) => format!("stateful edges: {}\n", edge_list(sp.stateful())),
        None => "stateful edges: not computed, the policy fails verification\n".into(),
    }
}
