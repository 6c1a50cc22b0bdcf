//! End-to-end acceptance run: every criterion in order, one verdict line
//! each, then a nonzero exit if any failed. Set `ACCEPTANCE_ONLY=3,14` to
//! run a subset.

use std::time::Instant;

use sphere_lab::suites::{run_suite, ExperimentConfig, SuiteId};

fn selected() -> Vec<SuiteId> {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) if !list.trim().is_empty() => {
            list.split(',').map(|s| s.trim().parse::<SuiteId>().expect("valid suite id")).collect()
        }
        _ => SuiteId::ALL.to_vec(),
    }
}

fn main() {
    let mut failed = Vec::new();
    for id in selected() {
        let cfg = ExperimentConfig::new(id);
        let start = Instant::now();
        let outcome = run_suite(&cfg);
        let secs = start.elapsed().as_secs_f64();
        let (passed, summary) = match outcome {
            Ok(o) => (o.passed, o.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = id.time_limit().is_none_or(|limit| secs <= limit as f64);
        let limit = id.time_limit().map(|l| format!(" (limit {l} s)")).unwrap_or_default();
        let verdict = if passed && in_time { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {:<22} {verdict}  {summary}; {secs:.1} s{limit}", id.number(), id.name());
        if verdict == "FAIL" {
            failed.push(id.number());
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria passed", selected().len());
}
