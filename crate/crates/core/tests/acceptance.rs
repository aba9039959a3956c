//! Acceptance run: one PASS/FAIL line per check. Checks on the
//! known-unattainable list print FAIL without failing the target.
//! `OPENXXZ_VERIFY_LEVEL=quick` selects the reduced run.

use openxxz::verify::{run, Level, KNOWN_UNATTAINABLE};

fn main() {
    let level = match std::env::var("OPENXXZ_VERIFY_LEVEL").as_deref() {
        Ok("quick") => Level::Quick,
        _ => Level::Full,
    };
    // libtest passes flags such as --nocapture or a filter; only "--list" matters here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    println!("acceptance run, level {level:?}");
    let report = run(level, &[], |s| {
        println!("-- criterion {} ({}) {:.1}s", s.criterion, s.title, s.seconds);
        for c in &s.checks {
            println!("{}", c.line());
        }
    });
    println!(
        "total {:.1}s (budget {:.0}s); known unattainable: {}",
        report.seconds,
        report.budget_seconds,
        KNOWN_UNATTAINABLE.join(", ")
    );
    let failures = report.gating_failures();
    let total_ok = report.level == Level::Quick || report.seconds < report.budget_seconds;
    if !total_ok {
        println!("FAIL total runtime over budget");
    }
    if !failures.is_empty() || !total_ok {
        println!("{} gating failure(s)", failures.len());
        std::process::exit(1);
    }
    println!("all gating checks passed");
}
