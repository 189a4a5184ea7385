//! Acceptance suite: one pass/fail line per criterion.

use std::process::ExitCode;

fn main() -> ExitCode {
    let results = ergoq::acceptance::run_all();
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
