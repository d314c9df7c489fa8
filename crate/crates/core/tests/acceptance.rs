use std::io::Write;

use rotor_core::acceptance::run_all;

#[test]
fn acceptance_criteria() {
    let reports = run_all();
    // straight to the handle so the lines survive output capture
    let mut err = std::io::stderr().lock();
    for r in &reports {
        writeln!(err, "{}", r.line()).unwrap();
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.ok()).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
