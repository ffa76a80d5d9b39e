//! Runs every example end to end.

#[path = "../examples/response_scan.rs"]
mod response_scan;

#[path = "../examples/detected_stats.rs"]
mod detected_stats;

#[path = "../examples/cooperativity_scan.rs"]
mod cooperativity_scan;

#[path = "../examples/kerr_scan.rs"]
mod kerr_scan;

#[path = "../examples/radiation_map.rs"]
mod radiation_map;

#[path = "../examples/free_decay.rs"]
mod free_decay;

#[path = "../examples/oracle_check.rs"]
mod oracle_check;

#[test]
fn example_response_scan() {
    response_scan::run_example().unwrap();
}

#[test]
fn example_detected_stats() {
    detected_stats::run_example().unwrap();
}

#[test]
fn example_cooperativity_scan() {
    cooperativity_scan::run_example().unwrap();
}

#[test]
fn example_kerr_scan() {
    kerr_scan::run_example().unwrap();
}

#[test]
fn example_radiation_map() {
    radiation_map::run_example().unwrap();
}

#[test]
fn example_free_decay() {
    free_decay::run_example().unwrap();
}

#[test]
fn example_oracle_check() {
    oracle_check::run_example().unwrap();
}
