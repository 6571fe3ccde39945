//! Run every finite-difference suite and print the report.

fn main() -> supercl::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let report = supercl::gradcheck::run_all(seed)?;
    print!("{report}");
    println!("{}", if report.passed() { "all suites within tolerance" } else { "FAILED" });
    Ok(())
}
