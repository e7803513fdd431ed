//! Run every gradient check and oracle comparison and print the report.
//!
//!     cargo run --release --example gradient_check -- [seeds]

use expspot::verify::{run_all, VerifyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let report = run_all(&VerifyOptions {
        seeds,
        ..VerifyOptions::default()
    });
    print!("{report}");
    if !report.passed() {
        return Err("verification failed".into());
    }
    Ok(())
}
