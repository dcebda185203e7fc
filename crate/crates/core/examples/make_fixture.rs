//! Regenerates the bundled synthetic record from the reference parameters.
//!
//! cargo run -p rainfall-nhmm --example make_fixture -- fixtures/synthetic.csv

use std::path::PathBuf;

fn main() -> rainfall_nhmm::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures/synthetic.csv"));
    let series = rainfall_nhmm::synthetic::fixture_series()?;
    let mut buf = Vec::new();
    rainfall_nhmm::io::write_series(&series, &mut buf)?;
    std::fs::write(&out, buf)?;
    println!("wrote {} hours to {}", series.len(), out.display());
    Ok(())
}
