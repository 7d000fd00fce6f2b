//! Print the full layer-by-layer gradient verification table (the same
//! table behind `asst gradcheck`).

use asst::pipeline::gradcheck_rows;

fn main() -> asst::Result<()> {
    let rows = gradcheck_rows()?;
    println!("{:<35} {:>12}", "layer", "max rel err");
    let mut failures = 0;
    for r in &rows {
        println!(
            "{:<35} {:>12.3e}  {}",
            r.name,
            r.max_rel_err,
            if r.passed() { "pass" } else { "FAIL" }
        );
        if !r.passed() {
            failures += 1;
        }
    }
    assert_eq!(failures, 0, "{failures} layers failed the gradient check");
    Ok(())
}
