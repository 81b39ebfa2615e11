use qsb_core::criteria::{run, Profile, COUNT};

/// P = x² has mixed-Q error exactly 0 at every n, so "error(8) < error(2)" cannot hold.
const UNATTAINABLE: &[usize] = &[10];

#[test]
fn acceptance_criteria() {
    let mut unexpected = Vec::new();
    println!();
    for id in 1..=COUNT {
        let outcome = run(id, Profile::Full).unwrap_or_else(|e| panic!("criterion {id} errored: {e}"));
        println!("{}", outcome.line());
        if !outcome.passed && !UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
