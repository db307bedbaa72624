//! Frozen CLI outputs under `fixtures/` still reproduce.

use std::path::Path;

use truncmean::fixtures::{recipe_names, verify_fixtures};

#[test]
fn golden_files_reproduce() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let report = verify_fixtures(&dir, &recipe_names()).unwrap();
    print!("{report}");
    assert!(report.passed(), "{report}");
    assert_eq!(report.outcomes.len(), recipe_names().len());
}
