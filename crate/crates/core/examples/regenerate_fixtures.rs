//! Rewrites every golden file under `crates/core/fixtures`, then verifies them.
//!
//! ```text
//! cargo run --release --example regenerate_fixtures
//! ```

use std::path::Path;

use truncmean::fixtures::{recipe_names, regenerate, verify_fixtures, RECIPES};

fn main() -> truncmean::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for recipe in RECIPES {
        let f = regenerate(&dir, recipe)?;
        println!("{:<28} {}", f.name, &f.sha256[..16]);
    }
    let report = verify_fixtures(&dir, &recipe_names())?;
    print!("{report}");
    Ok(())
}
