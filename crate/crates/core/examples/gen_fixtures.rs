//! Regenerate the bundled fixture set.
//!
//! Usage: cargo run -p shutdownlens-core --example gen_fixtures [-- DIR]

use std::path::PathBuf;

use shutdownlens_core::harness::fixtures::build_all;

fn main() -> std::io::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    for f in build_all() {
        let path = root.join(&f.path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, &f.bytes)?;
        println!("{} ({} bytes)", f.path, f.bytes.len());
    }
    Ok(())
}
