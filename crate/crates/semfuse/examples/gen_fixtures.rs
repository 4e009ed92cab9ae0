//! Regenerate the committed fixture files. The fixtures test asserts the
//! checked-in copies match this output byte for byte.

use std::path::PathBuf;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
        });
    semfuse::synth::write_fixtures(&dir).expect("write fixtures");
    println!("wrote fixtures to {}", dir.display());
}
