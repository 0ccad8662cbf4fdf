//! The synthetic fixture checked into `fixtures/synthetic` must be exactly
//! what the generator produces. Set `UPDATE_FIXTURE=1` to rewrite it.

use std::fs;
use std::path::Path;

use sense_geometry::fixture::{generate, write_fixture, FixtureSpec};

const FILES: [&str; 6] = [
    "tokens.jsonl",
    "embeddings.semb",
    "placements.jsonl",
    "pair_labels.csv",
    "config.toml",
    "expected.json",
];

#[test]
fn bundled_fixture_matches_generator() {
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let fixture = generate(&FixtureSpec::default()).unwrap();
    if std::env::var_os("UPDATE_FIXTURE").is_some() {
        write_fixture(&bundled, &fixture).unwrap();
    }
    let fresh = tempfile::tempdir().unwrap();
    write_fixture(fresh.path(), &fixture).unwrap();
    for name in FILES {
        let a = fs::read(bundled.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let b = fs::read(fresh.path().join(name)).unwrap();
        assert!(
            a == b,
            "{name} differs from the generator output; rerun with UPDATE_FIXTURE=1"
        );
    }
}
