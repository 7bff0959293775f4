//! Small on-disk fixture dataset shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

pub const FIXTURE_ITEMS: usize = 30;

/// Writes interactions, item text and metadata for `users` users who mostly
/// step through items in order, and returns a config file referencing them.
pub fn write_fixture(dir: &Path, users: usize, seed: u64) -> PathBuf {
    let mut rng = lrd::corpus::seeded_rng(seed, 7);
    let mut inter = String::new();
    for u in 0..users {
        let len = rng.random_range(8..14);
        let mut item = rng.random_range(0..FIXTURE_ITEMS);
        for t in 0..len {
            writeln!(inter, "u{u}\ti{item}\t{}", 1_000 + t * 10).unwrap();
            item = if rng.random_bool(0.8) {
                (item + 1) % FIXTURE_ITEMS
            } else {
                rng.random_range(0..FIXTURE_ITEMS)
            };
        }
    }
    let mut text = String::new();
    let mut meta = String::new();
    for i in 0..FIXTURE_ITEMS {
        writeln!(text, "i{i}\tTitle: item {i}. Genres: g{}.", i % 4).unwrap();
        writeln!(meta, "i{i}\tgenre\tg{}", i % 4).unwrap();
        writeln!(meta, "i{i}\tdecade\td{}", i / 10).unwrap();
    }
    fs::write(dir.join("interactions.tsv"), inter).unwrap();
    fs::write(dir.join("item_text.tsv"), text).unwrap();
    fs::write(dir.join("metadata.tsv"), meta).unwrap();
    let cfg = dir.join("run.cfg");
    let d = dir.display();
    fs::write(
        &cfg,
        format!(
            "# fixture\ndataset = fixture\ninteractions = {d}/interactions.tsv\nitem_text = {d}/item_text.tsv\n\
             metadata = {d}/metadata.tsv\nkcore = 2\neval_negatives = 10\nfallback_dim = 16\nd = 8\n\
             batch_size = 32\nlr = 1e-2\nmax_epochs = 3\npatience = 2\nnum_latent = 2\nrun_dir = {d}/runs\n"
        ),
    )
    .unwrap();
    cfg
}
