//! Generates a synthetic paired dataset, holds out classes, and writes
//! both to disk in the formats the command-line tool reads.
//!
//! Usage: `cargo run --example synth_and_split [out_dir]`

use std::path::PathBuf;

use laeh::data::{make_split, synth_dataset};
use laeh::{PairedDataset, QueryPartition, SeededRng, SynthParams, ZeroShotSplit};

fn main() -> laeh::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("laeh-synth"));
    let params = SynthParams {
        classes: 10,
        per_class: 40,
        ..SynthParams::default()
    };
    let dataset = synth_dataset(&params, &mut SeededRng::named(3, "data"))?;
    let split = make_split(&dataset, 3, 5, &mut SeededRng::named(3, "split"))?;

    let manifest = dataset.save(&out)?;
    split.save(&out.join("split.txt"))?;
    println!("dataset: {}", manifest.display());
    println!(
        "  {} instances, image dim {}, text dim {}, semantic dim {}",
        dataset.len(),
        dataset.x1().rows(),
        dataset.x2().rows(),
        dataset.semantic_vectors().rows()
    );
    println!("seen classes:   {:?}", split.seen_classes);
    println!("unseen classes: {:?}", split.unseen_classes);
    println!(
        "train {} / retrieval {} / query {}",
        split.train_idx.len(),
        split.retrieval_idx.len(),
        split.query_idx.len()
    );
    for p in QueryPartition::ALL {
        println!(
            "  {:6} queries: {}",
            p.name(),
            split.queries(&dataset, p).len()
        );
    }

    let back = PairedDataset::load(&manifest)?;
    let split_back = ZeroShotSplit::load(&out.join("split.txt"))?;
    assert_eq!(back, dataset);
    assert_eq!(split_back, split);
    println!("reloaded both files unchanged");
    Ok(())
}
