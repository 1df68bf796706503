//! Trains a small model, saves and reloads the checkpoint, and prints a
//! retrieval report for every direction and query partition.

use laeh::data::{make_split, synth_dataset};
use laeh::retrieval::{evaluate, EncodedDataset};
use laeh::{Direction, LaehModel, Modality, QueryPartition, SeededRng, SynthParams, TrainConfig};

fn main() -> laeh::Result<()> {
    let params = SynthParams {
        classes: 8,
        per_class: 30,
        v: 16,
        ..SynthParams::default()
    };
    let dataset = synth_dataset(&params, &mut SeededRng::named(5, "data"))?;
    let split = make_split(&dataset, 2, 6, &mut SeededRng::named(5, "split"))?;
    let config = TrainConfig {
        epochs: 15,
        ..TrainConfig::compact(16, 5)
    };
    let (model, _) = laeh::train(&dataset, &split, &config)?;

    let dir = std::env::temp_dir().join("laeh-eval-model");
    model.save(&dir)?;
    let model = LaehModel::load(&dir)?;
    println!("checkpoint: {}", dir.display());

    let codes = EncodedDataset::from_model(&model, &dataset)?;
    let q = split.query_idx[0];
    let image = codes.image.column(q);
    let text = codes.text.column(q);
    let agree = image.iter().zip(&text).filter(|(a, b)| a == b).count();
    println!(
        "query {q} (class {}): image and text codes agree on {agree}/{} bits",
        dataset.labels()[q],
        model.code_len()
    );
    let raw = model.project(&dataset.x1().select_columns(&[q]), Modality::Image)?;
    println!("real-valued image projection: {:?}", &raw.as_slice()[..4]);

    println!(
        "\n{:>4} {:>7} {:>8} {:>8} {:>8} {:>8}",
        "dir", "queries", "map", "p@1", "p@10", "n"
    );
    for r in evaluate(
        &model,
        &dataset,
        &split,
        &Direction::BOTH,
        &QueryPartition::ALL,
    )? {
        println!(
            "{:>4} {:>7} {:>8.4} {:>8.4} {:>8.4} {:>8}",
            r.direction.name(),
            r.partition.name(),
            r.map,
            r.precision_at_k[0],
            r.precision_at_k[1],
            r.n_queries
        );
    }
    Ok(())
}
