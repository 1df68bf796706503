//! Trains one model per attribute weight and prints unseen-class MAP,
//! the library-level counterpart of `laeh sweep`.

use laeh::data::{make_split, synth_dataset};
use laeh::retrieval::evaluate;
use laeh::{Direction, LossWeights, QueryPartition, SeededRng, SynthParams, TrainConfig};

fn main() -> laeh::Result<()> {
    let params = SynthParams {
        v: 32,
        ..SynthParams::default()
    };
    let dataset = synth_dataset(&params, &mut SeededRng::named(7, "data"))?;
    let split = make_split(&dataset, 3, 10, &mut SeededRng::named(7, "split"))?;

    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "beta", "i2t seen", "t2i seen", "i2t unseen", "t2i unseen"
    );
    for beta in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let base = TrainConfig::compact(32, 7);
        let config = TrainConfig {
            weights: LossWeights {
                beta,
                ..base.weights
            },
            ..base
        };
        let (model, _) = laeh::train(&dataset, &split, &config)?;
        let reports = evaluate(
            &model,
            &dataset,
            &split,
            &Direction::BOTH,
            &[QueryPartition::Seen, QueryPartition::Unseen],
        )?;
        let maps: Vec<String> = reports.iter().map(|r| format!("{:10.4}", r.map)).collect();
        // Reports come direction-major: i2t seen, i2t unseen, t2i seen, t2i unseen.
        println!("{beta:>6} {} {} {} {}", maps[0], maps[2], maps[1], maps[3]);
    }
    Ok(())
}
