//! Trains on nine seen classes of a synthetic dataset, then compares
//! retrieval on the three held-out classes against random codes.
//!
//! Usage: `cargo run --release --example train_zero_shot [seed]`

use laeh::data::{make_split, synth_dataset};
use laeh::retrieval::{evaluate, format_reports, random_code_baseline};
use laeh::{Direction, QueryPartition, SeededRng, SynthParams, TrainConfig};

fn main() -> laeh::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let params = SynthParams {
        v: 32,
        ..SynthParams::default()
    };
    let dataset = synth_dataset(&params, &mut SeededRng::named(seed, "data"))?;
    let split = make_split(&dataset, 3, 10, &mut SeededRng::named(seed, "split"))?;
    let config = TrainConfig::compact(32, seed);

    let start = std::time::Instant::now();
    let (model, log) = laeh::train(&dataset, &split, &config)?;
    for e in &log.epochs {
        println!(
            "epoch {:2}  total {:10.1}  j1 {:10.1}  j3 {:8.1}  attr {:8.1}  flips {}",
            e.epoch, e.loss.total, e.loss.j1, e.loss.j3, e.loss.j_attr, e.b_flips
        );
    }
    println!("trained in {:.1}s\n", start.elapsed().as_secs_f64());

    let reports = evaluate(
        &model,
        &dataset,
        &split,
        &Direction::BOTH,
        &QueryPartition::ALL,
    )?;
    println!("learned codes (dir,partition,bits,map,p@1,p@10,p@50,p@100,queries):");
    print!("{}", format_reports(&reports));
    let baseline = random_code_baseline(
        32,
        &dataset,
        &split,
        &Direction::BOTH,
        &QueryPartition::ALL,
        &mut SeededRng::named(seed, "eval"),
    )?;
    println!("\nrandom codes:");
    print!("{}", format_reports(&baseline));
    Ok(())
}
