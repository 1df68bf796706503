//! Packs sign codes into machine words and ranks a small database by
//! Hamming distance.

use laeh::numerics::sign_matrix;
use laeh::retrieval::{average_precision, hamming_distance, rank_queries, CodeSet};
use laeh::{DenseMatrix, Modality, SeededRng};

fn main() -> laeh::Result<()> {
    let mut rng = SeededRng::new(4);
    let bits = 96;
    let database = sign_matrix(&DenseMatrix::random_gaussian(bits, 8, 1.0, &mut rng));
    let labels = vec![0, 1, 2, 3, 0, 1, 2, 3];
    let db = CodeSet::from_sign_matrix(&database, labels.clone(), Modality::Text)?;
    assert_eq!(db.to_sign_matrix(), database);
    println!(
        "{} codes of {bits} bits, {} words each",
        db.len(),
        db.code(0).words.len()
    );

    // A query close to database item 4: flip ten of its bits.
    let mut query = database.select_columns(&[4]);
    for r in 0..10 {
        query.set(r * 9, 0, -query.get(r * 9, 0));
    }
    let q = CodeSet::from_sign_matrix(&query, vec![0], Modality::Image)?;
    for (i, label) in labels.iter().enumerate() {
        println!(
            "  distance to item {i} (label {label}): {}",
            hamming_distance(q.code(0), db.code(i))?
        );
    }

    let ranking = &rank_queries(&q, &db)?[0];
    let relevant: Vec<bool> = ranking.iter().map(|&i| labels[i] == 0).collect();
    println!("ranking: {ranking:?}");
    println!(
        "average precision: {:.4}",
        average_precision(&relevant).unwrap_or(0.0)
    );
    Ok(())
}
