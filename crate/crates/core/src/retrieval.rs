//! Hamming-space retrieval and mean average precision.

use std::fmt;

use crate::data::{PairedDataset, QueryPartition, ZeroShotSplit};
use crate::error::{Error, Result};
use crate::model::{LaehModel, Modality};
use crate::numerics::{DenseMatrix, SeededRng};

/// Cut-offs reported as precision@k.
pub const PRECISION_CUTOFFS: [usize; 4] = [1, 10, 50, 100];

/// Bit-packed codes, one per instance. `+1` is stored as a set bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeSet {
    bits: usize,
    words_per_code: usize,
    words: Vec<u64>,
    labels: Vec<usize>,
    modality: Modality,
}

/// Borrowed view of one packed code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PackedCode<'a> {
    pub bits: usize,
    pub words: &'a [u64],
}

impl CodeSet {
    /// Packs a `bits x n` sign matrix. Entries must be `±1`.
    pub fn from_sign_matrix(
        codes: &DenseMatrix,
        labels: Vec<usize>,
        modality: Modality,
    ) -> Result<Self> {
        let (bits, n) = codes.shape();
        if labels.len() != n {
            return Err(Error::Invalid(format!(
                "{} labels for {n} codes",
                labels.len()
            )));
        }
        let words_per_code = bits.div_ceil(64);
        let mut words = vec![0u64; words_per_code * n];
        for r in 0..bits {
            for (i, &v) in codes.row(r).iter().enumerate() {
                if v == 1.0 {
                    words[i * words_per_code + r / 64] |= 1 << (r % 64);
                } else if v != -1.0 {
                    return Err(Error::Invalid(format!(
                        "code entry ({r}, {i}) is {v}, not ±1"
                    )));
                }
            }
        }
        Ok(Self {
            bits,
            words_per_code,
            words,
            labels,
            modality,
        })
    }

    pub fn to_sign_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.bits, self.len(), |r, i| {
            if self.words[i * self.words_per_code + r / 64] >> (r % 64) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn code(&self, i: usize) -> PackedCode<'_> {
        PackedCode {
            bits: self.bits,
            words: &self.words[i * self.words_per_code..(i + 1) * self.words_per_code],
        }
    }
}

pub fn hamming_distance(a: PackedCode<'_>, b: PackedCode<'_>) -> Result<u32> {
    if a.bits != b.bits {
        return Err(Error::shape("hamming", (a.bits, 1), (b.bits, 1)));
    }
    Ok(hamming_unchecked(a.words, b.words))
}

#[inline]
fn hamming_unchecked(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// For each query, database indices by ascending Hamming distance, ties
/// broken by ascending index.
pub fn rank_queries(queries: &CodeSet, database: &CodeSet) -> Result<Vec<Vec<usize>>> {
    if queries.bits != database.bits {
        return Err(Error::shape("rank", (queries.bits, 1), (database.bits, 1)));
    }
    if database.is_empty() {
        return Err(Error::Invalid("empty retrieval database".into()));
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); database.bits + 1];
    Ok((0..queries.len())
        .map(|q| {
            let qc = queries.code(q).words;
            buckets.iter_mut().for_each(Vec::clear);
            // Counting sort: scanning the database in index order keeps
            // every distance bucket sorted by index.
            for i in 0..database.len() {
                let d = hamming_unchecked(qc, database.code(i).words) as usize;
                buckets[d].push(i);
            }
            buckets.iter().flatten().copied().collect()
        })
        .collect())
}

/// Mean of the precision at each relevant position. `None` when nothing is
/// relevant.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Fraction of relevant items among the first `k` (or all, if fewer).
pub fn precision_at(relevant: &[bool], k: usize) -> f64 {
    let k = k.min(relevant.len());
    if k == 0 {
        return 0.0;
    }
    relevant[..k].iter().filter(|&&r| r).count() as f64 / k as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Image queries against a text database.
    ImageToText,
    /// Text queries against an image database.
    TextToImage,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::ImageToText, Direction::TextToImage];

    pub fn name(self) -> &'static str {
        match self {
            Direction::ImageToText => "i2t",
            Direction::TextToImage => "t2i",
        }
    }

    pub fn query_modality(self) -> Modality {
        match self {
            Direction::ImageToText => Modality::Image,
            Direction::TextToImage => Modality::Text,
        }
    }

    pub fn database_modality(self) -> Modality {
        match self {
            Direction::ImageToText => Modality::Text,
            Direction::TextToImage => Modality::Image,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    pub direction: Direction,
    pub partition: QueryPartition,
    pub code_bits: usize,
    pub map: f64,
    /// Precision at each of [`PRECISION_CUTOFFS`], averaged over scored queries.
    pub precision_at_k: [f64; 4],
    /// Queries with at least one relevant database item.
    pub n_queries: usize,
}

impl fmt::Display for RetrievalReport {
    /// `direction,partition,code_bits,map,p@1,p@10,p@50,p@100,n_queries`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{:.6}",
            self.direction.name(),
            self.partition.name(),
            self.code_bits,
            self.map
        )?;
        for p in self.precision_at_k {
            write!(f, ",{p:.6}")?;
        }
        write!(f, ",{}", self.n_queries)
    }
}

/// Scores precomputed query codes against a database. Returns `None` when
/// no query has a relevant item.
pub fn score(
    direction: Direction,
    partition: QueryPartition,
    queries: &CodeSet,
    database: &CodeSet,
) -> Result<Option<RetrievalReport>> {
    let ranked = rank_queries(queries, database)?;
    let mut ap_sum = 0.0;
    let mut p_sum = [0.0; 4];
    let mut scored = 0usize;
    for (q, order) in ranked.iter().enumerate() {
        let label = queries.labels[q];
        let flags: Vec<bool> = order.iter().map(|&i| database.labels[i] == label).collect();
        let Some(ap) = average_precision(&flags) else {
            continue;
        };
        scored += 1;
        ap_sum += ap;
        for (acc, &k) in p_sum.iter_mut().zip(&PRECISION_CUTOFFS) {
            *acc += precision_at(&flags, k);
        }
    }
    if scored == 0 {
        return Ok(None);
    }
    Ok(Some(RetrievalReport {
        direction,
        partition,
        code_bits: queries.bits,
        map: ap_sum / scored as f64,
        precision_at_k: p_sum.map(|p| p / scored as f64),
        n_queries: scored,
    }))
}

/// Codes for every instance of a dataset, per modality.
pub struct EncodedDataset {
    pub image: DenseMatrix,
    pub text: DenseMatrix,
}

impl EncodedDataset {
    pub fn from_model(model: &LaehModel, dataset: &PairedDataset) -> Result<Self> {
        Ok(Self {
            image: model.encode(dataset.x1(), Modality::Image)?,
            text: model.encode(dataset.x2(), Modality::Text)?,
        })
    }

    /// Independent uniformly random `±1` codes for both modalities.
    pub fn random(bits: usize, n: usize, rng: &mut SeededRng) -> Self {
        let mut draw = || {
            DenseMatrix::from_fn(
                bits,
                n,
                |_, _| if rng.next_u64() & 1 == 1 { 1.0 } else { -1.0 },
            )
        };
        Self {
            image: draw(),
            text: draw(),
        }
    }

    fn codes(&self, modality: Modality) -> &DenseMatrix {
        match modality {
            Modality::Image => &self.image,
            Modality::Text => &self.text,
        }
    }

    /// Scores every requested direction and partition. Partitions without
    /// scorable queries are skipped with a warning.
    pub fn evaluate(
        &self,
        dataset: &PairedDataset,
        split: &ZeroShotSplit,
        directions: &[Direction],
        partitions: &[QueryPartition],
    ) -> Result<Vec<RetrievalReport>> {
        let db_idx = &split.retrieval_idx;
        let db_labels = dataset.labels_of(db_idx);
        let mut reports = Vec::new();
        for &direction in directions {
            let db_mod = direction.database_modality();
            let database = CodeSet::from_sign_matrix(
                &self.codes(db_mod).select_columns(db_idx),
                db_labels.clone(),
                db_mod,
            )?;
            for &partition in partitions {
                let q_idx = split.queries(dataset, partition);
                if q_idx.is_empty() {
                    log::warn!(
                        "{} / {}: no queries, skipped",
                        direction.name(),
                        partition.name()
                    );
                    continue;
                }
                let q_mod = direction.query_modality();
                let queries = CodeSet::from_sign_matrix(
                    &self.codes(q_mod).select_columns(&q_idx),
                    dataset.labels_of(&q_idx),
                    q_mod,
                )?;
                match score(direction, partition, &queries, &database)? {
                    Some(r) => reports.push(r),
                    None => log::warn!(
                        "{} / {}: no query has a relevant item, skipped",
                        direction.name(),
                        partition.name()
                    ),
                }
            }
        }
        Ok(reports)
    }
}

/// Encodes queries and database with the model's hash functions and scores
/// them.
pub fn evaluate(
    model: &LaehModel,
    dataset: &PairedDataset,
    split: &ZeroShotSplit,
    directions: &[Direction],
    partitions: &[QueryPartition],
) -> Result<Vec<RetrievalReport>> {
    EncodedDataset::from_model(model, dataset)?.evaluate(dataset, split, directions, partitions)
}

/// Same protocol with random codes in place of learned ones.
pub fn random_code_baseline(
    bits: usize,
    dataset: &PairedDataset,
    split: &ZeroShotSplit,
    directions: &[Direction],
    partitions: &[QueryPartition],
    rng: &mut SeededRng,
) -> Result<Vec<RetrievalReport>> {
    EncodedDataset::random(bits, dataset.len(), rng)
        .evaluate(dataset, split, directions, partitions)
}

pub fn format_reports(reports: &[RetrievalReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}
