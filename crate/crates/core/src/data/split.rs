use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{join_list, KvFile};
use crate::numerics::SeededRng;

use super::PairedDataset;

/// Which queries an evaluation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueryPartition {
    All,
    Seen,
    Unseen,
}

impl QueryPartition {
    pub const ALL: [QueryPartition; 3] = [Self::All, Self::Unseen, Self::Seen];

    pub fn name(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Seen => "seen",
            Self::Unseen => "unseen",
        }
    }
}

/// Seen/unseen class partition plus the train, retrieval and query pools.
///
/// Per class, `query_per_class` instances are held out as queries. The
/// remaining seen-class instances form the training set; the retrieval pool
/// is the training set plus the remaining unseen-class instances.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroShotSplit {
    pub seen_classes: BTreeSet<usize>,
    pub unseen_classes: BTreeSet<usize>,
    pub train_idx: Vec<usize>,
    pub retrieval_idx: Vec<usize>,
    pub query_idx: Vec<usize>,
}

pub fn make_split(
    dataset: &PairedDataset,
    n_unseen: usize,
    query_per_class: usize,
    rng: &mut SeededRng,
) -> Result<ZeroShotSplit> {
    let k = dataset.num_classes();
    if n_unseen == 0 || n_unseen >= k {
        return Err(Error::Invalid(format!(
            "unseen class count must be in 1..{k}, got {n_unseen}"
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() <= query_per_class {
            let name = dataset
                .class_names()
                .map_or_else(|| format!("class {c}"), |n| format!("class {c} ({})", n[c]));
            return Err(Error::Invalid(format!(
                "{name} has {} instances, need more than {query_per_class}",
                members.len()
            )));
        }
    }

    let mut classes: Vec<usize> = (0..k).collect();
    rng.shuffle(&mut classes);
    let unseen: BTreeSet<usize> = classes[..n_unseen].iter().copied().collect();
    let seen: BTreeSet<usize> = classes[n_unseen..].iter().copied().collect();

    let mut train = Vec::new();
    let mut retrieval = Vec::new();
    let mut query = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        rng.shuffle(members);
        query.extend_from_slice(&members[..query_per_class]);
        let rest = &members[query_per_class..];
        retrieval.extend_from_slice(rest);
        if seen.contains(&c) {
            train.extend_from_slice(rest);
        }
    }
    train.sort_unstable();
    retrieval.sort_unstable();
    query.sort_unstable();

    Ok(ZeroShotSplit {
        seen_classes: seen,
        unseen_classes: unseen,
        train_idx: train,
        retrieval_idx: retrieval,
        query_idx: query,
    })
}

impl ZeroShotSplit {
    /// Query indices restricted to a partition.
    pub fn queries(&self, dataset: &PairedDataset, partition: QueryPartition) -> Vec<usize> {
        let labels = dataset.labels();
        self.query_idx
            .iter()
            .copied()
            .filter(|&i| match partition {
                QueryPartition::All => true,
                QueryPartition::Seen => self.seen_classes.contains(&labels[i]),
                QueryPartition::Unseen => self.unseen_classes.contains(&labels[i]),
            })
            .collect()
    }

    /// Checks the split against a dataset: disjoint class sets, seen-only
    /// training labels, disjoint train/query pools, indices in range.
    pub fn validate(&self, dataset: &PairedDataset) -> Result<()> {
        let n = dataset.len();
        let labels = dataset.labels();
        if let Some(c) = self.seen_classes.intersection(&self.unseen_classes).next() {
            return Err(Error::Invalid(format!("class {c} is both seen and unseen")));
        }
        let pools = [&self.train_idx, &self.retrieval_idx, &self.query_idx];
        if let Some(&i) = pools.iter().flat_map(|p| p.iter()).find(|&&i| i >= n) {
            return Err(Error::Invalid(format!(
                "instance index {i} out of range for {n}"
            )));
        }
        if let Some(&i) = self
            .train_idx
            .iter()
            .find(|&&i| !self.seen_classes.contains(&labels[i]))
        {
            return Err(Error::Invalid(format!(
                "training instance {i} has non-seen class {}",
                labels[i]
            )));
        }
        let train: BTreeSet<usize> = self.train_idx.iter().copied().collect();
        if let Some(i) = self.query_idx.iter().find(|i| train.contains(i)) {
            return Err(Error::Invalid(format!(
                "instance {i} is both train and query"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut kv = KvFile::new();
        kv.set(
            "seen",
            join_list(&self.seen_classes.iter().collect::<Vec<_>>()),
        );
        kv.set(
            "unseen",
            join_list(&self.unseen_classes.iter().collect::<Vec<_>>()),
        );
        kv.set("train", join_list(&self.train_idx));
        kv.set("retrieval", join_list(&self.retrieval_idx));
        kv.set("query", join_list(&self.query_idx));
        kv.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KvFile::read(path)?;
        kv.check_keys(&["seen", "unseen", "train", "retrieval", "query"])?;
        Ok(Self {
            seen_classes: kv.parse_list::<usize>("seen")?.into_iter().collect(),
            unseen_classes: kv.parse_list::<usize>("unseen")?.into_iter().collect(),
            train_idx: kv.parse_list("train")?,
            retrieval_idx: kv.parse_list("retrieval")?,
            query_idx: kv.parse_list("query")?,
        })
    }
}
