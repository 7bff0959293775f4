//! Interaction logs, item side information and the derived training data.
//!
//! Everything in here is pure and deterministic once inputs are loaded:
//! k-core filtering, chronological sequences, leave-one-out splits,
//! predefined-relation triplets and the negative samplers.

mod kcore;
mod load;
mod sampling;
mod split;
mod triplets;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use kcore::kcore_filter;
pub use load::{
    load_cooccurrence, load_interactions, load_item_text, load_metadata, ColumnSpec,
    CooccurrenceRow, MetadataRow,
};
pub use sampling::{sample_eval_negatives, sample_negative_item, seeded_rng, SeededRng};
pub use split::{build_sequences, history_window, leave_one_out_split};
pub use triplets::{build_attribute_triplets, build_cooccurrence_triplets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

/// Bidirectional mapping between raw string IDs and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for IdMap {
    fn from(raw: Vec<String>) -> Self {
        IdMap::from_raw(raw)
    }
}

impl From<IdMap> for Vec<String> {
    fn from(map: IdMap) -> Self {
        map.raw
    }
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_raw(raw: Vec<String>) -> Self {
        let index = raw
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        IdMap { raw, index }
    }

    /// Index of `raw`, assigning the next dense index on first sight.
    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.raw.len();
        self.raw.push(raw.to_string());
        self.index.insert(raw.to_string(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, i: usize) -> &str {
        &self.raw[i]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.raw.iter().map(String::as_str)
    }
}

/// Interaction records plus the ID tables they index into.
#[derive(Debug, Clone, Default)]
pub struct Interactions {
    pub records: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

impl Interactions {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user: usize,
    pub items: Vec<usize>,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub head: usize,
    pub tail: usize,
    pub relation: usize,
}

/// Relation IDs: predefined relations first, then `num_latent` latent ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationVocab {
    pub predefined: Vec<String>,
    pub num_latent: usize,
}

impl RelationVocab {
    pub fn new(predefined: Vec<String>, num_latent: usize) -> Self {
        RelationVocab {
            predefined,
            num_latent,
        }
    }

    pub fn len(&self) -> usize {
        self.predefined.len() + self.num_latent
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_predefined(&self) -> usize {
        self.predefined.len()
    }

    pub fn is_latent(&self, r: usize) -> bool {
        r >= self.predefined.len() && r < self.len()
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.predefined.iter().position(|n| n == name)
    }

    pub fn name(&self, r: usize) -> String {
        match self.predefined.get(r) {
            Some(n) => n.clone(),
            None => format!("latent_{}", r - self.predefined.len()),
        }
    }

    /// Uniform prior p(r) over all relations.
    pub fn uniform_prior(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user: usize,
    pub train: Vec<usize>,
    pub valid: usize,
    pub test: usize,
}

impl UserSplit {
    /// Items visible when predicting the validation target.
    pub fn valid_history(&self) -> &[usize] {
        &self.train
    }

    /// Train prefix followed by the validation item.
    pub fn test_history(&self) -> Vec<usize> {
        let mut h = self.train.clone();
        h.push(self.valid);
        h
    }

    pub fn full_sequence(&self) -> Vec<usize> {
        let mut s = self.test_history();
        s.push(self.test);
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub users: Vec<UserSplit>,
    /// Sequences dropped because they had fewer than three items.
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitKind {
    Valid,
    Test,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Valid => "valid",
            SplitKind::Test => "test",
        }
    }
}

/// Dataset counts in the layout of a statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    #[serde(rename = "#user")]
    pub users: usize,
    #[serde(rename = "#item")]
    pub items: usize,
    #[serde(rename = "#inter.")]
    pub interactions: usize,
    pub density: f64,
    #[serde(rename = "#relation")]
    pub relations: usize,
    #[serde(rename = "#triplets")]
    pub triplets: usize,
}

impl DatasetStats {
    pub fn compute(
        users: usize,
        items: usize,
        interactions: usize,
        relations: usize,
        triplets: usize,
    ) -> Self {
        let density = if users == 0 || items == 0 {
            0.0
        } else {
            interactions as f64 / (users as f64 * items as f64)
        };
        DatasetStats {
            users,
            items,
            interactions,
            density,
            relations,
            triplets,
        }
    }
}
