use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::rng::SeededRng;

/// Smallest corpus that fills all three splits.
pub const MIN_SPLIT_DOCS: usize = 5;

/// Sizes of the train and validation splits for `n` documents; the test
/// split takes the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 3 / 5;
    let val = n / 5;
    (train, val, n - train - val)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles the lexicographically sorted ids under `seed` and cuts the
/// result 60/20/20.
pub fn make_split<S: AsRef<str>>(doc_ids: &[S], seed: u64) -> Result<SplitAssignment, CorpusError> {
    let mut ids: Vec<String> = doc_ids.iter().map(|s| s.as_ref().to_string()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CorpusError::DuplicateId {
            language: None,
            id: w[0].clone(),
        });
    }
    if ids.len() < MIN_SPLIT_DOCS {
        return Err(CorpusError::TooFewForSplit(ids.len()));
    }
    SeededRng::new(seed).shuffle(&mut ids);
    let (n_train, n_val, _) = split_sizes(ids.len());
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(SplitAssignment {
        seed,
        train: ids,
        val,
        test,
    })
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that the three lists are pairwise disjoint and free of repeats.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::with_capacity(self.len());
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    language: None,
                    id: id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes") + "\n"
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| CorpusError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let split: Self = serde_json::from_str(&text).map_err(|e| CorpusError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        split.validate()?;
        Ok(split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{i:05}")).collect()
    }

    #[test]
    fn ten_documents() {
        let s = make_split(&ids(10), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
    }

    #[test]
    fn full_corpus_sizes() {
        assert_eq!(split_sizes(6538), (3922, 1307, 1309));
        let s = make_split(&ids(6538), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (3922, 1307, 1309));
    }

    #[test]
    fn deterministic_and_order_insensitive() {
        let mut reversed = ids(40);
        reversed.reverse();
        assert_eq!(make_split(&ids(40), 9).unwrap(), make_split(&reversed, 9).unwrap());
        assert_ne!(make_split(&ids(40), 9).unwrap(), make_split(&ids(40), 10).unwrap());
    }

    #[test]
    fn too_small_or_duplicated() {
        assert!(matches!(make_split(&ids(4), 0), Err(CorpusError::TooFewForSplit(4))));
        assert!(matches!(
            make_split(&["a", "b", "a", "c", "d", "e"], 0),
            Err(CorpusError::DuplicateId { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.json");
        let s = make_split(&ids(12), 5).unwrap();
        s.write(&path).unwrap();
        assert_eq!(SplitAssignment::read(&path).unwrap(), s);
        let text = std::fs::read_to_string(&path).unwrap();
        let keys: Vec<_> = ["\"seed\"", "\"train\"", "\"val\"", "\"test\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn partitions_ids(n in 5usize..400, seed in any::<u64>()) {
            let all = ids(n);
            let s = make_split(&all, seed).unwrap();
            let (a, b, c) = split_sizes(n);
            prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (a, b, c));
            prop_assert_eq!(a, n * 6 / 10);
            prop_assert_eq!(b, n * 2 / 10);
            s.validate().unwrap();
            let mut union: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
            union.sort();
            prop_assert_eq!(union, all);
        }
    }
}
