use std::path::Path;

use super::{load_triples, load_triples_extending, Split, TripleStore, VocabPair};
use crate::error::{KbcError, Result};

/// File names expected in a raw dataset directory, in split order.
pub const SPLIT_FILES: [(Split, &str); 3] = [
    (Split::Train, "train.txt"),
    (Split::Valid, "valid.txt"),
    (Split::Test, "test.txt"),
];

/// Train, validation and test splits over one shared vocabulary.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: TripleStore,
    pub valid: TripleStore,
    pub test: TripleStore,
    pub vocab: VocabPair,
}

impl Dataset {
    /// Reads `train.txt`, `valid.txt` and `test.txt` from `dir`.
    ///
    /// The vocabulary is fixed by the training split; symbols that first
    /// appear in validation or test are an error unless `allow_unseen`, in
    /// which case they are appended and every split is widened to match.
    pub fn load_dir(dir: &Path, allow_unseen: bool) -> Result<Dataset> {
        let missing: Vec<&str> = SPLIT_FILES
            .iter()
            .map(|&(_, f)| f)
            .filter(|f| !dir.join(f).is_file())
            .collect();
        if !missing.is_empty() {
            return Err(KbcError::Config(format!(
                "{} is missing {}; expected files: {}",
                dir.display(),
                missing.join(", "),
                SPLIT_FILES.map(|(_, f)| f).join(", ")
            )));
        }
        let (train, mut vocab) = load_triples(&dir.join("train.txt"), None, Split::Train)?;
        let (valid, test) = if allow_unseen {
            let valid = load_triples_extending(&dir.join("valid.txt"), &mut vocab, Split::Valid)?;
            let test = load_triples_extending(&dir.join("test.txt"), &mut vocab, Split::Test)?;
            (valid, test)
        } else {
            let (valid, _) = load_triples(&dir.join("valid.txt"), Some(&vocab), Split::Valid)?;
            let (test, _) = load_triples(&dir.join("test.txt"), Some(&vocab), Split::Test)?;
            (valid, test)
        };
        let (n, p) = (vocab.entities.len(), vocab.predicates.len());
        Ok(Dataset {
            train: train.widened(n, p)?,
            valid: valid.widened(n, p)?,
            test: test.widened(n, p)?,
            vocab,
        })
    }

    pub fn split(&self, split: Split) -> &TripleStore {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}
