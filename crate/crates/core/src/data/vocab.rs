use std::collections::HashMap;

/// Bijection between symbol strings and dense indices `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, u32>,
    names: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from names in order; repeated names keep their
    /// first index.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::new();
        for name in names {
            vocab.get_or_insert(&name.into());
        }
        vocab
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn name(&self, index: u32) -> Option<&str> {
        self.names.get(index as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Entity and predicate vocabularies of one dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VocabPair {
    pub entities: Vocabulary,
    pub predicates: Vocabulary,
}
