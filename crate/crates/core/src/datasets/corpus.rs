use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Word ↔ id map. Training words get ids in order of first appearance,
/// followed by `<eos>` and `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn build(train_text: &str) -> Self {
        let mut v = Self {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        for w in train_text.split_whitespace() {
            if w != EOS && w != UNK {
                v.insert(w);
            }
        }
        v.insert(EOS);
        v.insert(UNK);
        v
    }

    fn insert(&mut self, w: &str) {
        if !self.ids.contains_key(w) {
            self.ids.insert(w.to_owned(), self.words.len());
            self.words.push(w.to_owned());
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn eos(&self) -> usize {
        self.ids[EOS]
    }

    pub fn unk(&self) -> usize {
        self.ids[UNK]
    }

    pub fn id(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or_else(|| self.unk())
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Whitespace tokens of each line followed by `<eos>`; blank lines are skipped.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for line in text.lines() {
            let before = out.len();
            out.extend(line.split_whitespace().map(|w| self.id(w)));
            if out.len() > before {
                out.push(self.eos());
            }
        }
        out
    }
}

/// Token ids for the three splits of one text, sharing a train-only vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub vocab: Vocab,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Corpus {
    pub fn from_texts(train: &str, valid: &str, test: &str) -> Result<Self> {
        let vocab = Vocab::build(train);
        let train_ids = vocab.encode(train);
        if train_ids.is_empty() {
            return Err(Error::Empty("training text"));
        }
        Ok(Self {
            train: train_ids,
            valid: vocab.encode(valid),
            test: vocab.encode(test),
            vocab,
        })
    }

    /// Splits non-blank lines in order: the last `⌊L/10⌋` are test, the
    /// `⌊L/10⌋` before them valid, the rest train.
    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let tenth = lines.len() / 10;
        let cut = lines.len() - 2 * tenth;
        let join = |s: &[&str]| s.join("\n");
        Self::from_texts(
            &join(&lines[..cut]),
            &join(&lines[cut..cut + tenth]),
            &join(&lines[cut + tenth..]),
        )
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    Corpus::from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let c = Corpus::from_text("a b a\n").unwrap();
        assert_eq!(c.train, vec![0, 1, 0, 2]);
        assert_eq!(c.vocab.words(), ["a", "b", EOS, UNK]);
        assert_eq!(c.vocab.eos(), 2);
        assert!(c.valid.is_empty() && c.test.is_empty());
    }

    #[test]
    fn unseen_words_are_unknown() {
        let c = Corpus::from_texts("a b\n", "a z\n", "").unwrap();
        assert_eq!(c.valid, vec![0, c.vocab.unk(), c.vocab.eos()]);
    }

    #[test]
    fn ten_line_split() {
        let text: String = (0..10).map(|i| format!("w{i}\n")).collect();
        let c = Corpus::from_text(&text).unwrap();
        assert_eq!(c.train.len(), 16);
        assert_eq!(c.valid, vec![c.vocab.unk(), c.vocab.eos()]);
        assert_eq!(c.test.len(), 2);
    }

    #[test]
    fn empty_and_file() {
        assert!(Corpus::from_text(" \n\n").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "x y\ny x\n").unwrap();
        assert_eq!(load_corpus(&p).unwrap(), load_corpus(&p).unwrap());
        assert!(load_corpus(dir.path().join("missing")).is_err());
    }
}
