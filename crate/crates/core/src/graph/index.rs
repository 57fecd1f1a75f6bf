use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Default word-embedding width.
pub const DEFAULT_EMBEDDING_DIM: usize = 300;

/// Ordered class list. Seen classes occupy indices `0..seen_count`, unseen
/// classes the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassIndex {
    ids: Vec<String>,
    names: Vec<String>,
    seen_count: usize,
    lookup: HashMap<String, usize>,
}

impl ClassIndex {
    /// `seen` and `unseen` are `(id, display name)` pairs. Seen classes come first.
    pub fn new(seen: Vec<(String, String)>, unseen: Vec<(String, String)>) -> Result<Self> {
        let seen_count = seen.len();
        let (ids, names): (Vec<_>, Vec<_>) = seen.into_iter().chain(unseen).unzip();
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateName(id.clone()));
            }
        }
        Ok(Self {
            ids,
            names,
            seen_count,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn seen_count(&self) -> usize {
        self.seen_count
    }

    pub fn unseen_count(&self) -> usize {
        self.ids.len() - self.seen_count
    }

    pub fn is_seen(&self, idx: usize) -> bool {
        idx < self.seen_count
    }

    pub fn seen(&self) -> std::ops::Range<usize> {
        0..self.seen_count
    }

    pub fn unseen(&self) -> std::ops::Range<usize> {
        self.seen_count..self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    /// Appends an unseen class at the end, leaving existing indices unchanged.
    pub fn push_unseen(&mut self, id: String, name: String) -> Result<usize> {
        if self.lookup.contains_key(&id) {
            return Err(Error::DuplicateName(id));
        }
        let idx = self.ids.len();
        self.lookup.insert(id.clone(), idx);
        self.ids.push(id);
        self.names.push(name);
        Ok(idx)
    }

    pub fn seen_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_seen(i)).collect()
    }
}

/// One embedding row per class of `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub index: ClassIndex,
    pub vectors: DenseMatrix,
}

impl EmbeddingTable {
    pub fn new(index: ClassIndex, vectors: DenseMatrix) -> Result<Self> {
        if vectors.rows() != index.len() {
            return Err(Error::shape(
                "embedding table",
                (index.len(), 0),
                vectors.shape(),
            ));
        }
        if !vectors.is_finite() {
            return Err(Error::NonFinite("embedding table".into()));
        }
        Ok(Self { index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Builds the table by averaging the word vectors of every class's
    /// display name. All unresolvable classes are reported together.
    pub fn from_word_vectors(index: ClassIndex, words: &WordVectors) -> Result<Self> {
        let mut rows = Vec::with_capacity(index.len());
        let mut missing = Vec::new();
        for i in 0..index.len() {
            match embed_class_name(index.name(i), words) {
                Ok(e) => {
                    if e.missing_tokens > 0 {
                        log::debug!(
                            "class {}: {} token(s) without a vector",
                            index.id(i),
                            e.missing_tokens
                        );
                    }
                    rows.push(e.vector)
                }
                Err(_) => missing.push(index.id(i).to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Unresolvable(missing));
        }
        let vectors = DenseMatrix::from_rows(&rows)?;
        Self::new(index, vectors)
    }
}

/// Token → vector map with a fixed width.
#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    map: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            map: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::shape("word vector", (1, self.dim), (1, vector.len())));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("word vector for `{token}`")));
        }
        self.map.insert(token, vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.map.get(token).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbedding {
    pub vector: Vec<f64>,
    /// Tokens of the name that had no vector and were skipped.
    pub missing_tokens: usize,
}

/// Lowercases and splits on whitespace, `_` and `-`.
pub fn tokenize_class_name(name: &str) -> Vec<String> {
    name.split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Mean of the word vectors of the tokens of `name`, skipping unknown tokens.
pub fn embed_class_name(name: &str, words: &WordVectors) -> Result<ClassEmbedding> {
    let tokens = tokenize_class_name(name);
    let mut sum = vec![0.0; words.dim()];
    let mut found = 0usize;
    for t in &tokens {
        if let Some(v) = words.get(t) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            found += 1;
        }
    }
    if found == 0 {
        return Err(Error::Unresolvable(vec![name.to_string()]));
    }
    for s in &mut sum {
        *s /= found as f64;
    }
    Ok(ClassEmbedding {
        vector: sum,
        missing_tokens: tokens.len() - found,
    })
}
