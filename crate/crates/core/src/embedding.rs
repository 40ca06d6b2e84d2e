//! GloVe-format word vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 100;

/// Token to vector table with a single fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
}

/// Embedding of a (possibly multi-word) entity name.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityEmbedding {
    pub entity: String,
    pub vector: Vec<f64>,
    /// False when no token of the name was in the vocabulary; the vector is then zero.
    pub resolved: bool,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dim,
            table: HashMap::new(),
        })
    }

    /// Inserts or replaces a vector. Returns the previous vector if any.
    pub fn insert(&mut self, token: &str, vector: Vec<f32>) -> Result<Option<Vec<f32>>> {
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "vector for `{token}` has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        Ok(self.table.insert(token.to_lowercase(), vector))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.table.get(token).map(Vec::as_slice)
    }

    /// Tokens in sorted order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.table.keys().map(String::as_str).collect();
        out.sort_unstable();
        out
    }

    /// Mean of the in-vocabulary token vectors of `entity`.
    pub fn embed_entity(&self, entity: &str) -> EntityEmbedding {
        let mut vector = vec![0.0f64; self.dim];
        let mut hits = 0usize;
        for token in entity.split_whitespace() {
            let Some(v) = self.table.get(&token.to_lowercase()) else {
                continue;
            };
            for (acc, &x) in vector.iter_mut().zip(v) {
                *acc += f64::from(x);
            }
            hits += 1;
        }
        if hits > 1 {
            let n = hits as f64;
            vector.iter_mut().for_each(|x| *x /= n);
        }
        EntityEmbedding {
            entity: entity.to_string(),
            vector,
            resolved: hits > 0,
        }
    }

    pub fn load(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::with_capacity(1 << 20, file), path, expected_dim)
    }

    /// Parses `token v1 ... vd` lines. The first line fixes `d` unless
    /// `expected_dim` is given. A repeated token keeps its last vector.
    pub fn read<R: BufRead>(reader: R, origin: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let mut dim = expected_dim;
        let mut table = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let vector = fields
                .map(str::parse::<f32>)
                .collect::<std::result::Result<Vec<f32>, _>>()
                .map_err(|e| Error::parse(origin, lineno, format!("bad number: {e}")))?;
            let d = *dim.get_or_insert(vector.len());
            if vector.len() != d || d == 0 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {d} components, found {}", vector.len()),
                ));
            }
            if table.insert(token.to_lowercase(), vector).is_some() {
                log::warn!(
                    "{}:{lineno}: duplicate token `{token}`, keeping the last vector",
                    origin.display()
                );
            }
        }
        match dim {
            Some(dim) if !table.is_empty() => Ok(EmbeddingStore { dim, table }),
            _ => Err(Error::parse(origin, 0, "no embeddings in file")),
        }
    }

    /// Writes the store in the same text format, tokens sorted.
    pub fn write<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for token in self.tokens() {
            write!(out, "{token}")?;
            for x in &self.table[token] {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
