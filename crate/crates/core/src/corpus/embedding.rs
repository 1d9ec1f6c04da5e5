use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, BOS, EOS, PAD};
use crate::error::{Error, Result};

/// Range for rows not covered by a pretrained file.
pub const UNSEEN_INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Semantic,
    Emotional,
}

impl EmbeddingKind {
    fn stream(self) -> u64 {
        match self {
            EmbeddingKind::Semantic => 11,
            EmbeddingKind::Emotional => 12,
        }
    }
}

/// Row-major `|V| x dim` matrix. Values are f32-representable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }
}

/// Random table: uniform in [-0.1, 0.1], PAD/BOS/EOS rows zero, UNK random.
pub fn init_embedding_table(vocab_size: usize, dim: usize, kind: EmbeddingKind, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind.stream());
    let mut data: Vec<f64> = (0..vocab_size * dim)
        .map(|_| rng.gen_range(-UNSEEN_INIT_RANGE..=UNSEEN_INIT_RANGE) as f32 as f64)
        .collect();
    for id in [PAD, BOS, EOS] {
        if id < vocab_size {
            data[id * dim..(id + 1) * dim].fill(0.0);
        }
    }
    EmbeddingTable { kind, dim, data }
}

/// Reads the `<count> <dim>` text format. Rows of in-vocabulary tokens are
/// copied from the file; everything else follows [`init_embedding_table`].
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize, kind: EmbeddingKind, seed: u64) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let shown = path.display();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(&shown, 1, "missing '<count> <dim>' header")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, file_dim) = match fields.as_slice() {
        [c, d] => (
            c.parse::<usize>().map_err(|_| Error::format(&shown, 1, "bad count in header"))?,
            d.parse::<usize>().map_err(|_| Error::format(&shown, 1, "bad dimension in header"))?,
        ),
        _ => return Err(Error::format(&shown, 1, "header must be '<count> <dim>'")),
    };
    if file_dim != dim {
        return Err(Error::format(
            &shown,
            1,
            format!("file dimension {file_dim} does not match model dimension {dim}"),
        ));
    }

    let mut table = init_embedding_table(vocab.len(), dim, kind, seed);
    let mut seen = 0usize;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|_| Error::format(&shown, line_no, "unreadable line"))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().ok_or_else(|| Error::format(&shown, line_no, "missing token"))?;
        let values = parts
            .map(|s| s.parse::<f32>().map(f64::from))
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::format(&shown, line_no, "non-numeric vector component"))?;
        if values.len() != dim {
            return Err(Error::format(
                &shown,
                line_no,
                format!("expected {dim} components, found {}", values.len()),
            ));
        }
        seen += 1;
        if let Some(id) = vocab.id(token) {
            table.data[id * dim..(id + 1) * dim].copy_from_slice(&values);
        }
    }
    if seen != count {
        return Err(Error::format(
            &shown,
            seen + 1,
            format!("header declares {count} vectors but file has {seen}"),
        ));
    }
    Ok(table)
}
