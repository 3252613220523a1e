//! Word-vector tables and precomputed tweet embeddings.
//!
//! Word vectors use the word2vec text format: a `count dim` header, then one
//! `term v1 ... vdim` line per word.
//!
//! Tweet vectors come either as TSV (tweet id, then the components) or as a
//! little-endian binary file:
//!
//! ```text
//! magic   [u8; 8]  b"TWVEC1\0\0"
//! count   u32
//! dim     u32
//! count × { id_len u32, id [u8; id_len] (UTF-8), values [f32; dim] }
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DenseVector, Vocabulary};
use crate::{Error, Result};

pub const TWVEC_MAGIC: [u8; 8] = *b"TWVEC1\0\0";

/// Raw (unnormalized) word vectors sharing one dimension.
#[derive(Debug, Clone, Default)]
pub struct WordVectorTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        WordVectorTable {
            dim,
            ..Default::default()
        }
    }

    /// Insert or replace a word; returns true when the word was already present.
    pub fn insert(&mut self, term: &str, values: &[f32]) -> Result<bool> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: values.len(),
            });
        }
        if let Some(&slot) = self.index.get(term) {
            self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(values);
            return Ok(true);
        }
        self.index.insert(term.to_owned(), self.index.len());
        self.data.extend_from_slice(values);
        Ok(false)
    }

    pub fn get(&self, term: &str) -> Option<&[f32]> {
        self.index
            .get(term)
            .map(|&slot| &self.data[slot * self.dim..(slot + 1) * self.dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectorTable> {
    load_word_vectors_filtered(path, |_| true)
}

/// Load a word2vec text file, keeping only the words accepted by `keep`.
///
/// Every line is still checked against the header dimension.
pub fn load_word_vectors_filtered(
    path: &Path,
    keep: impl Fn(&str) -> bool,
) -> Result<WordVectorTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::EmptyInput(path.to_owned())),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [count, dim] => match (count.parse::<usize>(), dim.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(Error::malformed(path, 1, "header must be `count dim`")),
        },
        _ => return Err(Error::malformed(path, 1, "header must be `count dim`")),
    };

    let mut table = WordVectorTable::new(dim);
    let mut values = Vec::with_capacity(dim);
    let mut n_rows = 0usize;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        n_rows += 1;
        let mut parts = line.split_whitespace();
        let term = parts.next().unwrap_or_default();
        values.clear();
        for part in parts {
            let v: f32 = part.parse().map_err(|_| {
                Error::malformed(path, line_no, format!("bad component {part:?}"))
            })?;
            values.push(v);
        }
        if values.len() != dim {
            return Err(Error::malformed(
                path,
                line_no,
                format!("expected {dim} components, found {}", values.len()),
            ));
        }
        if keep(term) && table.insert(term, &values)? {
            log::warn!(
                "{}:{line_no}: duplicate word {term:?}, keeping the last vector",
                path.display()
            );
        }
    }
    if n_rows != count {
        log::warn!(
            "{}: header announces {count} words, file has {n_rows}",
            path.display()
        );
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    /// Weight each word by its idf; words missing from the vocabulary are skipped.
    Idf,
}

/// Mean of the word vectors of `tokens` (idf-weighted when requested), then
/// L2-normalized. Tokens absent from the table are skipped; if none remain
/// the zero vector is returned.
pub fn average_embedding<S: AsRef<str>>(
    tokens: &[S],
    table: &WordVectorTable,
    weighting: Weighting,
    vocabulary: Option<&Vocabulary>,
) -> Result<DenseVector> {
    let vocabulary = match (weighting, vocabulary) {
        (Weighting::Idf, None) => {
            return Err(Error::invalid("idf weighting requires a vocabulary"))
        }
        (_, vocab) => vocab,
    };
    let mut sum = vec![0.0f64; table.dim()];
    let mut total_weight = 0.0;
    for token in tokens {
        let token = token.as_ref();
        let Some(vector) = table.get(token) else {
            continue;
        };
        let weight = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::Idf => match vocabulary.and_then(|v| v.idf(token)) {
                Some(idf) => idf,
                None => continue,
            },
        };
        for (acc, &x) in sum.iter_mut().zip(vector) {
            *acc += weight * f64::from(x);
        }
        total_weight += weight;
    }
    if total_weight > 0.0 {
        sum.iter_mut().for_each(|v| *v /= total_weight);
    }
    DenseVector::normalized(sum)
}

/// Precomputed sentence embeddings keyed by tweet id, normalized on load.
#[derive(Debug, Clone, Default)]
pub struct TweetVectorFile {
    dim: usize,
    vectors: HashMap<String, DenseVector>,
}

impl TweetVectorFile {
    pub fn new(dim: usize) -> Self {
        TweetVectorFile {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: values.len(),
            });
        }
        self.vectors.insert(id.into(), DenseVector::normalized(values)?);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&DenseVector> {
        self.vectors
            .get(id)
            .ok_or_else(|| Error::MissingVector(id.to_owned()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Entries sorted by id.
    pub fn sorted(&self) -> Vec<(&str, &DenseVector)> {
        let mut rows: Vec<_> = self
            .vectors
            .iter()
            .map(|(id, v)| (id.as_str(), v))
            .collect();
        rows.sort_unstable_by_key(|(id, _)| *id);
        rows
    }
}

/// Load tweet vectors, detecting the binary format by its magic bytes.
pub fn load_tweet_vectors(path: &Path) -> Result<TweetVectorFile> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 8];
    let is_binary = match file.read_exact(&mut magic) {
        Ok(()) => magic == TWVEC_MAGIC,
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => false,
        Err(e) => return Err(Error::io(path, e)),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let table = if is_binary {
        read_binary(path, BufReader::new(file))?
    } else {
        read_tsv(path, BufReader::new(file))?
    };
    if table.is_empty() {
        return Err(Error::EmptyInput(path.to_owned()));
    }
    Ok(table)
}

fn read_tsv(path: &Path, reader: impl BufRead) -> Result<TweetVectorFile> {
    let mut table: Option<TweetVectorFile> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default().trim();
        let values = cells
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| {
                    Error::malformed(path, line_no, format!("bad component {c:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if id.is_empty() || values.is_empty() {
            return Err(Error::malformed(path, line_no, "expected id and components"));
        }
        let table = table.get_or_insert_with(|| TweetVectorFile::new(values.len()));
        if values.len() != table.dim {
            return Err(Error::malformed(
                path,
                line_no,
                format!("expected {} components, found {}", table.dim, values.len()),
            ));
        }
        table
            .insert(id, values)
            .map_err(|e| Error::malformed(path, line_no, e.to_string()))?;
    }
    Ok(table.unwrap_or_default())
}

fn read_binary(path: &Path, mut reader: impl Read) -> Result<TweetVectorFile> {
    let truncated = |what: &str| Error::malformed(path, 0, format!("truncated file: {what}"));
    let mut header = [0u8; 16];
    reader
        .read_exact(&mut header)
        .map_err(|_| truncated("header"))?;
    let count = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::malformed(path, 0, "dimension must be positive"));
    }

    let mut table = TweetVectorFile::new(dim);
    let mut word = [0u8; 4];
    let mut raw = vec![0u8; 4 * dim];
    for record in 0..count {
        reader
            .read_exact(&mut word)
            .map_err(|_| truncated("record header"))?;
        let id_len = u32::from_le_bytes(word) as usize;
        let mut id = vec![0u8; id_len];
        reader.read_exact(&mut id).map_err(|_| truncated("id"))?;
        let id = String::from_utf8(id)
            .map_err(|_| Error::malformed(path, 0, format!("record {record}: id is not UTF-8")))?;
        reader.read_exact(&mut raw).map_err(|_| truncated("values"))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        table.insert(id.as_str(), values).map_err(|e| {
            Error::malformed(path, 0, format!("record {record} ({id:?}): {e}"))
        })?;
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::malformed(
            path,
            0,
            format!("trailing bytes after {count} records"),
        ));
    }
    Ok(table)
}

pub fn write_tweet_vectors_tsv<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a DenseVector)>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    for (id, vector) in rows {
        write!(out, "{id}").map_err(io_err)?;
        for v in vector.values() {
            write!(out, "\t{v}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn write_tweet_vectors_binary<'a>(
    path: &Path,
    dim: usize,
    rows: &[(&'a str, &'a DenseVector)],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    let as_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::invalid(format!("{what} does not fit in u32")))
    };
    out.write_all(&TWVEC_MAGIC).map_err(io_err)?;
    out.write_all(&as_u32(rows.len(), "count")?.to_le_bytes())
        .map_err(io_err)?;
    out.write_all(&as_u32(dim, "dim")?.to_le_bytes())
        .map_err(io_err)?;
    for (id, vector) in rows {
        if vector.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: vector.dim(),
            });
        }
        out.write_all(&as_u32(id.len(), "id length")?.to_le_bytes())
            .map_err(io_err)?;
        out.write_all(id.as_bytes()).map_err(io_err)?;
        for &v in vector.values() {
            out.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}
