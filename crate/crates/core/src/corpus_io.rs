//! File formats: vocabularies, word2vec-text word vectors, the binary
//! matrix / tensor container, and the init-report CSV.
//!
//! Binary matrix layout (all integers and floats little-endian):
//!
//! ```text
//! magic  b"VXMATRIX"   8 bytes
//! rows   u64
//! dim    u64
//! data   rows * dim f64, row-major
//! ```
//!
//! The tensor container stores several named matrices:
//!
//! ```text
//! magic  b"VXTENSOR"
//! count  u64
//! count × { name_len u64, name utf-8, rows u64, cols u64, data f64 × rows*cols }
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type EmbeddingMatrix = Matrix;

const MATRIX_MAGIC: &[u8; 8] = b"VXMATRIX";
const TENSOR_MAGIC: &[u8; 8] = b"VXTENSOR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in ID order. Fails on duplicates or an
    /// empty list; line numbers in errors are 1-based positions.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        Self::with_origin(tokens, Path::new("<memory>"))
    }

    fn with_origin(tokens: Vec<String>, path: &Path) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyVocabulary {
                path: path.to_path_buf(),
            });
        }
        let mut id_of = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if let Some(prev) = id_of.insert(tok.clone(), i) {
                return Err(Error::DuplicateToken {
                    path: path.to_path_buf(),
                    token: tok.clone(),
                    first_line: prev + 1,
                    second_line: i + 1,
                });
            }
        }
        Ok(Self { tokens, id_of })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }
}

/// One token per line; the line number (from 0) is the token ID. Only the
/// line terminator (`\n` or `\r\n`) is removed.
pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    if text.ends_with('\n') {
        lines.pop();
    }
    let tokens = lines
        .into_iter()
        .filter(|_| !text.is_empty())
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect();
    Vocabulary::with_origin(tokens, path)
}

pub fn save_vocab(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (i, tok) in vocab.tokens().iter().enumerate() {
        if tok.contains('\n') || tok.ends_with('\r') {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("token {tok:?} cannot be stored one-per-line"),
            });
        }
        out.push_str(tok);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// External word vectors, one row per word, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorStore {
    words: Vec<String>,
    vectors: Matrix,
}

impl WordVectorStore {
    pub fn new(words: Vec<String>, vectors: Matrix) -> Result<Self> {
        if words.len() != vectors.rows() {
            return Err(Error::Shape(format!(
                "{} words but {} vectors",
                words.len(),
                vectors.rows()
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::NonFiniteMatrix);
        }
        let mut seen = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if let Some(prev) = seen.insert(w.as_str(), i) {
                return Err(Error::DuplicateToken {
                    path: "<memory>".into(),
                    token: w.clone(),
                    first_line: prev + 1,
                    second_line: i + 1,
                });
            }
        }
        Ok(Self { words, vectors })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }
}

/// Reads word2vec text format: a `<count> <dim>` header, then
/// `<word> v1 … vdim` per line.
pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordVectorStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `<count> <dim>` header".into()))?;
    let header: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match header.as_slice() {
        [c, d] => (
            c.parse::<usize>()
                .map_err(|e| parse_err(1, format!("bad count {c:?}: {e}")))?,
            d.parse::<usize>()
                .map_err(|e| parse_err(1, format!("bad dim {d:?}: {e}")))?,
        ),
        _ => return Err(parse_err(1, "header must be `<count> <dim>`".into())),
    };

    let mut words = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(count);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let word = fields.next().unwrap_or_default().to_string();
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                path: path.to_path_buf(),
                line: lineno,
                expected: dim,
                found: values.len(),
            });
        }
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad value {v:?}: {e}")))?;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    path: path.to_path_buf(),
                    line: lineno,
                    value: v.to_string(),
                });
            }
            data.push(x);
        }
        if let Some(prev) = seen.insert(word.clone(), lineno) {
            return Err(Error::DuplicateToken {
                path: path.to_path_buf(),
                token: word,
                first_line: prev,
                second_line: lineno,
            });
        }
        words.push(word);
    }
    if words.len() != count {
        return Err(Error::RowCountMismatch {
            path: path.to_path_buf(),
            expected: count,
            found: words.len(),
        });
    }
    let vectors = Matrix::from_vec(count, dim, data)?;
    Ok(WordVectorStore { words, vectors })
}

pub fn save_word_vectors(store: &WordVectorStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", store.len(), store.dim());
    for (i, w) in store.words().iter().enumerate() {
        if w.is_empty() || w.chars().any(|c| c == ' ' || c == '\n' || c == '\r') {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("word {w:?} cannot be written in word2vec text format"),
            });
        }
        out.push_str(w);
        for &v in store.vector(i) {
            out.push(' ');
            push_f64(&mut out, v);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Shortest decimal representation that parses back to the same bits.
pub(crate) fn push_f64(out: &mut String, v: f64) {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        let _ = write!(out, "{v}");
    } else {
        let _ = write!(out, "{v:e}");
    }
}

pub fn matrix_to_bytes(m: &Matrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 8 * m.as_slice().len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn matrix_from_bytes(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < 8 || &bytes[..8] != MATRIX_MAGIC {
        if bytes.len() < 8 && MATRIX_MAGIC.starts_with(bytes) {
            return Err(Error::ShortRead {
                path: path.to_path_buf(),
                expected: 24,
                found: bytes.len(),
            });
        }
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut cursor = Cursor::new(&bytes[8..], path);
    let rows = cursor.u64()? as usize;
    let dim = cursor.u64()? as usize;
    let payload = cursor.rest();
    let expected_values = rows.checked_mul(dim).ok_or_else(|| Error::SizeMismatch {
        path: path.to_path_buf(),
        rows,
        dim,
        values: payload.len() / 8,
    })?;
    if !payload.len().is_multiple_of(8) {
        return Err(Error::ShortRead {
            path: path.to_path_buf(),
            expected: expected_values * 8,
            found: payload.len(),
        });
    }
    if payload.len() / 8 != expected_values {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            rows,
            dim,
            values: payload.len() / 8,
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let m = Matrix::from_vec(rows, dim, data)?;
    if !m.is_finite() {
        return Err(Error::NonFiniteMatrix);
    }
    Ok(m)
}

pub fn save_matrix(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_to_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    matrix_from_bytes(&bytes, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self {
            bytes,
            pos: 0,
            path,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::ShortRead {
                path: self.path.to_path_buf(),
                expected: n,
                found: self.bytes.len() - self.pos,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }

    fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn save_tensors(tensors: &[(String, &Matrix)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, m) in tensors {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, Matrix)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..8] != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut cur = Cursor::new(&bytes[8..], path);
    let count = cur.u64()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = cur.u64()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("tensor name is not UTF-8: {e}"),
            })?
            .to_string();
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| Error::SizeMismatch {
            path: path.to_path_buf(),
            rows,
            dim: cols,
            values: 0,
        })?;
        let raw = cur.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    if !cur.is_done() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "trailing bytes after last tensor".into(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Copied,
    Predicted,
    Random,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Copied => "copied",
            Provenance::Predicted => "predicted",
            Provenance::Random => "random",
        }
    }
}

/// Where each target row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    pub copied: usize,
    pub predicted: usize,
    pub random: usize,
    pub total: usize,
    pub tokens: Vec<String>,
    pub provenance: Vec<Provenance>,
}

impl InitReport {
    pub fn from_provenance(tokens: Vec<String>, provenance: Vec<Provenance>) -> Self {
        let count = |p| provenance.iter().filter(|&&x| x == p).count();
        Self {
            copied: count(Provenance::Copied),
            predicted: count(Provenance::Predicted),
            random: count(Provenance::Random),
            total: provenance.len(),
            tokens,
            provenance,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReportRow {
    token_id: usize,
    token: String,
    provenance: Provenance,
}

pub fn save_report(report: &InitReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (i, (tok, prov)) in report.tokens.iter().zip(&report.provenance).enumerate() {
        w.serialize(ReportRow {
            token_id: i,
            token: tok.clone(),
            provenance: *prov,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<InitReport> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut tokens = Vec::new();
    let mut provenance = Vec::new();
    for (i, row) in r.deserialize::<ReportRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        if row.token_id != i {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("token_id {} out of order (expected {i})", row.token_id),
            });
        }
        tokens.push(row.token);
        provenance.push(row.provenance);
    }
    Ok(InitReport::from_provenance(tokens, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, name: &str, contents: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn vocab_ids_follow_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let v = load_vocab(write(&dir, "v.txt", b"a\nb\nc\n")).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id_of("b"), Some(1));
        assert_eq!(v.token(2), "c");
    }

    #[test]
    fn vocab_keeps_inner_whitespace_and_strips_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let v = load_vocab(write(&dir, "v.txt", b" a \r\nb")).unwrap();
        assert_eq!(v.tokens(), &[" a ".to_string(), "b".to_string()]);
    }

    #[test]
    fn duplicate_token_names_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_vocab(write(&dir, "v.txt", b"a\nb\na\n")).unwrap_err();
        match err {
            Error::DuplicateToken {
                first_line,
                second_line,
                ref token,
                ..
            } => {
                assert_eq!((first_line, second_line), (1, 3));
                assert_eq!(token, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_vocab_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_vocab(write(&dir, "v.txt", b"")).unwrap_err();
        assert!(matches!(err, Error::EmptyVocabulary { .. }));
    }

    #[test]
    fn word_vectors_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.txt", b"2 3\ncat 1 0 0\ndog 0 1 0\n");
        let s = load_word_vectors(p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.word(1), "dog");
        assert_eq!(s.vector(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn word_vectors_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.txt", b"2 3\na 1 0 0\nb 0 1 0\nc 0 0 1\n");
        assert!(matches!(
            load_word_vectors(p).unwrap_err(),
            Error::RowCountMismatch {
                expected: 2,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn word_vectors_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.txt", b"1 3\ncat 1 0\n");
        assert!(matches!(
            load_word_vectors(p).unwrap_err(),
            Error::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2,
                ..
            }
        ));
    }

    #[test]
    fn word_vectors_reject_nan() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.txt", b"1 2\ncat 1 NaN\n");
        assert!(matches!(
            load_word_vectors(p).unwrap_err(),
            Error::NonFinite { line: 2, .. }
        ));
    }

    #[test]
    fn small_matrix_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let p = dir.path().join("m.bin");
        save_matrix(&m, &p).unwrap();
        assert_eq!(load_matrix(&p).unwrap(), m);
    }

    #[test]
    fn truncated_matrix_is_a_short_read() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let bytes = matrix_to_bytes(&m);
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            matrix_from_bytes(cut, Path::new("m")).unwrap_err(),
            Error::ShortRead { .. }
        ));
        assert!(matches!(
            matrix_from_bytes(&bytes[..12], Path::new("m")).unwrap_err(),
            Error::ShortRead { .. }
        ));
    }

    #[test]
    fn header_body_size_mismatch() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MATRIX_MAGIC);
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        for v in [1.0f64, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            matrix_from_bytes(&bytes, Path::new("m")).unwrap_err(),
            Error::SizeMismatch {
                rows: 3,
                dim: 3,
                values: 4,
                ..
            }
        ));
    }

    #[test]
    fn report_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let r = InitReport::from_provenance(
            vec!["a,b".into(), "\"q\"".into(), "c".into()],
            vec![Provenance::Copied, Provenance::Predicted, Provenance::Random],
        );
        let p = dir.path().join("r.csv");
        save_report(&r, &p).unwrap();
        let back = load_report(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.copied + back.predicted + back.random, back.total);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            -1e3..1e3f64,
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matrix_bytes_round_trip(rows in 0usize..6, cols in 0usize..6, seed in prop::collection::vec(finite(), 36)) {
            let m = Matrix::from_vec(rows, cols, seed[..rows * cols].to_vec()).unwrap();
            let back = matrix_from_bytes(&matrix_to_bytes(&m), Path::new("m")).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn text_formats_round_trip(
            words in prop::collection::btree_set("[a-zé▁]{1,6}", 1..8),
            values in prop::collection::vec(finite(), 24),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let words: Vec<String> = words.into_iter().collect();
            let dim = 3;
            let mut data = values;
            data.resize(words.len() * dim, 0.5);
            let store = WordVectorStore::new(
                words.clone(),
                Matrix::from_vec(words.len(), dim, data).unwrap(),
            ).unwrap();
            let wp = dir.path().join("w.txt");
            save_word_vectors(&store, &wp).unwrap();
            let back = load_word_vectors(&wp).unwrap();
            prop_assert_eq!(back.words(), store.words());
            for (a, b) in back.vectors().as_slice().iter().zip(store.vectors().as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }

            let vocab = Vocabulary::new(words).unwrap();
            let vp = dir.path().join("v.txt");
            save_vocab(&vocab, &vp).unwrap();
            prop_assert_eq!(load_vocab(&vp).unwrap(), vocab);
        }
    }
}
