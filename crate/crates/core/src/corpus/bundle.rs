//! Binary container for per-token final-layer vectors.
//!
//! All integers are little-endian. Strings are a `u32` byte length followed by
//! UTF-8 bytes. Layout, version 1:
//!
//! ```text
//! magic            8 bytes   "RSVBNDL\0"
//! version          u16       1
//! reserved         u16       0
//! model_name       string
//! family           string
//! parameter_count  u64
//! d_model          u32
//! n_layers         u32       0 when unknown
//! n_heads          u32       0 when unknown
//! training_steps   u64       0 = untrained, 143000 = fully trained
//! has_init_seed    u8        0 or 1
//! init_seed        i64       0 when has_init_seed = 0
//! n_docs           u32
//! doc_ids          n_docs x string
//! n_tokens         u64
//! payload_bytes    u64       must equal n_tokens * (20 + 4 * d_model)
//! payload          n_tokens x record
//!
//! record:
//! doc_index        u32       index into doc_ids
//! token_index      u64       strictly increasing within a document
//! sentence_id      u32
//! word_index       u32
//! vector           d_model x f32 (IEEE-754 binary32)
//! ```
//!
//! Documents are numbered in order of first appearance in the token list.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::WordKey;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"RSVBNDL\0";
pub const FORMAT_VERSION: u16 = 1;
const RECORD_FIXED_BYTES: u64 = 4 + 8 + 4 + 4;

/// Model metadata carried in a bundle header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelMeta {
    pub model_name: String,
    pub family: String,
    pub parameter_count: u64,
    pub d_model: usize,
    pub n_layers: u32,
    pub n_heads: u32,
    pub training_steps: u64,
    pub init_seed: Option<i64>,
}

impl ModelMeta {
    pub fn is_untrained(&self) -> bool {
        self.training_steps == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub token_index: u64,
    pub word_key: WordKey,
}

/// Per-token vectors of one model variant over one corpus.
///
/// Vectors are stored row-major in a single `f32` buffer.
#[derive(Debug, Clone)]
pub struct VectorBundle {
    meta: ModelMeta,
    tokens: Vec<Token>,
    vectors: Vec<f32>,
}

/// Bit-level equality, so NaN payloads compare equal to themselves.
impl PartialEq for VectorBundle {
    fn eq(&self, other: &Self) -> bool {
        self.meta == other.meta
            && self.tokens == other.tokens
            && self.vectors.len() == other.vectors.len()
            && self
                .vectors
                .iter()
                .zip(&other.vectors)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl VectorBundle {
    pub fn new(meta: ModelMeta, tokens: Vec<Token>, vectors: Vec<f32>) -> Result<Self> {
        if meta.d_model == 0 {
            return Err(Error::Format("d_model must be positive".into()));
        }
        if meta.parameter_count == 0 {
            return Err(Error::Format("parameter_count must be positive".into()));
        }
        if vectors.len() != tokens.len() * meta.d_model {
            return Err(Error::Format(format!(
                "{} vector values for {} tokens of width {}",
                vectors.len(),
                tokens.len(),
                meta.d_model
            )));
        }
        let mut last: HashMap<&str, u64> = HashMap::new();
        for t in &tokens {
            if let Some(&prev) = last.get(t.word_key.doc_id.as_str()) {
                if t.token_index <= prev {
                    return Err(Error::Format(format!(
                        "token_index {} does not increase after {} in doc `{}`",
                        t.token_index, prev, t.word_key.doc_id
                    )));
                }
            }
            last.insert(&t.word_key.doc_id, t.token_index);
        }
        Ok(VectorBundle { meta, tokens, vectors })
    }

    /// Replaces the metadata, keeping tokens and vectors.
    pub fn with_meta(self, meta: ModelMeta) -> Result<Self> {
        if meta.d_model != self.meta.d_model {
            return Err(Error::Format(format!(
                "cannot relabel a width-{} bundle as width {}",
                self.meta.d_model, meta.d_model
            )));
        }
        VectorBundle::new(meta, self.tokens, self.vectors)
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn d_model(&self) -> usize {
        self.meta.d_model
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        let d = self.meta.d_model;
        &self.vectors[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Token, &[f32])> {
        self.tokens.iter().zip(self.vectors.chunks_exact(self.meta.d_model))
    }
}

pub fn write_vector_bundle(bundle: &VectorBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if bundle.is_empty() {
        return Err(Error::Format("refusing to write a bundle without tokens".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(bundle, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vector_bundle(path: impl AsRef<Path>) -> Result<VectorBundle> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode(BufReader::new(file)).map_err(|e| e.context(path.display().to_string()))
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn encode(bundle: &VectorBundle, w: &mut impl Write) -> std::io::Result<()> {
    let m = &bundle.meta;
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    put_str(w, &m.model_name)?;
    put_str(w, &m.family)?;
    w.write_all(&m.parameter_count.to_le_bytes())?;
    w.write_all(&(m.d_model as u32).to_le_bytes())?;
    w.write_all(&m.n_layers.to_le_bytes())?;
    w.write_all(&m.n_heads.to_le_bytes())?;
    w.write_all(&m.training_steps.to_le_bytes())?;
    w.write_all(&[m.init_seed.is_some() as u8])?;
    w.write_all(&m.init_seed.unwrap_or(0).to_le_bytes())?;

    let mut doc_index: HashMap<&str, u32> = HashMap::new();
    let mut docs: Vec<&str> = Vec::new();
    for t in &bundle.tokens {
        let doc = t.word_key.doc_id.as_str();
        if !doc_index.contains_key(doc) {
            doc_index.insert(doc, docs.len() as u32);
            docs.push(doc);
        }
    }
    w.write_all(&(docs.len() as u32).to_le_bytes())?;
    for d in &docs {
        put_str(w, d)?;
    }
    let n = bundle.tokens.len() as u64;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&(n * record_bytes(m.d_model)).to_le_bytes())?;
    for (t, v) in bundle.iter() {
        w.write_all(&doc_index[t.word_key.doc_id.as_str()].to_le_bytes())?;
        w.write_all(&t.token_index.to_le_bytes())?;
        w.write_all(&t.word_key.sentence_id.to_le_bytes())?;
        w.write_all(&t.word_key.word_index.to_le_bytes())?;
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn record_bytes(d_model: usize) -> u64 {
    RECORD_FIXED_BYTES + 4 * d_model as u64
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf, what)?;
        Ok(buf)
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format(format!("truncated file while reading {what} at byte {}", self.offset))
            } else {
                Error::Format(format!("read failure at byte {}: {e}", self.offset))
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes::<1>(what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(what)?))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }
    fn i64(&mut self, what: &str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.bytes(what)?))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let mut buf = Vec::new();
        // `take` bounds the allocation by what the file can actually supply.
        let got = (&mut self.inner)
            .take(len as u64)
            .read_to_end(&mut buf)
            .map_err(|e| Error::Format(format!("read failure in {what}: {e}")))?;
        if got != len {
            return Err(Error::Format(format!(
                "truncated file while reading {what} at byte {}",
                self.offset
            )));
        }
        self.offset += len as u64;
        String::from_utf8(buf).map_err(|_| Error::Format(format!("{what} is not valid UTF-8")))
    }
}

pub fn decode(reader: impl Read) -> Result<VectorBundle> {
    let mut c = Cursor { inner: reader, offset: 0 };
    let magic: [u8; 8] = c.bytes("magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:02x?}")));
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let _reserved = c.u16("reserved")?;
    let model_name = c.string("model_name")?;
    let family = c.string("family")?;
    let parameter_count = c.u64("parameter_count")?;
    let d_model = c.u32("d_model")? as usize;
    let n_layers = c.u32("n_layers")?;
    let n_heads = c.u32("n_heads")?;
    let training_steps = c.u64("training_steps")?;
    let has_seed = c.u8("has_init_seed")?;
    let seed = c.i64("init_seed")?;
    let init_seed = match has_seed {
        0 => None,
        1 => Some(seed),
        x => return Err(Error::Format(format!("has_init_seed byte is {x}, expected 0 or 1"))),
    };
    if d_model == 0 {
        return Err(Error::Format("d_model is zero".into()));
    }

    let n_docs = c.u32("n_docs")? as usize;
    let mut docs = Vec::with_capacity(n_docs.min(1 << 16));
    for _ in 0..n_docs {
        docs.push(c.string("doc_id")?);
    }
    let n_tokens = c.u64("n_tokens")?;
    let payload_bytes = c.u64("payload_bytes")?;
    let expected = n_tokens.checked_mul(record_bytes(d_model));
    if expected != Some(payload_bytes) {
        return Err(Error::Format(format!(
            "declared token count {n_tokens} (width {d_model}) disagrees with payload length {payload_bytes}"
        )));
    }

    let cap = (n_tokens as usize).min(1 << 20);
    let mut tokens = Vec::with_capacity(cap);
    let mut vectors = Vec::with_capacity(cap * d_model);
    let mut vec_buf = vec![0u8; 4 * d_model];
    for _ in 0..n_tokens {
        let doc = c.u32("doc_index")? as usize;
        let token_index = c.u64("token_index")?;
        let sentence_id = c.u32("sentence_id")?;
        let word_index = c.u32("word_index")?;
        c.fill(&mut vec_buf, "vector")?;
        let doc_id = docs
            .get(doc)
            .ok_or_else(|| Error::Format(format!("doc_index {doc} out of range ({n_docs} docs)")))?
            .clone();
        tokens.push(Token {
            token_index,
            word_key: WordKey::new(doc_id, sentence_id, word_index),
        });
        vectors.extend(
            vec_buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
    }
    let mut probe = [0u8; 1];
    match c.inner.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::Format(format!(
                "trailing bytes after {n_tokens} declared tokens"
            )))
        }
        Err(e) => return Err(Error::Format(format!("read failure: {e}"))),
    }

    let meta = ModelMeta {
        model_name,
        family,
        parameter_count,
        d_model,
        n_layers,
        n_heads,
        training_steps,
        init_seed,
    };
    VectorBundle::new(meta, tokens, vectors)
}
