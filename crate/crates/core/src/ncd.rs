//! Normalized compression distance over short UTF-8 texts.
//!
//! `NCD(a, b) = (C(a ␣ b) - min(C(a), C(b))) / max(C(a), C(b))` where `C` is
//! the raw DEFLATE stream length at level 9 and `␣` a single space. Inputs
//! are lowercased and whitespace runs collapsed before compression. The
//! concatenation is first argument then second; the distance is not
//! symmetric.

use std::cell::RefCell;
use std::collections::HashMap;

use flate2::{Compress, Compression, FlushCompress, Status};

use crate::error::{Error, Result};

/// Pinned DEFLATE level.
pub const DEFLATE_LEVEL: u32 = 9;

/// Size of a compressed stream, in bytes. Always at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompressedSize(usize);

impl CompressedSize {
    pub fn bytes(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NcdScore(f64);

impl NcdScore {
    /// Values slightly above 1 are legitimate for real compressors.
    pub const MAX: f64 = 1.1;

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Compressor seam. Only DEFLATE is provided.
pub trait Compressor {
    fn compressed_len(&self, data: &[u8]) -> usize;
}

/// Raw DEFLATE (no zlib/gzip container) at [`DEFLATE_LEVEL`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Deflate;

thread_local! {
    static DEFLATE: RefCell<(Compress, Vec<u8>)> =
        RefCell::new((Compress::new(Compression::new(DEFLATE_LEVEL), false), Vec::new()));
}

impl Compressor for Deflate {
    fn compressed_len(&self, data: &[u8]) -> usize {
        DEFLATE.with(|cell| {
            let (engine, buf) = &mut *cell.borrow_mut();
            engine.reset();
            buf.clear();
            buf.reserve(data.len() + 64);
            loop {
                let consumed = engine.total_in() as usize;
                let status = engine
                    .compress_vec(&data[consumed..], buf, FlushCompress::Finish)
                    .expect("in-memory deflate cannot fail");
                match status {
                    Status::StreamEnd => break,
                    Status::Ok | Status::BufError => buf.reserve(buf.capacity().max(64)),
                }
            }
            engine.total_out() as usize
        })
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_text(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Compressed size of the raw bytes of `text` (no normalization).
pub fn compressed_size(text: &str) -> CompressedSize {
    CompressedSize(Deflate.compressed_len(text.as_bytes()).max(1))
}

fn formula(joint: usize, ca: usize, cb: usize) -> NcdScore {
    let lo = ca.min(cb) as f64;
    let hi = ca.max(cb) as f64;
    NcdScore((joint as f64 - lo) / hi)
}

fn joined(a: &str, b: &str) -> String {
    let mut s = String::with_capacity(a.len() + b.len() + 1);
    s.push_str(a);
    s.push(' ');
    s.push_str(b);
    s
}

/// Normalized compression distance, `a` concatenated before `b`.
pub fn ncd(a: &str, b: &str) -> Result<NcdScore> {
    let a = normalize_text(a);
    let b = normalize_text(b);
    if a.is_empty() && b.is_empty() {
        return Err(Error::EmptyText);
    }
    let ca = compressed_size(&a).bytes();
    let cb = compressed_size(&b).bytes();
    let joint = compressed_size(&joined(&a, &b)).bytes();
    Ok(formula(joint, ca, cb))
}

/// [`ncd`] with memoized single-text sizes, for featurizing many items
/// against the same few context titles.
#[derive(Debug, Default)]
pub struct NcdCache {
    sizes: HashMap<String, usize>,
}

impl NcdCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn size_of(&mut self, normalized: &str) -> usize {
        if let Some(&n) = self.sizes.get(normalized) {
            return n;
        }
        let n = compressed_size(normalized).bytes();
        self.sizes.insert(normalized.to_owned(), n);
        n
    }

    pub fn ncd(&mut self, a: &str, b: &str) -> Result<NcdScore> {
        let a = normalize_text(a);
        let b = normalize_text(b);
        if a.is_empty() && b.is_empty() {
            return Err(Error::EmptyText);
        }
        let ca = self.size_of(&a);
        let cb = self.size_of(&b);
        let joint = compressed_size(&joined(&a, &b)).bytes();
        Ok(formula(joint, ca, cb))
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}
