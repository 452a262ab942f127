//! `BEMB` embedding files, shared with the external embedding exporter.
//!
//! ```text
//! "BEMB" | version u32 | frame_level u32 (1 frame-level, 0 utterance-level)
//!        | utterance count u32
//!        | per utterance: id length u32, UTF-8 id, n_frames u32, dim u32,
//!                         n_frames * dim f32, row-major
//! ```
//! All integers and floats little-endian. Utterance-level records have
//! exactly one frame.

use std::path::Path;

use super::{pool_functionals, FrameEmbeddingSequence, UtteranceEmbedding};
use crate::binio::{BinReader, BinWriter};
use crate::error::Result;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"BEMB";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingFile {
    FrameLevel(Vec<FrameEmbeddingSequence>),
    UtteranceLevel(Vec<UtteranceEmbedding>),
}

impl EmbeddingFile {
    pub fn len(&self) -> usize {
        match self {
            EmbeddingFile::FrameLevel(v) => v.len(),
            EmbeddingFile::UtteranceLevel(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Utterance-level vectors, pooling frame-level records with mean+std.
    pub fn into_pooled(self) -> Result<Vec<UtteranceEmbedding>> {
        match self {
            EmbeddingFile::FrameLevel(seqs) => seqs.iter().map(pool_functionals).collect(),
            EmbeddingFile::UtteranceLevel(v) => Ok(v),
        }
    }
}

pub fn embedding_file_to_bytes(file: &EmbeddingFile) -> Result<Vec<u8>> {
    let mut w = BinWriter::new();
    w.bytes(EMBEDDING_MAGIC);
    w.u32(EMBEDDING_VERSION);
    let record = |w: &mut BinWriter, id: &str, rows: &[&[f64]]| -> Result<()> {
        w.len_u32(id.len())?;
        w.bytes(id.as_bytes());
        w.len_u32(rows.len())?;
        w.len_u32(rows.first().map_or(0, |r| r.len()))?;
        for &v in rows.iter().copied().flatten() {
            w.f32(v as f32);
        }
        Ok(())
    };
    match file {
        EmbeddingFile::FrameLevel(seqs) => {
            w.u32(1);
            w.len_u32(seqs.len())?;
            for s in seqs {
                let rows: Vec<&[f64]> = s.embeddings.iter().map(Vec::as_slice).collect();
                record(&mut w, &s.utterance_id, &rows)?;
            }
        }
        EmbeddingFile::UtteranceLevel(v) => {
            w.u32(0);
            w.len_u32(v.len())?;
            for u in v {
                record(&mut w, &u.utterance_id, &[&u.vector])?;
            }
        }
    }
    Ok(w.into_inner())
}

pub fn embedding_file_from_bytes(bytes: &[u8]) -> Result<EmbeddingFile> {
    let mut r = BinReader::new("BEMB", bytes);
    r.magic(EMBEDDING_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != EMBEDDING_VERSION {
        return Err(r.error_at(at, format!("unsupported version {version}")));
    }
    let at = r.offset();
    let frame_level = match r.u32("frame_level flag")? {
        0 => false,
        1 => true,
        v => return Err(r.error_at(at, format!("frame_level flag {v} is neither 0 nor 1"))),
    };
    let count = r.u32("utterance count")? as usize;
    let mut dim_seen: Option<usize> = None;
    let mut seqs = Vec::new();
    let mut utts = Vec::new();
    for _ in 0..count {
        let rec_at = r.offset();
        let id_len = r.u32("id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "utterance id")?)
            .map_err(|_| r.error_at(rec_at + 4, "utterance id is not UTF-8"))?
            .to_string();
        let n_frames = r.u32("frame count")? as usize;
        let dim_at = r.offset();
        let dim = r.u32("dim")? as usize;
        if n_frames == 0 || dim == 0 {
            return Err(r.error_at(rec_at, format!("{id}: empty record ({n_frames} x {dim})")));
        }
        if !frame_level && n_frames != 1 {
            return Err(r.error_at(rec_at, format!("{id}: utterance-level record with {n_frames} frames")));
        }
        match dim_seen {
            Some(d) if d != dim => {
                return Err(r.error_at(dim_at, format!("{id}: dim {dim} differs from earlier dim {d}")))
            }
            _ => dim_seen = Some(dim),
        }
        let mut rows = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let row = (0..dim)
                .map(|_| r.f32("embedding values").map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if frame_level {
            seqs.push(FrameEmbeddingSequence::new(id, rows)?);
        } else {
            let vector = rows.pop().unwrap();
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(r.error_at(rec_at, format!("{id}: non-finite value")));
            }
            utts.push(UtteranceEmbedding {
                utterance_id: id,
                vector,
            });
        }
    }
    if !r.is_at_end() {
        return Err(r.error("trailing bytes after last record"));
    }
    Ok(if frame_level {
        EmbeddingFile::FrameLevel(seqs)
    } else {
        EmbeddingFile::UtteranceLevel(utts)
    })
}

pub fn write_embedding_file(path: impl AsRef<Path>, file: &EmbeddingFile) -> Result<()> {
    std::fs::write(path, embedding_file_to_bytes(file)?)?;
    Ok(())
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    embedding_file_from_bytes(&std::fs::read(path)?)
}

/// Loads a `BEMB` file and returns utterance-level vectors, pooling
/// frame-level records.
pub fn load_external_embeddings(path: impl AsRef<Path>) -> Result<Vec<UtteranceEmbedding>> {
    read_embedding_file(path)?.into_pooled()
}
