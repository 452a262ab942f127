//! Multi-task models in the `BMTL` container (model kind 1).
//!
//! ```text
//! header | input_dim u32 | hidden1 u32 | hidden2 u32
//!        | age mean f64 | age std f64
//!        | input_dim x (feature mean f64, feature std f64)
//!        | trunk, emotion head, age head, country head network blocks
//! ```

use std::path::Path;

use super::{MtlModel, Standardizer};
use crate::binio::{BinReader, BinWriter};
use crate::error::Result;
use crate::nn::persist::{read_header, read_network, write_header, write_network, ModelKind};

/// Fixed-size prefix of a multi-task model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MtlHeader {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

pub fn mtl_to_bytes(model: &MtlModel) -> Result<Vec<u8>> {
    let mut w = BinWriter::new();
    write_header(&mut w, ModelKind::MultiTask);
    let (h1, h2) = model.hidden_dims();
    w.len_u32(model.input_dim())?;
    w.len_u32(h1)?;
    w.len_u32(h2)?;
    w.f64(model.age_norm().mean);
    w.f64(model.age_norm().std);
    for s in model.feature_norm() {
        w.f64(s.mean);
        w.f64(s.std);
    }
    write_network(&mut w, model.trunk())?;
    for h in model.heads() {
        write_network(&mut w, h)?;
    }
    Ok(w.into_inner())
}

fn read_prefix(r: &mut BinReader) -> Result<MtlHeader> {
    read_header(r, ModelKind::MultiTask)?;
    Ok(MtlHeader {
        input_dim: r.u32("input_dim")? as usize,
        hidden1: r.u32("hidden1")? as usize,
        hidden2: r.u32("hidden2")? as usize,
    })
}

/// Reads only the dimensions at the start of a multi-task model file.
pub fn read_mtl_header(bytes: &[u8]) -> Result<MtlHeader> {
    read_prefix(&mut BinReader::new("BMTL", bytes))
}

pub fn mtl_from_bytes(bytes: &[u8]) -> Result<MtlModel> {
    let mut r = BinReader::new("BMTL", bytes);
    let header = read_prefix(&mut r)?;
    let age = Standardizer {
        mean: r.f64("age mean")?,
        std: r.f64("age std")?,
    };
    let mut feature_norm = Vec::with_capacity(header.input_dim.min(1 << 20));
    for _ in 0..header.input_dim {
        feature_norm.push(Standardizer {
            mean: r.f64("feature mean")?,
            std: r.f64("feature std")?,
        });
    }
    let at = r.offset();
    let trunk = read_network(&mut r)?;
    let emotion = read_network(&mut r)?;
    let age_head = read_network(&mut r)?;
    let country = read_network(&mut r)?;
    if !r.is_at_end() {
        return Err(r.error("trailing bytes after model"));
    }
    let model = MtlModel::from_parts(trunk, emotion, age_head, country, feature_norm, age)
        .map_err(|e| r.error_at(at, e.to_string()))?;
    if model.hidden_dims() != (header.hidden1, header.hidden2) {
        return Err(r.error_at(at, "header hidden dims disagree with the trunk"));
    }
    Ok(model)
}

pub fn save_mtl(path: impl AsRef<Path>, model: &MtlModel) -> Result<()> {
    std::fs::write(path, mtl_to_bytes(model)?)?;
    Ok(())
}

pub fn load_mtl(path: impl AsRef<Path>) -> Result<MtlModel> {
    mtl_from_bytes(&std::fs::read(path)?)
}
