//! `BMTL` model files.
//!
//! Layout (all integers little-endian u32 unless noted):
//!
//! ```text
//! "BMTL" | version | kind (0 = network, 1 = multi-task model) | body
//! network block:
//!   input rank, input dims..., layer count,
//!   per layer: tag u8 (0 conv1d, 1 dense, 2 relu, 3 leaky_relu, 4 softmax)
//!              conv1d: in_channels out_channels kernel_len stride
//!              dense:  in_dim out_dim
//!              leaky_relu: slope f64
//!   init seed u64,
//!   parameters as f64, layer order, weight then bias, row-major
//! ```

use std::path::Path;

use super::{LayerSpec, Network, Tensor};
use crate::binio::{BinReader, BinWriter};
use crate::error::Result;

pub const MODEL_MAGIC: &[u8; 4] = b"BMTL";
pub const MODEL_VERSION: u32 = 1;

/// Model kinds stored after the version word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum ModelKind {
    Network = 0,
    MultiTask = 1,
}

pub(crate) fn write_header(w: &mut BinWriter, kind: ModelKind) {
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u32(kind as u32);
}

pub(crate) fn read_header(r: &mut BinReader, kind: ModelKind) -> Result<()> {
    r.magic(MODEL_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(r.error_at(at, format!("unsupported version {version}")));
    }
    let at = r.offset();
    let got = r.u32("model kind")?;
    if got != kind as u32 {
        return Err(r.error_at(at, format!("model kind {got}, expected {}", kind as u32)));
    }
    Ok(())
}

pub(crate) fn write_network(w: &mut BinWriter, net: &Network) -> Result<()> {
    w.len_u32(net.input_shape().len())?;
    for &d in net.input_shape() {
        w.len_u32(d)?;
    }
    w.len_u32(net.layers().len())?;
    for l in net.layers() {
        match *l {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                stride,
            } => {
                w.u8(0);
                for v in [in_channels, out_channels, kernel_len, stride] {
                    w.len_u32(v)?;
                }
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                w.u8(1);
                w.len_u32(in_dim)?;
                w.len_u32(out_dim)?;
            }
            LayerSpec::Relu => w.u8(2),
            LayerSpec::LeakyRelu { slope } => {
                w.u8(3);
                w.f64(slope);
            }
            LayerSpec::Softmax => w.u8(4),
        }
    }
    w.u64(net.rng_seed());
    for t in net.params().iter().flatten() {
        for &v in t.data() {
            w.f64(v);
        }
    }
    Ok(())
}

pub(crate) fn read_network(r: &mut BinReader) -> Result<Network> {
    let rank = r.u32("input rank")? as usize;
    if rank == 0 || rank > 8 {
        return Err(r.error(format!("implausible input rank {rank}")));
    }
    let input_shape = (0..rank)
        .map(|_| r.u32("input dim").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_layers = r.u32("layer count")? as usize;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let at = r.offset();
        let spec = match r.u8("layer tag")? {
            0 => LayerSpec::Conv1d {
                in_channels: r.u32("conv in_channels")? as usize,
                out_channels: r.u32("conv out_channels")? as usize,
                kernel_len: r.u32("conv kernel_len")? as usize,
                stride: r.u32("conv stride")? as usize,
            },
            1 => LayerSpec::Dense {
                in_dim: r.u32("dense in_dim")? as usize,
                out_dim: r.u32("dense out_dim")? as usize,
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::LeakyRelu {
                slope: r.f64("leaky slope")?,
            },
            4 => LayerSpec::Softmax,
            t => return Err(r.error_at(at, format!("unknown layer tag {t}"))),
        };
        layers.push(spec);
    }
    let seed = r.u64("init seed")?;
    let mut params = Vec::with_capacity(layers.len());
    for l in &layers {
        let mut group = Vec::new();
        for shape in l.param_shapes() {
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| r.f64("parameters"))
                .collect::<Result<Vec<_>>>()?;
            group.push(Tensor::new(shape, data)?);
        }
        params.push(group);
    }
    Network::from_parts(input_shape, layers, params, seed)
}

pub fn network_to_bytes(net: &Network) -> Result<Vec<u8>> {
    let mut w = BinWriter::new();
    write_header(&mut w, ModelKind::Network);
    write_network(&mut w, net)?;
    Ok(w.into_inner())
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = BinReader::new("BMTL", bytes);
    read_header(&mut r, ModelKind::Network)?;
    let net = read_network(&mut r)?;
    if !r.is_at_end() {
        return Err(r.error("trailing bytes after network"));
    }
    Ok(net)
}

pub fn save_network(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    std::fs::write(path, network_to_bytes(net)?)?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    network_from_bytes(&std::fs::read(path)?)
}
