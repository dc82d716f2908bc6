//! Binary model container.
//!
//! Layout: the 8-byte magic `LSEMODEL`, the header length as a little-endian
//! `u64`, a UTF-8 JSON header, then the arrays `W_v`, `W`, `b`, `W_e` as
//! row-major little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dims, ModelParams};

const MAGIC: &[u8; 8] = b"LSEMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub dims: Dims,
    /// SHA-256 of the vocabulary TSV the model was trained with.
    pub vocab_hash: String,
    /// Entity ids in row order of `W_e`.
    pub entity_ids: Vec<String>,
    /// Echo of the training configuration.
    pub config: serde_json::Value,
}

pub fn write_model<W: Write>(mut out: W, header: &ModelHeader, params: &ModelParams) -> Result<()> {
    if header.dims != params.dims() {
        return Err(Error::Model(format!(
            "header dims {:?} do not match parameters {:?}",
            header.dims,
            params.dims()
        )));
    }
    if header.entity_ids.len() != header.dims.num_entities {
        return Err(Error::Model("entity id list does not match entity count".into()));
    }
    let json = serde_json::to_vec(header)?;
    let io = |e| Error::io("<model>", e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&json).map_err(io)?;
    let values = params
        .word_embeddings
        .iter()
        .chain(params.transform.iter())
        .chain(params.bias.iter())
        .chain(params.entity_embeddings.iter());
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_f64s<R: Read>(input: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    input
        .read_exact(&mut bytes)
        .map_err(|_| Error::Model("truncated parameter arrays".into()))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn read_model<R: Read>(mut input: R) -> Result<(ModelHeader, ModelParams)> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Model("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Model("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input
        .read_exact(&mut len)
        .map_err(|_| Error::Model("missing header length".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input
        .read_exact(&mut json)
        .map_err(|_| Error::Model("truncated header".into()))?;
    let header: ModelHeader = serde_json::from_slice(&json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Model(format!("unsupported format version {}", header.format_version)));
    }
    let Dims { word_dim, entity_dim, vocab_size, num_entities } = header.dims;
    header.dims.validate()?;
    let shape_err = |e: ndarray::ShapeError| Error::Model(e.to_string());
    let params = ModelParams {
        word_embeddings: Array2::from_shape_vec((word_dim, vocab_size), read_f64s(&mut input, word_dim * vocab_size)?)
            .map_err(shape_err)?,
        transform: Array2::from_shape_vec((entity_dim, word_dim), read_f64s(&mut input, entity_dim * word_dim)?)
            .map_err(shape_err)?,
        bias: Array1::from(read_f64s(&mut input, entity_dim)?),
        entity_embeddings: Array2::from_shape_vec(
            (num_entities, entity_dim),
            read_f64s(&mut input, num_entities * entity_dim)?,
        )
        .map_err(shape_err)?,
    };
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| Error::io("<model>", e))? != 0 {
        return Err(Error::Model("trailing bytes after parameter arrays".into()));
    }
    if header.entity_ids.len() != num_entities {
        return Err(Error::Model("entity id list does not match entity count".into()));
    }
    params.validate()?;
    Ok((header, params))
}

pub fn save_model(path: &Path, header: &ModelHeader, params: &ModelParams) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(BufWriter::new(file), header, params)
}

pub fn load_model(path: &Path) -> Result<(ModelHeader, ModelParams)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}

/// Human-readable summary written next to the container as `<name>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub dims: Dims,
    pub num_parameters: usize,
    pub vocab_hash: String,
    pub config: serde_json::Value,
    pub best_epoch: Option<usize>,
    pub frobenius_norms: FrobeniusNorms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusNorms {
    pub word_embeddings: f64,
    pub transform: f64,
    pub bias: f64,
    pub entity_embeddings: f64,
}

impl ModelMeta {
    pub fn new(header: &ModelHeader, params: &ModelParams, best_epoch: Option<usize>) -> Self {
        ModelMeta {
            format_version: header.format_version,
            dims: header.dims,
            num_parameters: header.dims.num_parameters(),
            vocab_hash: header.vocab_hash.clone(),
            config: header.config.clone(),
            best_epoch,
            frobenius_norms: FrobeniusNorms {
                word_embeddings: frobenius(params.word_embeddings.iter()),
                transform: frobenius(params.transform.iter()),
                bias: frobenius(params.bias.iter()),
                entity_embeddings: frobenius(params.entity_embeddings.iter()),
            },
        }
    }
}

fn frobenius<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn fixture() -> (ModelHeader, ModelParams) {
        let dims = Dims { word_dim: 3, entity_dim: 2, vocab_size: 5, num_entities: 4 };
        let mut params = init_params(dims, 9).unwrap();
        params.bias[1] = -0.25;
        let header = ModelHeader {
            format_version: FORMAT_VERSION,
            dims,
            vocab_hash: "abc".into(),
            entity_ids: (0..4).map(|i| format!("e{i}")).collect(),
            config: serde_json::json!({"e_e": 2}),
        };
        (header, params)
    }

    #[test]
    fn roundtrip_is_exact() {
        let (header, params) = fixture();
        let mut buf = Vec::new();
        write_model(&mut buf, &header, &params).unwrap();
        let (h2, p2) = read_model(&buf[..]).unwrap();
        assert_eq!(h2, header);
        assert_eq!(p2, params);
        let json_len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 16 + json_len + 8 * header.dims.num_parameters());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (header, params) = fixture();
        let mut buf = Vec::new();
        write_model(&mut buf, &header, &params).unwrap();
        assert!(read_model(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_model(&extra[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_model(&bad[..]).is_err());
    }
}
