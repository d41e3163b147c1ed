//! Binary weight persistence.
//!
//! Layout: magic `RNFW`, little-endian `u32` version, length-prefixed UTF-8
//! JSON header (spec, provenance, per-tensor name/shape/offset), raw
//! little-endian `f64` payload in declaration order, and a trailing CRC32
//! (IEEE) of everything before it. Round-trips are bit-exact.
//!
//! The same envelope doubles as a generic tensor container (`kind:
//! "tensors"`) for feature matrices exported by the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{param_shapes, LayerParams, LayerSpec, NetworkSpec, TrainedNetwork};

pub const WEIGHT_FILE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RNFW";

/// Location of one tensor inside the payload; `offset` is in bytes from the
/// start of the float section.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    spec: Option<NetworkSpec>,
    provenance: String,
    tensors: Vec<TensorEntry>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null", default)]
    extra: serde_json::Value,
}

/// Named tensors read from (or destined for) a container file.
#[derive(Clone, Debug)]
pub struct TensorContainer {
    pub provenance: String,
    pub tensors: Vec<(String, Tensor)>,
    pub extra: serde_json::Value,
}

fn encode(header: &Header, tensors: &[&Tensor]) -> Result<Vec<u8>> {
    let header_json = serde_json::to_vec(header)?;
    let payload_len: usize = tensors.iter().map(|t| t.len() * 8).sum();
    let mut bytes = Vec::with_capacity(12 + header_json.len() + payload_len + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&WEIGHT_FILE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for tensor in tensors {
        for v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&bytes);
    bytes.extend_from_slice(&hasher.finalize().to_le_bytes());
    Ok(bytes)
}

fn decode(bytes: &[u8]) -> Result<(Header, Vec<Tensor>)> {
    if bytes.len() < 16 {
        return Err(Error::Format("file too short for envelope".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != WEIGHT_FILE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: WEIGHT_FILE_VERSION,
        });
    }
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&bytes[..bytes.len() - 4]);
    let computed = hasher.finalize();
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() - 4)
        .ok_or_else(|| Error::Format("header length exceeds file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[12..header_end])?;

    let payload = &bytes[header_end..bytes.len() - 4];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start
            .checked_add(count * 8)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| {
                Error::Format(format!("tensor '{}' extends past payload", entry.name))
            })?;
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(entry.shape.clone(), data)?);
    }
    Ok((header, tensors))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn entries_for(tensors: &[&Tensor], names: &[String]) -> Vec<TensorEntry> {
    let mut offset = 0u64;
    names
        .iter()
        .zip(tensors)
        .map(|(name, tensor)| {
            let entry = TensorEntry {
                name: name.clone(),
                shape: tensor.shape().to_vec(),
                offset,
            };
            offset += (tensor.len() * 8) as u64;
            entry
        })
        .collect()
}

/// Serializes a network to the weight-file format.
pub fn save_weights(net: &TrainedNetwork, path: impl AsRef<Path>) -> Result<()> {
    net.validate()?;
    let names: Vec<String> = param_shapes(&net.spec)?.into_iter().map(|(n, _)| n).collect();
    let tensors = net.tensors();
    let header = Header {
        kind: "network".into(),
        spec: Some(net.spec.clone()),
        provenance: net.provenance.clone(),
        tensors: entries_for(&tensors, &names),
        extra: serde_json::Value::Null,
    };
    write_file(path.as_ref(), &encode(&header, &tensors)?)
}

/// Rebuilds the [`LayerParams`] tree for one layer, consuming tensors in
/// declaration order.
fn assemble_layer(
    spec: &LayerSpec,
    tensors: &mut std::vec::IntoIter<Tensor>,
) -> Result<LayerParams> {
    let mut take_pair = |kind: &str| -> Result<(Tensor, Tensor)> {
        let weight = tensors
            .next()
            .ok_or_else(|| Error::ShapeInconsistency(format!("missing {kind} weight tensor")))?;
        let bias = tensors
            .next()
            .ok_or_else(|| Error::ShapeInconsistency(format!("missing {kind} bias tensor")))?;
        Ok((weight, bias))
    };
    Ok(match spec {
        LayerSpec::Conv { .. } => {
            let (weight, bias) = take_pair("conv")?;
            LayerParams::Conv { weight, bias }
        }
        LayerSpec::Dense { .. } => {
            let (weight, bias) = take_pair("dense")?;
            LayerParams::Dense { weight, bias }
        }
        LayerSpec::Residual { inner } => LayerParams::Seq(
            inner
                .iter()
                .map(|step| assemble_layer(step, tensors))
                .collect::<Result<_>>()?,
        ),
        LayerSpec::InceptionBlock { branches } => LayerParams::Branches(
            branches
                .iter()
                .map(|branch| {
                    branch
                        .iter()
                        .map(|step| assemble_layer(step, tensors))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
        ),
        LayerSpec::Fire { .. } => {
            let (sw, sb) = take_pair("fire squeeze")?;
            let (e1w, e1b) = take_pair("fire expand1x1")?;
            let (e3w, e3b) = take_pair("fire expand3x3")?;
            LayerParams::Fire {
                squeeze: Box::new(LayerParams::Conv { weight: sw, bias: sb }),
                expand1x1: Box::new(LayerParams::Conv { weight: e1w, bias: e1b }),
                expand3x3: Box::new(LayerParams::Conv { weight: e3w, bias: e3b }),
            }
        }
        LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Flatten => LayerParams::None,
    })
}

/// Loads a network, validating the stored tensors against the embedded spec.
pub fn load_weights(path: impl AsRef<Path>) -> Result<TrainedNetwork> {
    let bytes = read_file(path.as_ref())?;
    let (header, tensors) = decode(&bytes)?;
    if header.kind != "network" {
        return Err(Error::Format(format!(
            "expected a network file, found kind '{}'",
            header.kind
        )));
    }
    let spec = header
        .spec
        .ok_or_else(|| Error::Format("network file lacks embedded spec".into()))?;

    let expected = param_shapes(&spec)?;
    if expected.len() != header.tensors.len() {
        return Err(Error::ShapeInconsistency(format!(
            "spec declares {} tensors, file stores {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        if name != &entry.name {
            return Err(Error::ShapeInconsistency(format!(
                "tensor order mismatch: expected '{name}', found '{}'",
                entry.name
            )));
        }
        if shape != &entry.shape {
            return Err(Error::ShapeInconsistency(format!(
                "{name}: spec implies shape {shape:?}, file stores {:?}",
                entry.shape
            )));
        }
    }

    let mut iter = tensors.into_iter();
    let params = spec
        .layers
        .iter()
        .map(|layer| assemble_layer(layer, &mut iter))
        .collect::<Result<Vec<_>>>()?;
    let net = TrainedNetwork {
        spec,
        params,
        provenance: header.provenance,
    };
    net.validate()?;
    Ok(net)
}

/// Writes named tensors (plus free-form `extra` metadata) in the container
/// envelope.
pub fn save_tensor_container(container: &TensorContainer, path: impl AsRef<Path>) -> Result<()> {
    let names: Vec<String> = container.tensors.iter().map(|(n, _)| n.clone()).collect();
    let tensors: Vec<&Tensor> = container.tensors.iter().map(|(_, t)| t).collect();
    let header = Header {
        kind: "tensors".into(),
        spec: None,
        provenance: container.provenance.clone(),
        tensors: entries_for(&tensors, &names),
        extra: container.extra.clone(),
    };
    write_file(path.as_ref(), &encode(&header, &tensors)?)
}

/// Reads a tensor container written by [`save_tensor_container`].
pub fn load_tensor_container(path: impl AsRef<Path>) -> Result<TensorContainer> {
    let bytes = read_file(path.as_ref())?;
    let (header, tensors) = decode(&bytes)?;
    if header.kind != "tensors" {
        return Err(Error::Format(format!(
            "expected a tensor container, found kind '{}'",
            header.kind
        )));
    }
    let names = header.tensors.into_iter().map(|e| e.name);
    Ok(TensorContainer {
        provenance: header.provenance,
        tensors: names.zip(tensors).collect(),
        extra: header.extra,
    })
}
