//! The NTD tensor-dump format and the in-memory network model.
//!
//! Layout (little-endian):
//!
//! ```text
//! "NTD1"            4 bytes magic
//! header_len        u32
//! header            header_len bytes of compact UTF-8 JSON, keys sorted:
//!                   {"meta":{..},"tensors":[{"dtype":"f32","layer":..,
//!                    "name":..,"role":..,"shape":[..]}, ..]}
//! payloads          raw f32 data of every tensor, in header order
//! ```
//!
//! Writers emit tensors layer by layer in the fixed role order
//! filters, bn_gamma, bn_beta, grads, gap_matrix, nonzero_fraction and name
//! each one `<layer>.<role>`; a file in that canonical form survives a
//! load/write cycle byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FilterMatrix;

pub const MAGIC: &[u8; 4] = b"NTD1";

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&s| s == 0) || expected != data.len() {
            return Err(Error::ShapeMismatch {
                tensor: "<unnamed>".into(),
                detail: format!("shape {:?} does not hold {} values", shape, data.len()),
            });
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        DenseTensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn check_finite(&self, name: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFiniteValue {
                tensor: name.to_string(),
                index,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TensorRole {
    Filters,
    BnGamma,
    BnBeta,
    Grads,
    GapMatrix,
    NonzeroFraction,
}

impl TensorRole {
    pub const ALL: [TensorRole; 6] = [
        TensorRole::Filters,
        TensorRole::BnGamma,
        TensorRole::BnBeta,
        TensorRole::Grads,
        TensorRole::GapMatrix,
        TensorRole::NonzeroFraction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TensorRole::Filters => "filters",
            TensorRole::BnGamma => "bn_gamma",
            TensorRole::BnBeta => "bn_beta",
            TensorRole::Grads => "grads",
            TensorRole::GapMatrix => "gap_matrix",
            TensorRole::NonzeroFraction => "nonzero_fraction",
        }
    }
}

impl fmt::Display for TensorRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TensorRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TensorRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidHeader(format!("unknown tensor role `{s}`")))
    }
}

/// One convolutional layer: filters of shape `[N_out, N_in, k, k]` plus the
/// optional auxiliary tensors some criteria need.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub filters: DenseTensor,
    pub bn_gamma: Option<DenseTensor>,
    pub bn_beta: Option<DenseTensor>,
    pub grads: Option<DenseTensor>,
    pub gap_matrix: Option<DenseTensor>,
    pub nonzero_fraction: Option<DenseTensor>,
}

impl LayerRecord {
    pub fn new(name: impl Into<String>, filters: DenseTensor) -> Result<Self> {
        let layer = LayerRecord {
            name: name.into(),
            filters,
            bn_gamma: None,
            bn_beta: None,
            grads: None,
            gap_matrix: None,
            nonzero_fraction: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn with_tensor(mut self, role: TensorRole, tensor: DenseTensor) -> Result<Self> {
        *self.slot_mut(role) = Some(tensor);
        self.validate()?;
        Ok(self)
    }

    pub fn tensor(&self, role: TensorRole) -> Option<&DenseTensor> {
        match role {
            TensorRole::Filters => Some(&self.filters),
            TensorRole::BnGamma => self.bn_gamma.as_ref(),
            TensorRole::BnBeta => self.bn_beta.as_ref(),
            TensorRole::Grads => self.grads.as_ref(),
            TensorRole::GapMatrix => self.gap_matrix.as_ref(),
            TensorRole::NonzeroFraction => self.nonzero_fraction.as_ref(),
        }
    }

    /// The tensor for `role`, or `MissingAuxTensor`.
    pub fn require(&self, role: TensorRole) -> Result<&DenseTensor> {
        self.tensor(role).ok_or_else(|| Error::MissingAuxTensor {
            layer: self.name.clone(),
            tensor: role.as_str().to_string(),
        })
    }

    fn slot_mut(&mut self, role: TensorRole) -> &mut Option<DenseTensor> {
        match role {
            TensorRole::Filters => panic!("filters are not optional"),
            TensorRole::BnGamma => &mut self.bn_gamma,
            TensorRole::BnBeta => &mut self.bn_beta,
            TensorRole::Grads => &mut self.grads,
            TensorRole::GapMatrix => &mut self.gap_matrix,
            TensorRole::NonzeroFraction => &mut self.nonzero_fraction,
        }
    }

    pub fn n_out(&self) -> usize {
        self.filters.shape[0]
    }

    pub fn n_in(&self) -> usize {
        self.filters.shape[1]
    }

    pub fn kernel(&self) -> usize {
        self.filters.shape[2]
    }

    /// Flattened filter dimension `N_in * k * k`.
    pub fn dim(&self) -> usize {
        self.filters.shape[1..].iter().product()
    }

    /// Filter `j` as a flat slice in row-major channel order.
    pub fn filter(&self, j: usize) -> &[f32] {
        let d = self.dim();
        &self.filters.data[j * d..(j + 1) * d]
    }

    fn tensor_name(&self, role: TensorRole) -> String {
        format!("{}.{}", self.name, role)
    }

    pub fn validate(&self) -> Result<()> {
        let fname = self.tensor_name(TensorRole::Filters);
        let shape = &self.filters.shape;
        if shape.len() != 4 || shape.iter().any(|&s| s == 0) {
            return Err(Error::ShapeMismatch {
                tensor: fname,
                detail: format!("filters must be [N_out, N_in, k, k] with positive dims, got {shape:?}"),
            });
        }
        if shape[2] != shape[3] {
            return Err(Error::ShapeMismatch {
                tensor: fname,
                detail: format!("kernel must be square, got {}x{}", shape[2], shape[3]),
            });
        }
        self.filters.check_finite(&fname)?;
        let n_out = shape[0];
        for role in &TensorRole::ALL[1..] {
            let Some(t) = self.tensor(*role) else { continue };
            let name = self.tensor_name(*role);
            let ok = match role {
                TensorRole::BnGamma | TensorRole::BnBeta | TensorRole::NonzeroFraction => {
                    t.shape == [n_out]
                }
                TensorRole::Grads => t.shape == *shape,
                TensorRole::GapMatrix => t.shape.len() == 2 && t.shape[1] == n_out,
                TensorRole::Filters => unreachable!(),
            };
            if !ok {
                return Err(Error::ShapeMismatch {
                    tensor: name,
                    detail: format!("shape {:?} inconsistent with filters {:?}", t.shape, shape),
                });
            }
            t.check_finite(&name)?;
            if *role == TensorRole::NonzeroFraction {
                if let Some(index) = t.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::ShapeMismatch {
                        tensor: name,
                        detail: format!("fraction outside [0, 1] at index {index}"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkDump {
    pub layers: Vec<LayerRecord>,
    pub meta: BTreeMap<String, String>,
}

impl NetworkDump {
    pub fn new(layers: Vec<LayerRecord>) -> Result<Self> {
        let dump = NetworkDump {
            layers,
            meta: BTreeMap::new(),
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn layer(&self, name: &str) -> Option<&LayerRecord> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::InvalidDump(format!("duplicate layer name `{}`", layer.name)));
            }
            layer.validate()?;
        }
        Ok(())
    }
}

// Field order is alphabetical so serialized keys come out sorted.
#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: BTreeMap<String, String>,
    tensors: Vec<HeaderEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    dtype: String,
    layer: String,
    name: String,
    role: String,
    shape: Vec<usize>,
}

pub fn to_bytes(dump: &NetworkDump) -> Result<Vec<u8>> {
    dump.validate()?;
    let mut entries = Vec::new();
    let mut payload_len = 0usize;
    for layer in &dump.layers {
        for role in TensorRole::ALL {
            if let Some(t) = layer.tensor(role) {
                entries.push(HeaderEntry {
                    dtype: "f32".into(),
                    layer: layer.name.clone(),
                    name: layer.tensor_name(role),
                    role: role.as_str().into(),
                    shape: t.shape.clone(),
                });
                payload_len += t.data.len() * 4;
            }
        }
    }
    let header = serde_json::to_vec(&Header {
        meta: dump.meta.clone(),
        tensors: entries,
    })
    .map_err(|e| Error::InvalidHeader(e.to_string()))?;
    let header_len = u32::try_from(header.len())
        .map_err(|_| Error::InvalidHeader("header longer than u32::MAX".into()))?;

    let mut out = Vec::with_capacity(8 + header.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for layer in &dump.layers {
        for role in TensorRole::ALL {
            if let Some(t) = layer.tensor(role) {
                for v in &t.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<NetworkDump> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(Error::InvalidHeader("missing header length".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::InvalidHeader("header length exceeds file size".into()))?;
    let header: Header = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| Error::InvalidHeader(e.to_string()))?;

    let mut offset = header_end;
    let mut layers: Vec<LayerRecord> = Vec::new();
    let mut pending: Vec<(String, BTreeMap<TensorRole, DenseTensor>)> = Vec::new();
    for entry in header.tensors {
        if entry.dtype != "f32" {
            return Err(Error::InvalidHeader(format!(
                "tensor `{}` has unsupported dtype `{}`",
                entry.name, entry.dtype
            )));
        }
        let role: TensorRole = entry.role.parse()?;
        let count = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .filter(|&c| c > 0 && entry.shape.iter().all(|&s| s > 0))
            .ok_or_else(|| Error::ShapeMismatch {
                tensor: entry.name.clone(),
                detail: format!("invalid shape {:?}", entry.shape),
            })?;
        let needed = count * 4;
        let available = bytes.len() - offset;
        if needed > available {
            return Err(Error::TruncatedPayload {
                tensor: entry.name,
                needed,
                available,
            });
        }
        let data: Vec<f32> = bytes[offset..offset + needed]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += needed;
        let tensor = DenseTensor {
            shape: entry.shape,
            data,
        };
        tensor.check_finite(&entry.name)?;

        let slot = match pending.iter_mut().position(|(n, _)| *n == entry.layer) {
            Some(i) => &mut pending[i].1,
            None => {
                pending.push((entry.layer.clone(), BTreeMap::new()));
                &mut pending.last_mut().unwrap().1
            }
        };
        if slot.insert(role, tensor).is_some() {
            return Err(Error::InvalidDump(format!(
                "layer `{}` has more than one `{}` tensor",
                entry.layer, role
            )));
        }
    }
    if offset != bytes.len() {
        return Err(Error::TrailingBytes {
            trailing: bytes.len() - offset,
        });
    }

    for (name, mut tensors) in pending {
        let filters = tensors.remove(&TensorRole::Filters).ok_or_else(|| {
            Error::InvalidDump(format!("layer `{name}` has no filters tensor"))
        })?;
        let mut layer = LayerRecord {
            name,
            filters,
            bn_gamma: None,
            bn_beta: None,
            grads: None,
            gap_matrix: None,
            nonzero_fraction: None,
        };
        for (role, t) in tensors {
            *layer.slot_mut(role) = Some(t);
        }
        layer.validate()?;
        layers.push(layer);
    }
    let dump = NetworkDump {
        layers,
        meta: header.meta,
    };
    dump.validate()?;
    Ok(dump)
}

pub fn load_dump(path: impl AsRef<Path>) -> Result<NetworkDump> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}

pub fn write_dump(dump: &NetworkDump, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_bytes(dump)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Filters as an `[N_out, N_in*k*k]` matrix; row `j` is filter `j` in
/// row-major channel order.
pub fn flatten_filters(layer: &LayerRecord) -> FilterMatrix {
    let data = layer.filters.data.iter().map(|&v| v as f64).collect();
    FilterMatrix::from_vec(layer.n_out(), layer.dim(), data)
}
