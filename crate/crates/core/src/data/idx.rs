//! Reader and writer for the IDX binary array format.

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdxType {
    U8,
    I8,
    I16,
    I32,
    F32,
    F64,
}

impl IdxType {
    pub fn code(self) -> u8 {
        match self {
            IdxType::U8 => 0x08,
            IdxType::I8 => 0x09,
            IdxType::I16 => 0x0B,
            IdxType::I32 => 0x0C,
            IdxType::F32 => 0x0D,
            IdxType::F64 => 0x0E,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x08 => IdxType::U8,
            0x09 => IdxType::I8,
            0x0B => IdxType::I16,
            0x0C => IdxType::I32,
            0x0D => IdxType::F32,
            0x0E => IdxType::F64,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            IdxType::U8 | IdxType::I8 => 1,
            IdxType::I16 => 2,
            IdxType::I32 | IdxType::F32 => 4,
            IdxType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    I8(Vec<i8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl IdxData {
    pub fn element_type(&self) -> IdxType {
        match self {
            IdxData::U8(_) => IdxType::U8,
            IdxData::I8(_) => IdxType::I8,
            IdxData::I16(_) => IdxType::I16,
            IdxData::I32(_) => IdxType::I32,
            IdxData::F32(_) => IdxType::F32,
            IdxData::F64(_) => IdxType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IdxData::U8(v) => v.len(),
            IdxData::I8(v) => v.len(),
            IdxData::I16(v) => v.len(),
            IdxData::I32(v) => v.len(),
            IdxData::F32(v) => v.len(),
            IdxData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            IdxData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            IdxData::I8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            IdxData::I16(v) => v.iter().map(|&x| f64::from(x)).collect(),
            IdxData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            IdxData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            IdxData::F64(v) => v.clone(),
        }
    }
}

/// A typed n-dimensional array as stored in an IDX file.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxTensor {
    shape: Vec<usize>,
    data: IdxData,
}

impl IdxTensor {
    pub fn new(shape: Vec<usize>, data: IdxData) -> Result<Self, DataError> {
        if shape.is_empty() || shape.len() > 255 {
            return Err(DataError::InvalidSpec(format!("idx rank must be 1..=255, got {}", shape.len())));
        }
        if shape.iter().any(|&d| u32::try_from(d).is_err()) {
            return Err(DataError::InvalidSpec(format!("idx extents must fit in u32: {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(DataError::InvalidSpec(format!(
                "idx shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &IdxData {
        &self.data
    }

    pub fn element_type(&self) -> IdxType {
        self.data.element_type()
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            IdxData::U8(v) => Some(v),
            _ => None,
        }
    }
}

fn read_be<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    bytes[at..at + N].try_into().expect("length checked")
}

/// Parses an IDX file, checking header and payload length exactly.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, DataError> {
    if bytes.len() < 4 {
        return Err(DataError::TruncatedHeader {
            offset: bytes.len(),
            expected_end: 4,
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        let offset = if bytes[0] != 0 { 0 } else { 1 };
        return Err(DataError::BadMagic {
            offset,
            found: [bytes[0], bytes[1], bytes[2], bytes[3]],
        });
    }
    let elem = IdxType::from_code(bytes[2]).ok_or(DataError::UnknownElementType {
        offset: 2,
        code: bytes[2],
    })?;
    let rank = usize::from(bytes[3]);
    if rank == 0 {
        return Err(DataError::BadMagic {
            offset: 3,
            found: [bytes[0], bytes[1], bytes[2], bytes[3]],
        });
    }
    let header_end = 4 + 4 * rank;
    if bytes.len() < header_end {
        return Err(DataError::TruncatedHeader {
            offset: bytes.len(),
            expected_end: header_end,
        });
    }
    let shape: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(read_be(bytes, 4 + 4 * i)) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| DataError::InvalidSpec(format!("idx extents overflow: {shape:?}")))?;
    let expected_end = count
        .checked_mul(elem.size())
        .and_then(|p| p.checked_add(header_end))
        .ok_or_else(|| DataError::InvalidSpec(format!("idx extents overflow: {shape:?}")))?;
    if bytes.len() < expected_end {
        return Err(DataError::TruncatedPayload {
            offset: bytes.len(),
            expected_end,
        });
    }
    if bytes.len() > expected_end {
        return Err(DataError::TrailingBytes {
            offset: expected_end,
            extra: bytes.len() - expected_end,
        });
    }
    let payload = &bytes[header_end..];
    let size = elem.size();
    let data = match elem {
        IdxType::U8 => IdxData::U8(payload.to_vec()),
        IdxType::I8 => IdxData::I8(payload.iter().map(|&b| b as i8).collect()),
        IdxType::I16 => IdxData::I16((0..count).map(|i| i16::from_be_bytes(read_be(payload, i * size))).collect()),
        IdxType::I32 => IdxData::I32((0..count).map(|i| i32::from_be_bytes(read_be(payload, i * size))).collect()),
        IdxType::F32 => IdxData::F32((0..count).map(|i| f32::from_be_bytes(read_be(payload, i * size))).collect()),
        IdxType::F64 => IdxData::F64((0..count).map(|i| f64::from_be_bytes(read_be(payload, i * size))).collect()),
    };
    IdxTensor::new(shape, data)
}

pub fn serialize_idx(tensor: &IdxTensor) -> Vec<u8> {
    let elem = tensor.element_type();
    let mut out = Vec::with_capacity(4 + 4 * tensor.shape.len() + tensor.data.len() * elem.size());
    out.extend_from_slice(&[0, 0, elem.code(), tensor.shape.len() as u8]);
    for &d in &tensor.shape {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    match &tensor.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::I8(v) => out.extend(v.iter().map(|&x| x as u8)),
        IdxData::I16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
    }
    out
}
