//! `LST1` tensor files: magic `LST1`, `u8` dtype (0 = f32, 1 = u8), `u8`
//! rank, `u16` reserved zero, rank × `u32` little-endian extents, then the
//! row-major little-endian payload.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::TensorData;

pub const MAGIC: &[u8; 4] = b"LST1";

/// Element types storable in an `LST1` file.
pub trait LstElement: Copy + Sized {
    const DTYPE: u8;
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl LstElement for f32 {
    const DTYPE: u8 = 0;
    const SIZE: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl LstElement for u8 {
    const DTYPE: u8 = 1;
    const SIZE: usize = 1;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn get(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

pub fn encode<T: LstElement>(tensor: &TensorData<T>) -> Vec<u8> {
    let shape = tensor.shape();
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + T::SIZE * tensor.numel());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE);
    out.push(u8::try_from(shape.len()).expect("rank fits in u8"));
    out.extend_from_slice(&0u16.to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&u32::try_from(d).expect("extent fits in u32").to_le_bytes());
    }
    for &v in tensor.data() {
        v.put(&mut out);
    }
    out
}

/// Parsed header: dtype, shape and the byte length of the header itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub dtype: u8,
    pub shape: Vec<usize>,
    pub len: usize,
}

impl Header {
    pub fn payload_bytes(&self) -> usize {
        let size = if self.dtype == f32::DTYPE { f32::SIZE } else { u8::SIZE };
        self.shape.iter().product::<usize>() * size
    }
}

pub fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing LST1 magic"));
    }
    let dtype = bytes[4];
    if dtype > 1 {
        return Err(Error::format(path, format!("unknown dtype {dtype}")));
    }
    let ndim = usize::from(bytes[5]);
    if bytes[6..8] != [0, 0] {
        return Err(Error::format(path, "reserved header bytes are not zero"));
    }
    let len = 8 + 4 * ndim;
    if bytes.len() < len {
        return Err(Error::format(path, "truncated header"));
    }
    let shape = bytes[8..len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    Ok(Header { dtype, shape, len })
}

pub fn decode<T: LstElement>(bytes: &[u8], path: &Path) -> Result<TensorData<T>> {
    let header = parse_header(bytes, path)?;
    if header.dtype != T::DTYPE {
        return Err(Error::format(path, format!("dtype {} where {} was expected", header.dtype, T::DTYPE)));
    }
    let payload = &bytes[header.len..];
    if payload.len() != header.payload_bytes() {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, shape {:?} needs {}", payload.len(), header.shape, header.payload_bytes()),
        ));
    }
    let data = payload.chunks_exact(T::SIZE).map(T::get).collect();
    TensorData::new(header.shape, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write<T: LstElement>(path: &Path, tensor: &TensorData<T>) -> Result<()> {
    write_atomic(path, &encode(tensor))
}

pub fn read<T: LstElement>(path: &Path) -> Result<TensorData<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Reads only the header and checks the file length against it.
pub fn probe(path: &Path) -> Result<Header> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = f.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
    let mut head = vec![0u8; 8 + 4 * 255];
    let mut n = 0;
    while n < head.len() {
        match f.read(&mut head[n..]).map_err(|e| Error::io(path, e))? {
            0 => break,
            k => n += k,
        }
    }
    let header = parse_header(&head[..n], path)?;
    if file_len != header.len + header.payload_bytes() {
        return Err(Error::format(
            path,
            format!("file is {file_len} bytes, header declares {}", header.len + header.payload_bytes()),
        ));
    }
    Ok(header)
}
