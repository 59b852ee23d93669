//! File formats.
//!
//! `SGV1` label volume, little-endian:
//!
//! ```text
//! 0..4    b"SGV1"
//! 4..8    reserved, zero
//! 8..20   nx, ny, nz as u32
//! 20..    nx*ny*nz label bytes (0 or 1), x fastest
//! ```
//!
//! `SGF1` uses the same header with magic `b"SGF1"` and one little-endian
//! `f32` distance per voxel. Headerless raw `u8` volumes can be imported when
//! the dimensions are known.

use std::fs;
use std::path::Path;

use crate::distance::DistanceField;
use crate::error::{Error, Result};
use crate::volume::{GridDims, VoxelGrid};

pub const VOLUME_MAGIC: &[u8; 4] = b"SGV1";
pub const FIELD_MAGIC: &[u8; 4] = b"SGF1";
pub const HEADER_LEN: usize = 20;

fn header(magic: &[u8; 4], dims: GridDims) -> Result<[u8; HEADER_LEN]> {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(magic);
    for (slot, n) in h[8..].chunks_exact_mut(4).zip(dims.as_array()) {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("{dims} does not fit 32-bit header fields")))?;
        slot.copy_from_slice(&n.to_le_bytes());
    }
    Ok(h)
}

fn parse_header(bytes: &[u8], magic: &[u8; 4]) -> Result<GridDims> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    if bytes[4..8] != [0; 4] {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let n = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (nx, ny, nz) = (n(8), n(12), n(16));
    GridDims::new(nx, ny, nz).map_err(|_| Error::Format(format!("invalid dimensions {nx}x{ny}x{nz} in header")))
}

pub fn encode_volume(grid: &VoxelGrid) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.len());
    out.extend_from_slice(&header(VOLUME_MAGIC, grid.dims())?);
    out.extend_from_slice(grid.labels());
    Ok(out)
}

pub fn decode_volume(bytes: &[u8]) -> Result<VoxelGrid> {
    let dims = parse_header(bytes, VOLUME_MAGIC)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != dims.len() {
        return Err(Error::Format(format!(
            "payload has {} bytes, {dims} needs {}{}",
            payload.len(),
            dims.len(),
            if payload.len() < dims.len() { " (truncated)" } else { "" }
        )));
    }
    VoxelGrid::from_labels(dims, payload.to_vec())
}

pub fn store_volume(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(grid)?).map_err(|e| Error::at(path, e.into()))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    fs::read(path).map_err(Error::from).and_then(|b| decode_volume(&b)).map_err(|e| Error::at(path, e))
}

/// Imports a headerless `u8` volume. Any nonzero byte counts as foreground
/// when `binarize` is set; otherwise bytes other than 0/1 are rejected.
pub fn load_raw(path: impl AsRef<Path>, dims: GridDims, binarize: bool) -> Result<VoxelGrid> {
    let path = path.as_ref();
    fs::read(path).map_err(Error::from).and_then(|b| load_raw_bytes(b, dims, binarize)).map_err(|e| Error::at(path, e))
}

fn load_raw_bytes(mut bytes: Vec<u8>, dims: GridDims, binarize: bool) -> Result<VoxelGrid> {
    if bytes.len() != dims.len() {
        return Err(Error::Format(format!("raw file has {} bytes, {dims} needs {}", bytes.len(), dims.len())));
    }
    if binarize {
        bytes.iter_mut().for_each(|b| *b = u8::from(*b != 0));
    }
    VoxelGrid::from_labels(dims, bytes)
}

pub fn encode_field(field: &DistanceField) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * field.len());
    out.extend_from_slice(&header(FIELD_MAGIC, field.dims())?);
    for &s in field.sqdist() {
        out.extend_from_slice(&((s as f64).sqrt() as f32).to_le_bytes());
    }
    Ok(out)
}

/// Reads an `SGF1` file back as real distances.
pub fn decode_field(bytes: &[u8]) -> Result<(GridDims, Vec<f32>)> {
    let dims = parse_header(bytes, FIELD_MAGIC)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * dims.len() {
        return Err(Error::Format(format!("payload has {} bytes, {dims} needs {}", payload.len(), 4 * dims.len())));
    }
    let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dims, values))
}

pub fn store_field(field: &DistanceField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_field(field)?).map_err(|e| Error::at(path, e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_payload_layout() {
        let d = GridDims::new(2, 2, 1).unwrap();
        let g = VoxelGrid::from_labels(d, vec![1, 0, 0, 1]).unwrap();
        let bytes = encode_volume(&g).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"SGV1");
        assert_eq!(&bytes[4..8], &[0, 0, 0, 0]);
        assert_eq!(&bytes[8..20], &[2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[20..], &[0x01, 0x00, 0x00, 0x01]);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let d = GridDims::new(2, 2, 1).unwrap();
        let good = encode_volume(&VoxelGrid::filled(d, true)).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_volume(&bad_magic), Err(Error::Format(m)) if m.contains("magic")));

        assert!(matches!(decode_volume(&good[..good.len() - 1]), Err(Error::Format(m)) if m.contains("truncated")));
        assert!(decode_volume(&good[..10]).is_err());

        let mut bad_label = good.clone();
        bad_label[21] = 7;
        assert!(matches!(decode_volume(&bad_label), Err(Error::InvalidLabel { index: 1, value: 7 })));

        let mut zero_dim = good.clone();
        zero_dim[12..16].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_volume(&zero_dim), Err(Error::Format(m)) if m.contains("dimensions")));
    }

    #[test]
    fn file_round_trip_and_raw_import() {
        let dir = tempfile::tempdir().unwrap();
        let d = GridDims::new(3, 2, 2).unwrap();
        let g = VoxelGrid::from_fn(d, |c| (c[0] + c[1] + c[2]) % 2 == 0);
        let p = dir.path().join("g.sgv");
        store_volume(&g, &p).unwrap();
        assert_eq!(load_volume(&p).unwrap(), g);

        let raw = dir.path().join("g.raw");
        fs::write(&raw, g.labels().iter().map(|&v| v * 255).collect::<Vec<_>>()).unwrap();
        assert_eq!(load_raw(&raw, d, true).unwrap(), g);
        assert!(load_raw(&raw, d, false).is_err());
        assert!(load_raw(&raw, GridDims::new(2, 2, 2).unwrap(), true).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_is_identity(nx in 1usize..6, ny in 1usize..6, nz in 1usize..4, bits in any::<u64>()) {
            let d = GridDims::new(nx, ny, nz).unwrap();
            let g = VoxelGrid::from_fn(d, |c| bits >> (d.index(c) % 64) & 1 == 1);
            prop_assert_eq!(decode_volume(&encode_volume(&g).unwrap()).unwrap(), g);
        }
    }
}
